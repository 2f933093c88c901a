//! Text and CSV renderings of a [`SummaryTable`].

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{BenchKind, FaultPoint, SummaryRow, SummaryTable};

pub const CSV_HEADER: [&str; 5] = ["task", "executable", "success", "plan_time", "exec_ticks"];

/// Planning reference rows: executable %, success %, plan seconds.
pub const PLANNING_REFERENCE: [(&str, u32, u32, f64); 8] = [
    ("find", 100, 94, 14.93),
    ("approach", 98, 90, 16.15),
    ("grasp", 96, 92, 16.27),
    ("pick", 96, 84, 17.11),
    ("pick_fr", 90, 82, 17.91),
    ("pick_place", 92, 84, 18.23),
    ("pick_place_fr", 84, 80, 19.07),
    ("find_pick_fr", 86, 82, 17.86),
];

/// Simulated execution reference rows: success %, execution seconds.
pub const EXECUTION_REFERENCE: [(&str, u32, f64); 6] = [
    ("grasp", 92, 85.7),
    ("pick", 84, 104.9),
    ("pick_fr", 88, 116.2),
    ("pick_place", 76, 132.7),
    ("pick_place_fr", 84, 189.2),
    ("find_pick_fr", 80, 174.5),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

impl ReportFormat {
    /// CSV for `.csv` paths, text otherwise.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Text,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("summary has no rows")]
    Empty,
    #[error("cannot write report: {0}")]
    Io(#[from] io::Error),
    #[error("CSV: {0}")]
    Csv(String),
}

impl From<csv::Error> for ReportError {
    fn from(e: csv::Error) -> Self {
        ReportError::Csv(e.to_string())
    }
}

fn pct(rate: f64) -> String {
    format!("{:.1}%", rate * 100.0)
}

/// The row for the same fault point of the paired task (`x` and `x_fr`).
fn paired<'a>(table: &'a SummaryTable, row: &SummaryRow) -> Option<&'a SummaryRow> {
    let base = row.task.strip_suffix("_fr")?;
    table.rows.iter().find(|r| r.task == base && r.faults == row.faults)
}

pub fn render_text(table: &SummaryTable) -> String {
    let planning = table.kind == BenchKind::Planning;
    let mut header: Vec<&str> = vec!["task", "n", "executable", "oracle-success", "99% CI"];
    if planning {
        header.extend(["plan s", "exec ticks", "ref exec", "ref success", "ref s"]);
    } else {
        header.extend(["exec ticks", "FR uplift", "ref success", "ref s"]);
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for row in &table.rows {
        let (lo, hi) = row.success_ci();
        let mut cells = vec![
            row.label(),
            row.trials.to_string(),
            pct(row.executable_rate()),
            pct(row.success_rate()),
            format!("[{:.1}, {:.1}]", lo * 100.0, hi * 100.0),
        ];
        if planning {
            cells.push(format!("{:.3}", row.plan_time));
            cells.push(format!("{:.1}", row.exec_ticks));
            match PLANNING_REFERENCE.iter().find(|r| r.0 == row.task) {
                Some((_, e, s, t)) => cells.extend([format!("{e}%"), format!("{s}%"), format!("{t:.2}")]),
                None => cells.extend(["-".into(), "-".into(), "-".into()]),
            }
        } else {
            cells.push(format!("{:.1}", row.exec_ticks));
            cells.push(match paired(table, row) {
                Some(base) => format!("{:+.1} pt", (row.success_rate() - base.success_rate()) * 100.0),
                None => "-".into(),
            });
            match EXECUTION_REFERENCE.iter().find(|r| r.0 == row.task) {
                Some((_, s, t)) => cells.extend([format!("{s}%"), format!("{t:.1}")]),
                None => cells.extend(["-".into(), "-".into()]),
            }
        }
        rows.push(cells);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "  {cell:>w$}");
            }
        }
        s.trim_end().to_string()
    };
    let mut out = format!(
        "{} benchmark: backend={} n={} seed_base={}\n",
        table.kind.as_str(),
        table.backend,
        table.trials,
        table.seed_base
    );
    out.push_str(&line(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>()));
    out.push('\n');
    out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out.push_str("ref columns: published LLM planner results (seconds); measured time here is in ticks.\n");
    for d in &table.diagnostics {
        let _ = writeln!(out, "note: {d}");
    }
    out
}

pub fn render_csv(table: &SummaryTable) -> Result<String, ReportError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(CSV_HEADER)?;
    for row in &table.rows {
        writer.write_record([
            row.label(),
            row.executable_rate().to_string(),
            row.success_rate().to_string(),
            row.plan_time.to_string(),
            row.exec_ticks.to_string(),
        ])?;
    }
    let mut out = String::from_utf8(writer.into_inner().map_err(|e| ReportError::Csv(e.to_string()))?)
        .map_err(|e| ReportError::Csv(e.to_string()))?;
    let _ = writeln!(
        out,
        "# kind={} backend={} n={} seed_base={}",
        table.kind.as_str(),
        table.backend,
        table.trials,
        table.seed_base
    );
    for d in &table.diagnostics {
        let _ = writeln!(out, "# note: {}", d.replace(['\n', '\r'], " "));
    }
    Ok(out)
}

/// Reads a CSV produced by [`render_csv`] back into a table.
pub fn parse_csv(text: &str) -> Result<SummaryTable, ReportError> {
    let mut table = SummaryTable {
        kind: BenchKind::Planning,
        backend: String::new(),
        trials: 0,
        seed_base: 0,
        rows: Vec::new(),
        diagnostics: Vec::new(),
    };
    let mut have_meta = false;
    for line in text.lines().filter_map(|l| l.strip_prefix("# ")) {
        if let Some(note) = line.strip_prefix("note: ") {
            table.diagnostics.push(note.to_string());
            continue;
        }
        for token in line.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| ReportError::Csv(format!("bad metadata {token:?}")))?;
            let bad = || ReportError::Csv(format!("bad metadata value {token:?}"));
            match k {
                "kind" => table.kind = BenchKind::parse(v).ok_or_else(bad)?,
                "backend" => table.backend = v.to_string(),
                "n" => table.trials = v.parse().map_err(|_| bad())?,
                "seed_base" => table.seed_base = v.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        have_meta = true;
    }
    if !have_meta {
        return Err(ReportError::Csv("missing metadata line".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    if reader.headers()?.iter().ne(CSV_HEADER) {
        return Err(ReportError::Csv("unexpected header".into()));
    }
    let n = table.trials;
    for record in reader.records() {
        let record = record?;
        let num = |i: usize| -> Result<f64, ReportError> {
            record[i]
                .parse()
                .map_err(|_| ReportError::Csv(format!("bad number {:?}", &record[i])))
        };
        let (task, faults) = match record[0].split_once('@') {
            Some((t, f)) => (
                t.to_string(),
                Some(FaultPoint::parse_label(f).ok_or_else(|| ReportError::Csv(format!("bad fault label {f:?}")))?),
            ),
            None => (record[0].to_string(), None),
        };
        table.rows.push(SummaryRow {
            task,
            faults,
            trials: n,
            executable: (num(1)? * n as f64).round() as usize,
            success: (num(2)? * n as f64).round() as usize,
            plan_time: num(3)?,
            exec_ticks: num(4)?,
        });
    }
    Ok(table)
}

/// Writes the report; CSV for `.csv` paths, the aligned table otherwise.
pub fn emit_report(table: &SummaryTable, format: ReportFormat, path: &Path) -> Result<(), ReportError> {
    if table.rows.is_empty() {
        return Err(ReportError::Empty);
    }
    let body = match format {
        ReportFormat::Text => render_text(table),
        ReportFormat::Csv => render_csv(table)?,
    };
    fs::write(path, body)?;
    Ok(())
}
