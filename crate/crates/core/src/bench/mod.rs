//! Seeded planning and execution benchmarks over a task suite.

mod report;
mod stats;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};
use rayon::prelude::*;
use thiserror::Error;

pub use report::{
    emit_report, parse_csv, render_csv, render_text, ReportError, ReportFormat, CSV_HEADER, EXECUTION_REFERENCE,
    PLANNING_REFERENCE,
};
pub use stats::{wilson_interval, within_ci99, Z_99};

use crate::bt::TaskGraph;
use crate::executor::{run_scene, RunLimits, RunOutcome};
use crate::planner::{
    classify, generate_task_graph, template_plan_with, PlannerBackend, TaskTemplate, TemplateOptions,
};
use crate::registry::BehaviorLibrary;
use crate::sim::{FaultProfile, Scene, SimConfig, WorldState};

/// Fault probabilities without a seed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FaultPoint {
    pub p_grasp_slip: f64,
    pub p_detect_miss: f64,
    pub p_vqa_error: f64,
}

impl FaultPoint {
    pub fn new(p_grasp_slip: f64, p_detect_miss: f64, p_vqa_error: f64) -> Self {
        FaultPoint {
            p_grasp_slip,
            p_detect_miss,
            p_vqa_error,
        }
    }

    pub fn profile(self, seed: u64) -> FaultProfile {
        FaultProfile {
            p_grasp_slip: self.p_grasp_slip,
            p_detect_miss: self.p_detect_miss,
            p_vqa_error: self.p_vqa_error,
            seed,
        }
    }

    pub fn label(self) -> String {
        format!(
            "slip={}/miss={}/vqa={}",
            self.p_grasp_slip, self.p_detect_miss, self.p_vqa_error
        )
    }

    pub fn parse_label(s: &str) -> Option<FaultPoint> {
        let mut p = FaultPoint::default();
        for part in s.split('/') {
            let (k, v) = part.split_once('=')?;
            let v: f64 = v.parse().ok()?;
            match k {
                "slip" => p.p_grasp_slip = v,
                "miss" => p.p_detect_miss = v,
                "vqa" => p.p_vqa_error = v,
                _ => return None,
            }
        }
        Some(p)
    }
}

impl From<&FaultProfile> for FaultPoint {
    fn from(f: &FaultProfile) -> Self {
        FaultPoint::new(f.p_grasp_slip, f.p_detect_miss, f.p_vqa_error)
    }
}

/// Slip {0.1, 0.2, 0.3} x VQA error {0, 0.05} x detection miss {0, 0.1}.
pub fn default_sweep() -> Vec<FaultPoint> {
    let mut out = Vec::new();
    for slip in [0.1, 0.2, 0.3] {
        for vqa in [0.0, 0.05] {
            for miss in [0.0, 0.1] {
                out.push(FaultPoint::new(slip, miss, vqa));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub id: String,
    pub instruction: String,
    pub scene: PathBuf,
    pub faults: FaultPoint,
    pub expects_fr: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskSuite {
    pub entries: Vec<SuiteEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SuiteError {
    #[error("suite line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("cannot read suite {path}: {message}")]
    Io { path: String, message: String },
}

impl TaskSuite {
    /// Parses `id|instruction|scene|faults|fr` lines. Scene paths are taken
    /// relative to `base`; faults are `-` or `key=value` pairs joined by commas.
    pub fn parse(text: &str, base: &Path) -> Result<TaskSuite, SuiteError> {
        let mut entries = Vec::new();
        let mut ids = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let fail = |message: String| SuiteError::Line { line, message };
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('|').map(str::trim).collect();
            let [id, instruction, scene, faults, fr] = fields.as_slice() else {
                return Err(fail("expected id|instruction|scene|faults|fr".into()));
            };
            if id.is_empty() || id.contains(char::is_whitespace) || id.contains('@') {
                return Err(fail(format!("bad task id {id:?}")));
            }
            if !ids.insert(id.to_string()) {
                return Err(fail(format!("duplicate task id {id}")));
            }
            if instruction.is_empty() {
                return Err(fail("empty instruction".into()));
            }
            let mut profile = FaultProfile::none(0);
            if *faults != "-" {
                for pair in faults.split(',') {
                    let (k, v) = pair
                        .split_once('=')
                        .ok_or_else(|| fail(format!("bad fault entry {pair:?}")))?;
                    let v: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| fail(format!("bad fault value {pair:?}")))?;
                    profile.set(k.trim(), v).map_err(fail)?;
                }
            }
            let expects_fr = fr
                .parse::<bool>()
                .map_err(|_| fail(format!("fr must be true or false, got {fr:?}")))?;
            entries.push(SuiteEntry {
                id: id.to_string(),
                instruction: instruction.to_string(),
                scene: base.join(scene),
                faults: FaultPoint::from(&profile),
                expects_fr,
            });
        }
        Ok(TaskSuite { entries })
    }

    pub fn load(path: &Path) -> Result<TaskSuite, SuiteError> {
        let text = fs::read_to_string(path).map_err(|e| SuiteError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        TaskSuite::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

fn load_scene(path: &Path) -> Result<Scene, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Scene::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchKind {
    Planning,
    Execution,
}

impl BenchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchKind::Planning => "planning",
            BenchKind::Execution => "execution",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "planning" => Some(BenchKind::Planning),
            "execution" => Some(BenchKind::Execution),
            _ => None,
        }
    }
}

/// Outcome of one seeded trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub task: String,
    pub trial: usize,
    pub executable: bool,
    pub plan_time: Duration,
    /// Present only when executable.
    pub execution: Option<ExecutionSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutionSummary {
    pub success: bool,
    pub ticks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub task: String,
    pub faults: Option<FaultPoint>,
    pub trials: usize,
    pub executable: usize,
    pub success: usize,
    /// Mean planning seconds per trial.
    pub plan_time: f64,
    /// Mean root ticks over executed trials.
    pub exec_ticks: f64,
}

impl SummaryRow {
    pub fn label(&self) -> String {
        match self.faults {
            Some(f) => format!("{}@{}", self.task, f.label()),
            None => self.task.clone(),
        }
    }

    pub fn executable_rate(&self) -> f64 {
        rate(self.executable, self.trials)
    }

    pub fn success_rate(&self) -> f64 {
        rate(self.success, self.trials)
    }

    pub fn executable_ci(&self) -> (f64, f64) {
        wilson_interval(self.executable, self.trials, Z_99)
    }

    pub fn success_ci(&self) -> (f64, f64) {
        wilson_interval(self.success, self.trials, Z_99)
    }

    fn from_trials(task: &str, faults: Option<FaultPoint>, trials: &[TrialRecord]) -> SummaryRow {
        let executed: Vec<&ExecutionSummary> = trials.iter().filter_map(|t| t.execution.as_ref()).collect();
        let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
        SummaryRow {
            task: task.to_string(),
            faults,
            trials: trials.len(),
            executable: trials.iter().filter(|t| t.executable).count(),
            success: executed.iter().filter(|e| e.success).count(),
            plan_time: mean(trials.iter().map(|t| t.plan_time.as_secs_f64()).sum(), trials.len()),
            exec_ticks: mean(executed.iter().map(|e| e.ticks as f64).sum(), executed.len()),
        }
    }
}

fn rate(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub kind: BenchKind,
    pub backend: String,
    pub trials: usize,
    pub seed_base: u64,
    pub rows: Vec<SummaryRow>,
    pub diagnostics: Vec<String>,
}

impl SummaryTable {
    pub fn row(&self, task: &str, faults: Option<FaultPoint>) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.task == task && r.faults == faults)
    }
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_text(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub trials: usize,
    /// Trial `i` uses seed `seed_base + i`, shared across tasks and fault points.
    pub seed_base: u64,
    pub max_repair_rounds: usize,
    pub config: SimConfig,
    pub limits: RunLimits,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            trials: 50,
            seed_base: 1,
            max_repair_rounds: crate::planner::DEFAULT_MAX_REPAIR_ROUNDS,
            config: SimConfig::default(),
            limits: RunLimits::default(),
        }
    }
}

/// Executes a graph on a fresh world and judges the task goal on ground
/// truth. Success means the root reached Done and, when the instruction
/// names a known task shape, the world satisfies it.
pub fn execute_trial(
    graph: &TaskGraph,
    library: &BehaviorLibrary<WorldState>,
    scene: &Scene,
    instruction: &str,
    faults: FaultProfile,
    options: &BenchOptions,
) -> Result<ExecutionSummary, String> {
    let rec = run_scene(graph, library, scene, &options.config, faults, options.limits).map_err(|e| e.to_string())?;
    let done = rec.result.outcome == RunOutcome::Done;
    let success = done
        && match classify(instruction) {
            Ok((template, target)) => {
                let final_world = WorldState::restore(&rec.result.final_world).map_err(|e| e.to_string())?;
                template.goal_satisfied(&target, &rec.initial_world, &final_world)
            }
            Err(_) => true,
        };
    Ok(ExecutionSummary {
        success,
        ticks: rec.result.ticks_used,
    })
}

fn check_fr_flag(entry: &SuiteEntry, diagnostics: &mut Vec<String>) {
    if let Ok((template, _)) = classify(&entry.instruction) {
        if template.has_recovery() != entry.expects_fr {
            diagnostics.push(format!(
                "{}: suite marks fr={} but the instruction reads as {}",
                entry.id, entry.expects_fr, template
            ));
        }
    }
}

fn map_trials<T: Send>(n: usize, sequential: bool, f: impl Fn(usize) -> T + Send + Sync) -> Vec<T> {
    if sequential {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

/// Plans every task `n` times and executes each plan on a fault-free copy
/// of its scene.
pub fn run_planning_benchmark(
    suite: &TaskSuite,
    library: &BehaviorLibrary<WorldState>,
    backend: &dyn PlannerBackend,
    options: &BenchOptions,
) -> SummaryTable {
    let mut diagnostics = Vec::new();
    let mut rows = Vec::new();
    for entry in &suite.entries {
        check_fr_flag(entry, &mut diagnostics);
        let scene = match load_scene(&entry.scene) {
            Ok(s) => s,
            Err(e) => {
                warn!("skipping {}: {e}", entry.id);
                diagnostics.push(format!("{}: skipped, scene failed to load: {e}", entry.id));
                continue;
            }
        };
        let trials = map_trials(options.trials, backend.is_sequential(), |i| {
            let seed = options.seed_base + i as u64;
            let mut record = TrialRecord {
                task: entry.id.clone(),
                trial: i,
                executable: false,
                plan_time: Duration::ZERO,
                execution: None,
                error: None,
            };
            match generate_task_graph(&entry.instruction, library, backend, options.max_repair_rounds) {
                Err(e) => record.error = Some(e.to_string()),
                Ok(outcome) => {
                    record.plan_time = outcome.total_latency();
                    if let Some(graph) = &outcome.graph {
                        record.executable = true;
                        match execute_trial(
                            graph,
                            library,
                            &scene,
                            &entry.instruction,
                            FaultProfile::none(seed),
                            options,
                        ) {
                            Ok(summary) => record.execution = Some(summary),
                            Err(e) => record.error = Some(e),
                        }
                    }
                }
            }
            record
        });
        let errors: Vec<&str> = trials.iter().filter_map(|t| t.error.as_deref()).collect();
        if let Some(first) = errors.first() {
            diagnostics.push(format!(
                "{}: {} trials hit errors (first: {first})",
                entry.id,
                errors.len()
            ));
        }
        rows.push(SummaryRow::from_trials(&entry.id, None, &trials));
        info!("planning {}: done", entry.id);
    }
    SummaryTable {
        kind: BenchKind::Planning,
        backend: backend.kind().to_string(),
        trials: options.trials,
        seed_base: options.seed_base,
        rows,
        diagnostics,
    }
}

/// Where execution-benchmark plans come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PlannerChoice {
    Template(TemplateOptions),
    /// Pre-computed graphs keyed by task id.
    Cached(BTreeMap<String, TaskGraph>),
}

impl Default for PlannerChoice {
    fn default() -> Self {
        PlannerChoice::Template(TemplateOptions::default())
    }
}

impl PlannerChoice {
    fn kind(&self) -> &'static str {
        match self {
            PlannerChoice::Template(_) => "template",
            PlannerChoice::Cached(_) => "cached",
        }
    }
}

/// Runs every task `n` times at each fault point. An empty sweep uses each
/// entry's own fault profile.
pub fn run_execution_benchmark(
    suite: &TaskSuite,
    library: &BehaviorLibrary<WorldState>,
    planner: &PlannerChoice,
    sweep: &[FaultPoint],
    options: &BenchOptions,
) -> SummaryTable {
    let mut diagnostics = Vec::new();
    let mut rows = Vec::new();
    for entry in &suite.entries {
        check_fr_flag(entry, &mut diagnostics);
        let scene = match load_scene(&entry.scene) {
            Ok(s) => s,
            Err(e) => {
                warn!("skipping {}: {e}", entry.id);
                diagnostics.push(format!("{}: skipped, scene failed to load: {e}", entry.id));
                continue;
            }
        };
        let graph = match planner {
            PlannerChoice::Template(opts) => {
                template_plan_with(&entry.instruction, library, opts).map_err(|e| e.to_string())
            }
            PlannerChoice::Cached(graphs) => graphs
                .get(&entry.id)
                .cloned()
                .ok_or_else(|| "no cached plan".to_string()),
        };
        let graph = match graph {
            Ok(g) => g,
            Err(e) => {
                diagnostics.push(format!("{}: skipped, no plan: {e}", entry.id));
                continue;
            }
        };
        let points: Vec<FaultPoint> = if sweep.is_empty() {
            vec![entry.faults]
        } else {
            sweep.to_vec()
        };
        for point in points {
            let trials = map_trials(options.trials, false, |i| {
                let faults = point.profile(options.seed_base + i as u64);
                let result = execute_trial(&graph, library, &scene, &entry.instruction, faults, options);
                TrialRecord {
                    task: entry.id.clone(),
                    trial: i,
                    executable: true,
                    plan_time: Duration::ZERO,
                    execution: result.as_ref().ok().copied(),
                    error: result.err(),
                }
            });
            if let Some(first) = trials.iter().find_map(|t| t.error.as_deref()) {
                diagnostics.push(format!("{}@{}: execution error: {first}", entry.id, point.label()));
            }
            rows.push(SummaryRow::from_trials(&entry.id, Some(point), &trials));
        }
        info!("execution {}: done", entry.id);
    }
    SummaryTable {
        kind: BenchKind::Execution,
        backend: planner.kind().to_string(),
        trials: options.trials,
        seed_base: options.seed_base,
        rows,
        diagnostics,
    }
}

/// The template a suite id or instruction refers to, if any.
pub fn template_of(entry: &SuiteEntry) -> Option<TaskTemplate> {
    classify(&entry.instruction).ok().map(|(t, _)| t)
}
