//! Line-oriented trace files. Event fields are tab-separated (shown as
//! spaces below).
//!
//! ```text
//! # taskgraph trace v1 scene=<sha256> seed=7 graph=<sha256> p_grasp_slip=0.2 p_detect_miss=0 p_vqa_error=0
//! tick  node  leaf  behavior  params  status  world_step  detail
//! 0  1  action  Approach  target=mug  running  1  moving d=1.400
//! # end outcome=Done ticks=17 state=<sha256>
//! ```

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{RunOutcome, TraceEvent};
use crate::bt::{NodeId, Params, TickStatus};
use crate::registry::LeafKind;
use crate::sim::FaultProfile;

pub const TRACE_VERSION: u32 = 1;
const MAGIC: &str = "# taskgraph trace";
const COLUMNS: &str = "tick\tnode\tleaf\tbehavior\tparams\tstatus\tworld_step\tdetail";
const FOOTER: &str = "# end";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> TraceError {
    TraceError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub version: u32,
    /// Scene hash, or `-` when the world did not come from a scene file.
    pub scene_hash: String,
    pub graph_hash: String,
    /// Fault probabilities and seed.
    pub faults: FaultProfile,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFooter {
    pub outcome: RunOutcome,
    pub ticks_used: u64,
    pub state_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
    pub footer: Option<TraceFooter>,
}

fn escape(s: &str, extra: bool) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            ';' if extra => out.push_str("\\s"),
            '=' if extra => out.push_str("\\e"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            's' => ';',
            'e' => '=',
            _ => return None,
        });
    }
    Some(out)
}

fn encode_params(params: &Params) -> String {
    if params.is_empty() {
        return "-".into();
    }
    params
        .iter()
        .map(|(k, v)| format!("{}={}", escape(k, true), escape(v, true)))
        .collect::<Vec<_>>()
        .join(";")
}

fn decode_params(s: &str) -> Option<Params> {
    if s == "-" {
        return Some(Params::new());
    }
    s.split(';')
        .map(|pair| {
            let (k, v) = pair.split_once('=')?;
            Some((unescape(k)?, unescape(v)?))
        })
        .collect()
}

impl TraceEvent {
    /// One tab-separated record in canonical column order.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.tick_index,
            self.node.0,
            self.leaf.as_str(),
            escape(&self.behavior, false),
            encode_params(&self.params),
            self.status,
            self.world_step,
            escape(&self.detail, false)
        )
    }

    pub fn parse_line(line: &str) -> Result<TraceEvent, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        let [tick, node, leaf, behavior, params, status, step, detail] = fields.as_slice() else {
            return Err(format!("expected 8 tab-separated fields, got {}", fields.len()));
        };
        let bad = |what: &str| format!("bad {what} field");
        Ok(TraceEvent {
            tick_index: tick.parse().map_err(|_| bad("tick"))?,
            node: NodeId(node.parse().map_err(|_| bad("node"))?),
            leaf: match *leaf {
                "action" => LeafKind::Action,
                "condition" => LeafKind::Condition,
                _ => return Err(bad("leaf")),
            },
            behavior: unescape(behavior).ok_or_else(|| bad("behavior"))?,
            params: decode_params(params).ok_or_else(|| bad("params"))?,
            status: TickStatus::parse(status).ok_or_else(|| bad("status"))?,
            world_step: step.parse().map_err(|_| bad("world_step"))?,
            detail: unescape(detail).ok_or_else(|| bad("detail"))?,
        })
    }
}

impl fmt::Display for TraceHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.faults;
        write!(
            f,
            "{MAGIC} v{} scene={} seed={} graph={} p_grasp_slip={} p_detect_miss={} p_vqa_error={}",
            self.version, self.scene_hash, p.seed, self.graph_hash, p.p_grasp_slip, p.p_detect_miss, p.p_vqa_error
        )
    }
}

impl FromStr for TraceHeader {
    type Err = TraceError;

    fn from_str(line: &str) -> Result<Self, TraceError> {
        let rest = line
            .strip_prefix(MAGIC)
            .ok_or_else(|| err(1, "not a taskgraph trace"))?
            .trim();
        let mut tokens = rest.split_whitespace();
        let version = tokens
            .next()
            .and_then(|v| v.strip_prefix('v'))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(1, "missing trace version"))?;
        if version != TRACE_VERSION {
            return Err(err(1, format!("unsupported trace version {version}")));
        }
        let mut scene = None;
        let mut graph = None;
        let mut seed = None;
        let mut faults = FaultProfile::none(0);
        for t in tokens {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| err(1, format!("bad header field {t:?}")))?;
            match k {
                "scene" => scene = Some(v.to_string()),
                "graph" => graph = Some(v.to_string()),
                "seed" => seed = Some(v.parse().map_err(|_| err(1, "bad seed"))?),
                _ => {
                    let value: f64 = v.parse().map_err(|_| err(1, format!("bad value for {k}")))?;
                    faults.set(k, value).map_err(|m| err(1, m))?;
                }
            }
        }
        faults.seed = seed.ok_or_else(|| err(1, "missing seed"))?;
        faults.check().map_err(|e| err(1, e.to_string()))?;
        Ok(TraceHeader {
            version,
            scene_hash: scene.ok_or_else(|| err(1, "missing scene"))?,
            graph_hash: graph.ok_or_else(|| err(1, "missing graph"))?,
            faults,
        })
    }
}

impl fmt::Display for TraceFooter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{FOOTER} outcome={} ticks={} state={}",
            self.outcome, self.ticks_used, self.state_hash
        )
    }
}

fn parse_footer(n: usize, line: &str) -> Result<TraceFooter, TraceError> {
    let mut outcome = None;
    let mut ticks = None;
    let mut state = None;
    for t in line[FOOTER.len()..].split_whitespace() {
        match t.split_once('=') {
            Some(("outcome", v)) => outcome = Some(v.parse().map_err(|e: String| err(n, e))?),
            Some(("ticks", v)) => ticks = Some(v.parse().map_err(|_| err(n, "bad ticks"))?),
            Some(("state", v)) => state = Some(v.to_string()),
            _ => return Err(err(n, format!("bad footer field {t:?}"))),
        }
    }
    match (outcome, ticks, state) {
        (Some(outcome), Some(ticks_used), Some(state_hash)) => Ok(TraceFooter {
            outcome,
            ticks_used,
            state_hash,
        }),
        _ => Err(err(n, "incomplete footer")),
    }
}

impl Trace {
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n{COLUMNS}\n", self.header);
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        if let Some(footer) = &self.footer {
            out.push_str(&format!("{footer}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let header: TraceHeader = lines.next().ok_or_else(|| err(1, "empty trace"))?.1.parse()?;
        match lines.next() {
            Some((_, COLUMNS)) => {}
            _ => return Err(err(2, "missing column header")),
        }
        let mut events = Vec::new();
        let mut footer = None;
        for (n, line) in lines {
            if footer.is_some() {
                return Err(err(n, "content after footer"));
            }
            if line.starts_with(FOOTER) {
                footer = Some(parse_footer(n, line)?);
            } else if !line.is_empty() {
                events.push(TraceEvent::parse_line(line).map_err(|m| err(n, m))?);
            }
        }
        Ok(Trace { header, events, footer })
    }
}
