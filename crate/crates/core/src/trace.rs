//! Line-delimited JSON trace files and golden-trace comparison.
//!
//! ```text
//! {"record":"header","schema_version":1,"scenario_hash":"…","seed":7,"tool_version":"0.1.0"}
//! {"record":"event","seq":0,"t_us":0,"source":"bus","kind":"tag_change",…}
//! …
//! {"record":"footer","event_count":412,"trace_hash":"…","metrics":{…}}
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HeaderDiff, TraceError};
use crate::sim::{Metrics, Scenario, SimEvent};

pub const TRACE_SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub scenario_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl TraceHeader {
    pub fn for_scenario(scenario: &Scenario) -> Self {
        TraceHeader {
            schema_version: TRACE_SCHEMA_VERSION,
            scenario_hash: scenario.hash(),
            seed: scenario.seed,
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFooter {
    pub event_count: usize,
    /// Hex SHA-256 over the event lines, each terminated by `\n`.
    pub trace_hash: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(TraceHeader),
    Event(SimEvent),
    Footer(TraceFooter),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub events: Vec<SimEvent>,
    pub footer: TraceFooter,
}

fn event_line(e: &SimEvent) -> String {
    serde_json::to_string(&Record::Event(e.clone())).expect("event serializes")
}

/// Hash of the event stream as it appears in a trace file.
pub fn trace_hash(events: &[SimEvent]) -> String {
    let mut h = Sha256::new();
    for e in events {
        h.update(event_line(e).as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

impl TraceFile {
    pub fn new(scenario: &Scenario, events: Vec<SimEvent>, metrics: Metrics) -> Self {
        let footer = TraceFooter {
            event_count: events.len(),
            trace_hash: trace_hash(&events),
            metrics,
        };
        TraceFile {
            header: TraceHeader::for_scenario(scenario),
            events,
            footer,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = Record::Header(self.header.clone());
        writeln!(
            w,
            "{}",
            serde_json::to_string(&header).expect("header serializes")
        )?;
        for e in &self.events {
            writeln!(w, "{}", event_line(e))?;
        }
        let footer = Record::Footer(self.footer.clone());
        writeln!(
            w,
            "{}",
            serde_json::to_string(&footer).expect("footer serializes")
        )?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses a trace and checks the footer against the events.
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let err = |line: usize, message: String| TraceError::Parse { line, message };
        let mut header = None;
        let mut footer = None;
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            if footer.is_some() {
                return Err(err(n, "record after footer".into()));
            }
            let rec: Record = serde_json::from_str(raw).map_err(|e| err(n, e.to_string()))?;
            match rec {
                Record::Header(h) if header.is_none() && n == 1 => header = Some(h),
                Record::Header(_) => return Err(err(n, "header must be the first line".into())),
                Record::Event(_) | Record::Footer(_) if header.is_none() => {
                    return Err(err(n, "missing header".into()))
                }
                Record::Event(e) => {
                    if let Some(last) = events.last() {
                        let last: &SimEvent = last;
                        if (e.t_us, e.seq) <= (last.t_us, last.seq) {
                            return Err(err(n, format!("event #{} is out of order", e.seq)));
                        }
                    }
                    events.push(e)
                }
                Record::Footer(f) => footer = Some((n, f)),
            }
        }
        let header = header.ok_or_else(|| err(1, "empty trace".into()))?;
        if header.schema_version != TRACE_SCHEMA_VERSION {
            return Err(err(
                1,
                format!("unsupported trace schema_version {}", header.schema_version),
            ));
        }
        let (n, footer) =
            footer.ok_or_else(|| err(text.lines().count(), "missing footer".into()))?;
        if footer.event_count != events.len() {
            return Err(err(
                n,
                format!(
                    "footer counts {} events, file has {}",
                    footer.event_count,
                    events.len()
                ),
            ));
        }
        if footer.trace_hash != trace_hash(&events) {
            return Err(err(n, "trace_hash does not match the events".into()));
        }
        Ok(TraceFile {
            header,
            events,
            footer,
        })
    }
}

/// First point where two traces disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub index: usize,
    pub left: Option<SimEvent>,
    pub right: Option<SimEvent>,
}

impl Divergence {
    /// `(t_us, seq)` of the earlier of the two records.
    pub fn at(&self) -> (u64, u64) {
        [&self.left, &self.right]
            .into_iter()
            .flatten()
            .map(|e| (e.t_us, e.seq))
            .min()
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceDiff {
    pub divergence: Option<Divergence>,
}

impl TraceDiff {
    pub fn is_empty(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Compares two traces event by event. Traces of different scenarios are
/// refused; traces of different seeds are refused unless
/// `allow_seed_mismatch` is set, in which case the report names the first
/// divergent record.
pub fn compare_traces(
    a: &TraceFile,
    b: &TraceFile,
    allow_seed_mismatch: bool,
) -> Result<TraceDiff, TraceError> {
    let mismatch = |field, l: String, r: String| {
        TraceError::HeaderMismatch(HeaderDiff {
            field,
            left: l,
            right: r,
        })
    };
    if a.header.scenario_hash != b.header.scenario_hash {
        return Err(mismatch(
            "scenario_hash",
            a.header.scenario_hash.clone(),
            b.header.scenario_hash.clone(),
        ));
    }
    if a.header.seed != b.header.seed && !allow_seed_mismatch {
        return Err(mismatch(
            "seed",
            a.header.seed.to_string(),
            b.header.seed.to_string(),
        ));
    }
    let n = a.events.len().max(b.events.len());
    let divergence = (0..n)
        .find(|&i| a.events.get(i) != b.events.get(i))
        .map(|index| Divergence {
            index,
            left: a.events.get(index).cloned(),
            right: b.events.get(index).cloned(),
        });
    Ok(TraceDiff { divergence })
}
