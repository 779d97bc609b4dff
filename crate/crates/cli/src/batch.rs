//! Headless runs and trace comparison.

use std::io::Write;
use std::path::{Path, PathBuf};

use colorsort_core::trace::{compare_traces, TraceDiff, TraceFile};
use colorsort_core::{Engine, Metrics, Scenario};

use crate::exit::Failure;

pub fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    Scenario::from_toml(&text).map_err(|e| Failure::scenario(path, e))
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub scenario: PathBuf,
    pub seed: Option<u64>,
    pub duration_s: Option<f64>,
    pub out: PathBuf,
}

#[derive(Debug)]
pub struct RunReport {
    pub event_count: usize,
    pub metrics: Metrics,
}

/// Runs a scenario to completion and writes its trace. A run that ends in
/// a deadlock or robot fault still writes the events up to that point, so
/// the failure can be inspected; validation failures write nothing.
pub fn run(args: &RunArgs) -> Result<RunReport, Failure> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(d) = args.duration_s {
        scenario.duration_s = d;
    }
    scenario
        .validate()
        .map_err(|e| Failure::Invalid(format!("{}: {e}", args.scenario.display())))?;

    let mut engine = Engine::new(&scenario)?;
    let outcome = engine.step_until(scenario.duration_us());
    let metrics = engine.metrics();
    let trace = TraceFile::new(&scenario, engine.into_events(), metrics.clone());
    write_trace(&trace, &args.out)?;
    outcome?;
    Ok(RunReport {
        event_count: trace.events.len(),
        metrics,
    })
}

fn write_trace(trace: &TraceFile, path: &Path) -> Result<(), Failure> {
    if path == Path::new("-") {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        trace
            .write_to(&mut lock)
            .and_then(|_| lock.flush())
            .map_err(|e| Failure::io(path, e))
    } else {
        trace.save(path).map_err(|e| Failure::trace(path, e))
    }
}

pub fn compare(a: &Path, b: &Path, allow_seed_mismatch: bool) -> Result<TraceDiff, Failure> {
    let left = TraceFile::load(a).map_err(|e| Failure::trace(a, e))?;
    let right = TraceFile::load(b).map_err(|e| Failure::trace(b, e))?;
    compare_traces(&left, &right, allow_seed_mismatch).map_err(|e| Failure::trace(b, e))
}
