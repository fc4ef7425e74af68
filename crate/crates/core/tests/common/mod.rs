//! Shared fixtures and independent auditors for the integration suites.
//!
//! The auditors recompute every expectation from first principles — queueing
//! recursions, interval sweep lines, exhaustive path enumeration — so they
//! can catch the simulator lying in its own terms.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;

use microbatch_sim::config::{RunPlan, SimConfig};
use microbatch_sim::runner::{simulate, RunOutput};

pub const BATCHES_HEADER: &str = "batch_id,size_bytes,created_ms,dequeued_ms,\
first_stage_start_ms,finished_ms,scheduling_delay_ms,processing_time_ms,empty";
pub const STAGES_HEADER: &str = "batch_id,stage_id,worker_id,start_ms,end_ms";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchRow {
    pub batch_id: u64,
    pub size_bytes: u64,
    pub created_ms: u64,
    pub dequeued_ms: u64,
    pub first_stage_start_ms: u64,
    pub finished_ms: u64,
    pub scheduling_delay_ms: u64,
    pub processing_time_ms: u64,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRow {
    pub batch_id: u64,
    pub stage_id: String,
    pub worker_id: usize,
    pub start_ms: u64,
    pub end_ms: u64,
}

pub fn parse_batches_csv(text: &str) -> Vec<BatchRow> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(BATCHES_HEADER), "batches.csv header");
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 9, "bad batches.csv row: {line}");
            BatchRow {
                batch_id: f[0].parse().unwrap(),
                size_bytes: f[1].parse().unwrap(),
                created_ms: f[2].parse().unwrap(),
                dequeued_ms: f[3].parse().unwrap(),
                first_stage_start_ms: f[4].parse().unwrap(),
                finished_ms: f[5].parse().unwrap(),
                scheduling_delay_ms: f[6].parse().unwrap(),
                processing_time_ms: f[7].parse().unwrap(),
                empty: match f[8] {
                    "true" => true,
                    "false" => false,
                    other => panic!("bad empty flag: {other}"),
                },
            }
        })
        .collect()
}

pub fn parse_stages_csv(text: &str) -> Vec<StageRow> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(STAGES_HEADER), "stages.csv header");
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 5, "bad stages.csv row: {line}");
            StageRow {
                batch_id: f[0].parse().unwrap(),
                stage_id: f[1].to_string(),
                worker_id: f[2].parse().unwrap(),
                start_ms: f[3].parse().unwrap(),
                end_ms: f[4].parse().unwrap(),
            }
        })
        .collect()
}

/// Build a run plan straight from config JSON (trace paths relative to cwd).
pub fn plan_from_json(json: &str) -> RunPlan {
    SimConfig::from_json(json)
        .expect("config parses")
        .build(Path::new("."))
        .expect("config builds")
}

pub struct RunResult {
    pub output: RunOutput,
    pub batches: Vec<BatchRow>,
    pub stages: Vec<StageRow>,
}

/// Run a config JSON to its horizon and parse the emitted tables.
pub fn run_json(json: &str) -> RunResult {
    let plan = plan_from_json(json);
    let output = simulate(&plan);
    let batches = parse_batches_csv(&output.batches_csv);
    let stages = parse_stages_csv(&output.stages_csv);
    RunResult {
        output,
        batches,
        stages,
    }
}

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

/// Single-slot queueing recursion: with batches created exactly `interval`
/// apart and jobs served one at a time in batch order, the first delay is 0
/// and delay(n+1) = max(0, delay(n) + service(n) − interval).
///
/// `rows` must be the completed prefix in id order starting at batch 1;
/// returns the delay sequence the emitted service times imply.
pub fn lindley_replay(rows: &[BatchRow], interval: u64) -> Vec<u64> {
    let mut expected = Vec::with_capacity(rows.len());
    let mut delay: u64 = 0;
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(
            row.batch_id,
            i as u64 + 1,
            "replay needs the completed prefix in id order"
        );
        expected.push(delay);
        delay = (delay + row.processing_time_ms).saturating_sub(interval);
    }
    expected
}

/// Peak count of simultaneously open half-open intervals [start, end).
pub fn max_overlap(intervals: impl IntoIterator<Item = (u64, u64)>) -> usize {
    let mut edges: Vec<(u64, i32)> = Vec::new();
    for (start, end) in intervals {
        assert!(start <= end, "interval runs backwards");
        if start < end {
            edges.push((start, 1));
            edges.push((end, -1));
        }
    }
    // Closing edges sort before opening ones at the same instant, matching
    // half-open semantics.
    edges.sort_unstable();
    let mut open = 0i32;
    let mut peak = 0i32;
    for (_, delta) in edges {
        open += delta;
        peak = peak.max(open);
    }
    peak as usize
}

/// Critical-path cost of a constraint DAG by exhaustive path enumeration:
/// the makespan lower bound when independent stages may overlap freely.
pub fn critical_path_cost(
    costs: &HashMap<String, u64>,
    constraints: &HashMap<String, Vec<String>>,
) -> u64 {
    fn ending_at(
        node: &str,
        costs: &HashMap<String, u64>,
        constraints: &HashMap<String, Vec<String>>,
    ) -> u64 {
        let preds = constraints.get(node).map(Vec::as_slice).unwrap_or(&[]);
        costs[node]
            + preds
                .iter()
                .map(|p| ending_at(p, costs, constraints))
                .max()
                .unwrap_or(0)
    }
    costs
        .keys()
        .map(|n| ending_at(n, costs, constraints))
        .max()
        .expect("at least one stage")
}

/// Least-squares slope of y over x.
pub fn lsq_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    assert!(n >= 2.0);
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

// ---------------------------------------------------------------------------
// Shared audits over emitted tables
// ---------------------------------------------------------------------------

/// Batch rows arrive sorted by id; dispatch must follow id order in time.
pub fn assert_fifo_dispatch(rows: &[BatchRow]) {
    for pair in rows.windows(2) {
        assert!(
            pair[0].batch_id < pair[1].batch_id,
            "batch ids must be strictly increasing"
        );
        assert!(
            pair[0].dequeued_ms <= pair[1].dequeued_ms,
            "batch {} dispatched at {} before batch {} at {}",
            pair[1].batch_id,
            pair[1].dequeued_ms,
            pair[0].batch_id,
            pair[0].dequeued_ms
        );
    }
}

/// Each row's timestamps and derived durations must be internally coherent.
pub fn assert_row_arithmetic(rows: &[BatchRow]) {
    for r in rows {
        assert!(
            r.created_ms <= r.dequeued_ms
                && r.dequeued_ms <= r.first_stage_start_ms
                && r.first_stage_start_ms <= r.finished_ms,
            "batch {} timestamps out of order",
            r.batch_id
        );
        assert_eq!(r.scheduling_delay_ms, r.dequeued_ms - r.created_ms);
        assert_eq!(r.processing_time_ms, r.finished_ms - r.dequeued_ms);
        assert_eq!(r.empty, r.size_bytes == 0);
    }
}

/// No more than `cap` jobs may ever run at once.
pub fn assert_job_cap(rows: &[BatchRow], cap: usize) {
    let peak = max_overlap(rows.iter().map(|r| (r.dequeued_ms, r.finished_ms)));
    assert!(peak <= cap, "job overlap peaked at {peak}, cap is {cap}");
}

/// No more stages in flight than workers exist, and no worker ever runs two
/// stages at once.
pub fn assert_pool_capacity(stages: &[StageRow], workers: usize) {
    let peak = max_overlap(stages.iter().map(|s| (s.start_ms, s.end_ms)));
    assert!(
        peak <= workers,
        "stage overlap peaked at {peak} with only {workers} workers"
    );
    let mut by_worker: HashMap<usize, Vec<(u64, u64)>> = HashMap::new();
    for s in stages {
        by_worker
            .entry(s.worker_id)
            .or_default()
            .push((s.start_ms, s.end_ms));
    }
    for (worker, intervals) in by_worker {
        assert!(worker < workers, "unknown worker id {worker}");
        assert!(
            max_overlap(intervals) <= 1,
            "worker {worker} ran two stages at once"
        );
    }
}

/// Within each batch, no stage may start before every stage it depends on
/// has ended.
pub fn assert_dag_safety(stages: &[StageRow], constraints: &HashMap<String, Vec<String>>) {
    let mut per_batch: HashMap<u64, HashMap<&str, &StageRow>> = HashMap::new();
    for s in stages {
        per_batch
            .entry(s.batch_id)
            .or_default()
            .insert(s.stage_id.as_str(), s);
    }
    for (batch_id, stage_map) in per_batch {
        for (id, row) in &stage_map {
            for dep in constraints.get(*id).map(Vec::as_slice).unwrap_or(&[]) {
                if let Some(dep_row) = stage_map.get(dep.as_str()) {
                    assert!(
                        row.start_ms >= dep_row.end_ms,
                        "batch {batch_id}: stage {id} started at {} before \
                         dependency {dep} ended at {}",
                        row.start_ms,
                        dep_row.end_ms
                    );
                } else {
                    panic!("batch {batch_id}: stage {id} ran without dependency {dep}");
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Reference workloads
// ---------------------------------------------------------------------------

/// The reference pipeline: a long first stage with uniform jitter, a short
/// dependent second stage, Poisson arrivals of 1 KiB items.
pub fn reference_config(
    batch_interval_ms: u64,
    concurrent_jobs: u32,
    horizon_ms: u64,
    seed: u64,
) -> String {
    serde_json::json!({
        "workers": { "count": 30, "speed": 1.0 },
        "batch_interval_ms": batch_interval_ms,
        "concurrent_jobs": concurrent_jobs,
        "arrival": { "model": "exponential", "mean_ms": 1960, "item_size_bytes": 1024 },
        "workflow": {
            "stages": [
                { "id": "s1", "cost": { "base_ms": 3100, "jitter_ms": [0, 300] } },
                { "id": "s2", "constraints": ["s1"], "cost": { "base_ms": 100 } }
            ],
            "empty_job": { "cost": { "base_ms": 100 } }
        },
        "horizon_ms": horizon_ms,
        "seed": seed
    })
    .to_string()
}

/// Four-stage diamond with fixed costs 10/20/30/40 and steady arrivals, so
/// every batch is non-empty and every job is identical.
pub fn diamond_config(dispatch: &str, workers: usize, horizon_ms: u64) -> String {
    serde_json::json!({
        "workers": { "count": workers, "speed": 1.0 },
        "batch_interval_ms": 2000,
        "stage_dispatch": dispatch,
        "arrival": { "model": "deterministic", "interval_ms": 100, "item_size_bytes": 256 },
        "workflow": {
            "stages": [
                { "id": "s1", "cost": { "base_ms": 10 } },
                { "id": "s2", "constraints": ["s1"], "cost": { "base_ms": 20 } },
                { "id": "s3", "constraints": ["s1"], "cost": { "base_ms": 30 } },
                { "id": "s4", "constraints": ["s2", "s3"], "cost": { "base_ms": 40 } }
            ],
            "empty_job": { "cost": { "base_ms": 100 } }
        },
        "horizon_ms": horizon_ms,
        "seed": 7
    })
    .to_string()
}

pub fn diamond_constraints() -> HashMap<String, Vec<String>> {
    let mut m = HashMap::new();
    m.insert("s1".to_string(), vec![]);
    m.insert("s2".to_string(), vec!["s1".to_string()]);
    m.insert("s3".to_string(), vec!["s1".to_string()]);
    m.insert("s4".to_string(), vec!["s2".to_string(), "s3".to_string()]);
    m
}

pub fn diamond_costs() -> HashMap<String, u64> {
    [("s1", 10), ("s2", 20), ("s3", 30), ("s4", 40)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}
