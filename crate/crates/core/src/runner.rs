//! Run orchestration: build a simulation from a plan, execute it to the
//! horizon, audit conservation, and export results; plus one-axis sweeps.

use std::cell::RefCell;
use std::io;
use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arrivals::{stream_pump, ArrivalSequence};
use crate::cluster::WorkerPool;
use crate::config::{ConfigError, RunPlan};
use crate::driver::Driver;
use crate::metrics::{Collector, RunSummary};
use crate::sim::Sim;

/// Everything a run produces, ready to write out.
pub struct RunOutput {
    pub summary: RunSummary,
    pub batches_csv: String,
    pub stages_csv: String,
    pub trace: Option<String>,
}

/// An independent ChaCha stream of the run seed.
fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Execute one simulation to its horizon. Pure: no file I/O, byte-for-byte
/// reproducible for a given plan.
pub fn simulate(plan: &RunPlan) -> RunOutput {
    let sim = Sim::new();
    if plan.event_trace {
        sim.enable_trace();
    }
    let pool = WorkerPool::conf_setup(&sim, plan.worker_count, plan.worker_spec.clone());
    // Arrivals and cost jitter draw from independent streams of the same
    // seed, so sweeping a driver parameter never perturbs the realized
    // workload it is being compared on.
    let arrival_rng = Rc::new(RefCell::new(seeded_stream(plan.seed, 0)));
    let cost_rng = Rc::new(RefCell::new(seeded_stream(plan.seed, 1)));
    let collector = Rc::new(RefCell::new(Collector::new()));
    let driver = Driver::new(
        &sim,
        plan.driver.clone(),
        pool.clone(),
        Rc::new(plan.workflow.clone()),
        cost_rng,
        collector.clone(),
    );
    driver.start();
    let seq = ArrivalSequence::new(plan.arrival_model.clone(), plan.item_size_bytes);
    let d = driver.clone();
    sim.spawn(
        "arrivals",
        stream_pump(sim.clone(), seq, arrival_rng, move |ev| {
            d.stream_receiver(ev)
        }),
    );

    let end = sim.run_until(plan.horizon);

    pool.assert_conserved();
    let collector = collector.borrow();
    let residual = driver.state().buffer_size;
    let batched: u64 = collector.created().iter().map(|b| b.size_bytes).sum();
    assert_eq!(
        collector.arrived_bytes(),
        batched + residual,
        "arrived bytes must equal batched bytes plus the residual buffer"
    );

    let deadlocked = sim.is_deadlocked();
    let blocked = if deadlocked {
        sim.live_processes()
    } else {
        Vec::new()
    };
    let threshold = plan
        .stability_threshold_ms
        .unwrap_or(plan.driver.batch_interval_ms);
    let summary = collector.summarize(end, threshold, residual, deadlocked, blocked);
    RunOutput {
        summary,
        batches_csv: collector.batches_csv(),
        stages_csv: collector.stages_csv(),
        trace: sim.trace(),
    }
}

/// Write a run's artifacts into `dir`: `batches.csv`, `stages.csv`,
/// `summary.json`, and `trace.tsv` when tracing was enabled.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("batches.csv"), &out.batches_csv)?;
    std::fs::write(dir.join("stages.csv"), &out.stages_csv)?;
    let mut json = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    json.push('\n');
    std::fs::write(dir.join("summary.json"), json)?;
    if let Some(trace) = &out.trace {
        std::fs::write(dir.join("trace.tsv"), trace)?;
    }
    Ok(())
}

/// Run a plan and export into its configured output directory.
pub fn run_and_export(plan: &RunPlan) -> io::Result<RunSummary> {
    let out = simulate(plan);
    write_outputs(&out, &plan.out_dir)?;
    Ok(out.summary)
}

/// Config fields a sweep may vary.
pub const SWEEP_AXES: [&str; 4] = [
    "batch_interval_ms",
    "concurrent_jobs",
    "workers.count",
    "workers.speed",
];

/// Set one axis of a plan from its textual value.
pub fn apply_axis(plan: &mut RunPlan, axis: &str, raw: &str) -> Result<(), String> {
    match axis {
        "batch_interval_ms" => {
            let v: u64 = raw.parse().map_err(|_| {
                format!("batch_interval_ms value `{raw}` is not an unsigned integer")
            })?;
            if v < 1 {
                return Err("batch_interval_ms must be at least 1".into());
            }
            if plan.horizon.as_ms() < v {
                return Err(format!(
                    "batch_interval_ms value {v} exceeds horizon_ms {}",
                    plan.horizon.as_ms()
                ));
            }
            plan.driver.batch_interval_ms = v;
        }
        "concurrent_jobs" => {
            let v: u32 = raw
                .parse()
                .map_err(|_| format!("concurrent_jobs value `{raw}` is not an unsigned integer"))?;
            if v < 1 {
                return Err("concurrent_jobs must be at least 1".into());
            }
            plan.driver.concurrent_jobs = v;
        }
        "workers.count" => {
            let v: usize = raw
                .parse()
                .map_err(|_| format!("workers.count value `{raw}` is not an unsigned integer"))?;
            if v < 1 {
                return Err("workers.count must be at least 1".into());
            }
            plan.worker_count = v;
        }
        "workers.speed" => {
            let v: f64 = raw
                .parse()
                .map_err(|_| format!("workers.speed value `{raw}` is not a number"))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err("workers.speed must be positive and finite".into());
            }
            plan.worker_spec.speed = v;
        }
        other => {
            return Err(format!(
                "unknown sweep axis `{other}`; expected one of {}",
                SWEEP_AXES.join(", ")
            ))
        }
    }
    Ok(())
}

/// One row of the sweep comparison table.
fn sweep_row(axis: &str, value: &str, s: &RunSummary) -> String {
    fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
        v.as_ref().map(|x| x.to_string()).unwrap_or_default()
    }
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        axis,
        value,
        s.batches_total,
        s.batches_empty,
        s.batches_completed,
        opt(&s.scheduling_delay_mean_ms),
        opt(&s.scheduling_delay_max_ms),
        opt(&s.processing_time_mean_ms),
        opt(&s.processing_time_max_ms),
        opt(&s.generation_interval_min_ms),
        opt(&s.generation_interval_max_ms),
        s.stability,
        s.clock_end_ms
    )
}

const SWEEP_HEADER: &str = "axis,value,batches_total,batches_empty,batches_completed,\
scheduling_delay_mean_ms,scheduling_delay_max_ms,processing_time_mean_ms,\
processing_time_max_ms,generation_interval_min_ms,generation_interval_max_ms,\
stability,clock_end_ms\n";

/// Run the base plan once per axis value. Each run writes its artifacts to
/// `<out_dir>/<axis>=<value>/`; a `sweep.csv` comparison table lands in
/// `out_dir` with one row per value, in the order given.
///
/// Values are validated up front (all violations reported before anything
/// runs); the runs themselves execute in parallel, one thread each.
pub fn sweep(base: &RunPlan, axis: &str, values: &[String]) -> Result<(), SweepError> {
    if values.is_empty() {
        return Err(SweepError::Config(ConfigError::Invalid(vec![
            "sweep needs at least one value".into(),
        ])));
    }
    let mut plans = Vec::with_capacity(values.len());
    let mut violations = Vec::new();
    for raw in values {
        let mut plan = base.clone();
        match apply_axis(&mut plan, axis, raw) {
            Ok(()) => {
                plan.out_dir = base.out_dir.join(format!("{axis}={raw}"));
                plans.push(plan);
            }
            Err(e) => violations.push(e),
        }
    }
    if !violations.is_empty() {
        return Err(SweepError::Config(ConfigError::Invalid(violations)));
    }

    let summaries: Vec<io::Result<RunSummary>> = std::thread::scope(|scope| {
        let handles: Vec<_> = plans
            .iter()
            .map(|plan| scope.spawn(move || run_and_export(plan)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });

    let mut table = String::from(SWEEP_HEADER);
    for (raw, result) in values.iter().zip(summaries) {
        let summary = result.map_err(SweepError::Io)?;
        table.push_str(&sweep_row(axis, raw, &summary));
    }
    std::fs::create_dir_all(&base.out_dir).map_err(SweepError::Io)?;
    std::fs::write(base.out_dir.join("sweep.csv"), table).map_err(SweepError::Io)?;
    Ok(())
}

#[derive(Debug)]
pub enum SweepError {
    Config(ConfigError),
    Io(io::Error),
}

impl std::fmt::Display for SweepError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepError::Config(e) => write!(f, "{e}"),
            SweepError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for SweepError {}
