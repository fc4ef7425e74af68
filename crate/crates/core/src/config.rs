//! JSON run configuration: parsing, exhaustive validation, and conversion
//! into the runtime plan a simulation is built from.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::arrivals::{parse_trace, ArrivalModel};
use crate::cluster::RSpec;
use crate::driver::{DriverConfig, StageDispatch};
use crate::sim::SimTime;
use crate::workload::{validate_workflow, CostExpr, JobWorkflow, StageSpec};

/// Why a configuration could not be used.
#[derive(Debug)]
pub enum ConfigError {
    /// The file (or a file it references) could not be read.
    Io(std::io::Error),
    /// The content is malformed or inconsistent; every violation found.
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "{e}"),
            ConfigError::Invalid(violations) => {
                for (i, v) in violations.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<std::io::Error> for ConfigError {
    fn from(e: std::io::Error) -> Self {
        ConfigError::Io(e)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub workers: WorkersConfig,
    pub batch_interval_ms: u64,
    #[serde(default = "default_concurrent_jobs")]
    pub concurrent_jobs: u32,
    #[serde(default)]
    pub stage_dispatch: DispatchConfig,
    #[serde(default = "default_poll_quantum")]
    pub poll_quantum_ms: u64,
    pub arrival: ArrivalConfig,
    pub workflow: WorkflowConfig,
    pub horizon_ms: u64,
    pub seed: u64,
    #[serde(default)]
    pub outputs: OutputsConfig,
    /// Scheduling-delay bound for the stability flag; defaults to the batch
    /// interval of the run.
    #[serde(default)]
    pub stability_threshold_ms: Option<u64>,
}

fn default_concurrent_jobs() -> u32 {
    1
}

fn default_poll_quantum() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkersConfig {
    pub count: usize,
    #[serde(default = "default_cores")]
    pub cores: u32,
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_memory_mb")]
    pub memory_mb: u64,
}

fn default_cores() -> u32 {
    1
}

fn default_speed() -> f64 {
    1.0
}

fn default_memory_mb() -> u64 {
    2048
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispatchConfig {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalConfig {
    /// `exponential`, `deterministic`, or `trace`.
    pub model: String,
    #[serde(default)]
    pub mean_ms: Option<u64>,
    #[serde(default)]
    pub interval_ms: Option<u64>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Size of each generated item; defaults to 1024. Trace items carry
    /// their own sizes.
    #[serde(default)]
    pub item_size_bytes: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowConfig {
    pub stages: Vec<StageConfig>,
    pub empty_job: EmptyJobConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub id: String,
    #[serde(default)]
    pub constraints: Vec<String>,
    pub cost: CostConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub base_ms: u64,
    #[serde(default)]
    pub per_kb_ms: f64,
    #[serde(default)]
    pub jitter_ms: [u64; 2],
}

impl CostConfig {
    fn to_expr(&self) -> CostExpr {
        CostExpr {
            base_ms: self.base_ms,
            per_kb_ms: self.per_kb_ms,
            jitter_lo_ms: self.jitter_ms[0],
            jitter_hi_ms: self.jitter_ms[1],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmptyJobConfig {
    pub cost: CostConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub event_trace: bool,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        OutputsConfig {
            dir: default_out_dir(),
            event_trace: false,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a run needs, fully validated.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub worker_count: usize,
    pub worker_spec: RSpec,
    pub driver: DriverConfig,
    pub arrival_model: ArrivalModel,
    pub item_size_bytes: u64,
    pub workflow: JobWorkflow,
    pub horizon: SimTime,
    pub seed: u64,
    /// `None` means "use this run's batch interval".
    pub stability_threshold_ms: Option<u64>,
    pub out_dir: PathBuf,
    pub event_trace: bool,
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<SimConfig, ConfigError> {
        serde_json::from_str(text)
            .map_err(|e| ConfigError::Invalid(vec![format!("config parse error: {e}")]))
    }

    pub fn from_file(path: &Path) -> Result<SimConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Field-level checks that need no file access. Returns every violation.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut violations = Vec::new();

        if self.workers.count < 1 {
            violations.push("workers.count must be at least 1".into());
        }
        if self.workers.cores < 1 {
            violations.push("workers.cores must be at least 1".into());
        }
        if !(self.workers.speed > 0.0 && self.workers.speed.is_finite()) {
            violations.push("workers.speed must be positive and finite".into());
        }
        if self.workers.memory_mb < 1 {
            violations.push("workers.memory_mb must be at least 1".into());
        }
        if self.batch_interval_ms < 1 {
            violations.push("batch_interval_ms must be at least 1".into());
        }
        if self.concurrent_jobs < 1 {
            violations.push("concurrent_jobs must be at least 1".into());
        }
        if self.poll_quantum_ms < 1 {
            violations.push("poll_quantum_ms must be at least 1".into());
        }
        if self.horizon_ms < self.batch_interval_ms {
            violations.push(format!(
                "horizon_ms ({}) must be at least batch_interval_ms ({})",
                self.horizon_ms, self.batch_interval_ms
            ));
        }

        self.validate_arrival(&mut violations);

        let workflow = self.workflow_model();
        if let Err(errs) = validate_workflow(&workflow) {
            violations.extend(errs.into_iter().map(|e| format!("workflow: {e}")));
        }
        for s in &self.workflow.stages {
            Self::validate_cost(
                &s.cost,
                &format!("workflow.stages[{}]", s.id),
                &mut violations,
            );
        }
        Self::validate_cost(
            &self.workflow.empty_job.cost,
            "workflow.empty_job",
            &mut violations,
        );

        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    fn validate_cost(cost: &CostConfig, at: &str, violations: &mut Vec<String>) {
        if !(cost.per_kb_ms >= 0.0 && cost.per_kb_ms.is_finite()) {
            violations.push(format!(
                "{at}.cost.per_kb_ms must be finite and non-negative"
            ));
        }
        if cost.jitter_ms[0] > cost.jitter_ms[1] {
            violations.push(format!(
                "{at}.cost.jitter_ms lower bound {} exceeds upper bound {}",
                cost.jitter_ms[0], cost.jitter_ms[1]
            ));
        }
    }

    fn validate_arrival(&self, violations: &mut Vec<String>) {
        let a = &self.arrival;
        match a.model.as_str() {
            "exponential" => {
                match a.mean_ms {
                    None => violations
                        .push("arrival.mean_ms is required for the exponential model".into()),
                    Some(0) => violations.push("arrival.mean_ms must be at least 1".into()),
                    Some(_) => {}
                }
                if a.interval_ms.is_some() {
                    violations
                        .push("arrival.interval_ms only applies to the deterministic model".into());
                }
                if a.path.is_some() {
                    violations.push("arrival.path only applies to the trace model".into());
                }
            }
            "deterministic" => {
                match a.interval_ms {
                    None => violations
                        .push("arrival.interval_ms is required for the deterministic model".into()),
                    Some(0) => violations.push("arrival.interval_ms must be at least 1".into()),
                    Some(_) => {}
                }
                if a.mean_ms.is_some() {
                    violations.push("arrival.mean_ms only applies to the exponential model".into());
                }
                if a.path.is_some() {
                    violations.push("arrival.path only applies to the trace model".into());
                }
            }
            "trace" => {
                if a.path.is_none() {
                    violations.push("arrival.path is required for the trace model".into());
                }
                if a.mean_ms.is_some() {
                    violations.push("arrival.mean_ms only applies to the exponential model".into());
                }
                if a.interval_ms.is_some() {
                    violations
                        .push("arrival.interval_ms only applies to the deterministic model".into());
                }
                if a.item_size_bytes.is_some() {
                    violations.push(
                        "arrival.item_size_bytes is unused for the trace model (sizes come from the file)"
                            .into(),
                    );
                }
            }
            other => violations.push(format!(
                "arrival.model `{other}` unknown; expected exponential, deterministic, or trace"
            )),
        }
        if a.item_size_bytes == Some(0) {
            violations.push("arrival.item_size_bytes must be at least 1".into());
        }
    }

    fn workflow_model(&self) -> JobWorkflow {
        JobWorkflow {
            stages: self
                .workflow
                .stages
                .iter()
                .map(|s| StageSpec {
                    id: s.id.clone(),
                    constraints: s.constraints.clone(),
                    cost: s.cost.to_expr(),
                })
                .collect(),
            empty_stage: StageSpec {
                id: "empty".to_string(),
                constraints: vec![],
                cost: self.workflow.empty_job.cost.to_expr(),
            },
        }
    }

    /// Validate and assemble the run plan, reading the arrival trace file if
    /// one is configured. Trace paths are resolved relative to `base_dir`
    /// (normally the config file's directory).
    pub fn build(&self, base_dir: &Path) -> Result<RunPlan, ConfigError> {
        self.validate().map_err(ConfigError::Invalid)?;

        let arrival_model = match self.arrival.model.as_str() {
            "exponential" => ArrivalModel::Exponential {
                mean_ms: self.arrival.mean_ms.unwrap(),
            },
            "deterministic" => ArrivalModel::Deterministic {
                interval_ms: self.arrival.interval_ms.unwrap(),
            },
            "trace" => {
                let rel = self.arrival.path.as_ref().unwrap();
                let path = if rel.is_absolute() {
                    rel.clone()
                } else {
                    base_dir.join(rel)
                };
                let text = std::fs::read_to_string(&path)?;
                let events = parse_trace(&text).map_err(|errs| {
                    ConfigError::Invalid(
                        errs.into_iter()
                            .map(|e| format!("arrival trace {}: {e}", path.display()))
                            .collect(),
                    )
                })?;
                ArrivalModel::Trace { events }
            }
            _ => unreachable!("validate() rejects unknown models"),
        };

        Ok(RunPlan {
            worker_count: self.workers.count,
            worker_spec: RSpec {
                cores: self.workers.cores,
                speed: self.workers.speed,
                memory_mb: self.workers.memory_mb,
            },
            driver: DriverConfig {
                batch_interval_ms: self.batch_interval_ms,
                concurrent_jobs: self.concurrent_jobs,
                poll_quantum_ms: self.poll_quantum_ms,
                dispatch: match self.stage_dispatch {
                    DispatchConfig::Sequential => StageDispatch::Sequential,
                    DispatchConfig::Parallel => StageDispatch::Parallel,
                },
            },
            arrival_model,
            item_size_bytes: self.arrival.item_size_bytes.unwrap_or(1024),
            workflow: self.workflow_model(),
            horizon: SimTime::from_ms(self.horizon_ms),
            seed: self.seed,
            stability_threshold_ms: self.stability_threshold_ms,
            out_dir: self.outputs.dir.clone(),
            event_trace: self.outputs.event_trace,
        })
    }
}
