//! Workload description: batches of buffered input, the stage graph a job
//! runs for each batch, and per-stage cost evaluation.

use rand::Rng;

use crate::sim::SimTime;

/// One micro-batch cut from the receiver buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    /// Consecutive from 1 in creation order.
    pub id: u64,
    /// Total bytes buffered during the interval; 0 marks an empty batch.
    pub size_bytes: u64,
    pub created_at: SimTime,
}

impl Batch {
    pub fn is_empty(&self) -> bool {
        self.size_bytes == 0
    }
}

/// Cost model for one stage, in ticks: a fixed base, a size-proportional
/// term, and uniform integer jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct CostExpr {
    pub base_ms: u64,
    /// Ticks added per KiB (1024 bytes) of batch size; the product is
    /// rounded half-up to a whole tick.
    pub per_kb_ms: f64,
    pub jitter_lo_ms: u64,
    pub jitter_hi_ms: u64,
}

impl CostExpr {
    pub fn fixed(base_ms: u64) -> Self {
        CostExpr {
            base_ms,
            per_kb_ms: 0.0,
            jitter_lo_ms: 0,
            jitter_hi_ms: 0,
        }
    }

    /// Evaluate the cost for a batch of `size_bytes`, drawing jitter from
    /// `rng`. A degenerate jitter range (lo == hi) consumes no randomness,
    /// so a jitter-free stage never perturbs the shared stream.
    pub fn eval(&self, size_bytes: u64, rng: &mut impl Rng) -> u64 {
        let scaled = self.per_kb_ms * (size_bytes as f64) / 1024.0;
        let scaled = (scaled + 0.5).floor() as u64;
        let jitter = if self.jitter_lo_ms == self.jitter_hi_ms {
            self.jitter_lo_ms
        } else {
            rng.gen_range(self.jitter_lo_ms..=self.jitter_hi_ms)
        };
        self.base_ms + scaled + jitter
    }
}

/// One stage of the per-batch job.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    pub id: String,
    /// Ids of stages that must have finished before this one may start.
    pub constraints: Vec<String>,
    pub cost: CostExpr,
}

/// The stage graph run for every non-empty batch, plus the single stage run
/// for empty ones.
#[derive(Debug, Clone, PartialEq)]
pub struct JobWorkflow {
    pub stages: Vec<StageSpec>,
    pub empty_stage: StageSpec,
}

impl JobWorkflow {
    /// The stages a batch actually runs.
    pub fn stages_for(&self, batch: &Batch) -> &[StageSpec] {
        if batch.is_empty() {
            std::slice::from_ref(&self.empty_stage)
        } else {
            &self.stages
        }
    }
}

/// True when every constraint of a stage appears in the finished list.
/// A stage with no constraints is always runnable.
pub fn check_constraints(constraints: &[String], finished: &[String]) -> bool {
    constraints.iter().all(|c| finished.contains(c))
}

/// Check a workflow for structural problems, reporting every violation
/// found: duplicate stage ids, constraints naming unknown stages, dependency
/// cycles, an empty stage list, or a constrained empty-batch stage.
pub fn validate_workflow(workflow: &JobWorkflow) -> Result<(), Vec<String>> {
    let mut violations = Vec::new();
    let stages = &workflow.stages;

    if stages.is_empty() {
        violations.push("workflow has no stages".to_string());
    }

    let mut ids: Vec<&str> = Vec::new();
    for s in stages {
        if ids.contains(&s.id.as_str()) {
            violations.push(format!("duplicate stage id `{}`", s.id));
        } else {
            ids.push(&s.id);
        }
    }

    for s in stages {
        for c in &s.constraints {
            if !ids.contains(&c.as_str()) {
                violations.push(format!("stage `{}` depends on unknown stage `{}`", s.id, c));
            }
            if c == &s.id {
                violations.push(format!("stage `{}` depends on itself", s.id));
            }
        }
    }

    if !workflow.empty_stage.constraints.is_empty() {
        violations.push("the empty-batch stage must have no constraints".to_string());
    }

    // Cycle detection: peel stages whose constraints are all satisfied by
    // already-peeled ones; anything left is on (or blocked by) a cycle.
    // Only meaningful once the reference structure is sound.
    if violations.is_empty() {
        let mut done: Vec<String> = Vec::new();
        let mut remaining: Vec<&StageSpec> = stages.iter().collect();
        loop {
            let before = remaining.len();
            remaining.retain(|s| {
                if check_constraints(&s.constraints, &done) {
                    done.push(s.id.clone());
                    false
                } else {
                    true
                }
            });
            if remaining.is_empty() || remaining.len() == before {
                break;
            }
        }
        if !remaining.is_empty() {
            let mut stuck: Vec<&str> = remaining.iter().map(|s| s.id.as_str()).collect();
            stuck.sort_unstable();
            violations.push(format!(
                "dependency cycle among stages: {}",
                stuck.join(", ")
            ));
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
