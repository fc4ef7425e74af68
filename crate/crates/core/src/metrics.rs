//! Measurement collection: per-batch lifecycle records, per-stage execution
//! records, and the run-level summary derived from them.

use std::fmt::Write as _;

use serde::Serialize;

use crate::sim::SimTime;
use crate::workload::Batch;

/// Full lifecycle of one batch, in milliseconds.
///
/// Timestamps are totally ordered: created ≤ dequeued ≤ first stage start ≤
/// finished. A record violating that ordering indicates a simulator bug and
/// construction panics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchRecord {
    pub batch_id: u64,
    pub size_bytes: u64,
    pub created_ms: u64,
    pub dequeued_ms: u64,
    pub first_stage_start_ms: u64,
    pub finished_ms: u64,
    /// Time spent queued: dequeued − created.
    pub scheduling_delay_ms: u64,
    /// Time from dispatch to job completion: finished − dequeued.
    pub processing_time_ms: u64,
    pub empty: bool,
}

impl BatchRecord {
    pub fn from_times(
        batch: &Batch,
        dequeued: SimTime,
        first_stage_start: SimTime,
        finished: SimTime,
    ) -> Self {
        let created = batch.created_at;
        assert!(
            created <= dequeued && dequeued <= first_stage_start && first_stage_start <= finished,
            "batch {} timestamps out of order: created={} dequeued={} first_start={} finished={}",
            batch.id,
            created,
            dequeued,
            first_stage_start,
            finished
        );
        BatchRecord {
            batch_id: batch.id,
            size_bytes: batch.size_bytes,
            created_ms: created.as_ms(),
            dequeued_ms: dequeued.as_ms(),
            first_stage_start_ms: first_stage_start.as_ms(),
            finished_ms: finished.as_ms(),
            scheduling_delay_ms: dequeued.since(created),
            processing_time_ms: finished.since(dequeued),
            empty: batch.is_empty(),
        }
    }
}

/// One stage execution on one worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRecord {
    pub batch_id: u64,
    pub stage_id: String,
    pub worker_id: usize,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// A dispatch observation: which batch left the queue, and when.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchRecord {
    pub batch_id: u64,
    pub dequeued_ms: u64,
}

/// Run-level aggregates. Mean/max fields are `None` (JSON `null`) when no
/// batch completed. Durations appear in ticks (`_ms`) and derived seconds.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunSummary {
    pub batches_total: u64,
    pub batches_empty: u64,
    pub batches_completed: u64,
    pub scheduling_delay_mean_ms: Option<f64>,
    pub scheduling_delay_max_ms: Option<u64>,
    pub scheduling_delay_mean_s: Option<f64>,
    pub scheduling_delay_max_s: Option<f64>,
    pub processing_time_mean_ms: Option<f64>,
    pub processing_time_max_ms: Option<u64>,
    pub processing_time_mean_s: Option<f64>,
    pub processing_time_max_s: Option<f64>,
    pub generation_interval_min_ms: Option<u64>,
    pub generation_interval_max_ms: Option<u64>,
    /// True when every observed scheduling delay stayed within the
    /// stability threshold.
    pub stability: bool,
    pub stability_threshold_ms: u64,
    /// Bytes that arrived at the receiver over the whole run.
    pub arrived_bytes: u64,
    /// Bytes sealed into batches; plus the residual buffer this always
    /// equals `arrived_bytes`.
    pub batched_bytes: u64,
    /// Bytes still in the receiver buffer when the run ended.
    pub residual_buffer_bytes: u64,
    pub clock_end_ms: u64,
    pub deadlocked: bool,
    pub blocked_processes: Vec<String>,
}

/// Accumulates every observation of a run.
#[derive(Debug, Default)]
pub struct Collector {
    created: Vec<Batch>,
    dispatches: Vec<DispatchRecord>,
    batches: Vec<BatchRecord>,
    stages: Vec<StageRecord>,
    arrived_bytes: u64,
}

impl Collector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn note_arrival(&mut self, bytes: u64) {
        self.arrived_bytes += bytes;
    }

    pub fn record_created(&mut self, batch: &Batch) {
        if let Some(last) = self.created.last() {
            assert_eq!(
                batch.id,
                last.id + 1,
                "batch ids must be consecutive in creation order"
            );
        }
        self.created.push(batch.clone());
    }

    pub fn record_dispatch(&mut self, batch_id: u64, dequeued: SimTime) {
        self.dispatches.push(DispatchRecord {
            batch_id,
            dequeued_ms: dequeued.as_ms(),
        });
    }

    pub fn record_stage(&mut self, record: StageRecord) {
        assert!(record.start_ms <= record.end_ms);
        self.stages.push(record);
    }

    pub fn record_batch(&mut self, record: BatchRecord) {
        self.batches.push(record);
    }

    pub fn created(&self) -> &[Batch] {
        &self.created
    }

    pub fn dispatches(&self) -> &[DispatchRecord] {
        &self.dispatches
    }

    pub fn batches(&self) -> &[BatchRecord] {
        &self.batches
    }

    pub fn stages(&self) -> &[StageRecord] {
        &self.stages
    }

    pub fn arrived_bytes(&self) -> u64 {
        self.arrived_bytes
    }

    /// Completed-batch rows, ordered by batch id.
    pub fn batches_csv(&self) -> String {
        let mut out = String::from(
            "batch_id,size_bytes,created_ms,dequeued_ms,first_stage_start_ms,finished_ms,\
             scheduling_delay_ms,processing_time_ms,empty\n",
        );
        let mut rows: Vec<&BatchRecord> = self.batches.iter().collect();
        rows.sort_by_key(|r| r.batch_id);
        for r in rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.batch_id,
                r.size_bytes,
                r.created_ms,
                r.dequeued_ms,
                r.first_stage_start_ms,
                r.finished_ms,
                r.scheduling_delay_ms,
                r.processing_time_ms,
                r.empty
            )
            .unwrap();
        }
        out
    }

    /// Stage execution rows, ordered by start time then batch and stage id.
    pub fn stages_csv(&self) -> String {
        let mut out = String::from("batch_id,stage_id,worker_id,start_ms,end_ms\n");
        let mut rows: Vec<&StageRecord> = self.stages.iter().collect();
        rows.sort_by(|a, b| {
            (a.start_ms, a.batch_id, &a.stage_id).cmp(&(b.start_ms, b.batch_id, &b.stage_id))
        });
        for r in rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.batch_id, r.stage_id, r.worker_id, r.start_ms, r.end_ms
            )
            .unwrap();
        }
        out
    }

    pub fn summarize(
        &self,
        clock_end: SimTime,
        stability_threshold_ms: u64,
        residual_buffer_bytes: u64,
        deadlocked: bool,
        blocked_processes: Vec<String>,
    ) -> RunSummary {
        let delays: Vec<u64> = self.batches.iter().map(|b| b.scheduling_delay_ms).collect();
        let procs: Vec<u64> = self.batches.iter().map(|b| b.processing_time_ms).collect();
        let mean = |xs: &[u64]| {
            if xs.is_empty() {
                None
            } else {
                Some(xs.iter().sum::<u64>() as f64 / xs.len() as f64)
            }
        };
        let max = |xs: &[u64]| xs.iter().copied().max();

        let gaps: Vec<u64> = self
            .created
            .windows(2)
            .map(|w| w[1].created_at.since(w[0].created_at))
            .collect();

        let delay_mean = mean(&delays);
        let delay_max = max(&delays);
        let proc_mean = mean(&procs);
        let proc_max = max(&procs);

        RunSummary {
            batches_total: self.created.len() as u64,
            batches_empty: self.created.iter().filter(|b| b.is_empty()).count() as u64,
            batches_completed: self.batches.len() as u64,
            scheduling_delay_mean_ms: delay_mean,
            scheduling_delay_max_ms: delay_max,
            scheduling_delay_mean_s: delay_mean.map(|v| v / 1000.0),
            scheduling_delay_max_s: delay_max.map(|v| v as f64 / 1000.0),
            processing_time_mean_ms: proc_mean,
            processing_time_max_ms: proc_max,
            processing_time_mean_s: proc_mean.map(|v| v / 1000.0),
            processing_time_max_s: proc_max.map(|v| v as f64 / 1000.0),
            generation_interval_min_ms: gaps.iter().copied().min(),
            generation_interval_max_ms: gaps.iter().copied().max(),
            stability: delay_max.is_none_or(|d| d <= stability_threshold_ms),
            stability_threshold_ms,
            arrived_bytes: self.arrived_bytes,
            batched_bytes: self.created.iter().map(|b| b.size_bytes).sum(),
            residual_buffer_bytes,
            clock_end_ms: clock_end.as_ms(),
            deadlocked,
            blocked_processes,
        }
    }
}
