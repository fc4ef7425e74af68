//! The driver: cuts batches from the receiver buffer on a fixed interval,
//! dispatches queued batches FIFO under a concurrency cap, and runs each
//! batch's stage graph on the worker pool.

use std::cell::{Ref, RefCell};
use std::collections::VecDeque;
use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use crate::arrivals::ArrivalEvent;
use crate::cluster::WorkerPool;
use crate::metrics::{BatchRecord, Collector, StageRecord};
use crate::sim::{CondVar, Sim, SimTime};
use crate::workload::{check_constraints, Batch, JobWorkflow, StageSpec};

/// How a job runs the stages of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageDispatch {
    /// One stage at a time: repeatedly run the first runnable stage in list
    /// order, rotating blocked stages to the back.
    Sequential,
    /// Every runnable stage starts as its own process; independent stages
    /// overlap when workers allow.
    Parallel,
}

#[derive(Debug, Clone)]
pub struct DriverConfig {
    pub batch_interval_ms: u64,
    pub concurrent_jobs: u32,
    /// Pause between job-manager bookkeeping steps, in ticks.
    pub poll_quantum_ms: u64,
    pub dispatch: StageDispatch,
}

/// Mutable driver bookkeeping, shared by the driver's processes.
#[derive(Debug, Clone)]
pub struct DriverState {
    /// Bytes buffered since the last batch cut.
    pub buffer_size: u64,
    /// Batches awaiting dispatch, oldest first.
    pub queue: VecDeque<Batch>,
    pub running_jobs: u32,
    pub next_batch_id: u64,
}

pub struct Driver {
    sim: Sim,
    cfg: DriverConfig,
    state: RefCell<DriverState>,
    /// Signalled when running_jobs drops.
    slots_cv: CondVar,
    /// Signalled when a batch joins the queue.
    queue_cv: CondVar,
    pool: Rc<WorkerPool>,
    workflow: Rc<JobWorkflow>,
    rng: Rc<RefCell<ChaCha8Rng>>,
    collector: Rc<RefCell<Collector>>,
}

impl Driver {
    pub fn new(
        sim: &Sim,
        cfg: DriverConfig,
        pool: Rc<WorkerPool>,
        workflow: Rc<JobWorkflow>,
        rng: Rc<RefCell<ChaCha8Rng>>,
        collector: Rc<RefCell<Collector>>,
    ) -> Rc<Self> {
        assert!(cfg.batch_interval_ms >= 1);
        assert!(cfg.concurrent_jobs >= 1);
        assert!(cfg.poll_quantum_ms >= 1);
        Rc::new(Driver {
            sim: sim.clone(),
            cfg,
            state: RefCell::new(DriverState {
                buffer_size: 0,
                queue: VecDeque::new(),
                running_jobs: 0,
                next_batch_id: 1,
            }),
            slots_cv: sim.condvar("job-slots"),
            queue_cv: sim.condvar("batch-queue"),
            pool,
            workflow,
            rng,
            collector,
        })
    }

    /// Spawn the two driver processes.
    pub fn start(self: &Rc<Self>) {
        let d = self.clone();
        self.sim.spawn("batch-generator", batch_generator(d));
        let d = self.clone();
        self.sim.spawn("job-scheduler", job_scheduler(d));
    }

    /// Receive one arrival into the buffer.
    pub fn stream_receiver(&self, ev: &ArrivalEvent) {
        self.state.borrow_mut().buffer_size += ev.size_bytes;
        self.collector.borrow_mut().note_arrival(ev.size_bytes);
    }

    pub fn state(&self) -> Ref<'_, DriverState> {
        self.state.borrow()
    }
}

/// Cuts a batch from the buffer every interval, empty or not, and queues it.
async fn batch_generator(d: Rc<Driver>) {
    loop {
        d.sim.sleep(d.cfg.batch_interval_ms).await;
        let batch = {
            let mut st = d.state.borrow_mut();
            let batch = Batch {
                id: st.next_batch_id,
                size_bytes: st.buffer_size,
                created_at: d.sim.now(),
            };
            st.next_batch_id += 1;
            st.buffer_size = 0;
            st.queue.push_back(batch.clone());
            batch
        };
        d.collector.borrow_mut().record_created(&batch);
        d.queue_cv.notify_all();
    }
}

/// Pops batches FIFO whenever a job slot and a queued batch are both
/// available, spawning one job manager per batch.
async fn job_scheduler(d: Rc<Driver>) {
    loop {
        d.slots_cv
            .wait_until(|| d.state.borrow().running_jobs < d.cfg.concurrent_jobs)
            .await;
        d.queue_cv
            .wait_until(|| !d.state.borrow().queue.is_empty())
            .await;
        let batch = {
            let mut st = d.state.borrow_mut();
            st.running_jobs += 1;
            st.queue.pop_front().expect("queue emptied between checks")
        };
        let dequeued_at = d.sim.now();
        d.collector
            .borrow_mut()
            .record_dispatch(batch.id, dequeued_at);
        let name = format!("job-{}", batch.id);
        let dd = d.clone();
        match d.cfg.dispatch {
            StageDispatch::Sequential => {
                d.sim
                    .spawn(name, job_manager_sequential(dd, batch, dequeued_at));
            }
            StageDispatch::Parallel => {
                d.sim
                    .spawn(name, job_manager_parallel(dd, batch, dequeued_at));
            }
        }
    }
}

/// Job bookkeeping shared with stage runner processes in parallel mode.
struct JobProgress {
    finished: Vec<String>,
    spawned: Vec<bool>,
    first_stage_start: Option<SimTime>,
}

/// Runs the batch's stages one at a time: the head of the pending list runs
/// when its constraints are met, otherwise it rotates to the back; each step
/// ends with a poll-quantum pause.
async fn job_manager_sequential(d: Rc<Driver>, batch: Batch, dequeued_at: SimTime) {
    let workflow = d.workflow.clone();
    let stages = workflow.stages_for(&batch);
    let total = stages.len();
    let mut pending: VecDeque<usize> = (0..total).collect();
    let mut finished: Vec<String> = Vec::with_capacity(total);
    let mut first_stage_start: Option<SimTime> = None;

    while finished.len() < total {
        let idx = *pending.front().expect("no pending stage left unfinished");
        let stage = &stages[idx];
        if check_constraints(&stage.constraints, &finished) {
            let worker = d.pool.acquire().await;
            let cost = stage.cost.eval(batch.size_bytes, &mut *d.rng.borrow_mut());
            let start = d.sim.now();
            first_stage_start.get_or_insert(start);
            d.pool.exe(worker, cost).await;
            finished.push(stage.id.clone());
            d.pool.release(worker);
            pending.pop_front();
            d.collector.borrow_mut().record_stage(StageRecord {
                batch_id: batch.id,
                stage_id: stage.id.clone(),
                worker_id: worker,
                start_ms: start.as_ms(),
                end_ms: d.sim.now().as_ms(),
            });
        } else {
            pending.rotate_left(1);
        }
        d.sim.sleep(d.cfg.poll_quantum_ms).await;
    }

    finish_job(&d, &batch, dequeued_at, first_stage_start.unwrap());
}

/// Spawns a stage runner for every stage the moment its constraints are met,
/// polling for progress once per quantum.
async fn job_manager_parallel(d: Rc<Driver>, batch: Batch, dequeued_at: SimTime) {
    let stages: Rc<Vec<StageSpec>> = Rc::new(d.workflow.stages_for(&batch).to_vec());
    let total = stages.len();
    let progress = Rc::new(RefCell::new(JobProgress {
        finished: Vec::with_capacity(total),
        spawned: vec![false; total],
        first_stage_start: None,
    }));

    loop {
        let runnable: Vec<usize> = {
            let prog = progress.borrow();
            (0..total)
                .filter(|&i| {
                    !prog.spawned[i] && check_constraints(&stages[i].constraints, &prog.finished)
                })
                .collect()
        };
        for i in runnable {
            progress.borrow_mut().spawned[i] = true;
            let name = format!("job-{}/{}", batch.id, stages[i].id);
            d.sim.spawn(
                name,
                stage_runner(
                    d.clone(),
                    stages.clone(),
                    progress.clone(),
                    batch.clone(),
                    i,
                ),
            );
        }
        if progress.borrow().finished.len() == total {
            break;
        }
        d.sim.sleep(d.cfg.poll_quantum_ms).await;
    }

    let first_start = progress.borrow().first_stage_start.unwrap();
    finish_job(&d, &batch, dequeued_at, first_start);
}

/// One stage of a parallel job: take a worker, run, report.
async fn stage_runner(
    d: Rc<Driver>,
    stages: Rc<Vec<StageSpec>>,
    progress: Rc<RefCell<JobProgress>>,
    batch: Batch,
    idx: usize,
) {
    let stage = &stages[idx];
    let worker = d.pool.acquire().await;
    let cost = stage.cost.eval(batch.size_bytes, &mut *d.rng.borrow_mut());
    let start = d.sim.now();
    {
        let mut prog = progress.borrow_mut();
        if prog.first_stage_start.is_none_or(|t| start < t) {
            prog.first_stage_start = Some(start);
        }
    }
    d.pool.exe(worker, cost).await;
    progress.borrow_mut().finished.push(stage.id.clone());
    d.pool.release(worker);
    d.collector.borrow_mut().record_stage(StageRecord {
        batch_id: batch.id,
        stage_id: stage.id.clone(),
        worker_id: worker,
        start_ms: start.as_ms(),
        end_ms: d.sim.now().as_ms(),
    });
}

fn finish_job(d: &Rc<Driver>, batch: &Batch, dequeued_at: SimTime, first_stage_start: SimTime) {
    d.state.borrow_mut().running_jobs -= 1;
    d.slots_cv.notify_all();
    d.collector
        .borrow_mut()
        .record_batch(BatchRecord::from_times(
            batch,
            dequeued_at,
            first_stage_start,
            d.sim.now(),
        ));
}
