//! Worker pool: a fixed set of workers with resource specs, handed out to
//! jobs in FIFO order and executing stage costs scaled by worker speed.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::rc::Rc;

use crate::sim::{CondVar, Sim, SimTime};

/// Resource description of one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct RSpec {
    pub cores: u32,
    /// Execution speed factor: a stage of cost `c` ticks occupies the worker
    /// for `ceil(c / speed)` ticks.
    pub speed: f64,
    pub memory_mb: u64,
}

impl Default for RSpec {
    fn default() -> Self {
        RSpec {
            cores: 1,
            speed: 1.0,
            memory_mb: 2048,
        }
    }
}

#[derive(Debug)]
struct Worker {
    spec: RSpec,
    busy: bool,
    busy_until: Option<SimTime>,
    stages_executed: u64,
}

/// Pool of simulated workers.
///
/// `acquire` suspends the caller until a worker is idle and always hands out
/// the longest-idle one; `release` returns a worker to the tail of the idle
/// queue. Releasing a worker that was never acquired is a simulation bug and
/// panics.
pub struct WorkerPool {
    sim: Sim,
    workers: RefCell<Vec<Worker>>,
    idle: RefCell<VecDeque<usize>>,
    idle_cv: CondVar,
}

impl WorkerPool {
    /// Build a pool of `count` workers sharing one spec. Worker ids run
    /// 0..count and double as idle-queue identity.
    pub fn conf_setup(sim: &Sim, count: usize, spec: RSpec) -> Rc<Self> {
        Self::conf_setup_mixed(sim, vec![spec; count])
    }

    /// Build a pool from per-worker specs.
    pub fn conf_setup_mixed(sim: &Sim, specs: Vec<RSpec>) -> Rc<Self> {
        assert!(!specs.is_empty(), "a cluster needs at least one worker");
        for s in &specs {
            assert!(
                s.speed > 0.0 && s.speed.is_finite(),
                "worker speed must be positive and finite"
            );
        }
        let count = specs.len();
        Rc::new(WorkerPool {
            sim: sim.clone(),
            workers: RefCell::new(
                specs
                    .into_iter()
                    .map(|spec| Worker {
                        spec,
                        busy: false,
                        busy_until: None,
                        stages_executed: 0,
                    })
                    .collect(),
            ),
            idle: RefCell::new((0..count).collect()),
            idle_cv: sim.condvar("worker-pool"),
        })
    }

    pub fn total(&self) -> usize {
        self.workers.borrow().len()
    }

    pub fn idle_count(&self) -> usize {
        self.idle.borrow().len()
    }

    pub fn spec(&self, worker_id: usize) -> RSpec {
        self.workers.borrow()[worker_id].spec.clone()
    }

    pub fn stages_executed(&self, worker_id: usize) -> u64 {
        self.workers.borrow()[worker_id].stages_executed
    }

    /// Suspend until a worker is free, then take the head of the idle queue.
    pub async fn acquire(&self) -> usize {
        self.idle_cv
            .wait_until(|| !self.idle.borrow().is_empty())
            .await;
        let id = self
            .idle
            .borrow_mut()
            .pop_front()
            .expect("idle queue emptied between wake and resume");
        let mut workers = self.workers.borrow_mut();
        debug_assert!(!workers[id].busy);
        workers[id].busy = true;
        id
    }

    /// Occupy an acquired worker for `ceil(cost / speed)` ticks. A zero-cost
    /// stage completes at the current instant without suspending.
    pub async fn exe(&self, worker_id: usize, cost_ticks: u64) {
        let duration = {
            let mut workers = self.workers.borrow_mut();
            let w = &mut workers[worker_id];
            assert!(w.busy, "exe on a worker that was not acquired");
            let duration = ((cost_ticks as f64) / w.spec.speed).ceil() as u64;
            w.busy_until = Some(self.sim.now() + duration);
            duration
        };
        self.sim.sleep(duration).await;
        let mut workers = self.workers.borrow_mut();
        let w = &mut workers[worker_id];
        w.busy_until = None;
        w.stages_executed += 1;
    }

    /// Return a worker to the tail of the idle queue and wake acquirers.
    pub fn release(&self, worker_id: usize) {
        {
            let mut workers = self.workers.borrow_mut();
            let w = &mut workers[worker_id];
            assert!(w.busy, "released worker {worker_id} which is already idle");
            w.busy = false;
            w.busy_until = None;
        }
        self.idle.borrow_mut().push_back(worker_id);
        self.idle_cv.notify_all();
    }

    /// Every worker is either in the idle queue or marked busy, exactly once.
    pub fn assert_conserved(&self) {
        let workers = self.workers.borrow();
        let idle = self.idle.borrow();
        let busy = workers.iter().filter(|w| w.busy).count();
        assert_eq!(
            idle.len() + busy,
            workers.len(),
            "worker pool lost track of a worker"
        );
        let mut seen = vec![false; workers.len()];
        for &id in idle.iter() {
            assert!(!seen[id], "worker {id} queued idle twice");
            assert!(!workers[id].busy, "worker {id} both idle and busy");
            seen[id] = true;
        }
    }
}
