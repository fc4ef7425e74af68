//! Deterministic discrete-event engine: a virtual millisecond clock, a
//! time-ordered event queue with FIFO tie-breaking, and cooperative simulated
//! processes that can sleep for an exact duration or block on a condition
//! variable.
//!
//! Everything is single-threaded. Simulated concurrency comes from
//! interleaving process resumptions on the event queue; each event handler
//! runs to completion before the next one fires, so shared state mutated by
//! processes needs no locking.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;
use std::future::Future;
use std::io::Write as _;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

/// A simulated instant, counted in integer ticks. 1 tick = 1 millisecond.
///
/// The clock is exact: there is no floating-point time anywhere in the
/// engine, so a process that sleeps `d` ticks wakes exactly `d` ticks later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_ms(ms: u64) -> Self {
        SimTime(ms)
    }

    pub fn as_ms(self) -> u64 {
        self.0
    }

    /// Ticks elapsed since `earlier`. Panics if `earlier` is in the future.
    pub fn since(self, earlier: SimTime) -> u64 {
        self.0
            .checked_sub(earlier.0)
            .expect("SimTime::since called with a later instant")
    }
}

impl std::ops::Add<u64> for SimTime {
    type Output = SimTime;
    fn add(self, ticks: u64) -> SimTime {
        SimTime(self.0 + ticks)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Handle for a scheduled event, in global insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EventId(u64);

/// Handle for a spawned simulated process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(u64);

enum Action {
    /// Resume a suspended process, valid only while its wake epoch matches.
    Wake {
        pid: ProcessId,
        epoch: u64,
        reason: &'static str,
    },
    /// Run an arbitrary continuation.
    Call(Box<dyn FnOnce(&Sim)>),
}

struct QueuedEvent {
    fire_at: SimTime,
    seq: u64,
    action: Action,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl Eq for QueuedEvent {}

impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse to pop the earliest (fire_at, seq)
        // first. Equal timestamps dispatch in ascending seq: FIFO tie-break.
        match other.fire_at.cmp(&self.fire_at) {
            Ordering::Equal => other.seq.cmp(&self.seq),
            ord => ord,
        }
    }
}

struct ProcessSlot {
    name: Rc<str>,
    /// Taken out of the slot while the process is being polled.
    future: Option<Pin<Box<dyn Future<Output = ()>>>>,
    /// Bumped on every poll; wake events carry the epoch they were scheduled
    /// against and are dropped if the process has been polled since.
    epoch: u64,
}

struct CondVarState {
    name: Rc<str>,
    /// Suspended processes in suspension order; re-evaluated FIFO on notify.
    waiters: VecDeque<ProcessId>,
}

struct EngineInner {
    now: SimTime,
    next_seq: u64,
    next_pid: u64,
    queue: BinaryHeap<QueuedEvent>,
    processes: BTreeMap<u64, ProcessSlot>,
    condvars: Vec<CondVarState>,
    current: Option<ProcessId>,
    events_dispatched: u64,
    trace: Option<Vec<u8>>,
}

impl EngineInner {
    fn push_event(&mut self, fire_at: SimTime, action: Action) -> EventId {
        assert!(
            fire_at >= self.now,
            "event scheduled in the past: fire_at={} now={}",
            fire_at,
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(QueuedEvent {
            fire_at,
            seq,
            action,
        });
        EventId(seq)
    }

    fn trace_line(&mut self, process: &str, kind: &str) {
        if let Some(buf) = self.trace.as_mut() {
            writeln!(buf, "{}\t{}\t{}", self.now, process, kind).expect("trace write");
        }
    }
}

/// Cloneable handle to a single simulation run.
///
/// The engine itself is not thread-safe; whole runs may execute on separate
/// threads since runs share no state.
#[derive(Clone)]
pub struct Sim {
    inner: Rc<RefCell<EngineInner>>,
}

impl Default for Sim {
    fn default() -> Self {
        Self::new()
    }
}

impl Sim {
    pub fn new() -> Self {
        Sim {
            inner: Rc::new(RefCell::new(EngineInner {
                now: SimTime::ZERO,
                next_seq: 0,
                next_pid: 0,
                queue: BinaryHeap::new(),
                processes: BTreeMap::new(),
                condvars: Vec::new(),
                current: None,
                events_dispatched: 0,
                trace: None,
            })),
        }
    }

    /// Enable the event trace: one TSV line per dispatched event,
    /// `tick<TAB>process<TAB>event-kind`.
    pub fn enable_trace(&self) {
        self.inner.borrow_mut().trace = Some(Vec::new());
    }

    /// The trace collected so far, if tracing is enabled.
    pub fn trace(&self) -> Option<String> {
        self.inner
            .borrow()
            .trace
            .as_ref()
            .map(|buf| String::from_utf8_lossy(buf).into_owned())
    }

    pub fn now(&self) -> SimTime {
        self.inner.borrow().now
    }

    pub fn events_dispatched(&self) -> u64 {
        self.inner.borrow().events_dispatched
    }

    pub fn queue_is_empty(&self) -> bool {
        self.inner.borrow().queue.is_empty()
    }

    /// Names of processes that have been spawned and not yet run to
    /// completion, in spawn order.
    pub fn live_processes(&self) -> Vec<String> {
        self.inner
            .borrow()
            .processes
            .values()
            .map(|slot| slot.name.to_string())
            .collect()
    }

    /// True when nothing can ever run again but processes are still
    /// suspended: every one of them is parked on a condition variable that
    /// no remaining event will notify.
    pub fn is_deadlocked(&self) -> bool {
        let inner = self.inner.borrow();
        inner.queue.is_empty() && !inner.processes.is_empty()
    }

    /// Schedule `action` to run at `at`, after all earlier-scheduled events
    /// at the same instant. Scheduling in the past is an engine bug and
    /// panics.
    pub fn schedule(&self, at: SimTime, action: impl FnOnce(&Sim) + 'static) -> EventId {
        self.inner
            .borrow_mut()
            .push_event(at, Action::Call(Box::new(action)))
    }

    /// Spawn a simulated process. Its first poll happens at the current
    /// instant, after events already queued there.
    pub fn spawn(
        &self,
        name: impl Into<String>,
        fut: impl Future<Output = ()> + 'static,
    ) -> ProcessId {
        let mut inner = self.inner.borrow_mut();
        let pid = ProcessId(inner.next_pid);
        inner.next_pid += 1;
        inner.processes.insert(
            pid.0,
            ProcessSlot {
                name: Rc::from(name.into()),
                future: Some(Box::pin(fut)),
                epoch: 0,
            },
        );
        let now = inner.now;
        inner.push_event(
            now,
            Action::Wake {
                pid,
                epoch: 0,
                reason: "start",
            },
        );
        pid
    }

    /// Suspend the calling process for exactly `ticks` ticks.
    /// `sleep(0)` completes without suspending; use [`Sim::yield_now`] to
    /// re-queue behind same-instant events.
    pub fn sleep(&self, ticks: u64) -> Sleep {
        Sleep {
            sim: self.clone(),
            wake_at: self.now() + ticks,
        }
    }

    /// Suspend the calling process until the absolute instant `at`.
    pub fn sleep_until(&self, at: SimTime) -> Sleep {
        assert!(at >= self.now(), "sleep_until target is in the past");
        Sleep {
            sim: self.clone(),
            wake_at: at,
        }
    }

    /// Yield the processor: resume at the same tick, after every event
    /// already queued at this instant.
    pub fn yield_now(&self) -> YieldNow {
        YieldNow {
            sim: self.clone(),
            yielded: false,
        }
    }

    pub fn condvar(&self, name: impl Into<String>) -> CondVar {
        let mut inner = self.inner.borrow_mut();
        let id = inner.condvars.len();
        inner.condvars.push(CondVarState {
            name: Rc::from(name.into()),
            waiters: VecDeque::new(),
        });
        CondVar {
            sim: self.clone(),
            id,
        }
    }

    /// Dispatch events in (time, seq) order until the queue is empty or the
    /// next event lies beyond `horizon`. Returns the final clock value: the
    /// horizon if it was reached, otherwise the time of the last event fired.
    /// No event beyond the horizon fires.
    pub fn run_until(&self, horizon: SimTime) -> SimTime {
        loop {
            let next = {
                let inner = self.inner.borrow();
                match inner.queue.peek() {
                    None => return inner.now,
                    Some(ev) => ev.fire_at,
                }
            };
            if next > horizon {
                let mut inner = self.inner.borrow_mut();
                if horizon > inner.now {
                    inner.now = horizon;
                }
                return inner.now;
            }
            let ev = {
                let mut inner = self.inner.borrow_mut();
                let ev = inner.queue.pop().expect("peeked event vanished");
                inner.now = ev.fire_at;
                inner.events_dispatched += 1;
                ev
            };
            self.dispatch(ev);
        }
    }

    /// Run until the event queue empties, with no time bound.
    pub fn run_to_completion(&self) -> SimTime {
        self.run_until(SimTime(u64::MAX))
    }

    fn dispatch(&self, ev: QueuedEvent) {
        match ev.action {
            Action::Wake { pid, epoch, reason } => {
                let live = {
                    let inner = self.inner.borrow();
                    inner
                        .processes
                        .get(&pid.0)
                        .map(|slot| slot.epoch == epoch)
                        .unwrap_or(false)
                };
                // Stale wakes (the process was polled since this was
                // scheduled, or has finished) are dropped silently.
                if live {
                    {
                        let mut inner = self.inner.borrow_mut();
                        let name = inner.processes.get(&pid.0).unwrap().name.clone();
                        inner.trace_line(&name, reason);
                    }
                    self.poll_process(pid);
                }
            }
            Action::Call(f) => {
                self.inner.borrow_mut().trace_line("-", "call");
                f(self);
            }
        }
    }

    fn poll_process(&self, pid: ProcessId) {
        let mut fut = {
            let mut inner = self.inner.borrow_mut();
            let slot = inner
                .processes
                .get_mut(&pid.0)
                .expect("polled a finished process");
            slot.epoch += 1;
            let fut = slot.future.take().expect("process polled re-entrantly");
            inner.current = Some(pid);
            fut
        };
        let mut cx = Context::from_waker(Waker::noop());
        let result = fut.as_mut().poll(&mut cx);
        let mut inner = self.inner.borrow_mut();
        inner.current = None;
        match result {
            Poll::Ready(()) => {
                inner.processes.remove(&pid.0);
                // A finished process must not linger in any wait list.
                for cv in inner.condvars.iter_mut() {
                    cv.waiters.retain(|p| *p != pid);
                }
            }
            Poll::Pending => {
                inner
                    .processes
                    .get_mut(&pid.0)
                    .expect("pending process vanished")
                    .future = Some(fut);
            }
        }
    }

    fn current_pid(&self) -> ProcessId {
        self.inner
            .borrow()
            .current
            .expect("engine primitive awaited outside a simulated process")
    }

    fn schedule_wake(&self, pid: ProcessId, at: SimTime, reason: &'static str) {
        let mut inner = self.inner.borrow_mut();
        let epoch = inner
            .processes
            .get(&pid.0)
            .expect("wake scheduled for a finished process")
            .epoch;
        inner.push_event(at, Action::Wake { pid, epoch, reason });
    }
}

/// Future returned by [`Sim::sleep`] and [`Sim::sleep_until`].
pub struct Sleep {
    sim: Sim,
    wake_at: SimTime,
}

impl Future for Sleep {
    type Output = ();

    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        if self.sim.now() >= self.wake_at {
            return Poll::Ready(());
        }
        let pid = self.sim.current_pid();
        // Re-armed on every poll: each poll bumps the epoch, invalidating
        // the previous registration.
        self.sim.schedule_wake(pid, self.wake_at, "sleep");
        Poll::Pending
    }
}

/// Future returned by [`Sim::yield_now`].
pub struct YieldNow {
    sim: Sim,
    yielded: bool,
}

impl Future for YieldNow {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        if self.yielded {
            return Poll::Ready(());
        }
        self.yielded = true;
        let pid = self.sim.current_pid();
        let now = self.sim.now();
        self.sim.schedule_wake(pid, now, "yield");
        Poll::Pending
    }
}

/// A condition variable tying suspended processes to a shared-state
/// predicate.
///
/// `wait_until` parks the calling process; every `notify_all` re-evaluates
/// the waiters' predicates in suspension order at the current instant.
/// Code that mutates state a predicate reads must call `notify_all` on the
/// matching condvar in the same event turn, or waiters can sleep forever.
#[derive(Clone)]
pub struct CondVar {
    sim: Sim,
    id: usize,
}

impl CondVar {
    /// Suspend until `pred` holds. Always yields at least once, so the
    /// caller resumes at the earliest at the current tick after events
    /// already queued there; the predicate is re-checked at resumption, and
    /// the process stays parked (keeping its place in line) if it no longer
    /// holds.
    pub fn wait_until<P: Fn() -> bool>(&self, pred: P) -> WaitUntil<P> {
        WaitUntil {
            cv: self.clone(),
            pred,
            registered: std::cell::Cell::new(false),
        }
    }

    /// Schedule a same-instant predicate re-check for every current waiter,
    /// in suspension order.
    pub fn notify_all(&self) {
        let wakes: Vec<ProcessId> = {
            let inner = self.sim.inner.borrow();
            inner.condvars[self.id].waiters.iter().copied().collect()
        };
        for pid in wakes {
            let now = self.sim.now();
            self.sim.schedule_wake(pid, now, "notify");
        }
    }

    pub fn waiter_count(&self) -> usize {
        self.sim.inner.borrow().condvars[self.id].waiters.len()
    }

    pub fn name(&self) -> String {
        self.sim.inner.borrow().condvars[self.id].name.to_string()
    }

    fn add_waiter(&self, pid: ProcessId) {
        self.sim.inner.borrow_mut().condvars[self.id]
            .waiters
            .push_back(pid);
    }

    fn remove_waiter(&self, pid: ProcessId) {
        self.sim.inner.borrow_mut().condvars[self.id]
            .waiters
            .retain(|p| *p != pid);
    }
}

/// Future returned by [`CondVar::wait_until`].
pub struct WaitUntil<P: Fn() -> bool> {
    cv: CondVar,
    pred: P,
    registered: std::cell::Cell<bool>,
}

impl<P: Fn() -> bool> Future for WaitUntil<P> {
    type Output = ();

    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        let pid = self.cv.sim.current_pid();
        if !self.registered.get() {
            self.registered.set(true);
            self.cv.add_waiter(pid);
            let now = self.cv.sim.now();
            self.cv.sim.schedule_wake(pid, now, "await");
            return Poll::Pending;
        }
        if (self.pred)() {
            self.cv.remove_waiter(pid);
            Poll::Ready(())
        } else {
            Poll::Pending
        }
    }
}
