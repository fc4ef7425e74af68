//! Input arrivals: timestamped items generated from a stochastic model, a
//! fixed interval, or a replayed trace file, plus the pump process that
//! deposits them into the receiver buffer.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::sim::{Sim, SimTime};

/// One item hitting the receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalEvent {
    pub at: SimTime,
    pub size_bytes: u64,
}

/// How inter-arrival gaps are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalModel {
    /// Poisson arrivals: i.i.d. exponential gaps with the given mean.
    Exponential { mean_ms: u64 },
    /// One item every `interval_ms` ticks.
    Deterministic { interval_ms: u64 },
    /// Replay of a pre-validated timestamp/size list.
    Trace { events: Vec<ArrivalEvent> },
}

/// Stateful arrival stream: yields events in non-decreasing time order.
pub struct ArrivalSequence {
    model: ArrivalModel,
    item_size_bytes: u64,
    prev: SimTime,
    trace_pos: usize,
}

impl ArrivalSequence {
    pub fn new(model: ArrivalModel, item_size_bytes: u64) -> Self {
        assert!(
            item_size_bytes > 0 || matches!(model, ArrivalModel::Trace { .. }),
            "generated arrivals need a positive item size"
        );
        ArrivalSequence {
            model,
            item_size_bytes,
            prev: SimTime::ZERO,
            trace_pos: 0,
        }
    }

    /// The next arrival, or `None` once a trace is exhausted (generative
    /// models never end). Generated gaps are always at least one tick.
    pub fn next_arrival(&mut self, rng: &mut ChaCha8Rng) -> Option<ArrivalEvent> {
        let gap = match &self.model {
            ArrivalModel::Exponential { mean_ms } => {
                // Inverse-CDF draw with u in (0, 1], rounded to whole ticks.
                let u = 1.0 - rng.gen::<f64>();
                let exact = -(*mean_ms as f64) * u.ln();
                (exact.round() as u64).max(1)
            }
            ArrivalModel::Deterministic { interval_ms } => *interval_ms,
            ArrivalModel::Trace { events } => {
                let ev = events.get(self.trace_pos)?.clone();
                self.trace_pos += 1;
                self.prev = ev.at;
                return Some(ev);
            }
        };
        self.prev = self.prev + gap;
        Some(ArrivalEvent {
            at: self.prev,
            size_bytes: self.item_size_bytes,
        })
    }
}

/// Parse a trace file body: CSV lines `at_ms,size_bytes` with an optional
/// header. Reports every malformed line, non-monotone timestamp, and
/// zero-size item.
pub fn parse_trace(text: &str) -> Result<Vec<ArrivalEvent>, Vec<String>> {
    let mut events = Vec::new();
    let mut violations = Vec::new();
    let mut prev: Option<u64> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if idx == 0 && fields.first().map(|f| f.parse::<u64>().is_err()) == Some(true) {
            // Header row.
            if fields != ["at_ms", "size_bytes"] {
                violations.push(format!(
                    "trace line {lineno}: expected header `at_ms,size_bytes`, got `{line}`"
                ));
            }
            continue;
        }
        if fields.len() != 2 {
            violations.push(format!(
                "trace line {lineno}: expected 2 fields `at_ms,size_bytes`, got {}",
                fields.len()
            ));
            continue;
        }
        let at = fields[0].parse::<u64>();
        let size = fields[1].parse::<u64>();
        match (at, size) {
            (Ok(at), Ok(size)) => {
                if let Some(p) = prev {
                    if at < p {
                        violations.push(format!(
                            "trace line {lineno}: timestamp {at} is earlier than previous {p}"
                        ));
                    }
                }
                if size == 0 {
                    violations.push(format!("trace line {lineno}: item size must be positive"));
                }
                prev = Some(at);
                events.push(ArrivalEvent {
                    at: SimTime::from_ms(at),
                    size_bytes: size,
                });
            }
            _ => violations.push(format!(
                "trace line {lineno}: fields must be unsigned integers, got `{line}`"
            )),
        }
    }
    if violations.is_empty() {
        Ok(events)
    } else {
        Err(violations)
    }
}

/// Process that replays an arrival sequence into the receiver in real
/// simulated time.
///
/// Deposits happen strictly after any event already queued at the arrival
/// tick: an item landing exactly on a batch-cut boundary goes to the batch
/// after the cut, never the one being sealed.
pub async fn stream_pump<F: Fn(&ArrivalEvent)>(
    sim: Sim,
    mut seq: ArrivalSequence,
    rng: Rc<std::cell::RefCell<ChaCha8Rng>>,
    deposit: F,
) {
    loop {
        let next = seq.next_arrival(&mut rng.borrow_mut());
        let Some(ev) = next else { return };
        sim.sleep_until(ev.at).await;
        sim.yield_now().await;
        deposit(&ev);
    }
}
