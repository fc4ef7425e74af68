//! Deterministic simulator for micro-batch stream processing: batches are
//! cut from an arrival buffer on a fixed interval, queued FIFO, and executed
//! as constraint-ordered stage graphs on a pool of workers, with per-batch
//! latency metrics collected along the way.

pub mod arrivals;
pub mod cluster;
pub mod config;
pub mod driver;
pub mod metrics;
pub mod runner;
pub mod sim;
pub mod workload;
