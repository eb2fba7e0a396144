//! Benchmarking toolkit for Redis-protocol in-memory key-value stores.
//!
//! The crate drives reproducible load against any RESP2 endpoint and turns
//! the observations into comparable numbers:
//!
//! - [`zipf`]: skewed key-access generation by inverse-CDF sampling over a
//!   precomputed Zipfian table, deterministic per seed.
//! - [`resp`]: a minimal pipelining client for GET/SET/INFO over TCP.
//! - [`workload`]: preloading a key space to a memory-pressure target and
//!   running timed, closed-loop benchmark runs and concurrency sweeps.
//! - [`metrics`]: latency recording, percentile queries, throughput
//!   normalization, resource sampling, and the persisted run record.
//! - [`stats`]: Welch's t-test with Welch-Satterthwaite degrees of freedom
//!   for deciding whether two systems actually differ.
//! - [`mock`]: an in-process RESP2 server for tests and benches.

pub mod metrics;
pub mod mock;
pub mod resp;
pub mod rng;
pub mod stats;
pub mod workload;
pub mod zipf;

pub use metrics::{EfficiencyWeights, LatencyRecorder, ResourceSample, RunResult};
pub use resp::{Connection, Endpoint};
pub use stats::{SampleSet, TTestReport};
pub use workload::WorkloadSpec;
pub use zipf::{KeyMapping, ZipfianParams, ZipfianTable};
