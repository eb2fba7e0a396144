//! Workload specifications, memory-pressure preloading, and the timed
//! run/sweep drivers.
//!
//! A run is closed-loop: every connection is owned by one worker that waits
//! for its replies before issuing the next batch. Workers share only the
//! immutable Zipfian table and key mapping; each has a private rank stream
//! and a private operation-type stream so key hotness and operation type
//! cannot correlate. Samples completed before the warmup deadline feed a
//! separate ramp diagnostic and are excluded from all reported statistics.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Barrier, OnceLock};
use std::time::{Duration, Instant, SystemTime};

use serde::{Deserialize, Serialize};

use crate::metrics::{
    sample_resources, InfoSchema, LatencyRecorder, ResourceSample, RunParams, RunResult,
    SampleSource, SeedRecord, SCHEMA_VERSION,
};
use crate::resp::{Command, CommandBatch, Connection, Endpoint, ReplyKind, RespError};
use crate::rng::{derive_seed, printable_payload, SplitMix64};
use crate::zipf::{KeyMapping, KeyScheme, ZipfError, ZipfianParams, ZipfianTable};

pub const DEFAULT_BASE_SEED: u64 = 42;
pub const DEFAULT_REPETITIONS: u32 = 5;
pub const DEFAULT_COOLDOWN: Duration = Duration::from_secs(10);
const RESOURCE_SAMPLE_INTERVAL: Duration = Duration::from_secs(5);
const PRELOAD_BATCH: usize = 64;
const PRELOAD_PAYLOAD_SALT: u64 = 0xF00D;
const RESIDENCY_PROBES: u64 = 16;

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),
    #[error("invalid preload plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Resp(#[from] RespError),
    #[error(transparent)]
    Zipf(#[from] ZipfError),
    #[error("preload interrupted (completed rank ranges {completed:?}): {reason}")]
    PreloadInterrupted {
        completed: Vec<(u64, u64)>,
        reason: String,
    },
    #[error("only {survivors} of {total} connections survived (need {required})")]
    TooManyConnectionFailures {
        survivors: u32,
        total: u32,
        required: u32,
    },
    #[error("key-space residency check failed: {0}")]
    ResidencyCheck(String),
    #[error("run state may only advance forward: {0}")]
    InvalidStateTransition(String),
}

/// Full description of one benchmark configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub name: String,
    pub set_ratio: f64,
    pub get_ratio: f64,
    pub skew: f64,
    pub key_count: u64,
    pub value_size: u64,
    pub duration_secs: f64,
    pub warmup_secs: f64,
    pub concurrency_levels: Vec<u32>,
    pub pipeline_depth: u32,
    pub base_seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let err = |m: String| Err(WorkloadError::InvalidSpec(m));
        if !(0.0..=1.0).contains(&self.set_ratio) || !(0.0..=1.0).contains(&self.get_ratio) {
            return err("set_ratio and get_ratio must lie in [0,1]".into());
        }
        if (self.set_ratio + self.get_ratio - 1.0).abs() > 1e-9 {
            return err(format!(
                "set_ratio + get_ratio must equal 1, got {}",
                self.set_ratio + self.get_ratio
            ));
        }
        if !self.duration_secs.is_finite() || self.duration_secs <= 0.0 {
            return err("duration_secs must be positive".into());
        }
        if self.warmup_secs < 0.0 || self.warmup_secs >= self.duration_secs {
            return err("warmup_secs must satisfy 0 <= warmup < duration".into());
        }
        if self.key_count == 0 {
            return err("key_count must be at least 1".into());
        }
        if self.value_size == 0 {
            return err("value_size must be at least 1".into());
        }
        if self.pipeline_depth == 0 {
            return err("pipeline_depth must be at least 1".into());
        }
        if !self.skew.is_finite() || self.skew < 0.0 {
            return err(format!("skew must be finite and non-negative, got {}", self.skew));
        }
        if !self.concurrency_levels.windows(2).all(|w| w[0] < w[1]) {
            return err("concurrency_levels must be strictly increasing".into());
        }
        if self.concurrency_levels.contains(&0) {
            return err("concurrency levels must be positive".into());
        }
        Ok(())
    }

    fn params_record(&self) -> RunParams {
        RunParams {
            set_ratio: self.set_ratio,
            get_ratio: self.get_ratio,
            skew: self.skew,
            key_count: self.key_count,
            value_size: self.value_size,
            duration_secs: self.duration_secs,
            warmup_secs: self.warmup_secs,
            pipeline_depth: self.pipeline_depth,
        }
    }
}

/// The two built-in configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinWorkload {
    /// Write-heavy: 50% SET / 50% GET, skew 0.9.
    A,
    /// Read-heavy: 5% SET / 95% GET, skew 1.4.
    B,
}

impl std::str::FromStr for BuiltinWorkload {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "A" | "a" => Ok(BuiltinWorkload::A),
            "B" | "b" => Ok(BuiltinWorkload::B),
            other => Err(format!("unknown builtin workload '{other}' (expected A or B)")),
        }
    }
}

pub fn builtin_workload(which: BuiltinWorkload) -> WorkloadSpec {
    let (name, set_ratio, skew) = match which {
        BuiltinWorkload::A => ("A", 0.5, 0.9),
        BuiltinWorkload::B => ("B", 0.05, 1.4),
    };
    WorkloadSpec {
        name: name.to_string(),
        set_ratio,
        get_ratio: 1.0 - set_ratio,
        skew,
        // Sized for a 1 KiB value plus per-key overhead filling 75% of an
        // 8 GiB memory limit.
        key_count: compute_preload_keycount(8 * (1u64 << 30), 0.75, 1024, 300)
            .expect("builtin sizing is valid"),
        value_size: 1024,
        duration_secs: 300.0,
        warmup_secs: 60.0,
        concurrency_levels: (1..=10).map(|i| i * 50).collect(),
        pipeline_depth: 1,
        base_seed: DEFAULT_BASE_SEED,
    }
}

/// Number of keys that fill `target_fill` of `memory_budget` at
/// `value_size + overhead` bytes per key.
pub fn compute_preload_keycount(
    memory_budget: u64,
    target_fill: f64,
    value_size: u64,
    overhead: u64,
) -> Result<u64, WorkloadError> {
    if memory_budget == 0 || value_size == 0 || overhead == 0 {
        return Err(WorkloadError::InvalidPlan(
            "memory_budget, value_size and overhead must be positive".into(),
        ));
    }
    if !(target_fill > 0.0 && target_fill <= 1.0) {
        return Err(WorkloadError::InvalidPlan(format!(
            "target_fill must lie in (0,1], got {target_fill}"
        )));
    }
    Ok((memory_budget as f64 * target_fill / (value_size + overhead) as f64).floor() as u64)
}

/// How many keys to load, and the sizing inputs behind that number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreloadPlan {
    pub key_count: u64,
    pub value_size: u64,
    pub overhead_per_key: u64,
    pub target_fill: f64,
    pub memory_budget: u64,
}

impl PreloadPlan {
    pub fn from_budget(
        memory_budget: u64,
        target_fill: f64,
        value_size: u64,
        overhead_per_key: u64,
    ) -> Result<Self, WorkloadError> {
        let key_count =
            compute_preload_keycount(memory_budget, target_fill, value_size, overhead_per_key)?;
        Ok(Self {
            key_count,
            value_size,
            overhead_per_key,
            target_fill,
            memory_budget,
        })
    }

    /// Plan for an explicit key count (budget back-computed so the sizing
    /// identity still holds).
    pub fn for_key_count(key_count: u64, value_size: u64, overhead_per_key: u64) -> Result<Self, WorkloadError> {
        if key_count == 0 {
            return Err(WorkloadError::InvalidPlan("key_count must be positive".into()));
        }
        Ok(Self {
            key_count,
            value_size,
            overhead_per_key,
            target_fill: 1.0,
            memory_budget: key_count * (value_size + overhead_per_key),
        })
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let expected = compute_preload_keycount(
            self.memory_budget,
            self.target_fill,
            self.value_size,
            self.overhead_per_key,
        )?;
        if expected != self.key_count {
            return Err(WorkloadError::InvalidPlan(format!(
                "key_count {} does not match sizing (expected {expected})",
                self.key_count
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreloadReport {
    pub key_count: u64,
    pub elapsed: Duration,
    pub errors_total: u64,
    pub used_memory_after: Option<u64>,
    pub failed: bool,
}

/// Issues exactly one SET per rank in `1..=key_count`, split into contiguous
/// chunks across `parallelism` connections. A transport failure mid-load
/// yields a resumable error carrying the completed rank ranges.
pub fn preload(
    endpoint: &Endpoint,
    plan: &PreloadPlan,
    mapping: &KeyMapping,
    parallelism: usize,
) -> Result<PreloadReport, WorkloadError> {
    plan.validate()?;
    if mapping.key_count() != plan.key_count {
        return Err(WorkloadError::InvalidPlan(format!(
            "mapping covers {} keys but plan holds {}",
            mapping.key_count(),
            plan.key_count
        )));
    }
    let started = Instant::now();
    let n = plan.key_count;
    let workers = parallelism.clamp(1, n.min(64) as usize) as u64;
    let payload = Arc::new(printable_payload(
        derive_seed(PRELOAD_PAYLOAD_SALT, plan.value_size),
        plan.value_size as usize,
    ));
    let mapping = Arc::new(mapping.clone());

    struct ChunkOutcome {
        start: u64,
        confirmed: u64,
        errors: u64,
        failure: Option<String>,
    }

    let chunk = n.div_ceil(workers);
    let outcomes: Vec<ChunkOutcome> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let lo = w * chunk + 1;
            if lo > n {
                break;
            }
            let hi = (lo + chunk - 1).min(n);
            let endpoint = endpoint.clone();
            let payload = Arc::clone(&payload);
            let mapping = Arc::clone(&mapping);
            handles.push(scope.spawn(move || {
                let mut out = ChunkOutcome {
                    start: lo,
                    confirmed: 0,
                    errors: 0,
                    failure: None,
                };
                let mut conn = match Connection::connect(&endpoint) {
                    Ok(c) => c,
                    Err(e) => {
                        out.failure = Some(e.to_string());
                        return out;
                    }
                };
                let mut rank = lo;
                while rank <= hi {
                    let batch_hi = (rank + PRELOAD_BATCH as u64 - 1).min(hi);
                    let commands: Vec<Command> = (rank..=batch_hi)
                        .map(|r| {
                            Command::Set(
                                mapping.rank_to_key(r).expect("rank within mapping"),
                                payload.as_ref().clone(),
                            )
                        })
                        .collect();
                    let batch = CommandBatch::new(commands).expect("non-empty batch");
                    match conn.execute_batch(&batch) {
                        Ok(replies) => {
                            out.errors += replies
                                .iter()
                                .filter(|r| matches!(r.kind, ReplyKind::Error(_)))
                                .count() as u64;
                            out.confirmed += replies.len() as u64;
                        }
                        Err(e) => {
                            out.failure = Some(e.to_string());
                            return out;
                        }
                    }
                    rank = batch_hi + 1;
                }
                out
            }));
        }
        handles.into_iter().map(|h| h.join().expect("preload worker")).collect()
    });

    let errors_total: u64 = outcomes.iter().map(|o| o.errors).sum();
    let failures: Vec<&ChunkOutcome> = outcomes.iter().filter(|o| o.failure.is_some()).collect();
    if !failures.is_empty() {
        let completed: Vec<(u64, u64)> = outcomes
            .iter()
            .filter(|o| o.confirmed > 0)
            .map(|o| (o.start, o.start + o.confirmed - 1))
            .collect();
        let reason = failures
            .iter()
            .map(|o| o.failure.clone().unwrap())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(WorkloadError::PreloadInterrupted { completed, reason });
    }

    let used_memory_after = Connection::connect(endpoint)
        .and_then(|mut c| c.fetch_info("default"))
        .ok()
        .and_then(|info| info.get("used_memory").and_then(|v| v.parse::<u64>().ok()));

    let report = PreloadReport {
        key_count: n,
        elapsed: started.elapsed(),
        errors_total,
        used_memory_after,
        failed: errors_total > 0,
    };
    eprintln!(
        "preload keys={} elapsed_s={:.3} errors={} used_memory={}",
        report.key_count,
        report.elapsed.as_secs_f64(),
        report.errors_total,
        report
            .used_memory_after
            .map_or_else(|| "unknown".to_string(), |v| v.to_string()),
    );
    Ok(report)
}

/// GETs a spread of ranks and requires every one to be present, proving the
/// preloaded key space is still resident (a miss means eviction or a missing
/// preload).
pub fn verify_residency(endpoint: &Endpoint, mapping: &KeyMapping) -> Result<(), WorkloadError> {
    let n = mapping.key_count();
    let probes = RESIDENCY_PROBES.min(n);
    let mut conn = Connection::connect(endpoint)?;
    let mut missing = Vec::new();
    for i in 0..probes {
        // Evenly spread including both ends.
        let rank = if probes == 1 {
            1
        } else {
            1 + i * (n - 1) / (probes - 1)
        };
        let key = mapping.rank_to_key(rank)?;
        let replies = conn.execute_batch(&CommandBatch::single(Command::Get(key)))?;
        if matches!(replies[0].kind, ReplyKind::Nil) {
            missing.push(rank);
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(WorkloadError::ResidencyCheck(format!(
            "ranks {missing:?} absent of {n} (run preload first, or the server evicted)"
        )))
    }
}

/// Lifecycle of one run; states only advance forward, with abort reachable
/// from any live state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunState {
    Warming,
    Measuring,
    Draining,
    Done,
    Aborted,
}

#[derive(Debug)]
pub struct RunHandle {
    pub concurrency: u32,
    pub started_at: SystemTime,
    state: RunState,
}

impl RunHandle {
    pub fn new(concurrency: u32) -> Self {
        Self {
            concurrency,
            started_at: SystemTime::now(),
            state: RunState::Warming,
        }
    }

    pub fn state(&self) -> RunState {
        self.state
    }

    pub fn advance(&mut self, to: RunState) -> Result<(), WorkloadError> {
        let order = |s: RunState| match s {
            RunState::Warming => 0,
            RunState::Measuring => 1,
            RunState::Draining => 2,
            RunState::Done => 3,
            RunState::Aborted => 4,
        };
        let legal = match to {
            RunState::Aborted => self.state != RunState::Done,
            _ => order(to) == order(self.state) + 1 && self.state != RunState::Aborted,
        };
        if !legal {
            return Err(WorkloadError::InvalidStateTransition(format!(
                "{:?} -> {to:?}",
                self.state
            )));
        }
        self.state = to;
        Ok(())
    }
}

/// Per-run identity and resource-sampling configuration.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub system: String,
    pub repetition: u32,
    pub info_schema: InfoSchema,
    /// Fallback resource series when the server's INFO is unavailable.
    pub resource_file: Option<PathBuf>,
    pub key_scheme: KeyScheme,
    pub permutation_seed: u64,
}

impl Default for RunContext {
    fn default() -> Self {
        Self {
            system: "unnamed".to_string(),
            repetition: 1,
            info_schema: InfoSchema::default(),
            resource_file: None,
            key_scheme: KeyScheme::IdentityRank,
            permutation_seed: 0,
        }
    }
}

/// Seed of the (concurrency, repetition) cell, derived so every cell of a
/// sweep draws from a distinct stream.
pub fn cell_seed(base_seed: u64, concurrency: u32, repetition: u32) -> u64 {
    derive_seed(derive_seed(base_seed, concurrency as u64), repetition as u64)
}

struct WorkerOutput {
    recorder: LatencyRecorder,
    ops: u64,
    gets: u64,
    sets: u64,
    errors: u64,
    misses: u64,
    warmup_ops: u64,
    sent: u64,
    received: u64,
    dropped: bool,
    drop_reason: Option<String>,
}

/// Drives `concurrency` closed-loop connections against `endpoint` for
/// `spec.duration_secs`, excluding the first `spec.warmup_secs` from every
/// reported statistic.
pub fn run(
    endpoint: &Endpoint,
    spec: &WorkloadSpec,
    concurrency: u32,
    ctx: &RunContext,
) -> Result<RunResult, WorkloadError> {
    spec.validate()?;
    if concurrency == 0 {
        return Err(WorkloadError::InvalidSpec("concurrency must be at least 1".into()));
    }
    let run_seed = cell_seed(spec.base_seed, concurrency, ctx.repetition);
    let table = Arc::new(ZipfianTable::build(ZipfianParams::new(
        spec.key_count,
        spec.skew,
    )?)?);
    let mapping = Arc::new(KeyMapping::new(
        ctx.key_scheme,
        ctx.permutation_seed,
        "key:",
        spec.key_count,
    )?);
    let payload = Arc::new(printable_payload(
        derive_seed(run_seed, 0),
        spec.value_size as usize,
    ));

    let mut handle = RunHandle::new(concurrency);
    let warmup = Duration::from_secs_f64(spec.warmup_secs);
    let total = Duration::from_secs_f64(spec.duration_secs);
    let warmup_bins = Arc::new(
        (0..(spec.warmup_secs.ceil() as usize + 1))
            .map(|_| AtomicU64::new(0))
            .collect::<Vec<_>>(),
    );
    let abort = Arc::new(AtomicBool::new(false));
    let dropped = Arc::new(AtomicU64::new(0));
    let start_cell: Arc<OnceLock<Instant>> = Arc::new(OnceLock::new());
    // Two rendezvous: (1) all workers connected, (2) start instant published.
    let ready = Arc::new(Barrier::new(concurrency as usize + 1));
    let go = Arc::new(Barrier::new(concurrency as usize + 1));

    let min_survivors = (0.9 * concurrency as f64).ceil() as u32;

    let (outputs, resource_series, mut warnings, start) = std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(concurrency as usize);
        for w in 0..concurrency {
            let endpoint = endpoint.clone();
            let table = Arc::clone(&table);
            let mapping = Arc::clone(&mapping);
            let payload = Arc::clone(&payload);
            let warmup_bins = Arc::clone(&warmup_bins);
            let abort = Arc::clone(&abort);
            let dropped = Arc::clone(&dropped);
            let start_cell = Arc::clone(&start_cell);
            let ready = Arc::clone(&ready);
            let go = Arc::clone(&go);
            let spec = spec.clone();
            handles.push(scope.spawn(move || {
                worker_loop(WorkerSetup {
                    index: w,
                    endpoint,
                    spec,
                    run_seed,
                    table,
                    mapping,
                    payload,
                    warmup,
                    total,
                    warmup_bins,
                    abort,
                    dropped,
                    min_survivors,
                    concurrency,
                    start_cell,
                    ready,
                    go,
                })
            }));
        }

        ready.wait();
        let start = Instant::now();
        start_cell.set(start).expect("start set once");
        go.wait();

        status_line(ctx, spec, concurrency, "warming", None);

        // Resource sampler on its own connection and schedule.
        let sampler = {
            let endpoint = endpoint.clone();
            let schema = ctx.info_schema.clone();
            let resource_file = ctx.resource_file.clone();
            let abort = Arc::clone(&abort);
            scope.spawn(move || sample_resources_loop(endpoint, schema, resource_file, start, warmup, total, abort))
        };

        sleep_until(start + warmup);
        handle.advance(RunState::Measuring).expect("forward");
        status_line(ctx, spec, concurrency, "measuring", None);
        sleep_until(start + total);
        handle.advance(RunState::Draining).expect("forward");
        status_line(ctx, spec, concurrency, "draining", None);

        let outputs: Vec<WorkerOutput> =
            handles.into_iter().map(|h| h.join().expect("worker thread")).collect();
        let (samples, sample_warnings) = sampler.join().expect("sampler thread");
        (outputs, samples, sample_warnings, start)
    });

    let elapsed_total = start.elapsed();
    let survivors = concurrency - dropped.load(Ordering::SeqCst) as u32;
    if survivors < min_survivors {
        status_line(ctx, spec, concurrency, "aborted", None);
        return Err(WorkloadError::TooManyConnectionFailures {
            survivors,
            total: concurrency,
            required: min_survivors,
        });
    }

    let mut recorder = LatencyRecorder::new();
    let (mut ops, mut gets, mut sets, mut errors, mut misses) = (0u64, 0u64, 0u64, 0u64, 0u64);
    let (mut sent, mut received, mut warmup_ops) = (0u64, 0u64, 0u64);
    let mut conn_dropped = 0u32;
    for out in &outputs {
        recorder.merge(&out.recorder);
        ops += out.ops;
        gets += out.gets;
        sets += out.sets;
        errors += out.errors;
        misses += out.misses;
        warmup_ops += out.warmup_ops;
        sent += out.sent;
        received += out.received;
        if out.dropped {
            conn_dropped += 1;
            if let Some(reason) = &out.drop_reason {
                warnings.push(format!("connection {reason}"));
            }
        }
    }

    let elapsed_measured = (elapsed_total.as_secs_f64() - spec.warmup_secs).max(0.0);
    let throughput = if elapsed_measured > 0.0 {
        ops as f64 / elapsed_measured
    } else {
        0.0
    };
    let (p50, p99, p999) = if recorder.count() > 0 {
        (
            recorder.percentile(50.0).expect("non-empty").as_micros() as u64,
            recorder.percentile(99.0).expect("non-empty").as_micros() as u64,
            recorder.percentile(99.9).expect("non-empty").as_micros() as u64,
        )
    } else {
        (0, 0, 0)
    };

    if misses > 0 {
        warnings.push(format!(
            "{misses} GET miss(es) on a preloaded key space — possible eviction"
        ));
    }
    let failed = ops == 0 || (errors as f64) > 0.01 * ops as f64;

    let result = RunResult {
        schema_version: SCHEMA_VERSION,
        system: ctx.system.clone(),
        workload: spec.name.clone(),
        concurrency,
        repetition: ctx.repetition,
        params: spec.params_record(),
        ops_total: ops,
        gets_total: gets,
        sets_total: sets,
        errors_total: errors,
        misses_total: misses,
        commands_sent: sent,
        replies_received: received,
        commands_lost: sent - received,
        connections_dropped: conn_dropped,
        elapsed_measured_s: elapsed_measured,
        throughput_ops_s: throughput,
        p50_us: p50,
        p99_us: p99,
        p999_us: p999,
        latency_mode: recorder.mode(),
        overflow_samples: recorder.overflow(),
        warmup_ops,
        warmup_ops_per_sec: warmup_bins.iter().map(|b| b.load(Ordering::SeqCst)).collect(),
        resource_series,
        failed,
        warnings,
        seed_record: SeedRecord {
            base_seed: spec.base_seed,
            run_seed,
        },
    };
    handle.advance(RunState::Done).expect("forward");
    status_line(ctx, spec, concurrency, "done", Some(&result));
    Ok(result)
}

struct WorkerSetup {
    index: u32,
    endpoint: Endpoint,
    spec: WorkloadSpec,
    run_seed: u64,
    table: Arc<ZipfianTable>,
    mapping: Arc<KeyMapping>,
    payload: Arc<Vec<u8>>,
    warmup: Duration,
    total: Duration,
    warmup_bins: Arc<Vec<AtomicU64>>,
    abort: Arc<AtomicBool>,
    dropped: Arc<AtomicU64>,
    min_survivors: u32,
    concurrency: u32,
    start_cell: Arc<OnceLock<Instant>>,
    ready: Arc<Barrier>,
    go: Arc<Barrier>,
}

fn worker_loop(setup: WorkerSetup) -> WorkerOutput {
    let mut out = WorkerOutput {
        recorder: LatencyRecorder::new(),
        ops: 0,
        gets: 0,
        sets: 0,
        errors: 0,
        misses: 0,
        warmup_ops: 0,
        sent: 0,
        received: 0,
        dropped: false,
        drop_reason: None,
    };
    let conn = Connection::connect(&setup.endpoint);
    if conn.is_err() {
        register_drop(&setup, &mut out, format!("{} connect failed: {}", setup.index, conn.as_ref().err().unwrap()));
    }
    setup.ready.wait();
    setup.go.wait();
    let start = *setup.start_cell.get().expect("published before go");
    let Ok(mut conn) = conn else {
        return out;
    };

    let mut rank_stream = setup.table.stream(derive_seed(setup.run_seed, 2 * setup.index as u64 + 1));
    let mut op_rng = SplitMix64::new(derive_seed(setup.run_seed, 2 * setup.index as u64 + 2));
    let warmup_deadline = start + setup.warmup;
    let end = start + setup.total;
    let depth = setup.spec.pipeline_depth as usize;
    let mut kinds = Vec::with_capacity(depth);

    while Instant::now() < end && !setup.abort.load(Ordering::Relaxed) {
        kinds.clear();
        let mut commands = Vec::with_capacity(depth);
        for _ in 0..depth {
            let rank = rank_stream.next().expect("infinite stream");
            let key = setup.mapping.rank_to_key(rank).expect("rank in range");
            let is_set = op_rng.next_f64() < setup.spec.set_ratio;
            kinds.push(is_set);
            commands.push(if is_set {
                Command::Set(key, setup.payload.as_ref().clone())
            } else {
                Command::Get(key)
            });
        }
        let batch = CommandBatch::new(commands).expect("depth >= 1");
        let batch_started = Instant::now();
        match conn.execute_batch(&batch) {
            Ok(replies) => {
                for (reply, &is_set) in replies.iter().zip(&kinds) {
                    let completed_at = batch_started + reply.rtt;
                    if completed_at >= warmup_deadline {
                        out.recorder.record(reply.rtt);
                        out.ops += 1;
                        if is_set {
                            out.sets += 1;
                        } else {
                            out.gets += 1;
                        }
                        if matches!(reply.kind, ReplyKind::Error(_)) {
                            out.errors += 1;
                        }
                        if !is_set && matches!(reply.kind, ReplyKind::Nil) {
                            out.misses += 1;
                        }
                    } else {
                        out.warmup_ops += 1;
                        let bin = (completed_at - start).as_secs_f64().floor() as usize;
                        let bin = bin.min(setup.warmup_bins.len() - 1);
                        setup.warmup_bins[bin].fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
            Err(e) => {
                register_drop(&setup, &mut out, format!("{} dropped: {e}", setup.index));
                break;
            }
        }
    }
    out.sent = conn.commands_sent();
    out.received = conn.replies_received();
    out
}

fn register_drop(setup: &WorkerSetup, out: &mut WorkerOutput, reason: String) {
    out.dropped = true;
    out.drop_reason = Some(reason);
    let dropped_now = setup.dropped.fetch_add(1, Ordering::SeqCst) + 1;
    let survivors = setup.concurrency - dropped_now as u32;
    if survivors < setup.min_survivors {
        setup.abort.store(true, Ordering::SeqCst);
    }
}

fn sleep_until(deadline: Instant) {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        std::thread::sleep((deadline - now).min(Duration::from_millis(50)));
    }
}

/// Samples the server every [`RESOURCE_SAMPLE_INTERVAL`] during the measured
/// window, plus one closing sample at the end. Falls back to the external
/// file when INFO is unavailable and a file is configured.
fn sample_resources_loop(
    endpoint: Endpoint,
    schema: InfoSchema,
    resource_file: Option<PathBuf>,
    start: Instant,
    warmup: Duration,
    total: Duration,
    abort: Arc<AtomicBool>,
) -> (Vec<ResourceSample>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut samples = Vec::new();
    let mut conn = match Connection::connect(&endpoint) {
        Ok(c) => Some(c),
        Err(e) => {
            warnings.push(format!("resource sampler could not connect: {e}"));
            None
        }
    };
    let end = start + total;
    let mut next = start + warmup;
    let mut info_unavailable = false;
    while !abort.load(Ordering::Relaxed) {
        sleep_until(next.min(end));
        let now = Instant::now();
        let ts = (now - start).as_secs_f64();
        if let Some(c) = conn.as_mut() {
            match sample_resources(c, &schema, ts) {
                Ok(sample) => samples.push(sample),
                Err(RespError::InfoUnavailable(e)) => {
                    info_unavailable = true;
                    warnings.push(format!("INFO unavailable: {e}"));
                    if resource_file.is_some() {
                        break;
                    }
                    samples.push(missing_sample(ts));
                }
                Err(e) => {
                    warnings.push(format!("resource sampling stopped: {e}"));
                    conn = None;
                }
            }
        } else if resource_file.is_none() {
            samples.push(missing_sample(ts));
        }
        if now >= end {
            break;
        }
        next = (now + RESOURCE_SAMPLE_INTERVAL).min(end);
    }
    if (info_unavailable || conn.is_none()) && samples.iter().all(|s| !s.is_complete()) {
        if let Some(path) = &resource_file {
            match crate::metrics::load_resource_csv(path) {
                Ok(file_samples) => {
                    samples = file_samples;
                    warnings.push("resource series loaded from external file".to_string());
                }
                Err(e) => warnings.push(format!("external resource file unusable: {e}")),
            }
        }
    }
    (samples, warnings)
}

fn missing_sample(ts: f64) -> ResourceSample {
    ResourceSample {
        timestamp_s: ts,
        cpu_seconds_total: None,
        used_memory_bytes: None,
        source: SampleSource::ServerInfo,
    }
}

fn status_line(
    ctx: &RunContext,
    spec: &WorkloadSpec,
    concurrency: u32,
    state: &str,
    result: Option<&RunResult>,
) {
    match result {
        Some(r) => eprintln!(
            "run system={} workload={} concurrency={} rep={} state={} ops={} throughput={:.0} p99_us={} errors={} failed={}",
            ctx.system, spec.name, concurrency, ctx.repetition, state,
            r.ops_total, r.throughput_ops_s, r.p99_us, r.errors_total, r.failed
        ),
        None => eprintln!(
            "run system={} workload={} concurrency={} rep={} state={}",
            ctx.system, spec.name, concurrency, ctx.repetition, state
        ),
    }
}

/// Sweep controls beyond the spec itself.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub repetitions: u32,
    pub cooldown: Duration,
    pub verify_residency: bool,
    /// Subset of (concurrency, repetition) cells to execute; `None` runs all.
    pub cells: Option<Vec<(u32, u32)>>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            repetitions: DEFAULT_REPETITIONS,
            cooldown: DEFAULT_COOLDOWN,
            verify_residency: true,
            cells: None,
        }
    }
}

#[derive(Debug, Default)]
pub struct SweepOutcome {
    pub results: Vec<RunResult>,
    /// (concurrency, repetition, reason) of runs that could not complete.
    pub aborted: Vec<(u32, u32, String)>,
}

/// All (concurrency, repetition) cells of a sweep in execution order.
pub fn sweep_cells(spec: &WorkloadSpec, repetitions: u32) -> Vec<(u32, u32)> {
    spec.concurrency_levels
        .iter()
        .flat_map(|&c| (1..=repetitions).map(move |r| (c, r)))
        .collect()
}

/// Runs every cell of the sweep back-to-back with a cool-down pause between
/// runs, invoking `on_result` as each run completes. Failed runs are
/// recorded and the sweep continues.
pub fn sweep_with(
    endpoint: &Endpoint,
    spec: &WorkloadSpec,
    ctx: &RunContext,
    options: &SweepOptions,
    mut on_result: impl FnMut(&RunResult),
) -> Result<SweepOutcome, WorkloadError> {
    spec.validate()?;
    if spec.concurrency_levels.is_empty() {
        return Err(WorkloadError::InvalidSpec(
            "sweep requires at least one concurrency level".into(),
        ));
    }
    if options.repetitions == 0 {
        return Err(WorkloadError::InvalidSpec("repetitions must be at least 1".into()));
    }
    let mapping = KeyMapping::new(ctx.key_scheme, ctx.permutation_seed, "key:", spec.key_count)?;
    let mut outcome = SweepOutcome::default();
    let mut first = true;
    for (concurrency, repetition) in sweep_cells(spec, options.repetitions) {
        if let Some(cells) = &options.cells {
            if !cells.contains(&(concurrency, repetition)) {
                continue;
            }
        }
        if !first && !options.cooldown.is_zero() {
            eprintln!(
                "sweep system={} workload={} state=cooldown secs={}",
                ctx.system,
                spec.name,
                options.cooldown.as_secs_f64()
            );
            std::thread::sleep(options.cooldown);
        }
        first = false;
        if options.verify_residency {
            if let Err(e) = verify_residency(endpoint, &mapping) {
                outcome.aborted.push((concurrency, repetition, e.to_string()));
                eprintln!(
                    "sweep system={} workload={} concurrency={} rep={} state=skipped reason={}",
                    ctx.system, spec.name, concurrency, repetition, e
                );
                continue;
            }
        }
        let run_ctx = RunContext {
            repetition,
            ..ctx.clone()
        };
        match run(endpoint, spec, concurrency, &run_ctx) {
            Ok(result) => {
                on_result(&result);
                outcome.results.push(result);
            }
            Err(e) => {
                outcome.aborted.push((concurrency, repetition, e.to_string()));
                eprintln!(
                    "sweep system={} workload={} concurrency={} rep={} state=failed reason={}",
                    ctx.system, spec.name, concurrency, repetition, e
                );
            }
        }
    }
    Ok(outcome)
}

/// Sweep with default context and options (5 repetitions, 10 s cool-down).
pub fn sweep(
    endpoint: &Endpoint,
    spec: &WorkloadSpec,
    repetitions: u32,
) -> Result<SweepOutcome, WorkloadError> {
    let options = SweepOptions {
        repetitions,
        ..Default::default()
    };
    sweep_with(endpoint, spec, &RunContext::default(), &options, |_| {})
}
