//! Latency recording, percentile queries, resource samples, and the
//! per-run result record.
//!
//! Percentiles follow the sorted-array convention: the k-th percentile of n
//! samples is the element at 1-based index `ceil(k*n/100)`. The recorder
//! keeps every sample exactly while it is affordable and switches to
//! logarithmic buckets beyond [`EXACT_SAMPLE_LIMIT`], where a percentile
//! query returns the upper edge of the bucket holding that index so tails
//! are never under-reported.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Schema version stamped on every persisted run record.
pub const SCHEMA_VERSION: u32 = 1;

/// Above this many samples a recorder converts itself to bucketed mode.
pub const EXACT_SAMPLE_LIMIT: usize = 1_000_000;

/// Recorder coverage: 1 microsecond to 60 seconds.
const BUCKET_MIN_NANOS: u64 = 1_000;
const BUCKET_MAX_NANOS: u64 = 60_000_000_000;
/// Relative bucket width (0.05%, comfortably under the 0.1% contract).
const BUCKET_RATIO: f64 = 1.0005;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no samples recorded")]
    NoData,
    #[error("percentile must lie in (0, 100], got {0}")]
    InvalidPercentile(f64),
    #[error("baseline throughput must be positive, got {0}")]
    InvalidBaseline(f64),
    #[error("efficiency denominator is not positive")]
    ZeroDenominator,
    #[error("weights must be non-negative with a positive sum")]
    InvalidWeights,
    #[error("resource file: {0}")]
    ResourceFile(String),
    #[error("record parse: {0}")]
    RecordParse(String),
    #[error("unsupported record schema_version {0}")]
    RecordVersion(u32),
}

fn bucket_edges() -> &'static [f64] {
    static EDGES: OnceLock<Vec<f64>> = OnceLock::new();
    EDGES.get_or_init(|| {
        let mut edges = Vec::new();
        let mut edge = BUCKET_MIN_NANOS as f64 * BUCKET_RATIO;
        while edge < BUCKET_MAX_NANOS as f64 {
            edges.push(edge);
            edge *= BUCKET_RATIO;
        }
        edges.push(edge); // final edge covers up to and past the max
        edges
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecorderMode {
    Exact,
    Bucketed,
}

#[derive(Debug, Clone)]
enum Samples {
    Exact(Vec<u64>),
    Bucketed(Vec<u64>),
}

/// Response-time collector supporting exact and bucketed percentile queries.
#[derive(Debug, Clone)]
pub struct LatencyRecorder {
    samples: Samples,
    count: u64,
    overflow: u64,
}

impl Default for LatencyRecorder {
    fn default() -> Self {
        Self::new()
    }
}

impl LatencyRecorder {
    /// Exact-mode recorder; converts itself to buckets past the sample limit.
    pub fn new() -> Self {
        Self {
            samples: Samples::Exact(Vec::new()),
            count: 0,
            overflow: 0,
        }
    }

    pub fn bucketed() -> Self {
        Self {
            samples: Samples::Bucketed(vec![0u64; bucket_edges().len()]),
            count: 0,
            overflow: 0,
        }
    }

    pub fn mode(&self) -> RecorderMode {
        match self.samples {
            Samples::Exact(_) => RecorderMode::Exact,
            Samples::Bucketed(_) => RecorderMode::Bucketed,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Samples clamped to the 1 µs .. 60 s coverage on the way in.
    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn record(&mut self, rtt: Duration) {
        let raw = rtt.as_nanos();
        let clamped = raw.clamp(BUCKET_MIN_NANOS as u128, BUCKET_MAX_NANOS as u128) as u64;
        if clamped as u128 != raw {
            self.overflow += 1;
        }
        if let Samples::Exact(v) = &mut self.samples {
            if v.len() >= EXACT_SAMPLE_LIMIT {
                self.convert_to_bucketed();
            }
        }
        match &mut self.samples {
            Samples::Exact(v) => v.push(clamped),
            Samples::Bucketed(buckets) => {
                let idx = bucket_index(clamped);
                buckets[idx] += 1;
            }
        }
        self.count += 1;
    }

    fn convert_to_bucketed(&mut self) {
        if let Samples::Exact(v) = &self.samples {
            let mut buckets = vec![0u64; bucket_edges().len()];
            for &ns in v {
                buckets[bucket_index(ns)] += 1;
            }
            self.samples = Samples::Bucketed(buckets);
        }
    }

    /// Folds `other` into `self`. The result is exact only when both sides
    /// are exact and the combined count stays within the exact limit, so a
    /// set of per-worker recorders merges to the same state in any order.
    pub fn merge(&mut self, other: &LatencyRecorder) {
        let combined = self.count + other.count;
        if combined > EXACT_SAMPLE_LIMIT as u64 || other.mode() == RecorderMode::Bucketed {
            self.convert_to_bucketed();
        }
        match (&mut self.samples, &other.samples) {
            (Samples::Exact(a), Samples::Exact(b)) => a.extend_from_slice(b),
            (Samples::Bucketed(a), Samples::Bucketed(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            (Samples::Bucketed(a), Samples::Exact(b)) => {
                for &ns in b {
                    a[bucket_index(ns)] += 1;
                }
            }
            (Samples::Exact(_), Samples::Bucketed(_)) => unreachable!("self converted above"),
        }
        self.count = combined;
        self.overflow += other.overflow;
    }

    /// k-th percentile, `k` in `(0, 100]`: the sample at 1-based index
    /// `ceil(k*n/100)`. Bucketed mode answers with the upper edge of the
    /// bucket containing that index.
    pub fn percentile(&mut self, k: f64) -> Result<Duration, MetricsError> {
        if !(k > 0.0 && k <= 100.0) {
            return Err(MetricsError::InvalidPercentile(k));
        }
        if self.count == 0 {
            return Err(MetricsError::NoData);
        }
        let n = self.count;
        let index = percentile_index(k, n);
        match &mut self.samples {
            Samples::Exact(v) => {
                v.sort_unstable();
                Ok(Duration::from_nanos(v[(index - 1) as usize]))
            }
            Samples::Bucketed(buckets) => {
                let mut seen = 0u64;
                for (i, &c) in buckets.iter().enumerate() {
                    seen += c;
                    if seen >= index {
                        // Floor keeps the reported edge at or above every
                        // integer-nanosecond sample in the bucket.
                        return Ok(Duration::from_nanos(bucket_edges()[i].floor() as u64));
                    }
                }
                unreachable!("index {index} exceeds recorded count {n}")
            }
        }
    }
}

/// 1-based index of the k-th percentile in a sorted array of length `n`,
/// clamped into `1..=n`.
pub fn percentile_index(k: f64, n: u64) -> u64 {
    let raw = (k * n as f64 / 100.0).ceil() as u64;
    raw.clamp(1, n)
}

fn bucket_index(ns: u64) -> usize {
    let edges = bucket_edges();
    edges.partition_point(|&e| e < ns as f64).min(edges.len() - 1)
}

/// Raw-over-baseline throughput ratio.
pub fn normalized_throughput(raw: f64, baseline: f64) -> Result<f64, MetricsError> {
    if !baseline.is_finite() || baseline <= 0.0 {
        return Err(MetricsError::InvalidBaseline(baseline));
    }
    Ok(raw / baseline)
}

/// Weights of the resource-efficiency index denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyWeights {
    pub cpu_weight: f64,
    pub mem_weight: f64,
}

impl Default for EfficiencyWeights {
    fn default() -> Self {
        Self {
            cpu_weight: 0.5,
            mem_weight: 0.5,
        }
    }
}

impl EfficiencyWeights {
    pub fn new(cpu_weight: f64, mem_weight: f64) -> Result<Self, MetricsError> {
        let w = Self {
            cpu_weight,
            mem_weight,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let ok = self.cpu_weight >= 0.0
            && self.mem_weight >= 0.0
            && self.cpu_weight.is_finite()
            && self.mem_weight.is_finite()
            && self.cpu_weight + self.mem_weight > 0.0;
        if ok {
            Ok(())
        } else {
            Err(MetricsError::InvalidWeights)
        }
    }
}

/// Throughput per weighted resource unit: `T / (cpu*w_cpu + mem*w_mem)`.
/// `cpu_mean` is mean cores consumed; `mem_mean` is mean used memory as a
/// fraction of the memory budget, so both denominator terms are
/// dimensionless-comparable.
pub fn efficiency_index(
    throughput: f64,
    cpu_mean: f64,
    mem_mean: f64,
    weights: EfficiencyWeights,
) -> Result<f64, MetricsError> {
    weights.validate()?;
    let denom = cpu_mean * weights.cpu_weight + mem_mean * weights.mem_weight;
    if !denom.is_finite() || denom <= 0.0 {
        return Err(MetricsError::ZeroDenominator);
    }
    Ok(throughput / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSource {
    ServerInfo,
    ExternalFile,
}

/// One resource observation. Missing fields mark a partial sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSample {
    /// Monotonic seconds from run start.
    pub timestamp_s: f64,
    pub cpu_seconds_total: Option<f64>,
    pub used_memory_bytes: Option<u64>,
    pub source: SampleSource,
}

impl ResourceSample {
    pub fn is_complete(&self) -> bool {
        self.cpu_seconds_total.is_some() && self.used_memory_bytes.is_some()
    }
}

/// Maps the logical resource fields onto a server's introspection field
/// names. Field names differ between implementations, so targets carry
/// their own schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InfoSchema {
    /// Introspection section to request.
    pub section: String,
    /// Fields summed into cumulative CPU seconds; all must be present.
    pub cpu_fields: Vec<String>,
    pub memory_field: String,
}

impl Default for InfoSchema {
    fn default() -> Self {
        Self {
            section: "default".to_string(),
            cpu_fields: vec!["used_cpu_sys".to_string(), "used_cpu_user".to_string()],
            memory_field: "used_memory".to_string(),
        }
    }
}

/// Builds a sample from a parsed field map. Unparseable or absent fields
/// leave the corresponding slot empty (partial sample).
pub fn sample_from_info(
    info: &HashMap<String, String>,
    schema: &InfoSchema,
    timestamp_s: f64,
) -> ResourceSample {
    let cpu = schema
        .cpu_fields
        .iter()
        .map(|f| info.get(f).and_then(|v| v.parse::<f64>().ok()))
        .try_fold(0.0, |acc, v| v.map(|v| acc + v));
    let mem = info
        .get(&schema.memory_field)
        .and_then(|v| v.parse::<u64>().ok());
    ResourceSample {
        timestamp_s,
        cpu_seconds_total: cpu,
        used_memory_bytes: mem,
        source: SampleSource::ServerInfo,
    }
}

/// One INFO round-trip mapped through `schema`. Missing fields leave a
/// partial sample; a server that refuses INFO yields `InfoUnavailable` so
/// the caller can fall back to an external resource file.
pub fn sample_resources(
    conn: &mut crate::resp::Connection,
    schema: &InfoSchema,
    timestamp_s: f64,
) -> Result<ResourceSample, crate::resp::RespError> {
    let info = conn.fetch_info(&schema.section)?;
    Ok(sample_from_info(&info, schema, timestamp_s))
}

/// Mean cores consumed across a run: cumulative CPU seconds consumed between
/// the first and last complete sample, divided by the wall time between them.
pub fn mean_cpu_cores(series: &[ResourceSample]) -> Option<f64> {
    let with_cpu: Vec<&ResourceSample> = series
        .iter()
        .filter(|s| s.cpu_seconds_total.is_some())
        .collect();
    let (first, last) = (with_cpu.first()?, with_cpu.last()?);
    let elapsed = last.timestamp_s - first.timestamp_s;
    if elapsed <= 0.0 {
        return None;
    }
    Some((last.cpu_seconds_total? - first.cpu_seconds_total?) / elapsed)
}

/// Mean used memory in bytes over the samples that report it.
pub fn mean_used_memory(series: &[ResourceSample]) -> Option<f64> {
    let values: Vec<f64> = series
        .iter()
        .filter_map(|s| s.used_memory_bytes.map(|b| b as f64))
        .collect();
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Loads an external resource series from a CSV file with header
/// `timestamp_s,cpu_seconds_total,used_memory_bytes`. Rows are returned in
/// timestamp order.
pub fn load_resource_csv(path: &Path) -> Result<Vec<ResourceSample>, MetricsError> {
    #[derive(Deserialize)]
    struct Row {
        timestamp_s: f64,
        cpu_seconds_total: f64,
        used_memory_bytes: u64,
    }
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| MetricsError::ResourceFile(e.to_string()))?;
    let mut samples = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| MetricsError::ResourceFile(e.to_string()))?;
        samples.push(ResourceSample {
            timestamp_s: row.timestamp_s,
            cpu_seconds_total: Some(row.cpu_seconds_total),
            used_memory_bytes: Some(row.used_memory_bytes),
            source: SampleSource::ExternalFile,
        });
    }
    samples.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));
    Ok(samples)
}

/// Workload parameters echoed into each run record so records are
/// self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub set_ratio: f64,
    pub get_ratio: f64,
    pub skew: f64,
    pub key_count: u64,
    pub value_size: u64,
    pub duration_secs: f64,
    pub warmup_secs: f64,
    pub pipeline_depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub base_seed: u64,
    pub run_seed: u64,
}

/// One (system, workload, concurrency, repetition) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema_version: u32,
    pub system: String,
    pub workload: String,
    pub concurrency: u32,
    pub repetition: u32,
    pub params: RunParams,
    /// Operations completed inside the measured window (warmup excluded).
    pub ops_total: u64,
    pub gets_total: u64,
    pub sets_total: u64,
    pub errors_total: u64,
    pub misses_total: u64,
    /// Transport accounting over the whole run, warmup included.
    pub commands_sent: u64,
    pub replies_received: u64,
    pub commands_lost: u64,
    pub connections_dropped: u32,
    pub elapsed_measured_s: f64,
    pub throughput_ops_s: f64,
    pub p50_us: u64,
    pub p99_us: u64,
    pub p999_us: u64,
    pub latency_mode: RecorderMode,
    pub overflow_samples: u64,
    /// Warmup ramp diagnostics: completions per whole second of warmup.
    pub warmup_ops: u64,
    pub warmup_ops_per_sec: Vec<u64>,
    pub resource_series: Vec<ResourceSample>,
    pub failed: bool,
    pub warnings: Vec<String>,
    pub seed_record: SeedRecord,
}

impl RunResult {
    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!("schema_version {}", self.schema_version));
        }
        let expected = if self.elapsed_measured_s > 0.0 {
            self.ops_total as f64 / self.elapsed_measured_s
        } else {
            0.0
        };
        let denom = expected.abs().max(1e-12);
        if ((self.throughput_ops_s - expected) / denom).abs() > 1e-9 {
            return Err(format!(
                "throughput {} inconsistent with ops/elapsed {}",
                self.throughput_ops_s, expected
            ));
        }
        if !(self.p50_us <= self.p99_us && self.p99_us <= self.p999_us) {
            return Err("percentiles not monotone".to_string());
        }
        if self.commands_sent != self.replies_received + self.commands_lost {
            return Err("transport accounting violated".to_string());
        }
        if self.gets_total + self.sets_total != self.ops_total {
            return Err("op mix does not sum to ops_total".to_string());
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("run result serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, MetricsError> {
        let result: RunResult =
            serde_json::from_str(line).map_err(|e| MetricsError::RecordParse(e.to_string()))?;
        if result.schema_version != SCHEMA_VERSION {
            return Err(MetricsError::RecordVersion(result.schema_version));
        }
        Ok(result)
    }
}
