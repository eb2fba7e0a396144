//! Benchmark configuration file: a strict JSON schema (unknown keys are
//! rejected) naming the target servers, the workload, and reporting options.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer};

use kvbench_core::metrics::{EfficiencyWeights, InfoSchema};
use kvbench_core::resp::Endpoint;
use kvbench_core::workload::{
    builtin_workload, compute_preload_keycount, BuiltinWorkload, RunContext, WorkloadSpec,
    DEFAULT_REPETITIONS,
};
use kvbench_core::zipf::KeyScheme;

pub const DEFAULT_MEMORY_BUDGET: u64 = 8 * (1 << 30);
pub const DEFAULT_OVERHEAD_PER_KEY: u64 = 300;

/// One server under test.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub system: String,
    pub host: String,
    pub port: u16,
    #[serde(default = "default_connect_timeout_ms")]
    pub connect_timeout_ms: u64,
    #[serde(default)]
    pub auth: Option<String>,
    /// Maps logical resource fields onto this server's INFO field names.
    #[serde(default)]
    pub info_schema: InfoSchema,
    /// Fallback resource series when the server cannot report INFO.
    #[serde(default)]
    pub resource_csv: Option<PathBuf>,
}

fn default_connect_timeout_ms() -> u64 {
    5_000
}

impl TargetConfig {
    pub fn endpoint(&self) -> Endpoint {
        Endpoint {
            host: self.host.clone(),
            port: self.port,
            connect_timeout_ms: self.connect_timeout_ms,
            auth: self.auth.clone(),
        }
    }

    pub fn run_context(&self, repetition: u32, key_scheme: KeyScheme, permutation_seed: u64) -> RunContext {
        RunContext {
            system: self.system.clone(),
            repetition,
            info_schema: self.info_schema.clone(),
            resource_file: self.resource_csv.clone(),
            key_scheme,
            permutation_seed,
        }
    }
}

/// Either the name of a built-in workload ("A"/"B") or an inline spec.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadRef {
    Builtin(String),
    Inline(WorkloadSpec),
}

impl<'de> Deserialize<'de> for WorkloadRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        match value {
            serde_json::Value::String(name) => Ok(WorkloadRef::Builtin(name)),
            other => serde_json::from_value::<WorkloadSpec>(other)
                .map(WorkloadRef::Inline)
                .map_err(|e| D::Error::custom(format!("workload object: {e}"))),
        }
    }
}

/// Memory-pressure sizing; when present, the workload's key count is
/// recomputed from the budget instead of taken literally.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreloadSettings {
    pub target_fill: f64,
    #[serde(default = "default_overhead_per_key")]
    pub overhead_per_key: u64,
}

fn default_overhead_per_key() -> u64 {
    DEFAULT_OVERHEAD_PER_KEY
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub targets: Vec<TargetConfig>,
    pub workload: WorkloadRef,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    pub baseline_system: String,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub weights: EfficiencyWeights,
    /// Memory limit of each server; also normalizes memory in reports.
    #[serde(default = "default_memory_budget")]
    pub memory_budget_bytes: u64,
    #[serde(default)]
    pub preload: Option<PreloadSettings>,
    #[serde(default = "default_cooldown_secs")]
    pub cooldown_secs: f64,
    #[serde(default = "default_preload_parallelism")]
    pub preload_parallelism: usize,
    #[serde(default = "default_key_scheme")]
    pub key_scheme: KeyScheme,
    #[serde(default)]
    pub permutation_seed: u64,
    #[serde(skip)]
    seed_override: Option<u64>,
}

fn default_repetitions() -> u32 {
    DEFAULT_REPETITIONS
}

fn default_memory_budget() -> u64 {
    DEFAULT_MEMORY_BUDGET
}

fn default_cooldown_secs() -> f64 {
    10.0
}

fn default_preload_parallelism() -> usize {
    8
}

fn default_key_scheme() -> KeyScheme {
    KeyScheme::IdentityRank
}

fn name_is_file_safe(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

impl BenchmarkConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: BenchmarkConfig = serde_json::from_str(&raw)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    /// Applies the global `--seed` / `--output` flags.
    pub fn with_overrides(mut self, seed: Option<u64>, output: Option<PathBuf>) -> Self {
        self.seed_override = seed;
        if let Some(dir) = output {
            self.output_dir = dir;
        }
        self
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.targets.is_empty() {
            bail!("config must name at least one target");
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.targets {
            if !name_is_file_safe(&t.system) {
                bail!("system identifier '{}' must be filename-safe", t.system);
            }
            if !seen.insert(&t.system) {
                bail!("duplicate system identifier '{}'", t.system);
            }
            t.endpoint().validate().map_err(anyhow::Error::from)?;
        }
        if !seen.contains(&self.baseline_system) {
            bail!(
                "baseline_system '{}' does not appear in targets",
                self.baseline_system
            );
        }
        self.weights
            .validate()
            .map_err(|e| anyhow::anyhow!("weights: {e}"))?;
        if self.repetitions == 0 {
            bail!("repetitions must be at least 1");
        }
        if self.cooldown_secs < 0.0 {
            bail!("cooldown_secs must be non-negative");
        }
        if let Some(p) = &self.preload {
            if !(p.target_fill > 0.0 && p.target_fill <= 1.0) {
                bail!("preload.target_fill must lie in (0,1]");
            }
        }
        // The workload must resolve and validate up front.
        let spec = self.resolved_workload(None)?;
        if !name_is_file_safe(&spec.name) {
            bail!("workload name '{}' must be filename-safe", spec.name);
        }
        Ok(())
    }

    pub fn find_target(&self, system: &str) -> Option<&TargetConfig> {
        self.targets.iter().find(|t| t.system == system)
    }

    /// The effective workload: the named builtin or the inline spec, with the
    /// key count recomputed when preload sizing is configured, and the base
    /// seed replaced by any `--seed` override. `name_override` picks a
    /// different builtin at the command line.
    pub fn resolved_workload(&self, name_override: Option<&str>) -> anyhow::Result<WorkloadSpec> {
        let mut spec = match name_override {
            Some(name) => {
                if let WorkloadRef::Inline(spec) = &self.workload {
                    if spec.name == name {
                        spec.clone()
                    } else {
                        Self::builtin_by_name(name)?
                    }
                } else {
                    Self::builtin_by_name(name)?
                }
            }
            None => match &self.workload {
                WorkloadRef::Builtin(name) => Self::builtin_by_name(name)?,
                WorkloadRef::Inline(spec) => spec.clone(),
            },
        };
        if let Some(preload) = &self.preload {
            let computed = compute_preload_keycount(
                self.memory_budget_bytes,
                preload.target_fill,
                spec.value_size,
                preload.overhead_per_key,
            )
            .map_err(anyhow::Error::from)?;
            if computed == 0 {
                bail!("preload sizing computes zero keys; raise the budget or fill");
            }
            spec.key_count = computed;
        }
        if let Some(seed) = self.seed_override {
            spec.base_seed = seed;
        }
        spec.validate().map_err(anyhow::Error::from)?;
        Ok(spec)
    }

    fn builtin_by_name(name: &str) -> anyhow::Result<WorkloadSpec> {
        let builtin: BuiltinWorkload = name
            .parse()
            .map_err(|e: String| anyhow::anyhow!(e))?;
        Ok(builtin_workload(builtin))
    }
}
