//! The four subcommands behind the binary: preload, sweep, compare, report.

use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::Context;

use kvbench_core::stats::{compare_cells, ComparisonMetric};
use kvbench_core::workload::{preload, sweep_cells, sweep_with, PreloadPlan, SweepOptions};
use kvbench_core::zipf::KeyMapping;

use crate::config::{BenchmarkConfig, DEFAULT_OVERHEAD_PER_KEY};
use crate::report::{build_summary, plot_files, render_comparison_table, render_summary_csv, render_summary_text};
use crate::store::{DirLock, ResultStore};

/// Usage errors exit 2, operational failures exit 1.
#[derive(Debug)]
pub enum CmdError {
    Usage(String),
    Failure(anyhow::Error),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => 2,
            CmdError::Failure(_) => 1,
        }
    }
}

impl From<anyhow::Error> for CmdError {
    fn from(e: anyhow::Error) -> Self {
        CmdError::Failure(e)
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Usage(m) => write!(f, "{m}"),
            CmdError::Failure(e) => write!(f, "{e:#}"),
        }
    }
}

fn lookup_target<'a>(
    config: &'a BenchmarkConfig,
    target: &str,
) -> Result<&'a crate::config::TargetConfig, CmdError> {
    config.find_target(target).ok_or_else(|| {
        let known: Vec<&str> = config.targets.iter().map(|t| t.system.as_str()).collect();
        CmdError::Usage(format!(
            "unknown target '{target}' (configured targets: {})",
            known.join(", ")
        ))
    })
}

/// Computes the preload key count, loads every key once, and prints the
/// sizing and outcome.
pub fn cmd_preload(config: &BenchmarkConfig, target: &str) -> Result<(), CmdError> {
    let target = lookup_target(config, target)?;
    let spec = config.resolved_workload(None)?;
    let plan = match &config.preload {
        Some(settings) => PreloadPlan::from_budget(
            config.memory_budget_bytes,
            settings.target_fill,
            spec.value_size,
            settings.overhead_per_key,
        )
        .map_err(|e| CmdError::Failure(e.into()))?,
        None => PreloadPlan::for_key_count(spec.key_count, spec.value_size, DEFAULT_OVERHEAD_PER_KEY)
            .map_err(|e| CmdError::Failure(e.into()))?,
    };
    let mapping = KeyMapping::new(
        config.key_scheme,
        config.permutation_seed,
        "key:",
        plan.key_count,
    )
    .map_err(|e| CmdError::Failure(e.into()))?;
    println!(
        "preload target={} workload={} keys={} value_size={}",
        target.system, spec.name, plan.key_count, plan.value_size
    );
    let report = preload(
        &target.endpoint(),
        &plan,
        &mapping,
        config.preload_parallelism,
    )
    .map_err(|e| CmdError::Failure(anyhow::Error::from(e).context("preload failed")))?;
    println!(
        "preloaded target={} keys={} elapsed_s={:.3} errors={} used_memory={}",
        target.system,
        report.key_count,
        report.elapsed.as_secs_f64(),
        report.errors_total,
        report
            .used_memory_after
            .map_or_else(|| "unknown".to_string(), |v| v.to_string())
    );
    if report.failed {
        return Err(CmdError::Failure(anyhow::anyhow!(
            "preload completed with {} error repl(y/ies)",
            report.errors_total
        )));
    }
    Ok(())
}

/// Runs the concurrency sweep, persisting one record per run. Cells already
/// on disk are skipped, so an interrupted sweep resumes where it stopped.
pub fn cmd_sweep(
    config: &BenchmarkConfig,
    target: &str,
    workload_override: Option<&str>,
) -> Result<(), CmdError> {
    let target = lookup_target(config, target)?;
    let spec = config
        .resolved_workload(workload_override)
        .map_err(|e| CmdError::Usage(format!("{e:#}")))?;
    let _lock = DirLock::acquire(&config.output_dir)?;
    let store = ResultStore::open(&config.output_dir)?;

    let existing = store.existing_cells(&target.system, &spec.name)?;
    let all_cells = sweep_cells(&spec, config.repetitions);
    let missing: Vec<(u32, u32)> = all_cells
        .iter()
        .copied()
        .filter(|cell| !existing.contains(cell))
        .collect();
    if missing.is_empty() {
        println!(
            "all cells present: {} of {} (concurrency, repetition) cells already persisted",
            existing.len(),
            all_cells.len()
        );
        return Ok(());
    }
    println!(
        "sweep target={} workload={} cells={} (skipping {} already present)",
        target.system,
        spec.name,
        missing.len(),
        all_cells.len() - missing.len()
    );

    let options = SweepOptions {
        repetitions: config.repetitions,
        cooldown: Duration::from_secs_f64(config.cooldown_secs),
        verify_residency: true,
        cells: Some(missing),
    };
    let ctx = target.run_context(1, config.key_scheme, config.permutation_seed);
    let mut append_error: Option<anyhow::Error> = None;
    let outcome = sweep_with(&target.endpoint(), &spec, &ctx, &options, |result| {
        if append_error.is_none() {
            if let Err(e) = store.append(result) {
                append_error = Some(e);
            }
        }
    })
    .map_err(|e| CmdError::Failure(e.into()))?;
    if let Some(e) = append_error {
        return Err(CmdError::Failure(e.context("persisting results")));
    }

    for (concurrency, repetition, reason) in &outcome.aborted {
        eprintln!("sweep cell ({concurrency},{repetition}) did not complete: {reason}");
    }
    println!(
        "sweep finished: {} run(s) persisted, {} aborted",
        outcome.results.len(),
        outcome.aborted.len()
    );
    if outcome.results.is_empty() {
        return Err(CmdError::Failure(anyhow::anyhow!(
            "zero runs succeeded ({} aborted)",
            outcome.aborted.len()
            )));
    }
    Ok(())
}

/// Welch comparison of every cell against the baseline for one metric.
/// Structured records land under comparisons/, the table goes to stdout.
pub fn cmd_compare(config: &BenchmarkConfig, metric: ComparisonMetric) -> Result<(), CmdError> {
    let _lock = DirLock::acquire(&config.output_dir)?;
    let store = ResultStore::open(&config.output_dir)?;
    let results = store.load_all()?;
    if results.is_empty() {
        return Err(CmdError::Failure(anyhow::anyhow!(
            "no persisted results under {}",
            config.output_dir.display()
        )));
    }
    let (comparisons, warnings) = compare_cells(&results, metric, &config.baseline_system);
    for w in &warnings {
        eprintln!("compare: {w}");
    }
    if comparisons.is_empty() {
        return Err(CmdError::Failure(anyhow::anyhow!(
            "nothing to compare against baseline '{}' (need >= 2 repetitions on both sides)",
            config.baseline_system
        )));
    }

    let dir = config.output_dir.join("comparisons");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{}.jsonl", metric.name()));
    let mut lines = String::new();
    for c in &comparisons {
        lines.push_str(&serde_json::to_string(c).context("serializing comparison")?);
        lines.push('\n');
    }
    fs::write(&path, lines).with_context(|| format!("writing {}", path.display()))?;

    print!("{}", render_comparison_table(&comparisons));
    println!(
        "{} comparison(s) written to {}",
        comparisons.len(),
        path.display()
    );
    Ok(())
}

fn write_report_file(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Builds the normalized summary table and the per-workload plot series.
pub fn cmd_report(config: &BenchmarkConfig) -> Result<(), CmdError> {
    let _lock = DirLock::acquire(&config.output_dir)?;
    let store = ResultStore::open(&config.output_dir)?;
    let results = store.load_all()?;
    if results.is_empty() {
        return Err(CmdError::Failure(anyhow::anyhow!(
            "no persisted results under {}",
            config.output_dir.display()
        )));
    }

    let (rows, warnings) = build_summary(&results, &config.baseline_system, config.memory_budget_bytes);
    for w in &warnings {
        eprintln!("report: {w}");
    }
    let reports_dir = config.output_dir.join("reports");
    fs::create_dir_all(&reports_dir)
        .with_context(|| format!("creating {}", reports_dir.display()))?;

    let csv_bytes = render_summary_csv(&rows, &config.baseline_system)?;
    write_report_file(&reports_dir, "summary.csv", &csv_bytes)?;
    let text = render_summary_text(
        &rows,
        &results,
        &config.baseline_system,
        config.weights,
        config.memory_budget_bytes,
    );
    write_report_file(&reports_dir, "summary.txt", text.as_bytes())?;

    let mut written = vec!["summary.csv".to_string(), "summary.txt".to_string()];
    for (name, bytes) in plot_files(&results, &config.baseline_system, config.memory_budget_bytes)? {
        write_report_file(&reports_dir, &name, &bytes)?;
        written.push(name);
    }

    print!("{text}");
    println!(
        "report files under {}: {}",
        reports_dir.display(),
        written.join(", ")
    );
    Ok(())
}
