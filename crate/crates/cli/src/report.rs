//! Report generation: the normalized summary table, per-workload plot-ready
//! series, and the human-readable comparison table.
//!
//! All report output is a pure function of the persisted records, so
//! regenerating from identical result files yields byte-identical bytes: no
//! timestamps, fixed orderings, fixed float formatting. Durations appear as
//! integer microseconds; percentage deltas carry one decimal place.

use std::collections::{BTreeMap, BTreeSet};

use kvbench_core::metrics::{mean_cpu_cores, mean_used_memory, EfficiencyWeights, RunResult};
use kvbench_core::stats::{welch_test, CellComparison, SampleSet};

pub const SUMMARY_METRICS: [&str; 6] = [
    "throughput-write",
    "throughput-read",
    "p99",
    "p999",
    "cpu-efficiency",
    "memory-efficiency",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: &'static str,
    pub system: String,
    /// Signed percentage of the system mean against the baseline mean.
    pub delta_pct: f64,
    pub p_value: Option<f64>,
    pub n_system: usize,
    pub n_baseline: usize,
}

fn mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

fn is_write_heavy(result: &RunResult) -> bool {
    result.params.set_ratio >= 0.5
}

/// Per-run value of one summary metric, when derivable from the record.
fn summary_value(metric: &str, result: &RunResult, memory_budget: u64) -> Option<f64> {
    match metric {
        "throughput-write" => is_write_heavy(result).then_some(result.throughput_ops_s),
        "throughput-read" => (!is_write_heavy(result)).then_some(result.throughput_ops_s),
        "p99" => Some(result.p99_us as f64),
        "p999" => Some(result.p999_us as f64),
        "cpu-efficiency" => {
            let cores = mean_cpu_cores(&result.resource_series)?;
            (cores > 0.0).then(|| result.throughput_ops_s / cores)
        }
        "memory-efficiency" => {
            let frac = mean_used_memory(&result.resource_series)? / memory_budget as f64;
            (frac > 0.0).then(|| result.throughput_ops_s / frac)
        }
        _ => unreachable!("unknown summary metric {metric}"),
    }
}

/// Builds the summary rows: one per (non-baseline system, metric) with data
/// on both sides. Baseline rows are identically zero and therefore omitted.
pub fn build_summary(
    results: &[RunResult],
    baseline: &str,
    memory_budget: u64,
) -> (Vec<SummaryRow>, Vec<String>) {
    let mut warnings = Vec::new();
    let usable: Vec<&RunResult> = results.iter().filter(|r| !r.failed).collect();
    let skipped = results.len() - usable.len();
    if skipped > 0 {
        warnings.push(format!("excluded {skipped} failed run(s) from the summary"));
    }
    let mut rows = Vec::new();
    for metric in SUMMARY_METRICS {
        let mut samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in &usable {
            if let Some(v) = summary_value(metric, r, memory_budget) {
                samples.entry(r.system.as_str()).or_default().push(v);
            }
        }
        let Some(base) = samples.get(baseline) else {
            if !samples.is_empty() {
                warnings.push(format!("{metric}: no baseline '{baseline}' samples; skipped"));
            }
            continue;
        };
        let base = base.clone();
        let base_mean = mean(&base);
        if base_mean == 0.0 {
            warnings.push(format!("{metric}: baseline mean is zero; skipped"));
            continue;
        }
        for (system, values) in &samples {
            if *system == baseline {
                continue;
            }
            let delta_pct = (mean(values) / base_mean - 1.0) * 100.0;
            let p_value = if values.len() >= 2 && base.len() >= 2 {
                let a = SampleSet::new(*system, values.clone(), metric);
                let b = SampleSet::new(baseline, base.clone(), metric);
                match welch_test(&a, &b) {
                    Ok(report) => Some(report.p_value),
                    Err(e) => {
                        warnings.push(format!("{metric} {system}: {e}"));
                        None
                    }
                }
            } else {
                warnings.push(format!(
                    "{metric} {system}: fewer than 2 repetitions on a side; no p-value"
                ));
                None
            };
            rows.push(SummaryRow {
                metric,
                system: system.to_string(),
                delta_pct,
                p_value,
                n_system: values.len(),
                n_baseline: base.len(),
            });
        }
    }
    (rows, warnings)
}

fn fmt_delta(delta_pct: f64) -> String {
    format!("{delta_pct:+.1}%")
}

fn fmt_p(p: Option<f64>) -> String {
    p.map_or_else(String::new, |p| format!("{p:.4}"))
}

pub fn render_summary_csv(rows: &[SummaryRow], baseline: &str) -> anyhow::Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["metric", "system", "baseline", "delta", "p_value", "n_system", "n_baseline"])?;
    for row in rows {
        writer.write_record([
            row.metric,
            &row.system,
            baseline,
            &fmt_delta(row.delta_pct),
            &fmt_p(row.p_value),
            &row.n_system.to_string(),
            &row.n_baseline.to_string(),
        ])?;
    }
    Ok(writer.into_inner()?)
}

/// Aligned text rendering of the summary plus a supplementary block with the
/// weighted resource-efficiency index per system.
pub fn render_summary_text(
    rows: &[SummaryRow],
    results: &[RunResult],
    baseline: &str,
    weights: EfficiencyWeights,
    memory_budget: u64,
) -> String {
    let mut out = String::new();
    out.push_str(&format!("performance summary (normalized to baseline '{baseline}')\n"));
    out.push_str("cpu and memory are server-reported via INFO; memory normalized to the configured budget\n\n");

    let headers = ["metric", "system", "delta", "p-value", "n", "n-base"];
    let mut table: Vec<[String; 6]> = vec![headers.map(str::to_string)];
    for row in rows {
        table.push([
            row.metric.to_string(),
            row.system.clone(),
            fmt_delta(row.delta_pct),
            fmt_p(row.p_value),
            row.n_system.to_string(),
            row.n_baseline.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..6)
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    if rows.is_empty() {
        out.push_str("(no non-baseline samples)\n");
    }

    // Weighted efficiency index, informational.
    out.push_str(&format!(
        "\nresource efficiency index (throughput / (cpu*{} + mem*{})):\n",
        weights.cpu_weight, weights.mem_weight
    ));
    let mut per_system: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in results.iter().filter(|r| !r.failed) {
        let (Some(cores), Some(mem)) = (
            mean_cpu_cores(&r.resource_series),
            mean_used_memory(&r.resource_series),
        ) else {
            continue;
        };
        if let Ok(e) = kvbench_core::metrics::efficiency_index(
            r.throughput_ops_s,
            cores,
            mem / memory_budget as f64,
            weights,
        ) {
            per_system.entry(r.system.as_str()).or_default().push(e);
        }
    }
    if per_system.is_empty() {
        out.push_str("(no runs with complete resource series)\n");
    }
    for (system, values) in &per_system {
        out.push_str(&format!("  {system}: {:.3} (n={})\n", mean(values), values.len()));
    }
    out
}

/// One plot CSV: rows are concurrency levels, one column per system, empty
/// field where a system has no data for that level.
fn plot_csv(
    results: &[&RunResult],
    systems: &[String],
    value_of: impl Fn(&RunResult) -> Option<f64>,
    format_value: impl Fn(f64) -> String,
) -> anyhow::Result<Vec<u8>> {
    let mut cells: BTreeMap<(u32, &str), Vec<f64>> = BTreeMap::new();
    let mut levels: BTreeSet<u32> = BTreeSet::new();
    for r in results {
        levels.insert(r.concurrency);
        if let Some(v) = value_of(r) {
            cells.entry((r.concurrency, r.system.as_str())).or_default().push(v);
        }
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["concurrency".to_string()];
    header.extend(systems.iter().cloned());
    writer.write_record(&header)?;
    for level in levels {
        let mut record = vec![level.to_string()];
        for system in systems {
            record.push(match cells.get(&(level, system.as_str())) {
                Some(values) => format_value(mean(values)),
                None => String::new(),
            });
        }
        writer.write_record(&record)?;
    }
    Ok(writer.into_inner()?)
}

/// The plot-ready series for one workload: throughput, p99, p999, cpu, and
/// memory against concurrency. Returns (file name, bytes) pairs.
pub fn plot_files(
    results: &[RunResult],
    baseline: &str,
    memory_budget: u64,
) -> anyhow::Result<Vec<(String, Vec<u8>)>> {
    let usable: Vec<&RunResult> = results.iter().filter(|r| !r.failed).collect();
    let workloads: BTreeSet<&str> = usable.iter().map(|r| r.workload.as_str()).collect();
    let mut files = Vec::new();
    for workload in workloads {
        let of_workload: Vec<&RunResult> = usable
            .iter()
            .filter(|r| r.workload == workload)
            .copied()
            .collect();
        // Baseline column first, then the rest in name order.
        let mut systems: Vec<String> = of_workload
            .iter()
            .map(|r| r.system.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if let Some(pos) = systems.iter().position(|s| s == baseline) {
            let base = systems.remove(pos);
            systems.insert(0, base);
        }
        type PanelValue = Box<dyn Fn(&RunResult) -> Option<f64>>;
        struct Panel {
            name: &'static str,
            value: PanelValue,
            format: fn(f64) -> String,
        }
        let budget = memory_budget as f64;
        let panels = [
            Panel {
                name: "throughput",
                value: Box::new(|r| Some(r.throughput_ops_s)),
                format: |v| format!("{v:.3}"),
            },
            Panel {
                name: "p99",
                value: Box::new(|r| Some(r.p99_us as f64)),
                format: |v| format!("{}", v.round() as u64),
            },
            Panel {
                name: "p999",
                value: Box::new(|r| Some(r.p999_us as f64)),
                format: |v| format!("{}", v.round() as u64),
            },
            Panel {
                name: "cpu",
                value: Box::new(|r| mean_cpu_cores(&r.resource_series)),
                format: |v| format!("{v:.6}"),
            },
            Panel {
                name: "memory",
                value: Box::new(move |r: &RunResult| {
                    mean_used_memory(&r.resource_series).map(|m| 100.0 * m / budget)
                }),
                format: |v| format!("{v:.3}"),
            },
        ];
        for panel in panels {
            let bytes = plot_csv(&of_workload, &systems, panel.value, panel.format)?;
            files.push((format!("{workload}__{}.csv", panel.name), bytes));
        }
    }
    Ok(files)
}

/// Human-readable table of per-cell comparisons.
pub fn render_comparison_table(comparisons: &[CellComparison]) -> String {
    let headers = [
        "workload", "conc", "system", "mean", "baseline-mean", "t", "df", "p", "significant",
    ];
    let mut table: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
    for c in comparisons {
        let r = &c.report;
        table.push(vec![
            c.workload.clone(),
            c.concurrency.to_string(),
            c.system.clone(),
            format!("{:.3}", r.mean_a),
            format!("{:.3}", r.mean_b),
            if r.t_statistic.is_finite() {
                format!("{:.4}", r.t_statistic)
            } else {
                format!("{}", r.t_statistic)
            },
            format!("{:.3}", r.degrees_of_freedom),
            format!("{:.4}", r.p_value),
            if r.significant { "yes" } else { "no" }.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
