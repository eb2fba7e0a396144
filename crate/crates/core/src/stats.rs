//! Welch's two-sample t-test for comparing performance sample sets.
//!
//! Given repeated measurements of the same cell on two systems, `welch_test`
//! produces the t statistic, Welch-Satterthwaite degrees of freedom, a
//! two-sided p-value, and a 95% confidence interval on the mean difference.
//! The Student-t CDF is evaluated through the regularized incomplete beta
//! function with a continued-fraction expansion; the inverse quantile needed
//! for the interval is found by bisection on that CDF.

use serde::Serialize;
use std::collections::BTreeMap;

use crate::metrics::RunResult;

/// Decision threshold for "statistically significant".
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;
const CONFIDENCE: f64 = 0.95;
const QUANTILE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("sample set '{label}' has {len} values; at least 2 required")]
    InsufficientSamples { label: String, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A labelled collection of repeated measurements of one quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub label: String,
    pub values: Vec<f64>,
    pub unit: String,
}

impl SampleSet {
    pub fn new(label: impl Into<String>, values: Vec<f64>, unit: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            values,
            unit: unit.into(),
        }
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Unbiased sample variance (n-1 denominator).
    fn variance(&self) -> f64 {
        let mean = self.mean();
        let ss: f64 = self.values.iter().map(|v| (v - mean).powi(2)).sum();
        ss / (self.values.len() - 1) as f64
    }
}

/// Both variances were zero, so the usual statistic is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degeneracy {
    /// Identical constant samples on both sides: no difference (p = 1).
    Equal,
    /// Constant but different samples: perfectly separated (p = 0).
    Separated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TTestReport {
    pub label_a: String,
    pub label_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub standard_error: f64,
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub significant: bool,
    pub confidence_interval: (f64, f64),
    pub degenerate: Option<Degeneracy>,
}

/// Welch's unequal-variance t-test of `a` against `b`, two-sided.
pub fn welch_test(a: &SampleSet, b: &SampleSet) -> Result<TTestReport, StatsError> {
    for set in [a, b] {
        if set.values.len() < 2 {
            return Err(StatsError::InsufficientSamples {
                label: set.label.clone(),
                len: set.values.len(),
            });
        }
        if set.values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::InvalidParameter(format!(
                "sample set '{}' contains a non-finite value",
                set.label
            )));
        }
    }
    let (n, m) = (a.values.len() as f64, b.values.len() as f64);
    let (mean_a, mean_b) = (a.mean(), b.mean());
    let (var_a, var_b) = (a.variance(), b.variance());
    let diff = mean_a - mean_b;

    if var_a == 0.0 && var_b == 0.0 {
        let degeneracy = if diff == 0.0 {
            Degeneracy::Equal
        } else {
            Degeneracy::Separated
        };
        let (t, p) = match degeneracy {
            Degeneracy::Equal => (0.0, 1.0),
            Degeneracy::Separated => (diff.signum() * f64::INFINITY, 0.0),
        };
        return Ok(TTestReport {
            label_a: a.label.clone(),
            label_b: b.label.clone(),
            n_a: a.values.len(),
            n_b: b.values.len(),
            mean_a,
            mean_b,
            var_a,
            var_b,
            standard_error: 0.0,
            t_statistic: t,
            degrees_of_freedom: n + m - 2.0,
            p_value: p,
            significant: p < SIGNIFICANCE_LEVEL,
            confidence_interval: (diff, diff),
            degenerate: Some(degeneracy),
        });
    }

    let va = var_a / n;
    let vb = var_b / m;
    let standard_error = (va + vb).sqrt();
    let t_statistic = diff / standard_error;
    let degrees_of_freedom =
        (va + vb).powi(2) / (va.powi(2) / (n - 1.0) + vb.powi(2) / (m - 1.0));
    let p_value = 2.0 * (1.0 - t_cdf(t_statistic.abs(), degrees_of_freedom)?);
    let margin = inverse_t_quantile(0.5 + CONFIDENCE / 2.0, degrees_of_freedom)? * standard_error;

    Ok(TTestReport {
        label_a: a.label.clone(),
        label_b: b.label.clone(),
        n_a: a.values.len(),
        n_b: b.values.len(),
        mean_a,
        mean_b,
        var_a,
        var_b,
        standard_error,
        t_statistic,
        degrees_of_freedom,
        p_value,
        significant: p_value < SIGNIFICANCE_LEVEL,
        confidence_interval: (diff - margin, diff + margin),
        degenerate: None,
    })
}

/// Cumulative distribution of Student's t with `df` degrees of freedom.
pub fn t_cdf(x: f64, df: f64) -> Result<f64, StatsError> {
    if !x.is_finite() {
        return Err(StatsError::InvalidParameter(format!("non-finite x: {x}")));
    }
    if !df.is_finite() || df <= 0.0 {
        return Err(StatsError::InvalidParameter(format!(
            "degrees of freedom must be positive and finite, got {df}"
        )));
    }
    if x == 0.0 {
        return Ok(0.5);
    }
    let h = df / (df + x * x);
    let tail = 0.5 * inc_beta_reg(df / 2.0, 0.5, h);
    Ok(if x < 0.0 { tail } else { 1.0 - tail })
}

/// p-quantile of Student's t by bisection on [`t_cdf`], to 1e-10.
pub fn inverse_t_quantile(p: f64, df: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::InvalidParameter(format!(
            "quantile probability must lie in (0,1), got {p}"
        )));
    }
    if p < 0.5 {
        return Ok(-inverse_t_quantile(1.0 - p, df)?);
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut hi = 1.0f64;
    while t_cdf(hi, df)? < p {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(StatsError::InvalidParameter(format!(
                "quantile p={p} unreachable for df={df}"
            )));
        }
    }
    let mut lo = 0.0f64;
    while hi - lo > QUANTILE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Special functions backing the t CDF.

/// Lanczos g=7, n=9 coefficients, as published.
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

fn ln_gamma(z: f64) -> f64 {
    if z < 0.5 {
        // Reflection: Γ(z)Γ(1-z) = π / sin(πz)
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut sum = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + sum.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the incomplete beta function, evaluated with the
/// modified Lentz method.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;
        let numer = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + numer * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + numer / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let numer = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + numer * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + numer / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
fn inc_beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

// ---------------------------------------------------------------------------
// Applying the test across a sweep grid.

/// Which per-run quantity a comparison samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonMetric {
    Throughput,
    P99,
    P999,
}

impl ComparisonMetric {
    pub fn value_of(&self, result: &RunResult) -> f64 {
        match self {
            ComparisonMetric::Throughput => result.throughput_ops_s,
            ComparisonMetric::P99 => result.p99_us as f64,
            ComparisonMetric::P999 => result.p999_us as f64,
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            ComparisonMetric::Throughput => "ops/s",
            ComparisonMetric::P99 | ComparisonMetric::P999 => "us",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ComparisonMetric::Throughput => "throughput",
            ComparisonMetric::P99 => "p99",
            ComparisonMetric::P999 => "p999",
        }
    }
}

/// One per-cell comparison of a system against the baseline.
#[derive(Debug, Clone, Serialize)]
pub struct CellComparison {
    pub workload: String,
    pub concurrency: u32,
    pub metric: ComparisonMetric,
    pub system: String,
    pub baseline: String,
    pub report: TTestReport,
}

/// Runs the test for every (workload, concurrency) cell of every non-baseline
/// system against the baseline's samples in the same cell. Failed runs are
/// excluded; cells without a usable baseline are skipped with a warning.
pub fn compare_cells(
    results: &[RunResult],
    metric: ComparisonMetric,
    baseline_system: &str,
) -> (Vec<CellComparison>, Vec<String>) {
    let mut warnings = Vec::new();
    let failed = results.iter().filter(|r| r.failed).count();
    if failed > 0 {
        warnings.push(format!("excluded {failed} failed run(s) from comparison"));
    }

    // (workload, concurrency) -> system -> samples, in deterministic order.
    let mut cells: BTreeMap<(String, u32), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in results.iter().filter(|r| !r.failed) {
        cells
            .entry((r.workload.clone(), r.concurrency))
            .or_default()
            .entry(r.system.clone())
            .or_default()
            .push(metric.value_of(r));
    }

    let mut comparisons = Vec::new();
    for ((workload, concurrency), by_system) in &cells {
        let baseline_samples = match by_system.get(baseline_system) {
            Some(samples) if samples.len() >= 2 => samples,
            Some(samples) => {
                warnings.push(format!(
                    "cell ({workload}, c={concurrency}): baseline '{baseline_system}' has only {} repetition(s); skipped",
                    samples.len()
                ));
                continue;
            }
            None => {
                warnings.push(format!(
                    "cell ({workload}, c={concurrency}): missing baseline '{baseline_system}'; skipped"
                ));
                continue;
            }
        };
        let b = SampleSet::new(baseline_system, baseline_samples.clone(), metric.unit());
        for (system, samples) in by_system {
            if system == baseline_system {
                continue;
            }
            if samples.len() < 2 {
                warnings.push(format!(
                    "cell ({workload}, c={concurrency}): '{system}' has only {} repetition(s); skipped",
                    samples.len()
                ));
                continue;
            }
            let a = SampleSet::new(system.clone(), samples.clone(), metric.unit());
            match welch_test(&a, &b) {
                Ok(report) => comparisons.push(CellComparison {
                    workload: workload.clone(),
                    concurrency: *concurrency,
                    metric,
                    system: system.clone(),
                    baseline: baseline_system.to_string(),
                    report,
                }),
                Err(e) => warnings.push(format!(
                    "cell ({workload}, c={concurrency}): '{system}': {e}"
                )),
            }
        }
    }
    (comparisons, warnings)
}
