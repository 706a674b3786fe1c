//! Multi-seed replication experiments and their summary tables.

use std::path::Path;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use persuasion::robustopt::Method;

use crate::pipeline::{fit, run_replication, run_shift_study, Context, Replication};
use crate::tables::{write_csv, CoverageRecord, MethodRecord, ShiftRecord, Stat};

pub const UTILITIES_PER_SEED: &str = "utilities_per_seed.csv";
pub const UTILITIES_COVERAGE: &str = "utilities_coverage.csv";
pub const UTILITIES_SUMMARY_CSV: &str = "utilities_summary.csv";
pub const UTILITIES_SUMMARY_JSON: &str = "utilities_summary.json";
pub const SHIFT_PER_SEED: &str = "shift_per_seed.csv";
pub const SHIFT_SUMMARY_CSV: &str = "shift_summary.csv";
pub const SHIFT_SUMMARY_JSON: &str = "shift_summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Utilities,
    CoverageShift,
}

impl std::str::FromStr for Experiment {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "utilities" => Ok(Self::Utilities),
            "coverage-shift" => Ok(Self::CoverageShift),
            other => bail!("unknown experiment {other:?} (expected utilities or coverage-shift)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub fingerprint: String,
    pub master_seed: u64,
    pub method: String,
    pub n_seeds: usize,
    pub mean_test_utility: f64,
    pub std_test_utility: Option<f64>,
    pub mean_true_utility: f64,
    pub std_true_utility: Option<f64>,
    pub mean_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitiesSummary {
    pub fingerprint: String,
    pub master_seed: u64,
    pub n_seeds: usize,
    /// In oracle, conformal-robust, worst-case, naive order.
    pub methods: Vec<MethodSummary>,
    /// Seeds where oracle > conformal-robust > worst-case > naive holds
    /// strictly on exact expected utility.
    pub ordered_seeds_exact: usize,
    /// The same on the simulated test means.
    pub ordered_seeds_test: usize,
    pub means_ordered_exact: bool,
    pub means_ordered_test: bool,
    pub cr_minus_naive_exact: f64,
    pub cr_minus_naive_test: f64,
    pub baseline_coverage: Stat,
    pub chosen_coverage: Stat,
    pub recalibrated_coverage: Stat,
    pub recalibrated_at_least_nominal: usize,
    pub recalibration_not_worse: usize,
    pub bound_holds: usize,
    pub bound_penalty: f64,
}

fn strictly_ordered(xs: [f64; 4]) -> bool {
    xs.windows(2).all(|w| w[0] > w[1])
}

pub fn summarize_utilities(ctx: &Context, reps: &[Replication]) -> Result<UtilitiesSummary> {
    if reps.is_empty() {
        bail!("no replications to summarize");
    }
    let order = Method::ALL;
    let mut methods = Vec::new();
    for m in order {
        let test: Vec<f64> = reps.iter().map(|r| r.method(m).test_utility).collect();
        let exact: Vec<f64> = reps.iter().map(|r| r.method(m).true_expected_utility).collect();
        let cov: Vec<f64> = reps.iter().map(|r| r.method(m).coverage).collect();
        let (t, e) = (Stat::of(&test), Stat::of(&exact));
        methods.push(MethodSummary {
            fingerprint: ctx.fingerprint.clone(),
            master_seed: ctx.config.master_seed,
            method: m.label().to_string(),
            n_seeds: reps.len(),
            mean_test_utility: t.mean,
            std_test_utility: t.std,
            mean_true_utility: e.mean,
            std_true_utility: e.std,
            mean_coverage: Stat::of(&cov).mean,
        });
    }
    let per_seed = |f: fn(&persuasion::robustopt::MethodResult) -> f64| {
        reps.iter()
            .filter(|r| strictly_ordered(order.map(|m| f(r.method(m)))))
            .count()
    };
    let ordered_seeds_exact = per_seed(|r| r.true_expected_utility);
    let ordered_seeds_test = per_seed(|r| r.test_utility);
    let means_exact: [f64; 4] = std::array::from_fn(|i| methods[i].mean_true_utility);
    let means_test: [f64; 4] = std::array::from_fn(|i| methods[i].mean_test_utility);

    let col = |f: fn(&Replication) -> f64| reps.iter().map(f).collect::<Vec<_>>();
    let nominal = 1.0 - ctx.config.conformal.alpha;
    Ok(UtilitiesSummary {
        fingerprint: ctx.fingerprint.clone(),
        master_seed: ctx.config.master_seed,
        n_seeds: reps.len(),
        ordered_seeds_exact,
        ordered_seeds_test,
        means_ordered_exact: strictly_ordered(means_exact),
        means_ordered_test: strictly_ordered(means_test),
        cr_minus_naive_exact: means_exact[1] - means_exact[3],
        cr_minus_naive_test: means_test[1] - means_test[3],
        methods,
        baseline_coverage: Stat::of(&col(|r| r.baseline_coverage.rate)),
        chosen_coverage: Stat::of(&col(|r| r.evaluation.coverage.rate)),
        recalibrated_coverage: Stat::of(&col(|r| r.evaluation.recalibrated_coverage.rate)),
        recalibrated_at_least_nominal: reps
            .iter()
            .filter(|r| r.evaluation.recalibrated_coverage.rate >= nominal - 1e-12)
            .count(),
        recalibration_not_worse: reps
            .iter()
            .filter(|r| r.evaluation.recalibrated_coverage.rate >= r.evaluation.coverage.rate)
            .count(),
        bound_holds: reps.iter().filter(|r| r.evaluation.bound.holds).count(),
        bound_penalty: reps[0].evaluation.bound.penalty,
    })
}

/// Runs `n_seeds` replications of the utility comparison and writes the
/// per-seed and summary tables into `out`.
pub fn reproduce_utilities(
    ctx: &Context,
    n_seeds: usize,
    out: &Path,
    mut log: impl FnMut(&str),
) -> Result<(Vec<Replication>, UtilitiesSummary)> {
    if n_seeds == 0 {
        bail!("seeds must be at least 1");
    }
    std::fs::create_dir_all(out)?;
    let candidates = ctx.candidates()?;
    let mut reps = Vec::with_capacity(n_seeds);
    for rep in 0..n_seeds as u64 {
        let r = run_replication(ctx, rep, &candidates)?;
        log(&format!(
            "seed {rep}: {}",
            Method::ALL
                .iter()
                .map(|&m| format!("{}={:.3}", m.label(), r.method(m).true_expected_utility))
                .collect::<Vec<_>>()
                .join(" ")
        ));
        reps.push(r);
    }
    let per_seed: Vec<MethodRecord> = reps
        .iter()
        .flat_map(|r| r.methods.iter().map(|m| MethodRecord::new(ctx, r.seed_index, m)))
        .collect();
    let coverage: Vec<CoverageRecord> = reps.iter().map(|r| CoverageRecord::new(ctx, r)).collect();
    let summary = summarize_utilities(ctx, &reps)?;
    write_csv(&out.join(UTILITIES_PER_SEED), &per_seed)?;
    write_csv(&out.join(UTILITIES_COVERAGE), &coverage)?;
    write_csv(&out.join(UTILITIES_SUMMARY_CSV), &summary.methods)?;
    std::fs::write(out.join(UTILITIES_SUMMARY_JSON), serde_json::to_string_pretty(&summary)?)?;
    Ok((reps, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSummaryRow {
    pub fingerprint: String,
    pub master_seed: u64,
    pub grid_index: usize,
    pub n_seeds: usize,
    pub delta_tv: f64,
    pub delta_mech: f64,
    pub delta_cal: f64,
    pub bound: f64,
    pub mean_coverage: f64,
    pub std_coverage: Option<f64>,
    pub min_coverage: f64,
    /// Seeds where coverage ≥ bound − 3 standard errors.
    pub bound_met: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSummary {
    pub fingerprint: String,
    pub master_seed: u64,
    pub n_seeds: usize,
    pub max_delta_tv: f64,
    pub min_coverage: f64,
    pub all_bounds_met: bool,
    pub rows: Vec<ShiftSummaryRow>,
}

pub fn summarize_shift(ctx: &Context, per_seed: &[Vec<ShiftRecord>]) -> Result<ShiftSummary> {
    let Some(first) = per_seed.first() else {
        bail!("no shift-study seeds to summarize");
    };
    let n_points = first.len();
    if per_seed.iter().any(|s| s.len() != n_points) {
        bail!("shift-study seeds produced grids of different sizes");
    }
    let mut rows = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let pts: Vec<&ShiftRecord> = per_seed.iter().map(|s| &s[k]).collect();
        let mean = |f: fn(&ShiftRecord) -> f64| Stat::of(&pts.iter().map(|p| f(p)).collect::<Vec<_>>());
        let cov = mean(|p| p.coverage);
        rows.push(ShiftSummaryRow {
            fingerprint: ctx.fingerprint.clone(),
            master_seed: ctx.config.master_seed,
            grid_index: k,
            n_seeds: pts.len(),
            delta_tv: mean(|p| p.delta_tv).mean,
            delta_mech: mean(|p| p.delta_mech).mean,
            delta_cal: mean(|p| p.delta_cal).mean,
            bound: mean(|p| p.bound).mean,
            mean_coverage: cov.mean,
            std_coverage: cov.std,
            min_coverage: pts.iter().map(|p| p.coverage).fold(f64::INFINITY, f64::min),
            bound_met: pts
                .iter()
                .filter(|p| p.coverage >= p.bound - 3.0 * p.coverage_std_error)
                .count(),
        });
    }
    Ok(ShiftSummary {
        fingerprint: ctx.fingerprint.clone(),
        master_seed: ctx.config.master_seed,
        n_seeds: per_seed.len(),
        max_delta_tv: rows.iter().map(|r| r.delta_tv).fold(0.0, f64::max),
        min_coverage: rows.iter().map(|r| r.min_coverage).fold(f64::INFINITY, f64::min),
        all_bounds_met: rows.iter().all(|r| r.bound_met == r.n_seeds),
        rows,
    })
}

/// Shift study over `n_seeds` independently trained predictors.
pub fn reproduce_coverage_shift(
    ctx: &Context,
    n_seeds: usize,
    out: &Path,
    mut log: impl FnMut(&str),
) -> Result<(Vec<Vec<ShiftRecord>>, ShiftSummary)> {
    if n_seeds == 0 {
        bail!("seeds must be at least 1");
    }
    std::fs::create_dir_all(out)?;
    let mut per_seed = Vec::with_capacity(n_seeds);
    for rep in 0..n_seeds as u64 {
        let (predictor, _, _) = fit(ctx, rep)?;
        let rows = run_shift_study(ctx, rep, &predictor)?;
        let records: Vec<ShiftRecord> = rows.iter().map(|r| ShiftRecord::new(ctx, rep, r)).collect();
        let worst = records.iter().map(|r| r.coverage).fold(f64::INFINITY, f64::min);
        log(&format!("seed {rep}: {} grid points, min coverage {worst:.4}", records.len()));
        per_seed.push(records);
    }
    let summary = summarize_shift(ctx, &per_seed)?;
    let flat: Vec<ShiftRecord> = per_seed.iter().flatten().cloned().collect();
    write_csv(&out.join(SHIFT_PER_SEED), &flat)?;
    write_csv(&out.join(SHIFT_SUMMARY_CSV), &summary.rows)?;
    std::fs::write(out.join(SHIFT_SUMMARY_JSON), serde_json::to_string_pretty(&summary)?)?;
    Ok((per_seed, summary))
}
