//! Delimited-text output rows. Every row carries the config fingerprint and
//! master seed so tables from different runs cannot be confused.

use std::fs;
use std::path::Path;

use anyhow::{Context as _, Result};
use serde::{Deserialize, Serialize};

use persuasion::robustopt::{MethodResult, ShiftRow};

use crate::pipeline::{Context, Replication};

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("flushing csv: {e}"))?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub fingerprint: String,
    pub master_seed: u64,
    pub seed_index: u64,
    pub method: String,
    pub policy: String,
    pub robust_value: f64,
    pub true_expected_utility: f64,
    pub test_utility: f64,
    pub test_std_error: f64,
    pub coverage: f64,
}

impl MethodRecord {
    pub fn new(ctx: &Context, seed_index: u64, r: &MethodResult) -> Self {
        Self {
            fingerprint: ctx.fingerprint.clone(),
            master_seed: ctx.config.master_seed,
            seed_index,
            method: r.method.label().to_string(),
            policy: r.chosen_policy.id().unwrap_or("").to_string(),
            robust_value: r.robust_value,
            true_expected_utility: r.true_expected_utility,
            test_utility: r.test_utility,
            test_std_error: r.test_std_error,
            coverage: r.coverage,
        }
    }
}

/// Per-seed coverage and bound figures for the conformal-robust choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub fingerprint: String,
    pub master_seed: u64,
    pub seed_index: u64,
    pub threshold: f64,
    pub baseline_coverage: f64,
    pub chosen_coverage: f64,
    pub recalibrated_coverage: f64,
    pub recalibrated_threshold: f64,
    pub bound_lhs: f64,
    pub bound_lhs_std_error: f64,
    pub bound_rhs: f64,
    pub bound_penalty: f64,
    pub bound_holds: bool,
}

impl CoverageRecord {
    pub fn new(ctx: &Context, rep: &Replication) -> Self {
        let e = &rep.evaluation;
        Self {
            fingerprint: ctx.fingerprint.clone(),
            master_seed: ctx.config.master_seed,
            seed_index: rep.seed_index,
            threshold: rep.calibration.threshold(),
            baseline_coverage: rep.baseline_coverage.rate,
            chosen_coverage: e.coverage.rate,
            recalibrated_coverage: e.recalibrated_coverage.rate,
            recalibrated_threshold: e.recalibrated_threshold,
            bound_lhs: e.bound.lhs,
            bound_lhs_std_error: e.bound.lhs_std_error,
            bound_rhs: e.bound.rhs,
            bound_penalty: e.bound.penalty,
            bound_holds: e.bound.holds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub fingerprint: String,
    pub master_seed: u64,
    pub seed_index: u64,
    pub candidate: String,
    pub delta_tv: f64,
    pub delta_mech: f64,
    pub delta_cal: f64,
    pub bound: f64,
    pub coverage: f64,
    pub coverage_std_error: f64,
    pub coverage_exact: f64,
    pub mean_set_size: f64,
}

impl ShiftRecord {
    pub fn new(ctx: &Context, seed_index: u64, r: &ShiftRow) -> Self {
        Self {
            fingerprint: ctx.fingerprint.clone(),
            master_seed: ctx.config.master_seed,
            seed_index,
            candidate: r.candidate.clone(),
            delta_tv: r.delta_tv,
            delta_mech: r.delta_mech,
            delta_cal: r.delta_cal,
            bound: r.bound,
            coverage: r.coverage,
            coverage_std_error: r.coverage_std_error,
            coverage_exact: r.coverage_exact,
            mean_set_size: r.mean_set_size,
        }
    }
}

/// Mean and sample standard deviation; the deviation is absent for one value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.len() > 1).then(|| {
            let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        });
        Self { mean, std }
    }
}
