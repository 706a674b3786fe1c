//! Experiment driver: configuration, the single-run pipeline stages with
//! stale-artifact protection, and the multi-seed replication experiments.

pub mod config;
pub mod experiments;
pub mod pipeline;
pub mod stages;
pub mod tables;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::experiments::{reproduce_coverage_shift, reproduce_utilities, Experiment};
use crate::pipeline::Context;
use crate::stages::Workspace;

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "PERSUADE_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Verb {
    Generate,
    Train,
    Calibrate,
    Optimize,
    Evaluate,
    ShiftStudy,
    Reproduce,
}

#[derive(Debug, Parser)]
#[command(name = "persuade", version, about = "Conformal-robust Bayesian persuasion experiments")]
pub struct Args {
    pub verb: Verb,
    /// TOML run config; the smart-grid defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// utilities or coverage-shift (reproduce only).
    #[arg(long, default_value = "utilities")]
    pub experiment: String,
    /// Overrides the config's seed count (reproduce only).
    #[arg(long)]
    pub seeds: Option<usize>,
}

pub fn load_config(args: &Args) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        config.master_seed = s;
    }
    if let Some(o) = &args.out {
        config.out_dir = o.clone();
    }
    if let Some(n) = args.seeds {
        config.evaluation.n_seeds = n;
    }
    config.validate()?;
    Ok(config)
}

/// Runs one verb and returns a short machine-readable result record.
pub fn run(args: &Args, mut log: impl FnMut(&str)) -> Result<Value> {
    let config = load_config(args)?;
    let out = config.out_dir.clone();
    let ctx = Context::new(config)?;
    let ws = Workspace::new(&ctx, &out)?;
    let head = |verb: &str| {
        json!({
            "verb": verb,
            "fingerprint": ctx.fingerprint,
            "master_seed": ctx.config.master_seed,
            "out_dir": out,
        })
    };
    let mut rec = head(match args.verb {
        Verb::Generate => "generate",
        Verb::Train => "train",
        Verb::Calibrate => "calibrate",
        Verb::Optimize => "optimize",
        Verb::Evaluate => "evaluate",
        Verb::ShiftStudy => "shift-study",
        Verb::Reproduce => "reproduce",
    });
    let extra = match args.verb {
        Verb::Generate => {
            let d = stages::cmd_generate(&ws)?;
            json!({ "records": d.len(), "policies": d.policies().len() })
        }
        Verb::Train => {
            let p = stages::cmd_train(&ws)?;
            json!({ "parameters": p.n_params() })
        }
        Verb::Calibrate => {
            let c = stages::cmd_calibrate(&ws)?;
            json!({ "threshold": c.threshold(), "n_cal": c.cal_scores().len() })
        }
        Verb::Optimize => {
            let o = stages::cmd_optimize(&ws)?;
            json!({ "policy": o.policy.id(), "robust_value": o.robust_value })
        }
        Verb::Evaluate => {
            let e = stages::cmd_evaluate(&ws)?;
            json!({
                "true_expected_utility": e.evaluation.true_expected_utility,
                "coverage": e.evaluation.coverage.rate,
                "bound_holds": e.evaluation.bound.holds,
            })
        }
        Verb::ShiftStudy => {
            let rows = stages::cmd_shift_study(&ws)?;
            json!({ "grid_points": rows.len() })
        }
        Verb::Reproduce => {
            let n = ctx.config.evaluation.n_seeds;
            match args.experiment.parse::<Experiment>()? {
                Experiment::Utilities => {
                    let (_, s) = reproduce_utilities(&ctx, n, &out, &mut log)?;
                    json!({
                        "experiment": "utilities",
                        "seeds": n,
                        "ordered_seeds_exact": s.ordered_seeds_exact,
                        "cr_minus_naive_exact": s.cr_minus_naive_exact,
                    })
                }
                Experiment::CoverageShift => {
                    let (_, s) = reproduce_coverage_shift(&ctx, n, &out, &mut log)?;
                    json!({
                        "experiment": "coverage-shift",
                        "seeds": n,
                        "min_coverage": s.min_coverage,
                        "all_bounds_met": s.all_bounds_met,
                    })
                }
            }
        }
    };
    if let (Value::Object(a), Value::Object(b)) = (&mut rec, extra) {
        a.extend(b);
    }
    Ok(rec)
}

/// The machine-readable record printed on failure.
pub fn error_record(err: &anyhow::Error) -> Value {
    json!({
        "status": "error",
        "message": err.to_string(),
        "causes": err.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
    })
}
