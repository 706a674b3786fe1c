//! One replication of the experiment, split into the stages the CLI exposes.
//!
//! Randomness: stage `k` of replication `r` draws from
//! `stage_rng(master_seed, k, r)`, so any stage can be re-run from the master
//! seed alone. Single-run commands use replication 0.

use anyhow::{Context as _, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

use persuasion::conformal::{
    calibrate, dataset_scores, evaluate_coverage, recalibrate_for_policy, ConformalCalibration,
    CoverageReport,
};
use persuasion::domain::{Scenario, SignalingPolicy};
use persuasion::neural::{train_with_report, Predictor, TrainReport};
use persuasion::receiver::{generate_dataset, BeliefFunction, Dataset};
use persuasion::rng::{derive_seed, seeded, stage_rng, StageRng};
use persuasion::robustopt::{
    exact_expected_utility, generate_candidates, optimize_policy, run_baseline, run_conformal_robust,
    shift_study, simulated_utility, verify_utility_bound, BaselineOptions, BoundReport, CandidateFamily,
    Method, MethodResult, PolicySearchConfig, ShiftRow, ShiftStudyOptions,
};

use crate::config::RunConfig;

/// Stage numbers of the seed scheme.
pub mod stage {
    pub const HISTORY: u64 = 1;
    pub const DATA: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const TEST: u64 = 5;
    pub const BOUND: u64 = 6;
    pub const RECAL: u64 = 7;
    pub const SHIFT: u64 = 8;
    pub const BASELINE_TEST: u64 = 9;
}

/// Validated config plus everything derived from it that is shared by all
/// replications.
pub struct Context {
    pub config: RunConfig,
    pub scenario: Scenario,
    pub belief_fn: BeliefFunction,
    pub baseline: SignalingPolicy,
    pub fingerprint: String,
}

impl Context {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let scenario = config.load_scenario()?;
        let belief_fn = config.belief_function(&scenario)?;
        let baseline = config.baseline_policy(&scenario)?;
        let fingerprint = config.fingerprint()?;
        Ok(Self {
            config,
            scenario,
            belief_fn,
            baseline,
            fingerprint,
        })
    }

    pub fn rng(&self, stage: u64, rep: u64) -> StageRng {
        stage_rng(self.config.master_seed, stage, rep)
    }

    /// The baseline followed by `K − 1` policies drawn from the history family.
    pub fn history_policies(&self, rep: u64) -> Result<Vec<SignalingPolicy>> {
        let d = &self.config.data;
        let mut out = vec![self.baseline.clone()];
        if d.n_policies > 1 {
            let family = generate_candidates(&self.scenario, &d.history, Some(&self.baseline))?;
            let mut rng = self.rng(stage::HISTORY, rep);
            for k in 1..d.n_policies {
                let pick = &family[rng.random_range(0..family.len())];
                out.push(pick.clone().with_id(format!("h{k}")));
            }
        }
        Ok(out)
    }

    pub fn generate(&self, rep: u64) -> Result<Dataset> {
        let policies = self.history_policies(rep)?;
        Ok(generate_dataset(
            &self.scenario,
            &policies,
            self.config.data.n_per_policy,
            &self.belief_fn,
            &mut self.rng(stage::DATA, rep),
        )?)
    }

    /// Training and calibration parts of the historical data.
    pub fn split(&self, rep: u64, data: &Dataset) -> Result<(Dataset, Dataset)> {
        let f = self.config.data.calibration_fraction;
        let (cal, train) = data.split(f, &mut self.rng(stage::SPLIT, rep))?;
        Ok((train, cal))
    }

    pub fn train(&self, rep: u64, train_data: &Dataset) -> Result<(Predictor, TrainReport)> {
        let seed = derive_seed(
            derive_seed(self.config.master_seed, stage::TRAIN, rep),
            self.config.training.seed,
            0,
        );
        Ok(train_with_report(
            train_data,
            &self.scenario,
            &self.config.model.hidden,
            &self.config.training,
            &mut seeded(seed),
        )?)
    }

    pub fn calibrate(&self, predictor: &Predictor, cal_data: &Dataset) -> Result<ConformalCalibration> {
        let kind = self.config.score_kind();
        let scores = dataset_scores(predictor, &self.scenario, &kind, cal_data)?;
        Ok(calibrate(kind, &scores, self.config.conformal.alpha)?)
    }

    pub fn candidates(&self) -> Result<Vec<SignalingPolicy>> {
        Ok(generate_candidates(&self.scenario, &self.config.search, Some(&self.baseline))?)
    }

    pub fn baseline_options(&self) -> BaselineOptions {
        BaselineOptions {
            belief_grid_resolution: self.config.evaluation.belief_grid_resolution,
            n_test: self.config.evaluation.n_test,
        }
    }
}

/// What the evaluation stage reports for one chosen policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub true_expected_utility: f64,
    pub test_utility: f64,
    pub test_std_error: f64,
    /// Coverage of the historical calibration under the chosen policy.
    pub coverage: CoverageReport,
    /// Coverage on the same test records after re-calibrating on records
    /// simulated under the chosen policy.
    pub recalibrated_coverage: CoverageReport,
    pub recalibrated_threshold: f64,
    pub bound: BoundReport,
}

pub fn evaluate_policy(
    ctx: &Context,
    rep: u64,
    predictor: &Predictor,
    calibration: &ConformalCalibration,
    policy: &SignalingPolicy,
) -> Result<PolicyEvaluation> {
    let ev = &ctx.config.evaluation;
    let sc = &ctx.scenario;
    let labelled = policy.clone().with_id(policy.id().unwrap_or("chosen").to_string());
    let mut test_rng = ctx.rng(stage::TEST, rep);
    let test = generate_dataset(sc, std::slice::from_ref(&labelled), ev.n_test, &ctx.belief_fn, &mut test_rng)?;
    let coverage = evaluate_coverage(predictor, sc, calibration, test.records(), |id| test.policy(id))?;
    let recal = recalibrate_for_policy(
        predictor,
        sc,
        policy,
        &ctx.belief_fn,
        ev.n_recal,
        calibration.alpha(),
        *calibration.score_kind(),
        &mut ctx.rng(stage::RECAL, rep),
    )?;
    let recalibrated_coverage = evaluate_coverage(predictor, sc, &recal, test.records(), |id| test.policy(id))?;
    let (test_utility, test_std_error) =
        simulated_utility(sc, policy, &ctx.belief_fn, ev.n_test, &mut ctx.rng(stage::TEST, rep))?;
    let bound = verify_utility_bound(
        sc,
        policy,
        predictor,
        calibration,
        &ctx.belief_fn,
        ev.n_bound,
        &mut ctx.rng(stage::BOUND, rep),
    )?;
    Ok(PolicyEvaluation {
        true_expected_utility: exact_expected_utility(sc, policy, &ctx.belief_fn)?,
        test_utility,
        test_std_error,
        coverage,
        recalibrated_coverage,
        recalibrated_threshold: recal.threshold(),
        bound,
    })
}

/// Everything one replication seed produces.
pub struct Replication {
    pub seed_index: u64,
    pub predictor: Predictor,
    pub train_report: TrainReport,
    pub calibration: ConformalCalibration,
    /// Coverage of the calibrated sets on fresh records under the baseline.
    pub baseline_coverage: CoverageReport,
    /// In [`Method::ALL`] order.
    pub methods: Vec<MethodResult>,
    pub evaluation: PolicyEvaluation,
}

impl Replication {
    pub fn method(&self, m: Method) -> &MethodResult {
        self.methods
            .iter()
            .find(|r| r.method == m)
            .expect("every method runs in a replication")
    }
}

/// Trains and calibrates on replication `rep`'s historical data.
pub fn fit(ctx: &Context, rep: u64) -> Result<(Predictor, TrainReport, ConformalCalibration)> {
    let data = ctx.generate(rep)?;
    let (train_data, cal_data) = ctx.split(rep, &data)?;
    let (predictor, report) = ctx.train(rep, &train_data)?;
    let calibration = ctx.calibrate(&predictor, &cal_data)?;
    Ok((predictor, report, calibration))
}

pub fn run_replication(ctx: &Context, rep: u64, candidates: &[SignalingPolicy]) -> Result<Replication> {
    let (predictor, train_report, calibration) = fit(ctx, rep)?;
    let opts = ctx.baseline_options();
    // every method sees the same test stream
    let mut methods = Vec::with_capacity(Method::ALL.len());
    for m in Method::ALL {
        let mut rng = ctx.rng(stage::TEST, rep);
        let r = match m {
            Method::ConformalRobust => run_conformal_robust(
                &ctx.scenario,
                candidates,
                &predictor,
                &calibration,
                &ctx.belief_fn,
                opts.n_test,
                &mut rng,
            )?,
            _ => run_baseline(m, &ctx.scenario, candidates, &ctx.belief_fn, &opts, &mut rng)?,
        };
        methods.push(r);
    }
    let chosen = methods
        .iter()
        .find(|r| r.method == Method::ConformalRobust)
        .map(|r| r.chosen_policy.clone())
        .expect("conformal-robust ran");
    let evaluation = evaluate_policy(ctx, rep, &predictor, &calibration, &chosen)?;
    let baseline_coverage = baseline_coverage(ctx, rep, &predictor, &calibration)?;
    Ok(Replication {
        seed_index: rep,
        predictor,
        train_report,
        calibration,
        baseline_coverage,
        methods,
        evaluation,
    })
}

pub fn baseline_coverage(
    ctx: &Context,
    rep: u64,
    predictor: &Predictor,
    calibration: &ConformalCalibration,
) -> Result<CoverageReport> {
    let test = generate_dataset(
        &ctx.scenario,
        std::slice::from_ref(&ctx.baseline),
        ctx.config.evaluation.n_test,
        &ctx.belief_fn,
        &mut ctx.rng(stage::BASELINE_TEST, rep),
    )?;
    Ok(evaluate_coverage(predictor, &ctx.scenario, calibration, test.records(), |id| test.policy(id))?)
}

/// Coverage of a baseline-calibrated predictor under candidates within the
/// configured total-variation radius of the baseline.
pub fn run_shift_study(ctx: &Context, rep: u64, predictor: &Predictor) -> Result<Vec<ShiftRow>> {
    let s = &ctx.config.shift;
    let mut rng = ctx.rng(stage::SHIFT, rep);
    let cal_data = generate_dataset(
        &ctx.scenario,
        std::slice::from_ref(&ctx.baseline),
        s.n_cal,
        &ctx.belief_fn,
        &mut rng,
    )?;
    let calibration = ctx.calibrate(predictor, &cal_data)?;
    let search = PolicySearchConfig {
        family: CandidateFamily::BaselinePerturbation,
        resolution_or_count: s.n_candidates,
        max_tv_from_baseline: Some(s.max_tv),
        seed: derive_seed(ctx.config.master_seed, stage::SHIFT, rep),
    };
    let candidates = generate_candidates(&ctx.scenario, &search, Some(&ctx.baseline))?;
    Ok(shift_study(
        &ctx.scenario,
        predictor,
        &calibration,
        &ctx.baseline,
        &candidates,
        &ctx.belief_fn,
        &ShiftStudyOptions {
            n_cal_sim: s.n_cal_sim,
            n_test: s.n_test,
        },
        &mut rng,
    )?)
}

/// Robust-optimal candidate, its index and value.
pub fn optimize(
    ctx: &Context,
    predictor: &Predictor,
    calibration: &ConformalCalibration,
    candidates: &[SignalingPolicy],
) -> Result<(usize, SignalingPolicy, f64)> {
    let (policy, value) = optimize_policy(&ctx.scenario, candidates, predictor, calibration)?;
    let index = candidates
        .iter()
        .position(|c| c == &policy)
        .context("optimizer returned a policy outside the candidate list")?;
    Ok((index, policy, value))
}
