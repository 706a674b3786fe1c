//! Robust policy selection against conformal action sets, policy-shift
//! diagnostics, the robust utility check, and the comparison baselines.
//!
//! The robust value of a policy replaces the receiver's unknown response at
//! every `(x, y, s)` by the sender's worst reward over the conformal set:
//!
//! ```text
//! V(π) = Σ_x μ(x) Σ_y μ(y|x) Σ_s π(s|x) · min_{u ∈ C(y, s, π)} r_s(x, u)
//! ```
//!
//! Everything is enumerated exactly; only the quantities that need the true
//! receiver (calibration drift, realized utility) are simulated.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::conformal::{
    dataset_scores, evaluate_coverage, policy_sets, ConformalCalibration, CoverageReport, ScoreKind,
};
use crate::domain::{
    best_response, classical_value, joint_ys, receiver_posterior, Categorical, Scenario,
    SignalingPolicy,
};
use crate::neural::{encode, Predictor};
use crate::receiver::{generate_dataset, simulate_interaction, BeliefFunction};
use crate::rng::seeded;
use crate::{Error, Result};

/// Robust value for precomputed action sets indexed `[y][s]`.
pub fn robust_value_with_sets(
    scenario: &Scenario,
    policy: &SignalingPolicy,
    sets: &[Vec<Vec<usize>>],
) -> f64 {
    let rs = scenario.sender_reward();
    let mut value = 0.0;
    for x in 0..scenario.n_states() {
        let mx = scenario.prior().prob(x);
        for (y, sets_y) in sets.iter().enumerate() {
            let mxy = mx * scenario.obs_likelihood(x, y);
            if mxy == 0.0 {
                continue;
            }
            for (s, set) in sets_y.iter().enumerate() {
                let w = mxy * policy.prob(x, s);
                if w == 0.0 {
                    continue;
                }
                let worst = set.iter().map(|&u| rs[x][u]).fold(f64::INFINITY, f64::min);
                value += w * worst;
            }
        }
    }
    value
}

pub fn robust_objective(
    scenario: &Scenario,
    policy: &SignalingPolicy,
    predictor: &Predictor,
    calibration: &ConformalCalibration,
) -> Result<f64> {
    let sets = policy_sets(predictor, scenario, calibration, policy)?;
    Ok(robust_value_with_sets(scenario, policy, &sets))
}

/// Index and value of the best candidate under `value`, first on ties.
pub fn argmax_candidates<F>(candidates: &[SignalingPolicy], mut value: F) -> Result<(usize, f64)>
where
    F: FnMut(&SignalingPolicy) -> Result<f64>,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in candidates.iter().enumerate() {
        let v = value(p)?;
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    best.ok_or(Error::Empty("candidate list"))
}

/// The candidate maximizing [`robust_objective`] and its value.
pub fn optimize_policy(
    scenario: &Scenario,
    candidates: &[SignalingPolicy],
    predictor: &Predictor,
    calibration: &ConformalCalibration,
) -> Result<(SignalingPolicy, f64)> {
    let (i, v) = argmax_candidates(candidates, |p| {
        robust_objective(scenario, p, predictor, calibration)
    })?;
    Ok((candidates[i].clone(), v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateFamily {
    /// Every row on the simplex lattice `{k / resolution}`.
    Grid,
    /// Rows drawn uniformly from the simplex.
    RandomStochastic,
    /// Mixtures of the baseline with random policies at evenly spaced
    /// distances from it.
    BaselinePerturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySearchConfig {
    pub family: CandidateFamily,
    /// Lattice resolution for `grid`, candidate count otherwise.
    pub resolution_or_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tv_from_baseline: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl PolicySearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution_or_count == 0 {
            return Err(Error::InvalidParameter(
                "candidate resolution/count must be at least 1".into(),
            ));
        }
        if let Some(t) = self.max_tv_from_baseline {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidParameter(format!("max_tv {t} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// All compositions of `resolution` into `parts` parts, scaled to the simplex,
/// in lexicographic order of the numerators.
pub fn simplex_lattice(parts: usize, resolution: usize) -> Vec<Vec<f64>> {
    fn rec(parts: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(parts - 1, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut raw = Vec::new();
    rec(parts, resolution, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|c| c.into_iter().map(|k| k as f64 / resolution as f64).collect())
        .collect()
}

fn random_simplex_row<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|d| d / total).collect()
}

fn random_policy<R: Rng + ?Sized>(n_states: usize, n_signals: usize, rng: &mut R) -> SignalingPolicy {
    let rows = (0..n_states)
        .map(|_| random_simplex_row(n_signals, rng))
        .collect();
    SignalingPolicy::new(rows).expect("simplex draws are valid rows")
}

/// `(1 − t)·a + t·b`, row by row.
pub fn mix_policies(a: &SignalingPolicy, b: &SignalingPolicy, t: f64) -> SignalingPolicy {
    let rows = a
        .rows()
        .iter()
        .zip(b.rows())
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(p, q)| (1.0 - t) * p + t * q).collect())
        .collect();
    SignalingPolicy::new(rows).expect("mixture of stochastic rows is stochastic")
}

pub fn generate_candidates(
    scenario: &Scenario,
    config: &PolicySearchConfig,
    baseline: Option<&SignalingPolicy>,
) -> Result<Vec<SignalingPolicy>> {
    config.validate()?;
    if let Some(b) = baseline {
        scenario.check_policy(b)?;
    }
    let (nx, ns) = (scenario.n_states(), scenario.n_signals());
    let mut rng = seeded(config.seed);
    let mut out: Vec<SignalingPolicy> = match config.family {
        CandidateFamily::Grid => {
            let rows = simplex_lattice(ns, config.resolution_or_count);
            let total = rows.len().pow(nx as u32);
            (0..total)
                .map(|mut code| {
                    // the last state varies fastest
                    let mut pick = vec![0; nx];
                    for p in pick.iter_mut().rev() {
                        *p = code % rows.len();
                        code /= rows.len();
                    }
                    SignalingPolicy::new(pick.iter().map(|&i| rows[i].clone()).collect())
                        .expect("lattice rows are stochastic")
                })
                .collect()
        }
        CandidateFamily::RandomStochastic => (0..config.resolution_or_count)
            .map(|_| random_policy(nx, ns, &mut rng))
            .collect(),
        CandidateFamily::BaselinePerturbation => {
            let base = baseline.ok_or_else(|| {
                Error::InvalidParameter("baseline-perturbation needs a baseline policy".into())
            })?;
            let base_joint = joint_ys(scenario, base);
            let count = config.resolution_or_count;
            let mut out = vec![base.clone()];
            for i in 1..count {
                let frac = i as f64 / (count - 1) as f64;
                let dir = random_policy(nx, ns, &mut rng);
                let dist = joint_ys(scenario, &dir).tv_distance(&base_joint);
                // the joint law is linear in π, so Δ_TV of the mixture is t·dist
                let t = match config.max_tv_from_baseline {
                    Some(max_tv) if dist > 0.0 => (max_tv * frac / dist).min(1.0),
                    Some(_) => 0.0,
                    None => frac,
                };
                let cand = mix_policies(base, &dir, t);
                if !out.contains(&cand) {
                    out.push(cand);
                }
            }
            out
        }
    };
    if let (Some(max_tv), Some(b)) = (config.max_tv_from_baseline, baseline) {
        // 1e-12 absorbs rounding in the mixture construction
        out.retain(|p| delta_tv(scenario, p, b) <= max_tv + 1e-12);
        if out.is_empty() {
            return Err(Error::InfeasibleFilter(format!(
                "no candidate within total variation {max_tv} of the baseline"
            )));
        }
    }
    let prefix = match config.family {
        CandidateFamily::Grid => "grid",
        CandidateFamily::RandomStochastic => "rand",
        CandidateFamily::BaselinePerturbation => "pert",
    };
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.with_id(format!("{prefix}-{i}")))
        .collect())
}

/// Total-variation distance between the `(Y, S)` laws of two policies.
pub fn delta_tv(scenario: &Scenario, pi: &SignalingPolicy, pi_hat: &SignalingPolicy) -> f64 {
    joint_ys(scenario, pi).tv_distance(&joint_ys(scenario, pi_hat))
}

/// Model-based mechanism shift: the largest total-variation distance between
/// predicted action laws under the two policies over all `(y, s)`.
pub fn delta_mech_model(
    scenario: &Scenario,
    predictor: &Predictor,
    pi: &SignalingPolicy,
    pi_hat: &SignalingPolicy,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for y in 0..scenario.n_obs() {
        for s in 0..scenario.n_signals() {
            let a = predictor.forward(&encode(scenario, y, s, pi)?, crate::neural::Mode::Infer)?;
            let b = predictor.forward(&encode(scenario, y, s, pi_hat)?, crate::neural::Mode::Infer)?;
            worst = worst.max(a.tv_distance(&b));
        }
    }
    Ok(worst)
}

/// Simulated calibration drift `|E_π[e(Y,S,π,U)] − E_π̂[e(Y,S,π̂,U)]|`.
///
/// Both samples are driven by the same seed, drawn once from `rng`, so equal
/// policies give exactly zero. Needs the true receiver: evaluation only.
#[allow(clippy::too_many_arguments)]
pub fn delta_cal_sim<R: Rng + ?Sized>(
    scenario: &Scenario,
    predictor: &Predictor,
    score_kind: &ScoreKind,
    pi: &SignalingPolicy,
    pi_hat: &SignalingPolicy,
    belief_fn: &BeliefFunction,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    let seed: u64 = rng.random();
    let mean_score = |policy: &SignalingPolicy| -> Result<f64> {
        let data = generate_dataset(
            scenario,
            std::slice::from_ref(policy),
            n,
            belief_fn,
            &mut seeded(seed),
        )?;
        let scores = dataset_scores(predictor, scenario, score_kind, &data)?;
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    };
    Ok((mean_score(pi)? - mean_score(pi_hat)?).abs())
}

/// The three shift terms and the coverage floor they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftMeasures {
    pub delta_tv: f64,
    pub delta_mech: f64,
    pub delta_cal: f64,
    pub coverage_lower_bound: f64,
}

impl ShiftMeasures {
    pub fn new(alpha: f64, delta_tv: f64, delta_mech: f64, delta_cal: f64) -> Self {
        let mut m = Self {
            delta_tv,
            delta_mech,
            delta_cal,
            coverage_lower_bound: 0.0,
        };
        m.coverage_lower_bound = coverage_lower_bound(alpha, &m);
        m
    }
}

/// `1 − α − 2Δ_TV − Δ_mech − Δ_cal`, unclamped.
pub fn coverage_lower_bound(alpha: f64, measures: &ShiftMeasures) -> f64 {
    1.0 - alpha - 2.0 * measures.delta_tv - measures.delta_mech - measures.delta_cal
}

/// Exact expected sender reward of `policy` against the true receiver.
pub fn exact_expected_utility(
    scenario: &Scenario,
    policy: &SignalingPolicy,
    belief_fn: &BeliefFunction,
) -> Result<f64> {
    let rs = scenario.sender_reward();
    let mut value = 0.0;
    for_each_reachable(scenario, policy, |x, y, s, w| {
        let dist = belief_fn.action_distribution(scenario, policy, y, s)?;
        value += w * dist.probs().iter().zip(&rs[x]).map(|(p, r)| p * r).sum::<f64>();
        Ok(())
    })?;
    Ok(value)
}

/// Exact probability that the true receiver's action lands in `sets[y][s]`.
pub fn exact_set_coverage(
    scenario: &Scenario,
    policy: &SignalingPolicy,
    belief_fn: &BeliefFunction,
    sets: &[Vec<Vec<usize>>],
) -> Result<f64> {
    let mut cov = 0.0;
    for_each_reachable(scenario, policy, |_, y, s, w| {
        let dist = belief_fn.action_distribution(scenario, policy, y, s)?;
        cov += w * sets[y][s].iter().map(|&u| dist.prob(u)).sum::<f64>();
        Ok(())
    })?;
    Ok(cov)
}

fn for_each_reachable<F>(scenario: &Scenario, policy: &SignalingPolicy, mut f: F) -> Result<()>
where
    F: FnMut(usize, usize, usize, f64) -> Result<()>,
{
    for x in 0..scenario.n_states() {
        let mx = scenario.prior().prob(x);
        for y in 0..scenario.n_obs() {
            let mxy = mx * scenario.obs_likelihood(x, y);
            for s in 0..scenario.n_signals() {
                let w = mxy * policy.prob(x, s);
                if w > 0.0 {
                    f(x, y, s, w)?;
                }
            }
        }
    }
    Ok(())
}

/// Mean sender reward over `n` simulated interactions and its standard error.
pub fn simulated_utility<R: Rng + ?Sized>(
    scenario: &Scenario,
    policy: &SignalingPolicy,
    belief_fn: &BeliefFunction,
    n: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one simulated interaction".into()));
    }
    let rs = scenario.sender_reward();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let (x, _, _, u) = simulate_interaction(scenario, policy, belief_fn, rng)?;
        let r = rs[x][u];
        sum += r;
        sum_sq += r * r;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok((mean, (var / nf).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Simulated mean sender reward under the chosen policy.
    pub lhs: f64,
    pub lhs_std_error: f64,
    /// Robust value minus `α(M − m)`.
    pub rhs: f64,
    pub robust_value: f64,
    pub penalty: f64,
    pub slack: f64,
    /// `lhs ≥ rhs − 3·SE`.
    pub holds: bool,
}

/// Checks realized utility against the robust value less `α(M − m)`.
pub fn verify_utility_bound<R: Rng + ?Sized>(
    scenario: &Scenario,
    chosen_policy: &SignalingPolicy,
    predictor: &Predictor,
    calibration: &ConformalCalibration,
    belief_fn: &BeliefFunction,
    n: usize,
    rng: &mut R,
) -> Result<BoundReport> {
    let robust_value = robust_objective(scenario, chosen_policy, predictor, calibration)?;
    let penalty = utility_penalty(scenario, calibration.alpha());
    let (lhs, se) = simulated_utility(scenario, chosen_policy, belief_fn, n, rng)?;
    let rhs = robust_value - penalty;
    Ok(BoundReport {
        lhs,
        lhs_std_error: se,
        rhs,
        robust_value,
        penalty,
        slack: lhs - rhs,
        holds: lhs >= rhs - 3.0 * se,
    })
}

/// `α(M − m)` for the scenario's sender rewards.
pub fn utility_penalty(scenario: &Scenario, alpha: f64) -> f64 {
    alpha * (scenario.sender_max() - scenario.sender_min())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Oracle,
    ConformalRobust,
    WorstCase,
    Naive,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Oracle,
        Method::ConformalRobust,
        Method::WorstCase,
        Method::Naive,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::ConformalRobust => "conformal-robust",
            Method::WorstCase => "worst-case",
            Method::Naive => "naive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub chosen_policy: SignalingPolicy,
    /// The method's own selection criterion at its chosen policy.
    pub robust_value: f64,
    /// Exact expected sender reward against the true receiver.
    pub true_expected_utility: f64,
    /// Mean sender reward over the simulated test interactions.
    pub test_utility: f64,
    pub test_std_error: f64,
    /// Exact probability that the true action lies in the action set the
    /// method planned against.
    pub coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineOptions {
    /// Lattice resolution of the worst-case belief grid.
    pub belief_grid_resolution: usize,
    /// Simulated interactions behind `test_utility`.
    pub n_test: usize,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            belief_grid_resolution: 10,
            n_test: 500,
        }
    }
}

/// Actions that best respond, after seeing `signal`, to some belief on the
/// lattice. Beliefs that give the signal zero mass are skipped.
pub fn rationalizable_actions(
    scenario: &Scenario,
    policy: &SignalingPolicy,
    signal: usize,
    belief_grid: &[Categorical],
) -> Vec<usize> {
    let mut seen = vec![false; scenario.n_actions()];
    for theta in belief_grid {
        if let Ok(post) = receiver_posterior(policy, theta, signal) {
            seen[best_response(&post, scenario.receiver_reward())] = true;
        }
    }
    (0..scenario.n_actions()).filter(|&u| seen[u]).collect()
}

pub fn belief_lattice(n_states: usize, resolution: usize) -> Vec<Categorical> {
    simplex_lattice(n_states, resolution)
        .into_iter()
        .map(|p| Categorical::new(p).expect("lattice point is a distribution"))
        .collect()
}

fn worst_case_sets(
    scenario: &Scenario,
    policy: &SignalingPolicy,
    grid: &[Categorical],
) -> Vec<Vec<Vec<usize>>> {
    let by_signal: Vec<Vec<usize>> = (0..scenario.n_signals())
        .map(|s| rationalizable_actions(scenario, policy, s, grid))
        .collect();
    vec![by_signal; scenario.n_obs()]
}

/// Worst-case value: sender's worst reward over rationalizable actions.
pub fn worst_case_value(scenario: &Scenario, policy: &SignalingPolicy, grid: &[Categorical]) -> f64 {
    robust_value_with_sets(scenario, policy, &worst_case_sets(scenario, policy, grid))
}

fn classical_sets(scenario: &Scenario, policy: &SignalingPolicy) -> Vec<Vec<Vec<usize>>> {
    let by_signal: Vec<Vec<usize>> = (0..scenario.n_signals())
        .map(|s| {
            crate::domain::posterior_from_signal(scenario, policy, s)
                .map(|post| vec![best_response(&post, scenario.receiver_reward())])
                .unwrap_or_default()
        })
        .collect();
    vec![by_signal; scenario.n_obs()]
}

fn full_support_sets(
    scenario: &Scenario,
    policy: &SignalingPolicy,
    belief_fn: &BeliefFunction,
) -> Result<Vec<Vec<Vec<usize>>>> {
    (0..scenario.n_obs())
        .map(|y| {
            (0..scenario.n_signals())
                .map(|s| {
                    match belief_fn.action_distribution(scenario, policy, y, s) {
                        Ok(d) => Ok((0..d.len()).filter(|&u| d.prob(u) > 0.0).collect()),
                        // pair never occurs under this policy
                        Err(Error::BeliefIncompatibleSignal { .. }) => Ok(Vec::new()),
                        Err(e) => Err(e),
                    }
                })
                .collect()
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn finish_result<R: Rng + ?Sized>(
    method: Method,
    scenario: &Scenario,
    policy: &SignalingPolicy,
    criterion: f64,
    planned_sets: &[Vec<Vec<usize>>],
    belief_fn: &BeliefFunction,
    n_test: usize,
    rng: &mut R,
) -> Result<MethodResult> {
    let (test_utility, test_std_error) = simulated_utility(scenario, policy, belief_fn, n_test, rng)?;
    Ok(MethodResult {
        method,
        chosen_policy: policy.clone(),
        robust_value: criterion,
        true_expected_utility: exact_expected_utility(scenario, policy, belief_fn)?,
        test_utility,
        test_std_error,
        coverage: exact_set_coverage(scenario, policy, belief_fn, planned_sets)?.clamp(0.0, 1.0),
    })
}

/// Runs one of the comparison baselines over `candidates`.
///
/// - oracle: maximizes the exact expected utility against the true receiver.
/// - naive: classical persuasion against a Bayesian receiver with the true
///   prior and no private observation.
/// - worst-case: maximizes the sender's worst reward over actions that are a
///   best response to some belief on a simplex lattice.
pub fn run_baseline<R: Rng + ?Sized>(
    method: Method,
    scenario: &Scenario,
    candidates: &[SignalingPolicy],
    belief_fn: &BeliefFunction,
    options: &BaselineOptions,
    rng: &mut R,
) -> Result<MethodResult> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    match method {
        Method::Oracle => {
            let (i, v) = argmax_candidates(candidates, |p| exact_expected_utility(scenario, p, belief_fn))?;
            let sets = full_support_sets(scenario, &candidates[i], belief_fn)?;
            finish_result(method, scenario, &candidates[i], v, &sets, belief_fn, options.n_test, rng)
        }
        Method::Naive => {
            let (i, v) = argmax_candidates(candidates, |p| classical_value(scenario, p))?;
            let sets = classical_sets(scenario, &candidates[i]);
            finish_result(method, scenario, &candidates[i], v, &sets, belief_fn, options.n_test, rng)
        }
        Method::WorstCase => {
            if options.belief_grid_resolution == 0 {
                return Err(Error::InvalidParameter("belief grid resolution must be at least 1".into()));
            }
            let grid = belief_lattice(scenario.n_states(), options.belief_grid_resolution);
            let (i, v) = argmax_candidates(candidates, |p| Ok(worst_case_value(scenario, p, &grid)))?;
            let sets = worst_case_sets(scenario, &candidates[i], &grid);
            finish_result(method, scenario, &candidates[i], v, &sets, belief_fn, options.n_test, rng)
        }
        Method::ConformalRobust => Err(Error::InvalidParameter(
            "conformal-robust needs a predictor; use run_conformal_robust".into(),
        )),
    }
}

/// The proposed method: robust optimization over conformal sets.
#[allow(clippy::too_many_arguments)]
pub fn run_conformal_robust<R: Rng + ?Sized>(
    scenario: &Scenario,
    candidates: &[SignalingPolicy],
    predictor: &Predictor,
    calibration: &ConformalCalibration,
    belief_fn: &BeliefFunction,
    n_test: usize,
    rng: &mut R,
) -> Result<MethodResult> {
    let (policy, value) = optimize_policy(scenario, candidates, predictor, calibration)?;
    let sets = policy_sets(predictor, scenario, calibration, &policy)?;
    finish_result(
        Method::ConformalRobust,
        scenario,
        &policy,
        value,
        &sets,
        belief_fn,
        n_test,
        rng,
    )
}

/// One row of a policy-shift study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
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

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftStudyOptions {
    /// Simulated records per policy for the calibration-drift estimate.
    pub n_cal_sim: usize,
    /// Simulated test records per candidate for empirical coverage.
    pub n_test: usize,
}

/// Coverage of the baseline calibration under each candidate, next to the
/// shift measures and the coverage floor they imply.
#[allow(clippy::too_many_arguments)]
pub fn shift_study<R: Rng + ?Sized>(
    scenario: &Scenario,
    predictor: &Predictor,
    calibration: &ConformalCalibration,
    baseline: &SignalingPolicy,
    candidates: &[SignalingPolicy],
    belief_fn: &BeliefFunction,
    options: &ShiftStudyOptions,
    rng: &mut R,
) -> Result<Vec<ShiftRow>> {
    candidates
        .iter()
        .enumerate()
        .map(|(i, cand)| {
            let tv = delta_tv(scenario, cand, baseline);
            let mech = delta_mech_model(scenario, predictor, cand, baseline)?;
            let cal = delta_cal_sim(
                scenario,
                predictor,
                calibration.score_kind(),
                cand,
                baseline,
                belief_fn,
                options.n_cal_sim,
                rng,
            )?;
            let measures = ShiftMeasures::new(calibration.alpha(), tv, mech, cal);
            let id = cand.id().map(str::to_string).unwrap_or_else(|| format!("cand-{i}"));
            let labelled = cand.clone().with_id(id.clone());
            let test = generate_dataset(
                scenario,
                std::slice::from_ref(&labelled),
                options.n_test,
                belief_fn,
                rng,
            )?;
            let rep: CoverageReport =
                evaluate_coverage(predictor, scenario, calibration, test.records(), |pid| test.policy(pid))?;
            let sets = policy_sets(predictor, scenario, calibration, cand)?;
            Ok(ShiftRow {
                candidate: id,
                delta_tv: tv,
                delta_mech: mech,
                delta_cal: cal,
                bound: measures.coverage_lower_bound,
                coverage: rep.rate,
                coverage_std_error: rep.std_error(),
                coverage_exact: exact_set_coverage(scenario, cand, belief_fn, &sets)?,
                mean_set_size: rep.mean_set_size,
            })
        })
        .collect()
}
