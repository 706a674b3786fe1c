//! Finite persuasion games: distributions, signaling policies, posteriors,
//! best responses, and the joint law of the receiver's observation and the
//! sender's signal.
//!
//! Everything here is exact enumeration over small finite spaces. All types
//! are immutable once constructed and validate their simplex invariants at
//! construction time.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Entries of a distribution must sum to one within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Inputs whose mass is off by at most this much are silently renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-6;

/// Index of the largest entry, smallest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn validate_simplex(probs: &[f64], what: &str) -> Result<Vec<f64>> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution(format!("{what}: empty support")));
    }
    if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "{what}: entry {bad} is negative or non-finite"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > RENORMALIZE_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what}: mass {total} deviates from 1"
        )));
    }
    Ok(probs.iter().map(|p| p / total).collect())
}

/// A probability distribution over `0..len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Ok(Self {
            probs: validate_simplex(&probs, "categorical")?,
        })
    }

    /// Normalizes non-negative weights. Fails when the total mass is zero.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights have zero mass".into()));
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform over an empty support");
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        assert!(at < n, "point mass outside the support");
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Inverse-CDF draw from a uniform variate in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // u landed in the rounding gap above the accumulated mass
        self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sample_with(rng.random::<f64>())
    }

    /// Total-variation distance, half the L1 distance.
    pub fn tv_distance(&self, other: &Categorical) -> f64 {
        tv_distance(&self.probs, &other.probs)
    }
}

impl TryFrom<Vec<f64>> for Categorical {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Categorical::new(probs)
    }
}

impl From<Categorical> for Vec<f64> {
    fn from(c: Categorical) -> Self {
        c.probs
    }
}

/// Half L1 distance between two equal-length mass vectors.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    0.5 * a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>()
}

/// Row-stochastic state-to-signal matrix, the sender's commitment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct SignalingPolicy {
    rows: Vec<Vec<f64>>,
    id: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RawPolicy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    probs: Vec<Vec<f64>>,
}

impl TryFrom<RawPolicy> for SignalingPolicy {
    type Error = Error;

    fn try_from(raw: RawPolicy) -> Result<Self> {
        let policy = SignalingPolicy::new(raw.probs)?;
        Ok(match raw.id {
            Some(id) => policy.with_id(id),
            None => policy,
        })
    }
}

impl From<SignalingPolicy> for RawPolicy {
    fn from(p: SignalingPolicy) -> Self {
        RawPolicy {
            id: p.id,
            probs: p.rows,
        }
    }
}

impl SignalingPolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_signals = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || n_signals == 0 {
            return Err(Error::Empty("policy matrix"));
        }
        let rows = rows
            .iter()
            .enumerate()
            .map(|(x, row)| {
                if row.len() != n_signals {
                    return Err(Error::DimensionMismatch {
                        what: "policy row length",
                        expected: n_signals,
                        got: row.len(),
                    });
                }
                validate_simplex(row, &format!("policy row {x}"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows, id: None })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    /// Every state sends every signal with equal probability.
    pub fn uniform(n_states: usize, n_signals: usize) -> Self {
        Self {
            rows: vec![vec![1.0 / n_signals as f64; n_signals]; n_states],
            id: None,
        }
    }

    /// State `x` always sends signal `x`.
    pub fn fully_revealing(n: usize) -> Self {
        Self::deterministic(&(0..n).collect::<Vec<_>>(), n)
    }

    /// State `x` always sends signal `assignment[x]`.
    pub fn deterministic(assignment: &[usize], n_signals: usize) -> Self {
        let rows = assignment
            .iter()
            .map(|&s| {
                assert!(s < n_signals, "signal {s} out of range");
                let mut row = vec![0.0; n_signals];
                row[s] = 1.0;
                row
            })
            .collect();
        Self { rows, id: None }
    }

    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn n_signals(&self) -> usize {
        self.rows[0].len()
    }

    pub fn prob(&self, state: usize, signal: usize) -> f64 {
        self.rows[state][signal]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.rows[state]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Row-major flattening, the layout the predictor consumes.
    pub fn flattened(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    /// Same matrix with signal columns reordered: column `j` of the result is
    /// column `perm[j]` of `self`.
    pub fn permute_signals(&self, perm: &[usize]) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|row| perm.iter().map(|&j| row[j]).collect())
            .collect();
        Self {
            rows,
            id: self.id.clone(),
        }
    }
}

/// Raw, unvalidated scenario as it appears in a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    pub states: Vec<String>,
    pub observations: Vec<String>,
    pub signals: Vec<String>,
    pub actions: Vec<String>,
    pub prior: Vec<f64>,
    pub obs_likelihood: Vec<Vec<f64>>,
    pub receiver_reward: Vec<Vec<f64>>,
    pub sender_reward: Vec<Vec<f64>>,
}

/// A finite persuasion game with private receiver observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioSpec", into = "ScenarioSpec")]
pub struct Scenario {
    name: String,
    states: Vec<String>,
    observations: Vec<String>,
    signals: Vec<String>,
    actions: Vec<String>,
    prior: Categorical,
    obs_likelihood: Vec<Categorical>,
    receiver_reward: Vec<Vec<f64>>,
    sender_reward: Vec<Vec<f64>>,
}

fn check_matrix(m: &[Vec<f64>], rows: usize, cols: usize, what: &'static str) -> Result<()> {
    if m.len() != rows {
        return Err(Error::DimensionMismatch {
            what,
            expected: rows,
            got: m.len(),
        });
    }
    for row in m {
        if row.len() != cols {
            return Err(Error::DimensionMismatch {
                what,
                expected: cols,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{what}: non-finite entry")));
        }
    }
    Ok(())
}

impl TryFrom<ScenarioSpec> for Scenario {
    type Error = Error;

    fn try_from(spec: ScenarioSpec) -> Result<Self> {
        let (nx, ny, ns, nu) = (
            spec.states.len(),
            spec.observations.len(),
            spec.signals.len(),
            spec.actions.len(),
        );
        for (n, what) in [
            (nx, "states"),
            (ny, "observations"),
            (ns, "signals"),
            (nu, "actions"),
        ] {
            if n == 0 {
                return Err(Error::Empty(what));
            }
        }
        if spec.prior.len() != nx {
            return Err(Error::DimensionMismatch {
                what: "prior",
                expected: nx,
                got: spec.prior.len(),
            });
        }
        check_matrix(&spec.obs_likelihood, nx, ny, "obs_likelihood")?;
        check_matrix(&spec.receiver_reward, nx, nu, "receiver_reward")?;
        check_matrix(&spec.sender_reward, nx, nu, "sender_reward")?;
        let obs_likelihood = spec
            .obs_likelihood
            .into_iter()
            .map(Categorical::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: spec.name,
            states: spec.states,
            observations: spec.observations,
            signals: spec.signals,
            actions: spec.actions,
            prior: Categorical::new(spec.prior)?,
            obs_likelihood,
            receiver_reward: spec.receiver_reward,
            sender_reward: spec.sender_reward,
        })
    }
}

impl From<Scenario> for ScenarioSpec {
    fn from(s: Scenario) -> Self {
        ScenarioSpec {
            name: s.name,
            states: s.states,
            observations: s.observations,
            signals: s.signals,
            actions: s.actions,
            prior: s.prior.into(),
            obs_likelihood: s.obs_likelihood.into_iter().map(Into::into).collect(),
            receiver_reward: s.receiver_reward,
            sender_reward: s.sender_reward,
        }
    }
}

impl Scenario {
    /// The three-state grid-safety game: stable/critical/unstable states,
    /// low/nominal/high stress readings, low/med/high advisories, and
    /// normal/curtail/shutdown responses.
    pub fn smart_grid() -> Self {
        let labels = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        ScenarioSpec {
            name: "smart-grid".into(),
            states: labels(&["S", "C", "U"]),
            observations: labels(&["low", "nominal", "high"]),
            signals: labels(&["low", "med", "high"]),
            actions: labels(&["N", "C", "D"]),
            prior: vec![0.50, 0.35, 0.15],
            obs_likelihood: vec![
                vec![0.70, 0.25, 0.05],
                vec![0.15, 0.60, 0.25],
                vec![0.05, 0.25, 0.70],
            ],
            receiver_reward: vec![
                vec![20.0, 6.0, -20.0],
                vec![10.0, 5.0, -5.0],
                vec![-100.0, -10.0, 30.0],
            ],
            sender_reward: vec![
                vec![8.0, 4.0, -50.0],
                vec![-100.0, 1.0, -20.0],
                vec![-800.0, -50.0, 10.0],
            ],
        }
        .try_into()
        .expect("built-in scenario is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_obs(&self) -> usize {
        self.observations.len()
    }

    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn state_labels(&self) -> &[String] {
        &self.states
    }

    pub fn action_labels(&self) -> &[String] {
        &self.actions
    }

    pub fn prior(&self) -> &Categorical {
        &self.prior
    }

    /// μ(y | x) as a distribution over observations.
    pub fn obs_given_state(&self, state: usize) -> &Categorical {
        &self.obs_likelihood[state]
    }

    pub fn obs_likelihood(&self, state: usize, obs: usize) -> f64 {
        self.obs_likelihood[state].prob(obs)
    }

    pub fn receiver_reward(&self) -> &[Vec<f64>] {
        &self.receiver_reward
    }

    pub fn sender_reward(&self) -> &[Vec<f64>] {
        &self.sender_reward
    }

    /// Smallest sender reward, `m`.
    pub fn sender_min(&self) -> f64 {
        self.sender_reward
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest sender reward, `M`.
    pub fn sender_max(&self) -> f64 {
        self.sender_reward
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Marginal law of the observation, independent of any policy.
    pub fn obs_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_obs()];
        for x in 0..self.n_states() {
            for (y, o) in out.iter_mut().enumerate() {
                *o += self.prior.prob(x) * self.obs_likelihood(x, y);
            }
        }
        out
    }

    pub fn check_policy(&self, policy: &SignalingPolicy) -> Result<()> {
        if policy.n_states() != self.n_states() {
            return Err(Error::DimensionMismatch {
                what: "policy states",
                expected: self.n_states(),
                got: policy.n_states(),
            });
        }
        if policy.n_signals() != self.n_signals() {
            return Err(Error::DimensionMismatch {
                what: "policy signals",
                expected: self.n_signals(),
                got: policy.n_signals(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_index(&self, what: &'static str, index: usize) -> Result<()> {
        let size = match what {
            "state" => self.n_states(),
            "obs" => self.n_obs(),
            "signal" => self.n_signals(),
            "action" => self.n_actions(),
            _ => unreachable!("unknown index kind {what}"),
        };
        if index >= size {
            return Err(Error::IndexOutOfRange { what, index, size });
        }
        Ok(())
    }
}

/// Law of `(Y, S)` under a policy, `n_obs × n_signals`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointYS {
    probs: Vec<Vec<f64>>,
}

impl JointYS {
    pub fn prob(&self, obs: usize, signal: usize) -> f64 {
        self.probs[obs][signal]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn flattened(&self) -> Vec<f64> {
        self.probs.iter().flatten().copied().collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().flatten().sum()
    }

    pub fn tv_distance(&self, other: &JointYS) -> f64 {
        tv_distance(&self.flattened(), &other.flattened())
    }
}

/// Sender-side Bayes update `p(x | s) ∝ π(s|x) μ(x)` using the true prior.
pub fn posterior_from_signal(
    scenario: &Scenario,
    policy: &SignalingPolicy,
    signal: usize,
) -> Result<Categorical> {
    scenario.check_policy(policy)?;
    scenario.check_index("signal", signal)?;
    let weights: Vec<f64> = (0..scenario.n_states())
        .map(|x| policy.prob(x, signal) * scenario.prior().prob(x))
        .collect();
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::UnreachableSignal { signal });
    }
    Categorical::from_weights(&weights)
}

/// Receiver-side Bayes update `p_r(x | y, s) ∝ π(s|x) θ(y)(x)` from the
/// receiver's pre-signal belief.
pub fn receiver_posterior(
    policy: &SignalingPolicy,
    belief: &Categorical,
    signal: usize,
) -> Result<Categorical> {
    if belief.len() != policy.n_states() {
        return Err(Error::DimensionMismatch {
            what: "belief support",
            expected: policy.n_states(),
            got: belief.len(),
        });
    }
    if signal >= policy.n_signals() {
        return Err(Error::IndexOutOfRange {
            what: "signal",
            index: signal,
            size: policy.n_signals(),
        });
    }
    let weights: Vec<f64> = (0..policy.n_states())
        .map(|x| policy.prob(x, signal) * belief.prob(x))
        .collect();
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::BeliefIncompatibleSignal { signal });
    }
    Categorical::from_weights(&weights)
}

/// Expected reward of each action under `belief`.
pub fn expected_rewards(belief: &Categorical, rewards: &[Vec<f64>]) -> Vec<f64> {
    debug_assert_eq!(belief.len(), rewards.len());
    let n_actions = rewards[0].len();
    (0..n_actions)
        .map(|u| {
            belief
                .probs()
                .iter()
                .zip(rewards)
                .map(|(p, row)| p * row[u])
                .sum()
        })
        .collect()
}

/// Action maximizing expected reward under `belief`; lowest index wins ties.
pub fn best_response(belief: &Categorical, rewards: &[Vec<f64>]) -> usize {
    argmax(&expected_rewards(belief, rewards))
}

/// `P(y, s) = Σ_x μ(x) μ(y|x) π(s|x)`.
pub fn joint_ys(scenario: &Scenario, policy: &SignalingPolicy) -> JointYS {
    let mut probs = vec![vec![0.0; scenario.n_signals()]; scenario.n_obs()];
    for x in 0..scenario.n_states() {
        let mx = scenario.prior().prob(x);
        for (y, row) in probs.iter_mut().enumerate() {
            let mxy = mx * scenario.obs_likelihood(x, y);
            for (s, cell) in row.iter_mut().enumerate() {
                *cell += mxy * policy.prob(x, s);
            }
        }
    }
    JointYS { probs }
}

/// Sender value of a policy against a Bayesian receiver who knows the true
/// prior and has no private observation. Zero-mass signals contribute nothing.
pub fn classical_value(scenario: &Scenario, policy: &SignalingPolicy) -> Result<f64> {
    scenario.check_policy(policy)?;
    let mut value = 0.0;
    for s in 0..scenario.n_signals() {
        let mass: f64 = (0..scenario.n_states())
            .map(|x| scenario.prior().prob(x) * policy.prob(x, s))
            .sum();
        if mass <= 0.0 {
            continue;
        }
        let posterior = posterior_from_signal(scenario, policy, s)?;
        let action = best_response(&posterior, scenario.receiver_reward());
        for x in 0..scenario.n_states() {
            value += scenario.prior().prob(x) * policy.prob(x, s) * scenario.sender_reward()[x][action];
        }
    }
    Ok(value)
}

/// Classical persuasion by enumeration: the candidate with the highest
/// [`classical_value`], first candidate on ties.
pub fn classical_optimal_policy<'a>(
    scenario: &Scenario,
    candidates: &'a [SignalingPolicy],
) -> Result<&'a SignalingPolicy> {
    let mut best: Option<(&SignalingPolicy, f64)> = None;
    for policy in candidates {
        let v = classical_value(scenario, policy)?;
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((policy, v));
        }
    }
    best.map(|(p, _)| p).ok_or(Error::Empty("candidate list"))
}
