//! Simulated receivers and the interaction data they generate.
//!
//! A receiver holds a pre-signal belief `θ(y)` for every private observation
//! `y`, updates it on the sender's signal with Bayes' rule using the announced
//! policy, and then acts: a deterministic best response when the noise
//! temperature is zero, a softmax draw over expected rewards otherwise.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::domain::{
    argmax, expected_rewards, receiver_posterior, Categorical, Scenario, SignalingPolicy,
};
use crate::rng::seeded;
use crate::{Error, Result};

/// How the receiver forms its pre-signal belief.
#[derive(Debug, Clone, PartialEq)]
pub enum BeliefSpec {
    /// `θ(y)` is the Bayes posterior `p(x | y)` under the true prior.
    ExactBayes,
    /// Bayes posterior computed from a randomly perturbed prior.
    MisspecifiedPrior,
    /// Caller-supplied `θ(y)`, one distribution per observation.
    Tabular(Vec<Categorical>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeliefKind {
    ExactBayes,
    MisspecifiedPrior,
    Tabular,
}

/// The receiver's belief map `θ: Y → Δ(X)` plus its behavioral knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefFunction {
    kind: BeliefKind,
    // prior combined with the likelihood; None for tabular beliefs
    base_prior: Option<Categorical>,
    table: Vec<Categorical>,
    likelihood: Vec<Vec<f64>>,
    temper_exponent: f64,
    noise_temperature: f64,
}

fn tempered_posteriors(
    likelihood: &[Vec<f64>],
    prior: &Categorical,
    gamma: f64,
) -> Result<Vec<Categorical>> {
    let n_obs = likelihood[0].len();
    (0..n_obs)
        .map(|y| {
            let weights: Vec<f64> = likelihood
                .iter()
                .zip(prior.probs())
                .map(|(row, p)| row[y].powf(gamma) * p)
                .collect();
            Categorical::from_weights(&weights)
        })
        .collect()
}

/// Draws a prior at total-variation distance `deviation` from `prior`.
///
/// The direction is a uniform draw `d` from the simplex and the result is
/// `prior + t·(d − prior)` with `t` chosen so the distance is exact. Draws that
/// would leave the simplex are rejected; if every draw is rejected the last
/// direction is used with the largest feasible step.
pub fn perturb_prior<R: Rng + ?Sized>(
    prior: &Categorical,
    deviation: f64,
    rng: &mut R,
) -> Result<Categorical> {
    if !(0.0..=1.0).contains(&deviation) {
        return Err(Error::InvalidParameter(format!(
            "deviation {deviation} outside [0, 1]"
        )));
    }
    if deviation == 0.0 {
        return Ok(prior.clone());
    }
    const MAX_ATTEMPTS: usize = 10_000;
    let mu = prior.probs();
    let mut last = Vec::new();
    for _ in 0..MAX_ATTEMPTS {
        let draws: Vec<f64> = (0..mu.len()).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        let dir: Vec<f64> = draws.iter().map(|d| d / total).collect();
        let dist = crate::domain::tv_distance(&dir, mu);
        if dist <= 0.0 {
            continue;
        }
        let t = deviation / dist;
        let cand: Vec<f64> = mu.iter().zip(&dir).map(|(m, d)| m + t * (d - m)).collect();
        if cand.iter().all(|p| *p >= 0.0) {
            return Categorical::from_weights(&cand);
        }
        last = dir;
    }
    // largest step along `last` that stays non-negative
    let t_max = mu
        .iter()
        .zip(&last)
        .filter(|(m, d)| *d < *m)
        .map(|(m, d)| m / (m - d))
        .fold(f64::INFINITY, f64::min);
    let cand: Vec<f64> = mu
        .iter()
        .zip(&last)
        .map(|(m, d)| (m + t_max * (d - m)).max(0.0))
        .collect();
    Categorical::from_weights(&cand)
}

/// Builds a belief function of the requested kind with `γ = 1` and `τ = 0`.
///
/// `deviation` is the total-variation distance of the misspecified prior from
/// the true one; `seed` drives that perturbation and nothing else.
pub fn make_belief_function(
    kind: BeliefSpec,
    scenario: &Scenario,
    deviation: f64,
    seed: u64,
) -> Result<BeliefFunction> {
    if !(0.0..=1.0).contains(&deviation) {
        return Err(Error::InvalidParameter(format!(
            "deviation {deviation} outside [0, 1]"
        )));
    }
    let likelihood: Vec<Vec<f64>> = (0..scenario.n_states())
        .map(|x| scenario.obs_given_state(x).probs().to_vec())
        .collect();
    let (kind, base_prior, table) = match kind {
        BeliefSpec::ExactBayes => (
            BeliefKind::ExactBayes,
            Some(scenario.prior().clone()),
            tempered_posteriors(&likelihood, scenario.prior(), 1.0)?,
        ),
        BeliefSpec::MisspecifiedPrior => {
            let mut rng = seeded(seed);
            let prior = perturb_prior(scenario.prior(), deviation, &mut rng)?;
            let table = tempered_posteriors(&likelihood, &prior, 1.0)?;
            (BeliefKind::MisspecifiedPrior, Some(prior), table)
        }
        BeliefSpec::Tabular(table) => {
            if table.len() != scenario.n_obs() {
                return Err(Error::DimensionMismatch {
                    what: "belief table rows",
                    expected: scenario.n_obs(),
                    got: table.len(),
                });
            }
            if let Some(b) = table.iter().find(|b| b.len() != scenario.n_states()) {
                return Err(Error::DimensionMismatch {
                    what: "belief table support",
                    expected: scenario.n_states(),
                    got: b.len(),
                });
            }
            (BeliefKind::Tabular, None, table)
        }
    };
    Ok(BeliefFunction {
        kind,
        base_prior,
        table,
        likelihood,
        temper_exponent: 1.0,
        noise_temperature: 0.0,
    })
}

impl BeliefFunction {
    /// Raises the likelihood to the power `γ` before combining it with the
    /// (possibly misspecified) prior. Tabular beliefs ignore it.
    pub fn with_temper_exponent(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temper exponent {gamma} must be positive"
            )));
        }
        self.temper_exponent = gamma;
        if let Some(prior) = &self.base_prior {
            self.table = tempered_posteriors(&self.likelihood, prior, gamma)?;
        }
        Ok(self)
    }

    pub fn with_noise_temperature(mut self, tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise temperature {tau} must be non-negative"
            )));
        }
        self.noise_temperature = tau;
        Ok(self)
    }

    pub fn kind(&self) -> BeliefKind {
        self.kind
    }

    pub fn misspecified_prior(&self) -> Option<&Categorical> {
        match self.kind {
            BeliefKind::MisspecifiedPrior => self.base_prior.as_ref(),
            _ => None,
        }
    }

    pub fn temper_exponent(&self) -> f64 {
        self.temper_exponent
    }

    pub fn noise_temperature(&self) -> f64 {
        self.noise_temperature
    }

    /// `θ(y)`.
    pub fn belief(&self, obs: usize) -> &Categorical {
        &self.table[obs]
    }

    pub fn table(&self) -> &[Categorical] {
        &self.table
    }

    /// Law of the receiver's action after seeing `obs` and `signal` under
    /// `policy`.
    pub fn action_distribution(
        &self,
        scenario: &Scenario,
        policy: &SignalingPolicy,
        obs: usize,
        signal: usize,
    ) -> Result<Categorical> {
        let posterior = receiver_posterior(policy, self.belief(obs), signal)?;
        let values = expected_rewards(&posterior, scenario.receiver_reward());
        if self.noise_temperature == 0.0 {
            return Ok(Categorical::point_mass(values.len(), argmax(&values)));
        }
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = values
            .iter()
            .map(|v| ((v - top) / self.noise_temperature).exp())
            .collect();
        Categorical::from_weights(&weights)
    }
}

/// One receiver decision. Always consumes exactly one uniform from `rng`, so
/// streams stay aligned across policies.
pub fn receiver_act<R: Rng + ?Sized>(
    scenario: &Scenario,
    policy: &SignalingPolicy,
    belief_fn: &BeliefFunction,
    obs: usize,
    signal: usize,
    rng: &mut R,
) -> Result<usize> {
    scenario.check_policy(policy)?;
    scenario.check_index("obs", obs)?;
    scenario.check_index("signal", signal)?;
    let u: f64 = rng.random();
    let dist = belief_fn.action_distribution(scenario, policy, obs, signal)?;
    Ok(if belief_fn.noise_temperature == 0.0 {
        argmax(dist.probs())
    } else {
        dist.sample_with(u)
    })
}

/// One `(x, y, s, u)` draw under `policy`. Consumes exactly four uniforms.
pub fn simulate_interaction<R: Rng + ?Sized>(
    scenario: &Scenario,
    policy: &SignalingPolicy,
    belief_fn: &BeliefFunction,
    rng: &mut R,
) -> Result<(usize, usize, usize, usize)> {
    let x = scenario.prior().sample(rng);
    let y = scenario.obs_given_state(x).sample(rng);
    let s = sample_row(policy.row(x), rng.random());
    let u = receiver_act(scenario, policy, belief_fn, y, s, rng)?;
    Ok((x, y, s, u))
}

fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    #[serde(rename = "x")]
    pub state: usize,
    #[serde(rename = "y")]
    pub obs: usize,
    #[serde(rename = "s")]
    pub signal: usize,
    pub policy_id: String,
    #[serde(rename = "u")]
    pub action: usize,
}

/// Interaction records plus the registry of policies they reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<InteractionRecord>,
    policies: BTreeMap<String, SignalingPolicy>,
    scenario_name: String,
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    scenario: String,
    policy: Vec<SignalingPolicy>,
}

impl Dataset {
    pub fn new(
        records: Vec<InteractionRecord>,
        policies: BTreeMap<String, SignalingPolicy>,
        scenario_name: impl Into<String>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("dataset records"));
        }
        if let Some(r) = records.iter().find(|r| !policies.contains_key(&r.policy_id)) {
            return Err(Error::UnknownPolicy(r.policy_id.clone()));
        }
        Ok(Self {
            records,
            policies,
            scenario_name: scenario_name.into(),
        })
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scenario_name(&self) -> &str {
        &self.scenario_name
    }

    pub fn policies(&self) -> &BTreeMap<String, SignalingPolicy> {
        &self.policies
    }

    pub fn policy(&self, id: &str) -> Result<&SignalingPolicy> {
        self.policies
            .get(id)
            .ok_or_else(|| Error::UnknownPolicy(id.to_string()))
    }

    /// Checks every record against the scenario's index bounds.
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        for p in self.policies.values() {
            scenario.check_policy(p)?;
        }
        for r in &self.records {
            scenario.check_index("state", r.state)?;
            scenario.check_index("obs", r.obs)?;
            scenario.check_index("signal", r.signal)?;
            scenario.check_index("action", r.action)?;
        }
        Ok(())
    }

    /// Seeded shuffle, then the first `fraction` of records go left.
    pub fn split<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "split fraction {fraction} outside (0, 1)"
            )));
        }
        let mut idx: Vec<usize> = (0..self.records.len()).collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), rng);
        let n_left = ((self.records.len() as f64) * fraction).round() as usize;
        let pick = |ids: &[usize]| -> Result<Dataset> {
            Dataset::new(
                ids.iter().map(|&i| self.records[i].clone()).collect(),
                self.policies.clone(),
                self.scenario_name.clone(),
            )
        };
        Ok((pick(&idx[..n_left])?, pick(&idx[n_left..])?))
    }

    pub fn write_records<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn registry_toml(&self) -> Result<String> {
        Ok(toml::to_string(&RegistryFile {
            scenario: self.scenario_name.clone(),
            policy: self.policies.values().cloned().collect(),
        })?)
    }

    pub fn read<R: Read>(records: R, registry_toml: &str) -> Result<Self> {
        let reg: RegistryFile = toml::from_str(registry_toml)?;
        let mut policies = BTreeMap::new();
        for p in reg.policy {
            let id = p
                .id()
                .ok_or_else(|| Error::Format("registry policy without id".into()))?
                .to_string();
            policies.insert(id, p);
        }
        let mut rdr = csv::Reader::from_reader(records);
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<InteractionRecord>, _>>()?;
        Dataset::new(records, policies, reg.scenario)
    }
}

/// Simulates `policies.len() · n_per_policy` interactions, drawing the policy
/// for each record uniformly at random so full tuples stay exchangeable.
///
/// Policies without an id are registered as `pi0`, `pi1`, … by position.
pub fn generate_dataset<R: Rng + ?Sized>(
    scenario: &Scenario,
    policies: &[SignalingPolicy],
    n_per_policy: usize,
    belief_fn: &BeliefFunction,
    rng: &mut R,
) -> Result<Dataset> {
    if policies.is_empty() {
        return Err(Error::Empty("policy list"));
    }
    if n_per_policy == 0 {
        return Err(Error::InvalidParameter("n_per_policy must be at least 1".into()));
    }
    let ids: Vec<String> = policies
        .iter()
        .enumerate()
        .map(|(k, p)| p.id().map(str::to_string).unwrap_or_else(|| format!("pi{k}")))
        .collect();
    let mut registry = BTreeMap::new();
    for (id, p) in ids.iter().zip(policies) {
        scenario.check_policy(p)?;
        if registry
            .insert(id.clone(), p.clone().with_id(id.clone()))
            .is_some()
        {
            return Err(Error::InvalidParameter(format!("duplicate policy id {id:?}")));
        }
    }
    let n = policies.len() * n_per_policy;
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.random_range(0..policies.len());
        let (x, y, s, u) = simulate_interaction(scenario, &policies[k], belief_fn, rng)?;
        records.push(InteractionRecord {
            state: x,
            obs: y,
            signal: s,
            policy_id: ids[k].clone(),
            action: u,
        });
    }
    Dataset::new(records, registry, scenario.name())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::best_response;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;

    fn bayes_posteriors(sc: &Scenario) -> Vec<Vec<f64>> {
        (0..3)
            .map(|y| {
                let w: Vec<f64> = (0..3)
                    .map(|x| sc.obs_likelihood(x, y) * sc.prior().prob(x))
                    .collect();
                let t: f64 = w.iter().sum();
                w.iter().map(|v| v / t).collect()
            })
            .collect()
    }

    #[test]
    fn exact_bayes_matches_posterior() {
        let sc = Scenario::smart_grid();
        let bf = make_belief_function(BeliefSpec::ExactBayes, &sc, 0.0, 1).unwrap();
        let want = bayes_posteriors(&sc);
        for y in 0..3 {
            for x in 0..3 {
                assert_abs_diff_eq!(bf.belief(y).prob(x), want[y][x], epsilon = 1e-12);
            }
        }
        // γ = 1 rebuild leaves it unchanged
        let bf1 = bf.clone().with_temper_exponent(1.0).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                assert_abs_diff_eq!(bf1.belief(y).prob(x), want[y][x], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_deviation_is_exact_bayes() {
        let sc = Scenario::smart_grid();
        let exact = make_belief_function(BeliefSpec::ExactBayes, &sc, 0.0, 1).unwrap();
        let mis = make_belief_function(BeliefSpec::MisspecifiedPrior, &sc, 0.0, 99).unwrap();
        assert_eq!(mis.misspecified_prior().unwrap(), sc.prior());
        assert_eq!(mis.table(), exact.table());
    }

    #[test]
    fn deviation_out_of_range_is_rejected() {
        let sc = Scenario::smart_grid();
        assert!(make_belief_function(BeliefSpec::MisspecifiedPrior, &sc, 1.5, 0).is_err());
        assert!(make_belief_function(BeliefSpec::MisspecifiedPrior, &sc, -0.1, 0).is_err());
    }

    #[test]
    fn perturbation_hits_requested_mean_deviation() {
        let sc = Scenario::smart_grid();
        let mean: f64 = (0..1000)
            .map(|seed| {
                let bf = make_belief_function(BeliefSpec::MisspecifiedPrior, &sc, 0.25, seed).unwrap();
                bf.misspecified_prior().unwrap().tv_distance(sc.prior())
            })
            .sum::<f64>()
            / 1000.0;
        assert!((0.20..=0.30).contains(&mean), "mean deviation {mean}");
    }

    #[test]
    fn unreachable_deviation_falls_back_to_boundary() {
        let sc = Scenario::smart_grid();
        let bf = make_belief_function(BeliefSpec::MisspecifiedPrior, &sc, 1.0, 3).unwrap();
        let p = bf.misspecified_prior().unwrap();
        assert!(p.probs().contains(&0.0));
        assert!(p.tv_distance(sc.prior()) <= 0.85 + 1e-12);
    }

    #[test]
    fn tempering_sharpens_beliefs() {
        let sc = Scenario::smart_grid();
        let bf = make_belief_function(BeliefSpec::ExactBayes, &sc, 0.0, 0).unwrap();
        let sharp = bf.clone().with_temper_exponent(3.0).unwrap();
        // high stress reading: tempering pushes mass toward the unstable state
        assert!(sharp.belief(2).prob(2) > bf.belief(2).prob(2));
        assert!(bf.clone().with_temper_exponent(0.0).is_err());
        assert!(bf.with_noise_temperature(-1.0).is_err());
    }

    #[test]
    fn rational_receiver_best_responds_on_every_pair() {
        let sc = Scenario::smart_grid();
        let bf = make_belief_function(BeliefSpec::ExactBayes, &sc, 0.0, 0).unwrap();
        let pi = SignalingPolicy::new(vec![
            vec![0.7, 0.2, 0.1],
            vec![0.2, 0.6, 0.2],
            vec![0.1, 0.2, 0.7],
        ])
        .unwrap();
        let mut rng = seeded(5);
        for y in 0..3 {
            for s in 0..3 {
                let post = receiver_posterior(&pi, bf.belief(y), s).unwrap();
                let want = best_response(&post, sc.receiver_reward());
                assert_eq!(receiver_act(&sc, &pi, &bf, y, s, &mut rng).unwrap(), want);
            }
        }
    }

    #[test]
    fn high_reading_under_uninformative_policy_shuts_down() {
        let sc = Scenario::smart_grid();
        // A sharply tempered receiver treats a high reading as near-certain instability.
        let bf = make_belief_function(BeliefSpec::ExactBayes, &sc, 0.0, 0)
            .unwrap()
            .with_temper_exponent(8.0)
            .unwrap();
        assert!(bf.belief(2).prob(2) > 0.99);
        let mut rng = seeded(0);
        let u = receiver_act(&sc, &SignalingPolicy::uniform(3, 3), &bf, 2, 1, &mut rng).unwrap();
        assert_eq!(u, 2);
    }

    #[test]
    fn hot_receiver_acts_uniformly() {
        let sc = Scenario::smart_grid();
        let bf = make_belief_function(BeliefSpec::ExactBayes, &sc, 0.0, 0)
            .unwrap()
            .with_noise_temperature(1e9)
            .unwrap();
        let pi = SignalingPolicy::fully_revealing(3);
        let mut rng = seeded(11);
        let mut counts = [0usize; 3];
        let n = 30_000;
        for _ in 0..n {
            counts[receiver_act(&sc, &pi, &bf, 0, 0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            // 4 binomial standard errors
            assert!((f - 1.0 / 3.0).abs() < 4.0 * (2.0f64 / 9.0 / n as f64).sqrt(), "{f}");
        }
    }

    #[test]
    fn generated_marginals_match_the_scenario() {
        let sc = Scenario::smart_grid();
        let bf = make_belief_function(BeliefSpec::ExactBayes, &sc, 0.0, 0).unwrap();
        let mut rng = seeded(2024);
        let ds = generate_dataset(&sc, &[SignalingPolicy::uniform(3, 3)], 10_000, &bf, &mut rng).unwrap();
        assert_eq!(ds.len(), 10_000);
        assert_eq!(ds.policies().len(), 1);
        let mut state_counts = [0.0; 3];
        let mut obs_counts = [[0.0; 3]; 3];
        for r in ds.records() {
            state_counts[r.state] += 1.0;
            obs_counts[r.state][r.obs] += 1.0;
        }
        for x in 0..3 {
            assert!((state_counts[x] / 10_000.0 - sc.prior().prob(x)).abs() < 0.02);
            for y in 0..3 {
                let f = obs_counts[x][y] / state_counts[x];
                assert!((f - sc.obs_likelihood(x, y)).abs() < 0.03, "x={x} y={y} f={f}");
            }
        }
    }

    #[test]
    fn policy_selection_is_uniform() {
        let sc = Scenario::smart_grid();
        let bf = make_belief_function(BeliefSpec::ExactBayes, &sc, 0.0, 0).unwrap();
        let policies = vec![
            SignalingPolicy::uniform(3, 3),
            SignalingPolicy::fully_revealing(3),
            SignalingPolicy::deterministic(&[0, 0, 2], 3),
            SignalingPolicy::deterministic(&[1, 1, 1], 3),
        ];
        let mut rng = seeded(8);
        let ds = generate_dataset(&sc, &policies, 2_000, &bf, &mut rng).unwrap();
        let n = ds.len() as f64;
        let k = policies.len() as f64;
        let sd = (n * (1.0 / k) * (1.0 - 1.0 / k)).sqrt();
        for id in ["pi0", "pi1", "pi2", "pi3"] {
            let c = ds.records().iter().filter(|r| r.policy_id == id).count() as f64;
            assert!((c - n / k).abs() <= 4.0 * sd, "{id}: {c}");
        }
    }

    #[test]
    fn generation_is_deterministic_and_round_trips() {
        let sc = Scenario::smart_grid();
        let bf = make_belief_function(BeliefSpec::MisspecifiedPrior, &sc, 0.25, 4)
            .unwrap()
            .with_noise_temperature(2.0)
            .unwrap();
        let pi = [SignalingPolicy::uniform(3, 3).with_id("base")];
        let a = generate_dataset(&sc, &pi, 500, &bf, &mut seeded(1)).unwrap();
        let b = generate_dataset(&sc, &pi, 500, &bf, &mut seeded(1)).unwrap();
        assert_eq!(a, b);

        let mut csv_bytes = Vec::new();
        a.write_records(&mut csv_bytes).unwrap();
        let header = std::str::from_utf8(&csv_bytes).unwrap().lines().next().unwrap();
        assert_eq!(header, "x,y,s,policy_id,u");
        let back = Dataset::read(csv_bytes.as_slice(), &a.registry_toml().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn dataset_rejects_unregistered_policy_and_zero_count() {
        let rec = InteractionRecord {
            state: 0,
            obs: 0,
            signal: 0,
            policy_id: "ghost".into(),
            action: 0,
        };
        assert!(matches!(
            Dataset::new(vec![rec], BTreeMap::new(), "x"),
            Err(Error::UnknownPolicy(_))
        ));
        let sc = Scenario::smart_grid();
        let bf = make_belief_function(BeliefSpec::ExactBayes, &sc, 0.0, 0).unwrap();
        assert!(generate_dataset(&sc, &[SignalingPolicy::uniform(3, 3)], 0, &bf, &mut seeded(0)).is_err());
        assert!(generate_dataset(&sc, &[], 5, &bf, &mut seeded(0)).is_err());
    }
}
