//! Split-conformal action sets around the learned predictor.
//!
//! A calibration stores the sorted nonconformity scores of held-out records and
//! the threshold `q`, the `⌈(1−α)(n+1)⌉`-th smallest score. The set for
//! `(y, s, π)` is every action whose score is at most `q`; when that set would
//! be empty the most likely action is included so downstream minimization is
//! always defined.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{argmax, Scenario, SignalingPolicy};
use crate::neural::{encode, Predictor};
use crate::receiver::{generate_dataset, BeliefFunction, Dataset, InteractionRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreVariant {
    /// `1{u ≠ argmax f}`.
    Indicator,
    /// `1 − f(u)`.
    OneMinusProb,
    /// `−log(f(u) + ε)`.
    Nll,
    /// Mass of every action at least as likely as `u`.
    Aps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreKind {
    pub variant: ScoreVariant,
    #[serde(default = "default_nll_epsilon")]
    pub nll_epsilon: f64,
}

fn default_nll_epsilon() -> f64 {
    1e-9
}

impl ScoreKind {
    pub fn new(variant: ScoreVariant) -> Self {
        Self {
            variant,
            nll_epsilon: default_nll_epsilon(),
        }
    }

    pub fn indicator() -> Self {
        Self::new(ScoreVariant::Indicator)
    }

    pub fn one_minus_prob() -> Self {
        Self::new(ScoreVariant::OneMinusProb)
    }

    pub fn nll() -> Self {
        Self::new(ScoreVariant::Nll)
    }

    pub fn aps() -> Self {
        Self::new(ScoreVariant::Aps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nll_epsilon > 0.0 && self.nll_epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "nll_epsilon {} must be positive",
                self.nll_epsilon
            )));
        }
        Ok(())
    }

    /// Score of `action` given the predicted distribution `probs`.
    pub fn from_probs(&self, probs: &[f64], action: usize) -> f64 {
        match self.variant {
            ScoreVariant::Indicator => {
                if action == argmax(probs) {
                    0.0
                } else {
                    1.0
                }
            }
            ScoreVariant::OneMinusProb => 1.0 - probs[action],
            ScoreVariant::Nll => -(probs[action] + self.nll_epsilon).ln(),
            ScoreVariant::Aps => {
                let p = probs[action];
                probs.iter().filter(|&&q| q >= p).sum()
            }
        }
    }

    /// Largest value the score can take, for any distribution.
    pub fn max_value(&self) -> f64 {
        match self.variant {
            ScoreVariant::Indicator | ScoreVariant::OneMinusProb | ScoreVariant::Aps => 1.0,
            ScoreVariant::Nll => -self.nll_epsilon.ln(),
        }
    }
}

/// Nonconformity of `action` at `(obs, signal, policy)` under the
/// inference-mode predictor.
pub fn score(
    predictor: &Predictor,
    scenario: &Scenario,
    score_kind: &ScoreKind,
    obs: usize,
    signal: usize,
    policy: &SignalingPolicy,
    action: usize,
) -> Result<f64> {
    scenario.check_index("action", action)?;
    let probs = predictor.probs(&encode(scenario, obs, signal, policy)?)?;
    Ok(score_kind.from_probs(&probs, action))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalCalibration {
    score_kind: ScoreKind,
    alpha: f64,
    threshold: f64,
    cal_scores: Vec<f64>,
}

/// One-based rank of the calibrated order statistic, clamped to `[1, n]`.
///
/// The product `(1−α)(n+1)` is nudged down by 1e-9 before the ceiling so that
/// values like `0.9 · 10` that should be integers are not pushed up a rank by
/// rounding.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    let x = (1.0 - alpha) * (n as f64 + 1.0);
    ((x - 1e-9).ceil() as usize).clamp(1, n)
}

pub fn calibrate(score_kind: ScoreKind, scores: &[f64], alpha: f64) -> Result<ConformalCalibration> {
    score_kind.validate()?;
    if scores.is_empty() {
        return Err(Error::Empty("calibration scores"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter("non-finite calibration score".into()));
    }
    let mut cal_scores = scores.to_vec();
    cal_scores.sort_by(f64::total_cmp);
    let threshold = cal_scores[quantile_rank(cal_scores.len(), alpha) - 1];
    Ok(ConformalCalibration {
        score_kind,
        alpha,
        threshold,
        cal_scores,
    })
}

impl ConformalCalibration {
    pub fn score_kind(&self) -> &ScoreKind {
        &self.score_kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn cal_scores(&self) -> &[f64] {
        &self.cal_scores
    }

    /// Same scores, different miscoverage level.
    pub fn at_alpha(&self, alpha: f64) -> Result<Self> {
        calibrate(self.score_kind, &self.cal_scores, alpha)
    }

    /// Replaces the threshold, e.g. to force full sets.
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    /// Actions whose score is within the threshold, ascending; never empty.
    pub fn set_from_probs(&self, probs: &[f64]) -> Vec<usize> {
        let set: Vec<usize> = (0..probs.len())
            .filter(|&u| self.score_kind.from_probs(probs, u) <= self.threshold)
            .collect();
        if set.is_empty() {
            vec![argmax(probs)]
        } else {
            set
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a dump and checks that its threshold follows from its scores.
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ConformalCalibration = serde_json::from_str(text)?;
        let again = calibrate(c.score_kind, &c.cal_scores, c.alpha)?;
        if again.cal_scores != c.cal_scores || again.threshold != c.threshold {
            return Err(Error::Format(
                "calibration threshold or score order inconsistent with its scores".into(),
            ));
        }
        Ok(c)
    }
}

pub fn prediction_set(
    predictor: &Predictor,
    scenario: &Scenario,
    calibration: &ConformalCalibration,
    obs: usize,
    signal: usize,
    policy: &SignalingPolicy,
) -> Result<Vec<usize>> {
    let probs = predictor.probs(&encode(scenario, obs, signal, policy)?)?;
    Ok(calibration.set_from_probs(&probs))
}

/// Conformal sets for every `(y, s)` pair under one policy, indexed `[y][s]`.
pub fn policy_sets(
    predictor: &Predictor,
    scenario: &Scenario,
    calibration: &ConformalCalibration,
    policy: &SignalingPolicy,
) -> Result<Vec<Vec<Vec<usize>>>> {
    (0..scenario.n_obs())
        .map(|y| {
            (0..scenario.n_signals())
                .map(|s| prediction_set(predictor, scenario, calibration, y, s, policy))
                .collect()
        })
        .collect()
}

/// Scores of every record, each under its own policy.
pub fn dataset_scores(
    predictor: &Predictor,
    scenario: &Scenario,
    score_kind: &ScoreKind,
    dataset: &Dataset,
) -> Result<Vec<f64>> {
    let mut cache: HashMap<(&str, usize, usize), Vec<f64>> = HashMap::new();
    dataset
        .records()
        .iter()
        .map(|r| {
            let key = (r.policy_id.as_str(), r.obs, r.signal);
            let probs = match cache.entry(key) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => {
                    let policy = dataset.policy(&r.policy_id)?;
                    e.insert(predictor.probs(&encode(scenario, r.obs, r.signal, policy)?)?)
                }
            };
            scenario.check_index("action", r.action)?;
            Ok(score_kind.from_probs(probs, r.action))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Fraction of records whose action lies in its set.
    pub rate: f64,
    pub covered: usize,
    pub total: usize,
    pub mean_set_size: f64,
}

impl CoverageReport {
    /// Binomial standard error of `rate`.
    pub fn std_error(&self) -> f64 {
        (self.rate * (1.0 - self.rate) / self.total as f64).sqrt()
    }
}

pub fn evaluate_coverage<'p, F>(
    predictor: &Predictor,
    scenario: &Scenario,
    calibration: &ConformalCalibration,
    test_records: &[InteractionRecord],
    policy_resolver: F,
) -> Result<CoverageReport>
where
    F: Fn(&str) -> Result<&'p SignalingPolicy>,
{
    if test_records.is_empty() {
        return Err(Error::Empty("test records"));
    }
    let mut cache: HashMap<(&str, usize, usize), Vec<usize>> = HashMap::new();
    let mut covered = 0usize;
    let mut size_total = 0usize;
    for r in test_records {
        let key = (r.policy_id.as_str(), r.obs, r.signal);
        let set = match cache.entry(key) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let policy = policy_resolver(&r.policy_id)?;
                e.insert(prediction_set(predictor, scenario, calibration, r.obs, r.signal, policy)?)
            }
        };
        size_total += set.len();
        if set.contains(&r.action) {
            covered += 1;
        }
    }
    let total = test_records.len();
    Ok(CoverageReport {
        rate: covered as f64 / total as f64,
        covered,
        total,
        mean_set_size: size_total as f64 / total as f64,
    })
}

/// Coverage of `calibration` on every record of `dataset`.
pub fn dataset_coverage(
    predictor: &Predictor,
    scenario: &Scenario,
    calibration: &ConformalCalibration,
    dataset: &Dataset,
) -> Result<CoverageReport> {
    evaluate_coverage(predictor, scenario, calibration, dataset.records(), |id| {
        dataset.policy(id)
    })
}

/// Calibrates afresh on `n` records simulated under `policy`.
///
/// This needs the simulator, so it is an evaluation-time tool: a sender with
/// only historical data cannot run it.
#[allow(clippy::too_many_arguments)]
pub fn recalibrate_for_policy<R: Rng + ?Sized>(
    predictor: &Predictor,
    scenario: &Scenario,
    policy: &SignalingPolicy,
    belief_fn: &BeliefFunction,
    n: usize,
    alpha: f64,
    score_kind: ScoreKind,
    rng: &mut R,
) -> Result<ConformalCalibration> {
    let data = generate_dataset(scenario, std::slice::from_ref(policy), n, belief_fn, rng)?;
    let scores = dataset_scores(predictor, scenario, &score_kind, &data)?;
    calibrate(score_kind, &scores, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::receiver::{make_belief_function, BeliefSpec};
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;

    #[test]
    fn score_definitions() {
        let probs = [0.6, 0.3, 0.1];
        let ind = ScoreKind::indicator();
        assert_eq!(ind.from_probs(&probs, 0), 0.0);
        assert_eq!(ind.from_probs(&probs, 1), 1.0);
        assert_eq!(ind.from_probs(&probs, 2), 1.0);
        let aps = ScoreKind::aps();
        assert_abs_diff_eq!(aps.from_probs(&probs, 0), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(aps.from_probs(&probs, 1), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(aps.from_probs(&probs, 2), 1.0, epsilon = 1e-15);

        let uni = [1.0 / 3.0; 3];
        for u in 0..3 {
            assert_abs_diff_eq!(ScoreKind::one_minus_prob().from_probs(&uni, u), 2.0 / 3.0, epsilon = 1e-15);
            assert_abs_diff_eq!(
                ScoreKind::nll().from_probs(&uni, u),
                -(1.0 / 3.0 + 1e-9f64).ln(),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn score_through_predictor() {
        let sc = Scenario::smart_grid();
        let p = Predictor::zeros(&[15, 4, 3], 0.0).unwrap();
        let pi = SignalingPolicy::uniform(3, 3);
        // uniform output: predicted action is 0 by tie-break
        assert_eq!(score(&p, &sc, &ScoreKind::indicator(), 0, 0, &pi, 0).unwrap(), 0.0);
        assert_eq!(score(&p, &sc, &ScoreKind::indicator(), 0, 0, &pi, 2).unwrap(), 1.0);
        assert!(score(&p, &sc, &ScoreKind::indicator(), 0, 0, &pi, 3).is_err());
    }

    #[test]
    fn calibration_order_statistics() {
        let c = calibrate(ScoreKind::indicator(), &[0.0; 9], 0.1).unwrap();
        assert_eq!(quantile_rank(9, 0.1), 9);
        assert_eq!(c.threshold(), 0.0);

        let mut scores = vec![0.0; 9];
        scores.push(1.0);
        assert_eq!(quantile_rank(10, 0.1), 10);
        assert_eq!(calibrate(ScoreKind::indicator(), &scores, 0.1).unwrap().threshold(), 1.0);

        // rank ⌈0.99·4⌉ = 4 > 3 clamps to the maximum
        let c = calibrate(ScoreKind::nll(), &[0.3, 2.0, 0.1], 0.01).unwrap();
        assert_eq!(c.threshold(), 2.0);
        assert_eq!(c.cal_scores(), &[0.1, 0.3, 2.0]);

        let single = calibrate(ScoreKind::nll(), &[0.7], 0.1).unwrap();
        assert_eq!(single.threshold(), 0.7);

        assert!(calibrate(ScoreKind::nll(), &[], 0.1).is_err());
        assert!(calibrate(ScoreKind::nll(), &[1.0], 0.0).is_err());
        assert!(calibrate(ScoreKind::nll(), &[1.0], 1.0).is_err());
    }

    #[test]
    fn sets_from_thresholds() {
        let probs = [0.6, 0.3, 0.1];
        let base = calibrate(ScoreKind::indicator(), &[0.0], 0.5).unwrap();
        assert_eq!(base.set_from_probs(&probs), vec![0]);
        assert_eq!(base.clone().with_threshold(1.0).set_from_probs(&probs), vec![0, 1, 2]);

        let aps = calibrate(ScoreKind::aps(), &[0.9], 0.5).unwrap();
        assert_eq!(aps.set_from_probs(&probs), vec![0, 1]);

        // nothing scores under the threshold: fall back to the top action
        let tight = calibrate(ScoreKind::nll(), &[1e-3], 0.5).unwrap();
        assert_eq!(tight.set_from_probs(&[0.2, 0.5, 0.3]), vec![1]);
    }

    #[test]
    fn full_threshold_covers_everything() {
        let sc = Scenario::smart_grid();
        let bf = make_belief_function(BeliefSpec::ExactBayes, &sc, 0.0, 0)
            .unwrap()
            .with_noise_temperature(5.0)
            .unwrap();
        let mut rng = seeded(9);
        let p = Predictor::new(&[15, 8, 3], 0.0, &mut rng).unwrap();
        let pi = SignalingPolicy::uniform(3, 3);
        let ds = generate_dataset(&sc, &[pi], 300, &bf, &mut rng).unwrap();
        let kind = ScoreKind::nll();
        let cal = calibrate(kind, &[0.5], 0.1).unwrap().with_threshold(kind.max_value());
        let rep = dataset_coverage(&p, &sc, &cal, &ds).unwrap();
        assert_eq!(rep.rate, 1.0);
        assert_eq!(rep.mean_set_size, 3.0);
        assert!(evaluate_coverage(&p, &sc, &cal, &[], |id| ds.policy(id)).is_err());
    }

    #[test]
    fn recalibration_with_one_record_uses_its_score() {
        let sc = Scenario::smart_grid();
        let bf = make_belief_function(BeliefSpec::ExactBayes, &sc, 0.0, 0).unwrap();
        let mut rng = seeded(10);
        let p = Predictor::new(&[15, 8, 3], 0.0, &mut rng).unwrap();
        let pi = SignalingPolicy::uniform(3, 3);
        let c = recalibrate_for_policy(&p, &sc, &pi, &bf, 1, 0.1, ScoreKind::nll(), &mut rng).unwrap();
        assert_eq!(c.cal_scores().len(), 1);
        assert_eq!(c.threshold(), c.cal_scores()[0]);
    }

    #[test]
    fn calibration_dump_round_trip() {
        let c = calibrate(ScoreKind::aps(), &[0.91, 0.3, 0.6000000000000001, 1.0, 0.3], 0.2).unwrap();
        let text = c.to_json().unwrap();
        assert_eq!(ConformalCalibration::from_json(&text).unwrap(), c);
        let tampered = c.clone().with_threshold(0.123).to_json().unwrap();
        assert!(ConformalCalibration::from_json(&tampered).is_err());
    }
}
