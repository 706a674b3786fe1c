//! Run configuration. Every section defaults to the smart-grid replication
//! settings, so an empty file is a valid config.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context as _, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use persuasion::conformal::{ScoreKind, ScoreVariant};
use persuasion::domain::{Categorical, Scenario, SignalingPolicy};
use persuasion::neural::TrainConfig;
use persuasion::receiver::{make_belief_function, BeliefFunction, BeliefKind, BeliefSpec};
use persuasion::robustopt::{CandidateFamily, PolicySearchConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub out_dir: PathBuf,
    /// Scenario TOML; the bundled smart-grid scenario when absent. Relative
    /// paths resolve against the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<PathBuf>,
    pub receiver: ReceiverConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub conformal: ConformalConfig,
    pub search: PolicySearchConfig,
    pub evaluation: EvaluationConfig,
    pub shift: ShiftConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    pub kind: BeliefKind,
    /// Total-variation distance of the misspecified prior from the true one.
    pub deviation: f64,
    pub temper_exponent: f64,
    pub noise_temperature: f64,
    /// Drives the prior perturbation only. The receiver is fixed across
    /// replication seeds.
    pub seed: u64,
    /// Beliefs per observation for `kind = "tabular"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Historical policies (K). The baseline is always the first.
    pub n_policies: usize,
    pub n_per_policy: usize,
    /// Share of the historical records held out for calibration.
    pub calibration_fraction: f64,
    /// Family the remaining historical policies are drawn from, uniformly
    /// with replacement.
    pub history: PolicySearchConfig,
    pub baseline: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalConfig {
    pub score: ScoreVariant,
    pub nll_epsilon: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub n_test: usize,
    pub n_seeds: usize,
    /// Simulated interactions behind the utility-bound check.
    pub n_bound: usize,
    /// Records simulated under the selected policy for re-calibration.
    pub n_recal: usize,
    pub belief_grid_resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftConfig {
    pub n_candidates: usize,
    pub max_tv: f64,
    /// Baseline-policy records used to calibrate the shift study.
    pub n_cal: usize,
    pub n_test: usize,
    pub n_cal_sim: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            out_dir: PathBuf::from("runs/default"),
            scenario: None,
            receiver: ReceiverConfig::default(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            conformal: ConformalConfig::default(),
            search: PolicySearchConfig {
                family: CandidateFamily::Grid,
                resolution_or_count: 2,
                max_tv_from_baseline: None,
                seed: 0,
            },
            evaluation: EvaluationConfig::default(),
            shift: ShiftConfig::default(),
        }
    }
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            kind: BeliefKind::MisspecifiedPrior,
            deviation: 0.25,
            temper_exponent: 1.0,
            noise_temperature: 2.0,
            seed: 0,
            table: None,
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_policies: 500,
            n_per_policy: 30,
            calibration_fraction: 0.2,
            history: PolicySearchConfig {
                family: CandidateFamily::Grid,
                resolution_or_count: 2,
                max_tv_from_baseline: None,
                seed: 0,
            },
            baseline: vec![
                vec![0.8, 0.1, 0.1],
                vec![0.1, 0.8, 0.1],
                vec![0.1, 0.1, 0.8],
            ],
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: vec![128, 64] }
    }
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            score: ScoreVariant::Nll,
            nll_epsilon: 1e-9,
            alpha: 0.1,
        }
    }
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            n_test: 500,
            n_seeds: 20,
            n_bound: 500,
            n_recal: 500,
            belief_grid_resolution: 10,
        }
    }
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self {
            n_candidates: 11,
            max_tv: 0.05,
            n_cal: 500,
            n_test: 5000,
            n_cal_sim: 10_000,
        }
    }
}

impl RunConfig {
    /// Reads and validates a config file. The scenario path, if any, is made
    /// absolute relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(s) = &config.scenario {
            if s.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.scenario = Some(base.join(s));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.scenario {
            ensure!(s.is_file(), "scenario file {} does not exist", s.display());
        }
        let r = &self.receiver;
        ensure!((0.0..=1.0).contains(&r.deviation), "receiver.deviation {} outside [0, 1]", r.deviation);
        ensure!(r.temper_exponent > 0.0 && r.temper_exponent.is_finite(), "receiver.temper_exponent must be positive");
        ensure!(r.noise_temperature >= 0.0 && r.noise_temperature.is_finite(), "receiver.noise_temperature must be non-negative");
        if r.kind == BeliefKind::Tabular && r.table.is_none() {
            bail!("receiver.kind = \"tabular\" needs receiver.table");
        }
        let d = &self.data;
        ensure!(d.n_policies >= 1, "data.n_policies must be at least 1");
        ensure!(d.n_per_policy >= 1, "data.n_per_policy must be at least 1");
        ensure!(
            d.calibration_fraction > 0.0 && d.calibration_fraction < 1.0,
            "data.calibration_fraction {} outside (0, 1)",
            d.calibration_fraction
        );
        d.history.validate()?;
        ensure!(
            d.history.family != CandidateFamily::BaselinePerturbation || d.history.max_tv_from_baseline.is_some(),
            "data.history baseline-perturbation needs max_tv_from_baseline"
        );
        ensure!(!self.model.hidden.is_empty(), "model.hidden needs at least one layer");
        ensure!(self.model.hidden.iter().all(|&w| w > 0), "model.hidden widths must be positive");
        self.training.validate()?;
        self.score_kind().validate()?;
        let a = self.conformal.alpha;
        ensure!(a > 0.0 && a < 1.0, "conformal.alpha {a} outside (0, 1)");
        self.search.validate()?;
        let e = &self.evaluation;
        ensure!(e.n_test >= 1 && e.n_seeds >= 1 && e.n_bound >= 1 && e.n_recal >= 1, "evaluation counts must be at least 1");
        ensure!(e.belief_grid_resolution >= 1, "evaluation.belief_grid_resolution must be at least 1");
        let s = &self.shift;
        ensure!(s.n_candidates >= 1 && s.n_cal >= 1 && s.n_test >= 1 && s.n_cal_sim >= 1, "shift counts must be at least 1");
        ensure!((0.0..=1.0).contains(&s.max_tv), "shift.max_tv {} outside [0, 1]", s.max_tv);
        Ok(())
    }

    pub fn score_kind(&self) -> ScoreKind {
        ScoreKind {
            variant: self.conformal.score,
            nll_epsilon: self.conformal.nll_epsilon,
        }
    }

    pub fn load_scenario(&self) -> Result<Scenario> {
        match &self.scenario {
            None => Ok(Scenario::smart_grid()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading scenario {}", p.display()))?;
                Ok(Scenario::from_toml_str(&text)?)
            }
        }
    }

    pub fn belief_function(&self, scenario: &Scenario) -> Result<BeliefFunction> {
        let r = &self.receiver;
        let spec = match r.kind {
            BeliefKind::ExactBayes => BeliefSpec::ExactBayes,
            BeliefKind::MisspecifiedPrior => BeliefSpec::MisspecifiedPrior,
            BeliefKind::Tabular => BeliefSpec::Tabular(
                r.table
                    .iter()
                    .flatten()
                    .map(|row| Categorical::new(row.clone()))
                    .collect::<persuasion::Result<_>>()?,
            ),
        };
        Ok(make_belief_function(spec, scenario, r.deviation, r.seed)?
            .with_temper_exponent(r.temper_exponent)?
            .with_noise_temperature(r.noise_temperature)?)
    }

    pub fn baseline_policy(&self, scenario: &Scenario) -> Result<SignalingPolicy> {
        let p = SignalingPolicy::new(self.data.baseline.clone())?.with_id("baseline");
        scenario.check_policy(&p)?;
        Ok(p)
    }

    /// Short hash of everything that determines results: the config minus
    /// the output directory and seed count, plus the scenario text.
    pub fn fingerprint(&self) -> Result<String> {
        let mut canon = self.clone();
        canon.out_dir = PathBuf::new();
        canon.evaluation.n_seeds = 0;
        let scenario_text = match &self.scenario {
            Some(p) => std::fs::read_to_string(p)?,
            None => Scenario::smart_grid().to_toml_string()?,
        };
        canon.scenario = None;
        let mut h = Sha256::new();
        h.update(canon.to_toml()?.as_bytes());
        h.update(b"\0");
        h.update(scenario_text.as_bytes());
        Ok(hex::encode(&h.finalize()[..8]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_replication_defaults() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
        assert_eq!(c.model.hidden, vec![128, 64]);
        assert_eq!(c.conformal.alpha, 0.1);
        assert_eq!(c.evaluation.n_test, 500);
        assert_eq!(c.evaluation.n_seeds, 20);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn fingerprint_ignores_output_location_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        b.evaluation.n_seeds = 3;
        assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
        b.master_seed = 1;
        assert_ne!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = RunConfig::default();
        c.data.n_per_policy = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.conformal.alpha = 1.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.scenario = Some("/nonexistent/scenario.toml".into());
        assert!(c.validate().is_err());
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}
