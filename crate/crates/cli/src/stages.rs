//! The single-run CLI stages. Each stage writes its artifacts plus a
//! `<stage>.manifest.json` carrying the config fingerprint and master seed,
//! and refuses to read upstream artifacts whose manifest does not match.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::{Deserialize, Serialize};

use persuasion::conformal::ConformalCalibration;
use persuasion::domain::SignalingPolicy;
use persuasion::neural::Predictor;
use persuasion::receiver::Dataset;
use persuasion::robustopt::ShiftRow;

use crate::pipeline::{evaluate_policy, optimize, run_shift_study, Context, PolicyEvaluation};
use crate::tables::{write_csv, ShiftRecord};

pub const DATASET: &str = "dataset.csv";
pub const REGISTRY: &str = "policies.toml";
pub const PREDICTOR: &str = "predictor.json";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const CALIBRATION: &str = "calibration.json";
pub const CANDIDATES: &str = "candidates.toml";
pub const OPTIMUM: &str = "optimum.json";
pub const EVALUATION: &str = "evaluation.json";
pub const SHIFT_STUDY: &str = "shift_study.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub fingerprint: String,
    pub master_seed: u64,
    pub files: Vec<String>,
}

/// Output directory plus the identity every artifact in it must carry.
pub struct Workspace<'a> {
    pub ctx: &'a Context,
    pub dir: PathBuf,
}

impl<'a> Workspace<'a> {
    pub fn new(ctx: &'a Context, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { ctx, dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    fn read(&self, name: &str) -> Result<String> {
        let p = self.path(name);
        fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
    }

    fn seal(&self, stage: &str, files: &[&str]) -> Result<()> {
        let m = Manifest {
            stage: stage.into(),
            fingerprint: self.ctx.fingerprint.clone(),
            master_seed: self.ctx.config.master_seed,
            files: files.iter().map(|f| f.to_string()).collect(),
        };
        self.write(&manifest_name(stage), &serde_json::to_string_pretty(&m)?)
    }

    /// Fails unless `stage` ran under this exact config and seed.
    pub fn require(&self, stage: &str) -> Result<()> {
        let name = manifest_name(stage);
        if !self.path(&name).is_file() {
            bail!("missing {name}: run the `{stage}` stage first");
        }
        let m: Manifest = serde_json::from_str(&self.read(&name)?)?;
        if m.fingerprint != self.ctx.fingerprint || m.master_seed != self.ctx.config.master_seed {
            bail!(
                "stale artifacts: `{stage}` ran with fingerprint {} seed {}, current config is {} seed {}",
                m.fingerprint,
                m.master_seed,
                self.ctx.fingerprint,
                self.ctx.config.master_seed
            );
        }
        Ok(())
    }

    fn load_dataset(&self) -> Result<Dataset> {
        self.require("generate")?;
        let registry = self.read(REGISTRY)?;
        let f = fs::File::open(self.path(DATASET))?;
        let data = Dataset::read(f, &registry)?;
        data.validate(&self.ctx.scenario)?;
        Ok(data)
    }

    fn load_predictor(&self) -> Result<Predictor> {
        self.require("train")?;
        Ok(Predictor::from_checkpoint(&self.read(PREDICTOR)?)?)
    }

    fn load_calibration(&self) -> Result<ConformalCalibration> {
        self.require("calibrate")?;
        Ok(ConformalCalibration::from_json(&self.read(CALIBRATION)?)?)
    }

    fn load_optimum(&self) -> Result<OptimumFile> {
        self.require("optimize")?;
        Ok(serde_json::from_str(&self.read(OPTIMUM)?)?)
    }
}

fn manifest_name(stage: &str) -> String {
    format!("{stage}.manifest.json")
}

pub fn cmd_generate(ws: &Workspace) -> Result<Dataset> {
    let data = ws.ctx.generate(0)?;
    let mut buf = Vec::new();
    data.write_records(&mut buf)?;
    ws.write(DATASET, std::str::from_utf8(&buf)?)?;
    ws.write(REGISTRY, &data.registry_toml()?)?;
    ws.seal("generate", &[DATASET, REGISTRY])?;
    Ok(data)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainSummary {
    fingerprint: String,
    master_seed: u64,
    n_train: usize,
    best_epoch: usize,
    train_loss: Vec<f64>,
    val_loss: Vec<f64>,
    learning_rate: Vec<f64>,
}

pub fn cmd_train(ws: &Workspace) -> Result<Predictor> {
    let data = ws.load_dataset()?;
    let (train_data, _) = ws.ctx.split(0, &data)?;
    let (predictor, report) = ws.ctx.train(0, &train_data)?;
    ws.write(PREDICTOR, &predictor.to_checkpoint()?)?;
    let summary = TrainSummary {
        fingerprint: ws.ctx.fingerprint.clone(),
        master_seed: ws.ctx.config.master_seed,
        n_train: train_data.len(),
        best_epoch: report.best_epoch,
        train_loss: report.train_loss,
        val_loss: report.val_loss,
        learning_rate: report.learning_rate,
    };
    ws.write(TRAIN_REPORT, &serde_json::to_string_pretty(&summary)?)?;
    ws.seal("train", &[PREDICTOR, TRAIN_REPORT])?;
    Ok(predictor)
}

pub fn cmd_calibrate(ws: &Workspace) -> Result<ConformalCalibration> {
    let data = ws.load_dataset()?;
    let predictor = ws.load_predictor()?;
    let (_, cal_data) = ws.ctx.split(0, &data)?;
    let cal = ws.ctx.calibrate(&predictor, &cal_data)?;
    ws.write(CALIBRATION, &cal.to_json()?)?;
    ws.seal("calibrate", &[CALIBRATION])?;
    Ok(cal)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimumFile {
    pub fingerprint: String,
    pub master_seed: u64,
    pub candidate_index: usize,
    pub robust_value: f64,
    pub policy: SignalingPolicy,
}

#[derive(Serialize)]
struct CandidateFile<'a> {
    policy: &'a [SignalingPolicy],
}

pub fn cmd_optimize(ws: &Workspace) -> Result<OptimumFile> {
    let predictor = ws.load_predictor()?;
    let cal = ws.load_calibration()?;
    let candidates = ws.ctx.candidates()?;
    let (index, policy, value) = optimize(ws.ctx, &predictor, &cal, &candidates)?;
    ws.write(CANDIDATES, &toml::to_string(&CandidateFile { policy: &candidates })?)?;
    let out = OptimumFile {
        fingerprint: ws.ctx.fingerprint.clone(),
        master_seed: ws.ctx.config.master_seed,
        candidate_index: index,
        robust_value: value,
        policy,
    };
    ws.write(OPTIMUM, &serde_json::to_string_pretty(&out)?)?;
    ws.seal("optimize", &[CANDIDATES, OPTIMUM])?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationFile {
    pub fingerprint: String,
    pub master_seed: u64,
    pub policy: SignalingPolicy,
    pub robust_value: f64,
    #[serde(flatten)]
    pub evaluation: PolicyEvaluation,
}

pub fn cmd_evaluate(ws: &Workspace) -> Result<EvaluationFile> {
    let predictor = ws.load_predictor()?;
    let cal = ws.load_calibration()?;
    let opt = ws.load_optimum()?;
    let evaluation = evaluate_policy(ws.ctx, 0, &predictor, &cal, &opt.policy)?;
    let out = EvaluationFile {
        fingerprint: ws.ctx.fingerprint.clone(),
        master_seed: ws.ctx.config.master_seed,
        policy: opt.policy,
        robust_value: opt.robust_value,
        evaluation,
    };
    ws.write(EVALUATION, &serde_json::to_string_pretty(&out)?)?;
    ws.seal("evaluate", &[EVALUATION])?;
    Ok(out)
}

pub fn cmd_shift_study(ws: &Workspace) -> Result<Vec<ShiftRow>> {
    let predictor = ws.load_predictor()?;
    let rows = run_shift_study(ws.ctx, 0, &predictor)?;
    let records: Vec<ShiftRecord> = rows
        .iter()
        .map(|r| ShiftRecord::new(ws.ctx, 0, r))
        .collect();
    write_csv(&ws.path(SHIFT_STUDY), &records)?;
    ws.seal("shift-study", &[SHIFT_STUDY])?;
    Ok(rows)
}

/// True if `path` holds a manifest, for callers that want to skip work.
pub fn has_manifest(dir: &Path, stage: &str) -> bool {
    dir.join(manifest_name(stage)).is_file()
}
