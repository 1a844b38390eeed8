//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown keys and repeated
//! keys are errors. Every key and its default is listed in [`KEYS`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datasets::{civilcomments_groups, SynthConfig};
use crate::dpsgd::{DpSgdConfig, OrderGrid};
use crate::error::{Error, Result};
use crate::fairmetrics::RiskField;
use crate::models::Loss;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    Logistic,
    GroupDroMlp,
    PcaFfn,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Logistic => "logistic",
            Pipeline::GroupDroMlp => "groupdro_mlp",
            Pipeline::PcaFfn => "pca_ffn",
        }
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Pipeline::Logistic),
            "groupdro_mlp" => Ok(Pipeline::GroupDroMlp),
            "pca_ffn" => Ok(Pipeline::PcaFfn),
            other => Err(Error::Config(format!(
                "unknown pipeline '{other}' (expected logistic, groupdro_mlp or pca_ffn)"
            ))),
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Privacy budgets to sweep.
#[derive(Clone, Debug, PartialEq)]
pub enum EpsilonGrid {
    List(Vec<f64>),
    /// Inclusive range `start, start + step, …` up to `stop`.
    Range { start: f64, stop: f64, step: f64 },
}

impl EpsilonGrid {
    /// Grid values, rounded to 1e-9 so that `0.1 + 3 · 0.1` prints as `0.4`.
    pub fn values(&self) -> Result<Vec<f64>> {
        let values = match self {
            EpsilonGrid::List(v) => v.clone(),
            EpsilonGrid::Range { start, stop, step } => {
                if !(*step > 0.0) || !(stop >= start) {
                    return Err(Error::Config(format!(
                        "epsilon range needs step > 0 and stop >= start (got {start}..{stop} step {step})"
                    )));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..count)
                    .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                    .collect()
            }
        };
        if values.is_empty() {
            return Err(Error::Config("epsilon grid is empty".into()));
        }
        if let Some(e) = values.iter().find(|&&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::Config(format!("epsilon values must be finite and > 0, got {e}")));
        }
        Ok(values)
    }
}

/// Where the train/validation/test splits come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SynthConfig),
    Files {
        train: PathBuf,
        validation: Option<PathBuf>,
        test: PathBuf,
    },
}

/// Non-private feed-forward network trained with AdamW (the PCA downstream
/// model and the attacker).
#[derive(Clone, Debug, PartialEq)]
pub struct FfnConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Early-stopping patience in epochs on validation MSE; `None` trains all epochs.
    pub patience: Option<usize>,
}

impl Default for FfnConfig {
    fn default() -> Self {
        FfnConfig {
            hidden: vec![64, 32],
            epochs: 300,
            learning_rate: 1e-3,
            batch_size: 32,
            weight_decay: 0.01,
            patience: Some(25),
        }
    }
}

impl FfnConfig {
    /// 2979 epochs at learning rate 1e-6 with no early stopping.
    pub fn paper_faithful() -> Self {
        FfnConfig {
            epochs: 2979,
            learning_rate: 1e-6,
            patience: None,
            ..FfnConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackTarget {
    Group,
    Label,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub grid: EpsilonGrid,
    pub phi: f64,
    pub repetitions: usize,
    pub seed: u64,
    /// DP-SGD settings; `noise_multiplier` and `seed` are filled per row.
    pub dpsgd: DpSgdConfig,
    pub mlp_hidden: Vec<usize>,
    pub loss: Loss,
    pub groupdro_eta: f64,
    pub pca_k: usize,
    pub ffn: FfnConfig,
    pub attack_target: AttackTarget,
    pub risk_field: RiskField,
    pub data: DataSource,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub record_wall_time: bool,
}

/// Documented keys with their defaults.
pub const KEYS: &[(&str, &str)] = &[
    ("pipeline", "logistic | groupdro_mlp | pca_ffn (required)"),
    ("epsilons", "comma list; overrides the range keys"),
    ("epsilon_start", "0.1"),
    ("epsilon_stop", "40 (logistic, groupdro_mlp) | 10 (pca_ffn)"),
    ("epsilon_step", "0.1 (logistic, groupdro_mlp) | 0.5 (pca_ffn)"),
    ("phi", "1e-5"),
    ("repetitions", "1"),
    ("seed", "0"),
    ("clip_bound", "1"),
    ("learning_rate", "0.3 (logistic) | 1.0 (groupdro_mlp)"),
    ("batch_size", "8 (logistic) | 32 (groupdro_mlp)"),
    ("epochs", "10"),
    ("rdp_orders", "default | extended"),
    ("mlp_hidden", "64,32"),
    ("loss", "mse (groupdro_mlp) | logloss"),
    ("groupdro_eta", "0.1"),
    ("pca_k", "32"),
    ("ffn_hidden", "64,32"),
    ("ffn_epochs", "300"),
    ("ffn_learning_rate", "1e-3"),
    ("ffn_batch_size", "32"),
    ("ffn_weight_decay", "0.01"),
    ("ffn_patience", "25 (0 disables early stopping)"),
    ("paper_faithful", "false; true selects 2979 FFN epochs, lr 1e-6, no early stopping"),
    ("attack_target", "group | label"),
    ("risk_field", "zero_one | one_minus_f1"),
    ("record_wall_time", "true"),
    ("jobs", "hardware threads"),
    ("output_dir", "unset"),
    ("train_csv", "unset; with test_csv selects file input"),
    ("validation_csv", "unset"),
    ("test_csv", "unset"),
    ("synth_dims", "64"),
    ("synth_counts", "3000,2500,2500,1500,600,400,1200,1200"),
    ("synth_priors", "0.5,0.3,0.3,0.2,0.35,0.35,0.45,0.45"),
    ("synth_separation", "2"),
    ("synth_group_signal_dims", "8"),
    ("synth_group_signal_strength", "8"),
    ("synth_seed", "0"),
];

impl ExperimentConfig {
    /// Defaults for a pipeline, before any key is applied.
    pub fn new(pipeline: Pipeline) -> Self {
        let (grid, dpsgd, loss) = match pipeline {
            Pipeline::Logistic => (
                EpsilonGrid::Range { start: 0.1, stop: 40.0, step: 0.1 },
                DpSgdConfig {
                    learning_rate: 0.3,
                    batch_size: 8,
                    ..DpSgdConfig::default()
                },
                Loss::LogLoss,
            ),
            Pipeline::GroupDroMlp => (
                EpsilonGrid::Range { start: 0.1, stop: 40.0, step: 0.1 },
                DpSgdConfig {
                    learning_rate: 1.0,
                    batch_size: 32,
                    ..DpSgdConfig::default()
                },
                Loss::Mse,
            ),
            Pipeline::PcaFfn => (
                EpsilonGrid::Range { start: 0.1, stop: 10.0, step: 0.5 },
                DpSgdConfig::default(),
                Loss::Mse,
            ),
        };
        ExperimentConfig {
            pipeline,
            grid,
            phi: crate::accountant::DEFAULT_PHI,
            repetitions: 1,
            seed: 0,
            dpsgd,
            mlp_hidden: vec![64, 32],
            loss,
            groupdro_eta: 0.1,
            pca_k: 32,
            ffn: FfnConfig::default(),
            attack_target: AttackTarget::Group,
            risk_field: RiskField::ZeroOne,
            data: DataSource::Synthetic(SynthConfig::default()),
            output_dir: None,
            jobs: None,
            record_wall_time: true,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
            let key = key.trim().to_string();
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(Error::Config(format!("line {}: unknown key '{key}'", i + 1)));
            }
            if entries.iter().any(|(_, k, _)| *k == key) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", i + 1)));
            }
            entries.push((i + 1, key, value.trim().to_string()));
        }

        let pipeline: Pipeline = entries
            .iter()
            .find(|(_, k, _)| k == "pipeline")
            .ok_or_else(|| Error::Config("missing required key 'pipeline'".into()))?
            .2
            .parse()?;
        let mut cfg = ExperimentConfig::new(pipeline);
        let mut synth = SynthConfig::default();
        let mut range = match cfg.grid {
            EpsilonGrid::Range { start, stop, step } => (start, stop, step),
            EpsilonGrid::List(_) => unreachable!("pipeline defaults are ranges"),
        };
        let mut explicit: Option<Vec<f64>> = None;
        let (mut train, mut validation, mut test) = (None, None, None);
        let mut ffn_touched = false;
        let mut paper_faithful = false;

        for (line, key, value) in &entries {
            let ctx = |e: Error| match e {
                Error::Config(m) => Error::Config(format!("line {line}: {key}: {m}")),
                other => other,
            };
            let v = value.as_str();
            match key.as_str() {
                "pipeline" => {}
                "epsilons" => explicit = Some(list(v).map_err(ctx)?),
                "epsilon_start" => range.0 = num(v).map_err(ctx)?,
                "epsilon_stop" => range.1 = num(v).map_err(ctx)?,
                "epsilon_step" => range.2 = num(v).map_err(ctx)?,
                "phi" => cfg.phi = num(v).map_err(ctx)?,
                "repetitions" => cfg.repetitions = num(v).map_err(ctx)?,
                "seed" => cfg.seed = num(v).map_err(ctx)?,
                "clip_bound" => cfg.dpsgd.clip_bound = num(v).map_err(ctx)?,
                "learning_rate" => cfg.dpsgd.learning_rate = num(v).map_err(ctx)?,
                "batch_size" => cfg.dpsgd.batch_size = num(v).map_err(ctx)?,
                "epochs" => cfg.dpsgd.epochs = num(v).map_err(ctx)?,
                "rdp_orders" => {
                    cfg.dpsgd.orders = match v {
                        "default" => OrderGrid::Default,
                        "extended" => OrderGrid::Extended,
                        _ => return Err(ctx(Error::Config(format!("expected default or extended, got '{v}'")))),
                    }
                }
                "mlp_hidden" => cfg.mlp_hidden = list(v).map_err(ctx)?,
                "loss" => {
                    cfg.loss = match v {
                        "mse" => Loss::Mse,
                        "logloss" => Loss::LogLoss,
                        _ => return Err(ctx(Error::Config(format!("expected mse or logloss, got '{v}'")))),
                    }
                }
                "groupdro_eta" => cfg.groupdro_eta = num(v).map_err(ctx)?,
                "pca_k" => cfg.pca_k = num(v).map_err(ctx)?,
                "ffn_hidden" => {
                    cfg.ffn.hidden = list(v).map_err(ctx)?;
                    ffn_touched = true;
                }
                "ffn_epochs" => {
                    cfg.ffn.epochs = num(v).map_err(ctx)?;
                    ffn_touched = true;
                }
                "ffn_learning_rate" => {
                    cfg.ffn.learning_rate = num(v).map_err(ctx)?;
                    ffn_touched = true;
                }
                "ffn_batch_size" => {
                    cfg.ffn.batch_size = num(v).map_err(ctx)?;
                    ffn_touched = true;
                }
                "ffn_weight_decay" => {
                    cfg.ffn.weight_decay = num(v).map_err(ctx)?;
                    ffn_touched = true;
                }
                "ffn_patience" => {
                    let p: usize = num(v).map_err(ctx)?;
                    cfg.ffn.patience = (p > 0).then_some(p);
                    ffn_touched = true;
                }
                "paper_faithful" => paper_faithful = boolean(v).map_err(ctx)?,
                "attack_target" => {
                    cfg.attack_target = match v {
                        "group" => AttackTarget::Group,
                        "label" => AttackTarget::Label,
                        _ => return Err(ctx(Error::Config(format!("expected group or label, got '{v}'")))),
                    }
                }
                "risk_field" => {
                    cfg.risk_field = match v {
                        "zero_one" => RiskField::ZeroOne,
                        "one_minus_f1" => RiskField::OneMinusF1,
                        _ => return Err(ctx(Error::Config(format!("expected zero_one or one_minus_f1, got '{v}'")))),
                    }
                }
                "record_wall_time" => cfg.record_wall_time = boolean(v).map_err(ctx)?,
                "jobs" => cfg.jobs = Some(num(v).map_err(ctx)?),
                "output_dir" => cfg.output_dir = Some(PathBuf::from(v)),
                "train_csv" => train = Some(PathBuf::from(v)),
                "validation_csv" => validation = Some(PathBuf::from(v)),
                "test_csv" => test = Some(PathBuf::from(v)),
                "synth_dims" => synth.dims = num(v).map_err(ctx)?,
                "synth_counts" => synth.counts = list(v).map_err(ctx)?,
                "synth_priors" => synth.priors = list(v).map_err(ctx)?,
                "synth_separation" => synth.separation = num(v).map_err(ctx)?,
                "synth_group_signal_dims" => synth.group_signal_dims = num(v).map_err(ctx)?,
                "synth_group_signal_strength" => synth.group_signal_strength = num(v).map_err(ctx)?,
                "synth_seed" => synth.seed = num(v).map_err(ctx)?,
                other => unreachable!("key '{other}' is in KEYS but not handled"),
            }
        }

        if paper_faithful {
            if ffn_touched {
                return Err(Error::Config("paper_faithful cannot be combined with ffn_* keys".into()));
            }
            cfg.ffn = FfnConfig::paper_faithful();
        }
        cfg.grid = match explicit {
            Some(v) => EpsilonGrid::List(v),
            None => EpsilonGrid::Range {
                start: range.0,
                stop: range.1,
                step: range.2,
            },
        };
        let uses_files = train.is_some() || test.is_some() || validation.is_some();
        cfg.data = if uses_files {
            match (train, test) {
                (Some(train), Some(test)) => DataSource::Files { train, validation, test },
                _ => return Err(Error::Config("file input needs both train_csv and test_csv".into())),
            }
        } else {
            DataSource::Synthetic(synth)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.values()?;
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::Config(format!("phi must lie in (0, 1), got {}", self.phi)));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.pca_k == 0 {
            return Err(Error::Config("pca_k must be at least 1".into()));
        }
        if !(self.groupdro_eta > 0.0) {
            return Err(Error::Config("groupdro_eta must be positive".into()));
        }
        let ffn = &self.ffn;
        if ffn.epochs == 0 || ffn.batch_size == 0 || !(ffn.learning_rate > 0.0) || !(ffn.weight_decay >= 0.0) {
            return Err(Error::Config("ffn epochs, batch size and learning rate must be positive".into()));
        }
        if self.mlp_hidden.contains(&0) || ffn.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        DpSgdConfig {
            noise_multiplier: 0.0,
            ..self.dpsgd
        }
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
        if let DataSource::Synthetic(s) = &self.data {
            s.validate().map_err(|e| match e {
                Error::InvalidArgument(m) => Error::Config(m),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Group registry used for the results header.
    pub fn group_names(&self) -> Vec<String> {
        match &self.data {
            DataSource::Synthetic(s) => s.group_names.clone(),
            DataSource::Files { .. } => civilcomments_groups(),
        }
    }

    pub fn worker_threads(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

fn num<T: FromStr>(v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("cannot parse '{v}' as {}", std::any::type_name::<T>())))
}

fn list<T: FromStr>(v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| num(s.trim())).collect()
}

fn boolean(v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("expected true or false, got '{v}'"))),
    }
}
