//! Flat `key = value` run configuration. Every key is also a flag of the same
//! name (`theta_apex` <-> `--theta-apex`); flags win over the file.

use crate::CliError;
use clap::Args;
use spotgcn::evalkit::Matching;
use spotgcn::experiment::ExperimentConfig;
use spotgcn::model::SpotGcnConfig;
use spotgcn::spotting::DurationPrior;
use std::path::{Path, PathBuf};

macro_rules! run_config {
    ($($field:ident : $ty:ty => $help:literal,)*) => {
        #[derive(Args, Debug, Clone, Default, PartialEq)]
        pub struct RunConfig {
            $(
                #[arg(long, help = $help)]
                pub $field: Option<$ty>,
            )*
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
                match key {
                    $(stringify!($field) => {
                        self.$field = Some(value.parse().map_err(|e| {
                            CliError::Usage(format!("config key `{key}`: cannot parse `{value}`: {e}"))
                        })?);
                    })*
                    _ => {
                        return Err(CliError::Usage(format!(
                            "unknown config key `{key}`; known keys: {}",
                            Self::KEYS.join(", ")
                        )))
                    }
                }
                Ok(())
            }

            /// Values from `over` replace ours where present.
            pub fn overlay(self, over: &RunConfig) -> RunConfig {
                RunConfig {
                    $($field: over.$field.clone().or(self.$field),)*
                }
            }
        }
    };
}

run_config! {
    features_dir: PathBuf => "directory of <subject>/<video>.of1 feature files",
    annotations: PathBuf => "annotation CSV",
    fold: String => "held-out subject of a leave-one-subject-out fold",
    out: PathBuf => "output path",
    checkpoint: PathBuf => "model checkpoint",
    proposals: PathBuf => "proposal CSV",
    model: String => "model size: default or desk",
    epochs: usize => "training epochs",
    batch: usize => "batch size",
    seed: u64 => "random seed",
    samples_per_epoch: usize => "cap on samples drawn per epoch",
    checkpoint_every: usize => "epochs between checkpoints",
    lr: f64 => "AdamW learning rate",
    beta1: f64 => "AdamW first-moment decay",
    beta2: f64 => "AdamW second-moment decay",
    eps: f64 => "AdamW epsilon",
    weight_decay: f64 => "AdamW decoupled weight decay",
    alpha: f64 => "focal loss alpha",
    gamma: f64 => "focal loss gamma",
    tau: f64 => "contrastive temperature",
    lambda: f64 => "contrastive loss weight",
    theta_apex: f64 => "apex probability threshold",
    theta_overlap: f64 => "NMS overlap threshold",
    gate_by_exp: bool => "gate apex scores by expression probability",
    learn_durations: bool => "take k and j from training annotations",
    micro_k: f64 => "micro average duration k",
    micro_j: f64 => "micro minimum duration j",
    macro_k: f64 => "macro average duration k",
    macro_j: f64 => "macro minimum duration j",
    iou: f64 => "IoU threshold for a true positive",
    matching: String => "greedy or optimal",
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{}:{}: expected `key = value`", origin.display(), no + 1)))?;
            let key = key.trim().replace('-', "_");
            cfg.set(&key, value.trim())
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", origin.display(), no + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// File values (if any) overlaid by command-line flags.
    pub fn resolve(file: Option<&Path>, flags: &RunConfig) -> Result<Self, CliError> {
        let base = match file {
            Some(p) => Self::load(p)?,
            None => RunConfig::default(),
        };
        Ok(base.overlay(flags))
    }

    pub fn require<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T, CliError> {
        value.as_ref().ok_or_else(|| {
            CliError::Usage(format!(
                "missing --{} (or `{key}` in the config file)",
                key.replace('_', "-")
            ))
        })
    }

    pub fn model_config(&self) -> Result<SpotGcnConfig, CliError> {
        match self.model.as_deref().unwrap_or("default") {
            "default" => Ok(SpotGcnConfig::default()),
            "desk" => Ok(SpotGcnConfig::desk()),
            other => Err(CliError::Usage(format!("unknown model `{other}` (default, desk)"))),
        }
    }

    pub fn matching_mode(&self) -> Result<Matching, CliError> {
        match self.matching.as_deref().unwrap_or("greedy") {
            "greedy" => Ok(Matching::Greedy),
            "optimal" => Ok(Matching::Optimal),
            other => Err(CliError::Usage(format!("unknown matching `{other}` (greedy, optimal)"))),
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let mut e = ExperimentConfig {
            model: self.model_config()?,
            matching: self.matching_mode()?,
            ..ExperimentConfig::default()
        };
        let t = &mut e.train;
        macro_rules! apply {
            ($($src:ident => $dst:expr),* $(,)?) => {
                $(if let Some(v) = self.$src.clone() { $dst = v; })*
            };
        }
        apply! {
            epochs => t.epochs,
            batch => t.batch,
            seed => t.seed,
            checkpoint_every => t.checkpoint_every,
            lr => t.optimizer.lr,
            beta1 => t.optimizer.beta1,
            beta2 => t.optimizer.beta2,
            eps => t.optimizer.eps,
            weight_decay => t.optimizer.weight_decay,
            alpha => t.loss.alpha,
            gamma => t.loss.gamma,
            tau => t.loss.tau,
            lambda => t.loss.lambda,
            theta_apex => e.spotting.theta_apex,
            theta_overlap => e.spotting.theta_overlap,
            gate_by_exp => e.spotting.gate_by_exp,
            learn_durations => e.learn_durations,
            iou => e.iou,
        }
        if self.samples_per_epoch.is_some() {
            e.train.samples_per_epoch = self.samples_per_epoch;
        }
        let prior = |p: DurationPrior, k: Option<f64>, j: Option<f64>| DurationPrior {
            mean: k.unwrap_or(p.mean),
            min: j.unwrap_or(p.min),
        };
        e.spotting.micro = prior(e.spotting.micro, self.micro_k, self.micro_j);
        e.spotting.macro_ = prior(e.spotting.macro_, self.macro_k, self.macro_j);
        e.train.validate()?;
        e.spotting.validate()?;
        Ok(e)
    }
}
