//! Training hyperparameters and their flat `key = value` file format.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected so that typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::Path;

use crate::augment::AugmentConfig;
use crate::bootstrap::EmaSchedule;
use crate::encoder::Architecture;
use crate::error::{Error, Result};
use crate::objective::LossConfig;
use crate::optim::lr_at;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub loss: LossConfig,
    pub ema_t_base: f64,
    /// Evaluation snapshot period in epochs; 0 disables snapshots.
    pub eval_every: usize,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            lr: 5e-4,
            warmup_epochs: 100,
            weight_decay: 1e-5,
            seed: 0,
            augment: AugmentConfig::default(),
            loss: LossConfig::default(),
            ema_t_base: 0.99,
            eval_every: 250,
            arch: Architecture::default(),
        }
    }
}

/// Every key accepted by [`TrainConfig::set`].
pub const KEYS: &[&str] = &[
    "epochs",
    "lr",
    "warmup_epochs",
    "weight_decay",
    "seed",
    "p_m1",
    "p_d1",
    "p_m2",
    "p_d2",
    "variant",
    "tau",
    "symmetric",
    "neighbor_term_weight",
    "grad_through_scores",
    "ema_t_base",
    "eval_every",
    "encoder_dims",
    "predictor_hidden",
    "batch_norm",
    "bn_momentum",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        self.augment.validate()?;
        self.loss.validate()?;
        self.ema_schedule()?;
        self.arch.validate()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        lr_at(self.lr, self.warmup_epochs, self.epochs, epoch)
    }

    pub fn ema_schedule(&self) -> Result<EmaSchedule> {
        EmaSchedule::new(self.ema_t_base, self.epochs)
    }

    /// Assigns one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "epochs" => self.epochs = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "warmup_epochs" => self.warmup_epochs = parse_num(key, v)?,
            "weight_decay" => self.weight_decay = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "p_m1" => self.augment.p_m1 = parse_num(key, v)?,
            "p_d1" => self.augment.p_d1 = parse_num(key, v)?,
            "p_m2" => self.augment.p_m2 = parse_num(key, v)?,
            "p_d2" => self.augment.p_d2 = parse_num(key, v)?,
            "variant" => self.loss.variant = v.parse()?,
            "tau" => self.loss.tau = parse_num(key, v)?,
            "symmetric" => self.loss.symmetric = parse_bool(key, v)?,
            "neighbor_term_weight" => self.loss.neighbor_term_weight = parse_num(key, v)?,
            "grad_through_scores" => self.loss.grad_through_scores = parse_bool(key, v)?,
            "ema_t_base" => self.ema_t_base = parse_num(key, v)?,
            "eval_every" => self.eval_every = parse_num(key, v)?,
            "encoder_dims" => {
                self.arch.encoder_dims = v
                    .split(',')
                    .map(|d| parse_num(key, d.trim()))
                    .collect::<Result<_>>()?
            }
            "predictor_hidden" => self.arch.predictor_hidden = parse_num(key, v)?,
            "batch_norm" => self.arch.batch_norm = parse_bool(key, v)?,
            "bn_momentum" => self.arch.bn_momentum = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every assignment in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Defaults overridden by the file's assignments.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = TrainConfig::default();
        cfg.apply_text(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Renders every key in the file format; `apply_text` of the result
    /// reproduces `self`.
    pub fn to_text(&self) -> String {
        let dims: Vec<String> = self.arch.encoder_dims.iter().map(|d| d.to_string()).collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("epochs", self.epochs.to_string());
        kv("lr", self.lr.to_string());
        kv("warmup_epochs", self.warmup_epochs.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("seed", self.seed.to_string());
        kv("p_m1", self.augment.p_m1.to_string());
        kv("p_d1", self.augment.p_d1.to_string());
        kv("p_m2", self.augment.p_m2.to_string());
        kv("p_d2", self.augment.p_d2.to_string());
        kv("variant", self.loss.variant.to_string());
        kv("tau", self.loss.tau.to_string());
        kv("symmetric", self.loss.symmetric.to_string());
        kv("neighbor_term_weight", self.loss.neighbor_term_weight.to_string());
        kv("grad_through_scores", self.loss.grad_through_scores.to_string());
        kv("ema_t_base", self.ema_t_base.to_string());
        kv("eval_every", self.eval_every.to_string());
        kv("encoder_dims", dims.join(","));
        kv("predictor_hidden", self.arch.predictor_hidden.to_string());
        kv("batch_norm", self.arch.batch_norm.to_string());
        kv("bn_momentum", self.arch.bn_momentum.to_string());
        s
    }
}
