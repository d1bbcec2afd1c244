//! Run configuration as `key = value` lines.
//!
//! `#` starts a comment. Every key is optional and falls back to its
//! default; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::model::{default_pseudo_lengths, ModelConfig, ModelKind};
use crate::nn::TrainSchedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("line {line}: expected `key = value`")]
    Format { line: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    pub decay_exponent: f64,
    pub kl_zero_epochs: usize,
    pub kl_ramp_epochs: usize,
    pub kl_max: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    pub ff_units: usize,
    pub gru_units: usize,
    pub gru_layers: usize,
    /// Number of k-means clusters.
    pub codes: usize,
    pub pseudo_lengths: Vec<usize>,
    pub seed: u64,
    /// Save a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub lexicon: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        let s = TrainSchedule::default();
        let m = ModelConfig::new(ModelKind::Ae);
        Self {
            peak_lr: s.peak_lr,
            warmup_epochs: s.warmup_epochs,
            decay_exponent: s.decay_exponent,
            kl_zero_epochs: s.kl_zero_epochs,
            kl_ramp_epochs: s.kl_ramp_epochs,
            kl_max: s.kl_max,
            epochs: s.total_epochs,
            batch_size: s.batch_size,
            latent_dim: m.latent_dim,
            ff_units: m.ff_units,
            gru_units: m.gru_units,
            gru_layers: m.gru_layers,
            codes: 20,
            pseudo_lengths: default_pseudo_lengths(),
            seed: 1,
            checkpoint_every: 0,
            lexicon: None,
        }
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        line,
        key: key.to_string(),
        message: e.to_string(),
    })
}

impl Config {
    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            peak_lr: self.peak_lr,
            warmup_epochs: self.warmup_epochs,
            batches_per_epoch: 1,
            decay_exponent: self.decay_exponent,
            kl_zero_epochs: self.kl_zero_epochs,
            kl_ramp_epochs: self.kl_ramp_epochs,
            kl_max: self.kl_max,
            total_epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }

    pub fn model(&self, kind: ModelKind) -> ModelConfig {
        ModelConfig {
            kind,
            latent_dim: self.latent_dim,
            ff_units: self.ff_units,
            gru_units: self.gru_units,
            gru_layers: self.gru_layers,
            pseudo_lengths: self.pseudo_lengths.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.schedule().validate().map_err(ConfigError::Invalid)?;
        self.model(ModelKind::Vamp)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.codes == 0 {
            return Err(ConfigError::Invalid("codes must be positive".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Format { line })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "peak_lr" => c.peak_lr = parse_value(line, key, value)?,
                "warmup_epochs" => c.warmup_epochs = parse_value(line, key, value)?,
                "decay_exponent" => c.decay_exponent = parse_value(line, key, value)?,
                "kl_zero_epochs" => c.kl_zero_epochs = parse_value(line, key, value)?,
                "kl_ramp_epochs" => c.kl_ramp_epochs = parse_value(line, key, value)?,
                "kl_max" => c.kl_max = parse_value(line, key, value)?,
                "epochs" => c.epochs = parse_value(line, key, value)?,
                "batch_size" => c.batch_size = parse_value(line, key, value)?,
                "latent_dim" => c.latent_dim = parse_value(line, key, value)?,
                "ff_units" => c.ff_units = parse_value(line, key, value)?,
                "gru_units" => c.gru_units = parse_value(line, key, value)?,
                "gru_layers" => c.gru_layers = parse_value(line, key, value)?,
                "codes" => c.codes = parse_value(line, key, value)?,
                "pseudo_lengths" => {
                    c.pseudo_lengths = value
                        .split(',')
                        .map(|v| parse_value(line, key, v.trim()))
                        .collect::<Result<_, _>>()?
                }
                "seed" => c.seed = parse_value(line, key, value)?,
                "checkpoint_every" => c.checkpoint_every = parse_value(line, key, value)?,
                "lexicon" => c.lexicon = Some(value.to_string()).filter(|v| !v.is_empty()),
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let lengths: Vec<String> = self.pseudo_lengths.iter().map(usize::to_string).collect();
        let mut out = String::new();
        let _ = writeln!(out, "peak_lr = {}", self.peak_lr);
        let _ = writeln!(out, "warmup_epochs = {}", self.warmup_epochs);
        let _ = writeln!(out, "decay_exponent = {}", self.decay_exponent);
        let _ = writeln!(out, "kl_zero_epochs = {}", self.kl_zero_epochs);
        let _ = writeln!(out, "kl_ramp_epochs = {}", self.kl_ramp_epochs);
        let _ = writeln!(out, "kl_max = {}", self.kl_max);
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "latent_dim = {}", self.latent_dim);
        let _ = writeln!(out, "ff_units = {}", self.ff_units);
        let _ = writeln!(out, "gru_units = {}", self.gru_units);
        let _ = writeln!(out, "gru_layers = {}", self.gru_layers);
        let _ = writeln!(out, "codes = {}", self.codes);
        let _ = writeln!(out, "pseudo_lengths = {}", lengths.join(","));
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "checkpoint_every = {}", self.checkpoint_every);
        if let Some(lex) = &self.lexicon {
            let _ = writeln!(out, "lexicon = {lex}");
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
