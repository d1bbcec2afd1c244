//! Phrase-level prosody models.
//!
//! Both models share one shape: a frame-clocked encoder reads normalized F0
//! features for a whole utterance and emits one latent per phrase at the
//! phrase's last frame; a decoder regenerates the three feature streams from
//! the phrase latent broadcast over its frames, concatenated with a one-hot
//! phone identity. The deterministic autoencoder emits points; the
//! variational model emits diagonal Gaussians and is regularized towards a
//! mixture of the posteriors of learned pseudo-input sequences.

mod checkpoint;
mod prior;
mod stack;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use prior::{kl_mc_estimate, reparameterize, LatentPosterior, PriorGrads, VampPrior};
pub use stack::{Stack, StackCache, StackShape};
pub use train::{ae_loss, batch_gradients, train, vae_loss, BatchLoss, EpochMetrics, TrainItem, VaeLoss};

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use thiserror::Error;

use crate::nn::{NnError, ParamId, ParamStore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("phrase range {start}..{end} is not ordered within 0..{len}")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },
    #[error("phone track has {got} frames but the phrases cover {expected}")]
    DurationMismatch { expected: usize, got: usize },
    #[error("unknown phone `{0}`")]
    UnknownPhone(String),
    #[error("expected a {expected} model, found {found}")]
    WrongModelKind { expected: ModelKind, found: ModelKind },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("no training data")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Deterministic autoencoder, quantized afterwards with k-means.
    Ae,
    /// Variational autoencoder with a mixture-of-posteriors prior.
    Vamp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ae => "ae",
            ModelKind::Vamp => "vamp",
        })
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ae" => Ok(ModelKind::Ae),
            "vamp" => Ok(ModelKind::Vamp),
            other => Err(ModelError::InvalidConfig(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Pseudo-input lengths 50, 100, ..., 500 frames, each used twice.
pub fn default_pseudo_lengths() -> Vec<usize> {
    (1..=10).flat_map(|i| [50 * i, 50 * i]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub latent_dim: usize,
    pub ff_units: usize,
    pub gru_units: usize,
    pub gru_layers: usize,
    /// One entry per pseudo-input; ignored by the autoencoder.
    pub pseudo_lengths: Vec<usize>,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            latent_dim: 16,
            ff_units: 256,
            gru_units: 64,
            gru_layers: 3,
            pseudo_lengths: default_pseudo_lengths(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.latent_dim == 0 || self.ff_units == 0 || self.gru_units == 0 {
            return Err(ModelError::InvalidConfig("layer sizes must be positive".into()));
        }
        if self.kind == ModelKind::Vamp
            && (self.pseudo_lengths.is_empty() || self.pseudo_lengths.contains(&0))
        {
            return Err(ModelError::InvalidConfig(
                "the mixture prior needs at least one pseudo-input of positive length".into(),
            ));
        }
        Ok(())
    }

    fn encoder_shape(&self) -> StackShape {
        let output = match self.kind {
            ModelKind::Ae => self.latent_dim,
            ModelKind::Vamp => 2 * self.latent_dim,
        };
        StackShape {
            input: 3,
            ff_units: self.ff_units,
            gru_units: self.gru_units,
            gru_layers: self.gru_layers,
            output,
        }
    }

    fn decoder_shape(&self, n_phones: usize) -> StackShape {
        StackShape {
            input: self.latent_dim + n_phones,
            ff_units: self.ff_units,
            gru_units: self.gru_units,
            gru_layers: self.gru_layers,
            output: 3,
        }
    }
}

/// Parameter handles of a model; the values live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub kind: ModelKind,
    pub latent_dim: usize,
    pub n_phones: usize,
    pub encoder: Stack,
    pub decoder: Stack,
    pub pseudo: Vec<ParamId>,
}

/// Per-frame phone indices into the model's phone inventory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneTrack {
    frames: Vec<usize>,
}

impl PhoneTrack {
    pub fn new(frames: Vec<usize>) -> Self {
        Self { frames }
    }

    /// Expand `(phone, duration in frames)` segments.
    pub fn from_durations(segments: &[(usize, usize)]) -> Self {
        let frames = segments
            .iter()
            .flat_map(|&(p, d)| std::iter::repeat_n(p, d))
            .collect();
        Self { frames }
    }

    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Encoder output for one phrase.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoded {
    Point(Vec<f64>),
    Gaussian(LatentPosterior),
}

impl Encoded {
    /// The point latent, or the posterior mean.
    pub fn mean(&self) -> &[f64] {
        match self {
            Encoded::Point(z) => z,
            Encoded::Gaussian(p) => &p.mu,
        }
    }
}

pub(crate) fn check_ranges(ranges: &[(usize, usize)], len: usize) -> Result<(), ModelError> {
    let mut prev_end = 0;
    for &(start, end) in ranges {
        if start >= end || end > len || start < prev_end {
            return Err(ModelError::RangeOutOfBounds { start, end, len });
        }
        prev_end = end;
    }
    Ok(())
}

/// Ranges must tile `0..len` exactly for decoding.
pub(crate) fn check_tiling(ranges: &[(usize, usize)], len: usize) -> Result<(), ModelError> {
    let covered = ranges.last().map_or(0, |r| r.1);
    check_ranges(ranges, covered)?;
    let mut prev_end = 0;
    for &(start, end) in ranges {
        if start != prev_end {
            return Err(ModelError::RangeOutOfBounds { start, end, len });
        }
        prev_end = end;
    }
    if covered != len {
        return Err(ModelError::DurationMismatch {
            expected: covered,
            got: len,
        });
    }
    Ok(())
}

impl Network {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: &ModelConfig, n_phones: usize, rng: &mut R) -> Self {
        let encoder = Stack::new(store, "enc", config.encoder_shape(), rng);
        let decoder = Stack::new(store, "dec", config.decoder_shape(n_phones), rng);
        let pseudo = match config.kind {
            ModelKind::Ae => Vec::new(),
            ModelKind::Vamp => config
                .pseudo_lengths
                .iter()
                .enumerate()
                .map(|(k, &len)| store.add(format!("pseudo.{k}"), &[len, 3], vec![0.0; 3 * len]))
                .collect(),
        };
        Self {
            kind: config.kind,
            latent_dim: config.latent_dim,
            n_phones,
            encoder,
            decoder,
            pseudo,
        }
    }

    pub fn bind(store: &ParamStore, config: &ModelConfig, n_phones: usize) -> Result<Self, ModelError> {
        let encoder = Stack::bind(store, "enc")?;
        let decoder = Stack::bind(store, "dec")?;
        let enc = config.encoder_shape();
        let dec = config.decoder_shape(n_phones);
        if encoder.input_width() != enc.input
            || encoder.output_width() != enc.output
            || decoder.input_width() != dec.input
            || decoder.output_width() != dec.output
        {
            return Err(ModelError::Checkpoint("tensor shapes disagree with the header".into()));
        }
        let mut pseudo = Vec::new();
        if config.kind == ModelKind::Vamp {
            for (k, &len) in config.pseudo_lengths.iter().enumerate() {
                let name = format!("pseudo.{k}");
                let id = store.find(&name).ok_or(NnError::MissingParam(name))?;
                if store.tensor(id).shape != [len, 3] {
                    return Err(ModelError::Checkpoint(format!("pseudo-input {k} has the wrong shape")));
                }
                pseudo.push(id);
            }
        }
        Ok(Self {
            kind: config.kind,
            latent_dim: config.latent_dim,
            n_phones,
            encoder,
            decoder,
            pseudo,
        })
    }

    /// Encoder pass over a whole utterance; returns the cache and the raw
    /// output row at the last frame of every range.
    pub fn encode_raw(
        &self,
        store: &ParamStore,
        features: ArrayView2<'_, f64>,
        ranges: &[(usize, usize)],
    ) -> Result<(StackCache, Vec<Vec<f64>>), ModelError> {
        check_ranges(ranges, features.nrows())?;
        let cache = self.encoder.forward(store, features)?;
        let rows = ranges
            .iter()
            .map(|&(_, end)| cache.output().row(end - 1).to_vec())
            .collect();
        Ok((cache, rows))
    }

    pub fn interpret(&self, raw: &[f64]) -> Encoded {
        match self.kind {
            ModelKind::Ae => Encoded::Point(raw.to_vec()),
            ModelKind::Vamp => {
                let d = self.latent_dim;
                Encoded::Gaussian(LatentPosterior::from_logvar(&raw[..d], &raw[d..2 * d]))
            }
        }
    }

    pub fn pseudo_input<'a>(&self, store: &'a ParamStore, k: usize) -> ArrayView2<'a, f64> {
        store.matrix(self.pseudo[k])
    }

    /// Prior components: the encoder posterior of each pseudo-input taken
    /// as a single phrase.
    pub fn prior(&self, store: &ParamStore) -> Result<VampPrior, ModelError> {
        if self.kind != ModelKind::Vamp {
            return Err(ModelError::WrongModelKind {
                expected: ModelKind::Vamp,
                found: self.kind,
            });
        }
        let mut components = Vec::with_capacity(self.pseudo.len());
        for k in 0..self.pseudo.len() {
            let u = self.pseudo_input(store, k);
            let (_, rows) = self.encode_raw(store, u, &[(0, u.nrows())])?;
            match self.interpret(&rows[0]) {
                Encoded::Gaussian(p) => components.push(p),
                Encoded::Point(_) => unreachable!("mixture prior on a point model"),
            }
        }
        Ok(VampPrior::new(components))
    }

    /// Decoder input: phrase code broadcast over the phrase, then the
    /// one-hot phone.
    pub fn decoder_input(
        &self,
        codes: &[Vec<f64>],
        ranges: &[(usize, usize)],
        phones: &PhoneTrack,
    ) -> Result<Array2<f64>, ModelError> {
        check_tiling(ranges, phones.len())?;
        if codes.len() != ranges.len() {
            return Err(ModelError::Nn(NnError::ShapeMismatch(format!(
                "{} codes for {} phrases",
                codes.len(),
                ranges.len()
            ))));
        }
        let d = self.latent_dim;
        let mut input = Array2::zeros((phones.len(), d + self.n_phones));
        for (code, &(start, end)) in codes.iter().zip(ranges) {
            if code.len() != d {
                return Err(ModelError::Nn(NnError::ShapeMismatch(format!(
                    "code has {} values, latent size is {d}",
                    code.len()
                ))));
            }
            let code = ndarray::ArrayView1::from(&code[..]);
            for t in start..end {
                input.slice_mut(s![t, ..d]).assign(&code);
            }
        }
        for (t, &p) in phones.frames().iter().enumerate() {
            if p >= self.n_phones {
                return Err(ModelError::UnknownPhone(format!("#{p}")));
            }
            input[[t, d + p]] = 1.0;
        }
        Ok(input)
    }

    pub fn decode(
        &self,
        store: &ParamStore,
        codes: &[Vec<f64>],
        ranges: &[(usize, usize)],
        phones: &PhoneTrack,
    ) -> Result<Array2<f64>, ModelError> {
        let input = self.decoder_input(codes, ranges, phones)?;
        Ok(self.decoder.forward(store, input.view())?.output().clone())
    }
}

/// A model: its configuration, phone inventory, parameters and layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyModel {
    pub config: ModelConfig,
    pub phones: Vec<String>,
    pub store: ParamStore,
    pub net: Network,
}

impl ProsodyModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, phones: Vec<String>, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        if phones.is_empty() {
            return Err(ModelError::InvalidConfig("empty phone inventory".into()));
        }
        let mut store = ParamStore::new();
        let net = Network::new(&mut store, &config, phones.len(), rng);
        Ok(Self {
            config,
            phones,
            store,
            net,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn phone_index(&self, phone: &str) -> Result<usize, ModelError> {
        self.phones
            .iter()
            .position(|p| p == phone)
            .ok_or_else(|| ModelError::UnknownPhone(phone.to_string()))
    }

    /// Phone track from `(symbol, duration)` segments.
    pub fn phone_track(&self, segments: &[(&str, usize)]) -> Result<PhoneTrack, ModelError> {
        let indexed = segments
            .iter()
            .map(|&(p, d)| Ok((self.phone_index(p)?, d)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(PhoneTrack::from_durations(&indexed))
    }

    /// One latent per phrase, read at each phrase's last frame of a single
    /// pass over the utterance.
    pub fn encode_phrases(
        &self,
        features: ArrayView2<'_, f64>,
        ranges: &[(usize, usize)],
    ) -> Result<Vec<Encoded>, ModelError> {
        let (_, rows) = self.net.encode_raw(&self.store, features, ranges)?;
        Ok(rows.iter().map(|r| self.net.interpret(r)).collect())
    }

    pub fn prior(&self) -> Result<VampPrior, ModelError> {
        self.net.prior(&self.store)
    }

    /// T x 3 feature means for one code per phrase.
    pub fn decode(
        &self,
        codes: &[Vec<f64>],
        ranges: &[(usize, usize)],
        phones: &PhoneTrack,
    ) -> Result<Array2<f64>, ModelError> {
        self.net.decode(&self.store, codes, ranges, phones)
    }

    /// Fill pseudo-inputs with random contiguous windows of training
    /// features, repeating a window from its start when the utterance is
    /// shorter than the pseudo-input.
    pub fn init_pseudo_inputs<R: Rng + ?Sized>(
        &mut self,
        features: &[ArrayView2<'_, f64>],
        rng: &mut R,
    ) -> Result<(), ModelError> {
        if features.is_empty() || features.iter().any(|f| f.nrows() == 0) {
            return Err(ModelError::EmptyCorpus);
        }
        for &id in &self.net.pseudo {
            let len = self.store.tensor(id).shape[0];
            let src = &features[rng.random_range(0..features.len())];
            let t = src.nrows();
            let start = if t > len { rng.random_range(0..=t - len) } else { 0 };
            let span = t - start;
            let values = &mut self.store.tensor_mut(id).values;
            for j in 0..len {
                let row = src.row(start + j % span);
                values[3 * j..3 * j + 3].copy_from_slice(&[row[0], row[1], row[2]]);
            }
        }
        Ok(())
    }
}
