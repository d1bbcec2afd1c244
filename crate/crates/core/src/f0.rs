//! F0 contours and the normalized logF0 / delta / delta-delta features the
//! models consume.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

/// Seconds between frames.
pub const FRAME_SHIFT: f64 = 0.005;

/// Floor applied to every standard deviation in [`NormStats`].
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum F0Error {
    #[error("contour has no voiced frames")]
    AllUnvoiced,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("length mismatch: {reference} reference frames vs {generated} generated")]
    LengthMismatch { reference: usize, generated: usize },
    #[error("reference contour has no voiced frames")]
    NoVoicedFrames,
    #[error("invalid contour: {0}")]
    InvalidContour(String),
    #[error("normal equations are not positive definite (pivot {0})")]
    SingularSystem(usize),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Per-frame F0 in Hz; `0.0` marks an unvoiced frame.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Contour {
    f0_hz: Vec<f64>,
}

impl F0Contour {
    pub fn new(f0_hz: Vec<f64>) -> Result<Self, F0Error> {
        if f0_hz.is_empty() {
            return Err(F0Error::InvalidContour("contour must have at least one frame".into()));
        }
        if let Some((i, v)) = f0_hz.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(F0Error::InvalidContour(format!("frame {i} has value {v}")));
        }
        Ok(Self { f0_hz })
    }

    pub fn values(&self) -> &[f64] {
        &self.f0_hz
    }

    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    pub fn is_voiced(&self, frame: usize) -> bool {
        self.f0_hz[frame] > 0.0
    }

    pub fn voiced_count(&self) -> usize {
        self.f0_hz.iter().filter(|v| **v > 0.0).count()
    }

    pub fn duration_secs(&self) -> f64 {
        self.f0_hz.len() as f64 * FRAME_SHIFT
    }

    /// Parse the one-value-per-line text format.
    pub fn parse(text: &str) -> Result<Self, F0Error> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| F0Error::Format {
                line: i + 1,
                message: format!("`{line}` is not a number"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(F0Error::Format {
                    line: i + 1,
                    message: format!("F0 must be finite and >= 0, got {v}"),
                });
            }
            values.push(v);
        }
        Self::new(values)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.f0_hz.len() * 10);
        for v in &self.f0_hz {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    /// Zero out frames where `voiced` is false.
    pub fn with_voicing(&self, voiced: &[bool]) -> Result<Self, F0Error> {
        if voiced.len() != self.len() {
            return Err(F0Error::LengthMismatch {
                reference: voiced.len(),
                generated: self.len(),
            });
        }
        Self::new(
            self.f0_hz
                .iter()
                .zip(voiced)
                .map(|(v, on)| if *on { *v } else { 0.0 })
                .collect(),
        )
    }
}

/// Corpus-level normalization statistics (log-Hz) and the global standard
/// deviations of the three normalized feature streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
    /// Static, delta, delta-delta.
    pub global_std: [f64; 3],
}

impl NormStats {
    pub fn to_text(&self) -> String {
        format!(
            "mean {}\nstd {}\nglobal_std_static {}\nglobal_std_delta {}\nglobal_std_deltadelta {}\n",
            self.mean, self.std, self.global_std[0], self.global_std[1], self.global_std[2]
        )
    }

    pub fn parse(text: &str) -> Result<Self, F0Error> {
        let mut fields = [None; 5];
        const KEYS: [&str; 5] = [
            "mean",
            "std",
            "global_std_static",
            "global_std_delta",
            "global_std_deltadelta",
        ];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let format_err = |message: String| F0Error::Format { line: i + 1, message };
            let (key, value) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| format_err("expected `key value`".into()))?;
            let slot = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| format_err(format!("unknown key `{key}`")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| format_err(format!("bad number `{}`", value.trim())))?;
            fields[slot] = Some(v);
        }
        let get = |i: usize| {
            fields[i].ok_or_else(|| F0Error::Format {
                line: 0,
                message: format!("missing `{}`", KEYS[i]),
            })
        };
        let stats = NormStats {
            mean: get(0)?,
            std: get(1)?,
            global_std: [get(2)?, get(3)?, get(4)?],
        };
        if stats.std <= 0.0 || stats.global_std.iter().any(|s| *s <= 0.0) {
            return Err(F0Error::Format {
                line: 0,
                message: "standard deviations must be positive".into(),
            });
        }
        Ok(stats)
    }
}

/// T x 3 frames of (static, delta, delta-delta) normalized logF0.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Array2<f64>,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f64>) -> Result<Self, F0Error> {
        if frames.nrows() == 0 || frames.ncols() != 3 {
            return Err(F0Error::InvalidContour(format!(
                "features must be T x 3 with T >= 1, got {:?}",
                frames.shape()
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(F0Error::InvalidContour("non-finite feature value".into()));
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.frames.view()
    }

    pub fn statics(&self) -> Vec<f64> {
        self.frames.column(0).to_vec()
    }
}

/// Fill unvoiced frames by linear interpolation between voiced neighbours;
/// leading and trailing unvoiced runs take the nearest voiced value.
pub fn interpolate_unvoiced(contour: &F0Contour) -> Result<F0Contour, F0Error> {
    let f = contour.values();
    let voiced: Vec<usize> = (0..f.len()).filter(|&i| f[i] > 0.0).collect();
    let (&first, &last) = match (voiced.first(), voiced.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(F0Error::AllUnvoiced),
    };
    let mut out = f.to_vec();
    out[..first].fill(f[first]);
    out[last + 1..].fill(f[last]);
    for pair in voiced.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let span = (b - a) as f64;
        for (i, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let w = (i - a) as f64 / span;
            *slot = f[a] * (1.0 - w) + f[b] * w;
        }
    }
    F0Contour::new(out)
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Mean/std of log F0 over every (interpolated) frame of the corpus, and the
/// global stds of the three normalized feature streams. Stds are floored at
/// [`STD_FLOOR`].
pub fn compute_norm_stats(contours: &[F0Contour]) -> Result<NormStats, F0Error> {
    if contours.is_empty() {
        return Err(F0Error::EmptyCorpus);
    }
    let logs: Vec<Vec<f64>> = contours
        .iter()
        .map(|c| Ok(interpolate_unvoiced(c)?.values().iter().map(|v| v.ln()).collect()))
        .collect::<Result<_, F0Error>>()?;
    let (mean, std) = population_std(logs.iter().flatten().copied());
    let std = std.max(STD_FLOOR);
    let features: Vec<FeatureSequence> = logs
        .iter()
        .map(|l| compute_deltas(&l.iter().map(|v| (v - mean) / std).collect::<Vec<_>>()))
        .collect();
    let mut global_std = [0.0; 3];
    for (s, slot) in global_std.iter_mut().enumerate() {
        let column = features.iter().flat_map(|f| f.frames.column(s).to_vec());
        *slot = population_std(column).1.max(STD_FLOOR);
    }
    Ok(NormStats {
        mean,
        std,
        global_std,
    })
}

/// Static, delta and delta-delta streams with edge replication
/// (`x[-1] = x[0]`, `x[T] = x[T-1]`):
/// `d[t] = (x[t+1] - x[t-1]) / 2`, `dd[t] = x[t+1] - 2 x[t] + x[t-1]`.
pub fn compute_deltas(statics: &[f64]) -> FeatureSequence {
    let t_len = statics.len();
    let mut frames = Array2::zeros((t_len, 3));
    for t in 0..t_len {
        let prev = statics[t.saturating_sub(1)];
        let next = statics[(t + 1).min(t_len - 1)];
        let x = statics[t];
        frames[[t, 0]] = x;
        frames[[t, 1]] = 0.5 * (next - prev);
        frames[[t, 2]] = next - 2.0 * x + prev;
    }
    FeatureSequence { frames }
}

/// Normalized log-F0 of the interpolated contour.
pub fn normalize(contour: &F0Contour, stats: &NormStats) -> Result<Vec<f64>, F0Error> {
    Ok(interpolate_unvoiced(contour)?
        .values()
        .iter()
        .map(|v| (v.ln() - stats.mean) / stats.std)
        .collect())
}

pub fn extract_features(contour: &F0Contour, stats: &NormStats) -> Result<FeatureSequence, F0Error> {
    Ok(compute_deltas(&normalize(contour, stats)?))
}

/// Inverse of [`normalize`]: `exp(x * std + mean)`.
pub fn features_to_hz(statics: &[f64], stats: &NormStats) -> Result<F0Contour, F0Error> {
    F0Contour::new(statics.iter().map(|x| (x * stats.std + stats.mean).exp()).collect())
}

/// RMSE in Hz over frames voiced in `reference`.
pub fn f0_rmse(reference: &F0Contour, generated: &F0Contour) -> Result<f64, F0Error> {
    if reference.len() != generated.len() {
        return Err(F0Error::LengthMismatch {
            reference: reference.len(),
            generated: generated.len(),
        });
    }
    let (n, sse) = reference
        .values()
        .iter()
        .zip(generated.values())
        .filter(|(r, _)| **r > 0.0)
        .fold((0usize, 0.0), |(n, s), (r, g)| (n + 1, s + (r - g) * (r - g)));
    if n == 0 {
        return Err(F0Error::NoVoicedFrames);
    }
    Ok((sse / n as f64).sqrt())
}
