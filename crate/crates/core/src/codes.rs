//! Discrete intonation codes: k-means centroids over autoencoder phrase
//! embeddings, or the mixture-prior modes of a variational model.

use std::fmt::{self, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{ModelError, ModelKind, ProsodyModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodesError {
    #[error("k-means needs at least {k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("expected a {expected} model, found {found}")]
    WrongModelKind { expected: ModelKind, found: ModelKind },
    #[error("codebook line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub const MAX_ITERATIONS: usize = 300;
pub const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeSource {
    KMeansCentroid,
    /// Posterior mean of a pseudo-input of this many frames.
    VampMode { length: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntonationCode {
    pub id: usize,
    pub vector: Vec<f64>,
    pub source: CodeSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub latent_dim: usize,
    pub codes: Vec<IntonationCode>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&IntonationCode> {
        self.codes.get(id)
    }

    /// Nearest code by Euclidean distance, lowest id on ties.
    pub fn assign(&self, embedding: &[f64]) -> Result<usize, CodesError> {
        if embedding.len() != self.latent_dim {
            return Err(CodesError::DimMismatch {
                expected: self.latent_dim,
                got: embedding.len(),
            });
        }
        let vectors: Vec<Vec<f64>> = self.codes.iter().map(|c| c.vector.clone()).collect();
        Ok(nearest(embedding, &vectors).0)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("latent_dim {}\ncount {}\n", self.latent_dim, self.codes.len());
        for c in &self.codes {
            let (source, meta) = match c.source {
                CodeSource::KMeansCentroid => ("kmeans", "-".to_string()),
                CodeSource::VampMode { length } => ("vamp", length.to_string()),
            };
            let _ = write!(out, "code {} {source} {meta}", c.id);
            for v in &c.vector {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CodesError> {
        let err = |line: usize, message: &str| CodesError::Format {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut header = |key: &str| -> Result<usize, CodesError> {
            let (i, line) = lines.next().ok_or_else(|| err(0, "truncated header"))?;
            line.strip_prefix(key)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| err(i + 1, &format!("expected `{key} <n>`")))
        };
        let latent_dim = header("latent_dim")?;
        let count = header("count")?;
        let mut codes = Vec::with_capacity(count);
        for (i, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 + latent_dim || f[0] != "code" {
                return Err(err(i + 1, &format!("expected `code id source meta` and {latent_dim} values")));
            }
            let id: usize = f[1].parse().map_err(|_| err(i + 1, "bad id"))?;
            if id != codes.len() {
                return Err(err(i + 1, "code ids must be dense and in order"));
            }
            let source = match (f[2], f[3]) {
                ("kmeans", "-") => CodeSource::KMeansCentroid,
                ("vamp", len) => CodeSource::VampMode {
                    length: len.parse().map_err(|_| err(i + 1, "bad pseudo-input length"))?,
                },
                _ => return Err(err(i + 1, "unknown code source")),
            };
            let vector = f[4..]
                .iter()
                .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| err(i + 1, "bad value"))?;
            codes.push(IntonationCode { id, vector, source });
        }
        if codes.len() != count {
            return Err(err(0, &format!("header says {count} codes, found {}", codes.len())));
        }
        Ok(Self { latent_dim, codes })
    }

    pub fn save(&self, path: &Path) -> Result<(), CodesError> {
        std::fs::write(path, self.to_text()).map_err(|e| CodesError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CodesError> {
        let text = std::fs::read_to_string(path).map_err(|e| CodesError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

impl fmt::Display for CodeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeSource::KMeansCentroid => f.write_str("kmeans"),
            CodeSource::VampMode { length } => write!(f, "vamp({length})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Final cluster of every input point.
    pub assignments: Vec<usize>,
    /// Sum of squared distances after each Lloyd iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("at least one iteration")
    }
}

/// k-means++ seeding followed by Lloyd iterations until no centroid moves
/// more than [`SHIFT_TOLERANCE`] or [`MAX_ITERATIONS`] is reached. An
/// emptied cluster is reseeded at the point farthest from its centroid.
pub fn kmeans_fit(embeddings: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansFit, CodesError> {
    let n = embeddings.len();
    if k == 0 || n < k {
        return Err(CodesError::TooFewPoints { n, k: k.max(1) });
    }
    let dim = embeddings[0].len();
    if let Some(bad) = embeddings.iter().find(|e| e.len() != dim) {
        return Err(CodesError::DimMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![embeddings[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = embeddings.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(embeddings[pick].clone());
        for (x, d) in embeddings.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(x, &centroids[centroids.len() - 1]));
        }
    }

    let mut assignments = vec![0; n];
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for (a, x) in assignments.iter_mut().zip(embeddings) {
            *a = nearest(x, &centroids).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (a, x) in assignments.iter().zip(embeddings) {
            counts[*a] += 1;
            for (s, v) in sums[*a].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        let mut next = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                next[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&i, &j| {
                        let di = sq_dist(&embeddings[i], &next[assignments[i]]);
                        let dj = sq_dist(&embeddings[j], &next[assignments[j]]);
                        di.total_cmp(&dj).then(j.cmp(&i))
                    })
                    .expect("n >= 1");
                next[c] = embeddings[far].clone();
                counts[c] = 1;
                counts[assignments[far]] -= 1;
                assignments[far] = c;
            }
        }
        for (a, b) in centroids.iter().zip(&next) {
            shift = shift.max(sq_dist(a, b).sqrt());
        }
        centroids = next;
        let objective: f64 = assignments
            .iter()
            .zip(embeddings)
            .map(|(a, x)| sq_dist(x, &centroids[*a]))
            .sum();
        if let Some(prev) = history.last() {
            debug_assert!(objective <= prev + 1e-9 * prev.abs().max(1.0), "objective rose");
        }
        history.push(objective);
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }
    for (a, x) in assignments.iter_mut().zip(embeddings) {
        *a = nearest(x, &centroids).0;
    }
    let codes = centroids
        .into_iter()
        .enumerate()
        .map(|(id, vector)| IntonationCode {
            id,
            vector,
            source: CodeSource::KMeansCentroid,
        })
        .collect();
    Ok(KMeansFit {
        codebook: Codebook {
            latent_dim: dim,
            codes,
        },
        assignments,
        objective_history: history,
        iterations,
    })
}

/// Posterior means of the pseudo-inputs of a mixture-prior model, one code
/// per pseudo-input.
pub fn extract_vamp_codes(model: &ProsodyModel) -> Result<Codebook, CodesError> {
    if model.kind() != ModelKind::Vamp {
        return Err(CodesError::WrongModelKind {
            expected: ModelKind::Vamp,
            found: model.kind(),
        });
    }
    let prior = model.prior()?;
    let codes = prior
        .components
        .into_iter()
        .zip(&model.config.pseudo_lengths)
        .enumerate()
        .map(|(id, (post, &length))| IntonationCode {
            id,
            vector: post.mu,
            source: CodeSource::VampMode { length },
        })
        .collect();
    Ok(Codebook {
        latent_dim: model.config.latent_dim,
        codes,
    })
}

/// Fraction of points whose cluster's majority label equals their own.
pub fn cluster_purity(assignments: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(assignments.len(), labels.len(), "one label per point");
    if assignments.is_empty() {
        return 0.0;
    }
    let mut counts: std::collections::BTreeMap<(usize, usize), usize> = Default::default();
    for (a, l) in assignments.iter().zip(labels) {
        *counts.entry((*a, *l)).or_default() += 1;
    }
    let mut best: std::collections::BTreeMap<usize, usize> = Default::default();
    for ((a, _), c) in counts {
        let slot = best.entry(a).or_default();
        *slot = (*slot).max(c);
    }
    best.values().sum::<usize>() as f64 / assignments.len() as f64
}
