//! Rendering F0 contours from intonation codes.
//!
//! A sentence spec fixes the timing (phones and durations) and the phrase
//! segmentation; each phrase gets one code. Decoding, MLPG and
//! denormalization turn the codes into a contour of exactly the aligned
//! length. Nothing is sampled, so equal inputs give equal contours.
//!
//! Sentence spec files are sectioned text:
//!
//! ```text
//! [id]
//! s01
//! [text]
//! What's the matter now?
//! [phones]
//! 0 12 sil
//! 12 20 w
//! ...
//! [words]      (optional, `start end word`)
//! [phrases]    (optional, `start end`; otherwise parsed from the text)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codes::Codebook;
use crate::corpus::{derive_phrases, parse_segments, CorpusError, Segment, SILENCE_PHONES};
use crate::f0::{f0_rmse, features_to_hz, F0Contour, F0Error, NormStats};
use crate::mlpg::mlpg;
use crate::model::{ModelError, ProsodyModel};
use crate::phrase::Lexicon;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("{got} codes given for {expected} phrases")]
    PhraseCountMismatch { expected: usize, got: usize },
    #[error("unknown phone `{0}`")]
    UnknownPhone(String),
    #[error("unknown code {0}")]
    UnknownCode(usize),
    #[error("sentence spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    F0(#[from] F0Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Io(String),
}

impl From<ModelError> for SynthError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnknownPhone(p) => SynthError::UnknownPhone(p),
            other => SynthError::Model(other),
        }
    }
}

/// Timing and phrasing of one sentence to render.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceSpec {
    pub id: String,
    pub text: String,
    pub phones: Vec<Segment>,
    pub phrase_ranges: Vec<(usize, usize)>,
}

impl SentenceSpec {
    pub fn frames(&self) -> usize {
        self.phones.last().map_or(0, |s| s.end)
    }

    /// Parse a spec file; phrases come from the `[phrases]` section or, if
    /// absent, from parsing the text with `lexicon`.
    pub fn parse(text: &str, path: &Path, lexicon: &Lexicon) -> Result<Self, SynthError> {
        let mut sections: Vec<(String, String)> = Vec::new();
        for line in text.lines() {
            let trimmed = line.trim();
            if trimmed.starts_with('[') && trimmed.ends_with(']') {
                sections.push((trimmed[1..trimmed.len() - 1].to_string(), String::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push_str(line);
                body.push('\n');
            } else if !trimmed.is_empty() {
                return Err(SynthError::Spec(format!("text before the first section: `{trimmed}`")));
            }
        }
        let section = |name: &str| sections.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_str());
        let id = section("id").map(str::trim).filter(|s| !s.is_empty()).unwrap_or("sentence").to_string();
        let sentence_text = section("text").map(|t| t.trim().to_string()).unwrap_or_default();
        let phones = parse_segments(section("phones").unwrap_or(""), path)?;
        if phones.is_empty() {
            return Err(SynthError::Spec("no phones".into()));
        }
        let frames = phones.last().expect("non-empty").end;
        let phrase_ranges = match section("phrases") {
            Some(body) => {
                let mut ranges = Vec::new();
                for line in body.lines().filter(|l| !l.trim().is_empty()) {
                    let f: Vec<usize> = line
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<Result<_, _>>()
                        .map_err(|_| SynthError::Spec(format!("bad phrase line `{line}`")))?;
                    let [start, end] = f[..] else {
                        return Err(SynthError::Spec(format!("expected `start end`, got `{line}`")));
                    };
                    ranges.push((start, end));
                }
                crate::corpus::check_alignment(&id, &phones, frames)?;
                ranges
            }
            None => {
                let words = match section("words") {
                    Some(body) => Some(parse_segments(body, path)?.iter().map(|s| (s.start, s.end)).collect()),
                    None => None,
                };
                derive_phrases(&id, &sentence_text, &phones, words, frames, lexicon)?.2
            }
        };
        let spec = Self {
            id,
            text: sentence_text,
            phones,
            phrase_ranges,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path, lexicon: &Lexicon) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path).map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path, lexicon)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.phones.is_empty() || self.phrase_ranges.is_empty() {
            return Err(SynthError::Spec("empty sentence".into()));
        }
        crate::corpus::check_alignment(&self.id, &self.phones, self.frames())?;
        let mut expected = 0;
        for &(start, end) in &self.phrase_ranges {
            if start != expected || end <= start {
                return Err(SynthError::Spec(format!("phrase {start}..{end} does not continue at {expected}")));
            }
            expected = end;
        }
        if expected != self.frames() {
            return Err(SynthError::Spec(format!(
                "phrases cover {expected} frames, phones {}",
                self.frames()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SynthOptions {
    /// Mark frames inside silence phones as unvoiced.
    pub unvoice_silence: bool,
}

/// Contour for one code per phrase.
pub fn synthesize_f0(
    spec: &SentenceSpec,
    code_ids: &[usize],
    model: &ProsodyModel,
    codebook: &Codebook,
    stats: &NormStats,
    options: SynthOptions,
) -> Result<F0Contour, SynthError> {
    spec.validate()?;
    if code_ids.len() != spec.phrase_ranges.len() {
        return Err(SynthError::PhraseCountMismatch {
            expected: spec.phrase_ranges.len(),
            got: code_ids.len(),
        });
    }
    let codes = code_ids
        .iter()
        .map(|&id| codebook.get(id).map(|c| c.vector.clone()).ok_or(SynthError::UnknownCode(id)))
        .collect::<Result<Vec<_>, _>>()?;
    let segments: Vec<(&str, usize)> = spec.phones.iter().map(|s| (s.label.as_str(), s.len())).collect();
    let track = model.phone_track(&segments)?;
    let means = model.decode(&codes, &spec.phrase_ranges, &track)?;
    let statics = mlpg(means.view(), stats)?;
    let contour = features_to_hz(&statics, stats)?;
    if !options.unvoice_silence {
        return Ok(contour);
    }
    let mut voiced = vec![true; contour.len()];
    for s in spec.phones.iter().filter(|s| SILENCE_PHONES.contains(&s.label.as_str())) {
        voiced[s.start..s.end].fill(false);
    }
    Ok(contour.with_voicing(&voiced)?)
}

/// Files written by [`render_all_codes`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub contours: Vec<F0Contour>,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub plot_data: PathBuf,
}

/// One rendition per code (the same code on every phrase): an F0 file per
/// code, `manifest.tsv` (`sentence code path`) and `plot.tsv` (frame,
/// seconds, one Hz column per code). All contours are computed before any
/// file is written.
pub fn render_all_codes(
    spec: &SentenceSpec,
    model: &ProsodyModel,
    codebook: &Codebook,
    stats: &NormStats,
    options: SynthOptions,
    out_dir: &Path,
) -> Result<Rendered, SynthError> {
    spec.validate()?;
    if codebook.is_empty() {
        return Err(SynthError::Spec("empty codebook".into()));
    }
    let contours = codebook
        .codes
        .iter()
        .map(|c| synthesize_f0(spec, &vec![c.id; spec.phrase_ranges.len()], model, codebook, stats, options))
        .collect::<Result<Vec<_>, _>>()?;

    let io = |e: std::io::Error| SynthError::Io(format!("{}: {e}", out_dir.display()));
    fs::create_dir_all(out_dir).map_err(io)?;
    let mut manifest = String::from("sentence\tcode\tpath\n");
    let mut files = Vec::with_capacity(contours.len());
    for (code, contour) in codebook.codes.iter().zip(&contours) {
        let name = format!("{}_code{:02}.f0", spec.id, code.id);
        fs::write(out_dir.join(&name), contour.to_text()).map_err(io)?;
        let _ = writeln!(manifest, "{}\t{}\t{name}", spec.id, code.id);
        files.push(out_dir.join(name));
    }
    let mut plot = String::from("frame\tseconds");
    for code in &codebook.codes {
        let _ = write!(plot, "\tcode{:02}", code.id);
    }
    plot.push('\n');
    for t in 0..spec.frames() {
        let _ = write!(plot, "{t}\t{:.3}", t as f64 * crate::f0::FRAME_SHIFT);
        for c in &contours {
            let _ = write!(plot, "\t{}", c.values()[t]);
        }
        plot.push('\n');
    }
    let manifest_path = out_dir.join("manifest.tsv");
    let plot_path = out_dir.join("plot.tsv");
    fs::write(&manifest_path, manifest).map_err(io)?;
    fs::write(&plot_path, plot).map_err(io)?;
    Ok(Rendered {
        contours,
        files,
        manifest: manifest_path,
        plot_data: plot_path,
    })
}

/// Symmetric matrix of Hz RMSE between renditions over frames voiced in both.
pub fn pairwise_distinctness(renditions: &[F0Contour]) -> Result<Vec<Vec<f64>>, F0Error> {
    let n = renditions.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&renditions[i], &renditions[j]);
            if a.len() != b.len() {
                return Err(F0Error::LengthMismatch {
                    reference: a.len(),
                    generated: b.len(),
                });
            }
            let both: Vec<bool> = (0..a.len()).map(|t| a.is_voiced(t) && b.is_voiced(t)).collect();
            let d = f0_rmse(&a.with_voicing(&both)?, b)?;
            out[i][j] = d;
            out[j][i] = d;
        }
    }
    Ok(out)
}
