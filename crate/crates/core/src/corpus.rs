//! Corpus ingestion and the synthetic stand-in corpus.
//!
//! A manifest has one utterance per line, tab-separated:
//!
//! ```text
//! id    f0_path    align_path    text_path    [words_path]
//! ```
//!
//! Paths are relative to the manifest's directory. F0 files hold one Hz
//! value per 5 ms frame (`0` = unvoiced). Alignment files hold
//! `start end phone` lines in frames, end exclusive, tiling `0..T`. The
//! optional words file holds `start end word` lines, one per whitespace word
//! of the text; gaps between words (pauses) are given to the preceding word.
//! Without it, words are spread over phones in proportion to their letter
//! counts, which is only approximate.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::f0::{F0Contour, F0Error};
use crate::phrase::{parse_phrases, phrase_frame_ranges, tokenize_line, Lexicon, PhraseError, Sentence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("file not found: {0}")]
    FileMissing(PathBuf),
    #[error("{}:{line}: {message}", path.display())]
    FormatError { path: PathBuf, line: usize, message: String },
    #[error("utterance {id}: {message}")]
    AlignmentGap { id: String, message: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("{0}")]
    Io(String),
    #[error("utterance {id}: {source}")]
    Phrase { id: String, source: PhraseError },
    #[error("utterance {id}: {source}")]
    F0 { id: String, source: F0Error },
}

/// Phones treated as pauses when spreading words over phones.
pub const SILENCE_PHONES: &[&str] = &["sil", "sp", "pau"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub sentence: Sentence,
    pub f0: F0Contour,
    pub phones: Vec<Segment>,
    /// One span per token of `sentence`.
    pub token_spans: Vec<(usize, usize)>,
    /// `[start, end)` per phrase, tiling `0..T`.
    pub phrase_ranges: Vec<(usize, usize)>,
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn phone_durations(&self) -> Vec<(&str, usize)> {
        self.phones.iter().map(|s| (s.label.as_str(), s.len())).collect()
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::FileMissing(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))
}

/// Parse `start end label` lines.
pub fn parse_segments(text: &str, path: &Path) -> Result<Vec<Segment>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| CorpusError::FormatError {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [start, end, label] = fields[..] else {
            return Err(err(format!("expected `start end label`, got `{line}`")));
        };
        let start: usize = start.parse().map_err(|_| err(format!("bad start `{start}`")))?;
        let end: usize = end.parse().map_err(|_| err(format!("bad end `{end}`")))?;
        if end <= start {
            return Err(err(format!("empty segment {start}..{end}")));
        }
        out.push(Segment {
            label: label.to_string(),
            start,
            end,
        });
    }
    Ok(out)
}

pub fn segments_to_text(segments: &[Segment]) -> String {
    let mut out = String::new();
    for s in segments {
        let _ = writeln!(out, "{} {} {}", s.start, s.end, s.label);
    }
    out
}

/// Phone segments must tile `0..frames` exactly.
pub fn check_alignment(id: &str, phones: &[Segment], frames: usize) -> Result<(), CorpusError> {
    let gap = |message: String| CorpusError::AlignmentGap {
        id: id.to_string(),
        message,
    };
    let mut expected = 0;
    for s in phones {
        if s.start != expected {
            return Err(gap(format!("segment `{}` starts at {} instead of {expected}", s.label, s.start)));
        }
        expected = s.end;
    }
    if expected != frames {
        return Err(gap(format!("alignment covers {expected} frames, F0 has {frames}")));
    }
    Ok(())
}

/// Split `n` items into `parts` non-empty runs, proportionally to `weights`.
/// Returns the cumulative boundaries (length `parts + 1`).
fn proportional_bounds(n: usize, weights: &[usize]) -> Vec<usize> {
    let parts = weights.len();
    debug_assert!(n >= parts);
    let total: usize = weights.iter().map(|w| (*w).max(1)).sum();
    let mut bounds = vec![0];
    let mut acc = 0usize;
    for (i, w) in weights.iter().enumerate() {
        acc += (*w).max(1);
        let ideal = ((n * acc) as f64 / total as f64).round() as usize;
        let lo = bounds[i] + 1;
        let hi = n - (parts - i - 1);
        bounds.push(ideal.clamp(lo, hi));
    }
    bounds
}

/// Frame spans of whitespace words from phone segments, by letter counts.
/// Leading and trailing pauses join the edge words.
pub fn heuristic_word_spans(words: &[&str], phones: &[Segment]) -> Option<Vec<(usize, usize)>> {
    if words.is_empty() || phones.is_empty() {
        return None;
    }
    let is_sil = |s: &Segment| SILENCE_PHONES.contains(&s.label.as_str());
    let first = phones.iter().position(|s| !is_sil(s)).unwrap_or(0);
    let last = phones.iter().rposition(|s| !is_sil(s)).unwrap_or(phones.len() - 1);
    let inner = &phones[first..=last];
    let letters: Vec<usize> = words.iter().map(|w| w.chars().filter(|c| c.is_alphanumeric()).count()).collect();
    let mut spans: Vec<(usize, usize)> = if inner.len() >= words.len() {
        let b = proportional_bounds(inner.len(), &letters);
        (0..words.len()).map(|i| (inner[b[i]].start, inner[b[i + 1] - 1].end)).collect()
    } else {
        let (start, end) = (inner[0].start, inner[inner.len() - 1].end);
        if end - start < words.len() {
            return None;
        }
        let b = proportional_bounds(end - start, &letters);
        (0..words.len()).map(|i| (start + b[i], start + b[i + 1])).collect()
    };
    spans[0].0 = 0;
    let n = spans.len();
    spans[n - 1].1 = phones[phones.len() - 1].end;
    Some(spans)
}

/// Close gaps between word spans (giving them to the earlier word) and
/// stretch the ends to `0..frames`.
fn close_gaps(spans: &mut [(usize, usize)], frames: usize) {
    if spans.is_empty() {
        return;
    }
    spans[0].0 = 0;
    for i in 1..spans.len() {
        if spans[i].0 > spans[i - 1].1 {
            spans[i - 1].1 = spans[i].0;
        }
    }
    let n = spans.len();
    spans[n - 1].1 = spans[n - 1].1.max(frames);
}

/// Per-token spans: each whitespace word's span split across its tokens by
/// character count.
fn token_spans(
    id: &str,
    words: &[&str],
    word_spans: &[(usize, usize)],
    lexicon: &Lexicon,
) -> Result<Vec<(usize, usize)>, CorpusError> {
    let mut out = Vec::new();
    for (word, &(start, end)) in words.iter().zip(word_spans) {
        let sentence = tokenize_line(word, lexicon).map_err(|source| CorpusError::Phrase {
            id: id.to_string(),
            source,
        })?;
        let lens: Vec<usize> = sentence.tokens.iter().map(|t| t.text.chars().count()).collect();
        if lens.is_empty() {
            continue;
        }
        if end - start < lens.len() {
            return Err(CorpusError::AlignmentGap {
                id: id.to_string(),
                message: format!("word `{word}` spans fewer frames than tokens"),
            });
        }
        let b = proportional_bounds(end - start, &lens);
        out.extend((0..lens.len()).map(|i| (start + b[i], start + b[i + 1])));
    }
    Ok(out)
}

/// Words of a text line that yield at least one token.
fn spoken_words<'a>(text: &'a str, lexicon: &Lexicon) -> Vec<&'a str> {
    text.split_whitespace()
        .filter(|w| tokenize_line(w, lexicon).is_ok_and(|s| !s.tokens.is_empty()))
        .collect()
}

/// Tokens, per-token spans and phrase ranges for a text over `frames`
/// frames of phone alignment.
pub fn derive_phrases(
    id: &str,
    text: &str,
    phones: &[Segment],
    word_spans: Option<Vec<(usize, usize)>>,
    frames: usize,
    lexicon: &Lexicon,
) -> Result<(Sentence, Vec<(usize, usize)>, Vec<(usize, usize)>), CorpusError> {
    check_alignment(id, phones, frames)?;
    let sentence = tokenize_line(text, lexicon).map_err(|source| CorpusError::Phrase {
        id: id.to_string(),
        source,
    })?;
    if sentence.tokens.is_empty() {
        return Err(CorpusError::AlignmentGap {
            id: id.to_string(),
            message: "text has no words".into(),
        });
    }
    let words = spoken_words(text, lexicon);
    let mut spans = match word_spans {
        Some(s) => {
            if s.len() != words.len() {
                return Err(CorpusError::AlignmentGap {
                    id: id.to_string(),
                    message: format!("{} word spans for {} words", s.len(), words.len()),
                });
            }
            s
        }
        None => heuristic_word_spans(&words, phones).ok_or_else(|| CorpusError::AlignmentGap {
            id: id.to_string(),
            message: "too few frames for the words".into(),
        })?,
    };
    close_gaps(&mut spans, frames);
    if spans.windows(2).any(|w| w[1].0 < w[0].1) || spans.iter().any(|s| s.1 <= s.0 || s.1 > frames) {
        return Err(CorpusError::AlignmentGap {
            id: id.to_string(),
            message: "word spans overlap or leave the utterance".into(),
        });
    }
    let token_spans = token_spans(id, &words, &spans, lexicon)?;
    let phrases = parse_phrases(&sentence.tokens);
    let phrase_ranges = phrase_frame_ranges(&phrases, &token_spans).map_err(|source| CorpusError::Phrase {
        id: id.to_string(),
        source,
    })?;
    Ok((sentence, token_spans, phrase_ranges))
}

/// Assemble an utterance from its parts, deriving token spans and phrase
/// ranges.
pub fn build_utterance(
    id: &str,
    text: &str,
    f0: F0Contour,
    phones: Vec<Segment>,
    word_spans: Option<Vec<(usize, usize)>>,
    lexicon: &Lexicon,
) -> Result<Utterance, CorpusError> {
    let (sentence, token_spans, phrase_ranges) = derive_phrases(id, text, &phones, word_spans, f0.len(), lexicon)?;
    Ok(Utterance {
        id: id.to_string(),
        text: text.trim().to_string(),
        sentence,
        f0,
        phones,
        token_spans,
        phrase_ranges,
    })
}

/// Load and validate every utterance listed in a manifest.
pub fn load_corpus(manifest: &Path, lexicon: &Lexicon) -> Result<Vec<Utterance>, CorpusError> {
    let text = read(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(4..=5).contains(&fields.len()) {
            return Err(CorpusError::FormatError {
                path: manifest.to_path_buf(),
                line: i + 1,
                message: format!("expected 4 or 5 tab-separated fields, got {}", fields.len()),
            });
        }
        let id = fields[0];
        let f0_path = base.join(fields[1]);
        let f0 = F0Contour::parse(&read(&f0_path)?).map_err(|e| match e {
            F0Error::Format { line, message } => CorpusError::FormatError {
                path: f0_path.clone(),
                line,
                message,
            },
            source => CorpusError::F0 {
                id: id.to_string(),
                source,
            },
        })?;
        let align_path = base.join(fields[2]);
        let phones = parse_segments(&read(&align_path)?, &align_path)?;
        let text = read(&base.join(fields[3]))?;
        let words = match fields.get(4) {
            Some(p) => {
                let path = base.join(p);
                Some(parse_segments(&read(&path)?, &path)?.iter().map(|s| (s.start, s.end)).collect())
            }
            None => None,
        };
        out.push(build_utterance(id, text.lines().next().unwrap_or(""), f0, phones, words, lexicon)?);
    }
    Ok(out)
}

/// Sorted, de-duplicated phone symbols of a corpus.
pub fn phone_inventory(utterances: &[Utterance]) -> Vec<String> {
    let mut phones: Vec<String> = utterances
        .iter()
        .flat_map(|u| u.phones.iter().map(|s| s.label.clone()))
        .collect();
    phones.sort();
    phones.dedup();
    phones
}

/// Names of the bundled intonation templates, in order.
pub const TEMPLATE_NAMES: [&str; 8] = [
    "rise",
    "fall",
    "rise-fall",
    "fall-rise",
    "high-flat",
    "low-flat",
    "early-peak",
    "late-peak",
];

/// Template offset in semitones at relative position `u` in `[0, 1]`.
pub fn template_semitones(template: usize, u: f64) -> f64 {
    let bump = |c: f64| (-((u - c) / 0.12).powi(2)).exp();
    match template {
        0 => -4.0 + 8.0 * u,
        1 => 4.0 - 8.0 * u,
        2 => -4.0 + 8.0 * (std::f64::consts::PI * u).sin(),
        3 => 4.0 - 8.0 * (std::f64::consts::PI * u).sin(),
        4 => 5.0,
        5 => -5.0,
        6 => -3.0 + 8.0 * bump(0.2),
        7 => -3.0 + 8.0 * bump(0.8),
        _ => panic!("template index {template} out of range"),
    }
}

/// Noise-free template contour in Hz over `frames` frames.
pub fn template_contour(template: usize, frames: usize, base_hz: f64) -> Vec<f64> {
    let denom = (frames.max(2) - 1) as f64;
    (0..frames)
        .map(|t| base_hz * 2f64.powf(template_semitones(template, t as f64 / denom) / 12.0))
        .collect()
}

pub const SYNTH_PHONES: [&str; 20] = [
    "sil", "aa", "ae", "ah", "b", "d", "eh", "f", "g", "ih", "iy", "k", "l", "m", "n", "p", "r", "s", "t", "uw",
];
const SYNTH_CHINKS: [&str; 8] = ["the", "a", "in", "on", "to", "of", "and", "with"];
const SYNTH_CHUNKS: [&str; 15] = [
    "morning", "light", "river", "garden", "yellow", "window", "music", "story", "winter", "paper", "silver", "market",
    "forest", "evening", "letter",
];
pub const SYNTH_MIN_FRAMES: usize = 50;
pub const SYNTH_MAX_FRAMES: usize = 500;
pub const SYNTH_NOISE_HZ: f64 = 5.0;
const SYNTH_BASE_HZ: f64 = 140.0;
const NOISE_SMOOTHING: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub manifest: PathBuf,
    pub templates: PathBuf,
    /// Template index per utterance, in manifest order.
    pub labels: Vec<usize>,
}

/// Gaussian noise with standard deviation `sigma`, smoothed by a moving
/// average (rescaled to keep the marginal variance).
fn smooth_noise(rng: &mut ChaCha8Rng, frames: usize, sigma: f64) -> Vec<f64> {
    let w = NOISE_SMOOTHING;
    let raw: Vec<f64> = (0..frames + w).map(|_| StandardNormal.sample(rng)).collect();
    let scale = sigma / (w as f64).sqrt();
    (0..frames).map(|t| raw[t..t + w].iter().sum::<f64>() * scale).collect()
}

/// Write `n_utts` single-phrase utterances built from the first `templates`
/// intonation templates, plus a hidden `templates.tsv` with the labels.
pub fn generate_synthetic_corpus(
    dir: &Path,
    n_utts: usize,
    seed: u64,
    templates: usize,
) -> Result<SyntheticCorpus, CorpusError> {
    if n_utts == 0 || templates == 0 || templates > TEMPLATE_NAMES.len() {
        return Err(CorpusError::InvalidParams(format!(
            "need n_utts >= 1 and 1 <= templates <= {}",
            TEMPLATE_NAMES.len()
        )));
    }
    let io = |e: std::io::Error| CorpusError::Io(format!("{}: {e}", dir.display()));
    for sub in ["f0", "align", "text", "words"] {
        fs::create_dir_all(dir.join(sub)).map_err(io)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = String::new();
    let mut truth = String::from("id\ttemplate\tname\n");
    let mut labels = Vec::with_capacity(n_utts);
    for i in 0..n_utts {
        let id = format!("utt{i:04}");
        let template = rng.random_range(0..templates);
        let frames = rng.random_range(SYNTH_MIN_FRAMES..=SYNTH_MAX_FRAMES);
        let base = SYNTH_BASE_HZ * 2f64.powf(rng.random_range(-1.0..1.0) / 12.0);
        let clean = template_contour(template, frames, base);
        let noise = smooth_noise(&mut rng, frames, SYNTH_NOISE_HZ);
        let mut f0: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| (c + n).max(40.0)).collect();
        for _ in 0..rng.random_range(0..=3) {
            let len = rng.random_range(5..=25).min(frames / 5);
            let start = rng.random_range(5..frames - 5 - len);
            f0[start..start + len].fill(0.0);
        }

        let lead = rng.random_range(5..=15);
        let tail = rng.random_range(5..=15);
        let mut phones = vec![Segment {
            label: "sil".into(),
            start: 0,
            end: lead,
        }];
        let mut t = lead;
        while t < frames - tail {
            let mut end = (t + rng.random_range(4..=14)).min(frames - tail);
            if frames - tail - end < 4 {
                end = frames - tail;
            }
            let label = SYNTH_PHONES[rng.random_range(1..SYNTH_PHONES.len())];
            phones.push(Segment {
                label: label.into(),
                start: t,
                end,
            });
            t = end;
        }
        phones.push(Segment {
            label: "sil".into(),
            start: frames - tail,
            end: frames,
        });

        let inner = phones.len() - 2;
        let n_chink = rng.random_range(0..=2usize);
        let n_chunk = rng.random_range(1..=3usize);
        let mut words: Vec<&str> = (0..n_chink).map(|_| SYNTH_CHINKS[rng.random_range(0..SYNTH_CHINKS.len())]).collect();
        words.extend((0..n_chunk).map(|_| SYNTH_CHUNKS[rng.random_range(0..SYNTH_CHUNKS.len())]));
        words.truncate(inner.max(1));
        let letters: Vec<usize> = words.iter().map(|w| w.len()).collect();
        let b = proportional_bounds(inner, &letters);
        let word_segments: Vec<Segment> = words
            .iter()
            .enumerate()
            .map(|(w, word)| Segment {
                label: (*word).to_string(),
                start: phones[1 + b[w]].start,
                end: phones[b[w + 1]].end,
            })
            .collect();
        let mut text = words.join(" ");
        text.push('.');

        let write = |sub: &str, ext: &str, body: String| fs::write(dir.join(sub).join(format!("{id}.{ext}")), body);
        write("f0", "f0", F0Contour::new(f0).expect("finite, non-negative").to_text()).map_err(io)?;
        write("align", "lab", segments_to_text(&phones)).map_err(io)?;
        write("text", "txt", format!("{text}\n")).map_err(io)?;
        write("words", "words", segments_to_text(&word_segments)).map_err(io)?;
        let _ = writeln!(
            manifest,
            "{id}\tf0/{id}.f0\talign/{id}.lab\ttext/{id}.txt\twords/{id}.words"
        );
        let _ = writeln!(truth, "{id}\t{template}\t{}", TEMPLATE_NAMES[template]);
        labels.push(template);
    }
    let manifest_path = dir.join("manifest.tsv");
    let templates_path = dir.join("templates.tsv");
    fs::write(&manifest_path, manifest).map_err(io)?;
    fs::write(&templates_path, truth).map_err(io)?;
    Ok(SyntheticCorpus {
        manifest: manifest_path,
        templates: templates_path,
        labels,
    })
}

/// Read the hidden `templates.tsv` labels, in file order.
pub fn read_template_labels(path: &Path) -> Result<Vec<(String, usize)>, CorpusError> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split('\t').collect();
        let label = fields.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| CorpusError::FormatError {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `id<TAB>template<TAB>name`".into(),
        })?;
        out.push((fields[0].to_string(), label));
    }
    Ok(out)
}
