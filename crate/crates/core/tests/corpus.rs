//! Manifest loading and the synthetic corpus generator.

use std::fs;
use std::path::Path;

use intonation::corpus::{
    generate_synthetic_corpus, load_corpus, read_template_labels, CorpusError, SYNTH_MAX_FRAMES, SYNTH_MIN_FRAMES,
};
use intonation::phrase::Lexicon;

fn write_utt(dir: &Path, id: &str, frames: usize, phones: &str, text: &str) {
    let f0: String = (0..frames).map(|t| if t < 5 { "0\n".to_string() } else { format!("{}\n", 120 + t % 7) }).collect();
    fs::write(dir.join(format!("{id}.f0")), f0).unwrap();
    fs::write(dir.join(format!("{id}.lab")), phones).unwrap();
    fs::write(dir.join(format!("{id}.txt")), text).unwrap();
}

fn manifest_line(id: &str) -> String {
    format!("{id}\t{id}.f0\t{id}.lab\t{id}.txt\n")
}

#[test]
fn loads_three_valid_utterances() {
    let dir = tempfile::tempdir().unwrap();
    write_utt(dir.path(), "a", 60, "0 10 sil\n10 50 aa\n50 60 sil\n", "The cat sat on the mat.\n");
    write_utt(dir.path(), "b", 80, "0 40 m\n40 80 ih\n", "Hello there.\n");
    write_utt(dir.path(), "c", 55, "0 55 n\n", "Yes.\n");
    let manifest: String = ["a", "b", "c"].iter().map(|id| manifest_line(id)).collect();
    fs::write(dir.path().join("manifest.tsv"), manifest).unwrap();

    let utts = load_corpus(&dir.path().join("manifest.tsv"), &Lexicon::default()).unwrap();
    assert_eq!(utts.iter().map(|u| u.id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
    assert_eq!(utts.iter().map(|u| u.len()).collect::<Vec<_>>(), [60, 80, 55]);
    for u in &utts {
        assert_eq!(u.phrase_ranges.first().unwrap().0, 0);
        assert_eq!(u.phrase_ranges.last().unwrap().1, u.len());
        for w in u.phrase_ranges.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }
    assert_eq!(utts[0].phrase_ranges.len(), 2);
    assert!(!utts[0].f0.is_voiced(0));
}

#[test]
fn missing_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_utt(dir.path(), "a", 60, "0 60 aa\n", "Fine.\n");
    fs::remove_file(dir.path().join("a.f0")).unwrap();
    fs::write(dir.path().join("manifest.tsv"), manifest_line("a")).unwrap();
    let err = load_corpus(&dir.path().join("manifest.tsv"), &Lexicon::default()).unwrap_err();
    assert_eq!(err, CorpusError::FileMissing(dir.path().join("a.f0")));

    let err = load_corpus(&dir.path().join("absent.tsv"), &Lexicon::default()).unwrap_err();
    assert!(matches!(err, CorpusError::FileMissing(_)));
}

#[test]
fn alignment_gap_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_utt(dir.path(), "gap", 60, "0 20 aa\n25 60 m\n", "Fine.\n");
    fs::write(dir.path().join("manifest.tsv"), manifest_line("gap")).unwrap();
    let err = load_corpus(&dir.path().join("manifest.tsv"), &Lexicon::default()).unwrap_err();
    assert!(matches!(err, CorpusError::AlignmentGap { ref id, .. } if id == "gap"), "{err:?}");

    write_utt(dir.path(), "short", 60, "0 50 aa\n", "Fine.\n");
    fs::write(dir.path().join("manifest.tsv"), manifest_line("short")).unwrap();
    let err = load_corpus(&dir.path().join("manifest.tsv"), &Lexicon::default()).unwrap_err();
    assert!(matches!(err, CorpusError::AlignmentGap { .. }), "{err:?}");
}

#[test]
fn bad_manifest_line_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("manifest.tsv"), "only\ttwo\n").unwrap();
    let err = load_corpus(&dir.path().join("manifest.tsv"), &Lexicon::default()).unwrap_err();
    assert!(matches!(err, CorpusError::FormatError { line: 1, .. }), "{err:?}");
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "f0", "align", "text", "words"] {
        for entry in fs::read_dir(dir.join(sub)).unwrap() {
            let path = entry.unwrap().path();
            if path.is_file() {
                let name = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((name, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generator_is_deterministic_and_loadable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = generate_synthetic_corpus(a.path(), 100, 1, 4).unwrap();
    let cb = generate_synthetic_corpus(b.path(), 100, 1, 4).unwrap();
    assert_eq!(ca.labels, cb.labels);
    assert_eq!(tree(a.path()), tree(b.path()));

    let utts = load_corpus(&ca.manifest, &Lexicon::default()).unwrap();
    assert_eq!(utts.len(), 100);
    for u in &utts {
        assert!((SYNTH_MIN_FRAMES..=SYNTH_MAX_FRAMES).contains(&u.len()), "{} has {} frames", u.id, u.len());
        assert_eq!(u.phrase_ranges, [(0, u.len())], "{} `{}`", u.id, u.text);
        assert!(u.f0.voiced_count() > 0);
    }
    let labels = read_template_labels(&ca.templates).unwrap();
    assert_eq!(labels.iter().map(|(_, t)| *t).collect::<Vec<_>>(), ca.labels);
    assert!(ca.labels.iter().all(|&t| t < 4));
    assert!((0..4).all(|t| ca.labels.contains(&t)));

    let other = tempfile::tempdir().unwrap();
    let cc = generate_synthetic_corpus(other.path(), 100, 2, 4).unwrap();
    assert_ne!(ca.labels, cc.labels);
}

#[test]
fn generator_rejects_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(generate_synthetic_corpus(dir.path(), 0, 1, 4), Err(CorpusError::InvalidParams(_))));
    assert!(matches!(generate_synthetic_corpus(dir.path(), 5, 1, 0), Err(CorpusError::InvalidParams(_))));
    assert!(matches!(generate_synthetic_corpus(dir.path(), 5, 1, 99), Err(CorpusError::InvalidParams(_))));
}
