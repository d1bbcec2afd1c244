//! Chink/chunk prosodic phrasing.
//!
//! Every word is either a *chink* (function words and tensed verbs) or a
//! *chunk* (content words and objective pronouns). A phrase is a maximal run
//! matching `Chink* Chunk*`: a new phrase opens exactly when a chink follows
//! a chunk.
//!
//! ```
//! use intonation::phrase::{parse_phrases, tokenize_line, Lexicon};
//!
//! let lexicon = Lexicon::default();
//! let sentence = tokenize_line("The cat sat on the mat.", &lexicon).unwrap();
//! let phrases = parse_phrases(&sentence.tokens);
//! let text: Vec<String> = phrases.iter().map(|p| p.text()).collect();
//! assert_eq!(text, ["The cat", "sat on the mat"]);
//! assert_eq!(sentence.final_punctuation.as_deref(), Some("."));
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PhraseError {
    #[error("unknown part-of-speech tag `{0}`")]
    UnknownTag(String),
    #[error("token `{0}` has an empty word")]
    EmptyToken(String),
    #[error("no alignment span for token {index} (`{word}`)")]
    MissingAlignment { index: usize, word: String },
    #[error("alignment span for token {index} overlaps the previous span")]
    OverlapError { index: usize },
    #[error("lexicon line {line}: {message}")]
    LexiconFormat { line: usize, message: String },
}

/// The two word classes of the phrasing heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Klass {
    Chink,
    Chunk,
}

/// Penn-style part-of-speech tags accepted on input (`word/TAG`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pos {
    CC,
    CD,
    DT,
    EX,
    FW,
    IN,
    JJ,
    JJR,
    JJS,
    MD,
    NN,
    NNS,
    NNP,
    NNPS,
    PDT,
    POS,
    PRP,
    PRPS,
    RB,
    RBR,
    RBS,
    RP,
    TO,
    UH,
    VB,
    VBD,
    VBG,
    VBN,
    VBP,
    VBZ,
    WDT,
    WP,
    WPS,
    WRB,
}

impl Pos {
    const ALL: [(&'static str, Pos); 34] = [
        ("CC", Pos::CC),
        ("CD", Pos::CD),
        ("DT", Pos::DT),
        ("EX", Pos::EX),
        ("FW", Pos::FW),
        ("IN", Pos::IN),
        ("JJ", Pos::JJ),
        ("JJR", Pos::JJR),
        ("JJS", Pos::JJS),
        ("MD", Pos::MD),
        ("NN", Pos::NN),
        ("NNS", Pos::NNS),
        ("NNP", Pos::NNP),
        ("NNPS", Pos::NNPS),
        ("PDT", Pos::PDT),
        ("POS", Pos::POS),
        ("PRP", Pos::PRP),
        ("PRP$", Pos::PRPS),
        ("RB", Pos::RB),
        ("RBR", Pos::RBR),
        ("RBS", Pos::RBS),
        ("RP", Pos::RP),
        ("TO", Pos::TO),
        ("UH", Pos::UH),
        ("VB", Pos::VB),
        ("VBD", Pos::VBD),
        ("VBG", Pos::VBG),
        ("VBN", Pos::VBN),
        ("VBP", Pos::VBP),
        ("VBZ", Pos::VBZ),
        ("WDT", Pos::WDT),
        ("WP", Pos::WP),
        ("WP$", Pos::WPS),
        ("WRB", Pos::WRB),
    ];

    pub fn as_str(self) -> &'static str {
        Self::ALL
            .iter()
            .find(|(_, p)| *p == self)
            .map(|(s, _)| *s)
            .unwrap_or("?")
    }

    /// Finite verb forms: past, 3rd-person present, non-3rd present.
    pub fn is_tensed_verb(self) -> bool {
        matches!(self, Pos::VBD | Pos::VBZ | Pos::VBP | Pos::MD)
    }

    pub fn is_untensed_verb(self) -> bool {
        matches!(self, Pos::VB | Pos::VBG | Pos::VBN)
    }

    /// Closed-class tags.
    pub fn is_function(self) -> bool {
        matches!(
            self,
            Pos::CC
                | Pos::DT
                | Pos::EX
                | Pos::IN
                | Pos::MD
                | Pos::PDT
                | Pos::POS
                | Pos::PRP
                | Pos::PRPS
                | Pos::RP
                | Pos::TO
                | Pos::WDT
                | Pos::WP
                | Pos::WPS
                | Pos::WRB
        )
    }
}

impl FromStr for Pos {
    type Err = PhraseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .find(|(name, _)| *name == s)
            .map(|(_, p)| *p)
            .ok_or_else(|| PhraseError::UnknownTag(s.to_string()))
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Suffix rule for spotting tensed verbs in untagged text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixRule {
    pub suffix: String,
    /// Shortest stem (word minus suffix) the rule fires on.
    pub min_stem: usize,
    /// Only fire when the stem is a listed verb stem.
    pub requires_known_stem: bool,
    /// Endings that block the rule (`eed` keeps `need`, `seed` out).
    pub exclude_endings: Vec<String>,
}

impl SuffixRule {
    fn matches(&self, word: &str, verb_stems: &BTreeSet<String>) -> bool {
        let Some(stem) = word.strip_suffix(self.suffix.as_str()) else {
            return false;
        };
        if stem.chars().count() < self.min_stem {
            return false;
        }
        if self.exclude_endings.iter().any(|e| word.ends_with(e.as_str())) {
            return false;
        }
        if !self.requires_known_stem {
            return true;
        }
        verb_stems.contains(stem)
            || (self.suffix == "es" && verb_stems.contains(&format!("{stem}e")))
            || (self.suffix == "ies" && verb_stems.contains(&format!("{stem}y")))
    }
}

/// Word lists and rules behind [`classify_token`].
///
/// Classification priority, first match wins:
/// 1. objective pronoun: `Chunk`
/// 2. tensed verb (POS tag if given, otherwise the explicit list and suffix rules): `Chink`
/// 3. function word (lexicon entry or closed-class POS tag): `Chink`
/// 4. anything else: `Chunk`
///
/// `it` and `you` are deliberately *not* objective pronouns: without a
/// syntactic parse their case is unknowable, so they stay function words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub function_words: BTreeSet<String>,
    pub objective_pronouns: BTreeSet<String>,
    pub tensed_verbs: BTreeSet<String>,
    pub verb_stems: BTreeSet<String>,
    pub suffix_rules: Vec<SuffixRule>,
}

const FUNCTION_WORDS: &[&str] = &[
    // determiners and quantifiers
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "no", "every", "each",
    "all", "both", "either", "neither", "another", "such", "my", "your", "his", "its", "our",
    "their", "whose", "much", "many", "few", "several",
    // prepositions
    "of", "in", "on", "at", "by", "for", "with", "about", "against", "between", "into",
    "through", "during", "before", "after", "above", "below", "to", "from", "up", "down",
    "over", "under", "across", "along", "around", "among", "behind", "beside", "beyond",
    "near", "off", "onto", "out", "past", "since", "toward", "towards", "upon", "within",
    "without", "than", "via", "per",
    // conjunctions and complementizers
    "and", "but", "or", "nor", "so", "yet", "because", "although", "though", "if", "unless",
    "while", "whereas", "whether", "as", "until", "till", "once",
    // auxiliaries (untensed forms; tensed forms live in the tensed-verb list)
    "be", "been", "being", "having",
    // subjective pronouns
    "i", "you", "he", "she", "it", "we", "they",
    // wh-words
    "what", "which", "who", "whom", "where", "when", "why", "how", "whatever", "whoever",
    // particles and existential there
    "not", "n't", "there",
];

const OBJECTIVE_PRONOUNS: &[&str] = &["me", "him", "her", "us", "them"];

const TENSED_VERBS: &[&str] = &[
    // be / have / do
    "am", "is", "are", "was", "were", "has", "have", "had", "do", "does", "did",
    // modals
    "will", "would", "shall", "should", "can", "could", "may", "might", "must", "ought",
    // clitics
    "'s", "'m", "'re", "'d", "'ve", "'ll", "ca", "wo", "sha",
    // frequent irregular past / present forms
    "went", "goes", "said", "says", "made", "took", "came", "saw", "got", "gave", "found",
    "thought", "told", "became", "left", "felt", "brought", "began", "kept", "held", "stood",
    "heard", "meant", "met", "ran", "paid", "sat", "spoke", "lay", "led", "grew", "lost",
    "fell", "sent", "built", "understood", "drew", "broke", "spent", "rose", "drove",
    "bought", "wore", "chose", "sang", "swam", "threw", "knew", "flew", "wrote", "ate", "hid",
    "rode", "caught", "taught", "fought", "slept", "woke", "shook", "won", "sold", "stole",
    "struck", "dug", "blew", "fed", "fled", "forgot", "froze", "laid", "slid", "stuck",
    "swept", "tore", "wept",
];

const VERB_STEMS: &[&str] = &[
    "ask", "believe", "bring", "call", "come", "cry", "feel", "find", "get", "give", "go",
    "hear", "help", "hold", "keep", "know", "leave", "let", "like", "live", "look", "love",
    "make", "mean", "move", "need", "play", "pull", "put", "run", "say", "see", "seem",
    "show", "start", "stay", "take", "talk", "tell", "think", "try", "turn", "tug", "walk",
    "want", "wish", "work",
];

fn word_set(words: &[&str]) -> BTreeSet<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl Default for Lexicon {
    fn default() -> Self {
        Self {
            function_words: word_set(FUNCTION_WORDS),
            objective_pronouns: word_set(OBJECTIVE_PRONOUNS),
            tensed_verbs: word_set(TENSED_VERBS),
            verb_stems: word_set(VERB_STEMS),
            suffix_rules: vec![
                SuffixRule {
                    suffix: "ed".into(),
                    min_stem: 3,
                    requires_known_stem: false,
                    exclude_endings: vec!["eed".into()],
                },
                SuffixRule {
                    suffix: "ies".into(),
                    min_stem: 1,
                    requires_known_stem: true,
                    exclude_endings: vec![],
                },
                SuffixRule {
                    suffix: "es".into(),
                    min_stem: 1,
                    requires_known_stem: true,
                    exclude_endings: vec![],
                },
                SuffixRule {
                    suffix: "s".into(),
                    min_stem: 2,
                    requires_known_stem: true,
                    exclude_endings: vec!["ss".into()],
                },
            ],
        }
    }
}

impl Lexicon {
    /// Apply an override file on top of `self`.
    ///
    /// Format: `[function_words]`, `[objective_pronouns]`, `[tensed_verbs]`
    /// or `[verb_stems]` headers followed by one word per line. `#` starts a
    /// comment. Words listed under a header are added to that set and removed
    /// from the others, so an override always wins.
    pub fn with_overrides(mut self, text: &str) -> Result<Self, PhraseError> {
        #[derive(Clone, Copy)]
        enum Section {
            Function,
            Objective,
            Tensed,
            Stems,
        }
        let mut section = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                section = Some(match line {
                    "[function_words]" => Section::Function,
                    "[objective_pronouns]" => Section::Objective,
                    "[tensed_verbs]" => Section::Tensed,
                    "[verb_stems]" => Section::Stems,
                    other => {
                        return Err(PhraseError::LexiconFormat {
                            line: i + 1,
                            message: format!("unknown section {other}"),
                        })
                    }
                });
                continue;
            }
            if line.split_whitespace().count() != 1 {
                return Err(PhraseError::LexiconFormat {
                    line: i + 1,
                    message: "expected one word per line".into(),
                });
            }
            let word = line.to_lowercase();
            let Some(section) = section else {
                return Err(PhraseError::LexiconFormat {
                    line: i + 1,
                    message: "word before any section header".into(),
                });
            };
            if !matches!(section, Section::Stems) {
                self.function_words.remove(&word);
                self.objective_pronouns.remove(&word);
                self.tensed_verbs.remove(&word);
            }
            match section {
                Section::Function => self.function_words.insert(word),
                Section::Objective => self.objective_pronouns.insert(word),
                Section::Tensed => self.tensed_verbs.insert(word),
                Section::Stems => self.verb_stems.insert(word),
            };
        }
        Ok(self)
    }

    fn is_tensed(&self, word: &str) -> bool {
        self.tensed_verbs.contains(word)
            || (!self.function_words.contains(word)
                && self
                    .suffix_rules
                    .iter()
                    .any(|rule| rule.matches(word, &self.verb_stems)))
    }
}

/// Classify one word. Total and deterministic; see [`Lexicon`] for priority.
pub fn classify_token(token_text: &str, pos: Option<Pos>, lexicon: &Lexicon) -> Klass {
    let word = token_text.to_lowercase();
    if lexicon.objective_pronouns.contains(&word) {
        return Klass::Chunk;
    }
    let tensed = match pos {
        Some(p) if p.is_tensed_verb() => true,
        Some(p) if p.is_untensed_verb() => false,
        Some(_) => false,
        None => lexicon.is_tensed(&word),
    };
    if tensed {
        return Klass::Chink;
    }
    if lexicon.function_words.contains(&word) || pos.is_some_and(Pos::is_function) {
        return Klass::Chink;
    }
    Klass::Chunk
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub pos: Option<Pos>,
    pub klass: Klass,
}

impl Token {
    pub fn new(text: impl Into<String>, pos: Option<Pos>, lexicon: &Lexicon) -> Result<Self, PhraseError> {
        let text = text.into();
        if text.is_empty() {
            return Err(PhraseError::EmptyToken(text));
        }
        let klass = classify_token(&text, pos, lexicon);
        Ok(Self { text, pos, klass })
    }

    /// A token with a fixed class, bypassing the lexicon.
    pub fn with_klass(text: impl Into<String>, klass: Klass) -> Self {
        Self {
            text: text.into(),
            pos: None,
            klass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phrase {
    pub index: usize,
    pub tokens: Vec<Token>,
}

impl Phrase {
    pub fn text(&self) -> String {
        let mut out = String::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            let clitic = tok.text.starts_with('\'') || tok.text.eq_ignore_ascii_case("n't");
            if i > 0 && !clitic {
                out.push(' ');
            }
            out.push_str(&tok.text);
        }
        out
    }
}

/// Greedy `{Chink* Chunk*}` segmentation.
pub fn parse_phrases(tokens: &[Token]) -> Vec<Phrase> {
    let mut phrases: Vec<Phrase> = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let mut seen_chunk = false;
    for tok in tokens {
        if tok.klass == Klass::Chink && seen_chunk {
            phrases.push(Phrase {
                index: phrases.len(),
                tokens: std::mem::take(&mut current),
            });
            seen_chunk = false;
        }
        if tok.klass == Klass::Chunk {
            seen_chunk = true;
        }
        current.push(tok.clone());
    }
    if !current.is_empty() {
        phrases.push(Phrase {
            index: phrases.len(),
            tokens: current,
        });
    }
    phrases
}

/// Frame range `[start, end)` of each phrase given one `[start, end)` span per
/// token, in token order. Spans must be non-empty and abut exactly.
pub fn phrase_frame_ranges(
    phrases: &[Phrase],
    word_spans: &[(usize, usize)],
) -> Result<Vec<(usize, usize)>, PhraseError> {
    let mut ranges = Vec::with_capacity(phrases.len());
    let mut index = 0usize;
    let mut prev_end: Option<usize> = None;
    for phrase in phrases {
        let mut start = None;
        let mut end = 0;
        for tok in &phrase.tokens {
            let missing = || PhraseError::MissingAlignment {
                index,
                word: tok.text.clone(),
            };
            let &(s, e) = word_spans.get(index).ok_or_else(missing)?;
            if e <= s {
                return Err(missing());
            }
            if let Some(pe) = prev_end {
                if s < pe {
                    return Err(PhraseError::OverlapError { index });
                }
                if s > pe {
                    return Err(missing());
                }
            }
            start.get_or_insert(s);
            end = e;
            prev_end = Some(e);
            index += 1;
        }
        if let Some(s) = start {
            ranges.push((s, end));
        }
    }
    Ok(ranges)
}

/// A tokenized input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    /// Sentence-final punctuation, kept aside since the parser sees words only.
    pub final_punctuation: Option<String>,
}

const CLITICS: &[&str] = &["'s", "'m", "'re", "'d", "'ve", "'ll"];

fn is_punct(c: char) -> bool {
    matches!(
        c,
        '.' | ',' | '!' | '?' | ';' | ':' | '"' | '\u{201c}' | '\u{201d}' | '(' | ')' | '[' | ']' | '`' | '\u{2014}' | '\u{2013}' | '-'
    )
}

/// Split an untagged word into host + clitic (`What's` -> `What`, `'s`;
/// `didn't` -> `did`, `n't`).
fn split_contraction(word: &str) -> Vec<String> {
    let norm = word.replace('\u{2019}', "'");
    let lower = norm.to_lowercase();
    if lower.len() > 3 && lower.ends_with("n't") {
        let cut = norm.len() - 3;
        return vec![norm[..cut].to_string(), norm[cut..].to_string()];
    }
    for clitic in CLITICS {
        if lower.len() > clitic.len() && lower.ends_with(clitic) {
            let cut = norm.len() - clitic.len();
            return vec![norm[..cut].to_string(), norm[cut..].to_string()];
        }
    }
    vec![norm]
}

/// Tokenize one line of `word` or `word/TAG` items.
///
/// Punctuation is stripped from word edges; the last punctuation seen at the
/// end of the line is returned as `final_punctuation`. Untagged contractions
/// are split into host and clitic. Tagged items are taken as given.
pub fn tokenize_line(line: &str, lexicon: &Lexicon) -> Result<Sentence, PhraseError> {
    let mut tokens = Vec::new();
    let mut final_punctuation = None;
    for raw in line.split_whitespace() {
        let (word, pos) = match raw.rsplit_once('/') {
            Some((w, tag)) if !w.is_empty() && !tag.is_empty() => (w, Some(tag.parse::<Pos>()?)),
            _ => (raw, None),
        };
        let stripped = word.trim_matches(is_punct);
        let core = if word_is_clitic(stripped) {
            stripped
        } else {
            stripped.trim_matches('\'')
        };
        let end_marks: String = word
            .chars()
            .rev()
            .take_while(|c| is_punct(*c) || *c == '\'')
            .filter(|c| matches!(c, '.' | '!' | '?'))
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        if !end_marks.is_empty() {
            final_punctuation = Some(end_marks);
        } else if !core.is_empty() {
            final_punctuation = None;
        }
        if core.is_empty() {
            continue;
        }
        if pos.is_some() {
            tokens.push(Token::new(core, pos, lexicon)?);
        } else {
            for piece in split_contraction(core) {
                tokens.push(Token::new(piece, None, lexicon)?);
            }
        }
    }
    Ok(Sentence {
        tokens,
        final_punctuation,
    })
}

fn word_is_clitic(word: &str) -> bool {
    let w = word.replace('\u{2019}', "'").to_lowercase();
    CLITICS.contains(&w.as_str()) || w == "n't"
}
