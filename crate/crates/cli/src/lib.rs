//! The `intonation` command-line workflow.
//!
//! Every command that produces model artifacts works inside a run
//! directory. The first command to touch a run directory fixes its
//! configuration in `config.txt`; later commands reuse it unless given
//! `--config`. `run.meta` records the seed, the SHA-256 of the canonical
//! configuration text and the crate version.

use std::fmt::Write as _;
use std::fs;
use std::io::Read as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use intonation::codes::{extract_vamp_codes, Codebook};
use intonation::config::Config;
use intonation::corpus::{generate_synthetic_corpus, load_corpus, phone_inventory, Utterance};
use intonation::f0::{compute_norm_stats, NormStats};
use intonation::model::{train, Checkpoint, EpochMetrics, ModelKind};
use intonation::phrase::{parse_phrases, tokenize_line, Lexicon};
use intonation::pipeline::{cluster_embeddings, extract_all, training_items};
use intonation::stats::{
    pair_report_tsv, parse_judgments, per_pair_report, per_system_report, system_report_tsv, ReportOptions,
};
use intonation::synth::{render_all_codes, synthesize_f0, SentenceSpec, SynthOptions};

pub const CONFIG_FILE: &str = "config.txt";
pub const META_FILE: &str = "run.meta";
pub const STATS_FILE: &str = "stats.txt";

#[derive(Debug, Parser)]
#[command(name = "intonation", version, about = "Discrete intonation codes: phrasing, training, clustering, synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split text into prosodic phrases, one input line per output line.
    Parse(ParseArgs),
    /// Write a synthetic corpus with known intonation templates.
    GenData(GenDataArgs),
    /// Normalization statistics, features and phrase ranges of a corpus.
    Features(FeaturesArgs),
    /// Train an autoencoder or a mixture-prior variational model.
    Train(TrainArgs),
    /// k-means codebook over the autoencoder's phrase embeddings.
    Cluster(ClusterArgs),
    /// Codebook from the pseudo-input modes of a variational model.
    Codes(CodesArgs),
    /// Render F0 contours of a sentence for each code or a given code sequence.
    Synth(SynthArgs),
    /// Binomial tests with Holm-Bonferroni correction over listening judgments.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Text to parse; read from `--file` or stdin when omitted.
    pub text: Vec<String>,
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Lexicon override file.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub utts: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub templates: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run directory holding configuration and artifacts.
    #[arg(long)]
    pub run: PathBuf,
    /// Configuration file; replaces the run directory's configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub model: ModelKind,
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Defaults to `ae.ckpt` in the run directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Number of clusters; defaults to the configured `codes`.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CodesArgs {
    /// Defaults to `vamp.ckpt` in the run directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub model: ModelKind,
    #[arg(long)]
    pub sentence: PathBuf,
    /// Defaults to `<model>.ckpt` in the run directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to `<model>_codebook.txt` in the run directory.
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    /// One code id per phrase, comma-separated; renders every code when omitted.
    #[arg(long, value_delimiter = ',')]
    pub codes: Option<Vec<usize>>,
    /// Mark frames inside silence phones as unvoiced.
    #[arg(long)]
    pub unvoice_silence: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub judgments: PathBuf,
    #[arg(long, default_value_t = 0.005)]
    pub alpha: f64,
    #[arg(long)]
    pub two_sided: bool,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    /// Directory for `pairs.tsv` and `systems.tsv`; reports go to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `argv` (including the program name) and execute. Returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Parse(a) => cmd_parse(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::Features(a) => cmd_features(a),
        Command::Train(a) => cmd_train(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Codes(a) => cmd_codes(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Stats(a) => cmd_stats(a),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn lexicon_from(path: Option<&Path>) -> Result<Lexicon> {
    let lexicon = Lexicon::default();
    match path {
        None => Ok(lexicon),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading lexicon {}", p.display()))?;
            lexicon
                .with_overrides(&text)
                .with_context(|| format!("lexicon {}", p.display()))
        }
    }
}

/// A run directory with its resolved configuration.
pub struct Run {
    pub dir: PathBuf,
    pub config: Config,
}

impl Run {
    /// Resolve the configuration (explicit file, then the run's own, then
    /// defaults), store it canonically and refresh `run.meta`.
    pub fn open(args: &RunArgs) -> Result<Self> {
        let dir = args.run.clone();
        let stored = dir.join(CONFIG_FILE);
        let config = match &args.config {
            Some(p) => Config::load(p).with_context(|| format!("config {}", p.display()))?,
            None if stored.exists() => Config::load(&stored).with_context(|| format!("config {}", stored.display()))?,
            None => Config::default(),
        };
        config.validate().context("configuration")?;
        let text = config.to_text();
        write(&stored, &text)?;
        write(&dir.join(META_FILE), run_meta(&config))?;
        Ok(Self { dir, config })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        lexicon_from(self.config.lexicon.as_deref().map(Path::new))
    }

    fn corpus(&self, manifest: &Path) -> Result<Vec<Utterance>> {
        let utts = load_corpus(manifest, &self.lexicon()?).with_context(|| format!("corpus {}", manifest.display()))?;
        if utts.is_empty() {
            bail!("corpus {} lists no utterances", manifest.display());
        }
        Ok(utts)
    }

    /// Stored normalization statistics, or freshly computed (and stored)
    /// ones.
    fn stats(&self, utts: &[Utterance]) -> Result<NormStats> {
        let path = self.path(STATS_FILE);
        if path.exists() {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            return NormStats::parse(&text).with_context(|| format!("stats {}", path.display()));
        }
        let contours: Vec<_> = utts.iter().map(|u| u.f0.clone()).collect();
        let stats = compute_norm_stats(&contours).context("normalization statistics")?;
        write(&path, stats.to_text())?;
        Ok(stats)
    }
}

pub fn config_hash(config: &Config) -> String {
    Sha256::digest(config.to_text().as_bytes())
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn run_meta(config: &Config) -> String {
    format!(
        "intonation_version = {}\ncli_version = {}\nseed = {}\nconfig_sha256 = {}\n",
        intonation::VERSION,
        env!("CARGO_PKG_VERSION"),
        config.seed,
        config_hash(config)
    )
}

fn cmd_parse(a: ParseArgs) -> Result<()> {
    let lexicon = lexicon_from(a.lexicon.as_deref())?;
    let lines: Vec<String> = if !a.text.is_empty() {
        vec![a.text.join(" ")]
    } else if let Some(p) = &a.file {
        fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))?
            .lines()
            .map(str::to_string)
            .collect()
    } else {
        let mut text = String::new();
        std::io::stdin().lock().read_to_string(&mut text).context("reading stdin")?;
        text.lines().map(str::to_string).collect()
    };
    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sentence = tokenize_line(line, &lexicon).with_context(|| format!("line {}", i + 1))?;
        let phrases: Vec<String> = parse_phrases(&sentence.tokens).iter().map(|p| p.text()).collect();
        let _ = writeln!(out, "{}", phrases.join(" | "));
    }
    print!("{out}");
    Ok(())
}

fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    let corpus = generate_synthetic_corpus(&a.out, a.utts, a.seed, a.templates).context("generating corpus")?;
    println!("{}", corpus.manifest.display());
    Ok(())
}

fn cmd_features(a: FeaturesArgs) -> Result<()> {
    let run = Run::open(&a.run)?;
    let utts = run.corpus(&a.manifest)?;
    let contours: Vec<_> = utts.iter().map(|u| u.f0.clone()).collect();
    let stats = compute_norm_stats(&contours).context("normalization statistics")?;
    write(&run.path(STATS_FILE), stats.to_text())?;
    let features = extract_all(&utts, &stats)?;
    let mut phrases = String::from("id\tphrase\tstart\tend\ttext\n");
    for (u, f) in utts.iter().zip(&features) {
        let mut text = String::new();
        for row in f.frames.rows() {
            let _ = writeln!(text, "{} {} {}", row[0], row[1], row[2]);
        }
        write(&run.path(&format!("features/{}.feat", u.id)), text)?;
        let parsed = parse_phrases(&u.sentence.tokens);
        for (i, (start, end)) in u.phrase_ranges.iter().enumerate() {
            let words = parsed.get(i).map(|p| p.text()).unwrap_or_default();
            let _ = writeln!(phrases, "{}\t{i}\t{start}\t{end}\t{words}", u.id);
        }
    }
    write(&run.path("phrases.tsv"), phrases)?;
    eprintln!("{} utterances, {} frames", utts.len(), features.iter().map(|f| f.len()).sum::<usize>());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let run = Run::open(&a.run)?;
    let utts = run.corpus(&a.manifest)?;
    let stats = run.stats(&utts)?;
    let phones = phone_inventory(&utts);
    let items = training_items(&utts, &stats, &phones)?;
    let kind = a.model;
    let metrics_path = run.path(&format!("{kind}_metrics.tsv"));
    let mut metrics = format!("{}\n", EpochMetrics::HEADER);
    let every = run.config.checkpoint_every;
    let (model, _) = train(
        run.config.model(kind),
        phones,
        &items,
        &run.config.schedule(),
        run.config.seed,
        |model, m| {
            metrics.push_str(&m.to_tsv());
            metrics.push('\n');
            eprintln!(
                "{kind} epoch {:>3}  lr {:.2e}  beta {:.2e}  recon {:.5}  kl {:.4}",
                m.epoch, m.lr, m.beta, m.recon, m.kl
            );
            if every > 0 && (m.epoch + 1) % every == 0 {
                let ckpt = Checkpoint {
                    model: model.clone(),
                    stats,
                };
                let path = run.path(&format!("checkpoints/{kind}_epoch{:03}.ckpt", m.epoch + 1));
                write(&path, ckpt.to_bytes()).map_err(|e| intonation::model::ModelError::Checkpoint(format!("{e:#}")))?;
            }
            Ok(())
        },
    )
    .with_context(|| format!("training {kind}"))?;
    write(&metrics_path, metrics)?;
    write(&run.path(&format!("{kind}.ckpt")), Checkpoint { model, stats }.to_bytes())?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("checkpoint {}", path.display()))
}

fn cmd_cluster(a: ClusterArgs) -> Result<()> {
    let run = Run::open(&a.run)?;
    let ckpt = load_checkpoint(&a.checkpoint.clone().unwrap_or_else(|| run.path("ae.ckpt")))?;
    let utts = run.corpus(&a.manifest)?;
    let items = training_items(&utts, &ckpt.stats, &ckpt.model.phones)?;
    let k = a.k.unwrap_or(run.config.codes);
    let fit = cluster_embeddings(&ckpt.model, &items, k, run.config.seed)?;
    write(&run.path("ae_codebook.txt"), fit.codebook.to_text())?;
    let mut assignments = String::from("id\tphrase\tcode\n");
    let mut next = fit.assignments.iter();
    for u in &utts {
        for i in 0..u.phrase_ranges.len() {
            let code = next.next().context("fewer assignments than phrases")?;
            let _ = writeln!(assignments, "{}\t{i}\t{code}", u.id);
        }
    }
    write(&run.path("ae_assignments.tsv"), assignments)?;
    eprintln!("{k} codes, objective {:.6} after {} iterations", fit.objective(), fit.iterations);
    Ok(())
}

fn cmd_codes(a: CodesArgs) -> Result<()> {
    let run = Run::open(&a.run)?;
    let ckpt = load_checkpoint(&a.checkpoint.clone().unwrap_or_else(|| run.path("vamp.ckpt")))?;
    let codebook = extract_vamp_codes(&ckpt.model)?;
    write(&run.path("vamp_codebook.txt"), codebook.to_text())?;
    eprintln!("{} codes", codebook.len());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let run = Run::open(&a.run)?;
    let kind = a.model;
    let ckpt = load_checkpoint(&a.checkpoint.clone().unwrap_or_else(|| run.path(&format!("{kind}.ckpt"))))?;
    if ckpt.model.kind() != kind {
        bail!("checkpoint holds a {} model, not {kind}", ckpt.model.kind());
    }
    let codebook_path = a.codebook.clone().unwrap_or_else(|| run.path(&format!("{kind}_codebook.txt")));
    let codebook = Codebook::load(&codebook_path).with_context(|| format!("codebook {}", codebook_path.display()))?;
    let spec = SentenceSpec::load(&a.sentence, &run.lexicon()?).with_context(|| format!("sentence {}", a.sentence.display()))?;
    let options = SynthOptions {
        unvoice_silence: a.unvoice_silence,
    };
    let out_dir = run.path(&format!("synth/{kind}"));
    match &a.codes {
        Some(ids) => {
            let contour = synthesize_f0(&spec, ids, &ckpt.model, &codebook, &ckpt.stats, options)?;
            let tag: Vec<String> = ids.iter().map(usize::to_string).collect();
            let path = out_dir.join(format!("{}_codes_{}.f0", spec.id, tag.join("-")));
            write(&path, contour.to_text())?;
            println!("{}", path.display());
        }
        None => {
            let rendered = render_all_codes(&spec, &ckpt.model, &codebook, &ckpt.stats, options, &out_dir)?;
            println!("{}", rendered.manifest.display());
        }
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let text = fs::read_to_string(&a.judgments).with_context(|| format!("reading {}", a.judgments.display()))?;
    let records = parse_judgments(&text).with_context(|| format!("judgments {}", a.judgments.display()))?;
    let options = ReportOptions {
        alpha: a.alpha,
        two_sided: a.two_sided,
        confidence: a.confidence,
        ..ReportOptions::default()
    };
    let pairs = pair_report_tsv(&per_pair_report(&records, &options)?);
    let systems = system_report_tsv(&per_system_report(&records, &options)?);
    match &a.out {
        Some(dir) => {
            write(&dir.join("pairs.tsv"), pairs)?;
            write(&dir.join("systems.tsv"), systems)?;
        }
        None => print!("{systems}\n{pairs}"),
    }
    Ok(())
}
