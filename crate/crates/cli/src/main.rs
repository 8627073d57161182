use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use psp_core::centroids::{
    build_centroids, build_reference_bank, sample_corpus, BankConfig, CentroidConfig, SampleConfig,
};
use psp_core::interchange::{
    default_tables, load_dimension_tables, tables_for, unknown_graphemes, validate_bundle, Corpus,
    DimensionTable, UtteranceBundle,
};
use psp_core::report::{cmd_report, ReportFormat};
use psp_core::scorecard::{cmd_sanity, cmd_score, ScoreRequest, ScoreRun, Scorecard};
use psp_core::{BootstrapConfig, Language, ResampleUnit, ScoreOptions};

const EXIT_OK: u8 = 0;
const EXIT_INVALID: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "psp", version, about = "Phoneme substitution profile scoring for Indic TTS")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for corpus sampling and bootstrap resampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Collapse threshold on per-token fidelity.
    #[arg(long, global = true, default_value_t = psp_core::DEFAULT_TAU)]
    tau: f64,
    /// Covariance regularization for Fréchet distances.
    #[arg(long, global = true, default_value_t = psp_core::DEFAULT_EPS)]
    eps: f64,
    #[arg(long, global = true, default_value_t = 1000)]
    replicates: usize,
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, global = true, value_enum, default_value_t = Unit::Utterance)]
    resample_unit: Unit,
    /// Z-score prosodic features by the native bank before PSD.
    #[arg(long, global = true)]
    zscore_psd: bool,
    /// Dimension tables (TOML). Defaults to the built-in tables.
    #[arg(long, global = true)]
    tables: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Unit {
    Utterance,
    Token,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Table,
    Json,
    Markdown,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build per-phoneme native and substitute centroids from a native corpus.
    Centroids {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        language: Language,
        #[arg(long)]
        out: PathBuf,
        /// Maximum clips per speaker.
        #[arg(long, default_value_t = psp_core::centroids::DEFAULT_SPEAKER_CAP)]
        cap: usize,
        #[arg(long)]
        max_total: Option<usize>,
        /// Minimum distinct speakers; defaults to the language's requirement.
        #[arg(long)]
        min_speakers: Option<usize>,
    },
    /// Build the native utterance-embedding bank and prosodic matrix.
    Bank {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        language: Language,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        max_utterances: usize,
        #[arg(long, default_value_t = 500)]
        max_prosodic: usize,
    },
    /// Score a system corpus.
    Score {
        #[command(flatten)]
        inputs: ScoreInputs,
        /// Native-floor scorecard used to normalize fidelities.
        #[arg(long)]
        floor: Option<PathBuf>,
    },
    /// Score held-out native audio as the language's noise floor.
    Sanity {
        #[command(flatten)]
        inputs: ScoreInputs,
    },
    /// Leaderboards and cross-language deltas from saved scorecards.
    Report {
        #[arg(required = true)]
        scorecards: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check bundles or corpora against the interchange contract.
    Validate {
        /// Corpus directories (with corpus.json) or bundle directories.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ScoreInputs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    language: Language,
    #[arg(long, env = "PSP_CENTROIDS")]
    centroids: PathBuf,
    #[arg(long)]
    refs: PathBuf,
    /// Scorecard JSON destination.
    #[arg(long)]
    out: PathBuf,
    /// System name; defaults to the corpus manifest.
    #[arg(long)]
    system: Option<String>,
    /// Write per-utterance intermediate results here.
    #[arg(long)]
    dump_utterances: Option<PathBuf>,
}

impl Global {
    fn options(&self) -> ScoreOptions {
        ScoreOptions {
            tau: self.tau,
            eps: self.eps,
            bootstrap: BootstrapConfig {
                replicates: self.replicates,
                alpha: self.alpha,
                seed: self.seed,
                resample_unit: match self.resample_unit {
                    Unit::Utterance => ResampleUnit::Utterance,
                    Unit::Token => ResampleUnit::Token,
                },
            },
            psd_zscore: self.zscore_psd,
        }
    }

    fn tables(&self) -> Result<Vec<DimensionTable>> {
        match &self.tables {
            Some(p) => load_dimension_tables(p).with_context(|| format!("loading tables {}", p.display())),
            None => Ok(default_tables()),
        }
    }
}

fn open_corpus(dir: &Path, language: Language) -> Result<Corpus> {
    let corpus = Corpus::open(dir).with_context(|| format!("opening corpus {}", dir.display()))?;
    if corpus.manifest.language != language {
        bail!(
            "corpus {} is {}, not {language}",
            dir.display(),
            corpus.manifest.language
        );
    }
    Ok(corpus)
}

fn report_skipped(skipped: &[String]) {
    for s in skipped {
        log::warn!("skipped {s}");
    }
}

fn run_centroids(
    g: &Global,
    corpus: &Path,
    language: Language,
    out: &Path,
    cap: usize,
    max_total: Option<usize>,
    min_speakers: Option<usize>,
) -> Result<u8> {
    let tables = g.tables()?;
    let corpus = open_corpus(corpus, language)?;
    let mut sample = SampleConfig::for_language(language, g.seed);
    sample.cap = cap;
    sample.max_total = max_total;
    if let Some(m) = min_speakers {
        sample.min_speakers = m;
    }
    let ids = sample_corpus(&corpus.manifest, &sample)?;
    log::info!("sampled {} utterances", ids.len());
    let (bundles, skipped) = corpus.load_valid(Some(&ids));
    report_skipped(&skipped);
    let (set, warnings) = build_centroids(
        &bundles,
        &tables,
        &corpus.manifest.corpus_id,
        &CentroidConfig { cap },
    )?;
    for w in &warnings {
        log::warn!("{w}");
    }
    set.save(out)?;
    println!(
        "{} centroid pairs from {} utterances ({} speakers) -> {}",
        set.entries.len(),
        set.provenance.utterance_ids.len(),
        set.provenance.speaker_count,
        out.display()
    );
    if let Some(r) = set.provenance.lf_measured_ratio {
        println!("native long/short vowel ratio: {r:.3}");
    }
    Ok(if skipped.is_empty() && warnings.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

fn run_bank(
    corpus: &Path,
    language: Language,
    out: &Path,
    config: BankConfig,
) -> Result<u8> {
    let corpus = open_corpus(corpus, language)?;
    let (bundles, skipped) = corpus.load_valid(None);
    report_skipped(&skipped);
    let (bank, warnings) = build_reference_bank(&bundles, &corpus.manifest.corpus_id, &config)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    bank.save(out)?;
    println!(
        "{} utterance embeddings, {} prosodic vectors -> {}",
        bank.utterance_embeddings.nrows(),
        bank.prosodic_matrix.nrows(),
        out.display()
    );
    Ok(if skipped.is_empty() && warnings.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

fn finish_score(run: ScoreRun, inputs: &ScoreInputs) -> Result<u8> {
    let card = &run.scorecard;
    card.save(&inputs.out)?;
    if let Some(p) = &inputs.dump_utterances {
        let text = psp_core::json::to_string_pretty(&run.utterances)? + "\n";
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    print!("{}", card.render_table());
    for w in &card.warnings {
        log::warn!("{w}");
    }
    Ok(if card.is_partial() { EXIT_PARTIAL } else { EXIT_OK })
}

fn score_request<'a>(
    inputs: &'a ScoreInputs,
    tables: &'a [DimensionTable],
    floor: Option<&'a Scorecard>,
    options: ScoreOptions,
) -> ScoreRequest<'a> {
    ScoreRequest {
        system: inputs.system.as_deref(),
        corpus_dir: &inputs.corpus,
        language: inputs.language,
        centroids_dir: &inputs.centroids,
        refs_dir: &inputs.refs,
        tables,
        floor,
        options,
    }
}

fn run_validate(g: &Global, paths: &[PathBuf]) -> Result<u8> {
    let tables = g.tables()?;
    let mut loaded: Vec<(String, Result<UtteranceBundle, String>)> = Vec::new();
    for p in paths {
        if p.join(psp_core::interchange::bundle::CORPUS_MANIFEST).exists() {
            let corpus = Corpus::open(p)?;
            loaded.extend(
                corpus
                    .load_bundles(None)
                    .into_iter()
                    .map(|(id, b)| (id, b.map_err(|e| e.to_string()))),
            );
        } else {
            loaded.push((p.display().to_string(), UtteranceBundle::load(p).map_err(|e| e.to_string())));
        }
    }
    let mut n_bad = 0usize;
    for (label, b) in &loaded {
        let b = match b {
            Ok(b) => b,
            Err(e) => {
                n_bad += 1;
                println!("{label}: {e}");
                continue;
            }
        };
        let v = validate_bundle(b);
        if !v.is_empty() {
            n_bad += 1;
            for x in v {
                println!("{label}: {x}");
            }
            continue;
        }
        let lang_tables: Vec<DimensionTable> = tables_for(&tables, b.language).into_iter().cloned().collect();
        let unknown = unknown_graphemes(b, &lang_tables);
        if !unknown.is_empty() {
            println!("{label}: ok (warning: not in aligner vocabulary: {})", unknown.join(" "));
        }
    }
    println!("{} valid, {n_bad} invalid", loaded.len() - n_bad);
    Ok(if n_bad == 0 { EXIT_OK } else { EXIT_INVALID })
}

fn run(cli: Cli) -> Result<u8> {
    let g = &cli.global;
    g.options().bootstrap.validate()?;
    match &cli.command {
        Command::Centroids {
            corpus,
            language,
            out,
            cap,
            max_total,
            min_speakers,
        } => run_centroids(g, corpus, *language, out, *cap, *max_total, *min_speakers),
        Command::Bank {
            corpus,
            language,
            out,
            max_utterances,
            max_prosodic,
        } => run_bank(
            corpus,
            *language,
            out,
            BankConfig {
                max_utterances: *max_utterances,
                max_prosodic: *max_prosodic,
            },
        ),
        Command::Score { inputs, floor } => {
            let tables = g.tables()?;
            let floor = floor.as_ref().map(Scorecard::load).transpose()?;
            let run = cmd_score(&score_request(inputs, &tables, floor.as_ref(), g.options()))?;
            finish_score(run, inputs)
        }
        Command::Sanity { inputs } => {
            let tables = g.tables()?;
            let run = cmd_sanity(&score_request(inputs, &tables, None, g.options()))?;
            finish_score(run, inputs)
        }
        Command::Report {
            scorecards,
            format,
            out,
        } => {
            let format = match format {
                Format::Table => ReportFormat::Table,
                Format::Json => ReportFormat::Json,
                Format::Markdown => ReportFormat::Markdown,
            };
            let report = cmd_report(scorecards, format)?;
            let text = report.render(format);
            match out {
                Some(p) => std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            for w in &report.warnings {
                log::warn!("{w}");
            }
            Ok(if report.warnings.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
        }
        Command::Validate { paths } => run_validate(g, paths),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
