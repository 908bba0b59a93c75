//! `mbir`: pipeline driver for microblog retrieval experiments.
//!
//! One subcommand per stage: `prep`, `train`, `search`, `baseline-lm`,
//! `baseline-patterns`, `eval`, `transfer`, and `model inspect`. Every
//! command is a pure function of (config, input files, seed); each output
//! file gets a `.meta` sidecar recording the resolved config hash and seed.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
//! failure.

mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{ArgAction, Args, Parser, Subcommand};

use config::RunConfig;
use mbir::corpus::{self, DedupConfig, InputFormat, ProcessedTweet, Tweet};
use mbir::models::{EmbeddingModel, ModelKind};
use mbir::retrieval::{self, ExpansionConfig, Query, RankedList};
use mbir::stopwords::Stopwords;
use mbir::vocab::Vocabulary;
use mbir::{baselines, eval, persist, ErrorClass};

#[derive(Parser)]
#[command(
    name = "mbir",
    about = "Microblog retrieval: embeddings, baselines, evaluation, transfer",
    version
)]
struct Cli {
    /// Config file (flat key = value); command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for read-only batch stages (1 = fully deterministic
    /// sequential mode; training is always single-threaded).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Random seed (initialization, pattern sampling).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest raw tweets, preprocess, near-duplicate dedup, write the
    /// processed corpus.
    Prep(PrepArgs),
    /// Build the vocabulary, train an embedding model, save it.
    Train(TrainArgs),
    /// Rank a processed corpus against a query, optionally with
    /// embedding-based expansion.
    Search(SearchArgs),
    /// Query-likelihood baseline, optionally with Rocchio expansion.
    BaselineLm(BaselineLmArgs),
    /// Pattern-file matching baseline over raw tweets.
    BaselinePatterns(BaselinePatternsArgs),
    /// Score a run file against qrels.
    Eval(EvalArgs),
    /// Warm-start from a pre-trained model, re-train, then search + eval.
    Transfer(TransferArgs),
    /// Model-file utilities.
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Dump a model file's header fields.
    Inspect { path: PathBuf },
}

#[derive(Args)]
struct PrepArgs {
    /// Raw corpus (JSONL {"id","text"} or TSV id<TAB>text), or an already
    /// processed corpus (passes through to dedup).
    #[arg(long)]
    input: Option<PathBuf>,
    /// jsonl | tsv (default: sniffed from the first line).
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Jaccard near-duplicate threshold.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Processed corpus (from `prep`).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// w2v | wc | wcal | wca | wcind.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch mean loss log (default: <out>.loss.tsv).
    #[arg(long)]
    loss_log: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    d_wrd: Option<usize>,
    #[arg(long)]
    d_chr: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    lr_word: Option<f64>,
    #[arg(long)]
    lr_char: Option<f64>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    min_count: Option<u64>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Query label ("need", "avail", or one configured via query.<label>).
    #[arg(long, default_value = "need")]
    label: String,
    /// Explicit query terms (overrides the label's configured terms).
    #[arg(long)]
    query: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Truncate the run file to the top K entries.
    #[arg(long)]
    topk: Option<usize>,
    /// Expand the query from its top-ranked tweets and re-rank.
    #[arg(long, action = ArgAction::SetTrue)]
    expand: bool,
    /// Where to write the chosen expansion terms (default:
    /// <out>.expansion.txt).
    #[arg(long)]
    expansion_out: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Run tag in the TREC output.
    #[arg(long, default_value = "mbir")]
    tag: String,
}

#[derive(Args)]
struct BaselineLmArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "need")]
    label: String,
    #[arg(long)]
    query: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    topk: Option<usize>,
    /// Rocchio tf-idf expansion over the top-ranked tweets, then re-rank.
    #[arg(long, action = ArgAction::SetTrue)]
    rocchio: bool,
    #[arg(long)]
    expansion_out: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value = "lm")]
    tag: String,
}

#[derive(Args)]
struct BaselinePatternsArgs {
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// Raw corpus; patterns match the original tweet text.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value = "need")]
    label: String,
    /// Sample size when more tweets match.
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "patterns")]
    tag: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Treat the run as an unordered id set (pattern baselines); MAP is
    /// reported as "--".
    #[arg(long, action = ArgAction::SetTrue)]
    set: bool,
    /// Machine-readable report (measure<TAB>query<TAB>value).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TransferArgs {
    /// Pre-trained source model.
    #[arg(long)]
    model_in: Option<PathBuf>,
    /// Processed target corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Re-training epochs on the target corpus (the reference protocol uses
    /// 1 and 5).
    #[arg(long)]
    epochs: Option<usize>,
    /// target-only | union.
    #[arg(long)]
    vocab_policy: Option<String>,
    /// Expected model kind (errors when the file holds a different kind).
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Query labels to search and evaluate (repeatable).
    #[arg(long = "label", action = ArgAction::Append)]
    labels: Vec<String>,
    #[arg(long)]
    run_out: Option<PathBuf>,
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value = "transfer")]
    tag: String,
}

fn main() {
    // Die quietly when a downstream pipe closes (e.g. `mbir ... | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version arrive here as "errors" with exit 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code(&err));
        }
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<mbir::Error>() {
        Some(e) => match e.class() {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numeric => 3,
        },
        None => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    init_threads(cfg.threads.unwrap_or(1))?;

    match cli.command {
        Command::Prep(args) => cmd_prep(cfg, args),
        Command::Train(args) => cmd_train(cfg, args),
        Command::Search(args) => cmd_search(cfg, args),
        Command::BaselineLm(args) => cmd_baseline_lm(cfg, args),
        Command::BaselinePatterns(args) => cmd_baseline_patterns(cfg, args),
        Command::Eval(args) => cmd_eval(cfg, args),
        Command::Transfer(args) => cmd_transfer(cfg, args),
        Command::Model(ModelCommand::Inspect { path }) => cmd_inspect(&path),
    }
}

fn init_threads(n: usize) -> Result<()> {
    let n = n.max(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| anyhow!("thread pool setup failed: {e}"))
}

// ----------------------------------------------------------------------
// Shared plumbing
// ----------------------------------------------------------------------

fn require(path: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.ok_or_else(|| anyhow!("missing required {what} (flag or config key)"))
}

fn must_exist(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!(mbir::Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        });
    }
    Ok(())
}

fn load_stopwords(path: &Option<PathBuf>) -> Result<Stopwords> {
    match path {
        Some(p) => {
            must_exist(p)?;
            Ok(Stopwords::from_path(p)?)
        }
        None => Ok(Stopwords::default_english()),
    }
}

fn load_processed_corpus(path: &Path) -> Result<Vec<ProcessedTweet>> {
    must_exist(path)?;
    if !corpus::looks_processed(path)? {
        bail!(
            "{} is not a processed corpus; run `mbir prep` first",
            path.display()
        );
    }
    Ok(corpus::load_processed(path)?)
}

fn load_raw_corpus(path: &Path, format: &Option<String>) -> Result<Vec<Tweet>> {
    must_exist(path)?;
    let fmt = match format.as_deref() {
        Some("jsonl") => InputFormat::Jsonl,
        Some("tsv") => InputFormat::Tsv,
        Some(other) => bail!("unknown format '{other}' (expected jsonl or tsv)"),
        None => sniff_format(path)?,
    };
    Ok(corpus::ingest(path, fmt)?.tweets)
}

fn sniff_format(path: &Path) -> Result<InputFormat> {
    let text = std::fs::read_to_string(path).map_err(|source| mbir::Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        return Ok(if line.trim_start().starts_with('{') {
            InputFormat::Jsonl
        } else {
            InputFormat::Tsv
        });
    }
    Ok(InputFormat::Jsonl)
}

/// Run query terms through the same normalization pipeline as the corpus.
fn preprocess_query(label: &str, terms: &[String], stopwords: &Stopwords) -> Result<Query> {
    let fake = Tweet {
        id: "query".into(),
        text: terms.join(" "),
        ingest_rank: 0,
    };
    let processed = corpus::preprocess(&fake, stopwords, mbir::stem::stem);
    if processed.tokens.is_empty() {
        bail!("query '{label}' is empty after preprocessing");
    }
    Ok(Query::new(label, processed.tokens))
}

fn resolve_query(
    cfg: &RunConfig,
    label: &str,
    explicit: &Option<String>,
    stopwords: &Stopwords,
) -> Result<Query> {
    let terms: Vec<String> = match explicit {
        Some(q) => q.split_whitespace().map(str::to_string).collect(),
        None => cfg
            .query_terms(label)
            .ok_or_else(|| anyhow!("no query configured for label '{label}'"))?,
    };
    preprocess_query(label, &terms, stopwords)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Sidecar metadata next to every output file.
fn write_meta(out: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let meta = format!(
        "command={command}\nconfig_sha256={}\nseed={}\n",
        cfg.hash(),
        cfg.seed()
    );
    let mut path = out.as_os_str().to_owned();
    path.push(".meta");
    write_file(Path::new(&path), &meta)
}

fn truncated(mut rl: RankedList, topk: Option<usize>) -> RankedList {
    if let Some(k) = topk {
        rl.entries.truncate(k);
    }
    rl
}

fn print_report_table(rows: &[(String, eval::EvalReport)]) {
    println!(
        "{:<24} {:>8} {:>8} {:>8} {:>8}",
        "Query", "Prec", "Recall", "F-score", "MAP"
    );
    for (label, r) in rows {
        let map = match r.map {
            Some(m) => format!("{m:.4}"),
            None => "--".to_string(),
        };
        println!(
            "{:<24} {:>8.4} {:>8.4} {:>8.4} {:>8}",
            label, r.precision_at_100, r.recall_at_1000, r.f_score, map
        );
    }
}

// ----------------------------------------------------------------------
// Commands
// ----------------------------------------------------------------------

fn cmd_prep(mut cfg: RunConfig, args: PrepArgs) -> Result<()> {
    if let Some(v) = args.threshold {
        cfg.jaccard_threshold = Some(v);
    }
    if let Some(p) = &args.stopwords {
        cfg.stopwords = Some(p.clone());
    }
    if let Some(p) = &args.input {
        cfg.corpus = Some(p.clone());
    }
    let input = require(cfg.corpus.clone(), "input corpus")?;
    must_exist(&input)?;

    let dedup_cfg = DedupConfig {
        jaccard_threshold: cfg.jaccard_threshold.unwrap_or(0.7),
        ..DedupConfig::default()
    };
    let processed = if corpus::looks_processed(&input)? {
        corpus::load_processed(&input)?
    } else {
        let stopwords = load_stopwords(&cfg.stopwords)?;
        let raw = load_raw_corpus(&input, &args.format)?;
        corpus::preprocess_corpus(&corpus::Corpus { tweets: raw }, &stopwords)
    };
    let n_in = processed.len();
    let kept = corpus::dedup(&processed, &dedup_cfg)?;
    corpus::save_processed(&args.output, &kept)?;
    write_meta(&args.output, "prep", &cfg)?;
    println!("{n_in} in, {} retained", kept.len());
    Ok(())
}

fn cmd_train(mut cfg: RunConfig, args: TrainArgs) -> Result<()> {
    if let Some(v) = args.kind {
        cfg.kind = Some(v);
    }
    if let Some(v) = args.epochs {
        cfg.epochs = Some(v);
    }
    if let Some(v) = args.d_wrd {
        cfg.d_wrd = Some(v);
    }
    if let Some(v) = args.d_chr {
        cfg.d_chr = Some(v);
    }
    if let Some(v) = args.window {
        cfg.window = Some(v);
    }
    if let Some(v) = args.lr_word {
        cfg.lr_word = Some(v);
    }
    if let Some(v) = args.lr_char {
        cfg.lr_char = Some(v);
    }
    if let Some(v) = args.optimizer {
        cfg.optimizer = Some(v);
    }
    if let Some(v) = args.min_count {
        cfg.min_count = Some(v);
    }
    if let Some(p) = &args.corpus {
        cfg.corpus = Some(p.clone());
    }
    if let Some(p) = &args.out {
        cfg.model_out = Some(p.clone());
    }

    let corpus_path = require(cfg.corpus.clone(), "corpus")?;
    let model_out = require(cfg.model_out.clone(), "model output path")?;
    let corpus = load_processed_corpus(&corpus_path)?;

    let kind = cfg.model_kind()?;
    let mut tc = cfg.training_config()?;
    tc.seed = cfg.seed();
    let vocab = Vocabulary::build(&corpus, cfg.min_count.unwrap_or(5))?;
    println!(
        "vocab: {} words, {} chars; kind {kind}; epochs {}",
        vocab.n_words(),
        vocab.n_chars(),
        tc.epochs
    );
    let mut model = EmbeddingModel::new(kind, tc, vocab)?;
    let log = model.train(&corpus)?;
    persist::save(&model, &model_out)?;
    write_meta(&model_out, "train", &cfg)?;

    let loss_path = args
        .loss_log
        .unwrap_or_else(|| PathBuf::from(format!("{}.loss.tsv", model_out.display())));
    let mut lines = String::new();
    for (epoch, loss) in log.iter().enumerate() {
        lines.push_str(&format!("{epoch}\t{loss}\n"));
        println!("epoch {epoch}: mean loss {loss:.6}");
    }
    write_file(&loss_path, &lines)?;
    write_meta(&loss_path, "train", &cfg)?;
    println!("model written to {}", model_out.display());
    Ok(())
}

fn cmd_search(mut cfg: RunConfig, args: SearchArgs) -> Result<()> {
    if let Some(p) = &args.model {
        cfg.model_in = Some(p.clone());
    }
    if let Some(p) = &args.corpus {
        cfg.corpus = Some(p.clone());
    }
    if let Some(p) = &args.out {
        cfg.run_out = Some(p.clone());
    }
    if let Some(p) = &args.stopwords {
        cfg.stopwords = Some(p.clone());
    }

    let model_path = require(cfg.model_in.clone(), "model")?;
    let corpus_path = require(cfg.corpus.clone(), "corpus")?;
    let out = require(cfg.run_out.clone(), "run output path")?;
    must_exist(&model_path)?;

    let model = persist::restore(&model_path)?;
    let corpus = load_processed_corpus(&corpus_path)?;
    let stopwords = load_stopwords(&cfg.stopwords)?;
    let query = resolve_query(&cfg, &args.label, &args.query, &stopwords)?;

    let base = retrieval::rank(&model, &corpus, &query)?;
    let final_run = if args.expand {
        let exp_cfg = ExpansionConfig {
            k_top_docs: cfg.expand_k.unwrap_or(10),
            p_terms: cfg.expand_p.unwrap_or(3),
            exclude_query_terms: cfg.expand_exclude.unwrap_or(true),
        };
        let expansion =
            retrieval::expand_query_embedding(&model, &corpus, &query, &base, &exp_cfg)?;
        if expansion.shortfall {
            eprintln!(
                "warning: only {} expansion terms available (wanted {})",
                expansion.added.len(),
                exp_cfg.p_terms
            );
        }
        let exp_path = args
            .expansion_out
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.expansion.txt", out.display())));
        let mut listing = expansion.added.join("\n");
        listing.push('\n');
        write_file(&exp_path, &listing)?;
        write_meta(&exp_path, "search", &cfg)?;
        println!("expansion terms: {}", expansion.added.join(", "));
        if expansion.added.is_empty() {
            base
        } else {
            retrieval::rank(&model, &corpus, &expansion.query)?
        }
    } else {
        base
    };

    let final_run = truncated(final_run, args.topk);
    retrieval::write_trec_run(&out, &final_run, &args.tag)?;
    write_meta(&out, "search", &cfg)?;
    println!(
        "run written to {} ({} entries)",
        out.display(),
        final_run.entries.len()
    );
    Ok(())
}

fn cmd_baseline_lm(mut cfg: RunConfig, args: BaselineLmArgs) -> Result<()> {
    if let Some(v) = args.mu {
        cfg.mu = Some(v);
    }
    if let Some(p) = &args.corpus {
        cfg.corpus = Some(p.clone());
    }
    if let Some(p) = &args.out {
        cfg.run_out = Some(p.clone());
    }
    if let Some(p) = &args.stopwords {
        cfg.stopwords = Some(p.clone());
    }

    let corpus_path = require(cfg.corpus.clone(), "corpus")?;
    let out = require(cfg.run_out.clone(), "run output path")?;
    let corpus = load_processed_corpus(&corpus_path)?;
    let stopwords = load_stopwords(&cfg.stopwords)?;
    let query = resolve_query(&cfg, &args.label, &args.query, &stopwords)?;

    let lm_cfg = baselines::LmConfig {
        mu: cfg.mu.unwrap_or(2500.0),
        ..baselines::LmConfig::default()
    };
    let base = baselines::lm_rank(&corpus, &query, &lm_cfg)?;
    let final_run = if args.rocchio {
        let r_cfg = baselines::RocchioConfig {
            k_top_docs: cfg.rocchio_k.unwrap_or(10),
            p_terms: cfg.rocchio_p.unwrap_or(3),
        };
        let (expanded, added) = baselines::rocchio_expand(&corpus, &query, &base, &r_cfg)?;
        let exp_path = args
            .expansion_out
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.expansion.txt", out.display())));
        let mut listing = added.join("\n");
        listing.push('\n');
        write_file(&exp_path, &listing)?;
        write_meta(&exp_path, "baseline-lm", &cfg)?;
        println!("rocchio terms: {}", added.join(", "));
        if added.is_empty() {
            base
        } else {
            baselines::lm_rank(&corpus, &expanded, &lm_cfg)?
        }
    } else {
        base
    };

    let final_run = truncated(final_run, args.topk);
    retrieval::write_trec_run(&out, &final_run, &args.tag)?;
    write_meta(&out, "baseline-lm", &cfg)?;
    println!(
        "run written to {} ({} entries)",
        out.display(),
        final_run.entries.len()
    );
    Ok(())
}

fn cmd_baseline_patterns(mut cfg: RunConfig, args: BaselinePatternsArgs) -> Result<()> {
    if let Some(p) = &args.patterns {
        cfg.patterns = Some(p.clone());
    }
    if let Some(p) = &args.corpus {
        cfg.corpus = Some(p.clone());
    }
    if let Some(p) = &args.out {
        cfg.run_out = Some(p.clone());
    }
    if let Some(v) = args.cap {
        cfg.pattern_cap = Some(v);
    }

    let patterns_path = require(cfg.patterns.clone(), "pattern file")?;
    let corpus_path = require(cfg.corpus.clone(), "corpus")?;
    let out = require(cfg.run_out.clone(), "output path")?;
    must_exist(&patterns_path)?;
    must_exist(&corpus_path)?;
    if corpus::looks_processed(&corpus_path)? {
        bail!("patterns match raw tweet text; pass the raw corpus, not a processed one");
    }

    let ps = baselines::PatternSet::load(&patterns_path)?;
    let corpus = load_raw_corpus(&corpus_path, &args.format)?;
    let cap = cfg.pattern_cap.unwrap_or(1000);
    let (total_matched, ids) = baselines::pattern_match_counted(&ps, &corpus, cap, cfg.seed());
    let run = baselines::match_set_as_run(&args.label, &ids);
    retrieval::write_trec_run(&out, &run, &args.tag)?;
    write_meta(&out, "baseline-patterns", &cfg)?;
    println!(
        "{} patterns matched {total_matched} tweets; emitted {} (cap {cap}, seed {})",
        ps.patterns.len(),
        ids.len(),
        cfg.seed()
    );
    Ok(())
}

fn cmd_eval(mut cfg: RunConfig, args: EvalArgs) -> Result<()> {
    if let Some(p) = &args.run {
        cfg.run_out = Some(p.clone());
    }
    if let Some(p) = &args.qrels {
        cfg.qrels = Some(p.clone());
    }
    let run_path = require(cfg.run_out.clone(), "run file")?;
    let qrels_path = require(cfg.qrels.clone(), "qrels file")?;
    must_exist(&run_path)?;
    must_exist(&qrels_path)?;

    let runs = retrieval::read_trec_run(&run_path)?;
    let qrels = eval::Qrels::from_path(&qrels_path)?;
    let empty = BTreeSet::new();
    let mut rows = Vec::new();
    let mut tsv = String::new();
    for rl in &runs {
        let relevant = qrels.relevant(&rl.label).unwrap_or(&empty);
        let report = if args.set {
            let ids: BTreeSet<String> = rl.entries.iter().map(|(id, _)| id.clone()).collect();
            eval::evaluate_set(&ids, relevant)
        } else {
            eval::evaluate_ranked(rl, relevant)?
        };
        tsv.push_str(&report.to_tsv(&rl.label));
        rows.push((rl.label.clone(), report));
    }
    print_report_table(&rows);
    if let Some(out) = &args.out {
        write_file(out, &tsv)?;
        write_meta(out, "eval", &cfg)?;
    }
    Ok(())
}

fn cmd_transfer(mut cfg: RunConfig, args: TransferArgs) -> Result<()> {
    if let Some(p) = &args.model_in {
        cfg.model_in = Some(p.clone());
    }
    if let Some(p) = &args.corpus {
        cfg.corpus = Some(p.clone());
    }
    if let Some(p) = &args.model_out {
        cfg.model_out = Some(p.clone());
    }
    if let Some(p) = &args.qrels {
        cfg.qrels = Some(p.clone());
    }
    if let Some(p) = &args.run_out {
        cfg.run_out = Some(p.clone());
    }
    if let Some(p) = &args.stopwords {
        cfg.stopwords = Some(p.clone());
    }
    if let Some(v) = args.epochs {
        cfg.epochs = Some(v);
    }
    if let Some(k) = &args.kind {
        cfg.kind = Some(k.clone());
    }

    let model_in = require(cfg.model_in.clone(), "source model")?;
    let corpus_path = require(cfg.corpus.clone(), "target corpus")?;
    let model_out = require(cfg.model_out.clone(), "model output path")?;
    let run_out = require(cfg.run_out.clone(), "run output path")?;
    let qrels_path = require(cfg.qrels.clone(), "qrels")?;
    must_exist(&model_in)?;
    must_exist(&qrels_path)?;

    let corpus = load_processed_corpus(&corpus_path)?;
    let plan = persist::TransferPlan {
        source_model: model_in,
        retrain_epochs: cfg.epochs.unwrap_or(1),
        vocab_policy: match args.vocab_policy.as_deref() {
            Some(s) => persist::VocabPolicy::parse(s)?,
            None => persist::VocabPolicy::TargetOnly,
        },
    };
    let requested_kind = match &args.kind {
        Some(k) => Some(ModelKind::parse(k)?),
        None => None,
    };
    let (model, log) = persist::warm_start(&plan, &corpus, requested_kind, cfg.seed)?;
    for (epoch, loss) in log.iter().enumerate() {
        println!("re-train epoch {epoch}: mean loss {loss:.6}");
    }
    persist::save(&model, &model_out)?;
    write_meta(&model_out, "transfer", &cfg)?;

    let stopwords = load_stopwords(&cfg.stopwords)?;
    let labels = if args.labels.is_empty() {
        vec!["need".to_string(), "avail".to_string()]
    } else {
        args.labels.clone()
    };
    let qrels = eval::Qrels::from_path(&qrels_path)?;
    let empty = BTreeSet::new();
    let mut run_text = String::new();
    let mut tsv = String::new();
    let mut rows = Vec::new();
    for label in &labels {
        let query = resolve_query(&cfg, label, &None, &stopwords)?;
        let rl = retrieval::rank(&model, &corpus, &query)?;
        run_text.push_str(&rl.to_trec(&args.tag));
        let report = eval::evaluate_ranked(&rl, qrels.relevant(label).unwrap_or(&empty))?;
        tsv.push_str(&report.to_tsv(label));
        rows.push((label.clone(), report));
    }
    write_file(&run_out, &run_text)?;
    write_meta(&run_out, "transfer", &cfg)?;
    let report_out = args
        .report_out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.report.tsv", run_out.display())));
    write_file(&report_out, &tsv)?;
    write_meta(&report_out, "transfer", &cfg)?;
    print_report_table(&rows);
    println!(
        "transfer complete: model {}, run {}, report {}",
        model_out.display(),
        run_out.display(),
        report_out.display()
    );
    Ok(())
}

fn cmd_inspect(path: &Path) -> Result<()> {
    must_exist(path)?;
    let info = persist::inspect(path)?;
    println!("file            {}", path.display());
    println!("bytes           {}", info.file_bytes);
    println!("version         {}", info.version);
    println!("kind            {}", info.kind);
    println!("d_wrd           {}", info.config.d_wrd);
    println!("d_chr           {}", info.config.d_chr);
    println!("window          {}", info.config.window);
    println!("lr_word         {}", info.config.lr_word);
    println!("lr_char         {}", info.config.lr_char);
    println!(
        "optimizer       {}",
        match info.config.optimizer {
            mbir::optim::OptimKind::Sgd => "sgd",
            mbir::optim::OptimKind::Adam => "adam",
        }
    );
    println!("adam_beta1      {}", info.config.adam_beta1);
    println!("adam_beta2      {}", info.config.adam_beta2);
    println!("adam_eps        {}", info.config.adam_eps);
    println!("epochs          {}", info.config.epochs);
    println!("seed            {}", info.config.seed);
    println!("words           {}", info.n_words);
    println!("chars           {}", info.n_chars);
    println!("checksum        {}", info.checksum_hex);
    for (name, rows, cols) in &info.tensors {
        println!("tensor          {name} [{rows} x {cols}]");
    }
    Ok(())
}
