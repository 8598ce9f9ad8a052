//! Implementations of the pipeline subcommands. Every command prints one
//! machine-readable JSON document to stdout (or `--out`); progress and
//! human-oriented tables go to stderr.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use serde::Serialize;

use assertedit::corpus::{split_stats, DataFormat, Dataset, Tap};
use assertedit::editseq::{align, PairRecord};
use assertedit::eval;
use assertedit::lexer::{self, dedup_bag, TokenSeq};
use assertedit::model::{
    build_pairs, generate, load_checkpoint, load_pretrained, save_checkpoint, train, ModelParams,
    TrainingPair, Vocab,
};
use assertedit::retrieval::RetrievalIndex;

use crate::config::RunConfig;

/// Where a dataset lives and how it is laid out.
#[derive(Args)]
pub struct DatasetArgs {
    /// Directory holding `<split>.jsonl` or `<split>.{focal,assertion}.txt`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Dataset layout: `jsonl` or `text`. Defaults to the config value.
    #[arg(long)]
    pub format: Option<DataFormat>,
}

impl DatasetArgs {
    fn load(&self, cfg: &RunConfig) -> anyhow::Result<Dataset> {
        let format = self.format.unwrap_or(cfg.data_format);
        let (dataset, stats) = Dataset::load_dir(&self.dataset, format)?;
        eprintln!(
            "loaded {} TAPs from {} ({} rejected)",
            stats.loaded,
            self.dataset.display(),
            stats.rejected
        );
        dataset.validate()?;
        Ok(dataset)
    }
}

fn split_of<'a>(dataset: &'a Dataset, name: &str) -> anyhow::Result<&'a [Tap]> {
    dataset
        .split(name)
        .with_context(|| format!("unknown split `{name}` (expected train, validation, or test)"))
}

/// Loads `--index` rebound against the train split, or builds a fresh index.
fn index_for(
    cfg: &RunConfig,
    dataset: &Dataset,
    index_path: Option<&Path>,
) -> anyhow::Result<RetrievalIndex> {
    match index_path {
        Some(path) => Ok(RetrievalIndex::load(path, &dataset.train)?),
        None => Ok(RetrievalIndex::build(&dataset.train, cfg.coefficient)?),
    }
}

fn tokenize_query(raw: &str, pretokenized: bool) -> anyhow::Result<TokenSeq> {
    if pretokenized {
        Ok(raw.split_whitespace().map(str::to_string).collect())
    } else {
        Ok(lexer::tokenize(raw)?)
    }
}

fn read_token_lines(path: &Path, pretokenized: bool) -> anyhow::Result<Vec<TokenSeq>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(|line| tokenize_query(line, pretokenized))
        .collect()
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

// --- index ------------------------------------------------------------

#[derive(Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Split to index as the prototype corpus.
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Where to write the index file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct IndexSummary<'a> {
    path: &'a Path,
    split: &'a str,
    entries: usize,
    coefficient: &'a str,
}

pub fn index(cfg: &RunConfig, args: &IndexArgs) -> anyhow::Result<()> {
    let dataset = args.data.load(cfg)?;
    let taps = split_of(&dataset, &args.split)?;
    let index = RetrievalIndex::build(taps, cfg.coefficient)?;
    index.save(&args.out)?;
    emit_json(
        &IndexSummary {
            path: &args.out,
            split: &args.split,
            entries: index.len(),
            coefficient: cfg.coefficient.name(),
        },
        None,
    )
}

// --- retrieve ---------------------------------------------------------

#[derive(Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Previously saved index; rebound against the dataset's train split.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Focal-test source text to look up.
    #[arg(long, conflicts_with = "query_file")]
    pub query: Option<String>,
    /// File whose whole contents form the query.
    #[arg(long)]
    pub query_file: Option<PathBuf>,
    /// Treat the query as whitespace-separated tokens instead of source text.
    #[arg(long)]
    pub pretokenized: bool,
    /// TAP id to exclude from candidates (for in-corpus queries).
    #[arg(long)]
    pub exclude_id: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RetrieveOutput {
    query: TokenSeq,
    tap_id: u64,
    score: f64,
    retrieved_focal_test: TokenSeq,
    retrieved_assertion: TokenSeq,
}

pub fn retrieve(cfg: &RunConfig, args: &RetrieveArgs) -> anyhow::Result<()> {
    let dataset = args.data.load(cfg)?;
    let index = index_for(cfg, &dataset, args.index.as_deref())?;
    let raw = match (&args.query, &args.query_file) {
        (Some(q), _) => q.clone(),
        (None, Some(path)) => fs::read_to_string(path)
            .with_context(|| format!("reading query file {}", path.display()))?,
        (None, None) => anyhow::bail!("one of --query or --query-file is required"),
    };
    let tokens = tokenize_query(&raw, args.pretokenized)?;
    let hit = index.retrieve_top1(&dedup_bag(&tokens), args.exclude_id)?;
    emit_json(
        &RetrieveOutput {
            query: tokens,
            tap_id: hit.tap_id,
            score: hit.score,
            retrieved_focal_test: hit.retrieved_focal_test,
            retrieved_assertion: hit.retrieved_assertion,
        },
        args.out.as_deref(),
    )
}

// --- build-edits --------------------------------------------------------

#[derive(Args)]
pub struct BuildEditsArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Split to build edit scripts for.
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Output JSONL path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn build_edits(cfg: &RunConfig, args: &BuildEditsArgs) -> anyhow::Result<()> {
    let dataset = args.data.load(cfg)?;
    let taps = split_of(&dataset, &args.split)?;
    let index = index_for(cfg, &dataset, args.index.as_deref())?;
    // Queries drawn from the index's own corpus must not retrieve themselves.
    let exclude_self = args.split == "train";
    let mut lines = String::new();
    for tap in taps {
        let exclude = exclude_self.then_some(tap.id);
        let hit = index.retrieve_top1(&dedup_bag(&tap.focal_test), exclude)?;
        let record = PairRecord {
            id: tap.id,
            retrieved_id: hit.tap_id,
            score: hit.score,
            edits: align(&hit.retrieved_focal_test, &tap.focal_test),
        };
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }
    match &args.out {
        Some(path) => {
            fs::write(path, lines).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} edit scripts to {}", taps.len(), path.display());
        }
        None => print!("{lines}"),
    }
    Ok(())
}

// --- train --------------------------------------------------------------

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Where to write the trained model checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_train(cfg: &RunConfig, args: &TrainArgs) -> anyhow::Result<()> {
    let dataset = args.data.load(cfg)?;
    anyhow::ensure!(
        !dataset.train.is_empty(),
        "{}: train split is empty",
        args.data.dataset.display()
    );
    let seqs = dataset
        .train
        .iter()
        .flat_map(|t| [&t.focal_test, &t.assertion]);
    let vocab = Vocab::build(seqs, cfg.vocab_min_count, cfg.vocab_max_size);
    eprintln!("vocabulary: {} tokens", vocab.len());
    let index = index_for(cfg, &dataset, args.index.as_deref())?;
    let train_pairs = build_pairs(&dataset.train, &index, &vocab, cfg.max_len, true)?;
    let val_pairs: Vec<TrainingPair> = if dataset.validation.is_empty() {
        Vec::new()
    } else {
        build_pairs(&dataset.validation, &index, &vocab, cfg.max_len, false)?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::<f32>::init(cfg.dims(vocab.len()), cfg.freeze_embeddings, &mut rng)?;
    if let Some(path) = &cfg.pretrained_embeddings {
        let (table, found) = load_pretrained(path, &vocab, cfg.embed_dim, &mut rng)?;
        eprintln!(
            "pretrained embeddings: {}/{} vocabulary tokens covered",
            found,
            vocab.len()
        );
        params.token_embed = table;
    }
    eprintln!("training {} parameters", params.param_count());
    let (params, report) = train(params, &train_pairs, &val_pairs, cfg.train_config(), |s| {
        eprintln!(
            "epoch {:3}  train loss {:.4}  val perplexity {:.4}",
            s.epoch, s.train_loss, s.val_perplexity
        );
    })?;
    save_checkpoint(&args.checkpoint, &params, &vocab)?;
    eprintln!("checkpoint written to {}", args.checkpoint.display());
    emit_json(&report, args.out.as_deref())
}

// --- generate -----------------------------------------------------------

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Trained model checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Single focal-test query.
    #[arg(long, conflicts_with_all = ["query_file", "batch", "split"])]
    pub query: Option<String>,
    /// File whose whole contents form one query.
    #[arg(long, conflicts_with_all = ["batch", "split"])]
    pub query_file: Option<PathBuf>,
    /// File with one focal test per line; writes one assertion per line.
    #[arg(long, conflicts_with = "split")]
    pub batch: Option<PathBuf>,
    /// Generate for every TAP of a dataset split.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub pretokenized: bool,
    /// Prediction file path (required for --batch / --split runs).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct GenerateOutput {
    tokens: TokenSeq,
    text: String,
    score: f64,
    retrieved_id: u64,
    retrieval_score: f64,
}

#[derive(Serialize)]
struct BatchSummary<'a> {
    count: usize,
    out: &'a Path,
}

/// Retrieves a prototype for one query and decodes an assertion for it.
fn generate_one(
    params: &ModelParams<f32>,
    vocab: &Vocab,
    index: &RetrievalIndex,
    cfg: &RunConfig,
    query: &TokenSeq,
    exclude: Option<u64>,
) -> anyhow::Result<GenerateOutput> {
    let hit = index.retrieve_top1(&dedup_bag(query), exclude)?;
    let edits = align(&hit.retrieved_focal_test, query);
    let input = assertedit::model::build_input(&hit.retrieved_assertion, &edits, vocab, cfg.max_len)?;
    let gen = generate(params, vocab, &input, &cfg.gen_config())?;
    Ok(GenerateOutput {
        text: gen.tokens.join(" "),
        tokens: gen.tokens,
        score: gen.score,
        retrieved_id: hit.tap_id,
        retrieval_score: hit.score,
    })
}

pub fn run_generate(cfg: &RunConfig, args: &GenerateArgs) -> anyhow::Result<()> {
    let dataset = args.data.load(cfg)?;
    let (params, vocab) = load_checkpoint(&args.checkpoint)?;
    let index = index_for(cfg, &dataset, args.index.as_deref())?;

    // Single-query mode: JSON result on stdout.
    if args.query.is_some() || args.query_file.is_some() {
        let raw = match (&args.query, &args.query_file) {
            (Some(q), _) => q.clone(),
            (None, Some(path)) => fs::read_to_string(path)
                .with_context(|| format!("reading query file {}", path.display()))?,
            _ => unreachable!("guarded above"),
        };
        let tokens = tokenize_query(&raw, args.pretokenized)?;
        let output = generate_one(&params, &vocab, &index, cfg, &tokens, None)?;
        return emit_json(&output, args.out.as_deref());
    }

    // Batch mode: one assertion line per input line, in input order.
    let (queries, exclude_ids): (Vec<TokenSeq>, Vec<Option<u64>>) = match (&args.batch, &args.split)
    {
        (Some(path), None) => {
            let queries = read_token_lines(path, args.pretokenized)?;
            let n = queries.len();
            (queries, vec![None; n])
        }
        (None, Some(split)) => {
            let taps = split_of(&dataset, split)?;
            let exclude_self = split == "train";
            (
                taps.iter().map(|t| t.focal_test.clone()).collect(),
                taps.iter()
                    .map(|t| exclude_self.then_some(t.id))
                    .collect(),
            )
        }
        _ => anyhow::bail!("one of --query, --query-file, --batch, or --split is required"),
    };
    let out = args
        .out
        .as_deref()
        .context("--out is required for batch generation")?;
    let mut lines = String::new();
    for (query, exclude) in queries.iter().zip(exclude_ids) {
        let output = generate_one(&params, &vocab, &index, cfg, query, exclude)?;
        lines.push_str(&output.text);
        lines.push('\n');
    }
    fs::write(out, lines).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} predictions to {}", queries.len(), out.display());
    emit_json(
        &BatchSummary {
            count: queries.len(),
            out,
        },
        None,
    )
}

// --- evaluate -----------------------------------------------------------

#[derive(Args)]
pub struct EvaluateArgs {
    /// Prediction file: one assertion per line, tokens space-separated.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Reference file in the same line format.
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// Dataset whose split supplies references when --references is absent.
    #[arg(long, requires = "split")]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<DataFormat>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> anyhow::Result<()> {
    let predictions = read_token_lines(&args.predictions, true)?;
    let references: Vec<TokenSeq> = match (&args.references, &args.dataset) {
        (Some(path), _) => read_token_lines(path, true)?,
        (None, Some(dir)) => {
            let data = DatasetArgs {
                dataset: dir.clone(),
                format: args.format,
            };
            let dataset = data.load(cfg)?;
            let split = args.split.as_deref().unwrap_or("test");
            split_of(&dataset, split)?
                .iter()
                .map(|t| t.assertion.clone())
                .collect()
        }
        (None, None) => anyhow::bail!("one of --references or --dataset is required"),
    };
    let report = eval::evaluate(&predictions, &references)?;
    eprint!("{}", eval::render_text(&report));
    emit_json(&report, args.out.as_deref())
}

// --- analyze ------------------------------------------------------------

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Split to analyze.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    split: String,
    coefficient: String,
    total: usize,
    /// Edit distance between each retrieved assertion and the ground truth.
    edit_distance: std::collections::BTreeMap<String, usize>,
    stats: assertedit::corpus::SplitStats,
}

pub fn analyze(cfg: &RunConfig, args: &AnalyzeArgs) -> anyhow::Result<()> {
    let dataset = args.data.load(cfg)?;
    let taps = split_of(&dataset, &args.split)?;
    let index = index_for(cfg, &dataset, args.index.as_deref())?;
    let exclude_self = args.split == "train";
    let mut retrieved = Vec::with_capacity(taps.len());
    let mut truths = Vec::with_capacity(taps.len());
    for tap in taps {
        let exclude = exclude_self.then_some(tap.id);
        let hit = index.retrieve_top1(&dedup_bag(&tap.focal_test), exclude)?;
        retrieved.push(hit.retrieved_assertion);
        truths.push(tap.assertion.clone());
    }
    let report = AnalyzeReport {
        split: args.split.clone(),
        coefficient: cfg.coefficient.name().to_string(),
        total: taps.len(),
        edit_distance: eval::edit_distance_histogram(&retrieved, &truths)?,
        stats: split_stats(taps),
    };
    emit_json(&report, args.out.as_deref())
}
