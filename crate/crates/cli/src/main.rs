use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vocab_forge::dataset::{build_dataset, emit_dataset, DatasetConfig};
use vocab_forge::metrics::{evaluate_run, prediction_files_in, Metric};
use vocab_forge::mlm::{run_bench, BenchConfig};
use vocab_forge::pipeline::{read_table, run_pipeline, PipelineConfig, STAGES};
use vocab_forge::tokenizer::{TokenizerModel, UnigramTrainer};
use vocab_forge::vocab::{
    count_usage, estimate_model_size, extend_embeddings, merge_models, prune, prune_model,
    EmbeddingMatrix, InitInterp, ModelShape, UsageCounts, Vocabulary,
};
use vocab_forge::{Error, Result};

#[derive(Parser)]
#[command(name = "vocab-forge", version, about = "Vocabulary adaptation and wiki dataset toolkit", propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a unigram tokenizer on a line-per-sentence corpus.
    TrainTokenizer(TrainArgs),
    /// Merge addition tokenizers into a base tokenizer.
    MergeVocab(MergeArgs),
    /// Append Gaussian rows to an embedding matrix for a merged vocabulary.
    ExtendEmb(ExtendArgs),
    /// Count token-id occurrences over corpora.
    CountUsage(UsageArgs),
    /// Drop never-used tokens from a vocabulary and its embeddings.
    Prune(PruneArgs),
    /// Estimate parameter count and size of an encoder with an MLM head.
    EstimateSize(SizeArgs),
    /// Build a labeled classification dataset from wiki dumps.
    BuildDataset(DatasetArgs),
    /// Score per-language prediction files.
    Evaluate(EvalArgs),
    /// Time a toy forward pass at two vocabulary sizes.
    Bench(BenchArgs),
    /// Run the configured stages end to end.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    vocab_size: usize,
    #[arg(long, default_value_t = 4.0)]
    seed_multiplier: f64,
    #[arg(long)]
    byte_fallback: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(long)]
    base: PathBuf,
    /// Addition models, appended in the order given.
    #[arg(long = "add", required = true, num_args = 1..)]
    additions: Vec<PathBuf>,
    #[arg(long)]
    out_model: PathBuf,
    #[arg(long)]
    out_vocab: PathBuf,
}

#[derive(Args)]
struct ExtendArgs {
    /// Existing matrix for the base vocabulary.
    #[arg(long, conflicts_with_all = ["base_vocab", "dim", "base_seed"])]
    matrix: Option<PathBuf>,
    /// Draw a random base matrix for this vocabulary instead of `--matrix`.
    #[arg(long, requires_all = ["dim", "base_seed"])]
    base_vocab: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Merged vocabulary the output must cover.
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Interp::Variance)]
    init_interp: Interp,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Interp {
    Variance,
    Stddev,
}

impl From<Interp> for InitInterp {
    fn from(i: Interp) -> Self {
        match i {
            Interp::Variance => InitInterp::Variance,
            Interp::Stddev => InitInterp::StdDev,
        }
    }
}

#[derive(Args)]
struct UsageArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    usage: PathBuf,
    /// Tokenizer to prune alongside the vocabulary.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Base,
    Large,
}

#[derive(Args)]
struct SizeArgs {
    #[arg(long)]
    vocab_size: u64,
    #[arg(long, value_enum, default_value_t = Shape::Base)]
    shape: Shape,
    #[arg(long)]
    hidden: Option<u64>,
    #[arg(long)]
    layers: Option<u64>,
    #[arg(long)]
    heads: Option<u64>,
    #[arg(long)]
    bytes_per_param: Option<u64>,
    /// Also report the size ratio against this vocabulary size.
    #[arg(long)]
    compare_vocab: Option<u64>,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    pages: Option<PathBuf>,
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// `key=value` config override; repeatable.
    #[arg(long = "set")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of `<lang>.tsv` files with `true<TAB>predicted` lines.
    #[arg(long, visible_alias = "pred-dir")]
    predictions: PathBuf,
    #[arg(long, default_value = "weighted")]
    metric: String,
    /// Comma-separated label universe; defaults to the ten target categories.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, visible_alias = "v-large")]
    vocab_large: usize,
    #[arg(long, visible_alias = "v-small")]
    vocab_small: usize,
    #[arg(long, visible_alias = "d", default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, visible_alias = "seq", default_value_t = 128)]
    seq_len: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// `key=value` config override with dotted keys; repeatable.
    #[arg(long = "set")]
    overrides: Vec<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(STAGES))]
    from_stage: Option<String>,
}

/// Missing inputs are reported as validation errors, before any work.
fn require<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(Error::Validation(format!("missing input {}", p.display())));
        }
    }
    Ok(())
}

fn read_lines(paths: &[PathBuf]) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        lines.extend(text.lines().map(String::from));
    }
    Ok(lines)
}

fn write_or_print(out: Option<&Path>, json: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, format!("{json}\n")).map_err(|e| Error::io(p, e)),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.starts_with("UNIGRAM ") {
        let model = TokenizerModel::from_text(&text, &path.display().to_string())?;
        return Ok(Vocabulary::from_model(&model));
    }
    Vocabulary::from_text(&text, &path.display().to_string())
}

fn train_tokenizer(a: TrainArgs) -> Result<()> {
    require(&a.corpus)?;
    let model = UnigramTrainer::new(a.vocab_size, a.seed_multiplier)
        .with_byte_fallback(a.byte_fallback)
        .train(read_lines(&a.corpus)?)?;
    model.save(&a.out)?;
    println!("trained {} pieces -> {}", model.len(), a.out.display());
    Ok(())
}

fn merge_vocab(a: MergeArgs) -> Result<()> {
    require(std::iter::once(&a.base).chain(&a.additions))?;
    let base = TokenizerModel::load(&a.base)?;
    let additions = a
        .additions
        .iter()
        .map(TokenizerModel::load)
        .collect::<Result<Vec<_>>>()?;
    let (model, vocab) = merge_models(&base, &additions)?;
    model.save(&a.out_model)?;
    vocab.save(&a.out_vocab)?;
    println!(
        "base {} + appended {} = merged {}",
        vocab.base_len(),
        vocab.len() - vocab.base_len(),
        vocab.len()
    );
    Ok(())
}

fn extend_emb(a: ExtendArgs) -> Result<()> {
    require(a.matrix.iter().chain(&a.base_vocab).chain([&a.vocab]))?;
    let matrix = match (&a.matrix, &a.base_vocab) {
        (Some(m), _) => EmbeddingMatrix::load(m)?,
        (None, Some(v)) => EmbeddingMatrix::random(
            &load_vocab(v)?,
            a.dim.expect("required by clap"),
            InitInterp::PARAMETER,
            a.base_seed.expect("required by clap"),
        )?,
        (None, None) => {
            return Err(Error::Input("either --matrix or --base-vocab is required".into()))
        }
    };
    let vocab = load_vocab(&a.vocab)?;
    let out = extend_embeddings(&matrix, &vocab, a.seed, a.init_interp.into())?;
    out.save(&a.out)?;
    println!("{} rows -> {} rows", matrix.rows(), out.rows());
    Ok(())
}

fn count_usage_cmd(a: UsageArgs) -> Result<()> {
    require(std::iter::once(&a.model).chain(&a.corpus))?;
    let model = TokenizerModel::load(&a.model)?;
    let lines = read_lines(&a.corpus)?;
    let corpus_id: Vec<String> = a
        .corpus
        .iter()
        .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let usage = count_usage(&model, &lines, &corpus_id.join(","));
    usage.save(&a.out)?;
    let used = (0..usage.len() as u32).filter(|&i| usage.is_used(i)).count();
    println!("{} tokens, {used} of {} ids used", usage.total_tokens(), usage.len());
    Ok(())
}

fn prune_cmd(a: PruneArgs) -> Result<()> {
    require([&a.vocab, &a.matrix, &a.usage].into_iter().chain(&a.model))?;
    let vocab = load_vocab(&a.vocab)?;
    let matrix = EmbeddingMatrix::load(&a.matrix)?;
    let usage = UsageCounts::load(&a.usage)?;
    let outcome = prune(&vocab, &matrix, &usage)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    if let Some(m) = &a.model {
        let model = prune_model(&TokenizerModel::load(m)?, &outcome.remap)?;
        model.save(a.out_dir.join("pruned.model"))?;
    }
    outcome.vocab.save(a.out_dir.join("pruned.vocab"))?;
    outcome.matrix.save(a.out_dir.join("pruned.emb"))?;
    outcome.remap.save(a.out_dir.join("remap.tsv"))?;
    println!(
        "kept {} + discarded {} = {}",
        outcome.vocab.len(),
        outcome.removed_count(),
        vocab.len()
    );
    Ok(())
}

fn estimate_size(a: SizeArgs) -> Result<()> {
    let shape_for = |v: u64| {
        let mut s = match a.shape {
            Shape::Base => ModelShape::base(v),
            Shape::Large => ModelShape::large(v),
        };
        s.hidden = a.hidden.unwrap_or(s.hidden);
        s.layers = a.layers.unwrap_or(s.layers);
        s.heads = a.heads.unwrap_or(s.heads);
        s.bytes_per_param = a.bytes_per_param.unwrap_or(s.bytes_per_param);
        s
    };
    let est = estimate_model_size(shape_for(a.vocab_size))?;
    let mut out = serde_json::to_value(est).expect("estimate serializes");
    if let Some(v) = a.compare_vocab {
        let other = estimate_model_size(shape_for(v))?;
        out["compare_vocab"] = v.into();
        out["compare_bytes"] = other.bytes.into();
        out["ratio"] = (est.bytes as f64 / other.bytes as f64).into();
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(())
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

fn build_dataset_cmd(a: DatasetArgs) -> Result<()> {
    require(a.config.iter().chain(&a.pages).chain(&a.categories).chain(&a.tokenizer))?;
    let mut config = match &a.config {
        Some(path) => {
            let mut table = read_table(path, &a.overrides)?;
            if let Some(toml::Value::Table(t)) = table.remove("dataset") {
                table = t;
            }
            let mut c: DatasetConfig = toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            resolve(base, &mut c.tokenizer);
            resolve(base, &mut c.pages_dir);
            resolve(base, &mut c.categories_dir);
            c
        }
        None => {
            let mut table = toml::Table::new();
            vocab_forge::pipeline::apply_overrides(&mut table, &a.overrides)?;
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?
        }
    };
    config.pages_dir = a.pages.or(config.pages_dir);
    config.categories_dir = a.categories.or(config.categories_dir);
    config.seed = a.seed.or(config.seed);
    config.tokenizer = a.tokenizer.or(config.tokenizer);
    config.validate()?;
    require(config.tokenizer.iter().chain(&config.pages_dir).chain(&config.categories_dir))?;
    let tok_path = config
        .tokenizer
        .clone()
        .ok_or_else(|| Error::Validation("a tokenizer is required (--tokenizer or config `tokenizer`)".into()))?;
    let tokenizer = TokenizerModel::load(&tok_path)?;
    let build = build_dataset(&config.inputs()?, &config, &tokenizer)?;
    let manifest = emit_dataset(&build, &a.out)?;
    let t = build.totals();
    println!(
        "{} pages -> {} documents ({} unlabelable, {} cleaned out, {} length, {} downsampled)",
        t.input_pages, manifest.total, t.unlabelable, t.rejected_cleaning, t.rejected_length, t.removed_downsampling
    );
    Ok(())
}

fn evaluate_cmd(a: EvalArgs) -> Result<()> {
    require([&a.predictions])?;
    let metric: Metric = a.metric.parse()?;
    let universe = if a.labels.is_empty() {
        vocab_forge::dataset::default_targets()
    } else {
        a.labels
    };
    let files: BTreeMap<String, PathBuf> = prediction_files_in(&a.predictions)?;
    let report = evaluate_run(&files, &universe, metric)?;
    write_or_print(a.out.as_deref(), &report.to_json())
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let cfg = |vocab| BenchConfig {
        vocab,
        hidden: a.hidden,
        layers: a.layers,
        seq_len: a.seq_len,
        batch: a.batch,
        repeats: a.repeats,
        rng_seed: a.seed,
    };
    let report = run_bench(&cfg(a.vocab_large), &cfg(a.vocab_small))?;
    write_or_print(a.out.as_deref(), &report.to_json())
}

fn pipeline_cmd(a: PipelineArgs) -> Result<()> {
    require([&a.config])?;
    let mut overrides = a.overrides;
    if let Some(dir) = &a.out_dir {
        let abs = std::path::absolute(dir).map_err(|e| Error::io(dir, e))?;
        overrides.push(format!("out_dir={:?}", abs.display().to_string()));
    }
    let config = PipelineConfig::load(&a.config, &overrides)?;
    let report = run_pipeline(&config, a.from_stage.as_deref())?;
    for s in &report.stages {
        println!("{:<9} {:?}", s.name, s.status);
    }
    println!("report: {}", config.out_dir.join("run_report.json").display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainTokenizer(a) => train_tokenizer(a),
        Command::MergeVocab(a) => merge_vocab(a),
        Command::ExtendEmb(a) => extend_emb(a),
        Command::CountUsage(a) => count_usage_cmd(a),
        Command::Prune(a) => prune_cmd(a),
        Command::EstimateSize(a) => estimate_size(a),
        Command::BuildDataset(a) => build_dataset_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
