//! Declarative end-to-end runs. Every stage reads the files written by
//! earlier stages from `out_dir`, so a run can restart from any stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{build_dataset, emit_dataset, DatasetConfig, LANGUAGES};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_run, prediction_files_in, Metric};
use crate::mlm::{run_bench, BenchConfig};
use crate::tokenizer::{TokenizerModel, UnigramTrainer};
use crate::vocab::{
    count_usage, estimate_model_size, extend_embeddings, merge_models, prune, prune_model,
    EmbeddingMatrix, InitInterp, ModelShape, UsageCounts, Vocabulary,
};

pub const STAGES: [&str; 8] = [
    "train", "merge", "extend", "usage", "prune", "dataset", "evaluate", "bench",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    pub tokenizer: TokenizerStage,
    pub embedding: EmbeddingStage,
    #[serde(default)]
    pub usage: UsageStage,
    pub dataset: Option<DatasetConfig>,
    pub evaluate: Option<EvaluateStage>,
    pub bench: Option<BenchStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerStage {
    /// An existing base model; otherwise one is trained on `base_corpus`.
    pub base_model: Option<PathBuf>,
    pub base_corpus: Option<PathBuf>,
    #[serde(default = "default_base_vocab")]
    pub base_vocab_size: usize,
    pub vocab_size: usize,
    /// Per-language override of `vocab_size`.
    #[serde(default)]
    pub vocab_sizes: BTreeMap<String, usize>,
    #[serde(default = "default_multiplier")]
    pub seed_multiplier: f64,
    #[serde(default)]
    pub byte_fallback: bool,
    /// Language code -> corpus for that language's addition tokenizer.
    pub corpora: BTreeMap<String, PathBuf>,
}

fn default_base_vocab() -> usize {
    8000
}

fn default_multiplier() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingStage {
    pub dim: usize,
    #[serde(default = "default_init")]
    pub init: String,
    pub seed: Option<u64>,
    /// Existing matrix for the base vocabulary; otherwise a random one is
    /// drawn with `base_seed`.
    pub base_matrix: Option<PathBuf>,
    pub base_seed: Option<u64>,
}

fn default_init() -> String {
    "variance".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsageStage {
    /// Empty means every tokenizer training corpus.
    #[serde(default)]
    pub corpora: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateStage {
    pub predictions_dir: PathBuf,
    #[serde(default)]
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchStage {
    pub hidden: usize,
    pub layers: usize,
    pub seq_len: usize,
    pub batch: usize,
    pub repeats: usize,
    pub seed: Option<u64>,
    /// Defaults to the merged vocabulary size.
    pub vocab_large: Option<usize>,
    /// Defaults to the pruned vocabulary size.
    pub vocab_small: Option<usize>,
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("bad key {key:?}")))?;
    let mut cur = table;
    for part in parts {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key:?}: {part:?} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses `value` as a TOML value, falling back to a bare string.
pub fn parse_override_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

/// Applies `key=value` overrides (dotted keys) to a parsed TOML table.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
        set_dotted(table, k.trim(), parse_override_value(v.trim()))?;
    }
    Ok(())
}

/// Reads a TOML file into a table with `overrides` applied.
pub fn read_table(path: &Path, overrides: &[String]) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table: toml::Table = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    apply_overrides(&mut table, overrides)?;
    Ok(table)
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn resolve_opt(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        resolve(base, p);
    }
}

impl PipelineConfig {
    pub fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Loads a config file; relative paths are taken relative to its
    /// directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut config = Self::from_table(read_table(path, overrides)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out_dir);
        resolve_opt(base, &mut self.tokenizer.base_model);
        resolve_opt(base, &mut self.tokenizer.base_corpus);
        self.tokenizer.corpora.values_mut().for_each(|p| resolve(base, p));
        resolve_opt(base, &mut self.embedding.base_matrix);
        self.usage.corpora.iter_mut().for_each(|p| resolve(base, p));
        if let Some(d) = &mut self.dataset {
            resolve_opt(base, &mut d.tokenizer);
            resolve_opt(base, &mut d.pages_dir);
            resolve_opt(base, &mut d.categories_dir);
        }
        if let Some(e) = &mut self.evaluate {
            resolve(base, &mut e.predictions_dir);
        }
    }

    pub fn init_interp(&self) -> Result<InitInterp> {
        self.embedding.init.parse().map_err(|e: Error| Error::Validation(e.to_string()))
    }

    /// Checks paths, seeds and language codes without touching `out_dir`.
    pub fn validate(&self) -> Result<()> {
        let missing = |p: &Path| Error::Validation(format!("missing input {}", p.display()));
        let file = |p: &Path| if p.is_file() { Ok(()) } else { Err(missing(p)) };
        let dir = |p: &Path| if p.is_dir() { Ok(()) } else { Err(missing(p)) };
        let t = &self.tokenizer;
        match (&t.base_model, &t.base_corpus) {
            (Some(m), _) => file(m)?,
            (None, Some(c)) => file(c)?,
            (None, None) => {
                return Err(Error::Validation(
                    "tokenizer needs base_model or base_corpus".into(),
                ))
            }
        }
        if t.corpora.is_empty() {
            return Err(Error::Validation("tokenizer.corpora lists no languages".into()));
        }
        for (lang, path) in &t.corpora {
            if !LANGUAGES.contains(&lang.as_str()) {
                return Err(Error::Validation(format!("unknown language {lang:?}")));
            }
            file(path)?;
        }
        for path in &self.usage.corpora {
            file(path)?;
        }
        self.init_interp()?;
        if self.embedding.dim == 0 {
            return Err(Error::Validation("embedding.dim must be positive".into()));
        }
        if self.embedding.seed.is_none() {
            return Err(Error::Validation("embedding.seed is not set".into()));
        }
        match &self.embedding.base_matrix {
            Some(m) => file(m)?,
            None if self.embedding.base_seed.is_none() => {
                return Err(Error::Validation(
                    "embedding.base_seed is required without base_matrix".into(),
                ))
            }
            None => {}
        }
        if let Some(d) = &self.dataset {
            d.validate()?;
            let inputs = d.inputs()?;
            dir(&inputs.pages_dir)?;
            dir(&inputs.categories_dir)?;
            if let Some(tok) = &d.tokenizer {
                file(tok)?;
            }
        }
        if let Some(e) = &self.evaluate {
            dir(&e.predictions_dir)?;
        }
        if let Some(b) = &self.bench {
            if b.seed.is_none() {
                return Err(Error::Validation("bench.seed is not set".into()));
            }
        }
        Ok(())
    }
}

/// Output file locations inside `out_dir`.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn tokenizer(&self, name: &str) -> PathBuf {
        self.root.join("tokenizers").join(format!("{name}.model"))
    }
    pub fn merged_model(&self) -> PathBuf {
        self.root.join("merged.model")
    }
    pub fn merged_vocab(&self) -> PathBuf {
        self.root.join("merged.vocab")
    }
    pub fn base_matrix(&self) -> PathBuf {
        self.root.join("base.emb")
    }
    pub fn extended_matrix(&self) -> PathBuf {
        self.root.join("extended.emb")
    }
    pub fn usage(&self) -> PathBuf {
        self.root.join("usage.tsv")
    }
    pub fn pruned_model(&self) -> PathBuf {
        self.root.join("pruned.model")
    }
    pub fn pruned_vocab(&self) -> PathBuf {
        self.root.join("pruned.vocab")
    }
    pub fn pruned_matrix(&self) -> PathBuf {
        self.root.join("pruned.emb")
    }
    pub fn remap(&self) -> PathBuf {
        self.root.join("remap.tsv")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }
    pub fn eval(&self) -> PathBuf {
        self.root.join("eval.json")
    }
    pub fn bench(&self) -> PathBuf {
        self.root.join("bench.json")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("run_report.json")
    }
    pub fn incomplete_marker(&self) -> PathBuf {
        self.root.join("INCOMPLETE")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    /// Before `--from-stage`; outputs were reused.
    Skipped,
    NotConfigured,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub counters: BTreeMap<String, u64>,
    /// Named conservation checks; all must hold for the stage to complete.
    pub checks: BTreeMap<String, bool>,
    pub scores: BTreeMap<String, f64>,
}

impl StageRecord {
    fn new(name: &str, status: StageStatus) -> Self {
        StageRecord {
            name: name.to_string(),
            status,
            counters: BTreeMap::new(),
            checks: BTreeMap::new(),
            scores: BTreeMap::new(),
        }
    }

    fn count(&mut self, key: impl Into<String>, v: impl TryInto<u64>) {
        self.counters.insert(key.into(), v.try_into().unwrap_or(u64::MAX));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub complete: bool,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub stages: Vec<StageRecord>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// True when every recorded check holds.
    pub fn balanced(&self) -> bool {
        self.stages.iter().all(|s| s.checks.values().all(|&c| c))
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(String::from).collect())
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

struct Runner<'a> {
    config: &'a PipelineConfig,
    paths: RunPaths,
}

impl Runner<'_> {
    fn languages(&self) -> Vec<&String> {
        self.config.tokenizer.corpora.keys().collect()
    }

    fn train(&self, rec: &mut StageRecord) -> Result<()> {
        let t = &self.config.tokenizer;
        mkdir(&self.paths.root.join("tokenizers"))?;
        let base = match (&t.base_model, &t.base_corpus) {
            (Some(m), _) => TokenizerModel::load(m)?,
            (None, Some(c)) => UnigramTrainer::new(t.base_vocab_size, t.seed_multiplier)
                .with_byte_fallback(t.byte_fallback)
                .train(read_lines(c)?)?,
            (None, None) => unreachable!("validated"),
        };
        base.save(self.paths.tokenizer("base"))?;
        rec.count("base_pieces", base.len());
        for (lang, corpus) in &t.corpora {
            let size = t.vocab_sizes.get(lang).copied().unwrap_or(t.vocab_size);
            let model = UnigramTrainer::new(size, t.seed_multiplier)
                .with_byte_fallback(t.byte_fallback)
                .train(read_lines(corpus)?)?;
            model.save(self.paths.tokenizer(lang))?;
            rec.count(format!("{lang}.pieces"), model.len());
        }
        Ok(())
    }

    fn merge(&self, rec: &mut StageRecord) -> Result<()> {
        let base = TokenizerModel::load(self.paths.tokenizer("base"))?;
        let additions = self
            .languages()
            .into_iter()
            .map(|l| TokenizerModel::load(self.paths.tokenizer(l)))
            .collect::<Result<Vec<_>>>()?;
        let (model, vocab) = merge_models(&base, &additions)?;
        model.save(self.paths.merged_model())?;
        vocab.save(self.paths.merged_vocab())?;
        let appended = vocab.len() - vocab.base_len();
        let offered: usize = additions.iter().map(TokenizerModel::len).sum();
        rec.count("base", base.len());
        rec.count("additions_offered", offered);
        rec.count("appended", appended);
        rec.count("duplicates", offered - appended);
        rec.count("merged", vocab.len());
        rec.checks.insert("base_plus_appended_is_merged".into(), base.len() + appended == vocab.len());
        Ok(())
    }

    fn extend(&self, rec: &mut StageRecord) -> Result<()> {
        let e = &self.config.embedding;
        let base = TokenizerModel::load(self.paths.tokenizer("base"))?;
        let base_vocab = Vocabulary::from_model(&base);
        let matrix = match &e.base_matrix {
            Some(p) => {
                let m = EmbeddingMatrix::load(p)?;
                m.check_bound(&base_vocab)?;
                m
            }
            None => EmbeddingMatrix::random(
                &base_vocab,
                e.dim,
                InitInterp::PARAMETER,
                e.base_seed.expect("validated"),
            )?,
        };
        matrix.save(self.paths.base_matrix())?;
        let merged = Vocabulary::load(self.paths.merged_vocab())?;
        let extended = extend_embeddings(
            &matrix,
            &merged,
            e.seed.expect("validated"),
            self.config.init_interp()?,
        )?;
        extended.save(self.paths.extended_matrix())?;
        rec.count("base_rows", matrix.rows());
        rec.count("appended_rows", extended.rows() - matrix.rows());
        rec.count("rows", extended.rows());
        rec.checks.insert("rows_match_vocab".into(), extended.rows() == merged.len());
        Ok(())
    }

    fn usage_corpora(&self) -> Vec<PathBuf> {
        if !self.config.usage.corpora.is_empty() {
            return self.config.usage.corpora.clone();
        }
        let t = &self.config.tokenizer;
        t.base_corpus.iter().chain(t.corpora.values()).cloned().collect()
    }

    fn usage(&self, rec: &mut StageRecord) -> Result<()> {
        let model = TokenizerModel::load(self.paths.merged_model())?;
        let mut lines = Vec::new();
        let mut names = Vec::new();
        for path in self.usage_corpora() {
            lines.extend(read_lines(&path)?);
            names.push(
                path.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
            );
        }
        let usage = count_usage(&model, &lines, &names.join(","));
        usage.save(self.paths.usage())?;
        let used = (0..usage.len() as u32).filter(|&i| usage.is_used(i)).count();
        rec.count("lines", lines.len());
        rec.count("tokens", usage.total_tokens());
        rec.count("ids", usage.len());
        rec.count("used_ids", used);
        rec.count("unused_ids", usage.len() - used);
        rec.checks.insert("ids_match_vocab".into(), usage.len() == model.len());
        Ok(())
    }

    fn prune(&self, rec: &mut StageRecord) -> Result<()> {
        let model = TokenizerModel::load(self.paths.merged_model())?;
        let vocab = Vocabulary::load(self.paths.merged_vocab())?;
        let matrix = EmbeddingMatrix::load(self.paths.extended_matrix())?;
        let usage = UsageCounts::load(self.paths.usage())?;
        let outcome = prune(&vocab, &matrix, &usage)?;
        let pruned_model = prune_model(&model, &outcome.remap)?;
        pruned_model.save(self.paths.pruned_model())?;
        outcome.vocab.save(self.paths.pruned_vocab())?;
        outcome.matrix.save(self.paths.pruned_matrix())?;
        outcome.remap.save(self.paths.remap())?;
        let kept = outcome.vocab.len();
        let discarded = outcome.removed_count();
        rec.count("merged", vocab.len());
        rec.count("kept", kept);
        rec.count("discarded", discarded);
        for (name, v) in [("merged", vocab.len()), ("pruned", kept)] {
            let est = estimate_model_size(ModelShape::base(v as u64))?;
            rec.count(format!("{name}_base_model_bytes"), est.bytes);
        }
        rec.checks.insert("kept_plus_discarded_is_merged".into(), kept + discarded == vocab.len());
        Ok(())
    }

    fn dataset(&self, d: &DatasetConfig, rec: &mut StageRecord) -> Result<()> {
        let tokenizer_path = d.tokenizer.clone().unwrap_or_else(|| self.paths.pruned_model());
        let tokenizer = TokenizerModel::load(&tokenizer_path)?;
        let build = build_dataset(&d.inputs()?, d, &tokenizer)?;
        let manifest = emit_dataset(&build, &self.paths.dataset())?;
        for (lang, c) in &build.per_language {
            rec.count(format!("{lang}.input_pages"), c.input_pages);
            rec.count(format!("{lang}.unlabelable"), c.unlabelable);
            rec.count(format!("{lang}.rejected_cleaning"), c.rejected_cleaning);
            rec.count(format!("{lang}.rejected_length"), c.rejected_length);
            rec.count(format!("{lang}.removed_downsampling"), c.removed_downsampling);
            rec.count(format!("{lang}.labeled"), c.labeled);
            rec.checks.insert(format!("{lang}.pages_conserved"), c.balanced());
        }
        let totals = build.totals();
        rec.count("input_pages", totals.input_pages);
        rec.count("labeled", totals.labeled);
        rec.count("emitted", manifest.total);
        rec.checks.insert("pages_conserved".into(), totals.balanced());
        rec.checks.insert("manifest_matches_labeled".into(), manifest.total == totals.labeled);
        Ok(())
    }

    fn evaluate(&self, e: &EvaluateStage, rec: &mut StageRecord) -> Result<()> {
        let universe = self
            .config
            .dataset
            .as_ref()
            .map(|d| d.targets.clone())
            .unwrap_or_else(crate::dataset::default_targets);
        let files = prediction_files_in(&e.predictions_dir)?;
        let report = evaluate_run(&files, &universe, e.metric)?;
        write(&self.paths.eval(), &(report.to_json() + "\n"))?;
        rec.count("languages", report.per_language.len());
        for (lang, score) in &report.per_language {
            rec.scores.insert(lang.clone(), *score);
        }
        rec.scores.insert("average".into(), report.average);
        Ok(())
    }

    fn bench(&self, b: &BenchStage, rec: &mut StageRecord) -> Result<()> {
        let large = match b.vocab_large {
            Some(v) => v,
            None => Vocabulary::load(self.paths.merged_vocab())?.len(),
        };
        let small = match b.vocab_small {
            Some(v) => v,
            None => Vocabulary::load(self.paths.pruned_vocab())?.len(),
        };
        let cfg = |vocab| BenchConfig {
            vocab,
            hidden: b.hidden,
            layers: b.layers,
            seq_len: b.seq_len,
            batch: b.batch,
            repeats: b.repeats,
            rng_seed: b.seed.expect("validated"),
        };
        let report = run_bench(&cfg(large), &cfg(small))?;
        write(&self.paths.bench(), &(report.to_json() + "\n"))?;
        rec.count("vocab_large", large);
        rec.count("vocab_small", small);
        Ok(())
    }

    fn run_stage(&self, name: &str, rec: &mut StageRecord) -> Result<bool> {
        let c = self.config;
        match name {
            "train" => self.train(rec)?,
            "merge" => self.merge(rec)?,
            "extend" => self.extend(rec)?,
            "usage" => self.usage(rec)?,
            "prune" => self.prune(rec)?,
            "dataset" => match &c.dataset {
                Some(d) => self.dataset(d, rec)?,
                None => return Ok(false),
            },
            "evaluate" => match &c.evaluate {
                Some(e) => self.evaluate(e, rec)?,
                None => return Ok(false),
            },
            "bench" => match &c.bench {
                Some(b) => self.bench(b, rec)?,
                None => return Ok(false),
            },
            other => unreachable!("unknown stage {other}"),
        }
        Ok(true)
    }
}

/// Runs the stages in order, starting at `from_stage` when given, and
/// writes `run_report.json`. A failing stage aborts the run, leaves an
/// `INCOMPLETE` marker naming it and returns a stage error.
pub fn run_pipeline(config: &PipelineConfig, from_stage: Option<&str>) -> Result<RunReport> {
    config.validate()?;
    let start = match from_stage {
        None => 0,
        Some(s) => STAGES.iter().position(|&x| x == s).ok_or_else(|| {
            Error::Validation(format!("unknown stage {s:?}; expected one of {}", STAGES.join(", ")))
        })?,
    };
    let runner = Runner {
        config,
        paths: RunPaths {
            root: config.out_dir.clone(),
        },
    };
    mkdir(&runner.paths.root)?;
    let marker = runner.paths.incomplete_marker();
    let mut report = RunReport {
        complete: false,
        failed_stage: None,
        error: None,
        stages: Vec::new(),
    };
    let mut failure = None;
    for (i, &name) in STAGES.iter().enumerate() {
        if failure.is_some() {
            report.stages.push(StageRecord::new(name, StageStatus::NotRun));
            continue;
        }
        if i < start {
            report.stages.push(StageRecord::new(name, StageStatus::Skipped));
            continue;
        }
        let mut rec = StageRecord::new(name, StageStatus::Completed);
        let outcome = runner.run_stage(name, &mut rec).and_then(|ran| {
            let failed: Vec<&String> = rec.checks.iter().filter(|(_, &ok)| !ok).map(|(k, _)| k).collect();
            if failed.is_empty() {
                Ok(ran)
            } else {
                Err(Error::Validation(format!("conservation checks failed: {failed:?}")))
            }
        });
        match outcome {
            Ok(true) => {}
            Ok(false) => rec.status = StageStatus::NotConfigured,
            Err(e) => {
                rec.status = StageStatus::Failed;
                report.failed_stage = Some(name.to_string());
                report.error = Some(e.to_string());
                failure = Some(Error::Stage {
                    stage: name.to_string(),
                    source: Box::new(e),
                });
            }
        }
        report.stages.push(rec);
    }
    report.complete = failure.is_none();
    write(&runner.paths.report(), &(report.to_json() + "\n"))?;
    match failure {
        Some(e) => {
            write(&marker, &format!("{}\n", report.failed_stage.as_deref().unwrap_or("")))?;
            Err(e)
        }
        None => {
            if marker.exists() {
                std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
            }
            Ok(report)
        }
    }
}
