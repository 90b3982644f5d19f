use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::clean::clean_text;
use crate::dataset::graph::{
    build_graph, default_targets, load_edges, load_overrides, CategoryGraph, Violation,
    DEFAULT_DEPTH_CAP,
};
use crate::error::{Error, Result};
use crate::tokenizer::TokenizerModel;

/// Language codes the toolkit knows about.
pub const LANGUAGES: [&str; 8] = ["zh", "yue", "bo", "mn", "ug", "kk", "za", "ko"];
pub const MIN_TOKENS: usize = 20;
pub const MAX_TOKENS: usize = 1024;
pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPage {
    pub page_id: String,
    pub title: String,
    pub text: String,
    pub categories: Vec<String>,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDocument {
    pub page_id: String,
    pub text: String,
    pub label: String,
    pub language: String,
    pub token_length: usize,
}

#[derive(Serialize)]
struct JsonLine<'a> {
    text: &'a str,
    label: &'a str,
    lang: &'a str,
}

fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Parses `page_id<TAB>title<TAB>cat;cat<TAB>text` lines; the text field
/// uses `\t`, `\n` and `\\` escapes.
pub fn parse_pages(text: &str, language: &str, source_name: &str) -> Result<Vec<RawPage>> {
    let mut pages = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() != 4 || fields[0].trim().is_empty() {
            return Err(Error::parse(
                source_name,
                i + 1,
                "expected page_id<TAB>title<TAB>categories<TAB>text",
            ));
        }
        if fields[3].contains('\t') {
            return Err(Error::parse(source_name, i + 1, "unescaped tab in page text"));
        }
        let categories = fields[2]
            .split(';')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(String::from)
            .collect();
        pages.push(RawPage {
            page_id: fields[0].trim().to_string(),
            title: fields[1].to_string(),
            text: unescape(fields[3]),
            categories,
            language: language.to_string(),
        });
    }
    Ok(pages)
}

pub fn load_pages(path: &Path, language: &str) -> Result<Vec<RawPage>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pages(&text, language, &path.display().to_string())
}

pub fn pages_path(dir: &Path, lang: &str) -> PathBuf {
    dir.join(format!("{lang}.pages.tsv"))
}

pub fn categories_path(dir: &Path, lang: &str) -> PathBuf {
    dir.join(format!("{lang}.categories.tsv"))
}

pub fn overrides_path(dir: &Path, lang: &str) -> PathBuf {
    dir.join(format!("{lang}.overrides.tsv"))
}

pub fn label_page<'g>(page: &RawPage, graph: &'g CategoryGraph, depth_cap: usize) -> Option<&'g str> {
    graph.label(&page.categories, depth_cap).map(|(label, _)| label)
}

/// Token count of `text`, and whether it lies within `[min, max]`.
pub fn length_filter(text: &str, tokenizer: &TokenizerModel, min: usize, max: usize) -> (bool, usize) {
    if text.trim().is_empty() {
        return (false, 0);
    }
    let n = tokenizer.encode(text).token_ids.len();
    (n >= min && n <= max, n)
}

/// Per-(language, label) caps. Lookup order: the cell, the language's `*`
/// entry, then `default`; absent everywhere means unbounded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub default: Option<usize>,
    pub cells: BTreeMap<String, BTreeMap<String, usize>>,
}

impl Caps {
    pub fn unbounded() -> Self {
        Caps::default()
    }

    pub fn uniform(cap: usize) -> Self {
        Caps {
            default: Some(cap),
            cells: BTreeMap::new(),
        }
    }

    pub fn get(&self, lang: &str, label: &str) -> Option<usize> {
        let by_lang = self.cells.get(lang);
        by_lang
            .and_then(|m| m.get(label))
            .or_else(|| by_lang.and_then(|m| m.get("*")))
            .copied()
            .or(self.default)
    }
}

/// Keeps a seeded uniform subset of each over-cap cell. Survivors keep their
/// input order. Cells are visited in sorted order.
pub fn downsample(docs: Vec<LabeledDocument>, caps: &Caps, seed: u64) -> Vec<LabeledDocument> {
    let mut cells: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        cells.entry((&d.language, &d.label)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![true; docs.len()];
    for ((lang, label), members) in &cells {
        let Some(cap) = caps.get(lang, label) else {
            continue;
        };
        if members.len() <= cap {
            continue;
        }
        let chosen = rand::seq::index::sample(&mut rng, members.len(), cap);
        let mut survive = vec![false; members.len()];
        for j in chosen.iter() {
            survive[j] = true;
        }
        for (j, &i) in members.iter().enumerate() {
            keep[i] = survive[j];
        }
    }
    docs.into_iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then_some(d))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then `dev = floor(n * r_dev)`, `test = floor(n * r_test)`
/// and the remainder to train.
pub fn split<T: Clone>(docs: &[T], ratios: [f64; 3], seed: u64) -> Result<Splits<T>> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::Validation(format!("split ratios must be positive, got {ratios:?}")));
    }
    if docs.len() < 3 {
        return Err(Error::Validation(format!(
            "{} documents cannot be split three ways",
            docs.len()
        )));
    }
    let sum: f64 = ratios.iter().sum();
    let n = docs.len();
    let dev_n = (n as f64 * ratios[1] / sum).floor() as usize;
    let test_n = (n as f64 * ratios[2] / sum).floor() as usize;
    let train_n = n - dev_n - test_n;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |range: std::ops::Range<usize>| -> Vec<T> {
        order[range].iter().map(|&i| docs[i].clone()).collect()
    };
    Ok(Splits {
        train: take(0..train_n),
        dev: take(train_n..train_n + dev_n),
        test: take(train_n + dev_n..n),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Empty means every language with a pages file.
    pub languages: Vec<String>,
    pub targets: Vec<String>,
    pub depth_cap: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub caps: Caps,
    /// Languages that get train/dev/test; every other language is test only.
    pub splits: BTreeMap<String, [f64; 3]>,
    pub seed: Option<u64>,
    pub tokenizer: Option<PathBuf>,
    pub pages_dir: Option<PathBuf>,
    pub categories_dir: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            languages: Vec::new(),
            targets: default_targets(),
            depth_cap: DEFAULT_DEPTH_CAP,
            min_tokens: MIN_TOKENS,
            max_tokens: MAX_TOKENS,
            caps: Caps::unbounded(),
            splits: BTreeMap::from([("zh".to_string(), [8.0, 1.0, 1.0])]),
            seed: None,
            tokenizer: None,
            pages_dir: None,
            categories_dir: None,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        for lang in self.languages.iter().chain(self.splits.keys()) {
            if !LANGUAGES.contains(&lang.as_str()) {
                return Err(Error::Validation(format!(
                    "unknown language {lang:?}; expected one of {}",
                    LANGUAGES.join(", ")
                )));
            }
        }
        if self.min_tokens > self.max_tokens {
            return Err(Error::Validation("min_tokens exceeds max_tokens".into()));
        }
        if self.seed.is_none() {
            return Err(Error::Validation("dataset seed is not set".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    pub fn inputs(&self) -> Result<DatasetInputs> {
        match (&self.pages_dir, &self.categories_dir) {
            (Some(p), Some(c)) => Ok(DatasetInputs {
                pages_dir: p.clone(),
                categories_dir: c.clone(),
            }),
            _ => Err(Error::Validation("dataset pages_dir and categories_dir must both be set".into())),
        }
    }
}

/// Per-language accounting. Every input page ends up in exactly one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DatasetCounters {
    pub input_pages: usize,
    pub unlabelable: usize,
    pub rejected_cleaning: usize,
    pub rejected_length: usize,
    pub removed_downsampling: usize,
    pub labeled: usize,
}

impl DatasetCounters {
    pub fn balanced(&self) -> bool {
        self.input_pages
            == self.unlabelable
                + self.rejected_cleaning
                + self.rejected_length
                + self.removed_downsampling
                + self.labeled
    }

    fn add(&mut self, o: &DatasetCounters) {
        self.input_pages += o.input_pages;
        self.unlabelable += o.unlabelable;
        self.rejected_cleaning += o.rejected_cleaning;
        self.rejected_length += o.rejected_length;
        self.removed_downsampling += o.removed_downsampling;
        self.labeled += o.labeled;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DatasetManifest {
    pub counts: BTreeMap<String, BTreeMap<String, usize>>,
    pub splits: BTreeMap<String, BTreeMap<String, usize>>,
    pub files: BTreeMap<String, usize>,
    pub total: usize,
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBuild {
    /// language -> split name -> documents
    pub files: BTreeMap<String, BTreeMap<String, Vec<LabeledDocument>>>,
    pub per_language: BTreeMap<String, DatasetCounters>,
    pub violations: BTreeMap<String, Vec<Violation>>,
}

impl DatasetBuild {
    pub fn totals(&self) -> DatasetCounters {
        let mut t = DatasetCounters::default();
        for c in self.per_language.values() {
            t.add(c);
        }
        t
    }

    pub fn manifest(&self) -> DatasetManifest {
        let mut m = DatasetManifest::default();
        for (lang, splits) in &self.files {
            let counts = m.counts.entry(lang.clone()).or_default();
            let split_counts = m.splits.entry(lang.clone()).or_default();
            for (split, docs) in splits {
                for d in docs {
                    *counts.entry(d.label.clone()).or_default() += 1;
                }
                split_counts.insert(split.clone(), docs.len());
                m.files.insert(file_name(lang, split), docs.len());
                m.total += docs.len();
            }
        }
        m
    }

    pub fn report(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, scope: &str, c: &DatasetCounters| {
            let _ = writeln!(
                out,
                "{scope}\tinput_pages={} unlabelable={} rejected_cleaning={} rejected_length={} removed_downsampling={} labeled={} balanced={}",
                c.input_pages,
                c.unlabelable,
                c.rejected_cleaning,
                c.rejected_length,
                c.removed_downsampling,
                c.labeled,
                c.balanced()
            );
        };
        for (lang, c) in &self.per_language {
            line(&mut out, lang, c);
        }
        line(&mut out, "total", &self.totals());
        for (lang, vs) in &self.violations {
            for v in vs {
                let _ = writeln!(out, "{lang}\tviolation\t{v:?}");
            }
        }
        out
    }
}

pub fn file_name(lang: &str, split: &str) -> String {
    format!("{lang}.{split}.jsonl")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetInputs {
    pub pages_dir: PathBuf,
    pub categories_dir: PathBuf,
}

impl DatasetInputs {
    /// Languages in `config`, or every `<lang>.pages.tsv` in the pages dir.
    pub fn languages(&self, config: &DatasetConfig) -> Result<Vec<String>> {
        if !config.languages.is_empty() {
            return Ok(config.languages.clone());
        }
        let entries = std::fs::read_dir(&self.pages_dir).map_err(|e| Error::io(&self.pages_dir, e))?;
        let mut langs = Vec::new();
        for entry in entries {
            let name = entry.map_err(|e| Error::io(&self.pages_dir, e))?.file_name();
            if let Some(lang) = name.to_str().and_then(|n| n.strip_suffix(".pages.tsv")) {
                langs.push(lang.to_string());
            }
        }
        langs.sort();
        Ok(langs)
    }

    /// Checks that every input file needed for `languages` exists.
    pub fn check(&self, languages: &[String]) -> Result<()> {
        for lang in languages {
            for path in [pages_path(&self.pages_dir, lang), categories_path(&self.categories_dir, lang)] {
                if !path.is_file() {
                    return Err(Error::Validation(format!("missing input {}", path.display())));
                }
            }
        }
        Ok(())
    }
}

enum Outcome {
    Unlabelable,
    Dirty,
    Length,
    Kept(LabeledDocument),
}

fn process_page(
    page: &RawPage,
    graph: &CategoryGraph,
    tokenizer: &TokenizerModel,
    config: &DatasetConfig,
) -> Outcome {
    let Some(label) = label_page(page, graph, config.depth_cap) else {
        return Outcome::Unlabelable;
    };
    let Some(text) = clean_text(&page.text).kept() else {
        return Outcome::Dirty;
    };
    let (keep, token_length) = length_filter(&text, tokenizer, config.min_tokens, config.max_tokens);
    if !keep {
        return Outcome::Length;
    }
    Outcome::Kept(LabeledDocument {
        page_id: page.page_id.clone(),
        text,
        label: label.to_string(),
        language: page.language.clone(),
        token_length,
    })
}

/// Labels, cleans, filters, balances and splits one language's pages.
pub fn build_language(
    pages: &[RawPage],
    graph: &CategoryGraph,
    tokenizer: &TokenizerModel,
    config: &DatasetConfig,
    lang: &str,
) -> Result<(BTreeMap<String, Vec<LabeledDocument>>, DatasetCounters)> {
    let mut counters = DatasetCounters {
        input_pages: pages.len(),
        ..DatasetCounters::default()
    };
    let outcomes: Vec<Outcome> = pages
        .par_iter()
        .map(|p| process_page(p, graph, tokenizer, config))
        .collect();
    let mut docs = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Unlabelable => counters.unlabelable += 1,
            Outcome::Dirty => counters.rejected_cleaning += 1,
            Outcome::Length => counters.rejected_length += 1,
            Outcome::Kept(d) => docs.push(d),
        }
    }
    let before = docs.len();
    let docs = downsample(docs, &config.caps, config.seed());
    counters.removed_downsampling = before - docs.len();
    counters.labeled = docs.len();
    let mut files = BTreeMap::new();
    match config.splits.get(lang) {
        Some(&ratios) => {
            let s = split(&docs, ratios, config.seed().wrapping_add(1))
                .map_err(|e| Error::Validation(format!("{lang}: {e}")))?;
            files.insert("train".to_string(), s.train);
            files.insert("dev".to_string(), s.dev);
            files.insert("test".to_string(), s.test);
        }
        None => {
            files.insert("test".to_string(), docs);
        }
    }
    Ok((files, counters))
}

pub fn build_dataset(
    inputs: &DatasetInputs,
    config: &DatasetConfig,
    tokenizer: &TokenizerModel,
) -> Result<DatasetBuild> {
    config.validate()?;
    let languages = inputs.languages(config)?;
    let probe = DatasetConfig {
        languages: languages.clone(),
        ..config.clone()
    };
    probe.validate()?;
    inputs.check(&languages)?;
    let mut build = DatasetBuild {
        files: BTreeMap::new(),
        per_language: BTreeMap::new(),
        violations: BTreeMap::new(),
    };
    for lang in &languages {
        let edges = load_edges(&categories_path(&inputs.categories_dir, lang))?;
        let overrides_file = overrides_path(&inputs.categories_dir, lang);
        let overrides = if overrides_file.is_file() {
            load_overrides(&overrides_file)?
        } else {
            Vec::new()
        };
        let (graph, violations) = build_graph(&edges, &config.targets, &overrides)
            .map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("{lang}: {m}")),
                other => other,
            })?;
        let pages = load_pages(&pages_path(&inputs.pages_dir, lang), lang)?;
        let (files, counters) = build_language(&pages, &graph, tokenizer, config, lang)?;
        build.files.insert(lang.clone(), files);
        build.per_language.insert(lang.clone(), counters);
        if !violations.is_empty() {
            build.violations.insert(lang.clone(), violations);
        }
    }
    Ok(build)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `<lang>.<split>.jsonl`, `manifest.json` and `report.txt`.
pub fn emit_dataset(build: &DatasetBuild, out_dir: &Path) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (lang, splits) in &build.files {
        for (split, docs) in splits {
            let mut body = String::new();
            for d in docs {
                let line = JsonLine {
                    text: &d.text,
                    label: &d.label,
                    lang: &d.language,
                };
                body.push_str(&serde_json::to_string(&line).expect("line serializes"));
                body.push('\n');
            }
            write(&out_dir.join(file_name(lang, split)), &body)?;
        }
    }
    let manifest = build.manifest();
    write(&out_dir.join("manifest.json"), &(manifest.to_json() + "\n"))?;
    write(&out_dir.join("report.txt"), &build.report())?;
    Ok(manifest)
}
