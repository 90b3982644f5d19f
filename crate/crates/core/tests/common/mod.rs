#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use vocab_forge::tokenizer::{Normalization, Piece, SpecialRole, TokenizerModel};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Model whose pieces are the given surfaces with the given log-probs.
pub fn model(pieces: &[(&str, f64)]) -> TokenizerModel {
    let pieces = pieces
        .iter()
        .map(|(s, lp)| Piece {
            surface: s.to_string(),
            log_prob: *lp,
        })
        .collect();
    TokenizerModel::new(vec![SpecialRole::Unknown], pieces, Normalization::Identity).unwrap()
}

/// One token per character: lowercase letters and space are pieces, every
/// other character falls back to a single unknown token.
pub fn char_tokenizer() -> TokenizerModel {
    let pieces = "abcdefghijklmnopqrstuvwxyz "
        .chars()
        .map(|c| Piece {
            surface: c.to_string(),
            log_prob: -3.3,
        })
        .collect();
    TokenizerModel::new(vec![SpecialRole::Unknown], pieces, Normalization::default()).unwrap()
}

/// Best log-probability over every segmentation of `text` into model
/// pieces, by enumeration. `None` when no segmentation exists.
pub fn exhaustive_best(model: &TokenizerModel, text: &str) -> Option<f64> {
    let chars: Vec<char> = text.chars().collect();
    fn go(model: &TokenizerModel, chars: &[char], from: usize) -> Option<f64> {
        if from == chars.len() {
            return Some(0.0);
        }
        let mut best: Option<f64> = None;
        for to in from + 1..=chars.len() {
            let s: String = chars[from..to].iter().collect();
            let Some(id) = model.id_of(&s) else { continue };
            if model.is_special(id) {
                continue;
            }
            let lp = model.log_prob(id).unwrap();
            if let Some(rest) = go(model, chars, to) {
                let total = lp + rest;
                if best.is_none_or(|b| total > b) {
                    best = Some(total);
                }
            }
        }
        best
    }
    go(model, &chars, 0)
}

/// F1 per class from an explicit confusion matrix, and the weighted and
/// macro averages over `universe`.
pub fn brute_force_f1(y_true: &[&str], y_pred: &[&str], universe: &[&str]) -> (f64, f64) {
    let k = universe.len();
    let pos = |s: &str| universe.iter().position(|u| *u == s).unwrap();
    let mut confusion = vec![vec![0usize; k]; k];
    for (t, p) in y_true.iter().zip(y_pred) {
        confusion[pos(t)][pos(p)] += 1;
    }
    let mut weighted = 0.0;
    let mut macro_sum = 0.0;
    let n = y_true.len() as f64;
    for c in 0..k {
        let tp = confusion[c][c] as f64;
        let fp: f64 = (0..k).filter(|&r| r != c).map(|r| confusion[r][c] as f64).sum();
        let fnn: f64 = (0..k).filter(|&q| q != c).map(|q| confusion[c][q] as f64).sum();
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fnn) };
        let support = tp + fnn;
        weighted += support / n * f1;
        macro_sum += f1;
    }
    (weighted, macro_sum / k as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedPage {
    pub lang: String,
    pub page_id: String,
    pub label: Option<String>,
    pub outcome: String,
    pub token_length: Option<usize>,
}

/// Hand-labeled outcomes for the wiki fixture.
pub fn expected_pages() -> Vec<ExpectedPage> {
    let text = std::fs::read_to_string(fixture_dir().join("wiki/expected.tsv")).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            ExpectedPage {
                lang: f[0].into(),
                page_id: f[1].into(),
                label: (f[2] != "-").then(|| f[2].to_string()),
                outcome: f[3].into(),
                token_length: f[4].parse().ok(),
            }
        })
        .collect()
}

pub fn count_by<K: Ord, T>(items: &[T], key: impl Fn(&T) -> K) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for it in items {
        *m.entry(key(it)).or_default() += 1;
    }
    m
}
