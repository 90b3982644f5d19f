//! Weighted-F1 and macro-F1 over label sequences, and per-language
//! evaluation reports built from prediction files.
//!
//! Weighted-F1 is `sum_l |T_l| * F1_l / sum_l |T_l|`, where `T_l` is the set
//! of examples whose true label is `l`. A class with no predicted positives
//! has precision 0; a class with no true instances has weight 0.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aligned true/predicted labels over an ordered label universe.
#[derive(Debug, Clone)]
pub struct LabelSets {
    universe: Vec<String>,
    y_true: Vec<usize>,
    y_pred: Vec<usize>,
}

impl LabelSets {
    pub fn new<S: AsRef<str>>(y_true: &[S], y_pred: &[S], universe: &[S]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::Validation(format!(
                "{} true labels but {} predictions",
                y_true.len(),
                y_pred.len()
            )));
        }
        if y_true.is_empty() {
            return Err(Error::Validation("no examples to score".into()));
        }
        let universe: Vec<String> = universe.iter().map(|s| s.as_ref().to_string()).collect();
        let index: HashMap<&str, usize> = universe
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if index.len() != universe.len() {
            return Err(Error::Validation("label universe has duplicates".into()));
        }
        let lookup = |s: &S| {
            index
                .get(s.as_ref())
                .copied()
                .ok_or_else(|| Error::Validation(format!("label {:?} is not in the universe", s.as_ref())))
        };
        let y_true = y_true.iter().map(lookup).collect::<Result<_>>()?;
        let y_pred = y_pred.iter().map(lookup).collect::<Result<_>>()?;
        Ok(LabelSets {
            universe,
            y_true,
            y_pred,
        })
    }

    /// Universe is the sorted union of the labels that occur.
    pub fn from_labels<S: AsRef<str>>(y_true: &[S], y_pred: &[S]) -> Result<Self> {
        let mut universe: Vec<&str> = y_true.iter().chain(y_pred).map(AsRef::as_ref).collect();
        universe.sort_unstable();
        universe.dedup();
        let t: Vec<&str> = y_true.iter().map(AsRef::as_ref).collect();
        let p: Vec<&str> = y_pred.iter().map(AsRef::as_ref).collect();
        Self::new(&t, &p, &universe)
    }

    pub fn len(&self) -> usize {
        self.y_true.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_true.is_empty()
    }

    pub fn universe(&self) -> &[String] {
        &self.universe
    }

    /// Precision, recall, F1 and support of every class in universe order.
    pub fn per_class(&self) -> Vec<ClassScores> {
        let k = self.universe.len();
        let mut tp = vec![0usize; k];
        let mut pred = vec![0usize; k];
        let mut support = vec![0usize; k];
        for (&t, &p) in self.y_true.iter().zip(&self.y_pred) {
            support[t] += 1;
            pred[p] += 1;
            if t == p {
                tp[t] += 1;
            }
        }
        (0..k)
            .map(|c| {
                let precision = ratio(tp[c], pred[c]);
                let recall = ratio(tp[c], support[c]);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassScores {
                    precision,
                    recall,
                    f1,
                    support: support[c],
                }
            })
            .collect()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

pub fn weighted_f1(sets: &LabelSets) -> f64 {
    let classes = sets.per_class();
    let total: usize = classes.iter().map(|c| c.support).sum();
    classes.iter().map(|c| c.support as f64 * c.f1).sum::<f64>() / total as f64
}

pub fn macro_f1(sets: &LabelSets) -> f64 {
    let classes = sets.per_class();
    classes.iter().map(|c| c.f1).sum::<f64>() / classes.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Weighted,
    Macro,
}

impl Metric {
    pub fn score(self, sets: &LabelSets) -> f64 {
        match self {
            Metric::Weighted => weighted_f1(sets),
            Metric::Macro => macro_f1(sets),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(Metric::Weighted),
            "macro" => Ok(Metric::Macro),
            other => Err(Error::Input(format!("metric must be `weighted` or `macro`, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub per_language: BTreeMap<String, f64>,
    /// Arithmetic mean of `per_language`.
    pub average: f64,
    pub per_class: BTreeMap<String, BTreeMap<String, ClassScores>>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Reads a `true_label<TAB>pred_label` file.
pub fn read_predictions(path: &Path, universe: &[String]) -> Result<LabelSets> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (t, p) = line
            .split_once('\t')
            .filter(|(_, p)| !p.contains('\t'))
            .ok_or_else(|| Error::parse(&name, i + 1, "expected true_label<TAB>pred_label"))?;
        for label in [t, p] {
            if !universe.iter().any(|u| u == label) {
                return Err(Error::parse(&name, i + 1, format!("unknown label {label:?}")));
            }
        }
        y_true.push(t.to_string());
        y_pred.push(p.to_string());
    }
    if y_true.is_empty() {
        return Err(Error::parse(&name, 0, "file contains no predictions"));
    }
    LabelSets::new(&y_true, &y_pred, universe)
}

/// Scores each language's prediction file and averages across languages.
pub fn evaluate_run(
    prediction_files: &BTreeMap<String, std::path::PathBuf>,
    universe: &[String],
    metric: Metric,
) -> Result<EvalReport> {
    if prediction_files.is_empty() {
        return Err(Error::Validation("no prediction files".into()));
    }
    let mut per_language = BTreeMap::new();
    let mut per_class = BTreeMap::new();
    for (lang, path) in prediction_files {
        let sets = read_predictions(path, universe)?;
        per_language.insert(lang.clone(), metric.score(&sets));
        let classes = sets
            .universe()
            .iter()
            .cloned()
            .zip(sets.per_class())
            .collect();
        per_class.insert(lang.clone(), classes);
    }
    let average = per_language.values().sum::<f64>() / per_language.len() as f64;
    Ok(EvalReport {
        metric,
        per_language,
        average,
        per_class,
    })
}

/// Collects `<lang>.tsv` files from a directory.
pub fn prediction_files_in(dir: &Path) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let mut files = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("tsv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                files.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(t: &[&str], p: &[&str]) -> LabelSets {
        LabelSets::from_labels(t, p).unwrap()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let s = sets(&["A", "B", "C", "A"], &["A", "B", "C", "A"]);
        assert_eq!(weighted_f1(&s), 1.0);
        assert_eq!(macro_f1(&s), 1.0);
    }

    #[test]
    fn hand_example() {
        let s = sets(&["A", "A", "B"], &["A", "B", "B"]);
        let c = s.per_class();
        assert_eq!(c[0].precision, 1.0);
        assert_eq!(c[0].recall, 0.5);
        assert!((c[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c[1].precision, 0.5);
        assert_eq!(c[1].recall, 1.0);
        assert!((weighted_f1(&s) - 2.0 / 3.0).abs() < 1e-15);
        assert!((macro_f1(&s) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_wrong_class() {
        let s = sets(&["A", "B"], &["B", "B"]);
        let c = s.per_class();
        assert_eq!(c[0].f1, 0.0);
        assert!((c[1].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((macro_f1(&s) - 1.0 / 3.0).abs() < 1e-15);
        // weight only on B; A has support 1 but F1 0
        assert!((weighted_f1(&s) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_support_class_has_no_weight() {
        let universe = ["A", "B", "C"];
        let s = LabelSets::new(&["A", "B"], &["A", "C"], &universe).unwrap();
        // A: F1 1, support 1; B: F1 0, support 1; C: F1 0, support 0
        assert!((weighted_f1(&s) - 0.5).abs() < 1e-15);
        assert!((macro_f1(&s) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn validation_errors() {
        assert!(LabelSets::from_labels::<&str>(&[], &[]).is_err());
        assert!(LabelSets::from_labels(&["A"], &["A", "B"]).is_err());
        assert!(LabelSets::new(&["A"], &["Z"], &["A"]).is_err());
    }

    #[test]
    fn metric_names_parse() {
        assert_eq!("macro".parse::<Metric>().unwrap(), Metric::Macro);
        assert!("micro".parse::<Metric>().is_err());
    }
}
