use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tokenizer::TokenizerModel;
use crate::vocab::embedding::EmbeddingMatrix;
use crate::vocab::usage::UsageCounts;
use crate::vocab::vocabulary::Vocabulary;

/// Old-id to new-id mapping produced by [`prune`]; `None` marks a removed id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdRemap {
    pub map: Vec<Option<u32>>,
}

impl IdRemap {
    pub fn get(&self, old: u32) -> Option<u32> {
        self.map.get(old as usize).copied().flatten()
    }

    pub fn kept(&self) -> Vec<u32> {
        (0..self.map.len() as u32).filter(|&i| self.map[i as usize].is_some()).collect()
    }

    pub fn removed(&self) -> Vec<u32> {
        (0..self.map.len() as u32).filter(|&i| self.map[i as usize].is_none()).collect()
    }

    /// One `old<TAB>new` line per old id, `-` for removed ids.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (old, new) in self.map.iter().enumerate() {
            match new {
                Some(n) => writeln!(out, "{old}\t{n}").unwrap(),
                None => writeln!(out, "{old}\t-").unwrap(),
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub vocab: Vocabulary,
    pub matrix: EmbeddingMatrix,
    pub remap: IdRemap,
}

impl PruneOutcome {
    pub fn removed_count(&self) -> usize {
        self.remap.map.len() - self.vocab.len()
    }
}

/// Removes every non-special id that never occurred. Survivors keep their
/// relative order and their rows are copied unchanged.
pub fn prune(vocab: &Vocabulary, matrix: &EmbeddingMatrix, usage: &UsageCounts) -> Result<PruneOutcome> {
    matrix.check_bound(vocab)?;
    usage.check_bound(vocab)?;
    let mut map = Vec::with_capacity(vocab.len());
    let mut kept = Vec::new();
    for id in 0..vocab.len() as u32 {
        if usage.is_used(id) {
            map.push(Some(kept.len() as u32));
            kept.push(id);
        } else {
            map.push(None);
        }
    }
    let new_vocab = vocab.retain_ids(&kept);
    let new_matrix = matrix.select_rows(&kept, &new_vocab);
    Ok(PruneOutcome {
        vocab: new_vocab,
        matrix: new_matrix,
        remap: IdRemap { map },
    })
}

/// Applies a pruning remap to the tokenizer that produced the usage counts.
pub fn prune_model(model: &TokenizerModel, remap: &IdRemap) -> Result<TokenizerModel> {
    if remap.map.len() != model.len() {
        return Err(Error::Binding(format!(
            "remap covers {} ids, model has {}",
            remap.map.len(),
            model.len()
        )));
    }
    model.retain_ids(&remap.kept())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{Normalization, Piece, SpecialRole};
    use crate::vocab::usage::count_usage;

    fn abc() -> TokenizerModel {
        TokenizerModel::new(
            vec![SpecialRole::Unknown, SpecialRole::Begin, SpecialRole::End, SpecialRole::Mask],
            ["a", "b", "c"]
                .iter()
                .map(|s| Piece {
                    surface: s.to_string(),
                    log_prob: -1.0,
                })
                .collect(),
            Normalization::NfkcCollapseWhitespace,
        )
        .unwrap()
    }

    #[test]
    fn drops_unused_piece_and_its_row() {
        let m = abc();
        let v = Vocabulary::from_model(&m);
        let mat = EmbeddingMatrix::random(&v, 3, 0.02, 4).unwrap();
        let usage = count_usage(&m, &["aba"], "c");
        let out = prune(&v, &mat, &usage).unwrap();
        assert_eq!(out.vocab.entries(), &["<unk>", "<s>", "</s>", "<mask>", "a", "b"]);
        assert_eq!(out.removed_count(), 1);
        assert_eq!(out.remap.removed(), vec![6]);
        assert_eq!(out.remap.get(4), Some(4));
        assert_eq!(out.remap.get(5), Some(5));
        for old in out.remap.kept() {
            let new = out.remap.get(old).unwrap() as usize;
            assert_eq!(out.matrix.row(new), mat.row(old as usize));
        }
        out.matrix.check_bound(&out.vocab).unwrap();
        assert_eq!(out.vocab.len() + out.removed_count(), v.len());
    }

    #[test]
    fn all_used_is_identity() {
        let m = abc();
        let v = Vocabulary::from_model(&m);
        let mat = EmbeddingMatrix::random(&v, 3, 0.02, 4).unwrap();
        let usage = count_usage(&m, &["abc"], "c");
        let out = prune(&v, &mat, &usage).unwrap();
        assert_eq!(out.vocab, v);
        assert_eq!(out.matrix.to_bytes(), mat.to_bytes());
        assert!(out.remap.removed().is_empty());
    }

    #[test]
    fn specials_survive_an_empty_corpus() {
        let m = abc();
        let v = Vocabulary::from_model(&m);
        let mat = EmbeddingMatrix::random(&v, 2, 0.02, 4).unwrap();
        let usage = count_usage::<&str>(&m, &[], "none");
        let out = prune(&v, &mat, &usage).unwrap();
        assert_eq!(out.vocab.len(), 4);
        let pm = prune_model(&m, &out.remap).unwrap();
        assert_eq!(pm.len(), 4);
    }

    #[test]
    fn binding_is_checked() {
        let m = abc();
        let v = Vocabulary::from_model(&m);
        let other = Vocabulary::from_surfaces(["x", "y", "z", "w", "a", "b", "c"]).unwrap();
        let mat = EmbeddingMatrix::random(&other, 2, 0.02, 4).unwrap();
        let usage = count_usage(&m, &["a"], "c");
        assert!(matches!(prune(&v, &mat, &usage), Err(Error::Binding(_))));
        let mat = EmbeddingMatrix::random(&v, 2, 0.02, 4).unwrap();
        assert!(matches!(prune(&other, &mat, &usage), Err(Error::Binding(_))));
    }

    #[test]
    fn paper_instance_conservation() {
        assert_eq!(274_701 - 139_342, 135_359);
    }
}
