use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tokenizer::{Piece, TokenizerModel};

/// Where a vocabulary entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Base,
    Extension,
}

impl Origin {
    pub fn mark(self) -> &'static str {
        match self {
            Origin::Base => "base",
            Origin::Extension => "ext",
        }
    }
}

/// 32-byte checksum binding an artifact to a vocabulary.
pub type VocabHash = [u8; 32];

/// Ordered token table. Base entries always precede extension entries.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<String>,
    origins: Vec<Origin>,
    id_of: HashMap<String, u32>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.origins == other.origins
    }
}

impl Vocabulary {
    pub fn new(entries: Vec<String>, origins: Vec<Origin>) -> Result<Self> {
        if entries.len() != origins.len() {
            return Err(Error::Input(format!(
                "{} entries but {} origin marks",
                entries.len(),
                origins.len()
            )));
        }
        if let Some(first_ext) = origins.iter().position(|o| *o == Origin::Extension) {
            if origins[first_ext..].contains(&Origin::Base) {
                return Err(Error::Input(
                    "base entries must precede extension entries".into(),
                ));
            }
        }
        let mut id_of = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if id_of.insert(e.clone(), i as u32).is_some() {
                return Err(Error::Input(format!("duplicate vocabulary entry {e:?}")));
            }
        }
        Ok(Vocabulary {
            entries,
            origins,
            id_of,
        })
    }

    /// All-base vocabulary from surfaces.
    pub fn from_surfaces<I, S>(surfaces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries: Vec<String> = surfaces.into_iter().map(Into::into).collect();
        let origins = vec![Origin::Base; entries.len()];
        Self::new(entries, origins)
    }

    /// Every model entry (specials first) in id order, marked base.
    pub fn from_model(model: &TokenizerModel) -> Self {
        Self::from_surfaces(model.surfaces().map(str::to_string))
            .expect("model surfaces are unique")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn origins(&self) -> &[Origin] {
        &self.origins
    }

    pub fn id_of(&self, surface: &str) -> Option<u32> {
        self.id_of.get(surface).copied()
    }

    pub fn surface(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn base_len(&self) -> usize {
        self.origins.iter().take_while(|o| **o == Origin::Base).count()
    }

    pub fn hash(&self) -> VocabHash {
        self.prefix_hash(self.len())
    }

    /// Hash of the first `n` surfaces; each is length-prefixed so distinct
    /// tables never collide by concatenation.
    pub fn prefix_hash(&self, n: usize) -> VocabHash {
        let mut h = Sha256::new();
        for e in &self.entries[..n.min(self.len())] {
            h.update((e.len() as u64).to_le_bytes());
            h.update(e.as_bytes());
        }
        h.finalize().into()
    }

    /// Keeps the listed ids (ascending), preserving their origin marks.
    pub(crate) fn retain_ids(&self, kept: &[u32]) -> Vocabulary {
        let entries = kept.iter().map(|&i| self.entries[i as usize].clone()).collect();
        let origins = kept.iter().map(|&i| self.origins[i as usize]).collect();
        Vocabulary::new(entries, origins).expect("subset of a valid vocabulary")
    }

    /// `VOCAB v1 <count>` header, then `surface<TAB>base|ext` per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "VOCAB v1 {}", self.len()).unwrap();
        for (e, o) in self.entries.iter().zip(&self.origins) {
            writeln!(out, "{e}\t{}", o.mark()).unwrap();
        }
        out
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        let header = lines.next().unwrap_or_default();
        let count: usize = header
            .strip_prefix("VOCAB v1 ")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| {
                Error::parse(source_name, 1, format!("expected `VOCAB v1 <count>`, got {header:?}"))
            })?;
        let mut entries = Vec::with_capacity(count);
        let mut origins = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (surface, mark) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(source_name, i + 2, "expected surface<TAB>origin"))?;
            let origin = match mark {
                "base" => Origin::Base,
                "ext" => Origin::Extension,
                other => {
                    return Err(Error::parse(
                        source_name,
                        i + 2,
                        format!("unknown origin mark {other:?}"),
                    ))
                }
            };
            entries.push(surface.to_string());
            origins.push(origin);
        }
        if entries.len() != count {
            return Err(Error::parse(
                source_name,
                1,
                format!("header declares {count} entries, file has {}", entries.len()),
            ));
        }
        Vocabulary::new(entries, origins).map_err(|e| Error::parse(source_name, 1, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

/// Union of `base` and `additions`. Base ids are preserved; new surfaces are
/// appended per addition (in the given order), sorted lexicographically
/// within each addition, and marked as extensions.
pub fn merge_vocabularies(base: &Vocabulary, additions: &[Vocabulary]) -> Vocabulary {
    let mut entries = base.entries.clone();
    let mut origins = base.origins.clone();
    let mut seen: std::collections::HashSet<&str> =
        base.entries.iter().map(String::as_str).collect();
    for addition in additions {
        let fresh: BTreeSet<&str> = addition
            .entries
            .iter()
            .map(String::as_str)
            .filter(|s| !seen.contains(s))
            .collect();
        for s in fresh {
            seen.insert(s);
            entries.push(s.to_string());
            origins.push(Origin::Extension);
        }
    }
    Vocabulary::new(entries, origins).expect("union of unique surfaces")
}

/// Merges tokenizer models with the same id layout as
/// [`merge_vocabularies`]; appended pieces keep the log-probability they
/// had in the addition that contributed them.
pub fn merge_models(
    base: &TokenizerModel,
    additions: &[TokenizerModel],
) -> Result<(TokenizerModel, Vocabulary)> {
    let base_vocab = Vocabulary::from_model(base);
    let add_vocabs: Vec<Vocabulary> = additions.iter().map(Vocabulary::from_model).collect();
    let merged = merge_vocabularies(&base_vocab, &add_vocabs);

    let mut pieces: Vec<Piece> = base.pieces().to_vec();
    for surface in &merged.entries[base_vocab.len()..] {
        let (model, id) = additions
            .iter()
            .find_map(|m| m.id_of(surface).map(|id| (m, id)))
            .expect("appended surface comes from an addition");
        if model.is_special(id) {
            return Err(Error::Input(format!(
                "addition special {surface} is missing from the base model"
            )));
        }
        pieces.push(Piece {
            surface: surface.clone(),
            log_prob: model.log_prob(id).expect("valid id"),
        });
    }
    let model = TokenizerModel::new(base.specials().to_vec(), pieces, base.normalization())?;
    debug_assert!(model.surfaces().eq(merged.entries.iter().map(String::as_str)));
    Ok((model, merged))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(s: &[&str]) -> Vocabulary {
        Vocabulary::from_surfaces(s.iter().copied()).unwrap()
    }

    #[test]
    fn union_preserves_base_ids() {
        let merged = merge_vocabularies(&vocab(&["a", "b"]), &[vocab(&["b", "c"])]);
        assert_eq!(merged.entries(), &["a", "b", "c"]);
        assert_eq!(merged.id_of("a"), Some(0));
        assert_eq!(merged.id_of("b"), Some(1));
        assert_eq!(merged.id_of("c"), Some(2));
        assert_eq!(merged.origins()[2], Origin::Extension);
        assert_eq!(merged.base_len(), 2);
    }

    #[test]
    fn appended_order_is_addition_then_lexicographic() {
        let merged = merge_vocabularies(
            &vocab(&["x"]),
            &[vocab(&["q", "p", "x"]), vocab(&["b", "a", "p"])],
        );
        assert_eq!(merged.entries(), &["x", "p", "q", "a", "b"]);
    }

    #[test]
    fn self_merge_is_identity() {
        let v = vocab(&["z", "a", "m"]);
        assert_eq!(merge_vocabularies(&v, &[v.clone()]), v);
        assert_eq!(merge_vocabularies(&v, &[]), v);
    }

    #[test]
    fn base_must_precede_extension() {
        let err = Vocabulary::new(
            vec!["a".into(), "b".into()],
            vec![Origin::Extension, Origin::Base],
        );
        assert!(err.is_err());
    }

    #[test]
    fn duplicate_entries_rejected() {
        assert!(Vocabulary::from_surfaces(["a", "a"]).is_err());
    }

    #[test]
    fn text_format_round_trips() {
        let v = merge_vocabularies(&vocab(&["<unk>", "a b"]), &[vocab(&["ཀ"])]);
        let text = v.to_text();
        assert_eq!(text, "VOCAB v1 3\n<unk>\tbase\na b\tbase\nཀ\text\n");
        assert_eq!(Vocabulary::from_text(&text, "v").unwrap(), v);
        assert!(Vocabulary::from_text("VOCAB v1 2\na\tbase\n", "v").is_err());
        assert!(Vocabulary::from_text("VOCAB v1 1\na\tnew\n", "v").is_err());
    }

    #[test]
    fn hashes_distinguish_boundaries() {
        assert_ne!(vocab(&["ab", "c"]).hash(), vocab(&["a", "bc"]).hash());
        let v = vocab(&["a", "b", "c"]);
        assert_eq!(v.prefix_hash(2), vocab(&["a", "b"]).hash());
    }

    #[test]
    fn paper_scale_merge_arithmetic() {
        // 250,002 + 2 * 16,000 - 7,301 overlapping surfaces = 274,701
        assert_eq!(250_002 + 2 * 16_000 - 7_301, 274_701);
    }
}
