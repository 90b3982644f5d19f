use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tokenizer::lattice::{Edge, Lattice};
use crate::tokenizer::normalize::Normalization;

/// Reserved, non-learned tokens. Their surfaces can never be learned pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpecialRole {
    Unknown,
    Padding,
    Begin,
    End,
    Mask,
}

impl SpecialRole {
    pub const ALL: [SpecialRole; 5] = [
        SpecialRole::Unknown,
        SpecialRole::Padding,
        SpecialRole::Begin,
        SpecialRole::End,
        SpecialRole::Mask,
    ];

    pub fn surface(self) -> &'static str {
        match self {
            SpecialRole::Unknown => "<unk>",
            SpecialRole::Padding => "<pad>",
            SpecialRole::Begin => "<s>",
            SpecialRole::End => "</s>",
            SpecialRole::Mask => "<mask>",
        }
    }

    pub fn from_surface(surface: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.surface() == surface)
    }
}

/// A learned subword with its unigram log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub surface: String,
    pub log_prob: f64,
}

/// Output of [`TokenizerModel::encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub token_ids: Vec<u32>,
    /// Normalized text covered by each token. Concatenated they give the
    /// normalized input back; for a character split into byte pieces the
    /// first byte carries the character and the rest are empty.
    pub surfaces: Vec<String>,
    pub log_prob: f64,
}

impl Segmentation {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

const UNKNOWN_PENALTY: f64 = 10.0;
pub(crate) const FALLBACK_EDGE: u32 = u32::MAX;

pub(crate) fn byte_surface(b: u8) -> String {
    format!("<0x{b:02X}>")
}

pub(crate) fn is_byte_surface(s: &str) -> bool {
    s.len() == 6
        && s.starts_with("<0x")
        && s.ends_with('>')
        && s[3..5].chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_lowercase())
}

/// True for surfaces that a trainer must never emit as a learned piece.
pub(crate) fn is_reserved_surface(s: &str) -> bool {
    SpecialRole::from_surface(s).is_some() || is_byte_surface(s)
}

/// Unigram subword model. Ids `0..specials.len()` are the specials in the
/// stored order, followed by the pieces in stored order.
#[derive(Debug, Clone)]
pub struct TokenizerModel {
    specials: Vec<SpecialRole>,
    pieces: Vec<Piece>,
    normalization: Normalization,
    index: HashMap<String, u32>,
    max_piece_chars: usize,
    byte_ids: Option<Box<[u32; 256]>>,
    unk_id: u32,
    unk_log_prob: f64,
}

impl PartialEq for TokenizerModel {
    fn eq(&self, other: &Self) -> bool {
        self.specials == other.specials
            && self.pieces == other.pieces
            && self.normalization == other.normalization
    }
}

impl TokenizerModel {
    /// Validates and indexes a model. Byte fallback is enabled exactly when
    /// all 256 `<0xNN>` pieces are present.
    pub fn new(
        specials: Vec<SpecialRole>,
        pieces: Vec<Piece>,
        normalization: Normalization,
    ) -> Result<Self> {
        let unk_pos = specials
            .iter()
            .position(|r| *r == SpecialRole::Unknown)
            .ok_or_else(|| Error::Input("model needs an unknown special".into()))?;
        for (i, r) in specials.iter().enumerate() {
            if specials[..i].contains(r) {
                return Err(Error::Input(format!("duplicate special {}", r.surface())));
            }
        }
        let base = specials.len() as u32;
        let mut index = HashMap::with_capacity(pieces.len());
        let mut max_piece_chars = 1;
        let mut byte_ids = [u32::MAX; 256];
        let mut min_log_prob = 0.0f64;
        for (i, piece) in pieces.iter().enumerate() {
            let id = base + i as u32;
            if piece.surface.is_empty() {
                return Err(Error::Input(format!("piece {id} has an empty surface")));
            }
            if piece.surface.contains(['\t', '\n']) {
                return Err(Error::Input(format!(
                    "piece {id} contains a tab or newline"
                )));
            }
            if SpecialRole::from_surface(&piece.surface).is_some() {
                return Err(Error::Input(format!(
                    "piece {id} collides with special {}",
                    piece.surface
                )));
            }
            if !piece.log_prob.is_finite() || piece.log_prob > 0.0 {
                return Err(Error::Input(format!(
                    "piece {:?} has log_prob {} (must be finite and <= 0)",
                    piece.surface, piece.log_prob
                )));
            }
            if index.insert(piece.surface.clone(), id).is_some() {
                return Err(Error::Input(format!("duplicate piece {:?}", piece.surface)));
            }
            if is_byte_surface(&piece.surface) {
                let b = u8::from_str_radix(&piece.surface[3..5], 16).expect("checked hex");
                byte_ids[b as usize] = id;
            } else {
                max_piece_chars = max_piece_chars.max(piece.surface.chars().count());
                min_log_prob = min_log_prob.min(piece.log_prob);
            }
        }
        let byte_ids = byte_ids
            .iter()
            .all(|&id| id != u32::MAX)
            .then(|| Box::new(byte_ids));
        Ok(TokenizerModel {
            specials,
            pieces,
            normalization,
            index,
            max_piece_chars,
            byte_ids,
            unk_id: unk_pos as u32,
            unk_log_prob: min_log_prob - UNKNOWN_PENALTY,
        })
    }

    pub fn specials(&self) -> &[SpecialRole] {
        &self.specials
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn byte_fallback(&self) -> bool {
        self.byte_ids.is_some()
    }

    /// Total entries: specials plus pieces.
    pub fn len(&self) -> usize {
        self.specials.len() + self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn special_id(&self, role: SpecialRole) -> Option<u32> {
        self.specials.iter().position(|r| *r == role).map(|i| i as u32)
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < self.specials.len()
    }

    pub fn special_ids(&self) -> impl Iterator<Item = u32> + '_ {
        0..self.specials.len() as u32
    }

    pub fn id_of(&self, surface: &str) -> Option<u32> {
        if let Some(r) = SpecialRole::from_surface(surface) {
            return self.special_id(r);
        }
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: u32) -> Option<&str> {
        let id = id as usize;
        if id < self.specials.len() {
            Some(self.specials[id].surface())
        } else {
            self.pieces
                .get(id - self.specials.len())
                .map(|p| p.surface.as_str())
        }
    }

    /// Surfaces of every id in id order.
    pub fn surfaces(&self) -> impl Iterator<Item = &str> + '_ {
        self.specials
            .iter()
            .map(|r| r.surface())
            .chain(self.pieces.iter().map(|p| p.surface.as_str()))
    }

    pub fn log_prob(&self, id: u32) -> Option<f64> {
        let id = id as usize;
        if id < self.specials.len() {
            Some(0.0)
        } else {
            self.pieces.get(id - self.specials.len()).map(|p| p.log_prob)
        }
    }

    pub fn normalize(&self, text: &str) -> String {
        self.normalization.apply(text)
    }

    fn lattice(&self, text: &str) -> Lattice {
        let base = self.specials.len();
        let index = &self.index;
        let pieces = &self.pieces;
        let mut lattice = Lattice::build(text, self.max_piece_chars, |s| {
            index
                .get(s)
                .filter(|_| !is_byte_surface(s))
                .map(|&id| (id, pieces[id as usize - base].log_prob))
        });
        for start in 0..lattice.len() {
            let has_char = lattice.edges_from[start]
                .iter()
                .any(|e| e.end == start + 1);
            if has_char {
                continue;
            }
            let ch = &text[lattice.offsets[start]..lattice.offsets[start + 1]];
            let log_prob = match &self.byte_ids {
                Some(ids) => ch
                    .bytes()
                    .map(|b| pieces[ids[b as usize] as usize - base].log_prob)
                    .sum(),
                None => self.unk_log_prob,
            };
            lattice.add_edge(
                start,
                Edge {
                    end: start + 1,
                    piece: FALLBACK_EDGE,
                    log_prob,
                },
            );
        }
        lattice
    }

    /// Maximum-likelihood segmentation of the normalized text.
    pub fn encode(&self, text: &str) -> Segmentation {
        let normalized = self.normalize(text);
        self.encode_normalized(&normalized)
    }

    /// Same as [`encode`](Self::encode) for text that is already normalized.
    pub fn encode_normalized(&self, normalized: &str) -> Segmentation {
        let lattice = self.lattice(normalized);
        let (log_prob, path) = lattice
            .viterbi()
            .expect("every position has a piece or fallback edge");
        let mut token_ids = Vec::with_capacity(path.len());
        let mut surfaces = Vec::with_capacity(path.len());
        for (start, edge) in path {
            let surface = &normalized[lattice.offsets[start]..lattice.offsets[edge.end]];
            if edge.piece != FALLBACK_EDGE {
                token_ids.push(edge.piece);
                surfaces.push(surface.to_string());
                continue;
            }
            match &self.byte_ids {
                Some(ids) => {
                    for (k, b) in surface.bytes().enumerate() {
                        token_ids.push(ids[b as usize]);
                        surfaces.push(if k == 0 { surface.to_string() } else { String::new() });
                    }
                }
                None => {
                    token_ids.push(self.unk_id);
                    surfaces.push(surface.to_string());
                }
            }
        }
        Segmentation {
            token_ids,
            surfaces,
            log_prob,
        }
    }

    /// Token ids only; skips building surface strings.
    pub fn encode_ids(&self, text: &str) -> Vec<u32> {
        self.encode(text).token_ids
    }

    /// Concatenates surfaces; runs of byte pieces are reassembled as UTF-8.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        let mut bytes: Vec<u8> = Vec::new();
        for &id in ids {
            let surface = self.surface(id).ok_or_else(|| {
                Error::Input(format!("token id {id} out of range (vocab size {})", self.len()))
            })?;
            if self.byte_ids.is_some() && is_byte_surface(surface) {
                bytes.push(u8::from_str_radix(&surface[3..5], 16).expect("checked hex"));
                continue;
            }
            if !bytes.is_empty() {
                out.push_str(&String::from_utf8_lossy(&bytes));
                bytes.clear();
            }
            out.push_str(surface);
        }
        if !bytes.is_empty() {
            out.push_str(&String::from_utf8_lossy(&bytes));
        }
        Ok(out)
    }

    /// Keeps only the ids listed in `kept` (ascending old ids), renumbering
    /// densely. Every special must be kept.
    pub fn retain_ids(&self, kept: &[u32]) -> Result<TokenizerModel> {
        let nspecial = self.specials.len() as u32;
        for id in 0..nspecial {
            if kept.binary_search(&id).is_err() {
                return Err(Error::Input(format!(
                    "special {} cannot be removed",
                    self.specials[id as usize].surface()
                )));
            }
        }
        let pieces = kept
            .iter()
            .filter(|&&id| id >= nspecial)
            .map(|&id| {
                self.pieces
                    .get((id - nspecial) as usize)
                    .cloned()
                    .ok_or_else(|| Error::Input(format!("id {id} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        TokenizerModel::new(self.specials.clone(), pieces, self.normalization)
    }

    /// Serializes to the line-oriented model file format: a
    /// `UNIGRAM v1 <rule> <count>` header followed by one
    /// `surface<TAB>log_prob` line per entry, specials first.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "UNIGRAM v1 {} {}", self.normalization.id(), self.len()).unwrap();
        for r in &self.specials {
            writeln!(out, "{}\t0", r.surface()).unwrap();
        }
        for p in &self.pieces {
            writeln!(out, "{}\t{}", p.surface, p.log_prob).unwrap();
        }
        out
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(source_name, 1, "missing header"))?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 4 || fields[0] != "UNIGRAM" || fields[1] != "v1" {
            return Err(Error::parse(
                source_name,
                1,
                format!("expected `UNIGRAM v1 <rule> <count>`, got {header:?}"),
            ));
        }
        let normalization: Normalization = fields[2]
            .parse()
            .map_err(|e: Error| Error::parse(source_name, 1, e.to_string()))?;
        let count: usize = fields[3]
            .parse()
            .map_err(|_| Error::parse(source_name, 1, "entry count is not an integer"))?;

        let mut specials = Vec::new();
        let mut pieces = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            if line.is_empty() {
                continue;
            }
            let (surface, score) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(source_name, lineno, "expected surface<TAB>log_prob"))?;
            let log_prob: f64 = score
                .parse()
                .map_err(|_| Error::parse(source_name, lineno, format!("bad log_prob {score:?}")))?;
            match SpecialRole::from_surface(surface) {
                Some(role) if pieces.is_empty() => specials.push(role),
                Some(_) => {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        "special token after learned pieces",
                    ))
                }
                None => pieces.push(Piece {
                    surface: surface.to_string(),
                    log_prob,
                }),
            }
        }
        if specials.len() + pieces.len() != count {
            return Err(Error::parse(
                source_name,
                1,
                format!(
                    "header declares {count} entries, file has {}",
                    specials.len() + pieces.len()
                ),
            ));
        }
        TokenizerModel::new(specials, pieces, normalization)
            .map_err(|e| Error::parse(source_name, 1, e.to_string()))
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

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(pieces: &[(&str, f64)]) -> TokenizerModel {
        TokenizerModel::new(
            vec![SpecialRole::Unknown, SpecialRole::Begin, SpecialRole::End, SpecialRole::Mask],
            pieces
                .iter()
                .map(|(s, lp)| Piece {
                    surface: s.to_string(),
                    log_prob: *lp,
                })
                .collect(),
            Normalization::NfkcCollapseWhitespace,
        )
        .unwrap()
    }

    #[test]
    fn encode_picks_the_single_piece() {
        let m = toy(&[("a", -1.0), ("b", -1.0), ("ab", -1.5)]);
        let seg = m.encode("ab");
        assert_eq!(seg.surfaces, vec!["ab"]);
        assert_eq!(seg.token_ids, vec![m.id_of("ab").unwrap()]);
        assert_eq!(seg.log_prob, -1.5);
    }

    #[test]
    fn empty_text_gives_empty_segmentation() {
        let m = toy(&[("a", -1.0)]);
        let seg = m.encode("");
        assert!(seg.is_empty());
        assert_eq!(seg.log_prob, 0.0);
        assert_eq!(m.decode(&[]).unwrap(), "");
    }

    #[test]
    fn unseen_character_maps_to_unknown() {
        let m = toy(&[("a", -1.0)]);
        let seg = m.encode("z");
        assert_eq!(seg.token_ids, vec![m.unk_id()]);
        assert_eq!(seg.surfaces, vec!["z"]);
        assert_eq!(m.decode(&seg.token_ids).unwrap(), "<unk>");
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let m = toy(&[("a", -1.0)]);
        assert!(matches!(m.decode(&[99]), Err(Error::Input(_))));
    }

    #[test]
    fn byte_fallback_round_trips_unseen_characters() {
        let mut pieces: Vec<(String, f64)> =
            (0..=255u8).map(|b| (byte_surface(b), -20.0)).collect();
        pieces.push(("a".into(), -1.0));
        let m = TokenizerModel::new(
            vec![SpecialRole::Unknown],
            pieces
                .into_iter()
                .map(|(surface, log_prob)| Piece { surface, log_prob })
                .collect(),
            Normalization::NfkcCollapseWhitespace,
        )
        .unwrap();
        assert!(m.byte_fallback());
        let seg = m.encode("aཀa");
        // 'ཀ' is three UTF-8 bytes
        assert_eq!(seg.len(), 5);
        assert_eq!(seg.surfaces.concat(), "aཀa");
        assert_eq!(m.decode(&seg.token_ids).unwrap(), "aཀa");
    }

    #[test]
    fn invalid_models_are_rejected() {
        let bad_prob = TokenizerModel::new(
            vec![SpecialRole::Unknown],
            vec![Piece {
                surface: "a".into(),
                log_prob: 0.5,
            }],
            Normalization::Identity,
        );
        assert!(bad_prob.is_err());
        let no_unk = TokenizerModel::new(vec![SpecialRole::Mask], vec![], Normalization::Identity);
        assert!(no_unk.is_err());
        let dup = TokenizerModel::new(
            vec![SpecialRole::Unknown],
            vec![
                Piece { surface: "a".into(), log_prob: -1.0 },
                Piece { surface: "a".into(), log_prob: -2.0 },
            ],
            Normalization::Identity,
        );
        assert!(dup.is_err());
        let special_piece = TokenizerModel::new(
            vec![SpecialRole::Unknown],
            vec![Piece { surface: "<mask>".into(), log_prob: -1.0 }],
            Normalization::Identity,
        );
        assert!(special_piece.is_err());
    }

    #[test]
    fn text_format_round_trips() {
        let m = toy(&[("a", -0.1), (" ", -2.25), ("ab", -1.0 / 3.0)]);
        let text = m.to_text();
        assert!(text.starts_with("UNIGRAM v1 nfkc_ws 7\n<unk>\t0\n<s>\t0\n"));
        let back = TokenizerModel::from_text(&text, "mem").unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn text_format_errors_carry_line_numbers() {
        let err = TokenizerModel::from_text("UNIGRAM v1 nfkc_ws 2\n<unk>\t0\nabc\n", "m.txt")
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = TokenizerModel::from_text("UNIGRAM v1 nfkc_ws 3\n<unk>\t0\na\t-1\n", "m.txt")
            .unwrap_err();
        assert!(err.to_string().contains("declares 3"));
        assert!(TokenizerModel::from_text("BPE v1 x 0\n", "m").is_err());
    }

    #[test]
    fn retain_renumbers_densely() {
        let m = toy(&[("a", -1.0), ("b", -1.0), ("c", -1.0)]);
        let kept = [0, 1, 2, 3, 4, 6];
        let pruned = m.retain_ids(&kept).unwrap();
        assert_eq!(pruned.len(), 6);
        assert_eq!(pruned.id_of("c"), Some(5));
        assert!(m.retain_ids(&[1, 2, 3, 4]).is_err());
    }
}
