use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tokenizer::TokenizerModel;
use crate::vocab::vocabulary::{VocabHash, Vocabulary};

const LINES_PER_SHARD: usize = 256;

/// Occurrence counts of every id over a segmented corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageCounts {
    pub counts: Vec<u64>,
    /// Ids that count as used regardless of their count.
    pub specials: Vec<bool>,
    pub corpus_id: String,
    pub vocab_hash: VocabHash,
}

impl UsageCounts {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn is_used(&self, id: u32) -> bool {
        let i = id as usize;
        self.specials[i] || self.counts[i] > 0
    }

    pub fn total_tokens(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn check_bound(&self, vocab: &Vocabulary) -> Result<()> {
        if self.counts.len() != vocab.len() || self.vocab_hash != vocab.hash() {
            return Err(Error::Binding(format!(
                "usage counts over {} ids are not bound to this {}-entry vocabulary",
                self.counts.len(),
                vocab.len()
            )));
        }
        Ok(())
    }

    /// `USAGE v1 <count> <vocab-hash-hex> <corpus-id>` header, then one
    /// `id<TAB>count<TAB>special|piece` line per id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "USAGE v1 {} {} {}",
            self.counts.len(),
            hex(&self.vocab_hash),
            self.corpus_id
        )
        .unwrap();
        for (i, (c, s)) in self.counts.iter().zip(&self.specials).enumerate() {
            writeln!(out, "{i}\t{c}\t{}", if *s { "special" } else { "piece" }).unwrap();
        }
        out
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        let header = lines.next().unwrap_or_default();
        let fields: Vec<&str> = header.splitn(5, ' ').collect();
        if fields.len() < 4 || fields[0] != "USAGE" || fields[1] != "v1" {
            return Err(Error::parse(source_name, 1, "expected `USAGE v1 <count> <hash> <corpus>`"));
        }
        let n: usize = fields[2]
            .parse()
            .map_err(|_| Error::parse(source_name, 1, "bad entry count"))?;
        let vocab_hash = unhex(fields[3]).ok_or_else(|| Error::parse(source_name, 1, "bad hash"))?;
        let corpus_id = fields.get(4).copied().unwrap_or_default().to_string();
        let mut counts = Vec::with_capacity(n);
        let mut specials = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let lineno = i + 2;
            let cols: Vec<&str> = line.split('\t').collect();
            let parsed = (cols.len() == 3)
                .then(|| Some((cols[0].parse::<usize>().ok()?, cols[1].parse::<u64>().ok()?)))
                .flatten();
            let (id, count) =
                parsed.ok_or_else(|| Error::parse(source_name, lineno, "expected id<TAB>count<TAB>kind"))?;
            if id != counts.len() {
                return Err(Error::parse(source_name, lineno, format!("expected id {}", counts.len())));
            }
            let special = match cols[2] {
                "special" => true,
                "piece" => false,
                other => return Err(Error::parse(source_name, lineno, format!("unknown kind {other:?}"))),
            };
            counts.push(count);
            specials.push(special);
        }
        if counts.len() != n {
            return Err(Error::parse(source_name, 1, format!("header declares {n} ids, file has {}", counts.len())));
        }
        Ok(UsageCounts {
            counts,
            specials,
            corpus_id,
            vocab_hash,
        })
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

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<VocabHash> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(s.get(2 * i..2 * i + 2)?, 16).ok()?;
    }
    Some(out)
}

/// Segments every line with `model` and counts id occurrences. Shards are
/// counted in parallel and summed; integer addition makes the result
/// independent of scheduling.
pub fn count_usage<S: AsRef<str> + Sync>(
    model: &TokenizerModel,
    corpus: &[S],
    corpus_id: &str,
) -> UsageCounts {
    let n = model.len();
    let counts = corpus
        .par_chunks(LINES_PER_SHARD)
        .map(|shard| {
            let mut counts = vec![0u64; n];
            for line in shard {
                for id in model.encode_ids(line.as_ref()) {
                    counts[id as usize] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let specials = (0..n as u32).map(|id| model.is_special(id)).collect();
    UsageCounts {
        counts,
        specials,
        corpus_id: corpus_id.to_string(),
        vocab_hash: Vocabulary::from_model(model).hash(),
    }
}
