//! Unigram-LM trainer: substring seeding, EM, and loss-based pruning down
//! to an exact vocabulary size.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tokenizer::lattice::Lattice;
use crate::tokenizer::model::{byte_surface, is_reserved_surface, Piece, SpecialRole, TokenizerModel};
use crate::tokenizer::normalize::Normalization;

/// Sentences per E-step shard. Shard results are reduced in shard order,
/// so the fitted model does not depend on the thread count.
const SHARD_SIZE: usize = 512;
/// Pieces whose expected count falls below this are dropped in the M-step
/// while the vocabulary is still above target.
const MIN_EXPECTED_COUNT: f64 = 0.5;
/// Count floor before normalization, keeps every log-prob finite.
const COUNT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct UnigramTrainer {
    /// Entries in the final model, specials and byte pieces included.
    pub vocab_size: usize,
    /// Seed inventory is `seed_multiplier * vocab_size` pieces.
    pub seed_multiplier: f64,
    pub specials: Vec<SpecialRole>,
    pub normalization: Normalization,
    pub byte_fallback: bool,
    pub max_piece_chars: usize,
    pub em_iterations: usize,
    pub prune_fraction: f64,
}

impl UnigramTrainer {
    pub fn new(vocab_size: usize, seed_multiplier: f64) -> Self {
        UnigramTrainer {
            vocab_size,
            seed_multiplier,
            specials: SpecialRole::ALL.to_vec(),
            normalization: Normalization::default(),
            byte_fallback: false,
            max_piece_chars: 8,
            em_iterations: 2,
            prune_fraction: 0.2,
        }
    }

    pub fn with_specials(mut self, specials: Vec<SpecialRole>) -> Self {
        self.specials = specials;
        self
    }

    pub fn with_byte_fallback(mut self, on: bool) -> Self {
        self.byte_fallback = on;
        self
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn train<I, S>(&self, corpus: I) -> Result<TokenizerModel>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if !(self.seed_multiplier > 1.0) {
            return Err(Error::Config(format!(
                "seed multiplier must exceed 1, got {}",
                self.seed_multiplier
            )));
        }
        if !(self.prune_fraction > 0.0 && self.prune_fraction < 1.0) {
            return Err(Error::Config("prune fraction must lie in (0, 1)".into()));
        }
        if self.em_iterations == 0 || self.max_piece_chars == 0 {
            return Err(Error::Config(
                "EM iterations and max piece length must be positive".into(),
            ));
        }

        let sentences = self.collect_sentences(corpus);
        if sentences.is_empty() {
            return Err(Error::Input("training corpus is empty".into()));
        }

        let mut char_freq: BTreeMap<char, u64> = BTreeMap::new();
        for (s, count) in &sentences {
            for c in s.chars() {
                *char_freq.entry(c).or_default() += count;
            }
        }
        let reserved = self.specials.len() + if self.byte_fallback { 256 } else { 0 };
        let floor = reserved + char_freq.len();
        if self.vocab_size < floor {
            return Err(Error::Config(format!(
                "vocab size {} is below the floor of {floor} ({} specials/bytes + {} characters)",
                self.vocab_size,
                reserved,
                char_freq.len()
            )));
        }
        let target = self.vocab_size - reserved;

        let mut pieces = self.seed_pieces(&sentences, &char_freq, target)?;
        let n_chars = char_freq.len();

        loop {
            for _ in 0..self.em_iterations {
                let counts = expected_counts(&pieces, &sentences, self.max_piece_chars);
                pieces = m_step(pieces, counts, n_chars, target);
            }
            if pieces.len() <= target {
                break;
            }
            pieces = self.prune_round(pieces, &sentences, n_chars, target);
        }
        debug_assert_eq!(pieces.len(), target);

        pieces.sort_by(|a, b| {
            b.log_prob
                .total_cmp(&a.log_prob)
                .then_with(|| a.surface.cmp(&b.surface))
        });
        let mut learned: Vec<Piece> = pieces
            .into_iter()
            .map(|c| Piece {
                surface: c.surface,
                log_prob: c.log_prob,
            })
            .collect();
        if self.byte_fallback {
            let min = learned
                .iter()
                .map(|p| p.log_prob)
                .fold(0.0f64, f64::min);
            let mut all: Vec<Piece> = (0..=255u8)
                .map(|b| Piece {
                    surface: byte_surface(b),
                    log_prob: min - 10.0,
                })
                .collect();
            all.append(&mut learned);
            learned = all;
        }
        TokenizerModel::new(self.specials.clone(), learned, self.normalization)
    }

    /// Whitespace-separated words with counts, plus `" "` weighted by the
    /// number of spaces, so the space character is learned as a piece.
    fn collect_sentences<I, S>(&self, corpus: I) -> Vec<(String, u64)>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut words: BTreeMap<String, u64> = BTreeMap::new();
        let mut spaces = 0u64;
        for line in corpus {
            let norm = self.normalization.apply(line.as_ref());
            for word in norm.split(' ').filter(|w| !w.is_empty()) {
                *words.entry(word.to_string()).or_default() += 1;
            }
            spaces += norm.matches(' ').count() as u64;
        }
        if spaces > 0 {
            *words.entry(" ".to_string()).or_default() += spaces;
        }
        words.into_iter().collect()
    }

    fn seed_pieces(
        &self,
        sentences: &[(String, u64)],
        char_freq: &BTreeMap<char, u64>,
        target: usize,
    ) -> Result<Vec<Candidate>> {
        let mut sub_freq: HashMap<&str, u64> = HashMap::new();
        for (s, count) in sentences {
            let offsets: Vec<usize> = s
                .char_indices()
                .map(|(i, _)| i)
                .chain(std::iter::once(s.len()))
                .collect();
            let n = offsets.len() - 1;
            for start in 0..n {
                for end in start + 2..=(start + self.max_piece_chars).min(n) {
                    *sub_freq.entry(&s[offsets[start]..offsets[end]]).or_default() += count;
                }
            }
        }
        let mut multi: Vec<(&str, u64, usize)> = sub_freq
            .into_iter()
            .filter(|(s, _)| !is_reserved_surface(s))
            .map(|(s, f)| (s, f, s.chars().count()))
            .collect();
        if char_freq.len() + multi.len() < target {
            return Err(Error::Config(format!(
                "corpus yields only {} candidate pieces, fewer than the {target} requested",
                char_freq.len() + multi.len()
            )));
        }
        multi.sort_by(|a, b| {
            (b.1 * b.2 as u64)
                .cmp(&(a.1 * a.2 as u64))
                .then_with(|| a.0.cmp(b.0))
        });
        let seed_total = (self.seed_multiplier * self.vocab_size as f64).ceil() as usize;
        let keep = seed_total.saturating_sub(char_freq.len()).max(target - char_freq.len());
        multi.truncate(keep);

        let mut pieces: Vec<Candidate> = char_freq
            .iter()
            .map(|(c, f)| Candidate {
                surface: c.to_string(),
                log_prob: *f as f64,
                is_char: true,
            })
            .collect();
        pieces.extend(multi.into_iter().map(|(s, f, len)| Candidate {
            surface: s.to_string(),
            log_prob: (f * len as u64) as f64,
            is_char: false,
        }));
        let total: f64 = pieces.iter().map(|p| p.log_prob).sum();
        let log_total = total.ln();
        for p in &mut pieces {
            p.log_prob = p.log_prob.ln() - log_total;
        }
        Ok(pieces)
    }

    /// One pruning round: drops the prunable pieces whose removal costs the
    /// least corpus likelihood, never going below `target`.
    fn prune_round(
        &self,
        pieces: Vec<Candidate>,
        sentences: &[(String, u64)],
        n_chars: usize,
        target: usize,
    ) -> Vec<Candidate> {
        let index = piece_index(&pieces);
        let max_chars = self.max_piece_chars;

        // Viterbi frequency of each piece.
        let shards: Vec<(Vec<f64>, f64)> = sentences
            .par_chunks(SHARD_SIZE)
            .map(|shard| {
                let mut freq = vec![0.0; pieces.len()];
                let mut vsum = 0.0;
                for (s, count) in shard {
                    let count = *count as f64;
                    vsum += count;
                    let lattice =
                        Lattice::build(s, max_chars, |sub| lookup(&index, &pieces, sub, None));
                    let (_, path) = lattice.viterbi().expect("characters cover every word");
                    for (_, edge) in path {
                        freq[edge.piece as usize] += count;
                    }
                }
                (freq, vsum)
            })
            .collect();
        let mut freq = vec![0.0; pieces.len()];
        let mut vsum = 0.0;
        for (f, v) in shards {
            for (acc, x) in freq.iter_mut().zip(f) {
                *acc += x;
            }
            vsum += v;
        }
        let sum: f64 = freq.iter().sum();
        let log_sum = sum.ln();

        // Loss of removing piece i: its occurrences are re-segmented with
        // the best alternative that avoids it.
        let losses: Vec<Option<f64>> = (0..pieces.len())
            .into_par_iter()
            .map(|i| {
                if pieces[i].is_char {
                    return None;
                }
                if freq[i] == 0.0 {
                    return Some(f64::NEG_INFINITY);
                }
                let lattice = Lattice::build(&pieces[i].surface, max_chars, |sub| {
                    lookup(&index, &pieces, sub, Some(i))
                });
                let (_, alt) = lattice.viterbi().expect("characters cover every piece");
                let f = freq[i] / vsum;
                let logprob_sp = freq[i].ln() - log_sum;
                let log_sum_alt = (sum + freq[i] * (alt.len() as f64 - 1.0)).ln();
                let logprob_alt: f64 = alt
                    .iter()
                    .map(|(_, e)| (freq[e.piece as usize] + freq[i]).ln() - log_sum_alt)
                    .sum();
                Some(f * (logprob_sp - logprob_alt))
            })
            .collect();

        let mut prunable: Vec<(usize, f64)> = losses
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|l| (i, l)))
            .collect();
        let excess = pieces.len() - target;
        let quota = ((prunable.len() as f64 * self.prune_fraction).ceil() as usize).max(1);
        let remove = quota.min(excess).min(pieces.len() - n_chars);
        prunable.sort_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then_with(|| pieces[a.0].surface.cmp(&pieces[b.0].surface))
        });
        let mut drop = vec![false; pieces.len()];
        for &(i, _) in prunable.iter().take(remove) {
            drop[i] = true;
        }
        pieces
            .into_iter()
            .zip(drop)
            .filter_map(|(p, d)| (!d).then_some(p))
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    surface: String,
    log_prob: f64,
    is_char: bool,
}

fn piece_index(pieces: &[Candidate]) -> HashMap<&str, usize> {
    pieces
        .iter()
        .enumerate()
        .map(|(i, p)| (p.surface.as_str(), i))
        .collect()
}

fn lookup(
    index: &HashMap<&str, usize>,
    pieces: &[Candidate],
    sub: &str,
    exclude: Option<usize>,
) -> Option<(u32, f64)> {
    index
        .get(sub)
        .filter(|&&i| Some(i) != exclude)
        .map(|&i| (i as u32, pieces[i].log_prob))
}

fn expected_counts(pieces: &[Candidate], sentences: &[(String, u64)], max_chars: usize) -> Vec<f64> {
    let index = piece_index(pieces);
    let shards: Vec<Vec<f64>> = sentences
        .par_chunks(SHARD_SIZE)
        .map(|shard| {
            let mut counts = vec![0.0; pieces.len()];
            for (s, count) in shard {
                let lattice = Lattice::build(s, max_chars, |sub| lookup(&index, pieces, sub, None));
                lattice.accumulate_expected(*count as f64, &mut counts);
            }
            counts
        })
        .collect();
    let mut total = vec![0.0; pieces.len()];
    for shard in shards {
        for (t, c) in total.iter_mut().zip(shard) {
            *t += c;
        }
    }
    total
}

/// Re-estimates log-probs from expected counts. While above target, the
/// rarest non-character pieces below [`MIN_EXPECTED_COUNT`] are dropped.
fn m_step(pieces: Vec<Candidate>, counts: Vec<f64>, n_chars: usize, target: usize) -> Vec<Candidate> {
    let mut excess = pieces.len().saturating_sub(target);
    let mut rare: Vec<usize> = (0..pieces.len())
        .filter(|&i| !pieces[i].is_char && counts[i] < MIN_EXPECTED_COUNT)
        .collect();
    rare.sort_by(|&a, &b| {
        counts[a]
            .total_cmp(&counts[b])
            .then_with(|| pieces[a].surface.cmp(&pieces[b].surface))
    });
    let mut drop = vec![false; pieces.len()];
    let mut remaining = pieces.len();
    for i in rare {
        if excess == 0 || remaining == n_chars {
            break;
        }
        drop[i] = true;
        excess -= 1;
        remaining -= 1;
    }
    let kept: Vec<(Candidate, f64)> = pieces
        .into_iter()
        .zip(counts)
        .zip(drop)
        .filter_map(|(pc, d)| (!d).then_some(pc))
        .collect();
    let total: f64 = kept.iter().map(|(_, c)| c.max(COUNT_FLOOR)).sum();
    let log_total = total.ln();
    kept.into_iter()
        .map(|(mut p, c)| {
            p.log_prob = (c.max(COUNT_FLOOR).ln() - log_total).min(0.0);
            p
        })
        .collect()
}

/// Trains with the default trainer settings.
pub fn train_unigram<I, S>(corpus: I, vocab_size: usize, seed_multiplier: f64) -> Result<TokenizerModel>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    UnigramTrainer::new(vocab_size, seed_multiplier).train(corpus)
}
