//! Seeded synthetic corpora in several scripts, used as desk-scale
//! stand-ins for real pre-training text.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

/// Writing system of a synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Script {
    Latin,
    Han,
    Tibetan,
    Mongolian,
}

impl Script {
    fn onsets(self) -> Vec<char> {
        match self {
            Script::Latin => "bcdfghjklmnprstvwz".chars().collect(),
            Script::Han => ('\u{4E00}'..='\u{4E3F}').collect(),
            Script::Tibetan => ('\u{0F40}'..='\u{0F63}').filter(|c| *c != '\u{0F48}').collect(),
            Script::Mongolian => ('\u{1820}'..='\u{1842}').collect(),
        }
    }

    fn nuclei(self) -> Vec<&'static str> {
        match self {
            Script::Latin => vec!["a", "e", "i", "o", "u", "ai", "ou"],
            Script::Han => vec![""],
            Script::Tibetan => vec!["", "\u{0F72}", "\u{0F74}", "\u{0F7A}", "\u{0F7C}"],
            Script::Mongolian => vec!["", "\u{1820}", "\u{1821}", "\u{1822}", "\u{1823}"],
        }
    }

    /// Joiner placed between syllables of one word.
    fn syllable_separator(self) -> &'static str {
        match self {
            Script::Tibetan => "\u{0F0B}",
            _ => "",
        }
    }
}

/// Generator of Zipf-distributed text over a fixed synthetic lexicon.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    lexicon: Vec<String>,
    zipf: Zipf<f64>,
    words_per_line: (usize, usize),
}

impl SyntheticCorpus {
    pub fn new(script: Script, lexicon_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let onsets = script.onsets();
        let nuclei = script.nuclei();
        let sep = script.syllable_separator();
        let mut lexicon = Vec::with_capacity(lexicon_size);
        let mut seen = std::collections::HashSet::new();
        while lexicon.len() < lexicon_size {
            let syllables = rng.random_range(1..=4);
            let word: Vec<String> = (0..syllables)
                .map(|_| {
                    let mut s = String::new();
                    s.push(onsets[rng.random_range(0..onsets.len())]);
                    s.push_str(nuclei[rng.random_range(0..nuclei.len())]);
                    s
                })
                .collect();
            let word = word.join(sep);
            if seen.insert(word.clone()) {
                lexicon.push(word);
            }
        }
        SyntheticCorpus {
            zipf: Zipf::new(lexicon_size as f64, 1.1).expect("valid zipf parameters"),
            lexicon,
            words_per_line: (6, 16),
        }
    }

    pub fn lexicon(&self) -> &[String] {
        &self.lexicon
    }

    /// `n` lines of text; identical seeds give identical lines.
    pub fn lines(&self, n: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.line(&mut rng)).collect()
    }

    /// Lines until at least `bytes` bytes of UTF-8 (newlines included).
    pub fn lines_of_bytes(&self, bytes: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut total = 0;
        while total < bytes {
            let line = self.line(&mut rng);
            total += line.len() + 1;
            out.push(line);
        }
        out
    }

    fn line(&self, rng: &mut ChaCha8Rng) -> String {
        let (lo, hi) = self.words_per_line;
        let n = rng.random_range(lo..=hi);
        let words: Vec<&str> = (0..n)
            .map(|_| {
                let rank = self.zipf.sample(rng) as usize;
                self.lexicon[(rank - 1).min(self.lexicon.len() - 1)].as_str()
            })
            .collect();
        words.join(" ")
    }
}
