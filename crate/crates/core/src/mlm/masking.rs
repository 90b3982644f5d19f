use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_SEQ_LEN: usize = 256;
/// Label value at positions that were not selected for prediction.
pub const IGNORE_LABEL: i64 = -100;

/// Masking parameters for the usual MLM recipe: each selected position is
/// replaced by the mask token 80% of the time, by a random non-special
/// token 10%, and left unchanged 10%.
#[derive(Debug, Clone)]
pub struct MaskingConfig {
    pub probability: f64,
    pub mask_id: u32,
    pub vocab_size: u32,
    pub specials: BTreeSet<u32>,
}

impl MaskingConfig {
    pub fn new(probability: f64, mask_id: u32, vocab_size: u32, specials: BTreeSet<u32>) -> Self {
        MaskingConfig {
            probability,
            mask_id,
            vocab_size,
            specials,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBatch {
    pub input_ids: Vec<u32>,
    pub labels: Vec<i64>,
    pub mask: Vec<bool>,
}

pub fn mask_tokens(ids: &[u32], config: &MaskingConfig, seed: u64) -> Result<MaskedBatch> {
    let p = config.probability;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Input(format!("masking probability {p} is outside [0, 1]")));
    }
    if ids.len() > MAX_SEQ_LEN {
        return Err(Error::Input(format!(
            "sequence of {} tokens exceeds the maximum of {MAX_SEQ_LEN}",
            ids.len()
        )));
    }
    if config.vocab_size as usize <= config.specials.len() {
        return Err(Error::Input("vocabulary has no non-special tokens".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input_ids = ids.to_vec();
    let mut labels = vec![IGNORE_LABEL; ids.len()];
    let mut mask = vec![false; ids.len()];
    for (i, &id) in ids.iter().enumerate() {
        if config.specials.contains(&id) {
            continue;
        }
        if !rng.random_bool(p) {
            continue;
        }
        mask[i] = true;
        labels[i] = id as i64;
        let roll: f64 = rng.random();
        if roll < 0.8 {
            input_ids[i] = config.mask_id;
        } else if roll < 0.9 {
            input_ids[i] = loop {
                let candidate = rng.random_range(0..config.vocab_size);
                if !config.specials.contains(&candidate) {
                    break candidate;
                }
            };
        }
    }
    Ok(MaskedBatch {
        input_ids,
        labels,
        mask,
    })
}
