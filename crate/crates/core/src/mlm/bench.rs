use std::collections::BTreeSet;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mlm::forward::{BenchConfig, ComponentTimes, ToyModel};
use crate::mlm::masking::{mask_tokens, MaskingConfig};

pub const WARMUP_RUNS: usize = 2;
pub const MIN_REPEATS: usize = 5;
/// Reserved low ids in bench inputs: unk, pad, bos, eos, mask.
const BENCH_SPECIALS: u32 = 5;
const MLM_PROBABILITY: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingStats {
    pub mean_s: f64,
    pub stddev_s: f64,
    pub median_s: f64,
}

impl TimingStats {
    fn of(samples: &[Duration]) -> Self {
        let xs: Vec<f64> = samples.iter().map(Duration::as_secs_f64).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        };
        TimingStats {
            mean_s: mean,
            stddev_s: var.sqrt(),
            median_s: median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigTiming {
    pub config: BenchConfig,
    pub total: TimingStats,
    pub embedding: TimingStats,
    pub body: TimingStats,
    /// Output projection plus log-softmax.
    pub output: TimingStats,
    pub checksum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub large: ConfigTiming,
    pub small: ConfigTiming,
    /// `1 - mean_small / mean_large` over total forward time.
    pub reduction: f64,
    /// Fraction of the mean-time difference attributable to the output
    /// component.
    pub output_share_of_delta: f64,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Seeded `batch x seq_len` ids over the non-special range, MLM-masked.
pub fn bench_inputs(config: &BenchConfig) -> Result<Vec<u32>> {
    config.validate()?;
    if config.vocab as u32 <= BENCH_SPECIALS {
        return Err(Error::Input("bench vocabulary must exceed the special ids".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0x05ee_d1d5);
    let masking = MaskingConfig::new(
        MLM_PROBABILITY,
        BENCH_SPECIALS - 1,
        config.vocab as u32,
        (0..BENCH_SPECIALS).collect::<BTreeSet<_>>(),
    );
    let mut ids = Vec::with_capacity(config.batch * config.seq_len);
    for _ in 0..config.batch {
        let seq: Vec<u32> = (0..config.seq_len)
            .map(|_| rng.random_range(BENCH_SPECIALS..config.vocab as u32))
            .collect();
        let masked = mask_tokens(&seq, &masking, rng.random())?;
        ids.extend(masked.input_ids);
    }
    Ok(ids)
}

/// Times `config.repeats` forward passes after [`WARMUP_RUNS`] warm-ups.
pub fn time_config(config: &BenchConfig) -> Result<ConfigTiming> {
    if config.repeats < MIN_REPEATS {
        return Err(Error::Input(format!("at least {MIN_REPEATS} repeats are required")));
    }
    let model = ToyModel::random(config)?;
    let ids = bench_inputs(config)?;
    let mut checksum = 0.0;
    for _ in 0..WARMUP_RUNS {
        checksum = model.forward_timed(&ids)?.1;
    }
    let mut runs: Vec<ComponentTimes> = Vec::with_capacity(config.repeats);
    for _ in 0..config.repeats {
        let (times, c) = model.forward_timed(&ids)?;
        checksum = c;
        runs.push(times);
    }
    let stat = |f: fn(&ComponentTimes) -> Duration| {
        TimingStats::of(&runs.iter().map(f).collect::<Vec<_>>())
    };
    Ok(ConfigTiming {
        config: *config,
        total: stat(|t| t.total),
        embedding: stat(|t| t.embedding),
        body: stat(|t| t.body),
        output: stat(|t| t.output),
        checksum,
    })
}

/// Compares two configurations that differ only in vocabulary size.
pub fn run_bench(large: &BenchConfig, small: &BenchConfig) -> Result<BenchReport> {
    let same_shape = BenchConfig {
        vocab: small.vocab,
        ..*large
    } == *small;
    if !same_shape {
        return Err(Error::Input("bench configs may differ only in vocabulary size".into()));
    }
    let large_t = time_config(large)?;
    let small_t = time_config(small)?;
    let reduction = 1.0 - small_t.total.mean_s / large_t.total.mean_s;
    let delta_total = large_t.total.mean_s - small_t.total.mean_s;
    let delta_output = large_t.output.mean_s - small_t.output.mean_s;
    let output_share_of_delta = if delta_total != 0.0 {
        delta_output / delta_total
    } else {
        0.0
    };
    Ok(BenchReport {
        large: large_t,
        small: small_t,
        reduction,
        output_share_of_delta,
    })
}
