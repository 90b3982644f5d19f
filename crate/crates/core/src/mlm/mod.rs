//! MLM input masking and a toy forward-pass benchmark over the
//! vocabulary-dependent output layer.

mod bench;
mod forward;
mod masking;

pub use bench::{bench_inputs, run_bench, time_config, BenchReport, ConfigTiming, TimingStats, MIN_REPEATS, WARMUP_RUNS};
pub use forward::{log_softmax_in_place, toy_forward, BenchConfig, ComponentTimes, LogProbs, ToyModel};
pub use masking::{mask_tokens, MaskedBatch, MaskingConfig, IGNORE_LABEL, MAX_SEQ_LEN};
