pub mod dataset;
pub mod error;
pub mod metrics;
pub mod mlm;
pub mod pipeline;
pub mod synth;
pub mod tokenizer;
pub mod vocab;

pub use error::{Error, Result};
