//! Vocabulary merge, embedding extension, usage-based pruning and model
//! size estimation.

mod embedding;
mod prune;
mod size;
mod usage;
mod vocabulary;

pub use embedding::{extend_embeddings, EmbeddingMatrix, InitInterp};
pub use prune::{prune, prune_model, IdRemap, PruneOutcome};
pub use size::{estimate_model_size, ModelShape, SizeEstimate, MAX_POSITIONS};
pub use usage::{count_usage, UsageCounts};
pub use vocabulary::{merge_models, merge_vocabularies, Origin, VocabHash, Vocabulary};
