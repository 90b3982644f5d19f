//! Unigram language-model tokenizer: training, segmentation, model files.

mod lattice;
mod model;
mod normalize;
mod trainer;

pub use model::{Piece, Segmentation, SpecialRole, TokenizerModel};
pub use normalize::{collapse_whitespace, Normalization};
pub use trainer::{train_unigram, UnigramTrainer};
