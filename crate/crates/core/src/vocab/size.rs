//! Parameter-count estimate for an encoder-only transformer with a masked-LM
//! head (input embeddings tied to the output projection).

use serde::Serialize;

use crate::error::{Error, Result};

/// Learned position slots of the reference encoder family (512 + 2 offset).
pub const MAX_POSITIONS: u64 = 514;
pub const TOKEN_TYPES: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelShape {
    pub vocab: u64,
    pub hidden: u64,
    pub layers: u64,
    pub heads: u64,
    pub ff_multiplier: f64,
    pub bytes_per_param: u64,
}

impl ModelShape {
    pub fn base(vocab: u64) -> Self {
        ModelShape {
            vocab,
            hidden: 768,
            layers: 12,
            heads: 12,
            ff_multiplier: 4.0,
            bytes_per_param: 4,
        }
    }

    pub fn large(vocab: u64) -> Self {
        ModelShape {
            vocab,
            hidden: 1024,
            layers: 24,
            heads: 16,
            ff_multiplier: 4.0,
            bytes_per_param: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SizeEstimate {
    pub embedding_params: u64,
    pub encoder_params: u64,
    pub head_params: u64,
    pub total_params: u64,
    pub bytes: u64,
}

/// Counts parameters as:
/// - embeddings: token `V*D`, position `514*D`, token-type `D`, layer norm `2D`
/// - per layer: Q/K/V/O projections `4(D^2 + D)`, feed-forward
///   `2*D*F + F + D` with `F = ff_multiplier * D`, two layer norms `4D`
/// - MLM head: dense `D^2 + D`, layer norm `2D`, output bias `V`; the
///   output weight is the tied token embedding and is not counted again.
pub fn estimate_model_size(shape: ModelShape) -> Result<SizeEstimate> {
    let ModelShape {
        vocab: v,
        hidden: d,
        layers,
        heads,
        ff_multiplier,
        bytes_per_param,
    } = shape;
    if v == 0 || d == 0 || layers == 0 || heads == 0 || bytes_per_param == 0 {
        return Err(Error::Input(
            "vocab, hidden, layers, heads and bytes per parameter must all be positive".into(),
        ));
    }
    if !(ff_multiplier > 0.0) {
        return Err(Error::Input("feed-forward multiplier must be positive".into()));
    }
    if d % heads != 0 {
        return Err(Error::Input(format!("hidden size {d} is not divisible by {heads} heads")));
    }
    let ff = (ff_multiplier * d as f64).round() as u64;
    let embedding_params = v * d + MAX_POSITIONS * d + TOKEN_TYPES * d + 2 * d;
    let per_layer = 4 * (d * d + d) + (2 * d * ff + ff + d) + 4 * d;
    let encoder_params = layers * per_layer;
    let head_params = d * d + d + 2 * d + v;
    let total_params = embedding_params + encoder_params + head_params;
    Ok(SizeEstimate {
        embedding_params,
        encoder_params,
        head_params,
        total_params,
        bytes: total_params * bytes_per_param,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_layer_count_by_hand() {
        // one 768-wide layer: 4*(768^2+768) + (2*768*3072 + 3072 + 768) + 4*768
        let e = estimate_model_size(ModelShape { layers: 1, ..ModelShape::base(10) }).unwrap();
        assert_eq!(e.encoder_params, 2_362_368 + 4_722_432 + 3_072);
        assert_eq!(e.embedding_params, 10 * 768 + 514 * 768 + 768 + 1_536);
        assert_eq!(e.head_params, 589_824 + 768 + 1_536 + 10);
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(estimate_model_size(ModelShape::base(0)).is_err());
        assert!(estimate_model_size(ModelShape { layers: 0, ..ModelShape::base(5) }).is_err());
        assert!(estimate_model_size(ModelShape { heads: 7, ..ModelShape::base(5) }).is_err());
    }

    #[test]
    fn bytes_scale_with_precision() {
        let f32 = estimate_model_size(ModelShape::base(1000)).unwrap();
        let f16 = estimate_model_size(ModelShape { bytes_per_param: 2, ..ModelShape::base(1000) }).unwrap();
        assert_eq!(f32.bytes, 2 * f16.bytes);
    }
}
