//! Transformer-shaped toy forward pass: embedding lookup, residual dense
//! blocks, tied output projection to the vocabulary, log-softmax.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlm::masking::{MaskedBatch, MAX_SEQ_LEN};

/// Vocabulary columns projected at once. All rows of one block stay in
/// cache while their normalizers are updated.
const COLUMN_BLOCK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub vocab: usize,
    pub hidden: usize,
    pub layers: usize,
    pub seq_len: usize,
    pub batch: usize,
    pub repeats: usize,
    pub rng_seed: u64,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let BenchConfig {
            vocab,
            hidden,
            layers,
            seq_len,
            batch,
            repeats,
            ..
        } = *self;
        if [vocab, hidden, layers, seq_len, batch, repeats].contains(&0) {
            return Err(Error::Input("bench sizes must all be positive".into()));
        }
        if seq_len > MAX_SEQ_LEN {
            return Err(Error::Input(format!("sequence length {seq_len} exceeds {MAX_SEQ_LEN}")));
        }
        if u32::try_from(vocab).is_err() {
            return Err(Error::Input(format!("vocabulary {vocab} does not fit u32 ids")));
        }
        Ok(())
    }
}

/// Row-major `rows x vocab` log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbs {
    pub rows: usize,
    pub vocab: usize,
    pub data: Vec<f32>,
}

impl LogProbs {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.vocab..(i + 1) * self.vocab]
    }
}

/// Wall time of each forward component.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComponentTimes {
    pub embedding: Duration,
    pub body: Duration,
    pub output: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone)]
struct Block {
    weight: Vec<f32>,
    bias: Vec<f32>,
}

/// Weights of the toy model; the token embedding doubles as the output
/// projection.
#[derive(Debug, Clone)]
pub struct ToyModel {
    vocab: usize,
    hidden: usize,
    embedding: Vec<f32>,
    blocks: Vec<Block>,
    output_bias: Vec<f32>,
}

impl ToyModel {
    /// Gaussian weights from `config.rng_seed`.
    pub fn random(config: &BenchConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let normal = Normal::new(0.0f32, 0.02).expect("valid std");
        let d = config.hidden;
        let mut draw = |n: usize| -> Vec<f32> { (0..n).map(|_| normal.sample(&mut rng)).collect() };
        let embedding = draw(config.vocab * d);
        let blocks = (0..config.layers)
            .map(|_| Block {
                weight: draw(d * d),
                bias: vec![0.0; d],
            })
            .collect();
        Ok(ToyModel {
            vocab: config.vocab,
            hidden: d,
            embedding,
            blocks,
            output_bias: vec![0.0; config.vocab],
        })
    }

    /// Explicit weights. `blocks` holds `(weight D x D, bias D)` pairs.
    pub fn from_parts(
        vocab: usize,
        hidden: usize,
        embedding: Vec<f32>,
        blocks: Vec<(Vec<f32>, Vec<f32>)>,
        output_bias: Vec<f32>,
    ) -> Result<Self> {
        if embedding.len() != vocab * hidden || output_bias.len() != vocab {
            return Err(Error::Input("embedding or bias has the wrong shape".into()));
        }
        let blocks = blocks
            .into_iter()
            .map(|(weight, bias)| {
                if weight.len() != hidden * hidden || bias.len() != hidden {
                    Err(Error::Input("block weights have the wrong shape".into()))
                } else {
                    Ok(Block { weight, bias })
                }
            })
            .collect::<Result<_>>()?;
        Ok(ToyModel {
            vocab,
            hidden,
            embedding,
            blocks,
            output_bias,
        })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.vocab) {
            Some(id) => Err(Error::Input(format!(
                "token id {id} out of range for vocabulary {}",
                self.vocab
            ))),
            None => Ok(()),
        }
    }

    fn hidden_states(&self, ids: &[u32], times: &mut ComponentTimes) -> Vec<f32> {
        let d = self.hidden;
        let n = ids.len();
        let t = Instant::now();
        let mut h = Vec::with_capacity(n * d);
        for &id in ids {
            let id = id as usize;
            h.extend_from_slice(&self.embedding[id * d..(id + 1) * d]);
        }
        times.embedding += t.elapsed();

        let t = Instant::now();
        let mut tmp = vec![0.0f32; n * d];
        for block in &self.blocks {
            sgemm(n, d, d, &h, d, 1, &block.weight, d, 1, &mut tmp, false);
            for row in 0..n {
                for j in 0..d {
                    h[row * d + j] += (tmp[row * d + j] + block.bias[j]).tanh();
                }
            }
        }
        times.body += t.elapsed();
        h
    }

    /// Projects `h` to logits one vocabulary block at a time, keeping a
    /// running max and sum of exponentials per row. `sink` receives each
    /// block (`rows x width`, starting at column `c0`); the returned values
    /// are the per-row log normalizers.
    fn project<F: FnMut(usize, usize, &[f32])>(&self, h: &[f32], times: &mut ComponentTimes, mut sink: F) -> Vec<f32> {
        let d = self.hidden;
        let v = self.vocab;
        let n = h.len() / d;
        let t = Instant::now();
        let mut max = vec![f32::NEG_INFINITY; n];
        let mut sum = vec![0.0f64; n];
        let mut block = vec![0.0f32; n * COLUMN_BLOCK.min(v)];
        let mut c0 = 0;
        while c0 < v {
            let width = COLUMN_BLOCK.min(v - c0);
            let blk = &mut block[..n * width];
            for r in 0..n {
                blk[r * width..(r + 1) * width].copy_from_slice(&self.output_bias[c0..c0 + width]);
            }
            // embedding rows c0.. are V x D; read them transposed as D x width
            sgemm(n, d, width, h, d, 1, &self.embedding[c0 * d..], 1, d, blk, true);
            for r in 0..n {
                let row = &blk[r * width..(r + 1) * width];
                let m = row.iter().copied().fold(max[r], f32::max);
                if m > max[r] {
                    sum[r] *= ((max[r] - m) as f64).exp();
                    max[r] = m;
                }
                sum[r] += row.iter().map(|&x| (x - m).exp() as f64).sum::<f64>();
            }
            sink(c0, width, blk);
            c0 += width;
        }
        let log_z = max.iter().zip(&sum).map(|(&m, &s)| m + s.ln() as f32).collect();
        times.output += t.elapsed();
        log_z
    }

    pub fn forward(&self, ids: &[u32]) -> Result<LogProbs> {
        self.check_ids(ids)?;
        let mut times = ComponentTimes::default();
        let h = self.hidden_states(ids, &mut times);
        let v = self.vocab;
        let mut data = vec![0.0f32; ids.len() * v];
        let log_z = self.project(&h, &mut times, |c0, width, blk| {
            for (r, row) in blk.chunks_exact(width).enumerate() {
                data[r * v + c0..r * v + c0 + width].copy_from_slice(row);
            }
        });
        for (row, z) in data.chunks_exact_mut(v.max(1)).zip(log_z) {
            for x in row {
                *x -= z;
            }
        }
        Ok(LogProbs {
            rows: ids.len(),
            vocab: v,
            data,
        })
    }

    /// Full forward pass with per-component timing. Log-probabilities are
    /// reduced to a checksum so large vocabularies never materialize the
    /// whole output.
    pub fn forward_timed(&self, ids: &[u32]) -> Result<(ComponentTimes, f64)> {
        self.check_ids(ids)?;
        let total = Instant::now();
        let mut times = ComponentTimes::default();
        let h = self.hidden_states(ids, &mut times);
        let mut targets = vec![0.0f32; ids.len()];
        let log_z = self.project(&h, &mut times, |c0, width, blk| {
            for (r, &id) in ids.iter().enumerate() {
                let id = id as usize;
                if (c0..c0 + width).contains(&id) {
                    targets[r] = blk[r * width + id - c0];
                }
            }
        });
        let checksum = targets.iter().zip(&log_z).map(|(&t, &z)| (t - z) as f64).sum();
        times.total = total.elapsed();
        Ok((times, checksum))
    }
}

/// `c = a(m x k) * b(k x n)` (or `c += ...` when `accumulate`), with
/// explicit row/column strides for `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn sgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    c: &mut [f32],
    accumulate: bool,
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn log_softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let sum: f64 = row.iter().map(|&x| (x - max).exp() as f64).sum();
    let log_z = max + sum.ln() as f32;
    for x in row.iter_mut() {
        *x -= log_z;
    }
}

/// Log-probabilities for one masked sequence under a model seeded from
/// `config`.
pub fn toy_forward(config: &BenchConfig, batch: &MaskedBatch) -> Result<LogProbs> {
    let model = ToyModel::random(config)?;
    if batch.input_ids.len() > MAX_SEQ_LEN {
        return Err(Error::Input("sequence longer than the maximum".into()));
    }
    model.forward(&batch.input_ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchConfig {
        BenchConfig {
            vocab: 300,
            hidden: 16,
            layers: 2,
            seq_len: 10,
            batch: 1,
            repeats: 1,
            rng_seed: 11,
        }
    }

    fn batch(ids: Vec<u32>) -> MaskedBatch {
        let n = ids.len();
        MaskedBatch {
            input_ids: ids,
            labels: vec![-100; n],
            mask: vec![false; n],
        }
    }

    #[test]
    fn rows_are_log_distributions() {
        let out = toy_forward(&small(), &batch((0..10).map(|i| i * 29).collect())).unwrap();
        for r in 0..out.rows {
            let s: f64 = out.row(r).iter().map(|&x| (x as f64).exp()).sum();
            assert!((s - 1.0).abs() < 1e-5, "row {r} sums to {s}");
        }
    }

    #[test]
    fn two_logit_closed_form() {
        // V=2, D=1, zero block (tanh(0)=0 keeps h), embedding [1, -1]
        let m = ToyModel::from_parts(2, 1, vec![1.0, -1.0], vec![(vec![0.0], vec![0.0])], vec![0.0, 0.0])
            .unwrap();
        let out = m.forward(&[0, 1]).unwrap();
        // token 0: h=1, logits [1, -1]
        let l0 = -(1.0f64 + (-2.0f64).exp()).ln();
        let l1 = -2.0 + l0;
        assert!((out.row(0)[0] as f64 - l0).abs() < 1e-6);
        assert!((out.row(0)[1] as f64 - l1).abs() < 1e-6);
        // token 1: h=-1, logits [-1, 1]
        assert!((out.row(1)[1] as f64 - l0).abs() < 1e-6);
        assert!((out.row(1)[0] as f64 - l1).abs() < 1e-6);
    }

    #[test]
    fn seeded_outputs_are_bit_identical() {
        let b = batch(vec![3, 1, 4, 1, 5, 9, 2, 6]);
        let x = toy_forward(&small(), &b).unwrap();
        let y = toy_forward(&small(), &b).unwrap();
        let bits = |l: &LogProbs| l.data.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&x), bits(&y));
    }

    #[test]
    fn out_of_range_id_rejected() {
        assert!(toy_forward(&small(), &batch(vec![300])).is_err());
    }

    #[test]
    fn timed_forward_agrees_with_forward() {
        let m = ToyModel::random(&BenchConfig { vocab: 1000, ..small() }).unwrap();
        let ids: Vec<u32> = (0..150).map(|i| (i * 7) % 1000).collect();
        let full = m.forward(&ids).unwrap();
        let expect: f64 = ids.iter().enumerate().map(|(r, &id)| full.row(r)[id as usize] as f64).sum();
        let (times, checksum) = m.forward_timed(&ids).unwrap();
        assert!((checksum - expect).abs() < 1e-9);
        assert!(times.total >= times.output);
    }

    #[test]
    fn blocked_normalizer_matches_direct_log_softmax() {
        let m = ToyModel::random(&BenchConfig { vocab: COLUMN_BLOCK * 2 + 77, hidden: 8, ..small() }).unwrap();
        let b = COLUMN_BLOCK as u32;
        let ids = [0, b + 3, 2 * b + 76];
        let out = m.forward(&ids).unwrap();
        let mut times = ComponentTimes::default();
        let h = m.hidden_states(&ids, &mut times);
        for (r, hr) in h.chunks_exact(8).enumerate() {
            let mut logits: Vec<f32> = (0..m.vocab)
                .map(|j| (0..8).map(|k| hr[k] * m.embedding[j * 8 + k]).sum::<f32>() + m.output_bias[j])
                .collect();
            log_softmax_in_place(&mut logits);
            for (a, b) in logits.iter().zip(out.row(r)) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(BenchConfig { seq_len: 257, ..small() }.validate().is_err());
        assert!(BenchConfig { layers: 0, ..small() }.validate().is_err());
    }
}
