use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::vocab::vocabulary::{VocabHash, Vocabulary};

const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 4 + 8 + 8 + 32;

/// The Gaussian parameter used for freshly appended rows is 0.02; this
/// selects whether that number is the variance or the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitInterp {
    #[default]
    Variance,
    StdDev,
}

impl InitInterp {
    pub const PARAMETER: f64 = 0.02;

    pub fn std_dev(self) -> f64 {
        match self {
            InitInterp::Variance => Self::PARAMETER.sqrt(),
            InitInterp::StdDev => Self::PARAMETER,
        }
    }
}

impl FromStr for InitInterp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance" => Ok(InitInterp::Variance),
            "stddev" => Ok(InitInterp::StdDev),
            other => Err(Error::Input(format!(
                "init interpretation must be `variance` or `stddev`, got {other:?}"
            ))),
        }
    }
}

/// Dense `rows x dim` f32 matrix, row `i` being the vector of token id `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    vocab_hash: VocabHash,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>, vocab_hash: VocabHash) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("embedding dimension must be positive".into()));
        }
        if data.len() != rows * dim {
            return Err(Error::Input(format!(
                "{} values do not form a {rows}x{dim} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite value at row {}, column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(EmbeddingMatrix {
            rows,
            dim,
            data,
            vocab_hash,
        })
    }

    /// Gaussian matrix bound to `vocab`, standing in for pretrained weights.
    pub fn random(vocab: &Vocabulary, dim: usize, std_dev: f64, seed: u64) -> Result<Self> {
        let data = gaussian(vocab.len() * dim, std_dev, seed)?;
        Self::new(vocab.len(), dim, data, vocab.hash())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vocab_hash(&self) -> &VocabHash {
        &self.vocab_hash
    }

    pub fn check_bound(&self, vocab: &Vocabulary) -> Result<()> {
        if self.rows != vocab.len() || self.vocab_hash != vocab.hash() {
            return Err(Error::Binding(format!(
                "matrix with {} rows is not bound to this {}-entry vocabulary",
                self.rows,
                vocab.len()
            )));
        }
        Ok(())
    }

    /// Copies the listed rows (in the given order) into a matrix bound to `vocab`.
    pub(crate) fn select_rows(&self, ids: &[u32], vocab: &Vocabulary) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            data.extend_from_slice(self.row(i as usize));
        }
        EmbeddingMatrix {
            rows: ids.len(),
            dim: self.dim,
            data,
            vocab_hash: vocab.hash(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&self.vocab_hash);
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::format(path, "missing EMB1 header"));
        }
        let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let dim = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let vocab_hash: VocabHash = bytes[20..52].try_into().unwrap();
        let expected = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(path, "matrix shape overflows"))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != expected {
            return Err(Error::format(
                path,
                format!("{rows}x{dim} needs {expected} payload bytes, found {}", body.len()),
            ));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(rows, dim, data, vocab_hash).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn gaussian(n: usize, std_dev: f64, seed: u64) -> Result<Vec<f32>> {
    let normal = Normal::new(0.0f64, std_dev)
        .map_err(|e| Error::Input(format!("bad standard deviation {std_dev}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| normal.sample(&mut rng) as f32).collect())
}

/// Grows `matrix` to cover `new_vocab`. Existing rows are copied bit-for-bit;
/// each appended row is drawn i.i.d. from N(0, sigma^2) with sigma given by
/// `interp`.
pub fn extend_embeddings(
    matrix: &EmbeddingMatrix,
    new_vocab: &Vocabulary,
    seed: u64,
    interp: InitInterp,
) -> Result<EmbeddingMatrix> {
    if new_vocab.len() < matrix.rows || new_vocab.prefix_hash(matrix.rows) != matrix.vocab_hash {
        return Err(Error::Binding(format!(
            "the first {} entries of the new vocabulary do not match the matrix's vocabulary",
            matrix.rows
        )));
    }
    let appended = new_vocab.len() - matrix.rows;
    let mut data = Vec::with_capacity(new_vocab.len() * matrix.dim);
    data.extend_from_slice(&matrix.data);
    data.extend(gaussian(appended * matrix.dim, interp.std_dev(), seed)?);
    EmbeddingMatrix::new(new_vocab.len(), matrix.dim, data, new_vocab.hash())
}
