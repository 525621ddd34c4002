//! k-sparse autoencoder forward pass.
//!
//! The encoder computes `ReLU(W_enc·(z − b_pre) + b_enc)` and, in the
//! training variant, keeps only the `k` largest activations. The decoder is
//! the affine map `W_dec·h + b_pre`. Weights are stored as `f32`; every dot
//! product and reduction accumulates in `f64`.

use std::cmp::Ordering;

use crate::error::{check_dim, Error, Result};

/// Tolerance on decoder column norms when decoder normalization is enabled.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Learned autoencoder parameters.
///
/// `w_enc` is `m × d` and `w_dec` is `d × m`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeParams {
    pub(crate) d: usize,
    pub(crate) m: usize,
    pub(crate) k: usize,
    pub(crate) normalize_decoder: bool,
    pub(crate) w_enc: Vec<f32>,
    pub(crate) b_enc: Vec<f32>,
    pub(crate) w_dec: Vec<f32>,
    pub(crate) b_pre: Vec<f32>,
}

/// Whether the Top-k truncation was applied when producing a code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeMode {
    TrainTopK,
    InferenceDense,
}

/// Dense latent activations `h` of length `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub values: Vec<f32>,
    pub mode: EncodeMode,
}

impl SparseCode {
    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

impl SaeParams {
    /// Builds parameters from raw row-major buffers, checking every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d: usize,
        m: usize,
        k: usize,
        normalize_decoder: bool,
        w_enc: Vec<f32>,
        b_enc: Vec<f32>,
        w_dec: Vec<f32>,
        b_pre: Vec<f32>,
    ) -> Result<Self> {
        let params = Self {
            d,
            m,
            k,
            normalize_decoder,
            w_enc,
            b_enc,
            w_dec,
            b_pre,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 || self.k == 0 {
            return Err(Error::InvalidConfig(format!(
                "d, m and k must be positive (d={}, m={}, k={})",
                self.d, self.m, self.k
            )));
        }
        if self.m % self.d != 0 {
            return Err(Error::InvalidConfig(format!(
                "latent size {} is not a multiple of input size {}",
                self.m, self.d
            )));
        }
        if self.k > self.m {
            return Err(Error::InvalidConfig(format!(
                "k={} exceeds latent size {}",
                self.k, self.m
            )));
        }
        check_dim("W_enc", self.m * self.d, self.w_enc.len())?;
        check_dim("b_enc", self.m, self.b_enc.len())?;
        check_dim("W_dec", self.d * self.m, self.w_dec.len())?;
        check_dim("b_pre", self.d, self.b_pre.len())?;
        for (name, buf) in [
            ("W_enc", &self.w_enc),
            ("b_enc", &self.b_enc),
            ("W_dec", &self.w_dec),
            ("b_pre", &self.b_pre),
        ] {
            if buf.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(name));
            }
        }
        if self.normalize_decoder {
            for j in 0..self.m {
                let norm = self.decoder_column_norm(j);
                if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                    return Err(Error::InvalidConfig(format!(
                        "decoder column {j} has norm {norm}, expected unit norm"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn expansion_factor(&self) -> usize {
        self.m / self.d
    }

    pub fn normalize_decoder(&self) -> bool {
        self.normalize_decoder
    }

    pub fn w_enc(&self) -> &[f32] {
        &self.w_enc
    }

    pub fn b_enc(&self) -> &[f32] {
        &self.b_enc
    }

    pub fn w_dec(&self) -> &[f32] {
        &self.w_dec
    }

    pub fn b_pre(&self) -> &[f32] {
        &self.b_pre
    }

    pub fn decoder_column_norm(&self, j: usize) -> f64 {
        (0..self.d)
            .map(|i| {
                let w = self.w_dec[i * self.m + j] as f64;
                w * w
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Scales every decoder column to unit Euclidean norm. Zero columns are left untouched.
    pub(crate) fn renormalize_decoder(&mut self) {
        for j in 0..self.m {
            let norm = self.decoder_column_norm(j);
            if norm > 0.0 {
                for i in 0..self.d {
                    let w = &mut self.w_dec[i * self.m + j];
                    *w = (*w as f64 / norm) as f32;
                }
            }
        }
    }

    fn check_input(&self, z: &[f32]) -> Result<()> {
        check_dim("input features (d)", self.d, z.len())?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input features"));
        }
        Ok(())
    }

    /// Centred input `z − b_pre` and encoder pre-activations, both in `f64`.
    pub(crate) fn preactivations(&self, z: &[f32]) -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = z
            .iter()
            .zip(&self.b_pre)
            .map(|(&zi, &bi)| zi as f64 - bi as f64)
            .collect();
        let pre = self
            .w_enc
            .chunks_exact(self.d)
            .zip(&self.b_enc)
            .map(|(row, &b)| dot_f32_f64(row, &x) + b as f64)
            .collect();
        (x, pre)
    }

    /// `ReLU(W_enc·(z − b_pre) + b_enc)` with no truncation.
    pub fn encode_inference(&self, z: &[f32]) -> Result<SparseCode> {
        self.check_input(z)?;
        let (_, pre) = self.preactivations(z);
        Ok(SparseCode {
            values: relu_f32(&pre),
            mode: EncodeMode::InferenceDense,
        })
    }

    /// Top-k of the inference code; ties at the threshold keep the lowest index.
    pub fn encode_train(&self, z: &[f32]) -> Result<SparseCode> {
        self.check_input(z)?;
        let (_, pre) = self.preactivations(z);
        let dense = relu_f32(&pre);
        Ok(SparseCode {
            values: keep_top_k(&dense, self.k),
            mode: EncodeMode::TrainTopK,
        })
    }

    /// `W_dec·h + b_pre`.
    pub fn decode(&self, h: &SparseCode) -> Result<Vec<f32>> {
        check_dim("sparse code (m)", self.m, h.values.len())?;
        let hf: Vec<f64> = h.values.iter().map(|&v| v as f64).collect();
        Ok(self
            .apply_decoder(&hf)
            .into_iter()
            .zip(&self.b_pre)
            .map(|(v, &b)| (v + b as f64) as f32)
            .collect())
    }

    /// `W_dec·v` without the pre-bias, skipping zero entries of `v`.
    pub(crate) fn apply_decoder(&self, v: &[f64]) -> Vec<f64> {
        let active: Vec<(usize, f64)> = v
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .map(|(j, &x)| (j, x))
            .collect();
        self.w_dec
            .chunks_exact(self.m)
            .map(|row| active.iter().map(|&(j, x)| row[j] as f64 * x).sum())
            .collect()
    }

    /// Mean over the batch of `‖z − decode(encode_train(z))‖²`.
    pub fn mse_loss(&self, batch: &[Vec<f32>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut total = 0.0f64;
        for z in batch {
            let recon = self.decode(&self.encode_train(z)?)?;
            total += z
                .iter()
                .zip(&recon)
                .map(|(&a, &b)| {
                    let e = a as f64 - b as f64;
                    e * e
                })
                .sum::<f64>();
        }
        Ok(total / batch.len() as f64)
    }
}

pub(crate) fn dot_f32_f64(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y).sum()
}

fn relu_f32(pre: &[f64]) -> Vec<f32> {
    pre.iter()
        .map(|&p| if p > 0.0 { p as f32 } else { 0.0 })
        .collect()
}

fn rank_desc(values: &[f32], a: usize, b: usize) -> Ordering {
    values[b].total_cmp(&values[a]).then(a.cmp(&b))
}

/// Indices of the `k` largest values, ascending by index. Equal values rank
/// by lower index first.
pub(crate) fn top_k_indices(values: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if k < idx.len() {
        if k == 0 {
            return Vec::new();
        }
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_desc(values, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

pub(crate) fn keep_top_k(values: &[f32], k: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; values.len()];
    for j in top_k_indices(values, k) {
        out[j] = values[j];
    }
    out
}
