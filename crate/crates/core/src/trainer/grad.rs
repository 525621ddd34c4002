//! Hand-derived gradients of `L_MSE + α·L_aux`.
//!
//! Per sample, with `x = z − b_pre`, `h` the Top-k code, `h_aux` the Top-k_aux
//! code over dead latents:
//!
//! ```text
//! e = x − W_dec·h                     (reconstruction residual)
//! r = e − W_dec·h_aux                 (auxiliary residual)
//! L = mean(‖e‖² + α‖r‖²)
//! ```
//!
//! Both selections are fixed masks; gradient reaches only the selected,
//! strictly positive pre-activations.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::sae::{top_k_indices, SaeParams};

/// Batch elements per parallel work unit. Fixed so the reduction order
/// never depends on the thread count.
const CHUNK: usize = 16;

/// Gradients of the mean batch loss, one buffer per parameter, plus the
/// forward statistics gathered on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_enc: Vec<f64>,
    pub b_enc: Vec<f64>,
    pub w_dec: Vec<f64>,
    pub b_pre: Vec<f64>,
    /// Mean of `‖e‖²` over the batch.
    pub mse: f64,
    /// Mean of `‖r‖²` over the batch (unweighted by α; zero when nothing is dead).
    pub aux: f64,
    /// Latents with a nonzero Top-k activation for at least one batch element.
    pub fired: Vec<bool>,
}

impl Gradients {
    fn zeros(params: &SaeParams) -> Self {
        let (d, m) = (params.d, params.m);
        Self {
            w_enc: vec![0.0; m * d],
            b_enc: vec![0.0; m],
            w_dec: vec![0.0; d * m],
            b_pre: vec![0.0; d],
            mse: 0.0,
            aux: 0.0,
            fired: vec![false; m],
        }
    }

    fn add(&mut self, other: &Self) {
        for (a, b) in [
            (&mut self.w_enc, &other.w_enc),
            (&mut self.b_enc, &other.b_enc),
            (&mut self.w_dec, &other.w_dec),
            (&mut self.b_pre, &other.b_pre),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.mse += other.mse;
        self.aux += other.aux;
        self.fired
            .iter_mut()
            .zip(&other.fired)
            .for_each(|(a, b)| *a |= b);
    }

    fn scale(&mut self, s: f64) {
        for buf in [
            &mut self.w_enc,
            &mut self.b_enc,
            &mut self.w_dec,
            &mut self.b_pre,
        ] {
            buf.iter_mut().for_each(|x| *x *= s);
        }
        self.mse *= s;
        self.aux *= s;
    }

    fn check_finite(&self) -> Result<()> {
        for (param, buf) in [
            ("W_enc", &self.w_enc),
            ("b_enc", &self.b_enc),
            ("W_dec", &self.w_dec),
            ("b_pre", &self.b_pre),
        ] {
            if buf.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { param });
            }
        }
        Ok(())
    }
}

/// Forward quantities for one sample.
struct SampleForward {
    x: Vec<f64>,
    /// `(latent, activation)` kept by Top-k with activation > 0.
    kept: Vec<(usize, f64)>,
    /// `(latent, activation)` kept by Top-k_aux over dead latents.
    aux_kept: Vec<(usize, f64)>,
    e: Vec<f64>,
    /// Present only when at least one latent is dead.
    r: Option<Vec<f64>>,
}

impl SampleForward {
    fn mse(&self) -> f64 {
        self.e.iter().map(|v| v * v).sum()
    }

    fn aux(&self) -> f64 {
        self.r
            .as_ref()
            .map_or(0.0, |r| r.iter().map(|v| v * v).sum())
    }
}

fn sparse_decode(params: &SaeParams, active: &[(usize, f64)]) -> Vec<f64> {
    params
        .w_dec
        .chunks_exact(params.m)
        .map(|row| active.iter().map(|&(j, v)| row[j] as f64 * v).sum())
        .collect()
}

fn forward(params: &SaeParams, z: &[f32], dead_mask: &[bool], k_aux: usize) -> SampleForward {
    let (x, pre) = params.preactivations(z);
    // Selection runs on the f32 activations so it agrees with `encode_train`.
    let relu: Vec<f32> = pre
        .iter()
        .map(|&p| if p > 0.0 { p as f32 } else { 0.0 })
        .collect();
    let kept: Vec<(usize, f64)> = top_k_indices(&relu, params.k)
        .into_iter()
        .filter(|&j| relu[j] > 0.0)
        .map(|j| (j, pre[j]))
        .collect();

    let recon = sparse_decode(params, &kept);
    let e: Vec<f64> = x.iter().zip(&recon).map(|(a, b)| a - b).collect();

    let any_dead = dead_mask.iter().any(|&d| d);
    let (aux_kept, r) = if any_dead {
        let masked: Vec<f32> = relu
            .iter()
            .zip(dead_mask)
            .map(|(&v, &dead)| if dead { v } else { 0.0 })
            .collect();
        let aux_kept: Vec<(usize, f64)> = top_k_indices(&masked, k_aux)
            .into_iter()
            .filter(|&j| masked[j] > 0.0)
            .map(|j| (j, pre[j]))
            .collect();
        let aux_recon = sparse_decode(params, &aux_kept);
        let r = e.iter().zip(&aux_recon).map(|(a, b)| a - b).collect();
        (aux_kept, Some(r))
    } else {
        (Vec::new(), None)
    };

    SampleForward {
        x,
        kept,
        aux_kept,
        e,
        r,
    }
}

fn check_batch_inputs<Z: AsRef<[f32]>>(
    batch: &[Z],
    params: &SaeParams,
    dead_mask: &[bool],
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    check_dim("dead mask (m)", params.m, dead_mask.len())?;
    for z in batch {
        let z = z.as_ref();
        check_dim("input features (d)", params.d, z.len())?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input features"));
        }
    }
    Ok(())
}

/// Auxiliary dead-latent loss for one input: `‖e − W_dec·h_aux‖²`.
pub fn aux_loss(z: &[f32], params: &SaeParams, dead_mask: &[bool], k_aux: usize) -> Result<f64> {
    check_batch_inputs(&[z], params, dead_mask)?;
    Ok(forward(params, z, dead_mask, k_aux).aux())
}

fn accumulate(params: &SaeParams, f: &SampleForward, alpha: f64, out: &mut Gradients) {
    let (d, m) = (params.d, params.m);
    let g_e: Vec<f64> = f.e.iter().map(|v| 2.0 * v).collect();
    let g_r: Vec<f64> = match &f.r {
        Some(r) => r.iter().map(|v| 2.0 * alpha * v).collect(),
        None => vec![0.0; d],
    };
    let g_sum: Vec<f64> = g_e.iter().zip(&g_r).map(|(a, b)| a + b).collect();

    // dL/dpre over the (possibly overlapping) kept and aux-kept sets.
    let mut dpre: Vec<(usize, f64)> = Vec::with_capacity(f.kept.len() + f.aux_kept.len());
    for &(j, h) in &f.kept {
        let mut u = 0.0;
        for i in 0..d {
            let w = params.w_dec[i * m + j] as f64;
            u += w * g_sum[i];
            out.w_dec[i * m + j] -= g_sum[i] * h;
        }
        dpre.push((j, -u));
        out.fired[j] = true;
    }
    for &(j, h) in &f.aux_kept {
        let mut v = 0.0;
        for i in 0..d {
            let w = params.w_dec[i * m + j] as f64;
            v += w * g_r[i];
            out.w_dec[i * m + j] -= g_r[i] * h;
        }
        dpre.push((j, -v));
    }

    let mut dx = g_sum;
    for &(j, g) in &dpre {
        out.b_enc[j] += g;
        let row = &params.w_enc[j * d..(j + 1) * d];
        let grow = &mut out.w_enc[j * d..(j + 1) * d];
        for i in 0..d {
            grow[i] += g * f.x[i];
            dx[i] += row[i] as f64 * g;
        }
    }
    for (b, g) in out.b_pre.iter_mut().zip(&dx) {
        *b -= g;
    }
    out.mse += f.mse();
    out.aux += f.aux();
}

/// Gradients of `mean(‖e‖² + α‖r‖²)` with respect to every parameter.
///
/// `dead_mask[j]` marks latents eligible for the auxiliary reconstruction.
pub fn compute_gradients<Z: AsRef<[f32]> + Sync>(
    batch: &[Z],
    params: &SaeParams,
    dead_mask: &[bool],
    alpha: f64,
    k_aux: usize,
) -> Result<Gradients> {
    check_batch_inputs(batch, params, dead_mask)?;
    let partials: Vec<Gradients> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = Gradients::zeros(params);
            for z in chunk {
                let f = forward(params, z.as_ref(), dead_mask, k_aux);
                accumulate(params, &f, alpha, &mut g);
            }
            g
        })
        .collect();
    let mut total = Gradients::zeros(params);
    for p in &partials {
        total.add(p);
    }
    total.scale(1.0 / batch.len() as f64);
    total.check_finite()?;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_params() -> SaeParams {
        SaeParams::new(
            2,
            2,
            2,
            true,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
        )
        .unwrap()
    }

    #[test]
    fn perfect_reconstruction_has_zero_gradient() {
        let p = identity_params();
        let batch = vec![vec![1.0f32, 2.0], vec![3.0, 0.5]];
        let g = compute_gradients(&batch, &p, &[false, false], 1.0 / 32.0, 2).unwrap();
        assert!(g.w_enc.iter().chain(&g.b_enc).chain(&g.w_dec).chain(&g.b_pre).all(|&v| v == 0.0));
        assert_eq!(g.mse, 0.0);
        assert_eq!(g.fired, vec![true, true]);
    }

    #[test]
    fn aux_loss_zero_without_dead_latents() {
        let p = identity_params();
        let mut q = p.clone();
        q.w_dec = vec![0.0; 4];
        q.normalize_decoder = false;
        assert_eq!(aux_loss(&[5.0, -3.0], &q, &[false, false], 2).unwrap(), 0.0);
    }

    #[test]
    fn aux_loss_with_all_dead_latents_kept() {
        // W_dec zero → e = x; h_aux keeps the positive dead pre-activation.
        let p = SaeParams::new(
            2,
            2,
            1,
            false,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0; 2],
        )
        .unwrap();
        assert_eq!(aux_loss(&[1.0, 2.0], &p, &[true, true], 2).unwrap(), 5.0);
        assert!(matches!(
            aux_loss(&[1.0, 2.0], &p, &[true], 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn empty_batch_rejected() {
        let p = identity_params();
        let batch: Vec<Vec<f32>> = Vec::new();
        assert!(matches!(
            compute_gradients(&batch, &p, &[false, false], 0.0, 1),
            Err(Error::Empty(_))
        ));
    }
}
