#![allow(dead_code)]

use rand::seq::index;
use rand::{Rng, SeedableRng};
use sae_debias::trainer::compute_gradients;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use sae_debias::direction::Gender;
use sae_debias::storage::features::{FeatureHeader, FeatureRecord, PositionKind};
use sae_debias::trainer::{LossRecord, TrainConfig};
use sae_debias::SaeParams;

pub const SYN_D: usize = 32;
pub const SYN_M: usize = 128;
pub const SYN_K: usize = 8;
pub const SYN_SAMPLES: usize = 10_000;
pub const SYN_NOISE: f64 = 0.01;
/// Planted atoms per sample.
pub const SYN_ACTIVE: usize = SYN_K;
pub const SYN_SEED: u64 = 20_240_917;
pub const SYN_STEPS: u64 = 2000;
/// Loss records averaged at each end of the run.
pub const SYN_WINDOW: usize = 5;

/// `z = D·s + ε` with unit-norm random dictionary columns and exactly
/// `SYN_ACTIVE` planted atoms per sample at magnitudes in [0.5, 1.5].
pub fn synthetic_bank(seed: u64) -> Vec<Vec<f32>> {
    synthetic_data(seed, SYN_ACTIVE).1
}

/// The generating dictionary (one unit column per atom) and the samples.
pub fn synthetic_data(seed: u64, active: usize) -> (Vec<Vec<f64>>, Vec<Vec<f32>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dict = vec![vec![0.0f64; SYN_D]; SYN_M];
    for col in &mut dict {
        for v in col.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let n = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        col.iter_mut().for_each(|v| *v /= n);
    }
    let noise = Normal::new(0.0, SYN_NOISE).unwrap();
    let bank = (0..SYN_SAMPLES)
        .map(|_| {
            let mut z = vec![0.0f64; SYN_D];
            for j in index::sample(&mut rng, SYN_M, active) {
                let s: f64 = rng.random_range(0.5..1.5);
                for (zi, di) in z.iter_mut().zip(&dict[j]) {
                    *zi += s * di;
                }
            }
            z.iter().map(|&v| (v + noise.sample(&mut rng)) as f32).collect()
        })
        .collect();
    (dict, bank)
}

pub fn synthetic_config() -> TrainConfig {
    TrainConfig {
        k: SYN_K,
        expansion_factor: SYN_M / SYN_D,
        total_steps: SYN_STEPS,
        batch_size: 256,
        learning_rate: 1e-3,
        dead_threshold_steps: 100,
        seed: 3,
        ..TrainConfig::default()
    }
}

/// Mean total loss over the first and last `window` records.
pub fn windowed_losses(history: &[LossRecord], alpha: f64, window: usize) -> (f64, f64) {
    let total = |r: &LossRecord| r.mse + alpha * r.aux;
    let mean = |rs: &[LossRecord]| rs.iter().map(total).sum::<f64>() / rs.len() as f64;
    (
        mean(&history[..window]),
        mean(&history[history.len() - window..]),
    )
}

/// Sort-based Top-k: keeps the k largest, breaking ties toward lower indices.
pub fn brute_top_k(values: &[f32], k: usize) -> Vec<f32> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    let mut out = vec![0.0; values.len()];
    for &j in order.iter().take(k) {
        out[j] = values[j];
    }
    out
}

pub fn random_params(rng: &mut ChaCha8Rng, d: usize, m: usize, k: usize, normalize: bool) -> SaeParams {
    let scale = 1.0 / (d as f64).sqrt();
    let mut normal = |s: f64| (rng.sample::<f64, _>(StandardNormal) * s) as f32;
    let w_enc: Vec<f32> = (0..m * d).map(|_| normal(scale)).collect();
    let b_enc: Vec<f32> = (0..m).map(|_| normal(0.1)).collect();
    let mut w_dec: Vec<f32> = (0..d * m).map(|_| normal(scale)).collect();
    let b_pre: Vec<f32> = (0..d).map(|_| normal(0.1)).collect();
    if normalize {
        for j in 0..m {
            let n = (0..d).map(|i| (w_dec[i * m + j] as f64).powi(2)).sum::<f64>().sqrt();
            for i in 0..d {
                w_dec[i * m + j] = (w_dec[i * m + j] as f64 / n) as f32;
            }
        }
    }
    SaeParams::new(d, m, k, normalize, w_enc, b_enc, w_dec, b_pre).unwrap()
}

/// Plain `f64` copy of the parameters, perturbable without rounding.
#[derive(Clone)]
pub struct OracleParams {
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub w_enc: Vec<f64>,
    pub b_enc: Vec<f64>,
    pub w_dec: Vec<f64>,
    pub b_pre: Vec<f64>,
}

impl OracleParams {
    pub fn from(p: &SaeParams) -> Self {
        let f = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        Self {
            d: p.d(),
            m: p.m(),
            k: p.k(),
            w_enc: f(p.w_enc()),
            b_enc: f(p.b_enc()),
            w_dec: f(p.w_dec()),
            b_pre: f(p.b_pre()),
        }
    }

    pub fn buffers_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w_enc, &mut self.b_enc, &mut self.w_dec, &mut self.b_pre]
    }
}

/// Indices of the `k` largest positive entries, ties to the lower index.
fn select(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).filter(|&j| values[j] > 0.0).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

pub struct OracleForward {
    pub loss: f64,
    pub kept: Vec<usize>,
    pub aux_kept: Vec<usize>,
}

/// `‖e‖² + α‖r‖²` for one input, straight from the definitions.
pub fn oracle_sample_loss(p: &OracleParams, z: &[f32], dead: &[bool], alpha: f64, k_aux: usize) -> OracleForward {
    let (d, m) = (p.d, p.m);
    let x: Vec<f64> = (0..d).map(|i| z[i] as f64 - p.b_pre[i]).collect();
    let pre: Vec<f64> = (0..m)
        .map(|j| (0..d).map(|i| p.w_enc[j * d + i] * x[i]).sum::<f64>() + p.b_enc[j])
        .collect();
    let kept = select(&pre, p.k);
    let decode = |idx: &[usize]| -> Vec<f64> {
        (0..d)
            .map(|i| idx.iter().map(|&j| p.w_dec[i * m + j] * pre[j]).sum())
            .collect()
    };
    let recon = decode(&kept);
    let e: Vec<f64> = (0..d).map(|i| x[i] - recon[i]).collect();
    let mut loss: f64 = e.iter().map(|v| v * v).sum();
    let mut aux_kept = Vec::new();
    if dead.iter().any(|&b| b) {
        let masked: Vec<f64> = (0..m).map(|j| if dead[j] { pre[j] } else { 0.0 }).collect();
        aux_kept = select(&masked, k_aux);
        let aux = decode(&aux_kept);
        loss += alpha * (0..d).map(|i| (e[i] - aux[i]).powi(2)).sum::<f64>();
    }
    OracleForward { loss, kept, aux_kept }
}

pub fn oracle_batch_loss(p: &OracleParams, batch: &[Vec<f32>], dead: &[bool], alpha: f64, k_aux: usize) -> f64 {
    batch
        .iter()
        .map(|z| oracle_sample_loss(p, z, dead, alpha, k_aux).loss)
        .sum::<f64>()
        / batch.len() as f64
}

/// True when every pre-activation shift up to `delta` leaves both Top-k
/// selections unchanged.
pub fn has_selection_margin(p: &OracleParams, z: &[f32], dead: &[bool], k_aux: usize, delta: f64) -> bool {
    let (d, m) = (p.d, p.m);
    let x: Vec<f64> = (0..d).map(|i| z[i] as f64 - p.b_pre[i]).collect();
    let pre: Vec<f64> = (0..m)
        .map(|j| (0..d).map(|i| p.w_enc[j * d + i] * x[i]).sum::<f64>() + p.b_enc[j])
        .collect();
    let margin_ok = |vals: Vec<f64>, k: usize| -> bool {
        if vals.is_empty() {
            return true;
        }
        let mut relu: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
        relu.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let kth = relu[(k - 1).min(relu.len() - 1)];
        if k < relu.len() && kth > 0.0 {
            relu[k - 1] - relu[k] > 2.0 * delta
        } else {
            vals.iter().all(|v| v.abs() > delta)
        }
    };
    let dead_vals: Vec<f64> = (0..m).filter(|&j| dead[j]).map(|j| pre[j]).collect();
    margin_ok(pre.clone(), p.k) && margin_ok(dead_vals, k_aux)
}

pub fn labeled_record(gender: Gender, profession_id: u32, features: Vec<f32>) -> FeatureRecord {
    FeatureRecord {
        gender,
        profession_id,
        token_position: 4,
        features,
    }
}

pub fn header(d: usize, count: usize, position_kind: PositionKind) -> FeatureHeader {
    FeatureHeader {
        d: d as u32,
        record_count: count as u64,
        position_kind,
    }
}

pub const GC_D: usize = 8;
pub const GC_M: usize = 32;
pub const GC_K: usize = 4;
pub const GC_K_AUX: usize = 4;
pub const GC_BATCH: usize = 3;
pub const GC_STEP: f64 = 1e-3;
pub const GC_MARGIN: f64 = 0.02;

pub struct GradInstance {
    pub params: sae_debias::SaeParams,
    pub batch: Vec<Vec<f32>>,
    pub dead: Vec<bool>,
    pub alpha: f64,
}

/// Random parameters with inputs drawn until both Top-k selections sit at
/// least `GC_MARGIN` away from any boundary.
pub fn grad_instance(seed: u64) -> GradInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_params(&mut rng, GC_D, GC_M, GC_K, seed % 2 == 0);
    let dead: Vec<bool> = if seed % 5 == 0 {
        vec![false; GC_M]
    } else {
        (0..GC_M).map(|j| j % 3 == 0 || rng.random_bool(0.3)).collect()
    };
    let oracle = OracleParams::from(&params);
    let mut batch = Vec::new();
    while batch.len() < GC_BATCH {
        let z: Vec<f32> = (0..GC_D).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        if has_selection_margin(&oracle, &z, &dead, GC_K_AUX, GC_MARGIN) {
            batch.push(z);
        }
    }
    GradInstance {
        params,
        batch,
        dead,
        alpha: 1.0 / 32.0 + (seed % 3) as f64 * 0.25,
    }
}

/// Largest relative error over entries with `|grad| > 1e-6`, and the
/// number of entries compared.
pub fn max_relative_error(inst: &GradInstance) -> (f64, usize) {
    let g = compute_gradients(&inst.batch, &inst.params, &inst.dead, inst.alpha, GC_K_AUX).unwrap();
    let analytic = [&g.w_enc, &g.b_enc, &g.w_dec, &g.b_pre];
    let base = OracleParams::from(&inst.params);
    let reference: Vec<_> = inst
        .batch
        .iter()
        .map(|z| oracle_sample_loss(&base, z, &inst.dead, inst.alpha, GC_K_AUX))
        .collect();

    let mut worst = 0.0f64;
    let mut compared = 0;
    for (b, grad) in analytic.iter().enumerate() {
        for idx in 0..grad.len() {
            let mut plus = base.clone();
            plus.buffers_mut()[b][idx] += GC_STEP;
            let mut minus = base.clone();
            minus.buffers_mut()[b][idx] -= GC_STEP;
            for (z, r) in inst.batch.iter().zip(&reference) {
                for p in [&plus, &minus] {
                    let f = oracle_sample_loss(p, z, &inst.dead, inst.alpha, GC_K_AUX);
                    assert_eq!(f.kept, r.kept, "selection changed under perturbation");
                    assert_eq!(f.aux_kept, r.aux_kept, "aux selection changed under perturbation");
                }
            }
            let fd = (oracle_batch_loss(&plus, &inst.batch, &inst.dead, inst.alpha, GC_K_AUX)
                - oracle_batch_loss(&minus, &inst.batch, &inst.dead, inst.alpha, GC_K_AUX))
                / (2.0 * GC_STEP);
            let a = grad[idx];
            if a.abs() > 1e-6 {
                compared += 1;
                worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()));
            } else {
                assert!(fd.abs() < 1e-6, "analytic {a} vs finite difference {fd}");
            }
        }
    }
    (worst, compared)
}


/// Predictions CSV with 100 male prompts (none mismatched) and 300 female
/// prompts (12 mismatched), spread over ten professions with C = 30.
pub fn composite_fixture_csv() -> String {
    let mut out = String::from("profession,prompt_gender,sample_index,predicted_gender\n");
    let mut female_misses = 0;
    for p in 0..10 {
        for i in 0..10 {
            out.push_str(&format!("job{p},male,{i},male\n"));
        }
        for i in 0..30 {
            let pred = if female_misses < 12 && i < 2 { "male" } else { "female" };
            if pred == "male" {
                female_misses += 1;
            }
            out.push_str(&format!("job{p},female,{i},{pred}\n"));
        }
    }
    out
}

/// Neutral-prompt CSV where profession `i` has `splits[i].0` male and
/// `splits[i].1` female predictions.
pub fn skew_fixture_csv(splits: &[(u32, u32)]) -> String {
    let mut out = String::from("profession,prompt_gender,sample_index,predicted_gender\n");
    for (p, &(m, f)) in splits.iter().enumerate() {
        for i in 0..m + f {
            let pred = if i < m { "male" } else { "female" };
            out.push_str(&format!("job{p},neutral,{i},{pred}\n"));
        }
    }
    out
}
