//! Mini-batch training of the sparse autoencoder.

mod adam;
mod grad;
mod init;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::sae::SaeParams;

pub use adam::{Adam, AdamMoments};
pub use grad::{aux_loss, compute_gradients, Gradients};
pub use init::{
    geometric_median, init_params, MEDIAN_SUBSAMPLE, WEISZFELD_MAX_ITERATIONS,
    WEISZFELD_TOLERANCE,
};

/// Loss history is recorded on steps divisible by this.
pub const LOSS_RECORD_INTERVAL: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub expansion_factor: usize,
    /// Weight of the auxiliary dead-latent loss.
    pub alpha: f64,
    /// Dead latents used by the auxiliary loss; `None` means `min(2k, m)`.
    pub k_aux: Option<usize>,
    pub dead_threshold_steps: u32,
    pub batch_size: usize,
    pub total_steps: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub normalize_decoder: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 32,
            expansion_factor: 4,
            alpha: 1.0 / 32.0,
            k_aux: None,
            dead_threshold_steps: 1000,
            batch_size: 256,
            total_steps: 10_000,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            normalize_decoder: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn resolved_k_aux(&self, m: usize) -> usize {
        self.k_aux.unwrap_or((2 * self.k).min(m))
    }

    /// Checks the configuration against an input dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 || self.expansion_factor == 0 {
            return bad("k and expansion_factor must be positive".into());
        }
        let m = self.expansion_factor * d;
        if self.k > m {
            return bad(format!("k={} exceeds latent size m={m}", self.k));
        }
        let k_aux = self.resolved_k_aux(m);
        if k_aux == 0 || k_aux > m {
            return bad(format!("k_aux={k_aux} must be in 1..={m}"));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha={} must be a finite value >= 0", self.alpha));
        }
        if self.batch_size == 0 || self.dead_threshold_steps == 0 {
            return bad("batch_size and dead_threshold_steps must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return bad("learning_rate and epsilon must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        Ok(())
    }

    fn optimizer(&self) -> Adam {
        Adam {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub mse: f64,
    pub aux: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamMoments {
    pub w_enc: AdamMoments,
    pub b_enc: AdamMoments,
    pub w_dec: AdamMoments,
    pub b_pre: AdamMoments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: SaeParams,
    pub moments: ParamMoments,
    /// Steps since each latent last had a nonzero Top-k activation.
    pub steps_since_fired: Vec<u32>,
    /// Number of completed updates.
    pub step: u64,
    pub loss_history: Vec<LossRecord>,
}

impl TrainState {
    pub fn new(params: SaeParams) -> Self {
        let (d, m) = (params.d(), params.m());
        Self {
            moments: ParamMoments {
                w_enc: AdamMoments::zeros(m * d),
                b_enc: AdamMoments::zeros(m),
                w_dec: AdamMoments::zeros(d * m),
                b_pre: AdamMoments::zeros(d),
            },
            steps_since_fired: vec![0; m],
            step: 0,
            loss_history: Vec::new(),
            params,
        }
    }

    pub fn dead_mask(&self, threshold: u32) -> Vec<bool> {
        self.steps_since_fired
            .iter()
            .map(|&s| s >= threshold)
            .collect()
    }

    /// One optimizer update on `batch`. Leaves the state untouched on error.
    pub fn step<Z: AsRef<[f32]> + Sync>(&mut self, batch: &[Z], config: &TrainConfig) -> Result<()> {
        let dead = self.dead_mask(config.dead_threshold_steps);
        let k_aux = config.resolved_k_aux(self.params.m());
        let mut grads = compute_gradients(batch, &self.params, &dead, config.alpha, k_aux)?;
        let loss = grads.mse + config.alpha * grads.aux;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }

        if self.step % LOSS_RECORD_INTERVAL == 0 {
            self.loss_history.push(LossRecord {
                step: self.step,
                mse: grads.mse,
                aux: grads.aux,
            });
        }
        for (s, &fired) in self.steps_since_fired.iter_mut().zip(&grads.fired) {
            *s = if fired { 0 } else { s.saturating_add(1) };
        }

        if self.params.normalize_decoder {
            project_out_column_component(&self.params, &mut grads.w_dec);
        }
        let t = self.step + 1;
        let adam = config.optimizer();
        let p = &mut self.params;
        let mo = &mut self.moments;
        adam.step(t, &mut p.w_enc, &grads.w_enc, &mut mo.w_enc);
        adam.step(t, &mut p.b_enc, &grads.b_enc, &mut mo.b_enc);
        adam.step(t, &mut p.w_dec, &grads.w_dec, &mut mo.w_dec);
        adam.step(t, &mut p.b_pre, &grads.b_pre, &mut mo.b_pre);
        if p.normalize_decoder {
            p.renormalize_decoder();
        }
        self.step = t;
        Ok(())
    }
}

/// Removes from each decoder-column gradient its component along the (unit) column.
fn project_out_column_component(params: &SaeParams, grad: &mut [f64]) {
    let (d, m) = (params.d(), params.m());
    for j in 0..m {
        let dot: f64 = (0..d)
            .map(|i| grad[i * m + j] * params.w_dec[i * m + j] as f64)
            .sum();
        for i in 0..d {
            grad[i * m + j] -= dot * params.w_dec[i * m + j] as f64;
        }
    }
}

/// Trains a fresh model on `bank` for `config.total_steps` updates.
///
/// Batches are drawn without replacement from a per-epoch shuffle; a partial
/// batch at the end of an epoch is dropped. If the loss or a gradient turns
/// non-finite, returns [`Error::Diverged`] carrying the last finite state.
pub fn train<Z: AsRef<[f32]> + Sync>(bank: &[Z], config: &TrainConfig) -> Result<TrainState> {
    let first = bank.first().ok_or(Error::Empty("feature bank"))?;
    let d = first.as_ref().len();
    for z in bank {
        check_dim("feature vector (d)", d, z.as_ref().len())?;
    }
    config.validate(d)?;
    if bank.len() < config.batch_size {
        return Err(Error::InvalidConfig(format!(
            "bank holds {} vectors, fewer than batch_size {}",
            bank.len(),
            config.batch_size
        )));
    }

    let params = init_params(bank, config, config.seed)?;
    let mut state = TrainState::new(params);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..bank.len()).collect();
    let mut cursor = order.len();
    let mut batch: Vec<&[f32]> = Vec::with_capacity(config.batch_size);

    while state.step < config.total_steps {
        if cursor + config.batch_size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        batch.clear();
        batch.extend(
            order[cursor..cursor + config.batch_size]
                .iter()
                .map(|&i| bank[i].as_ref()),
        );
        cursor += config.batch_size;

        let snapshot = state.clone();
        if let Err(e) = state.step(&batch, config) {
            return match e {
                Error::NonFinite(_) | Error::NonFiniteGradient { .. } => Err(Error::Diverged {
                    step: snapshot.step,
                    reason: e.to_string(),
                    state: Box::new(snapshot),
                }),
                other => Err(other),
            };
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_bank() -> Vec<Vec<f32>> {
        (0..64)
            .map(|i| {
                let t = i as f32 * 0.1;
                vec![t.sin(), t.cos(), (2.0 * t).sin(), 0.5]
            })
            .collect()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            k: 2,
            expansion_factor: 2,
            batch_size: 8,
            total_steps: 30,
            learning_rate: 1e-2,
            dead_threshold_steps: 5,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let bank = small_bank();
        let cfg = TrainConfig {
            total_steps: 0,
            ..small_config()
        };
        let state = train(&bank, &cfg).unwrap();
        assert_eq!(state.params, init_params(&bank, &cfg, cfg.seed).unwrap());
        assert!(state.loss_history.is_empty());
    }

    #[test]
    fn decoder_columns_stay_unit_norm() {
        let bank = small_bank();
        let cfg = small_config();
        let params = init_params(&bank, &cfg, cfg.seed).unwrap();
        let mut state = TrainState::new(params);
        for s in 0..20 {
            let batch = &bank[(s * 8) % 56..(s * 8) % 56 + 8];
            state.step(batch, &cfg).unwrap();
            for j in 0..state.params.m() {
                assert!((state.params.decoder_column_norm(j) - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn fired_latents_reset_tracker() {
        let bank = small_bank();
        let cfg = small_config();
        let mut state = TrainState::new(init_params(&bank, &cfg, cfg.seed).unwrap());
        state.steps_since_fired.iter_mut().for_each(|s| *s = 99);
        let batch = &bank[..8];
        let before = state.params.clone();
        state.step(batch, &cfg).unwrap();
        let mut fired = vec![false; before.m()];
        for z in batch {
            for j in before.encode_train(z).unwrap().support() {
                fired[j] = true;
            }
        }
        for (j, &f) in fired.iter().enumerate() {
            if f {
                assert_eq!(state.steps_since_fired[j], 0);
            } else {
                assert_eq!(state.steps_since_fired[j], 100);
            }
        }
    }

    #[test]
    fn loss_recorded_every_ten_steps() {
        let state = train(&small_bank(), &small_config()).unwrap();
        let steps: Vec<u64> = state.loss_history.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 10, 20]);
        assert_eq!(state.step, 30);
    }

    #[test]
    fn rejects_bank_smaller_than_batch() {
        let bank = small_bank();
        let cfg = TrainConfig {
            batch_size: 100,
            ..small_config()
        };
        assert!(matches!(train(&bank, &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn divergence_returns_last_finite_state() {
        let bank = small_bank();
        let cfg = TrainConfig {
            learning_rate: 1e38,
            ..small_config()
        };
        match train(&bank, &cfg) {
            Err(Error::Diverged { step, state, .. }) => {
                assert_eq!(state.step, step);
                assert!(state.params.validate().is_ok() || step > 0);
            }
            other => panic!("expected divergence, got {:?}", other.map(|s| s.step)),
        }
    }
}
