//! Routing a prompt to a bank direction and decoding it into an
//! embedding-space steering delta.
//!
//! Known professions use their stored direction as-is. Unseen professions
//! blend every bank direction with weights from a temperature softmax over
//! cosine similarities to the prompt's job-token latent. The delta added at
//! the job token is `W_dec·(γ·Δh_final)`, with no pre-bias term.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::direction::DirectionBank;
use crate::error::{check_dim, Error, Result};
use crate::sae::SaeParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteeringConfig {
    /// Steering strength; negative values push away from the male direction.
    pub gamma: f64,
    pub temperature: f64,
    /// Require a byte-exact name match instead of a canonicalized one.
    pub exact_match_required: bool,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        Self {
            gamma: -4.0,
            temperature: 0.1,
            exact_match_required: false,
        }
    }
}

impl SteeringConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return Err(Error::InvalidConfig(format!("gamma {} is not finite", self.gamma)));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "temperature {} must be finite and > 0",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Known,
    Softmax,
    /// Unseen profession whose job latent was all zero; the delta is zero.
    Degenerate,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Known => "known",
            Self::Softmax => "softmax",
            Self::Degenerate => "degenerate",
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Self::Known => 0,
            Self::Softmax => 1,
            Self::Degenerate => 2,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        [Self::Known, Self::Softmax, Self::Degenerate]
            .into_iter()
            .find(|r| r.to_byte() == b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalDirection {
    pub direction: Vec<f32>,
    pub route: Route,
    /// Bank index → softmax weight; empty on the known route.
    pub weights: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringDelta {
    pub delta: Vec<f32>,
    pub token_position: u32,
    pub route: Route,
    pub weights: BTreeMap<usize, f64>,
}

/// The stored direction for `name`, or `None` when the profession is unseen.
pub fn route_known<'a>(name: &str, bank: &'a DirectionBank, exact: bool) -> Option<&'a [f32]> {
    let idx = if exact {
        bank.find_exact(name)
    } else {
        bank.find(name)
    }?;
    Some(&bank.entries[idx].direction)
}

/// Cosine similarity in `f64`; zero when either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Numerically stable `softmax(scores / temperature)`.
pub fn tempered_softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|s| ((s - max) / temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// One weight per bank entry, in bank order.
pub fn softmax_weights(h_job: &[f32], bank: &DirectionBank, temperature: f64) -> Result<Vec<f64>> {
    if bank.is_empty() {
        return Err(Error::Empty("direction bank"));
    }
    check_dim("job latent (m)", bank.m, h_job.len())?;
    if !(temperature > 0.0) {
        return Err(Error::InvalidConfig(format!("temperature {temperature} must be > 0")));
    }
    if h_job.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateJobLatent);
    }
    let sims: Vec<f64> = bank
        .entries
        .iter()
        .map(|e| cosine(h_job, &e.direction))
        .collect();
    Ok(tempered_softmax(&sims, temperature))
}

pub fn final_direction(
    h_job: &[f32],
    bank: &DirectionBank,
    profession_name: &str,
    config: &SteeringConfig,
) -> Result<FinalDirection> {
    if let Some(dir) = route_known(profession_name, bank, config.exact_match_required) {
        return Ok(FinalDirection {
            direction: dir.to_vec(),
            route: Route::Known,
            weights: BTreeMap::new(),
        });
    }
    let weights = softmax_weights(h_job, bank, config.temperature)?;
    let mut acc = vec![0.0f64; bank.m];
    for (w, entry) in weights.iter().zip(&bank.entries) {
        for (a, &v) in acc.iter_mut().zip(&entry.direction) {
            *a += w * v as f64;
        }
    }
    Ok(FinalDirection {
        direction: acc.into_iter().map(|v| v as f32).collect(),
        route: Route::Softmax,
        weights: weights.into_iter().enumerate().collect(),
    })
}

/// `γ·(W_dec·direction)`, rounded once to `f32` per component.
///
/// The decoded direction is rounded to `f32` before scaling, so doubling γ
/// doubles the delta exactly and power-of-two γ values compose exactly.
pub fn decode_delta(params: &SaeParams, direction: &[f32], gamma: f64) -> Result<Vec<f32>> {
    check_dim("direction (m)", params.m(), direction.len())?;
    let dir: Vec<f64> = direction.iter().map(|&v| v as f64).collect();
    Ok(params
        .apply_decoder(&dir)
        .into_iter()
        .map(|v| (gamma * (v as f32) as f64) as f32)
        .collect())
}

/// Full steering pipeline for one prompt's job-token residual `z_job`.
///
/// An unseen profession whose job latent is all zero yields a zero delta
/// with route [`Route::Degenerate`] instead of an error.
pub fn emit_delta(
    z_job: &[f32],
    token_position: u32,
    profession_name: &str,
    bank: &DirectionBank,
    params: &SaeParams,
    config: &SteeringConfig,
) -> Result<SteeringDelta> {
    config.validate()?;
    bank.check_fingerprint(params)?;
    let h_job = params.encode_inference(z_job)?;
    let fd = match final_direction(&h_job.values, bank, profession_name, config) {
        Ok(fd) => fd,
        Err(Error::DegenerateJobLatent) => {
            log::warn!(
                "job latent for {profession_name:?} at position {token_position} is all zero; emitting zero delta"
            );
            return Ok(SteeringDelta {
                delta: vec![0.0; params.d()],
                token_position,
                route: Route::Degenerate,
                weights: BTreeMap::new(),
            });
        }
        Err(e) => return Err(e),
    };
    Ok(SteeringDelta {
        delta: decode_delta(params, &fd.direction, config.gamma)?,
        token_position,
        route: fd.route,
        weights: fd.weights,
    })
}
