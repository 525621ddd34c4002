//! Parameter initialization: geometric-median pre-bias and tied random weights.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::sae::SaeParams;

use super::TrainConfig;

pub const WEISZFELD_TOLERANCE: f64 = 1e-6;
pub const WEISZFELD_MAX_ITERATIONS: usize = 100;
/// Banks larger than this are uniformly subsampled before the median is computed.
pub const MEDIAN_SUBSAMPLE: usize = 100_000;

/// Geometric median by Weiszfeld iteration starting from the centroid.
///
/// Stops when an update moves less than `tolerance` or after
/// `max_iterations`. Points coinciding with the current estimate are left out
/// of that iteration's weighted average.
pub fn geometric_median<Z: AsRef<[f32]>>(
    points: &[Z],
    tolerance: f64,
    max_iterations: usize,
) -> Result<Vec<f64>> {
    let first = points.first().ok_or(Error::Empty("feature bank"))?;
    let d = first.as_ref().len();
    for p in points {
        check_dim("feature vector (d)", d, p.as_ref().len())?;
    }

    let n = points.len() as f64;
    let mut y = vec![0.0f64; d];
    for p in points {
        for (yi, &v) in y.iter_mut().zip(p.as_ref()) {
            *yi += v as f64;
        }
    }
    y.iter_mut().for_each(|v| *v /= n);

    for _ in 0..max_iterations {
        let mut num = vec![0.0f64; d];
        let mut denom = 0.0f64;
        for p in points {
            let p = p.as_ref();
            let dist = p
                .iter()
                .zip(&y)
                .map(|(&a, b)| {
                    let t = a as f64 - b;
                    t * t
                })
                .sum::<f64>()
                .sqrt();
            if dist < 1e-12 {
                continue;
            }
            let w = 1.0 / dist;
            denom += w;
            for (acc, &v) in num.iter_mut().zip(p) {
                *acc += w * v as f64;
            }
        }
        if denom == 0.0 {
            break;
        }
        let next: Vec<f64> = num.iter().map(|v| v / denom).collect();
        let shift = next
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        y = next;
        if shift < tolerance {
            break;
        }
    }
    Ok(y)
}

/// Initial parameters for a bank of `d`-dimensional features.
///
/// `b_pre` is the bank's geometric median, `b_enc` is zero, encoder rows are
/// standard normal scaled by `1/√d`, and the decoder is the encoder transpose
/// with unit-norm columns. All randomness derives from `seed`.
pub fn init_params<Z: AsRef<[f32]>>(
    bank: &[Z],
    config: &TrainConfig,
    seed: u64,
) -> Result<SaeParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = bank.first().ok_or(Error::Empty("feature bank"))?;
    let d = first.as_ref().len();
    if d == 0 {
        return Err(Error::InvalidConfig("feature dimension is zero".into()));
    }
    config.validate(d)?;
    let m = config.expansion_factor * d;

    let b_pre = if bank.len() > MEDIAN_SUBSAMPLE {
        let mut picked = index::sample(&mut rng, bank.len(), MEDIAN_SUBSAMPLE).into_vec();
        picked.sort_unstable();
        let subset: Vec<&[f32]> = picked.iter().map(|&i| bank[i].as_ref()).collect();
        geometric_median(&subset, WEISZFELD_TOLERANCE, WEISZFELD_MAX_ITERATIONS)?
    } else {
        geometric_median(bank, WEISZFELD_TOLERANCE, WEISZFELD_MAX_ITERATIONS)?
    };

    let scale = 1.0 / (d as f64).sqrt();
    let w_enc: Vec<f32> = (0..m * d)
        .map(|_| (rng.sample::<f64, _>(StandardNormal) * scale) as f32)
        .collect();
    let mut w_dec = vec![0.0f32; d * m];
    for j in 0..m {
        for i in 0..d {
            w_dec[i * m + j] = w_enc[j * d + i];
        }
    }

    let mut params = SaeParams {
        d,
        m,
        k: config.k,
        normalize_decoder: config.normalize_decoder,
        w_enc,
        b_enc: vec![0.0; m],
        w_dec,
        b_pre: b_pre.iter().map(|&v| v as f32).collect(),
    };
    params.renormalize_decoder();
    params.validate()?;
    Ok(params)
}
