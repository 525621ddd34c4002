mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sae_debias::{EncodeMode, SaeParams, SparseCode};

/// Small shapes with `m` a multiple of `d` and `1 ≤ k ≤ m`.
fn shape() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..6, 1usize..5).prop_flat_map(|(d, e)| {
        let m = d * e;
        (Just(d), Just(m), 1..=m)
    })
}

fn params_for(seed: u64, d: usize, m: usize, k: usize) -> SaeParams {
    random_params(&mut ChaCha8Rng::seed_from_u64(seed), d, m, k, seed % 2 == 0)
}

/// Inputs drawn from a coarse grid so that equal pre-activations (ties) are common.
fn tie_heavy_params(d: usize, m: usize, k: usize, w: Vec<i8>, b: Vec<i8>) -> SaeParams {
    let w_enc: Vec<f32> = w.iter().map(|&v| v as f32 * 0.5).collect();
    let b_enc: Vec<f32> = b.iter().map(|&v| v as f32 * 0.5).collect();
    let mut w_dec = vec![0.0f32; d * m];
    for j in 0..m {
        w_dec[(j % d) * m + j] = 1.0;
    }
    SaeParams::new(d, m, k, true, w_enc, b_enc, w_dec, vec![0.0; d]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn train_code_equals_sorted_top_k((d, m, k) in shape(), seed in any::<u64>(), z in prop::collection::vec(-3.0f32..3.0, 6)) {
        let p = params_for(seed, d, m, k);
        let z = &z[..d];
        let dense = p.encode_inference(z).unwrap().values;
        let code = p.encode_train(z).unwrap();
        prop_assert_eq!(code.mode, EncodeMode::TrainTopK);
        prop_assert_eq!(&code.values, &brute_top_k(&dense, k));
    }

    #[test]
    fn ties_keep_lowest_indices(
        (d, m, k) in shape(),
        w in prop::collection::vec(-2i8..=2, 120),
        b in prop::collection::vec(-1i8..=1, 24),
        z in prop::collection::vec(-2i8..=2, 6),
    ) {
        let p = tie_heavy_params(d, m, k, w[..m * d].to_vec(), b[..m].to_vec());
        let z: Vec<f32> = z[..d].iter().map(|&v| v as f32).collect();
        let dense = p.encode_inference(&z).unwrap().values;
        prop_assert_eq!(p.encode_train(&z).unwrap().values, brute_top_k(&dense, k));
    }

    #[test]
    fn train_support_is_within_inference_support((d, m, k) in shape(), seed in any::<u64>(), z in prop::collection::vec(-3.0f32..3.0, 6)) {
        let p = params_for(seed, d, m, k);
        let inference = p.encode_inference(&z[..d]).unwrap();
        let train = p.encode_train(&z[..d]).unwrap();
        prop_assert!(train.nonzero_count() <= k);
        prop_assert!(inference.values.iter().all(|&v| v >= 0.0));
        for j in train.support() {
            prop_assert_eq!(train.values[j], inference.values[j]);
        }
    }

    #[test]
    fn decode_is_affine((d, m, k) in shape(), seed in any::<u64>(),
        a in prop::collection::vec(0.0f32..2.0, 20), b in prop::collection::vec(0.0f32..2.0, 20)) {
        let p = params_for(seed, d, m, k);
        let code = |v: Vec<f32>| SparseCode { values: v, mode: EncodeMode::InferenceDense };
        let sum: Vec<f32> = a[..m].iter().zip(&b[..m]).map(|(x, y)| x + y).collect();
        let da = p.decode(&code(a[..m].to_vec())).unwrap();
        let db = p.decode(&code(b[..m].to_vec())).unwrap();
        let ds = p.decode(&code(sum)).unwrap();
        for i in 0..d {
            let bias = p.b_pre()[i] as f64;
            let lhs = ds[i] as f64 - bias;
            let rhs = (da[i] as f64 - bias) + (db[i] as f64 - bias);
            prop_assert!((lhs - rhs).abs() < 1e-4, "{} vs {}", lhs, rhs);
        }
    }

    #[test]
    fn permuting_latents_permutes_codes((d, m, k) in shape(), seed in any::<u64>(),
        z in prop::collection::vec(-3.0f32..3.0, 6), rot in 0usize..20) {
        let p = params_for(seed, d, m, k);
        let perm: Vec<usize> = (0..m).map(|j| (j + rot) % m).collect();
        let mut w_enc = vec![0.0f32; m * d];
        let mut b_enc = vec![0.0f32; m];
        let mut w_dec = vec![0.0f32; d * m];
        for (new, &old) in perm.iter().enumerate() {
            w_enc[new * d..(new + 1) * d].copy_from_slice(&p.w_enc()[old * d..(old + 1) * d]);
            b_enc[new] = p.b_enc()[old];
            for i in 0..d {
                w_dec[i * m + new] = p.w_dec()[i * m + old];
            }
        }
        let q = SaeParams::new(d, m, k, p.normalize_decoder(), w_enc, b_enc, w_dec, p.b_pre().to_vec()).unwrap();
        let hp = p.encode_inference(&z[..d]).unwrap().values;
        let hq = q.encode_inference(&z[..d]).unwrap().values;
        for (new, &old) in perm.iter().enumerate() {
            prop_assert_eq!(hq[new], hp[old]);
        }
        let rp = p.decode(&p.encode_inference(&z[..d]).unwrap()).unwrap();
        let rq = q.decode(&q.encode_inference(&z[..d]).unwrap()).unwrap();
        for (x, y) in rp.iter().zip(&rq) {
            prop_assert!((x - y).abs() < 1e-5);
        }
    }
}

#[test]
fn top_k_oracle_on_thousand_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..1000u64 {
        let (d, m, k) = (4, 16, 1 + (i as usize % 16));
        let p = random_params(&mut rng, d, m, k, true);
        let z: Vec<f32> = (0..d).map(|j| ((i as f32) * 0.37 + j as f32).sin()).collect();
        let dense = p.encode_inference(&z).unwrap().values;
        assert_eq!(p.encode_train(&z).unwrap().values, brute_top_k(&dense, k));
    }
}

#[test]
fn shape_and_input_errors() {
    let p = params_for(1, 2, 4, 2);
    assert!(p.encode_train(&[1.0]).is_err());
    assert!(p.encode_inference(&[1.0, f32::NAN]).is_err());
    let bad = SparseCode { values: vec![0.0; 3], mode: EncodeMode::InferenceDense };
    assert!(p.decode(&bad).is_err());
    assert!(SaeParams::new(2, 3, 1, false, vec![0.0; 6], vec![0.0; 3], vec![0.0; 6], vec![0.0; 2]).is_err());
    assert!(SaeParams::new(2, 4, 5, false, vec![0.0; 8], vec![0.0; 4], vec![0.0; 8], vec![0.0; 2]).is_err());
    assert!(SaeParams::new(2, 4, 1, true, vec![0.0; 8], vec![0.0; 4], vec![0.5; 8], vec![0.0; 2]).is_err());
}
