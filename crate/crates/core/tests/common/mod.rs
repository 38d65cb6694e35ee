#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use spade_core::channel::Domain;
use spade_core::equalizer::{build_weights, tag_input, BeamVector, EqualizerWeights};
use spade_core::numerics::QFormat;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_raw<R: Rng>(rng: &mut R, fmt: QFormat) -> i64 {
    rng.random_range(fmt.min_raw()..=fmt.max_raw())
}

/// Random weights whose entries are exact values of `fmt` (the top code
/// excluded so rows stay below one).
pub fn random_weights<R: Rng>(rng: &mut R, u: usize, b: usize, tau_w: f64, fmt: QFormat) -> EqualizerWeights {
    let lsb = fmt.lsb();
    let hi = fmt.max_raw();
    let m = DMatrix::from_fn(u, b, |_, _| {
        let re = rng.random_range(-hi..=hi) as f64 * lsb;
        let im = rng.random_range(-hi..=hi) as f64 * lsb;
        Complex64::new(re, im)
    });
    build_weights(&m, &vec![1.0; u], tau_w, fmt, Domain::Beamspace).unwrap()
}

pub fn random_vector<R: Rng>(rng: &mut R, b: usize, tau_y: f64, fmt: QFormat) -> BeamVector {
    let lsb = fmt.lsb();
    let y: Vec<Complex64> = (0..b)
        .map(|_| Complex64::new(random_raw(rng, fmt) as f64 * lsb, random_raw(rng, fmt) as f64 * lsb))
        .collect();
    tag_input(&y, tau_y, fmt).unwrap()
}

/// Random nonnegative threshold, mostly in the interesting range.
pub fn random_tau<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..8) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random_range(0.0..0.6),
    }
}

/// Materialize every real product and skip it when both operand magnitudes
/// are below their threshold. Returns `(re, im, executed)` per row.
pub fn naive_mvm(
    w: &EqualizerWeights,
    x: &BeamVector,
    tau_w: f64,
    tau_y: f64,
    save_power: bool,
) -> Vec<(i128, i128, usize)> {
    let tw = (tau_w * (1u64 << w.format().frac_bits()) as f64).round_ties_even() as i128;
    let ty = x
        .y
        .first()
        .map_or(0, |v| (tau_y * (1u64 << v.format().frac_bits()) as f64).round_ties_even() as i128);
    let (u, b) = (w.users(), w.antennas());
    let mut out = Vec::new();
    for row in 0..u {
        let mut re = 0i128;
        let mut im = 0i128;
        let mut executed = 0;
        for col in 0..b {
            let wv = w.entries()[row * b + col];
            let yv = x.y[col];
            let (wr, wi) = (wv.re().raw() as i128, wv.im().raw() as i128);
            let (yr, yi) = (yv.re().raw() as i128, yv.im().raw() as i128);
            // (weight part, input part, sign, goes to real)
            let products = [(wr, yr, 1, true), (wi, yi, -1, true), (wr, yi, 1, false), (wi, yr, 1, false)];
            for (a, c, sign, real) in products {
                let skip = save_power && a.abs() < tw && c.abs() < ty;
                if skip {
                    continue;
                }
                executed += 1;
                if real {
                    re += sign * a * c;
                } else {
                    im += sign * a * c;
                }
            }
        }
        out.push((re, im, executed));
    }
    out
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn random_complex<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}
