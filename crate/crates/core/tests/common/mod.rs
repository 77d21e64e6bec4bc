//! Dense reference operators and random states shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::TAU;

use cepr_core::params::index_momentum;
use cepr_core::{OneParticleState, Representation, SimParams, TwoParticleState};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `<p'| exp(-i k cos theta) |p>` on the `n`-point angle grid, slots in array order.
pub fn dense_kick(n: usize, k: f64) -> CMat {
    CMat::from_fn(n, n, |a, b| {
        let d = (index_momentum(a, n) - index_momentum(b, n)) as f64;
        let mut s = c(0.0, 0.0);
        for j in 0..n {
            let th = TAU * j as f64 / n as f64;
            s += Complex64::from_polar(1.0, -d * th - k * th.cos());
        }
        s / n as f64
    })
}

fn interaction(p: &SimParams, p1: i64, p2: i64) -> f64 {
    let n = p.n as i64;
    let d = (p1 - p2).rem_euclid(n);
    let d = d.min(n - d);
    if d == 0 {
        p.interaction
    } else if d as usize <= p.range {
        p.interaction / 2.0
    } else {
        0.0
    }
}

/// Full one-step operator on `n^2` amplitudes indexed `slot1 * n + slot2`.
pub fn dense_two_particle(p: &SimParams) -> CMat {
    let n = p.n;
    let k1 = dense_kick(n, p.kick);
    let mut kk = CMat::zeros(n * n, n * n);
    for a in 0..n {
        for b in 0..n {
            for cc in 0..n {
                for d in 0..n {
                    kk[(a * n + b, cc * n + d)] = k1[(a, cc)] * k1[(b, d)];
                }
            }
        }
    }
    let r = CMat::from_fn(n * n, n * n, |i, j| {
        if i != j {
            return c(0.0, 0.0);
        }
        let (p1, p2) = (index_momentum(i / n, n), index_momentum(i % n, n));
        let phase = p.hbar * ((p1 * p1 + p2 * p2) as f64) / 4.0 - interaction(p, p1, p2) / 2.0;
        Complex64::from_polar(1.0, -phase)
    });
    &r * kk * &r
}

pub fn dense_one_particle(p: &SimParams) -> CMat {
    let n = p.n;
    let r = CMat::from_fn(n, n, |i, j| {
        if i == j {
            let q = index_momentum(i, n) as f64;
            Complex64::from_polar(1.0, -p.hbar * q * q / 4.0)
        } else {
            c(0.0, 0.0)
        }
    });
    &r * dense_kick(n, p.kick) * &r
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_amps(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

pub fn random_two(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> TwoParticleState {
    let mut s =
        TwoParticleState::from_amplitudes(rows, cols, random_amps(rng, rows * cols), Representation::Momentum)
            .unwrap();
    s.normalize().unwrap();
    s
}

pub fn random_one(rng: &mut ChaCha8Rng, n: usize) -> OneParticleState {
    let mut s = OneParticleState::from_amplitudes(random_amps(rng, n), Representation::Momentum);
    s.normalize().unwrap();
    s
}

pub fn to_vector(s: &TwoParticleState) -> DVector<Complex64> {
    DVector::from_column_slice(s.amplitudes())
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Singular values of a row-major grid by nalgebra's SVD, descending.
pub fn singular_values(s: &TwoParticleState) -> Vec<f64> {
    let m = CMat::from_row_slice(s.rows(), s.cols(), s.amplitudes());
    let mut v: Vec<f64> = m.singular_values().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

pub fn entropy_bits(alphas: &[f64]) -> f64 {
    alphas
        .iter()
        .map(|a| a * a)
        .filter(|&w| w > 0.0)
        .map(|w| -w * w.log2())
        .sum()
}
