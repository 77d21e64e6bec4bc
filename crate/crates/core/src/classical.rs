//! Classical standard map `p' = p + k sin x`, `x' = x + T p'`.
//!
//! Momenta are in the same units as the quantum lattice, so `K = kT` and
//! the absorbing window `-L/2 <= p < L/2` carries over unchanged.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{fit_series, FitModel, FitResult};
use crate::output::fmt_f64;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalEnsemble {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub kick: f64,
    pub period: f64,
    pub seed: u64,
}

impl ClassicalEnsemble {
    /// Particles uniform in `x in [0, 2 pi)` and `p in [p_lo, p_hi)`.
    pub fn uniform(count: usize, kick: f64, period: f64, p_range: (f64, f64), seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(count);
        let mut p = Vec::with_capacity(count);
        for _ in 0..count {
            x.push(rng.gen_range(0.0..TAU));
            p.push(if p_range.0 < p_range.1 {
                rng.gen_range(p_range.0..p_range.1)
            } else {
                p_range.0
            });
        }
        ClassicalEnsemble { x, p, kick, period, seed }
    }

    pub fn from_points(points: &[(f64, f64)], kick: f64, period: f64) -> Self {
        ClassicalEnsemble {
            x: points.iter().map(|q| q.0.rem_euclid(TAU)).collect(),
            p: points.iter().map(|q| q.1).collect(),
            kick,
            period,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn chaos(&self) -> f64 {
        self.kick * self.period
    }
}

#[inline]
pub fn map_point(x: f64, p: f64, kick: f64, period: f64) -> (f64, f64) {
    let p1 = p + kick * x.sin();
    let x1 = (x + period * p1).rem_euclid(TAU);
    (x1, p1)
}

/// One map step for every particle.
pub fn classical_step(ens: &mut ClassicalEnsemble) {
    let (k, t) = (ens.kick, ens.period);
    ens.x
        .par_iter_mut()
        .zip(ens.p.par_iter_mut())
        .for_each(|(x, p)| {
            let (x1, p1) = map_point(*x, *p, k, t);
            *x = x1;
            *p = p1;
        });
}

/// Mean log stretching per step of the tangent map along one orbit, after
/// discarding `discard` transient steps.
pub fn lyapunov_exponent(kick: f64, period: f64, start: (f64, f64), steps: usize, discard: usize) -> Result<f64> {
    if steps <= discard {
        return Err(Error::params("need more steps than discarded"));
    }
    let (mut x, mut p) = start;
    let (mut dx, mut dp) = (1.0f64, 0.0f64);
    let mut acc = 0.0;
    for i in 0..steps {
        dp += kick * x.cos() * dx;
        dx += period * dp;
        let (x1, p1) = map_point(x, p, kick, period);
        x = x1;
        p = p1;
        let norm = dx.hypot(dp);
        dx /= norm;
        dp /= norm;
        if i >= discard {
            acc += norm.ln();
        }
    }
    Ok(acc / (steps - discard) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionEstimate {
    pub d: f64,
    pub d_err: f64,
    /// `(t, <(p(t) - p(0))^2>)`.
    pub msd: Vec<(u64, f64)>,
    /// False for fewer than 50 steps.
    pub reliable: bool,
    pub fit: FitResult,
}

/// Fits `<(dp)^2> = 2 D t` over `steps` steps of the ensemble.
pub fn diffusion_estimate(ens: &ClassicalEnsemble, steps: usize) -> Result<DiffusionEstimate> {
    if ens.is_empty() {
        return Err(Error::params("empty ensemble"));
    }
    let mut e = ens.clone();
    let p0 = ens.p.clone();
    let mut msd = vec![(0u64, 0.0)];
    for t in 1..=steps {
        classical_step(&mut e);
        let m = e.p.iter().zip(&p0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / e.len() as f64;
        msd.push((t as u64, m));
    }
    let x: Vec<f64> = msd.iter().map(|m| m.0 as f64).collect();
    let y: Vec<f64> = msd.iter().map(|m| m.1).collect();
    let fit = fit_series(&x, &y, FitModel::LinearZeroIntercept, None)?;
    Ok(DiffusionEstimate {
        d: fit.value(0) / 2.0,
        d_err: fit.stderr(0) / 2.0,
        msd,
        reliable: steps >= 50,
        fit,
    })
}

/// One-dimensional diffusion on `[-L/2, L/2]` with absorbing ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusiveModel {
    pub d: f64,
    pub l: f64,
    pub t_th: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialProfile {
    Delta(f64),
    Uniform,
}

impl DiffusiveModel {
    pub fn new(d: f64, l: f64) -> Result<Self> {
        if !(d > 0.0 && l > 0.0 && d.is_finite() && l.is_finite()) {
            return Err(Error::params(format!("diffusive model needs D, L > 0 (got {d}, {l})")));
        }
        Ok(DiffusiveModel { d, l, t_th: l * l / (PI * PI * d) })
    }

    /// `D = k^2/4` with `k = N/8` and `L = N/2`.
    pub fn for_lattice(n: usize) -> Result<Self> {
        let k = n as f64 / 8.0;
        DiffusiveModel::new(k * k / 4.0, n as f64 / 2.0)
    }

    /// Asymptotic `sqrt(P)` of a pair absorbed at both borders.
    pub fn two_particle_line(&self, t: f64) -> f64 {
        (-t / self.t_th).exp()
    }

    /// Asymptotic `sqrt(P)` when only one particle is absorbed.
    pub fn one_particle_line(&self, t: f64) -> f64 {
        (-t / (2.0 * self.t_th)).exp()
    }
}

/// Survival of one diffusing particle by sine-mode expansion.
pub fn diffusive_survival(model: &DiffusiveModel, t: f64, profile: InitialProfile) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::params("negative time"));
    }
    let y0 = match profile {
        InitialProfile::Delta(p0) => {
            if p0.abs() >= model.l / 2.0 {
                return Ok(0.0);
            }
            Some(p0 + model.l / 2.0)
        }
        InitialProfile::Uniform => None,
    };
    if t == 0.0 {
        return Ok(1.0);
    }
    let rate = model.d * PI * PI / (model.l * model.l);
    let mut sum = 0.0;
    let mut n = 1u64;
    loop {
        let nf = n as f64;
        let decay = (-rate * nf * nf * t).exp();
        if decay < 1e-18 || n > 2_000_001 {
            break;
        }
        sum += match y0 {
            Some(y) => 4.0 / (nf * PI) * (nf * PI * y / model.l).sin() * decay,
            None => 8.0 / (nf * nf * PI * PI) * decay,
        };
        n += 2;
    }
    Ok(sum)
}

/// Fraction of never-absorbed trajectories at `t = 0..=max_t`; `window`
/// `(lo, hi)` keeps `lo <= p < hi`, `None` never absorbs.
pub fn classical_recurrence(ens: &ClassicalEnsemble, window: Option<(f64, f64)>, max_t: usize) -> Vec<(u64, f64)> {
    let total = ens.len() as f64;
    let (k, t) = (ens.kick, ens.period);
    let inside = |p: f64| window.map_or(true, |(lo, hi)| p >= lo && p < hi);
    let mut alive: Vec<(f64, f64)> = ens
        .x
        .iter()
        .zip(&ens.p)
        .filter(|(_, &p)| inside(p))
        .map(|(&x, &p)| (x, p))
        .collect();
    let mut out = vec![(0u64, alive.len() as f64 / total)];
    for step in 1..=max_t {
        alive = alive
            .into_par_iter()
            .map(|(x, p)| map_point(x, p, k, t))
            .filter(|q| inside(q.1))
            .collect();
        out.push((step as u64, alive.len() as f64 / total));
    }
    out
}

pub fn write_survival_csv<W: Write>(mut w: W, series: &[(u64, f64)]) -> Result<()> {
    writeln!(w, "t,P")?;
    for (t, p) in series {
        writeln!(w, "{},{}", t, fmt_f64(*p))?;
    }
    Ok(())
}

pub fn write_diffusion_csv<W: Write>(mut w: W, est: &DiffusionEstimate) -> Result<()> {
    writeln!(w, "t,msd")?;
    for (t, m) in &est.msd {
        writeln!(w, "{},{}", t, fmt_f64(*m))?;
    }
    Ok(())
}
