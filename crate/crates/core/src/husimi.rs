//! Husimi phase-space densities of one-particle states.
//!
//! The coherent state centred at `(theta0, p0)` has momentum amplitudes
//! `C exp(-hbar (p - p0)^2 / 2 - i p theta0)`, with `p - p0` taken at its
//! nearest periodic image and `C` fixing unit norm. Values are divided by
//! `2 pi hbar`, so a normalized state integrates to about one over
//! `d theta d p_cl`.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::fmt_f64;
use crate::params::{index_momentum, SimParams};
use crate::state::{OneParticleState, Representation};

/// Gaussian tails beyond this many widths are skipped.
const CUTOFF_WIDTHS: f64 = 9.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaOrigin {
    /// `theta` in `[0, 2 pi)`.
    #[default]
    Zero,
    /// `theta` in `[-pi, pi)`.
    MinusPi,
}

impl ThetaOrigin {
    fn start(self) -> f64 {
        match self {
            ThetaOrigin::Zero => 0.0,
            ThetaOrigin::MinusPi => -PI,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HusimiGridSpec {
    pub n_theta: usize,
    pub n_p: usize,
    /// Inclusive classical momentum range `p_cl = hbar p`.
    pub p_range: (f64, f64),
    #[serde(default)]
    pub origin: ThetaOrigin,
}

impl HusimiGridSpec {
    /// 256 x 256 over `|p_cl| <= p_max`.
    pub fn square(p_max: f64, origin: ThetaOrigin) -> Self {
        HusimiGridSpec {
            n_theta: 256,
            n_p: 256,
            p_range: (-p_max, p_max),
            origin,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.p_range;
        if self.n_theta == 0 || self.n_p == 0 {
            return Err(Error::params("Husimi grid needs at least one point per axis"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::params(format!("bad Husimi momentum range ({lo}, {hi})")));
        }
        if self.n_p > 1 && lo == hi {
            return Err(Error::params("empty Husimi momentum range for several rows"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HusimiGrid {
    pub theta: Vec<f64>,
    pub p_cl: Vec<f64>,
    /// Row-major, one row per `p_cl` value.
    pub values: Vec<f64>,
    /// Squeezing `hbar` of the coherent states.
    pub width_param: f64,
}

impl HusimiGrid {
    pub fn get(&self, ip: usize, itheta: usize) -> f64 {
        self.values[ip * self.theta.len() + itheta]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `(ip, itheta)` of the largest value.
    pub fn argmax(&self) -> (usize, usize) {
        let (i, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        (i / self.theta.len(), i % self.theta.len())
    }

    /// Riemann sum of `H d theta d p_cl`.
    pub fn integral(&self) -> f64 {
        let dtheta = TAU / self.theta.len() as f64;
        let dp = if self.p_cl.len() > 1 {
            self.p_cl[1] - self.p_cl[0]
        } else {
            1.0
        };
        self.values.iter().sum::<f64>() * dtheta * dp
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "theta,p_cl,value")?;
        for (ip, p) in self.p_cl.iter().enumerate() {
            for (it, th) in self.theta.iter().enumerate() {
                writeln!(w, "{},{},{}", fmt_f64(*th), fmt_f64(*p), fmt_f64(self.get(ip, it)))?;
            }
        }
        Ok(())
    }

    /// Binary 8-bit graymap, largest `p_cl` on top, scaled by the maximum.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let (nt, np) = (self.theta.len(), self.p_cl.len());
        let max = self.max();
        write!(w, "P5\n{nt} {np}\n255\n")?;
        let mut bytes = Vec::with_capacity(nt * np);
        for ip in (0..np).rev() {
            for it in 0..nt {
                let v = if max > 0.0 { self.get(ip, it) / max } else { 0.0 };
                bytes.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Squared moduli of the coherent-state overlaps on the grid.
pub fn husimi(state: &OneParticleState, spec: &HusimiGridSpec, params: &SimParams) -> Result<HusimiGrid> {
    state.repr.require(Representation::Momentum)?;
    spec.validate()?;
    let n = state.len();
    if n != params.n {
        return Err(Error::contract(format!(
            "state of length {n} with parameters for N = {}",
            params.n
        )));
    }
    let norm = state.norm_sqr();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let hbar = params.hbar;
    let nt = spec.n_theta;
    let theta0 = spec.origin.start();
    let theta: Vec<f64> = (0..nt).map(|j| theta0 + TAU * j as f64 / nt as f64).collect();
    let p_cl = axis(spec.p_range.0, spec.p_range.1, spec.n_p);
    let fft = FftPlanner::new().plan_fft_inverse(nt);
    let reach = (CUTOFF_WIDTHS / hbar.sqrt()).ceil() as i64;
    let half = n as i64 / 2;
    let rows: Vec<Vec<f64>> = p_cl
        .par_iter()
        .map(|&pc| {
            let p0 = pc / hbar;
            let mut line = vec![Complex64::new(0.0, 0.0); nt];
            let mut c2 = 0.0;
            let centre = p0.round() as i64;
            let (lo, hi) = if reach >= half {
                (centre - half, centre + half)
            } else {
                (centre - reach, centre + reach + 1)
            };
            for q in lo..hi {
                let p = index_momentum(q.rem_euclid(n as i64) as usize, n);
                let mut d = (p as f64 - p0).rem_euclid(n as f64);
                if d >= n as f64 / 2.0 {
                    d -= n as f64;
                }
                let g = (-hbar * d * d / 2.0).exp();
                c2 += g * g;
                // <c|psi> = sum_p g e^{i p theta0} psi(p); fold p onto the theta grid.
                let phase = Complex64::from_polar(1.0, p as f64 * theta0);
                let slot = p.rem_euclid(nt as i64) as usize;
                line[slot] += state.amplitude(p) * phase * g;
            }
            fft.process(&mut line);
            line.iter().map(|z| z.norm_sqr() / c2 / (TAU * hbar)).collect()
        })
        .collect();
    Ok(HusimiGrid {
        theta,
        p_cl,
        values: rows.concat(),
        width_param: hbar,
    })
}

/// Same grid divided by its maximum.
pub fn husimi_scaled(grid: &HusimiGrid) -> Result<HusimiGrid> {
    let max = grid.max();
    if max.is_nan() || max <= 0.0 {
        return Err(Error::numeric("Husimi grid is identically zero"));
    }
    let mut out = grid.clone();
    out.values.iter_mut().for_each(|v| *v /= max);
    Ok(out)
}
