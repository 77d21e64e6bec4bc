//! Loschmidt echoes of the fidelity and of the entanglement entropy.
//!
//! A state is evolved `t_r` steps with the forward parameters and `t_r`
//! steps with the adjoint of the map at the backward parameters. The
//! fidelity echo is `M = |<psi(0)|psi(2 t_r)>|^2` and the entropy echo is
//! `G = S(2 t_r)`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::absorb::{build_initial, InitialStateSpec};
use crate::error::{Error, Result};
use crate::fit::{fit_series, FitError, FitModel, FitResult};
use crate::output::fmt_f64;
use crate::params::{index_momentum, SimParams};
use crate::qmap::QuantumMap;
use crate::schmidt::{schmidt_decompose_with, SchmidtOptions};
use crate::state::{Representation, TwoParticleState};

/// Points with `M` below this are left out of the decay-rate fit.
pub const MIN_FIDELITY: f64 = 1e-12;

/// How the backward leg is realized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReversalMode {
    /// Operator adjoint of the map at the backward parameters.
    #[default]
    Adjoint,
    /// Forward map with `T -> 4 pi - T` at the backward parameters. For
    /// `U = 0` this equals the adjoint; otherwise it is the adjoint with the
    /// sign of `U` flipped.
    Physical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoParams {
    /// Forward map; `base.interaction` and `base.kick` are `U_f`, `k_f`.
    pub base: SimParams,
    pub backward_interaction: f64,
    pub backward_kick: f64,
    pub t_r: u64,
    #[serde(default)]
    pub reversal: ReversalMode,
}

impl EchoParams {
    /// Exact reversal: the backward parameters equal the forward ones.
    pub fn new(base: SimParams, t_r: u64) -> Self {
        EchoParams {
            base,
            backward_interaction: base.interaction,
            backward_kick: base.kick,
            t_r,
            reversal: ReversalMode::Adjoint,
        }
    }

    pub fn with_delta_u(mut self, delta: f64) -> Self {
        self.backward_interaction = self.base.interaction + delta;
        self
    }

    pub fn with_delta_k(mut self, delta: f64) -> Self {
        self.backward_kick = self.base.kick + delta;
        self
    }

    pub fn with_reversal(mut self, reversal: ReversalMode) -> Self {
        self.reversal = reversal;
        self
    }

    /// `(U_f, k_f)`.
    pub fn forward(&self) -> (f64, f64) {
        (self.base.interaction, self.base.kick)
    }

    /// `(U_b, k_b)`.
    pub fn backward(&self) -> (f64, f64) {
        (self.backward_interaction, self.backward_kick)
    }

    pub fn delta_u(&self) -> f64 {
        self.backward_interaction - self.base.interaction
    }

    pub fn delta_k(&self) -> f64 {
        self.backward_kick - self.base.kick
    }

    /// Map constants of the backward leg (before any `T -> 4 pi - T`).
    pub fn backward_params(&self) -> SimParams {
        self.base
            .with_interaction(self.backward_interaction)
            .with_kick(self.backward_kick)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.t_r == 0 {
            return Err(Error::params("t_r must be at least 1"));
        }
        self.backward_params().validate()?;
        if self.reversal == ReversalMode::Physical && self.base.hbar >= 4.0 * PI {
            return Err(Error::params(format!(
                "physical reversal needs T < 4 pi, got {}",
                self.base.hbar
            )));
        }
        Ok(())
    }
}

/// Steps a state through the backward leg.
#[derive(Clone, Debug)]
pub struct BackwardMap {
    map: QuantumMap,
    reversal: ReversalMode,
}

impl BackwardMap {
    pub fn new(params: &EchoParams) -> Result<Self> {
        params.validate()?;
        let b = params.backward_params();
        let map = match params.reversal {
            ReversalMode::Adjoint => QuantumMap::new(b)?,
            ReversalMode::Physical => {
                let hbar = 4.0 * PI - b.hbar;
                QuantumMap::new(SimParams {
                    hbar,
                    chaos: b.kick * hbar,
                    ..b
                })?
            }
        };
        Ok(BackwardMap {
            map,
            reversal: params.reversal,
        })
    }

    pub fn step(&mut self, state: &mut TwoParticleState) -> Result<()> {
        match self.reversal {
            ReversalMode::Adjoint => self.map.adjoint(state),
            ReversalMode::Physical => self.map.forward(state),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EchoOptions {
    /// Passed to the Schmidt decomposition for every entropy.
    pub support_tol: f64,
    /// Record `w(p1, t)` at every step of [`run_echo_once`].
    pub profiles: bool,
}

impl Default for EchoOptions {
    fn default() -> Self {
        EchoOptions {
            support_tol: 1e-30,
            profiles: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EchoRun {
    /// `S(t)` for `t = 0..=2 t_r`.
    pub s_trace: Vec<f64>,
    pub m: f64,
    pub g: f64,
    /// `w(p1, t)` in momentum order, when requested.
    pub profiles: Vec<Vec<f64>>,
    pub final_state: TwoParticleState,
}

impl EchoRun {
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,S")?;
        for (t, s) in self.s_trace.iter().enumerate() {
            writeln!(w, "{t},{}", fmt_f64(*s))?;
        }
        Ok(())
    }
}

fn entropy(state: &TwoParticleState, support_tol: f64) -> Result<f64> {
    let d = schmidt_decompose_with(
        state,
        SchmidtOptions {
            vectors: false,
            support_tol,
        },
    )?;
    Ok(d.entropy())
}

fn fidelity(initial: &TwoParticleState, state: &TwoParticleState) -> f64 {
    initial.inner(state).norm_sqr()
}

/// Forward then backward evolution, recording `S(t)` at every step.
pub fn run_echo_once(params: &EchoParams, initial: &InitialStateSpec, opts: &EchoOptions) -> Result<EchoRun> {
    params.validate()?;
    let psi0 = build_initial(initial, params.base.n)?;
    let mut fwd = QuantumMap::new(params.base)?;
    let mut bwd = BackwardMap::new(params)?;
    let mut s = psi0.clone();
    let steps = 2 * params.t_r;
    let mut s_trace = Vec::with_capacity(steps as usize + 1);
    let mut profiles = Vec::new();
    for t in 0..=steps {
        if t > 0 {
            if t <= params.t_r {
                fwd.forward(&mut s)?;
            } else {
                bwd.step(&mut s)?;
            }
        }
        s_trace.push(entropy(&s, opts.support_tol)?);
        if opts.profiles {
            profiles.push(density_profile(&s, false)?);
        }
    }
    Ok(EchoRun {
        m: fidelity(&psi0, &s),
        g: *s_trace.last().unwrap(),
        s_trace,
        profiles,
        final_state: s,
    })
}

/// Which backward parameter a sweep perturbs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    Interaction,
    Kick,
}

impl Perturbation {
    fn column(self) -> &'static str {
        match self {
            Perturbation::Interaction => "delta_U",
            Perturbation::Kick => "delta_k",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub perturbation: Perturbation,
    pub deltas: Vec<f64>,
    /// Largest `t_r`; defaults to the fit window end of each delta.
    #[serde(default)]
    pub t_r_max: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EchoCell {
    pub delta: f64,
    pub t_r: u64,
    pub m: f64,
    pub g: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFit {
    pub delta: f64,
    /// `-ln M = Gamma t_r`.
    pub gamma: FitResult,
    /// `G = alpha t_r`.
    pub alpha: FitResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EchoSweep {
    pub perturbation: Perturbation,
    pub cells: Vec<EchoCell>,
    pub fits: Vec<CellFit>,
    /// `Gamma = A delta^2`; needs three or more deltas.
    pub a: Option<FitResult>,
    /// `alpha = B delta^2`.
    pub b: Option<FitResult>,
}

/// Last `t_r` of the fit window `[0, 10/delta]`.
pub fn fit_window_end(delta: f64) -> Result<u64> {
    if !(delta.is_finite() && delta != 0.0) {
        return Err(Error::params(format!("perturbation {delta} must be finite and nonzero")));
    }
    let end = (10.0 / delta.abs()).floor() as u64;
    if end < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            found: end as usize,
        }
        .into());
    }
    Ok(end)
}

fn run_cell(
    base: &EchoParams,
    psi0: &TwoParticleState,
    spec: &SweepSpec,
    delta: f64,
    opts: &EchoOptions,
) -> Result<Vec<EchoCell>> {
    let window = fit_window_end(delta)?;
    let t_max = spec.t_r_max.unwrap_or(window).max(1);
    let mut params = match spec.perturbation {
        Perturbation::Interaction => EchoParams::new(base.base, t_max).with_delta_u(delta),
        Perturbation::Kick => EchoParams::new(base.base, t_max).with_delta_k(delta),
    };
    params.reversal = base.reversal;
    let mut fwd = QuantumMap::new(params.base)?;
    let mut bwd = BackwardMap::new(&params)?;
    let mut forward = psi0.clone();
    let mut cells = Vec::with_capacity(t_max as usize);
    for t_r in 1..=t_max {
        fwd.forward(&mut forward)?;
        let mut s = forward.clone();
        for _ in 0..t_r {
            bwd.step(&mut s)?;
        }
        cells.push(EchoCell {
            delta,
            t_r,
            m: fidelity(psi0, &s),
            g: entropy(&s, opts.support_tol)?,
        });
    }
    Ok(cells)
}

fn fit_cell(delta: f64, cells: &[EchoCell]) -> Result<CellFit> {
    let end = fit_window_end(delta)? as f64;
    let window = Some((0.0, end));
    let (tm, lm): (Vec<f64>, Vec<f64>) = cells
        .iter()
        .filter(|c| c.m >= MIN_FIDELITY)
        .map(|c| (c.t_r as f64, -c.m.ln()))
        .unzip();
    let gamma = fit_series(&tm, &lm, FitModel::LinearZeroIntercept, window)?;
    let t: Vec<f64> = cells.iter().map(|c| c.t_r as f64).collect();
    let g: Vec<f64> = cells.iter().map(|c| c.g).collect();
    let alpha = fit_series(&t, &g, FitModel::LinearZeroIntercept, window)?;
    Ok(CellFit { delta, gamma, alpha })
}

fn quadratic_coefficient(fits: &[CellFit], pick: impl Fn(&CellFit) -> f64) -> Option<FitResult> {
    if fits.len() < 3 {
        return None;
    }
    let x: Vec<f64> = fits.iter().map(|f| f.delta * f.delta).collect();
    let y: Vec<f64> = fits.iter().map(pick).collect();
    fit_series(&x, &y, FitModel::LinearZeroIntercept, None).ok()
}

/// Fills `M(t_r)` and `G(t_r)` for every delta and fits the rates.
///
/// The forward trajectory of each delta is advanced once; every `t_r` then
/// costs `t_r` backward steps. Deltas run in parallel.
pub fn sweep_echo(
    base: &EchoParams,
    spec: &SweepSpec,
    initial: &InitialStateSpec,
    opts: &EchoOptions,
) -> Result<EchoSweep> {
    if spec.deltas.is_empty() {
        return Err(Error::params("sweep needs at least one perturbation value"));
    }
    base.base.validate()?;
    let psi0 = build_initial(initial, base.base.n)?;
    let per_delta: Vec<Vec<EchoCell>> = spec
        .deltas
        .par_iter()
        .map(|&d| run_cell(base, &psi0, spec, d, opts))
        .collect::<Result<_>>()?;
    let fits = spec
        .deltas
        .iter()
        .zip(&per_delta)
        .map(|(&d, cells)| fit_cell(d, cells))
        .collect::<Result<Vec<_>>>()?;
    Ok(EchoSweep {
        perturbation: spec.perturbation,
        a: quadratic_coefficient(&fits, |f| f.gamma.value(0)),
        b: quadratic_coefficient(&fits, |f| f.alpha.value(0)),
        cells: per_delta.into_iter().flatten().collect(),
        fits,
    })
}

impl EchoSweep {
    fn write_column<W: Write>(&self, mut w: W, name: &str, pick: impl Fn(&EchoCell) -> f64) -> Result<()> {
        writeln!(w, "t_r,{},{name}", self.perturbation.column())?;
        for c in &self.cells {
            writeln!(w, "{},{},{}", c.t_r, fmt_f64(c.delta), fmt_f64(pick(c)))?;
        }
        Ok(())
    }

    pub fn write_g_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write_column(w, "G", |c| c.g)
    }

    pub fn write_m_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write_column(w, "M", |c| c.m)
    }

    pub fn write_fits_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{},Gamma,Gamma_err,alpha,alpha_err", self.perturbation.column())?;
        for f in &self.fits {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(f.delta),
                fmt_f64(f.gamma.value(0)),
                fmt_f64(f.gamma.stderr(0)),
                fmt_f64(f.alpha.value(0)),
                fmt_f64(f.alpha.stderr(0))
            )?;
        }
        Ok(())
    }

    /// `G(t_r) / t_r` over the fit window of `delta`.
    pub fn growth_ratios(&self, delta: f64) -> Vec<f64> {
        let end = fit_window_end(delta).unwrap_or(0);
        self.cells
            .iter()
            .filter(|c| c.delta == delta && c.t_r <= end)
            .map(|c| c.g / c.t_r as f64)
            .collect()
    }
}

/// `w(p1) = <p1|rho_1|p1>` in momentum order `-N/2 .. N/2-1`, optionally
/// divided by its maximum.
pub fn density_profile(state: &TwoParticleState, normalize: bool) -> Result<Vec<f64>> {
    state.representation().require(Representation::Momentum)?;
    let rows = state.rows();
    let mut w = vec![0.0; rows];
    for slot in 0..rows {
        let p = index_momentum(slot, rows);
        w[(p + rows as i64 / 2) as usize] = state.row(slot).iter().map(|z| z.norm_sqr()).sum();
    }
    let max = w.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::ZeroNorm);
    }
    if normalize {
        w.iter_mut().for_each(|x| *x /= max);
    }
    Ok(w)
}

/// `t,p1,w` rows for `profiles[t]`, restricted to `p_range` when given.
pub fn write_profile_csv<W: Write>(mut w: W, profiles: &[Vec<f64>], p_range: Option<(i64, i64)>) -> Result<()> {
    writeln!(w, "t,p1,w")?;
    for (t, prof) in profiles.iter().enumerate() {
        let half = prof.len() as i64 / 2;
        let (lo, hi) = p_range.unwrap_or((-half, half - 1));
        for (i, x) in prof.iter().enumerate() {
            let p = i as i64 - half;
            if p >= lo && p <= hi {
                writeln!(w, "{t},{p},{}", fmt_f64(*x))?;
            }
        }
    }
    Ok(())
}
