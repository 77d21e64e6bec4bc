//! The symmetrized quantum standard map for one and two particles.
//!
//! One two-particle step is
//! `R K R` with `R = exp(-i T (p1^2 + p2^2)/4 + i V/2)` diagonal in momentum
//! and `K = exp(-i k (cos theta1 + cos theta2))` diagonal in angle; `V` is
//! the interaction of [`interaction_diag`]. The backward step is the exact
//! operator adjoint `R^dag K^dag R^dag`.

use num_complex::Complex64;

use crate::absorb::MomentumWindow;
use crate::error::{Error, Result};
use crate::params::{check_momentum, index_momentum, SimParams};
use crate::state::{OneParticleState, Representation, TwoParticleState};
use crate::transform::{transpose_square, SpectralPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Adjoint,
}

impl Direction {
    #[inline]
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Adjoint => -1.0,
        }
    }
}

/// Periodic distance between two lattice momenta.
#[inline]
fn periodic_distance(p1: i64, p2: i64, n: usize) -> i64 {
    let d = (p1 - p2).rem_euclid(n as i64);
    d.min(n as i64 - d)
}

#[inline]
fn interaction_value(params: &SimParams, p1: i64, p2: i64) -> f64 {
    let d = periodic_distance(p1, p2, params.n);
    if d == 0 {
        params.interaction
    } else if d as usize <= params.range {
        params.interaction / 2.0
    } else {
        0.0
    }
}

/// Eigenvalue of the interaction operator at momenta `(p1, p2)`.
pub fn interaction_diag(params: &SimParams, p1: i64, p2: i64) -> Result<f64> {
    check_momentum(p1, params.n)?;
    check_momentum(p2, params.n)?;
    Ok(interaction_value(params, p1, p2))
}

/// Half-step phases `exp(-i[T(p1^2+p2^2)/4 - V/2])` in array order.
fn half_rotation_table(params: &SimParams) -> Vec<Complex64> {
    let n = params.n;
    let mut table = Vec::with_capacity(n * n);
    for i in 0..n {
        let p1 = index_momentum(i, n);
        for j in 0..n {
            let p2 = index_momentum(j, n);
            let kinetic = params.hbar * ((p1 * p1 + p2 * p2) as f64) / 4.0;
            let phase = kinetic - interaction_value(params, p1, p2) / 2.0;
            table.push(Complex64::from_polar(1.0, -phase));
        }
    }
    table
}

/// `exp(-i k cos theta_j)` on the angle grid, times `scale`.
fn kick_line(n: usize, kick: f64, scale: f64) -> Vec<Complex64> {
    (0..n)
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            Complex64::from_polar(scale, -kick * theta.cos())
        })
        .collect()
}

fn one_particle_half_table(n: usize, hbar: f64) -> Vec<Complex64> {
    (0..n)
        .map(|j| {
            let p = index_momentum(j, n) as f64;
            Complex64::from_polar(1.0, -hbar * p * p / 4.0)
        })
        .collect()
}

#[inline]
fn apply_phases(amps: &mut [Complex64], table: &[Complex64], dir: Direction) {
    match dir {
        Direction::Forward => amps.iter_mut().zip(table).for_each(|(a, t)| *a *= t),
        Direction::Adjoint => amps
            .iter_mut()
            .zip(table)
            .for_each(|(a, t)| *a *= t.conj()),
    }
}

fn require_square(state: &TwoParticleState, n: usize) -> Result<()> {
    if state.rows() != n || state.cols() != n {
        return Err(Error::UnsupportedShape {
            rows: state.rows(),
            cols: state.cols(),
            reason: "map needs an N x N grid matching the parameters",
        });
    }
    Ok(())
}

/// Two-particle map with cached transform plans and phase tables.
#[derive(Clone, Debug)]
pub struct QuantumMap {
    params: SimParams,
    plan: SpectralPlan,
    half: Vec<Complex64>,
    kick: Vec<Complex64>,
}

impl QuantumMap {
    pub fn new(params: SimParams) -> Result<Self> {
        params.validate()?;
        let n = params.n;
        Ok(QuantumMap {
            params,
            plan: SpectralPlan::new(n),
            half: half_rotation_table(&params),
            // Both unnormalized 2-D passes are folded into the kick factors.
            kick: kick_line(n, params.kick, 1.0 / n as f64),
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    /// One step in place, forward or adjoint.
    pub fn apply(&mut self, state: &mut TwoParticleState, dir: Direction) -> Result<()> {
        state.representation().require(Representation::Momentum)?;
        require_square(state, self.params.n)?;
        let n = self.params.n;
        let kick = &self.kick;
        let amps = state.amplitudes_mut();
        apply_phases(amps, &self.half, dir);
        // Angle grid is left transposed; the kick is symmetric in (theta1, theta2).
        self.plan.backward_rows(amps);
        transpose_square(amps, n);
        self.plan.backward_rows(amps);
        let sign = dir.sign();
        for (a_row, e_row) in amps.chunks_exact_mut(n).zip(kick) {
            let e_row = if sign > 0.0 { *e_row } else { e_row.conj() };
            for (a, e) in a_row.iter_mut().zip(kick) {
                let e = if sign > 0.0 { *e } else { e.conj() };
                *a *= e_row * e;
            }
        }
        self.plan.forward_rows(amps);
        transpose_square(amps, n);
        self.plan.forward_rows(amps);
        apply_phases(amps, &self.half, dir);
        if !amps.iter().all(|a| a.re.is_finite() && a.im.is_finite()) {
            return Err(Error::numeric("non-finite amplitude after map step"));
        }
        Ok(())
    }

    pub fn forward(&mut self, state: &mut TwoParticleState) -> Result<()> {
        self.apply(state, Direction::Forward)
    }

    pub fn adjoint(&mut self, state: &mut TwoParticleState) -> Result<()> {
        self.apply(state, Direction::Adjoint)
    }
}

/// One-particle symmetrized map `exp(-iTp^2/4) exp(-ik cos theta) exp(-iTp^2/4)`.
#[derive(Clone, Debug)]
pub struct OneParticleMap {
    n: usize,
    plan: SpectralPlan,
    half: Vec<Complex64>,
    kick: Vec<Complex64>,
}

impl OneParticleMap {
    pub fn new(params: &SimParams) -> Result<Self> {
        params.validate()?;
        let n = params.n;
        Ok(OneParticleMap {
            n,
            plan: SpectralPlan::new(n),
            half: one_particle_half_table(n, params.hbar),
            kick: kick_line(n, params.kick, 1.0 / n as f64),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn apply(&mut self, state: &mut OneParticleState, dir: Direction) -> Result<()> {
        state.repr.require(Representation::Momentum)?;
        if state.len() != self.n {
            return Err(Error::contract(format!(
                "state of length {} for a map of size {}",
                state.len(),
                self.n
            )));
        }
        let amps = &mut state.amps;
        apply_phases(amps, &self.half, dir);
        self.plan.backward_rows(amps);
        apply_phases(amps, &self.kick, dir);
        self.plan.forward_rows(amps);
        apply_phases(amps, &self.half, dir);
        if !amps.iter().all(|a| a.re.is_finite() && a.im.is_finite()) {
            return Err(Error::numeric("non-finite amplitude after map step"));
        }
        Ok(())
    }

    /// Forward step followed by projection onto `window` when given.
    pub fn step(&mut self, state: &mut OneParticleState, window: Option<MomentumWindow>) -> Result<()> {
        self.apply(state, Direction::Forward)?;
        if let Some(w) = window {
            w.project_line(&mut state.amps);
        }
        Ok(())
    }
}

/// Multiplies by `exp(-+i [T(p1^2+p2^2)/4 - V(p1,p2)/2])`.
pub fn half_rotation(
    state: &TwoParticleState,
    params: &SimParams,
    direction: Direction,
) -> Result<TwoParticleState> {
    state.representation().require(Representation::Momentum)?;
    params.validate()?;
    require_square(state, params.n)?;
    let table = half_rotation_table(params);
    let mut out = state.clone();
    apply_phases(out.amplitudes_mut(), &table, direction);
    Ok(out)
}

/// Multiplies an angle-grid state by `exp(-+i k (cos theta1 + cos theta2))`.
pub fn kick(
    state: &TwoParticleState,
    kick_strength: f64,
    direction: Direction,
) -> Result<TwoParticleState> {
    state.representation().require(Representation::Angle)?;
    if !state.is_square() {
        return Err(Error::UnsupportedShape {
            rows: state.rows(),
            cols: state.cols(),
            reason: "kick needs a square grid",
        });
    }
    let n = state.n();
    let line = kick_line(n, kick_strength, 1.0);
    let mut out = state.clone();
    let sign = direction.sign();
    for (row, e1) in out.amplitudes_mut().chunks_exact_mut(n).zip(&line) {
        for (a, e2) in row.iter_mut().zip(&line) {
            let f = e1 * e2;
            *a *= if sign > 0.0 { f } else { f.conj() };
        }
    }
    Ok(out)
}

pub fn forward_step(state: &TwoParticleState, params: &SimParams) -> Result<TwoParticleState> {
    if !state.is_finite() {
        return Err(Error::numeric("non-finite amplitudes"));
    }
    let mut out = state.clone();
    QuantumMap::new(*params)?.forward(&mut out)?;
    Ok(out)
}

/// Exact adjoint of [`forward_step`] built with `params_backward`.
pub fn backward_step(
    state: &TwoParticleState,
    params_backward: &SimParams,
) -> Result<TwoParticleState> {
    if !state.is_finite() {
        return Err(Error::numeric("non-finite amplitudes"));
    }
    let mut out = state.clone();
    QuantumMap::new(*params_backward)?.adjoint(&mut out)?;
    Ok(out)
}

/// Symmetrized one-particle step, optionally projected onto an absorbing window.
pub fn one_particle_step(
    state: &OneParticleState,
    params: &SimParams,
    absorb_window: Option<MomentumWindow>,
) -> Result<OneParticleState> {
    let mut out = state.clone();
    OneParticleMap::new(params)?.step(&mut out, absorb_window)?;
    Ok(out)
}
