//! Unitary momentum <-> angle transforms.
//!
//! `psi(theta_m) = N^{-1/2} sum_p psi_p exp(i p theta_m)` with
//! `theta_m = 2 pi m / N`, so going to the angle grid is the backward FFT.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::state::{OneParticleState, Representation, TwoParticleState};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Cached forward/backward plans for one lattice size.
pub struct SpectralPlan {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    backward: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Clone for SpectralPlan {
    fn clone(&self) -> Self {
        SpectralPlan {
            n: self.n,
            forward: Arc::clone(&self.forward),
            backward: Arc::clone(&self.backward),
            scratch: vec![Complex64::new(0.0, 0.0); self.scratch.len()],
        }
    }
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("n", &self.n).finish()
    }
}

impl SpectralPlan {
    pub fn new(n: usize) -> Self {
        let (forward, backward) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(n), p.plan_fft_inverse(n))
        });
        let len = forward
            .get_inplace_scratch_len()
            .max(backward.get_inplace_scratch_len());
        SpectralPlan {
            n,
            forward,
            backward,
            scratch: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unnormalized backward transform of every length-`n` chunk.
    pub fn backward_rows(&mut self, buf: &mut [Complex64]) {
        self.backward.process_with_scratch(buf, &mut self.scratch);
    }

    /// Unnormalized forward transform of every length-`n` chunk.
    pub fn forward_rows(&mut self, buf: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, &mut self.scratch);
    }

    fn scale(&self, buf: &mut [Complex64], passes: i32) {
        let s = (self.n as f64).powf(-0.5 * passes as f64);
        buf.iter_mut().for_each(|a| *a *= s);
    }

    pub fn line_to_angle(&mut self, buf: &mut [Complex64]) {
        self.backward_rows(buf);
        self.scale(buf, 1);
    }

    pub fn line_to_momentum(&mut self, buf: &mut [Complex64]) {
        self.forward_rows(buf);
        self.scale(buf, 1);
    }

    pub fn grid_to_angle(&mut self, buf: &mut [Complex64]) {
        self.backward_rows(buf);
        transpose_square(buf, self.n);
        self.backward_rows(buf);
        transpose_square(buf, self.n);
        self.scale(buf, 2);
    }

    pub fn grid_to_momentum(&mut self, buf: &mut [Complex64]) {
        self.forward_rows(buf);
        transpose_square(buf, self.n);
        self.forward_rows(buf);
        transpose_square(buf, self.n);
        self.scale(buf, 2);
    }
}

/// In-place transpose of a row-major `n x n` grid.
pub fn transpose_square(buf: &mut [Complex64], n: usize) {
    debug_assert_eq!(buf.len(), n * n);
    const BLOCK: usize = 32;
    for bi in (0..n).step_by(BLOCK) {
        for bj in (bi..n).step_by(BLOCK) {
            let i_end = (bi + BLOCK).min(n);
            let j_end = (bj + BLOCK).min(n);
            for i in bi..i_end {
                let j_start = if bi == bj { i + 1 } else { bj };
                for j in j_start..j_end {
                    buf.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

/// States that can move between momentum and angle grids.
pub trait Spectral: Sized {
    fn to_angle(&self) -> Result<Self>;
    fn to_momentum(&self) -> Result<Self>;
}

impl Spectral for OneParticleState {
    fn to_angle(&self) -> Result<Self> {
        self.repr.require(Representation::Momentum)?;
        let mut out = self.clone();
        SpectralPlan::new(self.len()).line_to_angle(&mut out.amps);
        out.repr = Representation::Angle;
        Ok(out)
    }

    fn to_momentum(&self) -> Result<Self> {
        self.repr.require(Representation::Angle)?;
        let mut out = self.clone();
        SpectralPlan::new(self.len()).line_to_momentum(&mut out.amps);
        out.repr = Representation::Momentum;
        Ok(out)
    }
}

fn require_square(s: &TwoParticleState) -> Result<()> {
    if s.is_square() {
        Ok(())
    } else {
        Err(Error::UnsupportedShape {
            rows: s.rows(),
            cols: s.cols(),
            reason: "transforms need a square grid",
        })
    }
}

impl Spectral for TwoParticleState {
    fn to_angle(&self) -> Result<Self> {
        self.representation().require(Representation::Momentum)?;
        require_square(self)?;
        let mut out = self.clone();
        SpectralPlan::new(self.n()).grid_to_angle(out.amplitudes_mut());
        out.set_representation(Representation::Angle);
        Ok(out)
    }

    fn to_momentum(&self) -> Result<Self> {
        self.representation().require(Representation::Angle)?;
        require_square(self)?;
        let mut out = self.clone();
        SpectralPlan::new(self.n()).grid_to_momentum(out.amplitudes_mut());
        out.set_representation(Representation::Momentum);
        Ok(out)
    }
}

pub fn to_angle<S: Spectral>(state: &S) -> Result<S> {
    state.to_angle()
}

pub fn to_momentum<S: Spectral>(state: &S) -> Result<S> {
    state.to_momentum()
}
