//! One- and two-particle wave functions on the momentum lattice.
//!
//! Momentum amplitudes are stored in the native transform order: momentum
//! `p` lives in slot `p mod N`. Two-particle grids are row-major in `p1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{check_momentum, momentum_index};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Representation {
    Momentum,
    Angle,
}

impl Representation {
    pub(crate) fn require(self, expected: Representation) -> Result<()> {
        if self == expected {
            Ok(())
        } else {
            Err(Error::WrongRepresentation {
                expected,
                found: self,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OneParticleState {
    pub amps: Vec<Complex64>,
    pub repr: Representation,
}

impl OneParticleState {
    pub fn from_amplitudes(amps: Vec<Complex64>, repr: Representation) -> Self {
        OneParticleState { amps, repr }
    }

    pub fn zeros(n: usize) -> Self {
        OneParticleState {
            amps: vec![Complex64::new(0.0, 0.0); n],
            repr: Representation::Momentum,
        }
    }

    /// Momentum eigenstate `|p>`.
    pub fn momentum_eigenstate(n: usize, p: i64) -> Result<Self> {
        check_momentum(p, n)?;
        let mut s = Self::zeros(n);
        s.amps[momentum_index(p, n)] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amplitude(&self, p: i64) -> Complex64 {
        self.amps[momentum_index(p, self.amps.len())]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &OneParticleState) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Scales to unit norm and returns the previous norm.
    pub fn normalize(&mut self) -> Result<f64> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        if !norm.is_finite() {
            return Err(Error::numeric("non-finite norm"));
        }
        let inv = 1.0 / norm;
        self.amps.iter_mut().for_each(|a| *a *= inv);
        Ok(norm)
    }

    pub fn max_abs_diff(&self, other: &OneParticleState) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Two-particle amplitude grid `psi(p1, p2)`.
///
/// Grids produced by the dynamics are square (`N x N`); truncated views used
/// for Schmidt decompositions may be rectangular.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoParticleState {
    rows: usize,
    cols: usize,
    amps: Vec<Complex64>,
    repr: Representation,
    norm_cache: Option<f64>,
}

impl TwoParticleState {
    pub fn zeros(n: usize) -> Self {
        TwoParticleState {
            rows: n,
            cols: n,
            amps: vec![Complex64::new(0.0, 0.0); n * n],
            repr: Representation::Momentum,
            norm_cache: None,
        }
    }

    pub fn from_amplitudes(
        rows: usize,
        cols: usize,
        amps: Vec<Complex64>,
        repr: Representation,
    ) -> Result<Self> {
        if amps.len() != rows * cols {
            return Err(Error::contract(format!(
                "{} amplitudes for a {rows}x{cols} grid",
                amps.len()
            )));
        }
        Ok(TwoParticleState {
            rows,
            cols,
            amps,
            repr,
            norm_cache: None,
        })
    }

    /// Product state `|p1> (x) |p2>`.
    pub fn momentum_product(n: usize, p1: i64, p2: i64) -> Result<Self> {
        check_momentum(p1, n)?;
        check_momentum(p2, n)?;
        let mut s = Self::zeros(n);
        s.amps[momentum_index(p1, n) * n + momentum_index(p2, n)] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    /// Tensor product `u (x) v`.
    pub fn product(u: &OneParticleState, v: &OneParticleState) -> Result<Self> {
        if u.repr != v.repr {
            return Err(Error::contract("factors in different representations"));
        }
        let (rows, cols) = (u.len(), v.len());
        let mut amps = Vec::with_capacity(rows * cols);
        for a in &u.amps {
            amps.extend(v.amps.iter().map(|b| a * b));
        }
        Ok(TwoParticleState {
            rows,
            cols,
            amps,
            repr: u.repr,
            norm_cache: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Lattice size of a square grid.
    pub fn n(&self) -> usize {
        self.rows
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub(crate) fn set_representation(&mut self, repr: Representation) {
        self.repr = repr;
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Mutable access drops the cached norm.
    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        self.norm_cache = None;
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.amps[i * self.cols..(i + 1) * self.cols]
    }

    /// Amplitude at integer momenta of a square momentum grid.
    pub fn get(&self, p1: i64, p2: i64) -> Complex64 {
        self.amps[momentum_index(p1, self.rows) * self.cols + momentum_index(p2, self.cols)]
    }

    pub fn set(&mut self, p1: i64, p2: i64, value: Complex64) {
        let idx = momentum_index(p1, self.rows) * self.cols + momentum_index(p2, self.cols);
        self.norm_cache = None;
        self.amps[idx] = value;
    }

    pub fn norm_sqr(&self) -> f64 {
        if let Some(n) = self.norm_cache {
            return n;
        }
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Cached squared norm, if one was recorded.
    pub fn cached_norm_sqr(&self) -> Option<f64> {
        self.norm_cache
    }

    /// Recomputes and caches the squared norm.
    pub fn refresh_norm(&mut self) -> f64 {
        self.norm_cache = None;
        let n = self.norm_sqr();
        self.norm_cache = Some(n);
        n
    }

    /// Scales to unit norm and returns the previous norm.
    pub fn normalize(&mut self) -> Result<f64> {
        self.norm_cache = None;
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        if !norm.is_finite() {
            return Err(Error::numeric("non-finite norm"));
        }
        let inv = 1.0 / norm;
        self.amps.iter_mut().for_each(|a| *a *= inv);
        self.norm_cache = Some(1.0);
        Ok(norm)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &TwoParticleState) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &TwoParticleState) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Grid with particles exchanged, `psi(p2, p1)`.
    pub fn transposed(&self) -> TwoParticleState {
        let mut amps = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                amps[j * self.rows + i] = self.amps[i * self.cols + j];
            }
        }
        TwoParticleState {
            rows: self.cols,
            cols: self.rows,
            amps,
            repr: self.repr,
            norm_cache: self.norm_cache,
        }
    }

    /// Sub-grid on the given array slots (not momenta).
    pub fn select(&self, row_slots: &[usize], col_slots: &[usize]) -> TwoParticleState {
        let mut amps = Vec::with_capacity(row_slots.len() * col_slots.len());
        for &i in row_slots {
            let row = self.row(i);
            amps.extend(col_slots.iter().map(|&j| row[j]));
        }
        TwoParticleState {
            rows: row_slots.len(),
            cols: col_slots.len(),
            amps,
            repr: self.repr,
            norm_cache: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_norm() {
        let u = OneParticleState::momentum_eigenstate(8, 0).unwrap();
        let v = OneParticleState::momentum_eigenstate(8, -4).unwrap();
        let s = TwoParticleState::product(&u, &v).unwrap();
        assert_eq!(s.get(0, -4), Complex64::new(1.0, 0.0));
        assert_eq!(s.norm_sqr(), 1.0);
        assert_eq!(s, TwoParticleState::momentum_product(8, 0, -4).unwrap());
    }

    #[test]
    fn norm_cache_tracks_mutation() {
        let mut s = TwoParticleState::momentum_product(8, 1, 2).unwrap();
        assert_eq!(s.refresh_norm(), 1.0);
        s.amplitudes_mut()[0] = Complex64::new(1.0, 0.0);
        assert_eq!(s.cached_norm_sqr(), None);
        assert_eq!(s.norm_sqr(), 2.0);
        s.normalize().unwrap();
        assert_eq!(s.cached_norm_sqr(), Some(1.0));
    }

    #[test]
    fn zero_norm_is_an_error() {
        let mut s = TwoParticleState::zeros(8);
        assert!(matches!(s.normalize(), Err(Error::ZeroNorm)));
    }

    #[test]
    fn transpose_swaps_particles() {
        let s = TwoParticleState::momentum_product(8, 1, -2).unwrap();
        assert_eq!(s.transposed().get(-2, 1), Complex64::new(1.0, 0.0));
    }
}
