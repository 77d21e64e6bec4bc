//! Schmidt decompositions of two-particle states.
//!
//! A state is written `psi(p1, p2) = sum_i alpha_i u_i(p1) v_i(p2)` with
//! orthonormal kets `u_i`, `v_i` (no complex conjugation on `v`). The
//! general decomposition diagonalizes the smaller reduced density matrix and
//! takes `alpha_i = |psi^dag u_i|` rather than the square root of the
//! eigenvalue, which keeps small singular values accurate.
//!
//! Degenerate pairs are returned as produced by the eigensolver; any unitary
//! rotation inside a degenerate pair is an equally valid decomposition.

use std::io::Write;

use faer::complex_native::c64;
use faer::Mat;
use num_complex::Complex64;

use crate::absorb::AbsorptionSpec;
use crate::error::{Error, Result};
use crate::linalg::{from_c64, gram, hermitian_eig_desc, mat_from_row_major, orthonormal_completion, to_c64};
use crate::output::fmt_f64;
use crate::params::SimParams;
use crate::qmap::OneParticleMap;
use crate::state::{OneParticleState, Representation, TwoParticleState};

/// Components with `alpha_i <= RANK_THRESHOLD * alpha_1` are dropped.
pub const RANK_THRESHOLD: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchmidtOptions {
    /// Build the Schmidt kets as well as the singular values.
    pub vectors: bool,
    /// Rows/columns whose squared norm is at most `support_tol * |psi|^2`
    /// are removed before decomposing. Zero removes only exact zeros.
    pub support_tol: f64,
}

impl Default for SchmidtOptions {
    fn default() -> Self {
        SchmidtOptions {
            vectors: true,
            support_tol: 0.0,
        }
    }
}

impl SchmidtOptions {
    pub fn values_only() -> Self {
        SchmidtOptions {
            vectors: false,
            support_tol: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchmidtDecomposition {
    /// Descending, normalized so that `sum alpha_i^2 = 1`.
    pub alphas: Vec<f64>,
    /// Empty unless vectors were requested.
    pub u_vectors: Vec<OneParticleState>,
    pub v_vectors: Vec<OneParticleState>,
    pub rank: usize,
    /// Norm of the decomposed state before normalization.
    pub norm: f64,
}

impl SchmidtDecomposition {
    pub fn entropy(&self) -> f64 {
        entropy_of_alphas(&self.alphas)
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alphas.get(i).copied().unwrap_or(0.0)
    }

    /// `norm * sum alpha_i u_i (x) v_i` on a `rows x cols` grid.
    pub fn reconstruct(&self) -> Result<TwoParticleState> {
        if self.u_vectors.is_empty() {
            return Err(Error::contract("decomposition was computed without vectors"));
        }
        let rows = self.u_vectors[0].len();
        let cols = self.v_vectors[0].len();
        let mut amps = vec![Complex64::new(0.0, 0.0); rows * cols];
        for i in 0..self.rank {
            let a = self.alphas[i] * self.norm;
            let (u, v) = (&self.u_vectors[i], &self.v_vectors[i]);
            for (r, ur) in u.amps.iter().enumerate() {
                let s = ur * a;
                for (z, vc) in amps[r * cols..(r + 1) * cols].iter_mut().zip(&v.amps) {
                    *z += s * vc;
                }
            }
        }
        TwoParticleState::from_amplitudes(rows, cols, amps, Representation::Momentum)
    }

    /// Spectrum as `index,alpha` CSV.
    pub fn write_spectrum_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,alpha")?;
        for (i, a) in self.alphas.iter().enumerate() {
            writeln!(w, "{},{}", i, fmt_f64(*a))?;
        }
        Ok(())
    }
}

/// `S = -sum alpha^2 log2 alpha^2`, with `0 log 0 = 0`.
pub fn entropy_of_alphas(alphas: &[f64]) -> f64 {
    alphas
        .iter()
        .map(|a| a * a)
        .filter(|&w| w > 0.0)
        .map(|w| -w * w.log2())
        .sum::<f64>()
        .max(0.0)
}

/// Entropy of entanglement in bits; the spectrum must be normalized.
pub fn entanglement_entropy(decomp: &SchmidtDecomposition) -> Result<f64> {
    let total: f64 = decomp.alphas.iter().map(|a| a * a).sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::contract(format!(
            "Schmidt spectrum not normalized (sum alpha^2 = {total})"
        )));
    }
    Ok(entropy_of_alphas(&decomp.alphas))
}

fn kept_slots(norms: &[f64], cutoff: f64) -> Vec<usize> {
    norms
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > cutoff)
        .map(|(i, _)| i)
        .collect()
}

fn embed(len: usize, slots: &[usize], values: impl Iterator<Item = Complex64>) -> OneParticleState {
    let mut s = OneParticleState::zeros(len);
    for (&slot, v) in slots.iter().zip(values) {
        s.amps[slot] = v;
    }
    s
}

pub fn schmidt_decompose(state: &TwoParticleState) -> Result<SchmidtDecomposition> {
    schmidt_decompose_with(state, SchmidtOptions::default())
}

pub fn schmidt_decompose_with(
    state: &TwoParticleState,
    opts: SchmidtOptions,
) -> Result<SchmidtDecomposition> {
    state.representation().require(Representation::Momentum)?;
    let (rows, cols) = (state.rows(), state.cols());
    let mut row_norms = vec![0.0; rows];
    let mut col_norms = vec![0.0; cols];
    for i in 0..rows {
        for (j, z) in state.row(i).iter().enumerate() {
            let w = z.norm_sqr();
            row_norms[i] += w;
            col_norms[j] += w;
        }
    }
    let total: f64 = row_norms.iter().sum();
    if total == 0.0 {
        return Err(Error::ZeroNorm);
    }
    if !total.is_finite() {
        return Err(Error::numeric("non-finite state norm"));
    }
    let cutoff = opts.support_tol * total;
    let row_slots = kept_slots(&row_norms, cutoff);
    let col_slots = kept_slots(&col_norms, cutoff);
    let sub = state.select(&row_slots, &col_slots);

    // Work on the orientation whose Gram matrix is smaller.
    let transposed = sub.rows() > sub.cols();
    let m = if transposed {
        let t = sub.transposed();
        mat_from_row_major(t.rows(), t.cols(), t.amplitudes())
    } else {
        mat_from_row_major(sub.rows(), sub.cols(), sub.amplitudes())
    };
    let (mr, mc) = (m.nrows(), m.ncols());
    let rho = gram(m.as_ref());
    let (_, u) = hermitian_eig_desc(rho.as_ref())?;
    // Columns w_i = m^dag u_i.
    let w = m.adjoint() * &u;
    let mut alphas: Vec<f64> = (0..mr).map(|i| w.col(i).norm_l2()).collect();
    let mut order: Vec<usize> = (0..mr).collect();
    order.sort_by(|&a, &b| alphas[b].total_cmp(&alphas[a]));
    alphas = order.iter().map(|&i| alphas[i]).collect();
    let scale = alphas.iter().map(|a| a * a).sum::<f64>().sqrt();
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::EigenNonConvergence);
    }
    alphas.iter_mut().for_each(|a| *a /= scale);
    let lead = alphas[0];
    let rank = alphas.iter().take_while(|&&a| a > RANK_THRESHOLD * lead).count();
    alphas[rank..].iter_mut().for_each(|a| *a = 0.0);

    let mut decomp = SchmidtDecomposition {
        alphas,
        u_vectors: Vec::new(),
        v_vectors: Vec::new(),
        rank,
        norm: total.sqrt(),
    };
    if !opts.vectors {
        return Ok(decomp);
    }

    // Kets of the second factor: conj(w_i)/|w_i| for retained components,
    // orthonormalized and completed.
    let seed = Mat::from_fn(mc, rank + mc, |i, j| {
        if j < rank {
            let col = order[j];
            let a = w.col(col).norm_l2();
            to_c64(from_c64(w.read(i, col)).conj() / a)
        } else if i == j - rank {
            c64::new(1.0, 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    });
    let v = orthonormal_completion(seed.as_ref(), rank);
    let (u_len, u_slots, v_len, v_slots) = if transposed {
        (cols, &col_slots, rows, &row_slots)
    } else {
        (rows, &row_slots, cols, &col_slots)
    };
    let first: Vec<OneParticleState> = order
        .iter()
        .map(|&c| embed(u_len, u_slots, (0..mr).map(|i| from_c64(u.read(i, c)))))
        .collect();
    let second: Vec<OneParticleState> = (0..mr)
        .map(|c| embed(v_len, v_slots, (0..mc).map(|i| from_c64(v.read(i, c)))))
        .collect();
    if transposed {
        decomp.u_vectors = second;
        decomp.v_vectors = first;
    } else {
        decomp.u_vectors = first;
        decomp.v_vectors = second;
    }
    Ok(decomp)
}

/// Eigenvalues (descending) of both reduced density matrices
/// `rho1 = psi psi^dag` and `rho2 = psi^T conj(psi)`.
pub fn reduced_density_eigenvalues(state: &TwoParticleState) -> Result<(Vec<f64>, Vec<f64>)> {
    state.representation().require(Representation::Momentum)?;
    let m = mat_from_row_major(state.rows(), state.cols(), state.amplitudes());
    let rho1 = gram(m.as_ref());
    let t = state.transposed();
    let mt = mat_from_row_major(t.rows(), t.cols(), t.amplitudes());
    let rho2 = gram(mt.as_ref());
    let (a, _) = hermitian_eig_desc(rho1.as_ref())?;
    let (b, _) = hermitian_eig_desc(rho2.as_ref())?;
    Ok((a, b))
}

/// Norms of the exchange-symmetric and antisymmetric parts of a square grid.
pub fn symmetry_split(state: &TwoParticleState) -> Result<(f64, f64)> {
    if !state.is_square() {
        return Err(Error::UnsupportedShape {
            rows: state.rows(),
            cols: state.cols(),
            reason: "exchange symmetry needs a square grid",
        });
    }
    let n = state.rows();
    let a = state.amplitudes();
    let (mut sym, mut asym) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (a[i * n + j], a[j * n + i]);
            sym += ((x + y) * 0.5).norm_sqr();
            asym += ((x - y) * 0.5).norm_sqr();
        }
    }
    debug_assert!((sym + asym - state.norm_sqr()).abs() <= 1e-10 * state.norm_sqr().max(1e-300));
    Ok((sym.sqrt(), asym.sqrt()))
}

/// `|alpha_1 - alpha_2|`.
pub fn degeneracy_gap(decomp: &SchmidtDecomposition) -> Result<f64> {
    if decomp.rank < 2 {
        return Err(Error::contract(format!(
            "degeneracy gap needs rank >= 2, got {}",
            decomp.rank
        )));
    }
    Ok((decomp.alphas[0] - decomp.alphas[1]).abs())
}

/// A state with at most two Schmidt components.
#[derive(Clone, Debug, PartialEq)]
pub struct RankTwoState {
    pub alpha1: f64,
    pub alpha2: f64,
    pub u1: OneParticleState,
    pub u2: OneParticleState,
    pub v1: OneParticleState,
    pub v2: OneParticleState,
}

impl RankTwoState {
    pub fn n(&self) -> usize {
        self.u1.len()
    }

    pub fn entropy(&self) -> f64 {
        entropy_of_alphas(&[self.alpha1, self.alpha2])
    }

    pub fn to_two_particle(&self) -> Result<TwoParticleState> {
        let mut a = TwoParticleState::product(&self.u1, &self.v1)?;
        let b = TwoParticleState::product(&self.u2, &self.v2)?;
        for (x, y) in a.amplitudes_mut().iter_mut().zip(b.amplitudes()) {
            *x = *x * self.alpha1 + y * self.alpha2;
        }
        Ok(a)
    }

    pub fn decomposition(&self) -> SchmidtDecomposition {
        let rank = if self.alpha2 > RANK_THRESHOLD * self.alpha1 { 2 } else { 1 };
        SchmidtDecomposition {
            alphas: vec![self.alpha1, self.alpha2],
            u_vectors: vec![self.u1.clone(), self.u2.clone()],
            v_vectors: vec![self.v1.clone(), self.v2.clone()],
            rank,
            norm: 1.0,
        }
    }
}

/// Per-step diagnostics of the rank-2 propagator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rank2Record {
    /// Squared norm after the step, before renormalization.
    pub norm_sqr: f64,
    /// The second component vanished to working precision.
    pub collapsed: bool,
    /// Triangular Gram-Schmidt factor of the `u` pair.
    pub r_u: [[Complex64; 2]; 2],
}

type C = Complex64;

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Unit vector orthogonal to unit `a`, built from the basis vector where
/// `a` is smallest.
fn complement(a: &[C]) -> Vec<C> {
    let j = a
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .map(|(j, _)| j)
        .unwrap_or(0);
    let mut e = vec![C::new(0.0, 0.0); a.len()];
    e[j] = C::new(1.0, 0.0);
    let c = dot(a, &e);
    for (x, y) in e.iter_mut().zip(a) {
        *x -= c * y;
    }
    let n = norm(&e);
    e.iter_mut().for_each(|x| *x /= n);
    e
}

/// Gram-Schmidt on a pair; returns the orthonormal pair, `R` and whether
/// the second vector was numerically dependent.
fn gram_schmidt(a: &[C], b: &[C]) -> Result<(Vec<C>, Vec<C>, [[C; 2]; 2], bool)> {
    let r11 = norm(a);
    if r11 == 0.0 || !r11.is_finite() {
        return Err(Error::numeric("leading Schmidt vector was fully absorbed"));
    }
    let q1: Vec<C> = a.iter().map(|x| x / r11).collect();
    let r12 = dot(&q1, b);
    let w: Vec<C> = b.iter().zip(&q1).map(|(x, q)| x - r12 * q).collect();
    let r22 = norm(&w);
    let zero = C::new(0.0, 0.0);
    if r22 < 1e-300 {
        let q2 = complement(&q1);
        return Ok((q1, q2, [[C::new(r11, 0.0), r12], [zero, zero]], true));
    }
    let q2: Vec<C> = w.iter().map(|x| x / r22).collect();
    Ok((q1, q2, [[C::new(r11, 0.0), r12], [zero, C::new(r22, 0.0)]], false))
}

/// Leading unit eigenvector and eigenvalue of a 2x2 Hermitian matrix.
fn leading_eigvec(h: [[C; 2]; 2]) -> (f64, [C; 2]) {
    let a = h[0][0].re;
    let d = h[1][1].re;
    let b = h[0][1];
    let half = (a - d) / 2.0;
    let disc = (half * half + b.norm_sqr()).sqrt();
    let lam = (a + d) / 2.0 + disc;
    let c1 = [b, C::new(lam - a, 0.0)];
    let c2 = [C::new(lam - d, 0.0), b.conj()];
    let n1 = (c1[0].norm_sqr() + c1[1].norm_sqr()).sqrt();
    let n2 = (c2[0].norm_sqr() + c2[1].norm_sqr()).sqrt();
    let v = if n1 == 0.0 && n2 == 0.0 {
        [C::new(1.0, 0.0), C::new(0.0, 0.0)]
    } else if n1 >= n2 {
        [c1[0] / n1, c1[1] / n1]
    } else {
        [c2[0] / n2, c2[1] / n2]
    };
    (lam, v)
}

struct Svd2 {
    s1: f64,
    s2: f64,
    x: [[C; 2]; 2],
    y: [[C; 2]; 2],
}

/// SVD `A = X diag(s) Y^dag`; columns of `x`, `y` stored as `x[col][row]`.
fn svd2(a: [[C; 2]; 2]) -> Svd2 {
    let mut h = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            h[i][j] = a[0][i].conj() * a[0][j] + a[1][i].conj() * a[1][j];
        }
    }
    let (lam, y1) = leading_eigvec(h);
    let s1 = lam.max(0.0).sqrt();
    let ay = [a[0][0] * y1[0] + a[0][1] * y1[1], a[1][0] * y1[0] + a[1][1] * y1[1]];
    let x1 = if s1 > 0.0 {
        let nrm = (ay[0].norm_sqr() + ay[1].norm_sqr()).sqrt();
        [ay[0] / nrm, ay[1] / nrm]
    } else {
        [C::new(1.0, 0.0), C::new(0.0, 0.0)]
    };
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let s2 = if s1 > 0.0 { det.norm() / s1 } else { 0.0 };
    let x2 = [-x1[1].conj(), x1[0].conj()];
    let mut y2 = [-y1[1].conj(), y1[0].conj()];
    let ay2 = [a[0][0] * y2[0] + a[0][1] * y2[1], a[1][0] * y2[0] + a[1][1] * y2[1]];
    let c = x2[0].conj() * ay2[0] + x2[1].conj() * ay2[1];
    if c.norm() > 0.0 {
        let ph = c.conj() / c.norm();
        y2 = [y2[0] * ph, y2[1] * ph];
    }
    Svd2 {
        s1,
        s2,
        x: [x1, x2],
        y: [y1, y2],
    }
}

fn combine(q1: &[C], q2: &[C], c: [C; 2]) -> OneParticleState {
    let amps = q1.iter().zip(q2).map(|(a, b)| a * c[0] + b * c[1]).collect();
    OneParticleState::from_amplitudes(amps, Representation::Momentum)
}

/// Propagates rank-2 states with one-particle maps and optional absorption.
#[derive(Clone, Debug)]
pub struct Rank2Propagator {
    map: OneParticleMap,
    spec: AbsorptionSpec,
}

impl Rank2Propagator {
    pub fn new(params: &SimParams, spec: AbsorptionSpec) -> Result<Self> {
        if params.is_interacting() {
            return Err(Error::params("rank-2 propagation needs U = 0"));
        }
        spec.validate(params.n)?;
        Ok(Rank2Propagator {
            map: OneParticleMap::new(params)?,
            spec,
        })
    }

    pub fn step(&mut self, state: &RankTwoState) -> Result<(RankTwoState, Rank2Record)> {
        let n = self.map.n();
        if state.n() != n {
            return Err(Error::contract("rank-2 state size differs from the map"));
        }
        let wu = self.spec.first_window();
        let wv = self.spec.second_window();
        let mut kets = [
            state.u1.clone(),
            state.u2.clone(),
            state.v1.clone(),
            state.v2.clone(),
        ];
        for (i, k) in kets.iter_mut().enumerate() {
            self.map.step(k, if i < 2 { wu } else { wv })?;
        }
        let [u1, u2, v1, v2] = kets;
        let (p1, p2, ru, cu) = gram_schmidt(&u1.amps, &u2.amps)?;
        let (q1, q2, rv, cv) = gram_schmidt(&v1.amps, &v2.amps)?;
        let al = [state.alpha1, state.alpha2];
        // A = R_u diag(alpha) R_v^T
        let mut a = [[C::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                a[i][j] = (0..2).map(|k| ru[i][k] * al[k] * rv[j][k]).sum();
            }
        }
        let norm_sqr: f64 = a.iter().flatten().map(|z| z.norm_sqr()).sum();
        if norm_sqr == 0.0 || !norm_sqr.is_finite() {
            return Err(Error::numeric(format!("rank-2 norm^2 = {norm_sqr}")));
        }
        let svd = svd2(a);
        let nrm = norm_sqr.sqrt();
        let mut alpha1 = svd.s1 / nrm;
        let mut alpha2 = svd.s2 / nrm;
        let collapsed = cu || cv || alpha2 == 0.0;
        if collapsed {
            alpha2 = 0.0;
        }
        let tot = (alpha1 * alpha1 + alpha2 * alpha2).sqrt();
        alpha1 /= tot;
        alpha2 /= tot;
        let next = RankTwoState {
            alpha1,
            alpha2,
            u1: combine(&p1, &p2, svd.x[0]),
            u2: combine(&p1, &p2, svd.x[1]),
            v1: combine(&q1, &q2, [svd.y[0][0].conj(), svd.y[0][1].conj()]),
            v2: combine(&q1, &q2, [svd.y[1][0].conj(), svd.y[1][1].conj()]),
        };
        Ok((
            next,
            Rank2Record {
                norm_sqr,
                collapsed,
                r_u: ru,
            },
        ))
    }
}

/// One rank-2 step built from scratch; prefer [`Rank2Propagator`] in loops.
pub fn rank2_step(
    state: &RankTwoState,
    params: &SimParams,
    spec: AbsorptionSpec,
) -> Result<(RankTwoState, Rank2Record)> {
    Rank2Propagator::new(params, spec)?.step(state)
}
