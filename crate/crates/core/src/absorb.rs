//! Evolution with absorbing momentum borders.
//!
//! After every map step, amplitudes outside `-L/2 <= p < L/2` are removed
//! for the absorbed particle(s) and the state is renormalized; the survival
//! probability `P(t)` is the product of the squared norms lost that way.

use std::io::Write;
use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_series, pearson, FitError, FitModel};
use crate::output::{fmt_f64, fmt_opt};
use crate::params::{check_momentum, momentum_index, SimParams};
use crate::qmap::{OneParticleMap, QuantumMap};
use crate::schmidt::{
    schmidt_decompose_with, symmetry_split, Rank2Propagator, RankTwoState, SchmidtDecomposition,
    SchmidtOptions,
};
use crate::snapshot;
use crate::state::{OneParticleState, Representation, TwoParticleState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbsorptionMode {
    None,
    Both,
    SecondOnly,
}

impl std::str::FromStr for AbsorptionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "none" => Ok(AbsorptionMode::None),
            "both" => Ok(AbsorptionMode::Both),
            "second-only" | "second" => Ok(AbsorptionMode::SecondOnly),
            other => Err(Error::params(format!("unknown absorption mode {other:?}"))),
        }
    }
}

/// Keeps momenta `-half <= p < half`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MomentumWindow {
    pub half: i64,
}

impl MomentumWindow {
    #[inline]
    pub fn contains(&self, p: i64) -> bool {
        p >= -self.half && p < self.half
    }

    /// Array slots inside the window for lattice size `n`, in slot order.
    pub fn slots(&self, n: usize) -> Vec<usize> {
        (0..n)
            .filter(|&j| self.contains(crate::params::index_momentum(j, n)))
            .collect()
    }

    /// Zeroes a momentum line outside the window; returns the squared norm removed.
    pub fn project_line(&self, amps: &mut [Complex64]) -> f64 {
        let n = amps.len();
        let h = self.half as usize;
        if h >= n / 2 {
            return 0.0;
        }
        // Kept slots are [0, h) and [n - h, n).
        let mut lost = 0.0;
        for a in &mut amps[h..n - h] {
            lost += a.norm_sqr();
            *a = Complex64::new(0.0, 0.0);
        }
        lost
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsorptionSpec {
    pub mode: AbsorptionMode,
    /// `L/2` in quantum momentum units.
    pub half_window: usize,
}

impl AbsorptionSpec {
    pub fn new(mode: AbsorptionMode, half_window: usize) -> Self {
        AbsorptionSpec { mode, half_window }
    }

    /// Window `L = N/2`.
    pub fn standard(mode: AbsorptionMode, n: usize) -> Self {
        AbsorptionSpec::new(mode, n / 4)
    }

    pub fn none() -> Self {
        AbsorptionSpec::new(AbsorptionMode::None, 0)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.mode != AbsorptionMode::None && (self.half_window == 0 || self.half_window > n / 2) {
            return Err(Error::params(format!(
                "half window {} must lie in (0, N/2 = {}]",
                self.half_window,
                n / 2
            )));
        }
        Ok(())
    }

    pub fn window(&self) -> MomentumWindow {
        MomentumWindow {
            half: self.half_window as i64,
        }
    }

    pub fn first_window(&self) -> Option<MomentumWindow> {
        (self.mode == AbsorptionMode::Both).then(|| self.window())
    }

    pub fn second_window(&self) -> Option<MomentumWindow> {
        (self.mode != AbsorptionMode::None).then(|| self.window())
    }

    /// Slots retained for each particle.
    pub fn support(&self, n: usize) -> (Vec<usize>, Vec<usize>) {
        let all: Vec<usize> = (0..n).collect();
        let w = self.window().slots(n);
        match self.mode {
            AbsorptionMode::None => (all.clone(), all),
            AbsorptionMode::Both => (w.clone(), w),
            AbsorptionMode::SecondOnly => (all, w),
        }
    }
}

/// Projects in place; returns the squared norm removed.
pub fn absorb_in_place(state: &mut TwoParticleState, spec: &AbsorptionSpec) -> Result<f64> {
    state.representation().require(Representation::Momentum)?;
    if spec.mode == AbsorptionMode::None {
        return Ok(0.0);
    }
    spec.validate(state.cols())?;
    let cols = state.cols();
    let rows = state.rows();
    let w1 = spec.first_window();
    let w2 = spec.window();
    let amps = state.amplitudes_mut();
    let mut lost = 0.0;
    for i in 0..rows {
        let row = &mut amps[i * cols..(i + 1) * cols];
        let keep_row = w1.map_or(true, |w| w.contains(crate::params::index_momentum(i, rows)));
        if keep_row {
            lost += w2.project_line(row);
        } else {
            for a in row.iter_mut() {
                lost += a.norm_sqr();
                *a = Complex64::new(0.0, 0.0);
            }
        }
    }
    Ok(lost)
}

/// Returns the projected state and the absorbed fraction of the squared norm.
pub fn apply_absorption(state: &TwoParticleState, spec: &AbsorptionSpec) -> Result<(TwoParticleState, f64)> {
    let before = state.norm_sqr();
    if before == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let mut out = state.clone();
    let lost = absorb_in_place(&mut out, spec)?;
    Ok((out, lost / before))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialStateSpec {
    /// `|p1> (x) |p2>`, momenta in lattice units.
    ProductMomenta { p1: i64, p2: i64 },
    /// `w1 |i1 dp, i2 dp> + w2 |i3 dp, i4 dp>` with `dp = N/128`.
    EntangledFour { indices: [i64; 4], weights: [f64; 2] },
}

impl InitialStateSpec {
    /// Deltas at `(6, 7)` and `(7, 8)` in units of `N/128`.
    pub fn chaotic_pair() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        InitialStateSpec::EntangledFour {
            indices: [6, 7, 7, 8],
            weights: [h, h],
        }
    }

    /// Deltas at `(20, 21)` and `(21, 22)` in units of `N/128`.
    pub fn mixed_pair() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        InitialStateSpec::EntangledFour {
            indices: [20, 21, 21, 22],
            weights: [h, h],
        }
    }

    fn momenta(&self, n: usize) -> Result<([i64; 4], [f64; 2])> {
        match *self {
            InitialStateSpec::ProductMomenta { p1, p2 } => Ok(([p1, p2, p1, p2], [1.0, 0.0])),
            InitialStateSpec::EntangledFour { indices, weights } => {
                if n % 128 != 0 {
                    return Err(Error::params(format!(
                        "N = {n} must be a multiple of 128 for the scaled initial state"
                    )));
                }
                let total = weights[0] * weights[0] + weights[1] * weights[1];
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::params(format!(
                        "initial weights have squared norm {total}, expected 1"
                    )));
                }
                let dp = (n / 128) as i64;
                Ok((indices.map(|i| i * dp), weights))
            }
        }
    }
}

pub fn build_initial(spec: &InitialStateSpec, n: usize) -> Result<TwoParticleState> {
    let (p, w) = spec.momenta(n)?;
    for q in p {
        check_momentum(q, n)?;
    }
    let mut s = TwoParticleState::zeros(n);
    let amps = s.amplitudes_mut();
    amps[momentum_index(p[0], n) * n + momentum_index(p[1], n)] += Complex64::new(w[0], 0.0);
    amps[momentum_index(p[2], n) * n + momentum_index(p[3], n)] += Complex64::new(w[1], 0.0);
    s.normalize()?;
    Ok(s)
}

pub fn build_initial_rank2(spec: &InitialStateSpec, n: usize) -> Result<RankTwoState> {
    let (p, w) = spec.momenta(n)?;
    let ket = |q| OneParticleState::momentum_eigenstate(n, q);
    match spec {
        InitialStateSpec::ProductMomenta { p1, p2 } => {
            let u1 = ket(*p1)?;
            let v1 = ket(*p2)?;
            let u2 = ket(if *p1 == 0 { 1 } else { 0 })?;
            let v2 = ket(if *p2 == 0 { 1 } else { 0 })?;
            Ok(RankTwoState {
                alpha1: 1.0,
                alpha2: 0.0,
                u1,
                u2,
                v1,
                v2,
            })
        }
        InitialStateSpec::EntangledFour { .. } => {
            if p[0] == p[2] || p[1] == p[3] {
                return Err(Error::contract("initial kets are not orthogonal"));
            }
            let phase = |x: f64| Complex64::new(x.signum(), 0.0);
            let mut u1 = ket(p[0])?;
            let mut u2 = ket(p[2])?;
            u1.amps.iter_mut().for_each(|a| *a *= phase(w[0]));
            u2.amps.iter_mut().for_each(|a| *a *= phase(w[1]));
            let (v1, v2) = (ket(p[1])?, ket(p[3])?);
            let (a1, a2) = (w[0].abs(), w[1].abs());
            Ok(if a1 >= a2 {
                RankTwoState { alpha1: a1, alpha2: a2, u1, u2, v1, v2 }
            } else {
                RankTwoState { alpha1: a2, alpha2: a1, u1: u2, u2: u1, v1: v2, v2: v1 }
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StopRule {
    FixedSteps { steps: u64 },
    /// Phase-aligned max-norm change of the absorbed particle's leading
    /// Schmidt ket below `tol`.
    SchmidtVectorConverged { tol: f64, max_steps: u64 },
    /// Entropy change per step below `tol`.
    EntropyConverged { tol: f64, max_steps: u64 },
}

pub const DEFAULT_MAX_STEPS: u64 = 1 << 22;

impl StopRule {
    pub fn vector_default() -> Self {
        StopRule::SchmidtVectorConverged {
            tol: 1e-12,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn entropy_default() -> Self {
        StopRule::EntropyConverged {
            tol: 1e-14,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    fn max_steps(&self) -> u64 {
        match *self {
            StopRule::FixedSteps { steps } => steps,
            StopRule::SchmidtVectorConverged { max_steps, .. } => max_steps,
            StopRule::EntropyConverged { max_steps, .. } => max_steps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Rank-2 propagation when `U = 0` and the initial state allows it.
    Auto,
    Full,
    RankTwo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveOptions {
    pub engine: Engine,
    /// Steps between entropy evaluations of the full engine; `None` picks
    /// 1 for `N <= 512` and 4 above. Powers of two are always evaluated.
    pub entropy_stride: Option<u64>,
    pub record_sym_norm: bool,
    /// Relative row/column norm^2 below which the full engine trims the
    /// support before decomposing.
    pub support_tol: f64,
    /// Checkpoints written at power-of-two steps when set.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            engine: Engine::Auto,
            entropy_stride: None,
            record_sym_norm: true,
            support_tol: 0.0,
            checkpoint_dir: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SurvivalSeries {
    pub times: Vec<u64>,
    /// Natural log of `P(t)`; `P` itself underflows for long runs.
    pub log_p: Vec<f64>,
    pub entropy: Vec<Option<f64>>,
    pub alpha1: Vec<Option<f64>>,
    pub alpha2: Vec<Option<f64>>,
    pub sym_norm: Vec<Option<f64>>,
}

impl SurvivalSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn p(&self) -> Vec<f64> {
        self.log_p.iter().map(|l| l.exp()).collect()
    }

    fn push(&mut self, t: u64, log_p: f64, s: Option<f64>, a: Option<(f64, f64)>, sym: Option<f64>) {
        self.times.push(t);
        self.log_p.push(log_p);
        self.entropy.push(s);
        self.alpha1.push(a.map(|x| x.0));
        self.alpha2.push(a.map(|x| x.1));
        self.sym_norm.push(sym);
    }

    /// CSV with columns `t,P,sqrtP,S,alpha1,alpha2,sym_norm,logP`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,P,sqrtP,S,alpha1,alpha2,sym_norm,logP")?;
        for i in 0..self.len() {
            let lp = self.log_p[i];
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                self.times[i],
                fmt_f64(lp.exp()),
                fmt_f64((lp / 2.0).exp()),
                fmt_opt(self.entropy[i]),
                fmt_opt(self.alpha1[i]),
                fmt_opt(self.alpha2[i]),
                fmt_opt(self.sym_norm[i]),
                fmt_f64(lp)
            )?;
        }
        Ok(())
    }
}

/// Multiplicative survival accumulator that falls back to log space.
#[derive(Clone, Copy, Debug)]
struct Survival {
    linear: f64,
    log: f64,
    in_log: bool,
}

impl Survival {
    fn new(log_p: f64) -> Self {
        let linear = log_p.exp();
        Survival {
            linear,
            log: log_p,
            in_log: linear < 1e-280,
        }
    }

    /// `factor` is clamped to at most one.
    fn multiply(&mut self, factor: f64) {
        let factor = factor.min(1.0);
        if self.in_log {
            self.log += factor.ln();
        } else {
            self.linear *= factor;
            self.log = self.linear.ln();
            if self.linear < 1e-280 {
                self.in_log = true;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum FinalState {
    Full(TwoParticleState),
    RankTwo(RankTwoState),
}

#[derive(Clone, Debug)]
pub struct EvolutionOutcome {
    pub series: SurvivalSeries,
    pub final_decomposition: SchmidtDecomposition,
    pub final_state: FinalState,
    pub steps: u64,
    pub converged_at: Option<u64>,
    /// The step cap was hit before the stop rule was met.
    pub truncated: bool,
    pub rank_collapse: bool,
    /// `|<psi(t+1)|psi(t)>|` for one extra renormalized step from the final state.
    pub stationarity: f64,
    pub log_p: f64,
}

/// Max-norm difference after aligning `old` to the phase of `new` at the
/// component where `new` is largest.
pub fn phase_aligned_change(new: &OneParticleState, old: &OneParticleState) -> f64 {
    let (j, _) = new
        .amps
        .iter()
        .enumerate()
        .fold((0, -1.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
    let (a, b) = (new.amps[j], old.amps[j]);
    let rot = if b.norm() > 0.0 {
        (a / a.norm()) / (b / b.norm())
    } else {
        Complex64::new(1.0, 0.0)
    };
    new.amps
        .iter()
        .zip(&old.amps)
        .map(|(x, y)| (x - y * rot).norm())
        .fold(0.0, f64::max)
}

fn is_power_of_two(t: u64) -> bool {
    t > 0 && t.is_power_of_two()
}

struct Tracker {
    rule: StopRule,
    converged_at: Option<u64>,
    target: u64,
}

impl Tracker {
    fn new(rule: StopRule) -> Self {
        Tracker {
            rule,
            converged_at: None,
            target: rule.max_steps(),
        }
    }

    fn mark(&mut self, t: u64) {
        if self.converged_at.is_none() {
            self.converged_at = Some(t);
            self.target = t.next_power_of_two().min(self.rule.max_steps());
        }
    }

    fn done(&self, t: u64) -> bool {
        t >= self.target
    }
}

/// `sum_ij a_i a_j <x_i|y_j><y_i|x_j>` style exchange overlap for a rank-2 state.
fn rank2_sym_norm(s: &RankTwoState) -> f64 {
    let a = [s.alpha1, s.alpha2];
    let u = [&s.u1, &s.u2];
    let v = [&s.v1, &s.v2];
    let mut tr = Complex64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            tr += a[i] * a[j] * u[i].inner(v[j]) * v[i].inner(u[j]);
        }
    }
    ((1.0 + tr.re) / 2.0).max(0.0).sqrt()
}

fn rank2_overlap(a: &RankTwoState, b: &RankTwoState) -> Complex64 {
    let al = [a.alpha1, a.alpha2];
    let bl = [b.alpha1, b.alpha2];
    let (ua, va) = ([&a.u1, &a.u2], [&a.v1, &a.v2]);
    let (ub, vb) = ([&b.u1, &b.u2], [&b.v1, &b.v2]);
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            s += al[i] * bl[j] * ua[i].inner(ub[j]) * va[i].inner(vb[j]);
        }
    }
    s
}

pub fn evolve_with_absorption(
    initial: &InitialStateSpec,
    params: &SimParams,
    spec: &AbsorptionSpec,
    stop: &StopRule,
    opts: &EvolveOptions,
) -> Result<EvolutionOutcome> {
    params.validate()?;
    spec.validate(params.n)?;
    let use_rank2 = match opts.engine {
        Engine::Full => false,
        Engine::RankTwo => true,
        Engine::Auto => !params.is_interacting() && build_initial_rank2(initial, params.n).is_ok(),
    };
    if use_rank2 {
        let s = build_initial_rank2(initial, params.n)?;
        evolve_rank2(s, 0, 0.0, params, spec, stop, opts)
    } else {
        let s = build_initial(initial, params.n)?;
        evolve_full(s, 0, 0.0, params, spec, stop, opts)
    }
}

/// Continues a run from a checkpoint written by a previous evolution.
pub fn resume_with_absorption(
    checkpoint: snapshot::AnyCheckpoint,
    params: &SimParams,
    spec: &AbsorptionSpec,
    stop: &StopRule,
    opts: &EvolveOptions,
) -> Result<EvolutionOutcome> {
    params.validate()?;
    spec.validate(params.n)?;
    match checkpoint {
        snapshot::AnyCheckpoint::Full(c) => evolve_full(c.state, c.step, c.log_p, params, spec, stop, opts),
        snapshot::AnyCheckpoint::RankTwo(c) => evolve_rank2(c.state, c.step, c.log_p, params, spec, stop, opts),
    }
}

fn write_checkpoint_file(opts: &EvolveOptions, t: u64, f: impl FnOnce(&mut std::fs::File) -> Result<()>) -> Result<()> {
    if let Some(dir) = &opts.checkpoint_dir {
        if is_power_of_two(t) {
            std::fs::create_dir_all(dir)?;
            let mut file = std::fs::File::create(dir.join(format!("state_t{t}.ckpt")))?;
            f(&mut file)?;
        }
    }
    Ok(())
}

fn evolve_rank2(
    mut state: RankTwoState,
    t0: u64,
    log_p0: f64,
    params: &SimParams,
    spec: &AbsorptionSpec,
    stop: &StopRule,
    opts: &EvolveOptions,
) -> Result<EvolutionOutcome> {
    let mut prop = Rank2Propagator::new(params, *spec)?;
    let mut series = SurvivalSeries::default();
    let mut surv = Survival::new(log_p0);
    let sym = |s: &RankTwoState| (opts.record_sym_norm && spec.mode != AbsorptionMode::SecondOnly).then(|| rank2_sym_norm(s));
    series.push(t0, surv.log, Some(state.entropy()), Some((state.alpha1, state.alpha2)), sym(&state));
    let mut tracker = Tracker::new(*stop);
    let mut collapse = false;
    let mut t = t0;
    let mut prev_entropy = state.entropy();
    while !tracker.done(t) {
        let (next, rec) = prop.step(&state)?;
        t += 1;
        collapse |= rec.collapsed;
        surv.multiply(rec.norm_sqr);
        match *stop {
            StopRule::SchmidtVectorConverged { tol, .. } => {
                let (a, b) = if spec.mode == AbsorptionMode::SecondOnly {
                    (&next.v1, &state.v1)
                } else {
                    (&next.u1, &state.u1)
                };
                if phase_aligned_change(a, b) < tol {
                    tracker.mark(t);
                }
            }
            StopRule::EntropyConverged { tol, .. } => {
                if (next.entropy() - prev_entropy).abs() < tol {
                    tracker.mark(t);
                }
            }
            StopRule::FixedSteps { .. } => {}
        }
        state = next;
        prev_entropy = state.entropy();
        series.push(t, surv.log, Some(prev_entropy), Some((state.alpha1, state.alpha2)), sym(&state));
        write_checkpoint_file(opts, t, |f| {
            snapshot::write_rank2_checkpoint(f, &snapshot::Rank2Checkpoint { step: t, log_p: surv.log, state: state.clone() })
        })?;
    }
    let (probe, _) = prop.step(&state)?;
    let stationarity = rank2_overlap(&state, &probe).norm();
    Ok(EvolutionOutcome {
        series,
        final_decomposition: state.decomposition(),
        final_state: FinalState::RankTwo(state),
        steps: t,
        converged_at: tracker.converged_at,
        truncated: !matches!(stop, StopRule::FixedSteps { .. }) && tracker.converged_at.is_none(),
        rank_collapse: collapse,
        stationarity,
        log_p: surv.log,
    })
}

fn decompose_block(
    state: &TwoParticleState,
    spec: &AbsorptionSpec,
    vectors: bool,
    support_tol: f64,
) -> Result<SchmidtDecomposition> {
    let opts = SchmidtOptions { vectors, support_tol };
    if spec.mode == AbsorptionMode::None {
        return schmidt_decompose_with(state, opts);
    }
    let (rows, cols) = spec.support(state.rows());
    let block = state.select(&rows, &cols);
    let d = schmidt_decompose_with(&block, opts)?;
    if !vectors {
        return Ok(d);
    }
    // Embed the block kets back onto the full lattice.
    let n = state.rows();
    let lift = |k: &OneParticleState, slots: &[usize]| {
        let mut s = OneParticleState::zeros(n);
        for (v, &j) in k.amps.iter().zip(slots) {
            s.amps[j] = *v;
        }
        s
    };
    Ok(SchmidtDecomposition {
        u_vectors: d.u_vectors.iter().map(|k| lift(k, &rows)).collect(),
        v_vectors: d.v_vectors.iter().map(|k| lift(k, &cols)).collect(),
        ..d
    })
}

fn evolve_full(
    mut state: TwoParticleState,
    t0: u64,
    log_p0: f64,
    params: &SimParams,
    spec: &AbsorptionSpec,
    stop: &StopRule,
    opts: &EvolveOptions,
) -> Result<EvolutionOutcome> {
    let n = params.n;
    if state.rows() != n || state.cols() != n {
        return Err(Error::contract("state size differs from params.N"));
    }
    let mut map = QuantumMap::new(*params)?;
    let want_vectors = matches!(stop, StopRule::SchmidtVectorConverged { .. });
    let stride = if want_vectors {
        1
    } else {
        opts.entropy_stride.unwrap_or(if n <= 512 { 1 } else { 4 }).max(1)
    };
    let record_sym = opts.record_sym_norm && spec.mode != AbsorptionMode::SecondOnly;
    let mut series = SurvivalSeries::default();
    let mut surv = Survival::new(log_p0);
    let mut d = decompose_block(&state, spec, want_vectors, opts.support_tol)?;
    let sym_of = |s: &TwoParticleState| -> Result<Option<f64>> {
        Ok(if record_sym { Some(symmetry_split(s)?.0) } else { None })
    };
    series.push(t0, surv.log, Some(d.entropy()), Some((d.alpha(0), d.alpha(1))), sym_of(&state)?);
    let mut tracker = Tracker::new(*stop);
    let mut last_eval = (t0, d.entropy());
    let mut t = t0;
    while !tracker.done(t) {
        map.forward(&mut state)?;
        absorb_in_place(&mut state, spec)?;
        let norm_sqr = state.refresh_norm();
        if norm_sqr == 0.0 || !norm_sqr.is_finite() {
            return Err(Error::numeric(format!("survival norm^2 = {norm_sqr} at step {}", t + 1)));
        }
        state.normalize()?;
        surv.multiply(norm_sqr);
        t += 1;
        let evaluate = (t - t0) % stride == 0 || is_power_of_two(t) || tracker.target == t;
        if evaluate {
            let next = decompose_block(&state, spec, want_vectors, opts.support_tol)?;
            let s = next.entropy();
            match *stop {
                StopRule::EntropyConverged { tol, .. } => {
                    if (s - last_eval.1).abs() / (t - last_eval.0) as f64 <= tol {
                        tracker.mark(t);
                    }
                }
                StopRule::SchmidtVectorConverged { tol, .. } => {
                    let (a, b) = if spec.mode == AbsorptionMode::SecondOnly {
                        (&next.v_vectors[0], &d.v_vectors[0])
                    } else {
                        (&next.u_vectors[0], &d.u_vectors[0])
                    };
                    if phase_aligned_change(a, b) < tol {
                        tracker.mark(t);
                    }
                }
                StopRule::FixedSteps { .. } => {}
            }
            last_eval = (t, s);
            series.push(t, surv.log, Some(s), Some((next.alpha(0), next.alpha(1))), sym_of(&state)?);
            d = next;
        } else {
            series.push(t, surv.log, None, None, sym_of(&state)?);
        }
        write_checkpoint_file(opts, t, |f| {
            snapshot::write_checkpoint(f, &snapshot::Checkpoint { step: t, log_p: surv.log, state: state.clone() })
        })?;
    }
    let final_decomposition = decompose_block(&state, spec, true, opts.support_tol)?;
    let mut probe = state.clone();
    map.forward(&mut probe)?;
    absorb_in_place(&mut probe, spec)?;
    probe.normalize()?;
    let stationarity = state.inner(&probe).norm();
    Ok(EvolutionOutcome {
        series,
        final_decomposition,
        final_state: FinalState::Full(state),
        steps: t,
        converged_at: tracker.converged_at,
        truncated: !matches!(stop, StopRule::FixedSteps { .. }) && tracker.converged_at.is_none(),
        rank_collapse: false,
        stationarity,
        log_p: surv.log,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateSource {
    Fit,
    ModeEigenvalue,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayRates {
    /// Rate of `sqrt(P)`, i.e. `P ~ exp(-2 gamma1 t)`.
    pub gamma1: f64,
    pub gamma1_err: f64,
    pub gamma2: Option<f64>,
    /// `gamma2 - gamma1` and its standard error, from the decay of `alpha2`.
    pub gap: Option<(f64, f64)>,
    /// Intercept `ln C` of `ln alpha2 = ln C - gap t`.
    pub gap_log_amplitude: Option<f64>,
    pub t_q: f64,
    pub source: RateSource,
}

fn window_indices(series: &SurvivalSeries, window: (u64, u64)) -> Vec<usize> {
    (0..series.len())
        .filter(|&i| series.times[i] >= window.0 && series.times[i] <= window.1)
        .collect()
}

/// Exponential fits of the survival and (when present) `alpha2` tails.
pub fn limit_state_rates(series: &SurvivalSeries, window: (u64, u64)) -> Result<DecayRates> {
    let idx = window_indices(series, window);
    if idx.len() < 20 {
        return Err(FitError::TooFewPoints { needed: 20, found: idx.len() }.into());
    }
    for w in idx.windows(2) {
        let (a, b) = (series.log_p[w[0]], series.log_p[w[1]]);
        if b > a + 1e-12 * a.abs().max(1.0) {
            return Err(FitError::Quality(format!(
                "log P increases from {a} to {b} at t = {}",
                series.times[w[1]]
            ))
            .into());
        }
    }
    let t: Vec<f64> = idx.iter().map(|&i| series.times[i] as f64).collect();
    let half_log: Vec<f64> = idx.iter().map(|&i| series.log_p[i] / 2.0).collect();
    let f = fit_series(&t, &half_log, FitModel::Linear, None)?;
    let gamma1 = -f.value(0);
    let gamma1_err = f.stderr(0);

    let a2: Vec<(f64, f64)> = idx
        .iter()
        .filter_map(|&i| series.alpha2[i].filter(|&a| a > 0.0).map(|a| (series.times[i] as f64, a.ln())))
        .collect();
    let (gap, gap_log_amplitude) = if a2.len() >= 20 && a2.len() == idx.len() {
        let (x, y): (Vec<f64>, Vec<f64>) = a2.into_iter().unzip();
        let g = fit_series(&x, &y, FitModel::Linear, None)?;
        (Some((-g.value(0), g.stderr(0))), Some(g.value(1)))
    } else {
        (None, None)
    };
    Ok(DecayRates {
        gamma1,
        gamma1_err,
        gamma2: gap.map(|g| gamma1 + g.0),
        gap,
        gap_log_amplitude,
        t_q: 1.0 / gamma1,
        source: RateSource::Fit,
    })
}

/// Entropy predicted from a pure exponential decay of `alpha2`:
/// `S = C^2 e^{-2 g t} (2 (g t - ln C) + 1) / ln 2` to leading order.
pub fn predicted_entropy(rates: &DecayRates, t: f64) -> Option<f64> {
    let (g, _) = rates.gap?;
    let ln_c = rates.gap_log_amplitude?;
    let log_a2 = 2.0 * (ln_c - g * t);
    Some(log_a2.exp() * (1.0 - log_a2) / std::f64::consts::LN_2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyTailCheck {
    pub times: Vec<f64>,
    pub measured: Vec<f64>,
    pub predicted: Vec<f64>,
    pub correlation: f64,
}

/// Compares measured entropies with [`predicted_entropy`] over `window`.
pub fn entropy_tail_check(series: &SurvivalSeries, rates: &DecayRates, window: (u64, u64)) -> Result<EntropyTailCheck> {
    let mut out = EntropyTailCheck {
        times: vec![],
        measured: vec![],
        predicted: vec![],
        correlation: 0.0,
    };
    for i in window_indices(series, window) {
        if let (Some(s), Some(p)) = (series.entropy[i], predicted_entropy(rates, series.times[i] as f64)) {
            out.times.push(series.times[i] as f64);
            out.measured.push(s);
            out.predicted.push(p);
        }
    }
    out.correlation = pearson(&out.measured, &out.predicted)?;
    Ok(out)
}

/// Two slowest one-particle modes of the absorbed map found by subspace iteration.
#[derive(Clone, Debug)]
pub struct ModeIteration {
    pub rates: DecayRates,
    pub modes: [OneParticleState; 2],
}

/// Subspace iteration over `steps` steps; rates average `-ln |R_ii|^2` over
/// the second half.
pub fn leading_mode_rates(params: &SimParams, window: MomentumWindow, steps: u64) -> Result<ModeIteration> {
    if steps < 4 {
        return Err(Error::params("mode iteration needs at least 4 steps"));
    }
    let n = params.n;
    let mut map = OneParticleMap::new(&params.with_interaction(0.0))?;
    let h = window.half.max(2);
    let mut a = OneParticleState::zeros(n);
    let mut b = OneParticleState::zeros(n);
    for p in -h..h {
        let j = momentum_index(p, n);
        let x = p as f64 / h as f64;
        a.amps[j] = Complex64::new(1.0, 0.3 * x);
        b.amps[j] = Complex64::new(x, -0.5);
    }
    let (mut acc1, mut acc2, mut count) = (0.0, 0.0, 0u64);
    for t in 0..steps {
        map.step(&mut a, Some(window))?;
        map.step(&mut b, Some(window))?;
        let r11 = a.normalize()?;
        let c = a.inner(&b);
        b.amps.iter_mut().zip(&a.amps).for_each(|(y, x)| *y -= c * x);
        let r22 = b.normalize()?;
        if t >= steps / 2 {
            acc1 += -2.0 * r11.ln();
            acc2 += -2.0 * r22.ln();
            count += 1;
        }
    }
    let g1 = acc1 / count as f64;
    let g2 = acc2 / count as f64;
    Ok(ModeIteration {
        rates: DecayRates {
            gamma1: g1,
            gamma1_err: 0.0,
            gamma2: Some(g2),
            gap: Some((g2 - g1, 0.0)),
            gap_log_amplitude: None,
            t_q: 1.0 / g1,
            source: RateSource::ModeEigenvalue,
        },
        modes: [a, b],
    })
}
