//! Named parameter sets for the standard experiments.
//!
//! Names: `fig1` (`-left`, `-right`), `fig3-5` (`-left` for `U = 0`,
//! `-right` for `U = 2`), the absorbing-border families `fig6-11`,
//! `fig12-17`, `fig18-20` and their single-figure aliases (`fig6` ..
//! `fig20`) with optional `-left`/`-right` and `-N<size>` suffixes, and
//! the classical ensembles `classical-k7`, `classical-k2.5`.
//!
//! For the absorbing families `-right` selects `U = 2`, `U_r = 1`. The
//! single figures `fig8`, `fig9`, `fig14`, `fig15` and `fig20` are
//! interacting on both sides; `fig7`, `fig13` and `fig19` never are.

use serde::{Deserialize, Serialize};

use crate::absorb::{AbsorptionMode, AbsorptionSpec, Engine, EvolveOptions, InitialStateSpec, StopRule};
use crate::echo::{EchoParams, Perturbation, ReversalMode, SweepSpec};
use crate::error::{Error, Result};
use crate::husimi::{HusimiGridSpec, ThetaOrigin};
use crate::params::SimParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Echo,
    Recurrence,
    Husimi,
    Classical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoPlan {
    pub t_r: u64,
    /// One full `S(t)` trace per backward interaction shift.
    #[serde(default)]
    pub delta_u: Vec<f64>,
    /// One full `S(t)` trace per backward kick shift.
    #[serde(default)]
    pub delta_k: Vec<f64>,
    #[serde(default)]
    pub reversal: ReversalMode,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Write `w(p1, t)` for the traces.
    #[serde(default)]
    pub profile: bool,
}

impl EchoPlan {
    pub fn params(&self, base: SimParams) -> EchoParams {
        EchoParams::new(base, self.t_r).with_reversal(self.reversal)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrencePlan {
    pub absorption: AbsorptionSpec,
    pub stop: StopRule,
    pub engine: Engine,
    #[serde(default)]
    pub entropy_stride: Option<u64>,
    /// Support trimming of the full engine's Schmidt decompositions.
    #[serde(default)]
    pub support_tol: f64,
    #[serde(default = "yes")]
    pub record_sym_norm: bool,
}

fn yes() -> bool {
    true
}

impl RecurrencePlan {
    pub fn new(absorption: AbsorptionSpec, stop: StopRule) -> Self {
        RecurrencePlan {
            absorption,
            stop,
            engine: Engine::Auto,
            entropy_stride: None,
            support_tol: 0.0,
            record_sym_norm: true,
        }
    }

    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            engine: self.engine,
            entropy_stride: self.entropy_stride,
            record_sym_norm: self.record_sym_norm,
            support_tol: self.support_tol,
            checkpoint_dir: None,
        }
    }
}

/// Which Schmidt kets a Husimi run images.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchmidtKet {
    U1,
    U2,
    V1,
    V2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HusimiPanel {
    pub ket: SchmidtKet,
    pub grid: HusimiGridSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HusimiPlan {
    /// Evolution times at which the kets are imaged.
    pub times: Vec<u64>,
    pub panels: Vec<HusimiPanel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalPlan {
    pub count: usize,
    pub steps: usize,
    /// Initial momenta uniform in this range (quantum units).
    pub p_range: (f64, f64),
    /// Escape window; `None` for a closed system.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    pub diffusion_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub experiment: Experiment,
    pub params: SimParams,
    pub initial: InitialStateSpec,
    pub seed: u64,
    #[serde(default)]
    pub echo: Option<EchoPlan>,
    #[serde(default)]
    pub recurrence: Option<RecurrencePlan>,
    #[serde(default)]
    pub husimi: Option<HusimiPlan>,
    #[serde(default)]
    pub classical: Option<ClassicalPlan>,
}

impl Preset {
    /// Last iteration of a recurrence or Husimi run.
    pub fn t_max(&self) -> Option<u64> {
        let r = self.recurrence.as_ref()?;
        Some(match r.stop {
            StopRule::FixedSteps { steps } => steps,
            StopRule::SchmidtVectorConverged { max_steps, .. } => max_steps,
            StopRule::EntropyConverged { max_steps, .. } => max_steps,
        })
    }
}

pub const DEFAULT_SEED: u64 = 20_240_601;

const FIG3_DELTAS: [f64; 6] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];

fn echo_base(u: f64) -> Result<SimParams> {
    SimParams::new(1024, 5.0, 0.625, u, 0)
}

fn blank(name: &str, experiment: Experiment, params: SimParams, initial: InitialStateSpec) -> Preset {
    Preset {
        name: name.to_string(),
        experiment,
        params,
        initial,
        seed: DEFAULT_SEED,
        echo: None,
        recurrence: None,
        husimi: None,
        classical: None,
    }
}

fn fig1(name: &str, right: bool) -> Result<Preset> {
    let mut p = blank(
        name,
        Experiment::Echo,
        echo_base(2.0)?,
        InitialStateSpec::ProductMomenta { p1: 0, p2: 1 },
    );
    p.echo = Some(EchoPlan {
        t_r: 50,
        delta_u: if right { vec![] } else { vec![0.0, 0.3, 0.5] },
        delta_k: if right { vec![0.0, 0.03, 0.05] } else { vec![] },
        reversal: ReversalMode::Adjoint,
        sweep: None,
        profile: !right,
    });
    Ok(p)
}

fn fig3_5(name: &str, right: bool) -> Result<Preset> {
    let mut p = blank(
        name,
        Experiment::Echo,
        echo_base(if right { 2.0 } else { 0.0 })?,
        InitialStateSpec::ProductMomenta { p1: 0, p2: 1 },
    );
    p.echo = Some(EchoPlan {
        t_r: 50,
        delta_u: vec![],
        delta_k: vec![],
        reversal: ReversalMode::Adjoint,
        sweep: Some(SweepSpec {
            perturbation: Perturbation::Interaction,
            deltas: FIG3_DELTAS.to_vec(),
            t_r_max: None,
        }),
        profile: false,
    });
    Ok(p)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Family {
    Both,
    SecondOnly,
    Mixed,
}

struct Parsed<'a> {
    stem: &'a str,
    right: bool,
    n: Option<usize>,
}

fn parse_suffixes(name: &str) -> Result<Parsed<'_>> {
    let mut stem = name;
    let mut n = None;
    if let Some(pos) = stem.rfind("-N") {
        let digits = &stem[pos + 2..];
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            n = Some(digits.parse().map_err(|_| unknown(name))?);
            stem = &stem[..pos];
        }
    }
    let mut right = false;
    if let Some(s) = stem.strip_suffix("-right") {
        right = true;
        stem = s;
    } else if let Some(s) = stem.strip_suffix("-left") {
        stem = s;
    }
    Ok(Parsed { stem, right, n })
}

fn unknown(name: &str) -> Error {
    Error::params(format!("unknown preset '{name}'"))
}

fn absorbing(name: &str, family: Family, figure: &str, right: bool, n: Option<usize>) -> Result<Preset> {
    let large = matches!(figure, "fig11" | "fig17");
    let n = n.unwrap_or(if large { 65536 } else { 1024 });
    if large && right {
        return Err(unknown(name));
    }
    let (chaos, mode, initial) = match family {
        Family::Both => (7.0, AbsorptionMode::Both, InitialStateSpec::chaotic_pair()),
        Family::SecondOnly => (7.0, AbsorptionMode::SecondOnly, InitialStateSpec::chaotic_pair()),
        Family::Mixed => (2.5, AbsorptionMode::SecondOnly, InitialStateSpec::mixed_pair()),
    };
    let interacting = match figure {
        "fig8" | "fig9" | "fig14" | "fig15" | "fig20" => true,
        "fig7" | "fig13" | "fig19" => false,
        _ => right,
    };
    let (u, range) = if interacting { (2.0, 1) } else { (0.0, 0) };
    let params = SimParams::recurrence(n, chaos, u, range)?;
    let t_max: u64 = match (family, interacting) {
        (Family::Both, false) | (Family::SecondOnly, false) => 1 << 14,
        (Family::Both, true) => 1 << 12,
        (Family::SecondOnly, true) => 1 << 17,
        (Family::Mixed, _) if n == 128 => 1 << 22,
        (Family::Mixed, _) => 1 << 18,
    };
    let husimi_fig = matches!(figure, "fig10" | "fig11" | "fig16" | "fig17");
    let mut p = blank(
        name,
        if husimi_fig { Experiment::Husimi } else { Experiment::Recurrence },
        params,
        initial,
    );
    p.recurrence = Some(RecurrencePlan::new(
        AbsorptionSpec::standard(mode, n),
        StopRule::FixedSteps { steps: t_max },
    ));
    if husimi_fig {
        let p_max = params.hbar * (n / 4) as f64;
        let origin = if chaos == 7.0 { ThetaOrigin::MinusPi } else { ThetaOrigin::Zero };
        let panels = match mode {
            AbsorptionMode::SecondOnly => vec![
                HusimiPanel {
                    ket: SchmidtKet::U1,
                    grid: HusimiGridSpec::square(2.0 * p_max, origin),
                },
                HusimiPanel {
                    ket: SchmidtKet::V1,
                    grid: HusimiGridSpec::square(p_max, origin),
                },
            ],
            _ => vec![
                HusimiPanel {
                    ket: SchmidtKet::U1,
                    grid: HusimiGridSpec::square(p_max, origin),
                },
                HusimiPanel {
                    ket: SchmidtKet::U2,
                    grid: HusimiGridSpec::square(p_max, origin),
                },
            ],
        };
        p.husimi = Some(HusimiPlan {
            times: if large { vec![t_max] } else { vec![1, 4, t_max] },
            panels,
        });
    }
    Ok(p)
}

fn classical(name: &str, chaos: f64, n: Option<usize>) -> Result<Preset> {
    let n = n.unwrap_or(1024);
    let params = SimParams::recurrence(n, chaos, 0.0, 0)?;
    let half = (n / 4) as f64;
    let (initial, p_range) = if chaos == 7.0 {
        (InitialStateSpec::chaotic_pair(), (-half, half))
    } else {
        let dp = (n / 128) as f64;
        (InitialStateSpec::mixed_pair(), (20.0 * dp, 22.0 * dp))
    };
    let mut p = blank(name, Experiment::Classical, params, initial);
    p.classical = Some(ClassicalPlan {
        count: 100_000,
        steps: if chaos == 7.0 { 200 } else { 10_000 },
        p_range,
        window: Some((-half, half)),
        diffusion_steps: 100,
    });
    Ok(p)
}

/// Resolves a preset name.
pub fn preset(name: &str) -> Result<Preset> {
    let parsed = parse_suffixes(name)?;
    let stem = parsed.stem;
    let (right, n) = (parsed.right, parsed.n);
    match stem {
        "fig1" | "fig2" if n.is_none() => fig1(name, right),
        "fig3-5" | "fig3" | "fig4" | "fig5" if n.is_none() => fig3_5(name, right),
        "fig6-11" | "fig6" | "fig7" | "fig8" | "fig9" | "fig10" | "fig11" => {
            absorbing(name, Family::Both, stem, right, n)
        }
        "fig12-17" | "fig12" | "fig13" | "fig14" | "fig15" | "fig16" | "fig17" => {
            absorbing(name, Family::SecondOnly, stem, right, n)
        }
        "fig18-20" | "fig18" | "fig19" | "fig20" => absorbing(name, Family::Mixed, stem, right, n),
        "classical-k7" if !right => classical(name, 7.0, n),
        "classical-k2.5" if !right => classical(name, 2.5, n),
        _ => Err(unknown(name)),
    }
}

/// Family names accepted by [`preset`], without suffixes.
pub const PRESET_NAMES: &[&str] = &[
    "fig1", "fig3-5", "fig6-11", "fig12-17", "fig18-20", "classical-k7", "classical-k2.5",
];
