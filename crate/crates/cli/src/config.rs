//! Run configuration: parsing, preset merging and validation.
//!
//! A config file is TOML (or JSON) with the sections `params`, `initial`,
//! `echo`, `absorption`, `stop`, `evolve`, `husimi`, `classical` and
//! `output`. Every field is optional when a preset supplies it.

use std::fmt;
use std::path::{Path, PathBuf};

use cepr_core::absorb::{AbsorptionMode, AbsorptionSpec, Engine, InitialStateSpec, StopRule, DEFAULT_MAX_STEPS};
use cepr_core::echo::{ReversalMode, SweepSpec};
use cepr_core::husimi::{HusimiGridSpec, ThetaOrigin};
use cepr_core::presets::{
    preset, ClassicalPlan, EchoPlan, Experiment, HusimiPanel, HusimiPlan, Preset, RecurrencePlan, SchmidtKet,
    DEFAULT_SEED,
};
use cepr_core::SimParams;
use serde::{Deserialize, Serialize};

/// Invalid configuration, located by a dotted field path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }

    fn required(path: &str) -> Self {
        ConfigError::new(path, "required")
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{} {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub chaos: Option<f64>,
    #[serde(alias = "T", skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(rename = "U", skip_serializing_if = "Option::is_none")]
    pub interaction: Option<f64>,
    #[serde(rename = "U_r", skip_serializing_if = "Option::is_none")]
    pub range: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEcho {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_r: Option<u64>,
    #[serde(rename = "delta_U", skip_serializing_if = "Option::is_none")]
    pub delta_u: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_k: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reversal: Option<ReversalMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAbsorption {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<AbsorptionMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_window: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopKind {
    FixedSteps,
    SchmidtVectorConverged,
    EntropyConverged,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStop {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<StopKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEvolve {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_stride: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sym_norm: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHusimi {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub panels: Option<Vec<HusimiPanel>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawClassical {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_range: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diffusion_steps: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<bool>,
}

/// A config file as written, before presets and defaults are applied.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<RawParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialStateSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub echo: Option<RawEcho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absorption: Option<RawAbsorption>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<RawStop>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evolve: Option<RawEvolve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub husimi: Option<RawHusimi>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical: Option<RawClassical>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<RawOutput>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputOptions {
    pub dir: PathBuf,
    /// Binary state snapshots at power-of-two steps.
    pub snapshots: bool,
}

/// A fully resolved run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub preset: Option<String>,
    pub seed: u64,
    pub params: SimParams,
    pub initial: InitialStateSpec,
    pub echo: Option<EchoPlan>,
    pub recurrence: Option<RecurrencePlan>,
    pub husimi: Option<HusimiPlan>,
    pub classical: Option<ClassicalPlan>,
    pub output: OutputOptions,
}

/// Parses TOML, or JSON when `json` is set.
pub fn parse_config(text: &str, json: bool) -> Result<RawConfig, ConfigError> {
    if json {
        serde_json::from_str(text).map_err(|e| ConfigError::new("", format!("invalid JSON config: {e}")))
    } else {
        toml::from_str(text).map_err(|e| ConfigError::new("", format!("invalid TOML config: {}", e.message())))
    }
}

/// Reads a config file; `.json` files and text starting with `{` are JSON.
pub fn load_config(path: &Path) -> Result<RawConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    parse_config(&text, json)
}

fn resolve_params(raw: Option<&RawParams>, base: Option<&Preset>, experiment: Experiment) -> Result<SimParams, ConfigError> {
    let empty = RawParams::default();
    let raw = raw.unwrap_or(&empty);
    let b = base.map(|p| p.params);
    let n = raw.n.or(b.map(|p| p.n)).ok_or_else(|| ConfigError::required("params.N"))?;
    let chaos = raw
        .chaos
        .or(b.map(|p| p.chaos))
        .ok_or_else(|| ConfigError::required("params.K"))?;
    let interaction = raw.interaction.or(b.map(|p| p.interaction)).unwrap_or(0.0);
    let range = raw.range.or(b.map(|p| p.range)).unwrap_or(0);
    let hbar = match (raw.hbar, raw.k) {
        (Some(h), Some(k)) => {
            if (h * k - chaos).abs() > 1e-12 * chaos.abs().max(1.0) {
                return Err(ConfigError::new(
                    "params.k",
                    format!("k * hbar = {} differs from K = {chaos}", h * k),
                ));
            }
            h
        }
        (Some(h), None) => h,
        (None, Some(k)) => {
            if k == 0.0 {
                return Err(ConfigError::new("params.k", "must be nonzero"));
            }
            chaos / k
        }
        (None, None) => match b {
            Some(p) if p.n == n && p.chaos == chaos => p.hbar,
            _ if experiment == Experiment::Echo => return Err(ConfigError::required("params.hbar")),
            // Absorbing-border convention k = N/8.
            _ => chaos / (n as f64 / 8.0),
        },
    };
    SimParams::new(n, chaos, hbar, interaction, range).map_err(|e| ConfigError::new("params", e.to_string()))
}

fn resolve_echo(raw: Option<&RawEcho>, base: Option<&EchoPlan>) -> Result<EchoPlan, ConfigError> {
    let empty = RawEcho::default();
    let raw = raw.unwrap_or(&empty);
    let t_r = raw
        .t_r
        .or(base.map(|b| b.t_r))
        .ok_or_else(|| ConfigError::required("echo.t_r"))?;
    if t_r == 0 {
        return Err(ConfigError::new("echo.t_r", "must be at least 1"));
    }
    let sweep = raw.sweep.clone().or(base.and_then(|b| b.sweep.clone()));
    if let Some(s) = &sweep {
        if s.deltas.is_empty() {
            return Err(ConfigError::new("echo.sweep.deltas", "must not be empty"));
        }
    }
    let mut delta_u = raw.delta_u.clone().or(base.map(|b| b.delta_u.clone())).unwrap_or_default();
    let delta_k = raw.delta_k.clone().or(base.map(|b| b.delta_k.clone())).unwrap_or_default();
    if delta_u.is_empty() && delta_k.is_empty() && sweep.is_none() {
        delta_u.push(0.0);
    }
    Ok(EchoPlan {
        t_r,
        delta_u,
        delta_k,
        reversal: raw.reversal.or(base.map(|b| b.reversal)).unwrap_or_default(),
        sweep,
        profile: raw.profile.or(base.map(|b| b.profile)).unwrap_or(false),
    })
}

fn resolve_stop(raw: Option<&RawStop>, base: Option<&StopRule>) -> Result<StopRule, ConfigError> {
    let Some(raw) = raw else {
        return Ok(base.copied().unwrap_or_else(StopRule::vector_default));
    };
    let base_kind = base.map(|b| match b {
        StopRule::FixedSteps { .. } => StopKind::FixedSteps,
        StopRule::SchmidtVectorConverged { .. } => StopKind::SchmidtVectorConverged,
        StopRule::EntropyConverged { .. } => StopKind::EntropyConverged,
    });
    let kind = raw.kind.or(base_kind).ok_or_else(|| ConfigError::required("stop.kind"))?;
    let same = base.filter(|_| base_kind == Some(kind));
    let base_tol = same.and_then(|b| match *b {
        StopRule::SchmidtVectorConverged { tol, .. } | StopRule::EntropyConverged { tol, .. } => Some(tol),
        StopRule::FixedSteps { .. } => None,
    });
    let base_max = same.map(|b| match *b {
        StopRule::FixedSteps { steps } => steps,
        StopRule::SchmidtVectorConverged { max_steps, .. } | StopRule::EntropyConverged { max_steps, .. } => {
            max_steps
        }
    });
    Ok(match kind {
        StopKind::FixedSteps => StopRule::FixedSteps {
            steps: raw.steps.or(base_max).ok_or_else(|| ConfigError::required("stop.steps"))?,
        },
        StopKind::SchmidtVectorConverged => StopRule::SchmidtVectorConverged {
            tol: raw.tol.or(base_tol).unwrap_or(1e-12),
            max_steps: raw.max_steps.or(base_max).unwrap_or(DEFAULT_MAX_STEPS),
        },
        StopKind::EntropyConverged => StopRule::EntropyConverged {
            tol: raw.tol.or(base_tol).unwrap_or(1e-14),
            max_steps: raw.max_steps.or(base_max).unwrap_or(DEFAULT_MAX_STEPS),
        },
    })
}

fn resolve_recurrence(raw: &RawConfig, base: Option<&RecurrencePlan>, params: &SimParams) -> Result<RecurrencePlan, ConfigError> {
    let ra = raw.absorption.clone().unwrap_or_default();
    let mode = ra
        .mode
        .or(base.map(|b| b.absorption.mode))
        .ok_or_else(|| ConfigError::required("absorption.mode"))?;
    // Preset windows are always N/4, so they follow an overridden N.
    let half_window = ra.half_window.unwrap_or(params.n / 4);
    let absorption = AbsorptionSpec::new(mode, half_window);
    absorption
        .validate(params.n)
        .map_err(|e| ConfigError::new("absorption.half_window", e.to_string()))?;
    let stop = resolve_stop(raw.stop.as_ref(), base.map(|b| &b.stop))?;
    let re = raw.evolve.clone().unwrap_or_default();
    let mut plan = base.cloned().unwrap_or_else(|| RecurrencePlan::new(absorption, stop));
    plan.absorption = absorption;
    plan.stop = stop;
    if let Some(e) = re.engine {
        plan.engine = e;
    }
    if let Some(s) = re.entropy_stride {
        if s == 0 {
            return Err(ConfigError::new("evolve.entropy_stride", "must be at least 1"));
        }
        plan.entropy_stride = Some(s);
    }
    if let Some(t) = re.support_tol {
        if !(0.0..1.0).contains(&t) {
            return Err(ConfigError::new("evolve.support_tol", "must lie in [0, 1)"));
        }
        plan.support_tol = t;
    }
    if let Some(s) = re.sym_norm {
        plan.record_sym_norm = s;
    }
    Ok(plan)
}

fn default_panels(params: &SimParams, mode: AbsorptionMode) -> Vec<HusimiPanel> {
    let p_max = params.hbar * (params.n / 4) as f64;
    let origin = if params.chaos == 2.5 { ThetaOrigin::Zero } else { ThetaOrigin::MinusPi };
    let mut out = vec![HusimiPanel {
        ket: SchmidtKet::U1,
        grid: HusimiGridSpec::square(p_max, origin),
    }];
    if mode == AbsorptionMode::SecondOnly {
        out[0].grid = HusimiGridSpec::square(2.0 * p_max, origin);
        out.push(HusimiPanel {
            ket: SchmidtKet::V1,
            grid: HusimiGridSpec::square(p_max, origin),
        });
    } else {
        out.push(HusimiPanel {
            ket: SchmidtKet::U2,
            grid: HusimiGridSpec::square(p_max, origin),
        });
    }
    out
}

fn resolve_husimi(raw: Option<&RawHusimi>, base: Option<&HusimiPlan>, params: &SimParams, mode: AbsorptionMode) -> Result<HusimiPlan, ConfigError> {
    let empty = RawHusimi::default();
    let raw = raw.unwrap_or(&empty);
    let mut times = raw
        .times
        .clone()
        .or(base.map(|b| b.times.clone()))
        .ok_or_else(|| ConfigError::required("husimi.times"))?;
    if times.is_empty() {
        return Err(ConfigError::new("husimi.times", "must not be empty"));
    }
    times.sort_unstable();
    times.dedup();
    let panels = raw
        .panels
        .clone()
        .or(base.map(|b| b.panels.clone()))
        .unwrap_or_else(|| default_panels(params, mode));
    for (i, p) in panels.iter().enumerate() {
        if p.grid.n_theta == 0 || p.grid.n_p == 0 {
            return Err(ConfigError::new(format!("husimi.panels[{i}].grid"), "needs a nonzero size"));
        }
    }
    Ok(HusimiPlan { times, panels })
}

fn resolve_classical(raw: Option<&RawClassical>, base: Option<&ClassicalPlan>, params: &SimParams) -> Result<ClassicalPlan, ConfigError> {
    let empty = RawClassical::default();
    let raw = raw.unwrap_or(&empty);
    let half = (params.n / 4) as f64;
    let plan = ClassicalPlan {
        count: raw.count.or(base.map(|b| b.count)).unwrap_or(100_000),
        steps: raw.steps.or(base.map(|b| b.steps)).unwrap_or(1000),
        p_range: raw.p_range.or(base.map(|b| b.p_range)).unwrap_or((-half, half)),
        window: raw.window.or(base.and_then(|b| b.window)).or(Some((-half, half))),
        diffusion_steps: raw.diffusion_steps.or(base.map(|b| b.diffusion_steps)).unwrap_or(100),
    };
    if plan.count == 0 {
        return Err(ConfigError::new("classical.count", "must be positive"));
    }
    if plan.p_range.0 > plan.p_range.1 {
        return Err(ConfigError::new("classical.p_range", "lower bound exceeds upper bound"));
    }
    Ok(plan)
}

/// Merges `raw` over the named preset (command line first, then the file's
/// `preset` key) and fills defaults.
pub fn resolve(
    raw: &RawConfig,
    command: Experiment,
    preset_name: Option<&str>,
    out_dir: Option<&Path>,
) -> Result<RunConfig, ConfigError> {
    if let Some(e) = raw.experiment {
        if e != command {
            return Err(ConfigError::new(
                "experiment",
                format!("is {e:?} but the command runs {command:?}"),
            ));
        }
    }
    let name = preset_name.map(str::to_string).or(raw.preset.clone());
    let base = match &name {
        Some(n) => Some(preset(n).map_err(|e| ConfigError::new("preset", e.to_string()))?),
        None => None,
    };
    let base = base.as_ref();
    let params = resolve_params(raw.params.as_ref(), base, command)?;
    let initial = raw.initial.clone().or(base.map(|b| b.initial.clone())).unwrap_or(match command {
        Experiment::Echo => InitialStateSpec::ProductMomenta { p1: 0, p2: 1 },
        _ => InitialStateSpec::chaotic_pair(),
    });
    let mut cfg = RunConfig {
        experiment: command,
        preset: name.clone(),
        seed: raw.seed.or(base.map(|b| b.seed)).unwrap_or(DEFAULT_SEED),
        params,
        initial,
        echo: None,
        recurrence: None,
        husimi: None,
        classical: None,
        output: OutputOptions {
            dir: out_dir
                .map(Path::to_path_buf)
                .or(raw.output.as_ref().and_then(|o| o.dir.clone()))
                .unwrap_or_else(|| PathBuf::from("out")),
            snapshots: raw
                .output
                .as_ref()
                .and_then(|o| o.snapshots)
                .unwrap_or(command != Experiment::Echo),
        },
    };
    match command {
        Experiment::Echo => {
            cfg.echo = Some(resolve_echo(raw.echo.as_ref(), base.and_then(|b| b.echo.as_ref()))?);
        }
        Experiment::Recurrence | Experiment::Husimi => {
            let rec = resolve_recurrence(raw, base.and_then(|b| b.recurrence.as_ref()), &cfg.params)?;
            if command == Experiment::Husimi {
                cfg.husimi = Some(resolve_husimi(
                    raw.husimi.as_ref(),
                    base.and_then(|b| b.husimi.as_ref()),
                    &cfg.params,
                    rec.absorption.mode,
                )?);
            }
            cfg.recurrence = Some(rec);
        }
        Experiment::Classical => {
            cfg.classical = Some(resolve_classical(
                raw.classical.as_ref(),
                base.and_then(|b| b.classical.as_ref()),
                &cfg.params,
            )?);
        }
    }
    Ok(cfg)
}

impl RunConfig {
    /// The resolved run written back in input form; re-running it gives the same outputs.
    pub fn to_raw(&self) -> RawConfig {
        let p = &self.params;
        let mut raw = RawConfig {
            experiment: Some(self.experiment),
            preset: self.preset.clone(),
            seed: Some(self.seed),
            params: Some(RawParams {
                n: Some(p.n),
                chaos: Some(p.chaos),
                hbar: Some(p.hbar),
                k: None,
                interaction: Some(p.interaction),
                range: Some(p.range),
            }),
            initial: Some(self.initial.clone()),
            output: Some(RawOutput {
                dir: Some(self.output.dir.clone()),
                snapshots: Some(self.output.snapshots),
            }),
            ..RawConfig::default()
        };
        if let Some(e) = &self.echo {
            raw.echo = Some(RawEcho {
                t_r: Some(e.t_r),
                delta_u: Some(e.delta_u.clone()),
                delta_k: Some(e.delta_k.clone()),
                reversal: Some(e.reversal),
                profile: Some(e.profile),
                sweep: e.sweep.clone(),
            });
        }
        if let Some(r) = &self.recurrence {
            raw.absorption = Some(RawAbsorption {
                mode: Some(r.absorption.mode),
                half_window: Some(r.absorption.half_window),
            });
            raw.stop = Some(match r.stop {
                StopRule::FixedSteps { steps } => RawStop {
                    kind: Some(StopKind::FixedSteps),
                    steps: Some(steps),
                    ..RawStop::default()
                },
                StopRule::SchmidtVectorConverged { tol, max_steps } => RawStop {
                    kind: Some(StopKind::SchmidtVectorConverged),
                    tol: Some(tol),
                    max_steps: Some(max_steps),
                    ..RawStop::default()
                },
                StopRule::EntropyConverged { tol, max_steps } => RawStop {
                    kind: Some(StopKind::EntropyConverged),
                    tol: Some(tol),
                    max_steps: Some(max_steps),
                    ..RawStop::default()
                },
            });
            raw.evolve = Some(RawEvolve {
                engine: Some(r.engine),
                entropy_stride: r.entropy_stride,
                support_tol: Some(r.support_tol),
                sym_norm: Some(r.record_sym_norm),
            });
        }
        if let Some(h) = &self.husimi {
            raw.husimi = Some(RawHusimi {
                times: Some(h.times.clone()),
                panels: Some(h.panels.clone()),
            });
        }
        if let Some(c) = &self.classical {
            raw.classical = Some(RawClassical {
                count: Some(c.count),
                steps: Some(c.steps),
                p_range: Some(c.p_range),
                window: c.window,
                diffusion_steps: Some(c.diffusion_steps),
            });
        }
        raw
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("resolved configs always serialize")
    }
}
