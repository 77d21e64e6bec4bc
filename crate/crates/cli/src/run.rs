//! Experiment orchestration and output files.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use cepr_core::absorb::{
    evolve_with_absorption, limit_state_rates, resume_with_absorption, AbsorptionMode, EvolutionOutcome,
    FinalState,
};
use cepr_core::classical::{
    classical_recurrence, diffusion_estimate, diffusive_survival, write_diffusion_csv, write_survival_csv,
    ClassicalEnsemble, DiffusiveModel, InitialProfile,
};
use cepr_core::echo::{run_echo_once, sweep_echo, write_profile_csv, EchoOptions, EchoRun, Perturbation};
use cepr_core::husimi::husimi;
use cepr_core::output::fmt_f64;
use cepr_core::presets::{Experiment, SchmidtKet};
use cepr_core::snapshot::{self, AnyCheckpoint, Checkpoint, Rank2Checkpoint};
use cepr_core::{Error, OneParticleState, SchmidtDecomposition};
use rayon::prelude::*;

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const METADATA_FILE: &str = "metadata.txt";

#[derive(Debug)]
pub enum RunError {
    Io(PathBuf, std::io::Error),
    Core(Error),
    Config(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Config(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

/// Ordered `key=value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    pub entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn push_f64(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, fmt_f64(value));
    }

    fn extend(&mut self, kv: Vec<(String, String)>) {
        self.entries.extend(kv);
    }

    /// Flattens a TOML document into dotted keys.
    fn push_toml(&mut self, prefix: &str, value: &toml::Value) {
        match value {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    self.push_toml(&format!("{prefix}.{k}"), v);
                }
            }
            other => self.push(prefix, other.to_string()),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "{k}={v}")?;
        }
        Ok(())
    }
}

struct Out {
    dir: PathBuf,
}

impl Out {
    fn create(&self, name: &str) -> Result<BufWriter<File>, RunError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| RunError::Io(parent.to_path_buf(), e))?;
        }
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| RunError::Io(path, e))
    }

    fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> cepr_core::Result<()>,
    ) -> Result<(), RunError> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush().map_err(|e| RunError::Io(self.dir.join(name), e))
    }
}

/// Runs the experiment and writes every output plus the metadata file.
///
/// On failure the metadata file is still written, with `status=failed`.
pub fn run(cfg: &RunConfig) -> Result<Metadata, RunError> {
    let out = Out {
        dir: cfg.output.dir.clone(),
    };
    fs::create_dir_all(&out.dir).map_err(|e| RunError::Io(out.dir.clone(), e))?;
    let started = Instant::now();
    let mut meta = Metadata::default();
    meta.push("cepr_version", VERSION);
    meta.push("experiment", format!("{:?}", cfg.experiment).to_lowercase());
    meta.push("preset", cfg.preset.as_deref().unwrap_or(""));
    meta.push("seed", cfg.seed);
    meta.push(
        "started_unix",
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    );
    let config_text = cfg.to_toml();
    fs::write(out.dir.join("config.toml"), &config_text).map_err(|e| RunError::Io(out.dir.join("config.toml"), e))?;
    if let Ok(v) = config_text.parse::<toml::Table>() {
        meta.push_toml("config", &toml::Value::Table(v));
    }
    let mut results = Metadata::default();
    let outcome = match cfg.experiment {
        Experiment::Echo => run_echo(cfg, &out, &mut results),
        Experiment::Recurrence => run_recurrence(cfg, &out, &mut results),
        Experiment::Husimi => run_husimi(cfg, &out, &mut results),
        Experiment::Classical => run_classical(cfg, &out, &mut results),
    };
    meta.push("wall_time_s", format!("{:.3}", started.elapsed().as_secs_f64()));
    match &outcome {
        Ok(()) => meta.push("status", "ok"),
        Err(e) => {
            meta.push("status", "failed");
            meta.push("error", e.to_string().replace('\n', " "));
        }
    }
    meta.entries.extend(results.entries);
    let mut w = out.create(METADATA_FILE)?;
    meta.write(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| RunError::Io(out.dir.join(METADATA_FILE), e))?;
    outcome.map(|_| meta)
}

fn label(p: Perturbation, d: f64) -> String {
    match p {
        Perturbation::Interaction => format!("dU{d}"),
        Perturbation::Kick => format!("dk{d}"),
    }
}

fn run_echo(cfg: &RunConfig, out: &Out, meta: &mut Metadata) -> Result<(), RunError> {
    let plan = cfg.echo.as_ref().ok_or_else(|| RunError::Config("echo section required".into()))?;
    let base = plan.params(cfg.params);
    let traces: Vec<(Perturbation, f64)> = plan
        .delta_u
        .iter()
        .map(|&d| (Perturbation::Interaction, d))
        .chain(plan.delta_k.iter().map(|&d| (Perturbation::Kick, d)))
        .collect();
    let opts = EchoOptions {
        profiles: plan.profile,
        ..EchoOptions::default()
    };
    let runs: Vec<EchoRun> = traces
        .par_iter()
        .map(|&(p, d)| {
            let e = match p {
                Perturbation::Interaction => base.with_delta_u(d),
                Perturbation::Kick => base.with_delta_k(d),
            };
            run_echo_once(&e, &cfg.initial, &opts)
        })
        .collect::<cepr_core::Result<_>>()?;
    if !runs.is_empty() {
        out.write_with("echo_S_trace.csv", |w| {
            writeln!(w, "t,perturbation,delta,S")?;
            for (&(p, d), r) in traces.iter().zip(&runs) {
                let kind = if p == Perturbation::Interaction { "U" } else { "k" };
                for (t, s) in r.s_trace.iter().enumerate() {
                    writeln!(w, "{t},{kind},{},{}", fmt_f64(d), fmt_f64(*s))?;
                }
            }
            Ok(())
        })?;
        out.write_with("echo_traces.csv", |w| {
            writeln!(w, "perturbation,delta,M,G")?;
            for (&(p, d), r) in traces.iter().zip(&runs) {
                let kind = if p == Perturbation::Interaction { "U" } else { "k" };
                writeln!(w, "{kind},{},{},{}", fmt_f64(d), fmt_f64(r.m), fmt_f64(r.g))?;
            }
            Ok(())
        })?;
    }
    for (i, (&(p, d), r)) in traces.iter().zip(&runs).enumerate() {
        let l = label(p, d);
        meta.push_f64(format!("trace.{l}.M"), r.m);
        meta.push_f64(format!("trace.{l}.G"), r.g);
        if plan.profile {
            let name = if i == 0 { "profile.csv".to_string() } else { format!("profile_{l}.csv") };
            out.write_with(&name, |w| write_profile_csv(w, &r.profiles, None))?;
        }
        if cfg.output.snapshots {
            out.write_with(&format!("snapshots/echo_{l}_t{}.bin", 2 * plan.t_r), |w| {
                snapshot::write_two_particle(w, &r.final_state)
            })?;
        }
    }
    if let Some(spec) = &plan.sweep {
        let sw = sweep_echo(&base, spec, &cfg.initial, &EchoOptions::default())?;
        out.write_with("echo_G.csv", |w| sw.write_g_csv(w))?;
        out.write_with("echo_M.csv", |w| sw.write_m_csv(w))?;
        out.write_with("echo_fits.csv", |w| sw.write_fits_csv(w))?;
        for f in &sw.fits {
            let l = label(spec.perturbation, f.delta);
            meta.extend(f.gamma.to_key_values(&format!("fit.{l}.Gamma")));
            meta.extend(f.alpha.to_key_values(&format!("fit.{l}.alpha")));
        }
        if let Some(a) = &sw.a {
            meta.extend(a.to_key_values("fit.A"));
        }
        if let Some(b) = &sw.b {
            meta.extend(b.to_key_values("fit.B"));
        }
    }
    Ok(())
}

fn evolve_options(cfg: &RunConfig, out: &Out) -> cepr_core::absorb::EvolveOptions {
    let mut opts = cfg.recurrence.as_ref().unwrap().evolve_options();
    if cfg.output.snapshots {
        opts.checkpoint_dir = Some(out.dir.join("snapshots"));
    }
    opts
}

fn record_outcome(meta: &mut Metadata, prefix: &str, o: &EvolutionOutcome) {
    meta.push(format!("{prefix}steps"), o.steps);
    meta.push(
        format!("{prefix}converged_at"),
        o.converged_at.map(|t| t.to_string()).unwrap_or_default(),
    );
    meta.push(format!("{prefix}truncated"), o.truncated);
    meta.push(format!("{prefix}rank_collapse"), o.rank_collapse);
    meta.push_f64(format!("{prefix}log_P"), o.log_p);
    meta.push_f64(format!("{prefix}stationarity"), o.stationarity);
    let d = &o.final_decomposition;
    meta.push_f64(format!("{prefix}S_final"), d.entropy());
    meta.push_f64(format!("{prefix}alpha1"), d.alpha(0));
    meta.push_f64(format!("{prefix}alpha2"), d.alpha(1));
    meta.push(format!("{prefix}rank"), d.rank);
}

fn run_recurrence(cfg: &RunConfig, out: &Out, meta: &mut Metadata) -> Result<(), RunError> {
    let plan = cfg.recurrence.as_ref().unwrap();
    let o = evolve_with_absorption(&cfg.initial, &cfg.params, &plan.absorption, &plan.stop, &evolve_options(cfg, out))?;
    out.write_with("survival.csv", |w| o.series.write_csv(w))?;
    out.write_with("schmidt_spectrum.csv", |w| o.final_decomposition.write_spectrum_csv(w))?;
    record_outcome(meta, "", &o);
    let window = (o.steps / 2, o.steps);
    match limit_state_rates(&o.series, window) {
        Ok(r) => {
            meta.push("rates.window", format!("{}..{}", window.0, window.1));
            meta.push_f64("rates.gamma1", r.gamma1);
            meta.push_f64("rates.gamma1_err", r.gamma1_err);
            if let Some((g, e)) = r.gap {
                meta.push_f64("rates.gap", g);
                meta.push_f64("rates.gap_err", e);
            }
        }
        Err(e) => meta.push("rates.error", e),
    }
    if plan.absorption.mode != AbsorptionMode::None {
        let l = 2.0 * plan.absorption.half_window as f64;
        let model = DiffusiveModel::new(cfg.params.kick * cfg.params.kick / 4.0, l)?;
        // Rate of sqrt(P) on the classical line.
        let rate = match plan.absorption.mode {
            AbsorptionMode::Both => 1.0 / model.t_th,
            _ => 1.0 / (2.0 * model.t_th),
        };
        meta.push_f64("classical.t_Th", model.t_th);
        meta.push_f64("classical.sqrtP_rate", rate);
    }
    Ok(())
}

fn ket<'a>(d: &'a SchmidtDecomposition, k: SchmidtKet) -> Option<&'a OneParticleState> {
    match k {
        SchmidtKet::U1 => d.u_vectors.first(),
        SchmidtKet::U2 => d.u_vectors.get(1),
        SchmidtKet::V1 => d.v_vectors.first(),
        SchmidtKet::V2 => d.v_vectors.get(1),
    }
}

fn checkpoint_of(o: &EvolutionOutcome) -> AnyCheckpoint {
    match &o.final_state {
        FinalState::Full(s) => AnyCheckpoint::Full(Checkpoint {
            step: o.steps,
            log_p: o.log_p,
            state: s.clone(),
        }),
        FinalState::RankTwo(s) => AnyCheckpoint::RankTwo(Rank2Checkpoint {
            step: o.steps,
            log_p: o.log_p,
            state: s.clone(),
        }),
    }
}

fn run_husimi(cfg: &RunConfig, out: &Out, meta: &mut Metadata) -> Result<(), RunError> {
    let plan = cfg.recurrence.as_ref().unwrap();
    let hplan = cfg.husimi.as_ref().unwrap();
    let opts = evolve_options(cfg, out);
    let mut last: Option<EvolutionOutcome> = None;
    for &t in &hplan.times {
        let stop = cepr_core::StopRule::FixedSteps { steps: t };
        let o = match &last {
            None => evolve_with_absorption(&cfg.initial, &cfg.params, &plan.absorption, &stop, &opts)?,
            Some(prev) => resume_with_absorption(checkpoint_of(prev), &cfg.params, &plan.absorption, &stop, &opts)?,
        };
        record_outcome(meta, &format!("t{t}."), &o);
        for panel in &hplan.panels {
            let name = format!("{:?}", panel.ket).to_lowercase();
            let Some(k) = ket(&o.final_decomposition, panel.ket) else {
                meta.push(format!("t{t}.{name}.missing"), true);
                continue;
            };
            let mut k = k.clone();
            k.normalize()?;
            let h = husimi(&k, &panel.grid, &cfg.params)?;
            out.write_with(&format!("husimi_t{t}_{name}.csv"), |w| h.write_csv(w))?;
            out.write_with(&format!("husimi_t{t}_{name}.pgm"), |w| h.write_pgm(w))?;
            meta.push_f64(format!("t{t}.{name}.max"), h.max());
            meta.push_f64(format!("t{t}.{name}.integral"), h.integral());
        }
        last = Some(o);
    }
    Ok(())
}

fn run_classical(cfg: &RunConfig, out: &Out, meta: &mut Metadata) -> Result<(), RunError> {
    let plan = cfg.classical.as_ref().unwrap();
    let p = &cfg.params;
    let ens = ClassicalEnsemble::uniform(plan.count, p.kick, p.hbar, plan.p_range, cfg.seed);
    let surv = classical_recurrence(&ens, plan.window, plan.steps);
    out.write_with("classical_survival.csv", |w| write_survival_csv(w, &surv))?;
    let closed = ClassicalEnsemble::uniform(plan.count.min(20_000), p.kick, p.hbar, (-0.5, 0.5), cfg.seed ^ 1);
    let d = diffusion_estimate(&closed, plan.diffusion_steps)?;
    out.write_with("classical_msd.csv", |w| write_diffusion_csv(w, &d))?;
    meta.push_f64("classical.D", d.d);
    meta.push_f64("classical.D_err", d.d_err);
    meta.push_f64("classical.D_quasilinear", p.kick * p.kick / 4.0);
    meta.push("classical.D_reliable", d.reliable);
    if let Some((lo, hi)) = plan.window {
        let model = DiffusiveModel::new(d.d, hi - lo)?;
        meta.push_f64("classical.t_Th", model.t_th);
        out.write_with("classical_diffusive.csv", |w| {
            writeln!(w, "t,P")?;
            for &(t, _) in &surv {
                writeln!(w, "{t},{}", fmt_f64(diffusive_survival(&model, t as f64, InitialProfile::Uniform)?))?;
            }
            Ok(())
        })?;
    }
    if let Some(&(t, pr)) = surv.last() {
        meta.push("classical.final_t", t);
        meta.push_f64("classical.final_P", pr);
    }
    Ok(())
}

/// Reads `key=value` lines back.
pub fn read_metadata(path: &Path) -> std::io::Result<Metadata> {
    let text = fs::read_to_string(path)?;
    Ok(Metadata {
        entries: text
            .lines()
            .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect(),
    })
}
