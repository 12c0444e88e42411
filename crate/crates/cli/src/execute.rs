//! Command dispatch and experiment drivers.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use polaron_core::adiabatic::{
    initial_phonons, run_trajectory, scaling_report, AdiabaticFrame, AdiabaticTrajectory, FitOutcome,
    SweepConfig, TrajectoryConfig, TrajectoryRunner,
};
use polaron_core::dynamics::{conservation_report, ConservationSample, LPState, Propagator};
use polaron_core::eigensolver::pekar_minimize;
use polaron_core::fields::{inequality_report, potential, sigma, ElectronField, PhononField};
use polaron_core::fock::{
    bound_checks, build_ccr, coupling_integral_quadrature, comparison_scaling, weyl, BoundOptions,
    FockBasis, FockState, ToyOptions,
};
use polaron_core::grid::{make_grid, Field, SpectralGrid};
use polaron_core::PolaronError;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::config::{Command, ConfigError, RunConfig};
use crate::output::{alpha_tag, OutputDir};

type C = Complex64;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Complete,
    /// Some work items failed; the rest were written and a MANIFEST lists
    /// the failures.
    Partial { failures: Vec<String> },
    /// The command ran but its invariant checks did not all pass.
    ChecksFailed { failed: Vec<String> },
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Complete => EXIT_OK,
            Outcome::Partial { .. } => EXIT_PARTIAL,
            Outcome::ChecksFailed { .. } => EXIT_NUMERICAL,
        }
    }
}

/// Exit status for an error escaping [`execute`].
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

/// Output directory: `--out`, else `output_dir`, else `out/<command>`.
pub fn resolve_output(cfg: &RunConfig, out: Option<&Path>, command: Command) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(command.name()))
}

pub fn execute(cfg: &RunConfig, command: Command, out_dir: &Path) -> Result<Outcome> {
    let mut out = OutputDir::create(out_dir, &cfg.hash())?;
    out.write_json("config.json", cfg)?;
    match command {
        Command::Run => run(cfg, &mut out),
        Command::Sweep => sweep(cfg, &mut out),
        Command::Pekar => pekar(cfg, &mut out),
        Command::Fock => fock(cfg, &mut out),
        Command::Check => check(cfg, &mut out),
    }
}

fn grid_of(cfg: &RunConfig) -> Result<SpectralGrid> {
    let g = cfg
        .grid
        .as_ref()
        .ok_or_else(|| ConfigError {
            errors: vec!["missing required key `grid`".into()],
        })?;
    Ok(make_grid(g.n, g.box_length, g.dims)?)
}

fn trajectory_config(cfg: &RunConfig) -> TrajectoryConfig {
    TrajectoryConfig {
        dt: cfg.dt,
        t_final: cfg.t_final,
        frame_cadence: cfg.frame_cadence,
        eig_tol: cfg.tolerances.eig_tol,
        gap_floor: cfg.gap_floor,
        phase_integrand: cfg.phase_integrand,
    }
}

fn initial_field(cfg: &RunConfig, grid: &SpectralGrid) -> Result<Field> {
    let spec = cfg.phi0.as_ref().ok_or_else(|| ConfigError {
        errors: vec!["missing required key `phi0`".into()],
    })?;
    Ok(initial_phonons(grid, spec, cfg.tolerances.pekar_tol)?)
}

fn required_alpha(cfg: &RunConfig) -> Result<f64> {
    cfg.alpha.ok_or_else(|| {
        ConfigError {
            errors: vec!["missing required key `alpha`".into()],
        }
        .into()
    })
}

fn conservation_of(frames: &[AdiabaticFrame]) -> Vec<ConservationSample> {
    frames
        .iter()
        .map(|f| ConservationSample {
            t: f.t,
            norm_psi: f.norm_psi,
            energy: f.energy,
            h1_psi: f.h1_psi,
            l2_phi: f.l2_phi,
        })
        .collect()
}

fn run(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let grid = grid_of(cfg)?;
    let alpha = required_alpha(cfg)?;
    let tcfg = trajectory_config(cfg);
    let (mut runner, first) = match &cfg.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.state.grid() != &grid || ck.state.alpha() != alpha {
                return Err(ConfigError {
                    errors: vec![format!(
                        "checkpoint {} was written for a different grid or alpha",
                        path.display()
                    )],
                }
                .into());
            }
            TrajectoryRunner::resume(ck.state, Some(ck.anchor), ck.steps_done as usize, tcfg)?
        }
        None => {
            let phi0 = initial_field(cfg, &grid)?;
            TrajectoryRunner::start(&phi0, alpha, tcfg)?
        }
    };
    let hash = cfg.hash_bytes();
    let ck_path = out.path("checkpoint.bin");
    let save = |r: &TrajectoryRunner| -> Result<()> {
        Checkpoint {
            state: r.state().clone(),
            anchor: r.anchor(),
            steps_done: r.steps_done() as u64,
            config_hash: hash,
        }
        .save(&ck_path)
    };
    let mut frames = vec![first];
    let mut failure = None;
    loop {
        match runner.next_frame() {
            Ok(Some(f)) => {
                frames.push(f);
                save(&runner)?;
            }
            Ok(None) => break,
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    save(&runner)?;
    out.write_trajectory("trajectory.csv", &frames)?;
    let report = conservation_report(&conservation_of(&frames));
    out.write_json(
        "summary.json",
        &json!({
            "alpha": alpha,
            "frames": frames.len(),
            "t_end": frames.last().map(|f| f.t),
            "gap_collapsed": runner.gap_collapsed(),
            "conservation": report,
            "final": frames.last(),
        }),
    )?;
    match failure {
        None => Ok(Outcome::Complete),
        Some(e) if frames.len() > 1 => {
            let failures = vec![format!("trajectory stopped at t = {}: {e}", runner.state().t)];
            out.write_manifest(&failures)?;
            Ok(Outcome::Partial { failures })
        }
        Some(e) => Err(e.into()),
    }
}

fn fit_residual(f: &FitOutcome) -> Option<f64> {
    f.residual()
}

#[derive(Serialize)]
struct SweepSummary {
    alphas: Vec<f64>,
    t_star: f64,
    err2_at_t_star: Vec<f64>,
    slope_alpha: Option<f64>,
    slope_alpha_fit: FitOutcome,
    slope_t_short: Option<f64>,
    slope_t_short_fit: FitOutcome,
    short_alpha: f64,
    short_ratio_max: f64,
    gap_drift_c: Option<f64>,
    gap_drift_envelope: Option<f64>,
    e_drift_c: Option<f64>,
    e_drift_envelope: Option<f64>,
    fit_residuals: serde_json::Value,
    gap_collapsed: Vec<f64>,
}

fn sweep(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let grid = grid_of(cfg)?;
    let phi0 = initial_field(cfg, &grid)?;
    let alphas = cfg.alphas.clone().unwrap_or_default();
    let tcfg = trajectory_config(cfg);
    let results: Vec<(f64, polaron_core::Result<AdiabaticTrajectory>)> = alphas
        .par_iter()
        .map(|&a| (a, run_trajectory(&phi0, a, &tcfg)))
        .collect();
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (a, r) in results {
        match r {
            Ok(tr) => {
                out.write_trajectory(&format!("trajectory_alpha_{}.csv", alpha_tag(a)), &tr.frames)?;
                done.push(tr);
            }
            Err(e) => failures.push(format!("alpha = {a}: {e}")),
        }
    }
    if done.is_empty() {
        bail!("every trajectory failed: {}", failures.join("; "));
    }
    let scfg = SweepConfig {
        alphas: alphas.clone(),
        trajectory: tcfg,
        t_star: cfg.sweep.t_star,
        short_window: cfg.sweep.short_window,
        short_alpha: cfg.sweep.short_alpha,
        noise_floor: cfg.sweep.noise_floor,
    };
    let rep = scaling_report(done, &scfg);
    let summary = SweepSummary {
        alphas: rep.alphas.clone(),
        t_star: rep.t_star,
        err2_at_t_star: rep.err2_at_t_star.clone(),
        slope_alpha: rep.slope_alpha.slope(),
        slope_alpha_fit: rep.slope_alpha,
        slope_t_short: rep.slope_t_short.slope(),
        slope_t_short_fit: rep.slope_t_short,
        short_alpha: rep.short_alpha,
        short_ratio_max: rep.short_ratio_max,
        gap_drift_c: rep.gap_drift.map(|d| d.c),
        gap_drift_envelope: rep.gap_drift.map(|d| d.envelope),
        e_drift_c: rep.e_drift.map(|d| d.c),
        e_drift_envelope: rep.e_drift.map(|d| d.envelope),
        fit_residuals: json!({
            "slope_alpha": fit_residual(&rep.slope_alpha),
            "slope_t_short": fit_residual(&rep.slope_t_short),
            "gap_drift": rep.gap_drift.map(|d| d.residual),
            "e_drift": rep.e_drift.map(|d| d.residual),
        }),
        gap_collapsed: rep
            .trajectories
            .iter()
            .filter(|t| t.gap_collapsed)
            .map(|t| t.alpha)
            .collect(),
    };
    let mut doc = serde_json::to_value(&summary)?;
    // Fixed key names for downstream parsers.
    if let Some(map) = doc.as_object_mut() {
        let g = map.remove("gap_drift_c").unwrap_or_default();
        let e = map.remove("e_drift_c").unwrap_or_default();
        map.insert("gap_drift_C".into(), g);
        map.insert("e_drift_C".into(), e);
    }
    out.write_json("summary.json", &doc)?;
    if failures.is_empty() {
        Ok(Outcome::Complete)
    } else {
        out.write_manifest(&failures)?;
        Ok(Outcome::Partial { failures })
    }
}

/// `‖a - e^{iθ} b‖` minimized over the global phase `θ`.
fn phase_aligned_distance(a: &Field, b: &Field) -> f64 {
    let ov = b.inner(a);
    let rot = if ov.norm() > 0.0 { ov / ov.norm() } else { C::new(1.0, 0.0) };
    a.sub(&b.scaled(rot)).l2()
}

fn pekar(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let grid = grid_of(cfg)?;
    let alpha = required_alpha(cfg)?;
    let w = grid.box_length() / 8.0;
    let psi0 = grid.sample_position(|x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        C::new((-r2 / (2.0 * w * w)).exp(), 0.0)
    });
    let tol = cfg.tolerances.pekar_tol;
    let sol = pekar_minimize(&ElectronField::normalized(psi0)?, tol)?;
    out.write_table(
        "pekar_energies.csv",
        &["iteration", "energy"],
        &sol.energies
            .iter()
            .enumerate()
            .map(|(i, e)| vec![(i + 1) as f64, *e])
            .collect::<Vec<_>>(),
    )?;

    let mut state = LPState::new(sol.psi.clone(), sol.phonon(alpha)?)?;
    let prop = Propagator::new(&grid, cfg.dt, alpha)?;
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let mut rows = vec![vec![0.0, 0.0, 0.0]];
    let (mut max_psi, mut max_phi) = (0.0f64, 0.0f64);
    for n in 1..=steps {
        prop.step(&mut state)?;
        if n % cfg.frame_cadence == 0 || n == steps {
            let dpsi = phase_aligned_distance(state.psi.psi(), sol.psi.psi());
            let dphi = state.phi.amp().sub(&sol.phi).l2();
            max_psi = max_psi.max(dpsi);
            max_phi = max_phi.max(dphi);
            rows.push(vec![state.t, dpsi, dphi]);
        }
    }
    out.write_table("stationarity.csv", &["t", "psi_deviation", "phi_deviation"], &rows)?;
    out.write_json(
        "summary.json",
        &json!({
            "alpha": alpha,
            "tol": tol,
            "energy": sol.energy,
            "e": sol.e,
            "gap": sol.gap,
            "iterations": sol.iterations,
            "fixed_point_residual": sol.fixed_point_residual,
            "eigen_residual": sol.eigen_residual,
            "fixed_point_within_tol": sol.fixed_point_residual <= tol,
            "stationarity": {
                "t_final": cfg.t_final,
                "max_psi_deviation": max_psi,
                "max_phi_deviation": max_phi,
            },
        }),
    )?;
    Ok(Outcome::Complete)
}

fn fock(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let f = &cfg.fock;
    let first = f.alphas.first().copied().unwrap_or(2.0);
    let basis = FockBasis::new(f.sites, f.spacing, f.n_max, first)?;
    let topts = ToyOptions {
        lp_dt: f.lp_dt,
        eig_tol: cfg.tolerances.eig_tol.min(1e-11),
        leak_tol: cfg.tolerances.leak_tol,
        krylov_tol: 1e-10,
    };
    let rep = comparison_scaling(&basis, f.amplitude, &f.alphas, f.t, f.series_points, &topts)?;
    out.write_text("comparison.csv", |w| rep.write_csv(w))?;
    out.write_json("comparison.json", &rep)?;
    let app = bound_checks(
        &basis,
        &BoundOptions {
            samples: f.samples,
            seed: cfg.seed,
            eps: f.eps,
            ..BoundOptions::default()
        },
    )?;
    out.write_json("bounds.json", &app)?;
    out.write_text("report.txt", |w| {
        writeln!(w, "{}", rep.summary())?;
        writeln!(
            w,
            "annihilator ratio spread across alpha: {:.3e}",
            app.annihilator_spread
        )?;
        for c in &app.creation {
            writeln!(
                w,
                "creation bound n_max = {}: sampled max {:.6}, supremum {:.6}, skipped {}",
                c.n_max, c.sampled_max, c.supremum, c.skipped
            )?;
        }
        for s in &app.sandwich {
            writeln!(w, "sandwich n_max = {} eps = {}: lowest {:.6}", s.n_max, s.eps, s.lowest)?;
        }
        writeln!(
            w,
            "radial quadrature {:.10} vs {:.10} (relative error {:.3e})",
            app.quadrature.value, app.quadrature.exact, app.quadrature.relative_error
        )
    })?;
    Ok(Outcome::Complete)
}

#[derive(Serialize)]
struct CheckResult {
    name: &'static str,
    value: f64,
    threshold: f64,
    pass: bool,
}

fn check_le(name: &'static str, value: f64, threshold: f64) -> CheckResult {
    CheckResult {
        name,
        value,
        threshold,
        pass: value <= threshold,
    }
}

fn check(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let grid = grid_of(cfg)?;
    let mut checks = Vec::new();

    let sampler = polaron_core::fields::ModeKeyedSampler::new(cfg.seed);
    let phi = sampler.momentum_field(&grid, 0, 0);
    let psi = grid.sample_position(|x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let w = grid.box_length() / 8.0;
        C::new((-r2 / (2.0 * w * w)).exp(), 0.2 * x[0] / w * (-r2 / (2.0 * w * w)).exp())
    });
    let psi = ElectronField::normalized(psi)?;
    let v = potential(&phi)?;
    let lhs = psi.psi().inner(&polaron_core::fields::apply_potential(&v, psi.psi())).re;
    let rhs = 2.0 * sigma(psi.psi())?.inner(&phi).re;
    checks.push(check_le(
        "coupling_identity",
        (lhs - rhs).abs() / rhs.abs().max(1e-300),
        1e-10,
    ));

    let alpha = cfg.alpha.unwrap_or(4.0);
    let mut state = LPState::new(psi, PhononField::new(phi, alpha)?)?;
    let samples = polaron_core::dynamics::evolve_with_samples(&mut state, cfg.dt, 50.0 * cfg.dt, 10)?;
    let cons = conservation_report(&samples).ok_or_else(|| PolaronError::Stalled("no samples".into()))?;
    checks.push(check_le("norm_drift", cons.norm_drift, 1e-9));

    let coarse = inequality_report(cfg.samples, &grid, cfg.seed)?;
    checks.push(check_le("inequality_ratios_finite", if coarse.all_finite() { 0.0 } else { 1.0 }, 0.0));

    let basis = FockBasis::new(4, 0.5, 3, 2.0)?;
    let ladder = build_ccr(&basis)?;
    let mut ccr_err: f64 = 0.0;
    for i in (0..basis.dim()).filter(|&i| basis.below_top(i)) {
        let mut e = vec![C::new(0.0, 0.0); basis.dim()];
        e[i] = C::new(1.0, 0.0);
        let e = FockState::from_amplitudes(e);
        for k in 0..basis.modes() {
            let c = ladder.annihilators[k]
                .apply(&ladder.creators[k].apply(&e))
                .sub(&ladder.creators[k].apply(&ladder.annihilators[k].apply(&e)));
            let expect = e.scaled(C::new(1.0 / (4.0 * basis.dk()), 0.0));
            ccr_err = ccr_err.max(c.sub(&expect).norm());
        }
    }
    checks.push(check_le("ccr_below_top_shell", ccr_err, 1e-12));
    let f: Vec<C> = (0..basis.modes()).map(|q| C::new(0.1 * (q as f64 + 1.0), -0.05)).collect();
    let neg: Vec<C> = f.iter().map(|v| -v).collect();
    let w = weyl(&basis, &f)?;
    let wn = weyl(&basis, &neg)?;
    let probe = FockState::with_vacuum(&basis, &vec![C::new(0.5, 0.0); basis.sites()]);
    let back = w.operator.apply(&wn.operator.apply(&probe));
    checks.push(check_le("weyl_inverse", back.sub(&probe).norm(), 1e-10));
    checks.push(check_le(
        "radial_quadrature",
        coupling_integral_quadrature(400).relative_error,
        1e-2,
    ));

    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.to_string()).collect();
    out.write_json(
        "check.json",
        &json!({ "checks": checks, "all_pass": failed.is_empty(), "conservation": cons }),
    )?;
    if failed.is_empty() {
        Ok(Outcome::Complete)
    } else {
        Ok(Outcome::ChecksFailed { failed })
    }
}

/// Parses, configures the pool and runs `command`; returns the exit status.
pub fn main_with(command: Command, config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(Outcome, PathBuf)> {
    let parsed = crate::config::parse_config(config, command)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let mut cfg = parsed.config;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = resolve_output(&cfg, out, command);
    let outcome = execute(&cfg, command, &dir).with_context(|| format!("{} failed", command.name()))?;
    Ok((outcome, dir))
}
