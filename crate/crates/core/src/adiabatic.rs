//! Comparison of the coupled flow with the adiabatic ansatz
//! `e^{-i∫e(φ_u)du} ψ_{φ_t}` and scaling fits over the coupling `α`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{energy, omega, LPState, Propagator};
use crate::eigensolver::{ground_state_with, pekar_minimize, EigenOptions, GroundStateRecord};
use crate::error::{PolaronError, Result};
use crate::fields::{apply_potential, potential, potential_i_phi, ElectronField, PhononField};
use crate::fit::{loglog_fit, proportional_fit, LinearFit};
use crate::grid::{norm, Field, NormKind, Space, SpectralGrid};

type C = Complex64;

/// Recipe for the initial phonon amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialPhonons {
    /// `φ(k) = -A exp(-w²|k|²/2)`
    Gaussian { amplitude: f64, width: f64 },
    /// `φ(k) = -(4π²|k|)⁻¹`, whose potential is the periodic `-1/|x|` in 3D.
    CoulombTruncated,
    /// Self-consistent Pekar amplitude.
    Pekar,
    /// `(1 + eps)·φ_Pekar`
    PekarPerturbed { eps: f64 },
    /// `e^{i·angle}(1 + eps)·φ_Pekar`
    PekarRotated { eps: f64, angle: f64 },
}

/// Builds the initial amplitude; Pekar variants run the fixed-point solver
/// from a Gaussian of width `L/8` with tolerance `pekar_tol`.
pub fn initial_phonons(grid: &SpectralGrid, spec: &InitialPhonons, pekar_tol: f64) -> Result<Field> {
    let pekar = || -> Result<Field> {
        let w = grid.box_length() / 8.0;
        let psi0 = grid.sample_position(|x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            C::new((-r2 / (2.0 * w * w)).exp(), 0.0)
        });
        Ok(pekar_minimize(&ElectronField::normalized(psi0)?, pekar_tol)?.phi)
    };
    match *spec {
        InitialPhonons::Gaussian { amplitude, width } => Ok(grid.sample_momentum(|k| {
            let k2: f64 = k.iter().map(|v| v * v).sum();
            C::new(-amplitude * (-0.5 * width * width * k2).exp(), 0.0)
        })),
        InitialPhonons::CoulombTruncated => {
            let four_pi2 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
            let mut f = grid.zeros(Space::Momentum);
            f.values_mut()
                .iter_mut()
                .zip(grid.inv_abs_k())
                .for_each(|(v, ik)| *v = C::new(-ik / four_pi2, 0.0));
            Ok(f)
        }
        InitialPhonons::Pekar => pekar(),
        InitialPhonons::PekarPerturbed { eps } => Ok(pekar()?.scaled(C::new(1.0 + eps, 0.0))),
        InitialPhonons::PekarRotated { eps, angle } => {
            Ok(pekar()?.scaled(C::from_polar(1.0 + eps, angle)))
        }
    }
}

/// Integrand used for the accumulated phase `∫ e du`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseIntegrand {
    /// The eigenvalue `e(φ_t)` itself.
    Eigenvalue,
    /// The eigenphase per step of the discrete electron propagator on
    /// `ψ_{φ_t}`; equals `e(φ_t) + O(dt²)` and removes the splitting's
    /// systematic phase drift from the adiabatic error.
    #[default]
    StepEigenphase,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Steps between saved frames; eigensolves happen only at frames.
    pub frame_cadence: usize,
    pub eig_tol: f64,
    /// Frames with a gap below this end the trajectory.
    pub gap_floor: f64,
    pub phase_integrand: PhaseIntegrand,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 1.0,
            frame_cadence: 100,
            eig_tol: 1e-9,
            gap_floor: 1e-3,
            phase_integrand: PhaseIntegrand::default(),
        }
    }
}

/// One saved row of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticFrame {
    pub t: f64,
    pub norm_psi: f64,
    pub energy: f64,
    pub e_phi: f64,
    pub gap: f64,
    pub err2: f64,
    pub omega: f64,
    pub phase_e: f64,
    pub phase_omega: f64,
    pub h1_psi: f64,
    pub l2_phi: f64,
}

/// `‖ψ_t - e^{-i·phase_e} ψ_{φ_t}‖₂²`.
pub fn adiabatic_error(s: &LPState, gs: &GroundStateRecord) -> f64 {
    let rot = C::from_polar(1.0, -s.phase_e);
    let dv = s.grid().cell_volume();
    s.psi
        .psi()
        .values()
        .iter()
        .zip(gs.psi_ground.psi().values())
        .map(|(a, b)| (a - rot * b).norm_sqr())
        .sum::<f64>()
        * dv
}

/// Phase-integrand sample at a frame: value and time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseAnchor {
    pub t: f64,
    pub value: f64,
    pub derivative: f64,
}

/// Steps an LP trajectory and evaluates the adiabatic comparison at frames.
pub struct TrajectoryRunner {
    cfg: TrajectoryConfig,
    prop: Propagator,
    state: LPState,
    anchor: PhaseAnchor,
    steps_done: usize,
    total_steps: usize,
    warm: Option<Vec<Vec<C>>>,
    opts: EigenOptions,
    gap_collapsed: bool,
}

impl TrajectoryRunner {
    /// Starts from `ψ₀ = ψ_{φ₀}` and returns the runner with its first frame.
    pub fn start(phi0: &Field, alpha: f64, cfg: TrajectoryConfig) -> Result<(Self, AdiabaticFrame)> {
        validate(&cfg)?;
        let phi = PhononField::new(phi0.clone(), alpha)?;
        let opts = EigenOptions::with_tol(cfg.eig_tol);
        let v = potential(phi.amp())?;
        let rec = ground_state_with(&v, &opts, None)?;
        let state = LPState::new(rec.psi_ground.clone(), phi)?;
        Self::resume(state, None, 0, cfg)
    }

    /// Continues from a saved state. `anchor` is the phase anchor at the
    /// state's time; `None` recomputes it (only correct at `t = 0`).
    pub fn resume(
        state: LPState,
        anchor: Option<PhaseAnchor>,
        steps_done: usize,
        cfg: TrajectoryConfig,
    ) -> Result<(Self, AdiabaticFrame)> {
        validate(&cfg)?;
        let prop = Propagator::new(state.grid(), cfg.dt, state.alpha())?;
        let total_steps = (cfg.t_final / cfg.dt).round() as usize;
        let opts = EigenOptions::with_tol(cfg.eig_tol);
        let mut runner = Self {
            prop,
            state,
            anchor: PhaseAnchor {
                t: 0.0,
                value: 0.0,
                derivative: 0.0,
            },
            steps_done,
            total_steps,
            warm: None,
            opts,
            gap_collapsed: false,
            cfg,
        };
        let (frame, sample) = runner.evaluate()?;
        runner.anchor = anchor.unwrap_or(sample);
        Ok((runner, frame))
    }

    pub fn state(&self) -> &LPState {
        &self.state
    }

    pub fn anchor(&self) -> PhaseAnchor {
        self.anchor
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn finished(&self) -> bool {
        self.steps_done >= self.total_steps || self.gap_collapsed
    }

    pub fn gap_collapsed(&self) -> bool {
        self.gap_collapsed
    }

    /// Advances to the next frame (or the end) and evaluates it.
    pub fn next_frame(&mut self) -> Result<Option<AdiabaticFrame>> {
        if self.finished() {
            return Ok(None);
        }
        let n = self
            .cfg
            .frame_cadence
            .max(1)
            .min(self.total_steps - self.steps_done);
        for _ in 0..n {
            self.prop.step(&mut self.state)?;
        }
        self.steps_done += n;
        let (mut frame, sample, rec) = self.observe()?;
        // Hermite-corrected trapezoid over the frame interval.
        let h = sample.t - self.anchor.t;
        self.state.phase_e += 0.5 * h * (self.anchor.value + sample.value)
            + h * h / 12.0 * (self.anchor.derivative - sample.derivative);
        self.anchor = sample;
        frame.phase_e = self.state.phase_e;
        frame.err2 = adiabatic_error(&self.state, &rec);
        if frame.gap < self.cfg.gap_floor {
            self.gap_collapsed = true;
        }
        Ok(Some(frame))
    }

    /// Runs to the end, collecting every frame after the current one.
    pub fn run_to_end(&mut self) -> Result<Vec<AdiabaticFrame>> {
        let mut out = Vec::new();
        while let Some(f) = self.next_frame()? {
            out.push(f);
        }
        Ok(out)
    }

    fn evaluate(&mut self) -> Result<(AdiabaticFrame, PhaseAnchor)> {
        let (mut frame, sample, rec) = self.observe()?;
        frame.err2 = adiabatic_error(&self.state, &rec);
        if frame.gap < self.cfg.gap_floor {
            self.gap_collapsed = true;
        }
        Ok((frame, sample))
    }

    /// Eigensolve and observables at the current state; `err2` is left for
    /// the caller once the phase is updated.
    fn observe(&mut self) -> Result<(AdiabaticFrame, PhaseAnchor, GroundStateRecord)> {
        let s = &self.state;
        let v = potential(s.phi.amp())?;
        let rec = ground_state_with(&v, &self.opts, self.warm.as_deref())?;
        self.warm = Some(rec.warm_start().to_vec());
        let alpha = s.alpha();
        let gs = rec.psi_ground.psi();
        let vi = potential_i_phi(&s.phi)?;
        let de = -gs.inner(&apply_potential(&vi, gs)).re / (alpha * alpha);
        let value = match self.cfg.phase_integrand {
            PhaseIntegrand::Eigenvalue => rec.e,
            PhaseIntegrand::StepEigenphase => {
                let mut u = gs.clone();
                self.prop.electron_step(&mut u, &v)?;
                let dt = self.prop.dt();
                // Phase of the one-step overlap relative to e·dt, kept small.
                let rel = gs.inner(&u) * C::from_polar(1.0, rec.e * dt);
                rec.e - rel.arg() / dt
            }
        };
        let frame = AdiabaticFrame {
            t: s.t,
            norm_psi: s.psi.l2(),
            energy: energy(s)?,
            e_phi: rec.e,
            gap: rec.gap,
            err2: 0.0,
            omega: omega(s)?,
            phase_e: s.phase_e,
            phase_omega: s.phase_omega,
            h1_psi: norm(s.psi.psi(), NormKind::H1)?,
            l2_phi: s.phi.l2(),
        };
        let anchor = PhaseAnchor {
            t: s.t,
            value,
            derivative: de,
        };
        Ok((frame, anchor, rec))
    }
}

/// Complete trajectory for one `α`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdiabaticTrajectory {
    pub alpha: f64,
    pub frames: Vec<AdiabaticFrame>,
    pub gap_collapsed: bool,
}

impl AdiabaticTrajectory {
    /// Frame closest in time to `t`.
    pub fn frame_near(&self, t: f64) -> Option<&AdiabaticFrame> {
        self.frames
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}

pub fn run_trajectory(phi0: &Field, alpha: f64, cfg: &TrajectoryConfig) -> Result<AdiabaticTrajectory> {
    let (mut runner, first) = TrajectoryRunner::start(phi0, alpha, cfg.clone())?;
    let mut frames = vec![first];
    frames.extend(runner.run_to_end()?);
    Ok(AdiabaticTrajectory {
        alpha,
        frames,
        gap_collapsed: runner.gap_collapsed(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub trajectory: TrajectoryConfig,
    /// Time of the α fit; defaults to the end of the run.
    pub t_star: Option<f64>,
    /// Window `[t_lo, t_hi]` of the short-time fit.
    pub short_window: (f64, f64),
    /// Coupling used for the short-time fit; defaults to the largest α.
    pub short_alpha: Option<f64>,
    /// Stationary-run error floor. Short-time points below 100× it are
    /// dropped, and an α fit with every error below it is degenerate.
    pub noise_floor: Option<f64>,
}

impl SweepConfig {
    pub fn new(alphas: Vec<f64>, trajectory: TrajectoryConfig) -> Self {
        Self {
            alphas,
            trajectory,
            t_star: None,
            short_window: (0.05, 0.5),
            short_alpha: None,
            noise_floor: None,
        }
    }
}

/// Result of a slope fit that may lack data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FitOutcome {
    Fitted(LinearFit),
    InsufficientData { points: usize },
    /// All errors sit at the numerical floor, so no exponent is meaningful.
    Degenerate,
}

impl FitOutcome {
    pub fn slope(&self) -> Option<f64> {
        match self {
            FitOutcome::Fitted(f) => Some(f.slope),
            _ => None,
        }
    }

    pub fn residual(&self) -> Option<f64> {
        match self {
            FitOutcome::Fitted(f) => Some(f.residual),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftFit {
    /// Least-squares `C` in `drift ≈ C·|t|α⁻²`.
    pub c: f64,
    /// Smallest `C` with `drift ≤ C·|t|α⁻²` at every frame.
    pub envelope: f64,
    pub residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub alphas: Vec<f64>,
    pub t_star: f64,
    pub err2_at_t_star: Vec<f64>,
    pub slope_alpha: FitOutcome,
    pub slope_t_short: FitOutcome,
    pub short_alpha: f64,
    /// `max err²(t)/t` over the short-time window.
    pub short_ratio_max: f64,
    pub gap_drift: Option<DriftFit>,
    pub e_drift: Option<DriftFit>,
    pub trajectories: Vec<AdiabaticTrajectory>,
}

/// Errors at or below this are treated as numerically zero in fits.
pub const DEGENERATE_ERR2: f64 = 1e-14;

pub fn run_sweep(phi0: &Field, cfg: &SweepConfig) -> Result<ScalingReport> {
    let mut alphas = cfg.alphas.clone();
    alphas.sort_by(f64::total_cmp);
    if alphas.is_empty() || alphas[0] < 1.0 {
        return Err(PolaronError::InvalidParameter(
            "sweep needs at least one alpha, all ≥ 1".into(),
        ));
    }
    let trajectories = alphas
        .par_iter()
        .map(|&a| run_trajectory(phi0, a, &cfg.trajectory))
        .collect::<Result<Vec<_>>>()?;
    Ok(scaling_report(trajectories, cfg))
}

/// Fits for an already computed set of trajectories.
pub fn scaling_report(mut trajectories: Vec<AdiabaticTrajectory>, cfg: &SweepConfig) -> ScalingReport {
    trajectories.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let alphas: Vec<f64> = trajectories.iter().map(|t| t.alpha).collect();
    let t_star = cfg.t_star.unwrap_or(cfg.trajectory.t_final);
    let half_frame = 0.5 * cfg.trajectory.dt * cfg.trajectory.frame_cadence.max(1) as f64;
    let err2_at_t_star: Vec<f64> = trajectories
        .iter()
        .map(|tr| match tr.frame_near(t_star) {
            Some(f) if (f.t - t_star).abs() <= half_frame + 1e-12 => f.err2,
            _ => f64::NAN,
        })
        .collect();
    let valid: Vec<(f64, f64)> = alphas
        .iter()
        .zip(&err2_at_t_star)
        .filter(|(_, e)| e.is_finite())
        .map(|(&a, &e)| (a, e))
        .collect();
    let degenerate = cfg.noise_floor.unwrap_or(0.0).max(DEGENERATE_ERR2);
    let slope_alpha = if !valid.is_empty() && valid.iter().all(|p| p.1 <= degenerate) {
        FitOutcome::Degenerate
    } else if valid.len() < 4 {
        FitOutcome::InsufficientData { points: valid.len() }
    } else {
        let (xs, ys): (Vec<f64>, Vec<f64>) = valid.into_iter().unzip();
        match loglog_fit(&xs, &ys) {
            Some(f) if f.points >= 4 => FitOutcome::Fitted(f),
            Some(f) => FitOutcome::InsufficientData { points: f.points },
            None => FitOutcome::InsufficientData { points: 0 },
        }
    };

    let short_alpha = cfg
        .short_alpha
        .unwrap_or_else(|| alphas.last().copied().unwrap_or(f64::NAN));
    let (lo, hi) = cfg.short_window;
    let t_min = lo.max(5.0 * cfg.trajectory.dt);
    let floor = cfg.noise_floor.map(|f| 100.0 * f).unwrap_or(DEGENERATE_ERR2);
    let mut short_ratio_max = 0.0f64;
    let slope_t_short = match trajectories.iter().find(|t| t.alpha == short_alpha) {
        None => FitOutcome::InsufficientData { points: 0 },
        Some(tr) => {
            let window: Vec<&AdiabaticFrame> = tr
                .frames
                .iter()
                .filter(|f| f.t >= t_min - 1e-12 && f.t <= hi + 1e-12)
                .collect();
            for f in &window {
                short_ratio_max = short_ratio_max.max(f.err2 / f.t);
            }
            let (xs, ys): (Vec<f64>, Vec<f64>) = window
                .iter()
                .filter(|f| f.err2 > floor)
                .map(|f| (f.t, f.err2))
                .unzip();
            if !window.is_empty() && xs.is_empty() {
                FitOutcome::Degenerate
            } else if xs.len() < 4 {
                FitOutcome::InsufficientData { points: xs.len() }
            } else {
                loglog_fit(&xs, &ys)
                    .map(FitOutcome::Fitted)
                    .unwrap_or(FitOutcome::InsufficientData { points: xs.len() })
            }
        }
    };

    ScalingReport {
        gap_drift: gap_drift_check(&trajectories),
        e_drift: eigenvalue_drift_check(&trajectories),
        alphas,
        t_star,
        err2_at_t_star,
        slope_alpha,
        slope_t_short,
        short_alpha,
        short_ratio_max,
        trajectories,
    }
}

fn drift_fit(trajectories: &[AdiabaticTrajectory], drift: impl Fn(&AdiabaticFrame, &AdiabaticFrame) -> f64) -> Option<DriftFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for tr in trajectories {
        let first = tr.frames.first()?;
        for f in &tr.frames[1..] {
            xs.push(f.t.abs() / (tr.alpha * tr.alpha));
            ys.push(drift(first, f));
        }
    }
    let (c, residual) = proportional_fit(&xs, &ys)?;
    let envelope = xs
        .iter()
        .zip(&ys)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, y)| y.max(0.0) / x)
        .fold(0.0, f64::max);
    Some(DriftFit {
        c,
        envelope,
        residual,
        points: xs.len(),
    })
}

/// Fits `max(0, Λ(0) - Λ(t))` against `|t|α⁻²` over all trajectories.
pub fn gap_drift_check(trajectories: &[AdiabaticTrajectory]) -> Option<DriftFit> {
    drift_fit(trajectories, |a, b| (a.gap - b.gap).max(0.0))
}

/// Fits `e(φ_t) - e(φ_0)` against `|t|α⁻²` over all trajectories.
pub fn eigenvalue_drift_check(trajectories: &[AdiabaticTrajectory]) -> Option<DriftFit> {
    drift_fit(trajectories, |a, b| b.e_phi - a.e_phi)
}

/// `max(0, Λ(0) - Λ(t))` at the frame nearest `t`.
pub fn gap_drift_at(tr: &AdiabaticTrajectory, t: f64) -> Option<f64> {
    let g0 = tr.frames.first()?.gap;
    Some((g0 - tr.frame_near(t)?.gap).max(0.0))
}

fn validate(cfg: &TrajectoryConfig) -> Result<()> {
    if !(cfg.dt > 0.0) || !(cfg.t_final >= 0.0) || !(cfg.eig_tol > 0.0) {
        return Err(PolaronError::InvalidParameter(format!(
            "trajectory needs dt > 0, t_final ≥ 0 and eig_tol > 0 (got {}, {}, {})",
            cfg.dt, cfg.t_final, cfg.eig_tol
        )));
    }
    Ok(())
}
