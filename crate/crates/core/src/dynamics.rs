//! Strang-split time stepping of the coupled electron/phonon equations
//!
//! ```text
//! i ∂_t ψ = (-Δ + V_φ) ψ
//! i α² ∂_t φ = φ + σ_ψ
//! ```
//!
//! One step is a phonon half step (exact for frozen `σ_ψ`), a full electron
//! step under frozen `V_φ` (kinetic/potential/kinetic), and a second phonon
//! half step with the updated density. Every substep is unitary in `ψ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PolaronError, Result};
use crate::fields::{potential, sigma, ElectronField, PhononField};
use crate::grid::{kinetic_energy, norm, Field, NormKind, Space, SpectralGrid};

type C = Complex64;

#[derive(Debug, Clone)]
pub struct LPState {
    pub psi: ElectronField,
    pub phi: PhononField,
    pub t: f64,
    /// `∫₀ᵗ e(φ_u) du`
    pub phase_e: f64,
    /// `∫₀ᵗ ω(u) du`
    pub phase_omega: f64,
}

impl LPState {
    pub fn new(psi: ElectronField, phi: PhononField) -> Result<Self> {
        if psi.grid() != phi.grid() {
            return Err(PolaronError::InvalidParameter(
                "electron and phonon fields live on different grids".into(),
            ));
        }
        Ok(Self {
            psi,
            phi,
            t: 0.0,
            phase_e: 0.0,
            phase_omega: 0.0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.phi.alpha()
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.psi.grid()
    }
}

/// Exact solution of `iα² ∂_t φ = φ + σ` over `dt` for constant `σ`.
pub fn phonon_exact_rotation(phi: &Field, sigma: &Field, dt: f64, alpha: f64) -> Result<Field> {
    phi.require(Space::Momentum)?;
    sigma.require(Space::Momentum)?;
    let rot = C::from_polar(1.0, -dt / (alpha * alpha));
    let mut out = phi.clone();
    out.values_mut()
        .iter_mut()
        .zip(sigma.values())
        .for_each(|(p, s)| *p = rot * *p + (rot - 1.0) * s);
    Ok(out)
}

/// Precomputed step data for a fixed `(grid, dt, α)`.
pub struct Propagator {
    grid: SpectralGrid,
    dt: f64,
    alpha: f64,
    half_rot: C,
    /// `e^{-i ε(k) dt/2} / N^d`, the normalized kinetic half step.
    kin_half: Vec<C>,
}

impl Propagator {
    pub fn new(grid: &SpectralGrid, dt: f64, alpha: f64) -> Result<Self> {
        if !dt.is_finite() || dt == 0.0 {
            return Err(PolaronError::InvalidParameter(format!(
                "time step must be finite and nonzero, got {dt}"
            )));
        }
        if !(alpha > 0.0) {
            return Err(PolaronError::InvalidParameter(format!(
                "coupling alpha must be positive, got {alpha}"
            )));
        }
        let inv_n = 1.0 / grid.len() as f64;
        Ok(Self {
            grid: grid.clone(),
            dt,
            alpha,
            half_rot: C::from_polar(1.0, -dt / (2.0 * alpha * alpha)),
            kin_half: grid
                .kinetic_symbol()
                .iter()
                .map(|e| C::from_polar(inv_n, -e * dt / 2.0))
                .collect(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn phonon_half(&self, phi: &mut [C], sigma: &[C]) {
        let r = self.half_rot;
        phi.iter_mut()
            .zip(sigma)
            .for_each(|(p, s)| *p = r * *p + (r - 1.0) * s);
    }

    fn kinetic_half(&self, psi: &mut [C]) {
        self.grid.dft_forward(psi);
        psi.iter_mut().zip(&self.kin_half).for_each(|(p, k)| *p *= k);
        self.grid.dft_inverse(psi);
    }

    /// Electron-only step under a frozen real potential.
    pub fn electron_step(&self, psi: &mut Field, v: &Field) -> Result<()> {
        psi.require(Space::Position)?;
        v.require(Space::Position)?;
        let buf = psi.values_mut();
        self.kinetic_half(buf);
        buf.iter_mut()
            .zip(v.values())
            .for_each(|(p, vv)| *p *= C::from_polar(1.0, -vv.re * self.dt));
        self.kinetic_half(buf);
        Ok(())
    }

    /// Advances `state` by one step, including the `ω` trapezoid.
    ///
    /// The `e(φ)` phase is left alone; it needs an eigensolve and is handled
    /// by the caller.
    pub fn step(&self, state: &mut LPState) -> Result<()> {
        if state.alpha() != self.alpha || state.grid() != &self.grid {
            return Err(PolaronError::InvalidParameter(
                "propagator built for a different grid or coupling".into(),
            ));
        }
        let s0 = sigma(state.psi.psi())?;
        let omega0 = omega_from(state.phi.amp(), &s0);
        self.phonon_half(state.phi.amp_mut().values_mut(), s0.values());
        let v = potential(state.phi.amp())?;
        self.electron_step(state.psi.psi_mut(), &v)?;
        let s1 = sigma(state.psi.psi())?;
        self.phonon_half(state.phi.amp_mut().values_mut(), s1.values());
        let omega1 = omega_from(state.phi.amp(), &s1);
        let n2 = state.psi.psi().norm_sqr();
        if !n2.is_finite() || !state.phi.amp().norm_sqr().is_finite() {
            return Err(PolaronError::NonFinite(format!(
                "state after step to t = {}",
                state.t + self.dt
            )));
        }
        state.phase_omega += 0.5 * self.dt * (omega0 + omega1);
        state.t += self.dt;
        Ok(())
    }
}

/// One step of size `dt` from `s`.
pub fn lp_step(s: &LPState, dt: f64) -> Result<LPState> {
    let mut next = s.clone();
    Propagator::new(s.grid(), dt, s.alpha())?.step(&mut next)?;
    Ok(next)
}

fn omega_from(phi: &Field, sigma: &Field) -> f64 {
    -phi.inner(sigma).re
}

/// `ω = α² Im⟨φ, ∂_t φ⟩ + ‖φ‖²`, reduced with the phonon equation to
/// `-Re⟨φ, σ_ψ⟩`.
pub fn omega(s: &LPState) -> Result<f64> {
    Ok(omega_from(s.phi.amp(), &sigma(s.psi.psi())?))
}

/// `ω` from its definition with an externally supplied `∂_t φ`.
pub fn omega_defining(phi: &Field, dphi_dt: &Field, alpha: f64) -> f64 {
    alpha * alpha * phi.inner(dphi_dt).im + phi.norm_sqr()
}

/// `𝓔 = ⟨ψ, -Δψ⟩ + 2 Re⟨σ_ψ, φ⟩ + ‖φ‖²`.
pub fn energy(s: &LPState) -> Result<f64> {
    let psi = s.psi.psi();
    let phi = s.phi.amp();
    let t = kinetic_energy(psi)?;
    let coupling = 2.0 * sigma(psi)?.inner(phi).re;
    Ok(t + coupling + phi.norm_sqr())
}

/// Trapezoid update of both phase integrals over one interval `dt`.
pub fn accumulate_phases(
    s: &mut LPState,
    dt: f64,
    e_start: f64,
    e_end: f64,
    omega_start: f64,
    omega_end: f64,
) {
    s.phase_e += 0.5 * dt * (e_start + e_end);
    s.phase_omega += 0.5 * dt * (omega_start + omega_end);
}

/// Observables saved at a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationSample {
    pub t: f64,
    pub norm_psi: f64,
    pub energy: f64,
    pub h1_psi: f64,
    pub l2_phi: f64,
}

impl ConservationSample {
    pub fn of(s: &LPState) -> Result<Self> {
        Ok(Self {
            t: s.t,
            norm_psi: s.psi.l2(),
            energy: energy(s)?,
            h1_psi: norm(s.psi.psi(), NormKind::H1)?,
            l2_phi: s.phi.l2(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// `max |‖ψ_t‖₂ - 1|`
    pub norm_drift: f64,
    /// `max |𝓔(t) - 𝓔(0)| / |𝓔(0)|`
    pub energy_drift: f64,
    pub max_h1_psi: f64,
    pub max_l2_phi: f64,
    pub initial_h1_psi: f64,
    pub initial_l2_phi: f64,
}

pub fn conservation_report(trajectory: &[ConservationSample]) -> Option<ConservationReport> {
    let first = trajectory.first()?;
    let e0 = first.energy;
    let scale = if e0 != 0.0 { e0.abs() } else { 1.0 };
    let mut r = ConservationReport {
        norm_drift: 0.0,
        energy_drift: 0.0,
        max_h1_psi: 0.0,
        max_l2_phi: 0.0,
        initial_h1_psi: first.h1_psi,
        initial_l2_phi: first.l2_phi,
    };
    for f in trajectory {
        r.norm_drift = r.norm_drift.max((f.norm_psi - 1.0).abs());
        r.energy_drift = r.energy_drift.max((f.energy - e0).abs() / scale);
        r.max_h1_psi = r.max_h1_psi.max(f.h1_psi);
        r.max_l2_phi = r.max_l2_phi.max(f.l2_phi);
    }
    Some(r)
}

/// Evolves to `t_final` and samples the conservation observables every
/// `cadence` steps (and at the end).
pub fn evolve_with_samples(
    state: &mut LPState,
    dt: f64,
    t_final: f64,
    cadence: usize,
) -> Result<Vec<ConservationSample>> {
    let prop = Propagator::new(state.grid(), dt, state.alpha())?;
    let steps = ((t_final - state.t) / dt).round().max(0.0) as usize;
    let cadence = cadence.max(1);
    let mut out = vec![ConservationSample::of(state)?];
    for n in 1..=steps {
        prop.step(state)?;
        if n % cadence == 0 || n == steps {
            out.push(ConservationSample::of(state)?);
        }
    }
    Ok(out)
}
