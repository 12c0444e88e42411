//! Quantum–classical comparison on the ring and numeric checks of the
//! operator bounds behind it.
//!
//! The comparison is `‖e^{-iHt} ψ₀⊗W(α²φ₀)Ω - e^{-i∫ω} ψ_t⊗W(α²φ_t)Ω‖`
//! with `(ψ_t, φ_t)` from the classical equations on the matching
//! nearest-neighbour grid. The underlying estimate is a 3D statement; on the
//! ring only its α-structure is tested, which every report states.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::krylov::{lowest_eigen, KrylovOptions};
use super::{
    evolve_with, froehlich_hamiltonian, pekar_product_checked, ring_laplacian, site_amplitudes,
    FockBasis, FockOperator, FockState, LEAK_TOL,
};
use crate::dynamics::{LPState, Propagator};
use crate::eigensolver::ground_state;
use crate::error::{PolaronError, Result};
use crate::fields::{potential, ElectronField, PhononField};
use crate::fit::{loglog_fit, LinearFit};
use crate::grid::{Field, SpectralGrid};

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

/// Label attached to every ring report.
pub const RING_CAVEAT: &str = "1D ring toy model: the estimate is proved in 3D with |k|^-1 coupling; \
this run checks its alpha-scaling structure only, not its hypotheses or constants";

/// `φ₀(k) = -A |k|⁻¹ e^{-(k a)²/2}` on the ring grid, zero at `k = 0`.
pub fn toy_phonons(grid: &SpectralGrid, amplitude: f64) -> Field {
    let a = grid.dx();
    grid.sample_momentum(|k| {
        let k = k[0];
        if k == 0.0 {
            ZERO
        } else {
            C::new(-amplitude / k.abs() * (-0.5 * (k * a).powi(2)).exp(), 0.0)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyOptions {
    /// Step of the classical integrator.
    pub lp_dt: f64,
    pub eig_tol: f64,
    pub leak_tol: f64,
    pub krylov_tol: f64,
}

impl Default for ToyOptions {
    fn default() -> Self {
        Self {
            lp_dt: 1e-5,
            eig_tol: 1e-11,
            leak_tol: LEAK_TOL,
            krylov_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSample {
    pub alpha: f64,
    pub t: f64,
    pub error: f64,
    /// Largest top-shell population among the compared states.
    pub leakage: f64,
    pub leakage_flag: bool,
}

/// Comparison error at each of the increasing `times`.
pub fn comparison_series(
    basis: &FockBasis,
    phi0: &Field,
    times: &[f64],
    opts: &ToyOptions,
) -> Result<Vec<ComparisonSample>> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(PolaronError::InvalidParameter(
            "comparison times must be non-negative and increasing".into(),
        ));
    }
    let grid = basis.grid();
    if phi0.grid() != grid {
        return Err(PolaronError::InvalidParameter(
            "initial phonons must live on the ring grid".into(),
        ));
    }
    let alpha = basis.alpha();
    let rec = ground_state(&potential(phi0)?, opts.eig_tol)?;
    let psi0 = rec.psi_ground.clone();
    let start = pekar_product_checked(basis, &site_amplitudes(psi0.psi())?, phi0.values(), opts.leak_tol)?;
    let h = froehlich_hamiltonian(basis)?.h;
    let kopts = KrylovOptions {
        tol: opts.krylov_tol,
        ..KrylovOptions::default()
    };

    let mut quantum = start.state.clone();
    let mut lp = LPState::new(ElectronField::new(psi0.psi().clone())?, PhononField::new(phi0.clone(), alpha)?)?;
    let prop = Propagator::new(grid, opts.lp_dt, alpha)?;
    let mut t_now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t > t_now {
            quantum = evolve_with(&h, &quantum, t - t_now, &kopts)?.0;
            let steps = ((t - t_now) / opts.lp_dt).round() as usize;
            let sub = Propagator::new(grid, (t - t_now) / steps.max(1) as f64, alpha)?;
            let p = if steps > 0 && ((t - t_now) / steps as f64 - opts.lp_dt).abs() > 1e-15 {
                &sub
            } else {
                &prop
            };
            for _ in 0..steps {
                p.step(&mut lp)?;
            }
            t_now = t;
        }
        let classical = pekar_product_checked(
            basis,
            &site_amplitudes(lp.psi.psi())?,
            lp.phi.amp().values(),
            opts.leak_tol,
        )?;
        let phased = classical.state.scaled(C::from_polar(1.0, -lp.phase_omega));
        let leakage = start
            .leakage
            .max(classical.leakage)
            .max(basis.top_shell_population(&quantum));
        out.push(ComparisonSample {
            alpha,
            t,
            error: quantum.sub(&phased).norm(),
            leakage,
            leakage_flag: leakage > opts.leak_tol,
        });
    }
    Ok(out)
}

pub fn comparison_error(basis: &FockBasis, phi0: &Field, t: f64, opts: &ToyOptions) -> Result<ComparisonSample> {
    Ok(comparison_series(basis, phi0, &[t], opts)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub caveat: String,
    pub t: f64,
    pub samples: Vec<ComparisonSample>,
    /// Fit of `log error` against `log α` over the unflagged samples.
    pub fit: Option<LinearFit>,
    pub excluded: usize,
    /// Times along each α's series at which the error decreased.
    pub monotonicity_violations: Vec<(f64, f64)>,
}

/// Runs the comparison for each α (concurrently) at `t`, also sampling
/// `series_points` earlier times to look for non-monotone behaviour.
pub fn comparison_scaling(
    basis: &FockBasis,
    amplitude: f64,
    alphas: &[f64],
    t: f64,
    series_points: usize,
    opts: &ToyOptions,
) -> Result<ComparisonReport> {
    let phi0 = toy_phonons(basis.grid(), amplitude);
    let n = series_points.max(1);
    let times: Vec<f64> = (1..=n).map(|i| t * i as f64 / n as f64).collect();
    let runs: Vec<Vec<ComparisonSample>> = alphas
        .par_iter()
        .map(|&a| comparison_series(&basis.with_alpha(a)?, &phi0, &times, opts))
        .collect::<Result<_>>()?;
    let mut violations = Vec::new();
    for run in &runs {
        for w in run.windows(2) {
            if w[1].error < w[0].error {
                violations.push((w[1].alpha, w[1].t));
            }
        }
    }
    let samples: Vec<ComparisonSample> = runs.iter().map(|r| *r.last().expect("nonempty series")).collect();
    let kept: Vec<&ComparisonSample> = samples.iter().filter(|s| !s.leakage_flag).collect();
    let xs: Vec<f64> = kept.iter().map(|s| s.alpha).collect();
    let ys: Vec<f64> = kept.iter().map(|s| s.error).collect();
    Ok(ComparisonReport {
        caveat: RING_CAVEAT.into(),
        t,
        fit: loglog_fit(&xs, &ys),
        excluded: samples.len() - kept.len(),
        samples,
        monotonicity_violations: violations,
    })
}

impl ComparisonReport {
    /// CSV of `(alpha, t, error, leakage)` preceded by the caveat.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# {}", self.caveat)?;
        writeln!(w, "alpha,t,error,leakage")?;
        for s in &self.samples {
            writeln!(w, "{},{},{:.12e},{:.6e}", s.alpha, s.t, s.error, s.leakage)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let fit = match &self.fit {
            Some(f) => format!("slope {:.4} (residual {:.3e}, {} points)", f.slope, f.residual, f.points),
            None => "no fit".into(),
        };
        format!(
            "{}\nt = {}: {fit}; {} excluded for leakage; {} monotonicity violations",
            self.caveat,
            self.t,
            self.excluded,
            self.monotonicity_violations.len()
        )
    }
}

/// Dense `f(-Δ_NN + 1)` on the sites for a spectral function `f`.
fn shifted_laplacian_power(basis: &FockBasis, power: f64) -> DMatrix<C> {
    let lap = ring_laplacian(basis).to_dense();
    let eig = SymmetricEigen::new(lap);
    let m = eig.eigenvalues.len();
    let mut d = DMatrix::<C>::zeros(m, m);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        d[(i, i)] = C::new((l + 1.0).powf(power), 0.0);
    }
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Applies `E ⊗ 1` for a dense site-space matrix `E`.
fn apply_electron(basis: &FockBasis, e: &DMatrix<C>, s: &[C]) -> Vec<C> {
    let nt = basis.n_tuples();
    let m = basis.sites();
    let mut out = vec![ZERO; s.len()];
    for r in 0..m {
        for c in 0..m {
            let w = e[(r, c)];
            if w == ZERO {
                continue;
            }
            for t in 0..nt {
                out[r * nt + t] += w * s[c * nt + t];
            }
        }
    }
    out
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<C> {
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C::new(re, im)
        })
        .collect()
}

fn norm(v: &[C]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnihilatorRatio {
    pub alpha: f64,
    /// `max_u ‖(-Δ+1)^{-1/2} Φ⁻ u⊗Ω‖ / (α⁻¹ ‖u‖)`
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CreationBound {
    pub n_max: usize,
    /// `max_Ψ ‖Φ⁺Ψ‖ / ‖(-Δ+1)^{1/2} 𝒩^{1/2} Ψ‖` over the random samples.
    pub sampled_max: f64,
    /// The supremum of the same ratio over the truncated space.
    pub supremum: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichBound {
    pub n_max: usize,
    pub eps: f64,
    /// Lowest eigenvalue of `H - (1-ε)(-Δ + 𝒩)`.
    pub lowest: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialQuadrature {
    pub value: f64,
    pub exact: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub caveat: String,
    pub annihilator: Vec<AnnihilatorRatio>,
    /// `(max - min) / max` of the annihilator ratios across α.
    pub annihilator_spread: f64,
    /// At `n_max` and `n_max + 1`.
    pub creation: [CreationBound; 2],
    pub sandwich: [SandwichBound; 2],
    pub quadrature: RadialQuadrature,
}

impl BoundReport {
    pub fn all_finite(&self) -> bool {
        self.annihilator.iter().all(|a| a.max_ratio.is_finite())
            && self
                .creation
                .iter()
                .all(|c| c.sampled_max.is_finite() && c.supremum.is_finite())
            && self.sandwich.iter().all(|s| s.lowest.is_finite())
            && self.quadrature.value.is_finite()
    }

    pub fn creation_change(&self) -> f64 {
        (self.creation[1].supremum - self.creation[0].supremum).abs() / self.creation[0].supremum
    }

    pub fn sandwich_change(&self) -> f64 {
        (self.sandwich[1].lowest - self.sandwich[0].lowest).abs() / self.sandwich[0].lowest.abs().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub samples: usize,
    pub seed: u64,
    pub eps: f64,
    pub alphas: Vec<f64>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            samples: 100,
            seed: 7,
            eps: 0.5,
            alphas: vec![2.0, 4.0, 8.0],
        }
    }
}

/// `max_u ‖(-Δ+1)^{-1/2} Φ⁻ u⊗Ω‖ / (α⁻¹‖u‖)` over random site vectors.
pub fn annihilator_ratio(basis: &FockBasis, samples: usize, seed: u64) -> Result<f64> {
    let h = froehlich_hamiltonian(basis)?;
    let inv_sqrt = shifted_laplacian_power(basis, -0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let u = random_vector(&mut rng, basis.sites());
        let s = FockState::with_vacuum(basis, &u);
        let out = apply_electron(basis, &inv_sqrt, h.phi_minus.apply(&s).amplitudes());
        best = best.max(norm(&out) / (norm(&u) / basis.alpha()));
    }
    Ok(best)
}

/// `(-Δ+1)^{1/2} 𝒩^{1/2}` and its pseudo-inverse (zero on the vacuum sector).
fn creation_weights(basis: &FockBasis) -> (DMatrix<C>, DMatrix<C>, Vec<f64>) {
    let a2 = basis.alpha() * basis.alpha();
    let sqrt_n: Vec<f64> = (0..basis.dim())
        .map(|i| (basis.shell(i % basis.n_tuples()) as f64 / a2).sqrt())
        .collect();
    (
        shifted_laplacian_power(basis, 0.5),
        shifted_laplacian_power(basis, -0.5),
        sqrt_n,
    )
}

pub fn creation_bound(basis: &FockBasis, samples: usize, seed: u64) -> Result<CreationBound> {
    let h = froehlich_hamiltonian(basis)?;
    let (sq, inv_sq, sqrt_n) = creation_weights(basis);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled_max: f64 = 0.0;
    let mut skipped = 0;
    for _ in 0..samples {
        let psi = random_vector(&mut rng, basis.dim());
        let num = norm(h.phi_plus.apply(&FockState::from_amplitudes(psi.clone())).amplitudes());
        let weighted: Vec<C> = psi.iter().zip(&sqrt_n).map(|(p, w)| p * w).collect();
        let den = norm(&apply_electron(basis, &sq, &weighted));
        if den == 0.0 {
            skipped += 1;
            continue;
        }
        sampled_max = sampled_max.max(num / den);
    }
    // Largest eigenvalue of D⁻¹ Φ⁻ Φ⁺ D⁻¹ via the lowest of its negative.
    let inv_n: Vec<f64> = sqrt_n.iter().map(|&w| if w > 0.0 { 1.0 / w } else { 0.0 }).collect();
    let d_inv = |x: &[C]| -> Vec<C> {
        let y = apply_electron(basis, &inv_sq, x);
        y.iter().zip(&inv_n).map(|(v, w)| v * w).collect()
    };
    let plus = h.phi_plus.matrix();
    let minus = h.phi_minus.matrix();
    let apply = |x: &[C], out: &mut [C]| {
        let y = d_inv(x);
        let z = minus.apply(&plus.apply(&y));
        let r = d_inv(&z);
        out.iter_mut().zip(&r).for_each(|(o, v)| *o = -v);
    };
    let start: Vec<C> = (0..basis.dim())
        .map(|i| if inv_n[i] > 0.0 { C::new(1.0 + 0.01 * (i % 7) as f64, 0.0) } else { ZERO })
        .collect();
    let top = lowest_eigen(apply, &start, 1e-9, 500)?;
    Ok(CreationBound {
        n_max: basis.n_max(),
        sampled_max,
        supremum: (-top.value).max(0.0).sqrt(),
        skipped,
    })
}

/// Ratio for a single state; `None` when the weighted norm vanishes.
pub fn creation_ratio(basis: &FockBasis, psi: &FockState) -> Result<Option<f64>> {
    let h = froehlich_hamiltonian(basis)?;
    let (sq, _, sqrt_n) = creation_weights(basis);
    let weighted: Vec<C> = psi.amplitudes().iter().zip(&sqrt_n).map(|(p, w)| p * w).collect();
    let den = norm(&apply_electron(basis, &sq, &weighted));
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some(norm(h.phi_plus.apply(psi).amplitudes()) / den))
}

pub fn sandwich_bound(basis: &FockBasis, eps: f64) -> Result<SandwichBound> {
    let h = froehlich_hamiltonian(basis)?;
    let free = h.kinetic.add_scaled(1.0, &h.number);
    let op: FockOperator = h.h.add_scaled(-(1.0 - eps), &free);
    let lowest = if basis.dim() <= 2000 {
        SymmetricEigen::new(op.matrix().to_dense())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    } else {
        let m = op.matrix();
        let start = FockState::with_vacuum(basis, &vec![C::new(1.0, 0.0); basis.sites()]);
        lowest_eigen(|x, o| m.matvec(x, o), start.amplitudes(), 1e-9, 500)?.value
    };
    Ok(SandwichBound {
        n_max: basis.n_max(),
        eps,
        lowest,
    })
}

/// `4π ∫₀^∞ k² f(k) dk` by composite 5-point Gauss–Legendre on the map
/// `k = s/(1-s)`, which never evaluates the endpoints.
pub fn radial_integral_3d<F: Fn(f64) -> f64>(f: F, panels: usize) -> f64 {
    const NODES: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.236_926_885_056_189_1,
        0.478_628_670_499_366_5,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
    ];
    let h = 1.0 / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            let s = mid + 0.5 * h * x;
            let k = s / (1.0 - s);
            let jac = 1.0 / ((1.0 - s) * (1.0 - s));
            total += 0.5 * h * w * jac * k * k * f(k);
        }
    }
    4.0 * std::f64::consts::PI * total
}

/// `∫ d³k / ((k² + 1) k²)`, exactly `2π²`.
pub fn coupling_integral_quadrature(panels: usize) -> RadialQuadrature {
    let value = radial_integral_3d(|k| 1.0 / ((k * k + 1.0) * k * k), panels);
    let exact = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    RadialQuadrature {
        value,
        exact,
        relative_error: (value - exact).abs() / exact,
    }
}

pub fn bound_checks(basis: &FockBasis, opts: &BoundOptions) -> Result<BoundReport> {
    let annihilator: Vec<AnnihilatorRatio> = opts
        .alphas
        .iter()
        .map(|&a| {
            Ok(AnnihilatorRatio {
                alpha: a,
                max_ratio: annihilator_ratio(&basis.with_alpha(a)?, opts.samples, opts.seed)?,
            })
        })
        .collect::<Result<_>>()?;
    let hi = annihilator.iter().map(|a| a.max_ratio).fold(0.0, f64::max);
    let lo = annihilator.iter().map(|a| a.max_ratio).fold(f64::INFINITY, f64::min);
    let bigger = FockBasis::new(basis.sites(), basis.spacing(), basis.n_max() + 1, basis.alpha())?;
    Ok(BoundReport {
        caveat: RING_CAVEAT.into(),
        annihilator,
        annihilator_spread: if hi > 0.0 { (hi - lo) / hi } else { 0.0 },
        creation: [
            creation_bound(basis, opts.samples, opts.seed)?,
            creation_bound(&bigger, opts.samples, opts.seed)?,
        ],
        sandwich: [sandwich_bound(basis, opts.eps)?, sandwich_bound(&bigger, opts.eps)?],
        quadrature: coupling_integral_quadrature(400),
    })
}
