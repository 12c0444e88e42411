//! Lowest eigenpairs of `h = -Δ + V`, the reduced resolvent, adiabatic
//! velocities and the Pekar fixed point.
//!
//! Eigenpairs come from block LOBPCG with a spectrally applied
//! `(-Δ + 1 - λ)⁻¹` preconditioner. Internally the solver works with plain
//! Euclidean vectors; a Euclidean-normalized vector `x` corresponds to the
//! L2-normalized field `x / √dV`, and both carry the same residual norm.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PolaronError, Result};
use crate::fields::{apply_potential, potential, potential_i_phi, sigma, ElectronField, PhononField};
use crate::grid::{kinetic_energy, Field, Space, SpectralGrid};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Target residual `‖(h - e)ψ‖₂` for the two lowest eigenpairs.
    pub tol: f64,
    pub max_iter: usize,
    /// Block size; `None` picks 4 in one dimension and 6 in three.
    pub block: Option<usize>,
    /// Seed for the random part of a cold start.
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 3000,
            block: None,
            seed: 0x5eed,
        }
    }
}

impl EigenOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundStateRecord {
    /// Normalized ground state with the global phase fixed.
    pub psi_ground: ElectronField,
    pub e: f64,
    /// `e₁ - e₀` from the first Rayleigh–Ritz excitation.
    pub gap: f64,
    pub residual: f64,
    pub gap_residual: f64,
    /// Normalized second eigenvector, phase fixed like the ground state.
    pub second: ElectronField,
    pub e1: f64,
    /// Set when the gap is below ten times the solver tolerance.
    pub near_degenerate: bool,
    pub iterations: usize,
    /// Tolerance actually used, after the round-off floor.
    pub tol: f64,
    block: Vec<Vec<C>>,
}

impl GroundStateRecord {
    /// Converged Ritz block, usable as a warm start for a nearby potential.
    pub fn warm_start(&self) -> &[Vec<C>] {
        &self.block
    }
}

/// Applies `h = -Δ + V` and the kinetic preconditioner on raw buffers.
pub(crate) struct Hamiltonian {
    grid: SpectralGrid,
    v: Vec<f64>,
    kin: Vec<f64>,
}

impl Hamiltonian {
    pub(crate) fn new(v: &Field) -> Result<Self> {
        v.require(Space::Position)?;
        let grid = v.grid().clone();
        let scale = 1.0 / grid.len() as f64;
        let residue = v.max_abs_imag();
        if residue > 1e-10 * v.max_abs().max(1.0) {
            return Err(PolaronError::ImaginaryResidue {
                residue,
                scale: v.max_abs(),
            });
        }
        Ok(Self {
            kin: grid.kinetic_symbol().iter().map(|s| s * scale).collect(),
            v: v.real_part(),
            grid,
        })
    }

    pub(crate) fn apply(&self, x: &[C], out: &mut [C]) {
        out.copy_from_slice(x);
        self.grid.dft_forward(out);
        out.iter_mut().zip(&self.kin).for_each(|(o, k)| *o *= k);
        self.grid.dft_inverse(out);
        for ((o, xi), vi) in out.iter_mut().zip(x).zip(&self.v) {
            *o += xi * vi;
        }
    }

    /// Upper bound on `‖H‖`: largest kinetic symbol plus largest `|V|`.
    pub(crate) fn norm_bound(&self) -> f64 {
        let n = self.grid.len() as f64;
        let kmax = self.kin.iter().cloned().fold(0.0, f64::max) * n;
        kmax + self.v.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// `(-Δ + shift)⁻¹ r` with `shift > 0`.
    fn precondition(&self, r: &[C], shift: f64, out: &mut [C]) {
        let n = self.grid.len() as f64;
        out.copy_from_slice(r);
        self.grid.dft_forward(out);
        out.iter_mut()
            .zip(&self.kin)
            .for_each(|(o, k)| *o /= k * n + shift);
        out.iter_mut().for_each(|o| *o /= n);
        self.grid.dft_inverse(out);
    }
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn nrm(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(a: C, x: &[C], y: &mut [C]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

fn scale(a: f64, x: &mut [C]) {
    x.iter_mut().for_each(|v| *v *= a);
}

/// Orthonormalizes `cand` against `basis` and itself (two Gram–Schmidt
/// passes). Columns that collapse are dropped.
fn orthonormalize_against(basis: &[Vec<C>], cand: Vec<Vec<C>>) -> Vec<Vec<C>> {
    let mut out: Vec<Vec<C>> = Vec::with_capacity(cand.len());
    for mut w in cand {
        let n0 = nrm(&w);
        if n0 == 0.0 || !n0.is_finite() {
            continue;
        }
        scale(1.0 / n0, &mut w);
        for _ in 0..2 {
            for q in basis.iter().chain(out.iter()) {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let n1 = nrm(&w);
        if n1 > 1e-10 {
            scale(1.0 / n1, &mut w);
            out.push(w);
        }
    }
    out
}

/// Rotates `x` so that its sum is real and positive; if the sum vanishes,
/// the largest-modulus entry is made real and positive instead.
pub(crate) fn fix_phase(x: &mut [C]) {
    let s: C = x.iter().sum();
    let max = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let anchor = if s.norm() > 1e-8 * max * (x.len() as f64).sqrt() {
        s
    } else {
        let mut best = ZERO;
        for v in x.iter() {
            if v.norm() > best.norm() * (1.0 + 1e-12) {
                best = *v;
            }
        }
        best
    };
    if anchor.norm() == 0.0 {
        return;
    }
    let rot = anchor.conj() / anchor.norm();
    x.iter_mut().for_each(|v| *v *= rot);
}

fn cold_start(grid: &SpectralGrid, v: &[f64], m: usize, seed: u64) -> Vec<Vec<C>> {
    let imin = v
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc })
        .0;
    let centre = grid.position(imin);
    let l = grid.box_length();
    let s2 = (l / 8.0).powi(2);
    let wrap = |d: f64| d - l * (d / l).round();
    let mut cols = Vec::with_capacity(m);
    cols.push(
        (0..grid.len())
            .map(|i| {
                let x = grid.position(i);
                let r2: f64 = (0..3).map(|a| wrap(x[a] - centre[a]).powi(2)).sum();
                C::new((-r2 / (2.0 * s2)).exp(), 0.0)
            })
            .collect(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kc2 = (8.0 * std::f64::consts::PI / l).powi(2);
    for _ in 1..m {
        let mut w: Vec<C> = (0..grid.len())
            .map(|i| {
                let k2 = grid.kinetic_symbol()[i];
                let a = (-k2 / kc2).exp();
                C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * a
            })
            .collect();
        grid.dft_inverse(&mut w);
        cols.push(w);
    }
    cols
}

struct Ritz {
    values: Vec<f64>,
    x: Vec<Vec<C>>,
    hx: Vec<Vec<C>>,
    iterations: usize,
    residuals: Vec<f64>,
}

fn combine(cols: &[Vec<C>], coeffs: &DMatrix<C>, rows: std::ops::Range<usize>, j: usize) -> Vec<C> {
    let n = cols[0].len();
    let mut out = vec![ZERO; n];
    for (r, col) in rows.clone().zip(cols.iter().skip(rows.start)) {
        let c = coeffs[(r, j)];
        if c != ZERO {
            axpy(c, col, &mut out);
        }
    }
    out
}

/// Block LOBPCG for the `m` lowest eigenpairs; converges the first `nev`.
fn lobpcg(
    h: &Hamiltonian,
    init: Vec<Vec<C>>,
    m: usize,
    nev: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<Ritz> {
    let n = h.grid.len();
    let mut x = orthonormalize_against(&[], init);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    while x.len() < m {
        let extra: Vec<C> = (0..n)
            .map(|_| C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let more = orthonormalize_against(&x, vec![extra]);
        x.extend(more);
    }
    x.truncate(m);
    let apply_all = |cols: &[Vec<C>]| -> Vec<Vec<C>> {
        cols.iter()
            .map(|c| {
                let mut o = vec![ZERO; n];
                h.apply(c, &mut o);
                o
            })
            .collect()
    };
    let mut hx = apply_all(&x);
    let mut p: Vec<Vec<C>> = Vec::new();
    let mut values = vec![0.0; m];
    let mut residuals = vec![f64::INFINITY; m];

    for it in 0..=max_iter {
        // Rayleigh–Ritz on span[X, P, W].
        let w: Vec<Vec<C>> = if it == 0 {
            Vec::new()
        } else {
            x.iter()
                .zip(&hx)
                .zip(&values)
                .map(|((xi, hxi), &lam)| {
                    let mut r = hxi.clone();
                    axpy(C::new(-lam, 0.0), xi, &mut r);
                    let mut z = vec![ZERO; n];
                    h.precondition(&r, (1.0 - lam).max(1.0), &mut z);
                    z
                })
                .collect()
        };
        let p_orth = orthonormalize_against(&x, std::mem::take(&mut p));
        let mut basis = x.clone();
        basis.extend(p_orth);
        let w_orth = orthonormalize_against(&basis, w);
        let n_x = x.len();
        basis.extend(w_orth);
        let mut hbasis = hx.clone();
        hbasis.extend(apply_all(&basis[n_x..]));
        let k = basis.len();
        let mut g = DMatrix::<C>::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = dot(&basis[i], &hbasis[j]);
                g[(i, j)] = v;
                g[(j, i)] = v.conj();
            }
        }
        for i in 0..k {
            g[(i, i)] = C::new(g[(i, i)].re, 0.0);
        }
        let eig = SymmetricEigen::new(g);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut coeffs = DMatrix::<C>::zeros(k, m);
        for (j, &o) in order.iter().take(m).enumerate() {
            coeffs.set_column(j, &eig.eigenvectors.column(o));
            values[j] = eig.eigenvalues[o];
        }
        let new_x: Vec<Vec<C>> = (0..m).map(|j| combine(&basis, &coeffs, 0..k, j)).collect();
        let new_hx: Vec<Vec<C>> = (0..m).map(|j| combine(&hbasis, &coeffs, 0..k, j)).collect();
        p = (0..m).map(|j| combine(&basis, &coeffs, n_x..k, j)).collect();
        x = new_x;
        hx = new_hx;
        // Refresh H images now and then to stop drift from the recombinations.
        if it % 20 == 19 {
            hx = apply_all(&x);
        }
        for j in 0..m {
            let mut r = hx[j].clone();
            axpy(C::new(-values[j], 0.0), &x[j], &mut r);
            residuals[j] = nrm(&r);
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(PolaronError::NonFinite("eigensolver Ritz values".into()));
        }
        if residuals[..nev].iter().all(|&r| r <= tol) {
            // Confirm with exact H images before accepting.
            hx = apply_all(&x);
            let mut ok = true;
            for j in 0..m {
                let mut r = hx[j].clone();
                axpy(C::new(-values[j], 0.0), &x[j], &mut r);
                residuals[j] = nrm(&r);
                ok &= j >= nev || residuals[j] <= tol;
            }
            if ok {
                return Ok(Ritz {
                    values,
                    x,
                    hx,
                    iterations: it,
                    residuals,
                });
            }
        }
    }
    Err(PolaronError::EigenNotConverged {
        iterations: max_iter,
        residual: residuals[..nev].iter().cloned().fold(0.0, f64::max),
    })
}

fn to_field(grid: &SpectralGrid, mut x: Vec<C>) -> Result<ElectronField> {
    fix_phase(&mut x);
    let s = 1.0 / grid.cell_volume().sqrt();
    scale(s, &mut x);
    ElectronField::new(Field::new(grid, x, Space::Position)?)
}

/// Lowest two eigenpairs of `-Δ + V` with default options.
pub fn ground_state(v: &Field, tol: f64) -> Result<GroundStateRecord> {
    ground_state_with(v, &EigenOptions::with_tol(tol), None)
}

/// Residual floor relative to `‖H‖`; requested tolerances below
/// `ROUNDOFF_FLOOR·‖H‖` are raised to it.
pub const ROUNDOFF_FLOOR: f64 = 1e-14;

/// Lowest two eigenpairs of `-Δ + V`, optionally warm started from a
/// previous record's block.
pub fn ground_state_with(
    v: &Field,
    opts: &EigenOptions,
    warm: Option<&[Vec<C>]>,
) -> Result<GroundStateRecord> {
    if !(opts.tol > 0.0) {
        return Err(PolaronError::InvalidParameter(format!(
            "eigensolver tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if !v.is_finite() {
        return Err(PolaronError::NonFinite("potential".into()));
    }
    let h = Hamiltonian::new(v)?;
    let grid = v.grid();
    let m = opts
        .block
        .unwrap_or(if grid.dims() == 1 { 4 } else { 6 })
        .clamp(2, grid.len());
    let init = match warm {
        Some(cols) if !cols.is_empty() && cols.iter().all(|c| c.len() == grid.len()) => cols.to_vec(),
        _ => cold_start(grid, &h.v, m, opts.seed),
    };
    let tol = opts.tol.max(ROUNDOFF_FLOOR * h.norm_bound());
    let ritz = lobpcg(&h, init, m, 2, tol, opts.max_iter, opts.seed)?;
    let gap = (ritz.values[1] - ritz.values[0]).max(0.0);
    let _ = &ritz.hx;
    Ok(GroundStateRecord {
        psi_ground: to_field(grid, ritz.x[0].clone())?,
        e: ritz.values[0],
        gap,
        residual: ritz.residuals[0],
        gap_residual: ritz.residuals[1],
        second: to_field(grid, ritz.x[1].clone())?,
        e1: ritz.values[1],
        near_degenerate: gap < 10.0 * tol,
        iterations: ritz.iterations,
        tol,
        block: ritz.x,
    })
}

/// Ground-state data plus the potential it belongs to, for applying
/// `R = q (h - e)⁻¹ q` with `q = 1 - |ψ⟩⟨ψ|`.
#[derive(Clone)]
pub struct ResolventContext {
    pub potential: Field,
    pub record: GroundStateRecord,
    pub lin_tol: f64,
    pub max_iter: usize,
}

impl ResolventContext {
    pub fn new(potential: Field, record: GroundStateRecord, lin_tol: f64) -> Self {
        Self {
            potential,
            record,
            lin_tol,
            max_iter: 5000,
        }
    }

    /// Builds `V_φ`, solves for its ground state and wraps both.
    pub fn for_phonons(phi: &PhononField, eig_tol: f64, lin_tol: f64) -> Result<Self> {
        let v = potential(phi.amp())?;
        let rec = ground_state(&v, eig_tol)?;
        Ok(Self::new(v, rec, lin_tol))
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.potential.grid()
    }

    pub fn psi(&self) -> &Field {
        self.record.psi_ground.psi()
    }
}

/// Solves `(h - e) w = q v` with `w ⟂ ψ` by projected preconditioned CG.
pub fn apply_resolvent(ctx: &ResolventContext, v: &ElectronField) -> Result<ElectronField> {
    let tol = ctx.lin_tol;
    let gap = ctx.record.gap;
    if gap <= 10.0 * tol {
        return Err(PolaronError::GapTooSmall {
            gap,
            required: 10.0 * tol,
        });
    }
    let grid = ctx.grid();
    let h = Hamiltonian::new(&ctx.potential)?;
    let e = ctx.record.e;
    let shift = (1.0 - e).max(1.0);
    let dv = grid.cell_volume().sqrt();
    let psi: Vec<C> = ctx.psi().values().iter().map(|p| p * dv).collect();
    let n = grid.len();
    let project = |x: &mut [C]| {
        let c = dot(&psi, x);
        axpy(-c, &psi, x);
    };
    let op = |x: &[C], out: &mut [C]| {
        h.apply(x, out);
        axpy(C::new(-e, 0.0), x, out);
    };
    let mut b: Vec<C> = v.psi().values().to_vec();
    let vnorm = nrm(&b);
    project(&mut b);
    let mut w = vec![ZERO; n];
    if vnorm == 0.0 || nrm(&b) <= 1e-15 * vnorm {
        return ElectronField::new(Field::new(grid, w, Space::Position)?);
    }
    let target = tol * vnorm;
    let mut iterations = 0;
    let mut true_res = f64::INFINITY;
    let mut tmp = vec![ZERO; n];
    // Outer loop restarts CG from the true residual.
    for _ in 0..4 {
        op(&w, &mut tmp);
        let mut r: Vec<C> = b.iter().zip(&tmp).map(|(bi, ti)| bi - ti).collect();
        project(&mut r);
        let mut z = vec![ZERO; n];
        h.precondition(&r, shift, &mut z);
        project(&mut z);
        let mut pdir = z.clone();
        let mut rz = dot(&r, &z).re;
        while iterations < ctx.max_iter {
            if nrm(&r) <= 0.1 * target {
                break;
            }
            iterations += 1;
            op(&pdir, &mut tmp);
            project(&mut tmp);
            let pap = dot(&pdir, &tmp).re;
            if !(pap > 0.0) {
                return Err(PolaronError::LinearSolveNotConverged {
                    iterations,
                    residual: nrm(&r) / vnorm,
                });
            }
            let a = rz / pap;
            axpy(C::new(a, 0.0), &pdir, &mut w);
            axpy(C::new(-a, 0.0), &tmp, &mut r);
            h.precondition(&r, shift, &mut z);
            project(&mut z);
            let rz_new = dot(&r, &z).re;
            let beta = rz_new / rz;
            rz = rz_new;
            pdir.iter_mut().zip(&z).for_each(|(p, zi)| *p = zi + *p * beta);
        }
        project(&mut w);
        op(&w, &mut tmp);
        true_res = b.iter().zip(&tmp).map(|(bi, ti)| (ti - bi).norm_sqr()).sum::<f64>().sqrt();
        if true_res <= target || iterations >= ctx.max_iter {
            break;
        }
    }
    if true_res > target {
        return Err(PolaronError::LinearSolveNotConverged {
            iterations,
            residual: true_res / vnorm,
        });
    }
    ElectronField::new(Field::new(grid, w, Space::Position)?)
}

/// `∂_t ψ_{φ_t} = α⁻² R V_{iφ} ψ_φ`.
pub fn ground_state_velocity(ctx: &ResolventContext, phi: &PhononField) -> Result<ElectronField> {
    let vi = potential_i_phi(phi)?;
    let src = ElectronField::new(apply_potential(&vi, ctx.psi()))?;
    let mut w = apply_resolvent(ctx, &src)?.into_field();
    w.scale_mut(C::new(phi.alpha().powi(-2), 0.0));
    ElectronField::new(w)
}

/// Hellmann–Feynman: `ė = -α⁻² ⟨ψ_φ, V_{iφ} ψ_φ⟩`.
pub fn eigenvalue_velocity(ctx: &ResolventContext, phi: &PhononField) -> Result<f64> {
    let vi = potential_i_phi(phi)?;
    let psi = ctx.psi();
    let ev = psi.inner(&apply_potential(&vi, psi));
    Ok(-ev.re / (phi.alpha() * phi.alpha()))
}

/// `𝓔(ψ, φ) = ⟨ψ, -Δψ⟩ + ⟨ψ, V_φ ψ⟩ + ‖φ‖₂²`.
pub fn energy_functional(psi: &Field, phi: &Field) -> Result<f64> {
    let t = kinetic_energy(psi)?;
    let v = potential(phi)?;
    let pv = psi.inner(&apply_potential(&v, psi)).re;
    Ok(t + pv + phi.norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    pub e: f64,
}

/// Binding check: admissible iff the ground-state energy is below `-10·tol`.
pub fn assumption_check(phi: &PhononField, tol: f64) -> Result<Admissibility> {
    let v = potential(phi.amp())?;
    let rec = ground_state(&v, tol)?;
    Ok(Admissibility {
        admissible: rec.e < -10.0 * tol,
        e: rec.e,
    })
}

#[derive(Debug, Clone)]
pub struct PekarSolution {
    pub psi: ElectronField,
    /// Self-consistent amplitude `φ = -σ_ψ`.
    pub phi: Field,
    pub energy: f64,
    /// Ground-state eigenvalue of `h_φ`.
    pub e: f64,
    pub gap: f64,
    /// `𝓔` after each electron update.
    pub energies: Vec<f64>,
    pub iterations: usize,
    /// `‖φ + σ_ψ‖₂`.
    pub fixed_point_residual: f64,
    /// `‖(h_φ - e)ψ‖₂`.
    pub eigen_residual: f64,
}

impl PekarSolution {
    pub fn phonon(&self, alpha: f64) -> Result<PhononField> {
        PhononField::new(self.phi.clone(), alpha)
    }
}

/// Alternating minimization `φ ← -σ_ψ`, `ψ ← ground state of h_φ` until
/// successive electron states differ by at most `tol` in L2.
pub fn pekar_minimize(psi0: &ElectronField, tol: f64) -> Result<PekarSolution> {
    pekar_minimize_with(psi0, tol, 500)
}

pub fn pekar_minimize_with(psi0: &ElectronField, tol: f64, max_outer: usize) -> Result<PekarSolution> {
    let eig_tol = (tol * 1e-2).max(1e-12);
    let opts = EigenOptions::with_tol(eig_tol);
    let mut psi = psi0.psi().normalized();
    let mut energies: Vec<f64> = Vec::new();
    let mut warm: Option<Vec<Vec<C>>> = None;
    for it in 1..=max_outer {
        let phi = sigma(&psi)?.scaled(C::new(-1.0, 0.0));
        let v = potential(&phi)?;
        let rec = ground_state_with(&v, &opts, warm.as_deref())?;
        if rec.e >= 0.0 {
            return Err(PolaronError::NoBinding { energy: rec.e });
        }
        let next = rec.psi_ground.psi().clone();
        let en = energy_functional(&next, &phi)?;
        if let Some(&prev) = energies.last() {
            if en > prev + 1e-10 * prev.abs().max(1.0) {
                return Err(PolaronError::Stalled(format!(
                    "Pekar energy rose from {prev} to {en} at iteration {it}"
                )));
            }
        }
        energies.push(en);
        let step = next.sub(&psi).l2();
        psi = next;
        warm = Some(rec.warm_start().to_vec());
        if step <= tol {
            let phi = sigma(&psi)?.scaled(C::new(-1.0, 0.0));
            let v = potential(&phi)?;
            let final_rec = ground_state_with(&v, &opts, warm.as_deref())?;
            let fixed = phi.add_scaled(C::new(1.0, 0.0), &sigma(&psi)?).l2();
            let h = Hamiltonian::new(&v)?;
            let mut hp = vec![ZERO; psi.values().len()];
            h.apply(psi.values(), &mut hp);
            let ev = psi.inner(&Field::new(psi.grid(), hp.clone(), Space::Position)?).re;
            let res: f64 = hp
                .iter()
                .zip(psi.values())
                .map(|(a, p)| (a - p * ev).norm_sqr())
                .sum::<f64>()
                .sqrt()
                * psi.grid().cell_volume().sqrt();
            let energy = energy_functional(&psi, &phi)?;
            return Ok(PekarSolution {
                psi: ElectronField::new(psi)?,
                phi,
                energy,
                e: ev,
                gap: final_rec.gap,
                energies,
                iterations: it,
                fixed_point_residual: fixed,
                eigen_residual: res,
            });
        }
    }
    Err(PolaronError::Stalled(format!(
        "no Pekar fixed point within {max_outer} iterations"
    )))
}
