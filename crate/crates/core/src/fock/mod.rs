//! Truncated Fock-space realization of the Fröhlich Hamiltonian on a 1D ring.
//!
//! The electron lives on `M` ring sites with spacing `a`; the phonons occupy
//! the `M` ring momenta in FFT order, truncated to total occupation
//! `Σ n_k ≤ n_max`. With standard ladders `b_k`, the α-rescaled operators are
//!
//! ```text
//! a_k = α⁻¹ dk^{-1/2} b_k,        [a_k, a*_k'] = α⁻² dk⁻¹ δ_kk'
//! 𝒩   = Σ_k dk a*_k a_k = α⁻² Σ_k b*_k b_k
//! Φ⁺_x = Σ_k dk |k|⁻¹ e^{ikx} a_k,  Φ⁻_x = (Φ⁺_x)*
//! H   = -Δ_NN + Φ⁺_x + Φ⁻_x + 𝒩
//! ```
//!
//! so that `dk` sums replace momentum integrals exactly as in
//! [`crate::fields`]. The `k = 0` mode is a basis mode but does not couple.
//! State index is `site · n_tuples + tuple`, tuples in lexicographic order.

pub mod krylov;
pub mod sparse;
mod toy;

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{PolaronError, Result};
use crate::grid::{Dispersion, Field, Space, SpectralGrid};
use krylov::{expm_hermitian, KrylovOptions, KrylovOutcome};
use sparse::CsrMatrix;

pub use toy::*;

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

/// Default bound on the top-shell population.
pub const LEAK_TOL: f64 = 1e-8;

/// Relative hermiticity defect accepted when an operator is flagged Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FockBasis {
    grid: SpectralGrid,
    n_max: usize,
    alpha: f64,
    tuples: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

fn enumerate_tuples(modes: usize, n_max: usize) -> Vec<Vec<u8>> {
    fn rec(prefix: &mut Vec<u8>, modes: usize, left: usize, out: &mut Vec<Vec<u8>>) {
        if prefix.len() == modes {
            out.push(prefix.clone());
            return;
        }
        for n in 0..=left {
            prefix.push(n as u8);
            rec(prefix, modes, left - n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(modes), modes, n_max, &mut out);
    out
}

impl FockBasis {
    pub fn new(sites: usize, spacing: f64, n_max: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(PolaronError::InvalidParameter(format!(
                "coupling alpha must be positive, got {alpha}"
            )));
        }
        if n_max > u8::MAX as usize {
            return Err(PolaronError::InvalidParameter(format!(
                "occupation cutoff {n_max} too large"
            )));
        }
        let grid = SpectralGrid::new(sites, sites as f64 * spacing, 1, Dispersion::NearestNeighbor)?;
        let tuples = enumerate_tuples(sites, n_max);
        let index = tuples.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self {
            grid,
            n_max,
            alpha,
            tuples,
            index,
        })
    }

    /// Same lattice and truncation with a different coupling.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(PolaronError::InvalidParameter(format!(
                "coupling alpha must be positive, got {alpha}"
            )));
        }
        let mut b = self.clone();
        b.alpha = alpha;
        Ok(b)
    }

    /// The matching nearest-neighbour grid for the classical equations.
    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn sites(&self) -> usize {
        self.grid.points_per_axis()
    }

    pub fn modes(&self) -> usize {
        self.sites()
    }

    pub fn spacing(&self) -> f64 {
        self.grid.dx()
    }

    pub fn dk(&self) -> f64 {
        self.grid.dk()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_tuples(&self) -> usize {
        self.tuples.len()
    }

    pub fn dim(&self) -> usize {
        self.sites() * self.n_tuples()
    }

    pub fn tuple(&self, i: usize) -> &[u8] {
        &self.tuples[i]
    }

    pub fn tuple_index(&self, occupations: &[u8]) -> Option<usize> {
        self.index.get(occupations).copied()
    }

    pub fn state_index(&self, site: usize, tuple: usize) -> usize {
        site * self.n_tuples() + tuple
    }

    /// Total occupation of tuple `i`.
    pub fn shell(&self, tuple: usize) -> usize {
        self.tuples[tuple].iter().map(|&n| n as usize).sum()
    }

    /// Whether basis state `i` lies below the top occupation shell.
    pub fn below_top(&self, state: usize) -> bool {
        self.shell(state % self.n_tuples()) < self.n_max
    }

    /// Ring position of site `j`.
    pub fn position(&self, site: usize) -> f64 {
        self.grid.position(site)[0]
    }

    /// Momentum of mode `q`.
    pub fn momentum(&self, mode: usize) -> f64 {
        self.grid.wavevector(mode)[0]
    }

    /// `|k|⁻¹` of mode `q`, zero at `k = 0`.
    pub fn inv_abs_k(&self, mode: usize) -> f64 {
        self.grid.inv_abs_k()[mode]
    }

    /// Population of the top occupation shell.
    pub fn top_shell_population(&self, s: &FockState) -> f64 {
        s.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.below_top(*i))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Triplets of the standard ladder `b_q` on the phonon space alone.
    fn boson_lowering(&self, mode: usize) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, t) in self.tuples.iter().enumerate() {
            if t[mode] > 0 {
                let mut lower = t.clone();
                lower[mode] -= 1;
                let j = self.index[&lower];
                out.push((j, i, (t[mode] as f64).sqrt()));
            }
        }
        out
    }

    /// `1_el ⊗ B` from phonon-space triplets.
    fn lift_boson(&self, trip: &[(usize, usize, C)]) -> CsrMatrix {
        let nt = self.n_tuples();
        let mut out = Vec::with_capacity(trip.len() * self.sites());
        for s in 0..self.sites() {
            out.extend(trip.iter().map(|&(r, c, v)| (s * nt + r, s * nt + c, v)));
        }
        CsrMatrix::from_triplets(self.dim(), out)
    }
}

/// Vector over a [`FockBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    amps: Vec<C>,
}

impl FockState {
    pub fn from_amplitudes(amps: Vec<C>) -> Self {
        Self { amps }
    }

    /// `c ⊗ β` for site amplitudes `c` and a phonon-space vector `β`.
    pub fn product(electron: &[C], phonons: &[C]) -> Self {
        let mut amps = Vec::with_capacity(electron.len() * phonons.len());
        for e in electron {
            amps.extend(phonons.iter().map(|p| e * p));
        }
        Self { amps }
    }

    /// `c ⊗ Ω`.
    pub fn with_vacuum(basis: &FockBasis, electron: &[C]) -> Self {
        let mut vac = vec![ZERO; basis.n_tuples()];
        vac[0] = C::new(1.0, 0.0);
        Self::product(electron, &vac)
    }

    pub fn amplitudes(&self) -> &[C] {
        &self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn inner(&self, other: &FockState) -> C {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: C) -> Self {
        Self {
            amps: self.amps.iter().map(|a| a * c).collect(),
        }
    }

    pub fn sub(&self, other: &FockState) -> Self {
        Self {
            amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a - b).collect(),
        }
    }

    /// Zeroes the amplitudes in the top occupation shell.
    pub fn project_below_top(&self, basis: &FockBasis) -> Self {
        Self {
            amps: self
                .amps
                .iter()
                .enumerate()
                .map(|(i, &a)| if basis.below_top(i) { a } else { ZERO })
                .collect(),
        }
    }
}

/// Sparse operator on a [`FockBasis`] with a verified hermiticity flag.
#[derive(Debug, Clone)]
pub struct FockOperator {
    matrix: CsrMatrix,
    hermitian: bool,
}

impl FockOperator {
    /// Wraps `matrix`; a set `hermitian` flag is checked against
    /// `‖A - A†‖ ≤ 1e-12 ‖A‖`.
    pub fn new(matrix: CsrMatrix, hermitian: bool) -> Result<Self> {
        if hermitian {
            let d = matrix.hermiticity_defect();
            if d > HERMITIAN_TOL {
                return Err(PolaronError::InvalidParameter(format!(
                    "operator flagged Hermitian has relative defect {d:.3e}"
                )));
            }
        }
        Ok(Self { matrix, hermitian })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn apply(&self, s: &FockState) -> FockState {
        FockState::from_amplitudes(self.matrix.apply(&s.amps))
    }

    pub fn adjoint(&self) -> FockOperator {
        Self {
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    /// `self + s·other`; Hermitian when both are and `s` is real.
    pub fn add_scaled(&self, s: f64, other: &FockOperator) -> FockOperator {
        Self {
            matrix: self.matrix.add_scaled(C::new(s, 0.0), &other.matrix),
            hermitian: self.hermitian && other.hermitian,
        }
    }

    /// Expectation `⟨s, A s⟩`.
    pub fn expectation(&self, s: &FockState) -> C {
        s.inner(&self.apply(s))
    }
}

/// α-rescaled ladder operators and the number operator.
#[derive(Debug, Clone)]
pub struct Ladder {
    /// `a_k` per mode, FFT order.
    pub annihilators: Vec<FockOperator>,
    pub creators: Vec<FockOperator>,
    /// `𝒩 = Σ_k dk a*_k a_k`.
    pub number: FockOperator,
}

pub fn build_ccr(basis: &FockBasis) -> Result<Ladder> {
    let scale = 1.0 / (basis.alpha() * basis.dk().sqrt());
    let mut annihilators = Vec::with_capacity(basis.modes());
    let mut creators = Vec::with_capacity(basis.modes());
    for q in 0..basis.modes() {
        let trip: Vec<(usize, usize, C)> = basis
            .boson_lowering(q)
            .into_iter()
            .map(|(r, c, v)| (r, c, C::new(scale * v, 0.0)))
            .collect();
        let a = basis.lift_boson(&trip);
        creators.push(FockOperator::new(a.adjoint(), false)?);
        annihilators.push(FockOperator::new(a, false)?);
    }
    let inv_a2 = 1.0 / (basis.alpha() * basis.alpha());
    let diag: Vec<C> = (0..basis.dim())
        .map(|i| C::new(inv_a2 * basis.shell(i % basis.n_tuples()) as f64, 0.0))
        .collect();
    Ok(Ladder {
        annihilators,
        creators,
        number: FockOperator::new(CsrMatrix::diagonal(&diag), true)?,
    })
}

/// `W(f) = exp Σ_k dk (f(k) a*_k - conj f(k) a_k)` on the truncated space.
#[derive(Debug, Clone)]
pub struct Weyl {
    pub operator: FockOperator,
    /// The phonon-space block, `W = 1_el ⊗ boson`.
    pub boson: DMatrix<C>,
    /// Top-shell population of `W(f)Ω`.
    pub leakage: f64,
    /// Set when `leakage` exceeds the threshold passed to [`weyl_checked`].
    pub leakage_flag: bool,
}

impl Weyl {
    /// `W(f)Ω` as a phonon-space vector.
    pub fn coherent_vacuum(&self) -> Vec<C> {
        self.boson.column(0).iter().cloned().collect()
    }
}

/// Dense phonon-space generator `Σ_q β_q b*_q - conj β_q b_q` with
/// `β_q = α⁻¹ dk^{1/2} f_q`.
fn weyl_generator(basis: &FockBasis, f: &[C]) -> DMatrix<C> {
    let nt = basis.n_tuples();
    let mut g = DMatrix::<C>::zeros(nt, nt);
    let scale = basis.dk().sqrt() / basis.alpha();
    for (q, &fq) in f.iter().enumerate() {
        let beta = fq * scale;
        if beta == ZERO {
            continue;
        }
        for (r, c, v) in basis.boson_lowering(q) {
            // b_q |c⟩ = v |r⟩, b*_q |r⟩ = v |c⟩
            g[(c, r)] += beta * v;
            g[(r, c)] -= beta.conj() * v;
        }
    }
    g
}

/// Exact exponential of the anti-Hermitian phonon generator through the
/// eigendecomposition of `K = iG`.
fn exp_anti_hermitian(g: DMatrix<C>) -> DMatrix<C> {
    let k = g * C::new(0.0, 1.0);
    let eig = SymmetricEigen::new(k);
    let n = eig.eigenvalues.len();
    let mut d = DMatrix::<C>::zeros(n, n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        d[(i, i)] = C::from_polar(1.0, -l);
    }
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

pub fn weyl(basis: &FockBasis, f: &[C]) -> Result<Weyl> {
    weyl_checked(basis, f, LEAK_TOL)
}

pub fn weyl_checked(basis: &FockBasis, f: &[C], leak_tol: f64) -> Result<Weyl> {
    if f.len() != basis.modes() {
        return Err(PolaronError::ShapeMismatch {
            expected: basis.modes(),
            got: f.len(),
        });
    }
    let boson = exp_anti_hermitian(weyl_generator(basis, f));
    let leakage: f64 = (0..basis.n_tuples())
        .filter(|&i| basis.shell(i) == basis.n_max())
        .map(|i| boson[(i, 0)].norm_sqr())
        .sum();
    let nt = basis.n_tuples();
    let mut trip = Vec::with_capacity(nt * nt);
    for c in 0..nt {
        for r in 0..nt {
            let v = boson[(r, c)];
            if v != ZERO {
                trip.push((r, c, v));
            }
        }
    }
    Ok(Weyl {
        operator: FockOperator::new(basis.lift_boson(&trip), false)?,
        boson,
        leakage,
        leakage_flag: leakage > leak_tol,
    })
}

/// `H_α` together with its pieces.
#[derive(Debug, Clone)]
pub struct Froehlich {
    pub h: FockOperator,
    /// `Σ_x |x⟩⟨x| ⊗ Φ⁺_x`
    pub phi_plus: FockOperator,
    pub phi_minus: FockOperator,
    /// `-Δ_NN ⊗ 1`
    pub kinetic: FockOperator,
    /// `1 ⊗ 𝒩`
    pub number: FockOperator,
}

/// Nearest-neighbour ring Laplacian `-Δ_NN` on the sites.
pub fn ring_laplacian(basis: &FockBasis) -> CsrMatrix {
    let m = basis.sites();
    let a2 = basis.spacing() * basis.spacing();
    let mut trip = Vec::new();
    for j in 0..m {
        trip.push((j, j, C::new(2.0 / a2, 0.0)));
        trip.push((j, (j + 1) % m, C::new(-1.0 / a2, 0.0)));
        trip.push((j, (j + m - 1) % m, C::new(-1.0 / a2, 0.0)));
    }
    CsrMatrix::from_triplets(m, trip)
}

pub fn froehlich_hamiltonian(basis: &FockBasis) -> Result<Froehlich> {
    let nt = basis.n_tuples();
    let lap = ring_laplacian(basis);
    let mut kin = Vec::new();
    for (r, c, v) in lap.triplets() {
        kin.extend((0..nt).map(|t| (r * nt + t, c * nt + t, v)));
    }
    let kinetic = FockOperator::new(CsrMatrix::from_triplets(basis.dim(), kin), true)?;
    let number = build_ccr(basis)?.number;

    let scale = basis.dk().sqrt() / basis.alpha();
    let mut plus = Vec::new();
    for q in 0..basis.modes() {
        let ik = basis.inv_abs_k(q);
        if ik == 0.0 {
            continue;
        }
        let low = basis.boson_lowering(q);
        for s in 0..basis.sites() {
            let w = C::from_polar(scale * ik, basis.momentum(q) * basis.position(s));
            plus.extend(low.iter().map(|&(r, c, v)| (s * nt + r, s * nt + c, w * v)));
        }
    }
    let phi_plus = FockOperator::new(CsrMatrix::from_triplets(basis.dim(), plus), false)?;
    let phi_minus = phi_plus.adjoint();
    let h = kinetic
        .matrix
        .add_scaled(C::new(1.0, 0.0), &number.matrix)
        .add_scaled(C::new(1.0, 0.0), &phi_plus.matrix)
        .add_scaled(C::new(1.0, 0.0), &phi_minus.matrix);
    Ok(Froehlich {
        h: FockOperator::new(h, true)?,
        phi_plus,
        phi_minus,
        kinetic,
        number,
    })
}

/// `e^{-iHt}s` by Lanczos with per-substep error control.
pub fn evolve(h: &FockOperator, s: &FockState, t: f64) -> Result<(FockState, KrylovOutcome)> {
    evolve_with(h, s, t, &KrylovOptions::default())
}

pub fn evolve_with(
    h: &FockOperator,
    s: &FockState,
    t: f64,
    opts: &KrylovOptions,
) -> Result<(FockState, KrylovOutcome)> {
    if !h.is_hermitian() {
        return Err(PolaronError::InvalidParameter(
            "time evolution needs an operator flagged Hermitian".into(),
        ));
    }
    if s.len() != h.dim() {
        return Err(PolaronError::ShapeMismatch {
            expected: h.dim(),
            got: s.len(),
        });
    }
    let m = h.matrix();
    let out = expm_hermitian(|x, o| m.matvec(x, o), &s.amps, t, opts)?;
    Ok((FockState::from_amplitudes(out.state.clone()), out))
}

/// Site amplitudes `c_j = ψ(x_j) √a` of a grid electron state.
pub fn site_amplitudes(psi: &Field) -> Result<Vec<C>> {
    psi.require(Space::Position)?;
    let w = psi.grid().dx().sqrt();
    Ok(psi.values().iter().map(|v| v * w).collect())
}

/// `ψ ⊗ W(α²φ)Ω` with its leakage.
#[derive(Debug, Clone)]
pub struct ProductState {
    pub state: FockState,
    pub leakage: f64,
    pub leakage_flag: bool,
}

pub fn pekar_product(basis: &FockBasis, psi: &[C], phi: &[C]) -> Result<ProductState> {
    pekar_product_checked(basis, psi, phi, LEAK_TOL)
}

pub fn pekar_product_checked(
    basis: &FockBasis,
    psi: &[C],
    phi: &[C],
    leak_tol: f64,
) -> Result<ProductState> {
    if psi.len() != basis.sites() {
        return Err(PolaronError::ShapeMismatch {
            expected: basis.sites(),
            got: psi.len(),
        });
    }
    let a2 = basis.alpha() * basis.alpha();
    let f: Vec<C> = phi.iter().map(|p| p * a2).collect();
    let w = weyl_checked(basis, &f, leak_tol)?;
    Ok(ProductState {
        state: FockState::product(psi, &w.coherent_vacuum()),
        leakage: w.leakage,
        leakage_flag: w.leakage_flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(x: f64) -> C {
        C::new(x, 0.0)
    }

    fn basis() -> FockBasis {
        FockBasis::new(4, 0.5, 3, 2.0).unwrap()
    }

    fn small_field(b: &FockBasis, amp: f64) -> Vec<C> {
        (0..b.modes())
            .map(|q| C::new(amp * (0.3 + q as f64 * 0.1), -amp * 0.2 * q as f64))
            .collect()
    }

    fn unit(dim: usize, i: usize) -> FockState {
        let mut v = vec![ZERO; dim];
        v[i] = c(1.0);
        FockState::from_amplitudes(v)
    }

    fn binomial(n: usize, k: usize) -> usize {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn basis_enumeration() {
        let b = FockBasis::new(6, 0.1, 4, 2.0).unwrap();
        assert_eq!(b.n_tuples(), binomial(10, 4));
        assert_eq!(b.dim(), 6 * 210);
        assert_eq!(b.tuple(0), &[0u8; 6]);
        for i in 1..b.n_tuples() {
            assert!(b.tuple(i - 1) < b.tuple(i));
            assert_eq!(b.tuple_index(b.tuple(i)), Some(i));
        }
        assert_eq!(b.tuple_index(&[5, 0, 0, 0, 0, 0]), None);
    }

    #[test]
    fn ccr_below_top_shell() {
        let b = basis();
        let l = build_ccr(&b).unwrap();
        let a2 = b.alpha() * b.alpha();
        for k in 0..b.modes() {
            for kp in 0..b.modes() {
                for i in (0..b.dim()).filter(|&i| b.below_top(i)) {
                    let e = unit(b.dim(), i);
                    let lhs = l.annihilators[k]
                        .apply(&l.creators[kp].apply(&e))
                        .sub(&l.creators[kp].apply(&l.annihilators[k].apply(&e)));
                    let expect = if k == kp { e.scaled(c(1.0 / (a2 * b.dk()))) } else { e.scaled(ZERO) };
                    assert!(lhs.sub(&expect).norm() < 1e-12);
                }
            }
        }
        let vac = FockState::with_vacuum(&b, &[c(1.0), ZERO, ZERO, ZERO]);
        assert_eq!(l.number.apply(&vac).norm(), 0.0);
        let one = l.creators[1].apply(&vac).scaled(c(b.alpha() * b.dk().sqrt()));
        assert!((one.norm() - 1.0).abs() < 1e-14);
        assert!(l.number.apply(&one).sub(&one.scaled(c(1.0 / a2))).norm() < 1e-14);
    }

    #[test]
    fn zero_weyl_is_identity_and_inverse_pairs() {
        let b = basis();
        let w0 = weyl(&b, &vec![ZERO; b.modes()]).unwrap();
        let id = DMatrix::<C>::identity(b.n_tuples(), b.n_tuples());
        assert!((&w0.boson - &id).norm() < 1e-14);
        let f = small_field(&b, 0.3);
        let neg: Vec<C> = f.iter().map(|v| -v).collect();
        let w = weyl(&b, &f).unwrap();
        let wn = weyl(&b, &neg).unwrap();
        assert!((&w.boson * &wn.boson - &id).norm() < 1e-10);
        assert!((w.boson.adjoint() * &w.boson - &id).norm() < 1e-10);
    }

    #[test]
    fn weyl_shifts_annihilators() {
        let b = FockBasis::new(4, 0.5, 6, 2.0).unwrap();
        let f = small_field(&b, 0.01);
        let w = weyl(&b, &f).unwrap();
        assert!(!w.leakage_flag);
        let l = build_ccr(&b).unwrap();
        let wd = w.operator.adjoint();
        let a2 = b.alpha() * b.alpha();
        // Low-occupation states keep the truncation error far below the threshold.
        for i in (0..b.dim()).filter(|&i| b.shell(i % b.n_tuples()) <= 2) {
            let e = unit(b.dim(), i);
            for k in 0..b.modes() {
                let lhs = wd.apply(&l.annihilators[k].apply(&w.operator.apply(&e)));
                let rhs = l.annihilators[k].apply(&e);
                let shift = e.scaled(f[k] / a2);
                let diff = lhs.sub(&rhs).sub(&shift).project_below_top(&b);
                assert!(diff.norm() < 1e-8, "mode {k} state {i}: {}", diff.norm());
            }
        }
    }

    #[test]
    fn vacuum_overlap_matches_coherent_formula() {
        let b = basis();
        let f = small_field(&b, 0.05);
        let norm2: f64 = f.iter().map(|v| v.norm_sqr()).sum::<f64>() * b.dk();
        let a2 = b.alpha() * b.alpha();
        let expect = (-norm2 / (2.0 * a2)).exp();
        let got = weyl(&b, &f).unwrap().boson[(0, 0)];
        assert!((got.re - expect).abs() < 1e-6 && got.im.abs() < 1e-6, "{got} vs {expect}");
        // Cross-check against a larger truncation.
        let big = FockBasis::new(4, 0.5, 5, 2.0).unwrap();
        let wide = weyl(&big, &f).unwrap().boson[(0, 0)];
        assert!((wide - got).norm() < 1e-6);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let b = basis();
        let h = froehlich_hamiltonian(&b).unwrap();
        assert!(h.h.is_hermitian());
        assert!(h.h.matrix().hermiticity_defect() <= 1e-12);
        let rebuilt = h
            .kinetic
            .add_scaled(1.0, &h.number)
            .add_scaled(1.0, &h.phi_plus)
            .add_scaled(1.0, &h.phi_minus);
        assert!(rebuilt.matrix().add_scaled(c(-1.0), h.h.matrix()).max_abs() < 1e-14);
    }

    #[test]
    fn decoupled_spectrum_is_a_direct_sum() {
        let b = basis();
        let h = froehlich_hamiltonian(&b).unwrap();
        let free = h.kinetic.add_scaled(1.0, &h.number);
        let mut got: Vec<f64> = SymmetricEigen::new(free.matrix().to_dense())
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        got.sort_by(f64::total_cmp);
        let a = b.spacing();
        let a2 = b.alpha() * b.alpha();
        let mut expect = Vec::new();
        for m in 0..b.sites() {
            let k = 2.0 * PI * m as f64 / (b.sites() as f64 * a);
            let kin = 4.0 / (a * a) * (0.5 * k * a).sin().powi(2);
            for t in 0..b.n_tuples() {
                expect.push(kin + b.shell(t) as f64 / a2);
            }
        }
        expect.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-10, "{g} vs {e}");
        }
    }

    #[test]
    fn coupling_reproduces_classical_potential() {
        // ⟨β, Φ⁺_x + Φ⁻_x β⟩ on a coherent state equals V_φ(x) up to truncation.
        let b = FockBasis::new(4, 0.5, 6, 2.0).unwrap();
        let phi: Vec<C> = small_field(&b, 0.002);
        let ps = pekar_product(&b, &[c(1.0), ZERO, ZERO, ZERO], &phi).unwrap();
        let h = froehlich_hamiltonian(&b).unwrap();
        let coupling = h.phi_plus.add_scaled(1.0, &h.phi_minus).expectation(&ps.state).re;
        let field = Field::new(b.grid(), phi.clone(), Space::Momentum).unwrap();
        let v = crate::fields::potential(&field).unwrap();
        assert!((coupling - v.values()[0].re).abs() < 1e-9, "{coupling} vs {}", v.values()[0].re);
    }

    #[test]
    fn product_state_mode_amplitudes() {
        let b = FockBasis::new(4, 0.5, 6, 2.0).unwrap();
        let phi = small_field(&b, 0.002);
        let zero = pekar_product(&b, &[c(0.5), c(0.5), c(0.5), c(0.5)], &vec![ZERO; 4]).unwrap();
        assert_eq!(zero.state, FockState::with_vacuum(&b, &[c(0.5); 4]));
        let ps = pekar_product(&b, &[c(0.5), c(0.5), c(0.5), c(0.5)], &phi).unwrap();
        assert!((ps.state.norm() - 1.0).abs() < 1e-10);
        assert!(!ps.leakage_flag);
        let l = build_ccr(&b).unwrap();
        for (k, &p) in phi.iter().enumerate() {
            let got = l.annihilators[k].expectation(&ps.state);
            assert!((got - p).norm() < 1e-6, "mode {k}: {got} vs {p}");
        }
    }

    #[test]
    fn evolution_against_dense_exponential() {
        let b = basis();
        let h = froehlich_hamiltonian(&b).unwrap();
        let dense = h.h.matrix().to_dense();
        let eig = SymmetricEigen::new(dense);
        let s0 = pekar_product(&b, &[c(0.5), c(0.5), C::new(0.0, 0.5), c(-0.5)], &small_field(&b, 0.01))
            .unwrap()
            .state;
        let t = 0.3;
        let v = nalgebra::DVector::from_column_slice(s0.amplitudes());
        let coef = eig.eigenvectors.adjoint() * v;
        let ph = nalgebra::DVector::from_iterator(
            coef.len(),
            coef.iter().zip(eig.eigenvalues.iter()).map(|(a, l)| a * C::from_polar(1.0, -l * t)),
        );
        let exact = &eig.eigenvectors * ph;
        let (got, _) = evolve(&h.h, &s0, t).unwrap();
        let err: f64 = got
            .amplitudes()
            .iter()
            .zip(exact.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-8, "error {err}");
        assert!((got.norm() - s0.norm()).abs() < 1e-9);
        let e0 = h.h.expectation(&s0).re;
        let e1 = h.h.expectation(&got).re;
        assert!((e1 - e0).abs() < 1e-8 * e0.abs().max(1.0) * t.max(1.0));
        let (same, _) = evolve(&h.h, &s0, 0.0).unwrap();
        assert_eq!(same, s0);
    }

    #[test]
    fn eigenvector_picks_up_phase() {
        let b = basis();
        let h = froehlich_hamiltonian(&b).unwrap();
        let eig = SymmetricEigen::new(h.h.matrix().to_dense());
        let s = FockState::from_amplitudes(eig.eigenvectors.column(3).iter().cloned().collect());
        let lam = eig.eigenvalues[3];
        let (got, _) = evolve(&h.h, &s, 0.8).unwrap();
        assert!(got.sub(&s.scaled(C::from_polar(1.0, -lam * 0.8))).norm() < 1e-9);
    }

    #[test]
    fn non_hermitian_flag_rejected() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 1, c(1.0))]);
        assert!(FockOperator::new(m.clone(), true).is_err());
        let op = FockOperator::new(m, false).unwrap();
        let s = FockState::from_amplitudes(vec![c(1.0), ZERO]);
        assert!(evolve(&op, &s, 1.0).is_err());
    }
}
