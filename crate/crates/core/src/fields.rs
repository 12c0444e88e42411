//! Coupling quantities between the electron and the classical phonon field.
//!
//! With `ρ = |ψ|²` the two couplings are
//!
//! ```text
//! V_φ(x) = ∫ dk |k|⁻¹ (φ(k) e^{ik·x} + conj(φ(k)) e^{-ik·x})
//! σ_ψ(k) = |k|⁻¹ ∫ dx e^{-ik·x} ρ(x)
//! ```
//!
//! Neither carries a `(2π)` normalization, so `⟨ψ, V_φ ψ⟩ = 2 Re⟨σ_ψ, φ⟩`
//! holds exactly on the grid. The `k = 0` mode is dropped from both.

use std::io::Write;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{PolaronError, Result};
use crate::grid::{norm, transform, Field, NormKind, Space, SpectralGrid};

/// Tolerance on the imaginary residue of a freshly built potential.
pub const POTENTIAL_IMAG_TOL: f64 = 1e-10;

/// Classical phonon amplitude `φ(k)` together with the coupling `α`.
#[derive(Clone, Debug)]
pub struct PhononField {
    amp: Field,
    alpha: f64,
}

impl PhononField {
    pub fn new(amp: Field, alpha: f64) -> Result<Self> {
        amp.require(Space::Momentum)?;
        if !(alpha > 0.0) {
            return Err(PolaronError::InvalidParameter(format!(
                "coupling alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self { amp, alpha })
    }

    pub fn zero(grid: &SpectralGrid, alpha: f64) -> Result<Self> {
        Self::new(grid.zeros(Space::Momentum), alpha)
    }

    pub fn amp(&self) -> &Field {
        &self.amp
    }

    pub fn amp_mut(&mut self) -> &mut Field {
        &mut self.amp
    }

    pub fn into_amp(self) -> Field {
        self.amp
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.amp.clone(), alpha)
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.amp.grid()
    }

    pub fn l2(&self) -> f64 {
        self.amp.l2()
    }

    /// `iφ`, the field whose potential drives `∂_t V_φ`.
    pub fn times_i(&self) -> PhononField {
        PhononField {
            amp: self.amp.scaled(Complex64::new(0.0, 1.0)),
            alpha: self.alpha,
        }
    }
}

/// Electron wave function in position space.
#[derive(Clone, Debug)]
pub struct ElectronField {
    psi: Field,
}

impl ElectronField {
    /// Wraps a position-space field without touching its norm.
    pub fn new(psi: Field) -> Result<Self> {
        psi.require(Space::Position)?;
        Ok(Self { psi })
    }

    /// Wraps and L2-normalizes.
    pub fn normalized(psi: Field) -> Result<Self> {
        psi.require(Space::Position)?;
        if psi.l2() == 0.0 {
            return Err(PolaronError::InvalidParameter(
                "cannot normalize a zero wave function".into(),
            ));
        }
        Ok(Self {
            psi: psi.normalized(),
        })
    }

    pub fn psi(&self) -> &Field {
        &self.psi
    }

    pub fn psi_mut(&mut self) -> &mut Field {
        &mut self.psi
    }

    pub fn into_field(self) -> Field {
        self.psi
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.psi.grid()
    }

    pub fn l2(&self) -> f64 {
        self.psi.l2()
    }
}

/// `V_φ` on the position grid.
///
/// Built from one inverse transform of the Hermitian combination
/// `|k|⁻¹ (φ(k) + conj(φ(-k)))`. The imaginary part of the result is checked
/// against [`POTENTIAL_IMAG_TOL`] and then dropped.
pub fn potential(phi: &Field) -> Result<Field> {
    phi.require(Space::Momentum)?;
    let grid = phi.grid();
    let inv_k = grid.inv_abs_k();
    let vals = phi.values();
    let sym: Vec<Complex64> = (0..grid.len())
        .map(|i| {
            let j = grid.negated_index(i);
            inv_k[i] * (vals[i] + vals[j].conj())
        })
        .collect();
    let mut v = transform(&Field::new(grid, sym, Space::Momentum)?);
    // transform carries (2π)^{-d/2}; the potential has no normalization.
    v.scale_mut(Complex64::new(grid.fourier_factor(), 0.0));
    let scale = v.l2().max(f64::MIN_POSITIVE);
    let residue = v.max_abs_imag();
    // Pointwise residue compared against the L2 size of the potential.
    if residue > POTENTIAL_IMAG_TOL * scale.max(v.max_abs()) {
        return Err(PolaronError::ImaginaryResidue { residue, scale });
    }
    Ok(v.real_field())
}

pub fn potential_from_phonons(phi: &PhononField) -> Result<Field> {
    potential(phi.amp())
}

/// `V_{iφ}`; note `∂_t V_{φ_t} = -α⁻² V_{iφ_t}` along the coupled flow.
pub fn potential_i_phi(phi: &PhononField) -> Result<Field> {
    potential(&phi.amp().scaled(Complex64::new(0.0, 1.0)))
}

/// `σ_ψ(k) = |k|⁻¹ ∫ dx e^{-ik·x} |ψ(x)|²`, zero at `k = 0`.
pub fn sigma(psi: &Field) -> Result<Field> {
    psi.require(Space::Position)?;
    let grid = psi.grid();
    let rho: Vec<Complex64> = psi
        .values()
        .iter()
        .map(|v| Complex64::new(v.norm_sqr(), 0.0))
        .collect();
    let mut rho_k = transform(&Field::new(grid, rho, Space::Position)?);
    let f = grid.fourier_factor();
    rho_k
        .values_mut()
        .iter_mut()
        .zip(grid.inv_abs_k())
        .for_each(|(v, ik)| *v *= f * ik);
    Ok(rho_k)
}

pub fn sigma_from_electron(psi: &ElectronField) -> Result<Field> {
    sigma(psi.psi())
}

/// Applies the real potential `v` pointwise to `psi`.
pub fn apply_potential(v: &Field, psi: &Field) -> Field {
    let mut out = psi.clone();
    out.values_mut()
        .iter_mut()
        .zip(v.values())
        .for_each(|(p, vv)| *p *= vv.re);
    out
}

/// Functional-inequality ratios for one `(φ, ψ)` sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSample {
    pub sample_id: usize,
    /// `‖V_φ‖₆ / ‖φ‖₂`
    pub ratio_v6: f64,
    /// `‖V_φ ψ‖₂ / (‖φ‖₂ ‖ψ‖_{H¹})`
    pub ratio_vpsi: f64,
    /// `‖σ_ψ‖₂ / ‖ψ‖²_{H¹}`
    pub ratio_sigma: f64,
}

/// Ratios for one pair; `None` when a denominator vanishes.
pub fn sample_ratios(sample_id: usize, phi: &Field, psi: &Field) -> Result<Option<RatioSample>> {
    let phi_norm = phi.l2();
    let psi_h1 = norm(psi, NormKind::H1)?;
    if phi_norm == 0.0 || psi_h1 == 0.0 {
        return Ok(None);
    }
    let v = potential(phi)?;
    let v6 = norm(&v, NormKind::Lp(6.0))?;
    let vpsi = apply_potential(&v, psi).l2();
    let s = sigma(psi)?.l2();
    Ok(Some(RatioSample {
        sample_id,
        ratio_v6: v6 / phi_norm,
        ratio_vpsi: vpsi / (phi_norm * psi_h1),
        ratio_sigma: s / (psi_h1 * psi_h1),
    }))
}

#[derive(Debug, Clone)]
pub struct InequalityReport {
    pub samples: Vec<RatioSample>,
    /// Ids of draws skipped because a denominator vanished.
    pub skipped: Vec<usize>,
    pub max_v6: f64,
    pub max_vpsi: f64,
    pub max_sigma: f64,
}

impl InequalityReport {
    fn from_samples(samples: Vec<RatioSample>, skipped: Vec<usize>) -> Self {
        let max = |f: fn(&RatioSample) -> f64| samples.iter().map(f).fold(0.0, f64::max);
        Self {
            max_v6: max(|s| s.ratio_v6),
            max_vpsi: max(|s| s.ratio_vpsi),
            max_sigma: max(|s| s.ratio_sigma),
            samples,
            skipped,
        }
    }

    pub fn all_finite(&self) -> bool {
        [self.max_v6, self.max_vpsi, self.max_sigma]
            .iter()
            .all(|v| v.is_finite())
    }

    /// CSV with columns `sample_id, ratio_v6, ratio_vpsi, ratio_sigma`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sample_id,ratio_v6,ratio_vpsi,ratio_sigma")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.12e}",
                s.sample_id, s.ratio_v6, s.ratio_vpsi, s.ratio_sigma
            )?;
        }
        Ok(())
    }
}

/// Random field generator keyed by lattice mode, so that a refined grid
/// with the same box reuses every coarse-grid coefficient.
///
/// Mode amplitudes are complex Gaussians times `exp(-|k|²/w²)` with `w`
/// log-uniform in `[0.5, 4]`.
pub struct ModeKeyedSampler {
    seed: u64,
}

pub const WIDTH_RANGE: (f64, f64) = (0.5, 4.0);

impl ModeKeyedSampler {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn stream_rng(&self, sample: usize, tag: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((sample as u64) << 4 | tag);
        rng
    }

    /// Envelope width for a sample.
    pub fn width(&self, sample: usize, tag: u64) -> f64 {
        let mut rng = self.stream_rng(sample, tag);
        // Word 0 of the stream is reserved for the width.
        let u = unit_from(rng.next_u64());
        let (lo, hi) = WIDTH_RANGE;
        (lo.ln() + u * (hi.ln() - lo.ln())).exp()
    }

    /// Momentum-space field for `(sample, tag)` on `grid`.
    pub fn momentum_field(&self, grid: &SpectralGrid, sample: usize, tag: u64) -> Field {
        let w = self.width(sample, tag);
        let mut rng = self.stream_rng(sample, tag);
        let values = (0..grid.len())
            .map(|i| {
                let l = grid.lattice_index(i);
                // 4 words per mode after the reserved header block.
                rng.set_word_pos(16 + 4 * mode_key(l) as u128);
                let z = box_muller(unit_from(rng.next_u64()), unit_from(rng.next_u64()));
                let k = grid.wavevector(i);
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                z * (-k2 / (w * w)).exp()
            })
            .collect();
        Field::new(grid, values, Space::Momentum).expect("length matches grid")
    }
}

fn unit_from(x: u64) -> f64 {
    // 53 random bits in (0, 1].
    ((x >> 11) as f64 + 1.0) / (1u64 << 53) as f64
}

fn box_muller(u1: f64, u2: f64) -> Complex64 {
    let r = (-2.0 * u1.ln()).sqrt();
    let t = 2.0 * std::f64::consts::PI * u2;
    Complex64::new(r * t.cos(), r * t.sin()) * std::f64::consts::FRAC_1_SQRT_2
}

fn mode_key(l: [i64; 3]) -> u64 {
    let zz = |m: i64| ((m << 1) ^ (m >> 63)) as u64;
    (zz(l[0]) << 42) | (zz(l[1]) << 21) | zz(l[2])
}

/// Maxima of the three functional-inequality ratios over random draws.
pub fn inequality_report(samples: usize, grid: &SpectralGrid, seed: u64) -> Result<InequalityReport> {
    if samples == 0 {
        return Err(PolaronError::InvalidParameter(
            "inequality report needs at least one sample".into(),
        ));
    }
    let sampler = ModeKeyedSampler::new(seed);
    let results: Vec<Result<(usize, Option<RatioSample>)>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let phi = sampler.momentum_field(grid, s, 0);
            let psi = transform(&sampler.momentum_field(grid, s, 1));
            Ok((s, sample_ratios(s, &phi, &psi)?))
        })
        .collect();
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            (_, Some(s)) => kept.push(s),
            (id, None) => skipped.push(id),
        }
    }
    Ok(InequalityReport::from_samples(kept, skipped))
}

/// Same as [`inequality_report`] over explicit pairs.
pub fn inequality_report_from_pairs(pairs: &[(Field, Field)]) -> Result<InequalityReport> {
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for (id, (phi, psi)) in pairs.iter().enumerate() {
        match sample_ratios(id, phi, psi)? {
            Some(s) => kept.push(s),
            None => skipped.push(id),
        }
    }
    Ok(InequalityReport::from_samples(kept, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    /// Direct O(N²) evaluation of V_φ without any FFT.
    fn direct_potential(phi: &Field) -> Vec<f64> {
        let g = phi.grid();
        let dk = g.mode_volume();
        (0..g.len())
            .map(|xi| {
                let x = g.position(xi);
                let mut acc = Complex64::new(0.0, 0.0);
                for ki in 0..g.len() {
                    let k = g.wavevector(ki);
                    let ik = g.inv_abs_k()[ki];
                    let ph = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
                    let e = Complex64::new(ph.cos(), ph.sin());
                    acc += dk * ik * (phi.values()[ki] * e + phi.values()[ki].conj() * e.conj());
                }
                acc.re
            })
            .collect()
    }

    fn direct_sigma(psi: &Field) -> Vec<Complex64> {
        let g = psi.grid();
        let dx = g.cell_volume();
        (0..g.len())
            .map(|ki| {
                let k = g.wavevector(ki);
                let mut acc = Complex64::new(0.0, 0.0);
                for xi in 0..g.len() {
                    let x = g.position(xi);
                    let ph = -(k[0] * x[0] + k[1] * x[1] + k[2] * x[2]);
                    acc += dx * psi.values()[xi].norm_sqr() * Complex64::new(ph.cos(), ph.sin());
                }
                acc * g.inv_abs_k()[ki]
            })
            .collect()
    }

    #[test]
    fn zero_phonons_give_zero_potential() {
        let g = make_grid(16, 4.0, 3).unwrap();
        let v = potential(&g.zeros(Space::Momentum)).unwrap();
        assert_eq!(v.max_abs(), 0.0);
    }

    #[test]
    fn real_even_phonons_give_real_even_potential() {
        let g = make_grid(16, 6.0, 3).unwrap();
        let phi = g.sample_momentum(|k| c((-(k[0] * k[0] + 2.0 * k[1] * k[1] + 0.5 * k[2] * k[2])).exp()));
        let v = potential(&phi).unwrap();
        for i in 0..g.len() {
            let j = g.negated_index(i);
            assert!((v.values()[i].re - v.values()[j].re).abs() < 1e-12);
        }
        // V_{iφ} is a sine series of an even function.
        let vi = potential(&phi.scaled(Complex64::new(0.0, 1.0))).unwrap();
        assert!(vi.max_abs() < 1e-10 * v.max_abs());
    }

    #[test]
    fn potential_matches_direct_sum() {
        let g = make_grid(32, 7.0, 1).unwrap();
        let phi = g.sample_momentum(|k| {
            Complex64::new((-(k[0] - 0.3).powi(2)).exp(), 0.4 * (-(k[0] * k[0]) / 3.0).exp() * k[0])
        });
        let fast = potential(&phi).unwrap();
        let slow = direct_potential(&phi);
        for (a, b) in fast.values().iter().zip(&slow) {
            assert!((a.re - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn sigma_matches_direct_sum_and_is_hermitian() {
        let g = make_grid(8, 5.0, 3).unwrap();
        let psi = g.sample_position(|x| {
            Complex64::new((-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp(), 0.3 * x[1])
        });
        let s = sigma(&psi).unwrap();
        let d = direct_sigma(&psi);
        for (a, b) in s.values().iter().zip(&d) {
            assert!((a - b).norm() < 1e-12 * (1.0 + b.norm()));
        }
        for i in 0..g.len() {
            let j = g.negated_index(i);
            assert!((s.values()[i] - s.values()[j].conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn sigma_is_gauge_invariant() {
        let g = make_grid(32, 10.0, 1).unwrap();
        let psi = g.sample_position(|x| c((-(x[0] - 0.5).powi(2)).exp()));
        let kicked = g.sample_position(|x| c((-(x[0] - 0.5).powi(2)).exp()) * Complex64::from_polar(1.0, 1.7 * x[0]));
        let d = sigma(&psi).unwrap().sub(&sigma(&kicked).unwrap()).max_abs();
        assert!(d < 1e-12);
    }

    #[test]
    fn sigma_small_k_limit_is_the_norm() {
        let g = make_grid(64, 200.0, 1).unwrap();
        let psi = ElectronField::normalized(g.sample_position(|x| c((-(x[0] * x[0]) / 2.0).exp()))).unwrap();
        let s = sigma_from_electron(&psi).unwrap();
        // Smallest nonzero mode is index 1.
        let k1 = g.dk();
        let val = k1 * s.values()[1].re;
        assert!((val - 1.0).abs() < 1e-3, "|k|σ(k) = {val}");
    }

    #[test]
    fn sigma_of_gaussian_matches_closed_form() {
        // ψ = (π s²)^{-3/4} e^{-x²/(2s²)} gives ρ̂(k) = e^{-k² s² / 4} without 2π factors.
        let s = 1.0;
        let g = make_grid(40, 10.0, 3).unwrap();
        let norm = (PI * s * s).powf(-0.75);
        let psi = g.sample_position(|x| c(norm * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (2.0 * s * s)).exp()));
        let sg = sigma(&psi).unwrap();
        for i in 0..g.len() {
            let k = g.wavevector(i);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            let expect = g.inv_abs_k()[i] * (-k2 * s * s / 4.0).exp();
            assert!((sg.values()[i].re - expect).abs() < 1e-6, "mode {i}");
            assert!(sg.values()[i].im.abs() < 1e-10);
        }
    }

    #[test]
    fn linearity() {
        let g = make_grid(16, 5.0, 3).unwrap();
        let sampler = ModeKeyedSampler::new(3);
        let a = sampler.momentum_field(&g, 0, 0);
        let b = sampler.momentum_field(&g, 1, 0);
        let (ca, cb) = (0.7, -1.9);
        let lhs = potential(&a.scaled(c(ca)).add_scaled(c(cb), &b)).unwrap();
        let rhs = potential(&a).unwrap().scaled(c(ca)).add_scaled(c(cb), &potential(&b).unwrap());
        assert!(lhs.sub(&rhs).l2() < 1e-12 * rhs.l2());
    }

    #[test]
    fn coulomb_phonon_gives_periodic_coulomb_potential() {
        // φ(k) = -(4π²)⁻¹ |k|⁻¹ in 3D is minus the periodic Coulomb kernel
        // without its k = 0 mode: 1/r - ξ/L + (2π/3L³) r² + O(r⁴) near 0.
        const MADELUNG_SC: f64 = 2.837297479;
        let g = make_grid(64, 32.0, 3).unwrap();
        let phi = g.sample_momentum(|k| {
            let kk = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
            if kk > 0.0 { c(-1.0 / (4.0 * PI * PI * kk)) } else { c(0.0) }
        });
        let v = potential(&phi).unwrap();
        let l = g.box_length();
        for r in [2.0, 3.0, 4.0, 6.0, 8.0] {
            let idx = g.flat_index([(r / g.dx()) as i64, 0, 0]);
            let expect = -1.0 / r + MADELUNG_SC / l - 2.0 * PI * r * r / (3.0 * l.powi(3));
            let got = v.values()[idx].re;
            // Residual is the cube cutoff of the k sum, decaying like 1/r².
            assert!((got - expect).abs() < 0.06 / (r * r), "r={r}: {got} vs {expect}");
        }
    }

    #[test]
    fn degenerate_sample_is_skipped() {
        let g = make_grid(16, 4.0, 1).unwrap();
        let psi = g.sample_position(|x| c((-(x[0] * x[0])).exp()));
        let pairs = vec![
            (g.zeros(Space::Momentum), psi.clone()),
            (ModeKeyedSampler::new(1).momentum_field(&g, 0, 0), psi),
        ];
        let rep = inequality_report_from_pairs(&pairs).unwrap();
        assert_eq!(rep.skipped, vec![0]);
        assert_eq!(rep.samples.len(), 1);
        assert!(rep.all_finite());
    }

    #[test]
    fn refined_sampler_reuses_coarse_modes() {
        let s = ModeKeyedSampler::new(11);
        let g1 = make_grid(8, 4.0, 3).unwrap();
        let g2 = make_grid(16, 4.0, 3).unwrap();
        let f1 = s.momentum_field(&g1, 5, 1);
        let f2 = s.momentum_field(&g2, 5, 1);
        for i in 0..g1.len() {
            let l = g1.lattice_index(i);
            if l.iter().any(|&m| m == -4) {
                continue;
            }
            assert_eq!(f1.values()[i], f2.values()[g2.flat_index(l)]);
        }
    }

    #[test]
    fn gaussian_ratios_match_direct_quadrature() {
        let g = make_grid(64, 12.0, 1).unwrap();
        let phi = g.sample_momentum(|k| c((-(k[0] * k[0])).exp()));
        let psi = g.sample_position(|x| c((-(x[0] * x[0]) / 2.0).exp()));
        let r = sample_ratios(0, &phi, &psi).unwrap().unwrap();
        let v = direct_potential(&phi);
        let dx = g.dx();
        let v6 = (v.iter().map(|x| x.powi(6)).sum::<f64>() * dx).powf(1.0 / 6.0);
        let phin = phi.l2();
        assert!((r.ratio_v6 - v6 / phin).abs() < 1e-8 * (v6 / phin));
        let s = direct_sigma(&psi);
        let sn = (s.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.dk()).sqrt();
        // H¹ by direct quadrature: ψ' = -x ψ for this Gaussian.
        let h1 = (psi.values().iter().zip(0..g.len()).map(|(p, i)| {
            let x = g.position(i)[0];
            p.norm_sqr() * (1.0 + x * x)
        }).sum::<f64>() * dx).sqrt();
        assert!((r.ratio_sigma - sn / (h1 * h1)).abs() < 1e-8 * r.ratio_sigma);
        let vpsi = (v.iter().zip(psi.values()).map(|(a, p)| a * a * p.norm_sqr()).sum::<f64>() * dx).sqrt();
        assert!((r.ratio_vpsi - vpsi / (phin * h1)).abs() < 1e-8 * r.ratio_vpsi);
    }
}
