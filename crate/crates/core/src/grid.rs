//! Periodic-box spectral discretization.
//!
//! A [`SpectralGrid`] is a cubic box of side `L` with `N` points per axis in
//! one or three dimensions. Position samples sit at `x_j = j·dx` taken modulo
//! `L` into `[-L/2, L/2)`, so the origin is grid point zero and plain FFT
//! ordering needs no shifts. The momentum lattice is `2πm/L` with
//! `m ∈ {-N/2, …, N/2-1}`, stored in FFT order.
//!
//! The continuum Fourier convention is
//!
//! ```text
//! f̂(k) = (2π)^{-d/2} ∫ dx e^{-ik·x} f(x),   f(x) = (2π)^{-d/2} ∫ dk e^{ik·x} f̂(k)
//! ```
//!
//! realized with quadrature weights `dx^d` and `dk^d`, which makes the
//! discrete transform exactly unitary between the two weighted inner products.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{PolaronError, Result};

/// Kinetic symbol used for `-Δ` in momentum space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dispersion {
    /// `|k|²`, the exact spectral Laplacian.
    #[default]
    Spectral,
    /// `Σ_axes (4/dx²) sin²(k dx / 2)`, the nearest-neighbour ring stencil.
    NearestNeighbor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Position,
    Momentum,
}

impl Space {
    fn name(self) -> &'static str {
        match self {
            Space::Position => "position",
            Space::Momentum => "momentum",
        }
    }

    pub fn flipped(self) -> Space {
        match self {
            Space::Position => Space::Momentum,
            Space::Momentum => Space::Position,
        }
    }
}

struct GridInner {
    dims: usize,
    n: usize,
    box_length: f64,
    dispersion: Dispersion,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kinetic: Vec<f64>,
    inv_abs_k: Vec<f64>,
}

/// Cubic periodic box with paired position/momentum representations.
///
/// Cheap to clone; the FFT plans and the momentum tables are shared.
#[derive(Clone)]
pub struct SpectralGrid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("dims", &self.inner.dims)
            .field("n", &self.inner.n)
            .field("box_length", &self.inner.box_length)
            .field("dispersion", &self.inner.dispersion)
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.dims == other.inner.dims
                && self.inner.n == other.inner.n
                && self.inner.box_length == other.inner.box_length
                && self.inner.dispersion == other.inner.dispersion)
    }
}

/// Builds a grid with the spectral kinetic symbol.
pub fn make_grid(points_per_axis: usize, box_length: f64, dims: usize) -> Result<SpectralGrid> {
    SpectralGrid::new(points_per_axis, box_length, dims, Dispersion::Spectral)
}

impl SpectralGrid {
    pub fn new(
        points_per_axis: usize,
        box_length: f64,
        dims: usize,
        dispersion: Dispersion,
    ) -> Result<Self> {
        if points_per_axis < 2 || points_per_axis % 2 != 0 {
            return Err(PolaronError::InvalidGrid(format!(
                "points per axis must be even and at least 2, got {points_per_axis}"
            )));
        }
        if !(box_length > 0.0) || !box_length.is_finite() {
            return Err(PolaronError::InvalidGrid(format!(
                "box length must be positive, got {box_length}"
            )));
        }
        if dims != 1 && dims != 3 {
            return Err(PolaronError::InvalidGrid(format!(
                "only 1 or 3 dimensions are supported, got {dims}"
            )));
        }
        let n = points_per_axis;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);

        let dk = 2.0 * std::f64::consts::PI / box_length;
        let dx = box_length / n as f64;
        let axis_k: Vec<f64> = (0..n).map(|i| dk * signed_index(i, n) as f64).collect();
        let axis_kin: Vec<f64> = axis_k
            .iter()
            .map(|&k| match dispersion {
                Dispersion::Spectral => k * k,
                Dispersion::NearestNeighbor => {
                    let s = (0.5 * k * dx).sin();
                    4.0 * s * s / (dx * dx)
                }
            })
            .collect();
        let total = n.pow(dims as u32);
        let mut kinetic = Vec::with_capacity(total);
        let mut inv_abs_k = Vec::with_capacity(total);
        for flat in 0..total {
            let idx = unflatten(flat, n, dims);
            let mut k2 = 0.0;
            let mut kin = 0.0;
            for &i in &idx[..dims] {
                k2 += axis_k[i] * axis_k[i];
                kin += axis_kin[i];
            }
            kinetic.push(kin);
            inv_abs_k.push(if k2 > 0.0 { 1.0 / k2.sqrt() } else { 0.0 });
        }
        Ok(Self {
            inner: Arc::new(GridInner {
                dims,
                n,
                box_length,
                dispersion,
                fwd,
                inv,
                kinetic,
                inv_abs_k,
            }),
        })
    }

    pub fn dims(&self) -> usize {
        self.inner.dims
    }

    pub fn points_per_axis(&self) -> usize {
        self.inner.n
    }

    pub fn box_length(&self) -> f64 {
        self.inner.box_length
    }

    pub fn dispersion(&self) -> Dispersion {
        self.inner.dispersion
    }

    pub fn dk(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.inner.box_length
    }

    pub fn dx(&self) -> f64 {
        self.inner.box_length / self.inner.n as f64
    }

    /// Total number of grid points, `N^d`.
    pub fn len(&self) -> usize {
        self.inner.kinetic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight `dx^d`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.inner.dims as i32)
    }

    /// Quadrature weight `dk^d`.
    pub fn mode_volume(&self) -> f64 {
        self.dk().powi(self.inner.dims as i32)
    }

    /// `(2π)^{d/2}`.
    pub fn fourier_factor(&self) -> f64 {
        (2.0 * std::f64::consts::PI).powf(self.inner.dims as f64 / 2.0)
    }

    /// Highest resolved wavenumber `πN/L`.
    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI * self.inner.n as f64 / self.inner.box_length
    }

    /// Momentum lattice along one axis, in FFT order.
    pub fn momentum_axis(&self) -> Vec<f64> {
        let dk = self.dk();
        (0..self.inner.n)
            .map(|i| dk * signed_index(i, self.inner.n) as f64)
            .collect()
    }

    /// Position samples along one axis, in FFT order (`[-L/2, L/2)` wrapped).
    pub fn position_axis(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.inner.n)
            .map(|i| dx * signed_index(i, self.inner.n) as f64)
            .collect()
    }

    /// Per-axis signed lattice indices of a flat index (unused axes are zero).
    pub fn lattice_index(&self, flat: usize) -> [i64; 3] {
        let idx = unflatten(flat, self.inner.n, self.inner.dims);
        let mut out = [0i64; 3];
        for a in 0..self.inner.dims {
            out[a] = signed_index(idx[a], self.inner.n);
        }
        out
    }

    /// Flat index of a signed lattice index (taken modulo `N`).
    pub fn flat_index(&self, lattice: [i64; 3]) -> usize {
        let n = self.inner.n as i64;
        let mut flat = 0usize;
        for &l in &lattice[..self.inner.dims] {
            flat = flat * self.inner.n + l.rem_euclid(n) as usize;
        }
        flat
    }

    /// Flat index of the mode `-k` for the mode at `flat`.
    pub fn negated_index(&self, flat: usize) -> usize {
        let l = self.lattice_index(flat);
        self.flat_index([-l[0], -l[1], -l[2]])
    }

    pub fn position(&self, flat: usize) -> [f64; 3] {
        let l = self.lattice_index(flat);
        let dx = self.dx();
        [l[0] as f64 * dx, l[1] as f64 * dx, l[2] as f64 * dx]
    }

    pub fn wavevector(&self, flat: usize) -> [f64; 3] {
        let l = self.lattice_index(flat);
        let dk = self.dk();
        [l[0] as f64 * dk, l[1] as f64 * dk, l[2] as f64 * dk]
    }

    /// Kinetic symbol per momentum mode (flat, FFT order).
    pub fn kinetic_symbol(&self) -> &[f64] {
        &self.inner.kinetic
    }

    /// `|k|^{-1}` per mode with the `k = 0` entry set to zero.
    pub fn inv_abs_k(&self) -> &[f64] {
        &self.inner.inv_abs_k
    }

    /// Largest kinetic symbol value, a bound on `‖-Δ‖`.
    pub fn kinetic_max(&self) -> f64 {
        self.inner.kinetic.iter().cloned().fold(0.0, f64::max)
    }

    pub fn zeros(&self, space: Space) -> Field {
        Field {
            grid: self.clone(),
            values: vec![Complex64::new(0.0, 0.0); self.len()],
            space,
        }
    }

    /// Samples `f` at every position grid point.
    pub fn sample_position<F: Fn([f64; 3]) -> Complex64>(&self, f: F) -> Field {
        let values = (0..self.len()).map(|i| f(self.position(i))).collect();
        Field {
            grid: self.clone(),
            values,
            space: Space::Position,
        }
    }

    /// Samples `f` at every momentum lattice point.
    pub fn sample_momentum<F: Fn([f64; 3]) -> Complex64>(&self, f: F) -> Field {
        let values = (0..self.len()).map(|i| f(self.wavevector(i))).collect();
        Field {
            grid: self.clone(),
            values,
            space: Space::Momentum,
        }
    }

    /// Unnormalized forward DFT (`e^{-ik·x}`) over all axes, in place.
    pub fn dft_forward(&self, data: &mut [Complex64]) {
        self.dft(data, &self.inner.fwd);
    }

    /// Unnormalized inverse DFT (`e^{+ik·x}`) over all axes, in place.
    pub fn dft_inverse(&self, data: &mut [Complex64]) {
        self.dft(data, &self.inner.inv);
    }

    fn dft(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "buffer length does not match grid");
        let n = self.inner.n;
        // Last axis is contiguous.
        plan.process(data);
        if self.inner.dims == 1 {
            return;
        }
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // Middle axis: stride n within each slab.
        for slab in 0..n {
            let base = slab * n * n;
            for col in 0..n {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[base + j * n + col];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * n + col] = *v;
                }
            }
        }
        // Leading axis: stride n².
        let stride = n * n;
        for off in 0..stride {
            for (j, v) in line.iter_mut().enumerate() {
                *v = data[off + j * stride];
            }
            plan.process_with_scratch(&mut line, &mut scratch);
            for (j, v) in line.iter().enumerate() {
                data[off + j * stride] = *v;
            }
        }
    }
}

fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn unflatten(flat: usize, n: usize, dims: usize) -> [usize; 3] {
    match dims {
        1 => [flat, 0, 0],
        _ => [flat / (n * n), (flat / n) % n, flat % n],
    }
}

/// Complex samples on a grid, tagged with the representation they live in.
#[derive(Clone, Debug)]
pub struct Field {
    grid: SpectralGrid,
    values: Vec<Complex64>,
    space: Space,
}

impl Field {
    pub fn new(grid: &SpectralGrid, values: Vec<Complex64>, space: Space) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(PolaronError::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            space,
        })
    }

    pub fn from_real(grid: &SpectralGrid, values: &[f64], space: Space) -> Result<Self> {
        Self::new(
            grid,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            space,
        )
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Quadrature weight of the field's representation.
    pub fn measure(&self) -> f64 {
        match self.space {
            Space::Position => self.grid.cell_volume(),
            Space::Momentum => self.grid.mode_volume(),
        }
    }

    pub fn require(&self, space: Space) -> Result<()> {
        if self.space == space {
            Ok(())
        } else {
            Err(PolaronError::WrongSpace {
                required: space.name(),
                found: self.space.name(),
            })
        }
    }

    /// Weighted inner product `⟨self, other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &Field) -> Complex64 {
        debug_assert_eq!(self.space, other.space);
        self.measure()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.conj() * b)
                .sum::<Complex64>()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.measure() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn l2(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, c: Complex64) -> Field {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn scale_mut(&mut self, c: Complex64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, c: Complex64, other: &Field) -> Field {
        debug_assert_eq!(self.space, other.space);
        let mut out = self.clone();
        out.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(a, b)| *a += c * b);
        out
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.add_scaled(Complex64::new(-1.0, 0.0), other)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(a, b)| *a *= b);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Real part as a plain vector.
    pub fn real_part(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    /// Copy with the imaginary parts dropped.
    pub fn real_field(&self) -> Field {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| v.im = 0.0);
        out
    }

    /// L2-normalized copy; zero fields are returned unchanged.
    pub fn normalized(&self) -> Field {
        let n = self.l2();
        if n > 0.0 {
            self.scaled(Complex64::new(1.0 / n, 0.0))
        } else {
            self.clone()
        }
    }
}

/// Continuum-normalized Fourier transform; flips the representation tag.
pub fn transform(f: &Field) -> Field {
    let grid = f.grid();
    let mut values = f.values.clone();
    let scale = match f.space {
        Space::Position => {
            grid.dft_forward(&mut values);
            grid.cell_volume() / grid.fourier_factor()
        }
        Space::Momentum => {
            grid.dft_inverse(&mut values);
            grid.mode_volume() / grid.fourier_factor()
        }
    };
    values.iter_mut().for_each(|v| *v *= scale);
    Field {
        grid: grid.clone(),
        values,
        space: f.space.flipped(),
    }
}

/// Norm selector for [`norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L2,
    Lp(f64),
    /// `(‖f‖₂² + ‖∇f‖₂²)^{1/2}` with the gradient applied spectrally.
    H1,
}

/// Quadrature approximation of a continuum norm.
///
/// `Lp` norms use the measure of the field's own representation. `H1`
/// requires a position-space field and uses the grid's kinetic symbol, which
/// is `|k|²` on spectral grids.
pub fn norm(f: &Field, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::L2 => Ok(f.l2()),
        NormKind::Lp(p) => {
            if !(p > 0.0) || !p.is_finite() {
                return Err(PolaronError::UnsupportedNorm(p));
            }
            let sum: f64 = f.values.iter().map(|v| v.norm().powf(p)).sum();
            Ok((f.measure() * sum).powf(1.0 / p))
        }
        NormKind::H1 => {
            f.require(Space::Position)?;
            let fk = transform(f);
            let grid = f.grid();
            let grad2: f64 = fk
                .values
                .iter()
                .zip(grid.kinetic_symbol())
                .map(|(v, k2)| k2 * v.norm_sqr())
                .sum::<f64>()
                * grid.mode_volume();
            Ok((f.norm_sqr() + grad2).sqrt())
        }
    }
}

/// `⟨f, -Δ f⟩` for a position-space field.
pub fn kinetic_energy(f: &Field) -> Result<f64> {
    f.require(Space::Position)?;
    let fk = transform(f);
    Ok(fk
        .values
        .iter()
        .zip(f.grid().kinetic_symbol())
        .map(|(v, k2)| k2 * v.norm_sqr())
        .sum::<f64>()
        * f.grid().mode_volume())
}

/// Applies `-Δ` to a position-space field.
pub fn apply_laplacian(f: &Field) -> Field {
    let mut fk = transform(f);
    fk.values
        .iter_mut()
        .zip(f.grid().kinetic_symbol())
        .for_each(|(v, k2)| *v *= k2);
    transform(&fk)
}
