//! Lanczos propagation `e^{-iHt}v` and lowest eigenpairs for Hermitian
//! operators given as matrix-vector products.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{PolaronError, Result};

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn nrm(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    /// Bound on the local error estimate per substep, relative to `‖v‖`.
    pub tol: f64,
    pub max_dim: usize,
    /// Give up after this many substep halvings in a row.
    pub max_halvings: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_dim: 40,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovOutcome {
    pub state: Vec<C>,
    pub substeps: usize,
    pub halvings: usize,
    /// Sum of the accepted local error estimates.
    pub error_estimate: f64,
}

/// Orthonormal Lanczos basis with full reorthogonalization.
struct Lanczos {
    basis: Vec<Vec<C>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// `β_m`, the coupling to the first vector outside the basis; zero on an
    /// invariant subspace.
    tail: f64,
}

fn lanczos<F: Fn(&[C], &mut [C])>(apply: &F, v: &[C], max_dim: usize) -> Lanczos {
    let n = v.len();
    let v0 = nrm(v);
    let mut basis = vec![v.iter().map(|x| x / v0).collect::<Vec<C>>()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut w = vec![ZERO; n];
    let scale_floor = 1e-13;
    let mut h_scale: f64 = 0.0;
    loop {
        let q = basis.last().expect("nonempty basis");
        apply(q, &mut w);
        let a = dot(q, &w).re;
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
            }
        }
        let bnext = nrm(&w);
        h_scale = h_scale.max(a.abs()).max(bnext);
        if bnext <= scale_floor * h_scale.max(1.0) || basis.len() == n {
            return Lanczos {
                basis,
                alpha,
                beta,
                tail: 0.0,
            };
        }
        if basis.len() == max_dim {
            return Lanczos {
                basis,
                alpha,
                beta,
                tail: bnext,
            };
        }
        beta.push(bnext);
        basis.push(w.iter().map(|x| x / bnext).collect());
    }
}

fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    SymmetricEigen::new(t)
}

/// Coefficients of `e^{-iTτ} e₁` in the Lanczos basis.
fn exp_coeffs(eig: &SymmetricEigen<f64, nalgebra::Dyn>, tau: f64) -> DVector<C> {
    let m = eig.eigenvalues.len();
    let mut y = DVector::<C>::zeros(m);
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let w = C::from_polar(eig.eigenvectors[(0, j)], -lam * tau);
        for i in 0..m {
            y[i] += w * eig.eigenvectors[(i, j)];
        }
    }
    y
}

/// `e^{-iHt}v` for Hermitian `H`, with adaptive substeps so that each
/// accepted substep has `β_m |y_m| ≤ tol·‖v‖`.
pub fn expm_hermitian<F: Fn(&[C], &mut [C])>(
    apply: F,
    v: &[C],
    t: f64,
    opts: &KrylovOptions,
) -> Result<KrylovOutcome> {
    if !t.is_finite() {
        return Err(PolaronError::InvalidParameter(format!("propagation time {t}")));
    }
    let mut state = v.to_vec();
    let norm0 = nrm(v);
    let mut out = KrylovOutcome {
        state: Vec::new(),
        substeps: 0,
        halvings: 0,
        error_estimate: 0.0,
    };
    if t == 0.0 || norm0 == 0.0 {
        out.state = state;
        return Ok(out);
    }
    let mut done = 0.0;
    let mut tau = t;
    while (t - done).abs() > 1e-15 * t.abs() {
        if (tau.abs()) > (t - done).abs() {
            tau = t - done;
        }
        let lz = lanczos(&apply, &state, opts.max_dim);
        let eig = tridiagonal_eigen(&lz.alpha, &lz.beta);
        let mut streak = 0;
        loop {
            let y = exp_coeffs(&eig, tau);
            let est = lz.tail * y[y.len() - 1].norm();
            if est <= opts.tol {
                let s = nrm(&state);
                let mut next = vec![ZERO; state.len()];
                for (q, c) in lz.basis.iter().zip(y.iter()) {
                    next.iter_mut().zip(q).for_each(|(o, qi)| *o += c * s * qi);
                }
                state = next;
                done += tau;
                out.substeps += 1;
                out.error_estimate += est * s;
                if streak == 0 && lz.tail > 0.0 {
                    tau *= 1.5;
                }
                break;
            }
            tau *= 0.5;
            streak += 1;
            out.halvings += 1;
            if streak > opts.max_halvings {
                return Err(PolaronError::Krylov(format!(
                    "no acceptable substep after {streak} halvings (estimate {est:.3e})"
                )));
            }
        }
        if !state.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
            return Err(PolaronError::NonFinite("Krylov propagation".into()));
        }
    }
    out.state = state;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowestEigen {
    pub value: f64,
    pub vector: Vec<C>,
    pub residual: f64,
    pub restarts: usize,
}

/// Lowest eigenpair of a Hermitian operator by restarted Lanczos from
/// `start`, to residual `‖Hx - λx‖ ≤ tol` for unit `x`.
pub fn lowest_eigen<F: Fn(&[C], &mut [C])>(
    apply: F,
    start: &[C],
    tol: f64,
    max_restarts: usize,
) -> Result<LowestEigen> {
    let n = start.len();
    let s0 = nrm(start);
    if s0 == 0.0 {
        return Err(PolaronError::InvalidParameter("zero Lanczos start vector".into()));
    }
    let mut x: Vec<C> = start.iter().map(|v| v / s0).collect();
    let mut hx = vec![ZERO; n];
    let mut residual = f64::INFINITY;
    for restart in 0..=max_restarts {
        let lz = lanczos(&apply, &x, 80.min(n));
        let eig = tridiagonal_eigen(&lz.alpha, &lz.beta);
        let j = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
            .expect("nonempty tridiagonal");
        let value = eig.eigenvalues[j];
        let mut next = vec![ZERO; n];
        for (i, q) in lz.basis.iter().enumerate() {
            let c = eig.eigenvectors[(i, j)];
            next.iter_mut().zip(q).for_each(|(o, qi)| *o += qi * c);
        }
        let s = nrm(&next);
        x = next.iter().map(|v| v / s).collect();
        apply(&x, &mut hx);
        residual = hx
            .iter()
            .zip(&x)
            .map(|(h, xi)| (h - xi * value).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if residual <= tol {
            return Ok(LowestEigen {
                value,
                vector: x,
                residual,
                restarts: restart,
            });
        }
    }
    Err(PolaronError::EigenNotConverged {
        iterations: max_restarts,
        residual,
    })
}
