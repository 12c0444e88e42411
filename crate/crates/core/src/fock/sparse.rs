//! Compressed-sparse-row complex matrices.

use num_complex::Complex64;

type C = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C>,
}

impl CsrMatrix {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed
    /// and exact zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; dim + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside {dim}x{dim}");
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self {
            dim,
            indptr,
            indices,
            values,
        };
        m.prune();
        m
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![C::new(1.0, 0.0); dim])
    }

    pub fn diagonal(d: &[C]) -> Self {
        Self::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    fn prune(&mut self) {
        let mut indptr = vec![0; self.dim + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.dim {
            for p in self.indptr[r]..self.indptr[r + 1] {
                if self.values[p] != C::new(0.0, 0.0) {
                    indices.push(self.indices[p]);
                    values.push(self.values[p]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |p| (r, self.indices[p], self.values[p]))
        })
    }

    pub fn matvec(&self, x: &[C], out: &mut [C]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = C::new(0.0, 0.0);
            for p in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            *o = acc;
        }
    }

    pub fn apply(&self, x: &[C]) -> Vec<C> {
        let mut out = vec![C::new(0.0, 0.0); self.dim];
        self.matvec(x, &mut out);
        out
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    pub fn scaled(&self, s: C) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m.prune();
        m
    }

    /// `self + s·other`
    pub fn add_scaled(&self, s: C, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_triplets(
            self.dim,
            self.triplets()
                .chain(other.triplets().map(|(r, c, v)| (r, c, s * v)))
                .collect(),
        )
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `max |A - A†|` relative to `max |A|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.add_scaled(C::new(-1.0, 0.0), &self.adjoint()).max_abs();
        let s = self.max_abs();
        if s == 0.0 {
            0.0
        } else {
            d / s
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<C> {
        let mut m = nalgebra::DMatrix::<C>::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let m = CsrMatrix::from_triplets(
            3,
            vec![(0, 1, c(1.0, 0.0)), (0, 1, c(2.0, 1.0)), (2, 2, c(0.0, 0.0)), (1, 0, c(0.0, 1.0))],
        );
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.apply(&[c(0.0, 0.0), c(1.0, 0.0), c(5.0, 0.0)]), vec![c(3.0, 1.0), c(0.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn hermitian_detection() {
        let h = CsrMatrix::from_triplets(2, vec![(0, 1, c(1.0, 2.0)), (1, 0, c(1.0, -2.0)), (0, 0, c(3.0, 0.0))]);
        assert_eq!(h.hermiticity_defect(), 0.0);
        let a = CsrMatrix::from_triplets(2, vec![(0, 1, c(1.0, 0.0))]);
        assert!(a.hermiticity_defect() > 0.5);
    }

    proptest! {
        #[test]
        fn adjoint_matches_inner_products(entries in proptest::collection::vec((0usize..5, 0usize..5, -1.0f64..1.0, -1.0f64..1.0), 1..20),
                                          x in proptest::collection::vec(-1.0f64..1.0, 10),
                                          y in proptest::collection::vec(-1.0f64..1.0, 10)) {
            let m = CsrMatrix::from_triplets(5, entries.iter().map(|&(r, cc, a, b)| (r, cc, c(a, b))).collect());
            let xv: Vec<C> = x.chunks(2).map(|p| c(p[0], p[1])).collect();
            let yv: Vec<C> = y.chunks(2).map(|p| c(p[0], p[1])).collect();
            let mx = m.apply(&xv);
            let my = m.adjoint().apply(&yv);
            let lhs: C = yv.iter().zip(&mx).map(|(a, b)| a.conj() * b).sum();
            let rhs: C = my.iter().zip(&xv).map(|(a, b)| a.conj() * b).sum();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
