use super::{CMatrix, C64};

/// Real square matrix in compressed sparse row form.
///
/// Both engines drive the dynamics with real symmetric generators (the
/// tridiagonal one-particle symbol and the Jordan-Wigner Fock operators),
/// so complex state matrices are only ever multiplied by real sparse ones.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseReal {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseReal {
    /// Duplicate entries are summed; explicit zeros are dropped.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "entry ({i}, {j}) outside a {n}x{n} matrix");
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        merged.retain(|t| t.2 != 0.0);
        let mut row_ptr = vec![0; n + 1];
        for &(i, _, _) in &merged {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx: merged.iter().map(|t| t.1).collect(),
            values: merged.iter().map(|t| t.2).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        Self::from_triplets(
            diag.len(),
            diag.iter().enumerate().map(|(i, &d)| (i, i, d)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[row.clone()]
            .iter()
            .position(|&c| c == j)
            .map_or(0.0, |k| self.values[row.start + k])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    /// Maximum absolute row sum, an upper bound on the spectral norm of a
    /// symmetric matrix.
    pub fn row_sum_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                self.values[self.row_ptr[i]..self.row_ptr[i + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.triplets()
            .all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol)
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += C64::new(v, 0.0);
        }
        m
    }

    /// `sum_j c_j A_j` over operators of one dimension.
    pub fn linear_combination(operators: &[SparseReal], coeffs: &[f64]) -> Self {
        let n = operators.first().map_or(0, SparseReal::dim);
        let triplets = operators
            .iter()
            .zip(coeffs)
            .filter(|(_, &c)| c != 0.0)
            .flat_map(|(op, &c)| op.triplets().map(move |(i, j, v)| (i, j, c * v)))
            .collect();
        Self::from_triplets(n, triplets)
    }

    /// `y += coeff * self * x` for column-major dense `x`, `y`.
    pub fn mul_add_dense(&self, coeff: C64, x: &CMatrix, y: &mut CMatrix) {
        self.apply_dense(coeff, x, y, |y, v| *y += v);
    }

    /// `y = coeff * self * x`.
    pub fn mul_dense_into(&self, coeff: C64, x: &CMatrix, y: &mut CMatrix) {
        self.apply_dense(coeff, x, y, |y, v| *y = v);
    }

    fn apply_dense(&self, coeff: C64, x: &CMatrix, y: &mut CMatrix, write: impl Fn(&mut C64, C64)) {
        debug_assert_eq!(x.nrows(), self.n);
        debug_assert_eq!(x.shape(), y.shape());
        let n = self.n;
        let xs = x.as_slice();
        let ys = y.as_mut_slice();
        for (xcol, ycol) in xs.chunks_exact(n).zip(ys.chunks_exact_mut(n)) {
            for (i, yi) in ycol.iter_mut().enumerate() {
                let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
                let (mut re, mut im) = (0.0, 0.0);
                for (&j, &v) in self.col_idx[lo..hi].iter().zip(&self.values[lo..hi]) {
                    let z = xcol[j];
                    re += v * z.re;
                    im += v * z.im;
                }
                write(yi, coeff * C64::new(re, im));
            }
        }
    }

    /// `y = coeff * x * self` for symmetric `self`; column `j` of the product
    /// is a combination of whole columns of `x`, so the inner loop is a
    /// contiguous axpy.
    pub fn right_mul_symmetric_into(&self, coeff: C64, x: &CMatrix, y: &mut CMatrix) {
        debug_assert_eq!(x.ncols(), self.n);
        debug_assert_eq!(x.shape(), y.shape());
        let m = x.nrows();
        let xs = x.as_slice();
        for (j, ycol) in y.as_mut_slice().chunks_exact_mut(m).enumerate() {
            ycol.fill(C64::new(0.0, 0.0));
            for k in self.row_ptr[j]..self.row_ptr[j + 1] {
                let v = self.values[k];
                let xcol = &xs[self.col_idx[k] * m..][..m];
                for (yi, xi) in ycol.iter_mut().zip(xcol) {
                    yi.re += v * xi.re;
                    yi.im += v * xi.im;
                }
            }
            for yi in ycol.iter_mut() {
                *yi *= coeff;
            }
        }
    }

    /// `a (x) self` for a dense real `a` given row-major.
    pub fn kron_left(a: &[f64], a_dim: usize, b: &SparseReal) -> Self {
        let mut triplets = Vec::new();
        for r in 0..a_dim {
            for c in 0..a_dim {
                let av = a[r * a_dim + c];
                if av == 0.0 {
                    continue;
                }
                for (i, j, v) in b.triplets() {
                    triplets.push((r * b.n + i, c * b.n + j, av * v));
                }
            }
        }
        Self::from_triplets(a_dim * b.n, triplets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_merge_and_zeros_drop() {
        let m =
            SparseReal::from_triplets(2, vec![(0, 1, 1.0), (0, 1, 2.0), (1, 0, 0.0), (1, 1, -1.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.row_sum_norm(), 3.0);
    }

    #[test]
    fn multiplication_matches_dense() {
        let m = SparseReal::from_triplets(
            3,
            vec![
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 2, 2.0),
                (2, 1, 2.0),
                (2, 2, -0.5),
            ],
        );
        let x = CMatrix::from_fn(3, 2, |i, j| C64::new(i as f64 + 1.0, j as f64 - 0.5));
        let mut y = CMatrix::zeros(3, 2);
        let coeff = C64::new(0.0, -2.0);
        m.mul_add_dense(coeff, &x, &mut y);
        let expected = (m.to_dense() * &x) * coeff;
        assert!((y - expected).norm() < 1e-14);
        assert!(m.is_symmetric(0.0));
    }

    #[test]
    fn kron_left_layout() {
        let b = SparseReal::from_triplets(2, vec![(0, 1, 1.0), (1, 0, 1.0)]);
        let k = SparseReal::kron_left(&[1.0, 0.0, 0.0, -1.0], 2, &b);
        let dense_b = b.to_dense();
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(-1.0, 0.0),
            ],
        );
        assert_eq!(k.to_dense(), a.kronecker(&dense_b));
    }
}
