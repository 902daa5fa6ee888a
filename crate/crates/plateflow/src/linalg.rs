//! Sparse symmetric matrices and the direct solvers used by the steppers.
//!
//! The grid operators are symmetric with small bandwidth under the row-major
//! node ordering, so reduced systems are factored with a banded Cholesky.
//! The oracle uses a dense full-pivot elimination at its tiny sizes.

use crate::error::SolveError;

/// Symmetric sparse matrix in CSR form with both triangles stored.
#[derive(Debug, Clone)]
pub struct SymSparse {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymSparse {
    /// Build from triplets. Duplicate entries are summed; rows end up with
    /// ascending column indices.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == j {
                    v += row[k].1;
                    k += 1;
                }
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SymSparse {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// Scale every entry by `s` and add `shift` to the diagonal.
    pub fn scaled_with_diagonal(&self, s: f64, shift: f64) -> SymSparse {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        for i in 0..out.n {
            let lo = out.row_ptr[i];
            let hi = out.row_ptr[i + 1];
            match out.col_idx[lo..hi].binary_search(&i) {
                Ok(k) => out.values[lo + k] += shift,
                Err(k) => {
                    out.col_idx.insert(lo + k, i);
                    out.values.insert(lo + k, shift);
                    for p in out.row_ptr.iter_mut().skip(i + 1) {
                        *p += 1;
                    }
                }
            }
        }
        out
    }

    /// Largest row sum of absolute values: an upper bound on the spectral
    /// radius of a symmetric matrix.
    pub fn max_row_l1(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0usize;
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                bw = bw.max(i.abs_diff(j));
            }
        }
        bw
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[i][j] = v;
            }
        }
        a
    }

    pub fn is_symmetric_exact(&self) -> bool {
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if self.entry(j, i) != v {
                    return false;
                }
            }
        }
        true
    }
}

/// Diagonal addition applied while factoring a submatrix.
pub enum DiagShift<'a> {
    Uniform(f64),
    PerNode(&'a [f64]),
}

/// Banded Cholesky factor of a symmetric positive definite submatrix.
///
/// The factor is stored row-major with `bw + 1` slots per row; slot `k` of
/// row `i` holds `L[i][i - bw + k]`.
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    /// Factor the principal submatrix of `a` given by the sorted index set
    /// `keep`, with `shift` added to its diagonal.
    pub fn factor_submatrix(
        a: &SymSparse,
        keep: &[usize],
        shift: f64,
    ) -> Result<BandedCholesky, SolveError> {
        Self::factor_submatrix_diag(a, keep, &DiagShift::Uniform(shift))
    }

    /// Like [`factor_submatrix`](Self::factor_submatrix) but with a per-node
    /// diagonal addition (indexed by position within `keep`).
    pub fn factor_submatrix_diag(
        a: &SymSparse,
        keep: &[usize],
        shift: &DiagShift,
    ) -> Result<BandedCholesky, SolveError> {
        let n = keep.len();
        let mut pos = vec![usize::MAX; a.size()];
        for (p, &i) in keep.iter().enumerate() {
            pos[i] = p;
        }
        // Bandwidth of the renumbered submatrix.
        let mut bw = 0usize;
        for (p, &i) in keep.iter().enumerate() {
            for (j, _) in a.row(i) {
                let q = pos[j];
                if q != usize::MAX && q < p {
                    bw = bw.max(p - q);
                }
            }
        }
        let stride = bw + 1;
        let mut data = vec![0.0; n * stride];
        for (p, &i) in keep.iter().enumerate() {
            for (j, v) in a.row(i) {
                let q = pos[j];
                if q != usize::MAX && q <= p {
                    data[p * stride + (bw - (p - q))] = v;
                }
            }
            data[p * stride + bw] += match shift {
                DiagShift::Uniform(s) => *s,
                DiagShift::PerNode(extra) => extra[p],
            };
        }
        // In-place LL^T within the band.
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                let mut sum = data[i * stride + (bw - (i - j))];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    sum -= data[i * stride + (bw - (i - k))] * data[j * stride + (bw - (j - k))];
                }
                data[i * stride + (bw - (i - j))] = sum / data[j * stride + bw];
            }
            let mut diag = data[i * stride + bw];
            for k in lo..i {
                let l = data[i * stride + (bw - (i - k))];
                diag -= l * l;
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(SolveError::NotPositiveDefinite {
                    row: keep[i],
                    pivot: diag,
                });
            }
            data[i * stride + bw] = diag.sqrt();
        }
        Ok(BandedCholesky { n, bw, data })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let stride = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut sum = b[i];
            for k in lo..i {
                sum -= self.data[i * stride + (self.bw - (i - k))] * b[k];
            }
            b[i] = sum / self.data[i * stride + self.bw];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw + 1).min(self.n);
            let mut sum = b[i];
            for k in (i + 1)..hi {
                sum -= self.data[k * stride + (self.bw - (k - i))] * b[k];
            }
            b[i] = sum / self.data[i * stride + self.bw];
        }
    }
}

/// Dense Gaussian elimination with full pivoting. Used by the oracle where
/// systems never exceed a handful of unknowns.
pub fn solve_dense_full_pivot(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|r| r.len() == n));
    let mut col_perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut best = (k, k);
        let mut best_val = 0.0f64;
        for i in k..n {
            for j in k..n {
                let v = a[i][j].abs();
                if v > best_val {
                    best_val = v;
                    best = (i, j);
                }
            }
        }
        if best_val == 0.0 || !best_val.is_finite() {
            return None;
        }
        let (pi, pj) = best;
        a.swap(k, pi);
        b.swap(k, pi);
        if pj != k {
            for row in a.iter_mut() {
                row.swap(k, pj);
            }
            col_perm.swap(k, pj);
        }
        for i in (k + 1)..n {
            let m = a[i][k] / a[k][k];
            a[i][k] = 0.0;
            for j in (k + 1)..n {
                a[i][j] -= m * a[k][j];
            }
            b[i] -= m * b[k];
        }
    }
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = b[i];
        for j in (i + 1)..n {
            sum -= a[i][j] * y[j];
        }
        y[i] = sum / a[i][i];
    }
    let mut x = vec![0.0; n];
    for (k, &j) in col_perm.iter().enumerate() {
        x[j] = y[k];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SymSparse {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SymSparse::from_triplets(n, &t)
    }

    #[test]
    fn banded_cholesky_solves_spd_system() {
        let a = laplacian_1d(12);
        let keep: Vec<usize> = (0..12).collect();
        let x_true: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut b = a.apply(&x_true);
        for (bi, xi) in b.iter_mut().zip(&x_true) {
            *bi += 0.5 * xi;
        }
        let chol = BandedCholesky::factor_submatrix(&a, &keep, 0.5).unwrap();
        chol.solve_in_place(&mut b);
        for (got, want) in b.iter().zip(&x_true) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn submatrix_factorization_matches_dense() {
        let a = laplacian_1d(9);
        let keep = vec![0, 2, 3, 6, 8];
        let rhs = vec![1.0, -2.0, 0.5, 3.0, -1.0];
        let chol = BandedCholesky::factor_submatrix(&a, &keep, 1.0).unwrap();
        let mut x = rhs.clone();
        chol.solve_in_place(&mut x);

        let mut dense = vec![vec![0.0; 5]; 5];
        for (p, &i) in keep.iter().enumerate() {
            for (q, &j) in keep.iter().enumerate() {
                dense[p][q] = a.entry(i, j) + if p == q { 1.0 } else { 0.0 };
            }
        }
        let x_ref = solve_dense_full_pivot(dense, rhs).unwrap();
        for (got, want) in x.iter().zip(&x_ref) {
            assert!((got - want).abs() < 1e-13);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = SymSparse::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        let err = BandedCholesky::factor_submatrix(&a, &[0, 1], 0.0);
        assert!(matches!(err, Err(SolveError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn full_pivot_handles_permuted_systems() {
        let a = vec![
            vec![0.0, 2.0, 1.0],
            vec![1.0, 0.0, 0.0],
            vec![3.0, 0.0, 1.0],
        ];
        let x = solve_dense_full_pivot(a.clone(), vec![5.0, 1.0, 6.0]).unwrap();
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            let b = [5.0, 1.0, 6.0][i];
            assert!((r - b).abs() < 1e-12);
        }
    }
}
