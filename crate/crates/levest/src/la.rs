//! Minimal dense/sparse linear algebra used by the solver and estimators:
//! CSR matrices, a banded Cholesky factorization for direct solves, and a
//! few vector helpers. Everything is deterministic: parallel paths reduce
//! in a fixed order.

use crate::{par, Error, Result};
use serde::{Deserialize, Serialize};

/// Euclidean inner product.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Euclidean norm.
pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// y += a * x
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Compressed sparse row matrix with sorted column indices per row and no
/// explicitly stored zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a CSR matrix from per-row entry lists. Entries in a row are
    /// summed per column in their given order, then sorted by column; exact
    /// zeros are dropped.
    pub fn from_rows(rows: usize, cols: usize, row_entries: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(row_entries.len(), rows);
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for entries in row_entries {
            scratch.clear();
            scratch.extend(entries);
            scratch.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < scratch.len() {
                let col = scratch[i].0;
                assert!(col < cols, "column index out of range");
                let mut v = 0.0;
                while i < scratch.len() && scratch[i].0 == col {
                    v += scratch[i].1;
                    i += 1;
                }
                if v != 0.0 {
                    indices.push(col);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    /// Builds from unordered triplets (duplicates summed).
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut row_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for (r, c, v) in triplets {
            assert!(r < rows, "row index out of range");
            row_entries[r].push((c, v));
        }
        Self::from_rows(rows, cols, row_entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// (column, value) pairs of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        match self.indices[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// y = A x
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        par::map_indexed(self.rows, |i| self.row(i).map(|(j, v)| v * x[j]).sum())
    }

    /// x^T A x.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        dot(&self.mul(x), x)
    }

    /// y = A^T x, accumulated row-by-row (sequential, deterministic).
    pub fn mul_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "transpose matvec dimension mismatch");
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += v * xi;
                }
            }
        }
        y
    }

    /// Sparse product self * other with rows accumulated in column order.
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                what: "matmul inner dimension",
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut row_entries: Vec<Vec<(usize, f64)>> = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let mut entries: Vec<(usize, f64)> = Vec::new();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    entries.push((j, a * b));
                }
            }
            row_entries.push(entries);
        }
        Ok(SparseMatrix::from_rows(self.rows, other.cols, row_entries))
    }

    /// Diagonal as a vector (zeros where no stored entry).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut row_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.cols];
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                row_entries[j].push((i, v));
            }
        }
        SparseMatrix::from_rows(self.cols, self.rows, row_entries)
    }

    /// max_{i,j} |A_ij - A_ji| over the stored pattern.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            let mut a = self.row(i).peekable();
            let mut b = t.row(i).peekable();
            loop {
                match (a.peek().copied(), b.peek().copied()) {
                    (Some((ja, va)), Some((jb, vb))) => {
                        if ja == jb {
                            worst = worst.max((va - vb).abs());
                            a.next();
                            b.next();
                        } else if ja < jb {
                            worst = worst.max(va.abs());
                            a.next();
                        } else {
                            worst = worst.max(vb.abs());
                            b.next();
                        }
                    }
                    (Some((_, va)), None) => {
                        worst = worst.max(va.abs());
                        a.next();
                    }
                    (None, Some((_, vb))) => {
                        worst = worst.max(vb.abs());
                        b.next();
                    }
                    (None, None) => break,
                }
            }
        }
        worst
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }
}

/// Cholesky factorization A = L L^T in banded storage. Exact direct solver
/// for SPD matrices whose profile is narrow (true for lexicographically
/// ordered structured grids).
pub struct BandCholesky {
    n: usize,
    bw: usize,
    /// Row-major lower band: entry (i, j) with i-bw <= j <= i lives at
    /// band[i*(bw+1) + (j + bw - i)].
    band: Vec<f64>,
}

impl BandCholesky {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::NotSpd("matrix is not square".into()));
        }
        let n = a.rows();
        let mut bw = 0usize;
        for (i, j, _) in a.iter_entries() {
            bw = bw.max(i.abs_diff(j));
        }
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for (i, j, v) in a.iter_entries() {
            if j <= i {
                band[i * w + (j + bw - i)] = v;
            }
        }
        // In-place banded Cholesky.
        for i in 0..n {
            let jmin = i.saturating_sub(bw);
            for j in jmin..=i {
                let kmin = jmin.max(j.saturating_sub(bw));
                let mut sum = band[i * w + (j + bw - i)];
                for k in kmin..j {
                    sum -= band[i * w + (k + bw - i)] * band[j * w + (k + bw - j)];
                }
                if j < i {
                    let d = band[j * w + bw];
                    band[i * w + (j + bw - i)] = sum / d;
                } else {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::NotSpd(format!(
                            "non-positive pivot {sum:e} at row {i}"
                        )));
                    }
                    band[i * w + bw] = sum.sqrt();
                }
            }
        }
        Ok(BandCholesky { n, bw, band })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Solves L y = b in place.
    fn forward(&self, y: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let jmin = i.saturating_sub(self.bw);
            let mut s = y[i];
            for j in jmin..i {
                s -= self.band[i * w + (j + self.bw - i)] * y[j];
            }
            y[i] = s / self.band[i * w + self.bw];
        }
    }

    /// Solves L^T x = y in place.
    fn backward(&self, x: &mut [f64]) {
        let w = self.bw + 1;
        for i in (0..self.n).rev() {
            let mut s = x[i];
            let imax = (i + self.bw).min(self.n - 1);
            for j in (i + 1)..=imax {
                s -= self.band[j * w + (i + self.bw - j)] * x[j];
            }
            x[i] = s / self.band[i * w + self.bw];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "solve dimension mismatch");
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    /// r^T A^{-1} r = || L^{-1} r ||^2.
    pub fn quadratic_form(&self, r: &[f64]) -> f64 {
        assert_eq!(r.len(), self.n, "quadratic form dimension mismatch");
        let mut y = r.to_vec();
        self.forward(&mut y);
        dot(&y, &y)
    }
}

/// Solves a small dense system in place by Gaussian elimination with
/// partial pivoting. `a` is row-major n x n.
pub fn solve_dense_small(a: &mut [f64], b: &mut [f64]) -> Result<()> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col] == 0.0 {
            return Err(Error::NotSpd("singular local matrix".into()));
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for r in (col + 1)..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in (r + 1)..n {
            s -= a[r * n + c] * b[c];
        }
        b[r] = s / a[r * n + r];
    }
    Ok(())
}
