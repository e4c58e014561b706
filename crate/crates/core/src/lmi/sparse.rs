//! Coordinate-format sparse matrices used for selector matrices and the
//! coefficient matrices of affine expressions.

use nalgebra::DMatrix;

/// Sparse matrix with entries kept sorted row-major, free of duplicates and
/// explicit zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMat {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    /// Builds a matrix from triplets; duplicates are summed and zeros dropped.
    pub fn from_triplets<I>(rows: usize, cols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(i, j, _) in &entries {
            assert!(
                i < rows && j < cols,
                "triplet ({i},{j}) outside {rows}x{cols}"
            );
        }
        entries.sort_by_key(|e| (e.0, e.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        merged.retain(|e| e.2 != 0.0);
        Self {
            rows,
            cols,
            entries: merged,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self
            .entries
            .binary_search_by(|e| (e.0, e.1).cmp(&(i, j)))
        {
            Ok(k) => self.entries[k].2,
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.cols,
            self.rows,
            self.entries.iter().map(|&(i, j, v)| (j, i, v)),
        )
    }

    pub fn scale(&self, factor: f64) -> Self {
        if factor == 0.0 {
            return Self::zeros(self.rows, self.cols);
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .map(|&(i, j, v)| (i, j, v * factor))
                .filter(|e| e.2 != 0.0)
                .collect(),
        }
    }

    pub fn add(&self, other: &SparseMat) -> Self {
        assert_eq!(self.shape(), other.shape(), "sparse add shape mismatch");
        Self::from_triplets(
            self.rows,
            self.cols,
            self.entries.iter().chain(other.entries.iter()).copied(),
        )
    }

    pub fn sub(&self, other: &SparseMat) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Row-major product `self * other`.
    pub fn matmul(&self, other: &SparseMat) -> Self {
        assert_eq!(self.cols, other.rows, "sparse matmul inner dimension");
        let row_start = other.row_starts();
        let mut acc = vec![0.0; other.cols];
        let mut seen = vec![false; other.cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut out = Vec::new();
        let mut k = 0;
        while k < self.entries.len() {
            let row = self.entries[k].0;
            while k < self.entries.len() && self.entries[k].0 == row {
                let (_, mid, a) = self.entries[k];
                for &(_, c, b) in &other.entries[row_start[mid]..row_start[mid + 1]] {
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
                k += 1;
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c] != 0.0 {
                    out.push((row, c, acc[c]));
                }
                acc[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
        }
        Self {
            rows: self.rows,
            cols: other.cols,
            entries: out,
        }
    }

    /// `self ⊗ I_n`.
    pub fn kron_identity(&self, n: usize) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len() * n);
        for &(i, j, v) in &self.entries {
            for k in 0..n {
                entries.push((i * n + k, j * n + k, v));
            }
        }
        Self::from_triplets(self.rows * n, self.cols * n, entries)
    }

    /// Places `self` at offset `(r0, c0)` inside a `rows × cols` zero matrix.
    pub fn embed(&self, rows: usize, cols: usize, r0: usize, c0: usize) -> Self {
        assert!(r0 + self.rows <= rows && c0 + self.cols <= cols);
        Self {
            rows,
            cols,
            entries: self
                .entries
                .iter()
                .map(|&(i, j, v)| (i + r0, j + c0, v))
                .collect(),
        }
    }

    pub fn vstack(parts: &[&SparseMat]) -> Self {
        let cols = parts.first().map_or(0, |p| p.cols);
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut entries = Vec::new();
        let mut r0 = 0;
        for p in parts {
            assert_eq!(p.cols, cols, "vstack column mismatch");
            entries.extend(p.entries.iter().map(|&(i, j, v)| (i + r0, j, v)));
            r0 += p.rows;
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn hstack(parts: &[&SparseMat]) -> Self {
        let rows = parts.first().map_or(0, |p| p.rows);
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut entries = Vec::new();
        let mut c0 = 0;
        for p in parts {
            assert_eq!(p.rows, rows, "hstack row mismatch");
            entries.extend(p.entries.iter().map(|&(i, j, v)| (i, j + c0, v)));
            c0 += p.cols;
        }
        Self::from_triplets(rows, cols, entries)
    }

    pub fn block_diag(parts: &[&SparseMat]) -> Self {
        let rows = parts.iter().map(|p| p.rows).sum();
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut entries = Vec::new();
        let (mut r0, mut c0) = (0, 0);
        for p in parts {
            entries.extend(p.entries.iter().map(|&(i, j, v)| (i + r0, j + c0, v)));
            r0 += p.rows;
            c0 += p.cols;
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.entries.iter().all(|&(i, j, v)| self.get(j, i) == v)
    }

    /// Rebuilds the matrix from its upper triangle mirrored to the lower one.
    pub fn mirror_upper(&self) -> Self {
        assert_eq!(self.rows, self.cols);
        let mut entries = Vec::with_capacity(self.entries.len());
        for &(i, j, v) in &self.entries {
            if i <= j {
                entries.push((i, j, v));
                if i != j {
                    entries.push((j, i, v));
                }
            }
        }
        Self::from_triplets(self.rows, self.cols, entries)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.0 == e.1)
            .map(|e| e.2)
            .sum()
    }

    /// Start offsets of each row in `entries` (length `rows + 1`).
    pub(crate) fn row_starts(&self) -> Vec<usize> {
        let mut starts = vec![0; self.rows + 1];
        for &(i, _, _) in &self.entries {
            starts[i + 1] += 1;
        }
        for i in 0..self.rows {
            starts[i + 1] += starts[i];
        }
        starts
    }

    /// `dense * self`, returned dense.
    pub fn left_dense_mul(&self, dense: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(dense.ncols(), self.rows);
        let mut out = DMatrix::zeros(dense.nrows(), self.cols);
        for &(i, j, v) in &self.entries {
            let src = dense.column(i);
            let mut dst = out.column_mut(j);
            dst.axpy(v, &src, 1.0);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn matmul_matches_dense() {
        let a = dense(2, 3, &[1.0, 0.0, 2.0, 0.0, -1.0, 3.0]);
        let b = dense(3, 2, &[0.5, 1.0, 0.0, 2.0, -1.0, 0.0]);
        let prod = SparseMat::from_dense(&a).matmul(&SparseMat::from_dense(&b));
        assert_eq!(prod.to_dense(), &a * &b);
    }

    #[test]
    fn cancellation_drops_entries() {
        let a = SparseMat::from_triplets(1, 2, [(0, 0, 1.0), (0, 1, 1.0)]);
        let b = SparseMat::from_triplets(2, 1, [(0, 0, 1.0), (1, 0, -1.0)]);
        assert!(a.matmul(&b).is_zero());
        let s = SparseMat::from_triplets(1, 1, [(0, 0, 2.0), (0, 0, -2.0)]);
        assert!(s.is_zero());
    }

    #[test]
    fn kron_and_stack() {
        let a = SparseMat::from_triplets(1, 2, [(0, 0, 1.0), (0, 1, -1.0)]);
        let k = a.kron_identity(2).to_dense();
        assert_eq!(k, dense(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]));
        let v = SparseMat::vstack(&[&a, &a.scale(2.0)]).to_dense();
        assert_eq!(v, dense(2, 2, &[1.0, -1.0, 2.0, -2.0]));
        let d = SparseMat::block_diag(&[&SparseMat::identity(1), &a]).to_dense();
        assert_eq!(d, dense(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, -1.0]));
    }

    #[test]
    fn left_dense_mul_matches() {
        let s = SparseMat::from_triplets(2, 3, [(0, 1, 2.0), (1, 2, -1.0)]);
        let d = dense(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.left_dense_mul(&d), &d * s.to_dense());
    }
}
