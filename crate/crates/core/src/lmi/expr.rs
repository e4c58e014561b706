//! Matrix expressions that are affine in the decision variables.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::sparse::SparseMat;
use crate::error::{Error, Result};

/// `constant + Σ_k y_k · coeff_k` with every matrix of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineExpr {
    rows: usize,
    cols: usize,
    constant: SparseMat,
    terms: BTreeMap<usize, SparseMat>,
}

impl AffineExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            constant: SparseMat::zeros(rows, cols),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(m: SparseMat) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        Self::constant(SparseMat::from_dense(m))
    }

    pub(crate) fn set_term(&mut self, var: usize, coeff: SparseMat) {
        assert_eq!(coeff.shape(), self.shape());
        if coeff.is_zero() {
            self.terms.remove(&var);
        } else {
            self.terms.insert(var, coeff);
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn constant_part(&self) -> &SparseMat {
        &self.constant
    }

    pub fn terms(&self) -> &BTreeMap<usize, SparseMat> {
        &self.terms
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    fn map(&self, rows: usize, cols: usize, f: impl Fn(&SparseMat) -> SparseMat) -> Self {
        let mut out = Self::constant(f(&self.constant));
        debug_assert_eq!(out.shape(), (rows, cols));
        for (&k, c) in &self.terms {
            let m = f(c);
            if !m.is_zero() {
                out.terms.insert(k, m);
            }
        }
        out
    }

    pub fn add(&self, other: &AffineExpr) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = self.clone();
        out.constant = out.constant.add(&other.constant);
        for (&k, c) in &other.terms {
            let merged = match out.terms.get(&k) {
                Some(existing) => existing.add(c),
                None => c.clone(),
            };
            out.set_term(k, merged);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &AffineExpr) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(self.rows, self.cols, |m| m.scale(factor))
    }

    pub fn transpose(&self) -> Self {
        self.map(self.cols, self.rows, SparseMat::transpose)
    }

    /// `left * self`.
    pub fn mul_left(&self, left: &SparseMat) -> Result<Self> {
        if left.ncols() != self.rows {
            return Err(Error::Dimension(format!(
                "left factor {:?} vs expression {:?}",
                left.shape(),
                self.shape()
            )));
        }
        Ok(self.map(left.nrows(), self.cols, |m| left.matmul(m)))
    }

    /// `self * right`.
    pub fn mul_right(&self, right: &SparseMat) -> Result<Self> {
        if right.nrows() != self.cols {
            return Err(Error::Dimension(format!(
                "expression {:?} vs right factor {:?}",
                self.shape(),
                right.shape()
            )));
        }
        Ok(self.map(self.rows, right.ncols(), |m| m.matmul(right)))
    }

    /// Places the expression at `(r0, c0)` inside a larger zero matrix.
    pub fn embed(&self, rows: usize, cols: usize, r0: usize, c0: usize) -> Self {
        self.map(rows, cols, |m| m.embed(rows, cols, r0, c0))
    }

    /// Assembles a block matrix. `None` entries are zero blocks; every row of
    /// blocks must agree with `row_sizes` and every column with `col_sizes`.
    pub fn from_blocks(
        row_sizes: &[usize],
        col_sizes: &[usize],
        grid: &[Vec<Option<AffineExpr>>],
    ) -> Result<Self> {
        let rows: usize = row_sizes.iter().sum();
        let cols: usize = col_sizes.iter().sum();
        if grid.len() != row_sizes.len() {
            return Err(Error::Dimension("block grid row count".into()));
        }
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            if row.len() != col_sizes.len() {
                return Err(Error::Dimension("block grid column count".into()));
            }
            let mut c0 = 0;
            for (bj, cell) in row.iter().enumerate() {
                if let Some(e) = cell {
                    if e.shape() != (row_sizes[bi], col_sizes[bj]) {
                        return Err(Error::Dimension(format!(
                            "block ({bi},{bj}) has shape {:?}, expected {:?}",
                            e.shape(),
                            (row_sizes[bi], col_sizes[bj])
                        )));
                    }
                    out = out.add(&e.embed(rows, cols, r0, c0))?;
                }
                c0 += col_sizes[bj];
            }
            r0 += row_sizes[bi];
        }
        Ok(out)
    }

    /// Numeric value at the assignment `y`.
    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.to_dense();
        for (&k, c) in &self.terms {
            let v = y[k];
            if v != 0.0 {
                for &(i, j, a) in c.entries() {
                    out[(i, j)] += v * a;
                }
            }
        }
        out
    }
}

/// Symmetric affine matrix expression; every coefficient is exactly
/// symmetric, so evaluation is bitwise symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct SymExpr(AffineExpr);

impl SymExpr {
    pub fn zeros(n: usize) -> Self {
        Self(AffineExpr::zeros(n, n))
    }

    /// Wraps an expression after checking exact symmetry of every coefficient.
    pub fn new(e: AffineExpr) -> Result<Self> {
        if e.rows != e.cols {
            return Err(Error::NotSymmetric(format!("shape {:?}", e.shape())));
        }
        if !e.constant.is_symmetric() {
            return Err(Error::NotSymmetric("constant part".into()));
        }
        if let Some((k, _)) = e.terms.iter().find(|(_, c)| !c.is_symmetric()) {
            return Err(Error::NotSymmetric(format!("coefficient of scalar {k}")));
        }
        Ok(Self(e))
    }

    pub fn constant(m: SparseMat) -> Result<Self> {
        Self::new(AffineExpr::constant(m))
    }

    /// `e + eᵀ`.
    pub fn he(e: &AffineExpr) -> Result<Self> {
        let sum = e.add(&e.transpose())?;
        Ok(Self(sum.map(e.rows, e.rows, SparseMat::mirror_upper)))
    }

    /// `Wᵀ · E · W` for `W` of shape `dim(E) × p`.
    pub fn congruence(w: &SparseMat, e: &SymExpr) -> Result<Self> {
        if w.nrows() != e.dim() {
            return Err(Error::Dimension(format!(
                "congruence factor {:?} vs dimension {}",
                w.shape(),
                e.dim()
            )));
        }
        let wt = w.transpose();
        let p = w.ncols();
        Ok(Self(e.0.map(p, p, |m| wt.matmul(m).matmul(w).mirror_upper())))
    }

    pub fn block_diag(parts: &[&SymExpr]) -> Self {
        let n: usize = parts.iter().map(|p| p.dim()).sum();
        let mut out = AffineExpr::zeros(n, n);
        let mut off = 0;
        for p in parts {
            out = out
                .add(&p.0.embed(n, n, off, off))
                .expect("block_diag shapes are consistent");
            off += p.dim();
        }
        Self(out)
    }

    /// Symmetric block matrix from its upper block triangle; the lower blocks
    /// are the transposes. Diagonal blocks must themselves be symmetric.
    pub fn from_upper_blocks(sizes: &[usize], upper: &[Vec<Option<AffineExpr>>]) -> Result<Self> {
        let nb = sizes.len();
        let mut grid: Vec<Vec<Option<AffineExpr>>> = vec![vec![None; nb]; nb];
        for i in 0..nb {
            for j in i..nb {
                if let Some(e) = upper.get(i).and_then(|r| r.get(j)).and_then(|c| c.as_ref()) {
                    if i == j {
                        grid[i][i] = Some(SymExpr::new(e.clone())?.0);
                    } else {
                        grid[j][i] = Some(e.transpose());
                        grid[i][j] = Some(e.clone());
                    }
                }
            }
        }
        Self::new(AffineExpr::from_blocks(sizes, sizes, &grid)?)
    }

    pub fn add(&self, other: &SymExpr) -> Result<Self> {
        Ok(Self(self.0.add(&other.0)?))
    }

    pub fn sub(&self, other: &SymExpr) -> Result<Self> {
        Ok(Self(self.0.sub(&other.0)?))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.scale(factor))
    }

    /// `e0 + d · e1`, the form taken by conditions affine in a delay value.
    pub fn affine_in_d(e0: &SymExpr, e1: &SymExpr, d: f64) -> Result<Self> {
        e0.add(&e1.scale(d))
    }

    pub fn embed(&self, n: usize, offset: usize) -> Self {
        Self(self.0.embed(n, n, offset, offset))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn inner(&self) -> &AffineExpr {
        &self.0
    }

    pub fn constant_part(&self) -> &SparseMat {
        &self.0.constant
    }

    pub fn terms(&self) -> &BTreeMap<usize, SparseMat> {
        &self.0.terms
    }

    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        self.0.eval(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::VarSpace;

    #[test]
    fn congruence_matches_dense() {
        let mut vs = VarSpace::new();
        let p = vs.add_symmetric("P", 2);
        let e = SymExpr::new(vs.expr(p)).unwrap();
        let w = SparseMat::from_triplets(2, 3, [(0, 0, 1.0), (1, 1, 2.0), (0, 2, -0.3)]);
        let c = SymExpr::congruence(&w, &e).unwrap();
        let y = [1.5, -0.25, 0.7];
        let pv = vs.value(p, &y);
        let wd = w.to_dense();
        let expect = wd.transpose() * pv * &wd;
        assert!((c.eval(&y) - expect).amax() < 1e-14);
    }

    #[test]
    fn he_is_symmetric() {
        let mut vs = VarSpace::new();
        let k = vs.add_full("K", 3, 3);
        let h = SymExpr::he(&vs.expr(k)).unwrap();
        let y: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let m = h.eval(&y);
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn upper_blocks_mirror() {
        let mut vs = VarSpace::new();
        let z = vs.add_symmetric("Z", 1);
        let x = vs.add_full("X", 1, 1);
        let s = SymExpr::from_upper_blocks(
            &[1, 1],
            &[vec![Some(vs.expr(z)), Some(vs.expr(x))], vec![None, Some(vs.expr(z))]],
        )
        .unwrap();
        let m = s.eval(&[2.0, 0.5]);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0]));
    }

    #[test]
    fn rejects_asymmetric() {
        let m = SparseMat::from_triplets(2, 2, [(0, 1, 1.0)]);
        assert!(SymExpr::constant(m).is_err());
    }
}
