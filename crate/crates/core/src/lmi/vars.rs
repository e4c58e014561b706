//! Decision-variable registry: every matrix unknown is a named block whose
//! free scalars occupy a contiguous range of the global variable vector.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::expr::AffineExpr;
use super::sparse::SparseMat;

/// Handle to a registered variable block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Symmetric `n × n`; one scalar per upper-triangular entry.
    Symmetric,
    /// Unstructured `rows × cols`; one scalar per entry, row-major.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableBlock {
    pub name: String,
    pub kind: BlockKind,
    pub rows: usize,
    pub cols: usize,
    /// Index of the first scalar of this block in the global vector.
    pub offset: usize,
}

impl VariableBlock {
    pub fn scalar_count(&self) -> usize {
        match self.kind {
            BlockKind::Symmetric => self.rows * (self.rows + 1) / 2,
            BlockKind::Full => self.rows * self.cols,
        }
    }

    /// Position of the scalar holding entry `(i, j)` relative to `offset`.
    fn local_index(&self, i: usize, j: usize) -> usize {
        match self.kind {
            BlockKind::Symmetric => {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                // row-major upper triangle: row r holds n - r entries
                a * self.rows - a * (a + 1) / 2 + b
            }
            BlockKind::Full => i * self.cols + j,
        }
    }
}

/// Ordered collection of variable blocks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VarSpace {
    blocks: Vec<VariableBlock>,
    n_scalars: usize,
}

impl VarSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_symmetric(&mut self, name: impl Into<String>, n: usize) -> BlockId {
        self.push(name.into(), BlockKind::Symmetric, n, n)
    }

    pub fn add_full(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> BlockId {
        self.push(name.into(), BlockKind::Full, rows, cols)
    }

    fn push(&mut self, name: String, kind: BlockKind, rows: usize, cols: usize) -> BlockId {
        let block = VariableBlock {
            name,
            kind,
            rows,
            cols,
            offset: self.n_scalars,
        };
        self.n_scalars += block.scalar_count();
        self.blocks.push(block);
        BlockId(self.blocks.len() - 1)
    }

    pub fn n_scalars(&self) -> usize {
        self.n_scalars
    }

    pub fn blocks(&self) -> &[VariableBlock] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &VariableBlock {
        &self.blocks[id.0]
    }

    pub fn find(&self, name: &str) -> Option<BlockId> {
        self.blocks.iter().position(|b| b.name == name).map(BlockId)
    }

    /// Global scalar index of entry `(i, j)` of a block.
    pub fn scalar_index(&self, id: BlockId, i: usize, j: usize) -> usize {
        let b = self.block(id);
        assert!(i < b.rows && j < b.cols, "entry outside block {}", b.name);
        b.offset + b.local_index(i, j)
    }

    /// The block as an affine expression: symmetric blocks map scalar `(i,j)`
    /// to the coefficient `E_ij + E_ji`, so the off-diagonal pair shares one
    /// unknown.
    pub fn expr(&self, id: BlockId) -> AffineExpr {
        let b = self.block(id);
        let mut expr = AffineExpr::zeros(b.rows, b.cols);
        match b.kind {
            BlockKind::Symmetric => {
                for i in 0..b.rows {
                    for j in i..b.rows {
                        let coeff = if i == j {
                            SparseMat::from_triplets(b.rows, b.rows, [(i, i, 1.0)])
                        } else {
                            SparseMat::from_triplets(b.rows, b.rows, [(i, j, 1.0), (j, i, 1.0)])
                        };
                        expr.set_term(self.scalar_index(id, i, j), coeff);
                    }
                }
            }
            BlockKind::Full => {
                for i in 0..b.rows {
                    for j in 0..b.cols {
                        let coeff = SparseMat::from_triplets(b.rows, b.cols, [(i, j, 1.0)]);
                        expr.set_term(self.scalar_index(id, i, j), coeff);
                    }
                }
            }
        }
        expr
    }

    /// Reads a block's matrix value out of an assignment vector.
    pub fn value(&self, id: BlockId, y: &[f64]) -> DMatrix<f64> {
        let b = self.block(id);
        DMatrix::from_fn(b.rows, b.cols, |i, j| y[self.scalar_index(id, i, j)])
    }

    /// Writes a block value into an assignment vector. Symmetric blocks take
    /// the upper triangle.
    pub fn set_value(&self, id: BlockId, m: &DMatrix<f64>, y: &mut [f64]) {
        let b = self.block(id);
        assert_eq!((m.nrows(), m.ncols()), (b.rows, b.cols));
        for i in 0..b.rows {
            let j0 = if b.kind == BlockKind::Symmetric { i } else { 0 };
            for j in j0..b.cols {
                y[self.scalar_index(id, i, j)] = m[(i, j)];
            }
        }
    }
}
