//! Sparse affine matrix algebra used to build linear matrix inequalities.

mod expr;
mod sparse;
mod vars;

pub use expr::{AffineExpr, SymExpr};
pub use sparse::SparseMat;
pub use vars::{BlockId, BlockKind, VarSpace, VariableBlock};

use serde::{Deserialize, Serialize};

/// Direction of a matrix inequality against zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `expr ≺ 0` (strict) or `expr ⪯ 0`.
    NegativeDefinite,
    /// `expr ≻ 0` (strict) or `expr ⪰ 0`.
    PositiveDefinite,
}

/// Origin of a constraint, kept for reporting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintTag {
    /// Positivity of a Lyapunov-Krasovskii matrix.
    Domain(String),
    /// Decrease condition of one mode at one delay vertex.
    Mode { mode: usize, vertex: i64 },
    /// Coupling inequality between consecutive modes at a delay value.
    Cross { from: usize, to: usize, l: i64 },
    /// Coupling matrix positivity for the reciprocally convex bound.
    Coupling(String),
    Other(String),
}

/// One matrix inequality `expr (sense) 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LmiConstraint {
    pub expr: SymExpr,
    pub sense: Sense,
    pub strict: bool,
    pub tag: ConstraintTag,
}

/// Collection of constraints over a shared variable space.
#[derive(Clone, Debug, Default)]
pub struct LmiProblem {
    pub vars: VarSpace,
    pub constraints: Vec<LmiConstraint>,
}

impl LmiProblem {
    pub fn push(&mut self, expr: SymExpr, sense: Sense, tag: ConstraintTag) {
        self.constraints.push(LmiConstraint {
            expr,
            sense,
            strict: true,
            tag,
        });
    }

    /// Number of constraints excluding the positivity (`Domain`) ones.
    pub fn core_constraint_count(&self) -> usize {
        self.constraints
            .iter()
            .filter(|c| !matches!(c.tag, ConstraintTag::Domain(_)))
            .count()
    }

    /// Smallest eigenvalue of each constraint written in `⪰` form, i.e. of
    /// `expr` for positive and `-expr` for negative sense.
    pub fn margins(&self, y: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| {
                let m = c.expr.eval(y);
                let m = match c.sense {
                    Sense::PositiveDefinite => m,
                    Sense::NegativeDefinite => -m,
                };
                crate::linalg::min_eigenvalue(&m)
            })
            .collect()
    }
}
