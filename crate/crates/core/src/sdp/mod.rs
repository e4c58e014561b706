//! Standard-form semidefinite feasibility problems, the solver contract,
//! independent certificate checking, and the SDPA sparse file bridge.

mod ipm;
mod sdpa;

pub use ipm::NativeIpm;
pub use sdpa::{export_sdpa, import_sdpa, parse_sdpa_solution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{ConstraintTag, LmiConstraint, LmiProblem, Sense, SparseMat, SymExpr, VariableBlock};

/// One constraint in positive form: `constant + Σ yᵢ·coeffᵢ − shift·I ⪰ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpBlock {
    pub dim: usize,
    pub constant: SparseMat,
    /// Coefficients sorted by variable index.
    pub coeffs: Vec<(usize, SparseMat)>,
    /// Margin demanded of a strict inequality.
    pub shift: f64,
    /// Whether the originating constraint had negative sense.
    pub negated: bool,
    pub strict: bool,
    pub tag: ConstraintTag,
}

impl SdpBlock {
    /// `constant + Σ yᵢ·coeffᵢ` (without the shift).
    pub fn eval(&self, y: &[f64]) -> nalgebra::DMatrix<f64> {
        let mut m = self.constant.to_dense();
        for (k, c) in &self.coeffs {
            let v = y[*k];
            if v != 0.0 {
                for &(i, j, a) in c.entries() {
                    m[(i, j)] += v * a;
                }
            }
        }
        m
    }
}

/// Semidefinite feasibility problem over a scalar variable vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SdpProblem {
    pub n_vars: usize,
    pub blocks: Vec<SdpBlock>,
    /// Named variable blocks and their scalar ranges.
    pub directory: Vec<VariableBlock>,
}

/// Margin demanded of a strict inequality with the given constant part.
pub fn strict_shift(constant: &SparseMat) -> f64 {
    (1e-9 * constant.frobenius_norm()).max(1e-8)
}

fn negate_expr(e: &SymExpr) -> SymExpr {
    e.scale(-1.0)
}

/// Converts every constraint to a positive-form block; negative constraints
/// are negated and strict ones receive a margin shift.
pub fn normalize(problem: &LmiProblem) -> SdpProblem {
    let blocks = problem
        .constraints
        .iter()
        .map(|c| {
            let negated = c.sense == Sense::NegativeDefinite;
            let e = if negated { negate_expr(&c.expr) } else { c.expr.clone() };
            SdpBlock {
                dim: e.dim(),
                shift: if c.strict { strict_shift(c.expr.constant_part()) } else { 0.0 },
                constant: e.constant_part().clone(),
                coeffs: e.terms().iter().map(|(&k, m)| (k, m.clone())).collect(),
                negated,
                strict: c.strict,
                tag: c.tag.clone(),
            }
        })
        .collect();
    SdpProblem {
        n_vars: problem.vars.n_scalars(),
        blocks,
        directory: problem.vars.blocks().to_vec(),
    }
}

/// Inverse of [`normalize`] on the constraint list.
pub fn denormalize(p: &SdpProblem) -> Result<Vec<LmiConstraint>> {
    p.blocks
        .iter()
        .map(|b| {
            let mut e = crate::lmi::AffineExpr::constant(b.constant.clone());
            for (k, c) in &b.coeffs {
                e = e.add(&single_term(b.dim, *k, c.clone()))?;
            }
            let mut s = SymExpr::new(e)?;
            if b.negated {
                s = negate_expr(&s);
            }
            Ok(LmiConstraint {
                expr: s,
                sense: if b.negated { Sense::NegativeDefinite } else { Sense::PositiveDefinite },
                strict: b.strict,
                tag: b.tag.clone(),
            })
        })
        .collect()
}

fn single_term(dim: usize, k: usize, c: SparseMat) -> crate::lmi::AffineExpr {
    let mut e = crate::lmi::AffineExpr::zeros(dim, dim);
    e.set_term(k, c);
    e
}

/// Solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative duality gap at which the interior-point method stops.
    pub gap_tol: f64,
    /// Relative slack of the independent margin re-check.
    pub margin_tol: f64,
    /// Upper bound on the phase-one objective below which the problem is
    /// declared infeasible.
    pub infeasibility_tol: f64,
    pub max_iterations: usize,
    /// Extra iterations taken after the first verified certificate to move
    /// it away from the boundary.
    pub polish_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            margin_tol: 1e-7,
            infeasibility_tol: 1e-7,
            max_iterations: 120,
            polish_iterations: 3,
        }
    }
}

/// What the backend claims before the independent check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendClaim {
    Feasible,
    Infeasible,
    Unknown,
}

/// Diagnostics of one backend run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub backend: String,
    pub iterations: usize,
    pub primal_residual: f64,
    pub gap: f64,
    /// Phase-one objective: the common margin reached by all blocks.
    pub phase_one_value: f64,
    pub message: String,
}

/// Contract of a solver backend: load a problem, run, fetch the values.
pub trait SolverBackend {
    fn name(&self) -> &str;
    fn load(&mut self, problem: &SdpProblem) -> Result<()>;
    fn run(&mut self, cfg: &SolverConfig) -> Result<(BackendClaim, SolverDiagnostics)>;
    /// Candidate assignment of the scalar variables, if any.
    fn values(&self) -> Option<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    Inconclusive,
}

/// Minimum eigenvalue of each constraint in `⪰` form with its tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub tag: String,
    pub dim: usize,
    pub min_eigenvalue: f64,
    pub tolerance: f64,
    pub strict: bool,
}

impl Margin {
    pub fn passes(&self) -> bool {
        if self.strict {
            self.min_eigenvalue > 0.0
        } else {
            self.min_eigenvalue >= -self.tolerance
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    pub assignment: Option<Vec<f64>>,
    pub margins: Vec<Margin>,
    pub diagnostics: SolverDiagnostics,
}

pub fn tag_label(tag: &ConstraintTag) -> String {
    match tag {
        ConstraintTag::Domain(s) => format!("positive {s}"),
        ConstraintTag::Mode { mode, vertex } => format!("mode {mode} at d={vertex}"),
        ConstraintTag::Cross { from, to, l } => format!("cross {from}->{to} at l={l}"),
        ConstraintTag::Coupling(s) => format!("coupling {s}"),
        ConstraintTag::Other(s) => s.clone(),
    }
}

/// Re-evaluates every block at `y` from the stored coefficients. A strict
/// block must have a positive minimum eigenvalue; a non-strict one may dip
/// to `−margin_tol·(1 + ‖constant‖_F)`.
pub fn check_margins(p: &SdpProblem, y: &[f64], margin_tol: f64) -> Result<Vec<Margin>> {
    if y.len() != p.n_vars {
        return Err(Error::Dimension(format!(
            "assignment has {} entries, problem has {} variables",
            y.len(),
            p.n_vars
        )));
    }
    Ok(p.blocks
        .iter()
        .map(|b| Margin {
            tag: tag_label(&b.tag),
            dim: b.dim,
            min_eigenvalue: crate::linalg::min_eigenvalue(&b.eval(y)),
            tolerance: margin_tol * (1.0 + b.constant.frobenius_norm()),
            strict: b.strict,
        })
        .collect())
}

/// Solves with the native backend and verifies the certificate.
pub fn solve(p: &SdpProblem, cfg: &SolverConfig) -> Result<FeasibilityResult> {
    let mut backend = NativeIpm::default();
    solve_with(&mut backend, p, cfg)
}

/// Solves with any backend. A `feasible` status is only reported after the
/// returned assignment passes [`check_margins`].
pub fn solve_with(backend: &mut dyn SolverBackend, p: &SdpProblem, cfg: &SolverConfig) -> Result<FeasibilityResult> {
    backend.load(p)?;
    let (claim, mut diagnostics) = match backend.run(cfg) {
        Ok(r) => r,
        Err(e) => {
            return Ok(FeasibilityResult {
                status: FeasibilityStatus::Inconclusive,
                assignment: None,
                margins: Vec::new(),
                diagnostics: SolverDiagnostics {
                    backend: backend.name().to_string(),
                    message: e.to_string(),
                    ..Default::default()
                },
            })
        }
    };
    let assignment = backend.values();
    let margins = match &assignment {
        Some(y) => check_margins(p, y, cfg.margin_tol)?,
        None => Vec::new(),
    };
    let all_pass = assignment.is_some() && margins.iter().all(Margin::passes);
    let status = match claim {
        BackendClaim::Feasible if all_pass => FeasibilityStatus::Feasible,
        BackendClaim::Feasible => {
            diagnostics.message = "backend claimed feasibility but the margin re-check failed".into();
            FeasibilityStatus::Inconclusive
        }
        BackendClaim::Infeasible => FeasibilityStatus::Infeasible,
        BackendClaim::Unknown if all_pass => FeasibilityStatus::Feasible,
        BackendClaim::Unknown => FeasibilityStatus::Inconclusive,
    };
    Ok(FeasibilityResult {
        status,
        assignment,
        margins,
        diagnostics,
    })
}
