//! Native primal-dual interior-point backend.
//!
//! Feasibility of `F_b(y) − s_b·I ⪰ 0` for all blocks `b` is decided through
//! the homogenized phase-one problem
//!
//! ```text
//! maximize t  over (y, τ, t)
//!   r_b·(τ(C_b − s_b I) + Σ yᵢ A_ib) − t·I ⪰ 0     for every block
//!   τ − t ≥ 0
//!   2 − (Σ_b tr G_b + τ)/N ≥ 0                       (normalization)
//! ```
//!
//! where `r_b` are positive row scalings and `N` the total block dimension.
//! The normalization bounds `τ`, hence `t`. The optimum is positive exactly
//! when a strictly feasible point exists, and `y/τ` is then a certificate.
//! The optimum is zero otherwise, which the primal objective bounds from
//! above. The problem is solved in dual form with the HKM search direction
//! and Mehrotra's predictor-corrector; the dual slack is recomputed from
//! the iterate each step so dual feasibility never drifts.

use nalgebra::{DMatrix, DVector};

use super::{BackendClaim, SdpProblem, SolverBackend, SolverConfig, SolverDiagnostics};
use crate::error::{Error, Result};
use crate::lmi::SparseMat;

/// One block of `Z = C̃ − Σ wᵢ Ãᵢ`.
struct Block {
    dim: usize,
    c: DMatrix<f64>,
    terms: Vec<(usize, SparseMat)>,
}

struct Prepared {
    problem: SdpProblem,
    /// Number of dual unknowns `w = (ŷ, τ, t)`.
    m: usize,
    /// Original variable index and column scale of each `ŷ` entry.
    y_map: Vec<(usize, f64)>,
    blocks: Vec<Block>,
}

impl Prepared {
    fn tau(&self) -> usize {
        self.m - 2
    }

    fn t(&self) -> usize {
        self.m - 1
    }

    fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }
}

fn prepare(problem: &SdpProblem) -> Prepared {
    let nb = problem.blocks.len();
    // shifted constants C_b − s_b·I
    let shifted: Vec<SparseMat> = problem
        .blocks
        .iter()
        .map(|b| b.constant.sub(&SparseMat::identity(b.dim).scale(b.shift)))
        .collect();
    // row scale: largest coefficient norm of the block becomes one
    let row_scale: Vec<f64> = problem
        .blocks
        .iter()
        .zip(&shifted)
        .map(|(b, c)| {
            let mx = b
                .coeffs
                .iter()
                .map(|(_, m)| m.frobenius_norm())
                .fold(c.frobenius_norm(), f64::max);
            if mx > 0.0 {
                1.0 / mx
            } else {
                1.0
            }
        })
        .collect();
    // column scale from the row-scaled coefficient norms
    let mut col_norm2 = vec![0.0; problem.n_vars];
    for (b, r) in problem.blocks.iter().zip(&row_scale) {
        for (k, m) in &b.coeffs {
            col_norm2[*k] += (r * m.frobenius_norm()).powi(2);
        }
    }
    let mut y_index = vec![usize::MAX; problem.n_vars];
    let mut y_map = Vec::new();
    for (k, &s) in col_norm2.iter().enumerate() {
        if s > 0.0 {
            y_index[k] = y_map.len();
            y_map.push((k, 1.0 / s.sqrt()));
        }
    }
    let my = y_map.len();
    let m = my + 2;
    let (tau, t) = (my, my + 1);
    let n_lmi: usize = problem.blocks.iter().map(|b| b.dim).sum();
    let nf = n_lmi as f64;

    let mut blocks = Vec::with_capacity(nb + 2);
    let mut trace_row = vec![0.0; m];
    trace_row[tau] = 1.0;
    trace_row[t] = -nf;
    for ((b, r), c) in problem.blocks.iter().zip(&row_scale).zip(&shifted) {
        let mut terms = Vec::with_capacity(b.coeffs.len() + 2);
        for (k, a) in &b.coeffs {
            let yi = y_index[*k];
            let scale = r * y_map[yi].1;
            terms.push((yi, a.scale(-scale)));
            trace_row[yi] += scale * a.trace();
        }
        if !c.is_zero() {
            terms.push((tau, c.scale(-r)));
            trace_row[tau] += r * c.trace();
        }
        terms.push((t, SparseMat::identity(b.dim)));
        terms.sort_by_key(|x| x.0);
        blocks.push(Block {
            dim: b.dim,
            c: DMatrix::zeros(b.dim, b.dim),
            terms,
        });
    }
    // τ − t ≥ 0
    blocks.push(Block {
        dim: 1,
        c: DMatrix::zeros(1, 1),
        terms: vec![
            (tau, SparseMat::from_triplets(1, 1, [(0, 0, -1.0)])),
            (t, SparseMat::identity(1)),
        ],
    });
    // normalization row Σ tr G_b + τ, divided by N
    let terms = trace_row
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(k, v)| (k, SparseMat::from_triplets(1, 1, [(0, 0, v / nf)])))
        .collect();
    blocks.push(Block {
        dim: 1,
        c: DMatrix::from_element(1, 1, 2.0),
        terms,
    });
    Prepared {
        problem: problem.clone(),
        m,
        y_map,
        blocks,
    }
}

fn sparse_dot(a: &SparseMat, m: &DMatrix<f64>) -> f64 {
    a.entries().iter().map(|&(i, j, v)| v * m[(i, j)]).sum()
}

fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn slack(p: &Prepared, w: &[f64]) -> Vec<DMatrix<f64>> {
    p.blocks
        .iter()
        .map(|b| {
            let mut z = b.c.clone();
            for (k, a) in &b.terms {
                let v = w[*k];
                if v != 0.0 {
                    for &(i, j, x) in a.entries() {
                        z[(i, j)] -= v * x;
                    }
                }
            }
            z
        })
        .collect()
}

fn direction_slack(p: &Prepared, dw: &[f64]) -> Vec<DMatrix<f64>> {
    p.blocks
        .iter()
        .map(|b| {
            let mut z = DMatrix::zeros(b.dim, b.dim);
            for (k, a) in &b.terms {
                let v = dw[*k];
                for &(i, j, x) in a.entries() {
                    z[(i, j)] -= v * x;
                }
            }
            z
        })
        .collect()
}

/// `𝒜(M)ᵢ = Σ_b ⟨Ã_ib, M_b⟩`.
fn apply_a(p: &Prepared, mats: &[DMatrix<f64>]) -> DVector<f64> {
    let mut out = DVector::zeros(p.m);
    for (b, m) in p.blocks.iter().zip(mats) {
        for (k, a) in &b.terms {
            out[*k] += sparse_dot(a, m);
        }
    }
    out
}

fn inverse_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Largest `α` with `M + α·D ⪰ 0` for `M ≻ 0`.
fn max_step(m: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let Some(ch) = m.clone().cholesky() else {
        return 0.0;
    };
    let l = ch.l();
    let Some(li) = l.clone().try_inverse() else {
        return 0.0;
    };
    let s = &li * d * li.transpose();
    let lam = sym(&s).symmetric_eigenvalues().min();
    if lam >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam
    }
}

/// Schur complement `M_ij = Σ_b tr(Ã_i X Ã_j Z⁻¹)`.
fn schur(p: &Prepared, x: &[DMatrix<f64>], zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut mm = DMatrix::zeros(p.m, p.m);
    for ((b, xb), zi) in p.blocks.iter().zip(x).zip(zinv) {
        let d = b.dim;
        let nv = b.terms.len();
        if d == 1 {
            let (xv, zv) = (xb[(0, 0)], zi[(0, 0)]);
            for (a, (ka, ca)) in b.terms.iter().enumerate() {
                let va = ca.get(0, 0);
                for (kb, cb) in &b.terms[a..] {
                    let v = va * xv * cb.get(0, 0) * zv;
                    mm[(*ka, *kb)] += v;
                    if ka != kb {
                        mm[(*kb, *ka)] += v;
                    }
                }
            }
            continue;
        }
        // H_j = Z⁻¹ Ã_j X stacked as columns; Ã_i stacked as rows
        let mut h = DMatrix::zeros(d * d, nv);
        let mut arows = DMatrix::zeros(nv, d * d);
        let mut t = DMatrix::zeros(d, d);
        for (col, (_, a)) in b.terms.iter().enumerate() {
            t.fill(0.0);
            for &(i, j, v) in a.entries() {
                // row i of Ã X gains v·(row j of X)
                for c in 0..d {
                    t[(i, c)] += v * xb[(j, c)];
                }
                arows[(col, i + j * d)] = v;
            }
            let hj = zi * &t;
            h.column_mut(col).copy_from_slice(hj.as_slice());
        }
        let local = &arows * &h;
        for (a, (ka, _)) in b.terms.iter().enumerate() {
            for (bb, (kb, _)) in b.terms.iter().enumerate() {
                mm[(*ka, *kb)] += 0.5 * (local[(a, bb)] + local[(bb, a)]);
            }
        }
    }
    mm
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    for ridge in [0.0, 1e-14, 1e-12, 1e-10, 1e-8] {
        let mut mr = m.clone();
        for i in 0..mr.nrows() {
            mr[(i, i)] += ridge * scale;
        }
        if let Some(ch) = mr.cholesky() {
            return Some(ch.solve(rhs));
        }
    }
    m.clone().lu().solve(rhs)
}

/// Primal-dual interior-point solver for phase-one feasibility.
#[derive(Default)]
pub struct NativeIpm {
    prepared: Option<Prepared>,
    solution: Option<Vec<f64>>,
}

impl NativeIpm {
    /// Original-variable assignment `y = c∘ŷ/τ`.
    fn certificate(p: &Prepared, w: &[f64]) -> Option<Vec<f64>> {
        let tau = w[p.tau()];
        if tau <= 0.0 {
            return None;
        }
        let mut y = vec![0.0; p.problem.n_vars];
        for (k, &(orig, s)) in p.y_map.iter().enumerate() {
            y[orig] = w[k] * s / tau;
        }
        Some(y)
    }

    /// Every shifted block positive definite at `y`.
    fn verify(p: &Prepared, y: &[f64]) -> bool {
        p.problem.blocks.iter().all(|b| {
            let mut m = b.eval(y);
            for i in 0..b.dim {
                m[(i, i)] -= b.shift;
            }
            let m = sym(&m);
            m.cholesky().is_some()
        })
    }
}

impl SolverBackend for NativeIpm {
    fn name(&self) -> &str {
        "native-ipm"
    }

    fn load(&mut self, problem: &SdpProblem) -> Result<()> {
        for b in &problem.blocks {
            if b.coeffs.iter().any(|(k, _)| *k >= problem.n_vars) {
                return Err(Error::Solver("coefficient refers to an undeclared variable".into()));
            }
        }
        self.prepared = Some(prepare(problem));
        self.solution = None;
        Ok(())
    }

    fn values(&self) -> Option<Vec<f64>> {
        self.solution.clone()
    }

    fn run(&mut self, cfg: &SolverConfig) -> Result<(BackendClaim, SolverDiagnostics)> {
        let p = self
            .prepared
            .as_ref()
            .ok_or_else(|| Error::Solver("no problem loaded".into()))?;
        let mut diag = SolverDiagnostics {
            backend: self.name().to_string(),
            ..Default::default()
        };
        if p.problem.blocks.is_empty() {
            self.solution = Some(vec![0.0; p.problem.n_vars]);
            diag.message = "no constraints".into();
            return Ok((BackendClaim::Feasible, diag));
        }
        let m = p.m;
        let nf = (p.total_dim() - 2) as f64;
        let mut b = DVector::zeros(m);
        b[p.t()] = 1.0;
        // y = 0, τ = 0, t = −1 gives Z = I on every block; with X = I/N the
        // start is primal feasible in the t-row and exactly centred
        let mut w = vec![0.0; m];
        w[p.t()] = -1.0;
        let nblk = p.blocks.len();
        let mut x: Vec<DMatrix<f64>> = p
            .blocks
            .iter()
            .map(|blk| DMatrix::identity(blk.dim, blk.dim) / nf)
            .collect();
        let n_tot = p.total_dim() as f64;
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut polish_left = cfg.polish_iterations;
        let mut claim = BackendClaim::Unknown;

        for iter in 0..cfg.max_iterations {
            diag.iterations = iter;
            let z = slack(p, &w);
            let zinv: Option<Vec<_>> = z.iter().map(inverse_spd).collect();
            let Some(zinv) = zinv else {
                diag.message = "dual slack lost definiteness".into();
                break;
            };
            let mu = x.iter().zip(&z).map(|(a, b)| frob_dot(a, b)).sum::<f64>() / n_tot;
            let ax = apply_a(p, &x);
            let rp = &b - &ax;
            let pinf = rp.norm() / (1.0 + b.norm());
            let pobj = 2.0 * x[nblk - 1][(0, 0)];
            let dobj = w[p.t()];
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            diag.primal_residual = pinf;
            diag.gap = gap;
            diag.phase_one_value = dobj;

            if dobj > 0.0 {
                if let Some(y) = Self::certificate(p, &w) {
                    if Self::verify(p, &y) && best.as_ref().is_none_or(|(_, t)| dobj >= *t) {
                        best = Some((y, dobj));
                    }
                }
                if best.is_some() {
                    if polish_left == 0 || gap < cfg.gap_tol {
                        claim = BackendClaim::Feasible;
                        break;
                    }
                    polish_left -= 1;
                }
            }
            if pinf < 1e-8 && pobj < cfg.infeasibility_tol && best.is_none() {
                diag.message = format!("phase-one optimum bounded by {pobj:e}");
                claim = BackendClaim::Infeasible;
                break;
            }
            if gap < cfg.gap_tol && pinf < 1e-8 {
                if best.is_some() {
                    claim = BackendClaim::Feasible;
                } else if dobj <= cfg.infeasibility_tol {
                    diag.message = format!("phase-one optimum {dobj:e}");
                    claim = BackendClaim::Infeasible;
                } else {
                    diag.message = "converged without a verifiable certificate".into();
                }
                break;
            }

            let mm = schur(p, &x, &zinv);
            let a_zinv = apply_a(p, &zinv);
            // predictor
            let Some(dw_a) = solve_spd(&mm, &b) else {
                diag.message = "Schur complement solve failed".into();
                break;
            };
            let dz_a = direction_slack(p, dw_a.as_slice());
            let dx_a: Vec<DMatrix<f64>> = x
                .iter()
                .zip(&dz_a)
                .zip(&zinv)
                .map(|((xb, dzb), zib)| sym(&(-xb - xb * dzb * zib)))
                .collect();
            let ap = x.iter().zip(&dx_a).map(|(a, d)| max_step(a, d)).fold(f64::INFINITY, f64::min).min(1.0);
            let ad = z.iter().zip(&dz_a).map(|(a, d)| max_step(a, d)).fold(f64::INFINITY, f64::min).min(1.0);
            let mu_aff = x
                .iter()
                .zip(&dx_a)
                .zip(z.iter().zip(&dz_a))
                .map(|((xb, dxb), (zb, dzb))| frob_dot(&(xb + dxb * ap), &(zb + dzb * ad)))
                .sum::<f64>()
                / n_tot;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            // corrector
            let corr: Vec<DMatrix<f64>> = dx_a
                .iter()
                .zip(&dz_a)
                .zip(&zinv)
                .map(|((dx, dz), zi)| dx * dz * zi)
                .collect();
            let rhs = &b - a_zinv * (sigma * mu) + apply_a(p, &corr.iter().map(sym).collect::<Vec<_>>());
            let Some(dw) = solve_spd(&mm, &rhs) else {
                diag.message = "Schur complement solve failed".into();
                break;
            };
            let dz = direction_slack(p, dw.as_slice());
            let dx: Vec<DMatrix<f64>> = x
                .iter()
                .zip(&dz)
                .zip(&zinv)
                .zip(&corr)
                .map(|(((xb, dzb), zib), cb)| sym(&(zib * (sigma * mu) - xb - xb * dzb * zib - cb)))
                .collect();
            let gamma = if mu < 1e-6 { 0.98 } else { 0.95 };
            let ap = (gamma * x.iter().zip(&dx).map(|(a, d)| max_step(a, d)).fold(f64::INFINITY, f64::min)).min(1.0);
            let ad = (gamma * z.iter().zip(&dz).map(|(a, d)| max_step(a, d)).fold(f64::INFINITY, f64::min)).min(1.0);
            for (xb, dxb) in x.iter_mut().zip(&dx) {
                *xb += dxb * ap;
            }
            for (wk, dk) in w.iter_mut().zip(dw.iter()) {
                *wk += ad * dk;
            }
            if ap < 1e-12 && ad < 1e-12 {
                diag.message = "step length vanished".into();
                break;
            }
        }
        if let Some((y, t)) = best {
            self.solution = Some(y);
            diag.phase_one_value = t;
            claim = BackendClaim::Feasible;
        } else if claim != BackendClaim::Infeasible && diag.message.is_empty() {
            diag.message = "iteration limit reached".into();
        }
        Ok((claim, diag))
    }
}
