//! Assembly of the feasibility problems: single-interval analysis of a
//! bounded-delay subsystem, the two-mode switched analysis of a system with
//! a constant and a varying delay, and observer-based controller co-design.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::lmi::{AffineExpr, BlockId, ConstraintTag, LmiProblem, Sense, SparseMat, SymExpr, VarSpace};
use crate::model::{
    build_closed_loop, split_switched, BoundedDelaySubsystem, ControllerGains, DelayBounds,
    DelaySystem, PlantModel,
};
use crate::selectors::{
    build_appendix_b, ell_perp, gamma_f64, gamma_perp, script_p, w5, BandInputs, ModeSelectors,
    XiLayout,
};

/// Variable blocks of one functional.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeVars {
    pub p: BlockId,
    pub q1: BlockId,
    pub q2: BlockId,
    pub z1: BlockId,
    pub z2: BlockId,
    pub x: BlockId,
}

/// Variables of the switched analysis: one functional per mode plus the
/// tail matrices used only by mode 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwitchedVars {
    pub modes: [ModeVars; 2],
    pub q3: BlockId,
    pub z3: BlockId,
}

impl SwitchedVars {
    pub fn mode(&self, j: usize) -> &ModeVars {
        &self.modes[j - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnalysisVars {
    Single(ModeVars),
    Switched(SwitchedVars),
}

/// A stability-analysis feasibility problem.
#[derive(Clone, Debug)]
pub struct AnalysisProblem {
    pub lmi: LmiProblem,
    pub vars: AnalysisVars,
    pub n: usize,
}

/// Co-design problem: barred functional variables plus the controller and
/// observer unknowns.
#[derive(Clone, Debug)]
pub struct DesignProblem {
    pub lmi: LmiProblem,
    pub lkf: SwitchedVars,
    pub u: BlockId,
    pub k_bar: BlockId,
    pub f_bar: BlockId,
    pub l_bar: BlockId,
    pub eps: f64,
    pub plant: PlantModel,
    pub bounds: DelayBounds,
}

/// The delay vertices at which the affine-in-d condition is imposed. A
/// degenerate interval contributes a single vertex.
fn vertices(lo: usize, hi: usize) -> Vec<usize> {
    if lo == hi {
        vec![lo]
    } else {
        vec![lo, hi]
    }
}

fn declare_mode(vs: &mut VarSpace, n: usize, p_dim: usize, suffix: &str) -> ModeVars {
    ModeVars {
        p: vs.add_symmetric(format!("P{suffix}"), p_dim),
        q1: vs.add_symmetric(format!("Q1{suffix}"), n),
        q2: vs.add_symmetric(format!("Q2{suffix}"), n),
        z1: vs.add_symmetric(format!("Z1{suffix}"), n),
        z2: vs.add_symmetric(format!("Z2{suffix}"), n),
        x: vs.add_full(format!("X{suffix}"), 2 * n, 2 * n),
    }
}

fn declare_switched(vs: &mut VarSpace, n: usize) -> SwitchedVars {
    let m1 = declare_mode(vs, n, 4 * n, "_1");
    let m2 = declare_mode(vs, n, 3 * n, "_2");
    SwitchedVars {
        modes: [m1, m2],
        q3: vs.add_symmetric("Q3", n),
        z3: vs.add_symmetric("Z3", n),
    }
}

fn sym(vs: &VarSpace, id: BlockId) -> SymExpr {
    SymExpr::new(vs.expr(id)).expect("symmetric blocks give symmetric expressions")
}

/// Expressions of one functional's matrices.
struct ModeExprs {
    p: SymExpr,
    q1: SymExpr,
    q2: SymExpr,
    z1: SymExpr,
    z2: SymExpr,
    x: AffineExpr,
}

impl ModeExprs {
    fn new(vs: &VarSpace, v: &ModeVars) -> Self {
        Self {
            p: sym(vs, v.p),
            q1: sym(vs, v.q1),
            q2: sym(vs, v.q2),
            z1: sym(vs, v.z1),
            z2: sym(vs, v.z2),
            x: vs.expr(v.x),
        }
    }
}

/// `diag(Z, 3cZ)`.
fn wirtinger_weight(z: &SymExpr, c: f64) -> SymExpr {
    SymExpr::block_diag(&[z, &z.scale(3.0 * c)])
}

/// Coupling matrix `[[diag(Z₂,3Z₂), X], [Xᵀ, diag(Z₂,3Z₂)]]`.
fn psi_z(z2: &SymExpr, x: &AffineExpr) -> Result<SymExpr> {
    let n = z2.dim();
    let zz = wirtinger_weight(z2, 1.0);
    SymExpr::from_upper_blocks(
        &[2 * n, 2 * n],
        &[
            vec![Some(zz.inner().clone()), Some(x.clone())],
            vec![None, Some(zz.inner().clone())],
        ],
    )
}

/// The three parts of `Φ(d)`: `a` bounds the change of the `P` term, `b`
/// the change of the single sums and `c` the change of the double sums.
#[derive(Clone, Debug)]
pub struct PhiParts {
    pub a: SymExpr,
    pub b: SymExpr,
    pub c: SymExpr,
}

impl PhiParts {
    pub fn total(&self) -> Result<SymExpr> {
        self.a.add(&self.b)?.add(&self.c)
    }
}

fn phi_parts(sel: &ModeSelectors, d: f64, m: &ModeExprs, tail: Option<(&SymExpr, &SymExpr)>) -> Result<PhiParts> {
    let layout = &sel.layout;
    // W₂(d)ᵀPW₂(d) − W₁(d)ᵀPW₁(d) is affine in d because W₂ − W₁ does not depend on d.
    let mut a = SymExpr::congruence(&sel.w2, &m.p)?.sub(&SymExpr::congruence(&sel.w1, &m.p)?)?;
    let wd_t = sel.w_slope.scale(d).transpose();
    let cross = m.p.inner().mul_left(&wd_t)?.mul_right(&sel.w2.sub(&sel.w1))?;
    a = a.add(&SymExpr::he(&cross)?)?;

    let mut b = SymExpr::congruence(&sel.e(1), &m.q1)?
        .add(&SymExpr::congruence(&sel.e(2), &m.q2.sub(&m.q1)?)?)?
        .sub(&SymExpr::congruence(&sel.e(4), &m.q2)?)?;

    let dm = layout.d_m as f64;
    let dd = layout.d_delta() as f64;
    let mut inner = m.z1.scale(dm * dm).add(&m.z2.scale(dd * dd))?;
    if let Some((q3, z3)) = tail {
        let dt = layout.d_delta_tail() as f64;
        inner = inner.add(&z3.scale(dt * dt))?;
        b = b
            .add(&SymExpr::congruence(&sel.e(4), q3)?)?
            .sub(&SymExpr::congruence(&sel.e(8), q3)?)?;
    }
    let mut c = SymExpr::congruence(&sel.w3, &inner)?
        .sub(&SymExpr::congruence(&sel.w_s, &wirtinger_weight(&m.z1, gamma_f64(layout.d_m)))?)?
        .sub(&SymExpr::congruence(&sel.w_psi, &psi_z(&m.z2, &m.x)?)?)?;
    if let (Some((_, z3)), Some(wz)) = (tail, sel.w_z.as_ref()) {
        c = c.sub(&SymExpr::congruence(wz, &wirtinger_weight(z3, 1.0))?)?;
    }
    Ok(PhiParts { a, b, c })
}

/// `Φ(d) = Φ₁(d) + 𝒬 + Φ₃` on the `ξ` layout of `sel`. `tail` holds the
/// shared `(Q₃, Z₃)` when the layout has the extra first-mode blocks.
fn phi(sel: &ModeSelectors, d: f64, m: &ModeExprs, tail: Option<(&SymExpr, &SymExpr)>) -> Result<SymExpr> {
    phi_parts(sel, d, m, tail)?.total()
}

fn push_domain(lmi: &mut LmiProblem, vs: &VarSpace, ids: &[BlockId]) {
    for &id in ids {
        let name = vs.block(id).name.clone();
        lmi.push(sym(vs, id), Sense::PositiveDefinite, ConstraintTag::Domain(name));
    }
}

fn mode_domain(v: &ModeVars) -> [BlockId; 5] {
    [v.p, v.q1, v.q2, v.z1, v.z2]
}

/// Single-interval analysis of `x(k+1) = A x + A_m x(k−d_m) + A_M x(k−d_M)
/// + A_d x(k−d(k))`.
pub fn lemma2_problem(sub: &BoundedDelaySubsystem) -> Result<AnalysisProblem> {
    let n = sub.dim();
    let layout = XiLayout::plain(n, sub.d_m, sub.d_big)?;
    let sel = ModeSelectors::new(layout);
    let mut vs = VarSpace::new();
    let v = declare_mode(&mut vs, n, 3 * n, "");
    let m = ModeExprs::new(&vs, &v);
    let mut lmi = LmiProblem::default();
    lmi.push(psi_z(&m.z2, &m.x)?, Sense::PositiveDefinite, ConstraintTag::Coupling("Psi_z".into()));
    let g = gamma_perp(&sub.a, &sub.a_m, &sub.a_d, &sub.a_big, layout.n_blocks());
    for d in vertices(sub.d_m, sub.d_big) {
        let ph = phi(&sel, d as f64, &m, None)?;
        lmi.push(
            SymExpr::congruence(&g, &ph)?,
            Sense::NegativeDefinite,
            ConstraintTag::Mode { mode: 0, vertex: d as i64 },
        );
    }
    push_domain(&mut lmi, &vs, &mode_domain(&v));
    lmi.vars = vs;
    Ok(AnalysisProblem {
        lmi,
        vars: AnalysisVars::Single(v),
        n,
    })
}

/// Unprojected `Φ(d, j)` of a subsystem for the given variables. Exposed for
/// certificate checks along arbitrary delay values.
pub fn mode_phi(
    vs: &VarSpace,
    vars: &ModeVars,
    layout: XiLayout,
    d: usize,
    tail: Option<(BlockId, BlockId)>,
) -> Result<SymExpr> {
    mode_phi_parts(vs, vars, layout, d, tail)?.total()
}

/// [`mode_phi`] split into its three parts.
pub fn mode_phi_parts(
    vs: &VarSpace,
    vars: &ModeVars,
    layout: XiLayout,
    d: usize,
    tail: Option<(BlockId, BlockId)>,
) -> Result<PhiParts> {
    if (layout.tail.is_some()) != tail.is_some() {
        return Err(Error::Config("tail variables must be given exactly for layouts with a tail".into()));
    }
    let sel = ModeSelectors::new(layout);
    let m = ModeExprs::new(vs, vars);
    let t = tail.map(|(q3, z3)| (sym(vs, q3), sym(vs, z3)));
    phi_parts(&sel, d as f64, &m, t.as_ref().map(|(a, b)| (a, b)))
}

/// Fresh variable space with the blocks of a single-interval functional.
pub fn single_space(n: usize) -> (VarSpace, ModeVars) {
    let mut vs = VarSpace::new();
    let v = declare_mode(&mut vs, n, 3 * n, "");
    (vs, v)
}

/// Fresh variable space with the blocks of the two-mode functional.
pub fn switched_space(n: usize) -> (VarSpace, SwitchedVars) {
    let mut vs = VarSpace::new();
    let v = declare_switched(&mut vs, n);
    (vs, v)
}

/// `S_j = W₅ᵀ P_j W₅ + 𝒫_j`, the functional of mode `j` as a quadratic form
/// in `x̄(k)`.
pub fn s_matrix(vs: &VarSpace, v: &SwitchedVars, n: usize, bounds: &DelayBounds, j: usize) -> Result<SymExpr> {
    let mv = v.mode(j);
    let (q1, q2, z1, z2, q3, z3) = (
        sym(vs, mv.q1),
        sym(vs, mv.q2),
        sym(vs, mv.z1),
        sym(vs, mv.z2),
        sym(vs, v.q3),
        sym(vs, v.z3),
    );
    let band = script_p(
        n,
        bounds,
        j,
        &BandInputs {
            q1: &q1,
            q2: &q2,
            z1: &z1,
            z2: &z2,
            q3: &q3,
            z3: &z3,
        },
    )?;
    SymExpr::congruence(&w5(n, bounds, j), &sym(vs, mv.p))?.add(&band)
}

/// `diag(S_a, 0_n) − diag(0_n, S_b)` on `κ = [x(k+1); x̄(k)]`.
fn cross_core(sa: &SymExpr, sb: &SymExpr, n: usize) -> Result<SymExpr> {
    let dim = sa.dim() + n;
    sa.embed(dim, 0).sub(&sb.embed(dim, n))
}

/// Delay values `l` of the two families of cross inequalities, in order:
/// `(from_mode, to_mode, l)`.
pub fn cross_indices(bounds: &DelayBounds) -> Vec<(usize, usize, usize)> {
    let mut out: Vec<_> = (bounds.d_m..=bounds.d_n).map(|l| (1, 2, l)).collect();
    out.extend((bounds.d_n..=bounds.d_big).map(|l| (2, 1, l)));
    out
}

/// Switched path-complete analysis of a system with a constant and a
/// time-varying delay.
pub fn theorem1_problem(sys: &DelaySystem) -> Result<AnalysisProblem> {
    let n = sys.dim();
    let bounds = sys.bounds;
    let mut vs = VarSpace::new();
    let v = declare_switched(&mut vs, n);
    let q3 = sym(&vs, v.q3);
    let z3 = sym(&vs, v.z3);
    let mut lmi = LmiProblem::default();
    let subs = split_switched(sys);
    for (j, sub) in [(1usize, &subs.0), (2, &subs.1)] {
        let sel = build_appendix_b(n, &bounds, j)?.mode;
        let m = ModeExprs::new(&vs, v.mode(j));
        lmi.push(
            psi_z(&m.z2, &m.x)?,
            Sense::PositiveDefinite,
            ConstraintTag::Coupling(format!("Psi_z_{j}")),
        );
        let g = gamma_perp(&sub.a, &sub.a_m, &sub.a_d, &sub.a_big, sel.layout.n_blocks());
        let tail = (j == 1).then_some((&q3, &z3));
        for d in vertices(sub.d_m, sub.d_big) {
            let ph = phi(&sel, d as f64, &m, tail)?;
            lmi.push(
                SymExpr::congruence(&g, &ph)?,
                Sense::NegativeDefinite,
                ConstraintTag::Mode { mode: j, vertex: d as i64 },
            );
        }
    }
    let s1 = s_matrix(&vs, &v, n, &bounds, 1)?;
    let s2 = s_matrix(&vs, &v, n, &bounds, 2)?;
    for (from, to, l) in cross_indices(&bounds) {
        let (sa, sb) = if from == 1 { (&s1, &s2) } else { (&s2, &s1) };
        let lp = ell_perp(&sys.a, &sys.a_n, &sys.a_d, bounds.d_n, bounds.d_big, l);
        lmi.push(
            SymExpr::congruence(&lp, &cross_core(sa, sb, n)?)?,
            Sense::NegativeDefinite,
            ConstraintTag::Cross { from, to, l: l as i64 },
        );
    }
    let mut dom: Vec<BlockId> = Vec::new();
    for j in 1..=2 {
        dom.extend(mode_domain(v.mode(j)));
    }
    dom.extend([v.q3, v.z3]);
    push_domain(&mut lmi, &vs, &dom);
    lmi.vars = vs;
    Ok(AnalysisProblem {
        lmi,
        vars: AnalysisVars::Switched(v),
        n,
    })
}

fn dense_const(m: &DMatrix<f64>) -> SparseMat {
    SparseMat::from_dense(m)
}

/// Barred closed-loop matrices `Ā = A Jᵀ`, `Ā_d`, `Ā_n` and `J` as
/// expressions in `U, K̄, F̄, L̄`.
struct BarredLoop {
    j: AffineExpr,
    a: AffineExpr,
    a_d: AffineExpr,
    a_n: AffineExpr,
}

fn barred_loop(plant: &PlantModel, vs: &VarSpace, u: BlockId, kb: BlockId, fb: BlockId, lb: BlockId) -> Result<BarredLoop> {
    let np = plant.n_p();
    let ap = dense_const(&plant.a_p);
    let bp = dense_const(&plant.b_p);
    let u = vs.expr(u);
    let ut = u.transpose();
    let bk = vs.expr(kb).mul_left(&bp)?;
    let bf = vs.expr(fb).mul_left(&bp)?;
    let l = vs.expr(lb);
    let sz = [np, np];
    let j = AffineExpr::from_blocks(&sz, &sz, &[vec![Some(u.clone()), None], vec![None, Some(u)]])?;
    let apu = ut.mul_left(&ap)?;
    let a = AffineExpr::from_blocks(
        &sz,
        &sz,
        &[
            vec![Some(apu.add(&bk)?), Some(bk.scale(-1.0))],
            vec![None, Some(apu)],
        ],
    )?;
    let a_d = AffineExpr::from_blocks(&sz, &sz, &[vec![Some(bf.clone()), None], vec![Some(l.scale(-1.0)), None]])?;
    let a_n = AffineExpr::from_blocks(
        &sz,
        &sz,
        &[
            vec![Some(bf.scale(-1.0)), Some(bf)],
            vec![Some(l.clone()), Some(l.scale(-1.0))],
        ],
    )?;
    Ok(BarredLoop { j, a, a_d, a_n })
}

/// `ℐ = [I, εI, 0, …]` with `cols` columns.
fn multiplier(n: usize, eps: f64, cols: usize) -> SparseMat {
    let mut t = Vec::with_capacity(2 * n);
    for i in 0..n {
        t.push((i, i, 1.0));
        t.push((i, n + i, eps));
    }
    SparseMat::from_triplets(n, cols, t)
}

/// Places `n × n` expressions side by side at the given block columns
/// (entries landing on the same block are added).
fn block_row(n: usize, n_blocks: usize, parts: &[(usize, &AffineExpr)]) -> Result<AffineExpr> {
    let mut row = AffineExpr::zeros(n, n * n_blocks);
    for (blk, e) in parts {
        row = row.add(&e.embed(n, n * n_blocks, 0, blk * n))?;
    }
    Ok(row)
}

/// Observer-based controller co-design for a plant with unknown
/// time-varying output delay; `eps` must lie in `(−1, 0]`.
pub fn corollary1_problem(plant: &PlantModel, bounds: DelayBounds, eps: f64) -> Result<DesignProblem> {
    if !(eps > -1.0 && eps <= 0.0) {
        return Err(Error::Config(format!("epsilon must lie in (-1, 0], got {eps}")));
    }
    let np = plant.n_p();
    let n = 2 * np;
    let mut vs = VarSpace::new();
    let v = declare_switched(&mut vs, n);
    let u = vs.add_full("U", np, np);
    let k_bar = vs.add_full("Kbar", plant.m(), np);
    let f_bar = vs.add_full("Fbar", plant.m(), np);
    let l_bar = vs.add_full("Lbar", np, np);
    let bl = barred_loop(plant, &vs, u, k_bar, f_bar, l_bar)?;
    let neg_jt = bl.j.transpose().scale(-1.0);
    let zero = AffineExpr::zeros(n, n);
    let q3 = sym(&vs, v.q3);
    let z3 = sym(&vs, v.z3);
    let mut lmi = LmiProblem::default();
    for j in 1..=2usize {
        let sel = build_appendix_b(n, &bounds, j)?.mode;
        let nb = sel.layout.n_blocks();
        let m = ModeExprs::new(&vs, v.mode(j));
        lmi.push(
            psi_z(&m.z2, &m.x)?,
            Sense::PositiveDefinite,
            ConstraintTag::Coupling(format!("Psi_z_{j}")),
        );
        let (a_m, a_big) = if j == 1 { (&zero, &bl.a_n) } else { (&bl.a_n, &zero) };
        let dyn_row = block_row(n, nb, &[(0, &neg_jt), (1, &bl.a), (2, a_m), (3, &bl.a_d), (4, a_big)])?;
        let upsilon = SymExpr::he(&dyn_row.mul_left(&multiplier(n, eps, nb * n).transpose())?)?;
        let tail = (j == 1).then_some((&q3, &z3));
        let (dmj, dbj) = bounds.mode(j);
        for d in vertices(dmj, dbj) {
            let ph = phi(&sel, d as f64, &m, tail)?;
            lmi.push(
                ph.add(&upsilon)?,
                Sense::NegativeDefinite,
                ConstraintTag::Mode { mode: j, vertex: d as i64 },
            );
        }
    }
    let s1 = s_matrix(&vs, &v, n, &bounds, 1)?;
    let s2 = s_matrix(&vs, &v, n, &bounds, 2)?;
    let nk = bounds.d_big + 2;
    let mult_t = multiplier(n, eps, nk * n).transpose();
    for (from, to, l) in cross_indices(&bounds) {
        let (sa, sb) = if from == 1 { (&s1, &s2) } else { (&s2, &s1) };
        let lbar = block_row(n, nk, &[(0, &neg_jt), (1, &bl.a), (1 + bounds.d_n, &bl.a_n), (1 + l, &bl.a_d)])?;
        let he = SymExpr::he(&lbar.mul_left(&mult_t)?)?;
        lmi.push(
            cross_core(sa, sb, n)?.add(&he)?,
            Sense::NegativeDefinite,
            ConstraintTag::Cross { from, to, l: l as i64 },
        );
    }
    let mut dom: Vec<BlockId> = Vec::new();
    for j in 1..=2 {
        dom.extend(mode_domain(v.mode(j)));
    }
    dom.extend([v.q3, v.z3]);
    push_domain(&mut lmi, &vs, &dom);
    lmi.vars = vs;
    Ok(DesignProblem {
        lmi,
        lkf: v,
        u,
        k_bar,
        f_bar,
        l_bar,
        eps,
        plant: plant.clone(),
        bounds,
    })
}

/// Largest condition number of `U` accepted when recovering gains.
pub const MAX_U_CONDITION: f64 = 1e12;

/// Gains recovered from a design solution, with the closed loop they form.
#[derive(Clone, Debug)]
pub struct RecoveredDesign {
    pub gains: ControllerGains,
    pub closed_loop: DelaySystem,
    pub u: DMatrix<f64>,
    pub u_condition: f64,
}

/// `K = K̄U⁻ᵀ`, `F = F̄U⁻ᵀ`, `L = L̄U⁻ᵀ`.
pub fn recover_gains(problem: &DesignProblem, y: &[f64]) -> Result<RecoveredDesign> {
    let vs = &problem.lmi.vars;
    let u = vs.value(problem.u, y);
    let cond = linalg::condition_number(&u);
    if !cond.is_finite() || cond > MAX_U_CONDITION {
        return Err(Error::Numerical(format!("U is numerically singular (condition number {cond:e})")));
    }
    let u_inv_t = u
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("U is not invertible".into()))?;
    let gains = ControllerGains {
        k: vs.value(problem.k_bar, y) * &u_inv_t,
        f: vs.value(problem.f_bar, y) * &u_inv_t,
        l: vs.value(problem.l_bar, y) * &u_inv_t,
    };
    let closed_loop = build_closed_loop(&problem.plant, &gains, problem.bounds)?;
    Ok(RecoveredDesign {
        gains,
        closed_loop,
        u,
        u_condition: cond,
    })
}

/// Maps a design solution to an assignment of the analysis problem of the
/// recovered closed loop: every functional matrix is transformed by the
/// inverse of `J = diag(U, U)` blockwise, `M ↦ T⁻¹ M T⁻ᵀ`.
pub fn unbar_certificate(problem: &DesignProblem, y: &[f64], analysis: &AnalysisProblem) -> Result<Vec<f64>> {
    let AnalysisVars::Switched(av) = analysis.vars else {
        return Err(Error::Config("analysis problem must be the switched form".into()));
    };
    let vs = &problem.lmi.vars;
    let u = vs.value(problem.u, y);
    let np = problem.plant.n_p();
    let mut j = DMatrix::zeros(2 * np, 2 * np);
    j.view_mut((0, 0), (np, np)).copy_from(&u);
    j.view_mut((np, np), (np, np)).copy_from(&u);
    let j_inv = j
        .try_inverse()
        .ok_or_else(|| Error::Numerical("J is not invertible".into()))?;
    let tinv = |dim: usize| -> DMatrix<f64> {
        let copies = dim / j_inv.nrows();
        let parts: Vec<&DMatrix<f64>> = std::iter::repeat_n(&j_inv, copies).collect();
        linalg::block_diag(&parts)
    };
    let mut out = vec![0.0; analysis.lmi.vars.n_scalars()];
    let avs = &analysis.lmi.vars;
    let mut map = |from: BlockId, to: BlockId| {
        let m = vs.value(from, y);
        let t = tinv(m.nrows());
        let mut v = &t * m * t.transpose();
        if vs.block(from).kind == crate::lmi::BlockKind::Symmetric {
            v = linalg::symmetrize(&v);
        }
        avs.set_value(to, &v, &mut out);
    };
    for jm in 1..=2 {
        let (b, a) = (problem.lkf.mode(jm), av.mode(jm));
        for (f, t) in [(b.p, a.p), (b.q1, a.q1), (b.q2, a.q2), (b.z1, a.z1), (b.z2, a.z2), (b.x, a.x)] {
            map(f, t);
        }
    }
    map(problem.lkf.q3, av.q3);
    map(problem.lkf.z3, av.z3);
    Ok(out)
}
