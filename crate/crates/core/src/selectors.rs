//! Constant selector matrices acting on the augmented vectors `ξ` and `x̄`,
//! the weighting function `γ`, and the band matrix that turns the
//! summation terms of the functional into a quadratic form.
//!
//! The augmented vector `ξ` is built from `n`-blocks in this order:
//!
//! | block | content |
//! |-------|---------|
//! | 0 | `x(k+1)` |
//! | 1 | `x(k)` |
//! | 2 | `x(k−d_m)` |
//! | 3 | `x(k−d(k))` |
//! | 4 | `x(k−d_M)` |
//! | 5 | `v₁`, mean of `x` over `[k−d_m, k]` |
//! | 6 | `v₂`, mean over `[k−d(k), k−d_m]` |
//! | 7 | `v₃`, mean over `[k−d_M, k−d(k)]` |
//! | 8 | `x(k−d_M^tot)` (first mode of a split system only) |
//! | 9 | `v₄`, mean over `[k−d_M^tot, k−d_M]` (first mode only) |

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::lmi::{AffineExpr, SparseMat, SymExpr};
use crate::model::{DelayBounds, HistoryVector};

/// `γ(1) = 1`, `γ(d) = (d+1)/(d−1)` otherwise.
pub fn gamma(d: i64) -> Result<Ratio<i64>> {
    match d {
        d if d <= 0 => Err(Error::InvalidDelays(format!("gamma needs d >= 1, got {d}"))),
        1 => Ok(Ratio::from_integer(1)),
        d => Ok(Ratio::new(d + 1, d - 1)),
    }
}

pub fn gamma_f64(d: usize) -> f64 {
    let g = gamma(d as i64).expect("delay bounds are positive");
    *g.numer() as f64 / *g.denom() as f64
}

/// `n × n·nb` matrix selecting block `k`.
pub fn block_selector(k: usize, nb: usize, n: usize) -> SparseMat {
    SparseMat::from_triplets(n, n * nb, (0..n).map(|i| (i, k * n + i, 1.0)))
}

/// Linear combination `Σ c·E_k` of block selectors.
fn combo(terms: &[(usize, f64)], nb: usize, n: usize) -> SparseMat {
    let mut out = SparseMat::zeros(n, n * nb);
    for &(k, c) in terms {
        out = out.add(&block_selector(k, nb, n).scale(c));
    }
    out
}

fn vstack(rows: Vec<SparseMat>) -> SparseMat {
    let refs: Vec<&SparseMat> = rows.iter().collect();
    SparseMat::vstack(&refs)
}

/// Shape of `ξ`: delay bounds of the (sub)system and, for the first mode
/// of a split system, the overall maximal delay that adds two extra blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct XiLayout {
    pub n: usize,
    pub d_m: usize,
    pub d_big: usize,
    /// Overall maximal delay when the extra `x(k−d_M^tot)`, `v₄` blocks exist.
    pub tail: Option<usize>,
}

impl XiLayout {
    /// Layout for a bounded-delay subsystem analysed on its own.
    pub fn plain(n: usize, d_m: usize, d_big: usize) -> Result<Self> {
        if d_m < 1 || d_m > d_big || n == 0 {
            return Err(Error::InvalidDelays(format!(
                "need n >= 1 and 1 <= d_m <= d_M, got n={n}, ({d_m}, {d_big})"
            )));
        }
        Ok(Self {
            n,
            d_m,
            d_big,
            tail: None,
        })
    }

    /// Layout of mode `j` of the switched split of `bounds`.
    pub fn mode(n: usize, bounds: &DelayBounds, j: usize) -> Result<Self> {
        if j != 1 && j != 2 {
            return Err(Error::InvalidModel(format!("mode must be 1 or 2, got {j}")));
        }
        let (d_m, d_big) = bounds.mode(j);
        let mut l = Self::plain(n, d_m, d_big)?;
        if j == 1 {
            l.tail = Some(bounds.d_big);
        }
        Ok(l)
    }

    pub fn n_blocks(&self) -> usize {
        if self.tail.is_some() {
            10
        } else {
            8
        }
    }

    pub fn dim(&self) -> usize {
        self.n * self.n_blocks()
    }

    pub fn d_delta(&self) -> usize {
        self.d_big - self.d_m
    }

    /// `d_M^tot − d_M`, zero without the extra blocks.
    pub fn d_delta_tail(&self) -> usize {
        self.tail.map_or(0, |t| t - self.d_big)
    }
}

fn mean(history: &HistoryVector, from: usize, to: usize) -> DVector<f64> {
    let mut s = DVector::zeros(history.dim());
    for i in from..=to {
        s += history.at(i);
    }
    s / (to - from + 1) as f64
}

/// Builds `ξ` from `x(k+1)`, the history `x̄(k)` and the current delay.
pub fn xi_assemble(
    x_next: &DVector<f64>,
    history: &HistoryVector,
    d_k: usize,
    layout: &XiLayout,
) -> Result<DVector<f64>> {
    let total = layout.tail.unwrap_or(layout.d_big);
    if history.len() < total + 1 {
        return Err(Error::Dimension(format!(
            "history holds {} samples, need {}",
            history.len(),
            total + 1
        )));
    }
    if d_k < layout.d_m || d_k > layout.d_big {
        return Err(Error::InvalidDelays(format!(
            "delay {d_k} outside [{}, {}]",
            layout.d_m, layout.d_big
        )));
    }
    let n = layout.n;
    if x_next.len() != n || history.dim() != n {
        return Err(Error::Dimension("state dimension mismatch".into()));
    }
    let mut parts = vec![
        x_next.clone(),
        history.at(0).clone(),
        history.at(layout.d_m).clone(),
        history.at(d_k).clone(),
        history.at(layout.d_big).clone(),
        mean(history, 0, layout.d_m),
        mean(history, layout.d_m, d_k),
        mean(history, d_k, layout.d_big),
    ];
    if let Some(t) = layout.tail {
        parts.push(history.at(t).clone());
        parts.push(mean(history, layout.d_big, t));
    }
    let mut xi = DVector::zeros(n * parts.len());
    for (k, p) in parts.iter().enumerate() {
        xi.rows_mut(k * n, n).copy_from(p);
    }
    Ok(xi)
}

/// Selector matrices for the single-interval analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectorSetA {
    pub n: usize,
    pub d_m: usize,
    pub d_big: usize,
    /// `2n × 6n` Wirtinger difference pattern.
    pub m: SparseMat,
    pub w_psi: SparseMat,
    pub w_s: SparseMat,
    pub w3: SparseMat,
    pub w1: SparseMat,
    pub w2: SparseMat,
    /// `3n × 3n` weights applied to `[v₁; v₂; v₃]`.
    pub w4: SparseMat,
    /// `W(d) = d · w_slope`.
    pub w_slope: SparseMat,
}

impl SelectorSetA {
    pub fn w(&self, d: f64) -> SparseMat {
        self.w_slope.scale(d)
    }
}

pub fn build_appendix_a(n: usize, d_m: usize, d_big: usize) -> Result<SelectorSetA> {
    let layout = XiLayout::plain(n, d_m, d_big)?;
    let ms = ModeSelectors::new(layout);
    let m = vstack(vec![
        combo(&[(1, 1.0), (2, -1.0)], 6, n),
        combo(&[(1, 1.0), (2, 1.0), (5, -2.0)], 6, n),
    ]);
    let w4 = vstack(vec![
        SparseMat::zeros(n, 3 * n),
        combo(&[(0, (d_m + 1) as f64)], 3, n),
        combo(&[(1, 1.0 - d_m as f64), (2, (d_big + 1) as f64)], 3, n),
    ]);
    Ok(SelectorSetA {
        n,
        d_m,
        d_big,
        m,
        w_psi: ms.w_psi,
        w_s: ms.w_s,
        w3: ms.w3,
        w1: ms.w1,
        w2: ms.w2,
        w4,
        w_slope: ms.w_slope,
    })
}

/// Selector matrices for one `ξ` layout. For the plain layout these are the
/// single-interval matrices; for a split mode they carry the extra rows and
/// columns of the first mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSelectors {
    pub layout: XiLayout,
    /// Maps `ξ(k)` to `w(k)` together with `d(k)·w_slope`.
    pub w1: SparseMat,
    /// Maps `ξ(k)` to `w(k+1)` together with `d(k)·w_slope`.
    pub w2: SparseMat,
    pub w_slope: SparseMat,
    pub w3: SparseMat,
    pub w_s: SparseMat,
    pub w_psi: SparseMat,
    /// Wirtinger pattern for the tail interval (first mode only).
    pub w_z: Option<SparseMat>,
}

impl ModeSelectors {
    pub fn new(layout: XiLayout) -> Self {
        let n = layout.n;
        let nb = layout.n_blocks();
        let dm = layout.d_m as f64;
        let dbig = layout.d_big as f64;
        let c = |t: &[(usize, f64)]| combo(t, nb, n);
        let mut w1 = vec![
            c(&[(1, 1.0)]),
            c(&[(1, -1.0), (5, dm + 1.0)]),
            c(&[(2, -1.0), (3, -1.0), (6, 1.0 - dm), (7, dbig + 1.0)]),
        ];
        let mut w2 = vec![
            c(&[(0, 1.0)]),
            c(&[(2, -1.0), (5, dm + 1.0)]),
            c(&[(3, -1.0), (4, -1.0), (6, 1.0 - dm), (7, dbig + 1.0)]),
        ];
        let mut slope = vec![
            SparseMat::zeros(n, n * nb),
            SparseMat::zeros(n, n * nb),
            c(&[(6, 1.0), (7, -1.0)]),
        ];
        let mut w_z = None;
        if layout.tail.is_some() {
            let dd = layout.d_delta_tail() as f64;
            w1.push(c(&[(4, -1.0), (9, dd + 1.0)]));
            w2.push(c(&[(8, -1.0), (9, dd + 1.0)]));
            slope.push(SparseMat::zeros(n, n * nb));
            w_z = Some(vstack(vec![c(&[(4, 1.0), (8, -1.0)]), c(&[(4, 1.0), (8, 1.0), (9, -2.0)])]));
        }
        Self {
            layout,
            w1: vstack(w1),
            w2: vstack(w2),
            w_slope: vstack(slope),
            w3: c(&[(0, 1.0), (1, -1.0)]),
            w_s: vstack(vec![c(&[(1, 1.0), (2, -1.0)]), c(&[(1, 1.0), (2, 1.0), (5, -2.0)])]),
            w_psi: vstack(vec![
                c(&[(3, 1.0), (4, -1.0)]),
                c(&[(3, 1.0), (4, 1.0), (7, -2.0)]),
                c(&[(2, 1.0), (3, -1.0)]),
                c(&[(2, 1.0), (3, 1.0), (6, -2.0)]),
            ]),
            w_z,
        }
    }

    pub fn e(&self, k: usize) -> SparseMat {
        block_selector(k, self.layout.n_blocks(), self.layout.n)
    }

    /// `W₁ + d·W_slope`.
    pub fn w1_at(&self, d: f64) -> SparseMat {
        self.w1.add(&self.w_slope.scale(d))
    }

    /// `W₂ + d·W_slope`.
    pub fn w2_at(&self, d: f64) -> SparseMat {
        self.w2.add(&self.w_slope.scale(d))
    }
}

/// Selector matrices for one mode of the switched split, including the map
/// `W₅` from `x̄(k)` to the functional's augmented state.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectorSetB {
    pub j: usize,
    pub bounds: DelayBounds,
    pub mode: ModeSelectors,
    pub w5: SparseMat,
}

pub fn build_appendix_b(n: usize, bounds: &DelayBounds, j: usize) -> Result<SelectorSetB> {
    let layout = XiLayout::mode(n, bounds, j)?;
    Ok(SelectorSetB {
        j,
        bounds: *bounds,
        mode: ModeSelectors::new(layout),
        w5: w5(n, bounds, j),
    })
}

/// Rows: `x(k)`, then the sums of `x(k−t)` over `t ∈ [1, d_mj]`,
/// `t ∈ [d_mj+1, d_Mj]` and, for mode 1, `t ∈ [d_M1+1, d_M]`.
pub fn w5(n: usize, bounds: &DelayBounds, j: usize) -> SparseMat {
    let (dmj, dbj) = bounds.mode(j);
    let nb = bounds.d_big + 1;
    let range = |a: usize, b: usize| combo(&(a..=b).map(|t| (t, 1.0)).collect::<Vec<_>>(), nb, n);
    let mut rows = vec![block_selector(0, nb, n), range(1, dmj), range(dmj + 1, dbj)];
    if j == 1 {
        rows.push(range(dbj + 1, bounds.d_big));
    }
    vstack(rows)
}

/// Functional matrices entering the band matrix of one mode.
pub struct BandInputs<'a> {
    pub q1: &'a SymExpr,
    pub q2: &'a SymExpr,
    pub z1: &'a SymExpr,
    pub z2: &'a SymExpr,
    pub q3: &'a SymExpr,
    pub z3: &'a SymExpr,
}

/// Block tridiagonal matrix on `n(d_M+1)` with the given diagonal and
/// super-diagonal blocks; every block must be symmetric.
fn band(n: usize, diag: &[SymExpr], off: &[SymExpr]) -> Result<SymExpr> {
    let nb = diag.len();
    let dim = n * nb;
    let mut acc = AffineExpr::zeros(dim, dim);
    for (a, d) in diag.iter().enumerate() {
        acc = acc.add(&d.inner().embed(dim, dim, a * n, a * n))?;
    }
    for (a, o) in off.iter().enumerate() {
        acc = acc.add(&o.inner().embed(dim, dim, a * n, (a + 1) * n))?;
        acc = acc.add(&o.inner().transpose().embed(dim, dim, (a + 1) * n, a * n))?;
    }
    SymExpr::new(acc)
}

/// `𝒫_j`: the summation terms of the functional of mode `j` written as a
/// quadratic form in `x̄(k)`.
pub fn script_p(n: usize, bounds: &DelayBounds, j: usize, v: &BandInputs) -> Result<SymExpr> {
    let (dmj, dbj) = bounds.mode(j);
    let dd = dbj - dmj;
    let nb = bounds.d_big + 1;
    let (fm, fd) = (dmj as f64, dd as f64);
    let lin = |terms: &[(&SymExpr, f64)]| -> Result<SymExpr> {
        let mut s = SymExpr::zeros(n);
        for (e, c) in terms {
            if *c != 0.0 {
                s = s.add(&e.scale(*c))?;
            }
        }
        Ok(s)
    };
    let mut diag = Vec::with_capacity(nb);
    let mut off = Vec::with_capacity(nb - 1);
    diag.push(lin(&[(v.z1, fm * fm), (v.z2, fd * fd)])?);
    for i in 1..=dmj {
        let fi = i as f64;
        diag.push(lin(&[
            (v.q1, 1.0),
            (v.z2, 2.0 * fd * fd),
            (v.z1, fm * (2.0 * fm - 2.0 * fi + 1.0)),
        ])?);
        off.push(lin(&[(v.z2, -fd * fd), (v.z1, -fm * (fm - fi + 1.0))])?);
    }
    for l in 1..=dd {
        let fl = l as f64;
        diag.push(lin(&[(v.q2, 1.0), (v.z2, fd * (2.0 * fd - 2.0 * fl + 1.0))])?);
        off.push(lin(&[(v.z2, -fd * (fd - fl + 1.0))])?);
    }
    for _ in dbj + 1..=bounds.d_big {
        diag.push(v.q3.clone());
        off.push(SymExpr::zeros(n));
    }
    let tail = bounds.d_big - dbj;
    if j == 1 && tail > 0 {
        let ft = tail as f64;
        diag[0] = diag[0].add(&v.z3.scale(ft * ft))?;
        for i in 1..=dbj {
            diag[i] = diag[i].add(&v.z3.scale(2.0 * ft * ft))?;
            off[i - 1] = off[i - 1].add(&v.z3.scale(-ft * ft))?;
        }
        for l in 1..=tail {
            let fl = l as f64;
            diag[dbj + l] = diag[dbj + l].add(&v.z3.scale(ft * (2.0 * ft - 2.0 * fl + 1.0)))?;
            off[dbj + l - 1] = off[dbj + l - 1].add(&v.z3.scale(-ft * (ft - fl + 1.0)))?;
        }
    }
    band(n, &diag, &off)
}

/// `Γ⊥ = [A A_m A_d A_M 0; I]`, a basis of the kernel of the dynamics
/// constraint on `ξ`.
pub fn gamma_perp(
    a: &DMatrix<f64>,
    a_m: &DMatrix<f64>,
    a_d: &DMatrix<f64>,
    a_big: &DMatrix<f64>,
    n_blocks: usize,
) -> SparseMat {
    let n = a.nrows();
    let top = SparseMat::hstack(&[
        &SparseMat::from_dense(a),
        &SparseMat::from_dense(a_m),
        &SparseMat::from_dense(a_d),
        &SparseMat::from_dense(a_big),
        &SparseMat::zeros(n, n * (n_blocks - 5)),
    ]);
    SparseMat::vstack(&[&top, &SparseMat::identity(n * (n_blocks - 1))])
}

/// `ℒ(l) = [−I, A, 0…, A_n, 0…] + A_d·δ_l`, acting on `κ = [x(k+1); x̄(k)]`.
pub fn ell(
    a: &DMatrix<f64>,
    a_n: &DMatrix<f64>,
    a_d: &DMatrix<f64>,
    d_n: usize,
    d_big: usize,
    l: usize,
) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n, n * (d_big + 2));
    m.view_mut((0, 0), (n, n)).fill_with_identity();
    m.view_mut((0, 0), (n, n)).scale_mut(-1.0);
    let mut add = |blk: usize, x: &DMatrix<f64>| {
        let mut v = m.view_mut((0, blk * n), (n, n));
        v += x;
    };
    add(1, a);
    add(1 + d_n, a_n);
    add(1 + l, a_d);
    m
}

/// `ℒ⊥(l) = [ℒ_a(l); I]`, satisfying `ℒ(l)·ℒ⊥(l) = 0`.
pub fn ell_perp(
    a: &DMatrix<f64>,
    a_n: &DMatrix<f64>,
    a_d: &DMatrix<f64>,
    d_n: usize,
    d_big: usize,
    l: usize,
) -> SparseMat {
    let n = a.nrows();
    let full = ell(a, a_n, a_d, d_n, d_big, l);
    let top = full.columns(n, n * (d_big + 1)).into_owned();
    SparseMat::vstack(&[
        &SparseMat::from_dense(&top),
        &SparseMat::identity(n * (d_big + 1)),
    ])
}
