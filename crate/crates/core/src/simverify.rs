//! Time-domain simulation of delay systems and of the plant/observer loop,
//! delay-signal generation, two independent evaluations of the switched
//! functionals, and trajectory checks of their path-complete decrease.
//!
//! The brute-force cross-check works on the delay-augmented companion form
//! and is only meant for desk-scale systems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditions::{s_matrix, switched_space, AnalysisProblem, AnalysisVars, ModeVars};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lmi::VarSpace;
use crate::model::{sigma, ControllerGains, DelayBounds, DelaySystem, HistoryVector, PlantModel};
use crate::sdp::Margin;

/// How a delay signal picks `d(k)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SignalKind {
    Constant { d: usize },
    /// Independent uniform draws from `[d_m, d_M]`.
    UniformRandom { seed: u64 },
    /// `period` samples at `d_m`, then `period` samples at `d_M`, repeated.
    ExtremalToggle { period: usize },
    /// The given values, repeated cyclically.
    Explicit { sequence: Vec<usize> },
}

/// A delay signal restricted to `[d_m, d_M]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelaySignal {
    kind: SignalKind,
    d_m: usize,
    #[serde(rename = "d_M")]
    d_big: usize,
}

impl DelaySignal {
    pub fn new(kind: SignalKind, d_m: usize, d_big: usize) -> Result<Self> {
        if d_m > d_big {
            return Err(Error::InvalidDelays(format!("empty delay range [{d_m}, {d_big}]")));
        }
        let in_range = |d: usize| (d_m..=d_big).contains(&d);
        match &kind {
            SignalKind::Constant { d } if !in_range(*d) => {
                return Err(Error::InvalidDelays(format!("constant delay {d} outside [{d_m}, {d_big}]")));
            }
            SignalKind::ExtremalToggle { period: 0 } => {
                return Err(Error::InvalidDelays("toggle period must be at least 1".into()));
            }
            SignalKind::Explicit { sequence } => {
                if sequence.is_empty() {
                    return Err(Error::InvalidDelays("explicit delay sequence is empty".into()));
                }
                if let Some(d) = sequence.iter().find(|d| !in_range(**d)) {
                    return Err(Error::InvalidDelays(format!("delay {d} outside [{d_m}, {d_big}]")));
                }
            }
            _ => {}
        }
        Ok(Self { kind, d_m, d_big })
    }

    /// Signal over the full range of `bounds`.
    pub fn over(kind: SignalKind, bounds: &DelayBounds) -> Result<Self> {
        Self::new(kind, bounds.d_m, bounds.d_big)
    }

    pub fn kind(&self) -> &SignalKind {
        &self.kind
    }

    pub fn range(&self) -> (usize, usize) {
        (self.d_m, self.d_big)
    }

    /// The first `len` values `d(0), …, d(len−1)`.
    pub fn generate(&self, len: usize) -> Vec<usize> {
        match &self.kind {
            SignalKind::Constant { d } => vec![*d; len],
            SignalKind::UniformRandom { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..len).map(|_| rng.random_range(self.d_m..=self.d_big)).collect()
            }
            SignalKind::ExtremalToggle { period } => (0..len)
                .map(|k| if (k / period) % 2 == 0 { self.d_m } else { self.d_big })
                .collect(),
            SignalKind::Explicit { sequence } => sequence.iter().copied().cycle().take(len).collect(),
        }
    }
}

/// A simulated solution of `x(k+1) = A x(k) + A_n x(k−d_n) + A_d x(k−d(k))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `φ(0), φ(−1), …, φ(−d_M)`; `x(0) = φ(0)`.
    pub initial: HistoryVector,
    /// `x(0), …, x(K)`.
    pub states: Vec<DVector<f64>>,
    /// `d(0), …, d(K−1)`.
    pub delays: Vec<usize>,
    /// `σ(0), …, σ(K−1)`.
    pub modes: Vec<usize>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.delays.len()
    }

    /// `x̄(k) = [x(k); x(k−1); …; x(k−d_M)]`, reaching into `φ` for negative times.
    pub fn history(&self, k: usize) -> HistoryVector {
        let samples = (0..self.initial.len())
            .map(|i| {
                if i <= k {
                    self.states[k - i].clone()
                } else {
                    self.initial.at(i - k).clone()
                }
            })
            .collect();
        HistoryVector::new(samples).expect("trajectory samples share one dimension")
    }
}

fn check_history(phi: &HistoryVector, n: usize, d_max: usize, what: &str) -> Result<()> {
    if phi.dim() != n {
        return Err(Error::Dimension(format!("{what} has dimension {}, expected {n}", phi.dim())));
    }
    if phi.len() != d_max + 1 {
        return Err(Error::Dimension(format!(
            "{what} holds {} samples, expected {}",
            phi.len(),
            d_max + 1
        )));
    }
    Ok(())
}

/// Runs the exact recursion for `horizon` steps.
pub fn simulate(sys: &DelaySystem, phi: &HistoryVector, signal: &DelaySignal, horizon: usize) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::Config("simulation horizon must be at least 1".into()));
    }
    check_history(phi, sys.dim(), sys.bounds.d_big, "initial history")?;
    let delays = signal.generate(horizon);
    let modes = delays
        .iter()
        .map(|&d| sigma(d, &sys.bounds))
        .collect::<Result<Vec<_>>>()?;
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(phi.at(0).clone());
    let mut h = phi.clone();
    for &d in &delays {
        let next = sys.step(&h, d);
        states.push(next.clone());
        h = h.shifted(next);
    }
    Ok(Trajectory {
        initial: phi.clone(),
        states,
        delays,
        modes,
    })
}

/// Signals of the plant/observer loop, indexed `0..=K` (inputs and output
/// errors `0..K`).
#[derive(Clone, Debug, PartialEq)]
pub struct ObserverTrajectory {
    pub plant: Vec<DVector<f64>>,
    pub observer: Vec<DVector<f64>>,
    /// `e(k) = x_p(k) − x̂_p(k)`.
    pub error: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    /// `e_y(k) = x_p(k−d(k)) − x̂_p(k−d_n)`.
    pub output_errors: Vec<DVector<f64>>,
    pub delays: Vec<usize>,
}

/// History of the closed-loop state `(x_p, e)` matching plant and observer
/// histories.
pub fn closed_loop_history(phi_p: &HistoryVector, phi_hat: &HistoryVector) -> Result<HistoryVector> {
    if phi_p.len() != phi_hat.len() || phi_p.dim() != phi_hat.dim() {
        return Err(Error::Dimension("plant and observer histories differ in shape".into()));
    }
    let np = phi_p.dim();
    let samples = phi_p
        .samples()
        .iter()
        .zip(phi_hat.samples())
        .map(|(p, h)| {
            let mut v = DVector::zeros(2 * np);
            v.rows_mut(0, np).copy_from(p);
            v.rows_mut(np, np).copy_from(&(p - h));
            v
        })
        .collect();
    HistoryVector::new(samples)
}

/// Simulates plant, Luenberger-type observer and control law directly,
/// without going through the closed-loop matrices.
pub fn simulate_observer_loop(
    plant: &PlantModel,
    gains: &ControllerGains,
    signal: &DelaySignal,
    d_n: usize,
    phi_p: &HistoryVector,
    phi_hat: &HistoryVector,
    horizon: usize,
) -> Result<ObserverTrajectory> {
    gains.validate(plant)?;
    if horizon == 0 {
        return Err(Error::Config("simulation horizon must be at least 1".into()));
    }
    let (d_lo, d_hi) = signal.range();
    if d_n < d_lo || d_n > d_hi {
        return Err(Error::InvalidDelays(format!("nominal delay {d_n} outside [{d_lo}, {d_hi}]")));
    }
    let np = plant.n_p();
    check_history(phi_p, np, d_hi, "plant history")?;
    check_history(phi_hat, np, d_hi, "observer history")?;
    let delays = signal.generate(horizon);
    let (mut hp, mut hh) = (phi_p.clone(), phi_hat.clone());
    let mut out = ObserverTrajectory {
        plant: vec![hp.at(0).clone()],
        observer: vec![hh.at(0).clone()],
        error: vec![hp.at(0) - hh.at(0)],
        inputs: Vec::with_capacity(horizon),
        output_errors: Vec::with_capacity(horizon),
        delays: delays.clone(),
    };
    for &d in &delays {
        let y = hp.at(d);
        let e_y = y - hh.at(d_n);
        let u = &gains.k * hh.at(0) + &gains.f * &e_y;
        let xp = &plant.a_p * hp.at(0) + &plant.b_p * &u;
        let xh = &plant.a_p * hh.at(0) + &plant.b_p * &u + &gains.l * &e_y;
        out.error.push(&xp - &xh);
        out.plant.push(xp.clone());
        out.observer.push(xh.clone());
        out.inputs.push(u);
        out.output_errors.push(e_y);
        hp = hp.shifted(xp);
        hh = hh.shifted(xh);
    }
    Ok(out)
}

/// Matrices of one functional.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalBlocks {
    pub p: DMatrix<f64>,
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub z1: DMatrix<f64>,
    pub z2: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

impl FunctionalBlocks {
    pub fn from_assignment(vs: &VarSpace, v: &ModeVars, y: &[f64]) -> Self {
        Self {
            p: vs.value(v.p, y),
            q1: vs.value(v.q1, y),
            q2: vs.value(v.q2, y),
            z1: vs.value(v.z1, y),
            z2: vs.value(v.z2, y),
            x: vs.value(v.x, y),
        }
    }

    /// Writes the blocks into an assignment vector.
    pub fn store(&self, vs: &VarSpace, v: &ModeVars, y: &mut [f64]) {
        for (id, m) in [
            (v.p, &self.p),
            (v.q1, &self.q1),
            (v.q2, &self.q2),
            (v.z1, &self.z1),
            (v.z2, &self.z2),
            (v.x, &self.x),
        ] {
            vs.set_value(id, m, y);
        }
    }

    fn symmetric(&self) -> [(&'static str, &DMatrix<f64>); 5] {
        [("P", &self.p), ("Q1", &self.q1), ("Q2", &self.q2), ("Z1", &self.z1), ("Z2", &self.z2)]
    }
}

fn symmetric_checked(name: &str, m: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {dim}x{dim}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * (1.0 + m.amax()) {
        return Err(Error::NotSymmetric(format!("{name} (asymmetry {asym:e})")));
    }
    Ok(linalg::symmetrize(m))
}

/// A two-mode certificate: matrices of `V₁` and `V₂` plus the shared tail
/// matrices of `V₁`, with the quadratic forms `S₁`, `S₂` on `x̄(k)`.
#[derive(Clone, Debug)]
pub struct LkfCertificate {
    n: usize,
    bounds: DelayBounds,
    modes: [FunctionalBlocks; 2],
    q3: DMatrix<f64>,
    z3: DMatrix<f64>,
    margins: Vec<Margin>,
    s: [DMatrix<f64>; 2],
}

impl LkfCertificate {
    pub fn new(
        n: usize,
        bounds: DelayBounds,
        modes: [FunctionalBlocks; 2],
        q3: DMatrix<f64>,
        z3: DMatrix<f64>,
    ) -> Result<Self> {
        let mut modes = modes;
        for (idx, m) in modes.iter_mut().enumerate() {
            let j = idx + 1;
            let p_dim = if j == 1 { 4 * n } else { 3 * n };
            m.p = symmetric_checked(&format!("P_{j}"), &m.p, p_dim)?;
            for (name, blk) in [("Q1", &mut m.q1), ("Q2", &mut m.q2), ("Z1", &mut m.z1), ("Z2", &mut m.z2)] {
                *blk = symmetric_checked(&format!("{name}_{j}"), blk, n)?;
            }
            if m.x.nrows() != 2 * n || m.x.ncols() != 2 * n {
                return Err(Error::Dimension(format!("X_{j} must be {0}x{0}", 2 * n)));
            }
        }
        let q3 = symmetric_checked("Q3", &q3, n)?;
        let z3 = symmetric_checked("Z3", &z3, n)?;
        let (vs, v) = switched_space(n);
        let mut y = vec![0.0; vs.n_scalars()];
        for j in 1..=2 {
            modes[j - 1].store(&vs, v.mode(j), &mut y);
        }
        vs.set_value(v.q3, &q3, &mut y);
        vs.set_value(v.z3, &z3, &mut y);
        let s1 = s_matrix(&vs, &v, n, &bounds, 1)?.eval(&y);
        let s2 = s_matrix(&vs, &v, n, &bounds, 2)?.eval(&y);
        Ok(Self {
            n,
            bounds,
            modes,
            q3,
            z3,
            margins: Vec::new(),
            s: [s1, s2],
        })
    }

    /// Certificate from an assignment of a switched analysis problem.
    pub fn from_analysis(problem: &AnalysisProblem, bounds: DelayBounds, y: &[f64]) -> Result<Self> {
        let AnalysisVars::Switched(v) = problem.vars else {
            return Err(Error::Config("a two-mode certificate needs the switched analysis problem".into()));
        };
        let vs = &problem.lmi.vars;
        if y.len() != vs.n_scalars() {
            return Err(Error::Dimension(format!(
                "assignment has {} entries, problem has {}",
                y.len(),
                vs.n_scalars()
            )));
        }
        let modes = [
            FunctionalBlocks::from_assignment(vs, v.mode(1), y),
            FunctionalBlocks::from_assignment(vs, v.mode(2), y),
        ];
        Self::new(problem.n, bounds, modes, vs.value(v.q3, y), vs.value(v.z3, y))
    }

    pub fn with_margins(mut self, margins: Vec<Margin>) -> Self {
        self.margins = margins;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bounds(&self) -> &DelayBounds {
        &self.bounds
    }

    pub fn mode(&self, j: usize) -> &FunctionalBlocks {
        &self.modes[j - 1]
    }

    pub fn q3(&self) -> &DMatrix<f64> {
        &self.q3
    }

    pub fn z3(&self) -> &DMatrix<f64> {
        &self.z3
    }

    pub fn margins(&self) -> &[Margin] {
        &self.margins
    }

    /// Quadratic form of `V_j` on the stacked history.
    pub fn s_matrix(&self, j: usize) -> &DMatrix<f64> {
        &self.s[j - 1]
    }

    /// Smallest eigenvalue among the blocks required to be positive definite.
    pub fn min_block_eigenvalue(&self) -> f64 {
        let mut lo = linalg::min_eigenvalue(&self.q3).min(linalg::min_eigenvalue(&self.z3));
        for m in &self.modes {
            for (_, blk) in m.symmetric() {
                lo = lo.min(linalg::min_eigenvalue(blk));
            }
        }
        lo
    }

    /// `V_j` through its quadratic form.
    pub fn value(&self, j: usize, history: &HistoryVector) -> f64 {
        linalg::quad_form(self.s_matrix(j), &history.stacked())
    }

    fn tail(&self, j: usize) -> Option<TailBlocks<'_>> {
        (j == 1).then_some(TailBlocks {
            d_total: self.bounds.d_big,
            q3: &self.q3,
            z3: &self.z3,
        })
    }
}

/// Extra summation window `[d_M1+1, d_total]` of the first-mode functional.
#[derive(Clone, Copy, Debug)]
pub struct TailBlocks<'a> {
    pub d_total: usize,
    pub q3: &'a DMatrix<f64>,
    pub z3: &'a DMatrix<f64>,
}

/// Values of the three parts of a functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LkfTerms {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl LkfTerms {
    pub fn total(&self) -> f64 {
        self.a + self.b + self.c
    }
}

fn window_sum(h: &HistoryVector, from: usize, to: usize) -> DVector<f64> {
    let mut s = DVector::zeros(h.dim());
    for t in from..=to {
        s += h.at(t);
    }
    s
}

/// Evaluates a functional term by term from its defining sums, for the
/// delay window `[d_lo, d_hi]` and an optional tail window.
///
/// Nothing here goes through the selector matrices, so agreement with the
/// quadratic form is a genuine cross-check.
pub fn functional_terms(
    blocks: &FunctionalBlocks,
    d_lo: usize,
    d_hi: usize,
    tail: Option<TailBlocks<'_>>,
    history: &HistoryVector,
) -> Result<LkfTerms> {
    let reach = tail.map_or(d_hi, |t| t.d_total);
    if d_lo < 1 || d_lo > d_hi || reach < d_hi {
        return Err(Error::InvalidDelays(format!("bad window [{d_lo}, {d_hi}] with reach {reach}")));
    }
    if history.len() < reach + 1 {
        return Err(Error::Dimension(format!(
            "history holds {} samples, need {}",
            history.len(),
            reach + 1
        )));
    }
    let n = history.dim();
    let mut parts = vec![history.at(0).clone(), window_sum(history, 1, d_lo), window_sum(history, d_lo + 1, d_hi)];
    if let Some(t) = tail {
        parts.push(window_sum(history, d_hi + 1, t.d_total));
    }
    if blocks.p.nrows() != n * parts.len() {
        return Err(Error::Dimension(format!(
            "P is {0}x{0}, expected {1}x{1}",
            blocks.p.nrows(),
            n * parts.len()
        )));
    }
    let mut w = DVector::zeros(n * parts.len());
    for (i, p) in parts.iter().enumerate() {
        w.rows_mut(i * n, n).copy_from(p);
    }
    let a = linalg::quad_form(&blocks.p, &w);

    let q = |m: &DMatrix<f64>, v: &DVector<f64>| linalg::quad_form(m, v);
    let mut b = 0.0;
    for t in 1..=d_lo {
        b += q(&blocks.q1, history.at(t));
    }
    for t in d_lo + 1..=d_hi {
        b += q(&blocks.q2, history.at(t));
    }
    if let Some(tb) = tail {
        for t in d_hi + 1..=tb.d_total {
            b += q(tb.q3, history.at(t));
        }
    }

    // η(k−t) = x(k−t) − x(k−t−1); the double sum over l ∈ [−u+1, −s] of
    // Σ_{i=k+l}^{k} η(i)ᵀZη(i) is written with l' = −l and i = k − t.
    let eta = |t: usize| history.at(t) - history.at(t + 1);
    let double = |z: &DMatrix<f64>, s: usize, u: usize| -> f64 {
        let mut acc = 0.0;
        for lp in s..u {
            for t in 0..=lp {
                acc += q(z, &eta(t));
            }
        }
        acc
    };
    let mut c = d_lo as f64 * double(&blocks.z1, 0, d_lo) + (d_hi - d_lo) as f64 * double(&blocks.z2, d_lo, d_hi);
    if let Some(tb) = tail {
        c += (tb.d_total - d_hi) as f64 * double(tb.z3, d_hi, tb.d_total);
    }
    Ok(LkfTerms { a, b, c })
}

/// `V_j(x̄)` evaluated directly from its sums and through `x̄ᵀ S_j x̄`.
pub fn eval_lkf(cert: &LkfCertificate, j: usize, history: &HistoryVector) -> Result<(f64, f64)> {
    if j != 1 && j != 2 {
        return Err(Error::InvalidModel(format!("mode must be 1 or 2, got {j}")));
    }
    if history.dim() != cert.n || history.len() != cert.bounds.d_big + 1 {
        return Err(Error::Dimension(format!(
            "history must hold {} samples of dimension {}",
            cert.bounds.d_big + 1,
            cert.n
        )));
    }
    let (d_lo, d_hi) = cert.bounds.mode(j);
    let direct = functional_terms(cert.mode(j), d_lo, d_hi, cert.tail(j), history)?.total();
    Ok((direct, cert.value(j, history)))
}

/// Which inequality a violation breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ViolationKind {
    /// `V_to(k+1) < V_from(k)` under the dynamics of mode `to`.
    Edge { from: usize, to: usize },
    /// `min(V₁, V₂)` did not decrease.
    Minimum,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub trajectory: usize,
    pub step: usize,
    #[serde(flatten)]
    pub kind: ViolationKind,
    /// Value after the step.
    pub after: f64,
    /// Value before the step.
    pub before: f64,
    /// `after − before`; positive means no decrease.
    pub deficit: f64,
}

/// Likely cause when violations are observed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diagnosis {
    Pass,
    /// Some required-positive block or recorded margin fails, so the
    /// certificate itself is not valid.
    CertificateInvalid,
    /// The certificate checks out yet the functionals do not decrease: the
    /// functional structure disagrees with the conditions that were solved.
    StructuralMismatch,
}

/// Relative slack used for the strict decrease tests.
pub const DECREASE_SLACK: f64 = 1e-9;
/// Trajectories are cut once `‖x̄(k)‖` falls below this.
pub const TRUNCATION_NORM: f64 = 1e-12;
const MAX_RECORDED_VIOLATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecreaseReport {
    pub trajectories: usize,
    pub steps_checked: usize,
    pub truncated_trajectories: usize,
    /// `edge_counts[from−1][to−1]`: how often each edge was exercised.
    pub edge_counts: [[usize; 2]; 2],
    pub violation_count: usize,
    /// At most the first hundred violations.
    pub violations: Vec<Violation>,
    /// Largest observed `m(k+1)/m(k)` with `m = min(V₁, V₂)`.
    pub worst_ratio: f64,
    pub certificate_min_eigenvalue: f64,
    pub diagnosis: Diagnosis,
}

impl DecreaseReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    fn empty(cert_eig: f64) -> Self {
        Self {
            trajectories: 0,
            steps_checked: 0,
            truncated_trajectories: 0,
            edge_counts: [[0; 2]; 2],
            violation_count: 0,
            violations: Vec::new(),
            worst_ratio: 0.0,
            certificate_min_eigenvalue: cert_eig,
            diagnosis: Diagnosis::Pass,
        }
    }

    fn record(&mut self, v: Violation) {
        self.violation_count += 1;
        if self.violations.len() < MAX_RECORDED_VIOLATIONS {
            self.violations.push(v);
        }
    }

    fn merge(&mut self, other: DecreaseReport) {
        self.trajectories += other.trajectories;
        self.steps_checked += other.steps_checked;
        self.truncated_trajectories += other.truncated_trajectories;
        for i in 0..2 {
            for j in 0..2 {
                self.edge_counts[i][j] += other.edge_counts[i][j];
            }
        }
        self.worst_ratio = self.worst_ratio.max(other.worst_ratio);
        self.violation_count += other.violation_count;
        for v in other.violations {
            if self.violations.len() < MAX_RECORDED_VIOLATIONS {
                self.violations.push(v);
            }
        }
    }
}

fn check_one(cert: &LkfCertificate, index: usize, traj: &Trajectory, report: &mut DecreaseReport) {
    report.trajectories += 1;
    let value = |k: usize| {
        let h = traj.history(k).stacked();
        (h.norm(), [linalg::quad_form(&cert.s[0], &h), linalg::quad_form(&cert.s[1], &h)])
    };
    let (mut norm, mut now) = value(0);
    for k in 0..traj.horizon() {
        if norm < TRUNCATION_NORM {
            report.truncated_trajectories += 1;
            return;
        }
        let (next_norm, next) = value(k + 1);
        let m_now = now[0].min(now[1]);
        let slack = DECREASE_SLACK * m_now.abs();
        let to = traj.modes[k];
        for from in 1..=2 {
            report.edge_counts[from - 1][to - 1] += 1;
            let deficit = next[to - 1] - now[from - 1];
            if deficit >= slack {
                report.record(Violation {
                    trajectory: index,
                    step: k,
                    kind: ViolationKind::Edge { from, to },
                    after: next[to - 1],
                    before: now[from - 1],
                    deficit,
                });
            }
        }
        let m_next = next[0].min(next[1]);
        if m_now > 0.0 {
            report.worst_ratio = report.worst_ratio.max(m_next / m_now);
        }
        if m_next - m_now >= slack {
            report.record(Violation {
                trajectory: index,
                step: k,
                kind: ViolationKind::Minimum,
                after: m_next,
                before: m_now,
                deficit: m_next - m_now,
            });
        }
        report.steps_checked += 1;
        (norm, now) = (next_norm, next);
    }
}

/// Checks along every trajectory that the functional of the active mode
/// after each step lies below both functionals before it, and that
/// `min(V₁, V₂)` decreases. Trajectories are checked in parallel.
pub fn check_path_complete_decrease(
    cert: &LkfCertificate,
    sys: &DelaySystem,
    trajectories: &[Trajectory],
) -> Result<DecreaseReport> {
    if sys.bounds != cert.bounds || sys.dim() != cert.n {
        return Err(Error::Config("certificate and system disagree on dimension or delay bounds".into()));
    }
    for t in trajectories {
        if t.initial.len() != cert.bounds.d_big + 1 || t.initial.dim() != cert.n {
            return Err(Error::Dimension("trajectory does not match the system shape".into()));
        }
    }
    let eig = cert.min_block_eigenvalue();
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(trajectories.len().max(1));
    let chunk = trajectories.len().div_ceil(workers).max(1);
    let mut report = DecreaseReport::empty(eig);
    std::thread::scope(|scope| {
        let handles: Vec<_> = trajectories
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                scope.spawn(move || {
                    let mut r = DecreaseReport::empty(eig);
                    for (i, t) in part.iter().enumerate() {
                        check_one(cert, c * chunk + i, t, &mut r);
                    }
                    r
                })
            })
            .collect();
        for h in handles {
            report.merge(h.join().expect("checker thread panicked"));
        }
    });
    report.violations.sort_by_key(|v| (v.trajectory, v.step));
    let margins_ok = cert.margins.iter().all(Margin::passes);
    report.diagnosis = if report.passed() {
        Diagnosis::Pass
    } else if eig <= 0.0 || !margins_ok {
        Diagnosis::CertificateInvalid
    } else {
        Diagnosis::StructuralMismatch
    };
    Ok(report)
}

/// Random initial history with entries uniform in `[−1, 1]`.
pub fn random_history(n: usize, d_max: usize, rng: &mut impl Rng) -> HistoryVector {
    let samples = (0..=d_max)
        .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0)))
        .collect();
    HistoryVector::new(samples).expect("n is positive")
}

/// `count` seeded trajectories with random initial histories and uniformly
/// random delays; trajectory `i` uses delay seed `seed + i + 1`.
pub fn random_trajectories(sys: &DelaySystem, count: usize, horizon: usize, seed: u64) -> Result<Vec<Trajectory>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let phi = random_history(sys.dim(), sys.bounds.d_big, &mut rng);
            let signal = DelaySignal::over(
                SignalKind::UniformRandom {
                    seed: seed.wrapping_add(i as u64 + 1),
                },
                &sys.bounds,
            )?;
            simulate(sys, &phi, &signal, horizon)
        })
        .collect()
}

/// Largest `n(d_M+1)` accepted by the brute-force check.
pub const BRUTE_FORCE_MAX_DIM: usize = 64;
pub const DEFAULT_DEPTH: usize = 12;

/// Companion matrix of `x̄(k+1) = M_d x̄(k)` for a fixed delay `d`.
pub fn augmented_matrix(sys: &DelaySystem, d: usize) -> Result<DMatrix<f64>> {
    let b = sys.bounds;
    if d < b.d_m || d > b.d_big {
        return Err(Error::InvalidDelays(format!("delay {d} outside [{}, {}]", b.d_m, b.d_big)));
    }
    let n = sys.dim();
    let nb = b.d_big + 1;
    let mut m = DMatrix::zeros(n * nb, n * nb);
    let mut add = |col: usize, blk: &DMatrix<f64>| {
        let mut v = m.view_mut((0, col * n), (n, n));
        v += blk;
    };
    add(0, &sys.a);
    add(b.d_n, &sys.a_n);
    add(d, &sys.a_d);
    for i in 1..nb {
        for r in 0..n {
            m[(i * n + r, (i - 1) * n + r)] = 1.0;
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessSource {
    /// A product from the exhaustive enumeration.
    Enumeration,
    /// A periodic extremal delay sequence.
    ExtremalSequence,
}

/// Outcome of the brute-force check.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    NoInstabilityFound {
        products_checked: usize,
        /// Largest `ρ(Π)^{1/t}` among the products whose spectral radius was
        /// computed (those not already pruned by their norm), a lower bound on
        /// the growth rate.
        growth_lower_bound: f64,
        /// Upper bound on the growth rate, present when the enumeration
        /// finished within its budget.
        growth_upper_bound: Option<f64>,
        budget_exhausted: bool,
    },
    /// Repeating `sequence` (delays in time order) makes the state grow at
    /// rate `growth_rate > 1` per step.
    InstabilityWitness {
        sequence: Vec<usize>,
        growth_rate: f64,
        source: WitnessSource,
    },
}

impl Verdict {
    pub fn is_witness(&self) -> bool {
        matches!(self, Verdict::InstabilityWitness { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BruteForceConfig {
    pub depth: usize,
    /// Maximal number of products formed during the enumeration.
    pub node_budget: usize,
}

impl Default for BruteForceConfig {
    fn default() -> Self {
        Self {
            depth: DEFAULT_DEPTH,
            node_budget: 500_000,
        }
    }
}

const GROWTH_THRESHOLD: f64 = 1.0 + 1e-9;

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

struct Search<'a> {
    mats: &'a [DMatrix<f64>],
    delays: &'a [usize],
    depth: usize,
    budget: usize,
    nodes: usize,
    lower: f64,
    upper: f64,
    exhausted: bool,
    word: Vec<usize>,
    witness: Option<(Vec<usize>, f64)>,
}

impl Search<'_> {
    /// Depth-first enumeration of `M_{w_t} ⋯ M_{w_1}`. A branch stops when
    /// its product has `‖Π‖^{1/t} < 1`; the stopped products form a prefix
    /// code, so the largest of their normalised norms bounds the growth
    /// rate from above.
    fn visit(&mut self, prod: &DMatrix<f64>) {
        for (i, m) in self.mats.iter().enumerate() {
            if self.witness.is_some() {
                return;
            }
            if self.nodes >= self.budget {
                self.exhausted = true;
                return;
            }
            self.nodes += 1;
            let p = m * prod;
            self.word.push(self.delays[i]);
            let t = self.word.len() as f64;
            let nrm = inf_norm(&p).powf(1.0 / t);
            if nrm < 1.0 {
                // ρ(Π) ≤ ‖Π‖, so this branch can neither grow nor witness.
                self.upper = self.upper.max(nrm);
            } else {
                let rho = linalg::spectral_radius(&p).powf(1.0 / t);
                self.lower = self.lower.max(rho);
                if rho > GROWTH_THRESHOLD {
                    self.witness = Some((self.word.clone(), rho));
                } else if self.word.len() == self.depth {
                    self.upper = self.upper.max(nrm);
                } else {
                    self.visit(&p);
                }
            }
            self.word.pop();
        }
    }
}

/// Extremal sequences: constant at either end of the range and toggles
/// between the ends with every period up to `d_M + 1`.
fn extremal_sequences(b: &DelayBounds) -> Vec<Vec<usize>> {
    let mut out = vec![vec![b.d_m], vec![b.d_n], vec![b.d_big]];
    if b.d_m != b.d_big {
        for p in 1..=b.d_big + 1 {
            let mut s = vec![b.d_m; p];
            s.extend(std::iter::repeat_n(b.d_big, p));
            out.push(s);
        }
    }
    out
}

/// Searches the delay-augmented switched system for growth.
pub fn brute_force_cross_check(sys: &DelaySystem, depth: usize) -> Result<Verdict> {
    brute_force_cross_check_with(
        sys,
        &BruteForceConfig {
            depth,
            ..Default::default()
        },
    )
}

pub fn brute_force_cross_check_with(sys: &DelaySystem, cfg: &BruteForceConfig) -> Result<Verdict> {
    let b = sys.bounds;
    let dim = sys.dim() * (b.d_big + 1);
    if dim > BRUTE_FORCE_MAX_DIM {
        return Err(Error::Dimension(format!(
            "augmented dimension {dim} exceeds the brute-force cap {BRUTE_FORCE_MAX_DIM}"
        )));
    }
    if cfg.depth == 0 {
        return Err(Error::Config("enumeration depth must be at least 1".into()));
    }
    let delays: Vec<usize> = (b.d_m..=b.d_big).collect();
    let mats = delays
        .iter()
        .map(|&d| augmented_matrix(sys, d))
        .collect::<Result<Vec<_>>>()?;
    let index = |d: usize| d - b.d_m;

    // Periodic extremal sequences: the monodromy over one period decides
    // growth exactly for the repeated sequence.
    let mut lower: f64 = 0.0;
    for seq in extremal_sequences(&b) {
        let mut prod = DMatrix::identity(dim, dim);
        for &d in &seq {
            prod = &mats[index(d)] * prod;
        }
        let rate = linalg::spectral_radius(&prod).powf(1.0 / seq.len() as f64);
        lower = lower.max(rate);
        if rate > GROWTH_THRESHOLD {
            return Ok(Verdict::InstabilityWitness {
                sequence: seq,
                growth_rate: rate,
                source: WitnessSource::ExtremalSequence,
            });
        }
    }

    let mut search = Search {
        mats: &mats,
        delays: &delays,
        depth: cfg.depth,
        budget: cfg.node_budget,
        nodes: 0,
        lower,
        upper: 0.0,
        exhausted: false,
        word: Vec::new(),
        witness: None,
    };
    search.visit(&DMatrix::identity(dim, dim));
    if let Some((sequence, growth_rate)) = search.witness {
        return Ok(Verdict::InstabilityWitness {
            sequence,
            growth_rate,
            source: WitnessSource::Enumeration,
        });
    }
    Ok(Verdict::NoInstabilityFound {
        products_checked: search.nodes,
        growth_lower_bound: search.lower,
        growth_upper_bound: (!search.exhausted).then_some(search.upper),
        budget_exhausted: search.exhausted,
    })
}
