//! The workflows behind the subcommands, as library functions returning
//! typed outcomes. File output lives in the parent module.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use crate::conditions::{
    corollary1_problem, lemma2_problem, recover_gains, theorem1_problem, unbar_certificate, AnalysisProblem,
    RecoveredDesign,
};
use crate::error::{Error, Result};
use crate::lmi::{BlockId, LmiProblem, VarSpace};
use crate::model::{DelayBounds, DelaySystem, PlantModel};
use crate::sdp::{check_margins, normalize, solve, FeasibilityResult, FeasibilityStatus, Margin, SolverConfig, SolverDiagnostics};
use crate::simverify::{
    brute_force_cross_check, check_path_complete_decrease, eval_lkf, random_trajectories, DecreaseReport,
    LkfCertificate, Verdict, BRUTE_FORCE_MAX_DIM,
};

use super::config::{rows_of, CheckConfig, MatrixRows, ProblemKind, SweepConfig};

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exit {
    Ok = 0,
    Usage = 1,
    Infeasible = 2,
    Inconclusive = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_status(s: FeasibilityStatus) -> Self {
        match s {
            FeasibilityStatus::Feasible => Exit::Ok,
            FeasibilityStatus::Infeasible => Exit::Infeasible,
            FeasibilityStatus::Inconclusive => Exit::Inconclusive,
        }
    }
}

/// Named variable values of an assignment.
pub fn certificate_blocks(vs: &VarSpace, y: &[f64]) -> BTreeMap<String, MatrixRows> {
    (0..vs.blocks().len())
        .map(|i| {
            let id = BlockId(i);
            (vs.block(id).name.clone(), rows_of(&vs.value(id, y)))
        })
        .collect()
}

/// Agreement of the two evaluations of the functionals on sampled histories.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LkfAgreement {
    pub samples: usize,
    pub max_relative_gap: f64,
    /// Smallest functional value seen on a nonzero history.
    pub min_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum BruteForceOutcome {
    Ran { verdict: Verdict },
    Skipped { reason: String },
}

/// Post-solve checks of a switched certificate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisChecks {
    pub decrease: DecreaseReport,
    pub lkf_agreement: LkfAgreement,
    pub brute_force: BruteForceOutcome,
    pub passed: bool,
}

/// Relative tolerance of the dual evaluation.
pub const LKF_AGREEMENT_TOL: f64 = 1e-9;

pub fn run_checks(cert: &LkfCertificate, sys: &DelaySystem, cfg: &CheckConfig) -> Result<AnalysisChecks> {
    let trajectories = random_trajectories(sys, cfg.trajectories, cfg.horizon, cfg.seed)?;
    let decrease = check_path_complete_decrease(cert, sys, &trajectories)?;
    let mut agreement = LkfAgreement {
        samples: 0,
        max_relative_gap: 0.0,
        min_value: f64::INFINITY,
    };
    for t in trajectories.iter().take(10) {
        for k in [0, 1, t.horizon() / 2] {
            let h = t.history(k);
            if h.norm() == 0.0 {
                continue;
            }
            for j in 1..=2 {
                let (direct, quad) = eval_lkf(cert, j, &h)?;
                agreement.samples += 1;
                agreement.max_relative_gap = agreement.max_relative_gap.max((direct - quad).abs() / (1.0 + direct.abs()));
                agreement.min_value = agreement.min_value.min(direct);
            }
        }
    }
    let dim = sys.dim() * (sys.bounds.d_big + 1);
    let brute_force = if !cfg.brute_force {
        BruteForceOutcome::Skipped {
            reason: "disabled in the configuration".into(),
        }
    } else if dim > BRUTE_FORCE_MAX_DIM {
        BruteForceOutcome::Skipped {
            reason: format!("augmented dimension {dim} exceeds {BRUTE_FORCE_MAX_DIM}"),
        }
    } else {
        BruteForceOutcome::Ran {
            verdict: brute_force_cross_check(sys, cfg.brute_force_depth)?,
        }
    };
    let bf_ok = !matches!(&brute_force, BruteForceOutcome::Ran { verdict } if verdict.is_witness());
    let passed = decrease.passed()
        && agreement.max_relative_gap <= LKF_AGREEMENT_TOL
        && (agreement.samples == 0 || agreement.min_value > 0.0)
        && bf_ok;
    Ok(AnalysisChecks {
        decrease,
        lkf_agreement: agreement,
        brute_force,
        passed,
    })
}

/// Result of one analysis run.
#[derive(Clone, Debug)]
pub struct AnalysisOutcome {
    pub problem: AnalysisProblem,
    pub result: FeasibilityResult,
    pub certificate: Option<LkfCertificate>,
    pub checks: Option<AnalysisChecks>,
    pub solve_seconds: f64,
}

impl AnalysisOutcome {
    pub fn status(&self) -> FeasibilityStatus {
        self.result.status
    }

    /// Feasible with every post-solve check passing.
    pub fn verified(&self) -> bool {
        self.status() == FeasibilityStatus::Feasible && self.checks.as_ref().is_none_or(|c| c.passed)
    }

    pub fn exit(&self) -> Exit {
        match self.status() {
            FeasibilityStatus::Feasible if !self.verified() => Exit::Inconclusive,
            s => Exit::from_status(s),
        }
    }
}

pub fn build_analysis(sys: &DelaySystem, kind: ProblemKind) -> Result<AnalysisProblem> {
    match kind {
        ProblemKind::Lemma2 => lemma2_problem(&sys.as_single_interval()?),
        ProblemKind::Theorem1 => theorem1_problem(sys),
        ProblemKind::Corollary1 => Err(Error::Config("analysis takes `lemma2` or `theorem1`".into())),
    }
}

/// Builds, solves and, for a feasible switched problem with checks
/// requested, verifies the certificate along trajectories.
pub fn analyze(sys: &DelaySystem, kind: ProblemKind, solver: &SolverConfig, checks: Option<&CheckConfig>) -> Result<AnalysisOutcome> {
    let problem = build_analysis(sys, kind)?;
    let started = Instant::now();
    let result = solve(&normalize(&problem.lmi), solver)?;
    let solve_seconds = started.elapsed().as_secs_f64();
    let mut certificate = None;
    let mut check_out = None;
    if let (FeasibilityStatus::Feasible, Some(y), ProblemKind::Theorem1) = (result.status, &result.assignment, kind) {
        let cert = LkfCertificate::from_analysis(&problem, sys.bounds, y)?.with_margins(result.margins.clone());
        if let Some(cfg) = checks {
            check_out = Some(run_checks(&cert, sys, cfg)?);
        }
        certificate = Some(cert);
    }
    Ok(AnalysisOutcome {
        problem,
        result,
        certificate,
        checks: check_out,
        solve_seconds,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignStatus {
    /// Feasible, gains recovered, and the closed loop passes re-analysis.
    Success,
    Infeasible,
    Inconclusive,
    /// `U` was numerically singular.
    SingularU,
    /// Gains recovered but the closed loop failed re-analysis.
    ReanalysisFailed,
}

#[derive(Clone, Debug)]
pub struct DesignOutcome {
    pub status: DesignStatus,
    pub result: FeasibilityResult,
    pub recovered: Option<RecoveredDesign>,
    /// Margins of the transformed design certificate on the analysis
    /// problem of the recovered loop.
    pub transferred_margins: Option<Vec<Margin>>,
    pub reanalysis: Option<AnalysisOutcome>,
    pub solve_seconds: f64,
    pub message: String,
}

impl DesignOutcome {
    pub fn exit(&self) -> Exit {
        match self.status {
            DesignStatus::Success => Exit::Ok,
            DesignStatus::Infeasible => Exit::Infeasible,
            _ => Exit::Inconclusive,
        }
    }
}

/// Solves the co-design problem only.
pub fn design_feasibility(plant: &PlantModel, bounds: DelayBounds, eps: f64, solver: &SolverConfig) -> Result<(LmiProblem, FeasibilityResult, f64)> {
    let p = corollary1_problem(plant, bounds, eps)?;
    let started = Instant::now();
    let r = solve(&normalize(&p.lmi), solver)?;
    Ok((p.lmi, r, started.elapsed().as_secs_f64()))
}

/// Co-design followed by recovery of the gains and re-analysis of the
/// recovered closed loop.
pub fn design(
    plant: &PlantModel,
    bounds: DelayBounds,
    eps: f64,
    solver: &SolverConfig,
    checks: Option<&CheckConfig>,
) -> Result<DesignOutcome> {
    let problem = corollary1_problem(plant, bounds, eps)?;
    let started = Instant::now();
    let result = solve(&normalize(&problem.lmi), solver)?;
    let solve_seconds = started.elapsed().as_secs_f64();
    let mut out = DesignOutcome {
        status: DesignStatus::Inconclusive,
        result,
        recovered: None,
        transferred_margins: None,
        reanalysis: None,
        solve_seconds,
        message: String::new(),
    };
    match out.result.status {
        FeasibilityStatus::Infeasible => {
            out.status = DesignStatus::Infeasible;
            return Ok(out);
        }
        FeasibilityStatus::Inconclusive => return Ok(out),
        FeasibilityStatus::Feasible => {}
    }
    let y = out.result.assignment.clone().expect("feasible results carry an assignment");
    let rec = match recover_gains(&problem, &y) {
        Ok(r) => r,
        Err(Error::Numerical(m)) => {
            out.status = DesignStatus::SingularU;
            out.message = m;
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let re = analyze(&rec.closed_loop, ProblemKind::Theorem1, solver, checks)?;
    let ya = unbar_certificate(&problem, &y, &re.problem)?;
    out.transferred_margins = Some(check_margins(&normalize(&re.problem.lmi), &ya, solver.margin_tol)?);
    out.status = if re.verified() {
        DesignStatus::Success
    } else {
        out.message = format!("re-analysis of the recovered loop returned {:?}", re.status());
        DesignStatus::ReanalysisFailed
    };
    out.recovered = Some(rec);
    out.reanalysis = Some(re);
    Ok(out)
}

/// Why the search over `d_M` ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum StopReason {
    FirstInfeasible {
        #[serde(rename = "d_M")]
        d_big: usize,
    },
    FirstInconclusive {
        #[serde(rename = "d_M")]
        d_big: usize,
    },
    Cap,
    Exhaustive,
}

impl StopReason {
    pub fn label(&self) -> String {
        match self {
            StopReason::FirstInfeasible { d_big } => format!("infeasible@{d_big}"),
            StopReason::FirstInconclusive { d_big } => format!("inconclusive@{d_big}"),
            StopReason::Cap => "cap".into(),
            StopReason::Exhaustive => "exhaustive".into(),
        }
    }
}

/// Largest feasible `d_M` for one `(ε, d_n)` pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRecord {
    pub epsilon: f64,
    pub d_n: usize,
    #[serde(rename = "max_feasible_dM")]
    pub max_feasible_d_big: Option<usize>,
    pub stop: StopReason,
    /// Every `d_M` that was tried, with its outcome.
    pub tried: Vec<(usize, FeasibilityStatus)>,
    pub solve_seconds: f64,
}

/// Linear search from `d_M = d_n` upward.
pub fn sweep_point(plant: &PlantModel, d_m: usize, eps: f64, d_n: usize, cfg: &SweepConfig, solver: &SolverConfig) -> Result<SweepRecord> {
    let mut rec = SweepRecord {
        epsilon: eps,
        d_n,
        max_feasible_d_big: None,
        stop: if cfg.exhaustive { StopReason::Exhaustive } else { StopReason::Cap },
        tried: Vec::new(),
        solve_seconds: 0.0,
    };
    for d_big in d_n..=cfg.d_big_cap.max(d_n) {
        let bounds = DelayBounds::new(d_m, d_n, d_big)?;
        let (_, r, secs) = design_feasibility(plant, bounds, eps, solver)?;
        rec.solve_seconds += secs;
        rec.tried.push((d_big, r.status));
        match r.status {
            FeasibilityStatus::Feasible => rec.max_feasible_d_big = Some(d_big),
            FeasibilityStatus::Infeasible if !cfg.exhaustive => {
                rec.stop = StopReason::FirstInfeasible { d_big };
                break;
            }
            FeasibilityStatus::Inconclusive if !cfg.exhaustive => {
                rec.stop = StopReason::FirstInconclusive { d_big };
                break;
            }
            _ => {}
        }
    }
    Ok(rec)
}

/// Runs every grid point on a pool of `jobs` workers. Records come back in
/// grid order (ε outer, `d_n` inner) whatever the completion order.
pub fn sweep(plant: &PlantModel, d_m: usize, cfg: &SweepConfig, solver: &SolverConfig, jobs: usize) -> Result<Vec<SweepRecord>> {
    let points: Vec<(f64, usize)> = cfg
        .epsilons
        .iter()
        .flat_map(|&e| cfg.d_n.iter().map(move |&d| (e, d)))
        .collect();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SweepRecord>>>> = Mutex::new((0..points.len()).map(|_| None).collect());
    let workers = jobs.max(1).min(points.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(eps, d_n)) = points.get(i) else { break };
                let r = sweep_point(plant, d_m, eps, d_n, cfg, solver);
                slots.lock().expect("sweep slot lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("sweep slot lock")
        .into_iter()
        .map(|r| r.expect("every grid point was visited"))
        .collect()
}

/// Diagnostics of a solve in report form.
#[derive(Clone, Debug, Serialize)]
pub struct SolveSummary {
    pub status: FeasibilityStatus,
    pub margins: Vec<Margin>,
    pub diagnostics: SolverDiagnostics,
}

impl From<&FeasibilityResult> for SolveSummary {
    fn from(r: &FeasibilityResult) -> Self {
        Self {
            status: r.status,
            margins: r.margins.clone(),
            diagnostics: r.diagnostics.clone(),
        }
    }
}
