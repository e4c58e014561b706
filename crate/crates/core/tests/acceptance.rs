//! Acceptance suite. Runs every criterion in sequence, prints one
//! `criterion N: PASS|FAIL` line each, and exits non-zero if any failed.
//!
//! Runs with its own `main` (no libtest harness) so that the verdict lines
//! are always visible in `cargo test` output.

mod common;

use std::time::Instant;

use delaylmi::cli::config::{CheckConfig, ProblemKind, SweepConfig};
use delaylmi::cli::workflows::{analyze, build_analysis, design, sweep_point, DesignStatus, SweepRecord};
use delaylmi::conditions::{corollary1_problem, mode_phi_parts, single_space, switched_space, ModeVars};
use delaylmi::lmi::{BlockId, VarSpace};
use delaylmi::model::{DelayBounds, DelaySystem, HistoryVector};
use delaylmi::sdp::{
    check_margins, export_sdpa, import_sdpa, normalize, parse_sdpa_solution, FeasibilityStatus, Margin, SdpProblem,
    SolverConfig,
};
use delaylmi::selectors::{xi_assemble, XiLayout};
use delaylmi::simverify::{
    brute_force_cross_check, eval_lkf, functional_terms, random_history, TailBlocks, DEFAULT_DEPTH,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const EPS_DESIGN: f64 = -0.995;
const PUBLISHED_MAX: usize = 17;
const CONDITIONAL_MIN: usize = 15;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Pass,
    /// Meets the relaxed threshold the criterion allows, with a logged deviation.
    Conditional,
    Fail,
}

struct Verdict {
    outcome: Outcome,
    detail: String,
}

impl Verdict {
    fn pass(detail: String) -> Self {
        Self {
            outcome: Outcome::Pass,
            detail,
        }
    }

    fn fail(detail: String) -> Self {
        Self {
            outcome: Outcome::Fail,
            detail,
        }
    }

    fn check(ok: bool, detail: String) -> Self {
        if ok {
            Self::pass(detail)
        } else {
            Self::fail(detail)
        }
    }
}

/// Problems generated along the way, re-exported by criterion 8.
#[derive(Default)]
struct Generated {
    problems: Vec<(String, SdpProblem)>,
}

impl Generated {
    fn add(&mut self, label: impl Into<String>, p: SdpProblem) {
        self.problems.push((label.into(), p));
    }
}

fn checks_100x500() -> CheckConfig {
    CheckConfig {
        trajectories: 100,
        horizon: 500,
        seed: 42,
        brute_force: false,
        brute_force_depth: DEFAULT_DEPTH,
    }
}

/// Criteria 1 and 2 share one design run.
fn design_criteria(gen: &mut Generated) -> (Verdict, Verdict) {
    let plant = example_plant();
    let solver = SolverConfig::default();
    let mut attempts = Vec::new();
    for d_big in (CONDITIONAL_MIN..=PUBLISHED_MAX).rev() {
        let bounds = DelayBounds::new(1, 1, d_big).unwrap();
        gen.add(
            format!("design d_M={d_big}"),
            normalize(&corollary1_problem(&plant, bounds, EPS_DESIGN).unwrap().lmi),
        );
        let out = design(&plant, bounds, EPS_DESIGN, &solver, Some(&checks_100x500())).unwrap();
        attempts.push(format!("d_M={d_big}: {:?}", out.result.status));
        if out.result.status != FeasibilityStatus::Feasible {
            continue;
        }
        let worst = out.result.margins.iter().map(|m| m.min_eigenvalue).fold(f64::INFINITY, f64::min);
        let first = Verdict {
            outcome: if d_big == PUBLISHED_MAX {
                Outcome::Pass
            } else {
                Outcome::Conditional
            },
            detail: format!(
                "design conditions feasible at d_M={d_big} (eps={EPS_DESIGN}, d_n=1), {} iterations, worst margin {worst:.3e}, {:.1}s; tried {}",
                out.result.diagnostics.iterations,
                out.solve_seconds,
                attempts.join(", ")
            ),
        };
        let second = match &out.reanalysis {
            Some(re) => {
                gen.add(format!("re-analysis d_M={d_big}"), normalize(&re.problem.lmi));
                let transferred = out
                    .transferred_margins
                    .as_ref()
                    .is_some_and(|m| m.iter().all(Margin::passes));
                let (gains, u_cond) = out
                    .recovered
                    .as_ref()
                    .map(|r| {
                        (
                            format!(
                                "K={:.4?} F={:.4?} L={:.4?}",
                                r.gains.k.as_slice(),
                                r.gains.f.as_slice(),
                                r.gains.l.transpose().as_slice()
                            ),
                            r.u_condition,
                        )
                    })
                    .unwrap_or_default();
                match &re.checks {
                    Some(c) => Verdict::check(
                        out.status == DesignStatus::Success
                            && re.status() == FeasibilityStatus::Feasible
                            && c.decrease.trajectories == 100
                            && c.decrease.violation_count == 0
                            && c.decrease.steps_checked + c.decrease.truncated_trajectories > 0,
                        format!(
                            "re-analysis {:?} at d_M={d_big} in {:.1}s; {} trajectories, {} steps, {} violations, edges {:?}, worst ratio {:.6}; transferred certificate {}; {gains}, cond(U)={u_cond:.2}",
                            re.status(),
                            re.solve_seconds,
                            c.decrease.trajectories,
                            c.decrease.steps_checked,
                            c.decrease.violation_count,
                            c.decrease.edge_counts,
                            c.decrease.worst_ratio,
                            if transferred { "passes" } else { "fails" },
                        ),
                    ),
                    None => Verdict::fail(format!("re-analysis {:?}, no certificate to check", re.status())),
                }
            }
            None => Verdict::fail(format!("design status {:?}: {}", out.status, out.message)),
        };
        return (first, second);
    }
    let msg = format!("no feasible design at d_M in [{CONDITIONAL_MIN}, {PUBLISHED_MAX}]: {}", attempts.join(", "));
    (Verdict::fail(msg.clone()), Verdict::fail(msg))
}

fn criterion_3(gen: &mut Generated) -> Verdict {
    let plant = example_plant();
    let solver = SolverConfig::default();
    let run = |eps: f64| -> SweepRecord {
        let cfg = SweepConfig {
            epsilons: vec![eps],
            d_n: vec![1],
            d_big_cap: 25,
            exhaustive: false,
        };
        sweep_point(&plant, 1, eps, 1, &cfg, &solver).unwrap()
    };
    let hi = run(EPS_DESIGN);
    let lo = run(-0.5);
    for r in [&hi, &lo] {
        for &(d_big, _) in &r.tried {
            let b = DelayBounds::new(1, 1, d_big).unwrap();
            gen.add(
                format!("sweep eps={} d_M={d_big}", r.epsilon),
                normalize(&corollary1_problem(&plant, b, r.epsilon).unwrap().lmi),
            );
        }
    }
    let show = |r: &SweepRecord| {
        format!(
            "eps={}: max d_M {} ({}, {:.0}s)",
            r.epsilon,
            r.max_feasible_d_big.map_or("none".into(), |d| d.to_string()),
            r.stop.label(),
            r.solve_seconds
        )
    };
    let a = hi.max_feasible_d_big.unwrap_or(0);
    let b = lo.max_feasible_d_big.unwrap_or(0);
    Verdict::check(a > b, format!("{}; {}", show(&hi), show(&lo)))
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut pairs = 0usize;
    let mut failures = 0usize;
    for (d_m, d_n, d_big) in [(1, 1, 2), (1, 2, 4), (2, 3, 5)] {
        let bounds = DelayBounds::new(d_m, d_n, d_big).unwrap();
        for i in 0..1000 {
            let n = 1 + i % 2;
            let cert = random_certificate(n, bounds, &mut rng);
            let h = random_history(n, d_big, &mut rng);
            for j in 1..=2 {
                let (direct, quad) = eval_lkf(&cert, j, &h).unwrap();
                let gap = (direct - quad).abs() / (1.0 + direct.abs());
                worst = worst.max(gap);
                if gap > 1e-9 {
                    failures += 1;
                }
            }
            pairs += 1;
        }
    }
    Verdict::check(
        failures == 0,
        format!("{pairs} (certificate, history) pairs x 2 modes, worst |direct-quadratic|/(1+|direct|) = {worst:.2e}, {failures} over 1e-9"),
    )
}

struct Case {
    vs: VarSpace,
    vars: ModeVars,
    tail: Option<(BlockId, BlockId)>,
    layout: XiLayout,
}

fn delta_case(rng: &mut ChaCha8Rng, i: usize) -> Case {
    let n = 1 + i % 2;
    if i % 3 == 2 {
        // First mode of a split system, with the tail window.
        let d_m = rng.random_range(1..=2);
        let d_n = d_m + rng.random_range(0..=2);
        let d_big = d_n + rng.random_range(1..=3);
        let bounds = DelayBounds::new(d_m, d_n, d_big).unwrap();
        let (vs, v) = switched_space(n);
        Case {
            vs,
            vars: *v.mode(1),
            tail: Some((v.q3, v.z3)),
            layout: XiLayout::mode(n, &bounds, 1).unwrap(),
        }
    } else {
        let d_m = rng.random_range(1..=3);
        let d_big = d_m + rng.random_range(0..=4);
        let (vs, v) = single_space(n);
        Case {
            vs,
            vars: v,
            tail: None,
            layout: XiLayout::plain(n, d_m, d_big).unwrap(),
        }
    }
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_a, mut worst_b, mut worst_c) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut failures = 0usize;
    let samples = 1200;
    for i in 0..samples {
        let case = delta_case(&mut rng, i);
        let n = case.layout.n;
        let p_dim = if case.tail.is_some() { 4 * n } else { 3 * n };
        let blocks = random_blocks(n, p_dim, &mut rng);
        let mut y = vec![0.0; case.vs.n_scalars()];
        blocks.store(&case.vs, &case.vars, &mut y);
        let (q3, z3) = (random_spd(n, &mut rng), random_spd(n, &mut rng));
        if let Some((iq3, iz3)) = case.tail {
            case.vs.set_value(iq3, &q3, &mut y);
            case.vs.set_value(iz3, &z3, &mut y);
        }
        let reach = case.layout.tail.unwrap_or(case.layout.d_big);
        let tail = case.layout.tail.map(|t| TailBlocks {
            d_total: t,
            q3: &q3,
            z3: &z3,
        });
        let h = random_history(n, reach, &mut rng);
        let x_next = random_vector(n, &mut rng);
        let d = rng.random_range(case.layout.d_m..=case.layout.d_big);
        let xi = xi_assemble(&x_next, &h, d, &case.layout).unwrap();
        let parts = mode_phi_parts(&case.vs, &case.vars, case.layout, d, case.tail).unwrap();
        let terms = |hist: &HistoryVector| {
            functional_terms(&blocks, case.layout.d_m, case.layout.d_big, tail, hist).unwrap()
        };
        let now = terms(&h);
        let next = terms(&h.shifted(x_next));
        let q = |m: nalgebra::DMatrix<f64>| delaylmi::linalg::quad_form(&m, &xi);
        let (fa, fb, fc) = (q(parts.a.eval(&y)), q(parts.b.eval(&y)), q(parts.c.eval(&y)));

        let rel = |dv: f64, form: f64, scale: f64| (dv - form).abs() / (1.0 + scale);
        let ea = rel(next.a - now.a, fa, now.a.abs() + next.a.abs());
        let eb = rel(next.b - now.b, fb, now.b.abs() + next.b.abs());
        let ec = (next.c - now.c - fc) / (1.0 + now.c.abs() + next.c.abs());
        worst_a = worst_a.max(ea);
        worst_b = worst_b.max(eb);
        worst_c = worst_c.max(ec);
        if ea > 1e-9 || eb > 1e-9 || ec > 1e-9 {
            failures += 1;
        }
    }
    Verdict::check(
        failures == 0,
        format!(
            "{samples} samples (one third with the tail window): dVa identity {worst_a:.2e}, dVb identity {worst_b:.2e}, dVc bound worst excess {worst_c:.2e} (negative means slack), {failures} failures"
        ),
    )
}

fn criterion_6(gen: &mut Generated) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let solver = SolverConfig::default();
    let (mut feasible, mut witnesses, mut inconclusive, mut conflicts) = (0, 0, 0, Vec::new());
    let systems = 60;
    for i in 0..systems {
        let n = 1 + i % 2;
        let d_big = rng.random_range(2..=5);
        let d_n = rng.random_range(1..=d_big);
        let bounds = DelayBounds::new(1, d_n, d_big).unwrap();
        let radius = rng.random_range(0.2..1.15);
        let coupling = rng.random_range(0.02..0.35);
        let sys = random_system(n, bounds, radius, coupling, &mut rng);
        let out = analyze(&sys, ProblemKind::Theorem1, &solver, None).unwrap();
        gen.add(format!("soundness #{i}"), normalize(&out.problem.lmi));
        let verdict = brute_force_cross_check(&sys, DEFAULT_DEPTH).unwrap();
        match out.status() {
            FeasibilityStatus::Feasible => feasible += 1,
            FeasibilityStatus::Inconclusive => inconclusive += 1,
            FeasibilityStatus::Infeasible => {}
        }
        if verdict.is_witness() {
            witnesses += 1;
            if out.status() == FeasibilityStatus::Feasible {
                conflicts.push(i);
            }
        }
    }
    // A sample with no feasible or no unstable instance would not exercise
    // the cross-check, so both populations must be present.
    Verdict::check(
        conflicts.is_empty() && feasible >= 5 && witnesses >= 5,
        format!(
            "{systems} systems (n in {{1,2}}, d_m=1, d_M<=5): {feasible} feasible, {witnesses} with instability witness, {inconclusive} inconclusive, conflicts {conflicts:?}"
        ),
    )
}

fn criterion_7(gen: &mut Generated) -> Verdict {
    let solver = SolverConfig::default();
    let bounds = DelayBounds::new(1, 2, 3).unwrap();
    let mut results = Vec::new();
    let mut ok = true;
    for rho in [1.05, 1.2, 2.0] {
        let sys = DelaySystem::new(scalar(rho), scalar(0.0), scalar(0.0), bounds).unwrap();
        for kind in [ProblemKind::Lemma2, ProblemKind::Theorem1] {
            let out = analyze(&sys, kind, &solver, None).unwrap();
            gen.add(format!("necessity rho={rho} {kind:?}"), normalize(&out.problem.lmi));
            ok &= out.status() == FeasibilityStatus::Infeasible;
            results.push(format!("rho={rho} {kind:?}: {:?}", out.status()));
        }
    }
    Verdict::check(ok, results.join(", "))
}

fn fixture(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn criterion_8(gen: &mut Generated) -> Verdict {
    let lemma_sys = DelaySystem::new(scalar(0.5), scalar(0.0), scalar(0.1), DelayBounds::new(1, 1, 2).unwrap()).unwrap();
    let lemma = normalize(&build_analysis(&lemma_sys, ProblemKind::Lemma2).unwrap().lmi);
    gen.add("lemma scalar instance", lemma.clone());

    let mut mismatched = Vec::new();
    let mut bytes = 0usize;
    for (label, p) in &gen.problems {
        let first = export_sdpa(p);
        let same = import_sdpa(&first).is_ok_and(|q| export_sdpa(&q) == first);
        bytes += first.len();
        if !same {
            mismatched.push(label.clone());
        }
    }

    let emitted = export_sdpa(&lemma);
    let stored = fixture("lemma2_scalar.dat-s");
    let solution = parse_sdpa_solution(&fixture("lemma2_scalar.sol"), lemma.n_vars);
    let external = match solution {
        Ok(y) => {
            let margins = check_margins(&lemma, &y, SolverConfig::default().margin_tol).unwrap();
            let worst = margins.iter().map(|m| m.min_eigenvalue).fold(f64::INFINITY, f64::min);
            (margins.iter().all(Margin::passes), format!("external solution worst margin {worst:.3e}"))
        }
        Err(e) => (false, format!("external solution unreadable: {e}")),
    };
    Verdict::check(
        mismatched.is_empty() && emitted == stored && external.0,
        format!(
            "{} problems ({} bytes) round-trip byte-identical except {mismatched:?}; fixture matches current export: {}; {}",
            gen.problems.len(),
            bytes,
            emitted == stored,
            external.1
        ),
    )
}

fn report(id: usize, v: &Verdict, secs: f64) {
    let label = match v.outcome {
        Outcome::Pass => "PASS",
        Outcome::Conditional => "PASS (conditional)",
        Outcome::Fail => "FAIL",
    };
    println!("criterion {id}: {label} [{secs:.1}s] {}", v.detail);
}

fn main() {
    let mut gen = Generated::default();
    let mut verdicts = Vec::new();
    let clock = Instant::now();

    let (v1, v2) = design_criteria(&mut gen);
    let t12 = clock.elapsed().as_secs_f64();
    report(1, &v1, t12);
    report(2, &v2, 0.0);
    verdicts.extend([v1.outcome, v2.outcome]);

    type Run<'a> = Box<dyn FnOnce(&mut Generated) -> Verdict + 'a>;
    let rest: Vec<(usize, Run)> = vec![
        (3, Box::new(criterion_3)),
        (4, Box::new(|_| criterion_4())),
        (5, Box::new(|_| criterion_5())),
        (6, Box::new(criterion_6)),
        (7, Box::new(criterion_7)),
        (8, Box::new(criterion_8)),
    ];
    for (id, run) in rest {
        let t = Instant::now();
        let v = run(&mut gen);
        report(id, &v, t.elapsed().as_secs_f64());
        verdicts.push(v.outcome);
    }
    let failed = verdicts.iter().filter(|o| **o == Outcome::Fail).count();
    println!(
        "acceptance: {} of {} criteria passed ({failed} failed) in {:.0}s",
        verdicts.len() - failed,
        verdicts.len(),
        clock.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
