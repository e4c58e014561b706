//! Matrix-expression algebra, standard-form conversion, the solver contract
//! and the SDPA bridge.

mod common;

use delaylmi::cli::config::ProblemKind;
use delaylmi::cli::workflows::build_analysis;
use delaylmi::lmi::{AffineExpr, ConstraintTag, LmiConstraint, LmiProblem, Sense, SparseMat, SymExpr, VarSpace};
use delaylmi::model::{DelayBounds, DelaySystem};
use delaylmi::sdp::{
    check_margins, denormalize, export_sdpa, import_sdpa, normalize, parse_sdpa_solution, solve, FeasibilityStatus,
    Margin, SdpProblem, SolverConfig,
};
use delaylmi::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn sparse_random(r: usize, c: usize, density: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| {
        if rng.random_bool(density) {
            rng.random_range(-3.0..3.0)
        } else {
            0.0
        }
    })
}

fn sym_random(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = sparse_random(n, n, 0.6, rng);
    (&m + m.transpose()) * 0.5
}

/// Random LMI problem: each constraint is `C + Σ Wₖᵀ Xₖ Wₖ` over a few
/// symmetric and one full variable block.
fn random_lmi(seed: u64) -> LmiProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vs = VarSpace::new();
    let sym_dims: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=3)).collect();
    let sym_ids: Vec<_> = sym_dims
        .iter()
        .enumerate()
        .map(|(i, &d)| (vs.add_symmetric(format!("S{i}"), d), d))
        .collect();
    let full = vs.add_full("G", 2, 3);
    let mut lmi = LmiProblem::default();
    for c in 0..rng.random_range(1..=4) {
        let dim = rng.random_range(1..=5);
        let mut e = SymExpr::constant(SparseMat::from_dense(&sym_random(dim, &mut rng))).unwrap();
        for &(id, d) in &sym_ids {
            if rng.random_bool(0.7) {
                let w = SparseMat::from_dense(&sparse_random(d, dim, 0.7, &mut rng));
                e = e.add(&SymExpr::congruence(&w, &SymExpr::new(vs.expr(id)).unwrap()).unwrap()).unwrap();
            }
        }
        if rng.random_bool(0.5) {
            let l = SparseMat::from_dense(&sparse_random(dim, 2, 0.7, &mut rng));
            let r = SparseMat::from_dense(&sparse_random(3, dim, 0.7, &mut rng));
            let g: AffineExpr = vs.expr(full).mul_left(&l).unwrap().mul_right(&r).unwrap();
            e = e.add(&SymExpr::he(&g).unwrap()).unwrap();
        }
        lmi.constraints.push(LmiConstraint {
            expr: e,
            sense: if rng.random_bool(0.5) {
                Sense::PositiveDefinite
            } else {
                Sense::NegativeDefinite
            },
            strict: rng.random_bool(0.5),
            tag: ConstraintTag::Other(format!("c{c}")),
        });
    }
    lmi.vars = vs;
    lmi
}

fn random_assignment(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn lemma_scalar() -> SdpProblem {
    let sys = DelaySystem::new(scalar(0.5), scalar(0.0), scalar(0.1), DelayBounds::new(1, 1, 2).unwrap()).unwrap();
    normalize(&build_analysis(&sys, ProblemKind::Lemma2).unwrap().lmi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sparse_dense_round_trip(seed in any::<u64>(), r in 1usize..6, c in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = sparse_random(r, c, 0.5, &mut rng);
        let s = SparseMat::from_dense(&m);
        prop_assert_eq!(s.to_dense(), m.clone());
        prop_assert_eq!(s.transpose().transpose(), s.clone());
        prop_assert_eq!(s.transpose().to_dense(), m.transpose());
    }

    #[test]
    fn sparse_product_matches_dense(seed in any::<u64>(), r in 1usize..5, k in 1usize..5, c in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sparse_random(r, k, 0.6, &mut rng);
        let b = sparse_random(k, c, 0.6, &mut rng);
        let p = SparseMat::from_dense(&a).matmul(&SparseMat::from_dense(&b)).to_dense();
        prop_assert!((p - &a * &b).amax() < 1e-12);
    }

    #[test]
    fn expressions_are_affine(seed in any::<u64>()) {
        // E(y) = E(0) + Σ yᵢ (E(eᵢ) − E(0)) for every generated constraint.
        let lmi = random_lmi(seed);
        let n = lmi.vars.n_scalars();
        let y = random_assignment(n, seed);
        for c in &lmi.constraints {
            let zero = c.expr.eval(&vec![0.0; n]);
            let mut acc = zero.clone();
            for i in 0..n {
                let mut unit = vec![0.0; n];
                unit[i] = 1.0;
                acc += (c.expr.eval(&unit) - &zero) * y[i];
            }
            let direct = c.expr.eval(&y);
            prop_assert!((&acc - &direct).amax() <= 1e-10 * (1.0 + direct.amax()));
            prop_assert!((&direct - direct.transpose()).amax() == 0.0, "evaluations are exactly symmetric");
        }
    }

    #[test]
    fn congruence_matches_dense(seed in any::<u64>(), n in 1usize..4, p in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vs = VarSpace::new();
        let x = vs.add_symmetric("X", n);
        let w = sparse_random(n, p, 0.7, &mut rng);
        let e = SymExpr::congruence(&SparseMat::from_dense(&w), &SymExpr::new(vs.expr(x)).unwrap()).unwrap();
        let y = random_assignment(vs.n_scalars(), seed);
        let xv = vs.value(x, &y);
        let expect = w.transpose() * xv * &w;
        prop_assert!((e.eval(&y) - expect).amax() < 1e-10);
    }

    #[test]
    fn normalize_is_lossless(seed in any::<u64>()) {
        let lmi = random_lmi(seed);
        let sdp = normalize(&lmi);
        prop_assert_eq!(sdp.n_vars, lmi.vars.n_scalars());
        prop_assert_eq!(denormalize(&sdp).unwrap(), lmi.constraints.clone());
        for b in &sdp.blocks {
            prop_assert!(b.constant.is_symmetric());
            for (_, c) in &b.coeffs {
                prop_assert!(c.is_symmetric());
            }
        }
    }

    #[test]
    fn normalized_blocks_have_positive_sense(seed in any::<u64>()) {
        let lmi = random_lmi(seed);
        let sdp = normalize(&lmi);
        let y = random_assignment(sdp.n_vars, seed);
        for (b, c) in sdp.blocks.iter().zip(&lmi.constraints) {
            let original = c.expr.eval(&y);
            let sign = if c.sense == Sense::NegativeDefinite { -1.0 } else { 1.0 };
            prop_assert!((b.eval(&y) - original * sign).amax() < 1e-12);
            prop_assert_eq!(b.shift > 0.0, c.strict);
        }
    }

    #[test]
    fn sdpa_export_is_canonical(seed in any::<u64>()) {
        let sdp = normalize(&random_lmi(seed));
        let text = export_sdpa(&sdp);
        let back = import_sdpa(&text).unwrap();
        prop_assert_eq!(export_sdpa(&back), text);
        // The imported problem states the same inequalities, margin shift
        // folded into the constant.
        let y = random_assignment(sdp.n_vars, seed);
        for (a, b) in sdp.blocks.iter().zip(&back.blocks) {
            let lhs = a.eval(&y) - DMatrix::identity(a.dim, a.dim) * a.shift;
            prop_assert!((lhs - b.eval(&y)).amax() <= 1e-12 * (1.0 + a.constant.frobenius_norm()));
        }
    }
}

#[test]
fn minimal_sdpa_instance() {
    let mut vs = VarSpace::new();
    let x = vs.add_symmetric("x", 1);
    let mut lmi = LmiProblem::default();
    lmi.constraints.push(LmiConstraint {
        expr: SymExpr::new(vs.expr(x)).unwrap().sub(&SymExpr::constant(SparseMat::identity(1)).unwrap()).unwrap(),
        sense: Sense::PositiveDefinite,
        strict: false,
        tag: ConstraintTag::Other("x-1".into()),
    });
    lmi.vars = vs;
    let text = export_sdpa(&normalize(&lmi));
    assert!(text.starts_with("1\n1\n1\n"), "{text}");
    let entries: Vec<&str> = text.lines().skip(4).collect();
    assert_eq!(entries.len(), 2, "{text}");
    assert_eq!(entries[0], "0 1 1 1 1.0000000000000000e0");
    assert_eq!(entries[1], "1 1 1 1 1.0000000000000000e0");
}

#[test]
fn malformed_sdpa_reports_the_line() {
    let good = "1\n1\n1\n0\n0 1 1 1 1.0\n1 1 1 1 1.0\n";
    assert!(import_sdpa(good).is_ok());
    let bad = "1\n1\n1\n0\n0 1 1 1 1.0\n1 1 1 x 1.0\n";
    match import_sdpa(bad) {
        Err(Error::Parse(m)) => assert!(m.contains("line 6"), "{m}"),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let out_of_range = "1\n1\n2\n0\n0 1 3 1 1.0\n";
    match import_sdpa(out_of_range) {
        Err(Error::Parse(m)) => assert!(m.contains("line 5"), "{m}"),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn solver_settles_scalar_examples() {
    let mut vs = VarSpace::new();
    let x = vs.add_symmetric("x", 1);
    let one = SymExpr::constant(SparseMat::identity(1)).unwrap();
    let xe = SymExpr::new(vs.expr(x)).unwrap();
    let mk = |cons: Vec<SymExpr>| {
        let mut lmi = LmiProblem::default();
        for e in cons {
            lmi.constraints.push(LmiConstraint {
                expr: e,
                sense: Sense::PositiveDefinite,
                strict: false,
                tag: ConstraintTag::Other("row".into()),
            });
        }
        lmi.vars = vs.clone();
        normalize(&lmi)
    };
    let cfg = SolverConfig::default();
    let feasible = solve(&mk(vec![xe.sub(&one).unwrap()]), &cfg).unwrap();
    assert_eq!(feasible.status, FeasibilityStatus::Feasible);
    assert!(feasible.assignment.as_ref().unwrap()[0] >= 1.0 - 1e-7);

    let contradictory = mk(vec![xe.sub(&one).unwrap(), xe.scale(-1.0).sub(&one).unwrap()]);
    assert_eq!(solve(&contradictory, &cfg).unwrap().status, FeasibilityStatus::Infeasible);

    assert_eq!(solve(&SdpProblem::default(), &cfg).unwrap().status, FeasibilityStatus::Feasible);
}

#[test]
fn feasible_results_pass_their_own_margin_check() {
    // Feasibility status is granted only after re-evaluation; verify the
    // stored margins against a fresh evaluation for a batch of random problems.
    let cfg = SolverConfig::default();
    let mut feasible = 0;
    for seed in 0..40 {
        let sdp = normalize(&random_lmi(seed));
        let r = solve(&sdp, &cfg).unwrap();
        if r.status == FeasibilityStatus::Feasible {
            feasible += 1;
            let y = r.assignment.as_ref().unwrap();
            let fresh = check_margins(&sdp, y, cfg.margin_tol).unwrap();
            assert_eq!(fresh, r.margins);
            assert!(fresh.iter().all(Margin::passes));
            assert!(fresh.iter().all(|m| m.min_eigenvalue >= -m.tolerance));
        }
    }
    assert!(feasible > 0, "the random batch should contain feasible problems");
}

#[test]
fn lemma_scalar_instance_shape() {
    let p = lemma_scalar();
    // 6 (P, 3x3) + Q1 + Q2 + Z1 + Z2 + 4 (X, 2x2) scalars.
    assert_eq!(p.n_vars, 14);
    let text = export_sdpa(&p);
    let header: Vec<&str> = text.lines().take(3).collect();
    assert_eq!(header[0], "14");
    // Coupling block 4n, the two vertex conditions reduced from 8n to 7n
    // columns, then the positivity blocks of P, Q1, Q2, Z1, Z2.
    assert_eq!(header[2], "4 7 7 3 1 1 1 1");
    assert_eq!(header[1], "8");
}

#[test]
fn external_solution_passes_the_margin_check() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let p = lemma_scalar();
    let stored = std::fs::read_to_string(dir.join("lemma2_scalar.dat-s")).unwrap();
    assert_eq!(export_sdpa(&p), stored, "fixture must match the current export");
    let y = parse_sdpa_solution(&std::fs::read_to_string(dir.join("lemma2_scalar.sol")).unwrap(), p.n_vars).unwrap();
    let margins = check_margins(&p, &y, SolverConfig::default().margin_tol).unwrap();
    assert!(margins.iter().all(Margin::passes), "{margins:?}");
    // Plain whitespace lists are accepted too, and length is enforced.
    let plain: String = y.iter().map(|v| format!("{v:e}\n")).collect();
    assert_eq!(parse_sdpa_solution(&plain, p.n_vars).unwrap(), y);
    assert!(parse_sdpa_solution(&plain, p.n_vars + 1).is_err());
}
