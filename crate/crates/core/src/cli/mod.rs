//! Command-line frontend.
//!
//! Every subcommand reads a JSON run configuration, writes its artifacts
//! into the output directory and exits with 0 (ok or feasible), 1 (usage or
//! configuration error), 2 (infeasible) or 3 (numerically inconclusive).
//! Reports embed the tool version, the SHA-256 of the effective
//! configuration and the tolerances; apart from the `timing` fields they are
//! byte-identical across runs of the same configuration.

pub mod config;
pub mod svg;
pub mod workflows;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conditions::corollary1_problem;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DelayBounds, HistoryVector};
use crate::sdp::{check_margins, export_sdpa, normalize, parse_sdpa_solution, tag_label, Margin, SolverConfig};
use crate::simverify::{random_history, simulate, DelaySignal, LkfCertificate, SignalKind, DECREASE_SLACK};

use config::{matrix, rows_of, MatrixRows, ProblemKind, RunConfig, SolutionFormat, Task};
use workflows::{
    analyze, build_analysis, certificate_blocks, design, run_checks, sweep, AnalysisChecks, AnalysisOutcome,
    DesignStatus, Exit, SolveSummary, SweepRecord,
};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "delaylmi", version, about = "Delay-dependent LMI analysis and observer-based controller co-design")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stability analysis of a delay system, with certificate checks.
    Analyze(CommonArgs),
    /// Controller and observer co-design followed by re-analysis.
    Design(CommonArgs),
    /// Trajectory simulation with the functionals along it.
    Simulate(CommonArgs),
    /// Largest feasible maximal delay over a grid of tunings.
    Sweep(CommonArgs),
    /// Writes the feasibility problem in SDPA sparse format.
    ExportSdpa(CommonArgs),
    /// Re-checks a stored or externally computed solution.
    CheckCertificate(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the sweep (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Command {
    pub fn task(&self) -> Task {
        match self {
            Command::Analyze(_) => Task::Analyze,
            Command::Design(_) => Task::Design,
            Command::Simulate(_) => Task::Simulate,
            Command::Sweep(_) => Task::Sweep,
            Command::ExportSdpa(_) => Task::ExportSdpa,
            Command::CheckCertificate(_) => Task::CheckCertificate,
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Analyze(a)
            | Command::Design(a)
            | Command::Simulate(a)
            | Command::Sweep(a)
            | Command::ExportSdpa(a)
            | Command::CheckCertificate(a) => a,
        }
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Exit::Usage.code() } else { Exit::Ok.code() };
        }
    };
    match execute(&cli.command) {
        Ok(exit) => exit.code(),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) | Error::Solver(_) => Exit::Inconclusive.code(),
                _ => Exit::Usage.code(),
            }
        }
    }
}

/// Applies `--seed` to every seed of the configuration.
pub fn apply_seed(cfg: &mut RunConfig, seed: u64) {
    cfg.check.seed = seed;
    cfg.simulation.seed = seed;
    if let SignalKind::UniformRandom { seed: s } = &mut cfg.simulation.signal {
        *s = seed;
    }
}

pub fn execute(cmd: &Command) -> Result<Exit> {
    let task = cmd.task();
    let args = cmd.args();
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(Exit::Usage);
        }
    };
    if let Some(s) = args.seed {
        apply_seed(&mut cfg, s);
    }
    if let Err(errs) = cfg.validate(task) {
        for e in errs {
            eprintln!("config error: {e}");
        }
        return Ok(Exit::Usage);
    }
    std::fs::create_dir_all(&args.out)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |p| p.get()));
    let exit = match task {
        Task::Analyze => cmd_analyze(&cfg, &args.out)?,
        Task::Design => cmd_design(&cfg, &args.out)?,
        Task::Simulate => cmd_simulate(&cfg, &args.out)?,
        Task::Sweep => cmd_sweep(&cfg, &args.out, jobs)?,
        Task::ExportSdpa => cmd_export_sdpa(&cfg, &args.out)?,
        Task::CheckCertificate => cmd_check_certificate(&cfg, base, &args.out)?,
    };
    Ok(exit)
}

#[derive(Debug, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub task: Task,
    pub config_sha256: String,
    pub tolerances: SolverConfig,
}

fn header(cfg: &RunConfig, task: Task) -> Header {
    Header {
        tool: TOOL,
        version: VERSION,
        task,
        config_sha256: cfg.hash(),
        tolerances: cfg.solver.clone(),
    }
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub solve_seconds: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Report body of one analysis run.
#[derive(Debug, Serialize)]
pub struct AnalysisBody {
    pub problem: ProblemKind,
    pub delays: DelayBounds,
    pub constraints: usize,
    pub core_constraints: usize,
    pub solve: SolveSummary,
    pub certificate: Option<BTreeMap<String, MatrixRows>>,
    pub assignment: Option<Vec<f64>>,
    pub checks: Option<AnalysisChecks>,
    pub verified: bool,
}

pub fn analysis_body(kind: ProblemKind, delays: DelayBounds, o: &AnalysisOutcome) -> AnalysisBody {
    let feasible = o.status() == crate::sdp::FeasibilityStatus::Feasible;
    let y = o.result.assignment.as_ref().filter(|_| feasible);
    AnalysisBody {
        problem: kind,
        delays,
        constraints: o.problem.lmi.constraints.len(),
        core_constraints: o.problem.lmi.core_constraint_count(),
        solve: SolveSummary::from(&o.result),
        certificate: y.map(|y| certificate_blocks(&o.problem.lmi.vars, y)),
        assignment: y.cloned(),
        checks: o.checks.clone(),
        verified: o.verified(),
    }
}

#[derive(Debug, Serialize)]
struct AnalyzeReport {
    header: Header,
    status: crate::sdp::FeasibilityStatus,
    exit_code: i32,
    #[serde(flatten)]
    body: AnalysisBody,
    timing: Timing,
}

pub fn cmd_analyze(cfg: &RunConfig, out: &Path) -> Result<Exit> {
    let sys = cfg.delay_system()?;
    let o = analyze(&sys, cfg.problem, &cfg.solver, Some(&cfg.check))?;
    let exit = o.exit();
    let report = AnalyzeReport {
        header: header(cfg, Task::Analyze),
        status: o.status(),
        exit_code: exit.code(),
        body: analysis_body(cfg.problem, sys.bounds, &o),
        timing: Timing {
            solve_seconds: o.solve_seconds,
        },
    };
    write_json(&out.join("analyze.json"), &report)?;
    Ok(exit)
}

#[derive(Debug, Serialize)]
pub struct GainsFile {
    #[serde(rename = "K")]
    pub k: MatrixRows,
    #[serde(rename = "F")]
    pub f: MatrixRows,
    #[serde(rename = "L")]
    pub l: MatrixRows,
    pub epsilon: f64,
    pub delays: DelayBounds,
    pub u_condition: f64,
}

#[derive(Debug, Serialize)]
struct DesignReport {
    header: Header,
    status: DesignStatus,
    exit_code: i32,
    message: String,
    epsilon: f64,
    delays: DelayBounds,
    design: SolveSummary,
    gains: Option<GainsFile>,
    transferred_certificate_passes: Option<bool>,
    reanalysis: Option<AnalysisBody>,
    timing: DesignTiming,
}

#[derive(Debug, Serialize)]
struct DesignTiming {
    design_seconds: f64,
    reanalysis_seconds: Option<f64>,
}

pub fn cmd_design(cfg: &RunConfig, out: &Path) -> Result<Exit> {
    let plant = cfg.plant_model()?;
    let bounds = cfg.bounds()?;
    let eps = cfg.epsilon()?;
    let o = design(&plant, bounds, eps, &cfg.solver, Some(&cfg.check))?;
    let exit = o.exit();
    let gains = o.recovered.as_ref().map(|r| GainsFile {
        k: rows_of(&r.gains.k),
        f: rows_of(&r.gains.f),
        l: rows_of(&r.gains.l),
        epsilon: eps,
        delays: bounds,
        u_condition: r.u_condition,
    });
    if let Some(g) = &gains {
        write_json(&out.join("gains.json"), g)?;
    }
    let report = DesignReport {
        header: header(cfg, Task::Design),
        status: o.status,
        exit_code: exit.code(),
        message: o.message.clone(),
        epsilon: eps,
        delays: bounds,
        design: SolveSummary::from(&o.result),
        gains,
        transferred_certificate_passes: o.transferred_margins.as_ref().map(|m| m.iter().all(Margin::passes)),
        reanalysis: o
            .reanalysis
            .as_ref()
            .map(|r| analysis_body(ProblemKind::Theorem1, bounds, r)),
        timing: DesignTiming {
            design_seconds: o.solve_seconds,
            reanalysis_seconds: o.reanalysis.as_ref().map(|r| r.solve_seconds),
        },
    };
    write_json(&out.join("design.json"), &report)?;
    Ok(exit)
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    header: Header,
    horizon: usize,
    signal: SignalKind,
    certified: bool,
    final_norm: f64,
    peak_norm: f64,
    /// Whether `min(V₁, V₂)` decreased at every step (within the relative
    /// slack), when a certificate was available.
    minimum_decreasing: Option<bool>,
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Exit> {
    let sys = cfg.delay_system()?;
    let bounds = sys.bounds;
    let sim = &cfg.simulation;
    let phi = match &sim.initial {
        Some(rows) => {
            let m = matrix("simulation.initial", rows)?;
            if m.ncols() != sys.dim() || m.nrows() != bounds.d_big + 1 {
                return Err(Error::Config(format!(
                    "simulation.initial must have {} rows of {} values",
                    bounds.d_big + 1,
                    sys.dim()
                )));
            }
            HistoryVector::new(m.row_iter().map(|r| DVector::from_iterator(r.len(), r.iter().copied())).collect())?
        }
        None => random_history(sys.dim(), bounds.d_big, &mut ChaCha8Rng::seed_from_u64(sim.seed)),
    };
    let signal = DelaySignal::over(sim.signal.clone(), &bounds)?;
    let traj = simulate(&sys, &phi, &signal, sim.horizon)?;

    let cert: Option<LkfCertificate> = if sim.certify {
        analyze(&sys, ProblemKind::Theorem1, &cfg.solver, None)?.certificate
    } else {
        None
    };
    let values: Vec<Option<[f64; 2]>> = (0..=traj.horizon())
        .map(|k| {
            cert.as_ref().map(|c| {
                let h = traj.history(k);
                [c.value(1, &h), c.value(2, &h)]
            })
        })
        .collect();

    let n = sys.dim();
    let mut w = csv::Writer::from_path(out.join("trajectory.csv"))?;
    let mut head = vec!["k".to_string(), "d".into(), "sigma".into()];
    head.extend((1..=n).map(|i| format!("x{i}")));
    head.extend(["V1".into(), "V2".into(), "min".into()]);
    w.write_record(&head)?;
    for k in 0..=traj.horizon() {
        let mut row = vec![k.to_string()];
        if k < traj.horizon() {
            row.push(traj.delays[k].to_string());
            row.push(traj.modes[k].to_string());
        } else {
            row.extend([String::new(), String::new()]);
        }
        row.extend(traj.states[k].iter().map(|v| format!("{v:e}")));
        match values[k] {
            Some([v1, v2]) => row.extend([format!("{v1:e}"), format!("{v2:e}"), format!("{:e}", v1.min(v2))]),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut series: Vec<svg::Series> = (0..n)
        .map(|i| svg::Series {
            label: format!("x{}", i + 1),
            points: traj.states.iter().enumerate().map(|(k, x)| (k as f64, x[i])).collect(),
            markers: false,
        })
        .collect();
    let svg_text = svg::line_plot("State trajectory", "k", "x(k)", &series);
    std::fs::write(out.join("trajectory.svg"), svg_text)?;
    let minimum_decreasing = cert.as_ref().map(|_| {
        let mins: Vec<f64> = values.iter().map(|v| v.map_or(f64::NAN, |[a, b]| a.min(b))).collect();
        series = vec![svg::Series {
            label: "log10 min(V1,V2)".into(),
            points: mins
                .iter()
                .enumerate()
                .filter(|(_, m)| **m > 0.0)
                .map(|(k, m)| (k as f64, m.log10()))
                .collect(),
            markers: false,
        }];
        mins.windows(2)
            .all(|p| p[1] == 0.0 && p[0] == 0.0 || p[1] - p[0] < DECREASE_SLACK * p[0].abs())
    });
    if cert.is_some() {
        std::fs::write(
            out.join("functional.svg"),
            svg::line_plot("Functional along the trajectory", "k", "log10 min(V1, V2)", &series),
        )?;
    }
    let norms: Vec<f64> = (0..=traj.horizon()).map(|k| traj.states[k].norm()).collect();
    let report = SimulateReport {
        header: header(cfg, Task::Simulate),
        horizon: sim.horizon,
        signal: sim.signal.clone(),
        certified: cert.is_some(),
        final_norm: *norms.last().expect("at least one state"),
        peak_norm: norms.iter().copied().fold(0.0, f64::max),
        minimum_decreasing,
    };
    write_json(&out.join("simulate.json"), &report)?;
    Ok(Exit::Ok)
}

#[derive(Debug, Serialize)]
struct SweepReport {
    header: Header,
    #[serde(rename = "d_m")]
    d_m: usize,
    records: Vec<SweepRecord>,
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<Exit> {
    let plant = cfg.plant_model()?;
    let grid = cfg.sweep.as_ref().ok_or_else(|| Error::Config("missing `sweep` section".into()))?;
    let d_m = cfg.delays.d_m;
    let records = sweep(&plant, d_m, grid, &cfg.solver, jobs)?;

    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record(["epsilon", "d_n", "max_feasible_dM", "stop", "solve_seconds"])?;
    for r in &records {
        w.write_record([
            r.epsilon.to_string(),
            r.d_n.to_string(),
            r.max_feasible_d_big.map_or(String::new(), |d| d.to_string()),
            r.stop.label(),
            format!("{:.3}", r.solve_seconds),
        ])?;
    }
    w.flush()?;

    let series: Vec<svg::Series> = grid
        .d_n
        .iter()
        .map(|&dn| svg::Series {
            label: format!("d_n = {dn}"),
            points: records
                .iter()
                .filter(|r| r.d_n == dn)
                .filter_map(|r| r.max_feasible_d_big.map(|d| (r.epsilon, d as f64)))
                .collect(),
            markers: grid.epsilons.len() < 2,
        })
        .collect();
    std::fs::write(
        out.join("sweep.svg"),
        svg::line_plot("Largest feasible maximal delay", "epsilon", "max feasible d_M", &series),
    )?;
    write_json(
        &out.join("sweep.json"),
        &SweepReport {
            header: header(cfg, Task::Sweep),
            d_m,
            records,
        },
    )?;
    Ok(Exit::Ok)
}

fn build_sdp(cfg: &RunConfig) -> Result<crate::sdp::SdpProblem> {
    Ok(match cfg.problem {
        ProblemKind::Corollary1 => normalize(&corollary1_problem(&cfg.plant_model()?, cfg.bounds()?, cfg.epsilon()?)?.lmi),
        kind => normalize(&build_analysis(&cfg.delay_system()?, kind)?.lmi),
    })
}

#[derive(Debug, Serialize)]
struct BlockInfo {
    index: usize,
    tag: String,
    dim: usize,
    strict: bool,
    negated: bool,
    shift: f64,
}

#[derive(Debug, Serialize)]
struct ExportReport {
    header: Header,
    problem: ProblemKind,
    n_vars: usize,
    variables: Vec<crate::lmi::VariableBlock>,
    blocks: Vec<BlockInfo>,
}

pub fn cmd_export_sdpa(cfg: &RunConfig, out: &Path) -> Result<Exit> {
    let sdp = build_sdp(cfg)?;
    std::fs::write(out.join("problem.dat-s"), export_sdpa(&sdp))?;
    let report = ExportReport {
        header: header(cfg, Task::ExportSdpa),
        problem: cfg.problem,
        n_vars: sdp.n_vars,
        variables: sdp.directory.clone(),
        blocks: sdp
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| BlockInfo {
                index: i + 1,
                tag: tag_label(&b.tag),
                dim: b.dim,
                strict: b.strict,
                negated: b.negated,
                shift: b.shift,
            })
            .collect(),
    };
    write_json(&out.join("problem.json"), &report)?;
    Ok(Exit::Ok)
}

#[derive(Debug, Serialize)]
struct CheckReport {
    header: Header,
    problem: ProblemKind,
    passed: bool,
    exit_code: i32,
    worst_margin: f64,
    margins: Vec<Margin>,
    checks: Option<AnalysisChecks>,
}

/// Reads an assignment from an SDPA solution or an `analyze` report.
pub fn read_assignment(path: &Path, format: SolutionFormat, n_vars: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    match format {
        SolutionFormat::Sdpa => parse_sdpa_solution(&text, n_vars),
        SolutionFormat::Report => {
            let v: serde_json::Value = serde_json::from_str(&text)?;
            let a = v
                .get("assignment")
                .and_then(|a| a.as_array())
                .ok_or_else(|| Error::Parse("report has no `assignment` array".into()))?;
            let y = a
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| Error::Parse("non-numeric assignment entry".into())))
                .collect::<Result<Vec<f64>>>()?;
            if y.len() != n_vars {
                return Err(Error::Parse(format!("assignment has {} entries, expected {n_vars}", y.len())));
            }
            Ok(y)
        }
    }
}

pub fn cmd_check_certificate(cfg: &RunConfig, base: &Path, out: &Path) -> Result<Exit> {
    let cc = cfg
        .certificate
        .as_ref()
        .ok_or_else(|| Error::Config("missing `certificate` section".into()))?;
    let sdp = build_sdp(cfg)?;
    let y = read_assignment(&base.join(&cc.solution), cc.format, sdp.n_vars)?;
    let margins = check_margins(&sdp, &y, cfg.solver.margin_tol)?;
    let mut passed = margins.iter().all(Margin::passes);
    let mut checks = None;
    if passed && cfg.problem == ProblemKind::Theorem1 {
        let sys = cfg.delay_system()?;
        let problem = build_analysis(&sys, ProblemKind::Theorem1)?;
        let cert = LkfCertificate::from_analysis(&problem, sys.bounds, &y)?.with_margins(margins.clone());
        let c = run_checks(&cert, &sys, &cfg.check)?;
        passed &= c.passed;
        checks = Some(c);
    }
    let exit = if passed { Exit::Ok } else { Exit::Infeasible };
    let report = CheckReport {
        header: header(cfg, Task::CheckCertificate),
        problem: cfg.problem,
        passed,
        exit_code: exit.code(),
        worst_margin: margins.iter().map(|m| m.min_eigenvalue).fold(f64::INFINITY, f64::min),
        margins,
        checks,
    };
    write_json(&out.join("check.json"), &report)?;
    Ok(exit)
}

/// Largest absolute eigenvalue of the delay-free part, reported for
/// orientation in diagnostics.
pub fn nominal_spectral_radius(cfg: &RunConfig) -> Result<f64> {
    Ok(linalg::spectral_radius(&cfg.delay_system()?.a))
}
