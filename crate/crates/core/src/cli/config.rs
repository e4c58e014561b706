//! Run configuration: JSON input with row-major nested arrays for matrices
//! and integers for delays.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{build_closed_loop, ControllerGains, DelayBounds, DelaySystem, PlantModel};
use crate::sdp::SolverConfig;
use crate::simverify::SignalKind;

pub type MatrixRows = Vec<Vec<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Analyze,
    Design,
    Simulate,
    Sweep,
    ExportSdpa,
    CheckCertificate,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Analyze => "analyze",
            Task::Design => "design",
            Task::Simulate => "simulate",
            Task::Sweep => "sweep",
            Task::ExportSdpa => "export-sdpa",
            Task::CheckCertificate => "check-certificate",
        }
    }
}

/// Which feasibility problem a task builds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// Single-interval analysis; needs `d_n ∈ {d_m, d_M}` or `A_n = 0`.
    Lemma2,
    /// Two-mode switched analysis.
    #[default]
    Theorem1,
    /// Observer-based controller co-design.
    Corollary1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "A")]
    pub a: MatrixRows,
    #[serde(rename = "A_n")]
    pub a_n: MatrixRows,
    #[serde(rename = "A_d")]
    pub a_d: MatrixRows,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    #[serde(rename = "A_p")]
    pub a_p: MatrixRows,
    #[serde(rename = "B_p")]
    pub b_p: MatrixRows,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsConfig {
    #[serde(rename = "K")]
    pub k: MatrixRows,
    #[serde(rename = "F")]
    pub f: MatrixRows,
    #[serde(rename = "L")]
    pub l: MatrixRows,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub d_n: Vec<usize>,
    /// Largest `d_M` tried for each grid point.
    #[serde(rename = "d_M_cap")]
    pub d_big_cap: usize,
    /// Try every `d_M` up to the cap instead of stopping at the first
    /// infeasible value.
    #[serde(default)]
    pub exhaustive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub horizon: usize,
    pub signal: SignalKind,
    /// Initial history, newest sample first; random from `seed` when absent.
    pub initial: Option<MatrixRows>,
    pub seed: u64,
    /// Solve the switched analysis first so that the functionals can be
    /// reported along the trajectory.
    pub certify: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            horizon: 200,
            signal: SignalKind::UniformRandom { seed: 1 },
            initial: None,
            seed: 0,
            certify: true,
        }
    }
}

/// Post-solve checks of a feasible switched analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub trajectories: usize,
    pub horizon: usize,
    pub seed: u64,
    pub brute_force: bool,
    pub brute_force_depth: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            trajectories: 100,
            horizon: 500,
            seed: 42,
            brute_force: true,
            brute_force_depth: crate::simverify::DEFAULT_DEPTH,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolutionFormat {
    /// An SDPA solution file (`xVec` line or a bare list of numbers).
    Sdpa,
    /// A report written by `analyze`, read through its `assignment` field.
    #[default]
    Report,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    /// Path of the solution, relative to the configuration file.
    pub solution: PathBuf,
    #[serde(default)]
    pub format: SolutionFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub problem: ProblemKind,
    #[serde(default)]
    pub system: Option<SystemConfig>,
    #[serde(default)]
    pub plant: Option<PlantConfig>,
    #[serde(default)]
    pub gains: Option<GainsConfig>,
    pub delays: DelayBounds,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub certificate: Option<CertificateConfig>,
}

pub fn matrix(name: &str, rows: &MatrixRows) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::Config(format!("{name} must be a nonempty matrix")));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::Config(format!(
            "{name} is not rectangular: row {i} has {} entries, row 0 has {c}",
            rows[i].len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn rows_of(m: &DMatrix<f64>) -> MatrixRows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config does not match the schema: {e}")))
    }

    /// SHA-256 of the canonical JSON form (keys sorted, no whitespace).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_value(self).and_then(|v| serde_json::to_string(&v)).unwrap_or_default();
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn bounds(&self) -> Result<DelayBounds> {
        DelayBounds::new(self.delays.d_m, self.delays.d_n, self.delays.d_big)
    }

    pub fn plant_model(&self) -> Result<PlantModel> {
        let p = self
            .plant
            .as_ref()
            .ok_or_else(|| Error::Config("this task needs a `plant` section".into()))?;
        PlantModel::new(matrix("A_p", &p.a_p)?, matrix("B_p", &p.b_p)?)
    }

    pub fn controller_gains(&self) -> Result<Option<ControllerGains>> {
        self.gains
            .as_ref()
            .map(|g| {
                Ok(ControllerGains {
                    k: matrix("K", &g.k)?,
                    f: matrix("F", &g.f)?,
                    l: matrix("L", &g.l)?,
                })
            })
            .transpose()
    }

    /// The delay system to analyse: given directly, or the closed loop of a
    /// plant with gains.
    pub fn delay_system(&self) -> Result<DelaySystem> {
        let bounds = self.bounds()?;
        match (&self.system, &self.plant, self.controller_gains()?) {
            (Some(s), None, None) => DelaySystem::new(
                matrix("A", &s.a)?,
                matrix("A_n", &s.a_n)?,
                matrix("A_d", &s.a_d)?,
                bounds,
            ),
            (None, Some(_), Some(g)) => build_closed_loop(&self.plant_model()?, &g, bounds),
            _ => Err(Error::Config(
                "give either a `system` section or both `plant` and `gains`".into(),
            )),
        }
    }

    pub fn epsilon(&self) -> Result<f64> {
        self.epsilon
            .ok_or_else(|| Error::Config("this task needs `epsilon`".into()))
    }

    /// Checks everything the given task needs, collecting every problem.
    pub fn validate(&self, task: Task) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let mut note = |r: Result<()>| {
            if let Err(e) = r {
                errs.push(e.to_string());
            }
        };
        if let Some(t) = self.task {
            if t != task {
                note(Err(Error::Config(format!(
                    "config is for `{}` but `{}` was requested",
                    t.name(),
                    task.name()
                ))));
            }
        }
        note(self.bounds().map(|_| ()));
        note(self.solver_check());
        match task {
            Task::Analyze | Task::Simulate | Task::CheckCertificate => {
                if task == Task::CheckCertificate && self.problem == ProblemKind::Corollary1 {
                    note(self.design_inputs());
                } else {
                    note(self.delay_system().map(|_| ()));
                }
                if task == Task::Analyze && self.problem == ProblemKind::Corollary1 {
                    note(Err(Error::Config("analyze takes `lemma2` or `theorem1`".into())));
                }
                if task == Task::CheckCertificate && self.certificate.is_none() {
                    note(Err(Error::Config("check-certificate needs a `certificate` section".into())));
                }
                if task == Task::Simulate && self.simulation.horizon == 0 {
                    note(Err(Error::Config("simulation.horizon must be at least 1".into())));
                }
            }
            Task::Design => note(self.design_inputs()),
            Task::Sweep => {
                note(self.plant_model().map(|_| ()));
                match &self.sweep {
                    None => note(Err(Error::Config("sweep needs a `sweep` section".into()))),
                    Some(s) => {
                        if s.epsilons.is_empty() || s.d_n.is_empty() {
                            note(Err(Error::Config("sweep grid lists must be nonempty".into())));
                        }
                        if let Some(e) = s.epsilons.iter().find(|e| !(**e > -1.0 && **e <= 0.0)) {
                            note(Err(Error::Config(format!("sweep epsilon {e} outside (-1, 0]"))));
                        }
                        if let Some(d) = s.d_n.iter().find(|d| **d < self.delays.d_m) {
                            note(Err(Error::Config(format!("sweep d_n {d} below d_m"))));
                        }
                    }
                }
            }
            Task::ExportSdpa => match self.problem {
                ProblemKind::Corollary1 => note(self.design_inputs()),
                _ => note(self.delay_system().map(|_| ())),
            },
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    fn design_inputs(&self) -> Result<()> {
        self.plant_model()?;
        let e = self.epsilon()?;
        if !(e > -1.0 && e <= 0.0) {
            return Err(Error::Config(format!("epsilon must lie in (-1, 0], got {e}")));
        }
        Ok(())
    }

    fn solver_check(&self) -> Result<()> {
        let s = &self.solver;
        if [s.gap_tol, s.margin_tol, s.infeasibility_tol].iter().any(|t| !t.is_finite() || *t <= 0.0) || s.max_iterations == 0 {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        Ok(())
    }
}
