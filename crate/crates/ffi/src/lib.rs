//! C interface to `delaylmi`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`DelaylmiStatus`]; on failure a message is kept per thread and can be
//! read with [`delaylmi_last_error`]. Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use delaylmi::cli::config::ProblemKind;
use delaylmi::cli::workflows::{analyze, build_analysis, design, AnalysisOutcome, DesignOutcome, DesignStatus};
use delaylmi::model::{build_closed_loop, ControllerGains, DelayBounds, DelaySystem, HistoryVector, PlantModel};
use delaylmi::sdp::{export_sdpa, normalize, FeasibilityStatus, SolverConfig};
use delaylmi::simverify::{simulate, DelaySignal, SignalKind};
use delaylmi::Error;
use nalgebra::DMatrix;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DelaylmiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Dimensions of the supplied arrays do not fit together.
    Dimension = 3,
    Solver = 4,
    Numerical = 5,
    Io = 6,
    /// A panic was caught at the boundary; the library state is unchanged.
    Internal = 7,
}

/// Outcome of a feasibility problem.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DelaylmiFeasibility {
    Feasible = 0,
    Infeasible = 1,
    Inconclusive = 2,
}

/// Analysis conditions to build.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DelaylmiProblem {
    /// One functional over the whole delay interval.
    SingleInterval = 0,
    /// Two functionals switched on the delay value.
    Switched = 1,
}

/// A delay system `x(k+1) = A x(k) + A_n x(k−d_n) + A_d x(k−d(k))`.
pub struct DelaylmiSystem {
    inner: DelaySystem,
}

/// Result of an analysis, holding the certificate when one was found.
pub struct DelaylmiAnalysis {
    inner: AnalysisOutcome,
}

/// Result of an observer-based controller design.
pub struct DelaylmiDesign {
    inner: DesignOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DelaylmiStatus, msg: impl Into<String>) -> DelaylmiStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> DelaylmiStatus {
    match e {
        Error::Dimension(_) => DelaylmiStatus::Dimension,
        Error::Solver(_) => DelaylmiStatus::Solver,
        Error::Numerical(_) => DelaylmiStatus::Numerical,
        Error::Io(_) => DelaylmiStatus::Io,
        _ => DelaylmiStatus::InvalidArgument,
    }
}

/// Runs `f`, turning library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), DelaylmiStatus>) -> DelaylmiStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DelaylmiStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(DelaylmiStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, DelaylmiStatus>;
}

impl<T> OrStatus<T> for delaylmi::Result<T> {
    fn or_status(self) -> Result<T, DelaylmiStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

/// Copies a row-major `rows × cols` array into a matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles.
unsafe fn read_matrix(data: *const f64, rows: usize, cols: usize, name: &str) -> Result<DMatrix<f64>, DelaylmiStatus> {
    if data.is_null() {
        return Err(fail(DelaylmiStatus::NullPointer, format!("{name} is NULL")));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| fail(DelaylmiStatus::Dimension, format!("{name} is too large")))?;
    let s = unsafe { std::slice::from_raw_parts(data, len) };
    Ok(DMatrix::from_row_slice(rows, cols, s))
}

fn feasibility(s: FeasibilityStatus) -> DelaylmiFeasibility {
    match s {
        FeasibilityStatus::Feasible => DelaylmiFeasibility::Feasible,
        FeasibilityStatus::Infeasible => DelaylmiFeasibility::Infeasible,
        FeasibilityStatus::Inconclusive => DelaylmiFeasibility::Inconclusive,
    }
}

fn problem_kind(p: DelaylmiProblem) -> ProblemKind {
    match p {
        DelaylmiProblem::SingleInterval => ProblemKind::Lemma2,
        DelaylmiProblem::Switched => ProblemKind::Theorem1,
    }
}

fn check_out<T>(out: *mut *mut T) -> Result<(), DelaylmiStatus> {
    if out.is_null() {
        Err(fail(DelaylmiStatus::NullPointer, "output pointer is NULL"))
    } else {
        Ok(())
    }
}

fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, DelaylmiStatus> {
    // SAFETY: non-NULL handles come from this library and are alive until freed.
    unsafe { p.as_ref() }.ok_or_else(|| fail(DelaylmiStatus::NullPointer, format!("{what} handle is NULL")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn delaylmi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn delaylmi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn delaylmi_clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Creates a system from three `n × n` row-major matrices and the delay
/// bounds `d_m ≤ d_n ≤ d_M`.
///
/// # Safety
/// `a`, `a_n` and `a_d` must each point to `n * n` doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_system_new(
    n: usize,
    a: *const f64,
    a_n: *const f64,
    a_d: *const f64,
    d_m: usize,
    d_n: usize,
    d_big: usize,
    out: *mut *mut DelaylmiSystem,
) -> DelaylmiStatus {
    guard(|| {
        check_out(out)?;
        let bounds = DelayBounds::new(d_m, d_n, d_big).or_status()?;
        let sys = unsafe {
            DelaySystem::new(
                read_matrix(a, n, n, "A")?,
                read_matrix(a_n, n, n, "A_n")?,
                read_matrix(a_d, n, n, "A_d")?,
                bounds,
            )
        }
        .or_status()?;
        unsafe { *out = Box::into_raw(Box::new(DelaylmiSystem { inner: sys })) };
        Ok(())
    })
}

/// Builds the closed loop of a plant `(A_p, B_p)` with state dimension
/// `n_p` and `m` inputs under the observer-based controller `(K, F, L)`.
/// The loop state is the plant state followed by the estimation error.
///
/// # Safety
/// `a_p` holds `n_p * n_p` doubles, `b_p` `n_p * m`, `k` and `f` `m * n_p`,
/// `l` `n_p * n_p`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_system_from_plant(
    n_p: usize,
    m: usize,
    a_p: *const f64,
    b_p: *const f64,
    k: *const f64,
    f: *const f64,
    l: *const f64,
    d_m: usize,
    d_n: usize,
    d_big: usize,
    out: *mut *mut DelaylmiSystem,
) -> DelaylmiStatus {
    guard(|| {
        check_out(out)?;
        let bounds = DelayBounds::new(d_m, d_n, d_big).or_status()?;
        let plant = unsafe { PlantModel::new(read_matrix(a_p, n_p, n_p, "A_p")?, read_matrix(b_p, n_p, m, "B_p")?) }.or_status()?;
        let gains = unsafe {
            ControllerGains {
                k: read_matrix(k, m, n_p, "K")?,
                f: read_matrix(f, m, n_p, "F")?,
                l: read_matrix(l, n_p, n_p, "L")?,
            }
        };
        let sys = build_closed_loop(&plant, &gains, bounds).or_status()?;
        unsafe { *out = Box::into_raw(Box::new(DelaylmiSystem { inner: sys })) };
        Ok(())
    })
}

/// State dimension of a system, 0 for NULL.
///
/// # Safety
/// `sys` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_system_dim(sys: *const DelaylmiSystem) -> usize {
    // SAFETY: see `handle`.
    unsafe { sys.as_ref() }.map_or(0, |s| s.inner.dim())
}

/// # Safety
/// `sys` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_system_free(sys: *mut DelaylmiSystem) {
    if !sys.is_null() {
        drop(unsafe { Box::from_raw(sys) });
    }
}

/// Simulates the system for `horizon` steps.
///
/// `history` holds `d_M + 1` samples of dimension `n`, newest first, and
/// `delays` holds `horizon` delay values. The states `x(0), …, x(horizon)`
/// are written to `states`, which must have room for `(horizon + 1) * n`
/// doubles.
///
/// # Safety
/// All pointers must be valid for the sizes above.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_simulate(
    sys: *const DelaylmiSystem,
    history: *const f64,
    delays: *const usize,
    horizon: usize,
    states: *mut f64,
    states_len: usize,
) -> DelaylmiStatus {
    guard(|| {
        let s = &handle(sys, "system")?.inner;
        let n = s.dim();
        let samples = s.bounds.d_big + 1;
        if delays.is_null() || states.is_null() {
            return Err(fail(DelaylmiStatus::NullPointer, "delays or states is NULL"));
        }
        let needed = (horizon + 1) * n;
        if states_len < needed {
            return Err(fail(DelaylmiStatus::Dimension, format!("states holds {states_len} doubles, need {needed}")));
        }
        let h = unsafe { read_matrix(history, samples, n, "history")? };
        let phi = HistoryVector::new(h.row_iter().map(|r| r.transpose()).collect()).or_status()?;
        let seq = unsafe { std::slice::from_raw_parts(delays, horizon) }.to_vec();
        let signal = DelaySignal::over(SignalKind::Explicit { sequence: seq }, &s.bounds).or_status()?;
        let t = simulate(s, &phi, &signal, horizon).or_status()?;
        let dst = unsafe { std::slice::from_raw_parts_mut(states, needed) };
        for (k, x) in t.states.iter().enumerate() {
            dst[k * n..(k + 1) * n].copy_from_slice(x.as_slice());
        }
        Ok(())
    })
}

/// Builds and solves the analysis conditions with default solver settings.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_analyze(
    sys: *const DelaylmiSystem,
    problem: DelaylmiProblem,
    out: *mut *mut DelaylmiAnalysis,
) -> DelaylmiStatus {
    guard(|| {
        check_out(out)?;
        let s = &handle(sys, "system")?.inner;
        let o = analyze(s, problem_kind(problem), &SolverConfig::default(), None).or_status()?;
        unsafe { *out = Box::into_raw(Box::new(DelaylmiAnalysis { inner: o })) };
        Ok(())
    })
}

/// Verdict of an analysis; `Inconclusive` for NULL.
///
/// # Safety
/// `a` must be NULL or a live handle from `delaylmi_analyze`.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_analysis_feasibility(a: *const DelaylmiAnalysis) -> DelaylmiFeasibility {
    // SAFETY: see `handle`.
    unsafe { a.as_ref() }.map_or(DelaylmiFeasibility::Inconclusive, |a| feasibility(a.inner.status()))
}

/// Evaluates the certified functional of `mode` (1 or 2) on a history of
/// `d_M + 1` samples, newest first. Only switched analyses carry a
/// functional that can be evaluated.
///
/// # Safety
/// `history` must hold `(d_M + 1) * n` doubles and `value` be writable.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_analysis_functional(
    a: *const DelaylmiAnalysis,
    mode: u32,
    history: *const f64,
    value: *mut f64,
) -> DelaylmiStatus {
    guard(|| {
        let a = &handle(a, "analysis")?.inner;
        if value.is_null() {
            return Err(fail(DelaylmiStatus::NullPointer, "value is NULL"));
        }
        let cert = a
            .certificate
            .as_ref()
            .ok_or_else(|| fail(DelaylmiStatus::InvalidArgument, "analysis holds no switched certificate"))?;
        if mode != 1 && mode != 2 {
            return Err(fail(DelaylmiStatus::InvalidArgument, format!("mode must be 1 or 2, got {mode}")));
        }
        let n = cert.n();
        let h = unsafe { read_matrix(history, cert.bounds().d_big + 1, n, "history")? };
        let phi = HistoryVector::new(h.row_iter().map(|r| r.transpose()).collect()).or_status()?;
        unsafe { *value = cert.value(mode as usize, &phi) };
        Ok(())
    })
}

/// # Safety
/// `a` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_analysis_free(a: *mut DelaylmiAnalysis) {
    if !a.is_null() {
        drop(unsafe { Box::from_raw(a) });
    }
}

/// Designs `K`, `F` and `L` for the plant so that the closed loop is
/// certified for delays in `[d_m, d_M]` with nominal delay `d_n`. `epsilon`
/// must lie in `(−1, 0]`. A finished solve yields a handle even when no
/// gains were found; query it with [`delaylmi_design_feasibility`].
///
/// # Safety
/// `a_p` holds `n_p * n_p` doubles, `b_p` `n_p * m`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_design(
    n_p: usize,
    m: usize,
    a_p: *const f64,
    b_p: *const f64,
    d_m: usize,
    d_n: usize,
    d_big: usize,
    epsilon: f64,
    out: *mut *mut DelaylmiDesign,
) -> DelaylmiStatus {
    guard(|| {
        check_out(out)?;
        let bounds = DelayBounds::new(d_m, d_n, d_big).or_status()?;
        let plant = unsafe { PlantModel::new(read_matrix(a_p, n_p, n_p, "A_p")?, read_matrix(b_p, n_p, m, "B_p")?) }.or_status()?;
        let o = design(&plant, bounds, epsilon, &SolverConfig::default(), None).or_status()?;
        unsafe { *out = Box::into_raw(Box::new(DelaylmiDesign { inner: o })) };
        Ok(())
    })
}

/// `Feasible` only when gains were recovered and the closed loop passed
/// re-analysis.
///
/// # Safety
/// `d` must be NULL or a live handle from `delaylmi_design`.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_design_feasibility(d: *const DelaylmiDesign) -> DelaylmiFeasibility {
    // SAFETY: see `handle`.
    match unsafe { d.as_ref() }.map(|d| d.inner.status) {
        Some(DesignStatus::Success) => DelaylmiFeasibility::Feasible,
        Some(DesignStatus::Infeasible) => DelaylmiFeasibility::Infeasible,
        _ => DelaylmiFeasibility::Inconclusive,
    }
}

/// Copies the recovered gains row-major into `k` and `f` (`m * n_p` each)
/// and `l` (`n_p * n_p`).
///
/// # Safety
/// The buffers must be writable for the sizes above.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_design_gains(d: *const DelaylmiDesign, k: *mut f64, f: *mut f64, l: *mut f64) -> DelaylmiStatus {
    guard(|| {
        let d = &handle(d, "design")?.inner;
        let rec = d
            .recovered
            .as_ref()
            .ok_or_else(|| fail(DelaylmiStatus::InvalidArgument, "design produced no gains"))?;
        for (name, dst, m) in [("K", k, &rec.gains.k), ("F", f, &rec.gains.f), ("L", l, &rec.gains.l)] {
            if dst.is_null() {
                return Err(fail(DelaylmiStatus::NullPointer, format!("{name} buffer is NULL")));
            }
            let buf = unsafe { std::slice::from_raw_parts_mut(dst, m.len()) };
            for (slot, v) in buf.iter_mut().zip(m.transpose().iter()) {
                *slot = *v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `d` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_design_free(d: *mut DelaylmiDesign) {
    if !d.is_null() {
        drop(unsafe { Box::from_raw(d) });
    }
}

/// Writes the analysis conditions of `sys` in SDPA sparse format. The
/// string is owned by the caller and released with [`delaylmi_string_free`].
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_export_sdpa(
    sys: *const DelaylmiSystem,
    problem: DelaylmiProblem,
    out: *mut *mut c_char,
) -> DelaylmiStatus {
    guard(|| {
        check_out(out)?;
        let s = &handle(sys, "system")?.inner;
        let p = build_analysis(s, problem_kind(problem)).or_status()?;
        let text = export_sdpa(&normalize(&p.lmi));
        let c = CString::new(text).map_err(|_| fail(DelaylmiStatus::Internal, "export contains NUL"))?;
        unsafe { *out = c.into_raw() };
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn delaylmi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Human-readable name of a status code as a static string.
#[no_mangle]
pub extern "C" fn delaylmi_status_name(s: DelaylmiStatus) -> *const c_char {
    let name: &'static CStr = match s {
        DelaylmiStatus::Ok => c"ok",
        DelaylmiStatus::NullPointer => c"null pointer",
        DelaylmiStatus::InvalidArgument => c"invalid argument",
        DelaylmiStatus::Dimension => c"dimension mismatch",
        DelaylmiStatus::Solver => c"solver failure",
        DelaylmiStatus::Numerical => c"numerical failure",
        DelaylmiStatus::Io => c"i/o error",
        DelaylmiStatus::Internal => c"internal error",
    };
    name.as_ptr()
}
