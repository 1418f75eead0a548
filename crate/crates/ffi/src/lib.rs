//! C interface to `dr_splitting`.
//!
//! Problems and solvers are opaque handles created by `dr_problem_*` and
//! `dr_solver_new` and released with the matching `*_free`. Every fallible
//! call returns a [`DrStatus`]; the message of the last failure on the
//! calling thread is available from [`dr_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dr_splitting::cli::{load_config, run_experiment};
use dr_splitting::metrics::{primal_value, ReferencePoint};
use dr_splitting::precond::PrecondKind;
use dr_splitting::problems::{
    build_classification, build_tgv_kl, motion_blur_kernel, parse_libsvm, reference_solution, synth_classification, synth_deblur, tiny_qp, ImagePattern,
    RefMethod, RefOptions,
};
use dr_splitting::solvers::{transitional, AlgState, Algorithm, Engine, RelaxationSchedule, SaddleProblem, SolverConfig};
use dr_splitting::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Config = 4,
    Io = 5,
    Runtime = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Algorithm codes for [`DrSolverOptions::algorithm`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrAlgorithm {
    Pdr = 0,
    Rpdr = 1,
    Pdrq = 2,
    Rpdrq = 3,
    Spdr = 4,
    Srpdr = 5,
    Spdrq = 6,
    Srpdrq = 7,
    Pdhg = 8,
    Spdhg = 9,
}

/// Preconditioner codes for [`DrSolverOptions::precond`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrPrecond {
    Richardson = 0,
    SgsRedBlack = 1,
    Exact = 2,
}

/// Reference methods for [`dr_problem_reference`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrRefMethod {
    Oracle = 0,
    LongRun = 1,
}

/// Solver settings. `algorithm` and `precond` take the values of
/// [`DrAlgorithm`] and [`DrPrecond`]; `rho` applies to the relaxed
/// algorithms only.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrSolverOptions {
    pub algorithm: i32,
    pub sigma: f64,
    pub tau: f64,
    pub precond: i32,
    pub rho: f64,
    pub sweeps: u32,
    pub seed: u64,
}

/// A saddle-point problem.
pub struct DrProblem {
    inner: Arc<SaddleProblem>,
    reference: Option<ReferencePoint>,
}

/// A solver with its current iterate.
pub struct DrSolver {
    engine: Engine,
    state: AlgState,
    algorithm: Algorithm,
    rng: ChaCha8Rng,
    k: u64,
    steps_per_epoch: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> DrStatus {
    match e {
        Error::Parse { .. } => DrStatus::Parse,
        Error::Config { .. } => DrStatus::Config,
        Error::Io(_) => DrStatus::Io,
        Error::InvalidArgument(_) | Error::Layout(_) | Error::Variant(_) => DrStatus::InvalidArgument,
        _ => DrStatus::Runtime,
    }
}

struct Fail(DrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail(code: DrStatus, msg: impl Into<String>) -> Fail {
    Fail(code, msg.into())
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DrStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_default();
            set_error(format!("panic: {msg}"));
            DrStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(fail(DrStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| fail(DrStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize, name: &str) -> Result<(), Fail> {
    non_null(dst, name)?;
    if len < src.len() {
        return Err(fail(DrStatus::BufferTooSmall, format!("`{name}` holds {len} values, {} needed", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

fn algorithm(code: i32) -> Result<Algorithm, Fail> {
    const ALL: [Algorithm; 10] = [
        Algorithm::Pdr,
        Algorithm::Rpdr,
        Algorithm::Pdrq,
        Algorithm::Rpdrq,
        Algorithm::Spdr,
        Algorithm::Srpdr,
        Algorithm::Spdrq,
        Algorithm::Srpdrq,
        Algorithm::Pdhg,
        Algorithm::Spdhg,
    ];
    usize::try_from(code).ok().and_then(|i| ALL.get(i).copied()).ok_or_else(|| fail(DrStatus::InvalidArgument, format!("unknown algorithm code {code}")))
}

fn precond(code: i32) -> Result<PrecondKind, Fail> {
    match code {
        0 => Ok(PrecondKind::Richardson),
        1 => Ok(PrecondKind::SgsRedBlack),
        2 => Ok(PrecondKind::Exact),
        _ => Err(fail(DrStatus::InvalidArgument, format!("unknown preconditioner code {code}"))),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message of this thread into `buf` (truncated and
/// NUL-terminated) and returns the buffer size needed for all of it.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn dr_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// The three-variable quadratic test problem with two dual blocks.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_problem_tiny_qp(out: *mut *mut DrProblem) -> DrStatus {
    guard(|| {
        non_null(out, "out")?;
        let t = tiny_qp();
        let reference = t.reference()?;
        store(out, DrProblem { inner: Arc::new(t.problem), reference: Some(reference) });
        Ok(())
    })
}

/// Synthetic binary classification with `n` samples and `d` features.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_problem_classification_synth(n: usize, d: usize, separability: f64, lambda: f64, seed: u64, out: *mut *mut DrProblem) -> DrStatus {
    guard(|| {
        non_null(out, "out")?;
        let spec = synth_classification(n, d, separability, lambda, seed)?;
        store(out, DrProblem { inner: Arc::new(build_classification(&spec)?), reference: None });
        Ok(())
    })
}

/// Classification from a LIBSVM file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for
/// writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_problem_classification_libsvm(path: *const c_char, lambda: f64, out: *mut *mut DrProblem) -> DrStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = c_str(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(Error::from)?;
        let spec = parse_libsvm(&text, None)?.to_spec(lambda)?;
        store(out, DrProblem { inner: Arc::new(build_classification(&spec)?), reference: None });
        Ok(())
    })
}

/// TGV-KL deblurring of a synthetic `d1 x d2` image under motion blur.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_problem_tgv_kl_synth(
    d1: usize,
    d2: usize,
    blur_length: usize,
    blur_angle: f64,
    alpha0: f64,
    alpha1: f64,
    out: *mut *mut DrProblem,
) -> DrStatus {
    guard(|| {
        non_null(out, "out")?;
        let sd = synth_deblur(d1, d2, ImagePattern::Shapes, motion_blur_kernel(blur_length, blur_angle)?, alpha0, alpha1, None)?;
        store(out, DrProblem { inner: Arc::new(build_tgv_kl(&sd.spec)?), reference: None });
        Ok(())
    })
}

/// Releases a problem; null is ignored.
///
/// # Safety
/// `p` must be null or a handle from a `dr_problem_*` constructor that was
/// not freed before.
#[no_mangle]
pub unsafe extern "C" fn dr_problem_free(p: *mut DrProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Primal length, dual length and number of dual blocks.
///
/// # Safety
/// `p` must be a live handle; the outputs must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn dr_problem_dims(p: *const DrProblem, primal_len: *mut usize, dual_len: *mut usize, blocks: *mut usize) -> DrStatus {
    guard(|| {
        non_null(p, "problem")?;
        non_null(primal_len, "primal_len")?;
        non_null(dual_len, "dual_len")?;
        non_null(blocks, "blocks")?;
        let prob = &(*p).inner;
        *primal_len = prob.primal.total_len();
        *dual_len = prob.dual.total_len();
        *blocks = prob.n();
        Ok(())
    })
}

/// Primal objective at `x` (`+inf` outside its domain).
///
/// # Safety
/// `p` must be a live handle, `x` valid for `len` reads and `value` for
/// one write.
#[no_mangle]
pub unsafe extern "C" fn dr_problem_primal_value(p: *const DrProblem, x: *const f64, len: usize, value: *mut f64) -> DrStatus {
    guard(|| {
        non_null(p, "problem")?;
        non_null(x, "x")?;
        non_null(value, "value")?;
        let prob = &(*p).inner;
        if len != prob.primal.total_len() {
            return Err(fail(DrStatus::InvalidArgument, format!("x has {len} values, the problem {}", prob.primal.total_len())));
        }
        *value = primal_value(prob, std::slice::from_raw_parts(x, len));
        Ok(())
    })
}

/// Computes (or returns the stored) reference saddle point and its primal
/// value. The long run uses over-relaxed PDR with step sizes `sigma`,
/// `tau` and stops at certificate `tol` or after `budget` iterations.
///
/// # Safety
/// `p` must be a live handle; `x_out`/`y_out` valid for `x_len`/`y_len`
/// writes; `primal` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dr_problem_reference(
    p: *mut DrProblem,
    method: i32,
    sigma: f64,
    tau: f64,
    budget: usize,
    tol: f64,
    x_out: *mut f64,
    x_len: usize,
    y_out: *mut f64,
    y_len: usize,
    primal: *mut f64,
) -> DrStatus {
    guard(|| {
        non_null(p, "problem")?;
        non_null(primal, "primal")?;
        let h = &mut *p;
        let method = match method {
            0 => RefMethod::Oracle,
            1 => RefMethod::LongRun,
            m => return Err(fail(DrStatus::InvalidArgument, format!("unknown reference method {m}"))),
        };
        let r = match (&h.reference, method) {
            (Some(r), RefMethod::Oracle) => r.clone(),
            _ => {
                let opts = RefOptions { sigma, tau, budget, tol, ..RefOptions::default() };
                reference_solution(&h.inner, method, &opts)?
            }
        };
        copy_out(&r.x_star, x_out, x_len, "x_out")?;
        copy_out(&r.y_star, y_out, y_len, "y_out")?;
        *primal = r.primal_value;
        Ok(())
    })
}

/// Defaults for `algorithm`: unit step sizes, Richardson, `rho = 1.9`,
/// one sweep, seed 5.
#[no_mangle]
pub extern "C" fn dr_solver_options_default(algorithm: i32) -> DrSolverOptions {
    DrSolverOptions { algorithm, sigma: 1.0, tau: 1.0, precond: DrPrecond::Richardson as i32, rho: 1.9, sweeps: 1, seed: 5 }
}

/// Creates a solver at the zero iterate. The problem may be freed
/// afterwards.
///
/// # Safety
/// `p` must be a live handle, `opts` valid for reading and `out` for
/// writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_solver_new(p: *const DrProblem, opts: *const DrSolverOptions, out: *mut *mut DrSolver) -> DrStatus {
    guard(|| {
        non_null(p, "problem")?;
        non_null(opts, "opts")?;
        non_null(out, "out")?;
        let o = *opts;
        let alg = algorithm(o.algorithm)?;
        let mut cfg = SolverConfig::new(alg, o.sigma, o.tau);
        cfg.precond = precond(o.precond)?;
        cfg.sweeps = o.sweeps as usize;
        cfg.seed = o.seed;
        if matches!(alg, Algorithm::Rpdr | Algorithm::Rpdrq | Algorithm::Srpdr | Algorithm::Srpdrq) {
            cfg.schedule = RelaxationSchedule::full(o.rho)?;
        }
        let engine = Engine::build((*p).inner.clone(), &cfg)?;
        let state = engine.initial();
        let steps_per_epoch = engine.steps_per_epoch(alg) as u64;
        store(out, DrSolver { engine, state, algorithm: alg, rng: ChaCha8Rng::seed_from_u64(o.seed), k: 0, steps_per_epoch });
        Ok(())
    })
}

/// Performs `steps` iterations.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_solver_step(s: *mut DrSolver, steps: u64) -> DrStatus {
    guard(|| {
        non_null(s, "solver")?;
        let s = &mut *s;
        for _ in 0..steps {
            s.engine.step(s.algorithm, &mut s.state, s.k as usize, &mut s.rng)?;
            s.k += 1;
        }
        Ok(())
    })
}

/// Performs `epochs` epochs (one iteration each for deterministic
/// algorithms, about `n` for the stochastic ones).
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_solver_run_epochs(s: *mut DrSolver, epochs: u64) -> DrStatus {
    if s.is_null() {
        set_error("`solver` is null");
        return DrStatus::NullPointer;
    }
    let steps = epochs.saturating_mul((*s).steps_per_epoch);
    dr_solver_step(s, steps)
}

/// Number of iterations performed so far (0 for null).
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_solver_iterations(s: *const DrSolver) -> u64 {
    if s.is_null() {
        0
    } else {
        (*s).k
    }
}

/// Copies the current transitional pair (the solution estimate).
///
/// # Safety
/// `s` must be a live handle; `x_out`/`y_out` valid for `x_len`/`y_len`
/// writes.
#[no_mangle]
pub unsafe extern "C" fn dr_solver_solution(s: *const DrSolver, x_out: *mut f64, x_len: usize, y_out: *mut f64, y_len: usize) -> DrStatus {
    guard(|| {
        non_null(s, "solver")?;
        let (x, y) = transitional(&(*s).state);
        copy_out(x, x_out, x_len, "x_out")?;
        copy_out(y, y_out, y_len, "y_out")
    })
}

/// Releases a solver; null is ignored.
///
/// # Safety
/// `s` must be null or a handle from [`dr_solver_new`] that was not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn dr_solver_free(s: *mut DrSolver) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Runs an experiment configuration file, writing below `output_root`.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn dr_run_experiment(config_path: *const c_char, output_root: *const c_char) -> DrStatus {
    guard(|| {
        let cfg = load_config(Path::new(c_str(config_path, "config_path")?))?;
        run_experiment(&cfg, Path::new(c_str(output_root, "output_root")?))?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        unsafe { dr_last_error(buf.as_mut_ptr(), buf.len()) };
        unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn codes_are_range_checked() {
        assert!(algorithm(-1).is_err());
        assert!(algorithm(10).is_err());
        assert_eq!(algorithm(DrAlgorithm::Srpdrq as i32).ok(), Some(Algorithm::Srpdrq));
        assert_eq!(algorithm(DrAlgorithm::Spdhg as i32).ok(), Some(Algorithm::Spdhg));
        assert!(precond(3).is_err());
        assert_eq!(precond(DrPrecond::SgsRedBlack as i32).ok(), Some(PrecondKind::SgsRedBlack));
    }

    #[test]
    fn panics_become_status_codes() {
        let code = guard(|| panic!("boom"));
        assert_eq!(code, DrStatus::Panic);
        assert_eq!(last_error(), "panic: boom");
        assert_eq!(guard(|| Ok(())), DrStatus::Ok);
        assert_eq!(last_error(), "");
    }

    #[test]
    fn error_message_truncates_and_reports_size() {
        set_error("abcdef");
        let mut buf = [0 as c_char; 4];
        let need = unsafe { dr_last_error(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(need, 7);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "abc");
        assert_eq!(unsafe { dr_last_error(ptr::null_mut(), 0) }, 7);
    }

    #[test]
    fn core_errors_map_to_codes() {
        assert_eq!(status_of(&Error::Parse { line: 1, msg: String::new() }), DrStatus::Parse);
        assert_eq!(status_of(&Error::Config { path: String::new(), msg: String::new() }), DrStatus::Config);
        assert_eq!(status_of(&Error::InvalidArgument(String::new())), DrStatus::InvalidArgument);
        assert_eq!(status_of(&Error::Certificate(String::new())), DrStatus::Runtime);
    }
}
