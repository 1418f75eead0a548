//! The exported functions, called as a C client would.

use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use dr_splitting_ffi::*;

fn last_error() -> String {
    let need = unsafe { dr_last_error(ptr::null_mut(), 0) };
    let mut buf = vec![0 as c_char; need];
    unsafe { dr_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn tiny() -> *mut DrProblem {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { dr_problem_tiny_qp(&mut p) }, DrStatus::Ok);
    p
}

fn dims(p: *const DrProblem) -> (usize, usize, usize) {
    let (mut a, mut b, mut c) = (0, 0, 0);
    assert_eq!(unsafe { dr_problem_dims(p, &mut a, &mut b, &mut c) }, DrStatus::Ok);
    (a, b, c)
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(dr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_handles_are_reported() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { dr_problem_tiny_qp(ptr::null_mut()) }, DrStatus::NullPointer);
    assert_eq!(unsafe { dr_solver_new(ptr::null(), ptr::null(), &mut out) }, DrStatus::NullPointer);
    assert!(last_error().contains("problem"), "{}", last_error());
    assert_eq!(unsafe { dr_solver_step(ptr::null_mut(), 1) }, DrStatus::NullPointer);
    assert_eq!(unsafe { dr_solver_run_epochs(ptr::null_mut(), 1) }, DrStatus::NullPointer);
    assert_eq!(unsafe { dr_solver_iterations(ptr::null()) }, 0);
    unsafe {
        dr_problem_free(ptr::null_mut());
        dr_solver_free(ptr::null_mut());
    }
}

#[test]
fn bad_codes_and_settings_are_invalid_arguments() {
    let p = tiny();
    let mut s = ptr::null_mut();
    let mut o = dr_solver_options_default(42);
    assert_eq!(unsafe { dr_solver_new(p, &o, &mut s) }, DrStatus::InvalidArgument);
    assert!(last_error().contains("algorithm"));
    o = dr_solver_options_default(DrAlgorithm::Pdr as i32);
    o.precond = 7;
    assert_eq!(unsafe { dr_solver_new(p, &o, &mut s) }, DrStatus::InvalidArgument);
    o.precond = DrPrecond::Richardson as i32;
    o.sigma = -1.0;
    assert_ne!(unsafe { dr_solver_new(p, &o, &mut s) }, DrStatus::Ok);
    o = dr_solver_options_default(DrAlgorithm::Rpdr as i32);
    o.rho = 2.5;
    assert_ne!(unsafe { dr_solver_new(p, &o, &mut s) }, DrStatus::Ok);
    assert!(s.is_null());
    let (nx, ny, _) = dims(p);
    let (mut x, mut y, mut v) = (vec![0.0; nx], vec![0.0; ny], 0.0);
    let st = unsafe { dr_problem_reference(p, 9, 1.0, 1.0, 0, 0.0, x.as_mut_ptr(), nx, y.as_mut_ptr(), ny, &mut v) };
    assert_eq!(st, DrStatus::InvalidArgument);
    assert_eq!(unsafe { dr_problem_primal_value(p, x.as_ptr(), nx + 1, &mut v) }, DrStatus::InvalidArgument);
    unsafe { dr_problem_free(p) };
}

#[test]
fn short_buffers_are_rejected() {
    let p = tiny();
    let (nx, ny, _) = dims(p);
    let mut s = ptr::null_mut();
    let o = dr_solver_options_default(DrAlgorithm::Pdr as i32);
    assert_eq!(unsafe { dr_solver_new(p, &o, &mut s) }, DrStatus::Ok);
    let (mut x, mut y) = (vec![0.0; nx], vec![0.0; ny]);
    let st = unsafe { dr_solver_solution(s, x.as_mut_ptr(), nx - 1, y.as_mut_ptr(), ny) };
    assert_eq!(st, DrStatus::BufferTooSmall);
    assert!(last_error().contains("x_out"));
    unsafe {
        dr_solver_free(s);
        dr_problem_free(p);
    }
}

#[test]
fn solvers_reach_the_tiny_reference() {
    let p = tiny();
    let (nx, ny, blocks) = dims(p);
    assert_eq!((nx, blocks), (3, 2));
    let (mut xs, mut ys, mut pstar) = (vec![0.0; nx], vec![0.0; ny], 0.0);
    let st = unsafe { dr_problem_reference(p, DrRefMethod::Oracle as i32, 1.0, 1.0, 0, 0.0, xs.as_mut_ptr(), nx, ys.as_mut_ptr(), ny, &mut pstar) };
    assert_eq!(st, DrStatus::Ok, "{}", last_error());
    for alg in [DrAlgorithm::Pdr, DrAlgorithm::Rpdr, DrAlgorithm::Srpdr, DrAlgorithm::Srpdrq] {
        let mut s = ptr::null_mut();
        let o = dr_solver_options_default(alg as i32);
        assert_eq!(unsafe { dr_solver_new(p, &o, &mut s) }, DrStatus::Ok, "{}", last_error());
        assert_eq!(unsafe { dr_solver_run_epochs(s, 3000) }, DrStatus::Ok);
        assert!(unsafe { dr_solver_iterations(s) } >= 3000);
        let (mut x, mut y, mut v) = (vec![0.0; nx], vec![0.0; ny], 0.0);
        assert_eq!(unsafe { dr_solver_solution(s, x.as_mut_ptr(), nx, y.as_mut_ptr(), ny) }, DrStatus::Ok);
        assert_eq!(unsafe { dr_problem_primal_value(p, x.as_ptr(), nx, &mut v) }, DrStatus::Ok);
        assert!((v - pstar).abs() < 1e-6, "{alg:?}: {v} vs {pstar}");
        unsafe { dr_solver_free(s) };
    }
    unsafe { dr_problem_free(p) };
}

#[test]
fn libsvm_files_load_and_report_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.libsvm");
    std::fs::write(&good, "+1 1:0.5 3:1\n-1 2:0.25\n+1 1:-1 2:2 3:0.5\n").unwrap();
    let bad = dir.path().join("bad.libsvm");
    std::fs::write(&bad, "+1 1:0.5\n-1 2:x\n").unwrap();
    let mut p = ptr::null_mut();
    let path = CString::new(good.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dr_problem_classification_libsvm(path.as_ptr(), 1e-2, &mut p) }, DrStatus::Ok, "{}", last_error());
    let (nx, _, blocks) = dims(p);
    assert_eq!((nx, blocks), (3, 3));
    unsafe { dr_problem_free(p) };

    let path = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dr_problem_classification_libsvm(path.as_ptr(), 1e-2, &mut p) }, DrStatus::Parse);
    assert!(last_error().contains('2'), "{}", last_error());
    let path = CString::new(dir.path().join("none").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dr_problem_classification_libsvm(path.as_ptr(), 1e-2, &mut p) }, DrStatus::Io);
}

#[test]
fn synthetic_problems_have_expected_shapes() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { dr_problem_classification_synth(12, 5, 0.8, 1e-3, 1, &mut p) }, DrStatus::Ok);
    assert_eq!(dims(p), (5, 12, 12));
    unsafe { dr_problem_free(p) };
    assert_eq!(unsafe { dr_problem_tgv_kl_synth(8, 8, 3, 0.0, 1e-4, 5e-5, &mut p) }, DrStatus::Ok, "{}", last_error());
    let (nx, _, blocks) = dims(p);
    assert_eq!((nx, blocks), (3 * 64, 6));
    unsafe { dr_problem_free(p) };
    assert_eq!(unsafe { dr_problem_tgv_kl_synth(8, 8, 0, 0.0, 1e-4, 5e-5, &mut p) }, DrStatus::InvalidArgument);
}

#[test]
fn experiments_run_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, "[problem]\nfamily = \"tiny_qp\"\n\n[solver]\nalgorithm = \"pdr\"\nsigma = 1.0\ntau = 1.0\nepochs = 20\n\n[output]\ndir = \"tiny\"\n")
        .unwrap();
    let c = CString::new(cfg.to_str().unwrap()).unwrap();
    let root = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dr_run_experiment(c.as_ptr(), root.as_ptr()) }, DrStatus::Ok, "{}", last_error());
    assert!(dir.path().join("tiny/manifest.json").exists());
    std::fs::write(&cfg, "[problem]\nfamily = \"tiny_qp\"\nbogus = 1\n").unwrap();
    assert_eq!(unsafe { dr_run_experiment(c.as_ptr(), root.as_ptr()) }, DrStatus::Config);
}

/// Builds the static library into its own target directory; integration
/// test builds only produce the rlib.
fn static_lib() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let target = exe.ancestors().nth(3).unwrap().join("ffi-smoke");
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let status = Command::new(cargo)
        .args(["build", "--offline", "-p", "dr-splitting-ffi", "--target-dir"])
        .arg(&target)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .status()
        .expect("spawn cargo");
    assert!(status.success());
    target.join("debug").join("libdr_splitting_ffi.a")
}

#[test]
fn c_client_compiles_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = static_lib();
    assert!(lib.exists(), "{} missing", lib.display());
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("spawn C compiler");
    assert!(status.success());
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "{}{}", String::from_utf8_lossy(&run.stdout), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("version"));
}
