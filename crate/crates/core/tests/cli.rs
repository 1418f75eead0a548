//! The `drsplit` binary: subcommands, output root and exit codes.

use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[problem]
family = "tiny_qp"

[solver]
algorithm = "rpdr"
sigma = 1.0
tau = 1.0
rho = 1.9
epochs = 100

[output]
dir = "tiny"
"#;

fn drsplit(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drsplit")).args(args).env("DRSPLIT_OUT", root).output().expect("spawn drsplit")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_below_output_root() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(root.path(), "tiny.toml", TINY);
    let o = drsplit(root.path(), &["run", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["trace_seed5.csv", "trace_mean.csv", "manifest.json", "plot_bregman.svg"] {
        assert!(root.path().join("tiny").join(f).exists(), "{f}");
    }
    assert!(stdout(&o).contains("1 seed(s)"));
}

#[test]
fn config_errors_exit_1() {
    let root = tempfile::tempdir().unwrap();
    let bad = write(root.path(), "bad.toml", &TINY.replace("rho = 1.9", "rho = 1.9\nrhoo = 1.0"));
    let o = drsplit(root.path(), &["run", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rhoo"), "{}", stderr(&o));

    let o = drsplit(root.path(), &["run", &root.path().join("missing.toml").to_string_lossy()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let o = drsplit(root.path(), &["plot", "x.csv", "--kind", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_2() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(
        root.path(),
        "cls.toml",
        "[problem]\nfamily = \"classification\"\ndata = \"absent.libsvm\"\n\n[solver]\nalgorithm = \"pdr\"\nsigma = 1.0\ntau = 1.0\n",
    );
    let o = drsplit(root.path(), &["run", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn check_passes_on_tiny_and_fails_with_exit_3() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(root.path(), "tiny.toml", TINY);
    let o = drsplit(root.path(), &["check", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")), "{}", stdout(&o));

    // PDHG step sizes violating sigma tau ||K||^2 < 1
    let pdhg = write(root.path(), "pdhg.toml", "[problem]\nfamily = \"tiny_qp\"\n\n[solver]\nalgorithm = \"pdhg\"\nsigma = 1.0\ntau = 1.0\n");
    let o = drsplit(root.path(), &["check", &pdhg]);
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("FAIL step sizes"));
}

#[test]
fn ref_compare_and_plot() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(root.path(), "tiny.toml", TINY);
    let o = drsplit(root.path(), &["ref", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("Oracle"), "{}", stdout(&o));

    let pdr = write(root.path(), "pdr.toml", &TINY.replace("\"rpdr\"", "\"pdr\"").replace("rho = 1.9\n", ""));
    let o = drsplit(root.path(), &["compare", &cfg, &pdr, "--out", "cmp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(root.path().join("cmp/compare.csv").exists());
    assert!(root.path().join("cmp/summary.csv").exists());

    let cls = write(
        root.path(),
        "cls.toml",
        "[problem]\nfamily = \"classification\"\nn = 10\nd = 4\n\n[solver]\nalgorithm = \"pdr\"\nsigma = 1.0\ntau = 1.0\nepochs = 5\n",
    );
    let o = drsplit(root.path(), &["compare", &cfg, &cls]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let o = drsplit(root.path(), &["run", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let trace = root.path().join("tiny/trace_seed5.csv");
    let o = drsplit(root.path(), &["plot", &trace.to_string_lossy(), "--kind", "gap", "--out", "gap.svg"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(std::fs::read_to_string(root.path().join("gap.svg")).unwrap().contains("<polyline"));
}
