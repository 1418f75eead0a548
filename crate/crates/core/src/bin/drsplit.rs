use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dr_splitting::cli::{self, load_config, output_root, PlotKind, PlotScale, EXIT_CHECK, EXIT_OK};
use dr_splitting::Result;

/// Preconditioned Douglas-Rachford experiments.
///
/// Outputs go below `$DRSPLIT_OUT` (default: the working directory).
#[derive(Parser)]
#[command(name = "drsplit", version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every seed of a configuration.
    Run { config: PathBuf },
    /// Run several configurations on one problem and tabulate them.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Output directory, relative to the output root.
        #[arg(long, default_value = "compare")]
        out: PathBuf,
    },
    /// Build and cache the reference solution.
    Ref { config: PathBuf },
    /// Run the invariant checks on the configured problem.
    Check { config: PathBuf },
    /// Plot trace CSV files.
    Plot {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, default_value = "gap")]
        kind: String,
        #[arg(long, default_value = "loglog")]
        scale: String,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
    },
}

fn execute(cmd: Cmd) -> Result<i32> {
    let root = output_root();
    match cmd {
        Cmd::Run { config } => {
            let cfg = load_config(&config)?;
            let s = cli::run_experiment(&cfg, &root)?;
            println!("{} seed(s) written to {}", s.traces.len(), s.dir.display());
            if let Some(r) = s.mean.as_ref().and_then(|m| m.last()) {
                println!("final epoch {}: bregman {:?} gap {:?} primal {:?} psnr {:?}", r.epoch, r.bregman, r.gap, r.primal, r.psnr);
            }
        }
        Cmd::Compare { configs, out } => {
            let cfgs = configs.iter().map(|p| load_config(p)).collect::<Result<Vec<_>>>()?;
            let out = root.join(out);
            let means = cli::compare(&cfgs, &out, &root)?;
            println!("compared {} configurations in {}", means.len(), out.display());
        }
        Cmd::Ref { config } => {
            let cfg = load_config(&config)?;
            let r = cli::build_reference(&cfg, &root)?;
            println!(
                "{:?} reference: certificate {:.3e}, primal value {:.12e}{}",
                r.point.provenance,
                r.point.certificate,
                r.point.primal_value,
                r.file.map(|f| format!(", stored in {}", f.display())).unwrap_or_default()
            );
        }
        Cmd::Check { config } => {
            let cfg = load_config(&config)?;
            let rep = cli::check(&cfg, &root)?;
            for i in &rep.items {
                println!("{} {}: {}", if i.pass { "PASS" } else { "FAIL" }, i.name, i.detail);
            }
            if !rep.all_pass() {
                return Ok(EXIT_CHECK);
            }
        }
        Cmd::Plot { traces, kind, scale, out } => {
            let kind =
                PlotKind::parse(&kind).ok_or_else(|| dr_splitting::Error::Config { path: "--kind".into(), msg: format!("unknown plot kind `{kind}`") })?;
            let scale = match scale.as_str() {
                "loglog" => PlotScale::Loglog,
                "semilog" => PlotScale::Semilog,
                s => return Err(dr_splitting::Error::Config { path: "--scale".into(), msg: format!("unknown scale `{s}`") }),
            };
            cli::experiment::plot_files(&traces, kind, scale, &root.join(out))?;
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match execute(args.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
