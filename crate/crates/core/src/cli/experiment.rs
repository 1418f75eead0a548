//! Building instances, references and evaluators from a configuration, and
//! the `run`, `ref` and `compare` commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{ExperimentConfig, ProblemConfig};
use super::plot::{emit_plot, PlotKind, PlotScale};
use crate::error::{invalid, Error, Result};
use crate::io::{load_reference, read_image, save_reference, write_image, GrayImage, RefHeader};
use crate::metrics::{mean_trace, Evaluator, GapBox, PsnrTarget, ReferencePoint, RunTrace, CSV_COLUMNS};
use crate::problems::{
    blur_observation, build_classification, build_tgv_kl, motion_blur_kernel, parse_libsvm, reference_solution, synth_classification, synth_deblur, tiny_qp,
    DeblurSpec, PoissonNoise, RefOptions, TinyQp,
};
use crate::solvers::{run_with_state, transitional, SaddleProblem};

/// A problem built from a configuration.
pub struct Instance {
    pub problem: Arc<SaddleProblem>,
    /// Ground-truth and blurred images (deblurring only).
    pub truth: Option<Vec<f64>>,
    pub observed: Option<Vec<f64>>,
    pub dims: Option<(usize, usize)>,
    /// Box half-widths of the dual TGV blocks, `(alpha1, alpha0)`.
    pub alphas: Option<(f64, f64)>,
    pub tiny: Option<TinyQp>,
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    match &cfg.problem {
        ProblemConfig::TgvKl(t) => {
            let kernel = motion_blur_kernel(t.blur_length, t.blur_angle)?;
            let noise = t.noise_peak.map(|peak| PoissonNoise { peak, seed: t.noise_seed });
            let (truth, spec) = match &t.image {
                Some(p) => {
                    let img = read_image(&cfg.resolve(p))?;
                    let observed = blur_observation(img.height, img.width, &img.data, &kernel, noise)?;
                    let spec = DeblurSpec { d1: img.height, d2: img.width, kernel, observed, alpha0: t.alpha0, alpha1: t.alpha1 };
                    (img.data, spec)
                }
                None => {
                    let s = synth_deblur(t.d1, t.d2, t.pattern, kernel, t.alpha0, t.alpha1, noise)?;
                    (s.truth, s.spec)
                }
            };
            let problem = Arc::new(build_tgv_kl(&spec)?);
            Ok(Instance {
                problem,
                dims: Some((spec.d1, spec.d2)),
                observed: Some(spec.observed),
                truth: Some(truth),
                alphas: Some((t.alpha1, t.alpha0)),
                tiny: None,
            })
        }
        ProblemConfig::Classification(c) => {
            let spec = match &c.data {
                Some(p) => {
                    let text = std::fs::read_to_string(cfg.resolve(p))?;
                    parse_libsvm(&text, c.dim)?.to_spec(c.lambda)?
                }
                None => synth_classification(c.n, c.d, c.separability, c.lambda, c.seed)?,
            };
            Ok(Instance { problem: Arc::new(build_classification(&spec)?), truth: None, observed: None, dims: None, alphas: None, tiny: None })
        }
        ProblemConfig::TinyQp(_) => {
            let t = tiny_qp();
            Ok(Instance { problem: Arc::new(t.problem.clone()), truth: None, observed: None, dims: None, alphas: None, tiny: Some(t) })
        }
    }
}

pub fn ref_options(cfg: &ExperimentConfig) -> RefOptions {
    let r = &cfg.reference;
    RefOptions {
        sigma: r.sigma.unwrap_or(cfg.solver.sigma),
        tau: r.tau.unwrap_or(cfg.solver.tau),
        precond: r.precond.unwrap_or(cfg.solver.precond),
        rho: r.rho,
        budget: r.budget,
        tol: r.tol,
    }
}

fn ref_header(prob: &SaddleProblem, r: &ReferencePoint) -> RefHeader {
    RefHeader {
        problem: prob.name.clone(),
        primal_shapes: prob.primal.shapes().to_vec(),
        dual_shapes: prob.dual.shapes().to_vec(),
        provenance: r.provenance,
        certificate: r.certificate,
        primal_value: r.primal_value,
        x_len: r.x_star.len(),
        y_len: r.y_star.len(),
    }
}

/// Reference point and the cache file it was read from or written to.
pub struct ResolvedReference {
    pub point: ReferencePoint,
    pub file: Option<PathBuf>,
    pub cached: bool,
}

/// Computes the configured reference, reusing `<root>/refs/<key>.ref`
/// when caching is on.
pub fn resolve_reference(cfg: &ExperimentConfig, inst: &Instance, root: &Path) -> Result<Option<ResolvedReference>> {
    let Some(method) = cfg.ref_method() else {
        return Ok(None);
    };
    let file = cfg.reference.cache.then(|| root.join("refs").join(format!("{}.ref", cfg.reference_key())));
    if let Some(f) = file.as_ref().filter(|f| f.exists()) {
        match load_reference(f) {
            Ok((h, point)) if h == ref_header(&inst.problem, &point) => {
                log::info!("reference loaded from {}", f.display());
                return Ok(Some(ResolvedReference { point, file, cached: true }));
            }
            _ => log::warn!("ignoring stale reference cache {}", f.display()),
        }
    }
    let t0 = Instant::now();
    let point = match &inst.tiny {
        Some(t) => t.reference()?,
        None => reference_solution(&inst.problem, method, &ref_options(cfg))?,
    };
    log::info!("reference computed in {:.1} s, certificate {:.3e}", t0.elapsed().as_secs_f64(), point.certificate);
    if let Some(f) = &file {
        std::fs::create_dir_all(f.parent().expect("refs dir"))?;
        let tmp = f.with_extension("ref.tmp");
        save_reference(&tmp, &ref_header(&inst.problem, &point), &point)?;
        std::fs::rename(&tmp, f)?;
    }
    Ok(Some(ResolvedReference { point, file, cached: false }))
}

/// Gap box: from the configured radius, or `2 ||z*||_inf` (at least 1).
/// Deblurring intersects it with the domains of `F` and `G*` so that the
/// box meets every term's domain.
pub fn gap_box(cfg: &ExperimentConfig, inst: &Instance, reference: Option<&ReferencePoint>) -> GapBox {
    let prob = &inst.problem;
    let r = cfg.metrics.box_radius.unwrap_or_else(|| match reference {
        Some(p) => (2.0 * p.x_star.iter().chain(&p.y_star).fold(0.0f64, |a, v| a.max(v.abs()))).max(1.0),
        None => 1.0,
    });
    let mut b = GapBox::uniform(prob, r);
    if let Some((a1, a0)) = inst.alphas {
        b.primal[0] = (0.0, 1.0);
        b.dual[0] = (-r, 1.0 - 1e-6);
        b.dual[1] = (-a1, a1);
        b.dual[2] = (-a1, a1);
        for i in 3..b.dual.len() {
            b.dual[i] = (-a0, a0);
        }
    }
    b
}

pub fn normalization(cfg: &ExperimentConfig, inst: &Instance) -> Option<f64> {
    let default = inst.dims.is_some();
    if cfg.metrics.normalize.unwrap_or(default) {
        inst.dims.map(|(a, b)| (a * b) as f64)
    } else {
        None
    }
}

pub fn evaluator(cfg: &ExperimentConfig, inst: &Instance, reference: Option<&ReferencePoint>) -> Evaluator {
    Evaluator {
        reference: reference.cloned(),
        gap_box: cfg.metrics.gap.then(|| gap_box(cfg, inst, reference)),
        psnr_target: inst.truth.as_ref().map(|t| PsnrTarget { image: t.clone(), block: 0 }),
        normalization: normalization(cfg, inst),
    }
}

/// Output root: `$DRSPLIT_OUT`, else the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os("DRSPLIT_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes(t: &RunTrace) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    t.write_csv(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub trace: Option<String>,
    pub restored: Option<String>,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

/// What a run produced.
#[derive(Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub traces: Vec<RunTrace>,
    pub mean: Option<RunTrace>,
    pub manifest: PathBuf,
    pub partial: bool,
}

fn image(inst: &Instance, data: &[f64]) -> Result<GrayImage> {
    let (h, w) = inst.dims.ok_or_else(|| invalid("not an image problem"))?;
    GrayImage::new(h, w, data.to_vec())
}

/// Runs every seed of `cfg` and writes traces, plots, images and the
/// manifest under `root/<output.dir>`. Seeds that fail are recorded and the
/// manifest is flagged partial; the first failure is returned.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<RunSummary> {
    let inst = build_instance(cfg)?;
    let reference = resolve_reference(cfg, &inst, root)?;
    let eval = evaluator(cfg, &inst, reference.as_ref().map(|r| &r.point));
    let dir = root.join(&cfg.output.dir);
    std::fs::create_dir_all(&dir)?;
    let label = cfg.label();

    let results: Vec<Result<(RunTrace, Option<Vec<f64>>)>> = cfg
        .solver
        .seeds
        .par_iter()
        .map(|&seed| {
            let sc = cfg.solver_config(seed)?;
            let (mut trace, st) = run_with_state(&inst.problem, &sc, &eval)?;
            trace.label = label.clone();
            let restored = inst.dims.map(|_| transitional(&st).0[inst.problem.primal.range(0)].to_vec());
            let name = format!("trace_seed{seed}.csv");
            write_atomic(&dir.join(&name), &csv_bytes(&trace)?)?;
            Ok((trace, restored))
        })
        .collect();

    let mut outcomes = Vec::new();
    let mut traces = Vec::new();
    let mut first_err = None;
    for (&seed, res) in cfg.solver.seeds.iter().zip(results) {
        match res {
            Ok((trace, restored)) => {
                let mut out =
                    SeedOutcome { seed, trace: Some(format!("trace_seed{seed}.csv")), restored: None, wall_ms: trace.last().map(|r| r.wall_ms), error: None };
                if let (Some(u), true) = (restored, cfg.output.images) {
                    let name = format!("restored_seed{seed}.png");
                    write_image(&dir.join(&name), &image(&inst, &u)?)?;
                    out.restored = Some(name);
                }
                outcomes.push(out);
                traces.push(trace);
            }
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                outcomes.push(SeedOutcome { seed, trace: None, restored: None, wall_ms: None, error: Some(e.to_string()) });
                first_err.get_or_insert(e);
            }
        }
    }
    let partial = first_err.is_some();

    let mean = if traces.is_empty() { None } else { Some(mean_trace(&traces, label.clone())?) };
    if let Some(m) = &mean {
        write_atomic(&dir.join("trace_mean.csv"), &csv_bytes(m)?)?;
    }
    let mut plots = Vec::new();
    if cfg.output.plots {
        if let Some(m) = &mean {
            for kind in PlotKind::ALL {
                if let Ok(svg) = emit_plot(std::slice::from_ref(m), kind, cfg.output.scale) {
                    let name = format!("plot_{}.svg", kind.slug());
                    write_atomic(&dir.join(&name), svg.as_bytes())?;
                    plots.push(name);
                }
            }
        }
    }
    let mut images = BTreeMap::new();
    if cfg.output.images {
        for (name, data) in [("truth.png", &inst.truth), ("observed.png", &inst.observed)] {
            if let Some(d) = data {
                write_image(&dir.join(name), &image(&inst, d)?)?;
                images.insert(name.trim_end_matches(".png").to_string(), name.to_string());
            }
        }
    }

    let manifest = json!({
        "config_hash": cfg.hash(),
        "crate": env!("CARGO_PKG_NAME"),
        "crate_version": env!("CARGO_PKG_VERSION"),
        "label": label,
        "config": cfg,
        "problem": inst.problem.name,
        "csv_columns": CSV_COLUMNS,
        "reference": reference.as_ref().map(|r| json!({
            "provenance": r.point.provenance,
            "certificate": r.point.certificate,
            "primal_value": r.point.primal_value,
            "file": r.file.as_ref().map(|f| f.display().to_string()),
            "cached": r.cached,
            "options": ref_options(cfg),
        })),
        "gap_box": eval.gap_box,
        "normalization": eval.normalization,
        "runs": outcomes,
        "mean_trace": mean.as_ref().map(|_| "trace_mean.csv"),
        "plots": plots,
        "images": images,
        "partial": partial,
    });
    let manifest_path = dir.join("manifest.json");
    write_atomic(&manifest_path, &serde_json::to_vec_pretty(&manifest)?)?;
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(RunSummary { dir, traces, mean, manifest: manifest_path, partial })
}

/// Builds (or loads) and caches the reference of `cfg`.
pub fn build_reference(cfg: &ExperimentConfig, root: &Path) -> Result<ResolvedReference> {
    let inst = build_instance(cfg)?;
    resolve_reference(cfg, &inst, root)?.ok_or_else(|| Error::Config { path: "reference.method".into(), msg: "no reference configured".into() })
}

const COMPARE_METRICS: [&str; 6] = ["bregman", "gap", "primal", "primal_err_rel", "psnr", "mp_dist"];

/// Runs every configuration on their shared problem and writes
/// `compare.csv`, `summary.csv` and one plot per metric into `out`.
pub fn compare(configs: &[ExperimentConfig], out: &Path, root: &Path) -> Result<Vec<RunTrace>> {
    let first = configs.first().ok_or_else(|| invalid("nothing to compare"))?;
    if let Some(c) = configs.iter().find(|c| c.problem != first.problem) {
        return Err(Error::Config { path: "problem".into(), msg: format!("`{}` configures a different problem", c.label()) });
    }
    let inst = build_instance(first)?;
    let reference = resolve_reference(first, &inst, root)?;
    let eval = evaluator(first, &inst, reference.as_ref().map(|r| &r.point));

    let mut labels: Vec<String> = Vec::new();
    for c in configs {
        let base = c.label();
        let mut l = base.clone();
        let mut j = 2;
        while labels.contains(&l) {
            l = format!("{base}_{j}");
            j += 1;
        }
        labels.push(l);
    }
    let mut means = Vec::with_capacity(configs.len());
    for (c, label) in configs.iter().zip(&labels) {
        let traces: Vec<RunTrace> =
            c.solver.seeds.par_iter().map(|&seed| Ok(run_with_state(&inst.problem, &c.solver_config(seed)?, &eval)?.0)).collect::<Result<_>>()?;
        means.push(mean_trace(&traces, label.clone())?);
    }
    std::fs::create_dir_all(out)?;
    write_atomic(&out.join("compare.csv"), &aligned_csv(&means)?)?;
    write_atomic(&out.join("summary.csv"), &summary_csv(configs, &means)?)?;
    for kind in PlotKind::ALL {
        if let Ok(svg) = emit_plot(&means, kind, first.output.scale) {
            write_atomic(&out.join(format!("plot_{}.svg", kind.slug())), svg.as_bytes())?;
        }
    }
    Ok(means)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Union of checkpoint epochs, one `<label>:<metric>` column per trace and
/// metric, empty where a trace has no record.
fn aligned_csv(traces: &[RunTrace]) -> Result<Vec<u8>> {
    let mut epochs: Vec<f64> = traces.iter().flat_map(|t| t.records.iter().map(|r| r.epoch)).collect();
    epochs.sort_by(f64::total_cmp);
    epochs.dedup();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["epoch".to_string()];
    for t in traces {
        head.extend(COMPARE_METRICS.iter().map(|m| format!("{}:{m}", t.label)));
    }
    w.write_record(&head).map_err(|e| invalid(e.to_string()))?;
    for e in epochs {
        let mut row = vec![e.to_string()];
        for t in traces {
            let rec = t.records.iter().find(|r| r.epoch == e);
            row.extend(COMPARE_METRICS.iter().map(|m| fmt_opt(rec.and_then(|r| r.metric(m)))));
        }
        w.write_record(&row).map_err(|e| invalid(e.to_string()))?;
    }
    w.into_inner().map_err(|e| invalid(e.to_string()))
}

fn summary_csv(configs: &[ExperimentConfig], traces: &[RunTrace]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["label", "algorithm", "seeds", "epoch"];
    head.extend(COMPARE_METRICS);
    w.write_record(&head).map_err(|e| invalid(e.to_string()))?;
    for (c, t) in configs.iter().zip(traces) {
        let last = t.last();
        let mut row = vec![t.label.clone(), c.solver.algorithm.name().to_string(), c.solver.seeds.len().to_string(), fmt_opt(last.map(|r| r.epoch))];
        row.extend(COMPARE_METRICS.iter().map(|m| fmt_opt(last.and_then(|r| r.metric(m)))));
        w.write_record(&row).map_err(|e| invalid(e.to_string()))?;
    }
    w.into_inner().map_err(|e| invalid(e.to_string()))
}

/// Reads trace CSVs and writes one SVG.
pub fn plot_files(traces: &[PathBuf], kind: PlotKind, scale: PlotScale, out: &Path) -> Result<()> {
    let mut ts = Vec::new();
    for p in traces {
        let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        ts.push(RunTrace::read_csv(std::fs::File::open(p)?, label, 0)?);
    }
    let svg = emit_plot(&ts, kind, scale)?;
    write_atomic(out, svg.as_bytes())
}
