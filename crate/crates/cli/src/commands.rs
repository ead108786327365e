use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use dagrid::circular::{
    circular_accumulate, detect_circle_center, sobel_gradient_field, CircularConfig,
};
use dagrid::io::{read_dgt, read_pgm, synth, write_dgt, write_pgm, Phantom, SynthSpec};
use dagrid::{polar_roundtrip_filter, polar_sample, GridFilter, KernelKind, PolarConfig, Tensor};
use serde::Serialize;

use crate::bench::{run_bench, BenchRow};
use crate::suites::{adjoint_suite, gradcheck_suite, AdjointReport, GradOp, GradcheckSummary};
use crate::{
    AdjointArgs, BenchArgs, CircleDetectArgs, CliError, Command, Failure, GradcheckArgs,
    PhantomKind, PolarArgs, PolarPipelineArgs, PolarSampleArgs, SynthArgs,
};

type Outcome = Result<String, Failure>;

pub(crate) fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::PolarRoundtrip(a) => polar_pipeline("polar-roundtrip", a, GridFilter::None),
        Command::PolarFilter(a) => polar_pipeline("polar-filter", a, GridFilter::Box(1)),
        Command::PolarSample(a) => polar_sample_cmd(a),
        Command::CircleDetect(a) => circle_detect(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::AdjointSuite(a) => adjoint(a),
        Command::Bench(a) => bench(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

/// Serializes `report`, copies it to `metrics_out` and turns a failed check
/// into an error that still carries the line.
fn emit<T: Serialize>(report: &T, passed: bool, metrics_out: Option<&Path>, what: &str) -> Outcome {
    let line = serde_json::to_string(report).expect("reports serialize");
    if let Some(path) = metrics_out {
        fs::write(path, format!("{line}\n")).map_err(|source| dagrid::Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    if passed {
        Ok(line)
    } else {
        Err(Failure {
            error: CliError::ChecksFailed(format!("{what} failed")),
            line: Some(line),
        })
    }
}

enum Format {
    Pgm,
    Dgt,
}

fn format_of(path: &Path) -> Result<Format, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pgm") => Ok(Format::Pgm),
        Some(e) if e.eq_ignore_ascii_case("dgt") => Ok(Format::Dgt),
        _ => Err(CliError::Usage(format!(
            "{}: expected a .pgm or .dgt path",
            path.display()
        ))),
    }
}

fn load(path: &Path) -> Result<Tensor, CliError> {
    Ok(match format_of(path)? {
        Format::Pgm => read_pgm(path)?,
        Format::Dgt => read_dgt(path)?,
    })
}

/// PGM output is clamped to `[0, 1]` unless `stretch` maps the value range.
fn save(t: &Tensor, path: &Path, stretch: bool) -> Result<(), CliError> {
    match format_of(path)? {
        Format::Pgm => write_pgm(t, path, stretch)?,
        Format::Dgt => write_dgt(t, path)?,
    }
    Ok(())
}

fn display(path: &Option<PathBuf>) -> Option<String> {
    path.as_ref().map(|p| p.display().to_string())
}

/// Checks the polar flags on their own, before any input is read.
fn check_polar_flags(p: &PolarArgs) -> Result<(), CliError> {
    let s_theta = p.stheta.unwrap_or(2.0 * PI / p.wpsi.max(1) as f64);
    PolarConfig::new(
        p.sr.unwrap_or(1.0),
        s_theta,
        p.hr,
        p.wpsi,
        (p.xc.unwrap_or(0.0), p.yc.unwrap_or(0.0)),
        p.wrap,
    )
    .map(drop)
    .map_err(CliError::usage)
}

fn polar_config(p: &PolarArgs, h: usize, w: usize) -> Result<PolarConfig, CliError> {
    let mut cfg = PolarConfig::for_image(h, w, p.hr, p.wpsi).map_err(CliError::usage)?;
    if let Some(sr) = p.sr {
        cfg.s_r = sr;
    }
    if let Some(st) = p.stheta {
        cfg.s_theta = st;
    }
    cfg.center = (p.xc.unwrap_or(cfg.center.0), p.yc.unwrap_or(cfg.center.1));
    cfg.angular_wrap = p.wrap;
    cfg.validate().map_err(CliError::usage)?;
    Ok(cfg)
}

#[derive(Serialize)]
struct PolarGeometry {
    h_r: usize,
    w_psi: usize,
    s_r: f64,
    s_theta: f64,
    center: [f64; 2],
    wrap: bool,
    kernel: String,
}

impl PolarGeometry {
    fn new(cfg: &PolarConfig, kind: KernelKind) -> Self {
        Self {
            h_r: cfg.h_r,
            w_psi: cfg.w_psi,
            s_r: cfg.s_r,
            s_theta: cfg.s_theta,
            center: [cfg.center.0, cfg.center.1],
            wrap: cfg.angular_wrap,
            kernel: kind.to_string(),
        }
    }
}

#[derive(Serialize)]
struct PolarPipelineReport {
    command: &'static str,
    input: String,
    shape: [usize; 3],
    #[serde(flatten)]
    geometry: PolarGeometry,
    filter: String,
    mse: f64,
    psnr: Option<f64>,
    /// Restricted to pixels within the outermost radial bin.
    mse_covered: f64,
    psnr_covered: Option<f64>,
    covered_pixels: usize,
    out: Option<String>,
}

/// PSNR for a peak of 1; undefined for a perfect reconstruction.
fn psnr(mse: f64) -> Option<f64> {
    (mse > 0.0).then(|| -10.0 * mse.log10())
}

fn polar_pipeline(
    command: &'static str,
    a: PolarPipelineArgs,
    default_filter: GridFilter,
) -> Outcome {
    check_polar_flags(&a.polar)?;
    if let Some(out) = &a.out {
        format_of(out)?;
    }
    let u = load(&a.input)?;
    let (c, h, w) = u.shape();
    let cfg = polar_config(&a.polar, h, w)?;
    let filter = a.filter.unwrap_or(default_filter);
    let restored = polar_roundtrip_filter(&u, &cfg, a.polar.kernel, filter)?;

    let (mut total, mut covered, mut count) = (0.0, 0.0, 0usize);
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                let d = (restored.get(ch, i, j) - u.get(ch, i, j)).powi(2);
                total += d;
                if cfg.covers(i, j) {
                    covered += d;
                    count += 1;
                }
            }
        }
    }
    let mse = total / u.len() as f64;
    let mse_covered = if count > 0 {
        covered / count as f64
    } else {
        0.0
    };
    if let Some(out) = &a.out {
        save(&restored, out, false)?;
    }
    let report = PolarPipelineReport {
        command,
        input: a.input.display().to_string(),
        shape: [c, h, w],
        geometry: PolarGeometry::new(&cfg, a.polar.kernel),
        filter: filter.to_string(),
        mse,
        psnr: psnr(mse),
        mse_covered,
        psnr_covered: psnr(mse_covered),
        covered_pixels: count / c,
        out: display(&a.out),
    };
    emit(&report, true, a.metrics_out.as_deref(), command)
}

#[derive(Serialize)]
struct PolarSampleReport {
    command: &'static str,
    input: String,
    shape: [usize; 3],
    #[serde(flatten)]
    geometry: PolarGeometry,
    min: f64,
    max: f64,
    mean: f64,
    out: Option<String>,
}

fn polar_sample_cmd(a: PolarSampleArgs) -> Outcome {
    check_polar_flags(&a.polar)?;
    if let Some(out) = &a.out {
        format_of(out)?;
    }
    let u = load(&a.input)?;
    let cfg = polar_config(&a.polar, u.height(), u.width())?;
    let p = polar_sample(&u, &cfg, a.polar.kernel);
    if let Some(out) = &a.out {
        save(&p, out, true)?;
    }
    let data = p.as_slice();
    let report = PolarSampleReport {
        command: "polar-sample",
        input: a.input.display().to_string(),
        shape: [p.channels(), p.height(), p.width()],
        geometry: PolarGeometry::new(&cfg, a.polar.kernel),
        min: data.iter().copied().fold(f64::INFINITY, f64::min),
        max: data.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: p.mean(),
        out: display(&a.out),
    };
    emit(&report, true, a.metrics_out.as_deref(), "polar-sample")
}

#[derive(Serialize)]
struct CircleReport {
    command: &'static str,
    source: String,
    shape: [usize; 2],
    radii: Vec<usize>,
    symmetric: bool,
    reversed: bool,
    kernel: String,
    band: Option<usize>,
    center: [usize; 2],
    score: f64,
    /// Phantom center, when the image is synthetic.
    truth: Option<[f64; 2]>,
    error_px: Option<f64>,
}

fn circle_detect(a: CircleDetectArgs) -> Outcome {
    let cfg = CircularConfig::from_radii(&a.radii).map_err(CliError::usage)?;
    if !(a.epsilon > 0.0 && a.epsilon.is_finite()) {
        return Err(CliError::Usage(format!("--epsilon must be > 0, got {}", a.epsilon)).into());
    }
    if let Some(b) = a.band {
        if b >= cfg.bands.len() {
            return Err(CliError::Usage(format!(
                "--band {b} out of range for {} bands",
                cfg.bands.len()
            ))
            .into());
        }
    }
    let mut cfg = cfg
        .symmetric(a.symmetric)
        .reversed(a.reversed)
        .kernel(a.kernel);
    cfg.epsilon = a.epsilon;

    let (u, source, truth) = match (&a.input, a.ring, a.disk) {
        (Some(path), _, _) => (load(path)?, path.display().to_string(), None),
        (None, ring, disk) => {
            let (phantom, name) = match (ring, disk) {
                (Some(radius), _) => (
                    Phantom::Ring {
                        radius,
                        thickness: a.thickness,
                    },
                    "ring",
                ),
                (None, Some(radius)) => (Phantom::Disk { radius }, "disk"),
                (None, None) => unreachable!("clap requires a source"),
            };
            let spec = SynthSpec::new(phantom, a.size, a.size).noise(a.noise, a.seed);
            let (ti, tj) = spec.resolved_center();
            (
                synth(&spec).map_err(CliError::usage)?,
                name.to_string(),
                Some([ti, tj]),
            )
        }
    };
    let field = sobel_gradient_field(&u, cfg.epsilon).map_err(CliError::usage)?;
    let acc = circular_accumulate(&u, &field, &cfg)?;
    let (row, col, score) = detect_circle_center(&acc, a.band)?;
    let report = CircleReport {
        command: "circle-detect",
        source,
        shape: [u.height(), u.width()],
        radii: a.radii.clone(),
        symmetric: a.symmetric,
        reversed: a.reversed,
        kernel: a.kernel.to_string(),
        band: a.band,
        center: [row, col],
        score,
        truth,
        error_px: truth.map(|[ti, tj]| (row as f64 - ti).hypot(col as f64 - tj)),
    };
    emit(&report, true, a.metrics_out.as_deref(), "circle-detect")
}

#[derive(Serialize)]
struct GradcheckReport {
    command: &'static str,
    kernel: String,
    trials: usize,
    tol: f64,
    seed: u64,
    passed: bool,
    ops: Vec<GradcheckSummary>,
    /// Ops that have no gradient under the chosen kernel.
    skipped: Vec<String>,
}

fn gradcheck(a: GradcheckArgs) -> Outcome {
    let ops: Vec<GradOp> = if a.op == "all" {
        GradOp::ALL.to_vec()
    } else {
        vec![a.op.parse().map_err(CliError::Usage)?]
    };
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be >= 1".into()).into());
    }
    if !(a.tol > 0.0 && a.tol.is_finite()) {
        return Err(CliError::Usage(format!("--tol must be > 0, got {}", a.tol)).into());
    }
    let grid_needs_bilinear = a.kernel != KernelKind::Bilinear;
    if grid_needs_bilinear && ops == [GradOp::AccumulateGrid] {
        return Err(CliError::Usage("accumulate-grid needs --kernel bilinear".into()).into());
    }
    let mut summaries = Vec::new();
    let mut skipped = Vec::new();
    for (idx, op) in ops.into_iter().enumerate() {
        if grid_needs_bilinear && op == GradOp::AccumulateGrid {
            skipped.push(op.name().to_string());
            continue;
        }
        let seed = a.seed.wrapping_add(idx as u64);
        summaries.push(gradcheck_suite(op, a.kernel, a.trials, seed, a.tol)?);
    }
    let passed = summaries.iter().all(|s| s.passed);
    let report = GradcheckReport {
        command: "gradcheck",
        kernel: a.kernel.to_string(),
        trials: a.trials,
        tol: a.tol,
        seed: a.seed,
        passed,
        ops: summaries,
        skipped,
    };
    emit(&report, passed, a.metrics_out.as_deref(), "gradient check")
}

#[derive(Serialize)]
struct AdjointCommandReport {
    command: &'static str,
    seed: u64,
    max_side: usize,
    #[serde(flatten)]
    report: AdjointReport,
}

fn adjoint(a: AdjointArgs) -> Outcome {
    if a.trials == 0 || a.max_side == 0 {
        return Err(CliError::Usage("--trials and --max-side must be >= 1".into()).into());
    }
    if !(a.tol > 0.0 && a.tol.is_finite()) {
        return Err(CliError::Usage(format!("--tol must be > 0, got {}", a.tol)).into());
    }
    let report = adjoint_suite(a.trials, a.seed, a.max_side, a.tol)?;
    let passed = report.passed;
    let full = AdjointCommandReport {
        command: "adjoint-suite",
        seed: a.seed,
        max_side: a.max_side,
        report,
    };
    emit(&full, passed, a.metrics_out.as_deref(), "adjoint suite")
}

#[derive(Serialize)]
struct Ratio {
    op: &'static str,
    size: usize,
    workers: usize,
    /// Wall time relative to the first worker count.
    ratio: f64,
}

#[derive(Serialize)]
struct BenchCommandReport {
    command: &'static str,
    seed: u64,
    reps: usize,
    available_parallelism: usize,
    deterministic: bool,
    rows: Vec<BenchRow>,
    ratios: Vec<Ratio>,
}

fn bench(a: BenchArgs) -> Outcome {
    if a.sizes.is_empty() || a.sizes.contains(&0) {
        return Err(CliError::Usage("--sizes must be a list of positive sides".into()).into());
    }
    if a.workers.is_empty() || a.workers.contains(&0) {
        return Err(CliError::Usage("--workers must be a list of positive counts".into()).into());
    }
    if a.reps == 0 {
        return Err(CliError::Usage("--reps must be >= 1".into()).into());
    }
    let report = run_bench(&a.sizes, &a.workers, a.reps, a.seed)?;
    let reference = a.workers[0];
    let ratios = report
        .rows
        .iter()
        .filter(|r| r.workers != reference)
        .filter_map(|r| {
            let base = report
                .rows
                .iter()
                .find(|b| b.op == r.op && b.size == r.size && b.workers == reference)?;
            Some(Ratio {
                op: r.op,
                size: r.size,
                workers: r.workers,
                ratio: r.seconds / base.seconds,
            })
        })
        .collect();
    let deterministic = report.deterministic;
    let full = BenchCommandReport {
        command: "bench",
        seed: a.seed,
        reps: a.reps,
        available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        deterministic,
        rows: report.rows,
        ratios,
    };
    emit(
        &full,
        deterministic,
        a.metrics_out.as_deref(),
        "checksum agreement across worker counts",
    )
}

#[derive(Serialize)]
struct SynthReport {
    command: &'static str,
    phantom: String,
    shape: [usize; 3],
    center: [f64; 2],
    noise: f64,
    seed: u64,
    min: f64,
    max: f64,
    out: String,
}

fn synth_cmd(a: SynthArgs) -> Outcome {
    format_of(&a.out)?;
    let (h, w) = (a.height.unwrap_or(a.size), a.width.unwrap_or(a.size));
    let phantom = match a.phantom {
        PhantomKind::Disk => Phantom::Disk { radius: a.radius },
        PhantomKind::Ring => Phantom::Ring {
            radius: a.radius,
            thickness: a.thickness,
        },
        PhantomKind::Checker => Phantom::Checker { cell: a.cell },
        PhantomKind::Blob => Phantom::SmoothBlob {
            sigmas: a.sigmas.clone(),
        },
    };
    let mut spec = SynthSpec::new(phantom, h, w).noise(a.noise, a.seed);
    if a.xc.is_some() || a.yc.is_some() {
        let (ci, cj) = spec.resolved_center();
        spec = spec.center(a.xc.unwrap_or(ci), a.yc.unwrap_or(cj));
    }
    let t = synth(&spec).map_err(CliError::usage)?;
    save(&t, &a.out, false)?;
    let (ci, cj) = spec.resolved_center();
    let data = t.as_slice();
    let report = SynthReport {
        command: "synth",
        phantom: format!("{:?}", a.phantom).to_lowercase(),
        shape: [t.channels(), t.height(), t.width()],
        center: [ci, cj],
        noise: a.noise,
        seed: a.seed,
        min: data.iter().copied().fold(f64::INFINITY, f64::min),
        max: data.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        out: a.out.display().to_string(),
    };
    emit(&report, true, None, "synth")
}
