use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use geocs::harness::{run_sweep, threads_from_env, ExperimentConfig, ImageSource};
use geocs::io::{
    normalize_for_display, read_mask, read_measurement, write_image, write_mask,
    write_measurement, BitDepth, MaskInfo,
};
use geocs::solver::{realize, Reconstructor};
use geocs::{
    add_noise, radial_mask, sample, GeocsError, IterationRecord, QualityReport, ShearletSystem,
};

#[derive(Parser)]
#[command(name = "geocs", version, about = "Two-stage compressive sensing reconstruction from radial partial Fourier data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a radial sampling mask and print its rate.
    Mask(MaskArgs),
    /// Sample an image through a mask, optionally adding noise.
    Simulate(SimulateArgs),
    /// Reconstruct an image from a measurement file.
    Reconstruct(ReconstructArgs),
    /// Run a lines x sigma grid from a config file.
    Sweep(SweepArgs),
    /// Write shearlet masks (and optionally subbands of an image) as images.
    ShearletDump(DumpArgs),
    /// Compare an image against ground truth.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    lines: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (.pbm or .png); nothing is written when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Image file or `phantom:<kind>:<n>`.
    #[arg(long)]
    image: String,
    #[arg(long)]
    mask: PathBuf,
    /// Noise standard deviation (times --sigma-scale) per unitary k-space coefficient.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    measurement: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Config file; solver keys are used, grid keys are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config overrides, e.g. `--set beta=1e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    stages: Option<u8>,
    /// Ground truth (file or `phantom:<kind>:<n>`) for a quality report.
    #[arg(long)]
    truth: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8, value_parser = parse_bits)]
    bits: u8,
    /// Per-iteration CSV.
    #[arg(long)]
    iter_csv: Option<PathBuf>,
    /// Directory for the Stage II weight fields.
    #[arg(long)]
    weights_dir: Option<PathBuf>,
    /// Print progress every N iterations.
    #[arg(long)]
    progress: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = geocs::shearlet::DEFAULT_SCALES)]
    scales: usize,
    #[arg(long, default_value_t = geocs::shearlet::DEFAULT_DIRECTIONS)]
    directions: usize,
    /// Also write subband magnitudes of this image.
    #[arg(long)]
    image: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    image: String,
    #[arg(long)]
    truth: String,
}

fn parse_bits(s: &str) -> Result<u8, String> {
    match s {
        "8" => Ok(8),
        "16" => Ok(16),
        _ => Err("bit depth must be 8 or 16".into()),
    }
}

fn depth(bits: u8) -> BitDepth {
    if bits == 16 {
        BitDepth::Sixteen
    } else {
        BitDepth::Eight
    }
}

fn load_image(spec: &str, default_n: usize) -> geocs::error::Result<geocs::Image> {
    spec.parse::<ImageSource>()?.load(default_n)
}

fn apply_overrides(cfg: &mut ExperimentConfig, overrides: &[String]) -> geocs::error::Result<()> {
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| {
            GeocsError::InvalidParameter(format!("override `{o}` is not KEY=VALUE"))
        })?;
        cfg.set(k, v)?;
    }
    Ok(())
}

fn cmd_mask(a: MaskArgs) -> geocs::error::Result<()> {
    let mask = radial_mask(a.n, a.lines, a.seed)?;
    println!(
        "n={} lines={} sampled={} rate={:.2}%",
        a.n,
        a.lines,
        mask.count(),
        100.0 * mask.rate()
    );
    if let Some(out) = a.out {
        let info = MaskInfo {
            n: a.n,
            lines: a.lines,
            rate: mask.rate(),
            seed: a.seed,
        };
        write_mask(&out, &mask, &info)?;
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> geocs::error::Result<()> {
    let mask = read_mask(&a.mask)?;
    let img = load_image(&a.image, mask.n())?;
    let clean = sample(&img, &mask)?;
    let sigma = a.sigma * a.sigma_scale;
    let m = if sigma > 0.0 {
        add_noise(&clean, sigma, a.seed)?
    } else {
        let mut m = clean;
        m.seed = a.seed;
        m
    };
    write_measurement(&a.out, &m)?;
    println!("k={} sigma={} seed={}", m.len(), m.sigma, m.seed);
    Ok(())
}

fn write_weights(dir: &Path, w: &geocs::WeightField) -> geocs::error::Result<()> {
    fs::create_dir_all(dir)?;
    for (axis, name) in [(geocs::Axis::Horizontal, "w_horizontal.png"), (geocs::Axis::Vertical, "w_vertical.png")] {
        let img = geocs::Image::new(w.axis(axis).clone())?;
        write_image(&dir.join(name), &img, BitDepth::Eight)?;
    }
    Ok(())
}

fn cmd_reconstruct(a: ReconstructArgs) -> geocs::error::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    apply_overrides(&mut cfg, &a.overrides)?;
    if let Some(s) = a.stages {
        cfg.stages = s;
    }
    let mask = read_mask(&a.mask)?;
    let m = read_measurement(&a.measurement, &mask)?;
    let params = cfg.params_for(m.sigma);
    for w in geocs::solver::validate_params(&params)? {
        eprintln!("warning: {w}");
    }
    let g = cfg.edge_stop_fn()?;
    let system = ShearletSystem::with_directions(mask.n(), cfg.scales, cfg.directions)?;

    let mut records: Vec<IterationRecord> = Vec::new();
    let progress = a.progress;
    let mut observer = |r: &IterationRecord| {
        if let Some(every) = progress {
            if every > 0 && r.iter % every == 0 {
                eprintln!(
                    "stage {} pass {} iter {}: delta={:.3e} objective={:.6e}",
                    r.stage, r.outer, r.iter, r.delta, r.objective
                );
            }
        }
        records.push(r.clone());
    };
    let start = std::time::Instant::now();
    let solver = Reconstructor::new(&m, &system, params)?;
    let stage1 = solver.stage1(&mut observer)?;
    let (final_u, iters2, weights) = if cfg.stages == 2 {
        let s2 = solver.stage2(stage1.state.clone(), &g, &mut observer)?;
        (s2.state.u.clone(), s2.iterations, s2.weights)
    } else {
        (stage1.state.u.clone(), 0, None)
    };
    let seconds = start.elapsed().as_secs_f64();
    let image = realize(&final_u)?;
    write_image(&a.out, &image, depth(a.bits))?;
    println!(
        "stage1_iters={} stage1_converged={} stage2_iters={} seconds={:.2}",
        stage1.iterations, stage1.converged, iters2, seconds
    );

    if let Some(path) = &a.iter_csv {
        let mut w = csv::Writer::from_path(path).map_err(|e| GeocsError::Format(e.to_string()))?;
        w.write_record(["stage", "outer", "iter", "delta", "objective", "tv_gap", "shearlet_gap"])
            .map_err(|e| GeocsError::Format(e.to_string()))?;
        for r in &records {
            w.write_record([
                r.stage.to_string(),
                r.outer.to_string(),
                r.iter.to_string(),
                format!("{:e}", r.delta),
                format!("{:e}", r.objective),
                format!("{:e}", r.tv_gap),
                format!("{:e}", r.shearlet_gap),
            ])
            .map_err(|e| GeocsError::Format(e.to_string()))?;
        }
        w.flush()?;
    }
    if let (Some(dir), Some(w)) = (&a.weights_dir, &weights) {
        write_weights(dir, w)?;
    }
    if let Some(t) = &a.truth {
        let truth = load_image(t, mask.n())?;
        let mut q = QualityReport::evaluate(&image, &truth)?;
        q.seconds = seconds;
        q.iterations_stage1 = stage1.iterations;
        q.iterations_stage2 = iters2;
        println!(
            "relerr_sq={:.6e} relerr={:.6} snr_db={:.4}",
            q.relerr_sq, q.relerr, q.snr_db
        );
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> geocs::error::Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    apply_overrides(&mut cfg, &a.overrides)?;
    let summary = run_sweep(&cfg, threads_from_env())?;
    for r in &summary.rows {
        println!(
            "{} lines={} rate={:.2}% sigma={} stage={} relerr={:.4} snr_db={:.2} iters={}",
            r.config_id,
            r.lines,
            100.0 * r.rate,
            r.sigma,
            r.stage,
            r.relerr,
            r.snr_db,
            r.iters
        );
    }
    println!(
        "computed={} skipped={} monotone_in_lines={} monotone_in_sigma={}",
        summary.computed, summary.skipped, summary.monotone_in_lines, summary.monotone_in_sigma
    );
    println!("csv={}", cfg.csv_path().display());
    Ok(())
}

/// Moves the zero frequency to the center for viewing.
fn fftshift(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let h = n / 2;
    Array2::from_shape_fn((n, n), |(r, c)| a[[(r + h) % n, (c + h) % n]])
}

fn cmd_dump(a: DumpArgs) -> geocs::error::Result<()> {
    let system = ShearletSystem::with_directions(a.n, a.scales, a.directions)?;
    fs::create_dir_all(&a.out)?;
    let image = a.image.as_deref().map(|s| load_image(s, a.n)).transpose()?;
    let stack = match &image {
        Some(img) => Some(system.analyze(img)?),
        None => None,
    };
    for (i, mask) in system.masks().iter().enumerate() {
        let img = geocs::Image::new(fftshift(mask))?;
        write_image(&a.out.join(format!("mask_{i:02}.png")), &img, BitDepth::Eight)?;
        if let Some(s) = &stack {
            let mag = s.bands[i].mapv(|z| z.norm());
            write_image(
                &a.out.join(format!("band_{i:02}.png")),
                &normalize_for_display(&mag)?,
                BitDepth::Eight,
            )?;
        }
    }
    println!(
        "bands={} partition_deviation={:.3e} out={}",
        system.len(),
        system.partition_deviation(),
        a.out.display()
    );
    Ok(())
}

fn cmd_metrics(a: MetricsArgs) -> geocs::error::Result<()> {
    let truth = load_image(&a.truth, 0)?;
    let img = load_image(&a.image, truth.n())?;
    let q = QualityReport::evaluate(&img, &truth)?;
    println!(
        "relerr_sq={:.6e} relerr={:.6} snr_db={:.4}",
        q.relerr_sq, q.relerr, q.snr_db
    );
    Ok(())
}

fn exit_code(e: &GeocsError) -> u8 {
    match e {
        GeocsError::Dimension(_) | GeocsError::InvalidParameter(_) => 2,
        GeocsError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
        GeocsError::Format(_) | GeocsError::Io(_) => 3,
        GeocsError::Divergence { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mask(a) => cmd_mask(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ShearletDump(a) => cmd_dump(a),
        Command::Metrics(a) => cmd_metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
