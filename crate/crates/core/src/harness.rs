//! Experiment configuration and the parameter sweep runner.
//!
//! Config files are flat `key = value` text. Keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `image` | `phantom:<kind>[:<n>]` or a path to a PNG/PGM | `phantom:shepp_logan` |
//! | `n` | side length for phantoms | 128 |
//! | `lines` | comma list of radial line counts | 30 |
//! | `sigma` | comma list of noise levels (harness scale) | 0 |
//! | `sigma_scale` | factor from harness scale to unitary k-space | 1/255 |
//! | `beta`, `lambda`, `mu`, `tau`, `gamma` | solver weights | see [`SolverParams`] |
//! | `noisy_beta` | comma list of `beta = lambda` values tried when sigma > 0 | 1e-4, 5e-4, 1e-3 |
//! | `tol_inner`, `tol_outer` | stopping tolerances | 1e-5, 1e-4 |
//! | `max_iter_stage1`, `max_iter_stage2_inner`, `max_iter_stage2_outer`, `stage2_budget` | caps | 1000, 100, 10, 100 |
//! | `edge_stop`, `h` | edge-stopping function and its scale | tukey, 0.1 |
//! | `scales`, `directions` | shearlet layout | 3, 4 |
//! | `stages` | 1 or 2 | 2 |
//! | `mask_seed`, `seed` | mask rotation and noise seeds | 0, 0 |
//! | `output` | output directory | `out` |
//! | `record_time` | fill the `seconds` column | false |
//!
//! With `sigma_scale = 1/255`, a noise level is the standard deviation of
//! complex Gaussian noise expressed in grey levels of an 8-bit image. Since the
//! transform is unitary this equals the per-pixel noise level.
//!
//! For noisy grid points the sweep solves once per `noisy_beta` entry and
//! keeps the one with the lowest relative error against ground truth; the
//! chosen value lands in the `beta`/`lambda` columns. Single reconstructions
//! of noisy data use the first entry.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GeocsError, Result};
use crate::io::{parse_key_values, read_image};
use crate::metrics::QualityReport;
use crate::phantom::{phantom, PhantomKind};
use crate::prox::{EdgeStop, EdgeStopKind};
use crate::sampling::{add_noise, radial_mask, sample};
use crate::shearlet::{ShearletSystem, DEFAULT_DIRECTIONS, DEFAULT_SCALES};
use crate::solver::{reconstruct, validate_params, SolverParams};
use crate::spectral::Image;

/// Where the ground-truth image comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum ImageSource {
    Phantom { kind: PhantomKind, n: Option<usize> },
    File(PathBuf),
}

impl ImageSource {
    /// Loads the image; `n` is used for phantoms without an explicit size.
    pub fn load(&self, n: usize) -> Result<Image> {
        match self {
            ImageSource::Phantom { kind, n: size } => phantom(*kind, size.unwrap_or(n)),
            ImageSource::File(path) => read_image(path),
        }
    }

    fn canonical(&self, n: usize) -> String {
        match self {
            ImageSource::Phantom { kind, n: size } => {
                format!("phantom:{}:{}", kind.name(), size.unwrap_or(n))
            }
            ImageSource::File(path) => format!("file:{}", path.display()),
        }
    }
}

impl FromStr for ImageSource {
    type Err = GeocsError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("phantom:") {
            let mut parts = rest.splitn(2, ':');
            let kind = parts.next().unwrap_or("").parse()?;
            let n = parts
                .next()
                .map(|v| {
                    v.parse::<usize>().map_err(|_| {
                        GeocsError::InvalidParameter(format!("bad phantom size `{v}`"))
                    })
                })
                .transpose()?;
            return Ok(ImageSource::Phantom { kind, n });
        }
        if s.is_empty() {
            return Err(GeocsError::InvalidParameter("empty image source".into()));
        }
        Ok(ImageSource::File(PathBuf::from(s)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub image: ImageSource,
    pub n: usize,
    pub lines: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub sigma_scale: f64,
    pub params: SolverParams,
    pub noisy_betas: Vec<f64>,
    pub edge_stop: EdgeStopKind,
    pub h: f64,
    pub scales: usize,
    pub directions: usize,
    pub stages: u8,
    pub mask_seed: u64,
    pub seed: u64,
    pub output: PathBuf,
    pub record_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            image: ImageSource::Phantom {
                kind: PhantomKind::SheppLogan,
                n: None,
            },
            n: 128,
            lines: vec![30],
            sigmas: vec![0.0],
            sigma_scale: 1.0 / 255.0,
            params: SolverParams::default(),
            noisy_betas: vec![1e-4, 5e-4, 1e-3],
            edge_stop: EdgeStopKind::Tukey,
            h: EdgeStop::DEFAULT_H,
            scales: DEFAULT_SCALES,
            directions: DEFAULT_DIRECTIONS,
            stages: 2,
            mask_seed: 0,
            seed: 0,
            output: PathBuf::from("out"),
            record_time: false,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| GeocsError::InvalidParameter(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_num(key, v))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(GeocsError::InvalidParameter(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_key_values(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Applies one `key = value` setting (used for file entries and CLI overrides).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let p = &mut self.params;
        match key.as_str() {
            "image" | "phantom" => {
                self.image = if key == "phantom" && !value.starts_with("phantom:") {
                    format!("phantom:{value}").parse()?
                } else {
                    value.parse()?
                }
            }
            "n" => self.n = parse_num(&key, value)?,
            "lines" => self.lines = parse_list(&key, value)?,
            "sigma" => self.sigmas = parse_list(&key, value)?,
            "sigma_scale" => self.sigma_scale = parse_num(&key, value)?,
            "beta" => p.beta = parse_num(&key, value)?,
            "lambda" => p.lambda = parse_num(&key, value)?,
            "mu" => p.mu = parse_num(&key, value)?,
            "tau" => p.tau = parse_num(&key, value)?,
            "gamma" => p.gamma = parse_num(&key, value)?,
            "tol_inner" => p.tol_inner = parse_num(&key, value)?,
            "tol_outer" => p.tol_outer = parse_num(&key, value)?,
            "max_iter_stage1" => p.max_iter_stage1 = parse_num(&key, value)?,
            "max_iter_stage2_inner" => p.max_iter_stage2_inner = parse_num(&key, value)?,
            "max_iter_stage2_outer" => p.max_iter_stage2_outer = parse_num(&key, value)?,
            "stage2_budget" => p.stage2_budget = parse_num(&key, value)?,
            "noisy_beta" => self.noisy_betas = parse_list(&key, value)?,
            "edge_stop" => self.edge_stop = value.parse()?,
            "h" => self.h = parse_num(&key, value)?,
            "scales" => self.scales = parse_num(&key, value)?,
            "directions" => self.directions = parse_num(&key, value)?,
            "stages" => self.stages = parse_num(&key, value)?,
            "mask_seed" => self.mask_seed = parse_num(&key, value)?,
            "seed" => self.seed = parse_num(&key, value)?,
            "output" => self.output = PathBuf::from(value.trim()),
            "record_time" => self.record_time = parse_bool(&key, value)?,
            _ => return Err(GeocsError::InvalidParameter(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GeocsError::InvalidParameter(m));
        if self.lines.is_empty() {
            return bad("`lines` is empty".into());
        }
        if self.sigmas.is_empty() {
            return bad("`sigma` is empty".into());
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("noise levels must be finite and >= 0".into());
        }
        if !(self.sigma_scale > 0.0) || !self.sigma_scale.is_finite() {
            return bad("`sigma_scale` must be positive".into());
        }
        if !(self.stages == 1 || self.stages == 2) {
            return bad(format!("`stages` must be 1 or 2, got {}", self.stages));
        }
        if let ImageSource::File(path) = &self.image {
            if !path.exists() {
                return bad(format!("image `{}` does not exist", path.display()));
            }
        }
        if self.noisy_betas.is_empty() {
            return bad("`noisy_beta` is empty".into());
        }
        validate_params(&self.params)?;
        for p in self.candidates(1.0) {
            validate_params(&p)?;
        }
        EdgeStop::new(self.edge_stop, self.h)?;
        Ok(())
    }

    /// Solver parameters for a single reconstruction at this noise level.
    pub fn params_for(&self, sigma: f64) -> SolverParams {
        self.candidates(sigma).swap_remove(0)
    }

    /// Parameter sets tried by the sweep at this noise level.
    pub fn candidates(&self, sigma: f64) -> Vec<SolverParams> {
        if sigma > 0.0 && !self.noisy_betas.is_empty() {
            self.noisy_betas
                .iter()
                .map(|&b| SolverParams {
                    beta: b,
                    lambda: b,
                    ..self.params.clone()
                })
                .collect()
        } else {
            vec![self.params.clone()]
        }
    }

    pub fn edge_stop_fn(&self) -> Result<EdgeStop> {
        EdgeStop::new(self.edge_stop, self.h)
    }

    /// Stable identifier of one grid point.
    pub fn config_id(&self, lines: usize, sigma: f64) -> String {
        let p = &self.params;
        let betas: Vec<String> = if sigma > 0.0 {
            self.noisy_betas.iter().map(|b| format!("{b:e}")).collect()
        } else {
            Vec::new()
        };
        let canonical = format!(
            "image={};lines={lines};sigma={sigma:e};sigma_scale={:e};beta={:e};lambda={:e};noisy_beta={};mu={:e};tau={:e};gamma={:e};\
             tol_inner={:e};tol_outer={:e};it1={};it2i={};it2o={};budget={};edge={};h={:e};scales={};directions={};\
             stages={};mask_seed={};seed={}",
            self.image.canonical(self.n),
            self.sigma_scale,
            p.beta,
            p.lambda,
            betas.join(","),
            p.mu,
            p.tau,
            p.gamma,
            p.tol_inner,
            p.tol_outer,
            p.max_iter_stage1,
            p.max_iter_stage2_inner,
            p.max_iter_stage2_outer,
            p.stage2_budget,
            self.edge_stop.name(),
            self.h,
            self.scales,
            self.directions,
            self.stages,
            self.mask_seed,
            self.seed,
        );
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn csv_path(&self) -> PathBuf {
        self.output.join("sweep.csv")
    }
}

/// One row of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config_id: String,
    pub n: usize,
    pub lines: usize,
    pub rate: f64,
    pub sigma: f64,
    pub beta: f64,
    pub lambda: f64,
    pub stage: u8,
    pub relerr_sq: f64,
    pub relerr: f64,
    pub snr_db: f64,
    pub iters: usize,
    pub seconds: f64,
}

pub const CSV_HEADER: [&str; 13] = [
    "config_id", "n", "lines", "rate", "sigma", "beta", "lambda", "stage", "relerr_sq", "relerr",
    "snr_db", "iters", "seconds",
];

pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(GeocsError::Format(format!(
            "{}: unexpected CSV header",
            path.display()
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

fn csv_error(e: csv::Error) -> GeocsError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => GeocsError::Io(io),
            _ => unreachable!(),
        }
    } else {
        GeocsError::Format(e.to_string())
    }
}

/// Reconstructs one grid point. Noisy points try every `noisy_beta` value
/// and keep the best.
pub fn run_point(
    cfg: &ExperimentConfig,
    truth: &Image,
    system: &ShearletSystem,
    lines: usize,
    sigma: f64,
) -> Result<SweepRow> {
    let n = truth.n();
    let mask = radial_mask(n, lines, cfg.mask_seed)?;
    let clean = sample(truth, &mask)?;
    let measurement = if sigma > 0.0 {
        add_noise(&clean, sigma * cfg.sigma_scale, cfg.seed)?
    } else {
        clean
    };
    let g = cfg.edge_stop_fn()?;
    let start = Instant::now();
    let mut best: Option<SweepRow> = None;
    for params in cfg.candidates(sigma) {
        let rec = reconstruct(
            &measurement,
            system,
            &params,
            (cfg.stages == 2).then_some(&g),
            &mut |_| {},
        )?;
        let out = rec.final_output();
        let q = QualityReport::evaluate(&out.image, truth)?;
        if best.as_ref().is_some_and(|b| b.relerr <= q.relerr) {
            continue;
        }
        best = Some(SweepRow {
            config_id: cfg.config_id(lines, sigma),
            n,
            lines,
            rate: mask.rate(),
            sigma,
            beta: params.beta,
            lambda: params.lambda,
            stage: cfg.stages,
            relerr_sq: q.relerr_sq,
            relerr: q.relerr,
            snr_db: q.snr_db,
            iters: rec.stage1.iterations + rec.stage2.as_ref().map_or(0, |s| s.iterations),
            seconds: 0.0,
        });
    }
    let mut row = best.expect("at least one parameter set");
    if cfg.record_time {
        row.seconds = start.elapsed().as_secs_f64();
    }
    Ok(row)
}

/// Trend checks over a completed sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub computed: usize,
    pub skipped: usize,
    /// For every noise level, relerr is nonincreasing and SNR nondecreasing
    /// as the line count grows.
    pub monotone_in_lines: bool,
    /// For every line count, relerr is nondecreasing as noise grows.
    pub monotone_in_sigma: bool,
}

/// Grid points in output order: lines outer, sigma inner.
pub fn grid(cfg: &ExperimentConfig) -> Vec<(usize, f64)> {
    cfg.lines
        .iter()
        .flat_map(|&l| cfg.sigmas.iter().map(move |&s| (l, s)))
        .collect()
}

/// Runs the sweep, appending new rows to `<output>/sweep.csv`. Points whose
/// config id already appears in the file are skipped. Points are solved in
/// parallel on a pool of `threads` workers (all cores when `None`) and
/// written in grid order.
pub fn run_sweep(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<SweepSummary> {
    cfg.validate()?;
    let truth = cfg.image.load(cfg.n)?;
    let system = ShearletSystem::with_directions(truth.n(), cfg.scales, cfg.directions)?;
    fs::create_dir_all(&cfg.output)?;
    let path = cfg.csv_path();
    let existing = if path.exists() { read_rows(&path)? } else { Vec::new() };
    let known: HashSet<String> = existing.iter().map(|r| r.config_id.clone()).collect();

    let points = grid(cfg);
    let todo: Vec<(usize, f64)> = points
        .iter()
        .copied()
        .filter(|&(l, s)| !known.contains(&cfg.config_id(l, s)))
        .collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| GeocsError::InvalidParameter(format!("thread pool: {e}")))?;
    let fresh: Vec<SweepRow> = pool.install(|| {
        todo.par_iter()
            .map(|&(l, s)| run_point(cfg, &truth, &system, l, s))
            .collect::<Result<Vec<_>>>()
    })?;

    let new_file = !path.exists();
    let file = fs::OpenOptions::new().create(true).append(true).open(&path)?;
    let mut writer = csv::WriterBuilder::new().has_headers(new_file).from_writer(file);
    for row in &fresh {
        writer.serialize(row).map_err(csv_error)?;
    }
    writer.flush()?;

    let mut rows: Vec<SweepRow> = Vec::with_capacity(points.len());
    for &(l, s) in &points {
        let id = cfg.config_id(l, s);
        if let Some(r) = existing.iter().chain(&fresh).find(|r| r.config_id == id) {
            rows.push(r.clone());
        }
    }
    let (monotone_in_lines, monotone_in_sigma) = trends(cfg, &rows);
    Ok(SweepSummary {
        rows,
        computed: fresh.len(),
        skipped: points.len() - todo.len(),
        monotone_in_lines,
        monotone_in_sigma,
    })
}

fn trends(cfg: &ExperimentConfig, rows: &[SweepRow]) -> (bool, bool) {
    let mut by_lines = true;
    for &s in &cfg.sigmas {
        let mut col: Vec<&SweepRow> = rows.iter().filter(|r| r.sigma == s).collect();
        col.sort_by_key(|r| r.lines);
        by_lines &= col
            .windows(2)
            .all(|w| w[1].relerr <= w[0].relerr && w[1].snr_db >= w[0].snr_db);
    }
    let mut by_sigma = true;
    for &l in &cfg.lines {
        let mut col: Vec<&SweepRow> = rows.iter().filter(|r| r.lines == l).collect();
        col.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
        by_sigma &= col.windows(2).all(|w| w[1].relerr >= w[0].relerr);
    }
    (by_lines, by_sigma)
}

/// Worker count from `GEOCS_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("GEOCS_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&t: &usize| t > 0)
}
