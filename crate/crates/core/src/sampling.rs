//! Partial Fourier measurement simulation: radial k-space masks, the
//! selection operator and its adjoint, and complex Gaussian noise.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{GeocsError, Result};
use crate::spectral::{Fft2, Image};

/// Boolean k-space selection in FFT layout (`true` = sampled).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplingMask {
    keep: Array2<bool>,
}

impl SamplingMask {
    /// Wraps a selection grid. The zero frequency is always added.
    pub fn new(mut keep: Array2<bool>) -> Result<Self> {
        let (rows, cols) = keep.dim();
        if rows != cols || rows < 2 {
            return Err(GeocsError::Dimension(format!(
                "sampling mask must be square with side >= 2, got {rows}x{cols}"
            )));
        }
        keep[[0, 0]] = true;
        Ok(Self { keep })
    }

    pub fn full(n: usize) -> Result<Self> {
        Self::new(Array2::from_elem((n, n), true))
    }

    pub fn n(&self) -> usize {
        self.keep.nrows()
    }

    pub fn keep(&self) -> &Array2<bool> {
        &self.keep
    }

    /// Number of sampled frequencies.
    pub fn count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Fraction of sampled frequencies.
    pub fn rate(&self) -> f64 {
        self.count() as f64 / (self.n() * self.n()) as f64
    }

    /// The diagonal of `P^* P` as 0/1 values.
    pub fn indicator(&self) -> Array2<f64> {
        self.keep.mapv(|k| if k { 1.0 } else { 0.0 })
    }
}

/// Radial lines through the zero frequency.
///
/// Line `j` has angle `j * pi / lines`; every frequency whose perpendicular
/// distance to a line is below half a pixel is sampled. A nonzero `seed`
/// rotates the whole pattern by a pseudo-random offset in `[0, pi / lines)`.
/// The result is symmetric under `k -> -k`, so real images produce
/// Hermitian-consistent data.
pub fn radial_mask(n: usize, lines: usize, seed: u64) -> Result<SamplingMask> {
    if n < 2 {
        return Err(GeocsError::Dimension(format!("mask side must be >= 2, got {n}")));
    }
    if lines == 0 || lines > 2 * n {
        return Err(GeocsError::InvalidParameter(format!(
            "line count must be in 1..={}, got {lines}",
            2 * n
        )));
    }
    let step = PI / lines as f64;
    let offset = if seed == 0 {
        0.0
    } else {
        ChaCha8Rng::seed_from_u64(seed).random_range(0.0..step)
    };
    let directions: Vec<(f64, f64)> = (0..lines)
        .map(|j| {
            let theta = offset + j as f64 * step;
            (theta.cos(), theta.sin())
        })
        .collect();
    let centered = |k: usize| {
        if k < n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        }
    };
    let mut keep = Array2::from_shape_fn((n, n), |(r, c)| {
        let (y, x) = (centered(r), centered(c));
        directions
            .iter()
            .any(|&(cos, sin)| (x * sin - y * cos).abs() < 0.5)
    });
    for r in 0..n {
        for c in 0..n {
            if keep[[r, c]] {
                keep[[(n - r) % n, (n - c) % n]] = true;
            }
        }
    }
    SamplingMask::new(keep)
}

/// Sampled k-space values `b = P F u + noise`.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    /// Sampled coefficients in row-major order of the mask.
    pub values: Vec<Complex64>,
    pub mask: SamplingMask,
    /// Noise standard deviation applied, 0 when noise-free.
    pub sigma: f64,
    pub seed: u64,
}

impl Measurement {
    pub fn new(values: Vec<Complex64>, mask: SamplingMask, sigma: f64, seed: u64) -> Result<Self> {
        if values.len() != mask.count() {
            return Err(GeocsError::Dimension(format!(
                "measurement has {} values but the mask selects {}",
                values.len(),
                mask.count()
            )));
        }
        Ok(Self {
            values,
            mask,
            sigma,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.mask.n()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `P^* b`: the measurement zero-filled onto the frequency grid.
    pub fn zero_filled(&self) -> Array2<Complex64> {
        let mut out = Array2::zeros(self.mask.keep().dim());
        let mut values = self.values.iter();
        for (slot, &k) in out.iter_mut().zip(self.mask.keep().iter()) {
            if k {
                *slot = *values.next().expect("value count checked at construction");
            }
        }
        out
    }

    /// Ratio of signal to noise energy in dB over the sampled coefficients,
    /// given the noise-free counterpart.
    pub fn snr_db_against(&self, clean: &Measurement) -> f64 {
        let signal: f64 = clean.values.iter().map(|z| z.norm_sqr()).sum();
        let noise: f64 = self
            .values
            .iter()
            .zip(&clean.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        if noise == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (signal / noise).log10()
        }
    }
}

/// Restrict a frequency grid to the mask.
pub fn select(spectrum: &Array2<Complex64>, mask: &SamplingMask) -> Vec<Complex64> {
    spectrum
        .iter()
        .zip(mask.keep().iter())
        .filter_map(|(z, &k)| k.then_some(*z))
        .collect()
}

/// `P F u` for a real image.
pub fn sample(u: &Image, mask: &SamplingMask) -> Result<Measurement> {
    sample_complex(&u.to_complex(), mask)
}

/// `P F u` for a complex grid.
pub fn sample_complex(u: &Array2<Complex64>, mask: &SamplingMask) -> Result<Measurement> {
    if u.dim() != mask.keep().dim() {
        return Err(GeocsError::Dimension(format!(
            "image shape {:?} does not match mask side {}",
            u.dim(),
            mask.n()
        )));
    }
    let spectrum = Fft2::new(mask.n())?.forward(u);
    Measurement::new(select(&spectrum, mask), mask.clone(), 0.0, 0)
}

/// `F^* P^* b`: zero-fill and invert.
pub fn adjoint_sample(m: &Measurement) -> Array2<Complex64> {
    let fft = Fft2::new(m.n()).expect("mask side is positive");
    let mut grid = m.zero_filled();
    fft.inverse_inplace(&mut grid);
    grid
}

/// Adds `sigma * (g1 + i g2) / sqrt(2)` to every value, with `g1`, `g2`
/// independent standard normals drawn from a generator seeded by `seed`.
pub fn add_noise(m: &Measurement, sigma: f64, seed: u64) -> Result<Measurement> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(GeocsError::InvalidParameter(format!(
            "noise level must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(Measurement {
            seed,
            ..m.clone()
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = sigma / std::f64::consts::SQRT_2;
    let values = m
        .values
        .iter()
        .map(|z| {
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            z + Complex64::new(g1, g2) * scale
        })
        .collect();
    Ok(Measurement {
        values,
        mask: m.mask.clone(),
        sigma,
        seed,
    })
}
