//! Discrete shearlet system realized as a bank of frequency masks.
//!
//! The frequency plane is tiled in the cone-adapted way: a low-pass square,
//! then dyadic square rings, each ring split into directional wedges that
//! follow the shear parameter across the horizontal and vertical cones. Radial
//! and angular windows are built from the Meyer auxiliary function so that the
//! squared masks form a partition of unity at every frequency. That makes the
//! system a Parseval frame: analysis preserves energy and the adjoint inverts.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{GeocsError, Result};
use crate::spectral::{Fft2, Image};

/// Default number of scales.
pub const DEFAULT_SCALES: usize = 3;
/// Default number of directional wedges per scale.
pub const DEFAULT_DIRECTIONS: usize = 4;

const PARTITION_TOL: f64 = 1e-10;

/// What a subband covers in the frequency plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Band {
    LowPass,
    Directional { scale: usize, direction: usize },
}

/// A Parseval frame of real, nonnegative frequency masks.
#[derive(Clone, Debug)]
pub struct ShearletSystem {
    n: usize,
    scales: usize,
    directions: usize,
    bands: Vec<Band>,
    masks: Vec<Array2<f64>>,
}

/// Coefficients of every subband, in the system's band order.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandStack {
    pub bands: Vec<Array2<Complex64>>,
}

impl SubbandStack {
    pub fn zeros(count: usize, n: usize) -> Self {
        Self {
            bands: vec![Array2::zeros((n, n)); count],
        }
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// Sum of squared magnitudes over all bands.
    pub fn energy(&self) -> f64 {
        self.bands
            .iter()
            .flat_map(|b| b.iter())
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// `<self, other>` with the second argument conjugated.
    pub fn inner(&self, other: &SubbandStack) -> Complex64 {
        self.bands
            .iter()
            .zip(&other.bands)
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(x, y)| x * y.conj())
            .sum()
    }
}

/// Meyer auxiliary function: smooth 0 -> 1 on [0, 1] with `v(x) + v(1-x) = 1`.
fn meyer(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x.powi(3))
    }
}

/// Squared low-pass window: 1 on `rho <= c/2`, 0 on `rho >= c`.
fn lowpass_sq(rho: f64, cutoff: f64) -> f64 {
    1.0 - meyer(2.0 * rho / cutoff - 1.0)
}

/// Signed frequency index in `[-n/2, n/2)`.
fn centered(k: usize, n: usize) -> f64 {
    if k < n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Pseudo-angle in `[0, 4)` that walks once around the square boundary
/// modulo the point reflection. Values 1 and 3 are the two axes, 0 and 2 the
/// diagonals. Inside each cone it is affine in the shear slope.
fn pseudo_angle(kr: f64, kc: f64) -> f64 {
    if kr == 0.0 && kc == 0.0 {
        0.0
    } else if kc.abs() >= kr.abs() {
        1.0 + kr / kc
    } else {
        let t = 3.0 - kc / kr;
        if t >= 4.0 {
            t - 4.0
        } else {
            t
        }
    }
}

/// Squared angular window for wedge `index` out of `count`.
fn angular_sq(t: f64, index: usize, count: usize) -> f64 {
    if count == 1 {
        return 1.0;
    }
    let width = 4.0 / count as f64;
    let mut offset = t - index as f64 * width;
    offset -= 4.0 * (offset / 4.0 + 0.5).floor();
    let x = offset.abs() / width;
    if x >= 1.0 {
        0.0
    } else {
        meyer(1.0 - x)
    }
}

impl ShearletSystem {
    /// Build the default system (`directions = 4`).
    pub fn new(n: usize, scales: usize) -> Result<Self> {
        Self::with_directions(n, scales, DEFAULT_DIRECTIONS)
    }

    /// Build a system with `1 + scales * directions` bands.
    ///
    /// `n` must be a power of two with `n >= 2^(scales + 2)` so the low-pass
    /// square keeps at least a 2-pixel radius.
    pub fn with_directions(n: usize, scales: usize, directions: usize) -> Result<Self> {
        if scales == 0 {
            return Err(GeocsError::InvalidParameter("scales must be >= 1".into()));
        }
        if directions == 0 {
            return Err(GeocsError::InvalidParameter(
                "directions per scale must be >= 1".into(),
            ));
        }
        if !n.is_power_of_two() || n < 8 {
            return Err(GeocsError::Dimension(format!(
                "shearlet grid side must be a power of two >= 8, got {n}"
            )));
        }
        if scales + 2 >= usize::BITS as usize || n < (1usize << (scales + 2)) {
            return Err(GeocsError::Dimension(format!(
                "n = {n} is too small for {scales} scales (needs n >= {})",
                1u128 << (scales + 2).min(127)
            )));
        }

        let cutoffs: Vec<f64> = (0..scales)
            .map(|j| n as f64 / (1u64 << (scales + 1 - j)) as f64)
            .collect();

        let count = 1 + scales * directions;
        let mut squares = vec![Array2::<f64>::zeros((n, n)); count];
        let mut bands = Vec::with_capacity(count);
        bands.push(Band::LowPass);
        for scale in 0..scales {
            for direction in 0..directions {
                bands.push(Band::Directional { scale, direction });
            }
        }

        for r in 0..n {
            let kr = centered(r, n);
            for c in 0..n {
                let kc = centered(c, n);
                let rho = kr.abs().max(kc.abs());
                let t = pseudo_angle(kr, kc);
                let low: Vec<f64> = cutoffs.iter().map(|&cut| lowpass_sq(rho, cut)).collect();
                squares[0][[r, c]] = low[0];
                for scale in 0..scales {
                    let radial = if scale + 1 < scales {
                        low[scale + 1] - low[scale]
                    } else {
                        1.0 - low[scale]
                    };
                    for direction in 0..directions {
                        squares[1 + scale * directions + direction][[r, c]] =
                            radial * angular_sq(t, direction, directions);
                    }
                }
            }
        }

        // Average with the point reflection so every mask is even in k;
        // this only touches the Nyquist row and column, where the centered
        // index range is not symmetric.
        let masks = squares
            .into_iter()
            .map(|sq| {
                Array2::from_shape_fn((n, n), |(r, c)| {
                    let mirrored = sq[[(n - r) % n, (n - c) % n]];
                    (0.5 * (sq[[r, c]] + mirrored)).max(0.0).sqrt()
                })
            })
            .collect();

        let system = Self {
            n,
            scales,
            directions,
            bands,
            masks,
        };
        let deviation = system.partition_deviation();
        if deviation > PARTITION_TOL {
            return Err(GeocsError::InvalidParameter(format!(
                "mask partition of unity violated by {deviation:e}"
            )));
        }
        Ok(system)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn directions(&self) -> usize {
        self.directions
    }

    /// Number of subbands `N`.
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[Array2<f64>] {
        &self.masks
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    /// `sum_i H_i^2` on the frequency grid.
    pub fn mask_energy(&self) -> Array2<f64> {
        let mut total = Array2::zeros((self.n, self.n));
        for m in &self.masks {
            total.zip_mut_with(m, |acc, &h| *acc += h * h);
        }
        total
    }

    /// Largest pointwise deviation of `sum_i H_i^2` from 1.
    pub fn partition_deviation(&self) -> f64 {
        self.mask_energy()
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn check_side(&self, n: usize) -> Result<()> {
        if n != self.n {
            return Err(GeocsError::Dimension(format!(
                "grid side {n} does not match shearlet system side {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Subbands of a real image.
    pub fn analyze(&self, u: &Image) -> Result<SubbandStack> {
        self.check_side(u.n())?;
        let fft = Fft2::new(self.n)?;
        Ok(self.analyze_spectrum(&fft, &fft.forward_real(u.data())))
    }

    /// Subbands of a complex spatial grid.
    pub fn analyze_complex(&self, u: &Array2<Complex64>) -> Result<SubbandStack> {
        self.check_side(u.nrows())?;
        let fft = Fft2::new(self.n)?;
        Ok(self.analyze_spectrum(&fft, &fft.forward(u)))
    }

    /// Subbands from an already transformed grid `fft(u)`.
    pub fn analyze_spectrum(&self, fft: &Fft2, u_hat: &Array2<Complex64>) -> SubbandStack {
        let bands = self
            .masks
            .par_iter()
            .map(|h| {
                let mut band = u_hat * &h.mapv(|x| Complex64::new(x, 0.0));
                fft.inverse_inplace(&mut band);
                band
            })
            .collect();
        SubbandStack { bands }
    }

    /// `sum_i H_i .* fft(band_i)`, the frequency-domain form of the adjoint.
    pub fn adjoint_spectrum(&self, fft: &Fft2, stack: &SubbandStack) -> Result<Array2<Complex64>> {
        self.check_stack(stack)?;
        let parts: Vec<Array2<Complex64>> = self
            .masks
            .par_iter()
            .zip(stack.bands.par_iter())
            .map(|(h, band)| {
                let mut spec = fft.forward(band);
                spec.zip_mut_with(h, |z, &w| *z *= w);
                spec
            })
            .collect();
        let mut total = Array2::zeros((self.n, self.n));
        for p in &parts {
            total += p;
        }
        Ok(total)
    }

    /// `sum_i M_{H_i}^* band_i`. For stacks produced by [`Self::analyze`] this
    /// reproduces the input exactly.
    pub fn adjoint(&self, stack: &SubbandStack) -> Result<Array2<Complex64>> {
        let fft = Fft2::new(self.n)?;
        let mut spec = self.adjoint_spectrum(&fft, stack)?;
        fft.inverse_inplace(&mut spec);
        Ok(spec)
    }

    fn check_stack(&self, stack: &SubbandStack) -> Result<()> {
        if stack.len() != self.len() {
            return Err(GeocsError::Dimension(format!(
                "expected {} subbands, got {}",
                self.len(),
                stack.len()
            )));
        }
        for band in &stack.bands {
            if band.dim() != (self.n, self.n) {
                return Err(GeocsError::Dimension(format!(
                    "subband shape {:?} does not match side {}",
                    band.dim(),
                    self.n
                )));
            }
        }
        Ok(())
    }
}
