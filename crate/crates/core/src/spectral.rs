//! Unitary 2-D DFT and the Fourier symbols of the periodic difference operators.
//!
//! The transform is normalized by `1/sqrt(n)` per axis so that `F* F = I`
//! holds exactly (up to rounding). All grids use the natural FFT layout, with
//! the zero frequency at index `[0, 0]`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{GeocsError, Result};

/// Real-valued square intensity grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    data: Array2<f64>,
}

impl Image {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows != cols {
            return Err(GeocsError::Dimension(format!(
                "image must be square, got {rows}x{cols}"
            )));
        }
        if rows < 2 {
            return Err(GeocsError::Dimension(format!(
                "image side must be at least 2, got {rows}"
            )));
        }
        Ok(Self { data })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(Array2::zeros((n, n)))
    }

    pub fn from_fn(n: usize, f: impl FnMut((usize, usize)) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((n, n), f))
    }

    /// Real part of a complex grid.
    pub fn from_real_part(field: &Array2<Complex64>) -> Result<Self> {
        Self::new(field.mapv(|z| z.re))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    pub fn to_complex(&self) -> Array2<Complex64> {
        self.data.mapv(|x| Complex64::new(x, 0.0))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn clamp_unit(mut self) -> Self {
        self.data.mapv_inplace(|x| x.clamp(0.0, 1.0));
        self
    }
}

/// Complex grid of unitary-DFT coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    data: Array2<Complex64>,
}

impl SpectralField {
    pub fn new(data: Array2<Complex64>) -> Result<Self> {
        check_square(&data)?;
        Ok(Self { data })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<Complex64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        complex_norm(&self.data)
    }
}

fn check_square<T>(data: &Array2<T>) -> Result<usize> {
    let (rows, cols) = data.dim();
    if rows == 0 || rows != cols {
        return Err(GeocsError::Dimension(format!(
            "expected a non-empty square grid, got {rows}x{cols}"
        )));
    }
    Ok(rows)
}

pub(crate) fn complex_norm(data: &Array2<Complex64>) -> f64 {
    data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Planned unitary 2-D FFT for a fixed side length.
///
/// Plans are immutable once built and can be shared between threads.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(GeocsError::Dimension("FFT size must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scale: 1.0 / n as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn forward_inplace(&self, data: &mut Array2<Complex64>) {
        self.transform(data, &self.forward);
    }

    pub fn inverse_inplace(&self, data: &mut Array2<Complex64>) {
        self.transform(data, &self.inverse);
    }

    pub fn forward(&self, data: &Array2<Complex64>) -> Array2<Complex64> {
        let mut out = data.as_standard_layout().into_owned();
        self.forward_inplace(&mut out);
        out
    }

    pub fn inverse(&self, data: &Array2<Complex64>) -> Array2<Complex64> {
        let mut out = data.as_standard_layout().into_owned();
        self.inverse_inplace(&mut out);
        out
    }

    pub fn forward_real(&self, data: &Array2<f64>) -> Array2<Complex64> {
        let mut out = data.mapv(|x| Complex64::new(x, 0.0));
        self.forward_inplace(&mut out);
        out
    }

    fn transform(&self, data: &mut Array2<Complex64>, plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.dim(), (self.n, self.n), "FFT plan size mismatch");
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // rows, then columns via a transposed copy
        plan.process_with_scratch(data.as_slice_mut().unwrap(), &mut scratch);
        let mut cols = data.t().as_standard_layout().into_owned();
        plan.process_with_scratch(cols.as_slice_mut().unwrap(), &mut scratch);
        let scale = self.scale;
        Zip::from(data).and(cols.t()).for_each(|d, &c| *d = c * scale);
    }
}

/// Unitary forward DFT of a real image.
pub fn forward_fft(img: &Image) -> SpectralField {
    let fft = Fft2::new(img.n()).expect("image side is positive");
    SpectralField {
        data: fft.forward_real(img.data()),
    }
}

/// Unitary forward DFT of a complex grid.
pub fn forward_fft_complex(data: &Array2<Complex64>) -> Result<SpectralField> {
    let n = check_square(data)?;
    Ok(SpectralField {
        data: Fft2::new(n)?.forward(data),
    })
}

/// Unitary inverse DFT. The result is complex in general.
pub fn inverse_fft(field: &SpectralField) -> Array2<Complex64> {
    Fft2::new(field.n())
        .expect("field side is positive")
        .inverse(field.data())
}

/// Direction of a first-order difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    /// Along a row: `u[r, c+1] - u[r, c]`.
    Horizontal,
    /// Along a column: `u[r+1, c] - u[r, c]`.
    Vertical,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::Horizontal, Axis::Vertical];
}

/// Forward periodic difference `D u` along `axis`.
pub fn diff_apply(img: &Image, axis: Axis) -> Image {
    Image {
        data: diff_forward(img.data(), axis),
    }
}

/// Forward periodic difference on any grid of subtractable values.
pub fn diff_forward<T>(u: &Array2<T>, axis: Axis) -> Array2<T>
where
    T: Copy + std::ops::Sub<Output = T>,
{
    let (rows, cols) = u.dim();
    match axis {
        Axis::Horizontal => Array2::from_shape_fn((rows, cols), |(r, c)| {
            u[[r, (c + 1) % cols]] - u[[r, c]]
        }),
        Axis::Vertical => Array2::from_shape_fn((rows, cols), |(r, c)| {
            u[[(r + 1) % rows, c]] - u[[r, c]]
        }),
    }
}

/// Transpose of [`diff_forward`]: `(D^T p)[i] = p[i-1] - p[i]` with wrap.
pub fn diff_adjoint<T>(p: &Array2<T>, axis: Axis) -> Array2<T>
where
    T: Copy + std::ops::Sub<Output = T>,
{
    let (rows, cols) = p.dim();
    match axis {
        Axis::Horizontal => Array2::from_shape_fn((rows, cols), |(r, c)| {
            p[[r, (c + cols - 1) % cols]] - p[[r, c]]
        }),
        Axis::Vertical => Array2::from_shape_fn((rows, cols), |(r, c)| {
            p[[(r + rows - 1) % rows, c]] - p[[r, c]]
        }),
    }
}

/// DFT eigenvalues of the periodic forward difference along one axis.
#[derive(Clone, Debug)]
pub struct DiffSymbol {
    pub axis: Axis,
    pub symbol: Array2<Complex64>,
}

impl DiffSymbol {
    /// `|symbol|^2`, i.e. the eigenvalues of `D^T D`.
    pub fn power(&self) -> Array2<f64> {
        self.symbol.mapv(|z| z.norm_sqr())
    }
}

/// Symbol `s` with `fft(D u) = s .* fft(u)`.
pub fn diff_symbol(n: usize, axis: Axis) -> Result<DiffSymbol> {
    if n < 2 {
        return Err(GeocsError::Dimension(format!(
            "difference symbol needs n >= 2, got {n}"
        )));
    }
    // A forward shift by one sample multiplies frequency k by exp(2 pi i k / n).
    let tap = |k: usize| {
        if k == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let theta = 2.0 * PI * k as f64 / n as f64;
        Complex64::new(theta.cos() - 1.0, theta.sin())
    };
    let symbol = match axis {
        Axis::Horizontal => Array2::from_shape_fn((n, n), |(_, k)| tap(k)),
        Axis::Vertical => Array2::from_shape_fn((n, n), |(k, _)| tap(k)),
    };
    Ok(DiffSymbol { axis, symbol })
}
