//! Soft-thresholding and edge-adaptive TV weights.

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{GeocsError, Result};
use crate::spectral::{diff_forward, Axis, Image};

/// Scalar soft threshold `sgn(v) max(|v| - delta, 0)`.
#[inline]
pub fn shrink_scalar(v: f64, delta: f64) -> f64 {
    let mag = v.abs() - delta;
    if mag > 0.0 {
        mag.copysign(v)
    } else {
        0.0
    }
}

/// Complex soft threshold `z / |z| * max(|z| - delta, 0)`, the proximal map
/// of `delta * |z|`. Agrees with [`shrink_scalar`] on the real axis.
#[inline]
pub fn shrink_complex(z: Complex64, delta: f64) -> Complex64 {
    let mag = z.norm();
    if mag > delta {
        z * ((mag - delta) / mag)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

fn check_threshold(delta: f64) -> Result<()> {
    if !(delta >= 0.0) {
        return Err(GeocsError::InvalidParameter(format!(
            "shrink threshold must be >= 0, got {delta}"
        )));
    }
    Ok(())
}

/// Elementwise soft threshold with a scalar threshold.
pub fn shrink(v: &Array2<f64>, delta: f64) -> Result<Array2<f64>> {
    check_threshold(delta)?;
    Ok(v.mapv(|x| shrink_scalar(x, delta)))
}

/// Elementwise soft threshold with a per-entry threshold.
pub fn shrink_field(v: &Array2<f64>, delta: &Array2<f64>) -> Result<Array2<f64>> {
    if v.dim() != delta.dim() {
        return Err(GeocsError::Dimension(format!(
            "threshold shape {:?} does not match input {:?}",
            delta.dim(),
            v.dim()
        )));
    }
    delta.iter().try_for_each(|&d| check_threshold(d))?;
    Ok(Zip::from(v).and(delta).map_collect(|&x, &d| shrink_scalar(x, d)))
}

/// The four edge-stopping profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeStopKind {
    Lorentzian,
    LeClerc,
    Tukey,
    Weickert,
}

impl EdgeStopKind {
    pub const ALL: [EdgeStopKind; 4] = [
        EdgeStopKind::Lorentzian,
        EdgeStopKind::LeClerc,
        EdgeStopKind::Tukey,
        EdgeStopKind::Weickert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EdgeStopKind::Lorentzian => "lorentzian",
            EdgeStopKind::LeClerc => "leclerc",
            EdgeStopKind::Tukey => "tukey",
            EdgeStopKind::Weickert => "weickert",
        }
    }
}

impl std::str::FromStr for EdgeStopKind {
    type Err = GeocsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lorentzian" | "lor" => Ok(EdgeStopKind::Lorentzian),
            "leclerc" | "le_clerc" | "lec" => Ok(EdgeStopKind::LeClerc),
            "tukey" | "tuk" => Ok(EdgeStopKind::Tukey),
            "weickert" | "wei" => Ok(EdgeStopKind::Weickert),
            other => Err(GeocsError::InvalidParameter(format!(
                "unknown edge-stopping function `{other}`"
            ))),
        }
    }
}

/// Non-increasing map `[0, inf) -> [0, 1]` with `g(0) = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeStop {
    kind: EdgeStopKind,
    h: f64,
}

/// Constant in the Weickert diffusivity.
const WEICKERT_C: f64 = 3.31488;

impl EdgeStop {
    pub const DEFAULT_H: f64 = 0.1;

    pub fn new(kind: EdgeStopKind, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(GeocsError::InvalidParameter(format!(
                "edge-stopping scale h must be positive, got {h}"
            )));
        }
        Ok(Self { kind, h })
    }

    pub fn kind(&self) -> EdgeStopKind {
        self.kind
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn eval(&self, x: f64) -> f64 {
        let h = self.h;
        let x = x.abs();
        match self.kind {
            EdgeStopKind::Lorentzian => 1.0 / (1.0 + (x * x) / (h * h)),
            EdgeStopKind::LeClerc => (-(x * x) / (h * h)).exp(),
            EdgeStopKind::Tukey => {
                if x < 5f64.sqrt() * h {
                    let q = 1.0 - (x * x) / (5.0 * h * h);
                    q * q
                } else {
                    0.0
                }
            }
            EdgeStopKind::Weickert => {
                if x == 0.0 {
                    1.0
                } else {
                    // (h/x)^8 overflows to inf for tiny x, giving exactly 1
                    1.0 - (-WEICKERT_C * (h / x).powi(8)).exp()
                }
            }
        }
    }

    pub fn eval_grid(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.iter().any(|&v| !(v >= 0.0)) {
            return Err(GeocsError::InvalidParameter(
                "edge-stopping input must be nonnegative".into(),
            ));
        }
        Ok(x.mapv(|v| self.eval(v)))
    }
}

impl Default for EdgeStop {
    fn default() -> Self {
        Self {
            kind: EdgeStopKind::Tukey,
            h: Self::DEFAULT_H,
        }
    }
}

/// Per-axis TV weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl WeightField {
    pub fn ones(n: usize) -> Self {
        Self {
            w1: Array2::ones((n, n)),
            w2: Array2::ones((n, n)),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            w1: Array2::zeros((n, n)),
            w2: Array2::zeros((n, n)),
        }
    }

    pub fn axis(&self, axis: Axis) -> &Array2<f64> {
        match axis {
            Axis::Horizontal => &self.w1,
            Axis::Vertical => &self.w2,
        }
    }
}

/// `w_i = g(|D_i u_ref|)` per axis.
pub fn build_weights(u_ref: &Image, g: &EdgeStop) -> WeightField {
    WeightField {
        w1: diff_forward(u_ref.data(), Axis::Horizontal).mapv(|d| g.eval(d.abs())),
        w2: diff_forward(u_ref.data(), Axis::Vertical).mapv(|d| g.eval(d.abs())),
    }
}

/// Same as [`build_weights`] on a complex iterate, using the modulus of the
/// differences.
pub fn build_weights_complex(u_ref: &Array2<Complex64>, g: &EdgeStop) -> WeightField {
    WeightField {
        w1: diff_forward(u_ref, Axis::Horizontal).mapv(|d| g.eval(d.norm())),
        w2: diff_forward(u_ref, Axis::Vertical).mapv(|d| g.eval(d.norm())),
    }
}
