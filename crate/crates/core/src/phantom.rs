//! Analytic test images, evaluated per pixel so any grid size is exact.
//!
//! Coordinates are normalized to `[-1, 1]^2` with `x` increasing to the right
//! and `y` increasing upwards; pixel centers are sampled.

use crate::error::{GeocsError, Result};
use crate::spectral::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhantomKind {
    /// Modified Shepp-Logan head phantom (10 ellipses, values in `[0, 1]`).
    SheppLogan,
    /// Piecewise-smooth composite: a smooth ramp and Gaussian bumps over
    /// regions bounded by smooth closed curves.
    SmoothBumps,
    /// Smooth background with oriented sinusoidal patches.
    Textured,
}

impl PhantomKind {
    pub const ALL: [PhantomKind; 3] = [
        PhantomKind::SheppLogan,
        PhantomKind::SmoothBumps,
        PhantomKind::Textured,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::SheppLogan => "shepp_logan",
            PhantomKind::SmoothBumps => "smooth_bumps",
            PhantomKind::Textured => "textured",
        }
    }
}

impl std::str::FromStr for PhantomKind {
    type Err = GeocsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "shepp_logan" | "shepplogan" => Ok(PhantomKind::SheppLogan),
            "smooth_bumps" | "bumps" => Ok(PhantomKind::SmoothBumps),
            "textured" | "texture" => Ok(PhantomKind::Textured),
            other => Err(GeocsError::InvalidParameter(format!("unknown phantom `{other}`"))),
        }
    }
}

/// Smallest supported phantom side.
pub const MIN_SIDE: usize = 32;

pub fn phantom(kind: PhantomKind, n: usize) -> Result<Image> {
    if n < MIN_SIDE {
        return Err(GeocsError::Dimension(format!(
            "phantom side must be >= {MIN_SIDE}, got {n}"
        )));
    }
    let f = match kind {
        PhantomKind::SheppLogan => shepp_logan_at,
        PhantomKind::SmoothBumps => smooth_bumps_at,
        PhantomKind::Textured => textured_at,
    };
    Image::from_fn(n, |(r, c)| {
        let (x, y) = pixel_center(r, c, n);
        f(x, y).clamp(0.0, 1.0)
    })
}

/// Normalized coordinates of pixel `(row, col)`.
pub fn pixel_center(row: usize, col: usize, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let x = (2.0 * col as f64 + 1.0 - nf) / nf;
    let y = (nf - 1.0 - 2.0 * row as f64) / nf;
    (x, y)
}

/// `(intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)`.
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0],
    [-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0],
    [-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0],
    [0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0],
    [0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0],
    [0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0],
    [0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0],
    [0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0],
    [0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0],
];

fn shepp_logan_at(x: f64, y: f64) -> f64 {
    SHEPP_LOGAN
        .iter()
        .filter(|e| {
            let (sin, cos) = e[5].to_radians().sin_cos();
            let (dx, dy) = (x - e[3], y - e[4]);
            let xr = dx * cos + dy * sin;
            let yr = -dx * sin + dy * cos;
            (xr / e[1]).powi(2) + (yr / e[2]).powi(2) <= 1.0
        })
        .map(|e| e[0])
        .sum()
}

/// Isotropic Gaussian bump `amplitude * exp(-|p - p0|^2 / (2 width^2))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub x0: f64,
    pub y0: f64,
    pub amplitude: f64,
    pub width: f64,
}

impl Bump {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let d2 = (x - self.x0).powi(2) + (y - self.y0).powi(2);
        self.amplitude * (-d2 / (2.0 * self.width * self.width)).exp()
    }

    /// Analytic gradient `(d/dx, d/dy)`.
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let v = self.value(x, y);
        let s2 = self.width * self.width;
        (-(x - self.x0) / s2 * v, -(y - self.y0) / s2 * v)
    }
}

/// Bumps of the smooth part of [`PhantomKind::SmoothBumps`].
pub const SMOOTH_BUMPS: [Bump; 4] = [
    Bump { x0: -0.45, y0: 0.40, amplitude: 0.25, width: 0.18 },
    Bump { x0: 0.35, y0: 0.45, amplitude: 0.20, width: 0.25 },
    Bump { x0: 0.05, y0: -0.50, amplitude: 0.22, width: 0.15 },
    Bump { x0: 0.50, y0: -0.30, amplitude: 0.15, width: 0.30 },
];

/// Background ramp of [`PhantomKind::SmoothBumps`]: `0.2 + 0.08 x + 0.05 y`.
pub const SMOOTH_BUMPS_RAMP: [f64; 3] = [0.2, 0.08, 0.05];

/// Smooth (bump + ramp) part of [`PhantomKind::SmoothBumps`].
pub fn smooth_bumps_smooth_part(x: f64, y: f64) -> f64 {
    let [c, gx, gy] = SMOOTH_BUMPS_RAMP;
    c + gx * x + gy * y + SMOOTH_BUMPS.iter().map(|b| b.value(x, y)).sum::<f64>()
}

/// Piecewise-constant offset of [`PhantomKind::SmoothBumps`]; region
/// boundaries are smooth closed curves.
pub fn smooth_bumps_regions(x: f64, y: f64) -> f64 {
    let mut offset = 0.0;
    // rotated ellipse
    let (sin, cos) = 0.5f64.sin_cos();
    let (dx, dy) = (x + 0.30, y - 0.05);
    let (xr, yr) = (dx * cos + dy * sin, -dx * sin + dy * cos);
    if (xr / 0.42).powi(2) + (yr / 0.25).powi(2) <= 1.0 {
        offset += 0.25;
    }
    // three-lobed blob r(theta) = 0.28 (1 + 0.2 cos 3 theta)
    let (dx, dy) = (x - 0.40, y + 0.10);
    let r = dx.hypot(dy);
    let theta = dy.atan2(dx);
    if r <= 0.28 * (1.0 + 0.2 * (3.0 * theta).cos()) {
        offset += 0.3;
    }
    // superellipse |x|^4 + |y|^4 <= R^4
    let (dx, dy) = (x + 0.05, y + 0.62);
    if (dx / 0.22).powi(4) + (dy / 0.16).powi(4) <= 1.0 {
        offset -= 0.12;
    }
    offset
}

fn smooth_bumps_at(x: f64, y: f64) -> f64 {
    smooth_bumps_smooth_part(x, y) + smooth_bumps_regions(x, y)
}

/// Oriented stripe patch inside a hard-edged disc.
struct Patch {
    x0: f64,
    y0: f64,
    radius: f64,
    /// Cycles per unit length.
    frequency: f64,
    angle_deg: f64,
    amplitude: f64,
    base: f64,
}

const PATCHES: [Patch; 4] = [
    Patch { x0: -0.45, y0: 0.45, radius: 0.35, frequency: 6.0, angle_deg: 30.0, amplitude: 0.15, base: 0.2 },
    Patch { x0: 0.45, y0: 0.40, radius: 0.30, frequency: 9.0, angle_deg: -60.0, amplitude: 0.12, base: 0.15 },
    Patch { x0: -0.35, y0: -0.45, radius: 0.32, frequency: 4.0, angle_deg: 90.0, amplitude: 0.18, base: -0.1 },
    Patch { x0: 0.45, y0: -0.45, radius: 0.28, frequency: 7.0, angle_deg: 0.0, amplitude: 0.10, base: 0.25 },
];

fn textured_at(x: f64, y: f64) -> f64 {
    use std::f64::consts::PI;
    let mut value = 0.45 + 0.1 * (PI * x * 0.7).cos() * (PI * y * 0.5).cos();
    for p in &PATCHES {
        let (dx, dy) = (x - p.x0, y - p.y0);
        if dx.hypot(dy) <= p.radius {
            let (sin, cos) = p.angle_deg.to_radians().sin_cos();
            let phase = 2.0 * PI * p.frequency * (dx * cos + dy * sin);
            value += p.base + p.amplitude * phase.sin();
        }
    }
    value
}
