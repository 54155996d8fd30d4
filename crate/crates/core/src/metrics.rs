//! Reconstruction quality measures.

use crate::error::{GeocsError, Result};
use crate::spectral::Image;

fn check_pair(u: &Image, truth: &Image) -> Result<()> {
    if u.n() != truth.n() {
        return Err(GeocsError::Dimension(format!(
            "image side {} does not match reference side {}",
            u.n(),
            truth.n()
        )));
    }
    Ok(())
}

fn diff_energy(u: &Image, truth: &Image) -> f64 {
    u.data()
        .iter()
        .zip(truth.data().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// `||u - u_true||^2 / ||u_true||^2`.
pub fn relerr_squared(u: &Image, truth: &Image) -> Result<f64> {
    check_pair(u, truth)?;
    let reference = truth.data().iter().map(|x| x * x).sum::<f64>();
    if reference == 0.0 {
        return Err(GeocsError::InvalidParameter(
            "relative error undefined for a zero reference".into(),
        ));
    }
    Ok(diff_energy(u, truth) / reference)
}

/// `||u - u_true|| / ||u_true||`.
pub fn relerr(u: &Image, truth: &Image) -> Result<f64> {
    relerr_squared(u, truth).map(f64::sqrt)
}

/// `10 log10(||u.^2 + u_true.^2||^2 / ||u - u_true||^2)` in dB; `+inf` when
/// the images are identical.
pub fn snr(u: &Image, truth: &Image) -> Result<f64> {
    check_pair(u, truth)?;
    let err = diff_energy(u, truth);
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let signal: f64 = u
        .data()
        .iter()
        .zip(truth.data().iter())
        .map(|(a, b)| {
            let s = a * a + b * b;
            s * s
        })
        .sum();
    Ok(10.0 * (signal / err).log10())
}

/// Quality of one reconstruction against ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct QualityReport {
    pub relerr_sq: f64,
    pub relerr: f64,
    pub snr_db: f64,
    pub seconds: f64,
    pub iterations_stage1: usize,
    pub iterations_stage2: usize,
}

impl QualityReport {
    pub fn evaluate(u: &Image, truth: &Image) -> Result<Self> {
        let relerr_sq = relerr_squared(u, truth)?;
        Ok(Self {
            relerr_sq,
            relerr: relerr_sq.sqrt(),
            snr_db: snr(u, truth)?,
            seconds: 0.0,
            iterations_stage1: 0,
            iterations_stage2: 0,
        })
    }
}
