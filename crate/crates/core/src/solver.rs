//! Split Bregman solver for the two reconstruction stages.
//!
//! Stage I minimizes
//!
//! ```text
//! beta * sum_i ||D_i u||_1 + lambda * sum_i ||SH_i(u)||_1 + 1/2 ||P F u - b||^2
//! ```
//!
//! by splitting `r_i = D_i u`, `s_i = SH_i(u)` and iterating
//!
//! ```text
//! r_i <- shrink(D_i u + v_i, 1/mu)
//! s_i <- shrink(SH_i(u) + t_i, 1/tau)
//! u   <- F^-1 [ (beta mu sum conj(d_i) F(r_i - v_i) + lambda tau sum H_i F(s_i - t_i) + P^* b)
//!              ./ (beta mu sum |d_i|^2 + lambda tau sum H_i^2 + P^* P) ]
//! v_i <- v_i + gamma (D_i u - r_i)
//! t_i <- t_i + gamma (SH_i(u) - s_i)
//! ```
//!
//! Multipliers are stored in scaled form: `v` and `t` enter the shrink inputs
//! and the u-update numerator without a `mu` or `tau` factor. This is scaled
//! ADMM with penalty `beta * mu` (resp. `lambda * tau`) and dual step `gamma`.
//!
//! Stage II replaces the TV threshold with the field `w_i / mu`, where the
//! weights are rebuilt from the current iterate before every inner solve.
//!
//! The iterate `u` stays complex for the whole run (noise is complex); the
//! returned image is its real part clamped to `[0, 1]`.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{GeocsError, Result};
use crate::prox::{build_weights_complex, shrink_complex, EdgeStop, WeightField};
use crate::sampling::Measurement;
use crate::shearlet::{ShearletSystem, SubbandStack};
use crate::spectral::{complex_norm, diff_adjoint, diff_forward, diff_symbol, Axis, DiffSymbol, Fft2, Image};

/// Upper bound on the dual step for which convergence is guaranteed.
pub const GAMMA_MAX: f64 = 1.618_033_988_749_895;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverParams {
    /// TV weight.
    pub beta: f64,
    /// Shearlet l1 weight.
    pub lambda: f64,
    /// TV splitting penalty.
    pub mu: f64,
    /// Shearlet splitting penalty.
    pub tau: f64,
    /// Bregman (dual) step.
    pub gamma: f64,
    /// Relative change `||u+ - u|| / max(||u||, 1)` ending an inner loop.
    pub tol_inner: f64,
    /// Relative change between reweightings ending Stage II.
    pub tol_outer: f64,
    pub max_iter_stage1: usize,
    /// Cap for one weighted inner solve.
    pub max_iter_stage2_inner: usize,
    /// Cap on the number of reweightings.
    pub max_iter_stage2_outer: usize,
    /// Cap on the total number of Stage II inner iterations.
    pub stage2_budget: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            beta: 1e-5,
            lambda: 1e-5,
            mu: 100.0,
            tau: 100.0,
            gamma: 1.0,
            tol_inner: 1e-5,
            tol_outer: 1e-4,
            max_iter_stage1: 1000,
            max_iter_stage2_inner: 100,
            max_iter_stage2_outer: 10,
            stage2_budget: 100,
        }
    }
}

/// Non-fatal parameter advice.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamWarning {
    /// `gamma` is convergent but outside `[1, (sqrt 5 + 1)/2]`, where
    /// convergence is usually fastest.
    SlowGamma(f64),
}

impl std::fmt::Display for ParamWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamWarning::SlowGamma(g) => write!(
                f,
                "gamma = {g} is outside [1, {GAMMA_MAX:.4}]; convergence may be slow"
            ),
        }
    }
}

/// Accepts iff `mu, tau > 0`, `beta, lambda >= 0` and `0 < gamma < (sqrt 5 + 1)/2`.
pub fn validate_params(p: &SolverParams) -> Result<Vec<ParamWarning>> {
    let bad = |what: String| Err(GeocsError::InvalidParameter(what));
    if !(p.mu > 0.0) || !p.mu.is_finite() {
        return bad(format!("mu must be positive, got {}", p.mu));
    }
    if !(p.tau > 0.0) || !p.tau.is_finite() {
        return bad(format!("tau must be positive, got {}", p.tau));
    }
    if !(p.beta >= 0.0) || !p.beta.is_finite() {
        return bad(format!("beta must be >= 0, got {}", p.beta));
    }
    if !(p.lambda >= 0.0) || !p.lambda.is_finite() {
        return bad(format!("lambda must be >= 0, got {}", p.lambda));
    }
    if !(p.gamma > 0.0 && p.gamma < GAMMA_MAX) {
        return bad(format!(
            "gamma must lie in (0, {GAMMA_MAX:.6}), got {}",
            p.gamma
        ));
    }
    if !(p.tol_inner >= 0.0) || !(p.tol_outer >= 0.0) {
        return bad("tolerances must be >= 0".into());
    }
    let mut warnings = Vec::new();
    if p.gamma < 1.0 {
        warnings.push(ParamWarning::SlowGamma(p.gamma));
    }
    Ok(warnings)
}

/// Full iterate of the splitting scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub u: Array2<Complex64>,
    /// TV splitting variables, `[horizontal, vertical]`.
    pub r: [Array2<Complex64>; 2],
    /// Scaled TV multipliers.
    pub v: [Array2<Complex64>; 2],
    /// Shearlet splitting variables.
    pub s: SubbandStack,
    /// Scaled shearlet multipliers.
    pub t: SubbandStack,
    pub iter: usize,
    pub last_delta: f64,
}

impl SolverState {
    pub fn zeros(n: usize, bands: usize) -> Self {
        let z = Array2::zeros((n, n));
        Self {
            u: z.clone(),
            r: [z.clone(), z.clone()],
            v: [z.clone(), z],
            s: SubbandStack::zeros(bands, n),
            t: SubbandStack::zeros(bands, n),
            iter: 0,
            last_delta: f64::INFINITY,
        }
    }
}

/// Per-iteration progress.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub stage: u8,
    /// Reweighting index in Stage II, 0 in Stage I.
    pub outer: usize,
    /// Iteration counter within the current inner loop, starting at 1.
    pub iter: usize,
    pub delta: f64,
    /// Value of the (weighted) model objective at the new iterate.
    pub objective: f64,
    /// `sqrt(sum_i ||D_i u - r_i||^2)`.
    pub tv_gap: f64,
    /// `sqrt(sum_i ||SH_i(u) - s_i||^2)`.
    pub shearlet_gap: f64,
}

/// Result of one stage.
#[derive(Clone, Debug)]
pub struct StageOutput {
    pub image: Image,
    pub state: SolverState,
    /// Inner iterations performed in this stage.
    pub iterations: usize,
    /// Reweightings performed (Stage II only).
    pub outer_iterations: usize,
    pub converged: bool,
    /// Weights used in the last Stage II pass.
    pub weights: Option<WeightField>,
}

/// Outcome of a single inner loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerOutcome {
    pub iterations: usize,
    pub converged: bool,
}

/// Shrink thresholds for the TV splitting variables.
#[derive(Clone, Copy, Debug)]
pub enum TvThreshold<'w> {
    /// `1 / mu` everywhere.
    Uniform,
    /// `w_i / mu` per pixel.
    Weighted(&'w WeightField),
}

/// Everything that stays fixed during a reconstruction: FFT plan, operator
/// symbols, zero-filled data and the u-update denominator.
pub struct Reconstructor<'a> {
    params: SolverParams,
    system: &'a ShearletSystem,
    measurement: &'a Measurement,
    fft: Fft2,
    diffs: [DiffSymbol; 2],
    sampled: Array2<f64>,
    b_hat: Array2<Complex64>,
    denom: Array2<f64>,
}

impl<'a> Reconstructor<'a> {
    pub fn new(
        measurement: &'a Measurement,
        system: &'a ShearletSystem,
        params: SolverParams,
    ) -> Result<Self> {
        validate_params(&params)?;
        let n = measurement.n();
        if system.n() != n {
            return Err(GeocsError::Dimension(format!(
                "shearlet system side {} does not match measurement side {n}",
                system.n()
            )));
        }
        let fft = Fft2::new(n)?;
        let diffs = [diff_symbol(n, Axis::Horizontal)?, diff_symbol(n, Axis::Vertical)?];
        let sampled = measurement.mask.indicator();
        let tv = &diffs[0].power() + &diffs[1].power();
        let bm = params.beta * params.mu;
        let lt = params.lambda * params.tau;
        let denom = Zip::from(&tv)
            .and(&system.mask_energy())
            .and(&sampled)
            .map_collect(|&d, &h, &p| bm * d + lt * h + p);
        if denom.iter().any(|&d| !(d >= 0.0)) {
            return Err(GeocsError::InvalidParameter(
                "u-update denominator has negative entries".into(),
            ));
        }
        Ok(Self {
            params,
            system,
            measurement,
            fft,
            diffs,
            sampled,
            b_hat: measurement.zero_filled(),
            denom,
        })
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn measurement(&self) -> &Measurement {
        self.measurement
    }

    pub fn n(&self) -> usize {
        self.fft.n()
    }

    pub fn system(&self) -> &ShearletSystem {
        self.system
    }

    /// Denominator of the Fourier-domain u-update.
    pub fn denominator(&self) -> &Array2<f64> {
        &self.denom
    }

    /// All-zero starting state.
    pub fn initial_state(&self) -> SolverState {
        SolverState::zeros(self.n(), self.system.len())
    }

    fn check_state(&self, state: &SolverState) -> Result<()> {
        let n = self.n();
        let dims_ok = state.u.dim() == (n, n)
            && state.r.iter().chain(&state.v).all(|a| a.dim() == (n, n))
            && state.s.len() == self.system.len()
            && state.t.len() == self.system.len()
            && state
                .s
                .bands
                .iter()
                .chain(&state.t.bands)
                .all(|a| a.dim() == (n, n));
        if dims_ok {
            Ok(())
        } else {
            Err(GeocsError::Dimension(
                "solver state does not match the problem size".into(),
            ))
        }
    }

    /// Minimizer of the quadratic u-subproblem for the current splitting
    /// variables and multipliers. Returns `(u, F u)`.
    fn solve_u(&self, state: &SolverState) -> (Array2<Complex64>, Array2<Complex64>) {
        let p = &self.params;
        let bm = p.beta * p.mu;
        let lt = p.lambda * p.tau;
        let mut numer = self.b_hat.clone();
        if bm != 0.0 {
            for i in 0..2 {
                let mut diff = &state.r[i] - &state.v[i];
                self.fft.forward_inplace(&mut diff);
                Zip::from(&mut numer)
                    .and(&diff)
                    .and(&self.diffs[i].symbol)
                    .for_each(|acc, &x, &d| *acc += bm * d.conj() * x);
            }
        }
        if lt != 0.0 {
            let residual = SubbandStack {
                bands: state
                    .s
                    .bands
                    .par_iter()
                    .zip(state.t.bands.par_iter())
                    .map(|(s, t)| s - t)
                    .collect(),
            };
            let shear = self
                .system
                .adjoint_spectrum(&self.fft, &residual)
                .expect("state shape checked");
            numer.zip_mut_with(&shear, |acc, &x| *acc += lt * x);
        }
        // 0/0 = 0
        Zip::from(&mut numer).and(&self.denom).for_each(|z, &d| {
            *z = if d == 0.0 { Complex64::new(0.0, 0.0) } else { *z / d };
        });
        let u_hat = numer;
        let u = self.fft.inverse(&u_hat);
        (u, u_hat)
    }

    /// Closed-form u-update for the given state.
    pub fn u_update(&self, state: &SolverState) -> Result<Array2<Complex64>> {
        self.check_state(state)?;
        Ok(self.solve_u(state).0)
    }

    /// Max-abs residual of the u-subproblem normal equation
    /// `beta mu sum D_i^T (D_i u - r_i + v_i) + lambda tau sum M_i^* (M_i u - s_i + t_i)
    ///  + (P F)^* (P F u - b) = 0`, evaluated in the spatial domain.
    pub fn normal_equation_residual(&self, state: &SolverState, u: &Array2<Complex64>) -> f64 {
        let p = &self.params;
        let bm = p.beta * p.mu;
        let lt = p.lambda * p.tau;
        let mut total = Array2::<Complex64>::zeros(u.dim());
        for (i, axis) in Axis::BOTH.into_iter().enumerate() {
            let inner = &(&diff_forward(u, axis) - &state.r[i]) + &state.v[i];
            total.scaled_add(Complex64::new(bm, 0.0), &diff_adjoint(&inner, axis));
        }
        let u_hat = self.fft.forward(u);
        let shu = self.system.analyze_spectrum(&self.fft, &u_hat);
        let inner = SubbandStack {
            bands: shu
                .bands
                .iter()
                .zip(&state.s.bands)
                .zip(&state.t.bands)
                .map(|((a, s), t)| &(a - s) + t)
                .collect(),
        };
        let mut shear = self
            .system
            .adjoint_spectrum(&self.fft, &inner)
            .expect("shapes match");
        self.fft.inverse_inplace(&mut shear);
        total.scaled_add(Complex64::new(lt, 0.0), &shear);
        let mut data = Zip::from(&u_hat)
            .and(&self.sampled)
            .and(&self.b_hat)
            .map_collect(|&z, &k, &b| k * z - b);
        self.fft.inverse_inplace(&mut data);
        total += &data;
        total.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn objective(
        &self,
        du: &[Array2<Complex64>; 2],
        shu: &SubbandStack,
        u_hat: &Array2<Complex64>,
        weights: Option<&WeightField>,
    ) -> f64 {
        let p = &self.params;
        let tv: f64 = match weights {
            None => du.iter().flat_map(|d| d.iter()).map(|z| z.norm()).sum(),
            Some(w) => du
                .iter()
                .zip([&w.w1, &w.w2])
                .flat_map(|(d, w)| d.iter().zip(w.iter()))
                .map(|(z, w)| w * z.norm())
                .sum(),
        };
        let sh: f64 = shu.bands.iter().flat_map(|b| b.iter()).map(|z| z.norm()).sum();
        let fit: f64 = Zip::from(u_hat)
            .and(&self.sampled)
            .and(&self.b_hat)
            .fold(0.0, |acc, &z, &k, &b| acc + (k * z - b).norm_sqr());
        p.beta * tv + p.lambda * sh + 0.5 * fit
    }

    /// Runs up to `max_iter` splitting iterations starting from `state`.
    ///
    /// Stops early once `||u+ - u|| / max(||u||, 1) <= tol`.
    pub fn run_inner(
        &self,
        state: &mut SolverState,
        threshold: TvThreshold<'_>,
        max_iter: usize,
        tol: f64,
        stage: u8,
        outer: usize,
        observer: &mut dyn FnMut(&IterationRecord),
    ) -> Result<InnerOutcome> {
        self.check_state(state)?;
        if let TvThreshold::Weighted(w) = threshold {
            let n = self.n();
            if w.w1.dim() != (n, n) || w.w2.dim() != (n, n) {
                return Err(GeocsError::Dimension("weight field shape mismatch".into()));
            }
        }
        let p = &self.params;
        let gamma = Complex64::new(p.gamma, 0.0);
        let inv_mu = 1.0 / p.mu;
        let inv_tau = 1.0 / p.tau;

        let mut du = [
            diff_forward(&state.u, Axis::Horizontal),
            diff_forward(&state.u, Axis::Vertical),
        ];
        let mut shu = self
            .system
            .analyze_spectrum(&self.fft, &self.fft.forward(&state.u));

        for k in 1..=max_iter {
            for i in 0..2 {
                let input = &du[i] + &state.v[i];
                state.r[i] = match threshold {
                    TvThreshold::Uniform => input.mapv(|z| shrink_complex(z, inv_mu)),
                    TvThreshold::Weighted(w) => Zip::from(&input)
                        .and(w.axis(Axis::BOTH[i]))
                        .map_collect(|&z, &wi| shrink_complex(z, wi / p.mu)),
                };
            }
            state
                .s
                .bands
                .par_iter_mut()
                .zip(shu.bands.par_iter())
                .zip(state.t.bands.par_iter())
                .for_each(|((s, a), t)| {
                    *s = Zip::from(a)
                        .and(t)
                        .map_collect(|&a, &t| shrink_complex(a + t, inv_tau));
                });

            let (u_new, _) = self.solve_u(state);
            if u_new.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(GeocsError::Divergence {
                    iterate: "u",
                    iteration: state.iter + 1,
                });
            }
            if cfg!(debug_assertions) && k % 50 == 0 {
                let res = self.normal_equation_residual(state, &u_new);
                debug_assert!(res < 1e-8, "u-update normal equation residual {res:e}");
            }

            du = [
                diff_forward(&u_new, Axis::Horizontal),
                diff_forward(&u_new, Axis::Vertical),
            ];
            // Re-transforming u (rather than reusing the solve's spectrum) keeps
            // a resumed run bit-identical to an uninterrupted one.
            let u_hat = self.fft.forward(&u_new);
            shu = self.system.analyze_spectrum(&self.fft, &u_hat);

            let mut tv_gap = 0.0;
            for i in 0..2 {
                Zip::from(&mut state.v[i])
                    .and(&du[i])
                    .and(&state.r[i])
                    .for_each(|v, &d, &r| {
                        let gap = d - r;
                        tv_gap += gap.norm_sqr();
                        *v += gamma * gap;
                    });
            }
            let shearlet_gap: f64 = state
                .t
                .bands
                .par_iter_mut()
                .zip(shu.bands.par_iter())
                .zip(state.s.bands.par_iter())
                .map(|((t, a), s)| {
                    let mut acc = 0.0;
                    Zip::from(t).and(a).and(s).for_each(|t, &a, &s| {
                        let gap = a - s;
                        acc += gap.norm_sqr();
                        *t += gamma * gap;
                    });
                    acc
                })
                .collect::<Vec<f64>>()
                .iter()
                .sum();
            if !tv_gap.is_finite() {
                return Err(GeocsError::Divergence {
                    iterate: "v",
                    iteration: state.iter + 1,
                });
            }
            if !shearlet_gap.is_finite() {
                return Err(GeocsError::Divergence {
                    iterate: "t",
                    iteration: state.iter + 1,
                });
            }

            let change = complex_norm(&(&u_new - &state.u));
            let delta = change / complex_norm(&state.u).max(1.0);
            state.u = u_new;
            state.iter += 1;
            state.last_delta = delta;

            let weights = match threshold {
                TvThreshold::Uniform => None,
                TvThreshold::Weighted(w) => Some(w),
            };
            observer(&IterationRecord {
                stage,
                outer,
                iter: k,
                delta,
                objective: self.objective(&du, &shu, &u_hat, weights),
                tv_gap: tv_gap.sqrt(),
                shearlet_gap: shearlet_gap.sqrt(),
            });

            if delta <= tol {
                return Ok(InnerOutcome {
                    iterations: k,
                    converged: true,
                });
            }
        }
        Ok(InnerOutcome {
            iterations: max_iter,
            converged: false,
        })
    }

    /// Stage I from the all-zero state.
    pub fn stage1(&self, observer: &mut dyn FnMut(&IterationRecord)) -> Result<StageOutput> {
        let mut state = self.initial_state();
        let outcome = self.run_inner(
            &mut state,
            TvThreshold::Uniform,
            self.params.max_iter_stage1,
            self.params.tol_inner,
            1,
            0,
            observer,
        )?;
        Ok(StageOutput {
            image: realize(&state.u)?,
            state,
            iterations: outcome.iterations,
            outer_iterations: 0,
            converged: outcome.converged,
            weights: None,
        })
    }

    /// One weighted inner solve warm-started from `state`.
    pub fn stage2_inner(
        &self,
        state: &mut SolverState,
        weights: &WeightField,
        max_iter: usize,
        observer: &mut dyn FnMut(&IterationRecord),
    ) -> Result<InnerOutcome> {
        self.run_inner(
            state,
            TvThreshold::Weighted(weights),
            max_iter,
            self.params.tol_inner,
            2,
            0,
            observer,
        )
    }

    /// Stage II: alternate weight rebuilding and weighted solves, starting
    /// from the Stage I state, until the change between reweightings is at
    /// most `tol_outer` or a cap is reached.
    pub fn stage2(
        &self,
        mut state: SolverState,
        g: &EdgeStop,
        observer: &mut dyn FnMut(&IterationRecord),
    ) -> Result<StageOutput> {
        let p = &self.params;
        let mut used = 0;
        let mut outer = 0;
        let mut converged = false;
        let mut last_weights = None;
        while outer < p.max_iter_stage2_outer && used < p.stage2_budget {
            let weights = build_weights_complex(&state.u, g);
            let previous = state.u.clone();
            let cap = p.max_iter_stage2_inner.min(p.stage2_budget - used);
            let outcome = self.run_inner(
                &mut state,
                TvThreshold::Weighted(&weights),
                cap,
                p.tol_inner,
                2,
                outer,
                observer,
            )?;
            used += outcome.iterations;
            outer += 1;
            last_weights = Some(weights);
            let change = complex_norm(&(&state.u - &previous)) / complex_norm(&previous).max(1.0);
            if change <= p.tol_outer {
                converged = true;
                break;
            }
        }
        Ok(StageOutput {
            image: realize(&state.u)?,
            state,
            iterations: used,
            outer_iterations: outer,
            converged,
            weights: last_weights,
        })
    }
}

/// Real part clamped to `[0, 1]`.
pub fn realize(u: &Array2<Complex64>) -> Result<Image> {
    Ok(Image::from_real_part(u)?.clamp_unit())
}

/// Both stages in sequence.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub stage1: StageOutput,
    pub stage2: Option<StageOutput>,
}

impl Reconstruction {
    /// Output of the last stage that ran.
    pub fn final_output(&self) -> &StageOutput {
        self.stage2.as_ref().unwrap_or(&self.stage1)
    }
}

/// Runs Stage I and, when `edge_stop` is given, Stage II.
pub fn reconstruct(
    measurement: &Measurement,
    system: &ShearletSystem,
    params: &SolverParams,
    edge_stop: Option<&EdgeStop>,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<Reconstruction> {
    let solver = Reconstructor::new(measurement, system, params.clone())?;
    let stage1 = solver.stage1(observer)?;
    let stage2 = match edge_stop {
        Some(g) => Some(solver.stage2(stage1.state.clone(), g, observer)?),
        None => None,
    };
    Ok(Reconstruction { stage1, stage2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{adjoint_sample, radial_mask, sample, sample_complex, SamplingMask};
    use crate::spectral::Image;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(n: usize, rng: &mut ChaCha8Rng) -> Array2<Complex64> {
        Array2::from_shape_fn((n, n), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_state(n: usize, bands: usize, seed: u64) -> SolverState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut st = SolverState::zeros(n, bands);
        st.u = random_grid(n, &mut rng);
        for i in 0..2 {
            st.r[i] = random_grid(n, &mut rng);
            st.v[i] = random_grid(n, &mut rng);
        }
        for b in 0..bands {
            st.s.bands[b] = random_grid(n, &mut rng);
            st.t.bands[b] = random_grid(n, &mut rng);
        }
        st
    }

    fn noop() -> impl FnMut(&IterationRecord) {
        |_| {}
    }

    #[test]
    fn parameter_bounds() {
        let ok = SolverParams::default();
        assert!(validate_params(&ok).unwrap().is_empty());
        let gamma = |g| SolverParams { gamma: g, ..SolverParams::default() };
        assert!(validate_params(&gamma(1.7)).is_err());
        assert!(validate_params(&gamma(1.6)).unwrap().is_empty());
        assert_eq!(validate_params(&gamma(0.5)).unwrap(), vec![ParamWarning::SlowGamma(0.5)]);
        assert!(validate_params(&gamma(0.0)).is_err());
        assert!(validate_params(&SolverParams { mu: 0.0, ..ok.clone() }).is_err());
        assert!(validate_params(&SolverParams { tau: -1.0, ..ok.clone() }).is_err());
        assert!(validate_params(&SolverParams { beta: -1.0, ..ok.clone() }).is_err());
        assert!(validate_params(&SolverParams { lambda: f64::NAN, ..ok }).is_err());
        assert!((GAMMA_MAX - (5f64.sqrt() + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn denominator_closed_form() {
        let n = 32;
        let sys = ShearletSystem::new(n, 2).unwrap();
        let mask = radial_mask(n, 6, 0).unwrap();
        let m = sample(&Image::zeros(n).unwrap(), &mask).unwrap();
        let params = SolverParams { beta: 0.3, lambda: 0.2, mu: 2.0, tau: 5.0, ..Default::default() };
        let solver = Reconstructor::new(&m, &sys, params).unwrap();
        let nf = n as f64;
        for ((r, c), &d) in solver.denominator().indexed_iter() {
            let tv = 4.0 * (std::f64::consts::PI * r as f64 / nf).sin().powi(2)
                + 4.0 * (std::f64::consts::PI * c as f64 / nf).sin().powi(2);
            let p = if mask.keep()[[r, c]] { 1.0 } else { 0.0 };
            let expect = 0.3 * 2.0 * tv + 0.2 * 5.0 + p;
            assert!((d - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn u_update_solves_normal_equation() {
        let n = 32;
        let sys = ShearletSystem::new(n, 3).unwrap();
        let mask = radial_mask(n, 7, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let truth = random_grid(n, &mut rng);
        let m = sample_complex(&truth, &mask).unwrap();
        let params = SolverParams { beta: 0.01, lambda: 0.02, mu: 3.0, tau: 7.0, ..Default::default() };
        let solver = Reconstructor::new(&m, &sys, params).unwrap();
        let state = random_state(n, sys.len(), 13);
        let u = solver.u_update(&state).unwrap();
        assert!(solver.normal_equation_residual(&state, &u) < 1e-8);
        // a perturbed u does not satisfy it
        let mut off = u.clone();
        off[[3, 4]] += Complex64::new(0.1, 0.0);
        assert!(solver.normal_equation_residual(&state, &off) > 1e-4);
    }

    #[test]
    fn pure_data_term_with_full_sampling() {
        let n = 16;
        let sys = ShearletSystem::new(n, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = Image::from_fn(n, |_| rng.random_range(0.0..1.0)).unwrap();
        let m = sample(&u, &SamplingMask::full(n).unwrap()).unwrap();
        let params = SolverParams { beta: 0.0, lambda: 0.0, ..Default::default() };
        let solver = Reconstructor::new(&m, &sys, params).unwrap();
        let state = random_state(n, sys.len(), 3);
        let got = solver.u_update(&state).unwrap();
        let want = adjoint_sample(&m);
        assert!(complex_norm(&(&got - &want)) < 1e-12);
    }

    #[test]
    fn zero_measurement_is_a_fixed_point() {
        let n = 32;
        let sys = ShearletSystem::new(n, 2).unwrap();
        for lines in [3, 64] {
            let mask = radial_mask(n, lines, 0).unwrap();
            let m = sample(&Image::zeros(n).unwrap(), &mask).unwrap();
            let solver = Reconstructor::new(&m, &sys, SolverParams::default()).unwrap();
            let out = solver.stage1(&mut noop()).unwrap();
            assert!(out.state.u.iter().all(|z| z.norm() == 0.0));
            assert!(out.converged);
            assert!(out.state.last_delta <= solver.params().tol_inner);
        }
    }

    #[test]
    fn rejects_mismatched_system() {
        let m = sample(&Image::zeros(32).unwrap(), &SamplingMask::full(32).unwrap()).unwrap();
        let sys = ShearletSystem::new(64, 2).unwrap();
        assert!(Reconstructor::new(&m, &sys, SolverParams::default()).is_err());
        let sys = ShearletSystem::new(32, 2).unwrap();
        let bad = SolverParams { gamma: 2.0, ..Default::default() };
        assert!(Reconstructor::new(&m, &sys, bad).is_err());
        let solver = Reconstructor::new(&m, &sys, SolverParams::default()).unwrap();
        assert!(solver.u_update(&SolverState::zeros(32, 3)).is_err());
    }

    fn small_problem() -> (Measurement, ShearletSystem) {
        let n = 32;
        let u = crate::phantom::phantom(crate::phantom::PhantomKind::SheppLogan, n).unwrap();
        let mask = radial_mask(n, 8, 0).unwrap();
        (sample(&u, &mask).unwrap(), ShearletSystem::new(n, 2).unwrap())
    }

    #[test]
    fn unit_weights_continue_stage1_bit_identically() {
        let (m, sys) = small_problem();
        let params = SolverParams { tol_inner: 0.0, ..Default::default() };
        let solver = Reconstructor::new(&m, &sys, params).unwrap();
        let mut long = solver.initial_state();
        solver
            .run_inner(&mut long, TvThreshold::Uniform, 30, 0.0, 1, 0, &mut noop())
            .unwrap();
        let mut split = solver.initial_state();
        solver
            .run_inner(&mut split, TvThreshold::Uniform, 20, 0.0, 1, 0, &mut noop())
            .unwrap();
        let ones = WeightField::ones(sys.n());
        solver.stage2_inner(&mut split, &ones, 10, &mut noop()).unwrap();
        assert_eq!(long, split);
    }

    #[test]
    fn zero_weights_make_tv_inert() {
        let (m, sys) = small_problem();
        let solver = Reconstructor::new(&m, &sys, SolverParams::default()).unwrap();
        let mut state = solver.initial_state();
        solver
            .run_inner(&mut state, TvThreshold::Uniform, 15, 0.0, 1, 0, &mut noop())
            .unwrap();
        let u0 = state.u.clone();
        let v0 = state.v.clone();
        solver.stage2_inner(&mut state, &WeightField::zeros(sys.n()), 1, &mut noop()).unwrap();
        for (i, axis) in Axis::BOTH.into_iter().enumerate() {
            assert_eq!(state.r[i], &diff_forward(&u0, axis) + &v0[i]);
        }
    }

    #[test]
    fn stage2_warm_starts_from_stage1_multipliers() {
        let (m, sys) = small_problem();
        let solver = Reconstructor::new(&m, &sys, SolverParams::default()).unwrap();
        let s1 = solver.stage1(&mut noop()).unwrap();
        let g = EdgeStop::default();
        let weights = build_weights_complex(&s1.state.u, &g);
        let mut state = s1.state.clone();
        solver.stage2_inner(&mut state, &weights, 1, &mut noop()).unwrap();
        for (i, axis) in Axis::BOTH.into_iter().enumerate() {
            let input = &diff_forward(&s1.state.u, axis) + &s1.state.v[i];
            let expect = Zip::from(&input)
                .and(weights.axis(axis))
                .map_collect(|&z, &w| shrink_complex(z, w / 100.0));
            assert_eq!(state.r[i], expect);
        }
        let shu = sys.analyze_complex(&s1.state.u).unwrap();
        for ((s, a), t) in state.s.bands.iter().zip(&shu.bands).zip(&s1.state.t.bands) {
            let expect = Zip::from(a).and(t).map_collect(|&a, &t| shrink_complex(a + t, 0.01));
            let err = complex_norm(&(s - &expect));
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn stage2_with_flat_edge_stop_extends_stage1() {
        // A huge h makes every weight 1 up to rounding.
        let (m, sys) = small_problem();
        let params = SolverParams { tol_inner: 0.0, tol_outer: 0.0, max_iter_stage2_outer: 1, stage2_budget: 10, max_iter_stage2_inner: 10, max_iter_stage1: 20, ..Default::default() };
        let solver = Reconstructor::new(&m, &sys, params).unwrap();
        let s1 = solver.stage1(&mut noop()).unwrap();
        let g = EdgeStop::new(crate::prox::EdgeStopKind::Tukey, 1e12).unwrap();
        let s2 = solver.stage2(s1.state.clone(), &g, &mut noop()).unwrap();
        let mut cont = s1.state.clone();
        solver
            .run_inner(&mut cont, TvThreshold::Uniform, 10, 0.0, 1, 0, &mut noop())
            .unwrap();
        assert_eq!(s2.state, cont);
        assert_eq!(s2.iterations, 10);
        assert_eq!(s2.outer_iterations, 1);
    }

    #[test]
    fn stage2_respects_budget() {
        let (m, sys) = small_problem();
        let params = SolverParams { max_iter_stage2_inner: 7, stage2_budget: 20, tol_outer: 0.0, tol_inner: 0.0, ..Default::default() };
        let solver = Reconstructor::new(&m, &sys, params).unwrap();
        let s1 = solver.stage1(&mut noop()).unwrap();
        let mut count = 0;
        let s2 = solver
            .stage2(s1.state, &EdgeStop::default(), &mut |r: &IterationRecord| {
                assert_eq!(r.stage, 2);
                count += 1;
            })
            .unwrap();
        assert_eq!(s2.iterations, 20);
        assert_eq!(count, 20);
        assert_eq!(s2.outer_iterations, 3);
        assert!(!s2.converged);
    }

    #[test]
    fn deterministic() {
        let (m, sys) = small_problem();
        let params = SolverParams { max_iter_stage1: 60, ..Default::default() };
        let a = reconstruct(&m, &sys, &params, Some(&EdgeStop::default()), &mut noop()).unwrap();
        let b = reconstruct(&m, &sys, &params, Some(&EdgeStop::default()), &mut noop()).unwrap();
        assert_eq!(a.final_output().state, b.final_output().state);
        assert_eq!(a.final_output().image, b.final_output().image);
    }

    #[test]
    fn divergence_is_reported() {
        let (m, sys) = small_problem();
        let mut bad = m.clone();
        bad.values[1] = Complex64::new(f64::NAN, 0.0);
        let solver = Reconstructor::new(&bad, &sys, SolverParams::default()).unwrap();
        match solver.stage1(&mut noop()) {
            Err(GeocsError::Divergence { iterate, iteration }) => {
                assert_eq!(iterate, "u");
                assert_eq!(iteration, 1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
