//! Python bindings. Images cross the boundary as lists of rows of floats
//! (anything `numpy.ndarray.tolist()` produces works).

use ndarray::Array2;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use geocs::{EdgeStop, EdgeStopKind, GeocsError, Image, PhantomKind};

fn to_py(e: GeocsError) -> PyErr {
    match e {
        GeocsError::Divergence { .. } | GeocsError::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn grid_from_rows<T: Clone>(rows: Vec<Vec<T>>) -> PyResult<Array2<T>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("expected a square list of rows"));
    }
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, n), flat).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows_from_grid<T: Clone>(a: &Array2<T>) -> Vec<Vec<T>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn image_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Image> {
    Image::new(grid_from_rows(rows)?).map_err(to_py)
}

/// Analytic phantom: "shepp_logan", "smooth_bumps" or "textured".
#[pyfunction]
fn phantom(kind: &str, n: usize) -> PyResult<Vec<Vec<f64>>> {
    let kind: PhantomKind = kind.parse().map_err(to_py)?;
    let img = geocs::phantom(kind, n).map_err(to_py)?;
    Ok(rows_from_grid(img.data()))
}

#[pyclass(name = "SamplingMask", module = "pygeocs", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMask {
    inner: geocs::SamplingMask,
}

#[pymethods]
impl PyMask {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn count(&self) -> usize {
        self.inner.count()
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate()
    }

    fn to_list(&self) -> Vec<Vec<bool>> {
        rows_from_grid(self.inner.keep())
    }

    fn __repr__(&self) -> String {
        format!(
            "SamplingMask(n={}, count={}, rate={:.4})",
            self.inner.n(),
            self.inner.count(),
            self.inner.rate()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (n, lines, seed = 0))]
fn radial_mask(n: usize, lines: usize, seed: u64) -> PyResult<PyMask> {
    Ok(PyMask {
        inner: geocs::radial_mask(n, lines, seed).map_err(to_py)?,
    })
}

#[pyclass(name = "Measurement", module = "pygeocs", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMeasurement {
    inner: geocs::Measurement,
}

#[pymethods]
impl PyMeasurement {
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn values(&self) -> Vec<Complex64> {
        self.inner.values.clone()
    }

    #[getter]
    fn mask(&self) -> PyMask {
        PyMask {
            inner: self.inner.mask.clone(),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Samples `image` on the mask's frequencies (unitary DFT).
#[pyfunction]
fn sample(image: Vec<Vec<f64>>, mask: &PyMask) -> PyResult<PyMeasurement> {
    let img = image_from_rows(image)?;
    Ok(PyMeasurement {
        inner: geocs::sample(&img, &mask.inner).map_err(to_py)?,
    })
}

/// Adds complex Gaussian noise with standard deviation `sigma`.
#[pyfunction]
#[pyo3(signature = (measurement, sigma, seed = 0))]
fn add_noise(measurement: &PyMeasurement, sigma: f64, seed: u64) -> PyResult<PyMeasurement> {
    Ok(PyMeasurement {
        inner: geocs::add_noise(&measurement.inner, sigma, seed).map_err(to_py)?,
    })
}

#[pyclass(name = "ShearletSystem", module = "pygeocs", frozen)]
struct PyShearlets {
    inner: geocs::ShearletSystem,
}

#[pymethods]
impl PyShearlets {
    #[new]
    #[pyo3(signature = (n, scales = 3, directions = 4))]
    fn new(n: usize, scales: usize, directions: usize) -> PyResult<Self> {
        Ok(Self {
            inner: geocs::ShearletSystem::with_directions(n, scales, directions).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Subband coefficients, one complex grid per band.
    fn analyze(&self, image: Vec<Vec<f64>>) -> PyResult<Vec<Vec<Vec<Complex64>>>> {
        let img = image_from_rows(image)?;
        let stack = self.inner.analyze(&img).map_err(to_py)?;
        Ok(stack.bands.iter().map(rows_from_grid).collect())
    }

    /// Adjoint of `analyze`; returns a complex grid.
    fn adjoint(&self, bands: Vec<Vec<Vec<Complex64>>>) -> PyResult<Vec<Vec<Complex64>>> {
        let bands = bands
            .into_iter()
            .map(grid_from_rows)
            .collect::<PyResult<Vec<_>>>()?;
        let stack = geocs::SubbandStack { bands };
        Ok(rows_from_grid(&self.inner.adjoint(&stack).map_err(to_py)?))
    }

    fn masks(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.masks().iter().map(rows_from_grid).collect()
    }
}

#[pyclass(name = "SolverParams", module = "pygeocs", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyParams {
    beta: f64,
    lambda_: f64,
    mu: f64,
    tau: f64,
    gamma: f64,
    tol_inner: f64,
    tol_outer: f64,
    max_iter_stage1: usize,
    max_iter_stage2_inner: usize,
    max_iter_stage2_outer: usize,
    stage2_budget: usize,
}

impl PyParams {
    fn to_core(&self) -> geocs::SolverParams {
        geocs::SolverParams {
            beta: self.beta,
            lambda: self.lambda_,
            mu: self.mu,
            tau: self.tau,
            gamma: self.gamma,
            tol_inner: self.tol_inner,
            tol_outer: self.tol_outer,
            max_iter_stage1: self.max_iter_stage1,
            max_iter_stage2_inner: self.max_iter_stage2_inner,
            max_iter_stage2_outer: self.max_iter_stage2_outer,
            stage2_budget: self.stage2_budget,
        }
    }
}

#[pymethods]
impl PyParams {
    #[new]
    fn new() -> Self {
        let p = geocs::SolverParams::default();
        Self {
            beta: p.beta,
            lambda_: p.lambda,
            mu: p.mu,
            tau: p.tau,
            gamma: p.gamma,
            tol_inner: p.tol_inner,
            tol_outer: p.tol_outer,
            max_iter_stage1: p.max_iter_stage1,
            max_iter_stage2_inner: p.max_iter_stage2_inner,
            max_iter_stage2_outer: p.max_iter_stage2_outer,
            stage2_budget: p.stage2_budget,
        }
    }

    /// Raises ValueError for parameters outside the convergent range.
    fn validate(&self) -> PyResult<Vec<String>> {
        let warnings = geocs::validate_params(&self.to_core()).map_err(to_py)?;
        Ok(warnings.iter().map(|w| w.to_string()).collect())
    }
}

/// Runs Stage I and, when `stages == 2`, Stage II. Returns a dict with the
/// images (`stage1`, `stage2`) and iteration counts.
#[pyfunction]
#[pyo3(signature = (measurement, params = None, stages = 2, edge_stop = "tukey", h = 0.1, scales = 3, directions = 4))]
#[allow(clippy::too_many_arguments)]
fn reconstruct<'py>(
    py: Python<'py>,
    measurement: &PyMeasurement,
    params: Option<PyParams>,
    stages: u8,
    edge_stop: &str,
    h: f64,
    scales: usize,
    directions: usize,
) -> PyResult<Bound<'py, PyDict>> {
    if !(stages == 1 || stages == 2) {
        return Err(PyValueError::new_err("stages must be 1 or 2"));
    }
    let params = params.unwrap_or_else(PyParams::new).to_core();
    let kind: EdgeStopKind = edge_stop.parse().map_err(to_py)?;
    let g = EdgeStop::new(kind, h).map_err(to_py)?;
    let m = measurement.inner.clone();
    let rec = py
        .detach(|| {
            let system = geocs::ShearletSystem::with_directions(m.n(), scales, directions)?;
            geocs::solver::reconstruct(&m, &system, &params, (stages == 2).then_some(&g), &mut |_| {})
        })
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("stage1", rows_from_grid(rec.stage1.image.data()))?;
    out.set_item("stage1_iterations", rec.stage1.iterations)?;
    out.set_item("stage1_converged", rec.stage1.converged)?;
    if let Some(s2) = &rec.stage2 {
        out.set_item("stage2", rows_from_grid(s2.image.data()))?;
        out.set_item("stage2_iterations", s2.iterations)?;
        out.set_item("stage2_passes", s2.outer_iterations)?;
    }
    Ok(out)
}

#[pyfunction]
fn relerr(u: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    geocs::relerr(&image_from_rows(u)?, &image_from_rows(truth)?).map_err(to_py)
}

#[pyfunction]
fn relerr_squared(u: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    geocs::relerr_squared(&image_from_rows(u)?, &image_from_rows(truth)?).map_err(to_py)
}

#[pyfunction]
fn snr(u: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    geocs::snr(&image_from_rows(u)?, &image_from_rows(truth)?).map_err(to_py)
}

/// Soft thresholding of a single value.
#[pyfunction]
fn shrink(v: f64, delta: f64) -> f64 {
    geocs::prox::shrink_scalar(v, delta)
}

/// Edge-stopping function value `g(x)`.
#[pyfunction]
#[pyo3(signature = (kind, x, h = 0.1))]
fn edge_stop(kind: &str, x: f64, h: f64) -> PyResult<f64> {
    let kind: EdgeStopKind = kind.parse().map_err(to_py)?;
    Ok(EdgeStop::new(kind, h).map_err(to_py)?.eval(x))
}

#[pymodule]
fn pygeocs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMask>()?;
    m.add_class::<PyMeasurement>()?;
    m.add_class::<PyShearlets>()?;
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(phantom, m)?)?;
    m.add_function(wrap_pyfunction!(radial_mask, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(relerr, m)?)?;
    m.add_function(wrap_pyfunction!(relerr_squared, m)?)?;
    m.add_function(wrap_pyfunction!(snr, m)?)?;
    m.add_function(wrap_pyfunction!(shrink, m)?)?;
    m.add_function(wrap_pyfunction!(edge_stop, m)?)?;
    m.add("GAMMA_MAX", geocs::solver::GAMMA_MAX)?;
    Ok(())
}
