//! Python bindings: toy generator, geometry helpers, solver, direction fit
//! and the session workflow.

use batchedit::direction::FitReport;
use batchedit::evaluation::{linearity, spread};
use batchedit::generator::{features_vjp, Activation};
use batchedit::raster::{attribute_index, attributes_to_glyph, render, ATTRIBUTE_NAMES};
use batchedit::solver::{solve_edit as solve, AttributeGoal, EditTarget, SolverConfig};
use batchedit::{
    apply_edit as apply, compute_alpha as alpha, features, hyperplane_through, normalize, sample_latents as sample,
    signed_distance as distance, DirectionFitConfig, EditPair, Error, GeneratorParams, GeneratorSpec, LatentCode,
    Session as CoreSession,
};
use pyo3::exceptions::{PyIndexError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::IndexOutOfRange { .. } => PyIndexError::new_err(msg),
        Error::Io(_) => PyOSError::new_err(msg),
        Error::MissingExample
        | Error::MissingDirection
        | Error::NoTestLatents
        | Error::MissingAlphas
        | Error::ChainBroken { .. }
        | Error::NonFinite { .. }
        | Error::Png(_) => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for batchedit::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn latent(v: Vec<f64>) -> PyResult<LatentCode> {
    LatentCode::new(v).py()
}

fn latents(vs: Vec<Vec<f64>>) -> PyResult<Vec<LatentCode>> {
    vs.into_iter().map(latent).collect()
}

fn resolve(name: &str, k: usize) -> PyResult<usize> {
    match attribute_index(name) {
        Some(i) if i < k => Ok(i),
        _ => Err(PyValueError::new_err(format!("unknown attribute {name:?}"))),
    }
}

fn png<'py>(py: Python<'py>, params: &GeneratorParams, w: &LatentCode) -> PyResult<Bound<'py, PyBytes>> {
    let glyph = attributes_to_glyph(&features(params, w).py()?).py()?;
    Ok(PyBytes::new(py, &render(&glyph).to_png().py()?))
}

/// Seeded toy generator `a = A·tanh(W1·w + b1) + c`.
#[pyclass(module = "batchedit_py")]
struct Generator {
    params: GeneratorParams,
}

#[pymethods]
impl Generator {
    #[new]
    #[pyo3(signature = (seed = 0, d = 32, h = 64, k = 5, linear = false))]
    fn new(seed: u64, d: usize, h: usize, k: usize, linear: bool) -> PyResult<Self> {
        let mut params = GeneratorParams::new(GeneratorSpec { seed, d, h, k }).py()?;
        if linear {
            params = params.with_activation(Activation::Identity);
        }
        Ok(Self { params })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.params.seed()
    }

    #[getter]
    fn d(&self) -> usize {
        self.params.latent_dim()
    }

    #[getter]
    fn h(&self) -> usize {
        self.params.hidden_dim()
    }

    #[getter]
    fn k(&self) -> usize {
        self.params.attribute_count()
    }

    fn features(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(features(&self.params, &latent(w)?).py()?.0)
    }

    /// `Jᵀ·cotangent` at `w`.
    fn features_vjp(&self, w: Vec<f64>, cotangent: Vec<f64>) -> PyResult<Vec<f64>> {
        features_vjp(&self.params, &latent(w)?, &cotangent).py()
    }

    fn lipschitz_bound(&self) -> f64 {
        self.params.lipschitz_bound()
    }

    /// 64×64 PNG of the glyph for latent `w`.
    fn render_png<'py>(&self, py: Python<'py>, w: Vec<f64>) -> PyResult<Bound<'py, PyBytes>> {
        png(py, &self.params, &latent(w)?)
    }

    fn render_pgm<'py>(&self, py: Python<'py>, w: Vec<f64>) -> PyResult<Bound<'py, PyBytes>> {
        let glyph = attributes_to_glyph(&features(&self.params, &latent(w)?).py()?).py()?;
        Ok(PyBytes::new(py, &render(&glyph).to_pgm()))
    }

    fn __repr__(&self) -> String {
        let s = self.params.spec();
        format!("Generator(seed={}, d={}, h={}, k={})", s.seed, s.d, s.h, s.k)
    }
}

#[pyfunction]
fn sample_latents(seed: u64, count: usize, d: usize) -> Vec<Vec<f64>> {
    sample(seed, count, d).into_iter().map(LatentCode::into_vec).collect()
}

/// Unit vector and magnitude of `delta`.
#[pyfunction]
fn normalize_direction(delta: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    let dir = normalize(delta).py()?;
    Ok((dir.unit().to_vec(), dir.magnitude()))
}

/// Signed distance of `w` to the hyperplane through `anchor` with normal along `delta`.
#[pyfunction]
fn signed_distance(w: Vec<f64>, anchor: Vec<f64>, delta: Vec<f64>) -> PyResult<f64> {
    let plane = hyperplane_through(&latent(anchor)?, &normalize(delta).py()?).py()?;
    distance(&latent(w)?, &plane).py()
}

#[pyfunction]
fn compute_alpha(target: Vec<f64>, w: Vec<f64>, delta: Vec<f64>) -> PyResult<f64> {
    alpha(&latent(target)?, &latent(w)?, &normalize(delta).py()?).py()
}

#[pyfunction]
fn apply_edit(w: Vec<f64>, alpha: f64, delta: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(apply(&latent(w)?, alpha, &normalize(delta).py()?).py()?.into_vec())
}

#[pyfunction]
fn batch_alphas(target: Vec<f64>, ws: Vec<Vec<f64>>, delta: Vec<f64>) -> PyResult<Vec<f64>> {
    let out = batchedit::batch_alphas(&latent(target)?, &latents(ws)?, &normalize(delta).py()?).py()?;
    Ok(out.alphas)
}

/// Run the attribute solver from `start`. Returns `(start, end, target_error)`.
#[pyfunction]
#[pyo3(signature = (generator, start, targets, anchors = Vec::new(), steps = 200, lr = 0.05, proximity = 0.05))]
fn solve_edit(
    generator: &Generator,
    start: Vec<f64>,
    targets: Vec<(String, f64)>,
    anchors: Vec<String>,
    steps: usize,
    lr: f64,
    proximity: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let k = generator.params.attribute_count();
    let mut goals = vec![AttributeGoal::Free; k];
    for a in &anchors {
        if a == "all" {
            goals.fill(AttributeGoal::Anchor);
        } else {
            goals[resolve(a, k)?] = AttributeGoal::Anchor;
        }
    }
    for (name, v) in &targets {
        goals[resolve(name, k)?] = AttributeGoal::Target(*v);
    }
    let cfg = SolverConfig {
        steps,
        learning_rate: lr,
        proximity,
    };
    let out = solve(&generator.params, &latent(start)?, &EditTarget::new(goals).py()?, &cfg).py()?;
    Ok((out.pair.start.into_vec(), out.pair.end.into_vec(), out.target_error))
}

fn fit_config(lambda: f64, iterations: usize, lr: f64, distance: Option<f64>) -> DirectionFitConfig {
    DirectionFitConfig {
        lambda,
        iterations,
        learning_rate: lr,
        target_distance: distance,
        ..Default::default()
    }
}

fn report_dict<'py>(py: Python<'py>, r: &FitReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("delta", r.final_delta.clone())?;
    d.set_item("l_img", r.final_losses.img)?;
    d.set_item("l_att", r.final_losses.att)?;
    d.set_item("l_total", r.final_losses.total)?;
    d.set_item("trace", r.trace.iter().map(|t| t.total).collect::<Vec<_>>())?;
    d.set_item("wall_time", r.wall_time.as_secs_f64())?;
    Ok(d)
}

/// Fit the edit direction for the example `(start, end)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (generator, start, end, lambda_ = 0.02, iterations = 1000, lr = 1e-3, distance = None))]
fn fit_direction<'py>(
    py: Python<'py>,
    generator: &Generator,
    start: Vec<f64>,
    end: Vec<f64>,
    lambda_: f64,
    iterations: usize,
    lr: f64,
    distance: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let pair = EditPair::new(latent(start)?, latent(end)?).py()?;
    let cfg = fit_config(lambda_, iterations, lr, distance);
    let report = batchedit::direction::optimize_direction(&generator.params, &pair, &cfg).py()?;
    report_dict(py, &report)
}

/// One batch-editing session: example edit, fitted direction, test
/// latents and their editing strengths.
#[pyclass(module = "batchedit_py")]
struct Session {
    inner: CoreSession,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (seed = 0, d = 32, h = 64, k = 5, id = None))]
    fn new(seed: u64, d: usize, h: usize, k: usize, id: Option<String>) -> PyResult<Self> {
        let spec = GeneratorSpec { seed, d, h, k };
        let inner = match id {
            Some(id) => CoreSession::create_with_id(spec, id),
            None => CoreSession::create(spec),
        }
        .py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreSession::load(path).py()?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreSession::from_json(text).py()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id().to_string()
    }

    #[getter]
    fn slider(&self) -> f64 {
        self.inner.slider()
    }

    #[getter]
    fn example(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        self.inner
            .example()
            .map(|p| (p.start.as_slice().to_vec(), p.end.as_slice().to_vec()))
    }

    #[getter]
    fn direction(&self) -> Option<Vec<f64>> {
        self.inner.direction().map(|d| d.delta().to_vec())
    }

    #[getter]
    fn test_latents(&self) -> Vec<Vec<f64>> {
        self.inner
            .test_latents()
            .iter()
            .map(|w| w.as_slice().to_vec())
            .collect()
    }

    #[getter]
    fn alphas(&self) -> Option<Vec<f64>> {
        self.inner.alphas().map(|a| a.alphas.clone())
    }

    fn generator(&self) -> Generator {
        Generator {
            params: self.inner.params().clone(),
        }
    }

    fn set_example(&mut self, start: Vec<f64>, end: Vec<f64>) -> PyResult<()> {
        self.inner
            .set_example_edit(EditPair::new(latent(start)?, latent(end)?).py()?)
            .py()
    }

    /// Chain a second edit that starts at the current example end.
    fn compose(&mut self, start: Vec<f64>, end: Vec<f64>) -> PyResult<()> {
        self.inner
            .compose_edits(EditPair::new(latent(start)?, latent(end)?).py()?)
            .py()
    }

    fn add_latents(&mut self, latents_: Vec<Vec<f64>>) -> PyResult<()> {
        self.inner.add_test_latents(latents(latents_)?).py()
    }

    fn sample(&mut self, seed: u64, count: usize) -> PyResult<()> {
        self.inner.sample_test_latents(seed, count).py()
    }

    #[pyo3(signature = (lambda_ = 0.02, iterations = 1000, lr = 1e-3, distance = None))]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        lambda_: f64,
        iterations: usize,
        lr: f64,
        distance: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let report = self.inner.fit(&fit_config(lambda_, iterations, lr, distance)).py()?;
        report_dict(py, report)
    }

    fn transfer(&mut self) -> PyResult<Vec<f64>> {
        Ok(self.inner.transfer().py()?.alphas.clone())
    }

    fn rescale(&mut self, s: f64) -> PyResult<Vec<f64>> {
        Ok(self.inner.rescale(s).py()?.alphas.clone())
    }

    fn edited_latents(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(self
            .inner
            .edited_latents()
            .py()?
            .into_iter()
            .map(LatentCode::into_vec)
            .collect())
    }

    /// Spread and linearity of one attribute after transfer.
    fn evaluate<'py>(&self, py: Python<'py>, attr: &str) -> PyResult<Bound<'py, PyDict>> {
        let params = self.inner.params();
        let index = resolve(attr, params.attribute_count())?;
        let sp = spread(params, &self.inner, index, None).py()?;
        let dir = self.inner.direction().ok_or(Error::MissingDirection).py()?;
        let lin = linearity(params, dir, self.inner.test_latents(), index).py()?;
        let d = PyDict::new(py);
        d.set_item("attribute", ATTRIBUTE_NAMES.get(index).copied().unwrap_or("?"))?;
        d.set_item("target_value", sp.target_value)?;
        d.set_item("pre_std", sp.pre_std)?;
        d.set_item("post_std", sp.post_std)?;
        d.set_item("std_ratio", sp.std_ratio())?;
        d.set_item("pre_mae", sp.pre_mae)?;
        d.set_item("post_mae", sp.post_mae)?;
        d.set_item("r_squared", lin.r_squared)?;
        Ok(d)
    }

    /// PNG of test latent `index`, before (`"pre"`) or after (`"post"`) transfer.
    #[pyo3(signature = (index, state = "post"))]
    fn render<'py>(&self, py: Python<'py>, index: usize, state: &str) -> PyResult<Bound<'py, PyBytes>> {
        let count = self.inner.test_latents().len();
        if index >= count {
            return Err(py_err(Error::IndexOutOfRange { index, count }));
        }
        let w = match state {
            "pre" => self.inner.test_latents()[index].clone(),
            "post" => self.inner.edited_latent(index).py()?,
            other => {
                return Err(PyValueError::new_err(format!(
                    "state must be 'pre' or 'post', got {other:?}"
                )))
            }
        };
        png(py, self.inner.params(), &w)
    }

    fn __len__(&self) -> usize {
        self.inner.test_latents().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Session(id={:?}, test_latents={}, fitted={})",
            self.inner.id(),
            self.inner.test_latents().len(),
            self.inner.direction().is_some()
        )
    }
}

#[pymodule]
fn batchedit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Generator>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(sample_latents, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_direction, m)?)?;
    m.add_function(wrap_pyfunction!(signed_distance, m)?)?;
    m.add_function(wrap_pyfunction!(compute_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(apply_edit, m)?)?;
    m.add_function(wrap_pyfunction!(batch_alphas, m)?)?;
    m.add_function(wrap_pyfunction!(solve_edit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_direction, m)?)?;
    m.add("ATTRIBUTE_NAMES", ATTRIBUTE_NAMES.to_vec())?;
    Ok(())
}
