//! Python bindings: models, the auxiliary particle filter, backward
//! smoothers, IMH chains, the variance analysis and the command layer.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use pfsmooth_core::analysis::{self, RunData};
use pfsmooth_core::commands::{self, ModelKind, RunConfig, SimulateConfig};
use pfsmooth_core::filter::{self, log_z_estimate};
use pfsmooth_core::mcmc::{self, ChainConfig, ChainOutput, ExtractionMode};
use pfsmooth_core::model::params::ParamMap;
use pfsmooth_core::model::{
    self as core_model, DiscreteHmm, DiscreteHmmParams, GrowthModel, GrowthParams, LinearGaussianModel,
    LinearGaussianParams, ObservationRecord, ProposalKind,
};
use pfsmooth_core::rng::stream_rng;
use pfsmooth_core::smoother::{self, BackwardSamplerStats, DEFAULT_MAX_REJECTIONS};
use pfsmooth_core::{Error, FilterTrace, StateValue};

create_exception!(pfsmooth, NumericalError, PyArithmeticError, "Degenerate particle weights or backward kernel.");

fn to_py(e: Error) -> PyErr {
    match e {
        e if e.is_numerical() => NumericalError::new_err(e.to_string()),
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn observations(values: Vec<f64>) -> PyResult<ObservationRecord> {
    ObservationRecord::from_scalars(&values).map_err(to_py)
}

#[derive(Clone)]
enum AnyModel {
    Growth(GrowthModel),
    LinearGaussian(LinearGaussianModel),
    Hmm(DiscreteHmm),
}

#[derive(Clone)]
enum AnyTrace {
    Real(FilterTrace<f64>),
    Discrete(FilterTrace<usize>),
}

/// Runs `$body` with `$m` bound to the concrete model.
macro_rules! with_model {
    ($model:expr, $m:ident => $body:expr) => {
        match $model {
            AnyModel::Growth($m) => $body,
            AnyModel::LinearGaussian($m) => $body,
            AnyModel::Hmm($m) => $body,
        }
    };
}

/// Runs `$body` with `$m` and `$t` bound to a model and a trace of the same
/// state type.
macro_rules! with_model_trace {
    ($model:expr, $trace:expr, $m:ident, $t:ident => $body:expr) => {
        match ($model, $trace) {
            (AnyModel::Growth($m), AnyTrace::Real($t)) => $body,
            (AnyModel::LinearGaussian($m), AnyTrace::Real($t)) => $body,
            (AnyModel::Hmm($m), AnyTrace::Discrete($t)) => $body,
            _ => return Err(PyValueError::new_err("trace was produced by a model with a different state type")),
        }
    };
}

/// A state-space model. Build with `Model.growth`, `Model.linear_gaussian`
/// or `Model.hmm`.
#[pyclass(frozen, skip_from_py_object, module = "pfsmooth")]
#[derive(Clone)]
struct Model {
    inner: AnyModel,
}

fn proposal(name: Option<&str>) -> PyResult<ProposalKind> {
    name.map(str::parse).transpose().map_err(to_py).map(Option::unwrap_or_default)
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (sigma0_sq = 5.0, sigmav_sq = 10.0, sigmaw_sq = 1.0))]
    fn growth(sigma0_sq: f64, sigmav_sq: f64, sigmaw_sq: f64) -> PyResult<Self> {
        let model = GrowthModel::new(GrowthParams { sigma0_sq, sigmav_sq, sigmaw_sq }).map_err(to_py)?;
        Ok(Self { inner: AnyModel::Growth(model) })
    }

    #[staticmethod]
    #[pyo3(signature = (phi = 0.9, state_noise_var = 1.0, obs_coeff = 1.0, obs_noise_var = 1.0, init_mean = 0.0, init_var = 1.0, proposal = None))]
    fn linear_gaussian(
        phi: f64,
        state_noise_var: f64,
        obs_coeff: f64,
        obs_noise_var: f64,
        init_mean: f64,
        init_var: f64,
        proposal: Option<&str>,
    ) -> PyResult<Self> {
        let params = LinearGaussianParams { phi, state_noise_var, obs_coeff, obs_noise_var, init_mean, init_var };
        let model = LinearGaussianModel::with_proposal(params, self::proposal(proposal)?).map_err(to_py)?;
        Ok(Self { inner: AnyModel::LinearGaussian(model) })
    }

    #[staticmethod]
    #[pyo3(signature = (initial, transition, emission, proposal = None))]
    fn hmm(
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
        proposal: Option<&str>,
    ) -> PyResult<Self> {
        let model = DiscreteHmm::new(DiscreteHmmParams { initial, transition, emission })
            .map_err(to_py)?
            .with_proposal(self::proposal(proposal)?);
        Ok(Self { inner: AnyModel::Hmm(model) })
    }

    /// Simulates `n_obs` rows; returns `(states, observations)`.
    fn simulate(&self, py: Python<'_>, n_obs: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        py.detach(|| {
            with_model!(&self.inner, m => {
                let (states, obs) = core_model::simulate_data(m, n_obs, seed).map_err(to_py)?;
                let values = states.iter().map(|s| s.to_f64()).collect();
                Ok((values, obs.iter().map(|y| y[0]).collect()))
            })
        })
    }

    /// Exact smoothing means and log-likelihood, for the linear-Gaussian
    /// (Kalman smoother) and HMM (forward-backward, state index means)
    /// models.
    fn exact_smoothing(&self, observations: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
        let obs = self::observations(observations)?;
        match &self.inner {
            AnyModel::LinearGaussian(m) => {
                let ks = core_model::kalman_smoother(m.params(), &obs).map_err(to_py)?;
                Ok((ks.means, ks.log_likelihood))
            }
            AnyModel::Hmm(m) => {
                let fb = core_model::hmm_forward_backward(m.params(), &obs).map_err(to_py)?;
                let means = fb.marginals.iter().map(|p| p.iter().enumerate().map(|(i, v)| i as f64 * v).sum()).collect();
                Ok((means, fb.log_likelihood))
            }
            AnyModel::Growth(_) => Err(PyValueError::new_err("no exact smoother for the growth model")),
        }
    }

    /// HMM forward-backward marginals `[k][state]`.
    fn hmm_marginals(&self, observations: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        match &self.inner {
            AnyModel::Hmm(m) => {
                let fb = core_model::hmm_forward_backward(m.params(), &self::observations(observations)?).map_err(to_py)?;
                Ok(fb.marginals)
            }
            _ => Err(PyValueError::new_err("not a discrete HMM")),
        }
    }

    fn __repr__(&self) -> String {
        match &self.inner {
            AnyModel::Growth(m) => format!("Model.growth({:?})", m.params()),
            AnyModel::LinearGaussian(m) => format!("Model.linear_gaussian({:?})", m.params()),
            AnyModel::Hmm(m) => format!("Model.hmm(n_states={})", m.n_states()),
        }
    }
}

/// Every particle cloud of one filter run.
#[pyclass(frozen, module = "pfsmooth")]
struct Trace {
    inner: AnyTrace,
}

macro_rules! with_trace {
    ($trace:expr, $t:ident => $body:expr) => {
        match $trace {
            AnyTrace::Real($t) => $body,
            AnyTrace::Discrete($t) => $body,
        }
    };
}

impl Trace {
    fn cloud_index(&self, k: usize) -> PyResult<usize> {
        let horizon = with_trace!(&self.inner, t => t.horizon());
        if k > horizon {
            return Err(PyValueError::new_err(format!("time {k} beyond horizon {horizon}")));
        }
        Ok(k)
    }
}

#[pymethods]
impl Trace {
    #[getter]
    fn log_z(&self) -> f64 {
        with_trace!(&self.inner, t => log_z_estimate(t))
    }

    #[getter]
    fn n_particles(&self) -> usize {
        with_trace!(&self.inner, t => t.n_particles())
    }

    /// Index of the final time point.
    #[getter]
    fn horizon(&self) -> usize {
        with_trace!(&self.inner, t => t.horizon())
    }

    fn positions(&self, k: usize) -> PyResult<Vec<f64>> {
        let k = self.cloud_index(k)?;
        Ok(with_trace!(&self.inner, t => t.clouds[k].positions.iter().map(|s| s.to_f64()).collect()))
    }

    /// Normalised importance weights at time `k`.
    fn weights(&self, k: usize) -> PyResult<Vec<f64>> {
        let k = self.cloud_index(k)?;
        Ok(with_trace!(&self.inner, t => t.clouds[k].normalized_weights()))
    }

    /// Ancestor indices of the particles at time `k` (None at time 0).
    fn ancestors(&self, k: usize) -> PyResult<Option<Vec<usize>>> {
        let k = self.cloud_index(k)?;
        Ok(with_trace!(&self.inner, t => t.clouds[k].ancestors.clone()))
    }

    /// Path obtained by following ancestors back from final particle
    /// `terminal`.
    fn genealogy_path(&self, terminal: usize) -> PyResult<Vec<f64>> {
        if terminal >= self.n_particles() {
            return Err(PyValueError::new_err("terminal index out of range"));
        }
        Ok(with_trace!(&self.inner, t => smoother::genealogy_path(t, terminal).values()))
    }

    fn __repr__(&self) -> String {
        format!("Trace(n_particles={}, horizon={}, log_z={})", self.n_particles(), self.horizon(), self.log_z())
    }
}

/// Runs the auxiliary particle filter.
#[pyfunction]
fn run_filter(py: Python<'_>, model: &Model, observations: Vec<f64>, n_particles: usize, seed: u64) -> PyResult<Trace> {
    let obs = self::observations(observations)?;
    let inner = py.detach(|| {
        let mut rng = stream_rng(seed, 0);
        match &model.inner {
            AnyModel::Growth(m) => filter::run_filter(m, &obs, n_particles, &mut rng).map(AnyTrace::Real),
            AnyModel::LinearGaussian(m) => filter::run_filter(m, &obs, n_particles, &mut rng).map(AnyTrace::Real),
            AnyModel::Hmm(m) => filter::run_filter(m, &obs, n_particles, &mut rng).map(AnyTrace::Discrete),
        }
    });
    Ok(Trace { inner: inner.map_err(to_py)? })
}

/// Backward-smoothing marginal weights `[k][particle]` of a trace.
#[pyfunction]
fn backward_smoothing_weights(py: Python<'_>, model: &Model, trace: &Trace) -> PyResult<Vec<Vec<f64>>> {
    py.detach(|| {
        with_model_trace!(&model.inner, &trace.inner, m, t => {
            smoother::backward_smoothing_marginals(t, m, false).map(|s| s.weights).map_err(to_py)
        })
    })
}

/// Backward-smoothing estimate of the smoothed state mean at every time.
#[pyfunction]
fn backward_smoothing_means(py: Python<'_>, model: &Model, trace: &Trace) -> PyResult<Vec<f64>> {
    py.detach(|| {
        with_model_trace!(&model.inner, &trace.inner, m, t => {
            smoother::backward_smoothing_marginals(t, m, false).map(|s| s.means(t)).map_err(to_py)
        })
    })
}

type BackwardDraws = (Vec<Vec<f64>>, Vec<Vec<usize>>, HashMap<&'static str, u64>);

/// Draws `count` backward trajectories; returns `(paths, indices, stats)`
/// where `stats` counts accept-reject proposals, accepts and exact
/// fallbacks.
#[pyfunction]
#[pyo3(signature = (model, trace, count, seed, accept_reject = true, max_rejections = DEFAULT_MAX_REJECTIONS))]
fn sample_backward(
    py: Python<'_>,
    model: &Model,
    trace: &Trace,
    count: usize,
    seed: u64,
    accept_reject: bool,
    max_rejections: usize,
) -> PyResult<BackwardDraws> {
    let (paths, indices, stats) = py.detach(|| {
        with_model_trace!(&model.inner, &trace.inner, m, t => {
            let mut sampler = smoother::BackwardSampler::new(t, m).map_err(to_py)?;
            let mut rng = stream_rng(seed, 1);
            let mut stats = BackwardSamplerStats::default();
            let mut paths = Vec::with_capacity(count);
            let mut indices = Vec::with_capacity(count);
            for _ in 0..count {
                let path = if accept_reject {
                    sampler.sample_accept_reject(&mut rng, max_rejections, &mut stats)
                } else {
                    sampler.sample_exact(&mut rng)
                }
                .map_err(to_py)?;
                paths.push(path.values());
                indices.push(path.backward_indices);
            }
            Ok::<_, PyErr>((paths, indices, stats))
        })
    })?;
    let stats = HashMap::from([
        ("is_proposals", stats.is_proposals),
        ("is_accepts", stats.is_accepts),
        ("fallbacks", stats.fallbacks),
    ]);
    Ok((paths, indices, stats))
}

/// Output of an IMH chain.
#[pyclass(frozen, module = "pfsmooth")]
struct Chain {
    output: ChainOutput,
}

fn parse_mode(mode: &str) -> PyResult<ExtractionMode> {
    mode.parse().map_err(to_py)
}

#[pymethods]
impl Chain {
    #[getter]
    fn sweeps(&self) -> usize {
        self.output.summary.sweeps
    }

    #[getter]
    fn acceptance_rate(&self) -> f64 {
        self.output.summary.acceptance_rate
    }

    #[getter]
    fn is_acceptance_rate(&self) -> f64 {
        self.output.summary.is_acceptance_rate()
    }

    #[getter]
    fn accepted(&self) -> Vec<bool> {
        self.output.records.iter().map(|r| r.accepted).collect()
    }

    #[getter]
    fn log_z(&self) -> Vec<f64> {
        self.output.records.iter().map(|r| r.log_z).collect()
    }

    #[getter]
    fn modes(&self) -> Vec<String> {
        self.output.summary.mode_means.iter().map(|(m, _)| m.to_string()).collect()
    }

    /// Chain average of the per-sweep estimates of `mode`.
    fn mean(&self, mode: &str) -> PyResult<Vec<f64>> {
        self.output
            .summary
            .mode_mean(parse_mode(mode)?)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| PyValueError::new_err(format!("mode {mode} was not run")))
    }

    /// Per-sweep estimates of `mode` at time `k`.
    fn series(&self, mode: &str, k: usize) -> PyResult<Vec<f64>> {
        let mode = parse_mode(mode)?;
        if self.output.summary.mode_mean(mode).is_none() {
            return Err(PyValueError::new_err(format!("mode {mode} was not run")));
        }
        Ok(self.output.series(mode, k))
    }

    /// Per-time standard errors, efficiencies and trajectory-count optima,
    /// one dict per (method, k).
    fn variance_report(&self) -> PyResult<Vec<HashMap<&'static str, PyObjectLike>>> {
        let report = analysis::variance_report(&RunData::from_chain(&self.output)).map_err(to_py)?;
        Ok(report
            .rows
            .into_iter()
            .map(|r| {
                HashMap::from([
                    ("k", PyObjectLike::Int(r.k)),
                    ("method", PyObjectLike::Str(r.method)),
                    ("sigma_sq", PyObjectLike::Float(r.sigma_sq)),
                    ("tavc", PyObjectLike::Float(r.tavc)),
                    ("std_err", PyObjectLike::Float(r.std_err)),
                    ("efficiency", PyObjectLike::Float(r.efficiency)),
                    ("j_opt", PyObjectLike::Float(r.j_opt)),
                ])
            })
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("Chain(sweeps={}, acceptance_rate={:.4})", self.sweeps(), self.acceptance_rate())
    }
}

/// Scalar cell of a report row.
#[derive(IntoPyObject)]
enum PyObjectLike {
    Int(usize),
    Float(f64),
    Str(String),
}

/// Runs an independent Metropolis-Hastings chain over particle systems and
/// extracts smoothed means with each of `modes` (gt, gtrb, bs:J, bsm).
#[pyfunction]
#[pyo3(signature = (model, observations, n_particles, sweeps, seed, modes = vec!["gt".to_string(), "gtrb".to_string(), "bs:25".to_string(), "bsm".to_string()], burn_in = 0, timing = true, accept_reject = true, max_rejections = DEFAULT_MAX_REJECTIONS))]
#[allow(clippy::too_many_arguments)]
fn run_imh(
    py: Python<'_>,
    model: &Model,
    observations: Vec<f64>,
    n_particles: usize,
    sweeps: usize,
    seed: u64,
    modes: Vec<String>,
    burn_in: usize,
    timing: bool,
    accept_reject: bool,
    max_rejections: usize,
) -> PyResult<Chain> {
    let obs = self::observations(observations)?;
    let modes = modes.iter().map(|m| parse_mode(m)).collect::<PyResult<Vec<_>>>()?;
    let mut config = ChainConfig::new(n_particles, sweeps, seed, modes);
    config.burn_in = burn_in;
    config.record_timing = timing;
    config.extraction.accept_reject = accept_reject;
    config.extraction.max_rejections = max_rejections;
    let output = py.detach(|| with_model!(&model.inner, m => mcmc::run_imh(m, &obs, &config, |_, _| {})));
    Ok(Chain { output: output.map_err(to_py)? })
}

/// Time-average variance constant of a chain series.
#[pyfunction]
fn tavc(series: Vec<f64>) -> PyResult<f64> {
    analysis::tavc(&series).map_err(to_py)
}

/// Variance of a backward-sampling chain mean with `j` trajectories per
/// sweep over `r` sweeps.
#[pyfunction]
fn estimator_variance(sigma_sq: f64, tavc_bsm: f64, j: usize, r: usize) -> PyResult<f64> {
    analysis::estimator_variance(sigma_sq, tavc_bsm, j, r).map_err(to_py)
}

/// Trajectory count per sweep minimising variance per unit time.
#[pyfunction]
fn j_opt(sigma_sq: f64, tavc_bsm: f64, tau_bs: f64, tau_pf: f64) -> PyResult<f64> {
    analysis::j_opt(sigma_sq, tavc_bsm, tau_bs, tau_pf).map_err(to_py)
}

#[pyfunction]
fn efficiency(variance: f64, total_time_s: f64) -> PyResult<f64> {
    analysis::efficiency(variance, total_time_s).map_err(to_py)
}

fn param_map(params: Option<HashMap<String, String>>) -> ParamMap {
    let mut map = ParamMap::default();
    for (k, v) in params.unwrap_or_default() {
        map.set(&k, v);
    }
    map
}

/// Writes `observations.csv` and `latent.csv` into `out`; returns the seed.
#[pyfunction]
#[pyo3(signature = (model, out, n_obs = 50, seed = None, params = None))]
fn simulate(model: &str, out: PathBuf, n_obs: usize, seed: Option<u64>, params: Option<HashMap<String, String>>) -> PyResult<u64> {
    let model: ModelKind = model.parse().map_err(to_py)?;
    let outcome = commands::cmd_simulate(&SimulateConfig { model, params: param_map(params), n_obs, seed, out }).map_err(to_py)?;
    Ok(outcome.seed)
}

/// Runs chains from a flat configuration (keys as in a run config file)
/// and writes their output directories; returns `(seed, summary lines)`.
#[pyfunction]
fn run(py: Python<'_>, config: HashMap<String, String>) -> PyResult<(u64, Vec<String>)> {
    let config = RunConfig::from_map(&param_map(Some(config))).map_err(to_py)?;
    let outcome = py.detach(|| commands::cmd_run(&config)).map_err(to_py)?;
    Ok((outcome.seed, outcome.chains.into_iter().map(|c| c.summary_line).collect()))
}

/// Writes `variance_report.csv` and `comparison.txt` into a run directory;
/// returns `(comparison text, recommended J)`.
#[pyfunction]
fn analyze(dir: PathBuf) -> PyResult<(String, Option<usize>)> {
    let outcome = commands::cmd_analyze(&dir).map_err(to_py)?;
    Ok((outcome.comparison, outcome.recommended_j))
}

#[pymodule]
fn pfsmooth(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<Model>()?;
    m.add_class::<Trace>()?;
    m.add_class::<Chain>()?;
    m.add_function(wrap_pyfunction!(run_filter, m)?)?;
    m.add_function(wrap_pyfunction!(backward_smoothing_weights, m)?)?;
    m.add_function(wrap_pyfunction!(backward_smoothing_means, m)?)?;
    m.add_function(wrap_pyfunction!(sample_backward, m)?)?;
    m.add_function(wrap_pyfunction!(run_imh, m)?)?;
    m.add_function(wrap_pyfunction!(tavc, m)?)?;
    m.add_function(wrap_pyfunction!(estimator_variance, m)?)?;
    m.add_function(wrap_pyfunction!(j_opt, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    Ok(())
}
