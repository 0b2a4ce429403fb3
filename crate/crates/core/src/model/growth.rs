use rand::Rng;
use rand_distr::StandardNormal;

use super::params::ParamMap;
use super::{normal_logpdf, require_positive, StateSpaceModel};
use crate::error::{Error, Result};

/// Deterministic part of the growth-model dynamics,
/// `x/2 + 25 x / (1 + x^2) + 8 cos(1.2 k)`, where `k` is the 1-based time
/// index of the state being generated.
pub fn growth_transition_mean(k: usize, x: f64) -> f64 {
    0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * (1.2 * k as f64).cos()
}

/// Variances of the growth model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthParams {
    /// Variance of the first state.
    pub sigma0_sq: f64,
    /// State-noise variance.
    pub sigmav_sq: f64,
    /// Observation-noise variance.
    pub sigmaw_sq: f64,
}

impl Default for GrowthParams {
    fn default() -> Self {
        Self {
            sigma0_sq: 5.0,
            sigmav_sq: 10.0,
            sigmaw_sq: 1.0,
        }
    }
}

impl GrowthParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("sigma0_sq", self.sigma0_sq)?;
        require_positive("sigmav_sq", self.sigmav_sq)?;
        require_positive("sigmaw_sq", self.sigmaw_sq)
    }

    pub fn from_param_map(map: &ParamMap) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            sigma0_sq: map.f64_or("sigma0_sq", d.sigma0_sq)?,
            sigmav_sq: map.f64_or("sigmav_sq", d.sigmav_sq)?,
            sigmaw_sq: map.f64_or("sigmaw_sq", d.sigmaw_sq)?,
        })
    }

    pub fn to_param_map(&self) -> ParamMap {
        let mut map = ParamMap::default();
        map.set_f64("sigma0_sq", self.sigma0_sq);
        map.set_f64("sigmav_sq", self.sigmav_sq);
        map.set_f64("sigmaw_sq", self.sigmaw_sq);
        map
    }
}

/// The nonlinear growth model
///
/// ```text
/// X_{t} = X_{t-1}/2 + 25 X_{t-1}/(1 + X_{t-1}^2) + 8 cos(1.2 t) + V_t
/// Y_t   = X_t^2 / 20 + W_t
/// ```
///
/// with `X_1 ~ N(0, sigma0_sq)`, filtered with the bootstrap proposal.
/// The model's own time index starts at 1; internal index `k` corresponds to
/// `t = k + 1`.
#[derive(Debug, Clone)]
pub struct GrowthModel {
    params: GrowthParams,
    sd0: f64,
    sdv: f64,
    sdw: f64,
}

impl GrowthModel {
    pub fn new(params: GrowthParams) -> Result<Self> {
        params.validate()?;
        Ok(Self::build(params))
    }

    /// A model used only for simulation, which tolerates zero variances.
    /// Its densities are undefined when a variance is zero.
    pub fn simulator(params: GrowthParams) -> Result<Self> {
        for (name, v) in [
            ("sigma0_sq", params.sigma0_sq),
            ("sigmav_sq", params.sigmav_sq),
            ("sigmaw_sq", params.sigmaw_sq),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(Self::build(params))
    }

    fn build(params: GrowthParams) -> Self {
        Self {
            params,
            sd0: params.sigma0_sq.sqrt(),
            sdv: params.sigmav_sq.sqrt(),
            sdw: params.sigmaw_sq.sqrt(),
        }
    }

    pub fn params(&self) -> &GrowthParams {
        &self.params
    }

    /// Mean of `X_{k+1}` given `X_k = x` in internal (0-based) time.
    pub fn transition_mean(&self, k: usize, x: f64) -> f64 {
        growth_transition_mean(k + 2, x)
    }
}

impl StateSpaceModel for GrowthModel {
    type State = f64;

    fn initial_logdensity(&self, x: &f64) -> f64 {
        normal_logpdf(*x, 0.0, self.params.sigma0_sq)
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sd0 * rng.sample::<f64, _>(StandardNormal)
    }

    fn transition_logdensity(&self, k: usize, x: &f64, x_next: &f64) -> f64 {
        normal_logpdf(*x_next, self.transition_mean(k, *x), self.params.sigmav_sq)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, k: usize, x: &f64, rng: &mut R) -> f64 {
        self.transition_mean(k, *x) + self.sdv * rng.sample::<f64, _>(StandardNormal)
    }

    fn emission_logdensity(&self, _k: usize, x: &f64, y: &[f64]) -> f64 {
        normal_logpdf(y[0], x * x / 20.0, self.params.sigmaw_sq)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, _k: usize, x: &f64, rng: &mut R) -> Vec<f64> {
        vec![x * x / 20.0 + self.sdw * rng.sample::<f64, _>(StandardNormal)]
    }

    fn sample_proposal<R: Rng + ?Sized>(&self, k: usize, x: &f64, _y: &[f64], rng: &mut R) -> f64 {
        self.sample_transition(k, x, rng)
    }

    fn proposal_logdensity(&self, k: usize, x: &f64, x_next: &f64, _y: &[f64]) -> f64 {
        self.transition_logdensity(k, x, x_next)
    }

    fn log_transition_bound(&self) -> Option<f64> {
        Some(normal_logpdf(0.0, 0.0, self.params.sigmav_sq))
    }

    fn transition_logdensities(&self, k: usize, xs: &[f64], x_next: &f64, out: &mut [f64]) {
        let seasonal = 8.0 * (1.2 * (k + 2) as f64).cos();
        let c = normal_logpdf(0.0, 0.0, self.params.sigmav_sq);
        let inv2v = 0.5 / self.params.sigmav_sq;
        for (o, &x) in out.iter_mut().zip(xs) {
            let d = x_next - (0.5 * x + 25.0 * x / (1.0 + x * x) + seasonal);
            *o = c - d * d * inv2v;
        }
    }
}
