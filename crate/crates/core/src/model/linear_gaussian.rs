use rand::Rng;
use rand_distr::StandardNormal;

use super::params::ParamMap;
use super::{normal_logpdf, require_positive, ObservationRecord, ProposalKind, StateSpaceModel};
use crate::error::{Error, Result};

/// Scalar linear-Gaussian model
/// `X_{k+1} = phi X_k + V`, `Y_k = obs_coeff X_k + W`, `X_0 ~ N(init_mean, init_var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussianParams {
    pub phi: f64,
    pub state_noise_var: f64,
    pub obs_coeff: f64,
    pub obs_noise_var: f64,
    pub init_mean: f64,
    pub init_var: f64,
}

impl Default for LinearGaussianParams {
    fn default() -> Self {
        Self {
            phi: 0.9,
            state_noise_var: 1.0,
            obs_coeff: 1.0,
            obs_noise_var: 1.0,
            init_mean: 0.0,
            init_var: 1.0,
        }
    }
}

impl LinearGaussianParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("state_noise_var", self.state_noise_var)?;
        require_positive("obs_noise_var", self.obs_noise_var)?;
        require_positive("init_var", self.init_var)?;
        for (name, v) in [
            ("phi", self.phi),
            ("obs_coeff", self.obs_coeff),
            ("init_mean", self.init_mean),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn from_param_map(map: &ParamMap) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            phi: map.f64_or("phi", d.phi)?,
            state_noise_var: map.f64_or("state_noise_var", d.state_noise_var)?,
            obs_coeff: map.f64_or("obs_coeff", d.obs_coeff)?,
            obs_noise_var: map.f64_or("obs_noise_var", d.obs_noise_var)?,
            init_mean: map.f64_or("init_mean", d.init_mean)?,
            init_var: map.f64_or("init_var", d.init_var)?,
        })
    }

    pub fn to_param_map(&self) -> ParamMap {
        let mut map = ParamMap::default();
        map.set_f64("phi", self.phi);
        map.set_f64("state_noise_var", self.state_noise_var);
        map.set_f64("obs_coeff", self.obs_coeff);
        map.set_f64("obs_noise_var", self.obs_noise_var);
        map.set_f64("init_mean", self.init_mean);
        map.set_f64("init_var", self.init_var);
        map
    }
}

#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    params: LinearGaussianParams,
    proposal: ProposalKind,
    // fully adapted proposal: variance and precision-weighted coefficients
    adapted_var: f64,
    predictive_var: f64,
}

impl LinearGaussianModel {
    pub fn new(params: LinearGaussianParams) -> Result<Self> {
        Self::with_proposal(params, ProposalKind::Bootstrap)
    }

    pub fn with_proposal(params: LinearGaussianParams, proposal: ProposalKind) -> Result<Self> {
        params.validate()?;
        let p = params;
        Ok(Self {
            params,
            proposal,
            adapted_var: 1.0 / (1.0 / p.state_noise_var + p.obs_coeff * p.obs_coeff / p.obs_noise_var),
            predictive_var: p.obs_coeff * p.obs_coeff * p.state_noise_var + p.obs_noise_var,
        })
    }

    pub fn params(&self) -> &LinearGaussianParams {
        &self.params
    }

    pub fn proposal_kind(&self) -> ProposalKind {
        self.proposal
    }

    fn adapted_mean(&self, x: f64, y_next: f64) -> f64 {
        let p = &self.params;
        self.adapted_var * (p.phi * x / p.state_noise_var + p.obs_coeff * y_next / p.obs_noise_var)
    }
}

impl StateSpaceModel for LinearGaussianModel {
    type State = f64;

    fn initial_logdensity(&self, x: &f64) -> f64 {
        normal_logpdf(*x, self.params.init_mean, self.params.init_var)
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.params.init_mean + self.params.init_var.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }

    fn transition_logdensity(&self, _k: usize, x: &f64, x_next: &f64) -> f64 {
        normal_logpdf(*x_next, self.params.phi * x, self.params.state_noise_var)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, _k: usize, x: &f64, rng: &mut R) -> f64 {
        self.params.phi * x + self.params.state_noise_var.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }

    fn emission_logdensity(&self, _k: usize, x: &f64, y: &[f64]) -> f64 {
        normal_logpdf(y[0], self.params.obs_coeff * x, self.params.obs_noise_var)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, _k: usize, x: &f64, rng: &mut R) -> Vec<f64> {
        vec![self.params.obs_coeff * x
            + self.params.obs_noise_var.sqrt() * rng.sample::<f64, _>(StandardNormal)]
    }

    fn sample_proposal<R: Rng + ?Sized>(&self, k: usize, x: &f64, y_next: &[f64], rng: &mut R) -> f64 {
        match self.proposal {
            ProposalKind::Bootstrap => self.sample_transition(k, x, rng),
            ProposalKind::FullyAdapted => {
                self.adapted_mean(*x, y_next[0])
                    + self.adapted_var.sqrt() * rng.sample::<f64, _>(StandardNormal)
            }
        }
    }

    fn proposal_logdensity(&self, k: usize, x: &f64, x_next: &f64, y_next: &[f64]) -> f64 {
        match self.proposal {
            ProposalKind::Bootstrap => self.transition_logdensity(k, x, x_next),
            ProposalKind::FullyAdapted => {
                normal_logpdf(*x_next, self.adapted_mean(*x, y_next[0]), self.adapted_var)
            }
        }
    }

    fn log_adjustment_weight(&self, _k: usize, x: &f64, y_next: &[f64]) -> f64 {
        match self.proposal {
            ProposalKind::Bootstrap => 0.0,
            ProposalKind::FullyAdapted => normal_logpdf(
                y_next[0],
                self.params.obs_coeff * self.params.phi * x,
                self.predictive_var,
            ),
        }
    }

    fn log_transition_bound(&self) -> Option<f64> {
        Some(normal_logpdf(0.0, 0.0, self.params.state_noise_var))
    }
}

/// Exact smoothing moments and log-likelihood of the scalar linear-Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanSmoothing {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub filtered_means: Vec<f64>,
    pub filtered_variances: Vec<f64>,
    pub log_likelihood: f64,
}

/// Kalman filter followed by the Rauch-Tung-Striebel backward pass.
pub fn kalman_smoother(params: &LinearGaussianParams, obs: &ObservationRecord) -> Result<KalmanSmoothing> {
    params.validate()?;
    let p = params;
    let len = obs.len();
    let mut pred_mean = Vec::with_capacity(len);
    let mut pred_var = Vec::with_capacity(len);
    let mut filt_mean = Vec::with_capacity(len);
    let mut filt_var = Vec::with_capacity(len);
    let mut log_likelihood = 0.0;

    let (mut m, mut v) = (p.init_mean, p.init_var);
    for (k, y) in obs.iter().enumerate() {
        if k > 0 {
            m *= p.phi;
            v = p.phi * p.phi * v + p.state_noise_var;
        }
        pred_mean.push(m);
        pred_var.push(v);
        let s = p.obs_coeff * p.obs_coeff * v + p.obs_noise_var;
        log_likelihood += normal_logpdf(y[0], p.obs_coeff * m, s);
        let gain = v * p.obs_coeff / s;
        m += gain * (y[0] - p.obs_coeff * m);
        v *= 1.0 - gain * p.obs_coeff;
        filt_mean.push(m);
        filt_var.push(v);
    }

    let mut means = filt_mean.clone();
    let mut variances = filt_var.clone();
    for k in (0..len.saturating_sub(1)).rev() {
        let g = filt_var[k] * p.phi / pred_var[k + 1];
        means[k] = filt_mean[k] + g * (means[k + 1] - pred_mean[k + 1]);
        variances[k] = filt_var[k] + g * g * (variances[k + 1] - pred_var[k + 1]);
    }

    Ok(KalmanSmoothing {
        means,
        variances,
        filtered_means: filt_mean,
        filtered_variances: filt_var,
        log_likelihood,
    })
}
