//! State-space model contract and the built-in models.
//!
//! All densities are log densities. Time indices are 0-based and passed to
//! every kernel, so time-varying dynamics are supported. Transition and
//! proposal kernels indexed by `k` move the chain from time `k` to `k + 1`.
//!
//! Continuous models use Lebesgue reference measure; [`DiscreteHmm`] uses
//! counting measure, so its "densities" are probabilities.

mod growth;
mod hmm;
mod linear_gaussian;
pub mod params;

pub use growth::{growth_transition_mean, GrowthModel, GrowthParams};
pub use hmm::{hmm_forward_backward, DiscreteHmm, DiscreteHmmParams, HmmSmoothing};
pub use linear_gaussian::{kalman_smoother, KalmanSmoothing, LinearGaussianModel, LinearGaussianParams};

use std::fmt::Debug;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// A latent state value.
pub trait StateValue: Clone + Debug + PartialEq + Send + Sync + 'static {
    /// Scalar summary used by estimators and CSV export (the state itself
    /// for scalar models, the state index for discrete models).
    fn to_f64(&self) -> f64;
}

impl StateValue for f64 {
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl StateValue for usize {
    fn to_f64(&self) -> f64 {
        *self as f64
    }
}

/// Proposal kernel / adjustment-weight configuration of the auxiliary filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProposalKind {
    /// Proposal equals the dynamics, adjustment weights are 1.
    #[default]
    Bootstrap,
    /// Proposal is `p(x' | x, y_{k+1})` and the adjustment weight is the
    /// predictive likelihood `p(y_{k+1} | x)`; importance weights are constant.
    FullyAdapted,
}

impl std::str::FromStr for ProposalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" => Ok(Self::Bootstrap),
            "fully_adapted" | "adapted" => Ok(Self::FullyAdapted),
            other => Err(Error::Parse(format!("unknown proposal kind `{other}`"))),
        }
    }
}

/// The densities, proposal kernels and adjustment weights defining one
/// state-space model instance.
///
/// `y_next` arguments carry the observation at time `k + 1`, which the
/// proposal and adjustment weight may look ahead to.
pub trait StateSpaceModel: Send + Sync {
    type State: StateValue;

    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    /// `log rho(x)`, the law of `X_0`.
    fn initial_logdensity(&self, x: &Self::State) -> f64;

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    /// Draw from the initial instrumental distribution `rho_0`.
    fn sample_initial_proposal<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State {
        self.sample_initial(rng)
    }

    fn initial_proposal_logdensity(&self, x: &Self::State) -> f64 {
        self.initial_logdensity(x)
    }

    /// `log q(x, x')` for the move from time `k` to `k + 1`.
    fn transition_logdensity(&self, k: usize, x: &Self::State, x_next: &Self::State) -> f64;

    fn sample_transition<R: Rng + ?Sized>(&self, k: usize, x: &Self::State, rng: &mut R)
        -> Self::State;

    /// `log g_k(x)` for the observation `y` recorded at time `k`.
    fn emission_logdensity(&self, k: usize, x: &Self::State, y: &[f64]) -> f64;

    fn sample_observation<R: Rng + ?Sized>(&self, k: usize, x: &Self::State, rng: &mut R)
        -> Vec<f64>;

    /// Draw from `R_k(x, .)`.
    fn sample_proposal<R: Rng + ?Sized>(
        &self,
        k: usize,
        x: &Self::State,
        y_next: &[f64],
        rng: &mut R,
    ) -> Self::State;

    /// `log r_k(x, x')`.
    fn proposal_logdensity(
        &self,
        k: usize,
        x: &Self::State,
        x_next: &Self::State,
        y_next: &[f64],
    ) -> f64;

    /// `log theta_k(x)`; must be finite.
    fn log_adjustment_weight(&self, _k: usize, _x: &Self::State, _y_next: &[f64]) -> f64 {
        0.0
    }

    /// `log` of a constant bounding `q(x, x')` over all pairs, if one exists.
    fn log_transition_bound(&self) -> Option<f64> {
        None
    }

    /// `log q(xs[i], x_next)` for every `i`, written into `out`.
    fn transition_logdensities(
        &self,
        k: usize,
        xs: &[Self::State],
        x_next: &Self::State,
        out: &mut [f64],
    ) {
        for (o, x) in out.iter_mut().zip(xs) {
            *o = self.transition_logdensity(k, x, x_next);
        }
    }
}

/// Observations `y_0, ..., y_n`, each a vector of `obs_dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    values: Vec<Vec<f64>>,
}

impl ObservationRecord {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("observation record is empty".into()));
        }
        let dim = values[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("observations must have dimension >= 1".into()));
        }
        for (k, y) in values.iter().enumerate() {
            if y.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "observation {k} has dimension {}, expected {dim}",
                    y.len()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("observation {k} is not finite")));
            }
        }
        Ok(Self { values })
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    /// Number of observations, `n + 1`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Final time index `n`.
    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn get(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    /// Observation at `k + 1`, or an empty slice past the end.
    pub fn next(&self, k: usize) -> &[f64] {
        self.values.get(k + 1).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.iter().map(Vec::as_slice)
    }
}

/// Draws a latent path and `n_obs` observations from the model's generative
/// law. Deterministic given `seed`.
pub fn simulate_data<M: StateSpaceModel>(
    model: &M,
    n_obs: usize,
    seed: u64,
) -> Result<(Vec<M::State>, ObservationRecord)> {
    if n_obs == 0 {
        return Err(Error::InvalidInput("need at least one observation".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut states = Vec::with_capacity(n_obs);
    let mut ys = Vec::with_capacity(n_obs);
    let mut x = model.sample_initial(&mut rng);
    for k in 0..n_obs {
        if k > 0 {
            x = model.sample_transition(k - 1, &x, &mut rng);
        }
        ys.push(model.sample_observation(k, &x, &mut rng));
        states.push(x.clone());
    }
    Ok((states, ObservationRecord::new(ys)?))
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log density of `N(mean, var)` at `x`.
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {value}")))
    }
}
