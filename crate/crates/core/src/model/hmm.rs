use rand::Rng;

use super::params::ParamMap;
use super::{ObservationRecord, ProposalKind, StateSpaceModel};
use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Finite-state hidden Markov model with discrete emissions.
///
/// Observations are symbol indices `0..n_symbols` stored as floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmmParams {
    pub initial: Vec<f64>,
    /// Row-stochastic `n_states x n_states` matrix, `transition[i][j] = P(j | i)`.
    pub transition: Vec<Vec<f64>>,
    /// Row-stochastic `n_states x n_symbols` matrix.
    pub emission: Vec<Vec<f64>>,
}

impl DiscreteHmmParams {
    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.emission.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.n_states();
        if s < 2 {
            return Err(Error::InvalidParameter("an HMM needs at least 2 states".into()));
        }
        check_distribution("initial", &self.initial)?;
        if self.transition.len() != s || self.emission.len() != s {
            return Err(Error::InvalidParameter(
                "transition and emission need one row per state".into(),
            ));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != s {
                return Err(Error::InvalidParameter(format!("transition row {i} has wrong length")));
            }
            check_distribution(&format!("transition row {i}"), row)?;
        }
        let m = self.n_symbols();
        for (i, row) in self.emission.iter().enumerate() {
            if row.len() != m || m == 0 {
                return Err(Error::InvalidParameter(format!("emission row {i} has wrong length")));
            }
            check_distribution(&format!("emission row {i}"), row)?;
        }
        Ok(())
    }

    pub fn from_param_map(map: &ParamMap) -> Result<Self> {
        let need = |key: &str| Error::Parse(format!("missing required parameter `{key}`"));
        let params = Self {
            initial: map.vector("initial")?.ok_or_else(|| need("initial"))?,
            transition: map.matrix("transition")?.ok_or_else(|| need("transition"))?,
            emission: map.matrix("emission")?.ok_or_else(|| need("emission"))?,
        };
        if let Some(n) = map.parsed::<usize>("n_states")? {
            if n != params.n_states() {
                return Err(Error::InvalidParameter(format!(
                    "n_states={n} but initial has {} entries",
                    params.n_states()
                )));
            }
        }
        Ok(params)
    }

    pub fn to_param_map(&self) -> ParamMap {
        let mut map = ParamMap::default();
        map.set("n_states", self.n_states().to_string());
        map.set_vector("initial", &self.initial);
        map.set_matrix("transition", &self.transition);
        map.set_matrix("emission", &self.emission);
        map
    }

    fn emission_prob(&self, state: usize, y: &[f64]) -> f64 {
        match symbol(y, self.n_symbols()) {
            Some(s) => self.emission[state][s],
            None => 0.0,
        }
    }
}

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} has negative or non-finite entries")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidParameter(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

fn symbol(y: &[f64], n_symbols: usize) -> Option<usize> {
    let v = *y.first()?;
    (v >= 0.0 && v.fract() == 0.0 && (v as usize) < n_symbols).then_some(v as usize)
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone)]
pub struct DiscreteHmm {
    params: DiscreteHmmParams,
    initial_proposal: Option<Vec<f64>>,
    proposal: ProposalKind,
}

impl DiscreteHmm {
    pub fn new(params: DiscreteHmmParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            initial_proposal: None,
            proposal: ProposalKind::Bootstrap,
        })
    }

    pub fn with_proposal(mut self, proposal: ProposalKind) -> Self {
        self.proposal = proposal;
        self
    }

    /// Replaces the initial instrumental distribution `rho_0`. It must put
    /// mass on every state the initial distribution does.
    pub fn with_initial_proposal(mut self, rho0: Vec<f64>) -> Result<Self> {
        check_distribution("initial_proposal", &rho0)?;
        if rho0.len() != self.params.n_states() {
            return Err(Error::InvalidParameter("initial_proposal has wrong length".into()));
        }
        if rho0.iter().zip(&self.params.initial).any(|(&r, &p)| r == 0.0 && p > 0.0) {
            return Err(Error::InvalidParameter(
                "initial_proposal must dominate the initial distribution".into(),
            ));
        }
        self.initial_proposal = Some(rho0);
        Ok(self)
    }

    pub fn params(&self) -> &DiscreteHmmParams {
        &self.params
    }

    pub fn n_states(&self) -> usize {
        self.params.n_states()
    }

    fn predictive(&self, x: usize, y_next: &[f64]) -> f64 {
        (0..self.n_states())
            .map(|j| self.params.transition[x][j] * self.params.emission_prob(j, y_next))
            .sum()
    }
}

impl StateSpaceModel for DiscreteHmm {
    type State = usize;

    fn initial_logdensity(&self, x: &usize) -> f64 {
        self.params.initial[*x].ln()
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.params.initial, rng)
    }

    fn sample_initial_proposal<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.initial_proposal {
            Some(rho0) => sample_categorical(rho0, rng),
            None => self.sample_initial(rng),
        }
    }

    fn initial_proposal_logdensity(&self, x: &usize) -> f64 {
        match &self.initial_proposal {
            Some(rho0) => rho0[*x].ln(),
            None => self.initial_logdensity(x),
        }
    }

    fn transition_logdensity(&self, _k: usize, x: &usize, x_next: &usize) -> f64 {
        self.params.transition[*x][*x_next].ln()
    }

    fn sample_transition<R: Rng + ?Sized>(&self, _k: usize, x: &usize, rng: &mut R) -> usize {
        sample_categorical(&self.params.transition[*x], rng)
    }

    fn emission_logdensity(&self, _k: usize, x: &usize, y: &[f64]) -> f64 {
        self.params.emission_prob(*x, y).ln()
    }

    fn sample_observation<R: Rng + ?Sized>(&self, _k: usize, x: &usize, rng: &mut R) -> Vec<f64> {
        vec![sample_categorical(&self.params.emission[*x], rng) as f64]
    }

    fn sample_proposal<R: Rng + ?Sized>(&self, k: usize, x: &usize, y_next: &[f64], rng: &mut R) -> usize {
        match self.proposal {
            ProposalKind::Bootstrap => self.sample_transition(k, x, rng),
            ProposalKind::FullyAdapted => {
                let probs: Vec<f64> = (0..self.n_states())
                    .map(|j| self.params.transition[*x][j] * self.params.emission_prob(j, y_next))
                    .collect();
                if probs.iter().all(|&p| p == 0.0) {
                    // the weight will be -inf whatever is drawn
                    return self.sample_transition(k, x, rng);
                }
                sample_categorical(&probs, rng)
            }
        }
    }

    fn proposal_logdensity(&self, k: usize, x: &usize, x_next: &usize, y_next: &[f64]) -> f64 {
        match self.proposal {
            ProposalKind::Bootstrap => self.transition_logdensity(k, x, x_next),
            ProposalKind::FullyAdapted => {
                let joint = self.params.transition[*x][*x_next] * self.params.emission_prob(*x_next, y_next);
                joint.ln() - self.predictive(*x, y_next).ln()
            }
        }
    }

    fn log_adjustment_weight(&self, _k: usize, x: &usize, y_next: &[f64]) -> f64 {
        match self.proposal {
            ProposalKind::Bootstrap => 0.0,
            // floor keeps theta strictly positive for states that cannot explain y_{k+1}
            ProposalKind::FullyAdapted => self.predictive(*x, y_next).max(f64::MIN_POSITIVE).ln(),
        }
    }

    fn log_transition_bound(&self) -> Option<f64> {
        let max = self
            .params
            .transition
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max);
        Some(max.ln())
    }
}

/// Exact smoothing quantities of a discrete HMM.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmSmoothing {
    /// `marginals[k][i] = P(X_k = i | y_{0:n})`.
    pub marginals: Vec<Vec<f64>>,
    /// `pairwise[k][i][j] = P(X_k = i, X_{k+1} = j | y_{0:n})` for `k < n`.
    pub pairwise: Vec<Vec<Vec<f64>>>,
    /// `filtered[k][i] = P(X_k = i | y_{0:k})`.
    pub filtered: Vec<Vec<f64>>,
    pub log_likelihood: f64,
}

/// Scaled forward-backward recursions.
pub fn hmm_forward_backward(params: &DiscreteHmmParams, obs: &ObservationRecord) -> Result<HmmSmoothing> {
    params.validate()?;
    let s = params.n_states();
    let len = obs.len();
    let e: Vec<Vec<f64>> = obs
        .iter()
        .map(|y| (0..s).map(|i| params.emission_prob(i, y)).collect())
        .collect();

    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(len);
    let mut scale = Vec::with_capacity(len);
    for k in 0..len {
        let mut a: Vec<f64> = if k == 0 {
            (0..s).map(|i| params.initial[i] * e[0][i]).collect()
        } else {
            let prev = &alpha[k - 1];
            (0..s)
                .map(|j| (0..s).map(|i| prev[i] * params.transition[i][j]).sum::<f64>() * e[k][j])
                .collect()
        };
        let c: f64 = a.iter().sum();
        if !(c > 0.0) {
            return Err(Error::InvalidInput(format!(
                "observation sequence has zero probability at time {k}"
            )));
        }
        a.iter_mut().for_each(|v| *v /= c);
        alpha.push(a);
        scale.push(c);
    }

    let mut beta = vec![vec![1.0; s]; len];
    for k in (0..len - 1).rev() {
        for i in 0..s {
            beta[k][i] = (0..s)
                .map(|j| params.transition[i][j] * e[k + 1][j] * beta[k + 1][j])
                .sum::<f64>()
                / scale[k + 1];
        }
    }

    let marginals = (0..len)
        .map(|k| {
            let mut g: Vec<f64> = (0..s).map(|i| alpha[k][i] * beta[k][i]).collect();
            let total: f64 = g.iter().sum();
            g.iter_mut().for_each(|v| *v /= total);
            g
        })
        .collect();
    let pairwise = (0..len - 1)
        .map(|k| {
            (0..s)
                .map(|i| {
                    (0..s)
                        .map(|j| {
                            alpha[k][i] * params.transition[i][j] * e[k + 1][j] * beta[k + 1][j]
                                / scale[k + 1]
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    Ok(HmmSmoothing {
        marginals,
        pairwise,
        filtered: alpha,
        log_likelihood: scale.iter().map(|c| c.ln()).sum(),
    })
}
