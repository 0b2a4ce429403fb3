//! Auxiliary particle filter.
//!
//! Step `k -> k + 1` draws `N` ancestor indices multinomially with
//! probabilities proportional to `w_k^i theta_k^i` (inverse CDF on one
//! table), then moves each selected particle through the proposal kernel and
//! weights it by
//!
//! ```text
//! w_{k+1} = g_{k+1}(x') q(x, x') / (theta_k(x) r_k(x, x'))
//! ```
//!
//! Draw order per step is fixed: all `N` ancestor uniforms first, then the
//! `N` positions, so a run is bit-reproducible from its generator.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ObservationRecord, StateSpaceModel};
use crate::weights::{log_sum_exp, normalize_log_weights, CategoricalTable};

/// One time slice of the particle system.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud<S> {
    pub time: usize,
    pub positions: Vec<S>,
    /// Unnormalised log importance weights `log w_k^i`.
    pub log_weights: Vec<f64>,
    /// `log theta_k(xi_k^i)`; zero at the final time, where no look-ahead exists.
    pub log_adjustments: Vec<f64>,
    /// 0-based index into the previous cloud; `None` at time 0.
    pub ancestors: Option<Vec<usize>>,
}

impl<S> ParticleCloud<S> {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `log sum_i w_k^i`.
    pub fn log_weight_sum(&self) -> f64 {
        log_sum_exp(&self.log_weights)
    }

    /// `log sum_i w_k^i theta_k^i`.
    pub fn log_adjusted_sum(&self) -> f64 {
        let v: Vec<f64> = self
            .log_weights
            .iter()
            .zip(&self.log_adjustments)
            .map(|(w, a)| w + a)
            .collect();
        log_sum_exp(&v)
    }

    /// Normalised filter weights `w_k^i / sum_l w_k^l`.
    pub fn normalized_weights(&self) -> Vec<f64> {
        normalize_log_weights(&self.log_weights).unwrap_or_else(|| vec![0.0; self.len()])
    }

    fn check_not_degenerate(&self) -> Result<()> {
        if self.log_weights.iter().all(|w| *w == f64::NEG_INFINITY) {
            Err(Error::DegenerateCloud { time: self.time })
        } else {
            Ok(())
        }
    }
}

/// The complete forward pass for `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace<S> {
    pub clouds: Vec<ParticleCloud<S>>,
    /// `log Z_n^N`.
    pub log_z: f64,
    /// `log sum_l w_k^l theta_k^l` for `k < n`, `log sum_l w_n^l` last.
    pub per_step_log_norms: Vec<f64>,
}

impl<S> FilterTrace<S> {
    /// Final time index `n`.
    pub fn horizon(&self) -> usize {
        self.clouds.len() - 1
    }

    pub fn n_particles(&self) -> usize {
        self.clouds[0].len()
    }

    pub fn cloud(&self, k: usize) -> &ParticleCloud<S> {
        &self.clouds[k]
    }

    /// Assembles a trace from clouds, computing the normalising-constant terms.
    pub fn from_clouds(clouds: Vec<ParticleCloud<S>>) -> Result<Self> {
        if clouds.is_empty() {
            return Err(Error::InvalidInput("a trace needs at least one cloud".into()));
        }
        let n_particles = clouds[0].len();
        let last = clouds.len() - 1;
        for (k, c) in clouds.iter().enumerate() {
            if c.len() != n_particles || c.log_weights.len() != n_particles || c.log_adjustments.len() != n_particles {
                return Err(Error::InvalidInput(format!("cloud {k} has inconsistent sizes")));
            }
            match (&c.ancestors, k) {
                (None, 0) => {}
                (Some(a), k) if k > 0 && a.len() == n_particles && a.iter().all(|&i| i < n_particles) => {}
                _ => return Err(Error::InvalidInput(format!("cloud {k} has invalid ancestors"))),
            }
            c.check_not_degenerate()?;
        }
        let per_step_log_norms: Vec<f64> = clouds
            .iter()
            .enumerate()
            .map(|(k, c)| if k < last { c.log_adjusted_sum() } else { c.log_weight_sum() })
            .collect();
        let log_z = per_step_log_norms.iter().sum::<f64>() - clouds.len() as f64 * (n_particles as f64).ln();
        Ok(Self {
            clouds,
            log_z,
            per_step_log_norms,
        })
    }
}

fn checked_particles(n_particles: usize) -> Result<()> {
    if n_particles == 0 {
        Err(Error::InvalidInput("need at least one particle".into()))
    } else {
        Ok(())
    }
}

fn nan_to_zero_weight(lw: f64) -> f64 {
    if lw.is_nan() {
        f64::NEG_INFINITY
    } else {
        lw
    }
}

fn adjustments<M: StateSpaceModel>(model: &M, obs: &ObservationRecord, k: usize, xs: &[M::State]) -> Vec<f64> {
    if k >= obs.horizon() {
        return vec![0.0; xs.len()];
    }
    let y_next = obs.get(k + 1);
    xs.iter().map(|x| model.log_adjustment_weight(k, x, y_next)).collect()
}

/// Draws the time-0 cloud from `rho_0` with weights `g_0 d(rho)/d(rho_0)`.
pub fn init_particles<M: StateSpaceModel, R: Rng + ?Sized>(
    model: &M,
    obs: &ObservationRecord,
    n_particles: usize,
    rng: &mut R,
) -> Result<ParticleCloud<M::State>> {
    checked_particles(n_particles)?;
    let y0 = obs.get(0);
    let positions: Vec<M::State> = (0..n_particles).map(|_| model.sample_initial_proposal(rng)).collect();
    let log_weights = positions
        .iter()
        .map(|x| {
            nan_to_zero_weight(
                model.emission_logdensity(0, x, y0) + model.initial_logdensity(x)
                    - model.initial_proposal_logdensity(x),
            )
        })
        .collect();
    let cloud = ParticleCloud {
        time: 0,
        log_adjustments: adjustments(model, obs, 0, &positions),
        positions,
        log_weights,
        ancestors: None,
    };
    cloud.check_not_degenerate()?;
    Ok(cloud)
}

/// One auxiliary-filter step from `prev` (time `k`) to time `k + 1`.
pub fn apf_step<M: StateSpaceModel, R: Rng + ?Sized>(
    model: &M,
    obs: &ObservationRecord,
    prev: &ParticleCloud<M::State>,
    rng: &mut R,
) -> Result<ParticleCloud<M::State>> {
    let k = prev.time;
    if k >= obs.horizon() {
        return Err(Error::InvalidInput(format!("no observation after time {k}")));
    }
    let selection: Vec<f64> = prev
        .log_weights
        .iter()
        .zip(&prev.log_adjustments)
        .map(|(w, a)| w + a)
        .collect();
    let table = CategoricalTable::from_log_weights(&selection).ok_or(Error::DegenerateCloud { time: k })?;
    let n = prev.len();
    let ancestors: Vec<usize> = (0..n).map(|_| table.sample(rng)).collect();

    let y_next = obs.get(k + 1);
    let positions: Vec<M::State> = ancestors
        .iter()
        .map(|&a| model.sample_proposal(k, &prev.positions[a], y_next, rng))
        .collect();
    let log_weights = ancestors
        .iter()
        .zip(&positions)
        .map(|(&a, x_new)| {
            let x = &prev.positions[a];
            nan_to_zero_weight(
                model.emission_logdensity(k + 1, x_new, y_next) + model.transition_logdensity(k, x, x_new)
                    - prev.log_adjustments[a]
                    - model.proposal_logdensity(k, x, x_new, y_next),
            )
        })
        .collect();
    let cloud = ParticleCloud {
        time: k + 1,
        log_adjustments: adjustments(model, obs, k + 1, &positions),
        positions,
        log_weights,
        ancestors: Some(ancestors),
    };
    cloud.check_not_degenerate()?;
    Ok(cloud)
}

/// Full forward pass over `obs`.
pub fn run_filter<M: StateSpaceModel, R: Rng + ?Sized>(
    model: &M,
    obs: &ObservationRecord,
    n_particles: usize,
    rng: &mut R,
) -> Result<FilterTrace<M::State>> {
    let mut clouds = Vec::with_capacity(obs.len());
    clouds.push(init_particles(model, obs, n_particles, rng)?);
    for _ in 0..obs.horizon() {
        let next = apf_step(model, obs, clouds.last().expect("non-empty"), rng)?;
        clouds.push(next);
    }
    FilterTrace::from_clouds(clouds)
}

/// `log Z_n^N` recomputed from the clouds:
/// `-(n+1) log N + sum_{k<n} log sum_l w_k^l theta_k^l + log sum_l w_n^l`.
pub fn log_z_estimate<S>(trace: &FilterTrace<S>) -> f64 {
    let last = trace.horizon();
    let n = trace.n_particles() as f64;
    trace
        .clouds
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let term = if k < last { c.log_adjusted_sum() } else { c.log_weight_sum() };
            term - n.ln()
        })
        .sum()
}
