//! Trajectory and marginal extraction from a completed [`FilterTrace`].
//!
//! * genealogy tracing (GT) and its Rao-Blackwellisation over the `N`
//!   terminal paths (GTRB),
//! * backward sampling through the particle backward kernels (BS), exactly or
//!   by accept-reject against a transition density bound,
//! * backward smoothing marginals (BSM), the Rao-Blackwellisation of BS.
//!
//! The backward kernel at time `k` puts mass
//! `w_k^i q(xi_k^i, x) / sum_l w_k^l q(xi_k^l, x)` on particle `i`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::filter::FilterTrace;
use crate::model::{StateSpaceModel, StateValue};
use crate::weights::{normalize_log_weights, CategoricalTable};

/// Default number of failed accept-reject proposals before a backward step
/// falls back to the exact categorical draw.
pub const DEFAULT_MAX_REJECTIONS: usize = 15;

/// A path through the particle trellis.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    /// `indices[k]` is the particle index at time `k`.
    pub backward_indices: Vec<usize>,
}

impl<S: StateValue> Trajectory<S> {
    pub fn from_indices(trace: &FilterTrace<S>, indices: Vec<usize>) -> Self {
        let states = indices
            .iter()
            .enumerate()
            .map(|(k, &i)| trace.clouds[k].positions[i].clone())
            .collect();
        Self { states, backward_indices: indices }
    }

    pub fn values(&self) -> Vec<f64> {
        self.states.iter().map(StateValue::to_f64).collect()
    }
}

/// Per-time probabilities over the particles of each cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingMarginals {
    /// `weights[k][i] = v_k^i`.
    pub weights: Vec<Vec<f64>>,
    /// `pairwise[k][i * N + j]`: probability of passing through particle `i`
    /// at `k` and particle `j` at `k + 1`, for `k < n`.
    pub pairwise: Option<Vec<Vec<f64>>>,
}

impl SmoothingMarginals {
    pub fn horizon(&self) -> usize {
        self.weights.len() - 1
    }

    /// Number of particles with strictly positive weight at time `k`.
    pub fn support_size(&self, k: usize) -> usize {
        self.weights[k].iter().filter(|&&v| v > 0.0).count()
    }

    /// `sum_i v_k^i x_k^i` for every `k`.
    pub fn means<S: StateValue>(&self, trace: &FilterTrace<S>) -> Vec<f64> {
        (0..self.weights.len())
            .map(|k| smoothed_expectation(self, trace, k, StateValue::to_f64))
            .collect()
    }
}

/// Counters of the accept-reject backward sampler.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BackwardSamplerStats {
    pub is_proposals: u64,
    pub is_accepts: u64,
    /// Steps that exhausted `max_rejections` and used the exact kernel.
    pub fallbacks: u64,
}

impl BackwardSamplerStats {
    pub fn merge(&mut self, other: &BackwardSamplerStats) {
        self.is_proposals += other.is_proposals;
        self.is_accepts += other.is_accepts;
        self.fallbacks += other.fallbacks;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.is_proposals == 0 {
            f64::NAN
        } else {
            self.is_accepts as f64 / self.is_proposals as f64
        }
    }
}

fn check_time<S>(trace: &FilterTrace<S>, k: usize) -> Result<()> {
    if k >= trace.horizon() {
        return Err(Error::InvalidInput(format!(
            "backward kernel needs k < n = {}, got {k}",
            trace.horizon()
        )));
    }
    Ok(())
}

/// Fills `out` with normalised backward-kernel probabilities; `false` when
/// every term vanishes.
fn backward_probabilities<M: StateSpaceModel>(
    trace: &FilterTrace<M::State>,
    model: &M,
    k: usize,
    x_next: &M::State,
    out: &mut [f64],
) -> bool {
    let cloud = &trace.clouds[k];
    model.transition_logdensities(k, &cloud.positions, x_next, out);
    let mut max = f64::NEG_INFINITY;
    for (o, lw) in out.iter_mut().zip(&cloud.log_weights) {
        *o += lw;
        if o.is_nan() {
            *o = f64::NEG_INFINITY;
        }
        max = max.max(*o);
    }
    if !max.is_finite() {
        return false;
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        total += *o;
    }
    let inv = 1.0 / total;
    out.iter_mut().for_each(|o| *o *= inv);
    true
}

/// Backward-kernel probabilities over the time-`k` cloud given `X_{k+1} = x_next`.
pub fn backward_weights<M: StateSpaceModel>(
    trace: &FilterTrace<M::State>,
    model: &M,
    k: usize,
    x_next: &M::State,
) -> Result<Vec<f64>> {
    check_time(trace, k)?;
    let mut out = vec![0.0; trace.n_particles()];
    if backward_probabilities(trace, model, k, x_next, &mut out) {
        Ok(out)
    } else {
        Err(Error::DegenerateBackwardKernel { time: k })
    }
}

fn sample_probabilities<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
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

/// Reusable backward sampler over one trace: the per-time filter-weight
/// tables are built once and shared by every draw.
pub struct BackwardSampler<'a, M: StateSpaceModel> {
    trace: &'a FilterTrace<M::State>,
    model: &'a M,
    tables: Vec<CategoricalTable>,
    scratch: Vec<f64>,
}

impl<'a, M: StateSpaceModel> BackwardSampler<'a, M> {
    pub fn new(trace: &'a FilterTrace<M::State>, model: &'a M) -> Result<Self> {
        let tables = trace
            .clouds
            .iter()
            .map(|c| CategoricalTable::from_log_weights(&c.log_weights).ok_or(Error::DegenerateCloud { time: c.time }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            trace,
            model,
            tables,
            scratch: vec![0.0; trace.n_particles()],
        })
    }

    fn exact_step<R: Rng + ?Sized>(&mut self, k: usize, next: usize, rng: &mut R) -> Result<usize> {
        let x_next = &self.trace.clouds[k + 1].positions[next];
        if !backward_probabilities(self.trace, self.model, k, x_next, &mut self.scratch) {
            return Err(Error::DegenerateBackwardKernel { time: k });
        }
        Ok(sample_probabilities(&self.scratch, rng))
    }

    /// One trajectory drawn with the exact `O(N)`-per-step backward kernel.
    pub fn sample_exact<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Trajectory<M::State>> {
        let n = self.trace.horizon();
        let mut indices = vec![0; n + 1];
        indices[n] = self.tables[n].sample(rng);
        for k in (0..n).rev() {
            indices[k] = self.exact_step(k, indices[k + 1], rng)?;
        }
        Ok(Trajectory::from_indices(self.trace, indices))
    }

    /// One trajectory drawn by accept-reject: a candidate index is proposed
    /// from the filter weights and accepted with probability `q / bound`.
    /// After `max_rejections` failures the step uses the exact kernel.
    pub fn sample_accept_reject<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        max_rejections: usize,
        stats: &mut BackwardSamplerStats,
    ) -> Result<Trajectory<M::State>> {
        let log_bound = self.model.log_transition_bound().ok_or(Error::MissingTransitionBound)?;
        if max_rejections == 0 {
            return Err(Error::InvalidInput("max_rejections must be at least 1".into()));
        }
        let n = self.trace.horizon();
        let mut indices = vec![0; n + 1];
        indices[n] = self.tables[n].sample(rng);
        for k in (0..n).rev() {
            let x_next = &self.trace.clouds[k + 1].positions[indices[k + 1]];
            let positions = &self.trace.clouds[k].positions;
            let mut chosen = None;
            for _ in 0..max_rejections {
                let candidate = self.tables[k].sample(rng);
                let log_q = self.model.transition_logdensity(k, &positions[candidate], x_next);
                stats.is_proposals += 1;
                if rng.random::<f64>() < (log_q - log_bound).exp() {
                    stats.is_accepts += 1;
                    chosen = Some(candidate);
                    break;
                }
            }
            indices[k] = match chosen {
                Some(i) => i,
                None => {
                    stats.fallbacks += 1;
                    self.exact_step(k, indices[k + 1], rng)?
                }
            };
        }
        Ok(Trajectory::from_indices(self.trace, indices))
    }
}

/// One backward-sampled trajectory using the exact kernel. Cost `O(nN)`.
pub fn sample_backward_exact<M: StateSpaceModel, R: Rng + ?Sized>(
    trace: &FilterTrace<M::State>,
    model: &M,
    rng: &mut R,
) -> Result<Trajectory<M::State>> {
    BackwardSampler::new(trace, model)?.sample_exact(rng)
}

/// One backward-sampled trajectory using accept-reject with exact fallback.
pub fn sample_backward_ar<M: StateSpaceModel, R: Rng + ?Sized>(
    trace: &FilterTrace<M::State>,
    model: &M,
    rng: &mut R,
    max_rejections: usize,
) -> Result<(Trajectory<M::State>, BackwardSamplerStats)> {
    let mut stats = BackwardSamplerStats::default();
    let traj = BackwardSampler::new(trace, model)?.sample_accept_reject(rng, max_rejections, &mut stats)?;
    Ok((traj, stats))
}

/// Ancestral path of terminal particle `terminal`.
pub fn genealogy_path<S: StateValue>(trace: &FilterTrace<S>, terminal: usize) -> Trajectory<S> {
    let n = trace.horizon();
    let mut indices = vec![0; n + 1];
    indices[n] = terminal;
    for k in (1..=n).rev() {
        let ancestors = trace.clouds[k].ancestors.as_ref().expect("clouds after time 0 carry ancestors");
        indices[k - 1] = ancestors[indices[k]];
    }
    Trajectory::from_indices(trace, indices)
}

/// Draws a terminal index from the final filter weights and traces its
/// genealogy back to time 0.
pub fn extract_genealogy<S: StateValue, R: Rng + ?Sized>(trace: &FilterTrace<S>, rng: &mut R) -> Trajectory<S> {
    let last = &trace.clouds[trace.horizon()];
    let table = CategoricalTable::from_log_weights(&last.log_weights).expect("traces are never degenerate");
    genealogy_path(trace, table.sample(rng))
}

/// Rao-Blackwellised genealogy: each ancestor at time `k` receives the summed
/// normalised terminal weight of its descendants.
pub fn genealogy_marginals<S>(trace: &FilterTrace<S>) -> SmoothingMarginals {
    let n = trace.horizon();
    let n_particles = trace.n_particles();
    let mut weights = vec![Vec::new(); n + 1];
    weights[n] = trace.clouds[n].normalized_weights();
    for k in (1..=n).rev() {
        let ancestors = trace.clouds[k].ancestors.as_ref().expect("clouds after time 0 carry ancestors");
        let mut prev = vec![0.0; n_particles];
        for (j, &a) in ancestors.iter().enumerate() {
            prev[a] += weights[k][j];
        }
        weights[k - 1] = prev;
    }
    SmoothingMarginals {
        weights,
        pairwise: None,
    }
}

/// Backward smoothing: the normalised time-`n` weights pushed back through
/// the particle backward kernels. Dense, `O(nN^2)`.
pub fn backward_smoothing_marginals<M: StateSpaceModel>(
    trace: &FilterTrace<M::State>,
    model: &M,
    with_pairwise: bool,
) -> Result<SmoothingMarginals> {
    let n = trace.horizon();
    let n_particles = trace.n_particles();
    let mut weights = vec![Vec::new(); n + 1];
    let mut pairwise = with_pairwise.then(|| vec![Vec::new(); n]);
    weights[n] = normalize_log_weights(&trace.clouds[n].log_weights).ok_or(Error::DegenerateCloud { time: n })?;
    let mut kernel = vec![0.0; n_particles];
    for k in (0..n).rev() {
        let mut current = vec![0.0; n_particles];
        let mut pair = if with_pairwise { vec![0.0; n_particles * n_particles] } else { Vec::new() };
        for j in 0..n_particles {
            let vj = weights[k + 1][j];
            if vj == 0.0 {
                continue;
            }
            let x_next = &trace.clouds[k + 1].positions[j];
            if !backward_probabilities(trace, model, k, x_next, &mut kernel) {
                return Err(Error::DegenerateBackwardKernel { time: k });
            }
            for (i, &b) in kernel.iter().enumerate() {
                current[i] += vj * b;
                if with_pairwise {
                    pair[i * n_particles + j] = vj * b;
                }
            }
        }
        weights[k] = current;
        if let Some(p) = pairwise.as_mut() {
            p[k] = pair;
        }
    }
    Ok(SmoothingMarginals { weights, pairwise })
}

/// `sum_i v_k^i h(xi_k^i)`.
pub fn smoothed_expectation<S, F>(marginals: &SmoothingMarginals, trace: &FilterTrace<S>, k: usize, h: F) -> f64
where
    F: Fn(&S) -> f64,
{
    marginals.weights[k]
        .iter()
        .zip(&trace.clouds[k].positions)
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, x)| v * h(x))
        .sum()
}
