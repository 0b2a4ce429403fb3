//! Metropolised samplers over whole particle systems.
//!
//! Each sweep runs a fresh particle filter, accepts it with the usual
//! likelihood-ratio rule (independent M-H) or jointly with a parameter move
//! (particle marginal M-H), then extracts smoothing estimates from the
//! current trace with any combination of [`ExtractionMode`]s.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::filter::{run_filter, FilterTrace};
use crate::model::{ObservationRecord, StateSpaceModel, StateValue};
use crate::rng::{self, stream_rng, SmcRng};
use crate::smoother::{
    backward_smoothing_marginals, extract_genealogy, genealogy_marginals, BackwardSampler, BackwardSamplerStats,
    SmoothingMarginals, DEFAULT_MAX_REJECTIONS,
};

/// How smoothing estimates are read off a particle system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtractionMode {
    /// One trajectory traced through the genealogy (GT).
    Genealogy,
    /// All `N` genealogical paths weighted by terminal weight (GTRB).
    GenealogyRb,
    /// `trajectories` independent backward-sampled paths (BS).
    Backward { trajectories: usize },
    /// Backward smoothing marginals (BSM).
    BackwardSmoothing,
}

impl ExtractionMode {
    /// Short label without separators, usable in file names.
    pub fn file_stem(&self) -> String {
        match self {
            Self::Backward { trajectories } => format!("bs{trajectories}"),
            other => other.to_string(),
        }
    }

    fn is_deterministic(&self) -> bool {
        matches!(self, Self::GenealogyRb | Self::BackwardSmoothing)
    }
}

impl fmt::Display for ExtractionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Genealogy => f.write_str("gt"),
            Self::GenealogyRb => f.write_str("gtrb"),
            Self::Backward { trajectories } => write!(f, "bs:{trajectories}"),
            Self::BackwardSmoothing => f.write_str("bsm"),
        }
    }
}

impl FromStr for ExtractionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "gt" => Ok(Self::Genealogy),
            "gtrb" => Ok(Self::GenealogyRb),
            "bsm" => Ok(Self::BackwardSmoothing),
            _ => {
                let j = lower
                    .strip_prefix("bs:")
                    .or_else(|| lower.strip_prefix("bs"))
                    .filter(|rest| !rest.is_empty())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown extraction mode '{s}'")))?;
                let trajectories: usize = j
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad trajectory count in mode '{s}'")))?;
                if trajectories == 0 {
                    return Err(Error::InvalidInput("bs needs at least one trajectory".into()));
                }
                Ok(Self::Backward { trajectories })
            }
        }
    }
}

/// Which sampler drives the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    #[default]
    Imh,
    Pmmh,
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "imh" => Ok(Self::Imh),
            "pmmh" => Ok(Self::Pmmh),
            other => Err(Error::InvalidInput(format!("unknown sampler '{other}'"))),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Imh => "imh",
            Self::Pmmh => "pmmh",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionConfig {
    pub modes: Vec<ExtractionMode>,
    /// Backward sampling by accept-reject when the model supplies a
    /// transition bound; otherwise the exact kernel is always used.
    pub accept_reject: bool,
    pub max_rejections: usize,
    /// Keep the per-trajectory values of GT and BS draws in each record.
    pub keep_trajectories: bool,
    /// Keep the marginal weights of GTRB and BSM in each record.
    pub keep_marginals: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            modes: vec![ExtractionMode::BackwardSmoothing],
            accept_reject: true,
            max_rejections: DEFAULT_MAX_REJECTIONS,
            keep_trajectories: false,
            keep_marginals: false,
        }
    }
}

impl ExtractionConfig {
    pub fn with_modes(modes: Vec<ExtractionMode>) -> Self {
        Self {
            modes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidInput("at least one extraction mode is required".into()));
        }
        if self.max_rejections == 0 {
            return Err(Error::InvalidInput("max_rejections must be at least 1".into()));
        }
        Ok(())
    }
}

/// The estimates one mode produced at one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOutput {
    pub mode: ExtractionMode,
    /// Per-time estimate of the smoothed mean of the state.
    pub estimates: Vec<f64>,
    /// Per-time sample variance across the `J` trajectories (BS with `J >= 2`).
    pub within_variance: Option<Vec<f64>>,
    /// `[trajectory][time]` values, if requested.
    pub trajectories: Option<Vec<Vec<f64>>>,
    pub marginals: Option<SmoothingMarginals>,
    /// Wall time spent extracting (0 when timing is disabled).
    pub seconds: f64,
    pub backward_stats: BackwardSamplerStats,
}

#[derive(Debug, Clone)]
pub struct ChainState<S> {
    pub trace: FilterTrace<S>,
    pub log_z: f64,
    pub theta: Option<Vec<f64>>,
    pub sweep: usize,
    /// Incremented whenever the trace is replaced.
    trace_id: u64,
}

impl<S> ChainState<S> {
    pub fn new(trace: FilterTrace<S>, theta: Option<Vec<f64>>) -> Self {
        let log_z = trace.log_z;
        Self {
            trace,
            log_z,
            theta,
            sweep: 0,
            trace_id: 0,
        }
    }

    fn replace(&mut self, trace: FilterTrace<S>, theta: Option<Vec<f64>>) {
        self.log_z = trace.log_z;
        self.trace = trace;
        self.theta = theta;
        self.trace_id += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub accepted: bool,
    /// `-inf` for degenerate proposals and proposals outside the prior support.
    pub log_z_proposed: f64,
    /// Log-likelihood estimate of the current state after the decision.
    pub log_z: f64,
    /// Seconds spent on the proposal filter run.
    pub tau_pf: f64,
    /// Seconds per backward-sampled trajectory (0 without a BS mode).
    pub tau_bs: f64,
    pub outputs: Vec<ModeOutput>,
    /// Largest log weight in the proposed particle system.
    pub max_log_weight: f64,
    pub theta: Option<Vec<f64>>,
}

impl SweepRecord {
    pub fn output(&self, mode: ExtractionMode) -> Option<&ModeOutput> {
        self.outputs.iter().find(|o| o.mode == mode)
    }
}

/// Random streams consumed by one sweep.
pub struct SweepRngs<'a, R: Rng> {
    pub filter: &'a mut R,
    pub extraction: &'a mut R,
    pub accept: &'a mut R,
    pub theta: &'a mut R,
}

/// Metropolis-Hastings decision for `log_ratio` given a uniform `u`.
/// NaN ratios reject.
pub fn mh_accept(log_ratio: f64, u: f64) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || u < log_ratio.exp()
}

/// Prior and proposal for the static parameters of a PMMH chain.
pub trait ParameterModel {
    /// `-inf` outside the support.
    fn prior_logdensity(&self, theta: &[f64]) -> f64;
    fn sample_proposal(&self, theta: &[f64], rng: &mut dyn rand::RngCore) -> Vec<f64>;
    /// Log density of proposing `to` from `from`.
    fn proposal_logdensity(&self, from: &[f64], to: &[f64]) -> f64;
}

/// Gaussian random walk on `log theta`, for positive parameters.
pub struct LogRandomWalk<P> {
    pub scales: Vec<f64>,
    pub prior: P,
}

impl<P: Fn(&[f64]) -> f64> LogRandomWalk<P> {
    pub fn new(scales: Vec<f64>, prior: P) -> Self {
        Self { scales, prior }
    }
}

impl<P: Fn(&[f64]) -> f64> ParameterModel for LogRandomWalk<P> {
    fn prior_logdensity(&self, theta: &[f64]) -> f64 {
        if theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return f64::NEG_INFINITY;
        }
        (self.prior)(theta)
    }

    fn sample_proposal(&self, theta: &[f64], rng: &mut dyn rand::RngCore) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.scales)
            .map(|(t, s)| {
                let z: f64 = StandardNormal.sample(rng);
                t * (s * z).exp()
            })
            .collect()
    }

    fn proposal_logdensity(&self, from: &[f64], to: &[f64]) -> f64 {
        from.iter()
            .zip(to)
            .zip(&self.scales)
            .map(|((f, t), s)| {
                if !(*t > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let d = t.ln() - f.ln();
                -0.5 * (2.0 * std::f64::consts::PI * s * s).ln() - 0.5 * d * d / (s * s) - t.ln()
            })
            .sum()
    }
}

/// Log density of an inverse-gamma distribution with shape `a` and scale `b`.
pub fn inverse_gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Lanczos approximation, accurate to about 1e-15 for positive arguments.
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn max_log_weight<S>(trace: &FilterTrace<S>) -> f64 {
    trace
        .clouds
        .iter()
        .flat_map(|c| c.log_weights.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max)
}

struct Stopwatch(Option<Instant>);

impl Stopwatch {
    fn start(enabled: bool) -> Self {
        Self(enabled.then(Instant::now))
    }

    fn seconds(&self) -> f64 {
        self.0.map_or(0.0, |t| t.elapsed().as_secs_f64())
    }
}

/// Runs proposals, decisions and extractions for one chain.
///
/// GTRB and BSM are deterministic functions of the trace, so their outputs
/// are reused (with their original cost) while the trace is unchanged.
pub struct Sweeper {
    pub n_particles: usize,
    pub extraction: ExtractionConfig,
    pub record_timing: bool,
    cache: Option<(u64, Vec<Option<ModeOutput>>)>,
}

impl Sweeper {
    pub fn new(n_particles: usize, extraction: ExtractionConfig, record_timing: bool) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::InvalidInput("need at least one particle".into()));
        }
        extraction.validate()?;
        Ok(Self {
            n_particles,
            extraction,
            record_timing,
            cache: None,
        })
    }

    /// Runs a filter, mapping a degenerate particle system to `None`.
    fn propose<M: StateSpaceModel, R: Rng>(
        &self,
        model: &M,
        obs: &ObservationRecord,
        rng: &mut R,
    ) -> Result<(Option<FilterTrace<M::State>>, f64)> {
        let watch = Stopwatch::start(self.record_timing);
        let result = run_filter(model, obs, self.n_particles, rng);
        let seconds = watch.seconds();
        match result {
            Ok(trace) => Ok((Some(trace), seconds)),
            Err(e @ Error::DegenerateCloud { .. }) => {
                warn!("degenerate proposal treated as rejection: {e}");
                Ok((None, seconds))
            }
            Err(e) => Err(e),
        }
    }

    /// One independent M-H sweep: propose a fresh particle system, accept it
    /// with probability `min(1, Z*/Z)`, then extract from the current one.
    pub fn imh_sweep<M: StateSpaceModel, R: Rng>(
        &mut self,
        mut state: ChainState<M::State>,
        model: &M,
        obs: &ObservationRecord,
        rngs: SweepRngs<'_, R>,
    ) -> Result<(ChainState<M::State>, SweepRecord)> {
        let (proposal, tau_pf) = self.propose(model, obs, rngs.filter)?;
        let u: f64 = rngs.accept.random();
        let log_z_proposed = proposal.as_ref().map_or(f64::NEG_INFINITY, |t| t.log_z);
        let max_w = proposal.as_ref().map_or(f64::NEG_INFINITY, max_log_weight);
        let accepted = match proposal {
            Some(trace) if mh_accept(trace.log_z - state.log_z, u) => {
                state.replace(trace, None);
                true
            }
            _ => false,
        };
        let outputs = self.extract(&state, model, rngs.extraction)?;
        let record = self.record(&state, accepted, log_z_proposed, tau_pf, outputs, max_w);
        state.sweep += 1;
        Ok((state, record))
    }

    /// One particle marginal M-H sweep: propose `theta*`, run a filter under
    /// it and accept the pair jointly. The prior ratio is included.
    pub fn pmmh_sweep<M, F, P, R>(
        &mut self,
        mut state: ChainState<M::State>,
        factory: &F,
        params: &P,
        obs: &ObservationRecord,
        rngs: SweepRngs<'_, R>,
    ) -> Result<(ChainState<M::State>, SweepRecord)>
    where
        M: StateSpaceModel,
        F: Fn(&[f64]) -> Result<M>,
        P: ParameterModel + ?Sized,
        R: Rng,
    {
        let theta = state
            .theta
            .clone()
            .ok_or_else(|| Error::InvalidInput("PMMH state carries no parameter vector".into()))?;
        let theta_star = params.sample_proposal(&theta, rngs.theta);
        let u: f64 = rngs.accept.random();
        let log_prior_star = params.prior_logdensity(&theta_star);
        let mut log_z_proposed = f64::NEG_INFINITY;
        let mut tau_pf = 0.0;
        let mut max_w = f64::NEG_INFINITY;
        let mut accepted = false;
        if log_prior_star > f64::NEG_INFINITY {
            match factory(&theta_star) {
                Ok(model_star) => {
                    let (proposal, seconds) = self.propose(&model_star, obs, rngs.filter)?;
                    tau_pf = seconds;
                    if let Some(trace) = proposal {
                        log_z_proposed = trace.log_z;
                        max_w = max_log_weight(&trace);
                        let log_ratio = log_prior_star - params.prior_logdensity(&theta)
                            + params.proposal_logdensity(&theta_star, &theta)
                            - params.proposal_logdensity(&theta, &theta_star)
                            + trace.log_z
                            - state.log_z;
                        if mh_accept(log_ratio, u) {
                            state.replace(trace, Some(theta_star));
                            accepted = true;
                        }
                    }
                }
                Err(e) => warn!("parameter proposal rejected: {e}"),
            }
        }
        let model = factory(state.theta.as_deref().expect("theta present"))?;
        let outputs = self.extract(&state, &model, rngs.extraction)?;
        let record = self.record(&state, accepted, log_z_proposed, tau_pf, outputs, max_w);
        state.sweep += 1;
        Ok((state, record))
    }

    fn record<S>(
        &self,
        state: &ChainState<S>,
        accepted: bool,
        log_z_proposed: f64,
        tau_pf: f64,
        outputs: Vec<ModeOutput>,
        max_log_weight: f64,
    ) -> SweepRecord {
        let (bs_seconds, bs_count) = outputs
            .iter()
            .filter_map(|o| match o.mode {
                ExtractionMode::Backward { trajectories } => Some((o.seconds, trajectories)),
                _ => None,
            })
            .fold((0.0, 0), |(s, c), (s2, c2)| (s + s2, c + c2));
        SweepRecord {
            sweep: state.sweep,
            accepted,
            log_z_proposed,
            log_z: state.log_z,
            tau_pf,
            tau_bs: if bs_count > 0 { bs_seconds / bs_count as f64 } else { 0.0 },
            outputs,
            max_log_weight,
            theta: state.theta.clone(),
        }
    }

    /// Applies every configured mode to the current trace.
    pub fn extract<M: StateSpaceModel, R: Rng>(
        &mut self,
        state: &ChainState<M::State>,
        model: &M,
        rng: &mut R,
    ) -> Result<Vec<ModeOutput>> {
        let n_modes = self.extraction.modes.len();
        match &self.cache {
            Some((id, _)) if *id == state.trace_id => {}
            _ => self.cache = Some((state.trace_id, vec![None; n_modes])),
        }
        let mut outputs = Vec::with_capacity(n_modes);
        let mut sampler: Option<BackwardSampler<'_, M>> = None;
        for idx in 0..n_modes {
            let mode = self.extraction.modes[idx];
            if mode.is_deterministic() {
                if let Some(cached) = &self.cache.as_ref().expect("cache initialised").1[idx] {
                    outputs.push(cached.clone());
                    continue;
                }
            }
            let watch = Stopwatch::start(self.record_timing);
            let mut out = match mode {
                ExtractionMode::Genealogy => {
                    let path = extract_genealogy(&state.trace, rng);
                    let values = path.values();
                    trajectory_output(mode, vec![values], self.extraction.keep_trajectories)
                }
                ExtractionMode::GenealogyRb => {
                    marginal_output(mode, genealogy_marginals(&state.trace), &state.trace, self.extraction.keep_marginals)
                }
                ExtractionMode::BackwardSmoothing => marginal_output(
                    mode,
                    backward_smoothing_marginals(&state.trace, model, false)?,
                    &state.trace,
                    self.extraction.keep_marginals,
                ),
                ExtractionMode::Backward { trajectories } => {
                    if sampler.is_none() {
                        sampler = Some(BackwardSampler::new(&state.trace, model)?);
                    }
                    let sampler = sampler.as_mut().expect("sampler initialised");
                    let use_ar = self.extraction.accept_reject && model.log_transition_bound().is_some();
                    let mut stats = BackwardSamplerStats::default();
                    let mut paths = Vec::with_capacity(trajectories);
                    for _ in 0..trajectories {
                        let traj = if use_ar {
                            sampler.sample_accept_reject(rng, self.extraction.max_rejections, &mut stats)?
                        } else {
                            sampler.sample_exact(rng)?
                        };
                        paths.push(traj.values());
                    }
                    let mut out = trajectory_output(mode, paths, self.extraction.keep_trajectories);
                    out.backward_stats = stats;
                    out
                }
            };
            out.seconds = watch.seconds();
            if mode.is_deterministic() {
                self.cache.as_mut().expect("cache initialised").1[idx] = Some(out.clone());
            }
            outputs.push(out);
        }
        Ok(outputs)
    }
}

fn trajectory_output(mode: ExtractionMode, paths: Vec<Vec<f64>>, keep: bool) -> ModeOutput {
    let len = paths[0].len();
    let j = paths.len() as f64;
    let estimates: Vec<f64> = (0..len).map(|k| paths.iter().map(|p| p[k]).sum::<f64>() / j).collect();
    let within_variance = (paths.len() >= 2).then(|| {
        (0..len)
            .map(|k| paths.iter().map(|p| (p[k] - estimates[k]).powi(2)).sum::<f64>() / (j - 1.0))
            .collect()
    });
    ModeOutput {
        mode,
        estimates,
        within_variance,
        trajectories: keep.then_some(paths),
        marginals: None,
        seconds: 0.0,
        backward_stats: BackwardSamplerStats::default(),
    }
}

fn marginal_output<S: StateValue>(
    mode: ExtractionMode,
    marginals: SmoothingMarginals,
    trace: &FilterTrace<S>,
    keep: bool,
) -> ModeOutput {
    ModeOutput {
        mode,
        estimates: marginals.means(trace),
        within_variance: None,
        trajectories: None,
        marginals: keep.then_some(marginals),
        seconds: 0.0,
        backward_stats: BackwardSamplerStats::default(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub n_particles: usize,
    /// Recorded sweeps `R`.
    pub sweeps: usize,
    /// Sweeps run before recording starts.
    pub burn_in: usize,
    pub seed: u64,
    pub extraction: ExtractionConfig,
    pub record_timing: bool,
}

impl ChainConfig {
    pub fn new(n_particles: usize, sweeps: usize, seed: u64, modes: Vec<ExtractionMode>) -> Self {
        Self {
            n_particles,
            sweeps,
            burn_in: 0,
            seed,
            extraction: ExtractionConfig::with_modes(modes),
            record_timing: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::InvalidInput("need at least one sweep".into()));
        }
        self.extraction.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub sweeps: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub backward_stats: BackwardSamplerStats,
    /// Per-mode chain averages of the per-sweep estimates.
    pub mode_means: Vec<(ExtractionMode, Vec<f64>)>,
    /// Quarter-wise maxima of the proposal log weights kept increasing.
    pub unbounded_weights_suspected: bool,
}

impl ChainSummary {
    pub fn is_acceptance_rate(&self) -> f64 {
        self.backward_stats.acceptance_rate()
    }

    pub fn mode_mean(&self, mode: ExtractionMode) -> Option<&[f64]> {
        self.mode_means.iter().find(|(m, _)| *m == mode).map(|(_, v)| v.as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub records: Vec<SweepRecord>,
    pub summary: ChainSummary,
}

impl ChainOutput {
    /// Per-sweep estimate series of `mode` at time `k`.
    pub fn series(&self, mode: ExtractionMode, k: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.output(mode).map(|o| o.estimates[k]))
            .collect()
    }
}

fn summarize(records: &[SweepRecord], modes: &[ExtractionMode]) -> ChainSummary {
    let accepted = records.iter().filter(|r| r.accepted).count();
    let mut backward_stats = BackwardSamplerStats::default();
    for r in records {
        for o in &r.outputs {
            backward_stats.merge(&o.backward_stats);
        }
    }
    let mode_means = modes
        .iter()
        .map(|&mode| {
            let mut sum: Vec<f64> = Vec::new();
            for r in records {
                if let Some(o) = r.output(mode) {
                    if sum.is_empty() {
                        sum = vec![0.0; o.estimates.len()];
                    }
                    sum.iter_mut().zip(&o.estimates).for_each(|(s, e)| *s += e);
                }
            }
            sum.iter_mut().for_each(|s| *s /= records.len() as f64);
            (mode, sum)
        })
        .collect();
    let weights: Vec<f64> = records.iter().map(|r| r.max_log_weight).collect();
    let unbounded_weights_suspected = weights_look_unbounded(&weights);
    if unbounded_weights_suspected {
        warn!("maximum particle log weight keeps growing along the chain; weights may be unbounded");
    }
    ChainSummary {
        sweeps: records.len(),
        accepted,
        acceptance_rate: accepted as f64 / records.len() as f64,
        backward_stats,
        mode_means,
        unbounded_weights_suspected,
    }
}

/// Flags a series of per-sweep maximum log weights whose quarter maxima
/// increase strictly and grow by more than one unit overall.
pub fn weights_look_unbounded(max_log_weights: &[f64]) -> bool {
    let len = max_log_weights.len();
    if len < 8 {
        return false;
    }
    let q = len / 4;
    let maxima: Vec<f64> = (0..4)
        .map(|i| {
            let end = if i == 3 { len } else { (i + 1) * q };
            max_log_weights[i * q..end].iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    maxima.windows(2).all(|w| w[1] > w[0]) && maxima[3] - maxima[0] > 1.0
}

fn initial_trace<M: StateSpaceModel>(
    model: &M,
    obs: &ObservationRecord,
    n_particles: usize,
    seed: u64,
) -> Result<FilterTrace<M::State>> {
    run_filter(model, obs, n_particles, &mut stream_rng(seed, rng::INITIAL_FILTER_STREAM))
}

/// Drives `burn_in + sweeps` sweeps; `step` performs one sweep given its
/// random streams.
fn drive<S, F, O>(
    mut state: ChainState<S>,
    config: &ChainConfig,
    mut step: F,
    mut observer: O,
) -> Result<ChainOutput>
where
    F: FnMut(ChainState<S>, SweepRngs<'_, SmcRng>) -> Result<(ChainState<S>, SweepRecord)>,
    O: FnMut(&ChainState<S>, &SweepRecord),
{
    let mut accept_rng = stream_rng(config.seed, rng::ACCEPT_STREAM);
    let mut theta_rng = stream_rng(config.seed, rng::THETA_STREAM);
    let mut records = Vec::with_capacity(config.sweeps);
    for r in 0..config.burn_in + config.sweeps {
        let mut filter_rng = stream_rng(config.seed, rng::filter_stream(r as u64));
        let mut extraction_rng = stream_rng(config.seed, rng::extraction_stream(r as u64));
        let rngs = SweepRngs {
            filter: &mut filter_rng,
            extraction: &mut extraction_rng,
            accept: &mut accept_rng,
            theta: &mut theta_rng,
        };
        let (next, mut record) = step(state, rngs)?;
        state = next;
        if r >= config.burn_in {
            record.sweep = r - config.burn_in;
            observer(&state, &record);
            records.push(record);
        }
    }
    let summary = summarize(&records, &config.extraction.modes);
    Ok(ChainOutput { records, summary })
}

/// Independent M-H chain over particle systems.
pub fn run_imh<M, O>(model: &M, obs: &ObservationRecord, config: &ChainConfig, observer: O) -> Result<ChainOutput>
where
    M: StateSpaceModel,
    O: FnMut(&ChainState<M::State>, &SweepRecord),
{
    config.validate()?;
    let mut sweeper = Sweeper::new(config.n_particles, config.extraction.clone(), config.record_timing)?;
    let state = ChainState::new(initial_trace(model, obs, config.n_particles, config.seed)?, None);
    drive(state, config, |s, rngs| sweeper.imh_sweep(s, model, obs, rngs), observer)
}

/// Particle marginal M-H chain over `(theta, particle system)`.
pub fn run_pmmh<M, F, P, O>(
    factory: &F,
    params: &P,
    theta0: Vec<f64>,
    obs: &ObservationRecord,
    config: &ChainConfig,
    observer: O,
) -> Result<ChainOutput>
where
    M: StateSpaceModel,
    F: Fn(&[f64]) -> Result<M>,
    P: ParameterModel + ?Sized,
    O: FnMut(&ChainState<M::State>, &SweepRecord),
{
    config.validate()?;
    if params.prior_logdensity(&theta0) == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter("initial parameter outside the prior support".into()));
    }
    let mut sweeper = Sweeper::new(config.n_particles, config.extraction.clone(), config.record_timing)?;
    let model0 = factory(&theta0)?;
    let state = ChainState::new(initial_trace(&model0, obs, config.n_particles, config.seed)?, Some(theta0));
    drive(state, config, |s, rngs| sweeper.pmmh_sweep(s, factory, params, obs, rngs), observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{hmm_forward_backward, DiscreteHmm, DiscreteHmmParams, GrowthModel, GrowthParams};

    fn small_hmm() -> (DiscreteHmm, ObservationRecord) {
        let params = DiscreteHmmParams {
            initial: vec![0.6, 0.4],
            transition: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            emission: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        };
        let obs = ObservationRecord::from_scalars(&[0.0, 1.0, 1.0, 0.0]).unwrap();
        (DiscreteHmm::new(params).unwrap(), obs)
    }

    #[test]
    fn mode_parsing_round_trips() {
        for s in ["gt", "gtrb", "bs:25", "bsm", "bs:1"] {
            let m: ExtractionMode = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert_eq!("BS7".parse::<ExtractionMode>().unwrap(), ExtractionMode::Backward { trajectories: 7 });
        assert_eq!(ExtractionMode::Backward { trajectories: 25 }.file_stem(), "bs25");
        for bad in ["bs:0", "bs:", "bs", "ffbs", "bs:x"] {
            assert!(bad.parse::<ExtractionMode>().is_err(), "{bad}");
        }
        assert_eq!("PMMH".parse::<SamplerKind>().unwrap(), SamplerKind::Pmmh);
    }

    #[test]
    fn acceptance_rule() {
        assert!(mh_accept(0.0, 0.999_999));
        assert!(!mh_accept(f64::NEG_INFINITY, 0.0));
        assert!(!mh_accept(f64::NAN, 0.0));
        assert!(mh_accept(0.5f64.ln(), 0.49));
        assert!(!mh_accept(0.5f64.ln(), 0.51));
    }

    #[test]
    fn log_random_walk_ratio_is_jacobian() {
        let walk = LogRandomWalk::new(vec![0.3, 0.1], |_: &[f64]| 0.0);
        let a = [1.5, 0.2];
        let b = [2.5, 0.25];
        let ratio = walk.proposal_logdensity(&b, &a) - walk.proposal_logdensity(&a, &b);
        let expected = (2.5f64 / 1.5).ln() + (0.25f64 / 0.2).ln();
        assert!((ratio - expected).abs() < 1e-12);
        assert_eq!(walk.prior_logdensity(&[1.0, -1.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn inverse_gamma_normalises() {
        // trapezoid over a wide grid
        let (a, b) = (3.0, 2.0);
        let h = 1e-3;
        let total: f64 = (1..200_000).map(|i| inverse_gamma_logpdf(i as f64 * h, a, b).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-4, "{total}");
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn single_sweep_chain() {
        let (model, obs) = small_hmm();
        let config = ChainConfig::new(8, 1, 3, vec![ExtractionMode::Genealogy, ExtractionMode::BackwardSmoothing]);
        let out = run_imh(&model, &obs, &config, |_, _| {}).unwrap();
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(out.summary.mode_mean(ExtractionMode::BackwardSmoothing).unwrap(), r.outputs[1].estimates.as_slice());
        assert!(r.tau_pf >= 0.0 && r.tau_bs == 0.0);
    }

    #[test]
    fn chains_are_deterministic_without_timing() {
        let (model, obs) = small_hmm();
        let mut config = ChainConfig::new(
            5,
            30,
            17,
            vec![
                ExtractionMode::Genealogy,
                ExtractionMode::GenealogyRb,
                ExtractionMode::Backward { trajectories: 3 },
                ExtractionMode::BackwardSmoothing,
            ],
        );
        config.record_timing = false;
        config.burn_in = 2;
        let a = run_imh(&model, &obs, &config, |_, _| {}).unwrap();
        let b = run_imh(&model, &obs, &config, |_, _| {}).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records[0].sweep, 0);
        config.seed = 18;
        let c = run_imh(&model, &obs, &config, |_, _| {}).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn rejection_keeps_trace() {
        let (model, obs) = small_hmm();
        let config = ChainConfig::new(3, 200, 5, vec![ExtractionMode::BackwardSmoothing]);
        let mut prev: Option<(f64, Vec<f64>)> = None;
        let mut rejections = 0;
        run_imh(&model, &obs, &config, |state, record| {
            if let Some((log_z, estimates)) = &prev {
                if !record.accepted {
                    rejections += 1;
                    assert_eq!(*log_z, state.log_z);
                    assert_eq!(estimates, &record.outputs[0].estimates);
                }
            }
            assert_eq!(state.log_z, state.trace.log_z);
            prev = Some((state.log_z, record.outputs[0].estimates.clone()));
        })
        .unwrap();
        assert!(rejections > 0);
    }

    #[test]
    fn bsm_chain_matches_forward_backward() {
        let (model, obs) = small_hmm();
        let exact = hmm_forward_backward(model.params(), &obs).unwrap();
        let config = ChainConfig::new(4, 20_000, 9, vec![ExtractionMode::BackwardSmoothing]);
        let out = run_imh(&model, &obs, &config, |_, _| {}).unwrap();
        let means = out.summary.mode_mean(ExtractionMode::BackwardSmoothing).unwrap();
        for (k, m) in means.iter().enumerate() {
            let truth = exact.marginals[k][1];
            assert!((m - truth).abs() < 0.02, "k={k}: {m} vs {truth}");
        }
    }

    #[test]
    fn pmmh_rejects_outside_support() {
        let obs = ObservationRecord::from_scalars(&[0.3, -1.0, 2.0]).unwrap();
        let factory = |t: &[f64]| {
            GrowthModel::new(GrowthParams {
                sigmav_sq: t[0],
                ..GrowthParams::default()
            })
        };
        // prior supported only on (0, 1e-9): every proposal from 10 falls outside
        let params = LogRandomWalk::new(vec![0.1], |t: &[f64]| if t[0] < 1e-9 { 0.0 } else { f64::NEG_INFINITY });
        let config = ChainConfig::new(10, 5, 1, vec![ExtractionMode::Genealogy]);
        assert!(run_pmmh(&factory, &params, vec![10.0], &obs, &config, |_, _| {}).is_err());
        let params = LogRandomWalk::new(vec![0.1], |t: &[f64]| if t[0] > 9.0 && t[0] < 10.0 { 0.0 } else { f64::NEG_INFINITY });
        let out = run_pmmh(&factory, &params, vec![9.999_999], &obs, &config, |s, r| {
            assert!(s.theta.as_ref().unwrap()[0] < 10.0);
            if !r.accepted && r.log_z_proposed == f64::NEG_INFINITY {
                assert_eq!(r.tau_pf, 0.0);
            }
        })
        .unwrap();
        assert_eq!(out.records.len(), 5);
    }

    #[test]
    fn unbounded_weight_heuristic() {
        let growing: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        assert!(weights_look_unbounded(&growing));
        assert!(!weights_look_unbounded(&[0.0; 40]));
        assert!(!weights_look_unbounded(&growing[..6]));
    }
}
