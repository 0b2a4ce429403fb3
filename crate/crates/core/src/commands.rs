//! The `simulate`, `run` and `analyze` commands, shared by the command-line
//! front end and the Python bindings.
//!
//! A run directory holds:
//!
//! | file | columns |
//! |------|---------|
//! | `run.cfg` | resolved `key=value` configuration |
//! | `chain.csv` | `sweep,accepted,log_z,tau_pf_s,tau_bs_s` |
//! | `estimates_<mode>.csv` | `k,estimate` chain averages |
//! | `series_<mode>.csv` | `sweep,k,estimate` per-sweep estimates |
//! | `within_<mode>.csv` | `sweep,k,variance` across the `J` trajectories (BS, `J >= 2`) |
//! | `timing.csv` | `component,seconds` totals |
//! | `theta.csv` | `sweep,<parameter names>` (PMMH) |
//! | `trajectories_<mode>.csv` | `sweep,j,k,x` (opt-in) |
//! | `summary.txt` | acceptance rates and diagnostics |
//!
//! `<mode>` is `gt`, `gtrb`, `bsm` or `bs<J>`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};

use crate::analysis::{comparison_table, efficiency_ratios, ratio_summary, recommended_j, variance_report, MethodSeries, RunData, VarianceReport};
use crate::error::{Error, Result};
use crate::io;
use crate::mcmc::{
    inverse_gamma_logpdf, run_imh, run_pmmh, ChainConfig, ChainOutput, ExtractionConfig, ExtractionMode, LogRandomWalk,
    SamplerKind,
};
use crate::model::params::ParamMap;
use crate::model::{
    simulate_data, DiscreteHmm, DiscreteHmmParams, GrowthModel, GrowthParams, LinearGaussianModel, LinearGaussianParams,
    ObservationRecord, ProposalKind, StateSpaceModel,
};
use crate::smoother::DEFAULT_MAX_REJECTIONS;

/// Built-in model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelKind {
    #[default]
    Growth,
    LinearGaussian,
    Hmm,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "growth" => Ok(Self::Growth),
            "lgss" | "linear_gaussian" | "lg" => Ok(Self::LinearGaussian),
            "hmm" | "discrete_hmm" => Ok(Self::Hmm),
            other => Err(Error::InvalidInput(format!("unknown model '{other}' (expected growth, lgss or hmm)"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Growth => "growth",
            Self::LinearGaussian => "lgss",
            Self::Hmm => "hmm",
        })
    }
}

impl ModelKind {
    /// Parameters sampled by PMMH when none are named explicitly.
    pub fn default_theta_keys(&self) -> Option<Vec<String>> {
        match self {
            Self::Growth => Some(vec!["sigmav_sq".into(), "sigmaw_sq".into()]),
            Self::LinearGaussian => Some(vec!["obs_noise_var".into()]),
            Self::Hmm => None,
        }
    }

    /// The full parameter set with defaults filled in for missing keys.
    pub fn resolve_params(&self, map: &ParamMap) -> Result<ParamMap> {
        let mut resolved = match self {
            Self::Growth => GrowthParams::from_param_map(map)?.to_param_map(),
            Self::LinearGaussian => LinearGaussianParams::from_param_map(map)?.to_param_map(),
            Self::Hmm => DiscreteHmmParams::from_param_map(map)?.to_param_map(),
        };
        if let Some(p) = map.get("proposal") {
            resolved.set("proposal", p);
        }
        Ok(resolved)
    }
}

fn proposal_kind(map: &ParamMap) -> Result<ProposalKind> {
    Ok(map.parsed::<ProposalKind>("proposal")?.unwrap_or_default())
}

fn growth_model(map: &ParamMap) -> Result<GrowthModel> {
    if proposal_kind(map)? != ProposalKind::Bootstrap {
        return Err(Error::InvalidParameter("the growth model only supports the bootstrap proposal".into()));
    }
    GrowthModel::new(GrowthParams::from_param_map(map)?)
}

fn lgss_model(map: &ParamMap) -> Result<LinearGaussianModel> {
    LinearGaussianModel::with_proposal(LinearGaussianParams::from_param_map(map)?, proposal_kind(map)?)
}

fn hmm_model(map: &ParamMap) -> Result<DiscreteHmm> {
    Ok(DiscreteHmm::new(DiscreteHmmParams::from_param_map(map)?)?.with_proposal(proposal_kind(map)?))
}

/// Seed from the configuration, or fresh entropy when absent.
pub fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub model: ModelKind,
    pub params: ParamMap,
    /// Number of observation rows.
    pub n_obs: usize,
    pub seed: Option<u64>,
    /// Output directory.
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutcome {
    pub seed: u64,
    pub observations: PathBuf,
    pub latent: PathBuf,
}

/// Simulates a latent path and observations, writing `observations.csv`
/// (`k,y`) and `latent.csv` (`k,x`) to `config.out`.
pub fn cmd_simulate(config: &SimulateConfig) -> Result<SimulateOutcome> {
    let seed = resolve_seed(config.seed);
    fs::create_dir_all(&config.out)?;
    let observations = config.out.join("observations.csv");
    let latent = config.out.join("latent.csv");
    match config.model {
        ModelKind::Growth => {
            let model = GrowthModel::simulator(GrowthParams::from_param_map(&config.params)?)?;
            let (states, obs) = simulate_data(&model, config.n_obs, seed)?;
            io::save_observations(&observations, &obs, &["growth model: row k holds the observation at model time k + 1"])?;
            io::save_latent(&latent, &states)?;
        }
        ModelKind::LinearGaussian => {
            let (states, obs) = simulate_data(&lgss_model(&config.params)?, config.n_obs, seed)?;
            io::save_observations(&observations, &obs, &[])?;
            io::save_latent(&latent, &states)?;
        }
        ModelKind::Hmm => {
            let (states, obs) = simulate_data(&hmm_model(&config.params)?, config.n_obs, seed)?;
            io::save_observations(&observations, &obs, &[])?;
            io::save_latent(&latent, &states)?;
        }
    }
    Ok(SimulateOutcome {
        seed,
        observations,
        latent,
    })
}

/// Settings of the `run` command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub params: ParamMap,
    pub data: PathBuf,
    pub sampler: SamplerKind,
    /// Mode specifications; a bare `bs` takes `traj` trajectories.
    pub modes: Vec<String>,
    pub n_particles: usize,
    pub sweeps: usize,
    pub traj: usize,
    pub seed: Option<u64>,
    pub burn_in: usize,
    pub max_rejections: usize,
    pub out: PathBuf,
    pub chains: usize,
    pub record_timing: bool,
    pub accept_reject: bool,
    pub dump_trajectories: bool,
    /// Parameter names moved by PMMH.
    pub theta_keys: Option<Vec<String>>,
    /// Random-walk step on the log scale for each PMMH parameter.
    pub rw_scale: f64,
    /// Inverse-gamma prior shape and scale for each PMMH parameter.
    pub prior_shape: f64,
    pub prior_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Growth,
            params: ParamMap::default(),
            data: PathBuf::from("observations.csv"),
            sampler: SamplerKind::Imh,
            modes: ["gt", "gtrb", "bs", "bsm"].iter().map(|s| s.to_string()).collect(),
            n_particles: 500,
            sweeps: 5000,
            traj: 25,
            seed: None,
            burn_in: 0,
            max_rejections: DEFAULT_MAX_REJECTIONS,
            out: PathBuf::from("run"),
            chains: 1,
            record_timing: true,
            accept_reject: true,
            dump_trajectories: false,
            theta_keys: None,
            rw_scale: 0.1,
            prior_shape: 1.0,
            prior_scale: 1.0,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Parse(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

fn split_list(value: &str) -> Vec<String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

impl RunConfig {
    /// Applies a flat `key=value` configuration. Keys follow the long
    /// command-line flags with `-` replaced by `_`.
    pub fn apply_map(&mut self, map: &ParamMap) -> Result<()> {
        for key in map.keys() {
            let value = map.get(key).expect("key present");
            match key {
                "model" => self.model = value.parse()?,
                "params" => self.params = ParamMap::load(Path::new(value))?,
                "data" => self.data = PathBuf::from(value),
                "sampler" => self.sampler = value.parse()?,
                "mode" | "modes" => self.modes = split_list(value),
                "particles" => self.n_particles = map.parsed(key)?.expect("present"),
                "sweeps" => self.sweeps = map.parsed(key)?.expect("present"),
                "traj" => self.traj = map.parsed(key)?.expect("present"),
                "seed" => self.seed = map.parsed(key)?,
                "burn_in" => self.burn_in = map.parsed(key)?.expect("present"),
                "max_rej" | "max_rejections" => self.max_rejections = map.parsed(key)?.expect("present"),
                "out" => self.out = PathBuf::from(value),
                "chains" => self.chains = map.parsed(key)?.expect("present"),
                "timing" => self.record_timing = parse_bool(key, value)?,
                "accept_reject" => self.accept_reject = parse_bool(key, value)?,
                "dump_trajectories" => self.dump_trajectories = parse_bool(key, value)?,
                "theta" => self.theta_keys = Some(split_list(value)),
                "rw_scale" => self.rw_scale = map.f64(key)?,
                "prior_shape" => self.prior_shape = map.f64(key)?,
                "prior_scale" => self.prior_scale = map.f64(key)?,
                other => return Err(Error::InvalidInput(format!("unknown configuration key '{other}'"))),
            }
        }
        Ok(())
    }

    pub fn from_map(map: &ParamMap) -> Result<Self> {
        let mut config = Self::default();
        config.apply_map(map)?;
        Ok(config)
    }

    pub fn extraction_modes(&self) -> Result<Vec<ExtractionMode>> {
        let mut modes = Vec::new();
        for spec in &self.modes {
            let mode = if spec.trim().eq_ignore_ascii_case("bs") {
                ExtractionMode::Backward { trajectories: self.traj }
            } else {
                spec.parse()?
            };
            if !modes.contains(&mode) {
                modes.push(mode);
            }
        }
        Ok(modes)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("particles", self.n_particles),
            ("sweeps", self.sweeps),
            ("traj", self.traj),
            ("max_rej", self.max_rejections),
            ("chains", self.chains),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be at least 1")));
            }
        }
        if self.extraction_modes()?.is_empty() {
            return Err(Error::InvalidInput("at least one mode is required".into()));
        }
        if self.sampler == SamplerKind::Pmmh {
            if !(self.rw_scale > 0.0 && self.prior_shape > 0.0 && self.prior_scale > 0.0) {
                return Err(Error::InvalidInput("rw_scale, prior_shape and prior_scale must be positive".into()));
            }
            if self.theta_keys().is_none() {
                return Err(Error::InvalidInput(format!("PMMH is not available for the {} model", self.model)));
            }
        }
        Ok(())
    }

    fn theta_keys(&self) -> Option<Vec<String>> {
        self.theta_keys.clone().or_else(|| self.model.default_theta_keys()).filter(|k| !k.is_empty())
    }

    fn chain_config(&self, seed: u64) -> Result<ChainConfig> {
        Ok(ChainConfig {
            n_particles: self.n_particles,
            sweeps: self.sweeps,
            burn_in: self.burn_in,
            seed,
            extraction: ExtractionConfig {
                modes: self.extraction_modes()?,
                accept_reject: self.accept_reject,
                max_rejections: self.max_rejections,
                keep_trajectories: self.dump_trajectories,
                keep_marginals: false,
            },
            record_timing: self.record_timing,
        })
    }

    /// The configuration as written to `run.cfg`.
    pub fn to_map(&self, seed: u64) -> Result<ParamMap> {
        let mut map = ParamMap::default();
        map.set("model", self.model.to_string());
        map.set("data", self.data.display().to_string());
        map.set("sampler", self.sampler.to_string());
        let modes: Vec<String> = self.extraction_modes()?.iter().map(ExtractionMode::to_string).collect();
        map.set("mode", modes.join(","));
        map.set("particles", self.n_particles.to_string());
        map.set("sweeps", self.sweeps.to_string());
        map.set("traj", self.traj.to_string());
        map.set("seed", seed.to_string());
        map.set("burn_in", self.burn_in.to_string());
        map.set("max_rej", self.max_rejections.to_string());
        map.set("timing", self.record_timing.to_string());
        map.set("accept_reject", self.accept_reject.to_string());
        if self.sampler == SamplerKind::Pmmh {
            map.set("theta", self.theta_keys().unwrap_or_default().join(","));
            map.set_f64("rw_scale", self.rw_scale);
            map.set_f64("prior_shape", self.prior_shape);
            map.set_f64("prior_scale", self.prior_scale);
        }
        Ok(map)
    }
}

/// Outcome of one chain of a `run`.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub dir: PathBuf,
    pub seed: u64,
    pub output: ChainOutput,
    /// Final summary line.
    pub summary_line: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub chains: Vec<ChainRun>,
}

fn run_chain_for<M: StateSpaceModel>(
    config: &RunConfig,
    model: &M,
    builder: &(dyn Fn(&ParamMap) -> Result<M> + Sync),
    obs: &ObservationRecord,
    seed: u64,
) -> Result<ChainOutput> {
    let chain_config = config.chain_config(seed)?;
    match config.sampler {
        SamplerKind::Imh => run_imh(model, obs, &chain_config, |_, _| {}),
        SamplerKind::Pmmh => {
            let keys = config.theta_keys().expect("validated");
            let base = config.model.resolve_params(&config.params)?;
            let theta0 = keys.iter().map(|k| base.f64(k)).collect::<Result<Vec<_>>>()?;
            let (shape, scale) = (config.prior_shape, config.prior_scale);
            let params = LogRandomWalk::new(vec![config.rw_scale; keys.len()], move |t: &[f64]| {
                t.iter().map(|x| inverse_gamma_logpdf(*x, shape, scale)).sum()
            });
            let factory = |theta: &[f64]| {
                let mut map = base.clone();
                for (k, v) in keys.iter().zip(theta) {
                    map.set_f64(k, *v);
                }
                builder(&map)
            };
            run_pmmh(&factory, &params, theta0, obs, &chain_config, |_, _| {})
        }
    }
}

fn run_chains<M: StateSpaceModel>(
    config: &RunConfig,
    builder: &(dyn Fn(&ParamMap) -> Result<M> + Sync),
    obs: &ObservationRecord,
    seed: u64,
) -> Result<Vec<(u64, ChainOutput)>> {
    let model = builder(&config.params)?;
    let seeds: Vec<u64> = (0..config.chains as u64).map(|c| seed.wrapping_add(c)).collect();
    if seeds.len() == 1 {
        return Ok(vec![(seed, run_chain_for(config, &model, builder, obs, seed)?)]);
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&s| {
                let model = &model;
                scope.spawn(move || run_chain_for(config, model, builder, obs, s).map(|out| (s, out)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    })
}

/// Runs the configured chain(s) and writes their output files.
///
/// With several chains, chain `c` uses seed `seed + c` and writes to
/// `<out>/chain_<c>`.
pub fn cmd_run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let obs = io::load_observations(&config.data)?;
    let seed = resolve_seed(config.seed);
    let results = match config.model {
        ModelKind::Growth => run_chains(config, &growth_model, &obs, seed)?,
        ModelKind::LinearGaussian => run_chains(config, &lgss_model, &obs, seed)?,
        ModelKind::Hmm => run_chains(config, &hmm_model, &obs, seed)?,
    };
    let mut chains = Vec::new();
    for (c, (chain_seed, output)) in results.into_iter().enumerate() {
        let dir = if config.chains == 1 { config.out.clone() } else { config.out.join(format!("chain_{c}")) };
        let summary_line = write_run(&dir, config, chain_seed, &output)?;
        info!("{}: {summary_line}", dir.display());
        chains.push(ChainRun {
            dir,
            seed: chain_seed,
            output,
            summary_line,
        });
    }
    Ok(RunOutcome { seed, chains })
}

fn write_run(dir: &Path, config: &RunConfig, seed: u64, output: &ChainOutput) -> Result<String> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("run.cfg"), config.to_map(seed)?.to_string())?;
    fs::write(dir.join("params.cfg"), config.model.resolve_params(&config.params)?.to_string())?;

    let log: Vec<io::ChainLogRow> = output
        .records
        .iter()
        .map(|r| io::ChainLogRow {
            sweep: r.sweep,
            accepted: r.accepted,
            log_z: r.log_z,
            tau_pf: r.tau_pf,
            tau_bs: r.tau_bs,
        })
        .collect();
    io::write_chain_log(fs::File::create(dir.join("chain.csv"))?, &log)?;

    let data = RunData::from_chain(output);
    let mut timing = String::from("component,seconds\nfilter,");
    writeln!(timing, "{}", data.filter_seconds).expect("string write");
    for method in &data.methods {
        let stem = method.mode.file_stem();
        let mean = output.summary.mode_mean(method.mode).expect("mode present");
        io::save_estimates(&dir.join(format!("estimates_{stem}.csv")), mean)?;
        io::write_sweep_series(fs::File::create(dir.join(format!("series_{stem}.csv")))?, "estimate", &method.estimates)?;
        if let Some(w) = &method.within_variance {
            io::write_sweep_series(fs::File::create(dir.join(format!("within_{stem}.csv")))?, "variance", w)?;
        }
        writeln!(timing, "{},{}", method.mode, method.seconds).expect("string write");
    }
    writeln!(timing, "tau_pf,{}\ntau_bs,{}", data.tau_pf, data.tau_bs).expect("string write");
    fs::write(dir.join("timing.csv"), timing)?;

    if config.sampler == SamplerKind::Pmmh {
        let keys = config.theta_keys().unwrap_or_default();
        let mut w = csv::Writer::from_path(dir.join("theta.csv"))?;
        let mut header = vec!["sweep".to_string()];
        header.extend(keys);
        w.write_record(&header)?;
        for r in &output.records {
            let mut row = vec![r.sweep.to_string()];
            row.extend(r.theta.iter().flatten().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
    }

    if config.dump_trajectories {
        for &mode in &config.extraction_modes()? {
            if !matches!(mode, ExtractionMode::Genealogy | ExtractionMode::Backward { .. }) {
                continue;
            }
            let mut w = csv::Writer::from_path(dir.join(format!("trajectories_{}.csv", mode.file_stem())))?;
            w.write_record(["sweep", "j", "k", "x"])?;
            for r in &output.records {
                let paths = r.output(mode).and_then(|o| o.trajectories.as_ref());
                for (j, path) in paths.into_iter().flatten().enumerate() {
                    for (k, x) in path.iter().enumerate() {
                        w.write_record([r.sweep.to_string(), j.to_string(), k.to_string(), x.to_string()])?;
                    }
                }
            }
            w.flush()?;
        }
    }

    let s = &output.summary;
    let summary_line = format!(
        "sweeps {} accepted {} acceptance rate {:.4} IS acceptance rate {:.4}",
        s.sweeps,
        s.accepted,
        s.acceptance_rate,
        s.is_acceptance_rate()
    );
    let mut text = String::new();
    writeln!(text, "sweeps={}", s.sweeps).expect("string write");
    writeln!(text, "accepted={}", s.accepted).expect("string write");
    writeln!(text, "acceptance_rate={}", s.acceptance_rate).expect("string write");
    writeln!(text, "is_proposals={}", s.backward_stats.is_proposals).expect("string write");
    writeln!(text, "is_accepts={}", s.backward_stats.is_accepts).expect("string write");
    writeln!(text, "is_fallbacks={}", s.backward_stats.fallbacks).expect("string write");
    writeln!(text, "is_acceptance_rate={}", s.is_acceptance_rate()).expect("string write");
    writeln!(text, "unbounded_weights_suspected={}", s.unbounded_weights_suspected).expect("string write");
    fs::write(dir.join("summary.txt"), text)?;
    Ok(summary_line)
}

#[derive(Debug, Clone)]
pub struct AnalyzeOutcome {
    pub report: VarianceReport,
    /// Pairwise efficiency-ratio table (empty for single-mode runs).
    pub comparison: String,
    pub recommended_j: Option<usize>,
}

fn read_timing(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().from_path(path)?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let v = rec[1].parse().map_err(|_| Error::Parse(format!("bad timing value '{}'", &rec[1])))?;
            Ok((rec[0].to_string(), v))
        })
        .collect()
}

/// Reads a run directory back into [`RunData`]. Modes whose series file is
/// missing are skipped with a warning.
pub fn load_run(dir: &Path) -> Result<RunData> {
    let cfg_path = dir.join("run.cfg");
    let cfg = ParamMap::load(&cfg_path)
        .map_err(|e| Error::InvalidInput(format!("{} is not a run directory ({e})", dir.display())))?;
    let modes: Vec<ExtractionMode> = split_list(cfg.get("mode").unwrap_or(""))
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let timing = read_timing(&dir.join("timing.csv"))?;
    let lookup = |name: &str| timing.iter().find(|(n, _)| n == name).map(|(_, v)| *v);
    let mut methods = Vec::new();
    for mode in modes {
        let stem = mode.file_stem();
        let series_path = dir.join(format!("series_{stem}.csv"));
        if !series_path.exists() {
            warn!("no output for mode {mode} in {}; skipped", dir.display());
            continue;
        }
        let estimates = io::read_sweep_series(fs::File::open(&series_path)?, "estimate")?;
        let within_path = dir.join(format!("within_{stem}.csv"));
        let within_variance = if within_path.exists() {
            Some(io::read_sweep_series(fs::File::open(&within_path)?, "variance")?)
        } else {
            None
        };
        methods.push(MethodSeries {
            mode,
            estimates,
            within_variance,
            seconds: lookup(&mode.to_string()).unwrap_or(0.0),
        });
    }
    if methods.is_empty() {
        return Err(Error::InvalidInput(format!("no mode outputs found in {}", dir.display())));
    }
    Ok(RunData {
        methods,
        filter_seconds: lookup("filter").unwrap_or(0.0),
        tau_pf: lookup("tau_pf").unwrap_or(0.0),
        tau_bs: lookup("tau_bs").unwrap_or(0.0),
    })
}

/// Writes `variance_report.csv` and `comparison.txt` into the run directory.
pub fn cmd_analyze(dir: &Path) -> Result<AnalyzeOutcome> {
    let data = load_run(dir)?;
    let report = variance_report(&data)?;
    report.save(&dir.join("variance_report.csv"))?;
    let mut comparison = comparison_table(&report);
    let recommended_j = report
        .j_opt_geometric_mean
        .and_then(|g| recommended_j(&[g]));
    let mut text = comparison.clone();
    if let (Some(g), Some(j)) = (report.j_opt_geometric_mean, recommended_j) {
        writeln!(text, "j_opt geometric mean {g:.3}, recommended J = {j}").expect("string write");
    }
    let mut f = fs::File::create(dir.join("comparison.txt"))?;
    f.write_all(text.as_bytes())?;
    if comparison.is_empty() && report.methods().len() > 1 {
        comparison = "no efficiency ratios available (timing disabled?)\n".into();
    }
    Ok(AnalyzeOutcome {
        report,
        comparison,
        recommended_j,
    })
}

/// Efficiency-ratio summary of `numerator` against `denominator`, if both
/// are present in `report`.
pub fn efficiency_summary(report: &VarianceReport, numerator: &str, denominator: &str) -> Option<crate::analysis::RatioSummary> {
    ratio_summary(&efficiency_ratios(report, numerator, denominator))
}
