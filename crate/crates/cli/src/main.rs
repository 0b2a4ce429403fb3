use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pfsmooth_core::commands::{cmd_analyze, cmd_run, cmd_simulate, ModelKind, RunConfig, SimulateConfig};
use pfsmooth_core::model::params::ParamMap;
use pfsmooth_core::Error;

/// Particle smoothing with Metropolised forward-filtering backward-sampling.
#[derive(Parser, Debug)]
#[command(name = "pfsmooth", version, about)]
struct Cli {
    /// Log level when RUST_LOG is unset (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a latent path and observations from a model.
    Simulate(SimulateArgs),
    /// Run a Metropolised particle smoothing chain on observed data.
    Run(RunArgs),
    /// Standard errors, efficiencies and the recommended J for a run.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// growth, lgss or hmm.
    #[arg(long, default_value = "growth")]
    model: ModelKind,
    /// key=value parameter file; missing keys take model defaults.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Number of observation rows.
    #[arg(short = 'n', long = "n-obs", default_value_t = 50)]
    n_obs: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for observations.csv and latent.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// key=value run configuration; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Observation CSV (columns k,y).
    #[arg(long)]
    data: Option<PathBuf>,
    /// imh or pmmh.
    #[arg(long)]
    sampler: Option<String>,
    /// gt, gtrb, bs, bs:J or bsm; repeatable or comma separated.
    #[arg(long = "mode", value_delimiter = ',')]
    modes: Vec<String>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    /// Trajectories per sweep for a bare `bs` mode.
    #[arg(long)]
    traj: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Failed accept-reject proposals before exact backward sampling.
    #[arg(long)]
    max_rej: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Independent chains run in parallel with seeds seed, seed+1, ...
    #[arg(long)]
    chains: Option<usize>,
    /// Write zero timings so outputs are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Exact backward sampling instead of accept-reject.
    #[arg(long)]
    exact_backward: bool,
    /// Write sampled trajectories for gt and bs modes.
    #[arg(long)]
    dump_trajectories: bool,
    /// PMMH parameter names, comma separated.
    #[arg(long)]
    theta: Option<String>,
    /// PMMH random-walk step on the log scale.
    #[arg(long)]
    rw_scale: Option<f64>,
    /// PMMH inverse-gamma prior shape.
    #[arg(long)]
    prior_shape: Option<f64>,
    /// PMMH inverse-gamma prior scale.
    #[arg(long)]
    prior_scale: Option<f64>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Run directory (a multi-chain run analyses every chain_* inside).
    #[arg(value_name = "DIR", conflicts_with = "out")]
    dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> ParamMap {
        let mut map = ParamMap::default();
        let mut set = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                map.set(key, v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        set("model", self.model.clone());
        set("params", path(&self.params));
        set("data", path(&self.data));
        set("sampler", self.sampler.clone());
        set("mode", (!self.modes.is_empty()).then(|| self.modes.join(",")));
        set("particles", self.particles.map(|v| v.to_string()));
        set("sweeps", self.sweeps.map(|v| v.to_string()));
        set("traj", self.traj.map(|v| v.to_string()));
        set("seed", self.seed.map(|v| v.to_string()));
        set("burn_in", self.burn_in.map(|v| v.to_string()));
        set("max_rej", self.max_rej.map(|v| v.to_string()));
        set("out", path(&self.out));
        set("chains", self.chains.map(|v| v.to_string()));
        set("timing", self.no_timing.then(|| "false".into()));
        set("accept_reject", self.exact_backward.then(|| "false".into()));
        set("dump_trajectories", self.dump_trajectories.then(|| "true".into()));
        set("theta", self.theta.clone());
        set("rw_scale", self.rw_scale.map(|v| v.to_string()));
        set("prior_shape", self.prior_shape.map(|v| v.to_string()));
        set("prior_scale", self.prior_scale.map(|v| v.to_string()));
        map
    }

    fn config(&self) -> Result<RunConfig, Error> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config.apply_map(&ParamMap::load(path)?)?;
        }
        config.apply_map(&self.overrides())?;
        Ok(config)
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), Error> {
    let params = match &args.params {
        Some(p) => ParamMap::load(p)?,
        None => ParamMap::default(),
    };
    let outcome = cmd_simulate(&SimulateConfig {
        model: args.model,
        params,
        n_obs: args.n_obs,
        seed: args.seed,
        out: args.out.clone(),
    })?;
    println!("seed {}", outcome.seed);
    println!("wrote {} and {}", outcome.observations.display(), outcome.latent.display());
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), Error> {
    let config = args.config()?;
    let outcome = cmd_run(&config)?;
    println!("seed {}", outcome.seed);
    for chain in &outcome.chains {
        println!("{}: {}", chain.dir.display(), chain.summary_line);
    }
    Ok(())
}

fn analyze_one(dir: &Path) -> Result<(), Error> {
    let outcome = cmd_analyze(dir)?;
    println!("{}: wrote variance_report.csv", dir.display());
    print!("{}", outcome.comparison);
    if let (Some(g), Some(j)) = (outcome.report.j_opt_geometric_mean, outcome.recommended_j) {
        println!("j_opt geometric mean {g:.3}, recommended J = {j}");
    }
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<(), Error> {
    let dir = args.dir.clone().or_else(|| args.out.clone()).unwrap_or_else(|| PathBuf::from("run"));
    if dir.join("run.cfg").exists() {
        return analyze_one(&dir);
    }
    let mut chains: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("chain_")) && p.join("run.cfg").exists())
        .collect();
    if chains.is_empty() {
        return Err(Error::InvalidInput(format!("{} is not a run directory", dir.display())));
    }
    chains.sort();
    chains.iter().try_for_each(|c| analyze_one(c))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log)).init();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Run(args) => run(args),
        Command::Analyze(args) => analyze(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
