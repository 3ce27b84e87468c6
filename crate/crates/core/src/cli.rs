//! The `boars` command line.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser};

use crate::engine::{random_baseline, AcquisitionKind, BoConfig, Experiment, Voter};
use crate::error::{Error, Result};
use crate::grid::{generate_synthetic_grid, load_dataset, save_dataset, SimulatedInstrument, SpectralGrid, SyntheticConfig};
use crate::session::{ReplayVoter, ThresholdVoter};
use crate::surrogate::KernelKind;

#[derive(Debug, Parser)]
#[command(name = "boars", version, about = "Human-in-the-loop Bayesian optimization over spectral grids")]
pub struct Cli {
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Serve the HTTP API instead of running an experiment.
    #[arg(long)]
    pub serve: bool,
    #[arg(long, default_value_t = 8080, requires = "serve")]
    pub port: u16,
    /// Write the grid to this file and exit.
    #[arg(long, conflicts_with = "serve")]
    pub write_grid: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Grid file (see --write-grid).
    #[arg(long, conflicts_with_all = ["synthetic", "grid_seed", "correlation", "size"])]
    pub dataset: Option<PathBuf>,
    /// Use the built-in synthetic grid (the default without --dataset).
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub grid_seed: Option<u64>,
    /// Image/asymmetry correlation of the synthetic grid.
    #[arg(long)]
    pub correlation: Option<f64>,
    /// Side length of the synthetic grid.
    #[arg(long)]
    pub size: Option<usize>,
}

impl GridArgs {
    pub fn load(&self) -> Result<SpectralGrid> {
        if let Some(path) = &self.dataset {
            return load_dataset(path);
        }
        let mut config = SyntheticConfig::default();
        if let Some(c) = self.correlation {
            config.correlation = c;
        }
        if let Some(n) = self.size {
            config.height = n;
            config.width = n;
        }
        generate_synthetic_grid(&config, self.grid_seed.unwrap_or(crate::DEFAULT_GRID_SEED))
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Number of random initial samples.
    #[arg(long = "init")]
    pub initial: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// rbf, periodic, deep or deep-periodic.
    #[arg(long)]
    pub kernel: Option<KernelKind>,
    /// ei, pi or ucb.
    #[arg(long)]
    pub acquisition: Option<AcquisitionKind>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub reward: Option<f64>,
    /// Optimizer steps of a cold surrogate fit.
    #[arg(long)]
    pub train_steps: Option<usize>,
    /// `threshold` or `replay:PATH` (JSON answers or an events.jsonl).
    #[arg(long, default_value = "threshold")]
    pub voter: String,
    /// Also run the random-sampling control against the frozen target.
    #[arg(long)]
    pub baseline: bool,
    /// Export directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn bo_config(&self) -> Result<BoConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text)?
            }
            None => BoConfig::default(),
        };
        macro_rules! set {
            ($($field:ident).+ = $value:expr) => {
                if let Some(v) = $value {
                    c.$($field).+ = v;
                }
            };
        }
        set!(seed = self.seed);
        set!(window = self.window);
        set!(initial = self.initial);
        set!(iterations = self.iterations);
        set!(kernel = self.kernel);
        set!(acquisition.kind = self.acquisition);
        set!(acquisition.xi = self.xi);
        set!(acquisition.kappa = self.kappa);
        set!(reward = self.reward);
        set!(train.steps = self.train_steps);
        Ok(c)
    }

    pub fn voter(&self) -> Result<Box<dyn Voter>> {
        match self.voter.split_once(':') {
            None if self.voter == "threshold" => Ok(Box::new(ThresholdVoter::default())),
            Some(("replay", path)) => Ok(Box::new(ReplayVoter::from_path(path.as_ref())?)),
            _ => Err(Error::InvalidArgument(format!("unknown voter {:?} (threshold | replay:PATH)", self.voter))),
        }
    }
}

/// Failures split by whether the inputs or the run itself was at fault.
enum Failure {
    Config(Error),
    Runtime(Error),
}

impl Failure {
    fn report(self) -> ExitCode {
        match self {
            Failure::Config(e) => {
                eprintln!("boars: {e}");
                ExitCode::from(1)
            }
            Failure::Runtime(e) => {
                eprintln!("boars: {e}");
                ExitCode::from(2)
            }
        }
    }
}

fn run(grid: &GridArgs, args: &RunArgs) -> std::result::Result<String, Failure> {
    let started = Instant::now();
    let config = args.bo_config().map_err(Failure::Config)?;
    let mut voter = args.voter().map_err(Failure::Config)?;
    let grid = Arc::new(grid.load().map_err(Failure::Config)?);
    let mut experiment =
        Experiment::new(config.clone(), Box::new(SimulatedInstrument::new(grid.clone()))).map_err(Failure::Config)?;
    experiment.run_with(voter.as_mut()).map_err(Failure::Runtime)?;
    let record = experiment.record();
    if let Some(out) = &args.out {
        record.export(out).map_err(Failure::Runtime)?;
    }

    let fmt_mse = |m: Option<f64>| m.map_or_else(|| "n/a".to_string(), |m| format!("{m:.6}"));
    let mut line = format!(
        "status={} explored={} frozen={} mse={}",
        serde_json::to_value(record.status).map_err(|e| Failure::Runtime(e.into()))?.as_str().unwrap_or("?"),
        record.explored.len(),
        record.frozen,
        fmt_mse(record.mse()),
    );
    if args.baseline {
        match experiment.frozen_target() {
            Some(target) => {
                let base = random_baseline(&config, &grid, &target, None).map_err(Failure::Runtime)?;
                if let Some(out) = &args.out {
                    base.export(&out.join("baseline")).map_err(Failure::Runtime)?;
                }
                line.push_str(&format!(" baseline_mse={}", fmt_mse(base.mse())));
            }
            None => log::warn!("no frozen target; skipping the baseline"),
        }
    }
    line.push_str(&format!(" runtime={:.1}s", started.elapsed().as_secs_f64()));
    Ok(line)
}

/// Parses `args`, runs the command and maps failures to exit codes: 1 for
/// bad inputs or configuration, 2 for failures during a run.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.serve {
        let addr = SocketAddr::from(([127, 0, 0, 1], cli.port));
        let rt = match tokio::runtime::Runtime::new() {
            Ok(rt) => rt,
            Err(e) => return Failure::Runtime(Error::io("tokio runtime", e)).report(),
        };
        return match rt.block_on(crate::session::serve(addr)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => Failure::Runtime(Error::io(addr.to_string(), e)).report(),
        };
    }
    if let Some(out) = &cli.write_grid {
        return match cli.grid.load().and_then(|g| save_dataset(&g, out)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => Failure::Config(e).report(),
        };
    }
    match run(&cli.grid, &cli.run) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(f) => f.report(),
    }
}
