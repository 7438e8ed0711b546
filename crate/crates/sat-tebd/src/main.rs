//! Command-line front end; all logic lives in `sat_tebd::cli`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 non-convergence,
//! 4 truncation-dominated abort, 1 other failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sat_tebd::cli::{self, CliError, RunConfig, RunMode};
use sat_tebd::mps::UpdatePath;

#[derive(Parser)]
#[command(
    name = "sat-tebd",
    version,
    about = "Transport of a 1D atom cloud through a switchable single-atom impurity (TEBD)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Scalar overrides applied on top of the JSON config.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Output directory (replaces the config's `output_dir`)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Bond-dimension list, e.g. --chi 20,40
    #[arg(long, value_delimiter = ',')]
    chi: Option<Vec<usize>>,
    /// Trotter step in 1/J
    #[arg(long)]
    dt: Option<f64>,
    /// Total evolution time in 1/J
    #[arg(long)]
    t_total: Option<f64>,
    /// Atoms prepared in the left box
    #[arg(long)]
    n_atoms: Option<usize>,
    /// Atom-molecule coupling Ω/J
    #[arg(long)]
    omega: Option<f64>,
    /// On-site interaction U_bb/J
    #[arg(long)]
    u: Option<f64>,
    /// Kick momenta (sets kicked mode), e.g. --p-k 0.785,1.571
    #[arg(long, value_delimiter = ',')]
    p_k: Option<Vec<f64>>,
    /// Two-site update organization
    #[arg(long, value_enum)]
    path: Option<PathArg>,
    /// Checkpoint every this many samples
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum PathArg {
    Conserving,
    Plain,
}

impl Overrides {
    fn apply(self, config: &mut RunConfig) {
        if let Some(v) = self.output {
            config.output_dir = v;
        }
        if let Some(v) = self.chi {
            config.chi = v;
        }
        if let Some(v) = self.dt {
            config.dt = v;
        }
        if let Some(v) = self.t_total {
            config.t_total = v;
        }
        if let Some(v) = self.n_atoms {
            config.n_atoms = v;
        }
        if let Some(v) = self.omega {
            config.params.omega = v;
        }
        if let Some(v) = self.u {
            config.params.u_bb = v;
        }
        if let Some(v) = self.p_k {
            config.mode = RunMode::Kicked { p_k: v };
        }
        if let Some(v) = self.path {
            config.path = match v {
                PathArg::Conserving => UpdatePath::Conserving,
                PathArg::Plain => UpdatePath::Plain,
            };
        }
        if let Some(v) = self.checkpoint_every {
            config.checkpoint_every = Some(v);
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Prepare the source-box ground state (writes ground.mps + ground.json)
    Ground {
        /// Run configuration (JSON)
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the transport experiment once per (χ, kick) combination
    Evolve {
        /// Run configuration (JSON)
        config: PathBuf,
        /// Reuse a ground.mps box state instead of preparing one
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a one-axis parameter sweep and tabulate steady-state currents
    Sweep {
        /// Run configuration (JSON)
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write free-fermion reference series and the transmission profile
    Oracle {
        /// Run configuration (JSON)
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Continue an interrupted evolution from a checkpoint
    Resume {
        /// Run configuration (JSON)
        config: PathBuf,
        /// Checkpoint file written by a previous run
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn load(config: &PathBuf, overrides: Overrides) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load(config)?;
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ground { config, overrides } => {
            let config = load(&config, overrides)?;
            let out = cli::cmd_ground(&config)?;
            eprintln!(
                "ground state: E = {:.10} J after {} sweeps → {}",
                out.report.energy,
                out.report.sweeps,
                out.state_path.display()
            );
        }
        Command::Evolve { config, snapshot, overrides } => {
            let config = load(&config, overrides)?;
            let out = cli::cmd_evolve(&config, snapshot.as_deref())?;
            report_evolve(&config, &out)?;
        }
        Command::Sweep { config, overrides } => {
            let config = load(&config, overrides)?;
            let out = cli::cmd_sweep(&config)?;
            eprintln!("sweep table → {}", out.table_path.display());
            if out.truncation_dominated {
                return Err(CliError::TruncationDominated(config.output_dir));
            }
        }
        Command::Oracle { config, overrides } => {
            let config = load(&config, overrides)?;
            let out = cli::cmd_oracle(&config)?;
            eprintln!(
                "oracle artifacts: {} fermion series, transmission profile → {}",
                out.fermion_series.len(),
                out.summary_path.display()
            );
        }
        Command::Resume { config, checkpoint, overrides } => {
            let config = load(&config, overrides)?;
            let out = cli::cmd_resume(&config, &checkpoint)?;
            report_evolve(&config, &out)?;
        }
    }
    Ok(())
}

fn report_evolve(config: &RunConfig, out: &cli::EvolveOutcome) -> Result<(), CliError> {
    for a in &out.artifacts {
        match &a.fit {
            Some(fit) => eprintln!(
                "{}: I_SS = {:.6e} J over t ∈ [{:.2}, {:.2}] → {}",
                a.name, fit.i_ss, fit.window.0, fit.window.1,
                a.csv_path.display()
            ),
            None => eprintln!("{}: series too short for a current fit → {}",
                a.name, a.csv_path.display()),
        }
    }
    if out.truncation_dominated {
        return Err(CliError::TruncationDominated(config.output_dir.clone()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
