use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mehm::model::ModelKind;
use mehm_cli::{cmd_compare, cmd_fit, cmd_replicate_study, cmd_simulate, CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "mehm", version, about = "Fit, simulate and compare mass event-history count models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with run settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Agents per system.
    #[arg(long)]
    mass: Option<u32>,
    /// Relative quadrature tolerance for reported likelihoods.
    #[arg(long)]
    rel_tol: Option<f64>,
}

#[derive(Args)]
struct Simulation {
    /// alpha,beta,lambda,gamma[,eta]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
    #[arg(long)]
    eta: Option<f64>,
    /// Schedule preset: `default` or `sample-table`.
    #[arg(long)]
    schedule: Option<String>,
    /// Replicate systems per sacrifice time.
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit models to a count dataset CSV.
    Fit {
        dataset: PathBuf,
        /// LRM, LRM_PLUS, LRM_RE, SSB or SSB_PLUS.
        #[arg(long)]
        model: Option<ModelKind>,
        /// Fit all five models and write a BIC table.
        #[arg(long)]
        all_models: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate trajectories and a sacrificed dataset.
    Simulate {
        #[command(flatten)]
        sim: Simulation,
        #[command(flatten)]
        common: Common,
    },
    /// Compare latent-state and random-effect dynamics on simulated data.
    Compare {
        #[command(flatten)]
        sim: Simulation,
        #[command(flatten)]
        common: Common,
    },
    /// Repeated simulate-and-fit study of parameter recovery.
    ReplicateStudy {
        #[arg(long)]
        n_reps: Option<usize>,
        #[command(flatten)]
        sim: Simulation,
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common, sim: Option<&Simulation>) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(mass) = common.mass {
        cfg.mass = mass;
    }
    if let Some(tol) = common.rel_tol {
        cfg.fit.quad.rel_tol = tol;
    }
    if let Some(sim) = sim {
        if let Some(theta) = &sim.theta {
            cfg.theta = theta.clone();
        }
        if let Some(eta) = sim.eta {
            cfg.eta = eta;
        }
        if let Some(name) = &sim.schedule {
            cfg.schedule_preset = Some(name.clone());
        }
        if let Some(j) = sim.replicates {
            cfg.replicates = j;
        }
    }
    cfg.fit.quad.validate().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit {
            dataset,
            model,
            all_models,
            common,
        } => {
            let mut cfg = resolve(&common, None)?;
            if let Some(m) = model {
                cfg.model = m;
            }
            cfg.all_models |= all_models;
            let out = cmd_fit(&dataset, &common.out, &cfg)?;
            for fit in &out.fits {
                println!("{}\tloglik {:.6}\tp {}", fit.model, fit.loglik, fit.n_params);
            }
            if let Some(rows) = &out.bic {
                for r in rows {
                    println!("{}\tdelta_bic {:.4}", r.model, r.delta_bic);
                }
            }
        }
        Command::Simulate { sim, common } => {
            let cfg = resolve(&common, Some(&sim))?;
            let (traj, data) = cmd_simulate(&common.out, &cfg)?;
            println!("{} trajectories, {} observations", traj.len(), data.n_obs());
        }
        Command::Compare { sim, common } => {
            let cfg = resolve(&common, Some(&sim))?;
            let report = cmd_compare(&common.out, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&report.summary()).expect("json"));
        }
        Command::ReplicateStudy { n_reps, sim, common } => {
            let mut cfg = resolve(&common, Some(&sim))?;
            if let Some(n) = n_reps {
                cfg.n_reps = n;
            }
            let out = cmd_replicate_study(&common.out, &cfg)?;
            for r in &out.summary {
                println!("{}\ttrue {}\tmean {:.4}\tsd {:.4}", r.parameter, r.true_value, r.mean, r.sd);
            }
            println!("failed {}", out.n_failed);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
