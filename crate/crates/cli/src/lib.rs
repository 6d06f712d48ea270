//! Command implementations behind the `mehm` binary.
//!
//! Each command is a pure function of its input files, resolved configuration
//! and seed, and writes its outputs plus a `config.toml` echo under one
//! output directory.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mehm::analysis::{dynamics_report, DynamicsReport, DEFAULT_CROSS_SECTION_HOURS};
use mehm::estimation::{
    bic_delta, bic_to_csv, default_init_grid, fit_model, profile_iterate, weibull_current_status_fit, BicRow,
    FitConfig,
};
use mehm::model::{CountDataset, FitResult, ModelKind, SsbParams, Trajectory};
use mehm::simulation::{
    run_protocol, sacrifice_sample, schedule_preset, simulate_ensemble, substream, trajectories_to_csv, SimConfig,
    DEFAULT_SCHEDULE, STREAM_REPLICATE, STREAM_SACRIFICE,
};

/// Exit code for unreadable or invalid input.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for numerical or fitting failures.
pub const EXIT_FIT: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Fit(#[from] mehm::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => EXIT_INPUT,
            CliError::Fit(_) => EXIT_FIT,
        }
    }

    fn input(e: mehm::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Resolved settings for every command. Fields absent from a config file take
/// their defaults; command-line flags override both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mass: u32,
    pub seed: u64,
    /// Model for `fit` without `all_models`.
    pub model: ModelKind,
    pub all_models: bool,
    /// `(alpha, beta, lambda, gamma)` for simulation commands.
    pub theta: Vec<f64>,
    pub eta: f64,
    pub schedule: Vec<f64>,
    /// Named schedule; overrides `schedule` when set.
    pub schedule_preset: Option<String>,
    /// Replicate systems per sacrifice time.
    pub replicates: usize,
    pub horizon: usize,
    pub n_reps: usize,
    pub hours: Vec<usize>,
    pub fit: FitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mass: 300,
            seed: 20081,
            model: ModelKind::Ssb,
            all_models: false,
            theta: vec![-3.0, 0.15, 4.0, 1.5],
            eta: 1.0,
            schedule: DEFAULT_SCHEDULE.to_vec(),
            schedule_preset: None,
            replicates: 10,
            horizon: 60,
            n_reps: 100,
            hours: DEFAULT_CROSS_SECTION_HOURS.to_vec(),
            fit: FitConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            context: format!("reading {}", path.display()),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Simulation parameters including `eta`.
    pub fn theta_params(&self) -> CliResult<SsbParams> {
        match self.theta.as_slice() {
            &[a, b, l, g] => SsbParams::new(a, b, l, g, self.eta).map_err(CliError::input),
            &[a, b, l, g, e] => SsbParams::new(a, b, l, g, e).map_err(CliError::input),
            other => Err(CliError::Input(format!(
                "theta needs 4 values (alpha, beta, lambda, gamma) or 5 with eta, got {}",
                other.len()
            ))),
        }
    }

    pub fn resolved_schedule(&self) -> CliResult<Vec<f64>> {
        match &self.schedule_preset {
            Some(name) => schedule_preset(name).ok_or_else(|| CliError::Input(format!("unknown schedule preset `{name}`"))),
            None => Ok(self.schedule.clone()),
        }
    }

    pub fn sim_config(&self) -> CliResult<SimConfig> {
        let schedule = self.resolved_schedule()?;
        let cfg = SimConfig {
            n_trajectories: schedule.len() * self.replicates,
            mass: self.mass,
            horizon: self.horizon,
            schedule,
            replicates: self.replicates,
            seed: self.seed,
        };
        cfg.validate().map_err(CliError::input)?;
        Ok(cfg)
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io {
        context: format!("writing {}", path.display()),
        source,
    })?;
    Ok(path)
}

fn prepare(out: &Path, cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        context: format!("creating {}", out.display()),
        source,
    })?;
    write(out, "config.toml", &cfg.to_toml())?;
    Ok(())
}

fn fit_json(fit: &FitResult, seed: Option<u64>) -> String {
    let mut fit = fit.clone();
    fit.seed = seed;
    fit.to_json() + "\n"
}

/// Outputs of `fit`.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub fits: Vec<FitResult>,
    pub bic: Option<Vec<BicRow>>,
}

/// Fit one model (`fit.json`) or all five (`fit_<model>.json` and `bic.csv`).
pub fn cmd_fit(dataset: &Path, out: &Path, cfg: &RunConfig) -> CliResult<FitOutput> {
    let text = fs::read_to_string(dataset).map_err(|source| CliError::Io {
        context: format!("reading {}", dataset.display()),
        source,
    })?;
    let data = CountDataset::from_csv(&text, cfg.mass).map_err(|e| CliError::Input(format!("{}: {e}", dataset.display())))?;
    if data.n_obs() == 0 {
        return Err(CliError::Input(format!("{}: no observations", dataset.display())));
    }
    prepare(out, cfg)?;
    let models: Vec<ModelKind> = if cfg.all_models {
        ModelKind::ALL.to_vec()
    } else {
        vec![cfg.model]
    };
    let mut fits = Vec::new();
    for &model in &models {
        info!("fitting {model}");
        let fit = fit_model(&data, model, &cfg.fit)?;
        let name = if cfg.all_models {
            format!("fit_{}.json", model.as_str().to_lowercase())
        } else {
            "fit.json".to_string()
        };
        write(out, &name, &fit_json(&fit, None))?;
        fits.push(fit);
    }
    let bic = if cfg.all_models {
        let rows = bic_delta(&fits, data.n_obs())?;
        write(out, "bic.csv", &bic_to_csv(&rows))?;
        Some(rows)
    } else {
        None
    };
    Ok(FitOutput { fits, bic })
}

/// Simulate an ensemble at `theta` and sacrifice it into a count dataset.
pub fn cmd_simulate(out: &Path, cfg: &RunConfig) -> CliResult<(Vec<Trajectory>, CountDataset)> {
    let theta = cfg.theta_params()?;
    let sim = cfg.sim_config()?;
    prepare(out, cfg)?;
    let trajectories = simulate_ensemble(&theta, sim.mass, sim.horizon, sim.n_trajectories, sim.seed);
    let mut rng = substream(sim.seed, STREAM_SACRIFICE, 0);
    let dataset = sacrifice_sample(&trajectories, &sim.schedule, sim.replicates, sim.mass, &mut rng)?;
    write(out, "trajectories.csv", &trajectories_to_csv(&trajectories))?;
    write(out, "dataset.csv", &dataset.to_csv())?;
    Ok((trajectories, dataset))
}

/// Run the simulate/fit/regenerate experiment and write the comparison report.
pub fn cmd_compare(out: &Path, cfg: &RunConfig) -> CliResult<DynamicsReport> {
    let theta = cfg.theta_params()?;
    let sim = cfg.sim_config()?;
    prepare(out, cfg)?;
    let protocol = run_protocol(&theta, &sim, &cfg.fit)?;
    let baseline = fit_model(&protocol.dataset, ModelKind::Lrm, &cfg.fit)?;
    let fits = vec![baseline, protocol.re_fit.clone(), protocol.ssb_fit.clone()];
    let report = dynamics_report(
        &protocol.trajectories,
        &protocol.re_trajectories,
        &protocol.dataset,
        &fits,
        &cfg.hours,
    )?;
    report.write_to_dir(out).map_err(|source| CliError::Io {
        context: format!("writing report to {}", out.display()),
        source,
    })?;
    write(out, "dataset.csv", &protocol.dataset.to_csv())?;
    write(out, "trajectories_ssb.csv", &trajectories_to_csv(&protocol.trajectories))?;
    write(out, "trajectories_re.csv", &trajectories_to_csv(&protocol.re_trajectories))?;
    for fit in &fits {
        let name = format!("fit_{}.json", fit.model.as_str().to_lowercase());
        write(out, &name, &fit_json(fit, Some(cfg.seed)))?;
    }
    Ok(report)
}

/// Estimates from one simulated replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub seed: u64,
    /// `lambda0, gamma0, alpha, beta, lambda, gamma`, or the failure message.
    pub estimates: Result<[f64; 6], String>,
    pub loglik: Option<f64>,
}

/// Mean and standard deviation of one parameter over successful replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub parameter: &'static str,
    pub true_value: f64,
    pub mean: f64,
    /// Sample standard deviation; NaN with fewer than two replicates.
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub replicates: Vec<ReplicateRow>,
    pub summary: Vec<RecoveryRow>,
    pub n_failed: usize,
}

pub const RECOVERY_PARAMETERS: [&str; 6] = ["lambda0", "gamma0", "alpha", "beta", "lambda", "gamma"];

fn replicate_fit(theta: &SsbParams, sim: &SimConfig, fit_cfg: &FitConfig, seed: u64) -> mehm::Result<([f64; 6], f64)> {
    let trajectories = simulate_ensemble(theta, sim.mass, sim.horizon, sim.n_trajectories, seed);
    let mut rng = substream(seed, STREAM_SACRIFICE, 0);
    let data = sacrifice_sample(&trajectories, &sim.schedule, sim.replicates, sim.mass, &mut rng)?;
    let grid = fit_cfg.init_grid.clone().unwrap_or_else(|| default_init_grid(&data));
    let init = weibull_current_status_fit(&data, &grid)?;
    let fit = profile_iterate(&data, (init.lambda, init.gamma), ModelKind::Ssb, fit_cfg.n_outer, fit_cfg)?;
    let p = fit
        .ssb_params()
        .ok_or(mehm::Error::InvalidData("fit returned invalid parameters".into()))?;
    Ok((
        [init.lambda, init.gamma, p.alpha(), p.beta(), p.lambda(), p.gamma()],
        fit.loglik,
    ))
}

/// Summarize successful replicates per parameter.
pub fn recovery_summary(rows: &[ReplicateRow], truth: [f64; 6]) -> Vec<RecoveryRow> {
    let ok: Vec<&[f64; 6]> = rows.iter().filter_map(|r| r.estimates.as_ref().ok()).collect();
    let n = ok.len() as f64;
    RECOVERY_PARAMETERS
        .iter()
        .enumerate()
        .map(|(j, &parameter)| {
            let mean = ok.iter().map(|e| e[j]).sum::<f64>() / n;
            let sd = if ok.len() < 2 {
                f64::NAN
            } else {
                (ok.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            RecoveryRow {
                parameter,
                true_value: truth[j],
                mean,
                sd,
            }
        })
        .collect()
}

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.10}")
    }
}

pub fn replicates_to_csv(rows: &[ReplicateRow]) -> String {
    let mut out = String::from("replicate,seed,status,");
    out.push_str(&RECOVERY_PARAMETERS.join(","));
    out.push_str(",loglik\n");
    for r in rows {
        match &r.estimates {
            Ok(e) => {
                let cells: Vec<String> = e.iter().map(|v| fmt_float(*v)).collect();
                out.push_str(&format!(
                    "{},{},ok,{},{}\n",
                    r.replicate,
                    r.seed,
                    cells.join(","),
                    fmt_float(r.loglik.unwrap_or(f64::NAN))
                ));
            }
            Err(_) => out.push_str(&format!("{},{},failed,,,,,,,\n", r.replicate, r.seed)),
        }
    }
    out
}

pub fn recovery_to_csv(rows: &[RecoveryRow]) -> String {
    let mut out = String::from("parameter,true_value,mean,sd\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.parameter,
            r.true_value,
            fmt_float(r.mean),
            fmt_float(r.sd)
        ));
    }
    out
}

/// Repeat simulate-sacrifice-fit `n_reps` times and summarize parameter recovery.
pub fn cmd_replicate_study(out: &Path, cfg: &RunConfig) -> CliResult<StudyOutput> {
    if cfg.n_reps == 0 {
        return Err(CliError::Input("n_reps must be at least 1".into()));
    }
    let theta = cfg.theta_params()?;
    let sim = cfg.sim_config()?;
    prepare(out, cfg)?;
    let fit_cfg = FitConfig {
        information: false,
        ..cfg.fit.clone()
    };
    let replicates: Vec<ReplicateRow> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|r| {
            let seed = substream(cfg.seed, STREAM_REPLICATE, r as u64).next_u64();
            let result = replicate_fit(&theta, &sim, &fit_cfg, seed);
            match &result {
                Ok(_) => info!("replicate {r} done"),
                Err(e) => warn!("replicate {r} (seed {seed}) failed: {e}"),
            }
            ReplicateRow {
                replicate: r,
                seed,
                loglik: result.as_ref().ok().map(|x| x.1),
                estimates: result.map(|x| x.0).map_err(|e| e.to_string()),
            }
        })
        .collect();
    let n_failed = replicates.iter().filter(|r| r.estimates.is_err()).count();
    let truth = [
        theta.lambda(),
        theta.gamma(),
        theta.alpha(),
        theta.beta(),
        theta.lambda(),
        theta.gamma(),
    ];
    let summary = recovery_summary(&replicates, truth);
    write(out, "replicates.csv", &replicates_to_csv(&replicates))?;
    write(out, "recovery.csv", &recovery_to_csv(&summary))?;
    let failures: Vec<serde_json::Value> = replicates
        .iter()
        .filter_map(|r| {
            r.estimates
                .as_ref()
                .err()
                .map(|e| serde_json::json!({"replicate": r.replicate, "seed": r.seed, "error": e}))
        })
        .collect();
    let status = serde_json::json!({
        "n_reps": cfg.n_reps,
        "n_failed": n_failed,
        "failures": failures,
    });
    write(out, "study.json", &(serde_json::to_string_pretty(&status).expect("json") + "\n"))?;
    Ok(StudyOutput {
        replicates,
        summary,
        n_failed,
    })
}
