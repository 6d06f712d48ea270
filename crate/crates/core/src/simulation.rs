//! Trajectory simulation for the latent-state and random-effect models, and the
//! sacrifice design that turns trajectories into current-status count data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_model, FitConfig};
use crate::model::{CountDataset, FitResult, ModelKind, ReParams, SsbParams, Trajectory};

pub const STREAM_SSB: u64 = 1;
pub const STREAM_RE: u64 = 2;
pub const STREAM_SACRIFICE: u64 = 3;
pub const STREAM_ORACLE: u64 = 4;
pub const STREAM_REPLICATE: u64 = 5;

/// Deterministic generator for `(seed, domain, index)`.
///
/// Every consumer of randomness gets its own ChaCha stream, so results do not
/// depend on how work is scheduled across threads.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 40) | (index & ((1 << 40) - 1)));
    rng
}

/// Default sacrifice schedule of the computer experiment (hours).
pub const DEFAULT_SCHEDULE: [f64; 10] = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 24.0, 36.0, 48.0, 60.0];

/// Schedule printed in the header of the published simulated sample.
pub const SAMPLE_TABLE_SCHEDULE: [f64; 10] = [2.0, 4.0, 6.0, 8.0, 12.0, 16.0, 20.0, 30.0, 45.0, 60.0];

/// Named schedule presets: `default` and `sample-table`.
pub fn schedule_preset(name: &str) -> Option<Vec<f64>> {
    match name {
        "default" | "protocol" => Some(DEFAULT_SCHEDULE.to_vec()),
        "sample-table" => Some(SAMPLE_TABLE_SCHEDULE.to_vec()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_trajectories: usize,
    pub mass: u32,
    pub horizon: usize,
    pub schedule: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_trajectories: 100,
            mass: 300,
            horizon: 60,
            schedule: DEFAULT_SCHEDULE.to_vec(),
            replicates: 10,
            seed: 20081,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mass == 0 {
            return Err(Error::InvalidData("mass must be at least 1".into()));
        }
        if self.schedule.is_empty() || self.replicates == 0 {
            return Err(Error::InvalidData("schedule and replicates must be nonempty".into()));
        }
        if self.n_trajectories != self.schedule.len() * self.replicates {
            return Err(Error::SizeMismatch {
                expected: self.schedule.len() * self.replicates,
                actual: self.n_trajectories,
            });
        }
        let max_t = self.schedule.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max_t > self.horizon as f64 {
            return Err(Error::GridMismatch(format!(
                "horizon {} is shorter than the last sacrifice time {max_t}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Weibull quantile `lambda (-ln(1 - p))^{1/gamma}`.
pub fn lead_time_quantile(lambda: f64, gamma: f64, p: f64) -> f64 {
    lambda * (-(-p).ln_1p()).powf(1.0 / gamma)
}

/// Inverse-CDF draw of the lead time.
pub fn sample_lead_time<R: Rng + ?Sized>(lambda: f64, gamma: f64, rng: &mut R) -> f64 {
    lead_time_quantile(lambda, gamma, rng.random::<f64>())
}

/// Action time for uniform `p`: a logistic variate with location `-alpha/beta`
/// and scale `1/beta`, left-censored at zero.
pub fn action_time_quantile(alpha: f64, beta: f64, p: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    (((p / (1.0 - p)).ln() - alpha) / beta).max(0.0)
}

/// Draw an action time with `Pr[S > s] = 1 / (1 + e^{alpha + beta s})` for `s >= 0`.
pub fn sample_action_time<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    action_time_quantile(alpha, beta, rng.random::<f64>())
}

/// Cumulative hourly counts: `counts[tau] = #{T < tau + 1}`.
fn hourly_counts(event_times: &[f64], horizon: usize) -> Vec<u32> {
    let mut increments = vec![0u32; horizon + 1];
    for &t in event_times {
        let slot = t.floor();
        if slot <= horizon as f64 {
            increments[slot.max(0.0) as usize] += 1;
        }
    }
    let mut acc = 0;
    increments
        .into_iter()
        .map(|c| {
            acc += c;
            acc
        })
        .collect()
}

fn agent_event_times<R: Rng + ?Sized>(
    offset: f64,
    alpha: f64,
    beta: f64,
    eta: f64,
    mass: u32,
    rng: &mut R,
) -> Vec<f64> {
    let mut times = Vec::with_capacity(mass as usize);
    for _ in 0..mass {
        let active = eta >= 1.0 || rng.random::<f64>() < eta;
        if active {
            times.push(offset + sample_action_time(alpha, beta, rng));
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times
}

/// One latent-state system: a shared lead time `U`, then per agent a phase
/// and an action time `S_m`, giving events at `U + S_m`.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    params: &SsbParams,
    mass: u32,
    horizon: usize,
    rng: &mut R,
) -> Trajectory {
    let u = sample_lead_time(params.lambda(), params.gamma(), rng);
    let times = agent_event_times(u, params.alpha(), params.beta(), params.eta(), mass, rng);
    Trajectory {
        counts: hourly_counts(&times, horizon),
        lead_time: u,
        event_times: Some(times),
    }
}

/// Maximum redraws of a non-positive slope before giving up.
pub const RE_REJECTION_BUDGET: usize = 1_000_000;

/// One random-effect system: `(a, b) ~ N(mu, Sigma)` conditioned on `b > 0`,
/// then independent logistic action times with no lead time.
pub fn simulate_re_trajectory<R: Rng + ?Sized>(
    params: &ReParams,
    mass: u32,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let l = crate::quadrature::cholesky2(&params.covariance())?;
    let [mu1, mu2] = params.mean();
    let mut draw = None;
    for _ in 0..RE_REJECTION_BUDGET {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let a = mu1 + l[0][0] * z1;
        let b = mu2 + l[1][0] * z1 + l[1][1] * z2;
        if b > 0.0 {
            draw = Some((a, b));
            break;
        }
    }
    let (a, b) = draw.ok_or(Error::RejectionBudgetExceeded(RE_REJECTION_BUDGET))?;
    let times = agent_event_times(0.0, a, b, params.eta(), mass, rng);
    Ok(Trajectory {
        counts: hourly_counts(&times, horizon),
        lead_time: 0.0,
        event_times: Some(times),
    })
}

/// `n` latent-state trajectories, trajectory `h` drawn from sub-stream `h`.
pub fn simulate_ensemble(params: &SsbParams, mass: u32, horizon: usize, n: usize, seed: u64) -> Vec<Trajectory> {
    (0..n)
        .into_par_iter()
        .map(|h| simulate_trajectory(params, mass, horizon, &mut substream(seed, STREAM_SSB, h as u64)))
        .collect()
}

/// `n` random-effect trajectories, trajectory `h` drawn from sub-stream `h`.
pub fn simulate_re_ensemble(
    params: &ReParams,
    mass: u32,
    horizon: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    (0..n)
        .into_par_iter()
        .map(|h| simulate_re_trajectory(params, mass, horizon, &mut substream(seed, STREAM_RE, h as u64)))
        .collect()
}

/// Index of the hourly grid point whose count covers `[0, t)`, i.e. `N(t)`.
fn grid_index(t: f64, horizon: usize) -> Result<usize> {
    if t.fract() != 0.0 || t < 1.0 || t > horizon as f64 {
        return Err(Error::GridMismatch(format!(
            "sacrifice time {t} is not an hour in 1..={horizon}"
        )));
    }
    Ok(t as usize - 1)
}

/// Randomly assign trajectories to the `I` sacrifice times, `J` per time, and
/// record each trajectory's events before its assigned time `t`, which equals `N(t)` almost surely.
/// Every trajectory is used once.
pub fn sacrifice_sample<R: Rng + ?Sized>(
    trajectories: &[Trajectory],
    schedule: &[f64],
    replicates: usize,
    mass: u32,
    rng: &mut R,
) -> Result<CountDataset> {
    let expected = schedule.len() * replicates;
    if trajectories.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: trajectories.len(),
        });
    }
    let horizon = trajectories.first().map(Trajectory::horizon).unwrap_or(0);
    if trajectories.iter().any(|tr| tr.horizon() != horizon) {
        return Err(Error::GridMismatch("trajectories have different horizons".into()));
    }
    let mut order: Vec<usize> = (0..trajectories.len()).collect();
    order.shuffle(rng);
    let counts = schedule
        .iter()
        .zip(order.chunks(replicates.max(1)))
        .map(|(&t, group)| {
            let idx = grid_index(t, horizon)?;
            Ok(group.iter().map(|&h| trajectories[h].counts[idx]).collect())
        })
        .collect::<Result<Vec<Vec<u32>>>>()?;
    CountDataset::new(schedule.to_vec(), counts, mass)
}

/// Everything produced by one run of the five-step computer experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolOutput {
    pub trajectories: Vec<Trajectory>,
    pub dataset: CountDataset,
    pub ssb_fit: FitResult,
    pub re_fit: FitResult,
    /// Trajectories regenerated from the fitted random-effect model.
    pub re_trajectories: Vec<Trajectory>,
    /// `loglik(SSB fit) - loglik(RE fit)` on the sacrificed dataset.
    pub log_lr: f64,
}

/// Simulate latent-state trajectories at `theta0`, sacrifice them into a
/// count dataset, fit both the SSB model and the random-effect model (with
/// `eta = 1`), and regenerate an ensemble from the random-effect fit.
pub fn run_protocol(theta0: &SsbParams, cfg: &SimConfig, fit_cfg: &FitConfig) -> Result<ProtocolOutput> {
    cfg.validate()?;
    let trajectories = simulate_ensemble(theta0, cfg.mass, cfg.horizon, cfg.n_trajectories, cfg.seed);
    let mut rng = substream(cfg.seed, STREAM_SACRIFICE, 0);
    let dataset = sacrifice_sample(&trajectories, &cfg.schedule, cfg.replicates, cfg.mass, &mut rng)?;

    let ssb_fit = fit_model(&dataset, ModelKind::Ssb, fit_cfg)?;
    let re_cfg = FitConfig {
        re_eta: false,
        ..fit_cfg.clone()
    };
    let re_fit = fit_model(&dataset, ModelKind::LrmRe, &re_cfg)?;
    let re_params = re_fit
        .re_params()
        .ok_or(Error::InvalidData("random-effect fit returned invalid parameters".into()))?;
    let re_trajectories = simulate_re_ensemble(&re_params, cfg.mass, cfg.horizon, cfg.n_trajectories, cfg.seed)?;
    let log_lr = ssb_fit.loglik - re_fit.loglik;
    Ok(ProtocolOutput {
        trajectories,
        dataset,
        ssb_fit,
        re_fit,
        re_trajectories,
        log_lr,
    })
}

/// Ensemble as CSV: one row per trajectory, `lead_time` then `tau_0..tau_H`.
pub fn trajectories_to_csv(trajectories: &[Trajectory]) -> String {
    let horizon = trajectories.first().map(Trajectory::horizon).unwrap_or(0);
    let mut out = String::from("trajectory,lead_time");
    for tau in 0..=horizon {
        out.push_str(&format!(",tau_{tau}"));
    }
    out.push('\n');
    for (h, tr) in trajectories.iter().enumerate() {
        out.push_str(&format!("{h},{}", tr.lead_time));
        for c in &tr.counts {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`trajectories_to_csv`]; event times are not stored there.
pub fn trajectories_from_csv(text: &str) -> Result<Vec<Trajectory>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        column: 1,
        message: "missing header".into(),
    })?;
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(Error::Parse {
                line: i + 1,
                column: cells.len().min(width) + 1,
                message: format!("expected {width} cells"),
            });
        }
        let lead_time: f64 = cells[1].trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            column: 2,
            message: "bad lead time".into(),
        })?;
        let counts = cells[2..]
            .iter()
            .enumerate()
            .map(|(c, s)| {
                s.trim().parse::<u32>().map_err(|_| Error::Parse {
                    line: i + 1,
                    column: c + 3,
                    message: format!("`{s}` is not a count"),
                })
            })
            .collect::<Result<Vec<u32>>>()?;
        out.push(Trajectory {
            counts,
            lead_time,
            event_times: None,
        });
    }
    Ok(out)
}
