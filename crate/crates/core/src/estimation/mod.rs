//! Maximum likelihood fitting for the five models.
//!
//! The latent-state models follow a three-stage scheme: a current-status Weibull
//! fit of the lead time from zero/positive counts, a grid search over the
//! logistic block with the Weibull block held fixed, and a few rounds of
//! alternating block-wise grid maximization. The logistic and random-effect
//! models have smooth low-dimensional likelihoods and use Nelder–Mead from a
//! coarse grid start.

mod bic;
mod grid;
mod information;
mod nelder_mead;

pub use bic::{bic_best, bic_delta, bic_to_csv, BicRow};
pub use grid::{grid_maximize, GridAxis, GridOutcome, GridSpec};
pub use information::{cholesky, observed_information, spd_inverse, standard_errors, StepRule};
pub use nelder_mead::{minimize, NelderMeadConfig, NelderMeadResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{lrm_loglik, re_loglik, ssb_dataset_loglik, ReQuadrature};
use crate::model::{CountDataset, Estimate, FitResult, ModelKind, ReParams, SsbParams, TraceEntry};
use crate::quadrature::QuadConfig;

/// Tolerance for the nondecreasing-profile check.
pub const PROFILE_MONOTONE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Quadrature for the reported log-likelihood and the information matrix.
    pub quad: QuadConfig,
    /// Relative quadrature tolerance used while searching.
    pub search_rel_tol: f64,
    /// Logistic-block grid; `None` uses [`default_logistic_grid`].
    pub logistic_grid: Option<GridSpec>,
    /// Current-status Weibull grid over `(ln lambda, ln gamma)`; `None` derives one from the schedule.
    pub init_grid: Option<GridSpec>,
    /// Half-widths in `(ln lambda, ln gamma)` of the Weibull box searched during profiling.
    pub weibull_half_width: [f64; 2],
    /// Points per axis of that box.
    pub weibull_points: usize,
    /// Alternating rounds after the initial logistic search.
    pub n_outer: usize,
    pub max_iter: usize,
    /// Attach the observed information matrix and standard errors.
    pub information: bool,
    /// Finite-difference scale for the latent-state information matrix.
    pub ssb_info_step: f64,
    /// Estimate `eta` in the random-effect model.
    pub re_eta: bool,
    pub re_method: ReQuadrature,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            quad: QuadConfig::default(),
            search_rel_tol: 1e-6,
            logistic_grid: None,
            init_grid: None,
            weibull_half_width: [10f64.ln(), 3f64.ln()],
            weibull_points: 21,
            n_outer: 2,
            max_iter: 2000,
            information: true,
            ssb_info_step: 1e-4,
            re_eta: true,
            re_method: ReQuadrature::Projected,
        }
    }
}

impl FitConfig {
    fn search_quad(&self) -> QuadConfig {
        self.quad.with_rel_tol(self.search_rel_tol.max(self.quad.rel_tol))
    }

    fn nelder_mead(&self) -> NelderMeadConfig {
        NelderMeadConfig {
            max_iter: self.max_iter,
            ..NelderMeadConfig::default()
        }
    }
}

/// Default logistic grid: `alpha` in `[-10, 0]` and `beta` in `[0.01, 2]`
/// with 21 points each, plus `eta` in `[0.5, 1]` with 11 points for SSB⁺.
pub fn default_logistic_grid(model: ModelKind) -> GridSpec {
    let mut axes = vec![GridAxis::new(-10.0, 0.0, 21), GridAxis::new(0.01, 2.0, 21)];
    if model == ModelKind::SsbPlus {
        axes.push(GridAxis::new(0.5, 1.0, 11));
    }
    GridSpec::new(axes)
}

/// Weibull fit from current-status information only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullInit {
    pub lambda: f64,
    pub gamma: f64,
    pub loglik: f64,
    pub on_boundary: bool,
}

/// `(t, #zero counts, #positive counts)` per sacrifice time.
fn censoring_table(data: &CountDataset) -> Vec<(f64, f64, f64)> {
    data.times()
        .iter()
        .zip(data.counts())
        .filter(|(_, c)| !c.is_empty())
        .map(|(&t, c)| {
            let zeros = c.iter().filter(|&&k| k == 0).count();
            (t, zeros as f64, (c.len() - zeros) as f64)
        })
        .collect()
}

/// Current-status log-likelihood: a zero count right-censors the lead time at
/// `t`, a positive count left-censors it.
pub fn current_status_loglik(lambda: f64, gamma: f64, data: &CountDataset) -> f64 {
    current_status_from_table(lambda, gamma, &censoring_table(data))
}

fn current_status_from_table(lambda: f64, gamma: f64, table: &[(f64, f64, f64)]) -> f64 {
    table
        .iter()
        .map(|&(t, zeros, positives)| {
            let h = (t / lambda).powf(gamma);
            let mut v = 0.0;
            if zeros > 0.0 {
                v -= zeros * h;
            }
            if positives > 0.0 {
                v += positives * (-(-h).exp_m1()).ln();
            }
            v
        })
        .sum()
}

/// Grid over `(ln lambda, ln gamma)` spanning the schedule generously.
pub fn default_init_grid(data: &CountDataset) -> GridSpec {
    let t_min = data.times().first().copied().unwrap_or(1.0);
    let t_max = data.times().last().copied().unwrap_or(1.0);
    GridSpec::new(vec![
        GridAxis::new((t_min / 10.0).ln(), (t_max * 10.0).ln(), 41),
        GridAxis::new(0.1f64.ln(), 10f64.ln(), 41),
    ])
    .with_refinement(4, 0.2, 21)
}

/// Maximize the current-status likelihood over `grid` (axes `ln lambda`, `ln gamma`).
/// Pinning the `ln gamma` axis lifts the two-time requirement.
pub fn weibull_current_status_fit(data: &CountDataset, grid: &GridSpec) -> Result<WeibullInit> {
    if grid.axes.len() != 2 {
        return Err(Error::InvalidData("Weibull grid needs (ln lambda, ln gamma) axes".into()));
    }
    let table = censoring_table(data);
    let gamma_free = !grid.axes[1].is_fixed();
    if gamma_free && table.len() < 2 {
        return Err(Error::InsufficientTimes(table.len()));
    }
    let zeros: f64 = table.iter().map(|r| r.1).sum();
    let positives: f64 = table.iter().map(|r| r.2).sum();
    if positives == 0.0 {
        return Err(Error::NoFiniteMle("every count is zero, the likelihood increases without bound in lambda"));
    }
    if zeros == 0.0 {
        return Err(Error::NoFiniteMle("every count is positive, the likelihood increases as lambda shrinks"));
    }
    let out = grid_maximize(grid, |p| current_status_from_table(p[0].exp(), p[1].exp(), &table), None)?;
    Ok(WeibullInit {
        lambda: out.point[0].exp(),
        gamma: out.point[1].exp(),
        loglik: out.value,
        on_boundary: out.on_boundary,
    })
}

/// Initial `(lambda, gamma)` from zero/positive counts.
pub fn weibull_current_status_init(data: &CountDataset) -> Result<(f64, f64)> {
    let fit = weibull_current_status_fit(data, &default_init_grid(data))?;
    Ok((fit.lambda, fit.gamma))
}

/// Result of a logistic-block grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub loglik: f64,
    pub on_boundary: bool,
}

fn check_latent_model(model: ModelKind) -> Result<()> {
    if model.has_lead_time() {
        Ok(())
    } else {
        Err(Error::InvalidData(format!("{model} has no lead time")))
    }
}

/// Grid maximization of the full likelihood over `(alpha, beta[, eta])` with
/// `(lambda, gamma)` held fixed.
pub fn grid_search_logistic(
    data: &CountDataset,
    lambda: f64,
    gamma: f64,
    model: ModelKind,
    grid: &GridSpec,
    quad: &QuadConfig,
    incumbent: Option<&[f64]>,
) -> Result<LogisticFit> {
    check_latent_model(model)?;
    let dims = if model == ModelKind::SsbPlus { 3 } else { 2 };
    if grid.axes.len() != dims {
        return Err(Error::InvalidData(format!("{model} logistic grid needs {dims} axes")));
    }
    SsbParams::ssb(0.0, 1.0, lambda, gamma)?;
    let objective = |p: &[f64]| {
        let eta = if dims == 3 { p[2] } else { 1.0 };
        match SsbParams::new(p[0], p[1], lambda, gamma, eta) {
            Ok(params) => ssb_dataset_loglik(&params, data, quad),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let out = grid_maximize(grid, objective, incumbent)?;
    Ok(LogisticFit {
        alpha: out.point[0],
        beta: out.point[1],
        eta: if dims == 3 { out.point[2] } else { 1.0 },
        loglik: out.value,
        on_boundary: out.on_boundary,
    })
}

fn weibull_box(cfg: &FitConfig, lambda: f64, gamma: f64) -> GridSpec {
    let n = cfg.weibull_points;
    let [hl, hg] = cfg.weibull_half_width;
    GridSpec::new(vec![
        GridAxis::new(lambda.ln() - hl, lambda.ln() + hl, n),
        GridAxis::new(gamma.ln() - hg, gamma.ln() + hg, n),
    ])
}

/// First refinement box of `grid` centred on `centre`, refined one level less.
/// Later profile rounds start here instead of rescanning the full grid.
fn local_grid(grid: &GridSpec, centre: &[f64]) -> GridSpec {
    let axes = grid
        .axes
        .iter()
        .zip(centre)
        .map(|(axis, &c)| {
            if axis.is_fixed() {
                return *axis;
            }
            let half = 0.5 * grid.shrink * (axis.hi - axis.lo);
            let lo = (c - half).max(axis.lo);
            let hi = (c + half).min(axis.hi);
            GridAxis::new(lo, hi, grid.refine_points.max(3))
        })
        .collect();
    GridSpec {
        axes,
        refine_levels: grid.refine_levels.saturating_sub(1),
        ..grid.clone()
    }
}

fn push_trace(trace: &mut Vec<TraceEntry>, stage: String, loglik: f64) -> Result<()> {
    if let Some(last) = trace.last() {
        if loglik < last.loglik - PROFILE_MONOTONE_TOL {
            return Err(Error::NonMonotoneProfile {
                previous: last.loglik,
                current: loglik,
            });
        }
    }
    trace.push(TraceEntry { stage, loglik });
    Ok(())
}

/// Alternate block-wise maximization starting from `init = (lambda0, gamma0)`:
/// first the logistic block, then `n_outer` rounds of (Weibull block, logistic block).
pub fn profile_iterate(
    data: &CountDataset,
    init: (f64, f64),
    model: ModelKind,
    n_outer: usize,
    cfg: &FitConfig,
) -> Result<FitResult> {
    check_latent_model(model)?;
    let quad = cfg.search_quad();
    let grid = cfg.logistic_grid.clone().unwrap_or_else(|| default_logistic_grid(model));
    let (mut lambda, mut gamma) = init;
    let mut trace = Vec::new();
    let mut boundary = false;

    let mut logistic = grid_search_logistic(data, lambda, gamma, model, &grid, &quad, None)?;
    boundary |= logistic.on_boundary;
    push_trace(&mut trace, "logistic-0".into(), logistic.loglik)?;

    for round in 1..=n_outer {
        let fixed = logistic;
        let wgrid = weibull_box(cfg, lambda, gamma);
        let objective = |p: &[f64]| match SsbParams::new(fixed.alpha, fixed.beta, p[0].exp(), p[1].exp(), fixed.eta) {
            Ok(params) => ssb_dataset_loglik(&params, data, &quad),
            Err(_) => f64::NEG_INFINITY,
        };
        let current = [lambda.ln(), gamma.ln()];
        let w = grid_maximize(&wgrid, objective, Some(&current))?;
        lambda = w.point[0].exp();
        gamma = w.point[1].exp();
        push_trace(&mut trace, format!("weibull-{round}"), w.value)?;

        let start: Vec<f64> = if model == ModelKind::SsbPlus {
            vec![fixed.alpha, fixed.beta, fixed.eta]
        } else {
            vec![fixed.alpha, fixed.beta]
        };
        let local = local_grid(&grid, &start);
        logistic = grid_search_logistic(data, lambda, gamma, model, &local, &quad, Some(&start))?;
        boundary = logistic.on_boundary;
        push_trace(&mut trace, format!("logistic-{round}"), logistic.loglik)?;
    }

    let params = SsbParams::new(logistic.alpha, logistic.beta, lambda, gamma, logistic.eta)?;
    let loglik = ssb_dataset_loglik(&params, data, &cfg.quad);
    let mut theta = vec![params.alpha(), params.beta(), params.lambda(), params.gamma()];
    let mut bounds = vec![
        (f64::NEG_INFINITY, f64::INFINITY),
        (0.0, f64::INFINITY),
        (0.0, f64::INFINITY),
        (0.0, f64::INFINITY),
    ];
    if model == ModelKind::SsbPlus {
        theta.push(params.eta());
        bounds.push((0.0, 1.0));
    }
    let eta_free = model == ModelKind::SsbPlus;
    let ll = |x: &[f64]| {
        let eta = if eta_free { x[4] } else { 1.0 };
        match SsbParams::new(x[0], x[1], x[2], x[3], eta) {
            Ok(p) => ssb_dataset_loglik(&p, data, &cfg.quad),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let mut fit = assemble(
        model,
        data,
        &theta,
        &bounds,
        loglik,
        !boundary,
        trace,
        cfg,
        StepRule::Scaled(cfg.ssb_info_step),
        ll,
    );
    fit.config = serde_json::to_value(cfg).unwrap_or_default();
    Ok(fit)
}

#[allow(clippy::too_many_arguments)]
fn assemble<F: Fn(&[f64]) -> f64>(
    model: ModelKind,
    data: &CountDataset,
    theta: &[f64],
    bounds: &[(f64, f64)],
    loglik: f64,
    converged: bool,
    trace: Vec<TraceEntry>,
    cfg: &FitConfig,
    steps: StepRule,
    ll: F,
) -> FitResult {
    let names = model.param_names(theta.len() == 6);
    let h = match &steps {
        StepRule::Scaled(c) => theta.iter().map(|t| c * (1.0 + t.abs())).collect::<Vec<_>>(),
        _ => theta.iter().map(|t| f64::EPSILON.cbrt() * (1.0 + t.abs())).collect(),
    };
    // Coordinates whose finite-difference stencil leaves the parameter space.
    let boundary: Vec<bool> = theta
        .iter()
        .zip(bounds)
        .zip(&h)
        .map(|((&t, &(lo, hi)), &step)| t - 2.0 * step <= lo || t + 2.0 * step >= hi)
        .collect();
    let free: Vec<usize> = (0..theta.len()).filter(|&i| !boundary[i]).collect();
    let mut estimates: Vec<Estimate> = names
        .iter()
        .zip(theta)
        .zip(&boundary)
        .map(|((n, &v), &b)| Estimate {
            name: n.to_string(),
            value: v,
            std_error: None,
            boundary: b,
        })
        .collect();
    let mut info_flat = None;
    let info_params: Vec<String> = free.iter().map(|&i| names[i].to_string()).collect();
    if cfg.information && !free.is_empty() {
        let reduced: Vec<f64> = free.iter().map(|&i| theta[i]).collect();
        let reduced_steps = StepRule::Explicit(free.iter().map(|&i| h[i]).collect());
        let expand = |x: &[f64]| {
            let mut full = theta.to_vec();
            for (slot, &i) in free.iter().enumerate() {
                full[i] = x[slot];
            }
            ll(&full)
        };
        let info = observed_information(expand, &reduced, &reduced_steps);
        if let Ok(se) = standard_errors(&info) {
            for (slot, &i) in free.iter().enumerate() {
                estimates[i].std_error = Some(se[slot]);
            }
        }
        info_flat = Some(info.into_iter().flatten().collect());
    }
    FitResult {
        model,
        estimates,
        loglik,
        n_params: theta.len(),
        n_obs: data.n_obs(),
        info_params,
        info: info_flat,
        converged,
        trace,
        config: serde_json::Value::Null,
        seed: None,
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    crate::likelihood::sigmoid(x)
}

fn require_observations(data: &CountDataset) -> Result<()> {
    if data.n_obs() == 0 {
        Err(Error::InvalidData("dataset has no observations".into()))
    } else {
        Ok(())
    }
}

fn fit_lrm(data: &CountDataset, model: ModelKind, cfg: &FitConfig) -> Result<FitResult> {
    let plus = model == ModelKind::LrmPlus;
    let mut axes = vec![GridAxis::new(-10.0, 0.0, 11), GridAxis::new(0.01, 2.0, 11)];
    if plus {
        axes.push(GridAxis::new(0.5, 1.0, 6));
    }
    let start_grid = GridSpec::new(axes).with_refinement(0, 0.2, 3);
    let start = grid_maximize(
        &start_grid,
        |p| lrm_loglik(p[0], p[1], if plus { p[2] } else { 1.0 }, data),
        None,
    )?;
    if !start.value.is_finite() {
        return Err(Error::InfeasibleStart);
    }
    let mut x0 = vec![start.point[0], start.point[1].ln()];
    if plus {
        x0.push(logit(start.point[2].min(0.95)));
    }
    let nm = minimize(
        |x| {
            let eta = if plus { expit(x[2]) } else { 1.0 };
            -lrm_loglik(x[0], x[1].exp(), eta, data)
        },
        &x0,
        &cfg.nelder_mead(),
    );
    let mut theta = vec![nm.x[0], nm.x[1].exp()];
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY), (0.0, f64::INFINITY)];
    if plus {
        theta.push(expit(nm.x[2]));
        bounds.push((0.0, 1.0));
    }
    let loglik = -nm.value;
    let trace = vec![
        TraceEntry {
            stage: "grid-start".into(),
            loglik: start.value,
        },
        TraceEntry {
            stage: "nelder-mead".into(),
            loglik,
        },
    ];
    let ll = |x: &[f64]| {
        if x[1] <= 0.0 || (plus && !(0.0..=1.0).contains(&x[2])) {
            return f64::NEG_INFINITY;
        }
        lrm_loglik(x[0], x[1], if plus { x[2] } else { 1.0 }, data)
    };
    let mut fit = assemble(model, data, &theta, &bounds, loglik, nm.converged, trace, cfg, StepRule::CbrtEps, ll);
    fit.config = serde_json::to_value(cfg).unwrap_or_default();
    Ok(fit)
}

fn re_from_unconstrained(x: &[f64], with_eta: bool) -> Result<ReParams> {
    let eta = if with_eta { expit(x[5]) } else { 1.0 };
    ReParams::new(x[0], x[1], x[2].tanh(), x[3].exp(), x[4].exp(), eta)
}

fn fit_re(data: &CountDataset, cfg: &FitConfig) -> Result<FitResult> {
    let with_eta = cfg.re_eta;
    let quad = cfg.search_quad();
    let base = fit_lrm(
        data,
        if with_eta { ModelKind::LrmPlus } else { ModelKind::Lrm },
        &FitConfig {
            information: false,
            ..cfg.clone()
        },
    )?;
    let (a0, b0) = (base.get("alpha").unwrap(), base.get("beta").unwrap());
    let eta0 = base.get("eta").unwrap_or(1.0).clamp(0.05, 0.95);
    let neg_ll = |x: &[f64]| match re_from_unconstrained(x, with_eta) {
        Ok(p) => -re_loglik(&p, data, cfg.re_method, &quad).unwrap_or(f64::NEG_INFINITY),
        Err(_) => f64::INFINITY,
    };
    let starts: [(f64, f64, f64); 3] = [(0.5, 0.3, 0.0), (1.5, 0.5, 0.0), (1.0, 0.2, 0.8)];
    let mut best: Option<NelderMeadResult> = None;
    let mut trace = vec![TraceEntry {
        stage: "lrm-start".into(),
        loglik: base.loglik,
    }];
    for (i, &(s1, rel_s2, rho)) in starts.iter().enumerate() {
        let s2 = (rel_s2 * b0.abs()).max(1e-3);
        let mut x0 = vec![a0, b0, rho.atanh(), s1.ln(), s2.ln()];
        if with_eta {
            x0.push(logit(eta0));
        }
        let nm = minimize(neg_ll, &x0, &cfg.nelder_mead());
        trace.push(TraceEntry {
            stage: format!("nelder-mead-{i}"),
            loglik: -nm.value,
        });
        if best.as_ref().map_or(true, |b| nm.value < b.value) {
            best = Some(nm);
        }
    }
    let nm = best.expect("at least one start");
    // Keep the trace nondecreasing: record the best run last.
    trace.push(TraceEntry {
        stage: "best".into(),
        loglik: -nm.value,
    });
    let params = re_from_unconstrained(&nm.x, with_eta)?;
    let loglik = re_loglik(&params, data, cfg.re_method, &cfg.quad)?;
    let mut theta = vec![
        params.mu1(),
        params.mu2(),
        params.rho(),
        params.sigma1(),
        params.sigma2(),
    ];
    let mut bounds = vec![
        (f64::NEG_INFINITY, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
        (-1.0, 1.0),
        (0.0, f64::INFINITY),
        (0.0, f64::INFINITY),
    ];
    if with_eta {
        theta.push(params.eta());
        bounds.push((0.0, 1.0));
    }
    let ll = |x: &[f64]| {
        let eta = if with_eta { x[5] } else { 1.0 };
        match ReParams::new(x[0], x[1], x[2], x[3], x[4], eta) {
            Ok(p) => re_loglik(&p, data, cfg.re_method, &cfg.quad).unwrap_or(f64::NEG_INFINITY),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let mut fit = assemble(
        ModelKind::LrmRe,
        data,
        &theta,
        &bounds,
        loglik,
        nm.converged,
        trace,
        cfg,
        StepRule::CbrtEps,
        ll,
    );
    fit.config = serde_json::to_value(cfg).unwrap_or_default();
    Ok(fit)
}

/// Fit `model` to `data`.
pub fn fit_model(data: &CountDataset, model: ModelKind, cfg: &FitConfig) -> Result<FitResult> {
    require_observations(data)?;
    match model {
        ModelKind::Ssb | ModelKind::SsbPlus => {
            let times = data.n_observed_times();
            if times < 2 {
                return Err(Error::InsufficientTimes(times));
            }
            let grid = cfg.init_grid.clone().unwrap_or_else(|| default_init_grid(data));
            let init = weibull_current_status_fit(data, &grid)?;
            let mut fit = profile_iterate(data, (init.lambda, init.gamma), model, cfg.n_outer, cfg)?;
            fit.trace.insert(
                0,
                TraceEntry {
                    stage: "current-status".into(),
                    loglik: init.loglik,
                },
            );
            Ok(fit)
        }
        ModelKind::Lrm | ModelKind::LrmPlus => fit_lrm(data, model, cfg),
        ModelKind::LrmRe => fit_re(data, cfg),
    }
}

/// Fit every model in `models` (in order).
pub fn fit_all(data: &CountDataset, models: &[ModelKind], cfg: &FitConfig) -> Result<Vec<FitResult>> {
    models.iter().map(|&m| fit_model(data, m, cfg)).collect()
}
