//! Log-likelihoods and marginal count distributions for the five models.
//!
//! Given the lead time `U = u < t`, the count `N(t)` of a system with `M`
//! agents is binomial with success probability `eta * sigmoid(alpha + beta (t - u))`;
//! the marginal likelihood integrates this against the Weibull density, plus the
//! atom `Pr[U >= t]` for a zero count. Every term is assembled in log space and
//! the integrand is rescaled by its analytic maximum before exponentiation, so
//! `M = 300` never overflows or underflows.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{CountDataset, ReParams, SsbParams};
use crate::quadrature::{
    integrate_gh2_with_rule, integrate_normal, integrate_weibull_with_breaks, weibull_cdf,
    weibull_sf, GaussHermite, QuadConfig, NORMAL_RANGE_SD,
};
use crate::simulation::{sample_action_time, sample_lead_time, substream};

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln sigmoid(z)`.
#[inline]
pub fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln C(M, k)` via log-gamma.
pub fn ln_binomial(m: u32, k: u32) -> f64 {
    debug_assert!(k <= m);
    ln_gamma(m as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((m - k) as f64 + 1.0)
}

/// Binomial log-pmf of `k` successes out of `m` with success probability
/// `eta * sigmoid(z)`, parameterized by the linear predictor `z`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticBinomial {
    m: u32,
    k: u32,
    eta: f64,
    ln_eta: f64,
    ln_1m_eta: f64,
    ln_choose: f64,
}

impl LogisticBinomial {
    pub fn new(m: u32, k: u32, eta: f64) -> Self {
        assert!(k <= m, "count {k} exceeds mass {m}");
        Self {
            m,
            k,
            eta,
            ln_eta: eta.ln(),
            ln_1m_eta: (-eta).ln_1p(),
            ln_choose: ln_binomial(m, k),
        }
    }

    /// `ln(1 - eta * sigmoid(z))`.
    #[inline]
    fn ln_failure(&self, z: f64) -> f64 {
        if self.eta == 1.0 {
            -softplus(z)
        } else if self.eta == 0.0 {
            0.0
        } else {
            log_add_exp(self.ln_1m_eta, self.ln_eta - softplus(z))
        }
    }

    /// Log-pmf without the binomial coefficient.
    #[inline]
    pub fn kernel(&self, z: f64) -> f64 {
        if self.eta == 1.0 {
            return self.k as f64 * z - self.m as f64 * softplus(z);
        }
        let mut v = 0.0;
        if self.k > 0 {
            v += self.k as f64 * (self.ln_eta + log_sigmoid(z));
        }
        if self.k < self.m {
            v += (self.m - self.k) as f64 * self.ln_failure(z);
        }
        v
    }

    #[inline]
    pub fn ln_pmf(&self, z: f64) -> f64 {
        self.ln_choose + self.kernel(z)
    }

    /// Maximizing linear predictor, when interior.
    pub fn mode(&self) -> Option<f64> {
        let share = self.k as f64 / (self.m as f64 * self.eta);
        if self.k == 0 || !(share < 1.0) {
            None
        } else {
            Some((share / (1.0 - share)).ln())
        }
    }

    /// Standard deviation of the Laplace approximation around [`Self::mode`] on the `z` scale.
    pub fn mode_width(&self) -> Option<f64> {
        self.mode().map(|z| {
            let s = sigmoid(z);
            let (k, m) = (self.k as f64, self.m as f64);
            let info = (1.0 - s).powi(2) * k * m / (m - k);
            info.sqrt().recip()
        })
    }

    /// Supremum of the kernel over `z` in `[lo, hi]`.
    pub fn max_kernel_on(&self, lo: f64, hi: f64) -> f64 {
        let z = match self.mode() {
            Some(z) => z.clamp(lo, hi),
            // Monotone: decreasing in z for k = 0, increasing otherwise.
            None if self.k == 0 => lo,
            None => hi,
        };
        self.kernel(z)
    }
}

#[derive(Debug, Clone, Copy)]
struct LogIntegral {
    ln_value: f64,
    converged: bool,
}

/// `ln ∫_0^t Binom(k; M, eta sigmoid(alpha + beta (t - u))) f_U(u) du`.
fn ln_count_integral(params: &SsbParams, m: u32, t: f64, k: u32, cfg: &QuadConfig) -> LogIntegral {
    let binom = LogisticBinomial::new(m, k, params.eta());
    let (alpha, beta) = (params.alpha(), params.beta());
    // z = alpha + beta (t - u) runs from alpha + beta t (u = 0) down to alpha (u = t).
    let z_lo = alpha;
    let z_hi = alpha + beta * t;
    let shift = binom.max_kernel_on(z_lo, z_hi);
    let to_u = |z: f64| t - (z - alpha) / beta;

    let mut breaks = Vec::with_capacity(6);
    if let (Some(z_mode), Some(width)) = (binom.mode(), binom.mode_width()) {
        for c in [-8.0, -3.0, 0.0, 3.0, 8.0] {
            breaks.push(to_u(z_mode + c * width));
        }
    } else if k == 0 && m > 0 {
        // Location where the expected number of events is about one.
        let p = 1.0 / (m as f64 * params.eta().max(f64::MIN_POSITIVE));
        if p < 1.0 {
            breaks.push(to_u((p / (1.0 - p)).ln()));
        }
    }
    let r = integrate_weibull_with_breaks(
        |u| (binom.kernel(alpha + beta * (t - u)) - shift).exp(),
        params.lambda(),
        params.gamma(),
        t,
        &breaks,
        cfg,
    );
    LogIntegral {
        ln_value: binom.ln_choose + shift + r.value.ln(),
        converged: r.converged,
    }
}

fn count_loglik_checked(params: &SsbParams, m: u32, t: f64, k: u32, cfg: &QuadConfig) -> (f64, bool) {
    assert!(k <= m, "count {k} exceeds mass {m}");
    assert!(t > 0.0, "sacrifice time must be positive");
    if params.eta() == 0.0 && k > 0 {
        return (f64::NEG_INFINITY, true);
    }
    let integral = ln_count_integral(params, m, t, k, cfg);
    if k == 0 {
        let ln_sf = -(t / params.lambda()).powf(params.gamma());
        (log_add_exp(ln_sf, integral.ln_value), integral.converged)
    } else {
        (integral.ln_value, integral.converged)
    }
}

/// Log-likelihood of one count `k` observed at time `t` under the latent-state model.
///
/// Returns `-inf` when the count is impossible (e.g. `eta = 0`, `k > 0`).
pub fn ssb_count_loglik(params: &SsbParams, m: u32, t: f64, k: u32, cfg: &QuadConfig) -> f64 {
    count_loglik_checked(params, m, t, k, cfg).0
}

/// Sum of [`ssb_count_loglik`] over every observation of the dataset.
pub fn ssb_dataset_loglik(params: &SsbParams, data: &CountDataset, cfg: &QuadConfig) -> f64 {
    data.grouped_observations()
        .into_iter()
        .map(|(t, k, n)| n as f64 * ssb_count_loglik(params, data.mass(), t, k, cfg))
        .sum()
}

/// `Pr[N(t) = k]` for `k = 0..=M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountPmf {
    pub t: f64,
    pub probs: Vec<f64>,
    /// Every underlying integral met its tolerance.
    pub converged: bool,
}

impl CountPmf {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }
}

pub fn marginal_count_pmf(params: &SsbParams, m: u32, t: f64, cfg: &QuadConfig) -> CountPmf {
    let mut converged = true;
    let probs = (0..=m)
        .map(|k| {
            let (ll, ok) = count_loglik_checked(params, m, t, k, cfg);
            converged &= ok;
            ll.exp()
        })
        .collect();
    CountPmf { t, probs, converged }
}

/// `∫_0^t sigmoid(-(alpha + beta (t - u)))^M f_U(u) du`, evaluated with `eta = 1`:
/// the probability that the state has switched by `t` yet no agent has acted.
pub fn delta_factor(params: &SsbParams, m: u32, t: f64, cfg: &QuadConfig) -> f64 {
    if !(t > 0.0) {
        return 0.0;
    }
    let p = params
        .with_eta(1.0)
        .expect("eta = 1 is always in range");
    ln_count_integral(&p, m, t, 0, cfg).ln_value.exp()
}

/// `Pr[U < t]` for the lead time of `params`.
pub fn lead_time_cdf(params: &SsbParams, t: f64) -> f64 {
    weibull_cdf(t, params.lambda(), params.gamma())
}

/// `Pr[U >= t]` for the lead time of `params`.
pub fn lead_time_sf(params: &SsbParams, t: f64) -> f64 {
    weibull_sf(t, params.lambda(), params.gamma())
}

/// Fixed-effect logistic log-likelihood; `eta = 1` gives LRM, free `eta` LRM⁺.
pub fn lrm_loglik(alpha: f64, beta: f64, eta: f64, data: &CountDataset) -> f64 {
    let m = data.mass();
    data.grouped_observations()
        .into_iter()
        .map(|(t, k, n)| {
            if eta == 0.0 && k > 0 {
                return f64::NEG_INFINITY;
            }
            n as f64 * LogisticBinomial::new(m, k, eta).ln_pmf(alpha + beta * t)
        })
        .sum()
}

/// Quadrature used for the random-effect likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReQuadrature {
    /// The integrand depends on `(a, b)` only through `z = a + b t`, which is
    /// univariate normal; integrate that adaptively.
    #[default]
    Projected,
    /// Tensor Gauss–Hermite over `(a, b)` with `QuadConfig::gh_nodes` per axis.
    GaussHermite,
}

fn re_count_lik_projected(
    params: &ReParams,
    m: u32,
    t: f64,
    k: u32,
    cfg: &QuadConfig,
) -> f64 {
    let binom = LogisticBinomial::new(m, k, params.eta());
    let (mean, var) = params.linear_predictor_moments(t);
    let sd = var.sqrt();
    if sd == 0.0 {
        return binom.ln_pmf(mean);
    }
    let log_integrand = |x: f64| binom.kernel(mean + sd * x) - 0.5 * x * x;

    // Rescale by the largest value seen on a coarse scan plus the binomial mode.
    let mut candidates: Vec<f64> = (0..=48).map(|i| -NORMAL_RANGE_SD + 0.5 * i as f64).collect();
    let mode_x = binom.mode().map(|z| (z - mean) / sd);
    if let Some(x) = mode_x {
        if x.abs() < NORMAL_RANGE_SD {
            candidates.push(x);
        }
    }
    let (x_peak, peak) = candidates
        .iter()
        .map(|&x| (x, log_integrand(x)))
        .fold((0.0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
    if peak == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let shift = peak + 0.5 * x_peak * x_peak;
    let width = binom
        .mode_width()
        .map(|w| (w / sd).min(1.0))
        .unwrap_or(1.0);
    let mut breaks: Vec<f64> = [-8.0, -3.0, 0.0, 3.0, 8.0]
        .iter()
        .map(|c| x_peak + c * width)
        .collect();
    if let Some(x) = mode_x {
        breaks.extend([x - 3.0 * width, x, x + 3.0 * width]);
    }
    let r = integrate_normal(|x| (binom.kernel(mean + sd * x) - shift).exp(), &breaks, cfg);
    binom.ln_choose + shift + r.value.ln()
}

/// Random-effect logistic log-likelihood: `(a, b) ~ N(mu, Sigma)` per system,
/// success probability `eta * sigmoid(a + b t)`.
pub fn re_loglik(
    params: &ReParams,
    data: &CountDataset,
    method: ReQuadrature,
    cfg: &QuadConfig,
) -> Result<f64> {
    let m = data.mass();
    let cov = params.covariance();
    crate::quadrature::cholesky2(&cov)?;
    let groups = data.grouped_observations();
    match method {
        ReQuadrature::Projected => Ok(groups
            .into_iter()
            .map(|(t, k, n)| {
                if params.eta() == 0.0 && k > 0 {
                    return f64::NEG_INFINITY;
                }
                n as f64 * re_count_lik_projected(params, m, t, k, cfg)
            })
            .sum()),
        ReQuadrature::GaussHermite => {
            let rule = GaussHermite::new(cfg.gh_nodes.max(2));
            let mut total = 0.0;
            for (t, k, n) in groups {
                let binom = LogisticBinomial::new(m, k, params.eta());
                let lik = integrate_gh2_with_rule(
                    |a, b| binom.ln_pmf(a + b * t).exp(),
                    params.mean(),
                    &cov,
                    &rule,
                )?;
                total += n as f64 * lik.ln();
            }
            Ok(total)
        }
    }
}

/// Empirical count distribution from direct simulation of systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McPmf {
    pub t: f64,
    pub probs: Vec<f64>,
    /// Binomial standard error of each component, `sqrt(p (1 - p) / n)`.
    pub std_errors: Vec<f64>,
    pub n_sims: usize,
}

impl McPmf {
    /// Standard error floored at the resolution `1 / n_sims`, for comparisons
    /// against components the simulation never hit.
    pub fn comparison_se(&self, k: usize) -> f64 {
        self.std_errors[k].max(1.0 / self.n_sims as f64)
    }

    /// Standard error of a component whose true probability is `p`, floored at
    /// `1 / n_sims`. Use this when testing agreement with a hypothesized `p`.
    pub fn null_se(&self, p: f64) -> f64 {
        let n = self.n_sims as f64;
        (p * (1.0 - p) / n).sqrt().max(1.0 / n)
    }
}

/// Monte Carlo estimate of `Pr[N(t) = k]`: each of `n_sims` systems draws a
/// lead time, then a phase and action time for every agent.
pub fn mc_count_pmf(params: &SsbParams, m: u32, t: f64, n_sims: usize, seed: u64) -> Result<McPmf> {
    if n_sims < 10_000 {
        return Err(Error::Domain {
            field: "n_sims",
            value: n_sims as f64,
            bound: ">= 10000",
        });
    }
    let mut rng = substream(seed, crate::simulation::STREAM_ORACLE, 0);
    let mut hits = vec![0u64; m as usize + 1];
    for _ in 0..n_sims {
        let u = sample_lead_time(params.lambda(), params.gamma(), &mut rng);
        let mut k = 0usize;
        for _ in 0..m {
            let active = params.eta() >= 1.0 || rng.random::<f64>() < params.eta();
            if !active {
                continue;
            }
            let s = sample_action_time(params.alpha(), params.beta(), &mut rng);
            if u + s <= t {
                k += 1;
            }
        }
        hits[k] += 1;
    }
    let n = n_sims as f64;
    let probs: Vec<f64> = hits.iter().map(|&h| h as f64 / n).collect();
    let std_errors = probs.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok(McPmf {
        t,
        probs,
        std_errors,
        n_sims,
    })
}
