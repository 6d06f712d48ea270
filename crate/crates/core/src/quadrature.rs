//! Deterministic integration kernels.
//!
//! Everything here is built on a globally adaptive 21-point Gauss–Kronrod rule.
//! [`integrate_weibull`] integrates against the Weibull density after the
//! substitution `v = (u / lambda)^gamma`, which turns the density into `e^{-v}`
//! and removes the `u^{gamma - 1}` singularity at the origin. [`integrate_gh2`]
//! is a tensor Gauss–Hermite rule for bivariate normal expectations and
//! [`integrate_normal`] an adaptive rule for univariate ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of panels held by the adaptive scheme.
    pub max_subdivisions: usize,
    /// Gauss–Hermite nodes per axis.
    pub gh_nodes: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_subdivisions: 64,
            gh_nodes: 32,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::Domain {
                field: "rel_tol",
                value: self.rel_tol,
                bound: "> 0",
            });
        }
        if !(self.abs_tol > 0.0) {
            return Err(Error::Domain {
                field: "abs_tol",
                value: self.abs_tol,
                bound: "> 0",
            });
        }
        if self.max_subdivisions < 2 {
            return Err(Error::Domain {
                field: "max_subdivisions",
                value: self.max_subdivisions as f64,
                bound: ">= 2",
            });
        }
        if self.gh_nodes < 2 {
            return Err(Error::Domain {
                field: "gh_nodes",
                value: self.gh_nodes as f64,
                bound: ">= 2",
            });
        }
        Ok(())
    }

    /// Same configuration with a looser relative tolerance.
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

/// Integral estimate with its error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub converged: bool,
    pub evaluations: usize,
}

impl QuadResult {
    pub fn into_result(self) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::ToleranceNotMet {
                estimate: self.value,
                error: self.abs_error,
            })
        }
    }
}

// Kronrod abscissae; odd indices are the 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_323_218_390,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut res_g = 0.0;
    let mut res_k = WGK[10] * fc;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let x = half * XGK[j];
        let f1 = f(centre - x);
        let f2 = f(centre + x);
        fv1[j] = f1;
        fv2[j] = f2;
        let sum = f1 + f2;
        res_k += WGK[j] * sum;
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * sum;
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let scale = half.abs();
    let value = res_k * half;
    res_abs *= scale;
    res_asc *= scale;
    let mut error = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Panel { a, b, value, error }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// `breaks` are optional interior points that seed the initial partition;
/// points outside `(a, b)` are ignored. The panel with the largest error
/// estimate is bisected until the summed error meets
/// `max(abs_tol, rel_tol * |I|)` or `cfg.max_subdivisions` panels exist.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    cfg: &QuadConfig,
) -> QuadResult {
    if !(b > a) {
        return QuadResult {
            value: 0.0,
            abs_error: 0.0,
            converged: true,
            evaluations: 0,
        };
    }
    let mut nodes: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > a && *x < b)
        .collect();
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());
    nodes.dedup();
    let span = b - a;
    nodes.retain(|x| (x - a) > 1e-12 * span && (b - x) > 1e-12 * span);
    let mut edges = Vec::with_capacity(nodes.len() + 2);
    edges.push(a);
    edges.extend(nodes);
    edges.push(b);

    let mut panels: Vec<Panel> = edges.windows(2).map(|w| gk21(&f, w[0], w[1])).collect();
    let mut evaluations = 21 * panels.len();
    let max_panels = cfg.max_subdivisions.max(panels.len());
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        let target = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        if error <= target || !error.is_finite() {
            return QuadResult {
                value,
                abs_error: error,
                converged: error.is_finite(),
                evaluations,
            };
        }
        if panels.len() >= max_panels {
            return QuadResult {
                value,
                abs_error: error,
                converged: false,
                evaluations,
            };
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, p)| {
                if p.error > acc.1 {
                    (i, p.error)
                } else {
                    acc
                }
            });
        let p = panels[worst];
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // Panel cannot be split further in floating point.
            return QuadResult {
                value,
                abs_error: error,
                converged: false,
                evaluations,
            };
        }
        panels[worst] = gk21(&f, p.a, mid);
        panels.push(gk21(&f, mid, p.b));
        evaluations += 42;
    }
}

/// Largest `v` worth integrating: `e^{-v}` underflows beyond it.
const WEIBULL_V_MAX: f64 = 745.0;

/// `∫_0^t g(u) f_U(u; lambda, gamma) du` for the Weibull density `f_U`.
pub fn integrate_weibull<G: Fn(f64) -> f64>(
    g: G,
    lambda: f64,
    gamma: f64,
    t: f64,
    cfg: &QuadConfig,
) -> QuadResult {
    integrate_weibull_with_breaks(g, lambda, gamma, t, &[], cfg)
}

/// As [`integrate_weibull`], with interior breakpoints given on the `u` scale.
pub fn integrate_weibull_with_breaks<G: Fn(f64) -> f64>(
    g: G,
    lambda: f64,
    gamma: f64,
    t: f64,
    u_breaks: &[f64],
    cfg: &QuadConfig,
) -> QuadResult {
    if !(t > 0.0) {
        return integrate_adaptive(|_| 0.0, 0.0, 0.0, &[], cfg);
    }
    let v_end = if t.is_infinite() {
        WEIBULL_V_MAX
    } else {
        (t / lambda).powf(gamma).min(WEIBULL_V_MAX)
    };
    let inv_gamma = 1.0 / gamma;
    let v_breaks: Vec<f64> = u_breaks
        .iter()
        .filter(|u| **u > 0.0 && **u < t)
        .map(|u| (u / lambda).powf(gamma))
        .collect();
    integrate_adaptive(
        |v| {
            let w = (-v).exp();
            if w == 0.0 {
                0.0
            } else {
                g(lambda * v.powf(inv_gamma)) * w
            }
        },
        0.0,
        v_end,
        &v_breaks,
        cfg,
    )
}

/// Weibull distribution function `Pr[U < t]`.
pub fn weibull_cdf(t: f64, lambda: f64, gamma: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        -(-(t / lambda).powf(gamma)).exp_m1()
    }
}

/// Weibull survival function `Pr[U >= t]`.
pub fn weibull_sf(t: f64, lambda: f64, gamma: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else {
        (-(t / lambda).powf(gamma)).exp()
    }
}

/// Physicists' Gauss–Hermite rule: `∫ e^{-x^2} h(x) dx ≈ Σ w_i h(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes by Newton iteration on the orthonormal Hermite recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        // Ascending order.
        nodes.reverse();
        weights.reverse();
        Self { nodes, weights }
    }

    /// `E[h(Z)]` for `Z ~ N(0, 1)`.
    pub fn standard_normal_expectation<H: Fn(f64) -> f64>(&self, h: H) -> f64 {
        let scale = std::f64::consts::PI.sqrt().recip();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * h(std::f64::consts::SQRT_2 * x))
            .sum::<f64>()
            * scale
    }
}

/// Lower Cholesky factor of a 2x2 symmetric matrix.
pub fn cholesky2(cov: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let asym = (cov[0][1] - cov[1][0]).abs();
    if asym > 1e-12 * (cov[0][1].abs() + cov[1][0].abs()).max(f64::MIN_POSITIVE) && asym > 0.0 {
        return Err(Error::NotSymmetric(asym));
    }
    let l11_sq = cov[0][0];
    if !(l11_sq > 0.0) {
        return Err(Error::Domain {
            field: "cov",
            value: l11_sq,
            bound: "symmetric positive definite",
        });
    }
    let l11 = l11_sq.sqrt();
    let l21 = cov[1][0] / l11;
    let l22_sq = cov[1][1] - l21 * l21;
    if !(l22_sq > 0.0) {
        return Err(Error::Domain {
            field: "cov",
            value: l22_sq,
            bound: "symmetric positive definite",
        });
    }
    Ok([[l11, 0.0], [l21, l22_sq.sqrt()]])
}

/// `E[f(a, b)]` for `(a, b) ~ N(mu, cov)` by tensor Gauss–Hermite quadrature
/// with `cfg.gh_nodes` nodes per axis.
pub fn integrate_gh2<F: Fn(f64, f64) -> f64>(
    f: F,
    mu: [f64; 2],
    cov: &[[f64; 2]; 2],
    cfg: &QuadConfig,
) -> Result<f64> {
    let rule = GaussHermite::new(cfg.gh_nodes.max(2));
    integrate_gh2_with_rule(f, mu, cov, &rule)
}

/// As [`integrate_gh2`] with a prebuilt rule, for use inside hot loops.
pub fn integrate_gh2_with_rule<F: Fn(f64, f64) -> f64>(
    f: F,
    mu: [f64; 2],
    cov: &[[f64; 2]; 2],
    rule: &GaussHermite,
) -> Result<f64> {
    let l = cholesky2(cov)?;
    let s2 = std::f64::consts::SQRT_2;
    let mut total = 0.0;
    for (&x1, &w1) in rule.nodes.iter().zip(&rule.weights) {
        let z1 = s2 * x1;
        let mut inner = 0.0;
        for (&x2, &w2) in rule.nodes.iter().zip(&rule.weights) {
            let z2 = s2 * x2;
            let a = mu[0] + l[0][0] * z1;
            let b = mu[1] + l[1][0] * z1 + l[1][1] * z2;
            inner += w2 * f(a, b);
        }
        total += w1 * inner;
    }
    Ok(total / std::f64::consts::PI)
}

/// Half-width, in standard deviations, of the range used by [`integrate_normal`].
pub const NORMAL_RANGE_SD: f64 = 12.0;

/// `E[h(Z)]` for `Z ~ N(mean, sd^2)` by adaptive quadrature over `mean ± 12 sd`.
///
/// `h` receives the standardized coordinate `x = (z - mean) / sd`; `x_breaks`
/// seed the partition on that scale. `sd == 0` evaluates `h(0)`.
pub fn integrate_normal<H: Fn(f64) -> f64>(h: H, x_breaks: &[f64], cfg: &QuadConfig) -> QuadResult {
    let norm = (2.0 * std::f64::consts::PI).sqrt().recip();
    integrate_adaptive(
        |x| norm * (-0.5 * x * x).exp() * h(x),
        -NORMAL_RANGE_SD,
        NORMAL_RANGE_SD,
        x_breaks,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kronrod_weights_sum_to_two() {
        let k: f64 = 2.0 * WGK[..10].iter().sum::<f64>() + WGK[10];
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert_relative_eq!(k, 2.0, epsilon = 1e-14);
        assert_relative_eq!(g, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn rules_are_exact_on_polynomials() {
        // Kronrod exact to degree 31, Gauss to degree 19.
        for deg in [0u32, 2, 10, 18, 30] {
            let exact = 2.0 / (deg as f64 + 1.0);
            let p = gk21(&|x: f64| x.powi(deg as i32), -1.0, 1.0);
            assert_relative_eq!(p.value, exact, epsilon = 1e-13);
        }
        let p = gk21(&|x: f64| x.powi(18), -1.0, 1.0);
        assert!(p.error < 1e-10, "gauss and kronrod disagree: {}", p.error);
    }

    #[test]
    fn adaptive_handles_peaks_with_breaks() {
        let cfg = QuadConfig::default();
        let w = 1e-3;
        let f = |x: f64| (-(x - 0.3) * (x - 0.3) / (2.0 * w * w)).exp();
        let exact = w * (2.0 * std::f64::consts::PI).sqrt();
        let r = integrate_adaptive(f, 0.0, 1.0, &[0.3], &cfg);
        assert!(r.converged);
        assert_relative_eq!(r.value, exact, max_relative = 1e-10);
    }

    #[test]
    fn weibull_normalizes() {
        let cfg = QuadConfig::default();
        for gamma in [0.5, 1.0, 1.5, 2.0] {
            let r = integrate_weibull(|_| 1.0, 4.0, gamma, f64::INFINITY, &cfg);
            assert!(r.converged);
            assert!((r.value - 1.0).abs() < 1e-10, "gamma {gamma}: {}", r.value);
        }
    }

    #[test]
    fn exponential_cdf() {
        let cfg = QuadConfig::default();
        let r = integrate_weibull(|_| 1.0, 4.0, 1.0, 4.0, &cfg);
        assert_relative_eq!(r.value, 1.0 - (-1.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn weibull_mean_small_shape() {
        // E[U] = lambda * Gamma(1 + 1/gamma) = 2 for lambda = 1, gamma = 0.5.
        let cfg = QuadConfig::default();
        let r = integrate_weibull(|u| u, 1.0, 0.5, f64::INFINITY, &cfg);
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-10);
    }

    #[test]
    fn gauss_hermite_moments() {
        let rule = GaussHermite::new(32);
        assert_relative_eq!(rule.standard_normal_expectation(|_| 1.0), 1.0, epsilon = 1e-13);
        assert_relative_eq!(rule.standard_normal_expectation(|z| z * z), 1.0, epsilon = 1e-12);
        assert_relative_eq!(rule.standard_normal_expectation(|z| z.powi(4)), 3.0, epsilon = 1e-11);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn gh2_normalization_and_covariance() {
        let cfg = QuadConfig::default();
        let cov = [[1.0, 0.5], [0.5, 1.0]];
        let one = integrate_gh2(|_, _| 1.0, [0.0, 0.0], &cov, &cfg).unwrap();
        assert_relative_eq!(one, 1.0, epsilon = 1e-12);
        let ab = integrate_gh2(|a, b| a * b, [0.0, 0.0], &cov, &cfg).unwrap();
        assert_relative_eq!(ab, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn gh2_rejects_indefinite_covariance() {
        let cfg = QuadConfig::default();
        let cov = [[1.0, 2.0], [2.0, 1.0]];
        assert!(integrate_gh2(|_, _| 1.0, [0.0, 0.0], &cov, &cfg).is_err());
    }

    #[test]
    fn normal_expectation() {
        let cfg = QuadConfig::default();
        let r = integrate_normal(|x| x * x, &[], &cfg);
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let cfg = QuadConfig {
            max_subdivisions: 2,
            ..QuadConfig::default()
        };
        let r = integrate_adaptive(|x: f64| (50.0 * x).sin().abs(), 0.0, 10.0, &[], &cfg);
        assert!(!r.converged);
        assert!(matches!(r.into_result(), Err(Error::ToleranceNotMet { .. })));
    }
}
