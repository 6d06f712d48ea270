//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero when any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use statrs::distribution::{Binomial, Discrete};

use mehm::analysis::{jacobi_eigenvalues, DynamicsReport};
use mehm::estimation::{bic_delta, fit_all, observed_information, FitConfig, StepRule};
use mehm::likelihood::{
    delta_factor, lead_time_cdf, lead_time_sf, lrm_loglik, marginal_count_pmf, mc_count_pmf, sigmoid,
};
use mehm::model::{CountDataset, ModelKind, SsbParams};
use mehm::presets::{feltiae_mellonella, reference_theta};
use mehm::quadrature::{integrate_weibull, QuadConfig};
use mehm::simulation::substream;
use mehm_cli::{cmd_compare, cmd_replicate_study, RunConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {e}"))
    }
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn theta0() -> SsbParams {
    reference_theta().expect("reference parameters are valid")
}

fn parameter_recovery() -> Outcome {
    let dir = tempfile::tempdir().expect("temporary directory");
    let cfg = RunConfig::default();
    let start = Instant::now();
    let study = match cmd_replicate_study(dir.path(), &cfg) {
        Ok(s) => s,
        Err(e) => return Outcome::error(e),
    };
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let row = |name: &str| study.summary.iter().find(|r| r.parameter == name).expect("summary row");
    let (a, b, l, g) = (row("alpha"), row("beta"), row("lambda"), row("gamma"));
    let checks = [
        within(a.mean, -3.1, -2.9),
        within(a.sd, 0.06, 0.14),
        within(b.mean, 0.145, 0.155),
        within(b.sd, 0.003, 0.008),
        within(l.mean, 3.5, 5.5),
        within(g.mean, 1.2, 2.2),
    ];
    Outcome::new(
        checks.iter().all(|&c| c),
        format!(
            "{} reps ({} failed) in {minutes:.1} min: alpha {:.4} (sd {:.4}), beta {:.5} (sd {:.5}), lambda {:.3}, gamma {:.3}",
            cfg.n_reps, study.n_failed, a.mean, a.sd, b.mean, b.sd, l.mean, g.mean
        ),
    )
}

fn exact_identities() -> Outcome {
    let cfg = QuadConfig::default();
    let thetas = [
        (-3.0, 0.15, 4.0, 1.5),
        (-1.0, 0.4, 10.0, 0.7),
        (-6.0, 0.05, 2.0, 3.0),
        (0.5, 1.0, 25.0, 1.0),
    ];
    let times = [0.5, 2.0, 6.0, 20.0, 60.0];
    let mut worst: f64 = 0.0;
    for &(a, b, l, g) in &thetas {
        let p = SsbParams::ssb(a, b, l, g).expect("grid parameters are valid");
        for &t in &times {
            let pmf = marginal_count_pmf(&p, 300, t, &cfg);
            let delta = delta_factor(&p, 300, t, &cfg);
            let positive: f64 = pmf.probs[1..].iter().sum();
            worst = worst.max((lead_time_cdf(&p, t) - positive - delta).abs());
            worst = worst.max((pmf.probs[0] - lead_time_sf(&p, t) - delta).abs());
        }
    }
    Outcome::new(worst < 1e-8, format!("20 points, max residual {worst:.2e}"))
}

fn oracle_equivalence() -> Outcome {
    let p = theta0();
    let cfg = QuadConfig::default();
    let mut worst_z: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut failures = 0;
    for (i, &m) in [1u32, 5, 10].iter().enumerate() {
        for (j, &t) in [2.0, 6.0, 20.0].iter().enumerate() {
            let pmf = marginal_count_pmf(&p, m, t, &cfg);
            worst_sum = worst_sum.max((pmf.total() - 1.0).abs());
            let mc = match mc_count_pmf(&p, m, t, 1_000_000, (10 * i + j) as u64) {
                Ok(mc) => mc,
                Err(e) => return Outcome::error(e),
            };
            for k in 0..=m as usize {
                let z = (pmf.probs[k] - mc.probs[k]).abs() / mc.null_se(pmf.probs[k]);
                worst_z = worst_z.max(z);
                if z >= 3.0 {
                    failures += 1;
                }
            }
        }
    }
    Outcome::new(
        failures == 0 && worst_sum < 1e-8,
        format!("max |z| {worst_z:.2} over 45 components, {failures} beyond 3 SE; max |sum - 1| {worst_sum:.1e}"),
    )
}

fn flat_slope_closed_form() -> Outcome {
    let cfg = QuadConfig::default();
    let mut worst: f64 = 0.0;
    for &(alpha, t) in &[(-3.0, 2.0), (-3.0, 6.0), (-1.0, 20.0), (0.5, 60.0)] {
        let p = match SsbParams::with_flat_slope(alpha, 0.0, 4.0, 1.5, 1.0) {
            Ok(p) => p,
            Err(e) => return Outcome::error(e),
        };
        let binom = Binomial::new(sigmoid(alpha), 300).expect("valid binomial");
        let pu = 1.0 - (-(t / 4.0f64).powf(1.5)).exp();
        let pmf = marginal_count_pmf(&p, 300, t, &cfg);
        for k in 0..=300u64 {
            let exact = binom.pmf(k) * pu + if k == 0 { 1.0 - pu } else { 0.0 };
            worst = worst.max((pmf.probs[k as usize] - exact).abs());
        }
    }
    Outcome::new(worst < 1e-9, format!("M = 300, max deviation {worst:.2e}"))
}

fn bic_of(report: &DynamicsReport, model: ModelKind) -> Option<f64> {
    report.bic.as_ref()?.iter().find(|r| r.model == model).map(|r| r.delta_bic)
}

fn model_separation(report: &DynamicsReport) -> Outcome {
    let (Some(lr), Some(ssb), Some(re)) = (
        report.log_lr,
        bic_of(report, ModelKind::Ssb),
        bic_of(report, ModelKind::LrmRe),
    ) else {
        return Outcome::new(false, "report lacks the likelihood ratio or BIC table".into());
    };
    Outcome::new(
        lr > 20.0 && ssb < re,
        format!("log-LR {lr:.2}; delta-BIC SSB {ssb:.2} vs LRM_RE {re:.2}"),
    )
}

fn pca_contrast(report: &DynamicsReport) -> Outcome {
    let re = report.re_spectrum.first_fraction();
    let ssb = report.ssb_spectrum.first_fraction();
    let needed = report.re_spectrum.components_to_reach(ssb);
    Outcome::new(
        re < 0.5 && ssb - re >= 0.2 && needed >= 3,
        format!("first component RE {re:.4}, SSB {ssb:.4}; RE reaches SSB level with {needed} components"),
    )
}

fn cross_section_zero_mass(report: &DynamicsReport) -> Outcome {
    let Some(section) = report.ssb_cross_sections.iter().find(|c| c.hour == 4) else {
        return Outcome::new(false, "no cross-section at hour 4".into());
    };
    let zero = section.zero_fraction();
    let analytic = marginal_count_pmf(&theta0(), 300, 5.0, &QuadConfig::default()).probs[0];
    Outcome::new(
        within(zero, 0.45, 0.75),
        format!(
            "hour 4 zero-count fraction {zero:.3} over {} trajectories (model probability {analytic:.3})",
            section.n
        ),
    )
}

fn real_data_ordering() -> Outcome {
    let data = feltiae_mellonella();
    let fits = match fit_all(&data, &ModelKind::ALL, &FitConfig::default()) {
        Ok(f) => f,
        Err(e) => return Outcome::error(e),
    };
    let rows = match bic_delta(&fits, data.n_obs()) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    let mut ranked = rows.clone();
    ranked.sort_by(|a, b| a.delta_bic.total_cmp(&b.delta_bic));
    let order: Vec<String> = ranked.iter().map(|r| format!("{} {:.2}", r.model, r.delta_bic)).collect();
    Outcome::new(
        ranked[0].model == ModelKind::SsbPlus && ranked[1].model == ModelKind::Ssb,
        format!("N = {}, delta-BIC ascending: {}", data.n_obs(), order.join(", ")),
    )
}

/// Roots of the characteristic cubic of a symmetric 3 x 3 matrix by bisection.
fn cubic_roots(a: &[Vec<f64>]) -> [f64; 3] {
    let tr = a[0][0] + a[1][1] + a[2][2];
    let c2 = a[0][0] * a[1][1] + a[0][0] * a[2][2] + a[1][1] * a[2][2]
        - a[0][1] * a[0][1]
        - a[0][2] * a[0][2]
        - a[1][2] * a[1][2];
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[1][2]) - a[0][1] * (a[0][1] * a[2][2] - a[1][2] * a[0][2])
        + a[0][2] * (a[0][1] * a[1][2] - a[1][1] * a[0][2]);
    let p = |x: f64| ((x - tr) * x + c2) * x - det;
    let radius = a.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    let disc = (tr * tr - 3.0 * c2).max(0.0).sqrt();
    let (x1, x2) = ((tr - disc) / 3.0, (tr + disc) / 3.0);
    let bisect = |mut lo: f64, mut hi: f64| {
        let rising = p(hi) >= p(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (p(mid) >= 0.0) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    [bisect(x2, radius), bisect(x1, x2), bisect(-radius, x1)]
}

fn numerical_suite() -> Outcome {
    let cfg = QuadConfig::default();
    let norm = [0.5, 1.0, 1.5, 2.0]
        .iter()
        .map(|&g| (integrate_weibull(|_| 1.0, 4.0, g, f64::INFINITY, &cfg).value - 1.0).abs())
        .fold(0.0, f64::max);

    let mut rng = substream(9, 0, 0);
    let mut eig_err: f64 = 0.0;
    let mut matrices = 0;
    while matrices < 500 {
        let e: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
        let a = vec![vec![e[0], e[1], e[2]], vec![e[1], e[3], e[4]], vec![e[2], e[4], e[5]]];
        let roots = cubic_roots(&a);
        if roots[0] - roots[1] < 0.05 || roots[1] - roots[2] < 0.05 {
            continue;
        }
        matrices += 1;
        match jacobi_eigenvalues(&a) {
            Ok(eig) => {
                for (x, r) in eig.iter().zip(&roots) {
                    eig_err = eig_err.max((x - r).abs());
                }
            }
            Err(e) => return Outcome::error(e),
        }
    }

    let mut info_err: f64 = 0.0;
    for _ in 0..200 {
        let d: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..20.0)).collect();
        let r: Vec<f64> = (0..3).map(|_| rng.random_range(-0.4..0.4)).collect();
        let c: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = |i: usize, j: usize| (d[i] * d[j]).sqrt();
        let a = [
            [d[0], r[0] * s(0, 1), r[1] * s(0, 2)],
            [r[0] * s(0, 1), d[1], r[2] * s(1, 2)],
            [r[1] * s(0, 2), r[2] * s(1, 2), d[2]],
        ];
        let f = |x: &[f64]| {
            let y: Vec<f64> = x.iter().zip(&c).map(|(x, c)| x - c).collect();
            -0.5 * (0..3).map(|i| (0..3).map(|j| y[i] * a[i][j] * y[j]).sum::<f64>()).sum::<f64>()
        };
        let info = observed_information(f, &c, &StepRule::CbrtEps);
        for i in 0..3 {
            for j in 0..3 {
                info_err = info_err.max((info[i][j] - a[i][j]).abs() / a[i][i].max(a[j][j]));
            }
        }
    }

    let mut grad_err: f64 = 0.0;
    for _ in 0..200 {
        let (alpha, beta, eta) = (rng.random_range(-4.0..1.0), rng.random_range(0.02..0.5), rng.random_range(0.3..0.95));
        let times = vec![1.0, 5.0, 12.0];
        let counts: Vec<Vec<u32>> = (0..3).map(|_| (0..2).map(|_| rng.random_range(0..=40)).collect()).collect();
        let data = CountDataset::new(times, counts, 40).expect("valid dataset");
        let mut score = [0.0; 3];
        for (t, k) in data.observations() {
            let s = sigmoid(alpha + beta * t);
            let p = eta * s;
            let k = k as f64;
            let dl = k / p - (40.0 - k) / (1.0 - p);
            score[0] += dl * eta * s * (1.0 - s);
            score[1] += dl * eta * s * (1.0 - s) * t;
            score[2] += dl * s;
        }
        let x = [alpha, beta, eta];
        for j in 0..3 {
            let h = 1e-5 * (1.0 + x[j].abs());
            let (mut up, mut dn) = (x, x);
            up[j] += h;
            dn[j] -= h;
            let fd = (lrm_loglik(up[0], up[1], up[2], &data) - lrm_loglik(dn[0], dn[1], dn[2], &data)) / (2.0 * h);
            grad_err = grad_err.max((fd - score[j]).abs() / score[j].abs().max(1.0));
        }
    }

    Outcome::new(
        norm < 1e-10 && eig_err < 1e-9 && info_err < 1e-6 && grad_err < 1e-5,
        format!(
            "normalization {norm:.1e}; Jacobi vs cubic {eig_err:.1e}; information on quadratics {info_err:.1e}; \
             lrm gradient {grad_err:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut all_pass = true;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        all_pass &= outcome.pass;
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n} ({name}): {}", outcome.detail);
    };

    report(1, "parameter recovery", parameter_recovery());
    report(2, "exact identities", exact_identities());
    report(3, "oracle equivalence", oracle_equivalence());
    report(4, "flat-slope closed form", flat_slope_closed_form());

    let dir = tempfile::tempdir().expect("temporary directory");
    match cmd_compare(dir.path(), &RunConfig::default()) {
        Ok(dynamics) => {
            report(5, "model separation", model_separation(&dynamics));
            report(6, "PCA contrast", pca_contrast(&dynamics));
            report(7, "cross-section", cross_section_zero_mass(&dynamics));
        }
        Err(e) => {
            for (n, name) in [(5, "model separation"), (6, "PCA contrast"), (7, "cross-section")] {
                report(n, name, Outcome::error(&e));
            }
        }
    }

    report(8, "real-data ordering", real_data_ordering());
    report(9, "numerical suite", numerical_suite());

    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
