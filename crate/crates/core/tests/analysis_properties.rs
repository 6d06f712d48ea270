use proptest::prelude::*;
use rand::Rng;

use mehm::analysis::{
    dynamics_report, jacobi_eigenvalues, mean_curve, pca_cumvar, trajectory_covariance, DEFAULT_CROSS_SECTION_HOURS,
};
use mehm::model::{CountDataset, SsbParams, Trajectory};
use mehm::simulation::{simulate_ensemble, substream};

/// Roots of `det(x I - A)` for symmetric 3 x 3 `A`, by bisection between the
/// critical points of the cubic.
fn cubic_roots(a: &[Vec<f64>]) -> [f64; 3] {
    let tr = a[0][0] + a[1][1] + a[2][2];
    let c2 = a[0][0] * a[1][1] + a[0][0] * a[2][2] + a[1][1] * a[2][2]
        - a[0][1] * a[1][0]
        - a[0][2] * a[2][0]
        - a[1][2] * a[2][1];
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
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

fn noise_ensemble(rows: &[Vec<u32>]) -> Vec<Trajectory> {
    rows.iter()
        .map(|r| Trajectory {
            counts: r.clone(),
            lead_time: 0.0,
            event_times: None,
        })
        .collect()
}

fn trajectory_rows(width: usize) -> impl Strategy<Value = Vec<Vec<u32>>> {
    proptest::collection::vec(proptest::collection::vec(0u32..300, width), 2..15)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn jacobi_matches_characteristic_cubic(entries in proptest::collection::vec(-5.0f64..5.0, 6)) {
        let a = vec![
            vec![entries[0], entries[1], entries[2]],
            vec![entries[1], entries[3], entries[4]],
            vec![entries[2], entries[4], entries[5]],
        ];
        let roots = cubic_roots(&a);
        prop_assume!(roots[0] - roots[1] > 0.05 && roots[1] - roots[2] > 0.05);
        let eig = jacobi_eigenvalues(&a).unwrap();
        for (e, r) in eig.iter().zip(&roots) {
            prop_assert!((e - r).abs() < 1e-9, "{:?} vs {:?}", eig, roots);
        }
    }

    #[test]
    fn spectrum_preserves_trace(rows in trajectory_rows(9)) {
        let cov = trajectory_covariance(&noise_ensemble(&rows)).unwrap();
        let trace: f64 = (0..cov.len()).map(|i| cov[i][i]).sum();
        let spec = pca_cumvar(&cov).unwrap();
        let total: f64 = spec.eigenvalues.iter().sum();
        prop_assert!((total - trace).abs() <= 1e-9 * trace.abs().max(1e-300));
        prop_assert!(spec.eigenvalues.iter().all(|&e| e >= -1e-8 * trace));
        prop_assert!(spec.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(spec.cum_frac.windows(2).all(|w| w[0] <= w[1] + 1e-15));
        prop_assert!((spec.cum_frac.last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_invariant_under_permutation(rows in trajectory_rows(7), perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let cov = trajectory_covariance(&noise_ensemble(&rows)).unwrap();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| perm.iter().map(|&j| cov[i][j]).collect()).collect();
        let a = pca_cumvar(&cov).unwrap();
        let b = pca_cumvar(&permuted).unwrap();
        let scale = a.eigenvalues[0].abs().max(1e-300);
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            prop_assert!((x - y).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn mean_curve_is_linear(left in trajectory_rows(5), right in trajectory_rows(5)) {
        let (l, r) = (noise_ensemble(&left), noise_ensemble(&right));
        let joined: Vec<Trajectory> = l.iter().chain(&r).cloned().collect();
        let (ml, mr, mj) = (mean_curve(&l).unwrap(), mean_curve(&r).unwrap(), mean_curve(&joined).unwrap());
        let (nl, nr) = (l.len() as f64, r.len() as f64);
        for tau in 0..5 {
            let weighted = (nl * ml[tau] + nr * mr[tau]) / (nl + nr);
            prop_assert!((weighted - mj[tau]).abs() <= 1e-10 * mj[tau].abs().max(1.0));
        }
    }

    #[test]
    fn covariance_is_exactly_symmetric(rows in trajectory_rows(6)) {
        let cov = trajectory_covariance(&noise_ensemble(&rows)).unwrap();
        for i in 0..cov.len() {
            for j in 0..cov.len() {
                prop_assert_eq!(cov[i][j].to_bits(), cov[j][i].to_bits());
            }
        }
    }
}

#[test]
fn unit_variance_noise_has_unit_diagonal() {
    let mut rng = substream(41, 0, 0);
    let rows: Vec<Vec<u32>> = (0..10_000)
        .map(|_| (0..=60).map(|_| if rng.random::<bool>() { 2 } else { 0 }).collect())
        .collect();
    let cov = trajectory_covariance(&noise_ensemble(&rows)).unwrap();
    assert_eq!(cov.len(), 60);
    for (i, row) in cov.iter().enumerate() {
        assert!((row[i] - 1.0).abs() < 0.05, "diagonal {i}: {}", row[i]);
    }
}

#[test]
fn identical_ensembles_give_identical_reports() {
    let p = SsbParams::ssb(-3.0, 0.15, 4.0, 1.5).unwrap();
    let ens = simulate_ensemble(&p, 300, 60, 200, 43);
    let data = CountDataset::new(vec![2.0, 10.0], vec![vec![0, 5], vec![100]], 300).unwrap();
    let report = dynamics_report(&ens, &ens, &data, &[], &DEFAULT_CROSS_SECTION_HOURS).unwrap();
    assert_eq!(report.ssb_mean, report.re_mean);
    assert_eq!(report.ssb_spectrum, report.re_spectrum);
    assert_eq!(report.ssb_cross_sections, report.re_cross_sections);
    assert!(report.log_lr.is_none());
    assert!(report.bic.is_none());
}

#[test]
fn latent_state_ensemble_concentrates_variance() {
    let p = SsbParams::ssb(-3.0, 0.15, 4.0, 1.5).unwrap();
    let spec = mehm::analysis::ensemble_spectrum(&simulate_ensemble(&p, 300, 60, 500, 47)).unwrap();
    assert_eq!(spec.eigenvalues.len(), 60);
    assert!(spec.first_fraction() > 0.9, "{}", spec.first_fraction());
}
