//! Ensemble diagnostics: mean curves, cross-sectional count distributions,
//! covariance spectra and the combined model-comparison report.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{bic_delta, bic_to_csv, BicRow};
use crate::model::{CountDataset, FitResult, ModelKind, Trajectory};

/// Hours at which cross-sections are reported by default.
pub const DEFAULT_CROSS_SECTION_HOURS: [usize; 3] = [4, 16, 30];

fn common_horizon(trajectories: &[Trajectory]) -> Result<usize> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::GridMismatch("ensemble is empty".into()))?;
    let h = first.horizon();
    if let Some((i, t)) = trajectories.iter().enumerate().find(|(_, t)| t.horizon() != h) {
        return Err(Error::GridMismatch(format!(
            "trajectory {i} has horizon {}, expected {h}",
            t.horizon()
        )));
    }
    Ok(h)
}

/// Pointwise mean count over the ensemble, `tau = 0..=horizon`.
pub fn mean_curve(trajectories: &[Trajectory]) -> Result<Vec<f64>> {
    let h = common_horizon(trajectories)?;
    let n = trajectories.len() as f64;
    Ok((0..=h)
        .map(|tau| trajectories.iter().map(|t| t.counts[tau] as f64).sum::<f64>() / n)
        .collect())
}

/// Empirical distribution of `counts[hour]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub hour: usize,
    pub n: usize,
    /// Count value to number of trajectories.
    pub frequencies: BTreeMap<u32, usize>,
}

impl CrossSection {
    pub fn fraction(&self, count: u32) -> f64 {
        self.frequencies.get(&count).copied().unwrap_or(0) as f64 / self.n as f64
    }

    pub fn zero_fraction(&self) -> f64 {
        self.fraction(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("count,frequency,fraction\n");
        for (&k, &f) in &self.frequencies {
            out.push_str(&format!("{k},{f},{:.6}\n", f as f64 / self.n as f64));
        }
        out
    }
}

pub fn cross_section(trajectories: &[Trajectory], hour: usize) -> Result<CrossSection> {
    let h = common_horizon(trajectories)?;
    if hour > h {
        return Err(Error::GridMismatch(format!("hour {hour} beyond horizon {h}")));
    }
    let mut frequencies = BTreeMap::new();
    for t in trajectories {
        *frequencies.entry(t.counts[hour]).or_insert(0) += 1;
    }
    Ok(CrossSection {
        hour,
        n: trajectories.len(),
        frequencies,
    })
}

/// Sample covariance (divisor `n - 1`) of the vectors `counts[1..=horizon]`.
pub fn trajectory_covariance(trajectories: &[Trajectory]) -> Result<Vec<Vec<f64>>> {
    let h = common_horizon(trajectories)?;
    if trajectories.len() < 2 {
        return Err(Error::GridMismatch("covariance needs at least two trajectories".into()));
    }
    let n = trajectories.len() as f64;
    let mean = mean_curve(trajectories)?;
    let centred: Vec<Vec<f64>> = trajectories
        .iter()
        .map(|t| (1..=h).map(|tau| t.counts[tau] as f64 - mean[tau]).collect())
        .collect();
    let mut cov = vec![vec![0.0; h]; h];
    for i in 0..h {
        for j in 0..=i {
            let s: f64 = centred.iter().map(|x| x[i] * x[j]).sum::<f64>() / (n - 1.0);
            cov[i][j] = s;
            cov[j][i] = s;
        }
    }
    Ok(cov)
}

/// Eigenvalues in descending order with cumulative variance fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub cum_frac: Vec<f64>,
}

impl Spectrum {
    /// Smallest number of leading components whose cumulative fraction reaches `level`.
    pub fn components_to_reach(&self, level: f64) -> usize {
        self.cum_frac
            .iter()
            .position(|&c| c >= level)
            .map_or(self.cum_frac.len(), |i| i + 1)
    }

    pub fn first_fraction(&self) -> f64 {
        self.cum_frac.first().copied().unwrap_or(1.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,eigenvalue,cum_frac\n");
        for (i, (e, c)) in self.eigenvalues.iter().zip(&self.cum_frac).enumerate() {
            out.push_str(&format!("{},{e:.10e},{c:.10}\n", i + 1));
        }
        out
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = a.len();
    if a.iter().any(|row| row.len() != n) {
        return Err(Error::SizeMismatch {
            expected: n,
            actual: a.iter().map(Vec::len).find(|&l| l != n).unwrap_or(n),
        });
    }
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((a[i][j] - a[j][i]).abs() / scale);
        }
    }
    if worst > 1e-10 {
        return Err(Error::NotSymmetric(worst));
    }
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (a[i][j] + a[j][i])).collect())
        .collect();
    let trace_abs: f64 = (0..n).map(|i| m[i][i].abs()).sum::<f64>().max(scale);
    let off = |m: &Vec<Vec<f64>>| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..i {
                s += 2.0 * m[i][j] * m[i][j];
            }
        }
        s.sqrt()
    };
    for _sweep in 0..100 {
        if off(&m) < 1e-12 * trace_abs {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                m[p][q] = 0.0;
                m[q][p] = 0.0;
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// Principal-component spectrum of a covariance matrix.
pub fn pca_cumvar(cov: &[Vec<f64>]) -> Result<Spectrum> {
    let eigenvalues = jacobi_eigenvalues(cov)?;
    let total: f64 = eigenvalues.iter().sum();
    let cum_frac = if total > 0.0 {
        let mut acc = 0.0;
        let mut out: Vec<f64> = eigenvalues
            .iter()
            .map(|e| {
                acc += e;
                (acc / total).clamp(0.0, 1.0)
            })
            .collect();
        for i in 1..out.len() {
            out[i] = out[i].max(out[i - 1]);
        }
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
        out
    } else {
        vec![1.0; eigenvalues.len()]
    };
    Ok(Spectrum { eigenvalues, cum_frac })
}

/// Spectrum of an ensemble's covariance, excluding hour 0.
pub fn ensemble_spectrum(trajectories: &[Trajectory]) -> Result<Spectrum> {
    pca_cumvar(&trajectory_covariance(trajectories)?)
}

/// Side-by-side comparison of two ensembles and the fits on their shared dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub hours: Vec<usize>,
    pub ssb_mean: Vec<f64>,
    pub re_mean: Vec<f64>,
    pub ssb_cross_sections: Vec<CrossSection>,
    pub re_cross_sections: Vec<CrossSection>,
    pub ssb_spectrum: Spectrum,
    pub re_spectrum: Spectrum,
    /// `loglik(SSB) - loglik(LRM_RE)` when both fits are present.
    pub log_lr: Option<f64>,
    /// Present when the fits include the LRM baseline.
    pub bic: Option<Vec<BicRow>>,
    pub n_obs: usize,
    pub n_params: BTreeMap<String, usize>,
}

pub fn dynamics_report(
    ssb_ensemble: &[Trajectory],
    re_ensemble: &[Trajectory],
    dataset: &CountDataset,
    fits: &[FitResult],
    hours: &[usize],
) -> Result<DynamicsReport> {
    let h = common_horizon(ssb_ensemble)?;
    let h_re = common_horizon(re_ensemble)?;
    if h != h_re {
        return Err(Error::GridMismatch(format!("ensemble horizons differ: {h} vs {h_re}")));
    }
    let sections = |e: &[Trajectory]| hours.iter().map(|&hr| cross_section(e, hr)).collect::<Result<Vec<_>>>();
    let find = |m: ModelKind| fits.iter().find(|f| f.model == m);
    let log_lr = match (find(ModelKind::Ssb), find(ModelKind::LrmRe)) {
        (Some(s), Some(r)) => Some(s.loglik - r.loglik),
        _ => None,
    };
    let bic = match find(ModelKind::Lrm) {
        Some(_) => Some(bic_delta(fits, dataset.n_obs())?),
        None => None,
    };
    Ok(DynamicsReport {
        hours: hours.to_vec(),
        ssb_mean: mean_curve(ssb_ensemble)?,
        re_mean: mean_curve(re_ensemble)?,
        ssb_cross_sections: sections(ssb_ensemble)?,
        re_cross_sections: sections(re_ensemble)?,
        ssb_spectrum: ensemble_spectrum(ssb_ensemble)?,
        re_spectrum: ensemble_spectrum(re_ensemble)?,
        log_lr,
        bic,
        n_obs: dataset.n_obs(),
        n_params: fits.iter().map(|f| (f.model.to_string(), f.n_params)).collect(),
    })
}

impl DynamicsReport {
    pub fn mean_curves_csv(&self) -> String {
        let mut out = String::from("hour,ssb,re\n");
        for (tau, (s, r)) in self.ssb_mean.iter().zip(&self.re_mean).enumerate() {
            out.push_str(&format!("{tau},{s:.6},{r:.6}\n"));
        }
        out
    }

    /// Write `mean_curves.csv`, `cross_section_<h>.csv`, `spectrum_<model>.csv`,
    /// `bic.csv` (when available) and `summary.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("mean_curves.csv"), self.mean_curves_csv())?;
        for (s, r) in self.ssb_cross_sections.iter().zip(&self.re_cross_sections) {
            let mut counts: Vec<u32> = s.frequencies.keys().chain(r.frequencies.keys()).copied().collect();
            counts.sort_unstable();
            counts.dedup();
            let mut out = String::from("count,ssb,re\n");
            for k in counts {
                out.push_str(&format!(
                    "{k},{},{}\n",
                    s.frequencies.get(&k).copied().unwrap_or(0),
                    r.frequencies.get(&k).copied().unwrap_or(0)
                ));
            }
            fs::write(dir.join(format!("cross_section_{}.csv", s.hour)), out)?;
        }
        fs::write(dir.join("spectrum_ssb.csv"), self.ssb_spectrum.to_csv())?;
        fs::write(dir.join("spectrum_re.csv"), self.re_spectrum.to_csv())?;
        if let Some(rows) = &self.bic {
            fs::write(dir.join("bic.csv"), bic_to_csv(rows))?;
        }
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary())? + "\n")?;
        Ok(())
    }

    /// Headline numbers without the per-hour series.
    pub fn summary(&self) -> serde_json::Value {
        let zero: BTreeMap<String, f64> = self
            .ssb_cross_sections
            .iter()
            .map(|c| (c.hour.to_string(), c.zero_fraction()))
            .collect();
        let ssb_first = self.ssb_spectrum.first_fraction();
        serde_json::json!({
            "log_lr": self.log_lr,
            "n_obs": self.n_obs,
            "n_params": self.n_params,
            "ssb_first_component_fraction": ssb_first,
            "re_first_component_fraction": self.re_spectrum.first_fraction(),
            "re_components_to_reach_ssb_first": self.re_spectrum.components_to_reach(ssb_first),
            "ssb_zero_fraction_by_hour": zero,
            "bic": self.bic,
        })
    }
}
