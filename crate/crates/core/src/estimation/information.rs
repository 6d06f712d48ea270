use crate::error::{Error, Result};

/// Per-coordinate finite-difference steps for [`observed_information`].
#[derive(Debug, Clone, PartialEq, Default)]
pub enum StepRule {
    /// `h_j = cbrt(eps) * (1 + |theta_j|)`.
    #[default]
    CbrtEps,
    /// `h_j = c * (1 + |theta_j|)`; larger `c` suits objectives carrying quadrature noise.
    Scaled(f64),
    Explicit(Vec<f64>),
}

impl StepRule {
    fn steps(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            StepRule::CbrtEps => {
                let c = f64::EPSILON.cbrt();
                theta.iter().map(|t| c * (1.0 + t.abs())).collect()
            }
            StepRule::Scaled(c) => theta.iter().map(|t| c * (1.0 + t.abs())).collect(),
            StepRule::Explicit(h) => {
                assert_eq!(h.len(), theta.len(), "one step per coordinate");
                h.clone()
            }
        }
    }
}

/// Negative Hessian of `loglik` at `theta_hat` by central second differences,
/// symmetrized as `(H + H^T) / 2`. Rows follow the order of `theta_hat`.
pub fn observed_information<F: Fn(&[f64]) -> f64>(loglik: F, theta_hat: &[f64], steps: &StepRule) -> Vec<Vec<f64>> {
    let n = theta_hat.len();
    let h = steps.steps(theta_hat);
    let eval = |shifts: &[(usize, f64)]| {
        let mut x = theta_hat.to_vec();
        for &(j, d) in shifts {
            x[j] += d;
        }
        loglik(&x)
    };
    let f0 = loglik(theta_hat);
    let mut hess = vec![vec![0.0; n]; n];
    for j in 0..n {
        let fp = eval(&[(j, h[j])]);
        let fm = eval(&[(j, -h[j])]);
        hess[j][j] = (fp - 2.0 * f0 + fm) / (h[j] * h[j]);
        for k in 0..j {
            let fpp = eval(&[(j, h[j]), (k, h[k])]);
            let fpm = eval(&[(j, h[j]), (k, -h[k])]);
            let fmp = eval(&[(j, -h[j]), (k, h[k])]);
            let fmm = eval(&[(j, -h[j]), (k, -h[k])]);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[j] * h[k]);
            hess[j][k] = v;
            hess[k][j] = v;
        }
    }
    let mut info = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            info[j][k] = -0.5 * (hess[j][k] + hess[k][j]);
        }
    }
    info
}

/// Lower Cholesky factor, or `None` when the matrix is not positive definite.
pub fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let l = cholesky(a).ok_or(Error::SingularInformation)?;
    let mut inv = vec![vec![0.0; n]; n];
    for col in 0..n {
        // Solve L y = e_col, then L^T x = y.
        let mut y = vec![0.0; n];
        for i in 0..n {
            let rhs = if i == col { 1.0 } else { 0.0 };
            let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
            y[i] = (rhs - s) / l[i][i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
            x[i] = (y[i] - s) / l[i][i];
        }
        for i in 0..n {
            inv[i][col] = x[i];
        }
    }
    Ok(inv)
}

/// Wald standard errors `sqrt(diag(info^{-1}))`.
pub fn standard_errors(info: &[Vec<f64>]) -> Result<Vec<f64>> {
    let inv = spd_inverse(info)?;
    inv.iter()
        .enumerate()
        .map(|(i, row)| {
            let v = row[i];
            if v > 0.0 && v.is_finite() {
                Ok(v.sqrt())
            } else {
                Err(Error::SingularInformation)
            }
        })
        .collect()
}
