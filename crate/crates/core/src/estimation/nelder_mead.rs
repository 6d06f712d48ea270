/// Settings for [`minimize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_iter: usize,
    /// Stop when the spread of simplex values falls below `f_tol * (1 + |f_best|)`...
    pub f_tol: f64,
    /// ...and every vertex is within `x_tol` of the best one in each coordinate.
    pub x_tol: f64,
    /// Initial step along each coordinate.
    pub step: f64,
    /// Restarts from the best vertex after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            f_tol: 1e-11,
            x_tol: 1e-7,
            step: 0.25,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn objective<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn run<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], cfg: &NelderMeadConfig, budget: usize) -> NelderMeadResult {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += cfg.step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| objective(f, x)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let extent = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if values[0].is_finite() && spread <= cfg.f_tol * (1.0 + values[0].abs()) && extent <= cfg.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |c: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(m, w)| m + c * (w - m))
                .collect()
        };
        let reflected = along(-1.0);
        let fr = objective(f, &reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = objective(f, &expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = along(-0.5);
                let fc = objective(f, &c);
                (c, fc)
            } else {
                let c = along(0.5);
                let fc = objective(f, &c);
                (c, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = simplex[i]
                        .iter()
                        .zip(&best)
                        .map(|(x, b)| b + 0.5 * (x - b))
                        .collect();
                    values[i] = objective(f, &simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    NelderMeadResult {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}

/// Minimize `f` with the Nelder–Mead simplex method, restarting from the best
/// vertex after each convergence until a restart no longer improves the value.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], cfg: &NelderMeadConfig) -> NelderMeadResult {
    assert!(!x0.is_empty(), "Nelder-Mead needs at least one coordinate");
    let mut result = run(&f, x0, cfg, cfg.max_iter);
    let mut used = result.iterations;
    for _ in 0..cfg.restarts {
        if !result.converged || used >= cfg.max_iter {
            break;
        }
        let again = run(&f, &result.x, cfg, cfg.max_iter - used);
        used += again.iterations;
        let improved = again.value < result.value - cfg.f_tol * (1.0 + result.value.abs());
        let converged = again.converged;
        if again.value <= result.value {
            result = NelderMeadResult {
                iterations: used,
                ..again
            };
        } else {
            result.iterations = used;
        }
        result.converged = converged;
        if !improved {
            break;
        }
    }
    result.iterations = used;
    result
}
