//! Domain types shared by every other module: validated parameter vectors,
//! count datasets with their CSV form, simulated trajectories and fit results.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five count models that can be fitted and compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LRM")]
    Lrm,
    #[serde(rename = "LRM_PLUS")]
    LrmPlus,
    #[serde(rename = "LRM_RE")]
    LrmRe,
    #[serde(rename = "SSB")]
    Ssb,
    #[serde(rename = "SSB_PLUS")]
    SsbPlus,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Lrm,
        ModelKind::LrmPlus,
        ModelKind::LrmRe,
        ModelKind::Ssb,
        ModelKind::SsbPlus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lrm => "LRM",
            ModelKind::LrmPlus => "LRM_PLUS",
            ModelKind::LrmRe => "LRM_RE",
            ModelKind::Ssb => "SSB",
            ModelKind::SsbPlus => "SSB_PLUS",
        }
    }

    /// Parameter names in the order used for estimates and information matrices.
    /// `re_eta` only matters for [`ModelKind::LrmRe`].
    pub fn param_names(self, re_eta: bool) -> &'static [&'static str] {
        match self {
            ModelKind::Lrm => &["alpha", "beta"],
            ModelKind::LrmPlus => &["alpha", "beta", "eta"],
            ModelKind::LrmRe if re_eta => &["mu1", "mu2", "rho", "sigma1", "sigma2", "eta"],
            ModelKind::LrmRe => &["mu1", "mu2", "rho", "sigma1", "sigma2"],
            ModelKind::Ssb => &["alpha", "beta", "lambda", "gamma"],
            ModelKind::SsbPlus => &["alpha", "beta", "lambda", "gamma", "eta"],
        }
    }

    pub fn n_params(self, re_eta: bool) -> usize {
        self.param_names(re_eta).len()
    }

    pub fn has_lead_time(self) -> bool {
        matches!(self, ModelKind::Ssb | ModelKind::SsbPlus)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '+'], "_");
        match norm.as_str() {
            "lrm" => Ok(ModelKind::Lrm),
            "lrm_plus" | "lrm_" => Ok(ModelKind::LrmPlus),
            "lrm_re" | "re" => Ok(ModelKind::LrmRe),
            "ssb" => Ok(ModelKind::Ssb),
            "ssb_plus" | "ssb_" => Ok(ModelKind::SsbPlus),
            _ => Err(Error::UnknownField(s.to_string())),
        }
    }
}

fn check_finite(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            field,
            value,
            bound: "finite value",
        })
    }
}

fn check_positive(field: &'static str, value: f64) -> Result<()> {
    check_finite(field, value)?;
    if value > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            field,
            value,
            bound: "> 0",
        })
    }
}

fn check_unit(field: &'static str, value: f64) -> Result<()> {
    check_finite(field, value)?;
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            field,
            value,
            bound: "[0, 1]",
        })
    }
}

/// Parameters of the latent-state model: logistic action time `(alpha, beta)`,
/// Weibull lead time `(lambda, gamma)` and phase probability `eta`.
///
/// `eta == 1` is the plain SSB sub-model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsbParams {
    alpha: f64,
    beta: f64,
    lambda: f64,
    gamma: f64,
    eta: f64,
}

impl SsbParams {
    pub fn new(alpha: f64, beta: f64, lambda: f64, gamma: f64, eta: f64) -> Result<Self> {
        check_finite("alpha", alpha)?;
        check_positive("beta", beta)?;
        check_positive("lambda", lambda)?;
        check_positive("gamma", gamma)?;
        check_unit("eta", eta)?;
        Ok(Self {
            alpha,
            beta,
            lambda,
            gamma,
            eta,
        })
    }

    /// SSB sub-model (`eta = 1`).
    pub fn ssb(alpha: f64, beta: f64, lambda: f64, gamma: f64) -> Result<Self> {
        Self::new(alpha, beta, lambda, gamma, 1.0)
    }

    /// Constructor used by closed-form special cases where the slope may vanish.
    /// Only `beta >= 0` is required.
    pub fn with_flat_slope(alpha: f64, beta: f64, lambda: f64, gamma: f64, eta: f64) -> Result<Self> {
        check_finite("beta", beta)?;
        if beta < 0.0 {
            return Err(Error::Domain {
                field: "beta",
                value: beta,
                bound: ">= 0",
            });
        }
        let mut p = Self::new(alpha, 1.0, lambda, gamma, eta)?;
        p.beta = beta;
        Ok(p)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn with_eta(self, eta: f64) -> Result<Self> {
        Self::with_flat_slope(self.alpha, self.beta, self.lambda, self.gamma, eta)
    }

    pub fn with_weibull(self, lambda: f64, gamma: f64) -> Result<Self> {
        Self::with_flat_slope(self.alpha, self.beta, lambda, gamma, self.eta)
    }

    pub fn to_named(&self) -> BTreeMap<String, f64> {
        [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("eta", self.eta),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Fixed-effect logistic parameters; `eta = 1` is plain LRM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrmParams {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
}

impl LrmParams {
    pub fn new(alpha: f64, beta: f64, eta: f64) -> Result<Self> {
        check_finite("alpha", alpha)?;
        check_positive("beta", beta)?;
        check_unit("eta", eta)?;
        Ok(Self { alpha, beta, eta })
    }
}

/// Bivariate-normal random effect on `(alpha, beta)` with optional phase probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReParams {
    mu1: f64,
    mu2: f64,
    rho: f64,
    sigma1: f64,
    sigma2: f64,
    eta: f64,
}

impl ReParams {
    pub fn new(mu1: f64, mu2: f64, rho: f64, sigma1: f64, sigma2: f64, eta: f64) -> Result<Self> {
        check_finite("mu1", mu1)?;
        check_finite("mu2", mu2)?;
        check_finite("rho", rho)?;
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::Domain {
                field: "rho",
                value: rho,
                bound: "(-1, 1)",
            });
        }
        check_positive("sigma1", sigma1)?;
        check_positive("sigma2", sigma2)?;
        check_unit("eta", eta)?;
        Ok(Self {
            mu1,
            mu2,
            rho,
            sigma1,
            sigma2,
            eta,
        })
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }
    pub fn mu2(&self) -> f64 {
        self.mu2
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mean(&self) -> [f64; 2] {
        [self.mu1, self.mu2]
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let off = self.rho * self.sigma1 * self.sigma2;
        [
            [self.sigma1 * self.sigma1, off],
            [off, self.sigma2 * self.sigma2],
        ]
    }

    /// Mean and variance of the linear predictor `a + b t`.
    pub fn linear_predictor_moments(&self, t: f64) -> (f64, f64) {
        let mean = self.mu1 + self.mu2 * t;
        let var = self.sigma1 * self.sigma1
            + 2.0 * self.rho * self.sigma1 * self.sigma2 * t
            + self.sigma2 * self.sigma2 * t * t;
        (mean, var.max(0.0))
    }
}

/// A validated parameter vector for any of the five models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams {
    Lrm(LrmParams),
    Re(ReParams),
    Ssb(SsbParams),
}

/// Validate a named parameter vector against the fields `model` requires.
///
/// `eta` is optional for the plain models (fixed at 1) and for LRM_RE (defaults to 1).
pub fn validate_params(raw: &BTreeMap<String, f64>, model: ModelKind) -> Result<ModelParams> {
    let allowed: &[&str] = match model {
        ModelKind::Lrm | ModelKind::LrmPlus => &["alpha", "beta", "eta"],
        ModelKind::LrmRe => &["mu1", "mu2", "rho", "sigma1", "sigma2", "eta"],
        ModelKind::Ssb | ModelKind::SsbPlus => &["alpha", "beta", "lambda", "gamma", "eta"],
    };
    if let Some(extra) = raw.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::UnknownField(extra.clone()));
    }
    let get = |name: &'static str| raw.get(name).copied().ok_or(Error::MissingField(name));
    let eta_required = matches!(model, ModelKind::LrmPlus | ModelKind::SsbPlus);
    let eta = if eta_required {
        get("eta")?
    } else {
        raw.get("eta").copied().unwrap_or(1.0)
    };
    if matches!(model, ModelKind::Lrm | ModelKind::Ssb) && eta != 1.0 {
        return Err(Error::Domain {
            field: "eta",
            value: eta,
            bound: "= 1 for the sub-model without phase",
        });
    }
    Ok(match model {
        ModelKind::Lrm | ModelKind::LrmPlus => {
            ModelParams::Lrm(LrmParams::new(get("alpha")?, get("beta")?, eta)?)
        }
        ModelKind::LrmRe => ModelParams::Re(ReParams::new(
            get("mu1")?,
            get("mu2")?,
            get("rho")?,
            get("sigma1")?,
            get("sigma2")?,
            eta,
        )?),
        ModelKind::Ssb | ModelKind::SsbPlus => ModelParams::Ssb(SsbParams::new(
            get("alpha")?,
            get("beta")?,
            get("lambda")?,
            get("gamma")?,
            eta,
        )?),
    })
}

/// Current-status count data: one count per destructively observed system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDataset {
    times: Vec<f64>,
    counts: Vec<Vec<u32>>,
    mass: u32,
}

impl CountDataset {
    pub fn new(times: Vec<f64>, counts: Vec<Vec<u32>>, mass: u32) -> Result<Self> {
        if mass == 0 {
            return Err(Error::InvalidData("mass must be at least 1".into()));
        }
        if times.is_empty() {
            return Err(Error::InvalidData("schedule must contain at least one time".into()));
        }
        if times.len() != counts.len() {
            return Err(Error::InvalidData(format!(
                "{} sacrifice times but {} count columns",
                times.len(),
                counts.len()
            )));
        }
        for (i, &t) in times.iter().enumerate() {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidData(format!("sacrifice time {t} must be positive")));
            }
            if i > 0 && t <= times[i - 1] {
                return Err(Error::InvalidData("sacrifice times must be strictly increasing".into()));
            }
        }
        for (t, col) in times.iter().zip(&counts) {
            if let Some(&k) = col.iter().find(|&&k| k > mass) {
                return Err(Error::InvalidData(format!(
                    "count {k} at time {t} exceeds mass {mass}"
                )));
            }
        }
        Ok(Self {
            times,
            counts,
            mass,
        })
    }

    pub fn empty(mass: u32) -> Self {
        Self {
            times: Vec::new(),
            counts: Vec::new(),
            mass,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }

    pub fn mass(&self) -> u32 {
        self.mass
    }

    /// Total number of count observations.
    pub fn n_obs(&self) -> usize {
        self.counts.iter().map(Vec::len).sum()
    }

    /// Number of sacrifice times that carry at least one observation.
    pub fn n_observed_times(&self) -> usize {
        self.counts.iter().filter(|c| !c.is_empty()).count()
    }

    /// `(t_i, N_ij)` pairs in column-major order.
    pub fn observations(&self) -> impl Iterator<Item = (f64, u32)> + '_ {
        self.times
            .iter()
            .zip(&self.counts)
            .flat_map(|(&t, col)| col.iter().map(move |&k| (t, k)))
    }

    /// Distinct `(t, k)` pairs with multiplicities, in first-seen order.
    pub fn grouped_observations(&self) -> Vec<(f64, u32, usize)> {
        let mut out: Vec<(f64, u32, usize)> = Vec::new();
        for (t, col) in self.times.iter().zip(&self.counts) {
            let start = out.len();
            for &k in col {
                match out[start..].iter_mut().find(|e| e.1 == k) {
                    Some(e) => e.2 += 1,
                    None => out.push((*t, k, 1)),
                }
            }
        }
        out
    }

    /// Parse the CSV table layout: header row of sacrifice times, one row per
    /// replicate, empty or `.` cells missing, `#` comment lines allowed before the header.
    pub fn from_csv(text: &str, mass: u32) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .skip_while(|(_, l)| l.trim_start().starts_with('#') || l.trim().is_empty());
        let (header_line, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            column: 1,
            message: "missing header row".into(),
        })?;
        let times = header
            .split(',')
            .enumerate()
            .map(|(c, cell)| parse_time(cell).map_err(|message| Error::Parse {
                line: header_line,
                column: c + 1,
                message,
            }))
            .collect::<Result<Vec<f64>>>()?;
        let mut counts = vec![Vec::new(); times.len()];
        for (line_no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() > times.len() {
                return Err(Error::Parse {
                    line: line_no,
                    column: times.len() + 1,
                    message: format!("row has {} cells but header has {}", cells.len(), times.len()),
                });
            }
            for (c, cell) in cells.iter().enumerate() {
                let cell = cell.trim();
                if cell.is_empty() || cell == "." {
                    continue;
                }
                let k: u32 = cell.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    column: c + 1,
                    message: format!("`{cell}` is not a non-negative integer count"),
                })?;
                if k > mass {
                    return Err(Error::Parse {
                        line: line_no,
                        column: c + 1,
                        message: format!("count {k} exceeds mass {mass}"),
                    });
                }
                counts[c].push(k);
            }
        }
        Self::new(times, counts, mass).map_err(|e| Error::Parse {
            line: header_line,
            column: 1,
            message: e.to_string(),
        })
    }

    /// Inverse of [`CountDataset::from_csv`]; shorter columns are padded with empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.times.iter().map(|t| format!("{t}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        let rows = self.counts.iter().map(Vec::len).max().unwrap_or(0);
        for r in 0..rows {
            let row: Vec<String> = self
                .counts
                .iter()
                .map(|col| col.get(r).map(|k| k.to_string()).unwrap_or_default())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn parse_time(cell: &str) -> std::result::Result<f64, String> {
    let cell = cell.trim();
    let numeric = cell.trim_end_matches(|c: char| c.is_ascii_alphabetic()).trim();
    let t: f64 = numeric
        .parse()
        .map_err(|_| format!("`{cell}` is not a sacrifice time"))?;
    if t.is_finite() && t > 0.0 {
        Ok(t)
    } else {
        Err(format!("sacrifice time `{cell}` must be positive"))
    }
}

/// Hourly cumulative event counts of one simulated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `counts[tau]` = number of events in `[0, tau + 1)`, `tau = 0..=horizon`.
    pub counts: Vec<u32>,
    /// Latent lead time (0 for models without one).
    pub lead_time: f64,
    /// Sorted finite event times, when retained.
    pub event_times: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.counts.len().saturating_sub(1)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.counts.windows(2).all(|w| w[0] <= w[1])
    }
}

/// A parameter estimate with its Wald standard error, when available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub std_error: Option<f64>,
    /// Estimate sits on the boundary of the parameter space (e.g. `eta = 1`).
    #[serde(default)]
    pub boundary: bool,
}

/// One step of an optimizer's log-likelihood history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: String,
    pub loglik: f64,
}

/// Outcome of fitting one model to one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub estimates: Vec<Estimate>,
    pub loglik: f64,
    pub n_params: usize,
    pub n_obs: usize,
    /// Names of the rows/columns of `info` (boundary parameters are dropped).
    pub info_params: Vec<String>,
    /// Observed information, row-major, `info_params.len()` squared entries.
    pub info: Option<Vec<f64>>,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.estimates.iter().find(|e| e.name == name).map(|e| e.value)
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.estimates
            .iter()
            .find(|e| e.name == name)
            .and_then(|e| e.std_error)
    }

    /// Whether every non-boundary estimate has a standard error.
    pub fn has_std_errors(&self) -> bool {
        self.info.is_some()
            && self
                .estimates
                .iter()
                .filter(|e| !e.boundary)
                .all(|e| e.std_error.is_some())
    }

    /// Rebuild the SSB parameter vector from the estimates.
    pub fn ssb_params(&self) -> Option<SsbParams> {
        if !self.model.has_lead_time() {
            return None;
        }
        SsbParams::new(
            self.get("alpha")?,
            self.get("beta")?,
            self.get("lambda")?,
            self.get("gamma")?,
            self.get("eta").unwrap_or(1.0),
        )
        .ok()
    }

    pub fn re_params(&self) -> Option<ReParams> {
        if self.model != ModelKind::LrmRe {
            return None;
        }
        ReParams::new(
            self.get("mu1")?,
            self.get("mu2")?,
            self.get("rho")?,
            self.get("sigma1")?,
            self.get("sigma2")?,
            self.get("eta").unwrap_or(1.0),
        )
        .ok()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit results are always serializable")
    }
}
