use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FitResult, ModelKind};

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicRow {
    pub model: ModelKind,
    pub loglik: f64,
    pub n_params: usize,
    /// `-2 (l_model - l_LRM) + (p - 2) ln(N)`; zero for the baseline.
    pub delta_bic: f64,
}

/// BIC differences relative to the fixed-effect LRM baseline, ordered as the
/// five-model listing (LRM, LRM⁺, LRM^RE, SSB, SSB⁺).
pub fn bic_delta(fits: &[FitResult], n_obs: usize) -> Result<Vec<BicRow>> {
    let base = fits
        .iter()
        .find(|f| f.model == ModelKind::Lrm)
        .ok_or(Error::MissingBaseline)?;
    let ln_n = (n_obs as f64).ln();
    let base_p = base.n_params as f64;
    let mut rows: Vec<BicRow> = fits
        .iter()
        .map(|f| BicRow {
            model: f.model,
            loglik: f.loglik,
            n_params: f.n_params,
            delta_bic: if f.model == ModelKind::Lrm {
                0.0
            } else {
                -2.0 * (f.loglik - base.loglik) + (f.n_params as f64 - base_p) * ln_n
            },
        })
        .collect();
    rows.sort_by_key(|r| r.model);
    Ok(rows)
}

/// Model with the smallest BIC (first in table order on ties).
pub fn bic_best(rows: &[BicRow]) -> Option<ModelKind> {
    rows.iter()
        .fold(None::<&BicRow>, |best, r| match best {
            Some(b) if b.delta_bic <= r.delta_bic => Some(b),
            _ => Some(r),
        })
        .map(|r| r.model)
}

/// Table as CSV: `model,loglik,n_params,delta_bic`.
pub fn bic_to_csv(rows: &[BicRow]) -> String {
    let mut out = String::from("model,loglik,n_params,delta_bic\n");
    for r in rows {
        out.push_str(&format!("{},{:.6},{},{:.4}\n", r.model, r.loglik, r.n_params, r.delta_bic));
    }
    out
}
