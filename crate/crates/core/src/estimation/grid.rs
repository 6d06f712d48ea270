use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One axis of a search grid. `n_points == 1` (with `lo == hi`) pins the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Self {
        Self { lo, hi, n_points }
    }

    pub fn fixed(value: f64) -> Self {
        Self {
            lo: value,
            hi: value,
            n_points: 1,
        }
    }

    pub fn is_fixed(&self) -> bool {
        self.n_points == 1
    }

    fn validate(&self) -> Result<()> {
        let ok = if self.n_points == 1 {
            self.lo == self.hi && self.lo.is_finite()
        } else {
            self.n_points >= 3 && self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                field: "grid axis",
                value: self.n_points as f64,
                bound: "lo < hi with n_points >= 3, or a single pinned point",
            })
        }
    }

    fn points(&self, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if self.is_fixed() {
            return vec![self.lo];
        }
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

/// Rectangular grid with successive refinement around the incumbent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
    pub refine_levels: usize,
    /// Each refinement box is this fraction of the previous box, per axis.
    pub shrink: f64,
    /// Points per free axis on refinement levels.
    pub refine_points: usize,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Self {
        Self {
            axes,
            refine_levels: 3,
            shrink: 0.2,
            refine_points: 11,
        }
    }

    pub fn with_refinement(mut self, levels: usize, shrink: f64, points: usize) -> Self {
        self.refine_levels = levels;
        self.shrink = shrink;
        self.refine_points = points;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::InvalidData("grid has no axes".into()));
        }
        for axis in &self.axes {
            axis.validate()?;
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Domain {
                field: "shrink",
                value: self.shrink,
                bound: "(0, 1)",
            });
        }
        if self.refine_levels > 0 && self.refine_points < 3 {
            return Err(Error::Domain {
                field: "refine_points",
                value: self.refine_points as f64,
                bound: ">= 3",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub point: Vec<f64>,
    pub value: f64,
    /// Best point lies on the outer boundary of a free axis after the final level.
    pub on_boundary: bool,
    pub evaluations: usize,
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(axes.len())];
    for values in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Maximize `f` over the grid, then over `refine_levels` shrunken boxes
/// centred on the incumbent and clipped to the outer bounds.
///
/// Points are scanned lexicographically (first axis slowest, ascending) and the
/// first point attaining the maximum wins. Evaluation may run in parallel; the
/// reduction is sequential in scan order, so the result does not depend on
/// scheduling. A supplied `incumbent` is evaluated first and is only displaced
/// by a strictly better point, which makes the returned value monotone in it.
pub fn grid_maximize<F>(spec: &GridSpec, f: F, incumbent: Option<&[f64]>) -> Result<GridOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    let mut evaluations = 0;
    let mut best: Option<(Vec<f64>, f64)> = incumbent.map(|p| {
        evaluations += 1;
        (p.to_vec(), sanitize(f(p)))
    });

    let mut bounds: Vec<(f64, f64)> = spec.axes.iter().map(|a| (a.lo, a.hi)).collect();
    for level in 0..=spec.refine_levels {
        if level > 0 {
            let centre = &best.as_ref().expect("grid evaluated at least once").0;
            bounds = spec
                .axes
                .iter()
                .zip(&bounds)
                .zip(centre)
                .map(|((axis, &(lo, hi)), &c)| {
                    let half = 0.5 * spec.shrink * (hi - lo);
                    ((c - half).max(axis.lo), (c + half).min(axis.hi))
                })
                .collect();
        }
        let n = if level == 0 { None } else { Some(spec.refine_points) };
        let axis_points: Vec<Vec<f64>> = spec
            .axes
            .iter()
            .zip(&bounds)
            .map(|(axis, &(lo, hi))| axis.points(lo, hi, n.unwrap_or(axis.n_points)))
            .collect();
        let points = cartesian(&axis_points);
        let values: Vec<f64> = points.par_iter().map(|p| sanitize(f(p))).collect();
        evaluations += points.len();
        for (p, v) in points.into_iter().zip(values) {
            match &best {
                Some((_, bv)) if v <= *bv => {}
                _ => best = Some((p, v)),
            }
        }
    }
    let (point, value) = best.expect("grid has at least one point");
    let on_boundary = spec.axes.iter().zip(&point).any(|(axis, &x)| {
        if axis.is_fixed() {
            return false;
        }
        let tol = 1e-12 * (axis.hi - axis.lo);
        (x - axis.lo).abs() <= tol || (axis.hi - x).abs() <= tol
    });
    Ok(GridOutcome {
        point,
        value,
        on_boundary,
        evaluations,
    })
}
