//! L1-regularized least squares by cyclic coordinate descent, and
//! one-vs-rest feature selection built on it.
//!
//! The objective is
//!
//! ```text
//! (1/(2n)) * sum_i (y_i - b0 - x_i . beta)^2 + alpha * sum_j |beta_j|
//! ```
//!
//! with an unpenalized intercept `b0`. Columns are neither centered nor
//! scaled, so sparse inputs stay sparse; the intercept absorbs the target
//! mean.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{ColumnView, SparseMatrix, SparseVector};

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            alpha: 0.01,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

impl LassoParams {
    pub fn with_alpha(alpha: f64) -> Self {
        LassoParams {
            alpha,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::invalid(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Result of a single-target fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: SparseVector,
    pub intercept: f64,
    /// True when the coefficient change dropped below `tol` *and* the KKT
    /// conditions held within `tol`.
    pub converged: bool,
    pub sweeps: usize,
    /// Objective value after each full sweep.
    pub objective_trace: Vec<f64>,
}

/// Fits a single-target Lasso on CSR input.
pub fn fit(x: &SparseMatrix, y: &[f64], params: &LassoParams) -> Result<LassoFit> {
    check_inputs(x, y, params)?;
    let view = x.occupied_columns();
    Ok(fit_view(&view, x.cols(), y, params))
}

fn check_inputs(x: &SparseMatrix, y: &[f64], params: &LassoParams) -> Result<()> {
    params.validate()?;
    if x.rows() == 0 {
        return Err(Error::invalid("lasso needs at least one row"));
    }
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter_triplets().any(|(_, _, v)| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in lasso input".into()));
    }
    Ok(())
}

fn fit_view(view: &ColumnView, dim: usize, y: &[f64], params: &LassoParams) -> LassoFit {
    let n = y.len() as f64;
    let alpha = params.alpha;
    let p = view.columns().len();

    let sq_norms: Vec<f64> = (0..p)
        .map(|s| view.column(s).1.iter().map(|v| v * v).sum::<f64>() / n)
        .collect();
    let mut beta = vec![0.0; p];
    let mut intercept = y.iter().sum::<f64>() / n;
    let mut resid: Vec<f64> = y.iter().map(|v| v - intercept).collect();

    let col_dot = |slot: usize, r: &[f64]| -> f64 {
        let (rows, vals) = view.column(slot);
        rows.iter().zip(vals).map(|(&i, &v)| v * r[i]).sum::<f64>() / n
    };
    let objective = |r: &[f64], b: &[f64]| -> f64 {
        r.iter().map(|v| v * v).sum::<f64>() / (2.0 * n) + alpha * b.iter().map(|v| v.abs()).sum::<f64>()
    };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < params.max_iter {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for slot in 0..p {
            let c = sq_norms[slot];
            if c == 0.0 {
                continue;
            }
            let old = beta[slot];
            let z = col_dot(slot, &resid) + c * old;
            let new = soft_threshold(z, alpha) / c;
            let delta = new - old;
            if delta != 0.0 {
                let (rows, vals) = view.column(slot);
                for (&i, &v) in rows.iter().zip(vals) {
                    resid[i] -= v * delta;
                }
                beta[slot] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        let shift = resid.iter().sum::<f64>() / n;
        intercept += shift;
        resid.iter_mut().for_each(|r| *r -= shift);
        max_change = max_change.max(shift.abs());
        trace.push(objective(&resid, &beta));

        if max_change < params.tol {
            let kkt = (0..p)
                .map(|s| {
                    let g = col_dot(s, &resid);
                    if beta[s] == 0.0 {
                        (g.abs() - alpha).max(0.0)
                    } else {
                        (g - alpha * beta[s].signum()).abs()
                    }
                })
                .fold(0.0, f64::max);
            if kkt <= params.tol {
                converged = true;
                break;
            }
        }
    }

    let pairs = view
        .columns()
        .iter()
        .zip(&beta)
        .filter(|(_, &b)| b != 0.0)
        .map(|(&c, &b)| (c, b))
        .collect();
    LassoFit {
        coefficients: SparseVector::from_unsorted(dim, pairs).expect("columns within dim"),
        intercept,
        converged,
        sweeps,
        objective_trace: trace,
    }
}

/// Per-class coefficients of a one-vs-rest selection model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCoefficients {
    pub class: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub alpha: f64,
    pub n_features: usize,
    pub classes: Vec<ClassCoefficients>,
    /// Features with a nonzero coefficient for at least one class, ascending.
    pub selected: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl LassoModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn all_converged(&self) -> bool {
        self.classes.iter().all(|c| c.converged)
    }
}

/// Fits one indicator-target Lasso per class (in parallel) and takes the
/// union of the supports.
pub fn select_features(x: &SparseMatrix, labels: &[usize], params: &LassoParams) -> Result<LassoModel> {
    params.validate()?;
    if labels.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: labels.len(),
        });
    }
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::invalid("feature selection needs at least two classes"));
    }
    check_inputs(x, &vec![0.0; labels.len()], params)?;

    let view = x.occupied_columns();
    let classes: Vec<ClassCoefficients> = present
        .par_iter()
        .map(|&c| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect();
            let f = fit_view(&view, x.cols(), &y, params);
            if !f.converged {
                log::warn!("lasso for class {c} stopped after {} sweeps without converging", f.sweeps);
            }
            let (indices, values) = f.coefficients.entries().iter().copied().unzip();
            ClassCoefficients {
                class: c,
                indices,
                values,
                intercept: f.intercept,
                converged: f.converged,
            }
        })
        .collect();

    let mut selected: Vec<usize> = classes.iter().flat_map(|c| c.indices.iter().copied()).collect();
    selected.sort_unstable();
    selected.dedup();
    Ok(LassoModel {
        alpha: params.alpha,
        n_features: x.cols(),
        classes,
        selected,
        config_hash: None,
    })
}

/// Keeps the selected columns, in ascending original-index order.
pub fn reduce(x: &SparseMatrix, model: &LassoModel) -> Result<SparseMatrix> {
    if model.selected.is_empty() {
        return Err(Error::EmptySelection { alpha: model.alpha });
    }
    if x.cols() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            got: x.cols(),
        });
    }
    x.select_columns(&model.selected)
}

/// Log-spaced alpha candidates from `1e-4` to `1`, 9 points.
pub fn alpha_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-4.0 + 0.5 * i as f64)).collect()
}

/// One-standard-error rule: among `(alpha, validation accuracy)` pairs, the
/// largest alpha whose accuracy is within one binomial standard error of the
/// best. Returns `None` for an empty slice.
pub fn pick_alpha_one_se(scores: &[(f64, f64)], n_validation: usize) -> Option<f64> {
    let best = scores.iter().map(|&(_, a)| a).fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    let se = if n_validation > 0 {
        (best * (1.0 - best) / n_validation as f64).sqrt()
    } else {
        0.0
    };
    scores
        .iter()
        .filter(|&&(_, a)| a >= best - se - 1e-12)
        .map(|&(alpha, _)| alpha)
        .fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |b| b.max(a))))
}
