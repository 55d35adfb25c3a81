use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian naive Bayes with empirical class priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub n_classes: usize,
    pub means: Array2<f64>,
    pub variances: Array2<f64>,
    pub log_priors: Vec<f64>,
}

impl GaussianNb {
    /// Per-class variances are floored at `var_smoothing` times the largest
    /// feature variance of the whole training set.
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, var_smoothing: f64) -> Result<Self> {
        super::check_training(x, y, n_classes)?;
        let d = x.ncols();
        let mut counts = vec![0usize; n_classes];
        for &c in y {
            counts[c] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("naive Bayes: class {c} has no training samples")));
        }

        let mut means = Array2::<f64>::zeros((n_classes, d));
        for (row, &c) in x.rows().into_iter().zip(y) {
            let mut m = means.row_mut(c);
            m += &row;
        }
        for (c, mut m) in means.rows_mut().into_iter().enumerate() {
            m /= counts[c] as f64;
        }
        let mut variances = Array2::<f64>::zeros((n_classes, d));
        for (row, &c) in x.rows().into_iter().zip(y) {
            let diff = &row - &means.row(c);
            let mut v = variances.row_mut(c);
            v += &(&diff * &diff);
        }
        for (c, mut v) in variances.rows_mut().into_iter().enumerate() {
            v /= counts[c] as f64;
        }

        let max_var = x.var_axis(Axis(0), 0.0).iter().copied().fold(0.0, f64::max);
        let floor = if max_var > 0.0 { var_smoothing * max_var } else { var_smoothing };
        variances.mapv_inplace(|v| v.max(floor));

        let n = y.len() as f64;
        Ok(GaussianNb {
            n_classes,
            means,
            variances,
            log_priors: counts.iter().map(|&c| (c as f64 / n).ln()).collect(),
        })
    }

    pub fn joint_log_likelihood(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.means.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.means.ncols(),
                got: x.ncols(),
            });
        }
        let log_norm: Array1<f64> = self
            .variances
            .rows()
            .into_iter()
            .map(|v| -0.5 * v.iter().map(|s| (2.0 * std::f64::consts::PI * s).ln()).sum::<f64>())
            .collect();
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for (i, row) in x.rows().into_iter().enumerate() {
            for c in 0..self.n_classes {
                let mahal: f64 = row
                    .iter()
                    .zip(self.means.row(c))
                    .zip(self.variances.row(c))
                    .map(|((xv, m), v)| (xv - m) * (xv - m) / v)
                    .sum();
                out[[i, c]] = self.log_priors[c] + log_norm[c] - 0.5 * mahal;
            }
        }
        Ok(out)
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut jll = self.joint_log_likelihood(x)?;
        for mut row in jll.rows_mut() {
            super::softmax_in_place(row.as_slice_mut().expect("standard layout"));
        }
        Ok(jll)
    }
}
