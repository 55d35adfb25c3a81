//! Multinomial (softmax) logistic regression trained by full-batch gradient
//! descent with a backtracking line search.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrParams {
    pub l2: f64,
    pub max_epochs: usize,
    /// Stop when the gradient max-norm falls below this.
    pub tol: f64,
    pub initial_step: f64,
}

impl Default for LrParams {
    fn default() -> Self {
        LrParams {
            l2: 1e-4,
            max_epochs: 500,
            tol: 1e-4,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxRegression {
    pub n_classes: usize,
    /// `n_classes x n_features`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub converged: bool,
    pub epochs: usize,
    /// Objective after every accepted step, starting from the zero model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

fn probabilities(w: ArrayView2<f64>, b: ArrayView1<f64>, x: ArrayView2<f64>) -> Array2<f64> {
    let mut logits = x.dot(&w.t()).as_standard_layout().into_owned();
    logits += &b;
    for mut row in logits.rows_mut() {
        super::softmax_in_place(row.as_slice_mut().expect("standard layout"));
    }
    logits
}

/// Mean cross-entropy plus `(l2/2) * ||W||^2` (bias unpenalized).
pub fn objective(w: ArrayView2<f64>, b: ArrayView1<f64>, x: ArrayView2<f64>, y: &[usize], l2: f64) -> f64 {
    let mut logits = x.dot(&w.t());
    logits += &b;
    let n = x.nrows() as f64;
    let ce: f64 = logits
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &c)| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[c]
        })
        .sum();
    ce / n + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Analytic gradient of [`objective`] with respect to `(W, b)`.
pub fn gradient(
    w: ArrayView2<f64>,
    b: ArrayView1<f64>,
    x: ArrayView2<f64>,
    y: &[usize],
    l2: f64,
) -> (Array2<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let mut delta = probabilities(w, b, x);
    for (mut row, &c) in delta.rows_mut().into_iter().zip(y) {
        row[c] -= 1.0;
    }
    delta /= n;
    let gw = delta.t().dot(&x) + &(&w * l2);
    let gb = delta.sum_axis(Axis(0));
    (gw, gb)
}

impl SoftmaxRegression {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, params: &LrParams) -> Result<Self> {
        super::check_training(x, y, n_classes)?;
        if n_classes < 2 {
            return Err(Error::invalid("logistic regression needs at least two classes"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite feature value".into()));
        }
        let d = x.ncols();
        let mut w = Array2::<f64>::zeros((n_classes, d));
        let mut b = Array1::<f64>::zeros(n_classes);
        let mut f = objective(w.view(), b.view(), x, y, params.l2);
        let mut trace = vec![f];
        let mut step = params.initial_step;
        let mut converged = false;
        let mut epochs = 0;

        while epochs < params.max_epochs {
            let (gw, gb) = gradient(w.view(), b.view(), x, y, params.l2);
            let gmax = gw.iter().chain(gb.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
            if gmax < params.tol {
                converged = true;
                break;
            }
            epochs += 1;
            let gsq: f64 = gw.iter().chain(gb.iter()).map(|v| v * v).sum();
            loop {
                let w_new = &w - &(&gw * step);
                let b_new = &b - &(&gb * step);
                let f_new = objective(w_new.view(), b_new.view(), x, y, params.l2);
                if f_new <= f - 1e-4 * step * gsq {
                    w = w_new;
                    b = b_new;
                    f = f_new;
                    trace.push(f);
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
                if step < 1e-14 {
                    // No descent possible at machine precision.
                    converged = gmax < params.tol.sqrt();
                    return Ok(Self::finish(n_classes, w, b, converged, epochs, trace));
                }
            }
            if !f.is_finite() {
                return Err(Error::Numerical(format!("objective diverged at epoch {epochs}")));
            }
        }
        Ok(Self::finish(n_classes, w, b, converged, epochs, trace))
    }

    fn finish(
        n_classes: usize,
        weights: Array2<f64>,
        bias: Array1<f64>,
        converged: bool,
        epochs: usize,
        objective_trace: Vec<f64>,
    ) -> Self {
        SoftmaxRegression {
            n_classes,
            weights,
            bias,
            converged,
            epochs,
            objective_trace,
        }
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.weights.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.ncols(),
                got: x.ncols(),
            });
        }
        Ok(probabilities(self.weights.view(), self.bias.view(), x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_model_is_uniform() {
        let w = Array2::<f64>::zeros((3, 2));
        let b = Array1::<f64>::zeros(3);
        let p = probabilities(w.view(), b.view(), array![[1.0, -4.0]].view());
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn separable_1d() {
        let x = array![[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]];
        let y = [0, 0, 0, 1, 1, 1];
        let m = SoftmaxRegression::fit(x.view(), &y, 2, &LrParams::default()).unwrap();
        let p = m.predict_proba(x.view()).unwrap();
        let pred = super::super::argmax_rows(&p);
        assert_eq!(pred, y);
    }

    #[test]
    fn objective_never_increases() {
        let x = array![[0.0, 1.0], [1.0, 0.5], [2.0, -1.0], [0.5, 0.5], [-1.0, 2.0]];
        let y = [0, 1, 2, 1, 0];
        let m = SoftmaxRegression::fit(x.view(), &y, 3, &LrParams::default()).unwrap();
        for w in m.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let x = Array2::from_shape_fn((5, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * j as f64);
        let y = [0, 2, 1, 2, 0];
        let w = Array2::from_shape_fn((3, 4), |(c, j)| 0.3 * c as f64 - 0.2 * j as f64 + 0.05);
        let b = array![0.1, -0.2, 0.3];
        let (gw, gb) = gradient(w.view(), b.view(), x.view(), &y, 1e-4);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for c in 0..3 {
            for j in 0..4 {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[[c, j]] += h;
                wm[[c, j]] -= h;
                let fd = (objective(wp.view(), b.view(), x.view(), &y, 1e-4)
                    - objective(wm.view(), b.view(), x.view(), &y, 1e-4))
                    / (2.0 * h);
                worst = worst.max((gw[[c, j]] - fd).abs() / gw[[c, j]].abs().max(fd.abs()).max(1e-6));
            }
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[c] += h;
            bm[c] -= h;
            let fd = (objective(w.view(), bp.view(), x.view(), &y, 1e-4)
                - objective(w.view(), bm.view(), x.view(), &y, 1e-4))
                / (2.0 * h);
            worst = worst.max((gb[c] - fd).abs() / gb[c].abs().max(fd.abs()).max(1e-6));
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn rejects_non_finite() {
        let x = array![[f64::NAN], [1.0]];
        assert!(SoftmaxRegression::fit(x.view(), &[0, 1], 2, &LrParams::default()).is_err());
    }
}
