use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Brute-force k-nearest-neighbour vote on Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub n_classes: usize,
    pub train_x: Array2<f64>,
    pub train_y: Vec<usize>,
}

impl Knn {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, k: usize) -> Result<Self> {
        super::check_training(x, y, n_classes)?;
        if k == 0 || k > x.nrows() {
            return Err(Error::invalid(format!(
                "k = {k} must be in 1..={} (training rows)",
                x.nrows()
            )));
        }
        Ok(Knn {
            k,
            n_classes,
            train_x: x.to_owned(),
            train_y: y.to_vec(),
        })
    }

    /// Vote fractions among the `k` nearest training rows. Equidistant
    /// neighbours are ranked by training index.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.train_x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.train_x.ncols(),
                got: x.ncols(),
            });
        }
        let rows: Vec<Vec<f64>> = (0..x.nrows())
            .into_par_iter()
            .map(|i| self.votes(x.row(i)))
            .collect();
        Ok(super::rows_to_array(rows, self.n_classes))
    }

    fn votes(&self, q: ArrayView1<f64>) -> Vec<f64> {
        let mut dist: Vec<(f64, usize)> = self
            .train_x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(j, t)| (t.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum(), j))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, order);
        }
        let mut probs = vec![0.0; self.n_classes];
        for &(_, j) in &dist[..self.k] {
            probs[self.train_y[j]] += 1.0 / self.k as f64;
        }
        probs
    }
}
