//! Stratified splitting and four lightweight multiclass classifiers.
//!
//! All classifiers consume dense feature matrices (the Lasso-reduced
//! embedding) and integer class labels in `0..n_classes`, and return
//! per-class probabilities whose rows sum to one.

mod knn;
pub mod logreg;
mod nb;
mod split;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use knn::Knn;
pub use logreg::{LrParams, SoftmaxRegression};
pub use nb::GaussianNb;
pub use split::{stratified_split, SplitPlan};
pub use tree::{DecisionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Knn,
    Nb,
    Lr,
    Dt,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::Knn,
        ClassifierKind::Nb,
        ClassifierKind::Lr,
        ClassifierKind::Dt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::Nb => "nb",
            ClassifierKind::Lr => "lr",
            ClassifierKind::Dt => "dt",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown classifier '{s}' (expected knn, nb, lr or dt)")))
    }
}

/// Hyperparameters for every classifier kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierParams {
    pub knn_k: usize,
    pub nb_var_smoothing: f64,
    pub lr: LrParams,
    pub tree: TreeParams,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            knn_k: 3,
            nb_var_smoothing: 1e-9,
            lr: LrParams::default(),
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedClassifier {
    Knn(Knn),
    Nb(GaussianNb),
    Lr(SoftmaxRegression),
    Dt(DecisionTree),
}

impl TrainedClassifier {
    pub fn fit(
        kind: ClassifierKind,
        params: &ClassifierParams,
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
    ) -> Result<Self> {
        Ok(match kind {
            ClassifierKind::Knn => TrainedClassifier::Knn(Knn::fit(x, y, n_classes, params.knn_k)?),
            ClassifierKind::Nb => {
                TrainedClassifier::Nb(GaussianNb::fit(x, y, n_classes, params.nb_var_smoothing)?)
            }
            ClassifierKind::Lr => {
                TrainedClassifier::Lr(SoftmaxRegression::fit(x, y, n_classes, &params.lr)?)
            }
            ClassifierKind::Dt => TrainedClassifier::Dt(DecisionTree::fit(x, y, n_classes, params.tree)?),
        })
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedClassifier::Knn(_) => ClassifierKind::Knn,
            TrainedClassifier::Nb(_) => ClassifierKind::Nb,
            TrainedClassifier::Lr(_) => ClassifierKind::Lr,
            TrainedClassifier::Dt(_) => ClassifierKind::Dt,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            TrainedClassifier::Knn(m) => m.n_classes,
            TrainedClassifier::Nb(m) => m.n_classes,
            TrainedClassifier::Lr(m) => m.n_classes,
            TrainedClassifier::Dt(m) => m.n_classes,
        }
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            TrainedClassifier::Knn(m) => m.predict_proba(x),
            TrainedClassifier::Nb(m) => m.predict_proba(x),
            TrainedClassifier::Lr(m) => m.predict_proba(x),
            TrainedClassifier::Dt(m) => m.predict_proba(x),
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(x)?))
    }
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn argmax_rows(p: &Array2<f64>) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

pub(crate) fn check_training(x: ArrayView2<f64>, y: &[usize], n_classes: usize) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {n_classes} classes")));
    }
    Ok(())
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn rows_to_array(rows: Vec<Vec<f64>>, cols: usize) -> Array2<f64> {
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).expect("uniform rows")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kind_parsing() {
        assert_eq!("KNN".parse::<ClassifierKind>().unwrap(), ClassifierKind::Knn);
        assert!("svm".parse::<ClassifierKind>().is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_rows(&array![[0.5, 0.5], [0.2, 0.8]]), vec![0, 1]);
    }

    #[test]
    fn every_kind_round_trips_through_json() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [0.2, 0.9], [0.9, 0.1]];
        let y = [0, 1, 0, 1];
        for kind in ClassifierKind::ALL {
            let m = TrainedClassifier::fit(kind, &ClassifierParams::default(), x.view(), &y, 2).unwrap();
            let back: TrainedClassifier = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            assert_eq!(back.kind(), kind);
            assert_eq!(back.predict(x.view()).unwrap(), m.predict(x.view()).unwrap());
        }
    }
}
