//! Multiclass evaluation metrics and run averaging.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[t][p]` = number of samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Applies the class permutation `perm` (old index -> new index) to both axes.
    pub fn relabel(&self, perm: &[usize]) -> ConfusionMatrix {
        let n = self.n_classes();
        let mut counts = vec![vec![0; n]; n];
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                counts[perm[t]][perm[p]] = c;
            }
        }
        ConfusionMatrix { counts }
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if y_true.is_empty() {
        return Err(Error::invalid("confusion matrix of empty input"));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    let mut counts = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::invalid(format!(
                "label {} out of range for {n_classes} classes",
                t.max(p)
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
}

/// Accuracy plus support-weighted and macro precision / recall / F1.
/// Undefined ratios (0/0) count as 0.
pub fn classification_metrics(m: &ConfusionMatrix) -> Result<ClassificationScores> {
    let n = m.n_classes();
    let total = m.total();
    if n == 0 || total == 0 {
        return Err(Error::invalid("confusion matrix has no samples"));
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut pw, mut rw, mut fw, mut pm, mut rm, mut fm) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let mut correct = 0;
    for c in 0..n {
        let tp = m.counts[c][c];
        let support: usize = m.counts[c].iter().sum();
        let predicted: usize = m.counts.iter().map(|row| row[c]).sum();
        correct += tp;
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let w = support as f64 / total as f64;
        pw += w * precision;
        rw += w * recall;
        fw += w * f1;
        pm += precision;
        rm += recall;
        fm += f1;
    }
    let k = n as f64;
    Ok(ClassificationScores {
        accuracy: correct as f64 / total as f64,
        precision_weighted: pw,
        recall_weighted: rw,
        f1_weighted: fw,
        precision_macro: pm / k,
        recall_macro: rm / k,
        f1_macro: fm / k,
    })
}

/// Rank-based (Mann-Whitney) binary AUC; tied scores share the average rank,
/// so each tied positive/negative pair contributes 1/2.
pub fn binary_auc(positive: &[bool], scores: &[f64]) -> Result<f64> {
    if positive.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: positive.len(),
            got: scores.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("AUC needs both positive and negative samples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocAuc {
    pub weighted: f64,
    #[serde(rename = "macro")]
    pub macro_avg: f64,
}

/// One-vs-rest ROC AUC over the columns of `scores`, averaged by class
/// support (`weighted`) and uniformly (`macro`).
pub fn roc_auc_ovr(y_true: &[usize], scores: &Array2<f64>) -> Result<RocAuc> {
    if y_true.len() != scores.nrows() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: scores.nrows(),
        });
    }
    let n_classes = scores.ncols();
    let mut support = vec![0usize; n_classes];
    for &t in y_true {
        if t >= n_classes {
            return Err(Error::invalid(format!("label {t} out of range for {n_classes} classes")));
        }
        support[t] += 1;
    }
    if let Some(c) = support.iter().position(|&s| s == 0) {
        return Err(Error::invalid(format!("ROC AUC undefined: class {c} absent from y_true")));
    }
    let n = y_true.len() as f64;
    let (mut weighted, mut macro_sum) = (0.0, 0.0);
    for c in 0..n_classes {
        let pos: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
        let col: Vec<f64> = scores.column(c).to_vec();
        let auc = binary_auc(&pos, &col)?;
        weighted += auc * support[c] as f64 / n;
        macro_sum += auc;
    }
    Ok(RocAuc {
        weighted,
        macro_avg: macro_sum / n_classes as f64,
    })
}

/// Metric bundle for one classifier on one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub f1_macro: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub roc_auc_ovr_weighted: f64,
    pub roc_auc_ovr_macro: f64,
    pub train_time_seconds: f64,
}

impl RunMetrics {
    pub fn from_predictions(
        y_true: &[usize],
        proba: &Array2<f64>,
        train_time_seconds: f64,
    ) -> Result<Self> {
        let pred = crate::classify::argmax_rows(proba);
        let cm = confusion_matrix(y_true, &pred, proba.ncols())?;
        let s = classification_metrics(&cm)?;
        let auc = roc_auc_ovr(y_true, proba)?;
        Ok(RunMetrics {
            accuracy: s.accuracy,
            precision_weighted: s.precision_weighted,
            recall_weighted: s.recall_weighted,
            f1_weighted: s.f1_weighted,
            f1_macro: s.f1_macro,
            precision_macro: s.precision_macro,
            recall_macro: s.recall_macro,
            roc_auc_ovr_weighted: auc.weighted,
            roc_auc_ovr_macro: auc.macro_avg,
            train_time_seconds,
        })
    }

    fn fields(&self) -> [f64; 10] {
        [
            self.accuracy,
            self.precision_weighted,
            self.recall_weighted,
            self.f1_weighted,
            self.f1_macro,
            self.precision_macro,
            self.recall_macro,
            self.roc_auc_ovr_weighted,
            self.roc_auc_ovr_macro,
            self.train_time_seconds,
        ]
    }

    fn from_fields(f: [f64; 10]) -> Self {
        RunMetrics {
            accuracy: f[0],
            precision_weighted: f[1],
            recall_weighted: f[2],
            f1_weighted: f[3],
            f1_macro: f[4],
            precision_macro: f[5],
            recall_macro: f[6],
            roc_auc_ovr_weighted: f[7],
            roc_auc_ovr_macro: f[8],
            train_time_seconds: f[9],
        }
    }

    pub fn mean(runs: &[RunMetrics]) -> Option<RunMetrics> {
        if runs.is_empty() {
            return None;
        }
        let mut acc = [0.0; 10];
        for r in runs {
            for (a, v) in acc.iter_mut().zip(r.fields()) {
                *a += v;
            }
        }
        Some(Self::from_fields(acc.map(|v| v / runs.len() as f64)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub runs: Vec<RunMetrics>,
    pub mean: RunMetrics,
}

impl ClassifierReport {
    pub fn from_runs(runs: Vec<RunMetrics>) -> Result<Self> {
        let mean = RunMetrics::mean(&runs).ok_or_else(|| Error::invalid("report without runs"))?;
        Ok(ClassifierReport { runs, mean })
    }
}

/// Per-classifier metrics, keeping every run next to the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_runs: usize,
    pub classifiers: BTreeMap<String, ClassifierReport>,
}

impl EvalReport {
    pub fn single_run(metrics: BTreeMap<String, RunMetrics>) -> Result<Self> {
        let classifiers = metrics
            .into_iter()
            .map(|(k, m)| Ok((k, ClassifierReport::from_runs(vec![m])?)))
            .collect::<Result<_>>()?;
        Ok(EvalReport { n_runs: 1, classifiers })
    }
}

/// Concatenates the runs of several reports and recomputes the means.
pub fn average_runs(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports.first().ok_or_else(|| Error::invalid("no reports to average"))?;
    let names: Vec<&String> = first.classifiers.keys().collect();
    for r in &reports[1..] {
        if r.classifiers.keys().collect::<Vec<_>>() != names {
            return Err(Error::invalid("reports cover different classifier sets"));
        }
    }
    let mut classifiers = BTreeMap::new();
    for name in names {
        let runs: Vec<RunMetrics> = reports
            .iter()
            .flat_map(|r| r.classifiers[name].runs.iter().copied())
            .collect();
        classifiers.insert(name.clone(), ClassifierReport::from_runs(runs)?);
    }
    Ok(EvalReport {
        n_runs: reports.iter().map(|r| r.n_runs).sum(),
        classifiers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn confusion_counts() {
        let m = confusion_matrix(&[0, 0, 1, 1], &[0, 0, 0, 1], 2).unwrap();
        assert_eq!(m.counts, vec![vec![2, 0], vec![1, 1]]);
        let perfect = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(perfect.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert!(confusion_matrix(&[], &[], 2).is_err());
        assert!(confusion_matrix(&[0, 2], &[0, 1], 2).is_err());
    }

    #[test]
    fn hand_computed_scores() {
        let m = ConfusionMatrix {
            counts: vec![vec![2, 0], vec![1, 1]],
        };
        let s = classification_metrics(&m).unwrap();
        assert_abs_diff_eq!(s.accuracy, 0.75);
        // class 0: P 2/3, R 1, F1 0.8; class 1: P 1, R 0.5, F1 2/3
        assert_abs_diff_eq!(s.f1_macro, (0.8 + 2.0 / 3.0) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.f1_weighted, (2.0 * 0.8 + 2.0 * 2.0 / 3.0) / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.precision_weighted, (2.0 / 3.0 + 1.0) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.recall_weighted, s.accuracy, epsilon = 1e-12);
    }

    #[test]
    fn unpredicted_class_has_zero_precision() {
        let m = confusion_matrix(&[0, 1, 1], &[0, 0, 0], 2).unwrap();
        let s = classification_metrics(&m).unwrap();
        assert!(s.precision_macro.is_finite());
        assert_abs_diff_eq!(s.precision_macro, (1.0 / 3.0) / 2.0, epsilon = 1e-12);
        assert!(classification_metrics(&ConfusionMatrix { counts: vec![vec![0, 0], vec![0, 0]] }).is_err());
    }

    #[test]
    fn auc_edge_cases() {
        let y = [0, 0, 1, 1];
        let perfect = array![[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.1, 0.9]];
        assert_eq!(roc_auc_ovr(&y, &perfect).unwrap().weighted, 1.0);
        let flat = Array2::from_elem((4, 2), 0.5);
        let a = roc_auc_ovr(&y, &flat).unwrap();
        assert_eq!((a.weighted, a.macro_avg), (0.5, 0.5));
        assert!(roc_auc_ovr(&[0, 0, 0, 0], &perfect).is_err());
    }

    #[test]
    fn four_sample_auc() {
        // positives {0.35, 0.8} vs negatives {0.1, 0.4}: 3 of 4 pairs concordant
        let auc = binary_auc(&[false, false, true, true], &[0.1, 0.4, 0.35, 0.8]).unwrap();
        assert_abs_diff_eq!(auc, 0.75, epsilon = 1e-15);
    }

    fn metrics_with_accuracy(a: f64) -> RunMetrics {
        RunMetrics::from_fields([a; 10])
    }

    #[test]
    fn averaging() {
        let r = |a: f64| EvalReport::single_run(BTreeMap::from([("knn".to_string(), metrics_with_accuracy(a))])).unwrap();
        let avg = average_runs(&[r(0.9), r(1.0)]).unwrap();
        assert_abs_diff_eq!(avg.classifiers["knn"].mean.accuracy, 0.95, epsilon = 1e-15);
        assert_eq!(avg.n_runs, 2);
        assert_eq!(average_runs(&[r(0.9)]).unwrap(), r(0.9));
        let same = average_runs(&[r(0.8), r(0.8)]).unwrap();
        assert_eq!(same.classifiers["knn"].mean, metrics_with_accuracy(0.8));

        let other = EvalReport::single_run(BTreeMap::from([("lr".to_string(), metrics_with_accuracy(0.5))])).unwrap();
        assert!(average_runs(&[r(0.9), other]).is_err());
        assert!(average_runs(&[]).is_err());
    }
}
