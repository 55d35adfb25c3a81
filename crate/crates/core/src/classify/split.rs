use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint train / validation / test index lists, each ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
}

/// Per-class seeded shuffle followed by proportional allocation.
///
/// Each class sends `round(test_frac * n_c)` members to test (at least one,
/// and at least one left over), then `round(val_frac * n_train_c)` of the
/// remainder to validation while keeping one training member.
pub fn stratified_split(labels: &[usize], test_frac: f64, val_frac: f64, seed: u64) -> Result<SplitPlan> {
    for (name, f) in [("test_frac", test_frac), ("val_frac", val_frac)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::invalid(format!("{name} must be in (0, 1), got {f}")));
        }
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let populated = members.iter().filter(|m| !m.is_empty()).count();
    if populated < 2 {
        return Err(Error::invalid("stratified split needs at least two classes"));
    }
    if let Some((c, m)) = members.iter().enumerate().find(|(_, m)| !m.is_empty() && m.len() < 3) {
        return Err(Error::invalid(format!(
            "class {c} has {} member(s); stratified split needs at least 3",
            m.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = SplitPlan {
        train_idx: Vec::new(),
        val_idx: Vec::new(),
        test_idx: Vec::new(),
        seed,
    };
    for mut group in members.into_iter().filter(|m| !m.is_empty()) {
        group.shuffle(&mut rng);
        let n = group.len();
        let n_test = round_half_up(test_frac * n as f64).clamp(1, n - 1);
        let n_train_total = n - n_test;
        let n_val = round_half_up(val_frac * n_train_total as f64).min(n_train_total - 1);
        plan.test_idx.extend_from_slice(&group[..n_test]);
        plan.val_idx.extend_from_slice(&group[n_test..n_test + n_val]);
        plan.train_idx.extend_from_slice(&group[n_test + n_val..]);
    }
    plan.train_idx.sort_unstable();
    plan.val_idx.sort_unstable();
    plan.test_idx.sort_unstable();
    Ok(plan)
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_samples_two_classes() {
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        let plan = stratified_split(&labels, 0.3, 0.1, 0).unwrap();
        let count = |idx: &[usize], c: usize| idx.iter().filter(|&&i| labels[i] == c).count();
        assert_eq!((count(&plan.test_idx, 0), count(&plan.test_idx, 1)), (3, 3));
        assert_eq!((count(&plan.val_idx, 0), count(&plan.val_idx, 1)), (1, 1));
        assert_eq!((count(&plan.train_idx, 0), count(&plan.train_idx, 1)), (6, 6));
        assert_eq!(plan, stratified_split(&labels, 0.3, 0.1, 0).unwrap());
        assert_ne!(plan, stratified_split(&labels, 0.3, 0.1, 1).unwrap());
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(stratified_split(&[0; 10], 0.3, 0.1, 0).is_err());
        assert!(stratified_split(&[0, 0, 0, 1, 1], 0.3, 0.1, 0).is_err());
        assert!(stratified_split(&[0, 0, 0, 1, 1, 1], 0.0, 0.1, 0).is_err());
        assert!(stratified_split(&[0, 0, 0, 1, 1, 1], 0.3, 1.0, 0).is_err());
    }

    #[test]
    fn minimal_classes_keep_a_training_member() {
        let plan = stratified_split(&[0, 0, 0, 1, 1, 1], 0.3, 0.1, 3).unwrap();
        assert_eq!(plan.test_idx.len(), 2);
        assert_eq!(plan.train_idx.len(), 4);
        assert!(plan.val_idx.is_empty());
    }
}
