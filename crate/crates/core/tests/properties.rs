use ndarray::Array2;
use proptest::prelude::*;

use tcr_sparse::embedding::{embed_dataset, EmbeddingSpec};
use tcr_sparse::kmers::KmerSpec;
use tcr_sparse::lasso::{fit, select_features, LassoParams};
use tcr_sparse::metrics::{classification_metrics, confusion_matrix};
use tcr_sparse::projection::{pairwise_affinities, tsne, TsneConfig};
use tcr_sparse::seqio::SequenceRecord;
use tcr_sparse::sparse::SparseMatrix;

fn labels_pair(n_classes: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..60).prop_flat_map(move |n| {
        (
            prop::collection::vec(0..n_classes, n),
            prop::collection::vec(0..n_classes, n),
        )
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #[test]
    fn accuracy_equals_weighted_recall((t, p) in labels_pair(4)) {
        let s = classification_metrics(&confusion_matrix(&t, &p, 4).unwrap()).unwrap();
        prop_assert!((s.accuracy - s.recall_weighted).abs() < 1e-12);
    }

    #[test]
    fn scores_ignore_class_names((t, p) in labels_pair(4), perm in permutation(4)) {
        let a = classification_metrics(&confusion_matrix(&t, &p, 4).unwrap()).unwrap();
        let t2: Vec<usize> = t.iter().map(|&c| perm[c]).collect();
        let p2: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
        let b = classification_metrics(&confusion_matrix(&t2, &p2, 4).unwrap()).unwrap();
        for (x, y) in [
            (a.accuracy, b.accuracy),
            (a.f1_weighted, b.f1_weighted),
            (a.f1_macro, b.f1_macro),
            (a.precision_macro, b.precision_macro),
            (a.recall_macro, b.recall_macro),
        ] {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_rows_follow_record_order(
        seqs in prop::collection::vec("[ACDEFGHIKLMNPQRSTVWY]{1,15}", 2..12),
        seed in any::<u64>(),
    ) {
        let records: Vec<SequenceRecord> = seqs
            .iter()
            .enumerate()
            .map(|(i, s)| SequenceRecord::new(format!("s{i}"), s, "L", false).unwrap())
            .collect();
        let mut order: Vec<usize> = (0..records.len()).collect();
        let mut state = seed;
        for i in (1..order.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (state >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<SequenceRecord> = order.iter().map(|&i| records[i].clone()).collect();
        let spec = EmbeddingSpec { kmer: KmerSpec { k: 2, gap: 0 }, ..Default::default() };
        let a = embed_dataset(&records, &spec, None).unwrap();
        let b = embed_dataset(&shuffled, &spec, None).unwrap();
        prop_assert_eq!(b, a.select_rows(&order));
    }

    #[test]
    fn selection_ignores_row_order(
        cells in prop::collection::vec((0usize..30, 0usize..20, 0.5f64..3.0), 10..120),
        labels in prop::collection::vec(0usize..3, 30),
        perm in permutation(30),
    ) {
        let mut labels = labels;
        labels[0] = 0;
        labels[1] = 1;
        let x = SparseMatrix::from_triplets(30, 20, &cells).unwrap();
        let params = LassoParams::with_alpha(0.02);
        let a = select_features(&x, &labels, &params).unwrap();
        let xp = x.select_rows(&perm);
        let lp: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let b = select_features(&xp, &lp, &params).unwrap();
        prop_assert_eq!(a.selected, b.selected);
    }

    #[test]
    fn lasso_objective_never_increases(
        cells in prop::collection::vec((0usize..25, 0usize..15, -2.0f64..2.0), 5..80),
        y in prop::collection::vec(-3.0f64..3.0, 25),
        alpha in 0.0f64..0.5,
    ) {
        let x = SparseMatrix::from_triplets(25, 15, &cells).unwrap();
        let f = fit(&x, &y, &LassoParams::with_alpha(alpha)).unwrap();
        for w in f.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn affinities_are_a_distribution(vals in prop::collection::vec(-5.0f64..5.0, 30)) {
        let x = Array2::from_shape_vec((10, 3), vals).unwrap();
        let p = pairwise_affinities(x.view(), 2.5).unwrap();
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.sum() - 1.0).abs() < 1e-9);
        for i in 0..10 {
            prop_assert_eq!(p[[i, i]], 0.0);
            for j in 0..10 {
                prop_assert!((p[[i, j]] - p[[j, i]]).abs() < 1e-15);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn tsne_output_is_centered(vals in prop::collection::vec(-5.0f64..5.0, 48), seed in any::<u64>()) {
        let x = Array2::from_shape_vec((16, 3), vals).unwrap();
        let cfg = TsneConfig { perplexity: 4.0, iterations: 250, seed, ..Default::default() };
        let out = tsne(x.view(), &cfg).unwrap();
        for col in out.embedding.columns() {
            prop_assert!(col.mean().unwrap().abs() < 1e-6);
        }
    }
}
