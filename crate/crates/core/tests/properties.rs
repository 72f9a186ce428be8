// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use interp_core::baselines::{corrupt_taxonomy, make_cdiff, make_rand, make_shuffle};
use interp_core::mappers::{fit_pls, fold_assignment};
use interp_core::metrics::{f1_at_k, neighborhood_accuracy, spearman_matrix, spearman_rho, SpearmanAxis};
use interp_core::norms::{sparsity_profile, FeatureNorm, NormKind, TAXONOMIC};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Random sparse categorical norm, every row with at least one nonzero.
fn sparse_norm(rows: usize, cols: usize, seed: u64) -> FeatureNorm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Array2::zeros((rows, cols));
    for i in 0..rows {
        let count = 1 + (i * 7 + seed as usize) % cols.min(4);
        let mut idx: Vec<usize> = (0..cols).collect();
        idx.shuffle(&mut rng);
        for (n, &j) in idx[..count].iter().enumerate() {
            v[[i, j]] = (1 + (n + i) % 9) as f64;
        }
    }
    let classes: BTreeMap<String, String> = labels("f", cols)
        .into_iter()
        .enumerate()
        .map(|(j, f)| (f, if j % 2 == 0 { TAXONOMIC } else { "other" }.to_string()))
        .collect();
    FeatureNorm::new("p", NormKind::Categorical, labels("c", rows), labels("f", cols), v, Some(classes)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pls_ignores_row_order(seed in 0u64..1000, k in 1usize..4) {
        let x = gaussian(18, 5, seed);
        let y = gaussian(18, 3, seed + 1);
        let mut perm: Vec<usize> = (0..18).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 2));
        let a = fit_pls(&x, &y, k).unwrap();
        let b = fit_pls(&x.select(Axis(0), &perm), &y.select(Axis(0), &perm), k).unwrap();
        let probe = gaussian(4, 5, seed + 3);
        let diff = (a.predict(&probe).unwrap() - b.predict(&probe).unwrap()).mapv(f64::abs);
        prop_assert!(diff.iter().all(|&d| d < 1e-8));
    }

    #[test]
    fn folds_partition_concepts(n in 2usize..60, seed in 0u64..100, f in 2usize..12) {
        let folds = f.min(n);
        let fold_of = fold_assignment(n, folds, seed).unwrap();
        prop_assert_eq!(fold_of.len(), n);
        for fold in 0..folds {
            prop_assert!(fold_of.contains(&fold));
        }
    }

    #[test]
    fn f1_survives_monotone_transforms(values in prop::collection::vec(-5.0f64..5.0, 8), gold_bits in 1u8..=255, k in 1usize..8) {
        let gold: Vec<f64> = (0..8).map(|j| ((gold_bits >> j) & 1) as f64).collect();
        let cubed: Vec<f64> = values.iter().map(|v| v * v * v + 2.0 * v).collect();
        prop_assert_eq!(f1_at_k(&values, &gold, k).unwrap(), f1_at_k(&cubed, &gold, k).unwrap());
    }

    #[test]
    fn spearman_symmetric_and_rank_based(a in prop::collection::vec(-3.0f64..3.0, 2..20), seed in 0u64..1000) {
        let b: Vec<f64> = gaussian(1, a.len(), seed).iter().copied().collect();
        let ab = spearman_rho(&a, &b).unwrap();
        prop_assert_eq!(ab, spearman_rho(&b, &a).unwrap());
        let expd: Vec<f64> = a.iter().map(|v| v.exp()).collect();
        let e = spearman_rho(&expd, &b).unwrap();
        match (ab, e) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn na_ignores_row_scaling(seed in 0u64..500, k in 1usize..5) {
        let gold = gaussian(9, 4, seed);
        let pred = gaussian(9, 4, seed + 7);
        let scales = gaussian(9, 1, seed + 9).mapv(|v| v.abs() + 0.1);
        let scaled = &pred * &scales;
        let a = neighborhood_accuracy(&pred, &gold, k).unwrap();
        let b = neighborhood_accuracy(&scaled, &gold, k).unwrap();
        prop_assert_eq!(a.per_concept, b.per_concept);
    }

    #[test]
    fn metric_means_ignore_joint_row_order(seed in 0u64..500) {
        let gold = gaussian(10, 6, seed);
        let pred = gaussian(10, 6, seed + 1);
        let mut perm: Vec<usize> = (0..10).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (gp, pp) = (gold.select(Axis(0), &perm), pred.select(Axis(0), &perm));
        let s1 = spearman_matrix(&pred, &gold, SpearmanAxis::PerConcept).unwrap().mean;
        let s2 = spearman_matrix(&pp, &gp, SpearmanAxis::PerConcept).unwrap().mean;
        prop_assert!((s1 - s2).abs() < 1e-12);
        let n1 = neighborhood_accuracy(&pred, &gold, 3).unwrap().mean;
        let n2 = neighborhood_accuracy(&pp, &gp, 3).unwrap().mean;
        prop_assert!((n1 - n2).abs() < 1e-12);
    }

    #[test]
    fn shuffle_keeps_sparsity(rows in 1usize..25, cols in 2usize..15, seed in 0u64..1000) {
        let src = sparse_norm(rows, cols, seed);
        let s = make_shuffle(&src, seed).unwrap();
        let (a, b) = (sparsity_profile(&src).unwrap(), sparsity_profile(&s).unwrap());
        prop_assert_eq!(a.per_row_nonzeros, b.per_row_nonzeros);
        prop_assert!(b.nonzero_value_min >= a.nonzero_value_min && b.nonzero_value_max <= a.nonzero_value_max);
        prop_assert_eq!(s.features(), src.features());
    }

    #[test]
    fn generators_are_seeded_functions(rows in 1usize..12, cols in 4usize..10, seed in 0u64..1000) {
        let src = sparse_norm(rows, cols, seed);
        prop_assert_eq!(make_rand(&src, seed).unwrap(), make_rand(&src, seed).unwrap());
        prop_assert_eq!(make_shuffle(&src, seed).unwrap(), make_shuffle(&src, seed).unwrap());
        prop_assert_eq!(corrupt_taxonomy(&src, seed).unwrap(), corrupt_taxonomy(&src, seed).unwrap());
        let r = make_rand(&src, seed).unwrap();
        prop_assert_eq!(r.values().dim(), src.values().dim());
    }

    #[test]
    fn corruption_confined_to_taxonomic_columns(rows in 1usize..20, cols in 4usize..12, seed in 0u64..1000) {
        let src = sparse_norm(rows, cols, seed);
        let c = corrupt_taxonomy(&src, seed).unwrap();
        for j in (1..cols).step_by(2) {
            prop_assert_eq!(c.values().column(j), src.values().column(j));
        }
    }
}

#[test]
fn cdiff_preserves_labels() {
    let norm = FeatureNorm::new(
        "r",
        NormKind::Continuous,
        vec!["ox".into(), "zebra".into(), "giraffe".into()],
        labels("f", 5),
        gaussian(3, 5, 1),
        None,
    )
    .unwrap();
    let c = make_cdiff(&norm).unwrap();
    assert_eq!(c.concepts(), norm.concepts());
    assert_eq!(c.features(), norm.features());
    let (lo, hi) = norm.value_range();
    assert_eq!(c.value_range(), (lo, hi));
}
