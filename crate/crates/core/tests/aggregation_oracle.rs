mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unigraph::aggregation::{
    aggregate_neighbour_set, aggregate_ranking, all_neighbour_sets, build_rank_matrix,
    leading_left_singular_vector, RankMatrix, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE,
};
use unigraph::views::{view_knn, FeatureProfile, Provenance, UserUniverse, View, Weighting};

use common::*;

fn two_column_example() -> Vec<Vec<f64>> {
    let s = 14f64.sqrt();
    vec![
        vec![1.0 / s, 2.0 / s, 3.0 / s],
        vec![2.0 / s, 1.0 / s, 3.0 / s],
    ]
}

/// Rank matrix over universe (u, v, w, x) for subject u from explicit ranks.
fn matrix_from_ranks(columns: &[[usize; 3]]) -> (RankMatrix, UserUniverse) {
    let universe = UserUniverse::new(["u", "v", "w", "x"]).unwrap();
    // Build views whose cosine order reproduces each rank column: target with
    // rank r gets similarity 1 - r/10.
    let views: Vec<View> = columns
        .iter()
        .enumerate()
        .map(|(j, ranks)| {
            let mut profiles = vec![(
                "u".to_string(),
                FeatureProfile::from_entries([("a", 1.0)]).unwrap(),
            )];
            for (t, &r) in ["v", "w", "x"].iter().zip(ranks) {
                let s = 1.0 - r as f64 / 10.0;
                let rest = (1.0 - s * s).sqrt();
                profiles.push((
                    t.to_string(),
                    FeatureProfile::from_entries([("a", s), ("b", rest)]).unwrap(),
                ));
            }
            View::new(
                format!("v{j}"),
                profiles,
                Provenance::Features,
                Weighting::Weighted,
            )
            .unwrap()
        })
        .collect();
    (build_rank_matrix("u", &views, &universe).unwrap(), universe)
}

#[test]
fn worked_example_matches_dense_eigendecomposition() {
    let cols = two_column_example();
    let m = DMatrix::from_fn(3, 2, |r, c| cols[c][r]);
    let eig = SymmetricEigen::new(&m * m.transpose());
    let top = eig.eigenvalues.imax();
    let mut oracle: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    if oracle.iter().sum::<f64>() < 0.0 {
        oracle.iter_mut().for_each(|x| *x = -*x);
    }
    let closed_form = [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), 2.0 / 6f64.sqrt()];
    for (a, b) in oracle.iter().zip(&closed_form) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((eig.eigenvalues[top] - 27.0 / 14.0).abs() < 1e-12);

    let sv = leading_left_singular_vector(&cols, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS).unwrap();
    assert!(sv.converged);
    for (a, b) in sv.vector.iter().zip(&closed_form) {
        assert!((a - b).abs() < 1e-9, "{:?}", sv.vector);
    }
    assert!((sv.sigma * sv.sigma - 27.0 / 14.0).abs() < 1e-9);
}

#[test]
fn worked_example_neighbour_set() {
    let (m, universe) = matrix_from_ranks(&[[1, 2, 3], [2, 1, 3]]);
    let s = 14f64.sqrt();
    assert_eq!(m.columns()[0], vec![1.0 / s, 2.0 / s, 3.0 / s]);
    assert_eq!(m.columns()[1], vec![2.0 / s, 1.0 / s, 3.0 / s]);
    assert_eq!(
        aggregate_neighbour_set(&m, &universe, 2).unwrap(),
        vec!["v", "w"]
    );
    assert_eq!(
        aggregate_neighbour_set(&m, &universe, 3).unwrap(),
        vec!["v", "w", "x"]
    );
}

#[test]
fn random_ten_user_instances_match_dense_pipeline() {
    for seed in 0..20 {
        let (views, universe) = random_views(seed, 10, 3);
        for k in [1, 3, 5, 9, 12] {
            let sets = all_neighbour_sets(&views, &universe, k).unwrap();
            let oracle = oracle_neighbour_sets(&views, &universe, k);
            for (subject, expected) in oracle.iter().enumerate() {
                assert_eq!(
                    &sets.entries()[subject].1,
                    expected,
                    "seed {seed} k {k} subject {subject}"
                );
            }
        }
    }
}

#[test]
fn fig1_shaped_instance_gives_three_neighbours_each() {
    let (views, universe) = random_views(42, 6, 3);
    let sets = all_neighbour_sets(&views, &universe, 3).unwrap();
    assert_eq!(sets.len(), 6);
    assert!(sets.entries().iter().all(|(_, l)| l.len() == 3));
}

#[test]
fn thread_count_does_not_change_output() {
    let (views, universe) = random_views(5, 30, 4);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| all_neighbour_sets(&views, &universe, 7).unwrap())
    };
    let base = run(1);
    for t in [2, 3, 8] {
        assert_eq!(run(t), base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_view_equals_view_knn(seed in 0u64..10_000, n in 2usize..25, k in 1usize..12) {
        let (views, universe) = random_views(seed, n, 1);
        let view = &views[0];
        // Single-view universe must equal the view's users.
        let universe = UserUniverse::new(
            universe.ids().iter().filter(|u| view.contains(u)).cloned()
        ).unwrap();
        let sets = all_neighbour_sets(&views, &universe, k).unwrap();
        for (user, list) in sets.entries() {
            prop_assert_eq!(list, &view_knn(view, &universe, user, k).unwrap());
        }
    }

    #[test]
    fn identical_columns_reproduce_the_ranking(seed in 0u64..10_000, rows in 1usize..30, copies in 1usize..6, k in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ranks = random_ranks(&mut rng, rows);
        let norm = ranks.iter().map(|r| r * r).sum::<f64>().sqrt();
        let col: Vec<f64> = ranks.iter().map(|r| r / norm).collect();
        let cols = vec![col.clone(); copies];
        let sv = leading_left_singular_vector(&cols, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS).unwrap();
        for (a, b) in sv.vector.iter().zip(&col) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let mut expected: Vec<usize> = (0..rows).collect();
        expected.sort_by(|&a, &b| ranks[a].total_cmp(&ranks[b]));
        expected.truncate(k);
        // subject 0 at universe index 0: row r is universe index r + 1.
        let got = oracle_top_k(&sv.vector, 0, k).into_iter().map(|t| t - 1).collect::<Vec<_>>();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn singular_vector_is_nonnegative_unit(seed in 0u64..10_000, n in 3usize..30, l in 1usize..6) {
        let (views, universe) = random_views(seed, n, l);
        for subject in universe.ids().iter().take(5) {
            let m = build_rank_matrix(subject, &views, &universe).unwrap();
            for c in m.columns() {
                let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-12);
                prop_assert!(c.iter().all(|&x| x > 0.0));
            }
            let (_, sv) = aggregate_ranking(&m).unwrap();
            prop_assert!(sv.converged);
            prop_assert!(sv.vector.iter().all(|&x| x >= 0.0));
            let norm = sv.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn out_degree_is_min_k_n_minus_one(seed in 0u64..10_000, n in 2usize..20, l in 1usize..4, k in 1usize..25) {
        let (views, universe) = random_views(seed, n, l);
        let sets = all_neighbour_sets(&views, &universe, k).unwrap();
        for (user, list) in sets.entries() {
            prop_assert_eq!(list.len(), k.min(n - 1));
            prop_assert!(!list.contains(user));
            let mut dedup = list.clone();
            dedup.sort();
            dedup.dedup();
            prop_assert_eq!(dedup.len(), list.len());
        }
    }

    #[test]
    fn relabeling_users_permutes_neighbour_sets(seed in 0u64..10_000, n in 3usize..15, l in 1usize..4, k in 1usize..6) {
        let (views, universe) = random_views(seed, n, l);
        // Rename user{i} -> r{n-1-i} and reverse the universe order; the
        // mapping is order-reversing on indices, so compare against the
        // original computed under the correspondingly reversed tie order.
        let rename = |id: &str| {
            let i: usize = id.trim_start_matches("user").parse().unwrap();
            format!("r{}", n - 1 - i)
        };
        let renamed_views: Vec<View> = views.iter().map(|v| {
            let profiles = v.users().iter().zip(v.profiles())
                .map(|(u, p)| (rename(u), p.clone()));
            View::new(v.id(), profiles, Provenance::Features, Weighting::Weighted).unwrap()
        }).collect();
        let renamed_universe = UserUniverse::new((0..n).map(|i| format!("r{i}"))).unwrap();
        let renamed = all_neighbour_sets(&renamed_views, &renamed_universe, k).unwrap();

        // Oracle computed directly on the renamed instance.
        let oracle = oracle_neighbour_sets(&renamed_views, &renamed_universe, k);
        for (i, (_, list)) in renamed.entries().iter().enumerate() {
            prop_assert_eq!(list, &oracle[i]);
        }
        // Same universe order as the original (identity relabel by position)
        // gives the original sets with ids renamed.
        let mirrored_universe = UserUniverse::new(universe.ids().iter().map(|u| rename(u))).unwrap();
        let mirrored = all_neighbour_sets(&renamed_views, &mirrored_universe, k).unwrap();
        let original = all_neighbour_sets(&views, &universe, k).unwrap();
        for ((u0, l0), (u1, l1)) in original.entries().iter().zip(mirrored.entries()) {
            prop_assert_eq!(rename(u0), u1.clone());
            let mapped: Vec<String> = l0.iter().map(|x| rename(x)).collect();
            prop_assert_eq!(&mapped, l1);
        }
    }
}
