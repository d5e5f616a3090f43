//! Independent reference implementations and random instance builders.
//!
//! Nothing here calls into the aggregation path it is used to check: cosine is
//! recomputed on dense vectors, ranks are counted pairwise, and the leading
//! singular vector comes from a full dense SVD.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unigraph::views::{FeatureProfile, Provenance, UserUniverse, View, Weighting};
use unigraph::TIE_TOLERANCE;

/// Dense cosine between every pair of present users in `view`, indexed by
/// position within the view.
pub fn dense_cosines(view: &View) -> Vec<Vec<f64>> {
    let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
    for p in view.profiles() {
        for (f, _) in p.entries() {
            let next = vocab.len();
            vocab.entry(f.as_str()).or_insert(next);
        }
    }
    let dense: Vec<Vec<f64>> = view
        .profiles()
        .iter()
        .map(|p| {
            let mut v = vec![0.0; vocab.len()];
            for (f, w) in p.entries() {
                v[vocab[f.as_str()]] = *w;
            }
            v
        })
        .collect();
    let norms: Vec<f64> = dense
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    (0..dense.len())
        .map(|a| {
            (0..dense.len())
                .map(|b| {
                    if norms[a] == 0.0 || norms[b] == 0.0 {
                        0.0
                    } else {
                        let dot: f64 = dense[a].iter().zip(&dense[b]).map(|(x, y)| x * y).sum();
                        dot / (norms[a] * norms[b])
                    }
                })
                .collect()
        })
        .collect()
}

/// `a` strictly precedes `b` under "higher score first, near-ties by index".
fn precedes_desc(a: (usize, f64), b: (usize, f64)) -> bool {
    if (a.1 - b.1).abs() <= TIE_TOLERANCE {
        a.0 < b.0
    } else {
        a.1 > b.1
    }
}

/// Rank matrix of `subject` (rows in universe order without the subject,
/// one unit-norm column per view containing the subject).
pub fn oracle_rank_matrix(views: &[View], universe: &UserUniverse, subject: usize) -> DMatrix<f64> {
    let n = universe.len();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for view in views {
        let Some(pos) = view.position(universe.id(subject)) else {
            continue;
        };
        let cos = dense_cosines(view);
        let scored: Vec<(usize, f64)> = view
            .users()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(i, u)| (universe.index_of(u).unwrap(), cos[pos][i]))
            .collect();
        let mut col = Vec::with_capacity(n - 1);
        for target in (0..n).filter(|&t| t != subject) {
            let rank = match scored.iter().find(|(t, _)| *t == target) {
                Some(&me) => {
                    1 + scored
                        .iter()
                        .filter(|&&other| precedes_desc(other, me))
                        .count()
                }
                None => view.len() + 1,
            };
            col.push(rank as f64);
        }
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        cols.push(col.into_iter().map(|x| x / norm).collect());
    }
    assert!(!cols.is_empty(), "subject in no view");
    DMatrix::from_fn(n - 1, cols.len(), |r, c| cols[c][r])
}

/// Leading left singular vector via a full dense SVD, sign made non-negative.
pub fn oracle_leading_vector(m: &DMatrix<f64>) -> Vec<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let (best, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold(
            (0, f64::MIN),
            |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc },
        );
    let mut v: Vec<f64> = u.column(best).iter().copied().collect();
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Top-`k` targets (universe indices): smallest entries first, near-ties by
/// index, counted pairwise.
pub fn oracle_top_k(entries: &[f64], subject: usize, k: usize) -> Vec<usize> {
    let scored: Vec<(usize, f64)> = entries
        .iter()
        .enumerate()
        .map(|(row, &x)| (if row < subject { row } else { row + 1 }, x))
        .collect();
    let mut placed: Vec<(usize, usize)> = scored
        .iter()
        .map(|&me| {
            let before = scored
                .iter()
                .filter(|&&o| {
                    if (o.1 - me.1).abs() <= TIE_TOLERANCE {
                        o.0 < me.0
                    } else {
                        o.1 < me.1
                    }
                })
                .count();
            (before, me.0)
        })
        .collect();
    placed.sort();
    placed.into_iter().take(k).map(|(_, t)| t).collect()
}

/// Full brute-force pipeline for every user; lists of universe ids.
pub fn oracle_neighbour_sets(
    views: &[View],
    universe: &UserUniverse,
    k: usize,
) -> Vec<Vec<String>> {
    (0..universe.len())
        .map(|subject| {
            let m = oracle_rank_matrix(views, universe, subject);
            let v = oracle_leading_vector(&m);
            oracle_top_k(&v, subject, k)
                .into_iter()
                .map(|i| universe.id(i).to_string())
                .collect()
        })
        .collect()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Random instance: `n` users, `l` views, each view covering a random subset
/// (at least 2 users) with small integer feature weights. Every user is in at
/// least one view.
pub fn random_views(seed: u64, n: usize, l: usize) -> (Vec<View>, UserUniverse) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..n).map(|i| format!("user{i}")).collect();
    let mut masks: Vec<Vec<bool>> = (0..l)
        .map(|_| {
            let p = rng.gen_range(0.5..=1.0);
            (0..n).map(|_| rng.gen_bool(p)).collect()
        })
        .collect();
    for mask in masks.iter_mut() {
        while mask.iter().filter(|b| **b).count() < 2 {
            let i = rng.gen_range(0..n);
            mask[i] = true;
        }
    }
    for u in 0..n {
        if masks.iter().all(|m| !m[u]) {
            let j = rng.gen_range(0..l);
            masks[j][u] = true;
        }
    }
    let views = masks
        .iter()
        .enumerate()
        .map(|(j, mask)| {
            let vocab = rng.gen_range(3..12);
            let profiles: Vec<(String, FeatureProfile)> = (0..n)
                .filter(|&u| mask[u])
                .map(|u| {
                    let count = rng.gen_range(1..6);
                    let entries: Vec<(String, f64)> = (0..count)
                        .map(|_| {
                            (
                                format!("f{}", rng.gen_range(0..vocab)),
                                rng.gen_range(1..4) as f64,
                            )
                        })
                        .collect();
                    (
                        ids[u].clone(),
                        FeatureProfile::from_entries(entries).unwrap(),
                    )
                })
                .collect();
            View::new(
                format!("view{j}"),
                profiles,
                Provenance::Features,
                Weighting::Weighted,
            )
            .unwrap()
        })
        .collect::<Vec<_>>();
    let universe = UserUniverse::new(ids).unwrap();
    universe.check_covers(&views).unwrap();
    (views, universe)
}

/// A permutation of `0..n` as distinct integer ranks `1..=n`.
pub fn random_ranks(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    use rand::seq::SliceRandom;
    let mut r: Vec<f64> = (1..=n).map(|x| x as f64).collect();
    r.shuffle(rng);
    r
}
