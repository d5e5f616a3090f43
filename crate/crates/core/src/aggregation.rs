//! Per-user SVD rank aggregation across views.
//!
//! For a subject user the pipeline is:
//!
//! 1. in every view containing the subject, cosine to each other present user;
//! 2. a rank vector over all `n − 1` other universe users, where present
//!    targets get ranks `1..n′−1` (1 = most similar) and absent targets share
//!    rank `n′ + 1`;
//! 3. rank vectors stacked as columns and scaled to unit length;
//! 4. the leading left singular vector of that matrix, taken non-negative.
//!
//! Because rank 1 means "most similar", smaller entries of the singular
//! vector mark better consensus neighbours and the `k` smallest are kept.
//! With a single view (or identical columns) this reproduces the view's own
//! ranking exactly.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ordering::{order_by_score, ScoreOrder};
use crate::views::{UserUniverse, View};

/// Convergence threshold on successive power-iteration iterates.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Iteration cap for the power method.
pub const DEFAULT_MAX_ITERS: usize = 1000;

/// Ranks of all other universe users relative to one subject in one view.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    subject: usize,
    ranks: Vec<f64>,
}

impl RankVector {
    pub fn subject(&self) -> usize {
        self.subject
    }

    /// Ranks in universe order with the subject skipped.
    pub fn ranks(&self) -> &[f64] {
        &self.ranks
    }

    /// Rank of the universe user `target`, `None` for the subject itself.
    pub fn rank_of(&self, target: usize) -> Option<f64> {
        (target != self.subject).then(|| self.ranks[row_of(self.subject, target)])
    }
}

#[inline]
fn row_of(subject: usize, target: usize) -> usize {
    if target < subject {
        target
    } else {
        target - 1
    }
}

#[inline]
fn target_of(subject: usize, row: usize) -> usize {
    if row < subject {
        row
    } else {
        row + 1
    }
}

/// Stacked, unit-normalized rank columns for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix {
    subject: usize,
    rows: usize,
    columns: Vec<Vec<f64>>,
    views: Vec<String>,
}

impl RankMatrix {
    /// Stacks the given rank vectors, normalizing each column.
    pub fn from_rank_vectors(columns: Vec<(String, RankVector)>) -> Result<Self> {
        let Some((_, first)) = columns.first() else {
            return Err(Error::Validation(
                "rank matrix needs at least one column".into(),
            ));
        };
        let subject = first.subject;
        let rows = first.ranks.len();
        let mut views = Vec::with_capacity(columns.len());
        let mut cols = Vec::with_capacity(columns.len());
        for (view, rv) in columns {
            if rv.subject != subject || rv.ranks.len() != rows {
                return Err(Error::Validation(format!(
                    "rank vector from view `{view}` does not match the matrix shape"
                )));
            }
            let norm = rv.ranks.iter().map(|r| r * r).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::Numeric(format!(
                    "rank column from view `{view}` has norm {norm}"
                )));
            }
            cols.push(rv.ranks.into_iter().map(|r| r / norm).collect());
            views.push(view);
        }
        Ok(Self {
            subject,
            rows,
            columns: cols,
            views,
        })
    }

    pub fn subject(&self) -> usize {
        self.subject
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Ids of the views that contributed a column, in column order.
    pub fn views(&self) -> &[String] {
        &self.views
    }

    /// Universe index of the user on `row`.
    pub fn target(&self, row: usize) -> usize {
        target_of(self.subject, row)
    }
}

/// Cosine from `user` to every other present user of `view`.
pub fn similarity_vector(view: &View, user: &str) -> Result<BTreeMap<String, f64>> {
    let pos = view.require(user)?;
    Ok(view
        .similarities_from(pos)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| *i != pos)
        .map(|(i, s)| (view.users()[i].clone(), s))
        .collect())
}

/// Converts a similarity vector into a rank vector over all other universe
/// users. Present targets get ranks `1..=n′−1` by descending similarity
/// (ties by ascending universe index); absent targets get `n′ + 1`.
pub fn rank_vector(
    sims: &BTreeMap<String, f64>,
    view: &View,
    universe: &UserUniverse,
    user: &str,
) -> Result<RankVector> {
    let subject = universe.require(user)?;
    let mut scored = Vec::with_capacity(sims.len());
    for (target, &sim) in sims {
        if !view.contains(target) {
            return Err(Error::Validation(format!(
                "similarity target `{target}` is not present in view `{}`",
                view.id()
            )));
        }
        let idx = universe.require(target)?;
        if idx == subject {
            return Err(Error::Validation(
                "similarity vector contains its subject".into(),
            ));
        }
        scored.push((idx, sim));
    }
    Ok(rank_column(subject, universe.len(), view.len(), scored))
}

fn rank_column(subject: usize, n: usize, present: usize, scored: Vec<(usize, f64)>) -> RankVector {
    let missing = (present + 1) as f64;
    let mut ranks = vec![missing; n - 1];
    for (position, target) in order_by_score(scored, ScoreOrder::Descending)
        .into_iter()
        .enumerate()
    {
        ranks[row_of(subject, target)] = (position + 1) as f64;
    }
    RankVector { subject, ranks }
}

/// A view resolved against the universe once, for repeated per-user use.
struct IndexedView<'a> {
    view: &'a View,
    to_universe: Vec<usize>,
    to_view: Vec<Option<usize>>,
}

impl<'a> IndexedView<'a> {
    fn new(view: &'a View, universe: &UserUniverse) -> Result<Self> {
        let mut to_view = vec![None; universe.len()];
        let mut to_universe = Vec::with_capacity(view.len());
        for (pos, id) in view.users().iter().enumerate() {
            let idx = universe.index_of(id).ok_or_else(|| {
                Error::Integrity(format!(
                    "view `{}` contains user `{id}` outside the universe",
                    view.id()
                ))
            })?;
            to_view[idx] = Some(pos);
            to_universe.push(idx);
        }
        Ok(Self {
            view,
            to_universe,
            to_view,
        })
    }

    fn rank_vector(&self, subject: usize, n: usize) -> Option<RankVector> {
        let pos = self.to_view[subject]?;
        let scored = self
            .view
            .similarities_from(pos)
            .into_iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(i, s)| (self.to_universe[i], s))
            .collect();
        Some(rank_column(subject, n, self.view.len(), scored))
    }
}

fn index_views<'a>(views: &'a [View], universe: &UserUniverse) -> Result<Vec<IndexedView<'a>>> {
    views
        .iter()
        .map(|v| IndexedView::new(v, universe))
        .collect()
}

fn rank_matrix_for(
    subject: usize,
    indexed: &[IndexedView<'_>],
    universe: &UserUniverse,
) -> Result<RankMatrix> {
    let columns: Vec<(String, RankVector)> = indexed
        .iter()
        .filter_map(|iv| {
            iv.rank_vector(subject, universe.len())
                .map(|rv| (iv.view.id().to_string(), rv))
        })
        .collect();
    if columns.is_empty() {
        return Err(Error::UnrankableUser(universe.id(subject).to_string()));
    }
    RankMatrix::from_rank_vectors(columns)
}

/// Builds the rank matrix of `user`. Views that do not contain `user`
/// contribute no column.
pub fn build_rank_matrix(
    user: &str,
    views: &[View],
    universe: &UserUniverse,
) -> Result<RankMatrix> {
    let subject = universe.require(user)?;
    let indexed = index_views(views, universe)?;
    rank_matrix_for(subject, &indexed, universe)
}

/// Result of the power method.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularVector {
    /// Unit-norm, entrywise non-negative left singular vector.
    pub vector: Vec<f64>,
    /// Leading singular value.
    pub sigma: f64,
    pub iterations: usize,
    /// False when `max_iters` was reached before the tolerance.
    pub converged: bool,
}

/// Leading left singular vector of a column-major matrix by power
/// iteration on `v ↦ M (Mᵀ v)` from the normalized all-ones vector.
///
/// Stops when successive iterates differ by less than `tol` in Euclidean
/// norm. Hitting `max_iters` is not an error; the result carries
/// `converged = false`.
pub fn leading_left_singular_vector(
    columns: &[Vec<f64>],
    tol: f64,
    max_iters: usize,
) -> Result<SingularVector> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Validation(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let Some(first) = columns.first() else {
        return Err(Error::Validation("matrix has no columns".into()));
    };
    let rows = first.len();
    if rows == 0 || columns.iter().any(|c| c.len() != rows) {
        return Err(Error::Validation(
            "matrix columns are empty or ragged".into(),
        ));
    }
    if columns.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(
            "matrix contains NaN or infinite entries".into(),
        ));
    }

    let mut v = vec![1.0 / (rows as f64).sqrt(); rows];
    let mut w = vec![0.0; rows];
    let mut sigma_sq = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        w.iter_mut().for_each(|x| *x = 0.0);
        for col in columns {
            let proj: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (wi, ci) in w.iter_mut().zip(col) {
                *wi += proj * ci;
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numeric(format!(
                "power iteration collapsed (norm {norm})"
            )));
        }
        sigma_sq = norm;
        let mut diff = 0.0;
        for (vi, wi) in v.iter_mut().zip(&w) {
            let next = wi / norm;
            diff += (next - *vi) * (next - *vi);
            *vi = next;
        }
        if diff.sqrt() < tol {
            converged = true;
            break;
        }
    }

    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v.iter_mut().for_each(|x| *x = x.max(0.0));

    Ok(SingularVector {
        vector: v,
        sigma: sigma_sq.sqrt(),
        iterations,
        converged,
    })
}

/// Full aggregated ordering of the other users (universe indices), best
/// first, plus the singular vector it came from.
pub fn aggregate_ranking(matrix: &RankMatrix) -> Result<(Vec<usize>, SingularVector)> {
    let sv = leading_left_singular_vector(matrix.columns(), DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS)?;
    let scored = sv
        .vector
        .iter()
        .enumerate()
        .map(|(row, &x)| (matrix.target(row), x))
        .collect();
    Ok((order_by_score(scored, ScoreOrder::Ascending), sv))
}

/// The `min(k, n − 1)` users with the smallest singular-vector entries.
pub fn aggregate_neighbour_set(
    matrix: &RankMatrix,
    universe: &UserUniverse,
    k: usize,
) -> Result<Vec<String>> {
    check_k(k)?;
    let (mut order, _) = aggregate_ranking(matrix)?;
    order.truncate(k);
    Ok(order
        .into_iter()
        .map(|i| universe.id(i).to_string())
        .collect())
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::Validation("k must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Ordered neighbour lists for every subject, in universe order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighbourSets {
    k: usize,
    entries: Vec<(String, Vec<String>)>,
    unconverged: Vec<String>,
}

impl NeighbourSets {
    pub fn new(k: usize, entries: Vec<(String, Vec<String>)>) -> Result<Self> {
        check_k(k)?;
        Ok(Self {
            k,
            entries,
            unconverged: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[(String, Vec<String>)] {
        &self.entries
    }

    pub fn get(&self, user: &str) -> Option<&[String]> {
        self.entries
            .iter()
            .find(|(u, _)| u == user)
            .map(|(_, l)| l.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Subjects whose power iteration hit the iteration cap.
    pub fn unconverged(&self) -> &[String] {
        &self.unconverged
    }

    /// Prefix of every list, for `k' ≤ k`.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.k);
        Self {
            k,
            entries: self
                .entries
                .iter()
                .map(|(u, l)| (u.clone(), l.iter().take(k).cloned().collect()))
                .collect(),
            unconverged: self.unconverged.clone(),
        }
    }

    /// Writes `user_id,rank,neighbour_id` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::io("<neighbour csv>", std::io::Error::other(e));
        writer
            .write_record(["user_id", "rank", "neighbour_id"])
            .map_err(wrap)?;
        for (user, list) in &self.entries {
            for (rank, nb) in list.iter().enumerate() {
                writer
                    .write_record([user.as_str(), &(rank + 1).to_string(), nb.as_str()])
                    .map_err(wrap)?;
            }
        }
        writer.flush().map_err(|e| Error::io("<neighbour csv>", e))
    }

    /// Reads the CSV produced by [`NeighbourSets::write_csv`]. Subjects keep
    /// file order; `k` is the longest list.
    pub fn read_csv(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let headers = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if headers.iter().ne(["user_id", "rank", "neighbour_id"]) {
            return Err(parse_err(
                1,
                "expected header `user_id,rank,neighbour_id`".into(),
            ));
        }
        let mut entries: Vec<(String, Vec<String>)> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string())
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let rank: usize = record[1]
                .parse()
                .map_err(|_| parse_err(line, format!("bad rank `{}`", &record[1])))?;
            let user = &record[0];
            if entries.last().map(|(u, _)| u.as_str()) != Some(user) {
                if entries.iter().any(|(u, _)| u == user) {
                    return Err(parse_err(
                        line,
                        format!("rows for `{user}` are not contiguous"),
                    ));
                }
                entries.push((user.to_string(), Vec::new()));
            }
            let list = &mut entries.last_mut().expect("pushed").1;
            if rank != list.len() + 1 {
                return Err(parse_err(
                    line,
                    format!("expected rank {}, got {rank}", list.len() + 1),
                ));
            }
            list.push(record[2].to_string());
        }
        let k = entries.iter().map(|(_, l)| l.len()).max().unwrap_or(0);
        Self::new(k.max(1), entries)
    }
}

/// Aggregated neighbour sets for every universe user.
///
/// Users are processed independently on the current rayon pool; the result
/// does not depend on scheduling or thread count. The first failing user in
/// universe order determines the returned error.
pub fn all_neighbour_sets(
    views: &[View],
    universe: &UserUniverse,
    k: usize,
) -> Result<NeighbourSets> {
    check_k(k)?;
    universe.check_covers(views)?;
    let indexed = index_views(views, universe)?;

    let results: Vec<Result<(Vec<usize>, bool)>> = (0..universe.len())
        .into_par_iter()
        .map(|subject| {
            let matrix = rank_matrix_for(subject, &indexed, universe)?;
            let (mut order, sv) = aggregate_ranking(&matrix)?;
            order.truncate(k);
            Ok((order, sv.converged))
        })
        .collect();

    let mut entries = Vec::with_capacity(universe.len());
    let mut unconverged = Vec::new();
    for (subject, result) in results.into_iter().enumerate() {
        let user = universe.id(subject);
        let (order, converged) = result.map_err(|e| Error::for_user(user, e))?;
        if !converged {
            unconverged.push(user.to_string());
        }
        entries.push((
            user.to_string(),
            order
                .into_iter()
                .map(|i| universe.id(i).to_string())
                .collect(),
        ));
    }
    Ok(NeighbourSets {
        k,
        entries,
        unconverged,
    })
}
