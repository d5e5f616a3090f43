//! kNN community consistency against a (possibly overlapping) ground truth.
//!
//! A user's consistency is the fraction of its neighbours that share at least
//! one ground-truth community with it. Micro-averaging takes the mean over
//! scorable users; macro-averaging first averages within each community and
//! then across communities. Users with no community are never scored, and
//! unassigned neighbours count as mismatches.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::aggregation::all_neighbour_sets;
use crate::error::{Error, Result};
use crate::views::{view_ranking, UserUniverse, View};

/// Source id used for the aggregated graph in reports.
pub const UNIFIED_SOURCE: &str = "unified";

/// User → communities, with the inverse index kept in sync.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommunityAssignment {
    membership: BTreeMap<String, BTreeSet<String>>,
    communities: BTreeMap<String, BTreeSet<String>>,
}

impl CommunityAssignment {
    pub fn from_pairs<I, U, C>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (U, C)>,
        U: Into<String>,
        C: Into<String>,
    {
        let mut out = Self::default();
        for (user, community) in pairs {
            let (user, community) = (user.into(), community.into());
            if user.is_empty() || community.is_empty() {
                return Err(Error::Validation("empty user or community id".into()));
            }
            out.membership
                .entry(user.clone())
                .or_default()
                .insert(community.clone());
            out.communities.entry(community).or_default().insert(user);
        }
        Ok(out)
    }

    /// Reads a `user_id,community_id` CSV (one row per membership).
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
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
        let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
        if headers.iter().ne(["user_id", "community_id"]) {
            return Err(parse_err(
                1,
                "expected header `user_id,community_id`".into(),
            ));
        }
        let mut pairs = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string())
            })?;
            pairs.push((record[0].to_string(), record[1].to_string()));
        }
        Self::from_pairs(pairs)
    }

    /// Writes `user_id,community_id` rows sorted by user, then community.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::io("<ground truth csv>", std::io::Error::other(e));
        writer
            .write_record(["user_id", "community_id"])
            .map_err(wrap)?;
        for (user, set) in &self.membership {
            for c in set {
                writer.write_record([user, c]).map_err(wrap)?;
            }
        }
        writer
            .flush()
            .map_err(|e| Error::io("<ground truth csv>", e))
    }

    /// Every assigned user must belong to the universe.
    pub fn check_universe(&self, universe: &UserUniverse) -> Result<()> {
        match self
            .membership
            .keys()
            .find(|u| universe.index_of(u).is_none())
        {
            Some(u) => Err(Error::Integrity(format!(
                "ground truth assigns `{u}`, who is not in the universe"
            ))),
            None => Ok(()),
        }
    }

    pub fn membership(&self, user: &str) -> Option<&BTreeSet<String>> {
        self.membership.get(user)
    }

    pub fn is_assigned(&self, user: &str) -> bool {
        self.membership.contains_key(user)
    }

    pub fn communities(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.communities
    }

    pub fn assigned_users(&self) -> impl Iterator<Item = &str> {
        self.membership.keys().map(String::as_str)
    }

    fn shares_community(&self, a: &BTreeSet<String>, b: &str) -> bool {
        self.membership
            .get(b)
            .is_some_and(|other| !a.is_disjoint(other))
    }
}

/// Fraction of `neighbours` sharing at least one community with `user`.
pub fn user_consistency(
    user: &str,
    neighbours: &[String],
    communities: &CommunityAssignment,
) -> Result<f64> {
    let own = communities
        .membership(user)
        .ok_or_else(|| Error::UnscorableUser(user.to_string()))?;
    if neighbours.is_empty() {
        return Err(Error::Validation(format!(
            "`{user}` has no neighbours to score"
        )));
    }
    let hits = neighbours
        .iter()
        .filter(|nb| communities.shares_community(own, nb))
        .count();
    Ok(hits as f64 / neighbours.len() as f64)
}

/// Mean of the per-user scores.
pub fn micro_average(scores: &BTreeMap<String, f64>) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::UndefinedMeasure("no scorable users".into()));
    }
    Ok(scores.values().sum::<f64>() / scores.len() as f64)
}

/// Mean over communities of the mean member score. Overlapping users count
/// in every community containing them; communities without scored members
/// are skipped.
pub fn macro_average(
    scores: &BTreeMap<String, f64>,
    communities: &CommunityAssignment,
) -> Result<f64> {
    let per_community: Vec<f64> = communities
        .communities()
        .values()
        .filter_map(|members| {
            let member_scores: Vec<f64> = members
                .iter()
                .filter_map(|m| scores.get(m).copied())
                .collect();
            (!member_scores.is_empty())
                .then(|| member_scores.iter().sum::<f64>() / member_scores.len() as f64)
        })
        .collect();
    if per_community.is_empty() {
        return Err(Error::UndefinedMeasure(
            "no community has a scored member".into(),
        ));
    }
    Ok(per_community.iter().sum::<f64>() / per_community.len() as f64)
}

/// Scores every assigned user that has a non-empty list.
pub fn score_lists<'a, I>(
    lists: I,
    communities: &CommunityAssignment,
) -> Result<BTreeMap<String, f64>>
where
    I: IntoIterator<Item = (&'a str, &'a [String])>,
{
    let mut scores = BTreeMap::new();
    for (user, list) in lists {
        if !communities.is_assigned(user) || list.is_empty() {
            continue;
        }
        scores.insert(user.to_string(), user_consistency(user, list, communities)?);
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub k: usize,
    pub source: String,
    pub micro: f64,
    pub macro_avg: f64,
}

/// One row per `(k, source)`, k ascending, sources in view order followed
/// by [`UNIFIED_SOURCE`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConsistencyReport {
    pub rows: Vec<ReportRow>,
}

impl ConsistencyReport {
    pub fn row(&self, k: usize, source: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.k == k && r.source == source)
    }

    /// `k,source,micro,macro` with six decimals.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::io("<report csv>", std::io::Error::other(e));
        writer
            .write_record(["k", "source", "micro", "macro"])
            .map_err(wrap)?;
        for row in &self.rows {
            writer
                .write_record([
                    row.k.to_string(),
                    row.source.clone(),
                    format!("{:.6}", row.micro),
                    format!("{:.6}", row.macro_avg),
                ])
                .map_err(wrap)?;
        }
        writer.flush().map_err(|e| Error::io("<report csv>", e))
    }
}

/// Per-view and unified consistency for every `k` in `[k_min, k_max]`.
///
/// Rankings are computed once at `k_max` and truncated for smaller `k`; the
/// neighbour list at `k` is always a prefix of the list at `k_max`. A view
/// is evaluated only on its own present users.
pub fn consistency_sweep(
    views: &[View],
    universe: &UserUniverse,
    communities: &CommunityAssignment,
    k_min: usize,
    k_max: usize,
) -> Result<ConsistencyReport> {
    if k_min == 0 || k_max < k_min {
        return Err(Error::Validation(format!(
            "invalid k range [{k_min}, {k_max}]"
        )));
    }
    if let Some(v) = views.iter().find(|v| v.id() == UNIFIED_SOURCE) {
        return Err(Error::Validation(format!(
            "view id `{}` is reserved for the aggregated source",
            v.id()
        )));
    }
    communities.check_universe(universe)?;

    let mut per_view: Vec<Vec<(String, Vec<String>)>> = Vec::with_capacity(views.len());
    for view in views {
        let ranked: Vec<Result<(String, Vec<String>)>> = view
            .users()
            .par_iter()
            .filter(|u| communities.is_assigned(u))
            .map(|u| {
                let mut order = view_ranking(view, universe, u)?;
                order.truncate(k_max);
                Ok((
                    u.clone(),
                    order
                        .into_iter()
                        .map(|i| universe.id(i).to_string())
                        .collect(),
                ))
            })
            .collect();
        let ranked = ranked
            .into_iter()
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::for_source(view.id(), e))?;
        per_view.push(ranked);
    }
    let unified = all_neighbour_sets(views, universe, k_max)
        .map_err(|e| Error::for_source(UNIFIED_SOURCE, e))?;

    let mut rows = Vec::new();
    for k in k_min..=k_max {
        let sources = views
            .iter()
            .map(|v| v.id())
            .zip(per_view.iter().map(Vec::as_slice))
            .chain(std::iter::once((UNIFIED_SOURCE, unified.entries())));
        for (source, lists) in sources {
            let truncated = lists
                .iter()
                .map(|(u, l)| (u.as_str(), &l[..l.len().min(k)]));
            let scores =
                score_lists(truncated, communities).map_err(|e| Error::for_source(source, e))?;
            let micro = micro_average(&scores).map_err(|e| Error::for_source(source, e))?;
            let macro_avg =
                macro_average(&scores, communities).map_err(|e| Error::for_source(source, e))?;
            rows.push(ReportRow {
                k,
                source: source.to_string(),
                micro,
                macro_avg,
            });
        }
    }
    Ok(ConsistencyReport { rows })
}
