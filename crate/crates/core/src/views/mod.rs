//! User universes, per-view profiles, cosine similarity and per-view kNN.
//!
//! Every view, whether it came from a feature file or from a relation graph,
//! is reduced to one sparse non-negative profile per present user. Similarity
//! inside a view is always the cosine between profiles.

mod io;

pub use io::{load_feature_view, load_relation_edges, Manifest, RelationEdge, ViewKind, ViewSpec};

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ordering::{order_by_score, ScoreOrder};

/// Ordered global user set with a stable id → index mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserUniverse {
    users: Vec<String>,
    index: HashMap<String, usize>,
}

impl UserUniverse {
    /// Builds a universe preserving the given order.
    pub fn new<I, S>(users: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let users: Vec<String> = users.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(users.len());
        for (i, id) in users.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::Validation(
                    "user identifiers must be non-empty".into(),
                ));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate user identifier `{id}`"
                )));
            }
        }
        if users.len() < 2 {
            return Err(Error::Validation(format!(
                "universe needs at least 2 users, got {}",
                users.len()
            )));
        }
        Ok(Self { users, index })
    }

    /// Union of the views' present users, in order of first appearance
    /// (view order, then each view's own user order).
    pub fn from_views(views: &[View]) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut users = Vec::new();
        for view in views {
            for id in view.users() {
                if seen.insert(id.as_str()) {
                    users.push(id.clone());
                }
            }
        }
        Self::new(users)
    }

    /// Checks that this universe is exactly the union of the views' users.
    pub fn check_covers(&self, views: &[View]) -> Result<()> {
        let mut covered = vec![false; self.len()];
        for view in views {
            for id in view.users() {
                let i = self.index_of(id).ok_or_else(|| {
                    Error::Integrity(format!(
                        "view `{}` contains user `{id}` outside the universe",
                        view.id()
                    ))
                })?;
                covered[i] = true;
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(Error::UnrankableUser(self.users[i].clone()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.users[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.users
    }

    pub(crate) fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::Lookup(format!("user `{id}` is not in the universe")))
    }
}

/// Sparse non-negative feature vector. Entries are kept sorted by feature id
/// and never store zero weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureProfile {
    entries: Vec<(String, f64)>,
    norm_sq: f64,
}

impl FeatureProfile {
    /// Builds a profile, summing duplicate features and dropping zeros.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut merged: BTreeMap<String, f64> = BTreeMap::new();
        for (feature, weight) in entries {
            let feature = feature.into();
            if !weight.is_finite() || weight < 0.0 {
                return Err(Error::Validation(format!(
                    "feature `{feature}` has invalid weight {weight}"
                )));
            }
            *merged.entry(feature).or_insert(0.0) += weight;
        }
        Ok(Self::from_sorted(
            merged.into_iter().filter(|(_, w)| *w > 0.0).collect(),
        ))
    }

    fn from_sorted(entries: Vec<(String, f64)>) -> Self {
        let norm_sq = entries.iter().map(|(_, w)| w * w).sum::<f64>();
        Self { entries, norm_sq }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, feature: &str) -> Option<f64> {
        self.entries
            .binary_search_by(|(f, _)| f.as_str().cmp(feature))
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }

    /// Same support, every weight set to 1.
    pub fn binarized(&self) -> Self {
        Self::from_sorted(self.entries.iter().map(|(f, _)| (f.clone(), 1.0)).collect())
    }
}

/// Cosine similarity of two sparse profiles; 0 when either is empty.
pub fn cosine(p: &FeatureProfile, q: &FeatureProfile) -> f64 {
    if p.is_empty() || q.is_empty() {
        return 0.0;
    }
    let (a, b) = (&p.entries, &q.entries);
    let (mut i, mut j) = (0, 0);
    let mut dot = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    // sqrt(fl(x * x)) == x, so identical profiles score exactly 1.
    (dot / (p.norm_sq * q.norm_sq).sqrt()).clamp(0.0, 1.0)
}

/// Where a view's profiles came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Features,
    RelationOut,
    RelationIn,
    BipartiteMembership,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Binary,
    Weighted,
}

/// Which side of a relation edge becomes the profile feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Profile of `u` = targets of `u`'s out-edges.
    Out,
    /// Profile of `u` = sources of `u`'s in-edges.
    In,
}

/// One data view: the users it covers and a profile for each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    id: String,
    users: Vec<String>,
    profiles: Vec<FeatureProfile>,
    position: HashMap<String, usize>,
    provenance: Provenance,
    weighting: Weighting,
}

impl View {
    /// Builds a view from `(user, profile)` pairs in the given order.
    /// Requires at least two distinct, non-empty user ids.
    pub fn new<I>(
        id: impl Into<String>,
        profiles: I,
        provenance: Provenance,
        weighting: Weighting,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (String, FeatureProfile)>,
    {
        let id = id.into();
        let mut users = Vec::new();
        let mut profs = Vec::new();
        let mut position = HashMap::new();
        for (user, profile) in profiles {
            if user.is_empty() {
                return Err(Error::Validation(format!("view `{id}`: empty user id")));
            }
            if position.insert(user.clone(), users.len()).is_some() {
                return Err(Error::Validation(format!(
                    "view `{id}`: duplicate user `{user}`"
                )));
            }
            users.push(user);
            profs.push(match weighting {
                Weighting::Binary => profile.binarized(),
                Weighting::Weighted => profile,
            });
        }
        if users.len() < 2 {
            return Err(Error::Validation(format!(
                "view `{id}` has {} present users; at least 2 are required",
                users.len()
            )));
        }
        Ok(Self {
            id,
            users,
            profiles: profs,
            position,
            provenance,
            weighting,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Number of present users (n′ for this view).
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn contains(&self, user: &str) -> bool {
        self.position.contains_key(user)
    }

    pub fn position(&self, user: &str) -> Option<usize> {
        self.position.get(user).copied()
    }

    pub fn profile(&self, user: &str) -> Option<&FeatureProfile> {
        self.position(user).map(|i| &self.profiles[i])
    }

    pub fn profiles(&self) -> &[FeatureProfile] {
        &self.profiles
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    /// Copy of this view with every profile binarized.
    pub fn into_binary(self) -> Self {
        let profiles = self
            .profiles
            .iter()
            .map(FeatureProfile::binarized)
            .collect();
        Self {
            profiles,
            weighting: Weighting::Binary,
            ..self
        }
    }

    pub(crate) fn require(&self, user: &str) -> Result<usize> {
        self.position(user).ok_or_else(|| {
            Error::Lookup(format!(
                "user `{user}` is not present in view `{}`",
                self.id
            ))
        })
    }

    /// Cosine from the user at `pos` to every present user (self included).
    pub(crate) fn similarities_from(&self, pos: usize) -> Vec<f64> {
        let p = &self.profiles[pos];
        self.profiles.iter().map(|q| cosine(p, q)).collect()
    }
}

/// Builds a view from a relation edge list. Self-loops are dropped and
/// duplicate edges are merged (summed, then binarized if requested).
pub fn relation_to_view(
    edges: &[RelationEdge],
    direction: Direction,
    weighting: Weighting,
    view_id: &str,
) -> Result<View> {
    let provenance = match direction {
        Direction::Out => Provenance::RelationOut,
        Direction::In => Provenance::RelationIn,
    };
    relation_profiles(edges, direction, weighting, view_id, provenance)
}

/// Builds a bipartite membership view: `(group, member)` pairs give each
/// member a binary profile over the groups containing it.
pub fn membership_to_view(pairs: &[(String, String)], view_id: &str) -> Result<View> {
    let edges: Vec<RelationEdge> = pairs
        .iter()
        .map(|(group, member)| RelationEdge {
            source: group.clone(),
            target: member.clone(),
            weight: 1.0,
        })
        .collect();
    relation_profiles(
        &edges,
        Direction::In,
        Weighting::Binary,
        view_id,
        Provenance::BipartiteMembership,
    )
}

fn relation_profiles(
    edges: &[RelationEdge],
    direction: Direction,
    weighting: Weighting,
    view_id: &str,
    provenance: Provenance,
) -> Result<View> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    for edge in edges {
        if !edge.weight.is_finite() || edge.weight <= 0.0 {
            return Err(Error::Validation(format!(
                "view `{view_id}`: edge {} -> {} has non-positive weight {}",
                edge.source, edge.target, edge.weight
            )));
        }
        if edge.source == edge.target {
            continue;
        }
        let (owner, feature) = match direction {
            Direction::Out => (&edge.source, &edge.target),
            Direction::In => (&edge.target, &edge.source),
        };
        let slot = grouped.entry(owner.clone()).or_insert_with(|| {
            order.push(owner.clone());
            Vec::new()
        });
        slot.push((feature.clone(), edge.weight));
    }
    let mut profiles = Vec::with_capacity(order.len());
    for user in order {
        let entries = grouped.remove(&user).unwrap_or_default();
        profiles.push((user, FeatureProfile::from_entries(entries)?));
    }
    View::new(view_id, profiles, provenance, weighting)
}

/// Present users of `view` ordered by descending cosine to `user`, with
/// similarity ties broken by ascending universe index. `user` is excluded.
pub fn view_ranking(view: &View, universe: &UserUniverse, user: &str) -> Result<Vec<usize>> {
    let pos = view.require(user)?;
    let sims = view.similarities_from(pos);
    let mut scored = Vec::with_capacity(view.len() - 1);
    for (other, sim) in sims.into_iter().enumerate() {
        if other == pos {
            continue;
        }
        let idx = universe.require(&view.users[other])?;
        scored.push((idx, sim));
    }
    Ok(order_by_score(scored, ScoreOrder::Descending))
}

/// The `min(k, n′ − 1)` present users most similar to `user` in `view`.
pub fn view_knn(view: &View, universe: &UserUniverse, user: &str, k: usize) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let mut ranking = view_ranking(view, universe, user)?;
    ranking.truncate(k);
    Ok(ranking
        .into_iter()
        .map(|i| universe.id(i).to_string())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(pairs: &[(&str, f64)]) -> FeatureProfile {
        FeatureProfile::from_entries(pairs.iter().map(|(f, w)| (*f, *w))).unwrap()
    }

    fn edge(s: &str, t: &str, w: f64) -> RelationEdge {
        RelationEdge {
            source: s.into(),
            target: t.into(),
            weight: w,
        }
    }

    /// View over users in universe order whose profiles are chosen so that
    /// cosine(u, other) matches the requested similarity exactly enough.
    fn view_with_sims(target_sims: &[(&str, f64)]) -> (View, UserUniverse) {
        // u = (1, 0); other = (s, sqrt(1 - s^2)) gives cosine s.
        let mut profiles = vec![("u".to_string(), profile(&[("x", 1.0)]))];
        for (id, s) in target_sims {
            let rest = (1.0 - s * s).max(0.0).sqrt();
            profiles.push((id.to_string(), profile(&[("x", *s), ("y", rest)])));
        }
        let view = View::new("v", profiles, Provenance::Features, Weighting::Weighted).unwrap();
        let universe = UserUniverse::from_views(std::slice::from_ref(&view)).unwrap();
        (view, universe)
    }

    #[test]
    fn cosine_examples() {
        let a = profile(&[("f1", 1.0), ("f2", 1.0)]);
        assert_eq!(cosine(&a, &a), 1.0);
        assert_eq!(
            cosine(&profile(&[("f1", 1.0)]), &profile(&[("f2", 1.0)])),
            0.0
        );
        let c = profile(&[("f1", 1.0), ("f3", 1.0)]);
        assert!((cosine(&a, &c) - 0.5).abs() < 1e-15);
        assert_eq!(cosine(&a, &FeatureProfile::empty()), 0.0);
    }

    #[test]
    fn duplicate_features_sum_and_zeros_drop() {
        let p = profile(&[("f1", 1.0), ("f1", 2.0), ("f2", 0.0)]);
        assert_eq!(p.entries(), &[("f1".to_string(), 3.0)]);
        assert!(FeatureProfile::from_entries([("f", -1.0)]).is_err());
    }

    #[test]
    fn relation_out_weighted() {
        let edges = [
            edge("a", "b", 2.0),
            edge("a", "c", 1.0),
            edge("d", "b", 1.0),
        ];
        let v = relation_to_view(&edges, Direction::Out, Weighting::Weighted, "m").unwrap();
        assert_eq!(v.users(), &["a".to_string(), "d".to_string()]);
        assert_eq!(v.profile("a").unwrap().get("b"), Some(2.0));
        assert_eq!(v.profile("a").unwrap().get("c"), Some(1.0));
        assert_eq!(v.profile("d").unwrap().get("b"), Some(1.0));
        assert_eq!(v.provenance(), Provenance::RelationOut);
    }

    #[test]
    fn relation_binary_merges_duplicates() {
        let edges = [
            edge("a", "b", 2.0),
            edge("a", "b", 3.0),
            edge("c", "b", 1.0),
        ];
        let v = relation_to_view(&edges, Direction::Out, Weighting::Binary, "f").unwrap();
        assert_eq!(v.profile("a").unwrap().entries(), &[("b".to_string(), 1.0)]);
    }

    #[test]
    fn relation_in_with_single_present_user_is_rejected() {
        let edges = [edge("a", "b", 1.0), edge("c", "b", 1.0)];
        let err = relation_to_view(&edges, Direction::In, Weighting::Binary, "fb").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn relation_rejects_non_positive_weight_and_drops_self_loops() {
        let err = relation_to_view(
            &[edge("a", "b", 0.0)],
            Direction::Out,
            Weighting::Binary,
            "x",
        );
        assert!(matches!(err, Err(Error::Validation(_))));
        let edges = [
            edge("a", "a", 1.0),
            edge("a", "b", 1.0),
            edge("c", "b", 1.0),
        ];
        let v = relation_to_view(&edges, Direction::Out, Weighting::Binary, "x").unwrap();
        assert_eq!(v.profile("a").unwrap().get("a"), None);
    }

    #[test]
    fn membership_view_uses_groups_as_features() {
        let pairs = vec![
            ("list1".to_string(), "a".to_string()),
            ("list1".to_string(), "b".to_string()),
            ("list2".to_string(), "b".to_string()),
        ];
        let v = membership_to_view(&pairs, "co-listed").unwrap();
        assert_eq!(v.provenance(), Provenance::BipartiteMembership);
        assert_eq!(v.profile("b").unwrap().len(), 2);
    }

    #[test]
    fn knn_truncates_to_available() {
        let (view, universe) = view_with_sims(&[("v", 0.9), ("w", 0.2)]);
        assert_eq!(view_knn(&view, &universe, "u", 5).unwrap(), vec!["v", "w"]);
    }

    #[test]
    fn knn_breaks_ties_by_universe_index() {
        let (view, universe) = view_with_sims(&[("v", 0.5), ("w", 0.5)]);
        assert_eq!(view_knn(&view, &universe, "u", 1).unwrap(), vec!["v"]);
    }

    #[test]
    fn knn_orders_descending() {
        let (view, universe) = view_with_sims(&[("v", 0.1), ("w", 0.9), ("x", 0.5)]);
        assert_eq!(view_knn(&view, &universe, "u", 2).unwrap(), vec!["w", "x"]);
    }

    #[test]
    fn knn_rejects_absent_user() {
        let (view, universe) = view_with_sims(&[("v", 0.1)]);
        assert!(matches!(
            view_knn(&view, &universe, "zz", 1),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn empty_profiles_rank_last() {
        let profiles = vec![
            ("u".to_string(), profile(&[("x", 1.0)])),
            ("silent".to_string(), FeatureProfile::empty()),
            ("w".to_string(), profile(&[("x", 1.0), ("y", 1.0)])),
        ];
        let view = View::new("v", profiles, Provenance::Features, Weighting::Weighted).unwrap();
        let universe = UserUniverse::from_views(std::slice::from_ref(&view)).unwrap();
        assert_eq!(
            view_knn(&view, &universe, "u", 2).unwrap(),
            vec!["w", "silent"]
        );
        assert_eq!(
            view_knn(&view, &universe, "silent", 2).unwrap(),
            vec!["u", "w"]
        );
    }

    #[test]
    fn universe_validation() {
        assert!(UserUniverse::new(["a"]).is_err());
        assert!(UserUniverse::new(["a", "a"]).is_err());
        assert!(UserUniverse::new(["a", ""]).is_err());
        let u = UserUniverse::new(["b", "a"]).unwrap();
        assert_eq!(u.index_of("a"), Some(1));
    }

    #[test]
    fn universe_must_cover_views_exactly() {
        let v = View::new(
            "v",
            vec![
                ("a".to_string(), FeatureProfile::empty()),
                ("b".to_string(), FeatureProfile::empty()),
            ],
            Provenance::Features,
            Weighting::Binary,
        )
        .unwrap();
        let universe = UserUniverse::new(["a", "b", "c"]).unwrap();
        assert!(matches!(
            universe.check_covers(std::slice::from_ref(&v)),
            Err(Error::UnrankableUser(_))
        ));
        let universe = UserUniverse::new(["a", "c"]).unwrap();
        assert!(matches!(
            universe.check_covers(std::slice::from_ref(&v)),
            Err(Error::Integrity(_))
        ));
    }
}
