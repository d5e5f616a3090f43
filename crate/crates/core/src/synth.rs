//! Seeded multi-view datasets with planted communities.
//!
//! Each covered user in a view receives `features_per_user` draws. With
//! probability `signal` a draw comes from one of the user's communities'
//! feature pool, otherwise uniformly from the union of all pools. Repeated
//! draws of the same feature accumulate weight.
//!
//! Relation views use users themselves as features: the community pool is the
//! community's member list and the global pool is the whole user set, and the
//! draws are written as `source,target,weight` out-edges (self draws are
//! re-drawn).
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`)
//! with `rand` 0.8 sampling, so a seed reproduces the same dataset bytes on
//! every platform.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::consistency::CommunityAssignment;
use crate::error::{Error, Result};
use crate::views::{
    relation_to_view, Direction, FeatureProfile, Manifest, Provenance, RelationEdge, UserUniverse,
    View, ViewKind, ViewSpec, Weighting,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Number of users.
    pub n: usize,
    /// Number of planted communities.
    pub communities: usize,
    /// Explicit community sizes; balanced when `None`.
    pub sizes: Option<Vec<usize>>,
    /// Number of views.
    pub views: usize,
    /// Per-view signal; a single value applies to every view.
    pub signal: Vec<f64>,
    /// Per-view coverage fraction; a single value applies to every view.
    pub coverage: Vec<f64>,
    pub features_per_user: usize,
    /// Size of each community's feature pool (feature views only).
    pub pool_size: usize,
    /// Fraction of users given a second community.
    pub overlap_fraction: f64,
    /// How many of the views (the last ones) are emitted as relation edge lists.
    pub relation_views: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 200,
            communities: 4,
            sizes: None,
            views: 3,
            signal: vec![0.6],
            coverage: vec![1.0],
            features_per_user: 20,
            pool_size: 200,
            overlap_fraction: 0.0,
            relation_views: 0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn per_view(values: &[f64], views: usize, name: &str) -> Result<Vec<f64>> {
        let expanded = match values.len() {
            1 => vec![values[0]; views],
            len if len == views => values.to_vec(),
            len => {
                return Err(Error::Validation(format!(
                    "{name} has {len} values for {views} views"
                )))
            }
        };
        if let Some(bad) = expanded.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Validation(format!("{name} {bad} is outside [0, 1]")));
        }
        Ok(expanded)
    }

    pub fn community_sizes(&self) -> Result<Vec<usize>> {
        if self.communities == 0 {
            return Err(Error::Validation("need at least one community".into()));
        }
        if self.n < 2 * self.communities {
            return Err(Error::Validation(format!(
                "n = {} is below 2 × {} communities",
                self.n, self.communities
            )));
        }
        let sizes = match &self.sizes {
            Some(sizes) => sizes.clone(),
            None => {
                let (base, extra) = (self.n / self.communities, self.n % self.communities);
                (0..self.communities)
                    .map(|c| base + usize::from(c < extra))
                    .collect()
            }
        };
        if sizes.len() != self.communities || sizes.iter().sum::<usize>() != self.n {
            return Err(Error::Validation(format!(
                "community sizes {sizes:?} must list {} entries summing to {}",
                self.communities, self.n
            )));
        }
        if sizes.iter().any(|&s| s < 2) {
            return Err(Error::Validation(
                "every community needs at least 2 users".into(),
            ));
        }
        Ok(sizes)
    }

    pub fn validate(&self) -> Result<()> {
        self.community_sizes()?;
        if self.views == 0 {
            return Err(Error::Validation("need at least one view".into()));
        }
        Self::per_view(&self.signal, self.views, "signal")?;
        Self::per_view(&self.coverage, self.views, "coverage")?;
        if !(0.0..=1.0).contains(&self.overlap_fraction) {
            return Err(Error::Validation(format!(
                "overlap fraction {} is outside [0, 1]",
                self.overlap_fraction
            )));
        }
        if self.overlap_fraction > 0.0 && self.communities < 2 {
            return Err(Error::Validation(
                "overlap needs at least 2 communities".into(),
            ));
        }
        if self.features_per_user == 0 || self.pool_size == 0 {
            return Err(Error::Validation(
                "features per user and pool size must be positive".into(),
            ));
        }
        if self.relation_views > self.views {
            return Err(Error::Validation(format!(
                "{} relation views requested out of {} views",
                self.relation_views, self.views
            )));
        }
        Ok(())
    }
}

/// Raw rows of one generated view, exactly as written to disk.
#[derive(Debug, Clone, PartialEq)]
pub enum ViewRows {
    /// `(user, feature, weight)` triplets.
    Features(Vec<(String, String, u32)>),
    /// Out-edges `(source, target, weight)`.
    Relation(Vec<(String, String, u32)>),
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub view_ids: Vec<String>,
    pub rows: Vec<ViewRows>,
    pub views: Vec<View>,
    pub universe: UserUniverse,
    pub communities: CommunityAssignment,
}

fn user_id(i: usize, width: usize) -> String {
    format!("u{i:0width$}")
}

/// Generates a dataset. The same config (seed included) always yields the
/// same dataset.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let sizes = config.community_sizes()?;
    let signal = SynthConfig::per_view(&config.signal, config.views, "signal")?;
    let coverage = SynthConfig::per_view(&config.coverage, config.views, "coverage")?;
    let n = config.n;
    let c = config.communities;
    let width = (n - 1).to_string().len();
    let ids: Vec<String> = (0..n).map(|i| user_id(i, width)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Shuffled block labels keep universe order uncorrelated with community.
    let mut labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(comm, &size)| std::iter::repeat_n(comm, size))
        .collect();
    labels.shuffle(&mut rng);
    let mut member_of: Vec<Vec<usize>> = labels.iter().map(|&l| vec![l]).collect();

    let overlap = (config.overlap_fraction * n as f64).round() as usize;
    let mut overlapping: Vec<usize> = sample(&mut rng, n, overlap).into_vec();
    overlapping.sort_unstable();
    for user in overlapping {
        let primary = member_of[user][0];
        let mut second = rng.gen_range(0..c - 1);
        if second >= primary {
            second += 1;
        }
        member_of[user].push(second);
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (user, comms) in member_of.iter().enumerate() {
        for &comm in comms {
            members[comm].push(user);
        }
    }

    let mut covered: Vec<Vec<bool>> = Vec::with_capacity(config.views);
    for &cov in &coverage {
        let count = ((cov * n as f64).round() as usize).clamp(2, n);
        let mut mask = vec![false; n];
        for i in sample(&mut rng, n, count) {
            mask[i] = true;
        }
        covered.push(mask);
    }
    // Users missed by every view are placed in one view so the universe
    // matches the ground truth.
    for user in 0..n {
        if covered.iter().all(|mask| !mask[user]) {
            let view = rng.gen_range(0..config.views);
            covered[view][user] = true;
        }
    }

    let first_relation = config.views - config.relation_views;
    let mut view_ids = Vec::with_capacity(config.views);
    let mut rows = Vec::with_capacity(config.views);
    for (j, mask) in covered.iter().enumerate() {
        let relational = j >= first_relation;
        let mut out = Vec::new();
        for user in (0..n).filter(|&u| mask[u]) {
            let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
            for _ in 0..config.features_per_user {
                let from_community = rng.gen::<f64>() < signal[j];
                let comms = &member_of[user];
                let comm = comms[rng.gen_range(0..comms.len())];
                let feature = if relational {
                    loop {
                        let target = if from_community {
                            members[comm][rng.gen_range(0..members[comm].len())]
                        } else {
                            rng.gen_range(0..n)
                        };
                        if target != user {
                            break target;
                        }
                    }
                } else if from_community {
                    comm * config.pool_size + rng.gen_range(0..config.pool_size)
                } else {
                    rng.gen_range(0..c * config.pool_size)
                };
                *counts.entry(feature).or_insert(0) += 1;
            }
            for (feature, count) in counts {
                let name = if relational {
                    ids[feature].clone()
                } else {
                    format!(
                        "c{}_f{}",
                        feature / config.pool_size,
                        feature % config.pool_size
                    )
                };
                out.push((ids[user].clone(), name, count));
            }
        }
        if relational {
            view_ids.push(format!("relation{j}"));
            rows.push(ViewRows::Relation(out));
        } else {
            view_ids.push(format!("features{j}"));
            rows.push(ViewRows::Features(out));
        }
    }

    let views = rows
        .iter()
        .zip(&view_ids)
        .map(|(r, id)| build_view(r, id))
        .collect::<Result<Vec<_>>>()?;
    let universe = UserUniverse::new(ids.iter().cloned())?;
    universe.check_covers(&views)?;
    let communities = CommunityAssignment::from_pairs(
        member_of
            .iter()
            .enumerate()
            .flat_map(|(u, comms)| comms.iter().map(move |&cm| (u, cm)))
            .map(|(u, cm)| (ids[u].clone(), format!("c{cm}"))),
    )?;

    Ok(SynthDataset {
        config: config.clone(),
        view_ids,
        rows,
        views,
        universe,
        communities,
    })
}

fn build_view(rows: &ViewRows, id: &str) -> Result<View> {
    match rows {
        ViewRows::Features(triplets) => {
            let mut grouped: Vec<(String, Vec<(String, f64)>)> = Vec::new();
            for (user, feature, w) in triplets {
                if grouped.last().map(|(u, _)| u) != Some(user) {
                    grouped.push((user.clone(), Vec::new()));
                }
                grouped
                    .last_mut()
                    .expect("pushed")
                    .1
                    .push((feature.clone(), f64::from(*w)));
            }
            let profiles = grouped
                .into_iter()
                .map(|(u, e)| Ok((u, FeatureProfile::from_entries(e)?)))
                .collect::<Result<Vec<_>>>()?;
            View::new(id, profiles, Provenance::Features, Weighting::Weighted)
        }
        ViewRows::Relation(edges) => {
            let edges: Vec<RelationEdge> = edges
                .iter()
                .map(|(s, t, w)| RelationEdge {
                    source: s.clone(),
                    target: t.clone(),
                    weight: f64::from(*w),
                })
                .collect();
            relation_to_view(&edges, Direction::Out, Weighting::Weighted, id)
        }
    }
}

impl SynthDataset {
    /// The manifest describing the files written by [`SynthDataset::write_to_dir`].
    pub fn manifest(&self) -> Manifest {
        Manifest {
            views: self
                .rows
                .iter()
                .zip(&self.view_ids)
                .map(|(rows, id)| match rows {
                    ViewRows::Features(_) => ViewSpec {
                        id: id.clone(),
                        path: format!("{id}.csv").into(),
                        kind: ViewKind::Features,
                        direction: None,
                        weighting: Some(Weighting::Weighted),
                    },
                    ViewRows::Relation(_) => ViewSpec {
                        id: id.clone(),
                        path: format!("{id}.csv").into(),
                        kind: ViewKind::Relation,
                        direction: Some(Direction::Out),
                        weighting: Some(Weighting::Weighted),
                    },
                })
                .collect(),
        }
    }

    /// Writes one CSV per view, `manifest.json` and `ground_truth.csv`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (rows, id) in self.rows.iter().zip(&self.view_ids) {
            let (header, body) = match rows {
                ViewRows::Features(r) => (["user_id", "feature_id", "weight"], r),
                ViewRows::Relation(r) => (["source", "target", "weight"], r),
            };
            let path = dir.join(format!("{id}.csv"));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut writer = csv::Writer::from_writer(std::io::BufWriter::new(file));
            let wrap = |e: csv::Error| Error::io(&path, std::io::Error::other(e));
            writer.write_record(header).map_err(wrap)?;
            for (a, b, w) in body {
                writer
                    .write_record([a.as_str(), b.as_str(), &w.to_string()])
                    .map_err(wrap)?;
            }
            writer.flush().map_err(|e| Error::io(&path, e))?;
        }
        let manifest_path = dir.join("manifest.json");
        let mut text = self.manifest().to_json();
        text.push('\n');
        std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;

        let gt_path = dir.join("ground_truth.csv");
        let mut file = std::fs::File::create(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
        let mut buf = Vec::new();
        self.communities.write_csv(&mut buf)?;
        file.write_all(&buf).map_err(|e| Error::io(&gt_path, e))
    }
}
