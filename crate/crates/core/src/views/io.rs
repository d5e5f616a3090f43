//! File ingestion: feature triplets, relation edge lists and dataset manifests.

use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{relation_to_view, Direction, FeatureProfile, Provenance, View, Weighting};
use crate::error::{Error, Result};

const FEATURE_HEADER: [&str; 3] = ["user_id", "feature_id", "weight"];

/// One directed, positively weighted relation edge.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationEdge {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn parse_weight(path: &Path, line: u64, raw: &str) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("weight `{raw}` is not a number"),
    })
}

/// Reads a `user_id,feature_id,weight` CSV into a feature view. The present
/// users are exactly those appearing in the file; duplicate rows are summed.
pub fn load_feature_view(path: impl AsRef<Path>, view_id: &str) -> Result<View> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut order: Vec<String> = Vec::new();
    let mut rows: std::collections::HashMap<String, Vec<(String, f64)>> = Default::default();

    if !headers.is_empty() {
        if headers.iter().ne(FEATURE_HEADER) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header `{}`", FEATURE_HEADER.join(",")),
            });
        }
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let (user, feature, weight) = (&record[0], &record[1], &record[2]);
            if user.is_empty() || feature.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: "empty user or feature id".into(),
                });
            }
            let weight = parse_weight(path, line, weight)?;
            if !weight.is_finite() || weight < 0.0 {
                return Err(Error::Validation(format!(
                    "{}:{line}: negative or non-finite weight {weight}",
                    path.display()
                )));
            }
            let slot = rows.entry(user.to_string()).or_insert_with(|| {
                order.push(user.to_string());
                Vec::new()
            });
            slot.push((feature.to_string(), weight));
        }
    }

    let mut profiles = Vec::with_capacity(order.len());
    for user in order {
        let entries = rows.remove(&user).unwrap_or_default();
        profiles.push((user, FeatureProfile::from_entries(entries)?));
    }
    View::new(view_id, profiles, Provenance::Features, Weighting::Weighted)
}

/// Reads a `source,target[,weight]` CSV. A missing weight column means 1.0.
pub fn load_relation_edges(path: impl AsRef<Path>) -> Result<Vec<RelationEdge>> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let has_weight = match headers.iter().collect::<Vec<_>>().as_slice() {
        ["source", "target"] => false,
        ["source", "target", "weight"] => true,
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "expected header `source,target` or `source,target,weight`".into(),
            })
        }
    };
    let mut edges = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record[0].is_empty() || record[1].is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "empty source or target".into(),
            });
        }
        let weight = if has_weight {
            parse_weight(path, line, &record[2])?
        } else {
            1.0
        };
        edges.push(RelationEdge {
            source: record[0].to_string(),
            target: record[1].to_string(),
            weight,
        });
    }
    Ok(edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    Features,
    Relation,
}

/// One entry of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSpec {
    pub id: String,
    pub path: PathBuf,
    #[serde(rename = "type")]
    pub kind: ViewKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighting: Option<Weighting>,
}

/// Dataset manifest: `{ "views": [ ... ] }`. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub views: Vec<ViewSpec>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: Manifest =
            serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::Manifest("manifest lists no views".into()));
        }
        let mut ids = HashSet::new();
        for spec in &self.views {
            if !ids.insert(spec.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate view id `{}`", spec.id)));
            }
            match (spec.kind, spec.direction) {
                (ViewKind::Relation, None) => {
                    return Err(Error::Manifest(format!(
                        "relation view `{}` needs a `direction`",
                        spec.id
                    )))
                }
                (ViewKind::Features, Some(_)) => {
                    return Err(Error::Manifest(format!(
                        "feature view `{}` does not take a `direction`",
                        spec.id
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Loads every listed view; relative paths resolve against `base_dir`.
    /// Feature views default to `weighted`, relation views to `binary`.
    pub fn load_views(&self, base_dir: impl AsRef<Path>) -> Result<Vec<View>> {
        let base = base_dir.as_ref();
        self.views
            .iter()
            .map(|spec| {
                let path = if spec.path.is_absolute() {
                    spec.path.clone()
                } else {
                    base.join(&spec.path)
                };
                match spec.kind {
                    ViewKind::Features => {
                        let view = load_feature_view(&path, &spec.id)?;
                        Ok(match spec.weighting {
                            Some(Weighting::Binary) => view.into_binary(),
                            _ => view,
                        })
                    }
                    ViewKind::Relation => {
                        let edges = load_relation_edges(&path)?;
                        relation_to_view(
                            &edges,
                            spec.direction.expect("validated"),
                            spec.weighting.unwrap_or(Weighting::Binary),
                            &spec.id,
                        )
                    }
                }
            })
            .collect()
    }
}
