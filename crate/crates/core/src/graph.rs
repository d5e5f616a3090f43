//! Unified kNN graph assembly, the mutual variant, and file export.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::aggregation::NeighbourSets;
use crate::consistency::CommunityAssignment;
use crate::error::{Error, Result};
use crate::views::UserUniverse;

/// Unweighted graph over a user universe. Directed graphs hold arcs
/// `(source, target)`; undirected graphs hold pairs with `source < target`.
/// Edges are sorted by source index, then target index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnifiedGraph {
    nodes: UserUniverse,
    edges: Vec<(usize, usize)>,
    directed: bool,
    k: usize,
}

impl UnifiedGraph {
    pub fn nodes(&self) -> &UserUniverse {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        let key = if self.directed || from < to {
            (from, to)
        } else {
            (to, from)
        };
        self.edges.binary_search(&key).is_ok()
    }

    pub fn out_degree(&self, node: usize) -> usize {
        let start = self.edges.partition_point(|e| e.0 < node);
        let end = self.edges.partition_point(|e| e.0 <= node);
        end - start
    }

    /// Number of incident edges (undirected) or out + in arcs (directed).
    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|(a, b)| *a == node || *b == node)
            .count()
    }

    /// Edges as id pairs, in export order.
    pub fn edge_ids(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.edges
            .iter()
            .map(|&(a, b)| (self.nodes.id(a), self.nodes.id(b)))
    }
}

/// Directed graph with an arc `i → j` iff `j` is in `i`'s neighbour set.
pub fn build_unified_graph(sets: &NeighbourSets, universe: &UserUniverse) -> Result<UnifiedGraph> {
    let mut seen = vec![false; universe.len()];
    let mut edges = BTreeSet::new();
    for (user, list) in sets.entries() {
        let source = universe.index_of(user).ok_or_else(|| {
            Error::Integrity(format!("neighbour sets mention unknown subject `{user}`"))
        })?;
        if std::mem::replace(&mut seen[source], true) {
            return Err(Error::Integrity(format!("subject `{user}` listed twice")));
        }
        for nb in list {
            let target = universe.index_of(nb).ok_or_else(|| {
                Error::Integrity(format!("`{user}` has unknown neighbour `{nb}`"))
            })?;
            if target == source {
                return Err(Error::Integrity(format!(
                    "`{user}` lists itself as a neighbour"
                )));
            }
            if !edges.insert((source, target)) {
                return Err(Error::Integrity(format!("`{user}` lists `{nb}` twice")));
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Integrity(format!(
            "no neighbour set for user `{}`",
            universe.id(missing)
        )));
    }
    Ok(UnifiedGraph {
        nodes: universe.clone(),
        edges: edges.into_iter().collect(),
        directed: true,
        k: sets.k(),
    })
}

/// Undirected mutual graph: `{i, j}` iff both `i → j` and `j → i`.
pub fn mutualize(graph: &UnifiedGraph) -> Result<UnifiedGraph> {
    if !graph.directed {
        return Err(Error::Usage("graph is already undirected".into()));
    }
    let edges = graph
        .edges
        .iter()
        .filter(|&&(a, b)| a < b && graph.edges.binary_search(&(b, a)).is_ok())
        .copied()
        .collect();
    Ok(UnifiedGraph {
        nodes: graph.nodes.clone(),
        edges,
        directed: false,
        k: graph.k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    EdgeList,
    GraphMl,
    Gexf,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::EdgeList => "csv",
            ExportFormat::GraphMl => "graphml",
            ExportFormat::Gexf => "gexf",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExportFormat::EdgeList => "edgelist",
            ExportFormat::GraphMl => "graphml",
            ExportFormat::Gexf => "gexf",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edgelist" => Ok(ExportFormat::EdgeList),
            "graphml" => Ok(ExportFormat::GraphMl),
            "gexf" => Ok(ExportFormat::Gexf),
            other => Err(Error::Usage(format!(
                "unknown export format `{other}` (expected edgelist, graphml or gexf)"
            ))),
        }
    }
}

fn xml_escape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn community_label(communities: &CommunityAssignment, user: &str) -> String {
    communities
        .membership(user)
        .map(|set| set.iter().cloned().collect::<Vec<_>>().join(","))
        .unwrap_or_default()
}

/// Renders `graph` in the requested format. Output is byte-for-byte
/// deterministic for a given graph and assignment.
pub fn render_graph(
    graph: &UnifiedGraph,
    format: ExportFormat,
    communities: Option<&CommunityAssignment>,
) -> String {
    let mut out = String::new();
    match format {
        ExportFormat::EdgeList => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer
                .write_record(["source", "target"])
                .expect("in-memory write");
            for (a, b) in graph.edge_ids() {
                writer.write_record([a, b]).expect("in-memory write");
            }
            out = String::from_utf8(writer.into_inner().expect("in-memory flush"))
                .expect("ids are utf-8");
        }
        ExportFormat::GraphMl => {
            out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
            out.push_str(
                "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\" \
                 xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
                 xsi:schemaLocation=\"http://graphml.graphdrawing.org/xmlns \
                 http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd\">\n",
            );
            if communities.is_some() {
                out.push_str(
                    "  <key id=\"community\" for=\"node\" attr.name=\"community\" attr.type=\"string\"/>\n",
                );
            }
            let kind = if graph.directed {
                "directed"
            } else {
                "undirected"
            };
            let _ = writeln!(out, "  <graph id=\"unified\" edgedefault=\"{kind}\">");
            for id in graph.nodes.ids() {
                let id_attr = xml_escape(id);
                match communities {
                    Some(c) => {
                        let _ = writeln!(
                            out,
                            "    <node id=\"{id_attr}\"><data key=\"community\">{}</data></node>",
                            xml_escape(&community_label(c, id))
                        );
                    }
                    None => {
                        let _ = writeln!(out, "    <node id=\"{id_attr}\"/>");
                    }
                }
            }
            for (i, (a, b)) in graph.edge_ids().enumerate() {
                let _ = writeln!(
                    out,
                    "    <edge id=\"e{i}\" source=\"{}\" target=\"{}\"/>",
                    xml_escape(a),
                    xml_escape(b)
                );
            }
            out.push_str("  </graph>\n</graphml>\n");
        }
        ExportFormat::Gexf => {
            out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
            out.push_str("<gexf xmlns=\"http://www.gexf.net/1.2draft\" version=\"1.2\">\n");
            let kind = if graph.directed {
                "directed"
            } else {
                "undirected"
            };
            let _ = writeln!(out, "  <graph mode=\"static\" defaultedgetype=\"{kind}\">");
            if communities.is_some() {
                out.push_str("    <attributes class=\"node\">\n");
                out.push_str(
                    "      <attribute id=\"community\" title=\"community\" type=\"string\"/>\n",
                );
                out.push_str("    </attributes>\n");
            }
            out.push_str("    <nodes>\n");
            for id in graph.nodes.ids() {
                let id_attr = xml_escape(id);
                match communities {
                    Some(c) => {
                        let _ = writeln!(
                            out,
                            "      <node id=\"{id_attr}\" label=\"{id_attr}\"><attvalues>\
                             <attvalue for=\"community\" value=\"{}\"/></attvalues></node>",
                            xml_escape(&community_label(c, id))
                        );
                    }
                    None => {
                        let _ = writeln!(out, "      <node id=\"{id_attr}\" label=\"{id_attr}\"/>");
                    }
                }
            }
            out.push_str("    </nodes>\n    <edges>\n");
            for (i, (a, b)) in graph.edge_ids().enumerate() {
                let _ = writeln!(
                    out,
                    "      <edge id=\"{i}\" source=\"{}\" target=\"{}\"/>",
                    xml_escape(a),
                    xml_escape(b)
                );
            }
            out.push_str("    </edges>\n  </graph>\n</gexf>\n");
        }
    }
    out
}

/// Writes `graph` to `path` in the requested format.
pub fn export_graph(
    graph: &UnifiedGraph,
    format: ExportFormat,
    communities: Option<&CommunityAssignment>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let body = render_graph(graph, format, communities);
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(body.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Reads a `source,target` edge list back into id pairs.
pub fn read_edgelist(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.iter().ne(["source", "target"]) {
        return Err(parse_err(1, "expected header `source,target`".into()));
    }
    reader
        .records()
        .map(|r| {
            let r = r.map_err(|e| {
                parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string())
            })?;
            Ok((r[0].to_string(), r[1].to_string()))
        })
        .collect()
}
