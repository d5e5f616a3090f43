use std::path::{Path, PathBuf};

use serde::Serialize;
use unigraph::aggregation::{all_neighbour_sets, NeighbourSets};
use unigraph::consistency::{consistency_sweep, CommunityAssignment};
use unigraph::graph::{build_unified_graph, export_graph, mutualize, ExportFormat, UnifiedGraph};
use unigraph::synth::{generate, SynthConfig};
use unigraph::views::{Manifest, UserUniverse, View};
use unigraph::{Error, Result};

use crate::{AggregateArgs, Cli, Command, EvaluateArgs, ExportArgs, GraphOutput, SynthArgs};

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {} worker threads: {e}", cli.threads)))?;
    match cli.command {
        Command::Aggregate(args) => aggregate(args, &pool),
        Command::Evaluate(args) => evaluate(args, &pool),
        Command::Synth(args) => synth(args),
        Command::Export(args) => export(args),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn load_dataset(manifest_path: &Path) -> Result<(Manifest, Vec<View>, UserUniverse)> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let views = manifest.load_views(base)?;
    let universe = UserUniverse::from_views(&views)?;
    Ok((manifest, views, universe))
}

fn load_ground_truth(path: Option<&PathBuf>) -> Result<Option<CommunityAssignment>> {
    path.map(CommunityAssignment::load_csv).transpose()
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Writes `unified.<ext>` (and `unified_mutual.<ext>`) for every format;
/// returns the mutual edge count when requested.
fn write_graphs(
    graph: &UnifiedGraph,
    output: &GraphOutput,
    communities: Option<&CommunityAssignment>,
    out_dir: &Path,
) -> Result<Option<usize>> {
    let mutual = output.mutual.then(|| mutualize(graph)).transpose()?;
    let mut formats: Vec<ExportFormat> = Vec::new();
    for f in &output.formats {
        if !formats.contains(f) {
            formats.push(*f);
        }
    }
    for format in formats {
        export_graph(
            graph,
            format,
            communities,
            out_dir.join(format!("unified.{}", format.extension())),
        )?;
        if let Some(m) = &mutual {
            export_graph(
                m,
                format,
                communities,
                out_dir.join(format!("unified_mutual.{}", format.extension())),
            )?;
        }
    }
    Ok(mutual.map(|m| m.edge_count()))
}

#[derive(Serialize)]
struct GraphFlags {
    k: usize,
    mutual: bool,
    formats: Vec<&'static str>,
    ground_truth: Option<String>,
}

impl GraphFlags {
    fn new(k: usize, output: &GraphOutput) -> Self {
        Self {
            k,
            mutual: output.mutual,
            formats: output.formats.iter().map(|f| f.name()).collect(),
            ground_truth: output.ground_truth.as_deref().map(display),
        }
    }
}

/// Run summary. The thread count and output directory are deliberately left
/// out so that summaries compare byte-for-byte across runs.
#[derive(Serialize)]
struct AggregateSummary<'a> {
    command: &'static str,
    n: usize,
    l: usize,
    k: usize,
    edges: usize,
    mutual_edges: Option<usize>,
    unconverged: &'a [String],
    manifest_path: String,
    manifest: &'a Manifest,
    flags: GraphFlags,
    seed: u64,
}

fn aggregate(args: AggregateArgs, pool: &rayon::ThreadPool) -> Result<()> {
    let k = args.k as usize;
    let (manifest, views, universe) = load_dataset(&args.manifest)?;
    let communities = load_ground_truth(args.output.ground_truth.as_ref())?;
    let sets = pool.install(|| all_neighbour_sets(&views, &universe, k))?;
    let graph = build_unified_graph(&sets, &universe)?;

    create_dir(&args.out_dir)?;
    let mut csv = Vec::new();
    sets.write_csv(&mut csv)?;
    write_file(&args.out_dir.join("neighbours.csv"), &csv)?;
    let mutual_edges = write_graphs(&graph, &args.output, communities.as_ref(), &args.out_dir)?;

    let summary = AggregateSummary {
        command: "aggregate",
        n: universe.len(),
        l: views.len(),
        k,
        edges: graph.edge_count(),
        mutual_edges,
        unconverged: sets.unconverged(),
        manifest_path: display(&args.manifest),
        manifest: &manifest,
        flags: GraphFlags::new(k, &args.output),
        seed: args.seed,
    };
    write_json(&args.out_dir.join("summary.json"), &summary)
}

#[derive(Serialize)]
struct EvaluateSummary<'a> {
    command: &'static str,
    n: usize,
    l: usize,
    k_min: usize,
    k_max: usize,
    rows: usize,
    manifest_path: String,
    manifest: &'a Manifest,
    ground_truth: String,
    seed: u64,
}

fn evaluate(args: EvaluateArgs, pool: &rayon::ThreadPool) -> Result<()> {
    let truth_path = args
        .ground_truth
        .as_ref()
        .ok_or_else(|| Error::Usage("`evaluate` needs --ground-truth".into()))?;
    let (manifest, views, universe) = load_dataset(&args.manifest)?;
    let communities = CommunityAssignment::load_csv(truth_path)?;
    let report = pool
        .install(|| consistency_sweep(&views, &universe, &communities, args.k_min, args.k_max))?;

    create_dir(&args.out_dir)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_file(&args.out_dir.join("report.csv"), &csv)?;
    let summary = EvaluateSummary {
        command: "evaluate",
        n: universe.len(),
        l: views.len(),
        k_min: args.k_min,
        k_max: args.k_max,
        rows: report.rows.len(),
        manifest_path: display(&args.manifest),
        manifest: &manifest,
        ground_truth: display(truth_path),
        seed: args.seed,
    };
    write_json(&args.out_dir.join("summary.json"), &summary)
}

fn synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n: args.n,
        communities: args.communities,
        sizes: args.sizes,
        views: args.views,
        signal: args.signal,
        coverage: args.coverage,
        features_per_user: args.features_per_user,
        pool_size: args.pool_size,
        overlap_fraction: args.overlap,
        relation_views: args.relation_views,
        seed: args.seed,
    };
    generate(&config)?.write_to_dir(&args.out_dir)
}

fn export(args: ExportArgs) -> Result<()> {
    let sets = NeighbourSets::read_csv(&args.neighbours)?;
    let universe = UserUniverse::new(sets.entries().iter().map(|(u, _)| u.clone()))?;
    let communities = load_ground_truth(args.output.ground_truth.as_ref())?;
    let graph = build_unified_graph(&sets, &universe)?;
    create_dir(&args.out_dir)?;
    write_graphs(&graph, &args.output, communities.as_ref(), &args.out_dir)?;
    Ok(())
}
