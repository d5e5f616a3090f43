//! Unified k-nearest-neighbour graphs from multiple views of one user set.
//!
//! Each view (feature vectors or a relation graph) yields a cosine ranking of
//! users. For every user the per-view rankings are stacked into a rank matrix
//! whose leading left singular vector gives a consensus ranking; its top `k`
//! entries become that user's out-edges in a sparse directed graph. The
//! [`consistency`] module scores how well any view, or the unified graph,
//! keeps ground-truth communities together.
//!
//! ```
//! use unigraph::{synth, aggregation, graph};
//!
//! let data = synth::generate(&synth::SynthConfig { n: 40, seed: 1, ..Default::default() })?;
//! let sets = aggregation::all_neighbour_sets(&data.views, &data.universe, 5)?;
//! let g = graph::build_unified_graph(&sets, &data.universe)?;
//! assert_eq!(g.edge_count(), 40 * 5);
//! # Ok::<(), unigraph::Error>(())
//! ```

pub mod aggregation;
pub mod consistency;
pub mod error;
pub mod graph;
mod ordering;
pub mod synth;
pub mod views;

pub use error::{Error, Result};
pub use ordering::TIE_TOLERANCE;
