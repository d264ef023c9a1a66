//! Parallel t-SNE with the chunk&mix protocol.
//!
//! Points are reshuffled every epoch into overlapping chunks. Each thread
//! optimizes a small partial t-SNE on its chunks, and the partial solutions
//! are pooled into a set of global layers. A single perplexity controls the
//! scale of the structure that is preserved.

pub mod affinity;
pub mod cache;
pub mod data;
pub mod engine;
pub mod error;
pub mod eval;
pub mod io;
pub mod lambert;
pub mod quadtree;
pub mod rng;
pub mod schedule;
pub mod synth;
pub mod vptree;
pub mod worker;

pub use affinity::{build_neighbor_index, partial_joint_affinities, NeighborIndex, SparseAffinity};
pub use data::DataSet;
pub use engine::{refine, run_ptsne, run_with_index, EmbeddingLayers, RefineConfig, RunConfig};
pub use error::{Error, Result};
pub use eval::{auc, knp_curve, Axis, KnpCurve, KnpEvaluator};
pub use rng::RngStream;
pub use synth::{generate_synthetic, SyntheticKind, SyntheticSpec};
pub use worker::Point;
