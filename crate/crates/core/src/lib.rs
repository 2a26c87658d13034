//! Knowledge-graph data augmentation (KGDA) with bicluster-derived features.
//!
//! The pipeline runs in stages:
//!
//! 1. [`dataset`]: load a tabular dataset and min-max normalize it.
//! 2. [`bicluster`]: mine low mean-squared-residue biclusters from
//!    one-dimensional hierarchical seeds.
//! 3. [`augment`]: turn every bicluster into a distance-to-centroid feature.
//! 4. [`kgraph`]: express original and augmented features as triples and
//!    fuse them into a single knowledge graph.
//! 5. [`tucker`]: train a Tucker-decomposition link predictor with 1-N
//!    scoring and Adam.
//! 6. [`eval`]: classification metrics, ROC/AUC and training-ratio sweeps.
//!
//! [`pipeline`] ties the stages together behind a JSON run configuration and
//! writes every intermediate artifact to disk.

pub mod augment;
pub mod bicluster;
pub mod checks;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod kgraph;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod tucker;

pub use error::{Error, Result};
