//! Spanning-tree density estimation from i.i.d. samples.
//!
//! The pipeline: estimate pairwise mutual information with sparse
//! histogram plug-in estimates, pick the spanning tree of maximum total
//! mutual information with Kruskal's algorithm, root and renumber it, and
//! fit a density that is a product of bivariate conditional histogram
//! ratios along the tree. The crate also ships exact tree-structured
//! ground truths (evaluator, sampler, quadrature MI oracle), L1 distance
//! estimators, and an experiment harness for identification-frequency and
//! error-rate studies.
//!
//! Everything is deterministic given a seed: derived random streams are
//! keyed per row and per replication, so results do not depend on worker
//! count or chunking.

pub mod density;
pub mod error;
pub mod evaluation;
pub mod ground_truth;
pub mod histograms;
pub mod mi;
mod par;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod tree;

pub use density::{
    default_root, fit_tree_density, root_and_order, NormalizationReport, RootedOrder,
    TreeDensityModel,
};
pub use error::{Error, Result};
pub use evaluation::{
    identification_experiment, l1_distance_grid, l1_distance_mc, rate_experiment, Density,
    ExperimentConfig, IdentificationReport, L1Estimate, RateReport,
};
pub use ground_truth::{fgm_pair_mi, FgmTreeTruth, TruthSpec};
pub use histograms::{
    build_marginal_histogram, build_pair_histogram, Dataset, MarginalHistogram, PairHistogram,
    Partition1D,
};
pub use mi::{default_bin_widths, mi_matrix, plugin_mi, BinWidths, MIMatrix};
pub use tree::{
    enumerate_spanning_trees, max_spanning_tree, mi_gap, optimal_tree_set, MIGapReport,
    SpanningTree,
};
