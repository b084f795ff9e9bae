//! Approximate k-nearest-neighbor search with multiple random projection
//! trees and voting.
//!
//! An [`MrptIndex`] holds `T` trees of depth `ℓ`. Each tree projects the data
//! onto `ℓ` sparse random directions, one per level, and splits every node at
//! the median of its points' projections. A query is routed to one leaf per
//! tree; points that share a leaf with the query in at least `v` trees are
//! scanned exactly.
//!
//! ```
//! use mrpt::{Dataset, IndexParams, MrptIndex, Searcher};
//!
//! let data = Dataset::gaussian(2_000, 32, 1).unwrap();
//! let params = IndexParams::with_default_sparsity(10, 6, data.dim(), 42);
//! let index = MrptIndex::build(&data, params).unwrap();
//!
//! let mut searcher = Searcher::new(&index, &data).unwrap();
//! let found = searcher.search(data.row(7), 5, 2).unwrap();
//! assert_eq!(found.neighbors.as_slice()[0].index, 7);
//! ```

pub mod dataset;
pub mod distance;
pub mod error;
pub mod eval;
pub mod index;
pub mod io;
pub mod query;
pub mod sparse;

pub use dataset::Dataset;
pub use distance::euclidean_distance;
pub use error::{Error, Result};
pub use eval::{
    brute_force_knn, pareto_frontier, recall, run_benchmark, run_benchmark_with, BenchOptions,
    BenchmarkRecord, GridPoint, GroundTruth, GroundTruthCache,
};
pub use index::{grow_tree, median_split, IndexParams, MrptIndex, RpTree, TreeLayout, TreeNode};
pub use io::{load_index, load_vectors, save_index, save_vectors, VectorFormat};
pub use query::{
    approximate_knn, exact_knn_in_set, tree_query, CandidateSet, Neighbor, NeighborList,
    SearchOutcome, Searcher, VoteAccumulator,
};
pub use sparse::{
    project_dataset, project_query, ProjectionMatrix, SparseProjectionMatrix, SparsityMode,
};
