//! Index construction: `T` random projection trees of depth `ℓ`.
//!
//! Each tree samples its own sparse `d × ℓ` matrix, projects the whole
//! dataset once (`P = X·R`), then splits recursively at the median of the
//! projections on column `level`. Points whose projection is `≤` the split go
//! left. The finished tree is stored flat: `2^ℓ − 1` split values in heap
//! order and one contiguous array of leaf contents addressed by `2^ℓ + 1`
//! offsets.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::sparse::{
    check_sparsity, default_sparsity, project_dataset_counted, ProjectionMatrix,
    SparseProjectionMatrix, SparsityMode,
};

/// Build parameters shared by every tree of an index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexParams {
    /// Number of trees `T`.
    pub trees: usize,
    /// Tree depth `ℓ`; each tree has `2^ℓ` leaves.
    pub depth: usize,
    /// Probability `a` that a projection coordinate is non-zero.
    pub sparsity: f64,
    pub seed: u64,
    pub mode: SparsityMode,
}

impl IndexParams {
    pub fn new(trees: usize, depth: usize, sparsity: f64, seed: u64) -> Self {
        Self {
            trees,
            depth,
            sparsity,
            seed,
            mode: SparsityMode::Bernoulli,
        }
    }

    /// Parameters with the default sparsity `1/√d`.
    pub fn with_default_sparsity(trees: usize, depth: usize, d: usize, seed: u64) -> Self {
        Self::new(trees, depth, default_sparsity(d), seed)
    }

    pub fn mode(mut self, mode: SparsityMode) -> Self {
        self.mode = mode;
        self
    }

    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::Parameter("number of trees must be at least 1".into()));
        }
        let max = max_depth(n);
        if self.depth == 0 || self.depth > max {
            return Err(Error::Depth {
                depth: self.depth,
                max,
                n,
            });
        }
        check_sparsity(self.sparsity)
    }
}

/// Largest admissible depth, `⌊log₂ n⌋`.
pub fn max_depth(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        (usize::BITS - 1 - n.leading_zeros()) as usize
    }
}

/// Result of splitting a node at the median of its projections.
#[derive(Clone, Debug, PartialEq)]
pub struct MedianSplit {
    pub split: f32,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
}

/// Splits `indices` at the lower median of `values` (the `⌈m/2⌉`-th smallest).
///
/// Entries with value `≤ split` go left, the rest right, preserving input
/// order. With distinct values the left side has exactly `⌈m/2⌉` entries.
pub fn median_split(values: &[f32], indices: &[u32]) -> Result<MedianSplit> {
    if values.len() != indices.len() {
        return Err(Error::Shape {
            what: "projection values vs indices",
            expected: indices.len(),
            actual: values.len(),
        });
    }
    if values.len() < 2 {
        return Err(Error::Parameter(format!(
            "median split needs at least 2 entries, got {}",
            values.len()
        )));
    }
    Ok(split_at_median(values, indices))
}

fn split_at_median(values: &[f32], indices: &[u32]) -> MedianSplit {
    let mut scratch = values.to_vec();
    let rank = values.len().div_ceil(2) - 1;
    let (_, &mut split, _) = scratch.select_nth_unstable_by(rank, f32::total_cmp);
    let mut left = Vec::with_capacity(rank + 1);
    let mut right = Vec::with_capacity(values.len() - rank);
    for (&v, &i) in values.iter().zip(indices) {
        if v <= split {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    MedianSplit { split, left, right }
}

/// Owned, pointer-based view of a tree.
#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Internal {
        split: f32,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf(Vec<u32>),
}

/// Grows the subtree rooted at `level` over `indices`, using column `level`
/// of `projections` for the split at that level.
///
/// A node with fewer than two points still splits so that every leaf sits at
/// depth `ℓ`: one point goes left at its own value, and an empty node splits
/// at `+∞`. Both only arise when ties force a degenerate split.
pub fn grow_tree(
    projections: &ProjectionMatrix,
    indices: Vec<u32>,
    level: usize,
    depth: usize,
) -> Result<TreeNode> {
    if depth > projections.cols() {
        return Err(Error::Shape {
            what: "projection columns vs depth",
            expected: depth,
            actual: projections.cols(),
        });
    }
    if level > depth {
        return Err(Error::Parameter(format!("level {level} exceeds depth {depth}")));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i as usize >= projections.rows()) {
        return Err(Error::Integrity(format!("index {bad} not covered by projections")));
    }
    Ok(grow(projections, indices, level, depth))
}

fn grow(projections: &ProjectionMatrix, indices: Vec<u32>, level: usize, depth: usize) -> TreeNode {
    if level == depth {
        return TreeNode::Leaf(indices);
    }
    let MedianSplit { split, left, right } = match indices.len() {
        0 => MedianSplit {
            split: f32::INFINITY,
            left: Vec::new(),
            right: Vec::new(),
        },
        1 => MedianSplit {
            split: projections.get(indices[0] as usize, level),
            left: indices,
            right: Vec::new(),
        },
        _ => {
            let values: Vec<f32> = indices
                .iter()
                .map(|&i| projections.get(i as usize, level))
                .collect();
            split_at_median(&values, &indices)
        }
    };
    TreeNode::Internal {
        split,
        left: Box::new(grow(projections, left, level + 1, depth)),
        right: Box::new(grow(projections, right, level + 1, depth)),
    }
}

/// Flat tree: heap-ordered splits plus concatenated leaf contents.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeLayout {
    depth: usize,
    splits: Vec<f32>,
    leaf_offsets: Vec<u32>,
    leaf_indices: Vec<u32>,
}

impl TreeLayout {
    /// Flattens a complete tree of the given depth.
    pub fn from_node(root: &TreeNode, depth: usize) -> Result<Self> {
        let inner = (1usize << depth) - 1;
        let mut layout = Self {
            depth,
            splits: vec![0.0; inner],
            leaf_offsets: vec![0],
            leaf_indices: Vec::new(),
        };
        layout.flatten(root, 0, 0)?;
        Ok(layout)
    }

    fn flatten(&mut self, node: &TreeNode, id: usize, level: usize) -> Result<()> {
        match node {
            TreeNode::Internal { split, left, right } if level < self.depth => {
                self.splits[id] = *split;
                self.flatten(left, 2 * id + 1, level + 1)?;
                self.flatten(right, 2 * id + 2, level + 1)
            }
            TreeNode::Leaf(indices) if level == self.depth => {
                self.leaf_indices.extend_from_slice(indices);
                self.leaf_offsets.push(self.leaf_indices.len() as u32);
                Ok(())
            }
            _ => Err(Error::Integrity(format!(
                "tree is not complete: node at level {level} of depth {}",
                self.depth
            ))),
        }
    }

    pub(crate) fn from_parts(
        depth: usize,
        splits: Vec<f32>,
        leaf_offsets: Vec<u32>,
        leaf_indices: Vec<u32>,
        n: usize,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::Format(format!("tree layout: {msg}")));
        if splits.len() != (1usize << depth) - 1 || leaf_offsets.len() != (1usize << depth) + 1 {
            return bad("wrong node count for depth");
        }
        if leaf_offsets[0] != 0
            || leaf_offsets.windows(2).any(|w| w[0] > w[1])
            || *leaf_offsets.last().unwrap() as usize != leaf_indices.len()
        {
            return bad("leaf offsets inconsistent");
        }
        if splits.iter().any(|s| s.is_nan()) {
            return bad("NaN split value");
        }
        let mut seen = vec![false; n];
        for &i in &leaf_indices {
            match seen.get_mut(i as usize) {
                Some(s) if !*s => *s = true,
                _ => return bad("leaves do not partition the point set"),
            }
        }
        if leaf_indices.len() != n {
            return bad("leaves do not cover every point");
        }
        Ok(Self {
            depth,
            splits,
            leaf_offsets,
            leaf_indices,
        })
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_leaves(&self) -> usize {
        1 << self.depth
    }

    /// Split values in heap order (node `i` has children `2i+1`, `2i+2`).
    pub fn splits(&self) -> &[f32] {
        &self.splits
    }

    pub(crate) fn leaf_offsets(&self) -> &[u32] {
        &self.leaf_offsets
    }

    pub(crate) fn leaf_indices(&self) -> &[u32] {
        &self.leaf_indices
    }

    /// Points in leaf `j`, numbered left to right.
    #[inline]
    pub fn leaf(&self, j: usize) -> &[u32] {
        let lo = self.leaf_offsets[j] as usize;
        let hi = self.leaf_offsets[j + 1] as usize;
        &self.leaf_indices[lo..hi]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.num_leaves()).map(move |j| self.leaf(j))
    }

    /// Leaf reached by descending with projections `p` (one per level).
    #[inline]
    pub fn route(&self, p: &[f32]) -> usize {
        debug_assert!(p.len() >= self.depth);
        let mut node = 0usize;
        for &value in &p[..self.depth] {
            node = if value <= self.splits[node] {
                2 * node + 1
            } else {
                2 * node + 2
            };
        }
        node - self.splits.len()
    }

    /// Rebuilds the pointer-based view.
    pub fn to_node(&self) -> TreeNode {
        self.node_at(0, 0)
    }

    fn node_at(&self, id: usize, level: usize) -> TreeNode {
        if level == self.depth {
            return TreeNode::Leaf(self.leaf(id - self.splits.len()).to_vec());
        }
        TreeNode::Internal {
            split: self.splits[id],
            left: Box::new(self.node_at(2 * id + 1, level + 1)),
            right: Box::new(self.node_at(2 * id + 2, level + 1)),
        }
    }

    fn memory_bytes(&self) -> usize {
        4 * (self.splits.len() + self.leaf_offsets.len() + self.leaf_indices.len())
    }
}

/// One random projection tree and the matrix it routes with.
#[derive(Clone, Debug, PartialEq)]
pub struct RpTree {
    matrix: SparseProjectionMatrix,
    layout: TreeLayout,
}

impl RpTree {
    /// Builds a tree from a projection matrix; returns it with the
    /// multiply-add count of the projection step.
    pub fn build(data: &Dataset, matrix: SparseProjectionMatrix) -> Result<(Self, u64)> {
        let depth = matrix.cols();
        let max = max_depth(data.len());
        if depth > max {
            return Err(Error::Depth {
                depth,
                max,
                n: data.len(),
            });
        }
        let (projections, macs) = project_dataset_counted(data, &matrix)?;
        let root = grow(&projections, (0..data.len() as u32).collect(), 0, depth);
        let layout = TreeLayout::from_node(&root, depth)?;
        Ok((Self { matrix, layout }, macs))
    }

    pub(crate) fn from_parts(matrix: SparseProjectionMatrix, layout: TreeLayout) -> Self {
        Self { matrix, layout }
    }

    pub fn matrix(&self) -> &SparseProjectionMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> &TreeLayout {
        &self.layout
    }

    pub fn depth(&self) -> usize {
        self.layout.depth
    }

    pub fn memory_bytes(&self) -> usize {
        self.layout.memory_bytes()
            + 8 * self.matrix.nnz()
            + 4 * (self.matrix.cols() + 1)
    }
}

/// Per-tree multiply-add counts recorded during construction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub projection_macs: Vec<u64>,
}

/// `T` random projection trees over one dataset.
///
/// Tree `t` draws its matrix from ChaCha8 stream `t` of the master seed, so an
/// index with `T` trees is a prefix of one built with more trees and the same
/// seed, and construction order does not affect the result.
#[derive(Clone, Debug, PartialEq)]
pub struct MrptIndex {
    params: IndexParams,
    n: usize,
    d: usize,
    fingerprint: u64,
    trees: Vec<RpTree>,
}

impl MrptIndex {
    pub fn build(data: &Dataset, params: IndexParams) -> Result<Self> {
        Self::build_with_stats(data, params).map(|(index, _)| index)
    }

    pub fn build_with_stats(data: &Dataset, params: IndexParams) -> Result<(Self, BuildStats)> {
        params.validate(data.len())?;
        let built: Vec<(RpTree, u64)> = (0..params.trees)
            .into_par_iter()
            .map(|t| {
                let matrix = SparseProjectionMatrix::sample_stream(
                    data.dim(),
                    params.depth,
                    params.sparsity,
                    params.seed,
                    t as u64,
                    params.mode,
                )?;
                RpTree::build(data, matrix)
            })
            .collect::<Result<_>>()?;
        let (trees, projection_macs) = built.into_iter().unzip();
        Ok((
            Self {
                params,
                n: data.len(),
                d: data.dim(),
                fingerprint: data.checksum(),
                trees,
            },
            BuildStats { projection_macs },
        ))
    }

    pub(crate) fn from_parts(
        params: IndexParams,
        n: usize,
        d: usize,
        fingerprint: u64,
        trees: Vec<RpTree>,
    ) -> Self {
        Self {
            params,
            n,
            d,
            fingerprint,
            trees,
        }
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn trees(&self) -> &[RpTree] {
        &self.trees
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn depth(&self) -> usize {
        self.params.depth
    }

    /// Number of indexed points.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Checksum of the dataset the index was built over.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Keeps only the first `trees` trees.
    pub fn truncated(&self, trees: usize) -> Result<Self> {
        if trees == 0 || trees > self.trees.len() {
            return Err(Error::Parameter(format!(
                "cannot keep {trees} of {} trees",
                self.trees.len()
            )));
        }
        let mut out = self.clone();
        out.trees.truncate(trees);
        out.params.trees = trees;
        Ok(out)
    }

    /// Approximate in-memory footprint of trees and matrices, excluding data.
    pub fn memory_bytes(&self) -> usize {
        self.trees.iter().map(RpTree::memory_bytes).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sort_oracle(values: &[f32]) -> f32 {
        let mut v = values.to_vec();
        v.sort_by(f32::total_cmp);
        v[values.len().div_ceil(2) - 1]
    }

    #[test]
    fn median_split_even() {
        let s = median_split(&[3.0, 1.0, 2.0, 4.0], &[0, 1, 2, 3]).unwrap();
        assert_eq!(s.split, sort_oracle(&[3.0, 1.0, 2.0, 4.0]));
        assert_eq!(s.split, 2.0);
        assert_eq!(s.left, vec![1, 2]);
        assert_eq!(s.right, vec![0, 3]);
    }

    #[test]
    fn median_split_odd() {
        let s = median_split(&[5.0, 4.0, 3.0, 2.0, 1.0], &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(s.split, 3.0);
        assert_eq!((s.left.len(), s.right.len()), (3, 2));
    }

    #[test]
    fn median_split_ties_and_errors() {
        let s = median_split(&[7.0, 7.0], &[0, 1]).unwrap();
        assert_eq!((s.split, s.left, s.right), (7.0, vec![0, 1], vec![]));
        assert!(matches!(median_split(&[1.0], &[0]), Err(Error::Parameter(_))));
        assert!(median_split(&[1.0, 2.0], &[0]).is_err());
    }

    #[test]
    fn median_split_matches_sort_oracle() {
        let data = Dataset::gaussian(1, 101, 4).unwrap();
        for m in 2..=101 {
            let values = &data.as_slice()[..m];
            let idx: Vec<u32> = (0..m as u32).collect();
            let s = median_split(values, &idx).unwrap();
            assert_eq!(s.split, sort_oracle(values));
            assert_eq!(s.left.len(), m.div_ceil(2));
        }
    }

    #[test]
    fn grow_tree_base_case_and_one_level() {
        let p = ProjectionMatrix::new(5, 1, vec![1.0, 2.0, 3.0, 4.0, 0.0]).unwrap();
        assert_eq!(grow_tree(&p, vec![3, 1, 4], 1, 1).unwrap(), TreeNode::Leaf(vec![3, 1, 4]));
        let node = grow_tree(&p, vec![0, 1, 2, 3], 0, 1).unwrap();
        assert_eq!(
            node,
            TreeNode::Internal {
                split: 2.0,
                left: Box::new(TreeNode::Leaf(vec![0, 1])),
                right: Box::new(TreeNode::Leaf(vec![2, 3])),
            }
        );
    }

    #[test]
    fn degenerate_split_leaves_empty_right_subtree() {
        let p = ProjectionMatrix::new(4, 2, vec![7.0; 8]).unwrap();
        let root = grow_tree(&p, vec![0, 1, 2, 3], 0, 2).unwrap();
        let layout = TreeLayout::from_node(&root, 2).unwrap();
        assert_eq!(layout.leaf(0), &[0, 1, 2, 3]);
        assert!(layout.leaf(1).is_empty() && layout.leaf(2).is_empty() && layout.leaf(3).is_empty());
        assert_eq!(layout.splits()[2], f32::INFINITY);
        assert_eq!(layout.route(&[7.5, 0.0]), 2);
    }

    #[test]
    fn max_depth_is_floor_log2() {
        assert_eq!(max_depth(1), 0);
        assert_eq!(max_depth(8), 3);
        assert_eq!(max_depth(15), 3);
        assert_eq!(max_depth(16), 4);
    }

    #[test]
    fn eight_points_three_levels() {
        let data = Dataset::gaussian(8, 5, 1).unwrap();
        let index = MrptIndex::build(&data, IndexParams::new(2, 3, 1.0, 42)).unwrap();
        assert_eq!(index.num_trees(), 2);
        for tree in index.trees() {
            let mut all: Vec<u32> = tree.layout().leaves().flatten().copied().collect();
            assert!(tree.layout().leaves().all(|l| l.len() == 1));
            all.sort_unstable();
            assert_eq!(all, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn parameter_errors() {
        let data = Dataset::gaussian(8, 5, 1).unwrap();
        assert!(matches!(
            MrptIndex::build(&data, IndexParams::new(1, 4, 1.0, 0)),
            Err(Error::Depth { depth: 4, max: 3, n: 8 })
        ));
        assert!(matches!(
            MrptIndex::build(&data, IndexParams::new(1, 0, 1.0, 0)),
            Err(Error::Depth { .. })
        ));
        assert!(matches!(
            MrptIndex::build(&data, IndexParams::new(0, 2, 1.0, 0)),
            Err(Error::Parameter(_))
        ));
        assert!(MrptIndex::build(&data, IndexParams::new(1, 2, 0.0, 0)).is_err());
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let data = Dataset::gaussian(200, 12, 3).unwrap();
        let a = MrptIndex::build(&data, IndexParams::new(5, 4, 0.4, 9)).unwrap();
        let b = MrptIndex::build(&data, IndexParams::new(5, 4, 0.4, 9)).unwrap();
        assert_eq!(a, b);
        let small = MrptIndex::build(&data, IndexParams::new(3, 4, 0.4, 9)).unwrap();
        assert_eq!(small, a.truncated(3).unwrap());
        assert_ne!(a.trees()[0].matrix().to_dense(), a.trees()[1].matrix().to_dense());
    }

    #[test]
    fn layout_round_trips_through_node_view() {
        let data = Dataset::gaussian(50, 6, 3).unwrap();
        let index = MrptIndex::build(&data, IndexParams::new(1, 3, 0.5, 1)).unwrap();
        let layout = index.trees()[0].layout();
        assert_eq!(&TreeLayout::from_node(&layout.to_node(), 3).unwrap(), layout);
    }
}
