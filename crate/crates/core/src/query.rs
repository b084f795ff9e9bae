//! Voting search over a finished index.
//!
//! A query is routed to one leaf in every tree. Each point in a reached leaf
//! gets one vote; points with at least `v` votes form the candidate set,
//! which is then scanned exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::dataset::Dataset;
use crate::distance::squared_euclidean;
use crate::error::{check_len, Error, Result};
use crate::index::{MrptIndex, RpTree};
use crate::sparse::project_query_counted;

/// A point index with its distance to the query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: u32,
    pub distance: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

// Max-heap ordering by (distance, index) for the bounded scan.
struct HeapEntry(Neighbor);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.key_cmp(&other.0)
    }
}

/// Neighbors in ascending distance, ties by ascending index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighborList(Vec<Neighbor>);

impl NeighborList {
    /// Sorts arbitrary entries into neighbor order.
    pub fn from_unsorted(mut entries: Vec<Neighbor>) -> Self {
        entries.sort_by(Neighbor::key_cmp);
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Neighbor> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Neighbor] {
        &self.0
    }

    pub fn indices(&self) -> Vec<u32> {
        self.0.iter().map(|nb| nb.index).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.0.iter().map(|nb| nb.distance).collect()
    }
}

impl<'a> IntoIterator for &'a NeighborList {
    type Item = &'a Neighbor;
    type IntoIter = std::slice::Iter<'a, Neighbor>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Per-point vote counters `F(x; q)`, reset in O(touched) between queries.
///
/// A counter is live only if its stamp equals the current epoch; bumping the
/// epoch invalidates every counter at once.
#[derive(Clone, Debug)]
pub struct VoteAccumulator {
    counts: Vec<u32>,
    stamps: Vec<u32>,
    epoch: u32,
    touched: Vec<u32>,
    total: u64,
}

impl VoteAccumulator {
    pub fn new(n: usize) -> Self {
        Self {
            counts: vec![0; n],
            stamps: vec![0; n],
            epoch: 1,
            touched: Vec::new(),
            total: 0,
        }
    }

    pub fn reset(&mut self) {
        self.touched.clear();
        self.total = 0;
        if self.epoch == u32::MAX {
            self.stamps.fill(0);
            self.epoch = 1;
        } else {
            self.epoch += 1;
        }
    }

    /// Adds one vote for `point` and returns its new count.
    #[inline]
    pub fn add(&mut self, point: u32) -> u32 {
        let i = point as usize;
        self.total += 1;
        if self.stamps[i] != self.epoch {
            self.stamps[i] = self.epoch;
            self.counts[i] = 1;
            self.touched.push(point);
            1
        } else {
            self.counts[i] += 1;
            self.counts[i]
        }
    }

    #[inline]
    pub fn count(&self, point: usize) -> u32 {
        if self.stamps[point] == self.epoch {
            self.counts[point]
        } else {
            0
        }
    }

    /// Points with at least one vote, in first-touch order.
    pub fn touched(&self) -> &[u32] {
        &self.touched
    }

    /// Total votes cast since the last reset.
    pub fn total_votes(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Points that shared a leaf with the query in at least `v` trees, in the
/// order they reached the threshold.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CandidateSet {
    indices: Vec<u32>,
}

impl CandidateSet {
    pub fn new(indices: Vec<u32>) -> Self {
        Self { indices }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Routes `q` down `tree` and returns the contents of the reached leaf.
pub fn tree_query<'t>(q: &[f32], tree: &'t RpTree) -> Result<&'t [u32]> {
    let (p, _) = project_query_counted(q, tree.matrix())?;
    let layout = tree.layout();
    Ok(layout.leaf(layout.route(&p)))
}

/// Exact k-NN restricted to `candidates`, by linear scan.
///
/// Returns `min(k, |candidates|)` neighbors; repeated candidates count once.
pub fn exact_knn_in_set(q: &[f32], k: usize, candidates: &[u32], data: &Dataset) -> Result<NeighborList> {
    check_len("query length", data.dim(), q.len())?;
    if let Some(&bad) = candidates.iter().find(|&&i| i as usize >= data.len()) {
        return Err(Error::Integrity(format!(
            "candidate {bad} out of range for n = {}",
            data.len()
        )));
    }
    let mut distinct = candidates.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    Ok(scan(q, k, &distinct, data))
}

/// Bounded scan over distinct, in-range candidates.
fn scan(q: &[f32], k: usize, candidates: &[u32], data: &Dataset) -> NeighborList {
    if k == 0 {
        return NeighborList::default();
    }
    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
    for &i in candidates {
        let candidate = Neighbor {
            index: i,
            distance: squared_euclidean(q, data.row(i as usize)).sqrt(),
        };
        if heap.len() < k {
            heap.push(HeapEntry(candidate));
        } else if let Some(worst) = heap.peek() {
            if candidate.key_cmp(&worst.0) == Ordering::Less {
                heap.pop();
                heap.push(HeapEntry(candidate));
            }
        }
    }
    let mut entries: Vec<Neighbor> = heap.into_iter().map(|e| e.0).collect();
    entries.sort_by(Neighbor::key_cmp);
    NeighborList(entries)
}

/// Answer to an approximate query plus what it cost.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub neighbors: NeighborList,
    /// Size of the candidate set `|S|`.
    pub candidates: usize,
    /// How many of the requested `k` neighbors could not be returned.
    pub deficit: usize,
    /// Multiply-adds spent projecting the query onto every tree.
    pub projection_macs: u64,
}

/// Reusable query state bound to one index and its dataset.
pub struct Searcher<'a> {
    index: &'a MrptIndex,
    data: &'a Dataset,
    votes: VoteAccumulator,
    candidates: Vec<u32>,
}

impl<'a> Searcher<'a> {
    /// Binds `index` to `data`, verifying the dataset checksum.
    pub fn new(index: &'a MrptIndex, data: &'a Dataset) -> Result<Self> {
        let actual = data.checksum();
        if actual != index.fingerprint() {
            return Err(Error::Checksum {
                expected: index.fingerprint(),
                actual,
            });
        }
        Ok(Self::new_unchecked(index, data))
    }

    fn new_unchecked(index: &'a MrptIndex, data: &'a Dataset) -> Self {
        Self {
            index,
            data,
            votes: VoteAccumulator::new(index.len()),
            candidates: Vec::new(),
        }
    }

    pub fn index(&self) -> &MrptIndex {
        self.index
    }

    fn check_votes(&self, v: usize) -> Result<()> {
        let t = self.index.num_trees();
        if v == 0 || v > t {
            return Err(Error::Parameter(format!("vote threshold {v} must lie in 1..={t}")));
        }
        Ok(())
    }

    /// Routes `q` through every tree and tallies votes; candidates with at
    /// least `v` votes are collected as they cross the threshold.
    fn collect(&mut self, q: &[f32], v: u32) -> Result<u64> {
        check_len("query length", self.index.dim(), q.len())?;
        self.votes.reset();
        self.candidates.clear();
        let mut macs = 0;
        for tree in self.index.trees() {
            let (p, m) = project_query_counted(q, tree.matrix())?;
            macs += m;
            let layout = tree.layout();
            for &point in layout.leaf(layout.route(&p)) {
                if self.votes.add(point) == v {
                    self.candidates.push(point);
                }
            }
        }
        Ok(macs)
    }

    /// Vote counts `F(x; q)` for every point.
    pub fn votes(&mut self, q: &[f32]) -> Result<&VoteAccumulator> {
        self.collect(q, u32::MAX)?;
        Ok(&self.votes)
    }

    pub fn candidates(&mut self, q: &[f32], v: usize) -> Result<CandidateSet> {
        self.check_votes(v)?;
        self.collect(q, v as u32)?;
        Ok(CandidateSet::new(self.candidates.clone()))
    }

    /// Approximate `k` nearest neighbors of `q` with vote threshold `v`.
    pub fn search(&mut self, q: &[f32], k: usize, v: usize) -> Result<SearchOutcome> {
        if k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        self.check_votes(v)?;
        let projection_macs = self.collect(q, v as u32)?;
        let neighbors = scan(q, k, &self.candidates, self.data);
        Ok(SearchOutcome {
            deficit: k.min(self.data.len()).saturating_sub(neighbors.len()),
            candidates: self.candidates.len(),
            neighbors,
            projection_macs,
        })
    }
}

/// One-shot voting search.
///
/// Checks only that `data` has the index's shape; use [`Searcher::new`] to
/// verify the checksum and to reuse the vote buffers across queries.
pub fn approximate_knn(
    q: &[f32],
    k: usize,
    index: &MrptIndex,
    data: &Dataset,
    v: usize,
) -> Result<SearchOutcome> {
    check_len("dataset size vs index", index.len(), data.len())?;
    check_len("dataset dimension vs index", index.dim(), data.dim())?;
    Searcher::new_unchecked(index, data).search(q, k, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{IndexParams, TreeLayout, TreeNode};
    use crate::sparse::SparseProjectionMatrix;

    fn hand_tree() -> RpTree {
        let root = TreeNode::Internal {
            split: 0.0,
            left: Box::new(TreeNode::Leaf(vec![0, 1])),
            right: Box::new(TreeNode::Leaf(vec![2, 3])),
        };
        let layout = TreeLayout::from_node(&root, 1).unwrap();
        let matrix = SparseProjectionMatrix::from_dense(2, 1, &[1.0, 0.0]).unwrap();
        RpTree::from_parts(matrix, layout)
    }

    #[test]
    fn hand_traced_routing() {
        let tree = hand_tree();
        assert_eq!(tree_query(&[-1.0, 5.0], &tree).unwrap(), &[0, 1]);
        // Boundary value goes left.
        assert_eq!(tree_query(&[0.0, 5.0], &tree).unwrap(), &[0, 1]);
        assert_eq!(tree_query(&[0.5, 5.0], &tree).unwrap(), &[2, 3]);
        assert!(matches!(tree_query(&[0.5], &tree), Err(Error::Shape { .. })));
    }

    #[test]
    fn below_every_split_reaches_leftmost_leaf() {
        let data = Dataset::gaussian(64, 4, 8).unwrap();
        let index = MrptIndex::build(&data, IndexParams::new(1, 4, 1.0, 3)).unwrap();
        let tree = &index.trees()[0];
        let layout = tree.layout();
        let p = vec![f32::MIN; 4];
        assert_eq!(layout.route(&p), 0);
        assert_eq!(layout.leaf(layout.route(&p)), layout.leaf(0));
    }

    #[test]
    fn data_points_route_to_their_own_leaf() {
        let data = Dataset::gaussian(300, 9, 5).unwrap();
        let index = MrptIndex::build(&data, IndexParams::new(4, 5, 0.5, 1)).unwrap();
        for tree in index.trees() {
            for i in 0..data.len() {
                assert!(tree_query(data.row(i), tree).unwrap().contains(&(i as u32)));
            }
        }
        let two = Dataset::gaussian(2, 3, 1).unwrap();
        let index = MrptIndex::build(&two, IndexParams::new(1, 1, 1.0, 1)).unwrap();
        for i in 0..2 {
            assert!(tree_query(two.row(i), &index.trees()[0]).unwrap().contains(&(i as u32)));
        }
    }

    #[test]
    fn accumulator_epochs() {
        let mut acc = VoteAccumulator::new(4);
        assert_eq!(acc.add(2), 1);
        assert_eq!(acc.add(2), 2);
        assert_eq!(acc.count(2), 2);
        acc.reset();
        assert_eq!(acc.count(2), 0);
        assert!(acc.touched().is_empty());
        acc.epoch = u32::MAX;
        acc.add(1);
        acc.reset();
        assert_eq!(acc.count(1), 0);
        assert_eq!(acc.add(1), 1);
    }

    #[test]
    fn exact_scan_edge_cases() {
        let data = Dataset::from_rows(&[[0.0f32, 0.0], [2.0, 0.0], [0.0, 2.0], [5.0, 5.0]]).unwrap();
        assert!(exact_knn_in_set(&[1.0, 1.0], 3, &[], &data).unwrap().is_empty());
        // (2, 0) and (0, 2) are equidistant from (2, 2).
        let nn = exact_knn_in_set(&[2.0, 2.0], 1, &[2, 1], &data).unwrap();
        assert_eq!(nn.indices(), vec![1]);
        assert!(matches!(
            exact_knn_in_set(&[1.0, 1.0], 1, &[4], &data),
            Err(Error::Integrity(_))
        ));
        let all = exact_knn_in_set(&[0.0, 0.0], 10, &[3, 2, 1, 0], &data).unwrap();
        assert_eq!(all.indices(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn search_parameter_errors() {
        let data = Dataset::gaussian(64, 4, 8).unwrap();
        let index = MrptIndex::build(&data, IndexParams::new(3, 3, 1.0, 3)).unwrap();
        let q = data.row(0);
        assert!(approximate_knn(q, 5, &index, &data, 0).is_err());
        assert!(approximate_knn(q, 5, &index, &data, 4).is_err());
        assert!(approximate_knn(q, 0, &index, &data, 1).is_err());
        let other = Dataset::gaussian(64, 4, 9).unwrap();
        assert!(matches!(Searcher::new(&index, &other), Err(Error::Checksum { .. })));
    }

    #[test]
    fn single_tree_equals_leaf_scan() {
        let data = Dataset::gaussian(500, 8, 2).unwrap();
        let index = MrptIndex::build(&data, IndexParams::new(1, 3, 0.5, 7)).unwrap();
        let queries = Dataset::gaussian(20, 8, 99).unwrap();
        for q in queries.rows() {
            let leaf = tree_query(q, &index.trees()[0]).unwrap();
            let got = approximate_knn(q, 10, &index, &data, 1).unwrap();
            assert_eq!(got.neighbors, exact_knn_in_set(q, 10, leaf, &data).unwrap());
            assert_eq!(got.candidates, leaf.len());
        }
    }

    #[test]
    fn deficit_when_candidates_run_short() {
        let data = Dataset::gaussian(256, 8, 2).unwrap();
        let index = MrptIndex::build(&data, IndexParams::new(8, 7, 0.5, 7)).unwrap();
        let q = Dataset::gaussian(1, 8, 3).unwrap();
        let out = approximate_knn(q.row(0), 10, &index, &data, 8).unwrap();
        assert!(out.candidates <= 2);
        assert_eq!(out.neighbors.len(), out.candidates);
        assert_eq!(out.deficit, 10 - out.candidates);
    }
}
