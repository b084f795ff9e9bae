//! Ground truth, recall and the recall/latency sweep.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::distance::euclidean_distance;
use crate::error::{check_len, Error, Result};
use crate::index::{IndexParams, MrptIndex};
use crate::io;
use crate::query::{Neighbor, NeighborList, Searcher};
use crate::sparse::default_sparsity;

/// Exact k-NN by scanning and fully sorting every point.
pub fn brute_force_knn(q: &[f32], k: usize, data: &Dataset) -> Result<NeighborList> {
    check_len("query length", data.dim(), q.len())?;
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let mut all = data
        .rows()
        .enumerate()
        .map(|(i, row)| {
            Ok(Neighbor {
                index: i as u32,
                distance: euclidean_distance(q, row)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
    all.truncate(k);
    Ok(NeighborList::from_unsorted(all))
}

/// `|A ∩ K| / |K|` over point indices; distances are ignored.
///
/// An empty `truth` yields 1.0.
pub fn recall(approx: &NeighborList, truth: &NeighborList) -> f64 {
    recall_indices(&approx.indices(), &truth.indices())
}

pub fn recall_indices(approx: &[u32], truth: &[u32]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let hits = truth.iter().filter(|t| approx.contains(t)).count();
    hits as f64 / truth.len() as f64
}

/// Exact neighbors of every query, tagged with the checksums they were
/// computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub k: usize,
    pub data_checksum: u64,
    pub query_checksum: u64,
    pub neighbors: Vec<NeighborList>,
}

impl GroundTruth {
    /// Brute force over all queries, parallel across queries.
    pub fn compute(data: &Dataset, queries: &Dataset, k: usize) -> Result<Self> {
        check_len("query dimension", data.dim(), queries.dim())?;
        let neighbors = (0..queries.len())
            .into_par_iter()
            .map(|i| brute_force_knn(queries.row(i), k, data))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            k,
            data_checksum: data.checksum(),
            query_checksum: queries.checksum(),
            neighbors,
        })
    }

    pub fn matches(&self, data: &Dataset, queries: &Dataset, k: usize) -> bool {
        self.k == k
            && self.neighbors.len() == queries.len()
            && self.data_checksum == data.checksum()
            && self.query_checksum == queries.checksum()
    }
}

/// On-disk ground truth keyed by `(dataset checksum, query checksum, k)`.
#[derive(Clone, Debug)]
pub struct GroundTruthCache {
    dir: PathBuf,
}

impl GroundTruthCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, data: &Dataset, queries: &Dataset, k: usize) -> PathBuf {
        self.dir.join(format!(
            "gt-{:016x}-{:016x}-k{k}.bin",
            data.checksum(),
            queries.checksum()
        ))
    }

    /// Loads a cached entry or computes and stores a fresh one.
    pub fn get_or_compute(&self, data: &Dataset, queries: &Dataset, k: usize) -> Result<GroundTruth> {
        let path = self.path_for(data, queries, k);
        if path.exists() {
            if let Ok(gt) = io::read_ground_truth(&path) {
                if gt.matches(data, queries, k) {
                    return Ok(gt);
                }
            }
        }
        let gt = GroundTruth::compute(data, queries, k)?;
        std::fs::create_dir_all(&self.dir)?;
        io::write_ground_truth(&path, &gt)?;
        Ok(gt)
    }
}

/// One configuration of the sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub trees: usize,
    pub depth: usize,
    /// `None` selects `1/√d`.
    pub sparsity: Option<f64>,
    pub votes: usize,
}

impl GridPoint {
    pub fn new(trees: usize, depth: usize, sparsity: Option<f64>, votes: usize) -> Self {
        Self {
            trees,
            depth,
            sparsity,
            votes,
        }
    }

    /// Cartesian product in `trees`, `depth`, `sparsity`, `votes` order
    /// (votes vary fastest). Points with `votes > trees` are skipped.
    pub fn product(
        trees: &[usize],
        depths: &[usize],
        sparsities: &[Option<f64>],
        votes: &[usize],
    ) -> Vec<Self> {
        let mut out = Vec::new();
        for &t in trees {
            for &l in depths {
                for &a in sparsities {
                    for &v in votes.iter().filter(|&&v| v <= t) {
                        out.push(Self::new(t, l, a, v));
                    }
                }
            }
        }
        out
    }
}

/// Measured outcome of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkRecord {
    pub trees: usize,
    pub depth: usize,
    pub sparsity: f64,
    pub votes: usize,
    pub k: usize,
    /// Mean recall over queries.
    pub recall: f64,
    /// Wall time for the whole query set (best of the repeats).
    pub query_time_s: f64,
    pub mean_candidates: f64,
    pub build_time_s: f64,
    pub memory_bytes: usize,
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub seed: u64,
    /// Timing repeats; the minimum is reported.
    pub repeats: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { seed: 0, repeats: 3 }
    }
}

/// Result for one grid point; failures do not abort the sweep.
pub type GridOutcome = (GridPoint, Result<BenchmarkRecord>);

/// Computes ground truth once, then sweeps `grid`.
pub fn run_benchmark(
    data: &Dataset,
    queries: &Dataset,
    k: usize,
    grid: &[GridPoint],
    seed: u64,
) -> Result<Vec<GridOutcome>> {
    let gt = GroundTruth::compute(data, queries, k)?;
    run_benchmark_with(data, queries, &gt, grid, &BenchOptions { seed, ..Default::default() })
}

/// Sweeps `grid` against precomputed ground truth, in grid order.
///
/// Consecutive points that differ only in `votes` share one build.
pub fn run_benchmark_with(
    data: &Dataset,
    queries: &Dataset,
    gt: &GroundTruth,
    grid: &[GridPoint],
    opts: &BenchOptions,
) -> Result<Vec<GridOutcome>> {
    if grid.is_empty() {
        return Err(Error::Parameter("benchmark grid is empty".into()));
    }
    check_len("query dimension", data.dim(), queries.dim())?;
    if !gt.matches(data, queries, gt.k) {
        return Err(Error::Integrity("ground truth does not belong to these datasets".into()));
    }

    let mut cached: Option<(IndexParams, MrptIndex, f64)> = None;
    let mut out = Vec::with_capacity(grid.len());
    for point in grid {
        let params = IndexParams::new(
            point.trees,
            point.depth,
            point.sparsity.unwrap_or_else(|| default_sparsity(data.dim())),
            opts.seed,
        );
        let reuse = matches!(&cached, Some((p, _, _)) if *p == params);
        if !reuse {
            cached = None;
            let start = Instant::now();
            match MrptIndex::build(data, params) {
                Ok(index) => cached = Some((params, index, start.elapsed().as_secs_f64())),
                Err(e) => {
                    out.push((*point, Err(e)));
                    continue;
                }
            }
        }
        let (_, index, build_time_s) = cached.as_ref().expect("index built above");
        let record = measure(data, queries, gt, index, point.votes, opts.repeats).map(
            |(recall, query_time_s, mean_candidates)| BenchmarkRecord {
                trees: params.trees,
                depth: params.depth,
                sparsity: params.sparsity,
                votes: point.votes,
                k: gt.k,
                recall,
                query_time_s,
                mean_candidates,
                build_time_s: *build_time_s,
                memory_bytes: index.memory_bytes(),
            },
        );
        out.push((*point, record));
    }
    Ok(out)
}

fn measure(
    data: &Dataset,
    queries: &Dataset,
    gt: &GroundTruth,
    index: &MrptIndex,
    votes: usize,
    repeats: usize,
) -> Result<(f64, f64, f64)> {
    let mut searcher = Searcher::new(index, data)?;
    let mut best = f64::INFINITY;
    let mut recall_sum = 0.0;
    let mut candidate_sum = 0usize;
    for rep in 0..repeats.max(1) {
        let start = Instant::now();
        for (i, q) in queries.rows().enumerate() {
            let outcome = searcher.search(q, gt.k, votes)?;
            if rep == 0 {
                recall_sum += recall(&outcome.neighbors, &gt.neighbors[i]);
                candidate_sum += outcome.candidates;
            }
        }
        best = best.min(start.elapsed().as_secs_f64());
    }
    let nq = queries.len() as f64;
    Ok((recall_sum / nq, best, candidate_sum as f64 / nq))
}

/// Records not dominated in (higher recall, lower query time), by recall
/// ascending.
pub fn pareto_frontier(records: &[BenchmarkRecord]) -> Vec<BenchmarkRecord> {
    let mut order: Vec<&BenchmarkRecord> = records.iter().collect();
    order.sort_by(|a, b| {
        b.recall
            .total_cmp(&a.recall)
            .then(a.query_time_s.total_cmp(&b.query_time_s))
    });
    let mut kept = Vec::new();
    let mut best_above = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let group_recall = order[i].recall;
        let group_min = order[i].query_time_s;
        let mut j = i;
        while j < order.len() && order[j].recall == group_recall {
            if order[j].query_time_s == group_min && group_min < best_above {
                kept.push(order[j].clone());
            }
            j += 1;
        }
        best_above = best_above.min(group_min);
        i = j;
    }
    kept.reverse();
    kept
}

/// Writes `records` to `path` as CSV.
pub fn write_records(path: &Path, records: &[BenchmarkRecord]) -> Result<()> {
    io::write_results_csv(path, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(ix: &[u32]) -> NeighborList {
        NeighborList::from_unsorted(
            ix.iter()
                .enumerate()
                .map(|(r, &i)| Neighbor {
                    index: i,
                    distance: r as f64,
                })
                .collect(),
        )
    }

    fn rec(recall: f64, time: f64) -> BenchmarkRecord {
        BenchmarkRecord {
            trees: 1,
            depth: 1,
            sparsity: 1.0,
            votes: 1,
            k: 10,
            recall,
            query_time_s: time,
            mean_candidates: 0.0,
            build_time_s: 0.0,
            memory_bytes: 0,
        }
    }

    #[test]
    fn brute_force_hand_example() {
        let data = Dataset::from_rows(&[[0.0f32, 0.0], [1.0, 0.0], [5.0, 0.0]]).unwrap();
        let nn = brute_force_knn(&[0.9, 0.0], 2, &data).unwrap();
        assert_eq!(nn.indices(), vec![1, 0]);
        let d = nn.distances();
        assert!((d[0] - 0.1).abs() < 1e-6 && (d[1] - 0.9).abs() < 1e-6);
        let all = brute_force_knn(&[5.0, 0.0], 3, &data).unwrap();
        assert_eq!(all.indices(), vec![2, 1, 0]);
        assert_eq!(all.distances()[0], 0.0);
        assert!(brute_force_knn(&[0.0], 1, &data).is_err());
        assert!(brute_force_knn(&[0.0, 0.0], 0, &data).is_err());
    }

    #[test]
    fn recall_formula() {
        let truth = list(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(recall(&truth, &truth), 1.0);
        assert_eq!(recall(&list(&[0, 1, 2, 3, 4, 20, 21, 22, 23, 24]), &truth), 0.5);
        assert_eq!(recall(&list(&[30, 31]), &truth), 0.0);
    }

    #[test]
    fn pareto_small_cases() {
        let one = vec![rec(0.5, 1.0)];
        assert_eq!(pareto_frontier(&one), one);
        let two = vec![rec(0.5, 2.0), rec(0.9, 1.0)];
        assert_eq!(pareto_frontier(&two), vec![rec(0.9, 1.0)]);
    }

    fn dominated(r: &BenchmarkRecord, all: &[BenchmarkRecord]) -> bool {
        all.iter().any(|s| {
            s.recall >= r.recall
                && s.query_time_s <= r.query_time_s
                && (s.recall > r.recall || s.query_time_s < r.query_time_s)
        })
    }

    #[test]
    fn pareto_matches_dominance_oracle() {
        let crafted = vec![
            rec(0.60, 1.0),
            rec(0.80, 2.0),
            rec(0.70, 2.5),
            rec(0.95, 5.0),
            rec(0.80, 3.0),
        ];
        let front = pareto_frontier(&crafted);
        assert_eq!(front, vec![rec(0.60, 1.0), rec(0.80, 2.0), rec(0.95, 5.0)]);

        let data = Dataset::gaussian(60, 2, 17).unwrap();
        let mut records: Vec<_> = data
            .rows()
            .map(|r| rec((r[0].abs() as f64 * 4.0).round() / 10.0, (r[1].abs() as f64 * 4.0).round()))
            .collect();
        records.push(records[0].clone());
        let front = pareto_frontier(&records);
        let mut want: Vec<_> = records.iter().filter(|r| !dominated(r, &records)).cloned().collect();
        want.sort_by(|a, b| a.recall.total_cmp(&b.recall).then(a.query_time_s.total_cmp(&b.query_time_s)));
        let mut got = front.clone();
        got.sort_by(|a, b| a.recall.total_cmp(&b.recall).then(a.query_time_s.total_cmp(&b.query_time_s)));
        assert_eq!(got, want);
        assert!(front.windows(2).all(|w| w[0].recall <= w[1].recall));
    }

    #[test]
    fn grid_product_order() {
        let g = GridPoint::product(&[1, 4], &[3], &[None], &[1, 2]);
        assert_eq!(
            g,
            vec![
                GridPoint::new(1, 3, None, 1),
                GridPoint::new(4, 3, None, 1),
                GridPoint::new(4, 3, None, 2),
            ]
        );
    }

    #[test]
    fn failed_points_do_not_abort_sweep() {
        let data = Dataset::gaussian(200, 8, 1).unwrap();
        let queries = Dataset::gaussian(10, 8, 2).unwrap();
        let grid = [GridPoint::new(1, 0, None, 1), GridPoint::new(4, 3, None, 2)];
        let out = run_benchmark(&data, &queries, 5, &grid, 0).unwrap();
        assert!(matches!(out[0].1, Err(Error::Depth { .. })));
        let ok = out[1].1.as_ref().unwrap();
        assert!((0.0..=1.0).contains(&ok.recall));
        assert!(run_benchmark(&data, &queries, 5, &[], 0).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = GroundTruthCache::new(dir.path().join("gt"));
        let data = Dataset::gaussian(100, 4, 1).unwrap();
        let queries = Dataset::gaussian(5, 4, 2).unwrap();
        let first = cache.get_or_compute(&data, &queries, 3).unwrap();
        assert!(cache.path_for(&data, &queries, 3).exists());
        let second = cache.get_or_compute(&data, &queries, 3).unwrap();
        assert_eq!(first, second);
    }
}
