//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use mrpt::{Dataset, MrptIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact k-NN by computing every distance with a plain loop and sorting
/// `(distance, index)` pairs.
pub fn oracle_knn(q: &[f32], k: usize, data: &Dataset) -> Vec<u32> {
    let mut pairs: Vec<(f64, u32)> = (0..data.len())
        .map(|i| {
            let row = data.row(i);
            let mut acc = 0.0f64;
            for c in 0..row.len() {
                let t = q[c] as f64 - row[c] as f64;
                acc += t * t;
            }
            (acc.sqrt(), i as u32)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    pairs.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Leaf id of `x` in every tree, from a dense re-projection of `x`.
pub fn leaf_ids(x: &[f32], index: &MrptIndex) -> Vec<usize> {
    index
        .trees()
        .iter()
        .map(|tree| {
            let cols = tree.matrix().cols();
            let dense = tree.matrix().to_dense();
            let mut p = vec![0.0f32; cols];
            for (j, slot) in p.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for c in 0..x.len() {
                    acc += x[c] as f64 * dense[c * cols + j] as f64;
                }
                *slot = acc as f32;
            }
            let splits = tree.layout().splits();
            let mut node = 0usize;
            for &value in &p {
                node = if value <= splits[node] { 2 * node + 1 } else { 2 * node + 2 };
            }
            node - splits.len()
        })
        .collect()
}

/// Number of trees in which `x` and `q` land in the same leaf.
pub fn shared_leaves(x: &[f32], q: &[f32], index: &MrptIndex) -> u32 {
    leaf_ids(x, index)
        .into_iter()
        .zip(leaf_ids(q, index))
        .filter(|(a, b)| a == b)
        .count() as u32
}

/// Small-integer coordinates, so ties and duplicate points are common.
pub fn lattice_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * d).map(|_| rng.random_range(0..4) as f32).collect();
    Dataset::new(d, values).unwrap()
}

/// Splits one Gaussian sample into disjoint base and query sets.
pub fn gaussian_split(n: usize, nq: usize, d: usize, seed: u64) -> (Dataset, Dataset) {
    let all = Dataset::gaussian(n + nq, d, seed).unwrap();
    let base = all.select(&(0..n).collect::<Vec<_>>()).unwrap();
    let queries = all.select(&(n..n + nq).collect::<Vec<_>>()).unwrap();
    (base, queries)
}

/// `⌈√d⌉` by integer search, i.e. `⌈a·d⌉` for `a = 1/√d`.
pub fn ceil_sqrt(d: usize) -> usize {
    (1..).find(|m| m * m >= d).unwrap()
}
