//! Sparse random projection matrices and the projections they induce.
//!
//! A tree of depth `ℓ` owns one `d × ℓ` matrix whose column `j` is the random
//! direction shared by every node on level `j`. Entries are non-zero with
//! probability `a`, and non-zero entries are standard normal. Matrices are
//! stored column-compressed: each column keeps its sorted row ids and values.
//!
//! Randomness comes from ChaCha8 keyed by a 64-bit seed and a stream number,
//! so a matrix is reproducible from `(d, ℓ, a, seed, stream, mode)` on every
//! platform.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{check_len, Error, Result};

/// How non-zero positions are chosen within a column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SparsityMode {
    /// Each entry is independently non-zero with probability `a`.
    #[default]
    Bernoulli,
    /// Each column has exactly `⌈a·d⌉` non-zeros at uniformly chosen rows.
    /// Makes projection cost deterministic.
    FixedCount,
}

impl SparsityMode {
    pub(crate) fn tag(self) -> u8 {
        match self {
            SparsityMode::Bernoulli => 0,
            SparsityMode::FixedCount => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(SparsityMode::Bernoulli),
            1 => Some(SparsityMode::FixedCount),
            _ => None,
        }
    }
}

/// `⌈a·d⌉`, the per-column non-zero count used by [`SparsityMode::FixedCount`].
pub fn fixed_nonzeros(a: f64, d: usize) -> usize {
    ((a * d as f64).ceil() as usize).clamp(1, d)
}

/// Default sparsity `1/√d`.
pub fn default_sparsity(d: usize) -> f64 {
    1.0 / (d.max(1) as f64).sqrt()
}

pub(crate) fn check_sparsity(a: f64) -> Result<()> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::Parameter(format!("sparsity a = {a} must lie in (0, 1]")));
    }
    Ok(())
}

/// A `d × ℓ` sparse random matrix in compressed-column form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseProjectionMatrix {
    d: usize,
    cols: usize,
    a: f64,
    seed: u64,
    stream: u64,
    mode: SparsityMode,
    col_offsets: Vec<u32>,
    row_ids: Vec<u32>,
    values: Vec<f32>,
}

impl SparseProjectionMatrix {
    /// Samples a matrix from stream 0 of `seed` with Bernoulli sparsity.
    pub fn sample(d: usize, cols: usize, a: f64, seed: u64) -> Result<Self> {
        Self::sample_stream(d, cols, a, seed, 0, SparsityMode::Bernoulli)
    }

    /// Samples a matrix from an explicit `(seed, stream)` pair.
    pub fn sample_stream(
        d: usize,
        cols: usize,
        a: f64,
        seed: u64,
        stream: u64,
        mode: SparsityMode,
    ) -> Result<Self> {
        if d == 0 || cols == 0 {
            return Err(Error::Parameter(format!(
                "matrix shape {d} x {cols} must be at least 1 x 1"
            )));
        }
        if d > u32::MAX as usize {
            return Err(Error::Parameter(format!("dimension {d} exceeds u32 range")));
        }
        check_sparsity(a)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);

        let mut col_offsets = Vec::with_capacity(cols + 1);
        col_offsets.push(0u32);
        let mut row_ids = Vec::new();
        let mut values = Vec::new();

        match mode {
            SparsityMode::Bernoulli => {
                let gate = Bernoulli::new(a).map_err(|e| Error::Parameter(e.to_string()))?;
                for _ in 0..cols {
                    for row in 0..d {
                        if gate.sample(&mut rng) {
                            row_ids.push(row as u32);
                            values.push(normal(&mut rng));
                        }
                    }
                    col_offsets.push(row_ids.len() as u32);
                }
            }
            SparsityMode::FixedCount => {
                let per_col = fixed_nonzeros(a, d);
                for _ in 0..cols {
                    let mut rows = index::sample(&mut rng, d, per_col).into_vec();
                    rows.sort_unstable();
                    for row in rows {
                        row_ids.push(row as u32);
                        values.push(normal(&mut rng));
                    }
                    col_offsets.push(row_ids.len() as u32);
                }
            }
        }

        Ok(Self {
            d,
            cols,
            a,
            seed,
            stream,
            mode,
            col_offsets,
            row_ids,
            values,
        })
    }

    /// Builds a matrix from a dense row-major `d × cols` array, dropping zeros.
    pub fn from_dense(d: usize, cols: usize, dense: &[f32]) -> Result<Self> {
        check_len("dense matrix length", d * cols, dense.len())?;
        if d == 0 || cols == 0 {
            return Err(Error::Parameter("matrix must be at least 1 x 1".into()));
        }
        let mut col_offsets = vec![0u32];
        let mut row_ids = Vec::new();
        let mut values = Vec::new();
        for j in 0..cols {
            for i in 0..d {
                let v = dense[i * cols + j];
                if v != 0.0 {
                    row_ids.push(i as u32);
                    values.push(v);
                }
            }
            col_offsets.push(row_ids.len() as u32);
        }
        let a = (row_ids.len() as f64 / (d * cols) as f64).max(f64::MIN_POSITIVE);
        Ok(Self {
            d,
            cols,
            a,
            seed: 0,
            stream: 0,
            mode: SparsityMode::Bernoulli,
            col_offsets,
            row_ids,
            values,
        })
    }

    /// Reassembles a matrix from its stored parts, validating the layout.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        d: usize,
        cols: usize,
        a: f64,
        seed: u64,
        stream: u64,
        mode: SparsityMode,
        col_offsets: Vec<u32>,
        row_ids: Vec<u32>,
        values: Vec<f32>,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::Format(format!("sparse matrix: {msg}")));
        if col_offsets.len() != cols + 1 || col_offsets[0] != 0 {
            return bad("bad column offsets");
        }
        if col_offsets.windows(2).any(|w| w[0] > w[1]) {
            return bad("column offsets not monotone");
        }
        if *col_offsets.last().unwrap() as usize != row_ids.len() || row_ids.len() != values.len() {
            return bad("offsets disagree with entry count");
        }
        if row_ids.iter().any(|&r| r as usize >= d) {
            return bad("row id out of range");
        }
        if values.iter().any(|v| !v.is_finite() || *v == 0.0) {
            return bad("stored value is zero or non-finite");
        }
        Ok(Self {
            d,
            cols,
            a,
            seed,
            stream,
            mode,
            col_offsets,
            row_ids,
            values,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn sparsity(&self) -> f64 {
        self.a
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn mode(&self) -> SparsityMode {
        self.mode
    }

    /// Number of stored (non-zero) entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row ids and values of column `j`.
    pub fn column(&self, j: usize) -> (&[u32], &[f32]) {
        let lo = self.col_offsets[j] as usize;
        let hi = self.col_offsets[j + 1] as usize;
        (&self.row_ids[lo..hi], &self.values[lo..hi])
    }

    pub(crate) fn col_offsets(&self) -> &[u32] {
        &self.col_offsets
    }

    pub(crate) fn row_ids(&self) -> &[u32] {
        &self.row_ids
    }

    pub(crate) fn values(&self) -> &[f32] {
        &self.values
    }

    /// Dense row-major copy, mainly for tests.
    pub fn to_dense(&self) -> Vec<f32> {
        let mut dense = vec![0.0; self.d * self.cols];
        for j in 0..self.cols {
            let (rows, vals) = self.column(j);
            for (&r, &v) in rows.iter().zip(vals) {
                dense[r as usize * self.cols + j] = v;
            }
        }
        dense
    }

    /// Column `j` dotted with `x`, accumulated in `f64`, plus the multiply-add count.
    #[inline]
    fn dot_column(&self, j: usize, x: &[f32]) -> (f64, u64) {
        let (rows, vals) = self.column(j);
        let mut acc = 0.0f64;
        let mut macs = 0u64;
        for (&r, &v) in rows.iter().zip(vals) {
            acc += x[r as usize] as f64 * v as f64;
            macs += 1;
        }
        (acc, macs)
    }

    /// `out[j] = Σ_c x[c]·R[c, j]`; returns the number of multiply-adds.
    #[inline]
    fn project_into(&self, x: &[f32], out: &mut [f32]) -> u64 {
        debug_assert_eq!(x.len(), self.d);
        debug_assert_eq!(out.len(), self.cols);
        let mut macs = 0u64;
        for (j, slot) in out.iter_mut().enumerate() {
            let (acc, m) = self.dot_column(j, x);
            *slot = acc as f32;
            macs += m;
        }
        macs
    }
}

fn normal<R: Rng>(rng: &mut R) -> f32 {
    let z: f64 = StandardNormal.sample(rng);
    z as f32
}

/// Dense `n × ℓ` matrix of projected coordinates, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix {
    n: usize,
    cols: usize,
    values: Vec<f32>,
}

impl ProjectionMatrix {
    /// Wraps precomputed projections (row-major `n × cols`).
    pub fn new(n: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        check_len("projection buffer length", n * cols, values.len())?;
        Ok(Self { n, cols, values })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// `P = X·R` in a single pass over the dataset.
pub fn project_dataset(x: &Dataset, r: &SparseProjectionMatrix) -> Result<ProjectionMatrix> {
    project_dataset_counted(x, r).map(|(p, _)| p)
}

/// As [`project_dataset`], also returning the multiply-add count.
pub fn project_dataset_counted(
    x: &Dataset,
    r: &SparseProjectionMatrix,
) -> Result<(ProjectionMatrix, u64)> {
    check_len("projection matrix rows vs data dimension", x.dim(), r.rows())?;
    let cols = r.cols();
    let mut values = vec![0.0f32; x.len() * cols];
    let mut macs = 0u64;
    for (row, out) in x.rows().zip(values.chunks_exact_mut(cols)) {
        macs += r.project_into(row, out);
    }
    Ok((
        ProjectionMatrix {
            n: x.len(),
            cols,
            values,
        },
        macs,
    ))
}

/// `p = qᵀR`, summed in the same order as [`project_dataset`].
pub fn project_query(q: &[f32], r: &SparseProjectionMatrix) -> Result<Vec<f32>> {
    project_query_counted(q, r).map(|(p, _)| p)
}

pub fn project_query_counted(q: &[f32], r: &SparseProjectionMatrix) -> Result<(Vec<f32>, u64)> {
    check_len("query length", r.rows(), q.len())?;
    let mut out = vec![0.0f32; r.cols()];
    let macs = r.project_into(q, &mut out);
    Ok((out, macs))
}

/// `qᵀR` before rounding to `f32` storage precision.
pub fn project_query_wide(q: &[f32], r: &SparseProjectionMatrix) -> Result<Vec<f64>> {
    check_len("query length", r.rows(), q.len())?;
    Ok((0..r.cols()).map(|j| r.dot_column(j, q).0).collect())
}
