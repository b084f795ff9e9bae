//! Row-major point sets.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// `n` points in `d`-dimensional Euclidean space, stored row-major as `f32`.
///
/// Every coordinate is finite. Point `i` occupies `values[i * d..(i + 1) * d]`
/// and keeps index `i` for the lifetime of any index built over the dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    values: Vec<f32>,
}

impl Dataset {
    /// Wraps a row-major buffer of `values.len() / d` points.
    pub fn new(d: usize, values: Vec<f32>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Parameter("dimension d must be at least 1".into()));
        }
        if values.is_empty() {
            return Err(Error::Parameter("dataset must hold at least one point".into()));
        }
        if values.len() % d != 0 {
            return Err(Error::Shape {
                what: "buffer length not a multiple of d",
                expected: values.len().next_multiple_of(d),
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite coordinate at point {}, dimension {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self {
            n: values.len() / d,
            d,
            values,
        })
    }

    /// Builds a dataset from equal-length rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * d);
        for row in rows {
            let row = row.as_ref();
            crate::error::check_len("row length", d, row.len())?;
            values.extend_from_slice(row);
        }
        Self::new(d, values)
    }

    /// Standard-normal points; convenient for tests and benchmarks.
    pub fn gaussian(n: usize, d: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n * d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z as f32
            })
            .collect();
        Self::new(d, values)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    /// Always false; a dataset holds at least one point.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.d)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    /// Copies the given rows into a new dataset, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::Integrity(format!("row {i} out of range for n = {}", self.n)));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::new(self.d, values)
    }

    /// 64-bit FNV-1a over the little-endian bytes of every coordinate.
    pub fn checksum(&self) -> u64 {
        let mut hasher = FnvHasher::default();
        for v in &self.values {
            hasher.write(&v.to_le_bytes());
        }
        hasher.finish()
    }
}
