//! Vector files, index persistence, ground truth and result CSVs.
//!
//! All binary formats are little-endian. Files are written to a temporary
//! sibling and renamed into place.
//!
//! Index file layout:
//!
//! ```text
//! magic        8 bytes  "MRPTIDX\0"
//! version      u32
//! n, d         u64, u64
//! trees, depth u32, u32
//! sparsity     f64
//! seed         u64
//! mode         u8       0 = Bernoulli, 1 = fixed count
//! checksum     u64      FNV-1a of the dataset
//! per tree:
//!   stream        u64
//!   nnz           u32
//!   col offsets   (depth + 1) × u32
//!   row ids       nnz × u32
//!   values        nnz × f32
//!   splits        (2^depth − 1) × f32
//!   leaf offsets  (2^depth + 1) × u32
//!   leaf indices  n × u32
//! ```

use std::fs::{self, File};
use std::io::{self as stdio, BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use tempfile::NamedTempFile;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{BenchmarkRecord, GroundTruth};
use crate::index::{IndexParams, MrptIndex, RpTree, TreeLayout};
use crate::query::{Neighbor, NeighborList};
use crate::sparse::{SparseProjectionMatrix, SparsityMode};

pub const INDEX_MAGIC: &[u8; 8] = b"MRPTIDX\0";
pub const INDEX_VERSION: u32 = 1;
const GT_MAGIC: &[u8; 8] = b"MRPTGT\0\x01";

/// Header of the benchmark results CSV.
pub const RESULTS_HEADER: [&str; 9] = [
    "T",
    "depth",
    "sparsity",
    "votes",
    "k",
    "recall",
    "qtime_s",
    "mean_candidates",
    "build_s",
];

/// On-disk vector encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorFormat {
    /// `i32` dimension then `d` × `f32` per record.
    Fvecs,
    /// `i32` dimension then `d` × `u8` per record.
    Bvecs,
    /// One comma-separated point per line, no header.
    Csv,
}

impl VectorFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

impl FromStr for VectorFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fvecs" => Ok(Self::Fvecs),
            "bvecs" => Ok(Self::Bvecs),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Parameter(format!("unknown vector format {other:?}"))),
        }
    }
}

fn truncated(e: stdio::Error, what: &str) -> Error {
    if e.kind() == stdio::ErrorKind::UnexpectedEof {
        Error::Format(format!("{what}: file truncated"))
    } else {
        Error::Io(e)
    }
}

/// Reads a dataset in the given format.
pub fn load_vectors(path: &Path, format: VectorFormat) -> Result<Dataset> {
    match format {
        VectorFormat::Fvecs | VectorFormat::Bvecs => {
            let bytes = fs::read(path)?;
            parse_vecs(&bytes, format == VectorFormat::Bvecs)
        }
        VectorFormat::Csv => read_csv_vectors(BufReader::new(File::open(path)?)),
    }
}

/// Parses an in-memory fvecs (`bytes = false`) or bvecs (`bytes = true`) buffer.
pub fn parse_vecs(buf: &[u8], bytes: bool) -> Result<Dataset> {
    let mut cur = Cursor::new(buf);
    let mut d: Option<usize> = None;
    let mut values = Vec::new();
    let mut record = 0usize;
    while (cur.position() as usize) < buf.len() {
        let dim = cur.read_i32::<LE>().map_err(|e| truncated(e, "vector header"))?;
        if dim <= 0 {
            return Err(Error::Format(format!("record {record}: non-positive dimension {dim}")));
        }
        let dim = dim as usize;
        match d {
            None => d = Some(dim),
            Some(expected) if expected != dim => {
                return Err(Error::Format(format!(
                    "record {record}: dimension {dim} differs from {expected}"
                )))
            }
            _ => {}
        }
        let width = if bytes { 1 } else { 4 };
        let remaining = buf.len() - cur.position() as usize;
        if remaining < dim * width {
            return Err(Error::Format(format!("record {record}: file truncated")));
        }
        for _ in 0..dim {
            let v = if bytes {
                cur.read_u8()? as f32
            } else {
                cur.read_f32::<LE>()?
            };
            values.push(v);
        }
        record += 1;
    }
    let d = d.ok_or_else(|| Error::Format("no vectors in file".into()))?;
    Dataset::new(d, values).map_err(|e| Error::Format(e.to_string()))
}

fn read_csv_vectors<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut d: Option<usize> = None;
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match d {
            None => d = Some(rec.len()),
            Some(expected) if expected != rec.len() => {
                return Err(Error::Format(format!(
                    "line {}: {} fields, expected {expected}",
                    line + 1,
                    rec.len()
                )))
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f32 = field
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad number {field:?}", line + 1)))?;
            values.push(v);
        }
    }
    let d = d.ok_or_else(|| Error::Format("no vectors in file".into()))?;
    Dataset::new(d, values).map_err(|e| Error::Format(e.to_string()))
}

fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<&mut File>) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Writes a dataset in the given format. Bvecs rejects values that are not
/// integers in `0..=255`.
pub fn save_vectors(path: &Path, data: &Dataset, format: VectorFormat) -> Result<()> {
    write_atomic(path, |w| {
        match format {
            VectorFormat::Fvecs => {
                for row in data.rows() {
                    w.write_i32::<LE>(row.len() as i32)?;
                    for &v in row {
                        w.write_f32::<LE>(v)?;
                    }
                }
            }
            VectorFormat::Bvecs => {
                for row in data.rows() {
                    w.write_i32::<LE>(row.len() as i32)?;
                    for &v in row {
                        if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                            return Err(Error::Format(format!("{v} is not representable as a byte")));
                        }
                        w.write_u8(v as u8)?;
                    }
                }
            }
            VectorFormat::Csv => {
                let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
                for row in data.rows() {
                    wtr.write_record(row.iter().map(|v| v.to_string()))?;
                }
                wtr.flush()?;
            }
        }
        Ok(())
    })
}

/// Serializes an index (without the dataset) to `w`.
pub fn write_index<W: Write>(mut w: W, index: &MrptIndex) -> Result<()> {
    let p = index.params();
    w.write_all(INDEX_MAGIC)?;
    w.write_u32::<LE>(INDEX_VERSION)?;
    w.write_u64::<LE>(index.len() as u64)?;
    w.write_u64::<LE>(index.dim() as u64)?;
    w.write_u32::<LE>(index.num_trees() as u32)?;
    w.write_u32::<LE>(p.depth as u32)?;
    w.write_f64::<LE>(p.sparsity)?;
    w.write_u64::<LE>(p.seed)?;
    w.write_u8(p.mode.tag())?;
    w.write_u64::<LE>(index.fingerprint())?;
    for tree in index.trees() {
        let m = tree.matrix();
        w.write_u64::<LE>(m.stream())?;
        w.write_u32::<LE>(m.nnz() as u32)?;
        for &o in m.col_offsets() {
            w.write_u32::<LE>(o)?;
        }
        for &r in m.row_ids() {
            w.write_u32::<LE>(r)?;
        }
        for &v in m.values() {
            w.write_f32::<LE>(v)?;
        }
        let layout = tree.layout();
        for &s in layout.splits() {
            w.write_f32::<LE>(s)?;
        }
        for &o in layout.leaf_offsets() {
            w.write_u32::<LE>(o)?;
        }
        for &i in layout.leaf_indices() {
            w.write_u32::<LE>(i)?;
        }
    }
    Ok(())
}

fn read_u32s(cur: &mut Cursor<&[u8]>, count: usize) -> Result<Vec<u32>> {
    ensure_remaining(cur, count * 4)?;
    (0..count)
        .map(|_| cur.read_u32::<LE>().map_err(|e| truncated(e, "index")))
        .collect()
}

fn read_f32s(cur: &mut Cursor<&[u8]>, count: usize) -> Result<Vec<f32>> {
    ensure_remaining(cur, count * 4)?;
    (0..count)
        .map(|_| cur.read_f32::<LE>().map_err(|e| truncated(e, "index")))
        .collect()
}

fn ensure_remaining(cur: &Cursor<&[u8]>, bytes: usize) -> Result<()> {
    let left = cur.get_ref().len().saturating_sub(cur.position() as usize);
    if left < bytes {
        return Err(Error::Format("index: file truncated".into()));
    }
    Ok(())
}

/// Parses an index buffer. No partial index is ever returned.
pub fn read_index(buf: &[u8]) -> Result<MrptIndex> {
    let mut cur = Cursor::new(buf);
    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic).map_err(|e| truncated(e, "index"))?;
    if &magic != INDEX_MAGIC {
        return Err(Error::Format("not an index file (bad magic)".into()));
    }
    let rd = |e| truncated(e, "index header");
    let version = cur.read_u32::<LE>().map_err(rd)?;
    if version != INDEX_VERSION {
        return Err(Error::Version {
            found: version,
            expected: INDEX_VERSION,
        });
    }
    let n = cur.read_u64::<LE>().map_err(rd)? as usize;
    let d = cur.read_u64::<LE>().map_err(rd)? as usize;
    let trees = cur.read_u32::<LE>().map_err(rd)? as usize;
    let depth = cur.read_u32::<LE>().map_err(rd)? as usize;
    let sparsity = cur.read_f64::<LE>().map_err(rd)?;
    let seed = cur.read_u64::<LE>().map_err(rd)?;
    let mode = SparsityMode::from_tag(cur.read_u8().map_err(rd)?)
        .ok_or_else(|| Error::Format("unknown sparsity mode".into()))?;
    let checksum = cur.read_u64::<LE>().map_err(rd)?;

    let params = IndexParams {
        trees,
        depth,
        sparsity,
        seed,
        mode,
    };
    if n == 0 || d == 0 || n > u32::MAX as usize || d > u32::MAX as usize || depth >= 32 {
        return Err(Error::Format(format!("implausible header: n = {n}, d = {d}, depth = {depth}")));
    }
    params
        .validate(n)
        .map_err(|e| Error::Format(format!("header: {e}")))?;

    let inner = (1usize << depth) - 1;
    let mut out = Vec::with_capacity(trees);
    for _ in 0..trees {
        let stream = cur.read_u64::<LE>().map_err(|e| truncated(e, "tree"))?;
        let nnz = cur.read_u32::<LE>().map_err(|e| truncated(e, "tree"))? as usize;
        if nnz > d * depth {
            return Err(Error::Format(format!("tree has {nnz} non-zeros, more than d·ℓ")));
        }
        let col_offsets = read_u32s(&mut cur, depth + 1)?;
        let row_ids = read_u32s(&mut cur, nnz)?;
        let values = read_f32s(&mut cur, nnz)?;
        let matrix = SparseProjectionMatrix::from_parts(
            d,
            depth,
            sparsity,
            seed,
            stream,
            mode,
            col_offsets,
            row_ids,
            values,
        )?;
        let splits = read_f32s(&mut cur, inner)?;
        let leaf_offsets = read_u32s(&mut cur, inner + 2)?;
        let leaf_indices = read_u32s(&mut cur, n)?;
        let layout = TreeLayout::from_parts(depth, splits, leaf_offsets, leaf_indices, n)?;
        out.push(RpTree::from_parts(matrix, layout));
    }
    if (cur.position() as usize) != buf.len() {
        return Err(Error::Format("trailing bytes after last tree".into()));
    }
    Ok(MrptIndex::from_parts(params, n, d, checksum, out))
}

pub fn save_index(index: &MrptIndex, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_index(w, index))
}

/// Loads an index and checks that it was built over `data`.
pub fn load_index(path: &Path, data: &Dataset) -> Result<MrptIndex> {
    let index = read_index(&fs::read(path)?)?;
    let actual = data.checksum();
    if index.fingerprint() != actual || index.len() != data.len() || index.dim() != data.dim() {
        return Err(Error::Checksum {
            expected: index.fingerprint(),
            actual,
        });
    }
    Ok(index)
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<()> {
    write_atomic(path, |w| {
        w.write_all(GT_MAGIC)?;
        w.write_u64::<LE>(gt.data_checksum)?;
        w.write_u64::<LE>(gt.query_checksum)?;
        w.write_u32::<LE>(gt.k as u32)?;
        w.write_u64::<LE>(gt.neighbors.len() as u64)?;
        for list in &gt.neighbors {
            w.write_u32::<LE>(list.len() as u32)?;
            for nb in list {
                w.write_u32::<LE>(nb.index)?;
                w.write_f64::<LE>(nb.distance)?;
            }
        }
        Ok(())
    })
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let buf = fs::read(path)?;
    let mut cur = Cursor::new(buf.as_slice());
    let rd = |e| truncated(e, "ground truth");
    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic).map_err(rd)?;
    if &magic != GT_MAGIC {
        return Err(Error::Format("not a ground-truth file".into()));
    }
    let data_checksum = cur.read_u64::<LE>().map_err(rd)?;
    let query_checksum = cur.read_u64::<LE>().map_err(rd)?;
    let k = cur.read_u32::<LE>().map_err(rd)? as usize;
    let nq = cur.read_u64::<LE>().map_err(rd)? as usize;
    let mut neighbors = Vec::with_capacity(nq.min(buf.len()));
    for _ in 0..nq {
        let len = cur.read_u32::<LE>().map_err(rd)? as usize;
        if len > k {
            return Err(Error::Format("ground-truth list longer than k".into()));
        }
        let mut entries = Vec::with_capacity(len);
        for _ in 0..len {
            entries.push(Neighbor {
                index: cur.read_u32::<LE>().map_err(rd)?,
                distance: cur.read_f64::<LE>().map_err(rd)?,
            });
        }
        neighbors.push(NeighborList::from_unsorted(entries));
    }
    if cur.position() as usize != buf.len() {
        return Err(Error::Format("trailing bytes in ground-truth file".into()));
    }
    Ok(GroundTruth {
        k,
        data_checksum,
        query_checksum,
        neighbors,
    })
}

/// Writes per-query neighbors as `query,rank,index,distance` rows.
pub fn write_neighbors_csv(path: &Path, lists: &[NeighborList]) -> Result<()> {
    write_atomic(path, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["query", "rank", "index", "distance"])?;
        for (q, list) in lists.iter().enumerate() {
            for (rank, nb) in list.iter().enumerate() {
                wtr.write_record([
                    q.to_string(),
                    rank.to_string(),
                    nb.index.to_string(),
                    nb.distance.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    })
}

pub fn write_results<W: Write>(w: W, records: &[BenchmarkRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(RESULTS_HEADER)?;
    for r in records {
        wtr.write_record([
            r.trees.to_string(),
            r.depth.to_string(),
            r.sparsity.to_string(),
            r.votes.to_string(),
            r.k.to_string(),
            r.recall.to_string(),
            r.query_time_s.to_string(),
            r.mean_candidates.to_string(),
            r.build_time_s.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_results_csv(path: &Path, records: &[BenchmarkRecord]) -> Result<()> {
    write_atomic(path, |w| write_results(w, records))
}

/// Parses a results CSV written by [`write_results`]. Memory estimates are
/// not part of the CSV and read back as zero.
pub fn read_results<R: Read>(r: R) -> Result<Vec<BenchmarkRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(RESULTS_HEADER) {
        return Err(Error::Format(format!("unexpected results header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Format(format!("bad value {:?} in column {}", &rec[i], RESULTS_HEADER[i])))
        };
        out.push(BenchmarkRecord {
            trees: num(0)? as usize,
            depth: num(1)? as usize,
            sparsity: num(2)?,
            votes: num(3)? as usize,
            k: num(4)? as usize,
            recall: num(5)?,
            query_time_s: num(6)?,
            mean_candidates: num(7)?,
            build_time_s: num(8)?,
            memory_bytes: 0,
        });
    }
    Ok(out)
}
