//! Parameter grids for `mrpt bench`.
//!
//! Inline form: `T=10,20;depth=5..7;votes=1..3;sparsity=auto,0.1`. Ranges
//! are inclusive. Omitted keys default to `votes=1` and `sparsity=auto`.
//!
//! File form: CSV with header `T,depth,sparsity,votes`, one grid point per
//! row; `sparsity` may be `auto`.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mrpt::GridPoint;

pub fn parse_grid(text: &str) -> Result<Vec<GridPoint>> {
    let path = Path::new(text);
    let grid = if path.is_file() {
        read_grid_file(path)?
    } else {
        parse_inline(text)?
    };
    if grid.is_empty() {
        bail!("grid {text:?} contains no valid points");
    }
    Ok(grid)
}

fn parse_inline(text: &str) -> Result<Vec<GridPoint>> {
    let mut trees = None;
    let mut depths = None;
    let mut votes = vec![1];
    let mut sparsities = vec![None];
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("grid term {part:?} is not key=values"))?;
        match key.trim() {
            "T" | "trees" => trees = Some(parse_counts(values)?),
            "depth" | "l" => depths = Some(parse_counts(values)?),
            "votes" | "v" => votes = parse_counts(values)?,
            "sparsity" | "a" => sparsities = parse_sparsities(values)?,
            other => bail!("unknown grid key {other:?}"),
        }
    }
    let trees = trees.ok_or_else(|| anyhow!("grid needs T=..."))?;
    let depths = depths.ok_or_else(|| anyhow!("grid needs depth=..."))?;
    Ok(GridPoint::product(&trees, &depths, &sparsities, &votes))
}

fn parse_counts(values: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in values.split(',').map(str::trim) {
        if let Some((lo, hi)) = item.split_once("..") {
            let lo: usize = lo.trim().parse().with_context(|| format!("bad range start in {item:?}"))?;
            let hi: usize = hi.trim().parse().with_context(|| format!("bad range end in {item:?}"))?;
            if lo > hi {
                bail!("empty range {item:?}");
            }
            out.extend(lo..=hi);
        } else {
            out.push(item.parse().with_context(|| format!("bad count {item:?}"))?);
        }
    }
    Ok(out)
}

fn parse_sparsity(item: &str) -> Result<Option<f64>> {
    let item = item.trim();
    if item.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        Ok(Some(item.parse().with_context(|| format!("bad sparsity {item:?}"))?))
    }
}

fn parse_sparsities(values: &str) -> Result<Vec<Option<f64>>> {
    values.split(',').map(parse_sparsity).collect()
}

fn read_grid_file(path: &Path) -> Result<Vec<GridPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading grid file {}", path.display()))?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("grid file lacks column {name:?}"))
    };
    let (ct, cl, ca, cv) = (col("T")?, col("depth")?, col("sparsity")?, col("votes")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(GridPoint::new(
            rec[ct].parse().with_context(|| format!("bad T {:?}", &rec[ct]))?,
            rec[cl].parse().with_context(|| format!("bad depth {:?}", &rec[cl]))?,
            parse_sparsity(&rec[ca])?,
            rec[cv].parse().with_context(|| format!("bad votes {:?}", &rec[cv]))?,
        ));
    }
    Ok(out)
}
