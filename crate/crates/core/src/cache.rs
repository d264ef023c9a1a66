//! Binary cache of a [`NeighborIndex`].
//!
//! Layout, all little-endian: magic `PTNI`, `n: u64`, `k: u64`, then for each
//! point its `k` neighbor ids (`u64`), `k` squared distances (`f64`), `beta`
//! (`f64`) and `L` (`f64`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::affinity::{is_degenerate, neighborhood_size, BandwidthKind, NeighborIndex};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PTNI";

pub fn write_index<W: Write>(mut out: W, index: &NeighborIndex) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(index.n as u64).to_le_bytes())?;
    out.write_all(&(index.k as u64).to_le_bytes())?;
    for i in 0..index.n {
        for &j in index.neighbors_of(i) {
            out.write_all(&(j as u64).to_le_bytes())?;
        }
        for &d in index.dist2_of(i) {
            out.write_all(&d.to_le_bytes())?;
        }
        out.write_all(&index.beta[i].to_le_bytes())?;
        out.write_all(&index.radius[i].to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| Error::Cache(format!("truncated file: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    read_u64(r).map(f64::from_bits)
}

/// Reads a cached index that was calibrated for `ppx`. The perplexity is not
/// part of the file, so the neighborhood size must agree with `round(3 ppx)`.
pub fn read_index<R: Read>(mut input: R, ppx: f64) -> Result<NeighborIndex> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|_| Error::Cache("missing header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let n = read_u64(&mut input)? as usize;
    let k = read_u64(&mut input)? as usize;
    if k != neighborhood_size(ppx) {
        return Err(Error::Cache(format!(
            "cached neighborhood size {k} does not match perplexity {ppx}"
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::Cache(format!("inconsistent sizes n={n} k={k}")));
    }
    let mut index = NeighborIndex {
        ppx,
        n,
        k,
        neighbors: Vec::with_capacity(n * k),
        dist2: Vec::with_capacity(n * k),
        beta: Vec::with_capacity(n),
        radius: Vec::with_capacity(n),
        kind: Vec::with_capacity(n),
    };
    for _ in 0..n {
        for _ in 0..k {
            let j = read_u64(&mut input)? as usize;
            if j >= n {
                return Err(Error::Cache(format!("neighbor id {j} out of range")));
            }
            index.neighbors.push(j);
        }
        let start = index.dist2.len();
        for _ in 0..k {
            index.dist2.push(read_f64(&mut input)?);
        }
        let beta = read_f64(&mut input)?;
        let kind = if is_degenerate(&index.dist2[start..]) {
            BandwidthKind::LambertW
        } else if beta == 0.0 {
            BandwidthKind::Uniform
        } else {
            BandwidthKind::Searched
        };
        index.beta.push(beta);
        index.radius.push(read_f64(&mut input)?);
        index.kind.push(kind);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Cache("trailing bytes".into()));
    }
    Ok(index)
}

pub fn save(path: &Path, index: &NeighborIndex) -> Result<()> {
    write_index(BufWriter::new(File::create(path)?), index)
}

pub fn load(path: &Path, ppx: f64) -> Result<NeighborIndex> {
    read_index(BufReader::new(File::open(path)?), ppx)
}
