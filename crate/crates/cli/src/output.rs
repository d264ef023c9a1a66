//! Output files and the embedding reader.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ptsne::engine::{DebugRow, EmbeddingLayers};
use ptsne::KnpCurve;

use crate::error::{CliError, CliResult};

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Write { path: path.display().to_string(), source })
}

fn writer(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(path)?))
}

fn wrap(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Write { path: path.display().to_string(), source: e.into() }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.display().to_string(), source })
}

/// `id,layer,x,y` with 1-based layers, ordered by layer then id.
pub fn write_embedding(path: &Path, emb: &EmbeddingLayers) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["id", "layer", "x", "y"]).map_err(wrap(path))?;
    for (l, layer) in emb.layers.iter().enumerate() {
        for (i, p) in layer.iter().enumerate() {
            w.write_record([i.to_string(), (l + 1).to_string(), p[0].to_string(), p[1].to_string()])
                .map_err(wrap(path))?;
        }
    }
    w.flush().map_err(|source| CliError::Write { path: path.display().to_string(), source })
}

/// Per-thread costs, then the mean over threads under `thread=mean`.
pub fn write_costs(path: &Path, emb: &EmbeddingLayers) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["epoch", "thread", "pseudo_normalized_cost", "exact_z"]).map_err(wrap(path))?;
    for c in &emb.costs {
        let exact = c.exact_z.to_string();
        for (t, v) in c.per_thread.iter().enumerate() {
            w.write_record([c.epoch.to_string(), t.to_string(), v.to_string(), exact.clone()])
                .map_err(wrap(path))?;
        }
        w.write_record([c.epoch.to_string(), "mean".into(), c.global.to_string(), exact])
            .map_err(wrap(path))?;
    }
    w.flush().map_err(|source| CliError::Write { path: path.display().to_string(), source })
}

pub fn write_knp(path: &Path, curve: &KnpCurve) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["k", "preservation"]).map_err(wrap(path))?;
    for (k, v) in curve.ks.iter().zip(&curve.preservation) {
        w.write_record([k.to_string(), v.to_string()]).map_err(wrap(path))?;
    }
    w.flush().map_err(|source| CliError::Write { path: path.display().to_string(), source })
}

pub fn write_debug(path: &Path, rows: &[DebugRow]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["epoch", "iter", "cost", "diameter", "mean_gain"]).map_err(wrap(path))?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.stats.iter.to_string(),
            r.stats.cost.to_string(),
            r.stats.diameter.to_string(),
            r.stats.mean_gain.to_string(),
        ])
        .map_err(wrap(path))?;
    }
    w.flush().map_err(|source| CliError::Write { path: path.display().to_string(), source })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|source| CliError::Write { path: path.display().to_string(), source })
}

fn malformed(path: &Path, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("malformed embedding {} at line {line}: {msg}", path.display()))
}

/// Reads an `id,layer,x,y` file back into layers; every `(id, layer)` cell
/// must appear exactly once.
pub fn read_embedding(path: &Path) -> CliResult<EmbeddingLayers> {
    let file = File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> =
        rdr.headers().map_err(|e| malformed(path, 1, e))?.iter().map(str::to_owned).collect();
    if header != ["id", "layer", "x", "y"] {
        return Err(malformed(path, 1, "expected header id,layer,x,y"));
    }
    let mut cells: Vec<(usize, usize, [f64; 2])> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| malformed(path, line, e))?;
        if rec.len() != 4 {
            return Err(malformed(path, line, "expected 4 fields"));
        }
        let id: usize = rec[0].trim().parse().map_err(|_| malformed(path, line, "bad id"))?;
        let layer: usize = rec[1].trim().parse().map_err(|_| malformed(path, line, "bad layer"))?;
        let x: f64 = rec[2].trim().parse().map_err(|_| malformed(path, line, "bad x"))?;
        let y: f64 = rec[3].trim().parse().map_err(|_| malformed(path, line, "bad y"))?;
        if layer == 0 || !x.is_finite() || !y.is_finite() {
            return Err(malformed(path, line, "layer must be >= 1 and coordinates finite"));
        }
        cells.push((id, layer - 1, [x, y]));
    }
    if cells.is_empty() {
        return Err(malformed(path, 1, "no points"));
    }
    let n = cells.iter().map(|c| c.0).max().unwrap() + 1;
    let l = cells.iter().map(|c| c.1).max().unwrap() + 1;
    let mut layers = vec![vec![[f64::NAN; 2]; n]; l];
    let mut seen = vec![false; n * l];
    for (id, layer, p) in cells {
        if std::mem::replace(&mut seen[layer * n + id], true) {
            return Err(malformed(path, 0, format!("duplicate point {id} in layer {}", layer + 1)));
        }
        layers[layer][id] = p;
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(malformed(path, 0, format!("point {} missing from layer {}", c % n, c / n + 1)));
    }
    Ok(EmbeddingLayers {
        layers,
        costs: Vec::new(),
        epoch_seconds: Vec::new(),
        pooling_seconds: Vec::new(),
        debug: Vec::new(),
    })
}
