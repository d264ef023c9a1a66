//! Dataset ingestion: headed numeric CSV and MatrixMarket coordinate files.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::data::DataSet;
use crate::error::{Error, Result};

/// A parsed CSV table: features plus an optional label column.
#[derive(Clone, Debug)]
pub struct Table {
    pub data: DataSet,
    pub columns: Vec<String>,
    pub labels: Option<Vec<String>>,
}

/// Reads a headed CSV. If `label_column` is given, that column is taken out
/// of the feature matrix and returned as labels.
pub fn read_csv<R: Read>(reader: R, label_column: Option<&str>) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let label_idx = match label_column {
        Some(name) => Some(header.iter().position(|h| h == name).ok_or_else(|| {
            Error::InvalidData(format!("label column {name:?} not found in header"))
        })?),
        None => None,
    };
    let columns: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(c, _)| Some(*c) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut n = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let line = r + 2;
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} cells, found {}", header.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_idx {
                labels.as_mut().unwrap().push(cell.to_owned());
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("non-numeric cell {cell:?} in column {:?}", header[c]),
            })?;
            values.push(v);
        }
        n += 1;
    }
    let data = DataSet::dense(n, columns.len(), values)?;
    Ok(Table { data, columns, labels })
}

pub fn read_csv_path(path: &Path, label_column: Option<&str>) -> Result<Table> {
    read_csv(File::open(path)?, label_column)
}

/// Reads a `%%MatrixMarket matrix coordinate real general` file into a
/// sparse dataset. Entries are 1-based; duplicate coordinates are summed.
pub fn read_matrix_market<R: Read>(reader: R) -> Result<DataSet> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let (_, banner) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let banner = banner?;
    let fields: Vec<String> = banner.split_whitespace().map(str::to_lowercase).collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(Error::Parse { line: 1, msg: "missing %%MatrixMarket matrix banner".into() });
    }
    if fields[2] != "coordinate" {
        return Err(Error::Parse { line: 1, msg: format!("unsupported format {}", fields[2]) });
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(Error::Parse { line: 1, msg: format!("unsupported field {}", fields[3]) });
    }
    if fields[4] != "general" {
        return Err(Error::Parse { line: 1, msg: format!("unsupported symmetry {}", fields[4]) });
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (ln, line) in lines {
        let line = line?;
        let lineno = ln + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        let bad = |msg: &str| Error::Parse { line: lineno, msg: msg.to_owned() };
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(bad("size line must have rows, cols, nnz"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| bad("bad size line"));
                size = Some((p(parts[0])?, p(parts[1])?, p(parts[2])?));
                triplets.reserve(size.unwrap().2);
            }
            Some((rows, cols, _)) => {
                if parts.len() != 3 {
                    return Err(bad("entry must have row, col, value"));
                }
                let r: usize = parts[0].parse().map_err(|_| bad("bad row index"))?;
                let c: usize = parts[1].parse().map_err(|_| bad("bad column index"))?;
                let v: f64 = parts[2].parse().map_err(|_| bad("bad value"))?;
                if r == 0 || c == 0 || r > rows || c > cols {
                    return Err(bad("index out of range"));
                }
                triplets.push((r - 1, c - 1, v));
            }
        }
    }
    let (rows, cols, nnz) =
        size.ok_or(Error::Parse { line: 1, msg: "missing size line".into() })?;
    if triplets.len() != nnz {
        return Err(Error::InvalidData(format!(
            "header declares {nnz} entries, found {}",
            triplets.len()
        )));
    }
    triplets.sort_by_key(|&(r, c, _)| (r, c));

    let mut counts = vec![0usize; rows];
    let mut indices = Vec::with_capacity(nnz);
    let mut values: Vec<f64> = Vec::with_capacity(nnz);
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in triplets {
        if last == Some((r, c)) {
            *values.last_mut().unwrap() += v;
        } else {
            indices.push(c);
            values.push(v);
            counts[r] += 1;
            last = Some((r, c));
        }
    }
    let mut indptr = Vec::with_capacity(rows + 1);
    indptr.push(0);
    for c in counts {
        indptr.push(indptr.last().unwrap() + c);
    }
    DataSet::sparse(rows, cols, indptr, indices, values)
}

/// Loads a dataset, choosing the parser from the extension (`.mtx` is
/// MatrixMarket, everything else CSV).
pub fn load(path: &Path, label_column: Option<&str>) -> Result<Table> {
    let is_mtx = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mtx"));
    if is_mtx {
        let data = read_matrix_market(File::open(path)?)?;
        let columns = (0..data.m()).map(|c| format!("x{c}")).collect();
        Ok(Table { data, columns, labels: None })
    } else {
        read_csv_path(path, label_column)
    }
}

/// Writes a dataset as a headed CSV (`x0..x{m-1}`, plus `label` when given).
pub fn write_csv<W: Write>(out: W, data: &DataSet, labels: Option<&[String]>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header: Vec<String> = (0..data.m()).map(|c| format!("x{c}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.dense_row(i).iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            rec.push(l[i].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
