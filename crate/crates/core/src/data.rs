//! High-dimensional observations and the squared Euclidean metric.
//!
//! Rows are stored either densely (row-major) or as compressed sparse rows.
//! Both layouts accumulate `(a_k - b_k)^2` into [`LANES`] partial sums keyed
//! by `k % LANES`, visiting columns in increasing order, and then combine the
//! partial sums in a fixed tree. Implicit zeros of a sparse row contribute an
//! exact `+0.0`, so sparse and dense storage of the same matrix produce
//! bit-identical distances.

use crate::error::{Error, Result};

/// Number of interleaved accumulators used by [`squared_distance`].
pub const LANES: usize = 4;

/// Smallest dataset for which a neighborhood is meaningful.
pub const MIN_POINTS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub enum Storage {
    Dense(Vec<f64>),
    Sparse {
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    },
}

/// Borrowed view of one observation.
#[derive(Clone, Copy, Debug)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse { indices: &'a [usize], values: &'a [f64] },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    n: usize,
    m: usize,
    storage: Storage,
}

impl DataSet {
    /// Builds a dense dataset from `n` rows of `m` values laid out row-major.
    pub fn dense(n: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * m {
            return Err(Error::InvalidData(format!(
                "expected {} values for a {n}x{m} matrix, got {}",
                n * m,
                values.len()
            )));
        }
        let ds = DataSet { n, m, storage: Storage::Dense(values) };
        ds.validate()?;
        Ok(ds)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::InvalidData(format!(
                "row {bad} has {} columns, expected {m}",
                rows[bad].len()
            )));
        }
        Self::dense(rows.len(), m, rows.concat())
    }

    /// Builds a sparse dataset from CSR arrays. Column indices within a row
    /// must be strictly increasing.
    pub fn sparse(
        n: usize,
        m: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != n + 1 || indptr[0] != 0 || indptr[n] != indices.len() {
            return Err(Error::InvalidData("malformed row pointer array".into()));
        }
        if indices.len() != values.len() {
            return Err(Error::InvalidData("indices/values length mismatch".into()));
        }
        for i in 0..n {
            if indptr[i] > indptr[i + 1] {
                return Err(Error::InvalidData(format!("row pointer decreases at row {i}")));
            }
            let cols = &indices[indptr[i]..indptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidData(format!(
                    "row {i}: column indices not strictly increasing"
                )));
            }
            if cols.last().is_some_and(|&c| c >= m) {
                return Err(Error::InvalidData(format!("row {i}: column index out of range")));
            }
        }
        let ds = DataSet { n, m, storage: Storage::Sparse { indptr, indices, values } };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.n < MIN_POINTS {
            return Err(Error::InvalidData(format!(
                "need at least {MIN_POINTS} observations, got {}",
                self.n
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidData("zero input dimensions".into()));
        }
        let values = match &self.storage {
            Storage::Dense(v) => v,
            Storage::Sparse { values, .. } => values,
        };
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite value at storage offset {pos}")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        match &self.storage {
            Storage::Dense(v) => Row::Dense(&v[i * self.m..(i + 1) * self.m]),
            Storage::Sparse { indptr, indices, values } => {
                let r = indptr[i]..indptr[i + 1];
                Row::Sparse { indices: &indices[r.clone()], values: &values[r] }
            }
        }
    }

    /// Row `i` expanded to a dense vector.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        match self.row(i) {
            Row::Dense(r) => r.to_vec(),
            Row::Sparse { indices, values } => {
                let mut out = vec![0.0; self.m];
                for (&c, &v) in indices.iter().zip(values) {
                    out[c] = v;
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> DataSet {
        let values = (0..self.n).flat_map(|i| self.dense_row(i)).collect();
        DataSet { n: self.n, m: self.m, storage: Storage::Dense(values) }
    }

    /// Converts to CSR, dropping explicit zeros.
    pub fn to_sparse(&self) -> DataSet {
        let mut indptr = Vec::with_capacity(self.n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..self.n {
            for (c, v) in self.dense_row(i).into_iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        DataSet { n: self.n, m: self.m, storage: Storage::Sparse { indptr, indices, values } }
    }

    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        squared_distance(self.row(i), self.row(j))
    }

    /// Returns a new dataset with the selected rows, in the given order.
    pub fn select(&self, ids: &[usize]) -> Result<DataSet> {
        let rows: Vec<Vec<f64>> = ids.iter().map(|&i| self.dense_row(i)).collect();
        let ds = DataSet::from_rows(&rows)?;
        Ok(if self.is_sparse() { ds.to_sparse() } else { ds })
    }
}

#[inline]
fn combine(acc: [f64; LANES]) -> f64 {
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

fn dense_dense(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    for (l, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        let d = x - y;
        acc[l] += d * d;
    }
    combine(acc)
}

fn sparse_dense(idx: &[usize], val: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let mut p = 0;
    for (k, &bk) in b.iter().enumerate() {
        let ak = if p < idx.len() && idx[p] == k {
            p += 1;
            val[p - 1]
        } else {
            0.0
        };
        let d = ak - bk;
        acc[k % LANES] += d * d;
    }
    combine(acc)
}

fn sparse_sparse(ia: &[usize], va: &[f64], ib: &[usize], vb: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let (mut p, mut q) = (0, 0);
    while p < ia.len() || q < ib.len() {
        let (k, d) = match (ia.get(p), ib.get(q)) {
            (Some(&ka), Some(&kb)) if ka == kb => {
                p += 1;
                q += 1;
                (ka, va[p - 1] - vb[q - 1])
            }
            (Some(&ka), Some(&kb)) if ka < kb => {
                p += 1;
                (ka, va[p - 1])
            }
            (Some(&ka), None) => {
                p += 1;
                (ka, va[p - 1])
            }
            (_, Some(&kb)) => {
                q += 1;
                (kb, -vb[q - 1])
            }
            (None, None) => unreachable!(),
        };
        acc[k % LANES] += d * d;
    }
    combine(acc)
}

/// Squared Euclidean distance between two rows of the same dataset.
pub fn squared_distance(a: Row<'_>, b: Row<'_>) -> f64 {
    match (a, b) {
        (Row::Dense(x), Row::Dense(y)) => dense_dense(x, y),
        (Row::Sparse { indices, values }, Row::Dense(y))
        | (Row::Dense(y), Row::Sparse { indices, values }) => sparse_dense(indices, values, y),
        (Row::Sparse { indices: ia, values: va }, Row::Sparse { indices: ib, values: vb }) => {
            sparse_sparse(ia, va, ib, vb)
        }
    }
}
