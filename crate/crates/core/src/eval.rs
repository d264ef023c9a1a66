//! Embedding quality: neighborhood preservation, AUC summaries, exact KL and
//! its recall/prevalence decomposition.

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::worker::Point;

/// Above this size kNP is estimated on a fixed random sample of query points.
pub const EXACT_KNP_LIMIT: usize = 5000;
pub const KNP_SAMPLE: usize = 2000;
pub const DEFAULT_GRID: usize = 50;
pub const DENSE_LIMIT: usize = 5000;

#[derive(Clone, Debug, PartialEq)]
pub struct KnpCurve {
    pub ks: Vec<usize>,
    pub preservation: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Linear,
    Log,
}

/// `count` geometrically spaced neighborhood sizes from 1 to `n - 1`,
/// rounded and deduplicated.
pub fn default_k_grid(n: usize, count: usize) -> Vec<usize> {
    let max = n.saturating_sub(1).max(1);
    let mut ks: Vec<usize> = (0..count)
        .map(|i| {
            let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 1.0 };
            ((max as f64).powf(t).round() as usize).clamp(1, max)
        })
        .collect();
    ks.dedup();
    ks
}

fn rank_order(d2: &mut [(f64, usize)]) {
    d2.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
}

/// High-dimensional neighbor ranks of the query points, reusable across
/// embeddings of the same data.
#[derive(Clone, Debug)]
pub struct KnpEvaluator {
    n: usize,
    queries: Vec<usize>,
    /// `hd_rank[q * n + j]`: 0-based rank of `j` among the neighbors of
    /// query `q`, `u32::MAX` for the query itself.
    hd_rank: Vec<u32>,
}

impl KnpEvaluator {
    /// Uses every point as a query up to [`EXACT_KNP_LIMIT`] points, else a
    /// seeded sample of [`KNP_SAMPLE`] queries.
    pub fn new(data: &DataSet) -> Self {
        let n = data.n();
        let queries = if n <= EXACT_KNP_LIMIT {
            (0..n).collect()
        } else {
            let mut rng = RngStream::new(0).substream("knp-sample", 0);
            let mut q = sample(&mut rng, n, KNP_SAMPLE).into_vec();
            q.sort_unstable();
            q
        };
        Self::with_queries(data, queries)
    }

    pub fn with_queries(data: &DataSet, queries: Vec<usize>) -> Self {
        let n = data.n();
        let ranks: Vec<Vec<u32>> = queries
            .par_iter()
            .map(|&q| {
                let mut d: Vec<(f64, usize)> =
                    (0..n).filter(|&j| j != q).map(|j| (data.dist2(q, j), j)).collect();
                rank_order(&mut d);
                let mut r = vec![u32::MAX; n];
                for (rank, &(_, j)) in d.iter().enumerate() {
                    r[j] = rank as u32;
                }
                r
            })
            .collect();
        KnpEvaluator { n, queries, hd_rank: ranks.concat() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_sampled(&self) -> bool {
        self.queries.len() < self.n
    }

    /// `kNP(k) = (1 / (n k)) sum_i |kNN_HD(i) & kNN_LD(i)|` for every `k` in `ks`.
    pub fn curve(&self, y: &[Point], ks: &[usize]) -> Result<KnpCurve> {
        let n = self.n;
        if y.len() != n {
            return Err(Error::InvalidData(format!("embedding has {} points, expected {n}", y.len())));
        }
        for &k in ks {
            if k == 0 || k > n - 1 {
                return Err(Error::KTooLarge { k, max: n - 1 });
            }
        }
        // hist[m] counts neighbors that enter both neighborhoods at size m + 1
        let hists: Vec<Vec<u64>> = self
            .queries
            .par_iter()
            .enumerate()
            .map(|(qi, &q)| {
                let hd = &self.hd_rank[qi * n..(qi + 1) * n];
                let mut d: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != q)
                    .map(|j| {
                        let dx = y[q][0] - y[j][0];
                        let dy = y[q][1] - y[j][1];
                        (dx * dx + dy * dy, j)
                    })
                    .collect();
                rank_order(&mut d);
                let mut hist = vec![0u64; n];
                for (r, &(_, j)) in d.iter().enumerate() {
                    hist[r.max(hd[j] as usize)] += 1;
                }
                hist
            })
            .collect();
        let mut total = vec![0u64; n];
        for h in &hists {
            for (t, v) in total.iter_mut().zip(h) {
                *t += v;
            }
        }
        let mut cumulative = vec![0u64; n + 1];
        for m in 0..n {
            cumulative[m + 1] = cumulative[m] + total[m];
        }
        let nq = self.queries.len() as f64;
        let preservation = ks.iter().map(|&k| cumulative[k] as f64 / (nq * k as f64)).collect();
        Ok(KnpCurve { ks: ks.to_vec(), preservation })
    }
}

pub fn knp_curve(data: &DataSet, y: &[Point], ks: &[usize]) -> Result<KnpCurve> {
    if y.len() != data.n() {
        return Err(Error::InvalidData(format!("embedding has {} points, expected {}", y.len(), data.n())));
    }
    KnpEvaluator::new(data).curve(y, ks)
}

/// Trapezoidal area under the curve over `k` or `ln k`, divided by the span
/// of the axis.
pub fn auc(curve: &KnpCurve, axis: Axis) -> f64 {
    let x: Vec<f64> = curve
        .ks
        .iter()
        .map(|&k| match axis {
            Axis::Linear => k as f64,
            Axis::Log => (k as f64).ln(),
        })
        .collect();
    if x.len() < 2 || x[x.len() - 1] <= x[0] {
        return curve.preservation.first().copied().unwrap_or(0.0);
    }
    let span = x[x.len() - 1] - x[0];
    let v = &curve.preservation;
    let area: f64 = (1..x.len()).map(|i| 0.5 * (v[i] + v[i - 1]) * (x[i] - x[i - 1])).sum();
    area / span
}

/// `sum p ln(p / q)` over matching entries, with `0 ln(0 / q) = 0`.
pub fn exact_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidData("distributions differ in length".into()));
    }
    for v in [p, q] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(s));
        }
    }
    let mut kl = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::SupportViolation { index, p: pi });
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl)
}

/// Dense `n x n` matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub n: usize,
    pub values: Vec<f64>,
}

impl Dense {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }
}

fn check_dense(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(Error::Config(format!("dense evaluation limited to {DENSE_LIMIT} points, got {n}")));
    }
    Ok(())
}

/// Full Gaussian conditionals `p_{j|i}` over all `j != i` with bandwidths `beta`.
pub fn dense_conditionals(data: &DataSet, beta: &[f64]) -> Result<Dense> {
    let n = data.n();
    check_dense(n)?;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d2: Vec<f64> = (0..n).map(|j| data.dist2(i, j)).collect();
            let min = (0..n).filter(|&j| j != i).map(|j| d2[j]).fold(f64::INFINITY, f64::min);
            let mut row: Vec<f64> =
                (0..n).map(|j| if j == i { 0.0 } else { (-beta[i] * (d2[j] - min)).exp() }).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect();
    Ok(Dense { n, values: rows.concat() })
}

/// `p_ij = (p_{j|i} + p_{i|j}) / (2n)`.
pub fn joint_from_conditionals(cond: &Dense) -> Dense {
    let n = cond.n;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            values[i * n + j] = (cond.get(i, j) + cond.get(j, i)) / (2.0 * n as f64);
        }
    }
    Dense { n, values }
}

/// High-dimensional prevalence `p_i = 1/(2n) + (1/(2n)) sum_k p_{i|k}`.
pub fn hd_prevalence(cond: &Dense) -> Vec<f64> {
    let n = cond.n;
    let c = 1.0 / (2.0 * n as f64);
    (0..n).map(|i| c + c * (0..n).filter(|&k| k != i).map(|k| cond.get(k, i)).sum::<f64>()).collect()
}

/// Student-t joint affinities `q_ij` of an embedding.
pub fn ld_joint(y: &[Point]) -> Result<Dense> {
    let n = y.len();
    check_dense(n)?;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                values[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
            }
        }
    }
    let z: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= z);
    Ok(Dense { n, values })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlDecomposition {
    /// `sum_i p_i D(p_{.|i} || q_{.|i})`.
    pub expected_smoothed_recall: f64,
    /// `D(p_. || q_.)` between the prevalence models.
    pub prevalence_divergence: f64,
    /// `KL(P || Q)` evaluated directly on the joints.
    pub total_kl: f64,
}

impl KlDecomposition {
    pub fn residual(&self) -> f64 {
        (self.expected_smoothed_recall + self.prevalence_divergence - self.total_kl).abs()
    }
}

/// Splits `KL(P || Q)` of two joint distributions into expected smoothed
/// recall and prevalence divergence. Conditionals are `p_ij / p_i` and
/// `q_ij / q_i` with prevalences taken as row sums; the total is computed
/// separately from the joints.
pub fn kl_decomposition_joint(p: &Dense, q: &Dense) -> Result<KlDecomposition> {
    if p.n != q.n {
        return Err(Error::InvalidData("joint distributions differ in size".into()));
    }
    let total_kl = exact_kl(&p.values, &q.values)?;
    let pi = p.row_sums();
    let qi = q.row_sums();
    let mut recall = 0.0;
    for i in 0..p.n {
        if pi[i] <= 0.0 {
            continue;
        }
        let mut d = 0.0;
        for j in 0..p.n {
            let pc = p.get(i, j) / pi[i];
            if pc > 0.0 {
                let qc = if qi[i] > 0.0 { q.get(i, j) / qi[i] } else { 0.0 };
                if qc <= 0.0 {
                    return Err(Error::SupportViolation { index: i * p.n + j, p: p.get(i, j) });
                }
                d += pc * (pc / qc).ln();
            }
        }
        recall += pi[i] * d;
    }
    let prevalence_divergence = exact_kl(&pi, &qi)?;
    Ok(KlDecomposition { expected_smoothed_recall: recall, prevalence_divergence, total_kl })
}

/// Decomposition for high-dimensional conditionals and an embedding.
pub fn kl_decomposition(cond: &Dense, y: &[Point]) -> Result<KlDecomposition> {
    if cond.n != y.len() {
        return Err(Error::InvalidData("conditionals and embedding differ in size".into()));
    }
    kl_decomposition_joint(&joint_from_conditionals(cond), &ld_joint(y)?)
}
