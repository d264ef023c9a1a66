//! Input-space affinities.
//!
//! The global neighborhoods `N_i` (the `k = round(3 ppx)` nearest points),
//! the Gaussian precisions `beta_i` and the furthest-neighbor distances
//! `L_i` are computed once for the whole dataset by
//! [`build_neighbor_index`]. Each partial problem then derives its own
//! symmetric joint distribution from that index with
//! [`partial_joint_affinities`]: neighborhoods are cut down to the thread's
//! members, each conditional row keeps the global `beta_i` and is
//! renormalized, and the result is symmetrized over `2 * nu`.

use std::f64::consts::{LN_2, PI};

use log::warn;
use rayon::prelude::*;

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::lambert::lambert_w0;
use crate::vptree::VpTree;

pub const DEFAULT_TOL: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Relative spread below which a row of distances counts as equidistant.
pub const DEGENERATE_SPREAD: f64 = 1e-12;

/// Neighborhood size for a perplexity: `round(3 ppx)`.
pub fn neighborhood_size(ppx: f64) -> usize {
    (3.0 * ppx).round() as usize
}

/// Gaussian conditional distribution `exp(-beta d2_j) / sum_k exp(-beta d2_k)`,
/// evaluated with the smallest distance shifted to zero.
pub fn conditional_affinity(d2: &[f64], beta: f64) -> Vec<f64> {
    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = d2.iter().map(|&d| (-beta * (d - min)).exp()).collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    p
}

/// `2^H(p)` with `H` the base-2 Shannon entropy and `0 log 0 = 0`.
pub fn perplexity_of(p: &[f64]) -> Result<f64> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || p.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::NotNormalized(sum));
    }
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum();
    Ok(h.exp2())
}

/// Natural-log perplexity of the Gaussian row via the closed form
/// `ln C + (beta / C) sum_j d2_j exp(-beta d2_j)`, on min-shifted distances.
pub fn log_perplexity_fast(d2: &[f64], beta: f64) -> f64 {
    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut c, mut weighted) = (0.0, 0.0);
    for &d in d2 {
        let s = d - min;
        let e = (-beta * s).exp();
        c += e;
        weighted += s * e;
    }
    c.ln() + beta * weighted / c
}

/// How a point's precision was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BandwidthKind {
    /// Binary search on the entropy.
    Searched,
    /// Target equals the neighborhood size; only `beta = 0` reaches it.
    Uniform,
    /// Equidistant neighborhood, closed form through Lambert W.
    LambertW,
    /// Equidistant neighborhood with no real Lambert-W solution; `beta = 0`.
    Fallback,
    /// Target below the entropy floor set by tied nearest neighbors.
    Saturated,
}

impl BandwidthKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        use BandwidthKind::*;
        [Searched, Uniform, LambertW, Fallback, Saturated].get(c as usize).copied()
    }
}

#[derive(Debug)]
pub enum BandwidthError {
    NoConvergence { iters: usize },
    PerplexityTooLarge,
    /// Every distance is the same; use [`solve_bandwidth_degenerate`].
    Degenerate,
    /// No finite precision lowers the perplexity to the target.
    BelowFloor { beta_limit: f64 },
}

/// Relative spread test for equidistant rows.
pub fn is_degenerate(d2: &[f64]) -> bool {
    let max = d2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    max <= 0.0 || (max - min) / max < DEGENERATE_SPREAD
}

/// Finds `beta >= 0` with `|log2 ppx(beta) - log2 ppx| <= tol`.
///
/// The upper bracket starts at `1 / mean(d2 - min d2)` and doubles until the
/// entropy drops below the target; bisection then runs on `[lo, hi]`.
/// Doubling and bisection steps share the `max_iter` budget.
pub fn solve_bandwidth(
    d2: &[f64],
    ppx: f64,
    tol: f64,
    max_iter: usize,
) -> std::result::Result<f64, BandwidthError> {
    let len = d2.len() as f64;
    if ppx > len * (1.0 + 1e-12) {
        return Err(BandwidthError::PerplexityTooLarge);
    }
    if is_degenerate(d2) {
        return Err(BandwidthError::Degenerate);
    }
    if (ppx - len).abs() <= 1e-12 * len {
        return Ok(0.0);
    }
    let target = ppx.ln();
    let tol_nat = tol * LN_2;

    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let ties = d2.iter().filter(|&&d| d == min).count();
    if (ties as f64).ln() >= target - tol_nat {
        let gap = d2.iter().map(|&d| d - min).filter(|&s| s > 0.0).fold(f64::INFINITY, f64::min);
        return Err(BandwidthError::BelowFloor { beta_limit: 50.0 / gap });
    }

    let mean_shift = d2.iter().map(|&d| d - min).sum::<f64>() / len;
    let mut lo = 0.0;
    let mut hi = 1.0 / mean_shift;
    let mut iters = 0;
    loop {
        let h = log_perplexity_fast(d2, hi);
        if (h - target).abs() <= tol_nat {
            return Ok(hi);
        }
        if h < target {
            break;
        }
        lo = hi;
        hi *= 2.0;
        iters += 1;
        if iters >= max_iter || !hi.is_finite() {
            return Err(BandwidthError::NoConvergence { iters });
        }
    }
    while iters < max_iter {
        let mid = 0.5 * (lo + hi);
        let h = log_perplexity_fast(d2, mid);
        if (h - target).abs() <= tol_nat {
            return Ok(mid);
        }
        if h > target {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    Err(BandwidthError::NoConvergence { iters })
}

/// Precision of a Gaussian whose expected squared distance is exactly `e`:
/// solves `1/ppx = sqrt(beta/pi) exp(-beta e)` as
/// `beta = -W_0(-2 pi e / ppx^2) / (2 e)`.
pub fn solve_bandwidth_degenerate(e: f64, ppx: f64) -> Result<f64> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::Config(format!("degenerate bandwidth needs E > 0, got {e}")));
    }
    let arg = -2.0 * PI * e / (ppx * ppx);
    let w = lambert_w0(arg)?;
    Ok(-w / (2.0 * e))
}

/// Residual of `1/ppx = sqrt(beta/pi) exp(-beta e)`, relative to `1/ppx`.
pub fn degenerate_residual(e: f64, ppx: f64, beta: f64) -> f64 {
    let lhs = 1.0 / ppx;
    ((beta / PI).sqrt() * (-beta * e).exp() - lhs).abs() / lhs
}

/// Calibrates one neighborhood, routing equidistant rows to the Lambert-W
/// solution and unreachable targets to a saturated precision.
pub fn calibrate(
    d2: &[f64],
    ppx: f64,
    tol: f64,
    max_iter: usize,
) -> std::result::Result<(f64, BandwidthKind), BandwidthError> {
    match solve_bandwidth(d2, ppx, tol, max_iter) {
        Ok(b) if b == 0.0 => Ok((0.0, BandwidthKind::Uniform)),
        Ok(b) => Ok((b, BandwidthKind::Searched)),
        Err(BandwidthError::Degenerate) => {
            let e = d2.iter().sum::<f64>() / d2.len() as f64;
            match solve_bandwidth_degenerate(e, ppx) {
                Ok(b) => Ok((b, BandwidthKind::LambertW)),
                Err(_) => Ok((0.0, BandwidthKind::Fallback)),
            }
        }
        Err(BandwidthError::BelowFloor { beta_limit }) => {
            Ok((beta_limit, BandwidthKind::Saturated))
        }
        Err(e) => Err(e),
    }
}

/// Global neighborhoods and calibrated precisions for a whole dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborIndex {
    pub ppx: f64,
    pub n: usize,
    pub k: usize,
    /// `n * k` neighbor ids, row `i` sorted by (distance, id).
    pub neighbors: Vec<usize>,
    /// Squared distances matching `neighbors`.
    pub dist2: Vec<f64>,
    pub beta: Vec<f64>,
    /// Furthest stored neighbor distance per point (squared).
    pub radius: Vec<f64>,
    pub kind: Vec<BandwidthKind>,
}

impl NeighborIndex {
    pub fn neighbors_of(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn dist2_of(&self, i: usize) -> &[f64] {
        &self.dist2[i * self.k..(i + 1) * self.k]
    }

    /// Perplexity reached by point `i`'s conditional distribution over `N_i`.
    pub fn achieved_perplexity(&self, i: usize) -> f64 {
        perplexity_of(&conditional_affinity(self.dist2_of(i), self.beta[i]))
            .expect("conditional rows are normalized")
    }
}

pub fn validate_perplexity(ppx: f64, n: usize) -> Result<usize> {
    if !(ppx.is_finite() && ppx > 1.0) {
        return Err(Error::Config(format!("perplexity must exceed 1 (got {ppx})")));
    }
    let k = neighborhood_size(ppx);
    if k > n - 1 {
        return Err(Error::PerplexityTooLarge { ppx, max: n - 1 });
    }
    Ok(k)
}

/// Exact k-NN through a vantage-point tree followed by per-point calibration.
pub fn build_neighbor_index(data: &DataSet, ppx: f64, tol: f64) -> Result<NeighborIndex> {
    build_neighbor_index_with(data, ppx, tol, DEFAULT_MAX_ITER)
}

pub fn build_neighbor_index_with(
    data: &DataSet,
    ppx: f64,
    tol: f64,
    max_iter: usize,
) -> Result<NeighborIndex> {
    let n = data.n();
    let k = validate_perplexity(ppx, n)?;
    if !(tol > 0.0) {
        return Err(Error::Config("bandwidth tolerance must be positive".into()));
    }
    let tree = VpTree::build(data);
    let rows: Vec<std::result::Result<(Vec<(usize, f64)>, f64, BandwidthKind), Error>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let nn = tree.knn(i, k);
            let d2: Vec<f64> = nn.iter().map(|&(_, d)| d).collect();
            match calibrate(&d2, ppx, tol, max_iter) {
                Ok((beta, kind)) => Ok((nn, beta, kind)),
                Err(BandwidthError::NoConvergence { iters }) => {
                    Err(Error::NoConvergence { point: i, iters })
                }
                Err(_) => Err(Error::PerplexityTooLarge { ppx, max: k }),
            }
        })
        .collect();

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
    for (i, row) in rows.into_iter().enumerate() {
        let (nn, beta, kind) = row?;
        match kind {
            BandwidthKind::Fallback => {
                warn!("point {i}: equidistant neighborhood has no real Lambert-W solution; using beta = 0")
            }
            BandwidthKind::Saturated => {
                warn!("point {i}: perplexity {ppx} is below the floor set by tied neighbors")
            }
            _ => {}
        }
        index.radius.push(nn.last().map_or(0.0, |&(_, d)| d));
        for (j, d) in nn {
            index.neighbors.push(j);
            index.dist2.push(d);
        }
        index.beta.push(beta);
        index.kind.push(kind);
    }
    Ok(index)
}

/// Row-compressed symmetric joint distribution of one partial problem.
///
/// Rows and columns are local positions into `members`, which is sorted by
/// global id.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAffinity {
    pub members: Vec<usize>,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    /// Partial neighborhood size `|N_i^k|` per local point.
    pub nki: Vec<usize>,
}

impl SparseAffinity {
    pub fn nu(&self) -> usize {
        self.members.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Number of members without any in-thread neighbor.
    pub fn isolated(&self) -> usize {
        self.nki.iter().filter(|&&c| c == 0).count()
    }
}

/// Joint affinities of one partial problem.
///
/// `members` may come in any order; the result is laid out by ascending id.
/// For member `i` the partial neighborhood is `N_i` restricted to the
/// members. Conditional rows use the global `beta_i`, are renormalized over
/// the partial neighborhood, then symmetrized as `(p_{j|i} + p_{i|j}) / (2 nu')`
/// where `nu'` counts members with a non-empty neighborhood (equal to `nu`
/// unless some point is isolated), so the matrix always sums to one.
pub fn partial_joint_affinities(members: &[usize], index: &NeighborIndex) -> SparseAffinity {
    let mut members = members.to_vec();
    members.sort_unstable();
    let nu = members.len();
    let mut local = vec![usize::MAX; index.n];
    for (l, &g) in members.iter().enumerate() {
        local[g] = l;
    }

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nu];
    let mut nki = vec![0usize; nu];
    let mut d2 = Vec::with_capacity(index.k);
    let mut cols = Vec::with_capacity(index.k);
    for (li, &gi) in members.iter().enumerate() {
        d2.clear();
        cols.clear();
        for (&gj, &d) in index.neighbors_of(gi).iter().zip(index.dist2_of(gi)) {
            let lj = local[gj];
            if lj != usize::MAX {
                cols.push(lj);
                d2.push(d);
            }
        }
        nki[li] = cols.len();
        if cols.is_empty() {
            log::debug!("point {gi} has no in-thread neighbor");
            continue;
        }
        let p = conditional_affinity(&d2, index.beta[gi]);
        for (&lj, &v) in cols.iter().zip(&p) {
            rows[li].push((lj, v));
            rows[lj].push((li, v));
        }
    }

    let active = nki.iter().filter(|&&c| c > 0).count().max(1);
    let norm = 2.0 * active as f64;
    let mut indptr = Vec::with_capacity(nu + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for mut row in rows {
        row.sort_by_key(|&(j, _)| j);
        let mut it = row.into_iter().peekable();
        while let Some((j, mut v)) = it.next() {
            while let Some(&(j2, v2)) = it.peek() {
                if j2 != j {
                    break;
                }
                v += v2;
                it.next();
            }
            indices.push(j);
            values.push(v / norm);
        }
        indptr.push(indices.len());
    }
    SparseAffinity { members, indptr, indices, values, nki }
}
