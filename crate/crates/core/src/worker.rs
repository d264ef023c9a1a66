//! One partial t-SNE: initialization, forces, and the adaptive gradient step.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::affinity::SparseAffinity;
use crate::error::{Error, Result};
use crate::quadtree::QuadTree;

pub type Point = [f64; 2];

pub const INIT_RADIUS: f64 = 0.5;
pub const GAIN_FLOOR: f64 = 0.01;
pub const GAIN_STEP: f64 = 0.2;
pub const GAIN_DECAY: f64 = 0.8;
pub const MOMENTUM_MAX: f64 = 0.8;

/// Isotropic Gaussian draws with `sigma = 0.5 / 3`, resampled until they fall
/// inside the half-unit disk.
pub fn init_embedding<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<Point> {
    let normal = Normal::new(0.0, INIT_RADIUS / 3.0).expect("valid sigma");
    (0..count)
        .map(|_| loop {
            let p = [normal.sample(rng), normal.sample(rng)];
            if p[0] * p[0] + p[1] * p[1] <= INIT_RADIUS * INIT_RADIUS {
                break p;
            }
        })
        .collect()
}

/// `sum_j p_ij (y_i - y_j) / (1 + |y_i - y_j|^2)` over the stored pairs.
pub fn attractive_forces(p: &SparseAffinity, y: &[Point]) -> Vec<Point> {
    (0..p.nu())
        .into_par_iter()
        .map(|i| {
            let mut f = [0.0, 0.0];
            for (j, pij) in p.row(i) {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let w = pij / (1.0 + dx * dx + dy * dy);
                f[0] += w * dx;
                f[1] += w * dy;
            }
            f
        })
        .collect()
}

/// Barnes-Hut repulsion accumulators and the partition function estimate.
/// Divide the accumulators by `Z` to obtain the repulsive force.
pub fn repulsive_forces_bh(tree: &QuadTree, y: &[Point], theta: f64) -> (Vec<Point>, f64) {
    tree.repulsive_forces(y, theta)
}

/// O(n^2) repulsion accumulators and exact partition function.
pub fn repulsive_forces_exact(y: &[Point]) -> (Vec<Point>, f64) {
    let per: Vec<(Point, f64)> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let mut f = [0.0, 0.0];
            let mut z = 0.0;
            for j in 0..y.len() {
                if j == i {
                    continue;
                }
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                z += w;
                f[0] += w * w * dx;
                f[1] += w * w * dy;
            }
            (f, z)
        })
        .collect();
    let z = per.iter().map(|&(_, z)| z).sum();
    (per.into_iter().map(|(f, _)| f).collect(), z)
}

/// Exact partition function `sum_{k != l} 1 / (1 + |y_k - y_l|^2)`.
pub fn partition_function(y: &[Point]) -> f64 {
    let rows: Vec<f64> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..y.len() {
                if j != i {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    s += 1.0 / (1.0 + dx * dx + dy * dy);
                }
            }
            s
        })
        .collect();
    rows.iter().sum()
}

/// Bounding-box diagonal of the embedding.
pub fn diameter(y: &[Point]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in y {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
}

/// `2 (d + 1/d) ln(nu * nki) g`, with isolated points counted as `nki = 1`.
pub fn learning_rate(diameter: f64, nu: usize, nki: usize, gain: f64) -> f64 {
    let nki = nki.max(1);
    2.0 * (diameter + 1.0 / diameter) * ((nu * nki) as f64).ln() * gain
}

/// `0.8 (1 - e / total)^2`.
pub fn momentum(e: usize, total: usize) -> f64 {
    let r = 1.0 - e as f64 / total as f64;
    MOMENTUM_MAX * r * r
}

fn sign(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum()
    }
}

/// Jacobs gain update. The direction counts as stable when the gradient
/// component and the previous update have different signs.
pub fn update_gains(gain: f64, grad: f64, prev_update: f64) -> f64 {
    let g = if sign(grad) != sign(prev_update) { gain + GAIN_STEP } else { gain * GAIN_DECAY };
    g.max(GAIN_FLOOR)
}

/// Pseudo-normalized cost `-sum p_ij ln q_ij / ln(nu (nu - 1))` for a given
/// partition function `z`.
pub fn partial_cost_with_z(p: &SparseAffinity, y: &[Point], z: f64) -> f64 {
    let nu = p.nu() as f64;
    let mut c = 0.0;
    for i in 0..p.nu() {
        for (j, pij) in p.row(i) {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let q = 1.0 / ((1.0 + dx * dx + dy * dy) * z);
            c -= pij * q.ln();
        }
    }
    c / (nu * (nu - 1.0)).ln()
}

/// Pseudo-normalized cost with the exact partition function.
pub fn partial_cost(p: &SparseAffinity, y: &[Point]) -> f64 {
    partial_cost_with_z(p, y, partition_function(y))
}

/// Per-iteration diagnostics of one worker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub iter: usize,
    /// Cost with the Barnes-Hut partition function of this iteration.
    pub cost: f64,
    pub diameter: f64,
    pub mean_gain: f64,
}

/// One thread's data subset, affinities and optimizer state.
#[derive(Clone, Debug)]
pub struct PartialProblem {
    pub thread: usize,
    pub p: SparseAffinity,
    pub y: Vec<Point>,
    pub gains: Vec<Point>,
    pub update: Vec<Point>,
    pub iter: usize,
}

impl PartialProblem {
    pub fn new(thread: usize, p: SparseAffinity, y: Vec<Point>) -> Self {
        assert_eq!(p.nu(), y.len());
        let nu = y.len();
        PartialProblem { thread, p, y, gains: vec![[1.0; 2]; nu], update: vec![[0.0; 2]; nu], iter: 0 }
    }

    pub fn members(&self) -> &[usize] {
        &self.p.members
    }

    pub fn nu(&self) -> usize {
        self.y.len()
    }

    /// `F_attr - F_rep`, i.e. the exact gradient divided by four when
    /// `theta = 0`, together with the partition function used.
    pub fn gradient(&self, theta: f64) -> (Vec<Point>, f64) {
        let attr = attractive_forces(&self.p, &self.y);
        let (rep, z) = if theta == 0.0 {
            repulsive_forces_exact(&self.y)
        } else {
            repulsive_forces_bh(&QuadTree::build(&self.y), &self.y, theta)
        };
        let grad = attr.iter().zip(&rep).map(|(a, r)| [a[0] - r[0] / z, a[1] - r[1] / z]).collect();
        (grad, z)
    }

    /// One descent iteration with momentum `mu`.
    pub fn step(&mut self, theta: f64, mu: f64) -> Result<StepStats> {
        let (grad, z) = self.gradient(theta);
        let stats = self.apply(&grad, mu, z);
        self.check_finite()?;
        Ok(stats)
    }

    /// Applies a precomputed gradient: gains first, then the update with the
    /// adaptive rate, then re-centering.
    pub fn apply(&mut self, grad: &[Point], mu: f64, z: f64) -> StepStats {
        let nu = self.nu();
        let diam = diameter(&self.y);
        let cost = partial_cost_with_z(&self.p, &self.y, z);
        for i in 0..nu {
            for d in 0..2 {
                let g = update_gains(self.gains[i][d], grad[i][d], self.update[i][d]);
                self.gains[i][d] = g;
                let eta = learning_rate(diam, nu, self.p.nki[i], g);
                self.update[i][d] = mu * self.update[i][d] - eta * grad[i][d];
                self.y[i][d] += self.update[i][d];
            }
        }
        let mut mean = [0.0, 0.0];
        for p in &self.y {
            mean[0] += p[0];
            mean[1] += p[1];
        }
        mean[0] /= nu as f64;
        mean[1] /= nu as f64;
        for p in &mut self.y {
            p[0] -= mean[0];
            p[1] -= mean[1];
        }
        let mean_gain = self.gains.iter().map(|g| g[0] + g[1]).sum::<f64>() / (2 * nu) as f64;
        let stats = StepStats { iter: self.iter, cost, diameter: diam, mean_gain };
        self.iter += 1;
        stats
    }

    fn check_finite(&self) -> Result<()> {
        match self.y.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            Some(point) => Err(Error::NonFiniteEmbedding {
                thread: self.thread,
                iter: self.iter,
                point: self.p.members[point],
            }),
            None => Ok(()),
        }
    }

    /// Runs `iters` iterations at constant momentum, collecting diagnostics
    /// when `trace` is set.
    pub fn run(&mut self, iters: usize, theta: f64, mu: f64, trace: bool) -> Result<Vec<StepStats>> {
        let mut out = Vec::new();
        for _ in 0..iters {
            let s = self.step(theta, mu)?;
            if trace {
                out.push(s);
            }
        }
        Ok(out)
    }

    pub fn cost(&self) -> f64 {
        partial_cost(&self.p, &self.y)
    }

    /// Cost with the Barnes-Hut partition function, for large problems.
    pub fn cost_bh(&self, theta: f64) -> f64 {
        let (_, z) = repulsive_forces_bh(&QuadTree::build(&self.y), &self.y, theta);
        partial_cost_with_z(&self.p, &self.y, z)
    }
}
