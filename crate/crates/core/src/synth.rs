//! Synthetic datasets with known structure.
//!
//! * Sierpinski graphs: nodes of the order-`depth` Sierpinski triangle (or
//!   tetrahedron) graph, each described by its vector of shortest-path
//!   distances to every node, so `m = n`.
//! * Hierarchical Gaussians: a tree of cluster centers whose offsets shrink
//!   by `separation` at each level, with unit-variance leaves.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const DEFAULT_CAP: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub enum SyntheticKind {
    /// Sierpinski triangle graph; depth 1 is a single triangle.
    Sierpinski { depth: u32 },
    /// Sierpinski tetrahedron graph; depth 1 is a single tetrahedron.
    SierpinskiTetra { depth: u32 },
    HierarchicalGaussian {
        levels: u32,
        clusters: usize,
        points_per_leaf: usize,
        separation: f64,
        dim: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub seed: u64,
    pub cap: usize,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, seed: u64) -> Self {
        SyntheticSpec { kind, seed, cap: DEFAULT_CAP }
    }
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub data: DataSet,
    /// Leaf cluster for Gaussian data, corner-region for Sierpinski graphs.
    pub labels: Vec<String>,
}

/// Node count of the order-`depth` Sierpinski graph built on a simplex with
/// `corners` vertices: `N(1) = corners`, `N(d) = corners*N(d-1) - C(corners, 2)`.
pub fn sierpinski_node_count(depth: u32, corners: usize) -> usize {
    let shared = corners * (corners - 1) / 2;
    (1..depth).fold(corners, |n, _| corners * n - shared)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    match spec.kind {
        SyntheticKind::Sierpinski { depth } => sierpinski(depth, 3, spec.cap),
        SyntheticKind::SierpinskiTetra { depth } => sierpinski(depth, 4, spec.cap),
        SyntheticKind::HierarchicalGaussian { levels, clusters, points_per_leaf, separation, dim } => {
            hierarchical_gaussian(levels, clusters, points_per_leaf, separation, dim, spec)
        }
    }
}

/// Adjacency lists of the Sierpinski graph. Node ids follow the sorted order
/// of lattice coordinates, so corner `(0, .., 0)` is node 0.
pub fn sierpinski_graph(depth: u32, corners: usize) -> Result<Vec<Vec<usize>>> {
    if depth == 0 {
        return Err(Error::Config("sierpinski depth must be >= 1".into()));
    }
    if !(3..=4).contains(&corners) {
        return Err(Error::Config("sierpinski graphs use 3 or 4 corners".into()));
    }
    let dim = corners - 1;
    let side: i64 = 1 << (depth - 1);
    let mut simplex = vec![vec![0i64; dim]];
    for a in 0..dim {
        let mut v = vec![0i64; dim];
        v[a] = side;
        simplex.push(v);
    }

    let mut edges: Vec<(Vec<i64>, Vec<i64>)> = Vec::new();
    let mut stack = vec![(simplex, depth)];
    while let Some((verts, level)) = stack.pop() {
        if level == 1 {
            for a in 0..verts.len() {
                for b in a + 1..verts.len() {
                    edges.push((verts[a].clone(), verts[b].clone()));
                }
            }
            continue;
        }
        for keep in 0..verts.len() {
            let sub: Vec<Vec<i64>> = verts
                .iter()
                .map(|v| v.iter().zip(&verts[keep]).map(|(x, y)| (x + y) / 2).collect())
                .collect();
            stack.push((sub, level - 1));
        }
    }

    let mut ids: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    for (a, b) in &edges {
        ids.entry(a.clone()).or_insert(0);
        ids.entry(b.clone()).or_insert(0);
    }
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    let mut adj = vec![Vec::new(); ids.len()];
    for (a, b) in &edges {
        let (i, j) = (ids[a], ids[b]);
        adj[i].push(j);
        adj[j].push(i);
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    Ok(adj)
}

/// Hop distances from `src` by breadth-first search.
pub fn bfs_distances(adj: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::from([src]);
    dist[src] = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

fn sierpinski(depth: u32, corners: usize, cap: usize) -> Result<Synthetic> {
    if depth == 0 {
        return Err(Error::Config("sierpinski depth must be >= 1".into()));
    }
    let n = sierpinski_node_count(depth, corners);
    if n > cap {
        return Err(Error::SpecTooLarge { n, cap });
    }
    let adj = sierpinski_graph(depth, corners)?;
    debug_assert_eq!(adj.len(), n);
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        values.extend(bfs_distances(&adj, i).into_iter().map(|d| d as f64));
    }
    // label = nearest corner of the outer simplex
    let corner_ids: Vec<usize> = corner_nodes(&adj);
    let labels = (0..n)
        .map(|i| {
            let (c, _) = corner_ids
                .iter()
                .enumerate()
                .min_by_key(|(_, &c)| values[i * n + c] as usize)
                .unwrap();
            format!("c{c}")
        })
        .collect();
    if n < crate::data::MIN_POINTS {
        return Err(Error::InvalidData(format!(
            "sierpinski depth {depth} yields only {n} nodes; use sierpinski_graph for the bare graph"
        )));
    }
    let data = DataSet::dense(n, n, values)?;
    Ok(Synthetic { data, labels })
}

/// Outer corners are the nodes of minimal degree.
fn corner_nodes(adj: &[Vec<usize>]) -> Vec<usize> {
    let min_deg = adj.iter().map(Vec::len).min().unwrap_or(0);
    (0..adj.len()).filter(|&i| adj[i].len() == min_deg).collect()
}

fn hierarchical_gaussian(
    levels: u32,
    clusters: usize,
    points_per_leaf: usize,
    separation: f64,
    dim: usize,
    spec: &SyntheticSpec,
) -> Result<Synthetic> {
    if levels == 0 || clusters == 0 || points_per_leaf == 0 || dim == 0 {
        return Err(Error::Config(
            "hierarchical-gaussian needs levels, clusters, points and dim >= 1".into(),
        ));
    }
    if !(separation.is_finite() && separation > 0.0) {
        return Err(Error::Config("separation ratio must be positive".into()));
    }
    let leaves = clusters
        .checked_pow(levels)
        .ok_or(Error::SpecTooLarge { n: usize::MAX, cap: spec.cap })?;
    let n = leaves.saturating_mul(points_per_leaf);
    if n > spec.cap {
        return Err(Error::SpecTooLarge { n, cap: spec.cap });
    }

    let stream = RngStream::new(spec.seed);
    let mut rng = stream.substream("hierarchical-gaussian", 0);
    let unit = |rng: &mut crate::rng::StreamRng| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    };

    // centers level by level; offsets at level l have length separation^(levels - l + 1)
    let mut centers = vec![vec![0.0; dim]];
    for level in 1..=levels {
        let scale = separation.powi((levels - level + 1) as i32);
        let mut next = Vec::with_capacity(centers.len() * clusters);
        for c in &centers {
            for _ in 0..clusters {
                let dir = unit(&mut rng);
                next.push(c.iter().zip(&dir).map(|(a, d)| a + scale * d).collect::<Vec<_>>());
            }
        }
        centers = next;
    }

    let mut values = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (leaf, c) in centers.iter().enumerate() {
        for _ in 0..points_per_leaf {
            values.extend(c.iter().map(|&x| x + rng.sample::<f64, _>(StandardNormal)));
            labels.push(format!("g{leaf}"));
        }
    }
    Ok(Synthetic { data: DataSet::dense(n, dim, values)?, labels })
}
