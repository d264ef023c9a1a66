//! Vantage-point tree for exact k-nearest-neighbor queries.
//!
//! The tree is laid out in a single permutation of point ids: the node for
//! range `lo..hi` keeps its vantage point at `lo`, the inside ball at
//! `lo+1..mid` and the outside shell at `mid..hi`. Results are ordered by
//! `(squared distance, id)`, so ties resolve toward the smaller id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::data::DataSet;

#[derive(Clone, Copy, Debug)]
struct Candidate {
    d2: f64,
    id: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.id.cmp(&other.id))
    }
}

#[derive(Debug)]
pub struct VpTree<'a> {
    data: &'a DataSet,
    items: Vec<usize>,
    // radius (not squared) separating inside from outside, indexed by node start
    radius: Vec<f64>,
    mid: Vec<usize>,
}

impl<'a> VpTree<'a> {
    pub fn build(data: &'a DataSet) -> Self {
        let n = data.n();
        let mut tree = VpTree {
            data,
            items: (0..n).collect(),
            radius: vec![0.0; n],
            mid: vec![0; n],
        };
        let mut stack = vec![(0usize, n)];
        let mut dist: Vec<(f64, usize)> = Vec::new();
        while let Some((lo, hi)) = stack.pop() {
            if hi - lo <= 1 {
                continue;
            }
            // deterministic pseudo-random vantage point
            let pick = lo + (lo.wrapping_mul(0x9E37_79B9).wrapping_add(hi * 31) % (hi - lo));
            tree.items.swap(lo, pick);
            let vp = tree.items[lo];
            dist.clear();
            dist.extend(tree.items[lo + 1..hi].iter().map(|&j| (data.dist2(vp, j), j)));
            let mid = (lo + 1 + hi) / 2;
            let rel = mid - (lo + 1);
            dist.select_nth_unstable_by(rel, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            tree.radius[lo] = dist[rel].0.sqrt();
            tree.mid[lo] = mid;
            for (slot, &(_, j)) in tree.items[lo + 1..hi].iter_mut().zip(dist.iter()) {
                *slot = j;
            }
            stack.push((lo + 1, mid));
            stack.push((mid, hi));
        }
        tree
    }

    /// The `k` nearest neighbors of dataset row `query`, excluding the query
    /// itself, as `(id, squared distance)` sorted ascending.
    pub fn knn(&self, query: usize, k: usize) -> Vec<(usize, f64)> {
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search(0, self.items.len(), query, k, &mut heap);
        }
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.id, c.d2)).collect()
    }

    fn search(&self, lo: usize, hi: usize, query: usize, k: usize, heap: &mut BinaryHeap<Candidate>) {
        if lo >= hi {
            return;
        }
        let vp = self.items[lo];
        let d2 = self.data.dist2(query, vp);
        if vp != query {
            let c = Candidate { d2, id: vp };
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().unwrap() {
                heap.pop();
                heap.push(c);
            }
        }
        if hi - lo == 1 {
            return;
        }
        let d = d2.sqrt();
        let mu = self.radius[lo];
        let mid = self.mid[lo];
        let tau = |heap: &BinaryHeap<Candidate>| {
            if heap.len() < k {
                f64::INFINITY
            } else {
                // slack keeps exact ties reachable through sqrt rounding
                heap.peek().unwrap().d2.sqrt() * (1.0 + 1e-9) + 1e-300
            }
        };
        if d < mu {
            if d - tau(heap) <= mu {
                self.search(lo + 1, mid, query, k, heap);
            }
            if d + tau(heap) >= mu {
                self.search(mid, hi, query, k, heap);
            }
        } else {
            if d + tau(heap) >= mu {
                self.search(mid, hi, query, k, heap);
            }
            if d - tau(heap) <= mu {
                self.search(lo + 1, mid, query, k, heap);
            }
        }
    }
}

/// Exact k-NN by scanning every point; the reference for [`VpTree::knn`].
pub fn brute_force_knn(data: &DataSet, query: usize, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> =
        (0..data.n()).filter(|&j| j != query).map(|j| (j, data.dist2(query, j))).collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
