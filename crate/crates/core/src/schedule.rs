//! Epoch schedules: shuffle, chunk, and assign overlapping chunk rosters.

use rand::seq::SliceRandom;

use crate::rng::RngStream;

/// `ceil(4 ln n)`, the natural-log reading of `2 log n^2`.
pub fn epoch_count(n: usize) -> usize {
    (4.0 * (n as f64).ln()).ceil() as usize
}

/// `ceil(4 ln nu)`.
pub fn iters_per_epoch(nu: usize) -> usize {
    (4.0 * (nu as f64).ln()).ceil() as usize
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochSchedule {
    pub epoch: usize,
    pub threads: usize,
    pub layers: usize,
    /// Shuffled point ids; chunk `c` is `permutation[bounds[c]..bounds[c + 1]]`.
    pub permutation: Vec<usize>,
    pub bounds: Vec<usize>,
    /// Chunk of each point.
    pub chunk_of: Vec<usize>,
}

impl EpochSchedule {
    pub fn n(&self) -> usize {
        self.permutation.len()
    }

    pub fn chunk(&self, c: usize) -> &[usize] {
        &self.permutation[self.bounds[c]..self.bounds[c + 1]]
    }

    /// Chunks owned by thread `t`, in slot order: `t, t+1, .., t+l-1 (mod z)`.
    pub fn roster(&self, t: usize) -> Vec<usize> {
        (0..self.layers).map(|s| (t + s) % self.threads).collect()
    }

    /// Union of the thread's chunks, ascending by id.
    pub fn members(&self, t: usize) -> Vec<usize> {
        let mut m: Vec<usize> = self.roster(t).into_iter().flat_map(|c| self.chunk(c).iter().copied()).collect();
        m.sort_unstable();
        m
    }

    /// Layer slot that point `i` occupies in thread `t`, if any.
    pub fn slot(&self, i: usize, t: usize) -> Option<usize> {
        let s = (self.chunk_of[i] + self.threads - t) % self.threads;
        (s < self.layers).then_some(s)
    }

    /// `(thread, slot)` pairs that optimize point `i` this epoch.
    pub fn assignments(&self, i: usize) -> Vec<(usize, usize)> {
        let c = self.chunk_of[i];
        (0..self.layers).map(|s| ((c + self.threads - s) % self.threads, s)).collect()
    }
}

/// Fresh shuffle for `epoch` from the `("shuffle", epoch)` substream, split
/// into `threads` chunks whose sizes differ by at most one. A single thread
/// keeps the identity order.
pub fn make_epoch_schedule(
    n: usize,
    threads: usize,
    layers: usize,
    epoch: usize,
    rng: &RngStream,
) -> EpochSchedule {
    assert!(threads >= 1 && (1..=threads).contains(&layers));
    let mut permutation: Vec<usize> = (0..n).collect();
    if threads > 1 {
        permutation.shuffle(&mut rng.substream("shuffle", epoch as u64));
    }
    let bounds: Vec<usize> = (0..=threads).map(|c| c * n / threads).collect();
    let mut chunk_of = vec![0; n];
    for c in 0..threads {
        for &i in &permutation[bounds[c]..bounds[c + 1]] {
            chunk_of[i] = c;
        }
    }
    EpochSchedule { epoch, threads, layers, permutation, bounds, chunk_of }
}
