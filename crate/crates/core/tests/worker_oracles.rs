//! Forces, gradient step and cost against dense reference computations.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;

use ptsne::affinity::SparseAffinity;
use ptsne::quadtree::QuadTree;
use ptsne::worker::{
    attractive_forces, diameter, init_embedding, learning_rate, partial_cost, repulsive_forces_bh,
    repulsive_forces_exact, PartialProblem,
};
use ptsne::{Point, RngStream};

/// Random sparse symmetric joint distribution with about `deg` partners per row.
fn random_affinity(n: usize, deg: usize, rng: &mut ChaCha8Rng) -> (SparseAffinity, Vec<f64>) {
    let mut dense = vec![0.0; n * n];
    for i in 0..n {
        for _ in 0..deg {
            let j = rng.random_range(0..n);
            if j != i {
                let v: f64 = rng.random_range(0.1..1.0);
                dense[i * n + j] += v;
                dense[j * n + i] += v;
            }
        }
    }
    let total: f64 = dense.iter().sum();
    dense.iter_mut().for_each(|v| *v /= total);
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut nki = Vec::new();
    for i in 0..n {
        let mut c = 0;
        for j in 0..n {
            if dense[i * n + j] > 0.0 {
                indices.push(j);
                values.push(dense[i * n + j]);
                c += 1;
            }
        }
        nki.push(c);
        indptr.push(indices.len());
    }
    (SparseAffinity { members: (0..n).collect(), indptr, indices, values, nki }, dense)
}

fn random_positions(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    (0..n).map(|_| [rng.random_range(-scale..scale), rng.random_range(-scale..scale)]).collect()
}

fn dense_q(y: &[Point]) -> Vec<f64> {
    let n = y.len();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d2 = (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2);
                w[i * n + j] = 1.0 / (1.0 + d2);
            }
        }
    }
    let z: f64 = w.iter().sum();
    w.iter().map(|v| v / z).collect()
}

/// `dC/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)`.
fn kl_gradient(p: &[f64], y: &[Point]) -> Vec<Point> {
    let n = y.len();
    let q = dense_q(y);
    (0..n)
        .map(|i| {
            let mut g = [0.0, 0.0];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let m = 4.0 * (p[i * n + j] - q[i * n + j]) / (1.0 + dx * dx + dy * dy);
                g[0] += m * dx;
                g[1] += m * dy;
            }
            g
        })
        .collect()
}

fn kl(p: &[f64], y: &[Point]) -> f64 {
    let q = dense_q(y);
    p.iter().zip(&q).filter(|(p, _)| **p > 0.0).map(|(p, q)| p * (p / q).ln()).sum()
}

fn max_norm(v: &[Point]) -> f64 {
    v.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max)
}

#[test]
fn exact_forces_match_the_kl_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let (p, dense) = random_affinity(50, 4, &mut rng);
        let y = random_positions(50, 3.0, &mut rng);
        let prob = PartialProblem::new(0, p, y.clone());
        let (g, _) = prob.gradient(0.0);
        let oracle = kl_gradient(&dense, &y);
        let scale = max_norm(&oracle);
        for (a, b) in g.iter().zip(&oracle) {
            assert!((4.0 * a[0] - b[0]).abs() <= 1e-10 * scale);
            assert!((4.0 * a[1] - b[1]).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn tree_with_zero_theta_is_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y = random_positions(200, 2.0, &mut rng);
    let (bh, zb) = repulsive_forces_bh(&QuadTree::build(&y), &y, 0.0);
    let (ex, ze) = repulsive_forces_exact(&y);
    assert!((zb - ze).abs() <= 1e-12 * ze);
    let scale = max_norm(&ex);
    for (a, b) in bh.iter().zip(&ex) {
        assert!((a[0] - b[0]).abs() <= 1e-12 * scale && (a[1] - b[1]).abs() <= 1e-12 * scale);
    }
}

/// Largest per-point deviation, relative to the largest exact force. Points
/// near the blob center have almost no net repulsion, so a per-point ratio
/// would measure cancellation rather than the approximation.
fn max_relative_error(approx: &[Point], exact: &[Point]) -> f64 {
    let worst = approx.iter().zip(exact).map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1])).fold(0.0, f64::max);
    worst / max_norm(exact)
}

#[test]
fn barnes_hut_error_on_gaussian_blob() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y: Vec<Point> = (0..500)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            [a, rng.sample(StandardNormal)]
        })
        .collect();
    let (bh, zb) = repulsive_forces_bh(&QuadTree::build(&y), &y, 0.5);
    let (ex, ze) = repulsive_forces_exact(&y);
    let bh: Vec<Point> = bh.iter().map(|f| [f[0] / zb, f[1] / zb]).collect();
    let ex: Vec<Point> = ex.iter().map(|f| [f[0] / ze, f[1] / ze]).collect();
    let err = max_relative_error(&bh, &ex);
    assert!(err < 0.05, "max relative error {err}");
    assert!((zb - ze).abs() < 0.01 * ze);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let (p, dense) = random_affinity(20, 3, &mut rng);
        let y = random_positions(20, 1.5, &mut rng);
        let grad = kl_gradient(&dense, &y);
        let prob = PartialProblem::new(0, p, y.clone());
        let (forces, _) = prob.gradient(0.0);
        let h = 1e-5;
        for i in 0..20 {
            for d in 0..2 {
                let mut up = y.clone();
                let mut down = y.clone();
                up[i][d] += h;
                down[i][d] -= h;
                let fd = (kl(&dense, &up) - kl(&dense, &down)) / (2.0 * h);
                let rel = (fd - grad[i][d]).abs() / grad[i][d].abs().max(1e-3);
                assert!(rel < 1e-4, "i={i} d={d} fd={fd} grad={}", grad[i][d]);
                assert!((4.0 * forces[i][d] - grad[i][d]).abs() < 1e-10 * grad[i][d].abs().max(1e-3));
            }
        }
    }
}

#[test]
fn forces_sum_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (p, _) = random_affinity(80, 5, &mut rng);
    let y = random_positions(80, 4.0, &mut rng);
    let attr = attractive_forces(&p, &y);
    let (rep, z) = repulsive_forces_exact(&y);
    for d in 0..2 {
        assert!(attr.iter().map(|f| f[d]).sum::<f64>().abs() < 1e-10);
        assert!(rep.iter().map(|f| f[d] / z).sum::<f64>().abs() < 1e-10);
    }
}

#[test]
fn single_step_matches_hand_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (p, dense) = random_affinity(5, 2, &mut rng);
    let y = random_positions(5, 1.0, &mut rng);
    let nki = p.nki.clone();
    let mut prob = PartialProblem::new(0, p, y.clone());
    prob.step(0.0, 0.8).unwrap();

    let g4 = kl_gradient(&dense, &y);
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for q in &y {
        for d in 0..2 {
            lo[d] = lo[d].min(q[d]);
            hi[d] = hi[d].max(q[d]);
        }
    }
    let diam = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt();
    let mut next = y.clone();
    for i in 0..5 {
        // first step: previous update is zero, so every nonzero component gains 0.2
        let eta = 2.0 * (diam + 1.0 / diam) * ((5 * nki[i].max(1)) as f64).ln() * 1.2;
        for d in 0..2 {
            next[i][d] -= eta * g4[i][d] / 4.0;
        }
    }
    let mean = [next.iter().map(|q| q[0]).sum::<f64>() / 5.0, next.iter().map(|q| q[1]).sum::<f64>() / 5.0];
    for (a, b) in prob.y.iter().zip(&next) {
        assert!((a[0] - (b[0] - mean[0])).abs() < 1e-12);
        assert!((a[1] - (b[1] - mean[1])).abs() < 1e-12);
    }
}

#[test]
fn learning_rate_scale_factor() {
    let d = 1.7;
    let ratio = learning_rate(2.0 * d, 100, 10, 1.0) / learning_rate(d, 100, 10, 1.0);
    assert!((ratio - (2.0 * d + 1.0 / (2.0 * d)) / (d + 1.0 / d)).abs() < 1e-14);
    let y = vec![[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]];
    assert_eq!(diameter(&y), 5.0);
}

#[test]
fn random_initial_cost_is_near_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (p, _) = random_affinity(1000, 10, &mut rng);
    let y = init_embedding(1000, &mut RngStream::new(7).substream("init", 0));
    let c = partial_cost(&p, &y);
    assert!((0.8..=1.2).contains(&c), "cost {c}");
}

#[test]
fn cost_at_implied_joint_is_normalized_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 12;
    let y = random_positions(n, 2.0, &mut rng);
    let q = dense_q(&y);
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                indices.push(j);
                values.push(q[i * n + j]);
            }
        }
        indptr.push(indices.len());
    }
    let p = SparseAffinity { members: (0..n).collect(), indptr, indices, values, nki: vec![n - 1; n] };
    let entropy: f64 = -q.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
    let expected = entropy / ((n * (n - 1)) as f64).ln();
    assert!((partial_cost(&p, &y) - expected).abs() < 1e-12);
}

proptest! {
    #[test]
    fn gains_stay_in_bounds(seed in any::<u64>(), steps in 1usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, _) = random_affinity(30, 3, &mut rng);
        let y = random_positions(30, 1.0, &mut rng);
        let mut prob = PartialProblem::new(0, p, y);
        for _ in 0..steps {
            prob.step(0.5, 0.5).unwrap();
        }
        let hi = 1.0 + 0.2 * steps as f64 + 1e-12;
        for g in prob.gains.iter().flatten() {
            prop_assert!(*g >= 0.01 && *g <= hi);
        }
        let mx: f64 = prob.y.iter().map(|q| q[0]).sum::<f64>();
        prop_assert!(mx.abs() < 1e-9 * (1.0 + diameter(&prob.y)) * 30.0);
    }
}
