use ptsne::affinity::{build_neighbor_index, partial_joint_affinities, DEFAULT_TOL};
use ptsne::engine::{pool_solutions, refine_with_index, run_with_index, RefineConfig, RunConfig};
use ptsne::schedule::make_epoch_schedule;
use ptsne::synth::{generate_synthetic, SyntheticKind, SyntheticSpec};
use ptsne::worker::{init_embedding, momentum, PartialProblem};
use ptsne::{run_ptsne, DataSet, Error, Point, RngStream};

fn gaussians(points_per_leaf: usize) -> DataSet {
    let kind = SyntheticKind::HierarchicalGaussian {
        levels: 2,
        clusters: 2,
        points_per_leaf,
        separation: 10.0,
        dim: 10,
    };
    generate_synthetic(&SyntheticSpec::new(kind, 3)).unwrap().data
}

#[test]
fn single_thread_run_is_plain_exact_tsne() {
    let data = gaussians(20);
    let index = build_neighbor_index(&data, 10.0, DEFAULT_TOL).unwrap();
    let cfg = RunConfig { ppx: 10.0, theta: 0.0, epochs: Some(4), iters: Some(6), seed: 11, ..RunConfig::default() };
    let out = run_with_index(&index, &cfg).unwrap();

    let n = data.n();
    let p = partial_joint_affinities(&(0..n).collect::<Vec<_>>(), &index);
    let mut y = init_embedding(n, &mut RngStream::new(11).substream("init", 0));
    for e in 0..4 {
        let mut prob = PartialProblem::new(0, p.clone(), y);
        for _ in 0..6 {
            prob.step(0.0, momentum(e, 4)).unwrap();
        }
        y = prob.y;
    }
    assert_eq!(out.layers, vec![y]);
}

#[test]
fn deterministic_across_runs_and_pool_widths() {
    let data = gaussians(30);
    let base = RunConfig { ppx: 8.0, threads: 5, layers: 3, epochs: Some(3), seed: 5, ..RunConfig::default() };
    let a = run_ptsne(&data, &RunConfig { pool_width: Some(1), ..base.clone() }).unwrap();
    let b = run_ptsne(&data, &RunConfig { pool_width: Some(1), ..base.clone() }).unwrap();
    let c = run_ptsne(&data, &RunConfig { pool_width: Some(4), ..base.clone() }).unwrap();
    assert_eq!(a.layers, b.layers);
    assert_eq!(a.layers, c.layers);
    assert_eq!(a.costs, c.costs);
    let d = run_ptsne(&data, &RunConfig { seed: 6, ..base }).unwrap();
    assert_ne!(a.layers, d.layers);
}

#[test]
fn cost_trace_and_layers() {
    let data = gaussians(100);
    let cfg = RunConfig { ppx: 30.0, threads: 4, layers: 2, seed: 1, ..RunConfig::default() };
    let out = run_ptsne(&data, &cfg).unwrap();
    let epochs = cfg.epoch_count(data.n());
    assert_eq!(out.costs.len(), epochs + 1);
    assert_eq!(out.num_layers(), 2);
    assert!(out.is_finite());
    let first = out.costs[0].global;
    assert!((0.8..=1.2).contains(&first), "initial cost {first}");
    assert!(out.final_cost().unwrap() < first);
    for c in &out.costs {
        assert_eq!(c.per_thread.len(), 4);
        let mean = c.per_thread.iter().sum::<f64>() / 4.0;
        assert!((c.global - mean).abs() < 1e-12);
        assert!(c.exact_z);
    }
    assert_eq!(out.epoch_seconds.len(), epochs);
    assert_eq!(out.pooling_seconds.len(), epochs);
}

#[test]
fn single_thread_cost_settles() {
    let data = gaussians(50);
    let cfg = RunConfig { ppx: 15.0, seed: 2, ..RunConfig::default() };
    let out = run_ptsne(&data, &cfg).unwrap();
    let c: Vec<f64> = out.costs.iter().map(|c| c.global).collect();
    let avg: Vec<f64> = c.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    // moving averages starting at epoch 3 or later
    for w in avg[3..].windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{avg:?}");
    }
}

fn problems_for(sched: &ptsne::schedule::EpochSchedule, layers: &[Vec<Point>]) -> Vec<PartialProblem> {
    let n = sched.n();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
    let index = build_neighbor_index(&DataSet::from_rows(&rows).unwrap(), 1.5, DEFAULT_TOL).unwrap();
    (0..sched.threads)
        .map(|t| {
            let members = sched.members(t);
            let y = members.iter().map(|&g| layers[sched.slot(g, t).unwrap()][g]).collect();
            PartialProblem::new(t, partial_joint_affinities(&members, &index), y)
        })
        .collect()
}

#[test]
fn pooling_with_one_layer_is_a_partition() {
    let sched = make_epoch_schedule(10, 3, 1, 0, &RngStream::new(1));
    let mut layers = vec![vec![[0.0; 2]; 10]];
    let mut parts = problems_for(&sched, &layers);
    for p in &mut parts {
        let t = p.thread as f64;
        for (y, &g) in p.y.iter_mut().zip(&p.p.members) {
            *y = [g as f64, t];
        }
    }
    pool_solutions(&parts, &sched, &mut layers).unwrap();
    for i in 0..10 {
        assert_eq!(layers[0][i][0], i as f64);
        assert_eq!(layers[0][i][1], sched.assignments(i)[0].0 as f64);
    }
}

#[test]
fn pooling_three_layers_from_distinct_threads() {
    let sched = make_epoch_schedule(25, 5, 3, 0, &RngStream::new(2));
    let mut layers = vec![vec![[f64::NAN; 2]; 25]; 3];
    let mut parts = problems_for(&sched, &vec![vec![[0.0; 2]; 25]; 3]);
    for p in &mut parts {
        let t = p.thread as f64;
        p.y.iter_mut().for_each(|y| *y = [t, 0.0]);
    }
    pool_solutions(&parts, &sched, &mut layers).unwrap();
    for i in 0..25 {
        let mut from: Vec<usize> = (0..3).map(|l| layers[l][i][0] as usize).collect();
        for (l, &t) in from.iter().enumerate() {
            assert_eq!(sched.slot(i, t), Some(l));
        }
        from.sort_unstable();
        from.dedup();
        assert_eq!(from.len(), 3);
    }
}

#[test]
fn next_epoch_reads_matching_layer() {
    // ten points traced by hand: layer l of point i holds (i, l)
    let layers: Vec<Vec<Point>> = (0..2).map(|l| (0..10).map(|i| [i as f64, l as f64]).collect()).collect();
    let sched = make_epoch_schedule(10, 4, 2, 1, &RngStream::new(3));
    for p in problems_for(&sched, &layers) {
        for (y, &g) in p.y.iter().zip(&p.p.members) {
            let slot = sched.slot(g, p.thread).unwrap();
            assert_eq!(*y, [g as f64, slot as f64]);
            let c = sched.chunk_of[g];
            assert_eq!(slot, (c + 4 - p.thread) % 4);
        }
    }
}

#[test]
fn missing_partial_is_an_incomplete_epoch() {
    let sched = make_epoch_schedule(12, 3, 2, 0, &RngStream::new(4));
    let mut layers = vec![vec![[0.0; 2]; 12]; 2];
    let mut parts = problems_for(&sched, &layers);
    parts.remove(1);
    assert!(matches!(pool_solutions(&parts, &sched, &mut layers), Err(Error::IncompleteEpoch(1))));
}

#[test]
fn refine_with_no_iterations_is_identity() {
    let data = gaussians(20);
    let cfg = RunConfig { ppx: 20.0, threads: 2, layers: 1, epochs: Some(2), seed: 3, ..RunConfig::default() };
    let out = run_ptsne(&data, &cfg).unwrap();
    let index = build_neighbor_index(&data, 5.0, DEFAULT_TOL).unwrap();
    let same = refine_with_index(&index, &out, &RefineConfig::new(5.0, 0)).unwrap();
    assert_eq!(same.layers, vec![out.layers[0].clone()]);
    let moved = refine_with_index(&index, &out, &RefineConfig::new(5.0, 30)).unwrap();
    assert_eq!(moved.num_layers(), 1);
    assert!(moved.final_cost().unwrap() < moved.costs[0].global);
}

#[test]
fn invalid_configurations() {
    let data = gaussians(5);
    for cfg in [
        RunConfig { threads: 2, layers: 3, ppx: 3.0, ..RunConfig::default() },
        RunConfig { ppx: 0.5, ..RunConfig::default() },
        RunConfig { ppx: 3.0, theta: -0.1, ..RunConfig::default() },
        RunConfig { ppx: 3.0, epochs: Some(0), ..RunConfig::default() },
    ] {
        assert!(matches!(run_ptsne(&data, &cfg), Err(Error::Config(_))), "{cfg:?}");
    }
    let big = RunConfig { ppx: 10.0, ..RunConfig::default() };
    assert!(matches!(run_ptsne(&data, &big), Err(Error::PerplexityTooLarge { .. })));
}
