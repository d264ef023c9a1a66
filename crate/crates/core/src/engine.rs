//! Chunk&mix orchestration: schedules epochs, dispatches partial problems to
//! a worker pool, pools their solutions into layers and aggregates costs.
//!
//! Every epoch reshuffles the points into `threads` chunks. Thread `t` owns
//! chunks `t..t+layers` (cyclically); the chunk in its slot `s` reads and
//! writes layer `s`. Workers only see immutable snapshots, and the master is
//! the sole writer of [`EmbeddingLayers`], so results do not depend on the
//! pool width.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;

use crate::affinity::{build_neighbor_index, partial_joint_affinities, validate_perplexity, NeighborIndex, DEFAULT_TOL};
use crate::data::{DataSet, MIN_POINTS};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::schedule::{epoch_count, iters_per_epoch, make_epoch_schedule, EpochSchedule};
use crate::worker::{init_embedding, momentum, Point, PartialProblem, StepStats};

pub const DEFAULT_THETA: f64 = 0.5;
/// Largest thread size for which reported costs use the exact partition function.
pub const EXACT_COST_LIMIT: usize = 5000;
/// Exaggeration is permanently disabled.
pub const EXAGGERATION: f64 = 1.0;
pub const OUTPUT_DIM: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub ppx: f64,
    pub threads: usize,
    pub layers: usize,
    pub theta: f64,
    /// Defaults to `ceil(4 ln n)`.
    pub epochs: Option<usize>,
    /// Defaults to `ceil(4 ln nu)`.
    pub iters: Option<usize>,
    pub seed: u64,
    pub momentum: bool,
    pub tol: f64,
    /// Width of the execution pool; `None` uses the rayon default.
    pub pool_width: Option<usize>,
    /// Collect per-iteration diagnostics for this thread.
    pub debug_thread: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ppx: 30.0,
            threads: 1,
            layers: 1,
            theta: DEFAULT_THETA,
            epochs: None,
            iters: None,
            seed: 0,
            momentum: true,
            tol: DEFAULT_TOL,
            pool_width: None,
            debug_thread: None,
        }
    }
}

impl RunConfig {
    pub fn exaggeration(&self) -> f64 {
        EXAGGERATION
    }

    pub fn rho(&self) -> f64 {
        self.layers as f64 / self.threads as f64
    }

    pub fn nu(&self, n: usize) -> usize {
        (self.rho() * n as f64).round() as usize
    }

    pub fn epoch_count(&self, n: usize) -> usize {
        self.epochs.unwrap_or_else(|| epoch_count(n))
    }

    pub fn iters_per_epoch(&self, n: usize) -> usize {
        self.iters.unwrap_or_else(|| iters_per_epoch(self.nu(n).max(2)))
    }

    /// Copy with the epoch and iteration counts filled in for `n` points.
    pub fn resolved(&self, n: usize) -> RunConfig {
        RunConfig { epochs: Some(self.epoch_count(n)), iters: Some(self.iters_per_epoch(n)), ..self.clone() }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n < MIN_POINTS {
            return Err(Error::InvalidData(format!("need at least {MIN_POINTS} points, got {n}")));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.layers == 0 || self.layers > self.threads {
            return Err(Error::Config(format!(
                "layers must be ≤ threads and at least 1 (layers={}, threads={})",
                self.layers, self.threads
            )));
        }
        if self.threads > n {
            return Err(Error::Config(format!("threads {} exceed the number of points {n}", self.threads)));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta must be in [0, 1], got {}", self.theta)));
        }
        if self.nu(n) < 2 {
            return Err(Error::Config("each thread needs at least 2 points".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.epochs == Some(0) {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.pool_width == Some(0) {
            return Err(Error::Config("pool width must be at least 1".into()));
        }
        if let Some(t) = self.debug_thread {
            if t >= self.threads {
                return Err(Error::Config(format!("debug thread {t} out of range")));
            }
        }
        validate_perplexity(self.ppx, n)?;
        Ok(())
    }

    /// `key=value` lines describing the run for `n` points. Parsing them with
    /// [`RunConfig::from_meta`] returns `self.resolved(n)`.
    pub fn to_meta(&self, n: usize) -> String {
        let r = self.resolved(n);
        let mut s = String::new();
        let _ = writeln!(s, "ppx={}", r.ppx);
        let _ = writeln!(s, "threads={}", r.threads);
        let _ = writeln!(s, "layers={}", r.layers);
        let _ = writeln!(s, "theta={}", r.theta);
        let _ = writeln!(s, "epochs={}", r.epochs.unwrap());
        let _ = writeln!(s, "iters_per_epoch={}", r.iters.unwrap());
        let _ = writeln!(s, "seed={}", r.seed);
        let _ = writeln!(s, "momentum={}", r.momentum);
        let _ = writeln!(s, "tol={}", r.tol);
        if let Some(w) = r.pool_width {
            let _ = writeln!(s, "pool_width={w}");
        }
        if let Some(t) = r.debug_thread {
            let _ = writeln!(s, "debug_thread={t}");
        }
        let _ = writeln!(s, "exaggeration={}", EXAGGERATION);
        let _ = writeln!(s, "dim={OUTPUT_DIM}");
        let _ = writeln!(s, "n={n}");
        let _ = writeln!(s, "rho={}", r.rho());
        let _ = writeln!(s, "nu={}", r.nu(n));
        s
    }

    /// Reads the configuration keys of a run_meta text; other keys are ignored.
    pub fn from_meta(text: &str) -> Result<RunConfig> {
        let map = parse_meta(text);
        fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
            match map.get(key) {
                None => Ok(None),
                Some(v) => v
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::Config(format!("bad value for {key}: {v}"))),
            }
        }
        fn need<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
            get(map, key)?.ok_or_else(|| Error::Config(format!("missing key {key}")))
        }
        Ok(RunConfig {
            ppx: need(&map, "ppx")?,
            threads: need(&map, "threads")?,
            layers: need(&map, "layers")?,
            theta: need(&map, "theta")?,
            epochs: get(&map, "epochs")?,
            iters: get(&map, "iters_per_epoch")?,
            seed: need(&map, "seed")?,
            momentum: get(&map, "momentum")?.unwrap_or(true),
            tol: get(&map, "tol")?.unwrap_or(DEFAULT_TOL),
            pool_width: get(&map, "pool_width")?,
            debug_thread: get(&map, "debug_thread")?,
        })
    }
}

/// Splits `key=value` lines; blank lines and lines starting with `#` are skipped.
pub fn parse_meta(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Pseudo-normalized costs at one point of the trace. Entry 0 is the initial
/// state, entry `e` the state after `e` epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochCost {
    pub epoch: usize,
    pub per_thread: Vec<f64>,
    pub global: f64,
    /// False when some thread used the Barnes-Hut partition function.
    pub exact_z: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DebugRow {
    pub epoch: usize,
    pub stats: StepStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingLayers {
    /// `layers[l][i]` is the position of point `i` in layer `l`; layer 0 is
    /// the canonical output.
    pub layers: Vec<Vec<Point>>,
    pub costs: Vec<EpochCost>,
    /// Wall-clock seconds per epoch.
    pub epoch_seconds: Vec<f64>,
    /// Seconds per epoch spent outside the workers: scheduling, assembling
    /// partial problems and pooling.
    pub pooling_seconds: Vec<f64>,
    pub debug: Vec<DebugRow>,
}

impl EmbeddingLayers {
    pub fn n(&self) -> usize {
        self.layers.first().map_or(0, Vec::len)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn canonical(&self) -> &[Point] {
        &self.layers[0]
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.costs.last().map(|c| c.global)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flatten().all(|p| p[0].is_finite() && p[1].is_finite())
    }

    /// Same positions without costs, timings or diagnostics.
    pub fn positions_equal(&self, other: &EmbeddingLayers) -> bool {
        self.layers == other.layers
    }
}

fn global_cost(epoch: usize, costs: Vec<(f64, bool)>) -> EpochCost {
    let global = costs.iter().map(|c| c.0).sum::<f64>() / costs.len() as f64;
    EpochCost {
        epoch,
        exact_z: costs.iter().all(|c| c.1),
        per_thread: costs.into_iter().map(|c| c.0).collect(),
        global,
    }
}

fn thread_cost(prob: &PartialProblem, theta: f64) -> (f64, bool) {
    if prob.nu() <= EXACT_COST_LIMIT {
        (prob.cost(), true)
    } else {
        (prob.cost_bh(theta.max(0.5)), false)
    }
}

pub fn with_pool<T: Send>(width: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(width.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Writes every partial solution back into the layers: point `i` of thread
/// `t` goes to layer `schedule.slot(i, t)`.
pub fn pool_solutions(
    partials: &[PartialProblem],
    schedule: &EpochSchedule,
    layers: &mut [Vec<Point>],
) -> Result<()> {
    let mut by_thread: Vec<Option<&PartialProblem>> = vec![None; schedule.threads];
    for p in partials {
        if p.thread < schedule.threads {
            by_thread[p.thread] = Some(p);
        }
    }
    let n = schedule.n();
    let mut written = vec![0u8; n * schedule.layers];
    for (t, slot) in by_thread.iter().enumerate() {
        let prob = slot.ok_or(Error::IncompleteEpoch(t))?;
        for (&g, &y) in prob.members().iter().zip(&prob.y) {
            let s = schedule.slot(g, t).ok_or(Error::IncompleteEpoch(t))?;
            layers[s][g] = y;
            written[s * n + g] += 1;
        }
    }
    if let Some(cell) = written.iter().position(|&w| w != 1) {
        let (s, g) = (cell / n, cell % n);
        let t = schedule.assignments(g).into_iter().find(|&(_, sl)| sl == s).map_or(0, |(t, _)| t);
        return Err(Error::IncompleteEpoch(t));
    }
    Ok(())
}

/// Builds the neighbor index and runs the full optimization.
pub fn run_ptsne(data: &DataSet, cfg: &RunConfig) -> Result<EmbeddingLayers> {
    cfg.validate(data.n())?;
    let index = with_pool(cfg.pool_width, || build_neighbor_index(data, cfg.ppx, cfg.tol))??;
    run_with_index(&index, cfg)
}

/// Runs the optimization on a precomputed neighbor index.
pub fn run_with_index(index: &NeighborIndex, cfg: &RunConfig) -> Result<EmbeddingLayers> {
    cfg.validate(index.n)?;
    if (index.ppx - cfg.ppx).abs() > 0.0 {
        return Err(Error::Config(format!(
            "neighbor index was built for perplexity {}, not {}",
            index.ppx, cfg.ppx
        )));
    }
    with_pool(cfg.pool_width, || run_epochs(index, cfg))?
}

fn run_worker(
    mut prob: PartialProblem,
    epoch: usize,
    iters: usize,
    cfg: &RunConfig,
    mu: f64,
) -> Result<(PartialProblem, Option<(f64, bool)>, (f64, bool), Vec<StepStats>)> {
    let thread = prob.thread;
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        let initial = (epoch == 0).then(|| thread_cost(&prob, cfg.theta));
        let trace = cfg.debug_thread == Some(thread);
        let stats = prob.run(iters, cfg.theta, mu, trace)?;
        let fin = thread_cost(&prob, cfg.theta);
        Ok((prob, initial, fin, stats))
    }));
    match outcome {
        Ok(r) => r,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "worker panicked".into());
            Err(Error::WorkerFailure { thread, msg })
        }
    }
}

fn run_epochs(index: &NeighborIndex, cfg: &RunConfig) -> Result<EmbeddingLayers> {
    let n = index.n;
    let rng = RngStream::new(cfg.seed);
    let epochs = cfg.epoch_count(n);
    let iters = cfg.iters_per_epoch(n);
    log::info!(
        "n={n} threads={} layers={} nu={} epochs={epochs} iters={iters}",
        cfg.threads,
        cfg.layers,
        cfg.nu(n)
    );

    let init = init_embedding(n, &mut rng.substream("init", 0));
    let mut out = EmbeddingLayers {
        layers: vec![init; cfg.layers],
        costs: Vec::with_capacity(epochs + 1),
        epoch_seconds: Vec::with_capacity(epochs),
        pooling_seconds: Vec::with_capacity(epochs),
        debug: Vec::new(),
    };

    for e in 0..epochs {
        let start = Instant::now();
        let schedule = make_epoch_schedule(n, cfg.threads, cfg.layers, e, &rng);
        let layers = &out.layers;
        let problems: Vec<PartialProblem> = (0..cfg.threads)
            .into_par_iter()
            .map(|t| {
                let members = schedule.members(t);
                let p = partial_joint_affinities(&members, index);
                let y = members.iter().map(|&g| layers[schedule.slot(g, t).unwrap()][g]).collect();
                PartialProblem::new(t, p, y)
            })
            .collect();
        let assembly = start.elapsed().as_secs_f64();

        let mu = if cfg.momentum { momentum(e, epochs) } else { 0.0 };
        let results: Vec<_> =
            problems.into_par_iter().map(|prob| run_worker(prob, e, iters, cfg, mu)).collect();

        let pool_start = Instant::now();
        let mut partials = Vec::with_capacity(cfg.threads);
        let mut initial = Vec::new();
        let mut finals = Vec::with_capacity(cfg.threads);
        for r in results {
            let (prob, init_cost, fin, stats) = r?;
            if let Some(c) = init_cost {
                initial.push(c);
            }
            finals.push(fin);
            out.debug.extend(stats.into_iter().map(|stats| DebugRow { epoch: e, stats }));
            partials.push(prob);
        }
        pool_solutions(&partials, &schedule, &mut out.layers)?;
        if e == 0 {
            out.costs.push(global_cost(0, initial));
        }
        let cost = global_cost(e + 1, finals);
        log::debug!("epoch {} cost {:.6}", e + 1, cost.global);
        out.costs.push(cost);
        out.pooling_seconds.push(assembly + pool_start.elapsed().as_secs_f64());
        out.epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(out)
}

/// Settings of the single-thread refinement pass.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineConfig {
    pub low_ppx: f64,
    pub extra_iters: usize,
    pub theta: f64,
    pub tol: f64,
    pub pool_width: Option<usize>,
}

impl RefineConfig {
    pub fn new(low_ppx: f64, extra_iters: usize) -> Self {
        RefineConfig { low_ppx, extra_iters, theta: DEFAULT_THETA, tol: DEFAULT_TOL, pool_width: None }
    }
}

/// Full-data gradient descent at a lower perplexity, started from the
/// canonical layer of `init`. Momentum decays over the extra iterations and
/// the result has a single layer.
pub fn refine(data: &DataSet, init: &EmbeddingLayers, cfg: &RefineConfig) -> Result<EmbeddingLayers> {
    validate_perplexity(cfg.low_ppx, data.n())?;
    let index = with_pool(cfg.pool_width, || build_neighbor_index(data, cfg.low_ppx, cfg.tol))??;
    refine_with_index(&index, init, cfg)
}

pub fn refine_with_index(index: &NeighborIndex, init: &EmbeddingLayers, cfg: &RefineConfig) -> Result<EmbeddingLayers> {
    if init.n() != index.n {
        return Err(Error::Config(format!(
            "embedding has {} points but the data has {}",
            init.n(),
            index.n
        )));
    }
    if !(0.0..=1.0).contains(&cfg.theta) {
        return Err(Error::Config(format!("theta must be in [0, 1], got {}", cfg.theta)));
    }
    with_pool(cfg.pool_width, || {
        let start = Instant::now();
        let members: Vec<usize> = (0..index.n).collect();
        let p = partial_joint_affinities(&members, index);
        let mut prob = PartialProblem::new(0, p, init.canonical().to_vec());
        let first = thread_cost(&prob, cfg.theta);
        for t in 0..cfg.extra_iters {
            prob.step(cfg.theta, momentum(t, cfg.extra_iters))?;
        }
        let last = thread_cost(&prob, cfg.theta);
        Ok(EmbeddingLayers {
            layers: vec![prob.y],
            costs: vec![global_cost(0, vec![first]), global_cost(1, vec![last])],
            epoch_seconds: vec![start.elapsed().as_secs_f64()],
            pooling_seconds: vec![0.0],
            debug: Vec::new(),
        })
    })?
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_invariants() {
        let mut cfg = RunConfig { ppx: 5.0, threads: 4, layers: 2, ..RunConfig::default() };
        assert!(cfg.validate(100).is_ok());
        assert_eq!(cfg.rho(), 0.5);
        assert_eq!(cfg.nu(100), 50);
        assert_eq!(cfg.exaggeration(), 1.0);
        cfg.layers = 5;
        assert!(matches!(cfg.validate(100), Err(Error::Config(_))));
        cfg.layers = 2;
        cfg.theta = 1.5;
        assert!(cfg.validate(100).is_err());
        cfg.theta = 0.5;
        cfg.ppx = 40.0;
        assert!(matches!(cfg.validate(100), Err(Error::PerplexityTooLarge { .. })));
    }

    #[test]
    fn meta_round_trip() {
        let cfg = RunConfig {
            ppx: 12.5,
            threads: 6,
            layers: 3,
            theta: 0.25,
            seed: u64::MAX - 3,
            momentum: false,
            tol: 1e-7,
            pool_width: Some(8),
            debug_thread: Some(2),
            ..RunConfig::default()
        };
        let text = cfg.to_meta(1234);
        assert!(text.contains("rho=0.5\n"));
        assert!(text.contains("nu=617\n"));
        assert_eq!(RunConfig::from_meta(&text).unwrap(), cfg.resolved(1234));
    }
}
