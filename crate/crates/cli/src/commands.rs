use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use ptsne::cache;
use ptsne::engine::{refine_with_index, run_with_index, with_pool, EmbeddingLayers, RefineConfig, RunConfig};
use ptsne::eval::{auc, default_k_grid, Axis, KnpEvaluator, DEFAULT_GRID};
use ptsne::io::{self, Table};
use ptsne::synth::{generate_synthetic, SyntheticKind, SyntheticSpec};
use ptsne::{build_neighbor_index, DataSet, NeighborIndex, Point};

use crate::error::{CliError, CliResult};
use crate::output::{self, ensure_dir};
use crate::plot::{distance_rank_colors, label_colors, render_svg, DEFAULT_FILL};
use crate::{ColorBy, EvalArgs, GenerateArgs, GenerateKind, InputArgs, PlotArgs, PlotOptions, RefineArgs, RunArgs};

pub const POOL_WIDTH_ENV: &str = "PTSNE_POOL_WIDTH";

fn pool_width() -> CliResult<Option<usize>> {
    match std::env::var(POOL_WIDTH_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(Some(w)),
            _ => Err(CliError::Config(format!("{POOL_WIDTH_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

fn load_table(input: &InputArgs) -> CliResult<Table> {
    Ok(io::load(&input.input, input.label_column.as_deref())?)
}

fn colors(
    opts: &PlotOptions,
    n: usize,
    data: Option<&DataSet>,
    labels: Option<&[String]>,
) -> CliResult<Vec<String>> {
    match opts.color_by {
        ColorBy::None => Ok(vec![DEFAULT_FILL.to_string(); n]),
        ColorBy::PairwiseDistanceRank => {
            let data = data.ok_or_else(|| {
                CliError::Config("pairwise-distance-rank coloring needs the dataset (--input)".into())
            })?;
            if opts.ref_point >= n {
                return Err(CliError::Config(format!("reference point {} out of range (n={n})", opts.ref_point)));
            }
            Ok(distance_rank_colors(data, opts.ref_point))
        }
        ColorBy::LabelColumn => {
            let labels =
                labels.ok_or_else(|| CliError::Config("label-column coloring needs --label-column".into()))?;
            Ok(label_colors(labels))
        }
    }
}

fn write_plot(path: &Path, points: &[Point], opts: &PlotOptions, table: Option<&Table>) -> CliResult<()> {
    let cols = colors(opts, points.len(), table.map(|t| &t.data), table.and_then(|t| t.labels.as_deref()))?;
    output::write_text(path, &render_svg(points, &cols, opts.point_size))
}

struct Quality {
    lin: f64,
    log: f64,
    sampled: bool,
}

fn evaluate(
    data: &DataSet,
    y: &[Point],
    width: Option<usize>,
    knp_path: &Path,
    evaluator: Option<&KnpEvaluator>,
) -> CliResult<Quality> {
    let ks = default_k_grid(data.n(), DEFAULT_GRID);
    let (curve, sampled) = with_pool(width, || -> ptsne::Result<_> {
        let owned;
        let ev = match evaluator {
            Some(e) => e,
            None => {
                owned = KnpEvaluator::new(data);
                &owned
            }
        };
        Ok((ev.curve(y, &ks)?, ev.is_sampled()))
    })??;
    output::write_knp(knp_path, &curve)?;
    Ok(Quality { lin: auc(&curve, Axis::Linear), log: auc(&curve, Axis::Log), sampled })
}

fn quality_meta(s: &mut String, q: &Quality) {
    let _ = writeln!(s, "knp_sampled={}", q.sampled);
    let _ = writeln!(s, "linAUC={:.6}", q.lin);
    let _ = writeln!(s, "logAUC={:.6}", q.log);
}

fn timing_meta(s: &mut String, emb: &EmbeddingLayers) {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(",");
    let _ = writeln!(s, "epoch_seconds={}", join(&emb.epoch_seconds));
    let _ = writeln!(s, "pooling_seconds={}", join(&emb.pooling_seconds));
    let _ = writeln!(s, "total_seconds={:.6}", emb.epoch_seconds.iter().sum::<f64>());
    if let (Some(first), Some(last)) = (emb.costs.first(), emb.costs.last()) {
        let _ = writeln!(s, "initial_cost={}", first.global);
        let _ = writeln!(s, "final_cost={}", last.global);
        let _ = writeln!(s, "cost_exact_z={}", emb.costs.iter().all(|c| c.exact_z));
    }
}

fn neighbor_index(data: &DataSet, cfg: &RunConfig, cache_path: Option<&Path>) -> CliResult<NeighborIndex> {
    if let Some(path) = cache_path {
        if path.exists() {
            let index = cache::load(path, cfg.ppx)?;
            if index.n != data.n() {
                return Err(CliError::Config(format!(
                    "cached index {} has {} points but the data has {}",
                    path.display(),
                    index.n,
                    data.n()
                )));
            }
            log::info!("loaded neighbor index from {}", path.display());
            return Ok(index);
        }
    }
    let index = with_pool(cfg.pool_width, || build_neighbor_index(data, cfg.ppx, cfg.tol))??;
    if let Some(path) = cache_path {
        cache::save(path, &index)?;
    }
    Ok(index)
}

pub fn run(a: RunArgs) -> CliResult<()> {
    let table = load_table(&a.input)?;
    let data = &table.data;
    let n = data.n();
    let cfg = RunConfig {
        ppx: a.ppx,
        threads: a.threads,
        layers: a.layers,
        theta: a.theta,
        epochs: a.epochs,
        iters: a.iters,
        seed: a.seed,
        momentum: !a.no_momentum,
        pool_width: pool_width()?,
        debug_thread: a.debug_thread,
        ..RunConfig::default()
    };
    cfg.validate(n)?;
    if a.plot.color_by == ColorBy::LabelColumn && table.labels.is_none() {
        return Err(CliError::Config("label-column coloring needs --label-column".into()));
    }
    ensure_dir(&a.outdir)?;

    let index = neighbor_index(data, &cfg, a.cache_index.as_deref())?;
    let emb = run_with_index(&index, &cfg)?;

    output::write_embedding(&a.outdir.join("embedding.csv"), &emb)?;
    output::write_costs(&a.outdir.join("cost.csv"), &emb)?;
    if cfg.debug_thread.is_some() {
        output::write_debug(&a.outdir.join("debug_thread.csv"), &emb.debug)?;
    }
    let q = evaluate(data, emb.canonical(), cfg.pool_width, &a.outdir.join("knp.csv"), None)?;

    let mut meta = cfg.to_meta(n);
    timing_meta(&mut meta, &emb);
    quality_meta(&mut meta, &q);
    output::write_text(&a.outdir.join("run_meta"), &meta)?;
    write_plot(&a.outdir.join("scatter.svg"), emb.canonical(), &a.plot, Some(&table))?;
    println!("linAUC={:.6} logAUC={:.6}", q.lin, q.log);
    Ok(())
}

pub fn refine(a: RefineArgs) -> CliResult<()> {
    let table = load_table(&a.input)?;
    let data = &table.data;
    let init = output::read_embedding(&a.embedding)?;
    if init.n() != data.n() {
        return Err(CliError::Config(format!(
            "embedding has {} points but the data has {}",
            init.n(),
            data.n()
        )));
    }
    let cfg = RefineConfig { theta: a.theta, pool_width: pool_width()?, ..RefineConfig::new(a.ppx, a.iters) };
    ptsne::affinity::validate_perplexity(cfg.low_ppx, data.n())?;
    ensure_dir(&a.outdir)?;
    let index = with_pool(cfg.pool_width, || build_neighbor_index(data, cfg.low_ppx, cfg.tol))??;
    let emb = refine_with_index(&index, &init, &cfg)?;

    output::write_embedding(&a.outdir.join("embedding.csv"), &emb)?;
    output::write_costs(&a.outdir.join("cost.csv"), &emb)?;
    let q = evaluate(data, emb.canonical(), cfg.pool_width, &a.outdir.join("knp.csv"), None)?;
    let mut meta = String::new();
    let _ = writeln!(meta, "refine_ppx={}", cfg.low_ppx);
    let _ = writeln!(meta, "extra_iters={}", cfg.extra_iters);
    let _ = writeln!(meta, "theta={}", cfg.theta);
    let _ = writeln!(meta, "n={}", data.n());
    timing_meta(&mut meta, &emb);
    quality_meta(&mut meta, &q);
    output::write_text(&a.outdir.join("run_meta"), &meta)?;
    write_plot(&a.outdir.join("scatter.svg"), emb.canonical(), &a.plot, Some(&table))?;
    println!("linAUC={:.6} logAUC={:.6}", q.lin, q.log);
    Ok(())
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    let table = load_table(&a.input)?;
    let data = &table.data;
    let emb = output::read_embedding(&a.embedding)?;
    if emb.n() != data.n() {
        return Err(CliError::Config(format!(
            "embedding has {} points but the data has {}",
            emb.n(),
            data.n()
        )));
    }
    ensure_dir(&a.outdir)?;
    let width = pool_width()?;
    let layers: Vec<usize> = if a.all_layers { (0..emb.num_layers()).collect() } else { vec![0] };
    let evaluator = with_pool(width, || KnpEvaluator::new(data))?;
    let mut report = String::new();
    for l in layers {
        let name = if a.all_layers { format!("knp_layer{}.csv", l + 1) } else { "knp.csv".into() };
        let q = evaluate(data, &emb.layers[l], width, &a.outdir.join(name), Some(&evaluator))?;
        let _ = writeln!(report, "layer={} linAUC={:.6} logAUC={:.6}", l + 1, q.lin, q.log);
    }
    output::write_text(&a.outdir.join("eval_meta"), &report)?;
    print!("{report}");
    Ok(())
}

pub fn generate(a: GenerateArgs) -> CliResult<()> {
    let kind = match a.kind {
        GenerateKind::Sierpinski => SyntheticKind::Sierpinski { depth: a.depth },
        GenerateKind::Sierpinski3d => SyntheticKind::SierpinskiTetra { depth: a.depth },
        GenerateKind::Gaussians => SyntheticKind::HierarchicalGaussian {
            levels: a.levels,
            clusters: a.clusters,
            points_per_leaf: a.points,
            separation: a.separation,
            dim: a.dim,
        },
    };
    let spec = SyntheticSpec { kind, seed: a.seed, cap: a.cap };
    let syn = generate_synthetic(&spec)?;
    match &a.output {
        Some(path) => {
            let f = std::fs::File::create(path)
                .map_err(|source| CliError::Write { path: path.display().to_string(), source })?;
            io::write_csv(std::io::BufWriter::new(f), &syn.data, Some(&syn.labels))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            io::write_csv(&mut lock, &syn.data, Some(&syn.labels))?;
            let _ = lock.flush();
        }
    }
    Ok(())
}

pub fn plot(a: PlotArgs) -> CliResult<()> {
    let emb = output::read_embedding(&a.embedding)?;
    if a.layer == 0 || a.layer > emb.num_layers() {
        return Err(CliError::Config(format!("layer {} not in 1..={}", a.layer, emb.num_layers())));
    }
    let table = match &a.input {
        Some(path) => Some(io::load(path, a.label_column.as_deref())?),
        None => None,
    };
    if let Some(t) = &table {
        if t.data.n() != emb.n() {
            return Err(CliError::Config(format!(
                "embedding has {} points but the data has {}",
                emb.n(),
                t.data.n()
            )));
        }
    }
    write_plot(&a.output, &emb.layers[a.layer - 1], &a.plot, table.as_ref())
}
