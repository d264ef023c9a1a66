use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ptsne::engine::{parse_meta, RunConfig};

fn ptsne(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptsne")).args(args).env("PTSNE_POOL_WIDTH", "2").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gaussians(dir: &Path, points: &str) -> PathBuf {
    let path = dir.join("mix.csv");
    let o = ptsne(&["generate", "gaussians", "--points", points, "--seed", "1", "--output", s(&path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

fn rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn generate_counts() {
    let dir = tempfile::tempdir().unwrap();
    let tri = dir.path().join("tri.csv");
    assert!(ptsne(&["generate", "sierpinski", "--depth", "4", "--output", s(&tri)]).status.success());
    assert_eq!(rows(&tri), 42);
    let mix = dir.path().join("mix.csv");
    let o = ptsne(&["generate", "gaussians", "--levels", "2", "--clusters", "2", "--points", "100", "--output", s(&mix)]);
    assert!(o.status.success());
    assert_eq!(rows(&mix), 400);
    assert_eq!(ptsne(&["generate", "spirals"]).status.code(), Some(2));
    assert_eq!(ptsne(&["generate", "gaussians", "--points", "100", "--cap", "50"]).status.code(), Some(2));
}

#[test]
fn run_writes_all_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let input = gaussians(dir.path(), "60");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = ptsne(&[
            "run", "--input", s(&input), "--label-column", "label", "--outdir", s(&out), "--ppx", "30", "--threads",
            "4", "--layers", "2", "--seed", "7", "--debug-thread", "1",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("a");
    let b = run("b");
    for f in ["embedding.csv", "cost.csv", "knp.csv", "run_meta", "scatter.svg", "debug_thread.csv"] {
        assert!(a.join(f).is_file(), "{f} missing");
    }
    for f in ["embedding.csv", "cost.csv", "knp.csv", "scatter.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    // two layers of 240 points
    assert_eq!(rows(&a.join("embedding.csv")), 480);
    assert_eq!(fs::read_to_string(a.join("scatter.svg")).unwrap().matches("<circle").count(), 240);

    let meta = fs::read_to_string(a.join("run_meta")).unwrap();
    let cfg = RunConfig::from_meta(&meta).unwrap();
    assert_eq!((cfg.ppx, cfg.threads, cfg.layers, cfg.seed), (30.0, 4, 2, 7));
    let keys = parse_meta(&meta);
    assert!(keys.contains_key("linAUC") && keys.contains_key("logAUC"));
}

#[test]
fn invalid_flags_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = gaussians(dir.path(), "20");
    let out = dir.path().join("o");
    let o = ptsne(&["run", "--input", s(&input), "--label-column", "label", "--outdir", s(&out), "--threads", "2", "--layers", "3", "--ppx", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("layers must be ≤ threads"));
    let o = ptsne(&["run", "--input", s(&input), "--label-column", "label", "--outdir", s(&out), "--ppx", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ptsne(&["run", "--input", s(&input), "--outdir", s(&out), "--ppx", "5"]);
    assert_eq!(o.status.code(), Some(2), "label column read as data");
    let o = ptsne(&["run", "--input", s(&dir.path().join("none.csv")), "--outdir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let bad_width = Command::new(env!("CARGO_BIN_EXE_ptsne"))
        .args(["run", "--input", s(&input), "--label-column", "label", "--outdir", s(&out), "--ppx", "5"])
        .env("PTSNE_POOL_WIDTH", "zero")
        .output()
        .unwrap();
    assert_eq!(bad_width.status.code(), Some(2));
}

fn write_embedding(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("emb.csv");
    fs::write(&path, format!("id,layer,x,y\n{body}")).unwrap();
    path
}

#[test]
fn plot_examples() {
    let dir = tempfile::tempdir().unwrap();
    let emb = write_embedding(dir.path(), "0,1,0.0,0.0\n1,1,1.0,2.0\n2,1,-1.0,0.5\n");
    let svg = dir.path().join("p.svg");
    assert!(ptsne(&["plot", "--embedding", s(&emb), "--output", s(&svg)]).status.success());
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<circle").count(), 3);
    assert_eq!(text.matches("fill=\"#1f77b4\"").count(), 3);

    let data = dir.path().join("d.csv");
    fs::write(&data, "a,b\n0,0\n5,5\n1,1\n2,2\n").unwrap();
    let emb = write_embedding(dir.path(), "0,1,0.0,0.0\n1,1,1.0,2.0\n2,1,-1.0,0.5\n3,1,0.3,0.3\n");
    let o = ptsne(&[
        "plot", "--embedding", s(&emb), "--input", s(&data), "--color-by", "pairwise-distance-rank", "--ref-point",
        "0", "--output", s(&svg),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&svg).unwrap();
    let first = text.lines().find(|l| l.starts_with("<circle")).unwrap();
    assert!(first.contains("fill=\"#ff0000\""), "{first}");
    assert!(text.contains("fill=\"#0000ff\""));
}

#[test]
fn malformed_embeddings_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("p.svg");
    for body in ["0,1,0.0\n", "0,1,x,0\n", "0,1,0,0\n0,1,1,1\n", "0,1,0,0\n2,1,1,1\n", "0,0,1,1\n"] {
        let emb = write_embedding(dir.path(), body);
        let o = ptsne(&["plot", "--embedding", s(&emb), "--output", s(&svg)]);
        assert_eq!(o.status.code(), Some(2), "{body:?}: {}", stderr(&o));
    }
    let wrong = dir.path().join("wrong.csv");
    fs::write(&wrong, "i,l,x,y\n0,1,0,0\n").unwrap();
    assert_eq!(ptsne(&["plot", "--embedding", s(&wrong), "--output", s(&svg)]).status.code(), Some(2));
}

#[test]
fn refine_and_eval_follow_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let input = gaussians(dir.path(), "40");
    let first = dir.path().join("first");
    let cache = dir.path().join("index.bin");
    let args = [
        "run", "--input", s(&input), "--label-column", "label", "--outdir", s(&first), "--ppx", "20", "--threads",
        "2", "--layers", "2", "--cache-index", s(&cache),
    ];
    assert!(ptsne(&args).status.success());
    assert!(cache.is_file());
    let before = fs::read(first.join("embedding.csv")).unwrap();
    assert!(ptsne(&args).status.success(), "cached index reused");
    assert_eq!(before, fs::read(first.join("embedding.csv")).unwrap());

    let refined = dir.path().join("refined");
    let o = ptsne(&[
        "refine", "--input", s(&input), "--label-column", "label", "--embedding", s(&first.join("embedding.csv")),
        "--outdir", s(&refined), "--ppx", "5", "--iters", "20",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(rows(&refined.join("embedding.csv")), 160);

    let evaluated = dir.path().join("eval");
    let o = ptsne(&[
        "eval", "--input", s(&input), "--label-column", "label", "--embedding", s(&first.join("embedding.csv")),
        "--outdir", s(&evaluated), "--all-layers",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(evaluated.join("knp_layer1.csv").is_file() && evaluated.join("knp_layer2.csv").is_file());
    assert_eq!(fs::read_to_string(evaluated.join("eval_meta")).unwrap().lines().count(), 2);
}
