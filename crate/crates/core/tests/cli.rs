use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use a7_core::dqn::{DqnAgent, DqnConfig};
use a7_core::env::GridWorld;
use a7_core::harness::{parse_metrics_csv, ExperimentConfig};

const MAP: &str = "\
S..#
.#..
...G
";

fn a7(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_a7"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = ExperimentConfig {
        total_steps: 1_200,
        budget: 200,
        ..ExperimentConfig::default()
    };
    cfg.eval.interval = 400;
    cfg.eval.episodes = 3;
    let path = dir.join("small.toml");
    cfg.save(&path).unwrap();
    path
}

#[test]
fn run_writes_metrics_config_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let o = a7(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
        "--trace",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    assert!(line.starts_with("strategy=a7 seed=4 auc="), "{line}");

    let metrics = parse_metrics_csv(&fs::read_to_string(out.join("metrics.csv")).unwrap()).unwrap();
    let steps: Vec<u64> = metrics.points.iter().map(|p| p.step).collect();
    assert_eq!(steps, [0, 400, 800, 1200]);
    assert!(metrics.points.iter().all(|p| p.teacher_queries <= 200));

    let saved = ExperimentConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(saved.seed, 4);
    assert_eq!(saved.total_steps, 1_200);

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("step,d_t,sigma,advised,reused,intrinsic_reward"));
    assert_eq!(lines.count(), 1_200);

    for f in ["agent/manifest.txt", "byol_encoder.ckpt", "reuse.ckpt", "advice_pairs.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn eval_loads_a_saved_agent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let o = a7(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--strategy",
        "ea",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());

    let map = dir.path().join("map.txt");
    fs::write(&map, GridWorld::random_walls(10, 10, 0.2, 0, 100).unwrap().to_map_string()).unwrap();
    let manifest = out.join("agent/manifest.txt");
    let o = a7(&[
        "eval",
        "--checkpoint",
        manifest.to_str().unwrap(),
        "--env",
        map.to_str().unwrap(),
        "--episodes",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let score: f64 = stdout(&o).trim().strip_prefix("score=").unwrap().parse().unwrap();
    assert!((-1.0..=1.0).contains(&score));

    let small = dir.path().join("small_map.txt");
    fs::write(&small, MAP).unwrap();
    let o = a7(&["eval", "--checkpoint", manifest.to_str().unwrap(), "--env", small.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let narrow = dir.path().join("narrow");
    DqnAgent::new(5, 4, DqnConfig::default(), 1).unwrap().save(&narrow).unwrap();
    let manifest = narrow.join("manifest.txt");
    let o = a7(&["eval", "--checkpoint", manifest.to_str().unwrap(), "--env", "open"]);
    assert!(!o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.starts_with("error:") && stderr.contains("5 inputs"), "{stderr}");
}

#[test]
fn sweep_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("runs");
    let o = a7(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--strategy",
        "na",
        "--steps",
        "400",
        "--seeds",
        "1..3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    for seed in 1..=3 {
        assert!(text.contains(&format!("strategy=na seed={seed} ")), "{text}");
        assert!(out.join(format!("na-seed{seed}/metrics.csv")).is_file());
    }
}

#[test]
fn run_on_a_map_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let map = dir.path().join("map.txt");
    fs::write(&map, MAP).unwrap();
    let o = a7(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--env",
        map.to_str().unwrap(),
        "--strategy",
        "ra",
        "--steps",
        "400",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("teacher_queries="));
}

#[test]
fn bad_inputs_exit_with_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let broken_map = dir.path().join("broken.txt");
    fs::write(&broken_map, "S.x\n..G\n").unwrap();
    let unsolvable = dir.path().join("walled.txt");
    fs::write(&unsolvable, "S#.\n##.\n..G\n").unwrap();
    let bad_toml = dir.path().join("bad.toml");
    fs::write(&bad_toml, "budget = \"many\"\n").unwrap();
    let cases: [&[&str]; 6] = [
        &["run", "--config", missing.to_str().unwrap()],
        &["run", "--config", bad_toml.to_str().unwrap()],
        &["run", "--env", broken_map.to_str().unwrap(), "--steps", "10"],
        &["run", "--env", unsolvable.to_str().unwrap(), "--steps", "10"],
        &["run", "--steps", "0"],
        &["eval", "--checkpoint", missing.to_str().unwrap(), "--env", "open"],
    ];
    for args in cases {
        let o = a7(args);
        assert!(!o.status.success(), "{args:?} succeeded");
        assert!(
            String::from_utf8_lossy(&o.stderr).starts_with("error:"),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let o = a7(&["sweep", "--seeds", "5..2"]);
    assert!(!o.status.success());
    let o = a7(&["run", "--strategy", "bogus"]);
    assert!(!o.status.success());
}
