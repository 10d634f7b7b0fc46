use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use icql_core::experiment::{mean_stderr, read_metrics, CSV_HEADER};

fn icql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icql"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn icql")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const TINY: &str = r#"
algorithm = "icql"

[env]
height = 5
width = 4
n_agents = 2
episode_limit = 8

[learning]
batch_size = 2
buffer_capacity = 8
target_sync_interval = 3
agent_hidden = 8
central_hidden = 8

[exploration]
epsilon_horizon = 50

[run]
seeds = [0, 1]
episodes = 6
eval_every = 3
eval_episodes = 2
checkpoint_every = 3
"#;

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p
}

fn run_tiny(dir: &Path, out: &str, extra: &[&str]) -> PathBuf {
    let cfg = tiny_config(dir);
    let out_dir = dir.join(out);
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--output", out_dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    ok(&icql(&args));
    out_dir
}

#[test]
fn run_writes_metrics_manifest_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_tiny(tmp.path(), "r", &[]);
    for seed in [0, 1] {
        let rows = read_metrics(&out.join(format!("seed_{seed}.csv"))).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.seed == seed));
        let evals: Vec<u64> = rows.iter().filter(|r| r.test_return_mean.is_some()).map(|r| r.episode).collect();
        assert_eq!(evals, vec![3, 6]);
        assert!(out.join(format!("checkpoints/seed_{seed}_ep_3.ckpt")).exists());
        assert!(out.join(format!("checkpoints/seed_{seed}_ep_6.ckpt")).exists());
    }
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("code_version"));
    assert!(manifest.contains("n_agents = 2"));
}

#[test]
fn runs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_tiny(tmp.path(), "a", &["--seeds", "3"]);
    let b = run_tiny(tmp.path(), "b", &["--seeds", "3"]);
    let read = |d: &Path| std::fs::read(d.join("seed_3.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn unknown_key_is_reported_with_its_path() {
    let out = icql(&["run", "--dry-run", "--set", "learning.gama=0.9"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("learning.gama"), "{err}");

    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.toml");
    std::fs::write(&p, "[env]\nwidht = 3\n").unwrap();
    let out = icql(&["run", "--dry-run", "--config", p.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("widht"));
}

#[test]
fn invalid_values_are_rejected() {
    let out = icql(&["run", "--dry-run", "--set", "learning.gamma=1.5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn flags_override_set_and_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = ok(&icql(&[
        "run",
        "--dry-run",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "run.episodes=99",
        "--set",
        "intrinsic.sigma=0.25",
        "--episodes",
        "7",
        "--algorithm",
        "iql",
        "--seeds",
        "4,5",
    ]));
    let c = icql_core::Config::from_toml_str(&out).unwrap();
    assert_eq!(c.run.episodes, 7);
    assert_eq!(c.algorithm, icql_core::Algorithm::Iql);
    assert_eq!(c.run.seeds, vec![4, 5]);
    assert_eq!(c.intrinsic.sigma, 0.25);
    assert_eq!(c.env.n_agents, 2);
}

#[test]
fn empty_file_gives_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("empty.toml");
    std::fs::write(&p, "").unwrap();
    let out = ok(&icql(&["run", "--dry-run", "--config", p.to_str().unwrap()]));
    assert_eq!(icql_core::Config::from_toml_str(&out).unwrap(), icql_core::Config::default());
}

#[test]
fn zero_sigma_gives_no_bonus() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_tiny(tmp.path(), "z", &["--set", "intrinsic.sigma=0", "--seeds", "0"]);
    let rows = read_metrics(&out.join("seed_0.csv")).unwrap();
    assert!(rows.iter().all(|r| r.bonus_mean == 0.0 && r.bonus_max == 0.0));

    let out = run_tiny(tmp.path(), "nz", &["--seeds", "0"]);
    let rows = read_metrics(&out.join("seed_0.csv")).unwrap();
    assert!(rows.iter().any(|r| r.bonus_max > 0.0));
}

#[test]
fn eval_reads_checkpoint_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_tiny(tmp.path(), "e", &["--seeds", "0"]);
    let ck = out.join("checkpoints/seed_0_ep_6.ckpt");
    let a = ok(&icql(&["eval", ck.to_str().unwrap(), "--episodes", "5", "--seed", "9"]));
    let b = ok(&icql(&["eval", ck.to_str().unwrap(), "--episodes", "5", "--seed", "9"]));
    assert_eq!(a, b);
    assert!(a.starts_with("episodes 5 mean_return "), "{a}");

    // Without the manifest the default 41x10 world has a different input size.
    let moved = tmp.path().join("lone.ckpt");
    std::fs::copy(&ck, &moved).unwrap();
    let out = icql(&["eval", moved.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("inputs per agent"));
}

fn write_seed_csv(dir: &Path, seed: u64, train: &[f64], test: &[(u64, f64)]) {
    std::fs::create_dir_all(dir).unwrap();
    let mut text = CSV_HEADER.join(",") + "\n";
    for (i, r) in train.iter().enumerate() {
        let ep = i as u64 + 1;
        let t = test.iter().find(|p| p.0 == ep).map(|p| p.1.to_string()).unwrap_or_default();
        let se = if t.is_empty() { "" } else { "0" };
        text += &format!("{seed},{ep},{},decentralized,{r},10,,,0,0,0,0.5,{t},{se}\n", ep * 10);
    }
    std::fs::write(dir.join(format!("seed_{seed}.csv")), text).unwrap();
}

fn read_aggregate(path: &Path) -> Vec<(String, String, u64, f64, f64, usize)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.deserialize().map(|x| x.unwrap()).collect()
}

#[test]
fn plot_of_two_constant_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("const");
    write_seed_csv(&run, 0, &[4.0; 4], &[(2, 4.0), (4, 4.0)]);
    write_seed_csv(&run, 1, &[6.0; 4], &[(2, 6.0), (4, 6.0)]);
    let out = tmp.path().join("plots");
    ok(&icql(&["plot", run.to_str().unwrap(), "--output", out.to_str().unwrap(), "--window", "2"]));
    for f in ["const_train.svg", "const_test.svg"] {
        let svg = std::fs::read_to_string(out.join(f)).unwrap();
        assert!(svg.starts_with("<svg"));
    }
    let rows = read_aggregate(&out.join("aggregate.csv"));
    assert_eq!(rows.len(), 4);
    for (group, _, _, mean, stderr, n) in rows {
        assert_eq!(group, "const");
        assert_eq!((mean, stderr, n), (5.0, 1.0, 2));
    }
}

#[test]
fn plot_of_identical_seeds_has_zero_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("same");
    for seed in 0..3 {
        write_seed_csv(&run, seed, &[1.0, 2.0, 3.0, 4.0], &[(4, 2.5)]);
    }
    let out = tmp.path().join("p");
    ok(&icql(&["plot", run.to_str().unwrap(), "--output", out.to_str().unwrap(), "--window", "2"]));
    let rows = read_aggregate(&out.join("aggregate.csv"));
    let train: Vec<(u64, f64)> = rows.iter().filter(|r| r.1 == "train").map(|r| (r.2, r.3)).collect();
    assert_eq!(train, vec![(2, 1.5), (4, 3.5)]);
    assert!(rows.iter().all(|r| r.4 == 0.0));
}

#[test]
fn plot_truncates_to_the_shortest_seed_with_a_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("ragged");
    write_seed_csv(&run, 0, &[1.0; 6], &[(2, 1.0), (4, 1.0), (6, 1.0)]);
    write_seed_csv(&run, 1, &[3.0; 4], &[(2, 3.0), (4, 3.0)]);
    let out = tmp.path().join("p");
    let o = Command::new(env!("CARGO_BIN_EXE_icql"))
        .args(["plot", run.to_str().unwrap(), "--output", out.to_str().unwrap(), "--window", "2"])
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncated"));
    let rows = read_aggregate(&out.join("aggregate.csv"));
    assert!(rows.iter().all(|r| r.2 <= 4));
    assert_eq!(rows.iter().filter(|r| r.1 == "test").count(), 2);
}

#[test]
fn plot_matches_independent_recomputation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut train = Vec::new();
    let mut tests = Vec::new();
    let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|g| tmp.path().join(g)).collect();
    for (g, dir) in dirs.iter().enumerate() {
        for seed in 0..4u64 {
            let tr: Vec<f64> = (0..30).map(|i| ((i * 7 + seed * 13 + g as u64) % 11) as f64 * 0.37).collect();
            let te: Vec<(u64, f64)> = (1..=3).map(|k| (k * 10, (seed * k + g as u64) as f64 * 1.1)).collect();
            write_seed_csv(dir, seed, &tr, &te);
            train.push((g, seed, tr));
            tests.push((g, seed, te));
        }
    }
    let out = tmp.path().join("p");
    ok(&icql(&[
        "plot",
        dirs[0].to_str().unwrap(),
        dirs[1].to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--window",
        "5",
    ]));
    assert!(out.join("train.svg").exists() && out.join("test.svg").exists());
    let rows = read_aggregate(&out.join("aggregate.csv"));
    let mut checked = 0;
    for (group, panel, ep, mean, stderr, n) in &rows {
        let g = if group == "a" { 0 } else { 1 };
        let values: Vec<f64> = if panel == "train" {
            train
                .iter()
                .filter(|t| t.0 == g)
                .map(|t| t.2[(*ep as usize - 5)..*ep as usize].iter().sum::<f64>() / 5.0)
                .collect()
        } else {
            tests.iter().filter(|t| t.0 == g).map(|t| t.2.iter().find(|p| p.0 == *ep).unwrap().1).collect()
        };
        let m = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
        assert!((mean - m).abs() < 1e-12);
        assert!((stderr - (var / values.len() as f64).sqrt()).abs() < 1e-12);
        assert_eq!(*n, 4);
        // Cross-check against the library helper too.
        assert!((mean_stderr(&values).mean - m).abs() < 1e-12);
        checked += 1;
    }
    assert_eq!(checked, 2 * (6 + 3));
}
