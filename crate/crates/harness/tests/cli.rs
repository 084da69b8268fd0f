use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sindy_rl_harness::results::read_csv;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sindy-rl"));
    cmd.env("SINDY_RL_WORKERS", "2");
    cmd
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"))
}

/// A Cart Pole run small enough for a test: short model phase, one
/// fine-tuning episode, tiny networks.
const QUICK: [&str; 9] = [
    "dyna.model_epochs=2",
    "dyna.max_real_episodes=1",
    "dyna.warmup_steps=32",
    "dyna.model_eval_episodes=2",
    "convergence.eval_episodes=2",
    "sac.hidden=[16]",
    "sac.batch_size=16",
    "dyna.rollout_length=20",
    "name=\"quick\"",
];

fn run(out: &Path, seeds: &str, extra: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.arg("run").arg("--config").arg(config("cartpole")).arg("--out").arg(out).arg("--seed-list").arg(seeds);
    for o in QUICK.iter().chain(extra) {
        cmd.arg("--override").arg(o);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = run(&a, "0,1", &[]);
    let second = run(&b, "0,1", &[]);
    assert!(matches!(code(&first), 0 | 3), "{}", stderr(&first));
    assert_eq!(code(&first), code(&second));
    for file in ["raw.csv", "aggregate.csv", "curves.csv", "summary.csv"] {
        let x = std::fs::read(a.join(file)).unwrap();
        let y = std::fs::read(b.join(file)).unwrap();
        assert!(x == y, "{file} differs between identical runs");
    }
    let load = |dir: &Path| {
        let mut c = sindy_rl_harness::ExperimentConfig::load(&dir.join("config.toml"), &[]).unwrap();
        c.output_dir = PathBuf::new();
        c
    };
    assert_eq!(load(&a), load(&b));
    for seed in [0, 1] {
        for file in ["model.txt", "policy.txt"] {
            let p = format!("seeds/seed_{seed}/{file}");
            assert_eq!(std::fs::read(a.join(&p)).unwrap(), std::fs::read(b.join(&p)).unwrap(), "{p}");
        }
    }
}

#[test]
fn aggregates_are_recomputable_from_raw_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "0,1,2", &[]);
    assert!(matches!(code(&out), 0 | 3), "{}", stderr(&out));

    let (raw_header, raw) = read_csv(&dir.path().join("raw.csv")).unwrap();
    let (agg_header, agg) = read_csv(&dir.path().join("aggregate.csv")).unwrap();
    let it = column(&raw_header, "iteration");
    assert!(!agg.is_empty());
    for row in &agg {
        let iteration: usize = row[column(&agg_header, "iteration")].parse().unwrap();
        let matching: Vec<&Vec<String>> = raw.iter().filter(|r| r[it].parse::<usize>().unwrap() == iteration).collect();
        assert_eq!(row[column(&agg_header, "seeds")].parse::<usize>().unwrap(), matching.len());
        for (raw_name, mean_name, std_name) in [
            ("real_steps", "real_steps_mean", "real_steps_std"),
            ("model_steps", "model_steps_mean", "model_steps_std"),
            ("eval_mean", "eval_mean", "eval_std"),
        ] {
            let values: Vec<f64> = matching.iter().map(|r| r[column(&raw_header, raw_name)].parse().unwrap()).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let got_mean: f64 = row[column(&agg_header, mean_name)].parse().unwrap();
            let got_std: f64 = row[column(&agg_header, std_name)].parse().unwrap();
            assert!((got_mean - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{mean_name}: {got_mean} vs {mean}");
            assert!((got_std - std).abs() <= 1e-12 * std.abs().max(1.0), "{std_name}: {got_std} vs {std}");
        }
    }
}

#[test]
fn single_seed_aggregate_equals_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "4", &[]);
    assert!(matches!(code(&out), 0 | 3), "{}", stderr(&out));
    let (raw_header, raw) = read_csv(&dir.path().join("raw.csv")).unwrap();
    let (agg_header, agg) = read_csv(&dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(raw.len(), agg.len());
    for (r, a) in raw.iter().zip(&agg) {
        for (raw_name, mean_name, std_name) in
            [("real_steps", "real_steps_mean", "real_steps_std"), ("eval_mean", "eval_mean", "eval_std")]
        {
            let v: f64 = r[column(&raw_header, raw_name)].parse().unwrap();
            assert_eq!(a[column(&agg_header, mean_name)].parse::<f64>().unwrap(), v);
            assert_eq!(a[column(&agg_header, std_name)].parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn comparing_a_run_with_itself_gives_unit_speedup() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    // Every Cart Pole episode returns at least 1, so a zero target is met at
    // the first evaluation.
    let out = run(&run_dir, "0,1", &["convergence.target=0.0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cmp = dir.path().join("cmp");
    let out = bin().arg("compare").arg(&run_dir).arg(&run_dir).arg("--out").arg(&cmp).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = read_csv(&cmp.join("comparison.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert_eq!(row[column(&header, "speedup")].parse::<f64>().unwrap(), 1.0);
    }
    let curves = std::fs::read_to_string(cmp.join("comparison_curves.csv")).unwrap();
    assert!(curves.starts_with("run,seed,real_steps,eval_mean\n"));
}

#[test]
fn unreached_threshold_is_reported_as_not_reached() {
    let dir = tempfile::tempdir().unwrap();
    let (reached, missed) = (dir.path().join("reached"), dir.path().join("missed"));
    assert_eq!(code(&run(&reached, "0", &["convergence.target=0.0"])), 0);
    let out = run(&missed, "0", &["convergence.target=1e9"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let (header, rows) = read_csv(&missed.join("summary.csv")).unwrap();
    assert_eq!(rows[0][column(&header, "steps_to_threshold")], "not reached");
    assert_eq!(rows[0][column(&header, "status")], "not_converged");

    let cmp = dir.path().join("cmp");
    let out = bin().arg("compare").arg(&reached).arg(&missed).arg("--out").arg(&cmp).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = read_csv(&cmp.join("comparison.csv")).unwrap();
    assert_eq!(rows[0][column(&header, "speedup")], "not reached");
    assert_eq!(rows[0][column(&header, "speedup_lower_bound")], "");

    // With the roles swapped the unreached reference still bounds the ratio.
    let out = bin().arg("compare").arg(&missed).arg(&reached).arg("--out").arg(&cmp).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = read_csv(&cmp.join("comparison.csv")).unwrap();
    assert_eq!(rows[0][column(&header, "speedup")], "not reached");
    let bound: f64 = rows[0][column(&header, "speedup_lower_bound")].parse().unwrap();
    assert!(bound > 0.0);
}

#[test]
fn config_errors_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "0", &["dyna.rolout=3"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("dyna.rolout"), "{}", stderr(&out));

    let out = run(dir.path(), "0", &["environment.name=\"acrobot\""]);
    assert_eq!(code(&out), 1);

    let out = run(dir.path(), "0", &["no-equals-sign"]);
    assert_eq!(code(&out), 1);

    let out = bin().args(["fit", "--config"]).arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn mismatched_environments_cannot_be_compared() {
    let dir = tempfile::tempdir().unwrap();
    let cart = dir.path().join("cart");
    assert!(matches!(code(&run(&cart, "0", &[])), 0 | 3));
    let pend = dir.path().join("pend");
    std::fs::create_dir_all(&pend).unwrap();
    let text = std::fs::read_to_string(cart.join("config.toml")).unwrap();
    let cfg = sindy_rl_harness::ExperimentConfig::from_toml(&text).unwrap();
    let mut other = sindy_rl_harness::ExperimentConfig::load(&config("pendulum"), &[]).unwrap();
    other.seeds = cfg.seeds.clone();
    std::fs::write(pend.join("config.toml"), other.to_toml()).unwrap();
    std::fs::copy(cart.join("summary.csv"), pend.join("summary.csv")).unwrap();
    std::fs::copy(cart.join("curves.csv"), pend.join("curves.csv")).unwrap();
    let out = bin().arg("compare").arg(&cart).arg(&pend).arg("--out").arg(dir.path().join("cmp")).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("environment"), "{}", stderr(&out));
}

#[test]
fn fit_and_print_model_report_the_recovered_equations() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("fit")
        .arg("--config")
        .arg(config("mountain_car"))
        .args(["--seed-list", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("P = 2 x 13 = 26"), "{stdout}");
    assert!(stdout.contains("P' = 7"), "{stdout}");

    let model = dir.path().join("fit/seed_3/model.txt");
    let out = bin().arg("print-model").arg(&model).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let printed = String::from_utf8(out.stdout).unwrap();
    assert!(printed.starts_with("P = 26, P' = 7\n"), "{printed}");
    assert_eq!(printed.lines().count(), 3);

    let out = bin().arg("print-model").arg(dir.path().join("nothing.txt")).output().unwrap();
    assert_eq!(code(&out), 2);
}
