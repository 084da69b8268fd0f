//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! straight to stderr so the verdicts show up without `--nocapture`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use sindy_rl::environments::{Action, Environment};
use sindy_rl::seeding;
use sindy_rl_harness::compare::compare_runs;
use sindy_rl_harness::results::read_csv;
use sindy_rl_harness::{fit_only, run_experiment, worker_count, ExperimentConfig, ResultTable, SeedStatus};

fn report(criterion: u32, title: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    writeln!(std::io::stderr(), "[acceptance] criterion {criterion} {verdict}: {title} ({detail})").unwrap();
    assert!(passed, "criterion {criterion}: {title}: {detail}");
}

fn info(criterion: u32, line: &str) {
    writeln!(std::io::stderr(), "[acceptance] criterion {criterion}   {line}").unwrap();
}

fn config(name: &str, overrides: &[&str]) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"));
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::load(&path, &overrides).unwrap()
}

fn exact_recovery(criterion: u32, name: &str, samples: usize) {
    let config = config(name, &[]);
    assert_eq!(config.dyna.rollout_length, samples);
    let seed = config.seeds[0];
    let started = Instant::now();
    let outcome = fit_only(&config, seed).unwrap();
    let seconds = started.elapsed().as_secs_f64();
    let comparison = outcome.comparison.expect("exact dynamics available");
    let passed = comparison.max_deviation <= 1e-4
        && comparison.spurious.is_empty()
        && comparison.missing.is_empty()
        && seconds < 5.0;
    report(
        criterion,
        &format!("{name} exact recovery from one {samples}-step rollout"),
        passed,
        &format!(
            "seed {seed}, max deviation {:.2e} <= 1e-4, {} spurious, {} missing, {seconds:.3}s < 5s",
            comparison.max_deviation,
            comparison.spurious.len(),
            comparison.missing.len()
        ),
    );
}

#[test]
fn mountain_car_exact_recovery() {
    exact_recovery(1, "mountain_car", 100);
}

#[test]
fn pendulum_exact_recovery() {
    exact_recovery(2, "pendulum", 20);
}

#[test]
fn cartpole_approximate_model_predicts_trajectories() {
    let config = config("cartpole", &[]);
    let seed = config.seeds[0];
    let started = Instant::now();
    let model = fit_only(&config, seed).unwrap().model;
    let mut env = Environment::new(config.task().unwrap());
    let mut rng = seeding::stream(seed, "acceptance-starts");
    let mut worst = 0.0f64;
    for _ in 0..50 {
        env.reset(rng.random());
        let mut real = vec![env.state().unwrap().to_vec()];
        let mut predicted = real.clone();
        for t in 0..20 {
            let push_right = if rng.random_bool(0.2) { rng.random_bool(0.5) } else { t % 2 == 0 };
            let step = env.step(&Action::Discrete(push_right as usize)).unwrap();
            let next = model.simulate_step(predicted.last().unwrap(), &step.control, model.dt()).unwrap();
            predicted.push(next);
            real.push(step.next_state);
            if step.done {
                break;
            }
        }
        let scale = real.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (r, p) in real.iter().zip(&predicted) {
            let err = r.iter().zip(p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(err / scale);
        }
    }
    let seconds = started.elapsed().as_secs_f64();
    report(
        3,
        "cartpole model tracks 50 small-angle starts over 20 steps",
        worst <= 0.05 && seconds < 30.0,
        &format!("seed {seed}, worst per-step error {:.2}% of trajectory scale <= 5%, {seconds:.2}s < 30s", 100.0 * worst),
    );
}

struct Run {
    dir: PathBuf,
    table: ResultTable,
    seconds: f64,
}

/// Run outputs, kept under the target directory for inspection.
fn workspace_tmp() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    })
}

fn run(config: &ExperimentConfig, label: &str) -> Run {
    let dir = workspace_tmp().join(label);
    let started = Instant::now();
    let table = run_experiment(config, &dir, worker_count(), None).unwrap();
    Run { dir, table, seconds: started.elapsed().as_secs_f64() }
}

fn dyna_run(name: &str) -> &'static Run {
    static MOUNTAIN_CAR: OnceLock<Run> = OnceLock::new();
    static PENDULUM: OnceLock<Run> = OnceLock::new();
    let cell = match name {
        "mountain_car" => &MOUNTAIN_CAR,
        "pendulum" => &PENDULUM,
        _ => unreachable!(),
    };
    cell.get_or_init(|| run(&config(name, &[]), &format!("{name}_dyna")))
}

#[test]
fn dyna_needs_at_most_two_fine_tuning_episodes() {
    let mut passed = true;
    let mut details = Vec::new();
    for name in ["mountain_car", "pendulum"] {
        let run = dyna_run(name);
        let seeds = &run.table.seeds;
        let good = seeds.iter().filter(|s| s.status == SeedStatus::Converged && s.fine_tuning_episodes() <= 2).count();
        let episodes: Vec<String> = seeds
            .iter()
            .map(|s| match s.status {
                SeedStatus::Converged => s.fine_tuning_episodes().to_string(),
                _ => "-".into(),
            })
            .collect();
        info(4, &format!("{name}: fine-tuning episodes per seed [{}], {:.0}s", episodes.join(" "), run.seconds));
        passed &= seeds.len() == 10 && good >= 8 && run.seconds <= 1800.0;
        details.push(format!("{name} {good}/{} seeds", seeds.len()));
    }
    report(4, "threshold reached with <= 2 fine-tuning episodes on >= 8 of 10 seeds, <= 30 min each", passed, &details.join(", "));
}

#[test]
fn dyna_beats_model_free_sac_by_five_times() {
    let mut passed = true;
    let mut details = Vec::new();
    for (name, budget) in [("mountain_car", 20), ("pendulum", 100)] {
        let dyna = dyna_run(name);
        let episodes = format!("dyna.max_real_episodes={budget}");
        let label = format!("{name}_sac");
        let overrides = ["dyna.model_epochs=0", episodes.as_str()];
        let mut baseline_config = config(name, &overrides);
        baseline_config.name = label.clone();
        let baseline = run(&baseline_config, &label);
        let out = workspace_tmp().join(format!("{name}_comparison"));
        let per_seed = compare_runs(&[baseline.dir.clone(), dyna.dir.clone()], &out).unwrap();
        let strictly_fewer = per_seed.iter().filter(|(_, _, s)| s.at_least().is_some_and(|r| r > 1.0)).count();

        let (header, rows) = read_csv(&out.join("comparison.csv")).unwrap();
        let col = |c: &str| header.iter().position(|h| h == c).unwrap();
        let mean = rows.iter().find(|r| r[col("seed")] == "mean").unwrap();
        let bound: Option<f64> = mean[col("speedup_lower_bound")].parse().ok();
        info(
            5,
            &format!(
                "{name}: reference (N=0) mean steps {}, dyna mean steps {}, ratio {} (lower bound {})",
                mean[col("reference_steps")],
                mean[col("candidate_steps")],
                mean[col("speedup")],
                mean[col("speedup_lower_bound")]
            ),
        );
        passed &= bound.is_some_and(|b| b >= 5.0) && strictly_fewer == per_seed.len();
        details.push(format!(
            "{name}: ratio >= {} with dyna strictly fewer steps on {strictly_fewer}/{} seeds",
            bound.map_or("n/a".to_string(), |b| format!("{b:.1}")),
            per_seed.len()
        ));
    }
    report(5, "dyna reaches the threshold with >= 5x fewer real steps than N=0", passed, &details.join("; "));
}

#[test]
fn parameter_accounting() {
    // (config, P where the library is fixed, reference P')
    let table = [
        ("cartpole", Some(164), 70),
        ("mountain_car", Some(50), 7),
        ("mountain_car_r50", Some(50), 7),
        ("pendulum", None, 10),
        ("inverted_pendulum", None, 50),
    ];
    let mut passed = true;
    let mut failures = Vec::new();
    for (name, fixed_p, reference_nonzero) in table {
        let config = config(name, &[]);
        let model = fit_only(&config, config.seeds[0]).unwrap().model;
        let p = model.parameter_count();
        let nonzero = model.nonzero_count();
        let n_times_f = model.state_dim() * model.library().len();
        let ok_p = p == n_times_f && fixed_p.is_none_or(|fixed| p == fixed);
        let ok_nonzero = nonzero <= p && nonzero <= 2 * reference_nonzero;
        info(
            6,
            &format!(
                "{name}: P = {} x {} = {p}{}, P' = {nonzero} (limit {})",
                model.state_dim(),
                model.library().len(),
                fixed_p.map_or(String::new(), |f| format!(" (expected {f})")),
                2 * reference_nonzero
            ),
        );
        if !ok_p {
            failures.push(format!("{name} P = {p}"));
        }
        if !ok_nonzero {
            failures.push(format!("{name} P' = {nonzero}"));
        }
        passed &= ok_p && ok_nonzero;
    }
    let detail = if failures.is_empty() { "all configs within bounds".to_string() } else { failures.join(", ") };
    report(6, "P = n*F, fixed library sizes, P' <= 2x reference", passed, &detail);
}

#[test]
fn library_property_suites() {
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let output = Command::new(cargo)
        .current_dir(&root)
        .args(["test", "-p", "sindy-rl", "--lib", "--tests", "--quiet"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    let (mut passed_tests, mut failed_tests, mut seconds) = (0usize, 0usize, 0.0f64);
    for line in stdout.lines().filter(|l| l.starts_with("test result:")) {
        for part in line.split(';') {
            let words: Vec<&str> = part.split_whitespace().collect();
            match words.as_slice() {
                [.., n, "passed"] => passed_tests += n.parse::<usize>().unwrap_or(0),
                [n, "failed"] => failed_tests += n.parse::<usize>().unwrap_or(0),
                [.., "finished", "in", t] => seconds += t.trim_end_matches('s').parse::<f64>().unwrap_or(0.0),
                _ => {}
            }
        }
    }
    if !output.status.success() {
        writeln!(std::io::stderr(), "{stdout}\n{}", String::from_utf8_lossy(&output.stderr)).unwrap();
    }
    report(
        7,
        "library property suites",
        output.status.success() && failed_tests == 0 && passed_tests > 0 && seconds < 300.0,
        &format!("{passed_tests} passed, {failed_tests} failed, {seconds:.0}s < 300s"),
    );
}
