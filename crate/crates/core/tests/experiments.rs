use std::path::PathBuf;

use gosafe::config::ExperimentConfig;
use gosafe::optimizer::Mode;
use gosafe::oracle::{closure, oracle_optimum, oracle_report, GroundTruth};
use gosafe::runner::{compare_modes, comparison_csv, run_experiment, RunLog};
use gosafe::safeset::Mask;
use gosafe::Error;

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn fig1() -> ExperimentConfig {
    ExperimentConfig::load(&config_path("fig1.toml")).unwrap()
}

/// Fig1 with a short cap, for tests that only need a few iterations.
fn quick_fig1() -> ExperimentConfig {
    let mut cfg = fig1();
    cfg.optimizer.max_iterations = 25;
    cfg
}

#[test]
fn shipped_configs_load() {
    for name in ["fig1.toml", "pendulum.toml"] {
        let cfg = ExperimentConfig::load(&config_path(name)).unwrap();
        cfg.build_problem().unwrap();
    }
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = fig1();
    let text = cfg.to_toml_string().unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
}

#[test]
fn unknown_keys_are_rejected() {
    let text = std::fs::read_to_string(config_path("fig1.toml")).unwrap();
    for (from, to) in [
        ("[safety]", "[safety]\nextra = 1"),
        ("seed = 0", "seed = 0\nsede = 1"),
        ("settle_rate", "settle_rat"),
    ] {
        let bad = text.replacen(from, to, 1);
        assert!(
            matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::InvalidConfig { .. })),
            "accepted {to}"
        );
    }
}

#[test]
fn out_of_range_values_are_rejected() {
    let text = std::fs::read_to_string(config_path("fig1.toml")).unwrap();
    for (from, to) in [
        ("mu = 0.013", "mu = -0.013"),
        ("epsilon = 0.05", "epsilon = 0.0"),
        ("max_iterations = 1000", "max_iterations = 0"),
        ("name = \"fig1\"", "name = \"cartpole\""),
        ("value = 3.0", "value = -3.0"),
        ("noise_std = 0.01", "noise_std = -1.0"),
    ] {
        let bad = text.replacen(from, to, 1);
        assert_ne!(bad, text);
        assert!(
            matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::InvalidConfig { .. })),
            "accepted {to}"
        );
    }
}

#[test]
fn runs_are_reproducible_and_logs_parse() {
    let cfg = quick_fig1();
    let dir = tempfile::tempdir().unwrap();
    let first = run_experiment(&cfg, Some(dir.path())).unwrap();
    let second = run_experiment(&cfg, None).unwrap();
    assert_eq!(first.log.to_jsonl(), second.log.to_jsonl());
    let text = std::fs::read_to_string(dir.path().join("run_log.jsonl")).unwrap();
    let parsed = RunLog::from_jsonl(&text).unwrap();
    assert_eq!(parsed, first.log);
    assert_eq!(parsed.header.config, cfg);
    for file in ["safe_set.json", "summary.json", "trajectories.csv", "rewards.csv"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
    let rewards = std::fs::read_to_string(dir.path().join("rewards.csv")).unwrap();
    assert_eq!(rewards.lines().count(), first.log.records.len() + 1);
}

#[test]
fn truncated_logs_still_parse() {
    let res = run_experiment(&quick_fig1(), None).unwrap();
    let text = res.log.to_jsonl();
    let lines: Vec<&str> = text.lines().collect();
    let prefix = lines[..4].join("\n");
    assert_eq!(RunLog::from_jsonl(&prefix).unwrap().records.len(), 3);
    assert!(RunLog::from_jsonl("").is_err());
}

#[test]
fn different_seeds_differ() {
    let mut cfg = quick_fig1();
    let a = run_experiment(&cfg, None).unwrap();
    cfg.seed = 1;
    let b = run_experiment(&cfg, None).unwrap();
    assert_ne!(a.log.records, b.log.records);
}

#[test]
fn comparison_on_fig1() {
    let rows = compare_modes(&fig1(), &[Mode::Safeopt, Mode::Gosafe]).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].best_guess_reward >= rows[0].best_guess_reward);
    assert!(rows.iter().all(|r| r.violations == 0));
    let csv = comparison_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "mode,best_guess_reward,best_guess_lower,iterations,interruptions,violations"
    );
    assert!(lines[1].starts_with("safeopt,") && lines[2].starts_with("gosafe,"));
    assert!(compare_modes(&fig1(), &[Mode::Gosafe]).is_err());
}

#[test]
fn repeated_mode_gives_identical_rows() {
    let rows = compare_modes(&quick_fig1(), &[Mode::Gosafe, Mode::Gosafe]).unwrap();
    assert_eq!(rows[0], rows[1]);
}

/// A coarser fig1 parameter grid is small enough for the oracle, and its closure spans
/// both safe regions.
#[test]
fn fig1_oracle_finds_both_regions() {
    let mut cfg = fig1();
    cfg.grid.params[0].count = 33;
    let problem = cfg.build_problem().unwrap();
    let d = &problem.domain;
    let truth = GroundTruth::from_system(problem.system.as_ref(), d).unwrap();
    let seeds = Mask::from_indices(d.n_cells(), problem.seeds.iter().copied());
    let closed = closure(&seeds, &truth, &problem.lipschitz, d).unwrap();
    let at = |a: f64| d.cell(d.nearest_param(&[a]).unwrap(), problem.nominal_x0);
    assert!(closed.contains(at(-0.625)) && closed.contains(at(0.625)));
    let (best, f) = oracle_optimum(&truth, d, problem.nominal_x0, &closed).unwrap();
    assert!((d.param(d.split(best).0)[0] - 0.62).abs() < 0.03);
    assert!((f - 0.946).abs() < 0.02);
    let report = oracle_report(&cfg).unwrap();
    assert!(report.contains("optimum: params"));
}

#[test]
fn oracle_refuses_large_grids() {
    assert!(matches!(oracle_report(&fig1()), Err(Error::Oracle(_))));
}
