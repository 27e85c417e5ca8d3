mod common;

use common::*;
use gosafe::domain::GridDomain;
use gosafe::optimizer::Stage;
use gosafe::optimizer::{
    acquisition_registry, revisit_failed, widest, FailedObservations, GoSafe, Mode, OptimizerSettings, StageBudgets,
    StepOutcome,
};
use gosafe::safeset::{ConfidenceTable, FailRecord, Mask, SafeState};
use gosafe::Error;

fn settings(mode: Mode, failed: FailedObservations) -> OptimizerSettings {
    OptimizerSettings {
        mode,
        practical_mode: false,
        budgets: StageBudgets::default(),
        max_iterations: 2000,
        failed_observations: failed,
    }
}

/// Steps to completion, checking the dispatch order before every step.
fn run_checked(opt: &mut GoSafe) -> Vec<Stage> {
    let eps = opt.problem().lipschitz.epsilon;
    let mut stages = Vec::new();
    loop {
        let (report, _) = opt.stage_report();
        match report.chosen_stage {
            Stage::S2 => assert!(report.s1_width <= eps),
            Stage::S3 | Stage::GlobalMax => {
                assert!(report.s1_width <= eps && report.s2_width <= eps)
            }
            _ => {}
        }
        match opt.step().unwrap() {
            StepOutcome::Done(done) => {
                assert_eq!(done.chosen_stage, Stage::Done);
                return stages;
            }
            StepOutcome::Evaluated(ev) => {
                assert_eq!(ev.record.stage, report.chosen_stage);
                stages.push(ev.record.stage);
            }
        }
    }
}

#[test]
fn pipelines_by_mode() {
    let mut s = settings(Mode::Gosafe, FailedObservations::Zero);
    assert_eq!(s.pipeline(), vec!["s1", "s2", "s3"]);
    s.practical_mode = true;
    assert_eq!(s.pipeline(), vec!["s1", "s2", "global_max"]);
    s.mode = Mode::Safeopt;
    assert_eq!(s.pipeline(), vec!["s1"]);
    assert!(acquisition_registry().build("s4", &toml::Table::new()).is_err());
}

#[test]
fn stages_fire_in_order() {
    let m = micro_instance(2);
    let mut opt = m.optimizer(Mode::Gosafe, 2);
    let stages = run_checked(&mut opt);
    assert_eq!(stages[0], Stage::S1);
    assert!(stages.contains(&Stage::S3));
    for r in opt.records() {
        if matches!(r.stage, Stage::S1 | Stage::S2) {
            assert!(r.safe_outcome && r.switched_at.is_none());
        }
        if r.stage == Stage::S1 {
            assert_eq!(m.domain.split(r.cell).1, m.nominal_x0);
        }
    }
}

#[test]
fn safeopt_stays_at_the_nominal_state() {
    let m = micro_instance(5);
    let mut opt = GoSafe::new(m.problem(16.0), settings(Mode::Safeopt, FailedObservations::Skip), 5).unwrap();
    let stages = run_checked(&mut opt);
    assert!(stages.iter().all(|s| *s == Stage::S1));
    assert!(opt.records().iter().all(|r| m.domain.split(r.cell).1 == m.nominal_x0));
}

#[test]
fn budgets_cap_each_stage() {
    let m = micro_instance(4);
    let mut s = settings(Mode::Gosafe, FailedObservations::Skip);
    s.budgets = StageBudgets {
        s1: Some(3),
        s2: Some(2),
        s3: Some(4),
    };
    let mut opt = GoSafe::new(m.problem(16.0), s, 4).unwrap();
    let summary = opt.run(|_| Ok(())).unwrap();
    let count = |st: Stage| summary.stage_counts.iter().find(|(s, _)| *s == st).unwrap().1;
    assert!(count(Stage::S1) <= 3 && count(Stage::S2) <= 2 && count(Stage::S3) <= 4);
    assert_eq!(
        summary.iterations,
        count(Stage::S1) + count(Stage::S2) + count(Stage::S3)
    );
}

#[test]
fn iteration_cap_is_not_convergence() {
    let m = micro_instance(6);
    let mut s = settings(Mode::Gosafe, FailedObservations::Skip);
    s.max_iterations = 3;
    let mut opt = GoSafe::new(m.problem(16.0), s, 6).unwrap();
    let summary = opt.run(|_| Ok(())).unwrap();
    assert_eq!(summary.iterations, 3);
    assert!(!summary.converged);
}

#[test]
fn seeds_off_the_nominal_state_are_rejected() {
    let m = micro_instance(1);
    let mut p = m.problem(16.0);
    p.seeds = vec![m.domain.cell(0, 0)];
    let err = GoSafe::new(p, settings(Mode::Gosafe, FailedObservations::Zero), 0)
        .err()
        .unwrap();
    assert!(matches!(err, Error::NoSafeSeed(_)));
}

/// Failed experiments under each policy: `skip` learns nothing from them,
/// `zero` keeps one placeholder per pending failure.
#[test]
fn failed_observation_policies() {
    let mut saw_failure = false;
    for seed in 0..20 {
        let m = micro_instance(seed);
        for policy in [FailedObservations::Skip, FailedObservations::Zero] {
            let mut opt = GoSafe::new(m.problem(16.0), settings(Mode::Gosafe, policy), seed).unwrap();
            opt.run(|_| Ok(())).unwrap();
            let safe_evals = opt.records().iter().filter(|r| r.safe_outcome).count();
            let failures = opt.records().len() - safe_evals;
            saw_failure |= failures > 0;
            let n = opt.surrogate().models()[1].len();
            match policy {
                FailedObservations::Skip => assert_eq!(n, safe_evals),
                FailedObservations::Zero => assert_eq!(n, safe_evals + opt.state().fail_states.len()),
            }
            for r in opt.records().iter().filter(|r| !r.safe_outcome) {
                assert_eq!(r.reward_observed, 0.0);
                assert_eq!(r.constraint_observed, vec![0.0]);
            }
        }
    }
    assert!(saw_failure, "no micro instance interrupted an experiment");
}

#[test]
fn failures_are_released_once_off_the_border() {
    let states: Vec<f64> = (0..5).map(|i| i as f64 * 0.1).collect();
    let d = GridDomain::new(vec![vec![0.0, 1.0]], vec![states], 0.06).unwrap();
    let mut s = SafeState::new(&d, Mask::from_indices(d.n_cells(), (0..2).map(|x| d.cell(0, x)))).unwrap();
    let failed = d.cell(1, 1);
    s.failed_pairs.insert(failed);
    s.fail_states.push(FailRecord {
        state: vec![0.1],
        cell: failed,
    });
    assert!(revisit_failed(&mut s, &d).is_empty());
    assert_eq!(s.fail_states.len(), 1);
    for x in 2..5 {
        s.safe.insert(d.cell(0, x));
    }
    // State 0.1 now has occupied neighbours on both sides.
    assert_eq!(revisit_failed(&mut s, &d), vec![failed]);
    assert!(s.fail_states.is_empty() && !s.failed_pairs.contains(failed));
}

#[test]
fn certified_failures_are_released() {
    let d = GridDomain::new(vec![vec![0.0, 1.0]], vec![vec![0.0]], 0.1).unwrap();
    let mut s = SafeState::new(&d, Mask::from_indices(2, [0])).unwrap();
    s.fail_states.push(FailRecord {
        state: vec![0.0],
        cell: 1,
    });
    // Cell 1 is no longer in E_f, e.g. because the update certified it.
    assert_eq!(revisit_failed(&mut s, &d), vec![1]);
    assert!(s.fail_states.is_empty());
}

#[test]
fn widest_breaks_ties_by_smallest_id() {
    let t = ConfidenceTable::from_bounds(2, vec![0.0; 8], vec![1.0, 2.0, 1.0, 2.0, 1.0, 0.5, 0.0, 0.0]).unwrap();
    assert_eq!(widest(&t, [3, 1, 0, 2], 0), Some((0, 2.0)));
    assert_eq!(widest(&t, [2, 1], 1), Some((1, 2.0)));
    assert_eq!(widest(&t, [], 0), None);
}

#[test]
fn same_seed_same_records() {
    let m = micro_instance(8);
    let mut a = m.optimizer(Mode::Gosafe, 3);
    let mut b = m.optimizer(Mode::Gosafe, 3);
    a.run(|_| Ok(())).unwrap();
    b.run(|_| Ok(())).unwrap();
    assert_eq!(a.records(), b.records());
    assert_eq!(a.state(), b.state());
}
