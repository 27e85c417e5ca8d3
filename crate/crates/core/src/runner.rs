//! End-to-end experiment execution: run logs, exports and mode comparison.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::optimizer::{Evaluation, GoSafe, Mode, RunRecord, RunSummary};
use crate::safeset::Mask;
use crate::simulate::simulate;
use crate::Result;

/// First line of every run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: String,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub header: LogHeader,
    pub records: Vec<RunRecord>,
}

impl RunLog {
    /// JSON lines: the header, then one record per iteration.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses a (possibly truncated) log.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| crate::Error::InvalidArgument("empty run log".into()))?;
        let header: LogHeader =
            serde_json::from_str(header).map_err(|e| crate::Error::InvalidArgument(format!("bad log header: {e}")))?;
        let records = lines
            .map(|l| serde_json::from_str(l).map_err(|e| crate::Error::InvalidArgument(format!("bad log record: {e}"))))
            .collect::<Result<Vec<RunRecord>>>()?;
        Ok(RunLog { header, records })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub system: String,
    pub mode: Mode,
    pub seed: u64,
    #[serde(flatten)]
    pub run: RunSummary,
    /// Reward of an unmonitored rollout of the best guess from the nominal state.
    pub best_guess_reward: f64,
    /// Evaluations with at least one sampled `ḡ_i < 0`.
    pub violations: usize,
    /// Smallest sampled `ḡ_i` over every evaluation.
    pub min_gbar: f64,
}

pub struct ExperimentResult {
    pub log: RunLog,
    pub summary: ExperimentSummary,
    pub safe_set: Mask,
}

#[derive(Serialize)]
struct SafeSetExport<'a> {
    param_axes: &'a [Vec<f64>],
    state_axes: &'a [Vec<f64>],
    mu: f64,
    nominal_x0: usize,
    safe: &'a Mask,
    seeds: &'a Mask,
    border: &'a Mask,
    failed_pairs: &'a Mask,
}

struct Outputs {
    log: BufWriter<File>,
    trajectories: BufWriter<File>,
    rewards: BufWriter<File>,
    stride: usize,
}

impl Outputs {
    fn create(dir: &Path, header: &LogHeader, state_dim: usize, q: usize, stride: usize) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut log = BufWriter::new(File::create(dir.join("run_log.jsonl"))?);
        writeln!(log, "{}", serde_json::to_string(header).expect("header serializes"))?;
        log.flush()?;
        let mut trajectories = BufWriter::new(File::create(dir.join("trajectories.csv"))?);
        let mut cols = vec!["iteration".to_string(), "t".to_string()];
        cols.extend((0..state_dim).map(|i| format!("x{i}")));
        cols.push("u0".into());
        cols.extend((0..q).map(|i| format!("gbar{}", i + 1)));
        writeln!(trajectories, "{}", cols.join(","))?;
        let mut rewards = BufWriter::new(File::create(dir.join("rewards.csv"))?);
        writeln!(rewards, "iteration,reward,safe_set_size,stage")?;
        Ok(Outputs {
            log,
            trajectories,
            rewards,
            stride,
        })
    }

    fn write(&mut self, ev: &Evaluation) -> Result<()> {
        let r = &ev.record;
        writeln!(self.log, "{}", serde_json::to_string(r).expect("record serializes"))?;
        self.log.flush()?;
        writeln!(
            self.rewards,
            "{},{},{},{}",
            r.iteration,
            r.reward_observed,
            r.safe_set_size,
            r.stage.as_str()
        )?;
        let n = ev.rollout.trajectory.len();
        for (k, s) in ev.rollout.trajectory.iter().enumerate() {
            if k % self.stride != 0 && k + 1 != n {
                continue;
            }
            let mut row = vec![r.iteration.to_string(), s.t.to_string()];
            row.extend(s.x.iter().map(|v| v.to_string()));
            row.push(s.u.first().copied().unwrap_or(0.0).to_string());
            row.extend(s.gbar.iter().map(|v| v.to_string()));
            writeln!(self.trajectories, "{}", row.join(","))?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.log.flush()?;
        self.trajectories.flush()?;
        self.rewards.flush()?;
        Ok(())
    }
}

/// Runs the configured experiment to completion (or its iteration cap).
///
/// With `out_dir`, writes `run_log.jsonl` (flushed per record, so a crashed
/// run leaves a parseable prefix), `safe_set.json`, `summary.json`,
/// `trajectories.csv` and `rewards.csv`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentResult> {
    let problem = config.build_problem()?;
    let header = LogHeader {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
    };
    let mut opt = GoSafe::new(problem, config.optimizer.clone(), config.seed)?;
    let mut outputs = match out_dir {
        Some(dir) => Some(Outputs::create(
            dir,
            &header,
            opt.domain().state_dim(),
            opt.system().num_constraints(),
            config.output.trajectory_stride,
        )?),
        None => None,
    };
    let mut violations = 0;
    let mut min_gbar = f64::INFINITY;
    let run = opt.run(|ev| {
        let worst = ev
            .rollout
            .trajectory
            .iter()
            .flat_map(|s| s.gbar.iter().copied())
            .fold(f64::INFINITY, f64::min);
        min_gbar = min_gbar.min(worst);
        if worst < 0.0 {
            violations += 1;
        }
        match outputs.as_mut() {
            Some(o) => o.write(ev),
            None => Ok(()),
        }
    })?;
    if let Some(o) = outputs {
        o.finish()?;
    }
    let d = opt.domain();
    let (bg_a, _) = d.split(d.flat_id(&run.best_guess)?);
    let best_guess_reward = simulate(opt.system(), d.param(bg_a), d.state(opt.nominal_x0()))?.reward;
    let summary = ExperimentSummary {
        system: config.system.name.clone(),
        mode: config.optimizer.mode,
        seed: config.seed,
        run,
        best_guess_reward,
        violations,
        min_gbar,
    };
    if let Some(dir) = out_dir {
        let state = opt.state();
        let export = SafeSetExport {
            param_axes: d.param_axes(),
            state_axes: d.state_axes(),
            mu: d.mu(),
            nominal_x0: opt.nominal_x0(),
            safe: &state.safe,
            seeds: opt.seed_mask(),
            border: &state.border,
            failed_pairs: &state.failed_pairs,
        };
        fs::write(
            dir.join("safe_set.json"),
            serde_json::to_string(&export).expect("safe set serializes"),
        )?;
        fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&summary).expect("summary serializes"),
        )?;
    }
    Ok(ExperimentResult {
        log: RunLog {
            header,
            records: opt.records().to_vec(),
        },
        summary,
        safe_set: opt.state().safe.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mode: Mode,
    pub best_guess_reward: f64,
    pub best_guess_lower: f64,
    pub iterations: usize,
    pub interruptions: usize,
    pub violations: usize,
}

/// Runs the same configuration and seed under each mode.
pub fn compare_modes(config: &ExperimentConfig, modes: &[Mode]) -> Result<Vec<ComparisonRow>> {
    if modes.len() < 2 {
        return Err(crate::Error::InvalidArgument("compare needs at least two modes".into()));
    }
    modes
        .iter()
        .map(|mode| {
            let mut cfg = config.clone();
            cfg.optimizer.mode = *mode;
            let res = run_experiment(&cfg, None)?;
            let s = res.summary;
            Ok(ComparisonRow {
                mode: *mode,
                best_guess_reward: s.best_guess_reward,
                best_guess_lower: s.run.best_guess_lower,
                iterations: s.run.iterations,
                interruptions: s.run.interruptions,
                violations: s.violations,
            })
        })
        .collect()
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("mode,best_guess_reward,best_guess_lower,iterations,interruptions,violations\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.mode.as_str(),
            r.best_guess_reward,
            r.best_guess_lower,
            r.iterations,
            r.interruptions,
            r.violations
        ));
    }
    out
}
