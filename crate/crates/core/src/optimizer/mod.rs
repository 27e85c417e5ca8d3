//! The GoSafe loop: stage dispatch, acquisition, rollouts, model and set
//! updates, and failed-experiment bookkeeping.

mod acquisition;

pub use acquisition::{
    acquire_global_max, acquire_s1, acquire_s2, acquire_s3, acquisition_registry, global_max_candidates, s1_candidates,
    s2_candidates, s3_candidates, widest, Acquisition, AcquisitionContext, ExpanderStage, GlobalMaxStage, GlobalStage,
    SafeOptStage, Stage,
};

use std::str::FromStr;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{GridDomain, GridPoint, LipschitzConfig};
use crate::gp::{BetaSchedule, GridPosterior, Kernel, SurrogateModel};
use crate::safeset::{
    add_global_point, best_guess, compute_border, compute_expanders, compute_maximizers, expand_safe_set,
    ConfidenceTable, Mask, SafeState,
};
use crate::simulate::{rollout, InterruptRule, RolloutRecord, Snapshot, SystemModel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// All three stages.
    Gosafe,
    /// Stage one only: plain SafeOpt at the nominal state.
    Safeopt,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Gosafe => "gosafe",
            Mode::Safeopt => "safeopt",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gosafe" => Ok(Mode::Gosafe),
            "safeopt" => Ok(Mode::Safeopt),
            other => Err(Error::UnknownName {
                kind: "mode",
                name: other.to_string(),
                available: "gosafe, safeopt".into(),
            }),
        }
    }
}

/// What the models learn from an interrupted experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailedObservations {
    /// Reward 0 and constraints 0 at the commanded pair, removed again if
    /// the pair is revisited.
    Zero,
    /// Nothing is recorded.
    Skip,
}

/// Optional per-stage evaluation caps. `s3` also caps the global-max rule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageBudgets {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s3: Option<usize>,
}

impl StageBudgets {
    fn cap(&self, stage: Stage) -> Option<usize> {
        match stage {
            Stage::S1 => self.s1,
            Stage::S2 => self.s2,
            Stage::S3 | Stage::GlobalMax => self.s3,
            Stage::Done => None,
        }
    }
}

fn default_mode() -> Mode {
    Mode::Gosafe
}
fn default_max_iterations() -> usize {
    500
}
fn default_failed() -> FailedObservations {
    FailedObservations::Zero
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Replace global exploration with a search over the nominal state only.
    #[serde(default)]
    pub practical_mode: bool,
    #[serde(default)]
    pub budgets: StageBudgets,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_failed")]
    pub failed_observations: FailedObservations,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            mode: default_mode(),
            practical_mode: false,
            budgets: StageBudgets::default(),
            max_iterations: default_max_iterations(),
            failed_observations: default_failed(),
        }
    }
}

impl OptimizerSettings {
    /// Acquisition rule names in dispatch order.
    pub fn pipeline(&self) -> Vec<&'static str> {
        match (self.mode, self.practical_mode) {
            (Mode::Safeopt, _) => vec!["s1"],
            (Mode::Gosafe, false) => vec!["s1", "s2", "s3"],
            (Mode::Gosafe, true) => vec!["s1", "s2", "global_max"],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConditionReport {
    /// Largest width over `G ∪ M` at the nominal state, all indices.
    pub s1_width: f64,
    /// Largest constraint width over `G`.
    pub s2_width: f64,
    pub chosen_stage: Stage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iteration: usize,
    pub stage: Stage,
    pub evaluated: GridPoint,
    pub cell: usize,
    pub params: Vec<f64>,
    pub x0: Vec<f64>,
    pub safe_outcome: bool,
    pub reward_observed: f64,
    pub constraint_observed: Vec<f64>,
    /// Smallest sampled `ḡ_i` along the whole trajectory, backup included.
    pub gbar_min: Vec<f64>,
    pub switched_at: Option<f64>,
    pub safe_set_size: usize,
    pub failed_pairs: usize,
    pub best_guess: Vec<f64>,
    pub best_guess_lower: f64,
    pub s1_width: f64,
    pub s2_width: f64,
}

pub struct Evaluation {
    pub record: RunRecord,
    pub rollout: RolloutRecord,
}

pub enum StepOutcome {
    Evaluated(Box<Evaluation>),
    Done(StageConditionReport),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    /// Whether the stage conditions were exhausted (as opposed to the
    /// iteration cap).
    pub converged: bool,
    pub final_report: StageConditionReport,
    pub best_guess: GridPoint,
    pub best_guess_params: Vec<f64>,
    pub best_guess_lower: f64,
    pub safe_set_size: usize,
    pub interruptions: usize,
    pub stage_counts: Vec<(Stage, usize)>,
}

/// Everything fixed about an optimization problem.
pub struct Problem {
    pub domain: GridDomain,
    pub system: Box<dyn SystemModel>,
    /// One per index; index 0 is the reward.
    pub kernels: Vec<Kernel>,
    /// Observation noise: both injected into measurements and assumed by the GPs.
    pub noise_std: f64,
    pub beta: BetaSchedule,
    pub lipschitz: LipschitzConfig,
    /// Flat state index of the nominal initial condition.
    pub nominal_x0: usize,
    /// Cells of `S_0`.
    pub seeds: Vec<usize>,
    pub interrupt: Box<dyn InterruptRule>,
}

pub struct GoSafe {
    problem: Problem,
    settings: OptimizerSettings,
    pipeline: Vec<Box<dyn Acquisition>>,
    surrogate: SurrogateModel,
    caches: Vec<GridPosterior>,
    table: ConfidenceTable,
    state: SafeState,
    seed_mask: Mask,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    iteration: usize,
    stage_counts: Vec<(Stage, usize)>,
    interruptions: usize,
    records: Vec<RunRecord>,
}

impl GoSafe {
    pub fn new(problem: Problem, settings: OptimizerSettings, seed: u64) -> Result<Self> {
        let d = &problem.domain;
        let sys = &problem.system;
        if sys.state_dim() != d.state_dim() || sys.param_dim() != d.param_dim() {
            return Err(Error::InvalidArgument("system dimensions do not match the grid".into()));
        }
        if problem.kernels.len() != sys.num_constraints() + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} kernels (reward plus constraints), got {}",
                sys.num_constraints() + 1,
                problem.kernels.len()
            )));
        }
        if problem.kernels.iter().any(|k| k.dim() != d.param_dim() + d.state_dim()) {
            return Err(Error::InvalidArgument(
                "kernel input dimension must equal parameter plus state dimension".into(),
            ));
        }
        problem.lipschitz.validate()?;
        problem.beta.validate()?;
        if problem.nominal_x0 >= d.n_states() {
            return Err(Error::InvalidArgument("nominal state out of range".into()));
        }
        if problem.seeds.iter().any(|c| *c >= d.n_cells()) {
            return Err(Error::InvalidArgument("seed cell out of range".into()));
        }
        let seed_mask = Mask::from_indices(d.n_cells(), problem.seeds.iter().copied());
        if !(0..d.n_params()).any(|a| seed_mask.contains(d.cell(a, problem.nominal_x0))) {
            return Err(Error::NoSafeSeed(
                "no seed parameter at the nominal initial condition".into(),
            ));
        }
        let registry = acquisition_registry();
        let pipeline = settings
            .pipeline()
            .into_iter()
            .map(|name| registry.build(name, &toml::Table::new()))
            .collect::<Result<Vec<_>>>()?;
        let surrogate = SurrogateModel::new(problem.kernels.clone(), problem.noise_std)?;
        let inputs = d.normalized_inputs();
        let caches = surrogate
            .models()
            .iter()
            .map(|m| GridPosterior::new(inputs.clone(), m))
            .collect();
        let table = ConfidenceTable::initial(d, surrogate.num_indices(), &seed_mask, &problem.lipschitz)?;
        let state = SafeState::new(d, seed_mask.clone())?;
        let noise =
            Normal::new(0.0, problem.noise_std).map_err(|e| Error::InvalidArgument(format!("noise_std: {e}")))?;
        let stage_counts = pipeline.iter().map(|r| (r.stage(), 0)).collect();
        let mut opt = GoSafe {
            problem,
            settings,
            pipeline,
            surrogate,
            caches,
            table,
            state,
            seed_mask,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise,
            iteration: 0,
            stage_counts,
            interruptions: 0,
            records: Vec::new(),
        };
        opt.update_table();
        opt.update_sets();
        Ok(opt)
    }

    pub fn domain(&self) -> &GridDomain {
        &self.problem.domain
    }

    pub fn system(&self) -> &dyn SystemModel {
        self.problem.system.as_ref()
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn settings(&self) -> &OptimizerSettings {
        &self.settings
    }

    pub fn state(&self) -> &SafeState {
        &self.state
    }

    pub fn table(&self) -> &ConfidenceTable {
        &self.table
    }

    pub fn surrogate(&self) -> &SurrogateModel {
        &self.surrogate
    }

    pub fn seed_mask(&self) -> &Mask {
        &self.seed_mask
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn nominal_x0(&self) -> usize {
        self.problem.nominal_x0
    }

    fn ctx(&self) -> AcquisitionContext<'_> {
        AcquisitionContext {
            domain: &self.problem.domain,
            state: &self.state,
            table: &self.table,
            nominal_x0: self.problem.nominal_x0,
        }
    }

    /// `C_n = C_{n−1} ∩ Q_n` with `n` one past the completed evaluations.
    fn update_table(&mut self) {
        let beta = self.problem.beta.at(self.iteration + 1);
        for (i, cache) in self.caches.iter_mut().enumerate() {
            cache.sync(&self.surrogate.models()[i]);
            self.table.intersect(i, cache.mean(), cache.var(), beta);
        }
    }

    /// Safe-set update, failure revisiting, and the derived sets.
    fn update_sets(&mut self) {
        let d = &self.problem.domain;
        self.state = expand_safe_set(&self.state, &self.table, &self.problem.lipschitz, d);
        self.revisit_failed();
        let d = &self.problem.domain;
        self.state.expanders = compute_expanders(&self.state, &self.table, &self.problem.lipschitz, d);
        self.state.maximizers = compute_maximizers(&self.state, &self.table, self.problem.nominal_x0, d);
    }

    /// Drops failures whose switching state left the border (or whose pair
    /// has since been certified), together with their placeholder data.
    fn revisit_failed(&mut self) {
        let released = revisit_failed(&mut self.state, &self.problem.domain);
        for cell in released {
            if let Err(e) = self.surrogate.remove_tagged(cell) {
                log::warn!("could not drop placeholder observations for cell {cell}: {e}");
            }
        }
    }

    /// Which stage fires next, and on which cell.
    pub fn stage_report(&self) -> (StageConditionReport, Option<(usize, usize)>) {
        let ctx = self.ctx();
        let s1_width = widest(&self.table, s1_candidates(&ctx), 0).map_or(0.0, |(_, w)| w);
        let s2_width = widest(&self.table, s2_candidates(&ctx), 1).map_or(0.0, |(_, w)| w);
        let mut chosen = None;
        if self.iteration < self.settings.max_iterations {
            let eps = self.problem.lipschitz.epsilon;
            for (k, rule) in self.pipeline.iter().enumerate() {
                let stage = rule.stage();
                if let Some(cap) = self.settings.budgets.cap(stage) {
                    if self.stage_counts[k].1 >= cap {
                        continue;
                    }
                }
                if let Some((cell, w)) = rule.select(&ctx) {
                    if rule.condition(w, eps) {
                        chosen = Some((k, cell));
                        break;
                    }
                }
            }
        }
        let chosen_stage = chosen.map_or(Stage::Done, |(k, _)| self.pipeline[k].stage());
        (
            StageConditionReport {
                s1_width,
                s2_width,
                chosen_stage,
            },
            chosen,
        )
    }

    /// Best guess at the nominal state and its reward lower bound.
    pub fn best_guess(&self) -> Result<(usize, f64)> {
        let cell = best_guess(&self.state, &self.table, self.problem.nominal_x0, &self.problem.domain)?;
        Ok((cell, self.table.lower(cell, 0)))
    }

    /// One iteration of the loop: select, roll out, learn, update sets.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let (report, chosen) = self.stage_report();
        let Some((k, cell)) = chosen else {
            return Ok(StepOutcome::Done(report));
        };
        let stage = self.pipeline[k].stage();
        let d = &self.problem.domain;
        let (a_flat, x_flat) = d.split(cell);
        let x0 = d.state(x_flat).to_vec();
        if matches!(stage, Stage::S1 | Stage::S2) && !self.state.is_safe(cell) {
            return Err(Error::InvalidArgument(format!(
                "{} selected unsafe cell {cell}",
                stage.as_str()
            )));
        }
        let snapshot = Snapshot {
            domain: d,
            safe: &self.state,
            table: &self.table,
            cfg: &self.problem.lipschitz,
        };
        let ro = rollout(
            self.problem.system.as_ref(),
            a_flat,
            &x0,
            snapshot,
            self.problem.interrupt.as_ref(),
        )?;

        let input = d.normalized_input(cell);
        let (reward_observed, constraint_observed) = if ro.safe {
            let r = ro.reward + self.noise.sample(&mut self.rng);
            let g: Vec<f64> = ro.g_min.iter().map(|v| v + self.noise.sample(&mut self.rng)).collect();
            self.surrogate.add_observation(&input, 0, r)?;
            for (i, v) in g.iter().enumerate() {
                self.surrogate.add_observation(&input, i + 1, *v)?;
            }
            (r, g)
        } else {
            self.interruptions += 1;
            self.state.failed_pairs.insert(cell);
            self.state.fail_states.push(crate::safeset::FailRecord {
                state: ro.x_fail.clone().expect("interrupted rollout has a switch state"),
                cell,
            });
            let g = ro.observed_constraints();
            if self.settings.failed_observations == FailedObservations::Zero {
                self.surrogate.add_tagged(&input, 0, 0.0, Some(cell))?;
                for (i, v) in g.iter().enumerate() {
                    self.surrogate.add_tagged(&input, i + 1, *v, Some(cell))?;
                }
            }
            (0.0, g)
        };

        self.iteration += 1;
        self.stage_counts[k].1 += 1;
        self.update_table();
        if ro.safe && matches!(stage, Stage::S3 | Stage::GlobalMax) {
            let point = self.problem.domain.point(cell);
            self.state = add_global_point(&self.state, &point, &self.problem.domain)?;
        }
        self.update_sets();

        let (bg, bg_lower) = self.best_guess()?;
        let d = &self.problem.domain;
        let record = RunRecord {
            iteration: self.iteration,
            stage,
            evaluated: d.point(cell),
            cell,
            params: d.param(a_flat).to_vec(),
            x0,
            safe_outcome: ro.safe,
            reward_observed,
            constraint_observed,
            gbar_min: ro.g_min.clone(),
            switched_at: ro.switched_at,
            safe_set_size: self.state.safe.count(),
            failed_pairs: self.state.failed_pairs.count(),
            best_guess: d.param(d.split(bg).0).to_vec(),
            best_guess_lower: bg_lower,
            s1_width: report.s1_width,
            s2_width: report.s2_width,
        };
        debug!(
            "iteration {} {} cell {} safe={} |S|={}",
            record.iteration,
            stage.as_str(),
            cell,
            ro.safe,
            record.safe_set_size
        );
        self.records.push(record.clone());
        Ok(StepOutcome::Evaluated(Box::new(Evaluation { record, rollout: ro })))
    }

    /// Steps until the stage conditions are exhausted or the iteration cap.
    pub fn run(&mut self, mut on_eval: impl FnMut(&Evaluation) -> Result<()>) -> Result<RunSummary> {
        loop {
            match self.step()? {
                StepOutcome::Evaluated(ev) => on_eval(&ev)?,
                StepOutcome::Done(report) => {
                    let converged = self.iteration < self.settings.max_iterations;
                    info!(
                        "finished after {} iterations ({})",
                        self.iteration,
                        if converged { "converged" } else { "iteration cap" }
                    );
                    return self.summary(report, converged);
                }
            }
        }
    }

    pub fn summary(&self, final_report: StageConditionReport, converged: bool) -> Result<RunSummary> {
        let (bg, lower) = self.best_guess()?;
        let d = &self.problem.domain;
        Ok(RunSummary {
            iterations: self.iteration,
            converged,
            final_report,
            best_guess: d.point(bg),
            best_guess_params: d.param(d.split(bg).0).to_vec(),
            best_guess_lower: lower,
            safe_set_size: self.state.safe.count(),
            interruptions: self.interruptions,
            stage_counts: self.stage_counts.clone(),
        })
    }
}

/// Releases failures whose switching state no longer quantizes onto the
/// border, and failures whose pair is no longer in `E_f`. Refreshes the
/// border first. Returns the cells that left `E_f` or lost their last record.
pub fn revisit_failed(state: &mut SafeState, domain: &GridDomain) -> Vec<usize> {
    state.border = compute_border(state, domain);
    let mut touched = Vec::new();
    let border = state.border.clone();
    let failed = state.failed_pairs.clone();
    state.fail_states.retain(|rec| {
        let on_border = match domain.quantize_flat(&rec.state) {
            Ok(q) => border.contains(q),
            Err(_) => true,
        };
        let keep = on_border && failed.contains(rec.cell);
        if !keep {
            touched.push(rec.cell);
        }
        keep
    });
    touched.sort_unstable();
    touched.dedup();
    let mut released = Vec::new();
    for cell in touched {
        if !state.fail_states.iter().any(|r| r.cell == cell) {
            state.failed_pairs.remove(cell);
            released.push(cell);
        }
    }
    released
}
