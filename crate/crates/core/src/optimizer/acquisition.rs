use serde::{Deserialize, Serialize};

use crate::domain::GridDomain;
use crate::registry::Registry;
use crate::safeset::{ConfidenceTable, Mask, SafeState};
use crate::Error;

/// Which rule chose the evaluated point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    S1,
    S2,
    S3,
    GlobalMax,
    Done,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::S1 => "s1",
            Stage::S2 => "s2",
            Stage::S3 => "s3",
            Stage::GlobalMax => "global_max",
            Stage::Done => "done",
        }
    }
}

/// Read-only inputs of an acquisition rule.
#[derive(Clone, Copy)]
pub struct AcquisitionContext<'a> {
    pub domain: &'a GridDomain,
    pub state: &'a SafeState,
    pub table: &'a ConfidenceTable,
    pub nominal_x0: usize,
}

fn max_width(table: &ConfidenceTable, cell: usize, from: usize) -> f64 {
    (from..table.num_indices())
        .map(|i| table.width(cell, i))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Argmax of the largest width over indices `from..`; ties go to the
/// smallest id. Returns the cell and its width.
pub fn widest(
    table: &ConfidenceTable,
    candidates: impl IntoIterator<Item = usize>,
    from: usize,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for c in candidates {
        let w = max_width(table, c, from);
        if best.is_none_or(|(bc, b)| w > b || (w == b && c < bc)) {
            best = Some((c, w));
        }
    }
    best
}

/// `(G ∪ M)` restricted to the nominal state, in id order.
pub fn s1_candidates(ctx: &AcquisitionContext<'_>) -> Vec<usize> {
    (0..ctx.domain.n_params())
        .map(|a| ctx.domain.cell(a, ctx.nominal_x0))
        .filter(|c| ctx.state.expanders.contains(*c) || ctx.state.maximizers.contains(*c))
        .collect()
}

pub fn s2_candidates(ctx: &AcquisitionContext<'_>) -> Vec<usize> {
    ctx.state.expanders.iter().collect()
}

/// Pairs outside `S ∪ E_f` whose state has some safe parameter.
pub fn s3_candidates(ctx: &AcquisitionContext<'_>) -> Vec<usize> {
    let d = ctx.domain;
    let occupied: Mask = ctx.state.safe_states(d);
    (0..d.n_cells())
        .filter(|c| {
            !ctx.state.safe.contains(*c) && !ctx.state.failed_pairs.contains(*c) && occupied.contains(c % d.n_states())
        })
        .collect()
}

/// Every parameter at the nominal state except failed pairs.
pub fn global_max_candidates(ctx: &AcquisitionContext<'_>) -> Vec<usize> {
    (0..ctx.domain.n_params())
        .map(|a| ctx.domain.cell(a, ctx.nominal_x0))
        .filter(|c| !ctx.state.failed_pairs.contains(*c))
        .collect()
}

/// S1: widest of `G ∪ M` at the nominal state over all indices.
pub fn acquire_s1(ctx: &AcquisitionContext<'_>) -> Option<usize> {
    widest(ctx.table, s1_candidates(ctx), 0).map(|(c, _)| c)
}

/// S2: widest expander over constraint indices only.
pub fn acquire_s2(ctx: &AcquisitionContext<'_>) -> Option<usize> {
    widest(ctx.table, s2_candidates(ctx), 1).map(|(c, _)| c)
}

/// S3: widest unexplored pair at a state with a backup. `None` means
/// global exploration is complete.
pub fn acquire_s3(ctx: &AcquisitionContext<'_>) -> Option<usize> {
    widest(ctx.table, s3_candidates(ctx), 0).map(|(c, _)| c)
}

/// Practical global search: widest parameter at the nominal state, failed pairs excluded.
pub fn acquire_global_max(ctx: &AcquisitionContext<'_>) -> Option<usize> {
    widest(ctx.table, global_max_candidates(ctx), 0).map(|(c, _)| c)
}

/// An acquisition rule: a candidate set plus the width index range it ranks by.
pub trait Acquisition: Send + Sync {
    fn stage(&self) -> Stage;
    fn candidates(&self, ctx: &AcquisitionContext<'_>) -> Vec<usize>;
    /// First index included in the width maximum (1 skips the reward).
    fn first_index(&self) -> usize;

    fn name(&self) -> &'static str {
        self.stage().as_str()
    }

    /// Whether the rule should fire given its best width.
    fn condition(&self, width: f64, epsilon: f64) -> bool {
        width > epsilon
    }

    /// Best candidate and its width.
    fn select(&self, ctx: &AcquisitionContext<'_>) -> Option<(usize, f64)> {
        widest(ctx.table, self.candidates(ctx), self.first_index())
    }
}

macro_rules! rule {
    ($name:ident, $stage:expr, $cands:path, $from:expr) => {
        #[derive(Clone, Copy, Debug, Default)]
        pub struct $name;

        impl Acquisition for $name {
            fn stage(&self) -> Stage {
                $stage
            }
            fn candidates(&self, ctx: &AcquisitionContext<'_>) -> Vec<usize> {
                $cands(ctx)
            }
            fn first_index(&self) -> usize {
                $from
            }
        }
    };
}

rule!(SafeOptStage, Stage::S1, s1_candidates, 0);
rule!(ExpanderStage, Stage::S2, s2_candidates, 1);
/// Global exploration fires whenever any candidate remains.
#[derive(Clone, Copy, Debug, Default)]
pub struct GlobalStage;

impl Acquisition for GlobalStage {
    fn stage(&self) -> Stage {
        Stage::S3
    }
    fn candidates(&self, ctx: &AcquisitionContext<'_>) -> Vec<usize> {
        s3_candidates(ctx)
    }
    fn first_index(&self) -> usize {
        0
    }
    fn condition(&self, _width: f64, _epsilon: f64) -> bool {
        true
    }
}
rule!(GlobalMaxStage, Stage::GlobalMax, global_max_candidates, 0);

pub fn acquisition_registry() -> Registry<dyn Acquisition> {
    let mut r: Registry<dyn Acquisition> = Registry::new("acquisition");
    fn no_params(p: &toml::Table) -> crate::Result<()> {
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::config("optimizer", "acquisition rules take no parameters"))
        }
    }
    r.register("s1", |p| {
        no_params(p).map(|_| Box::new(SafeOptStage) as Box<dyn Acquisition>)
    });
    r.register("s2", |p| {
        no_params(p).map(|_| Box::new(ExpanderStage) as Box<dyn Acquisition>)
    });
    r.register("s3", |p| {
        no_params(p).map(|_| Box::new(GlobalStage) as Box<dyn Acquisition>)
    });
    r.register("global_max", |p| {
        no_params(p).map(|_| Box::new(GlobalMaxStage) as Box<dyn Acquisition>)
    });
    r
}
