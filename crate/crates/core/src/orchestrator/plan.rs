//! Expands a strategy into an explicit list of epochs. Training only walks
//! this list, so every curriculum combination is inspectable before any
//! parameters move.

use serde::{Deserialize, Serialize};

use super::config::{Mode, StrategyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedEpoch {
    /// Baby-step stage index; `None` is the full training set.
    pub stage: Option<usize>,
    /// Mini-batch steps instead of one pass over the active documents.
    pub steps: Option<usize>,
    /// Train against the current target matrix instead of one-hot labels.
    pub soft_targets: bool,
    /// Restore the initial target matrix before this epoch.
    pub reset_targets: bool,
    /// Apply one annealing update after this epoch.
    pub update_targets: bool,
}

impl PlannedEpoch {
    fn hard(stage: Option<usize>) -> Self {
        Self {
            stage,
            steps: None,
            soft_targets: false,
            reset_targets: false,
            update_targets: false,
        }
    }

    fn soft(stage: Option<usize>) -> Self {
        Self {
            soft_targets: true,
            ..Self::hard(stage)
        }
    }
}

/// Builds the epoch plan.
///
/// `num_stages` is the number of baby-step stages actually built (ignored for
/// modes without a document curriculum). `rc_steps` is the number of
/// annealing updates one cycle needs to reach the identity; zero means the
/// targets start one-hot.
pub fn build_plan(cfg: &StrategyConfig, num_stages: usize, rc_steps: usize) -> Vec<PlannedEpoch> {
    let mut plan = Vec::new();
    let interval = cfg.rc_interval.max(1);
    match cfg.mode {
        Mode::Baseline => {}
        Mode::DcOnly => plan.extend(dc_sweep(cfg, num_stages, false)),
        Mode::RcOnly => plan.extend(rc_cycle(None, rc_steps, interval)),
        Mode::Hierarchical => {
            let soft = rc_steps > 0;
            for _ in 0..rc_steps.max(1) {
                let mut sweep = dc_sweep(cfg, num_stages, soft);
                // an annealing step lasts at least one interval
                if cfg.stage_steps.is_none() {
                    while sweep.len() < interval {
                        sweep.push(PlannedEpoch {
                            soft_targets: soft,
                            ..PlannedEpoch::hard(None)
                        });
                    }
                }
                if soft {
                    if let Some(last) = sweep.last_mut() {
                        last.update_targets = true;
                    }
                }
                plan.extend(sweep);
            }
        }
        Mode::ReverseHierarchical => {
            for k in 0..num_stages.max(1) {
                let stage = stage_id(k, num_stages);
                let mut block = rc_cycle(stage, rc_steps, interval);
                if let Some(first) = block.first_mut() {
                    first.reset_targets = true;
                }
                while block.len() < cfg.epochs_per_stage {
                    block.push(PlannedEpoch::hard(stage));
                }
                plan.extend(block);
            }
        }
        Mode::SequentialDcRc => {
            plan.extend(dc_sweep(cfg, num_stages, false));
            plan.extend(rc_cycle(None, rc_steps, interval));
        }
        Mode::SequentialRcDc => {
            plan.extend(rc_cycle(None, rc_steps, interval));
            plan.extend(dc_sweep(cfg, num_stages, false));
        }
    }
    while plan.len() < cfg.total_epochs {
        plan.push(PlannedEpoch::hard(None));
    }
    plan
}

/// The last stage holds every training document, so it is the full set.
fn stage_id(k: usize, num_stages: usize) -> Option<usize> {
    if k + 1 >= num_stages {
        None
    } else {
        Some(k)
    }
}

fn dc_sweep(cfg: &StrategyConfig, num_stages: usize, soft: bool) -> Vec<PlannedEpoch> {
    let mut out = Vec::new();
    for k in 0..num_stages.max(1) {
        let stage = stage_id(k, num_stages);
        let base = PlannedEpoch {
            soft_targets: soft,
            ..PlannedEpoch::hard(stage)
        };
        match cfg.stage_steps {
            Some(n) => out.push(PlannedEpoch {
                steps: Some(n),
                ..base
            }),
            None => out.extend(std::iter::repeat_n(base, cfg.epochs_per_stage)),
        }
    }
    out
}

fn rc_cycle(stage: Option<usize>, rc_steps: usize, interval: usize) -> Vec<PlannedEpoch> {
    let mut out = Vec::with_capacity(rc_steps * interval);
    for _ in 0..rc_steps {
        for e in 0..interval {
            out.push(PlannedEpoch {
                update_targets: e + 1 == interval,
                ..PlannedEpoch::soft(stage)
            });
        }
    }
    out
}

/// Compact rendering used in tests and logs: `S0`, `F` for the full set,
/// lowercase when soft, `+u` for an update and `r:` for a reset.
pub fn render(plan: &[PlannedEpoch]) -> Vec<String> {
    plan.iter()
        .map(|e| {
            let mut s = String::new();
            if e.reset_targets {
                s.push_str("r:");
            }
            let tag = match e.stage {
                Some(k) => format!("S{k}"),
                None => "F".to_owned(),
            };
            s.push_str(&if e.soft_targets { tag.to_lowercase() } else { tag });
            if let Some(n) = e.steps {
                s.push_str(&format!("x{n}"));
            }
            if e.update_targets {
                s.push_str("+u");
            }
            s
        })
        .collect()
}
