//! Strategy presets and a plain grid runner.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::difficulty::Metric;
use crate::error::Result;
use crate::label_curriculum::SimilaritySource;

use super::config::{Mode, StrategyConfig};
use super::train::{train, CurriculumInputs};

pub const LEARNING_RATES: [f64; 5] = [1e-5, 3e-5, 5e-5, 1e-4, 3e-4];
pub const RC_INTERVALS: [usize; 5] = [5, 10, 15, 20, 25];
pub const EPSILONS: [f64; 5] = [0.8, 0.9, 0.95, 0.99, 0.999];
pub const NUM_BUCKETS: [usize; 6] = [3, 5, 7, 10, 12, 15];
pub const EPOCHS_PER_STAGE: [usize; 5] = [2, 4, 6, 8, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub row: usize,
    pub name: String,
    pub config: StrategyConfig,
}

/// The twelve compared strategies, in table order, built on top of `base`.
pub fn table1_strategies(base: &StrategyConfig) -> Vec<StrategyRow> {
    let with = |mode: Mode, metric: Metric, source: SimilaritySource| StrategyConfig {
        mode,
        dc_metric: metric,
        rc_source: source,
        ..base.clone()
    };
    let dc = |m: Metric| with(Mode::DcOnly, m, base.rc_source);
    let rc = |s: SimilaritySource| with(Mode::RcOnly, base.dc_metric, s);
    let nl = Metric::NegLoglik;
    let conf = SimilaritySource::Confusion;
    let rows = [
        ("baseline", with(Mode::Baseline, base.dc_metric, base.rc_source)),
        ("dc_shifts", dc(Metric::Shifts)),
        ("dc_expert_inversions", dc(Metric::ExpertInversions)),
        ("dc_data_inversions", dc(Metric::DataInversions)),
        ("dc_neg_loglik", dc(nl)),
        ("rc_confusion", rc(conf)),
        ("rc_embedding", rc(SimilaritySource::Embedding)),
        ("hierarchical_confusion_neg_loglik", with(Mode::Hierarchical, nl, conf)),
        ("hierarchical_embedding_neg_loglik", with(Mode::Hierarchical, nl, SimilaritySource::Embedding)),
        ("sequential_neg_loglik_then_confusion", with(Mode::SequentialDcRc, nl, conf)),
        ("sequential_confusion_then_neg_loglik", with(Mode::SequentialRcDc, nl, conf)),
        ("reverse_hierarchical_neg_loglik_confusion", with(Mode::ReverseHierarchical, nl, conf)),
    ];
    rows.into_iter()
        .enumerate()
        .map(|(row, (name, config))| StrategyRow {
            row,
            name: name.to_owned(),
            config,
        })
        .collect()
}

/// Value lists swept by [`grid_configs`]; empty lists keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub lr: Vec<f64>,
    pub rc_interval: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub num_buckets: Vec<usize>,
    pub epochs_per_stage: Vec<usize>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            lr: LEARNING_RATES.to_vec(),
            rc_interval: RC_INTERVALS.to_vec(),
            epsilon: EPSILONS.to_vec(),
            num_buckets: NUM_BUCKETS.to_vec(),
            epochs_per_stage: EPOCHS_PER_STAGE.to_vec(),
        }
    }
}

fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Cartesian product over the axes the mode actually uses.
pub fn grid_configs(base: &StrategyConfig, grid: &HyperGrid) -> Vec<StrategyConfig> {
    let dc = base.mode.uses_dc();
    let rc = base.mode.uses_rc();
    let pick = |use_axis: bool, vals: &[usize], b: usize| if use_axis { or_base(vals, b) } else { vec![b] };
    let intervals = pick(rc, &grid.rc_interval, base.rc_interval);
    let buckets = pick(dc, &grid.num_buckets, base.num_buckets);
    let eps_stage = pick(dc, &grid.epochs_per_stage, base.epochs_per_stage);
    let epsilons = if rc { or_base(&grid.epsilon, base.epsilon) } else { vec![base.epsilon] };
    let mut out = Vec::new();
    for &lr in &or_base(&grid.lr, base.lr) {
        for &rc_interval in &intervals {
            for &epsilon in &epsilons {
                for &num_buckets in &buckets {
                    for &epochs_per_stage in &eps_stage {
                        out.push(StrategyConfig {
                            lr,
                            rc_interval,
                            epsilon,
                            num_buckets,
                            epochs_per_stage,
                            ..base.clone()
                        });
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub config: StrategyConfig,
    pub best_epoch: usize,
    pub val_macro_f1: f64,
    pub val_micro_f1: f64,
}

/// Trains every configuration in turn; results are sorted by validation
/// micro-F1, descending, then by input order.
pub fn run_grid(
    corpus: &Corpus,
    configs: &[StrategyConfig],
    inputs: &CurriculumInputs<'_>,
) -> Result<Vec<GridResult>> {
    let mut results = Vec::with_capacity(configs.len());
    for (i, cfg) in configs.iter().enumerate() {
        log::info!("grid run {}/{}", i + 1, configs.len());
        let out = train(corpus, cfg, inputs)?;
        let (macro_f1, micro_f1) = out.val.as_ref().map_or((0.0, 0.0), |m| (m.macro_f1, m.micro_f1));
        results.push(GridResult {
            config: cfg.clone(),
            best_epoch: out.best_epoch,
            val_macro_f1: macro_f1,
            val_micro_f1: micro_f1,
        });
    }
    results.sort_by(|a, b| b.val_micro_f1.total_cmp(&a.val_micro_f1));
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_rows() {
        let rows = table1_strategies(&StrategyConfig::default());
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[0].config.mode, Mode::Baseline);
        let metrics: Vec<_> = rows[1..5].iter().map(|r| r.config.dc_metric).collect();
        assert_eq!(metrics, Metric::ALL.to_vec());
        assert!(rows[1..5].iter().all(|r| r.config.mode == Mode::DcOnly));
        assert_eq!(rows[5].config.rc_source, SimilaritySource::Confusion);
        assert_eq!(rows[6].config.rc_source, SimilaritySource::Embedding);
        assert_eq!(rows[7].config.mode, Mode::Hierarchical);
        assert_eq!(rows[8].config.rc_source, SimilaritySource::Embedding);
        assert_eq!(rows[9].config.mode, Mode::SequentialDcRc);
        assert_eq!(rows[10].config.mode, Mode::SequentialRcDc);
        assert_eq!(rows[11].config.mode, Mode::ReverseHierarchical);
        for r in &rows[7..] {
            assert_eq!(r.config.dc_metric, Metric::NegLoglik);
        }
    }

    #[test]
    fn grid_only_sweeps_used_axes() {
        let g = HyperGrid::default();
        assert_eq!(grid_configs(&StrategyConfig::with_mode(Mode::Baseline), &g).len(), 5);
        assert_eq!(grid_configs(&StrategyConfig::with_mode(Mode::DcOnly), &g).len(), 5 * 6 * 5);
        assert_eq!(grid_configs(&StrategyConfig::with_mode(Mode::RcOnly), &g).len(), 5 * 5 * 5);
        assert_eq!(
            grid_configs(&StrategyConfig::with_mode(Mode::Hierarchical), &g).len(),
            5 * 5 * 5 * 6 * 5
        );
        let narrow = HyperGrid {
            lr: vec![0.02],
            ..HyperGrid::default()
        };
        assert!(grid_configs(&StrategyConfig::default(), &narrow).iter().all(|c| c.lr == 0.02));
    }
}
