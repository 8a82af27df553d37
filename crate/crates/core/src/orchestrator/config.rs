use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::difficulty::Metric;
use crate::error::{Error, Result};
use crate::label_curriculum::SimilaritySource;
use crate::labeler::LabelerConfig;

/// How the document-level (DC) and role-level (RC) curricula are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Random-order training on the full set.
    Baseline,
    DcOnly,
    RcOnly,
    /// RC outside, a full DC sweep inside every RC step.
    Hierarchical,
    /// DC outside, a full RC annealing cycle inside every DC stage.
    ReverseHierarchical,
    SequentialDcRc,
    SequentialRcDc,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Baseline,
        Mode::DcOnly,
        Mode::RcOnly,
        Mode::Hierarchical,
        Mode::ReverseHierarchical,
        Mode::SequentialDcRc,
        Mode::SequentialRcDc,
    ];

    pub fn uses_dc(self) -> bool {
        !matches!(self, Mode::Baseline | Mode::RcOnly)
    }

    pub fn uses_rc(self) -> bool {
        !matches!(self, Mode::Baseline | Mode::DcOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::DcOnly => "dc_only",
            Mode::RcOnly => "rc_only",
            Mode::Hierarchical => "hierarchical",
            Mode::ReverseHierarchical => "reverse_hierarchical",
            Mode::SequentialDcRc => "sequential_dc_rc",
            Mode::SequentialRcDc => "sequential_rc_dc",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Ok(match norm.as_str() {
            "baseline" | "random" => Mode::Baseline,
            "dc" | "dc_only" => Mode::DcOnly,
            "rc" | "rc_only" => Mode::RcOnly,
            "hierarchical" | "hiculr" => Mode::Hierarchical,
            "reverse_hierarchical" | "reverse" => Mode::ReverseHierarchical,
            "sequential_dc_rc" | "seq_dc_rc" => Mode::SequentialDcRc,
            "sequential_rc_dc" | "seq_rc_dc" => Mode::SequentialRcDc,
            _ => return Err(Error::InvalidArgument(format!("unknown strategy `{s}`"))),
        })
    }
}

/// Full training configuration for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyConfig {
    pub mode: Mode,
    pub dc_metric: Metric,
    pub rc_source: SimilaritySource,
    pub num_buckets: usize,
    pub epochs_per_stage: usize,
    /// Run each baby step for this many mini-batch steps instead of
    /// `epochs_per_stage` epochs.
    pub stage_steps: Option<usize>,
    /// Decay factor of the target-matrix update.
    pub epsilon: f64,
    /// Initial off-diagonal target mass.
    pub eta: f64,
    /// Epochs between target-matrix updates.
    pub rc_interval: usize,
    /// Cap on target-matrix updates per annealing cycle.
    pub max_rc_steps: Option<usize>,
    /// Training length; curricula that need longer run to completion first.
    pub total_epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Documents per optimizer step.
    pub batch_size: usize,
    /// Transition smoothing for the data-based difficulty metrics.
    pub alpha: f64,
    /// Include the START transition in the log-likelihood metric.
    pub include_start: bool,
    /// Reset Adam moments whenever the active training set changes.
    pub reset_optimizer: bool,
    pub labeler: LabelerConfig,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Baseline,
            dc_metric: Metric::NegLoglik,
            rc_source: SimilaritySource::Confusion,
            num_buckets: 5,
            epochs_per_stage: 2,
            stage_steps: None,
            epsilon: 0.9,
            eta: 0.5,
            rc_interval: 5,
            max_rc_steps: None,
            total_epochs: 40,
            lr: 1e-2,
            seed: 0,
            batch_size: 8,
            alpha: 1.0,
            include_start: true,
            reset_optimizer: false,
            labeler: LabelerConfig::default(),
        }
    }
}

/// Upper bound on annealing steps when no cap is configured.
pub const RC_STEP_LIMIT: usize = 100_000;

impl StrategyConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    /// Checks ranges and returns warnings for settings the mode ignores.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.num_buckets == 0 {
            return bad("num_buckets must be >= 1".into());
        }
        if self.epochs_per_stage == 0 {
            return bad("epochs_per_stage must be >= 1".into());
        }
        if self.stage_steps == Some(0) {
            return bad("stage_steps must be >= 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must be in (0, 1), got {}", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return bad(format!("eta must be in [0, 1), got {}", self.eta));
        }
        if self.rc_interval == 0 {
            return bad("rc_interval must be >= 1".into());
        }
        if self.total_epochs == 0 {
            return bad("total_epochs must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.labeler.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.labeler.dropout));
        }
        self.labeler.features.validate()?;

        let defaults = Self::default();
        let mut warnings = Vec::new();
        if !self.mode.uses_dc()
            && (self.num_buckets != defaults.num_buckets
                || self.epochs_per_stage != defaults.epochs_per_stage
                || self.dc_metric != defaults.dc_metric
                || self.stage_steps.is_some())
        {
            warnings.push(format!("{}: document-curriculum settings are ignored", self.mode));
        }
        if !self.mode.uses_rc()
            && (self.eta != defaults.eta
                || self.epsilon != defaults.epsilon
                || self.rc_interval != defaults.rc_interval
                || self.rc_source != defaults.rc_source
                || self.max_rc_steps.is_some())
        {
            warnings.push(format!("{}: role-curriculum settings are ignored", self.mode));
        }
        if self.mode == Mode::ReverseHierarchical && self.stage_steps.is_some() {
            warnings.push(
                "reverse_hierarchical: stage_steps is ignored; each stage runs a full annealing cycle"
                    .into(),
            );
        }
        Ok(warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_aliases() {
        assert_eq!("hiculr".parse::<Mode>().unwrap(), Mode::Hierarchical);
        assert_eq!("seq-dc-rc".parse::<Mode>().unwrap(), Mode::SequentialDcRc);
        assert_eq!("reverse-hierarchical".parse::<Mode>().unwrap(), Mode::ReverseHierarchical);
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("curriculum".parse::<Mode>().is_err());
    }

    #[test]
    fn json_rejects_unknown_fields() {
        let err = serde_json::from_str::<StrategyConfig>(r#"{"mode":"baseline","bukets":3}"#);
        assert!(err.is_err());
        let ok: StrategyConfig = serde_json::from_str(r#"{"mode":"rc_only","eta":0.3}"#).unwrap();
        assert_eq!(ok.mode, Mode::RcOnly);
        assert_eq!(ok.eta, 0.3);
        assert_eq!(ok.total_epochs, 40);
    }

    #[test]
    fn validation() {
        let mut c = StrategyConfig::default();
        assert!(c.validate().unwrap().is_empty());
        c.epsilon = 1.0;
        assert!(c.validate().is_err());
        let mut c = StrategyConfig::with_mode(Mode::Baseline);
        c.num_buckets = 3;
        c.eta = 0.2;
        assert_eq!(c.validate().unwrap().len(), 2);
        let mut c = StrategyConfig::with_mode(Mode::Hierarchical);
        c.num_buckets = 3;
        c.eta = 0.2;
        assert!(c.validate().unwrap().is_empty());
    }
}
