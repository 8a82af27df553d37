//! Desk-scale sequence labeler: hashed sentence features, a linear emission
//! scorer, and a CRF or independent softmax head.

mod adam;
mod crf;
mod features;
mod loss;

use serde::{Deserialize, Serialize};

use crate::corpus::RoleInventory;
use crate::error::{Error, Result};

pub use adam::{Adam, AdamConfig};
pub use crf::{forward_backward, path_score, viterbi, ForwardBackward, Transitions};
pub use features::{
    feature_dropout, parse_sentence_embeddings, FeatureConfig, SentenceEmbeddings,
    SentenceEncoder, SparseVector,
};
pub use loss::{loss_and_gradient, Head, ScoreGradient, Targets};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelerConfig {
    pub head: Head,
    pub features: FeatureConfig,
    /// Feature dropout rate on hashed n-grams during training.
    pub dropout: f64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        Self {
            head: Head::Crf,
            features: FeatureConfig::default(),
            dropout: 0.2,
        }
    }
}

/// `scores[i][y] = weights[y] . features[i]` with `weights` stored row-major,
/// one row of `feature_dim` per label.
pub fn emission_scores(
    features: &[SparseVector],
    weights: &[f64],
    num_labels: usize,
    feature_dim: usize,
) -> Result<Vec<Vec<f64>>> {
    if weights.len() != num_labels * feature_dim {
        return Err(Error::DimensionMismatch {
            context: "emission weights",
            expected: num_labels * feature_dim,
            actual: weights.len(),
        });
    }
    features
        .iter()
        .map(|x| {
            if let Some(&(k, _)) = x.iter().find(|(k, _)| *k as usize >= feature_dim) {
                return Err(Error::DimensionMismatch {
                    context: "feature index",
                    expected: feature_dim,
                    actual: k as usize,
                });
            }
            Ok((0..num_labels)
                .map(|y| {
                    let row = &weights[y * feature_dim..(y + 1) * feature_dim];
                    x.iter().map(|&(k, v)| row[k as usize] * v).sum()
                })
                .collect())
        })
        .collect()
}

/// Gradient of one document's loss: sparse over emission weights, dense over
/// transition scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGradient {
    pub emission: Vec<(usize, f64)>,
    pub transitions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeler {
    roles: Vec<String>,
    config: LabelerConfig,
    encoder: SentenceEncoder,
    /// Emission weights (`num_labels * feature_dim`) followed by the
    /// `(num_labels + 1)^2` transition scores.
    params: Vec<f64>,
}

impl Labeler {
    pub fn new(inventory: &RoleInventory, config: LabelerConfig, encoder: SentenceEncoder) -> Self {
        let n = inventory.len();
        let dim = encoder.config.dim();
        Self {
            roles: inventory.roles().to_vec(),
            config,
            encoder,
            params: vec![0.0; n * dim + (n + 1) * (n + 1)],
        }
    }

    pub fn roles(&self) -> &[String] {
        &self.roles
    }

    pub fn num_labels(&self) -> usize {
        self.roles.len()
    }

    pub fn config(&self) -> &LabelerConfig {
        &self.config
    }

    pub fn encoder(&self) -> &SentenceEncoder {
        &self.encoder
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.config.dim()
    }

    fn emission_len(&self) -> usize {
        self.num_labels() * self.feature_dim()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn transitions(&self) -> Transitions {
        Transitions::from_scores(self.num_labels(), self.params[self.emission_len()..].to_vec())
    }

    pub fn emission_scores(&self, features: &[SparseVector]) -> Result<Vec<Vec<f64>>> {
        emission_scores(
            features,
            &self.params[..self.emission_len()],
            self.num_labels(),
            self.feature_dim(),
        )
    }

    /// Viterbi path for the CRF head, per-sentence argmax for softmax.
    pub fn predict(&self, features: &[SparseVector]) -> Result<Vec<usize>> {
        let scores = self.emission_scores(features)?;
        Ok(match self.config.head {
            Head::Crf => viterbi(&scores, &self.transitions()).0,
            Head::Softmax => scores
                .iter()
                .map(|row| {
                    // first maximum wins
                    let mut best = 0;
                    for (y, &s) in row.iter().enumerate() {
                        if s > row[best] {
                            best = y;
                        }
                    }
                    best
                })
                .collect(),
        })
    }

    pub fn loss_and_gradient(
        &self,
        features: &[SparseVector],
        targets: Targets,
    ) -> Result<(f64, ParamGradient)> {
        let scores = self.emission_scores(features)?;
        let g = loss_and_gradient(self.config.head, &scores, &self.transitions(), targets)?;
        let dim = self.feature_dim();
        let mut emission = Vec::new();
        for (x, d_row) in features.iter().zip(&g.emissions) {
            for (y, &d) in d_row.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                emission.extend(x.iter().map(|&(k, v)| (y * dim + k as usize, d * v)));
            }
        }
        let transitions = match self.config.head {
            Head::Crf => g.transitions,
            Head::Softmax => Vec::new(),
        };
        Ok((
            g.loss,
            ParamGradient {
                emission,
                transitions,
            },
        ))
    }

    /// Adds `scale * grad` into a dense buffer laid out like [`Self::params`].
    pub fn accumulate(&self, grad: &ParamGradient, scale: f64, dense: &mut [f64]) {
        for &(k, v) in &grad.emission {
            dense[k] += scale * v;
        }
        let offset = self.emission_len();
        for (k, &v) in grad.transitions.iter().enumerate() {
            dense[offset + k] += scale * v;
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let n = self.emission_len();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            roles: self.roles.clone(),
            inventory_fingerprint: RoleInventory::new(self.roles.clone())
                .map(|i| i.fingerprint())
                .unwrap_or_default(),
            config: self.config.clone(),
            encoder: self.encoder.clone(),
            emission_weights: self.params[..n]
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(k, &w)| (k, w))
                .collect(),
            transitions: self.params[n..].to_vec(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let inventory = RoleInventory::new(ckpt.roles)?;
        if inventory.fingerprint() != ckpt.inventory_fingerprint {
            return Err(Error::InvalidArgument("checkpoint inventory fingerprint mismatch".into()));
        }
        let mut encoder = ckpt.encoder;
        encoder.config.validate()?;
        encoder.rebuild_lookup();
        let mut model = Labeler::new(&inventory, ckpt.config, encoder);
        let n = model.emission_len();
        if ckpt.transitions.len() != model.params.len() - n {
            return Err(Error::DimensionMismatch {
                context: "checkpoint transitions",
                expected: model.params.len() - n,
                actual: ckpt.transitions.len(),
            });
        }
        for (k, w) in ckpt.emission_weights {
            if k >= n {
                return Err(Error::DimensionMismatch {
                    context: "checkpoint emission index",
                    expected: n,
                    actual: k,
                });
            }
            model.params[k] = w;
        }
        model.params[n..].copy_from_slice(&ckpt.transitions);
        Ok(model)
    }
}

pub const CHECKPOINT_FORMAT: &str = "culr-labeler";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON model file. Emission weights are stored sparsely; weights never
/// touched by training stay zero and are omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub roles: Vec<String>,
    pub inventory_fingerprint: String,
    pub config: LabelerConfig,
    pub encoder: SentenceEncoder,
    pub emission_weights: Vec<(usize, f64)>,
    pub transitions: Vec<f64>,
}
