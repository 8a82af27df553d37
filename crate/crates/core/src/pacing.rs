//! Baby-step pacing: train on the easiest bucket, then merge in the next bucket
//! after a fixed number of epochs, until the whole training set is active.

use serde::{Deserialize, Serialize};

use crate::difficulty::BucketAssignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BabyStepSchedule {
    pub assignment: BucketAssignment,
    pub epochs_per_stage: usize,
    /// Stage `k` is the union of buckets `0..=k`, sorted by doc id.
    pub stages: Vec<Vec<String>>,
}

impl BabyStepSchedule {
    pub fn build(assignment: BucketAssignment, epochs_per_stage: usize) -> Result<Self> {
        if epochs_per_stage == 0 {
            return Err(Error::InvalidArgument("epochs per stage must be >= 1".into()));
        }
        if assignment.buckets.is_empty() || assignment.num_documents() == 0 {
            return Err(Error::InvalidArgument("empty bucket assignment".into()));
        }
        let mut stages = Vec::with_capacity(assignment.buckets.len());
        let mut acc: Vec<String> = Vec::new();
        for bucket in &assignment.buckets {
            acc.extend(bucket.iter().cloned());
            let mut stage = acc.clone();
            stage.sort();
            stages.push(stage);
        }
        Ok(Self {
            assignment,
            epochs_per_stage,
            stages,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn total_epochs(&self) -> usize {
        self.num_stages() * self.epochs_per_stage
    }

    /// Cumulative doc ids of stage `index`, sorted by id.
    pub fn stage_documents(&self, index: usize) -> Result<&[String]> {
        self.stages.get(index).map(Vec::as_slice).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "stage {index} out of range for {} stages",
                self.stages.len()
            ))
        })
    }

    pub fn stage_sizes(&self) -> Vec<usize> {
        self.stages.iter().map(Vec::len).collect()
    }
}

/// JSON stage plan emitted by the `buckets` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StagePlan {
    pub num_buckets: usize,
    pub bucket_sizes: Vec<usize>,
    pub epochs_per_stage: usize,
    pub total_epochs: usize,
    pub buckets: Vec<Vec<String>>,
    pub stages: Vec<StageEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: usize,
    pub epochs: usize,
    pub size: usize,
    pub documents: Vec<String>,
}

impl From<&BabyStepSchedule> for StagePlan {
    fn from(s: &BabyStepSchedule) -> Self {
        StagePlan {
            num_buckets: s.assignment.num_buckets,
            bucket_sizes: s.assignment.sizes(),
            epochs_per_stage: s.epochs_per_stage,
            total_epochs: s.total_epochs(),
            buckets: s.assignment.buckets.clone(),
            stages: s
                .stages
                .iter()
                .enumerate()
                .map(|(k, docs)| StageEntry {
                    stage: k,
                    epochs: s.epochs_per_stage,
                    size: docs.len(),
                    documents: docs.clone(),
                })
                .collect(),
        }
    }
}
