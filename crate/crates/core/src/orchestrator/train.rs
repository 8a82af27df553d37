use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Split};
use crate::difficulty::{rank_and_bucket, DifficultyScore, DifficultyScorer};
use crate::discourse::CanonicalOrder;
use crate::error::{Error, Result};
use crate::label_curriculum::{
    similarity_from_confusion, similarity_from_embeddings, SimilaritySource, TargetMatrix,
};
use crate::labeler::{
    feature_dropout, Adam, AdamConfig, Labeler, SentenceEmbeddings, SentenceEncoder,
    SparseVector, Targets,
};
use crate::pacing::BabyStepSchedule;

use super::config::{StrategyConfig, RC_STEP_LIMIT};
use super::metrics::{evaluate, Metrics};
use super::plan::{build_plan, PlannedEpoch};

/// Optional artifacts some strategies need.
#[derive(Debug, Clone, Copy, Default)]
pub struct CurriculumInputs<'a> {
    /// Validation confusion matrix of a random-order run, in inventory order.
    pub confusion: Option<&'a [Vec<u64>]>,
    /// One vector per role, in inventory order.
    pub role_embeddings: Option<&'a [Vec<f64>]>,
    pub expert_order: Option<&'a CanonicalOrder>,
    pub sentence_embeddings: Option<&'a SentenceEmbeddings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValScores {
    pub macro_f1: f64,
    pub micro_f1: f64,
}

/// One line of the epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Baby-step stage; `None` when the full training set is active.
    pub stage: Option<usize>,
    pub active_docs: usize,
    pub optimizer_steps: usize,
    pub soft_targets: bool,
    /// Largest row off-diagonal mass of the targets used; 0 for one-hot.
    pub offdiag_mass: f64,
    /// Annealing updates applied to the target matrix so far.
    pub target_updates: usize,
    /// Mean per-document loss over the epoch.
    pub loss: f64,
    pub val: Option<ValScores>,
    /// Training documents in the order they were visited.
    pub documents: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation micro-F1.
    pub model: Labeler,
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
    pub plan: Vec<PlannedEpoch>,
    pub schedule: Option<BabyStepSchedule>,
    pub scores: Option<Vec<DifficultyScore>>,
    pub initial_targets: Option<TargetMatrix>,
    /// Annealing updates per cycle.
    pub rc_steps: usize,
    pub val: Option<Metrics>,
    pub test: Option<Metrics>,
    pub warnings: Vec<String>,
}

/// Epoch summary as written to the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub stage: Option<usize>,
    pub active_docs: usize,
    pub soft_targets: bool,
    pub offdiag_mass: f64,
    pub loss: f64,
    pub val: Option<ValScores>,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub rc_steps: usize,
    pub val: Option<Metrics>,
    pub test: Option<Metrics>,
    pub epochs: Vec<EpochSummary>,
}

impl TrainOutcome {
    pub fn report(&self) -> RunMetrics {
        RunMetrics {
            best_epoch: self.best_epoch,
            epochs_run: self.epochs.len(),
            rc_steps: self.rc_steps,
            val: self.val.clone(),
            test: self.test.clone(),
            epochs: self
                .epochs
                .iter()
                .map(|e| EpochSummary {
                    epoch: e.epoch,
                    stage: e.stage,
                    active_docs: e.active_docs,
                    soft_targets: e.soft_targets,
                    offdiag_mass: e.offdiag_mass,
                    loss: e.loss,
                    val: e.val.clone(),
                })
                .collect(),
        }
    }
}

/// Encodes documents in parallel, keeping input order.
pub fn encode_documents(
    encoder: &SentenceEncoder,
    docs: &[&Document],
    embeddings: Option<&SentenceEmbeddings>,
) -> Result<Vec<Vec<SparseVector>>> {
    docs.par_iter()
        .map(|d| {
            let e = embeddings.and_then(|m| m.get(&d.id)).map(Vec::as_slice);
            encoder.encode_document(d, e)
        })
        .collect()
}

fn initial_targets(
    cfg: &StrategyConfig,
    num_roles: usize,
    inputs: &CurriculumInputs<'_>,
) -> Result<Option<TargetMatrix>> {
    if !cfg.mode.uses_rc() {
        return Ok(None);
    }
    if cfg.eta == 0.0 {
        return TargetMatrix::identity(num_roles, cfg.epsilon).map(Some);
    }
    let sim = match cfg.rc_source {
        SimilaritySource::Confusion => {
            similarity_from_confusion(inputs.confusion.ok_or(Error::MissingConfusion)?)?
        }
        SimilaritySource::Embedding => {
            similarity_from_embeddings(inputs.role_embeddings.ok_or(Error::MissingEmbeddings)?)?
        }
    };
    if sim.len() != num_roles {
        return Err(Error::DimensionMismatch {
            context: "role similarity matrix",
            expected: num_roles,
            actual: sim.len(),
        });
    }
    TargetMatrix::init(&sim, cfg.eta, cfg.epsilon).map(Some)
}

fn targets_for(doc: &Document, v: Option<&TargetMatrix>) -> Targets {
    match v {
        Some(v) => Targets::Soft(doc.labels.iter().map(|&y| v.soft_targets(y).to_vec()).collect()),
        None => Targets::Hard(doc.labels.clone()),
    }
}

/// Trains a labeler under `cfg`, selecting the epoch with the best
/// validation micro-F1 (earliest on ties).
pub fn train(corpus: &Corpus, cfg: &StrategyConfig, inputs: &CurriculumInputs<'_>) -> Result<TrainOutcome> {
    let mut warnings = cfg.validate()?;
    let inv = corpus.inventory();
    let n = inv.len();
    let train_docs = corpus.train_docs();
    if train_docs.is_empty() {
        return Err(Error::InvalidArgument("corpus has no training documents".into()));
    }
    let val_docs = corpus.docs_in(Split::Val);
    let test_docs = corpus.docs_in(Split::Test);
    if val_docs.is_empty() {
        warnings.push("no validation documents; keeping the final epoch".into());
    }

    let (schedule, scores) = if cfg.mode.uses_dc() {
        let scorer = DifficultyScorer::fit(
            cfg.dc_metric,
            &train_docs,
            n,
            cfg.alpha,
            cfg.include_start,
            inputs.expert_order,
        )?;
        let scores = scorer.score_all(&train_docs)?;
        let assignment = rank_and_bucket(&scores, cfg.num_buckets)?;
        (
            Some(BabyStepSchedule::build(assignment, cfg.epochs_per_stage)?),
            Some(scores),
        )
    } else {
        (None, None)
    };

    let v0 = initial_targets(cfg, n, inputs)?;
    let cap = cfg.max_rc_steps.unwrap_or(RC_STEP_LIMIT);
    let rc_steps = v0.as_ref().map_or(0, |v| v.steps_to_identity(cap));
    if cfg.max_rc_steps.is_none() && rc_steps == RC_STEP_LIMIT {
        warnings.push(format!("target matrix did not reach identity in {RC_STEP_LIMIT} updates"));
    }
    let num_stages = schedule.as_ref().map_or(1, BabyStepSchedule::num_stages);
    let plan = build_plan(cfg, num_stages, rc_steps);
    for w in &warnings {
        log::warn!("{w}");
    }
    log::info!(
        "{}: {} epochs planned, {} stages, {} annealing updates per cycle",
        cfg.mode,
        plan.len(),
        num_stages,
        rc_steps
    );

    let encoder = SentenceEncoder::fit(cfg.labeler.features.clone(), &train_docs)?;
    let train_x: HashMap<&str, Vec<SparseVector>> = train_docs
        .iter()
        .map(|d| d.id.as_str())
        .zip(encode_documents(&encoder, &train_docs, inputs.sentence_embeddings)?)
        .collect();
    let val_x = encode_documents(&encoder, &val_docs, inputs.sentence_embeddings)?;
    let val_refs: Vec<&[SparseVector]> = val_x.iter().map(Vec::as_slice).collect();
    let by_id: HashMap<&str, &Document> = train_docs.iter().map(|d| (d.id.as_str(), *d)).collect();
    let mut full_ids: Vec<String> = train_docs.iter().map(|d| d.id.clone()).collect();
    full_ids.sort();

    let mut model = Labeler::new(inv, cfg.labeler.clone(), encoder);
    let feature_config = cfg.labeler.features.clone();
    let dropout = cfg.labeler.dropout;
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        model.params().len(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut targets = v0.clone();
    let mut grad = vec![0.0; model.params().len()];
    let mut epochs = Vec::with_capacity(plan.len());
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut prev_stage = None;

    for (e, entry) in plan.iter().enumerate() {
        if entry.reset_targets {
            targets = v0.clone();
        }
        if cfg.reset_optimizer && prev_stage.is_some_and(|p| p != entry.stage) {
            adam.reset();
        }
        prev_stage = Some(entry.stage);
        let active: &[String] = match (entry.stage, &schedule) {
            (Some(k), Some(s)) => s.stage_documents(k)?,
            _ => &full_ids,
        };
        let soft = targets.as_ref().filter(|_| entry.soft_targets);

        let mut order = active.to_vec();
        let mut batches: Vec<Vec<String>> = Vec::new();
        match entry.steps {
            None => {
                order.shuffle(&mut rng);
                batches.extend(order.chunks(cfg.batch_size).map(<[String]>::to_vec));
            }
            Some(steps) => {
                let mut pos = order.len();
                for _ in 0..steps {
                    if pos == order.len() {
                        order.shuffle(&mut rng);
                        pos = 0;
                    }
                    let end = (pos + cfg.batch_size).min(order.len());
                    batches.push(order[pos..end].to_vec());
                    pos = end;
                }
            }
        }

        let mut loss_sum = 0.0;
        let mut visited = Vec::new();
        for batch in &batches {
            let work: Vec<(Vec<SparseVector>, Targets)> = batch
                .iter()
                .map(|id| {
                    let x = &train_x[id.as_str()];
                    let x = if dropout > 0.0 {
                        x.iter()
                            .map(|v| feature_dropout(v, dropout, &feature_config, &mut rng))
                            .collect()
                    } else {
                        x.clone()
                    };
                    (x, targets_for(by_id[id.as_str()], soft))
                })
                .collect();
            let results: Vec<_> = work
                .into_par_iter()
                .map(|(x, t)| model.loss_and_gradient(&x, t))
                .collect::<Result<_>>()?;
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for (loss, g) in &results {
                loss_sum += loss;
                model.accumulate(g, scale, &mut grad);
            }
            adam.step(model.params_mut(), &grad)?;
            visited.extend(batch.iter().cloned());
        }

        let offdiag_mass = soft.map_or(0.0, TargetMatrix::max_off_diagonal_mass);
        let used_soft = soft.is_some();
        if entry.update_targets {
            if let Some(v) = targets.as_mut() {
                v.update();
            }
        }
        let val = if val_docs.is_empty() {
            None
        } else {
            let m = evaluate(&model, &val_docs, &val_refs, inv)?;
            Some(ValScores {
                macro_f1: m.macro_f1,
                micro_f1: m.micro_f1,
            })
        };
        let score = val.as_ref().map_or(0.0, |v| v.micro_f1);
        let improved = match &best {
            None => true,
            Some((b, _, _)) => val.is_none() || score > *b,
        };
        if improved {
            best = Some((score, e + 1, model.params().to_vec()));
        }
        let record = EpochRecord {
            epoch: e + 1,
            stage: entry.stage,
            active_docs: active.len(),
            optimizer_steps: batches.len(),
            soft_targets: used_soft,
            offdiag_mass,
            target_updates: targets.as_ref().map_or(0, TargetMatrix::step),
            loss: loss_sum / visited.len().max(1) as f64,
            val,
            documents: visited,
        };
        log::debug!(
            "epoch {} stage {:?} docs {} loss {:.5} val {:?}",
            record.epoch,
            record.stage,
            record.active_docs,
            record.loss,
            record.val
        );
        epochs.push(record);
    }

    let (_, best_epoch, params) = best.ok_or_else(|| Error::InvalidArgument("empty epoch plan".into()))?;
    model.params_mut().copy_from_slice(&params);
    let val = if val_docs.is_empty() {
        None
    } else {
        Some(evaluate(&model, &val_docs, &val_refs, inv)?)
    };
    let test = if test_docs.is_empty() {
        None
    } else {
        let x = encode_documents(model.encoder(), &test_docs, inputs.sentence_embeddings)?;
        let refs: Vec<&[SparseVector]> = x.iter().map(Vec::as_slice).collect();
        Some(evaluate(&model, &test_docs, &refs, inv)?)
    };

    Ok(TrainOutcome {
        model,
        best_epoch,
        epochs,
        plan,
        schedule,
        scores,
        initial_targets: v0,
        rc_steps,
        val,
        test,
        warnings,
    })
}
