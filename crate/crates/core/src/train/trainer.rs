use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{combine_folds, evaluate, Hyper, Metrics, TrainError, TrainResult};
use crate::dataio::{Emotion, FoldPlan, SegmentRecord, Split};
use crate::fusion::{init_params, model_grad, segment_loss, FusionError, FusionModel, ModelConfig, SegmentInput};
use crate::numkit::{adam_step, clip_global_norm, AdamConfig, AdamState, NumError, Real};

/// A segment converted to the training precision, aligned once when the
/// architecture needs it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSegment<T = f32> {
    pub id: String,
    pub label: Emotion,
    pub input: SegmentInput<T>,
}

pub fn prepare_segments<T: Real>(
    config: &ModelConfig,
    records: &[&SegmentRecord],
) -> TrainResult<Vec<PreparedSegment<T>>> {
    records
        .par_iter()
        .map(|r| {
            for (which, width) in [("paralinguistic", r.h_p.cols()), ("semantic", r.h_s.cols())] {
                if width != config.d_model {
                    return Err(FusionError::WidthMismatch {
                        which,
                        expected: config.d_model,
                        got: width,
                    }
                    .into());
                }
            }
            Ok(PreparedSegment {
                id: r.id.clone(),
                label: r.label,
                input: SegmentInput::prepare(config, &r.h_p, &r.h_s, &r.char_lengths)?,
            })
        })
        .collect()
}

/// One line of `history.jsonl`. Epoch 0 describes the initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub fold: usize,
    pub epoch: usize,
    /// Mean cross-entropy over the training split at the end of the epoch.
    pub train_loss: f64,
    /// Mean of the mini-batch losses seen during the epoch.
    pub step_loss: Option<f64>,
    pub val_ua: f64,
    pub steps: usize,
    pub pre_clip_norm_mean: Option<f64>,
    pub pre_clip_norm_max: Option<f64>,
    pub post_clip_norm_mean: Option<f64>,
    pub post_clip_norm_max: Option<f64>,
    pub clipped_steps: usize,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome<T = f32> {
    pub fold: usize,
    pub best_model: FusionModel<T>,
    pub best_epoch: usize,
    pub best_val_ua: f64,
    pub history: Vec<EpochRecord>,
    pub validation_metrics: Metrics,
    pub test_metrics: Metrics,
}

fn mean_loss<T: Real>(model: &FusionModel<T>, segments: &[PreparedSegment<T>]) -> Result<f64, FusionError> {
    let losses = segments
        .par_iter()
        .map(|s| segment_loss(model, &s.input, s.label.index()).map(Real::as_f64))
        .collect::<Result<Vec<_>, FusionError>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Non-finite values during training abort with the position they were seen.
fn diagnose(e: FusionError, fold: usize, epoch: usize, step: usize) -> TrainError {
    match e {
        FusionError::NonFiniteLoss | FusionError::Num(NumError::NonFinite { .. }) => {
            TrainError::NonFiniteLoss { fold, epoch, step }
        }
        other => other.into(),
    }
}

fn split_records<'a>(
    by_id: &HashMap<&str, &'a SegmentRecord>,
    ids: &[String],
    fold: usize,
    split: Split,
) -> TrainResult<Vec<&'a SegmentRecord>> {
    if ids.is_empty() {
        return Err(TrainError::EmptySplit { fold, split });
    }
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| TrainError::UnknownSegment(id.clone()))
        })
        .collect()
}

#[derive(Default)]
struct NormStats {
    pre: Vec<f64>,
    post: Vec<f64>,
    clipped: usize,
}

fn mean_max(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    (
        Some(v.iter().sum::<f64>() / v.len() as f64),
        Some(v.iter().copied().fold(f64::MIN, f64::max)),
    )
}

/// Trains one fold: shuffled mini-batches, `model_grad → clip → Adam` per
/// step, validation UA after every epoch, and test metrics from the epoch with
/// the highest validation UA (earliest on ties, initialization included as
/// epoch 0).
pub fn train_fold<T: Real>(
    config: &ModelConfig,
    hyper: &Hyper,
    records: &[SegmentRecord],
    fold: usize,
    plan: &FoldPlan,
) -> TrainResult<FoldOutcome<T>> {
    hyper.validate()?;
    let spec = plan.folds.get(fold).ok_or(TrainError::InvalidFold {
        index: fold,
        k: plan.folds.len(),
    })?;
    let by_id: HashMap<&str, &SegmentRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let train = prepare_segments::<T>(config, &split_records(&by_id, &spec.train, fold, Split::Train)?)?;
    let val = prepare_segments::<T>(config, &split_records(&by_id, &spec.validation, fold, Split::Validation)?)?;
    let test = prepare_segments::<T>(config, &split_records(&by_id, &spec.test, fold, Split::Test)?)?;

    let mut model: FusionModel<T> = init_params(config, hyper.seed.wrapping_add(fold as u64))?;
    let mut adam = AdamState::new(model.tensors());
    let adam_cfg = AdamConfig::with_lr(hyper.lr);
    let clip = T::lit(hyper.clip_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ (0x5eed_0000 + fold as u64));

    let init_val = evaluate(&model, &val)?;
    let mut history = vec![EpochRecord {
        fold,
        epoch: 0,
        train_loss: mean_loss(&model, &train).map_err(|e| diagnose(e, fold, 0, 0))?,
        step_loss: None,
        val_ua: init_val.ua,
        steps: 0,
        pre_clip_norm_mean: None,
        pre_clip_norm_max: None,
        post_clip_norm_mean: None,
        post_clip_norm_max: None,
        clipped_steps: 0,
    }];
    let mut best = (0usize, init_val, model.clone());

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=hyper.max_epochs {
        order.shuffle(&mut rng);
        let mut norms = NormStats::default();
        let mut step_losses = Vec::new();
        for (step, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let batch: Vec<(&SegmentInput<T>, usize)> = chunk
                .iter()
                .map(|&i| (&train[i].input, train[i].label.index()))
                .collect();
            let (loss, mut grads) = match model_grad(&model, &batch) {
                Ok(v) => v,
                Err(e) => return Err(diagnose(e, fold, epoch, step)),
            };
            let stats = clip_global_norm(&mut grads, clip)
                .map_err(|_| TrainError::NonFiniteLoss { fold, epoch, step })?;
            norms.pre.push(stats.pre_norm);
            norms.post.push(stats.post_norm);
            norms.clipped += usize::from(stats.clipped);
            step_losses.push(loss.as_f64());
            adam_step(&mut model.tensors_mut(), &grads, &mut adam, &adam_cfg)?;
        }
        let val_metrics = evaluate(&model, &val)?;
        let (pre_mean, pre_max) = mean_max(&norms.pre);
        let (post_mean, post_max) = mean_max(&norms.post);
        history.push(EpochRecord {
            fold,
            epoch,
            train_loss: mean_loss(&model, &train).map_err(|e| diagnose(e, fold, epoch, step_losses.len()))?,
            step_loss: Some(step_losses.iter().sum::<f64>() / step_losses.len() as f64),
            val_ua: val_metrics.ua,
            steps: step_losses.len(),
            pre_clip_norm_mean: pre_mean,
            pre_clip_norm_max: pre_max,
            post_clip_norm_mean: post_mean,
            post_clip_norm_max: post_max,
            clipped_steps: norms.clipped,
        });
        if val_metrics.ua > best.1.ua {
            best = (epoch, val_metrics, model.clone());
        }
    }

    let (best_epoch, validation_metrics, best_model) = best;
    let test_metrics = evaluate(&best_model, &test)?;
    Ok(FoldOutcome {
        fold,
        best_model,
        best_epoch,
        best_val_ua: validation_metrics.ua,
        history,
        validation_metrics,
        test_metrics,
    })
}

#[derive(Debug, Clone)]
pub struct CrossValOutcome<T = f32> {
    pub folds: Vec<FoldOutcome<T>>,
    /// Pooled test predictions of all folds.
    pub combined: Metrics,
    /// Unweighted mean of the per-fold test UAs.
    pub mean_fold_ua: f64,
}

/// Runs [`train_fold`] on every fold of `plan` and pools the test results.
pub fn cross_validate<T: Real>(
    config: &ModelConfig,
    hyper: &Hyper,
    records: &[SegmentRecord],
    plan: &FoldPlan,
) -> TrainResult<CrossValOutcome<T>> {
    let folds = (0..plan.folds.len())
        .map(|f| train_fold(config, hyper, records, f, plan))
        .collect::<TrainResult<Vec<_>>>()?;
    let per_fold: Vec<Metrics> = folds.iter().map(|f| f.test_metrics.clone()).collect();
    let combined = combine_folds(&per_fold)?;
    let mean_fold_ua = per_fold.iter().map(|m| m.ua).sum::<f64>() / per_fold.len().max(1) as f64;
    Ok(CrossValOutcome {
        folds,
        combined,
        mean_fold_ua,
    })
}
