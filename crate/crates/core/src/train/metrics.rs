use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PreparedSegment, TrainError, TrainResult};
use crate::dataio::Emotion;
use crate::fusion::FusionModel;
use crate::numkit::{Real, N_CLASSES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub truth: Emotion,
    pub predicted: Emotion,
}

/// Confusion matrix (rows = true class, columns = predicted), per-class
/// recall and Unweighted Accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub confusion: [[u64; N_CLASSES]; N_CLASSES],
    /// `None` for classes absent from the evaluated segments.
    pub per_class_recall: [Option<f64>; N_CLASSES],
    /// Mean of the defined recalls.
    pub ua: f64,
    /// Set when at least one class was absent, so `ua` averages fewer than
    /// four recalls.
    pub incomplete: bool,
    pub predictions: Vec<Prediction>,
}

impl Metrics {
    pub fn from_predictions(predictions: Vec<Prediction>) -> Self {
        let mut confusion = [[0u64; N_CLASSES]; N_CLASSES];
        for p in &predictions {
            confusion[p.truth.index()][p.predicted.index()] += 1;
        }
        let per_class_recall = std::array::from_fn(|c| {
            let total: u64 = confusion[c].iter().sum();
            (total > 0).then(|| confusion[c][c] as f64 / total as f64)
        });
        let present: Vec<f64> = per_class_recall.iter().flatten().copied().collect();
        let ua = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        Self {
            confusion,
            per_class_recall,
            ua,
            incomplete: present.len() < N_CLASSES,
            predictions,
        }
    }

    pub fn n_segments(&self) -> usize {
        self.predictions.len()
    }

    /// Fraction of correctly classified segments.
    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..N_CLASSES).map(|c| self.confusion[c][c]).sum();
        correct as f64 / self.n_segments().max(1) as f64
    }
}

/// Argmax predictions over `segments`, evaluated in parallel and collected in
/// input order.
pub fn evaluate<T: Real>(model: &FusionModel<T>, segments: &[PreparedSegment<T>]) -> TrainResult<Metrics> {
    if segments.is_empty() {
        return Err(TrainError::EmptySegments);
    }
    let predictions = segments
        .par_iter()
        .map(|s| {
            let predicted = model.predict(&s.input)?;
            Ok(Prediction {
                id: s.id.clone(),
                truth: s.label,
                predicted: Emotion::from_index(predicted).expect("four classes"),
            })
        })
        .collect::<TrainResult<Vec<_>>>()?;
    Ok(Metrics::from_predictions(predictions))
}

/// Pools per-fold predictions (equivalently, sums the confusion matrices) and
/// recomputes recalls and UA from the pooled matrix.
pub fn combine_folds(per_fold: &[Metrics]) -> TrainResult<Metrics> {
    let mut seen = HashSet::new();
    let mut pooled = Vec::with_capacity(per_fold.iter().map(Metrics::n_segments).sum());
    for m in per_fold {
        for p in &m.predictions {
            if !seen.insert(p.id.as_str()) {
                return Err(TrainError::OverlappingSegments(p.id.clone()));
            }
            pooled.push(p.clone());
        }
    }
    Ok(Metrics::from_predictions(pooled))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(pairs: &[(usize, usize)], prefix: &str) -> Vec<Prediction> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(t, p))| Prediction {
                id: format!("{prefix}{i}"),
                truth: Emotion::ALL[t],
                predicted: Emotion::ALL[p],
            })
            .collect()
    }

    #[test]
    fn perfect_predictions() {
        let m = Metrics::from_predictions(preds(&[(0, 0), (1, 1), (2, 2), (3, 3), (3, 3)], "a"));
        assert_eq!(m.ua, 1.0);
        assert!(!m.incomplete);
    }

    #[test]
    fn ua_is_mean_of_recalls() {
        // recalls 1.0, 0.5, 0.75, 0.75
        let mut pairs = vec![(0, 0), (0, 0), (0, 0), (0, 0)];
        pairs.extend([(1, 1), (1, 1), (1, 0), (1, 2)]);
        pairs.extend([(2, 2), (2, 2), (2, 2), (2, 3)]);
        pairs.extend([(3, 3), (3, 3), (3, 3), (3, 1)]);
        let m = Metrics::from_predictions(preds(&pairs, "a"));
        assert_eq!(m.per_class_recall, [Some(1.0), Some(0.5), Some(0.75), Some(0.75)]);
        assert!((m.ua - 0.75).abs() < 1e-15);
        for c in 0..4 {
            assert_eq!(m.confusion[c].iter().sum::<u64>(), 4);
        }
    }

    #[test]
    fn absent_class_flagged() {
        let m = Metrics::from_predictions(preds(&[(0, 0), (1, 0), (2, 2)], "a"));
        assert_eq!(m.per_class_recall[3], None);
        assert!(m.incomplete);
        assert!((m.ua - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn combine_sums_confusions() {
        let a = Metrics::from_predictions(preds(&[(0, 0), (1, 2), (3, 3)], "a"));
        let b = Metrics::from_predictions(preds(&[(2, 2), (1, 1), (0, 3)], "b"));
        let c = combine_folds(&[a.clone(), b.clone()]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(c.confusion[i][j], a.confusion[i][j] + b.confusion[i][j]);
            }
        }
        assert!(matches!(
            combine_folds(&[a.clone(), a]),
            Err(TrainError::OverlappingSegments(_))
        ));
    }

    #[test]
    fn identical_folds_keep_ua() {
        let base = [(0, 0), (1, 2), (2, 2), (3, 1), (3, 3)];
        let folds: Vec<Metrics> = (0..5)
            .map(|f| Metrics::from_predictions(preds(&base, &format!("f{f}-"))))
            .collect();
        let c = combine_folds(&folds).unwrap();
        assert!((c.ua - folds[0].ua).abs() < 1e-15);
    }
}
