//! JSON report structures and the text table rendered by `crossfuse report`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CrossValOutcome, FoldOutcome, Hyper, Metrics, Prediction};
use crate::fusion::{count_params, ModelConfig, ModelSize};
use crate::numkit::N_CLASSES;

/// Per-class recalls in table column order, `total` being the UA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    #[serde(rename = "ANG")]
    pub ang: Option<f64>,
    #[serde(rename = "FEA")]
    pub fea: Option<f64>,
    #[serde(rename = "NEU")]
    pub neu: Option<f64>,
    #[serde(rename = "POS")]
    pub pos: Option<f64>,
    #[serde(rename = "Total")]
    pub total: f64,
}

impl RecallRow {
    pub fn cells(&self) -> [Option<f64>; 5] {
        [self.ang, self.fea, self.neu, self.pos, Some(self.total)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_segments: usize,
    /// Rows are true classes, columns predictions, both in ANG, FEA, NEU, POS
    /// order.
    pub confusion: [[u64; N_CLASSES]; N_CLASSES],
    pub recall: RecallRow,
    pub ua: f64,
    /// True when a class had no segments and the UA averages fewer recalls.
    pub incomplete: bool,
}

impl From<&Metrics> for MetricsReport {
    fn from(m: &Metrics) -> Self {
        let r = m.per_class_recall;
        Self {
            n_segments: m.n_segments(),
            confusion: m.confusion,
            recall: RecallRow {
                ang: r[0],
                fea: r[1],
                neu: r[2],
                pos: r[3],
                total: m.ua,
            },
            ua: m.ua,
            incomplete: m.incomplete,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub best_epoch: usize,
    pub best_val_ua: f64,
    pub validation: MetricsReport,
    pub test: MetricsReport,
    pub test_predictions: Vec<Prediction>,
}

impl<T> From<&FoldOutcome<T>> for FoldReport {
    fn from(f: &FoldOutcome<T>) -> Self {
        Self {
            fold: f.fold,
            best_epoch: f.best_epoch,
            best_val_ua: f.best_val_ua,
            validation: (&f.validation_metrics).into(),
            test: (&f.test_metrics).into(),
            test_predictions: f.test_metrics.predictions.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedReport {
    /// Metrics of the pooled test predictions of every fold.
    pub pooled: MetricsReport,
    /// Unweighted mean of the per-fold test UAs, for comparison.
    pub mean_fold_ua: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub config: ModelConfig,
    pub trainable_params: usize,
    pub hyper: Hyper,
    pub k: usize,
    pub fold_seed: u64,
    pub folds: Vec<FoldReport>,
    /// Present when every fold of the plan was trained.
    pub combined: Option<CombinedReport>,
}

impl CellReport {
    pub fn single<T>(config: &ModelConfig, hyper: &Hyper, k: usize, fold_seed: u64, fold: &FoldOutcome<T>) -> Self {
        Self {
            config: *config,
            trainable_params: count_params(config),
            hyper: *hyper,
            k,
            fold_seed,
            folds: vec![fold.into()],
            combined: None,
        }
    }

    pub fn cross_validated<T>(config: &ModelConfig, hyper: &Hyper, fold_seed: u64, cv: &CrossValOutcome<T>) -> Self {
        Self {
            config: *config,
            trainable_params: count_params(config),
            hyper: *hyper,
            k: cv.folds.len(),
            fold_seed,
            folds: cv.folds.iter().map(FoldReport::from).collect(),
            combined: Some(CombinedReport {
                pooled: (&cv.combined).into(),
                mean_fold_ua: cv.mean_fold_ua,
            }),
        }
    }

    /// The metrics shown in the table: pooled when available, else the only
    /// fold's test metrics.
    pub fn headline(&self) -> Option<&MetricsReport> {
        self.combined
            .as_ref()
            .map(|c| &c.pooled)
            .or_else(|| self.folds.first().map(|f| &f.test))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub cells: Vec<CellReport>,
}

/// Rounded parameter count as printed in result tables: "5 M", "37 k".
pub fn short_count(n: usize) -> String {
    if n >= 1_000_000 {
        format!("{} M", (n as f64 / 1e6).round())
    } else if n >= 1_000 {
        format!("{} k", (n as f64 / 1e3).round())
    } else {
        n.to_string()
    }
}

fn size_rank(s: ModelSize) -> usize {
    match s {
        ModelSize::Base => 0,
        ModelSize::Large => 1,
        ModelSize::Custom => 2,
    }
}

/// Renders cells as an aligned table with one row per configuration, ordered
/// by fusion, then alignment, then size. UA columns are percentages.
pub fn render_table(cells: &[CellReport]) -> String {
    let mut sorted: Vec<&CellReport> = cells.iter().collect();
    sorted.sort_by_key(|c| {
        let a = c.config.architecture;
        let align = if a.is_cross_attention() {
            c.config.alignment as usize
        } else {
            0
        };
        (a as usize, align, size_rank(c.config.size), c.config.d_model)
    });

    let header = ["Fusion", "Alignment", "Config.", "Train. p.", "ANG", "FEA", "NEU", "POS", "Total"];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for c in sorted {
        let cfg = &c.config;
        let alignment = if cfg.architecture.is_cross_attention() {
            cfg.alignment.label().to_string()
        } else {
            "-".to_string()
        };
        let size = match cfg.size {
            ModelSize::Custom => format!("d={} h={}", cfg.d_model, cfg.n_heads),
            s => s.label().to_string(),
        };
        let mut row = vec![
            cfg.architecture.display_name().to_string(),
            alignment,
            size,
            short_count(c.trainable_params),
        ];
        match c.headline() {
            Some(m) => row.extend(m.recall.cells().iter().map(|v| match v {
                Some(x) => format!("{:.1}", 100.0 * x),
                None => "n/a".to_string(),
            })),
            None => row.extend(std::iter::repeat_n("-".to_string(), 5)),
        }
        rows.push(row);
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (cell, &w))| if j < 3 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}
