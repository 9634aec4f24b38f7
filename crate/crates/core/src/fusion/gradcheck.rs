//! Finite-difference verification of every architecture's analytic
//! gradients, at small dimensions and 64-bit precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{init_params, model_grad, segment_loss, Architecture, FusionModel, FusionResult, ModelConfig, SegmentInput};
use crate::alignment::AlignmentMethod;
use crate::numkit::{finite_diff_grad, max_relative_error, Matrix, N_CLASSES};

/// Maximum relative error accepted between analytic and numeric gradients.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradcheckSetup {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_subwords: usize,
    pub n_frames: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for GradcheckSetup {
    fn default() -> Self {
        Self {
            d_model: 8,
            n_heads: 2,
            n_subwords: 3,
            n_frames: 7,
            batch: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckCase {
    pub architecture: Architecture,
    pub alignment: AlignmentMethod,
    pub n_params: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn random_batch(setup: &GradcheckSetup, config: &ModelConfig) -> FusionResult<Vec<(SegmentInput<f64>, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed ^ 0x9e37_79b9);
    let d = setup.d_model;
    (0..setup.batch)
        .map(|i| {
            let mut mat = |rows: usize| {
                let data = (0..rows * d).map(|_| rng.random_range(-2.0f32..2.0)).collect();
                Matrix::from_vec(rows, d, data)
            };
            let h_p = mat(setup.n_frames)?;
            let h_s = mat(setup.n_subwords)?;
            let chars: Vec<usize> = (0..setup.n_subwords).map(|_| rng.random_range(1..=6)).collect();
            let input = SegmentInput::prepare(config, &h_p, &h_s, &chars)?;
            Ok((input, (i + setup.seed as usize) % N_CLASSES))
        })
        .collect()
}

/// Compares [`model_grad`] against central differences of the forward-pass
/// loss for one architecture.
pub fn check_architecture(
    architecture: Architecture,
    alignment: AlignmentMethod,
    setup: &GradcheckSetup,
) -> FusionResult<GradcheckCase> {
    let config = ModelConfig::custom(architecture, setup.d_model, setup.n_heads, alignment)?;
    let mut model: FusionModel<f64> = init_params(&config, setup.seed)?;
    // Non-zero biases so their gradients are checked away from the origin.
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed.wrapping_add(1));
    for head in model.heads_mut() {
        for b in head.bias.data_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    let batch = random_batch(setup, &config)?;
    let refs: Vec<(&SegmentInput<f64>, usize)> = batch.iter().map(|(x, y)| (x, *y)).collect();

    let (_, analytic) = model_grad(&model, &refs)?;

    let params: Vec<Matrix<f64>> = model.tensors().into_iter().cloned().collect();
    let numeric = finite_diff_grad(
        |p: &[Matrix<f64>]| -> FusionResult<f64> {
            let m = FusionModel::from_tensors(&config, p.to_vec())?;
            let mut total = 0.0;
            for (x, y) in &batch {
                total += segment_loss(&m, x, *y)?;
            }
            Ok(total / batch.len() as f64)
        },
        &params,
        GRADCHECK_STEP,
    )?;
    let max_rel_error = max_relative_error(&analytic, &numeric);
    Ok(GradcheckCase {
        architecture,
        alignment,
        n_params: model.n_params(),
        max_rel_error,
        passed: max_rel_error <= GRADCHECK_TOLERANCE,
    })
}

/// Every architecture; cross-attention ones under both alignment methods.
pub fn run_suite(setup: &GradcheckSetup) -> FusionResult<Vec<GradcheckCase>> {
    let mut cases = Vec::new();
    for arch in Architecture::ALL {
        let aligns: &[AlignmentMethod] = if arch.is_cross_attention() {
            &AlignmentMethod::ALL
        } else {
            &[AlignmentMethod::Subwords]
        };
        for &a in aligns {
            cases.push(check_architecture(arch, a, setup)?);
        }
    }
    Ok(cases)
}
