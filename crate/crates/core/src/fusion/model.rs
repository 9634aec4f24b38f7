use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::attention::{MhaCache, MultiHeadAttention};
use super::{Architecture, FusionError, FusionResult, ModelConfig};
use crate::alignment::align;
use crate::numkit::{
    cross_entropy, cross_entropy_from_logits, head_backward, head_forward, mean_over_positions,
    mean_over_positions_backward, softmax_backward, HeadOutput, HeadParams, Matrix, Real,
    CE_FLOOR, N_CLASSES,
};

/// One segment ready for the model. For cross-attention architectures `h_p`
/// is already aligned to the subword grid; for the others it is the raw
/// frame matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInput<T = f32> {
    pub h_p: Matrix<T>,
    pub h_s: Matrix<T>,
}

impl<T: Real> SegmentInput<T> {
    /// Converts stored embeddings to `T` and applies the configured alignment
    /// when the architecture needs it.
    pub fn prepare(
        config: &ModelConfig,
        h_p: &Matrix<f32>,
        h_s: &Matrix<f32>,
        char_lengths: &[usize],
    ) -> FusionResult<Self> {
        let h_p = h_p.cast::<T>();
        let h_s = h_s.cast::<T>();
        let h_p = if config.architecture.is_cross_attention() {
            align(config.alignment, &h_p, h_s.rows(), char_lengths)?
        } else {
            h_p
        };
        Ok(Self { h_p, h_s })
    }
}

/// Trainable parameters of one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel<T = f32> {
    config: ModelConfig,
    /// Cross-attention blocks: paralinguistic direction first, then semantic.
    attention: Vec<MultiHeadAttention<T>>,
    /// Classifier heads: one, or two for Score fusion (paralinguistic first).
    heads: Vec<HeadParams<T>>,
}

/// Exact trainable-parameter count of `config`: `4·d_model²` per attention
/// block plus `n_classes·in_dim + n_classes` per head.
pub fn count_params(config: &ModelConfig) -> usize {
    let attention = config.architecture.n_attention_blocks() * 4 * config.d_model * config.d_model;
    let heads: usize = config
        .head_in_dims()
        .iter()
        .map(|&in_dim| N_CLASSES * in_dim + N_CLASSES)
        .sum();
    attention + heads
}

/// Uniform `±√(1/fan_in)` weights, zero biases, deterministic per seed.
pub fn init_params<T: Real>(config: &ModelConfig, seed: u64) -> FusionResult<FusionModel<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
        let a = (1.0 / fan_in as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::lit(rng.random_range(-a..=a)))
            .collect();
        Matrix::from_vec(rows, cols, data)
    };
    let d = config.d_model;
    let mut attention = Vec::new();
    for _ in 0..config.architecture.n_attention_blocks() {
        attention.push(MultiHeadAttention::from_parts(
            uniform(d, d, d)?,
            uniform(d, d, d)?,
            uniform(d, d, d)?,
            uniform(d, d, d)?,
            config.n_heads,
        )?);
    }
    let mut heads = Vec::new();
    for in_dim in config.head_in_dims() {
        heads.push(HeadParams {
            weight: uniform(N_CLASSES, in_dim, in_dim)?,
            bias: Matrix::zeros(1, N_CLASSES),
        });
    }
    Ok(FusionModel {
        config: *config,
        attention,
        heads,
    })
}

impl<T: Real> FusionModel<T> {
    /// All-zero parameters.
    pub fn zeros(config: &ModelConfig) -> FusionResult<Self> {
        config.validate()?;
        let attention = (0..config.architecture.n_attention_blocks())
            .map(|_| MultiHeadAttention::zeros(config.d_model, config.n_heads))
            .collect::<Result<_, _>>()?;
        let heads = config.head_in_dims().into_iter().map(HeadParams::zeros).collect();
        Ok(Self {
            config: *config,
            attention,
            heads,
        })
    }

    /// Rebuilds a model from arrays in [`FusionModel::tensors`] order.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Matrix<T>>) -> FusionResult<Self> {
        let mut model = Self::zeros(config)?;
        model.set_tensors(tensors)?;
        Ok(model)
    }

    pub fn set_tensors(&mut self, tensors: Vec<Matrix<T>>) -> FusionResult<()> {
        let expected = self.n_tensors();
        if tensors.len() != expected {
            return Err(FusionError::TensorCount {
                expected,
                got: tensors.len(),
            });
        }
        for (dst, src) in self.tensors_mut().into_iter().zip(tensors) {
            if dst.shape() != src.shape() {
                return Err(crate::numkit::NumError::ShapeMismatch {
                    op: "set_tensors",
                    left: dst.shape(),
                    right: src.shape(),
                }
                .into());
            }
            src.check_finite("set_tensors")?;
            *dst = src;
        }
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    pub fn attention(&self) -> &[MultiHeadAttention<T>] {
        &self.attention
    }

    pub fn attention_mut(&mut self) -> &mut [MultiHeadAttention<T>] {
        &mut self.attention
    }

    pub fn heads(&self) -> &[HeadParams<T>] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [HeadParams<T>] {
        &mut self.heads
    }

    fn n_tensors(&self) -> usize {
        4 * self.attention.len() + 2 * self.heads.len()
    }

    /// Parameter arrays in a fixed order: for each attention block
    /// `W_Q, W_K, W_V, W_O`, then for each head `W, b`.
    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut out = Vec::with_capacity(self.n_tensors());
        for a in &self.attention {
            out.extend([&a.w_q, &a.w_k, &a.w_v, &a.w_o]);
        }
        for h in &self.heads {
            out.extend([&h.weight, &h.bias]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = Vec::with_capacity(self.n_tensors());
        for a in &mut self.attention {
            out.extend([&mut a.w_q, &mut a.w_k, &mut a.w_v, &mut a.w_o]);
        }
        for h in &mut self.heads {
            out.extend([&mut h.weight, &mut h.bias]);
        }
        out
    }

    /// Number of allocated trainable scalars.
    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> FusionModel<U> {
        FusionModel::from_tensors(
            &self.config,
            self.tensors().into_iter().map(Matrix::cast).collect(),
        )
        .expect("same config, same shapes")
    }

    fn check_width(&self, which: &'static str, m: &Matrix<T>) -> FusionResult<()> {
        if m.cols() != self.config.d_model {
            return Err(FusionError::WidthMismatch {
                which,
                expected: self.config.d_model,
                got: m.cols(),
            });
        }
        Ok(())
    }

    fn expect_arch(&self, op: &'static str, allowed: &[Architecture]) -> FusionResult<()> {
        if allowed.contains(&self.config.architecture) {
            Ok(())
        } else {
            Err(FusionError::WrongArchitecture {
                op,
                arch: self.config.architecture,
            })
        }
    }

    /// Class probabilities for one prepared segment.
    pub fn forward(&self, input: &SegmentInput<T>) -> FusionResult<Vec<T>> {
        match self.config.architecture {
            Architecture::UnimodalPara => unimodal_forward(&input.h_p, self),
            Architecture::UnimodalSem => unimodal_forward(&input.h_s, self),
            Architecture::Score => score_fusion_forward(&input.h_p, &input.h_s, self),
            Architecture::Concatenation => concat_fusion_forward(&input.h_p, &input.h_s, self),
            _ => cross_attention_forward(&input.h_p, &input.h_s, self),
        }
    }

    /// Argmax class, ties to the lowest index.
    pub fn predict(&self, input: &SegmentInput<T>) -> FusionResult<usize> {
        let probs = self.forward(input)?;
        Ok(argmax(&probs))
    }

    /// Cross-entropy loss and gradients for one segment, in
    /// [`FusionModel::tensors`] order.
    pub fn segment_grad(&self, input: &SegmentInput<T>, label: usize) -> FusionResult<(T, Vec<Matrix<T>>)> {
        match self.config.architecture {
            Architecture::UnimodalPara => self.single_head_grad(&[&input.h_p], label),
            Architecture::UnimodalSem => self.single_head_grad(&[&input.h_s], label),
            Architecture::Concatenation => self.single_head_grad(&[&input.h_p, &input.h_s], label),
            Architecture::Score => self.score_grad(input, label),
            _ => self.cross_attention_grad(input, label),
        }
    }

    /// Head over the concatenated position-means of `parts`.
    fn single_head_grad(&self, parts: &[&Matrix<T>], label: usize) -> FusionResult<(T, Vec<Matrix<T>>)> {
        let mut x = Vec::with_capacity(self.config.d_model * parts.len());
        for part in parts {
            self.check_width("input", part)?;
            x.extend(mean_over_positions(part)?);
        }
        let head = &self.heads[0];
        let out = head_forward(&x, head)?;
        let loss = cross_entropy_from_logits(&out.logits, label)?;
        let d_logits = softmax_ce_grad(&out, label);
        let g = head_backward(&x, head, &out, &d_logits);
        Ok((loss, vec![g.weight, g.bias]))
    }

    fn score_grad(&self, input: &SegmentInput<T>, label: usize) -> FusionResult<(T, Vec<Matrix<T>>)> {
        self.check_width("paralinguistic", &input.h_p)?;
        self.check_width("semantic", &input.h_s)?;
        let xs = [mean_over_positions(&input.h_p)?, mean_over_positions(&input.h_s)?];
        let outs = [
            head_forward(&xs[0], &self.heads[0])?,
            head_forward(&xs[1], &self.heads[1])?,
        ];
        let half = T::lit(0.5);
        let p_label = half * (outs[0].probs[label] + outs[1].probs[label]);
        let floor = T::lit(CE_FLOOR);
        let loss = -p_label.max(floor).ln();
        let mut grads = Vec::with_capacity(4);
        for (x, (out, head)) in xs.iter().zip(outs.iter().zip(&self.heads)) {
            let mut d_probs = vec![T::zero(); N_CLASSES];
            if p_label > floor {
                d_probs[label] = -half / p_label;
            }
            let d_logits = softmax_backward(&out.probs, &d_probs);
            let g = head_backward(x, head, out, &d_logits);
            grads.push(g.weight);
            grads.push(g.bias);
        }
        Ok((loss, grads))
    }

    fn cross_attention_grad(&self, input: &SegmentInput<T>, label: usize) -> FusionResult<(T, Vec<Matrix<T>>)> {
        let (h_p, h_s) = (&input.h_p, &input.h_s);
        self.check_cross_inputs(h_p, h_s)?;
        let arch = self.config.architecture;
        // (query, key/value) per attention block
        let routes: Vec<(&Matrix<T>, &Matrix<T>)> = match arch {
            Architecture::ParaCrossAttn => vec![(h_s, h_p)],
            Architecture::SemCrossAttn => vec![(h_p, h_s)],
            Architecture::SymmetricCrossAttn => vec![(h_s, h_p), (h_p, h_s)],
            _ => unreachable!("checked by caller"),
        };
        let mut outputs: Vec<(Matrix<T>, MhaCache<T>)> = Vec::with_capacity(routes.len());
        for (block, (q, kv)) in self.attention.iter().zip(&routes) {
            outputs.push(block.forward_cached(q, kv, kv)?);
        }
        let z = average(outputs.iter().map(|(o, _)| o))?;
        let x = mean_over_positions(&z)?;
        let head = &self.heads[0];
        let out = head_forward(&x, head)?;
        let loss = cross_entropy_from_logits(&out.logits, label)?;
        let d_logits = softmax_ce_grad(&out, label);
        let hg = head_backward(&x, head, &out, &d_logits);

        let share = T::one() / T::lit(routes.len() as f64);
        let d_z = mean_over_positions_backward(&hg.input, z.rows()).scale(share);
        let mut grads = Vec::with_capacity(4 * routes.len() + 2);
        for ((block, (q, kv)), (_, cache)) in self.attention.iter().zip(&routes).zip(&outputs) {
            let g = block.backward(q, kv, kv, cache, &d_z)?;
            grads.extend([g.w_q, g.w_k, g.w_v, g.w_o]);
        }
        grads.push(hg.weight);
        grads.push(hg.bias);
        Ok((loss, grads))
    }

    fn check_cross_inputs(&self, h_p: &Matrix<T>, h_s: &Matrix<T>) -> FusionResult<()> {
        self.check_width("paralinguistic", h_p)?;
        self.check_width("semantic", h_s)?;
        if h_p.rows() != h_s.rows() {
            return Err(FusionError::SequenceMismatch {
                paralinguistic: h_p.rows(),
                semantic: h_s.rows(),
            });
        }
        Ok(())
    }
}

fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `dL/dlogits = softmax(logits) − onehot(label)`
fn softmax_ce_grad<T: Real>(out: &HeadOutput<T>, label: usize) -> Vec<T> {
    let mut d = out.probs.clone();
    d[label] = d[label] - T::one();
    d
}

fn average<'a, T: Real>(mut mats: impl Iterator<Item = &'a Matrix<T>>) -> FusionResult<Matrix<T>> {
    let first = mats.next().expect("at least one attention block");
    let mut acc = first.clone();
    let mut n = 1usize;
    for m in mats {
        acc.axpy(T::one(), m)?;
        n += 1;
    }
    Ok(if n == 1 { acc } else { acc.scale(T::one() / T::lit(n as f64)) })
}

/// Unimodal baseline: one head over the position-mean of `h`.
pub fn unimodal_forward<T: Real>(h: &Matrix<T>, m: &FusionModel<T>) -> FusionResult<Vec<T>> {
    m.expect_arch(
        "unimodal_forward",
        &[Architecture::UnimodalPara, Architecture::UnimodalSem],
    )?;
    m.check_width("input", h)?;
    let x = mean_over_positions(h)?;
    Ok(head_forward(&x, &m.heads[0])?.probs)
}

/// Class-wise average of the two branch heads' softmax outputs.
pub fn score_fusion_forward<T: Real>(
    h_p: &Matrix<T>,
    h_s: &Matrix<T>,
    m: &FusionModel<T>,
) -> FusionResult<Vec<T>> {
    m.expect_arch("score_fusion_forward", &[Architecture::Score])?;
    m.check_width("paralinguistic", h_p)?;
    m.check_width("semantic", h_s)?;
    let p = head_forward(&mean_over_positions(h_p)?, &m.heads[0])?.probs;
    let s = head_forward(&mean_over_positions(h_s)?, &m.heads[1])?.probs;
    let half = T::lit(0.5);
    Ok(p.iter().zip(&s).map(|(&a, &b)| half * (a + b)).collect())
}

/// One head over `[mean(H_p) ‖ mean(H_s)]`.
pub fn concat_fusion_forward<T: Real>(
    h_p: &Matrix<T>,
    h_s: &Matrix<T>,
    m: &FusionModel<T>,
) -> FusionResult<Vec<T>> {
    m.expect_arch("concat_fusion_forward", &[Architecture::Concatenation])?;
    m.check_width("paralinguistic", h_p)?;
    m.check_width("semantic", h_s)?;
    let mut x = mean_over_positions(h_p)?;
    x.extend(mean_over_positions(h_s)?);
    Ok(head_forward(&x, &m.heads[0])?.probs)
}

/// Cross-attention fusion over the aligned paralinguistic matrix and the
/// semantic matrix (both `n_subwords x d_model`).
pub fn cross_attention_forward<T: Real>(
    h_p_aligned: &Matrix<T>,
    h_s: &Matrix<T>,
    m: &FusionModel<T>,
) -> FusionResult<Vec<T>> {
    m.expect_arch(
        "cross_attention_forward",
        &[
            Architecture::ParaCrossAttn,
            Architecture::SemCrossAttn,
            Architecture::SymmetricCrossAttn,
        ],
    )?;
    m.check_cross_inputs(h_p_aligned, h_s)?;
    let z = cross_attention_output(h_p_aligned, h_s, m)?;
    Ok(head_forward(&mean_over_positions(&z)?, &m.heads[0])?.probs)
}

/// The fused sequence `Z` before pooling.
fn cross_attention_output<T: Real>(h_p: &Matrix<T>, h_s: &Matrix<T>, m: &FusionModel<T>) -> FusionResult<Matrix<T>> {
    Ok(match m.config.architecture {
        Architecture::ParaCrossAttn => m.attention[0].forward(h_s, h_p, h_p)?,
        Architecture::SemCrossAttn => m.attention[0].forward(h_p, h_s, h_s)?,
        _ => {
            let para = m.attention[0].forward(h_s, h_p, h_p)?;
            let sem = m.attention[1].forward(h_p, h_s, h_s)?;
            para.add(&sem)?.scale(T::lit(0.5))
        }
    })
}

impl<T: Real> FusionModel<T> {
    /// Fused sequence before pooling; only for cross-attention architectures.
    pub fn fused_sequence(&self, h_p_aligned: &Matrix<T>, h_s: &Matrix<T>) -> FusionResult<Matrix<T>> {
        if !self.config.architecture.is_cross_attention() {
            return Err(FusionError::WrongArchitecture {
                op: "fused_sequence",
                arch: self.config.architecture,
            });
        }
        self.check_cross_inputs(h_p_aligned, h_s)?;
        cross_attention_output(h_p_aligned, h_s, self)
    }
}

/// Cross-entropy of the forward probabilities; independent of the gradient
/// code path.
pub fn segment_loss<T: Real>(m: &FusionModel<T>, input: &SegmentInput<T>, label: usize) -> FusionResult<T> {
    let probs = m.forward(input)?;
    Ok(cross_entropy(&probs, label)?)
}

/// Mean cross-entropy over `batch` and its gradient. Segments are evaluated
/// in parallel and reduced in batch order, so results are deterministic.
pub fn model_grad<T: Real>(
    m: &FusionModel<T>,
    batch: &[(&SegmentInput<T>, usize)],
) -> FusionResult<(T, Vec<Matrix<T>>)> {
    if batch.is_empty() {
        return Err(FusionError::EmptyBatch);
    }
    let per_segment: Vec<(T, Vec<Matrix<T>>)> = batch
        .par_iter()
        .map(|(input, label)| m.segment_grad(input, *label))
        .collect::<Result<_, _>>()?;
    let n = T::lit(batch.len() as f64);
    let mut iter = per_segment.into_iter();
    let (mut loss, mut grads) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss = loss + l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.axpy(T::one(), gi)?;
        }
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(FusionError::NonFiniteLoss);
    }
    let inv = T::one() / n;
    Ok((loss, grads.into_iter().map(|g| g.scale(inv)).collect()))
}
