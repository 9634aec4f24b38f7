use super::matrix::dot;
use super::{Matrix, NumError, NumResult, Real};

/// Number of emotion classes (ANG, FEA, NEU, POS).
pub const N_CLASSES: usize = 4;

/// Probability floor inside [`cross_entropy`].
pub const CE_FLOOR: f64 = 1e-12;

/// Max-shifted softmax of one vector.
pub fn softmax<T: Real>(values: &[T]) -> Vec<T> {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = values.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `ln Σ exp(v)`, max-shifted.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    let total: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + total.ln()
}

pub fn softmax_rows<T: Real>(m: &Matrix<T>) -> NumResult<Matrix<T>> {
    m.check_finite("softmax_rows")?;
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&softmax(m.row(r)));
    }
    out.check_finite("softmax_rows")?;
    Ok(out)
}

/// Vector-Jacobian product of softmax: given `p = softmax(z)` and `dL/dp`,
/// returns `dL/dz = p ⊙ (dp − ⟨dp, p⟩)`.
pub fn softmax_backward<T: Real>(probs: &[T], d_probs: &[T]) -> Vec<T> {
    let inner = dot(probs, d_probs);
    probs
        .iter()
        .zip(d_probs)
        .map(|(&p, &dp)| p * (dp - inner))
        .collect()
}

/// Column means, i.e. the average over sequence positions.
pub fn mean_over_positions<T: Real>(m: &Matrix<T>) -> NumResult<Vec<T>> {
    if m.rows() == 0 {
        return Err(NumError::Empty {
            op: "mean_over_positions",
        });
    }
    let mut acc = vec![T::zero(); m.cols()];
    for r in 0..m.rows() {
        for (a, &v) in acc.iter_mut().zip(m.row(r)) {
            *a = *a + v;
        }
    }
    let n = T::lit(m.rows() as f64);
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// Spreads the gradient of a column mean back over `rows` positions.
pub fn mean_over_positions_backward<T: Real>(d_mean: &[T], rows: usize) -> Matrix<T> {
    let scale = T::one() / T::lit(rows as f64);
    let mut out = Matrix::zeros(rows, d_mean.len());
    for r in 0..rows {
        for (o, &g) in out.row_mut(r).iter_mut().zip(d_mean) {
            *o = g * scale;
        }
    }
    out
}

/// Dense layer `n_classes x in_dim` plus bias, followed by tanh and softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T = f32> {
    pub weight: Matrix<T>,
    /// `1 x n_classes`
    pub bias: Matrix<T>,
}

impl<T: Real> HeadParams<T> {
    pub fn zeros(in_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(N_CLASSES, in_dim),
            bias: Matrix::zeros(1, N_CLASSES),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput<T> {
    /// `tanh(W·x + b)`, the values fed to the softmax.
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
    pub input: Vec<T>,
}

/// `softmax(tanh(W·x + b))`
pub fn head_forward<T: Real>(x: &[T], p: &HeadParams<T>) -> NumResult<HeadOutput<T>> {
    if x.len() != p.in_dim() {
        return Err(NumError::ShapeMismatch {
            op: "head_forward",
            left: (1, x.len()),
            right: p.weight.shape(),
        });
    }
    let logits: Vec<T> = (0..p.weight.rows())
        .map(|c| (dot(p.weight.row(c), x) + p.bias.data()[c]).tanh())
        .collect();
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NumError::NonFinite { op: "head_forward" });
    }
    let probs = softmax(&logits);
    Ok(HeadOutput { logits, probs })
}

/// Backpropagates `dL/dlogits` (gradient w.r.t. the tanh outputs) through the
/// dense layer.
pub fn head_backward<T: Real>(
    x: &[T],
    p: &HeadParams<T>,
    out: &HeadOutput<T>,
    d_logits: &[T],
) -> HeadGrads<T> {
    let n_classes = p.weight.rows();
    let d_pre: Vec<T> = out
        .logits
        .iter()
        .zip(d_logits)
        .map(|(&t, &g)| g * (T::one() - t * t))
        .collect();
    let mut weight = Matrix::zeros(n_classes, x.len());
    let mut input = vec![T::zero(); x.len()];
    for (c, &g) in d_pre.iter().enumerate() {
        for ((w, &xv), (dx, &wv)) in weight
            .row_mut(c)
            .iter_mut()
            .zip(x)
            .zip(input.iter_mut().zip(p.weight.row(c)))
        {
            *w = g * xv;
            *dx = *dx + g * wv;
        }
    }
    let bias = Matrix::from_vec(1, n_classes, d_pre).expect("bias shape");
    HeadGrads {
        weight,
        bias,
        input,
    }
}

fn check_label(label: usize) -> NumResult<()> {
    if label >= N_CLASSES {
        Err(NumError::LabelOutOfRange(label))
    } else {
        Ok(())
    }
}

/// `−ln(max(probs[label], 1e-12))`
pub fn cross_entropy<T: Real>(probs: &[T], label: usize) -> NumResult<T> {
    check_label(label)?;
    if label >= probs.len() {
        return Err(NumError::LabelOutOfRange(label));
    }
    let total: T = probs.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(1e-5) {
        return Err(NumError::InvalidArgument(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    Ok(-probs[label].max(T::lit(CE_FLOOR)).ln())
}

/// Cross-entropy of `softmax(logits)` evaluated through log-sum-exp.
pub fn cross_entropy_from_logits<T: Real>(logits: &[T], label: usize) -> NumResult<T> {
    check_label(label)?;
    if label >= logits.len() {
        return Err(NumError::LabelOutOfRange(label));
    }
    let loss = log_sum_exp(logits) - logits[label];
    let floor = -T::lit(CE_FLOOR).ln();
    Ok(loss.min(floor))
}
