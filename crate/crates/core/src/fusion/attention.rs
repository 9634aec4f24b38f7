//! Scaled dot-product attention and multi-head attention, forward and
//! backward.

use crate::numkit::{softmax_backward, softmax_rows, Matrix, NumError, NumResult, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput<T> {
    /// `L_q x d_v`
    pub output: Matrix<T>,
    /// Row-stochastic `L_q x L_k` weights.
    pub weights: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads<T> {
    pub query: Matrix<T>,
    pub key: Matrix<T>,
    pub value: Matrix<T>,
}

/// `softmax(Q·Kᵀ / √d_k) · V`
pub fn scaled_dot_attention<T: Real>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
) -> NumResult<AttentionOutput<T>> {
    if q.cols() != k.cols() {
        return Err(NumError::ShapeMismatch {
            op: "scaled_dot_attention(Q,K)",
            left: q.shape(),
            right: k.shape(),
        });
    }
    if k.rows() != v.rows() {
        return Err(NumError::ShapeMismatch {
            op: "scaled_dot_attention(K,V)",
            left: k.shape(),
            right: v.shape(),
        });
    }
    if k.rows() == 0 {
        return Err(NumError::Empty {
            op: "scaled_dot_attention",
        });
    }
    let scale = T::one() / T::lit(q.cols() as f64).sqrt();
    let scores = q.matmul_t(k)?.scale(scale);
    let weights = softmax_rows(&scores)?;
    let output = weights.matmul(v)?;
    Ok(AttentionOutput { output, weights })
}

/// Gradients of [`scaled_dot_attention`] given the forward weights and
/// `dL/doutput`.
pub fn scaled_dot_attention_backward<T: Real>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    weights: &Matrix<T>,
    d_out: &Matrix<T>,
) -> NumResult<AttentionGrads<T>> {
    let scale = T::one() / T::lit(q.cols() as f64).sqrt();
    let d_weights = d_out.matmul_t(v)?;
    let value = weights.t_matmul(d_out)?;
    let mut d_scores = Matrix::zeros(weights.rows(), weights.cols());
    for r in 0..weights.rows() {
        let g = softmax_backward(weights.row(r), d_weights.row(r));
        for (o, gv) in d_scores.row_mut(r).iter_mut().zip(g) {
            *o = gv * scale;
        }
    }
    let query = d_scores.matmul(k)?;
    let key = d_scores.t_matmul(q)?;
    Ok(AttentionGrads { query, key, value })
}

/// Projection weights of one multi-head attention block. Each `d_model x
/// d_model` input projection holds the `n_heads` per-head matrices as
/// consecutive column blocks of width `d_model / n_heads`. No biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention<T = f32> {
    pub w_q: Matrix<T>,
    pub w_k: Matrix<T>,
    pub w_v: Matrix<T>,
    pub w_o: Matrix<T>,
    n_heads: usize,
}

/// Intermediate values kept from the forward pass.
#[derive(Debug, Clone)]
pub struct MhaCache<T> {
    q_proj: Matrix<T>,
    k_proj: Matrix<T>,
    v_proj: Matrix<T>,
    head_weights: Vec<Matrix<T>>,
    concat: Matrix<T>,
}

impl<T> MhaCache<T> {
    /// Per-head attention weights (`L_q x L_k` each).
    pub fn head_weights(&self) -> &[Matrix<T>] {
        &self.head_weights
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhaGrads<T> {
    pub w_q: Matrix<T>,
    pub w_k: Matrix<T>,
    pub w_v: Matrix<T>,
    pub w_o: Matrix<T>,
    pub query: Matrix<T>,
    pub key: Matrix<T>,
    pub value: Matrix<T>,
}

impl<T: Real> MultiHeadAttention<T> {
    pub fn zeros(d_model: usize, n_heads: usize) -> NumResult<Self> {
        Self::from_parts(
            Matrix::zeros(d_model, d_model),
            Matrix::zeros(d_model, d_model),
            Matrix::zeros(d_model, d_model),
            Matrix::zeros(d_model, d_model),
            n_heads,
        )
    }

    pub fn from_parts(
        w_q: Matrix<T>,
        w_k: Matrix<T>,
        w_v: Matrix<T>,
        w_o: Matrix<T>,
        n_heads: usize,
    ) -> NumResult<Self> {
        let d = w_q.rows();
        if n_heads == 0 || !d.is_multiple_of(n_heads) {
            return Err(NumError::InvalidArgument(format!(
                "d_model {d} is not divisible by {n_heads} heads"
            )));
        }
        for w in [&w_q, &w_k, &w_v, &w_o] {
            if w.shape() != (d, d) {
                return Err(NumError::ShapeMismatch {
                    op: "MultiHeadAttention",
                    left: (d, d),
                    right: w.shape(),
                });
            }
        }
        Ok(Self {
            w_q,
            w_k,
            w_v,
            w_o,
            n_heads,
        })
    }

    pub fn d_model(&self) -> usize {
        self.w_q.rows()
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn head_dim(&self) -> usize {
        self.d_model() / self.n_heads
    }

    pub fn n_params(&self) -> usize {
        4 * self.d_model() * self.d_model()
    }

    fn check_inputs(&self, q_in: &Matrix<T>, k_in: &Matrix<T>, v_in: &Matrix<T>) -> NumResult<()> {
        let d = self.d_model();
        for m in [q_in, k_in, v_in] {
            if m.cols() != d {
                return Err(NumError::ShapeMismatch {
                    op: "multi_head_attention",
                    left: (m.rows(), d),
                    right: m.shape(),
                });
            }
        }
        if k_in.rows() != v_in.rows() {
            return Err(NumError::ShapeMismatch {
                op: "multi_head_attention(K,V)",
                left: k_in.shape(),
                right: v_in.shape(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, q_in: &Matrix<T>, k_in: &Matrix<T>, v_in: &Matrix<T>) -> NumResult<Matrix<T>> {
        self.forward_cached(q_in, k_in, v_in).map(|(out, _)| out)
    }

    pub fn forward_cached(
        &self,
        q_in: &Matrix<T>,
        k_in: &Matrix<T>,
        v_in: &Matrix<T>,
    ) -> NumResult<(Matrix<T>, MhaCache<T>)> {
        self.check_inputs(q_in, k_in, v_in)?;
        let dk = self.head_dim();
        let q_proj = q_in.matmul(&self.w_q)?;
        let k_proj = k_in.matmul(&self.w_k)?;
        let v_proj = v_in.matmul(&self.w_v)?;
        let mut concat = Matrix::zeros(q_in.rows(), self.d_model());
        let mut head_weights = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let att = scaled_dot_attention(
                &q_proj.col_block(h * dk, dk),
                &k_proj.col_block(h * dk, dk),
                &v_proj.col_block(h * dk, dk),
            )?;
            concat.set_col_block(h * dk, &att.output);
            head_weights.push(att.weights);
        }
        let out = concat.matmul(&self.w_o)?;
        Ok((
            out,
            MhaCache {
                q_proj,
                k_proj,
                v_proj,
                head_weights,
                concat,
            },
        ))
    }

    /// Backward pass. `q_in`, `k_in`, `v_in` must be the forward inputs.
    pub fn backward(
        &self,
        q_in: &Matrix<T>,
        k_in: &Matrix<T>,
        v_in: &Matrix<T>,
        cache: &MhaCache<T>,
        d_out: &Matrix<T>,
    ) -> NumResult<MhaGrads<T>> {
        let dk = self.head_dim();
        let w_o = cache.concat.t_matmul(d_out)?;
        let d_concat = d_out.matmul_t(&self.w_o)?;
        let mut d_qp = Matrix::zeros(cache.q_proj.rows(), self.d_model());
        let mut d_kp = Matrix::zeros(cache.k_proj.rows(), self.d_model());
        let mut d_vp = Matrix::zeros(cache.v_proj.rows(), self.d_model());
        for h in 0..self.n_heads {
            let g = scaled_dot_attention_backward(
                &cache.q_proj.col_block(h * dk, dk),
                &cache.k_proj.col_block(h * dk, dk),
                &cache.v_proj.col_block(h * dk, dk),
                &cache.head_weights[h],
                &d_concat.col_block(h * dk, dk),
            )?;
            d_qp.set_col_block(h * dk, &g.query);
            d_kp.set_col_block(h * dk, &g.key);
            d_vp.set_col_block(h * dk, &g.value);
        }
        Ok(MhaGrads {
            w_q: q_in.t_matmul(&d_qp)?,
            w_k: k_in.t_matmul(&d_kp)?,
            w_v: v_in.t_matmul(&d_vp)?,
            w_o,
            query: d_qp.matmul_t(&self.w_q)?,
            key: d_kp.matmul_t(&self.w_k)?,
            value: d_vp.matmul_t(&self.w_v)?,
        })
    }
}

/// `Concat(head_1, …, head_h) · W_O` with
/// `head_i = Attention(Q·W_i^Q, K·W_i^K, V·W_i^V)`.
pub fn multi_head_attention<T: Real>(
    p: &MultiHeadAttention<T>,
    q_in: &Matrix<T>,
    k_in: &Matrix<T>,
    v_in: &Matrix<T>,
) -> NumResult<Matrix<T>> {
    p.forward(q_in, k_in, v_in)
}
