//! Plain-loop reference implementations shared by the property tests and
//! the acceptance suite.

use crossfuse::fusion::MultiHeadAttention;
use crossfuse::numkit::Matrix;
use rand_chacha::ChaCha8Rng;

use super::random_matrix;

/// Attention written out element by element, with the max-subtracted softmax
/// computed inline.
pub fn naive_attention(q: &Matrix<f64>, k: &Matrix<f64>, v: &Matrix<f64>) -> Matrix<f64> {
    let (lq, dk) = q.shape();
    let lk = k.rows();
    let dv = v.cols();
    let mut out = Matrix::zeros(lq, dv);
    for i in 0..lq {
        let mut scores = vec![0.0; lk];
        for (j, s) in scores.iter_mut().enumerate() {
            for c in 0..dk {
                *s += q.get(i, c) * k.get(j, c);
            }
            *s /= (dk as f64).sqrt();
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (j, e) in exps.iter().enumerate() {
            for c in 0..dv {
                let prev = out.get(i, c);
                out.set(i, c, prev + e / total * v.get(j, c));
            }
        }
    }
    out
}

pub fn naive_matmul(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for t in 0..a.cols() {
                s += a.get(i, t) * b.get(t, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

/// Per-head projections by slicing weight columns, then concatenation and
/// output projection, all with naive loops.
pub fn naive_mha(p: &MultiHeadAttention<f64>, q: &Matrix<f64>, k: &Matrix<f64>, v: &Matrix<f64>) -> Matrix<f64> {
    let d = p.d_model();
    let h = p.n_heads();
    let dk = d / h;
    let mut concat = Matrix::zeros(q.rows(), d);
    for head in 0..h {
        let slice = |w: &Matrix<f64>| {
            let mut s = Matrix::zeros(d, dk);
            for r in 0..d {
                for c in 0..dk {
                    s.set(r, c, w.get(r, head * dk + c));
                }
            }
            s
        };
        let out = naive_attention(
            &naive_matmul(q, &slice(&p.w_q)),
            &naive_matmul(k, &slice(&p.w_k)),
            &naive_matmul(v, &slice(&p.w_v)),
        );
        for r in 0..q.rows() {
            for c in 0..dk {
                concat.set(r, head * dk + c, out.get(r, c));
            }
        }
    }
    naive_matmul(&concat, &p.w_o)
}

pub fn random_mha(r: &mut ChaCha8Rng, d: usize, h: usize) -> MultiHeadAttention<f64> {
    let s = (1.0 / d as f64).sqrt();
    MultiHeadAttention::from_parts(
        random_matrix(r, d, d, s),
        random_matrix(r, d, d, s),
        random_matrix(r, d, d, s),
        random_matrix(r, d, d, s),
        h,
    )
    .unwrap()
}

pub fn column_sums(m: &Matrix<f64>) -> Vec<f64> {
    (0..m.cols()).map(|c| (0..m.rows()).map(|r| m.get(r, c)).sum()).collect()
}
