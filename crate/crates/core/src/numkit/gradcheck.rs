//! Central finite differences, used as the independent oracle for every
//! hand-derived gradient in the crate.

use super::Matrix;

/// Magnitudes below this are compared absolutely in [`relative_error`].
const REL_FLOOR: f64 = 1e-6;

/// Central-difference gradient of `f` at `params`, one coordinate at a time.
///
/// `f` must be deterministic. The parameter arrays are perturbed in a private
/// copy, so `params` is left untouched.
pub fn finite_diff_grad<F, E>(mut f: F, params: &[Matrix<f64>], h: f64) -> Result<Vec<Matrix<f64>>, E>
where
    F: FnMut(&[Matrix<f64>]) -> Result<f64, E>,
{
    let mut work = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for a in 0..params.len() {
        let mut g = Matrix::zeros(params[a].rows(), params[a].cols());
        for i in 0..params[a].len() {
            let orig = params[a].data()[i];
            work[a].data_mut()[i] = orig + h;
            let plus = f(&work)?;
            work[a].data_mut()[i] = orig - h;
            let minus = f(&work)?;
            work[a].data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / (2.0 * h);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// `|a − b| / max(|a|, |b|, 1e-6)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Largest [`relative_error`] over matching entries of two gradient sets.
///
/// Panics if the sets do not have identical shapes.
pub fn max_relative_error(analytic: &[Matrix<f64>], numeric: &[Matrix<f64>]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient set length");
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| {
            assert_eq!(a.shape(), n.shape(), "gradient shape");
            a.data().iter().zip(n.data()).map(|(&x, &y)| relative_error(x, y))
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{cross_entropy_from_logits, head_backward, head_forward, HeadParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::convert::Infallible;

    #[test]
    fn square_at_three() {
        let p = [Matrix::from_vec(1, 1, vec![3.0]).unwrap()];
        let g = finite_diff_grad(|w| Ok::<_, Infallible>(w[0].data()[0].powi(2)), &p, 1e-5).unwrap();
        assert!((g[0].data()[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn linear_is_exact() {
        let c = [0.5, -2.0, 3.25, 0.0];
        let p = [Matrix::from_vec(2, 2, vec![1.0, 2.0, -1.0, 4.0]).unwrap()];
        let g = finite_diff_grad(
            |w| Ok::<_, Infallible>(w[0].data().iter().zip(c).map(|(x, k)| x * k).sum()),
            &p,
            1e-5,
        )
        .unwrap();
        for (a, b) in g[0].data().iter().zip(c) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rand_m = |r: usize, c: usize| {
            Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap()
        };
        let params = vec![rand_m(4, 8), rand_m(1, 4), rand_m(1, 8)];
        for label in 0..4 {
            let loss = |p: &[Matrix<f64>]| {
                let head = HeadParams {
                    weight: p[0].clone(),
                    bias: p[1].clone(),
                };
                let out = head_forward(p[2].data(), &head)?;
                cross_entropy_from_logits(&out.logits, label)
            };
            let numeric = finite_diff_grad(loss, &params, 1e-5).unwrap();

            let head = HeadParams {
                weight: params[0].clone(),
                bias: params[1].clone(),
            };
            let x = params[2].data();
            let out = head_forward(x, &head).unwrap();
            let mut d_logits = out.probs.clone();
            d_logits[label] -= 1.0;
            let g = head_backward(x, &head, &out, &d_logits);
            let analytic = vec![g.weight, g.bias, Matrix::row_vector(&g.input).unwrap()];
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "label {label}: {err}");
        }
    }
}
