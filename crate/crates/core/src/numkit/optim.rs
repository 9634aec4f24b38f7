use super::{Matrix, NumError, NumResult, Real};

/// Global L2 norm over a set of parameter arrays.
pub fn global_norm<T: Real>(arrays: &[Matrix<T>]) -> T {
    arrays.iter().map(Matrix::sum_sq).sum::<T>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipStats {
    pub pre_norm: f64,
    pub post_norm: f64,
    pub clipped: bool,
}

/// Rescales `grads` in place so that their global norm is at most `max_norm`.
pub fn clip_global_norm<T: Real>(grads: &mut [Matrix<T>], max_norm: T) -> NumResult<ClipStats> {
    if max_norm.is_nan() || max_norm <= T::zero() {
        return Err(NumError::InvalidArgument(format!(
            "max_norm must be positive, got {max_norm}"
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(NumError::NonFinite {
            op: "clip_global_norm",
        });
    }
    let norm = global_norm(grads);
    let clipped = norm > max_norm;
    if clipped {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v = *v * s;
            }
        }
    }
    Ok(ClipStats {
        pre_norm: norm.as_f64(),
        post_norm: global_norm(grads).as_f64(),
        clipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub step_count: u64,
    pub first_moment: Vec<Matrix<T>>,
    pub second_moment: Vec<Matrix<T>>,
}

impl<T: Real> AdamState<T> {
    /// Zero moments shaped like `params`.
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix<T>>) -> Self {
        let first_moment: Vec<Matrix<T>> = params
            .into_iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            step_count: 0,
            second_moment: first_moment.clone(),
            first_moment,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Real>(
    params: &mut [&mut Matrix<T>],
    grads: &[Matrix<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> NumResult<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(NumError::InvalidArgument(format!(
            "adam_step: {} params, {} grads, {} moment arrays",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first_moment) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(NumError::ShapeMismatch {
                op: "adam_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
        if !g.is_finite() {
            return Err(NumError::NonFinite { op: "adam_step" });
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let lr = T::lit(cfg.lr);
    let eps = T::lit(cfg.eps);

    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.first_moment[i].data_mut();
        for (mv, &gv) in m.iter_mut().zip(g) {
            *mv = b1 * *mv + (T::one() - b1) * gv;
        }
        let v = state.second_moment[i].data_mut();
        for (vv, &gv) in v.iter_mut().zip(g) {
            *vv = b2 * *vv + (T::one() - b2) * gv * gv;
        }
        let m = state.first_moment[i].data();
        let v = state.second_moment[i].data();
        for ((w, &mv), &vv) in p.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mv / bc1;
            let v_hat = vv / bc2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
        p.check_finite("adam_step")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix<f64> {
        Matrix::from_vec(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn clip_examples() {
        let mut g = vec![Matrix::from_vec(1, 2, vec![2.0f64, 0.0]).unwrap()];
        let stats = clip_global_norm(&mut g, 1.0).unwrap();
        assert!(stats.clipped);
        assert_eq!(g[0].data(), &[1.0, 0.0]);

        let mut g = vec![Matrix::from_vec(1, 2, vec![0.3f64, 0.4]).unwrap()];
        clip_global_norm(&mut g, 1.0).unwrap();
        assert_eq!(g[0].data(), &[0.3, 0.4]);

        let mut g = vec![Matrix::<f64>::zeros(3, 3)];
        clip_global_norm(&mut g, 1.0).unwrap();
        assert!(g[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clip_rejects_bad_input() {
        let mut g = vec![scalar(1.0)];
        assert!(clip_global_norm(&mut g, 0.0).is_err());
        g[0].data_mut()[0] = f64::INFINITY;
        assert_eq!(
            clip_global_norm(&mut g, 1.0),
            Err(NumError::NonFinite {
                op: "clip_global_norm"
            })
        );
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut w = Matrix::from_vec(2, 2, vec![1.0f64, -2.0, 3.0, 0.5]).unwrap();
        let orig = w.clone();
        let mut state = AdamState::new([&w]);
        let cfg = AdamConfig::with_lr(0.1);
        for _ in 0..50 {
            adam_step(&mut [&mut w], &[Matrix::zeros(2, 2)], &mut state, &cfg).unwrap();
        }
        assert_eq!(w, orig);
        assert_eq!(state.step_count, 50);
    }

    #[test]
    fn adam_first_step_closed_form() {
        // At t=1: m̂ = g and v̂ = g², so Δ = −lr·g/(|g| + eps).
        let cfg = AdamConfig::default();
        for g in [0.37f64, -2.5, 1e-3] {
            let mut w = scalar(0.0);
            let mut state = AdamState::new([&w]);
            adam_step(&mut [&mut w], &[scalar(g)], &mut state, &cfg).unwrap();
            let expected = -cfg.lr * g / (g.abs() + cfg.eps);
            assert!((w.data()[0] - expected).abs() < 1e-18, "g={g}");
            assert!((w.data()[0] + cfg.lr * g.signum()).abs() < 1e-9);
            assert!(state.second_moment[0].data()[0] >= 0.0);
        }
    }

    fn quadratic_run(lr: f64, steps: usize) -> Vec<f64> {
        let mut w = scalar(1.0);
        let mut state = AdamState::new([&w]);
        let cfg = AdamConfig::with_lr(lr);
        let mut losses = vec![1.0];
        for _ in 0..steps {
            let g = scalar(2.0 * w.data()[0]);
            adam_step(&mut [&mut w], &[g], &mut state, &cfg).unwrap();
            losses.push(w.data()[0].powi(2));
        }
        losses
    }

    #[test]
    fn adam_descends_quadratic() {
        // Scalar oracle: with lr=0.1 momentum overshoots the minimum at
        // step 12; the first 11 steps decrease strictly.
        let fast = quadratic_run(0.1, 100);
        assert!(fast[..12].windows(2).all(|w| w[1] < w[0]));
        assert!(fast[100] < 1e-4);

        let slow = quadratic_run(0.01, 100);
        assert!(slow.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut w = scalar(1.0);
        let mut state = AdamState::new([&w]);
        let err = adam_step(
            &mut [&mut w],
            &[Matrix::zeros(1, 2)],
            &mut state,
            &AdamConfig::default(),
        );
        assert!(matches!(err, Err(NumError::ShapeMismatch { .. })));
    }
}
