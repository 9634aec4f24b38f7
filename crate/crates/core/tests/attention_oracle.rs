//! Vectorized attention against plain triple-loop implementations.

mod common;

use common::oracles::{naive_attention, naive_mha, random_mha};
use common::{max_abs_diff, random_matrix, rng};
use crossfuse::fusion::{multi_head_attention, scaled_dot_attention};
use crossfuse::numkit::Matrix;
use rand::Rng;

#[test]
fn scaled_dot_attention_matches_loops() {
    let mut r = rng(11);
    let mut unequal = 0;
    for _ in 0..50 {
        let lq = r.random_range(1..10);
        let lk = r.random_range(1..10);
        let dk = r.random_range(1..9);
        let dv = r.random_range(1..9);
        unequal += usize::from(lq != lk);
        let q = random_matrix(&mut r, lq, dk, 3.0);
        let k = random_matrix(&mut r, lk, dk, 3.0);
        let v = random_matrix(&mut r, lk, dv, 3.0);
        let fast = scaled_dot_attention(&q, &k, &v).unwrap();
        assert!(max_abs_diff(&fast.output, &naive_attention(&q, &k, &v)) <= 1e-5);
        for i in 0..lq {
            let s: f64 = fast.weights.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
    assert!(unequal > 0);
}

#[test]
fn multi_head_attention_matches_loops() {
    let mut r = rng(12);
    for case in 0..50 {
        let h = [1, 2, 4][case % 3];
        let d = h * r.random_range(1..5);
        let lq = r.random_range(1..9);
        // Guarantee query/key lengths differ in most cases.
        let lk = if case % 5 == 0 { lq } else { lq + r.random_range(1..6) };
        let p = random_mha(&mut r, d, h);
        let q = random_matrix(&mut r, lq, d, 2.0);
        let kv = random_matrix(&mut r, lk, d, 2.0);
        let fast = multi_head_attention(&p, &q, &kv, &kv).unwrap();
        assert!(max_abs_diff(&fast, &naive_mha(&p, &q, &kv, &kv)) <= 1e-5);
    }
}

#[test]
fn single_head_is_attention_composed_with_projections() {
    let mut r = rng(13);
    for _ in 0..20 {
        let d = r.random_range(1..7);
        let p = random_mha(&mut r, d, 1);
        let q = random_matrix(&mut r, 4, d, 1.0);
        let k = random_matrix(&mut r, 6, d, 1.0);
        let v = random_matrix(&mut r, 6, d, 1.0);
        let inner = scaled_dot_attention(&q.matmul(&p.w_q).unwrap(), &k.matmul(&p.w_k).unwrap(), &v.matmul(&p.w_v).unwrap()).unwrap();
        let composed = inner.output.matmul(&p.w_o).unwrap();
        assert!(max_abs_diff(&composed, &p.forward(&q, &k, &v).unwrap()) < 1e-12);
    }
}

fn permute_rows(m: &Matrix<f64>, perm: &[usize]) -> Matrix<f64> {
    Matrix::from_rows(&perm.iter().map(|&i| m.row(i).to_vec()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn permutation_properties() {
    let mut r = rng(14);
    for _ in 0..20 {
        let d = 4;
        let p = random_mha(&mut r, d, 2);
        let q = random_matrix(&mut r, 5, d, 1.5);
        let kv = random_matrix(&mut r, 7, d, 1.5);
        let base = p.forward(&q, &kv, &kv).unwrap();

        // Reordering keys and values together leaves the output unchanged.
        let mut perm: Vec<usize> = (0..7).collect();
        perm.rotate_left(r.random_range(1..7));
        perm.swap(0, 3);
        let kv_p = permute_rows(&kv, &perm);
        assert!(max_abs_diff(&base, &p.forward(&q, &kv_p, &kv_p).unwrap()) < 1e-12);

        // Reordering queries reorders output rows the same way.
        let qperm = [4, 2, 0, 1, 3];
        let out = p.forward(&permute_rows(&q, &qperm), &kv, &kv).unwrap();
        assert!(max_abs_diff(&out, &permute_rows(&base, &qperm)) < 1e-12);
    }
}
