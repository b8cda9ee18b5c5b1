//! Library results compared with independent reference computations written
//! out directly in this file.

use std::f64::consts::PI;

use mcmlp_core::autograd::gelu;
use mcmlp_core::transforms::{dct2d, dct_naive, fwht, hadamard2d, hadamard_matrix, DctPlan};
use mcmlp_core::{finite_diff_grad, Error, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape, data).unwrap()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// F(k) = c(k) Σ x(i) cos(π(2i+1)k / 2N), c(0) = √(1/N), c(k) = √(2/N).
fn reference_dct(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let c = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            c * x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos())
                .sum::<f64>()
        })
        .collect()
}

fn sylvester(n: usize) -> Vec<Vec<f64>> {
    if n == 1 {
        return vec![vec![1.0]];
    }
    let half = sylvester(n / 2);
    let mut out = vec![vec![0.0; n]; n];
    for (i, row) in half.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[i][j] = v;
            out[i][j + n / 2] = v;
            out[i + n / 2][j] = v;
            out[i + n / 2][j + n / 2] = -v;
        }
    }
    out
}

fn schoolbook(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    out
}

#[test]
fn naive_dct_matches_reference_formula() {
    let mut r = rng(1);
    for n in [1, 2, 3, 5, 8, 16, 64, 100] {
        let x = random_vec(&mut r, n);
        assert!(
            max_abs(&dct_naive(&x), &reference_dct(&x)) <= 1e-12,
            "n = {n}"
        );
    }
}

#[test]
fn fast_dct_matches_reference_formula() {
    let mut r = rng(2);
    for log in 0..=10 {
        let n = 1 << log;
        let plan = DctPlan::<f64>::new(n).unwrap();
        for _ in 0..5 {
            let x = random_vec(&mut r, n);
            assert!(
                max_abs(&plan.forward(&x).unwrap(), &reference_dct(&x)) <= 1e-9,
                "n = {n}"
            );
        }
    }
}

#[test]
fn dct_small_examples() {
    let plan = DctPlan::<f64>::new(4).unwrap();
    let y = plan.forward(&[1.0, 1.0, 1.0, 1.0]).unwrap();
    assert!(max_abs(&y, &[2.0, 0.0, 0.0, 0.0]) <= 1e-12);
    assert!(max_abs(&dct_naive(&[1.0, 1.0, 1.0, 1.0]), &[2.0, 0.0, 0.0, 0.0]) <= 1e-12);

    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!(max_abs(&dct_naive(&[1.0, 0.0]), &[h, h]) <= 1e-12);

    let dc = plan.transpose(&[2.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(max_abs(&dc, &[1.0; 4]) <= 1e-12);
}

#[test]
fn dct_plan_rejects_wrong_length() {
    let plan = DctPlan::<f64>::new(8).unwrap();
    assert!(matches!(plan.forward(&[0.0; 4]), Err(Error::Shape(_))));
}

#[test]
fn hadamard_matrix_matches_sylvester_recursion() {
    assert_eq!(hadamard_matrix(1).unwrap().entries(), &[1]);
    assert_eq!(hadamard_matrix(2).unwrap().entries(), &[1, 1, 1, -1]);
    assert_eq!(
        hadamard_matrix(4).unwrap().entries(),
        &[1, 1, 1, 1, 1, -1, 1, -1, 1, 1, -1, -1, 1, -1, -1, 1]
    );
    for n in [8, 32, 128] {
        let h = hadamard_matrix(n).unwrap();
        let reference = sylvester(n);
        for (i, row) in h.rows().enumerate() {
            let row: Vec<f64> = row.iter().map(|&v| f64::from(v)).collect();
            assert_eq!(row, reference[i], "order {n}, row {i}");
        }
    }
    assert!(matches!(hadamard_matrix(6), Err(Error::Validation(_))));
}

#[test]
fn fwht_matches_dense_product() {
    let mut r = rng(3);
    assert_eq!(
        {
            let mut x = vec![1.0, 0.0, 0.0, 0.0];
            fwht(&mut x).unwrap();
            x
        },
        vec![1.0; 4]
    );
    for log in 0..=10 {
        let n = 1 << log;
        let dense = sylvester(n);
        let x = random_vec(&mut r, n);
        let expected: Vec<f64> = dense
            .iter()
            .map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum())
            .collect();
        let mut y = x.clone();
        fwht(&mut y).unwrap();
        assert!(max_abs(&y, &expected) <= 1e-9, "n = {n}");
    }
    assert!(matches!(fwht(&mut [0.0; 12]), Err(Error::Validation(_))));
}

#[test]
fn dct2d_matches_direct_double_sum() {
    let (n, c) = (8, 8);
    let x = random_vec(&mut rng(4), n * c);
    let scale = |k: usize, len: usize| {
        if k == 0 {
            (1.0 / len as f64).sqrt()
        } else {
            (2.0 / len as f64).sqrt()
        }
    };
    let mut expected = vec![0.0; n * c];
    for u in 0..n {
        for v in 0..c {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..c {
                    acc += x[i * c + j]
                        * (PI * (2 * i + 1) as f64 * u as f64 / (2 * n) as f64).cos()
                        * (PI * (2 * j + 1) as f64 * v as f64 / (2 * c) as f64).cos();
                }
            }
            expected[u * c + v] = scale(u, n) * scale(v, c) * acc;
        }
    }
    let y = dct2d(&tensor(&[n, c], x)).unwrap();
    assert!(max_abs(y.data(), &expected) <= 1e-9);
}

#[test]
fn dct2d_constant_and_norm() {
    let y = dct2d(&tensor(&[4, 4], vec![1.0; 16])).unwrap();
    let mut expected = vec![0.0; 16];
    expected[0] = 4.0;
    assert!(max_abs(y.data(), &expected) <= 1e-12);

    let x = random_vec(&mut rng(5), 16 * 32);
    let y = dct2d(&tensor(&[16, 32], x.clone())).unwrap();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!((norm(y.data()) - norm(&x)).abs() <= 1e-9);
}

#[test]
fn hadamard2d_matches_dense_product() {
    let (n, c) = (8, 16);
    let x = random_vec(&mut rng(6), n * c);
    let hn = sylvester(n);
    let hc = sylvester(c);
    let left = schoolbook(&hn.concat(), &x, n, n, c);
    let mut expected = schoolbook(&left, &hc.concat(), n, c, c);
    for v in &mut expected {
        *v /= (n * c) as f64;
    }
    let y = hadamard2d(&tensor(&[n, c], x)).unwrap();
    assert!(max_abs(y.data(), &expected) <= 1e-10);

    let ones = hadamard2d(&tensor(&[4, 4], vec![1.0; 16])).unwrap();
    let mut e00 = [0.0; 16];
    e00[0] = 1.0;
    assert_eq!(ones.data(), &e00[..]);
}

#[test]
fn transforms_2d_reject_non_power_of_two() {
    for bad in [[6usize, 8], [8, 12]] {
        let x = tensor(&bad, vec![0.0; bad[0] * bad[1]]);
        assert!(matches!(dct2d(&x), Err(Error::Validation(_))));
        assert!(matches!(hadamard2d(&x), Err(Error::Validation(_))));
    }
}

#[test]
fn batched_2d_transform_equals_per_slab() {
    let x = random_vec(&mut rng(7), 3 * 4 * 8);
    let batched = dct2d(&tensor(&[3, 4, 8], x.clone())).unwrap();
    for b in 0..3 {
        let slab = dct2d(&tensor(&[4, 8], x[b * 32..(b + 1) * 32].to_vec())).unwrap();
        assert_eq!(&batched.data()[b * 32..(b + 1) * 32], slab.data());
    }
}

#[test]
fn matmul_examples_and_schoolbook() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(tensor(&[1, 2], vec![1.0, 2.0]));
    let b = tape.leaf(tensor(&[2, 1], vec![3.0, 4.0]));
    let p = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(p).data(), &[11.0]);

    let mut r = rng(8);
    let (m, k, n) = (8, 8, 8);
    let x = random_vec(&mut r, m * k);
    let y = random_vec(&mut r, k * n);
    let xa = tape.leaf(tensor(&[m, k], x.clone()));
    let ya = tape.leaf(tensor(&[k, n], y.clone()));
    let p = tape.matmul(xa, ya).unwrap();
    assert!(max_abs(tape.value(p).data(), &schoolbook(&x, &y, m, k, n)) <= 1e-12);

    let bad = tape.leaf(tensor(&[3, 2], vec![0.0; 6]));
    let err = tape.matmul(xa, bad).unwrap_err().to_string();
    assert!(err.contains("[8, 8]") && err.contains("[3, 2]"), "{err}");
}

#[test]
fn concat_examples() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(tensor(&[2], vec![1.0, 2.0]).with_grad());
    let b = tape.leaf(tensor(&[1], vec![3.0]).with_grad());
    let c = tape.concat_last(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0]);
    let s = tape.sum(c).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(a).unwrap(), &[1.0, 1.0]);
    assert_eq!(tape.grad(b).unwrap(), &[1.0]);

    let x = tape.leaf(Tensor::zeros(&[2, 4, 8]));
    let y = tape.leaf(Tensor::zeros(&[2, 4, 8]));
    let z = tape.concat_last(x, y).unwrap();
    assert_eq!(tape.value(z).shape(), &[2, 4, 16]);
    let w = tape.leaf(Tensor::zeros(&[2, 3, 8]));
    assert!(matches!(tape.concat_last(x, w), Err(Error::Shape(_))));
}

#[test]
fn layer_norm_examples_and_moments() {
    let mut tape = Tape::<f64>::new();
    let gamma4 = tape.leaf(Tensor::ones(&[4]));
    let beta4 = tape.leaf(Tensor::zeros(&[4]));
    let x = tape.leaf(tensor(&[4], vec![1.0; 4]));
    let y = tape.layer_norm(x, gamma4, beta4, 1e-6).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0; 4]);

    let gamma2 = tape.leaf(Tensor::ones(&[2]));
    let beta2 = tape.leaf(Tensor::zeros(&[2]));
    let x = tape.leaf(tensor(&[2], vec![-1.0, 1.0]));
    let y = tape.layer_norm(x, gamma2, beta2, 1e-15).unwrap();
    assert!(max_abs(tape.value(y).data(), &[-1.0, 1.0]) <= 1e-12);

    let gamma8 = tape.leaf(Tensor::ones(&[8]));
    let beta8 = tape.leaf(Tensor::zeros(&[8]));
    let data: Vec<f64> = {
        let mut r = rng(9);
        (0..32).map(|_| r.random_range(-3.0..3.0)).collect()
    };
    let x = tape.leaf(tensor(&[4, 8], data));
    let y = tape.layer_norm(x, gamma8, beta8, 1e-6).unwrap();
    for row in tape.value(y).data().chunks(8) {
        let mean = row.iter().sum::<f64>() / 8.0;
        let std = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0).sqrt();
        assert!(mean.abs() <= 1e-6, "mean {mean}");
        assert!((std - 1.0).abs() <= 1e-6, "std {std}");
    }
}

#[test]
fn gelu_reference_values() {
    assert_eq!(gelu(0.0f64), 0.0);
    // Φ(1) to 16 digits.
    assert!((gelu(1.0f64) - 0.841_344_746_068_542_9).abs() <= 1e-12);
    assert!((gelu(1.0f64) - 0.841345).abs() <= 1e-6);
    assert!((gelu(10.0f64) - 10.0).abs() <= 1e-12);
    assert!(gelu(-10.0f64).abs() <= 1e-12);
}

#[test]
fn softmax_cross_entropy_matches_log_sum_exp() {
    let mut tape = Tape::<f64>::new();
    let k = 7;
    let logits = tape.leaf(tensor(&[1, k], vec![0.3; k]));
    let mut target = vec![0.0; k];
    target[2] = 1.0;
    let loss = tape
        .softmax_cross_entropy(logits, &tensor(&[1, k], target))
        .unwrap();
    assert!((tape.value(loss).item() - (k as f64).ln()).abs() <= 1e-12);

    let mut r = rng(10);
    let (b, k) = (4, 10);
    let z = random_vec(&mut r, b * k)
        .iter()
        .map(|v| 4.0 * v)
        .collect::<Vec<_>>();
    let mut t = vec![0.0; b * k];
    for row in t.chunks_mut(k) {
        let w: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0)).collect();
        let s: f64 = w.iter().sum();
        row.iter_mut().zip(&w).for_each(|(d, v)| *d = v / s);
    }
    let mut expected = 0.0;
    for (zr, tr) in z.chunks(k).zip(t.chunks(k)) {
        let m = zr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + zr.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        expected += zr
            .iter()
            .zip(tr)
            .map(|(zi, ti)| ti * (lse - zi))
            .sum::<f64>();
    }
    expected /= b as f64;
    let logits = tape.leaf(tensor(&[b, k], z));
    let loss = tape
        .softmax_cross_entropy(logits, &tensor(&[b, k], t))
        .unwrap();
    assert!((tape.value(loss).item() - expected).abs() <= 1e-10);

    let confident = tape.leaf(tensor(&[1, 3], vec![50.0, 0.0, 0.0]));
    let loss = tape
        .softmax_cross_entropy(confident, &tensor(&[1, 3], vec![1.0, 0.0, 0.0]))
        .unwrap();
    assert!(tape.value(loss).item() < 1e-20);

    let unnormalized = tensor(&[1, 3], vec![0.5, 0.0, 0.0]);
    assert!(matches!(
        tape.softmax_cross_entropy(confident, &unnormalized),
        Err(Error::Validation(_))
    ));
}

#[test]
fn mean_tokens_matches_explicit_sum() {
    let mut tape = Tape::<f64>::new();
    let x = random_vec(&mut rng(11), 2 * 4 * 3);
    let v = tape.leaf(tensor(&[2, 4, 3], x.clone()));
    let m = tape.mean_tokens(v).unwrap();
    assert_eq!(tape.value(m).shape(), &[2, 3]);
    let mut expected = vec![0.0; 6];
    for b in 0..2 {
        for n in 0..4 {
            for c in 0..3 {
                expected[b * 3 + c] += x[b * 12 + n * 3 + c];
            }
        }
    }
    expected.iter_mut().for_each(|e| *e /= 4.0);
    assert!(max_abs(tape.value(m).data(), &expected) <= 1e-15);

    let single = tape.leaf(tensor(&[1, 1, 3], vec![1.5, -2.0, 0.25]));
    let m = tape.mean_tokens(single).unwrap();
    assert_eq!(tape.value(m).data(), &[1.5, -2.0, 0.25]);

    let constant = tape.leaf(tensor(&[1, 5, 2], vec![0.7; 10]));
    let m = tape.mean_tokens(constant).unwrap();
    assert!(max_abs(tape.value(m).data(), &[0.7, 0.7]) <= 1e-15);
}

#[test]
fn backward_simple_functionals() {
    let x0 = random_vec(&mut rng(12), 6);
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(tensor(&[2, 3], x0.clone()).with_grad());
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0; 6]);

    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(tensor(&[2, 3], x0.clone()).with_grad());
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq).unwrap();
    tape.backward(s).unwrap();
    let doubled: Vec<f64> = x0.iter().map(|v| 2.0 * v).collect();
    assert!(max_abs(tape.grad(x).unwrap(), &doubled) <= 1e-15);

    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(tensor(&[3], vec![1.0, 2.0, 3.0]).with_grad());
    assert!(tape.backward(x).is_err());
}

#[test]
fn finite_difference_examples() {
    let x = tensor(&[5], random_vec(&mut rng(13), 5));
    let g = finite_diff_grad(|t| t.data().iter().sum(), &x, 1e-5);
    assert!(max_abs(g.data(), &[1.0; 5]) <= 1e-10);

    let g = finite_diff_grad(
        |t| t.data()[0] * t.data()[0],
        &tensor(&[1], vec![3.0]),
        1e-5,
    );
    assert!((g.data()[0] - 6.0).abs() <= 1e-8);
}
