use fmn_autodiff::{AutodiffError, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Quadruple-loop cross-correlation used as an independent reference.
fn naive_conv(
    input: &[f64],
    (c_in, h, w): (usize, usize, usize),
    kernel: &[f64],
    (c_out, kh, kw): (usize, usize, usize),
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; c_out * oh * ow];
    for o in 0..c_out {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = bias[o];
                for c in 0..c_in {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (y * stride + ky) as isize - pad as isize;
                            let ix = (x * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += kernel[((o * c_in + c) * kh + ky) * kw + kx]
                                * input[(c * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(o * oh + y) * ow + x] = acc;
            }
        }
    }
    (out, oh, ow)
}

#[test]
fn conv_identity_kernel_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_vec(&mut rng, 3 * 5 * 4, 1.0);
    let mut k = vec![0.0; 9];
    for c in 0..3 {
        k[c * 3 + c] = 1.0;
    }
    let mut tape = Tape::<f64>::new();
    let xv = tape.constant(vec![3, 5, 4], x.clone()).unwrap();
    let kv = tape.constant(vec![3, 3, 1, 1], k).unwrap();
    let bv = tape.constant(vec![3], vec![0.0; 3]).unwrap();
    let y = tape.conv2d(xv, kv, bv, 1, 0).unwrap();
    assert_eq!(tape.values(y), x.as_slice());
}

#[test]
fn conv_all_ones_on_constant_image() {
    let c = 0.7f32;
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(vec![1, 6, 6], vec![c; 36]).unwrap();
    let k = tape.constant(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap();
    let b = tape.constant(vec![1], vec![0.0]).unwrap();
    let y = tape.conv2d(x, k, b, 1, 0).unwrap();
    assert_eq!(tape.shape(y), &[1, 4, 4]);
    for &v in tape.values(y) {
        assert!((v - 9.0 * c).abs() < 1e-5);
    }
}

#[test]
fn conv_matches_direct_oracle_on_random_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // two images of 3x8x8, several geometries
    for &(c_out, k, stride, pad) in &[(4, 3, 1, 1), (5, 3, 2, 1), (2, 5, 1, 2), (3, 1, 2, 0), (4, 7, 2, 3)] {
        let kernel = rand_vec(&mut rng, c_out * 3 * k * k, 0.5);
        let bias = rand_vec(&mut rng, c_out, 0.5);
        for _image in 0..2 {
            let x = rand_vec(&mut rng, 3 * 8 * 8, 1.0);
            let (expect, oh, ow) =
                naive_conv(&x, (3, 8, 8), &kernel, (c_out, k, k), &bias, stride, pad);
            let mut tape = Tape::<f64>::new();
            let xv = tape.constant(vec![3, 8, 8], x).unwrap();
            let kv = tape.constant(vec![c_out, 3, k, k], kernel.clone()).unwrap();
            let bv = tape.constant(vec![c_out], bias.clone()).unwrap();
            let y = tape.conv2d(xv, kv, bv, stride, pad).unwrap();
            assert_eq!(tape.shape(y), &[c_out, oh, ow]);
            for (a, b) in tape.values(y).iter().zip(&expect) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn conv_rejects_bad_shapes() {
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(vec![2, 4, 4], vec![0.0; 32]).unwrap();
    let k_wrong_cin = tape.constant(vec![1, 3, 3, 3], vec![0.0; 27]).unwrap();
    let k_even = tape.constant(vec![1, 2, 2, 2], vec![0.0; 8]).unwrap();
    let k_big = tape.constant(vec![1, 2, 7, 7], vec![0.0; 98]).unwrap();
    let b = tape.constant(vec![1], vec![0.0]).unwrap();
    let b2 = tape.constant(vec![2], vec![0.0; 2]).unwrap();
    let k_ok = tape.constant(vec![1, 2, 3, 3], vec![0.0; 18]).unwrap();
    for (k, bias) in [(k_wrong_cin, b), (k_even, b), (k_big, b), (k_ok, b2)] {
        let err = tape.conv2d(x, k, bias, 1, 0).unwrap_err();
        assert!(matches!(err, AutodiffError::Shape { op: "conv2d", .. }), "{err}");
    }
    assert!(tape.conv2d(x, k_ok, b, 0, 0).is_err());
}

#[test]
fn relu_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap().with_grad());
    let y = tape.relu(x);
    assert_eq!(tape.values(y), &[0.0, 0.0, 2.0]);
    let pos = tape.constant(vec![2], vec![0.5, 3.0]).unwrap();
    let ypos = tape.relu(pos);
    assert_eq!(tape.values(ypos), &[0.5, 3.0]);

    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(vec![2], vec![-0.5, 0.5]).unwrap().with_grad());
    let y = tape.relu(x);
    let w = tape.constant(vec![2], vec![3.0, 3.0]).unwrap();
    let yw = tape.mul(y, w).unwrap();
    let s = tape.sum(yw);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[0.0, 3.0]);
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::<f64>::new();
    let u = tape.constant(vec![4], vec![0.3; 4]).unwrap();
    let su = tape.softmax(u, 0).unwrap();
    for &p in tape.values(su) {
        assert!((p - 0.25).abs() < 1e-12);
    }
    let x = tape.constant(vec![2], vec![2.0, 0.0]).unwrap();
    let sx = tape.softmax(x, 0).unwrap();
    // direct scalar evaluation: e^2 / (e^2 + 1)
    let p0 = 2f64.exp() / (2f64.exp() + 1.0);
    assert!((tape.values(sx)[0] - p0).abs() < 1e-12);
    assert!((tape.values(sx)[0] - 0.8808).abs() < 1e-4);
    assert!((tape.values(sx)[1] - 0.1192).abs() < 1e-4);

    let logits = vec![0.1, -2.0, 3.5, 0.7, 1.1, -0.4];
    let a = tape.constant(vec![3, 2], logits.clone()).unwrap();
    let b = tape
        .constant(vec![3, 2], logits.iter().map(|v| v + 123.0).collect())
        .unwrap();
    let sa = tape.softmax(a, 0).unwrap();
    let sb = tape.softmax(b, 0).unwrap();
    for (p, q) in tape.values(sa).iter().zip(tape.values(sb)) {
        assert!((p - q).abs() < 1e-6);
    }
    assert!(tape.softmax(a, 2).is_err());
}

#[test]
fn softsign_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(vec![3], vec![0.0, 1.0, -3.0]).unwrap();
    let y = tape.softsign(x);
    assert_eq!(tape.values(y), &[0.0, 0.5, -0.75]);

    // central finite differences of the scalar map
    for &x0 in &[-2.0, -0.1, 0.1, 2.0] {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![1], vec![x0]).unwrap().with_grad());
        let y = tape.softsign(x);
        tape.backward(y).unwrap();
        let analytic = tape.grad(x).unwrap()[0];
        let f = |v: f64| v / (1.0 + v.abs());
        let h = 1e-6;
        let numeric = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
        assert!((analytic - numeric).abs() / numeric.abs() < 1e-5);
    }
}

#[test]
fn cross_entropy_examples() {
    let mut tape = Tape::<f64>::new();
    let onehot = tape
        .constant(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        .unwrap();
    let l = tape
        .categorical_cross_entropy(onehot, 0, &[0, 1], None)
        .unwrap();
    assert!(tape.value(l).item() <= 1e-6);

    let uniform = tape.constant(vec![5, 4], vec![0.25; 20]).unwrap();
    let l = tape
        .categorical_cross_entropy(uniform, 1, &[0, 1, 2, 3, 0], None)
        .unwrap();
    assert!((tape.value(l).item() - 4f64.ln()).abs() < 1e-4);
    assert!((tape.value(l).item() - 1.3863).abs() < 1e-4);
}

#[test]
fn cross_entropy_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = 17;
        // class axis last: [n, 3]
        let mut probs = Vec::new();
        for _ in 0..n {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            probs.extend(raw.iter().map(|v| v / s));
        }
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let mask: Vec<bool> = (0..n).map(|i| i == 0 || rng.random_bool(0.7)).collect();

        let mut total = 0.0;
        let mut count = 0;
        for i in 0..n {
            if mask[i] {
                total += -probs[i * 3 + targets[i]].ln();
                count += 1;
            }
        }
        let oracle = total / count as f64;

        let mut tape = Tape::<f64>::new();
        let p = tape.constant(vec![n, 3], probs).unwrap();
        let l = tape
            .categorical_cross_entropy(p, 1, &targets, Some(&mask))
            .unwrap();
        assert!((tape.value(l).item() - oracle).abs() < 1e-6);
    }
}

#[test]
fn cross_entropy_clips_and_rejects_empty_support() {
    let mut tape = Tape::<f32>::new();
    let p = tape.constant(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let l = tape
        .categorical_cross_entropy(p, 0, &[1, 0], None)
        .unwrap();
    let v = tape.value(l).item();
    assert!(v.is_finite());
    assert!((v as f64 - -(1e-7f64).ln()).abs() < 1e-3);
    let err = tape
        .categorical_cross_entropy(p, 0, &[1, 0], Some(&[false, false]))
        .unwrap_err();
    assert_eq!(err, AutodiffError::EmptyLossSupport);
    assert_eq!(err.to_string(), "empty loss support");
}

#[test]
fn backward_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(vec![2, 3], vec![0.5; 6]).unwrap().with_grad());
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0; 6]);

    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().with_grad());
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);

    let err = tape.backward(sq).unwrap_err();
    assert_eq!(err, AutodiffError::NonScalarLoss(vec![2]));
}

#[test]
fn fan_out_accumulates() {
    // y = relu(x) + 2x  => dy/dx = 1[x>0] + 2
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(vec![2], vec![-1.0, 1.0]).unwrap().with_grad());
    let r = tape.relu(x);
    let d = tape.affine(x, 2.0, 0.0);
    let y = tape.add(r, d).unwrap();
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 3.0]);
}

/// Builds `loss = f(tape, inputs)` and compares every input gradient with
/// central differences.
fn grad_check(
    shapes: &[Vec<usize>],
    seed: u64,
    build: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f64>> = shapes
        .iter()
        .map(|s| rand_vec(&mut rng, s.iter().product(), 1.0))
        .collect();
    let eval = |vals: &[Vec<f64>]| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::<f64>::new();
        let vars: Vec<Var> = shapes
            .iter()
            .zip(vals)
            .map(|(s, v)| tape.leaf(Tensor::new(s.clone(), v.clone()).unwrap().with_grad()))
            .collect();
        let loss = build(&mut tape, &vars);
        tape.backward(loss).unwrap();
        let grads = vars
            .iter()
            .map(|&v| {
                tape.grad(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; tape.value(v).len()])
            })
            .collect();
        (tape.value(loss).item(), grads)
    };
    let (_, analytic) = eval(&inputs);
    let h = 1e-6;
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let mut plus = inputs.clone();
            plus[i][j] += h;
            let mut minus = inputs.clone();
            minus[i][j] -= h;
            let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
            let a = analytic[i][j];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            assert!(
                (a - numeric).abs() / denom < 1e-4,
                "input {i} entry {j}: analytic {a} numeric {numeric}"
            );
        }
    }
}

/// Contracts an arbitrary tensor to a scalar with fixed random weights so
/// every output entry gets a distinct upstream gradient.
fn contract(tape: &mut Tape<f64>, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = tape.value(y).len();
    let w = tape
        .constant(tape.shape(y).to_vec(), rand_vec(&mut rng, n, 1.0))
        .unwrap();
    let yw = tape.mul(y, w).unwrap();
    tape.sum(yw)
}

#[test]
fn gradient_checks_for_every_op() {
    grad_check(&[vec![2, 5, 6], vec![3, 2, 3, 3], vec![3]], 1, |t, v| {
        let y = t.conv2d(v[0], v[1], v[2], 2, 1).unwrap();
        contract(t, y, 100)
    });
    grad_check(&[vec![2, 6, 6], vec![2, 2, 5, 5], vec![2]], 2, |t, v| {
        let y = t.conv2d(v[0], v[1], v[2], 1, 2).unwrap();
        contract(t, y, 101)
    });
    grad_check(&[vec![3, 4]], 3, |t, v| {
        let y = t.relu(v[0]);
        contract(t, y, 102)
    });
    grad_check(&[vec![3, 4]], 4, |t, v| {
        let y = t.sigmoid(v[0]);
        contract(t, y, 103)
    });
    grad_check(&[vec![3, 4]], 5, |t, v| {
        let y = t.softsign(v[0]);
        contract(t, y, 104)
    });
    grad_check(&[vec![3, 4]], 6, |t, v| {
        let y = t.affine(v[0], -1.5, 0.25);
        contract(t, y, 105)
    });
    for axis in 0..3 {
        grad_check(&[vec![3, 2, 4]], 7, |t, v| {
            let y = t.softmax(v[0], axis).unwrap();
            contract(t, y, 106)
        });
    }
    grad_check(&[vec![2, 3, 2]], 8, |t, v| {
        let y = t.upsample_nearest2x(v[0]).unwrap();
        contract(t, y, 107)
    });
    grad_check(&[vec![2, 4, 6]], 9, |t, v| {
        let y = t.avg_pool(v[0], 2, 3).unwrap();
        contract(t, y, 108)
    });
    grad_check(&[vec![3, 3, 4]], 10, |t, v| {
        let y = t.max_spatial(v[0]).unwrap();
        contract(t, y, 109)
    });
    grad_check(&[vec![5, 2, 2]], 11, |t, v| {
        let y = t.slice_leading(v[0], 1, 3).unwrap();
        contract(t, y, 110)
    });
    grad_check(&[vec![4], vec![4]], 12, |t, v| {
        let a = t.add(v[0], v[1]).unwrap();
        let m = t.mul(a, v[1]).unwrap();
        t.mean(m)
    });
    grad_check(&[vec![1], vec![1]], 13, |t, v| {
        t.weighted_sum(&[(v[0], 2.5), (v[1], -0.5)]).unwrap()
    });
    grad_check(&[vec![3, 2, 5]], 14, |t, v| {
        let p = t.softmax(v[0], 0).unwrap();
        let targets: Vec<usize> = (0..10).map(|i| i % 3).collect();
        let mask: Vec<bool> = (0..10).map(|i| i % 4 != 1).collect();
        t.categorical_cross_entropy(p, 0, &targets, Some(&mask)).unwrap()
    });
    grad_check(&[vec![4]], 15, |t, v| {
        let p = t.sigmoid(v[0]);
        t.binary_cross_entropy(p, &[1.0, 0.0, 0.0, 1.0]).unwrap()
    });
    grad_check(&[vec![6]], 16, |t, v| {
        let y = t.affine(v[0], 2.0, 0.0);
        let targets = [0.1, -0.3, 2.5, 0.0, -3.0, 0.4];
        t.smooth_l1(y, &targets, &[true, true, true, false, true, true])
            .unwrap()
    });
}

#[test]
fn smooth_l1_with_empty_mask_is_zero() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(vec![2], vec![5.0, -1.0]).unwrap().with_grad());
    let l = tape.smooth_l1(x, &[0.0, 0.0], &[false, false]).unwrap();
    assert_eq!(tape.value(l).item(), 0.0);
    tape.backward(l).unwrap();
    assert!(tape.grad(x).is_none());
}

#[test]
fn repeated_runs_are_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(vec![3, 8, 8], rand_vec(&mut rng, 192, 1.0).iter().map(|&v| v as f32).collect()).unwrap();
        let k = tape.leaf(
            Tensor::new(vec![4, 3, 3, 3], rand_vec(&mut rng, 108, 0.3).iter().map(|&v| v as f32).collect())
                .unwrap()
                .with_grad(),
        );
        let b = tape.leaf(Tensor::new(vec![4], vec![0.1; 4]).unwrap().with_grad());
        let y = tape.conv2d(x, k, b, 1, 1).unwrap();
        let y = tape.relu(y);
        let p = tape.softmax(y, 0).unwrap();
        let targets: Vec<usize> = (0..64).map(|i| i % 4).collect();
        let l = tape.categorical_cross_entropy(p, 0, &targets, None).unwrap();
        tape.backward(l).unwrap();
        (tape.value(l).item().to_bits(), tape.grad(k).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_normalizes_finite_logits(
            logits in prop::collection::vec(-80.0f32..80.0, 12),
            axis in 0usize..2,
        ) {
            let mut tape = Tape::<f32>::new();
            let x = tape.constant(vec![3, 4], logits).unwrap();
            let p = tape.softmax(x, axis).unwrap();
            let vals = tape.values(p);
            prop_assert!(vals.iter().all(|v| v.is_finite() && *v >= 0.0));
            let (k, other) = if axis == 0 { (3, 4) } else { (4, 3) };
            for pos in 0..other {
                let s: f32 = (0..k)
                    .map(|c| if axis == 0 { vals[c * 4 + pos] } else { vals[pos * 4 + c] })
                    .sum();
                prop_assert!((s - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn losses_stay_finite(
            logits in prop::collection::vec(-1e4f32..1e4, 8),
            score in prop::collection::vec(-1e4f32..1e4, 2),
        ) {
            let mut tape = Tape::<f32>::new();
            let x = tape.leaf(Tensor::new(vec![4, 2], logits).unwrap().with_grad());
            let p = tape.softmax(x, 0).unwrap();
            let ce = tape.categorical_cross_entropy(p, 0, &[3, 1], None).unwrap();
            let s = tape.leaf(Tensor::new(vec![2], score).unwrap().with_grad());
            let ss = tape.softsign(s);
            let pr = tape.affine(ss, 0.5, 0.5);
            let bce = tape.binary_cross_entropy(pr, &[1.0, 0.0]).unwrap();
            let total = tape.weighted_sum(&[(ce, 1.0), (bce, 1.0)]).unwrap();
            tape.backward(total).unwrap();
            prop_assert!(tape.value(total).item().is_finite());
            prop_assert!(tape.value(x).is_finite() && tape.value(s).is_finite());
            prop_assert!(tape.grad(x).unwrap().iter().all(|g| g.is_finite()));
        }
    }
}
