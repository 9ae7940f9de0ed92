//! Finite-difference oracle for the tape's backward pass.
//!
//! Central differences with h = 1e-5 are computed entirely through the
//! forward path (never through `backward`), so the two routes are
//! independent. Configurations are resampled if any pre-activation sits
//! within 1e-4 of a ReLU kink, where a finite difference is meaningless.

use plastic_rl::numerics::{Tape, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / scale
}

/// Central finite differences of `loss` w.r.t. every entry of every param.
fn central_diff(loss: &dyn Fn(&[Tensor]) -> f64, params: &[Tensor]) -> Vec<Tensor> {
    let mut grads = Vec::with_capacity(params.len());
    for (pi, p) in params.iter().enumerate() {
        let mut g = Tensor::zeros(&p.shape);
        for j in 0..p.len() {
            let mut plus = params.to_vec();
            let mut minus = params.to_vec();
            plus[pi].data[j] += H;
            minus[pi].data[j] -= H;
            g.data[j] = (loss(&plus) - loss(&minus)) / (2.0 * H);
        }
        grads.push(g);
    }
    grads
}

fn assert_grads_match(analytic: &[Tensor], numeric: &[Tensor], what: &str) {
    for (pi, (a, n)) in analytic.iter().zip(numeric.iter()).enumerate() {
        for j in 0..a.len() {
            let e = rel_err(a.data[j], n.data[j]);
            assert!(
                e <= TOL,
                "{what}: param {pi} entry {j}: analytic {} vs numeric {} (rel err {e:.3e})",
                a.data[j],
                n.data[j]
            );
        }
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor { shape: shape.to_vec(), data }
}

#[test]
fn two_layer_dense_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let (b, i, h, o) = (3, 4, 5, 2);
        let x = rand_tensor(&mut rng, &[b, i], 1.0);
        let target: Vec<f64> = (0..b * o).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let params = vec![
            rand_tensor(&mut rng, &[i, h], 0.8),
            rand_tensor(&mut rng, &[h], 0.5),
            rand_tensor(&mut rng, &[h, o], 0.8),
            rand_tensor(&mut rng, &[o], 0.5),
        ];
        // Run with analytic backward and capture hidden pre-activations.
        let run = |ps: &[Tensor], tape: &mut Tape| {
            let xb = tape.leaf(x.clone());
            let w1 = tape.param(ps[0].clone());
            let b1 = tape.param(ps[1].clone());
            let w2 = tape.param(ps[2].clone());
            let b2 = tape.param(ps[3].clone());
            let z1 = tape.matmul(xb, w1).unwrap();
            let z1b = tape.bias_add(z1, b1).unwrap();
            let a1 = tape.relu(z1b);
            let z2 = tape.matmul(a1, w2).unwrap();
            let y = tape.bias_add(z2, b2).unwrap();
            let loss = tape.squared_loss(y, &target, &vec![1.0; target.len()]).unwrap();
            (loss, z1b, vec![w1, b1, w2, b2])
        };
        let mut tape = Tape::new();
        let (loss, z1b, ids) = run(&params, &mut tape);
        if tape.value(z1b).data.iter().any(|v| v.abs() < 1e-4) {
            continue; // too close to a kink for finite differences
        }
        tape.backward(loss).unwrap();
        let analytic: Vec<Tensor> = ids.iter().map(|&id| tape.grad_tensor(id)).collect();

        let f = |ps: &[Tensor]| {
            let mut t = Tape::new();
            let (l, _, _) = run(ps, &mut t);
            t.value(l).data[0]
        };
        let numeric = central_diff(&f, &params);
        assert_grads_match(&analytic, &numeric, &format!("dense trial {trial}"));
    }
}

#[test]
fn conv_crelu_dueling_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..8 {
        let (b, cin, hh, ww) = (2, 2, 5, 5);
        let stride = 1 + trial % 2;
        let x = rand_tensor(&mut rng, &[b, cin, hh, ww], 1.0);
        let cout = 3;
        let ho = (hh - 3) / stride + 1;
        let flat = cout * 2 * ho * ho; // crelu doubles channels
        let hid = 4;
        let actions = 3;
        let target: Vec<f64> = (0..b * actions).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let params = vec![
            rand_tensor(&mut rng, &[cout, cin, 3, 3], 0.6),
            rand_tensor(&mut rng, &[cout], 0.3),
            rand_tensor(&mut rng, &[flat, hid], 0.6),
            rand_tensor(&mut rng, &[hid], 0.3),
            rand_tensor(&mut rng, &[hid * 2, 1], 0.6),
            rand_tensor(&mut rng, &[flat, hid], 0.6),
            rand_tensor(&mut rng, &[hid], 0.3),
            rand_tensor(&mut rng, &[hid * 2, actions], 0.6),
        ];
        let run = |ps: &[Tensor], tape: &mut Tape| {
            let xb = tape.leaf(x.clone());
            let ids: Vec<_> = ps.iter().map(|p| tape.param(p.clone())).collect();
            let conv = tape.conv2d(xb, ids[0], ids[1], stride).unwrap();
            let act = tape.crelu(conv, 1).unwrap();
            let flat_id = tape.reshape(act, vec![b, flat]).unwrap();
            let vz = tape.matmul(flat_id, ids[2]).unwrap();
            let vzb = tape.bias_add(vz, ids[3]).unwrap();
            let vh = tape.crelu(vzb, 1).unwrap();
            let v = tape.matmul(vh, ids[4]).unwrap();
            let az = tape.matmul(flat_id, ids[5]).unwrap();
            let azb = tape.bias_add(az, ids[6]).unwrap();
            let ah = tape.crelu(azb, 1).unwrap();
            let a = tape.matmul(ah, ids[7]).unwrap();
            let q = tape.dueling_combine(v, a).unwrap();
            let loss = tape.squared_loss(q, &target, &vec![1.0; target.len()]).unwrap();
            (loss, vec![conv, vzb, azb], ids)
        };
        let mut tape = Tape::new();
        let (loss, pre_acts, ids) = run(&params, &mut tape);
        let near_kink = pre_acts
            .iter()
            .any(|&id| tape.value(id).data.iter().any(|v| v.abs() < 1e-4));
        if near_kink {
            continue;
        }
        tape.backward(loss).unwrap();
        let analytic: Vec<Tensor> = ids.iter().map(|&id| tape.grad_tensor(id)).collect();

        let f = |ps: &[Tensor]| {
            let mut t = Tape::new();
            let (l, _, _) = run(ps, &mut t);
            t.value(l).data[0]
        };
        let numeric = central_diff(&f, &params);
        assert_grads_match(&analytic, &numeric, &format!("conv trial {trial} stride {stride}"));
    }
}

#[test]
fn sparse_input_conv_matches_finite_differences() {
    // Mostly-zero inputs route through the gather-from-nonzeros kernels.
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let (b, cin, hh) = (2, 2, 6);
    let mut x = Tensor::zeros(&[b, cin, hh, hh]);
    for _ in 0..5 {
        let i = rng.gen_range(0..x.len());
        x.data[i] = rng.gen_range(0.5..1.5);
    }
    let cout = 2;
    let target = vec![0.3; b * cout * 4 * 4];
    let params = vec![
        rand_tensor(&mut rng, &[cout, cin, 3, 3], 0.6),
        rand_tensor(&mut rng, &[cout], 0.3),
    ];
    let run = |ps: &[Tensor], tape: &mut Tape| {
        let xb = tape.leaf(x.clone());
        let k = tape.param(ps[0].clone());
        let bias = tape.param(ps[1].clone());
        let y = tape.conv2d(xb, k, bias, 1).unwrap();
        let loss = tape.squared_loss(y, &target, &vec![1.0; target.len()]).unwrap();
        (loss, vec![k, bias])
    };
    let mut tape = Tape::new();
    let (loss, ids) = run(&params, &mut tape);
    tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = ids.iter().map(|&id| tape.grad_tensor(id)).collect();
    let f = |ps: &[Tensor]| {
        let mut t = Tape::new();
        let (l, _) = run(ps, &mut t);
        t.value(l).data[0]
    };
    let numeric = central_diff(&f, &params);
    assert_grads_match(&analytic, &numeric, "sparse conv");
}

#[test]
fn huber_gradient_away_from_kinks() {
    // Errors strictly inside and strictly outside the delta boundary.
    let pred_vals = [0.4, 1.9, -2.3, -0.7];
    let params = vec![Tensor::vector(&pred_vals)];
    let run = |ps: &[Tensor], tape: &mut Tape| {
        let p = tape.param(ps[0].clone());
        let loss = tape.huber_loss(p, &[0.0; 4], &[1.0, 0.5, 2.0, 1.0], 1.0).unwrap();
        (loss, vec![p])
    };
    let mut tape = Tape::new();
    let (loss, ids) = run(&params, &mut tape);
    tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = ids.iter().map(|&id| tape.grad_tensor(id)).collect();
    let f = |ps: &[Tensor]| {
        let mut t = Tape::new();
        let (l, _) = run(ps, &mut t);
        t.value(l).data[0]
    };
    let numeric = central_diff(&f, &params);
    assert_grads_match(&analytic, &numeric, "huber");
}
