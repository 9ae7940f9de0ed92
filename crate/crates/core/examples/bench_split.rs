use plastic_rl::numerics::{Tape, Tensor};
use std::time::Instant;

fn lcg(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed;
    (0..n).map(|_| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); ((s >> 33) as f64 / 2f64.powi(31)) - 1.0 }).collect()
}

fn main() {
    let x = Tensor { shape: vec![32, 72], data: lcg(32*72, 3) };
    let w1 = Tensor { shape: vec![72, 48], data: lcg(72*48, 4) };
    let w2 = Tensor { shape: vec![48, 5], data: lcg(48*5, 5) };
    let tgt = vec![0.1; 32 * 5];
    let wt = vec![1.0; 32 * 5];
    let iters = 20000;

    let build = |tape: &mut Tape| {
        let ix = tape.leaf(x.clone());
        let i1 = tape.param(w1.clone());
        let i2 = tape.param(w2.clone());
        let h = tape.matmul(ix, i1).unwrap();
        let r = tape.relu(h);
        let q = tape.matmul(r, i2).unwrap();
        let l = tape.huber_loss(q, &tgt, &wt, 1.0).unwrap();
        (l, i1)
    };

    let t0 = Instant::now();
    for _ in 0..iters {
        let mut tape = Tape::new();
        let (l, _) = build(&mut tape);
        std::hint::black_box(tape.value(l).data[0]);
    }
    let fwd = t0.elapsed().as_secs_f64() * 1e6 / iters as f64;
    println!("fwd only: {fwd:.1} us");

    let t0 = Instant::now();
    for _ in 0..iters {
        let mut tape = Tape::new();
        let (l, i1) = build(&mut tape);
        tape.backward(l).unwrap();
        std::hint::black_box(tape.grad(i1).unwrap()[0]);
    }
    let both = t0.elapsed().as_secs_f64() * 1e6 / iters as f64;
    println!("fwd+bwd:  {both:.1} us (bwd ~ {:.1} us)", both - fwd);
}
