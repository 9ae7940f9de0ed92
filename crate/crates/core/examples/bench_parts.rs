use plastic_rl::numerics::{Tape, Tensor};
use std::time::Instant;

fn t(shape: &[usize], seed: u64) -> Tensor {
    let n: usize = shape.iter().product();
    let mut s = seed;
    let data = (0..n).map(|_| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); ((s >> 33) as f64 / 2f64.powi(31)) - 1.0 }).collect();
    Tensor { shape: shape.to_vec(), data }
}

fn main() {
    // matmul kernel throughput via tape op: [32,72]x[72,48]
    let a = t(&[32, 72], 1);
    let b = t(&[72, 48], 2);
    let t0 = Instant::now();
    for _ in 0..20000 {
        let mut tape = Tape::new();
        let ia = tape.leaf(a.clone());
        let ib = tape.param(b.clone());
        let o = tape.matmul(ia, ib).unwrap();
        std::hint::black_box(tape.value(o).data[0]);
    }
    let per = t0.elapsed().as_secs_f64() / 20000.0;
    println!("matmul fwd 32x72x48: {:.1} us ({:.2} Gmadd/s)", per * 1e6, 32.0*72.0*48.0/per/1e9);

    // full fwd+bwd of a dueling-shaped dense pair
    let x = t(&[32, 72], 3);
    let w1 = t(&[72, 48], 4);
    let w2 = t(&[48, 5], 5);
    let tgt = vec![0.1; 32 * 5];
    let wt = vec![1.0; 32 * 5];
    let t0 = Instant::now();
    for _ in 0..20000 {
        let mut tape = Tape::new();
        let ix = tape.leaf(x.clone());
        let i1 = tape.param(w1.clone());
        let i2 = tape.param(w2.clone());
        let h = tape.matmul(ix, i1).unwrap();
        let r = tape.relu(h);
        let q = tape.matmul(r, i2).unwrap();
        let l = tape.huber_loss(q, &tgt, &wt, 1.0).unwrap();
        tape.backward(l).unwrap();
        std::hint::black_box(tape.grad(i1).unwrap()[0]);
    }
    println!("dense fwd+bwd pair: {:.1} us", t0.elapsed().as_secs_f64() * 1e6 / 20000.0);

    // conv fwd+bwd [32,4,10,10] -> k4 s2 -> 6ch, dense input (worst case)
    let cx = t(&[32, 4, 10, 10], 6);
    let ck = t(&[6, 4, 4, 4], 7);
    let cb = t(&[6], 8);
    let tgt2 = vec![0.1; 32 * 6 * 16];
    let wt2 = vec![1.0; 32 * 6 * 16];
    let t0 = Instant::now();
    for _ in 0..20000 {
        let mut tape = Tape::new();
        let ix = tape.leaf(cx.clone());
        let ik = tape.param(ck.clone());
        let ib2 = tape.param(cb.clone());
        let o = tape.conv2d(ix, ik, ib2, 2).unwrap();
        let f = tape.reshape(o, vec![32, 6 * 16]).unwrap();
        let l = tape.huber_loss(f, &tgt2, &wt2, 1.0).unwrap();
        tape.backward(l).unwrap();
        std::hint::black_box(tape.grad(ik).unwrap()[0]);
    }
    println!("conv dense fwd+bwd: {:.1} us", t0.elapsed().as_secs_f64() * 1e6 / 20000.0);
}
