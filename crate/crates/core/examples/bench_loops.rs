use std::time::Instant;

fn lcg(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed;
    (0..n).map(|_| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); ((s >> 33) as f64 / 2f64.powi(31)) - 1.0 }).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut rest = 0.0;
    for i in chunks * 4..n { rest += a[i] * b[i]; }
    (s0 + s1) + (s2 + s3) + rest
}

fn main() {
    let (m, k, n) = (32usize, 72usize, 48usize);
    let dout = lcg(m * n, 1);
    let a = lcg(m * k, 2);
    let b = lcg(k * n, 3);
    let iters = 20000;

    // dA via per-entry dot (current impl)
    let mut da = vec![0.0; m * k];
    let t0 = Instant::now();
    for _ in 0..iters {
        da.fill(0.0);
        for i in 0..m {
            let drow = &dout[i * n..(i + 1) * n];
            let darow = &mut da[i * k..(i + 1) * k];
            for kk in 0..k {
                darow[kk] += dot(drow, &b[kk * n..(kk + 1) * n]);
            }
        }
    }
    println!("dA dot-form: {:.1} us ({:.2} Gmadd/s)", t0.elapsed().as_secs_f64()*1e6/iters as f64, (m*k*n) as f64 * iters as f64 / t0.elapsed().as_secs_f64() / 1e9);

    // dA via transpose + axpy
    let mut bt = vec![0.0; n * k];
    let t0 = Instant::now();
    for _ in 0..iters {
        for kk in 0..k { for j in 0..n { bt[j * k + kk] = b[kk * n + j]; } }
        da.fill(0.0);
        for i in 0..m {
            let drow = &dout[i * n..(i + 1) * n];
            let darow = &mut da[i * k..(i + 1) * k];
            for (j, &d) in drow.iter().enumerate() {
                if d == 0.0 { continue; }
                let btrow = &bt[j * k..(j + 1) * k];
                for kk in 0..k { darow[kk] += d * btrow[kk]; }
            }
        }
    }
    println!("dA transpose+axpy: {:.1} us", t0.elapsed().as_secs_f64()*1e6/iters as f64);

    // dB axpy with zero-skip (current impl)
    let mut db = vec![0.0; k * n];
    let t0 = Instant::now();
    for _ in 0..iters {
        db.fill(0.0);
        for i in 0..m {
            let drow = &dout[i * n..(i + 1) * n];
            let arow = &a[i * k..(i + 1) * k];
            for (kk, &aik) in arow.iter().enumerate() {
                if aik == 0.0 { continue; }
                let dbrow = &mut db[kk * n..(kk + 1) * n];
                for j in 0..n { dbrow[j] += aik * drow[j]; }
            }
        }
    }
    println!("dB axpy: {:.1} us ({:.2} Gmadd/s)", t0.elapsed().as_secs_f64()*1e6/iters as f64, (m*k*n) as f64 * iters as f64 / t0.elapsed().as_secs_f64() / 1e9);
}
