//! Reverse-mode differentiation over an operation tape.
//!
//! Forward calls record each operation (operands, output, enough geometry to
//! replay) into a linear tape; `backward` walks the records in reverse and
//! accumulates vector-Jacobian products. Records are appended in dependency
//! order, so every operand of record i was produced by a record j < i or is
//! a leaf.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

pub type BufId = usize;

/// Geometry of a valid (no padding) 2-d convolution.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub ho: usize,
    pub wo: usize,
}

#[derive(Debug, Clone)]
enum Op {
    MatMul {
        a: BufId,
        b: BufId,
        out: BufId,
        m: usize,
        k: usize,
        n: usize,
    },
    BiasAdd {
        x: BufId,
        bias: BufId,
        out: BufId,
        rows: usize,
        cols: usize,
    },
    Conv2d {
        input: BufId,
        kernel: BufId,
        bias: BufId,
        out: BufId,
        geom: ConvGeom,
        sparse: bool,
    },
    Relu {
        x: BufId,
        out: BufId,
    },
    CRelu {
        x: BufId,
        out: BufId,
        outer: usize,
        block: usize,
        inner: usize,
    },
    Reshape {
        x: BufId,
        out: BufId,
    },
    Scale {
        x: BufId,
        out: BufId,
        c: f64,
    },
    DuelingCombine {
        value: BufId,
        adv: BufId,
        out: BufId,
        batch: usize,
        actions: usize,
    },
    Gather {
        q: BufId,
        out: BufId,
        actions: Vec<usize>,
        cols: usize,
    },
    /// Mean over elements of weight * loss(pred - target); target and
    /// weights are constants, no gradient flows into them.
    Loss {
        pred: BufId,
        out: BufId,
        target: Vec<f64>,
        weight: Vec<f64>,
        kind: LossKind,
    },
}

#[derive(Debug, Clone, Copy)]
enum LossKind {
    Huber { delta: f64 },
    Squared,
}

/// Records forward operations and replays them in reverse for gradients.
pub struct Tape {
    bufs: Vec<Tensor>,
    requires_grad: Vec<bool>,
    ops: Vec<Op>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            bufs: Vec::with_capacity(32),
            requires_grad: Vec::with_capacity(32),
            ops: Vec::with_capacity(32),
            grads: Vec::with_capacity(32),
        }
    }

    /// Register a constant leaf (inputs, stop-gradient values).
    pub fn leaf(&mut self, t: Tensor) -> BufId {
        self.push(t, false)
    }

    /// Register a differentiable leaf (network parameters).
    pub fn param(&mut self, t: Tensor) -> BufId {
        self.push(t, true)
    }

    fn push(&mut self, t: Tensor, requires_grad: bool) -> BufId {
        let id = self.bufs.len();
        self.bufs.push(t);
        self.requires_grad.push(requires_grad);
        self.grads.push(None);
        id
    }

    pub fn value(&self, id: BufId) -> &Tensor {
        &self.bufs[id]
    }

    /// Gradient of the last `backward` loss w.r.t. buffer `id`, if any flowed.
    pub fn grad(&self, id: BufId) -> Option<&[f64]> {
        self.grads[id].as_deref()
    }

    /// Gradient as a tensor; buffers the loss never reached get exact zeros.
    pub fn grad_tensor(&self, id: BufId) -> Tensor {
        match &self.grads[id] {
            Some(g) => Tensor {
                shape: self.bufs[id].shape.clone(),
                data: g.clone(),
            },
            None => Tensor::zeros(&self.bufs[id].shape),
        }
    }

    // ── Recorded operations ─────────────────────────────────────────────

    /// out = a @ b for a: [m, k], b: [k, n].
    pub fn matmul(&mut self, a: BufId, b: BufId) -> Result<BufId> {
        let (sa, sb) = (&self.bufs[a].shape, &self.bufs[b].shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(
                "matmul",
                "[m,k] x [k,n]",
                format!("{sa:?} x {sb:?}"),
            ));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_kernel(&self.bufs[a].data, &self.bufs[b].data, &mut out, m, k, n);
        let req = self.requires_grad[a] || self.requires_grad[b];
        let id = self.push(Tensor { shape: vec![m, n], data: out }, req);
        self.ops.push(Op::MatMul { a, b, out: id, m, k, n });
        Ok(id)
    }

    /// out = x + bias broadcast over rows, for x: [rows, cols], bias: [cols].
    pub fn bias_add(&mut self, x: BufId, bias: BufId) -> Result<BufId> {
        let (sx, sb) = (&self.bufs[x].shape, &self.bufs[bias].shape);
        if sx.len() != 2 || sb.len() != 1 || sb[0] != sx[1] {
            return Err(Error::shape(
                "bias_add",
                "[rows,cols] + [cols]",
                format!("{sx:?} + {sb:?}"),
            ));
        }
        let (rows, cols) = (sx[0], sx[1]);
        let xb = &self.bufs[x].data;
        let bb = &self.bufs[bias].data;
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let src = &xb[r * cols..(r + 1) * cols];
            let dst = &mut out[r * cols..(r + 1) * cols];
            for c in 0..cols {
                dst[c] = src[c] + bb[c];
            }
        }
        let req = self.requires_grad[x] || self.requires_grad[bias];
        let id = self.push(Tensor { shape: vec![rows, cols], data: out }, req);
        self.ops.push(Op::BiasAdd { x, bias, out: id, rows, cols });
        Ok(id)
    }

    /// Valid 2-d convolution: input [B,Cin,H,W], kernel [Cout,Cin,k,k],
    /// bias [Cout], with the given stride.
    pub fn conv2d(&mut self, input: BufId, kernel: BufId, bias: BufId, stride: usize) -> Result<BufId> {
        let si = self.bufs[input].shape.clone();
        let sk = self.bufs[kernel].shape.clone();
        let sb = self.bufs[bias].shape.clone();
        if si.len() != 4 || sk.len() != 4 || sb.len() != 1 {
            return Err(Error::shape(
                "conv2d",
                "input [B,Cin,H,W], kernel [Cout,Cin,k,k], bias [Cout]",
                format!("{si:?}, {sk:?}, {sb:?}"),
            ));
        }
        let (batch, cin, h, w) = (si[0], si[1], si[2], si[3]);
        let (cout, kcin, k, k2) = (sk[0], sk[1], sk[2], sk[3]);
        if kcin != cin || k != k2 || sb[0] != cout {
            return Err(Error::shape(
                "conv2d",
                format!("kernel [Cout,{cin},k,k], bias [Cout]"),
                format!("{sk:?}, {sb:?}"),
            ));
        }
        if stride == 0 || h < k || w < k {
            return Err(Error::usage(format!(
                "conv2d: kernel {k}x{k} stride {stride} does not fit input {h}x{w}"
            )));
        }
        let ho = (h - k) / stride + 1;
        let wo = (w - k) / stride + 1;
        let geom = ConvGeom { batch, cin, h, w, cout, k, stride, ho, wo };

        let in_data = &self.bufs[input].data;
        let sparse = conv_use_sparse(in_data);
        let mut out = vec![0.0; batch * cout * ho * wo];
        conv2d_forward(
            in_data,
            &self.bufs[kernel].data,
            &self.bufs[bias].data,
            &mut out,
            &geom,
            sparse,
        );
        let req = self.requires_grad[input] || self.requires_grad[kernel] || self.requires_grad[bias];
        let id = self.push(
            Tensor { shape: vec![batch, cout, ho, wo], data: out },
            req,
        );
        self.ops.push(Op::Conv2d { input, kernel, bias, out: id, geom, sparse });
        Ok(id)
    }

    /// Elementwise max(x, 0); the gradient passes where x > 0 and is exactly
    /// zero where x <= 0.
    pub fn relu(&mut self, x: BufId) -> BufId {
        let t = &self.bufs[x];
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        };
        let req = self.requires_grad[x];
        let id = self.push(out, req);
        self.ops.push(Op::Relu { x, out: id });
        id
    }

    /// Concatenation of x with its negation along `axis`, then ReLU; the
    /// positive half comes first and the axis extent doubles.
    pub fn crelu(&mut self, x: BufId, axis: usize) -> Result<BufId> {
        let t = &self.bufs[x];
        if axis >= t.shape.len() {
            return Err(Error::usage(format!(
                "crelu axis {axis} out of range for shape {:?}",
                t.shape
            )));
        }
        let outer: usize = t.shape[..axis].iter().product();
        let block = t.shape[axis];
        let inner: usize = t.shape[axis + 1..].iter().product();
        let out = super::tensor::crelu(t, axis)?;
        let req = self.requires_grad[x];
        let id = self.push(out, req);
        self.ops.push(Op::CRelu { x, out: id, outer, block, inner });
        Ok(id)
    }

    pub fn reshape(&mut self, x: BufId, shape: Vec<usize>) -> Result<BufId> {
        let t = &self.bufs[x];
        if shape.iter().product::<usize>() != t.len() {
            return Err(Error::shape(
                "reshape",
                format!("{} elements", t.len()),
                format!("{shape:?}"),
            ));
        }
        let out = Tensor { shape, data: t.data.clone() };
        let req = self.requires_grad[x];
        let id = self.push(out, req);
        self.ops.push(Op::Reshape { x, out: id });
        Ok(id)
    }

    pub fn scale(&mut self, x: BufId, c: f64) -> BufId {
        let t = &self.bufs[x];
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|v| c * v).collect(),
        };
        let req = self.requires_grad[x];
        let id = self.push(out, req);
        self.ops.push(Op::Scale { x, out: id, c });
        id
    }

    /// Dueling head: q[b,a] = v[b] + d[b,a] - mean_a d[b,a], for
    /// value [B,1] and advantage [B,A].
    pub fn dueling_combine(&mut self, value: BufId, adv: BufId) -> Result<BufId> {
        let (sv, sa) = (&self.bufs[value].shape, &self.bufs[adv].shape);
        if sv.len() != 2 || sv[1] != 1 || sa.len() != 2 || sa[0] != sv[0] {
            return Err(Error::shape(
                "dueling_combine",
                "value [B,1], advantage [B,A]",
                format!("{sv:?}, {sa:?}"),
            ));
        }
        let (batch, actions) = (sa[0], sa[1]);
        let vd = &self.bufs[value].data;
        let ad = &self.bufs[adv].data;
        let mut out = vec![0.0; batch * actions];
        for b in 0..batch {
            let row = &ad[b * actions..(b + 1) * actions];
            let mean = row.iter().sum::<f64>() / actions as f64;
            let dst = &mut out[b * actions..(b + 1) * actions];
            for a in 0..actions {
                dst[a] = vd[b] + row[a] - mean;
            }
        }
        let req = self.requires_grad[value] || self.requires_grad[adv];
        let id = self.push(Tensor { shape: vec![batch, actions], data: out }, req);
        self.ops.push(Op::DuelingCombine { value, adv, out: id, batch, actions });
        Ok(id)
    }

    /// out[b] = q[b, actions[b]] for q: [B, A].
    pub fn gather(&mut self, q: BufId, actions: &[usize]) -> Result<BufId> {
        let sq = &self.bufs[q].shape;
        if sq.len() != 2 || sq[0] != actions.len() {
            return Err(Error::shape(
                "gather",
                format!("[{}, A]", actions.len()),
                format!("{sq:?}"),
            ));
        }
        let cols = sq[1];
        if let Some(bad) = actions.iter().find(|&&a| a >= cols) {
            return Err(Error::usage(format!(
                "gather: action {bad} out of range for {cols} actions"
            )));
        }
        let qd = &self.bufs[q].data;
        let out: Vec<f64> = actions.iter().enumerate().map(|(b, &a)| qd[b * cols + a]).collect();
        let req = self.requires_grad[q];
        let id = self.push(Tensor { shape: vec![actions.len()], data: out }, req);
        self.ops.push(Op::Gather { q, out: id, actions: actions.to_vec(), cols });
        Ok(id)
    }

    /// Importance-weighted Huber loss, mean over elements; the target is a
    /// constant. h(e) = e^2/2 for |e| <= delta, else delta(|e| - delta/2).
    pub fn huber_loss(&mut self, pred: BufId, target: &[f64], weight: &[f64], delta: f64) -> Result<BufId> {
        self.loss(pred, target, weight, LossKind::Huber { delta })
    }

    /// Importance-weighted squared-error loss, mean over elements of
    /// weight * e^2 / 2.
    pub fn squared_loss(&mut self, pred: BufId, target: &[f64], weight: &[f64]) -> Result<BufId> {
        self.loss(pred, target, weight, LossKind::Squared)
    }

    fn loss(&mut self, pred: BufId, target: &[f64], weight: &[f64], kind: LossKind) -> Result<BufId> {
        let n = self.bufs[pred].len();
        if target.len() != n || weight.len() != n {
            return Err(Error::shape(
                "loss",
                format!("target/weight of {n} elements"),
                format!("{}/{}", target.len(), weight.len()),
            ));
        }
        let pd = &self.bufs[pred].data;
        let mut total = 0.0;
        for i in 0..n {
            let e = pd[i] - target[i];
            let h = match kind {
                LossKind::Huber { delta } => {
                    if e.abs() <= delta {
                        0.5 * e * e
                    } else {
                        delta * (e.abs() - 0.5 * delta)
                    }
                }
                LossKind::Squared => 0.5 * e * e,
            };
            total += weight[i] * h;
        }
        let req = self.requires_grad[pred];
        let id = self.push(Tensor::scalar(total / n as f64), req);
        self.ops.push(Op::Loss {
            pred,
            out: id,
            target: target.to_vec(),
            weight: weight.to_vec(),
            kind,
        });
        Ok(id)
    }

    // ── Backward pass ───────────────────────────────────────────────────

    /// Propagate gradients from a scalar loss back to every reachable leaf.
    /// Clears any gradients from a previous call first.
    pub fn backward(&mut self, loss: BufId) -> Result<()> {
        if !self.bufs[loss].is_scalar() {
            return Err(Error::usage(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.bufs[loss].shape
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss] = Some(vec![1.0]);

        let Tape { bufs, requires_grad, ops, grads } = self;
        for op in ops.iter().rev() {
            backward_op(op, bufs, requires_grad, grads);
        }
        Ok(())
    }
}

fn ensure<'a>(grads: &'a mut [Option<Vec<f64>>], id: BufId, len: usize) -> &'a mut [f64] {
    if grads[id].is_none() {
        grads[id] = Some(vec![0.0; len]);
    }
    grads[id].as_mut().unwrap()
}

fn backward_op(op: &Op, bufs: &[Tensor], req: &[bool], grads: &mut [Option<Vec<f64>>]) {
    match op {
        Op::MatMul { a, b, out, m, k, n } => {
            let Some(dout) = grads[*out].clone() else { return };
            let (m, k, n) = (*m, *k, *n);
            if req[*a] {
                // dA = dOut @ B^T; transpose once so the inner loop runs
                // contiguous, and skip the zero entries a ReLU mask leaves
                // in dOut.
                let bd = &bufs[*b].data;
                let mut bt = vec![0.0; n * k];
                for kk in 0..k {
                    for j in 0..n {
                        bt[j * k + kk] = bd[kk * n + j];
                    }
                }
                let da = ensure(grads, *a, m * k);
                for i in 0..m {
                    let drow = &dout[i * n..(i + 1) * n];
                    let darow = &mut da[i * k..(i + 1) * k];
                    for (j, &d) in drow.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let btrow = &bt[j * k..(j + 1) * k];
                        for kk in 0..k {
                            darow[kk] += d * btrow[kk];
                        }
                    }
                }
            }
            if req[*b] {
                let ad = &bufs[*a].data;
                let db = ensure(grads, *b, k * n);
                for i in 0..m {
                    let drow = &dout[i * n..(i + 1) * n];
                    let arow = &ad[i * k..(i + 1) * k];
                    for (kk, &aik) in arow.iter().enumerate() {
                        if aik == 0.0 {
                            continue;
                        }
                        let dbrow = &mut db[kk * n..(kk + 1) * n];
                        for j in 0..n {
                            dbrow[j] += aik * drow[j];
                        }
                    }
                }
            }
        }
        Op::BiasAdd { x, bias, out, rows, cols } => {
            let Some(dout) = grads[*out].clone() else { return };
            if req[*x] {
                let dx = ensure(grads, *x, rows * cols);
                for (d, g) in dx.iter_mut().zip(dout.iter()) {
                    *d += g;
                }
            }
            if req[*bias] {
                let db = ensure(grads, *bias, *cols);
                for r in 0..*rows {
                    let drow = &dout[r * cols..(r + 1) * cols];
                    for c in 0..*cols {
                        db[c] += drow[c];
                    }
                }
            }
        }
        Op::Conv2d { input, kernel, bias, out, geom, sparse } => {
            let Some(dout) = grads[*out].clone() else { return };
            let g = geom;
            if req[*kernel] {
                let in_data = &bufs[*input].data;
                let dk = ensure(grads, *kernel, g.cout * g.cin * g.k * g.k);
                conv2d_backward_kernel(in_data, &dout, dk, g, *sparse);
            }
            if req[*bias] {
                let db = ensure(grads, *bias, g.cout);
                let plane = g.ho * g.wo;
                for b in 0..g.batch {
                    for co in 0..g.cout {
                        let base = (b * g.cout + co) * plane;
                        db[co] += dout[base..base + plane].iter().sum::<f64>();
                    }
                }
            }
            if req[*input] {
                let kd = &bufs[*kernel].data;
                let di = ensure(grads, *input, g.batch * g.cin * g.h * g.w);
                conv2d_backward_input(kd, &dout, di, g);
            }
        }
        Op::Relu { x, out } => {
            let Some(dout) = grads[*out].clone() else { return };
            if !req[*x] {
                return;
            }
            let xd = &bufs[*x].data;
            let dx = ensure(grads, *x, xd.len());
            for i in 0..xd.len() {
                if xd[i] > 0.0 {
                    dx[i] += dout[i];
                }
            }
        }
        Op::CRelu { x, out, outer, block, inner } => {
            let Some(dout) = grads[*out].clone() else { return };
            if !req[*x] {
                return;
            }
            let xd = &bufs[*x].data;
            let half = block * inner;
            let dx = ensure(grads, *x, xd.len());
            for o in 0..*outer {
                let src = o * half;
                let dst = o * 2 * half;
                for j in 0..half {
                    let v = xd[src + j];
                    if v > 0.0 {
                        dx[src + j] += dout[dst + j];
                    } else if v < 0.0 {
                        dx[src + j] -= dout[dst + half + j];
                    }
                }
            }
        }
        Op::Reshape { x, out } => {
            let Some(dout) = grads[*out].clone() else { return };
            if !req[*x] {
                return;
            }
            let dx = ensure(grads, *x, dout.len());
            for (d, g) in dx.iter_mut().zip(dout.iter()) {
                *d += g;
            }
        }
        Op::Scale { x, out, c } => {
            let Some(dout) = grads[*out].clone() else { return };
            if !req[*x] {
                return;
            }
            let dx = ensure(grads, *x, dout.len());
            for (d, g) in dx.iter_mut().zip(dout.iter()) {
                *d += c * g;
            }
        }
        Op::DuelingCombine { value, adv, out, batch, actions } => {
            let Some(dout) = grads[*out].clone() else { return };
            let a = *actions;
            if req[*value] {
                let dv = ensure(grads, *value, *batch);
                for b in 0..*batch {
                    dv[b] += dout[b * a..(b + 1) * a].iter().sum::<f64>();
                }
            }
            if req[*adv] {
                let da = ensure(grads, *adv, batch * a);
                for b in 0..*batch {
                    let drow = &dout[b * a..(b + 1) * a];
                    let mean = drow.iter().sum::<f64>() / a as f64;
                    let darow = &mut da[b * a..(b + 1) * a];
                    for j in 0..a {
                        darow[j] += drow[j] - mean;
                    }
                }
            }
        }
        Op::Gather { q, out, actions, cols } => {
            let Some(dout) = grads[*out].clone() else { return };
            if !req[*q] {
                return;
            }
            let dq = ensure(grads, *q, actions.len() * cols);
            for (b, &a) in actions.iter().enumerate() {
                dq[b * cols + a] += dout[b];
            }
        }
        Op::Loss { pred, out, target, weight, kind } => {
            let Some(dout) = grads[*out].clone() else { return };
            if !req[*pred] {
                return;
            }
            let seed = dout[0];
            let pd = &bufs[*pred].data;
            let n = pd.len();
            let dp = ensure(grads, *pred, n);
            let inv_n = 1.0 / n as f64;
            for i in 0..n {
                let e = pd[i] - target[i];
                let de = match kind {
                    LossKind::Huber { delta } => {
                        if e.abs() <= *delta {
                            e
                        } else {
                            delta * e.signum()
                        }
                    }
                    LossKind::Squared => e,
                };
                dp[i] += seed * weight[i] * de * inv_n;
            }
        }
    }
}

// ── Kernels ─────────────────────────────────────────────────────────────
// Shared by the tape ops and the no-tape inference path in `agent`, so the
// two routes produce bit-identical values.

/// Observation planes are mostly zeros; a gather-from-nonzeros pass is far
/// cheaper there, while dense activations use the direct loops.
pub(crate) fn conv_use_sparse(input: &[f64]) -> bool {
    let nnz = input.iter().filter(|v| **v != 0.0).count();
    nnz * 10 < input.len()
}

/// Dot product with four accumulators; fixed summation order.
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
    for i in chunks * 4..n {
        rest += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + rest
}

pub(crate) fn matmul_kernel(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
}

/// Patch matrix for the dense conv path: row (b, y, x) holds the receptive
/// field, column (ci, dy, dx).
fn im2col(input: &[f64], g: &ConvGeom, col: &mut [f64]) {
    let k2 = g.k * g.k;
    let ck2 = g.cin * k2;
    let plane_in = g.h * g.w;
    for b in 0..g.batch {
        for y in 0..g.ho {
            for x in 0..g.wo {
                let row = (((b * g.ho) + y) * g.wo + x) * ck2;
                for ci in 0..g.cin {
                    let base = (b * g.cin + ci) * plane_in + y * g.stride * g.w + x * g.stride;
                    for dy in 0..g.k {
                        let src = base + dy * g.w;
                        let dst = row + ci * k2 + dy * g.k;
                        col[dst..dst + g.k].copy_from_slice(&input[src..src + g.k]);
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(input: &[f64], kernel: &[f64], bias: &[f64], out: &mut [f64], g: &ConvGeom, sparse: bool) {
    let plane_out = g.ho * g.wo;
    for b in 0..g.batch {
        for co in 0..g.cout {
            let base = (b * g.cout + co) * plane_out;
            out[base..base + plane_out].fill(bias[co]);
        }
    }
    if sparse {
        conv2d_forward_sparse(input, kernel, out, g);
        return;
    }
    // Dense path: im2col then one matmul against the transposed kernel.
    let rows = g.batch * plane_out;
    let ck2 = g.cin * g.k * g.k;
    let mut col = vec![0.0; rows * ck2];
    im2col(input, g, &mut col);
    let mut kt = vec![0.0; ck2 * g.cout];
    for co in 0..g.cout {
        for c in 0..ck2 {
            kt[c * g.cout + co] = kernel[co * ck2 + c];
        }
    }
    let mut tmp = vec![0.0; rows * g.cout];
    matmul_kernel(&col, &kt, &mut tmp, rows, ck2, g.cout);
    for b in 0..g.batch {
        for co in 0..g.cout {
            let out_base = (b * g.cout + co) * plane_out;
            for p in 0..plane_out {
                out[out_base + p] += tmp[(b * plane_out + p) * g.cout + co];
            }
        }
    }
}

/// Forward pass driven by the nonzero input cells; bitwise different
/// accumulation order from the dense path but the same convolution.
fn conv2d_forward_sparse(input: &[f64], kernel: &[f64], out: &mut [f64], g: &ConvGeom) {
    let plane_in = g.h * g.w;
    let plane_out = g.ho * g.wo;
    for b in 0..g.batch {
        for ci in 0..g.cin {
            let in_base = (b * g.cin + ci) * plane_in;
            for iy in 0..g.h {
                for ix in 0..g.w {
                    let v = input[in_base + iy * g.w + ix];
                    if v == 0.0 {
                        continue;
                    }
                    for dy in 0..g.k.min(iy + 1) {
                        let yy = iy - dy;
                        if yy % g.stride != 0 {
                            continue;
                        }
                        let y = yy / g.stride;
                        if y >= g.ho {
                            continue;
                        }
                        for dx in 0..g.k.min(ix + 1) {
                            let xx = ix - dx;
                            if xx % g.stride != 0 {
                                continue;
                            }
                            let x = xx / g.stride;
                            if x >= g.wo {
                                continue;
                            }
                            for co in 0..g.cout {
                                let wgt = kernel[((co * g.cin + ci) * g.k + dy) * g.k + dx];
                                out[(b * g.cout + co) * plane_out + y * g.wo + x] += v * wgt;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv2d_backward_kernel(input: &[f64], dout: &[f64], dk: &mut [f64], g: &ConvGeom, sparse: bool) {
    let plane_in = g.h * g.w;
    let plane_out = g.ho * g.wo;
    if sparse {
        for b in 0..g.batch {
            for ci in 0..g.cin {
                let in_base = (b * g.cin + ci) * plane_in;
                for iy in 0..g.h {
                    for ix in 0..g.w {
                        let v = input[in_base + iy * g.w + ix];
                        if v == 0.0 {
                            continue;
                        }
                        for dy in 0..g.k.min(iy + 1) {
                            let yy = iy - dy;
                            if yy % g.stride != 0 {
                                continue;
                            }
                            let y = yy / g.stride;
                            if y >= g.ho {
                                continue;
                            }
                            for dx in 0..g.k.min(ix + 1) {
                                let xx = ix - dx;
                                if xx % g.stride != 0 {
                                    continue;
                                }
                                let x = xx / g.stride;
                                if x >= g.wo {
                                    continue;
                                }
                                for co in 0..g.cout {
                                    dk[((co * g.cin + ci) * g.k + dy) * g.k + dx] +=
                                        v * dout[(b * g.cout + co) * plane_out + y * g.wo + x];
                                }
                            }
                        }
                    }
                }
            }
        }
        return;
    }
    // Dense path: dK = dOut^T @ col, both via the matmul kernel.
    let rows = g.batch * plane_out;
    let ck2 = g.cin * g.k * g.k;
    let mut col = vec![0.0; rows * ck2];
    im2col(input, g, &mut col);
    let mut dout_t = vec![0.0; g.cout * rows];
    for b in 0..g.batch {
        for co in 0..g.cout {
            let base = (b * g.cout + co) * plane_out;
            for p in 0..plane_out {
                dout_t[co * rows + b * plane_out + p] = dout[base + p];
            }
        }
    }
    matmul_kernel(&dout_t, &col, dk, g.cout, rows, ck2);
}

fn conv2d_backward_input(kernel: &[f64], dout: &[f64], din: &mut [f64], g: &ConvGeom) {
    // dcol = dOut @ K, then scatter-add the patches back (col2im).
    let plane_in = g.h * g.w;
    let plane_out = g.ho * g.wo;
    let rows = g.batch * plane_out;
    let k2 = g.k * g.k;
    let ck2 = g.cin * k2;
    let mut dout_r = vec![0.0; rows * g.cout];
    for b in 0..g.batch {
        for co in 0..g.cout {
            let base = (b * g.cout + co) * plane_out;
            for p in 0..plane_out {
                dout_r[(b * plane_out + p) * g.cout + co] = dout[base + p];
            }
        }
    }
    let mut dcol = vec![0.0; rows * ck2];
    matmul_kernel(&dout_r, kernel, &mut dcol, rows, g.cout, ck2);
    for b in 0..g.batch {
        for y in 0..g.ho {
            for x in 0..g.wo {
                let row = (((b * g.ho) + y) * g.wo + x) * ck2;
                for ci in 0..g.cin {
                    let base = (b * g.cin + ci) * plane_in + y * g.stride * g.w + x * g.stride;
                    for dy in 0..g.k {
                        let src = row + ci * k2 + dy * g.k;
                        let dst = base + dy * g.w;
                        for dx in 0..g.k {
                            din[dst + dx] += dcol[src + dx];
                        }
                    }
                }
            }
        }
    }
}
