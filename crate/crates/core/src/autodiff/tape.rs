use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use super::tensor::Tensor;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Transpose(usize),
    SoftmaxRows(usize),
    Gelu(usize),
    Abs(usize),
    Sum(usize),
    RmsNorm { x: usize, gain: usize, inv: Vec<f64> },
    LayerNorm { x: usize, gain: usize, bias: usize, inv: Vec<f64> },
    Conv1d { x: usize, kernel: usize, bias: usize },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols { a: usize, start: usize },
    GatherRows { a: usize, rows: Vec<usize> },
    ScatterRows { a: usize, rows: Vec<usize> },
    QuatMul(usize, usize),
    QuatRotate(usize, usize),
    QuatNormalize(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Record of executed operations for reverse-mode differentiation.
///
/// Every operation appends a node; [`Tape::backward`] walks the nodes in
/// reverse order once. Tapes are single-threaded; build one per forward pass.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get(var.index).and_then(Option::as_ref)
    }

    /// Gradient of `var`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.index]),
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn require_2d(op: &'static str, a: &Tensor) -> Result<(usize, usize)> {
    match *a.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::shape(op, a.shape(), &[0, 0])),
    }
}

fn require_cols(op: &'static str, a: &Tensor, cols: usize) -> Result<usize> {
    let (r, c) = require_2d(op, a)?;
    if c != cols {
        return Err(Error::shape(op, a.shape(), &[r, cols]));
    }
    Ok(r)
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Autodiff(format!(
                "variable {} belongs to another tape (detached graph)",
                v.index
            )));
        }
        Ok(v.index)
    }

    fn node(&self, v: Var) -> Result<(usize, &Tensor)> {
        let i = self.check(v)?;
        Ok((i, &self.nodes[i].value))
    }

    fn grad_of(&self, inputs: &[usize]) -> bool {
        inputs.iter().any(|&i| self.nodes[i].needs_grad)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.check(v).expect("variable from this tape")].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let (ib, tb) = self.node(b)?;
        let (m, k) = require_2d("matmul", ta)?;
        let (k2, n) = require_2d("matmul", tb)?;
        if k != k2 {
            return Err(Error::shape("matmul", ta.shape(), tb.shape()));
        }
        let out = matmul_raw(ta.data(), tb.data(), m, k, n);
        let g = self.grad_of(&[ia, ib]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(ia, ib), g))
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let (ib, tb) = self.node(b)?;
        same_shape(name, ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let g = self.grad_of(&[ia, ib]);
        Ok(self.push(value, op(ia, ib), g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// Add a `[n]` vector to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let (ib, tb) = self.node(row)?;
        let (_, n) = require_2d("add_row", ta)?;
        if tb.shape() != [n] {
            return Err(Error::shape("add_row", ta.shape(), tb.shape()));
        }
        let mut value = ta.clone();
        for chunk in value.data_mut().chunks_exact_mut(n) {
            for (x, b) in chunk.iter_mut().zip(tb.data()) {
                *x += b;
            }
        }
        let g = self.grad_of(&[ia, ib]);
        Ok(self.push(value, Op::AddRow(ia, ib), g))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let data = ta.data().iter().map(|x| x * k).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let g = self.grad_of(&[ia]);
        Ok(self.push(value, Op::Scale(ia, k), g))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let (m, n) = require_2d("transpose", ta)?;
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                out[c * m + r] = ta.data()[r * n + c];
            }
        }
        let g = self.grad_of(&[ia]);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::Transpose(ia), g))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let (_, n) = require_2d("softmax_rows", ta)?;
        let mut value = ta.clone();
        for row in value.data_mut().chunks_exact_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        let g = self.grad_of(&[ia]);
        Ok(self.push(value, Op::SoftmaxRows(ia), g))
    }

    /// GELU in its exact form `x · Φ(x)`.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let data = ta.data().iter().map(|&x| x * std_normal_cdf(x)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let g = self.grad_of(&[ia]);
        Ok(self.push(value, Op::Gelu(ia), g))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let data = ta.data().iter().map(|x| x.abs()).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let g = self.grad_of(&[ia]);
        Ok(self.push(value, Op::Abs(ia), g))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let s = ta.data().iter().sum();
        let g = self.grad_of(&[ia]);
        Ok(self.push(Tensor::scalar(s), Op::Sum(ia), g))
    }

    /// `x / sqrt(mean(x²) + eps) · gain` over the last axis of a 2-D tensor.
    pub fn rms_norm(&mut self, x: Var, gain: Var, eps: f64) -> Result<Var> {
        let (ix, tx) = self.node(x)?;
        let (ig, tg) = self.node(gain)?;
        let (_, d) = require_2d("rms_norm", tx)?;
        if tg.shape() != [d] {
            return Err(Error::shape("rms_norm", tx.shape(), tg.shape()));
        }
        let mut value = tx.clone();
        let mut inv = Vec::with_capacity(tx.rows());
        for row in value.data_mut().chunks_exact_mut(d) {
            let ms = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
            let r = 1.0 / (ms + eps).sqrt();
            for (v, g) in row.iter_mut().zip(tg.data()) {
                *v *= r * g;
            }
            inv.push(r);
        }
        let g = self.grad_of(&[ix, ig]);
        Ok(self.push(value, Op::RmsNorm { x: ix, gain: ig, inv }, g))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (ix, tx) = self.node(x)?;
        let (ig, tg) = self.node(gain)?;
        let (ib, tb) = self.node(bias)?;
        let (_, d) = require_2d("layer_norm", tx)?;
        if tg.shape() != [d] || tb.shape() != [d] {
            return Err(Error::shape("layer_norm", tx.shape(), tg.shape()));
        }
        let mut value = tx.clone();
        let mut inv = Vec::with_capacity(tx.rows());
        for row in value.data_mut().chunks_exact_mut(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + eps).sqrt();
            for ((v, g), b) in row.iter_mut().zip(tg.data()).zip(tb.data()) {
                *v = (*v - mean) * r * g + b;
            }
            inv.push(r);
        }
        let g = self.grad_of(&[ix, ig, ib]);
        Ok(self.push(value, Op::LayerNorm { x: ix, gain: ig, bias: ib, inv }, g))
    }

    /// Same-length cross-correlation over rows: `x [L, c_in]`, `kernel [k, c_in, c_out]`,
    /// `bias [c_out]`, zero padding of `(k − 1) / 2` on both ends.
    pub fn conv1d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (ix, tx) = self.node(x)?;
        let (ik, tk) = self.node(kernel)?;
        let (ib, tb) = self.node(bias)?;
        let (len, cin) = require_2d("conv1d", tx)?;
        let &[k, kin, cout] = tk.shape() else {
            return Err(Error::shape("conv1d", tx.shape(), tk.shape()));
        };
        if k % 2 == 0 {
            return Err(Error::Config(format!("conv1d kernel size must be odd, got {k}")));
        }
        if kin != cin || tb.shape() != [cout] {
            return Err(Error::shape("conv1d", tx.shape(), tk.shape()));
        }
        let pad = (k - 1) / 2;
        let (xd, kd) = (tx.data(), tk.data());
        let mut out = Vec::with_capacity(len * cout);
        for _ in 0..len {
            out.extend_from_slice(tb.data());
        }
        for t in 0..len {
            for j in 0..k {
                let Some(s) = (t + j).checked_sub(pad).filter(|&s| s < len) else {
                    continue;
                };
                for i in 0..cin {
                    let xv = xd[s * cin + i];
                    if xv == 0.0 {
                        continue;
                    }
                    let krow = &kd[(j * cin + i) * cout..(j * cin + i + 1) * cout];
                    for (o, kv) in out[t * cout..(t + 1) * cout].iter_mut().zip(krow) {
                        *o += kv * xv;
                    }
                }
            }
        }
        let g = self.grad_of(&[ix, ik, ib]);
        Ok(self.push(
            Tensor::matrix(len, cout, out)?,
            Op::Conv1d { x: ix, kernel: ik, bias: ib },
            g,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let idx = parts.iter().map(|&p| self.check(p)).collect::<Result<Vec<_>>>()?;
        let first = self
            .nodes
            .get(*idx.first().ok_or_else(|| Error::Contract("concat of nothing".into()))?)
            .unwrap();
        let (rows, _) = require_2d("concat_cols", &first.value)?;
        let mut widths = Vec::with_capacity(idx.len());
        for &i in &idx {
            let t = &self.nodes[i].value;
            let (r, c) = require_2d("concat_cols", t)?;
            if r != rows {
                return Err(Error::shape("concat_cols", first.value.shape(), t.shape()));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&i, &w) in idx.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[i].value.data()[r * w..(r + 1) * w]);
            }
        }
        let g = self.grad_of(&idx);
        Ok(self.push(Tensor::matrix(rows, total, out)?, Op::ConcatCols(idx), g))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let idx = parts.iter().map(|&p| self.check(p)).collect::<Result<Vec<_>>>()?;
        let first = &self.nodes[*idx.first().ok_or_else(|| Error::Contract("concat of nothing".into()))?];
        let (_, cols) = require_2d("concat_rows", &first.value)?;
        let mut out = Vec::new();
        let mut rows = 0;
        for &i in &idx {
            let t = &self.nodes[i].value;
            let (r, c) = require_2d("concat_rows", t)?;
            if c != cols {
                return Err(Error::shape("concat_rows", self.nodes[idx[0]].value.shape(), t.shape()));
            }
            rows += r;
            out.extend_from_slice(t.data());
        }
        let g = self.grad_of(&idx);
        Ok(self.push(Tensor::matrix(rows, cols, out)?, Op::ConcatRows(idx), g))
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let (rows, cols) = require_2d("slice_cols", ta)?;
        if start + len > cols {
            return Err(Error::Index {
                op: "slice_cols",
                message: format!("columns {start}..{} of {cols}", start + len),
            });
        }
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&ta.data()[r * cols + start..r * cols + start + len]);
        }
        let g = self.grad_of(&[ia]);
        Ok(self.push(Tensor::matrix(rows, len, out)?, Op::SliceCols { a: ia, start }, g))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let (m, n) = require_2d("gather_rows", ta)?;
        if let Some(bad) = rows.iter().find(|&&r| r >= m) {
            return Err(Error::Index {
                op: "gather_rows",
                message: format!("row {bad} of {m}"),
            });
        }
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            out.extend_from_slice(ta.row(r));
        }
        let g = self.grad_of(&[ia]);
        Ok(self.push(
            Tensor::matrix(rows.len(), n, out)?,
            Op::GatherRows { a: ia, rows: rows.to_vec() },
            g,
        ))
    }

    /// Place row `i` of `a` at row `rows[i]` of a zero `[total, n]` tensor.
    pub fn scatter_rows(&mut self, a: Var, rows: &[usize], total: usize) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let (m, n) = require_2d("scatter_rows", ta)?;
        if m != rows.len() {
            return Err(Error::shape("scatter_rows", ta.shape(), &[rows.len(), n]));
        }
        let mut seen = vec![false; total];
        for &r in rows {
            if r >= total || std::mem::replace(&mut seen[r], true) {
                return Err(Error::Index {
                    op: "scatter_rows",
                    message: format!("row {r} is out of range or repeated (total {total})"),
                });
            }
        }
        let mut out = vec![0.0; total * n];
        for (i, &r) in rows.iter().enumerate() {
            out[r * n..(r + 1) * n].copy_from_slice(ta.row(i));
        }
        let g = self.grad_of(&[ia]);
        Ok(self.push(
            Tensor::matrix(total, n, out)?,
            Op::ScatterRows { a: ia, rows: rows.to_vec() },
            g,
        ))
    }

    /// Row-wise Hamilton product of `[n, 4]` quaternion arrays.
    pub fn quat_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ta) = self.node(a)?;
        let (ib, tb) = self.node(b)?;
        let n = require_cols("quat_mul", ta, 4)?;
        same_shape("quat_mul", ta, tb)?;
        let mut out = Vec::with_capacity(n * 4);
        for (p, q) in ta.data().chunks_exact(4).zip(tb.data().chunks_exact(4)) {
            out.extend_from_slice(&hamilton(p, q));
        }
        let g = self.grad_of(&[ia, ib]);
        Ok(self.push(Tensor::matrix(n, 4, out)?, Op::QuatMul(ia, ib), g))
    }

    /// Row-wise `v + 2w(u × v) + 2u × (u × v)` for `q = (w, u)`; the rotation
    /// `q v q⁻¹` when `q` is unit length.
    pub fn quat_rotate(&mut self, q: Var, v: Var) -> Result<Var> {
        let (iq, tq) = self.node(q)?;
        let (iv, tv) = self.node(v)?;
        let n = require_cols("quat_rotate", tq, 4)?;
        if require_cols("quat_rotate", tv, 3)? != n {
            return Err(Error::shape("quat_rotate", tq.shape(), tv.shape()));
        }
        let mut out = Vec::with_capacity(n * 3);
        for (q, v) in tq.data().chunks_exact(4).zip(tv.data().chunks_exact(3)) {
            out.extend_from_slice(&rotate_raw(q, v));
        }
        let g = self.grad_of(&[iq, iv]);
        Ok(self.push(Tensor::matrix(n, 3, out)?, Op::QuatRotate(iq, iv), g))
    }

    pub fn quat_normalize(&mut self, q: Var) -> Result<Var> {
        let (iq, tq) = self.node(q)?;
        let n = require_cols("quat_normalize", tq, 4)?;
        let mut out = Vec::with_capacity(n * 4);
        for q in tq.data().chunks_exact(4) {
            let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            out.extend(q.iter().map(|v| v / norm));
        }
        let g = self.grad_of(&[iq]);
        Ok(self.push(Tensor::matrix(n, 4, out)?, Op::QuatNormalize(iq), g))
    }

    /// Allow [`Tape::backward`] to run again.
    pub fn reset_backward(&mut self) {
        self.backward_done = false;
    }

    /// Propagate gradients from a scalar `loss` to every differentiable node.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let li = self.check(loss)?;
        if self.backward_done {
            return Err(Error::Autodiff(
                "backward already ran on this tape; call reset_backward first".into(),
            ));
        }
        if self.nodes[li].value.numel() != 1 {
            return Err(Error::Autodiff(format!(
                "loss must be a scalar, got shape {:?}",
                self.nodes[li].value.shape()
            )));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[li] = Some(Tensor::full(self.nodes[li].value.shape(), 1.0));
        for i in (0..=li).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        // Only nodes that influence the loss and require grad keep their slot.
        for (i, slot) in grads.iter_mut().enumerate() {
            if !self.nodes[i].needs_grad {
                *slot = None;
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
            shapes,
        })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        let mut acc = |target: usize, contribution: Tensor| {
            if !nodes[target].needs_grad {
                return;
            }
            match &mut grads[target] {
                Some(existing) => existing.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            }
        };
        let like = |t: usize, data: Vec<f64>| Tensor::new(nodes[t].value.shape().to_vec(), data).unwrap();
        let gd = g.data();
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[*a].value, &nodes[*b].value);
                let (m, k) = (ta.rows(), ta.cols());
                let n = tb.cols();
                if nodes[*a].needs_grad {
                    // dA = G Bᵀ
                    let mut da = vec![0.0; m * k];
                    for r in 0..m {
                        for c in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += gd[r * n + j] * tb.data()[c * n + j];
                            }
                            da[r * k + c] = s;
                        }
                    }
                    acc(*a, like(*a, da));
                }
                if nodes[*b].needs_grad {
                    // dB = Aᵀ G
                    let mut db = vec![0.0; k * n];
                    for r in 0..m {
                        for c in 0..k {
                            let av = ta.data()[r * k + c];
                            for j in 0..n {
                                db[c * n + j] += av * gd[r * n + j];
                            }
                        }
                    }
                    acc(*b, like(*b, db));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, like(*b, gd.iter().map(|v| -v).collect()));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&nodes[*a].value, &nodes[*b].value);
                acc(*a, like(*a, gd.iter().zip(tb.data()).map(|(g, y)| g * y).collect()));
                acc(*b, like(*b, gd.iter().zip(ta.data()).map(|(g, x)| g * x).collect()));
            }
            Op::AddRow(a, b) => {
                acc(*a, g.clone());
                let n = out.cols();
                let mut db = vec![0.0; n];
                for row in gd.chunks_exact(n) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                acc(*b, like(*b, db));
            }
            Op::Scale(a, k) => acc(*a, like(*a, gd.iter().map(|v| v * k).collect())),
            Op::Transpose(a) => {
                let (m, n) = (out.rows(), out.cols());
                let mut da = vec![0.0; m * n];
                for r in 0..m {
                    for c in 0..n {
                        da[c * m + r] = gd[r * n + c];
                    }
                }
                acc(*a, like(*a, da));
            }
            Op::SoftmaxRows(a) => {
                let n = out.cols();
                let mut da = vec![0.0; out.numel()];
                for ((dst, y), gr) in da.chunks_exact_mut(n).zip(out.data().chunks_exact(n)).zip(gd.chunks_exact(n)) {
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, yv), gv) in dst.iter_mut().zip(y).zip(gr) {
                        *d = yv * (gv - dot);
                    }
                }
                acc(*a, like(*a, da));
            }
            Op::Gelu(a) => {
                let x = nodes[*a].value.data();
                let da = x
                    .iter()
                    .zip(gd)
                    .map(|(&x, g)| g * (std_normal_cdf(x) + x * std_normal_pdf(x)))
                    .collect();
                acc(*a, like(*a, da));
            }
            Op::Abs(a) => {
                let x = nodes[*a].value.data();
                let da = x
                    .iter()
                    .zip(gd)
                    .map(|(&x, g)| if x > 0.0 { *g } else if x < 0.0 { -g } else { 0.0 })
                    .collect();
                acc(*a, like(*a, da));
            }
            Op::Sum(a) => {
                let s = gd[0];
                acc(*a, Tensor::full(nodes[*a].value.shape(), s));
            }
            Op::RmsNorm { x, gain, inv } => {
                let (tx, tg) = (&nodes[*x].value, &nodes[*gain].value);
                let d = tx.cols();
                let mut dx = vec![0.0; tx.numel()];
                let mut dg = vec![0.0; d];
                for (r, &inv) in inv.iter().enumerate() {
                    let xr = &tx.data()[r * d..(r + 1) * d];
                    let gr = &gd[r * d..(r + 1) * d];
                    let mut s = 0.0;
                    for c in 0..d {
                        s += tg.data()[c] * gr[c] * xr[c];
                        dg[c] += gr[c] * xr[c] * inv;
                    }
                    let k = inv * inv * inv * s / d as f64;
                    for c in 0..d {
                        dx[r * d + c] = inv * tg.data()[c] * gr[c] - xr[c] * k;
                    }
                }
                acc(*x, like(*x, dx));
                acc(*gain, like(*gain, dg));
            }
            Op::LayerNorm { x, gain, bias, inv } => {
                let (tx, tg) = (&nodes[*x].value, &nodes[*gain].value);
                let d = tx.cols();
                let mut dx = vec![0.0; tx.numel()];
                let mut dg = vec![0.0; d];
                let mut db = vec![0.0; d];
                for (r, &inv) in inv.iter().enumerate() {
                    let xr = &tx.data()[r * d..(r + 1) * d];
                    let gr = &gd[r * d..(r + 1) * d];
                    let mean = xr.iter().sum::<f64>() / d as f64;
                    let xhat: Vec<f64> = xr.iter().map(|v| (v - mean) * inv).collect();
                    let dxhat: Vec<f64> = (0..d).map(|c| gr[c] * tg.data()[c]).collect();
                    let m1 = dxhat.iter().sum::<f64>() / d as f64;
                    let m2 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for c in 0..d {
                        dx[r * d + c] = inv * (dxhat[c] - m1 - xhat[c] * m2);
                        dg[c] += gr[c] * xhat[c];
                        db[c] += gr[c];
                    }
                }
                acc(*x, like(*x, dx));
                acc(*gain, like(*gain, dg));
                acc(*bias, like(*bias, db));
            }
            Op::Conv1d { x, kernel, bias } => {
                let (tx, tk) = (&nodes[*x].value, &nodes[*kernel].value);
                let (len, cin) = (tx.rows(), tx.cols());
                let (k, cout) = (tk.shape()[0], tk.shape()[2]);
                let pad = (k - 1) / 2;
                let mut dx = vec![0.0; tx.numel()];
                let mut dk = vec![0.0; tk.numel()];
                let mut db = vec![0.0; cout];
                for t in 0..len {
                    let gr = &gd[t * cout..(t + 1) * cout];
                    for (d, v) in db.iter_mut().zip(gr) {
                        *d += v;
                    }
                    for j in 0..k {
                        let Some(s) = (t + j).checked_sub(pad).filter(|&s| s < len) else {
                            continue;
                        };
                        for i in 0..cin {
                            let base = (j * cin + i) * cout;
                            let krow = &tk.data()[base..base + cout];
                            let xv = tx.data()[s * cin + i];
                            let mut sx = 0.0;
                            for o in 0..cout {
                                sx += krow[o] * gr[o];
                                dk[base + o] += xv * gr[o];
                            }
                            dx[s * cin + i] += sx;
                        }
                    }
                }
                acc(*x, like(*x, dx));
                acc(*kernel, like(*kernel, dk));
                acc(*bias, like(*bias, db));
            }
            Op::ConcatCols(parts) => {
                let rows = out.rows();
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = nodes[p].value.cols();
                    let mut dp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        dp.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                    }
                    acc(p, like(p, dp));
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = nodes[p].value.numel();
                    acc(p, like(p, gd[offset..offset + n].to_vec()));
                    offset += n;
                }
            }
            Op::SliceCols { a, start } => {
                let ta = &nodes[*a].value;
                let (rows, cols) = (ta.rows(), ta.cols());
                let w = out.cols();
                let mut da = vec![0.0; rows * cols];
                for r in 0..rows {
                    da[r * cols + start..r * cols + start + w].copy_from_slice(&gd[r * w..(r + 1) * w]);
                }
                acc(*a, like(*a, da));
            }
            Op::GatherRows { a, rows } => {
                let n = out.cols();
                let mut da = vec![0.0; nodes[*a].value.numel()];
                for (i, &r) in rows.iter().enumerate() {
                    for c in 0..n {
                        da[r * n + c] += gd[i * n + c];
                    }
                }
                acc(*a, like(*a, da));
            }
            Op::ScatterRows { a, rows } => {
                let n = out.cols();
                let mut da = Vec::with_capacity(rows.len() * n);
                for &r in rows {
                    da.extend_from_slice(&gd[r * n..(r + 1) * n]);
                }
                acc(*a, like(*a, da));
            }
            Op::QuatMul(a, b) => {
                let (ta, tb) = (&nodes[*a].value, &nodes[*b].value);
                let mut da = Vec::with_capacity(ta.numel());
                let mut db = Vec::with_capacity(tb.numel());
                for ((p, q), g) in ta.data().chunks_exact(4).zip(tb.data().chunks_exact(4)).zip(gd.chunks_exact(4)) {
                    let (a, b) = hamilton_vjp(p, q, g);
                    da.extend_from_slice(&a);
                    db.extend_from_slice(&b);
                }
                acc(*a, like(*a, da));
                acc(*b, like(*b, db));
            }
            Op::QuatRotate(q, v) => {
                let (tq, tv) = (&nodes[*q].value, &nodes[*v].value);
                let mut dq = Vec::with_capacity(tq.numel());
                let mut dv = Vec::with_capacity(tv.numel());
                for ((q, v), g) in tq.data().chunks_exact(4).zip(tv.data().chunks_exact(3)).zip(gd.chunks_exact(3)) {
                    let (a, b) = rotate_vjp(q, v, g);
                    dq.extend_from_slice(&a);
                    dv.extend_from_slice(&b);
                }
                acc(*q, like(*q, dq));
                acc(*v, like(*v, dv));
            }
            Op::QuatNormalize(q) => {
                let tq = &nodes[*q].value;
                let mut dq = Vec::with_capacity(tq.numel());
                for ((raw, y), g) in tq.data().chunks_exact(4).zip(out.data().chunks_exact(4)).zip(gd.chunks_exact(4)) {
                    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                    dq.extend((0..4).map(|c| (g[c] - y[c] * dot) / norm));
                }
                acc(*q, like(*q, dq));
            }
        }
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let orow = &mut out[r * n..(r + 1) * n];
        for c in 0..k {
            let av = a[r * k + c];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in orow.iter_mut().zip(&b[c * n..(c + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

fn hamilton(a: &[f64], b: &[f64]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn hamilton_vjp(a: &[f64], b: &[f64], g: &[f64]) -> ([f64; 4], [f64; 4]) {
    let da = [
        g[0] * b[0] + g[1] * b[1] + g[2] * b[2] + g[3] * b[3],
        -g[0] * b[1] + g[1] * b[0] - g[2] * b[3] + g[3] * b[2],
        -g[0] * b[2] + g[1] * b[3] + g[2] * b[0] - g[3] * b[1],
        -g[0] * b[3] - g[1] * b[2] + g[2] * b[1] + g[3] * b[0],
    ];
    let db = [
        g[0] * a[0] + g[1] * a[1] + g[2] * a[2] + g[3] * a[3],
        -g[0] * a[1] + g[1] * a[0] + g[2] * a[3] - g[3] * a[2],
        -g[0] * a[2] - g[1] * a[3] + g[2] * a[0] + g[3] * a[1],
        -g[0] * a[3] + g[1] * a[2] - g[2] * a[1] + g[3] * a[0],
    ];
    (da, db)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn rotate_raw(q: &[f64], v: &[f64]) -> [f64; 3] {
    let u = [q[1], q[2], q[3]];
    let v = [v[0], v[1], v[2]];
    let c = cross(u, v);
    let t = [2.0 * c[0], 2.0 * c[1], 2.0 * c[2]];
    let ut = cross(u, t);
    [
        v[0] + q[0] * t[0] + ut[0],
        v[1] + q[0] * t[1] + ut[1],
        v[2] + q[0] * t[2] + ut[2],
    ]
}

// out = v + w t + u × t with t = 2 (u × v).
fn rotate_vjp(q: &[f64], v: &[f64], g: &[f64]) -> ([f64; 4], [f64; 3]) {
    let w = q[0];
    let u = [q[1], q[2], q[3]];
    let v = [v[0], v[1], v[2]];
    let g = [g[0], g[1], g[2]];
    let c = cross(u, v);
    let t = [2.0 * c[0], 2.0 * c[1], 2.0 * c[2]];
    let dw = g[0] * t[0] + g[1] * t[1] + g[2] * t[2];
    // (u × t)·g = u·(t × g) = t·(g × u)
    let mut du = cross(t, g);
    let gu = cross(g, u);
    let dt = [w * g[0] + gu[0], w * g[1] + gu[1], w * g[2] + gu[2]];
    // t = 2 (u × v): (u × v)·a = u·(v × a) = v·(a × u)
    let vd = cross(v, dt);
    let du2 = cross(dt, u);
    for i in 0..3 {
        du[i] += 2.0 * vd[i];
    }
    let dv = [g[0] + 2.0 * du2[0], g[1] + 2.0 * du2[1], g[2] + 2.0 * du2[2]];
    ([dw, du[0], du[1], du[2]], dv)
}
