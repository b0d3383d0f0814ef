use std::sync::Arc;

use super::sparse::CsrMatrix;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable operation kinds with a uniform dispatcher ([`Graph::apply`]).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Hadamard,
    Scale(f64),
    ReduceSumAxis(usize),
    Concat(usize),
    Tanh,
    Relu,
}

impl OpKind {
    pub const ALL_NAMES: [&'static str; 8] = [
        "matmul",
        "add",
        "hadamard",
        "scale",
        "reduce_sum_axis",
        "concat",
        "tanh",
        "relu",
    ];
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Hadamard(Var, Var),
    HadamardRow(Var, Var),
    Scale(Var, f64),
    SumAxis(Var, usize),
    SumAll(Var),
    Concat(Vec<Var>, usize),
    Tanh(Var),
    Relu(Var),
    Reshape(Var),
    SpMM(Arc<CsrMatrix>, Var),
    L1Loss(Var, Vec<f64>),
    SoftmaxXent {
        logits: Var,
        rows: Vec<usize>,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Hadamard(..) => "hadamard",
            Op::HadamardRow(..) => "hadamard_row",
            Op::Scale(..) => "scale",
            Op::SumAxis(..) => "reduce_sum_axis",
            Op::SumAll(..) => "sum",
            Op::Concat(..) => "concat",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Reshape(..) => "reshape",
            Op::SpMM(..) => "spmm",
            Op::L1Loss(..) => "l1_loss",
            Op::SoftmaxXent { .. } => "softmax_cross_entropy",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, so every input precedes its consumer
/// and the reverse of the node list is a valid reverse topological order.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// `c = beta·c + a·b` for row-major operands, with explicit strides so that
/// transposed views need no copy.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the slices cover every index reachable through the given
    // dimensions and strides (checked above), and `c` does not alias `a`/`b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn row_width(op: &'static str, matrix: &[usize], row: &[usize]) -> Result<usize> {
    if matrix.len() != 2 {
        return Err(Error::dim(op, matrix, row));
    }
    let cols = matrix[1];
    let ok = match row.len() {
        1 => row[0] == cols,
        2 => row[0] == 1 && row[1] == cols,
        _ => false,
    };
    if ok {
        Ok(cols)
    } else {
        Err(Error::dim(op, matrix, row))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Names of the operations in recording order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.name()).collect()
    }

    /// Input ids of node `v`; always smaller than `v`'s own id.
    pub fn inputs(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::AddRow(a, b)
            | Op::Hadamard(a, b)
            | Op::HadamardRow(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::SumAxis(a, _)
            | Op::SumAll(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Reshape(a)
            | Op::SpMM(_, a)
            | Op::L1Loss(a, _) => vec![*a],
            Op::Concat(vs, _) => vs.clone(),
            Op::SoftmaxXent { logits, .. } => vec![*logits],
        }
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copies the node value out as a fresh tensor without gradient.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Adds the gradient held for `v` into `tensor.grad`.
    pub fn accumulate_into(&self, v: Var, tensor: &mut Tensor) -> Result<()> {
        match self.grad(v) {
            Some(g) => tensor.accumulate_grad(g),
            None => Ok(()),
        }
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> Result<Var> {
        debug_assert_eq!(numel(&shape), value.len());
        if value.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { op: op.name() });
        }
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Index {
                what: "graph node",
                index: v.0,
                len: self.nodes.len(),
            })
        }
    }

    /// Leaf bound to a parameter; tracks gradients iff `t` does.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, t.shape().to_vec(), t.data().to_vec(), t.requires_grad())
            .expect("tensor data is finite")
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(Op::Leaf, shape, t.into_data(), false)
            .expect("tensor data is finite")
    }

    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let want = match kind {
            OpKind::MatMul | OpKind::Add | OpKind::Hadamard => 2,
            OpKind::Concat(_) => inputs.len().max(1),
            _ => 1,
        };
        if inputs.len() != want {
            return Err(Error::Contract(format!(
                "{kind:?} takes {want} inputs, got {}",
                inputs.len()
            )));
        }
        match kind {
            OpKind::MatMul => self.matmul(inputs[0], inputs[1]),
            OpKind::Add => self.add(inputs[0], inputs[1]),
            OpKind::Hadamard => self.hadamard(inputs[0], inputs[1]),
            OpKind::Scale(s) => self.scale(inputs[0], s),
            OpKind::ReduceSumAxis(axis) => self.sum_axis(inputs[0], axis),
            OpKind::Concat(axis) => self.concat(inputs, axis),
            OpKind::Tanh => self.tanh(inputs[0]),
            OpKind::Relu => self.relu(inputs[0]),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a),
            (k as isize, 1),
            self.value(b),
            (n as isize, 1),
            0.0,
            &mut out,
        );
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(Op::MatMul(a, b), vec![m, n], out, rg)
    }

    fn zip_same(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op.name(), self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(op, shape, out, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(Op::Hadamard(a, b), a, b, |x, y| x * y)
    }

    fn zip_row(&mut self, op: Op, a: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.check(a)?;
        self.check(row)?;
        let cols = row_width(op.name(), self.shape(a), self.shape(row))?;
        let r = self.value(row);
        let out = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, r[i % cols]))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a) || self.requires_grad(row);
        self.push(op, shape, out, rg)
    }

    /// Adds a row vector to every row of a matrix (affine bias).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.zip_row(Op::AddRow(a, row), a, row, |x, y| x + y)
    }

    /// Multiplies every row of a matrix elementwise by a row vector.
    pub fn hadamard_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.zip_row(Op::HadamardRow(a, row), a, row, |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).iter().map(|x| x * s).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a);
        self.push(Op::Scale(a, s), shape, out, rg)
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check(a)?;
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim("reduce_sum_axis", &shape, &[axis]));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let src = self.value(a);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let base = (o * len + j) * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        let mut new_shape = shape;
        new_shape.remove(axis);
        let rg = self.requires_grad(a);
        self.push(Op::SumAxis(a, axis), new_shape, out, rg)
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let total = self.value(a).iter().sum();
        let rg = self.requires_grad(a);
        self.push(Op::SumAll(a), vec![], vec![total], rg)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract("concat of zero tensors".into()));
        };
        for &p in parts {
            self.check(p)?;
        }
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim("concat", &base, &[axis]));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::dim("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis];
                let chunk = len * inner;
                out.extend_from_slice(&self.value(p)[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        self.push(Op::Concat(parts.to_vec(), axis), shape, out, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a);
        self.push(Op::Tanh(a), shape, out, rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a);
        self.push(Op::Relu(a), shape, out, rg)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        self.check(a)?;
        if numel(&shape) != self.value(a).len() {
            return Err(Error::dim("reshape", self.shape(a), &shape));
        }
        let out = self.value(a).to_vec();
        let rg = self.requires_grad(a);
        self.push(Op::Reshape(a), shape, out, rg)
    }

    /// Constant sparse matrix times a dense matrix.
    pub fn spmm(&mut self, sparse: Arc<CsrMatrix>, dense: Var) -> Result<Var> {
        self.check(dense)?;
        let s = self.shape(dense);
        if s.len() != 2 || s[0] != sparse.num_cols() {
            return Err(Error::dim("spmm", &[sparse.num_rows(), sparse.num_cols()], s));
        }
        let width = s[1];
        let out = sparse.mul_dense(self.value(dense), width);
        let rg = self.requires_grad(dense);
        let shape = vec![sparse.num_rows(), width];
        self.push(Op::SpMM(sparse, dense), shape, out, rg)
    }

    /// Mean absolute deviation between `pred` and a constant target of the
    /// same element count.
    pub fn l1_loss(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        self.check(pred)?;
        let p = self.value(pred);
        if p.len() != target.len() || p.is_empty() {
            return Err(Error::dim("l1_loss", self.shape(pred), &[target.len()]));
        }
        let loss = p.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64;
        let rg = self.requires_grad(pred);
        self.push(Op::L1Loss(pred, target.to_vec()), vec![], vec![loss], rg)
    }

    /// Mean softmax cross-entropy over the selected `rows` of a logit matrix.
    pub fn softmax_cross_entropy(&mut self, logits: Var, rows: &[usize], labels: &[usize]) -> Result<Var> {
        self.check(logits)?;
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || rows.len() != labels.len() || rows.is_empty() {
            return Err(Error::dim("softmax_cross_entropy", &s, &[rows.len(), labels.len()]));
        }
        let (n, c) = (s[0], s[1]);
        let z = self.value(logits);
        let mut probs = Vec::with_capacity(rows.len() * c);
        let mut loss = 0.0;
        for (&r, &y) in rows.iter().zip(labels) {
            if r >= n {
                return Err(Error::Index { what: "logit row", index: r, len: n });
            }
            if y >= c {
                return Err(Error::Index { what: "class", index: y, len: c });
            }
            let row = &z[r * c..(r + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_denom = denom.ln();
            loss += log_denom - (row[y] - max);
            probs.extend(row.iter().map(|v| (v - max).exp() / denom));
        }
        loss /= rows.len() as f64;
        let rg = self.requires_grad(logits);
        let op = Op::SoftmaxXent {
            logits,
            rows: rows.to_vec(),
            labels: labels.to_vec(),
            probs,
        };
        self.push(op, vec![], vec![loss], rg)
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Node gradients from any earlier call are discarded first; gradients
    /// are summed over every use of a node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            self.propagate(idx, &g);
            self.nodes[idx].grad = Some(g);
        }
        Ok(())
    }

    fn send(&mut self, to: Var, delta: Vec<f64>) {
        let node = &mut self.nodes[to.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => g.iter_mut().zip(&delta).for_each(|(a, b)| *a += b),
            None => node.grad = Some(delta),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&mut self, idx: usize, g: &[f64]) {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                if self.wants(a) {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g, (n as isize, 1), self.value(b), (1, n as isize), 0.0, &mut da);
                    self.send(a, da);
                }
                if self.wants(b) {
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, self.value(a), (1, k as isize), g, (n as isize, 1), 0.0, &mut db);
                    self.send(b, db);
                }
            }
            Op::Add(a, b) => {
                if self.wants(a) {
                    self.send(a, g.to_vec());
                }
                if self.wants(b) {
                    self.send(b, g.to_vec());
                }
            }
            Op::AddRow(a, row) => {
                if self.wants(a) {
                    self.send(a, g.to_vec());
                }
                if self.wants(row) {
                    let cols = self.value(row).len();
                    let mut dr = vec![0.0; cols];
                    for (i, x) in g.iter().enumerate() {
                        dr[i % cols] += x;
                    }
                    self.send(row, dr);
                }
            }
            Op::Hadamard(a, b) => {
                if self.wants(a) {
                    let da = g.iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
                    self.send(a, da);
                }
                if self.wants(b) {
                    let db = g.iter().zip(self.value(a)).map(|(x, y)| x * y).collect();
                    self.send(b, db);
                }
            }
            Op::HadamardRow(a, row) => {
                let cols = self.value(row).len();
                if self.wants(a) {
                    let r = self.value(row);
                    let da = g.iter().enumerate().map(|(i, x)| x * r[i % cols]).collect();
                    self.send(a, da);
                }
                if self.wants(row) {
                    let mut dr = vec![0.0; cols];
                    for (i, (x, y)) in g.iter().zip(self.value(a)).enumerate() {
                        dr[i % cols] += x * y;
                    }
                    self.send(row, dr);
                }
            }
            Op::Scale(a, s) => {
                let da = g.iter().map(|x| x * s).collect();
                self.send(a, da);
            }
            Op::SumAxis(a, axis) => {
                let (outer, len, inner) = axis_split(self.shape(a), axis);
                let mut da = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for j in 0..len {
                        let base = (o * len + j) * inner;
                        da[base..base + inner].copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                self.send(a, da);
            }
            Op::SumAll(a) => {
                let da = vec![g[0]; self.value(a).len()];
                self.send(a, da);
            }
            Op::Concat(parts, axis) => {
                let out_shape = self.nodes[idx].shape.clone();
                let (outer, total, inner) = axis_split(&out_shape, axis);
                let mut offset = 0;
                for p in parts {
                    let len = self.shape(p)[axis];
                    if self.wants(p) {
                        let mut dp = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            dp.extend_from_slice(&g[start..start + len * inner]);
                        }
                        self.send(p, dp);
                    }
                    offset += len;
                }
            }
            Op::Tanh(a) => {
                let y = &self.nodes[idx].value;
                let da = g.iter().zip(y).map(|(x, t)| x * (1.0 - t * t)).collect();
                self.send(a, da);
            }
            Op::Relu(a) => {
                let da = g
                    .iter()
                    .zip(self.value(a))
                    .map(|(x, &v)| if v > 0.0 { *x } else { 0.0 })
                    .collect();
                self.send(a, da);
            }
            Op::Reshape(a) => self.send(a, g.to_vec()),
            Op::SpMM(sparse, dense) => {
                let width = self.shape(dense)[1];
                let mut dd = vec![0.0; sparse.num_cols() * width];
                sparse.mul_dense_transposed_into(g, width, &mut dd);
                self.send(dense, dd);
            }
            Op::L1Loss(pred, target) => {
                let n = target.len() as f64;
                let dp = self
                    .value(pred)
                    .iter()
                    .zip(&target)
                    .map(|(p, t)| {
                        let s = if p > t {
                            1.0
                        } else if p < t {
                            -1.0
                        } else {
                            0.0
                        };
                        g[0] * s / n
                    })
                    .collect();
                self.send(pred, dp);
            }
            Op::SoftmaxXent {
                logits,
                rows,
                labels,
                probs,
            } => {
                let c = self.shape(logits)[1];
                let scale = g[0] / rows.len() as f64;
                let mut dz = vec![0.0; self.value(logits).len()];
                for (i, (&r, &y)) in rows.iter().zip(&labels).enumerate() {
                    for j in 0..c {
                        let onehot = if j == y { 1.0 } else { 0.0 };
                        dz[r * c + j] += scale * (probs[i * c + j] - onehot);
                    }
                }
                self.send(logits, dz);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_var(g: &mut Graph, v: &[f64]) -> Var {
        g.param(&Tensor::vector(v.to_vec()).with_grad())
    }

    #[test]
    fn hadamard_of_vectors() {
        let mut g = Graph::new();
        let a = vec_var(&mut g, &[1.0, 2.0, 3.0]);
        let b = vec_var(&mut g, &[4.0, 5.0, 6.0]);
        let c = g.hadamard(a, b).unwrap();
        assert_eq!(g.value(c), &[4.0, 10.0, 18.0]);
    }

    #[test]
    fn column_sums() {
        let mut g = Graph::new();
        let m = g.constant(Tensor::matrix(2, 3, vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]).unwrap());
        let s = g.sum_axis(m, 0).unwrap();
        assert_eq!(g.value(s), &[3.0, 3.0, 3.0]);
        assert_eq!(g.shape(s), &[3]);
    }

    #[test]
    fn additive_identity() {
        let mut g = Graph::new();
        let a = vec_var(&mut g, &[1.0, 0.0]);
        let z = vec_var(&mut g, &[0.0, 0.0]);
        let c = g.add(a, z).unwrap();
        assert_eq!(g.value(c), &[1.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let mut g = Graph::new();
        let a = vec_var(&mut g, &[1.0, 2.0]);
        let b = vec_var(&mut g, &[1.0, 2.0, 3.0]);
        let err = g.hadamard(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("hadamard") && msg.contains("[2]") && msg.contains("[3]"), "{msg}");
        let m = g.constant(Tensor::zeros(vec![2, 3]));
        let err = g.matmul(m, m).unwrap_err();
        assert!(err.to_string().contains("matmul"));
    }

    #[test]
    fn product_rule() {
        let mut g = Graph::new();
        let a = vec_var(&mut g, &[2.0]);
        let b = vec_var(&mut g, &[3.0]);
        let p = g.hadamard(a, b).unwrap();
        let l = g.sum(p).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[3.0]);
        assert_eq!(g.grad(b).unwrap(), &[2.0]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = vec_var(&mut g, &[0.3, -1.0, 2.0, 5.0]);
        let l = g.sum(x).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0; 4]);
    }

    #[test]
    fn reused_node_accumulates() {
        let mut g = Graph::new();
        let x = vec_var(&mut g, &[3.0]);
        let y = g.add(x, x).unwrap();
        let z = g.hadamard(y, x).unwrap(); // 2x²
        let l = g.sum(z).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[12.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = vec_var(&mut g, &[1.0, 2.0]);
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_output_rejected() {
        let mut g = Graph::new();
        let x = vec_var(&mut g, &[1e300]);
        let y = g.hadamard(x, x);
        assert!(matches!(y, Err(Error::NonFinite { op: "hadamard" })));
    }

    #[test]
    fn inputs_precede_consumers() {
        let mut g = Graph::new();
        let a = vec_var(&mut g, &[1.0, 2.0]);
        let b = g.tanh(a).unwrap();
        let c = g.concat(&[a, b], 0).unwrap();
        let d = g.sum(c).unwrap();
        for v in [b, c, d] {
            assert!(g.inputs(v).iter().all(|i| i.index() < v.index()));
        }
        assert_eq!(g.op_names(), vec!["leaf", "tanh", "concat", "sum"]);
    }

    #[test]
    fn spmm_with_repeated_columns() {
        let mut g = Graph::new();
        let dense = g.param(&Tensor::matrix(2, 1, vec![1.0, 10.0]).unwrap().with_grad());
        let s = Arc::new(CsrMatrix::from_groups(2, &[vec![0, 0, 1], vec![1]], false).unwrap());
        let out = g.spmm(s, dense).unwrap();
        assert_eq!(g.value(out), &[12.0, 10.0]);
        let l = g.sum(out).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(dense).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn l1_subgradient_is_zero_at_equality() {
        let mut g = Graph::new();
        let p = vec_var(&mut g, &[1.0, 5.0, -2.0, 4.0]);
        let l = g.l1_loss(p, &[1.0, 3.0, 0.0, 4.0]).unwrap();
        assert_eq!(g.value(l), &[1.0]);
        g.backward(l).unwrap();
        assert_eq!(g.grad(p).unwrap(), &[0.0, 0.25, -0.25, 0.0]);
    }
}
