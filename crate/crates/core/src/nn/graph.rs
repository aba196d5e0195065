//! The tape: eager forward evaluation plus reverse-mode accumulation.
//!
//! Each op appends a node holding its forward value; `backward` walks nodes
//! in reverse creation order (a valid topological order by construction) and
//! pushes gradient contributions to parents. Nodes that cannot reach a
//! parameter are skipped entirely.

use crate::error::{Error, Result};
use crate::nn::adam::{ParamId, ParamStore};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// [m,n] + [1,n], the bias pattern.
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId, f64),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    /// Elementwise min; gradient follows the smaller operand (ties: first).
    MinElem(NodeId, NodeId),
    /// Clamp; gradient passes only strictly inside the interval.
    Clamp(NodeId, f64, f64),
    /// Row-wise, max-subtracted.
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Square(NodeId),
    Mean(NodeId),
    Sum(NodeId),
    /// [m,n] -> [1,n] column means.
    MeanRows(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols {
        src: NodeId,
        start: usize,
        len: usize,
    },
    Transpose(NodeId),
    /// [m,n] with one column index per row -> [m,1].
    PickPerRow {
        src: NodeId,
        indices: Vec<usize>,
    },
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Gradients of one backward pass, indexed by node.
pub struct Gradients {
    by_node: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn node(&self, id: NodeId) -> Option<&[f64]> {
        self.by_node[id.0].as_deref()
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamId, NodeId)>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// A constant input; gradients do not flow into it.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value, false)
    }

    /// Place a parameter on the tape (cheap: shares the buffer).
    pub fn param(&mut self, store: &ParamStore, pid: ParamId) -> NodeId {
        let id = self.push(Op::Param(pid), store.value(pid).clone(), true);
        self.params.push((pid, id));
        id
    }

    pub fn param_nodes(&self) -> &[(ParamId, NodeId)] {
        &self.params
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, ka) = self.value(a).shape();
        let (kb, n) = self.value(b).shape();
        if ka != kb {
            return Err(Error::Shape(format!(
                "matmul [{m}x{ka}] x [{kb}x{n}]"
            )));
        }
        let mut out = vec![0.0; m * n];
        {
            let av = self.value(a).as_slice();
            let bv = self.value(b).as_slice();
            for i in 0..m {
                let arow = &av[i * ka..(i + 1) * ka];
                let orow = &mut out[i * n..(i + 1) * n];
                for (k, &aik) in arow.iter().enumerate() {
                    let brow = &bv[k * n..(k + 1) * n];
                    for (o, &bkj) in orow.iter_mut().zip(brow) {
                        *o += aik * bkj;
                    }
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), Tensor::new(m, n, out)?, needs))
    }

    fn binary_same_shape(&mut self, a: NodeId, b: NodeId, op: fn(f64, f64) -> f64, tag: Op) -> Result<NodeId> {
        let (m, n) = self.value(a).shape();
        if self.value(b).shape() != (m, n) {
            return Err(Error::Shape(format!(
                "elementwise op on [{m}x{n}] vs [{:?}]",
                self.value(b).shape()
            )));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b).iter())
            .map(|(&x, &y)| op(x, y))
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(tag, Tensor::new(m, n, out)?, needs))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Broadcast a [1,n] row over the rows of a [m,n] matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(a).shape();
        if self.value(row).shape() != (1, n) {
            return Err(Error::Shape(format!(
                "add_row [{m}x{n}] + {:?}",
                self.value(row).shape()
            )));
        }
        let rv = self.value(row).as_slice().to_vec();
        let out: Vec<f64> = self
            .value(a)
            .as_slice()
            .chunks(n)
            .flat_map(|chunk| chunk.iter().zip(&rv).map(|(&x, &r)| x + r))
            .collect();
        let needs = self.needs(a) || self.needs(row);
        Ok(self.push(Op::AddRow(a, row), Tensor::new(m, n, out)?, needs))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let (m, n) = self.value(a).shape();
        let out: Vec<f64> = self.value(a).iter().map(|&x| x * k).collect();
        let needs = self.needs(a);
        self.push(Op::Scale(a, k), Tensor::new(m, n, out).unwrap(), needs)
    }

    pub fn add_const(&mut self, a: NodeId, k: f64) -> NodeId {
        let (m, n) = self.value(a).shape();
        let out: Vec<f64> = self.value(a).iter().map(|&x| x + k).collect();
        let needs = self.needs(a);
        self.push(Op::AddConst(a, k), Tensor::new(m, n, out).unwrap(), needs)
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, tag: Op) -> NodeId {
        let (m, n) = self.value(a).shape();
        let out: Vec<f64> = self.value(a).iter().map(|&x| f(x)).collect();
        let needs = self.needs(a);
        self.push(tag, Tensor::new(m, n, out).unwrap(), needs)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn min_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, f64::min, Op::MinElem(a, b))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.value(a).shape();
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = self.value(a).row_slice(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[r * n..(r + 1) * n];
            let mut sum = 0.0;
            for (d, &x) in dst.iter_mut().zip(row) {
                *d = (x - max).exp();
                sum += *d;
            }
            for d in dst.iter_mut() {
                *d /= sum;
            }
        }
        let needs = self.needs(a);
        self.push(Op::Softmax(a), Tensor::new(m, n, out).unwrap(), needs)
    }

    /// Row-wise log-softmax with max subtraction.
    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.value(a).shape();
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = self.value(a).row_slice(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
            for (d, &x) in out[r * n..(r + 1) * n].iter_mut().zip(row) {
                *d = x - log_sum;
            }
        }
        let needs = self.needs(a);
        self.push(Op::LogSoftmax(a), Tensor::new(m, n, out).unwrap(), needs)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).iter().sum::<f64>() / self.value(a).len() as f64;
        let needs = self.needs(a);
        self.push(Op::Mean(a), Tensor::scalar(v), needs)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).iter().sum::<f64>();
        let needs = self.needs(a);
        self.push(Op::Sum(a), Tensor::scalar(v), needs)
    }

    /// Column means: [m,n] -> [1,n].
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.value(a).shape();
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, &x) in out.iter_mut().zip(self.value(a).row_slice(r)) {
                *o += x;
            }
        }
        for o in out.iter_mut() {
            *o /= m as f64;
        }
        let needs = self.needs(a);
        self.push(Op::MeanRows(a), Tensor::new(1, n, out).unwrap(), needs)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_cols of zero tensors".into()));
        }
        let m = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = vec![0.0; m * total];
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != m {
                return Err(Error::Shape("concat_cols row mismatch".into()));
            }
            for r in 0..m {
                out[r * total + offset..r * total + offset + t.cols()]
                    .copy_from_slice(t.row_slice(r));
            }
            offset += t.cols();
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Op::ConcatCols(parts.to_vec()),
            Tensor::new(m, total, out)?,
            needs,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_rows of zero tensors".into()));
        }
        let n = self.value(parts[0]).cols();
        let total: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut out = Vec::with_capacity(total * n);
        for &p in parts {
            let t = self.value(p);
            if t.cols() != n {
                return Err(Error::Shape("concat_rows column mismatch".into()));
            }
            out.extend_from_slice(t.as_slice());
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Op::ConcatRows(parts.to_vec()),
            Tensor::new(total, n, out)?,
            needs,
        ))
    }

    pub fn slice_cols(&mut self, src: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (m, n) = self.value(src).shape();
        if start + len > n {
            return Err(Error::Shape(format!(
                "slice_cols {start}..{} of [{m}x{n}]",
                start + len
            )));
        }
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&self.value(src).row_slice(r)[start..start + len]);
        }
        let needs = self.needs(src);
        Ok(self.push(
            Op::SliceCols { src, start, len },
            Tensor::new(m, len, out)?,
            needs,
        ))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.value(a).shape();
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                out[c * m + r] = self.value(a).get(r, c);
            }
        }
        let needs = self.needs(a);
        self.push(Op::Transpose(a), Tensor::new(n, m, out).unwrap(), needs)
    }

    /// Select one column per row: [m,n] -> [m,1].
    pub fn pick_per_row(&mut self, src: NodeId, indices: &[usize]) -> Result<NodeId> {
        let (m, n) = self.value(src).shape();
        if indices.len() != m {
            return Err(Error::Shape(format!(
                "pick_per_row got {} indices for {m} rows",
                indices.len()
            )));
        }
        let mut out = Vec::with_capacity(m);
        for (r, &c) in indices.iter().enumerate() {
            if c >= n {
                return Err(Error::Shape(format!("pick index {c} out of {n}")));
            }
            out.push(self.value(src).get(r, c));
        }
        let needs = self.needs(src);
        Ok(self.push(
            Op::PickPerRow {
                src,
                indices: indices.to_vec(),
            },
            Tensor::new(m, 1, out)?,
            needs,
        ))
    }

    /// Reverse-mode accumulation from a scalar output node.
    pub fn backward(&self, out: NodeId) -> Result<Gradients> {
        if self.value(out).len() != 1 {
            return Err(Error::Shape("backward from a non-scalar node".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(vec![1.0]);

        for idx in (0..=out.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            self.push_to_parents(idx, &grad, &mut grads);
            grads[idx] = Some(grad);
        }
        Ok(Gradients { by_node: grads })
    }

    fn accumulate(grads: &mut Vec<Option<Vec<f64>>>, id: NodeId, size: usize, f: impl FnOnce(&mut [f64])) {
        let slot = grads[id.0].get_or_insert_with(|| vec![0.0; size]);
        f(slot);
    }

    fn push_to_parents(&self, idx: usize, g: &[f64], grads: &mut Vec<Option<Vec<f64>>>) {
        let node = &self.nodes[idx];
        let val = &node.value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).shape();
                let n = self.value(*b).cols();
                if self.needs(*a) {
                    let bv = self.value(*b).as_slice();
                    Self::accumulate(grads, *a, m * k, |da| {
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            let darow = &mut da[i * k..(i + 1) * k];
                            for (kk, d) in darow.iter_mut().enumerate() {
                                let brow = &bv[kk * n..(kk + 1) * n];
                                let mut acc = 0.0;
                                for (&gv, &bv2) in grow.iter().zip(brow) {
                                    acc += gv * bv2;
                                }
                                *d += acc;
                            }
                        }
                    });
                }
                if self.needs(*b) {
                    let av = self.value(*a).as_slice();
                    Self::accumulate(grads, *b, k * n, |db| {
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            let arow = &av[i * k..(i + 1) * k];
                            for (kk, &aik) in arow.iter().enumerate() {
                                let dbrow = &mut db[kk * n..(kk + 1) * n];
                                for (d, &gv) in dbrow.iter_mut().zip(grow) {
                                    *d += aik * gv;
                                }
                            }
                        }
                    });
                }
            }
            Op::Add(a, b) => {
                for &p in [a, b] {
                    if self.needs(p) {
                        Self::accumulate(grads, p, g.len(), |d| {
                            for (dv, &gv) in d.iter_mut().zip(g) {
                                *dv += gv;
                            }
                        });
                    }
                }
            }
            Op::AddRow(a, row) => {
                let (m, n) = self.value(*a).shape();
                if self.needs(*a) {
                    Self::accumulate(grads, *a, m * n, |d| {
                        for (dv, &gv) in d.iter_mut().zip(g) {
                            *dv += gv;
                        }
                    });
                }
                if self.needs(*row) {
                    Self::accumulate(grads, *row, n, |d| {
                        for r in 0..m {
                            for (dv, &gv) in d.iter_mut().zip(&g[r * n..(r + 1) * n]) {
                                *dv += gv;
                            }
                        }
                    });
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, g.len(), |d| {
                        for (dv, &gv) in d.iter_mut().zip(g) {
                            *dv += gv;
                        }
                    });
                }
                if self.needs(*b) {
                    Self::accumulate(grads, *b, g.len(), |d| {
                        for (dv, &gv) in d.iter_mut().zip(g) {
                            *dv -= gv;
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let bv = self.value(*b).as_slice();
                    Self::accumulate(grads, *a, g.len(), |d| {
                        for ((dv, &gv), &bv2) in d.iter_mut().zip(g).zip(bv) {
                            *dv += gv * bv2;
                        }
                    });
                }
                if self.needs(*b) {
                    let av = self.value(*a).as_slice();
                    Self::accumulate(grads, *b, g.len(), |d| {
                        for ((dv, &gv), &av2) in d.iter_mut().zip(g).zip(av) {
                            *dv += gv * av2;
                        }
                    });
                }
            }
            Op::Scale(a, k) => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, g.len(), |d| {
                        for (dv, &gv) in d.iter_mut().zip(g) {
                            *dv += k * gv;
                        }
                    });
                }
            }
            Op::AddConst(a, _) => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, g.len(), |d| {
                        for (dv, &gv) in d.iter_mut().zip(g) {
                            *dv += gv;
                        }
                    });
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    let xv = self.value(*a).as_slice();
                    Self::accumulate(grads, *a, g.len(), |d| {
                        for ((dv, &gv), &x) in d.iter_mut().zip(g).zip(xv) {
                            if x > 0.0 {
                                *dv += gv;
                            }
                        }
                    });
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let yv = val.as_slice();
                    Self::accumulate(grads, *a, g.len(), |d| {
                        for ((dv, &gv), &y) in d.iter_mut().zip(g).zip(yv) {
                            *dv += gv * (1.0 - y * y);
                        }
                    });
                }
            }
            Op::Sigmoid(a) => {
                if self.needs(*a) {
                    let yv = val.as_slice();
                    Self::accumulate(grads, *a, g.len(), |d| {
                        for ((dv, &gv), &y) in d.iter_mut().zip(g).zip(yv) {
                            *dv += gv * y * (1.0 - y);
                        }
                    });
                }
            }
            Op::Square(a) => {
                if self.needs(*a) {
                    let xv = self.value(*a).as_slice();
                    Self::accumulate(grads, *a, g.len(), |d| {
                        for ((dv, &gv), &x) in d.iter_mut().zip(g).zip(xv) {
                            *dv += 2.0 * x * gv;
                        }
                    });
                }
            }
            Op::Exp(a) => {
                if self.needs(*a) {
                    let yv = val.as_slice();
                    Self::accumulate(grads, *a, g.len(), |d| {
                        for ((dv, &gv), &y) in d.iter_mut().zip(g).zip(yv) {
                            *dv += gv * y;
                        }
                    });
                }
            }
            Op::Clamp(a, lo, hi) => {
                if self.needs(*a) {
                    let xv = self.value(*a).as_slice();
                    let (lo, hi) = (*lo, *hi);
                    Self::accumulate(grads, *a, g.len(), |d| {
                        for ((dv, &gv), &x) in d.iter_mut().zip(g).zip(xv) {
                            if x > lo && x < hi {
                                *dv += gv;
                            }
                        }
                    });
                }
            }
            Op::MinElem(a, b) => {
                let av = self.value(*a).as_slice().to_vec();
                let bv = self.value(*b).as_slice().to_vec();
                if self.needs(*a) {
                    Self::accumulate(grads, *a, g.len(), |d| {
                        for i in 0..av.len() {
                            if av[i] <= bv[i] {
                                d[i] += g[i];
                            }
                        }
                    });
                }
                if self.needs(*b) {
                    Self::accumulate(grads, *b, g.len(), |d| {
                        for i in 0..av.len() {
                            if av[i] > bv[i] {
                                d[i] += g[i];
                            }
                        }
                    });
                }
            }
            Op::Softmax(a) => {
                if self.needs(*a) {
                    let (m, n) = val.shape();
                    let yv = val.as_slice();
                    Self::accumulate(grads, *a, m * n, |d| {
                        for r in 0..m {
                            let y = &yv[r * n..(r + 1) * n];
                            let gr = &g[r * n..(r + 1) * n];
                            let dot: f64 = y.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                            for ((dv, &yi), &gi) in
                                d[r * n..(r + 1) * n].iter_mut().zip(y).zip(gr)
                            {
                                *dv += yi * (gi - dot);
                            }
                        }
                    });
                }
            }
            Op::LogSoftmax(a) => {
                if self.needs(*a) {
                    let (m, n) = val.shape();
                    let yv = val.as_slice();
                    Self::accumulate(grads, *a, m * n, |d| {
                        for r in 0..m {
                            let y = &yv[r * n..(r + 1) * n];
                            let gr = &g[r * n..(r + 1) * n];
                            let gsum: f64 = gr.iter().sum();
                            for ((dv, &yi), &gi) in
                                d[r * n..(r + 1) * n].iter_mut().zip(y).zip(gr)
                            {
                                *dv += gi - yi.exp() * gsum;
                            }
                        }
                    });
                }
            }
            Op::Mean(a) => {
                if self.needs(*a) {
                    let len = self.value(*a).len();
                    let gv = g[0] / len as f64;
                    Self::accumulate(grads, *a, len, |d| {
                        for dv in d.iter_mut() {
                            *dv += gv;
                        }
                    });
                }
            }
            Op::Sum(a) => {
                if self.needs(*a) {
                    let len = self.value(*a).len();
                    let gv = g[0];
                    Self::accumulate(grads, *a, len, |d| {
                        for dv in d.iter_mut() {
                            *dv += gv;
                        }
                    });
                }
            }
            Op::MeanRows(a) => {
                if self.needs(*a) {
                    let (m, n) = self.value(*a).shape();
                    Self::accumulate(grads, *a, m * n, |d| {
                        for r in 0..m {
                            for (dv, &gv) in d[r * n..(r + 1) * n].iter_mut().zip(g) {
                                *dv += gv / m as f64;
                            }
                        }
                    });
                }
            }
            Op::ConcatCols(parts) => {
                let m = val.rows();
                let total = val.cols();
                let mut offset = 0;
                for &p in parts {
                    let cols = self.value(p).cols();
                    if self.needs(p) {
                        Self::accumulate(grads, p, m * cols, |d| {
                            for r in 0..m {
                                for (dv, &gv) in d[r * cols..(r + 1) * cols]
                                    .iter_mut()
                                    .zip(&g[r * total + offset..r * total + offset + cols])
                                {
                                    *dv += gv;
                                }
                            }
                        });
                    }
                    offset += cols;
                }
            }
            Op::ConcatRows(parts) => {
                let n = val.cols();
                let mut row_offset = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    if self.needs(p) {
                        Self::accumulate(grads, p, rows * n, |d| {
                            for (dv, &gv) in d
                                .iter_mut()
                                .zip(&g[row_offset * n..(row_offset + rows) * n])
                            {
                                *dv += gv;
                            }
                        });
                    }
                    row_offset += rows;
                }
            }
            Op::SliceCols { src, start, len } => {
                if self.needs(*src) {
                    let (m, n) = self.value(*src).shape();
                    let (start, len) = (*start, *len);
                    Self::accumulate(grads, *src, m * n, |d| {
                        for r in 0..m {
                            for (dv, &gv) in d[r * n + start..r * n + start + len]
                                .iter_mut()
                                .zip(&g[r * len..(r + 1) * len])
                            {
                                *dv += gv;
                            }
                        }
                    });
                }
            }
            Op::Transpose(a) => {
                if self.needs(*a) {
                    let (m, n) = self.value(*a).shape();
                    Self::accumulate(grads, *a, m * n, |d| {
                        for r in 0..m {
                            for c in 0..n {
                                d[r * n + c] += g[c * m + r];
                            }
                        }
                    });
                }
            }
            Op::PickPerRow { src, indices } => {
                if self.needs(*src) {
                    let (m, n) = self.value(*src).shape();
                    Self::accumulate(grads, *src, m * n, |d| {
                        for (r, &c) in indices.iter().enumerate() {
                            d[r * n + c] += g[r];
                        }
                    });
                }
            }
        }
    }
}
