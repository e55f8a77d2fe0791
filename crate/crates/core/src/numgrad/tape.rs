//! Tensor-level reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive applied to [`NodeId`]s in execution
//! order, so the node list is already a topological order. [`Tape::backward`]
//! walks it once in reverse, accumulating adjoints, and returns the gradient of
//! a scalar loss with respect to every parameter leaf that was read through
//! [`Tape::param`].
//!
//! Parameter leaves borrow the [`ParamStore`] instead of copying it, which
//! keeps long recurrent unrolls cheap.

use super::tensor::{accumulate_a_bt, accumulate_at_b};
use super::{Gradients, NumError, ParamId, ParamStore, Tensor2D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Minimum(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Silu(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Clamp(NodeId, f64, f64),
    LogSoftmax(NodeId),
    Softmax(NodeId),
    Gather(NodeId, Vec<usize>),
    SumAll(NodeId),
    RowSum(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols(NodeId, usize),
}

enum Value {
    Owned(Tensor2D),
    Param(usize),
}

struct Node {
    value: Value,
    op: Op,
}

/// Recorder for one forward pass.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor2D {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Param(p) => self.params.get(ParamId(*p)),
        }
    }

    fn push(&mut self, value: Tensor2D, op: Op) -> NodeId {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor2D) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// Copy of `id`'s value with no gradient path back to it.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let v = self.value(id).clone();
        self.constant(v)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.nodes.push(Node {
            value: Value::Param(id.0),
            op: Op::Param(id.0),
        });
        NodeId(self.nodes.len() - 1)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<(), NumError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(NumError::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a `1 × c` row to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, NumError> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(NumError::Shape(format!(
                "bias {:?} does not broadcast over {:?}",
                bv.shape(),
                xv.shape()
            )));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    /// `x · w + b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    fn zip(
        &mut self,
        a: NodeId,
        b: NodeId,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, NumError> {
        self.same_shape(a, b, what)?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor2D::from_vec(av.rows(), av.cols(), data)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; on ties the gradient goes to `a`.
    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        self.zip(a, b, "minimum", |x, y| if y < x { y } else { x }, Op::Minimum(a, b))
    }

    fn unary(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let out = self.value(x).map(f);
        self.push(out, op)
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        self.unary(x, |v| v * k, Op::Scale(x, k))
    }

    pub fn add_scalar(&mut self, x: NodeId, k: f64) -> NodeId {
        self.unary(x, |v| v + k, Op::AddScalar(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v * sigmoid(v), Op::Silu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    /// Clamps into `[lo, hi]`; gradient passes only where the input is inside.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.push(out, Op::LogSoftmax(x))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let p = super::softmax_logits(xv.row(r));
            out.row_mut(r).copy_from_slice(&p);
        }
        self.push(out, Op::Softmax(x))
    }

    /// Picks column `idx[r]` from each row `r`, giving an `r × 1` column.
    pub fn gather(&mut self, x: NodeId, idx: &[usize]) -> Result<NodeId, NumError> {
        let xv = self.value(x);
        if idx.len() != xv.rows() {
            return Err(NumError::Shape(format!(
                "gather: {} indices for {} rows",
                idx.len(),
                xv.rows()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= xv.cols()) {
            return Err(NumError::Shape(format!(
                "gather: index {bad} out of range for {} columns",
                xv.cols()
            )));
        }
        let data = idx.iter().enumerate().map(|(r, &c)| xv.get(r, c)).collect();
        let out = Tensor2D::column_vector(data);
        Ok(self.push(out, Op::Gather(x, idx.to_vec())))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).sum();
        self.push(Tensor2D::row_vector(vec![s]), Op::SumAll(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Per-row sums as an `r × 1` column.
    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let data = (0..xv.rows()).map(|r| xv.row(r).iter().sum()).collect();
        self.push(Tensor2D::column_vector(data), Op::RowSum(x))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NumError> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows());
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(NumError::Shape("concat_cols: row counts differ".into()));
        }
        let mut out = Tensor2D::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, NumError> {
        let cols = parts.first().map_or(0, |&p| self.value(p).cols());
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            return Err(NumError::Shape("concat_rows: column counts differ".into()));
        }
        let rows: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor2D::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, NumError> {
        let xv = self.value(x);
        if start + len > xv.cols() {
            return Err(NumError::Shape(format!(
                "slice_cols {start}..{} of {} columns",
                start + len,
                xv.cols()
            )));
        }
        let mut out = Tensor2D::zeros(xv.rows(), len);
        for r in 0..xv.rows() {
            out.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols(x, start)))
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: NodeId) -> Result<Gradients, NumError> {
        if self.value(loss).shape() != (1, 1) {
            return Err(NumError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads = Gradients::zeros_like(self.params);
        let mut adj: Vec<Option<Tensor2D>> = Vec::with_capacity(self.nodes.len());
        adj.resize_with(self.nodes.len(), || None);
        adj[loss.0] = Some(Tensor2D::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let out = self.value(NodeId(i));
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Param(p) => grads.get_mut(ParamId(*p)).add_assign(&g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    accumulate_a_bt(&g, bv, slot(&mut adj, *a, av));
                    accumulate_at_b(av, &g, slot(&mut adj, *b, bv));
                }
                Op::AddRow(x, b) => {
                    let bv = self.value(*b);
                    let gb = slot(&mut adj, *b, bv);
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    add_into(&mut adj, *x, &g);
                }
                Op::Add(a, b) => {
                    add_into(&mut adj, *a, &g);
                    add_into(&mut adj, *b, &g);
                }
                Op::Sub(a, b) => {
                    add_into(&mut adj, *a, &g);
                    add_into(&mut adj, *b, &g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = zip_map(&g, bv, |gv, y| gv * y);
                    let gb = zip_map(&g, av, |gv, x| gv * x);
                    add_into(&mut adj, *a, &ga);
                    add_into(&mut adj, *b, &gb);
                }
                Op::Minimum(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = g.clone();
                    let mut gb = g.clone();
                    for k in 0..g.len() {
                        if bv.data()[k] < av.data()[k] {
                            ga.data_mut()[k] = 0.0;
                        } else {
                            gb.data_mut()[k] = 0.0;
                        }
                    }
                    add_into(&mut adj, *a, &ga);
                    add_into(&mut adj, *b, &gb);
                }
                Op::Scale(x, k) => add_into(&mut adj, *x, &g.map(|v| v * k)),
                Op::AddScalar(x) => add_into(&mut adj, *x, &g),
                Op::Tanh(x) => add_into(&mut adj, *x, &zip_map(&g, out, |gv, y| gv * (1.0 - y * y))),
                Op::Sigmoid(x) => {
                    add_into(&mut adj, *x, &zip_map(&g, out, |gv, y| gv * y * (1.0 - y)))
                }
                Op::Exp(x) => add_into(&mut adj, *x, &zip_map(&g, out, |gv, y| gv * y)),
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    add_into(&mut adj, *x, &zip_map(&g, xv, |gv, v| if v > 0.0 { gv } else { 0.0 }))
                }
                Op::Silu(x) => {
                    let xv = self.value(*x);
                    let d = zip_map(&g, xv, |gv, v| {
                        let s = sigmoid(v);
                        gv * s * (1.0 + v * (1.0 - s))
                    });
                    add_into(&mut adj, *x, &d);
                }
                Op::Square(x) => {
                    let xv = self.value(*x);
                    add_into(&mut adj, *x, &zip_map(&g, xv, |gv, v| 2.0 * gv * v))
                }
                Op::Clamp(x, lo, hi) => {
                    let xv = self.value(*x);
                    let d = zip_map(&g, xv, |gv, v| if v >= *lo && v <= *hi { gv } else { 0.0 });
                    add_into(&mut adj, *x, &d);
                }
                Op::LogSoftmax(x) => {
                    let mut d = g.clone();
                    for r in 0..g.rows() {
                        let gsum: f64 = g.row(r).iter().sum();
                        for (dv, y) in d.row_mut(r).iter_mut().zip(out.row(r)) {
                            *dv -= y.exp() * gsum;
                        }
                    }
                    add_into(&mut adj, *x, &d);
                }
                Op::Softmax(x) => {
                    let mut d = g.clone();
                    for r in 0..g.rows() {
                        let dot: f64 = g.row(r).iter().zip(out.row(r)).map(|(a, b)| a * b).sum();
                        for ((dv, gv), y) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(out.row(r)) {
                            *dv = y * (gv - dot);
                        }
                    }
                    add_into(&mut adj, *x, &d);
                }
                Op::Gather(x, idx) => {
                    let xv = self.value(*x);
                    let gx = slot(&mut adj, *x, xv);
                    for (r, &c) in idx.iter().enumerate() {
                        let k = r * gx.cols() + c;
                        gx.data_mut()[k] += g.get(r, 0);
                    }
                }
                Op::SumAll(x) => {
                    let xv = self.value(*x);
                    let s = g.get(0, 0);
                    let gx = slot(&mut adj, *x, xv);
                    for v in gx.data_mut() {
                        *v += s;
                    }
                }
                Op::RowSum(x) => {
                    let xv = self.value(*x);
                    let gx = slot(&mut adj, *x, xv);
                    for r in 0..gx.rows() {
                        let s = g.get(r, 0);
                        for v in gx.row_mut(r) {
                            *v += s;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let w = pv.cols();
                        let gp = slot(&mut adj, p, pv);
                        for r in 0..g.rows() {
                            for (o, v) in gp.row_mut(r).iter_mut().zip(&g.row(r)[off..off + w]) {
                                *o += v;
                            }
                        }
                        off += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let n = pv.len();
                        let gp = slot(&mut adj, p, pv);
                        for (o, v) in gp.data_mut().iter_mut().zip(&g.data()[off..off + n]) {
                            *o += v;
                        }
                        off += n;
                    }
                }
                Op::SliceCols(x, start) => {
                    let xv = self.value(*x);
                    let gx = slot(&mut adj, *x, xv);
                    for r in 0..g.rows() {
                        let dst = &mut gx.row_mut(r)[*start..*start + g.cols()];
                        for (o, v) in dst.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
            }
        }
        Ok(grads)
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn slot<'a>(adj: &'a mut [Option<Tensor2D>], id: NodeId, like: &Tensor2D) -> &'a mut Tensor2D {
    adj[id.0].get_or_insert_with(|| Tensor2D::zeros(like.rows(), like.cols()))
}

fn add_into(adj: &mut [Option<Tensor2D>], id: NodeId, g: &Tensor2D) {
    match &mut adj[id.0] {
        Some(t) => t.add_assign(g),
        None => adj[id.0] = Some(g.clone()),
    }
}

fn zip_map(g: &Tensor2D, other: &Tensor2D, f: impl Fn(f64, f64) -> f64) -> Tensor2D {
    let data = g.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor2D::from_vec(g.rows(), g.cols(), data).expect("same shape")
}
