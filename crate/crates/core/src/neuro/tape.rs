use std::collections::HashMap;

use super::tensor::gemm;
use super::{Gradients, NeuroError, ParamId, ParamStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Reshape(Var),
    Gather(Var, Vec<usize>),
    SegmentMean(Var, Vec<Vec<usize>>),
    SoftmaxRows(Var),
    Sum(Var),
    /// Weighted negative log-likelihood; the node keeps the row softmax.
    CrossEntropy(Var, Vec<usize>, Vec<f64>, Tensor),
}

#[derive(Debug)]
struct Node {
    /// `None` for parameters, whose value lives in the store.
    value: Option<Tensor>,
    op: Op,
}

/// Records a computation over tensors so gradients can be taken in reverse.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

fn mismatch(op: &'static str, left: (usize, usize), right: (usize, usize)) -> NeuroError {
    NeuroError::ShapeMismatch { op, left, right }
}

fn grad_slot<'g>(grads: &'g mut [Option<Tensor>], v: Var, shape: (usize, usize)) -> &'g mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("only parameters are stored out of line"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant: gradients stop here.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// The parameter `id`; repeated calls return the same handle.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    /// `a · b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NeuroError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(mismatch("matmul", sa, sb));
        }
        let mut out = Tensor::zeros(sa.0, sb.1);
        gemm(sa.0, sa.1, sb.1, self.value(a).data(), false, self.value(b).data(), false, 0.0, out.data_mut());
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NeuroError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(mismatch("matmul_t", sa, sb));
        }
        let mut out = Tensor::zeros(sa.0, sb.0);
        gemm(sa.0, sa.1, sb.0, self.value(a).data(), false, self.value(b).data(), true, 0.0, out.data_mut());
        Ok(self.push(out, Op::MatMulT(a, b)))
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, NeuroError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NeuroError> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NeuroError> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NeuroError> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the `1 x n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, NeuroError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.0 != 1 || sa.1 != sb.1 {
            return Err(mismatch("add_row", sa, sb));
        }
        let mut out = self.value(a).clone();
        let bias = self.value(b).data();
        for r in 0..sa.0 {
            for (x, y) in out.row_mut(r).iter_mut().zip(bias) {
                *x += y;
            }
        }
        Ok(self.push(out, Op::AddRow(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| k * x);
        self.push(out, Op::Scale(a, k))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// Joins tensors with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NeuroError> {
        let rows = self.shape(parts[0]).0;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return Err(mismatch("concat_cols", self.shape(parts[0]), s));
            }
            cols += s.1;
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + t.cols()].copy_from_slice(t.row(r));
            }
            offset += t.cols();
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Stacks tensors with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NeuroError> {
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(mismatch("concat_rows", self.shape(parts[0]), t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let rows = data.len() / cols;
        let out = Tensor::new(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NeuroError> {
        let s = self.shape(a);
        if len == 0 || start + len > s.1 {
            return Err(mismatch("slice_cols", s, (s.0, start + len)));
        }
        let t = self.value(a);
        let mut data = Vec::with_capacity(s.0 * len);
        for r in 0..s.0 {
            data.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let out = Tensor::new(s.0, len, data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NeuroError> {
        let s = self.shape(a);
        if len == 0 || start + len > s.0 {
            return Err(mismatch("slice_rows", s, (start + len, s.1)));
        }
        let data = self.value(a).data()[start * s.1..(start + len) * s.1].to_vec();
        let out = Tensor::new(len, s.1, data)?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, NeuroError> {
        let s = self.shape(a);
        if rows * cols != s.0 * s.1 {
            return Err(mismatch("reshape", s, (rows, cols)));
        }
        let out = self.value(a).clone().reshaped(rows, cols);
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Picks rows of `a` by index (an embedding lookup when `a` is a table).
    pub fn gather(&mut self, a: Var, rows: &[usize]) -> Result<Var, NeuroError> {
        let s = self.shape(a);
        if rows.is_empty() {
            return Err(mismatch("gather", s, (0, s.1)));
        }
        let t = self.value(a);
        let mut data = Vec::with_capacity(rows.len() * s.1);
        for &r in rows {
            if r >= s.0 {
                return Err(mismatch("gather", s, (r + 1, s.1)));
            }
            data.extend_from_slice(t.row(r));
        }
        let out = Tensor::new(rows.len(), s.1, data)?;
        Ok(self.push(out, Op::Gather(a, rows.to_vec())))
    }

    /// Row `i` of the result is the mean of the rows of `a` listed in
    /// `segments[i]`, summed in the listed order; an empty segment gives zeros.
    pub fn segment_mean(&mut self, a: Var, segments: Vec<Vec<usize>>) -> Result<Var, NeuroError> {
        let s = self.shape(a);
        if segments.is_empty() {
            return Err(mismatch("segment_mean", s, (0, s.1)));
        }
        let t = self.value(a);
        let mut out = Tensor::zeros(segments.len(), s.1);
        for (i, seg) in segments.iter().enumerate() {
            if seg.is_empty() {
                continue;
            }
            let row = out.row_mut(i);
            for &r in seg {
                if r >= s.0 {
                    return Err(mismatch("segment_mean", s, (r + 1, s.1)));
                }
                for (o, x) in row.iter_mut().zip(t.row(r)) {
                    *o += x;
                }
            }
            let k = 1.0 / seg.len() as f64;
            row.iter_mut().for_each(|o| *o *= k);
        }
        Ok(self.push(out, Op::SegmentMean(a, segments)))
    }

    /// Mean of all rows, as a single row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, NeuroError> {
        let n = self.shape(a).0;
        self.segment_mean(a, vec![(0..n).collect()])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        for r in 0..t.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// `-Σ_i weights[i] · log softmax(logits_i)[targets[i]]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Result<Var, NeuroError> {
        let t = self.value(logits);
        if targets.len() != t.rows() || weights.len() != t.rows() {
            return Err(mismatch("cross_entropy", t.shape(), (targets.len(), weights.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&y| y >= t.cols()) {
            return Err(mismatch("cross_entropy", t.shape(), (1, bad + 1)));
        }
        let mut probs = t.clone();
        let mut loss = 0.0;
        for (r, (&y, &w)) in targets.iter().zip(weights).enumerate() {
            let row = t.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss -= w * (row[y] - log_z);
            softmax_in_place(probs.row_mut(r));
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy(logits, targets.to_vec(), weights.to_vec(), probs),
        ))
    }

    /// Reverse pass from the scalar `loss`. Every recorded node is visited
    /// once, newest first; parameters the loss does not reach get no entry.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NeuroError> {
        let mut out = Gradients::new(self.params.len());
        self.backward_into(loss, &mut out)?;
        Ok(out)
    }

    /// Like [`Tape::backward`], adding into existing accumulators.
    pub fn backward_into(&self, loss: Var, out: &mut Gradients) -> Result<(), NeuroError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(NeuroError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, g, &mut grads, out);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: Tensor, grads: &mut [Option<Tensor>], out: &mut Gradients) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Input => {}
            Op::Param(id) => out.slot(*id, g.shape()).add_assign(&g),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                gemm(m, n, k, g.data(), false, tb.data(), true, 1.0, grad_slot(grads, *a, ta.shape()).data_mut());
                gemm(k, m, n, ta.data(), true, g.data(), false, 1.0, grad_slot(grads, *b, tb.shape()).data_mut());
            }
            Op::MatMulT(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                gemm(m, n, k, g.data(), false, tb.data(), false, 1.0, grad_slot(grads, *a, ta.shape()).data_mut());
                gemm(n, m, k, g.data(), true, ta.data(), false, 1.0, grad_slot(grads, *b, tb.shape()).data_mut());
            }
            Op::Add(a, b) => {
                grad_slot(grads, *a, g.shape()).add_assign(&g);
                grad_slot(grads, *b, g.shape()).add_assign(&g);
            }
            Op::AddRow(a, b) => {
                grad_slot(grads, *a, g.shape()).add_assign(&g);
                let gb = grad_slot(grads, *b, (1, g.cols()));
                for r in 0..g.rows() {
                    for (x, y) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *x += y;
                    }
                }
            }
            Op::Sub(a, b) => {
                grad_slot(grads, *a, g.shape()).add_assign(&g);
                let gb = grad_slot(grads, *b, g.shape());
                for (x, y) in gb.data_mut().iter_mut().zip(g.data()) {
                    *x -= y;
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = grad_slot(grads, *a, g.shape());
                for ((x, gv), bv) in ga.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                    *x += gv * bv;
                }
                let gb = grad_slot(grads, *b, g.shape());
                for ((x, gv), av) in gb.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                    *x += gv * av;
                }
            }
            Op::Scale(a, k) => {
                let ga = grad_slot(grads, *a, g.shape());
                for (x, gv) in ga.data_mut().iter_mut().zip(g.data()) {
                    *x += k * gv;
                }
            }
            Op::Sigmoid(a) | Op::Tanh(a) => {
                let y = node.value.as_ref().expect("activations are stored");
                let is_sigmoid = matches!(node.op, Op::Sigmoid(_));
                let ga = grad_slot(grads, *a, g.shape());
                for ((x, gv), yv) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    let d = if is_sigmoid { yv * (1.0 - yv) } else { 1.0 - yv * yv };
                    *x += gv * d;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let s = self.shape(*p);
                    let gp = grad_slot(grads, *p, s);
                    for r in 0..s.0 {
                        for (x, y) in gp.row_mut(r).iter_mut().zip(&g.row(r)[offset..offset + s.1]) {
                            *x += y;
                        }
                    }
                    offset += s.1;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let s = self.shape(*p);
                    let gp = grad_slot(grads, *p, s);
                    let src = &g.data()[offset * s.1..(offset + s.0) * s.1];
                    for (x, y) in gp.data_mut().iter_mut().zip(src) {
                        *x += y;
                    }
                    offset += s.0;
                }
            }
            Op::SliceCols(a, start) => {
                let s = self.shape(*a);
                let ga = grad_slot(grads, *a, s);
                for r in 0..g.rows() {
                    for (x, y) in ga.row_mut(r)[*start..*start + g.cols()].iter_mut().zip(g.row(r)) {
                        *x += y;
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let s = self.shape(*a);
                let ga = grad_slot(grads, *a, s);
                let dst = &mut ga.data_mut()[start * s.1..(start + g.rows()) * s.1];
                for (x, y) in dst.iter_mut().zip(g.data()) {
                    *x += y;
                }
            }
            Op::Reshape(a) => {
                let s = self.shape(*a);
                let ga = grad_slot(grads, *a, s);
                for (x, y) in ga.data_mut().iter_mut().zip(g.data()) {
                    *x += y;
                }
            }
            Op::Gather(a, rows) => {
                let s = self.shape(*a);
                let ga = grad_slot(grads, *a, s);
                for (i, &r) in rows.iter().enumerate() {
                    for (x, y) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                        *x += y;
                    }
                }
            }
            Op::SegmentMean(a, segments) => {
                let s = self.shape(*a);
                let ga = grad_slot(grads, *a, s);
                for (i, seg) in segments.iter().enumerate() {
                    let k = 1.0 / seg.len().max(1) as f64;
                    for &r in seg {
                        for (x, y) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                            *x += k * y;
                        }
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let y = node.value.as_ref().expect("softmax output is stored");
                let ga = grad_slot(grads, *a, g.shape());
                for r in 0..g.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(p, q)| p * q).sum();
                    for ((x, gv), yv) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *x += yv * (gv - dot);
                    }
                }
            }
            Op::Sum(a) => {
                let s = self.shape(*a);
                let gv = g.item();
                let ga = grad_slot(grads, *a, s);
                ga.data_mut().iter_mut().for_each(|x| *x += gv);
            }
            Op::CrossEntropy(logits, targets, weights, probs) => {
                let gv = g.item();
                let gl = grad_slot(grads, *logits, probs.shape());
                for (r, (&y, &w)) in targets.iter().zip(weights).enumerate() {
                    let k = gv * w;
                    for (x, p) in gl.row_mut(r).iter_mut().zip(probs.row(r)) {
                        *x += k * p;
                    }
                    gl.row_mut(r)[y] -= k;
                }
            }
        }
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in row.iter_mut() {
        *x /= z;
    }
}
