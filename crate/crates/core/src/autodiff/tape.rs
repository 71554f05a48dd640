use std::collections::HashMap;

use super::{AutodiffError, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Concat(Vec<NodeId>),
    Stack(Vec<NodeId>),
    Relu(NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Embedding { table: NodeId, index: usize },
    Gather(NodeId, Vec<usize>),
    CrossEntropy { probs: NodeId, target: usize },
    CrossEntropyLogits { logits: NodeId, target: usize },
    Sum(NodeId),
    Dot(NodeId, NodeId),
    LogSumExp(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients indexed by [`ParamId`]; `None` where a parameter was unreachable.
#[derive(Debug, Clone, Default)]
pub struct Gradients(pub Vec<Option<Tensor>>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.0.get(id.0).and_then(Option::as_ref)
    }

    /// Adds into the accumulators of `store`.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (i, g) in self.0.iter().enumerate() {
            if let Some(g) = g {
                let p = store.get_mut(ParamId(i));
                for (a, b) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
    }

    /// Adds `other` elementwise.
    pub fn merge(&mut self, other: &Gradients) {
        if self.0.len() < other.0.len() {
            self.0.resize(other.0.len(), None);
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => {
                    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                        *x += y;
                    }
                }
                (None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }
}

/// Records primitive applications for one forward pass. Parameter values
/// are copied in once per tape, so tapes never borrow the store.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, NodeId>,
}

fn shape_err(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, detail }
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn logsumexp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `(rows, inner, cols)` of a matmul, treating a left vector as a row and a
/// right vector as a column.
fn mm_dims(a: &[usize], b: &[usize]) -> Option<(usize, usize, usize, Vec<usize>)> {
    match (a, b) {
        ([k], [k2, n]) if k == k2 => Some((1, *k, *n, vec![*n])),
        ([m, k], [k2, n]) if k == k2 => Some((*m, *k, *n, vec![*m, *n])),
        ([m, k], [k2]) if k == k2 => Some((*m, *k, 1, vec![*m])),
        _ => None,
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let row = &b[p * n..(p + 1) * n];
            let o = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                o[j] += av * row[j];
            }
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<NodeId, AutodiffError> {
        if value.data().iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite { op: op_name(&op) });
        }
        self.nodes.push(Node { value, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn value(&self, n: NodeId) -> &Tensor {
        &self.nodes[n.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, n: NodeId) -> f64 {
        self.nodes[n.0].value.data()[0]
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.nodes.push(Node { value: t, op: Op::Input });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(n) = self.params.get(&id) {
            return *n;
        }
        self.nodes.push(Node { value: store.get(id).value.clone(), op: Op::Param(id) });
        let n = NodeId(self.nodes.len() - 1);
        self.params.insert(id, n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n, shape) = mm_dims(av.shape(), bv.shape())
            .ok_or_else(|| shape_err("matmul", format!("{:?} x {:?}", av.shape(), bv.shape())))?;
        let out = matmul_raw(av.data(), bv.data(), m, k, n);
        self.push(Tensor::from_parts(shape, out), Op::MatMul(a, b))
    }

    fn zip(&mut self, a: NodeId, b: NodeId, name: &'static str, f: fn(f64, f64) -> f64, op: Op) -> Result<NodeId, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let shape = av.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId, AutodiffError> {
        let v = self.value(a);
        let t = Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|x| x * c).collect());
        self.push(t, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId, AutodiffError> {
        let v = self.value(a);
        let t = Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|x| x + c).collect());
        self.push(t, Op::AddScalar(a))
    }

    fn vector_of(&self, a: NodeId, op: &'static str) -> Result<&[f64], AutodiffError> {
        let v = self.value(a);
        if v.rank() != 1 {
            return Err(shape_err(op, format!("expected a vector, got {:?}", v.shape())));
        }
        Ok(v.data())
    }

    /// Concatenates vectors.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let mut data = Vec::new();
        for p in parts {
            data.extend_from_slice(self.vector_of(*p, "concat")?);
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    /// Stacks one-element tensors into a vector.
    pub fn stack(&mut self, parts: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let mut data = Vec::with_capacity(parts.len());
        for p in parts {
            let v = self.value(*p);
            data.push(v.item().ok_or_else(|| shape_err("stack", format!("{:?} is not a scalar", v.shape())))?);
        }
        self.push(Tensor::vector(data), Op::Stack(parts.to_vec()))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let v = self.value(a);
        let t = Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|x| x.max(0.0)).collect());
        self.push(t, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let v = self.value(a);
        let t = Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|x| x.tanh()).collect());
        self.push(t, Op::Tanh(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let out = softmax(self.vector_of(a, "softmax")?);
        self.push(Tensor::vector(out), Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let x = self.vector_of(a, "log_softmax")?;
        let lse = logsumexp(x);
        let out = x.iter().map(|v| v - lse).collect();
        self.push(Tensor::vector(out), Op::LogSoftmax(a))
    }

    /// Row `index` of a `[vocab, dim]` table.
    pub fn embedding_lookup(&mut self, table: NodeId, index: usize) -> Result<NodeId, AutodiffError> {
        let t = self.value(table);
        let [rows, dim] = t.shape()[..] else {
            return Err(shape_err("embedding_lookup", format!("table shape {:?}", t.shape())));
        };
        if index >= rows {
            return Err(shape_err("embedding_lookup", format!("index {} out of {} rows", index, rows)));
        }
        let row = t.data()[index * dim..(index + 1) * dim].to_vec();
        self.push(Tensor::vector(row), Op::Embedding { table, index })
    }

    pub fn gather(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId, AutodiffError> {
        let x = self.vector_of(a, "gather")?;
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            out.push(*x.get(i).ok_or_else(|| shape_err("gather", format!("index {} of {}", i, x.len())))?);
        }
        self.push(Tensor::vector(out), Op::Gather(a, indices.to_vec()))
    }

    /// `-ln probs[target]`.
    pub fn cross_entropy(&mut self, probs: NodeId, target: usize) -> Result<NodeId, AutodiffError> {
        let p = self.vector_of(probs, "cross_entropy")?;
        let pt = *p.get(target).ok_or_else(|| shape_err("cross_entropy", format!("target {} of {}", target, p.len())))?;
        self.push(Tensor::scalar(-pt.ln()), Op::CrossEntropy { probs, target })
    }

    /// `-log_softmax(logits)[target]`, computed stably.
    pub fn cross_entropy_logits(&mut self, logits: NodeId, target: usize) -> Result<NodeId, AutodiffError> {
        let x = self.vector_of(logits, "cross_entropy_logits")?;
        if target >= x.len() {
            return Err(shape_err("cross_entropy_logits", format!("target {} of {}", target, x.len())));
        }
        let v = logsumexp(x) - x[target];
        self.push(Tensor::scalar(v), Op::CrossEntropyLogits { logits, target })
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let x = self.vector_of(a, "dot")?;
        let y = self.vector_of(b, "dot")?;
        if x.len() != y.len() {
            return Err(shape_err("dot", format!("{} vs {}", x.len(), y.len())));
        }
        let s = x.iter().zip(y).map(|(p, q)| p * q).sum();
        self.push(Tensor::scalar(s), Op::Dot(a, b))
    }

    pub fn logsumexp(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let x = self.vector_of(a, "logsumexp")?;
        if x.is_empty() {
            return Err(shape_err("logsumexp", "empty vector".into()));
        }
        let v = logsumexp(x);
        self.push(Tensor::scalar(v), Op::LogSumExp(a))
    }

    /// Reverse pass from a one-element root; returns parameter gradients.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, AutodiffError> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(AutodiffError::NonScalarRoot { shape: rv.shape().to_vec() });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        fn acc(grads: &mut [Option<Vec<f64>>], n: NodeId, len: usize) -> &mut Vec<f64> {
            grads[n.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = node.value.data();
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    if out.0.len() <= id.0 {
                        out.0.resize(id.0 + 1, None);
                    }
                    let t = Tensor::from_parts(node.value.shape().to_vec(), g);
                    match &mut out.0[id.0] {
                        Some(prev) => {
                            for (a, b) in prev.data_mut().iter_mut().zip(t.data()) {
                                *a += b;
                            }
                        }
                        slot => *slot = Some(t),
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n, _) = mm_dims(av.shape(), bv.shape()).expect("checked in forward");
                    // dA = G Bᵀ, dB = Aᵀ G
                    let ga = acc(&mut grads, *a, m * k);
                    for r in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for c in 0..n {
                                s += g[r * n + c] * bv.data()[p * n + c];
                            }
                            ga[r * k + p] += s;
                        }
                    }
                    let gb = acc(&mut grads, *b, k * n);
                    for r in 0..m {
                        for p in 0..k {
                            let av = av.data()[r * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for c in 0..n {
                                gb[p * n + c] += av * g[r * n + c];
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (x, d) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *x += d;
                    }
                    for (x, d) in acc(&mut grads, *b, g.len()).iter_mut().zip(&g) {
                        *x += d;
                    }
                }
                Op::Sub(a, b) => {
                    for (x, d) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *x += d;
                    }
                    for (x, d) in acc(&mut grads, *b, g.len()).iter_mut().zip(&g) {
                        *x -= d;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).data().to_vec();
                    let bv = self.value(*b).data().to_vec();
                    for ((x, d), o) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(&bv) {
                        *x += d * o;
                    }
                    for ((x, d), o) in acc(&mut grads, *b, g.len()).iter_mut().zip(&g).zip(&av) {
                        *x += d * o;
                    }
                }
                Op::Scale(a, c) => {
                    for (x, d) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *x += d * c;
                    }
                }
                Op::AddScalar(a) => {
                    for (x, d) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *x += d;
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        for (x, d) in acc(&mut grads, *p, len).iter_mut().zip(&g[off..off + len]) {
                            *x += d;
                        }
                        off += len;
                    }
                }
                Op::Stack(parts) => {
                    for (p, d) in parts.iter().zip(&g) {
                        acc(&mut grads, *p, 1)[0] += d;
                    }
                }
                Op::Relu(a) => {
                    let x = self.value(*a).data().to_vec();
                    for ((s, d), xv) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(&x) {
                        if *xv > 0.0 {
                            *s += d;
                        }
                    }
                }
                Op::Tanh(a) => {
                    for ((s, d), yv) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(y) {
                        *s += d * (1.0 - yv * yv);
                    }
                }
                Op::Softmax(a) => {
                    let gy: f64 = g.iter().zip(y).map(|(d, p)| d * p).sum();
                    for ((s, d), p) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(y) {
                        *s += p * (d - gy);
                    }
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = g.iter().sum();
                    for ((s, d), ly) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(y) {
                        *s += d - ly.exp() * total;
                    }
                }
                Op::Embedding { table, index } => {
                    let tv = self.value(*table);
                    let dim = tv.shape()[1];
                    let len = tv.len();
                    let gt = acc(&mut grads, *table, len);
                    for (j, d) in g.iter().enumerate() {
                        gt[index * dim + j] += d;
                    }
                }
                Op::Gather(a, idx) => {
                    let len = self.value(*a).len();
                    let ga = acc(&mut grads, *a, len);
                    for (&i, d) in idx.iter().zip(&g) {
                        ga[i] += d;
                    }
                }
                Op::CrossEntropy { probs, target } => {
                    let pv = self.value(*probs).data()[*target];
                    let len = self.value(*probs).len();
                    acc(&mut grads, *probs, len)[*target] -= g[0] / pv;
                }
                Op::CrossEntropyLogits { logits, target } => {
                    let p = softmax(self.value(*logits).data());
                    let gl = acc(&mut grads, *logits, p.len());
                    for (j, pj) in p.iter().enumerate() {
                        gl[j] += g[0] * (pj - if j == *target { 1.0 } else { 0.0 });
                    }
                }
                Op::Sum(a) => {
                    let len = self.value(*a).len();
                    for s in acc(&mut grads, *a, len).iter_mut() {
                        *s += g[0];
                    }
                }
                Op::Dot(a, b) => {
                    let av = self.value(*a).data().to_vec();
                    let bv = self.value(*b).data().to_vec();
                    for (s, o) in acc(&mut grads, *a, av.len()).iter_mut().zip(&bv) {
                        *s += g[0] * o;
                    }
                    for (s, o) in acc(&mut grads, *b, bv.len()).iter_mut().zip(&av) {
                        *s += g[0] * o;
                    }
                }
                Op::LogSumExp(a) => {
                    let p = softmax(self.value(*a).data());
                    for (s, pj) in acc(&mut grads, *a, p.len()).iter_mut().zip(&p) {
                        *s += g[0] * pj;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Backward pass accumulated straight into `store`.
    pub fn backward_into(&self, root: NodeId, store: &mut ParamStore) -> Result<(), AutodiffError> {
        self.backward(root)?.accumulate_into(store);
        Ok(())
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Input => "input",
        Op::Param(_) => "param",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::Concat(_) => "concat",
        Op::Stack(_) => "stack",
        Op::Relu(_) => "relu",
        Op::Tanh(_) => "tanh",
        Op::Softmax(_) => "softmax",
        Op::LogSoftmax(_) => "log_softmax",
        Op::Embedding { .. } => "embedding_lookup",
        Op::Gather(..) => "gather",
        Op::CrossEntropy { .. } => "cross_entropy",
        Op::CrossEntropyLogits { .. } => "cross_entropy_logits",
        Op::Sum(_) => "sum",
        Op::Dot(..) => "dot",
        Op::LogSumExp(_) => "logsumexp",
    }
}
