//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tape`] records a graph of matrix operations computed eagerly in f64;
//! [`Tape::backward`] walks it in reverse accumulating gradients. The op set
//! is exactly what the encoder, the contrastive objective, and the
//! summarizer objective need. Every op is smooth, which keeps analytic
//! gradients comparable against central finite differences everywhere.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_COEFF: f64 = 0.044_715;
const LAYER_NORM_EPS: f64 = 1e-5;

enum Op {
    Leaf,
    /// Rows of `table` selected by `ids`.
    Gather { table: NodeId, ids: Vec<u32> },
    ConcatRows(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Adds a constant tensor (e.g. positional encodings); no gradient flows
    /// into the constant.
    AddConst(NodeId),
    /// Adds a `[1, c]` row to every row.
    AddRowBroadcast { a: NodeId, row: NodeId },
    Scale { a: NodeId, factor: f64 },
    MatMul(NodeId, NodeId),
    /// `a * b^T`.
    MatMulNT(NodeId, NodeId),
    Tanh(NodeId),
    Gelu { a: NodeId, inner_tanh: Vec<f64> },
    SoftmaxRows(NodeId),
    LayerNormRows {
        a: NodeId,
        gain: NodeId,
        bias: NodeId,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    SliceCols { a: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    /// Mean over the row range `[from, to)`, giving `[1, c]`.
    MeanRows { a: NodeId, from: usize, to: usize },
    L2NormalizeRows { a: NodeId, norms: Vec<f64> },
    /// Stacks `[1, c]` rows into `[n, c]`.
    StackRows(Vec<NodeId>),
    /// Mean over rows of `-log softmax(row)[diag]`; `probs` caches the row
    /// softmax of the logits.
    CrossEntropyDiagMean { logits: NodeId, probs: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// An eager compute graph with reverse-mode gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Tensor>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the loss w.r.t. a node; valid after [`Tape::backward`].
    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        debug_assert_eq!((v.rows, v.cols), (1, 1));
        v.data[0]
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn gather(&mut self, table: NodeId, ids: &[u32]) -> NodeId {
        let t = self.value(table);
        let cols = t.cols;
        let mut out = Tensor::zeros(ids.len(), cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id as usize));
        }
        self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols, tb.cols, "concat_rows: column mismatch");
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        data.extend_from_slice(&ta.data);
        data.extend_from_slice(&tb.data);
        let out = Tensor::from_vec(ta.rows + tb.rows, ta.cols, data);
        self.push(out, Op::ConcatRows(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert!(ta.same_shape(tb), "add: shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let out = Tensor::from_vec(ta.rows, ta.cols, data);
        self.push(out, Op::Add(a, b))
    }

    pub fn add_const(&mut self, a: NodeId, c: &Tensor) -> NodeId {
        let ta = self.value(a);
        assert!(ta.same_shape(c), "add_const: shape mismatch");
        let data = ta.data.iter().zip(&c.data).map(|(x, y)| x + y).collect();
        let out = Tensor::from_vec(ta.rows, ta.cols, data);
        self.push(out, Op::AddConst(a))
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (ta, tr) = (self.value(a), self.value(row));
        assert_eq!(tr.rows, 1, "bias must be a single row");
        assert_eq!(ta.cols, tr.cols, "bias width mismatch");
        let mut out = ta.clone();
        for r in 0..out.rows {
            for (v, b) in out.row_mut(r).iter_mut().zip(&tr.data) {
                *v += b;
            }
        }
        self.push(out, Op::AddRowBroadcast { a, row })
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x * factor).collect();
        let out = Tensor::from_vec(ta.rows, ta.cols, data);
        self.push(out, Op::Scale { a, factor })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols, tb.rows, "matmul: inner dimension mismatch");
        let mut out = Tensor::zeros(ta.rows, tb.cols);
        matmul_into(&mut out.data, &ta.data, &tb.data, ta.rows, ta.cols, tb.cols);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols, tb.cols, "matmul_nt: inner dimension mismatch");
        let mut out = Tensor::zeros(ta.rows, tb.rows);
        matmul_nt_into(&mut out.data, &ta.data, &tb.data, ta.rows, ta.cols, tb.rows);
        self.push(out, Op::MatMulNT(a, b))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let data = ta.data.iter().map(|&x| libm::tanh(x)).collect();
        let out = Tensor::from_vec(ta.rows, ta.cols, data);
        self.push(out, Op::Tanh(a))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let mut inner_tanh = Vec::with_capacity(ta.len());
        let data = ta
            .data
            .iter()
            .map(|&x| {
                let t = libm::tanh(SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x));
                inner_tanh.push(t);
                0.5 * x * (1.0 + t)
            })
            .collect();
        let out = Tensor::from_vec(ta.rows, ta.cols, data);
        self.push(out, Op::Gelu { a, inner_tanh })
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let mut out = Tensor::zeros(ta.rows, ta.cols);
        for r in 0..ta.rows {
            softmax_row(ta.row(r), out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn layer_norm_rows(&mut self, a: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let (ta, tg, tb) = (self.value(a), self.value(gain), self.value(bias));
        assert_eq!(tg.rows, 1);
        assert_eq!(tb.rows, 1);
        assert_eq!(ta.cols, tg.cols);
        assert_eq!(ta.cols, tb.cols);
        let n = ta.cols as f64;
        let mut normalized = vec![0.0; ta.len()];
        let mut inv_std = vec![0.0; ta.rows];
        let mut out = Tensor::zeros(ta.rows, ta.cols);
        for r in 0..ta.rows {
            let x = ta.row(r);
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            inv_std[r] = is;
            let nr = &mut normalized[r * ta.cols..(r + 1) * ta.cols];
            let or = out.row_mut(r);
            for c in 0..x.len() {
                let xhat = (x[c] - mean) * is;
                nr[c] = xhat;
                or[c] = tg.data[c] * xhat + tb.data[c];
            }
        }
        self.push(
            out,
            Op::LayerNormRows {
                a,
                gain,
                bias,
                normalized,
                inv_std,
            },
        )
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let ta = self.value(a);
        assert!(start + len <= ta.cols, "slice_cols out of range");
        let mut out = Tensor::zeros(ta.rows, len);
        for r in 0..ta.rows {
            out.row_mut(r).copy_from_slice(&ta.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { a, start })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let tp = self.value(p);
            assert_eq!(tp.rows, rows, "concat_cols: row mismatch");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + tp.cols].copy_from_slice(tp.row(r));
            }
            offset += tp.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn mean_rows(&mut self, a: NodeId, from: usize, to: usize) -> NodeId {
        let ta = self.value(a);
        assert!(from < to && to <= ta.rows, "mean_rows range invalid");
        let mut out = Tensor::zeros(1, ta.cols);
        for r in from..to {
            for (o, v) in out.data.iter_mut().zip(ta.row(r)) {
                *o += v;
            }
        }
        let inv = 1.0 / (to - from) as f64;
        for o in &mut out.data {
            *o *= inv;
        }
        self.push(out, Op::MeanRows { a, from, to })
    }

    pub fn l2_normalize_rows(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let mut norms = vec![0.0; ta.rows];
        let mut out = Tensor::zeros(ta.rows, ta.cols);
        for r in 0..ta.rows {
            let x = ta.row(r);
            let norm = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
            norms[r] = norm;
            let or = out.row_mut(r);
            for c in 0..x.len() {
                or[c] = x[c] / norm;
            }
        }
        self.push(out, Op::L2NormalizeRows { a, norms })
    }

    pub fn stack_rows(&mut self, rows: &[NodeId]) -> NodeId {
        assert!(!rows.is_empty());
        let cols = self.value(rows[0]).cols;
        let mut out = Tensor::zeros(rows.len(), cols);
        for (r, &id) in rows.iter().enumerate() {
            let t = self.value(id);
            assert_eq!((t.rows, t.cols), (1, cols), "stack_rows expects [1,c] rows");
            out.row_mut(r).copy_from_slice(&t.data);
        }
        self.push(out, Op::StackRows(rows.to_vec()))
    }

    /// Mean over rows of `-log softmax(row_i)[i]` for a square logit matrix:
    /// the in-batch-negative contrastive objective with positives on the
    /// diagonal.
    pub fn cross_entropy_diag_mean(&mut self, logits: NodeId) -> NodeId {
        let tl = self.value(logits);
        assert_eq!(tl.rows, tl.cols, "contrastive logits must be square");
        let n = tl.rows;
        let mut probs = vec![0.0; tl.len()];
        let mut loss = 0.0;
        for r in 0..n {
            let row = tl.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (c, &v) in row.iter().enumerate() {
                let e = libm::exp(v - max);
                probs[r * n + c] = e;
                sum += e;
            }
            for c in 0..n {
                probs[r * n + c] /= sum;
            }
            loss += max + libm::log(sum) - row[r];
        }
        loss /= n as f64;
        let out = Tensor::from_vec(1, 1, vec![loss]);
        self.push(out, Op::CrossEntropyDiagMean { logits, probs })
    }

    /// Accumulates `d loss / d node` for every node. `loss` must be `[1,1]`.
    pub fn backward(&mut self, loss: NodeId) {
        self.grads = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.rows, n.value.cols))
            .collect();
        self.grads[loss.0].data[0] = 1.0;

        for idx in (0..=loss.0).rev() {
            // Split borrows: gradient of the current node vs. its parents.
            let (upstream, node) = {
                let g = core::mem::replace(&mut self.grads[idx], Tensor::zeros(0, 0));
                (g, &self.nodes[idx])
            };
            match &node.op {
                Op::Leaf => {}
                Op::Gather { table, ids } => {
                    let cols = upstream.cols;
                    let gt = &mut self.grads[table.0];
                    for (r, &id) in ids.iter().enumerate() {
                        let src = &upstream.data[r * cols..(r + 1) * cols];
                        for (g, v) in gt.row_mut(id as usize).iter_mut().zip(src) {
                            *g += v;
                        }
                    }
                }
                Op::ConcatRows(a, b) => {
                    let rows_a = self.nodes[a.0].value.rows;
                    let cols = upstream.cols;
                    let (a, b) = (*a, *b);
                    for (g, v) in self.grads[a.0]
                        .data
                        .iter_mut()
                        .zip(&upstream.data[..rows_a * cols])
                    {
                        *g += v;
                    }
                    for (g, v) in self.grads[b.0]
                        .data
                        .iter_mut()
                        .zip(&upstream.data[rows_a * cols..])
                    {
                        *g += v;
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    for (g, v) in self.grads[a.0].data.iter_mut().zip(&upstream.data) {
                        *g += v;
                    }
                    for (g, v) in self.grads[b.0].data.iter_mut().zip(&upstream.data) {
                        *g += v;
                    }
                }
                Op::AddConst(a) => {
                    for (g, v) in self.grads[a.0].data.iter_mut().zip(&upstream.data) {
                        *g += v;
                    }
                }
                Op::AddRowBroadcast { a, row } => {
                    let (a, row) = (*a, *row);
                    for (g, v) in self.grads[a.0].data.iter_mut().zip(&upstream.data) {
                        *g += v;
                    }
                    let cols = upstream.cols;
                    let gr = &mut self.grads[row.0];
                    for r in 0..upstream.rows {
                        for (g, v) in gr.data.iter_mut().zip(&upstream.data[r * cols..]) {
                            *g += v;
                        }
                    }
                }
                Op::Scale { a, factor } => {
                    let f = *factor;
                    for (g, v) in self.grads[a.0].data.iter_mut().zip(&upstream.data) {
                        *g += f * v;
                    }
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (m, k) = (self.nodes[a.0].value.rows, self.nodes[a.0].value.cols);
                    let n = self.nodes[b.0].value.cols;
                    // d_a += upstream * b^T
                    {
                        let bdata = self.nodes[b.0].value.data.clone();
                        matmul_nt_into(
                            &mut self.grads[a.0].data,
                            &upstream.data,
                            &bdata,
                            m,
                            n,
                            k,
                        );
                    }
                    // d_b += a^T * upstream
                    {
                        let adata = self.nodes[a.0].value.data.clone();
                        matmul_tn_into(
                            &mut self.grads[b.0].data,
                            &adata,
                            &upstream.data,
                            k,
                            m,
                            n,
                        );
                    }
                }
                Op::MatMulNT(a, b) => {
                    let (a, b) = (*a, *b);
                    let (m, k) = (self.nodes[a.0].value.rows, self.nodes[a.0].value.cols);
                    let n = self.nodes[b.0].value.rows;
                    // out = a * b^T, upstream: [m, n]
                    // d_a += upstream * b
                    {
                        let bdata = self.nodes[b.0].value.data.clone();
                        matmul_into(&mut self.grads[a.0].data, &upstream.data, &bdata, m, n, k);
                    }
                    // d_b += upstream^T * a
                    {
                        let adata = self.nodes[a.0].value.data.clone();
                        matmul_tn_into(
                            &mut self.grads[b.0].data,
                            &upstream.data,
                            &adata,
                            n,
                            m,
                            k,
                        );
                    }
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let y = &node.value.data;
                    for i in 0..y.len() {
                        self.grads[a.0].data[i] += (1.0 - y[i] * y[i]) * upstream.data[i];
                    }
                }
                Op::Gelu { a, inner_tanh } => {
                    let a = *a;
                    let x = &self.nodes[a.0].value.data;
                    let mut local = vec![0.0; x.len()];
                    for i in 0..x.len() {
                        let t = inner_tanh[i];
                        let xi = x[i];
                        let dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * xi * xi);
                        local[i] = (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * dinner)
                            * upstream.data[i];
                    }
                    for (g, v) in self.grads[a.0].data.iter_mut().zip(&local) {
                        *g += v;
                    }
                }
                Op::SoftmaxRows(a) => {
                    let a = *a;
                    let y = &node.value;
                    let mut local = Tensor::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let yr = y.row(r);
                        let ur = &upstream.data[r * y.cols..(r + 1) * y.cols];
                        let dotp: f64 = yr.iter().zip(ur).map(|(p, u)| p * u).sum();
                        let lr = local.row_mut(r);
                        for c in 0..y.cols {
                            lr[c] = yr[c] * (ur[c] - dotp);
                        }
                    }
                    for (g, v) in self.grads[a.0].data.iter_mut().zip(&local.data) {
                        *g += v;
                    }
                }
                Op::LayerNormRows {
                    a,
                    gain,
                    bias,
                    normalized,
                    inv_std,
                } => {
                    let (a, gain, bias) = (*a, *gain, *bias);
                    let rows = upstream.rows;
                    let cols = upstream.cols;
                    let gdata = self.nodes[gain.0].value.data.clone();
                    let mut da = vec![0.0; rows * cols];
                    let mut dg = vec![0.0; cols];
                    let mut db = vec![0.0; cols];
                    for r in 0..rows {
                        let ur = &upstream.data[r * cols..(r + 1) * cols];
                        let xh = &normalized[r * cols..(r + 1) * cols];
                        let mut sum_gd = 0.0;
                        let mut sum_gdx = 0.0;
                        for c in 0..cols {
                            let gd = gdata[c] * ur[c];
                            sum_gd += gd;
                            sum_gdx += gd * xh[c];
                            dg[c] += ur[c] * xh[c];
                            db[c] += ur[c];
                        }
                        let nf = cols as f64;
                        let dr = &mut da[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            let gd = gdata[c] * ur[c];
                            dr[c] = (gd - sum_gd / nf - xh[c] * sum_gdx / nf) * inv_std[r];
                        }
                    }
                    for (g, v) in self.grads[a.0].data.iter_mut().zip(&da) {
                        *g += v;
                    }
                    for (g, v) in self.grads[gain.0].data.iter_mut().zip(&dg) {
                        *g += v;
                    }
                    for (g, v) in self.grads[bias.0].data.iter_mut().zip(&db) {
                        *g += v;
                    }
                }
                Op::SliceCols { a, start } => {
                    let (a, start) = (*a, *start);
                    let src_cols = self.nodes[a.0].value.cols;
                    let ga = &mut self.grads[a.0];
                    for r in 0..upstream.rows {
                        let ur = &upstream.data[r * upstream.cols..(r + 1) * upstream.cols];
                        let gr = &mut ga.data[r * src_cols + start..r * src_cols + start + ur.len()];
                        for (g, v) in gr.iter_mut().zip(ur) {
                            *g += v;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.nodes[p.0].value.cols;
                        let gp = &mut self.grads[p.0];
                        for r in 0..upstream.rows {
                            let src =
                                &upstream.data[r * upstream.cols + offset..r * upstream.cols + offset + pc];
                            for (g, v) in gp.row_mut(r).iter_mut().zip(src) {
                                *g += v;
                            }
                        }
                        offset += pc;
                    }
                }
                Op::MeanRows { a, from, to } => {
                    let (a, from, to) = (*a, *from, *to);
                    let inv = 1.0 / (to - from) as f64;
                    let ga = &mut self.grads[a.0];
                    for r in from..to {
                        for (g, v) in ga.row_mut(r).iter_mut().zip(&upstream.data) {
                            *g += inv * v;
                        }
                    }
                }
                Op::L2NormalizeRows { a, norms } => {
                    let a = *a;
                    let y = &node.value;
                    let mut local = Tensor::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let yr = y.row(r);
                        let ur = &upstream.data[r * y.cols..(r + 1) * y.cols];
                        let dotp: f64 = yr.iter().zip(ur).map(|(p, u)| p * u).sum();
                        let lr = local.row_mut(r);
                        for c in 0..y.cols {
                            lr[c] = (ur[c] - yr[c] * dotp) / norms[r];
                        }
                    }
                    for (g, v) in self.grads[a.0].data.iter_mut().zip(&local.data) {
                        *g += v;
                    }
                }
                Op::StackRows(rows) => {
                    let rows = rows.clone();
                    for (r, id) in rows.into_iter().enumerate() {
                        let src = &upstream.data[r * upstream.cols..(r + 1) * upstream.cols];
                        for (g, v) in self.grads[id.0].data.iter_mut().zip(src) {
                            *g += v;
                        }
                    }
                }
                Op::CrossEntropyDiagMean { logits, probs } => {
                    let logits = *logits;
                    let n = self.nodes[logits.0].value.rows;
                    let scale = upstream.data[0] / n as f64;
                    let gl = &mut self.grads[logits.0];
                    for r in 0..n {
                        for c in 0..n {
                            let delta = if r == c { 1.0 } else { 0.0 };
                            gl.data[r * n + c] += (probs[r * n + c] - delta) * scale;
                        }
                    }
                }
            }
            self.grads[idx] = upstream;
        }
    }
}

/// Numerically stable softmax of one row.
pub fn softmax_row(input: &[f64], out: &mut [f64]) {
    let max = input.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(input) {
        let e = libm::exp(v - max);
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}
