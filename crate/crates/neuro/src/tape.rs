//! Reverse-mode differentiation over a linear tape of matrix operations.

use rand::Rng;

use crate::mat::{gemm_into, Mat, Scalar};
use crate::params::{Grads, ParamStore};

pub type Node = usize;

pub const LAYER_NORM_EPS: f64 = 1e-5;

enum Op<F> {
    Leaf,
    Param(usize),
    MatMul(Node, Node),
    MatMulNt(Node, Node),
    Add(Node, Node),
    AddRow(Node, Node),
    Mul(Node, Node),
    Scale(Node, F),
    Gelu(Node),
    LayerNorm { x: Node, g: Node, b: Node, xhat: Mat<F>, rstd: Vec<F> },
    Softmax(Node),
    GatherRows { table: Node, ids: Vec<usize> },
    GatherCols { x: Node, idx: Vec<usize> },
    SliceRows { x: Node, start: usize },
    SliceCols { x: Node, start: usize },
    ConcatRows(Vec<Node>),
    ConcatCols(Vec<Node>),
    CrossEntropy { logits: Node, targets: Vec<Option<usize>>, probs: Mat<F> },
    Sum(Node),
    Dropout { x: Node, mask: Vec<F> },
}

/// Marks an absent source column in [`Tape::gather_cols`].
pub const NO_COL: usize = usize::MAX;

pub struct Tape<'a, F: Scalar> {
    params: &'a ParamStore<F>,
    ops: Vec<Op<F>>,
    values: Vec<Option<Mat<F>>>,
    param_nodes: Vec<Option<Node>>,
}

fn gelu_parts(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4;
    const A: f64 = 0.044_715;
    let u = C * (x + A * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * A * x * x);
    (y, dy)
}

impl<'a, F: Scalar> Tape<'a, F> {
    pub fn new(params: &'a ParamStore<F>) -> Self {
        Tape { params, ops: Vec::new(), values: Vec::new(), param_nodes: vec![None; params.len()] }
    }

    pub fn params(&self) -> &'a ParamStore<F> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, n: Node) -> &Mat<F> {
        match (&self.ops[n], &self.values[n]) {
            (_, Some(v)) => v,
            (Op::Param(p), None) => self.params.mat(*p),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, op: Op<F>, value: Mat<F>) -> Node {
        self.ops.push(op);
        self.values.push(Some(value));
        self.ops.len() - 1
    }

    pub fn constant(&mut self, m: Mat<F>) -> Node {
        self.push(Op::Leaf, m)
    }

    pub fn param(&mut self, id: usize) -> Node {
        if let Some(n) = self.param_nodes[id] {
            return n;
        }
        self.ops.push(Op::Param(id));
        self.values.push(None);
        let n = self.ops.len() - 1;
        self.param_nodes[id] = Some(n);
        n
    }

    pub fn matmul(&mut self, a: Node, b: Node) -> Node {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Node, b: Node) -> Node {
        let v = self.value(a).matmul_nt(self.value(b));
        self.push(Op::MatMulNt(a, b), v)
    }

    pub fn add(&mut self, a: Node, b: Node) -> Node {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(Op::Add(a, b), v)
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Node, row: Node) -> Node {
        let r = self.value(row);
        assert_eq!((1, self.value(a).cols), r.shape(), "add_row shape");
        let mut v = self.value(a).clone();
        let cols = v.cols;
        for chunk in v.data.chunks_mut(cols) {
            for (x, &b) in chunk.iter_mut().zip(&r.data) {
                *x = *x + b;
            }
        }
        self.push(Op::AddRow(a, row), v)
    }

    pub fn mul(&mut self, a: Node, b: Node) -> Node {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape");
        let v = Mat::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(&p, &q)| p * q).collect());
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: Node, s: F) -> Node {
        let x = self.value(a);
        let v = Mat::from_vec(x.rows, x.cols, x.data.iter().map(|&p| p * s).collect());
        self.push(Op::Scale(a, s), v)
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Node) -> Node {
        let x = self.value(a);
        let v = Mat::from_vec(x.rows, x.cols, x.data.iter().map(|&p| F::of(gelu_parts(p.f64()).0)).collect());
        self.push(Op::Gelu(a), v)
    }

    /// Row-wise normalization with gain and bias rows.
    pub fn layer_norm(&mut self, x: Node, g: Node, b: Node) -> Node {
        let xv = self.value(x);
        let (gv, bv) = (self.value(g), self.value(b));
        let (rows, cols) = xv.shape();
        assert_eq!(gv.shape(), (1, cols));
        assert_eq!(bv.shape(), (1, cols));
        let n = F::of(cols as f64);
        let eps = F::of(LAYER_NORM_EPS);
        let mut xhat = Mat::zeros(rows, cols);
        let mut out = Mat::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<F>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let s = F::one() / (var + eps).sqrt();
            rstd.push(s);
            for c in 0..cols {
                let h = (row[c] - mean) * s;
                xhat.data[r * cols + c] = h;
                out.data[r * cols + c] = h * gv.data[c] + bv.data[c];
            }
        }
        self.push(Op::LayerNorm { x, g, b, xhat, rstd }, out)
    }

    /// Row-wise softmax restricted to entries where `allowed` is true.
    /// Rows with no allowed entry become zero.
    pub fn softmax(&mut self, a: Node, allowed: Option<&[bool]>) -> Node {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        if let Some(m) = allowed {
            assert_eq!(m.len(), rows * cols);
        }
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let ok = |c: usize| allowed.is_none_or(|m| m[r * cols + c]);
            let row = x.row(r);
            let mut max = F::neg_infinity();
            for (c, &v) in row.iter().enumerate() {
                if ok(c) && v > max {
                    max = v;
                }
            }
            if max == F::neg_infinity() {
                continue;
            }
            let mut total = F::zero();
            let o = out.row_mut(r);
            for c in 0..cols {
                if ok(c) {
                    o[c] = (row[c] - max).exp();
                    total = total + o[c];
                }
            }
            o.iter_mut().for_each(|v| *v = *v / total);
        }
        self.push(Op::Softmax(a), out)
    }

    /// Row `i` of the result is row `ids[i]` of `table`.
    pub fn gather_rows(&mut self, table: Node, ids: &[usize]) -> Node {
        let t = self.value(table);
        let mut out = Mat::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(Op::GatherRows { table, ids: ids.to_vec() }, out)
    }

    /// `out[r][c] = x[r][idx[r * cols + c]]`, zero where the index is [`NO_COL`].
    pub fn gather_cols(&mut self, x: Node, idx: Vec<usize>, cols: usize) -> Node {
        let xv = self.value(x);
        let rows = xv.rows;
        assert_eq!(idx.len(), rows * cols);
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let s = idx[r * cols + c];
                if s != NO_COL {
                    out.data[r * cols + c] = xv.at(r, s);
                }
            }
        }
        self.push(Op::GatherCols { x, idx }, out)
    }

    pub fn slice_rows(&mut self, x: Node, start: usize, len: usize) -> Node {
        let xv = self.value(x);
        assert!(start + len <= xv.rows, "slice_rows out of range");
        let v = Mat::from_vec(len, xv.cols, xv.data[start * xv.cols..(start + len) * xv.cols].to_vec());
        self.push(Op::SliceRows { x, start }, v)
    }

    pub fn slice_cols(&mut self, x: Node, start: usize, len: usize) -> Node {
        let xv = self.value(x);
        assert!(start + len <= xv.cols, "slice_cols out of range");
        let mut v = Mat::zeros(xv.rows, len);
        for r in 0..xv.rows {
            v.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        self.push(Op::SliceCols { x, start }, v)
    }

    pub fn concat_rows(&mut self, parts: &[Node]) -> Node {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols, cols, "concat_rows width");
            data.extend_from_slice(&v.data);
        }
        let rows = data.len() / cols.max(1);
        self.push(Op::ConcatRows(parts.to_vec()), Mat::from_vec(rows, cols, data))
    }

    pub fn concat_cols(&mut self, parts: &[Node]) -> Node {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows, rows, "concat_cols height");
            for r in 0..rows {
                out.row_mut(r)[off..off + v.cols].copy_from_slice(v.row(r));
            }
            off += v.cols;
        }
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    /// Summed negative log-likelihood over rows that carry a target.
    pub fn cross_entropy(&mut self, logits: Node, targets: &[Option<usize>]) -> Node {
        let x = self.value(logits);
        assert_eq!(x.rows, targets.len());
        let mut probs = Mat::zeros(x.rows, x.cols);
        let mut total = 0.0f64;
        for (r, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            let row = x.row(r);
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let z: F = row.iter().map(|&v| (v - max).exp()).sum();
            let lz = z.ln() + max;
            total += (lz - row[t]).f64();
            for (p, &v) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (v - lz).exp();
            }
        }
        let targets = targets.to_vec();
        self.push(Op::CrossEntropy { logits, targets, probs }, Mat::scalar(F::of(total)))
    }

    pub fn sum(&mut self, a: Node) -> Node {
        let v = self.value(a).data.iter().copied().sum::<F>();
        self.push(Op::Sum(a), Mat::scalar(v))
    }

    /// Inverted dropout; identity when `rate` is zero.
    pub fn dropout<R: Rng>(&mut self, a: Node, rate: f64, rng: &mut R) -> Node {
        if rate <= 0.0 {
            return a;
        }
        let x = self.value(a);
        let keep = F::of(1.0 / (1.0 - rate));
        let mask: Vec<F> = (0..x.len()).map(|_| if rng.random::<f64>() < rate { F::zero() } else { keep }).collect();
        let v = Mat::from_vec(x.rows, x.cols, x.data.iter().zip(&mask).map(|(&p, &m)| p * m).collect());
        self.push(Op::Dropout { x: a, mask }, v)
    }

    /// Gradients of the scalar `root`, scaled by `seed`, with respect to every parameter.
    pub fn backward(&self, root: Node, seed: F) -> Grads<F> {
        let mut out = Grads::zeros_like(self.params);
        self.backward_into(root, seed, &mut out);
        out
    }

    pub fn backward_into(&self, root: Node, seed: F, out: &mut Grads<F>) {
        assert_eq!(self.value(root).shape(), (1, 1), "backward from a scalar");
        let mut grads: Vec<Option<Mat<F>>> = (0..self.ops.len()).map(|_| None).collect();
        grads[root] = Some(Mat::scalar(seed));
        for n in (0..=root).rev() {
            let Some(g) = grads[n].take() else { continue };
            self.step_back(n, &g, &mut grads, out);
        }
    }

    fn step_back(&self, n: Node, g: &Mat<F>, grads: &mut [Option<Mat<F>>], out: &mut Grads<F>) {
        let shape_of = |i: Node| self.value(i).shape();
        macro_rules! acc {
            ($i:expr) => {{
                let i = $i;
                if grads[i].is_none() {
                    let (r, c) = shape_of(i);
                    grads[i] = Some(Mat::zeros(r, c));
                }
                grads[i].as_mut().unwrap()
            }};
        }
        match &self.ops[n] {
            Op::Leaf => {}
            Op::Param(p) => out.mats[*p].add_assign(g),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                gemm_into(g, false, bv, true, F::one(), F::one(), acc!(*a));
                gemm_into(av, true, g, false, F::one(), F::one(), acc!(*b));
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                gemm_into(g, false, bv, false, F::one(), F::one(), acc!(*a));
                gemm_into(g, true, av, false, F::one(), F::one(), acc!(*b));
            }
            Op::Add(a, b) => {
                acc!(*a).add_assign(g);
                acc!(*b).add_assign(g);
            }
            Op::AddRow(a, row) => {
                acc!(*a).add_assign(g);
                let gr = acc!(*row);
                for chunk in g.data.chunks(g.cols) {
                    for (s, &v) in gr.data.iter_mut().zip(chunk) {
                        *s = *s + v;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = acc!(*a);
                for ((s, &gv), &y) in ga.data.iter_mut().zip(&g.data).zip(&bv.data) {
                    *s = *s + gv * y;
                }
                let gb = acc!(*b);
                for ((s, &gv), &x) in gb.data.iter_mut().zip(&g.data).zip(&av.data) {
                    *s = *s + gv * x;
                }
            }
            Op::Scale(a, k) => {
                let ga = acc!(*a);
                for (s, &gv) in ga.data.iter_mut().zip(&g.data) {
                    *s = *s + gv * *k;
                }
            }
            Op::Gelu(a) => {
                let av = self.value(*a);
                let ga = acc!(*a);
                for ((s, &gv), &x) in ga.data.iter_mut().zip(&g.data).zip(&av.data) {
                    *s = *s + gv * F::of(gelu_parts(x.f64()).1);
                }
            }
            Op::LayerNorm { x, g: gain, b, xhat, rstd } => {
                let gv = self.value(*gain).data.clone();
                let (rows, cols) = xhat.shape();
                let gb = acc!(*b);
                for chunk in g.data.chunks(cols) {
                    for (s, &v) in gb.data.iter_mut().zip(chunk) {
                        *s = *s + v;
                    }
                }
                let gg = acc!(*gain);
                for (chunk, h) in g.data.chunks(cols).zip(xhat.data.chunks(cols)) {
                    for ((s, &v), &hv) in gg.data.iter_mut().zip(chunk).zip(h) {
                        *s = *s + v * hv;
                    }
                }
                let gx = acc!(*x);
                let n = F::of(cols as f64);
                let mut dh = vec![F::zero(); cols];
                for r in 0..rows {
                    let gr = g.row(r);
                    let hr = xhat.row(r);
                    let mut m1 = F::zero();
                    let mut m2 = F::zero();
                    for c in 0..cols {
                        dh[c] = gr[c] * gv[c];
                        m1 = m1 + dh[c];
                        m2 = m2 + dh[c] * hr[c];
                    }
                    m1 = m1 / n;
                    m2 = m2 / n;
                    let o = gx.row_mut(r);
                    for c in 0..cols {
                        o[c] = o[c] + rstd[r] * (dh[c] - m1 - hr[c] * m2);
                    }
                }
            }
            Op::Softmax(a) => {
                let y = self.value(n);
                let cols = y.cols;
                let ga = acc!(*a);
                for r in 0..y.rows {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: F = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                    let o = ga.row_mut(r);
                    for c in 0..cols {
                        o[c] = o[c] + yr[c] * (gr[c] - dot);
                    }
                }
            }
            Op::GatherRows { table, ids } => {
                let gt = acc!(*table);
                for (r, &id) in ids.iter().enumerate() {
                    for (s, &v) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                        *s = *s + v;
                    }
                }
            }
            Op::GatherCols { x, idx } => {
                let cols = g.cols;
                let gx = acc!(*x);
                let xc = gx.cols;
                for r in 0..g.rows {
                    for c in 0..cols {
                        let s = idx[r * cols + c];
                        if s != NO_COL {
                            gx.data[r * xc + s] = gx.data[r * xc + s] + g.data[r * cols + c];
                        }
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let gx = acc!(*x);
                let c = gx.cols;
                for (s, &v) in gx.data[start * c..].iter_mut().zip(&g.data) {
                    *s = *s + v;
                }
            }
            Op::SliceCols { x, start } => {
                let gx = acc!(*x);
                for r in 0..g.rows {
                    for (s, &v) in gx.row_mut(r)[*start..].iter_mut().zip(g.row(r)) {
                        *s = *s + v;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let gp = acc!(p);
                    let len = gp.len();
                    for (s, &v) in gp.data.iter_mut().zip(&g.data[off..off + len]) {
                        *s = *s + v;
                    }
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let gp = acc!(p);
                    let w = gp.cols;
                    for r in 0..g.rows {
                        for (s, &v) in gp.row_mut(r).iter_mut().zip(&g.row(r)[off..off + w]) {
                            *s = *s + v;
                        }
                    }
                    off += w;
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let up = g.data[0];
                let gl = acc!(*logits);
                for (r, t) in targets.iter().enumerate() {
                    let Some(t) = *t else { continue };
                    let o = gl.row_mut(r);
                    for (c, (s, &p)) in o.iter_mut().zip(probs.row(r)).enumerate() {
                        let d = if c == t { p - F::one() } else { p };
                        *s = *s + up * d;
                    }
                }
            }
            Op::Sum(a) => {
                let up = g.data[0];
                acc!(*a).data.iter_mut().for_each(|s| *s = *s + up);
            }
            Op::Dropout { x, mask } => {
                let gx = acc!(*x);
                for ((s, &v), &m) in gx.data.iter_mut().zip(&g.data).zip(mask) {
                    *s = *s + v * m;
                }
            }
        }
    }
}
