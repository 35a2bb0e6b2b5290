//! Reverse-mode differentiation over a tape of fused operations.
//!
//! A [`Graph`] borrows the parameters immutably; nodes are appended in
//! topological order and [`Graph::backward`] walks them in reverse,
//! accumulating parameter gradients into a fresh [`Grads`].

use crate::params::{Grads, ParamId, ParamStore};

pub type NodeId = usize;

/// Logit assigned to masked entries.
pub const MASKED: f64 = -1e9;

/// Probability floor applied to the cross-entropy target.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug)]
struct LstmCache {
    /// Activated gates `[i, f, g, o]` per time index, `4 * hidden` each.
    gates: Vec<f64>,
    cell: Vec<f64>,
    cell_tanh: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Row {
        p: ParamId,
        row: usize,
    },
    Affine {
        w: ParamId,
        b: ParamId,
        x: NodeId,
        rows: usize,
        input: usize,
        output: usize,
    },
    Lstm {
        w: ParamId,
        b: ParamId,
        x: NodeId,
        steps: usize,
        input: usize,
        hidden: usize,
        reverse: bool,
        cache: LstmCache,
    },
    ConcatCols {
        a: NodeId,
        b: NodeId,
        rows: usize,
        ca: usize,
        cb: usize,
    },
    Concat(Vec<NodeId>),
    Slice {
        x: NodeId,
        start: usize,
    },
    Tanh(NodeId),
    MatVec {
        mat: NodeId,
        x: NodeId,
        rows: usize,
        cols: usize,
    },
    Mask {
        x: NodeId,
        keep: Vec<bool>,
    },
    CrossEntropy {
        logits: NodeId,
        target: usize,
        probs: Vec<f64>,
    },
    Mean(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    clipped: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Graph<'p> {
        Graph {
            params,
            nodes: Vec::new(),
            clipped: 0,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn len(&self, id: NodeId) -> usize {
        self.nodes[id].value.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Cross-entropy evaluations whose target probability fell below
    /// [`PROB_FLOOR`].
    pub fn clipped_losses(&self) -> usize {
        self.clipped
    }

    fn push(&mut self, value: Vec<f64>, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    fn grad_of(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Input, false)
    }

    pub fn param(&mut self, p: ParamId) -> NodeId {
        let value = self.params.data(p).to_vec();
        self.push(value, Op::Param(p), true)
    }

    /// Row `row` of a matrix parameter.
    pub fn row(&mut self, p: ParamId, row: usize) -> NodeId {
        let e = self.params.entry(p);
        let width = e.shape[1];
        let value = e.data[row * width..(row + 1) * width].to_vec();
        self.push(value, Op::Row { p, row }, true)
    }

    /// Row-wise `x W + b` for `x` of shape `rows x input`, `W` of shape
    /// `input x output`.
    pub fn affine(&mut self, w: ParamId, b: ParamId, x: NodeId) -> NodeId {
        let shape = &self.params.entry(w).shape;
        let (input, output) = (shape[0], shape[1]);
        let xv = &self.nodes[x].value;
        assert_eq!(xv.len() % input, 0, "affine input width");
        let rows = xv.len() / input;
        let wv = self.params.data(w);
        let bv = self.params.data(b);
        let mut y = Vec::with_capacity(rows * output);
        for r in 0..rows {
            let mut acc = bv.to_vec();
            for (k, &xk) in xv[r * input..(r + 1) * input].iter().enumerate() {
                if xk != 0.0 {
                    axpy(xk, &wv[k * output..(k + 1) * output], &mut acc);
                }
            }
            y.extend(acc);
        }
        self.push(
            y,
            Op::Affine {
                w,
                b,
                x,
                rows,
                input,
                output,
            },
            true,
        )
    }

    /// One LSTM direction over `x` of shape `steps x input`, from a zero
    /// state. Output row `t` is the hidden state after consuming row `t`;
    /// a reversed pass consumes rows from last to first.
    pub fn lstm(&mut self, w: ParamId, b: ParamId, x: NodeId, reverse: bool) -> NodeId {
        let shape = &self.params.entry(w).shape;
        let hidden = shape[1] / 4;
        let input = shape[0] - hidden;
        let xv = &self.nodes[x].value;
        assert_eq!(xv.len() % input, 0, "lstm input width");
        let steps = xv.len() / input;
        let wv = self.params.data(w);
        let bv = self.params.data(b);
        let g4 = 4 * hidden;
        let mut out = vec![0.0; steps * hidden];
        let mut gates = vec![0.0; steps * g4];
        let mut cell = vec![0.0; steps * hidden];
        let mut cell_tanh = vec![0.0; steps * hidden];
        let mut h = vec![0.0; hidden];
        let mut c = vec![0.0; hidden];
        for s in 0..steps {
            let t = if reverse { steps - 1 - s } else { s };
            let mut pre = bv.to_vec();
            for (k, &xk) in xv[t * input..(t + 1) * input].iter().enumerate() {
                if xk != 0.0 {
                    axpy(xk, &wv[k * g4..(k + 1) * g4], &mut pre);
                }
            }
            for (j, &hj) in h.iter().enumerate() {
                if hj != 0.0 {
                    let k = input + j;
                    axpy(hj, &wv[k * g4..(k + 1) * g4], &mut pre);
                }
            }
            let gt = &mut gates[t * g4..(t + 1) * g4];
            for j in 0..hidden {
                let i = sigmoid(pre[j]);
                let f = sigmoid(pre[hidden + j]);
                let g = pre[2 * hidden + j].tanh();
                let o = sigmoid(pre[3 * hidden + j]);
                c[j] = f * c[j] + i * g;
                let tc = c[j].tanh();
                h[j] = o * tc;
                gt[j] = i;
                gt[hidden + j] = f;
                gt[2 * hidden + j] = g;
                gt[3 * hidden + j] = o;
                cell[t * hidden + j] = c[j];
                cell_tanh[t * hidden + j] = tc;
            }
            out[t * hidden..(t + 1) * hidden].copy_from_slice(&h);
        }
        let needs = true;
        self.push(
            out,
            Op::Lstm {
                w,
                b,
                x,
                steps,
                input,
                hidden,
                reverse,
                cache: LstmCache {
                    gates,
                    cell,
                    cell_tanh,
                },
            },
            needs,
        )
    }

    /// Row-wise concatenation of two matrices with equal row counts.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId, rows: usize) -> NodeId {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        assert!(rows > 0 && av.len() % rows == 0 && bv.len() % rows == 0, "concat_cols rows");
        let (ca, cb) = (av.len() / rows, bv.len() / rows);
        let mut y = Vec::with_capacity(av.len() + bv.len());
        for r in 0..rows {
            y.extend_from_slice(&av[r * ca..(r + 1) * ca]);
            y.extend_from_slice(&bv[r * cb..(r + 1) * cb]);
        }
        let needs = self.grad_of(a) || self.grad_of(b);
        self.push(y, Op::ConcatCols { a, b, rows, ca, cb }, needs)
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> NodeId {
        let mut y = Vec::new();
        for &x in xs {
            y.extend_from_slice(&self.nodes[x].value);
        }
        let needs = xs.iter().any(|&x| self.grad_of(x));
        self.push(y, Op::Concat(xs.to_vec()), needs)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let y = self.nodes[x].value[start..start + len].to_vec();
        let needs = self.grad_of(x);
        self.push(y, Op::Slice { x, start }, needs)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let y = self.nodes[x].value.iter().map(|v| v.tanh()).collect();
        let needs = self.grad_of(x);
        self.push(y, Op::Tanh(x), needs)
    }

    /// `mat x` for `mat` of shape `rows x cols` stored row-major.
    pub fn mat_vec(&mut self, mat: NodeId, x: NodeId) -> NodeId {
        let cols = self.nodes[x].value.len();
        let mv = &self.nodes[mat].value;
        assert!(cols > 0 && mv.len() % cols == 0, "mat_vec shape");
        let rows = mv.len() / cols;
        let xv = &self.nodes[x].value;
        let y = (0..rows).map(|r| dot(&mv[r * cols..(r + 1) * cols], xv)).collect();
        let needs = self.grad_of(mat) || self.grad_of(x);
        self.push(y, Op::MatVec { mat, x, rows, cols }, needs)
    }

    /// Replaces entries with `keep[i] == false` by [`MASKED`].
    pub fn mask(&mut self, x: NodeId, keep: Vec<bool>) -> NodeId {
        let xv = &self.nodes[x].value;
        assert_eq!(xv.len(), keep.len(), "mask length");
        let y = xv
            .iter()
            .zip(&keep)
            .map(|(&v, &k)| if k { v } else { MASKED })
            .collect();
        let needs = self.grad_of(x);
        self.push(y, Op::Mask { x, keep }, needs)
    }

    /// `-ln softmax(logits)[target]`, with the probability floored at
    /// [`PROB_FLOOR`].
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> NodeId {
        let probs = softmax(&self.nodes[logits].value);
        let p = probs[target];
        let loss = if p < PROB_FLOOR {
            self.clipped += 1;
            -PROB_FLOOR.ln()
        } else {
            -p.ln()
        };
        let needs = self.grad_of(logits);
        self.push(vec![loss], Op::CrossEntropy { logits, target, probs }, needs)
    }

    pub fn mean(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty(), "mean of nothing");
        let s: f64 = xs.iter().map(|&x| self.nodes[x].value[0]).sum();
        let needs = xs.iter().any(|&x| self.grad_of(x));
        self.push(vec![s / xs.len() as f64], Op::Mean(xs.to_vec()), needs)
    }

    /// Gradients of the scalar node `out` with respect to every parameter.
    pub fn backward(&self, out: NodeId) -> Grads {
        assert_eq!(self.nodes[out].value.len(), 1, "backward from a scalar");
        let mut pg = self.params.zero_grads();
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); out + 1];
        grads[out] = vec![1.0];
        for id in (0..=out).rev() {
            let g = std::mem::take(&mut grads[id]);
            if g.is_empty() || !self.nodes[id].needs_grad {
                continue;
            }
            self.backward_node(id, &g, &mut grads, &mut pg);
        }
        pg
    }

    fn acc<'a>(&self, grads: &'a mut [Vec<f64>], id: NodeId) -> Option<&'a mut Vec<f64>> {
        if !self.nodes[id].needs_grad {
            return None;
        }
        let g = &mut grads[id];
        if g.is_empty() {
            *g = vec![0.0; self.nodes[id].value.len()];
        }
        Some(g)
    }

    fn backward_node(&self, id: NodeId, g: &[f64], grads: &mut [Vec<f64>], pg: &mut Grads) {
        match &self.nodes[id].op {
            Op::Input => {}
            Op::Param(p) => axpy(1.0, g, &mut pg.data[*p]),
            Op::Row { p, row } => {
                let w = g.len();
                axpy(1.0, g, &mut pg.data[*p][row * w..(row + 1) * w]);
            }
            Op::Affine {
                w,
                b,
                x,
                rows,
                input,
                output,
            } => {
                let (input, output) = (*input, *output);
                let xv = &self.nodes[*x].value;
                let wv = self.params.data(*w);
                for r in 0..*rows {
                    let gr = &g[r * output..(r + 1) * output];
                    axpy(1.0, gr, &mut pg.data[*b]);
                    let gw = &mut pg.data[*w];
                    for (k, &xk) in xv[r * input..(r + 1) * input].iter().enumerate() {
                        if xk != 0.0 {
                            axpy(xk, gr, &mut gw[k * output..(k + 1) * output]);
                        }
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    for r in 0..*rows {
                        let gr = &g[r * output..(r + 1) * output];
                        for k in 0..input {
                            gx[r * input + k] += dot(&wv[k * output..(k + 1) * output], gr);
                        }
                    }
                }
            }
            Op::Lstm {
                w,
                b,
                x,
                steps,
                input,
                hidden,
                reverse,
                cache,
            } => self.lstm_backward(
                (*w, *b, *x),
                (*steps, *input, *hidden, *reverse),
                cache,
                g,
                grads,
                pg,
                id,
            ),
            Op::ConcatCols { a, b, rows, ca, cb } => {
                let (ca, cb) = (*ca, *cb);
                if let Some(ga) = self.acc(grads, *a) {
                    for r in 0..*rows {
                        axpy(1.0, &g[r * (ca + cb)..r * (ca + cb) + ca], &mut ga[r * ca..(r + 1) * ca]);
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for r in 0..*rows {
                        axpy(
                            1.0,
                            &g[r * (ca + cb) + ca..(r + 1) * (ca + cb)],
                            &mut gb[r * cb..(r + 1) * cb],
                        );
                    }
                }
            }
            Op::Concat(xs) => {
                let mut off = 0;
                for &x in xs {
                    let n = self.nodes[x].value.len();
                    if let Some(gx) = self.acc(grads, x) {
                        axpy(1.0, &g[off..off + n], gx);
                    }
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                if let Some(gx) = self.acc(grads, *x) {
                    axpy(1.0, g, &mut gx[*start..*start + g.len()]);
                }
            }
            Op::Tanh(x) => {
                let y = &self.nodes[id].value;
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
            }
            Op::MatVec { mat, x, rows, cols } => {
                let cols = *cols;
                let xv = &self.nodes[*x].value;
                let mv = &self.nodes[*mat].value;
                if let Some(gm) = self.acc(grads, *mat) {
                    for r in 0..*rows {
                        axpy(g[r], xv, &mut gm[r * cols..(r + 1) * cols]);
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    for r in 0..*rows {
                        axpy(g[r], &mv[r * cols..(r + 1) * cols], gx);
                    }
                }
            }
            Op::Mask { x, keep } => {
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        if keep[i] {
                            gx[i] += g[i];
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, target, probs } => {
                if let Some(gl) = self.acc(grads, *logits) {
                    for (i, p) in probs.iter().enumerate() {
                        let d = if i == *target { p - 1.0 } else { *p };
                        gl[i] += g[0] * d;
                    }
                }
            }
            Op::Mean(xs) => {
                let s = g[0] / xs.len() as f64;
                for &x in xs {
                    if let Some(gx) = self.acc(grads, x) {
                        gx[0] += s;
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_backward(
        &self,
        (w, b, x): (ParamId, ParamId, NodeId),
        (steps, input, hidden, reverse): (usize, usize, usize, bool),
        cache: &LstmCache,
        g: &[f64],
        grads: &mut [Vec<f64>],
        pg: &mut Grads,
        id: NodeId,
    ) {
        let g4 = 4 * hidden;
        let xv = &self.nodes[x].value;
        let out = &self.nodes[id].value;
        let wv = self.params.data(w);
        let want_dx = self.nodes[x].needs_grad;
        let mut dx = if want_dx { vec![0.0; xv.len()] } else { Vec::new() };
        let mut dw = std::mem::take(&mut pg.data[w]);
        let mut db = std::mem::take(&mut pg.data[b]);
        let mut dh_next = vec![0.0; hidden];
        let mut dc_next = vec![0.0; hidden];
        let mut dpre = vec![0.0; g4];
        let time = |s: usize| if reverse { steps - 1 - s } else { s };
        for s in (0..steps).rev() {
            let t = time(s);
            let prev = (s > 0).then(|| time(s - 1));
            let gt = &cache.gates[t * g4..(t + 1) * g4];
            for j in 0..hidden {
                let (i, f, gg, o) = (gt[j], gt[hidden + j], gt[2 * hidden + j], gt[3 * hidden + j]);
                let tc = cache.cell_tanh[t * hidden + j];
                let c_prev = prev.map_or(0.0, |p| cache.cell[p * hidden + j]);
                let dh = g[t * hidden + j] + dh_next[j];
                let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                dpre[j] = dc * gg * i * (1.0 - i);
                dpre[hidden + j] = dc * c_prev * f * (1.0 - f);
                dpre[2 * hidden + j] = dc * i * (1.0 - gg * gg);
                dpre[3 * hidden + j] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            axpy(1.0, &dpre, &mut db);
            for (k, &xk) in xv[t * input..(t + 1) * input].iter().enumerate() {
                if xk != 0.0 {
                    axpy(xk, &dpre, &mut dw[k * g4..(k + 1) * g4]);
                }
                if want_dx {
                    dx[t * input + k] += dot(&wv[k * g4..(k + 1) * g4], &dpre);
                }
            }
            match prev {
                Some(p) => {
                    let hp = &out[p * hidden..(p + 1) * hidden];
                    for j in 0..hidden {
                        let k = input + j;
                        if hp[j] != 0.0 {
                            axpy(hp[j], &dpre, &mut dw[k * g4..(k + 1) * g4]);
                        }
                        dh_next[j] = dot(&wv[k * g4..(k + 1) * g4], &dpre);
                    }
                }
                None => dh_next.iter_mut().for_each(|v| *v = 0.0),
            }
        }
        pg.data[w] = dw;
        pg.data[b] = db;
        if let Some(gx) = self.acc(grads, x) {
            axpy(1.0, &dx, gx);
        }
    }
}
