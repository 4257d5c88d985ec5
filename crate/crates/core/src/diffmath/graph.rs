//! Reverse-mode differentiation over a tape of matrix operations.
//!
//! Values are computed eagerly as nodes are pushed. [`Graph::grad`] walks the
//! tape backwards and expresses every vector-Jacobian product with ordinary
//! tape operations, so the returned gradients are themselves differentiable.
//! That is what the gradient penalty needs: the input gradient of the critic
//! is a node like any other and can be differentiated again with respect to
//! the critic's parameters.
//!
//! Shape errors inside the graph are programming errors and panic; public
//! entry points validate user-supplied shapes before building a graph.

use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Powf(Var, f64),
    Exp(Var),
    /// `e^x - 1`
    ExpM1(Var),
    Log(Var),
    /// `ln(1 + x)`
    Ln1p(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    LeakyRelu(Var, f64),
    Clamp(Var, f64, f64),
    LogSoftmaxRows(Var),
    SumAll(Var),
    /// `n x m -> 1 x m`
    SumRows(Var),
    /// `n x m -> n x 1`
    SumCols(Var),
    BroadcastScalar(Var),
    /// `1 x m -> n x m`
    BroadcastRow(Var),
    /// `n x 1 -> n x m`
    BroadcastCol(Var),
    Select(Var, usize, usize),
    /// Place a `1 x 1` value at `(r, c)` of a zero `rows x cols` matrix.
    Scatter {
        src: Var,
        r: usize,
        c: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddConst(..) => "add_const",
            Op::Powf(..) => "powf",
            Op::Exp(..) => "exp",
            Op::ExpM1(..) => "exp_m1",
            Op::Log(..) => "log",
            Op::Ln1p(..) => "ln_1p",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Softplus(..) => "softplus",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Clamp(..) => "clamp",
            Op::LogSoftmaxRows(..) => "log_softmax",
            Op::SumAll(..) => "sum",
            Op::SumRows(..) => "sum_rows",
            Op::SumCols(..) => "sum_cols",
            Op::BroadcastScalar(..) => "broadcast_scalar",
            Op::BroadcastRow(..) => "broadcast_row",
            Op::BroadcastCol(..) => "broadcast_col",
            Op::Select(..) => "select",
            Op::Scatter { .. } => "scatter",
        }
    }

    fn inputs(&self) -> ([Option<Var>; 2], usize) {
        use Op::*;
        match *self {
            Leaf => ([None, None], 0),
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) => ([Some(a), Some(b)], 2),
            Transpose(a)
            | Scale(a, _)
            | AddConst(a)
            | Powf(a, _)
            | Exp(a)
            | ExpM1(a)
            | Log(a)
            | Ln1p(a)
            | Tanh(a)
            | Sigmoid(a)
            | Softplus(a)
            | LeakyRelu(a, _)
            | Clamp(a, _, _)
            | LogSoftmaxRows(a)
            | SumAll(a)
            | SumRows(a)
            | SumCols(a)
            | BroadcastScalar(a)
            | BroadcastRow(a)
            | BroadcastCol(a)
            | Select(a, _, _) => ([Some(a), None], 1),
            Scatter { src, .. } => ([Some(src), None], 1),
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
}

/// An append-only computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    first_nonfinite: Option<(usize, &'static str)>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Index and operation name of the first node that produced a
    /// non-finite entry, if any.
    pub fn first_nonfinite(&self) -> Option<(usize, &'static str)> {
        self.first_nonfinite
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        if self.first_nonfinite.is_none() && !value.is_finite() {
            self.first_nonfinite = Some((self.nodes.len(), op.name()));
        }
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self
            .value(a)
            .matmul(self.value(b))
            .unwrap_or_else(|e| panic!("graph matmul: {e}"));
        self.push(Op::MatMul(a, b), value)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(Op::Transpose(a), value)
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        self.value(a)
            .zip_map(self.value(b), f)
            .unwrap_or_else(|e| panic!("graph elementwise: {e}"))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x - y);
        self.push(Op::Sub(a, b), value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), value)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), value)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(Op::AddConst(a), value)
    }

    pub fn powf(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x.powf(c));
        self.push(Op::Powf(a, c), value)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), value)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.push(Op::Log(a), value)
    }

    pub fn exp_m1(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp_m1);
        self.push(Op::ExpM1(a), value)
    }

    pub fn ln_1p(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln_1p);
        self.push(Op::Ln1p(a), value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        self.push(Op::Softplus(a), value)
    }

    /// `x` for `x > 0`, `slope * x` otherwise (the kink takes the negative branch).
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(Op::LeakyRelu(a, slope), value)
    }

    /// Clamp into `[lo, hi]`; clamped entries pass no gradient.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), value)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut value = src.clone();
        for r in 0..src.rows() {
            let row = value.row_slice_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push(Op::LogSoftmaxRows(a), value)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ls = self.log_softmax_rows(a);
        self.exp(ls)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(Op::SumAll(a), value)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut value = Tensor::zeros(1, src.cols());
        for r in src.iter_rows() {
            for (o, v) in value.data_mut().iter_mut().zip(r) {
                *o += v;
            }
        }
        self.push(Op::SumRows(a), value)
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let sums: Vec<f64> = src.iter_rows().map(|r| r.iter().sum()).collect();
        let value = Tensor::column(&sums);
        self.push(Op::SumCols(a), value)
    }

    pub fn broadcast_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let s = self.value(a);
        assert_eq!(s.shape(), (1, 1), "broadcast_scalar expects 1x1");
        let value = Tensor::filled(rows, cols, s.item());
        self.push(Op::BroadcastScalar(a), value)
    }

    pub fn broadcast_row(&mut self, a: Var, rows: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.rows(), 1, "broadcast_row expects a single row");
        let mut data = Vec::with_capacity(rows * src.cols());
        for _ in 0..rows {
            data.extend_from_slice(src.data());
        }
        let value = Tensor::from_vec(rows, src.cols(), data).expect("broadcast_row");
        self.push(Op::BroadcastRow(a), value)
    }

    pub fn broadcast_col(&mut self, a: Var, cols: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.cols(), 1, "broadcast_col expects a single column");
        let value = Tensor::from_fn(src.rows(), cols, |i, _| src.get(i, 0));
        self.push(Op::BroadcastCol(a), value)
    }

    pub fn select(&mut self, a: Var, r: usize, c: usize) -> Var {
        let value = Tensor::scalar(self.value(a).get(r, c));
        self.push(Op::Select(a, r, c), value)
    }

    fn scatter(&mut self, src: Var, rows: usize, cols: usize, r: usize, c: usize) -> Var {
        let mut value = Tensor::zeros(rows, cols);
        value.set(r, c, self.value(src).item());
        self.push(Op::Scatter { src, r, c }, value)
    }

    // ── composite helpers ───────────────────────────────────────────────

    /// `a + bias` with `bias` a `1 x m` row broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let n = self.value(a).rows();
        let b = self.broadcast_row(bias, n);
        self.add(a, b)
    }

    /// `x W + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    /// Multiply every entry of `a` by the `1 x 1` node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let (r, c) = self.shape(a);
        let b = self.broadcast_scalar(s, r, c);
        self.mul(a, b)
    }

    /// Multiply each row of `a` by the matching entry of the `n x 1` column `s`.
    pub fn mul_col(&mut self, a: Var, s: Var) -> Var {
        let c = self.value(a).cols();
        let b = self.broadcast_col(s, c);
        self.mul(a, b)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.powf(a, -1.0)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let rb = self.recip(b);
        self.mul(a, rb)
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, mask: Tensor) -> Var {
        let m = self.leaf(mask);
        self.mul(a, m)
    }

    // ── differentiation ─────────────────────────────────────────────────

    /// Gradients of the scalar `y` with respect to each of `wrt`.
    ///
    /// Returns `None` for variables `y` does not depend on. The gradient
    /// nodes are recorded on this tape and can be differentiated again.
    pub fn grad(&mut self, y: Var, wrt: &[Var]) -> Vec<Option<Var>> {
        assert_eq!(self.shape(y), (1, 1), "grad needs a scalar output");
        let last = y.0;
        let mut needs = vec![false; last + 1];
        for w in wrt {
            if w.0 <= last {
                needs[w.0] = true;
            }
        }
        for i in 0..=last {
            if !needs[i] {
                let (ins, n) = self.nodes[i].op.inputs();
                needs[i] = ins[..n].iter().flatten().any(|v| needs[v.0]);
            }
        }

        let mut adj: Vec<Option<Var>> = vec![None; last + 1];
        if needs[last] {
            adj[last] = Some(self.scalar(1.0));
        }
        for i in (0..=last).rev() {
            let Some(g) = adj[i] else { continue };
            if !needs[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let contribs = self.vjp(&op, Var(i), g, &|v: Var| needs[v.0]);
            for (input, c) in contribs {
                adj[input.0] = Some(match adj[input.0] {
                    None => c,
                    Some(prev) => self.add(prev, c),
                });
            }
        }
        wrt.iter()
            .map(|w| if w.0 <= last { adj[w.0] } else { None })
            .collect()
    }

    fn vjp(&mut self, op: &Op, out: Var, g: Var, need: &dyn Fn(Var) -> bool) -> Vec<(Var, Var)> {
        let mut res = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if need(a) {
                    let bt = self.transpose(b);
                    res.push((a, self.matmul(g, bt)));
                }
                if need(b) {
                    let at = self.transpose(a);
                    res.push((b, self.matmul(at, g)));
                }
            }
            Op::Transpose(a) => res.push((a, self.transpose(g))),
            Op::Add(a, b) => {
                if need(a) {
                    res.push((a, g));
                }
                if need(b) {
                    res.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if need(a) {
                    res.push((a, g));
                }
                if need(b) {
                    res.push((b, self.neg(g)));
                }
            }
            Op::Mul(a, b) => {
                if need(a) {
                    res.push((a, self.mul(g, b)));
                }
                if need(b) {
                    res.push((b, self.mul(g, a)));
                }
            }
            Op::Scale(a, c) => res.push((a, self.scale(g, c))),
            Op::AddConst(a) => res.push((a, g)),
            Op::Powf(a, c) => {
                let d = if c == 1.0 {
                    g
                } else {
                    let p = self.powf(a, c - 1.0);
                    let p = self.scale(p, c);
                    self.mul(g, p)
                };
                res.push((a, d));
            }
            Op::Exp(a) => res.push((a, self.mul(g, out))),
            Op::ExpM1(a) => {
                let e = self.add_const(out, 1.0);
                res.push((a, self.mul(g, e)));
            }
            Op::Log(a) => {
                let r = self.recip(a);
                res.push((a, self.mul(g, r)));
            }
            Op::Ln1p(a) => {
                let d = self.add_const(a, 1.0);
                let r = self.recip(d);
                res.push((a, self.mul(g, r)));
            }
            Op::Tanh(a) => {
                let sq = self.mul(out, out);
                let d = self.scale(sq, -1.0);
                let d = self.add_const(d, 1.0);
                res.push((a, self.mul(g, d)));
            }
            Op::Sigmoid(a) => {
                let one_minus = self.scale(out, -1.0);
                let one_minus = self.add_const(one_minus, 1.0);
                let d = self.mul(out, one_minus);
                res.push((a, self.mul(g, d)));
            }
            Op::Softplus(a) => {
                let s = self.sigmoid(a);
                res.push((a, self.mul(g, s)));
            }
            Op::LeakyRelu(a, slope) => {
                let mask = self.value(a).map(|x| if x > 0.0 { 1.0 } else { slope });
                res.push((a, self.mul_const(g, mask)));
            }
            Op::Clamp(a, lo, hi) => {
                let mask = self
                    .value(a)
                    .map(|x| if x < lo || x > hi { 0.0 } else { 1.0 });
                res.push((a, self.mul_const(g, mask)));
            }
            Op::LogSoftmaxRows(a) => {
                let cols = self.value(a).cols();
                let sm = self.exp(out);
                let gs = self.sum_cols(g);
                let gs = self.broadcast_col(gs, cols);
                let corr = self.mul(sm, gs);
                res.push((a, self.sub(g, corr)));
            }
            Op::SumAll(a) => {
                let (r, c) = self.shape(a);
                res.push((a, self.broadcast_scalar(g, r, c)));
            }
            Op::SumRows(a) => {
                let r = self.value(a).rows();
                res.push((a, self.broadcast_row(g, r)));
            }
            Op::SumCols(a) => {
                let c = self.value(a).cols();
                res.push((a, self.broadcast_col(g, c)));
            }
            Op::BroadcastScalar(a) => res.push((a, self.sum_all(g))),
            Op::BroadcastRow(a) => res.push((a, self.sum_rows(g))),
            Op::BroadcastCol(a) => res.push((a, self.sum_cols(g))),
            Op::Select(a, r, c) => {
                let (rows, cols) = self.shape(a);
                res.push((a, self.scatter(g, rows, cols, r, c)));
            }
            Op::Scatter { src, r, c } => res.push((src, self.select(g, r, c))),
        }
        res
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(f: impl Fn(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
        let mut out = Tensor::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            out.data_mut()[i] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        out
    }

    fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
        for (x, y) in a.data().iter().zip(b.data()) {
            let scale = x.abs().max(y.abs()).max(1e-4);
            assert!((x - y).abs() / scale < tol, "{x} vs {y}");
        }
    }

    /// Every unary op and its backward rule, first order.
    #[test]
    fn unary_ops_match_finite_differences() {
        type Build = fn(&mut Graph, Var) -> Var;
        let cases: Vec<(&str, Build)> = vec![
            ("exp", |g, x| g.exp(x)),
            ("log", |g, x| {
                let s = g.mul(x, x);
                let s = g.add_const(s, 0.5);
                g.log(s)
            }),
            ("tanh", |g, x| g.tanh(x)),
            ("sigmoid", |g, x| g.sigmoid(x)),
            ("softplus", |g, x| g.softplus(x)),
            ("leaky", |g, x| g.leaky_relu(x, 0.2)),
            ("powf", |g, x| {
                let s = g.mul(x, x);
                let s = g.add_const(s, 1.0);
                g.powf(s, 1.7)
            }),
            ("log_softmax", |g, x| g.log_softmax_rows(x)),
            ("sum_rows", |g, x| {
                let s = g.sum_rows(x);
                g.mul(s, s)
            }),
            ("sum_cols", |g, x| {
                let s = g.sum_cols(x);
                g.exp(s)
            }),
            ("transpose", |g, x| {
                let t = g.transpose(x);
                g.matmul(x, t)
            }),
            ("select", |g, x| {
                let s = g.select(x, 1, 2);
                g.mul_scalar(x, s)
            }),
        ];
        let x0 = Tensor::from_rows(&[[0.3, -0.7, 1.1], [-0.2, 0.9, 0.45]]).unwrap();
        let weights = Tensor::from_fn(3, 3, |i, j| 0.1 + 0.37 * i as f64 - 0.21 * j as f64);
        for (name, build) in cases {
            let eval = |x: &Tensor| {
                let mut g = Graph::new();
                let xv = g.leaf(x.clone());
                let y = build(&mut g, xv);
                let (r, c) = g.shape(y);
                let w = g.leaf(Tensor::from_fn(r, c, |i, j| weights.get(i % 3, j % 3)));
                let p = g.mul(y, w);
                let s = g.sum_all(p);
                (g.value(s).item(), g, xv, s)
            };
            let numeric = numeric_grad(|x| eval(x).0, &x0, 1e-6);
            let (_, mut g, xv, s) = eval(&x0);
            let gx = g.grad(s, &[xv])[0].unwrap();
            let analytic = g.value(gx).clone();
            for (a, n) in analytic.data().iter().zip(numeric.data()) {
                assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "{name}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn second_order_through_tanh_mlp() {
        // h(w) = || d/dx sum(tanh(x w)) ||^2 differentiated in w
        let x = Tensor::from_rows(&[[0.5, -0.3], [0.1, 0.8]]).unwrap();
        let w0 = Tensor::from_rows(&[[0.4, -0.6, 0.2], [0.7, 0.1, -0.5]]).unwrap();
        let eval = |w: &Tensor| {
            let mut g = Graph::new();
            let xv = g.leaf(x.clone());
            let wv = g.leaf(w.clone());
            let h = g.matmul(xv, wv);
            let h = g.tanh(h);
            let s = g.sum_all(h);
            let gx = g.grad(s, &[xv])[0].unwrap();
            let sq = g.mul(gx, gx);
            let pen = g.sum_all(sq);
            (g.value(pen).item(), g, wv, pen)
        };
        let numeric = numeric_grad(|w| eval(w).0, &w0, 1e-6);
        let (_, mut g, wv, pen) = eval(&w0);
        let gw = g.grad(pen, &[wv])[0].unwrap();
        assert_close(g.value(gw), &numeric, 1e-6);
    }

    #[test]
    fn unused_variable_has_no_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::row(&[1.0, 2.0]));
        let b = g.leaf(Tensor::row(&[3.0]));
        let s = g.mul(a, a);
        let s = g.sum_all(s);
        let grads = g.grad(s, &[a, b]);
        assert_eq!(g.value(grads[0].unwrap()).data(), &[2.0, 4.0]);
        assert!(grads[1].is_none());
    }

    #[test]
    fn leaky_relu_kink_takes_negative_branch() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::row(&[0.0]));
        let y = g.leaky_relu(a, 0.2);
        let s = g.sum_all(y);
        let d = g.grad(s, &[a])[0].unwrap();
        assert_eq!(g.value(d).item(), 0.2);
    }

    #[test]
    fn nonfinite_values_are_flagged() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::row(&[0.0]));
        let _ = g.log(a);
        assert_eq!(g.first_nonfinite(), Some((1, "log")));
    }

    #[test]
    fn softmax_rows_normalize() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::from_rows(&[[1.0, 2.0, 3.0], [1000.0, 0.0, -1000.0]]).unwrap());
        let s = g.softmax_rows(a);
        for r in g.value(s).iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
