//! Reverse-mode differentiation over an eagerly evaluated tape of matrices.
//!
//! Gradients are themselves recorded on the tape, so the result of
//! [`Graph::grad`] can be differentiated again (needed for gradient penalties).

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    AddRow(Var, Var),
    SumRows(Var),
    BroadcastRows(Var),
    SumCols(Var),
    BroadcastCols(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    Min(Var, Var),
    SliceCols { x: Var, start: usize },
    PadCols { x: Var, start: usize },
    ConcatCols(Var, Var),
    SliceRows { x: Var, start: usize },
    PadRows { x: Var, start: usize },
    ConcatRows(Var, Var),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// A tape of matrix operations.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A constant with no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that gradients can be taken with respect to.
    pub fn variable(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Matrix::scalar(value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a) * op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let v = Matrix::matmul(self.value(a), self.value(b), ta, tb);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::MatMul { a, b, ta, tb }, rg)
    }

    /// Adds a `1 x c` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(self.shape(row), (1, c), "add_row shape mismatch");
        let mut v = self.value(x).clone();
        let b = self.value(row).data().to_vec();
        for i in 0..r {
            for (dst, &bj) in v.data_mut()[i * c..(i + 1) * c].iter_mut().zip(&b) {
                *dst += bj;
            }
        }
        let rg = self.rg(&[x, row]);
        self.push(v, Op::AddRow(x, row), rg)
    }

    /// Column sums, `r x c -> 1 x c`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let src = self.value(x).data();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, &s) in out.iter_mut().zip(&src[i * c..(i + 1) * c]) {
                *o += s;
            }
        }
        let rg = self.rg(&[x]);
        self.push(Matrix::from_vec(1, c, out), Op::SumRows(x), rg)
    }

    /// Repeats a `1 x c` row `n` times.
    pub fn broadcast_rows(&mut self, x: Var, n: usize) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(r, 1, "broadcast_rows expects a row");
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * c);
        for _ in 0..n {
            out.extend_from_slice(src);
        }
        let rg = self.rg(&[x]);
        self.push(Matrix::from_vec(n, c, out), Op::BroadcastRows(x), rg)
    }

    /// Row sums, `r x c -> r x 1`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let src = self.value(x).data();
        let out = (0..r)
            .map(|i| src[i * c..(i + 1) * c].iter().sum())
            .collect();
        let rg = self.rg(&[x]);
        self.push(Matrix::from_vec(r, 1, out), Op::SumCols(x), rg)
    }

    /// Repeats a `r x 1` column `n` times.
    pub fn broadcast_cols(&mut self, x: Var, n: usize) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(c, 1, "broadcast_cols expects a column");
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(r * n);
        for &s in src {
            out.extend(std::iter::repeat_n(s, n));
        }
        let rg = self.rg(&[x]);
        self.push(Matrix::from_vec(r, n, out), Op::BroadcastCols(x), rg)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "elementwise shape mismatch");
        let v = self.value(a).zip_map(self.value(b), f);
        let rg = self.rg(&[a, b]);
        self.push(v, op, rg)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(x).map(f);
        let rg = self.rg(&[x]);
        self.push(v, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Min(a, b), f64::min)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.unary(x, Op::Scale(x, k), |v| v * k)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, k: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + k)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Op::Softplus(x), softplus)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, Op::Log(x), f64::ln)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sqrt(x), f64::sqrt)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.shape(x);
        assert!(start + len <= c, "slice_cols out of range");
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        let rg = self.rg(&[x]);
        self.push(
            Matrix::from_vec(r, len, out),
            Op::SliceCols { x, start },
            rg,
        )
    }

    /// Embeds `x` at column `start` of a zero matrix with `total` columns.
    pub fn pad_cols(&mut self, x: Var, start: usize, total: usize) -> Var {
        let (r, c) = self.shape(x);
        assert!(start + c <= total, "pad_cols out of range");
        let src = self.value(x).data();
        let mut out = vec![0.0; r * total];
        for i in 0..r {
            out[i * total + start..i * total + start + c].copy_from_slice(&src[i * c..(i + 1) * c]);
        }
        let rg = self.rg(&[x]);
        self.push(
            Matrix::from_vec(r, total, out),
            Op::PadCols { x, start },
            rg,
        )
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (r, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        assert_eq!(r, rb, "concat_cols row mismatch");
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            out.extend_from_slice(&da[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&db[i * cb..(i + 1) * cb]);
        }
        let rg = self.rg(&[a, b]);
        self.push(Matrix::from_vec(r, ca + cb, out), Op::ConcatCols(a, b), rg)
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.shape(x);
        assert!(start + len <= r, "slice_rows out of range");
        let out = self.value(x).data()[start * c..(start + len) * c].to_vec();
        let rg = self.rg(&[x]);
        self.push(
            Matrix::from_vec(len, c, out),
            Op::SliceRows { x, start },
            rg,
        )
    }

    /// Embeds `x` at row `start` of a zero matrix with `total` rows.
    pub fn pad_rows(&mut self, x: Var, start: usize, total: usize) -> Var {
        let (r, c) = self.shape(x);
        assert!(start + r <= total, "pad_rows out of range");
        let mut out = vec![0.0; total * c];
        out[start * c..(start + r) * c].copy_from_slice(self.value(x).data());
        let rg = self.rg(&[x]);
        self.push(
            Matrix::from_vec(total, c, out),
            Op::PadRows { x, start },
            rg,
        )
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (ra, c) = self.shape(a);
        let (rb, cb) = self.shape(b);
        assert_eq!(c, cb, "concat_rows column mismatch");
        let mut out = Vec::with_capacity((ra + rb) * c);
        out.extend_from_slice(self.value(a).data());
        out.extend_from_slice(self.value(b).data());
        let rg = self.rg(&[a, b]);
        self.push(Matrix::from_vec(ra + rb, c, out), Op::ConcatRows(a, b), rg)
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.sum_rows(x);
        self.sum_cols(s)
    }

    /// Mean of all entries as a `1 x 1` node.
    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    ///
    /// Entries are `None` when `output` does not depend on that variable.
    /// The returned nodes live on this graph and can be differentiated again.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Option<Var>>> {
        if output.0 >= self.nodes.len() {
            return Err(Error::Usage(
                "gradient of a node that was never recorded".into(),
            ));
        }
        if self.shape(output) != (1, 1) {
            return Err(Error::Usage(format!(
                "gradient requires a scalar output, got {:?}",
                self.shape(output)
            )));
        }
        let mut adj: Vec<Option<Var>> = vec![None; output.0 + 1];
        if !self.nodes[output.0].requires_grad {
            return Ok(vec![None; wrt.len()]);
        }
        // Only nodes that lead to a requested leaf need propagation.
        let mut needed = vec![false; output.0 + 1];
        for w in wrt {
            if w.0 <= output.0 {
                needed[w.0] = true;
            }
        }
        for i in 0..=output.0 {
            if needed[i] || !self.nodes[i].requires_grad {
                continue;
            }
            needed[i] = self.parents(i).iter().any(|p| needed[p.0]);
        }
        adj[output.0] = Some(self.scalar(1.0));
        for i in (0..=output.0).rev() {
            let Some(g) = adj[i] else { continue };
            if !needed[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let y = Var(i);
            let contribs: Vec<(Var, Var)> = match op {
                Op::Leaf => Vec::new(),
                Op::MatMul { a, b, ta, tb } => {
                    let mut out = Vec::new();
                    if self.requires_grad(a) && needed[a.0] {
                        let da = match (ta, tb) {
                            (false, false) => self.matmul_t(g, b, false, true),
                            (false, true) => self.matmul_t(g, b, false, false),
                            (true, false) => self.matmul_t(b, g, false, true),
                            (true, true) => self.matmul_t(b, g, true, true),
                        };
                        out.push((a, da));
                    }
                    if self.requires_grad(b) && needed[b.0] {
                        let db = match (ta, tb) {
                            (false, false) => self.matmul_t(a, g, true, false),
                            (false, true) => self.matmul_t(g, a, true, false),
                            (true, false) => self.matmul_t(a, g, false, false),
                            (true, true) => self.matmul_t(g, a, true, true),
                        };
                        out.push((b, db));
                    }
                    out
                }
                Op::AddRow(x, row) => {
                    let mut out = vec![(x, g)];
                    if self.requires_grad(row) && needed[row.0] {
                        let d = self.sum_rows(g);
                        out.push((row, d));
                    }
                    out
                }
                Op::SumRows(x) => {
                    let n = self.shape(x).0;
                    vec![(x, self.broadcast_rows(g, n))]
                }
                Op::BroadcastRows(x) => vec![(x, self.sum_rows(g))],
                Op::SumCols(x) => {
                    let n = self.shape(x).1;
                    vec![(x, self.broadcast_cols(g, n))]
                }
                Op::BroadcastCols(x) => vec![(x, self.sum_cols(g))],
                Op::Add(a, b) => vec![(a, g), (b, g)],
                Op::Sub(a, b) => {
                    let mut out = vec![(a, g)];
                    if self.requires_grad(b) && needed[b.0] {
                        out.push((b, self.neg(g)));
                    }
                    out
                }
                Op::Mul(a, b) => {
                    let mut out = Vec::new();
                    if self.requires_grad(a) && needed[a.0] {
                        out.push((a, self.mul(g, b)));
                    }
                    if self.requires_grad(b) && needed[b.0] {
                        out.push((b, self.mul(g, a)));
                    }
                    out
                }
                Op::Div(a, b) => {
                    let mut out = Vec::new();
                    if self.requires_grad(a) && needed[a.0] {
                        out.push((a, self.div(g, b)));
                    }
                    if self.requires_grad(b) && needed[b.0] {
                        // d(a/b)/db = -y / b
                        let t = self.mul(g, y);
                        let t = self.div(t, b);
                        out.push((b, self.neg(t)));
                    }
                    out
                }
                Op::Scale(x, k) => vec![(x, self.scale(g, k))],
                Op::AddScalar(x) => vec![(x, g)],
                Op::Tanh(x) => {
                    let y2 = self.square(y);
                    let d = self.scale(y2, -1.0);
                    let d = self.add_scalar(d, 1.0);
                    vec![(x, self.mul(g, d))]
                }
                Op::Relu(x) => {
                    let mask = self.value(x).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    let m = self.constant(mask);
                    vec![(x, self.mul(g, m))]
                }
                Op::Softplus(x) => {
                    let s = self.sigmoid(x);
                    vec![(x, self.mul(g, s))]
                }
                Op::Sigmoid(x) => {
                    let one_minus = self.scale(y, -1.0);
                    let one_minus = self.add_scalar(one_minus, 1.0);
                    let d = self.mul(y, one_minus);
                    vec![(x, self.mul(g, d))]
                }
                Op::Exp(x) => vec![(x, self.mul(g, y))],
                Op::Log(x) => vec![(x, self.div(g, x))],
                Op::Sqrt(x) => {
                    let h = self.scale(g, 0.5);
                    vec![(x, self.div(h, y))]
                }
                Op::Square(x) => {
                    let t = self.mul(g, x);
                    vec![(x, self.scale(t, 2.0))]
                }
                Op::Min(a, b) => {
                    let mask = self
                        .value(a)
                        .zip_map(self.value(b), |p, q| if p <= q { 1.0 } else { 0.0 });
                    let inv = mask.map(|m| 1.0 - m);
                    let ma = self.constant(mask);
                    let mb = self.constant(inv);
                    let mut out = Vec::new();
                    if self.requires_grad(a) && needed[a.0] {
                        out.push((a, self.mul(g, ma)));
                    }
                    if self.requires_grad(b) && needed[b.0] {
                        out.push((b, self.mul(g, mb)));
                    }
                    out
                }
                Op::SliceCols { x, start } => {
                    let total = self.shape(x).1;
                    vec![(x, self.pad_cols(g, start, total))]
                }
                Op::PadCols { x, start } => {
                    let len = self.shape(x).1;
                    vec![(x, self.slice_cols(g, start, len))]
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.shape(a).1;
                    let cb = self.shape(b).1;
                    let mut out = Vec::new();
                    if self.requires_grad(a) && needed[a.0] {
                        out.push((a, self.slice_cols(g, 0, ca)));
                    }
                    if self.requires_grad(b) && needed[b.0] {
                        out.push((b, self.slice_cols(g, ca, cb)));
                    }
                    out
                }
                Op::SliceRows { x, start } => {
                    let total = self.shape(x).0;
                    vec![(x, self.pad_rows(g, start, total))]
                }
                Op::PadRows { x, start } => {
                    let len = self.shape(x).0;
                    vec![(x, self.slice_rows(g, start, len))]
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.shape(a).0;
                    let rb = self.shape(b).0;
                    let mut out = Vec::new();
                    if self.requires_grad(a) && needed[a.0] {
                        out.push((a, self.slice_rows(g, 0, ra)));
                    }
                    if self.requires_grad(b) && needed[b.0] {
                        out.push((b, self.slice_rows(g, ra, rb)));
                    }
                    out
                }
            };
            for (p, d) in contribs {
                if !self.nodes[p.0].requires_grad || !needed[p.0] {
                    continue;
                }
                adj[p.0] = Some(match adj[p.0] {
                    Some(prev) => self.add(prev, d),
                    None => d,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|w| if w.0 <= output.0 { adj[w.0] } else { None })
            .collect())
    }

    fn parents(&self, i: usize) -> Vec<Var> {
        match self.nodes[i].op {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. }
            | Op::AddRow(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::Min(a, b)
            | Op::ConcatCols(a, b)
            | Op::ConcatRows(a, b) => vec![a, b],
            Op::SumRows(x)
            | Op::BroadcastRows(x)
            | Op::SumCols(x)
            | Op::BroadcastCols(x)
            | Op::Scale(x, _)
            | Op::AddScalar(x)
            | Op::Tanh(x)
            | Op::Relu(x)
            | Op::Softplus(x)
            | Op::Sigmoid(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Sqrt(x)
            | Op::Square(x)
            | Op::SliceCols { x, .. }
            | Op::PadCols { x, .. }
            | Op::SliceRows { x, .. }
            | Op::PadRows { x, .. } => vec![x],
        }
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
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

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_grad(f: impl Fn(&mut Graph, Var) -> Var, x0: f64) -> f64 {
        let mut g = Graph::new();
        let x = g.variable(Matrix::scalar(x0));
        let y = f(&mut g, x);
        let d = g.grad(y, &[x]).unwrap()[0].unwrap();
        g.value(d).item()
    }

    #[test]
    fn square_derivative() {
        assert_eq!(scalar_grad(|g, x| g.square(x), 3.0), 6.0);
    }

    #[test]
    fn tanh_derivative_at_zero() {
        assert_eq!(scalar_grad(|g, x| g.tanh(x), 0.0), 1.0);
    }

    #[test]
    fn second_derivative_through_grad() {
        // d/dx of d/dx (x^3) = 6x
        let mut g = Graph::new();
        let x = g.variable(Matrix::scalar(2.0));
        let x2 = g.square(x);
        let x3 = g.mul(x2, x);
        let d = g.grad(x3, &[x]).unwrap()[0].unwrap();
        let dd = g.grad(d, &[x]).unwrap()[0].unwrap();
        assert!((g.value(d).item() - 12.0).abs() < 1e-12);
        assert!((g.value(dd).item() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn non_scalar_output_is_usage_error() {
        let mut g = Graph::new();
        let x = g.variable(Matrix::zeros(2, 2));
        assert!(matches!(g.grad(x, &[x]), Err(Error::Usage(_))));
    }

    #[test]
    fn unknown_node_is_usage_error() {
        let mut g = Graph::new();
        let mut other = Graph::new();
        let a = other.variable(Matrix::scalar(1.0));
        let _ = other.variable(Matrix::scalar(1.0));
        let _ = a;
        let b = other.variable(Matrix::scalar(1.0));
        assert!(matches!(g.grad(b, &[b]), Err(Error::Usage(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Matrix::scalar(3.0));
        let x = g.variable(Matrix::scalar(1.0));
        let y = g.mul(c, x);
        let grads = g.grad(y, &[x, c]).unwrap();
        assert_eq!(g.value(grads[0].unwrap()).item(), 3.0);
        assert!(grads[1].is_none());
    }

    #[test]
    fn stable_scalar_helpers() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0).is_finite());
    }
}
