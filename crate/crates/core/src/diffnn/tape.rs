//! Define-by-run reverse-mode differentiation over matrix values.
//!
//! Every loss evaluation records a fresh [`Tape`]. Leaves created with
//! [`Tape::param`] receive gradients; leaves created with [`Tape::constant`]
//! do not, and neither does anything computed only from constants, so frozen
//! networks cost a forward pass and nothing more.

use super::tensor::{affine, affine_grad_input, affine_grad_weight, Tensor};
use super::DiffError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Option<Var> },
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Softplus(Var),
    Square(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    ColAffine { x: Var, scale: Vec<f64> },
    Clamp { x: Var, lo: f64, hi: f64 },
    SliceCols { x: Var, start: usize },
    ConcatCols(Var, Var),
    SumCols(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), DiffError> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(DiffError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that is treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// `x . w + b` with `x: [rows, inner]`, `w: [inner, cols]`, `b: [1, cols]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, DiffError> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.cols() != wv.rows() {
            return Err(DiffError::ShapeMismatch {
                op: "affine",
                left: xv.shape().to_vec(),
                right: wv.shape().to_vec(),
            });
        }
        let (rows, inner, cols) = (xv.rows(), xv.cols(), wv.cols());
        let bias = match b {
            Some(b) => {
                let bv = self.value(b);
                if bv.len() != cols {
                    return Err(DiffError::ShapeMismatch {
                        op: "affine bias",
                        left: vec![cols],
                        right: bv.shape().to_vec(),
                    });
                }
                Some(bv.values())
            }
            None => None,
        };
        let out = affine(xv.values(), wv.values(), bias, rows, inner, cols);
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::matrix(rows, cols, out)?;
        Ok(self.push(value, Op::Affine { x, w, b }, rg))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let xv = self.value(x);
        let out = xv.same_shape_as(xv.values().iter().map(|&v| f(v)).collect());
        let rg = self.rg(x);
        self.push(out, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Op::Softplus(x), softplus)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn shift(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Shift(x), |v| v + c)
    }

    /// Elementwise clamp; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Op::Clamp { x, lo, hi }, |v| v.clamp(lo, hi))
    }

    /// Per-column `x[:, j] * scale[j] + shift[j]`.
    pub fn col_affine(&mut self, x: Var, scale: &[f64], shift: &[f64]) -> Result<Var, DiffError> {
        let xv = self.value(x);
        let cols = xv.cols();
        if scale.len() != cols || shift.len() != cols {
            return Err(DiffError::ShapeMismatch {
                op: "col_affine",
                left: xv.shape().to_vec(),
                right: vec![scale.len(), shift.len()],
            });
        }
        let out: Vec<f64> = xv
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * scale[i % cols] + shift[i % cols])
            .collect();
        let out = xv.same_shape_as(out);
        let rg = self.rg(x);
        Ok(self.push(out, Op::ColAffine { x, scale: scale.to_vec() }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        check_same(name, av, bv)?;
        let out: Vec<f64> = av.values().iter().zip(bv.values()).map(|(&x, &y)| f(x, y)).collect();
        let out = av.same_shape_as(out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(a, b, "min", Op::Min(a, b), |x, y| if y < x { y } else { x })
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let xv = self.value(x);
        let cols = xv.cols();
        if start >= end || end > cols {
            return Err(DiffError::ShapeMismatch {
                op: "slice_cols",
                left: xv.shape().to_vec(),
                right: vec![start, end],
            });
        }
        let rows = xv.rows();
        let width = end - start;
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&xv.row(r)[start..end]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(rows, width, out)?, Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(DiffError::ShapeMismatch {
                op: "concat_cols",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let rows = av.rows();
        let cols = av.cols() + bv.cols();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            out.extend_from_slice(av.row(r));
            out.extend_from_slice(bv.row(r));
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(rows, cols, out)?, Op::ConcatCols(a, b), rg))
    }

    /// Row sums as a `[rows, 1]` column.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out: Vec<f64> = (0..xv.rows()).map(|r| xv.row(r).iter().sum()).collect();
        let rg = self.rg(x);
        self.push(Tensor::column(out), Op::SumCols(x), rg)
    }

    /// Mean over all elements as a `[1, 1]` scalar.
    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let m = xv.values().iter().sum::<f64>() / xv.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    /// Propagates `d root / d v` to every node that requires a gradient.
    ///
    /// The root must be a single finite element. A tape can be
    /// differentiated once.
    pub fn backward(&mut self, root: Var) -> Result<Gradients, DiffError> {
        if self.consumed {
            return Err(DiffError::GraphConsumed);
        }
        let rv = self.value(root);
        let Some(root_value) = rv.item() else {
            return Err(DiffError::NonScalarRoot(rv.shape().to_vec()));
        };
        if !root_value.is_finite() {
            return Err(DiffError::NonFinite("backward root"));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut out = Vec::with_capacity(self.nodes.len());
        for (node, g) in self.nodes.iter().zip(grads) {
            let t = match g {
                Some(g) if node.requires_grad => {
                    if g.iter().any(|v| !v.is_finite()) {
                        return Err(DiffError::NonFinite("gradient"));
                    }
                    Some(node.value.same_shape_as(g))
                }
                _ => None,
            };
            out.push(t);
        }
        Ok(Gradients { grads: out })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, contrib: impl FnOnce(&mut [f64])) {
        if !self.rg(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        contrib(slot);
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match *op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (xv, wv) = (self.value(x), self.value(w));
                let (rows, inner, cols) = (xv.rows(), xv.cols(), wv.cols());
                self.accumulate(grads, x, |gx| affine_grad_input(g, wv.values(), gx, rows, inner, cols));
                self.accumulate(grads, w, |gw| affine_grad_weight(xv.values(), g, gw, rows, inner, cols));
                if let Some(b) = b {
                    self.accumulate(grads, b, |gb| {
                        for r in 0..rows {
                            for (o, &gv) in gb.iter_mut().zip(&g[r * cols..(r + 1) * cols]) {
                                *o += gv;
                            }
                        }
                    });
                }
            }
            Op::Relu(x) => {
                let xv = self.value(x).values();
                self.accumulate(grads, x, |gx| {
                    for ((o, &gv), &xv) in gx.iter_mut().zip(g).zip(xv) {
                        *o += if xv > 0.0 { gv } else { 0.0 };
                    }
                });
            }
            Op::Tanh(x) => {
                let y = out.values();
                self.accumulate(grads, x, |gx| {
                    for ((o, &gv), &yv) in gx.iter_mut().zip(g).zip(y) {
                        *o += gv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Exp(x) => {
                let y = out.values();
                self.accumulate(grads, x, |gx| {
                    for ((o, &gv), &yv) in gx.iter_mut().zip(g).zip(y) {
                        *o += gv * yv;
                    }
                });
            }
            Op::Softplus(x) => {
                let xv = self.value(x).values();
                self.accumulate(grads, x, |gx| {
                    for ((o, &gv), &xv) in gx.iter_mut().zip(g).zip(xv) {
                        *o += gv * sigmoid(xv);
                    }
                });
            }
            Op::Square(x) => {
                let xv = self.value(x).values();
                self.accumulate(grads, x, |gx| {
                    for ((o, &gv), &xv) in gx.iter_mut().zip(g).zip(xv) {
                        *o += 2.0 * gv * xv;
                    }
                });
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
                self.accumulate(grads, a, |ga| ga.iter_mut().zip(g).for_each(|(o, &gv)| *o += gv));
                self.accumulate(grads, b, |gb| gb.iter_mut().zip(g).for_each(|(o, &gv)| *o += sign * gv));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a).values(), self.value(b).values());
                self.accumulate(grads, a, |ga| {
                    for ((o, &gv), &y) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gv * y;
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for ((o, &gv), &x) in gb.iter_mut().zip(g).zip(av) {
                        *o += gv * x;
                    }
                });
            }
            Op::Min(a, b) => {
                let (av, bv) = (self.value(a).values(), self.value(b).values());
                self.accumulate(grads, a, |ga| {
                    for (i, o) in ga.iter_mut().enumerate() {
                        if bv[i] >= av[i] {
                            *o += g[i];
                        }
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for (i, o) in gb.iter_mut().enumerate() {
                        if bv[i] < av[i] {
                            *o += g[i];
                        }
                    }
                });
            }
            Op::Scale(x, c) => {
                self.accumulate(grads, x, |gx| gx.iter_mut().zip(g).for_each(|(o, &gv)| *o += c * gv));
            }
            Op::Shift(x) => {
                self.accumulate(grads, x, |gx| gx.iter_mut().zip(g).for_each(|(o, &gv)| *o += gv));
            }
            Op::ColAffine { x, ref scale } => {
                let cols = scale.len();
                self.accumulate(grads, x, |gx| {
                    for (i, (o, &gv)) in gx.iter_mut().zip(g).enumerate() {
                        *o += gv * scale[i % cols];
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(x).values();
                self.accumulate(grads, x, |gx| {
                    for ((o, &gv), &xv) in gx.iter_mut().zip(g).zip(xv) {
                        if xv >= lo && xv <= hi {
                            *o += gv;
                        }
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let src_cols = self.value(x).cols();
                let width = out.cols();
                self.accumulate(grads, x, |gx| {
                    for r in 0..out.rows() {
                        let dst = &mut gx[r * src_cols + start..r * src_cols + start + width];
                        for (o, &gv) in dst.iter_mut().zip(&g[r * width..(r + 1) * width]) {
                            *o += gv;
                        }
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let (ac, bc) = (self.value(a).cols(), self.value(b).cols());
                let cols = ac + bc;
                let rows = out.rows();
                self.accumulate(grads, a, |ga| {
                    for r in 0..rows {
                        for j in 0..ac {
                            ga[r * ac + j] += g[r * cols + j];
                        }
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for r in 0..rows {
                        for j in 0..bc {
                            gb[r * bc + j] += g[r * cols + ac + j];
                        }
                    }
                });
            }
            Op::SumCols(x) => {
                let cols = self.value(x).cols();
                self.accumulate(grads, x, |gx| {
                    for (i, o) in gx.iter_mut().enumerate() {
                        *o += g[i / cols];
                    }
                });
            }
            Op::Mean(x) => {
                let n = self.value(x).len() as f64;
                self.accumulate(grads, x, |gx| gx.iter_mut().for_each(|o| *o += g[0] / n));
            }
        }
    }
}
