//! Wengert tape over dense `f64` tensors.
//!
//! Every primitive appends one node holding its output values and the operand
//! handles needed by its backward rule. `backward` replays the nodes in reverse
//! order. A tape is meant to live for exactly one sequence.

use std::rc::Rc;

use crate::error::{shape_err, Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Dense row-major tensor. `grad` is allocated iff the tensor requires a gradient.
#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Row source for [`Tape::gather_rows`]: output row `r` copies input row
/// `src[r]`, or is zero when `src[r]` is `None`.
pub type RowMap = Rc<[Option<usize>]>;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var, f64),
    LnFloor(Var, f64),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Reshape(Var),
    Gather(Var, RowMap, usize),
    MixRows(Var, Var, Rc<[RowMap]>, usize),
    AddToRow(Var, Var, usize),
    Sum(Var),
    Mean(Var),
    Square(Var),
}

#[derive(Clone, Debug)]
struct Node {
    tensor: Tensor,
    op: Op,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
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

    pub fn tensor(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].tensor
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].tensor.values
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].tensor.shape
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].tensor.grad.as_deref()
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].tensor.grad.is_some()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(numel(&shape), values.len());
        let grad = requires_grad.then(|| vec![0.0; values.len()]);
        self.nodes.push(Node {
            tensor: Tensor {
                shape,
                values,
                grad,
            },
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf tensor.
    pub fn leaf(&mut self, shape: &[usize], values: Vec<f64>, requires_grad: bool) -> Result<Var> {
        if shape.is_empty() || shape.contains(&0) {
            return shape_err(
                "leaf",
                format!("shape {shape:?} must be non-empty and positive"),
            );
        }
        if numel(shape) != values.len() {
            return shape_err(
                "leaf",
                format!(
                    "shape {shape:?} needs {} values, got {}",
                    numel(shape),
                    values.len()
                ),
            );
        }
        Ok(self.push(shape.to_vec(), values, requires_grad, Op::Leaf))
    }

    pub fn param(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Var> {
        self.leaf(shape, values, true)
    }

    pub fn constant(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Var> {
        self.leaf(shape, values, false)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Result<Var> {
        self.leaf(shape, vec![0.0; numel(shape)], false)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = &self.nodes[x.0].tensor;
        let values = t.values.iter().map(|&v| f(v)).collect();
        let shape = t.shape.clone();
        let rg = t.grad.is_some();
        self.push(shape, values, rg, op)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(
                op,
                format!(
                    "operands differ: {:?} vs {:?}",
                    self.shape(a),
                    self.shape(b)
                ),
            );
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let ta = &self.nodes[a.0].tensor;
        let tb = &self.nodes[b.0].tensor;
        let values = ta
            .values
            .iter()
            .zip(&tb.values)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = ta.shape.clone();
        let rg = ta.grad.is_some() || tb.grad.is_some();
        self.push(shape, values, rg, op)
    }

    /// `[m, n] x [n] -> [m]`.
    pub fn matvec(&mut self, m: Var, x: Var) -> Result<Var> {
        let (ms, xs) = (self.shape(m), self.shape(x));
        if ms.len() != 2 || xs.len() != 1 || ms[1] != xs[0] {
            return shape_err("matvec", format!("cannot multiply {ms:?} by {xs:?}"));
        }
        let (rows, cols) = (ms[0], ms[1]);
        let mv = &self.nodes[m.0].tensor.values;
        let xv = &self.nodes[x.0].tensor.values;
        let values = (0..rows)
            .map(|i| {
                mv[i * cols..(i + 1) * cols]
                    .iter()
                    .zip(xv)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        let rg = self.requires_grad(m) || self.requires_grad(x);
        Ok(self.push(vec![rows], values, rg, Op::MatVec(m, x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.binary(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.binary(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.binary(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// Multiplies by a fixed real constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| c * v)
    }

    /// Multiplies every entry of `x` by the single entry of the recorded scalar `s`.
    pub fn scale_by(&mut self, s: Var, x: Var) -> Result<Var> {
        if self.tensor(s).len() != 1 {
            return shape_err(
                "scale_by",
                format!("scale must be a scalar, got {:?}", self.shape(s)),
            );
        }
        let c = self.value(s)[0];
        let rg = self.requires_grad(s) || self.requires_grad(x);
        let t = &self.nodes[x.0].tensor;
        let values = t.values.iter().map(|v| c * v).collect();
        let shape = t.shape.clone();
        Ok(self.push(shape, values, rg, Op::ScaleBy(s, x)))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid_scalar)
    }

    /// `exp(x_i / tau) / sum_j exp(x_j / tau)` over a vector, with max subtraction.
    pub fn softmax_temp(&mut self, x: Var, tau: f64) -> Result<Var> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive and finite, got {tau}"
            )));
        }
        if self.shape(x).len() != 1 {
            return shape_err(
                "softmax",
                format!("expected a vector, got {:?}", self.shape(x)),
            );
        }
        let xv = self.value(x);
        if xv.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("softmax input".into()));
        }
        let values = softmax_values(xv, tau);
        let shape = self.shape(x).to_vec();
        let rg = self.requires_grad(x);
        Ok(self.push(shape, values, rg, Op::Softmax(x, tau)))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.softmax_temp(x, 1.0)
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn ln_floor(&mut self, x: Var, floor: f64) -> Var {
        self.unary(x, Op::LnFloor(x, floor), |v| v.max(floor).ln())
    }

    /// Concatenates along the leading axis. Trailing dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat", "no operands");
        };
        let trailing = self.shape(first)[1..].to_vec();
        let mut lead = 0;
        let mut values = Vec::new();
        let mut rg = false;
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != trailing[..] {
                return shape_err(
                    "concat",
                    format!("trailing dims {:?} differ from {:?}", &s[1..], trailing),
                );
            }
            lead += s[0];
            values.extend_from_slice(self.value(p));
            rg |= self.requires_grad(p);
        }
        let mut shape = vec![lead];
        shape.extend(trailing);
        Ok(self.push(shape, values, rg, Op::Concat(parts.to_vec())))
    }

    /// Takes `count` consecutive entries of the leading axis starting at `start`.
    pub fn slice(&mut self, x: Var, start: usize, count: usize) -> Result<Var> {
        let s = self.shape(x);
        if count == 0 || start + count > s[0] {
            return shape_err(
                "slice",
                format!("range {start}..{} out of bounds for {s:?}", start + count),
            );
        }
        let stride: usize = s[1..].iter().product();
        let mut shape = s.to_vec();
        shape[0] = count;
        let values = self.value(x)[start * stride..(start + count) * stride].to_vec();
        let rg = self.requires_grad(x);
        Ok(self.push(shape, values, rg, Op::Slice(x, start * stride)))
    }

    /// Single entry of a vector, as a `[1]` tensor.
    pub fn index(&mut self, x: Var, i: usize) -> Result<Var> {
        if self.shape(x).len() != 1 {
            return shape_err(
                "index",
                format!("expected a vector, got {:?}", self.shape(x)),
            );
        }
        self.slice(x, i, 1)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.tensor(x).len() || shape.contains(&0) {
            return shape_err(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape(x)),
            );
        }
        let values = self.value(x).to_vec();
        let rg = self.requires_grad(x);
        Ok(self.push(shape.to_vec(), values, rg, Op::Reshape(x)))
    }

    /// Row selection on a `[rows, width]` tensor; the sparse form of a 0/1
    /// matrix with at most one 1 per row acting on the row axis.
    pub fn gather_rows(&mut self, x: Var, map: &RowMap) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return shape_err("gather_rows", format!("expected a matrix, got {s:?}"));
        }
        let (rows, width) = (s[0], s[1]);
        if map.len() != rows || map.iter().flatten().any(|&r| r >= rows) {
            return shape_err("gather_rows", format!("row map does not fit {s:?}"));
        }
        let xv = self.value(x);
        let mut values = vec![0.0; rows * width];
        for (r, src) in map.iter().enumerate() {
            if let Some(src) = src {
                values[r * width..(r + 1) * width]
                    .copy_from_slice(&xv[src * width..(src + 1) * width]);
            }
        }
        let rg = self.requires_grad(x);
        Ok(self.push(
            vec![rows, width],
            values,
            rg,
            Op::Gather(x, map.clone(), width),
        ))
    }

    /// `sum_k w[k] * gather_rows(x, maps[k])` as a single node.
    pub fn mix_rows(&mut self, x: Var, weights: Var, maps: &Rc<[RowMap]>) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return shape_err("mix_rows", format!("expected a matrix, got {s:?}"));
        }
        let (rows, width) = (s[0], s[1]);
        if self.shape(weights) != [maps.len()] {
            return shape_err(
                "mix_rows",
                format!("{} maps vs weights {:?}", maps.len(), self.shape(weights)),
            );
        }
        if maps
            .iter()
            .any(|m| m.len() != rows || m.iter().flatten().any(|&r| r >= rows))
        {
            return shape_err("mix_rows", format!("row map does not fit {s:?}"));
        }
        let xv = self.value(x);
        let wv = self.value(weights);
        let mut values = vec![0.0; rows * width];
        for (map, &w) in maps.iter().zip(wv) {
            for (r, src) in map.iter().enumerate() {
                if let Some(src) = src {
                    let from = &xv[src * width..(src + 1) * width];
                    for (d, v) in values[r * width..(r + 1) * width].iter_mut().zip(from) {
                        *d += w * v;
                    }
                }
            }
        }
        let rg = self.requires_grad(x) || self.requires_grad(weights);
        Ok(self.push(
            vec![rows, width],
            values,
            rg,
            Op::MixRows(x, weights, maps.clone(), width),
        ))
    }

    /// Copy of the matrix `x` with the vector `v` added to row `row`.
    pub fn add_to_row(&mut self, x: Var, v: Var, row: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 || row >= s[0] || self.shape(v) != [s[1]] {
            return shape_err(
                "add_to_row",
                format!("cannot add {:?} to row {row} of {s:?}", self.shape(v)),
            );
        }
        let (shape, width) = (s.to_vec(), s[1]);
        let mut values = self.value(x).to_vec();
        for (d, a) in values[row * width..(row + 1) * width]
            .iter_mut()
            .zip(self.value(v))
        {
            *d += a;
        }
        let rg = self.requires_grad(x) || self.requires_grad(v);
        Ok(self.push(shape, values, rg, Op::AddToRow(x, v, row)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.requires_grad(x);
        self.push(vec![1], vec![s], rg, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.requires_grad(x);
        self.push(vec![1], vec![m], rg, Op::Mean(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    /// Resets every gradient buffer on the tape to zero.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = node.tensor.grad.as_mut() {
                g.iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    fn accumulate(&mut self, v: Var, contribution: impl IntoIterator<Item = f64>) {
        if let Some(g) = self.nodes[v.0].tensor.grad.as_mut() {
            for (dst, c) in g.iter_mut().zip(contribution) {
                *dst += c;
            }
        }
    }

    /// Reverse pass from a scalar. Gradients accumulate into every leaf that
    /// requires them; calling twice doubles the leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.tensor(loss).len() != 1 {
            return Err(Error::NotScalar(self.shape(loss).to_vec()));
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        // Intermediate gradients are scratch space for this pass.
        for node in &mut self.nodes[..=loss.0] {
            if !matches!(node.op, Op::Leaf) {
                if let Some(g) = node.tensor.grad.as_mut() {
                    g.iter_mut().for_each(|x| *x = 0.0);
                }
            }
        }
        self.nodes[loss.0].tensor.grad.as_mut().unwrap()[0] = 1.0;

        for i in (0..=loss.0).rev() {
            let op = self.nodes[i].op.clone();
            if matches!(op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.nodes[i].tensor.grad.take() else {
                continue;
            };
            self.backward_node(i, &op, &g);
            self.nodes[i].tensor.grad = Some(g);
        }
        Ok(())
    }

    fn backward_node(&mut self, i: usize, op: &Op, g: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::MatVec(m, x) => {
                let cols = self.shape(x)[0];
                if self.requires_grad(m) {
                    let xv = self.value(x).to_vec();
                    let dm = g
                        .iter()
                        .flat_map(|gi| xv.iter().map(move |xj| gi * xj))
                        .collect::<Vec<_>>();
                    self.accumulate(m, dm);
                }
                if self.requires_grad(x) {
                    let mv = self.value(m);
                    let mut dx = vec![0.0; cols];
                    for (r, gi) in g.iter().enumerate() {
                        for (d, w) in dx.iter_mut().zip(&mv[r * cols..(r + 1) * cols]) {
                            *d += gi * w;
                        }
                    }
                    self.accumulate(x, dx);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, g.iter().copied());
                self.accumulate(b, g.iter().copied());
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g.iter().copied());
                self.accumulate(b, g.iter().map(|v| -v));
            }
            Op::Mul(a, b) => {
                let bv = self.value(b).to_vec();
                let av = self.value(a).to_vec();
                self.accumulate(a, g.iter().zip(&bv).map(|(g, y)| g * y));
                self.accumulate(b, g.iter().zip(&av).map(|(g, x)| g * x));
            }
            Op::Scale(x, c) => self.accumulate(x, g.iter().map(|v| c * v)),
            Op::ScaleBy(s, x) => {
                let c = self.value(s)[0];
                let ds: f64 = g.iter().zip(self.value(x)).map(|(g, x)| g * x).sum();
                self.accumulate(s, [ds]);
                self.accumulate(x, g.iter().map(|v| c * v));
            }
            Op::Tanh(x) => {
                let y = self.nodes[i].tensor.values.clone();
                self.accumulate(x, g.iter().zip(&y).map(|(g, y)| g * (1.0 - y * y)));
            }
            Op::Sigmoid(x) => {
                let y = self.nodes[i].tensor.values.clone();
                self.accumulate(x, g.iter().zip(&y).map(|(g, y)| g * y * (1.0 - y)));
            }
            Op::Softmax(x, tau) => {
                let y = self.nodes[i].tensor.values.clone();
                let dot: f64 = g.iter().zip(&y).map(|(g, y)| g * y).sum();
                self.accumulate(x, g.iter().zip(&y).map(|(g, y)| y * (g - dot) / tau));
            }
            Op::LnFloor(x, floor) => {
                let xv = self.value(x).to_vec();
                self.accumulate(
                    x,
                    g.iter()
                        .zip(&xv)
                        .map(|(g, &x)| if x > floor { g / x } else { 0.0 }),
                );
            }
            Op::Concat(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.tensor(p).len();
                    self.accumulate(p, g[offset..offset + n].iter().copied());
                    offset += n;
                }
            }
            Op::Slice(x, offset) => {
                if let Some(dx) = self.nodes[x.0].tensor.grad.as_mut() {
                    for (d, gv) in dx[offset..offset + g.len()].iter_mut().zip(g) {
                        *d += gv;
                    }
                }
            }
            Op::Reshape(x) => self.accumulate(x, g.iter().copied()),
            Op::Gather(x, ref map, width) => {
                if let Some(dx) = self.nodes[x.0].tensor.grad.as_mut() {
                    for (r, src) in map.iter().enumerate() {
                        if let Some(src) = src {
                            for k in 0..width {
                                dx[src * width + k] += g[r * width + k];
                            }
                        }
                    }
                }
            }
            Op::MixRows(x, w, ref maps, width) => {
                if self.requires_grad(w) {
                    let xv = self.value(x);
                    let dw: Vec<f64> = maps
                        .iter()
                        .map(|map| {
                            map.iter()
                                .enumerate()
                                .filter_map(|(r, src)| src.map(|s| (r, s)))
                                .map(|(r, s)| {
                                    g[r * width..(r + 1) * width]
                                        .iter()
                                        .zip(&xv[s * width..(s + 1) * width])
                                        .map(|(a, b)| a * b)
                                        .sum::<f64>()
                                })
                                .sum()
                        })
                        .collect();
                    self.accumulate(w, dw);
                }
                if self.requires_grad(x) {
                    let wv = self.value(w).to_vec();
                    let dx = self.nodes[x.0].tensor.grad.as_mut().unwrap();
                    for (map, wk) in maps.iter().zip(wv) {
                        for (r, src) in map.iter().enumerate() {
                            if let Some(src) = src {
                                for k in 0..width {
                                    dx[src * width + k] += wk * g[r * width + k];
                                }
                            }
                        }
                    }
                }
            }
            Op::AddToRow(x, v, row) => {
                self.accumulate(x, g.iter().copied());
                let width = self.tensor(v).len();
                self.accumulate(v, g[row * width..(row + 1) * width].iter().copied());
            }
            Op::Sum(x) => {
                let n = self.tensor(x).len();
                self.accumulate(x, std::iter::repeat_n(g[0], n));
            }
            Op::Mean(x) => {
                let n = self.tensor(x).len();
                self.accumulate(x, std::iter::repeat_n(g[0] / n as f64, n));
            }
            Op::Square(x) => {
                let xv = self.value(x).to_vec();
                self.accumulate(x, g.iter().zip(&xv).map(|(g, x)| 2.0 * g * x));
            }
        }
    }
}

/// Plain-slice softmax with temperature, shared by the tape op and by callers
/// that need probabilities without recording.
pub fn softmax_values(x: &[f64], tau: f64) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| ((v - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_of_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.zeros(&[3]).unwrap();
        let y = t.tanh(x);
        assert_eq!(t.value(y), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn identity_matvec() {
        let mut t = Tape::new();
        let m = t.constant(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = t.constant(&[2], vec![3.5, -1.25]).unwrap();
        let y = t.matvec(m, x).unwrap();
        assert_eq!(t.value(y), &[3.5, -1.25]);
    }

    #[test]
    fn sigmoid_matches_direct_evaluation() {
        // 1/(1+e^{-0.5}) and its complement, evaluated independently in long form.
        let expected = [0.622_459_331_201_854_6, 0.377_540_668_798_145_4];
        let mut t = Tape::new();
        let x = t.constant(&[2], vec![0.5, -0.5]).unwrap();
        let y = t.sigmoid(x);
        for (a, b) in t.value(y).iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let mut t = Tape::new();
        let m = t.zeros(&[2, 3]).unwrap();
        let x = t.zeros(&[2]).unwrap();
        let err = t.matvec(m, x).unwrap_err();
        assert!(matches!(err, Error::Shape { op: "matvec", .. }));
        assert!(t.add(m, x).is_err());
        assert!(t.slice(x, 1, 2).is_err());
        assert!(t.leaf(&[2, 2], vec![1.0], false).is_err());
    }

    #[test]
    fn backward_needs_scalar() {
        let mut t = Tape::new();
        let x = t.param(&[2], vec![1.0, 2.0]).unwrap();
        let y = t.square(x);
        assert!(matches!(t.backward(y), Err(Error::NotScalar(_))));
    }

    #[test]
    fn unused_parameter_keeps_zero_gradient() {
        let mut t = Tape::new();
        let used = t.param(&[2], vec![1.0, 2.0]).unwrap();
        let unused = t.param(&[2], vec![3.0, 4.0]).unwrap();
        let sq = t.square(used);
        let loss = t.sum(sq);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(unused).unwrap(), &[0.0, 0.0]);
        assert_eq!(t.grad(used).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn reused_tensor_accumulates() {
        let mut t = Tape::new();
        let x = t.param(&[1], vec![3.0]).unwrap();
        let y = t.mul(x, x).unwrap();
        let z = t.add(y, x).unwrap();
        let loss = t.sum(z);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[7.0]);
    }

    #[test]
    fn gather_matches_dense_row_map() {
        let mut t = Tape::new();
        let x = t.param(&[3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let map: RowMap = vec![Some(2), None, Some(0)].into();
        let y = t.gather_rows(x, &map).unwrap();
        assert_eq!(t.value(y), &[5., 6., 0., 0., 1., 2.]);
        let s = t.sum(y);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[1., 1., 0., 0., 1., 1.]);
    }

    #[test]
    fn fused_mix_matches_composed_gathers() {
        let maps: Rc<[RowMap]> = vec![
            RowMap::from(vec![Some(2), Some(0), Some(1)]),
            RowMap::from(vec![Some(1), None, Some(0)]),
        ]
        .into();
        let xs = vec![0.5, -1., 2., 0.25, -0.75, 1.5];
        let ws = vec![0.3, 0.7];
        let grads = |fused: bool| {
            let mut t = Tape::new();
            let x = t.param(&[3, 2], xs.clone()).unwrap();
            let w = t.param(&[2], ws.clone()).unwrap();
            let v = t.param(&[2], vec![1.0, -2.0]).unwrap();
            let y = if fused {
                let m = t.mix_rows(x, w, &maps).unwrap();
                t.add_to_row(m, v, 0).unwrap()
            } else {
                let mut acc = t.zeros(&[3, 2]).unwrap();
                for (k, map) in maps.iter().enumerate() {
                    let g = t.gather_rows(x, map).unwrap();
                    let wk = t.index(w, k).unwrap();
                    let term = t.scale_by(wk, g).unwrap();
                    acc = t.add(acc, term).unwrap();
                }
                let head = t.reshape(v, &[1, 2]).unwrap();
                let rest = t.zeros(&[2, 2]).unwrap();
                let write = t.concat(&[head, rest]).unwrap();
                t.add(acc, write).unwrap()
            };
            let sq = t.square(y);
            let loss = t.sum(sq);
            t.backward(loss).unwrap();
            let out = t.value(y).to_vec();
            (out, [x, w, v].map(|p| t.grad(p).unwrap().to_vec()))
        };
        let (a, ga) = grads(true);
        let (b, gb) = grads(false);
        for (p, q) in a
            .iter()
            .chain(ga.iter().flatten())
            .zip(b.iter().chain(gb.iter().flatten()))
        {
            assert!((p - q).abs() < 1e-12, "{p} vs {q}");
        }
    }

    #[test]
    fn fused_ops_reject_bad_shapes() {
        let mut t = Tape::new();
        let x = t.zeros(&[2, 2]).unwrap();
        let w = t.zeros(&[1]).unwrap();
        let short: Rc<[RowMap]> = vec![RowMap::from(vec![Some(0)])].into();
        assert!(t.mix_rows(x, w, &short).is_err());
        let v = t.zeros(&[3]).unwrap();
        assert!(t.add_to_row(x, v, 0).is_err());
        let v = t.zeros(&[2]).unwrap();
        assert!(t.add_to_row(x, v, 2).is_err());
    }
}
