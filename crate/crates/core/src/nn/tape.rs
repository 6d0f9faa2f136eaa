//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value; `backward`
//! walks the nodes in reverse and accumulates vector-Jacobian products.
//! Parameters enter as leaves that remember their [`ParamId`], so the
//! gradient of each parameter is read off its leaf at the end.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A differentiable operation implemented outside this module.
///
/// `backward` receives the forward inputs, the forward output and the
/// gradient flowing into the output, and returns one optional gradient per
/// input (`None` means no gradient flows to that input).
pub trait Function {
    fn backward(
        &self,
        inputs: &[&Tensor2],
        output: &Tensor2,
        grad: &Tensor2,
    ) -> Vec<Option<Tensor2>>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    MulCol {
        x: Var,
        w: Var,
        col: usize,
    },
    ScaledSum(Var, f64),
    WeightedSum(Vec<(Var, f64)>),
    Custom {
        inputs: Vec<Var>,
        f: Box<dyn Function>,
    },
}

struct Node {
    value: Tensor2,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Gradients indexed by [`ParamId`]; absent entries received no gradient.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor2> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of `id`, zeros of the parameter's shape when none flowed.
    pub fn get_or_zeros(&self, id: ParamId, store: &ParamStore) -> Tensor2 {
        self.get(id).cloned().unwrap_or_else(|| {
            let (r, c) = store.value(id).shape();
            Tensor2::zeros(r, c)
        })
    }

    /// One gradient tensor per parameter, congruent with the store.
    pub fn dense(&self, store: &ParamStore) -> Vec<Tensor2> {
        store
            .iter()
            .map(|(id, _)| self.get_or_zeros(id, store))
            .collect()
    }

    pub fn set(&mut self, id: ParamId, grad: Tensor2) {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        self.grads[id.0] = Some(grad);
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
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

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor2, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A value no gradient is tracked for.
    pub fn constant(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf for a parameter; repeated calls return the same variable.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        self.param_vars.insert(id, v);
        v
    }

    /// Copies the value of `v` into a new leaf that blocks gradient flow.
    pub fn stop_gradient(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Adds a `1 x n` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::Dimension {
                op: "add_bias",
                left: xv.shape_str(),
                right: bv.shape_str(),
            });
        }
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (o, b) in value.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(value, Op::AddBias(x, bias), rg))
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(Error::Dimension {
                op,
                left: av.shape_str(),
                right: bv.shape_str(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("sub", a, b)?;
        let mut value = self.value(a).clone();
        for (o, v) in value.data_mut().iter_mut().zip(self.value(b).data()) {
            *o -= v;
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Scale(x, factor), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Sigmoid(x), rg)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Softmax(x), rg)
    }

    /// Row `i` of the output is row `ids[i]` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= tv.rows()) {
            return Err(Error::OutOfRange(
                "gather id",
                format!("{bad} >= table rows {}", tv.rows()),
            ));
        }
        let d = tv.cols();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(tv.row(i));
        }
        let value = Tensor2::from_vec(ids.len(), d, data)?;
        let rg = self.any_grad(&[table]);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.value(p).rows(),
            None => return Err(Error::State("concat of zero tensors".into())),
        };
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    left: self.value(parts[0]).shape_str(),
                    right: self.value(p).shape_str(),
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                value.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Multiplies every row of `x` by the scalar `w[row, col]`.
    pub fn mul_col(&mut self, x: Var, w: Var, col: usize) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.rows() != wv.rows() || col >= wv.cols() {
            return Err(Error::Dimension {
                op: "mul_col",
                left: xv.shape_str(),
                right: format!("{} column {col}", wv.shape_str()),
            });
        }
        let mut value = xv.clone();
        for r in 0..value.rows() {
            let s = wv.get(r, col);
            for o in value.row_mut(r) {
                *o *= s;
            }
        }
        let rg = self.any_grad(&[x, w]);
        Ok(self.push(value, Op::MulCol { x, w, col }, rg))
    }

    /// `factor · Σ x` as a 1x1 tensor.
    pub fn scaled_sum(&mut self, x: Var, factor: f64) -> Var {
        let value = Tensor2::scalar(self.value(x).sum() * factor);
        let rg = self.any_grad(&[x]);
        self.push(value, Op::ScaledSum(x, factor), rg)
    }

    /// `Σ wᵢ·xᵢ` over equally shaped terms.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let first = match terms.first() {
            Some(&(v, _)) => v,
            None => return Ok(self.constant(Tensor2::scalar(0.0))),
        };
        let (r, c) = self.value(first).shape();
        let mut value = Tensor2::zeros(r, c);
        for &(v, w) in terms {
            self.check_same("weighted_sum", first, v)?;
            for (o, x) in value.data_mut().iter_mut().zip(self.value(v).data()) {
                *o += w * x;
            }
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let rg = self.any_grad(&vars);
        Ok(self.push(value, Op::WeightedSum(terms.to_vec()), rg))
    }

    /// Records an externally implemented operation whose forward value was
    /// computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor2, f: impl Function + 'static) -> Var {
        let rg = self.any_grad(inputs);
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                f: Box::new(f),
            },
            rg,
        )
    }

    /// Gradient of the scalar `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.backward_with(loss, 1.0)
    }

    /// Like [`Tape::backward`] with `d(output)/d(loss) = seed`.
    pub fn backward_with(&self, loss: Var, seed: f64) -> Result<Gradients> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::State(
                "backward called without a recorded forward pass".into(),
            ));
        }
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Dimension {
                op: "backward",
                left: lv.shape_str(),
                right: "1x1 loss".into(),
            });
        }
        let mut grads: Vec<Option<Tensor2>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::scalar(seed));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if node.param.is_some() {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        let mut out = Gradients::default();
        for (idx, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Some(id), Some(g)) = (node.param, grads[idx].take()) {
                out.set(id, g);
            }
        }
        Ok(out)
    }

    fn propagate(&self, node: &Node, g: &Tensor2, grads: &mut [Option<Tensor2>]) {
        let mut acc = |v: Var, delta: Tensor2| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    acc(*a, g.matmul_t(bv));
                }
                if self.requires_grad(*b) {
                    acc(*b, av.t_matmul(g));
                }
            }
            Op::AddBias(x, bias) => {
                acc(*x, g.clone());
                if self.requires_grad(*bias) {
                    let mut gb = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (o, v) in gb.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(*bias, Tensor2::row_vector(gb));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Scale(x, k) => acc(*x, g.map(|v| v * k)),
            Op::Relu(x) => {
                let xv = self.value(*x);
                let mut d = g.clone();
                for (o, &xi) in d.data_mut().iter_mut().zip(xv.data()) {
                    if xi <= 0.0 {
                        *o = 0.0;
                    }
                }
                acc(*x, d);
            }
            Op::Sigmoid(x) => {
                let mut d = g.clone();
                for (o, &y) in d.data_mut().iter_mut().zip(node.value.data()) {
                    *o *= y * (1.0 - y);
                }
                acc(*x, d);
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let mut d = g.clone();
                for r in 0..d.rows() {
                    let yr = y.row(r);
                    let dot: f64 = g.row(r).iter().zip(yr).map(|(a, b)| a * b).sum();
                    for (o, &yi) in d.row_mut(r).iter_mut().zip(yr) {
                        *o = yi * (*o - dot);
                    }
                }
                acc(*x, d);
            }
            Op::Gather { table, ids } => {
                let (r, c) = self.value(*table).shape();
                let mut d = Tensor2::zeros(r, c);
                for (i, &id) in ids.iter().enumerate() {
                    for (o, v) in d.row_mut(id).iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                acc(*table, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    if self.requires_grad(p) {
                        let mut d = Tensor2::zeros(g.rows(), c);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + c]);
                        }
                        acc(p, d);
                    }
                    offset += c;
                }
            }
            Op::MulCol { x, w, col } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                if self.requires_grad(*x) {
                    let mut d = g.clone();
                    for r in 0..d.rows() {
                        let s = wv.get(r, *col);
                        for o in d.row_mut(r) {
                            *o *= s;
                        }
                    }
                    acc(*x, d);
                }
                if self.requires_grad(*w) {
                    let mut d = Tensor2::zeros(wv.rows(), wv.cols());
                    for r in 0..g.rows() {
                        let dot: f64 = g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum();
                        d.set(r, *col, dot);
                    }
                    acc(*w, d);
                }
            }
            Op::ScaledSum(x, k) => {
                let (r, c) = self.value(*x).shape();
                acc(*x, Tensor2::filled(r, c, g.item() * k));
            }
            Op::WeightedSum(terms) => {
                for &(v, w) in terms {
                    acc(v, g.map(|x| x * w));
                }
            }
            Op::Custom { inputs, f } => {
                let ins: Vec<&Tensor2> = inputs.iter().map(|&v| self.value(v)).collect();
                for (v, d) in inputs.iter().zip(f.backward(&ins, &node.value, g)) {
                    if let Some(d) = d {
                        acc(*v, d);
                    }
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
