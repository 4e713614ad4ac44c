//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node in creation order, which is
//! already a topological order; [`Graph::backward`] replays it in reverse.
//! Only first-order gradients are supported.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ops::{self, ConvSpec};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A named trainable tensor with an optional binary gradient mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Entries where the mask is zero are held at zero: they receive no
    /// gradient and no optimizer update.
    pub mask: Option<Tensor<T>>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        Parameter { name: name.into(), value, mask: None }
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec },
    ConvTranspose2d { input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec },
    LeakyRelu { input: Var, slope: T },
    Concat { a: Var, b: Var },
    IndexSelect { input: Var, indices: Vec<usize> },
    Add { a: Var, b: Var },
    MulConst { input: Var, factor: Tensor<T> },
    Scale { input: Var, factor: T },
    Sum { input: Var },
    Charbonnier { pred: Var, target: Var, eps: T },
    GroupLasso { weight: Var, groups: usize, mask: Option<Tensor<T>> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Multiply-accumulate count of one executed convolution, per batch item.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MacRecord {
    pub scope: String,
    pub output: Shape,
    pub macs: u64,
}

#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, (Var, Var)>,
    grad_enabled: bool,
    scope: String,
    mac_log: Option<Vec<MacRecord>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Graph::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), params: HashMap::new(), grad_enabled: true, scope: String::new(), mac_log: None }
    }

    /// A graph that never requires gradients; [`Graph::release`] can then
    /// free intermediates that are no longer read.
    pub fn inference() -> Self {
        Graph { grad_enabled: false, ..Graph::new() }
    }

    /// Starts recording a [`MacRecord`] for every convolution executed.
    pub fn count_macs(mut self) -> Self {
        self.mac_log = Some(Vec::new());
        self
    }

    pub fn mac_log(&self) -> Option<&[MacRecord]> {
        self.mac_log.as_deref()
    }

    /// Label attached to subsequent MAC records.
    pub fn set_scope(&mut self, scope: impl Into<String>) {
        self.scope = scope.into();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad: requires_grad && self.grad_enabled });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A constant input; never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf that receives a gradient.
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds a parameter, applying its mask so masked entries get zero
    /// gradient. The returned var is the (masked) value used by the forward.
    /// Binding the same name twice returns the first binding.
    pub fn param(&mut self, p: &Parameter<T>) -> Var {
        if let Some(&(_, bound)) = self.params.get(&p.name) {
            return bound;
        }
        let leaf = self.push(p.value.clone(), Op::Leaf, true);
        let bound = match &p.mask {
            Some(mask) => self.mul_const(leaf, mask.clone()).expect("mask shape matches parameter"),
            None => leaf,
        };
        self.params.insert(p.name.clone(), (leaf, bound));
        bound
    }

    /// Frees a node's value in inference mode. Reading it afterwards panics.
    pub fn release(&mut self, v: Var) {
        if !self.grad_enabled {
            self.nodes[v.0].value = Tensor::zeros(Shape::new(0, 0, 0, 0));
        }
    }

    fn log_macs(&mut self, output: Shape, macs: u64) {
        if let Some(log) = self.mac_log.as_mut() {
            log.push(MacRecord { scope: self.scope.clone(), output: Shape { n: 1, ..output }, macs });
        }
    }

    /// Kernel entries that can be nonzero: masked parameters count only their
    /// kept entries.
    fn active_weights(&self, weight: Var) -> u64 {
        match &self.nodes[weight.0].op {
            Op::MulConst { factor, .. } => factor.data().iter().filter(|x| **x != T::zero()).count() as u64,
            _ => self.nodes[weight.0].value.numel() as u64,
        }
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let bias_vals = bias.map(|b| self.value(b).data().to_vec());
        let y = ops::conv2d_raw(self.value(input), self.value(weight), bias_vals.as_deref(), spec)?;
        let s = y.shape();
        let macs = (s.h * s.w) as u64 * self.active_weights(weight);
        self.log_macs(s, macs);
        let rg = self.any_grad(&[input, weight]) || bias.is_some_and(|b| self.any_grad(&[b]));
        Ok(self.push(y, Op::Conv2d { input, weight, bias, spec }, rg))
    }

    pub fn conv_transpose2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let bias_vals = bias.map(|b| self.value(b).data().to_vec());
        let y = ops::conv_transpose2d_raw(self.value(input), self.value(weight), bias_vals.as_deref(), spec)?;
        let xs = self.shape(input);
        // counted per input pixel: each one scatters a full kernel
        let macs = (xs.h * xs.w) as u64 * self.active_weights(weight);
        self.log_macs(y.shape(), macs);
        let rg = self.any_grad(&[input, weight]) || bias.is_some_and(|b| self.any_grad(&[b]));
        Ok(self.push(y, Op::ConvTranspose2d { input, weight, bias, spec }, rg))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: T) -> Var {
        let y = ops::leaky_relu(self.value(input), slope);
        let rg = self.any_grad(&[input]);
        self.push(y, Op::LeakyRelu { input, slope }, rg)
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::concat_channels(self.value(a), self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(y, Op::Concat { a, b }, rg))
    }

    pub fn index_select_channels(&mut self, input: Var, indices: &[usize]) -> Result<Var> {
        let y = ops::index_select_channels(self.value(input), indices)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(y, Op::IndexSelect { input, indices: indices.to_vec() }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::add(self.value(a), self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(y, Op::Add { a, b }, rg))
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(&mut self, input: Var, factor: Tensor<T>) -> Result<Var> {
        let y = self.value(input).zip_map(&factor, |x, f| x * f)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(y, Op::MulConst { input, factor }, rg))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let y = self.value(input).map(|x| x * factor);
        let rg = self.any_grad(&[input]);
        self.push(y, Op::Scale { input, factor }, rg)
    }

    /// Sum of all elements, as a 1×1×1×1 tensor.
    pub fn sum(&mut self, input: Var) -> Var {
        let y = Tensor::scalar(self.value(input).sum());
        let rg = self.any_grad(&[input]);
        self.push(y, Op::Sum { input }, rg)
    }

    /// Mean over all elements of `sqrt((pred − target)² + eps²)`.
    pub fn charbonnier(&mut self, pred: Var, target: Var, eps: T) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        p.expect_same_shape(t, "charbonnier")?;
        let e2 = eps * eps;
        let total: T = p.data().iter().zip(t.data()).map(|(&a, &b)| ((a - b) * (a - b) + e2).sqrt()).sum();
        let y = Tensor::scalar(total / T::lit(p.numel() as f64));
        let rg = self.any_grad(&[pred, target]);
        Ok(self.push(y, Op::Charbonnier { pred, target, eps }, rg))
    }

    /// `Σ_g Σ_i ‖W[g-th filter block, i]‖₂` for a `(O, I, 1, 1)` kernel,
    /// skipping columns that are fully masked within a group.
    pub fn group_lasso(&mut self, weight: Var, groups: usize, mask: Option<Tensor<T>>) -> Result<Var> {
        let w = self.value(weight);
        let norms = column_norms(w, groups, mask.as_ref())?;
        let y = Tensor::scalar(norms.iter().copied().sum());
        let rg = self.any_grad(&[weight]);
        Ok(self.push(y, Op::GroupLasso { weight, groups, mask }, rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ls = self.shape(loss);
        if ls.numel() != 1 {
            return Err(Error::contract(format!("backward needs a scalar loss, got shape {ls:?}")));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(ls, T::one()));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        let params = self.params.iter().map(|(k, (leaf, _))| (k.clone(), *leaf)).collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let mut acc = |v: Var, delta: Tensor<T>| -> Result<()> {
            if !self.nodes[v.0].requires_grad {
                return Ok(());
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                        *e += *d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
            Ok(())
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, spec } => {
                let (dx, dw) = ops::conv2d_backward(self.value(*input), self.value(*weight), g, *spec);
                acc(*input, dx)?;
                acc(*weight, dw)?;
                if let Some(b) = bias {
                    let db = ops::channel_sums(g);
                    acc(*b, Tensor::from_vec(self.shape(*b), db)?)?;
                }
            }
            Op::ConvTranspose2d { input, weight, bias, spec } => {
                let (dx, dw) = ops::conv_transpose2d_backward(self.value(*input), self.value(*weight), g, *spec);
                acc(*input, dx)?;
                acc(*weight, dw)?;
                if let Some(b) = bias {
                    let db = ops::channel_sums(g);
                    acc(*b, Tensor::from_vec(self.shape(*b), db)?)?;
                }
            }
            Op::LeakyRelu { input, slope } => {
                acc(*input, ops::leaky_relu_backward(self.value(*input), g, *slope))?;
            }
            Op::Concat { a, b } => {
                let (ga, gb) = ops::split_channels(g, self.shape(*a).c);
                acc(*a, ga)?;
                acc(*b, gb)?;
            }
            Op::IndexSelect { input, indices } => {
                acc(*input, ops::index_select_backward(self.shape(*input), indices, g))?;
            }
            Op::Add { a, b } => {
                acc(*a, g.clone())?;
                acc(*b, g.clone())?;
            }
            Op::MulConst { input, factor } => {
                acc(*input, g.zip_map(factor, |x, f| x * f)?)?;
            }
            Op::Scale { input, factor } => {
                acc(*input, g.map(|x| x * *factor))?;
            }
            Op::Sum { input } => {
                let s = g.data()[0];
                acc(*input, Tensor::full(self.shape(*input), s))?;
            }
            Op::Charbonnier { pred, target, eps } => {
                let (p, t) = (self.value(*pred), self.value(*target));
                let scale = g.data()[0] / T::lit(p.numel() as f64);
                let e2 = *eps * *eps;
                let dp = p.zip_map(t, |a, b| {
                    let d = a - b;
                    scale * d / (d * d + e2).sqrt()
                })?;
                acc(*target, dp.map(|x| -x))?;
                acc(*pred, dp)?;
            }
            Op::GroupLasso { weight, groups, mask } => {
                let w = self.value(*weight);
                let s = g.data()[0];
                acc(*weight, group_lasso_grad(w, *groups, mask.as_ref(), s)?)?;
            }
        }
        Ok(())
    }
}

fn check_pointwise<T: Scalar>(w: &Tensor<T>, groups: usize) -> Result<()> {
    let s = w.shape();
    if s.h != 1 || s.w != 1 {
        return Err(Error::contract(format!("group lasso expects a 1x1 kernel, got {s:?}")));
    }
    if groups == 0 || s.n % groups != 0 {
        return Err(Error::Dimension { op: "group_lasso", axis: "output channel", expected: groups, found: s.n });
    }
    Ok(())
}

/// L2 norm of every (group, column) block; fully masked columns give 0.
pub(crate) fn column_norms<T: Scalar>(w: &Tensor<T>, groups: usize, mask: Option<&Tensor<T>>) -> Result<Vec<T>> {
    check_pointwise(w, groups)?;
    let s = w.shape();
    let (o, i) = (s.n, s.c);
    let per = o / groups;
    let mut out = vec![T::zero(); groups * i];
    for g in 0..groups {
        for col in 0..i {
            let mut sq = T::zero();
            for f in g * per..(g + 1) * per {
                let kept = mask.is_none_or(|m| m.data()[f * i + col] != T::zero());
                if kept {
                    let v = w.data()[f * i + col];
                    sq += v * v;
                }
            }
            out[g * i + col] = sq.sqrt();
        }
    }
    Ok(out)
}

fn group_lasso_grad<T: Scalar>(w: &Tensor<T>, groups: usize, mask: Option<&Tensor<T>>, upstream: T) -> Result<Tensor<T>> {
    let norms = column_norms(w, groups, mask)?;
    let s = w.shape();
    let (o, i) = (s.n, s.c);
    let per = o / groups;
    let mut d = Tensor::zeros(s);
    for f in 0..o {
        let g = f / per;
        for col in 0..i {
            let n = norms[g * i + col];
            let kept = mask.is_none_or(|m| m.data()[f * i + col] != T::zero());
            // subgradient 0 at the non-smooth point
            if kept && n > T::zero() {
                d.data_mut()[f * i + col] = upstream * w.data()[f * i + col] / n;
            }
        }
    }
    Ok(d)
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: HashMap<String, Var>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to the raw (unmasked) parameter leaf.
    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name).and_then(|v| self.get(*v))
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_of_add_has_unit_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::<f64>::new();
        let a = g.variable(Tensor::randn(Shape::new(1, 2, 3, 3), 1.0, &mut rng));
        let b = g.variable(Tensor::randn(Shape::new(1, 2, 3, 3), 1.0, &mut rng));
        let s = g.add(a, b).unwrap();
        let loss = g.sum(s);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(a).unwrap().data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::<f32>::new();
        let a = g.variable(Tensor::zeros(Shape::new(1, 1, 2, 2)));
        assert!(matches!(g.backward(a), Err(Error::Contract(_))));
    }

    #[test]
    fn charbonnier_closed_forms() {
        let mut g = Graph::<f64>::new();
        let p = g.constant(Tensor::full(Shape::new(1, 1, 2, 2), 0.5));
        let l = g.charbonnier(p, p, 1e-3).unwrap();
        assert!((g.value(l).data()[0] - 1e-3).abs() < 1e-15);
        let a = g.constant(Tensor::scalar(3.0));
        let b = g.constant(Tensor::scalar(0.0));
        let l = g.charbonnier(a, b, 1e-3).unwrap();
        assert!((g.value(l).data()[0] - (9.0f64 + 1e-6).sqrt()).abs() < 1e-15);
        assert!((g.value(l).data()[0] - 3.000000167).abs() < 1e-9);
    }

    #[test]
    fn group_lasso_is_column_norm_sum() {
        let mut g = Graph::<f64>::new();
        let w = g.variable(Tensor::from_vec(Shape::new(2, 1, 1, 1), vec![3.0, 4.0]).unwrap());
        let l = g.group_lasso(w, 1, None).unwrap();
        assert_eq!(g.value(l).data()[0], 5.0);
        let z = g.variable(Tensor::zeros(Shape::new(4, 3, 1, 1)));
        let l = g.group_lasso(z, 2, None).unwrap();
        assert_eq!(g.value(l).data()[0], 0.0);
    }

    #[test]
    fn masked_param_gets_zero_gradient() {
        let mut p = Parameter::new("w", Tensor::<f64>::full(Shape::new(2, 2, 1, 1), 1.0));
        p.mask = Some(Tensor::from_vec(Shape::new(2, 2, 1, 1), vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(Shape::new(1, 2, 2, 2), 2.0));
        let w = g.param(&p);
        let y = g.conv2d(x, w, None, ConvSpec::default()).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        let gw = grads.param("w").unwrap();
        assert_eq!(gw.data(), &[8.0, 0.0, 0.0, 8.0]);
    }

    #[test]
    fn mac_log_counts_masked_kernels() {
        let mut p = Parameter::new("w", Tensor::<f32>::full(Shape::new(4, 4, 1, 1), 1.0));
        let mut mask = Tensor::full(Shape::new(4, 4, 1, 1), 1.0);
        mask.data_mut()[..4].fill(0.0);
        p.mask = Some(mask);
        let mut g = Graph::inference().count_macs();
        g.set_scope("lgc");
        let x = g.constant(Tensor::zeros(Shape::new(3, 4, 5, 6)));
        let w = g.param(&p);
        g.conv2d(x, w, None, ConvSpec::default()).unwrap();
        let log = g.mac_log().unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].macs, 30 * 12);
        assert_eq!(log[0].scope, "lgc");
    }
}
