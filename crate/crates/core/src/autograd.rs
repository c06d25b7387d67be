//! Reverse-mode differentiation over the small operator set the network
//! and its loss need.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value,
//! so node ids are already in topological order and [`Graph::backward`]
//! walks them in reverse. Nodes created with [`Graph::constant`] (and
//! everything computed only from constants) never receive gradients.

use crate::conv::{conv2d, conv2d_backward, ConvSpec};
use crate::tensor::{relu, relu_backward, Element, Result, Shape, Tensor, TensorError};
use crate::tv::{total_variation, total_variation_backward};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        input: NodeId,
        weights: NodeId,
        bias: NodeId,
        spec: ConvSpec,
    },
    Relu(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    SumSquares(NodeId),
    TotalVariation(NodeId),
    WeaveRows {
        even: NodeId,
        odd: NodeId,
    },
}

#[derive(Debug)]
struct Node<T: Element> {
    value: Tensor<T>,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Graph<T: Element = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).data()[0].to_f64()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, tracked: bool) -> NodeId {
        self.nodes.push(Node { value, op, tracked });
        NodeId(self.nodes.len() - 1)
    }

    fn tracked(&self, id: NodeId) -> bool {
        self.nodes[id.0].tracked
    }

    /// Trainable leaf: receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// `bias` holds one value per output channel (any shape with that many
    /// elements).
    pub fn conv2d(&mut self, input: NodeId, weights: NodeId, bias: NodeId, spec: ConvSpec) -> Result<NodeId> {
        let value = conv2d(self.value(input), self.value(weights), self.value(bias).data(), &spec)?;
        let tracked = self.tracked(input) || self.tracked(weights) || self.tracked(bias);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weights,
                bias,
                spec,
            },
            tracked,
        ))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let value = relu(self.value(input));
        let tracked = self.tracked(input);
        self.push(value, Op::Relu(input), tracked)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Add(a, b), tracked))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).sub(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Sub(a, b), tracked))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let value = self.value(a).scale(factor)?;
        let tracked = self.tracked(a);
        Ok(self.push(value, Op::Scale(a, factor), tracked))
    }

    fn scalar_node(&mut self, v: f64, op: Op, tracked: bool, name: &'static str) -> Result<NodeId> {
        let value = Tensor::scalar(T::from_f64(v)).ensure_finite(name)?;
        Ok(self.push(value, op, tracked))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).sum();
        let tracked = self.tracked(a);
        self.scalar_node(v, Op::Sum(a), tracked, "sum")
    }

    pub fn sum_squares(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).sum_squares();
        let tracked = self.tracked(a);
        self.scalar_node(v, Op::SumSquares(a), tracked, "sum_squares")
    }

    pub fn total_variation(&mut self, a: NodeId) -> Result<NodeId> {
        let v = total_variation(self.value(a));
        let tracked = self.tracked(a);
        self.scalar_node(v, Op::TotalVariation(a), tracked, "total_variation")
    }

    /// Interleaves two half-height tensors into a full-height one: output
    /// row `2i` is `even` row `i`, row `2i + 1` is `odd` row `i`.
    pub fn weave_rows(&mut self, even: NodeId, odd: NodeId) -> Result<NodeId> {
        let (a, b) = (self.value(even), self.value(odd));
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "weave_rows",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let value = weave_rows(a, b);
        let tracked = self.tracked(even) || self.tracked(odd);
        Ok(self.push(value, Op::WeaveRows { even, odd }, tracked))
    }

    /// Gradients of the scalar `loss` with respect to every tracked node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let shape = self.value(loss).shape();
        if !shape.is_scalar() {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar loss, got shape {shape}"
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::ONE));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Conv2d {
                    input,
                    weights,
                    bias,
                    spec,
                } => {
                    let want_input = self.tracked(*input);
                    let g = conv2d_backward(self.value(*input), self.value(*weights), spec, &upstream, want_input)?;
                    if let Some(gi) = g.input {
                        accumulate(&mut grads, *input, gi)?;
                    }
                    if self.tracked(*weights) {
                        accumulate(&mut grads, *weights, g.weights)?;
                    }
                    if self.tracked(*bias) {
                        let bshape = self.value(*bias).shape();
                        accumulate(&mut grads, *bias, Tensor::from_vec(bshape, g.bias)?)?;
                    }
                }
                Op::Relu(a) => {
                    let g = relu_backward(self.value(*a), &upstream)?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Add(a, b) => {
                    if self.tracked(*a) {
                        accumulate(&mut grads, *a, upstream.clone())?;
                    }
                    if self.tracked(*b) {
                        accumulate(&mut grads, *b, upstream)?;
                    }
                }
                Op::Sub(a, b) => {
                    if self.tracked(*a) {
                        accumulate(&mut grads, *a, upstream.clone())?;
                    }
                    if self.tracked(*b) {
                        accumulate(&mut grads, *b, upstream.scale(-1.0)?)?;
                    }
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut grads, *a, upstream.scale(*factor)?)?;
                }
                Op::Sum(a) => {
                    let g = upstream.data()[0];
                    accumulate(&mut grads, *a, Tensor::full(self.value(*a).shape(), g))?;
                }
                Op::SumSquares(a) => {
                    let g = upstream.data()[0].to_f64();
                    let x = self.value(*a);
                    accumulate(&mut grads, *a, x.map(|v| T::from_f64(2.0 * g * v.to_f64())))?;
                }
                Op::TotalVariation(a) => {
                    let g = upstream.data()[0].to_f64();
                    accumulate(&mut grads, *a, total_variation_backward(self.value(*a), g))?;
                }
                Op::WeaveRows { even, odd } => {
                    let (ge, go) = unweave_rows(&upstream);
                    if self.tracked(*even) {
                        accumulate(&mut grads, *even, ge)?;
                    }
                    if self.tracked(*odd) {
                        accumulate(&mut grads, *odd, go)?;
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Element>(grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) -> Result<()> {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Row interleave of two equally shaped tensors.
pub fn weave_rows<T: Element>(even: &Tensor<T>, odd: &Tensor<T>) -> Tensor<T> {
    let s = even.shape();
    let out_shape = Shape::new(s.batch, s.channels, 2 * s.height, s.width);
    let mut out = Vec::with_capacity(out_shape.numel());
    for (pe, po) in even
        .data()
        .chunks_exact(s.plane())
        .zip(odd.data().chunks_exact(s.plane()))
    {
        for (re, ro) in pe.chunks_exact(s.width).zip(po.chunks_exact(s.width)) {
            out.extend_from_slice(re);
            out.extend_from_slice(ro);
        }
    }
    Tensor::from_vec(out_shape, out).expect("woven shape")
}

/// Inverse of [`weave_rows`].
pub fn unweave_rows<T: Element>(full: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let s = full.shape();
    assert!(s.height.is_multiple_of(2), "unweave needs an even height");
    let half = Shape::new(s.batch, s.channels, s.height / 2, s.width);
    let mut even = Vec::with_capacity(half.numel());
    let mut odd = Vec::with_capacity(half.numel());
    for pair in full.data().chunks_exact(2 * s.width) {
        even.extend_from_slice(&pair[..s.width]);
        odd.extend_from_slice(&pair[s.width..]);
    }
    (
        Tensor::from_vec(half, even).expect("half shape"),
        Tensor::from_vec(half, odd).expect("half shape"),
    )
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T: Element> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient of a leaf node, `None` for constants or nodes the loss does
    /// not depend on.
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}
