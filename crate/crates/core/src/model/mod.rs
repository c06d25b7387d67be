//! The two-pathway deinterlacing network.
//!
//! Three convolutional layers form a trunk shared by both pathways. Pathway
//! A (layers 4a, 5a) predicts the missing even field of frame `t`; pathway B
//! (4b, 5b) predicts the missing odd field of frame `t + 1`. The last layer
//! of each pathway has vertical stride 2, so a `H x W` interlaced input
//! yields two `H/2 x W` fields.

mod weights;

use std::fmt;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autograd::{Graph, NodeId};
use crate::conv::{conv2d, ConvSpec, Padding};
use crate::frame::{weave, Field, Frame, FrameError, Parity};
use crate::tensor::{relu, Element, Shape, Tensor, TensorError};

pub use weights::{
    load_weights, read_weights, save_weights, write_weights, Extension, WeightsError, WeightsFile, WEIGHTS_MAGIC,
    WEIGHTS_VERSION,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("interlaced input height {0} is odd; field parity would be ambiguous")]
    OddHeight(usize),
    #[error("network input must be single-channel, got {0} channels")]
    Channels(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Position of a layer in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerId {
    L1,
    L2,
    L3,
    L4a,
    L5a,
    L4b,
    L5b,
}

impl LayerId {
    /// Storage order, also the order of [`DeinterlaceNet::layers`].
    pub const ALL: [LayerId; 7] = [
        LayerId::L1,
        LayerId::L2,
        LayerId::L3,
        LayerId::L4a,
        LayerId::L5a,
        LayerId::L4b,
        LayerId::L5b,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerId::L1 => "L1",
            LayerId::L2 => "L2",
            LayerId::L3 => "L3",
            LayerId::L4a => "L4a",
            LayerId::L5a => "L5a",
            LayerId::L4b => "L4b",
            LayerId::L5b => "L5b",
        }
    }

    pub fn is_trunk(self) -> bool {
        matches!(self, LayerId::L1 | LayerId::L2 | LayerId::L3)
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Width hyperparameters. The defaults build the published topology; other
/// values exist for ablations and fast tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub trunk_channels: usize,
    pub branch_channels: usize,
    pub padding: Padding,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            trunk_channels: 64,
            branch_channels: 32,
            padding: Padding::ReplicateSame,
        }
    }
}

impl NetConfig {
    pub fn layer_spec(&self, id: LayerId) -> (ConvSpec, Activation) {
        let t = self.trunk_channels;
        let b = self.branch_channels;
        let (spec, act) = match id {
            LayerId::L1 => (ConvSpec::new(1, t, 3), Activation::Relu),
            LayerId::L2 => (ConvSpec::new(t, t, 3), Activation::Relu),
            LayerId::L3 => (ConvSpec::new(t, t, 1), Activation::Identity),
            LayerId::L4a | LayerId::L4b => (ConvSpec::new(t, b, 3), Activation::Identity),
            LayerId::L5a | LayerId::L5b => (ConvSpec::new(b, 1, 3).with_stride_h(2), Activation::Identity),
        };
        (spec.with_padding(self.padding), act)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T: Element = f32> {
    pub id: LayerId,
    pub spec: ConvSpec,
    pub activation: Activation,
    /// `(out, in, kh, kw)`.
    pub weights: Tensor<T>,
    /// `(out, 1, 1, 1)`.
    pub bias: Tensor<T>,
}

impl<T: Element> ConvLayer<T> {
    fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let y = conv2d(input, &self.weights, self.bias.data(), &self.spec)?;
        Ok(match self.activation {
            Activation::Identity => y,
            Activation::Relu => relu(&y),
        })
    }

    fn forward_graph(&self, g: &mut Graph<T>, input: NodeId, params: &mut Vec<NodeId>) -> Result<NodeId, TensorError> {
        let w = g.param(self.weights.clone());
        let b = g.param(self.bias.clone());
        params.push(w);
        params.push(b);
        let y = g.conv2d(input, w, b, self.spec)?;
        Ok(match self.activation {
            Activation::Identity => y,
            Activation::Relu => g.relu(y),
        })
    }

    fn cast<U: Element>(&self) -> ConvLayer<U> {
        ConvLayer {
            id: self.id,
            spec: self.spec,
            activation: self.activation,
            weights: self.weights.cast(),
            bias: self.bias.cast(),
        }
    }
}

/// Training bookkeeping stored next to the weights.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingMeta {
    pub epochs_completed: u32,
    pub final_loss: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeinterlaceNet<T: Element = f32> {
    config: NetConfig,
    layers: Vec<ConvLayer<T>>,
    pub meta: TrainingMeta,
}

/// Graph handles produced by [`DeinterlaceNet::forward_graph`].
#[derive(Debug, Clone)]
pub struct GraphOutputs {
    /// Weight and bias node per layer, in [`LayerId::ALL`] order.
    pub params: Vec<NodeId>,
    pub even_t: NodeId,
    pub odd_t1: NodeId,
}

impl<T: Element> DeinterlaceNet<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = LayerId::ALL
            .iter()
            .map(|&id| {
                let (spec, activation) = config.layer_spec(id);
                let receptive = spec.kernel_h * spec.kernel_w;
                let fan_in = spec.in_channels * receptive;
                let fan_out = spec.out_channels * receptive;
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound);
                let weights = Tensor::from_fn(spec.weight_shape(), |_| T::from_f64(dist.sample(&mut rng)));
                ConvLayer {
                    id,
                    spec,
                    activation,
                    weights,
                    bias: Tensor::zeros(Shape::new(spec.out_channels, 1, 1, 1)),
                }
            })
            .collect();
        Self {
            config,
            layers,
            meta: TrainingMeta::default(),
        }
    }

    pub(crate) fn from_layers(config: NetConfig, layers: Vec<ConvLayer<T>>, meta: TrainingMeta) -> Self {
        debug_assert_eq!(layers.len(), LayerId::ALL.len());
        Self { config, layers, meta }
    }

    pub fn config(&self) -> NetConfig {
        self.config
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn layer(&self, id: LayerId) -> &ConvLayer<T> {
        &self.layers[LayerId::ALL.iter().position(|&l| l == id).unwrap()]
    }

    pub fn layer_mut(&mut self, id: LayerId) -> &mut ConvLayer<T> {
        let i = LayerId::ALL.iter().position(|&l| l == id).unwrap();
        &mut self.layers[i]
    }

    /// Parameter tensors (weights then bias per layer) in storage order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn cast<U: Element>(&self) -> DeinterlaceNet<U> {
        DeinterlaceNet {
            config: self.config,
            layers: self.layers.iter().map(ConvLayer::cast).collect(),
            meta: self.meta,
        }
    }

    fn check_input(input: &Tensor<T>) -> Result<(), ModelError> {
        let s = input.shape();
        if s.channels != 1 {
            return Err(ModelError::Channels(s.channels));
        }
        if !s.height.is_multiple_of(2) {
            return Err(ModelError::OddHeight(s.height));
        }
        Ok(())
    }

    /// Predicts `(even field of t, odd field of t+1)` from an interlaced
    /// `[N, 1, H, W]` tensor. Each output is `[N, 1, H/2, W]`.
    pub fn forward(&self, interlaced: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>), ModelError> {
        Self::check_input(interlaced)?;
        let [l1, l2, l3, l4a, l5a, l4b, l5b] = self.layers.as_slice() else {
            unreachable!("network always has seven layers")
        };
        let trunk = l3.forward(&l2.forward(&l1.forward(interlaced)?)?)?;
        let even_t = l5a.forward(&l4a.forward(&trunk)?)?;
        let odd_t1 = l5b.forward(&l4b.forward(&trunk)?)?;
        Ok((even_t, odd_t1))
    }

    /// Forward pass of two independent networks, each recomputing the
    /// trunk. Produces the same outputs as [`forward`](Self::forward); used
    /// to measure what trunk sharing saves.
    pub fn forward_unshared(&self, interlaced: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>), ModelError> {
        Self::check_input(interlaced)?;
        let [l1, l2, l3, l4a, l5a, l4b, l5b] = self.layers.as_slice() else {
            unreachable!("network always has seven layers")
        };
        let trunk_a = l3.forward(&l2.forward(&l1.forward(interlaced)?)?)?;
        let even_t = l5a.forward(&l4a.forward(&trunk_a)?)?;
        let trunk_b = l3.forward(&l2.forward(&l1.forward(interlaced)?)?)?;
        let odd_t1 = l5b.forward(&l4b.forward(&trunk_b)?)?;
        Ok((even_t, odd_t1))
    }

    /// Records the forward pass on `g` with every weight as a trainable leaf.
    pub fn forward_graph(&self, g: &mut Graph<T>, input: NodeId) -> Result<GraphOutputs, ModelError> {
        Self::check_input(g.value(input))?;
        let mut params = Vec::with_capacity(2 * self.layers.len());
        let [l1, l2, l3, l4a, l5a, l4b, l5b] = self.layers.as_slice() else {
            unreachable!("network always has seven layers")
        };
        let h = l1.forward_graph(g, input, &mut params)?;
        let h = l2.forward_graph(g, h, &mut params)?;
        let trunk = l3.forward_graph(g, h, &mut params)?;
        let a = l4a.forward_graph(g, trunk, &mut params)?;
        let even_t = l5a.forward_graph(g, a, &mut params)?;
        let b = l4b.forward_graph(g, trunk, &mut params)?;
        let odd_t1 = l5b.forward_graph(g, b, &mut params)?;
        Ok(GraphOutputs { params, even_t, odd_t1 })
    }

    /// Reconstructs frames `t` and `t + 1` from one single-channel interlaced
    /// frame. Known rows are copied from the input; the network only fills
    /// the missing ones.
    pub fn deinterlace(&self, interlaced: &Frame) -> Result<(Frame, Frame), ModelError> {
        if interlaced.channels() != 1 {
            return Err(ModelError::Channels(interlaced.channels()));
        }
        if !interlaced.height().is_multiple_of(2) {
            return Err(ModelError::OddHeight(interlaced.height()));
        }
        let (even_t, odd_t1) = self.forward(&interlaced.to_tensor())?;
        let (odd_known, even_known) = interlaced.split()?;
        let frame_t = weave(&odd_known, &Field::from_tensor(Parity::Even, &even_t))?;
        let frame_t1 = weave(&even_known, &Field::from_tensor(Parity::Odd, &odd_t1))?;
        Ok((frame_t, frame_t1))
    }

    /// Multiply-accumulates for one forward pass at the given resolution.
    pub fn flop_count(&self, height: usize, width: usize, shared: bool) -> u64 {
        flop_count(&self.config, height, width, shared)
    }
}

/// Exact multiply-accumulate count of one forward pass. With `shared =
/// false` the trunk is counted once per pathway, as for two separate
/// networks.
pub fn flop_count(config: &NetConfig, height: usize, width: usize, shared: bool) -> u64 {
    let mut trunk = 0u64;
    let mut branches = 0u64;
    let (mut h, mut w) = (height, width);
    for id in [LayerId::L1, LayerId::L2, LayerId::L3] {
        let (spec, _) = config.layer_spec(id);
        (h, w) = spec.output_hw(h, w);
        trunk += spec.macs_per_output() * (h * w) as u64;
    }
    for pair in [[LayerId::L4a, LayerId::L5a], [LayerId::L4b, LayerId::L5b]] {
        let (mut bh, mut bw) = (h, w);
        for id in pair {
            let (spec, _) = config.layer_spec(id);
            (bh, bw) = spec.output_hw(bh, bw);
            branches += spec.macs_per_output() * (bh * bw) as u64;
        }
    }
    if shared {
        trunk + branches
    } else {
        2 * trunk + branches
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetConfig {
        NetConfig {
            trunk_channels: 8,
            branch_channels: 4,
            padding: Padding::ReplicateSame,
        }
    }

    fn input(h: usize, w: usize) -> Tensor<f32> {
        Tensor::from_fn(Shape::new(1, 1, h, w), |i| ((i * 7919) % 101) as f32 / 100.0)
    }

    #[test]
    fn default_topology() {
        let net = DeinterlaceNet::<f32>::init(NetConfig::default(), 0);
        let shapes: Vec<_> = net.layers().iter().map(|l| l.weights.shape()).collect();
        assert_eq!(
            shapes,
            vec![
                Shape::new(64, 1, 3, 3),
                Shape::new(64, 64, 3, 3),
                Shape::new(64, 64, 1, 1),
                Shape::new(32, 64, 3, 3),
                Shape::new(1, 32, 3, 3),
                Shape::new(32, 64, 3, 3),
                Shape::new(1, 32, 3, 3),
            ]
        );
        let acts: Vec<_> = net.layers().iter().map(|l| l.activation).collect();
        assert_eq!(acts[..2], [Activation::Relu; 2]);
        assert!(acts[2..].iter().all(|&a| a == Activation::Identity));
        assert_eq!(net.layer(LayerId::L5b).spec.stride_h, 2);
        assert!(net.layers()[..4].iter().all(|l| l.spec.stride_h == 1));
    }

    #[test]
    fn forward_shape_64() {
        let net = DeinterlaceNet::<f32>::init(NetConfig::default(), 1);
        let (a, b) = net.forward(&input(64, 64)).unwrap();
        assert_eq!(a.shape(), Shape::new(1, 1, 32, 64));
        assert_eq!(b.shape(), Shape::new(1, 1, 32, 64));
        assert!(a.all_finite() && b.all_finite());
    }

    #[test]
    fn forward_rejects_odd_height() {
        let net = DeinterlaceNet::<f32>::init(small(), 1);
        assert!(matches!(net.forward(&input(7, 8)), Err(ModelError::OddHeight(7))));
    }

    #[test]
    fn forward_is_deterministic() {
        let a = DeinterlaceNet::<f32>::init(small(), 9);
        let b = DeinterlaceNet::<f32>::init(small(), 9);
        assert_eq!(a, b);
        let x = input(16, 12);
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    }

    #[test]
    fn unshared_forward_matches_shared() {
        let net = DeinterlaceNet::<f32>::init(small(), 2);
        let x = input(10, 6);
        assert_eq!(net.forward(&x).unwrap(), net.forward_unshared(&x).unwrap());
    }

    #[test]
    fn deinterlace_keeps_known_rows() {
        let net = DeinterlaceNet::<f32>::init(small(), 3);
        let f = Frame::from_fn(9, 8, |x, y| ((x * 3 + y * 5) % 7) as f32 / 7.0).unwrap();
        let (t, t1) = net.deinterlace(&f).unwrap();
        for y in 0..8 {
            if y % 2 == 0 {
                assert_eq!(t.row(y), f.row(y));
            } else {
                assert_eq!(t1.row(y), f.row(y));
            }
        }
    }

    #[test]
    fn glorot_bounds() {
        let net = DeinterlaceNet::<f32>::init(NetConfig::default(), 4);
        let l2 = net.layer(LayerId::L2);
        let bound = (6.0f64 / (64.0 * 9.0 * 2.0)).sqrt() as f32;
        assert!(l2.weights.data().iter().all(|v| v.abs() <= bound));
        assert!(l2.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flop_closed_form() {
        let cfg = NetConfig::default();
        let (h, w) = (64, 64);
        let px = (h * w) as u64;
        let per_pixel = 9 * 64 + 9 * 64 * 64 + 64 * 64 + 2 * 9 * 64 * 32;
        let last = 2 * 9 * 32;
        assert_eq!(flop_count(&cfg, h, w, true), per_pixel * px + last * px / 2);
        assert!(flop_count(&cfg, h, w, true) < flop_count(&cfg, h, w, false));
    }
}
