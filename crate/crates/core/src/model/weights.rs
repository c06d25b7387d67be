//! `DINW` weights files.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic        b"DINW"
//! version      u16
//! layer_count  u16                 (always 7, order L1 L2 L3 L4a L5a L4b L5b)
//! epochs       u32                 training metadata
//! final_loss   f32
//! per layer:
//!   in_ch out_ch kernel_h kernel_w stride_h stride_w padding activation   (u32 each)
//!   kernel       f32 x out_ch*in_ch*kernel_h*kernel_w
//!   bias         f32 x out_ch
//! ext_count    u16
//! per extension:
//!   tag          [u8; 4]
//!   length       u64
//!   payload      length bytes
//! ```
//!
//! Plain weight files carry no extensions; training checkpoints append
//! optimizer state and the loss history as extension records.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{Activation, ConvLayer, DeinterlaceNet, LayerId, NetConfig, TrainingMeta};
use crate::codec::{put_f32s, Reader, Truncated};
use crate::conv::{ConvSpec, Padding};
use crate::tensor::{Shape, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"DINW";
pub const WEIGHTS_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a weights file (bad magic bytes)")]
    NotWeightsFile,
    #[error("unsupported weights format version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("truncated weights file: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("shape mismatch in layer {layer}: {detail}")]
    ShapeMismatch { layer: &'static str, detail: String },
    #[error("weights file has {0} layers, expected 7")]
    LayerCount(u16),
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
}

impl From<Truncated> for WeightsError {
    fn from(t: Truncated) -> Self {
        WeightsError::Truncated {
            offset: t.offset,
            needed: t.needed,
        }
    }
}

/// Opaque tagged record appended after the layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extension {
    pub tag: [u8; 4],
    pub payload: Vec<u8>,
}

/// A decoded weights file.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub net: DeinterlaceNet<f32>,
    pub extensions: Vec<Extension>,
}

/// Encodes a network plus extension records.
pub fn write_weights(net: &DeinterlaceNet<f32>, extensions: &[Extension]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * net.param_count() + 256);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u16).to_le_bytes());
    out.extend_from_slice(&net.meta.epochs_completed.to_le_bytes());
    out.extend_from_slice(&net.meta.final_loss.to_le_bytes());
    for layer in net.layers() {
        let s = &layer.spec;
        for v in [
            s.in_channels as u32,
            s.out_channels as u32,
            s.kernel_h as u32,
            s.kernel_w as u32,
            s.stride_h as u32,
            s.stride_w as u32,
            s.padding.code(),
            layer.activation.code(),
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_f32s(&mut out, layer.weights.data());
        put_f32s(&mut out, layer.bias.data());
    }
    out.extend_from_slice(&(extensions.len() as u16).to_le_bytes());
    for ext in extensions {
        out.extend_from_slice(&ext.tag);
        out.extend_from_slice(&(ext.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&ext.payload);
    }
    out
}

struct RawLayer {
    spec: ConvSpec,
    padding_code: u32,
    activation_code: u32,
}

fn read_layer_header(r: &mut Reader<'_>) -> Result<RawLayer, WeightsError> {
    let mut v = [0usize; 6];
    for slot in &mut v {
        *slot = r.u32()? as usize;
    }
    let padding_code = r.u32()?;
    let activation_code = r.u32()?;
    Ok(RawLayer {
        spec: ConvSpec {
            in_channels: v[0],
            out_channels: v[1],
            kernel_h: v[2],
            kernel_w: v[3],
            stride_h: v[4],
            stride_w: v[5],
            padding: Padding::from_code(padding_code).unwrap_or_default(),
        },
        padding_code,
        activation_code,
    })
}

fn describe(spec: &ConvSpec, act: Option<Activation>) -> String {
    format!(
        "{} kernels of {}x{}x{}, stride {}x{}, activation {:?}",
        spec.out_channels, spec.kernel_h, spec.kernel_w, spec.in_channels, spec.stride_h, spec.stride_w, act
    )
}

/// Decodes and validates a weights file.
pub fn read_weights(bytes: &[u8]) -> Result<WeightsFile, WeightsError> {
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(|_| WeightsError::NotWeightsFile)? != WEIGHTS_MAGIC {
        return Err(WeightsError::NotWeightsFile);
    }
    let version = r.u16()?;
    if version != WEIGHTS_VERSION {
        return Err(WeightsError::Version {
            found: version,
            expected: WEIGHTS_VERSION,
        });
    }
    let count = r.u16()?;
    if count as usize != LayerId::ALL.len() {
        return Err(WeightsError::LayerCount(count));
    }
    let meta = TrainingMeta {
        epochs_completed: r.u32()?,
        final_loss: r.f32()?,
    };

    let mut layers = Vec::with_capacity(LayerId::ALL.len());
    let mut config = None;
    for id in LayerId::ALL {
        let raw = read_layer_header(&mut r)?;
        let mismatch = |detail: String| WeightsError::ShapeMismatch {
            layer: id.name(),
            detail,
        };
        let activation = Activation::from_code(raw.activation_code);
        if Padding::from_code(raw.padding_code).is_none() {
            return Err(mismatch(format!("unknown padding code {}", raw.padding_code)));
        }
        // Widths come from the first layer of the trunk and of pathway A.
        let cfg: &mut NetConfig = config.get_or_insert(NetConfig {
            trunk_channels: raw.spec.out_channels,
            branch_channels: 0,
            padding: raw.spec.padding,
        });
        if id == LayerId::L4a {
            cfg.branch_channels = raw.spec.out_channels;
        }
        let (expected, expected_act) = cfg.layer_spec(id);
        let expected = expected.with_padding(raw.spec.padding);
        if raw.spec != expected || activation != Some(expected_act) {
            return Err(mismatch(format!(
                "expected {}, found {}",
                describe(&expected, Some(expected_act)),
                describe(&raw.spec, activation)
            )));
        }
        if raw.spec.out_channels == 0 || raw.spec.in_channels == 0 {
            return Err(mismatch("zero channel count".into()));
        }
        let wshape = raw.spec.weight_shape();
        let weights = Tensor::from_vec(wshape, r.f32s(wshape.numel())?).map_err(|e| mismatch(e.to_string()))?;
        let bias_shape = Shape::new(raw.spec.out_channels, 1, 1, 1);
        let bias = Tensor::from_vec(bias_shape, r.f32s(raw.spec.out_channels)?).map_err(|e| mismatch(e.to_string()))?;
        layers.push(ConvLayer {
            id,
            spec: raw.spec,
            activation: expected_act,
            weights,
            bias,
        });
    }
    let config = config.expect("seven layers read");

    let ext_count = r.u16()?;
    let mut extensions = Vec::with_capacity(ext_count as usize);
    for _ in 0..ext_count {
        let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
        let len = r.u64()? as usize;
        extensions.push(Extension {
            tag,
            payload: r.take(len)?.to_vec(),
        });
    }
    if r.remaining() != 0 {
        return Err(WeightsError::TrailingBytes(r.remaining()));
    }
    Ok(WeightsFile {
        net: DeinterlaceNet::from_layers(config, layers, meta),
        extensions,
    })
}

pub fn save_weights(net: &DeinterlaceNet<f32>, path: impl AsRef<Path>) -> Result<(), WeightsError> {
    fs::write(path, write_weights(net, &[]))?;
    Ok(())
}

/// Loads a network, ignoring any extension records.
pub fn load_weights(path: impl AsRef<Path>) -> Result<DeinterlaceNet<f32>, WeightsError> {
    Ok(read_weights(&fs::read(path)?)?.net)
}
