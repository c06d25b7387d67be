//! Frames, fields and the parity convention.
//!
//! Rows are 0-indexed. The *odd* field holds rows 0, 2, 4, ... (the first,
//! third, fifth scanline counting from one) and the *even* field holds rows
//! 1, 3, 5, .... In an interlaced frame the odd field belongs to time `t`
//! and the even field to time `t + 1`.

use std::fmt;

use thiserror::Error;

use crate::tensor::{Element, Shape, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame data has {len} values, expected {width}x{height}x{channels}")]
    LengthMismatch {
        width: usize,
        height: usize,
        channels: usize,
        len: usize,
    },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
    #[error("empty frame {0}x{1}")]
    Empty(usize, usize),
    #[error("frame height {0} is odd; interlaced content needs an even height")]
    OddHeight(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(String, String),
    #[error("fields have the same parity ({0}); weave needs one odd and one even field")]
    SameParity(Parity),
}

pub type Result<T, E = FrameError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    /// 0-indexed rows 0, 2, 4, ...
    Odd,
    /// 0-indexed rows 1, 3, 5, ...
    Even,
}

impl Parity {
    pub fn of_row(row: usize) -> Self {
        if row.is_multiple_of(2) {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    /// First full-frame row carrying this parity.
    pub fn offset(self) -> usize {
        match self {
            Parity::Odd => 0,
            Parity::Even => 1,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Parity::Odd => Parity::Even,
            Parity::Even => Parity::Odd,
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Odd => "odd",
            Parity::Even => "even",
        })
    }
}

/// Full-height raster with interleaved channels, values nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(FrameError::Channels(channels));
        }
        if width == 0 || height == 0 {
            return Err(FrameError::Empty(width, height));
        }
        if data.len() != width * height * channels {
            return Err(FrameError::LengthMismatch {
                width,
                height,
                channels,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn dims(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }

    pub fn same_dims(&self, other: &Frame) -> Result<()> {
        if self.width != other.width || self.height != other.height || self.channels != other.channels {
            return Err(FrameError::DimensionMismatch(self.dims(), other.dims()));
        }
        Ok(())
    }

    fn stride(&self) -> usize {
        self.width * self.channels
    }

    pub fn row(&self, y: usize) -> &[f32] {
        let s = self.stride();
        &self.data[y * s..(y + 1) * s]
    }

    pub fn row_mut(&mut self, y: usize) -> &mut [f32] {
        let s = self.stride();
        &mut self.data[y * s..(y + 1) * s]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// One channel as a single-channel frame.
    pub fn channel(&self, c: usize) -> Frame {
        assert!(c < self.channels);
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Frame::new(self.width, self.height, 1, data).expect("channel extraction")
    }

    /// Interleaves single-channel planes into one frame.
    pub fn from_channels(planes: &[Frame]) -> Result<Frame> {
        let first = &planes[0];
        for p in planes {
            if p.channels != 1 {
                return Err(FrameError::Channels(p.channels));
            }
            first.same_dims(p)?;
        }
        let n = first.width * first.height;
        let mut data = Vec::with_capacity(n * planes.len());
        for i in 0..n {
            data.extend(planes.iter().map(|p| p.data[i]));
        }
        Frame::new(first.width, first.height, planes.len(), data)
    }

    pub fn clamped(mut self) -> Frame {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// Rectangular crop.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Frame {
        assert!(x0 + width <= self.width && y0 + height <= self.height);
        let mut data = Vec::with_capacity(width * height * self.channels);
        for y in y0..y0 + height {
            let row = self.row(y);
            data.extend_from_slice(&row[x0 * self.channels..(x0 + width) * self.channels]);
        }
        Frame::new(width, height, self.channels, data).expect("crop")
    }

    /// Single-channel frame as a `[1, 1, H, W]` tensor.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        assert_eq!(self.channels, 1, "to_tensor expects a single-channel frame");
        Tensor::from_vec(
            Shape::new(1, 1, self.height, self.width),
            self.data.iter().map(|&v| T::from_f64(v as f64)).collect(),
        )
        .expect("frame shape")
    }

    /// First plane of a tensor as a single-channel frame.
    pub fn from_tensor<T: Element>(t: &Tensor<T>) -> Frame {
        let s = t.shape();
        Frame::new(
            s.width,
            s.height,
            1,
            t.plane(0, 0).iter().map(|v| v.to_f64() as f32).collect(),
        )
        .expect("tensor shape")
    }

    /// Splits into (odd field, even field).
    pub fn split(&self) -> Result<(Field, Field)> {
        if !self.height.is_multiple_of(2) {
            return Err(FrameError::OddHeight(self.height));
        }
        Ok((self.field(Parity::Odd), self.field(Parity::Even)))
    }

    /// Rows of the given parity. The height must be even.
    pub fn field(&self, parity: Parity) -> Field {
        let mut data = Vec::with_capacity(self.data.len() / 2);
        for y in (parity.offset()..self.height).step_by(2) {
            data.extend_from_slice(self.row(y));
        }
        Field {
            parity,
            width: self.width,
            height: self.height / 2,
            channels: self.channels,
            data,
        }
    }
}

/// Half-height raster holding the rows of one parity.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    parity: Parity,
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Field {
    pub fn new(parity: Parity, width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let f = Frame::new(width, height, channels, data)?;
        Ok(Self {
            parity,
            width,
            height,
            channels,
            data: f.data,
        })
    }

    /// Field of the given parity from a half-height single-channel tensor.
    pub fn from_tensor<T: Element>(parity: Parity, t: &Tensor<T>) -> Field {
        let f = Frame::from_tensor(t);
        Field {
            parity,
            width: f.width,
            height: f.height,
            channels: 1,
            data: f.data,
        }
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Half height: number of rows held.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let s = self.width * self.channels;
        &self.data[i * s..(i + 1) * s]
    }

    /// Rows as a single-channel half-height frame.
    pub fn as_frame(&self) -> Frame {
        Frame::new(self.width, self.height, self.channels, self.data.clone()).expect("field")
    }

    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        self.as_frame().to_tensor()
    }

    /// Full frame with this field's rows in place and `fill` for the rest.
    pub fn expand(&self, fill: f32) -> Frame {
        let stride = self.width * self.channels;
        let mut data = vec![fill; 2 * self.height * stride];
        for i in 0..self.height {
            let y = 2 * i + self.parity.offset();
            data[y * stride..(y + 1) * stride].copy_from_slice(self.row(i));
        }
        Frame::new(self.width, 2 * self.height, self.channels, data).expect("expand")
    }
}

/// Interleaves a known field with a predicted field of the opposite parity.
/// Rows of the known parity are copied bit-exact from `known`.
pub fn weave(known: &Field, predicted: &Field) -> Result<Frame> {
    if known.parity == predicted.parity {
        return Err(FrameError::SameParity(known.parity));
    }
    if known.width != predicted.width || known.height != predicted.height || known.channels != predicted.channels {
        return Err(FrameError::DimensionMismatch(
            known.as_frame().dims(),
            predicted.as_frame().dims(),
        ));
    }
    let (odd, even) = match known.parity {
        Parity::Odd => (known, predicted),
        Parity::Even => (predicted, known),
    };
    let mut data = Vec::with_capacity(2 * known.data.len());
    for i in 0..known.height {
        data.extend_from_slice(odd.row(i));
        data.extend_from_slice(even.row(i));
    }
    Frame::new(known.width, 2 * known.height, known.channels, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(values: &[f32]) -> Frame {
        Frame::new(1, values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn weave_interleaves_by_definition() {
        let known = Field::new(Parity::Odd, 1, 2, 1, vec![1.0, 3.0]).unwrap();
        let predicted = Field::new(Parity::Even, 1, 2, 1, vec![2.0, 4.0]).unwrap();
        assert_eq!(weave(&known, &predicted).unwrap(), rows(&[1.0, 2.0, 3.0, 4.0]));
        // argument order does not matter for placement
        assert_eq!(weave(&predicted, &known).unwrap(), rows(&[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn weave_rejects_same_parity() {
        let a = Field::new(Parity::Odd, 1, 2, 1, vec![1.0, 3.0]).unwrap();
        assert_eq!(weave(&a, &a).unwrap_err(), FrameError::SameParity(Parity::Odd));
    }

    #[test]
    fn split_rejects_odd_height() {
        assert_eq!(rows(&[0.0; 3]).split().unwrap_err(), FrameError::OddHeight(3));
    }

    #[test]
    fn split_weave_rgb() {
        let f = Frame::new(2, 4, 3, (0..24).map(|i| i as f32 / 24.0).collect()).unwrap();
        let (odd, even) = f.split().unwrap();
        assert_eq!(odd.row(1), f.row(2));
        assert_eq!(even.row(1), f.row(3));
        assert_eq!(weave(&odd, &even).unwrap(), f);
    }

    #[test]
    fn channel_round_trip() {
        let f = Frame::new(2, 2, 3, (0..12).map(|i| i as f32).collect()).unwrap();
        let planes: Vec<_> = (0..3).map(|c| f.channel(c)).collect();
        assert_eq!(planes[1].data(), &[1.0, 4.0, 7.0, 10.0]);
        assert_eq!(Frame::from_channels(&planes).unwrap(), f);
    }

    #[test]
    fn rejects_bad_channel_count() {
        assert_eq!(Frame::new(1, 1, 2, vec![0.0; 2]).unwrap_err(), FrameError::Channels(2));
    }
}
