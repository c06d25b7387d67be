//! Training-data synthesis: interlacing progressive pairs, cutting aligned
//! patch triplets, and splitting them into training and validation sets.

mod archive;
pub mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::color::rgb_to_l;
use crate::frame::{Frame, FrameError, Parity};
use crate::tensor::{Element, Shape, Tensor};

pub use archive::{
    load_archive, read_archive, save_archive, write_archive, ArchiveError, ARCHIVE_MAGIC, ARCHIVE_VERSION,
};

/// Side of the square training patches and the extraction stride.
pub const PATCH_SIZE: usize = 64;
/// Every source frame is rescaled to this square size before patching.
pub const RESCALE_SIZE: usize = 512;
/// Fraction of patch triplets used for training.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("frame {frame} is smaller than the {patch}x{patch} patch")]
    TooSmall { frame: String, patch: usize },
    #[error("patch size {size} and stride {stride} must be positive and even to keep field parity")]
    PatchGeometry { size: usize, stride: usize },
    #[error("patches are cut from single-channel frames, got {0} channels")]
    Channels(usize),
}

/// Builds an interlaced frame: rows of the odd field (0-indexed rows 0, 2,
/// ...) come from `frame_t`, rows of the even field from `frame_t1`.
pub fn interlace(frame_t: &Frame, frame_t1: &Frame) -> Result<Frame, DataError> {
    frame_t.same_dims(frame_t1)?;
    if !frame_t.height().is_multiple_of(2) {
        return Err(FrameError::OddHeight(frame_t.height()).into());
    }
    let mut out = frame_t.clone();
    for y in (Parity::Even.offset()..frame_t.height()).step_by(2) {
        out.row_mut(y).copy_from_slice(frame_t1.row(y));
    }
    Ok(out)
}

/// One training sample: an interlaced patch and the two half-patches the
/// network should produce from it.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTriplet {
    pub size: usize,
    /// `size x size` interlaced L-channel patch.
    pub input: Vec<f32>,
    /// Even-field rows (0-indexed 1, 3, ...) of the frame-`t` patch.
    pub target_even_t: Vec<f32>,
    /// Odd-field rows (0-indexed 0, 2, ...) of the frame-`t+1` patch.
    pub target_odd_t1: Vec<f32>,
    pub source_id: u32,
    pub origin_row: u32,
    pub origin_col: u32,
}

impl PatchTriplet {
    pub fn input_tensor<T: Element>(&self) -> Tensor<T> {
        to_tensor(&self.input, self.size, self.size)
    }

    pub fn target_even_t_tensor<T: Element>(&self) -> Tensor<T> {
        to_tensor(&self.target_even_t, self.size / 2, self.size)
    }

    pub fn target_odd_t1_tensor<T: Element>(&self) -> Tensor<T> {
        to_tensor(&self.target_odd_t1, self.size / 2, self.size)
    }

    fn rows(data: &[f32], size: usize, parity: Parity) -> Vec<f32> {
        data.chunks_exact(size)
            .skip(parity.offset())
            .step_by(2)
            .flatten()
            .copied()
            .collect()
    }

    /// Known odd-field rows of the frame-`t` patch (copied from the input).
    pub fn known_odd_t(&self) -> Vec<f32> {
        Self::rows(&self.input, self.size, Parity::Odd)
    }

    /// Known even-field rows of the frame-`t+1` patch (copied from the input).
    pub fn known_even_t1(&self) -> Vec<f32> {
        Self::rows(&self.input, self.size, Parity::Even)
    }

    pub fn known_odd_t_tensor<T: Element>(&self) -> Tensor<T> {
        to_tensor(&self.known_odd_t(), self.size / 2, self.size)
    }

    pub fn known_even_t1_tensor<T: Element>(&self) -> Tensor<T> {
        to_tensor(&self.known_even_t1(), self.size / 2, self.size)
    }
}

fn to_tensor<T: Element>(data: &[f32], height: usize, width: usize) -> Tensor<T> {
    Tensor::from_vec(
        Shape::new(1, 1, height, width),
        data.iter().map(|&v| T::from_f64(v as f64)).collect(),
    )
    .expect("patch extents")
}

/// Cuts aligned `size x size` patch triplets at the given stride. Origins
/// are multiples of the (even) stride, so every patch starts on an
/// odd-field row.
pub fn extract_patches(
    interlaced: &Frame,
    frame_t: &Frame,
    frame_t1: &Frame,
    size: usize,
    stride: usize,
    source_id: u32,
) -> Result<Vec<PatchTriplet>, DataError> {
    if size == 0 || stride == 0 || !size.is_multiple_of(2) || !stride.is_multiple_of(2) {
        return Err(DataError::PatchGeometry { size, stride });
    }
    interlaced.same_dims(frame_t)?;
    interlaced.same_dims(frame_t1)?;
    if interlaced.channels() != 1 {
        return Err(DataError::Channels(interlaced.channels()));
    }
    if interlaced.width() < size || interlaced.height() < size {
        return Err(DataError::TooSmall {
            frame: interlaced.dims(),
            patch: size,
        });
    }
    let mut out = Vec::new();
    for r in (0..=interlaced.height() - size).step_by(stride) {
        for c in (0..=interlaced.width() - size).step_by(stride) {
            let input = interlaced.crop(c, r, size, size).into_data();
            let t = frame_t.crop(c, r, size, size);
            let t1 = frame_t1.crop(c, r, size, size);
            out.push(PatchTriplet {
                size,
                input,
                target_even_t: t.field(Parity::Even).data().to_vec(),
                target_odd_t1: t1.field(Parity::Odd).data().to_vec(),
                source_id,
                origin_row: r as u32,
                origin_col: c as u32,
            });
        }
    }
    Ok(out)
}

/// Bilinear resampling with pixel-centre alignment.
pub fn resize_bilinear(frame: &Frame, width: usize, height: usize) -> Frame {
    if frame.width() == width && frame.height() == height {
        return frame.clone();
    }
    let ch = frame.channels();
    let sx = frame.width() as f64 / width as f64;
    let sy = frame.height() as f64 / height as f64;
    let axis = |o: usize, scale: f64, extent: usize| {
        let p = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (extent - 1) as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(extent - 1);
        (i0, i1, p - i0 as f64)
    };
    let mut data = Vec::with_capacity(width * height * ch);
    for y in 0..height {
        let (y0, y1, fy) = axis(y, sy, frame.height());
        for x in 0..width {
            let (x0, x1, fx) = axis(x, sx, frame.width());
            for c in 0..ch {
                let top = frame.get(x0, y0, c) as f64 * (1.0 - fx) + frame.get(x1, y0, c) as f64 * fx;
                let bot = frame.get(x0, y1, c) as f64 * (1.0 - fx) + frame.get(x1, y1, c) as f64 * fx;
                data.push((top * (1.0 - fy) + bot * fy) as f32);
            }
        }
    }
    Frame::new(width, height, ch, data).expect("resize extents")
}

/// How progressive pairs become patch triplets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchOptions {
    /// Square size frames are rescaled to; `None` keeps native resolution.
    pub rescale: Option<usize>,
    pub patch: usize,
    pub stride: usize,
}

impl Default for PatchOptions {
    fn default() -> Self {
        Self {
            rescale: Some(RESCALE_SIZE),
            patch: PATCH_SIZE,
            stride: PATCH_SIZE,
        }
    }
}

/// Rescales a progressive pair, converts it to lightness, interlaces it and
/// cuts patch triplets.
pub fn pair_to_patches(
    frame_t: &Frame,
    frame_t1: &Frame,
    options: &PatchOptions,
    source_id: u32,
) -> Result<Vec<PatchTriplet>, DataError> {
    frame_t.same_dims(frame_t1)?;
    let prep = |f: &Frame| {
        let f = match options.rescale {
            Some(s) => resize_bilinear(f, s, s),
            None => f.clone(),
        };
        rgb_to_l(&f).clamped()
    };
    let (xt, xt1) = (prep(frame_t), prep(frame_t1));
    let interlaced = interlace(&xt, &xt1)?;
    extract_patches(&interlaced, &xt, &xt1, options.patch, options.stride, source_id)
}

/// Patch triplets for many pairs, in source order. Pairs are processed in
/// parallel; the result order does not depend on scheduling.
pub fn pairs_to_patches(pairs: &[(Frame, Frame)], options: &PatchOptions) -> Result<Vec<PatchTriplet>, DataError> {
    let per_pair: Result<Vec<_>, _> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (a, b))| pair_to_patches(a, b, options, i as u32))
        .collect();
    Ok(per_pair?.into_iter().flatten().collect())
}

/// Number of training items for `n` samples: the validation side takes the
/// rounded-up remainder.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction) + 1e-9).floor() as usize
}

/// Deterministic shuffled split into (train, validation).
pub fn split_dataset<T: Clone>(items: &[T], fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = train_count(items.len(), fraction);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    (pick(&order[..n_train]), pick(&order[n_train..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(values: &[f32]) -> Frame {
        Frame::new(1, values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn interlace_by_definition() {
        let a = rows(&[10.0, 11.0, 12.0, 13.0]);
        let b = rows(&[20.0, 21.0, 22.0, 23.0]);
        assert_eq!(interlace(&a, &b).unwrap(), rows(&[10.0, 21.0, 12.0, 23.0]));
    }

    #[test]
    fn interlace_rejects_mismatch_and_odd_height() {
        let a = rows(&[0.0; 4]);
        assert!(matches!(interlace(&a, &rows(&[0.0; 6])), Err(DataError::Frame(_))));
        let odd = rows(&[0.0; 3]);
        assert!(matches!(
            interlace(&odd, &odd),
            Err(DataError::Frame(FrameError::OddHeight(3)))
        ));
    }

    #[test]
    fn one_512_pair_gives_64_patches() {
        let f = Frame::from_fn(512, 512, |x, y| ((x + y) % 256) as f32 / 255.0).unwrap();
        let g = Frame::from_fn(512, 512, |x, y| ((x * 3 + y) % 256) as f32 / 255.0).unwrap();
        let i = interlace(&f, &g).unwrap();
        let p = extract_patches(&i, &f, &g, 64, 64, 7).unwrap();
        assert_eq!(p.len(), 64);
        assert!(p.iter().all(|t| t.origin_row % 2 == 0 && t.source_id == 7));
        assert!(p.iter().all(|t| t.target_even_t.len() == 32 * 64));
    }

    #[test]
    fn targets_are_the_missing_rows() {
        let f = Frame::from_fn(8, 8, |x, y| (x + 10 * y) as f32).unwrap();
        let g = Frame::from_fn(8, 8, |x, y| (x + 10 * y) as f32 + 0.5).unwrap();
        let i = interlace(&f, &g).unwrap();
        let p = &extract_patches(&i, &f, &g, 4, 4, 0).unwrap()[3];
        assert_eq!((p.origin_row, p.origin_col), (4, 4));
        // frame t rows 5 and 7, columns 4..8
        assert_eq!(p.target_even_t, vec![54.0, 55.0, 56.0, 57.0, 74.0, 75.0, 76.0, 77.0]);
        // frame t+1 rows 4 and 6
        assert_eq!(p.target_odd_t1[0], 44.5);
        assert_eq!(p.known_odd_t(), f.crop(4, 4, 4, 4).field(Parity::Odd).data());
        assert_eq!(p.known_even_t1(), g.crop(4, 4, 4, 4).field(Parity::Even).data());
    }

    #[test]
    fn too_small_frame() {
        let f = Frame::filled(32, 32, 1, 0.0).unwrap();
        assert!(matches!(
            extract_patches(&f, &f, &f, 64, 64, 0),
            Err(DataError::TooSmall { patch: 64, .. })
        ));
    }

    #[test]
    fn odd_stride_rejected() {
        let f = Frame::filled(8, 8, 1, 0.0).unwrap();
        assert!(matches!(
            extract_patches(&f, &f, &f, 4, 3, 0),
            Err(DataError::PatchGeometry { .. })
        ));
    }

    #[test]
    fn split_counts() {
        assert_eq!(train_count(9792, TRAIN_FRACTION), 7833);
        assert_eq!(train_count(10, TRAIN_FRACTION), 8);
        let items: Vec<u32> = (0..9792).collect();
        let (a, b) = split_dataset(&items, TRAIN_FRACTION, 5);
        assert_eq!((a.len(), b.len()), (7833, 1959));
        let (a2, b2) = split_dataset(&items, TRAIN_FRACTION, 5);
        assert_eq!((&a, &b), (&a2, &b2));
        let mut all: Vec<u32> = a.into_iter().chain(b).collect();
        all.sort_unstable();
        assert_eq!(all, items);
    }

    #[test]
    fn resize_identity_and_constant() {
        let f = Frame::from_fn(5, 4, |x, y| (x * y) as f32).unwrap();
        assert_eq!(resize_bilinear(&f, 5, 4), f);
        let c = Frame::filled(7, 3, 3, 0.25).unwrap();
        let r = resize_bilinear(&c, 16, 9);
        assert!(r.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
        assert_eq!((r.width(), r.height(), r.channels()), (16, 9, 3));
    }
}
