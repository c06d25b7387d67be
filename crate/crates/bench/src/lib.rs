//! Shared fixtures for the criterion benchmarks.

use weavenet_core::{Frame, Tensor};

/// Deterministic single-channel interlaced test frame.
pub fn test_frame(width: usize, height: usize) -> Frame {
    Frame::from_fn(width, height, |x, y| {
        let v = ((x * 13 + y * 7) % 97) as f32 / 96.0;
        if y % 2 == 0 {
            v
        } else {
            1.0 - v
        }
    })
    .expect("non-empty frame")
}

pub fn test_tensor(width: usize, height: usize) -> Tensor<f32> {
    test_frame(width, height).to_tensor()
}
