//! sRGB <-> CIE L*a*b* (D65 white).

use crate::frame::{Frame, FrameError};

// sRGB primaries to XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.240_454_2, -1.537_138_5, -0.498_531_4],
    [-0.969_266_0, 1.876_010_8, 0.041_556_0],
    [0.055_643_4, -0.204_025_9, 1.057_225_2],
];

const WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];

const DELTA: f64 = 6.0 / 29.0;

fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

fn mat(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

/// Gamma-encoded sRGB in [0, 1] to (L* in [0, 100], a*, b*).
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let xyz = mat(&RGB_TO_XYZ, rgb.map(srgb_to_linear));
    let [fx, fy, fz] = [0, 1, 2].map(|i| lab_f(xyz[i] / WHITE[i]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Inverse of [`rgb_to_lab`]; the result is not clamped.
pub fn lab_to_rgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let f = [fy + lab[1] / 500.0, fy, fy - lab[2] / 200.0];
    let xyz = [0, 1, 2].map(|i| lab_f_inv(f[i]) * WHITE[i]);
    mat(&XYZ_TO_RGB, xyz).map(linear_to_srgb)
}

/// Lightness of an RGB frame, rescaled from [0, 100] to [0, 1]. Single-channel
/// frames are returned unchanged (they are taken to be lightness already).
pub fn rgb_to_l(frame: &Frame) -> Frame {
    if frame.channels() == 1 {
        return frame.clone();
    }
    let data = frame
        .data()
        .chunks_exact(3)
        .map(|px| {
            let l = rgb_to_lab([px[0] as f64, px[1] as f64, px[2] as f64])[0];
            (l / 100.0).clamp(0.0, 1.0) as f32
        })
        .collect();
    Frame::new(frame.width(), frame.height(), 1, data).expect("same extents")
}

/// Splits an RGB frame into (L/100, a*, b*) planes.
pub fn rgb_to_lab_planes(frame: &Frame) -> Result<[Frame; 3], FrameError> {
    if frame.channels() != 3 {
        return Err(FrameError::Channels(frame.channels()));
    }
    let n = frame.width() * frame.height();
    let mut planes = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for px in frame.data().chunks_exact(3) {
        let lab = rgb_to_lab([px[0] as f64, px[1] as f64, px[2] as f64]);
        planes[0].push((lab[0] / 100.0) as f32);
        planes[1].push(lab[1] as f32);
        planes[2].push(lab[2] as f32);
    }
    let [l, a, b] = planes;
    let mk = |d| Frame::new(frame.width(), frame.height(), 1, d);
    Ok([mk(l)?, mk(a)?, mk(b)?])
}

/// Inverse of [`rgb_to_lab_planes`], clamped to [0, 1].
pub fn lab_planes_to_rgb(planes: &[Frame; 3]) -> Result<Frame, FrameError> {
    planes[0].same_dims(&planes[1])?;
    planes[0].same_dims(&planes[2])?;
    let n = planes[0].width() * planes[0].height();
    let mut data = Vec::with_capacity(3 * n);
    for i in 0..n {
        let lab = [
            planes[0].data()[i] as f64 * 100.0,
            planes[1].data()[i] as f64,
            planes[2].data()[i] as f64,
        ];
        data.extend(lab_to_rgb(lab).map(|v| v.clamp(0.0, 1.0) as f32));
    }
    Frame::new(planes[0].width(), planes[0].height(), 3, data)
}
