//! Procedurally generated progressive clips: static scenes, moving
//! rectangles over a fixed background, and scrolling textures. Used as a
//! hermetic corpus for tests and demos.

use std::f64::consts::TAU;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::interlace;
use crate::frame::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClipKind {
    Static,
    MovingRects,
    Scrolling,
}

impl ClipKind {
    pub const ALL: [ClipKind; 3] = [ClipKind::Static, ClipKind::MovingRects, ClipKind::Scrolling];

    pub fn name(self) -> &'static str {
        match self {
            ClipKind::Static => "static",
            ClipKind::MovingRects => "moving",
            ClipKind::Scrolling => "scroll",
        }
    }
}

impl fmt::Display for ClipKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

#[derive(Debug, Clone)]
struct Rect {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    color: [f64; 3],
    stripes: f64,
}

/// Smooth colored waves plus a few hard-edged rectangles.
#[derive(Debug, Clone)]
struct Texture {
    base: [f64; 3],
    waves: Vec<Wave>,
    rects: Vec<Rect>,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng, width: usize, height: usize, rect_count: usize) -> Self {
        let base = [0; 3].map(|_| rng.gen_range(0.3..0.7));
        let waves = (0..4)
            .map(|_| {
                let period = rng.gen_range(5.0..40.0);
                let angle: f64 = rng.gen_range(0.0..TAU);
                let amp = rng.gen_range(0.04..0.14);
                Wave {
                    fx: angle.cos() / period,
                    fy: angle.sin() / period,
                    phase: rng.gen_range(0.0..TAU),
                    amp: [0; 3].map(|_| amp * rng.gen_range(0.5..1.0)),
                }
            })
            .collect();
        let rects = (0..rect_count).map(|_| random_rect(rng, width, height)).collect();
        Self { base, waves, rects }
    }

    fn background(&self, x: f64, y: f64) -> [f64; 3] {
        let mut c = self.base;
        for w in &self.waves {
            let s = (TAU * (w.fx * x + w.fy * y) + w.phase).sin();
            for (ci, a) in c.iter_mut().zip(w.amp) {
                *ci += a * s;
            }
        }
        c
    }

    fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let mut c = self.background(x, y);
        for r in &self.rects {
            if let Some(v) = r.sample(x, y) {
                c = v;
            }
        }
        c
    }
}

impl Rect {
    fn sample(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        let (u, v) = (x - self.x, y - self.y);
        if u < 0.0 || v < 0.0 || u >= self.w || v >= self.h {
            return None;
        }
        let k = if self.stripes > 0.0 && ((u + v) / self.stripes).floor() as i64 % 2 == 0 {
            0.7
        } else {
            1.0
        };
        Some(self.color.map(|c| c * k))
    }
}

fn random_rect(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Rect {
    let w = rng.gen_range(0.15..0.45) * width as f64;
    let h = rng.gen_range(0.15..0.45) * height as f64;
    Rect {
        x: rng.gen_range(0.0..width as f64 - w),
        y: rng.gen_range(0.0..height as f64 - h),
        w,
        h,
        color: [0; 3].map(|_| rng.gen_range(0.05..0.95)),
        stripes: if rng.gen_bool(0.5) {
            rng.gen_range(3.0..9.0)
        } else {
            0.0
        },
    }
}

fn render(width: usize, height: usize, f: impl Fn(f64, f64) -> [f64; 3]) -> Frame {
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            data.extend(f(x as f64, y as f64).map(|v| v.clamp(0.0, 1.0) as f32));
        }
    }
    Frame::new(width, height, 3, data).expect("non-empty clip")
}

/// A short progressive RGB clip.
#[derive(Debug, Clone)]
pub struct Clip {
    pub name: String,
    pub kind: ClipKind,
    pub frames: Vec<Frame>,
}

impl Clip {
    /// Consecutive frames paired with stride two: (0, 1), (2, 3), ...
    pub fn pairs(&self) -> Vec<(Frame, Frame)> {
        pair_frames(&self.frames)
    }

    /// One interlaced frame per pair.
    pub fn interlaced(&self) -> Vec<Frame> {
        self.pairs()
            .iter()
            .map(|(a, b)| interlace(a, b).expect("clip frames share dimensions"))
            .collect()
    }
}

/// Stride-two pairing so each frame belongs to at most one pair; a trailing
/// unpaired frame is dropped.
pub fn pair_frames(frames: &[Frame]) -> Vec<(Frame, Frame)> {
    frames.chunks_exact(2).map(|p| (p[0].clone(), p[1].clone())).collect()
}

/// Generates `frames` RGB frames of one clip kind. Motion speeds are a few
/// pixels per frame, enough to make weaving visibly comb.
pub fn generate_clip(kind: ClipKind, width: usize, height: usize, frames: usize, seed: u64) -> Clip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = Texture::random(&mut rng, width, height, 2);
    let frames = match kind {
        ClipKind::Static => {
            let f = render(width, height, |x, y| texture.sample(x, y));
            vec![f; frames]
        }
        ClipKind::MovingRects => {
            let movers: Vec<(Rect, f64, f64)> = (0..3)
                .map(|_| {
                    let r = random_rect(&mut rng, width, height);
                    let vx = rng.gen_range(1.5..5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let vy = rng.gen_range(1.0..4.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    (r, vx, vy)
                })
                .collect();
            (0..frames)
                .map(|k| {
                    let t = k as f64;
                    render(width, height, |x, y| {
                        let mut c = texture.sample(x, y);
                        for (r, vx, vy) in &movers {
                            if let Some(v) = r.sample(x - vx * t, y - vy * t) {
                                c = v;
                            }
                        }
                        c
                    })
                })
                .collect()
        }
        ClipKind::Scrolling => {
            let vx = rng.gen_range(-3.0..3.0);
            let vy = rng.gen_range(0.75..2.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            (0..frames)
                .map(|k| {
                    let t = k as f64;
                    render(width, height, |x, y| texture.sample(x - vx * t, y - vy * t))
                })
                .collect()
        }
    };
    Clip {
        name: format!("{}_{}x{}_{}", kind.name(), width, height, seed),
        kind,
        frames,
    }
}

/// Sizes used by [`hermetic_corpus`].
pub const CORPUS_SIZES: [(usize, usize); 3] = [(64, 64), (128, 128), (256, 256)];

/// One clip of every kind at every corpus size, `frames` frames each.
pub fn hermetic_corpus(seed: u64, frames: usize) -> Vec<Clip> {
    let mut clips = Vec::new();
    for (i, &(w, h)) in CORPUS_SIZES.iter().enumerate() {
        for (j, kind) in ClipKind::ALL.into_iter().enumerate() {
            let clip_seed = seed
                .wrapping_mul(1_000_003)
                .wrapping_add((i * ClipKind::ALL.len() + j) as u64);
            clips.push(generate_clip(kind, w, h, frames, clip_seed));
        }
    }
    clips
}
