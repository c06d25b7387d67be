//! Image quality metrics and the wall-clock timing harness.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use thiserror::Error;

use crate::frame::Frame;

/// Reported PSNR for identical frames (and the ceiling for all others).
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("frame shapes differ: {0} vs {1}")]
    ShapeMismatch(String, String),
    #[error("frame {0} is smaller than the {1}x{1} SSIM window")]
    TooSmall(String, usize),
    #[error("SSIM expects single-channel frames, got {0} channels")]
    Channels(usize),
}

fn check_dims(a: &Frame, b: &Frame) -> Result<(), MetricsError> {
    a.same_dims(b)
        .map_err(|_| MetricsError::ShapeMismatch(a.dims(), b.dims()))
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio for unit peak, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable "valid" Gaussian filter of a row-major plane.
fn filter_valid(plane: &[f64], width: usize, height: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * height];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..ow {
            horiz[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, w)| w * horiz[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over all fully contained 11x11 Gaussian
/// windows (sigma 1.5, K1 0.01, K2 0.03, dynamic range 1).
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    if a.channels() != 1 {
        return Err(MetricsError::Channels(a.channels()));
    }
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall(a.dims(), SSIM_WINDOW));
    }
    let k = gaussian_kernel();
    let x: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mu_x = filter_valid(&x, w, h, &k);
    let mu_y = filter_valid(&y, w, h, &k);
    let xx = filter_valid(&prod(&x, &x), w, h, &k);
    let yy = filter_valid(&prod(&y, &y), w, h, &k);
    let xy = filter_valid(&prod(&x, &y), w, h, &k);
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let sx = xx[i] - mx * mx;
            let sy = yy[i] - my * my;
            let sxy = xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Pixel-wise `|a - b|`, clamped to [0, 1].
pub fn diff_image(a: &Frame, b: &Frame) -> Result<Frame, MetricsError> {
    check_dims(a, b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs().clamp(0.0, 1.0))
        .collect();
    Ok(Frame::new(a.width(), a.height(), a.channels(), data).expect("same extents"))
}

/// Per-frame and sequence-average quality of one method on one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub sequence: String,
    pub method: String,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

impl QualityReport {
    pub fn new(sequence: impl Into<String>, method: impl Into<String>) -> Self {
        Self {
            sequence: sequence.into(),
            method: method.into(),
            psnr: Vec::new(),
            ssim: Vec::new(),
        }
    }

    /// Scores one predicted frame against its ground truth.
    pub fn push(&mut self, predicted: &Frame, truth: &Frame) -> Result<(), MetricsError> {
        self.psnr.push(psnr(predicted, truth)?);
        self.ssim.push(ssim(predicted, truth)?);
        Ok(())
    }

    pub fn mean_psnr(&self) -> f64 {
        mean(&self.psnr)
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(&self.ssim)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub const QUALITY_CSV_HEADER: &str = "sequence,method,frame,psnr_db,ssim";

/// One CSV row per frame plus a `mean` row per report.
pub fn quality_csv(reports: &[QualityReport]) -> String {
    let mut out = String::from(QUALITY_CSV_HEADER);
    out.push('\n');
    for r in reports {
        for (i, (p, s)) in r.psnr.iter().zip(&r.ssim).enumerate() {
            let _ = writeln!(out, "{},{},{},{:.4},{:.6}", r.sequence, r.method, i, p, s);
        }
        let _ = writeln!(
            out,
            "{},{},mean,{:.4},{:.6}",
            r.sequence,
            r.method,
            r.mean_psnr(),
            r.mean_ssim()
        );
    }
    out
}

/// Aligned method x sequence table of "PSNR/SSIM" cells. Row and column
/// order follow first appearance in `reports`.
pub fn quality_table(reports: &[QualityReport]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut sequences: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !sequences.contains(&r.sequence.as_str()) {
            sequences.push(&r.sequence);
        }
    }
    let cell = |m: &str, s: &str| {
        reports.iter().find(|r| r.method == m && r.sequence == s).map_or_else(
            || "-".to_string(),
            |r| format!("{:.2}/{:.4}", r.mean_psnr(), r.mean_ssim()),
        )
    };
    let mut rows = vec![std::iter::once("PSNR/SSIM".to_string())
        .chain(sequences.iter().map(|s| s.to_string()))
        .collect::<Vec<_>>()];
    for m in &methods {
        rows.push(
            std::iter::once(m.to_string())
                .chain(sequences.iter().map(|s| cell(m, s)))
                .collect(),
        );
    }
    render_table(&rows)
}

fn render_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| format!("{:<w$}", v, w = widths[c]))
            .collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
        if i == 0 {
            let sep: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&sep.join("-+-"));
            out.push('\n');
        }
    }
    out
}

/// Mean per-frame wall time of one method at one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub method: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub warmup: usize,
    pub mean_seconds: f64,
    /// Multiply-accumulates per frame, for network methods.
    pub macs: Option<u64>,
}

pub const BENCH_WARMUP: usize = 5;
pub const BENCH_FRAMES: usize = 50;

/// Synthetic interlaced frame for timing runs; `variant` picks one of a few
/// deterministic patterns.
pub fn bench_frame(width: usize, height: usize, variant: usize) -> Frame {
    Frame::from_fn(width, height, |x, y| {
        let v = ((x * (7 + variant) + y * 13 + variant * 31) % 251) as f32 / 250.0;
        if y % 2 == 0 {
            v
        } else {
            1.0 - v
        }
    })
    .expect("bench frame")
}

/// Times `method` on `frames` synthetic frames after `warmup` untimed runs,
/// on the calling thread. The mean excludes the warmup.
pub fn bench<F, R>(
    label: &str,
    width: usize,
    height: usize,
    frames: usize,
    warmup: usize,
    macs: Option<u64>,
    mut method: F,
) -> TimingReport
where
    F: FnMut(&Frame) -> R,
{
    let inputs: Vec<Frame> = (0..3).map(|v| bench_frame(width, height, v)).collect();
    for i in 0..warmup {
        black_box(method(&inputs[i % inputs.len()]));
    }
    let start = Instant::now();
    for i in 0..frames {
        black_box(method(&inputs[i % inputs.len()]));
    }
    let total = start.elapsed().as_secs_f64();
    TimingReport {
        method: label.to_string(),
        width,
        height,
        frames,
        warmup,
        mean_seconds: if frames == 0 { 0.0 } else { total / frames as f64 },
        macs,
    }
}

pub const TIMING_CSV_HEADER: &str = "method,width,height,frames,warmup,mean_seconds,macs";

pub fn timing_csv(reports: &[TimingReport]) -> String {
    let mut out = String::from(TIMING_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{}",
            r.method,
            r.width,
            r.height,
            r.frames,
            r.warmup,
            r.mean_seconds,
            r.macs.map_or(String::new(), |m| m.to_string())
        );
    }
    out
}

/// Aligned resolution x method table of mean seconds per frame.
pub fn timing_table(reports: &[TimingReport]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut resolutions: Vec<(usize, usize)> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !resolutions.contains(&(r.width, r.height)) {
            resolutions.push((r.width, r.height));
        }
    }
    let mut rows = vec![std::iter::once("Average time (s)".to_string())
        .chain(methods.iter().map(|m| m.to_string()))
        .collect::<Vec<_>>()];
    for &(w, h) in &resolutions {
        let mut row = vec![format!("{w}x{h}")];
        for m in &methods {
            row.push(
                reports
                    .iter()
                    .find(|r| r.method == *m && (r.width, r.height) == (w, h))
                    .map_or_else(|| "-".into(), |r| format!("{:.4}", r.mean_seconds)),
            );
        }
        rows.push(row);
    }
    render_table(&rows)
}
