//! PNG (8/16-bit) and binary PNM frame I/O.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use weavenet_core::Frame;

const EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max(self) -> f32 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ImageFormat {
    Png,
    Pnm,
}

pub fn is_frame_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Frame files directly inside `dir`, in lexicographic order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_frame_file(p))
        .collect();
    files.sort();
    Ok(files)
}

/// Subdirectories of `dir`, in lexicographic order.
pub fn list_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Directories at or below `root` that directly hold frames, keyed by their
/// path relative to `root` with any component named in `collapse` dropped.
/// Subdirectories named in `ignore` are not visited. The key of `root`
/// itself is empty.
pub fn frame_dirs(root: &Path, collapse: &[&str], ignore: &[&str]) -> Result<Vec<(String, PathBuf)>> {
    fn walk(dir: &Path, key: &str, names: (&[&str], &[&str]), out: &mut Vec<(String, PathBuf)>) -> Result<()> {
        let (collapse, ignore) = names;
        if !list_frames(dir)?.is_empty() {
            out.push((key.to_string(), dir.to_path_buf()));
        }
        for sub in list_dirs(dir)? {
            let name = sub
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            if ignore.contains(&name.as_str()) {
                continue;
            }
            let child = if collapse.contains(&name.as_str()) {
                key.to_string()
            } else if key.is_empty() {
                name
            } else {
                format!("{key}/{name}")
            };
            walk(&sub, &child, names, out)?;
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, "", (collapse, ignore), &mut out)?;
    out.sort();
    Ok(out)
}

/// File name without its extension.
pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a frame as 1 (gray) or 3 (RGB) channels in [0, 1]. Alpha is dropped.
pub fn read_frame(path: &Path) -> Result<(Frame, BitDepth)> {
    let img = image::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let frame = match img {
        DynamicImage::ImageLuma8(b) => to_frame(w, h, 1, b.as_raw(), BitDepth::Eight),
        DynamicImage::ImageLuma16(b) => to_frame(w, h, 1, b.as_raw(), BitDepth::Sixteen),
        DynamicImage::ImageRgb8(b) => to_frame(w, h, 3, b.as_raw(), BitDepth::Eight),
        DynamicImage::ImageRgb16(b) => to_frame(w, h, 3, b.as_raw(), BitDepth::Sixteen),
        DynamicImage::ImageLumaA8(_) => to_frame(w, h, 1, img.to_luma8().as_raw(), BitDepth::Eight),
        DynamicImage::ImageLumaA16(_) => to_frame(w, h, 1, img.to_luma16().as_raw(), BitDepth::Sixteen),
        DynamicImage::ImageRgba16(_) => to_frame(w, h, 3, img.to_rgb16().as_raw(), BitDepth::Sixteen),
        other => to_frame(w, h, 3, other.to_rgb8().as_raw(), BitDepth::Eight),
    };
    frame.with_context(|| format!("cannot decode {}", path.display()))
}

fn to_frame<P: Copy + Into<f32>>(
    w: usize,
    h: usize,
    channels: usize,
    raw: &[P],
    depth: BitDepth,
) -> Result<(Frame, BitDepth)> {
    let scale = depth.max();
    let data = raw.iter().map(|&v| v.into() / scale).collect();
    Ok((Frame::new(w, h, channels, data)?, depth))
}

fn quantize<T: TryFrom<u32>>(v: f32, depth: BitDepth) -> T {
    let q = (v.clamp(0.0, 1.0) * depth.max()).round() as u32;
    T::try_from(q).ok().expect("quantized value fits the sample type")
}

/// Output path for `stem` in `dir`: `.png`, or `.ppm`/`.pgm` by channel count.
pub fn frame_path(dir: &Path, stem: &str, format: ImageFormat, channels: usize) -> PathBuf {
    let ext = match (format, channels) {
        (ImageFormat::Png, _) => "png",
        (ImageFormat::Pnm, 1) => "pgm",
        (ImageFormat::Pnm, _) => "ppm",
    };
    dir.join(format!("{stem}.{ext}"))
}

/// Writes a frame; values are clamped to [0, 1] and rounded. The container
/// follows the file extension.
pub fn write_frame(path: &Path, frame: &Frame, depth: BitDepth) -> Result<()> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let img: DynamicImage = match (frame.channels(), depth) {
        (1, BitDepth::Eight) => {
            let raw = frame.data().iter().map(|&v| quantize::<u8>(v, depth)).collect();
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).map(DynamicImage::ImageLuma8)
        }
        (1, BitDepth::Sixteen) => {
            let raw = frame.data().iter().map(|&v| quantize::<u16>(v, depth)).collect();
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).map(DynamicImage::ImageLuma16)
        }
        (3, BitDepth::Eight) => {
            let raw = frame.data().iter().map(|&v| quantize::<u8>(v, depth)).collect();
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).map(DynamicImage::ImageRgb8)
        }
        (3, BitDepth::Sixteen) => {
            let raw = frame.data().iter().map(|&v| quantize::<u16>(v, depth)).collect();
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).map(DynamicImage::ImageRgb16)
        }
        (c, _) => bail!("cannot write a {c}-channel frame"),
    }
    .context("frame buffer size")?;
    img.save(path)
        .with_context(|| format!("cannot write {}", path.display()))
}
