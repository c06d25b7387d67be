use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use weavenet_core::color::rgb_to_l;
use weavenet_core::metrics::{quality_csv, quality_table, QualityReport};
use weavenet_core::{psnr, ssim};

use crate::io::{frame_dirs, list_frames, read_frame, stem};

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    /// Ground-truth frames (a `synth` output directory works)
    pub truth: PathBuf,
    /// One or more prediction directories, labelled by directory name
    #[arg(required = true)]
    pub predictions: Vec<PathBuf>,
    /// Per-frame CSV output
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// key=value file of option defaults; command-line flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Sequence key -> frame stem -> file.
type Sequences = BTreeMap<String, BTreeMap<String, PathBuf>>;

fn label(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Frame files of each sequence, keyed by stem. `keep` directories collapse
/// into their parent and `ignore` directories are skipped, so a `synth`
/// output serves as ground truth without its interlaced inputs.
fn sequences(root: &Path, keep: &str, ignore: &str) -> Result<Sequences> {
    let mut out = BTreeMap::new();
    for (key, dir) in frame_dirs(root, &[keep], &[ignore])? {
        let frames = list_frames(&dir)?.into_iter().map(|p| (stem(&p), p)).collect();
        out.insert(key, frames);
    }
    Ok(out)
}

/// PSNR and SSIM on lightness.
fn score(pred: &Path, truth: &Path) -> Result<(f64, f64)> {
    let (p, _) = read_frame(pred)?;
    let (t, _) = read_frame(truth)?;
    let (p, t) = (rgb_to_l(&p), rgb_to_l(&t));
    let context = || format!("{} vs {}", pred.display(), truth.display());
    Ok((psnr(&p, &t).with_context(context)?, ssim(&p, &t).with_context(context)?))
}

fn evaluate(
    sequence: &str,
    method: &str,
    truth: &BTreeMap<String, PathBuf>,
    pred: &BTreeMap<String, PathBuf>,
) -> Result<QualityReport> {
    if truth.len() != pred.len() {
        bail!(
            "sequence '{sequence}': {} has {} frames, ground truth has {}",
            method,
            pred.len(),
            truth.len()
        );
    }
    let pairs: Vec<(&PathBuf, &PathBuf)> = truth
        .iter()
        .map(|(name, t)| {
            pred.get(name)
                .map(|p| (p, t))
                .with_context(|| format!("sequence '{sequence}': {method} has no frame '{name}'"))
        })
        .collect::<Result<_>>()?;
    let scores: Vec<(f64, f64)> = pairs.par_iter().map(|(p, t)| score(p, t)).collect::<Result<_>>()?;
    let mut report = QualityReport::new(sequence, method);
    for (p, s) in scores {
        report.psnr.push(p);
        report.ssim.push(s);
    }
    Ok(report)
}

pub fn run(args: &EvalArgs) -> Result<bool> {
    let truth = sequences(&args.truth, "truth", "interlaced")?;
    if truth.is_empty() {
        bail!("no PNG/PPM frames under {}", args.truth.display());
    }
    let root_label = label(&args.truth);
    let mut errors = Vec::new();
    let mut reports = Vec::new();
    let preds: Vec<(String, Sequences)> = args
        .predictions
        .iter()
        .map(|p| Ok((label(p), sequences(p, "interlaced", "truth")?)))
        .collect::<Result<_>>()?;
    for (key, truth_frames) in &truth {
        let sequence = if key.is_empty() {
            root_label.as_str()
        } else {
            key.as_str()
        };
        for (method, pred) in &preds {
            let Some(pred_frames) = pred.get(key) else {
                errors.push(format!("sequence '{sequence}' is missing from {method}"));
                continue;
            };
            match evaluate(sequence, method, truth_frames, pred_frames) {
                Ok(r) => reports.push(r),
                Err(e) => errors.push(format!("{e:#}")),
            }
        }
    }
    for (method, pred) in &preds {
        for key in pred.keys().filter(|k| !truth.contains_key(*k)) {
            errors.push(format!("{method} has sequence '{key}' with no ground truth"));
        }
    }
    print!("{}", quality_table(&reports));
    if let Some(path) = &args.csv {
        fs::write(path, quality_csv(&reports)).with_context(|| format!("cannot write {}", path.display()))?;
    }
    for e in &errors {
        eprintln!("error: {e}");
    }
    Ok(errors.is_empty())
}
