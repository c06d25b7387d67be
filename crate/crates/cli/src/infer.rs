use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use weavenet_core::model::load_weights;
use weavenet_core::{deinterlace_frame, DeinterlaceNet, Frame, Method, Parity};

use crate::io::{frame_dirs, frame_path, is_frame_file, list_frames, read_frame, stem, write_frame, ImageFormat};

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct InferArgs {
    /// Interlaced frame, or a directory of them (sequence subdirectories are
    /// processed recursively; `interlaced` components are dropped from the
    /// output path and `truth` directories are skipped)
    pub input: PathBuf,
    /// Output directory; each input frame NAME gives NAME_t and NAME_t1
    pub out: PathBuf,
    /// net, weave, bob_linear, bob_bicubic or ela
    #[arg(long, short, default_value = "net", value_parser = Method::from_str)]
    pub method: Method,
    /// Trained weights (required for the net method)
    #[arg(long, short)]
    pub weights: Option<PathBuf>,
    /// Re-read every output and check that the known field survived unchanged
    #[arg(long)]
    pub verify: bool,
    /// Output image format
    #[arg(long, value_enum, default_value_t = ImageFormat::Png)]
    pub format: ImageFormat,
    /// key=value file of option defaults; command-line flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Rows of `a` with the given parity differ from those of `b`.
fn field_differs(a: &Frame, b: &Frame, parity: Parity) -> bool {
    (parity.offset()..a.height()).step_by(2).any(|y| a.row(y) != b.row(y))
}

fn process(args: &InferArgs, net: Option<&DeinterlaceNet<f32>>, input: &Path, out_dir: &Path) -> Result<()> {
    let (frame, depth) = read_frame(input)?;
    if frame.height() % 2 != 0 {
        bail!(
            "{}: odd height {} cannot be deinterlaced",
            input.display(),
            frame.height()
        );
    }
    let (t, t1) = deinterlace_frame(args.method, net, &frame)
        .with_context(|| format!("cannot deinterlace {}", input.display()))?;
    let name = stem(input);
    for (suffix, out, parity) in [("t", &t, Parity::Odd), ("t1", &t1, Parity::Even)] {
        let path = frame_path(out_dir, &format!("{name}_{suffix}"), args.format, out.channels());
        write_frame(&path, out, depth)?;
        if args.verify {
            let (back, _) = read_frame(&path)?;
            if field_differs(&back, &frame, parity) {
                bail!("{}: known {parity:?} field changed", path.display());
            }
        }
    }
    Ok(())
}

pub fn run(args: &InferArgs) -> Result<bool> {
    let net = match (args.method, &args.weights) {
        (Method::Net, None) => bail!("--method net needs --weights"),
        (Method::Net, Some(path)) => {
            Some(load_weights(path).with_context(|| format!("cannot load weights {}", path.display()))?)
        }
        _ => None,
    };
    let jobs: Vec<(PathBuf, PathBuf)> = if is_frame_file(&args.input) {
        vec![(args.input.clone(), args.out.clone())]
    } else if args.input.is_dir() {
        let mut jobs = Vec::new();
        for (key, dir) in frame_dirs(&args.input, &["interlaced"], &["truth"])? {
            let out_dir = args.out.join(&key);
            for f in list_frames(&dir)? {
                jobs.push((f, out_dir.clone()));
            }
        }
        jobs
    } else {
        bail!("{} is neither a frame file nor a directory", args.input.display());
    };
    if jobs.is_empty() {
        bail!("no PNG/PPM frames under {}", args.input.display());
    }
    let mut dirs: Vec<&PathBuf> = jobs.iter().map(|(_, d)| d).collect();
    dirs.dedup();
    for d in dirs {
        fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }

    let errors: Vec<String> = jobs
        .par_iter()
        .filter_map(|(input, out_dir)| process(args, net.as_ref(), input, out_dir).err())
        .map(|e| format!("{e:#}"))
        .collect();
    for e in &errors {
        eprintln!("error: {e}");
    }
    let done = jobs.len() - errors.len();
    println!(
        "infer: {} {done} interlaced frame(s) -> {} output frames in {}{}",
        args.method,
        2 * done,
        args.out.display(),
        if args.verify { " (known fields verified)" } else { "" }
    );
    Ok(errors.is_empty())
}
