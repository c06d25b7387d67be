use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use weavenet_core::data::synth::{hermetic_corpus, pair_frames};
use weavenet_core::data::{interlace, pairs_to_patches, save_archive, PatchOptions, PATCH_SIZE, RESCALE_SIZE};
use weavenet_core::Frame;

use crate::io::{frame_path, list_frames, read_frame, write_frame, BitDepth, ImageFormat};

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    /// Output directory; each sequence gets <OUT>/<name>/{interlaced,truth}
    pub out: PathBuf,
    /// Directory of ordered progressive frames
    #[arg(long, short, required_unless_present = "procedural", conflicts_with = "procedural")]
    pub input: Option<PathBuf>,
    /// Use the built-in procedural corpus instead of --input
    #[arg(long)]
    pub procedural: bool,
    /// Frames per procedural clip
    #[arg(long, default_value_t = 8)]
    pub procedural_frames: usize,
    /// Seed for the procedural corpus
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a packed patch archive <OUT>/patches.dipt
    #[arg(long)]
    pub patches: bool,
    /// Patch side in pixels
    #[arg(long, default_value_t = PATCH_SIZE)]
    pub patch_size: usize,
    /// Patch extraction stride
    #[arg(long, default_value_t = PATCH_SIZE)]
    pub stride: usize,
    /// Square size frames are rescaled to before patching (0 keeps native size)
    #[arg(long, default_value_t = RESCALE_SIZE)]
    pub rescale: usize,
    /// Output image format
    #[arg(long, value_enum, default_value_t = ImageFormat::Png)]
    pub format: ImageFormat,
    /// key=value file of option defaults; command-line flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
}

struct Sequence {
    name: String,
    /// Frame files found, including unreadable ones.
    source_frames: usize,
    frames: Vec<Frame>,
    depth: BitDepth,
}

fn load_sequence(dir: &Path, errors: &mut Vec<String>) -> Result<Sequence> {
    let files = list_frames(dir)?;
    if files.is_empty() {
        bail!("no PNG/PPM frames in {}", dir.display());
    }
    let mut frames = Vec::with_capacity(files.len());
    let mut depth = BitDepth::Eight;
    for f in &files {
        match read_frame(f) {
            Ok((frame, d)) if frame.height() % 2 == 0 => {
                depth = d;
                frames.push(Some(frame));
            }
            Ok((frame, _)) => {
                errors.push(format!(
                    "{}: odd height {} cannot be interlaced",
                    f.display(),
                    frame.height()
                ));
                frames.push(None);
            }
            Err(e) => {
                errors.push(format!("{e:#}"));
                frames.push(None);
            }
        }
    }
    // Keep stride-2 pairing on the original numbering, dropping broken pairs.
    let mut kept = Vec::new();
    for pair in frames.chunks_exact(2) {
        match (&pair[0], &pair[1]) {
            (Some(a), Some(b)) if a.same_dims(b).is_ok() => {
                kept.push(a.clone());
                kept.push(b.clone());
            }
            (Some(a), Some(b)) => errors.push(format!("pair frames differ in size: {} vs {}", a.dims(), b.dims())),
            _ => {}
        }
    }
    let name = dir
        .file_name()
        .map_or_else(|| "sequence".to_string(), |n| n.to_string_lossy().into_owned());
    Ok(Sequence {
        name,
        source_frames: files.len(),
        frames: kept,
        depth,
    })
}

pub fn run(args: &SynthArgs) -> Result<bool> {
    let mut errors = Vec::new();
    let sequences: Vec<Sequence> = if args.procedural {
        hermetic_corpus(args.seed, args.procedural_frames)
            .into_iter()
            .map(|c| Sequence {
                name: c.name,
                source_frames: c.frames.len(),
                frames: c.frames,
                depth: BitDepth::Eight,
            })
            .collect()
    } else {
        let dir = args.input.as_ref().expect("clap requires --input");
        vec![load_sequence(dir, &mut errors)?]
    };
    let total_frames: usize = sequences.iter().map(|s| s.source_frames).sum();

    let mut all_pairs = Vec::new();
    let mut written = 0;
    for seq in &sequences {
        let pairs = pair_frames(&seq.frames);
        let base = args.out.join(&seq.name);
        let (idir, tdir) = (base.join("interlaced"), base.join("truth"));
        fs::create_dir_all(&idir).with_context(|| format!("cannot create {}", idir.display()))?;
        fs::create_dir_all(&tdir).with_context(|| format!("cannot create {}", tdir.display()))?;
        for (k, (a, b)) in pairs.iter().enumerate() {
            let i = interlace(a, b)?;
            let stem = format!("{k:06}");
            write_frame(&frame_path(&idir, &stem, args.format, i.channels()), &i, seq.depth)?;
            write_frame(
                &frame_path(&tdir, &format!("{stem}_t"), args.format, a.channels()),
                a,
                seq.depth,
            )?;
            write_frame(
                &frame_path(&tdir, &format!("{stem}_t1"), args.format, b.channels()),
                b,
                seq.depth,
            )?;
            written += 1;
        }
        all_pairs.extend(pairs);
    }
    println!(
        "synth: {} sequence(s), {total_frames} progressive frames -> {} pairs -> {written} interlaced frames + {written} ground-truth pairs",
        sequences.len(),
        all_pairs.len(),
    );

    if args.patches {
        let options = PatchOptions {
            rescale: (args.rescale > 0).then_some(args.rescale),
            patch: args.patch_size,
            stride: args.stride,
        };
        let patches = pairs_to_patches(&all_pairs, &options)?;
        let path = args.out.join("patches.dipt");
        save_archive(&patches, &path)?;
        println!("synth: {} patch triplets -> {}", patches.len(), path.display());
    }
    for e in &errors {
        eprintln!("error: {e}");
    }
    Ok(errors.is_empty())
}
