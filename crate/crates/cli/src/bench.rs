use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use weavenet_core::metrics::{bench, timing_csv, timing_table, TimingReport, BENCH_FRAMES, BENCH_WARMUP};
use weavenet_core::model::load_weights;
use weavenet_core::{deinterlace_classic, BaselineKind, DeinterlaceNet, NetConfig};

/// Reference per-frame seconds (shared, two separate networks) of a GPU
/// implementation, for comparing the sharing speed-up.
const REFERENCE_SECONDS: [((usize, usize), f64, f64); 4] = [
    ((1920, 1080), 0.0835, 0.2520),
    ((1024, 768), 0.0301, 0.0833),
    ((720, 576), 0.0204, 0.0556),
    ((720, 480), 0.0137, 0.0403),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    Net,
    NetUnshared,
    Baseline(BaselineKind),
}

impl BenchMethod {
    fn name(self) -> &'static str {
        match self {
            BenchMethod::Net => "net",
            BenchMethod::NetUnshared => "net_unshared",
            BenchMethod::Baseline(k) => k.name(),
        }
    }
}

impl FromStr for BenchMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "net" => Ok(BenchMethod::Net),
            "net_unshared" => Ok(BenchMethod::NetUnshared),
            _ => BaselineKind::ALL
                .into_iter()
                .find(|k| k.name() == s)
                .map(BenchMethod::Baseline)
                .ok_or_else(|| {
                    let names: Vec<&str> = ["net", "net_unshared"]
                        .into_iter()
                        .chain(BaselineKind::ALL.iter().map(|k| k.name()))
                        .collect();
                    format!("unknown method '{s}' (expected one of {})", names.join(", "))
                }),
        }
    }
}

fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{s}'"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in '{s}'"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in '{s}'"))?;
    if w == 0 || h == 0 || !h.is_multiple_of(2) {
        return Err(format!("'{s}': sizes must be positive with an even height"));
    }
    Ok((w, h))
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct BenchArgs {
    /// Trained weights; a randomly initialized network of the default shape
    /// is timed otherwise (timing does not depend on weight values)
    #[arg(long, short)]
    pub weights: Option<PathBuf>,
    /// Comma-separated WIDTHxHEIGHT list
    #[arg(long, value_delimiter = ',', value_parser = parse_resolution,
          default_value = "720x480,720x576,1024x768,1920x1080")]
    pub resolutions: Vec<(usize, usize)>,
    /// Comma-separated methods: net, net_unshared, weave, bob_linear, bob_bicubic, ela
    #[arg(long, value_delimiter = ',', value_parser = BenchMethod::from_str,
          default_value = "net,net_unshared,weave,bob_bicubic,ela")]
    pub methods: Vec<BenchMethod>,
    /// Timed frames per method and resolution
    #[arg(long, default_value_t = BENCH_FRAMES)]
    pub frames: usize,
    /// Untimed warmup frames
    #[arg(long, default_value_t = BENCH_WARMUP)]
    pub warmup: usize,
    /// CSV output
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// key=value file of option defaults; command-line flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Network methods time the forward pass on the same input tensor, so the
/// shared/unshared ratio isolates the trunk.
fn time_one(net: &DeinterlaceNet<f32>, method: BenchMethod, w: usize, h: usize, args: &BenchArgs) -> TimingReport {
    let label = method.name();
    match method {
        BenchMethod::Net => bench(
            label,
            w,
            h,
            args.frames,
            args.warmup,
            Some(net.flop_count(h, w, true)),
            |f| net.forward(&f.to_tensor()).expect("bench frames are valid"),
        ),
        BenchMethod::NetUnshared => bench(
            label,
            w,
            h,
            args.frames,
            args.warmup,
            Some(net.flop_count(h, w, false)),
            |f| net.forward_unshared(&f.to_tensor()).expect("bench frames are valid"),
        ),
        BenchMethod::Baseline(kind) => bench(label, w, h, args.frames, args.warmup, None, |f| {
            deinterlace_classic(f, kind).expect("bench frames are valid")
        }),
    }
}

pub fn run(args: &BenchArgs) -> Result<bool> {
    if args.frames == 0 {
        bail!("--frames must be positive");
    }
    let net = match &args.weights {
        Some(path) => load_weights(path).with_context(|| format!("cannot load weights {}", path.display()))?,
        None => DeinterlaceNet::init(NetConfig::default(), 0),
    };
    println!(
        "bench: {} timed frame(s) after {} warmup, single thread",
        args.frames, args.warmup
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| anyhow!("cannot build the benchmark thread: {e}"))?;
    let mut reports = Vec::new();
    for &(w, h) in &args.resolutions {
        for &m in &args.methods {
            let r = pool.install(|| time_one(&net, m, w, h, args));
            println!("  {w}x{h} {:<13} {:.4} s/frame", r.method, r.mean_seconds);
            reports.push(r);
        }
    }
    println!();
    print!("{}", timing_table(&reports));

    let find = |m: &str, w: usize, h: usize| reports.iter().find(|r| r.method == m && (r.width, r.height) == (w, h));
    let mut header = false;
    for &(w, h) in &args.resolutions {
        let (Some(s), Some(u)) = (find("net", w, h), find("net_unshared", w, h)) else {
            continue;
        };
        if !header {
            println!("\nsharing: MACs per frame and unshared/shared ratios");
            header = true;
        }
        let (ms, mu) = (s.macs.unwrap_or(0), u.macs.unwrap_or(0));
        let reference = REFERENCE_SECONDS
            .iter()
            .find(|(r, _, _)| *r == (w, h))
            .map_or_else(|| "-".to_string(), |(_, a, b)| format!("{:.2}", b / a));
        println!(
            "  {w}x{h}: MACs {ms} vs {mu} (x{:.2}), time x{:.2}, reference GPU time x{reference}",
            mu as f64 / ms as f64,
            u.mean_seconds / s.mean_seconds,
        );
    }
    if let Some(path) = &args.csv {
        fs::write(path, timing_csv(&reports)).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(true)
}
