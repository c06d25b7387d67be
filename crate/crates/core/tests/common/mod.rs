//! Brute-force reference implementations and helpers shared by the
//! integration tests. Everything here is written straight from the
//! definitions, in f64, without reusing library internals.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use weavenet_core::data::PatchTriplet;
use weavenet_core::{ConvSpec, Frame, Padding, Shape, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

pub fn random_frame(rng: &mut ChaCha8Rng, width: usize, height: usize, channels: usize) -> Frame {
    let data = (0..width * height * channels).map(|_| rng.gen::<f32>()).collect();
    Frame::new(width, height, channels, data).unwrap()
}

/// Direct convolution: output row `i` is centred on input row `i * stride_h`.
pub fn conv_oracle(input: &Tensor<f64>, weights: &Tensor<f64>, bias: &[f64], spec: &ConvSpec) -> Tensor<f64> {
    let s = input.shape();
    let out_h = s.height.div_ceil(spec.stride_h);
    let out_w = s.width;
    let (ry, rx) = ((spec.kernel_h / 2) as isize, (spec.kernel_w / 2) as isize);
    let sample = |n: usize, c: usize, y: isize, x: isize| -> f64 {
        let inside = y >= 0 && x >= 0 && (y as usize) < s.height && (x as usize) < s.width;
        match spec.padding {
            Padding::ZeroSame if !inside => 0.0,
            _ => {
                let yy = y.clamp(0, s.height as isize - 1) as usize;
                let xx = x.clamp(0, s.width as isize - 1) as usize;
                input.at(n, c, yy, xx)
            }
        }
    };
    let mut out = Vec::with_capacity(s.batch * spec.out_channels * out_h * out_w);
    for n in 0..s.batch {
        for o in 0..spec.out_channels {
            for i in 0..out_h {
                for j in 0..out_w {
                    let cy = (i * spec.stride_h) as isize;
                    let mut acc = bias[o];
                    for c in 0..spec.in_channels {
                        for ky in 0..spec.kernel_h {
                            for kx in 0..spec.kernel_w {
                                let y = cy + ky as isize - ry;
                                let x = j as isize + kx as isize - rx;
                                acc += weights.at(o, c, ky, kx) * sample(n, c, y, x);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::from_vec(Shape::new(s.batch, spec.out_channels, out_h, out_w), out).unwrap()
}

/// Squared TV through the graph-Laplacian identity
/// `sum_edges (a - b)^2 = sum_i deg(i) x_i^2 - 2 sum_edges x_a x_b`.
pub fn tv_oracle(t: &Tensor<f64>) -> f64 {
    let s = t.shape();
    let mut total = 0.0;
    for n in 0..s.batch {
        for c in 0..s.channels {
            for y in 0..s.height {
                for x in 0..s.width {
                    let v = t.at(n, c, y, x);
                    let deg = [x > 0, x + 1 < s.width, y > 0, y + 1 < s.height]
                        .iter()
                        .filter(|&&b| b)
                        .count() as f64;
                    total += deg * v * v;
                    if x + 1 < s.width {
                        total -= 2.0 * v * t.at(n, c, y, x + 1);
                    }
                    if y + 1 < s.height {
                        total -= 2.0 * v * t.at(n, c, y + 1, x);
                    }
                }
            }
        }
    }
    total
}

pub fn psnr_oracle(a: &Frame, b: &Frame) -> f64 {
    let mut sse = 0.0;
    let mut n = 0usize;
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..a.channels() {
                let d = a.get(x, y, c) as f64 - b.get(x, y, c) as f64;
                sse += d * d;
                n += 1;
            }
        }
    }
    if sse == 0.0 {
        return 99.0;
    }
    (-10.0 * (sse / n as f64).log10()).min(99.0)
}

/// SSIM with an explicit 2-D Gaussian window and two-pass moments per window.
pub fn ssim_oracle(a: &Frame, b: &Frame) -> f64 {
    const N: usize = 11;
    let sigma: f64 = 1.5;
    let mut w = [[0.0f64; N]; N];
    let mut sum = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            sum += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=a.height() - N {
        for x0 in 0..=a.width() - N {
            let px = |f: &Frame, i: usize, j: usize| f.get(x0 + j, y0 + i, 0) as f64;
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    mx += w[i][j] / sum * px(a, i, j);
                    my += w[i][j] / sum * px(b, i, j);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    let (dx, dy) = (px(a, i, j) - mx, px(b, i, j) - my);
                    vx += w[i][j] / sum * dx * dx;
                    vy += w[i][j] / sum * dy * dy;
                    cxy += w[i][j] / sum * dx * dy;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Full-frame rows holding field samples for a frame of `height` rows.
fn field_rows(height: usize, offset: usize) -> Vec<usize> {
    (offset..height).step_by(2).collect()
}

/// Nearest known row to `y` among `rows` (clamping past the ends).
fn clamp_to(rows: &[usize], y: isize) -> usize {
    let first = rows[0] as isize;
    let last = *rows.last().unwrap() as isize;
    y.clamp(first, last) as usize
}

/// Catmull-Rom spline through p0..p3 evaluated at parameter t in [0, 1]
/// between p1 and p2.
fn catmull_rom(p: [f64; 4], t: f64) -> f64 {
    0.5 * (2.0 * p[1]
        + (-p[0] + p[2]) * t
        + (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) * t * t
        + (-p[0] + 3.0 * p[1] - 3.0 * p[2] + p[3]) * t * t * t)
}

/// Bob with cubic interpolation of single-channel `frame`, keeping rows
/// `offset, offset + 2, ...` and rebuilding the rest.
pub fn bob_bicubic_oracle(frame: &Frame, offset: usize) -> Vec<f64> {
    let (w, h) = (frame.width(), frame.height());
    let known = field_rows(h, offset);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = if (y + 2 - offset).is_multiple_of(2) {
                frame.get(x, y, 0) as f64
            } else {
                let yi = y as isize;
                let p = [yi - 3, yi - 1, yi + 1, yi + 3].map(|r| frame.get(x, clamp_to(&known, r), 0) as f64);
                catmull_rom(p, 0.5)
            };
        }
    }
    out
}

/// ELA over single-channel `frame` keeping rows of `offset` parity.
/// Returns the rebuilt frame and, per missing pixel, the chosen column
/// offset (-1, 0, +1) of the upper tap.
pub fn ela_oracle(frame: &Frame, offset: usize) -> (Vec<f64>, Vec<isize>) {
    let (w, h) = (frame.width(), frame.height());
    let known = field_rows(h, offset);
    let mut out = vec![0.0; w * h];
    let mut dirs = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if (y + 2 - offset).is_multiple_of(2) {
                out[y * w + x] = frame.get(x, y, 0) as f64;
                continue;
            }
            let up = clamp_to(&known, y as isize - 1);
            let down = clamp_to(&known, y as isize + 1);
            let px = |row: usize, col: isize| frame.get(col.clamp(0, w as isize - 1) as usize, row, 0) as f64;
            // candidates in priority order: vertical, falling, rising
            let mut best: Option<(f64, isize)> = None;
            for d in [0isize, -1, 1] {
                let diff = (px(up, x as isize + d) - px(down, x as isize - d)).abs();
                if best.is_none_or(|(b, _)| diff < b) {
                    best = Some((diff, d));
                }
            }
            let d = best.unwrap().1;
            out[y * w + x] = (px(up, x as isize + d) + px(down, x as isize - d)) * 0.5;
            dirs.push(d);
        }
    }
    (out, dirs)
}

/// `|a - n| / max(|a|, |n|)`, with differences below `floor` treated as
/// agreement.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < floor {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

/// Random single-channel patch triplet of side `size`.
pub fn random_triplet(rng: &mut ChaCha8Rng, size: usize) -> PatchTriplet {
    let mut v = |n: usize| (0..n).map(|_| rng.gen::<f32>()).collect::<Vec<_>>();
    PatchTriplet {
        size,
        input: v(size * size),
        target_even_t: v(size * size / 2),
        target_odd_t1: v(size * size / 2),
        source_id: 0,
        origin_row: 0,
        origin_col: 0,
    }
}

/// Central-difference derivative of `f` at `x` along one coordinate.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// One randomized gradient trial. Returns `(label, relative error)` for one
/// coordinate of every network parameter tensor plus conv, TV and weave
/// operator gradients.
pub fn gradient_trial(seed: u64) -> Vec<(String, f64)> {
    use weavenet_core::autograd::Graph;
    use weavenet_core::conv::{conv2d, conv2d_backward};
    use weavenet_core::train::{item_loss, item_loss_and_grads};
    use weavenet_core::tv::{total_variation, total_variation_backward};
    use weavenet_core::{DeinterlaceNet, LayerId, NetConfig};

    // A larger step crosses ReLU kinks in these tiny random networks.
    const H: f64 = 1e-6;
    const FLOOR: f64 = 1e-9;
    let mut r = rng(seed);
    let mut out = Vec::new();
    let padding = if r.gen_bool(0.5) {
        Padding::ZeroSame
    } else {
        Padding::ReplicateSame
    };

    // Whole-network loss gradient.
    let config = NetConfig {
        trunk_channels: r.gen_range(2..=4),
        branch_channels: r.gen_range(1..=3),
        padding,
    };
    let mut net = DeinterlaceNet::<f64>::init(config, seed);
    for layer in LayerId::ALL {
        let l = net.layer_mut(layer);
        for b in l.bias.data_mut() {
            *b = r.gen_range(-0.2..0.2);
        }
    }
    let size = [4, 6, 8][r.gen_range(0..3)];
    let item = random_triplet(&mut r, size);
    let tv_weight = r.gen_range(0.05..2.0);
    let (_, grads) = item_loss_and_grads(&net, &item, tv_weight).unwrap();
    let n_params = net.params().len();
    for p in 0..n_params {
        let k = r.gen_range(0..grads[p].len());
        let x0 = net.params()[p].data()[k];
        let numeric = central_diff(
            |x| {
                net.params_mut()[p].data_mut()[k] = x;
                item_loss(&net, &item, tv_weight).unwrap()
            },
            x0,
            H,
        );
        net.params_mut()[p].data_mut()[k] = x0;
        let layer = LayerId::ALL[p / 2];
        let what = if p % 2 == 0 { "weight" } else { "bias" };
        out.push((
            format!("loss/{layer}/{what}"),
            rel_err(grads[p].data()[k], numeric, FLOOR),
        ));
    }

    // A single convolution, including the input gradient.
    let stride = r.gen_range(1..=2);
    let kernel = [1, 3][r.gen_range(0..2)];
    let spec = ConvSpec::new(r.gen_range(1..=3), r.gen_range(1..=3), kernel)
        .with_stride_h(stride)
        .with_padding(padding);
    let (h, w) = (r.gen_range(2..=7), r.gen_range(1..=6));
    let mut x = random_tensor(&mut r, Shape::new(1, spec.in_channels, h, w), -1.0, 1.0);
    let mut wt = random_tensor(&mut r, spec.weight_shape(), -1.0, 1.0);
    let mut bias: Vec<f64> = (0..spec.out_channels).map(|_| r.gen_range(-1.0..1.0)).collect();
    let y = conv2d(&x, &wt, &bias, &spec).unwrap();
    let probe = random_tensor(&mut r, y.shape(), -1.0, 1.0);
    let g = conv2d_backward(&x, &wt, &spec, &probe, true).unwrap();
    let dot = |x: &Tensor<f64>, wt: &Tensor<f64>, bias: &[f64]| -> f64 {
        let y = conv2d(x, wt, bias, &spec).unwrap();
        y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
    };
    let k = r.gen_range(0..x.len());
    let x0 = x.data()[k];
    let num = central_diff(
        |v| {
            x.data_mut()[k] = v;
            dot(&x, &wt, &bias)
        },
        x0,
        H,
    );
    x.data_mut()[k] = x0;
    out.push((
        "conv/input".into(),
        rel_err(g.input.as_ref().unwrap().data()[k], num, FLOOR),
    ));
    let k = r.gen_range(0..wt.len());
    let w0 = wt.data()[k];
    let num = central_diff(
        |v| {
            wt.data_mut()[k] = v;
            dot(&x, &wt, &bias)
        },
        w0,
        H,
    );
    wt.data_mut()[k] = w0;
    out.push(("conv/weights".into(), rel_err(g.weights.data()[k], num, FLOOR)));
    let k = r.gen_range(0..bias.len());
    let b0 = bias[k];
    let num = central_diff(
        |v| {
            bias[k] = v;
            dot(&x, &wt, &bias)
        },
        b0,
        H,
    );
    bias[k] = b0;
    out.push(("conv/bias".into(), rel_err(g.bias[k], num, FLOOR)));

    // Total variation.
    let shape = Shape::new(1, 1, r.gen_range(1..=6), r.gen_range(1..=6));
    let mut img = random_tensor(&mut r, shape, 0.0, 1.0);
    let scale = r.gen_range(0.1..3.0);
    let grad = total_variation_backward(&img, scale);
    let k = r.gen_range(0..img.len());
    let v0 = img.data()[k];
    let num = central_diff(
        |v| {
            img.data_mut()[k] = v;
            scale * total_variation(&img)
        },
        v0,
        H,
    );
    img.data_mut()[k] = v0;
    out.push(("tv".into(), rel_err(grad.data()[k], num, FLOOR)));

    // Weave followed by a weighted sum, through the graph.
    let shape = Shape::new(1, 1, r.gen_range(1..=4), r.gen_range(1..=4));
    let mut even = random_tensor(&mut r, shape, -1.0, 1.0);
    let odd = random_tensor(&mut r, shape, -1.0, 1.0);
    let tv_w = r.gen_range(0.1..1.0);
    let eval = |even: &Tensor<f64>| {
        let mut g = Graph::new();
        let e = g.param(even.clone());
        let o = g.constant(odd.clone());
        let full = g.weave_rows(e, o).unwrap();
        let sq = g.sum_squares(full).unwrap();
        let tv = g.total_variation(full).unwrap();
        let tv = g.scale(tv, tv_w).unwrap();
        let loss = g.add(sq, tv).unwrap();
        (g.scalar(loss), g.backward(loss).unwrap().get(e).unwrap().clone())
    };
    let (_, ge) = eval(&even);
    let k = r.gen_range(0..even.len());
    let v0 = even.data()[k];
    let num = central_diff(
        |v| {
            even.data_mut()[k] = v;
            eval(&even).0
        },
        v0,
        H,
    );
    even.data_mut()[k] = v0;
    out.push(("weave".into(), rel_err(ge.data()[k], num, FLOOR)));
    out
}
