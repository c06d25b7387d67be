//! 2-D convolution with "same" padding and per-axis stride, lowered to GEMM
//! through an im2col buffer.

use crate::tensor::{Element, Result, Shape, Tensor, TensorError};

/// Border handling for "same" convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Padding {
    /// Out-of-range taps read zero.
    ZeroSame,
    /// Out-of-range taps read the nearest edge pixel.
    #[default]
    ReplicateSame,
}

impl Padding {
    pub fn code(self) -> u32 {
        match self {
            Padding::ZeroSame => 0,
            Padding::ReplicateSame => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Padding::ZeroSame),
            1 => Some(Padding::ReplicateSame),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub padding: Padding,
}

impl ConvSpec {
    /// Square-kernel, unit-stride spec with replicate padding.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride_h: 1,
            stride_w: 1,
            padding: Padding::ReplicateSame,
        }
    }

    pub fn with_stride_h(mut self, stride_h: usize) -> Self {
        self.stride_h = stride_h;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(TensorError::Contract(format!(
                "conv channels must be positive, got {}->{}",
                self.in_channels, self.out_channels
            )));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(TensorError::Contract("conv kernel extents must be positive".into()));
        }
        if !(1..=2).contains(&self.stride_h) || self.stride_w != 1 {
            return Err(TensorError::Contract(format!(
                "unsupported stride {}x{}: vertical stride must be 1 or 2, horizontal 1",
                self.stride_h, self.stride_w
            )));
        }
        Ok(())
    }

    /// Output (height, width) for an input plane of the given size.
    pub fn output_hw(&self, height: usize, width: usize) -> (usize, usize) {
        (height.div_ceil(self.stride_h), width.div_ceil(self.stride_w))
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
    }

    /// Multiply-accumulates per output pixel.
    pub fn macs_per_output(&self) -> u64 {
        (self.kernel_h * self.kernel_w * self.in_channels * self.out_channels) as u64
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride_h == 1 && self.stride_w == 1
    }
}

/// Source index for each (tap, output position) along one axis; `None`
/// marks a zero-padded tap.
fn tap_map(extent: usize, out_extent: usize, kernel: usize, stride: usize, padding: Padding) -> Vec<Option<usize>> {
    let before = (kernel as isize - 1) / 2;
    let mut map = Vec::with_capacity(kernel * out_extent);
    for k in 0..kernel as isize {
        for o in 0..out_extent as isize {
            let i = o * stride as isize + k - before;
            map.push(if (0..extent as isize).contains(&i) {
                Some(i as usize)
            } else {
                match padding {
                    Padding::ZeroSame => None,
                    Padding::ReplicateSame => Some(i.clamp(0, extent as isize - 1) as usize),
                }
            });
        }
    }
    map
}

struct Geometry {
    height: usize,
    width: usize,
    out_h: usize,
    out_w: usize,
    rows: Vec<Option<usize>>,
    cols: Vec<Option<usize>>,
    /// Per horizontal tap: output columns `lo..hi` read input columns
    /// `lo + shift..hi + shift` without touching the border.
    interior: Vec<(usize, usize, isize)>,
}

impl Geometry {
    fn new(spec: &ConvSpec, height: usize, width: usize) -> Self {
        let (out_h, out_w) = spec.output_hw(height, width);
        let before = (spec.kernel_w as isize - 1) / 2;
        let interior = (0..spec.kernel_w as isize)
            .map(|kx| {
                let shift = kx - before;
                let lo = (-shift).clamp(0, out_w as isize) as usize;
                let hi = (width as isize - shift).clamp(lo as isize, out_w as isize) as usize;
                (lo, hi, shift)
            })
            .collect();
        Self {
            height,
            width,
            out_h,
            out_w,
            rows: tap_map(height, out_h, spec.kernel_h, spec.stride_h, spec.padding),
            cols: tap_map(width, out_w, spec.kernel_w, spec.stride_w, spec.padding),
            interior,
        }
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }
}

fn im2col<T: Element>(image: &[T], spec: &ConvSpec, geo: &Geometry, cols: &mut [T]) {
    let plane = geo.height * geo.width;
    let p = geo.out_plane();
    let mut r = 0;
    for c in 0..spec.in_channels {
        let src = &image[c * plane..(c + 1) * plane];
        for ky in 0..spec.kernel_h {
            let rmap = &geo.rows[ky * geo.out_h..(ky + 1) * geo.out_h];
            for kx in 0..spec.kernel_w {
                let cmap = &geo.cols[kx * geo.out_w..(kx + 1) * geo.out_w];
                let (lo, hi, shift) = geo.interior[kx];
                let dst = &mut cols[r * p..(r + 1) * p];
                for (oy, sy) in rmap.iter().enumerate() {
                    let drow = &mut dst[oy * geo.out_w..(oy + 1) * geo.out_w];
                    let Some(sy) = sy else {
                        drow.fill(T::ZERO);
                        continue;
                    };
                    let srow = &src[sy * geo.width..(sy + 1) * geo.width];
                    let s0 = (lo as isize + shift) as usize;
                    drow[lo..hi].copy_from_slice(&srow[s0..s0 + (hi - lo)]);
                    for ox in (0..lo).chain(hi..geo.out_w) {
                        drow[ox] = cmap[ox].map_or(T::ZERO, |sx| srow[sx]);
                    }
                }
                r += 1;
            }
        }
    }
}

fn col2im<T: Element>(cols: &[T], spec: &ConvSpec, geo: &Geometry, image: &mut [T]) {
    let plane = geo.height * geo.width;
    let p = geo.out_plane();
    let mut acc = vec![0.0f64; plane];
    let mut r = 0;
    for c in 0..spec.in_channels {
        acc.fill(0.0);
        for ky in 0..spec.kernel_h {
            let rmap = &geo.rows[ky * geo.out_h..(ky + 1) * geo.out_h];
            for kx in 0..spec.kernel_w {
                let cmap = &geo.cols[kx * geo.out_w..(kx + 1) * geo.out_w];
                let (lo, hi, shift) = geo.interior[kx];
                let src = &cols[r * p..(r + 1) * p];
                for (oy, sy) in rmap.iter().enumerate() {
                    let Some(sy) = sy else { continue };
                    let arow = &mut acc[sy * geo.width..(sy + 1) * geo.width];
                    let srow = &src[oy * geo.out_w..(oy + 1) * geo.out_w];
                    let s0 = (lo as isize + shift) as usize;
                    for (a, g) in arow[s0..s0 + (hi - lo)].iter_mut().zip(&srow[lo..hi]) {
                        *a += g.to_f64();
                    }
                    for ox in (0..lo).chain(hi..geo.out_w) {
                        if let Some(sx) = cmap[ox] {
                            arow[sx] += srow[ox].to_f64();
                        }
                    }
                }
                r += 1;
            }
        }
        for (d, a) in image[c * plane..(c + 1) * plane].iter_mut().zip(&acc) {
            *d = T::from_f64(*a);
        }
    }
}

fn check_conv_shapes<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias_len: usize,
    spec: &ConvSpec,
) -> Result<()> {
    spec.validate()?;
    if input.shape().channels != spec.in_channels || weights.shape() != spec.weight_shape() {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            left: input.shape(),
            right: weights.shape(),
        });
    }
    if bias_len != spec.out_channels {
        return Err(TensorError::Contract(format!(
            "conv2d bias has {bias_len} entries, expected {}",
            spec.out_channels
        )));
    }
    Ok(())
}

/// Forward convolution. Output extents are `ceil(H / stride_h) x W`; output
/// row `i` is centred on input row `stride_h * i`.
pub fn conv2d<T: Element>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T], spec: &ConvSpec) -> Result<Tensor<T>> {
    check_conv_shapes(input, weights, bias.len(), spec)?;
    let s = input.shape();
    let geo = Geometry::new(spec, s.height, s.width);
    let p = geo.out_plane();
    let k = spec.patch_len();
    let out_shape = Shape::new(s.batch, spec.out_channels, geo.out_h, geo.out_w);
    let mut out = vec![T::ZERO; out_shape.numel()];
    let mut cols = if spec.is_pointwise() {
        Vec::new()
    } else {
        vec![T::ZERO; k * p]
    };
    let in_len = spec.in_channels * s.plane();
    let out_len = spec.out_channels * p;
    for n in 0..s.batch {
        let image = &input.data()[n * in_len..(n + 1) * in_len];
        let b: &[T] = if spec.is_pointwise() {
            image
        } else {
            im2col(image, spec, &geo, &mut cols);
            &cols
        };
        let dst = &mut out[n * out_len..(n + 1) * out_len];
        for (o, row) in dst.chunks_exact_mut(p).enumerate() {
            row.fill(bias[o]);
        }
        // SAFETY: w is out x k, b is k x p, dst is out x p, all row-major and
        // sized exactly; dst is a fresh buffer.
        unsafe {
            T::gemm(
                spec.out_channels,
                k,
                p,
                T::ONE,
                weights.data().as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                p as isize,
                1,
                T::ONE,
                dst.as_mut_ptr(),
                p as isize,
                1,
            );
        }
    }
    Tensor::from_vec(out_shape, out)?.ensure_finite("conv2d")
}

/// Gradients of a convolution with respect to its three operands.
#[derive(Debug, Clone)]
pub struct ConvGrads<T: Element> {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

/// Reverse pass of [`conv2d`] given the upstream gradient of its output.
pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
    want_input: bool,
) -> Result<ConvGrads<T>> {
    check_conv_shapes(input, weights, spec.out_channels, spec)?;
    let s = input.shape();
    let geo = Geometry::new(spec, s.height, s.width);
    let expected = Shape::new(s.batch, spec.out_channels, geo.out_h, geo.out_w);
    if grad_out.shape() != expected {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d_backward",
            left: grad_out.shape(),
            right: expected,
        });
    }
    let p = geo.out_plane();
    let k = spec.patch_len();
    let in_len = spec.in_channels * s.plane();
    let out_len = spec.out_channels * p;

    let mut grad_w = vec![T::ZERO; spec.out_channels * k];
    let mut grad_b = vec![0.0f64; spec.out_channels];
    let mut grad_in = if want_input {
        vec![T::ZERO; input.len()]
    } else {
        Vec::new()
    };
    let mut cols = if spec.is_pointwise() {
        Vec::new()
    } else {
        vec![T::ZERO; k * p]
    };
    let mut dcols = if want_input && !spec.is_pointwise() {
        vec![T::ZERO; k * p]
    } else {
        Vec::new()
    };

    for n in 0..s.batch {
        let image = &input.data()[n * in_len..(n + 1) * in_len];
        let dout = &grad_out.data()[n * out_len..(n + 1) * out_len];
        for (gb, row) in grad_b.iter_mut().zip(dout.chunks_exact(p)) {
            *gb += row.iter().map(|v| v.to_f64()).sum::<f64>();
        }
        let b: &[T] = if spec.is_pointwise() {
            image
        } else {
            im2col(image, spec, &geo, &mut cols);
            &cols
        };
        // SAFETY: dout is out x p, b viewed transposed is p x k, grad_w is
        // out x k; all buffers are distinct and sized exactly.
        unsafe {
            T::gemm(
                spec.out_channels,
                p,
                k,
                T::ONE,
                dout.as_ptr(),
                p as isize,
                1,
                b.as_ptr(),
                1,
                p as isize,
                T::ONE,
                grad_w.as_mut_ptr(),
                k as isize,
                1,
            );
        }
        if !want_input {
            continue;
        }
        let dst = &mut grad_in[n * in_len..(n + 1) * in_len];
        let target: &mut [T] = if spec.is_pointwise() { dst } else { &mut dcols };
        // SAFETY: weights viewed transposed is k x out, dout is out x p and
        // target is k x p; target is distinct from both inputs.
        unsafe {
            T::gemm(
                k,
                spec.out_channels,
                p,
                T::ONE,
                weights.data().as_ptr(),
                1,
                k as isize,
                dout.as_ptr(),
                p as isize,
                1,
                T::ZERO,
                target.as_mut_ptr(),
                p as isize,
                1,
            );
        }
        if !spec.is_pointwise() {
            col2im(&dcols, spec, &geo, &mut grad_in[n * in_len..(n + 1) * in_len]);
        }
    }

    Ok(ConvGrads {
        input: if want_input {
            Some(Tensor::from_vec(s, grad_in)?.ensure_finite("conv2d_backward")?)
        } else {
            None
        },
        weights: Tensor::from_vec(spec.weight_shape(), grad_w)?.ensure_finite("conv2d_backward")?,
        bias: grad_b.into_iter().map(T::from_f64).collect(),
    })
}
