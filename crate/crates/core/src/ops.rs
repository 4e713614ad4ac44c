//! Pure tensor kernels. Nothing here records gradients; the autodiff graph
//! calls these for both its forward and backward passes.
//!
//! Convolution is expressed through three correlation primitives that share
//! an im2col lowering:
//!
//! * `correlate`: `a = W · im2col(b)` (conv2d forward)
//! * `correlate_adjoint`: `b = col2im(Wᵀ · a)` (conv2d input gradient,
//!   transposed-convolution forward)
//! * `correlate_weight_grad`: `dW = a · im2col(b)ᵀ`

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub const fn new(stride: usize, padding: usize, groups: usize) -> Self {
        ConvSpec { stride, padding, groups }
    }
}

impl Default for ConvSpec {
    fn default() -> Self {
        ConvSpec::new(1, 0, 1)
    }
}

/// Kernel plus hyperparameters of a (transposed) convolution.
///
/// For `conv2d` the kernel is `(out, in / groups, kh, kw)`. For
/// `conv_transpose2d` it is `(in, out / groups, kh, kw)`, so the same tensor
/// used by both is a pair of adjoint maps.
#[derive(Clone, Debug)]
pub struct ConvParams<T> {
    pub weight: Tensor<T>,
    pub bias: Option<Vec<T>>,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(weight: Tensor<T>, bias: Option<Vec<T>>, spec: ConvSpec) -> Self {
        ConvParams { weight, bias, stride: spec.stride, padding: spec.padding, groups: spec.groups }
    }

    pub fn spec(&self) -> ConvSpec {
        ConvSpec::new(self.stride, self.padding, self.groups)
    }
}

fn dim_err(op: &'static str, axis: &'static str, expected: usize, found: usize) -> Error {
    Error::Dimension { op, axis, expected, found }
}

fn check_spec(op: &'static str, spec: ConvSpec) -> Result<()> {
    if spec.stride == 0 {
        return Err(Error::contract(format!("{op}: stride must be positive")));
    }
    if spec.groups == 0 {
        return Err(Error::contract(format!("{op}: groups must be positive")));
    }
    Ok(())
}

/// Output shape of `conv2d(input, weight)`.
pub fn conv2d_output_shape(input: Shape, weight: Shape, spec: ConvSpec) -> Result<Shape> {
    const OP: &str = "conv2d";
    check_spec(OP, spec)?;
    if input.c != weight.c * spec.groups {
        return Err(dim_err(OP, "channel", weight.c * spec.groups, input.c));
    }
    if weight.n % spec.groups != 0 {
        return Err(dim_err(OP, "output channel", weight.n.div_ceil(spec.groups) * spec.groups, weight.n));
    }
    let ph = input.h + 2 * spec.padding;
    let pw = input.w + 2 * spec.padding;
    if ph < weight.h {
        return Err(dim_err(OP, "height", weight.h, ph));
    }
    if pw < weight.w {
        return Err(dim_err(OP, "width", weight.w, pw));
    }
    Ok(Shape::new(input.n, weight.n, (ph - weight.h) / spec.stride + 1, (pw - weight.w) / spec.stride + 1))
}

/// Output shape of `conv_transpose2d(input, weight)`:
/// `stride·(in − 1) + k − 2·padding` on each spatial axis.
pub fn conv_transpose2d_output_shape(input: Shape, weight: Shape, spec: ConvSpec) -> Result<Shape> {
    const OP: &str = "conv_transpose2d";
    check_spec(OP, spec)?;
    if input.c != weight.n {
        return Err(dim_err(OP, "channel", weight.n, input.c));
    }
    if weight.n % spec.groups != 0 {
        return Err(dim_err(OP, "channel", weight.n.div_ceil(spec.groups) * spec.groups, weight.n));
    }
    if spec.padding >= weight.h || spec.padding >= weight.w {
        return Err(Error::contract(format!(
            "{OP}: padding {} must be smaller than kernel {}x{}",
            spec.padding, weight.h, weight.w
        )));
    }
    if input.h == 0 || input.w == 0 {
        return Err(dim_err(OP, "height", 1, 0));
    }
    let oh = spec.stride * (input.h - 1) + weight.h;
    let ow = spec.stride * (input.w - 1) + weight.w;
    if oh <= 2 * spec.padding {
        return Err(dim_err(OP, "height", 2 * spec.padding + 1, oh));
    }
    if ow <= 2 * spec.padding {
        return Err(dim_err(OP, "width", 2 * spec.padding + 1, ow));
    }
    Ok(Shape::new(input.n, weight.c * spec.groups, oh - 2 * spec.padding, ow - 2 * spec.padding))
}

/// Spatial layout of one lowering: a `(c, h, w)` source image read by a
/// `kh×kw` window into an `oh×ow` grid.
#[derive(Clone, Copy, Debug)]
struct Lowering {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

impl Lowering {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.padding == 0
    }

    /// Valid output range along one axis for kernel tap `k`.
    fn valid(&self, k: usize, extent: usize, out: usize) -> (usize, usize) {
        // out index o reads i = o*s + k - p, valid when 0 <= i < extent
        let (s, p) = (self.stride, self.padding);
        let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
        let hi = if extent + p > k { ((extent + p - k - 1) / s + 1).min(out) } else { 0 };
        (lo.min(hi), hi)
    }

    fn im2col<T: Scalar>(&self, src: &[T], dst: &mut [T]) {
        let cols = self.cols();
        for c in 0..self.c {
            let plane = &src[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                let (ylo, yhi) = self.valid(ki, self.h, self.oh);
                for kj in 0..self.kw {
                    let (xlo, xhi) = self.valid(kj, self.w, self.ow);
                    let row = ((c * self.kh + ki) * self.kw + kj) * cols;
                    let out = &mut dst[row..row + cols];
                    out.fill(T::zero());
                    for oy in ylo..yhi {
                        let iy = oy * self.stride + ki - self.padding;
                        let line = &plane[iy * self.w..(iy + 1) * self.w];
                        let orow = &mut out[oy * self.ow..(oy + 1) * self.ow];
                        if self.stride == 1 {
                            let ix0 = xlo + kj - self.padding;
                            orow[xlo..xhi].copy_from_slice(&line[ix0..ix0 + (xhi - xlo)]);
                        } else {
                            for ox in xlo..xhi {
                                orow[ox] = line[ox * self.stride + kj - self.padding];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im_add<T: Scalar>(&self, src: &[T], dst: &mut [T]) {
        let cols = self.cols();
        for c in 0..self.c {
            let plane = &mut dst[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                let (ylo, yhi) = self.valid(ki, self.h, self.oh);
                for kj in 0..self.kw {
                    let (xlo, xhi) = self.valid(kj, self.w, self.ow);
                    let row = ((c * self.kh + ki) * self.kw + kj) * cols;
                    let col = &src[row..row + cols];
                    for oy in ylo..yhi {
                        let iy = oy * self.stride + ki - self.padding;
                        let line = &mut plane[iy * self.w..(iy + 1) * self.w];
                        let crow = &col[oy * self.ow..(oy + 1) * self.ow];
                        for ox in xlo..xhi {
                            line[ox * self.stride + kj - self.padding] += crow[ox];
                        }
                    }
                }
            }
        }
    }
}

/// `a[n, g] = W_g · im2col(b[n, g])`. `b` is the wide image, `a` the
/// correlation output with `w.n` channels.
fn correlate<T: Scalar>(b: &Tensor<T>, w: &Tensor<T>, spec: ConvSpec, out: Shape) -> Tensor<T> {
    let bs = b.shape();
    let ws = w.shape();
    let g = spec.groups;
    let low = Lowering {
        c: bs.c / g,
        h: bs.h,
        w: bs.w,
        kh: ws.h,
        kw: ws.w,
        oh: out.h,
        ow: out.w,
        stride: spec.stride,
        padding: spec.padding,
    };
    let og = ws.n / g;
    let k = low.rows();
    let p = low.cols();
    let mut result = Tensor::zeros(out);
    let mut cols = if low.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
    let item_out = out.item();
    for n in 0..bs.n {
        let src = b.item(n);
        for grp in 0..g {
            let src_g = &src[grp * low.c * bs.plane()..(grp + 1) * low.c * bs.plane()];
            let rhs: &[T] = if low.is_pointwise() {
                src_g
            } else {
                low.im2col(src_g, &mut cols);
                &cols
            };
            let wg = &w.data()[grp * og * k..(grp + 1) * og * k];
            let dst = &mut result.data_mut()[n * item_out + grp * og * p..n * item_out + (grp + 1) * og * p];
            T::gemm(og, k, p, T::one(), wg, k as isize, 1, rhs, p as isize, 1, T::zero(), dst, p as isize, 1);
        }
    }
    result
}

/// `b[n, g] = col2im(W_gᵀ · a[n, g])`, producing `out` (the wide image shape).
fn correlate_adjoint<T: Scalar>(a: &Tensor<T>, w: &Tensor<T>, spec: ConvSpec, out: Shape) -> Tensor<T> {
    let as_ = a.shape();
    let ws = w.shape();
    let g = spec.groups;
    let low = Lowering {
        c: out.c / g,
        h: out.h,
        w: out.w,
        kh: ws.h,
        kw: ws.w,
        oh: as_.h,
        ow: as_.w,
        stride: spec.stride,
        padding: spec.padding,
    };
    let og = ws.n / g;
    let k = low.rows();
    let p = low.cols();
    let mut result = Tensor::zeros(out);
    let mut cols = vec![T::zero(); if low.is_pointwise() { 0 } else { k * p }];
    let item_out = out.item();
    for n in 0..as_.n {
        let src = a.item(n);
        for grp in 0..g {
            let ag = &src[grp * og * p..(grp + 1) * og * p];
            let wg = &w.data()[grp * og * k..(grp + 1) * og * k];
            let dst_g = &mut result.data_mut()[n * item_out + grp * low.c * out.plane()..n * item_out + (grp + 1) * low.c * out.plane()];
            if low.is_pointwise() {
                T::gemm(k, og, p, T::one(), wg, 1, k as isize, ag, p as isize, 1, T::zero(), dst_g, p as isize, 1);
            } else {
                T::gemm(k, og, p, T::one(), wg, 1, k as isize, ag, p as isize, 1, T::zero(), &mut cols, p as isize, 1);
                low.col2im_add(&cols, dst_g);
            }
        }
    }
    result
}

/// `dW_g = Σ_n a[n, g] · im2col(b[n, g])ᵀ`, shape `(a.c, b.c / groups, kh, kw)`.
fn correlate_weight_grad<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, kh: usize, kw: usize, spec: ConvSpec) -> Tensor<T> {
    let as_ = a.shape();
    let bs = b.shape();
    let g = spec.groups;
    let low = Lowering {
        c: bs.c / g,
        h: bs.h,
        w: bs.w,
        kh,
        kw,
        oh: as_.h,
        ow: as_.w,
        stride: spec.stride,
        padding: spec.padding,
    };
    let og = as_.c / g;
    let k = low.rows();
    let p = low.cols();
    let mut dw = Tensor::zeros(Shape::new(as_.c, low.c, kh, kw));
    let mut cols = vec![T::zero(); if low.is_pointwise() { 0 } else { k * p }];
    for n in 0..bs.n {
        let src = b.item(n);
        let asrc = a.item(n);
        for grp in 0..g {
            let src_g = &src[grp * low.c * bs.plane()..(grp + 1) * low.c * bs.plane()];
            let rhs: &[T] = if low.is_pointwise() {
                src_g
            } else {
                low.im2col(src_g, &mut cols);
                &cols
            };
            let ag = &asrc[grp * og * p..(grp + 1) * og * p];
            let dst = &mut dw.data_mut()[grp * og * k..(grp + 1) * og * k];
            T::gemm(og, p, k, T::one(), ag, p as isize, 1, rhs, 1, p as isize, T::one(), dst, k as isize, 1);
        }
    }
    dw
}

fn add_channel_bias<T: Scalar>(t: &mut Tensor<T>, bias: &[T]) -> Result<()> {
    let s = t.shape();
    if bias.len() != s.c {
        return Err(dim_err("bias", "channel", s.c, bias.len()));
    }
    let plane = s.plane();
    for (i, chunk) in t.data_mut().chunks_mut(plane).enumerate() {
        let b = bias[i % s.c];
        chunk.iter_mut().for_each(|x| *x += b);
    }
    Ok(())
}

/// Per-channel sum of an upstream gradient: the bias gradient.
pub fn channel_sums<T: Scalar>(t: &Tensor<T>) -> Vec<T> {
    let s = t.shape();
    let mut out = vec![T::zero(); s.c];
    for (i, chunk) in t.data().chunks(s.plane().max(1)).enumerate() {
        out[i % s.c] += chunk.iter().copied().sum();
    }
    out
}

pub fn conv2d<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    conv2d_raw(input, &params.weight, params.bias.as_deref(), params.spec())
}

pub(crate) fn conv2d_raw<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: Option<&[T]>, spec: ConvSpec) -> Result<Tensor<T>> {
    let out = conv2d_output_shape(input.shape(), weight.shape(), spec)?;
    let mut y = correlate(input, weight, spec, out);
    if let Some(b) = bias {
        add_channel_bias(&mut y, b)?;
    }
    Ok(y)
}

/// Input and weight gradients of `conv2d` (bias gradient is `channel_sums`).
pub(crate) fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: ConvSpec,
) -> (Tensor<T>, Tensor<T>) {
    let ws = weight.shape();
    let dx = correlate_adjoint(grad_out, weight, spec, input.shape());
    let dw = correlate_weight_grad(grad_out, input, ws.h, ws.w, spec);
    (dx, dw)
}

pub fn conv_transpose2d<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    conv_transpose2d_raw(input, &params.weight, params.bias.as_deref(), params.spec())
}

pub(crate) fn conv_transpose2d_raw<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&[T]>,
    spec: ConvSpec,
) -> Result<Tensor<T>> {
    let out = conv_transpose2d_output_shape(input.shape(), weight.shape(), spec)?;
    let mut y = correlate_adjoint(input, weight, spec, out);
    if let Some(b) = bias {
        add_channel_bias(&mut y, b)?;
    }
    Ok(y)
}

pub(crate) fn conv_transpose2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: ConvSpec,
) -> (Tensor<T>, Tensor<T>) {
    let ws = weight.shape();
    let dx = correlate(grad_out, weight, spec, input.shape());
    let dw = correlate_weight_grad(input, grad_out, ws.h, ws.w, spec);
    (dx, dw)
}

pub fn leaky_relu<T: Scalar>(input: &Tensor<T>, slope: T) -> Tensor<T> {
    input.map(|x| if x >= T::zero() { x } else { slope * x })
}

pub(crate) fn leaky_relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>, slope: T) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x >= T::zero() { g } else { slope * g })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

/// Stacks `b`'s channels after `a`'s.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    for (axis, x, y) in [("batch", sa.n, sb.n), ("height", sa.h, sb.h), ("width", sa.w, sb.w)] {
        if x != y {
            return Err(dim_err("concat_channels", axis, x, y));
        }
    }
    let shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let mut data = Vec::with_capacity(shape.numel());
    for n in 0..sa.n {
        data.extend_from_slice(a.item(n));
        data.extend_from_slice(b.item(n));
    }
    Tensor::from_vec(shape, data)
}

pub(crate) fn split_channels<T: Scalar>(t: &Tensor<T>, first: usize) -> (Tensor<T>, Tensor<T>) {
    let c = t.shape().c;
    (
        t.channel_slice(0, first).expect("split within bounds"),
        t.channel_slice(first, c - first).expect("split within bounds"),
    )
}

/// Output channel `j` is input channel `indices[j]`; duplicates allowed.
pub fn index_select_channels<T: Scalar>(input: &Tensor<T>, indices: &[usize]) -> Result<Tensor<T>> {
    let s = input.shape();
    if let Some(&bad) = indices.iter().find(|&&i| i >= s.c) {
        return Err(Error::Index { index: bad, len: s.c });
    }
    let plane = s.plane();
    let shape = Shape::new(s.n, indices.len(), s.h, s.w);
    let mut data = Vec::with_capacity(shape.numel());
    for n in 0..s.n {
        let item = input.item(n);
        for &i in indices {
            data.extend_from_slice(&item[i * plane..(i + 1) * plane]);
        }
    }
    Tensor::from_vec(shape, data)
}

pub(crate) fn index_select_backward<T: Scalar>(input_shape: Shape, indices: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let plane = input_shape.plane();
    let mut dx = Tensor::zeros(input_shape);
    let item_in = input_shape.item();
    for n in 0..input_shape.n {
        let g = grad_out.item(n);
        let dst = &mut dx.data_mut()[n * item_in..(n + 1) * item_in];
        for (j, &i) in indices.iter().enumerate() {
            for (d, &v) in dst[i * plane..(i + 1) * plane].iter_mut().zip(&g[j * plane..(j + 1) * plane]) {
                *d += v;
            }
        }
    }
    dx
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.expect_same_shape(b, "add")?;
    a.zip_map(b, |x, y| x + y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct six-nested-loop grouped convolution.
    fn naive_conv<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, bias: Option<&[T]>, spec: ConvSpec) -> Tensor<T> {
        let (xs, ws) = (x.shape(), w.shape());
        let oh = (xs.h + 2 * spec.padding - ws.h) / spec.stride + 1;
        let ow = (xs.w + 2 * spec.padding - ws.w) / spec.stride + 1;
        let og = ws.n / spec.groups;
        Tensor::from_fn(Shape::new(xs.n, ws.n, oh, ow), |n, o, y, xo| {
            let g = o / og;
            let mut acc = bias.map_or(T::zero(), |b| b[o]);
            for ci in 0..ws.c {
                for ki in 0..ws.h {
                    for kj in 0..ws.w {
                        let iy = (y * spec.stride + ki) as isize - spec.padding as isize;
                        let ix = (xo * spec.stride + kj) as isize - spec.padding as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                            acc += w.at(o, ci, ki, kj) * x.at(n, g * ws.c + ci, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    /// Scatter-accumulate transposed convolution.
    fn naive_conv_transpose(x: &Tensor<f64>, w: &Tensor<f64>, spec: ConvSpec) -> Tensor<f64> {
        let (xs, ws) = (x.shape(), w.shape());
        let full_h = spec.stride * (xs.h - 1) + ws.h;
        let full_w = spec.stride * (xs.w - 1) + ws.w;
        let cg_in = xs.c / spec.groups;
        let mut full = Tensor::zeros(Shape::new(xs.n, ws.c * spec.groups, full_h, full_w));
        for n in 0..xs.n {
            for ci in 0..xs.c {
                let g = ci / cg_in;
                for y in 0..xs.h {
                    for xx in 0..xs.w {
                        let v = x.at(n, ci, y, xx);
                        for co in 0..ws.c {
                            for ki in 0..ws.h {
                                for kj in 0..ws.w {
                                    let oc = g * ws.c + co;
                                    let (oy, ox) = (y * spec.stride + ki, xx * spec.stride + kj);
                                    let cur = full.at(n, oc, oy, ox);
                                    full.set(n, oc, oy, ox, cur + v * w.at(ci, co, ki, kj));
                                }
                            }
                        }
                    }
                }
            }
        }
        let p = spec.padding;
        Tensor::from_fn(Shape::new(xs.n, ws.c * spec.groups, full_h - 2 * p, full_w - 2 * p), |n, c, y, x| {
            full.at(n, c, y + p, x + p)
        })
    }

    #[test]
    fn identity_kernel_returns_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::randn(Shape::new(1, 1, 5, 7), 1.0, &mut rng);
        let p = ConvParams::new(Tensor::full(Shape::new(1, 1, 1, 1), 1.0), None, ConvSpec::default());
        assert_eq!(conv2d(&x, &p).unwrap(), x);
    }

    #[test]
    fn all_ones_three_by_three_counts_nine() {
        let x = Tensor::<f32>::full(Shape::new(1, 1, 3, 3), 1.0);
        let p = ConvParams::new(Tensor::full(Shape::new(1, 1, 3, 3), 1.0), None, ConvSpec::default());
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 1, 1));
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn grouped_conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::<f32>::randn(Shape::new(1, 4, 8, 8), 1.0, &mut rng);
        let w = Tensor::<f32>::randn(Shape::new(6, 2, 3, 3), 0.5, &mut rng);
        let bias: Vec<f32> = (0..6).map(|i| i as f32 * 0.1).collect();
        for spec in [ConvSpec::new(1, 1, 2), ConvSpec::new(2, 0, 2), ConvSpec::new(2, 1, 2), ConvSpec::new(3, 2, 2)] {
            let got = conv2d(&x, &ConvParams::new(w.clone(), Some(bias.clone()), spec)).unwrap();
            let want = naive_conv(&x, &w, Some(&bias), spec);
            assert!(got.max_abs_diff(&want).unwrap() < 1e-6, "{spec:?}");
        }
    }

    #[test]
    fn grouped_conv_is_concat_of_slice_convs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::<f64>::randn(Shape::new(2, 6, 5, 5), 1.0, &mut rng);
        let w = Tensor::<f64>::randn(Shape::new(9, 2, 3, 3), 1.0, &mut rng);
        let spec = ConvSpec::new(1, 1, 3);
        let whole = conv2d_raw(&x, &w, None, spec).unwrap();
        let mut parts: Option<Tensor<f64>> = None;
        for g in 0..3 {
            let xg = x.channel_slice(2 * g, 2).unwrap();
            let wg = w.clone().reshape(Shape::new(1, 9, 2 * 9, 1)).unwrap();
            let wg = wg.channel_slice(3 * g, 3).unwrap().reshape(Shape::new(3, 2, 3, 3)).unwrap();
            let yg = conv2d_raw(&xg, &wg, None, ConvSpec::new(1, 1, 1)).unwrap();
            parts = Some(match parts {
                None => yg,
                Some(p) => concat_channels(&p, &yg).unwrap(),
            });
        }
        assert_eq!(whole, parts.unwrap());
    }

    #[test]
    fn transposed_conv_of_unit_impulse_is_cropped_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Tensor::<f64>::randn(Shape::new(1, 2, 4, 4), 1.0, &mut rng);
        let x = Tensor::full(Shape::new(1, 1, 1, 1), 1.0);
        let y = conv_transpose2d_raw(&x, &w, None, ConvSpec::new(2, 1, 1)).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 2, 2));
        for c in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(y.at(0, c, i, j), w.at(0, c, i + 1, j + 1));
                }
            }
        }
    }

    #[test]
    fn transposed_conv_matches_scatter_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (spec, k, cin, cout_g) in [
            (ConvSpec::new(2, 1, 1), 4, 3, 2),
            (ConvSpec::new(3, 1, 1), 5, 2, 3),
            (ConvSpec::new(2, 0, 2), 3, 4, 1),
            (ConvSpec::new(1, 1, 1), 3, 2, 2),
        ] {
            let x = Tensor::<f64>::randn(Shape::new(2, cin, 4, 3), 1.0, &mut rng);
            let w = Tensor::<f64>::randn(Shape::new(cin, cout_g, k, k), 1.0, &mut rng);
            let got = conv_transpose2d_raw(&x, &w, None, spec).unwrap();
            let want = naive_conv_transpose(&x, &w, spec);
            assert!(got.max_abs_diff(&want).unwrap() < 1e-12, "{spec:?}");
        }
    }

    #[test]
    fn transposed_conv_equals_conv_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = ConvSpec::new(2, 1, 1);
        let x = Tensor::<f32>::randn(Shape::new(1, 3, 8, 8), 1.0, &mut rng);
        let w = Tensor::<f32>::randn(Shape::new(5, 3, 4, 4), 1.0, &mut rng);
        let y = conv2d_raw(&x, &w, None, spec).unwrap();
        let dy = Tensor::<f32>::randn(y.shape(), 1.0, &mut rng);
        let (dx, _) = conv2d_backward(&x, &w, &dy, spec);
        let t = conv_transpose2d_raw(&dy, &w, None, spec).unwrap();
        assert_eq!(t.shape(), x.shape());
        assert!(t.max_abs_diff(&dx).unwrap() < 1e-6);
    }

    #[test]
    fn zero_input_gives_bias_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = Tensor::<f32>::randn(Shape::new(2, 3, 4, 4), 1.0, &mut rng);
        let x = Tensor::zeros(Shape::new(1, 2, 3, 3));
        let y = conv_transpose2d_raw(&x, &w, Some(&[0.5, -1.0, 2.0]), ConvSpec::new(2, 1, 1)).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 3, 6, 6));
        assert!(y.channel_slice(1, 1).unwrap().data().iter().all(|&v| v == -1.0));
        let y0 = conv_transpose2d_raw(&x, &w, None, ConvSpec::new(2, 1, 1)).unwrap();
        assert!(y0.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_errors_name_the_axis() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 3, 4, 4));
        let w = Tensor::<f32>::zeros(Shape::new(4, 2, 3, 3));
        match conv2d_raw(&x, &w, None, ConvSpec::new(1, 1, 1)) {
            Err(Error::Dimension { axis: "channel", expected: 2, found: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let w = Tensor::<f32>::zeros(Shape::new(1, 3, 7, 3));
        match conv2d_raw(&x, &w, None, ConvSpec::default()) {
            Err(Error::Dimension { axis: "height", .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn leaky_relu_definition() {
        let x = Tensor::<f32>::from_vec(Shape::new(1, 1, 1, 3), vec![2.0, -1.0, 0.0]).unwrap();
        let y = leaky_relu(&x, 0.1);
        assert_eq!(y.data()[0], 2.0);
        assert!((y.data()[1] + 0.1).abs() < 1e-7);
        assert_eq!(y.data()[2], 0.0);
    }

    #[test]
    fn concat_widths_and_empty_operand() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 16, 8, 8));
        let b = Tensor::<f32>::full(Shape::new(1, 20, 8, 8), 1.0);
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), Shape::new(1, 36, 8, 8));
        assert_eq!(c.at(0, 15, 0, 0), 0.0);
        assert_eq!(c.at(0, 16, 0, 0), 1.0);
        let empty = Tensor::<f32>::zeros(Shape::new(1, 0, 8, 8));
        assert_eq!(concat_channels(&b, &empty).unwrap(), b);
        let bad = Tensor::<f32>::zeros(Shape::new(1, 2, 8, 7));
        assert!(matches!(concat_channels(&a, &bad), Err(Error::Dimension { axis: "width", .. })));
    }

    #[test]
    fn index_select_reorders_and_rejects_out_of_range() {
        let x = Tensor::<f32>::from_fn(Shape::new(1, 3, 2, 2), |_, c, _, _| c as f32);
        let id = index_select_channels(&x, &[0, 1, 2]).unwrap();
        assert_eq!(id, x);
        let y = index_select_channels(&x, &[2, 0]).unwrap();
        assert_eq!(y.at(0, 0, 1, 1), 2.0);
        assert_eq!(y.at(0, 1, 0, 0), 0.0);
        assert!(matches!(index_select_channels(&x, &[3]), Err(Error::Index { index: 3, len: 3 })));
    }

    #[test]
    fn add_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Tensor::<f32>::randn(Shape::new(2, 2, 3, 3), 1.0, &mut rng);
        assert_eq!(add(&a, &Tensor::zeros(a.shape())).unwrap(), a);
        assert!(add(&a, &Tensor::zeros(Shape::new(2, 2, 3, 2))).is_err());
    }
}
