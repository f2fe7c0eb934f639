//! Forward and adjoint kernels on channel-major tensors.

use super::Scalar;
use crate::imaging::bilinear_taps;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// Convolution weights laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weights: vec![T::zero(); out_channels * in_channels * kernel * kernel],
            bias: vec![T::zero(); out_channels],
        }
    }

    fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> T {
        let k = self.kernel;
        self.weights[((o * self.in_channels + i) * k + ky) * k + kx]
    }
}

/// Valid output range `[lo, hi)` along one axis for tap offset `d`.
fn span(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).min(len as isize).max(0) as usize;
    (lo.min(hi), hi)
}

/// Same-size convolution with zero padding `kernel / 2`.
pub fn conv_forward<T: Scalar>(p: &ConvParams<T>, input: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (input.height, input.width);
    let pad = (p.kernel / 2) as isize;
    let mut out = Tensor::zeros(p.out_channels, h, w);
    for o in 0..p.out_channels {
        let plane = out.plane_mut(o);
        plane.fill(p.bias[o]);
        for i in 0..p.in_channels {
            let src = input.plane(i);
            for ky in 0..p.kernel {
                let dy = ky as isize - pad;
                let (y0, y1) = span(h, dy);
                for kx in 0..p.kernel {
                    let dx = kx as isize - pad;
                    let (x0, x1) = span(w, dx);
                    let wv = p.weight(o, i, ky, kx);
                    if wv == T::zero() {
                        continue;
                    }
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let dst_row = &mut plane[y * w + x0..y * w + x1];
                        let sx0 = (x0 as isize + dx) as usize;
                        let src_row = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                        for (d, &s) in dst_row.iter_mut().zip(src_row) {
                            *d = *d + wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns the input gradient and accumulates parameter gradients into `grad`.
pub fn conv_backward<T: Scalar>(
    p: &ConvParams<T>,
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad: &mut ConvParams<T>,
    need_input_grad: bool,
) -> Option<Tensor<T>> {
    let (h, w) = (input.height, input.width);
    let pad = (p.kernel / 2) as isize;
    let k = p.kernel;
    let mut grad_in = need_input_grad.then(|| Tensor::zeros(p.in_channels, h, w));
    for o in 0..p.out_channels {
        let go = grad_out.plane(o);
        grad.bias[o] = grad.bias[o] + go.iter().fold(T::zero(), |a, &b| a + b);
        for i in 0..p.in_channels {
            let src = input.plane(i);
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = span(h, dy);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = span(w, dx);
                    let sx0 = (x0 as isize + dx) as usize;
                    let n = x1 - x0;
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let g_row = &go[y * w + x0..y * w + x1];
                        let s_row = &src[sy * w + sx0..sy * w + sx0 + n];
                        acc = acc + dot(g_row, s_row);
                    }
                    let widx = ((o * p.in_channels + i) * k + ky) * k + kx;
                    grad.weights[widx] = grad.weights[widx] + acc;

                    if let Some(gi) = grad_in.as_mut() {
                        let wv = p.weights[widx];
                        if wv == T::zero() {
                            continue;
                        }
                        let gplane = gi.plane_mut(i);
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let g_row = &go[y * w + x0..y * w + x1];
                            let dst = &mut gplane[sy * w + sx0..sy * w + sx0 + n];
                            for (d, &g) in dst.iter_mut().zip(g_row) {
                                *d = *d + wv * g;
                            }
                        }
                    }
                }
            }
        }
    }
    grad_in
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // four partial sums let the compiler vectorise without reassociation
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] = acc[l] + a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = T::zero();
    for j in 4 * chunks..a.len() {
        tail = tail + a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    for v in &mut out.data {
        *v = v.max(T::zero());
    }
    out
}

pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (gv, &x) in g.data.iter_mut().zip(&input.data) {
        if x <= T::zero() {
            *gv = T::zero();
        }
    }
    g
}

pub fn avgpool_forward<T: Scalar>(input: &Tensor<T>, f: usize) -> Tensor<T> {
    let (oh, ow) = (input.height / f, input.width / f);
    let scale = T::one() / T::from(f * f).expect("small integer");
    let mut out = Tensor::zeros(input.channels, oh, ow);
    for c in 0..input.channels {
        let src = input.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..oh {
            for x in 0..ow {
                let mut s = T::zero();
                for yy in 0..f {
                    for xx in 0..f {
                        s = s + src[(y * f + yy) * input.width + x * f + xx];
                    }
                }
                dst[y * ow + x] = s * scale;
            }
        }
    }
    out
}

pub fn avgpool_backward<T: Scalar>(
    in_height: usize,
    in_width: usize,
    grad_out: &Tensor<T>,
    f: usize,
) -> Tensor<T> {
    let scale = T::one() / T::from(f * f).expect("small integer");
    let mut g = Tensor::zeros(grad_out.channels, in_height, in_width);
    for c in 0..grad_out.channels {
        let go = grad_out.plane(c);
        let dst = g.plane_mut(c);
        for y in 0..grad_out.height {
            for x in 0..grad_out.width {
                let v = go[y * grad_out.width + x] * scale;
                for yy in 0..f {
                    for xx in 0..f {
                        dst[(y * f + yy) * in_width + x * f + xx] = v;
                    }
                }
            }
        }
    }
    g
}

struct Taps<T> {
    xs: Vec<(usize, usize, T)>,
    ys: Vec<(usize, usize, T)>,
}

fn taps<T: Scalar>(h: usize, w: usize, oh: usize, ow: usize) -> Taps<T> {
    let conv = |(a, b, t): (usize, usize, f64)| (a, b, T::from(t).expect("finite"));
    Taps {
        xs: (0..ow).map(|x| conv(bilinear_taps(x, w, ow))).collect(),
        ys: (0..oh).map(|y| conv(bilinear_taps(y, h, oh))).collect(),
    }
}

/// Bilinear upsampling by an integer factor (pixel-centre aligned).
pub fn upsample_forward<T: Scalar>(input: &Tensor<T>, f: usize) -> Tensor<T> {
    let (h, w) = (input.height, input.width);
    let (oh, ow) = (h * f, w * f);
    let t = taps::<T>(h, w, oh, ow);
    let mut out = Tensor::zeros(input.channels, oh, ow);
    for c in 0..input.channels {
        let src = input.plane(c);
        let dst = out.plane_mut(c);
        for (oy, &(y0, y1, ty)) in t.ys.iter().enumerate() {
            for (ox, &(x0, x1, tx)) in t.xs.iter().enumerate() {
                let top = src[y0 * w + x0] + (src[y0 * w + x1] - src[y0 * w + x0]) * tx;
                let bottom = src[y1 * w + x0] + (src[y1 * w + x1] - src[y1 * w + x0]) * tx;
                dst[oy * ow + ox] = top + (bottom - top) * ty;
            }
        }
    }
    out
}

pub fn upsample_backward<T: Scalar>(
    in_height: usize,
    in_width: usize,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let (h, w) = (in_height, in_width);
    let (oh, ow) = (grad_out.height, grad_out.width);
    let t = taps::<T>(h, w, oh, ow);
    let one = T::one();
    let mut g = Tensor::zeros(grad_out.channels, h, w);
    for c in 0..grad_out.channels {
        let go = grad_out.plane(c);
        let dst = g.plane_mut(c);
        for (oy, &(y0, y1, ty)) in t.ys.iter().enumerate() {
            for (ox, &(x0, x1, tx)) in t.xs.iter().enumerate() {
                let v = go[oy * ow + ox];
                let (top, bottom) = (v * (one - ty), v * ty);
                dst[y0 * w + x0] = dst[y0 * w + x0] + top * (one - tx);
                dst[y0 * w + x1] = dst[y0 * w + x1] + top * tx;
                dst[y1 * w + x0] = dst[y1 * w + x0] + bottom * (one - tx);
                dst[y1 * w + x1] = dst[y1 * w + x1] + bottom * tx;
            }
        }
    }
    g
}
