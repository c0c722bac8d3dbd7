//! 2-D convolution (cross-correlation, no kernel flip).
//!
//! The forward and backward passes lower each image to a column matrix
//! (im2col) and run a GEMM; [`conv2d_direct`] is a plain nested-loop
//! implementation kept as a reference.

use rayon::prelude::*;

use super::{InitSpec, Module};
use crate::error::{Error, Result};
use crate::tensor::{kernels, Element, Tensor};

#[derive(Clone, Debug)]
pub struct Conv2dLayer<T: Element = f32> {
    /// `[out_ch, in_ch, kh, kw]`
    pub weights: Tensor<T>,
    /// `[out_ch]`
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    batch: usize,
    in_ch: usize,
    height: usize,
    width: usize,
    out_ch: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

impl<T: Element> Conv2dLayer<T> {
    /// Layer with `kernel`×`kernel` filters; weights drawn from `init`,
    /// bias zero (or the constant for [`InitScheme::Constant`](super::InitScheme)).
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        init: &InitSpec,
        stream: u64,
    ) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 || kernel == 0 || stride == 0 {
            return Err(Error::InvalidParameter(format!(
                "conv2d: in={in_ch} out={out_ch} kernel={kernel} stride={stride}"
            )));
        }
        Ok(Self {
            weights: init.weights(&[out_ch, in_ch, kernel, kernel], stream),
            bias: init.bias(out_ch),
            stride,
            padding,
        })
    }

    /// 3×3 "same" convolution with stride 1.
    pub fn same3x3(in_ch: usize, out_ch: usize, init: &InitSpec, stream: u64) -> Result<Self> {
        Self::new(in_ch, out_ch, 3, 1, 1, init, stream)
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }

    /// Output spatial size for an `h`×`w` input.
    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel();
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < kh || wp < kw {
            return None;
        }
        Some(((hp - kh) / self.stride + 1, (wp - kw) / self.stride + 1))
    }

    fn geometry(&self, input: &Tensor<T>) -> Result<Geometry> {
        let s = input.shape();
        if s.len() != 4 {
            return Err(Error::InvalidShape(format!(
                "conv2d expects [B,C,H,W], got {s:?}"
            )));
        }
        if s[1] != self.in_channels() {
            return Err(Error::ChannelMismatch {
                input: s[1],
                expected: self.in_channels(),
            });
        }
        let (kh, kw) = self.kernel();
        let (out_h, out_w) = self.output_size(s[2], s[3]).ok_or(Error::InputTooSmall {
            op: "conv2d",
            input: [s[2] + 2 * self.padding, s[3] + 2 * self.padding],
            window: [kh, kw],
        })?;
        Ok(Geometry {
            batch: s[0],
            in_ch: s[1],
            height: s[2],
            width: s[3],
            out_ch: self.out_channels(),
            kh,
            kw,
            stride: self.stride,
            pad: self.padding,
            out_h,
            out_w,
        })
    }
}

impl<T: Element> Module<T> for Conv2dLayer<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(x, self)
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.weights, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weights, &mut self.bias]
    }
}

fn im2col<T: Element>(g: &Geometry, image: &[T], cols: &mut [T]) {
    let n = g.col_cols();
    for c in 0..g.in_ch {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if y < 0 || y >= g.height as isize {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[y as usize * g.width..(y as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let x = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if x < 0 || x >= g.width as isize {
                            T::zero()
                        } else {
                            src[x as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Element>(g: &Geometry, cols: &[T], image: &mut [T]) {
    let n = g.col_cols();
    for c in 0..g.in_ch {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + ki) as isize - g.pad as isize;
                    if y < 0 || y >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[y as usize * g.width..(y as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let x = (ox * g.stride + kj) as isize - g.pad as isize;
                        if x >= 0 && x < g.width as isize {
                            dst[x as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolves `[B,C,H,W]` with the layer's filters, producing
/// `[B,out_ch,H',W']` where `H' = (H + 2·pad − kh)/stride + 1`.
pub fn conv2d<T: Element>(input: &Tensor<T>, layer: &Conv2dLayer<T>) -> Result<Tensor<T>> {
    let g = layer.geometry(input)?;
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let in_len = g.in_ch * g.height * g.width;
    let out_len = g.out_ch * ncols;

    let mut out = vec![T::zero(); g.batch * out_len];
    let x = input.data();
    let w = layer.weights.data();
    let b = layer.bias.data();
    out.par_chunks_mut(out_len)
        .enumerate()
        .for_each(|(bi, dst)| {
            let mut cols = vec![T::zero(); rows * ncols];
            im2col(&g, &x[bi * in_len..(bi + 1) * in_len], &mut cols);
            for (o, chunk) in dst.chunks_mut(ncols).enumerate() {
                chunk.iter_mut().for_each(|v| *v = b[o]);
            }
            kernels::gemm_nn(g.out_ch, rows, ncols, w, &cols, dst);
        });

    let (x_t, w_t) = (input.clone(), layer.weights.clone());
    let need = (
        input.is_requires_grad(),
        layer.weights.is_requires_grad(),
        layer.bias.is_requires_grad(),
    );
    Ok(Tensor::from_op(
        out,
        &[g.batch, g.out_ch, g.out_h, g.out_w],
        "conv2d",
        vec![input.clone(), layer.weights.clone(), layer.bias.clone()],
        Box::new(move |grad| {
            let x = x_t.data();
            let w = w_t.data();
            // Per-sample partials, reduced in batch order afterwards.
            let partials: Vec<(Vec<T>, Option<Vec<T>>)> = (0..g.batch)
                .into_par_iter()
                .map(|bi| {
                    let go = &grad[bi * out_len..(bi + 1) * out_len];
                    let mut dx = vec![T::zero(); in_len];
                    let mut dw = None;
                    if need.1 {
                        let mut cols = vec![T::zero(); rows * ncols];
                        im2col(&g, &x[bi * in_len..(bi + 1) * in_len], &mut cols);
                        let mut acc = vec![T::zero(); g.out_ch * rows];
                        kernels::gemm_nt(g.out_ch, ncols, rows, go, &cols, &mut acc);
                        dw = Some(acc);
                    }
                    if need.0 {
                        let mut dcols = vec![T::zero(); rows * ncols];
                        kernels::gemm_tn(rows, g.out_ch, ncols, w, go, &mut dcols);
                        col2im(&g, &dcols, &mut dx);
                    }
                    (dx, dw)
                })
                .collect();

            let dx = need.0.then(|| {
                let mut dx = Vec::with_capacity(g.batch * in_len);
                for (p, _) in &partials {
                    dx.extend_from_slice(p);
                }
                dx
            });
            let dw = need.1.then(|| {
                let mut dw = vec![T::zero(); g.out_ch * rows];
                for (_, p) in &partials {
                    let p = p.as_ref().expect("computed when needed");
                    dw.iter_mut().zip(p).for_each(|(a, &b)| *a += b);
                }
                dw
            });
            let db = need.2.then(|| {
                let mut db = vec![T::zero(); g.out_ch];
                for bi in 0..g.batch {
                    for (o, d) in db.iter_mut().enumerate() {
                        let s = bi * out_len + o * ncols;
                        *d += grad[s..s + ncols].iter().copied().sum::<T>();
                    }
                }
                db
            });
            vec![dx, dw, db]
        }),
    ))
}

/// Direct nested-loop convolution with the same semantics as [`conv2d`].
/// No gradient tracking.
pub fn conv2d_direct<T: Element>(input: &Tensor<T>, layer: &Conv2dLayer<T>) -> Result<Tensor<T>> {
    let g = layer.geometry(input)?;
    let x = input.data();
    let w = layer.weights.data();
    let b = layer.bias.data();
    let mut out = vec![T::zero(); g.batch * g.out_ch * g.out_h * g.out_w];
    for n in 0..g.batch {
        for o in 0..g.out_ch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = b[o];
                    for c in 0..g.in_ch {
                        for ki in 0..g.kh {
                            for kj in 0..g.kw {
                                let y = (oy * g.stride + ki) as isize - g.pad as isize;
                                let xx = (ox * g.stride + kj) as isize - g.pad as isize;
                                if y < 0 || xx < 0 || y >= g.height as isize || xx >= g.width as isize {
                                    continue;
                                }
                                let xv = x[((n * g.in_ch + c) * g.height + y as usize) * g.width
                                    + xx as usize];
                                let wv = w[((o * g.in_ch + c) * g.kh + ki) * g.kw + kj];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((n * g.out_ch + o) * g.out_h + oy) * g.out_w + ox] = acc;
                }
            }
        }
    }
    Tensor::new(out, &[g.batch, g.out_ch, g.out_h, g.out_w])
}
