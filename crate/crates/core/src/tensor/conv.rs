use super::ops::Op;
use super::Tensor;
use crate::error::{AceError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `k / 2` on every side; output keeps the input's spatial size.
    Same,
}

/// Cross-correlation of a `C_in×H×W` input with `C_out×C_in×k×k` kernels.
pub fn conv2d(input: &Tensor, kernels: &Tensor, padding: Padding) -> Result<Tensor> {
    let Padding::Same = padding;
    let dims = Conv2dDims::infer(input.shape(), kernels.shape())?;
    let out = {
        let x = input.data();
        let w = kernels.data();
        conv2d_forward(&x, &w, &dims)
    };
    Ok(Tensor::from_op(
        vec![dims.c_out, dims.h, dims.w],
        out,
        Op::Conv2d,
        vec![input.clone(), kernels.clone()],
    ))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv2dDims {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl Conv2dDims {
    pub(crate) fn infer(input: &[usize], kernels: &[usize]) -> Result<Self> {
        if input.len() != 3 || kernels.len() != 4 {
            return Err(AceError::ShapeMismatch {
                op: "conv2d",
                left: input.to_vec(),
                right: kernels.to_vec(),
            });
        }
        let (c_out, c_in, kh, kw) = (kernels[0], kernels[1], kernels[2], kernels[3]);
        if kh != kw || kh % 2 == 0 {
            return Err(AceError::InvalidShape {
                shape: kernels.to_vec(),
                reason: "kernel must be square with odd size".into(),
            });
        }
        if c_in != input[0] {
            return Err(AceError::ShapeMismatch {
                op: "conv2d channels",
                left: input.to_vec(),
                right: kernels.to_vec(),
            });
        }
        Ok(Self {
            c_in,
            c_out,
            h: input[1],
            w: input[2],
            k: kh,
        })
    }

    /// Valid output range along one axis for kernel offset `u`.
    #[inline]
    fn range(&self, u: usize, len: usize) -> (usize, usize) {
        let p = self.k / 2;
        let lo = p.saturating_sub(u);
        let hi = (len + p).saturating_sub(u).min(len);
        (lo, hi)
    }
}

pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], d: &Conv2dDims) -> Vec<f64> {
    let (h, wd, k) = (d.h, d.w, d.k);
    let p = k / 2;
    let mut out = vec![0.0; d.c_out * h * wd];
    for o in 0..d.c_out {
        for c in 0..d.c_in {
            let xc = &x[c * h * wd..(c + 1) * h * wd];
            for u in 0..k {
                let (i0, i1) = d.range(u, h);
                for v in 0..k {
                    let weight = w[((o * d.c_in + c) * k + u) * k + v];
                    if weight == 0.0 {
                        continue;
                    }
                    let (j0, j1) = d.range(v, wd);
                    for i in i0..i1 {
                        let src = (i + u - p) * wd;
                        let dst = (o * h + i) * wd;
                        for j in j0..j1 {
                            out[dst + j] += weight * xc[src + j + v - p];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(grad_input, grad_kernels)` for an upstream gradient `g`.
pub(crate) fn conv2d_backward(x: &[f64], w: &[f64], g: &[f64], d: &Conv2dDims) -> (Vec<f64>, Vec<f64>) {
    let (h, wd, k) = (d.h, d.w, d.k);
    let p = k / 2;
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    for o in 0..d.c_out {
        for c in 0..d.c_in {
            let xc = &x[c * h * wd..(c + 1) * h * wd];
            for u in 0..k {
                let (i0, i1) = d.range(u, h);
                for v in 0..k {
                    let widx = ((o * d.c_in + c) * k + u) * k + v;
                    let weight = w[widx];
                    let (j0, j1) = d.range(v, wd);
                    let mut acc = 0.0;
                    for i in i0..i1 {
                        let src = (i + u - p) * wd;
                        let dst = (o * h + i) * wd;
                        for j in j0..j1 {
                            let go = g[dst + j];
                            acc += go * xc[src + j + v - p];
                            gx[c * h * wd + src + j + v - p] += go * weight;
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    (gx, gw)
}
