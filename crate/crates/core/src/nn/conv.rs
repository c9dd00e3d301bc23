use serde::{Deserialize, Serialize};

/// `same`-padded, stride-1 2-D convolution over the full input depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn square(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kernel_h: kernel,
            kernel_w: kernel,
            in_channels,
            out_channels,
        }
    }

    /// Rows of the weight matrix: one per `(ky, kx, ci)` tap.
    #[inline]
    pub fn patch_len(&self) -> usize {
        self.kernel_h * self.kernel_w * self.in_channels
    }

    #[inline]
    pub fn weight_len(&self) -> usize {
        self.patch_len() * self.out_channels
    }

    #[inline]
    fn pad_top(&self) -> usize {
        (self.kernel_h - 1) / 2
    }

    #[inline]
    fn pad_left(&self) -> usize {
        (self.kernel_w - 1) / 2
    }
}

/// `c = alpha·a·b + beta·c` for row-major `a: m×k`, `b: k×n`, `c: m×n`, with
/// explicit strides so transposed operands need no copy.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the asserts above bound every index the strides can reach,
    // since each operand is a dense m×k / k×n / m×n block in some order.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Zero-padded patch matrix `(H·W) × (kh·kw·C)` of an `H × W × C` map.
pub(crate) fn im2col(input: &[f64], h: usize, w: usize, spec: &ConvSpec, cols: &mut Vec<f64>) {
    let c = spec.in_channels;
    let patch = spec.patch_len();
    cols.clear();
    cols.resize(h * w * patch, 0.0);
    let (pt, pl) = (spec.pad_top() as isize, spec.pad_left() as isize);
    for y in 0..h {
        for x in 0..w {
            let row = &mut cols[(y * w + x) * patch..(y * w + x + 1) * patch];
            for ky in 0..spec.kernel_h {
                let sy = y as isize + ky as isize - pt;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..spec.kernel_w {
                    let sx = x as isize + kx as isize - pl;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let src = (sy as usize * w + sx as usize) * c;
                    let dst = (ky * spec.kernel_w + kx) * c;
                    row[dst..dst + c].copy_from_slice(&input[src..src + c]);
                }
            }
        }
    }
}

/// Scatter-add of patch-matrix gradients back onto the `H × W × C` map.
pub(crate) fn col2im(cols: &[f64], h: usize, w: usize, spec: &ConvSpec, grad_in: &mut [f64]) {
    let c = spec.in_channels;
    let patch = spec.patch_len();
    grad_in.iter_mut().for_each(|g| *g = 0.0);
    let (pt, pl) = (spec.pad_top() as isize, spec.pad_left() as isize);
    for y in 0..h {
        for x in 0..w {
            let row = &cols[(y * w + x) * patch..(y * w + x + 1) * patch];
            for ky in 0..spec.kernel_h {
                let sy = y as isize + ky as isize - pt;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..spec.kernel_w {
                    let sx = x as isize + kx as isize - pl;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let dst = (sy as usize * w + sx as usize) * c;
                    let src = (ky * spec.kernel_w + kx) * c;
                    for (g, v) in grad_in[dst..dst + c].iter_mut().zip(&row[src..src + c]) {
                        *g += v;
                    }
                }
            }
        }
    }
}

/// Pre-activation output `cols · W + b`, `(H·W) × C_out`.
pub(crate) fn conv_forward(
    cols: &[f64],
    pixels: usize,
    spec: &ConvSpec,
    weight: &[f64],
    bias: &[f64],
    out: &mut Vec<f64>,
) {
    let (k, n) = (spec.patch_len(), spec.out_channels);
    out.clear();
    out.reserve(pixels * n);
    for _ in 0..pixels {
        out.extend_from_slice(bias);
    }
    gemm(
        pixels,
        k,
        n,
        cols,
        (k as isize, 1),
        weight,
        (n as isize, 1),
        1.0,
        out,
    );
}

/// Accumulates `dW += colsᵀ · dz` and `db += Σ dz`.
pub(crate) fn conv_param_grads(
    cols: &[f64],
    pixels: usize,
    spec: &ConvSpec,
    dz: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) {
    let (k, n) = (spec.patch_len(), spec.out_channels);
    gemm(
        k,
        pixels,
        n,
        cols,
        (1, k as isize),
        dz,
        (n as isize, 1),
        1.0,
        grad_w,
    );
    for px in dz.chunks_exact(n) {
        for (g, v) in grad_b.iter_mut().zip(px) {
            *g += v;
        }
    }
}

/// `dcols = dz · Wᵀ`, `(H·W) × (kh·kw·C_in)`.
pub(crate) fn conv_input_grad_cols(
    dz: &[f64],
    pixels: usize,
    spec: &ConvSpec,
    weight: &[f64],
    dcols: &mut Vec<f64>,
) {
    let (k, n) = (spec.patch_len(), spec.out_channels);
    dcols.clear();
    dcols.resize(pixels * k, 0.0);
    gemm(
        pixels,
        n,
        k,
        dz,
        (n as isize, 1),
        weight,
        (1, n as isize),
        0.0,
        dcols,
    );
}
