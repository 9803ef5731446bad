use super::{ops::gemm, Tensor};
use crate::error::{Error, Result};

pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding).saturating_sub(kernel) / stride + 1
}

struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

fn geometry(x: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Geometry> {
    let (channels, height, width) = x.dims3()?;
    let (out_channels, k_channels, kh, kw) = match kernels.shape() {
        &[o, c, kh, kw] => (o, c, kh, kw),
        s => return Err(Error::shape("conv2d", format!("kernels must be rank 4, got {s:?}"))),
    };
    if k_channels != channels {
        return Err(Error::shape(
            "conv2d",
            format!("input has {channels} channels, kernels expect {k_channels}"),
        ));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(Error::shape("conv2d", format!("kernel must be square and odd, got {kh}x{kw}")));
    }
    if stride == 0 {
        return Err(Error::Invalid("conv2d stride must be positive".into()));
    }
    if height + 2 * padding < kh || width + 2 * padding < kw {
        return Err(Error::shape("conv2d", "kernel larger than padded input"));
    }
    Ok(Geometry {
        channels,
        height,
        width,
        out_channels,
        kernel: kh,
        stride,
        padding,
        out_h: conv_output_size(height, kh, stride, padding),
        out_w: conv_output_size(width, kw, stride, padding),
    })
}

/// Unfolds `x` into a `(C·k·k) × (H'·W')` patch matrix.
fn im2col(x: &[f64], g: &Geometry) -> Vec<f64> {
    let k = g.kernel;
    let cols = g.out_h * g.out_w;
    let mut out = vec![0.0; g.channels * k * k * cols];
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[oy * g.out_w + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

fn col2im(cols_data: &[f64], g: &Geometry) -> Vec<f64> {
    let k = g.kernel;
    let cols = g.out_h * g.out_w;
    let mut out = vec![0.0; g.channels * g.height * g.width];
    for c in 0..g.channels {
        let plane = &mut out[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols_data[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst_row = iy as usize * g.width;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.width as isize {
                            plane[dst_row + ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2-D cross-correlation of `x: C×H×W` with `kernels: O×C×k×k` plus an
/// optional per-output-channel bias.
pub fn conv2d(
    x: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = geometry(x, kernels, stride, padding)?;
    let spatial = g.out_h * g.out_w;
    let mut y = vec![0.0; g.out_channels * spatial];
    if let Some(b) = bias {
        if b.len() != g.out_channels {
            return Err(Error::shape("conv2d", format!("bias {:?}", b.shape())));
        }
        for (o, chunk) in y.chunks_exact_mut(spatial).enumerate() {
            chunk.fill(b.data()[o]);
        }
    }
    let cols = im2col(x.data(), &g);
    let depth = g.channels * g.kernel * g.kernel;
    gemm(g.out_channels, depth, spatial, 1.0, kernels.data(), false, &cols, false, 1.0, &mut y);
    Tensor::new(&[g.out_channels, g.out_h, g.out_w], y)
}

/// Returns `(dx, dkernels, dbias)` for [`conv2d`] given `dy: O×H'×W'`.
pub fn conv2d_backward(
    x: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = geometry(x, kernels, stride, padding)?;
    if dy.shape() != [g.out_channels, g.out_h, g.out_w] {
        return Err(Error::shape("conv2d_backward", format!("dy {:?}", dy.shape())));
    }
    let spatial = g.out_h * g.out_w;
    let depth = g.channels * g.kernel * g.kernel;
    let cols = im2col(x.data(), &g);
    let mut dk = vec![0.0; g.out_channels * depth];
    gemm(g.out_channels, spatial, depth, 1.0, dy.data(), false, &cols, true, 0.0, &mut dk);
    let mut dcols = vec![0.0; depth * spatial];
    gemm(depth, g.out_channels, spatial, 1.0, kernels.data(), true, dy.data(), false, 0.0, &mut dcols);
    let dx = col2im(&dcols, &g);
    let db: Vec<f64> = dy.data().chunks_exact(spatial).map(|c| c.iter().sum()).collect();
    Ok((
        Tensor::new(x.shape(), dx)?,
        Tensor::new(kernels.shape(), dk)?,
        Tensor::new(&[g.out_channels], db)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = Tensor::from_fn(&[2, 4, 5], |i| i as f64 * 0.5 - 3.0);
        let mut k = Tensor::zeros(&[2, 2, 1, 1]);
        k.data_mut()[0] = 1.0;
        k.data_mut()[3] = 1.0;
        let y = conv2d(&x, &k, None, 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_kernels_give_zero() {
        let x = Tensor::from_fn(&[3, 6, 6], |i| (i as f64).sin());
        let k = Tensor::zeros(&[4, 3, 3, 3]);
        let y = conv2d(&x, &k, None, 2, 1).unwrap();
        assert_eq!(y.shape(), &[4, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centered_3x3_matches_direct_sum() {
        let x = Tensor::from_fn(&[1, 3, 3], |i| i as f64);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, None, 1, 1).unwrap();
        // top-left output sums the 2x2 valid neighborhood {0,1,3,4}
        assert_eq!(y.data()[0], 8.0);
        assert_eq!(y.data()[4], 36.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = Tensor::zeros(&[2, 5, 5]);
        assert!(conv2d(&x, &Tensor::zeros(&[1, 3, 3, 3]), None, 1, 1).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[1, 2, 2, 2]), None, 1, 1).is_err());
    }
}
