use super::Tensor;
use crate::error::{Error, Result};

/// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers, where `op(a)`
/// is `m×k` and `op(b)` is `k×n`. A transposed operand is stored as its
/// untransposed shape (`k×m` for `a`, `n×k` for `b`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // row-major buffers whose lengths are checked in debug builds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y = x W + b` for `x: B×I`, `W: I×O`, `b: O`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, inp) = x.dims2()?;
    let (w_in, out) = w.dims2()?;
    if inp != w_in || b.len() != out {
        return Err(Error::shape(
            "linear",
            format!("x {:?}, W {:?}, b {:?}", x.shape(), w.shape(), b.shape()),
        ));
    }
    let mut y = vec![0.0; batch * out];
    for row in y.chunks_exact_mut(out) {
        row.copy_from_slice(b.data());
    }
    gemm(batch, inp, out, 1.0, x.data(), false, w.data(), false, 1.0, &mut y);
    Tensor::new(&[batch, out], y)
}

/// Returns `(dx, dW, db)` for [`linear`] given `dy: B×O`.
pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (batch, inp) = x.dims2()?;
    let (w_in, out) = w.dims2()?;
    if inp != w_in || dy.shape() != [batch, out] {
        return Err(Error::shape(
            "linear_backward",
            format!("x {:?}, W {:?}, dy {:?}", x.shape(), w.shape(), dy.shape()),
        ));
    }
    let mut dx = vec![0.0; batch * inp];
    gemm(batch, out, inp, 1.0, dy.data(), false, w.data(), true, 0.0, &mut dx);
    let mut dw = vec![0.0; inp * out];
    gemm(inp, batch, out, 1.0, x.data(), true, dy.data(), false, 0.0, &mut dw);
    let mut db = vec![0.0; out];
    for row in dy.data().chunks_exact(out) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    Ok((
        Tensor::new(&[batch, inp], dx)?,
        Tensor::new(&[inp, out], dw)?,
        Tensor::new(&[out], db)?,
    ))
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gates `dy` by `x > 0`; the gradient at exactly zero is zero.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    if x.shape() != dy.shape() {
        return Err(Error::shape("relu_backward", format!("{:?} vs {:?}", x.shape(), dy.shape())));
    }
    let mut dx = dy.clone();
    for (g, v) in dx.data_mut().iter_mut().zip(x.data()) {
        if *v <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(dx)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
    y
}

pub fn sigmoid_backward_from_output(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (g, s) in dx.data_mut().iter_mut().zip(y.data()) {
        *g *= s * (1.0 - s);
    }
    dx
}

pub fn tanh_backward_from_output(y: f64, dy: f64) -> f64 {
    dy * (1.0 - y * y)
}

const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy; predictions are clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_bce(pred, target)?;
    let n = pred.len() as f64;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / n)
}

/// Gradient of [`bce`] w.r.t. `pred`, scaled by `upstream`.
pub fn bce_backward(pred: &Tensor, target: &Tensor, upstream: f64) -> Result<Tensor> {
    check_bce(pred, target)?;
    let n = pred.len() as f64;
    let mut grad = pred.clone();
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let p = g.clamp(BCE_EPS, 1.0 - BCE_EPS);
        *g = upstream * (-t / p + (1.0 - t) / (1.0 - p)) / n;
    }
    Ok(grad)
}

fn check_bce(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("bce", format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    if pred.is_empty() {
        return Err(Error::Empty("bce"));
    }
    if let Some(t) = target.data().iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(Error::Invalid(format!("bce target {t} is not in {{0, 1}}")));
    }
    Ok(())
}

/// The four taps of a bilinear lookup on the pixel-center grid.
#[derive(Clone, Copy, Debug)]
struct Taps {
    offsets: [usize; 4],
    weights: [f64; 4],
    fx: f64,
    fy: f64,
    /// d(column coordinate)/dx, zero when the coordinate was clamped.
    du_dx: f64,
    dv_dy: f64,
}

fn axis(coord: f64, extent: usize) -> (usize, usize, f64, f64) {
    let scale = extent as f64;
    let raw = coord * scale - 0.5;
    let max = (extent - 1) as f64;
    let (u, d) = if raw < 0.0 {
        (0.0, 0.0)
    } else if raw > max {
        (max, 0.0)
    } else {
        (raw, scale)
    };
    if extent == 1 {
        return (0, 0, 0.0, 0.0);
    }
    let lo = (u.floor() as usize).min(extent - 2);
    (lo, lo + 1, u - lo as f64, d)
}

fn taps(h: usize, w: usize, x: f64, y: f64) -> Taps {
    let (c0, c1, fx, du_dx) = axis(x, w);
    let (r0, r1, fy, dv_dy) = axis(y, h);
    Taps {
        offsets: [r0 * w + c0, r0 * w + c1, r1 * w + c0, r1 * w + c1],
        weights: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        fx,
        fy,
        du_dx,
        dv_dy,
    }
}

/// Samples every channel of `f: C×H×W` at unit coordinates `(x, y)`, where
/// `(0, 0)` is the top-left corner of the map and `1` its full extent.
/// Coordinates falling outside the pixel-center hull are clamped to the border.
pub fn bilinear_sample(f: &Tensor, x: f64, y: f64) -> Result<Vec<f64>> {
    let (c, h, w) = f.dims3()?;
    if c * h * w == 0 {
        return Err(Error::Empty("bilinear_sample"));
    }
    let t = taps(h, w, x, y);
    let plane = h * w;
    Ok((0..c)
        .map(|ch| {
            let base = &f.data()[ch * plane..(ch + 1) * plane];
            t.offsets.iter().zip(&t.weights).map(|(&o, &wt)| wt * base[o]).sum()
        })
        .collect())
}

/// Scatters `dout` (one value per channel) into `df` with the bilinear weights
/// and returns the gradient w.r.t. the sampling coordinates `(x, y)`.
pub fn bilinear_sample_backward(
    f: &Tensor,
    x: f64,
    y: f64,
    dout: &[f64],
    df: &mut Tensor,
) -> Result<(f64, f64)> {
    let (c, h, w) = f.dims3()?;
    if c * h * w == 0 {
        return Err(Error::Empty("bilinear_sample_backward"));
    }
    if dout.len() != c || df.shape() != f.shape() {
        return Err(Error::shape(
            "bilinear_sample_backward",
            format!("dout {} vs {c} channels, df {:?}", dout.len(), df.shape()),
        ));
    }
    let t = taps(h, w, x, y);
    let plane = h * w;
    let (mut gx, mut gy) = (0.0, 0.0);
    let data = f.data();
    let grad = df.data_mut();
    for (ch, &g) in dout.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let base = ch * plane;
        for (&o, &wt) in t.offsets.iter().zip(&t.weights) {
            grad[base + o] += g * wt;
        }
        let [v00, v01, v10, v11] = t.offsets.map(|o| data[base + o]);
        gx += g * ((1.0 - t.fy) * (v01 - v00) + t.fy * (v11 - v10)) * t.du_dx;
        gy += g * ((1.0 - t.fx) * (v10 - v00) + t.fx * (v11 - v01)) * t.dv_dy;
    }
    Ok((gx, gy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn linear_identity_and_bias() {
        let x = t(&[1, 2], &[1.0, 2.0]);
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let zero_b = t(&[2], &[0.0, 0.0]);
        assert_eq!(linear(&x, &eye, &zero_b).unwrap().data(), &[1.0, 2.0]);
        let zero_w = Tensor::zeros(&[2, 2]);
        let b = t(&[2], &[3.0, 4.0]);
        assert_eq!(linear(&x, &zero_w, &b).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn linear_rejects_mismatch() {
        let x = Tensor::zeros(&[1, 3]);
        let w = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[2]);
        assert!(matches!(linear(&x, &w, &b), Err(Error::Shape { .. })));
    }

    #[test]
    fn relu_values_and_gate() {
        let x = t(&[3], &[-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let dx = relu_backward(&x, &Tensor::full(&[3], 1.0)).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 1.0]);
        let neg = t(&[2], &[-3.0, -0.5]);
        assert_eq!(relu(&neg).data(), &[0.0, 0.0]);
        assert_eq!(relu_backward(&neg, &Tensor::full(&[2], 5.0)).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn bce_known_values() {
        let ones = Tensor::full(&[4], 1.0);
        assert!(bce(&ones, &ones).unwrap() < 1e-6);
        let half = Tensor::full(&[4], 0.5);
        let target = t(&[4], &[0.0, 1.0, 1.0, 0.0]);
        assert!((bce(&half, &target).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let bad = t(&[4], &[0.0, 0.5, 1.0, 0.0]);
        assert!(matches!(bce(&half, &bad), Err(Error::Invalid(_))));
    }

    #[test]
    fn bilinear_pixel_center_and_midpoint() {
        let f = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        // pixel (r=1, c=0) center is at (0.25, 0.75)
        assert_eq!(bilinear_sample(&f, 0.25, 0.75).unwrap(), vec![3.0]);
        assert_eq!(bilinear_sample(&f, 0.5, 0.5).unwrap(), vec![2.5]);
        // clamped outside
        assert_eq!(bilinear_sample(&f, -1.0, -1.0).unwrap(), vec![1.0]);
        assert_eq!(bilinear_sample(&f, 2.0, 2.0).unwrap(), vec![4.0]);
    }

    #[test]
    fn bilinear_empty_map_errors() {
        let f = Tensor::zeros(&[0, 2, 2]);
        assert!(matches!(bilinear_sample(&f, 0.5, 0.5), Err(Error::Empty(_))));
    }

    #[test]
    fn bilinear_reconstructs_affine_maps() {
        let (h, w) = (7, 9);
        let f = Tensor::from_fn(&[1, h, w], |i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            0.3 + 1.7 * (c + 0.5) / w as f64 - 2.2 * (r + 0.5) / h as f64
        });
        for &(x, y) in &[(0.1, 0.2), (0.5, 0.5), (0.9, 0.13), (0.33, 0.87)] {
            let v = bilinear_sample(&f, x, y).unwrap()[0];
            assert!((v - (0.3 + 1.7 * x - 2.2 * y)).abs() < 1e-12);
        }
    }
}
