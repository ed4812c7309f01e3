//! Forward kernels for the differentiable operation set, plus the
//! vector-Jacobian products the tape in [`crate::autodiff`] calls.
//!
//! Feature maps are `[H, W, C]`, sequences `[L, C]`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `k / 2` on every side.
    Same,
    Valid,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu_scalar(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn softplus_scalar(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn silu(x: &Tensor) -> Tensor {
    x.map(silu_scalar)
}

pub fn softplus(x: &Tensor) -> Tensor {
    x.map(softplus_scalar)
}

pub(crate) fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

struct ConvGeometry {
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

fn conv_geometry(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, padding: Padding) -> Result<ConvGeometry> {
    let (h, wd, cin) = x.dims3()?;
    let [k, k2, wcin, cout] = w.shape()[..] else {
        return Err(Error::shape(format!(
            "conv2d weight must be [k, k, Cin, Cout], got {:?}",
            w.shape()
        )));
    };
    if k != k2 {
        return Err(Error::shape(format!("conv2d kernel must be square, got {k}x{k2}")));
    }
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv2d input has {cin} channels but the weight expects {wcin}"
        )));
    }
    if b.shape() != [cout] {
        return Err(Error::shape(format!(
            "conv2d bias must be [{cout}], got {:?}",
            b.shape()
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("conv2d stride must be positive"));
    }
    if padding == Padding::Same && k % 2 == 0 {
        return Err(Error::invalid(format!("same padding needs an odd kernel, got {k}")));
    }
    if h < k || wd < k {
        return Err(Error::shape(format!(
            "conv2d input {h}x{wd} is smaller than the {k}x{k} kernel"
        )));
    }
    let pad = if padding == Padding::Same { k / 2 } else { 0 };
    Ok(ConvGeometry {
        h,
        w: wd,
        cin,
        cout,
        k,
        stride,
        pad,
        oh: (h + 2 * pad - k) / stride + 1,
        ow: (wd + 2 * pad - k) / stride + 1,
    })
}

/// 2D cross-correlation, `x: [H, W, Cin]`, `w: [k, k, Cin, Cout]`, `b: [Cout]`.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, padding: Padding) -> Result<Tensor> {
    let g = conv_geometry(x, w, b, stride, padding)?;
    let (xd, wd) = (x.data(), w.data());
    let mut out = Vec::with_capacity(g.oh * g.ow * g.cout);
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let start = out.len();
            out.extend_from_slice(b.data());
            let acc = &mut out[start..];
            for ky in 0..g.k {
                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                for kx in 0..g.k {
                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                    if ix < 0 || ix >= g.w as isize {
                        continue;
                    }
                    let xrow = &xd[(iy as usize * g.w + ix as usize) * g.cin..][..g.cin];
                    let wbase = (ky * g.k + kx) * g.cin * g.cout;
                    for (ci, &xv) in xrow.iter().enumerate() {
                        let wrow = &wd[wbase + ci * g.cout..][..g.cout];
                        for (a, &wv) in acc.iter_mut().zip(wrow) {
                            *a += xv * wv;
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![g.oh, g.ow, g.cout], out))
}

/// Gradients of [`conv2d`] with respect to `(x, w, b)`.
pub(crate) fn conv2d_vjp(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    padding: Padding,
    grad: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let g = conv_geometry(x, w, b, stride, padding).expect("validated on the forward pass");
    let (xd, wd, gd) = (x.data(), w.data(), grad.data());
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; g.cout];
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let grow = &gd[(oy * g.ow + ox) * g.cout..][..g.cout];
            for (a, &v) in gb.iter_mut().zip(grow) {
                *a += v;
            }
            for ky in 0..g.k {
                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                for kx in 0..g.k {
                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                    if ix < 0 || ix >= g.w as isize {
                        continue;
                    }
                    let xoff = (iy as usize * g.w + ix as usize) * g.cin;
                    let wbase = (ky * g.k + kx) * g.cin * g.cout;
                    for ci in 0..g.cin {
                        let woff = wbase + ci * g.cout;
                        let wrow = &wd[woff..][..g.cout];
                        let mut s = 0.0;
                        for (&wv, &gv) in wrow.iter().zip(grow) {
                            s += wv * gv;
                        }
                        gx[xoff + ci] += s;
                        let xv = xd[xoff + ci];
                        for (a, &gv) in gw[woff..][..g.cout].iter_mut().zip(grow) {
                            *a += xv * gv;
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::from_parts_unchecked(x.shape().to_vec(), gx),
        Tensor::from_parts_unchecked(w.shape().to_vec(), gw),
        Tensor::from_parts_unchecked(vec![g.cout], gb),
    )
}

fn dwconv_dims(seq: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    let (l, c) = seq.dims2()?;
    let (k, wc) = w.dims2()?;
    if k == 0 {
        return Err(Error::invalid("dwconv1d kernel length must be positive"));
    }
    if wc != c || b.shape() != [c] {
        return Err(Error::shape(format!(
            "dwconv1d over {c} channels got weight {:?} and bias {:?}",
            w.shape(),
            b.shape()
        )));
    }
    Ok((l, c, k))
}

/// Causal depthwise 1D convolution: `y[t] = b + sum_j w[j] * x[t - (k-1) + j]`.
pub fn dwconv1d(seq: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (l, c, k) = dwconv_dims(seq, w, b)?;
    let (xd, wd) = (seq.data(), w.data());
    let mut out = Vec::with_capacity(l * c);
    for t in 0..l {
        for ch in 0..c {
            let mut acc = b.data()[ch];
            for j in 0..k {
                let src = t as isize - (k - 1) as isize + j as isize;
                if src >= 0 {
                    acc += wd[j * c + ch] * xd[src as usize * c + ch];
                }
            }
            out.push(acc);
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![l, c], out))
}

pub(crate) fn dwconv1d_vjp(seq: &Tensor, w: &Tensor, grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (l, c) = (seq.shape()[0], seq.shape()[1]);
    let k = w.shape()[0];
    let (xd, wd, gd) = (seq.data(), w.data(), grad.data());
    let mut gx = vec![0.0; l * c];
    let mut gw = vec![0.0; k * c];
    let mut gb = vec![0.0; c];
    for t in 0..l {
        for ch in 0..c {
            let g = gd[t * c + ch];
            gb[ch] += g;
            for j in 0..k {
                let src = t as isize - (k - 1) as isize + j as isize;
                if src >= 0 {
                    let s = src as usize * c + ch;
                    gx[s] += wd[j * c + ch] * g;
                    gw[j * c + ch] += xd[s] * g;
                }
            }
        }
    }
    (
        Tensor::from_parts_unchecked(vec![l, c], gx),
        Tensor::from_parts_unchecked(vec![k, c], gw),
        Tensor::from_parts_unchecked(vec![c], gb),
    )
}

/// `x: [L, K]`, `w: [M, K]`, optional `b: [M]` -> `[L, M]`.
pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let (l, k) = x.dims2()?;
    let (m, wk) = w.dims2()?;
    if wk != k {
        return Err(Error::shape(format!("linear: input width {k}, weight {:?}", w.shape())));
    }
    if let Some(b) = b {
        if b.shape() != [m] {
            return Err(Error::shape(format!("linear: bias must be [{m}], got {:?}", b.shape())));
        }
    }
    let mut out = Vec::with_capacity(l * m);
    for row in x.data().chunks_exact(k) {
        for (j, wrow) in w.data().chunks_exact(k).enumerate() {
            let mut s = b.map_or(0.0, |b| b.data()[j]);
            for (a, bb) in row.iter().zip(wrow) {
                s += a * bb;
            }
            out.push(s);
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![l, m], out))
}

pub(crate) fn linear_vjp(x: &Tensor, w: &Tensor, grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (l, k) = (x.shape()[0], x.shape()[1]);
    let m = w.shape()[0];
    let mut gx = vec![0.0; l * k];
    let mut gw = vec![0.0; m * k];
    let mut gb = vec![0.0; m];
    for t in 0..l {
        let xrow = &x.data()[t * k..][..k];
        let gxrow = &mut gx[t * k..][..k];
        for j in 0..m {
            let g = grad.data()[t * m + j];
            if g == 0.0 {
                continue;
            }
            gb[j] += g;
            let wrow = &w.data()[j * k..][..k];
            let gwrow = &mut gw[j * k..][..k];
            for i in 0..k {
                gxrow[i] += g * wrow[i];
                gwrow[i] += g * xrow[i];
            }
        }
    }
    (
        Tensor::from_parts_unchecked(vec![l, k], gx),
        Tensor::from_parts_unchecked(vec![m, k], gw),
        Tensor::from_parts_unchecked(vec![m], gb),
    )
}

/// LayerNorm over the last axis with a per-feature affine.
pub fn layernorm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    if eps <= 0.0 {
        return Err(Error::invalid("layernorm eps must be positive"));
    }
    let c = *x.shape().last().unwrap();
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(format!(
            "layernorm over {c} features got gamma {:?}, beta {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(c) {
        let (mean, inv) = row_stats(row, eps);
        for (i, &v) in row.iter().enumerate() {
            out.push(gamma.data()[i] * (v - mean) * inv + beta.data()[i]);
        }
    }
    Ok(Tensor::from_parts_unchecked(x.shape().to_vec(), out))
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

pub(crate) fn layernorm_vjp(x: &Tensor, gamma: &Tensor, eps: f64, grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let c = gamma.len();
    let mut gx = Vec::with_capacity(x.len());
    let mut gg = vec![0.0; c];
    let mut gbeta = vec![0.0; c];
    let mut xhat = vec![0.0; c];
    let mut gh = vec![0.0; c];
    for (row, grow) in x.data().chunks_exact(c).zip(grad.data().chunks_exact(c)) {
        let (mean, inv) = row_stats(row, eps);
        for i in 0..c {
            xhat[i] = (row[i] - mean) * inv;
            gg[i] += grow[i] * xhat[i];
            gbeta[i] += grow[i];
            gh[i] = grow[i] * gamma.data()[i];
        }
        let mg = gh.iter().sum::<f64>() / c as f64;
        let mgx = gh.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / c as f64;
        for i in 0..c {
            gx.push(inv * (gh[i] - mg - xhat[i] * mgx));
        }
    }
    (
        Tensor::from_parts_unchecked(x.shape().to_vec(), gx),
        Tensor::from_parts_unchecked(vec![c], gg),
        Tensor::from_parts_unchecked(vec![c], gbeta),
    )
}

/// Compensated mean over the spatial axes: `[H, W, C] -> [1, 1, C]`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    let n = (h * w) as f64;
    let out = (0..c)
        .map(|ch| crate::tensor::neumaier_sum(x.data().iter().skip(ch).step_by(c).copied()) / n)
        .collect();
    Ok(Tensor::from_parts_unchecked(vec![1, 1, c], out))
}

/// Concatenates along `axis`; all other extents must agree.
pub fn concat(xs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = xs.first().ok_or_else(|| Error::invalid("concat of nothing"))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::invalid(format!(
            "concat axis {axis} out of range for rank {rank}"
        )));
    }
    for x in xs {
        let ok = x.rank() == rank
            && x.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(Error::shape(format!(
                "concat along {axis}: {:?} vs {:?}",
                first.shape(),
                x.shape()
            )));
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let mut shape = first.shape().to_vec();
    shape[axis] = xs.iter().map(|x| x.shape()[axis]).sum();
    let mut out = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for x in xs {
            let chunk = x.shape()[axis] * inner;
            out.extend_from_slice(&x.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    Ok(Tensor::from_parts_unchecked(shape, out))
}

pub(crate) fn concat_vjp(shapes: &[Vec<usize>], axis: usize, grad: &Tensor) -> Vec<Tensor> {
    let outer: usize = shapes[0][..axis].iter().product();
    let inner: usize = shapes[0][axis + 1..].iter().product();
    let mut outs: Vec<Vec<f64>> = shapes.iter().map(|s| Vec::with_capacity(s.iter().product())).collect();
    let mut pos = 0;
    for _ in 0..outer {
        for (s, o) in shapes.iter().zip(outs.iter_mut()) {
            let chunk = s[axis] * inner;
            o.extend_from_slice(&grad.data()[pos..pos + chunk]);
            pos += chunk;
        }
    }
    outs.into_iter()
        .zip(shapes)
        .map(|(d, s)| Tensor::from_parts_unchecked(s.clone(), d))
        .collect()
}

/// Nearest-neighbour 2x upsampling of `[H, W, C]`.
pub fn upsample_nearest2x(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    let mut out = Vec::with_capacity(4 * x.len());
    for y in 0..2 * h {
        for xx in 0..2 * w {
            out.extend_from_slice(&x.data()[((y / 2) * w + xx / 2) * c..][..c]);
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![2 * h, 2 * w, c], out))
}

pub(crate) fn upsample_nearest2x_vjp(shape: &[usize], grad: &Tensor) -> Tensor {
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let mut g = vec![0.0; h * w * c];
    for y in 0..2 * h {
        for xx in 0..2 * w {
            let src = &grad.data()[(y * 2 * w + xx) * c..][..c];
            for (a, b) in g[((y / 2) * w + xx / 2) * c..][..c].iter_mut().zip(src) {
                *a += b;
            }
        }
    }
    Tensor::from_parts_unchecked(shape.to_vec(), g)
}

/// Multiplies every pixel of `x: [H, W, C]` by `s: [1, 1, C]`.
pub fn scale_channels(x: &Tensor, s: &Tensor) -> Result<Tensor> {
    let (_, _, c) = x.dims3()?;
    if s.shape() != [1, 1, c] {
        return Err(Error::shape(format!(
            "channel scale must be [1, 1, {c}], got {:?}",
            s.shape()
        )));
    }
    let mut out = x.data().to_vec();
    for px in out.chunks_exact_mut(c) {
        for (v, k) in px.iter_mut().zip(s.data()) {
            *v *= k;
        }
    }
    Ok(Tensor::from_parts_unchecked(x.shape().to_vec(), out))
}
