//! PSNR and SSIM on the luma channel.
//!
//! Luma is limited-range BT.601 on the `[0, 1]` scale:
//! `Y = 16/255 + (65.481 R + 128.553 G + 24.966 B) / 255`.
//! PSNR uses peak 1. SSIM uses an 11x11 Gaussian window (sigma 1.5) over
//! valid positions only, `K1 = 0.01`, `K2 = 0.03`, dynamic range 1.

use crate::error::{Error, Result};
use crate::tensor::{neumaier_sum, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `[H, W, 3]` RGB to `H * W` luma values, row-major.
pub fn luma(t: &Tensor) -> Result<Vec<f64>> {
    let (_, _, c) = t.dims3()?;
    if c != 3 {
        return Err(Error::shape(format!("expected 3 channels, got {c}")));
    }
    Ok(t.data()
        .chunks_exact(3)
        .map(|p| 16.0 / 255.0 + (65.481 * p[0] + 128.553 * p[1] + 24.966 * p[2]) / 255.0)
        .collect())
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    a.expect_same_shape(b, "metric")?;
    let (h, w, _) = a.dims3()?;
    Ok((h, w))
}

/// PSNR in dB over luma; `f64::INFINITY` for identical luma.
pub fn psnr_y(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_pair(a, b)?;
    let (ya, yb) = (luma(a)?, luma(b)?);
    let mse = neumaier_sum(ya.iter().zip(&yb).map(|(x, y)| (x - y) * (x - y))) / ya.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering of an `h x w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for xo in 0..ow {
            rows[y * ow + xo] = (0..n).map(|j| k[j] * x[y * w + xo + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for yo in 0..oh {
        for xo in 0..ow {
            out[yo * ow + xo] = (0..n).map(|i| k[i] * rows[(yo + i) * ow + xo]).sum();
        }
    }
    out
}

/// Mean SSIM over luma. Needs both sides of at least [`SSIM_WINDOW`].
pub fn ssim_y(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (h, w) = check_pair(a, b)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let (x, y) = (luma(a)?, luma(b)?);
    let k = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
    let mx = filter_valid(&x, h, w, &k);
    let my = filter_valid(&y, h, w, &k);
    let sxx = filter_valid(&prod(&x, &x), h, w, &k);
    let syy = filter_valid(&prod(&y, &y), h, w, &k);
    let sxy = filter_valid(&prod(&x, &y), h, w, &k);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let map = (0..mx.len()).map(|i| {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cxy = sxy[i] - ux * uy;
        ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
    });
    Ok(neumaier_sum(map) / mx.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_endpoints() {
        let black = Tensor::zeros(&[1, 1, 3]).unwrap();
        let white = Tensor::full(&[1, 1, 3], 1.0).unwrap();
        assert!((luma(&black).unwrap()[0] - 16.0 / 255.0).abs() < 1e-15);
        assert!((luma(&white).unwrap()[0] - 235.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn window_is_normalised_and_symmetric() {
        let k = gaussian_window();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(k[i], k[SSIM_WINDOW - 1 - i]);
        }
    }

    #[test]
    fn identical_images() {
        let t = Tensor::from_fn(&[16, 16, 3], |i| ((i * 37) % 101) as f64 / 100.0).unwrap();
        assert_eq!(psnr_y(&t, &t).unwrap(), f64::INFINITY);
        assert_eq!(ssim_y(&t, &t).unwrap(), 1.0);
    }

    #[test]
    fn small_images_rejected_for_ssim() {
        let t = Tensor::zeros(&[8, 16, 3]).unwrap();
        assert!(ssim_y(&t, &t).is_err());
        assert!(psnr_y(&t, &Tensor::zeros(&[8, 8, 3]).unwrap()).is_err());
    }
}
