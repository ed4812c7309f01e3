//! 8-bit RGB PNG in and out, plus the reflection padding that lets any
//! image size through the power-of-two transforms.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reads a PNG as `[H, W, 3]` with values `byte / 255`. Grayscale and alpha
/// images are converted to RGB.
pub fn load_png(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.into(),
            source,
        })?
        .to_rgb8();
    from_rgb8(&img)
}

pub fn from_rgb8(img: &RgbImage) -> Result<Tensor> {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor::new(&[h as usize, w as usize, 3], data)
}

/// Clamps to `[0, 1]` and rounds to the nearest byte.
pub fn to_rgb8(t: &Tensor) -> Result<RgbImage> {
    let (h, w, c) = t.dims3()?;
    if c != 3 {
        return Err(Error::shape(format!("expected 3 channels, got {c}")));
    }
    let bytes = t
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img: Option<RgbImage> = ImageBuffer::<Rgb<u8>, Vec<u8>>::from_raw(w as u32, h as u32, bytes);
    img.ok_or_else(|| Error::shape("image buffer size mismatch"))
}

pub fn save_png(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    to_rgb8(t)?.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Reflection-pads `[H, W, C]` at the bottom and right to `[th, tw, C]`.
pub fn reflect_pad(t: &Tensor, th: usize, tw: usize) -> Result<Tensor> {
    let (h, w, c) = t.dims3()?;
    if th < h || tw < w {
        return Err(Error::shape(format!("cannot pad {h}x{w} down to {th}x{tw}")));
    }
    let src = t.data();
    let mut out = Vec::with_capacity(th * tw * c);
    for y in 0..th {
        let sy = reflect(y as isize, h);
        for x in 0..tw {
            let sx = reflect(x as isize, w);
            let base = (sy * w + sx) * c;
            out.extend_from_slice(&src[base..base + c]);
        }
    }
    Tensor::new(&[th, tw, c], out)
}

/// Top-left `[h, w, C]` window.
pub fn crop(t: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (th, tw, c) = t.dims3()?;
    if h > th || w > tw || h == 0 || w == 0 {
        return Err(Error::shape(format!("cannot crop {th}x{tw} to {h}x{w}")));
    }
    let src = t.data();
    let mut out = Vec::with_capacity(h * w * c);
    for y in 0..h {
        out.extend_from_slice(&src[y * tw * c..(y * tw + w) * c]);
    }
    Tensor::new(&[h, w, c], out)
}

/// Padded extent for a side of `n`: the next power of two, at least `min`.
pub fn padded_side(n: usize, min: usize) -> usize {
    n.max(min).next_power_of_two()
}

/// Reflection-pads to power-of-two sides of at least `min`; returns the
/// padded image and the original `(H, W)`.
pub fn pad_pow2(t: &Tensor, min: usize) -> Result<(Tensor, (usize, usize))> {
    let (h, w, _) = t.dims3()?;
    let p = reflect_pad(t, padded_side(h, min), padded_side(w, min))?;
    Ok((p, (h, w)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect(5, 1), 0);
    }

    #[test]
    fn pad_then_crop_restores() {
        let t = Tensor::from_fn(&[17, 23, 3], |i| (i % 251) as f64 / 251.0).unwrap();
        let (p, (h, w)) = pad_pow2(&t, 8).unwrap();
        assert_eq!(p.shape(), &[32, 32, 3]);
        assert_eq!(crop(&p, h, w).unwrap(), t);
        assert_eq!(p.at3(17, 0, 0), t.at3(15, 0, 0));
        assert_eq!(p.at3(0, 23, 2), t.at3(0, 21, 2));
    }

    #[test]
    fn small_sides_meet_minimum() {
        assert_eq!(padded_side(3, 8), 8);
        assert_eq!(padded_side(16, 8), 16);
        assert_eq!(padded_side(17, 8), 32);
        let t = Tensor::full(&[1, 2, 3], 0.25).unwrap();
        let (p, _) = pad_pow2(&t, 4).unwrap();
        assert_eq!(p.shape(), &[4, 4, 3]);
        assert!(p.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn byte_roundtrip() {
        let t = Tensor::from_fn(&[4, 5, 3], |i| (i * 7 % 256) as f64 / 255.0).unwrap();
        assert_eq!(from_rgb8(&to_rgb8(&t).unwrap()).unwrap(), t);
    }
}
