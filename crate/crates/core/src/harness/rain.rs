//! Synthetic rain: procedural clean images and anti-aliased streaks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Streak distribution. Ranges are `[lo, hi]` and may be degenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RainParams {
    pub count: usize,
    /// Degrees from horizontal.
    pub angle: [f64; 2],
    /// Pixels.
    pub length: [f64; 2],
    /// Full width of the solid core in pixels; the edge fades over one pixel.
    pub width: f64,
    pub intensity: [f64; 2],
}

impl Default for RainParams {
    fn default() -> Self {
        Self {
            count: 14,
            angle: [70.0, 110.0],
            length: [6.0, 16.0],
            width: 1.0,
            intensity: [0.25, 0.6],
        }
    }
}

impl RainParams {
    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, r: [f64; 2]| {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(Error::Config(format!(
                    "rain.{name} must be a finite range [lo, hi], got {r:?}"
                )));
            }
            Ok(())
        };
        range("angle", self.angle)?;
        range("length", self.length)?;
        range("intensity", self.intensity)?;
        if self.length[0] < 0.0 || self.intensity[0] < 0.0 {
            return Err(Error::Config(
                "rain.length and rain.intensity must be non-negative".into(),
            ));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::Config(format!(
                "rain.width must be positive, got {}",
                self.width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RainPair {
    pub rainy: Tensor,
    pub clean: Tensor,
    pub seed: u64,
}

fn draw(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    r[0] + (r[1] - r[0]) * rng.random::<f64>()
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - qx).powi(2) + (py - qy).powi(2)).sqrt()
}

/// The `[H, W]` streak layer. Overlapping streaks combine by maximum, so the
/// layer never exceeds the largest drawn intensity.
pub fn streak_layer(h: usize, w: usize, params: &RainParams, rng: &mut impl Rng) -> Result<Vec<f64>> {
    params.validate()?;
    let mut layer = vec![0.0f64; h * w];
    let half = params.width / 2.0;
    for _ in 0..params.count {
        let cx = rng.random::<f64>() * w as f64;
        let cy = rng.random::<f64>() * h as f64;
        let theta = draw(rng, params.angle).to_radians();
        let len = draw(rng, params.length);
        let amp = draw(rng, params.intensity);
        // Image rows grow downwards.
        let (ux, uy) = (theta.cos() * len / 2.0, -theta.sin() * len / 2.0);
        let (a, b) = ((cx - ux, cy - uy), (cx + ux, cy + uy));
        let reach = half + 1.0;
        let x0 = (a.0.min(b.0) - reach).floor().max(0.0) as usize;
        let x1 = ((a.0.max(b.0) + reach).ceil().max(0.0) as usize).min(w);
        let y0 = (a.1.min(b.1) - reach).floor().max(0.0) as usize;
        let y1 = ((a.1.max(b.1) + reach).ceil().max(0.0) as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let d = segment_distance(x as f64 + 0.5, y as f64 + 0.5, a, b);
                let cover = (half + 0.5 - d).clamp(0.0, 1.0);
                let v = amp * cover;
                let cell = &mut layer[y * w + x];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
    Ok(layer)
}

/// Adds a white streak layer drawn from `rng` and clamps to `[0, 1]`.
pub fn add_rain(clean: &Tensor, params: &RainParams, rng: &mut impl Rng) -> Result<Tensor> {
    let (h, w, c) = clean.dims3()?;
    if h < 2 || w < 2 || c != 3 {
        return Err(Error::shape(format!(
            "rain needs an RGB image of at least 2x2, got {:?}",
            clean.shape()
        )));
    }
    let layer = streak_layer(h, w, params, rng)?;
    let data = clean
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v + layer[i / c]).clamp(0.0, 1.0))
        .collect();
    Tensor::new(clean.shape(), data)
}

pub fn synth_rain(clean: &Tensor, seed: u64, params: &RainParams) -> Result<RainPair> {
    let rainy = add_rain(clean, params, &mut rng::seeded(seed))?;
    Ok(RainPair {
        rainy,
        clean: clean.clone(),
        seed,
    })
}

/// A smooth synthetic scene in `[0, 0.9]`: a two-colour vertical gradient,
/// a few flat rectangles, soft blobs and a faint grating.
pub fn clean_image(h: usize, w: usize, rng: &mut impl Rng) -> Result<Tensor> {
    let mut colour = |lo: f64, hi: f64| -> [f64; 3] { [0, 1, 2].map(|_| lo + (hi - lo) * rng.random::<f64>()) };
    let top = colour(0.1, 0.7);
    let bottom = colour(0.1, 0.7);
    let mut img = vec![0.0f64; h * w * 3];
    for y in 0..h {
        let t = y as f64 / (h.max(2) - 1) as f64;
        for x in 0..w {
            for ch in 0..3 {
                img[(y * w + x) * 3 + ch] = top[ch] * (1.0 - t) + bottom[ch] * t;
            }
        }
    }
    let rects = rng.random_range(1..=3);
    for _ in 0..rects {
        let c = [0, 1, 2].map(|_| 0.05 + 0.8 * rng.random::<f64>());
        let (ry0, rx0) = (rng.random_range(0..h), rng.random_range(0..w));
        let (rh, rw) = (rng.random_range(1..=h / 2 + 1), rng.random_range(1..=w / 2 + 1));
        for y in ry0..(ry0 + rh).min(h) {
            for x in rx0..(rx0 + rw).min(w) {
                img[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&c);
            }
        }
    }
    let blobs = rng.random_range(1..=2);
    for _ in 0..blobs {
        let c = [0, 1, 2].map(|_| rng.random::<f64>() * 0.4 - 0.2);
        let (by, bx) = (rng.random::<f64>() * h as f64, rng.random::<f64>() * w as f64);
        let s = (0.1 + 0.2 * rng.random::<f64>()) * h.min(w) as f64;
        for y in 0..h {
            for x in 0..w {
                let r2 = (y as f64 - by).powi(2) + (x as f64 - bx).powi(2);
                let g = (-r2 / (2.0 * s * s)).exp();
                for ch in 0..3 {
                    img[(y * w + x) * 3 + ch] += c[ch] * g;
                }
            }
        }
    }
    let (fy, fx) = (rng.random::<f64>() * 0.6, rng.random::<f64>() * 0.6);
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    for y in 0..h {
        for x in 0..w {
            let v = 0.04 * (fy * y as f64 + fx * x as f64 + phase).sin();
            for ch in 0..3 {
                let p = &mut img[(y * w + x) * 3 + ch];
                *p = (*p + v).clamp(0.0, 0.9);
            }
        }
    }
    Tensor::new(&[h, w, 3], img)
}

/// Pair `index` of the synthetic set for `seed`: the clean scene comes from
/// stream `2 * index` and the streaks from stream `2 * index + 1`.
pub fn synth_pair(seed: u64, index: u64, h: usize, w: usize, params: &RainParams) -> Result<RainPair> {
    let clean = clean_image(h, w, &mut rng::stream(seed, 2 * index))?;
    let rainy = add_rain(&clean, params, &mut rng::stream(seed, 2 * index + 1))?;
    Ok(RainPair { rainy, clean, seed })
}
