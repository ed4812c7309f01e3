//! Spatial and channel-axis discrete Fourier transforms.
//!
//! The 2D transform is unitary (`1/sqrt(HW)` both ways) and runs per channel
//! of an `[H, W, C]` tensor. The channel-axis transform scales by `1/C` on
//! the forward pass and by 1 on the inverse. Both are built on an iterative
//! radix-2 kernel, so every transformed extent must be a power of two.
//!
//! Frequencies are stored uncentered (DC at index 0) unless a
//! [`ComplexSpectrum`] says otherwise. Centered coordinates `(u, v)` range over
//! `[-H/2, H/2) x [-W/2, W/2)` and map to array index `(u mod H, v mod W)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

pub(crate) fn require_pow2(axis: &'static str, extent: usize) -> Result<()> {
    if is_power_of_two(extent) {
        Ok(())
    } else {
        Err(Error::NotPowerOfTwo {
            axis,
            extent,
            suggested: extent.next_power_of_two(),
        })
    }
}

/// In-place unnormalized radix-2 DFT. `inverse` flips the exponent sign.
pub(crate) fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(is_power_of_two(n));
    if n == 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let twiddles: Vec<Complex64> = (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
        .collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let t = twiddles[k * stride] * buf[start + k + half];
                let a = buf[start + k];
                buf[start + k] = a + t;
                buf[start + k + half] = a - t;
            }
        }
        len <<= 1;
    }
}

/// Unitary 2D transform of one `H x W` complex plane stored row-major.
fn fft2_plane(plane: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    for row in plane.chunks_mut(w) {
        fft_in_place(row, inverse);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = plane[y * w + x];
        }
        fft_in_place(&mut col, inverse);
        for y in 0..h {
            plane[y * w + x] = col[y];
        }
    }
    let norm = 1.0 / ((h * w) as f64).sqrt();
    for z in plane.iter_mut() {
        *z *= norm;
    }
}

fn self_conjugate_indices(h: usize, w: usize) -> [(usize, usize); 4] {
    [(0, 0), (0, w / 2), (h / 2, 0), (h / 2, w / 2)]
}

/// Per-channel complex spectrum of an `[H, W, C]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub re: Tensor,
    pub im: Tensor,
    /// DC sits at `(H/2, W/2)` when true, at `(0, 0)` when false.
    pub centered: bool,
}

impl ComplexSpectrum {
    pub fn new(re: Tensor, im: Tensor, centered: bool) -> Result<Self> {
        re.expect_same_shape(&im, "spectrum planes")?;
        re.dims3()?;
        Ok(Self { re, im, centered })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.re.shape();
        (s[0], s[1], s[2])
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> Complex64 {
        Complex64::new(self.re.at3(row, col, ch), self.im.at3(row, col, ch))
    }

    /// Value at centered frequency `(u, v)`, whatever the storage layout.
    pub fn at_frequency(&self, u: i64, v: i64, ch: usize) -> Complex64 {
        let (h, w, _) = self.dims();
        let (mut r, mut c) = centered_to_index(u, v, h, w);
        if self.centered {
            r = (r + h / 2) % h;
            c = (c + w / 2) % w;
        }
        self.get(r, c, ch)
    }

    fn shifted(&self, centered: bool) -> Self {
        if centered == self.centered {
            return self.clone();
        }
        let (h, w, c) = self.dims();
        let shift = |t: &Tensor| {
            let mut out = vec![0.0; t.len()];
            for y in 0..h {
                for x in 0..w {
                    let (ny, nx) = ((y + h / 2) % h, (x + w / 2) % w);
                    for k in 0..c {
                        out[(ny * w + nx) * c + k] = t.data()[(y * w + x) * c + k];
                    }
                }
            }
            Tensor::from_parts_unchecked(t.shape().to_vec(), out)
        };
        Self {
            re: shift(&self.re),
            im: shift(&self.im),
            centered,
        }
    }

    /// fftshift: move DC to the plane center.
    pub fn to_centered(&self) -> Self {
        self.shifted(true)
    }

    pub fn to_uncentered(&self) -> Self {
        self.shifted(false)
    }

    /// `[H, W, C, 2]` tensor holding `(re, im)` pairs, uncentered.
    pub fn to_interleaved(&self) -> Tensor {
        let s = self.to_uncentered();
        let (h, w, c) = s.dims();
        let mut data = Vec::with_capacity(2 * h * w * c);
        for (r, i) in s.re.data().iter().zip(s.im.data()) {
            data.push(*r);
            data.push(*i);
        }
        Tensor::from_parts_unchecked(vec![h, w, c, 2], data)
    }

    pub fn from_interleaved(t: &Tensor) -> Result<Self> {
        let [h, w, c, 2] = t.shape()[..] else {
            return Err(Error::shape(format!("expected [H, W, C, 2], got {:?}", t.shape())));
        };
        let re = t.data().iter().step_by(2).copied().collect();
        let im = t.data().iter().skip(1).step_by(2).copied().collect();
        Ok(Self {
            re: Tensor::from_parts_unchecked(vec![h, w, c], re),
            im: Tensor::from_parts_unchecked(vec![h, w, c], im),
            centered: false,
        })
    }
}

/// Forward unitary 2D DFT of every channel. Returns an uncentered spectrum.
///
/// For real input the four self-conjugate bins are exactly real, and their
/// imaginary parts are written as `+0.0` rather than rounding residue.
pub fn fft2(x: &Tensor) -> Result<ComplexSpectrum> {
    let out = fft2_interleaved(x)?;
    ComplexSpectrum::from_interleaved(&out)
}

pub(crate) fn fft2_interleaved(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    require_pow2("height", h)?;
    require_pow2("width", w)?;
    let mut out = vec![0.0; h * w * c * 2];
    let mut plane = vec![Complex64::new(0.0, 0.0); h * w];
    for ch in 0..c {
        for (i, z) in plane.iter_mut().enumerate() {
            *z = Complex64::new(x.data()[i * c + ch], 0.0);
        }
        fft2_plane(&mut plane, h, w, false);
        for (r, col) in self_conjugate_indices(h, w) {
            plane[r * w + col].im = 0.0;
        }
        for (i, z) in plane.iter().enumerate() {
            out[2 * (i * c + ch)] = z.re;
            out[2 * (i * c + ch) + 1] = z.im;
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![h, w, c, 2], out))
}

/// Complex-to-complex unitary 2D transform over an interleaved `[H, W, C, 2]`.
pub(crate) fn fft2_complex_interleaved(s: &Tensor, inverse: bool) -> Result<Tensor> {
    let [h, w, c, 2] = s.shape()[..] else {
        return Err(Error::shape(format!("expected [H, W, C, 2], got {:?}", s.shape())));
    };
    require_pow2("height", h)?;
    require_pow2("width", w)?;
    let mut out = vec![0.0; s.len()];
    let mut plane = vec![Complex64::new(0.0, 0.0); h * w];
    for ch in 0..c {
        for (i, z) in plane.iter_mut().enumerate() {
            let k = 2 * (i * c + ch);
            *z = Complex64::new(s.data()[k], s.data()[k + 1]);
        }
        fft2_plane(&mut plane, h, w, inverse);
        for (i, z) in plane.iter().enumerate() {
            let k = 2 * (i * c + ch);
            out[k] = z.re;
            out[k + 1] = z.im;
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![h, w, c, 2], out))
}

/// Inverse unitary 2D DFT, returning the real part together with the largest
/// discarded imaginary magnitude.
pub fn ifft2_with_residual(s: &ComplexSpectrum) -> Result<(Tensor, f64)> {
    let full = fft2_complex_interleaved(&s.to_interleaved(), true)?;
    let (h, w, c) = s.dims();
    let mut residual: f64 = 0.0;
    let re = full
        .data()
        .chunks_exact(2)
        .map(|p| {
            residual = residual.max(p[1].abs());
            p[0]
        })
        .collect();
    Ok((Tensor::from_parts_unchecked(vec![h, w, c], re), residual))
}

/// Inverse unitary 2D DFT; the imaginary part is dropped.
pub fn ifft2(s: &ComplexSpectrum) -> Result<Tensor> {
    Ok(ifft2_with_residual(s)?.0)
}

/// Amplitude and phase planes of a spectrum, in the spectrum's own layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpPhase {
    pub amplitude: Tensor,
    /// Radians in `(-pi, pi]`.
    pub phase: Tensor,
    pub centered: bool,
}

pub(crate) fn phase_of(re: f64, im: f64) -> f64 {
    let p = im.atan2(re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

pub fn amp_phase(s: &ComplexSpectrum) -> AmpPhase {
    AmpPhase {
        amplitude: s.re.zip_map(&s.im, f64::hypot).expect("spectrum planes share a shape"),
        phase: s.re.zip_map(&s.im, phase_of).expect("spectrum planes share a shape"),
        centered: s.centered,
    }
}

pub fn recompose(ap: &AmpPhase) -> Result<ComplexSpectrum> {
    let re = ap.amplitude.zip_map(&ap.phase, |a, p| a * p.cos())?;
    let im = ap.amplitude.zip_map(&ap.phase, |a, p| a * p.sin())?;
    ComplexSpectrum::new(re, im, ap.centered)
}

/// Channel-axis spectrum of one feature vector; bin 0 is DC.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpectrum {
    pub bins: Vec<Complex64>,
}

impl ChannelSpectrum {
    pub fn amplitude(&self) -> Vec<f64> {
        self.bins.iter().map(|z| z.norm()).collect()
    }

    pub fn phase(&self) -> Vec<f64> {
        self.bins.iter().map(|z| phase_of(z.re, z.im)).collect()
    }
}

fn require_even_channels(c: usize) -> Result<()> {
    if !c.is_multiple_of(2) {
        return Err(Error::invalid(format!("channel count {c} must be even")));
    }
    require_pow2("channels", c)
}

/// Forward channel-axis DFT of a `[1, 1, C]` vector, scaled by `1/C`.
pub fn fft_channel(y: &Tensor) -> Result<ChannelSpectrum> {
    let (_, _, c) = y.dims3()?;
    if y.len() != c {
        return Err(Error::shape(format!("expected [1, 1, C], got {:?}", y.shape())));
    }
    let t = fft_last_axis_interleaved(y)?;
    Ok(ChannelSpectrum {
        bins: t.data().chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect(),
    })
}

/// Inverse channel-axis DFT (unscaled). Returns the real part as `[1, 1, C]`.
pub fn ifft_channel(z: &ChannelSpectrum) -> Result<Tensor> {
    let c = z.bins.len();
    require_even_channels(c)?;
    let mut buf = z.bins.clone();
    fft_in_place(&mut buf, true);
    Tensor::new(&[1, 1, c], buf.iter().map(|v| v.re).collect())
}

/// Forward DFT along the last axis with `1/C` scaling: `[.., C] -> [.., C, 2]`.
/// Bins 0 and `C/2` are exactly real for real input.
pub(crate) fn fft_last_axis_interleaved(x: &Tensor) -> Result<Tensor> {
    let c = *x.shape().last().unwrap();
    require_even_channels(c)?;
    let mut out = Vec::with_capacity(2 * x.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); c];
    let scale = 1.0 / c as f64;
    for row in x.data().chunks_exact(c) {
        for (z, &v) in buf.iter_mut().zip(row) {
            *z = Complex64::new(v, 0.0);
        }
        fft_in_place(&mut buf, false);
        buf[0].im = 0.0;
        buf[c / 2].im = 0.0;
        for z in &buf {
            out.push(z.re * scale);
            out.push(z.im * scale);
        }
    }
    let mut shape = x.shape().to_vec();
    shape.push(2);
    Ok(Tensor::from_parts_unchecked(shape, out))
}

/// Unscaled DFT along the complex axis of `[.., C, 2]`; `inverse` flips the sign.
pub(crate) fn dft_last_axis_complex(s: &Tensor, inverse: bool) -> Result<Tensor> {
    let shape = s.shape();
    if shape.len() < 2 || shape[shape.len() - 1] != 2 {
        return Err(Error::shape(format!("expected [.., C, 2], got {shape:?}")));
    }
    let c = shape[shape.len() - 2];
    require_even_channels(c)?;
    let mut out = Vec::with_capacity(s.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); c];
    for row in s.data().chunks_exact(2 * c) {
        for (z, p) in buf.iter_mut().zip(row.chunks_exact(2)) {
            *z = Complex64::new(p[0], p[1]);
        }
        fft_in_place(&mut buf, inverse);
        for z in &buf {
            out.push(z.re);
            out.push(z.im);
        }
    }
    Ok(Tensor::from_parts_unchecked(shape.to_vec(), out))
}

/// Array index of centered frequency `(u, v)` in an uncentered `H x W` plane.
pub fn centered_to_index(u: i64, v: i64, h: usize, w: usize) -> (usize, usize) {
    (u.rem_euclid(h as i64) as usize, v.rem_euclid(w as i64) as usize)
}

/// Centered coordinate of uncentered array index `(row, col)`.
pub fn index_to_centered(row: usize, col: usize, h: usize, w: usize) -> (i64, i64) {
    let wrap = |i: usize, n: usize| {
        if i >= n / 2 {
            i as i64 - n as i64
        } else {
            i as i64
        }
    };
    (wrap(row, h), wrap(col, w))
}

fn in_half_set(u: i64, v: i64, h: usize, w: usize) -> bool {
    let (hh, hw) = (h as i64 / 2, w as i64 / 2);
    if v > 0 {
        return true;
    }
    (v == 0 || v == -hw) && (u >= 0 || u == -hh)
}

/// Lookup tables tying the half-spectrum set to the full uncentered plane.
#[derive(Debug)]
pub struct HalfSpectrumMap {
    pub h: usize,
    pub w: usize,
    /// Centered coordinates of the set, in canonical order.
    pub members: Vec<(i64, i64)>,
    /// Flat uncentered index (`row * W + col`) of each member.
    pub flat_index: Vec<usize>,
    /// For each flat plane index: (member, conjugated, self-conjugate).
    pub source: Vec<(usize, bool, bool)>,
}

impl HalfSpectrumMap {
    fn build(h: usize, w: usize) -> Self {
        let (hh, hw) = (h as i64 / 2, w as i64 / 2);
        let mut members = Vec::with_capacity(h * w / 2 + 2);
        for u in -hh..hh {
            for v in -hw..hw {
                if in_half_set(u, v, h, w) {
                    members.push((u, v));
                }
            }
        }
        let flat_index: Vec<usize> = members
            .iter()
            .map(|&(u, v)| {
                let (r, c) = centered_to_index(u, v, h, w);
                r * w + c
            })
            .collect();
        let mut source = vec![(usize::MAX, false, false); h * w];
        for (k, &(u, v)) in members.iter().enumerate() {
            let (r, c) = centered_to_index(u, v, h, w);
            let (cr, cc) = centered_to_index(-u, -v, h, w);
            let selfconj = (r, c) == (cr, cc);
            source[r * w + c] = (k, false, selfconj);
            if !selfconj {
                source[cr * w + cc] = (k, true, false);
            }
        }
        debug_assert!(source.iter().all(|s| s.0 != usize::MAX));
        Self {
            h,
            w,
            members,
            flat_index,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// The canonical non-redundant half of an `H x W` spectrum (cached per size).
///
/// Members are `{v > 0}` plus, on the self-conjugate columns `v = 0` and
/// `v = -W/2`, the rows `u = -H/2` and `u >= 0`. Canonical order is row-major
/// over centered coordinates. `|S| = HW/2 + 2`.
pub fn half_spectrum_map(h: usize, w: usize) -> Result<Arc<HalfSpectrumMap>> {
    require_pow2("height", h)?;
    require_pow2("width", w)?;
    if h < 2 || w < 2 {
        return Err(Error::invalid(format!("half spectrum needs H, W >= 2, got {h}x{w}")));
    }
    static CACHE: OnceLock<RwLock<HashMap<(usize, usize), Arc<HalfSpectrumMap>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(m) = cache.read().unwrap().get(&(h, w)) {
        return Ok(m.clone());
    }
    let m = Arc::new(HalfSpectrumMap::build(h, w));
    Ok(cache.write().unwrap().entry((h, w)).or_insert(m).clone())
}

pub fn half_spectrum_set(h: usize, w: usize) -> Result<Vec<(i64, i64)>> {
    Ok(half_spectrum_map(h, w)?.members.clone())
}

/// Values of `s` on the half-spectrum set: `[|S|, C]` real and imaginary parts.
pub fn half_values(s: &ComplexSpectrum) -> Result<(Tensor, Tensor)> {
    let (h, w, c) = s.dims();
    let map = half_spectrum_map(h, w)?;
    let mut re = Vec::with_capacity(map.len() * c);
    let mut im = Vec::with_capacity(map.len() * c);
    for &(u, v) in &map.members {
        for ch in 0..c {
            let z = s.at_frequency(u, v, ch);
            re.push(z.re);
            im.push(z.im);
        }
    }
    Ok((
        Tensor::from_parts_unchecked(vec![map.len(), c], re),
        Tensor::from_parts_unchecked(vec![map.len(), c], im),
    ))
}

/// Rebuilds the full uncentered spectrum from values on the half set.
///
/// Mirror positions receive the complex conjugate; at self-conjugate points
/// the imaginary part is dropped, snapping the phase to 0 or pi.
pub fn hermitian_reconstruct(h: usize, w: usize, re: &Tensor, im: &Tensor) -> Result<ComplexSpectrum> {
    re.expect_same_shape(im, "half spectrum")?;
    let map = half_spectrum_map(h, w)?;
    let (n, c) = re.dims2()?;
    if n != map.len() {
        return Err(Error::shape(format!(
            "half spectrum for {h}x{w} has {} members, got {n} values",
            map.len()
        )));
    }
    let mut half = Vec::with_capacity(2 * n * c);
    for (r, i) in re.data().iter().zip(im.data()) {
        half.push(*r);
        half.push(*i);
    }
    let full = hermitian_full_interleaved(&map, &Tensor::from_parts_unchecked(vec![n, c, 2], half));
    ComplexSpectrum::from_interleaved(&full)
}

pub(crate) fn hermitian_full_interleaved(map: &HalfSpectrumMap, half: &Tensor) -> Tensor {
    let c = half.shape()[1];
    let (h, w) = (map.h, map.w);
    let mut out = vec![0.0; h * w * c * 2];
    for (p, &(k, conj, selfconj)) in map.source.iter().enumerate() {
        for ch in 0..c {
            let s = 2 * (k * c + ch);
            let d = 2 * (p * c + ch);
            out[d] = half.data()[s];
            out[d + 1] = if selfconj {
                0.0
            } else if conj {
                -half.data()[s + 1]
            } else {
                half.data()[s + 1]
            };
        }
    }
    Tensor::from_parts_unchecked(vec![h, w, c, 2], out)
}

pub(crate) fn hermitian_full_vjp(map: &HalfSpectrumMap, grad: &Tensor, c: usize) -> Tensor {
    let mut g = vec![0.0; map.len() * c * 2];
    for (p, &(k, conj, selfconj)) in map.source.iter().enumerate() {
        for ch in 0..c {
            let s = 2 * (k * c + ch);
            let d = 2 * (p * c + ch);
            g[s] += grad.data()[d];
            if !selfconj {
                g[s + 1] += if conj { -grad.data()[d + 1] } else { grad.data()[d + 1] };
            }
        }
    }
    Tensor::from_parts_unchecked(vec![map.len(), c, 2], g)
}

/// Exchanges amplitude spectra between two images.
///
/// Returns `(phase of a with amplitude of b, phase of b with amplitude of a)`,
/// each clamped to `[0, 1]`.
pub fn amplitude_swap(a: &Tensor, b: &Tensor) -> Result<(Tensor, Tensor)> {
    a.expect_same_shape(b, "amplitude_swap")?;
    let (pa, pb) = (amp_phase(&fft2(a)?), amp_phase(&fft2(b)?));
    let mix = |amp: &Tensor, phase: &Tensor| -> Result<Tensor> {
        let s = recompose(&AmpPhase {
            amplitude: amp.clone(),
            phase: phase.clone(),
            centered: false,
        })?;
        Ok(ifft2(&s)?.clamp(0.0, 1.0))
    };
    Ok((mix(&pb.amplitude, &pa.phase)?, mix(&pa.amplitude, &pb.phase)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Quadruple-loop DFT with the unitary scaling.
    fn naive_dft2(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let (h, w, c) = x.dims3().unwrap();
        let mut re = vec![0.0; h * w * c];
        let mut im = vec![0.0; h * w * c];
        let norm = 1.0 / ((h * w) as f64).sqrt();
        for u in 0..h {
            for v in 0..w {
                for ch in 0..c {
                    let (mut sr, mut si) = (0.0, 0.0);
                    for y in 0..h {
                        for xx in 0..w {
                            let ang = -2.0 * PI * ((y * u) as f64 / h as f64 + (xx * v) as f64 / w as f64);
                            let val = x.at3(y, xx, ch);
                            sr += val * ang.cos();
                            si += val * ang.sin();
                        }
                    }
                    re[(u * w + v) * c + ch] = sr * norm;
                    im[(u * w + v) * c + ch] = si * norm;
                }
            }
        }
        (re, im)
    }

    #[test]
    fn constant_image_has_only_dc() {
        let x = Tensor::full(&[4, 4, 1], 0.3).unwrap();
        let s = fft2(&x).unwrap();
        assert!((s.get(0, 0, 0).re - 4.0 * 0.3).abs() < 1e-12);
        for i in 1..16 {
            assert!(s.re.data()[i].abs() < 1e-12 && s.im.data()[i].abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut x = Tensor::zeros(&[4, 4, 1]).unwrap();
        x.data_mut()[0] = 1.0;
        let s = fft2(&x).unwrap();
        for i in 0..16 {
            assert!((s.re.data()[i] - 0.25).abs() < 1e-12);
            assert!(s.im.data()[i].abs() < 1e-12);
        }
    }

    #[test]
    fn fft2_matches_naive_dft() {
        let x = Tensor::uniform(&[8, 8, 3], -1.0, 1.0, &mut rng(1)).unwrap();
        let s = fft2(&x).unwrap();
        let (re, im) = naive_dft2(&x);
        let scale = re.iter().chain(&im).fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..re.len() {
            assert!((s.re.data()[i] - re[i]).abs() / scale < 1e-9);
            assert!((s.im.data()[i] - im[i]).abs() / scale < 1e-9);
        }
        assert!(ifft2(&s).unwrap().max_abs_diff(&x).unwrap() < 1e-10);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let x = Tensor::zeros(&[6, 8, 1]).unwrap();
        let err = fft2(&x).unwrap_err().to_string();
        assert!(err.contains("pad"), "{err}");
    }

    #[test]
    fn centering_is_an_involution() {
        let x = Tensor::uniform(&[8, 4, 2], 0.0, 1.0, &mut rng(2)).unwrap();
        let s = fft2(&x).unwrap();
        let c = s.to_centered();
        assert_eq!(c.get(4, 2, 1), s.get(0, 0, 1));
        assert_eq!(c.at_frequency(-1, 1, 0), s.at_frequency(-1, 1, 0));
        assert_eq!(c.to_uncentered(), s);
    }

    #[test]
    fn three_four_five() {
        let re = Tensor::full(&[1, 1, 1], 3.0).unwrap();
        let im = Tensor::full(&[1, 1, 1], 4.0).unwrap();
        let ap = amp_phase(&ComplexSpectrum::new(re, im, false).unwrap());
        assert_eq!(ap.amplitude.data()[0], 5.0);
        assert_eq!(ap.phase.data()[0], 4f64.atan2(3.0));
    }

    #[test]
    fn phase_range_is_half_open() {
        assert_eq!(phase_of(-1.0, -0.0), PI);
        assert_eq!(phase_of(-1.0, 0.0), PI);
        assert_eq!(phase_of(2.0, 0.0), 0.0);
    }

    #[test]
    fn recompose_roundtrip() {
        let mut r = rng(3);
        let s = ComplexSpectrum::new(
            Tensor::uniform(&[4, 4, 2], -2.0, 2.0, &mut r).unwrap(),
            Tensor::uniform(&[4, 4, 2], -2.0, 2.0, &mut r).unwrap(),
            false,
        )
        .unwrap();
        let back = recompose(&amp_phase(&s)).unwrap();
        assert!(back.re.max_abs_diff(&s.re).unwrap() < 1e-12);
        assert!(back.im.max_abs_diff(&s.im).unwrap() < 1e-12);
    }

    #[test]
    fn channel_transform_examples() {
        let z = fft_channel(&Tensor::full(&[1, 1, 8], 0.7).unwrap()).unwrap();
        assert!((z.bins[0].re - 0.7).abs() < 1e-15);
        assert!(z.bins[1..].iter().all(|b| b.norm() < 1e-15));

        let alt = Tensor::from_fn(&[1, 1, 8], |i| if i % 2 == 0 { 1.0 } else { -1.0 }).unwrap();
        let z = fft_channel(&alt).unwrap();
        for (k, b) in z.bins.iter().enumerate() {
            let expect = if k == 4 { 1.0 } else { 0.0 };
            assert!((b - Complex64::new(expect, 0.0)).norm() < 1e-15, "bin {k}");
        }

        assert!(fft_channel(&Tensor::zeros(&[1, 1, 5]).unwrap()).is_err());
    }

    #[test]
    fn channel_transform_matches_direct_sum() {
        let y = Tensor::uniform(&[1, 1, 8], -1.0, 1.0, &mut rng(4)).unwrap();
        let z = fft_channel(&y).unwrap();
        for k in 0..8 {
            let direct: Complex64 = (0..8)
                .map(|c| y.data()[c] * Complex64::from_polar(1.0, -2.0 * PI * (c * k) as f64 / 8.0))
                .sum::<Complex64>()
                / 8.0;
            assert!((z.bins[k] - direct).norm() < 1e-14);
        }
        assert!((z.bins[0].re - y.mean()).abs() < 1e-12);
        let back = ifft_channel(&z).unwrap();
        assert!(back.max_abs_diff(&y).unwrap() < 1e-10);
    }

    #[test]
    fn half_set_sizes() {
        assert_eq!(half_spectrum_set(4, 4).unwrap().len(), 10);
        assert_eq!(half_spectrum_set(8, 8).unwrap().len(), 34);
        assert_eq!(half_spectrum_set(16, 8).unwrap().len(), 66);
    }

    #[test]
    fn half_set_is_a_transversal() {
        // Each conjugate orbit {k, -k} meets the set exactly once.
        for (h, w) in [(4, 4), (8, 16), (2, 2)] {
            let set = half_spectrum_set(h, w).unwrap();
            let mut hits = vec![0; h * w];
            for &(u, v) in &set {
                let (r, c) = centered_to_index(u, v, h, w);
                let (cr, cc) = centered_to_index(-u, -v, h, w);
                hits[r * w + c] += 1;
                if (cr, cc) != (r, c) {
                    hits[cr * w + cc] += 1;
                }
            }
            assert!(hits.iter().all(|&n| n == 1), "{h}x{w}: {hits:?}");
        }
    }

    #[test]
    fn reconstruct_rejects_wrong_length() {
        let t = Tensor::zeros(&[9, 1]).unwrap();
        assert!(hermitian_reconstruct(4, 4, &t, &t).is_err());
    }

    #[test]
    fn zero_half_gives_zero_image() {
        let t = Tensor::zeros(&[10, 2]).unwrap();
        let s = hermitian_reconstruct(4, 4, &t, &t).unwrap();
        assert_eq!(ifft2(&s).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn reconstruct_from_half_matches_full() {
        let x = Tensor::uniform(&[16, 16, 2], 0.0, 1.0, &mut rng(5)).unwrap();
        let s = fft2(&x).unwrap();
        let (re, im) = half_values(&s).unwrap();
        let back = hermitian_reconstruct(16, 16, &re, &im).unwrap();
        assert!(back.re.max_abs_diff(&s.re).unwrap() < 1e-9);
        assert!(back.im.max_abs_diff(&s.im).unwrap() < 1e-9);
        let (img, resid) = ifft2_with_residual(&back).unwrap();
        assert!(resid < 1e-9);
        assert!(img.max_abs_diff(&x).unwrap() < 1e-10);
    }

    #[test]
    fn swap_identities() {
        let mut r = rng(6);
        let a = Tensor::uniform(&[8, 8, 3], 0.1, 0.9, &mut r).unwrap();
        let b = Tensor::uniform(&[8, 8, 3], 0.1, 0.9, &mut r).unwrap();
        let (x, y) = amplitude_swap(&a, &a).unwrap();
        assert!(x.max_abs_diff(&a).unwrap() < 1e-10);
        assert!(y.max_abs_diff(&a).unwrap() < 1e-10);

        let (ab, ba) = amplitude_swap(&a, &b).unwrap();
        let (sa, sb) = (fft2(&a).unwrap(), fft2(&b).unwrap());
        let hand = |amp_src: &ComplexSpectrum, ph_src: &ComplexSpectrum| {
            let re = Tensor::from_fn(&[8, 8, 3], |i| {
                let z = Complex64::new(amp_src.re.data()[i], amp_src.im.data()[i]);
                let p = Complex64::new(ph_src.re.data()[i], ph_src.im.data()[i]);
                z.norm() * p.arg().cos()
            })
            .unwrap();
            let im = Tensor::from_fn(&[8, 8, 3], |i| {
                let z = Complex64::new(amp_src.re.data()[i], amp_src.im.data()[i]);
                let p = Complex64::new(ph_src.re.data()[i], ph_src.im.data()[i]);
                z.norm() * p.arg().sin()
            })
            .unwrap();
            ifft2(&ComplexSpectrum::new(re, im, false).unwrap())
                .unwrap()
                .clamp(0.0, 1.0)
        };
        assert!(ab.max_abs_diff(&hand(&sb, &sa)).unwrap() < 1e-12);
        assert!(ba.max_abs_diff(&hand(&sa, &sb)).unwrap() < 1e-12);
    }

    #[test]
    fn swapping_twice_restores() {
        // Unclamped values stay inside [0, 1] for smooth inputs, so the
        // involution holds through the clamp.
        let a = Tensor::from_fn(&[8, 8, 1], |i| 0.5 + 0.2 * ((i as f64) * 0.3).sin()).unwrap();
        let b = Tensor::from_fn(&[8, 8, 1], |i| 0.5 + 0.2 * ((i as f64) * 0.7).cos()).unwrap();
        let (ab, ba) = amplitude_swap(&a, &b).unwrap();
        let (a2, b2) = amplitude_swap(&ab, &ba).unwrap();
        assert!(a2.max_abs_diff(&a).unwrap() < 1e-9);
        assert!(b2.max_abs_diff(&b).unwrap() < 1e-9);
    }
}
