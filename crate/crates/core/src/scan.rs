//! Scan orders: permutations that turn a plane (or a set of frequencies) into
//! a 1D sequence for the selective scan, and back.
//!
//! Spectral orders visit the half-spectrum set of [`crate::fourier`] grouped
//! into L1 rings `d = |u| + |v|` around DC. Classic orders walk the full plane
//! row- or column-major. The channel order walks the non-redundant half of a
//! channel spectrum, DC first.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::fourier::{half_spectrum_map, require_pow2};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScanVariant {
    ProgressiveZigzag,
    BilateralZigzag,
    ProgressiveReversed,
    BilateralReversed,
    ClassicRow,
    ClassicCol,
    ClassicRowRev,
    ClassicColRev,
    ChannelHalf,
}

impl ScanVariant {
    pub const ALL: [ScanVariant; 9] = [
        ScanVariant::ProgressiveZigzag,
        ScanVariant::BilateralZigzag,
        ScanVariant::ProgressiveReversed,
        ScanVariant::BilateralReversed,
        ScanVariant::ClassicRow,
        ScanVariant::ClassicCol,
        ScanVariant::ClassicRowRev,
        ScanVariant::ClassicColRev,
        ScanVariant::ChannelHalf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScanVariant::ProgressiveZigzag => "progressive-zigzag",
            ScanVariant::BilateralZigzag => "bilateral-zigzag",
            ScanVariant::ProgressiveReversed => "progressive-reversed",
            ScanVariant::BilateralReversed => "bilateral-reversed",
            ScanVariant::ClassicRow => "classic-row",
            ScanVariant::ClassicCol => "classic-col",
            ScanVariant::ClassicRowRev => "classic-row-rev",
            ScanVariant::ClassicColRev => "classic-col-rev",
            ScanVariant::ChannelHalf => "channel-half",
        }
    }

    pub fn is_spectral(self) -> bool {
        matches!(
            self,
            ScanVariant::ProgressiveZigzag
                | ScanVariant::BilateralZigzag
                | ScanVariant::ProgressiveReversed
                | ScanVariant::BilateralReversed
        )
    }

    pub fn is_classic(self) -> bool {
        matches!(
            self,
            ScanVariant::ClassicRow | ScanVariant::ClassicCol | ScanVariant::ClassicRowRev | ScanVariant::ClassicColRev
        )
    }

    /// The forward variant this one reverses, if any.
    pub fn reversal_of(self) -> Option<ScanVariant> {
        match self {
            ScanVariant::ProgressiveReversed => Some(ScanVariant::ProgressiveZigzag),
            ScanVariant::BilateralReversed => Some(ScanVariant::BilateralZigzag),
            ScanVariant::ClassicRowRev => Some(ScanVariant::ClassicRow),
            ScanVariant::ClassicColRev => Some(ScanVariant::ClassicCol),
            _ => None,
        }
    }
}

impl fmt::Display for ScanVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScanVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScanVariant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<_> = ScanVariant::ALL.iter().map(|v| v.name()).collect();
            Error::invalid(format!(
                "unknown scan variant '{s}' (expected one of {})",
                names.join(", ")
            ))
        })
    }
}

impl serde::Serialize for ScanVariant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for ScanVariant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The set a scan order permutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexSet {
    /// All `H*W` positions, row-major.
    FullPlane { h: usize, w: usize },
    /// The half-spectrum set of an `H x W` spectrum, canonical order.
    HalfSpectrum { h: usize, w: usize },
    /// Channel frequencies `0..=C/2`.
    ChannelHalf { c: usize },
}

impl IndexSet {
    pub fn len(&self) -> usize {
        match *self {
            IndexSet::FullPlane { h, w } => h * w,
            IndexSet::HalfSpectrum { h, w } => h * w / 2 + 2,
            IndexSet::ChannelHalf { c } => c / 2 + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanOrder {
    pub variant: ScanVariant,
    pub domain: IndexSet,
    /// `permutation[step]` is the index-set position visited at `step`.
    permutation: Arc<Vec<usize>>,
    inverse: Arc<Vec<usize>>,
}

pub fn ring_index(u: i64, v: i64) -> i64 {
    u.abs() + v.abs()
}

/// Orders ring members by `(v, u)`, reversed on odd rings.
fn serpentine(ring: i64, mut members: Vec<(usize, i64, i64)>) -> Vec<(usize, i64, i64)> {
    members.sort_by_key(|&(_, u, v)| (v, u));
    if ring % 2 == 1 {
        members.reverse();
    }
    members
}

fn rings(members: &[(usize, i64, i64)]) -> Vec<(i64, Vec<(usize, i64, i64)>)> {
    let mut by_ring: std::collections::BTreeMap<i64, Vec<(usize, i64, i64)>> = Default::default();
    for &m in members {
        by_ring.entry(ring_index(m.1, m.2)).or_default().push(m);
    }
    by_ring.into_iter().map(|(d, ms)| (d, serpentine(d, ms))).collect()
}

fn progressive(h: usize, w: usize) -> Result<Vec<usize>> {
    let map = half_spectrum_map(h, w)?;
    let members: Vec<_> = map.members.iter().enumerate().map(|(k, &(u, v))| (k, u, v)).collect();
    Ok(rings(&members)
        .into_iter()
        .flat_map(|(_, ms)| ms.into_iter().map(|m| m.0))
        .collect())
}

fn bilateral(h: usize, w: usize) -> Result<Vec<usize>> {
    let map = half_spectrum_map(h, w)?;
    let mut wing_a = Vec::new();
    let mut wing_b = Vec::new();
    let mut dc = None;
    for (k, &(u, v)) in map.members.iter().enumerate() {
        if (u, v) == (0, 0) {
            dc = Some(k);
        } else if u < 0 {
            wing_a.push((k, u, v));
        } else {
            wing_b.push((k, u, v));
        }
    }
    let mut out: Vec<usize> = rings(&wing_a)
        .into_iter()
        .rev()
        .flat_map(|(_, ms)| ms.into_iter().map(|m| m.0))
        .collect();
    out.push(dc.expect("DC belongs to the half set"));
    out.extend(
        rings(&wing_b)
            .into_iter()
            .flat_map(|(_, ms)| ms.into_iter().map(|m| m.0)),
    );
    Ok(out)
}

fn compute_permutation(variant: ScanVariant, domain: IndexSet) -> Result<Vec<usize>> {
    if let Some(base) = variant.reversal_of() {
        let mut p = compute_permutation(base, domain)?;
        p.reverse();
        return Ok(p);
    }
    match (variant, domain) {
        (ScanVariant::ProgressiveZigzag, IndexSet::HalfSpectrum { h, w }) => progressive(h, w),
        (ScanVariant::BilateralZigzag, IndexSet::HalfSpectrum { h, w }) => bilateral(h, w),
        (ScanVariant::ClassicRow, IndexSet::FullPlane { h, w }) => Ok((0..h * w).collect()),
        (ScanVariant::ClassicCol, IndexSet::FullPlane { h, w }) => {
            Ok((0..w).flat_map(|c| (0..h).map(move |r| r * w + c)).collect())
        }
        (ScanVariant::ChannelHalf, IndexSet::ChannelHalf { c }) => Ok((0..=c / 2).collect()),
        _ => unreachable!("domain is derived from the variant"),
    }
}

type Cache = RwLock<HashMap<(ScanVariant, IndexSet), ScanOrder>>;

impl ScanOrder {
    /// Builds (or fetches from the process-wide cache) the order for a plane.
    ///
    /// Spectral orders need power-of-two `h, w`; classic orders accept any
    /// non-zero size. For [`ScanVariant::ChannelHalf`] use [`ScanOrder::channel`].
    pub fn build(variant: ScanVariant, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::invalid(format!("scan shape {h}x{w} is empty")));
        }
        let domain = if variant.is_spectral() {
            require_pow2("height", h)?;
            require_pow2("width", w)?;
            if h < 2 || w < 2 {
                return Err(Error::invalid(format!("spectral scans need H, W >= 2, got {h}x{w}")));
            }
            IndexSet::HalfSpectrum { h, w }
        } else if variant.is_classic() {
            IndexSet::FullPlane { h, w }
        } else {
            return Err(Error::invalid(
                "channel-half scans take a channel count; use ScanOrder::channel",
            ));
        };
        Self::cached(variant, domain)
    }

    pub fn channel(c: usize) -> Result<Self> {
        if c < 2 || !c.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "channel-half scan needs an even channel count, got {c}"
            )));
        }
        Self::cached(ScanVariant::ChannelHalf, IndexSet::ChannelHalf { c })
    }

    fn cached(variant: ScanVariant, domain: IndexSet) -> Result<Self> {
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(o) = cache.read().unwrap().get(&(variant, domain)) {
            return Ok(o.clone());
        }
        let perm = compute_permutation(variant, domain)?;
        let mut inv = vec![0; perm.len()];
        for (step, &p) in perm.iter().enumerate() {
            inv[p] = step;
        }
        let order = ScanOrder {
            variant,
            domain,
            permutation: Arc::new(perm),
            inverse: Arc::new(inv),
        };
        Ok(cache.write().unwrap().entry((variant, domain)).or_insert(order).clone())
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub(crate) fn permutation_arc(&self) -> Arc<Vec<usize>> {
        self.permutation.clone()
    }

    /// `inverse()[position]` is the step at which `position` is visited.
    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    pub(crate) fn inverse_arc(&self) -> Arc<Vec<usize>> {
        self.inverse.clone()
    }

    /// Centered frequency of every step (spectral orders only).
    pub fn frequencies(&self) -> Option<Vec<(i64, i64)>> {
        let IndexSet::HalfSpectrum { h, w } = self.domain else {
            return None;
        };
        let map = half_spectrum_map(h, w).ok()?;
        Some(self.permutation.iter().map(|&k| map.members[k]).collect())
    }

    /// Ring index of every step (spectral orders only).
    pub fn ring_sequence(&self) -> Option<Vec<i64>> {
        Some(self.frequencies()?.into_iter().map(|(u, v)| ring_index(u, v)).collect())
    }

    /// Display coordinates `(row, col)` for every step.
    ///
    /// Spectral orders report positions in the centered (fftshifted) plane,
    /// classic orders plain array positions, channel orders `(z, 0)`.
    pub fn display_coords(&self) -> Vec<(usize, usize)> {
        match self.domain {
            IndexSet::FullPlane { w, .. } => self.permutation.iter().map(|&p| (p / w, p % w)).collect(),
            IndexSet::HalfSpectrum { h, w } => self
                .frequencies()
                .unwrap()
                .into_iter()
                .map(|(u, v)| ((u + h as i64 / 2) as usize, (v + w as i64 / 2) as usize))
                .collect(),
            IndexSet::ChannelHalf { .. } => self.permutation.iter().map(|&z| (z, 0)).collect(),
        }
    }

    /// Extent of the plane [`Self::display_coords`] lives in.
    pub fn display_extent(&self) -> (usize, usize) {
        match self.domain {
            IndexSet::FullPlane { h, w } | IndexSet::HalfSpectrum { h, w } => (h, w),
            IndexSet::ChannelHalf { c } => (c / 2 + 1, 1),
        }
    }

    fn features(&self, values: &Tensor) -> Result<usize> {
        let n = self.domain.len();
        let ok = match (self.domain, values.shape()) {
            (IndexSet::FullPlane { h, w }, [vh, vw, _]) => *vh == h && *vw == w,
            (_, [rows, _]) => *rows == n,
            _ => false,
        };
        if !ok {
            return Err(Error::shape(format!(
                "{} over {:?} cannot take values of shape {:?}",
                self.variant,
                self.domain,
                values.shape()
            )));
        }
        Ok(values.len() / n)
    }

    /// Gathers values over the index set into scan order: `[L, F]`.
    ///
    /// Full-plane orders take `[H, W, F]`; the others take `[|set|, F]`
    /// in the set's canonical order.
    pub fn encode(&self, values: &Tensor) -> Result<Tensor> {
        let f = self.features(values)?;
        Ok(gather_rows(values.data(), f, &self.permutation))
    }

    /// Scatters a `[L, F]` sequence back onto the index set.
    pub fn decode(&self, seq: &Tensor) -> Result<Tensor> {
        let (l, f) = seq.dims2()?;
        if l != self.len() {
            return Err(Error::shape(format!(
                "{} expects a sequence of length {}, got {l}",
                self.variant,
                self.len()
            )));
        }
        let flat = gather_rows(seq.data(), f, &self.inverse);
        match self.domain {
            IndexSet::FullPlane { h, w } => flat.reshape(&[h, w, f]),
            _ => Ok(flat),
        }
    }
}

pub(crate) fn gather_rows(data: &[f64], f: usize, idx: &[usize]) -> Tensor {
    let mut out = Vec::with_capacity(idx.len() * f);
    for &i in idx {
        out.extend_from_slice(&data[i * f..(i + 1) * f]);
    }
    Tensor::from_parts_unchecked(vec![idx.len(), f], out)
}
