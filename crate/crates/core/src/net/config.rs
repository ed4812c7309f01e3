use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::is_power_of_two;
use crate::scan::ScanVariant;

pub const DEFAULT_LAMBDA: f64 = 0.02;

/// The four spectral orders.
pub const ALL_SPECTRAL: [ScanVariant; 4] = [
    ScanVariant::BilateralZigzag,
    ScanVariant::ProgressiveZigzag,
    ScanVariant::BilateralReversed,
    ScanVariant::ProgressiveReversed,
];

/// The four full-plane row/column orders.
pub const ALL_CLASSIC: [ScanVariant; 4] = [
    ScanVariant::ClassicRow,
    ScanVariant::ClassicCol,
    ScanVariant::ClassicRowRev,
    ScanVariant::ClassicColRev,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Channels at full resolution; doubled at every downsampling.
    pub base_channels: usize,
    /// Blocks per stage: encoder levels, bottleneck, decoder levels.
    pub blocks: Vec<usize>,
    pub state_size: usize,
    pub conv_taps: usize,
    /// Embedding width for the channel-spectrum scan.
    pub channel_lift: usize,
    /// Orders used by the Fourier branch of every FSI block.
    pub fourier_scans: Vec<ScanVariant>,
    /// Weight of the frequency term in the loss.
    pub lambda: f64,
    pub in_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl ModelConfig {
    /// `C0 = 8`, blocks `[1, 1, 1]`, `N = 8`.
    pub fn toy() -> Self {
        Self {
            base_channels: 8,
            blocks: vec![1, 1, 1],
            state_size: 8,
            conv_taps: crate::ssm::DEFAULT_CONV_TAPS,
            channel_lift: 4,
            fourier_scans: ALL_SPECTRAL.to_vec(),
            lambda: DEFAULT_LAMBDA,
            in_channels: 3,
        }
    }

    /// `C0 = 4`, blocks `[1, 1, 1]`, `N = 4`.
    pub fn minimal() -> Self {
        Self {
            base_channels: 4,
            state_size: 4,
            ..Self::toy()
        }
    }

    /// Seven stages `[2, 3, 3, 4, 3, 3, 2]` at toy width.
    pub fn full_depth() -> Self {
        Self {
            blocks: vec![2, 3, 3, 4, 3, 3, 2],
            ..Self::toy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.blocks.is_empty() || self.blocks.len().is_multiple_of(2) {
            return bad(format!("blocks must have odd length, got {:?}", self.blocks));
        }
        if self.base_channels < 2 || !is_power_of_two(self.base_channels) {
            return bad(format!(
                "base_channels must be a power of two >= 2, got {}",
                self.base_channels
            ));
        }
        if self.state_size == 0 || self.conv_taps == 0 || self.channel_lift == 0 || self.in_channels == 0 {
            return bad("state_size, conv_taps, channel_lift and in_channels must be positive".into());
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.fourier_scans.is_empty() {
            return bad("fourier_scans is empty".into());
        }
        let spectral = self.fourier_scans.iter().filter(|v| v.is_spectral()).count();
        let classic = self.fourier_scans.iter().filter(|v| v.is_classic()).count();
        if spectral != self.fourier_scans.len() && classic != self.fourier_scans.len() {
            return bad("fourier_scans must be all spectral or all classic orders".into());
        }
        let mut seen = self.fourier_scans.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.fourier_scans.len() {
            return bad("fourier_scans has duplicates".into());
        }
        Ok(())
    }

    /// Number of stride-2 downsamplings.
    pub fn levels(&self) -> usize {
        self.blocks.len() / 2
    }

    /// Channel width at downsampling level `i`.
    pub fn channels_at(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn classic_fourier(&self) -> bool {
        self.fourier_scans.iter().all(|v| v.is_classic())
    }

    /// Smallest admissible image side: the coarsest level must be at least
    /// 2 pixels wide for the half spectrum.
    pub fn min_side(&self) -> usize {
        2 << self.levels()
    }

    pub fn check_input(&self, h: usize, w: usize, c: usize) -> Result<()> {
        if c != self.in_channels {
            return Err(Error::shape(format!("expected {} channels, got {c}", self.in_channels)));
        }
        for (axis, n) in [("height", h), ("width", w)] {
            crate::fourier::require_pow2(axis, n)?;
            if n < self.min_side() {
                return Err(Error::shape(format!(
                    "{axis} {n} is below the minimum {} for {} downsamplings",
                    self.min_side(),
                    self.levels()
                )));
            }
        }
        Ok(())
    }
}
