//! Scan-order ablation: one model per scan set, same data, seed and budget.

use std::fmt;
use std::str::FromStr;

use log::info;

use super::train::{train_on, Dataset, RunConfig};
use crate::error::{Error, Result};
use crate::net::{ALL_CLASSIC, ALL_SPECTRAL};
use crate::scan::ScanVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanSet {
    Classic,
    Bilateral,
    Progressive,
    AllFour,
}

impl ScanSet {
    pub const ALL: [ScanSet; 4] = [
        ScanSet::Classic,
        ScanSet::Bilateral,
        ScanSet::Progressive,
        ScanSet::AllFour,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ScanSet::Classic => "classic",
            ScanSet::Bilateral => "bilateral",
            ScanSet::Progressive => "progressive",
            ScanSet::AllFour => "all four",
        }
    }

    /// Orders run by the Fourier branch.
    pub fn scans(self) -> Vec<ScanVariant> {
        use ScanVariant::*;
        match self {
            ScanSet::Classic => ALL_CLASSIC.to_vec(),
            ScanSet::Bilateral => vec![BilateralZigzag, BilateralReversed],
            ScanSet::Progressive => vec![ProgressiveZigzag, ProgressiveReversed],
            ScanSet::AllFour => ALL_SPECTRAL.to_vec(),
        }
    }
}

impl fmt::Display for ScanSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ScanSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "classic" => Ok(ScanSet::Classic),
            "bilateral" => Ok(ScanSet::Bilateral),
            "progressive" => Ok(ScanSet::Progressive),
            "all" | "all four" | "all-four" => Ok(ScanSet::AllFour),
            other => Err(Error::Config(format!(
                "unknown scan set {other:?}; expected classic, bilateral, progressive or all"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub set: ScanSet,
    pub psnr: f64,
    pub ssim: f64,
    pub data_order_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// True when every row saw the same batches in the same order.
    pub fn shared_data_order(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[0].data_order_hash == w[1].data_order_hash)
    }

    /// Aligned columns `Scan order | PSNR | SSIM`, then the data-order hash.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.set.label().len())
            .chain(["Scan order".len()])
            .max()
            .unwrap_or(0);
        let mut s = format!("{:<width$}  {:>8}  {:>7}\n", "Scan order", "PSNR", "SSIM");
        s.push_str(&format!(
            "{}  {}  {}\n",
            "-".repeat(width),
            "-".repeat(8),
            "-".repeat(7)
        ));
        for r in &self.rows {
            s.push_str(&format!(
                "{:<width$}  {:>8.2}  {:>7.4}\n",
                r.set.label(),
                r.psnr,
                r.ssim
            ));
        }
        if let Some(first) = self.rows.first() {
            if self.shared_data_order() {
                s.push_str(&format!("data order sha256 {}\n", first.data_order_hash));
            } else {
                for r in &self.rows {
                    s.push_str(&format!("data order sha256 {} ({})\n", r.data_order_hash, r.set));
                }
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,psnr,ssim,data_order_sha256\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6},{:.6},{}\n",
                r.set, r.psnr, r.ssim, r.data_order_hash
            ));
        }
        s
    }
}

pub fn parse_sets(names: &[String]) -> Result<Vec<ScanSet>> {
    if names.is_empty() {
        return Err(Error::Config("ablation.variants is empty".into()));
    }
    names.iter().map(|n| n.parse()).collect()
}

/// Trains one model per set on one shared dataset.
pub fn ablation_run(cfg: &RunConfig, sets: &[ScanSet]) -> Result<AblationTable> {
    cfg.validate()?;
    let data = Dataset::for_config(cfg)?;
    let mut rows = Vec::with_capacity(sets.len());
    for &set in sets {
        let mut c = cfg.clone();
        c.model.fourier_scans = set.scans();
        info!("ablation: training {set}");
        let out = train_on(&c, &data)?;
        info!("ablation: {set} data order sha256 {}", out.data_order_hash);
        rows.push(AblationRow {
            set,
            psnr: out.last.psnr,
            ssim: out.last.ssim,
            data_order_hash: out.data_order_hash,
        });
    }
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_labels() {
        for s in ScanSet::ALL {
            assert_eq!(s.label().parse::<ScanSet>().unwrap(), s);
        }
        assert_eq!("all".parse::<ScanSet>().unwrap(), ScanSet::AllFour);
        assert!("diagonal".parse::<ScanSet>().is_err());
        assert!(parse_sets(&[]).is_err());
    }

    #[test]
    fn sets_are_valid_model_configs() {
        for s in ScanSet::ALL {
            let c = crate::net::ModelConfig {
                fourier_scans: s.scans(),
                ..crate::net::ModelConfig::toy()
            };
            c.validate().unwrap();
        }
    }
}
