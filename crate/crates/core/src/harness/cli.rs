//! The `fouriermamba` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::ablation::{ablation_run, parse_sets};
use super::gradsuite::{run_grad_suite, GRAD_TOL};
use super::image_io::{crop, load_png, pad_pow2, save_png};
use super::train::{train, RunConfig};
use crate::error::{Error, Result};
use crate::fourier::amplitude_swap;
use crate::net::{forward, ModelWeights};
use crate::scan::{ScanOrder, ScanVariant};

/// Default output folder for `train` and `ablate` when the config names none.
pub const DEFAULT_OUTPUT_DIR: &str = "fouriermamba-out";

#[derive(Debug, Parser)]
#[command(
    name = "fouriermamba",
    version,
    about = "Fourier-space state-space deraining toolkit"
)]
struct Cli {
    /// Overrides the seed of `train`, `ablate` and `gradcheck`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on synthetic (or supplied) pairs; writes weights.fmw, log.csv and run.toml.
    Train { config: PathBuf },
    /// Derain a PNG with saved weights.
    Derain {
        weights: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
    /// Write the visiting order of a scan as "row col" lines.
    ScanViz {
        variant: String,
        height: usize,
        width: usize,
        out: PathBuf,
    },
    /// Exchange amplitude spectra of two equally sized PNGs.
    SpectrumSwap { a: PathBuf, b: PathBuf, outdir: PathBuf },
    /// Run every registered finite-difference gradient check.
    Gradcheck,
    /// Train one model per scan set and report a PSNR/SSIM table.
    Ablate { config: PathBuf },
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// The `(row, col)` lines `scan-viz` writes.
pub fn scan_lines(variant: ScanVariant, h: usize, w: usize) -> Result<String> {
    let order = if variant == ScanVariant::ChannelHalf {
        if w != 1 {
            return Err(Error::invalid("channel-half takes <C> 1 as its extent"));
        }
        ScanOrder::channel(h)?
    } else {
        ScanOrder::build(variant, h, w)?
    };
    Ok(order
        .display_coords()
        .iter()
        .map(|(r, c)| format!("{r} {c}\n"))
        .collect())
}

/// Pads to a power of two of at least the model's minimum side, runs the
/// network, crops back and clamps to `[0, 1]`.
pub fn derain_image(image: &crate::Tensor, weights: &ModelWeights) -> Result<crate::Tensor> {
    let (padded, (h, w)) = pad_pow2(image, weights.config.min_side())?;
    let y = forward(&padded, weights)?;
    Ok(crop(&y, h, w)?.clamp(0.0, 1.0))
}

fn run_command(cli: Cli, out: &mut dyn Write) -> Result<bool> {
    let say = |out: &mut dyn Write, s: String| {
        // Output is best effort: a closed stdout must not turn success into failure.
        let _ = writeln!(out, "{s}");
    };
    match cli.command {
        Command::Train { config } => {
            let cfg = load_config(&config, cli.seed)?;
            let dir = output_dir(&cfg);
            ensure_dir(&dir)?;
            let res = train(&cfg)?;
            res.weights.save(dir.join("weights.fmw"))?;
            write_file(&dir.join("log.csv"), res.log_csv().as_bytes())?;
            write_file(&dir.join("run.toml"), cfg.to_toml().as_bytes())?;
            say(
                out,
                format!(
                    "held-out PSNR-Y {:.3} dB -> {:.3} dB, SSIM-Y {:.4} -> {:.4}; wrote {}",
                    res.rainy.psnr,
                    res.last.psnr,
                    res.rainy.ssim,
                    res.last.ssim,
                    dir.display()
                ),
            );
        }
        Command::Derain { weights, input, output } => {
            let w = ModelWeights::load(&weights)?;
            let img = load_png(&input)?;
            save_png(&output, &derain_image(&img, &w)?)?;
        }
        Command::ScanViz {
            variant,
            height,
            width,
            out: path,
        } => {
            let v: ScanVariant = variant.parse()?;
            write_file(&path, scan_lines(v, height, width)?.as_bytes())?;
        }
        Command::SpectrumSwap { a, b, outdir } => {
            let (ia, ib) = (load_png(&a)?, load_png(&b)?);
            ia.expect_same_shape(&ib, "spectrum-swap")?;
            let (pa, (h, w)) = pad_pow2(&ia, 1)?;
            let (pb, _) = pad_pow2(&ib, 1)?;
            let (pha_a, pha_b) = amplitude_swap(&pa, &pb)?;
            ensure_dir(&outdir)?;
            save_png(outdir.join("amp_b_pha_a.png"), &crop(&pha_a, h, w)?)?;
            save_png(outdir.join("amp_a_pha_b.png"), &crop(&pha_b, h, w)?)?;
        }
        Command::Gradcheck => {
            let cases = run_grad_suite(cli.seed.unwrap_or(0))?;
            let width = cases.iter().map(|c| c.name.len()).max().unwrap_or(0);
            for c in &cases {
                say(
                    out,
                    format!(
                        "{:<width$}  max rel err {:.3e} over {:>3} entries  {}",
                        c.name,
                        c.report.max_rel_error,
                        c.report.checked,
                        if c.passed() { "ok" } else { "FAIL" }
                    ),
                );
            }
            let failed = cases.iter().filter(|c| !c.passed()).count();
            say(
                out,
                format!("{} of {} checks within {GRAD_TOL:e}", cases.len() - failed, cases.len()),
            );
            return Ok(failed == 0);
        }
        Command::Ablate { config } => {
            let cfg = load_config(&config, cli.seed)?;
            let sets = parse_sets(&cfg.ablation.variants)?;
            let table = ablation_run(&cfg, &sets)?;
            let dir = output_dir(&cfg);
            ensure_dir(&dir)?;
            write_file(&dir.join("ablation.txt"), table.to_text().as_bytes())?;
            write_file(&dir.join("ablation.csv"), table.to_csv().as_bytes())?;
            say(out, table.to_text().trim_end().to_string());
        }
    }
    Ok(true)
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code: 0 on success, 1 on failure (reason on standard error), 2 on a usage
/// error.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {}", e.to_string().lines().next().unwrap_or("unknown failure"));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn progressive_8x8_has_34_lines() {
        let s = scan_lines(ScanVariant::ProgressiveZigzag, 8, 8).unwrap();
        assert_eq!(s.lines().count(), 34);
        assert!(s.lines().all(|l| l.split(' ').count() == 2));
    }

    #[test]
    fn usage_errors_exit_2() {
        let mut sink = Vec::new();
        assert_eq!(run(["fouriermamba", "--bogus"], &mut sink), 2);
        assert_eq!(run(["fouriermamba"], &mut sink), 2);
        assert_eq!(run(["fouriermamba", "--help"], &mut sink), 0);
    }

    #[test]
    fn missing_files_exit_1() {
        let mut sink = Vec::new();
        assert_eq!(run(["fouriermamba", "train", "/nonexistent/run.toml"], &mut sink), 1);
        assert_eq!(
            run(
                ["fouriermamba", "derain", "/nonexistent.fmw", "a.png", "b.png"],
                &mut sink
            ),
            1
        );
    }
}
