//! Run configuration, datasets and the deterministic training loop.

use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::image_io;
use super::metrics::{psnr_y, ssim_y};
use super::rain::{synth_pair, RainPair, RainParams};
use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::net::{forward, forward_graph, loss_total_graph, BoundParams, ModelConfig, ModelWeights, ParamStore};
use crate::optim::{adam_step, cosine_lr, AdamConfig, AdamState, DEFAULT_LR0, DEFAULT_LR_MIN};
use crate::rng;
use crate::tensor::Tensor;

/// Stream used for weight initialisation.
pub const INIT_STREAM: u64 = u64::MAX - 1;
/// Stream used for the per-epoch shuffles.
pub const ORDER_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_min: f64,
    /// Training pairs.
    pub dataset_size: usize,
    /// Evaluation pairs, generated after the training pairs.
    pub held_out: usize,
    /// Side of the square training images.
    pub image_size: usize,
    /// Held-out evaluation period in iterations; 0 evaluates only at the end.
    pub eval_every: usize,
    /// Where `train` and `ablate` write their files.
    pub output_dir: Option<PathBuf>,
    /// Folder with `rainy/` and `clean/` PNGs of matching names, used in
    /// place of synthetic data.
    pub data_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub rain: RainParams,
    pub ablation: AblationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    /// Any of `classic`, `bilateral`, `progressive`, `all`.
    pub variants: Vec<String>,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            variants: ["classic", "bilateral", "progressive", "all"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            iterations: 2000,
            batch_size: 4,
            lr0: DEFAULT_LR0,
            lr_min: DEFAULT_LR_MIN,
            dataset_size: 64,
            held_out: 16,
            image_size: 32,
            eval_every: 250,
            output_dir: None,
            data_dir: None,
            model: ModelConfig::toy(),
            rain: RainParams::default(),
            ablation: AblationSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.model.validate()?;
        self.rain.validate()?;
        if self.iterations == 0 || self.batch_size == 0 || self.dataset_size == 0 || self.held_out == 0 {
            return bad("iterations, batch_size, dataset_size and held_out must be positive".into());
        }
        if self.batch_size > self.dataset_size {
            return bad(format!(
                "batch_size {} exceeds dataset_size {}",
                self.batch_size, self.dataset_size
            ));
        }
        let min = self.model.min_side().max(16);
        if !self.image_size.is_power_of_two() || self.image_size < min {
            return bad(format!(
                "image_size must be a power of two >= {min}, got {}",
                self.image_size
            ));
        }
        if !(self.lr0.is_finite() && self.lr_min.is_finite() && self.lr0 >= self.lr_min && self.lr_min >= 0.0) {
            return bad(format!("need lr0 >= lr_min >= 0, got {} and {}", self.lr0, self.lr_min));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<RainPair>,
    pub held_out: Vec<RainPair>,
}

impl Dataset {
    /// Pairs `0..dataset_size` train, the next `held_out` evaluate.
    pub fn synthetic(cfg: &RunConfig) -> Result<Self> {
        let n = cfg.dataset_size + cfg.held_out;
        let s = cfg.image_size;
        let mut pairs = (0..n as u64)
            .into_par_iter()
            .map(|i| synth_pair(cfg.seed, i, s, s, &cfg.rain))
            .collect::<Result<Vec<_>>>()?;
        let held_out = pairs.split_off(cfg.dataset_size);
        Ok(Self { train: pairs, held_out })
    }

    /// Pairs from `dir/rainy/*.png` and `dir/clean/*.png` with equal names,
    /// sorted by name; each is reflection-padded and cropped to the top-left
    /// `image_size` square. The last `held_out` pairs evaluate.
    pub fn from_dir(dir: &Path, cfg: &RunConfig) -> Result<Self> {
        let rainy_dir = dir.join("rainy");
        let mut names: Vec<String> = std::fs::read_dir(&rainy_dir)
            .map_err(|e| Error::io(&rainy_dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
            .collect();
        names.sort();
        if names.len() <= cfg.held_out {
            return Err(Error::Config(format!(
                "{} holds {} pairs, need more than held_out = {}",
                dir.display(),
                names.len(),
                cfg.held_out
            )));
        }
        let s = cfg.image_size;
        let fit = |t: Tensor| -> Result<Tensor> {
            let (h, w, _) = t.dims3()?;
            image_io::crop(&image_io::reflect_pad(&t, h.max(s), w.max(s))?, s, s)
        };
        let mut pairs = names
            .par_iter()
            .map(|n| {
                let rainy = fit(image_io::load_png(rainy_dir.join(n))?)?;
                let clean = fit(image_io::load_png(dir.join("clean").join(n))?)?;
                Ok(RainPair {
                    rainy,
                    clean,
                    seed: cfg.seed,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let held_out = pairs.split_off(pairs.len() - cfg.held_out);
        Ok(Self { train: pairs, held_out })
    }

    pub fn for_config(cfg: &RunConfig) -> Result<Self> {
        match &cfg.data_dir {
            Some(d) => Self::from_dir(d, cfg),
            None => Self::synthetic(cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub psnr: f64,
    pub ssim: f64,
}

/// Mean PSNR-Y and SSIM-Y of `output(pair)` against the clean images.
fn mean_metrics(pairs: &[RainPair], output: impl Fn(&RainPair) -> Result<Tensor> + Sync) -> Result<Evaluation> {
    let per: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|p| {
            let y = output(p)?;
            Ok((psnr_y(&y, &p.clean)?, ssim_y(&y, &p.clean)?))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    Ok(Evaluation {
        psnr: per.iter().map(|v| v.0).sum::<f64>() / n,
        ssim: per.iter().map(|v| v.1).sum::<f64>() / n,
    })
}

/// Metrics of the network outputs, clamped to `[0, 1]`.
pub fn evaluate(weights: &ModelWeights, pairs: &[RainPair]) -> Result<Evaluation> {
    mean_metrics(pairs, |p| Ok(forward(&p.rainy, weights)?.clamp(0.0, 1.0)))
}

/// Metrics of the rainy inputs themselves.
pub fn evaluate_inputs(pairs: &[RainPair]) -> Result<Evaluation> {
    mean_metrics(pairs, |p| Ok(p.rainy.clone()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub iteration: usize,
    pub lr: f64,
    /// Mean training loss of the batch.
    pub loss: f64,
    pub held_out: Option<Evaluation>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    /// One entry per iteration.
    pub log: Vec<LogEntry>,
    /// SHA-256 over every batch index (u32 LE) in training order.
    pub data_order_hash: String,
    pub rainy: Evaluation,
    pub last: Evaluation,
}

impl TrainOutcome {
    /// `iteration,lr,loss,psnr_y,ssim_y` with empty metric cells between
    /// evaluations.
    pub fn log_csv(&self) -> String {
        let mut s = String::from("iteration,lr,loss,psnr_y,ssim_y\n");
        for e in &self.log {
            let (p, q) = match e.held_out {
                Some(v) => (format!("{:.6}", v.psnr), format!("{:.6}", v.ssim)),
                None => (String::new(), String::new()),
            };
            s.push_str(&format!("{},{:.6e},{:.9},{p},{q}\n", e.iteration, e.lr, e.loss));
        }
        s
    }
}

struct Batches {
    order: Vec<usize>,
    pos: usize,
    rng: rng::Rng,
    hasher: Sha256,
}

impl Batches {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            rng: rng::stream(seed, ORDER_STREAM),
            hasher: Sha256::new(),
        }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.pos == self.order.len() {
                self.order.sort_unstable();
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            batch.push(self.order[self.pos]);
            self.pos += 1;
        }
        for &i in &batch {
            self.hasher.update((i as u32).to_le_bytes());
        }
        batch
    }

    fn digest(self) -> String {
        self.hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn store_from(names: &[String], params: &[Tensor]) -> Result<ParamStore> {
    let mut s = ParamStore::new();
    for (n, t) in names.iter().zip(params) {
        s.insert(n.clone(), t.clone())?;
    }
    Ok(s)
}

fn nonfinite_report(
    iteration: usize,
    batch: &[usize],
    data: &Dataset,
    losses: &[f64],
    names: &[String],
    params: &[Tensor],
) -> Error {
    let mut detail = format!("batch {batch:?}, per-sample losses {losses:?}");
    for &i in batch {
        let r = &data.train[i].rainy;
        let (lo, hi) = r
            .data()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        detail.push_str(&format!("; pair {i} rainy range [{lo}, {hi}]"));
    }
    let bad: Vec<&str> = names
        .iter()
        .zip(params)
        .filter(|(_, t)| !t.all_finite())
        .map(|(n, _)| n.as_str())
        .collect();
    if bad.is_empty() {
        let (n, t) = names
            .iter()
            .zip(params)
            .max_by(|a, b| a.1.max_abs().total_cmp(&b.1.max_abs()))
            .expect("model has parameters");
        detail.push_str(&format!(
            "; all parameters finite, largest |value| {} in {n}",
            t.max_abs()
        ));
    } else {
        detail.push_str(&format!("; non-finite parameters: {}", bad.join(", ")));
    }
    Error::NonFinite { iteration, detail }
}

/// Trains on freshly synthesised (or loaded) data.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = Dataset::for_config(cfg)?;
    train_on(cfg, &data)
}

/// Adam on the batch-mean loss with the cosine schedule; one backward pass
/// per sample, gradients averaged over the batch. Deterministic in `cfg`.
pub fn train_on(cfg: &RunConfig, data: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = ModelWeights::init(&cfg.model, &mut rng::stream(cfg.seed, INIT_STREAM))?;
    let names: Vec<String> = model.params.iter().map(|(n, _)| n.to_string()).collect();
    let mut params: Vec<Tensor> = model.params.iter().map(|(_, t)| t.clone()).collect();
    let mut state = AdamState::new();
    let adam = AdamConfig::default();
    let mut batches = Batches::new(data.train.len(), cfg.seed);
    let rainy = evaluate_inputs(&data.held_out)?;
    info!("held-out inputs: PSNR-Y {:.3} dB, SSIM-Y {:.4}", rainy.psnr, rainy.ssim);
    let mut log = Vec::with_capacity(cfg.iterations);
    let mut last = None;
    for it in 0..cfg.iterations {
        let lr = cosine_lr(it, cfg.iterations, cfg.lr0, cfg.lr_min)?;
        let batch = batches.next(cfg.batch_size);
        let mut grads: Vec<Tensor> = params.iter().map(|p| p.scale(0.0)).collect();
        let mut losses = Vec::with_capacity(batch.len());
        let inv = 1.0 / batch.len() as f64;
        for &i in &batch {
            let pair = &data.train[i];
            let mut g = Graph::new();
            let vars: Vec<_> = params.iter().map(|t| g.leaf(t.clone())).collect();
            let p = BoundParams::from_pairs(names.iter().cloned().zip(vars.iter().copied()));
            let x = g.leaf(pair.rainy.clone());
            let y = forward_graph(&mut g, &p, &cfg.model, x)?;
            let t = g.leaf(pair.clean.clone());
            let l = loss_total_graph(&mut g, y, t, cfg.model.lambda)?;
            let lv = g.value(l).data()[0];
            losses.push(lv);
            if !lv.is_finite() {
                return Err(nonfinite_report(it, &batch, data, &losses, &names, &params));
            }
            let gr = g.backward(l)?;
            for ((acc, &v), p) in grads.iter_mut().zip(&vars).zip(&params) {
                let d = gr.get_or_zeros(v, p);
                for (a, b) in acc.data_mut().iter_mut().zip(d.data()) {
                    *a += inv * b;
                }
            }
        }
        adam_step(&mut params, &grads, &mut state, lr, &adam)?;
        let loss = losses.iter().sum::<f64>() * inv;
        let done = it + 1 == cfg.iterations;
        let held_out = if done || (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0) {
            let w = ModelWeights {
                config: cfg.model.clone(),
                params: store_from(&names, &params)?,
            };
            let e = evaluate(&w, &data.held_out)?;
            info!(
                "iter {:>5}  loss {loss:.5}  lr {lr:.3e}  held-out PSNR-Y {:.3} dB  SSIM-Y {:.4}",
                it + 1,
                e.psnr,
                e.ssim
            );
            last = Some(e);
            Some(e)
        } else {
            None
        };
        log.push(LogEntry {
            iteration: it + 1,
            lr,
            loss,
            held_out,
        });
    }
    Ok(TrainOutcome {
        weights: ModelWeights {
            config: cfg.model.clone(),
            params: store_from(&names, &params)?,
        },
        log,
        data_order_hash: batches.digest(),
        rainy,
        last: last.expect("the final iteration always evaluates"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        RunConfig {
            iterations: 2,
            batch_size: 2,
            dataset_size: 3,
            held_out: 1,
            image_size: 16,
            model: ModelConfig::minimal(),
            ..Default::default()
        }
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(
            (c.iterations, c.batch_size, c.dataset_size, c.image_size),
            (2000, 4, 64, 32)
        );
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(RunConfig::from_toml("iterations = 0").is_err());
        assert!(RunConfig::from_toml("image_size = 24").is_err());
        assert!(RunConfig::from_toml("unknown = 1").is_err());
        let c = RunConfig::from_toml("seed = 5\n[model]\nbase_channels = 4\n").unwrap();
        assert_eq!((c.seed, c.model.base_channels, c.model.state_size), (5, 4, 8));
    }

    #[test]
    fn batches_cover_each_epoch() {
        let mut b = Batches::new(5, 1);
        let mut seen: Vec<usize> = (0..5).flat_map(|_| b.next(1)).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        let mut a = Batches::new(5, 1);
        let mut c = Batches::new(5, 1);
        assert_eq!(a.next(7), c.next(7));
        assert_eq!(a.digest(), c.digest());
    }

    #[test]
    fn one_step_moves_parameters() {
        let cfg = RunConfig {
            iterations: 1,
            ..tiny()
        };
        let out = train(&cfg).unwrap();
        let init = ModelWeights::init(&cfg.model, &mut rng::stream(cfg.seed, INIT_STREAM)).unwrap();
        let moved = init
            .params
            .iter()
            .zip(out.weights.params.iter())
            .any(|((_, a), (_, b))| a != b);
        assert!(moved);
        assert_eq!(out.log.len(), 1);
        assert!(out.log[0].held_out.is_some());
    }

    #[test]
    fn synthetic_split_is_disjoint_and_seeded() {
        let cfg = tiny();
        let d = Dataset::synthetic(&cfg).unwrap();
        assert_eq!((d.train.len(), d.held_out.len()), (3, 1));
        assert_eq!(d, Dataset::synthetic(&cfg).unwrap());
        assert_ne!(d.held_out[0].clean, d.train[0].clean);
    }
}
