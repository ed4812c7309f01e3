//! The multi-scale U-Net.
//!
//! ```text
//! shallow 3x3 (in -> C0)
//! enc{i}: blocks, skip_i, down{i} 3x3 stride 2 (C -> 2C)     i < levels
//! bottleneck: blocks
//! dec{i}: 2x nearest, up{i} 3x3 (2C -> C), concat skip_i,
//!         fuse{i} 1x1 (2C -> C), blocks                       i = levels-1 .. 0
//! out 3x3 (C0 -> in), plus the input image
//! ```

use rand::Rng;

use super::blocks::{conv_graph, frssb_graph, frssb_param_count, init_conv, init_frssb};
use super::config::ModelConfig;
use super::weights::{BoundParams, ModelWeights, ParamStore};
use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::tensor::Tensor;

fn stage_prefix(cfg: &ModelConfig, stage: usize) -> String {
    let l = cfg.levels();
    if stage < l {
        format!("enc{stage}")
    } else if stage == l {
        "bottleneck".to_string()
    } else {
        format!("dec{}", cfg.blocks.len() - 1 - stage)
    }
}

impl ModelWeights {
    /// Fresh weights for `config`, every tensor drawn from `rng` in a fixed
    /// order.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut s = ParamStore::new();
        let l = config.levels();
        init_conv(&mut s, "shallow", 3, config.in_channels, config.base_channels, rng)?;
        for stage in 0..config.blocks.len() {
            let level = if stage <= l {
                stage
            } else {
                config.blocks.len() - 1 - stage
            };
            let c = config.channels_at(level);
            let prefix = stage_prefix(config, stage);
            if stage > l {
                init_conv(&mut s, &format!("up{level}"), 3, 2 * c, c, rng)?;
                init_conv(&mut s, &format!("fuse{level}"), 1, 2 * c, c, rng)?;
            }
            for b in 0..config.blocks[stage] {
                init_frssb(&mut s, &format!("{prefix}.block{b}"), c, config, rng)?;
            }
            if stage < l {
                init_conv(&mut s, &format!("down{level}"), 3, c, 2 * c, rng)?;
            }
        }
        init_conv(&mut s, "out", 3, config.base_channels, config.in_channels, rng)?;
        Ok(Self {
            config: config.clone(),
            params: s,
        })
    }
}

/// Scalar parameter count implied by `cfg`, from the layer formulas alone.
pub fn parameter_count(cfg: &ModelConfig) -> usize {
    let conv = |k: usize, cin: usize, cout: usize| k * k * cin * cout + cout;
    let l = cfg.levels();
    let mut total = conv(3, cfg.in_channels, cfg.base_channels) + conv(3, cfg.base_channels, cfg.in_channels);
    for (stage, &n) in cfg.blocks.iter().enumerate() {
        let level = if stage <= l {
            stage
        } else {
            cfg.blocks.len() - 1 - stage
        };
        let c = cfg.channels_at(level);
        total += n * frssb_param_count(c, cfg);
        if stage < l {
            total += conv(3, c, 2 * c);
        }
        if stage > l {
            total += conv(3, 2 * c, c) + conv(1, 2 * c, c);
        }
    }
    total
}

/// Records the network on `g`; `image` is `[H, W, in_channels]`.
pub fn forward_graph(g: &mut Graph, p: &BoundParams, cfg: &ModelConfig, image: Var) -> Result<Var> {
    let (h, w, c) = g.value(image).dims3()?;
    cfg.check_input(h, w, c)?;
    let l = cfg.levels();
    let mut x = conv_graph(g, p, "shallow", image, 1)?;
    let mut skips = Vec::with_capacity(l);
    for stage in 0..cfg.blocks.len() {
        let level = if stage <= l {
            stage
        } else {
            cfg.blocks.len() - 1 - stage
        };
        let prefix = stage_prefix(cfg, stage);
        if stage > l {
            let up = g.upsample2x(x)?;
            let up = conv_graph(g, p, &format!("up{level}"), up, 1)?;
            let skip = skips.pop().expect("one skip per encoder level");
            let cat = g.concat(&[up, skip], 2)?;
            x = conv_graph(g, p, &format!("fuse{level}"), cat, 1)?;
        }
        for b in 0..cfg.blocks[stage] {
            x = frssb_graph(g, p, &format!("{prefix}.block{b}"), x, cfg)?;
        }
        if stage < l {
            skips.push(x);
            x = conv_graph(g, p, &format!("down{level}"), x, 2)?;
        }
    }
    let out = conv_graph(g, p, "out", x, 1)?;
    g.add(out, image)
}

/// Derained image for `image: [H, W, 3]` with values in `[0, 1]`.
pub fn forward(image: &Tensor, weights: &ModelWeights) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = weights.params.bind(&mut g);
    let x = g.leaf(image.clone());
    let y = forward_graph(&mut g, &p, &weights.config, x)?;
    Ok(g.value(y).clone())
}
