//! FSI-SSM, FCE-SSM and the residual block combining them.
//!
//! Parameter names under a block prefix `p`:
//!
//! ```text
//! p.fsi.ln.{gamma,beta}          LayerNorm producing F_l
//! p.fsi.amp.*, p.fsi.pha.*       Fourier-branch sequence transforms
//! p.fsi.spa_in.{w,b}             1x1 conv into the spatial branch
//! p.fsi.spa.*                    spatial sequence transform
//! p.fsi.fuse.{w,b}               1x1 conv over both branches
//! p.fce.{amp,pha}.lift.{w,b}     1 -> E embedding of the channel spectrum
//! p.fce.{amp,pha}.st.*           channel sequence transforms
//! p.fce.{amp,pha}.proj.{w,b}     E -> 1 projection
//! p.fce_out.{w,b}                1x1 conv after FCE-SSM
//! ```

use std::sync::Arc;

use rand::Rng;

use super::config::ModelConfig;
use super::weights::{BoundParams, ParamStore};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::fourier::half_spectrum_map;
use crate::ops::Padding;
use crate::scan::ScanOrder;
use crate::ssm::{seq_transform_graph, SeqTransformVars, SeqTransformWeights, LAYERNORM_EPS};
use crate::tensor::Tensor;

/// Uniform `+-1/sqrt(fan_in)` for both weight and bias.
pub(crate) fn init_conv<R: Rng + ?Sized>(
    store: &mut ParamStore,
    name: &str,
    k: usize,
    cin: usize,
    cout: usize,
    rng: &mut R,
) -> Result<()> {
    let bound = 1.0 / ((k * k * cin) as f64).sqrt();
    store.insert(
        format!("{name}.w"),
        Tensor::uniform(&[k, k, cin, cout], -bound, bound, rng)?,
    )?;
    store.insert(format!("{name}.b"), Tensor::uniform(&[cout], -bound, bound, rng)?)
}

fn init_linear<R: Rng + ?Sized>(
    store: &mut ParamStore,
    name: &str,
    cin: usize,
    cout: usize,
    rng: &mut R,
) -> Result<()> {
    let bound = 1.0 / (cin as f64).sqrt();
    store.insert(format!("{name}.w"), Tensor::uniform(&[cout, cin], -bound, bound, rng)?)?;
    store.insert(format!("{name}.b"), Tensor::uniform(&[cout], -bound, bound, rng)?)
}

fn init_seq<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    c: usize,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    store.insert_seq_transform(
        prefix,
        SeqTransformWeights::init(c, cfg.state_size, cfg.conv_taps, rng)?,
    )
}

pub fn init_fsi<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    c: usize,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    store.insert(format!("{prefix}.ln.gamma"), Tensor::full(&[c], 1.0)?)?;
    store.insert(format!("{prefix}.ln.beta"), Tensor::zeros(&[c])?)?;
    init_seq(store, &format!("{prefix}.amp"), c, cfg, rng)?;
    init_seq(store, &format!("{prefix}.pha"), c, cfg, rng)?;
    init_conv(store, &format!("{prefix}.spa_in"), 1, c, c, rng)?;
    init_seq(store, &format!("{prefix}.spa"), c, cfg, rng)?;
    init_conv(store, &format!("{prefix}.fuse"), 1, 2 * c, c, rng)
}

pub fn init_fce<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, cfg: &ModelConfig, rng: &mut R) -> Result<()> {
    let e = cfg.channel_lift;
    for part in ["amp", "pha"] {
        init_linear(store, &format!("{prefix}.{part}.lift"), 1, e, rng)?;
        init_seq(store, &format!("{prefix}.{part}.st"), e, cfg, rng)?;
        init_linear(store, &format!("{prefix}.{part}.proj"), e, 1, rng)?;
    }
    Ok(())
}

pub fn init_frssb<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    c: usize,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    init_fsi(store, &format!("{prefix}.fsi"), c, cfg, rng)?;
    init_fce(store, &format!("{prefix}.fce"), cfg, rng)?;
    init_conv(store, &format!("{prefix}.fce_out"), 1, c, c, rng)
}

/// Scalar parameters of one sequence transform over `c` channels.
pub fn seq_transform_param_count(c: usize, cfg: &ModelConfig) -> usize {
    let (n, k) = (cfg.state_size, cfg.conv_taps);
    c * c + 3 * n * c + k * c + 5 * c
}

/// Scalar parameters of one residual block over `c` channels.
pub fn frssb_param_count(c: usize, cfg: &ModelConfig) -> usize {
    let e = cfg.channel_lift;
    let fsi = 2 * c + 3 * seq_transform_param_count(c, cfg) + (c * c + c) + (2 * c * c + c);
    let fce = 2 * (2 * e + seq_transform_param_count(e, cfg) + e + 1);
    fsi + fce + c * c + c
}

pub(crate) fn conv_graph(g: &mut Graph, p: &BoundParams, name: &str, x: Var, stride: usize) -> Result<Var> {
    let (w, b) = (p.var(&format!("{name}.w"))?, p.var(&format!("{name}.b"))?);
    g.conv2d(x, w, b, stride, Padding::Same)
}

fn linear_graph(g: &mut Graph, p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    let (w, b) = (p.var(&format!("{name}.w"))?, p.var(&format!("{name}.b"))?);
    g.linear(x, w, Some(b))
}

/// Runs every order over `src: [n, F]` through one sequence transform and
/// sums the decoded results.
fn scan_sum(g: &mut Graph, src: Var, orders: &[ScanOrder], st: &SeqTransformVars) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for o in orders {
        let seq = g.gather_rows(src, o.permutation_arc())?;
        let t = seq_transform_graph(g, st, seq)?;
        let back = g.gather_rows(t, o.inverse_arc())?;
        acc = Some(match acc {
            Some(a) => g.add(a, back)?,
            None => back,
        });
    }
    acc.ok_or_else(|| Error::invalid("no scan orders"))
}

/// Intermediate activations of one FSI-SSM evaluation.
#[derive(Debug, Clone, Copy)]
pub struct FsiTaps {
    /// `LN(F_in)`, `[H, W, C]`.
    pub f_l: Var,
    /// Amplitude fed to the Fourier scans: `[|S|, C]` for spectral orders,
    /// `[H*W, C]` for classic ones, in canonical set order.
    pub amplitude: Var,
    pub phase: Var,
    /// Gated Fourier-branch output `F_f`.
    pub fourier: Var,
    /// Gated spatial-branch output `F_s`.
    pub spatial: Var,
}

pub fn fsi_ssm_graph(
    g: &mut Graph,
    p: &BoundParams,
    prefix: &str,
    x: Var,
    cfg: &ModelConfig,
) -> Result<(Var, FsiTaps)> {
    let (h, w, c) = g.value(x).dims3()?;
    let f_l = g.layernorm(
        x,
        p.var(&format!("{prefix}.ln.gamma"))?,
        p.var(&format!("{prefix}.ln.beta"))?,
        LAYERNORM_EPS,
    )?;
    let gate = g.silu(f_l);

    let spec = g.fft2(f_l)?;
    let amp_st = p.seq_transform(&format!("{prefix}.amp"))?;
    let pha_st = p.seq_transform(&format!("{prefix}.pha"))?;
    let orders = cfg
        .fourier_scans
        .iter()
        .map(|&v| ScanOrder::build(v, h, w))
        .collect::<Result<Vec<_>>>()?;
    let (amplitude, phase, recon) = if cfg.classic_fourier() {
        let amp = g.amplitude(spec)?;
        let pha = g.phase(spec)?;
        let amplitude = g.reshape(amp, &[h * w, c])?;
        let phase = g.reshape(pha, &[h * w, c])?;
        let a = scan_sum(g, amplitude, &orders, &amp_st)?;
        let ph = scan_sum(g, phase, &orders, &pha_st)?;
        let z = g.polar(a, ph)?;
        let z = g.reshape(z, &[h, w, c, 2])?;
        (amplitude, phase, z)
    } else {
        let map = half_spectrum_map(h, w)?;
        let flat = g.reshape(spec, &[h * w, 2 * c])?;
        let half = g.gather_rows(flat, Arc::new(map.flat_index.clone()))?;
        let half = g.reshape(half, &[map.len(), c, 2])?;
        let amplitude = g.amplitude(half)?;
        let phase = g.phase(half)?;
        let a = scan_sum(g, amplitude, &orders, &amp_st)?;
        let ph = scan_sum(g, phase, &orders, &pha_st)?;
        let z = g.polar(a, ph)?;
        (amplitude, phase, g.hermitian_full(z, h, w)?)
    };
    let ff = g.ifft2_real(recon)?;
    let fourier = g.mul(ff, gate)?;

    let s_in = conv_graph(g, p, &format!("{prefix}.spa_in"), f_l, 1)?;
    let s_flat = g.reshape(s_in, &[h * w, c])?;
    let spatial_orders = super::config::ALL_CLASSIC
        .iter()
        .map(|&v| ScanOrder::build(v, h, w))
        .collect::<Result<Vec<_>>>()?;
    let spa_st = p.seq_transform(&format!("{prefix}.spa"))?;
    let s = scan_sum(g, s_flat, &spatial_orders, &spa_st)?;
    let s = g.reshape(s, &[h, w, c])?;
    let spatial = g.mul(s, gate)?;

    let both = g.concat(&[fourier, spatial], 2)?;
    let fused = conv_graph(g, p, &format!("{prefix}.fuse"), both, 1)?;
    let out = g.add(fused, x)?;
    Ok((
        out,
        FsiTaps {
            f_l,
            amplitude,
            phase,
            fourier,
            spatial,
        },
    ))
}

#[derive(Debug, Clone, Copy)]
pub struct FceTaps {
    /// Pooled feature `F_g`, `[1, 1, C]`.
    pub f_g: Var,
    /// Channel attention `F_a`, `[1, 1, C]`.
    pub f_a: Var,
}

fn chan_scan(g: &mut Graph, p: &BoundParams, prefix: &str, seq: Var, k: usize) -> Result<Var> {
    let col = g.reshape(seq, &[k, 1])?;
    let lifted = linear_graph(g, p, &format!("{prefix}.lift"), col)?;
    let st = p.seq_transform(&format!("{prefix}.st"))?;
    let t = seq_transform_graph(g, &st, lifted)?;
    let back = linear_graph(g, p, &format!("{prefix}.proj"), t)?;
    g.reshape(back, &[k])
}

pub fn fce_ssm_graph(
    g: &mut Graph,
    p: &BoundParams,
    prefix: &str,
    x: Var,
    _cfg: &ModelConfig,
) -> Result<(Var, FceTaps)> {
    let (_, _, c) = g.value(x).dims3()?;
    let order = ScanOrder::channel(c)?;
    let k = order.len();
    let f_g = g.global_avg_pool(x)?;
    let v = g.reshape(f_g, &[c])?;
    let spec = g.fft_channel(v)?;
    let half = g.gather_rows(spec, order.permutation_arc())?;
    let amp = g.amplitude(half)?;
    let pha = g.phase(half)?;
    let amp = chan_scan(g, p, &format!("{prefix}.amp"), amp, k)?;
    let pha = chan_scan(g, p, &format!("{prefix}.pha"), pha, k)?;
    let z = g.polar(amp, pha)?;
    let z = g.gather_rows(z, order.inverse_arc())?;
    let full = g.conj_extend(z, c)?;
    let att = g.ifft_channel_real(full)?;
    let att = g.reshape(att, &[1, 1, c])?;
    let gate = g.silu(f_g);
    let f_a = g.mul(att, gate)?;
    let out = g.scale_channels(x, f_a)?;
    Ok((out, FceTaps { f_g, f_a }))
}

pub fn frssb_graph(g: &mut Graph, p: &BoundParams, prefix: &str, x: Var, cfg: &ModelConfig) -> Result<Var> {
    let (y, _) = fsi_ssm_graph(g, p, &format!("{prefix}.fsi"), x, cfg)?;
    let (f, _) = fce_ssm_graph(g, p, &format!("{prefix}.fce"), y, cfg)?;
    let o = conv_graph(g, p, &format!("{prefix}.fce_out"), f, 1)?;
    g.add(y, o)
}

/// Values of an FSI-SSM evaluation.
#[derive(Debug, Clone)]
pub struct FsiTrace {
    pub output: Tensor,
    pub f_l: Tensor,
    pub amplitude: Tensor,
    pub phase: Tensor,
    pub fourier: Tensor,
    pub spatial: Tensor,
}

pub fn fsi_ssm_trace(x: &Tensor, store: &ParamStore, prefix: &str, cfg: &ModelConfig) -> Result<FsiTrace> {
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let xv = g.leaf(x.clone());
    let (out, t) = fsi_ssm_graph(&mut g, &p, prefix, xv, cfg)?;
    Ok(FsiTrace {
        output: g.value(out).clone(),
        f_l: g.value(t.f_l).clone(),
        amplitude: g.value(t.amplitude).clone(),
        phase: g.value(t.phase).clone(),
        fourier: g.value(t.fourier).clone(),
        spatial: g.value(t.spatial).clone(),
    })
}

/// `F_in [H, W, C] -> [H, W, C]`.
pub fn fsi_ssm(x: &Tensor, store: &ParamStore, prefix: &str, cfg: &ModelConfig) -> Result<Tensor> {
    Ok(fsi_ssm_trace(x, store, prefix, cfg)?.output)
}

#[derive(Debug, Clone)]
pub struct FceTrace {
    pub output: Tensor,
    pub f_g: Tensor,
    pub f_a: Tensor,
}

pub fn fce_ssm_trace(x: &Tensor, store: &ParamStore, prefix: &str, cfg: &ModelConfig) -> Result<FceTrace> {
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let xv = g.leaf(x.clone());
    let (out, t) = fce_ssm_graph(&mut g, &p, prefix, xv, cfg)?;
    Ok(FceTrace {
        output: g.value(out).clone(),
        f_g: g.value(t.f_g).clone(),
        f_a: g.value(t.f_a).clone(),
    })
}

/// `F_r [H, W, C] -> F_c [H, W, C]`; `C` must be an even power of two.
pub fn fce_ssm(x: &Tensor, store: &ParamStore, prefix: &str, cfg: &ModelConfig) -> Result<Tensor> {
    Ok(fce_ssm_trace(x, store, prefix, cfg)?.output)
}

pub fn frssb(x: &Tensor, store: &ParamStore, prefix: &str, cfg: &ModelConfig) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let xv = g.leaf(x.clone());
    let out = frssb_graph(&mut g, &p, prefix, xv, cfg)?;
    Ok(g.value(out).clone())
}
