//! Reverse-mode automatic differentiation over a closed set of tensor ops.
//!
//! A [`Graph`] is an append-only tape: every op evaluates eagerly, records
//! its inputs, and returns a [`Var`] handle. Because inputs always precede
//! outputs on the tape, walking it backwards is a reverse topological order,
//! and [`Graph::backward`] visits each reachable node exactly once.
//!
//! ```
//! use fouriermamba::autodiff::Graph;
//! use fouriermamba::Tensor;
//!
//! let mut g = Graph::new();
//! let x = g.leaf(Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
//! let y = g.leaf(Tensor::new(&[3], vec![4.0, 5.0, 6.0]).unwrap());
//! let xy = g.mul(x, y).unwrap();
//! let root = g.sum(xy);
//! let grads = g.backward(root).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[4.0, 5.0, 6.0]);
//! ```

mod gradcheck;

use std::sync::Arc;

pub use gradcheck::{grad_check, rel_error, GradCheckEntry, GradCheckReport, FD_STEP};

use crate::error::{Error, Result};
use crate::fourier::{self, HalfSpectrumMap};
use crate::ops::{self, Padding};
use crate::ssm;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    Softplus(Var),
    Exp(Var),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: Padding,
    },
    DwConv1d {
        x: Var,
        w: Var,
        b: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    GlobalAvgPool(Var),
    ScaleChannels {
        x: Var,
        s: Var,
    },
    Reshape(Var),
    GatherRows {
        x: Var,
        idx: Arc<Vec<usize>>,
    },
    Upsample2x(Var),
    Fft2(Var),
    Ifft2Real(Var),
    Amplitude(Var),
    Phase(Var),
    Polar {
        amp: Var,
        phase: Var,
    },
    FftChannel(Var),
    IfftChannelReal(Var),
    HermitianFull {
        half: Var,
        map: Arc<HalfSpectrumMap>,
    },
    ConjExtend {
        half: Var,
        c: usize,
    },
    SelectiveScan {
        u: Var,
        delta: Var,
        a: Var,
        b: Var,
        c: Var,
        d: Var,
        states: Vec<f64>,
    },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) => vec![*a, *b],
            Scale(a, _)
            | Silu(a)
            | Softplus(a)
            | Exp(a)
            | Abs(a)
            | Sum(a)
            | Mean(a)
            | GlobalAvgPool(a)
            | Reshape(a)
            | Upsample2x(a)
            | Fft2(a)
            | Ifft2Real(a)
            | Amplitude(a)
            | Phase(a)
            | FftChannel(a)
            | IfftChannelReal(a) => vec![*a],
            LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Conv2d { x, w, b, .. } | DwConv1d { x, w, b } => vec![*x, *w, *b],
            Linear { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Concat { xs, .. } => xs.clone(),
            ScaleChannels { x, s } => vec![*x, *s],
            GatherRows { x, .. } => vec![*x],
            Polar { amp, phase } => vec![*amp, *phase],
            HermitianFull { half, .. } | ConjExtend { half, .. } => vec![*half],
            SelectiveScan {
                u, delta, a, b, c, d, ..
            } => vec![*u, *delta, *a, *b, *c, *d],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Amplitudes below this are treated as this value in the polar-coordinate
/// Jacobians.
pub const AMPLITUDE_FLOOR: f64 = 1e-12;

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node it depends on.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when the root does not
    /// depend on it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::from_parts_unchecked(like.shape().to_vec(), vec![0.0; like.len()]))
    }
}

fn complex_last(t: &Tensor, what: &str) -> Result<()> {
    if t.rank() < 2 || *t.shape().last().unwrap() != 2 {
        return Err(Error::shape(format!(
            "{what} expects a trailing complex axis of 2, got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).scale(k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = ops::silu(self.value(a));
        self.push(v, Op::Silu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = ops::softplus(self.value(a));
        self.push(v, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).mean());
        self.push(v, Op::Mean(a))
    }

    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let v = ops::layernorm(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(v, Op::LayerNorm { x, gamma, beta, eps }))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: Padding) -> Result<Var> {
        let v = ops::conv2d(self.value(x), self.value(w), self.value(b), stride, padding)?;
        Ok(self.push(
            v,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                padding,
            },
        ))
    }

    pub fn dwconv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let v = ops::dwconv1d(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(v, Op::DwConv1d { x, w, b }))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let v = ops::linear(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        Ok(self.push(v, Op::Linear { x, w, b }))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let vals: Vec<&Tensor> = xs.iter().map(|&x| self.value(x)).collect();
        let v = ops::concat(&vals, axis)?;
        Ok(self.push(v, Op::Concat { xs: xs.to_vec(), axis }))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let v = ops::global_avg_pool(self.value(x))?;
        Ok(self.push(v, Op::GlobalAvgPool(x)))
    }

    /// `x: [H, W, C]` times `s: [1, 1, C]` broadcast over pixels.
    pub fn scale_channels(&mut self, x: Var, s: Var) -> Result<Var> {
        let v = ops::scale_channels(self.value(x), self.value(s))?;
        Ok(self.push(v, Op::ScaleChannels { x, s }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(x)))
    }

    /// Row gather on a rank-2 `[n, F]` tensor: `out[i] = x[idx[i]]`.
    pub fn gather_rows(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let (n, f) = self.value(x).dims2()?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::shape(format!("row index {bad} out of range for {n} rows")));
        }
        if idx.is_empty() {
            return Err(Error::shape("gather of zero rows"));
        }
        let v = crate::scan::gather_rows(self.value(x).data(), f, &idx);
        Ok(self.push(v, Op::GatherRows { x, idx }))
    }

    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let v = ops::upsample_nearest2x(self.value(x))?;
        Ok(self.push(v, Op::Upsample2x(x)))
    }

    /// Unitary 2D DFT of a real `[H, W, C]`; output `[H, W, C, 2]`.
    pub fn fft2(&mut self, x: Var) -> Result<Var> {
        let v = fourier::fft2_interleaved(self.value(x))?;
        Ok(self.push(v, Op::Fft2(x)))
    }

    /// Real part of the unitary inverse 2D DFT of `[H, W, C, 2]`.
    pub fn ifft2_real(&mut self, s: Var) -> Result<Var> {
        let full = fourier::fft2_complex_interleaved(self.value(s), true)?;
        let mut shape = full.shape().to_vec();
        shape.pop();
        let re = full.data().iter().step_by(2).copied().collect();
        Ok(self.push(Tensor::from_parts_unchecked(shape, re), Op::Ifft2Real(s)))
    }

    /// Modulus of a `[.., 2]` complex tensor.
    pub fn amplitude(&mut self, s: Var) -> Result<Var> {
        complex_last(self.value(s), "amplitude")?;
        let t = self.value(s);
        let mut shape = t.shape().to_vec();
        shape.pop();
        let v = t.data().chunks_exact(2).map(|p| p[0].hypot(p[1])).collect();
        Ok(self.push(Tensor::from_parts_unchecked(shape, v), Op::Amplitude(s)))
    }

    /// Argument in `(-pi, pi]` of a `[.., 2]` complex tensor.
    pub fn phase(&mut self, s: Var) -> Result<Var> {
        complex_last(self.value(s), "phase")?;
        let t = self.value(s);
        let mut shape = t.shape().to_vec();
        shape.pop();
        let v = t
            .data()
            .chunks_exact(2)
            .map(|p| fourier::phase_of(p[0], p[1]))
            .collect();
        Ok(self.push(Tensor::from_parts_unchecked(shape, v), Op::Phase(s)))
    }

    /// `(A cos P, A sin P)` with a new trailing complex axis.
    pub fn polar(&mut self, amp: Var, phase: Var) -> Result<Var> {
        let (a, p) = (self.value(amp), self.value(phase));
        a.expect_same_shape(p, "polar")?;
        let mut shape = a.shape().to_vec();
        shape.push(2);
        let mut v = Vec::with_capacity(2 * a.len());
        for (&r, &t) in a.data().iter().zip(p.data()) {
            v.push(r * t.cos());
            v.push(r * t.sin());
        }
        Ok(self.push(Tensor::from_parts_unchecked(shape, v), Op::Polar { amp, phase }))
    }

    /// Channel-axis DFT (`1/C` scaled) along the last axis: `[.., C] -> [.., C, 2]`.
    pub fn fft_channel(&mut self, x: Var) -> Result<Var> {
        let v = fourier::fft_last_axis_interleaved(self.value(x))?;
        Ok(self.push(v, Op::FftChannel(x)))
    }

    /// Real part of the unscaled inverse channel DFT: `[.., C, 2] -> [.., C]`.
    pub fn ifft_channel_real(&mut self, s: Var) -> Result<Var> {
        let full = fourier::dft_last_axis_complex(self.value(s), true)?;
        let mut shape = full.shape().to_vec();
        shape.pop();
        let re = full.data().iter().step_by(2).copied().collect();
        Ok(self.push(Tensor::from_parts_unchecked(shape, re), Op::IfftChannelReal(s)))
    }

    /// Full `[H, W, C, 2]` spectrum from `[|S|, C, 2]` half-spectrum values.
    pub fn hermitian_full(&mut self, half: Var, h: usize, w: usize) -> Result<Var> {
        let map = fourier::half_spectrum_map(h, w)?;
        let t = self.value(half);
        match t.shape() {
            [n, _, 2] if *n == map.len() => {}
            s => {
                return Err(Error::shape(format!(
                    "half spectrum for {h}x{w} must be [{}, C, 2], got {s:?}",
                    map.len()
                )))
            }
        }
        let v = fourier::hermitian_full_interleaved(&map, t);
        Ok(self.push(v, Op::HermitianFull { half, map }))
    }

    /// Conjugate extension of `[C/2 + 1, 2]` channel bins to `[C, 2]`;
    /// bins 0 and `C/2` lose their imaginary part.
    pub fn conj_extend(&mut self, half: Var, c: usize) -> Result<Var> {
        let t = self.value(half);
        if c < 2 || !c.is_multiple_of(2) || t.shape() != [c / 2 + 1, 2] {
            return Err(Error::shape(format!(
                "conj_extend to {c} bins needs [{}, 2], got {:?}",
                c / 2 + 1,
                t.shape()
            )));
        }
        let d = t.data();
        let mut v = Vec::with_capacity(2 * c);
        for z in 0..c {
            let (src, sign) = if z <= c / 2 { (z, 1.0) } else { (c - z, -1.0) };
            v.push(d[2 * src]);
            v.push(if src == 0 || src == c / 2 {
                0.0
            } else {
                sign * d[2 * src + 1]
            });
        }
        Ok(self.push(Tensor::from_parts_unchecked(vec![c, 2], v), Op::ConjExtend { half, c }))
    }

    /// Selective scan on projected inputs; see [`crate::ssm`].
    pub fn selective_scan(&mut self, u: Var, delta: Var, a: Var, b: Var, c: Var, d: Var) -> Result<Var> {
        let (y, states) = ssm::scan_core(
            self.value(u),
            self.value(delta),
            self.value(a),
            self.value(b),
            self.value(c),
            self.value(d),
        )?;
        Ok(self.push(
            y,
            Op::SelectiveScan {
                u,
                delta,
                a,
                b,
                c,
                d,
                states,
            },
        ))
    }

    /// Gradients of the scalar `root` with respect to every node it reaches.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let n = root.0 + 1;
        if self.value(root).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut reachable = vec![false; n];
        reachable[root.0] = true;
        for i in (0..n).rev() {
            if reachable[i] {
                for p in self.nodes[i].op.parents() {
                    reachable[p.0] = true;
                }
            }
        }
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[root.0] = Some(Tensor::from_parts_unchecked(
            self.value(root).shape().to_vec(),
            vec![1.0],
        ));
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            for (p, pg) in self.vjp(i, &g) {
                if !reachable[p.0] {
                    continue;
                }
                match &mut grads[p.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot => *slot = Some(pg),
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn vjp(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        use Op::*;
        let val = |v: Var| self.value(v);
        let like = |v: Var, data: Vec<f64>| Tensor::from_parts_unchecked(val(v).shape().to_vec(), data);
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Leaf => vec![],
            Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-1.0))],
            Mul(a, b) => vec![(*a, g.mul(val(*b)).unwrap()), (*b, g.mul(val(*a)).unwrap())],
            Scale(a, k) => vec![(*a, g.scale(*k))],
            Silu(a) => vec![(*a, val(*a).zip_map(g, |x, gv| gv * ops::silu_grad(x)).unwrap())],
            Softplus(a) => vec![(*a, val(*a).zip_map(g, |x, gv| gv * ops::sigmoid(x)).unwrap())],
            Exp(a) => vec![(*a, out.mul(g).unwrap())],
            Abs(a) => vec![(
                *a,
                val(*a)
                    .zip_map(g, |x, gv| gv * x.signum() * (x != 0.0) as u8 as f64)
                    .unwrap(),
            )],
            Sum(a) => vec![(*a, like(*a, vec![g.data()[0]; val(*a).len()]))],
            Mean(a) => {
                let n = val(*a).len();
                vec![(*a, like(*a, vec![g.data()[0] / n as f64; n]))]
            }
            LayerNorm { x, gamma, beta, eps } => {
                let (gx, gg, gb) = ops::layernorm_vjp(val(*x), val(*gamma), *eps, g);
                vec![(*x, gx), (*gamma, gg), (*beta, gb)]
            }
            Conv2d {
                x,
                w,
                b,
                stride,
                padding,
            } => {
                let (gx, gw, gb) = ops::conv2d_vjp(val(*x), val(*w), val(*b), *stride, *padding, g);
                vec![(*x, gx), (*w, gw), (*b, gb)]
            }
            DwConv1d { x, w, b } => {
                let (gx, gw, gb) = ops::dwconv1d_vjp(val(*x), val(*w), g);
                vec![(*x, gx), (*w, gw), (*b, gb)]
            }
            Linear { x, w, b } => {
                let (gx, gw, gb) = ops::linear_vjp(val(*x), val(*w), g);
                let mut v = vec![(*x, gx), (*w, gw)];
                if let Some(b) = b {
                    v.push((*b, gb));
                }
                v
            }
            Concat { xs, axis } => {
                let shapes: Vec<Vec<usize>> = xs.iter().map(|x| val(*x).shape().to_vec()).collect();
                xs.iter().copied().zip(ops::concat_vjp(&shapes, *axis, g)).collect()
            }
            GlobalAvgPool(x) => {
                let (h, w, c) = val(*x).dims3().unwrap();
                let k = 1.0 / (h * w) as f64;
                let data = (0..h * w * c).map(|j| g.data()[j % c] * k).collect();
                vec![(*x, like(*x, data))]
            }
            ScaleChannels { x, s } => {
                let c = val(*s).len();
                let gx = ops::scale_channels(g, val(*s)).unwrap();
                let mut gs = vec![0.0; c];
                for (px, gp) in val(*x).data().chunks_exact(c).zip(g.data().chunks_exact(c)) {
                    for k in 0..c {
                        gs[k] += px[k] * gp[k];
                    }
                }
                vec![(*x, gx), (*s, like(*s, gs))]
            }
            Reshape(x) => vec![(*x, like(*x, g.data().to_vec()))],
            GatherRows { x, idx } => {
                let (_, f) = val(*x).dims2().unwrap();
                let mut gx = vec![0.0; val(*x).len()];
                for (row, &src) in idx.iter().enumerate() {
                    for k in 0..f {
                        gx[src * f + k] += g.data()[row * f + k];
                    }
                }
                vec![(*x, like(*x, gx))]
            }
            Upsample2x(x) => vec![(*x, ops::upsample_nearest2x_vjp(val(*x).shape(), g))],
            Fft2(x) => {
                // x real: grad = Re(U^H (g_re + i g_im))
                let back = fourier::fft2_complex_interleaved(g, true).unwrap();
                vec![(*x, like(*x, back.data().iter().step_by(2).copied().collect()))]
            }
            Ifft2Real(s) => {
                let mut gc = Vec::with_capacity(2 * g.len());
                for &v in g.data() {
                    gc.push(v);
                    gc.push(0.0);
                }
                let gc = Tensor::from_parts_unchecked(val(*s).shape().to_vec(), gc);
                vec![(*s, fourier::fft2_complex_interleaved(&gc, false).unwrap())]
            }
            Amplitude(s) => {
                let mut gs = Vec::with_capacity(2 * g.len());
                for (p, &gv) in val(*s).data().chunks_exact(2).zip(g.data()) {
                    let a = p[0].hypot(p[1]).max(AMPLITUDE_FLOOR);
                    gs.push(gv * p[0] / a);
                    gs.push(gv * p[1] / a);
                }
                vec![(*s, like(*s, gs))]
            }
            Phase(s) => {
                let mut gs = Vec::with_capacity(2 * g.len());
                for (p, &gv) in val(*s).data().chunks_exact(2).zip(g.data()) {
                    let a2 = (p[0] * p[0] + p[1] * p[1]).max(AMPLITUDE_FLOOR * AMPLITUDE_FLOOR);
                    gs.push(-gv * p[1] / a2);
                    gs.push(gv * p[0] / a2);
                }
                vec![(*s, like(*s, gs))]
            }
            Polar { amp, phase } => {
                let (a, p) = (val(*amp), val(*phase));
                let mut ga = Vec::with_capacity(a.len());
                let mut gp = Vec::with_capacity(a.len());
                for ((&r, &t), gz) in a.data().iter().zip(p.data()).zip(g.data().chunks_exact(2)) {
                    let (s, c) = t.sin_cos();
                    ga.push(gz[0] * c + gz[1] * s);
                    gp.push(r * (-gz[0] * s + gz[1] * c));
                }
                vec![(*amp, like(*amp, ga)), (*phase, like(*phase, gp))]
            }
            FftChannel(x) => {
                let c = *val(*x).shape().last().unwrap();
                let back = fourier::dft_last_axis_complex(g, true).unwrap();
                let k = 1.0 / c as f64;
                vec![(*x, like(*x, back.data().iter().step_by(2).map(|v| v * k).collect()))]
            }
            IfftChannelReal(s) => {
                let mut gc = Vec::with_capacity(2 * g.len());
                for &v in g.data() {
                    gc.push(v);
                    gc.push(0.0);
                }
                let gc = Tensor::from_parts_unchecked(val(*s).shape().to_vec(), gc);
                vec![(*s, fourier::dft_last_axis_complex(&gc, false).unwrap())]
            }
            HermitianFull { half, map } => {
                let c = val(*half).shape()[1];
                vec![(*half, fourier::hermitian_full_vjp(map, g, c))]
            }
            ConjExtend { half, c } => {
                let c = *c;
                let mut gh = vec![0.0; 2 * (c / 2 + 1)];
                for z in 0..c {
                    let (src, sign) = if z <= c / 2 { (z, 1.0) } else { (c - z, -1.0) };
                    gh[2 * src] += g.data()[2 * z];
                    if src != 0 && src != c / 2 {
                        gh[2 * src + 1] += sign * g.data()[2 * z + 1];
                    }
                }
                vec![(*half, like(*half, gh))]
            }
            SelectiveScan {
                u,
                delta,
                a,
                b,
                c,
                d,
                states,
            } => {
                let gr = ssm::scan_core_vjp(val(*u), val(*delta), val(*a), val(*b), val(*c), val(*d), states, g);
                vec![
                    (*u, gr.u),
                    (*delta, gr.delta),
                    (*a, gr.a),
                    (*b, gr.b),
                    (*c, gr.c),
                    (*d, gr.d),
                ]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_fn(&[2, 3], |i| i as f64).unwrap());
        let s = g.sum(x);
        let gr = g.backward(s).unwrap();
        assert_eq!(gr.get(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[2]).unwrap());
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // f = sum(x * x) -> 2x
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap());
        let xx = g.mul(x, x).unwrap();
        let s = g.sum(xx);
        let gr = g.backward(s).unwrap();
        assert_eq!(gr.get(x).unwrap().data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn unreachable_nodes_have_no_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[2]).unwrap());
        let y = g.leaf(Tensor::zeros(&[2]).unwrap());
        let s = g.sum(x);
        let _later = g.sum(y);
        let gr = g.backward(s).unwrap();
        assert!(gr.get(y).is_none());
        assert_eq!(gr.get_or_zeros(y, g.value(y)).data(), &[0.0, 0.0]);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[2, 3]).unwrap());
        let y = g.leaf(Tensor::zeros(&[3, 2]).unwrap());
        assert!(g.mul(x, y).is_err());
        assert!(g.add(x, y).is_err());
    }
}
