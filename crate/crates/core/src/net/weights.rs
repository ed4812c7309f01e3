use std::io::{BufRead, Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use super::config::ModelConfig;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::ssm::{SeqTransformVars, SeqTransformWeights, SsmParams};
use crate::tensor::Tensor;

const MAGIC: &str = "fouriermamba-weights v1";

/// Named parameter tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!("invalid parameter name {name:?}")));
        }
        if self.params.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter {name}")));
        }
        self.params.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.values_mut()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(Tensor::all_finite)
    }

    pub fn insert_seq_transform(&mut self, prefix: &str, w: SeqTransformWeights) -> Result<()> {
        self.insert(format!("{prefix}.conv_w"), w.conv_w)?;
        self.insert(format!("{prefix}.conv_b"), w.conv_b)?;
        self.insert(format!("{prefix}.a_log"), w.ssm.a_log)?;
        self.insert(format!("{prefix}.d"), w.ssm.d)?;
        self.insert(format!("{prefix}.w_b"), w.ssm.w_b)?;
        self.insert(format!("{prefix}.w_c"), w.ssm.w_c)?;
        self.insert(format!("{prefix}.w_delta"), w.ssm.w_delta)?;
        self.insert(format!("{prefix}.b_delta"), w.ssm.b_delta)?;
        self.insert(format!("{prefix}.ln_gamma"), w.ln_gamma)?;
        self.insert(format!("{prefix}.ln_beta"), w.ln_beta)
    }

    pub fn seq_transform(&self, prefix: &str) -> Result<SeqTransformWeights> {
        let get = |k: &str| self.get(&format!("{prefix}.{k}")).cloned();
        Ok(SeqTransformWeights {
            conv_w: get("conv_w")?,
            conv_b: get("conv_b")?,
            ssm: SsmParams {
                a_log: get("a_log")?,
                d: get("d")?,
                w_b: get("w_b")?,
                w_c: get("w_c")?,
                w_delta: get("w_delta")?,
                b_delta: get("b_delta")?,
            },
            ln_gamma: get("ln_gamma")?,
            ln_beta: get("ln_beta")?,
        })
    }

    /// Registers every parameter as a graph leaf.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        BoundParams {
            vars: self
                .params
                .iter()
                .map(|(k, t)| (k.clone(), g.leaf(t.clone())))
                .collect(),
        }
    }
}

/// Graph leaves for a [`ParamStore`], same names and order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    /// Pairs names with existing graph handles.
    pub fn from_pairs<I: IntoIterator<Item = (String, Var)>>(pairs: I) -> Self {
        Self {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn seq_transform(&self, prefix: &str) -> Result<SeqTransformVars> {
        let v = |k: &str| self.var(&format!("{prefix}.{k}"));
        Ok(SeqTransformVars {
            conv_w: v("conv_w")?,
            conv_b: v("conv_b")?,
            a_log: v("a_log")?,
            d: v("d")?,
            w_b: v("w_b")?,
            w_c: v("w_c")?,
            w_delta: v("w_delta")?,
            b_delta: v("b_delta")?,
            ln_gamma: v("ln_gamma")?,
            ln_beta: v("ln_beta")?,
        })
    }
}

/// A model configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub params: ParamStore,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl ModelWeights {
    /// Container layout: a UTF-8 manifest
    ///
    /// ```text
    /// fouriermamba-weights v1
    /// config <space-separated key=value pairs>
    /// param <name> <d0>x<d1>x... <byte offset>
    /// ...
    /// end
    /// ```
    ///
    /// followed by every tensor as little-endian `f64`, offsets relative to
    /// the first byte after `end\n`.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut manifest = format!("{MAGIC}\nconfig {}\n", encode_config(&self.config));
        let mut offset = 0usize;
        for (name, t) in self.params.iter() {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            manifest.push_str(&format!("param {name} {} {offset}\n", dims.join("x")));
            offset += 8 * t.len();
        }
        manifest.push_str("end\n");
        let io = |e| Error::io("<weights>", e);
        out.write_all(manifest.as_bytes()).map_err(io)?;
        let mut buf = Vec::with_capacity(offset);
        for (_, t) in self.params.iter() {
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(io)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = std::io::BufReader::new(input);
        let mut line = String::new();
        let mut next_line = |r: &mut std::io::BufReader<R>| -> Result<String> {
            line.clear();
            let n = r.read_line(&mut line).map_err(|e| Error::io("<weights>", e))?;
            if n == 0 {
                return Err(format_err("truncated manifest"));
            }
            Ok(line.trim_end_matches('\n').to_string())
        };
        if next_line(&mut r)? != MAGIC {
            return Err(format_err("not a fouriermamba weights file"));
        }
        let cfg_line = next_line(&mut r)?;
        let config = decode_config(
            cfg_line
                .strip_prefix("config ")
                .ok_or_else(|| format_err("missing config line"))?,
        )?;
        let mut entries = Vec::new();
        loop {
            let l = next_line(&mut r)?;
            if l == "end" {
                break;
            }
            let parts: Vec<&str> = l.split(' ').collect();
            let [kind, name, dims, off] = parts[..] else {
                return Err(format_err(format!("bad manifest line {l:?}")));
            };
            if kind != "param" {
                return Err(format_err(format!("bad manifest line {l:?}")));
            }
            let shape = dims
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| format_err(format!("bad shape {dims:?}")))?;
            let off: usize = off.parse().map_err(|_| format_err(format!("bad offset {off:?}")))?;
            entries.push((name.to_string(), shape, off));
        }
        let mut data = Vec::new();
        r.read_to_end(&mut data).map_err(|e| Error::io("<weights>", e))?;
        let mut params = ParamStore::new();
        let mut expected = 0usize;
        for (name, shape, off) in entries {
            if off != expected {
                return Err(format_err(format!(
                    "parameter {name} at offset {off}, expected {expected}"
                )));
            }
            let n: usize = shape.iter().product();
            let end = off + 8 * n;
            let bytes = data
                .get(off..end)
                .ok_or_else(|| format_err(format!("data for {name} is truncated")))?;
            let vals = bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            params.insert(name, Tensor::new(&shape, vals)?)?;
            expected = end;
        }
        if expected != data.len() {
            return Err(format_err(format!("{} trailing bytes", data.len() - expected)));
        }
        Ok(Self { config, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f)
    }
}

fn encode_config(c: &ModelConfig) -> String {
    let join = |xs: Vec<String>| xs.join(",");
    format!(
        "base_channels={} blocks={} state_size={} conv_taps={} channel_lift={} fourier_scans={} lambda={:e} in_channels={}",
        c.base_channels,
        join(c.blocks.iter().map(usize::to_string).collect()),
        c.state_size,
        c.conv_taps,
        c.channel_lift,
        join(c.fourier_scans.iter().map(|v| v.name().to_string()).collect()),
        c.lambda,
        c.in_channels
    )
}

fn decode_config(s: &str) -> Result<ModelConfig> {
    let mut c = ModelConfig::default();
    let num = |k: &str, v: &str| v.parse::<usize>().map_err(|_| format_err(format!("bad {k}: {v:?}")));
    for kv in s.split(' ') {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format_err(format!("bad config field {kv:?}")))?;
        match k {
            "base_channels" => c.base_channels = num(k, v)?,
            "blocks" => c.blocks = v.split(',').map(|x| num(k, x)).collect::<Result<_>>()?,
            "state_size" => c.state_size = num(k, v)?,
            "conv_taps" => c.conv_taps = num(k, v)?,
            "channel_lift" => c.channel_lift = num(k, v)?,
            "fourier_scans" => c.fourier_scans = v.split(',').map(str::parse).collect::<Result<_>>()?,
            "lambda" => c.lambda = v.parse().map_err(|_| format_err(format!("bad lambda: {v:?}")))?,
            "in_channels" => c.in_channels = num(k, v)?,
            _ => return Err(format_err(format!("unknown config field {k}"))),
        }
    }
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelWeights {
        let mut params = ParamStore::new();
        params
            .insert(
                "a.w",
                Tensor::new(&[2, 2], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap(),
            )
            .unwrap();
        params
            .insert("b", Tensor::new(&[1], vec![std::f64::consts::PI]).unwrap())
            .unwrap();
        ModelWeights {
            config: ModelConfig::minimal(),
            params,
        }
    }

    #[test]
    fn container_roundtrip_is_bit_exact() {
        let w = sample();
        let mut buf = Vec::new();
        w.write_to(&mut buf).unwrap();
        let back = ModelWeights::read_from(&buf[..]).unwrap();
        assert_eq!(back.config, w.config);
        for ((n1, t1), (n2, t2)) in w.params.iter().zip(back.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn corrupt_containers_rejected() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        assert!(ModelWeights::read_from(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(ModelWeights::read_from(&extra[..]).is_err());
        assert!(ModelWeights::read_from(&b"hello\n"[..]).is_err());
    }

    #[test]
    fn store_rejects_duplicates_and_bad_names() {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::scalar(1.0)).unwrap();
        assert!(s.insert("x", Tensor::scalar(2.0)).is_err());
        assert!(s.insert("has space", Tensor::scalar(2.0)).is_err());
        assert!(s.get("y").is_err());
    }
}
