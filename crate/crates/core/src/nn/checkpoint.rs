//! Model files: `MSEP`, version, configuration block, then every layer's
//! weights (row-major, `fan_in × fan_out`) and biases as little-endian f32.
//!
//! Configuration block: output activation (u8: 0 sigmoid, 1 linear),
//! target (u8: 0 ibm, 1 irm, 2 cirm, 3 psm, 4 orm, 255 none), dropout rate
//! (f64), seed (u64), layer count + 1 (u32) and each dimension (u32), epochs
//! seen (u32), final training and validation loss (f64).

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, Layer, Mlp, ModelConfig, NnError, TrainingMeta};
use crate::masks::TargetKind;

pub const MAGIC: &[u8; 4] = b"MSEP";
pub const VERSION: u32 = 1;
const NO_TARGET: u8 = 255;
/// Guards against absurd allocations from corrupt headers.
const MAX_DIM: u32 = 1 << 20;

fn target_code(t: Option<TargetKind>) -> u8 {
    match t {
        None => NO_TARGET,
        Some(k) => TargetKind::ALL.iter().position(|&x| x == k).unwrap() as u8,
    }
}

pub fn encode_model(m: &Mlp<f32>) -> Vec<u8> {
    let c = &m.config;
    let mut out = Vec::with_capacity(64 + 4 * m.num_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match c.output_activation {
        Activation::Sigmoid => 0,
        Activation::Linear => 1,
    });
    out.push(target_code(c.target));
    out.extend_from_slice(&c.dropout_rate.to_le_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&(c.layer_dims.len() as u32).to_le_bytes());
    for &d in &c.layer_dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&m.meta.epochs_seen.to_le_bytes());
    out.extend_from_slice(&m.meta.train_loss.to_le_bytes());
    out.extend_from_slice(&m.meta.val_loss.to_le_bytes());
    for layer in &m.layers {
        for v in layer.weights.iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated while reading {what} at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8, String> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, String> {
        let raw = self.take(n.checked_mul(4).ok_or("size overflow")?, what)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_model(bytes: &[u8], path: &str) -> Result<Mlp<f32>, NnError> {
    decode(bytes).map_err(|reason| NnError::Checkpoint { path: path.into(), reason })
}

fn decode(bytes: &[u8]) -> Result<Mlp<f32>, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err("not a model file (bad magic)".into());
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(format!("unsupported model version {version} (expected {VERSION})"));
    }
    let output_activation = match r.u8("activation")? {
        0 => Activation::Sigmoid,
        1 => Activation::Linear,
        a => return Err(format!("unknown output activation code {a}")),
    };
    let target = match r.u8("target")? {
        NO_TARGET => None,
        k => Some(*TargetKind::ALL.get(k as usize).ok_or_else(|| format!("unknown target code {k}"))?),
    };
    let dropout_rate = r.f64("dropout rate")?;
    let seed = r.u64("seed")?;
    let n_dims = r.u32("layer count")?;
    if !(2..=64).contains(&n_dims) {
        return Err(format!("implausible layer count {n_dims}"));
    }
    let mut layer_dims = Vec::with_capacity(n_dims as usize);
    for _ in 0..n_dims {
        let d = r.u32("layer dimension")?;
        if d == 0 || d > MAX_DIM {
            return Err(format!("implausible layer dimension {d}"));
        }
        layer_dims.push(d as usize);
    }
    let meta = TrainingMeta { epochs_seen: r.u32("epochs")?, train_loss: r.f64("train loss")?, val_loss: r.f64("val loss")? };
    let mut layers = Vec::new();
    for d in layer_dims.windows(2) {
        let weights = Array2::from_shape_vec((d[0], d[1]), r.f32s(d[0] * d[1], "weights")?).expect("sized");
        let bias = Array1::from(r.f32s(d[1], "biases")?);
        layers.push(Layer { weights, bias });
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes after the last layer", bytes.len() - r.pos));
    }
    let config = ModelConfig { layer_dims, output_activation, dropout_rate, seed, target };
    config.validate().map_err(|e| e.to_string())?;
    let model = Mlp { layers, config, meta };
    if !model.is_finite() {
        return Err("non-finite parameters".into());
    }
    Ok(model)
}

pub fn save_model(path: &Path, m: &Mlp<f32>) -> Result<(), NnError> {
    fs::write(path, encode_model(m)).map_err(|source| NnError::Io { path: path.display().to_string(), source })
}

pub fn load_model(path: &Path) -> Result<Mlp<f32>, NnError> {
    let bytes = fs::read(path).map_err(|source| NnError::Io { path: path.display().to_string(), source })?;
    decode_model(&bytes, &path.display().to_string())
}
