//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! b"GAPLM"  version:u8
//! config_len:u32  config JSON (LmConfig)
//! tensor_count:u32
//! repeated: name_len:u16 name  ndim:u8  dims:u32 * ndim  f32 * prod(dims)
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{LmConfig, LmError, LmParameters, LstmLayer, Result};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"GAPLM";
pub const CHECKPOINT_VERSION: u8 = 1;

pub fn encode_checkpoint(config: &LmConfig, params: &LmParameters<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * params.num_parameters());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    let json = serde_json::to_vec(config).expect("config serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!("truncated at byte {}", self.pos)),
        }
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

type Tensor = (String, Vec<usize>, Vec<f32>);

fn parse(buf: &[u8]) -> std::result::Result<(LmConfig, Vec<Tensor>), String> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(5)? != CHECKPOINT_MAGIC {
        return Err("not a GAPLM checkpoint".into());
    }
    let version = r.u8()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let len = r.u32()? as usize;
    let config: LmConfig = serde_json::from_slice(r.take(len)?).map_err(|e| format!("config: {e}"))?;
    let count = r.u32()?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| "tensor name is not UTF-8")?;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let bytes = r.take(n.checked_mul(4).ok_or("tensor too large")?)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, shape, data));
    }
    if r.pos != buf.len() {
        return Err(format!("{} trailing bytes", buf.len() - r.pos));
    }
    Ok((config, tensors))
}

fn next_tensor(
    it: &mut impl Iterator<Item = Tensor>,
    want: &str,
    ndim: usize,
) -> std::result::Result<(Vec<usize>, Vec<f32>), String> {
    let (name, shape, data) = it.next().ok_or_else(|| format!("missing tensor {want}"))?;
    if name != want || shape.len() != ndim {
        return Err(format!("expected {ndim}-d tensor {want}, found {name} with shape {shape:?}"));
    }
    Ok((shape, data))
}

fn matrix(it: &mut impl Iterator<Item = Tensor>, want: &str) -> std::result::Result<Array2<f32>, String> {
    let (shape, data) = next_tensor(it, want, 2)?;
    Array2::from_shape_vec((shape[0], shape[1]), data).map_err(|e| e.to_string())
}

fn assemble(config: &LmConfig, tensors: Vec<Tensor>) -> std::result::Result<LmParameters<f32>, String> {
    let mut it = tensors.into_iter();
    let it = &mut it;
    let embedding = matrix(it, "embedding")?;
    let mut layers = Vec::with_capacity(config.num_layers);
    for l in 0..config.num_layers {
        let w_ih = matrix(it, &format!("lstm.{l}.w_ih"))?;
        let w_hh = matrix(it, &format!("lstm.{l}.w_hh"))?;
        let (_, bias) = next_tensor(it, &format!("lstm.{l}.bias"), 1)?;
        layers.push(LstmLayer {
            w_ih,
            w_hh,
            bias: Array1::from(bias),
        });
    }
    let out_w = matrix(it, "output.weight")?;
    let (_, out_b) = next_tensor(it, "output.bias", 1)?;
    if it.next().is_some() {
        return Err("unexpected extra tensors".into());
    }
    let params = LmParameters {
        embedding,
        layers,
        out_w,
        out_b: Array1::from(out_b),
    };
    let (v, e, h) = (params.vocab_size(), config.embed_dim, config.hidden_dim);
    let shapes_ok = params.embed_dim() == e
        && params.hidden_dim() == h
        && params.out_b.len() == v
        && params.out_w.ncols() == v
        && params.layers.iter().enumerate().all(|(l, layer)| {
            layer.w_ih.dim() == (if l == 0 { e } else { h }, 4 * h)
                && layer.w_hh.dim() == (h, 4 * h)
                && layer.bias.len() == 4 * h
        });
    if !shapes_ok {
        return Err("tensor shapes do not match the stored config".into());
    }
    if !params.all_finite() {
        return Err("non-finite parameter values".into());
    }
    Ok(params)
}

pub fn decode_checkpoint(buf: &[u8]) -> std::result::Result<(LmConfig, LmParameters<f32>), String> {
    let (config, tensors) = parse(buf)?;
    let params = assemble(&config, tensors)?;
    Ok((config, params))
}

pub fn write_checkpoint(path: &Path, config: &LmConfig, params: &LmParameters<f32>) -> Result<()> {
    let io = |source| LmError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, encode_checkpoint(config, params)).map_err(io)
}

pub fn read_checkpoint(path: &Path) -> Result<(LmConfig, LmParameters<f32>)> {
    let buf = std::fs::read(path).map_err(|source| LmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_checkpoint(&buf).map_err(|message| LmError::Checkpoint {
        path: path.display().to_string(),
        message,
    })
}
