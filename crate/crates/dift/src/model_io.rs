//! Binary model files.
//!
//! ```text
//! "DIFT"  version:u32  patch_size:u32  channels:u32  dropout:f32  init:u8
//! 14 × { name_len:u16  name:utf8  rank:u8  dims:u32×rank  data:f32×∏dims }
//! ```
//!
//! Little-endian, no padding, tensors in canonical parameter order.

use std::path::Path;

use dift_core::network::InitScheme;
use dift_core::{ArchConfig, Model, ParamId, Tensor};

use crate::error::{Error, Result};
use crate::fsutil;

pub const MAGIC: &[u8; 4] = b"DIFT";
pub const VERSION: u32 = 1;

pub fn encode(model: &Model) -> Vec<u8> {
    let arch = model.arch();
    let mut out = Vec::with_capacity(64 + 4 * model.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(arch.patch_size as u32).to_le_bytes());
    out.extend_from_slice(&(arch.channels as u32).to_le_bytes());
    out.extend_from_slice(&arch.dropout.to_le_bytes());
    out.push(model.init_scheme().tag());
    for (id, t) in model.params() {
        let name = id.name().as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(t.rank() as u8);
        for d in t.dims() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in t.data() {
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
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {} while reading {what}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> std::result::Result<[u8; N], String> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, String> {
        self.array(what).map(u32::from_le_bytes)
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Model, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err("bad magic (not a DIFT model file)".into());
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let arch = ArchConfig {
        patch_size: r.u32("patch size")? as usize,
        channels: r.u32("channel count")? as usize,
        dropout: f32::from_le_bytes(r.array("dropout")?),
    };
    arch.validate().map_err(|e| e.to_string())?;
    let tag = r.array::<1>("init tag")?[0];
    let init = InitScheme::from_tag(tag).ok_or_else(|| format!("unknown init scheme tag {tag}"))?;

    let mut params = Vec::with_capacity(ParamId::ALL.len());
    for id in ParamId::ALL {
        let len = u16::from_le_bytes(r.array("name length")?) as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?).map_err(|_| "tensor name is not UTF-8".to_string())?;
        if name != id.name() {
            return Err(format!("expected tensor {}, found {name:?}", id.name()));
        }
        let rank = r.array::<1>("rank")?[0] as usize;
        let dims = (0..rank).map(|_| r.u32("dims").map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        let want = arch.param_dims(id);
        if dims != want {
            return Err(format!("{name} has dims {dims:?}, expected {want:?}"));
        }
        let n: usize = dims.iter().product();
        let data = r
            .take(4 * n, name)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        params.push(Tensor::new(&dims, data).map_err(|e| e.to_string())?);
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes after the last tensor", bytes.len() - r.pos));
    }
    Model::from_params(arch, init, params).map_err(|e| e.to_string())
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &encode(model))
}

/// Loads a model, checking it against `expected` when given.
pub fn load_model(path: &Path, expected: Option<&ArchConfig>) -> Result<Model> {
    let model = decode(&fsutil::read(path)?).map_err(|d| Error::format(path, None, d))?;
    if let Some(want) = expected {
        let got = model.arch();
        if got.patch_size != want.patch_size || got.channels != want.channels {
            return Err(dift_core::Error::ArchMismatch(format!(
                "{} has patch {} with {} channels, expected patch {} with {}",
                path.display(),
                got.patch_size,
                got.channels,
                want.patch_size,
                want.channels
            ))
            .into());
        }
    }
    Ok(model)
}
