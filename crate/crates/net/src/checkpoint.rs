//! Checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"VGCKPT1\n"
//! u64 header length, then the header as UTF-8 TOML
//! u64 tensor count, then per tensor:
//!   u32 name length, name (UTF-8)
//!   u32 ndim, ndim × u64 dims
//!   prod(dims) × f32 values
//! ```
//!
//! Tensors are the generator and discriminator parameters under their
//! layer names, plus Adam moments as `adam.{g,d}.{m,v}/<param name>`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adam::{AdamState, OptimConfig};
use crate::discriminator::{Discriminator, DiscriminatorSpec};
use crate::generator::{Generator, GeneratorSpec};
use crate::layers::{Layer, Param};
use crate::loss::LossConfig;
use crate::tensor::Real;
use crate::train::TrainState;
use crate::NetError;

pub const MAGIC: &[u8; 8] = b"VGCKPT1\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub seed: u64,
    pub epoch: usize,
    pub step: u64,
    pub g_adam_step: u64,
    pub d_adam_step: u64,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    /// Caller-defined metadata (normalization statistics, config digest...).
    #[serde(default)]
    pub extra: toml::Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<Tensor>,
}

fn tensor_of<T: Real>(name: String, dims: &[usize], data: &[T]) -> Tensor {
    Tensor { name, dims: dims.to_vec(), data: data.iter().map(|v| v.f64() as f32).collect() }
}

impl Checkpoint {
    pub fn from_state<T: Real>(state: &TrainState<T>, extra: toml::Table) -> Self {
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            seed: state.seed,
            epoch: state.epoch,
            step: state.step,
            g_adam_step: state.g_adam.step,
            d_adam_step: state.d_adam.step,
            generator: state.generator.spec().clone(),
            discriminator: state.discriminator.spec().clone(),
            loss: state.loss,
            optim: state.optim,
            extra,
        };
        let mut tensors = Vec::new();
        for (tag, params, adam) in [
            ("g", state.generator.params(), &state.g_adam),
            ("d", state.discriminator.params(), &state.d_adam),
        ] {
            for p in &params {
                tensors.push(tensor_of(p.name.clone(), &p.shape, &p.value));
            }
            for (i, p) in params.iter().enumerate() {
                tensors.push(tensor_of(format!("adam.{tag}.m/{}", p.name), &p.shape, &adam.m[i]));
                tensors.push(tensor_of(format!("adam.{tag}.v/{}", p.name), &p.shape, &adam.v[i]));
            }
        }
        Self { header, tensors }
    }

    fn find(&self, name: &str) -> Result<&Tensor, NetError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| NetError::Checkpoint(format!("missing tensor {name}")))
    }

    fn fill<T: Real>(&self, name: &str, shape: &[usize], dst: &mut [T]) -> Result<(), NetError> {
        let t = self.find(name)?;
        if t.dims != shape {
            return Err(NetError::Checkpoint(format!("tensor {name}: shape {:?}, expected {:?}", t.dims, shape)));
        }
        for (d, &v) in dst.iter_mut().zip(&t.data) {
            *d = T::of(v as f64);
        }
        Ok(())
    }

    fn load_params<T: Real>(&self, params: Vec<&mut Param<T>>) -> Result<(), NetError> {
        for p in params {
            let Param { name, shape, value, .. } = p;
            self.fill(name, shape, value)?;
        }
        Ok(())
    }

    pub fn generator<T: Real>(&self) -> Result<Generator<T>, NetError> {
        let mut g = Generator::new(self.header.generator.clone(), self.header.seed)?;
        self.load_params(g.params_mut())?;
        Ok(g)
    }

    pub fn discriminator<T: Real>(&self) -> Result<Discriminator<T>, NetError> {
        let mut d = Discriminator::new(self.header.discriminator.clone(), self.header.seed.wrapping_add(1))?;
        self.load_params(d.params_mut())?;
        Ok(d)
    }

    fn adam<T: Real>(&self, tag: &str, params: &[&Param<T>], step: u64) -> Result<AdamState<T>, NetError> {
        let mut adam = AdamState::new(params);
        adam.step = step;
        for (i, p) in params.iter().enumerate() {
            self.fill(&format!("adam.{tag}.m/{}", p.name), &p.shape, &mut adam.m[i])?;
            self.fill(&format!("adam.{tag}.v/{}", p.name), &p.shape, &mut adam.v[i])?;
        }
        Ok(adam)
    }

    /// Full training state; the epoch history is not stored and starts empty.
    pub fn train_state<T: Real>(&self) -> Result<TrainState<T>, NetError> {
        let h = &self.header;
        let mut state = TrainState::new(h.generator.clone(), h.discriminator.clone(), h.loss, h.optim, h.seed)?;
        self.load_params(state.generator.params_mut())?;
        self.load_params(state.discriminator.params_mut())?;
        state.g_adam = self.adam("g", &state.generator.params(), h.g_adam_step)?;
        state.d_adam = self.adam("d", &state.discriminator.params(), h.d_adam_step)?;
        state.epoch = h.epoch;
        state.step = h.step;
        Ok(state)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), NetError> {
        let header = toml::to_string(&self.header).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(header.as_bytes())?;
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for t in &self.tensors {
            w.write_all(&(t.name.len() as u32).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
            for &d in &t.dims {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, NetError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NetError::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let header_len = read_u64(r)? as usize;
        let header_bytes = read_bytes(r, header_len)?;
        let header_text = String::from_utf8(header_bytes).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        let header: CheckpointHeader =
            toml::from_str(&header_text).map_err(|e| NetError::Checkpoint(format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(NetError::Checkpoint(format!("unsupported format version {}", header.format_version)));
        }
        let count = read_u64(r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            let name = String::from_utf8(read_bytes(r, name_len)?).map_err(|e| NetError::Checkpoint(e.to_string()))?;
            let ndim = read_u32(r)? as usize;
            let dims = (0..ndim).map(|_| read_u64(r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = dims.iter().product();
            let raw = read_bytes(r, n * 4)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push(Tensor { name, dims, data });
        }
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        let path = path.as_ref();
        // Write-then-rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("partial");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_to(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>, NetError> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(NetError::Checkpoint(format!("truncated: wanted {n} bytes, got {}", buf.len())));
    }
    Ok(buf)
}

fn read_u64(r: &mut impl Read) -> Result<u64, NetError> {
    let b = read_bytes(r, 8)?;
    Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
}

fn read_u32(r: &mut impl Read) -> Result<u32, NetError> {
    let b = read_bytes(r, 4)?;
    Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
}
