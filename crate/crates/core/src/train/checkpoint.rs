//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! magic "SRCNCKPT" | version u32 | dtype u8 (4 or 8)
//! config: len u32 + UTF-8 `key = value` text
//! epoch u64 | step u64
//! adam: beta1 f64 | beta2 f64 | eps f64 | t u64
//! params: count u32, each { name | dims 4×u32 | values | has_mask u8 | mask values? }
//! lgc:    count u32, each { name | stage u32 }
//! moments: count u32, each { name | m values | v values }
//! ```
//!
//! Strings are `len u32 + bytes`; tensor values are raw scalars of the dtype.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lgc::CondensingConv;
use crate::model::{Model, ModelConfig};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

use super::adam::{Adam, AdamState};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SRCNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub model: Model<T>,
    pub adam: Adam<T>,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len())?;
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
    fn values<T: Scalar>(&mut self, t: &Tensor<T>) {
        for &v in t.data() {
            v.write_le(&mut self.0);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(format!("bad string: {e}")))
    }
    fn values<T: Scalar>(&mut self, shape: Shape) -> Result<Tensor<T>> {
        let bytes = self.take(shape.numel().checked_mul(T::BYTES).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = bytes.chunks_exact(T::BYTES).map(T::read_le).collect();
        Tensor::from_vec(shape, data)
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if !self.model.blocks.iter().flatten().all(|l| matches!(l.lgc, crate::model::Pointwise::Learned(_))) {
            return Err(Error::Checkpoint("only training models with learned group convs can be checkpointed".into()));
        }
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.0.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        w.u8(T::DTYPE_TAG);
        w.str(&self.model.config().to_text())?;
        w.u64(self.epoch as u64);
        w.u64(self.step);
        w.f64(self.adam.beta1);
        w.f64(self.adam.beta2);
        w.f64(self.adam.eps);
        w.u64(self.adam.t);
        let params = self.model.parameters();
        w.u32(params.len())?;
        for p in &params {
            w.str(&p.name)?;
            for d in p.value.shape().dims() {
                w.u32(d)?;
            }
            w.values(&p.value);
            match &p.mask {
                Some(m) => {
                    w.u8(1);
                    w.values(m);
                }
                None => w.u8(0),
            }
        }
        let lgc = self.model.lgc_layers();
        w.u32(lgc.len())?;
        for l in &lgc {
            w.str(l.name())?;
            w.u32(l.stage())?;
        }
        w.u32(self.adam.state.len())?;
        for (name, st) in &self.adam.state {
            w.str(name)?;
            w.values(&st.m);
            w.values(&st.v);
        }
        Ok(w.0)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION as usize {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let dtype = r.u8()?;
        if dtype != T::DTYPE_TAG {
            return Err(Error::Checkpoint(format!("stored with {dtype}-byte floats, loading as {}-byte", T::DTYPE_TAG)));
        }
        let config = ModelConfig::from_text(&r.str()?)?;
        let epoch = r.u64()? as usize;
        let step = r.u64()?;
        let mut adam = Adam::new(r.f64()?, r.f64()?, r.f64()?);
        adam.t = r.u64()?;

        let mut model = Model::<T>::build(&config, 0)?;
        let n = r.u32()?;
        let mut slots = model.parameters_mut();
        if n != slots.len() {
            return Err(Error::Checkpoint(format!("{n} parameters stored, model has {}", slots.len())));
        }
        let mut shapes = BTreeMap::new();
        for p in slots.iter_mut() {
            let name = r.str()?;
            if name != p.name {
                return Err(Error::Checkpoint(format!("expected parameter {}, found {name}", p.name)));
            }
            let shape = Shape::new(r.u32()?, r.u32()?, r.u32()?, r.u32()?);
            if shape != p.value.shape() {
                return Err(Error::Checkpoint(format!("{name}: stored {shape}, model has {}", p.value.shape())));
            }
            p.value = r.values(shape)?;
            p.mask = match r.u8()? {
                0 => None,
                1 => Some(r.values(shape)?),
                f => return Err(Error::Checkpoint(format!("{name}: bad mask flag {f}"))),
            };
            shapes.insert(name, shape);
        }
        drop(slots);

        let n = r.u32()?;
        let mut layers = model.lgc_layers_mut();
        if n != layers.len() {
            return Err(Error::Checkpoint(format!("{n} group convs stored, model has {}", layers.len())));
        }
        for l in layers.iter_mut() {
            let name = r.str()?;
            if name != l.name() {
                return Err(Error::Checkpoint(format!("expected group conv {}, found {name}", l.name())));
            }
            let stage = r.u32()?;
            **l = CondensingConv::from_parts(l.weight.clone(), l.groups(), l.condense_factor(), stage)?;
        }
        drop(layers);

        let n = r.u32()?;
        for _ in 0..n {
            let name = r.str()?;
            let shape = *shapes.get(&name).ok_or_else(|| Error::Checkpoint(format!("moments for unknown {name}")))?;
            let m = r.values(shape)?;
            let v = r.values(shape)?;
            adam.state.insert(name, AdamState { m, v });
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Checkpoint { model, adam, epoch, step })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Scalar width in bytes recorded in a checkpoint file's header.
pub fn checkpoint_dtype(path: impl AsRef<Path>) -> Result<u8> {
    use std::io::Read;
    let mut head = [0u8; 13];
    std::fs::File::open(path)?.read_exact(&mut head).map_err(|_| Error::Checkpoint("file too short".into()))?;
    if &head[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    Ok(head[12])
}
