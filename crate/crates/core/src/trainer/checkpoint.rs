//! Binary checkpoint layout:
//!
//! ```text
//! "MADN" | version: u32 LE | manifest length: u32 LE | manifest (key = value text)
//! | parameter blobs | first-moment blobs | second-moment blobs
//! ```
//!
//! Blobs are little-endian floats of the model's element type, one per
//! parameter in manifest order.

use std::path::Path;

use super::adam::AdamState;
use crate::blocks::ParamStore;
use crate::error::{Error, Result};
use crate::kv::{join, KvMap};
use crate::model::{Model, ModelConfig};
use crate::tensor::{DType, Element};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MADN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue training exactly where it stopped.
#[derive(Clone, Debug)]
pub struct Checkpoint<T: Element = f32> {
    pub cfg: ModelConfig,
    pub params: ParamStore<T>,
    pub adam: AdamState<T>,
    /// Completed iterations.
    pub iteration: u64,
    /// Seed of the sampling stream; samples are addressed by iteration.
    pub rng_seed: u64,
    /// Free-form run settings stored alongside, such as the resolved config.
    pub extra: KvMap,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{what}: need {n} bytes at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn floats<T: Element>(&mut self, n: usize, what: &str) -> Result<Vec<T>> {
        let w = T::DTYPE.size_of();
        Ok(self.take(n * w, what)?.chunks_exact(w).map(T::read_le).collect())
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptManifest(msg.into())
}

fn read_manifest(r: &mut Reader<'_>) -> Result<KvMap> {
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let len = r.u32("manifest length")? as usize;
    let text = std::str::from_utf8(r.take(len, "manifest")?).map_err(|_| corrupt("manifest is not UTF-8"))?;
    KvMap::parse(text).map_err(|e| corrupt(e.to_string()))
}

fn manifest_dtype(m: &KvMap) -> Result<DType> {
    m.require::<String>("dtype")
        .map_err(|e| corrupt(e.to_string()))?
        .parse()
        .map_err(corrupt)
}

/// Element type stored in a checkpoint file, read from its header only.
pub fn checkpoint_dtype(path: &Path) -> Result<DType> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    manifest_dtype(&read_manifest(&mut Reader { bytes: &bytes, pos: 0 })?)
}

impl<T: Element> Checkpoint<T> {
    pub fn from_model(model: &Model<T>, adam: &AdamState<T>, iteration: u64, rng_seed: u64) -> Self {
        Checkpoint {
            cfg: model.cfg.clone(),
            params: model.params.clone(),
            adam: adam.clone(),
            iteration,
            rng_seed,
            extra: KvMap::new(),
        }
    }

    fn manifest(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("dtype", T::DTYPE);
        m.set("iteration", self.iteration);
        m.set("rng_seed", self.rng_seed);
        m.set("adam.t", self.adam.t);
        m.set("adam.beta1", self.adam.beta1);
        m.set("adam.beta2", self.adam.beta2);
        m.set("adam.eps", self.adam.eps);
        self.cfg.write_kv(&mut m, "model.");
        m.set("params", self.params.len());
        for (i, (name, t)) in self.params.iter().enumerate() {
            m.set(&format!("param.{i}"), format!("{name} {}", join(t.shape())));
        }
        for (k, v) in self.extra.iter() {
            m.set(&format!("extra.{k}"), v);
        }
        m
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = self.manifest().to_string();
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        for t in self.params.tensors() {
            t.data().iter().for_each(|v| v.write_le(&mut out));
        }
        for blob in self.adam.m.iter().chain(&self.adam.v) {
            blob.iter().for_each(|v| v.write_le(&mut out));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let m = read_manifest(&mut r)?;
        let get = |k: &str| m.require::<String>(k).map_err(|e| corrupt(e.to_string()));
        let dtype = manifest_dtype(&m)?;
        if dtype != T::DTYPE {
            return Err(corrupt(format!("checkpoint holds {dtype} values, loading as {}", T::DTYPE)));
        }
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| corrupt(format!("bad {k}"))) };
        let int = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| corrupt(format!("bad {k}"))) };
        let cfg = ModelConfig::desk(1)
            .read_kv(&m, "model.")
            .map_err(|e| corrupt(e.to_string()))?;
        let count = int("params")? as usize;
        let mut specs = Vec::with_capacity(count);
        for i in 0..count {
            let entry = get(&format!("param.{i}"))?;
            let (name, shape) = entry
                .split_once(' ')
                .ok_or_else(|| corrupt(format!("param.{i}: expected `name shape`")))?;
            let shape: Vec<usize> = shape
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| corrupt(format!("param.{i}: bad shape"))))
                .collect::<Result<_>>()?;
            specs.push((name.to_string(), shape));
        }
        let mut values = Vec::with_capacity(count);
        for (name, shape) in &specs {
            values.push(r.floats::<T>(shape.iter().product(), name)?);
        }
        let mut moments = Vec::with_capacity(2 * count);
        for (name, shape) in specs.iter().chain(&specs) {
            moments.push(r.floats::<T>(shape.iter().product(), &format!("adam state of {name}"))?);
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }

        // Structure comes from the config; the stored names and shapes must match it.
        let mut params = Model::<T>::build(&cfg, 0)?.params;
        if params.len() != count {
            return Err(corrupt(format!("config implies {} parameters, file has {count}", params.len())));
        }
        for (id, ((name, shape), data)) in params.ids().collect::<Vec<_>>().into_iter().zip(specs.iter().zip(values)) {
            if params.name(id) != name || params.get(id).shape() != shape.as_slice() {
                return Err(corrupt(format!(
                    "parameter {name} {shape:?} does not match {} {:?}",
                    params.name(id),
                    params.get(id).shape()
                )));
            }
            params.set(id, data)?;
        }
        let v = moments.split_off(count);
        let mut extra = KvMap::new();
        for (k, val) in m.iter() {
            if let Some(k) = k.strip_prefix("extra.") {
                extra.set(k, val);
            }
        }
        Ok(Checkpoint {
            cfg,
            params,
            adam: AdamState {
                m: moments,
                v,
                t: int("adam.t")?,
                beta1: num("adam.beta1")?,
                beta2: num("adam.beta2")?,
                eps: num("adam.eps")?,
            },
            iteration: int("iteration")?,
            rng_seed: int("rng_seed")?,
            extra,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Model with the stored parameters.
    pub fn model(&self) -> Result<Model<T>> {
        let mut model = Model::build(&self.cfg, 0)?;
        model.params = self.params.clone();
        Ok(model)
    }
}
