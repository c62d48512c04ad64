//! Binary container for named tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "VITF" | u32 version (=1) | u64 metadata length | metadata JSON
//! u32 entry count
//! per entry: u32 name length | name UTF-8 | u8 dtype | u8 rank | rank × u64 extents | raw elements
//! ```
//!
//! dtype codes: 0 = f32, 1 = f64, 2 = i64.

use std::any::Any;
use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{manifest, ViTConfig, ViTParams};
use crate::tensor::{Real, Tensor};

pub const MAGIC: [u8; 4] = *b"VITF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O error for {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("not a checkpoint: {0}")]
    Format(String),

    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    Version(u32),

    #[error("corrupt checkpoint at {entry}: {reason}")]
    Corrupt { entry: String, reason: String },

    /// Rejected before writing: duplicate or empty names, bad shapes.
    #[error("invalid tensor set: {0}")]
    Invalid(String),

    #[error("manifest mismatch: {}", .0.join("; "))]
    Manifest(Vec<String>),
}

type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
    I64 = 2,
}

impl DType {
    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            2 => Some(DType::I64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 | DType::I64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::I64(_) => DType::I64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    fn read_le(dtype: DType, bytes: &[u8]) -> Self {
        match dtype {
            DType::F32 => TensorData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
            DType::I64 => TensorData::I64(
                bytes
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl NamedTensor {
    /// Stores `t` as f32 or f64 according to its element type.
    pub fn from_tensor<T: Real>(name: impl Into<String>, t: &Tensor<T>) -> Self {
        let values: Box<dyn Any> = Box::new(t.data().to_vec());
        let data = match values.downcast::<Vec<f32>>() {
            Ok(v) => TensorData::F32(*v),
            Err(other) => match other.downcast::<Vec<f64>>() {
                Ok(v) => TensorData::F64(*v),
                Err(_) => TensorData::F64(t.data().iter().map(|x| x.as_f64()).collect()),
            },
        };
        Self {
            name: name.into(),
            shape: t.shape().to_vec(),
            data,
        }
    }

    pub fn from_i64(name: impl Into<String>, shape: Vec<usize>, values: Vec<i64>) -> Self {
        Self {
            name: name.into(),
            shape,
            data: TensorData::I64(values),
        }
    }

    /// Converts a floating-point entry to a tensor of `T`.
    pub fn to_tensor<T: Real>(&self) -> crate::Result<Tensor<T>> {
        let values: Vec<T> = match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| T::of(f64::from(x))).collect(),
            TensorData::F64(v) => v.iter().map(|&x| T::of(x)).collect(),
            TensorData::I64(_) => {
                return Err(crate::Error::Dimension(format!(
                    "{} holds integers, expected floating point",
                    self.name
                )))
            }
        };
        Tensor::new(self.shape.clone(), values)
    }
}

/// Decoded file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

fn check_entries(tensors: &[NamedTensor]) -> Result<()> {
    let mut seen = HashSet::new();
    for t in tensors {
        if t.name.is_empty() {
            return Err(CheckpointError::Invalid("empty tensor name".into()));
        }
        if !seen.insert(t.name.as_str()) {
            return Err(CheckpointError::Invalid(format!("duplicate name {}", t.name)));
        }
        if t.shape.len() > u8::MAX as usize || t.shape.contains(&0) {
            return Err(CheckpointError::Invalid(format!(
                "{} has unsupported shape {:?}",
                t.name, t.shape
            )));
        }
        let n: usize = t.shape.iter().product();
        if n != t.data.len() {
            return Err(CheckpointError::Invalid(format!(
                "{} has shape {:?} but {} elements",
                t.name,
                t.shape,
                t.data.len()
            )));
        }
    }
    Ok(())
}

pub fn encode(tensors: &[NamedTensor], metadata: &serde_json::Value) -> Result<Vec<u8>> {
    check_entries(tensors)?;
    let meta = serde_json::to_vec(metadata)
        .map_err(|e| CheckpointError::Invalid(format!("metadata: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.data.dtype() as u8);
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        t.data.write_le(&mut out);
    }
    Ok(out)
}

struct Reader<'b> {
    bytes: &'b [u8],
    at: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize, entry: &str) -> Result<&'b [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.at..end];
                self.at = end;
                Ok(s)
            }
            None => Err(CheckpointError::Corrupt {
                entry: entry.to_string(),
                reason: format!(
                    "truncated: needs {n} bytes at offset {}, file has {}",
                    self.at,
                    self.bytes.len()
                ),
            }),
        }
    }

    fn u8(&mut self, entry: &str) -> Result<u8> {
        Ok(self.take(1, entry)?[0])
    }

    fn u32(&mut self, entry: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, entry)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, entry: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, entry)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(CheckpointError::Format("bad magic bytes".into()));
    }
    let mut r = Reader { bytes, at: 4 };
    let version = r.u32("header")?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let meta_len = r.u64("header")?;
    let meta_len = usize::try_from(meta_len).map_err(|_| CheckpointError::Corrupt {
        entry: "metadata".into(),
        reason: "length overflows".into(),
    })?;
    let meta = r.take(meta_len, "metadata")?;
    let metadata = serde_json::from_slice(meta).map_err(|e| CheckpointError::Corrupt {
        entry: "metadata".into(),
        reason: e.to_string(),
    })?;
    let count = r.u32("entry count")?;
    let mut tensors = Vec::new();
    let mut seen = HashSet::new();
    for i in 0..count {
        let label = format!("entry #{i}");
        let name_len = r.u32(&label)? as usize;
        let name = std::str::from_utf8(r.take(name_len, &label)?)
            .map_err(|_| CheckpointError::Corrupt {
                entry: label.clone(),
                reason: "name is not UTF-8".into(),
            })?
            .to_string();
        let corrupt = |reason: String| CheckpointError::Corrupt {
            entry: name.clone(),
            reason,
        };
        if name.is_empty() || !seen.insert(name.clone()) {
            return Err(corrupt("empty or duplicate name".into()));
        }
        let code = r.u8(&name)?;
        let dtype = DType::from_code(code).ok_or_else(|| corrupt(format!("unknown dtype {code}")))?;
        let rank = r.u8(&name)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = usize::try_from(r.u64(&name)?).map_err(|_| corrupt("extent overflows".into()))?;
            if d == 0 {
                return Err(corrupt("zero extent".into()));
            }
            shape.push(d);
        }
        let byte_len = shape
            .iter()
            .try_fold(dtype.size(), |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt("byte length overflows".into()))?;
        let raw = r.take(byte_len, &name)?;
        tensors.push(NamedTensor {
            data: TensorData::read_le(dtype, raw),
            name,
            shape,
        });
    }
    if r.at != bytes.len() {
        return Err(CheckpointError::Corrupt {
            entry: "trailer".into(),
            reason: format!("{} unexpected trailing bytes", bytes.len() - r.at),
        });
    }
    Ok(Checkpoint { metadata, tensors })
}

/// Writes via a sibling temp file and rename, so `path` never holds a partial file.
pub fn save(path: impl AsRef<Path>, tensors: &[NamedTensor], metadata: &serde_json::Value) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(tensors, metadata)?;
    let io = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(&bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

/// Whether `head.*` tensors may differ from the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadPolicy {
    Strict,
    /// Head tensors must be present but their shapes are not checked.
    Exempt,
}

/// Checks that `tensors` holds exactly the manifest of `cfg`, listing every offender.
pub fn validate_against_config(tensors: &[NamedTensor], cfg: &ViTConfig, head: HeadPolicy) -> Result<()> {
    let by_name: BTreeMap<&str, &NamedTensor> = tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    let expected = manifest(cfg);
    let mut offenders = Vec::new();
    for (name, shape) in &expected {
        match by_name.get(name.as_str()) {
            None => offenders.push(format!("missing {name}")),
            Some(t) => {
                if t.data.dtype() == DType::I64 {
                    offenders.push(format!("{name}: integer dtype"));
                }
                let exempt = head == HeadPolicy::Exempt && name.starts_with("head.");
                if !exempt && &t.shape != shape {
                    offenders.push(format!("{name}: expected {shape:?}, got {:?}", t.shape));
                }
            }
        }
    }
    let known: HashSet<&str> = expected.iter().map(|(n, _)| n.as_str()).collect();
    offenders.extend(
        by_name
            .keys()
            .filter(|n| !known.contains(*n))
            .map(|n| format!("unexpected {n}")),
    );
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(CheckpointError::Manifest(offenders))
    }
}

/// Parameters as named tensors in canonical order.
pub fn params_to_named<T: Real>(params: &ViTParams<T>) -> Vec<NamedTensor> {
    params
        .named()
        .into_iter()
        .map(|(name, t)| NamedTensor::from_tensor(name, t))
        .collect()
}

/// Validates `tensors` against `cfg` and assembles the parameter set.
pub fn params_from_named<T: Real>(tensors: &[NamedTensor], cfg: &ViTConfig) -> crate::Result<ViTParams<T>> {
    validate_against_config(tensors, cfg, HeadPolicy::Strict)?;
    let map = tensors
        .iter()
        .map(|t| Ok((t.name.clone(), t.to_tensor()?)))
        .collect::<crate::Result<BTreeMap<_, _>>>()?;
    ViTParams::from_named(cfg, map)
}
