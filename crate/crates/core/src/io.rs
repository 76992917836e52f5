//! Binary tensor container shared by pressure data, volumes and checkpoints.
//!
//! Layout (little-endian): 8-byte magic `PACTTNS1`, `u32` rank, `u64` dims,
//! `u32` dtype code (1 = f32), row-major f32 payload, then optionally a `u64`
//! byte length followed by that many bytes of UTF-8 metadata (JSON here).

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array3, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::forward::PressureTensor;
use crate::geometry::VoxelGrid;
use crate::recon::Volume;
use crate::scalar::Real;

pub const MAGIC: &[u8; 8] = b"PACTTNS1";
pub const DTYPE_F32: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
    pub metadata: Option<String>,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: Vec<f32>, metadata: Option<String>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("dims {dims:?} hold {n} values, payload has {}", data.len())));
        }
        Ok(Self { dims, data, metadata })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta_len = self.metadata.as_ref().map_or(0, |m| 8 + m.len());
        let mut out = Vec::with_capacity(16 + 8 * self.dims.len() + 4 * self.data.len() + meta_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&DTYPE_F32.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(m) = &self.metadata {
            out.extend_from_slice(&(m.len() as u64).to_le_bytes());
            out.extend_from_slice(m.as_bytes());
        }
        out
    }

    /// Parses a container; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(8).ok_or_else(|| fail("truncated header: shorter than the magic".into()))?;
        if magic != MAGIC {
            return Err(fail(format!("wrong magic {:?}, expected {:?}", String::from_utf8_lossy(magic), "PACTTNS1")));
        }
        let ndim = cur.u32().ok_or_else(|| fail("truncated header: missing rank".into()))? as usize;
        let mut dims = Vec::with_capacity(ndim.min(16));
        for _ in 0..ndim {
            let d = cur.u64().ok_or_else(|| fail("truncated header: missing dims".into()))?;
            dims.push(usize::try_from(d).map_err(|_| fail(format!("dimension {d} does not fit in memory")))?);
        }
        let dtype = cur.u32().ok_or_else(|| fail("truncated header: missing dtype".into()))?;
        if dtype != DTYPE_F32 {
            return Err(fail(format!("unsupported dtype code {dtype}")));
        }
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| fail("payload size overflows".into()))?;
        let payload = cur
            .take(n)
            .ok_or_else(|| fail(format!("truncated payload: expected {n} bytes, found {}", bytes.len() - cur.pos)))?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let metadata = if cur.pos == bytes.len() {
            None
        } else {
            let len = cur.u64().ok_or_else(|| fail("truncated metadata length".into()))? as usize;
            let raw = cur.take(len).ok_or_else(|| fail("truncated metadata block".into()))?;
            if cur.pos != bytes.len() {
                return Err(fail("trailing bytes after metadata".into()));
            }
            Some(String::from_utf8(raw.to_vec()).map_err(|_| fail("metadata is not UTF-8".into()))?)
        };
        Ok(Self { dims, data, metadata })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn metadata_json(&self, path: &Path) -> Result<Value> {
        let raw = self.metadata.as_deref().ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: "missing metadata block".into(),
        })?;
        serde_json::from_str(raw).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: format!("metadata is not valid JSON: {e}"),
        })
    }

    pub fn to_array<T: Real>(&self) -> ArrayD<T> {
        ArrayD::from_shape_vec(IxDyn(&self.dims), self.data.iter().map(|&v| T::of(v as f64)).collect())
            .expect("dims were validated against the payload")
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

#[derive(Serialize, Deserialize)]
struct PressureMeta {
    kind: String,
    config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct VolumeMeta {
    kind: String,
    grid: VoxelGrid,
}

fn f32_payload<'a, T: Real>(it: impl Iterator<Item = &'a T>) -> Vec<f32> {
    it.map(|v| v.to64() as f32).collect()
}

/// Stores a pressure tensor (as f32) with its config hash.
pub fn write_pressure<T: Real>(path: &Path, p: &PressureTensor<T>) -> Result<()> {
    let meta = serde_json::to_string(&PressureMeta {
        kind: "pressure".into(),
        config_hash: p.config_hash.clone(),
    })
    .expect("plain struct serializes");
    TensorFile::new(p.data.shape().to_vec(), f32_payload(p.data.iter()), Some(meta))?.write(path)
}

pub fn read_pressure<T: Real>(path: &Path) -> Result<PressureTensor<T>> {
    let tf = TensorFile::read(path)?;
    let meta: PressureMeta = serde_json::from_value(tf.metadata_json(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: format!("not a pressure tensor: {e}"),
    })?;
    if meta.kind != "pressure" || tf.dims.len() != 3 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected a rank-3 pressure tensor, found {} of rank {}", meta.kind, tf.dims.len()),
        });
    }
    let data = Array3::from_shape_vec((tf.dims[0], tf.dims[1], tf.dims[2]), tf.data.iter().map(|&v| T::of(v as f64)).collect())
        .expect("dims were validated against the payload");
    Ok(PressureTensor {
        data,
        config_hash: meta.config_hash,
    })
}

pub fn write_volume<T: Real>(path: &Path, vol: &Volume<T>) -> Result<()> {
    let meta = serde_json::to_string(&VolumeMeta {
        kind: "volume".into(),
        grid: vol.grid.clone(),
    })
    .expect("plain struct serializes");
    TensorFile::new(vol.data.shape().to_vec(), f32_payload(vol.data.iter()), Some(meta))?.write(path)
}

pub fn read_volume<T: Real>(path: &Path) -> Result<Volume<T>> {
    let tf = TensorFile::read(path)?;
    let meta: VolumeMeta = serde_json::from_value(tf.metadata_json(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: format!("not a volume: {e}"),
    })?;
    if tf.dims != meta.grid.dims {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "payload dims disagree with the grid header".into(),
        });
    }
    let data = Array3::from_shape_vec(meta.grid.dims, tf.data.iter().map(|&v| T::of(v as f64)).collect())
        .expect("dims were validated against the payload");
    Volume::from_array(meta.grid, data)
}
