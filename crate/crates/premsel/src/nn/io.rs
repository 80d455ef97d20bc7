//! Binary serialization: the `PSNN` model file and the `PSTC` tensor
//! container. Both formats are little-endian with a trailing CRC32 of all
//! preceding bytes, so any corruption or truncation is detected before
//! parsing.

use std::fs;
use std::path::Path;

use super::tensor::Tensor2;
use super::{Activation, DenseLayer, DenseNetwork, Mode, NnError, Result};

const MODEL_MAGIC: &[u8; 4] = b"PSNN";
const MODEL_VERSION: u32 = 1;
const CONTAINER_MAGIC: &[u8; 4] = b"PSTC";
const CONTAINER_VERSION: u32 = 1;

/// Serialize architecture, parameters and dropout rates (optimizer state and
/// mode are not part of the model).
pub fn model_to_bytes(net: &DenseNetwork<f32>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for (layer, &rate) in net.layers().iter().zip(net.dropout_rates()) {
        buf.push(layer.activation.code());
        buf.extend_from_slice(&rate.to_le_bytes());
        buf.extend_from_slice(&(layer.weights.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.weights.cols() as u32).to_le_bytes());
        for &v in layer.weights.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for &v in &layer.bias {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    append_crc(&mut buf);
    buf
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<DenseNetwork<f32>> {
    let body = checked_body(bytes, MODEL_MAGIC)?;
    let mut r = Reader::new(body);
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(NnError::VersionMismatch(version));
    }
    let layer_count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    let mut dropout = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let activation = Activation::from_code(r.u8()?).ok_or(NnError::VersionMismatch(version))?;
        dropout.push(r.f32()?);
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let weights = Tensor2::from_vec(rows, cols, r.f32_vec(rows * cols)?);
        let bias = r.f32_vec(rows)?;
        layers.push(DenseLayer::from_parts(weights, bias, activation));
    }
    r.finish()?;
    let mut net = DenseNetwork::new(layers, dropout).map_err(|_| NnError::ChecksumMismatch)?;
    net.set_mode(Mode::Eval);
    Ok(net)
}

pub fn save_model(net: &DenseNetwork<f32>, path: &Path) -> Result<()> {
    fs::write(path, model_to_bytes(net))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<DenseNetwork<f32>> {
    model_from_bytes(&fs::read(path)?)
}

/// One named tensor in a [`TensorContainer`]. Vectors are stored as
/// single-column matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32 {
        rows: usize,
        cols: usize,
        data: Vec<f32>,
    },
    U32(Vec<u32>),
    U64(Vec<u64>),
}

impl TensorData {
    fn dtype(&self) -> u8 {
        match self {
            TensorData::F32 { .. } => 0,
            TensorData::U32(_) => 2,
            TensorData::U64(_) => 3,
        }
    }
}

/// An ordered set of named tensors; the on-disk carrier for signatures,
/// context rows, cached embeddings, pair matrices and standardizer stats.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorContainer {
    entries: Vec<(String, TensorData)>,
}

impl TensorContainer {
    pub fn new() -> Self {
        TensorContainer::default()
    }

    pub fn push(&mut self, name: &str, data: TensorData) {
        assert!(
            self.get(name).is_none(),
            "duplicate container entry {name:?}"
        );
        self.entries.push((name.to_string(), data));
    }

    pub fn get(&self, name: &str) -> Option<&TensorData> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    pub fn f32_matrix(&self, name: &str) -> Result<(usize, usize, &[f32])> {
        match self.get(name) {
            Some(TensorData::F32 { rows, cols, data }) => Ok((*rows, *cols, data)),
            _ => Err(NnError::Unsupported(format!(
                "container entry {name:?} missing or not f32"
            ))),
        }
    }

    pub fn u32_vec(&self, name: &str) -> Result<&[u32]> {
        match self.get(name) {
            Some(TensorData::U32(v)) => Ok(v),
            _ => Err(NnError::Unsupported(format!(
                "container entry {name:?} missing or not u32"
            ))),
        }
    }

    pub fn u64_vec(&self, name: &str) -> Result<&[u64]> {
        match self.get(name) {
            Some(TensorData::U64(v)) => Ok(v),
            _ => Err(NnError::Unsupported(format!(
                "container entry {name:?} missing or not u64"
            ))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CONTAINER_MAGIC);
        buf.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, data) in &self.entries {
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.push(data.dtype());
            match data {
                TensorData::F32 { rows, cols, data } => {
                    buf.extend_from_slice(&(*rows as u64).to_le_bytes());
                    buf.extend_from_slice(&(*cols as u64).to_le_bytes());
                    for v in data {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                }
                TensorData::U32(v) => {
                    buf.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    buf.extend_from_slice(&1u64.to_le_bytes());
                    for x in v {
                        buf.extend_from_slice(&x.to_le_bytes());
                    }
                }
                TensorData::U64(v) => {
                    buf.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    buf.extend_from_slice(&1u64.to_le_bytes());
                    for x in v {
                        buf.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        append_crc(&mut buf);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let body = checked_body(bytes, CONTAINER_MAGIC)?;
        let mut r = Reader::new(body);
        let version = r.u32()?;
        if version != CONTAINER_VERSION {
            return Err(NnError::VersionMismatch(version));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| NnError::ChecksumMismatch)?;
            let dtype = r.u8()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let len = rows.checked_mul(cols).ok_or(NnError::ChecksumMismatch)?;
            let data = match dtype {
                0 => TensorData::F32 {
                    rows,
                    cols,
                    data: r.f32_vec(len)?,
                },
                2 => TensorData::U32(r.u32_vec(len)?),
                3 => TensorData::U64(r.u64_vec(len)?),
                _ => return Err(NnError::VersionMismatch(version)),
            };
            entries.push((name, data));
        }
        r.finish()?;
        Ok(TensorContainer { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn append_crc(buf: &mut Vec<u8>) {
    let crc = crc32fast::hash(buf);
    buf.extend_from_slice(&crc.to_le_bytes());
}

/// Validate magic and trailing CRC32; return the body between them
/// (including the version word).
fn checked_body<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<&'a [u8]> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(NnError::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(NnError::ChecksumMismatch);
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(payload) != stored {
        return Err(NnError::ChecksumMismatch);
    }
    Ok(&payload[4..])
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(NnError::ChecksumMismatch);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, len: usize) -> Result<Vec<f32>> {
        let raw = self.take(len.checked_mul(4).ok_or(NnError::ChecksumMismatch)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32_vec(&mut self, len: usize) -> Result<Vec<u32>> {
        let raw = self.take(len.checked_mul(4).ok_or(NnError::ChecksumMismatch)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u64_vec(&mut self, len: usize) -> Result<Vec<u64>> {
        let raw = self.take(len.checked_mul(8).ok_or(NnError::ChecksumMismatch)?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Trailing unread bytes after a complete parse mean the file does not
    /// match its own header counts.
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(NnError::ChecksumMismatch);
        }
        Ok(())
    }
}
