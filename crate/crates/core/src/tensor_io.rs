//! FMX binary tensor files and layer-stack manifests.
//!
//! An FMX file is the magic `FMX1`, a little-endian `u32` header length, a
//! UTF-8 JSON header and then `frames * dim` little-endian `f32` values in
//! row-major order. The header is the only source of shape information.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};

pub const FMX_MAGIC: &[u8; 4] = b"FMX1";

/// A `frames x dim` feature matrix sampled at `frame_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f32>,
    frames: usize,
    dim: usize,
    frame_rate_hz: f64,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f32>, frames: usize, dim: usize, frame_rate_hz: f64) -> Result<Self> {
        if dim == 0 {
            return Err(ProbeError::Validation("dim must be positive".into()));
        }
        if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
            return Err(ProbeError::Validation(format!(
                "frame_rate_hz must be positive, got {frame_rate_hz}"
            )));
        }
        if data.len() != frames * dim {
            return Err(ProbeError::Validation(format!(
                "data length {} != frames {} x dim {}",
                data.len(),
                frames,
                dim
            )));
        }
        Ok(Self {
            data,
            frames,
            dim,
            frame_rate_hz,
        })
    }

    /// Builds a matrix from rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f32>], frame_rate_hz: f64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(ProbeError::Validation("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(data, rows.len(), dim, frame_rate_hz)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>, frame_rate_hz: f64) -> Result<Self> {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter().map(|&v| v as f32));
        }
        Self::new(data, m.nrows(), m.ncols(), frame_rate_hz)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.data[frame * self.dim..(frame + 1) * self.dim]
    }

    /// Duration covered by the frames, in seconds.
    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.frame_rate_hz
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.frames, self.dim, self.data.iter().map(|&v| f64::from(v)))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FmxHeader {
    dtype: String,
    order: String,
    frames: usize,
    dim: usize,
    frame_rate_hz: f64,
}

struct CountingWriter<W> {
    inner: W,
    written: u64,
}

impl<W: Write> CountingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes).map_err(|source| ProbeError::Write {
            offset: self.written,
            source,
        })?;
        self.written += bytes.len() as u64;
        Ok(())
    }
}

/// Writes `matrix` as FMX and returns the number of bytes written.
pub fn write_fmx<W: Write>(matrix: &FeatureMatrix, destination: W) -> Result<u64> {
    let header = FmxHeader {
        dtype: "f32".into(),
        order: "row-major".into(),
        frames: matrix.frames,
        dim: matrix.dim,
        frame_rate_hz: matrix.frame_rate_hz,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let header_len = u32::try_from(header.len()).map_err(|_| ProbeError::Validation("header too large".into()))?;

    let mut out = CountingWriter {
        inner: destination,
        written: 0,
    };
    out.put(FMX_MAGIC)?;
    out.put(&header_len.to_le_bytes())?;
    out.put(&header)?;
    let mut payload = Vec::with_capacity(matrix.data.len() * 4);
    for v in &matrix.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.put(&payload)?;
    out.inner.flush().map_err(|source| ProbeError::Write {
        offset: out.written,
        source,
    })?;
    Ok(out.written)
}

pub fn fmx_bytes(matrix: &FeatureMatrix) -> Vec<u8> {
    let mut buf = Vec::new();
    write_fmx(matrix, &mut buf).expect("writing to memory cannot fail");
    buf
}

/// Reads an FMX stream, validating shape against the header and rejecting non-finite values.
pub fn read_fmx<R: Read>(mut source: R) -> Result<FeatureMatrix> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|e| ProbeError::io("<fmx stream>", e))?;
    parse_fmx(&bytes)
}

pub fn read_fmx_file(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| ProbeError::io(path, e))?;
    parse_fmx(&bytes).map_err(|e| match e {
        ProbeError::Format(m) => ProbeError::Format(format!("{}: {m}", path.display())),
        ProbeError::Data(m) => ProbeError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn parse_fmx(bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < 8 || &bytes[..4] != FMX_MAGIC {
        return Err(ProbeError::Format("not FMX".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8 + header_len;
    if bytes.len() < header_end {
        return Err(ProbeError::Format(format!(
            "header declares {header_len} bytes but only {} remain",
            bytes.len() - 8
        )));
    }
    let header: FmxHeader =
        serde_json::from_slice(&bytes[8..header_end]).map_err(|e| ProbeError::Format(format!("bad header: {e}")))?;
    if header.dtype != "f32" {
        return Err(ProbeError::Format(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.order != "row-major" {
        return Err(ProbeError::Format(format!("unsupported order {:?}", header.order)));
    }

    let payload = &bytes[header_end..];
    let expected = header
        .frames
        .checked_mul(header.dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| ProbeError::Format("header shape overflows".into()))?;
    if payload.len() != expected {
        return Err(ProbeError::Format(format!(
            "payload size mismatch: expected {expected} bytes, got {} (shortfall {})",
            payload.len(),
            expected as i64 - payload.len() as i64
        )));
    }

    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
        return Err(ProbeError::Data(format!(
            "non-finite value at index {idx} (frame {}, dim {})",
            idx / header.dim.max(1),
            idx % header.dim.max(1)
        )));
    }
    FeatureMatrix::new(data, header.frames, header.dim, header.frame_rate_hz)
        .map_err(|e| ProbeError::Format(format!("invalid header: {e}")))
}

/// Per-layer accumulated features for one utterance or corpus slice.
/// Layer index 1 (slot 0) is the first codebook layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub source_id: String,
    layers: Vec<FeatureMatrix>,
}

impl LayerStack {
    pub fn new(source_id: impl Into<String>, layers: Vec<FeatureMatrix>) -> Result<Self> {
        let source_id = source_id.into();
        let first = layers
            .first()
            .ok_or_else(|| ProbeError::Validation("at least one layer is required".into()))?;
        for (i, layer) in layers.iter().enumerate().skip(1) {
            if layer.frames != first.frames {
                return Err(ProbeError::Consistency(format!(
                    "layer {} has {} frames but layer 1 has {}",
                    i + 1,
                    layer.frames,
                    first.frames
                )));
            }
            if layer.frame_rate_hz != first.frame_rate_hz {
                return Err(ProbeError::Consistency(format!(
                    "layer {} frame rate {} differs from layer 1 frame rate {}",
                    i + 1,
                    layer.frame_rate_hz,
                    first.frame_rate_hz
                )));
            }
        }
        Ok(Self { source_id, layers })
    }

    pub fn layers(&self) -> &[FeatureMatrix] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn frames(&self) -> usize {
        self.layers[0].frames
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.layers[0].frame_rate_hz
    }
}

/// Manifest describing a layer stack on disk.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StackManifest {
    pub source_id: String,
    pub frame_rate_hz: f64,
    pub layers: Vec<String>,
    /// Allows layers with differing feature dims.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub mixed_dims: bool,
}

/// Loads the stack described by `manifest`, resolving layer paths against `base`.
pub fn read_stack(manifest: &str, base: &Path) -> Result<LayerStack> {
    let manifest: StackManifest =
        serde_json::from_str(manifest).map_err(|e| ProbeError::Validation(format!("bad manifest: {e}")))?;
    if manifest.layers.is_empty() {
        return Err(ProbeError::Validation("manifest must list at least one layer".into()));
    }
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for rel in &manifest.layers {
        layers.push(read_fmx_file(&base.join(rel))?);
    }
    for (i, layer) in layers.iter().enumerate() {
        if layer.frame_rate_hz != manifest.frame_rate_hz {
            return Err(ProbeError::Consistency(format!(
                "layer {} ({}) frame rate {} != manifest frame rate {}",
                i + 1,
                manifest.layers[i],
                layer.frame_rate_hz,
                manifest.frame_rate_hz
            )));
        }
        if i > 0 && layer.frames != layers[0].frames {
            return Err(ProbeError::Consistency(format!(
                "layer {} ({}) has {} frames but layer 1 ({}) has {}",
                i + 1,
                manifest.layers[i],
                layer.frames,
                manifest.layers[0],
                layers[0].frames
            )));
        }
        if !manifest.mixed_dims && layer.dim != layers[0].dim {
            return Err(ProbeError::Consistency(format!(
                "layer {} ({}) has dim {} but layer 1 ({}) has dim {}",
                i + 1,
                manifest.layers[i],
                layer.dim,
                manifest.layers[0],
                layers[0].dim
            )));
        }
    }
    LayerStack::new(manifest.source_id, layers)
}

pub fn read_stack_file(path: &Path) -> Result<LayerStack> {
    let text = fs::read_to_string(path).map_err(|e| ProbeError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    read_stack(&text, base)
}

/// Serializes a stack as in-memory files: `(relative name, bytes)` pairs, manifest last.
pub fn stack_files(stack: &LayerStack, manifest_name: &str) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::with_capacity(stack.num_layers() + 1);
    let mut names = Vec::with_capacity(stack.num_layers());
    for (i, layer) in stack.layers().iter().enumerate() {
        let name = format!("layer_{:02}.fmx", i + 1);
        files.push((name.clone(), fmx_bytes(layer)));
        names.push(name);
    }
    let manifest = StackManifest {
        source_id: stack.source_id.clone(),
        frame_rate_hz: stack.frame_rate_hz(),
        layers: names,
        mixed_dims: stack.layers().iter().any(|l| l.dim != stack.layers()[0].dim),
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    files.push((manifest_name.to_string(), json));
    files
}
