//! Framework-independent tensor and raster IO.
//!
//! STF layout (all integers little-endian):
//!
//! ```text
//! "STF1" | dtype: u8 (0 = f32, 1 = u8) | ndim: u8 | ndim x u64 extents | payload
//! ```
//!
//! The payload is the row-major scalar data, each f32 stored little-endian.
//! Rasters are binary Netpbm: P5 (grayscale) and P6 (RGB), maxval 255.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

const STF_MAGIC: &[u8; 4] = b"STF1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not an STF file")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported dtype code {code}")]
    UnsupportedDtype { path: PathBuf, code: u8 },
    #[error("{path}: size mismatch (expected {expected} payload bytes, found {found})")]
    SizeMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: unsupported image format: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Scalar payload of a tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype_code(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::U8(_) => 1,
        }
    }

    fn scalar_size(code: u8) -> Option<usize> {
        match code {
            0 => Some(4),
            1 => Some(1),
            _ => None,
        }
    }
}

/// Dense row-major tensor, outermost extent first.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self, IoError> {
        if dims.is_empty() || dims.len() > u8::MAX as usize {
            return Err(IoError::InvalidTensor(format!(
                "rank must be in 1..=255, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(IoError::InvalidTensor(format!(
                "zero extent in dims {dims:?}"
            )));
        }
        let numel = checked_numel(&dims)
            .ok_or_else(|| IoError::InvalidTensor(format!("dims {dims:?} overflow")))?;
        if numel != data.len() {
            return Err(IoError::InvalidTensor(format!(
                "dims {dims:?} imply {numel} elements, data holds {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, IoError> {
        Self::new(dims, TensorData::F32(data))
    }

    pub fn from_u8(dims: Vec<usize>, data: Vec<u8>) -> Result<Self, IoError> {
        Self::new(dims, TensorData::U8(data))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::U8(_) => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Some(v),
            TensorData::F32(_) => None,
        }
    }

    /// Serializes to the STF byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(STF_MAGIC);
        out.push(self.data.dtype_code());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    /// Parses the STF byte layout; `path` is only used for error context.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, IoError> {
        let p = || path.to_path_buf();
        if bytes.len() < 6 || &bytes[..4] != STF_MAGIC {
            return Err(IoError::BadMagic { path: p() });
        }
        let code = bytes[4];
        let scalar =
            TensorData::scalar_size(code).ok_or(IoError::UnsupportedDtype { path: p(), code })?;
        let ndim = bytes[5] as usize;
        let header = 6 + 8 * ndim;
        if bytes.len() < header {
            return Err(IoError::SizeMismatch {
                path: p(),
                expected: header,
                found: bytes.len(),
            });
        }
        let dims: Vec<usize> = bytes[6..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let payload = &bytes[header..];
        let expected = checked_numel(&dims)
            .and_then(|n| n.checked_mul(scalar))
            .ok_or_else(|| IoError::InvalidTensor(format!("dims {dims:?} overflow")))?;
        if payload.len() != expected {
            return Err(IoError::SizeMismatch {
                path: p(),
                expected,
                found: payload.len(),
            });
        }
        let data = match code {
            0 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            _ => TensorData::U8(payload.to_vec()),
        };
        Tensor::new(dims, data).map_err(|e| match e {
            IoError::InvalidTensor(msg) => {
                IoError::InvalidTensor(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }
}

fn checked_numel(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, t.to_bytes()).map_err(io_err(path))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, IoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    Tensor::from_bytes(&bytes, path)
}

/// 8-bit raster, interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self, IoError> {
        if channels != 1 && channels != 3 {
            return Err(IoError::InvalidImage(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(IoError::InvalidImage(format!(
                "{width}x{height}x{channels} needs {} bytes, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self, IoError> {
        Self::new(width, height, channels, vec![0; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }
}

pub fn write_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<RasterImage, IoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_netpbm(&bytes, path)
}

fn parse_netpbm(bytes: &[u8], path: &Path) -> Result<RasterImage, IoError> {
    let unsupported = |reason: String| IoError::UnsupportedFormat {
        path: path.to_path_buf(),
        reason,
    };
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(other) => {
            return Err(unsupported(format!(
                "header {:?}, expected P5 or P6",
                String::from_utf8_lossy(other)
            )))
        }
        None => return Err(unsupported("empty file".into())),
    };

    // Three whitespace-separated header fields follow the magic; '#' starts a comment.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| unsupported("malformed header".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(unsupported("malformed header".into()));
    }
    pos += 1;

    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(unsupported(format!("maxval {maxval}, expected 255")));
    }
    let expected = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() != expected {
        return Err(IoError::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            found: raster.len(),
        });
    }
    RasterImage::new(width, height, channels, raster.to_vec())
}
