//! `PSPT` tensor files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size      | field                               |
//! |--------|-----------|-------------------------------------|
//! | 0      | 4         | magic `b"PSPT"`                     |
//! | 4      | 1         | version (1)                         |
//! | 5      | 1         | dtype (0 = f32)                     |
//! | 6      | 1         | ndim (1 or 2)                       |
//! | 7      | 4 × ndim  | dims, u32 each                      |
//! | ...    | 4 × ∏dims | payload, row-major f32              |

use std::fs;
use std::io;
use std::path::Path;

use ndarray::{Array1, Array2};

pub const MAGIC: &[u8; 4] = b"PSPT";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;
/// Largest element count a tensor may declare.
pub const MAX_ELEMENTS: u64 = 1 << 31;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("bad magic {0:?}, expected \"PSPT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("unsupported rank {0}, expected 1 or 2")]
    UnsupportedRank(u8),
    #[error("dimension {index} is zero")]
    ZeroDim { index: usize },
    #[error("element count {0} exceeds 2^31")]
    DimOverflow(u64),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("truncated header")]
    TruncatedHeader,
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),
    #[error("shape mismatch: expected {expected}, got {got:?}")]
    Shape { expected: &'static str, got: Vec<usize> },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// A rank-1 or rank-2 f32 tensor, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn vector(data: Vec<f32>) -> Self {
        Tensor {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn from_array2(a: &Array2<f32>) -> Self {
        Tensor {
            dims: vec![a.nrows(), a.ncols()],
            data: a.iter().copied().collect(),
        }
    }

    pub fn from_array1(a: &Array1<f32>) -> Self {
        Tensor::vector(a.to_vec())
    }

    pub fn into_array2(self) -> Result<Array2<f32>, TensorError> {
        match self.dims[..] {
            [rows, cols] => Ok(Array2::from_shape_vec((rows, cols), self.data)
                .expect("payload length checked at construction")),
            _ => Err(TensorError::Shape {
                expected: "rank-2 matrix",
                got: self.dims,
            }),
        }
    }

    pub fn into_array1(self) -> Result<Array1<f32>, TensorError> {
        match self.dims[..] {
            [_] => Ok(Array1::from(self.data)),
            _ => Err(TensorError::Shape {
                expected: "rank-1 vector",
                got: self.dims,
            }),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(7 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        if bytes.len() < 7 {
            if bytes.len() >= 4 && &bytes[..4] != MAGIC {
                return Err(TensorError::BadMagic(bytes[..4].try_into().unwrap()));
            }
            return Err(TensorError::TruncatedHeader);
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(TensorError::BadMagic(magic));
        }
        if bytes[4] != VERSION {
            return Err(TensorError::UnsupportedVersion(bytes[4]));
        }
        if bytes[5] != DTYPE_F32 {
            return Err(TensorError::UnsupportedDtype(bytes[5]));
        }
        let ndim = bytes[6];
        if !(1..=2).contains(&ndim) {
            return Err(TensorError::UnsupportedRank(ndim));
        }
        let header_len = 7 + 4 * ndim as usize;
        if bytes.len() < header_len {
            return Err(TensorError::TruncatedHeader);
        }
        let dims: Vec<usize> = bytes[7..header_len]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        if let Some(index) = dims.iter().position(|&d| d == 0) {
            return Err(TensorError::ZeroDim { index });
        }
        let count = dims.iter().map(|&d| d as u64).product::<u64>();
        if count > MAX_ELEMENTS {
            return Err(TensorError::DimOverflow(count));
        }
        let expected = 4 * count;
        let found = (bytes.len() - header_len) as u64;
        if found < expected {
            return Err(TensorError::TruncatedPayload { expected, found });
        }
        if found > expected {
            return Err(TensorError::TrailingBytes(found - expected));
        }
        let data = bytes[header_len..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor { dims, data })
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, TensorError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TensorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Tensor::from_bytes(&bytes)
}

/// Writes `tensor`. Panics if the tensor is not rank 1 or 2 or its payload
/// length disagrees with its dims.
pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<(), TensorError> {
    assert!(
        (1..=2).contains(&tensor.dims.len()),
        "tensor rank must be 1 or 2"
    );
    assert_eq!(
        tensor.dims.iter().product::<usize>(),
        tensor.data.len(),
        "payload length must match dims"
    );
    let path = path.as_ref();
    fs::write(path, tensor.to_bytes()).map_err(|source| TensorError::Io {
        path: path.display().to_string(),
        source,
    })
}
