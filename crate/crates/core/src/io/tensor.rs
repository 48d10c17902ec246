//! The `.f32` tensor container: the authoritative on-disk representation of
//! every image, mask, score map and parameter vector in the pipeline.
//!
//! Layout: magic `FQL1` (4 bytes), then little-endian `u32` channels, height,
//! width, then `channels * height * width` little-endian `f32` values,
//! row-major within each channel, channel-major overall.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"FQL1";

/// A dense little-endian f32 tensor with a `channels x height x width` shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorContainer {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
    pub data: Vec<f32>,
}

impl TensorContainer {
    pub fn new(channels: u32, height: u32, width: u32, data: Vec<f32>) -> Self {
        assert_eq!(
            data.len(),
            (channels * height * width) as usize,
            "tensor payload length does not match declared shape"
        );
        TensorContainer {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Serialize to the container byte format.
pub fn encode_tensor(t: &TensorContainer) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * t.data.len());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&t.channels.to_le_bytes());
    out.extend_from_slice(&t.height.to_le_bytes());
    out.extend_from_slice(&t.width.to_le_bytes());
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse the container byte format; errors carry the byte offset of the
/// first problem.
pub fn decode_tensor_bytes(bytes: &[u8], origin: &Path) -> Result<TensorContainer> {
    let fail = |offset: u64, reason: String| Error::TensorFormat {
        path: origin.to_path_buf(),
        offset,
        reason,
    };
    if bytes.len() < 4 {
        return Err(fail(0, "file shorter than the 4-byte magic".into()));
    }
    if bytes[0..4] != TENSOR_MAGIC {
        return Err(fail(
            0,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[0..4]),
                String::from_utf8_lossy(&TENSOR_MAGIC)
            ),
        ));
    }
    if bytes.len() < 16 {
        return Err(fail(4, "truncated header (need 12 bytes of dimensions)".into()));
    }
    let read_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let channels = read_u32(4);
    let height = read_u32(8);
    let width = read_u32(12);
    let count = channels as usize * height as usize * width as usize;
    let expected_len = 16 + 4 * count;
    if bytes.len() != expected_len {
        return Err(fail(
            bytes.len().min(expected_len) as u64,
            format!(
                "payload length mismatch: declared {}x{}x{} needs {} bytes total, file has {}",
                channels,
                height,
                width,
                expected_len,
                bytes.len()
            ),
        ));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(TensorContainer {
        channels,
        height,
        width,
        data,
    })
}

pub fn write_tensor(path: &Path, t: &TensorContainer) -> Result<()> {
    fs::write(path, encode_tensor(t)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<TensorContainer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoded_layout_is_exact() {
        let t = TensorContainer::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let bytes = encode_tensor(&t);
        assert_eq!(bytes.len(), 4 + 12 + 16);
        assert_eq!(&bytes[0..4], b"FQL1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1.0);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let t = TensorContainer::new(3, 2, 1, vec![0.1, -2.5, f32::MIN_POSITIVE, 7.0, 0.0, 1e30]);
        let back = decode_tensor_bytes(&encode_tensor(&t), Path::new("mem")).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn bad_magic_rejected() {
        let t = TensorContainer::new(1, 1, 1, vec![1.0]);
        let mut bytes = encode_tensor(&t);
        bytes[3] = b'0'; // "FQL0"
        let err = decode_tensor_bytes(&bytes, Path::new("mem")).unwrap_err();
        match err {
            Error::TensorFormat { offset, reason, .. } => {
                assert_eq!(offset, 0);
                assert!(reason.contains("FQL0"), "{reason}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn truncated_payload_rejected() {
        let t = TensorContainer::new(1, 2, 2, vec![1.0; 4]);
        let mut bytes = encode_tensor(&t);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            decode_tensor_bytes(&bytes, Path::new("mem")),
            Err(Error::TensorFormat { .. })
        ));
    }
}
