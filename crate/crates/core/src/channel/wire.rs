//! `ADVR` frame layout, all integers and floats little-endian:
//!
//! ```text
//! magic   4 bytes  "ADVR"
//! version u8       1
//! dtype   u8       0 = float32
//! ndim    u8
//! shape   ndim x u32
//! payload product(shape) x f32, row-major
//! ```
//!
//! Capture files (`.advr`) are frames concatenated back to back.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{ActivationTensor, Shape};

pub const MAGIC: &[u8; 4] = b"ADVR";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;
pub const CAPTURE_EXTENSION: &str = "advr";

const HEADER: usize = 4 + 1 + 1 + 1;

/// Encoded size of a frame carrying `shape`.
pub fn frame_len(shape: &Shape) -> usize {
    HEADER + 4 * shape.dims().len() + 4 * shape.numel()
}

pub fn serialize(h: &ActivationTensor<f32>) -> Result<Vec<u8>> {
    h.check_finite()?;
    let dims = h.shape().dims();
    let ndim = u8::try_from(dims.len()).map_err(|_| Error::Format(format!("{} dimensions exceed 255", dims.len())))?;
    let mut out = Vec::with_capacity(frame_len(h.shape()));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.push(ndim);
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in h.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn need(bytes: &[u8], needed: usize) -> Result<()> {
    if bytes.len() < needed {
        Err(Error::Truncated {
            needed,
            available: bytes.len(),
        })
    } else {
        Ok(())
    }
}

/// Decodes the frame at the start of `bytes`, returning it with the number
/// of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(ActivationTensor<f32>, usize)> {
    need(bytes, 4)?;
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:02x?}", &bytes[..4])));
    }
    need(bytes, HEADER)?;
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype {}", bytes[5])));
    }
    let ndim = bytes[6] as usize;
    need(bytes, HEADER + 4 * ndim)?;
    let dims: Vec<usize> = bytes[HEADER..HEADER + 4 * ndim]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let shape = Shape(dims);
    let total = frame_len(&shape);
    need(bytes, total)?;
    let values: Vec<f32> = bytes[HEADER + 4 * ndim..total]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((ActivationTensor::new(shape, values)?, total))
}

/// Decodes exactly one frame; trailing bytes are a format error.
pub fn deserialize(bytes: &[u8]) -> Result<ActivationTensor<f32>> {
    let (h, used) = decode_frame(bytes)?;
    if used != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after frame", bytes.len() - used)));
    }
    Ok(h)
}

pub fn encode_capture(frames: &[ActivationTensor<f32>]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for f in frames {
        out.extend(serialize(f)?);
    }
    Ok(out)
}

pub fn decode_capture(mut bytes: &[u8]) -> Result<Vec<ActivationTensor<f32>>> {
    let mut frames = Vec::new();
    while !bytes.is_empty() {
        let (h, used) = decode_frame(bytes)?;
        frames.push(h);
        bytes = &bytes[used..];
    }
    Ok(frames)
}

/// Writes a new capture file; an existing file is never overwritten.
pub fn write_capture(path: &Path, frames: &[ActivationTensor<f32>]) -> Result<()> {
    let bytes = encode_capture(frames)?;
    let mut f = fs::OpenOptions::new().write(true).create_new(true).open(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_capture(path: &Path) -> Result<Vec<ActivationTensor<f32>>> {
    decode_capture(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, values: Vec<f32>) -> ActivationTensor<f32> {
        ActivationTensor::new(shape, values).unwrap()
    }

    #[test]
    fn single_zero_is_23_bytes() {
        let bytes = serialize(&t(Shape::hwc(1, 1, 1), vec![0.0])).unwrap();
        assert_eq!(bytes.len(), 23);
        assert_eq!(&bytes[..7], b"ADVR\x01\x00\x03");
        assert_eq!(&bytes[7..19], &[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[19..], &[0, 0, 0, 0]);
    }

    #[test]
    fn ones_encode_as_ieee754() {
        let bytes = serialize(&t(Shape::hwc(2, 2, 1), vec![1.0; 4])).unwrap();
        assert_eq!(&bytes[bytes.len() - 16..], [0x00, 0x00, 0x80, 0x3F].repeat(4).as_slice());
    }

    #[test]
    fn nan_is_not_serializable() {
        let h = ActivationTensor::new_unchecked(Shape::flat(2), vec![1.0, f32::NAN]);
        assert!(matches!(serialize(&h), Err(Error::NonFinite { index: 1 })));
        let h = ActivationTensor::new_unchecked(Shape::flat(1), vec![f32::INFINITY]);
        assert!(serialize(&h).is_err());
    }

    #[test]
    fn round_trip_is_bitwise() {
        let h = t(Shape::hwc(2, 3, 2), vec![-0.0, 1.5, f32::MIN_POSITIVE, 3.25e-41, f32::MAX, -7.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let back = deserialize(&serialize(&h).unwrap()).unwrap();
        let bits = |x: &ActivationTensor<f32>| x.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&h));
        assert_eq!(back.shape(), h.shape());
    }

    #[test]
    fn bad_magic_version_dtype() {
        let good = serialize(&t(Shape::flat(1), vec![2.0])).unwrap();
        let mut b = good.clone();
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(deserialize(&b), Err(Error::Format(_))));
        let mut b = good.clone();
        b[4] = 2;
        assert!(matches!(deserialize(&b), Err(Error::Format(_))));
        let mut b = good;
        b[5] = 1;
        assert!(matches!(deserialize(&b), Err(Error::Format(_))));
    }

    #[test]
    fn short_payload_is_truncation() {
        let mut b = serialize(&t(Shape::hwc(2, 2, 1), vec![1.0; 4])).unwrap();
        b.truncate(b.len() - 8);
        assert!(matches!(deserialize(&b), Err(Error::Truncated { needed: 35, available: 27 })));
        assert!(matches!(deserialize(b"ADV"), Err(Error::Truncated { .. })));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut b = serialize(&t(Shape::flat(1), vec![2.0])).unwrap();
        b.push(0);
        assert!(matches!(deserialize(&b), Err(Error::Format(_))));
    }

    #[test]
    fn capture_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.advr");
        let frames = vec![t(Shape::hwc(1, 2, 1), vec![1.0, 2.0]), t(Shape::hwc(1, 2, 1), vec![3.0, 4.0])];
        write_capture(&path, &frames).unwrap();
        assert_eq!(read_capture(&path).unwrap(), frames);
        assert!(write_capture(&path, &frames).is_err());
        write_capture(&dir.path().join("empty.advr"), &[]).unwrap();
        assert!(read_capture(&dir.path().join("empty.advr")).unwrap().is_empty());
    }
}
