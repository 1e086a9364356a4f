//! Little-endian f32 parameter blobs.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Writes the concatenation of `parts` as f32 values; never overwrites.
pub(crate) fn write_f32_blob<T: Scalar>(path: &Path, parts: &[&[T]]) -> Result<()> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut bytes = Vec::with_capacity(total * 4);
    for p in parts {
        for v in *p {
            bytes.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    let mut f = fs::OpenOptions::new().write(true).create_new(true).open(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub(crate) fn read_f32_blob(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!("{} is not a whole number of f32 values", path.display())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Fills `slots` in order from `values`, which must match in total length.
pub(crate) fn fill_params<T: Scalar>(slots: Vec<&mut [T]>, values: Vec<f32>, what: &str) -> Result<()> {
    let want: usize = slots.iter().map(|s| s.len()).sum();
    if want != values.len() {
        return Err(Error::Format(format!("{what}: expected {want} floats, found {}", values.len())));
    }
    let mut it = values.into_iter();
    for slot in slots {
        for v in slot.iter_mut() {
            *v = T::from_f32_lossy(it.next().expect("length checked"));
        }
    }
    Ok(())
}
