//! Labeled image sets: CIFAR binary batches, directories of images, and a
//! procedural 10-class generator that emits CIFAR-10-format records.
//!
//! Images are stored one per row, flattened `(H, W, C)`, scaled to `[0, 1]`.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = CIFAR_SIDE * CIFAR_SIDE;
/// Bytes of one CIFAR-10 record: one label byte plus three colour planes.
pub const CIFAR10_RECORD: usize = 1 + 3 * CIFAR_PIXELS;
pub const SYNTHETIC_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImages<T> {
    shape: Shape,
    images: Array2<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> LabeledImages<T> {
    pub fn new(shape: Shape, images: Array2<T>, labels: Vec<usize>) -> Result<Self> {
        if images.ncols() != shape.numel() {
            return Err(Error::Shape {
                expected: shape.0.clone(),
                actual: vec![images.nrows(), images.ncols()],
            });
        }
        if images.nrows() != labels.len() {
            return Err(Error::Precondition(format!(
                "{} images but {} labels",
                images.nrows(),
                labels.len()
            )));
        }
        Ok(Self { shape, images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn images(&self) -> &Array2<T> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> Tensor<T> {
        Tensor::new(self.shape.clone(), self.images.row(i).to_vec()).expect("row matches shape")
    }

    /// Rows at `indices`, in order, as a contiguous batch.
    pub fn gather(&self, indices: &[usize]) -> Array2<T> {
        self.images.select(ndarray::Axis(0), indices)
    }

    pub fn subset(&self, range: Range<usize>) -> Self {
        Self {
            shape: self.shape.clone(),
            images: self.images.slice(ndarray::s![range.clone(), ..]).to_owned(),
            labels: self.labels[range].to_vec(),
        }
    }

    /// `(first n, remainder)`.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        (self.subset(0..n), self.subset(n..self.len()))
    }

    pub fn num_classes_seen(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

fn from_records<T: Scalar>(records: &[(u8, Vec<u8>)]) -> LabeledImages<T> {
    let n = records.len();
    let mut images = Array2::<T>::zeros((n, 3 * CIFAR_PIXELS));
    let scale = T::c(1.0 / 255.0);
    for (mut row, (_, hwc)) in images.rows_mut().into_iter().zip(records) {
        for (dst, &b) in row.iter_mut().zip(hwc) {
            *dst = T::c(b as f64) * scale;
        }
    }
    LabeledImages {
        shape: Shape::hwc(CIFAR_SIDE, CIFAR_SIDE, 3),
        images,
        labels: records.iter().map(|(l, _)| *l as usize).collect(),
    }
}

/// Parses CIFAR-10 binary records (`label, R plane, G plane, B plane`).
pub fn parse_cifar10<T: Scalar>(bytes: &[u8]) -> Result<LabeledImages<T>> {
    if !bytes.len().is_multiple_of(CIFAR10_RECORD) {
        return Err(Error::Format(format!(
            "CIFAR-10 batch length {} is not a multiple of {CIFAR10_RECORD}",
            bytes.len()
        )));
    }
    let records: Vec<(u8, Vec<u8>)> = bytes
        .chunks_exact(CIFAR10_RECORD)
        .map(|rec| {
            let planes = &rec[1..];
            let mut hwc = vec![0u8; 3 * CIFAR_PIXELS];
            for p in 0..CIFAR_PIXELS {
                for c in 0..3 {
                    hwc[p * 3 + c] = planes[c * CIFAR_PIXELS + p];
                }
            }
            (rec[0], hwc)
        })
        .collect();
    Ok(from_records(&records))
}

/// Serializes 32x32x3 images into CIFAR-10 binary records, quantizing each
/// value to `round(255 v)`.
pub fn encode_cifar10<T: Scalar>(data: &LabeledImages<T>) -> Result<Vec<u8>> {
    data.shape.expect(&Shape::hwc(CIFAR_SIDE, CIFAR_SIDE, 3))?;
    let mut out = Vec::with_capacity(data.len() * CIFAR10_RECORD);
    for (row, &label) in data.images.rows().into_iter().zip(&data.labels) {
        if label > u8::MAX as usize {
            return Err(Error::LabelOutOfRange { label, num_classes: 256 });
        }
        out.push(label as u8);
        for c in 0..3 {
            for p in 0..CIFAR_PIXELS {
                let v = row[p * 3 + c].as_f64().clamp(0.0, 1.0);
                out.push((v * 255.0).round() as u8);
            }
        }
    }
    Ok(out)
}

pub fn write_cifar10<T: Scalar>(path: &Path, data: &LabeledImages<T>) -> Result<()> {
    let bytes = encode_cifar10(data)?;
    let mut f = fs::OpenOptions::new().write(true).create_new(true).open(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Directory of class subdirectories (sorted by name, index = label), each
/// holding images. Images are resized to 32x32 RGB.
pub fn load_image_dir<T: Scalar>(dir: &Path) -> Result<LabeledImages<T>> {
    let mut classes: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    if classes.is_empty() {
        return Err(Error::Format(format!("{} has no class subdirectories", dir.display())));
    }
    let mut records = Vec::new();
    for (label, class_dir) in classes.iter().enumerate() {
        if label > u8::MAX as usize {
            return Err(Error::LabelOutOfRange { label, num_classes: 256 });
        }
        let mut files: Vec<PathBuf> = fs::read_dir(class_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            let img = image::open(&file)?
                .resize_exact(CIFAR_SIDE as u32, CIFAR_SIDE as u32, image::imageops::FilterType::Triangle)
                .to_rgb8();
            records.push((label as u8, img.into_raw()));
        }
    }
    Ok(from_records(&records))
}

/// Loads a dataset from a CIFAR-10 binary file, a directory of `*.bin`
/// batches, or a directory of class subdirectories.
pub fn load_dataset<T: Scalar>(path: &Path) -> Result<LabeledImages<T>> {
    if path.is_file() {
        return parse_cifar10(&fs::read(path)?);
    }
    if !path.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("dataset path {} does not exist", path.display()),
        )));
    }
    let mut bins: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "bin"))
        .collect();
    if bins.is_empty() {
        return load_image_dir(path);
    }
    bins.sort();
    let mut bytes = Vec::new();
    for b in bins {
        bytes.extend(fs::read(b)?);
    }
    parse_cifar10(&bytes)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Whether offset `(dx, dy)` from the shape centre lies inside class
/// `class`'s glyph of radius `r`.
fn glyph(class: usize, dx: f64, dy: f64, r: f64) -> bool {
    let d = (dx * dx + dy * dy).sqrt();
    let inside_box = dx.abs() < r && dy.abs() < r;
    match class {
        0 => d < r,
        1 => dx.abs() < 0.8 * r && dy.abs() < 0.8 * r,
        2 => dy > -r && dy < r && dx.abs() < (dy + r) / 2.0,
        3 => inside_box && ((dy + r) / 3.0).floor() as i64 % 2 == 0,
        4 => inside_box && ((dx + r) / 3.0).floor() as i64 % 2 == 0,
        5 => d < r && d > 0.55 * r,
        6 => (dx.abs() < r && dy.abs() < r / 3.0) || (dy.abs() < r && dx.abs() < r / 3.0),
        7 => inside_box && (dx.abs() - dy.abs()).abs() < r / 4.0,
        8 => inside_box && (((dx + r) / 4.0).floor() as i64 + ((dy + r) / 4.0).floor() as i64) % 2 == 0,
        _ => {
            let a = ((dx + r / 2.0).powi(2) + dy * dy).sqrt();
            let b = ((dx - r / 2.0).powi(2) + dy * dy).sqrt();
            a < r / 2.2 || b < r / 2.2
        }
    }
}

/// One procedurally drawn 32x32 RGB image of `class`, as HWC bytes.
fn draw_glyph_image<R: Rng>(rng: &mut R, class: usize) -> Vec<u8> {
    let noise = Normal::new(0.0, 0.06).expect("valid stddev");
    let bg_base = hsv_to_rgb(rng.random_range(0.0..360.0), rng.random_range(0.0..0.35), rng.random_range(0.2..0.8));
    let grad_dir = rng.random_range(0.0..2.0 * PI);
    let grad_amp = rng.random_range(0.0..0.15);
    let hue = class as f64 * 36.0 + rng.random_range(-25.0..25.0);
    let fg = hsv_to_rgb(hue, rng.random_range(0.5..1.0), rng.random_range(0.6..1.0));
    let cx = rng.random_range(10.0..22.0);
    let cy = rng.random_range(10.0..22.0);
    let r = rng.random_range(6.0..11.0);
    let mut out = vec![0u8; 3 * CIFAR_PIXELS];
    for y in 0..CIFAR_SIDE {
        for x in 0..CIFAR_SIDE {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let g = grad_amp * ((fx - 16.0) * grad_dir.cos() + (fy - 16.0) * grad_dir.sin()) / 16.0;
            let on = glyph(class, fx - cx, fy - cy, r);
            for c in 0..3 {
                let base = if on { fg[c] } else { bg_base[c] + g };
                let v = (base + noise.sample(rng)).clamp(0.0, 1.0);
                out[(y * CIFAR_SIDE + x) * 3 + c] = (v * 255.0).round() as u8;
            }
        }
    }
    out
}

/// `n` procedurally generated 10-class images; labels cycle `0..10`.
/// Deterministic in `(n, seed)` and byte-exact under CIFAR-10 encoding.
pub fn synthetic_dataset<T: Scalar>(n: usize, seed: u64) -> LabeledImages<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records: Vec<(u8, Vec<u8>)> = (0..n)
        .map(|i| {
            let class = i % SYNTHETIC_CLASSES;
            (class as u8, draw_glyph_image(&mut rng, class))
        })
        .collect();
    from_records(&records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cifar_round_trip_is_exact_for_quantized_data() {
        let data = synthetic_dataset::<f32>(12, 5);
        let bytes = encode_cifar10(&data).unwrap();
        assert_eq!(bytes.len(), 12 * CIFAR10_RECORD);
        let back = parse_cifar10::<f32>(&bytes).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn cifar_planes_map_to_hwc() {
        let mut rec = vec![0u8; CIFAR10_RECORD];
        rec[0] = 7;
        rec[1] = 255; // R of pixel 0
        rec[1 + CIFAR_PIXELS + 1] = 255; // G of pixel 1
        let d = parse_cifar10::<f64>(&rec).unwrap();
        assert_eq!(d.labels(), &[7]);
        assert_eq!(d.images()[[0, 0]], 1.0);
        assert_eq!(d.images()[[0, 4]], 1.0);
        assert_eq!(d.images()[[0, 1]], 0.0);
    }

    #[test]
    fn truncated_batch_is_rejected() {
        assert!(parse_cifar10::<f32>(&[0u8; CIFAR10_RECORD + 3]).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_balanced() {
        let a = synthetic_dataset::<f32>(50, 9);
        assert_eq!(a, synthetic_dataset::<f32>(50, 9));
        assert_ne!(a, synthetic_dataset::<f32>(50, 10));
        for c in 0..10 {
            assert_eq!(a.labels().iter().filter(|&&l| l == c).count(), 5);
        }
        assert!(a.images().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn loads_class_directories() {
        let dir = tempfile::tempdir().unwrap();
        for (name, shade) in [("a_cat", 10u8), ("b_dog", 200u8)] {
            let d = dir.path().join(name);
            fs::create_dir(&d).unwrap();
            let img = image::RgbImage::from_pixel(8, 8, image::Rgb([shade, shade, shade]));
            img.save(d.join("0.png")).unwrap();
        }
        let data = load_dataset::<f32>(dir.path()).unwrap();
        assert_eq!(data.labels(), &[0, 1]);
        assert_eq!(data.shape(), &Shape::hwc(32, 32, 3));
        assert!((data.images()[[1, 0]] - 200.0 / 255.0).abs() < 1e-6);
    }
}
