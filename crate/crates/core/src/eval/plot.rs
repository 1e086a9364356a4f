use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use super::{EvalReport, SampleRecord};
use crate::data::LabeledImages;
use crate::error::{Error, Result};
use crate::tensor::ActivationTensor;

/// One labelled polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Line chart over α in `[0, 1]` with y in `[0, y_max]`, as standalone SVG.
pub fn curve_svg(title: &str, y_label: &str, y_max: f64, series: &[Series]) -> String {
    let (w, h) = (560.0, 380.0);
    let (left, right, top, bottom) = (64.0, 150.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x = |a: f64| left + a * pw;
    let y = |v: f64| top + ph - (v / y_max).clamp(0.0, 1.0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, left + pw / 2.0, escape(title));
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let _ = writeln!(s, r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#ddd"/>"##, x(0.0), y(f * y_max), x(1.0), y(f * y_max));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 6.0, y(f * y_max) + 4.0, fmt_tick(f * y_max));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, x(f), top + ph + 18.0, fmt_tick(f));
    }
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">attack strength α</text>"#, left + pw / 2.0, h - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, series) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = series.points.iter().map(|&(a, v)| format!("{:.2},{:.2}", x(a), y(v))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for &(a, v) in &series.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#, x(a), y(v));
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 24.0, ly + 4.0, escape(&series.label));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<stem>_accuracy.svg`, `<stem>_confidence.svg` and `<stem>_asr.svg`
/// with one series per labelled report.
pub fn write_curves(dir: &Path, stem: &str, reports: &[(&str, &EvalReport)]) -> Result<Vec<PathBuf>> {
    type Metric = fn(&super::EvalPoint) -> f64;
    let metrics: [(&str, &str, f64, Metric); 3] = [
        ("accuracy", "accuracy", 1.0, |p| p.accuracy),
        ("confidence", "mean confidence", 1.0, |p| p.mean_confidence),
        ("asr", "ASR (%)", 100.0, |p| p.asr),
    ];
    let mut paths = Vec::new();
    for (name, y_label, y_max, get) in metrics {
        let series: Vec<Series> = reports
            .iter()
            .map(|(label, r)| Series {
                label: label.to_string(),
                points: r.points.iter().map(|p| (p.alpha, get(p))).collect(),
            })
            .collect();
        let path = dir.join(format!("{stem}_{name}.svg"));
        let svg = curve_svg(&format!("{y_label} vs attack strength"), y_label, y_max, &series);
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .and_then(|mut f| std::io::Write::write_all(&mut f, svg.as_bytes()))?;
        paths.push(path);
    }
    Ok(paths)
}

const SCALE: u32 = 2;
const TILE: u32 = 32 * SCALE;
const PAD: u32 = 3;
const BAR: u32 = 5;
const CELL_W: u32 = 2 * TILE + 3 * PAD;
const CELL_H: u32 = TILE + BAR + 3 * PAD;

#[derive(Debug, Clone, PartialEq)]
struct Cell {
    record: SampleRecord,
    heat: Vec<f32>,
    heat_hw: (usize, usize),
}

/// Grid of selected samples (columns) under successive passes (rows).
///
/// Each cell holds the input image, a heat map of the channel-mean
/// activation the server received, a border that is green for a correct
/// prediction and red otherwise, and a bar whose length is the confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSheet {
    images: Vec<Vec<f32>>,
    image_hw: (usize, usize),
    rows: Vec<(String, Vec<Cell>)>,
}

impl ContactSheet {
    pub fn new(samples: &LabeledImages<f32>) -> Self {
        let (h, w, _) = samples.shape().as_hwc().unwrap_or((32, 32, 3));
        Self {
            images: (0..samples.len()).map(|i| samples.image(i).values().to_vec()).collect(),
            image_hw: (h, w),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, label: &str, records: &[SampleRecord], received: &[ActivationTensor<f32>]) -> Result<()> {
        if records.len() != self.images.len() || received.len() != self.images.len() {
            return Err(Error::Dimension { left: self.images.len(), right: records.len().min(received.len()) });
        }
        let cells = records
            .iter()
            .zip(received)
            .map(|(r, h)| {
                let (hh, hw, _) = h.shape().as_hwc().unwrap_or((1, h.values().len(), 1));
                let c = h.values().len() / (hh * hw).max(1);
                let heat = h.values().chunks(c.max(1)).map(|px| px.iter().sum::<f32>() / c.max(1) as f32).collect();
                Cell { record: *r, heat, heat_hw: (hh, hw) }
            })
            .collect();
        self.rows.push((label.to_string(), cells));
        Ok(())
    }

    pub fn render(&self) -> RgbImage {
        let cols = self.images.len() as u32;
        let mut img = RgbImage::from_pixel(cols * CELL_W, self.rows.len() as u32 * CELL_H, Rgb([255, 255, 255]));
        for (ri, (_, cells)) in self.rows.iter().enumerate() {
            for (ci, cell) in cells.iter().enumerate() {
                let ox = ci as u32 * CELL_W;
                let oy = ri as u32 * CELL_H;
                let border = if cell.record.correct() { Rgb([40, 160, 60]) } else { Rgb([200, 40, 40]) };
                fill(&mut img, ox, oy, CELL_W, CELL_H, border);
                fill(&mut img, ox + 1, oy + 1, CELL_W - 2, CELL_H - 2, Rgb([255, 255, 255]));
                self.blit_image(&mut img, ci, ox + PAD, oy + PAD);
                blit_heat(&mut img, cell, ox + 2 * PAD + TILE, oy + PAD);
                let len = ((CELL_W - 2 * PAD) as f32 * cell.record.confidence.clamp(0.0, 1.0)) as u32;
                fill(&mut img, ox + PAD, oy + 2 * PAD + TILE, len, BAR, border);
            }
        }
        img
    }

    fn blit_image(&self, img: &mut RgbImage, index: usize, ox: u32, oy: u32) {
        let (h, w) = self.image_hw;
        let px = &self.images[index];
        for y in 0..TILE {
            for x in 0..TILE {
                let sy = (y as usize * h) / TILE as usize;
                let sx = (x as usize * w) / TILE as usize;
                let base = (sy * w + sx) * 3;
                let c = |k: usize| (px.get(base + k).copied().unwrap_or(0.0).clamp(0.0, 1.0) * 255.0).round() as u8;
                img.put_pixel(ox + x, oy + y, Rgb([c(0), c(1), c(2)]));
            }
        }
    }

    /// Row label and per-cell `true,predicted,confidence`, one line per row.
    pub fn legend(&self) -> String {
        let mut out = String::new();
        for (label, cells) in &self.rows {
            out.push_str(label);
            for c in cells {
                let _ = write!(out, ",{}>{}@{:.3}", c.record.true_label, c.record.predicted, c.record.confidence);
            }
            out.push('\n');
        }
        out
    }

    /// Writes the PNG and a `.txt` legend beside it.
    pub fn write(&self, png: &Path) -> Result<()> {
        if png.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("{} exists", png.display()),
            )));
        }
        self.render().save_with_format(png, image::ImageFormat::Png)?;
        let legend = png.with_extension("txt");
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(legend)
            .and_then(|mut f| std::io::Write::write_all(&mut f, self.legend().as_bytes()))?;
        Ok(())
    }
}

fn fill(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, colour: Rgb<u8>) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            img.put_pixel(x, y, colour);
        }
    }
}

/// Channel-mean heat map, scaled per cell, black to yellow.
fn blit_heat(img: &mut RgbImage, cell: &Cell, ox: u32, oy: u32) {
    let (h, w) = cell.heat_hw;
    let max = cell.heat.iter().copied().fold(0.0f32, f32::max);
    let min = cell.heat.iter().copied().fold(f32::INFINITY, f32::min).min(max);
    let span = (max - min).max(1e-12);
    for y in 0..TILE {
        for x in 0..TILE {
            let sy = (y as usize * h) / TILE as usize;
            let sx = (x as usize * w) / TILE as usize;
            let t = ((cell.heat[sy * w + sx] - min) / span).clamp(0.0, 1.0);
            let r = (255.0 * (t * 1.6).min(1.0)) as u8;
            let g = (255.0 * t * t) as u8;
            img.put_pixel(ox + x, oy + y, Rgb([r, g, (40.0 * (1.0 - t)) as u8]));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn svg_has_one_polyline_per_series() {
        let s = curve_svg(
            "acc",
            "accuracy",
            1.0,
            &[
                Series { label: "lerp".into(), points: vec![(0.0, 0.9), (1.0, 0.1)] },
                Series { label: "a<b".into(), points: vec![(0.0, 0.8), (1.0, 0.2)] },
            ],
        );
        assert!(s.starts_with("<svg"));
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("a&lt;b"));
    }

    #[test]
    fn contact_sheet_geometry_and_colours() {
        let samples = crate::data::synthetic_dataset::<f32>(3, 0);
        let mut sheet = ContactSheet::new(&samples);
        let h = ActivationTensor::new(Shape::hwc(2, 2, 2), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
        let ok = SampleRecord { true_label: 1, predicted: 1, confidence: 1.0 };
        let bad = SampleRecord { true_label: 1, predicted: 2, confidence: 0.5 };
        sheet.push_row("clean", &[ok, ok, bad], &[h.clone(), h.clone(), h.clone()]).unwrap();
        sheet.push_row("alpha=1", &[bad, bad, ok], &[h.clone(), h.clone(), h.clone()]).unwrap();
        assert!(sheet.push_row("x", &[ok], std::slice::from_ref(&h)).is_err());
        let img = sheet.render();
        assert_eq!(img.dimensions(), (3 * CELL_W, 2 * CELL_H));
        assert_eq!(*img.get_pixel(0, 0), Rgb([40, 160, 60]));
        assert_eq!(*img.get_pixel(0, CELL_H), Rgb([200, 40, 40]));
        assert_eq!(sheet.legend().lines().next().unwrap(), "clean,1>1@1.000,1>1@1.000,1>2@0.500");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sheet.png");
        sheet.write(&path).unwrap();
        assert!(path.with_extension("txt").exists());
        assert!(sheet.write(&path).is_err());
    }
}
