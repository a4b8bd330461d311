//! Minimal raster figures: colour-mapped panels, line charts and
//! histograms, drawn straight into RGB buffers (no text rendering).

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};
use ndarray::Array2;
use velgan_core::metrics::Histogram;

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
pub const BLUE: Rgb<u8> = Rgb([31, 119, 180]);
pub const ORANGE: Rgb<u8> = Rgb([255, 127, 14]);

/// Viridis-like ramp through five anchor colours.
pub fn colormap(t: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let c = |k: usize| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Each sample becomes a `scale × scale` block; values map `lo..hi` onto
/// the colour ramp. Row 0 (shallowest time) is at the top.
pub fn heatmap(data: &Array2<f64>, lo: f64, hi: f64, scale: u32) -> RgbImage {
    let (rows, cols) = data.dim();
    let span = if hi > lo { hi - lo } else { 1.0 };
    RgbImage::from_fn(cols as u32 * scale, rows as u32 * scale, |x, y| {
        colormap((data[[(y / scale) as usize, (x / scale) as usize]] - lo) / span)
    })
}

/// Places images left to right with a white gutter.
pub fn hstack(images: &[RgbImage], gap: u32) -> RgbImage {
    let w = images.iter().map(|i| i.width()).sum::<u32>() + gap * images.len().saturating_sub(1) as u32;
    let h = images.iter().map(|i| i.height()).max().unwrap_or(0);
    let mut out = RgbImage::from_pixel(w.max(1), h.max(1), BG);
    let mut x0 = 0;
    for img in images {
        image::imageops::replace(&mut out, img, x0 as i64, 0);
        x0 += img.width() + gap;
    }
    out
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

struct Frame {
    w: u32,
    h: u32,
    margin: u32,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64, y: f64) -> (i64, i64) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        let pw = (self.w - 2 * self.margin) as f64;
        let ph = (self.h - 2 * self.margin) as f64;
        let fx = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.5 };
        let fy = if y1 > y0 { (y - y0) / (y1 - y0) } else { 0.5 };
        (
            (self.margin as f64 + fx * pw).round() as i64,
            (self.h as f64 - self.margin as f64 - fy * ph).round() as i64,
        )
    }

    fn draw_axes(&self, img: &mut RgbImage, ticks: usize) {
        for k in 0..=ticks {
            let f = k as f64 / ticks as f64;
            let gx = self.x_range.0 + f * (self.x_range.1 - self.x_range.0);
            let gy = self.y_range.0 + f * (self.y_range.1 - self.y_range.0);
            line(img, self.px(gx, self.y_range.0), self.px(gx, self.y_range.1), GRID);
            line(img, self.px(self.x_range.0, gy), self.px(self.x_range.1, gy), GRID);
        }
        line(img, self.px(self.x_range.0, self.y_range.0), self.px(self.x_range.1, self.y_range.0), AXIS);
        line(img, self.px(self.x_range.0, self.y_range.0), self.px(self.x_range.0, self.y_range.1), AXIS);
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

/// Polyline chart of one or more `(x, y)` series with a light grid.
pub fn line_chart(series: &[(&[(f64, f64)], Rgb<u8>)], w: u32, h: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(w, h, BG);
    let frame = Frame {
        w,
        h,
        margin: 24,
        x_range: padded_range(series.iter().flat_map(|(s, _)| s.iter().map(|p| p.0))),
        y_range: padded_range(series.iter().flat_map(|(s, _)| s.iter().map(|p| p.1))),
    };
    frame.draw_axes(&mut img, 5);
    for (points, colour) in series {
        for pair in points.windows(2) {
            line(&mut img, frame.px(pair[0].0, pair[0].1), frame.px(pair[1].0, pair[1].1), *colour);
        }
        for &(x, y) in points.iter() {
            let (cx, cy) = frame.px(x, y);
            for d in -2..=2 {
                line(&mut img, (cx + d, cy - 2), (cx + d, cy + 2), *colour);
            }
        }
    }
    img
}

/// Two histograms over the same binning as side-by-side bars
/// (truth blue, prediction orange).
pub fn histogram_chart(truth: &Histogram, pred: &Histogram, w: u32, h: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(w, h, BG);
    let peak = truth.counts.iter().chain(&pred.counts).copied().max().unwrap_or(1).max(1) as f64;
    let n = truth.counts.len().max(1);
    let frame = Frame { w, h, margin: 24, x_range: (0.0, n as f64), y_range: (0.0, peak) };
    frame.draw_axes(&mut img, 5);
    let bar = |img: &mut RgbImage, b: usize, offset: f64, count: u64, c: Rgb<u8>| {
        let (x0, y0) = frame.px(b as f64 + offset, 0.0);
        let (x1, y1) = frame.px(b as f64 + offset + 0.45, count as f64);
        for x in x0..=x1.max(x0) {
            line(img, (x, y0), (x, y1), c);
        }
    };
    for b in 0..n {
        bar(&mut img, b, 0.05, truth.counts[b], BLUE);
        if let Some(&c) = pred.counts.get(b) {
            bar(&mut img, b, 0.5, c, ORANGE);
        }
    }
    img
}

pub fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).with_context(|| format!("writing {}", path.display()))
}
