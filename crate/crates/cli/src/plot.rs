//! Minimal deterministic PNG line charts: axes, a light 5×5 grid and one
//! colored polyline with square markers per series. No text is drawn; the
//! CSV next to the plot carries the numbers.

use image::codecs::png::PngEncoder;
use image::{ImageEncoder, Rgb, RgbImage};

use crate::error::{CliError, Result};

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: u32 = 640;
const HEIGHT: u32 = 420;
const MARGIN: i64 = 40;
const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if (0..WIDTH as i64).contains(&x) && (0..HEIGHT as i64).contains(&y) {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    // Bresenham
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
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

pub fn line_plot_png(series: &[Series]) -> Result<Vec<u8>> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x_lo, x_hi) = range(all().map(|p| p.0));
    let (y_lo, y_hi) = range(all().map(|p| p.1));
    let (w, h) = (WIDTH as i64 - 2 * MARGIN, HEIGHT as i64 - 2 * MARGIN);
    let to_px = |(x, y): (f64, f64)| {
        let px = MARGIN + ((x - x_lo) / (x_hi - x_lo) * w as f64).round() as i64;
        let py = MARGIN + h - ((y - y_lo) / (y_hi - y_lo) * h as f64).round() as i64;
        (px, py)
    };

    let grid = Rgb([225, 225, 225]);
    for k in 0..=5 {
        let gx = MARGIN + k * w / 5;
        let gy = MARGIN + k * h / 5;
        line(&mut img, (gx, MARGIN), (gx, MARGIN + h), grid);
        line(&mut img, (MARGIN, gy), (MARGIN + w, gy), grid);
    }
    let axis = Rgb([0, 0, 0]);
    line(
        &mut img,
        (MARGIN, MARGIN + h),
        (MARGIN + w, MARGIN + h),
        axis,
    );
    line(&mut img, (MARGIN, MARGIN), (MARGIN, MARGIN + h), axis);

    for (si, s) in series.iter().enumerate() {
        let c = Rgb(PALETTE[si % PALETTE.len()]);
        let mut pts: Vec<(i64, i64)> = s
            .points
            .iter()
            .copied()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(to_px)
            .collect();
        pts.sort();
        for pair in pts.windows(2) {
            line(&mut img, pair[0], pair[1], c);
        }
        for &(x, y) in &pts {
            for ox in -2..=2 {
                for oy in -2..=2 {
                    put(&mut img, x + ox, y + oy, c);
                }
            }
        }
    }

    let mut bytes = Vec::new();
    PngEncoder::new(&mut bytes)
        .write_image(img.as_raw(), WIDTH, HEIGHT, image::ExtendedColorType::Rgb8)
        .map_err(|e| CliError::data(format!("PNG encoding failed: {e}")))?;
    Ok(bytes)
}
