//! Raster scatter plot of sensitivity vs 1-specificity, one marker per
//! report, marker shape keyed by backbone. No plotting dependency: axes,
//! gridlines, a 5x7 bitmap font, and the five marker shapes are drawn
//! directly into an RGB buffer.

use std::path::Path;

use image::{Rgb, RgbImage};

use super::{MetricsReport, MetricValue};
use crate::error::{Error, Result};

const WIDTH: u32 = 660;
const HEIGHT: u32 = 620;
const PLOT_LEFT: i32 = 80;
const PLOT_TOP: i32 = 30;
const PLOT_SIZE: i32 = 420;
const LEGEND_X: i32 = 510;

const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const GRID: Rgb<u8> = Rgb([215, 215, 215]);

/// Marker shapes from the figure legend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Star,
    Cross,
    Circle,
    Plus,
    Dot,
}

/// Backbone-to-marker key: '*' ResNet50, 'x' ResNet101, 'o' InceptionV3,
/// '+' Inception-ResNetV2; the desk-test backbone and anything unknown get
/// the dot.
fn marker_for(backbone: &str) -> Marker {
    match backbone.to_ascii_lowercase().as_str() {
        "resnet50" => Marker::Star,
        "resnet101" => Marker::Cross,
        "inception_v3" => Marker::Circle,
        "inception_resnet_v2" => Marker::Plus,
        _ => Marker::Dot,
    }
}

/// Write the scatter image to `out` and the plotted points to
/// `out.with_extension("csv")`. Reports with an undefined coordinate are
/// omitted from the plot and flagged in the CSV.
pub fn scatter_plot(reports: &[MetricsReport], out: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::InvalidParameter("scatter_plot needs at least one report".into()));
    }

    let mut canvas = Canvas::new();
    canvas.frame_and_grid();

    let mut legend: Vec<String> = Vec::new();
    let mut rows: Vec<(String, Option<f64>, Option<f64>)> = Vec::new();
    for report in reports {
        let sens = report.sensitivity.value();
        let fall_out = match report.specificity {
            MetricValue::Value(s) => Some(1.0 - s),
            MetricValue::Undefined => None,
        };
        if let (Some(y), Some(x)) = (sens, fall_out) {
            let (px, py) = canvas.data_to_pixel(x, y);
            canvas.marker(marker_for(&report.backbone), px, py);
        }
        if !legend.contains(&report.backbone) {
            legend.push(report.backbone.clone());
        }
        rows.push((report.label(), sens, fall_out));
    }

    for (i, backbone) in legend.iter().enumerate() {
        let y = PLOT_TOP + 10 + 22 * i as i32;
        canvas.marker(marker_for(backbone), LEGEND_X + 8, y + 4);
        canvas.text(LEGEND_X + 24, y, &backbone.to_ascii_uppercase(), 1);
    }

    canvas
        .img
        .save(out)
        .map_err(|e| Error::image(out, format!("cannot write plot: {e}")))?;
    write_points_csv(&rows, &out.with_extension("csv"))
}

fn write_points_csv(rows: &[(String, Option<f64>, Option<f64>)], path: &Path) -> Result<()> {
    let to_io = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(["label", "sensitivity", "one_minus_specificity"]).map_err(to_io)?;
    let cell = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| x.to_string());
    for (label, sens, fall_out) in rows {
        w.write_record([label.as_str(), &cell(*sens), &cell(*fall_out)]).map_err(to_io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn new() -> Self {
        Canvas { img: RgbImage::from_pixel(WIDTH, HEIGHT, WHITE) }
    }

    fn data_to_pixel(&self, x: f64, y: f64) -> (i32, i32) {
        let px = PLOT_LEFT + (x.clamp(0.0, 1.0) * PLOT_SIZE as f64).round() as i32;
        let py = PLOT_TOP + ((1.0 - y.clamp(0.0, 1.0)) * PLOT_SIZE as f64).round() as i32;
        (px, py)
    }

    fn put(&mut self, x: i32, y: i32, color: Rgb<u8>) {
        if (0..WIDTH as i32).contains(&x) && (0..HEIGHT as i32).contains(&y) {
            self.img.put_pixel(x as u32, y as u32, color);
        }
    }

    fn line(&mut self, x0: i32, y0: i32, x1: i32, y1: i32, color: Rgb<u8>) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.put(x, y, color);
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

    fn circle(&mut self, cx: i32, cy: i32, r: i32, color: Rgb<u8>) {
        let (mut x, mut y, mut d) = (r, 0, 1 - r);
        while x >= y {
            for (px, py) in [
                (cx + x, cy + y), (cx - x, cy + y), (cx + x, cy - y), (cx - x, cy - y),
                (cx + y, cy + x), (cx - y, cy + x), (cx + y, cy - x), (cx - y, cy - x),
            ] {
                self.put(px, py, color);
            }
            y += 1;
            if d < 0 {
                d += 2 * y + 1;
            } else {
                x -= 1;
                d += 2 * (y - x) + 1;
            }
        }
    }

    fn marker(&mut self, marker: Marker, cx: i32, cy: i32) {
        let s = 5;
        match marker {
            Marker::Star => {
                self.line(cx - s, cy, cx + s, cy, BLACK);
                self.line(cx, cy - s, cx, cy + s, BLACK);
                let d = 4;
                self.line(cx - d, cy - d, cx + d, cy + d, BLACK);
                self.line(cx - d, cy + d, cx + d, cy - d, BLACK);
            }
            Marker::Cross => {
                self.line(cx - s, cy - s, cx + s, cy + s, BLACK);
                self.line(cx - s, cy + s, cx + s, cy - s, BLACK);
            }
            Marker::Circle => self.circle(cx, cy, s, BLACK),
            Marker::Plus => {
                self.line(cx - s, cy, cx + s, cy, BLACK);
                self.line(cx, cy - s, cx, cy + s, BLACK);
            }
            Marker::Dot => {
                for dy in -2i32..=2 {
                    for dx in -2i32..=2 {
                        if dx * dx + dy * dy <= 4 {
                            self.put(cx + dx, cy + dy, BLACK);
                        }
                    }
                }
            }
        }
    }

    fn frame_and_grid(&mut self) {
        let (l, t) = (PLOT_LEFT, PLOT_TOP);
        let (r, b) = (l + PLOT_SIZE, t + PLOT_SIZE);
        // Gridlines and tick labels every 0.2 on both axes.
        for i in 0..=5 {
            let v = i as f64 * 0.2;
            let (px, py) = self.data_to_pixel(v, v);
            if i > 0 && i < 5 {
                self.line(px, t, px, b, GRID);
                self.line(l, py, r, py, GRID);
            }
            let label = format!("{v:.1}");
            self.text(px - 8, b + 8, &label, 1);
            self.text(l - 26, py - 3, &label, 1);
        }
        for (x0, y0, x1, y1) in [(l, t, r, t), (l, b, r, b), (l, t, l, b), (r, t, r, b)] {
            self.line(x0, y0, x1, y1, BLACK);
        }
        self.text(l + (PLOT_SIZE - 15 * 12) / 2, b + 30, "1 - SPECIFICITY", 2);
        self.text_vertical(PLOT_LEFT - 62, t + (PLOT_SIZE - 11 * 10) / 2, "SENSITIVITY");
    }

    fn text(&mut self, x: i32, y: i32, s: &str, scale: i32) {
        let mut cx = x;
        for ch in s.chars() {
            if let Some(rows) = glyph(ch) {
                for (ry, bits) in rows.iter().enumerate() {
                    for rx in 0..5 {
                        if bits & (0b10000 >> rx) != 0 {
                            for sy in 0..scale {
                                for sx in 0..scale {
                                    self.put(
                                        cx + rx * scale + sx,
                                        y + ry as i32 * scale + sy,
                                        BLACK,
                                    );
                                }
                            }
                        }
                    }
                }
            }
            cx += 6 * scale;
        }
    }

    fn text_vertical(&mut self, x: i32, y: i32, s: &str) {
        for (i, ch) in s.chars().enumerate() {
            self.text(x, y + 10 * i as i32, &ch.to_string(), 1);
        }
    }
}

/// 5x7 glyphs, bit 4 = leftmost column. Space and unknown glyphs advance
/// without drawing.
fn glyph(c: char) -> Option<[u8; 7]> {
    let g = match c.to_ascii_uppercase() {
        'A' => [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'B' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110],
        'C' => [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110],
        'D' => [0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110],
        'E' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111],
        'F' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000],
        'G' => [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111],
        'H' => [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'I' => [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        'J' => [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100],
        'K' => [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001],
        'L' => [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111],
        'M' => [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001],
        'N' => [0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001, 0b10001],
        'O' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'P' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000],
        'Q' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101],
        'R' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001],
        'S' => [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110],
        'T' => [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100],
        'U' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'V' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100],
        'W' => [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b11011, 0b10001],
        'X' => [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001],
        'Y' => [0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100],
        'Z' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111],
        '0' => [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
        '1' => [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        '2' => [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
        '3' => [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
        '4' => [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
        '5' => [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
        '6' => [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
        '7' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
        '8' => [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
        '9' => [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
        '.' => [0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100],
        '-' => [0b00000, 0b00000, 0b00000, 0b01110, 0b00000, 0b00000, 0b00000],
        '_' => [0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b11111],
        _ => return None,
    };
    Some(g)
}
