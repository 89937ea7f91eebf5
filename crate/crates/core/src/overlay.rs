//! Ground-truth overlay rendering for endpoint calls: a red rectangle at the
//! gt box and a blue hollow circle at its center, drawn on a copy of the
//! screenshot.

use image::{Rgba, RgbaImage};

use crate::geometry::BBox;

pub const RECT_STROKE_PX: u32 = 3;
pub const CIRCLE_RADIUS_PX: f64 = 8.0;
const RED: Rgba<u8> = Rgba([255, 0, 0, 255]);
const BLUE: Rgba<u8> = Rgba([0, 0, 255, 255]);

fn put(img: &mut RgbaImage, x: i64, y: i64, color: Rgba<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Draws the annotation markers on a copy of `img`.
pub fn render_overlay(img: &RgbaImage, gt_bbox: BBox) -> RgbaImage {
    let mut out = img.clone();
    draw_rect_outline(&mut out, gt_bbox);
    let c = gt_bbox.center();
    draw_hollow_circle(&mut out, c.x, c.y, CIRCLE_RADIUS_PX);
    out
}

fn draw_rect_outline(img: &mut RgbaImage, b: BBox) {
    let (x0, y0, x1, y1) = (b.x_l as i64, b.y_l as i64, b.x_r as i64, b.y_r as i64);
    for s in 0..RECT_STROKE_PX as i64 {
        for x in (x0 - s)..=(x1 + s) {
            put(img, x, y0 - s, RED);
            put(img, x, y1 + s, RED);
        }
        for y in (y0 - s)..=(y1 + s) {
            put(img, x0 - s, y, RED);
            put(img, x1 + s, y, RED);
        }
    }
}

fn draw_hollow_circle(img: &mut RgbaImage, cx: f64, cy: f64, r: f64) {
    // One-pixel ring: paint pixels whose distance from the center rounds to r.
    let lo = (r - 0.75).max(0.0);
    let hi = r + 0.75;
    let x0 = (cx - hi).floor() as i64;
    let x1 = (cx + hi).ceil() as i64;
    let y0 = (cy - hi).floor() as i64;
    let y1 = (cy + hi).ceil() as i64;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if d >= lo && d <= hi {
                put(img, x, y, BLUE);
            }
        }
    }
}

/// Loads an image file, renders the overlay, and returns base64-encoded PNG
/// bytes ready for the wire contract's image part.
pub fn overlay_base64_png(image_path: &std::path::Path, gt_bbox: BBox) -> Result<String, OverlayError> {
    let img = image::open(image_path)
        .map_err(|e| OverlayError::Image(image_path.display().to_string(), e.to_string()))?
        .to_rgba8();
    let rendered = render_overlay(&img, gt_bbox);
    let mut buf = std::io::Cursor::new(Vec::new());
    rendered
        .write_to(&mut buf, image::ImageOutputFormat::Png)
        .map_err(|e| OverlayError::Image(image_path.display().to_string(), e.to_string()))?;
    use base64::Engine;
    Ok(base64::engine::general_purpose::STANDARD.encode(buf.into_inner()))
}

#[derive(Debug, thiserror::Error)]
pub enum OverlayError {
    #[error("image {0}: {1}")]
    Image(String, String),
}
