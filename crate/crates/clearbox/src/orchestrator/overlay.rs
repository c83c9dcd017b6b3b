//! Render ground truth and fused detections onto the source images:
//! outlined boxes, class label and confidence (2 decimals) in a built-in
//! 5x7 bitmap font, deterministic per-class colors.

use std::path::{Path, PathBuf};

use crate::coco::CocoDataset;
use crate::error::{Error, Result};
use crate::fusion::DetectionSet;
use crate::geometry::{convert, CoordSpace};
use crate::image::io::{read_image, write_png};
use crate::image::ImageBuffer;

const GT_COLOR: [f64; 3] = [1.0, 1.0, 1.0];

/// Hue spaced by the golden angle gives well-separated, reproducible
/// class colors.
pub fn class_color(class_id: u32) -> [f64; 3] {
    let hue = (class_id as f64 * 0.618_033_988_749_895).fract();
    hsv_to_rgb(hue, 0.85, 0.95)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match (i as i64).rem_euclid(6) {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Draw `detections` (and the dataset's ground truth, in white) over each
/// image and write `<stem>.png` files into `out_dir`. Returns the written
/// paths in image order.
pub fn render_overlays(
    images_dir: &Path,
    detections: &[DetectionSet],
    dataset: &CocoDataset,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for set in detections {
        let image = dataset
            .image(set.image_id)
            .ok_or_else(|| Error::data(format!("unknown image {}", set.image_id)))?;
        let src = read_image(&images_dir.join(&image.file_name))?;
        let mut canvas = to_rgb(&src);
        let space = CoordSpace::absolute(image.width as f64, image.height as f64);

        if let Some(gt) = dataset.ground_truth_for(set.image_id) {
            for g in &gt.boxes {
                let b = convert(&g.bbox, space)?;
                draw_rect(
                    &mut canvas,
                    b.x_min.round() as i64,
                    b.y_min.round() as i64,
                    b.x_max.round() as i64,
                    b.y_max.round() as i64,
                    GT_COLOR,
                );
            }
        }
        for det in &set.detections {
            let b = convert(&det.bbox, space)?;
            let color = class_color(det.class_id);
            let (x0, y0) = (b.x_min.round() as i64, b.y_min.round() as i64);
            draw_rect(&mut canvas, x0, y0, b.x_max.round() as i64, b.y_max.round() as i64, color);
            let name = dataset
                .categories
                .name_of(det.class_id)
                .filter(|n| !n.is_empty())
                .map(str::to_string)
                .unwrap_or_else(|| format!("C{}", det.class_id));
            let label = format!("{name} {:.2}", det.confidence);
            // Label above the box, or inside when flush with the top edge.
            let ty = if y0 >= 8 { y0 - 8 } else { y0 + 2 };
            draw_text(&mut canvas, &label, x0 + 1, ty, color);
        }

        let stem = Path::new(&image.file_name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| image.file_name.clone());
        let path = out_dir.join(format!("{stem}.png"));
        write_png(&canvas, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn to_rgb(img: &ImageBuffer) -> ImageBuffer {
    if img.channels() == 3 {
        return img.clone();
    }
    ImageBuffer::from_fn(img.width(), img.height(), 3, |x, y, _| img.get(x, y, 0))
        .expect("same dimensions")
}

fn put(canvas: &mut ImageBuffer, x: i64, y: i64, color: [f64; 3]) {
    if x < 0 || y < 0 || x >= canvas.width() as i64 || y >= canvas.height() as i64 {
        return;
    }
    for (c, &v) in color.iter().enumerate() {
        canvas.set(x as usize, y as usize, c, v);
    }
}

fn draw_rect(canvas: &mut ImageBuffer, x0: i64, y0: i64, x1: i64, y1: i64, color: [f64; 3]) {
    for x in x0..=x1 {
        put(canvas, x, y0, color);
        put(canvas, x, y1, color);
    }
    for y in y0..=y1 {
        put(canvas, x0, y, color);
        put(canvas, x1, y, color);
    }
}

fn draw_text(canvas: &mut ImageBuffer, text: &str, x: i64, y: i64, color: [f64; 3]) {
    let mut cx = x;
    for ch in text.chars() {
        let glyph = glyph_for(ch);
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..5 {
                if bits & (0x10 >> col) != 0 {
                    put(canvas, cx + col as i64, y + row as i64, color);
                }
            }
        }
        cx += 6;
    }
}

/// 5x7 glyphs, one byte per row, low five bits used, bit 4 leftmost.
/// Lowercase renders as uppercase; anything unknown renders as a box.
fn glyph_for(ch: char) -> [u8; 7] {
    let ch = ch.to_ascii_uppercase();
    match ch {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        '%' => [0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03],
        ' ' => [0x00; 7],
        _ => [0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F],
    }
}
