//! Upscaling by integer factors; stands in for a learned super-resolver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{reflect_index, ImageBuffer};

/// Output dimensions above this are refused.
pub const MAX_OUTPUT_DIM: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    Nearest,
    Bilinear,
    Bicubic,
}

/// Scale both dimensions by `factor` (2, 3 or 4). Sampling positions map
/// destination pixel centers back to the source grid; bicubic uses
/// Catmull-Rom weights. Reflect padding at the edges, output clamped.
pub fn upscale(img: &ImageBuffer, factor: usize, interp: Interp) -> Result<ImageBuffer> {
    if ![2, 3, 4].contains(&factor) {
        return Err(Error::invalid_argument(format!(
            "upscale factor must be 2, 3 or 4, got {factor}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let (ow, oh) = (w * factor, h * factor);
    if ow > MAX_OUTPUT_DIM || oh > MAX_OUTPUT_DIM {
        return Err(Error::invalid_argument(format!(
            "upscaled size {ow}x{oh} exceeds the {MAX_OUTPUT_DIM} pixel limit"
        )));
    }
    let mut out = ImageBuffer::zeros(ow, oh, img.channels())?;
    for c in 0..img.channels() {
        let src = img.plane(c);
        let sample = |x: isize, y: isize| -> f64 { src[reflect_index(y, h) * w + reflect_index(x, w)] };
        for oy in 0..oh {
            for ox in 0..ow {
                let v = match interp {
                    Interp::Nearest => sample((ox / factor) as isize, (oy / factor) as isize),
                    Interp::Bilinear => {
                        let sx = (ox as f64 + 0.5) / factor as f64 - 0.5;
                        let sy = (oy as f64 + 0.5) / factor as f64 - 0.5;
                        let x0 = sx.floor();
                        let y0 = sy.floor();
                        let tx = sx - x0;
                        let ty = sy - y0;
                        let (x0, y0) = (x0 as isize, y0 as isize);
                        (1.0 - ty) * ((1.0 - tx) * sample(x0, y0) + tx * sample(x0 + 1, y0))
                            + ty * ((1.0 - tx) * sample(x0, y0 + 1) + tx * sample(x0 + 1, y0 + 1))
                    }
                    Interp::Bicubic => {
                        let sx = (ox as f64 + 0.5) / factor as f64 - 0.5;
                        let sy = (oy as f64 + 0.5) / factor as f64 - 0.5;
                        let x0 = sx.floor() as isize;
                        let y0 = sy.floor() as isize;
                        let wx = catmull_rom_weights(sx - x0 as f64);
                        let wy = catmull_rom_weights(sy - y0 as f64);
                        let mut acc = 0.0;
                        for (j, &wyj) in wy.iter().enumerate() {
                            let row_y = y0 + j as isize - 1;
                            let mut row = 0.0;
                            for (i, &wxi) in wx.iter().enumerate() {
                                row += wxi * sample(x0 + i as isize - 1, row_y);
                            }
                            acc += wyj * row;
                        }
                        acc
                    }
                };
                out.set(ox, oy, c, v);
            }
        }
    }
    Ok(out)
}

/// Catmull-Rom (a = -1/2) weights for the four taps around fractional
/// offset `t` in [0, 1).
fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ]
}
