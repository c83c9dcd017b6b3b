//! Classical real-noise denoisers: median and Gaussian filtering.

use crate::error::{Error, Result};
use crate::image::{reflect_index, ImageBuffer};
use crate::purifier::conv::{correlate_plane, Kernel2};

/// Median filter over the (2r+1)^2 neighborhood of each pixel, per
/// channel, reflect padding.
pub fn median_denoise(img: &ImageBuffer, radius: usize) -> Result<ImageBuffer> {
    if radius < 1 {
        return Err(Error::invalid_argument("median radius must be >= 1"));
    }
    if radius > img.width().min(img.height()) {
        return Err(Error::invalid_argument(format!(
            "median radius {radius} exceeds image extent {}x{}",
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let side = 2 * radius + 1;
    let mut window = vec![0.0f64; side * side];
    let mut out = img.clone();
    for c in 0..img.channels() {
        let plane = img.plane(c).to_vec();
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut n = 0;
                for dy in -(radius as isize)..=(radius as isize) {
                    let sy = reflect_index(y as isize + dy, h);
                    for dx in -(radius as isize)..=(radius as isize) {
                        let sx = reflect_index(x as isize + dx, w);
                        window[n] = plane[sy * w + sx];
                        n += 1;
                    }
                }
                let mid = n / 2;
                window[..n].select_nth_unstable_by(mid, f64::total_cmp);
                dst[y * w + x] = window[mid];
            }
        }
    }
    Ok(out)
}

/// Separable Gaussian blur. The 1-D kernel is truncated at `ceil(3*sigma)`
/// taps per side and re-normalized; reflect padding keeps the mean intact.
pub fn gaussian_denoise(img: &ImageBuffer, sigma: f64) -> Result<ImageBuffer> {
    if sigma.is_nan() || sigma <= 0.0 || sigma.is_infinite() {
        return Err(Error::invalid_argument("gaussian sigma must be > 0"));
    }
    let taps = gaussian_taps(sigma);
    let (w, h) = (img.width(), img.height());
    let horizontal = Kernel2::centered(taps.clone(), taps.len(), 1);
    let vertical = Kernel2::centered(taps.clone(), 1, taps.len());
    let mut out = img.clone();
    for c in 0..img.channels() {
        let pass1 = correlate_plane(img.plane(c), w, h, &horizontal);
        let pass2 = correlate_plane(&pass1, w, h, &vertical);
        out.set_plane(c, &pass2);
    }
    Ok(out)
}

/// Normalized 1-D Gaussian taps, radius `ceil(3*sigma)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}
