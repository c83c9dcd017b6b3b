//! Planar float images in [0, 1].
//!
//! Everything in the restoration pipeline operates on [`ImageBuffer`]:
//! 1- or 3-channel, channel-planar `f64` data, clamped to the unit range
//! after every stage. Quantization to 8 bits happens only at file I/O.

pub mod io;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageBuffer {
    /// All-zero image. `channels` must be 1 or 3.
    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::check_shape(width, height, channels)?;
        Ok(ImageBuffer {
            width,
            height,
            channels,
            pixels: vec![0.0; width * height * channels],
        })
    }

    /// Wrap raw planar data. Values must be finite; they are clamped into
    /// [0, 1].
    pub fn from_pixels(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::check_shape(width, height, channels)?;
        if pixels.len() != width * height * channels {
            return Err(Error::invalid_argument(format!(
                "pixel buffer has {} values, expected {}",
                pixels.len(),
                width * height * channels
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("pixel buffer contains non-finite values"));
        }
        let mut img = ImageBuffer { width, height, channels, pixels };
        img.clamp_in_place();
        Ok(img)
    }

    /// Build from a per-pixel function of (x, y, channel); the result is
    /// clamped into [0, 1].
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut img = Self::zeros(width, height, channels)?;
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    let v = f(x, y, c);
                    img.set(x, y, c, v);
                }
            }
        }
        Ok(img)
    }

    fn check_shape(width: usize, height: usize, channels: usize) -> Result<()> {
        if width == 0 || height == 0 {
            return Err(Error::invalid_argument("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid_argument(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[c * self.width * self.height + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.pixels[c * self.width * self.height + y * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// One channel as a plane of `width * height` values.
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.pixels[c * n..(c + 1) * n]
    }

    pub(crate) fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.width * self.height;
        &mut self.pixels[c * n..(c + 1) * n]
    }

    /// Replace one channel plane, clamping into [0, 1].
    pub(crate) fn set_plane(&mut self, c: usize, plane: &[f64]) {
        let dst = self.plane_mut(c);
        debug_assert_eq!(dst.len(), plane.len());
        for (d, &s) in dst.iter_mut().zip(plane) {
            *d = s.clamp(0.0, 1.0);
        }
    }

    pub(crate) fn clamp_in_place(&mut self) {
        for v in &mut self.pixels {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Channel-mean grayscale plane (identity for 1-channel images).
    pub fn luma(&self) -> Vec<f64> {
        let n = self.width * self.height;
        if self.channels == 1 {
            return self.pixels.clone();
        }
        let mut out = vec![0.0; n];
        for c in 0..self.channels {
            for (o, &v) in out.iter_mut().zip(self.plane(c)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= self.channels as f64;
        }
        out
    }

    /// Largest absolute per-pixel difference between two same-shape images.
    pub fn max_abs_diff(&self, other: &ImageBuffer) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::invalid_argument("images differ in shape"));
        }
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Mirror an out-of-range index back into [0, len); edge pixels repeat
/// (… 1 0 | 0 1 2 … n-1 | n-1 n-2 …).
#[inline]
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    debug_assert!(n > 0);
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Deterministic synthetic test card: tiles of checkerboards, bars, a disk
/// and a ramp. High local contrast everywhere, so blur is visible and
/// restoration is measurable.
pub fn test_card(width: usize, height: usize, channels: usize) -> Result<ImageBuffer> {
    ImageBuffer::from_fn(width, height, channels, |x, y, c| {
        let fx = x as f64 / width as f64;
        let fy = y as f64 / height as f64;
        // Quadrants with distinct structure, plus a channel phase shift so
        // color images are not three identical planes.
        let shift = c as f64 * 0.17;
        if fx < 0.5 && fy < 0.5 {
            // Checkerboard, 4px tiles.
            let t = ((x / 4) + (y / 4)) % 2;
            if t == 0 { 0.15 + shift * 0.3 } else { 0.9 - shift * 0.3 }
        } else if fx >= 0.5 && fy < 0.5 {
            // Vertical bars of increasing frequency.
            let period = 2 + (x - width / 2) / 8;
            if (x / period.max(1)) % 2 == 0 { 0.1 } else { 0.85 - shift * 0.2 }
        } else if fx < 0.5 && fy >= 0.5 {
            // Filled disk on a dark field.
            let cx = 0.25 * width as f64;
            let cy = 0.75 * height as f64;
            let r = 0.18 * width.min(height) as f64;
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if d < r { 0.95 - shift * 0.25 } else { 0.2 }
        } else {
            // Diagonal ramp with a sharp step halfway.
            let ramp = 0.5 * (fx + fy - 1.0) + 0.25 + shift * 0.1;
            if fx + fy > 1.5 { ramp + 0.3 } else { ramp }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_validation() {
        assert!(ImageBuffer::zeros(0, 4, 1).is_err());
        assert!(ImageBuffer::zeros(4, 4, 2).is_err());
        assert!(ImageBuffer::from_pixels(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::from_pixels(2, 2, 1, vec![f64::NAN; 4]).is_err());
    }

    #[test]
    fn from_pixels_clamps() {
        let img = ImageBuffer::from_pixels(2, 1, 1, vec![-0.5, 1.5]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect_index(-1, 4), 0);
        assert_eq!(reflect_index(-2, 4), 1);
        assert_eq!(reflect_index(0, 4), 0);
        assert_eq!(reflect_index(3, 4), 3);
        assert_eq!(reflect_index(4, 4), 3);
        assert_eq!(reflect_index(5, 4), 2);
        // Full period wraps around.
        assert_eq!(reflect_index(8, 4), 0);
        assert_eq!(reflect_index(-4, 4), 3);
    }

    #[test]
    fn luma_of_gray_is_identity() {
        let img = test_card(16, 16, 1).unwrap();
        assert_eq!(img.luma(), img.pixels().to_vec());
    }

    #[test]
    fn test_card_is_deterministic_and_in_range() {
        let a = test_card(32, 24, 3).unwrap();
        let b = test_card(32, 24, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
