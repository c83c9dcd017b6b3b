//! Spatial convolution on channel planes with reflect boundary handling.

use crate::image::{reflect_index, ImageBuffer};

/// A dense 2-D kernel with its anchor point.
#[derive(Debug, Clone)]
pub struct Kernel2 {
    pub taps: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub anchor_x: usize,
    pub anchor_y: usize,
}

impl Kernel2 {
    pub fn centered(taps: Vec<f64>, width: usize, height: usize) -> Kernel2 {
        debug_assert_eq!(taps.len(), width * height);
        debug_assert!(width % 2 == 1 && height % 2 == 1);
        Kernel2 {
            taps,
            width,
            height,
            anchor_x: width / 2,
            anchor_y: height / 2,
        }
    }

    /// The kernel rotated 180 degrees about its anchor.
    pub fn flipped(&self) -> Kernel2 {
        let mut taps = self.taps.clone();
        taps.reverse();
        Kernel2 {
            taps,
            width: self.width,
            height: self.height,
            anchor_x: self.width - 1 - self.anchor_x,
            anchor_y: self.height - 1 - self.anchor_y,
        }
    }
}

/// Cross-correlation of one plane with a kernel, reflect padding:
/// `out(x, y) = sum_k taps(k) * plane(x + kx - ax, y + ky - ay)`.
pub fn correlate_plane(plane: &[f64], width: usize, height: usize, kernel: &Kernel2) -> Vec<f64> {
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for ky in 0..kernel.height {
                let sy = reflect_index(y as isize + ky as isize - kernel.anchor_y as isize, height);
                let row = sy * width;
                let krow = ky * kernel.width;
                for kx in 0..kernel.width {
                    let sx =
                        reflect_index(x as isize + kx as isize - kernel.anchor_x as isize, width);
                    acc += kernel.taps[krow + kx] * plane[row + sx];
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// True convolution (kernel flipped) of one plane, reflect padding.
pub fn convolve_plane(plane: &[f64], width: usize, height: usize, kernel: &Kernel2) -> Vec<f64> {
    correlate_plane(plane, width, height, &kernel.flipped())
}

/// Convolve every channel of an image, clamping the result into [0, 1].
pub fn convolve_image(img: &ImageBuffer, kernel: &Kernel2) -> ImageBuffer {
    let mut out = img.clone();
    for c in 0..img.channels() {
        let plane = convolve_plane(img.plane(c), img.width(), img.height(), kernel);
        out.set_plane(c, &plane);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel() {
        let plane = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let k = Kernel2::centered(vec![1.0], 1, 1);
        assert_eq!(correlate_plane(&plane, 3, 2, &k), plane);
        assert_eq!(convolve_plane(&plane, 3, 2, &k), plane);
    }

    #[test]
    fn convolution_flips_the_kernel() {
        // A kernel with its mass right of center pulls values leftward
        // under correlation and pushes them rightward under convolution.
        let plane = vec![0.0, 1.0, 0.0, 0.0];
        let k = Kernel2::centered(vec![0.0, 0.0, 1.0], 3, 1);
        let corr = correlate_plane(&plane, 4, 1, &k);
        let conv = convolve_plane(&plane, 4, 1, &k);
        assert_eq!(corr, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(conv, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn reflect_boundary_conserves_mass_for_symmetric_kernels() {
        let plane = vec![0.9, 0.1, 0.4, 0.8, 0.2, 0.7, 0.3, 0.6];
        let k = Kernel2::centered(vec![0.25, 0.5, 0.25], 3, 1);
        let out = correlate_plane(&plane, 8, 1, &k);
        let before: f64 = plane.iter().sum();
        let after: f64 = out.iter().sum();
        assert!((before - after).abs() < 1e-12);
    }
}
