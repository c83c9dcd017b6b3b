//! Motion-blur modelling and removal: line-segment PSFs, frequency-domain
//! Wiener deconvolution and iterative Richardson-Lucy.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::{reflect_index, ImageBuffer};
use crate::purifier::conv::{convolve_plane, correlate_plane, Kernel2};

/// A normalized blur kernel with odd dimensions and a centered anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    taps: Vec<f64>,
    width: usize,
    height: usize,
}

impl Psf {
    /// Wrap a kernel grid. Dimensions must be odd, entries nonnegative;
    /// the taps are normalized to sum to one.
    pub fn new(taps: Vec<f64>, width: usize, height: usize) -> Result<Psf> {
        if width % 2 == 0 || height % 2 == 0 || taps.len() != width * height {
            return Err(Error::invalid_argument(format!(
                "psf must be odd-sized, got {width}x{height} with {} taps",
                taps.len()
            )));
        }
        if taps.iter().any(|&t| !t.is_finite() || t < 0.0) {
            return Err(Error::invalid_argument("psf taps must be finite and nonnegative"));
        }
        let sum: f64 = taps.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid_argument("psf must have positive mass"));
        }
        let taps = taps.into_iter().map(|t| t / sum).collect();
        Ok(Psf { taps, width, height })
    }

    pub fn identity() -> Psf {
        Psf { taps: vec![1.0], width: 1, height: 1 }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Anchor (center) as (x, y).
    pub fn anchor(&self) -> (usize, usize) {
        (self.width / 2, self.height / 2)
    }

    pub fn kernel(&self) -> Kernel2 {
        Kernel2::centered(self.taps.clone(), self.width, self.height)
    }

    /// Blur an image with this PSF (true convolution, reflect padding).
    pub fn blur(&self, img: &ImageBuffer) -> ImageBuffer {
        let mut out = img.clone();
        let kernel = self.kernel();
        for c in 0..img.channels() {
            let plane = convolve_plane(img.plane(c), img.width(), img.height(), &kernel);
            out.set_plane(c, &plane);
        }
        out
    }
}

/// Linear-motion PSF: `length` unit samples along a line at `angle_degrees`
/// (counter-clockwise from the +x axis), each splatted bilinearly, then
/// normalized. Length 1 is the identity kernel.
pub fn motion_psf(length: usize, angle_degrees: f64) -> Result<Psf> {
    if length < 1 {
        return Err(Error::invalid_argument("motion psf length must be >= 1"));
    }
    let rad = angle_degrees.to_radians();
    // Screen coordinates have y growing downward.
    let (dx, dy) = (rad.cos(), -rad.sin());
    let half = (length - 1) as f64 / 2.0;

    let max_x = (half * dx.abs()).ceil() as isize;
    let max_y = (half * dy.abs()).ceil() as isize;
    let (w, h) = ((2 * max_x + 1) as usize, (2 * max_y + 1) as usize);
    let mut taps = vec![0.0f64; w * h];

    for k in 0..length {
        let t = k as f64 - half;
        let x = t * dx + max_x as f64;
        let y = t * dy + max_y as f64;
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        for (ox, wx) in [(0isize, 1.0 - fx), (1, fx)] {
            for (oy, wy) in [(0isize, 1.0 - fy), (1, fy)] {
                let weight = wx * wy;
                if weight <= 0.0 {
                    continue;
                }
                let gx = x0 as isize + ox;
                let gy = y0 as isize + oy;
                debug_assert!(gx >= 0 && gx < w as isize && gy >= 0 && gy < h as isize);
                taps[gy as usize * w + gx as usize] += weight;
            }
        }
    }
    Psf::new(taps, w, h)
}

/// Frequency-domain Wiener deconvolution, `H* / (|H|^2 + noise_power)`,
/// applied per channel on a reflect-padded window.
pub fn wiener_deblur(img: &ImageBuffer, psf: &Psf, noise_power: f64) -> Result<ImageBuffer> {
    if noise_power.is_nan() || noise_power < 0.0 {
        return Err(Error::invalid_argument("noise_power must be >= 0"));
    }
    if psf.width > img.width() || psf.height > img.height() {
        return Err(Error::invalid_argument(format!(
            "psf {}x{} larger than image {}x{}",
            psf.width,
            psf.height,
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width(), img.height());
    // Pad by the full kernel extent on each side; enough to push circular
    // wrap-around artifacts out of the cropped result.
    let pad_x = psf.width;
    let pad_y = psf.height;
    let (pw, ph) = (w + 2 * pad_x, h + 2 * pad_y);

    // Transfer function of the PSF, anchor wrapped to the origin.
    let mut transfer = vec![Complex::new(0.0, 0.0); pw * ph];
    let (ax, ay) = psf.anchor();
    for ky in 0..psf.height {
        for kx in 0..psf.width {
            let px = (kx as isize - ax as isize).rem_euclid(pw as isize) as usize;
            let py = (ky as isize - ay as isize).rem_euclid(ph as isize) as usize;
            transfer[py * pw + px] = Complex::new(psf.taps[ky * psf.width + kx], 0.0);
        }
    }
    fft2_in_place(&mut transfer, pw, ph, false);

    let mut out = img.clone();
    let mut freq = vec![Complex::new(0.0, 0.0); pw * ph];
    for c in 0..img.channels() {
        let plane = img.plane(c);
        for y in 0..ph {
            let sy = reflect_index(y as isize - pad_y as isize, h);
            for x in 0..pw {
                let sx = reflect_index(x as isize - pad_x as isize, w);
                freq[y * pw + x] = Complex::new(plane[sy * w + sx], 0.0);
            }
        }
        fft2_in_place(&mut freq, pw, ph, false);
        for (g, &t) in freq.iter_mut().zip(&transfer) {
            let denom = t.norm_sqr() + noise_power;
            *g = if denom > 1e-12 {
                *g * t.conj() / denom
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft2_in_place(&mut freq, pw, ph, true);
        let scale = 1.0 / (pw * ph) as f64;
        let mut restored = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                restored[y * w + x] = freq[(y + pad_y) * pw + (x + pad_x)].re * scale;
            }
        }
        out.set_plane(c, &restored);
    }
    Ok(out)
}

/// Richardson-Lucy deconvolution: `iterations` multiplicative updates.
/// The observed image is floored at 1e-6, so estimates stay strictly
/// positive.
pub fn richardson_lucy(img: &ImageBuffer, psf: &Psf, iterations: usize) -> Result<ImageBuffer> {
    if iterations < 1 {
        return Err(Error::invalid_argument("iterations must be >= 1"));
    }
    let (w, h) = (img.width(), img.height());
    let kernel = psf.kernel();
    let mut out = img.clone();
    for c in 0..img.channels() {
        let observed: Vec<f64> = img.plane(c).iter().map(|&v| v.max(1e-6)).collect();
        let mut estimate = observed.clone();
        for _ in 0..iterations {
            let predicted = convolve_plane(&estimate, w, h, &kernel);
            let ratio: Vec<f64> = observed
                .iter()
                .zip(&predicted)
                .map(|(&d, &p)| d / p.max(1e-12))
                .collect();
            let correction = correlate_plane(&ratio, w, h, &kernel);
            for (e, &corr) in estimate.iter_mut().zip(&correction) {
                *e *= corr;
                debug_assert!(*e >= 0.0);
            }
        }
        out.set_plane(c, &estimate);
    }
    Ok(out)
}

/// In-place 2-D FFT on a row-major complex grid (rows, then columns).
fn fft2_in_place(data: &mut [Complex<f64>], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };
    let mut column = vec![Complex::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        col_fft.process(&mut column);
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::psnr;
    use crate::image::test_card;

    #[test]
    fn motion_psf_length_one_is_identity() {
        let psf = motion_psf(1, 37.0).unwrap();
        assert_eq!(psf, Psf::identity());
    }

    #[test]
    fn motion_psf_horizontal_is_uniform() {
        let psf = motion_psf(5, 0.0).unwrap();
        assert_eq!((psf.width(), psf.height()), (5, 1));
        for &t in psf.taps() {
            assert!((t - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn motion_psf_always_normalized() {
        for length in [1usize, 2, 3, 7, 9, 15] {
            for angle in [0.0, 13.0, 45.0, 90.0, 137.5, 180.0, 291.0] {
                let psf = motion_psf(length, angle).unwrap();
                let sum: f64 = psf.taps().iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "length {length} angle {angle}");
                assert!(psf.width() % 2 == 1 && psf.height() % 2 == 1);
            }
        }
    }

    #[test]
    fn wiener_identity_psf_is_identity() {
        let img = test_card(24, 18, 3).unwrap();
        let out = wiener_deblur(&img, &Psf::identity(), 0.0).unwrap();
        assert!(img.max_abs_diff(&out).unwrap() < 1e-6);
    }

    #[test]
    fn wiener_restores_motion_blur() {
        let img = test_card(64, 64, 1).unwrap();
        let psf = motion_psf(9, 0.0).unwrap();
        let blurred = psf.blur(&img);
        let restored = wiener_deblur(&blurred, &psf, 1e-3).unwrap();
        let blurred_psnr = psnr(&blurred, &img).unwrap();
        let restored_psnr = psnr(&restored, &img).unwrap();
        assert!(
            restored_psnr >= blurred_psnr + 3.0,
            "blurred {blurred_psnr:.2} dB, restored {restored_psnr:.2} dB"
        );
    }

    #[test]
    fn wiener_huge_noise_attenuates() {
        let img = test_card(32, 32, 1).unwrap();
        let psf = motion_psf(5, 0.0).unwrap();
        let blurred = psf.blur(&img);
        let mild = wiener_deblur(&blurred, &psf, 1e-3).unwrap();
        let crushed = wiener_deblur(&blurred, &psf, 1e6).unwrap();
        let energy = |im: &ImageBuffer| im.pixels().iter().map(|v| v * v).sum::<f64>();
        assert!(energy(&crushed) < energy(&mild) * 1e-3);
    }

    #[test]
    fn wiener_rejects_oversized_psf() {
        let img = test_card(8, 8, 1).unwrap();
        let psf = motion_psf(15, 0.0).unwrap();
        assert!(wiener_deblur(&img, &psf, 0.0).is_err());
    }

    #[test]
    fn richardson_lucy_identity_psf_is_fixed_point() {
        let img = test_card(16, 12, 1).unwrap();
        for iterations in [1, 5, 20] {
            let out = richardson_lucy(&img, &Psf::identity(), iterations).unwrap();
            assert!(img.max_abs_diff(&out).unwrap() < 1e-6);
        }
    }

    #[test]
    fn richardson_lucy_single_step_matches_hand_computation() {
        // 8x1 image, kernel [0.25 0.5 0.25]: one multiplicative update,
        // written out longhand with explicit reflect indexing.
        let data = vec![0.10, 0.20, 0.40, 0.80, 0.60, 0.30, 0.20, 0.10];
        let img = ImageBuffer::from_pixels(8, 1, 1, data.clone()).unwrap();
        let psf = Psf::new(vec![0.25, 0.5, 0.25], 3, 1).unwrap();
        let out = richardson_lucy(&img, &psf, 1).unwrap();

        let n = data.len() as isize;
        let refl = |i: isize| -> usize {
            if i < 0 {
                (-i - 1) as usize
            } else if i >= n {
                (2 * n - 1 - i) as usize
            } else {
                i as usize
            }
        };
        let k = [0.25, 0.5, 0.25];
        let mut predicted = vec![0.0; 8];
        for i in 0..8isize {
            // Symmetric kernel: convolution == correlation.
            predicted[i as usize] = (0..3)
                .map(|j| k[j as usize] * data[refl(i + j - 1)])
                .sum();
        }
        let ratio: Vec<f64> = data.iter().zip(&predicted).map(|(d, p)| d / p).collect();
        for i in 0..8isize {
            let corr: f64 = (0..3).map(|j| k[j as usize] * ratio[refl(i + j - 1)]).sum();
            let expected = data[i as usize] * corr;
            let got = out.get(i as usize, 0, 0);
            assert!((got - expected).abs() < 1e-9, "pixel {i}: {got} vs {expected}");
        }
    }

    #[test]
    fn richardson_lucy_improves_blurred_card() {
        let img = test_card(48, 48, 1).unwrap();
        let psf = motion_psf(7, 0.0).unwrap();
        let blurred = psf.blur(&img);
        let restored = richardson_lucy(&blurred, &psf, 30).unwrap();
        let gain = psnr(&restored, &img).unwrap() - psnr(&blurred, &img).unwrap();
        assert!(gain >= 2.0, "gain {gain:.2} dB");
    }

    #[test]
    fn richardson_lucy_conserves_total_mass() {
        let img = test_card(32, 32, 1).unwrap();
        let psf = motion_psf(5, 30.0).unwrap();
        let blurred = psf.blur(&img);
        let restored = richardson_lucy(&blurred, &psf, 10).unwrap();
        let sum_in: f64 = blurred.pixels().iter().sum();
        let sum_out: f64 = restored.pixels().iter().sum();
        assert!(
            (sum_in - sum_out).abs() / sum_in < 0.01,
            "{sum_in} vs {sum_out}"
        );
    }
}
