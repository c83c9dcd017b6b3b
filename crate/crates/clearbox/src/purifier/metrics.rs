//! Histogram-concentration diagnostics.
//!
//! Restoration quality shows up as a sharper pixel-value distribution.
//! "Concentration" has no single definition, so three statistics are
//! reported side by side: histogram entropy, pixel-value variance and the
//! variance of a 3x3 Laplacian response (sharpness).

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::purifier::conv::{correlate_plane, Kernel2};

pub const HISTOGRAM_BINS: usize = 256;

/// Pixel-value histogram of one channel: 256 uniform bins over [0, 1].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub bins: Vec<u64>,
    pub total: u64,
}

/// Histogram of channel `channel`; counts sum to `width * height`.
pub fn histogram(img: &ImageBuffer, channel: usize) -> Result<Histogram> {
    if channel >= img.channels() {
        return Err(Error::invalid_argument(format!(
            "channel {channel} out of range for a {}-channel image",
            img.channels()
        )));
    }
    let mut bins = vec![0u64; HISTOGRAM_BINS];
    for &v in img.plane(channel) {
        bins[bin_of(v)] += 1;
    }
    Ok(Histogram { bins, total: (img.width() * img.height()) as u64 })
}

#[inline]
fn bin_of(v: f64) -> usize {
    ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConcentrationMetrics {
    /// Shannon entropy in bits of the pooled 256-bin histogram.
    pub shannon_entropy: f64,
    /// Population variance of the raw pixel values.
    pub histogram_variance: f64,
    /// Population variance of the 3x3 Laplacian of the channel-mean image.
    pub laplacian_variance: f64,
}

pub fn concentration_metrics(img: &ImageBuffer) -> ConcentrationMetrics {
    // Entropy over all channels pooled.
    let mut bins = vec![0u64; HISTOGRAM_BINS];
    for &v in img.pixels() {
        bins[bin_of(v)] += 1;
    }
    let total = img.pixels().len() as f64;
    let shannon_entropy = -bins
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| {
            let p = n as f64 / total;
            p * p.log2()
        })
        .sum::<f64>();

    let mean = img.mean();
    let histogram_variance =
        img.pixels().iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / total;

    let luma = img.luma();
    let laplacian = Kernel2::centered(
        vec![0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0],
        3,
        3,
    );
    let response = correlate_plane(&luma, img.width(), img.height(), &laplacian);
    let n = response.len() as f64;
    let rmean = response.iter().sum::<f64>() / n;
    let laplacian_variance = response.iter().map(|&v| (v - rmean) * (v - rmean)).sum::<f64>() / n;

    ConcentrationMetrics { shannon_entropy, histogram_variance, laplacian_variance }
}
