//! Axis-aligned bounding boxes, coordinate conversion and overlap arithmetic.
//!
//! Coordinates are continuous reals. A box lives either in absolute pixel
//! coordinates tied to an image size, or normalized to the unit square.
//! Normalized boxes are clipped into [0, 1] on construction; zero-area
//! boxes are legal values (clipping can produce them) but are dropped
//! before fusion and evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The coordinate basis a [`BBox`] is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoordSpace {
    /// Pixel coordinates of an image with the given dimensions.
    Absolute { width: f64, height: f64 },
    /// Unitless coordinates in [0, 1].
    Normalized,
}

impl CoordSpace {
    pub fn absolute(width: f64, height: f64) -> Self {
        CoordSpace::Absolute { width, height }
    }
}

/// Axis-aligned rectangle with `x_min <= x_max` and `y_min <= y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub coord_space: CoordSpace,
}

impl BBox {
    /// Build a box, rejecting negative extents and non-finite coordinates.
    /// Normalized coordinates are clipped into [0, 1].
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, space: CoordSpace) -> Result<Self> {
        for v in [x_min, y_min, x_max, y_max] {
            if !v.is_finite() {
                return Err(Error::invalid_argument(format!(
                    "bbox coordinate is not finite: {v}"
                )));
            }
        }
        if x_min > x_max || y_min > y_max {
            return Err(Error::invalid_argument(format!(
                "bbox has negative extent: ({x_min},{y_min},{x_max},{y_max})"
            )));
        }
        if let CoordSpace::Absolute { width, height } = space {
            if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
                return Err(Error::invalid_argument(format!(
                    "absolute coordinate space needs positive dimensions, got {width}x{height}"
                )));
            }
        }
        let mut b = BBox {
            x_min,
            y_min,
            x_max,
            y_max,
            coord_space: space,
        };
        if matches!(space, CoordSpace::Normalized) {
            b.x_min = b.x_min.clamp(0.0, 1.0);
            b.y_min = b.y_min.clamp(0.0, 1.0);
            b.x_max = b.x_max.clamp(0.0, 1.0);
            b.y_max = b.y_max.clamp(0.0, 1.0);
        }
        Ok(b)
    }

    /// Shorthand for a box in the normalized space.
    pub fn normalized(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        BBox::new(x_min, y_min, x_max, y_max, CoordSpace::Normalized)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn same_space(&self, other: &BBox) -> bool {
        match (self.coord_space, other.coord_space) {
            (CoordSpace::Normalized, CoordSpace::Normalized) => true,
            (
                CoordSpace::Absolute { width: w1, height: h1 },
                CoordSpace::Absolute { width: w2, height: h2 },
            ) => w1 == w2 && h1 == h2,
            _ => false,
        }
    }
}

/// Area of a box; zero for degenerate boxes.
pub fn area(b: &BBox) -> f64 {
    b.width() * b.height()
}

/// Intersection area of two boxes assumed to share a coordinate space.
pub(crate) fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

/// IoU without the coordinate-space check, for hot loops that validated
/// their inputs up front.
pub(crate) fn iou_raw(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        // Two degenerate boxes; defined as zero overlap.
        0.0
    } else {
        inter / union
    }
}

/// Intersection over union. Errors if the boxes live in different
/// coordinate spaces; never returns NaN.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    if !a.same_space(b) {
        return Err(Error::invalid_argument(
            "iou requires both boxes in the same coordinate space",
        ));
    }
    Ok(iou_raw(a, b))
}

/// Clamp `b` into `bounds`. Disjoint inputs collapse to a zero-area box on
/// the nearest edge or corner of `bounds`.
pub fn clip(b: &BBox, bounds: &BBox) -> Result<BBox> {
    if !b.same_space(bounds) {
        return Err(Error::invalid_argument(
            "clip requires both boxes in the same coordinate space",
        ));
    }
    Ok(BBox {
        x_min: b.x_min.clamp(bounds.x_min, bounds.x_max),
        y_min: b.y_min.clamp(bounds.y_min, bounds.y_max),
        x_max: b.x_max.clamp(bounds.x_min, bounds.x_max),
        y_max: b.y_max.clamp(bounds.y_min, bounds.y_max),
        coord_space: b.coord_space,
    })
}

/// Re-express a box in another coordinate space.
///
/// Absolute -> Normalized divides by the source image size, Normalized ->
/// Absolute multiplies by the target size, and Absolute -> Absolute
/// rescales through the normalized form. Round trips reproduce the input
/// to within 1e-9 relative error.
pub fn convert(b: &BBox, target: CoordSpace) -> Result<BBox> {
    if let CoordSpace::Absolute { width, height } = target {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::invalid_argument(format!(
                "conversion target needs positive dimensions, got {width}x{height}"
            )));
        }
    }
    match (b.coord_space, target) {
        (CoordSpace::Normalized, CoordSpace::Normalized) => Ok(*b),
        (CoordSpace::Absolute { width: w1, height: h1 }, CoordSpace::Absolute { width: w2, height: h2 })
            if w1 == w2 && h1 == h2 =>
        {
            Ok(*b)
        }
        (CoordSpace::Absolute { width, height }, CoordSpace::Normalized) => BBox::new(
            b.x_min / width,
            b.y_min / height,
            b.x_max / width,
            b.y_max / height,
            CoordSpace::Normalized,
        ),
        (CoordSpace::Normalized, CoordSpace::Absolute { width, height }) => Ok(BBox {
            x_min: b.x_min * width,
            y_min: b.y_min * height,
            x_max: b.x_max * width,
            y_max: b.y_max * height,
            coord_space: target,
        }),
        (CoordSpace::Absolute { .. }, CoordSpace::Absolute { .. }) => {
            convert(&convert(b, CoordSpace::Normalized)?, target)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::normalized(x1, y1, x2, y2).unwrap()
    }

    fn ab(x1: f64, y1: f64, x2: f64, y2: f64, w: f64, h: f64) -> BBox {
        BBox::new(x1, y1, x2, y2, CoordSpace::absolute(w, h)).unwrap()
    }

    #[test]
    fn rejects_negative_extent() {
        assert!(BBox::normalized(0.5, 0.0, 0.2, 1.0).is_err());
        assert!(BBox::normalized(0.0, 0.5, 1.0, 0.2).is_err());
    }

    #[test]
    fn normalized_is_clipped() {
        let b = BBox::new(-0.5, -0.5, 1.5, 0.5, CoordSpace::Normalized).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (0.0, 0.0, 1.0, 0.5));
    }

    #[test]
    fn iou_identity() {
        let b = ab(3.0, 4.0, 10.0, 12.0, 32.0, 32.0);
        assert_eq!(iou(&b, &b).unwrap(), 1.0);
    }

    #[test]
    fn iou_disjoint() {
        let a = ab(0.0, 0.0, 1.0, 1.0, 10.0, 10.0);
        let b = ab(5.0, 5.0, 6.0, 6.0, 10.0, 10.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn iou_partial_overlap() {
        // intersection 1, union 4 + 4 - 1 = 7
        let a = ab(0.0, 0.0, 2.0, 2.0, 10.0, 10.0);
        let b = ab(1.0, 1.0, 3.0, 3.0, 10.0, 10.0);
        assert!((iou(&a, &b).unwrap() - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn iou_degenerate_pair_is_zero() {
        let a = ab(1.0, 1.0, 1.0, 1.0, 10.0, 10.0);
        let b = ab(1.0, 1.0, 1.0, 1.0, 10.0, 10.0);
        let v = iou(&a, &b).unwrap();
        assert_eq!(v, 0.0);
        assert!(!v.is_nan());
    }

    #[test]
    fn iou_space_mismatch() {
        let a = nb(0.0, 0.0, 1.0, 1.0);
        let b = ab(0.0, 0.0, 1.0, 1.0, 10.0, 10.0);
        assert!(iou(&a, &b).is_err());
        let c = ab(0.0, 0.0, 1.0, 1.0, 20.0, 10.0);
        assert!(iou(&b, &c).is_err());
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&ab(0.0, 0.0, 0.0, 0.0, 5.0, 5.0)), 0.0);
        assert_eq!(area(&ab(0.0, 0.0, 2.0, 3.0, 5.0, 5.0)), 6.0);
        assert_eq!(area(&ab(1.0, 1.0, 3.0, 3.0, 5.0, 5.0)), 4.0);
    }

    #[test]
    fn clip_identity() {
        let b = ab(1.0, 1.0, 3.0, 3.0, 5.0, 5.0);
        assert_eq!(clip(&b, &b).unwrap(), b);
    }

    #[test]
    fn clip_overflow_and_disjoint() {
        let bounds = ab(0.0, 0.0, 1.0, 1.0, 10.0, 10.0);
        let big = ab(-1.0, -1.0, 2.0, 2.0, 10.0, 10.0);
        let c = clip(&big, &bounds).unwrap();
        assert_eq!((c.x_min, c.y_min, c.x_max, c.y_max), (0.0, 0.0, 1.0, 1.0));

        let far = ab(5.0, 5.0, 6.0, 6.0, 10.0, 10.0);
        let d = clip(&far, &bounds).unwrap();
        assert_eq!(area(&d), 0.0);
        assert_eq!((d.x_min, d.y_min, d.x_max, d.y_max), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn convert_examples() {
        let b = ab(10.0, 20.0, 30.0, 40.0, 100.0, 100.0);
        let n = convert(&b, CoordSpace::Normalized).unwrap();
        assert_eq!((n.x_min, n.y_min, n.x_max, n.y_max), (0.1, 0.2, 0.3, 0.4));

        let full = ab(0.0, 0.0, 100.0, 100.0, 100.0, 100.0);
        let nf = convert(&full, CoordSpace::Normalized).unwrap();
        assert_eq!((nf.x_min, nf.y_min, nf.x_max, nf.y_max), (0.0, 0.0, 1.0, 1.0));

        let id = convert(&n, CoordSpace::Normalized).unwrap();
        assert_eq!(id, n);
    }

    #[test]
    fn convert_rejects_bad_dims() {
        let n = nb(0.1, 0.1, 0.5, 0.5);
        assert!(convert(&n, CoordSpace::absolute(0.0, 10.0)).is_err());
        assert!(convert(&n, CoordSpace::absolute(10.0, -1.0)).is_err());
    }
}
