//! Axis-aligned pixel boxes, frame sizes, and the IoU primitive.
//!
//! Boxes use corner coordinates with `area = (x_max - x_min) * (y_max - y_min)`.
//! When a box is applied to an image it covers columns `x_min..x_max` and rows
//! `y_min..y_max`, so `x_max == width` is the right edge of the frame and a box
//! "fits" a frame when `x_max <= width` and `y_max <= height`.

use core::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("degenerate box ({x_min},{y_min},{x_max},{y_max}): min corner must be strictly below max corner")]
    Degenerate {
        x_min: i64,
        y_min: i64,
        x_max: i64,
        y_max: i64,
    },
    #[error("negative coordinate in box ({x_min},{y_min},{x_max},{y_max})")]
    Negative {
        x_min: i64,
        y_min: i64,
        x_max: i64,
        y_max: i64,
    },
    #[error("box {bbox} exceeds frame {frame}")]
    OutOfBounds { bbox: BoundingBox, frame: FrameSize },
    #[error("frame size {width}x{height} must be positive")]
    EmptyFrame { width: u32, height: u32 },
}

/// Width and height of a frame in pixels. Both are always positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameSize {
    width: u32,
    height: u32,
}

impl FrameSize {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyFrame { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    /// The box covering the whole frame.
    pub fn full_box(&self) -> BoundingBox {
        BoundingBox {
            x_min: 0,
            y_min: 0,
            x_max: self.width,
            y_max: self.height,
        }
    }
}

impl fmt::Display for FrameSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Axis-aligned box in pixel coordinates, origin top-left.
///
/// Always satisfies `x_min < x_max` and `y_min < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundingBox {
    x_min: u32,
    y_min: u32,
    x_max: u32,
    y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, GeometryError> {
        if x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::Degenerate {
                x_min: x_min as i64,
                y_min: y_min as i64,
                x_max: x_max as i64,
                y_max: y_max as i64,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from signed coordinates as found in annotation files.
    pub fn from_signed(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Result<Self, GeometryError> {
        if x_min < 0 || y_min < 0 || x_max < 0 || y_max < 0 {
            return Err(GeometryError::Negative {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::Degenerate {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        let fits = |v: i64| u32::try_from(v).ok();
        match (fits(x_min), fits(y_min), fits(x_max), fits(y_max)) {
            (Some(a), Some(b), Some(c), Some(d)) => Self::new(a, b, c, d),
            _ => Err(GeometryError::Degenerate {
                x_min,
                y_min,
                x_max,
                y_max,
            }),
        }
    }

    pub fn x_min(&self) -> u32 {
        self.x_min
    }

    pub fn y_min(&self) -> u32 {
        self.y_min
    }

    pub fn x_max(&self) -> u32 {
        self.x_max
    }

    pub fn y_max(&self) -> u32 {
        self.y_max
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn coords(&self) -> [u32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn fits_within(&self, frame: FrameSize) -> bool {
        self.x_max <= frame.width && self.y_max <= frame.height
    }

    /// Area shared with `other`; zero when the boxes only touch or are disjoint.
    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let w = self.x_max.min(other.x_max).saturating_sub(self.x_min.max(other.x_min));
        let h = self.y_max.min(other.y_max).saturating_sub(self.y_min.max(other.y_min));
        w as u64 * h as u64
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

// round(v * num / den) with halves rounded up; all operands nonnegative
fn scale_coord(v: u32, num: u32, den: u32) -> u64 {
    (2 * v as u64 * num as u64 + den as u64) / (2 * den as u64)
}

/// Maps a box from one frame resolution to another.
///
/// Each coordinate is scaled independently, rounded to the nearest integer
/// (halves up), and clamped into `to`.
pub fn scale_box(bbox: &BoundingBox, from: FrameSize, to: FrameSize) -> Result<BoundingBox, GeometryError> {
    if !bbox.fits_within(from) {
        return Err(GeometryError::OutOfBounds { bbox: *bbox, frame: from });
    }
    if from == to {
        return Ok(*bbox);
    }
    let sx = |v| scale_coord(v, to.width, from.width).min(to.width as u64) as u32;
    let sy = |v| scale_coord(v, to.height, from.height).min(to.height as u64) as u32;
    BoundingBox::new(sx(bbox.x_min), sy(bbox.y_min), sx(bbox.x_max), sy(bbox.y_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(a: u32, b: u32, c: u32, d: u32) -> BoundingBox {
        BoundingBox::new(a, b, c, d).unwrap()
    }

    fn size(w: u32, h: u32) -> FrameSize {
        FrameSize::new(w, h).unwrap()
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let b = bb(3, 4, 20, 30);
        assert_eq!(iou(&b, &b), 1.0);
        assert_eq!(iou(&bb(0, 0, 10, 10), &bb(20, 20, 30, 30)), 0.0);
        // touching edges share no area
        assert_eq!(iou(&bb(0, 0, 10, 10), &bb(10, 0, 20, 10)), 0.0);
    }

    #[test]
    fn iou_half_overlap_is_one_third() {
        // 50 shared cells over 150 covered cells
        let v = iou(&bb(0, 0, 10, 10), &bb(5, 0, 15, 10));
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_and_negative() {
        assert!(matches!(BoundingBox::new(5, 0, 5, 10), Err(GeometryError::Degenerate { .. })));
        assert!(matches!(
            BoundingBox::from_signed(-1, 0, 5, 10),
            Err(GeometryError::Negative { .. })
        ));
        assert!(FrameSize::new(0, 10).is_err());
    }

    #[test]
    fn scale_box_times_four() {
        let out = scale_box(&bb(50, 50, 100, 100), size(320, 180), size(1280, 720)).unwrap();
        assert_eq!(out, bb(200, 200, 400, 400));
    }

    #[test]
    fn scale_box_identity() {
        let b = bb(7, 9, 33, 41);
        assert_eq!(scale_box(&b, size(64, 48), size(64, 48)).unwrap(), b);
    }

    #[test]
    fn scale_box_near_edge() {
        // 319*4 = 1276, 179*4 = 716
        let out = scale_box(&bb(0, 0, 319, 179), size(320, 180), size(1280, 720)).unwrap();
        assert_eq!(out, bb(0, 0, 1276, 716));
    }

    #[test]
    fn scale_box_rounds_half_up_and_reports_collapse() {
        // 2 * 1/4 = 0.5 rounds to 1, 3 * 1/4 = 0.75 rounds to 1: zero width
        let err = scale_box(&bb(2, 0, 3, 8), size(8, 8), size(2, 2)).unwrap_err();
        assert!(matches!(err, GeometryError::Degenerate { .. }));
        let ok = scale_box(&bb(1, 0, 7, 8), size(8, 8), size(2, 2)).unwrap();
        assert_eq!(ok, bb(0, 0, 2, 2));
    }

    #[test]
    fn scale_box_rejects_box_outside_source() {
        let err = scale_box(&bb(0, 0, 321, 10), size(320, 180), size(640, 360)).unwrap_err();
        assert!(matches!(err, GeometryError::OutOfBounds { .. }));
    }
}
