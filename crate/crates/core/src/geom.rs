//! Axis-aligned rectangles in render (pixel) space.
//!
//! The origin is the top-left corner of the frame and `y` grows downward, so
//! a box's `bottom()` is numerically larger than its `y`.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Axis-aligned box: top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct Rect<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> Rect<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> T {
        self.x + self.w
    }

    pub fn bottom(&self) -> T {
        self.y + self.h
    }

    pub fn center(&self) -> (T, T) {
        let two = T::lit(2.0);
        (self.x + self.w / two, self.y + self.h / two)
    }

    pub fn area(&self) -> T {
        self.w.max(T::zero()) * self.h.max(T::zero())
    }

    /// Overlap of the horizontal extents (negative when separated).
    pub fn horizontal_overlap(&self, other: &Self) -> T {
        self.right().min(other.right()) - self.x.max(other.x)
    }

    /// Overlap of the vertical extents (negative when separated).
    pub fn vertical_overlap(&self, other: &Self) -> T {
        self.bottom().min(other.bottom()) - self.y.max(other.y)
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let w = self.horizontal_overlap(other);
        let h = self.vertical_overlap(other);
        if w <= T::zero() || h <= T::zero() {
            T::zero()
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection_area(other);
        if inter <= T::zero() {
            return T::zero();
        }
        let union = self.area() + other.area() - inter;
        if union <= T::zero() {
            T::zero()
        } else {
            inter / union
        }
    }

    /// Euclidean distance between box centers.
    pub fn center_distance(&self, other: &Self) -> T {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        ((ax - bx) * (ax - bx) + (ay - by) * (ay - by)).sqrt()
    }

    /// True when `inner` lies within `self`, allowing `eps` slack on every side.
    pub fn contains_rect(&self, inner: &Self, eps: T) -> bool {
        inner.x >= self.x - eps
            && inner.y >= self.y - eps
            && inner.right() <= self.right() + eps
            && inner.bottom() <= self.bottom() + eps
    }

    pub fn contains_point(&self, px: T, py: T) -> bool {
        px >= self.x && px <= self.right() && py >= self.y && py <= self.bottom()
    }

    pub fn translated(&self, dx: T, dy: T) -> Self {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Shrinks/shifts the box so it lies inside a `width x height` frame.
    /// Extents are kept at least one unit wide.
    pub fn clamp_to_frame(&self, width: T, height: T) -> Self {
        let one = T::one();
        let w = self.w.max(one).min(width);
        let h = self.h.max(one).min(height);
        let x = self.x.max(T::zero()).min(width - w);
        let y = self.y.max(T::zero()).min(height - h);
        Self::new(x, y, w, h)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    pub fn cast<U: Scalar>(&self) -> Rect<U> {
        Rect::new(
            U::lit(self.x.as_f64()),
            U::lit(self.y.as_f64()),
            U::lit(self.w.as_f64()),
            U::lit(self.h.as_f64()),
        )
    }

    /// Integer pixel footprint: corners rounded to the nearest pixel edge.
    pub fn to_pixels(&self) -> PixelRect {
        let x0 = self.x.as_f64().round() as i64;
        let y0 = self.y.as_f64().round() as i64;
        let x1 = self.right().as_f64().round() as i64;
        let y1 = self.bottom().as_f64().round() as i64;
        PixelRect {
            x: x0 as i32,
            y: y0 as i32,
            w: (x1 - x0).max(0) as u32,
            h: (y1 - y0).max(0) as u32,
        }
    }
}

/// Integer rectangle addressing raster pixels; may extend past the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: i32,
    pub y: i32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub fn new(x: i32, y: i32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn to_rect(&self) -> Rect<f64> {
        Rect::new(self.x as f64, self.y as f64, self.w as f64, self.h as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_identical_and_disjoint() {
        let a = Rect::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        let b = Rect::new(20.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&b), 0.0);
        // touching edges have zero overlap
        let c = Rect::new(10.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&c), 0.0);
    }

    #[test]
    fn iou_half_overlap() {
        let a = Rect::new(0.0_f32, 0.0, 10.0, 10.0);
        let b = Rect::new(5.0_f32, 0.0, 10.0, 10.0);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-6);
    }

    #[test]
    fn clamp_keeps_box_inside() {
        let r = Rect::new(-5.0, 350.0, 20.0, 30.0).clamp_to_frame(640.0, 360.0);
        assert_eq!(r, Rect::new(0.0, 330.0, 20.0, 30.0));
    }

    #[test]
    fn pixel_footprint_rounds_edges() {
        let p = Rect::new(10.4, 19.6, 20.0, 10.0).to_pixels();
        assert_eq!(p, PixelRect::new(10, 20, 20, 10));
    }
}
