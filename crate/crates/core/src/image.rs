//! 8-bit RGB rasters, binary masks, and PNG persistence.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma, Rgb};
use thiserror::Error;

use crate::geom::PixelRect;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot decode raster: {0}")]
    Decode(String),
    #[error("raster has unexpected dimensions {got:?}, expected {want:?}")]
    Dimensions { got: (u32, u32), want: (u32, u32) },
}

/// Row-major RGB image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, fill: [u8; 3]) -> Self {
        let n = (width * height) as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&fill);
        }
        Self { width, height, pixels }
    }

    fn index(&self, x: u32, y: u32) -> usize {
        ((y * self.width + x) * 3) as usize
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.index(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, c: [u8; 3]) {
        let i = self.index(x, y);
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    /// Copies the region `r`; pixels outside the frame read as black.
    pub fn crop(&self, r: PixelRect) -> Image {
        let mut out = Image::new(r.w, r.h, [0, 0, 0]);
        for j in 0..r.h {
            for i in 0..r.w {
                let (x, y) = (r.x as i64 + i as i64, r.y as i64 + j as i64);
                if self.in_bounds(x, y) {
                    out.put(i, j, self.get(x as u32, y as u32));
                }
            }
        }
        out
    }

    /// Bilinear resample to `w x h` using pixel-center alignment.
    pub fn resize_bilinear(&self, w: u32, h: u32) -> Image {
        let mut out = Image::new(w, h, [0, 0, 0]);
        if self.width == 0 || self.height == 0 {
            return out;
        }
        let sx = self.width as f64 / w as f64;
        let sy = self.height as f64 / h as f64;
        for y in 0..h {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as u32;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..w {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as u32;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
                let mut px = [0u8; 3];
                for k in 0..3 {
                    let top = a[k] as f64 * (1.0 - tx) + b[k] as f64 * tx;
                    let bot = c[k] as f64 * (1.0 - tx) + d[k] as f64 * tx;
                    px[k] = (top * (1.0 - ty) + bot * ty).round().clamp(0.0, 255.0) as u8;
                }
                out.put(x, y, px);
            }
        }
        out
    }

    pub fn to_png(&self) -> Vec<u8> {
        let buf: ImageBuffer<Rgb<u8>, _> =
            ImageBuffer::from_raw(self.width, self.height, self.pixels.clone()).expect("pixel buffer size");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png).expect("png encoding to memory");
        out.into_inner()
    }

    pub fn from_png(bytes: &[u8]) -> Result<Image, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| RasterError::Decode(e.to_string()))?
            .to_rgb8();
        Ok(Image { width: img.width(), height: img.height(), pixels: img.into_raw() })
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        std::fs::write(path, self.to_png())
            .map_err(|source| RasterError::Io { path: path.display().to_string(), source })
    }

    pub fn load_png(path: &Path) -> Result<Image, RasterError> {
        let bytes = std::fs::read(path)
            .map_err(|source| RasterError::Io { path: path.display().to_string(), source })?;
        Self::from_png(&bytes)
    }
}

/// Binary coverage raster, aligned to its owning box.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; (width * height) as usize] }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![true; (width * height) as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Nearest-neighbor resample to `w x h`.
    pub fn resize_nearest(&self, w: u32, h: u32) -> Mask {
        let mut out = Mask::new(w, h);
        if self.width == 0 || self.height == 0 {
            return out;
        }
        for y in 0..h {
            let sy = (((y as f64 + 0.5) * self.height as f64 / h as f64) as u32).min(self.height - 1);
            for x in 0..w {
                let sx = (((x as f64 + 0.5) * self.width as f64 / w as f64) as u32).min(self.width - 1);
                out.set(x, y, self.get(sx, sy));
            }
        }
        out
    }

    pub fn to_png(&self) -> Vec<u8> {
        let raw: Vec<u8> = self.bits.iter().map(|b| if *b { 255 } else { 0 }).collect();
        let buf: ImageBuffer<Luma<u8>, _> =
            ImageBuffer::from_raw(self.width, self.height, raw).expect("mask buffer size");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png).expect("png encoding to memory");
        out.into_inner()
    }

    pub fn from_png(bytes: &[u8]) -> Result<Mask, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| RasterError::Decode(e.to_string()))?
            .to_luma8();
        Ok(Mask {
            width: img.width(),
            height: img.height(),
            bits: img.into_raw().into_iter().map(|v| v >= 128).collect(),
        })
    }
}

/// Frame-sized binary coverage used for edit regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl FrameMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; (width * height) as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32) {
        self.bits[(y * self.width + x) as usize] = true;
    }

    /// Marks the set pixels of a box-aligned mask placed at `r`.
    pub fn paint(&mut self, m: &Mask, r: PixelRect) {
        for j in 0..m.height {
            for i in 0..m.width {
                let (x, y) = (r.x as i64 + i as i64, r.y as i64 + j as i64);
                if m.get(i, j) && x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 {
                    self.set(x as u32, y as u32);
                }
            }
        }
    }

    pub fn union(&mut self, other: &FrameMask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Square (Chebyshev) dilation by `r` pixels.
    pub fn dilate(&self, r: u32) -> FrameMask {
        if r == 0 {
            return self.clone();
        }
        let (w, h) = (self.width as i64, self.height as i64);
        let r = r as i64;
        // separable: rows then columns
        let mut rows = FrameMask::new(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                if (x - r..=x + r).any(|xx| xx >= 0 && xx < w && self.bits[(y * w + xx) as usize]) {
                    rows.bits[(y * w + x) as usize] = true;
                }
            }
        }
        let mut out = FrameMask::new(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                if (y - r..=y + r).any(|yy| yy >= 0 && yy < h && rows.bits[(yy * w + x) as usize]) {
                    out.bits[(y * w + x) as usize] = true;
                }
            }
        }
        out
    }

    /// Box-aligned crop of this mask at `r`.
    pub fn crop(&self, r: PixelRect) -> Mask {
        let mut m = Mask::new(r.w, r.h);
        for j in 0..r.h {
            for i in 0..r.w {
                let (x, y) = (r.x as i64 + i as i64, r.y as i64 + j as i64);
                if x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 {
                    m.set(i, j, self.get(x as u32, y as u32));
                }
            }
        }
        m
    }
}

/// Intersection-over-union of two frame masks (1 when both are empty).
pub fn mask_iou(a: &FrameMask, b: &FrameMask) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let mut img = Image::new(5, 3, [10, 20, 30]);
        img.put(4, 2, [255, 0, 7]);
        let back = Image::from_png(&img.to_png()).unwrap();
        assert_eq!(back, img);
        let mut m = Mask::new(4, 4);
        m.set(1, 2, true);
        assert_eq!(Mask::from_png(&m.to_png()).unwrap(), m);
    }

    #[test]
    fn unit_scale_resamples_are_identity() {
        let mut img = Image::new(7, 4, [0, 0, 0]);
        for y in 0..4 {
            for x in 0..7 {
                img.put(x, y, [x as u8 * 30, y as u8 * 50, 9]);
            }
        }
        assert_eq!(img.resize_bilinear(7, 4), img);
        let mut m = Mask::new(6, 3);
        m.set(2, 1, true);
        m.set(5, 0, true);
        assert_eq!(m.resize_nearest(6, 3), m);
    }

    #[test]
    fn doubling_quadruples_area() {
        let mut m = Mask::new(5, 5);
        for (x, y) in [(0, 0), (1, 3), (4, 4), (2, 2)] {
            m.set(x, y, true);
        }
        assert_eq!(m.resize_nearest(10, 10).count(), 4 * m.count());
    }

    #[test]
    fn dilation_grows_square() {
        let mut f = FrameMask::new(9, 9);
        f.set(4, 4);
        assert_eq!(f.dilate(2).count(), 25);
        f.set(0, 0);
        assert_eq!(f.dilate(1).count(), 9 + 4);
    }
}
