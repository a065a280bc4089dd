//! Owned 8-bit raster images and the bilinear resampler used for chips and
//! detection-resolution frames.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{BoundingBox, FrameSize, GeometryError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageError {
    #[error("buffer holds {actual} bytes, {width}x{height} {format:?} needs {expected}")]
    BufferSize {
        width: u32,
        height: u32,
        format: PixelFormat,
        expected: usize,
        actual: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("output size must be positive")]
    EmptyOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PixelFormat {
    Gray8,
    Rgb8,
}

impl PixelFormat {
    pub fn channels(self) -> usize {
        match self {
            PixelFormat::Gray8 => 1,
            PixelFormat::Rgb8 => 3,
        }
    }
}

/// Row-major interleaved 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    size: FrameSize,
    format: PixelFormat,
    data: Vec<u8>,
}

impl Image {
    pub fn from_raw(width: u32, height: u32, format: PixelFormat, data: Vec<u8>) -> Result<Self, ImageError> {
        let size = FrameSize::new(width, height)?;
        let expected = size.area() as usize * format.channels();
        if data.len() != expected {
            return Err(ImageError::BufferSize {
                width,
                height,
                format,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { size, format, data })
    }

    /// Image with every channel of every pixel set to `value`.
    pub fn filled(size: FrameSize, format: PixelFormat, value: u8) -> Self {
        let len = size.area() as usize * format.channels();
        Self {
            size,
            format,
            data: vec![value; len],
        }
    }

    pub fn size(&self) -> FrameSize {
        self.size
    }

    pub fn width(&self) -> u32 {
        self.size.width()
    }

    pub fn height(&self) -> u32 {
        self.size.height()
    }

    pub fn format(&self) -> PixelFormat {
        self.format
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.format.channels();
        let i = (y as usize * self.width() as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    /// Sets every channel inside `region` to the matching entry of `color`
    /// (only the first entry is used for gray images).
    pub fn fill_region(&mut self, region: &BoundingBox, color: [u8; 3]) -> Result<(), ImageError> {
        if !region.fits_within(self.size) {
            return Err(GeometryError::OutOfBounds {
                bbox: *region,
                frame: self.size,
            }
            .into());
        }
        let c = self.format.channels();
        let stride = self.width() as usize * c;
        for y in region.y_min()..region.y_max() {
            let row = &mut self.data[y as usize * stride..(y as usize + 1) * stride];
            for x in region.x_min()..region.x_max() {
                let px = &mut row[x as usize * c..x as usize * c + c];
                px.copy_from_slice(&color[..c]);
            }
        }
        Ok(())
    }

    /// Luma plane (BT.601 weights in 8.8 fixed point).
    pub fn luma(&self) -> Vec<u8> {
        match self.format {
            PixelFormat::Gray8 => self.data.clone(),
            PixelFormat::Rgb8 => self
                .data
                .chunks_exact(3)
                .map(|p| ((77 * p[0] as u32 + 150 * p[1] as u32 + 29 * p[2] as u32 + 128) >> 8) as u8)
                .collect(),
        }
    }

    pub fn to_gray(&self) -> Image {
        Image {
            size: self.size,
            format: PixelFormat::Gray8,
            data: self.luma(),
        }
    }
}

// Source sample positions for one output axis: pixel centres aligned, edges clamped.
fn axis_taps(src_start: u32, src_len: u32, dst_len: u32) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    let last = (src_len - 1) as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = s as u32;
            let i1 = (i0 + 1).min(src_len - 1);
            let frac = s - i0 as f64;
            ((src_start + i0) as usize, (src_start + i1) as usize, frac)
        })
        .collect()
}

/// Resamples `region` of `src` to `out_w` x `out_h` with bilinear
/// interpolation. The aspect ratio is not preserved.
pub fn resize_region(src: &Image, region: &BoundingBox, out_w: u32, out_h: u32) -> Result<Image, ImageError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::EmptyOutput);
    }
    if !region.fits_within(src.size) {
        return Err(GeometryError::OutOfBounds {
            bbox: *region,
            frame: src.size,
        }
        .into());
    }
    let c = src.format.channels();
    let stride = src.width() as usize * c;
    let xs = axis_taps(region.x_min(), region.width(), out_w);
    let ys = axis_taps(region.y_min(), region.height(), out_h);
    let mut out = Vec::with_capacity(out_w as usize * out_h as usize * c);
    for &(y0, y1, fy) in &ys {
        let r0 = &src.data[y0 * stride..(y0 + 1) * stride];
        let r1 = &src.data[y1 * stride..(y1 + 1) * stride];
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let a = r0[x0 * c + ch] as f64;
                let b = r0[x1 * c + ch] as f64;
                let p = r1[x0 * c + ch] as f64;
                let q = r1[x1 * c + ch] as f64;
                let top = a + (b - a) * fx;
                let bottom = p + (q - p) * fx;
                let v = top + (bottom - top) * fy;
                out.push((v + 0.5) as u8);
            }
        }
    }
    Image::from_raw(out_w, out_h, src.format, out)
}

/// Whole-image bilinear resize.
pub fn resize(src: &Image, out: FrameSize) -> Image {
    resize_region(src, &src.size.full_box(), out.width(), out.height()).expect("full box always fits")
}

/// Crops `bbox` out of `frame` and stretches it to a square chip.
pub fn crop_and_resize(frame: &Image, bbox: &BoundingBox, out_size: u32) -> Result<Image, ImageError> {
    resize_region(frame, bbox, out_size, out_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32, data: Vec<u8>) -> Image {
        Image::from_raw(w, h, PixelFormat::Gray8, data).unwrap()
    }

    #[test]
    fn constant_image_stays_constant() {
        let frame = Image::filled(FrameSize::new(640, 360).unwrap(), PixelFormat::Rgb8, 128);
        let chip = crop_and_resize(&frame, &BoundingBox::new(13, 40, 77, 300).unwrap(), 112).unwrap();
        assert_eq!(chip.width(), 112);
        assert_eq!(chip.height(), 112);
        assert!(chip.as_bytes().iter().all(|&v| v == 128));
    }

    #[test]
    fn same_size_crop_is_pixel_identical() {
        let data: Vec<u8> = (0..200u32 * 150).map(|i| (i * 31 % 251) as u8).collect();
        let frame = gray(200, 150, data);
        let bbox = BoundingBox::new(40, 20, 152, 132).unwrap();
        let chip = crop_and_resize(&frame, &bbox, 112).unwrap();
        for y in 0..112 {
            for x in 0..112 {
                assert_eq!(chip.pixel(x, y), frame.pixel(x + 40, y + 20));
            }
        }
    }

    #[test]
    fn checkerboard_upsample_matches_hand_values() {
        // 255 * (fx + fy - 2 fx fy) at sample offsets {0, .25, .75, 1}, rounded
        let frame = gray(2, 2, vec![0, 255, 255, 0]);
        let out = crop_and_resize(&frame, &frame.size().full_box(), 4).unwrap();
        let expected: [u8; 16] = [
            0, 64, 191, 255, //
            64, 96, 159, 191, //
            191, 159, 96, 64, //
            255, 191, 64, 0,
        ];
        assert_eq!(out.as_bytes(), &expected);
    }

    #[test]
    fn crop_outside_frame_is_rejected() {
        let frame = Image::filled(FrameSize::new(10, 10).unwrap(), PixelFormat::Gray8, 0);
        let err = crop_and_resize(&frame, &BoundingBox::new(5, 5, 11, 10).unwrap(), 4).unwrap_err();
        assert!(matches!(err, ImageError::Geometry(GeometryError::OutOfBounds { .. })));
    }

    #[test]
    fn buffer_length_checked() {
        assert!(matches!(
            Image::from_raw(4, 4, PixelFormat::Rgb8, vec![0; 16]),
            Err(ImageError::BufferSize { expected: 48, .. })
        ));
    }

    #[test]
    fn luma_of_primaries() {
        let img = Image::from_raw(3, 1, PixelFormat::Rgb8, vec![255, 0, 0, 0, 255, 0, 255, 255, 255]).unwrap();
        assert_eq!(img.luma(), vec![77, 149, 255]);
    }
}
