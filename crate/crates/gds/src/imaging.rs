//! Conversions between the core raster type and encoded image files.

use std::io::Cursor;
use std::path::Path;

use gds_core::{Image, PixelFormat};
use image::codecs::jpeg::JpegEncoder;
use image::{DynamicImage, ExtendedColorType, ImageReader};

/// Quality used for every JPEG written by this crate; fixed so outputs are reproducible.
pub const JPEG_QUALITY: u8 = 90;

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("decode: {0}")]
    Decode(#[from] image::ImageError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Raster(#[from] gds_core::ImageError),
}

pub fn from_dynamic(img: DynamicImage) -> Result<Image, ImagingError> {
    let (w, h) = (img.width(), img.height());
    let out = match img {
        DynamicImage::ImageLuma8(g) => Image::from_raw(w, h, PixelFormat::Gray8, g.into_raw())?,
        other => Image::from_raw(w, h, PixelFormat::Rgb8, other.into_rgb8().into_raw())?,
    };
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Image, ImagingError> {
    let img = ImageReader::new(Cursor::new(bytes)).with_guessed_format()?.decode()?;
    from_dynamic(img)
}

pub fn load(path: &Path) -> Result<Image, ImagingError> {
    let img = ImageReader::open(path)?.with_guessed_format()?.decode()?;
    from_dynamic(img)
}

pub fn encode_jpeg(img: &Image) -> Result<Vec<u8>, ImagingError> {
    let mut buf = Vec::new();
    let color = match img.format() {
        PixelFormat::Gray8 => ExtendedColorType::L8,
        PixelFormat::Rgb8 => ExtendedColorType::Rgb8,
    };
    JpegEncoder::new_with_quality(&mut buf, JPEG_QUALITY).encode(img.as_bytes(), img.width(), img.height(), color)?;
    Ok(buf)
}

/// Writes `img` as JPEG, replacing any existing file.
pub fn save_jpeg(img: &Image, path: &Path) -> Result<(), ImagingError> {
    std::fs::write(path, encode_jpeg(img)?)?;
    Ok(())
}

/// Cheap structural check: SOI marker at the start, EOI marker at the end.
pub fn looks_like_jpeg(bytes: &[u8]) -> bool {
    bytes.len() >= 4 && bytes[..2] == [0xFF, 0xD8] && bytes[bytes.len() - 2..] == [0xFF, 0xD9]
}

#[cfg(test)]
mod tests {
    use super::*;
    use gds_core::{BoundingBox, FrameSize};

    #[test]
    fn jpeg_round_trip_keeps_size_and_is_deterministic() {
        let mut img = Image::filled(FrameSize::new(64, 48).unwrap(), PixelFormat::Rgb8, 40);
        img.fill_region(&BoundingBox::new(10, 10, 30, 30).unwrap(), [200, 10, 10]).unwrap();
        let a = encode_jpeg(&img).unwrap();
        assert_eq!(a, encode_jpeg(&img).unwrap());
        assert!(looks_like_jpeg(&a));
        let back = decode(&a).unwrap();
        assert_eq!(back.size(), img.size());
        assert_eq!(back.format(), PixelFormat::Rgb8);
    }

    #[test]
    fn gray_stays_gray() {
        let img = Image::filled(FrameSize::new(8, 8).unwrap(), PixelFormat::Gray8, 100);
        let back = decode(&encode_jpeg(&img).unwrap()).unwrap();
        assert_eq!(back.format(), PixelFormat::Gray8);
    }
}
