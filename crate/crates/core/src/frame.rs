//! 8-bit RGB raster frames.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("pixel buffer length {len} does not match {width}x{height}x3")]
    BadLength { width: u32, height: u32, len: usize },
    #[error("image io: {0}")]
    Image(#[from] image::ImageError),
}

/// Row-major RGB frame, 8 bits per channel.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, FrameError> {
        if pixels.len() != width as usize * height as usize * 3 {
            return Err(FrameError::BadLength {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Build a frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&c);
    }

    /// Luma plane using 0.299 R + 0.587 G + 0.114 B.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }

    /// Square box blur with the given radius (window `2r+1`), edge-clamped.
    pub fn box_blur(&self, radius: u32) -> Frame {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = (self.width as i64, self.height as i64);
        let r = radius as i64;
        let area = ((2 * r + 1) * (2 * r + 1)) as u32;
        Frame::from_fn(self.width, self.height, |x, y| {
            let mut acc = [0u32; 3];
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = (x as i64 + dx).clamp(0, w - 1) as u32;
                    let sy = (y as i64 + dy).clamp(0, h - 1) as u32;
                    let p = self.get(sx, sy);
                    for c in 0..3 {
                        acc[c] += p[c] as u32;
                    }
                }
            }
            acc.map(|v| ((v + area / 2) / area) as u8)
        })
    }

    /// Hex SHA-256 of the dimensions and pixel bytes.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.width.to_le_bytes());
        hasher.update(self.height.to_le_bytes());
        hasher.update(&self.pixels);
        hex::encode(hasher.finalize())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), FrameError> {
        let img: RgbImage =
            ImageBuffer::<Rgb<u8>, _>::from_raw(self.width, self.height, self.pixels.clone())
                .expect("length checked at construction");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, FrameError> {
        let mut out = std::io::Cursor::new(Vec::new());
        let img: RgbImage =
            ImageBuffer::<Rgb<u8>, _>::from_raw(self.width, self.height, self.pixels.clone())
                .expect("length checked at construction");
        img.write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Frame, FrameError> {
        let img = image::open(path)?.to_rgb8();
        let (width, height) = img.dimensions();
        Ok(Frame {
            width,
            height,
            pixels: img.into_raw(),
        })
    }
}
