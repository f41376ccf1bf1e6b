//! Pixel containers shared by the image path: RGB frames come from the
//! `image` crate, binary masks and bounding boxes are local.

use std::path::Path;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use image::RgbImage;

/// Inclusive pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub left: u32,
    pub top: u32,
    pub right: u32,
    pub bottom: u32,
}

impl BBox {
    pub fn width(&self) -> u32 {
        self.right - self.left + 1
    }

    pub fn height(&self) -> u32 {
        self.bottom - self.top + 1
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.left <= other.left
            && self.top <= other.top
            && self.right >= other.right
            && self.bottom >= other.bottom
    }

    pub fn contains_point(&self, x: u32, y: u32) -> bool {
        x >= self.left && x <= self.right && y >= self.top && y <= self.bottom
    }
}

/// Binary mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    /// Tight bounding box of the set pixels, `None` for an empty mask.
    pub fn bbox(&self) -> Option<BBox> {
        let mut out: Option<BBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    let b = out.get_or_insert(BBox {
                        left: x,
                        top: y,
                        right: x,
                        bottom: y,
                    });
                    b.left = b.left.min(x);
                    b.right = b.right.max(x);
                    b.bottom = y;
                }
            }
        }
        out
    }

    /// Sub-mask covering `bbox`.
    pub fn crop(&self, bbox: &BBox) -> Mask {
        Mask::from_fn(bbox.width(), bbox.height(), |x, y| {
            self.get(bbox.left + x, bbox.top + y)
        })
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    pub fn from_gray(img: &GrayImage) -> Mask {
        Mask::from_fn(img.width(), img.height(), |x, y| img.get_pixel(x, y)[0] >= 128)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray().save(path)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Mask> {
        let img = image::open(path)?.to_luma8();
        Ok(Mask::from_gray(&img))
    }
}

pub fn load_rgb_png(path: &Path) -> Result<RgbImage> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "image file not found"),
        ));
    }
    Ok(image::open(path)?.to_rgb8())
}
