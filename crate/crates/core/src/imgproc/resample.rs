//! Bilinear resampling to the classifier's fixed input size.
//!
//! When shrinking, the triangle kernel is stretched by the scale factor so
//! every source pixel contributes; without that a 496 -> 128 reduction would
//! alias fine texture.

use crate::dataset::FrameImage;
use crate::error::{Error, Result};
use crate::raster::{Mask, RgbImage};

pub const CLASSIFIER_SIDE: u32 = 128;

/// Square RGB image with values in `[0, 1]` plus the resampled mask.
#[derive(Clone, Debug)]
pub struct ClassifierInput {
    pub side: u32,
    /// Interleaved RGB, row-major.
    pub data: Vec<f32>,
    pub mask: Mask,
}

impl ClassifierInput {
    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        let i = 3 * (y as usize * self.side as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

struct Taps {
    start: usize,
    weights: Vec<f32>,
}

fn taps(src_len: u32, dst_len: u32) -> Vec<Taps> {
    let scale = src_len as f64 / dst_len as f64;
    let support = scale.max(1.0);
    (0..dst_len)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale - 0.5;
            let lo = ((center - support).floor() as i64 + 1).max(0) as usize;
            let hi = ((center + support).ceil() as i64 - 1).min(src_len as i64 - 1) as usize;
            let mut weights: Vec<f32> = (lo..=hi)
                .map(|s| (1.0 - (s as f64 - center).abs() / support).max(0.0) as f32)
                .collect();
            let total: f32 = weights.iter().sum();
            if total > 0.0 {
                for w in &mut weights {
                    *w /= total;
                }
            }
            Taps { start: lo, weights }
        })
        .collect()
}

/// Separable bilinear resize of interleaved RGB `f32` data.
pub fn resize_rgb(src: &[f32], sw: u32, sh: u32, dw: u32, dh: u32) -> Vec<f32> {
    let xt = taps(sw, dw);
    let yt = taps(sh, dh);
    // horizontal pass: sh rows x dw cols
    let mut tmp = vec![0f32; 3 * dw as usize * sh as usize];
    for y in 0..sh as usize {
        let row = &src[3 * y * sw as usize..3 * (y + 1) * sw as usize];
        for (x, t) in xt.iter().enumerate() {
            let mut acc = [0f32; 3];
            for (k, &w) in t.weights.iter().enumerate() {
                let s = 3 * (t.start + k);
                acc[0] += w * row[s];
                acc[1] += w * row[s + 1];
                acc[2] += w * row[s + 2];
            }
            let o = 3 * (y * dw as usize + x);
            tmp[o..o + 3].copy_from_slice(&acc);
        }
    }
    let mut out = vec![0f32; 3 * dw as usize * dh as usize];
    for (y, t) in yt.iter().enumerate() {
        for x in 0..dw as usize {
            let mut acc = [0f32; 3];
            for (k, &w) in t.weights.iter().enumerate() {
                let s = 3 * ((t.start + k) * dw as usize + x);
                acc[0] += w * tmp[s];
                acc[1] += w * tmp[s + 1];
                acc[2] += w * tmp[s + 2];
            }
            let o = 3 * (y * dw as usize + x);
            out[o..o + 3].copy_from_slice(&acc);
        }
    }
    out
}

/// Nearest-neighbour mask resize (sample at destination pixel centres).
pub fn resize_mask(mask: &Mask, dw: u32, dh: u32) -> Mask {
    let (sw, sh) = mask.dimensions();
    Mask::from_fn(dw, dh, |x, y| {
        let sx = (((x as f64 + 0.5) * sw as f64 / dw as f64) as u32).min(sw - 1);
        let sy = (((y as f64 + 0.5) * sh as f64 / dh as f64) as u32).min(sh - 1);
        mask.get(sx, sy)
    })
}

/// Rescale an RGB image (and mask) to `128 x 128`, normalised to `[0, 1]`.
/// Tall crops are squeezed vertically.
pub fn rescale_image(pixels: &RgbImage, mask: Option<&Mask>) -> ClassifierInput {
    let (w, h) = pixels.dimensions();
    let src: Vec<f32> = pixels.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    let mut data = resize_rgb(&src, w, h, CLASSIFIER_SIDE, CLASSIFIER_SIDE);
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    let mask = match mask {
        Some(m) => resize_mask(m, CLASSIFIER_SIDE, CLASSIFIER_SIDE),
        None => Mask::new(CLASSIFIER_SIDE, CLASSIFIER_SIDE),
    };
    ClassifierInput {
        side: CLASSIFIER_SIDE,
        data,
        mask,
    }
}

/// [`rescale_image`] for a frame that still carries its pixel data.
pub fn rescale_for_classifier(img: &FrameImage) -> Result<ClassifierInput> {
    let pixels = img.pixels.as_ref().ok_or_else(|| {
        Error::Data(format!("frame {} has no pixel data loaded", img.image_id))
    })?;
    Ok(rescale_image(pixels, img.mask.as_ref()))
}
