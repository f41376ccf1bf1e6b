//! The fixed-width crop: 496 columns spanning the cuvette, 496 rows centred
//! on the specimen, or the specimen's full height when it is taller.

use image::GenericImageView;
use serde::{Deserialize, Serialize};

use crate::dataset::{CameraId, FrameImage, CROP_WIDTH, MIN_CROP_HEIGHT};
use crate::error::{Error, Result};
use crate::raster::{BBox, Mask, RgbImage};

use super::background::Detection;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropConfig {
    /// First sensor column inside the cuvette.
    pub cuvette_left: u32,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self { cuvette_left: 32 }
    }
}

/// Where a crop came from in the raw frame. Row and column ranges are inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropGeometry {
    pub raw_width: u32,
    pub raw_height: u32,
    pub left: u32,
    pub right: u32,
    pub top: u32,
    pub bottom: u32,
    pub specimen_bbox: BBox,
    pub centroid: (f64, f64),
    /// Centring would have run past the sensor edge.
    pub clamped: bool,
}

impl CropGeometry {
    pub fn width(&self) -> u32 {
        self.right - self.left + 1
    }

    pub fn height(&self) -> u32 {
        self.bottom - self.top + 1
    }

    /// Vertical centre of the crop in raw-frame rows.
    pub fn vertical_center(&self) -> f64 {
        (self.top as f64 + self.bottom as f64) / 2.0
    }
}

/// Compute the crop window for a specimen with the given bbox and centroid.
pub fn crop_window(
    raw_width: u32,
    raw_height: u32,
    bbox: &BBox,
    centroid: (f64, f64),
    cfg: &CropConfig,
) -> Result<CropGeometry> {
    if raw_width < cfg.cuvette_left + CROP_WIDTH {
        return Err(Error::Config(format!(
            "frame width {raw_width} cannot hold a {CROP_WIDTH}-px crop starting at column {}",
            cfg.cuvette_left
        )));
    }
    if raw_height < MIN_CROP_HEIGHT {
        return Err(Error::Config(format!(
            "frame height {raw_height} is below the {MIN_CROP_HEIGHT}-px crop height"
        )));
    }
    if bbox.right >= raw_width || bbox.bottom >= raw_height || bbox.left > bbox.right {
        return Err(Error::Parameter(format!(
            "bbox {bbox:?} outside {raw_width}x{raw_height} frame"
        )));
    }
    let left = cfg.cuvette_left;
    let right = left + CROP_WIDTH - 1;
    let (top, bottom, clamped) = if bbox.height() > MIN_CROP_HEIGHT {
        (bbox.top, bbox.bottom, false)
    } else {
        let center = centroid.1.round() as i64;
        let ideal_top = center - (MIN_CROP_HEIGHT / 2) as i64;
        let max_top = (raw_height - MIN_CROP_HEIGHT) as i64;
        let top = ideal_top.clamp(0, max_top);
        (top as u32, top as u32 + MIN_CROP_HEIGHT - 1, top != ideal_top)
    };
    Ok(CropGeometry {
        raw_width,
        raw_height,
        left,
        right,
        top,
        bottom,
        specimen_bbox: *bbox,
        centroid,
        clamped,
    })
}

/// Crop output before it is wrapped into a [`FrameImage`].
#[derive(Clone, Debug)]
pub struct CroppedFrame {
    pub pixels: RgbImage,
    /// Specimen mask in crop coordinates.
    pub mask: Mask,
    pub geometry: CropGeometry,
}

impl CroppedFrame {
    pub fn channel_means(&self) -> [f64; 3] {
        channel_means(&self.pixels)
    }

    pub fn into_frame_image(
        self,
        image_id: impl Into<String>,
        camera: CameraId,
        capture_time: f64,
    ) -> FrameImage {
        let channel_means = self.channel_means();
        FrameImage {
            image_id: image_id.into(),
            camera,
            capture_time,
            width_px: self.pixels.width(),
            height_px: self.pixels.height(),
            channel_means,
            silhouette_area_px2: super::silhouette_area(&self.mask),
            geometry: Some(self.geometry),
            pixels: Some(self.pixels),
            mask: Some(self.mask),
            features: None,
        }
    }
}

/// Cut the 496-px-wide window around a detected specimen.
pub fn crop(frame: &RgbImage, det: &Detection, cfg: &CropConfig) -> Result<CroppedFrame> {
    let (w, h) = frame.dimensions();
    let geometry = crop_window(w, h, &det.bbox, det.centroid, cfg)?;
    let pixels = frame
        .view(geometry.left, geometry.top, geometry.width(), geometry.height())
        .to_image();
    let mut mask = Mask::new(geometry.width(), geometry.height());
    for my in 0..det.mask.height() {
        for mx in 0..det.mask.width() {
            if !det.mask.get(mx, my) {
                continue;
            }
            let (x, y) = (det.bbox.left + mx, det.bbox.top + my);
            if x >= geometry.left && x <= geometry.right && y >= geometry.top && y <= geometry.bottom
            {
                mask.set(x - geometry.left, y - geometry.top, true);
            }
        }
    }
    Ok(CroppedFrame {
        pixels,
        mask,
        geometry,
    })
}

/// Mean of each channel over every pixel of the image.
pub fn channel_means(img: &RgbImage) -> [f64; 3] {
    let mut sum = [0u64; 3];
    for px in img.as_raw().chunks_exact(3) {
        for c in 0..3 {
            sum[c] += px[c] as u64;
        }
    }
    let n = (img.width() as u64 * img.height() as u64).max(1) as f64;
    [sum[0] as f64 / n, sum[1] as f64 / n, sum[2] as f64 / n]
}
