//! The device's image path: background calibration, specimen detection,
//! cropping, classifier-size rescaling, silhouette area and the colour
//! outlier screen.

mod background;
mod components;
mod crop;
mod outlier;
mod resample;

use std::path::Path;

pub use background::{calibrate, detect, BackgroundModel, CalibrationParams, Detection};
pub use components::{connected_components, largest_component};
pub use crop::{channel_means, crop, crop_window, CropConfig, CropGeometry, CroppedFrame};
pub use outlier::{
    is_outlier, outlier_screen, specimen_channel_means, Channel, FlaggedSpecimen, OutlierReport,
    SkippedSpecies, SIGMA_LIMIT,
};
pub use resample::{
    rescale_for_classifier, rescale_image, resize_mask, resize_rgb, ClassifierInput,
    CLASSIFIER_SIDE,
};

use crate::dataset::{CameraId, FrameImage};
use crate::error::{Error, Result};
use crate::raster::{Mask, RgbImage};

/// Number of set pixels.
pub fn silhouette_area(mask: &Mask) -> u64 {
    mask.count()
}

/// Detect, crop and package one raw frame. `None` when nothing triggered.
pub fn process_frame(
    raw: &RgbImage,
    bg: &BackgroundModel,
    cfg: &CropConfig,
    image_id: &str,
    camera: CameraId,
    capture_time: f64,
) -> Result<Option<FrameImage>> {
    let Some(det) = detect(raw, bg)? else {
        return Ok(None);
    };
    let cropped = crop(raw, &det, cfg)?;
    Ok(Some(cropped.into_frame_image(image_id, camera, capture_time)))
}

/// Write the crop geometry next to an image as `<stem>.json`.
pub fn write_geometry_sidecar(image_path: &Path, geometry: &CropGeometry) -> Result<()> {
    let path = image_path.with_extension("json");
    let text = serde_json::to_string_pretty(geometry)?;
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}
