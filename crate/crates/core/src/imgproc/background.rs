//! Background calibration and specimen detection on raw sensor frames.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BBox, Mask, RgbImage};

use super::components::largest_component;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    /// Tolerance = `k * std` per pixel and channel.
    pub k: f64,
    /// Lower bound on the tolerance, in gray levels.
    pub min_tolerance: f64,
    /// Minimum number of deviating pixels that counts as a specimen.
    pub trigger_threshold: usize,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            k: 4.0,
            min_tolerance: 8.0,
            trigger_threshold: 50,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BackgroundHeader {
    width: u32,
    height: u32,
    trigger_threshold: usize,
}

/// Per-pixel reference image and tolerance learned from empty-cuvette frames.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundModel {
    width: u32,
    height: u32,
    reference: Vec<f32>,
    tolerance: Vec<f32>,
    pub trigger_threshold: usize,
}

impl BackgroundModel {
    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Reference RGB at `(x, y)`.
    pub fn reference_at(&self, x: u32, y: u32) -> [f32; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.reference[i], self.reference[i + 1], self.reference[i + 2]]
    }

    pub fn tolerance_at(&self, x: u32, y: u32) -> [f32; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.tolerance[i], self.tolerance[i + 1], self.tolerance[i + 2]]
    }

    pub fn tolerances(&self) -> &[f32] {
        &self.tolerance
    }

    /// Write `<stem>.json` (dimensions, trigger threshold) and `<stem>.bin`
    /// (little-endian f32 reference values followed by the tolerances).
    pub fn save(&self, stem: &Path) -> Result<()> {
        let header = BackgroundHeader {
            width: self.width,
            height: self.height,
            trigger_threshold: self.trigger_threshold,
        };
        let json = stem.with_extension("json");
        fs::write(&json, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&json, e))?;
        let mut bytes = Vec::with_capacity(8 * self.reference.len());
        for v in self.reference.iter().chain(&self.tolerance) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let bin = stem.with_extension("bin");
        fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let json = stem.with_extension("json");
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let header: BackgroundHeader = serde_json::from_str(&text)?;
        let bin = stem.with_extension("bin");
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        let len = 3 * header.width as usize * header.height as usize;
        if bytes.len() != 8 * len {
            return Err(Error::Data(format!(
                "{} holds {} bytes, expected {}",
                bin.display(),
                bytes.len(),
                8 * len
            )));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let (reference, tolerance) = values.split_at(len);
        Ok(Self {
            width: header.width,
            height: header.height,
            reference: reference.to_vec(),
            tolerance: tolerance.to_vec(),
            trigger_threshold: header.trigger_threshold,
        })
    }

    fn check_dims(&self, frame: &RgbImage) -> Result<()> {
        if frame.dimensions() != (self.width, self.height) {
            return Err(Error::Dimension {
                expected: (self.width, self.height),
                got: frame.dimensions(),
            });
        }
        Ok(())
    }

    /// Pixels differing from the reference beyond tolerance in any channel.
    pub fn deviation_mask(&self, frame: &RgbImage) -> Result<Mask> {
        self.check_dims(frame)?;
        let w = self.width as usize;
        let mut mask = Mask::new(self.width, self.height);
        let pixels = frame
            .as_raw()
            .chunks_exact(3)
            .zip(self.reference.chunks_exact(3).zip(self.tolerance.chunks_exact(3)));
        for (p, (px, (r, t))) in pixels.enumerate() {
            let deviates = (px[0] as f32 - r[0]).abs() > t[0]
                || (px[1] as f32 - r[1]).abs() > t[1]
                || (px[2] as f32 - r[2]).abs() > t[2];
            if deviates {
                mask.set((p % w) as u32, (p / w) as u32, true);
            }
        }
        Ok(mask)
    }
}

/// Learn the background model: per-pixel mean, and tolerance
/// `max(min_tolerance, k * sample std)`.
pub fn calibrate(frames: &[RgbImage], params: &CalibrationParams) -> Result<BackgroundModel> {
    let first = frames.first().ok_or(Error::Empty("background frames"))?;
    let (width, height) = first.dimensions();
    for f in frames {
        if f.dimensions() != (width, height) {
            return Err(Error::Dimension {
                expected: (width, height),
                got: f.dimensions(),
            });
        }
    }
    if params.k < 0.0 || params.min_tolerance < 0.0 {
        return Err(Error::Parameter(
            "calibration k and min_tolerance must be non-negative".into(),
        ));
    }
    let len = 3 * width as usize * height as usize;
    let n = frames.len() as f64;
    let mut sum = vec![0f64; len];
    let mut sum_sq = vec![0f64; len];
    for f in frames {
        for (i, &v) in f.as_raw().iter().enumerate() {
            let v = v as f64;
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let mut reference = Vec::with_capacity(len);
    let mut tolerance = Vec::with_capacity(len);
    for i in 0..len {
        let mean = sum[i] / n;
        let std = if frames.len() > 1 {
            ((sum_sq[i] - n * mean * mean).max(0.0) / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        reference.push(mean as f32);
        tolerance.push((params.k * std).max(params.min_tolerance) as f32);
    }
    Ok(BackgroundModel {
        width,
        height,
        reference,
        tolerance,
        trigger_threshold: params.trigger_threshold,
    })
}

/// A detected specimen in raw-frame coordinates.
#[derive(Clone, Debug)]
pub struct Detection {
    pub bbox: BBox,
    /// Specimen mask restricted to `bbox`.
    pub mask: Mask,
    /// Mean `(x, y)` of the specimen pixels.
    pub centroid: (f64, f64),
    /// All deviating pixels in the frame, before component selection.
    pub deviating_pixels: usize,
}

impl Detection {
    pub fn area(&self) -> u64 {
        self.mask.count()
    }
}

/// Find the specimen: deviating pixels, largest 8-connected component.
/// Returns `None` when fewer than `trigger_threshold` pixels deviate.
pub fn detect(frame: &RgbImage, bg: &BackgroundModel) -> Result<Option<Detection>> {
    let deviating = bg.deviation_mask(frame)?;
    let count = deviating.count() as usize;
    if count == 0 || count < bg.trigger_threshold {
        return Ok(None);
    }
    let Some(pixels) = largest_component(&deviating) else {
        return Ok(None);
    };
    let mut bbox = BBox {
        left: u32::MAX,
        top: u32::MAX,
        right: 0,
        bottom: 0,
    };
    let (mut sx, mut sy) = (0f64, 0f64);
    for &(x, y) in &pixels {
        bbox.left = bbox.left.min(x);
        bbox.top = bbox.top.min(y);
        bbox.right = bbox.right.max(x);
        bbox.bottom = bbox.bottom.max(y);
        sx += x as f64;
        sy += y as f64;
    }
    let mut mask = Mask::new(bbox.width(), bbox.height());
    for &(x, y) in &pixels {
        mask.set(x - bbox.left, y - bbox.top, true);
    }
    let n = pixels.len() as f64;
    Ok(Some(Detection {
        bbox,
        mask,
        centroid: (sx / n, sy / n),
        deviating_pixels: count,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn flat(w: u32, h: u32, v: u8) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([v, v, v]))
    }

    #[test]
    fn model_round_trips_through_files() {
        let frames = [flat(6, 4, 100), flat(6, 4, 104), flat(6, 4, 98)];
        let bg = calibrate(&frames, &CalibrationParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("background");
        bg.save(&stem).unwrap();
        assert_eq!(BackgroundModel::load(&stem).unwrap(), bg);
    }

    #[test]
    fn identical_frames_give_floor_tolerance() {
        let frames = vec![flat(20, 10, 100); 3];
        let bg = calibrate(&frames, &CalibrationParams::default()).unwrap();
        assert!(bg.tolerances().iter().all(|&t| t == 8.0));
        assert_eq!(bg.reference_at(3, 4), [100.0; 3]);
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let frames = vec![flat(20, 10, 100), flat(21, 10, 100)];
        assert!(matches!(
            calibrate(&frames, &CalibrationParams::default()),
            Err(Error::Dimension { .. })
        ));
        assert!(calibrate(&[], &CalibrationParams::default()).is_err());
    }

    #[test]
    fn noisy_frames_tolerance_matches_direct_std() {
        // 10 frames, per-pixel Gaussian noise with sigma 2 around 120.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(120.0f64, 2.0).unwrap();
        let (w, h) = (40u32, 30u32);
        let frames: Vec<RgbImage> = (0..10)
            .map(|_| {
                RgbImage::from_fn(w, h, |_, _| {
                    let mut px = [0u8; 3];
                    for c in &mut px {
                        *c = noise.sample(&mut rng).round().clamp(0.0, 255.0) as u8;
                    }
                    Rgb(px)
                })
            })
            .collect();
        let bg = calibrate(&frames, &CalibrationParams::default()).unwrap();
        // oracle: two-pass sample std per pixel/channel
        let mut oracle_mean_tol = 0.0;
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let vals: Vec<f64> =
                        frames.iter().map(|f| f.get_pixel(x, y)[c] as f64).collect();
                    let m = vals.iter().sum::<f64>() / 10.0;
                    let s = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 9.0).sqrt();
                    let tol = (4.0 * s).max(8.0);
                    let got = bg.tolerance_at(x, y)[c] as f64;
                    assert!((got - tol).abs() < 1e-3, "{got} vs {tol}");
                    oracle_mean_tol += tol;
                }
            }
        }
        oracle_mean_tol /= (w * h * 3) as f64;
        // E[max(8, 4s)] with 4s ~ N(8, 8 / sqrt(18)) is about 8.75
        assert!((oracle_mean_tol - 8.75).abs() < 0.3, "{oracle_mean_tol}");
    }

    #[test]
    fn identical_frame_is_not_detected() {
        let bg = calibrate(&[flat(50, 40, 200)], &CalibrationParams::default()).unwrap();
        assert!(detect(&flat(50, 40, 200), &bg).unwrap().is_none());
        assert!(detect(&flat(51, 40, 200), &bg).is_err());
    }

    #[test]
    fn ellipse_area_recovered() {
        let (w, h) = (200u32, 160u32);
        let bg = calibrate(&[flat(w, h, 210)], &CalibrationParams::default()).unwrap();
        // semi-axes chosen so the area is about 2000 px
        let (a, b) = (35.0f64, 2000.0 / (std::f64::consts::PI * 35.0));
        let mut truth = 0u64;
        let frame = RgbImage::from_fn(w, h, |x, y| {
            let dx = (x as f64 - 100.0) / a;
            let dy = (y as f64 - 80.0) / b;
            if dx * dx + dy * dy <= 1.0 {
                truth += 1;
                Rgb([40, 30, 20])
            } else {
                Rgb([210, 210, 210])
            }
        });
        let det = detect(&frame, &bg).unwrap().unwrap();
        assert_eq!(det.area(), truth);
        assert!((det.area() as f64 - 2000.0).abs() / 2000.0 < 0.05);
        assert!(det.bbox.contains(&BBox {
            left: 66,
            top: 63,
            right: 134,
            bottom: 97
        }));
    }

    #[test]
    fn largest_blob_wins() {
        let (w, h) = (200u32, 120u32);
        let bg = calibrate(&[flat(w, h, 210)], &CalibrationParams::default()).unwrap();
        // 60x50 = 3000 px blob and 10x10 = 100 px blob
        let frame = RgbImage::from_fn(w, h, |x, y| {
            let big = (10..70).contains(&x) && (20..70).contains(&y);
            let small = (150..160).contains(&x) && (5..15).contains(&y);
            if big || small {
                Rgb([0, 0, 0])
            } else {
                Rgb([210, 210, 210])
            }
        });
        let det = detect(&frame, &bg).unwrap().unwrap();
        assert_eq!(det.area(), 3000);
        assert_eq!(det.deviating_pixels, 3100);
        assert_eq!(
            det.bbox,
            BBox {
                left: 10,
                top: 20,
                right: 69,
                bottom: 69
            }
        );
    }

    #[test]
    fn below_trigger_threshold_is_absent() {
        let bg = calibrate(&[flat(60, 60, 210)], &CalibrationParams::default()).unwrap();
        let frame = RgbImage::from_fn(60, 60, |x, y| {
            if x < 7 && y < 7 {
                Rgb([0, 0, 0])
            } else {
                Rgb([210, 210, 210])
            }
        });
        // 49 deviating pixels, threshold 50
        assert!(detect(&frame, &bg).unwrap().is_none());
    }
}
