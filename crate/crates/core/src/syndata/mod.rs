//! Procedural specimen cohorts with known labels, silhouettes and weights,
//! rendered through the device simulator and the image pipeline.

mod presets;
mod render;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use presets::{
    congeners_pair, dorsal_marking_pair, noisy_pair, separable_pair, texture_pair,
    twelve_species, weighed_trio,
};
pub use render::{
    quantize, render_linear, Limb, LinearFrame, OpticsConfig, Placement, SensorConfig, Spot,
    Sprite,
};

use crate::classify::ensure_features;
use crate::dataset::{
    quantize_weight, CameraId, CameraSettings, Dataset, LabelRegistry, SpecimenRecord,
};
use crate::devicesim::{simulate_pass, PassConfig, PassRenderer};
use crate::error::{Error, Result};
use crate::imgproc::{calibrate, process_frame, BackgroundModel, CalibrationParams, CropConfig};
use crate::raster::{Mask, RgbImage};
use crate::seed::{derive_seed, string_tag};

/// Normal distribution truncated to `mean ± 3 std`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub const fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.std * z.clamp(-3.0, 3.0)
    }

    /// Whether every value the truncated distribution can produce is > 0.
    fn strictly_positive(&self) -> bool {
        self.std >= 0.0 && self.mean - 3.0 * self.std > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotModel {
    pub count_min: usize,
    pub count_max: usize,
    /// Radius range as a fraction of the body half width.
    pub radius_min: f64,
    pub radius_max: f64,
    pub color: [f64; 3],
    /// Only camera 1 (the dorsal view) can see the spots.
    pub dorsal_only: bool,
}

/// `w = c * area^exponent * exp(N(0, noise_sigma))`, area in px.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightLaw {
    pub c: f64,
    pub exponent: f64,
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeciesModel {
    pub name: String,
    /// Mean body reflectance per channel.
    pub color_mean: [f64; 3],
    /// Between-specimen colour covariance.
    pub color_cov: [[f64; 3]; 3],
    /// Body length in px.
    pub length: Gaussian,
    /// Width / length as seen by camera 1.
    pub width_ratio: Gaussian,
    /// Depth / length as seen by camera 2.
    pub depth_ratio: Gaussian,
    pub spots: Option<SpotModel>,
    pub limb_pairs: usize,
    /// Limb length as a fraction of body length.
    pub limb_length: f64,
    /// Per-frame colour std (the specimen turns while sinking).
    pub frame_color_jitter: f64,
    /// Per-frame tilt std in degrees.
    pub tumble_deg: f64,
    pub weight: Option<WeightLaw>,
}

impl SpeciesModel {
    /// Plain ellipse with no texture; the presets build on this.
    pub fn plain(name: &str, color: [f64; 3]) -> Self {
        Self {
            name: name.to_owned(),
            color_mean: color,
            color_cov: diag(0.0004),
            length: Gaussian::new(110.0, 12.0),
            width_ratio: Gaussian::new(0.4, 0.04),
            depth_ratio: Gaussian::new(0.3, 0.03),
            spots: None,
            limb_pairs: 3,
            limb_length: 0.25,
            frame_color_jitter: 0.0,
            tumble_deg: 8.0,
            weight: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(format!("species `{}`: {what}", self.name)));
        if self.color_mean.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("mean colour outside [0, 1]");
        }
        if cholesky(&self.color_cov).is_none() {
            return bad("colour covariance is not positive semi-definite");
        }
        for (g, what) in [
            (self.length, "length"),
            (self.width_ratio, "width ratio"),
            (self.depth_ratio, "depth ratio"),
        ] {
            if !g.strictly_positive() {
                return bad(&format!("{what} distribution reaches non-positive values"));
            }
        }
        if let Some(s) = &self.spots {
            if s.count_min > s.count_max || !(0.0 < s.radius_min && s.radius_min <= s.radius_max) {
                return bad("spot count or radius range is empty");
            }
            if s.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return bad("spot colour outside [0, 1]");
            }
        }
        if !(self.limb_length >= 0.0) || !(self.frame_color_jitter >= 0.0) || !(self.tumble_deg >= 0.0) {
            return bad("negative limb length, jitter or tumble");
        }
        if let Some(w) = self.weight {
            if !(w.c > 0.0) || !(w.noise_sigma >= 0.0) || !w.exponent.is_finite() {
                return bad("weight law needs c > 0 and noise sigma >= 0");
            }
        }
        Ok(())
    }
}

pub(crate) fn diag(v: f64) -> [[f64; 3]; 3] {
    [[v, 0.0, 0.0], [0.0, v, 0.0], [0.0, 0.0, v]]
}

/// Lower-triangular factor of a 3x3 covariance; `None` unless PSD.
fn cholesky(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            if (m[i][j] - m[j][i]).abs() > 1e-12 {
                return None;
            }
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = m[i][i] - s;
                if d < -1e-12 {
                    return None;
                }
                l[i][j] = d.max(0.0).sqrt();
            } else if l[j][j] > 0.0 {
                l[i][j] = (m[i][j] - s) / l[j][j];
            } else if (m[i][j] - s).abs() > 1e-12 {
                return None;
            }
        }
    }
    Some(l)
}

/// Everything drawn once per specimen; shared by all camera settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecimenParams {
    pub color: [f64; 3],
    pub length: f64,
    pub width: f64,
    pub depth: f64,
    /// Base tilt per camera, radians.
    pub tilt: [f64; 2],
    /// Distance from each camera's focal plane, in `[0, 1]`.
    pub focus_depth: [f64; 2],
    /// Horizontal offset from the cuvette centre, px.
    pub x_offset: f64,
    pub spots: Vec<Spot>,
    pub spot_color: [f64; 3],
    pub dorsal_only: bool,
    pub limbs: Vec<Limb>,
    pub frame_color_jitter: f64,
    pub tumble: f64,
    pub seed: u64,
}

impl SpecimenParams {
    pub fn sample(model: &SpeciesModel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = cholesky(&model.color_cov).unwrap_or([[0.0; 3]; 3]);
        let z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let color = std::array::from_fn(|i| {
            let d: f64 = (0..3).map(|k| l[i][k] * z[k]).sum();
            (model.color_mean[i] + d).clamp(0.0, 1.0)
        });
        let length = model.length.sample(&mut rng);
        let width = length * model.width_ratio.sample(&mut rng);
        let depth = length * model.depth_ratio.sample(&mut rng);
        let tilt = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        let focus_depth = [rng.random::<f64>(), rng.random::<f64>()];
        let x_offset = rng.random_range(-40.0..40.0);
        let (spots, spot_color, dorsal_only) = match &model.spots {
            Some(s) => {
                let n = rng.random_range(s.count_min..=s.count_max);
                let spots = (0..n)
                    .map(|_| {
                        let r: f64 = rng.random::<f64>().sqrt() * 0.7;
                        let phi = rng.random_range(0.0..std::f64::consts::TAU);
                        Spot {
                            u: r * phi.cos(),
                            v: r * phi.sin(),
                            radius: rng.random_range(s.radius_min..=s.radius_max),
                        }
                    })
                    .collect();
                (spots, s.color, s.dorsal_only)
            }
            None => (Vec::new(), color, false),
        };
        let limbs = (0..model.limb_pairs)
            .flat_map(|i| {
                let along = -0.5 + (i as f64 + 0.5) / model.limb_pairs as f64;
                let len = model.limb_length * length;
                [1.0, -1.0].map(|side| Limb {
                    along,
                    side,
                    angle: along * 1.2,
                    length: len,
                })
            })
            .collect();
        Self {
            color,
            length,
            width,
            depth,
            tilt,
            focus_depth,
            x_offset,
            spots,
            spot_color,
            dorsal_only,
            limbs,
            frame_color_jitter: model.frame_color_jitter,
            tumble: model.tumble_deg.to_radians(),
            seed,
        }
    }

    /// The view from `camera` with a per-frame pose and colour perturbation
    /// drawn from `frame_seed` (`None`: the canonical pose).
    pub fn sprite(&self, camera: CameraId, frame_seed: Option<u64>) -> Sprite {
        let c = camera as usize;
        let (mut tilt, mut color) = (self.tilt[c], self.color);
        if let Some(seed) = frame_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if self.tumble > 0.0 {
                tilt += Normal::new(0.0, self.tumble).expect("finite").sample(&mut rng);
            }
            if self.frame_color_jitter > 0.0 {
                let n = Normal::new(0.0, self.frame_color_jitter).expect("finite");
                for v in &mut color {
                    *v = (*v + n.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
        }
        let spots = if camera == CameraId::Two && self.dorsal_only {
            Vec::new()
        } else {
            self.spots.clone()
        };
        Sprite {
            semi_major: self.length / 2.0,
            semi_minor: match camera {
                CameraId::One => self.width / 2.0,
                CameraId::Two => self.depth / 2.0,
            },
            tilt,
            color,
            spots,
            spot_color: self.spot_color,
            limbs: self.limbs.clone(),
            limb_color: color.map(|v| v * 0.8),
            limb_half_width: 1.0,
        }
    }

    /// Mean of the two canonical views' pixel areas.
    pub fn reference_area(&self) -> f64 {
        CameraId::BOTH
            .iter()
            .map(|&c| self.sprite(c, None).reference_area() as f64)
            .sum::<f64>()
            / 2.0
    }
}

/// Knobs shared by every specimen of a cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub sensor: SensorConfig,
    pub optics: OpticsConfig,
    pub pass: PassConfig,
    pub calibration: CalibrationParams,
    pub calibration_frames: usize,
    /// Keep cropped pixels and masks on the frames (needed to write PNGs).
    pub keep_pixels: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            sensor: SensorConfig::default(),
            optics: OpticsConfig::default(),
            pass: PassConfig::default(),
            calibration: CalibrationParams::default(),
            calibration_frames: 10,
            keep_pixels: false,
        }
    }
}

impl GeneratorConfig {
    /// Smallest sensor the crop rule accepts; fast, for tests.
    pub fn compact() -> Self {
        Self {
            sensor: SensorConfig {
                width: 528,
                height: 500,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn crop_config(&self) -> CropConfig {
        CropConfig {
            cuvette_left: self.sensor.cuvette_left,
        }
    }
}

/// Renders one specimen for [`simulate_pass`].
pub struct SpecimenRenderer<'a> {
    pub params: &'a SpecimenParams,
    pub sensor: &'a SensorConfig,
    pub optics: &'a OpticsConfig,
}

impl SpecimenRenderer<'_> {
    /// Vertical centre at `progress`: the whole sprite stays in view.
    fn center_y(&self, sprite: &Sprite, progress: f64) -> f64 {
        let h = self.sensor.height as f64;
        let r = sprite.extent().min(h / 2.0);
        r + progress * (h - 2.0 * r)
    }

    pub fn linear(&self, camera: CameraId, progress: f64, settings: &CameraSettings, frame_seed: u64) -> LinearFrame {
        let sprite = self.params.sprite(camera, Some(frame_seed));
        let center_x = self.sensor.cuvette_left as f64
            + crate::dataset::CROP_WIDTH as f64 / 2.0
            + self.params.x_offset;
        let place = Placement {
            center_x,
            center_y: self.center_y(&sprite, progress),
            blur_sigma: self
                .optics
                .blur_sigma(settings, self.params.focus_depth[camera as usize]),
        };
        render_linear(self.sensor, self.optics.gain(settings), Some((&sprite, place)))
    }
}

impl PassRenderer for SpecimenRenderer<'_> {
    fn sensor_size(&self) -> (u32, u32) {
        (self.sensor.width, self.sensor.height)
    }

    fn render(
        &self,
        camera: CameraId,
        progress: f64,
        settings: &CameraSettings,
        noise_seed: u64,
    ) -> Result<(RgbImage, Mask)> {
        // pose depends on the capture only, noise also on the settings
        let frame = self.linear(camera, progress, settings, noise_seed);
        let noise = derive_seed(noise_seed, &[string_tag(&settings.key())]);
        let img = quantize(&frame, self.sensor.noise_sigma, noise);
        Ok((img, frame.truth))
    }
}

/// Empty frames for background calibration under `settings`.
pub fn calibration_frames(
    cfg: &GeneratorConfig,
    settings: &CameraSettings,
    seed: u64,
) -> Vec<RgbImage> {
    let frame = render_linear(&cfg.sensor, cfg.optics.gain(settings), None);
    (0..cfg.calibration_frames.max(2))
        .map(|i| {
            let s = derive_seed(seed, &[0xca11b, string_tag(&settings.key()), i as u64]);
            quantize(&frame, cfg.sensor.noise_sigma, s)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub camera: CameraId,
    /// Trigger index (1-based).
    pub index: usize,
    pub capture_time: f64,
    /// Pixel count of the pre-blur silhouette in the raw frame.
    pub true_area_px2: u64,
    /// `None` when nothing was detected and the frame was discarded.
    pub image_id: Option<String>,
    pub detected_area_px2: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecimenTruth {
    pub specimen_id: String,
    pub species: String,
    pub label: usize,
    pub params: SpecimenParams,
    /// Canonical-pose area averaged over both views; the weight law input.
    pub reference_area_px2: f64,
    pub dry_weight_g: Option<f64>,
    pub velocity_px_s: f64,
    pub frames: Vec<FrameTruth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub settings: CameraSettings,
    pub specimens: Vec<SpecimenTruth>,
}

pub struct Cohort {
    pub dataset: Dataset,
    pub truth: GroundTruth,
    pub background: BackgroundModel,
}

pub fn specimen_id(label: usize, index: usize) -> String {
    format!("sp{label:02}_{index:03}")
}

pub fn image_id(specimen_id: &str, camera: CameraId, index: usize) -> String {
    format!("{specimen_id}_c{}_{index:04}", camera.number())
}

/// Id, class, parameters and dry weight of one sampled specimen.
pub type SampledSpecimen = (String, usize, SpecimenParams, Option<f64>);

/// Specimen parameters and weights; independent of camera settings.
pub fn sample_specimens(
    models: &[SpeciesModel],
    counts: &[usize],
    seed: u64,
) -> Result<Vec<SampledSpecimen>> {
    if models.len() != counts.len() {
        return Err(Error::Parameter(format!(
            "{} species models but {} counts",
            models.len(),
            counts.len()
        )));
    }
    for (m, &n) in models.iter().zip(counts) {
        m.validate()?;
        if n == 0 {
            return Err(Error::Parameter(format!("species `{}` has count 0", m.name)));
        }
    }
    let mut out = Vec::new();
    for (label, (m, &n)) in models.iter().zip(counts).enumerate() {
        for i in 0..n {
            let s = derive_seed(seed, &[label as u64, i as u64]);
            let params = SpecimenParams::sample(m, s);
            let weight = m.weight.map(|law| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s, &[0x3e19]));
                let z: f64 = StandardNormal.sample(&mut rng);
                let area = params.reference_area();
                quantize_weight(law.c * area.powf(law.exponent) * (law.noise_sigma * z).exp())
            });
            out.push((specimen_id(label, i), label, params, weight));
        }
    }
    Ok(out)
}

/// Render and process a whole cohort under one camera setting.
pub fn generate_cohort(
    models: &[SpeciesModel],
    counts: &[usize],
    settings: &CameraSettings,
    cfg: &GeneratorConfig,
    seed: u64,
) -> Result<Cohort> {
    if !settings.is_valid() {
        return Err(Error::Parameter(format!("invalid camera settings {settings:?}")));
    }
    let registry = LabelRegistry::new(models.iter().map(|m| m.name.clone()))?;
    let specimens = sample_specimens(models, counts, seed)?;
    let background = calibrate(&calibration_frames(cfg, settings, seed), &cfg.calibration)?;
    let crop_cfg = cfg.crop_config();

    let rendered: Vec<(SpecimenRecord, SpecimenTruth)> = specimens
        .par_iter()
        .map(|(id, label, params, weight)| {
            let renderer = SpecimenRenderer {
                params,
                sensor: &cfg.sensor,
                optics: &cfg.optics,
            };
            let mut frames = Vec::new();
            let mut truths = Vec::new();
            let summary = simulate_pass(&renderer, settings, &cfg.pass, params.seed, |cap| {
                let iid = image_id(id, cap.camera, cap.index);
                let processed =
                    process_frame(&cap.image, &background, &crop_cfg, &iid, cap.camera, cap.capture_time)?;
                let mut truth = FrameTruth {
                    camera: cap.camera,
                    index: cap.index,
                    capture_time: cap.capture_time,
                    true_area_px2: cap.truth.count(),
                    image_id: None,
                    detected_area_px2: None,
                };
                if let Some(mut frame) = processed {
                    ensure_features(&mut frame)?;
                    if !cfg.keep_pixels {
                        frame.strip_pixels();
                    }
                    truth.image_id = Some(iid);
                    truth.detected_area_px2 = Some(frame.silhouette_area_px2);
                    frames.push(frame);
                }
                truths.push(truth);
                Ok(())
            })?;
            let truth = SpecimenTruth {
                specimen_id: id.clone(),
                species: models[*label].name.clone(),
                label: *label,
                params: params.clone(),
                reference_area_px2: params.reference_area(),
                dry_weight_g: *weight,
                velocity_px_s: summary.trajectory.velocity,
                frames: truths,
            };
            Ok((SpecimenRecord::new(id.clone(), *label, frames, *weight), truth))
        })
        .collect::<Result<_>>()?;

    let mut dataset = Dataset::new(*settings, registry);
    let mut truth = GroundTruth {
        seed,
        settings: *settings,
        specimens: Vec::with_capacity(rendered.len()),
    };
    for (rec, t) in rendered {
        dataset.specimens.push(rec);
        truth.specimens.push(t);
    }
    Ok(Cohort {
        dataset,
        truth,
        background,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> GeneratorConfig {
        let mut cfg = GeneratorConfig::compact();
        cfg.pass.velocity.median_transit_s = 0.08;
        cfg
    }

    #[test]
    fn cholesky_accepts_psd_only() {
        assert!(cholesky(&diag(0.01)).is_some());
        assert!(cholesky(&diag(0.0)).is_some());
        let mut m = diag(0.01);
        m[0][1] = 0.02;
        m[1][0] = 0.02;
        assert!(cholesky(&m).is_none());
        m[1][0] = 0.0;
        assert!(cholesky(&m).is_none());
    }

    #[test]
    fn degenerate_models_are_rejected() {
        let mut m = SpeciesModel::plain("x", [0.2, 0.2, 0.2]);
        m.length = Gaussian::new(10.0, 5.0);
        assert!(m.validate().is_err());
        let mut m = SpeciesModel::plain("x", [1.2, 0.2, 0.2]);
        assert!(m.validate().is_err());
        m.color_mean = [0.2; 3];
        assert!(m.validate().is_ok());
        let cfg = quick();
        let s = CameraSettings::default();
        assert!(generate_cohort(&[m.clone()], &[0], &s, &cfg, 1).is_err());
        assert!(generate_cohort(&[m], &[1, 2], &s, &cfg, 1).is_err());
    }

    #[test]
    fn same_seed_same_cohort() {
        let (models, _) = separable_pair();
        let cfg = quick();
        let s = CameraSettings::default();
        let a = generate_cohort(&models, &[3, 3], &s, &cfg, 7).unwrap();
        let b = generate_cohort(&models, &[3, 3], &s, &cfg, 7).unwrap();
        assert_eq!(a.truth, b.truth);
        let fa: Vec<_> = a.dataset.specimens.iter().flat_map(|s| s.frames.iter().map(|f| f.features)).collect();
        let fb: Vec<_> = b.dataset.specimens.iter().flat_map(|s| s.frames.iter().map(|f| f.features)).collect();
        assert_eq!(fa, fb);
        let c = generate_cohort(&models, &[3, 3], &s, &cfg, 8).unwrap();
        assert_ne!(a.truth, c.truth);
    }

    #[test]
    fn truth_areas_match_rendered_masks() {
        let (models, _) = separable_pair();
        let p = SpecimenParams::sample(&models[0], 3);
        let cfg = quick();
        let r = SpecimenRenderer {
            params: &p,
            sensor: &cfg.sensor,
            optics: &cfg.optics,
        };
        let s = CameraSettings::default();
        let (_, mask) = r.render(CameraId::One, 0.3, &s, 11).unwrap();
        let brute = mask.bits().iter().filter(|&&b| b).count() as u64;
        assert_eq!(mask.count(), brute);
        assert!(brute > 500);
    }

    #[test]
    fn doubling_exposure_doubles_brightness() {
        let (models, _) = separable_pair();
        let p = SpecimenParams::sample(&models[1], 5);
        let cfg = quick();
        let r = SpecimenRenderer {
            params: &p,
            sensor: &cfg.sensor,
            optics: &cfg.optics,
        };
        let a = r.linear(CameraId::Two, 0.5, &CameraSettings::new(1000, 8.0), 1).mean();
        let b = r.linear(CameraId::Two, 0.5, &CameraSettings::new(2000, 8.0), 1).mean();
        assert!((b / a - 2.0).abs() < 0.02, "{a} {b}");
    }

    #[test]
    fn cohort_ids_and_truth_are_consistent() {
        let (models, _) = separable_pair();
        let cfg = quick();
        let cohort = generate_cohort(&models, &[2, 3], &CameraSettings::new(1000, 16.0), &cfg, 2).unwrap();
        let ds = &cohort.dataset;
        assert_eq!(ds.specimen_ids(), ["sp00_000", "sp00_001", "sp01_000", "sp01_001", "sp01_002"]);
        for (rec, t) in ds.specimens.iter().zip(&cohort.truth.specimens) {
            assert_eq!(rec.specimen_id, t.specimen_id);
            let detected: Vec<&str> = t.frames.iter().filter_map(|f| f.image_id.as_deref()).collect();
            let ids: Vec<&str> = rec.frames.iter().map(|f| f.image_id.as_str()).collect();
            assert_eq!(detected, ids);
            assert_eq!(rec.count_from(CameraId::One), rec.count_from(CameraId::Two));
            for f in &rec.frames {
                assert!(f.features.is_some() && f.pixels.is_none());
            }
        }
    }
}
