//! Rasterising a specimen into a raw sensor frame.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::CameraSettings;
use crate::raster::{Mask, RgbImage};

/// Sum of four uniform bytes has this standard deviation.
const IRWIN_HALL_STD: f64 = 147.801_217_851_725_5;
const IRWIN_HALL_MEAN: f64 = 510.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub width: u32,
    pub height: u32,
    /// First column of the cuvette; the crop window starts here.
    pub cuvette_left: u32,
    /// Background reflectance in `[0, 1]`.
    pub background: f64,
    /// Relative darkening of the background from top to bottom row.
    pub background_gradient: f64,
    /// Sensor noise std in grey levels (bounded at about 3.46 sigma).
    pub noise_sigma: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            width: 560,
            height: 1200,
            cuvette_left: 32,
            background: 0.6,
            background_gradient: 0.05,
            noise_sigma: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpticsConfig {
    /// Defocus blur sigma in px at depth 1 and f-number 1.
    pub defocus_scale_px: f64,
    /// Added in quadrature to the defocus blur (e.g. a dirty cuvette).
    pub extra_blur_sigma: f64,
    pub reference_exposure_us: f64,
    pub reference_aperture: f64,
    /// Brightness scales as `(reference_aperture / f)^aperture_exponent`.
    pub aperture_exponent: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            defocus_scale_px: 6.0,
            extra_blur_sigma: 0.0,
            reference_exposure_us: 2000.0,
            reference_aperture: 8.0,
            aperture_exponent: 0.5,
        }
    }
}

impl OpticsConfig {
    /// Grey levels per unit reflectance.
    pub fn gain(&self, s: &CameraSettings) -> f64 {
        255.0 * s.exposure_us as f64 / self.reference_exposure_us
            * (self.reference_aperture / s.aperture_f).powf(self.aperture_exponent)
    }

    /// Blur sigma for a specimen `depth` in `[0, 1]` away from the focal plane.
    pub fn blur_sigma(&self, s: &CameraSettings, depth: f64) -> f64 {
        let defocus = self.defocus_scale_px * depth / s.aperture_f;
        (defocus * defocus + self.extra_blur_sigma * self.extra_blur_sigma).sqrt()
    }
}

/// One limb as a segment in body-local coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Limb {
    /// Attachment point along the body axis, in `[-1, 1]` of the half length.
    pub along: f64,
    /// `+1` or `-1`: side of the body.
    pub side: f64,
    /// Angle from the perpendicular, radians (positive points to the head).
    pub angle: f64,
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spot {
    /// Centre in body-local coordinates scaled to the unit disk.
    pub u: f64,
    pub v: f64,
    /// Radius as a fraction of the body half width.
    pub radius: f64,
}

/// What one camera sees of a specimen in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Sprite {
    /// Half length along the body axis.
    pub semi_major: f64,
    /// Half width across the axis (width for camera 1, depth for camera 2).
    pub semi_minor: f64,
    /// Axis angle from vertical, radians.
    pub tilt: f64,
    pub color: [f64; 3],
    pub spots: Vec<Spot>,
    pub spot_color: [f64; 3],
    pub limbs: Vec<Limb>,
    pub limb_color: [f64; 3],
    pub limb_half_width: f64,
}

impl Sprite {
    /// Radius of a disk around the centre containing the whole sprite.
    pub fn extent(&self) -> f64 {
        let limb = self.limbs.iter().map(|l| l.length).fold(0.0, f64::max);
        self.semi_major.max(self.semi_minor) + limb + self.limb_half_width + 1.0
    }

    /// Reflectance at a point relative to the centre, `None` outside.
    pub fn sample(&self, dx: f64, dy: f64) -> Option<[f64; 3]> {
        self.shape().sample(dx, dy)
    }

    fn shape(&self) -> Shape<'_> {
        let (sin, cos) = self.tilt.sin_cos();
        let (a, b) = (self.semi_major, self.semi_minor);
        let spots = self
            .spots
            .iter()
            .map(|spot| (spot.u * a, spot.v * b, (spot.radius * b).powi(2)))
            .collect();
        let limbs = self
            .limbs
            .iter()
            .map(|limb| {
                let s0 = limb.along * a;
                let edge = 1.0 - (limb.along * limb.along).min(1.0);
                let t0 = limb.side * b * edge.sqrt();
                let (ls, lc) = limb.angle.sin_cos();
                [s0, t0, s0 + limb.length * ls, t0 + limb.side * limb.length * lc]
            })
            .collect();
        Shape {
            sprite: self,
            sin,
            cos,
            spots,
            limbs,
        }
    }

    /// Area in px of the sprite centred on a pixel centre.
    pub fn reference_area(&self) -> u64 {
        let r = self.extent().ceil() as i64;
        let shape = self.shape();
        let mut n = 0;
        for y in -r..=r {
            for x in -r..=r {
                if shape.sample(x as f64, y as f64).is_some() {
                    n += 1;
                }
            }
        }
        n
    }
}

/// A sprite with its trigonometry and body-local geometry precomputed.
struct Shape<'a> {
    sprite: &'a Sprite,
    sin: f64,
    cos: f64,
    /// Centre and squared radius of each spot.
    spots: Vec<(f64, f64, f64)>,
    /// Limb segments `[s0, t0, s1, t1]`.
    limbs: Vec<[f64; 4]>,
}

impl Shape<'_> {
    fn sample(&self, dx: f64, dy: f64) -> Option<[f64; 3]> {
        let sp = self.sprite;
        // body axis points down the frame when tilt is zero
        let s = dx * self.sin + dy * self.cos;
        let t = dx * self.cos - dy * self.sin;
        let r = (s / sp.semi_major).powi(2) + (t / sp.semi_minor).powi(2);
        if r <= 1.0 {
            for &(u, v, r2) in &self.spots {
                let (ds, dt) = (s - u, t - v);
                if ds * ds + dt * dt <= r2 {
                    return Some(sp.spot_color);
                }
            }
            return Some(sp.color);
        }
        for &[s0, t0, s1, t1] in &self.limbs {
            if segment_distance(s, t, s0, t0, s1, t1) <= sp.limb_half_width {
                return Some(sp.limb_color);
            }
        }
        None
    }
}

fn segment_distance(px: f64, py: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (x0 + t * dx - px, y0 + t * dy - py);
    (cx * cx + cy * cy).sqrt()
}

/// Placement and optics of one capture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Placement {
    pub center_x: f64,
    pub center_y: f64,
    pub blur_sigma: f64,
}

/// Linear radiance in grey levels (before noise and clipping), row-major
/// RGB, plus the true silhouette.
pub struct LinearFrame {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
    pub truth: Mask,
}

impl LinearFrame {
    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }
}

fn background_row(sensor: &SensorConfig, y: u32) -> f64 {
    sensor.background * (1.0 - sensor.background_gradient * y as f64 / sensor.height.max(1) as f64)
}

/// Background plus, optionally, one blurred sprite.
pub fn render_linear(
    sensor: &SensorConfig,
    gain: f64,
    sprite: Option<(&Sprite, Placement)>,
) -> LinearFrame {
    let (w, h) = (sensor.width, sensor.height);
    let mut values = vec![0f32; (w * h * 3) as usize];
    for y in 0..h {
        let v = (background_row(sensor, y) * gain) as f32;
        values[(y * w * 3) as usize..((y + 1) * w * 3) as usize].fill(v);
    }
    let mut truth = Mask::new(w, h);
    let Some((sprite, place)) = sprite else {
        return LinearFrame {
            width: w,
            height: h,
            values,
            truth,
        };
    };

    let sigma = if place.blur_sigma >= 0.5 { place.blur_sigma } else { 0.0 };
    let margin = sprite.extent() + (3.0 * sigma).ceil() + 1.0;
    let x0 = (place.center_x - margin).floor().max(0.0) as u32;
    let y0 = (place.center_y - margin).floor().max(0.0) as u32;
    let x1 = ((place.center_x + margin).ceil() as i64).clamp(0, w as i64 - 1) as u32;
    let y1 = ((place.center_y + margin).ceil() as i64).clamp(0, h as i64 - 1) as u32;
    if x0 > x1 || y0 > y1 {
        return LinearFrame {
            width: w,
            height: h,
            values,
            truth,
        };
    }
    let (pw, ph) = ((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize);
    // premultiplied colour in channels 0..3, coverage in channel 3
    let mut patch = vec![[0f32; 4]; pw * ph];
    let shape = sprite.shape();
    for py in 0..ph {
        for px in 0..pw {
            let (x, y) = (x0 + px as u32, y0 + py as u32);
            let dx = x as f64 + 0.5 - place.center_x;
            let dy = y as f64 + 0.5 - place.center_y;
            if let Some(c) = shape.sample(dx, dy) {
                truth.set(x, y, true);
                patch[py * pw + px] = [c[0] as f32, c[1] as f32, c[2] as f32, 1.0];
            }
        }
    }
    if sigma > 0.0 {
        gaussian_blur(&mut patch, pw, ph, sigma);
    }
    for py in 0..ph {
        let y = y0 + py as u32;
        let bg = (background_row(sensor, y) * gain) as f32;
        for px in 0..pw {
            let p = patch[py * pw + px];
            if p[3] == 0.0 {
                continue;
            }
            let i = ((y * w + x0 + px as u32) * 3) as usize;
            for c in 0..3 {
                values[i + c] = bg * (1.0 - p[3]) + p[c] * gain as f32;
            }
        }
    }
    LinearFrame {
        width: w,
        height: h,
        values,
        truth,
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| (v / total) as f32).collect()
}

/// Separable blur with zero padding (the patch margin is transparent).
fn gaussian_blur(patch: &mut [[f32; 4]], w: usize, h: usize, sigma: f64) {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![[0f32; 4]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f32; 4];
            for (j, &kv) in k.iter().enumerate() {
                let sx = x as isize + j as isize - r;
                if sx < 0 || sx >= w as isize {
                    continue;
                }
                let p = patch[y * w + sx as usize];
                for c in 0..4 {
                    acc[c] += kv * p[c];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f32; 4];
            for (j, &kv) in k.iter().enumerate() {
                let sy = y as isize + j as isize - r;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                let p = tmp[sy as usize * w + x];
                for c in 0..4 {
                    acc[c] += kv * p[c];
                }
            }
            patch[y * w + x] = acc;
        }
    }
}

/// Add bounded sensor noise, round and clip to 8 bits.
pub fn quantize(frame: &LinearFrame, noise_sigma: f64, seed: u64) -> RgbImage {
    let mut raw = vec![0u8; frame.values.len()];
    if noise_sigma <= 0.0 {
        for (o, &v) in raw.iter_mut().zip(&frame.values) {
            *o = (v + 0.5).max(0.0) as u8;
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (noise_sigma / IRWIN_HALL_STD) as f32;
        let offset = 0.5 - IRWIN_HALL_MEAN as f32 * scale;
        const LO: u64 = 0x00ff_00ff_00ff_00ff;
        for (out, values) in raw.chunks_mut(2).zip(frame.values.chunks(2)) {
            // two Irwin-Hall draws from the byte lanes of one u64
            let x = rng.next_u64();
            let lanes = (x & LO) + ((x >> 8) & LO);
            let sums = [
                (lanes & 0xffff) + ((lanes >> 16) & 0xffff),
                ((lanes >> 32) & 0xffff) + (lanes >> 48),
            ];
            for ((o, &v), &s) in out.iter_mut().zip(values).zip(&sums) {
                *o = (v + s as f32 * scale + offset).max(0.0) as u8;
            }
        }
    }
    RgbImage::from_raw(frame.width, frame.height, raw).expect("buffer matches dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sprite() -> Sprite {
        Sprite {
            semi_major: 40.0,
            semi_minor: 15.0,
            tilt: 0.3,
            color: [0.2, 0.1, 0.05],
            spots: vec![Spot {
                u: 0.0,
                v: 0.0,
                radius: 0.5,
            }],
            spot_color: [0.05, 0.05, 0.05],
            limbs: vec![Limb {
                along: 0.2,
                side: 1.0,
                angle: 0.4,
                length: 20.0,
            }],
            limb_color: [0.1, 0.1, 0.1],
            limb_half_width: 1.0,
        }
    }

    fn small_sensor() -> SensorConfig {
        SensorConfig {
            width: 200,
            height: 200,
            ..Default::default()
        }
    }

    #[test]
    fn gain_is_linear_in_exposure() {
        let o = OpticsConfig::default();
        let g1 = o.gain(&CameraSettings::new(1000, 8.0));
        let g2 = o.gain(&CameraSettings::new(2000, 8.0));
        assert!((g2 / g1 - 2.0).abs() < 1e-12);
        assert!(o.gain(&CameraSettings::new(2000, 3.8)) > g2);
        assert!(o.blur_sigma(&CameraSettings::new(2000, 3.8), 1.0) > o.blur_sigma(&CameraSettings::new(2000, 16.0), 1.0));
    }

    #[test]
    fn truth_mask_matches_sprite_samples() {
        let s = sprite();
        let place = Placement {
            center_x: 100.5,
            center_y: 90.5,
            blur_sigma: 2.0,
        };
        let f = render_linear(&small_sensor(), 150.0, Some((&s, place)));
        // brute force over the whole frame
        let mut n = 0u64;
        for y in 0..200 {
            for x in 0..200 {
                let inside = s.sample(x as f64 - 100.0, y as f64 - 90.0).is_some();
                assert_eq!(inside, f.truth.get(x, y));
                n += inside as u64;
            }
        }
        assert_eq!(f.truth.count(), n);
        assert_eq!(s.reference_area(), n);
    }

    #[test]
    fn doubling_gain_doubles_mean() {
        let s = sprite();
        let place = Placement {
            center_x: 100.0,
            center_y: 100.0,
            blur_sigma: 0.0,
        };
        let a = render_linear(&small_sensor(), 100.0, Some((&s, place)));
        let b = render_linear(&small_sensor(), 200.0, Some((&s, place)));
        assert!((b.mean() / a.mean() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn blur_preserves_total_coverage() {
        let mut patch = vec![[0f32; 4]; 41 * 41];
        patch[20 * 41 + 20] = [1.0, 0.5, 0.25, 1.0];
        gaussian_blur(&mut patch, 41, 41, 2.0);
        let total: f32 = patch.iter().map(|p| p[3]).sum();
        assert!((total - 1.0).abs() < 1e-5);
        assert!(patch[20 * 41 + 20][3] < 0.1);
    }

    #[test]
    fn noise_is_bounded_and_centred() {
        let f = LinearFrame {
            width: 100,
            height: 100,
            values: vec![100.0; 30000],
            truth: Mask::new(100, 100),
        };
        let img = quantize(&f, 2.0, 1);
        let vals: Vec<f64> = img.as_raw().iter().map(|&v| v as f64).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!((mean - 100.0).abs() < 0.05, "{mean}");
        assert!((sd - 2.0).abs() < 0.1, "{sd}");
        assert!(vals.iter().all(|&v| (v - 100.0).abs() <= 8.0));
        assert_eq!(img, quantize(&f, 2.0, 1));
    }
}
