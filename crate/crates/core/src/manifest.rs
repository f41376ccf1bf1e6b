//! On-disk datasets: a JSON manifest listing specimens and their frames,
//! with every frame stored as a PNG (and optionally a PNG mask) under the
//! manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::ensure_features;
use crate::dataset::{CameraId, CameraSettings, Dataset, FrameImage, LabelRegistry, SpecimenRecord};
use crate::error::{Error, Result};
use crate::imgproc::{channel_means, CropGeometry};
use crate::raster::{load_rgb_png, Mask};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub image_id: String,
    pub camera: CameraId,
    #[serde(default)]
    pub capture_time: f64,
    /// PNG path relative to the manifest directory.
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    /// Used when no mask file is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub silhouette_area_px2: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<CropGeometry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSpecimen {
    pub specimen_id: String,
    pub species: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dry_weight_g: Option<f64>,
    pub frames: Vec<ManifestFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub settings: CameraSettings,
    /// Class order; defaults to the order of first appearance.
    #[serde(default)]
    pub species: Vec<String>,
    pub specimens: Vec<ManifestSpecimen>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }

    pub fn registry(&self) -> Result<LabelRegistry> {
        let mut names = self.species.clone();
        for s in &self.specimens {
            if !names.contains(&s.species) {
                if !self.species.is_empty() {
                    return Err(Error::Data(format!(
                        "specimen `{}` has unregistered species `{}`",
                        s.specimen_id, s.species
                    )));
                }
                names.push(s.species.clone());
            }
        }
        LabelRegistry::new(names)
    }

    /// Referenced files that do not exist.
    pub fn missing_files(&self, dir: &Path) -> Vec<PathBuf> {
        self.specimens
            .iter()
            .flat_map(|s| &s.frames)
            .flat_map(|f| std::iter::once(&f.file).chain(f.mask.as_ref()))
            .map(|p| dir.join(p))
            .filter(|p| !p.exists())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Keep pixels and masks in memory instead of only features.
    pub keep_pixels: bool,
    /// Skip feature extraction, e.g. for raw sensor frames.
    pub raw: bool,
}

fn load_frame(dir: &Path, f: &ManifestFrame, opts: LoadOptions) -> Result<FrameImage> {
    let pixels = load_rgb_png(&dir.join(&f.file))?;
    let mask = match &f.mask {
        Some(m) => {
            let mask = Mask::load_png(&dir.join(m))?;
            if mask.dimensions() != pixels.dimensions() {
                return Err(Error::Dimension {
                    expected: pixels.dimensions(),
                    got: mask.dimensions(),
                });
            }
            Some(mask)
        }
        None => None,
    };
    let silhouette_area_px2 = match &mask {
        Some(m) => m.count(),
        None => f.silhouette_area_px2.unwrap_or(0),
    };
    let mut frame = FrameImage {
        image_id: f.image_id.clone(),
        camera: f.camera,
        capture_time: f.capture_time,
        width_px: pixels.width(),
        height_px: pixels.height(),
        channel_means: channel_means(&pixels),
        silhouette_area_px2,
        geometry: f.geometry,
        pixels: Some(pixels),
        mask,
        features: None,
    };
    if !opts.raw {
        ensure_features(&mut frame)?;
    }
    if !opts.keep_pixels {
        frame.strip_pixels();
    }
    Ok(frame)
}

/// Load the dataset described by `dir/manifest.json`.
pub fn read_dataset(dir: &Path, opts: LoadOptions) -> Result<Dataset> {
    let manifest = Manifest::load(dir)?;
    let registry = registry_checked(&manifest)?;
    let specimens = manifest
        .specimens
        .par_iter()
        .map(|s| {
            let label = registry.id_of(&s.species).expect("registry built from manifest");
            let frames = s
                .frames
                .iter()
                .map(|f| load_frame(dir, f, opts))
                .collect::<Result<Vec<_>>>()?;
            Ok(SpecimenRecord::new(s.specimen_id.clone(), label, frames, s.dry_weight_g))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        settings: manifest.settings,
        registry,
        specimens,
    })
}

fn registry_checked(m: &Manifest) -> Result<LabelRegistry> {
    if !m.settings.is_valid() {
        return Err(Error::Data(format!("invalid camera settings {:?}", m.settings)));
    }
    m.registry()
}

/// Write every frame as `images/<id>.png` plus `masks/<id>.png` and the
/// manifest. Frames must still carry their pixels.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<Manifest> {
    for sub in ["images", "masks"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let specimens = ds
        .specimens
        .par_iter()
        .map(|s| {
            let frames = s
                .frames
                .iter()
                .map(|f| {
                    let pixels = f.pixels.as_ref().ok_or_else(|| {
                        Error::Data(format!("frame `{}` has no pixel data to write", f.image_id))
                    })?;
                    let file = format!("images/{}.png", f.image_id);
                    pixels.save(dir.join(&file))?;
                    let mask = match &f.mask {
                        Some(m) => {
                            let name = format!("masks/{}.png", f.image_id);
                            m.save_png(&dir.join(&name))?;
                            Some(name)
                        }
                        None => None,
                    };
                    Ok(ManifestFrame {
                        image_id: f.image_id.clone(),
                        camera: f.camera,
                        capture_time: f.capture_time,
                        file,
                        silhouette_area_px2: mask.is_none().then_some(f.silhouette_area_px2),
                        mask,
                        geometry: f.geometry,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ManifestSpecimen {
                specimen_id: s.specimen_id.clone(),
                species: ds.registry.name(s.label).unwrap_or("?").to_owned(),
                dry_weight_g: s.dry_weight_g,
                frames,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        settings: ds.settings,
        species: ds.registry.names().to_vec(),
        specimens,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RgbImage;
    use image::Rgb;

    fn frame_with_pixels(id: &str, camera: CameraId, shade: u8) -> FrameImage {
        let pixels = RgbImage::from_fn(496, 496, |x, y| {
            if (200..260).contains(&x) && (220..300).contains(&y) {
                Rgb([shade, 40, 40])
            } else {
                Rgb([150, 150, 150])
            }
        });
        let mask = Mask::from_fn(496, 496, |x, y| (200..260).contains(&x) && (220..300).contains(&y));
        FrameImage {
            image_id: id.to_owned(),
            camera,
            capture_time: 0.25,
            width_px: 496,
            height_px: 496,
            channel_means: channel_means(&pixels),
            silhouette_area_px2: mask.count(),
            geometry: None,
            pixels: Some(pixels),
            mask: Some(mask),
            features: None,
        }
    }

    #[test]
    fn dataset_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::new(
            CameraSettings::new(1500, 3.8),
            LabelRegistry::new(["Alpha", "Beta"]).unwrap(),
        );
        ds.specimens = vec![
            SpecimenRecord::new(
                "s1",
                1,
                vec![frame_with_pixels("s1_a", CameraId::One, 200), frame_with_pixels("s1_b", CameraId::Two, 210)],
                Some(0.0123),
            ),
            SpecimenRecord::new("s0", 0, vec![frame_with_pixels("s0_a", CameraId::Two, 90)], None),
        ];
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path(), LoadOptions::default()).unwrap();
        assert_eq!(back.settings, ds.settings);
        assert_eq!(back.registry, ds.registry);
        assert_eq!(back.specimen_ids(), ds.specimen_ids());
        for (a, b) in ds.specimens.iter().zip(&back.specimens) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.dry_weight_g, b.dry_weight_g);
            assert_eq!(a.mean_area_px2, b.mean_area_px2);
            for (fa, fb) in a.frames.iter().zip(&b.frames) {
                assert_eq!(fa.channel_means, fb.channel_means);
                assert_eq!(fa.camera, fb.camera);
                assert_eq!(fa.capture_time, fb.capture_time);
                assert!(fb.features.is_some() && fb.pixels.is_none());
            }
        }
    }

    #[test]
    fn missing_file_and_unknown_species_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let frame = ManifestFrame {
            image_id: "x".into(),
            camera: CameraId::One,
            capture_time: 0.0,
            file: "images/x.png".into(),
            mask: None,
            silhouette_area_px2: Some(10),
            geometry: None,
        };
        let mut m = Manifest {
            settings: CameraSettings::default(),
            species: vec!["A".into(), "B".into()],
            specimens: vec![ManifestSpecimen {
                specimen_id: "s".into(),
                species: "A".into(),
                dry_weight_g: None,
                frames: vec![frame],
            }],
        };
        assert_eq!(m.missing_files(dir.path()).len(), 1);
        m.save(dir.path()).unwrap();
        assert!(matches!(read_dataset(dir.path(), LoadOptions::default()), Err(Error::Io { .. })));
        m.specimens[0].species = "C".into();
        assert!(m.registry().is_err());
        m.species.clear();
        assert_eq!(m.registry().unwrap().names(), ["C".to_owned()]);
    }
}
