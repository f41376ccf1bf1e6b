//! Domain types shared by every stage: species labels, camera settings,
//! frames, specimens and the dataset container.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::classify::FeatureVector;
use crate::error::{Error, Result};
use crate::imgproc::CropGeometry;
use crate::raster::{Mask, RgbImage};

/// Fixed crop width in pixels, set by the inner width of the cuvette.
pub const CROP_WIDTH: u32 = 496;
/// Minimum crop height; taller specimens produce taller frames.
pub const MIN_CROP_HEIGHT: u32 = 496;

/// Dry-weight scale resolution in grams.
pub const WEIGHT_RESOLUTION_G: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpeciesLabel {
    pub id: usize,
    pub name: String,
}

/// Dense `0..K` mapping between class ids and species names.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelRegistry {
    names: Vec<String>,
}

impl LabelRegistry {
    /// Build a registry; names must be unique. `K >= 2` is checked by
    /// [`validate_dataset`], not here, so that partial registries can be
    /// assembled incrementally.
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if let Some(prev) = seen.insert(n.as_str(), i) {
                return Err(Error::Data(format!(
                    "species name `{n}` registered twice (ids {prev} and {i})"
                )));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn label(&self, id: usize) -> Option<SpeciesLabel> {
        self.name(id).map(|name| SpeciesLabel {
            id,
            name: name.to_owned(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> impl Iterator<Item = SpeciesLabel> + '_ {
        self.names.iter().enumerate().map(|(id, name)| SpeciesLabel {
            id,
            name: name.clone(),
        })
    }
}

/// Exposure time and aperture pair; one cell of the settings grid.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CameraSettings {
    pub exposure_us: u32,
    pub aperture_f: f64,
}

impl CameraSettings {
    pub const fn new(exposure_us: u32, aperture_f: f64) -> Self {
        Self {
            exposure_us,
            aperture_f,
        }
    }

    /// The nine combinations imaged in the pilot study, aperture-major.
    pub fn pilot_grid() -> Vec<CameraSettings> {
        let mut out = Vec::with_capacity(9);
        for aperture in [3.8, 8.0, 16.0] {
            for exposure in [1000, 1500, 2000] {
                out.push(CameraSettings::new(exposure, aperture));
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.exposure_us > 0 && self.aperture_f.is_finite() && self.aperture_f > 0.0
    }

    /// Stable file-name friendly key, e.g. `e2000_f8`.
    pub fn key(&self) -> String {
        format!("e{}_f{}", self.exposure_us, self.aperture_f)
    }

    /// Aperture formatted as a ratio, e.g. `1:3.8`.
    pub fn aperture_label(&self) -> String {
        format!("1:{}", self.aperture_f)
    }
}

impl Default for CameraSettings {
    fn default() -> Self {
        CameraSettings::new(2000, 8.0)
    }
}

impl PartialEq for CameraSettings {
    fn eq(&self, other: &Self) -> bool {
        self.exposure_us == other.exposure_us
            && self.aperture_f.to_bits() == other.aperture_f.to_bits()
    }
}

impl Eq for CameraSettings {}

impl Hash for CameraSettings {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.exposure_us.hash(state);
        self.aperture_f.to_bits().hash(state);
    }
}

impl PartialOrd for CameraSettings {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Aperture first, then exposure: the row/column order of the accuracy grid.
impl Ord for CameraSettings {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.aperture_f
            .total_cmp(&other.aperture_f)
            .then(self.exposure_us.cmp(&other.exposure_us))
    }
}

impl fmt::Display for CameraSettings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exposure {}us, aperture 1:{}", self.exposure_us, self.aperture_f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum CameraId {
    One,
    Two,
}

impl CameraId {
    pub const BOTH: [CameraId; 2] = [CameraId::One, CameraId::Two];

    pub fn number(self) -> u8 {
        match self {
            CameraId::One => 1,
            CameraId::Two => 2,
        }
    }
}

impl From<CameraId> for u8 {
    fn from(c: CameraId) -> u8 {
        c.number()
    }
}

impl TryFrom<u8> for CameraId {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(CameraId::One),
            2 => Ok(CameraId::Two),
            other => Err(format!("camera id must be 1 or 2, got {other}")),
        }
    }
}

/// One cropped photograph of a specimen.
///
/// Pixel data and mask are optional so large cohorts can keep only the
/// extracted metadata and features in memory; they are reloaded from the
/// manifest's PNG files on demand.
#[derive(Clone, Debug)]
pub struct FrameImage {
    pub image_id: String,
    pub camera: CameraId,
    /// Seconds since the specimen was dropped.
    pub capture_time: f64,
    pub width_px: u32,
    pub height_px: u32,
    /// Mean R, G, B over the whole crop, background included.
    pub channel_means: [f64; 3],
    pub silhouette_area_px2: u64,
    pub geometry: Option<CropGeometry>,
    pub pixels: Option<RgbImage>,
    pub mask: Option<Mask>,
    pub features: Option<FeatureVector>,
}

impl FrameImage {
    /// Drop pixel data and mask, keeping metadata and cached features.
    pub fn strip_pixels(&mut self) {
        self.pixels = None;
        self.mask = None;
    }
}

/// One physical specimen.
#[derive(Clone, Debug)]
pub struct SpecimenRecord {
    pub specimen_id: String,
    /// Class id into the dataset's [`LabelRegistry`].
    pub label: usize,
    pub frames: Vec<FrameImage>,
    pub mean_area_px2: f64,
    pub dry_weight_g: Option<f64>,
}

impl SpecimenRecord {
    pub fn new(
        specimen_id: impl Into<String>,
        label: usize,
        frames: Vec<FrameImage>,
        dry_weight_g: Option<f64>,
    ) -> Self {
        let mean_area_px2 = mean_area(&frames);
        Self {
            specimen_id: specimen_id.into(),
            label,
            frames,
            mean_area_px2,
            dry_weight_g,
        }
    }

    /// Recompute `mean_area_px2` after the frame list changed.
    pub fn refresh_mean_area(&mut self) {
        self.mean_area_px2 = mean_area(&self.frames);
    }

    pub fn frames_from(&self, camera: CameraId) -> impl Iterator<Item = &FrameImage> {
        self.frames.iter().filter(move |f| f.camera == camera)
    }

    pub fn count_from(&self, camera: CameraId) -> usize {
        self.frames_from(camera).count()
    }
}

fn mean_area(frames: &[FrameImage]) -> f64 {
    if frames.is_empty() {
        return 0.0;
    }
    frames
        .iter()
        .map(|f| f.silhouette_area_px2 as f64)
        .sum::<f64>()
        / frames.len() as f64
}

/// Round a weight to the scale's resolution.
pub fn quantize_weight(grams: f64) -> f64 {
    (grams / WEIGHT_RESOLUTION_G).round() * WEIGHT_RESOLUTION_G
}

/// All specimens imaged under one camera setting.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub settings: CameraSettings,
    pub registry: LabelRegistry,
    pub specimens: Vec<SpecimenRecord>,
}

impl Dataset {
    pub fn new(settings: CameraSettings, registry: LabelRegistry) -> Self {
        Self {
            settings,
            registry,
            specimens: Vec::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.registry.len()
    }

    pub fn num_images(&self) -> usize {
        self.specimens.iter().map(|s| s.frames.len()).sum()
    }

    pub fn specimen(&self, id: &str) -> Option<&SpecimenRecord> {
        self.specimens.iter().find(|s| s.specimen_id == id)
    }

    pub fn specimen_index(&self) -> HashMap<&str, usize> {
        self.specimens
            .iter()
            .enumerate()
            .map(|(i, s)| (s.specimen_id.as_str(), i))
            .collect()
    }

    pub fn specimen_ids(&self) -> Vec<&str> {
        self.specimens.iter().map(|s| s.specimen_id.as_str()).collect()
    }

    /// Copy of the dataset with frames filtered per specimen. Specimens whose
    /// frame list becomes empty are kept; callers decide whether to drop them.
    pub fn map_frames<F>(&self, mut select: F) -> Dataset
    where
        F: FnMut(&SpecimenRecord) -> Vec<FrameImage>,
    {
        let specimens = self
            .specimens
            .iter()
            .map(|s| {
                let mut out = SpecimenRecord::new(
                    s.specimen_id.clone(),
                    s.label,
                    select(s),
                    s.dry_weight_g,
                );
                if out.frames.is_empty() {
                    out.mean_area_px2 = s.mean_area_px2;
                }
                out
            })
            .collect();
        Dataset {
            settings: self.settings,
            registry: self.registry.clone(),
            specimens,
        }
    }

    pub fn strip_pixels(&mut self) {
        for s in &mut self.specimens {
            for f in &mut s.frames {
                f.strip_pixels();
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    TooFewSpecies,
    InvalidCameraSettings,
    NoFrames,
    DuplicateSpecimenId,
    UnknownLabel,
    FrameWidth,
    FrameHeight,
    ChannelMeans,
    AreaExceedsFrame,
    MeanAreaMismatch,
    NonPositiveWeight,
    DuplicateImageId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub specimen_id: Option<String>,
    pub detail: String,
}

impl Violation {
    fn new(kind: ViolationKind, specimen_id: Option<&str>, detail: impl Into<String>) -> Self {
        Self {
            kind,
            specimen_id: specimen_id.map(str::to_owned),
            detail: detail.into(),
        }
    }
}

/// Check every type invariant; an empty list means the dataset is well formed.
///
/// The result is sorted by `(kind, specimen_id)` so that it does not depend
/// on specimen order beyond the indices quoted in duplicate-id details.
pub fn validate_dataset(ds: &Dataset) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();

    if ds.registry.len() < 2 {
        out.push(Violation::new(
            TooFewSpecies,
            None,
            format!("registry has {} species, need at least 2", ds.registry.len()),
        ));
    }
    if !ds.settings.is_valid() {
        out.push(Violation::new(
            InvalidCameraSettings,
            None,
            format!("{:?}", ds.settings),
        ));
    }

    let mut by_id: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in ds.specimens.iter().enumerate() {
        by_id.entry(s.specimen_id.as_str()).or_default().push(i);
    }
    for (id, idx) in &by_id {
        if idx.len() > 1 {
            out.push(Violation::new(
                DuplicateSpecimenId,
                Some(id),
                format!("specimen id appears at indices {idx:?}"),
            ));
        }
    }

    let mut image_ids: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &ds.specimens {
        let sid = Some(s.specimen_id.as_str());
        if s.frames.is_empty() {
            out.push(Violation::new(NoFrames, sid, "specimen has no frames"));
        }
        if s.label >= ds.registry.len() {
            out.push(Violation::new(
                UnknownLabel,
                sid,
                format!("label id {} not in registry of {}", s.label, ds.registry.len()),
            ));
        }
        if let Some(w) = s.dry_weight_g {
            if !(w > 0.0) {
                out.push(Violation::new(NonPositiveWeight, sid, format!("dry weight {w}")));
            }
        }
        if !s.frames.is_empty() {
            let expected = mean_area(&s.frames);
            if (expected - s.mean_area_px2).abs() > 1e-9 * expected.max(1.0) {
                out.push(Violation::new(
                    MeanAreaMismatch,
                    sid,
                    format!("stored {} vs recomputed {expected}", s.mean_area_px2),
                ));
            }
        }
        for f in &s.frames {
            *image_ids.entry(f.image_id.as_str()).or_default() += 1;
            if f.width_px != CROP_WIDTH {
                out.push(Violation::new(
                    FrameWidth,
                    sid,
                    format!("{}: width {} != {CROP_WIDTH}", f.image_id, f.width_px),
                ));
            }
            if f.height_px < MIN_CROP_HEIGHT {
                out.push(Violation::new(
                    FrameHeight,
                    sid,
                    format!("{}: height {} < {MIN_CROP_HEIGHT}", f.image_id, f.height_px),
                ));
            }
            if f.channel_means.iter().any(|m| !(0.0..=255.0).contains(m)) {
                out.push(Violation::new(
                    ChannelMeans,
                    sid,
                    format!("{}: channel means {:?}", f.image_id, f.channel_means),
                ));
            }
            if f.silhouette_area_px2 > f.width_px as u64 * f.height_px as u64 {
                out.push(Violation::new(
                    AreaExceedsFrame,
                    sid,
                    format!("{}: area {}", f.image_id, f.silhouette_area_px2),
                ));
            }
        }
    }
    for (img, n) in image_ids {
        if n > 1 {
            out.push(Violation::new(
                DuplicateImageId,
                None,
                format!("image id `{img}` used {n} times"),
            ));
        }
    }

    out.sort_by(|a, b| {
        (&a.kind, &a.specimen_id, &a.detail).cmp(&(&b.kind, &b.specimen_id, &b.detail))
    });
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeciesStats {
    pub species: String,
    pub specimens: usize,
    pub images: usize,
}

/// Per-species specimen and image counts, in registry order.
pub fn dataset_statistics(ds: &Dataset) -> Vec<SpeciesStats> {
    let mut out: Vec<SpeciesStats> = ds
        .registry
        .names()
        .iter()
        .map(|n| SpeciesStats {
            species: n.clone(),
            specimens: 0,
            images: 0,
        })
        .collect();
    for s in &ds.specimens {
        if let Some(row) = out.get_mut(s.label) {
            row.specimens += 1;
            row.images += s.frames.len();
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn frame(image_id: &str, camera: CameraId, area: u64) -> FrameImage {
        FrameImage {
            image_id: image_id.to_owned(),
            camera,
            capture_time: 0.0,
            width_px: CROP_WIDTH,
            height_px: MIN_CROP_HEIGHT,
            channel_means: [120.0, 120.0, 120.0],
            silhouette_area_px2: area,
            geometry: None,
            pixels: None,
            mask: None,
            features: None,
        }
    }

    pub fn specimen(id: &str, label: usize, n_frames: usize) -> SpecimenRecord {
        let frames = (0..n_frames)
            .map(|k| {
                let cam = if k % 2 == 0 { CameraId::One } else { CameraId::Two };
                frame(&format!("{id}_{k}"), cam, 1000 + k as u64)
            })
            .collect();
        SpecimenRecord::new(id, label, frames, None)
    }

    pub fn small_dataset() -> Dataset {
        let mut ds = Dataset::new(
            CameraSettings::new(1000, 3.8),
            LabelRegistry::new(["Bembidion grapii", "Byrrhus fasciatus"]).unwrap(),
        );
        ds.specimens = vec![specimen("a", 0, 3), specimen("b", 0, 2), specimen("c", 1, 4)];
        ds
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn kinds(v: &[Violation]) -> Vec<(ViolationKind, Option<String>)> {
        let mut k: Vec<_> = v.iter().map(|v| (v.kind.clone(), v.specimen_id.clone())).collect();
        k.sort();
        k
    }

    #[test]
    fn well_formed_dataset_has_no_violations() {
        assert!(validate_dataset(&small_dataset()).is_empty());
    }

    #[test]
    fn specimen_without_frames_is_named() {
        let mut ds = small_dataset();
        ds.specimens.push(specimen("empty", 1, 0));
        let v = validate_dataset(&ds);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::NoFrames);
        assert_eq!(v[0].specimen_id.as_deref(), Some("empty"));
    }

    #[test]
    fn duplicate_specimen_id_lists_both_indices() {
        let mut ds = small_dataset();
        ds.specimens.push(specimen("a", 1, 1));
        ds.specimens[3].frames[0].image_id = "dup_only_frame".into();
        let v = validate_dataset(&ds);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind, ViolationKind::DuplicateSpecimenId);
        assert!(v[0].detail.contains("[0, 3]"), "{}", v[0].detail);
    }

    #[test]
    fn frame_invariants_are_checked() {
        let mut ds = small_dataset();
        ds.specimens[0].frames[0].width_px = 400;
        ds.specimens[0].frames[1].height_px = 300;
        ds.specimens[1].frames[0].channel_means = [0.0, 256.0, 0.0];
        ds.specimens[2].frames[0].silhouette_area_px2 = u64::MAX;
        ds.specimens[2].dry_weight_g = Some(0.0);
        let got: Vec<_> = kinds(&validate_dataset(&ds)).into_iter().map(|k| k.0).collect();
        assert!(got.contains(&ViolationKind::FrameWidth));
        assert!(got.contains(&ViolationKind::FrameHeight));
        assert!(got.contains(&ViolationKind::ChannelMeans));
        assert!(got.contains(&ViolationKind::AreaExceedsFrame));
        assert!(got.contains(&ViolationKind::NonPositiveWeight));
        assert!(got.contains(&ViolationKind::MeanAreaMismatch));
    }

    #[test]
    fn validation_is_idempotent_and_order_insensitive() {
        let mut ds = small_dataset();
        ds.specimens.push(specimen("empty", 1, 0));
        ds.specimens.push(specimen("b", 1, 1));
        ds.specimens[4].frames[0].image_id = "b_extra".into();
        let first = validate_dataset(&ds);
        assert_eq!(first, validate_dataset(&ds));
        ds.specimens.reverse();
        assert_eq!(kinds(&first), kinds(&validate_dataset(&ds)));
    }

    #[test]
    fn registry_rejects_duplicates_and_single_species_is_flagged() {
        assert!(LabelRegistry::new(["x", "y", "x"]).is_err());
        let ds = Dataset::new(CameraSettings::default(), LabelRegistry::new(["only"]).unwrap());
        assert_eq!(validate_dataset(&ds)[0].kind, ViolationKind::TooFewSpecies);
    }

    #[test]
    fn statistics_count_by_enumeration() {
        let mut ds = small_dataset();
        ds.registry = LabelRegistry::new(["A", "B", "C"]).unwrap();
        ds.specimens = vec![specimen("x", 0, 5), specimen("y", 0, 7), specimen("z", 0, 1)];
        let stats = dataset_statistics(&ds);
        assert_eq!((stats[0].specimens, stats[0].images), (3, 13));
        assert_eq!((stats[1].specimens, stats[1].images), (0, 0));
        assert_eq!(stats.iter().map(|s| s.images).sum::<usize>(), ds.num_images());
    }

    #[test]
    fn table_one_species_counts() {
        // 17 Bembidion grapii specimens with 2274 images at 1000us, 1:3.8.
        let mut ds = Dataset::new(
            CameraSettings::new(1000, 3.8),
            LabelRegistry::new(["Bembidion grapii", "Byrrhus fasciatus"]).unwrap(),
        );
        let per = [133usize; 17];
        let mut remaining = 2274 - per.iter().sum::<usize>();
        for (i, &n) in per.iter().enumerate() {
            let extra = remaining.min(1);
            remaining -= extra;
            ds.specimens.push(specimen(&format!("bg{i}"), 0, n + extra));
        }
        let stats = dataset_statistics(&ds);
        assert_eq!((stats[0].specimens, stats[0].images), (17, 2274));
    }

    #[test]
    fn mean_area_is_arithmetic_mean() {
        let s = specimen("m", 0, 4);
        assert_eq!(s.mean_area_px2, (1000.0 + 1001.0 + 1002.0 + 1003.0) / 4.0);
        assert_eq!(quantize_weight(0.012_345_6), 0.0123);
    }

    #[test]
    fn settings_order_is_aperture_then_exposure() {
        let mut g = CameraSettings::pilot_grid();
        g.reverse();
        g.sort();
        assert_eq!(g[0], CameraSettings::new(1000, 3.8));
        assert_eq!(g[1], CameraSettings::new(1500, 3.8));
        assert_eq!(g[8], CameraSettings::new(2000, 16.0));
        assert_eq!(CameraSettings::new(2000, 8.0).key(), "e2000_f8");
    }
}
