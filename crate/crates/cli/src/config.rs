//! Run configuration: a TOML file, overridden by `BIODISCOVER_*`
//! environment variables, overridden in turn by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use biodiscover::aggregate::DecisionRule;
use biodiscover::classify::TrainSchedule;
use biodiscover::dataset::CameraSettings;
use biodiscover::devicesim::{DeviceTiming, RoutingRule};
use biodiscover::eval::SplitFractions;
use biodiscover::syndata::{self, SpeciesModel};
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "BIODISCOVER_";
/// Environment variables with the prefix that are not config fields.
const ENV_RESERVED: [&str; 2] = ["LOG", "CONFIG"];
const SECTIONS: [&str; 8] = [
    "paths", "camera", "split", "schedule", "generate", "biomass", "simulate", "crop",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Input dataset directory (holds `manifest.json`).
    pub data: PathBuf,
    pub output: PathBuf,
    /// Trained model JSON used by `simulate`.
    pub model: Option<PathBuf>,
    /// External per-image scores CSV replacing the baseline classifier.
    pub scores: Option<PathBuf>,
    /// Background model stem; defaults to `<output>/background`.
    pub background: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data"),
            output: PathBuf::from("out"),
            model: None,
            scores: None,
            background: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Full,
    Compact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub preset: String,
    /// Specimens per species; empty keeps the preset's counts.
    pub counts: Vec<usize>,
    pub sensor: SensorKind,
    pub median_transit_s: f64,
    /// Generate all nine pilot settings into `<output>/<key>/`.
    pub grid: bool,
    /// Write raw sensor frames and calibration frames instead of crops.
    pub raw: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            preset: "separable_pair".into(),
            counts: Vec::new(),
            sensor: SensorKind::Full,
            median_transit_s: 0.5,
            grid: false,
            raw: false,
        }
    }
}

pub const PRESETS: [&str; 7] = [
    "separable_pair",
    "congeners_pair",
    "texture_pair",
    "dorsal_marking_pair",
    "noisy_pair",
    "twelve_species",
    "weighed_trio",
];

impl GenerateConfig {
    pub fn preset_models(&self) -> Option<(Vec<SpeciesModel>, Vec<usize>)> {
        let (models, counts) = match self.preset.as_str() {
            "separable_pair" => syndata::separable_pair(),
            "congeners_pair" => syndata::congeners_pair(),
            "texture_pair" => syndata::texture_pair(),
            "dorsal_marking_pair" => syndata::dorsal_marking_pair(),
            "noisy_pair" => syndata::noisy_pair(),
            "twelve_species" => syndata::twelve_species(),
            "weighed_trio" => syndata::weighed_trio(),
            _ => return None,
        };
        let counts = if self.counts.is_empty() { counts } else { self.counts.clone() };
        Some((models, counts))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiomassConfig {
    /// Area calibration; pixel areas are fitted when absent.
    pub mm2_per_px: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Defaults to one container per species (1, 2, ...) and 0 otherwise.
    pub routing: Option<RoutingRule>,
    pub timing: DeviceTiming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropSection {
    pub cuvette_left: u32,
}

impl Default for CropSection {
    fn default() -> Self {
        Self { cuvette_left: 32 }
    }
}

/// An `N_max` entry: a positive count or `"inf"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NmaxValue {
    Count(i64),
    Named(String),
}

impl NmaxValue {
    pub fn parse(s: &str) -> NmaxValue {
        s.trim()
            .parse::<i64>()
            .map_or_else(|_| NmaxValue::Named(s.trim().to_owned()), NmaxValue::Count)
    }

    pub fn resolve(&self) -> Result<Option<usize>, String> {
        match self {
            NmaxValue::Count(n) if *n >= 1 => Ok(Some(*n as usize)),
            NmaxValue::Count(n) => Err(format!("N_max must be at least 1, got {n}")),
            NmaxValue::Named(s) if s == "inf" => Ok(None),
            NmaxValue::Named(s) => Err(format!("N_max must be a positive integer or \"inf\", got `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub camera: CameraSettings,
    pub seed: u64,
    pub n_reps: usize,
    /// `majority` or `weighted`.
    pub rule: String,
    /// Deviating pixels needed to trigger a detection.
    pub trigger_threshold: usize,
    pub split: SplitFractions,
    pub schedule: TrainSchedule,
    pub nmax: Vec<NmaxValue>,
    pub crop: CropSection,
    pub generate: GenerateConfig,
    pub biomass: BiomassConfig,
    pub simulate: SimulateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            camera: CameraSettings::default(),
            seed: 0,
            n_reps: 10,
            rule: "majority".into(),
            trigger_threshold: 50,
            split: SplitFractions::default(),
            schedule: TrainSchedule::default(),
            nmax: [1, 2, 5, 10, 20, 50]
                .into_iter()
                .map(NmaxValue::Count)
                .chain([NmaxValue::Named("inf".into())])
                .collect(),
            crop: CropSection::default(),
            generate: GenerateConfig::default(),
            biomass: BiomassConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

impl RunConfig {
    /// Read `path` (if any), then apply environment overrides.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self, Vec<FieldError>>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| vec![FieldError::new("config", format!("{}: {e}", p.display()))])?;
                text.parse::<toml::Table>()
                    .map_err(|e| vec![FieldError::new("config", format!("{}: {e}", p.display()))])?
            }
            None => toml::Table::new(),
        };
        apply_env(&mut table, env)?;
        RunConfig::deserialize(toml::Value::Table(table))
            .map_err(|e| vec![FieldError::new("config", e.to_string().trim().to_owned())])
    }

    pub fn decision_rule(&self) -> Result<DecisionRule, FieldError> {
        self.rule.parse().map_err(|e: biodiscover::Error| FieldError::new("rule", e.to_string()))
    }

    pub fn nmax_values(&self) -> Result<Vec<Option<usize>>, FieldError> {
        self.nmax
            .iter()
            .map(|v| v.resolve().map_err(|m| FieldError::new("nmax", m)))
            .collect()
    }

    /// Every invalid field, not just the first.
    pub fn validate(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let s = &self.split;
        for (name, f) in [("train", s.train), ("val", s.val), ("test", s.test)] {
            if !(0.0..=1.0).contains(&f) {
                errs.push(FieldError::new(format!("split.{name}"), format!("{f} is outside [0, 1]")));
            }
        }
        let sum = s.train + s.val + s.test;
        if (sum - 1.0).abs() > 1e-9 {
            errs.push(FieldError::new("split", format!("fractions sum to {sum}, expected 1")));
        }
        if self.n_reps < 1 {
            errs.push(FieldError::new("n_reps", "must be at least 1"));
        }
        if let Err(e) = self.decision_rule() {
            errs.push(e);
        }
        if self.camera.exposure_us == 0 {
            errs.push(FieldError::new("camera.exposure_us", "must be positive"));
        }
        if !(self.camera.aperture_f.is_finite() && self.camera.aperture_f > 0.0) {
            errs.push(FieldError::new("camera.aperture_f", "must be a positive f-number"));
        }
        if self.trigger_threshold < 1 {
            errs.push(FieldError::new("trigger_threshold", "must be at least 1"));
        }
        if self.schedule.learning_rates.is_empty() {
            errs.push(FieldError::new("schedule.learning_rates", "must not be empty"));
        } else if let Err(e) = self.schedule.validate() {
            errs.push(FieldError::new("schedule", e.to_string()));
        }
        if self.schedule.epochs_per_rate < 1 {
            errs.push(FieldError::new("schedule.epochs_per_rate", "must be at least 1"));
        }
        if self.nmax.is_empty() {
            errs.push(FieldError::new("nmax", "must list at least one value"));
        }
        if let Err(e) = self.nmax_values() {
            errs.push(e);
        }
        let g = &self.generate;
        match g.preset_models() {
            None => errs.push(FieldError::new(
                "generate.preset",
                format!("unknown preset `{}` (known: {})", g.preset, PRESETS.join(", ")),
            )),
            Some((models, counts)) => {
                if counts.len() != models.len() {
                    errs.push(FieldError::new(
                        "generate.counts",
                        format!("{} counts for {} species", counts.len(), models.len()),
                    ));
                }
                if counts.contains(&0) {
                    errs.push(FieldError::new("generate.counts", "counts must be positive"));
                }
            }
        }
        if !(g.median_transit_s > 0.0 && g.median_transit_s.is_finite()) {
            errs.push(FieldError::new("generate.median_transit_s", "must be positive"));
        }
        if let Some(m) = self.biomass.mm2_per_px {
            if !(m > 0.0 && m.is_finite()) {
                errs.push(FieldError::new("biomass.mm2_per_px", "must be positive"));
            }
        }
        let t = &self.simulate.timing;
        if !(t.flush_s >= 0.0 && t.refill_s >= 0.0) {
            errs.push(FieldError::new("simulate.timing", "durations must be non-negative"));
        }
        errs
    }
}

/// Parse an environment value as a TOML value, falling back to a string.
fn env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

/// `BIODISCOVER_SEED=3` sets `seed`; `BIODISCOVER_SPLIT_TRAIN=0.6` sets
/// `split.train`. Unknown names are reported during deserialisation.
pub fn apply_env<I>(table: &mut toml::Table, env: I) -> Result<(), Vec<FieldError>>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter_map(|(k, v)| {
            let name = k.strip_prefix(ENV_PREFIX)?;
            (!ENV_RESERVED.contains(&name)).then(|| (name.to_ascii_lowercase(), v))
        })
        .collect();
    vars.sort();
    let mut errs = Vec::new();
    for (name, raw) in vars {
        let value = env_value(&raw);
        let section = SECTIONS
            .iter()
            .find(|s| name.strip_prefix(*s).is_some_and(|r| r.starts_with('_')));
        match section {
            Some(s) => {
                let key = name[s.len() + 1..].to_owned();
                let entry = table
                    .entry(s.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                match entry.as_table_mut() {
                    Some(t) => {
                        t.insert(key, value);
                    }
                    None => errs.push(FieldError::new(*s, "is not a table")),
                }
            }
            None => {
                table.insert(name, value);
            }
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}
