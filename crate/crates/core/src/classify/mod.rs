//! Per-image classification: the built-in baseline and the external-score
//! adapter, both behind [`Classifier`].

mod features;
mod model;
mod scores;
mod train;

use std::collections::BTreeMap;

pub use features::{
    extract_features, hist_bin, Extraction, FeatureVector, Standardizer, FEATURE_DIM, HIST_BINS,
};
pub use model::{softmax, LinearSoftmax};
pub use scores::{load_external_scores, write_scores, ExternalScores, RejectedRow, ROW_SUM_TOLERANCE};
pub use train::{
    train_baseline, BaselineModel, EpochLog, Selection, StageLog, TrainLog, TrainSchedule,
    TrainingMeta, ValSpecimen,
};

use crate::confidence::ConfidenceVector;
use crate::dataset::{FrameImage, SpecimenRecord};
use crate::error::{Error, Result};
use crate::imgproc::rescale_for_classifier;

/// Cached descriptor of a frame, computing it from pixels when absent.
pub fn frame_features(frame: &FrameImage) -> Result<FeatureVector> {
    if let Some(f) = frame.features {
        return Ok(f);
    }
    let input = rescale_for_classifier(frame)?;
    Ok(extract_features(&input).features)
}

/// Fill in `frame.features` from its pixels.
pub fn ensure_features(frame: &mut FrameImage) -> Result<()> {
    if frame.features.is_none() {
        frame.features = Some(frame_features(frame)?);
    }
    Ok(())
}

pub fn predict_image(model: &BaselineModel, frame: &FrameImage) -> Result<ConfidenceVector> {
    model.predict_features(&frame_features(frame)?)
}

/// Per-image scorer produced by [`Classifier::fit`].
pub trait ImageScorer: Send + Sync {
    fn score(&self, frame: &FrameImage) -> Result<ConfidenceVector>;
}

/// Something that can be prepared on a split's training and validation
/// specimens and then score test images.
pub trait Classifier: Sync {
    fn name(&self) -> &str;

    fn fit(
        &self,
        classes: &[String],
        train: &[&SpecimenRecord],
        val: &[&SpecimenRecord],
        seed: u64,
    ) -> Result<Box<dyn ImageScorer>>;
}

/// The linear softmax baseline trained with a staged SGD schedule.
#[derive(Clone, Debug, Default)]
pub struct BaselineClassifier {
    pub schedule: TrainSchedule,
    pub selection: Selection,
}

impl BaselineClassifier {
    pub fn new(schedule: TrainSchedule) -> Self {
        Self {
            schedule,
            selection: Selection::default(),
        }
    }

    /// Train and also return the training log.
    pub fn train(
        &self,
        classes: &[String],
        train: &[&SpecimenRecord],
        val: &[&SpecimenRecord],
        seed: u64,
    ) -> Result<(BaselineModel, TrainLog)> {
        let mut samples = Vec::new();
        for s in train {
            for f in &s.frames {
                samples.push((frame_features(f)?, s.label));
            }
        }
        let val_specimens = val
            .iter()
            .map(|s| {
                Ok(ValSpecimen {
                    label: s.label,
                    features: s.frames.iter().map(frame_features).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        train_baseline(classes, &samples, &val_specimens, &self.schedule, self.selection, seed)
    }
}

struct BaselineScorer(BaselineModel);

impl ImageScorer for BaselineScorer {
    fn score(&self, frame: &FrameImage) -> Result<ConfidenceVector> {
        predict_image(&self.0, frame)
    }
}

impl Classifier for BaselineClassifier {
    fn name(&self) -> &str {
        "baseline"
    }

    fn fit(
        &self,
        classes: &[String],
        train: &[&SpecimenRecord],
        val: &[&SpecimenRecord],
        seed: u64,
    ) -> Result<Box<dyn ImageScorer>> {
        let (model, _) = self.train(classes, train, val, seed)?;
        Ok(Box::new(BaselineScorer(model)))
    }
}

/// Fixed per-image vectors (e.g. loaded with [`load_external_scores`]);
/// fitting is a no-op.
#[derive(Clone, Debug, Default)]
pub struct FixedScores {
    pub vectors: BTreeMap<String, ConfidenceVector>,
}

impl FixedScores {
    pub fn new(vectors: BTreeMap<String, ConfidenceVector>) -> Self {
        Self { vectors }
    }
}

impl From<ExternalScores> for FixedScores {
    fn from(s: ExternalScores) -> Self {
        Self { vectors: s.vectors }
    }
}

struct FixedScorer(BTreeMap<String, ConfidenceVector>);

impl ImageScorer for FixedScorer {
    fn score(&self, frame: &FrameImage) -> Result<ConfidenceVector> {
        self.0
            .get(&frame.image_id)
            .cloned()
            .ok_or_else(|| Error::Data(format!("no score for image `{}`", frame.image_id)))
    }
}

impl Classifier for FixedScores {
    fn name(&self) -> &str {
        "external"
    }

    fn fit(
        &self,
        _classes: &[String],
        _train: &[&SpecimenRecord],
        _val: &[&SpecimenRecord],
        _seed: u64,
    ) -> Result<Box<dyn ImageScorer>> {
        Ok(Box::new(FixedScorer(self.vectors.clone())))
    }
}
