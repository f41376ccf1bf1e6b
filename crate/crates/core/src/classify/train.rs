//! Baseline training: minibatch SGD over a staged learning-rate schedule
//! with validation-based checkpoint selection.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aggregate::majority_vote;
use crate::confidence::ConfidenceVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::features::{FeatureVector, Standardizer, FEATURE_DIM};
use super::model::LinearSoftmax;

/// Learning rates, epochs per rate and batch size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub learning_rates: Vec<f64>,
    pub epochs_per_rate: usize,
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    /// Four decades from 1e-3 to 1e-6, 50 epochs each, batches of 128.
    fn default() -> Self {
        Self {
            learning_rates: vec![0.001, 0.0001, 0.00001, 0.000001],
            epochs_per_rate: 50,
            batch_size: 128,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.learning_rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.learning_rates.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("learning rates must be strictly decreasing".into()));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.learning_rates.len() * self.epochs_per_rate
    }
}

/// Criterion for picking the checkpoint on the validation specimens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Specimen accuracy after majority vote over each specimen's images.
    #[default]
    SpecimenMajority,
    /// Plain per-image accuracy.
    Image,
}

/// Validation specimen: its class and the features of all its images.
#[derive(Clone, Debug)]
pub struct ValSpecimen {
    pub label: usize,
    pub features: Vec<FeatureVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    /// Mean cross-entropy over all validation images.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub stages: Vec<StageLog>,
    pub epochs: Vec<EpochLog>,
    /// Epoch of the returned checkpoint; 0 is the initial model.
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub schedule: TrainSchedule,
    pub selection: Selection,
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
    pub flags: Vec<String>,
}

/// Trained baseline: standardisation plus linear softmax over the
/// 30-value image descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BaselineModel<T: Scalar = f64> {
    pub classes: Vec<String>,
    pub linear: LinearSoftmax<T>,
    pub standardizer: Standardizer,
    pub meta: TrainingMeta,
}

impl<T: Scalar> BaselineModel<T> {
    pub fn prepare(&self, f: &FeatureVector) -> Vec<T> {
        self.standardizer
            .apply(f)
            .iter()
            .map(|&v| T::lit(v))
            .collect()
    }

    pub fn predict_features(&self, f: &FeatureVector) -> Result<ConfidenceVector<T>> {
        self.linear.predict(&self.prepare(f))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.linear.check_shape()?;
        if m.linear.dim != FEATURE_DIM || m.classes.len() != m.linear.num_classes {
            return Err(Error::Data("model dimensions do not match the feature layout".into()));
        }
        Ok(m)
    }
}

struct Prepared<T> {
    x: Vec<Vec<T>>,
    y: Vec<usize>,
}

impl<T: Scalar> Prepared<T> {
    fn batch<'a>(&'a self, idx: &'a [usize]) -> impl Iterator<Item = (&'a [T], usize)> + 'a {
        idx.iter().map(move |&i| (self.x[i].as_slice(), self.y[i]))
    }

    fn all(&self) -> impl Iterator<Item = (&[T], usize)> {
        self.x.iter().map(Vec::as_slice).zip(self.y.iter().copied())
    }
}

/// Validation accuracy under `selection` and the mean image cross-entropy.
fn validation_score<T: Scalar>(
    linear: &LinearSoftmax<T>,
    val: &[(usize, Vec<Vec<T>>)],
    selection: Selection,
) -> Result<Option<(f64, f64)>> {
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut images = 0usize;
    let mut loss = 0.0;
    for (label, xs) in val {
        if xs.is_empty() {
            continue;
        }
        loss += linear.loss(xs.iter().map(|x| (x.as_slice(), *label))).to_f64_lossy() * xs.len() as f64;
        images += xs.len();
        let vectors = xs
            .iter()
            .map(|x| linear.predict(x))
            .collect::<Result<Vec<ConfidenceVector<T>>>>()?;
        match selection {
            Selection::SpecimenMajority => {
                total += 1;
                if majority_vote(&vectors)?.predicted == *label {
                    correct += 1;
                }
            }
            Selection::Image => {
                total += vectors.len();
                correct += vectors.iter().filter(|v| v.argmax() == *label).count();
            }
        }
    }
    Ok((total > 0).then(|| (correct as f64 / total as f64, loss / images as f64)))
}

/// Train the baseline on `(features, label)` pairs.
///
/// Every class in `classes` needs at least one training image. After each
/// epoch the model is scored on `val`; the checkpoint with the best
/// accuracy is returned, ties going to the lower validation loss and then
/// to the earliest epoch. Without validation specimens the
/// final model is returned and flagged.
pub fn train_baseline<T: Scalar>(
    classes: &[String],
    train: &[(FeatureVector, usize)],
    val: &[ValSpecimen],
    schedule: &TrainSchedule,
    selection: Selection,
    seed: u64,
) -> Result<(BaselineModel<T>, TrainLog)> {
    schedule.validate()?;
    let k = classes.len();
    let mut seen = vec![false; k];
    for (_, y) in train {
        if *y >= k {
            return Err(Error::Data(format!("training label {y} out of range for {k} classes")));
        }
        seen[*y] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::MissingClass(classes[missing].clone()));
    }

    let standardizer = Standardizer::fit(train.iter().map(|(f, _)| f))?;
    let to_t = |f: &FeatureVector| -> Vec<T> {
        standardizer.apply(f).iter().map(|&v| T::lit(v)).collect()
    };
    let data = Prepared {
        x: train.iter().map(|(f, _)| to_t(f)).collect(),
        y: train.iter().map(|(_, y)| *y).collect(),
    };
    let val_x: Vec<(usize, Vec<Vec<T>>)> = val
        .iter()
        .map(|s| (s.label, s.features.iter().map(to_t).collect()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut linear = LinearSoftmax::<T>::zeros(k, FEATURE_DIM);
    for w in &mut linear.weights {
        *w = T::lit(init.sample(&mut rng));
    }

    let mut log = TrainLog::default();
    let mut best = linear.clone();
    let mut best_acc: Option<f64> = None;
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    if schedule.total_epochs() == 0 {
        log.flags.push("no_epochs: initial model returned".into());
    }
    if val_x.iter().all(|(_, imgs)| imgs.is_empty()) {
        log.flags.push("no_validation: final epoch returned".into());
    }

    let mut order: Vec<usize> = (0..data.x.len()).collect();
    let mut epoch = 0usize;
    for (stage, &lr) in schedule.learning_rates.iter().enumerate() {
        let steps_per_epoch = order.len().div_ceil(schedule.batch_size);
        info!(
            "stage {}: learning rate {lr:e}, {} epochs, batch size {}",
            stage + 1,
            schedule.epochs_per_rate,
            schedule.batch_size
        );
        log.stages.push(StageLog {
            stage: stage + 1,
            learning_rate: lr,
            epochs: schedule.epochs_per_rate,
            batch_size: schedule.batch_size,
            steps: steps_per_epoch * schedule.epochs_per_rate,
        });
        let lr_t = T::lit(lr);
        for _ in 0..schedule.epochs_per_rate {
            epoch += 1;
            order.shuffle(&mut rng);
            for chunk in order.chunks(schedule.batch_size) {
                let grad = linear.gradient(data.batch(chunk));
                linear.step(&grad, lr_t);
            }
            let train_loss = linear.loss(data.all()).to_f64_lossy();
            let score = validation_score(&linear, &val_x, selection)?;
            let val_accuracy = score.map(|(a, _)| a);
            let val_loss = score.map(|(_, l)| l);
            log.epochs.push(EpochLog {
                epoch,
                stage: stage + 1,
                learning_rate: lr,
                train_loss,
                val_accuracy,
                val_loss,
            });
            let improved = match (score, best_acc) {
                (Some((a, l)), Some(b)) => a > b || (a == b && l < best_loss),
                (Some(_), None) => true,
                (None, _) => true,
            };
            if improved {
                best = linear.clone();
                best_acc = val_accuracy;
                best_loss = val_loss.unwrap_or(f64::INFINITY);
                best_epoch = epoch;
            }
        }
    }

    log.best_epoch = best_epoch;
    log.best_val_accuracy = best_acc;
    let model = BaselineModel {
        classes: classes.to_vec(),
        linear: best,
        standardizer,
        meta: TrainingMeta {
            seed,
            schedule: schedule.clone(),
            selection,
            best_epoch,
            best_val_accuracy: best_acc,
            flags: log.flags.clone(),
        },
    };
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn classes(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    /// Two Gaussian blobs in the first two feature dimensions.
    fn blobs(n: usize, gap: f64, seed: u64) -> Vec<(FeatureVector, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let y = i % 2;
                let mut f = [0f64; FEATURE_DIM];
                for v in f.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
                f[0] += if y == 0 { -gap } else { gap };
                f[1] += if y == 0 { gap } else { -gap };
                (FeatureVector(f), y)
            })
            .collect()
    }

    fn to_val(samples: &[(FeatureVector, usize)], per: usize) -> Vec<ValSpecimen> {
        let mut out: Vec<ValSpecimen> = Vec::new();
        for chunk in samples.chunks(2 * per) {
            for y in 0..2 {
                out.push(ValSpecimen {
                    label: y,
                    features: chunk.iter().filter(|s| s.1 == y).map(|s| s.0).collect(),
                });
            }
        }
        out
    }

    /// Perceptron: an independent witness that the data is linearly separable.
    fn perceptron_separates(samples: &[(FeatureVector, usize)]) -> bool {
        let mut w = [0f64; FEATURE_DIM + 1];
        for _ in 0..1000 {
            let mut errors = 0;
            for (f, y) in samples {
                let t = if *y == 1 { 1.0 } else { -1.0 };
                let s: f64 = w[FEATURE_DIM] + f.0.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
                if t * s <= 0.0 {
                    errors += 1;
                    for i in 0..FEATURE_DIM {
                        w[i] += t * f.0[i];
                    }
                    w[FEATURE_DIM] += t;
                }
            }
            if errors == 0 {
                return true;
            }
        }
        false
    }

    #[test]
    fn schedule_defaults_and_validation() {
        let s = TrainSchedule::default();
        assert_eq!(s.learning_rates, vec![1e-3, 1e-4, 1e-5, 1e-6]);
        assert_eq!((s.epochs_per_rate, s.batch_size, s.total_epochs()), (50, 128, 200));
        assert!(s.validate().is_ok());
        let bad = TrainSchedule {
            learning_rates: vec![0.01, 0.01],
            ..s.clone()
        };
        assert!(bad.validate().is_err());
        let bad = TrainSchedule {
            learning_rates: vec![0.01, -0.1],
            ..s
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn separable_classes_reach_full_validation_accuracy() {
        let train = blobs(200, 3.0, 1);
        let val_samples = blobs(40, 3.0, 2);
        assert!(perceptron_separates(&train));
        assert!(perceptron_separates(&val_samples));
        let val = to_val(&val_samples, 5);
        let (model, log) = train_baseline::<f64>(
            &classes(2),
            &train,
            &val,
            &TrainSchedule::default(),
            Selection::SpecimenMajority,
            3,
        )
        .unwrap();
        assert_eq!(log.best_val_accuracy, Some(1.0));
        assert_eq!(log.epochs.len(), 200);
        assert_eq!(log.stages.len(), 4);
        // among perfect checkpoints the lowest validation loss, earliest on ties
        let mut best = (f64::INFINITY, 0);
        for e in log.epochs.iter().filter(|e| e.val_accuracy == Some(1.0)) {
            if e.val_loss.unwrap() < best.0 {
                best = (e.val_loss.unwrap(), e.epoch);
            }
        }
        assert_eq!(model.meta.best_epoch, best.1);
    }

    #[test]
    fn zero_epochs_returns_flagged_initial_model() {
        let train = blobs(20, 3.0, 1);
        let schedule = TrainSchedule {
            learning_rates: vec![0.1],
            epochs_per_rate: 0,
            batch_size: 8,
        };
        let (model, log) =
            train_baseline::<f64>(&classes(2), &train, &[], &schedule, Selection::Image, 9)
                .unwrap();
        assert_eq!(model.meta.best_epoch, 0);
        assert!(log.flags.iter().any(|f| f.starts_with("no_epochs")));
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn missing_class_is_named() {
        let train = blobs(10, 1.0, 1);
        let err = train_baseline::<f64>(
            &classes(3),
            &train,
            &[],
            &TrainSchedule::default(),
            Selection::SpecimenMajority,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingClass(ref c) if c == "c2"), "{err}");
    }

    #[test]
    fn permuted_labels_give_chance_accuracy() {
        // K = 4, labels independent of features: validation accuracy ~ 1/4
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sample = |n: usize| -> Vec<(FeatureVector, usize)> {
            (0..n)
                .map(|i| {
                    let mut f = [0f64; FEATURE_DIM];
                    for v in f.iter_mut() {
                        *v = rng.random_range(-1.0..1.0);
                    }
                    (FeatureVector(f), i % 4)
                })
                .collect()
        };
        let train = sample(400);
        let held = sample(800);
        let schedule = TrainSchedule {
            learning_rates: vec![0.05, 0.005],
            epochs_per_rate: 10,
            batch_size: 32,
        };
        let (model, _) =
            train_baseline::<f64>(&classes(4), &train, &[], &schedule, Selection::Image, 1)
                .unwrap();
        let correct = held
            .iter()
            .filter(|(f, y)| model.predict_features(f).unwrap().argmax() == *y)
            .count();
        let acc = correct as f64 / held.len() as f64;
        assert!((acc - 0.25).abs() <= 0.15, "{acc}");
    }

    #[test]
    fn full_batch_loss_does_not_increase_across_stages() {
        let train = blobs(60, 0.3, 4);
        let schedule = TrainSchedule {
            learning_rates: vec![0.5, 0.05, 0.005, 0.0005],
            epochs_per_rate: 25,
            batch_size: 1000,
        };
        let (_, log) =
            train_baseline::<f64>(&classes(2), &train, &[], &schedule, Selection::Image, 2)
                .unwrap();
        let stage_end: Vec<f64> = log
            .epochs
            .iter()
            .filter(|e| e.epoch % 25 == 0)
            .map(|e| e.train_loss)
            .collect();
        assert_eq!(stage_end.len(), 4);
        assert!(stage_end.windows(2).all(|w| w[1] <= w[0]), "{stage_end:?}");
        assert!(log.epochs.windows(2).all(|w| w[1].train_loss <= w[0].train_loss + 1e-12));
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let train = blobs(50, 1.0, 8);
        let schedule = TrainSchedule {
            learning_rates: vec![0.01],
            epochs_per_rate: 5,
            batch_size: 16,
        };
        let run = |seed| {
            train_baseline::<f64>(&classes(2), &train, &[], &schedule, Selection::Image, seed)
                .unwrap()
                .0
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4).linear, run(5).linear);
    }

    #[test]
    fn model_json_round_trip() {
        let train = blobs(30, 2.0, 8);
        let schedule = TrainSchedule {
            learning_rates: vec![0.01],
            epochs_per_rate: 2,
            batch_size: 16,
        };
        let (m, _) =
            train_baseline::<f64>(&classes(2), &train, &[], &schedule, Selection::Image, 1)
                .unwrap();
        let back = BaselineModel::<f64>::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn f32_training_runs() {
        let train = blobs(60, 3.0, 1);
        let schedule = TrainSchedule {
            learning_rates: vec![0.01],
            epochs_per_rate: 3,
            batch_size: 16,
        };
        let (m, _) =
            train_baseline::<f32>(&classes(2), &train, &[], &schedule, Selection::Image, 1)
                .unwrap();
        let p = m.predict_features(&train[0].0).unwrap();
        assert!((p.probs().iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
}
