//! The evaluation protocol: repeated specimen-level splits, specimen
//! accuracy with confusion matrices, the camera-settings grid, the camera
//! ablation and the images-per-specimen sweep.

mod report;
mod splits;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{
    read_confusion_csv, write_confusion_csv, write_curve_csv, write_grid_csv, write_grid_markdown,
    write_predictions_csv,
};
pub use splits::{check_plan, make_splits, Role, SplitFractions, SplitPlan};

use crate::aggregate::{aggregate, DecisionRule};
use crate::classify::{Classifier, ImageScorer};
use crate::confidence::ConfidenceVector;
use crate::dataset::{CameraId, CameraSettings, Dataset, FrameImage, SpecimenRecord};
use crate::error::{Error, Result};
use crate::scalar::mean_and_sample_std;
use crate::seed::{derive_seed, string_tag};

/// One test specimen's outcome in one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub repetition: usize,
    pub specimen_id: String,
    pub rule: DecisionRule,
    pub predicted: String,
    pub truth: String,
    pub n_images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub accuracy: f64,
    pub n_test: usize,
    pub n_correct: usize,
    /// Raw counts, true class rows, predicted class columns.
    pub confusion_counts: Vec<Vec<usize>>,
    /// Test specimens without any image, left out of the accuracy.
    pub skipped: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub settings: CameraSettings,
    pub rule: DecisionRule,
    pub classifier: String,
    pub classes: Vec<String>,
    pub per_repetition: Vec<RepetitionResult>,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation (n - 1) over repetitions.
    pub std_accuracy: f64,
    /// Average of the per-repetition row-normalised confusion matrices.
    pub confusion: Vec<Vec<f64>>,
    pub predictions: Vec<PredictionRow>,
}

impl EvalReport {
    fn from_repetitions(
        ds: &Dataset,
        classifier: &str,
        rule: DecisionRule,
        reps: Vec<(RepetitionResult, Vec<PredictionRow>)>,
    ) -> Self {
        let k = ds.num_classes();
        let accuracies: Vec<f64> = reps.iter().map(|(r, _)| r.accuracy).collect();
        let (mean_accuracy, std_accuracy) = mean_and_sample_std(&accuracies);
        let mut confusion = vec![vec![0.0; k]; k];
        for (i, row) in confusion.iter_mut().enumerate() {
            let normalised: Vec<Vec<f64>> = reps
                .iter()
                .filter_map(|(r, _)| row_normalise(&r.confusion_counts[i]))
                .collect();
            if normalised.is_empty() {
                continue;
            }
            for (j, v) in row.iter_mut().enumerate() {
                *v = normalised.iter().map(|n| n[j]).sum::<f64>() / normalised.len() as f64;
            }
        }
        let mut per_repetition = Vec::with_capacity(reps.len());
        let mut predictions = Vec::new();
        for (r, p) in reps {
            per_repetition.push(r);
            predictions.extend(p);
        }
        Self {
            settings: ds.settings,
            rule,
            classifier: classifier.to_owned(),
            classes: ds.registry.names().to_vec(),
            per_repetition,
            accuracies,
            mean_accuracy,
            std_accuracy,
            confusion,
            predictions,
        }
    }
}

fn row_normalise(counts: &[usize]) -> Option<Vec<f64>> {
    let total: usize = counts.iter().sum();
    (total > 0).then(|| counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Overall accuracy from raw counts as the label-frequency-weighted trace of
/// the row-normalised matrix.
pub fn weighted_trace(counts: &[Vec<usize>]) -> f64 {
    let total: usize = counts.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .enumerate()
        .filter_map(|(i, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| (n as f64 / total as f64) * (row[i] as f64 / n as f64))
        })
        .sum()
}

struct Partition<'a> {
    train: Vec<&'a SpecimenRecord>,
    val: Vec<&'a SpecimenRecord>,
    test: Vec<&'a SpecimenRecord>,
}

fn partition<'a>(ds: &'a Dataset, plan: &SplitPlan) -> Result<Partition<'a>> {
    let mut p = Partition {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for s in &ds.specimens {
        match plan.role(&s.specimen_id) {
            Some(Role::Train) => p.train.push(s),
            Some(Role::Val) => p.val.push(s),
            Some(Role::Test) => p.test.push(s),
            None => {
                return Err(Error::Data(format!(
                    "specimen `{}` missing from split plan {}",
                    s.specimen_id, plan.repetition
                )))
            }
        }
    }
    Ok(p)
}

/// Per-image scores of every test frame, keyed by specimen.
type TestScores<'a> = Vec<(&'a SpecimenRecord, Vec<ConfidenceVector>)>;

fn fit_and_score<'a>(
    ds: &'a Dataset,
    plan: &SplitPlan,
    classifier: &dyn Classifier,
) -> Result<TestScores<'a>> {
    let p = partition(ds, plan)?;
    let scorer: Box<dyn ImageScorer> =
        classifier.fit(ds.registry.names(), &p.train, &p.val, plan.training_seed())?;
    p.test
        .into_iter()
        .map(|s| {
            let v = s.frames.iter().map(|f| scorer.score(f)).collect::<Result<Vec<_>>>()?;
            Ok((s, v))
        })
        .collect()
}

/// Aggregate the selected images of each test specimen.
fn judge<F>(
    ds: &Dataset,
    repetition: usize,
    scores: &TestScores<'_>,
    rule: DecisionRule,
    mut select: F,
) -> Result<(RepetitionResult, Vec<PredictionRow>)>
where
    F: FnMut(&SpecimenRecord) -> Vec<usize>,
{
    let k = ds.num_classes();
    let names = ds.registry.names();
    let mut counts = vec![vec![0usize; k]; k];
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (s, vectors) in scores {
        let picked: Vec<ConfidenceVector> = select(s).into_iter().map(|i| vectors[i].clone()).collect();
        if picked.is_empty() {
            skipped.push(s.specimen_id.clone());
            continue;
        }
        let pred = aggregate(&s.specimen_id, rule, &picked)?;
        counts[s.label][pred.predicted] += 1;
        rows.push(PredictionRow {
            repetition,
            specimen_id: s.specimen_id.clone(),
            rule,
            predicted: names[pred.predicted].clone(),
            truth: names[s.label].clone(),
            n_images: pred.n_images,
        });
    }
    let n_test = rows.len();
    let n_correct = (0..k).map(|i| counts[i][i]).sum();
    let accuracy = if n_test > 0 { n_correct as f64 / n_test as f64 } else { 0.0 };
    if !skipped.is_empty() {
        log::warn!("repetition {repetition}: {} test specimens have no images", skipped.len());
    }
    Ok((
        RepetitionResult {
            repetition,
            accuracy,
            n_test,
            n_correct,
            confusion_counts: counts,
            skipped,
        },
        rows,
    ))
}

fn all_frames(s: &SpecimenRecord) -> Vec<usize> {
    (0..s.frames.len()).collect()
}

/// Train on each plan's training specimens, checkpoint on its validation
/// specimens and judge each test specimen from all of its images.
pub fn evaluate(
    ds: &Dataset,
    plans: &[SplitPlan],
    classifier: &dyn Classifier,
    rule: DecisionRule,
) -> Result<EvalReport> {
    if plans.is_empty() {
        return Err(Error::Empty("split plans"));
    }
    let reps = plans
        .par_iter()
        .map(|plan| {
            let scores = fit_and_score(ds, plan, classifier)?;
            judge(ds, plan.repetition, &scores, rule, all_frames)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_repetitions(ds, classifier.name(), rule, reps))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub mean: f64,
    pub std: f64,
}

/// Aperture rows by exposure columns, both ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub apertures: Vec<f64>,
    pub exposures: Vec<u32>,
    pub cells: Vec<Vec<Option<CellSummary>>>,
    /// `(row, column)` of the highest mean accuracy.
    pub best: (usize, usize),
    pub reports: Vec<EvalReport>,
}

impl GridReport {
    pub fn cell(&self, settings: &CameraSettings) -> Option<CellSummary> {
        let r = self.apertures.iter().position(|a| a.to_bits() == settings.aperture_f.to_bits())?;
        let c = self.exposures.iter().position(|&e| e == settings.exposure_us)?;
        self.cells[r][c]
    }
}

fn same_specimens(a: &Dataset, b: &Dataset) -> Result<()> {
    let ids = |d: &Dataset| -> BTreeMap<String, usize> {
        d.specimens.iter().map(|s| (s.specimen_id.clone(), s.label)).collect()
    };
    let (ia, ib) = (ids(a), ids(b));
    if ia != ib {
        let ka: BTreeSet<&String> = ia.keys().collect();
        let kb: BTreeSet<&String> = ib.keys().collect();
        let diff: Vec<&&String> = ka.symmetric_difference(&kb).take(5).collect();
        return Err(Error::Data(format!(
            "datasets for {} and {} do not share specimens (e.g. {diff:?})",
            a.settings, b.settings
        )));
    }
    if a.registry != b.registry {
        return Err(Error::Data("datasets use different species registries".into()));
    }
    Ok(())
}

/// One evaluation per camera setting, all on the same plans.
pub fn settings_grid(
    datasets: &[Dataset],
    plans: &[SplitPlan],
    classifier: &dyn Classifier,
    rule: DecisionRule,
) -> Result<GridReport> {
    let first = datasets.first().ok_or(Error::Empty("grid datasets"))?;
    for d in &datasets[1..] {
        same_specimens(first, d)?;
    }
    let mut seen = BTreeSet::new();
    for d in datasets {
        if !seen.insert(d.settings) {
            return Err(Error::Data(format!("setting {} appears twice", d.settings)));
        }
    }
    let reports = datasets
        .par_iter()
        .map(|d| evaluate(d, plans, classifier, rule))
        .collect::<Result<Vec<_>>>()?;

    let mut apertures: Vec<f64> = datasets.iter().map(|d| d.settings.aperture_f).collect();
    apertures.sort_by(f64::total_cmp);
    apertures.dedup_by(|a, b| a.to_bits() == b.to_bits());
    let mut exposures: Vec<u32> = datasets.iter().map(|d| d.settings.exposure_us).collect();
    exposures.sort_unstable();
    exposures.dedup();
    let mut cells = vec![vec![None; exposures.len()]; apertures.len()];
    let mut best: Option<((usize, usize), CellSummary)> = None;
    for rep in &reports {
        let r = apertures.iter().position(|a| a.to_bits() == rep.settings.aperture_f.to_bits()).expect("listed");
        let c = exposures.iter().position(|&e| e == rep.settings.exposure_us).expect("listed");
        let cell = CellSummary {
            mean: rep.mean_accuracy,
            std: rep.std_accuracy,
        };
        cells[r][c] = Some(cell);
    }
    // scan in layout order so ties go to the first cell
    for (r, row) in cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            if let Some(cell) = cell {
                let better = match best {
                    None => true,
                    Some((_, b)) => cell.mean > b.mean || (cell.mean == b.mean && cell.std < b.std),
                };
                if better {
                    best = Some(((r, c), *cell));
                }
            }
        }
    }
    let mut reports = reports;
    reports.sort_by_key(|r| r.settings);
    Ok(GridReport {
        apertures,
        exposures,
        cells,
        best: best.expect("at least one cell").0,
        reports,
    })
}

/// Which frames each ablation arm keeps.
#[derive(Clone, Debug)]
pub struct EqualizedSets {
    pub camera1: Dataset,
    pub camera2: Dataset,
    pub both: Dataset,
    /// Specimens lacking images from one camera.
    pub excluded: Vec<String>,
}

/// `m` of `n` indices without replacement, kept in their original order;
/// all of them when `m >= n`.
fn subsample(n: usize, m: usize, seed: u64) -> Vec<usize> {
    if m >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}

/// Per specimen with `n1` and `n2` images from the two cameras, keep
/// `m = min(n1, n2)` images in each of the three arms.
pub fn equalize_cameras(ds: &Dataset, seed: u64) -> EqualizedSets {
    let mut excluded = Vec::new();
    let mut arms: [Vec<SpecimenRecord>; 3] = Default::default();
    for s in &ds.specimens {
        let cam1: Vec<&FrameImage> = s.frames_from(CameraId::One).collect();
        let cam2: Vec<&FrameImage> = s.frames_from(CameraId::Two).collect();
        let m = cam1.len().min(cam2.len());
        if m == 0 {
            log::warn!(
                "specimen `{}` has {}/{} images per camera; excluded from ablation",
                s.specimen_id,
                cam1.len(),
                cam2.len()
            );
            excluded.push(s.specimen_id.clone());
            continue;
        }
        let tag = string_tag(&s.specimen_id);
        let pick = |frames: &[&FrameImage], arm: u64| -> Vec<FrameImage> {
            subsample(frames.len(), m, derive_seed(seed, &[arm, tag]))
                .into_iter()
                .map(|i| frames[i].clone())
                .collect()
        };
        let all: Vec<&FrameImage> = s.frames.iter().collect();
        for (arm, frames) in [pick(&cam1, 1), pick(&cam2, 2), pick(&all, 3)].into_iter().enumerate() {
            arms[arm].push(SpecimenRecord::new(s.specimen_id.clone(), s.label, frames, s.dry_weight_g));
        }
    }
    let [a, b, c] = arms.map(|specimens| Dataset {
        settings: ds.settings,
        registry: ds.registry.clone(),
        specimens,
    });
    EqualizedSets {
        camera1: a,
        camera2: b,
        both: c,
        excluded,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub camera1: EvalReport,
    pub camera2: EvalReport,
    pub both: EvalReport,
    pub excluded: Vec<String>,
    /// Images in each arm (camera 1, camera 2, both); always equal.
    pub images: [usize; 3],
}

/// Evaluate camera 1 only, camera 2 only and both cameras with equal image
/// counts per specimen, on the same plans.
pub fn camera_ablation(
    ds: &Dataset,
    plans: &[SplitPlan],
    classifier: &dyn Classifier,
    rule: DecisionRule,
    seed: u64,
) -> Result<AblationReport> {
    let sets = equalize_cameras(ds, seed);
    let plans: Vec<SplitPlan> = plans
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.assignment.retain(|id, _| !sets.excluded.contains(id));
            p
        })
        .collect();
    let images = [&sets.camera1, &sets.camera2, &sets.both].map(Dataset::num_images);
    let arms = [&sets.camera1, &sets.camera2, &sets.both];
    let mut reports = arms
        .par_iter()
        .map(|d| evaluate(d, &plans, classifier, rule))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    Ok(AblationReport {
        camera1: reports.next().expect("three arms"),
        camera2: reports.next().expect("three arms"),
        both: reports.next().expect("three arms"),
        excluded: sets.excluded,
        images,
    })
}

/// `None` stands for no cap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmaxPoint {
    pub n_max: Option<usize>,
    pub mean: f64,
    pub std: f64,
    pub accuracies: Vec<f64>,
}

/// Accuracy as a function of the number of test images per specimen. The
/// classifier is trained once per plan; only the test images are capped.
pub fn nmax_sweep(
    ds: &Dataset,
    plans: &[SplitPlan],
    classifier: &dyn Classifier,
    rule: DecisionRule,
    n_max: &[Option<usize>],
    seed: u64,
) -> Result<Vec<NmaxPoint>> {
    if n_max.contains(&Some(0)) {
        return Err(Error::Parameter("N_max values must be positive".into()));
    }
    if plans.is_empty() {
        return Err(Error::Empty("split plans"));
    }
    let per_plan: Vec<Vec<f64>> = plans
        .par_iter()
        .map(|plan| {
            let scores = fit_and_score(ds, plan, classifier)?;
            n_max
                .iter()
                .map(|&cap| {
                    let select = |s: &SpecimenRecord| match cap {
                        None => all_frames(s),
                        Some(m) => subsample(
                            s.frames.len(),
                            m,
                            derive_seed(seed, &[plan.repetition as u64, m as u64, string_tag(&s.specimen_id)]),
                        ),
                    };
                    Ok(judge(ds, plan.repetition, &scores, rule, select)?.0.accuracy)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(n_max
        .iter()
        .enumerate()
        .map(|(i, &cap)| {
            let accuracies: Vec<f64> = per_plan.iter().map(|a| a[i]).collect();
            let (mean, std) = mean_and_sample_std(&accuracies);
            NmaxPoint {
                n_max: cap,
                mean,
                std,
                accuracies,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{BaselineClassifier, FixedScores, TrainSchedule};
    use crate::dataset::fixtures::{frame, specimen};
    use crate::dataset::LabelRegistry;

    /// Fixed scores that say "class `label`" for specimens whose id is in
    /// `right`, and the other class otherwise.
    fn scored_dataset(n_per_class: usize, wrong: &[&str]) -> (Dataset, FixedScores) {
        let mut ds = Dataset::new(CameraSettings::default(), LabelRegistry::new(["A", "B"]).unwrap());
        let mut vectors = BTreeMap::new();
        for label in 0..2 {
            for i in 0..n_per_class {
                let s = specimen(&format!("{label}-{i:02}"), label, 4);
                let predicted = if wrong.contains(&s.specimen_id.as_str()) { 1 - label } else { label };
                for f in &s.frames {
                    let mut p = vec![0.2, 0.2];
                    p[predicted] = 0.8;
                    vectors.insert(f.image_id.clone(), ConfidenceVector::new(p).unwrap());
                }
                ds.specimens.push(s);
            }
        }
        (ds, FixedScores::new(vectors))
    }

    #[test]
    fn perfect_scores_give_identity_confusion() {
        let (ds, scores) = scored_dataset(10, &[]);
        let plans = make_splits(&ds, 10, 1, &SplitFractions::default()).unwrap();
        let r = evaluate(&ds, &plans, &scores, DecisionRule::MajorityVote).unwrap();
        assert_eq!(r.mean_accuracy, 1.0);
        assert_eq!(r.std_accuracy, 0.0);
        assert_eq!(r.confusion, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(r.predictions.len(), 10 * 4);
    }

    #[test]
    fn accuracy_equals_weighted_trace_and_rows_sum_to_one() {
        let (ds, scores) = scored_dataset(10, &["0-01", "0-04", "1-07", "0-09"]);
        let plans = make_splits(&ds, 10, 3, &SplitFractions::default()).unwrap();
        let r = evaluate(&ds, &plans, &scores, DecisionRule::WeightedSum).unwrap();
        for rep in &r.per_repetition {
            assert!((rep.accuracy - weighted_trace(&rep.confusion_counts)).abs() < 1e-12);
        }
        for row in &r.confusion {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let (m, s) = mean_and_sample_std(&r.accuracies);
        assert_eq!((m, s), (r.mean_accuracy, r.std_accuracy));
        assert!(r.mean_accuracy < 1.0);
    }

    #[test]
    fn grid_requires_shared_specimens() {
        let (ds, scores) = scored_dataset(10, &[]);
        let plans = make_splits(&ds, 2, 1, &SplitFractions::default()).unwrap();
        let mut other = ds.clone();
        other.settings = CameraSettings::new(1000, 3.8);
        other.specimens.pop();
        assert!(settings_grid(&[ds.clone(), other], &plans, &scores, DecisionRule::MajorityVote).is_err());
    }

    #[test]
    fn identical_cells_give_identical_reports_in_table_layout() {
        let (ds, scores) = scored_dataset(10, &["1-03"]);
        let plans = make_splits(&ds, 3, 1, &SplitFractions::default()).unwrap();
        let cells: Vec<Dataset> = CameraSettings::pilot_grid()
            .into_iter()
            .rev()
            .map(|s| Dataset { settings: s, ..ds.clone() })
            .collect();
        let g = settings_grid(&cells, &plans, &scores, DecisionRule::MajorityVote).unwrap();
        assert_eq!(g.apertures, vec![3.8, 8.0, 16.0]);
        assert_eq!(g.exposures, vec![1000, 1500, 2000]);
        let first = g.cells[0][0].unwrap();
        assert!(g.cells.iter().flatten().all(|c| c.unwrap() == first));
        assert_eq!(g.best, (0, 0));
        for r in &g.reports[1..] {
            assert_eq!(r.accuracies, g.reports[0].accuracies);
            assert_eq!(r.confusion, g.reports[0].confusion);
        }
    }

    #[test]
    fn equalized_arms_have_equal_counts() {
        let mut ds = Dataset::new(CameraSettings::default(), LabelRegistry::new(["A", "B"]).unwrap());
        let mk = |id: &str, n1: usize, n2: usize| {
            let frames = (0..n1)
                .map(|k| frame(&format!("{id}_c1_{k}"), CameraId::One, 100))
                .chain((0..n2).map(|k| frame(&format!("{id}_c2_{k}"), CameraId::Two, 100)))
                .collect();
            SpecimenRecord::new(id, 0, frames, None)
        };
        ds.specimens = vec![mk("a", 10, 6), mk("b", 3, 7), mk("c", 4, 0)];
        let sets = equalize_cameras(&ds, 5);
        assert_eq!(sets.excluded, vec!["c".to_owned()]);
        for arm in [&sets.camera1, &sets.camera2, &sets.both] {
            let counts: Vec<usize> = arm.specimens.iter().map(|s| s.frames.len()).collect();
            assert_eq!(counts, vec![6, 3]);
        }
        assert!(sets.camera1.specimens[0].frames.iter().all(|f| f.camera == CameraId::One));
        assert!(sets.camera2.specimens[1].frames.iter().all(|f| f.camera == CameraId::Two));
        assert_eq!(sets.camera2.specimens[0].frames.len(), 6);
        let ids = |d: &Dataset| -> Vec<String> {
            d.specimens.iter().flat_map(|s| s.frames.iter().map(|f| f.image_id.clone())).collect()
        };
        let again = equalize_cameras(&ds, 5);
        assert_eq!(ids(&again.both), ids(&sets.both));
    }

    #[test]
    fn uncapped_sweep_equals_evaluate() {
        let (ds, scores) = scored_dataset(10, &["0-02", "1-05"]);
        let plans = make_splits(&ds, 4, 2, &SplitFractions::default()).unwrap();
        let full = evaluate(&ds, &plans, &scores, DecisionRule::MajorityVote).unwrap();
        let curve = nmax_sweep(&ds, &plans, &scores, DecisionRule::MajorityVote, &[Some(1), Some(100), None], 0).unwrap();
        assert_eq!(curve[1].accuracies, full.accuracies);
        assert_eq!(curve[2].accuracies, full.accuracies);
        assert_eq!(curve[2].mean, full.mean_accuracy);
        assert!(nmax_sweep(&ds, &plans, &scores, DecisionRule::MajorityVote, &[Some(0)], 0).is_err());
    }

    #[test]
    fn baseline_runs_through_protocol() {
        let (ds, _) = scored_dataset(10, &[]);
        // fixture frames have no pixels or features: the classifier must say so
        let plans = make_splits(&ds, 1, 2, &SplitFractions::default()).unwrap();
        let clf = BaselineClassifier::new(TrainSchedule::default());
        assert!(evaluate(&ds, &plans, &clf, DecisionRule::MajorityVote).is_err());
    }
}
