//! Subcommand implementations. Each reads its inputs, then (unless a dry
//! run) writes its artifacts under the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use biodiscover::aggregate::aggregate;
use biodiscover::biomass::{self, BiomassReport};
use biodiscover::classify::{
    load_external_scores, predict_image, BaselineClassifier, Classifier, FixedScores,
};
use biodiscover::dataset::{dataset_statistics, validate_dataset, CameraSettings, Dataset};
use biodiscover::devicesim::{run_session, simulate_pass, RoutingInput, RoutingRule, SessionItem};
use biodiscover::eval::{self, make_splits, Role, SplitPlan};
use biodiscover::imgproc::{calibrate as calibrate_background, outlier_screen, process_frame};
use biodiscover::imgproc::{BackgroundModel, CalibrationParams, CropConfig};
use biodiscover::manifest::{
    read_dataset, write_dataset, LoadOptions, Manifest, ManifestFrame, ManifestSpecimen, MANIFEST_FILE,
};
use biodiscover::raster::load_rgb_png;
use biodiscover::syndata::{
    calibration_frames, generate_cohort, image_id, sample_specimens, GeneratorConfig, SpecimenRenderer,
};
use biodiscover::{Confidence, Model};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, SensorKind};
use crate::Failure;

type Res<T> = Result<T, Failure>;

#[derive(Debug, Serialize)]
pub struct Outcome {
    status: &'static str,
    command: &'static str,
    dry_run: bool,
    outputs: Vec<String>,
    summary: Value,
}

impl Outcome {
    pub fn with_command(mut self, name: &'static str) -> Self {
        self.command = name;
        self
    }
}

pub struct Ctx {
    cfg: RunConfig,
    dry_run: bool,
    outputs: Vec<PathBuf>,
}

impl Ctx {
    pub fn new(cfg: RunConfig, dry_run: bool) -> Self {
        Self {
            cfg,
            dry_run,
            outputs: Vec::new(),
        }
    }

    fn out(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.cfg.paths.output.join(rel)
    }

    fn ensure_dir(&self, dir: &Path) -> Res<()> {
        if !self.dry_run {
            fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
        }
        Ok(())
    }

    /// Write (or, in a dry run, only record) `rel` under the output directory.
    fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Res<()> {
        let path = self.out(rel);
        if !self.dry_run {
            if let Some(dir) = path.parent() {
                self.ensure_dir(dir)?;
            }
            fs::write(&path, bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        }
        self.outputs.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Res<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Internal(e.to_string()))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    fn write_with<F>(&mut self, rel: &str, f: F) -> Res<()>
    where
        F: FnOnce(&mut Vec<u8>) -> biodiscover::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    fn finish(self, summary: Value) -> Res<Outcome> {
        Ok(Outcome {
            status: "ok",
            command: "",
            dry_run: self.dry_run,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            summary,
        })
    }

    fn manifest_at(dir: &Path) -> Res<Manifest> {
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(Failure::Data(format!("no {MANIFEST_FILE} in {}", dir.display())));
        }
        let m = Manifest::load(dir)?;
        let missing = m.missing_files(dir);
        if let Some(first) = missing.first() {
            return Err(Failure::Data(format!(
                "{} referenced files are missing, e.g. {}",
                missing.len(),
                first.display()
            )));
        }
        Ok(m)
    }

    fn dataset_at(dir: &Path, opts: LoadOptions) -> Res<Dataset> {
        Self::manifest_at(dir)?;
        let ds = read_dataset(dir, opts)?;
        info!("loaded {} specimens, {} images from {}", ds.specimens.len(), ds.num_images(), dir.display());
        Ok(ds)
    }

    fn dataset(&self, opts: LoadOptions) -> Res<Dataset> {
        Self::dataset_at(&self.cfg.paths.data, opts)
    }

    fn classifier(&self, ds: &Dataset) -> Res<Box<dyn Classifier>> {
        match &self.cfg.paths.scores {
            Some(p) => {
                let file = fs::File::open(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
                let scores = load_external_scores(file, ds)?;
                if !scores.rejected.is_empty() {
                    warn!("{} score rows rejected", scores.rejected.len());
                }
                if !scores.missing.is_empty() {
                    warn!("{} images have no score", scores.missing.len());
                }
                Ok(Box::new(FixedScores::from(scores)))
            }
            None => Ok(Box::new(BaselineClassifier::new(self.cfg.schedule.clone()))),
        }
    }

    fn plans(&self, ds: &Dataset) -> Res<Vec<SplitPlan>> {
        Ok(make_splits(ds, self.cfg.n_reps, self.cfg.seed, &self.cfg.split)?)
    }

    fn rule(&self) -> biodiscover::aggregate::DecisionRule {
        self.cfg.decision_rule().expect("validated")
    }
}

fn generator_config(cfg: &RunConfig) -> GeneratorConfig {
    let mut g = match cfg.generate.sensor {
        SensorKind::Full => GeneratorConfig::default(),
        SensorKind::Compact => GeneratorConfig::compact(),
    };
    g.sensor.cuvette_left = cfg.crop.cuvette_left;
    g.pass.velocity.median_transit_s = cfg.generate.median_transit_s;
    g.calibration.trigger_threshold = cfg.trigger_threshold;
    g.keep_pixels = true;
    g
}

fn calibration_params(cfg: &RunConfig) -> CalibrationParams {
    CalibrationParams {
        trigger_threshold: cfg.trigger_threshold,
        ..Default::default()
    }
}

fn save_png(img: &biodiscover::raster::RgbImage, path: &Path) -> Res<()> {
    img.save(path).map_err(|e| Failure::from(biodiscover::Error::from(e)))
}

pub fn generate(mut ctx: Ctx) -> Res<Outcome> {
    let cfg = ctx.cfg.clone();
    let (models, counts) = cfg.generate.preset_models().expect("validated");
    let gen = generator_config(&cfg);
    let settings = if cfg.generate.grid {
        CameraSettings::pilot_grid()
    } else {
        vec![cfg.camera]
    };
    let mut cells = Vec::new();
    for s in &settings {
        let rel = if cfg.generate.grid { PathBuf::from(s.key()) } else { PathBuf::new() };
        let dir = ctx.out(&rel);
        if ctx.dry_run {
            ctx.outputs.push(dir.join(MANIFEST_FILE));
            continue;
        }
        ctx.ensure_dir(&dir)?;
        let images = if cfg.generate.raw {
            write_raw_cohort(&models, &counts, s, &gen, cfg.seed, &dir)?
        } else {
            let cohort = generate_cohort(&models, &counts, s, &gen, cfg.seed)?;
            write_dataset(&cohort.dataset, &dir)?;
            ctx.write_json(rel.join("truth.json").to_str().unwrap_or("truth.json"), &cohort.truth)?;
            cohort.background.save(&dir.join("background"))?;
            cohort.dataset.num_images()
        };
        info!("{s}: {images} images written to {}", dir.display());
        ctx.outputs.push(dir.join(MANIFEST_FILE));
        cells.push(json!({"settings": s, "images": images}));
    }
    let summary = json!({"preset": cfg.generate.preset, "counts": counts, "raw": cfg.generate.raw, "cells": cells});
    ctx.finish(summary)
}

/// Uncropped sensor frames under `raw/` and empty-cuvette frames under
/// `calibration/`, with a manifest pointing at the raw frames.
fn write_raw_cohort(
    models: &[biodiscover::syndata::SpeciesModel],
    counts: &[usize],
    settings: &CameraSettings,
    gen: &GeneratorConfig,
    seed: u64,
    dir: &Path,
) -> Res<usize> {
    for sub in ["raw", "calibration"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Failure::Data(e.to_string()))?;
    }
    for (i, frame) in calibration_frames(gen, settings, seed).iter().enumerate() {
        save_png(frame, &dir.join(format!("calibration/frame_{i:03}.png")))?;
    }
    let specimens = sample_specimens(models, counts, seed)?;
    let written = specimens
        .par_iter()
        .map(|(id, label, params, weight)| {
            let renderer = SpecimenRenderer {
                params,
                sensor: &gen.sensor,
                optics: &gen.optics,
            };
            let mut frames = Vec::new();
            simulate_pass(&renderer, settings, &gen.pass, params.seed, |cap| {
                let iid = image_id(id, cap.camera, cap.index);
                let file = format!("raw/{iid}.png");
                cap.image.save(dir.join(&file))?;
                frames.push(ManifestFrame {
                    image_id: iid,
                    camera: cap.camera,
                    capture_time: cap.capture_time,
                    file,
                    mask: None,
                    silhouette_area_px2: None,
                    geometry: None,
                });
                Ok(())
            })?;
            Ok(ManifestSpecimen {
                specimen_id: id.clone(),
                species: models[*label].name.clone(),
                dry_weight_g: *weight,
                frames,
            })
        })
        .collect::<biodiscover::Result<Vec<_>>>()?;
    let images = written.iter().map(|s| s.frames.len()).sum();
    Manifest {
        settings: *settings,
        species: models.iter().map(|m| m.name.clone()).collect(),
        specimens: written,
    }
    .save(dir)?;
    Ok(images)
}

pub fn ingest(mut ctx: Ctx) -> Res<Outcome> {
    let dir = ctx.cfg.paths.data.clone();
    let manifest = Manifest::load(&dir)?;
    let missing: Vec<String> = manifest.missing_files(&dir).iter().map(|p| p.display().to_string()).collect();
    let (stats, violations) = if missing.is_empty() {
        let ds = read_dataset(&dir, LoadOptions { keep_pixels: false, raw: true })?;
        (dataset_statistics(&ds), validate_dataset(&ds))
    } else {
        (Vec::new(), Vec::new())
    };
    let ok = missing.is_empty() && violations.is_empty();
    let report = json!({
        "valid": ok,
        "settings": manifest.settings,
        "specimens": manifest.specimens.len(),
        "images": manifest.specimens.iter().map(|s| s.frames.len()).sum::<usize>(),
        "species": stats,
        "missing_files": missing,
        "violations": violations,
    });
    ctx.write_json("ingest_report.json", &report)?;
    if !ok {
        return Err(Failure::Data(format!(
            "manifest has {} missing files and {} violations",
            missing.len(),
            violations.len()
        )));
    }
    ctx.finish(json!({"specimens": report["specimens"], "images": report["images"]}))
}

pub fn calibrate(mut ctx: Ctx) -> Res<Outcome> {
    let dir = ctx.cfg.paths.data.join("calibration");
    let entries = fs::read_dir(&dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    files.sort();
    if files.len() < 2 {
        return Err(Failure::Data(format!("need at least 2 calibration frames in {}", dir.display())));
    }
    let frames = files.iter().map(|p| load_rgb_png(p)).collect::<biodiscover::Result<Vec<_>>>()?;
    let model = calibrate_background(&frames, &calibration_params(&ctx.cfg))?;
    let stem = ctx.out("background");
    if !ctx.dry_run {
        ctx.ensure_dir(&ctx.cfg.paths.output)?;
        model.save(&stem)?;
    }
    ctx.outputs.push(stem.with_extension("json"));
    ctx.outputs.push(stem.with_extension("bin"));
    let (w, h) = model.dimensions();
    ctx.finish(json!({"frames": frames.len(), "width": w, "height": h}))
}

pub fn process(mut ctx: Ctx) -> Res<Outcome> {
    let data = ctx.cfg.paths.data.clone();
    let manifest = Ctx::manifest_at(&data)?;
    let registry = manifest.registry()?;
    let stem = ctx.cfg.paths.background.clone().unwrap_or_else(|| ctx.out("background"));
    let bg = BackgroundModel::load(&stem)?;
    let crop_cfg = CropConfig {
        cuvette_left: ctx.cfg.crop.cuvette_left,
    };
    let total: usize = manifest.specimens.iter().map(|s| s.frames.len()).sum();
    if ctx.dry_run {
        ctx.outputs.push(ctx.out(MANIFEST_FILE));
        return ctx.finish(json!({"raw_frames": total}));
    }
    let specimens = manifest
        .specimens
        .par_iter()
        .map(|s| {
            let label = registry.id_of(&s.species).expect("registry from manifest");
            let mut frames = Vec::new();
            for f in &s.frames {
                let raw = load_rgb_png(&data.join(&f.file))?;
                if let Some(mut frame) = process_frame(&raw, &bg, &crop_cfg, &f.image_id, f.camera, f.capture_time)? {
                    biodiscover::classify::ensure_features(&mut frame)?;
                    frames.push(frame);
                }
            }
            Ok(biodiscover::dataset::SpecimenRecord::new(
                s.specimen_id.clone(),
                label,
                frames,
                s.dry_weight_g,
            ))
        })
        .collect::<biodiscover::Result<Vec<_>>>()?;
    let ds = Dataset {
        settings: manifest.settings,
        registry,
        specimens,
    };
    let kept = ds.num_images();
    ctx.ensure_dir(&ctx.cfg.paths.output)?;
    write_dataset(&ds, &ctx.cfg.paths.output)?;
    ctx.outputs.push(ctx.out(MANIFEST_FILE));
    info!("{kept} of {total} raw frames had a detection");
    ctx.finish(json!({"raw_frames": total, "kept": kept, "discarded": total - kept}))
}

pub fn screen(mut ctx: Ctx) -> Res<Outcome> {
    let ds = ctx.dataset(LoadOptions { keep_pixels: false, raw: true })?;
    let report = outlier_screen(&ds);
    for s in &report.skipped {
        warn!("species `{}` not screened: {}", s.species, s.reason);
    }
    ctx.write_json("outliers.json", &report)?;
    ctx.finish(json!({"flagged": report.flagged.len(), "skipped_species": report.skipped.len()}))
}

pub fn train(mut ctx: Ctx) -> Res<Outcome> {
    if ctx.cfg.paths.scores.is_some() {
        return Err(Failure::config("paths.scores", "train only applies to the built-in baseline"));
    }
    let ds = ctx.dataset(LoadOptions::default())?;
    let plans = make_splits(&ds, 1, ctx.cfg.seed, &ctx.cfg.split)?;
    let plan = &plans[0];
    if ctx.dry_run {
        for f in ["model.json", "train_log.json", "split.json"] {
            ctx.outputs.push(ctx.out(f));
        }
        return ctx.finish(Value::Null);
    }
    let pick = |role| -> Vec<&biodiscover::dataset::SpecimenRecord> {
        ds.specimens.iter().filter(|s| plan.role(&s.specimen_id) == Some(role)).collect()
    };
    let clf = BaselineClassifier::new(ctx.cfg.schedule.clone());
    let (model, log) = clf.train(ds.registry.names(), &pick(Role::Train), &pick(Role::Val), plan.training_seed())?;
    let text = model.to_json()? + "\n";
    ctx.write("model.json", text.as_bytes())?;
    ctx.write_json("train_log.json", &log)?;
    ctx.write_json("split.json", plan)?;
    ctx.finish(json!({"best_epoch": log.best_epoch, "best_val_accuracy": log.best_val_accuracy, "flags": log.flags}))
}

fn accuracy_summary(r: &eval::EvalReport) -> Value {
    json!({"mean_accuracy": r.mean_accuracy, "std_accuracy": r.std_accuracy, "repetitions": r.accuracies.len()})
}

pub fn evaluate(mut ctx: Ctx) -> Res<Outcome> {
    let ds = ctx.dataset(LoadOptions::default())?;
    let clf = ctx.classifier(&ds)?;
    let plans = ctx.plans(&ds)?;
    if ctx.dry_run {
        for f in ["eval_report.json", "predictions.csv", "confusion.csv", "splits.json"] {
            ctx.outputs.push(ctx.out(f));
        }
        return ctx.finish(Value::Null);
    }
    let report = eval::evaluate(&ds, &plans, clf.as_ref(), ctx.rule())?;
    ctx.write_json("eval_report.json", &report)?;
    ctx.write_with("predictions.csv", |b| eval::write_predictions_csv(b, &report.predictions))?;
    ctx.write_with("confusion.csv", |b| eval::write_confusion_csv(b, &report.classes, &report.confusion))?;
    ctx.write_json("splits.json", &plans)?;
    ctx.finish(accuracy_summary(&report))
}

pub fn grid(mut ctx: Ctx) -> Res<Outcome> {
    let root = ctx.cfg.paths.data.clone();
    let entries = fs::read_dir(&root).map_err(|e| Failure::Data(format!("{}: {e}", root.display())))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Failure::Data(format!("no dataset subdirectories under {}", root.display())));
    }
    let datasets = dirs
        .iter()
        .map(|d| Ctx::dataset_at(d, LoadOptions::default()))
        .collect::<Res<Vec<_>>>()?;
    let clf = ctx.classifier(&datasets[0])?;
    let plans = ctx.plans(&datasets[0])?;
    if ctx.dry_run {
        for f in ["grid.csv", "grid.md", "grid_report.json", "splits.json"] {
            ctx.outputs.push(ctx.out(f));
        }
        return ctx.finish(json!({"cells": dirs.len()}));
    }
    let report = eval::settings_grid(&datasets, &plans, clf.as_ref(), ctx.rule())?;
    ctx.write_with("grid.csv", |b| eval::write_grid_csv(b, &report))?;
    ctx.write_with("grid.md", |b| eval::write_grid_markdown(b, &report))?;
    ctx.write_json("grid_report.json", &report)?;
    ctx.write_json("splits.json", &plans)?;
    let (r, c) = report.best;
    ctx.finish(json!({
        "cells": dirs.len(),
        "best": {"aperture_f": report.apertures[r], "exposure_us": report.exposures[c], "cell": report.cells[r][c]},
    }))
}

pub fn ablate_cameras(mut ctx: Ctx) -> Res<Outcome> {
    let ds = ctx.dataset(LoadOptions::default())?;
    let clf = ctx.classifier(&ds)?;
    let plans = ctx.plans(&ds)?;
    if ctx.dry_run {
        for f in ["ablation.json", "ablation.csv"] {
            ctx.outputs.push(ctx.out(f));
        }
        return ctx.finish(Value::Null);
    }
    let report = eval::camera_ablation(&ds, &plans, clf.as_ref(), ctx.rule(), ctx.cfg.seed)?;
    ctx.write_json("ablation.json", &report)?;
    let arms = [("camera1", &report.camera1), ("camera2", &report.camera2), ("both", &report.both)];
    ctx.write_with("ablation.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["arm", "images", "mean", "std"])?;
        for (i, (name, r)) in arms.iter().enumerate() {
            w.write_record([
                name.to_string(),
                report.images[i].to_string(),
                r.mean_accuracy.to_string(),
                r.std_accuracy.to_string(),
            ])?;
        }
        w.flush().map_err(|e| biodiscover::Error::Data(e.to_string()))
    })?;
    let summary: serde_json::Map<String, Value> =
        arms.iter().map(|(n, r)| (n.to_string(), accuracy_summary(r))).collect();
    ctx.finish(json!({"arms": summary, "excluded": report.excluded.len(), "images_per_arm": report.images[0]}))
}

pub fn sweep_nmax(mut ctx: Ctx) -> Res<Outcome> {
    let ds = ctx.dataset(LoadOptions::default())?;
    let clf = ctx.classifier(&ds)?;
    let plans = ctx.plans(&ds)?;
    let caps = ctx.cfg.nmax_values().map_err(|e| Failure::Config(vec![e]))?;
    if ctx.dry_run {
        for f in ["nmax_curve.csv", "nmax_sweep.json"] {
            ctx.outputs.push(ctx.out(f));
        }
        return ctx.finish(Value::Null);
    }
    let points = eval::nmax_sweep(&ds, &plans, clf.as_ref(), ctx.rule(), &caps, ctx.cfg.seed)?;
    ctx.write_with("nmax_curve.csv", |b| eval::write_curve_csv(b, &points))?;
    ctx.write_json("nmax_sweep.json", &points)?;
    ctx.finish(json!({"points": points.len()}))
}

pub fn biomass_fit(mut ctx: Ctx) -> Res<Outcome> {
    let ds = ctx.dataset(LoadOptions { keep_pixels: false, raw: true })?;
    let report: BiomassReport = biomass::fit_all(&ds, ctx.cfg.biomass.mm2_per_px);
    for s in &report.skipped {
        warn!("species `{}` not fitted: {}", s.species, s.reason);
    }
    if report.fits.is_empty() {
        return Err(Failure::Data("no species has at least 3 weighed specimens".into()));
    }
    ctx.write_with("biomass_fits.csv", |b| biomass::write_fits_csv(b, &report))?;
    ctx.write_with("biomass_scatter.csv", |b| biomass::write_scatter_csv(b, &report))?;
    ctx.write_json("biomass_report.json", &report)?;
    let fits: serde_json::Map<String, Value> = report
        .fits
        .iter()
        .map(|(k, f)| (k.clone(), json!({"r_squared": f.r_squared, "slope_p_value": f.slope_p_value})))
        .collect();
    ctx.finish(json!({"fits": fits, "skipped": report.skipped.len()}))
}

/// Route every specimen: predicted by the model (or external scores) when
/// one is given, otherwise by its recorded species.
pub fn simulate(mut ctx: Ctx) -> Res<Outcome> {
    let ds = ctx.dataset(LoadOptions::default())?;
    let names = ds.registry.names().to_vec();
    let rule = ctx.rule();
    let model = match &ctx.cfg.paths.model {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            let m = Model::from_json(&text)?;
            if m.classes != names {
                return Err(Failure::Data("model classes do not match the dataset's species".into()));
            }
            Some(m)
        }
        None => None,
    };
    let scores = match (&model, &ctx.cfg.paths.scores) {
        (None, Some(_)) => Some(ctx.classifier(&ds)?.fit(&names, &[], &[], 0)?),
        _ => None,
    };
    if model.is_none() && scores.is_none() {
        info!("no model or scores given; routing by recorded species");
    }
    let items = ds
        .specimens
        .iter()
        .map(|s| {
            let vectors = |score: &dyn Fn(&biodiscover::dataset::FrameImage) -> biodiscover::Result<Confidence>| {
                s.frames.iter().map(score).collect::<biodiscover::Result<Vec<_>>>()
            };
            let predicted = match (&model, &scores) {
                (Some(m), _) if !s.frames.is_empty() => {
                    let v = vectors(&|f| predict_image(m, f))?;
                    names[aggregate(&s.specimen_id, rule, &v)?.predicted].clone()
                }
                (None, Some(sc)) if !s.frames.is_empty() => {
                    let v = vectors(&|f| sc.score(f))?;
                    names[aggregate(&s.specimen_id, rule, &v)?.predicted].clone()
                }
                _ => names[s.label].clone(),
            };
            Ok(SessionItem {
                input: RoutingInput {
                    specimen_id: s.specimen_id.clone(),
                    predicted,
                    mean_area_px2: s.mean_area_px2,
                },
                transit_s: s.frames.iter().map(|f| f.capture_time).fold(0.0, f64::max),
            })
        })
        .collect::<Res<Vec<_>>>()?;
    let routing = ctx.cfg.simulate.routing.clone().unwrap_or_else(|| RoutingRule::ByClass {
        map: names.iter().enumerate().map(|(i, n)| (n.clone(), i + 1)).collect(),
        default: 0,
    });
    let session = run_session(&items, &routing, &ctx.cfg.simulate.timing)?;
    ctx.write_with("events.jsonl", |b| session.log.write_jsonl(b))?;
    let correct = session
        .assignments
        .iter()
        .zip(&ds.specimens)
        .filter(|(a, s)| a.predicted == names[s.label])
        .count();
    let report = json!({
        "routing": routing,
        "timing": ctx.cfg.simulate.timing,
        "assignments": session.assignments,
        "end_time": session.end_time,
    });
    ctx.write_json("session.json", &report)?;
    ctx.finish(json!({"specimens": items.len(), "correct_predictions": correct, "end_time": session.end_time}))
}
