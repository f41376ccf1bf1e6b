//! Discrete-time model of the imaging machine: sinking specimens, camera
//! triggering, and the flush valve that routes each specimen to a container.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{CameraId, CameraSettings};
use crate::error::{Error, Result};
use crate::raster::{Mask, RgbImage};
use crate::seed::derive_seed;

pub const MAX_FRAME_RATE: f64 = 100.0;

/// Frames per second per camera: `min(100, 100 * 1000 / exposure_us)`.
pub fn frame_rate(settings: &CameraSettings) -> Result<f64> {
    if settings.exposure_us == 0 {
        return Err(Error::Parameter("exposure must be positive".into()));
    }
    Ok(MAX_FRAME_RATE.min(MAX_FRAME_RATE * 1000.0 / settings.exposure_us as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkTrajectory {
    pub entry_time: f64,
    /// px/s
    pub velocity: f64,
    /// Field-of-view height in px.
    pub visible_span: f64,
    /// Absolute capture times shared by both cameras.
    pub capture_times: Vec<f64>,
}

impl SinkTrajectory {
    /// Captures at `entry + k / rate` for `k >= 1` while the specimen has
    /// travelled less than the visible span.
    pub fn new(entry_time: f64, velocity: f64, visible_span: f64, rate: f64) -> Result<Self> {
        if !(velocity > 0.0) || !velocity.is_finite() {
            return Err(Error::Parameter(format!("sinking velocity must be positive, got {velocity}")));
        }
        if !(visible_span > 0.0) || !(rate > 0.0) {
            return Err(Error::Parameter("visible span and frame rate must be positive".into()));
        }
        let mut capture_times = Vec::new();
        let mut k = 1u64;
        loop {
            let dt = k as f64 / rate;
            if dt * velocity >= visible_span {
                break;
            }
            capture_times.push(entry_time + dt);
            k += 1;
        }
        Ok(Self {
            entry_time,
            velocity,
            visible_span,
            capture_times,
        })
    }

    /// Time the specimen leaves the field of view.
    pub fn exit_time(&self) -> f64 {
        self.entry_time + self.visible_span / self.velocity
    }

    /// Fraction of the span travelled at time `t`, in `[0, 1)` inside the window.
    pub fn progress(&self, t: f64) -> f64 {
        ((t - self.entry_time) * self.velocity / self.visible_span).clamp(0.0, 1.0)
    }

    /// Closed-form count, `ceil(span / v * rate) - 1`.
    pub fn expected_frames(velocity: f64, visible_span: f64, rate: f64) -> usize {
        ((visible_span / velocity * rate).ceil() as usize).saturating_sub(1)
    }
}

/// Log-normal terminal velocity, parametrised by the median time to cross
/// the field of view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VelocityModel {
    pub median_transit_s: f64,
    pub sigma_log: f64,
}

impl Default for VelocityModel {
    fn default() -> Self {
        Self {
            median_transit_s: 0.5,
            sigma_log: 0.4,
        }
    }
}

impl VelocityModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.median_transit_s > 0.0) || !(self.sigma_log >= 0.0) {
            return Err(Error::Parameter(format!(
                "velocity model needs median transit > 0 and sigma >= 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, visible_span: f64, rng: &mut R) -> f64 {
        let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
        visible_span / self.median_transit_s * (self.sigma_log * z).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PassConfig {
    pub velocity: VelocityModel,
    /// Independent per-camera probability of losing a frame.
    pub drop_probability: [f64; 2],
    /// Fixed velocity (px/s) overriding the distribution.
    pub fixed_velocity: Option<f64>,
}

impl Default for PassConfig {
    fn default() -> Self {
        Self {
            velocity: VelocityModel::default(),
            drop_probability: [0.0, 0.0],
            fixed_velocity: None,
        }
    }
}

/// Draws a specimen as seen by one camera at a point of its descent.
pub trait PassRenderer {
    /// `(width, height)` of the raw sensor frame.
    fn sensor_size(&self) -> (u32, u32);

    /// Raw frame and true silhouette at `progress` in `[0, 1)` through the
    /// field of view. `noise_seed` is unique per capture.
    fn render(
        &self,
        camera: CameraId,
        progress: f64,
        settings: &CameraSettings,
        noise_seed: u64,
    ) -> Result<(RgbImage, Mask)>;
}

/// One raw capture from [`simulate_pass`].
#[derive(Clone, Debug)]
pub struct RawCapture {
    pub camera: CameraId,
    /// 1-based trigger index shared by the two cameras.
    pub index: usize,
    pub capture_time: f64,
    pub image: RgbImage,
    pub truth: Mask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassSummary {
    pub trajectory: SinkTrajectory,
    pub frames_per_camera: [usize; 2],
}

/// Sample the velocity and trigger times for one specimen.
pub fn sample_trajectory(
    settings: &CameraSettings,
    visible_span: f64,
    cfg: &PassConfig,
    entry_time: f64,
    seed: u64,
) -> Result<SinkTrajectory> {
    cfg.velocity.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let velocity = match cfg.fixed_velocity {
        Some(v) => v,
        None => cfg.velocity.sample(visible_span, &mut rng),
    };
    SinkTrajectory::new(entry_time, velocity, visible_span, frame_rate(settings)?)
}

/// Simulate one specimen sinking past both cameras, handing each capture to
/// `sink` as it is rendered (frames are large, so they are not collected).
pub fn simulate_pass<R, F>(
    renderer: &R,
    settings: &CameraSettings,
    cfg: &PassConfig,
    seed: u64,
    mut sink: F,
) -> Result<PassSummary>
where
    R: PassRenderer + ?Sized,
    F: FnMut(RawCapture) -> Result<()>,
{
    for p in cfg.drop_probability {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("drop probability {p} outside [0, 1)")));
        }
    }
    let (_, height) = renderer.sensor_size();
    let trajectory = sample_trajectory(settings, height as f64, cfg, 0.0, seed)?;
    let mut drops = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xd0]));
    let mut counts = [0usize; 2];
    for (i, &t) in trajectory.capture_times.iter().enumerate() {
        let progress = trajectory.progress(t);
        for (c, camera) in CameraId::BOTH.into_iter().enumerate() {
            let p = cfg.drop_probability[c];
            if p > 0.0 && drops.random::<f64>() < p {
                continue;
            }
            let noise_seed = derive_seed(seed, &[c as u64 + 1, i as u64]);
            let (image, truth) = renderer.render(camera, progress, settings, noise_seed)?;
            counts[c] += 1;
            sink(RawCapture {
                camera,
                index: i + 1,
                capture_time: t,
                image,
                truth,
            })?;
        }
    }
    Ok(PassSummary {
        trajectory,
        frames_per_camera: counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    Imaging,
    FlushOpen,
    Refilling,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceEvent {
    /// A specimen enters the cuvette.
    SpecimenDropped,
    /// The specimen has left the field of view; open the valve.
    ImagingComplete,
    /// Valve closed after flushing; ethanol is pumped back.
    FlushDone,
    RefillDone,
}

impl fmt::Display for DeviceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DeviceEvent::SpecimenDropped => "specimen_dropped",
            DeviceEvent::ImagingComplete => "imaging_complete",
            DeviceEvent::FlushDone => "flush_done",
            DeviceEvent::RefillDone => "refill_done",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceState {
    pub phase: Phase,
    pub occupancy: usize,
    pub active_container: Option<usize>,
}

impl Default for DeviceState {
    fn default() -> Self {
        Self {
            phase: Phase::Idle,
            occupancy: 0,
            active_container: None,
        }
    }
}

impl DeviceState {
    /// Apply one event, rejecting transitions the machine cannot make.
    pub fn apply(&mut self, event: DeviceEvent) -> Result<()> {
        use DeviceEvent::*;
        use Phase::*;
        let next = match (self.phase, event) {
            (Idle | Imaging, SpecimenDropped) => Imaging,
            (Imaging, ImagingComplete) => FlushOpen,
            (FlushOpen, FlushDone) => Refilling,
            (Refilling, RefillDone) => Idle,
            (phase, event) => {
                return Err(Error::IllegalTransition {
                    phase: phase.to_string(),
                    event: event.to_string(),
                })
            }
        };
        match event {
            SpecimenDropped => self.occupancy += 1,
            FlushDone => self.occupancy = 0,
            RefillDone => self.active_container = None,
            ImagingComplete => {}
        }
        self.phase = next;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoutingRule {
    ByClass {
        map: BTreeMap<String, usize>,
        default: usize,
    },
    /// Mean area at or above the threshold goes to `large`.
    BySize {
        threshold_px2: f64,
        small: usize,
        large: usize,
    },
}

/// What the router knows about the specimen in the cuvette.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingInput {
    pub specimen_id: String,
    pub predicted: String,
    pub mean_area_px2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    pub phase: Phase,
    pub event: String,
    pub container: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub entries: Vec<LogEntry>,
}

impl EventLog {
    pub fn push(&mut self, t: f64, phase: Phase, event: impl Into<String>, container: Option<usize>) {
        self.entries.push(LogEntry {
            t,
            phase,
            event: event.into(),
            container,
        });
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n").map_err(|e| Error::io("<event log>", e))?;
        }
        Ok(())
    }
}

/// Valve and pump timings in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceTiming {
    pub flush_s: f64,
    pub refill_s: f64,
}

impl Default for DeviceTiming {
    fn default() -> Self {
        Self {
            flush_s: 0.5,
            refill_s: 2.0,
        }
    }
}

/// Pick the container; an unmapped class goes to the default and is logged.
pub fn route(rule: &RoutingRule, input: &RoutingInput, t: f64, log: &mut EventLog) -> usize {
    match rule {
        RoutingRule::ByClass { map, default } => match map.get(&input.predicted) {
            Some(&c) => c,
            None => {
                log::warn!("no route for class `{}`, using container {default}", input.predicted);
                log.push(
                    t,
                    Phase::Imaging,
                    format!("unmapped_class:{}", input.predicted),
                    Some(*default),
                );
                *default
            }
        },
        RoutingRule::BySize {
            threshold_px2,
            small,
            large,
        } => {
            if input.mean_area_px2 >= *threshold_px2 {
                *large
            } else {
                *small
            }
        }
    }
}

/// Imaging → FlushOpen → Refilling → Idle, starting at time `t`.
/// Returns the container the specimen was flushed into.
pub fn flush_and_route(
    state: &mut DeviceState,
    rule: &RoutingRule,
    input: &RoutingInput,
    t: f64,
    timing: &DeviceTiming,
    log: &mut EventLog,
) -> Result<usize> {
    if state.phase != Phase::Imaging {
        return Err(Error::IllegalTransition {
            phase: state.phase.to_string(),
            event: DeviceEvent::ImagingComplete.to_string(),
        });
    }
    let container = route(rule, input, t, log);
    state.apply(DeviceEvent::ImagingComplete)?;
    state.active_container = Some(container);
    log.push(t, state.phase, DeviceEvent::ImagingComplete.to_string(), Some(container));
    let t = t + timing.flush_s;
    state.apply(DeviceEvent::FlushDone)?;
    log.push(t, state.phase, DeviceEvent::FlushDone.to_string(), Some(container));
    let t = t + timing.refill_s;
    state.apply(DeviceEvent::RefillDone)?;
    log.push(t, state.phase, DeviceEvent::RefillDone.to_string(), None);
    Ok(container)
}

/// One specimen handled by [`run_session`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionItem {
    pub input: RoutingInput,
    /// Seconds from drop until the specimen leaves the field of view.
    pub transit_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub specimen_id: String,
    pub predicted: String,
    pub container: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub assignments: Vec<Assignment>,
    pub log: EventLog,
    pub end_time: f64,
}

/// Feed specimens through the machine one at a time.
pub fn run_session(items: &[SessionItem], rule: &RoutingRule, timing: &DeviceTiming) -> Result<SessionReport> {
    let mut state = DeviceState::default();
    let mut report = SessionReport::default();
    let mut t = 0.0;
    for item in items {
        state.apply(DeviceEvent::SpecimenDropped)?;
        report.log.push(t, state.phase, DeviceEvent::SpecimenDropped.to_string(), None);
        t += item.transit_s;
        let container = flush_and_route(&mut state, rule, &item.input, t, timing, &mut report.log)?;
        t = report.log.entries.last().map_or(t, |e| e.t);
        report.assignments.push(Assignment {
            specimen_id: item.input.specimen_id.clone(),
            predicted: item.input.predicted.clone(),
            container,
        });
    }
    report.end_time = t;
    Ok(report)
}
