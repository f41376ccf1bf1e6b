//! Hand-crafted image descriptor used by the baseline classifier.
//!
//! Layout (30 values): mean R, G, B; 8-bin histograms of R, G, B;
//! silhouette area fraction; bbox aspect ratio (height / width); fill ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::ClassifierInput;

pub const FEATURE_DIM: usize = 30;
pub const HIST_BINS: usize = 8;

const HIST_OFFSET: usize = 3;
const AREA_INDEX: usize = HIST_OFFSET + 3 * HIST_BINS;
const ASPECT_INDEX: usize = AREA_INDEX + 1;
const FILL_INDEX: usize = AREA_INDEX + 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn means(&self) -> &[f64] {
        &self.0[..HIST_OFFSET]
    }

    /// Histogram of channel `c` (0 = R).
    pub fn histogram(&self, c: usize) -> &[f64] {
        let start = HIST_OFFSET + c * HIST_BINS;
        &self.0[start..start + HIST_BINS]
    }

    pub fn area(&self) -> f64 {
        self.0[AREA_INDEX]
    }

    pub fn aspect(&self) -> f64 {
        self.0[ASPECT_INDEX]
    }

    pub fn fill(&self) -> f64 {
        self.0[FILL_INDEX]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extraction {
    pub features: FeatureVector,
    /// The mask was empty: colour statistics cover the whole image and the
    /// geometric entries are zero.
    pub degenerate: bool,
}

/// Histogram bin of a value in `[0, 1]`; bins split the interval evenly.
pub fn hist_bin(v: f32) -> usize {
    ((v.clamp(0.0, 1.0) * HIST_BINS as f32) as usize).min(HIST_BINS - 1)
}

pub fn extract_features(input: &ClassifierInput) -> Extraction {
    let side = input.side;
    let mask = &input.mask;
    let degenerate = mask.count() == 0;
    let mut f = [0f64; FEATURE_DIM];
    let mut n = 0usize;
    let (mut top, mut bottom, mut left, mut right) = (u32::MAX, 0u32, u32::MAX, 0u32);
    for y in 0..side {
        for x in 0..side {
            if !degenerate && !mask.get(x, y) {
                continue;
            }
            n += 1;
            let px = input.pixel(x, y);
            for c in 0..3 {
                f[c] += px[c] as f64;
                f[HIST_OFFSET + c * HIST_BINS + hist_bin(px[c])] += 1.0;
            }
            top = top.min(y);
            bottom = bottom.max(y);
            left = left.min(x);
            right = right.max(x);
        }
    }
    let nf = n.max(1) as f64;
    for v in &mut f[..AREA_INDEX] {
        *v /= nf;
    }
    if !degenerate {
        let bw = (right - left + 1) as f64;
        let bh = (bottom - top + 1) as f64;
        f[AREA_INDEX] = n as f64 / (side as f64 * side as f64);
        f[ASPECT_INDEX] = bh / bw;
        f[FILL_INDEX] = n as f64 / (bw * bh);
    }
    Extraction {
        features: FeatureVector(f),
        degenerate,
    }
}

/// Per-dimension standardisation frozen at training time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fit on training features. Constant dimensions get unit scale.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a FeatureVector>) -> Result<Self> {
        let rows: Vec<&FeatureVector> = features.into_iter().collect();
        if rows.is_empty() {
            return Err(Error::Empty("training features"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0f64; FEATURE_DIM];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.0.iter()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = vec![0f64; FEATURE_DIM];
        for r in &rows {
            for ((s, m), v) in std.iter_mut().zip(&mean).zip(r.0.iter()) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; FEATURE_DIM],
            std: vec![1.0; FEATURE_DIM],
        }
    }

    pub fn apply(&self, f: &FeatureVector) -> [f64; FEATURE_DIM] {
        let mut out = [0f64; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            out[i] = (f.0[i] - self.mean[i]) / self.std[i];
        }
        out
    }
}
