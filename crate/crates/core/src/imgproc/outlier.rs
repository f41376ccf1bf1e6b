//! Crude per-species colour screen: specimens whose mean R, G or B lies more
//! than three standard deviations from their species average are listed for
//! manual review. Nothing is removed automatically.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SpecimenRecord};
use crate::scalar::mean_and_sample_std;

pub const SIGMA_LIMIT: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlaggedSpecimen {
    pub specimen_id: String,
    pub species: String,
    pub channels: Vec<Channel>,
    /// Signed deviation in standard deviations, per R, G, B.
    pub z_scores: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedSpecies {
    pub species: String,
    pub specimens: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub flagged: Vec<FlaggedSpecimen>,
    pub skipped: Vec<SkippedSpecies>,
}

/// Mean of the per-frame channel means, `None` without frames.
pub fn specimen_channel_means(s: &SpecimenRecord) -> Option<[f64; 3]> {
    if s.frames.is_empty() {
        return None;
    }
    let mut acc = [0f64; 3];
    for f in &s.frames {
        for c in 0..3 {
            acc[c] += f.channel_means[c];
        }
    }
    let n = s.frames.len() as f64;
    Some([acc[0] / n, acc[1] / n, acc[2] / n])
}

/// Strictly beyond the limit; a value exactly at 3 sigma is kept.
pub fn is_outlier(value: f64, mean: f64, std: f64) -> bool {
    std > 0.0 && (value - mean).abs() > SIGMA_LIMIT * std
}

pub fn outlier_screen(ds: &Dataset) -> OutlierReport {
    let mut report = OutlierReport::default();
    for (label, species) in ds.registry.names().iter().enumerate() {
        let members: Vec<(&SpecimenRecord, [f64; 3])> = ds
            .specimens
            .iter()
            .filter(|s| s.label == label)
            .filter_map(|s| specimen_channel_means(s).map(|m| (s, m)))
            .collect();
        if members.len() < 2 {
            report.skipped.push(SkippedSpecies {
                species: species.clone(),
                specimens: members.len(),
                reason: "fewer than 2 specimens with frames".into(),
            });
            continue;
        }
        let mut stats = [(0f64, 0f64); 3];
        for (c, st) in stats.iter_mut().enumerate() {
            let vals: Vec<f64> = members.iter().map(|(_, m)| m[c]).collect();
            *st = mean_and_sample_std(&vals);
        }
        for (s, m) in &members {
            let channels: Vec<Channel> = Channel::ALL
                .iter()
                .enumerate()
                .filter(|(c, _)| is_outlier(m[*c], stats[*c].0, stats[*c].1))
                .map(|(_, &ch)| ch)
                .collect();
            if channels.is_empty() {
                continue;
            }
            let z = |c: usize| {
                if stats[c].1 > 0.0 {
                    (m[c] - stats[c].0) / stats[c].1
                } else {
                    0.0
                }
            };
            report.flagged.push(FlaggedSpecimen {
                specimen_id: s.specimen_id.clone(),
                species: species.clone(),
                channels,
                z_scores: [z(0), z(1), z(2)],
            });
        }
    }
    report
        .flagged
        .sort_by(|a, b| a.specimen_id.cmp(&b.specimen_id));
    report
}
