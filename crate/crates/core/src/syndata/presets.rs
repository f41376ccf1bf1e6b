//! Ready-made cohorts, each returned with its default specimen counts.

use super::{diag, Gaussian, SpeciesModel, SpotModel, WeightLaw};

/// Red versus blue: trivially separable by colour.
pub fn separable_pair() -> (Vec<SpeciesModel>, Vec<usize>) {
    (
        vec![
            SpeciesModel::plain("Rubra", [0.45, 0.08, 0.08]),
            SpeciesModel::plain("Caerulea", [0.08, 0.1, 0.45]),
        ],
        vec![20, 20],
    )
}

/// Two species that differ far less than they vary.
pub fn congeners_pair() -> (Vec<SpeciesModel>, Vec<usize>) {
    let mut a = SpeciesModel::plain("Similis major", [0.30, 0.22, 0.12]);
    let mut b = SpeciesModel::plain("Similis minor", [0.305, 0.22, 0.12]);
    for m in [&mut a, &mut b] {
        m.color_cov = diag(0.0009);
    }
    b.length = Gaussian::new(108.0, 12.0);
    (vec![a, b], vec![20, 20])
}

/// Same mean colour; one species is uniform, the other light with dark
/// spots. Only texture separates them, so blur hurts.
pub fn texture_pair() -> (Vec<SpeciesModel>, Vec<usize>) {
    let mut uniform = SpeciesModel::plain("Concolor", [0.30, 0.30, 0.30]);
    let mut spotted = SpeciesModel::plain("Maculata", [0.38, 0.38, 0.38]);
    for m in [&mut uniform, &mut spotted] {
        m.color_cov = diag(0.0004);
    }
    spotted.spots = Some(SpotModel {
        count_min: 5,
        count_max: 7,
        radius_min: 0.35,
        radius_max: 0.45,
        color: [0.08, 0.08, 0.08],
        dorsal_only: false,
    });
    (vec![uniform, spotted], vec![12, 12])
}

/// Identical except for a bright marking that only camera 1 can see.
pub fn dorsal_marking_pair() -> (Vec<SpeciesModel>, Vec<usize>) {
    let plain = SpeciesModel::plain("Immaculata", [0.30, 0.25, 0.20]);
    let mut marked = SpeciesModel::plain("Signata", [0.30, 0.25, 0.20]);
    marked.spots = Some(SpotModel {
        count_min: 2,
        count_max: 3,
        radius_min: 0.4,
        radius_max: 0.5,
        color: [0.95, 0.9, 0.2],
        dorsal_only: true,
    });
    (vec![plain, marked], vec![12, 12])
}

/// Slightly different colours with strong frame-to-frame variation, so a
/// single image is a poor witness but many images are reliable.
pub fn noisy_pair() -> (Vec<SpeciesModel>, Vec<usize>) {
    let mut a = SpeciesModel::plain("Varia", [0.28, 0.22, 0.15]);
    let mut b = SpeciesModel::plain("Mutabilis", [0.38, 0.22, 0.15]);
    for m in [&mut a, &mut b] {
        m.color_cov = diag(0.0001);
        m.length = Gaussian::new(110.0, 3.0);
        m.width_ratio = Gaussian::new(0.4, 0.005);
        m.depth_ratio = Gaussian::new(0.3, 0.005);
        m.frame_color_jitter = 0.06;
        m.tumble_deg = 20.0;
    }
    (vec![a, b], vec![15, 15])
}

/// Twelve species of varied colour and size with uneven counts.
pub fn twelve_species() -> (Vec<SpeciesModel>, Vec<usize>) {
    let colors = [
        [0.10, 0.10, 0.10],
        [0.40, 0.15, 0.10],
        [0.45, 0.10, 0.05],
        [0.20, 0.20, 0.10],
        [0.25, 0.25, 0.15],
        [0.30, 0.20, 0.10],
        [0.15, 0.10, 0.05],
        [0.35, 0.30, 0.20],
        [0.30, 0.30, 0.25],
        [0.10, 0.20, 0.35],
        [0.20, 0.35, 0.15],
        [0.40, 0.35, 0.10],
    ];
    let models = colors
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut m = SpeciesModel::plain(&format!("Species {:02}", i + 1), c);
            m.length = Gaussian::new(70.0 + 10.0 * i as f64, 8.0);
            m
        })
        .collect();
    (models, vec![17, 10, 12, 20, 25, 14, 31, 18, 25, 43, 22, 30])
}

/// Three species with power-law dry weights.
pub fn weighed_trio() -> (Vec<SpeciesModel>, Vec<usize>) {
    let specs = [
        ("Parva", [0.20, 0.18, 0.10], 70.0, 0.05),
        ("Media", [0.15, 0.20, 0.12], 90.0, 0.08),
        ("Grandis", [0.25, 0.15, 0.10], 150.0, 0.1),
    ];
    let models = specs
        .iter()
        .map(|&(name, color, len, noise)| {
            let mut m = SpeciesModel::plain(name, color);
            m.length = Gaussian::new(len, len * 0.12);
            m.weight = Some(WeightLaw {
                c: 2e-7,
                exponent: 1.4,
                noise_sigma: noise,
            });
            m
        })
        .collect();
    (models, vec![20, 25, 20])
}
