//! Specimen-level train/validation/test splits, stratified per species.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, string_tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Val,
    Test,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Train, Role::Val, Role::Test];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config(format!("split fractions must lie in [0, 1], got {a:?}")));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` specimens. Leftovers go to the
    /// largest fractional parts; ties favour train, then val, then test.
    pub fn bucket_counts(&self, n: usize) -> [usize; 3] {
        let quotas = self.as_array().map(|f| f * n as f64);
        let mut counts = quotas.map(|q| (q + 1e-9).floor() as usize);
        let mut left = n.saturating_sub(counts.iter().sum());
        let mut order = [0usize, 1, 2];
        // compared on a 1e-9 grid so that float noise cannot break exact ties
        let frac = |i: usize| ((quotas[i] - counts[i] as f64) * 1e9).round();
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub repetition: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, Role>,
}

impl SplitPlan {
    pub fn role(&self, specimen_id: &str) -> Option<Role> {
        self.assignment.get(specimen_id).copied()
    }

    /// Sorted ids with the given role.
    pub fn ids(&self, role: Role) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &r)| r == role)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Seed for the training run of this repetition.
    pub fn training_seed(&self) -> u64 {
        derive_seed(self.seed, &[0x7a1, self.repetition as u64])
    }
}

/// Plans for `n_reps` repetitions. Specimen ids are sorted before the
/// seeded shuffle, so any dataset with the same ids and labels gets
/// identical plans.
pub fn make_splits(
    ds: &Dataset,
    n_reps: usize,
    seed: u64,
    fractions: &SplitFractions,
) -> Result<Vec<SplitPlan>> {
    fractions.validate()?;
    if n_reps == 0 {
        return Err(Error::Config("n_reps must be at least 1".into()));
    }
    let mut by_species: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for s in &ds.specimens {
        by_species.entry(s.label).or_default().push(&s.specimen_id);
    }
    let mut counts = BTreeMap::new();
    for (&label, ids) in &mut by_species {
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("duplicate specimen ids".into()));
        }
        let c = fractions.bucket_counts(ids.len());
        let name = ds.registry.name(label).unwrap_or("?");
        if let Some(empty) = (0..3).find(|&i| c[i] == 0 && fractions.as_array()[i] > 0.0) {
            return Err(Error::InsufficientData(format!(
                "species `{name}` has {} specimens, too few for a non-empty {} set",
                ids.len(),
                Role::ALL[empty]
            )));
        }
        counts.insert(label, c);
    }
    let plans = (0..n_reps)
        .map(|rep| {
            let mut assignment = BTreeMap::new();
            for (label, ids) in &by_species {
                let name = ds.registry.name(*label).unwrap_or("");
                let mut shuffled = ids.clone();
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    seed,
                    &[rep as u64, string_tag(name)],
                ));
                shuffled.shuffle(&mut rng);
                let c = counts[label];
                for (i, id) in shuffled.into_iter().enumerate() {
                    let role = if i < c[0] {
                        Role::Train
                    } else if i < c[0] + c[1] {
                        Role::Val
                    } else {
                        Role::Test
                    };
                    assignment.insert(id.to_owned(), role);
                }
            }
            SplitPlan {
                repetition: rep,
                seed,
                assignment,
            }
        })
        .collect();
    Ok(plans)
}

/// Leakage and coverage problems of `plan` against `ds`.
pub fn check_plan(plan: &SplitPlan, ds: &Dataset) -> Vec<String> {
    let mut problems = Vec::new();
    let ids: BTreeSet<&str> = ds.specimens.iter().map(|s| s.specimen_id.as_str()).collect();
    let planned: BTreeSet<&str> = plan.assignment.keys().map(String::as_str).collect();
    for id in ids.difference(&planned) {
        problems.push(format!("specimen `{id}` has no role"));
    }
    for id in planned.difference(&ids) {
        problems.push(format!("planned specimen `{id}` not in dataset"));
    }
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for s in &ds.specimens {
        for f in &s.frames {
            if let Some(prev) = owner.insert(&f.image_id, &s.specimen_id) {
                problems.push(format!(
                    "image `{}` belongs to `{prev}` and `{}`",
                    f.image_id, s.specimen_id
                ));
            }
        }
    }
    problems
}
