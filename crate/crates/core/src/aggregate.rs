//! Specimen-level decision rules over per-image confidence vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    #[default]
    MajorityVote,
    WeightedSum,
}

impl DecisionRule {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionRule::MajorityVote => "majority",
            DecisionRule::WeightedSum => "weighted",
        }
    }
}

impl fmt::Display for DecisionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecisionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority" | "majority_vote" => Ok(DecisionRule::MajorityVote),
            "weighted" | "weighted_sum" => Ok(DecisionRule::WeightedSum),
            other => Err(Error::Config(format!(
                "unknown decision rule `{other}` (expected majority or weighted)"
            ))),
        }
    }
}

/// Outcome of a rule: the chosen class and the per-class aggregate scores
/// (vote counts for majority vote, weighted sums otherwise).
#[derive(Clone, Debug, PartialEq)]
pub struct Decision<T = f64> {
    pub predicted: usize,
    pub scores: Vec<T>,
    pub n_images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecimenPrediction<T = f64> {
    pub specimen_id: String,
    pub rule: DecisionRule,
    pub predicted: usize,
    pub scores: Vec<T>,
    pub n_images: usize,
}

fn check_input<T: Scalar>(vectors: &[ConfidenceVector<T>]) -> Result<usize> {
    let first = vectors.first().ok_or(Error::Empty("confidence vectors"))?;
    let k = first.num_classes();
    if vectors.iter().any(|v| v.num_classes() != k) {
        return Err(Error::Data("confidence vectors differ in class count".into()));
    }
    Ok(k)
}

/// Sum of `terms` in ascending order, so the result does not depend on the
/// order the images arrive in.
fn sorted_sum<T: Scalar>(mut terms: Vec<T>) -> T {
    terms.sort_by(|a, b| a.partial_cmp(b).expect("finite probabilities"));
    terms.into_iter().fold(T::zero(), |acc, t| acc + t)
}

fn summed<T: Scalar>(vectors: &[ConfidenceVector<T>], k: usize) -> Vec<T> {
    (0..k)
        .map(|c| sorted_sum(vectors.iter().map(|v| v.probs()[c]).collect()))
        .collect()
}

/// Among `candidates`, the one with the highest `total`, lowest index on ties.
fn break_tie<T: Scalar>(candidates: impl Iterator<Item = usize>, total: &[T]) -> usize {
    let mut best: Option<usize> = None;
    for c in candidates {
        match best {
            Some(b) if total[c] <= total[b] => {}
            _ => best = Some(c),
        }
    }
    best.expect("at least one candidate")
}

/// Each image votes for its most probable class; the modal class wins.
///
/// Ties inside an image and ties between vote counts are both resolved by
/// the larger probability summed over the specimen's images, then by the
/// lowest class index.
pub fn majority_vote<T: Scalar>(vectors: &[ConfidenceVector<T>]) -> Result<Decision<T>> {
    let k = check_input(vectors)?;
    let total = summed(vectors, k);
    let mut votes = vec![0usize; k];
    for v in vectors {
        let top = v.max();
        let hard = break_tie(
            v.probs()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p == top)
                .map(|(c, _)| c),
            &total,
        );
        votes[hard] += 1;
    }
    let most = *votes.iter().max().expect("k >= 1");
    let predicted = break_tie((0..k).filter(|&c| votes[c] == most), &total);
    Ok(Decision {
        predicted,
        scores: votes.iter().map(|&n| T::from_usize_lossy(n)).collect(),
        n_images: vectors.len(),
    })
}

/// Confidence-weighted sum: each image's vector is weighted by its own
/// maximum probability; the argmax of the sum wins, lowest index on ties.
pub fn weighted_sum<T: Scalar>(vectors: &[ConfidenceVector<T>]) -> Result<Decision<T>> {
    let k = check_input(vectors)?;
    let scores: Vec<T> = (0..k)
        .map(|c| sorted_sum(vectors.iter().map(|v| v.max() * v.probs()[c]).collect()))
        .collect();
    let predicted = crate::scalar::argmax(&scores).expect("k >= 1");
    Ok(Decision {
        predicted,
        scores,
        n_images: vectors.len(),
    })
}

pub fn decide<T: Scalar>(rule: DecisionRule, vectors: &[ConfidenceVector<T>]) -> Result<Decision<T>> {
    match rule {
        DecisionRule::MajorityVote => majority_vote(vectors),
        DecisionRule::WeightedSum => weighted_sum(vectors),
    }
}

pub fn aggregate<T: Scalar>(
    specimen_id: &str,
    rule: DecisionRule,
    vectors: &[ConfidenceVector<T>],
) -> Result<SpecimenPrediction<T>> {
    let d = decide(rule, vectors)?;
    Ok(SpecimenPrediction {
        specimen_id: specimen_id.to_owned(),
        rule,
        predicted: d.predicted,
        scores: d.scores,
        n_images: d.n_images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cv(p: &[f64]) -> ConfidenceVector {
        ConfidenceVector::new(p.to_vec()).unwrap()
    }

    #[test]
    fn modal_label_wins() {
        let v = [cv(&[0.8, 0.2]), cv(&[0.6, 0.4]), cv(&[0.3, 0.7])];
        let d = majority_vote(&v).unwrap();
        assert_eq!(d.predicted, 0);
        assert_eq!(d.scores, vec![2.0, 1.0]);
    }

    #[test]
    fn vote_tie_goes_to_larger_summed_probability() {
        // one vote each for A and B; summed probability A 0.8 + 0.45 = 1.25 > B 0.2 + 0.5
        let v = [cv(&[0.8, 0.2, 0.0]), cv(&[0.45, 0.5, 0.05])];
        let d = majority_vote(&v).unwrap();
        assert_eq!(d.scores, vec![1.0, 1.0, 0.0]);
        assert_eq!(d.predicted, 0);
        // same votes, B carries more total mass
        let v = [cv(&[0.55, 0.45]), cv(&[0.3, 0.7])];
        assert_eq!(majority_vote(&v).unwrap().predicted, 1);
        // votes A, B, A, C -> A by count alone
        let v = [
            cv(&[0.6, 0.4, 0.0]),
            cv(&[0.0, 0.55, 0.45]),
            cv(&[0.9, 0.0, 0.1]),
            cv(&[0.0, 0.35, 0.65]),
        ];
        assert_eq!(majority_vote(&v).unwrap().predicted, 0);
    }

    #[test]
    fn in_image_tie_uses_specimen_totals_then_index() {
        // image 1 ties A/B; totals A 0.5 + 0.1, B 0.5 + 0.9 -> image votes B
        let v = [cv(&[0.5, 0.5]), cv(&[0.1, 0.9])];
        let d = majority_vote(&v).unwrap();
        assert_eq!(d.scores, vec![0.0, 2.0]);
        // all uniform: lowest index
        let v = [cv(&[0.25; 4]), cv(&[0.25; 4])];
        assert_eq!(majority_vote(&v).unwrap().predicted, 0);
    }

    #[test]
    fn weighted_single_vector() {
        let d = weighted_sum(&[cv(&[0.7, 0.3])]).unwrap();
        assert_eq!(d.predicted, 0);
        assert!((d.scores[0] - 0.49).abs() < 1e-12);
        assert!((d.scores[1] - 0.21).abs() < 1e-12);
    }

    #[test]
    fn weighted_uniform_tie_lowest_index() {
        let third: f64 = 1.0 / 3.0;
        let u = ConfidenceVector::new(vec![third; 3]).unwrap();
        let d = weighted_sum(&[u.clone(), u]).unwrap();
        assert_eq!(d.predicted, 0);
        let expect = 2.0 * third * third;
        assert!(d.scores.iter().all(|s| (s - expect).abs() < 1e-12));
    }

    #[test]
    fn rules_can_disagree() {
        let v = [cv(&[0.9, 0.1]), cv(&[0.4, 0.6]), cv(&[0.45, 0.55])];
        assert_eq!(majority_vote(&v).unwrap().predicted, 1);
        let w = weighted_sum(&v).unwrap();
        assert_eq!(w.predicted, 0);
        assert!((w.scores[0] - 1.2975).abs() < 1e-12);
        assert!((w.scores[1] - 0.7525).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(majority_vote::<f64>(&[]).is_err());
        assert!(weighted_sum::<f64>(&[]).is_err());
    }

    #[test]
    fn works_in_f32() {
        let v: Vec<ConfidenceVector<f32>> = vec![
            ConfidenceVector::new(vec![0.9, 0.1]).unwrap(),
            ConfidenceVector::new(vec![0.4, 0.6]).unwrap(),
            ConfidenceVector::new(vec![0.45, 0.55]).unwrap(),
        ];
        assert_eq!(majority_vote(&v).unwrap().predicted, 1);
        assert_eq!(weighted_sum(&v).unwrap().predicted, 0);
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("majority".parse::<DecisionRule>().unwrap(), DecisionRule::MajorityVote);
        assert_eq!("weighted".parse::<DecisionRule>().unwrap(), DecisionRule::WeightedSum);
        assert!("median".parse::<DecisionRule>().is_err());
    }

    fn vectors(k: usize, n: usize) -> impl Strategy<Value = Vec<ConfidenceVector>> {
        prop::collection::vec(prop::collection::vec(0u32..4, k), 1..=n).prop_map(|rows| {
            rows.into_iter()
                .map(|mut r| {
                    if r.iter().all(|&x| x == 0) {
                        r[0] = 1;
                    }
                    let t: u32 = r.iter().sum();
                    ConfidenceVector::new(r.iter().map(|&x| x as f64 / t as f64).collect())
                        .unwrap()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn rules_are_permutation_invariant(v in vectors(4, 12), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = v.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(majority_vote(&v).unwrap().predicted, majority_vote(&shuffled).unwrap().predicted);
            prop_assert_eq!(weighted_sum(&v).unwrap().predicted, weighted_sum(&shuffled).unwrap().predicted);
        }

        #[test]
        fn unanimous_images_agree(v in vectors(5, 10), class in 0usize..5) {
            // force every image's argmax to `class`
            let forced: Vec<ConfidenceVector> = v.iter().map(|c| {
                let mut p: Vec<f64> = c.probs().iter().map(|x| x * 0.4).collect();
                p[class] += 0.6;
                ConfidenceVector::new(p).unwrap()
            }).collect();
            prop_assert_eq!(majority_vote(&forced).unwrap().predicted, class);
            prop_assert_eq!(weighted_sum(&forced).unwrap().predicted, class);
        }

        #[test]
        fn majority_invariant_under_argmax_preserving_transform(v in vectors(3, 9)) {
            // in-image ties are broken by summed probabilities, which the transform may reorder
            prop_assume!(v.iter().all(|c| c.probs().iter().filter(|&&p| p == c.max()).count() == 1));
            // squaring then renormalising is strictly monotone per image and keeps the argmax
            let squashed: Vec<ConfidenceVector> = v.iter().map(|c| {
                let sq: Vec<f64> = c.probs().iter().map(|x| x * x).collect();
                let t: f64 = sq.iter().sum();
                ConfidenceVector::new(sq.iter().map(|x| x / t).collect()).unwrap()
            }).collect();
            let a = majority_vote(&v).unwrap();
            let b = majority_vote(&squashed).unwrap();
            prop_assert_eq!(a.scores.clone(), b.scores.clone());
            // likewise for ties between vote counts
            let top = a.scores.iter().cloned().fold(0.0, f64::max);
            if a.scores.iter().filter(|&&s| s == top).count() == 1 {
                prop_assert_eq!(a.predicted, b.predicted);
            }
        }

        #[test]
        fn weighted_invariant_under_common_weight_scale(v in vectors(4, 8), scale in 0.1f64..10.0) {
            let d = weighted_sum(&v).unwrap();
            let scaled: Vec<f64> = d.scores.iter().map(|s| s * scale).collect();
            prop_assert_eq!(crate::scalar::argmax(&scaled).unwrap(), d.predicted);
        }
    }
}
