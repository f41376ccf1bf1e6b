use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on `|sum - 1|` for an accepted probability vector: 1e-9, widened
/// only when the scalar type cannot resolve that (f32).
pub fn sum_tolerance<T: Scalar>(k: usize) -> T {
    let eps_bound = T::epsilon() * T::from_usize_lossy(4 * k.max(1));
    eps_bound.max(T::lit(1e-9))
}

/// Per-image class probabilities: entries in `[0, 1]` summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceVector<T = f64> {
    probs: Vec<T>,
}

impl<T: Scalar> ConfidenceVector<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        Self::check(&probs, sum_tolerance::<T>(probs.len()))?;
        Ok(Self { probs })
    }

    /// Accept a vector whose sum is within `tolerance` of one and rescale it
    /// to sum to one exactly (up to rounding).
    pub fn renormalized(probs: Vec<T>, tolerance: T) -> Result<Self> {
        Self::check(&probs, tolerance)?;
        let total: T = probs.iter().copied().sum();
        Self::new(probs.into_iter().map(|p| p / total).collect())
    }

    fn check(probs: &[T], tolerance: T) -> Result<()> {
        if probs.is_empty() {
            return Err(Error::Empty("confidence vector"));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p >= T::zero() && p <= T::one()))
        {
            return Err(Error::Data(format!("probability {i} = {p} outside [0, 1]")));
        }
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs() > tolerance {
            return Err(Error::Data(format!("probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Self {
        let p = T::one() / T::from_usize_lossy(k);
        Self { probs: vec![p; k] }
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn max(&self) -> T {
        self.probs
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max)
    }

    pub fn argmax(&self) -> usize {
        crate::scalar::argmax(&self.probs).unwrap_or(0)
    }

    pub fn into_vec(self) -> Vec<T> {
        self.probs
    }
}
