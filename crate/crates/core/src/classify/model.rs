//! Multinomial logistic regression (linear layer + softmax).

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `K x D` weights and `K` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LinearSoftmax<T: Scalar = f64> {
    pub num_classes: usize,
    pub dim: usize,
    /// Row-major, one row per class.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LinearSoftmax<T> {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            num_classes,
            dim,
            weights: vec![T::zero(); num_classes * dim],
            bias: vec![T::zero(); num_classes],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn logits(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.num_classes)
            .map(|k| {
                let row = &self.weights[k * self.dim..(k + 1) * self.dim];
                row.iter().zip(x).map(|(&w, &v)| w * v).sum::<T>() + self.bias[k]
            })
            .collect()
    }

    pub fn probabilities(&self, x: &[T]) -> Vec<T> {
        softmax(&self.logits(x))
    }

    pub fn predict(&self, x: &[T]) -> Result<ConfidenceVector<T>> {
        ConfidenceVector::new(self.probabilities(x))
    }

    /// Mean cross-entropy over `(x, label)` pairs.
    pub fn loss<'a, I>(&self, batch: I) -> T
    where
        I: IntoIterator<Item = (&'a [T], usize)>,
    {
        let mut total = T::zero();
        let mut n = 0usize;
        for (x, y) in batch {
            let z = self.logits(x);
            let max = z.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = z.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            total = total + lse - z[y];
            n += 1;
        }
        total / T::from_usize_lossy(n.max(1))
    }

    /// Gradient of [`Self::loss`] as `(d weights, d bias)`.
    pub fn gradient<'a, I>(&self, batch: I) -> (Vec<T>, Vec<T>)
    where
        I: IntoIterator<Item = (&'a [T], usize)>,
    {
        let mut gw = vec![T::zero(); self.weights.len()];
        let mut gb = vec![T::zero(); self.bias.len()];
        let mut n = 0usize;
        for (x, y) in batch {
            let p = self.probabilities(x);
            for k in 0..self.num_classes {
                let delta = p[k] - if k == y { T::one() } else { T::zero() };
                gb[k] = gb[k] + delta;
                let row = &mut gw[k * self.dim..(k + 1) * self.dim];
                for (g, &v) in row.iter_mut().zip(x) {
                    *g = *g + delta * v;
                }
            }
            n += 1;
        }
        let inv = T::one() / T::from_usize_lossy(n.max(1));
        for g in gw.iter_mut().chain(gb.iter_mut()) {
            *g = *g * inv;
        }
        (gw, gb)
    }

    /// Plain gradient step.
    pub fn step(&mut self, grad: &(Vec<T>, Vec<T>), lr: T) {
        for (w, &g) in self.weights.iter_mut().zip(&grad.0) {
            *w = *w - lr * g;
        }
        for (b, &g) in self.bias.iter_mut().zip(&grad.1) {
            *b = *b - lr * g;
        }
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.weights.len() != self.num_classes * self.dim || self.bias.len() != self.num_classes
        {
            return Err(Error::Data(format!(
                "model shape mismatch: {} weights, {} biases for {}x{}",
                self.weights.len(),
                self.bias.len(),
                self.num_classes,
                self.dim
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_is_uniform() {
        let m = LinearSoftmax::<f64>::zeros(4, 3);
        let p = m.predict(&[1.0, -2.0, 0.5]).unwrap();
        assert!(p.probs().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn binary_closed_form() {
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-9);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn shift_invariance() {
        let z = [0.3f64, -1.2, 4.0, 2.2];
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.4).collect();
        for (a, b) in softmax(&z).iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
        // large logits stay finite
        let p = softmax(&[1000.0f64, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..5 {
            let (k, d, n) = (3 + trial % 3, 4 + trial, 7);
            let mut m = LinearSoftmax::<f64>::zeros(k, d);
            for w in m.weights.iter_mut().chain(m.bias.iter_mut()) {
                *w = rng.random_range(-1.0..1.0);
            }
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let batch = || xs.iter().map(Vec::as_slice).zip(ys.iter().copied());
            let (gw, gb) = m.gradient(batch());
            let h = 1e-5;
            let analytic: Vec<f64> = gw.iter().chain(&gb).copied().collect();
            for (i, &g) in analytic.iter().enumerate() {
                let mut plus = m.clone();
                let mut minus = m.clone();
                if i < gw.len() {
                    plus.weights[i] += h;
                    minus.weights[i] -= h;
                } else {
                    plus.bias[i - gw.len()] += h;
                    minus.bias[i - gw.len()] -= h;
                }
                let numeric = (plus.loss(batch()) - minus.loss(batch())) / (2.0 * h);
                let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-8);
                assert!(rel <= 1e-4, "param {i}: {g} vs {numeric} (rel {rel})");
            }
        }
    }

    #[test]
    fn f32_model_predicts_valid_vectors() {
        let mut m = LinearSoftmax::<f32>::zeros(3, 2);
        m.weights = vec![1.0, -1.0, 0.5, 0.5, -2.0, 3.0];
        let p = m.predict(&[0.2, 0.9]).unwrap();
        assert!((p.probs().iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
}
