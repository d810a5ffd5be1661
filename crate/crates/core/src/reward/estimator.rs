//! One-hidden-layer value estimator trained by plain minibatch SGD.
//!
//! Parameters are stored flat in the serialization order:
//! hidden weights (row-major, `HIDDEN x input_dim`), hidden biases,
//! output weights, output bias.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use super::buffer::ExperienceBuffer;
use super::RewardError;
use crate::mdp::SimRng;

pub const HIDDEN: usize = 16;

const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueEstimator {
    input_dim: usize,
    params: Vec<f64>,
    learning_rate: f64,
}

impl ValueEstimator {
    /// Hidden weights uniform in [-0.1, 0.1] from `seed`; biases and the
    /// output layer start at zero, so an untrained estimator outputs 0.
    pub fn new(input_dim: usize, learning_rate: f64, seed: u64) -> Self {
        let mut rng = SimRng::seed_from_u64(seed);
        let mut params = vec![0.0; Self::param_count_for(input_dim)];
        for w in &mut params[..HIDDEN * input_dim] {
            *w = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
        }
        Self {
            input_dim,
            params,
            learning_rate,
        }
    }

    pub fn from_params(
        input_dim: usize,
        params: Vec<f64>,
        learning_rate: f64,
    ) -> Result<Self, RewardError> {
        let expected = Self::param_count_for(input_dim);
        if params.len() != expected {
            return Err(RewardError::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            input_dim,
            params,
            learning_rate,
        })
    }

    pub const fn param_count_for(input_dim: usize) -> usize {
        (input_dim + 1) * HIDDEN + HIDDEN + 1
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let d = self.input_dim;
        let (w1, rest) = self.params.split_at(HIDDEN * d);
        let (b1, rest) = rest.split_at(HIDDEN);
        let (w2, rest) = rest.split_at(HIDDEN);
        (w1, b1, w2, rest[0])
    }

    fn check_dim(&self, features: &[f64]) -> Result<(), RewardError> {
        if features.len() != self.input_dim {
            return Err(RewardError::DimensionMismatch {
                expected: self.input_dim,
                got: features.len(),
            });
        }
        Ok(())
    }

    /// Raw (unclamped) output.
    pub fn forward(&self, features: &[f64]) -> Result<f64, RewardError> {
        self.check_dim(features)?;
        Ok(self.forward_unchecked(features, &mut [0.0; HIDDEN]))
    }

    fn forward_unchecked(&self, x: &[f64], hidden: &mut [f64; HIDDEN]) -> f64 {
        let d = self.input_dim;
        let (w1, b1, w2, b2) = self.split();
        let mut out = b2;
        for j in 0..HIDDEN {
            let row = &w1[j * d..(j + 1) * d];
            let pre = b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            hidden[j] = pre.tanh();
            out += w2[j] * hidden[j];
        }
        out
    }

    /// Mean squared error over the whole buffer.
    pub fn loss(&self, buffer: &ExperienceBuffer) -> Result<f64, RewardError> {
        if buffer.is_empty() {
            return Err(RewardError::EmptyBuffer);
        }
        if buffer.dim() != self.input_dim {
            return Err(RewardError::DimensionMismatch {
                expected: self.input_dim,
                got: buffer.dim(),
            });
        }
        let mut hidden = [0.0; HIDDEN];
        let total: f64 = buffer
            .iter()
            .map(|(x, t)| {
                let e = self.forward_unchecked(x, &mut hidden) - t;
                e * e
            })
            .sum();
        Ok(total / buffer.len() as f64)
    }

    /// Gradient of the mean squared error over the selected buffer rows,
    /// accumulated into `grad` (same layout as the parameters).
    fn accumulate_gradient(&self, buffer: &ExperienceBuffer, rows: &[usize], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let d = self.input_dim;
        let (_, _, w2, _) = self.split();
        let scale = 2.0 / rows.len() as f64;
        let mut hidden = [0.0; HIDDEN];
        let (g_w1, rest) = grad.split_at_mut(HIDDEN * d);
        let (g_b1, rest) = rest.split_at_mut(HIDDEN);
        let (g_w2, g_b2) = rest.split_at_mut(HIDDEN);
        for &r in rows {
            let (x, target) = buffer.get(r);
            let out = self.forward_unchecked(x, &mut hidden);
            let d_out = scale * (out - target);
            g_b2[0] += d_out;
            for j in 0..HIDDEN {
                g_w2[j] += d_out * hidden[j];
                let d_pre = d_out * w2[j] * (1.0 - hidden[j] * hidden[j]);
                g_b1[j] += d_pre;
                for (g, v) in g_w1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += d_pre * v;
                }
            }
        }
    }

    /// Analytic gradient of [`Self::loss`] over the full buffer.
    pub fn gradient(&self, buffer: &ExperienceBuffer) -> Result<Vec<f64>, RewardError> {
        if buffer.is_empty() {
            return Err(RewardError::EmptyBuffer);
        }
        let rows: Vec<usize> = (0..buffer.len()).collect();
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_gradient(buffer, &rows, &mut grad);
        Ok(grad)
    }

    /// Shuffled minibatch SGD; returns the full-buffer loss after the last
    /// epoch.
    pub fn train(
        &mut self,
        buffer: &ExperienceBuffer,
        epochs: usize,
        batch_size: usize,
        rng: &mut SimRng,
    ) -> Result<f64, RewardError> {
        if buffer.is_empty() {
            return Err(RewardError::EmptyBuffer);
        }
        if buffer.dim() != self.input_dim {
            return Err(RewardError::DimensionMismatch {
                expected: self.input_dim,
                got: buffer.dim(),
            });
        }
        let batch_size = batch_size.max(1);
        let mut order: Vec<usize> = (0..buffer.len()).collect();
        let mut grad = vec![0.0; self.params.len()];
        for _ in 0..epochs {
            order.shuffle(rng);
            for batch in order.chunks(batch_size) {
                self.accumulate_gradient(buffer, batch, &mut grad);
                for (p, g) in self.params.iter_mut().zip(&grad) {
                    *p -= self.learning_rate * g;
                }
            }
        }
        self.loss(buffer)
    }

    /// One parameter per line, shortest round-trip decimal form.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.params.len() * 24);
        for p in &self.params {
            out.push_str(&p.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(input_dim: usize, text: &str, learning_rate: f64) -> Result<Self, RewardError> {
        let params = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| RewardError::Parse(format!("bad parameter `{tok}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_params(input_dim, params, learning_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buffer_of(rows: &[(&[f64], f64)]) -> ExperienceBuffer {
        let mut b = ExperienceBuffer::new(rows[0].0.len(), 100);
        for (x, t) in rows {
            assert!(b.record(x, *t));
        }
        b
    }

    #[test]
    fn parameter_count() {
        let e = ValueEstimator::new(4, 0.1, 0);
        assert_eq!(e.param_count(), 5 * 16 + 17);
        assert!(e.params()[..64].iter().all(|w| w.abs() <= 0.1));
        assert!(e.params()[64..].iter().all(|w| *w == 0.0));
    }

    #[test]
    fn untrained_output_is_zero() {
        let e = ValueEstimator::new(4, 0.1, 3);
        assert_eq!(e.forward(&[0.3, -0.2, 0.9, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let e = ValueEstimator::new(4, 0.1, 3);
        assert!(matches!(
            e.forward(&[1.0, 2.0]),
            Err(RewardError::DimensionMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut e = ValueEstimator::new(2, 0.0, 5);
        e.params_mut()[HIDDEN * 2 + HIDDEN] = 0.3;
        let before = e.clone();
        let buf = buffer_of(&[(&[0.1, 0.2], 1.0), (&[0.5, -0.4], -0.5)]);
        let loss0 = e.loss(&buf).unwrap();
        let mut rng = SimRng::seed_from_u64(1);
        let loss1 = e.train(&buf, 10, 1, &mut rng).unwrap();
        assert_eq!(e, before);
        assert_eq!(loss0, loss1);
    }

    #[test]
    fn empty_buffer_is_an_error() {
        let mut e = ValueEstimator::new(2, 0.1, 5);
        let buf = ExperienceBuffer::new(2, 10);
        let mut rng = SimRng::seed_from_u64(1);
        assert!(matches!(
            e.train(&buf, 1, 1, &mut rng),
            Err(RewardError::EmptyBuffer)
        ));
    }

    #[test]
    fn fits_a_constant_target() {
        let f = [0.25, 0.5, -0.125, 0.75];
        let rows: Vec<(&[f64], f64)> = (0..32).map(|_| (&f[..], 0.5)).collect();
        let buf = buffer_of(&rows);
        let mut e = ValueEstimator::new(4, 0.05, 11);
        let mut rng = SimRng::seed_from_u64(2);
        e.train(&buf, 200, 8, &mut rng).unwrap();
        let pred = e.forward(&f).unwrap();
        assert!((pred - 0.5).abs() < 0.05, "{pred}");
    }

    #[test]
    fn text_round_trip() {
        let mut e = ValueEstimator::new(3, 0.1, 8);
        e.params_mut()[70] = -1.0 / 3.0;
        let back = ValueEstimator::from_text(3, &e.to_text(), 0.1).unwrap();
        assert_eq!(e, back);
        assert!(ValueEstimator::from_text(4, &e.to_text(), 0.1).is_err());
    }
}
