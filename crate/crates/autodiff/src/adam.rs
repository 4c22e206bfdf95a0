use crate::{AutodiffError, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
    step_count: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        Self {
            config,
            first_moment: zeros(),
            second_moment: zeros(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn second_moment(&self, param: usize) -> &[T] {
        &self.second_moment[param]
    }

    /// One bias-corrected update of every parameter in place.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Vec<T>]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(AutodiffError::shape(
                "adam_step",
                format!(
                    "{} params, {} grads, state for {}",
                    params.len(),
                    grads.len(),
                    self.first_moment.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.first_moment[i].len() {
                return Err(AutodiffError::shape(
                    "adam_step",
                    format!("parameter {i}: {} values, {} grads", p.len(), g.len()),
                ));
            }
        }
        self.step_count += 1;
        let c = self.config;
        let t = self.step_count as i32;
        // Coefficients are formed in f64 so (1 - beta) and the bias
        // corrections round identically in f32.
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_minus_b1, one_minus_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let correction1 = T::lit(1.0 - c.beta1.powi(t));
        let correction2 = T::lit(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::lit(c.learning_rate), T::lit(c.epsilon));
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for (((x, &gi), mi), vi) in p.values_mut().iter_mut().zip(g).zip(m).zip(v) {
                *mi = b1 * *mi + one_minus_b1 * gi;
                *vi = b2 * *vi + one_minus_b2 * gi * gi;
                let m_hat = *mi / correction1;
                let v_hat = *vi / correction2;
                *x = *x - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
