//! Learnable parameter storage and the Adam update rule.

use super::CvnnError;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), CvnnError> {
        if !(self.learning_rate > 0.0) {
            return Err(CvnnError::BadConfig(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// A parameter array with its gradient and Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub w: Vec<f64>,
    pub g: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl ParamTensor {
    pub fn new(w: Vec<f64>) -> Self {
        let n = w.len();
        Self { w, g: vec![0.0; n], m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.g.fill(0.0);
    }

    /// One Adam step at (1-based) timestep `t` using the stored gradient.
    pub fn adam_step(&mut self, cfg: &AdamConfig, t: u64) {
        adam_step(&mut self.w, &self.g, &mut self.m, &mut self.v, cfg, t);
    }

    pub fn reset_opt_state(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
    }
}

/// Standard bias-corrected Adam update, deterministic given its inputs.
pub fn adam_step(
    w: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    cfg: &AdamConfig,
    t: u64,
) {
    debug_assert!(t >= 1);
    let b1t = 1.0 - cfg.beta1.powi(t as i32);
    let b2t = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..w.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / b1t;
        let v_hat = v[i] / b2t;
        w[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = ParamTensor::new(vec![1.0, -2.0, 0.5]);
        let before = p.w.clone();
        p.adam_step(&AdamConfig::default(), 1);
        assert_eq!(p.w, before);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // Fresh state, constant gradient g: m1 = (1-b1)g, v1 = (1-b2)g^2,
        // bias correction gives m_hat = g, v_hat = g^2, so the step is
        // -lr * g / (|g| + eps).
        let cfg = AdamConfig { learning_rate: 0.01, ..Default::default() };
        let g = vec![0.3, -4.0, 1e-3];
        let mut p = ParamTensor::new(vec![0.0; 3]);
        p.g.copy_from_slice(&g);
        p.adam_step(&cfg, 1);
        for i in 0..3 {
            let expect = -cfg.learning_rate * g[i] / (g[i].abs() + cfg.epsilon);
            assert!((p.w[i] - expect).abs() < 1e-15, "{} vs {expect}", p.w[i]);
        }
    }

    #[test]
    fn deterministic_trajectories() {
        let cfg = AdamConfig::default();
        let run = || {
            let mut p = ParamTensor::new(vec![1.0, 2.0]);
            for t in 1..=25 {
                p.g = vec![0.1 * t as f64, -0.2];
                p.adam_step(&cfg, t);
            }
            p.w
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bad_learning_rate_rejected() {
        let cfg = AdamConfig { learning_rate: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
