//! Adaptive-moment optimizer with bias correction.

/// First and second moment accumulators for one parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub first: Vec<f32>,
    pub second: Vec<f32>,
}

impl AdamMoments {
    pub fn zeros(len: usize) -> Self {
        Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    /// Applies one update at 1-based step `t`.
    pub fn step(&self, t: u64, params: &mut [f32], grad: &[f64], moments: &mut AdamMoments) {
        debug_assert_eq!(params.len(), grad.len());
        let t = t.min(i32::MAX as u64) as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(moments.first.iter_mut())
            .zip(moments.second.iter_mut())
        {
            let m_new = self.beta1 * *m as f64 + (1.0 - self.beta1) * g;
            let v_new = self.beta2 * *v as f64 + (1.0 - self.beta2) * g * g;
            *m = m_new as f32;
            *v = v_new as f32;
            let m_hat = m_new / bc1;
            let v_hat = v_new / bc2;
            *p = (*p as f64 - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon)) as f32;
        }
    }
}
