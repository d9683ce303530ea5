//! Bias-corrected Adam over a flat list of parameter fields.

use crate::error::{Result, WaveError};
use crate::field::{Field, Real};

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Field>,
    v: Vec<Field>,
    t: u64,
    pub lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
}

impl AdamState {
    /// Moment buffers mirror the given parameter shapes.
    pub fn new(params: &[(String, &Field)], lr: Real) -> Self {
        let m = params
            .iter()
            .map(|(_, p)| Field::zeros(p.channels(), p.height(), p.width()))
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState {
            m,
            v,
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update. Rejects the whole step (no mutation) if any gradient is
    /// non-finite.
    pub fn step(&mut self, params: &mut [(String, &mut Field)], grads: &[Field]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(WaveError::ShapeMismatch(format!(
                "adam: {} params, {} grads, {} moment buffers",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if !g.same_shape(&self.m[i]) {
                return Err(WaveError::ShapeMismatch(format!(
                    "adam: grad {i} shape {:?} vs {:?}",
                    g.shape(),
                    self.m[i].shape()
                )));
            }
            if !g.all_finite() {
                return Err(WaveError::NonFinite(format!(
                    "gradient for parameter '{}'",
                    params[i].0
                )));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..grads.len() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params[i].1.data_mut();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: Real) -> Vec<(String, Field)> {
        vec![("p".to_string(), Field::filled(1, 2, 2, v))]
    }

    fn as_refs(params: &[(String, Field)]) -> Vec<(String, &Field)> {
        params.iter().map(|(n, f)| (n.clone(), f)).collect()
    }

    fn as_mut(params: &mut [(String, Field)]) -> Vec<(String, &mut Field)> {
        params.iter_mut().map(|(n, f)| (n.clone(), &mut *f)).collect()
    }

    #[test]
    fn first_step_with_unit_grads_moves_by_lr() {
        let mut params = one_param(1.0);
        let mut adam = AdamState::new(&as_refs(&params), 0.001);
        let grads = vec![Field::filled(1, 2, 2, 1.0)];
        adam.step(&mut as_mut(&mut params), &grads).unwrap();
        for &v in params[0].1.data() {
            assert!((v - (1.0 - 0.001)).abs() < 1e-6, "got {v}");
        }
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut params = one_param(0.7);
        let mut adam = AdamState::new(&as_refs(&params), 0.001);
        let grads = vec![Field::zeros(1, 2, 2)];
        adam.step(&mut as_mut(&mut params), &grads).unwrap();
        assert_eq!(adam.step_count(), 1);
        assert!(params[0].1.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut params = one_param(0.3);
            let mut adam = AdamState::new(&as_refs(&params), 0.01);
            for k in 0..20 {
                let g = Field::filled(1, 2, 2, ((k as Real) * 0.37).sin());
                adam.step(&mut as_mut(&mut params), &[g]).unwrap();
            }
            params[0].1.data().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn non_finite_grads_reject_the_step() {
        let mut params = one_param(0.5);
        let mut adam = AdamState::new(&as_refs(&params), 0.001);
        let mut bad = Field::zeros(1, 2, 2);
        bad.data_mut()[1] = Real::NAN;
        let err = adam.step(&mut as_mut(&mut params), &[bad]);
        assert!(matches!(err, Err(WaveError::NonFinite(_))));
        assert_eq!(adam.step_count(), 0);
        assert!(params[0].1.data().iter().all(|&v| v == 0.5));
    }
}
