use super::tape::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 1e-3;

/// Bias-corrected Adam moments for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::shape(
                format!("{} tensors", self.m.len()),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != p.len() {
                return Err(Error::shape(
                    format!("tensor {i} with {} values", self.m[i].len()),
                    format!("{} params / {} grads", p.len(), g.len()),
                ));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powf(self.step as f64);
        let bc2 = 1.0 - self.beta2.powf(self.step as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)) {
            for j in 0..p.data.len() {
                let gj = g.data[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p.data[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(v: Vec<f64>) -> Tensor {
        Tensor::new(vec![v.len()], v).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![tensor(vec![1.0, -2.0, 3.0])];
        let before = p.clone();
        let mut s = AdamState::new(&p, 1e-3);
        for _ in 0..5 {
            s.step(&mut p, &[tensor(vec![0.0; 3])]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = vec![tensor(vec![0.5, 0.5, 0.5, 0.5])];
        let g = tensor(vec![3.0, -0.01, 1e-3, -250.0]);
        let mut s = AdamState::new(&p, 1e-3);
        s.step(&mut p, std::slice::from_ref(&g)).unwrap();
        for (x, gv) in p[0].data.iter().zip(&g.data) {
            let expected = 0.5 - 1e-3 * gv.signum();
            assert!((x - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = vec![tensor(vec![0.0, 0.0])];
        let g = tensor(vec![0.2, -0.7]);
        let mut s = AdamState::new(&p, 1e-2);
        let mut prev = p[0].data.clone();
        for _ in 0..50 {
            s.step(&mut p, std::slice::from_ref(&g)).unwrap();
            assert!(p[0].data[0] < prev[0] && p[0].data[1] > prev[1]);
            prev = p[0].data.clone();
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![tensor(vec![0.0, 0.0])];
        let mut s = AdamState::new(&p, 1e-3);
        assert!(s.step(&mut p, &[tensor(vec![1.0])]).is_err());
        assert!(s.step(&mut p, &[]).is_err());
    }
}
