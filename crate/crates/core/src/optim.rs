//! Adam over a fixed list of parameter blocks.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per block, one step counter shared by all.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub lr: f64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(lr: f64, block_sizes: &[usize], cfg: AdamConfig) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        Ok(Self {
            cfg,
            lr,
            m: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        })
    }

    /// One ascent step: `p += lr * m_hat / (sqrt(v_hat) + eps)`. Pass the
    /// negated gradient to minimize.
    pub fn ascend(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        check_dim("adam blocks", self.m.len(), params.len())?;
        check_dim("adam gradient blocks", self.m.len(), grads.len())?;
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            check_dim("adam parameter block", self.m[k].len(), p.len())?;
            check_dim("adam gradient block", self.m[k].len(), g.len())?;
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient block {k}, entry {i}: {}", g[i])));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] += self.lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam = AdamState::new(0.1, &[3, 2], AdamConfig::default()).unwrap();
        let mut a = vec![1.0, -2.0, 3.0];
        let mut b = vec![0.5, 0.25];
        let before = (a.clone(), b.clone());
        for _ in 0..5 {
            adam.ascend(&mut [&mut a, &mut b], &[&[0.0; 3], &[0.0; 2]]).unwrap();
        }
        assert_eq!((a, b), before);
        assert_eq!(adam.step, 5);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // m_hat = g, v_hat = g^2 after bias correction.
        let mut adam = AdamState::new(0.01, &[2], AdamConfig::default()).unwrap();
        let mut p = vec![0.0, 0.0];
        adam.ascend(&mut [&mut p], &[&[3.0, -0.5]]).unwrap();
        assert!((p[0] - 0.01 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        assert!((p[1] + 0.01 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn blocks_have_separate_moments() {
        let mut adam = AdamState::new(0.1, &[1, 1], AdamConfig::default()).unwrap();
        let (mut a, mut b) = (vec![0.0], vec![0.0]);
        adam.ascend(&mut [&mut a, &mut b], &[&[1.0], &[0.0]]).unwrap();
        assert_eq!(adam.m[1][0], 0.0);
        assert!(adam.m[0][0] > 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(AdamState::new(0.0, &[1], AdamConfig::default()).is_err());
        let mut adam = AdamState::new(0.1, &[2], AdamConfig::default()).unwrap();
        let mut p = vec![0.0; 2];
        assert!(adam.ascend(&mut [&mut p], &[&[1.0]]).is_err());
        assert!(adam.ascend(&mut [&mut p], &[&[f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut adam = AdamState::new(0.05, &[2], AdamConfig::default()).unwrap();
        let mut p = vec![3.0, -2.0];
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| -2.0 * x).collect();
            adam.ascend(&mut [&mut p], &[&g]).unwrap();
        }
        assert!(p.iter().all(|x| x.abs() < 1e-3));
    }
}
