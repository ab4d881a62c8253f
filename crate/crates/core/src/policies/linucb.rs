//! Disjoint LinUCB: one ridge-regression model per arm with an
//! upper-confidence exploration bonus.
//!
//! Each arm keeps `A = I + Σ x xᵀ` and `b = Σ r x`. Rather than a running
//! inverse, the arm holds the Cholesky factor of `A` and applies an O(d²)
//! rank-one update per observation, so `θ = A⁻¹ b` and `xᵀ A⁻¹ x` come from
//! triangular solves against an exact factorization.

use crate::domain::{argmax_action, Action, ContextVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    dim: usize,
    /// Row-major `A`.
    a: Vec<f64>,
    b: Vec<f64>,
    /// Row-major lower-triangular Cholesky factor of `A`.
    chol: Vec<f64>,
    theta: Vec<f64>,
    theta_dirty: bool,
    pub updates: u64,
}

impl ArmState {
    pub fn new(dim: usize) -> Self {
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        ArmState {
            dim,
            a: eye.clone(),
            b: vec![0.0; dim],
            chol: eye,
            theta: vec![0.0; dim],
            theta_dirty: false,
            updates: 0,
        }
    }

    pub fn a_matrix(&self) -> &[f64] {
        &self.a
    }

    pub fn b_vector(&self) -> &[f64] {
        &self.b
    }

    fn forward(&self, rhs: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let s: f64 = row.iter().zip(&y[..i]).map(|(l, v)| l * v).sum();
            y[i] = (rhs[i] - s) / self.chol[i * d + i];
        }
        y
    }

    fn backward(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let mut s = 0.0;
            for j in i + 1..d {
                s += self.chol[j * d + i] * x[j];
            }
            x[i] = (y[i] - s) / self.chol[i * d + i];
        }
        x
    }

    /// Ridge estimate `θ = A⁻¹ b`.
    pub fn theta(&mut self) -> &[f64] {
        if self.theta_dirty {
            let y = self.forward(&self.b);
            self.theta = self.backward(&y);
            self.theta_dirty = false;
        }
        &self.theta
    }

    /// `xᵀ A⁻¹ x`, computed as `‖L⁻¹ x‖²`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.forward(x).iter().map(|v| v * v).sum()
    }

    pub fn update(&mut self, x: &[f64], reward: f64) {
        let d = self.dim;
        for i in 0..d {
            if x[i] != 0.0 {
                for j in 0..d {
                    self.a[i * d + j] += x[i] * x[j];
                }
                self.b[i] += reward * x[i];
            }
        }
        // Rank-one Cholesky update of L Lᵀ + x xᵀ.
        let mut w = x.to_vec();
        for k in 0..d {
            if w[k] == 0.0 {
                continue;
            }
            let lkk = self.chol[k * d + k];
            let r = lkk.hypot(w[k]);
            let c = r / lkk;
            let s = w[k] / lkk;
            self.chol[k * d + k] = r;
            for i in k + 1..d {
                let lik = (self.chol[i * d + k] + s * w[i]) / c;
                w[i] = c * w[i] - s * lik;
                self.chol[i * d + k] = lik;
            }
        }
        self.theta_dirty = true;
        self.updates += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinUcbState {
    pub alpha: f64,
    dim: usize,
    arms: Vec<ArmState>,
}

impl LinUcbState {
    pub fn new(dim: usize, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("LinUCB alpha must be >= 0, got {alpha}")));
        }
        Ok(LinUcbState {
            alpha,
            dim,
            arms: (0..Action::COUNT).map(|_| ArmState::new(dim)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arm(&self, a: Action) -> &ArmState {
        &self.arms[a.index()]
    }

    pub fn theta(&mut self, a: Action) -> Vec<f64> {
        self.arms[a.index()].theta().to_vec()
    }

    fn check_dim(&self, x: &ContextVector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::invalid(format!(
                "context has dimension {}, LinUCB state has {}",
                x.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `xᵀθ_a + α·sqrt(xᵀ A_a⁻¹ x)`.
    pub fn score(&mut self, x: &ContextVector, a: Action) -> Result<f64> {
        self.check_dim(x)?;
        let alpha = self.alpha;
        let arm = &mut self.arms[a.index()];
        let q = arm.quad_form(x.as_slice());
        if !q.is_finite() || q < 0.0 {
            return Err(Error::Internal(format!("LinUCB arm {a} lost positive definiteness")));
        }
        let mean: f64 = arm.theta().iter().zip(x.as_slice()).map(|(t, v)| t * v).sum();
        Ok(mean + alpha * q.sqrt())
    }

    pub fn scores(&mut self, x: &ContextVector) -> Result<[f64; Action::COUNT]> {
        Ok([
            self.score(x, Action::A)?,
            self.score(x, Action::B)?,
            self.score(x, Action::C)?,
        ])
    }

    pub fn choose(&mut self, x: &ContextVector) -> Result<Action> {
        Ok(argmax_action(self.scores(x)?))
    }

    pub fn update(&mut self, x: &ContextVector, a: Action, reward: u8) -> Result<()> {
        self.check_dim(x)?;
        self.arms[a.index()].update(x.as_slice(), f64::from(reward));
        Ok(())
    }
}
