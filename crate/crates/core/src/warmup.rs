//! Stylized estimator for cumulative expert features observed through known
//! linear perspectives: penalized least squares with design-matrix
//! accumulation and greedy log-det selection.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{self, Matrix};
use crate::perspective::{Perspective, PerspectiveSet};
use crate::select;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WarmupError {
    InvalidParam(&'static str),
    DimensionMismatch,
    /// The regularized design matrix failed to factorize.
    SingularSystem,
}

impl fmt::Display for WarmupError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WarmupError::InvalidParam(what) => write!(f, "invalid parameter: {what}"),
            WarmupError::DimensionMismatch => write!(f, "dimension mismatch"),
            WarmupError::SingularSystem => write!(f, "design matrix is singular"),
        }
    }
}

impl core::error::Error for WarmupError {}

/// Ridge regression state: `V = lambda I + sum A^T A`, `b = sum A^T o`.
#[derive(Debug, Clone)]
pub struct RidgeState {
    v: Matrix,
    b: Vec<f64>,
    lambda: f64,
    t: u64,
}

impl RidgeState {
    pub fn new(feature_dim: usize, lambda: f64) -> Result<Self, WarmupError> {
        if !(lambda > 0.0) {
            return Err(WarmupError::InvalidParam("lambda must be positive"));
        }
        let mut v = Matrix::zeros(feature_dim, feature_dim);
        for i in 0..feature_dim {
            v[(i, i)] = lambda;
        }
        Ok(Self {
            v,
            b: vec![0.0; feature_dim],
            lambda,
            t: 0,
        })
    }

    pub fn design_matrix(&self) -> &Matrix {
        &self.v
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn log_det_v(&self) -> f64 {
        linalg::logdet_spd(&self.v).expect("V stays positive definite for lambda > 0")
    }

    /// Books one observation `o` made through perspective `A`:
    /// `V += A^T A`, `b += A^T o`.
    pub fn ridge_update(
        &mut self,
        perspective: &Perspective,
        observation: &[f64],
    ) -> Result<(), WarmupError> {
        if perspective.feature_dim() != self.b.len()
            || observation.len() != perspective.output_dim()
        {
            return Err(WarmupError::DimensionMismatch);
        }
        self.v.add_gram(perspective.matrix());
        let atb = perspective.matrix().tr_matvec(observation);
        for (b, a) in self.b.iter_mut().zip(atb) {
            *b += a;
        }
        self.t += 1;
        Ok(())
    }

    /// The penalized least-squares estimate `V^{-1} b`.
    pub fn ridge_estimate(&self) -> Result<Vec<f64>, WarmupError> {
        linalg::spd_solve(&self.v, &self.b).ok_or(WarmupError::SingularSystem)
    }

    /// Greedy D-optimal pick over the candidate perspectives; same rule as
    /// the variance-minimizing selection strategy.
    pub fn greedy_logdet_select(&self, perspectives: &PerspectiveSet) -> usize {
        select::argmax_logdet(&self.v, perspectives)
    }
}
