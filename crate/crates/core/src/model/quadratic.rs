use super::LossOracle;
use crate::error::{check_dims, Result};
use crate::params::ParamVector;

/// `f(θ) = ½ Σ_j a_j (θ_j − c_j)²`, a separable quadratic with closed-form
/// proximal points. Batches are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticLoss {
    pub center: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl QuadraticLoss {
    /// Unit curvature, `½‖θ − c‖²`.
    pub fn isotropic(center: Vec<f64>) -> Self {
        let curvature = vec![1.0; center.len()];
        Self { center, curvature }
    }

    /// The identically zero objective.
    pub fn zero(dim: usize) -> Self {
        Self {
            center: vec![0.0; dim],
            curvature: vec![0.0; dim],
        }
    }
}

impl LossOracle for QuadraticLoss {
    fn num_examples(&self) -> usize {
        1
    }

    fn value(&self, params: &ParamVector, _batch: &[usize]) -> Result<f64> {
        check_dims(self.center.len(), params.len())?;
        Ok(params
            .as_slice()
            .iter()
            .zip(&self.center)
            .zip(&self.curvature)
            .map(|((p, c), a)| 0.5 * a * (p - c) * (p - c))
            .sum())
    }

    fn gradient(&self, params: &ParamVector, _batch: &[usize]) -> Result<ParamVector> {
        check_dims(self.center.len(), params.len())?;
        Ok(ParamVector::new(
            params
                .as_slice()
                .iter()
                .zip(&self.center)
                .zip(&self.curvature)
                .map(|((p, c), a)| a * (p - c))
                .collect(),
        ))
    }
}
