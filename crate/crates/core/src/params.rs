//! Flat parameter vectors.
//!
//! Every model is flattened into one contiguous `f64` buffer. The global
//! model, the personalized models and the prior means all live in this space,
//! so the arithmetic helpers here are the only vector algebra the federated
//! loop needs.

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        check_dims(self.len(), other.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    /// `self - other`
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        check_dims(self.len(), other.len())?;
        Ok(ParamVector::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    /// `self + other`
    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        check_dims(self.len(), other.len())?;
        Ok(ParamVector::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> ParamVector {
        ParamVector::new(self.values.iter().map(|v| factor * v).collect())
    }

    /// In place `self -= step * direction`.
    pub fn sub_scaled_assign(&mut self, step: f64, direction: &ParamVector) -> Result<()> {
        check_dims(self.len(), direction.len())?;
        for (v, d) in self.values.iter_mut().zip(&direction.values) {
            *v -= step * d;
        }
        Ok(())
    }

    /// Returns `self - step * direction`.
    pub fn sub_scaled(&self, step: f64, direction: &ParamVector) -> Result<ParamVector> {
        let mut out = self.clone();
        out.sub_scaled_assign(step, direction)?;
        Ok(out)
    }

    /// In place `self += other`.
    pub fn add_assign(&mut self, other: &ParamVector) -> Result<()> {
        check_dims(self.len(), other.len())?;
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += o;
        }
        Ok(())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector::new(values)
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}
