//! Regression as a degenerate state-space model: the state is the function
//! value at an exogenous input, observed with additive noise.

use nalgebra::{DMatrix, DVector};

use super::ModelSpec;
use crate::error::Result;

/// `x⁺ = f(c)`, `y = x + v`. The control vector carries the regression input
/// `c` for the step being predicted.
#[derive(Clone, Debug)]
pub struct GprReduction {
    pub n_out: usize,
    pub n_in: usize,
    pub measurement_noise: DMatrix<f64>,
}

impl GprReduction {
    pub fn new(n_out: usize, n_in: usize, noise_var: f64) -> Self {
        Self {
            n_out,
            n_in,
            measurement_noise: DMatrix::identity(n_out, n_out) * noise_var,
        }
    }
}

impl ModelSpec for GprReduction {
    fn state_dim(&self) -> usize {
        self.n_out
    }

    fn measurement_dim(&self) -> usize {
        self.n_out
    }

    fn gp_output_dim(&self) -> usize {
        self.n_out
    }

    fn gp_input_dim(&self) -> usize {
        self.n_in
    }

    fn transition(&self, _x: &DVector<f64>, f: &DVector<f64>, _control: &[f64]) -> DVector<f64> {
        f.clone()
    }

    fn measurement(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    fn gp_input(&self, _x: &DVector<f64>, control: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(control)
    }

    fn process_noise(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.n_out, self.n_out)
    }

    fn measurement_noise(&self) -> DMatrix<f64> {
        self.measurement_noise.clone()
    }

    fn transition_jacobians(
        &self,
        _x: &DVector<f64>,
        _f: &DVector<f64>,
        _control: &[f64],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((
            DMatrix::zeros(self.n_out, self.n_out),
            DMatrix::identity(self.n_out, self.n_out),
        ))
    }

    fn measurement_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.n_out, self.n_out))
    }

    fn gp_input_jacobian(&self, _x: &DVector<f64>, _control: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(self.n_in, self.n_out))
    }
}
