//! Seeded smooth nonlinear models for randomized consistency checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::ModelSpec;
use crate::error::Result;

/// `F(x, f) = A x + a·tanh(x) + B f`, `g(x) = C (x + b·sin x)`,
/// `h(x) = x[..n_in] + s·tanh(x[..n_in])`.
///
/// Every term has an analytic Jacobian; zero `B` gives a plain EKF problem.
#[derive(Clone, Debug)]
pub struct RandomModel {
    pub a: DMatrix<f64>,
    pub a_nl: f64,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub c_nl: f64,
    pub n_in: usize,
    pub h_nl: f64,
    pub process_noise: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
}

impl RandomModel {
    pub fn generate<R: Rng>(rng: &mut R, n_x: usize, n_y: usize, n_f: usize, n_in: usize) -> Self {
        assert!(n_in <= n_x, "gp input is a slice of the state");
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let a = DMatrix::from_fn(n_x, n_x, |i, j| if i == j { 0.8 } else { 0.0 })
            + DMatrix::from_fn(n_x, n_x, |_, _| u(-0.15, 0.15));
        let b = DMatrix::from_fn(n_x, n_f, |_, _| u(-1.0, 1.0));
        let c = DMatrix::from_fn(n_y, n_x, |_, _| u(-1.0, 1.0));
        let q = DMatrix::from_fn(n_x, n_x, |_, _| u(-0.1, 0.1));
        let r = DMatrix::from_fn(n_y, n_y, |_, _| u(-0.2, 0.2));
        Self {
            a,
            a_nl: u(-0.2, 0.2),
            b,
            c,
            c_nl: u(-0.2, 0.2),
            n_in,
            h_nl: u(-0.2, 0.2),
            process_noise: &q * q.transpose() + DMatrix::identity(n_x, n_x) * 1e-3,
            measurement_noise: &r * r.transpose() + DMatrix::identity(n_y, n_y) * 0.05,
        }
    }
}

impl ModelSpec for RandomModel {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn measurement_dim(&self) -> usize {
        self.c.nrows()
    }

    fn gp_output_dim(&self) -> usize {
        self.b.ncols()
    }

    fn gp_input_dim(&self) -> usize {
        self.n_in
    }

    fn transition(&self, x: &DVector<f64>, f: &DVector<f64>, _control: &[f64]) -> DVector<f64> {
        &self.a * x + x.map(f64::tanh) * self.a_nl + &self.b * f
    }

    fn measurement(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * (x + x.map(f64::sin) * self.c_nl)
    }

    fn gp_input(&self, x: &DVector<f64>, _control: &[f64]) -> DVector<f64> {
        let head = x.rows(0, self.n_in);
        head + head.map(f64::tanh) * self.h_nl
    }

    fn process_noise(&self) -> DMatrix<f64> {
        self.process_noise.clone()
    }

    fn measurement_noise(&self) -> DMatrix<f64> {
        self.measurement_noise.clone()
    }

    fn transition_jacobians(
        &self,
        x: &DVector<f64>,
        _f: &DVector<f64>,
        _control: &[f64],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = x.map(|v| self.a_nl * (1.0 - v.tanh().powi(2)));
        Ok((&self.a + DMatrix::from_diagonal(&d), self.b.clone()))
    }

    fn measurement_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = x.map(|v| 1.0 + self.c_nl * v.cos());
        Ok(&self.c * DMatrix::from_diagonal(&d))
    }

    fn gp_input_jacobian(&self, x: &DVector<f64>, _control: &[f64]) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(self.n_in, x.len());
        for i in 0..self.n_in {
            j[(i, i)] = 1.0 + self.h_nl * (1.0 - x[i].tanh().powi(2));
        }
        Ok(j)
    }
}
