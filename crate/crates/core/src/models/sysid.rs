//! Latent-state model for input/output system identification: the whole
//! transition `x⁺ = f(x, u)` is unknown and only the first state is measured.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelSpec;
use crate::belief::AugmentedBelief;
use crate::error::Result;
use crate::kernel::Hyperparameters;

#[derive(Clone, Debug)]
pub struct SysIdModel {
    pub n_lat: usize,
    pub n_control: usize,
    pub process_noise: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
}

impl SysIdModel {
    /// Latent order `n_lat` with one scalar input, `Σ_f = q·I`, `Σ_g = r`.
    pub fn new(n_lat: usize, q: f64, r: f64) -> Self {
        Self {
            n_lat,
            n_control: 1,
            process_noise: DMatrix::identity(n_lat, n_lat) * q,
            measurement_noise: DMatrix::from_element(1, 1, r),
        }
    }

    /// Initial belief `x₀ ~ N(0, x0_var·I)` with one inducing point placed
    /// near the origin.
    ///
    /// The transition mean is identically zero under the prior, which would
    /// make the state Jacobian vanish and leave the latent state unobservable
    /// beyond the first coordinate. The seeded point sits at
    /// `z₀ ~ N(0, 0.1² I)` and its mean block is drawn from `N(0, 0.1² I)`;
    /// its covariance is the prior variance.
    pub fn initial_belief(
        &self,
        hyper: Hyperparameters,
        x0_var: f64,
        seed: u64,
    ) -> Result<AugmentedBelief> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n01 = Normal::new(0.0, 0.1).expect("finite std");
        let b = AugmentedBelief::new(
            DVector::zeros(self.n_lat),
            &(DMatrix::identity(self.n_lat, self.n_lat) * x0_var),
            hyper,
        )?;
        let z0 = DVector::from_fn(self.n_lat + self.n_control, |_, _| n01.sample(&mut rng));
        let m0 = DVector::from_fn(self.n_lat, |_, _| n01.sample(&mut rng));
        let prior = DMatrix::from_diagonal(&b.hyperparameters().signal_variances());
        b.chol_append(&DMatrix::zeros(b.dim(), self.n_lat), &prior, &m0, z0)
    }
}

impl ModelSpec for SysIdModel {
    fn state_dim(&self) -> usize {
        self.n_lat
    }

    fn measurement_dim(&self) -> usize {
        1
    }

    fn gp_output_dim(&self) -> usize {
        self.n_lat
    }

    fn gp_input_dim(&self) -> usize {
        self.n_lat + self.n_control
    }

    fn transition(&self, _x: &DVector<f64>, f: &DVector<f64>, _control: &[f64]) -> DVector<f64> {
        f.clone()
    }

    fn measurement(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[0])
    }

    fn gp_input(&self, x: &DVector<f64>, control: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.gp_input_dim(), x.iter().chain(control).copied())
    }

    fn process_noise(&self) -> DMatrix<f64> {
        self.process_noise.clone()
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
        let n = self.n_lat;
        Ok((DMatrix::zeros(n, n), DMatrix::identity(n, n)))
    }

    fn measurement_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut c = DMatrix::zeros(1, self.n_lat);
        c[(0, 0)] = 1.0;
        Ok(c)
    }

    fn gp_input_jacobian(&self, _x: &DVector<f64>, _control: &[f64]) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(self.gp_input_dim(), self.n_lat);
        j.view_mut((0, 0), (self.n_lat, self.n_lat))
            .fill_with_identity();
        Ok(j)
    }
}
