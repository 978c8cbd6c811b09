//! Roll dynamics of a slender delta wing with an unknown rock moment `Δ(θ, p)`.

use nalgebra::{dvector, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ModelSpec, SimData};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WingRockParams {
    /// Aileron effectiveness.
    pub l_da: f64,
    /// Coefficients of `Δ` in the order `1, θ, p, |θ|p, |p|p, θ²`.
    pub w: [f64; 6],
    pub dt: f64,
    /// Standard deviation of the roll-angle measurement, in degrees.
    pub noise_std_deg: f64,
    /// Initial `(θ, p)` in rad, rad/s.
    pub x0: [f64; 2],
}

impl Default for WingRockParams {
    fn default() -> Self {
        Self {
            l_da: 3.0,
            w: [0.8, 0.2314, 0.6918, -0.6245, 0.0095, 0.0214],
            dt: 0.02,
            noise_std_deg: 0.2,
            x0: [0.0, 0.0],
        }
    }
}

impl WingRockParams {
    pub fn noise_std_rad(&self) -> f64 {
        self.noise_std_deg.to_radians()
    }
}

pub fn wingrock_delta(theta: f64, p: f64, params: &WingRockParams) -> f64 {
    let w = &params.w;
    w[0] + w[1] * theta
        + w[2] * p
        + w[3] * theta.abs() * p
        + w[4] * p.abs() * p
        + w[5] * theta * theta
}

/// Proportional-derivative tracking of a reference roll angle made of a slow
/// sine plus a square wave, so that the closed loop sweeps the `(θ, p)` plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdTracking {
    pub kp: f64,
    pub kd: f64,
    pub l_da: f64,
    pub sine_amplitude: f64,
    pub sine_period: f64,
    pub square_amplitude: f64,
    pub square_period: f64,
}

impl Default for PdTracking {
    fn default() -> Self {
        Self {
            kp: 9.0,
            kd: 6.0,
            l_da: 3.0,
            sine_amplitude: 0.5,
            sine_period: 8.0,
            square_amplitude: 0.25,
            square_period: 5.0,
        }
    }
}

impl PdTracking {
    pub fn reference(&self, t: f64) -> f64 {
        let tau = std::f64::consts::TAU;
        let sq = if (tau * t / self.square_period).sin() >= 0.0 {
            1.0
        } else {
            -1.0
        };
        self.sine_amplitude * (tau * t / self.sine_period).sin() + self.square_amplitude * sq
    }

    pub fn control(&self, t: f64, x: &DVector<f64>) -> f64 {
        (-self.kp * (x[0] - self.reference(t)) - self.kd * x[1]) / self.l_da
    }
}

/// Euler simulation of the roll dynamics for `duration` seconds.
///
/// Sample `k` holds the state at `t = k·dt`, the aileron command applied over
/// the following interval, the true `Δ`, and a noisy roll-angle reading.
pub fn wingrock_simulate(
    params: &WingRockParams,
    control_law: &dyn Fn(f64, &DVector<f64>) -> f64,
    duration: f64,
    seed: u64,
) -> SimData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, params.noise_std_rad()).expect("finite noise std");
    let n = (duration / params.dt).round() as usize;
    let mut data = SimData::default();
    let mut x = dvector![params.x0[0], params.x0[1]];
    for k in 0..n {
        let t = k as f64 * params.dt;
        let da = control_law(t, &x);
        let delta = wingrock_delta(x[0], x[1], params);
        data.t.push(t);
        data.y.push(dvector![x[0] + noise.sample(&mut rng)]);
        data.u.push(dvector![da]);
        data.delta.push(delta);
        data.x.push(x.clone());
        x = dvector![
            x[0] + x[1] * params.dt,
            x[1] + (params.l_da * da + delta) * params.dt
        ];
    }
    data
}

/// Filter-side model: `Δ` is the unknown function of `(θ, p)`, the rest of
/// the discretized dynamics is known. The control is the aileron command.
#[derive(Clone, Debug)]
pub struct WingRockModel {
    pub params: WingRockParams,
    pub process_noise: DMatrix<f64>,
}

impl WingRockModel {
    pub fn new(params: WingRockParams, process_noise: DMatrix<f64>) -> Self {
        Self {
            params,
            process_noise,
        }
    }
}

impl ModelSpec for WingRockModel {
    fn state_dim(&self) -> usize {
        2
    }

    fn measurement_dim(&self) -> usize {
        1
    }

    fn gp_output_dim(&self) -> usize {
        1
    }

    fn gp_input_dim(&self) -> usize {
        2
    }

    fn transition(&self, x: &DVector<f64>, f: &DVector<f64>, control: &[f64]) -> DVector<f64> {
        let dt = self.params.dt;
        let da = control.first().copied().unwrap_or(0.0);
        dvector![x[0] + x[1] * dt, x[1] + (self.params.l_da * da + f[0]) * dt]
    }

    fn measurement(&self, x: &DVector<f64>) -> DVector<f64> {
        dvector![x[0]]
    }

    fn gp_input(&self, x: &DVector<f64>, _control: &[f64]) -> DVector<f64> {
        x.clone()
    }

    fn process_noise(&self) -> DMatrix<f64> {
        self.process_noise.clone()
    }

    fn measurement_noise(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.params.noise_std_rad().powi(2))
    }

    fn transition_jacobians(
        &self,
        _x: &DVector<f64>,
        _f: &DVector<f64>,
        _control: &[f64],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let dt = self.params.dt;
        Ok((
            DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, dt]),
        ))
    }

    fn measurement_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]))
    }

    fn gp_input_jacobian(&self, _x: &DVector<f64>, _control: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(2, 2))
    }
}
