//! State-space model structure around the unknown function, plus the
//! simulators and concrete models used by the experiments.

mod gpr;
mod lincycle;
mod random;
mod sysid;
mod wingrock;

pub use gpr::GprReduction;
pub use lincycle::{switching_lds_simulate, LimitCycleConfig, LimitCycleModel};
pub use random::RandomModel;
pub use sysid::SysIdModel;
pub use wingrock::{wingrock_delta, wingrock_simulate, PdTracking, WingRockModel, WingRockParams};

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Known structure of a GP state-space model.
///
/// The state evolves as `x⁺ = F(x, f(z), c) + w` with `z = h(x, c)` and
/// `w ~ N(0, Σ_f)`, and is observed as `y = g(x) + v`, `v ~ N(0, Σ_g)`. `c`
/// is an exogenous control vector that may be empty.
///
/// The Jacobian providers default to central finite differences; override
/// them when analytic forms are cheap.
pub trait ModelSpec {
    fn state_dim(&self) -> usize;
    fn measurement_dim(&self) -> usize;
    /// Output dimension of the unknown function.
    fn gp_output_dim(&self) -> usize;
    /// Input dimension of the unknown function.
    fn gp_input_dim(&self) -> usize;

    fn transition(&self, x: &DVector<f64>, f: &DVector<f64>, control: &[f64]) -> DVector<f64>;
    fn measurement(&self, x: &DVector<f64>) -> DVector<f64>;
    fn gp_input(&self, x: &DVector<f64>, control: &[f64]) -> DVector<f64>;

    fn process_noise(&self) -> DMatrix<f64>;
    fn measurement_noise(&self) -> DMatrix<f64>;

    /// Partial Jacobians `(∂F/∂x, ∂F/∂f)` with the other argument held fixed.
    fn transition_jacobians(
        &self,
        x: &DVector<f64>,
        f: &DVector<f64>,
        control: &[f64],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let jx = numeric_jacobian(|xx| self.transition(xx, f, control), x)?;
        let jf = numeric_jacobian(|ff| self.transition(x, ff, control), f)?;
        Ok((jx, jf))
    }

    fn measurement_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        numeric_jacobian(|xx| self.measurement(xx), x)
    }

    fn gp_input_jacobian(&self, x: &DVector<f64>, control: &[f64]) -> Result<DMatrix<f64>> {
        numeric_jacobian(|xx| self.gp_input(xx, control), x)
    }
}

/// Central-difference Jacobian with step `ε^{1/3} · (1 + |x_i|)` per
/// coordinate, dividing by the step actually representable in floating point.
pub fn numeric_jacobian<F>(f: F, x: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = f64::EPSILON.cbrt() * (1.0 + x[i].abs());
        let (hi, lo) = (x[i] + h, x[i] - h);
        xp[i] = hi;
        let fp = f(&xp);
        xp[i] = lo;
        let fm = f(&xp);
        xp[i] = x[i];
        let col = (fp - fm) / (hi - lo);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("finite-difference Jacobian"));
        }
        jac.set_column(i, &col);
    }
    Ok(jac)
}

/// A simulated or loaded time series. Missing channels are empty vectors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimData {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub delta: Vec<f64>,
}

impl SimData {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Writes `t, x1.., y1.., u1.., delta` with one row per sample.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let width = |v: &[DVector<f64>]| v.first().map_or(0, |r| r.len());
        let mut header = vec!["t".to_string()];
        for (name, w) in [
            ("x", width(&self.x)),
            ("y", width(&self.y)),
            ("u", width(&self.u)),
        ] {
            header.extend((1..=w).map(|i| format!("{name}{i}")));
        }
        if !self.delta.is_empty() {
            header.push("delta".into());
        }
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&header).map_err(csv_err)?;
        for k in 0..self.len() {
            let mut row = vec![self.t[k]];
            for ch in [&self.x, &self.y, &self.u] {
                if let Some(v) = ch.get(k) {
                    row.extend(v.iter());
                }
            }
            if let Some(d) = self.delta.get(k) {
                row.push(*d);
            }
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
