//! Single recursion stages on an [`AugmentedBelief`].

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use super::posterior::{inducing_cholesky, inducing_rows};
use crate::belief::{
    chol_rank_update, cholesky_with_jitter, lower_triangular_inverse, psd_factor, qr_triangularize,
    AugmentedBelief,
};
use crate::error::{check_dim, Error, Result};
use crate::kernel::{base_matrix, k_input_grad, kron_identity};
use crate::models::ModelSpec;

/// First-order expansion of the transition around the current state mean.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizationPoint {
    pub z_t: DVector<f64>,
    pub f_t: DVector<f64>,
    /// Total state Jacobian, including the path through the GP mean.
    pub a_x: DMatrix<f64>,
    pub a_f: DMatrix<f64>,
    pub m_ft: DVector<f64>,
    /// Base-kernel novelty of `z_t`.
    pub gamma0: f64,
    /// `k_tu L_u`: the new function value's loading on the belief factor.
    pub(crate) b_row: DMatrix<f64>,
}

pub fn linearize<M: ModelSpec + ?Sized>(
    b: &AugmentedBelief,
    control: &[f64],
    model: &M,
) -> Result<LinearizationPoint> {
    let nx = b.n_x();
    let nf = b.n_f();
    let mu = b.state_mean();
    let z = model.gp_input(&mu, control);
    check_dim("gp input", b.n_in(), z.len())?;
    let (m_ft, gamma0, b_row, dm_dz) = match inducing_cholesky(b)? {
        None => (
            DVector::zeros(nf),
            1.0,
            DMatrix::zeros(nf, b.dim()),
            DMatrix::zeros(nf, b.n_in()),
        ),
        Some(chol0) => {
            let zs = b.inducing_inputs();
            let k = base_matrix(zs, std::slice::from_ref(&z), b.hyperparameters())?;
            let w = chol0.solve(&k);
            let gamma0 = (1.0 - k.dot(&w)).clamp(0.0, 1.0);
            let mu_mat = b.inducing_mean_matrix();
            let m_ft = mu_mat.tr_mul(&w).column(0).into_owned();
            let k_tu = kron_identity(&w.transpose(), nf);
            let b_row = k_tu * inducing_rows(b);
            let alpha = chol0.solve(&mu_mat);
            let grad = k_input_grad(&z, zs, b.hyperparameters())?;
            (m_ft, gamma0, b_row, (grad * alpha).transpose())
        }
    };
    let (fx, ff) = model.transition_jacobians(&mu, &m_ft, control)?;
    check_dim("transition Jacobian rows", nx, fx.nrows())?;
    check_dim("function Jacobian cols", nf, ff.ncols())?;
    let hx = model.gp_input_jacobian(&mu, control)?;
    let a_x = &fx + &ff * dm_dz * hx;
    let f_t = model.transition(&mu, &m_ft, control);
    Ok(LinearizationPoint {
        z_t: z,
        f_t,
        a_x,
        a_f: ff,
        m_ft,
        gamma0,
        b_row,
    })
}

/// Factor of the state rows after `x⁺ = A_x x + A_f f_t`, given the current
/// factor's state rows and the new function value's factor rows, both padded
/// to the width of the output factor.
fn propagated_state_rows(
    lin: &LinearizationPoint,
    l_x: &DMatrix<f64>,
    l_t: &DMatrix<f64>,
) -> DMatrix<f64> {
    &lin.a_x * l_x + &lin.a_f * l_t
}

/// Prediction that keeps `f_t` as a new inducing value at `z_t`.
pub fn predict_add(
    b: &AugmentedBelief,
    lin: &LinearizationPoint,
    process_noise: &DMatrix<f64>,
    jitter: f64,
) -> Result<AugmentedBelief> {
    let nx = b.n_x();
    let nf = b.n_f();
    let sigma2 = b.hyperparameters().signal_variances();
    let beta = DMatrix::from_diagonal(&sigma2.map(|s| (lin.gamma0 * s).sqrt()));
    let bar = b.append_factor(&lin.b_row, &beta, &lin.m_ft, lin.z_t.clone())?;
    let n = bar.dim();

    let mut m = bar.chol().clone();
    let l_x = m.rows(0, nx).into_owned();
    let l_t = m.rows(n - nf, nf).into_owned();
    m.rows_mut(0, nx)
        .copy_from(&propagated_state_rows(lin, &l_x, &l_t));
    let mut d = DMatrix::zeros(n, nx);
    d.rows_mut(0, nx)
        .copy_from(&psd_factor(process_noise, jitter));
    let chol = qr_triangularize(&m, &d);

    let mut mean = bar.mean().clone();
    mean.rows_mut(0, nx).copy_from(&lin.f_t);
    Ok(bar.with_moments(mean, chol))
}

/// Prediction that conditions `f_t` on the inducing values and marginalizes
/// it; the inducing set is unchanged.
pub fn predict_noadd(
    b: &AugmentedBelief,
    lin: &LinearizationPoint,
    process_noise: &DMatrix<f64>,
    jitter: f64,
) -> Result<AugmentedBelief> {
    let nx = b.n_x();
    let n = b.dim();
    let sigma2 = b.hyperparameters().signal_variances();

    let mut m = b.chol().clone();
    let l_x = m.rows(0, nx).into_owned();
    m.rows_mut(0, nx)
        .copy_from(&propagated_state_rows(lin, &l_x, &lin.b_row));
    // Noise factor [D_f, A_f·diag(√(γ0 σ²))] on the state rows.
    let d_f = psd_factor(process_noise, jitter);
    let cond = &lin.a_f * DMatrix::from_diagonal(&sigma2.map(|s| (lin.gamma0 * s).sqrt()));
    let mut d = DMatrix::zeros(n, nx + cond.ncols());
    d.view_mut((0, 0), (nx, nx)).copy_from(&d_f);
    d.view_mut((0, nx), (nx, cond.ncols())).copy_from(&cond);
    let chol = qr_triangularize(&m, &d);

    let mut mean = b.mean().clone();
    mean.rows_mut(0, nx).copy_from(&lin.f_t);
    Ok(b.with_moments(mean, chol))
}

/// Innovation statistics of a measurement update.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Innovation {
    pub residual: Vec<f64>,
    /// Diagonal of the innovation covariance.
    pub variance: Vec<f64>,
}

/// Kalman measurement update of the joint belief. Only the state is
/// observed; inducing values are corrected through their correlation with it.
pub fn correct<M: ModelSpec + ?Sized>(
    b: &AugmentedBelief,
    y: &DVector<f64>,
    model: &M,
    jitter: f64,
) -> Result<(AugmentedBelief, Innovation)> {
    let nx = b.n_x();
    let mu = b.state_mean();
    let c = model.measurement_jacobian(&mu)?;
    check_dim("measurement", c.nrows(), y.len())?;
    check_dim("measurement Jacobian cols", nx, c.ncols())?;
    let r = model.measurement_noise();
    let cl = &c * b.chol().rows(0, nx);
    let psi = &cl * cl.transpose() + &r;
    let rho = Cholesky::new((&psi + psi.transpose()) * 0.5)
        .ok_or(Error::NotPositiveDefinite("innovation covariance"))?
        .unpack();
    let sig_ht = b.chol() * cl.transpose();
    let eta = rho
        .solve_lower_triangular(&sig_ht.transpose())
        .ok_or(Error::Singular("innovation factor"))?
        .transpose();
    let resid = y - model.measurement(&mu);
    let v = rho
        .solve_lower_triangular(&resid)
        .ok_or(Error::Singular("innovation factor"))?;
    let mean = b.mean() + &eta * v;

    let mut chol = b.chol().clone();
    if let Err(e) = chol_rank_update(&mut chol, &eta, -1.0) {
        log::debug!("correction downdate failed ({e}); refactorizing");
        let cov = b.covariance() - &eta * eta.transpose();
        chol = cholesky_with_jitter(&cov, jitter, "corrected covariance")?;
    }
    let info = Innovation {
        residual: resid.iter().copied().collect(),
        variance: psi.diagonal().iter().copied().collect(),
    };
    Ok((b.with_moments(mean, chol), info))
}

/// Components of the discard score of one inducing block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiscardScore {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl DiscardScore {
    pub fn total(&self) -> f64 {
        self.delta1 + self.delta2 + self.delta3
    }
}

/// Discard scores of every inducing block. Lower means cheaper to drop.
pub fn score_all(b: &AugmentedBelief) -> Result<Vec<DiscardScore>> {
    let Some(chol0) = inducing_cholesky(b)? else {
        return Ok(Vec::new());
    };
    let nu = b.n_u();
    let nf = b.n_f();
    let nx = b.n_x();
    let sigma2 = b.hyperparameters().signal_variances();
    let q0 = chol0.inverse();
    let m = b.inducing_mean_matrix();
    let qm = &q0 * &m; // row d, col a: q_dᵀ m_a
    let l_u = inducing_rows(b);
    let s_uu = &l_u * l_u.transpose();

    // Conditional precision of u given x is (L_uu L_uuᵀ)⁻¹.
    let nuf = nu * nf;
    let l_uu = b.chol().view((nx, nx), (nuf, nuf)).into_owned();
    let linv = lower_triangular_inverse(&l_uu)?;

    let mut out = Vec::with_capacity(nu);
    for d in 0..nu {
        let qdd = q0[(d, d)];
        let q_d = q0.row(d);
        let mut delta1 = 0.0;
        let mut delta2 = 0.0;
        let mut logdet_q = nf as f64 * qdd.ln();
        for a in 0..nf {
            delta1 += qm[(d, a)].powi(2) / (sigma2[a] * qdd);
            let mut quad = 0.0;
            for j in 0..nu {
                let mut acc = 0.0;
                for k in 0..nu {
                    acc += s_uu[(j * nf + a, k * nf + a)] * q_d[k];
                }
                quad += q_d[j] * acc;
            }
            delta2 += quad / (sigma2[a] * qdd);
            logdet_q -= sigma2[a].ln();
        }
        let cols = linv.view((d * nf, d * nf), (nuf - d * nf, nf));
        let omega = cols.tr_mul(&cols);
        let logdet_omega = 2.0
            * Cholesky::new(omega)
                .ok_or(Error::NotPositiveDefinite("inducing block precision"))?
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        out.push(DiscardScore {
            delta1,
            delta2,
            delta3: logdet_omega - logdet_q,
        });
    }
    Ok(out)
}

/// Index of the lowest score, first one on ties.
pub fn argmin_score(scores: &[DiscardScore]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        let t = s.total();
        if best.is_none_or(|(_, bt)| t < bt) {
            best = Some((i, t));
        }
    }
    best.map(|(i, _)| i)
}

/// Marginalizes inducing block `d` out of the belief.
pub fn discard(b: &AugmentedBelief, d: usize) -> Result<AugmentedBelief> {
    b.chol_drop(d)
}
