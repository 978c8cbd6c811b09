//! GP moments implied by the current belief at query inputs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::belief::AugmentedBelief;
use crate::error::Result;
use crate::kernel::{base_gram_cholesky, base_matrix, kron_diag, kron_identity, DEFAULT_JITTER};

/// Moments of `f(Z*)` (input-major, `n_q·n_f` long) under the belief.
#[derive(Clone, Debug, PartialEq)]
pub struct GpPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `Cov(x, f(Z*))`, `n_x × n_q·n_f`.
    pub cross_x: DMatrix<f64>,
}

/// Cholesky factor of the jittered base Gram matrix of the inducing inputs,
/// `None` when the set is empty.
pub(crate) fn inducing_cholesky(b: &AugmentedBelief) -> Result<Option<Cholesky<f64, Dyn>>> {
    if b.n_u() == 0 {
        return Ok(None);
    }
    base_gram_cholesky(b.inducing_inputs(), b.hyperparameters(), DEFAULT_JITTER).map(Some)
}

/// Rows of the factor belonging to the inducing values.
pub(crate) fn inducing_rows(b: &AugmentedBelief) -> DMatrix<f64> {
    b.chol().rows(b.n_x(), b.dim() - b.n_x()).into_owned()
}

pub fn gp_posterior(b: &AugmentedBelief, queries: &[DVector<f64>]) -> Result<GpPosterior> {
    let h = b.hyperparameters();
    let nf = b.n_f();
    let sigma2 = h.signal_variances();
    let k_qq = base_matrix(queries, queries, h)?;
    let Some(chol0) = inducing_cholesky(b)? else {
        return Ok(GpPosterior {
            mean: DVector::zeros(queries.len() * nf),
            cov: kron_diag(&k_qq, &sigma2),
            cross_x: DMatrix::zeros(b.n_x(), queries.len() * nf),
        });
    };
    let k_uq = base_matrix(b.inducing_inputs(), queries, h)?;
    let w = chol0.solve(&k_uq);
    let k_fu = kron_identity(&w.transpose(), nf);
    let mean = &k_fu * b.mean().rows(b.n_x(), b.dim() - b.n_x());
    let bmat = &k_fu * inducing_rows(b);
    let cond = &k_qq - k_uq.transpose() * &w;
    let cov = kron_diag(&cond, &sigma2) + &bmat * bmat.transpose();
    let cross_x = b.chol().rows(0, b.n_x()) * bmat.transpose();
    Ok(GpPosterior { mean, cov, cross_x })
}

/// Prior conditional variance of `f(z)` given the inducing values, on the
/// unit-variance base kernel. Always in `[0, 1]`.
pub fn novelty(b: &AugmentedBelief, z: &DVector<f64>) -> Result<f64> {
    let Some(chol0) = inducing_cholesky(b)? else {
        return Ok(1.0);
    };
    let k = base_matrix(
        b.inducing_inputs(),
        std::slice::from_ref(z),
        b.hyperparameters(),
    )?;
    let w = chol0.solve(&k);
    Ok((1.0 - k.dot(&w)).clamp(0.0, 1.0))
}
