//! Online hyperparameter learning: the recovered-likelihood loss, its
//! gradient, Adam stepping and the matching belief adjustment.
//!
//! With `E = K_new⁻¹ − K_old⁻¹` and `A = E S_uu + I`, the loss is
//! `L1 + L2 = m_uᵀ A⁻¹ E m_u + log|K_new A|`. Everything is written in terms
//! of `E` so that `θ_new = θ_old` is regular.

use nalgebra::{DMatrix, DVector, LU};
use serde::{Deserialize, Serialize};

use crate::belief::{cholesky_with_jitter, log_abs_det, AugmentedBelief};
use crate::error::{check_dim, Error, Result};
use crate::kernel::{
    base_gram, base_gram_cholesky, base_length_grad, base_matrix, kron_diag, Hyperparameters,
    DEFAULT_JITTER,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
}

/// Quantities shared by the loss, its gradient and the adjustment.
struct LossParts {
    k_new: DMatrix<f64>,
    k_new_inv: DMatrix<f64>,
    e: DMatrix<f64>,
    a_lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    m: DVector<f64>,
    s: DMatrix<f64>,
}

/// Multi-output Gram matrix `(K0 + εI) ⊗ diag(σ²)` and its inverse.
fn gram_and_inverse(
    z: &[DVector<f64>],
    h: &Hyperparameters,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let chol = base_gram_cholesky(z, h, DEFAULT_JITTER)?;
    let sigma2 = h.signal_variances();
    let k = kron_diag(&base_gram(z, h, DEFAULT_JITTER)?, &sigma2);
    let k_inv = kron_diag(&chol.inverse(), &sigma2.map(|v| 1.0 / v));
    Ok((k, k_inv))
}

fn check_theta(b: &AugmentedBelief, theta: &Hyperparameters) -> Result<()> {
    check_dim("hyperparameter inputs", b.n_in(), theta.n_in())?;
    check_dim("hyperparameter outputs", b.n_f(), theta.n_f())
}

fn loss_parts(b: &AugmentedBelief, theta: &Hyperparameters) -> Result<LossParts> {
    check_theta(b, theta)?;
    let z = b.inducing_inputs();
    let (_, k_old_inv) = gram_and_inverse(z, b.hyperparameters())?;
    let (k_new, k_new_inv) = gram_and_inverse(z, theta)?;
    let e = &k_new_inv - k_old_inv;
    let nx = b.n_x();
    let n = b.dim() - nx;
    let l_u = b.chol().rows(nx, n);
    let s = &l_u * l_u.transpose();
    let a = &e * &s + DMatrix::identity(n, n);
    Ok(LossParts {
        k_new,
        k_new_inv,
        e,
        a_lu: a.lu(),
        m: b.mean().rows(nx, n).into_owned(),
        s,
    })
}

pub fn hyper_loss(b: &AugmentedBelief, theta: &Hyperparameters) -> Result<LossTerms> {
    if b.n_u() == 0 {
        check_theta(b, theta)?;
        return Ok(LossTerms {
            l1: 0.0,
            l2: 0.0,
            total: 0.0,
        });
    }
    let p = loss_parts(b, theta)?;
    let em = &p.e * &p.m;
    let x = p.a_lu.solve(&em).ok_or(Error::Singular("E S + I"))?;
    let l1 = p.m.dot(&x);
    // |K_new + (I − K_new K_old⁻¹) S| = |K_new| |A|
    let (ld_k, _) = log_abs_det(&p.k_new)?;
    let (ld_a, _) = log_abs_det(&(&p.e * &p.s + DMatrix::identity(p.s.nrows(), p.s.nrows())))?;
    let l2 = ld_k + ld_a;
    Ok(LossTerms {
        l1,
        l2,
        total: l1 + l2,
    })
}

/// Gradient of [`hyper_loss`] with respect to the flat log-hyperparameters
/// of `theta`.
pub fn hyper_loss_grad(b: &AugmentedBelief, theta: &Hyperparameters) -> Result<Vec<f64>> {
    if b.n_u() == 0 {
        check_theta(b, theta)?;
        return Ok(vec![0.0; theta.len()]);
    }
    let p = loss_parts(b, theta)?;
    let n = p.m.len();
    let a_inv = p.a_lu.try_inverse().ok_or(Error::Singular("E S + I"))?;
    // dL1 = −pᵀ dK q with p = K⁻¹A⁻ᵀm, q = K⁻¹(m − S A⁻¹ E m)
    let pa = &p.k_new_inv * (a_inv.transpose() * &p.m);
    let qb = &p.k_new_inv * (&p.m - &p.s * (&a_inv * (&p.e * &p.m)));
    // dL2 = tr(T dK) with T = K⁻¹ − K⁻¹ S A⁻¹ K⁻¹
    let t = &p.k_new_inv - &p.k_new_inv * &p.s * &a_inv * &p.k_new_inv;
    debug_assert_eq!(t.nrows(), n);

    let z = b.inducing_inputs();
    let nu = z.len();
    let nf = theta.n_f();
    let sigma2 = theta.signal_variances();
    let base = base_matrix(z, z, theta)?;
    // Contraction of a Kronecker-structured dK = D0 ⊗ diag(w) with the
    // gradient kernels.
    let contract = |d0: &DMatrix<f64>, w: &DVector<f64>| {
        let mut g = 0.0;
        for j in 0..nu {
            for k in 0..nu {
                let dv = d0[(j, k)];
                if dv == 0.0 {
                    continue;
                }
                for a in 0..nf {
                    if w[a] == 0.0 {
                        continue;
                    }
                    let (r, c) = (j * nf + a, k * nf + a);
                    g += dv * w[a] * (t[(c, r)] - pa[r] * qb[c]);
                }
            }
        }
        g
    };

    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.n_in() {
        let d0 = base_length_grad(&base, z, z, theta, i);
        grad.push(contract(&d0, &sigma2));
    }
    let mut gram = base;
    for i in 0..nu {
        gram[(i, i)] += DEFAULT_JITTER;
    }
    for a in 0..nf {
        let mut w = DVector::zeros(nf);
        w[a] = sigma2[a];
        grad.push(contract(&gram, &w));
    }
    Ok(grad)
}

/// Re-expresses the belief under new hyperparameters by multiplying in
/// `p(u; θ_new) / p(u; θ_old)`.
pub fn apply_hyperparams(
    b: &AugmentedBelief,
    theta: &Hyperparameters,
    jitter: f64,
) -> Result<AugmentedBelief> {
    check_theta(b, theta)?;
    if theta == b.hyperparameters() || b.n_u() == 0 {
        return Ok(b.clone().with_hyperparameters(theta.clone()));
    }
    let p = loss_parts(b, theta)?;
    let w = p.a_lu.solve(&p.e).ok_or(Error::Singular("E S + I"))?;
    let nx = b.n_x();
    let n_u = p.m.len();
    // Σ_{:,u} = L L_uᵀ
    let sig_xu = b.chol() * b.chol().rows(nx, n_u).transpose();
    let gain = &sig_xu * &w;
    let mean = b.mean() - &gain * &p.m;
    let cov = b.covariance() - &gain * sig_xu.transpose();
    let chol = cholesky_with_jitter(
        &((&cov + cov.transpose()) * 0.5),
        jitter,
        "adjusted covariance",
    )?;
    Ok(b.with_moments(mean, chol)
        .with_hyperparameters(theta.clone()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            config,
        }
    }

    /// Bias-corrected Adam update for a minimization step on `grad`.
    pub fn step(&mut self, grad: &[f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.m.len(), "gradient length");
        let c = self.config;
        self.t += 1;
        let b1t = 1.0 - c.beta1.powi(self.t as i32);
        let b2t = 1.0 - c.beta2.powi(self.t as i32);
        let mut out = Vec::with_capacity(grad.len());
        for i in 0..grad.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            out.push(-c.learning_rate * mh / (vh.sqrt() + c.eps));
        }
        out
    }
}

pub fn adam_step(state: &AdamState, grad: &[f64]) -> (AdamState, Vec<f64>) {
    let mut s = state.clone();
    let d = s.step(grad);
    (s, d)
}

/// Outcome of one optimizer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperStep {
    pub belief: AugmentedBelief,
    pub loss: LossTerms,
    pub gradient: Vec<f64>,
}

/// One Adam iteration on the loss followed by the belief adjustment.
///
/// `trust_region` clips every log-parameter change to that magnitude. A step
/// whose new Gram matrix is numerically singular is rejected and the belief
/// returned unchanged.
pub fn optimize_step(
    b: &AugmentedBelief,
    adam: &mut AdamState,
    trust_region: Option<f64>,
    jitter: f64,
) -> Result<HyperStep> {
    let old = b.hyperparameters().clone();
    let gradient = hyper_loss_grad(b, &old)?;
    let mut delta = adam.step(&gradient);
    if let Some(tr) = trust_region {
        delta.iter_mut().for_each(|d| *d = d.clamp(-tr, tr));
    }
    let theta: Vec<f64> = old
        .to_vec()
        .iter()
        .zip(&delta)
        .map(|(t, d)| t + d)
        .collect();
    let new = Hyperparameters::from_vec(old.n_in(), &theta)?;
    match (hyper_loss(b, &new), apply_hyperparams(b, &new, jitter)) {
        (Ok(loss), Ok(belief)) => Ok(HyperStep {
            belief,
            loss,
            gradient,
        }),
        (Err(Error::SingularKernel(i, j)), _) | (_, Err(Error::SingularKernel(i, j))) => {
            log::warn!("hyperparameter step rejected: Gram matrix singular at pair ({i}, {j})");
            Ok(HyperStep {
                belief: b.clone(),
                loss: hyper_loss(b, &old)?,
                gradient,
            })
        }
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn scalar_belief(k_old: f64) -> AugmentedBelief {
        // one inducing point, so K = σ² (1 + ε)
        let h = Hyperparameters::new(&[1.0], &[k_old / (1.0 + DEFAULT_JITTER)]).unwrap();
        AugmentedBelief::from_parts(
            1,
            vec![dvector![0.0]],
            dvector![0.0, 1.0],
            DMatrix::identity(2, 2),
            h,
        )
        .unwrap()
    }

    fn scalar_theta(k: f64) -> Hyperparameters {
        Hyperparameters::new(&[1.0], &[k / (1.0 + DEFAULT_JITTER)]).unwrap()
    }

    #[test]
    fn loss_at_equality() {
        let b = scalar_belief(2.0);
        let l = hyper_loss(&b, &scalar_theta(2.0)).unwrap();
        assert_eq!(l.l1, 0.0);
        assert_relative_eq!(l.l2, 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn loss_scalar_closed_form() {
        let b = scalar_belief(1.0);
        let l = hyper_loss(&b, &scalar_theta(2.0)).unwrap();
        assert_relative_eq!(l.l1, -1.0, epsilon = 1e-12);
        assert_relative_eq!(l.l2, 0.0, epsilon = 1e-12);
        assert_relative_eq!(l.total, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn adjustment_scalar_closed_form() {
        let b = scalar_belief(1.0);
        let out = apply_hyperparams(&b, &scalar_theta(2.0), 1e-12).unwrap();
        assert_relative_eq!(out.mean()[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(out.mean()[1], 2.0, epsilon = 1e-12);
        let cov = out.covariance();
        assert_relative_eq!(
            cov,
            DMatrix::from_diagonal(&dvector![1.0, 2.0]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn adjustment_identity_is_exact() {
        let b = scalar_belief(1.5);
        let out = apply_hyperparams(&b, &b.hyperparameters().clone(), 1e-12).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn empty_set_is_a_no_op() {
        let h = Hyperparameters::isotropic(1, 1, 1.0, 1.0).unwrap();
        let b = AugmentedBelief::new(dvector![0.0], &DMatrix::identity(1, 1), h.clone()).unwrap();
        assert_eq!(hyper_loss(&b, &h).unwrap().total, 0.0);
        assert_eq!(hyper_loss_grad(&b, &h).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let mut s = AdamState::new(2, AdamConfig::default());
        let d = s.step(&[0.0, 0.0]);
        assert_eq!(d, vec![0.0, 0.0]);
        let mut s = AdamState::new(2, AdamConfig::default());
        let d = s.step(&[3.0, -0.2]);
        assert_relative_eq!(d[0], -0.01, epsilon = 1e-9);
        assert_relative_eq!(d[1], 0.01, epsilon = 1e-9);
    }

    #[test]
    fn adam_matches_reference_trace() {
        // hand-rolled reference with textbook formulas
        let grads = [[1.0, -2.0], [0.5, 0.0], [-1.0, 4.0]];
        let (b1, b2, lr, eps) = (0.9f64, 0.999f64, 0.01, 1e-8);
        let mut m = [0.0; 2];
        let mut v = [0.0; 2];
        let mut s = AdamState::new(2, AdamConfig::default());
        for (t, g) in grads.iter().enumerate() {
            let got = s.step(g);
            for i in 0..2 {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powi(t as i32 + 1));
                let vh = v[i] / (1.0 - b2.powi(t as i32 + 1));
                assert_relative_eq!(got[i], -lr * mh / (vh.sqrt() + eps), epsilon = 1e-15);
            }
        }
        assert_eq!(s.t, 3);
    }
}
