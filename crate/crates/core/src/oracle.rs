//! Brute-force references: dense-covariance filter, Gaussian KL, exact GP
//! regression, finite-difference gradients and an offline GP fit.
//!
//! Everything here forms covariances and inverses explicitly. It is meant for
//! small problems and for checking the square-root implementation.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::belief::AugmentedBelief;
use crate::error::{check_dim, Error, Result};
use crate::filter::FilterConfig;
use crate::hypopt::{AdamConfig, AdamState};
use crate::kernel::{
    base_gram, base_length_grad, base_matrix, k_input_grad, kron_diag, Hyperparameters,
    DEFAULT_JITTER,
};
use crate::models::ModelSpec;

/// Joint Gaussian over `[x; u]` with an explicit covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseBelief {
    pub n_x: usize,
    pub z: Vec<DVector<f64>>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub hyper: Hyperparameters,
}

impl From<&AugmentedBelief> for DenseBelief {
    fn from(b: &AugmentedBelief) -> Self {
        Self {
            n_x: b.n_x(),
            z: b.inducing_inputs().to_vec(),
            mean: b.mean().clone(),
            cov: b.covariance(),
            hyper: b.hyperparameters().clone(),
        }
    }
}

fn inv(a: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    a.clone().try_inverse().ok_or(Error::Singular(what))
}

fn logdet_spd(a: &DMatrix<f64>, what: &'static str) -> Result<f64> {
    let c = Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite(what))?;
    Ok(2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

fn delete_block(
    v: &DVector<f64>,
    m: &DMatrix<f64>,
    start: usize,
    len: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let keep: Vec<usize> = (0..v.len())
        .filter(|i| *i < start || *i >= start + len)
        .collect();
    let n = keep.len();
    (
        DVector::from_fn(n, |i, _| v[keep[i]]),
        DMatrix::from_fn(n, n, |i, j| m[(keep[i], keep[j])]),
    )
}

impl DenseBelief {
    pub fn n_f(&self) -> usize {
        self.hyper.n_f()
    }

    pub fn n_u(&self) -> usize {
        self.z.len()
    }

    /// Full multi-output `K_uu` including the base jitter.
    pub fn k_uu(&self, h: &Hyperparameters) -> Result<DMatrix<f64>> {
        Ok(kron_diag(
            &base_gram(&self.z, h, DEFAULT_JITTER)?,
            &h.signal_variances(),
        ))
    }

    fn u_block(&self) -> (DVector<f64>, DMatrix<f64>) {
        let nx = self.n_x;
        let n = self.mean.len() - nx;
        (
            self.mean.rows(nx, n).into_owned(),
            self.cov.view((nx, nx), (n, n)).into_owned(),
        )
    }

    pub fn discard(&self, d: usize) -> DenseBelief {
        let nf = self.n_f();
        let (mean, cov) = delete_block(&self.mean, &self.cov, self.n_x + d * nf, nf);
        let mut z = self.z.clone();
        z.remove(d);
        DenseBelief {
            n_x: self.n_x,
            z,
            mean,
            cov,
            hyper: self.hyper.clone(),
        }
    }

    /// Discard scores with explicit `K_uu⁻¹` and `Σ⁻¹`.
    pub fn scores(&self) -> Result<Vec<f64>> {
        let nf = self.n_f();
        let q = inv(&self.k_uu(&self.hyper)?, "K_uu")?;
        let omega = inv(&self.cov, "joint covariance")?;
        let (m, s) = self.u_block();
        let nx = self.n_x;
        let mut out = Vec::new();
        for d in 0..self.n_u() {
            let r = d * nf;
            let q_du = q.rows(r, nf).into_owned();
            let q_dd = q.view((r, r), (nf, nf)).into_owned();
            let q_dd_inv = inv(&q_dd, "Q_dd")?;
            let v = &q_du * &m;
            let d1 = v.dot(&(&q_dd_inv * &v));
            let d2 = (&q_du * &s * q_du.transpose() * &q_dd_inv).trace();
            let om = omega.view((nx + r, nx + r), (nf, nf)).into_owned();
            let d3 = logdet_spd(&om, "Ω_dd")? - logdet_spd(&q_dd, "Q_dd")?;
            out.push(d1 + d2 + d3);
        }
        Ok(out)
    }

    /// Exact inclusive KL from this belief to the one where block `d` is
    /// replaced by its prior conditional given the remaining inducing values.
    pub fn discard_kl(&self, d: usize) -> Result<f64> {
        let nf = self.n_f();
        let nx = self.n_x;
        let n = self.mean.len();
        let k = self.k_uu(&self.hyper)?;
        let r = d * nf;
        let others: Vec<usize> = (0..k.nrows()).filter(|i| *i < r || *i >= r + nf).collect();
        let k_ll = DMatrix::from_fn(others.len(), others.len(), |i, j| k[(others[i], others[j])]);
        let k_dl = DMatrix::from_fn(nf, others.len(), |i, j| k[(r + i, others[j])]);
        let k_dd = k.view((r, r), (nf, nf)).into_owned();
        let a = &k_dl * inv(&k_ll, "K_ll")?;
        let gamma = &k_dd - &a * k_dl.transpose();

        // Linear map from the kept variables [x, u_l] to the full vector, plus
        // the conditional noise on block d.
        let (m_keep, s_keep) = delete_block(&self.mean, &self.cov, nx + r, nf);
        let mut t = DMatrix::zeros(n, m_keep.len());
        let kept = (0..n).filter(|i| *i < nx + r || *i >= nx + r + nf);
        for (kk, i) in kept.enumerate() {
            t[(i, kk)] = 1.0;
        }
        for i in 0..nf {
            for j in 0..others.len() {
                t[(nx + r + i, nx + j)] = a[(i, j)];
            }
        }
        let mean2 = &t * &m_keep;
        let mut cov2 = &t * &s_keep * t.transpose();
        let mut blk = cov2.view_mut((nx + r, nx + r), (nf, nf));
        blk += &gamma;
        gaussian_kl(&self.mean, &self.cov, &mean2, &cov2)
    }
}

/// `KL(N(m1, S1) ‖ N(m2, S2))`.
pub fn gaussian_kl(
    m1: &DVector<f64>,
    s1: &DMatrix<f64>,
    m2: &DVector<f64>,
    s2: &DMatrix<f64>,
) -> Result<f64> {
    let n = m1.len();
    check_dim("KL mean", n, m2.len())?;
    let c2 = Cholesky::new(s2.clone()).ok_or(Error::NotPositiveDefinite("KL second covariance"))?;
    let ld1 = logdet_spd(s1, "KL first covariance")?;
    let ld2 = 2.0 * c2.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let dm = m2 - m1;
    let tr = c2.solve(s1).trace();
    let quad = dm.dot(&c2.solve(&dm));
    Ok(0.5 * (tr + quad - n as f64 + ld2 - ld1))
}

/// Literal dense implementation of one filter recursion.
pub fn dense_step<M: ModelSpec + ?Sized>(
    db: &DenseBelief,
    control: &[f64],
    y: Option<&DVector<f64>>,
    model: &M,
    config: &FilterConfig,
    adam: &mut AdamState,
) -> Result<DenseBelief> {
    let nx = db.n_x;
    let nf = db.n_f();
    let h = db.hyper.clone();
    let sigma2 = h.signal_variances();
    let mu = db.mean.rows(0, nx).into_owned();
    let z_t = model.gp_input(&mu, control);
    let (m_u, _) = db.u_block();
    let nuf = m_u.len();

    // GP conditional at z_t
    let (k_tu, gamma, gamma0, dm_dz) = if db.n_u() == 0 {
        (
            DMatrix::zeros(nf, 0),
            DMatrix::from_diagonal(&sigma2),
            1.0,
            DMatrix::zeros(nf, h.n_in()),
        )
    } else {
        let k_uu_inv = inv(&db.k_uu(&h)?, "K_uu")?;
        let k0_tu = base_matrix(std::slice::from_ref(&z_t), &db.z, &h)?;
        let k_tu_full = kron_diag(&k0_tu, &sigma2);
        let k_tu = &k_tu_full * &k_uu_inv;
        let gamma = DMatrix::from_diagonal(&sigma2) - &k_tu * k_tu_full.transpose();
        let k0_uu_inv = inv(&base_gram(&db.z, &h, DEFAULT_JITTER)?, "K0_uu")?;
        let gamma0 = (1.0 - (&k0_tu * &k0_uu_inv * k0_tu.transpose())[(0, 0)]).clamp(0.0, 1.0);
        // ∂(k_tu m_u)/∂z: column i uses ∂K_tu/∂z_i
        let g = k_input_grad(&z_t, &db.z, &h)?;
        let mut dm = DMatrix::zeros(nf, h.n_in());
        for i in 0..h.n_in() {
            let dk0 = DMatrix::from_fn(1, db.n_u(), |_, j| g[(i, j)]);
            let dk = kron_diag(&dk0, &sigma2) * &k_uu_inv;
            dm.set_column(i, &(dk * &m_u));
        }
        (k_tu, gamma, gamma0, dm)
    };
    let m_ft = &k_tu * &m_u;
    let (fx, af) = model.transition_jacobians(&mu, &m_ft, control)?;
    let ax = &fx + &af * dm_dz * model.gp_input_jacobian(&mu, control)?;
    let f_t = model.transition(&mu, &m_ft, control);
    let q = model.process_noise();

    let mut z = db.z.clone();
    let n = db.mean.len();
    let (mut mean, mut cov) = if gamma0 > config.novelty_tol {
        // augment with f_t, then propagate
        let sig_xu = db.cov.columns(nx, nuf).into_owned();
        let s_uu = db.cov.view((nx, nx), (nuf, nuf)).into_owned();
        let na = n + nf;
        let mut sig = DMatrix::zeros(na, na);
        sig.view_mut((0, 0), (n, n)).copy_from(&db.cov);
        let cross = &sig_xu * k_tu.transpose();
        sig.view_mut((0, n), (n, nf)).copy_from(&cross);
        sig.view_mut((n, 0), (nf, n)).copy_from(&cross.transpose());
        sig.view_mut((n, n), (nf, nf))
            .copy_from(&(&gamma + &k_tu * s_uu * k_tu.transpose()));
        let mut phi = DMatrix::identity(na, na);
        phi.view_mut((0, 0), (nx, nx)).copy_from(&ax);
        phi.view_mut((0, n), (nx, nf)).copy_from(&af);
        let mut noise = DMatrix::zeros(na, na);
        noise.view_mut((0, 0), (nx, nx)).copy_from(&q);
        let cov = &phi * sig * phi.transpose() + noise;
        let mut mean = DVector::zeros(na);
        mean.rows_mut(0, nx).copy_from(&f_t);
        mean.rows_mut(nx, nuf).copy_from(&m_u);
        mean.rows_mut(n, nf).copy_from(&m_ft);
        z.push(z_t.clone());
        (mean, cov)
    } else {
        let mut phi = DMatrix::identity(n, n);
        phi.view_mut((0, 0), (nx, nx)).copy_from(&ax);
        phi.view_mut((0, nx), (nx, nuf)).copy_from(&(&af * &k_tu));
        let mut noise = DMatrix::zeros(n, n);
        noise
            .view_mut((0, 0), (nx, nx))
            .copy_from(&(&af * &gamma * af.transpose() + &q));
        let cov = &phi * &db.cov * phi.transpose() + noise;
        let mut mean = db.mean.clone();
        mean.rows_mut(0, nx).copy_from(&f_t);
        (mean, cov)
    };

    let mut cur = DenseBelief {
        n_x: nx,
        z,
        mean: mean.clone(),
        cov: cov.clone(),
        hyper: h.clone(),
    };
    while cur.n_u() > config.budget {
        let s = cur.scores()?;
        let mut best = 0;
        for (i, v) in s.iter().enumerate() {
            if *v < s[best] {
                best = i;
            }
        }
        cur = cur.discard(best);
    }
    mean = cur.mean.clone();
    cov = cur.cov.clone();

    if let Some(y) = y {
        let mu = mean.rows(0, nx).into_owned();
        let c = model.measurement_jacobian(&mu)?;
        let nn = mean.len();
        let mut hm = DMatrix::zeros(c.nrows(), nn);
        hm.view_mut((0, 0), (c.nrows(), nx)).copy_from(&c);
        let psi = &hm * &cov * hm.transpose() + model.measurement_noise();
        let gain = &cov * hm.transpose() * inv(&psi, "innovation covariance")?;
        mean += &gain * (y - model.measurement(&mu));
        cov = &cov - &gain * &hm * &cov;
    }
    cur.mean = mean;
    cur.cov = cov;

    if config.hyperopt && cur.n_u() >= 2 {
        let old = cur.hyper.clone();
        let g = dense_loss_grad(&cur, &old)?;
        let mut delta = adam.step(&g);
        if let Some(tr) = config.trust_region {
            delta.iter_mut().for_each(|d| *d = d.clamp(-tr, tr));
        }
        let theta: Vec<f64> = old
            .to_vec()
            .iter()
            .zip(&delta)
            .map(|(a, b)| a + b)
            .collect();
        let new = Hyperparameters::from_vec(old.n_in(), &theta)?;
        cur = dense_apply_hyperparams(&cur, &new)?;
    }
    Ok(cur)
}

/// Loss `m_uᵀ A⁻¹ E m_u + log|K_new| + log|A|` with explicit inverses.
pub fn dense_loss(db: &DenseBelief, theta: &Hyperparameters) -> Result<f64> {
    let (m, s) = db.u_block();
    let k_new = db.k_uu(theta)?;
    let e = inv(&k_new, "K_new")? - inv(&db.k_uu(&db.hyper)?, "K_old")?;
    let a = &e * &s + DMatrix::identity(m.len(), m.len());
    let l1 = m.dot(&(inv(&a, "A")? * &e * &m));
    let l2 = logdet_spd(&k_new, "K_new")? + a.determinant().abs().ln();
    Ok(l1 + l2)
}

/// Gradient of [`dense_loss`] with the derivative matrices formed in full.
pub fn dense_loss_grad(db: &DenseBelief, theta: &Hyperparameters) -> Result<Vec<f64>> {
    let (m, s) = db.u_block();
    let n = m.len();
    let k_new = db.k_uu(theta)?;
    let kn_inv = inv(&k_new, "K_new")?;
    let e = &kn_inv - inv(&db.k_uu(&db.hyper)?, "K_old")?;
    let a_inv = inv(&(&e * &s + DMatrix::identity(n, n)), "A")?;
    let sigma2 = theta.signal_variances();
    let base = base_matrix(&db.z, &db.z, theta)?;
    let mut out = Vec::new();
    for j in 0..theta.len() {
        let dk = if j < theta.n_in() {
            kron_diag(&base_length_grad(&base, &db.z, &db.z, theta, j), &sigma2)
        } else {
            let a = j - theta.n_in();
            let mut w = DVector::zeros(theta.n_f());
            w[a] = sigma2[a];
            kron_diag(&base_gram(&db.z, theta, DEFAULT_JITTER)?, &w)
        };
        let de = -(&kn_inv * &dk * &kn_inv);
        let d_ainv_e = -(&a_inv * &de * &s * &a_inv * &e) + &a_inv * &de;
        let dl1 = m.dot(&(d_ainv_e * &m));
        let dl2 = (&kn_inv * &dk).trace() + (&a_inv * &de * &s).trace();
        out.push(dl1 + dl2);
    }
    Ok(out)
}

/// Hyperparameter adjustment with explicit gain `Σ H̃ᵀ (E S + I)⁻¹ E`.
pub fn dense_apply_hyperparams(db: &DenseBelief, theta: &Hyperparameters) -> Result<DenseBelief> {
    let (m, s) = db.u_block();
    let n = db.mean.len();
    let nu = m.len();
    let e = inv(&db.k_uu(theta)?, "K_new")? - inv(&db.k_uu(&db.hyper)?, "K_old")?;
    let mut ht = DMatrix::zeros(nu, n);
    ht.view_mut((0, db.n_x), (nu, nu)).fill_with_identity();
    let gain = &db.cov * ht.transpose() * inv(&(&e * &s + DMatrix::identity(nu, nu)), "A")? * &e;
    let mean = &db.mean - &gain * &m;
    let cov = &db.cov - &gain * &ht * &db.cov;
    Ok(DenseBelief {
        mean,
        cov: (&cov + cov.transpose()) * 0.5,
        hyper: theta.clone(),
        ..db.clone()
    })
}

/// The adjustment as a product of Gaussians in natural parameters:
/// precision `Σ⁻¹ + blockdiag(0, K_new⁻¹ − K_old⁻¹)`, shift `Σ⁻¹ ξ`.
pub fn natural_param_adjust(db: &DenseBelief, theta: &Hyperparameters) -> Result<DenseBelief> {
    let n = db.mean.len();
    let nx = db.n_x;
    let prec = inv(&db.cov, "joint covariance")?;
    let shift = &prec * &db.mean;
    let e = inv(&db.k_uu(theta)?, "K_new")? - inv(&db.k_uu(&db.hyper)?, "K_old")?;
    let mut lam = prec;
    let nu = n - nx;
    let mut block = lam.view_mut((nx, nx), (nu, nu));
    block += &e;
    let cov = inv(&lam, "adjusted precision")?;
    let mean = &cov * shift;
    Ok(DenseBelief {
        mean,
        cov,
        hyper: theta.clone(),
        ..db.clone()
    })
}

/// Exact GP regression with independent outputs.
///
/// `targets` is `n × n_f`; `noise_var[a]` is the observation noise variance of
/// output `a`. Returns the posterior mean (`n_q × n_f`) and one `n_q × n_q`
/// covariance per output.
pub fn exact_gpr(
    inputs: &[DVector<f64>],
    targets: &DMatrix<f64>,
    noise_var: &[f64],
    h: &Hyperparameters,
    queries: &[DVector<f64>],
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let nf = h.n_f();
    check_dim("GPR targets rows", inputs.len(), targets.nrows())?;
    check_dim("GPR targets cols", nf, targets.ncols())?;
    check_dim("GPR noise", nf, noise_var.len())?;
    let k = base_matrix(inputs, inputs, h)?;
    let k_qx = base_matrix(queries, inputs, h)?;
    let k_qq = base_matrix(queries, queries, h)?;
    let sigma2 = h.signal_variances();
    let mut mean = DMatrix::zeros(queries.len(), nf);
    let mut covs = Vec::with_capacity(nf);
    for a in 0..nf {
        let mut ka = &k * sigma2[a];
        for i in 0..ka.nrows() {
            ka[(i, i)] += noise_var[a];
        }
        let chol = Cholesky::new(ka).ok_or(Error::NotPositiveDefinite("GPR kernel matrix"))?;
        let kq = &k_qx * sigma2[a];
        let alpha = chol.solve(&targets.column(a).into_owned());
        mean.set_column(a, &(&kq * alpha));
        covs.push(&k_qq * sigma2[a] - &kq * chol.solve(&kq.transpose()));
    }
    Ok((mean, covs))
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut p = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        p[i] = x[i] + step;
        let fp = f(&p);
        p[i] = x[i] - step;
        let fm = f(&p);
        p[i] = x[i];
        let d = (fp - fm) / (2.0 * step);
        if !d.is_finite() {
            return Err(Error::NonFinite("finite-difference gradient"));
        }
        g.push(d);
    }
    Ok(g)
}

/// Negative log marginal likelihood (without the `2π` constant) of a GP with
/// fixed noise variance and its gradient over the log-hyperparameters.
pub fn gpr_nlml(
    inputs: &[DVector<f64>],
    targets: &DMatrix<f64>,
    noise_var: f64,
    h: &Hyperparameters,
) -> Result<(f64, Vec<f64>)> {
    let n = inputs.len();
    let base = base_matrix(inputs, inputs, h)?;
    let sigma2 = h.signal_variances();
    let mut value = 0.0;
    let mut grad = vec![0.0; h.len()];
    for a in 0..h.n_f() {
        let mut k = &base * sigma2[a];
        for i in 0..n {
            k[(i, i)] += noise_var;
        }
        let chol = Cholesky::new(k).ok_or(Error::NotPositiveDefinite("GPR kernel matrix"))?;
        let y = targets.column(a).into_owned();
        let alpha = chol.solve(&y);
        let ld = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        value += 0.5 * y.dot(&alpha) + 0.5 * ld;
        // ∂/∂θ = ½ tr((K⁻¹ − ααᵀ) ∂K)
        let w = chol.inverse() - &alpha * alpha.transpose();
        for i in 0..h.n_in() {
            let dk = base_length_grad(&base, inputs, inputs, h, i) * sigma2[a];
            grad[i] += 0.5 * w.component_mul(&dk).sum();
        }
        grad[h.n_in() + a] += 0.5 * w.component_mul(&(&base * sigma2[a])).sum();
    }
    Ok((value, grad))
}

/// Maximizes the GP marginal likelihood over log-hyperparameters with Adam
/// (2000 iterations, learning rate 0.01), noise variance held fixed.
pub fn offline_gpr_fit(
    inputs: &[DVector<f64>],
    targets: &DMatrix<f64>,
    noise_var: f64,
    h0: &Hyperparameters,
) -> Result<Hyperparameters> {
    if inputs.len() < 10 {
        return Err(Error::Config(
            "offline GP fit needs at least 10 samples".into(),
        ));
    }
    let mut theta = h0.to_vec();
    let mut adam = AdamState::new(theta.len(), AdamConfig::default());
    for _ in 0..2000 {
        let h = Hyperparameters::from_vec(h0.n_in(), &theta)?;
        let (_, g) = gpr_nlml(inputs, targets, noise_var, &h)?;
        let d = adam.step(&g);
        theta.iter_mut().zip(&d).for_each(|(t, d)| *t += d);
    }
    Hyperparameters::from_vec(h0.n_in(), &theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kl_closed_forms() {
        let i = DMatrix::identity(1, 1);
        assert_eq!(
            gaussian_kl(&dvector![0.3], &i, &dvector![0.3], &i).unwrap(),
            0.0
        );
        assert_relative_eq!(
            gaussian_kl(&dvector![0.0], &i, &dvector![1.0], &i).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn kl_matches_quadrature() {
        // ∫ p log(p/q) on a grid for a 2D pair
        let m1 = dvector![0.2, -0.1];
        let s1 = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let m2 = dvector![-0.1, 0.3];
        let s2 = DMatrix::from_row_slice(2, 2, &[0.8, -0.2, -0.2, 0.6]);
        let logpdf = |m: &DVector<f64>, s: &DMatrix<f64>, x: &DVector<f64>| {
            let si = s.clone().try_inverse().unwrap();
            let d = x - m;
            -0.5 * d.dot(&(si * &d)) - 0.5 * s.determinant().ln() - std::f64::consts::TAU.ln()
        };
        let (lo, hi, n) = (-5.0, 5.0, 600);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = dvector![lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
                let lp = logpdf(&m1, &s1, &x);
                acc += lp.exp() * (lp - logpdf(&m2, &s2, &x)) * h * h;
            }
        }
        let kl = gaussian_kl(&m1, &s1, &m2, &s2).unwrap();
        assert!((kl - acc).abs() < 1e-4, "{kl} vs {acc}");
    }

    #[test]
    fn gpr_interpolates_and_decays() {
        let h = Hyperparameters::isotropic(1, 1, 1.0, 2.0).unwrap();
        let x = vec![dvector![0.0], dvector![1.0]];
        let y = DMatrix::from_column_slice(2, 1, &[0.5, -0.3]);
        let (m, c) = exact_gpr(&x, &y, &[0.0], &h, &[dvector![1.0], dvector![50.0]]).unwrap();
        assert_relative_eq!(m[(0, 0)], -0.3, epsilon = 1e-10);
        assert!(c[0][(0, 0)].abs() < 1e-10);
        assert!(m[(1, 0)].abs() < 1e-12);
        assert_relative_eq!(c[0][(1, 1)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn fd_gradient_of_polynomials() {
        let g = fd_gradient(|x| 3.0 * x[0] - 2.0 * x[1], &[0.4, 1.0], 1e-5).unwrap();
        assert_relative_eq!(g[0], 3.0, epsilon = 1e-9);
        assert_relative_eq!(g[1], -2.0, epsilon = 1e-9);
        let g = fd_gradient(|x| x[0] * x[0] + x[0] * x[1], &[1.0, 2.0], 1e-4).unwrap();
        assert_relative_eq!(g[0], 4.0, epsilon = 1e-8);
        assert_relative_eq!(g[1], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn nlml_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x: Vec<DVector<f64>> = (0..15)
            .map(|_| dvector![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let y = DMatrix::from_fn(15, 1, |i, _| x[i][0].sin() + 0.3 * x[i][1]);
        let h = Hyperparameters::new(&[0.9, 1.4], &[0.7]).unwrap();
        let (_, g) = gpr_nlml(&x, &y, 0.01, &h).unwrap();
        let fd = fd_gradient(
            |t| {
                gpr_nlml(&x, &y, 0.01, &Hyperparameters::from_vec(2, t).unwrap())
                    .unwrap()
                    .0
            },
            &h.to_vec(),
            1e-5,
        )
        .unwrap();
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn offline_fit_handles_duplicates_deterministically() {
        let x: Vec<DVector<f64>> = (0..12).map(|i| dvector![(i / 2) as f64 * 0.5]).collect();
        let y = DMatrix::from_fn(12, 1, |i, _| x[i][0].sin());
        let h0 = Hyperparameters::isotropic(1, 1, 1.0, 1.0).unwrap();
        let a = offline_gpr_fit(&x, &y, 1e-4, &h0).unwrap();
        let b = offline_gpr_fit(&x, &y, 1e-4, &h0).unwrap();
        assert_eq!(a, b);
        assert!(a.to_vec().iter().all(|v| v.is_finite()));
    }
}
