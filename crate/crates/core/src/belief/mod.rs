//! Joint Gaussian over the augmented state `[x; u]` kept in square-root form.
//!
//! The mean is stored flat: the first `n_x` entries are the state mean, then
//! one block of `n_f` values per inducing input, in the order of
//! [`AugmentedBelief::inducing_inputs`]. The covariance is only ever held as
//! its lower-triangular Cholesky factor.

mod factor;

pub use factor::{
    chol_rank_update, cholesky_with_jitter, log_abs_det, lower_triangular_inverse, psd_factor,
    qr_propagate, qr_triangularize,
};

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::Hyperparameters;

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedBelief {
    n_x: usize,
    inducing: Vec<DVector<f64>>,
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    hyper: Hyperparameters,
}

/// Moments of the belief partitioned into state and inducing parts.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefBlocks {
    pub mu: DVector<f64>,
    pub p: DMatrix<f64>,
    pub v_xu: DMatrix<f64>,
    pub m_u: DVector<f64>,
    pub s_uu: DMatrix<f64>,
}

impl AugmentedBelief {
    /// Belief over the state alone, with an empty inducing set.
    pub fn new(
        x0_mean: DVector<f64>,
        x0_cov: &DMatrix<f64>,
        hyper: Hyperparameters,
    ) -> Result<Self> {
        let n = x0_mean.len();
        check_dim("initial covariance rows", n, x0_cov.nrows())?;
        check_dim("initial covariance cols", n, x0_cov.ncols())?;
        let chol = Cholesky::new(x0_cov.clone())
            .ok_or(Error::NotPositiveDefinite("initial state covariance"))?
            .unpack();
        Ok(Self {
            n_x: n,
            inducing: Vec::new(),
            mean: x0_mean,
            chol,
            hyper,
        })
    }

    /// Assembles a belief from raw parts, validating shapes and the factor.
    pub fn from_parts(
        n_x: usize,
        inducing: Vec<DVector<f64>>,
        mean: DVector<f64>,
        chol: DMatrix<f64>,
        hyper: Hyperparameters,
    ) -> Result<Self> {
        let dim = n_x + inducing.len() * hyper.n_f();
        check_dim("belief mean", dim, mean.len())?;
        check_dim("belief factor rows", dim, chol.nrows())?;
        check_dim("belief factor cols", dim, chol.ncols())?;
        for z in &inducing {
            check_dim("inducing input", hyper.n_in(), z.len())?;
        }
        for i in 0..dim {
            if !(chol[(i, i)] > 0.0) {
                return Err(Error::NotPositiveDefinite("belief factor diagonal"));
            }
            for j in (i + 1)..dim {
                if chol[(i, j)] != 0.0 {
                    return Err(Error::Config(
                        "belief factor is not lower triangular".into(),
                    ));
                }
            }
        }
        Ok(Self {
            n_x,
            inducing,
            mean,
            chol,
            hyper,
        })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_f(&self) -> usize {
        self.hyper.n_f()
    }

    pub fn n_in(&self) -> usize {
        self.hyper.n_in()
    }

    /// Number of inducing inputs.
    pub fn n_u(&self) -> usize {
        self.inducing.len()
    }

    /// Order of the augmented state.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn inducing_inputs(&self) -> &[DVector<f64>] {
        &self.inducing
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    pub fn state_mean(&self) -> DVector<f64> {
        self.mean.rows(0, self.n_x).into_owned()
    }

    pub fn state_cov(&self) -> DMatrix<f64> {
        let lx = self.chol.rows(0, self.n_x);
        &lx * lx.transpose()
    }

    /// Inducing means as an `n_u × n_f` matrix.
    pub fn inducing_mean_matrix(&self) -> DMatrix<f64> {
        let nf = self.n_f();
        DMatrix::from_fn(self.n_u(), nf, |j, a| self.mean[self.n_x + j * nf + a])
    }

    /// Rows/columns of inducing block `d` in the augmented state.
    pub fn block_range(&self, d: usize) -> Range<usize> {
        let start = self.n_x + d * self.n_f();
        start..start + self.n_f()
    }

    /// Rows of all inducing values.
    pub fn inducing_range(&self) -> Range<usize> {
        self.n_x..self.dim()
    }

    pub fn blocks(&self) -> BeliefBlocks {
        let nx = self.n_x;
        let nu = self.dim() - nx;
        let cov = self.covariance();
        BeliefBlocks {
            mu: self.mean.rows(0, nx).into_owned(),
            p: cov.view((0, 0), (nx, nx)).into_owned(),
            v_xu: cov.view((0, nx), (nx, nu)).into_owned(),
            m_u: self.mean.rows(nx, nu).into_owned(),
            s_uu: cov.view((nx, nx), (nu, nu)).into_owned(),
        }
    }

    /// Appends a new inducing block given its cross-covariance `ζ` with the
    /// current augmented state and its self-covariance `S_tt`.
    ///
    /// Solves `L αᵀ = ζ` and factors the Schur complement `S_tt − α αᵀ`.
    pub fn chol_append(
        &self,
        zeta: &DMatrix<f64>,
        s_tt: &DMatrix<f64>,
        new_mean: &DVector<f64>,
        z_new: DVector<f64>,
    ) -> Result<Self> {
        let nf = self.n_f();
        check_dim("append cross-covariance rows", self.dim(), zeta.nrows())?;
        check_dim("append cross-covariance cols", nf, zeta.ncols())?;
        check_dim("append self-covariance", nf, s_tt.nrows())?;
        let alpha_t = self
            .chol
            .solve_lower_triangular(zeta)
            .ok_or(Error::Singular("belief factor"))?;
        let schur = s_tt - alpha_t.transpose() * &alpha_t;
        let beta = Cholesky::new((&schur + schur.transpose()) * 0.5)
            .ok_or(Error::NotPositiveDefinite(
                "appended block Schur complement",
            ))?
            .unpack();
        self.append_factor(&alpha_t.transpose(), &beta, new_mean, z_new)
    }

    /// Appends a block whose new factor rows are `[α, β]` directly.
    pub(crate) fn append_factor(
        &self,
        alpha: &DMatrix<f64>,
        beta: &DMatrix<f64>,
        new_mean: &DVector<f64>,
        z_new: DVector<f64>,
    ) -> Result<Self> {
        let nf = self.n_f();
        let n = self.dim();
        check_dim("appended mean", nf, new_mean.len())?;
        check_dim("inducing input", self.n_in(), z_new.len())?;
        let mut chol = DMatrix::zeros(n + nf, n + nf);
        chol.view_mut((0, 0), (n, n)).copy_from(&self.chol);
        chol.view_mut((n, 0), (nf, n)).copy_from(alpha);
        chol.view_mut((n, n), (nf, nf)).copy_from(beta);
        let mut mean = DVector::zeros(n + nf);
        mean.rows_mut(0, n).copy_from(&self.mean);
        mean.rows_mut(n, nf).copy_from(new_mean);
        let mut inducing = self.inducing.clone();
        inducing.push(z_new);
        Ok(Self {
            n_x: self.n_x,
            inducing,
            mean,
            chol,
            hyper: self.hyper.clone(),
        })
    }

    /// Marginalizes out inducing block `d`.
    ///
    /// With `L = [[A,0,0],[a,b,0],[B,c,C]]` around the block, the new factor is
    /// `[[A,0],[B, chol(C Cᵀ + c cᵀ)]]`.
    pub fn chol_drop(&self, d: usize) -> Result<Self> {
        if d >= self.n_u() {
            return Err(Error::IndexOutOfRange {
                index: d,
                len: self.n_u(),
            });
        }
        let nf = self.n_f();
        let n = self.dim();
        let r = self.block_range(d);
        let (s, e) = (r.start, r.end);
        let tail = n - e;
        let m = n - nf;

        let mut chol = DMatrix::zeros(m, m);
        chol.view_mut((0, 0), (s, s))
            .copy_from(&self.chol.view((0, 0), (s, s)));
        chol.view_mut((s, 0), (tail, s))
            .copy_from(&self.chol.view((e, 0), (tail, s)));
        if tail > 0 {
            let mut c_big = self.chol.view((e, e), (tail, tail)).into_owned();
            let c_small = self.chol.view((e, s), (tail, nf)).into_owned();
            chol_rank_update(&mut c_big, &c_small, 1.0)?;
            chol.view_mut((s, s), (tail, tail)).copy_from(&c_big);
        }

        let mut mean = DVector::zeros(m);
        mean.rows_mut(0, s).copy_from(&self.mean.rows(0, s));
        mean.rows_mut(s, tail).copy_from(&self.mean.rows(e, tail));
        let mut inducing = self.inducing.clone();
        inducing.remove(d);
        Ok(Self {
            n_x: self.n_x,
            inducing,
            mean,
            chol,
            hyper: self.hyper.clone(),
        })
    }

    pub(crate) fn with_moments(&self, mean: DVector<f64>, chol: DMatrix<f64>) -> Self {
        debug_assert_eq!(mean.len(), self.dim());
        debug_assert_eq!(chol.nrows(), self.dim());
        Self {
            n_x: self.n_x,
            inducing: self.inducing.clone(),
            mean,
            chol,
            hyper: self.hyper.clone(),
        }
    }

    pub(crate) fn with_hyperparameters(mut self, hyper: Hyperparameters) -> Self {
        self.hyper = hyper;
        self
    }

    pub fn snapshot(&self) -> BeliefSnapshot {
        let n = self.dim();
        let mut l = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                l.push(self.chol[(i, j)]);
            }
        }
        BeliefSnapshot {
            n_x: self.n_x,
            n_f: self.n_f(),
            n_in: self.n_in(),
            z: self
                .inducing
                .iter()
                .flat_map(|z| z.iter().copied())
                .collect(),
            xi: self.mean.iter().copied().collect(),
            l,
            hyperparameters: self.hyper.clone(),
        }
    }

    pub fn from_snapshot(s: &BeliefSnapshot) -> Result<Self> {
        check_dim("snapshot n_f", s.n_f, s.hyperparameters.n_f())?;
        check_dim("snapshot n_in", s.n_in, s.hyperparameters.n_in())?;
        if s.n_in == 0 || s.z.len() % s.n_in != 0 {
            return Err(Error::Config("snapshot inducing inputs are ragged".into()));
        }
        let inducing: Vec<_> = s.z.chunks(s.n_in).map(DVector::from_column_slice).collect();
        let n = s.xi.len();
        check_dim("snapshot factor entries", n * (n + 1) / 2, s.l.len())?;
        let mut chol = DMatrix::zeros(n, n);
        let mut it = s.l.iter();
        for i in 0..n {
            for j in 0..=i {
                chol[(i, j)] = *it.next().unwrap();
            }
        }
        Self::from_parts(
            s.n_x,
            inducing,
            DVector::from_column_slice(&s.xi),
            chol,
            s.hyperparameters.clone(),
        )
    }
}

/// Flat serialized form of a belief.
///
/// `z` holds the inducing inputs row-major (`n_u × n_in`), `xi` the augmented
/// mean and `l` the lower triangle of the factor row by row
/// (`L[0][0], L[1][0], L[1][1], L[2][0], ...`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub n_x: usize,
    pub n_f: usize,
    pub n_in: usize,
    pub z: Vec<f64>,
    pub xi: Vec<f64>,
    pub l: Vec<f64>,
    pub hyperparameters: Hyperparameters,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn h(nf: usize) -> Hyperparameters {
        Hyperparameters::isotropic(1, nf, 1.0, 1.0).unwrap()
    }

    fn random_belief(rng: &mut ChaCha8Rng, nx: usize, nf: usize, nu: usize) -> AugmentedBelief {
        let n = nx + nf * nu;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let cov = &a * a.transpose() + DMatrix::identity(n, n) * 0.3;
        let chol = Cholesky::new(cov).unwrap().unpack();
        let mean = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let z = (0..nu)
            .map(|_| dvector![rng.random_range(-2.0..2.0)])
            .collect();
        AugmentedBelief::from_parts(nx, z, mean, chol, h(nf)).unwrap()
    }

    #[test]
    fn init_identity_and_scalar() {
        let b = AugmentedBelief::new(dvector![0.0, 0.0], &DMatrix::identity(2, 2), h(1)).unwrap();
        assert_eq!(b.chol(), &DMatrix::identity(2, 2));
        let b =
            AugmentedBelief::new(dvector![1.0], &DMatrix::from_element(1, 1, 4.0), h(1)).unwrap();
        assert_eq!(b.chol()[(0, 0)], 2.0);
        assert!(
            AugmentedBelief::new(dvector![1.0], &DMatrix::from_element(1, 1, -1.0), h(1)).is_err()
        );
    }

    #[test]
    fn init_random_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let cov = &a * a.transpose() + DMatrix::identity(4, 4);
        let b = AugmentedBelief::new(DVector::zeros(4), &cov, h(1)).unwrap();
        assert!((b.covariance() - &cov).amax() < 1e-12);
    }

    #[test]
    fn blocks_of_empty_and_identity() {
        let b =
            AugmentedBelief::new(dvector![0.5], &DMatrix::from_element(1, 1, 2.0), h(1)).unwrap();
        let blk = b.blocks();
        assert_eq!(blk.m_u.len(), 0);
        assert_eq!(blk.v_xu.ncols(), 0);
        assert_eq!(blk.s_uu.nrows(), 0);
        assert_relative_eq!(blk.p[(0, 0)], 2.0, epsilon = 1e-15);

        let b = AugmentedBelief::from_parts(
            1,
            vec![dvector![0.0]],
            dvector![0.0, 0.0],
            DMatrix::identity(2, 2),
            h(1),
        )
        .unwrap();
        let blk = b.blocks();
        assert_eq!(
            (blk.p[(0, 0)], blk.v_xu[(0, 0)], blk.s_uu[(0, 0)]),
            (1.0, 0.0, 1.0)
        );
    }

    #[test]
    fn blocks_match_dense_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = random_belief(&mut rng, 2, 2, 3);
        let cov = b.covariance();
        let blk = b.blocks();
        assert_eq!(blk.p, cov.view((0, 0), (2, 2)).into_owned());
        assert_eq!(blk.v_xu, cov.view((0, 2), (2, 6)).into_owned());
        assert_eq!(blk.s_uu, cov.view((2, 2), (6, 6)).into_owned());
    }

    #[test]
    fn append_closed_forms() {
        let b = AugmentedBelief::new(dvector![0.0], &DMatrix::identity(1, 1), h(1)).unwrap();
        let out = b
            .chol_append(
                &DMatrix::from_element(1, 1, 0.5),
                &DMatrix::from_element(1, 1, 1.0),
                &dvector![0.0],
                dvector![0.0],
            )
            .unwrap();
        assert_relative_eq!(out.chol()[(1, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(out.chol()[(1, 1)], 0.75f64.sqrt(), epsilon = 1e-15);

        let b = AugmentedBelief::new(dvector![0.0, 0.0], &DMatrix::identity(2, 2), h(2)).unwrap();
        let out = b
            .chol_append(
                &DMatrix::zeros(2, 2),
                &(DMatrix::identity(2, 2) * 4.0),
                &dvector![1.0, 2.0],
                dvector![0.0],
            )
            .unwrap();
        assert_eq!(
            out.chol().view((2, 0), (2, 2)).into_owned(),
            DMatrix::zeros(2, 2)
        );
        assert_eq!(
            out.chol().view((2, 2), (2, 2)).into_owned(),
            DMatrix::identity(2, 2) * 2.0
        );
        assert_eq!(out.n_u(), 1);
        assert_eq!(out.mean().as_slice(), &[0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn append_rejects_inconsistent_schur() {
        let b = AugmentedBelief::new(dvector![0.0], &DMatrix::identity(1, 1), h(1)).unwrap();
        let res = b.chol_append(
            &DMatrix::from_element(1, 1, 2.0),
            &DMatrix::from_element(1, 1, 1.0),
            &dvector![0.0],
            dvector![0.0],
        );
        assert!(matches!(res, Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn append_random_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let b = random_belief(&mut rng, 2, 2, 2);
            let n = b.dim();
            // a consistent joint: draw a bigger SPD matrix and split it
            let a = DMatrix::from_fn(n + 2, n + 2, |_, _| rng.random_range(-1.0..1.0));
            let big = &a * a.transpose() + DMatrix::identity(n + 2, n + 2) * 0.2;
            let base = b.with_moments(
                b.mean().clone(),
                Cholesky::new(big.view((0, 0), (n, n)).into_owned())
                    .unwrap()
                    .unpack(),
            );
            let zeta = big.view((0, n), (n, 2)).into_owned();
            let stt = big.view((n, n), (2, 2)).into_owned();
            let out = base
                .chol_append(&zeta, &stt, &dvector![0.1, 0.2], dvector![0.3])
                .unwrap();
            assert!((out.covariance() - &big).amax() < 1e-12);
        }
    }

    #[test]
    fn drop_identity_and_trailing() {
        let b = AugmentedBelief::from_parts(
            1,
            vec![dvector![0.0], dvector![1.0]],
            dvector![0.0, 1.0, 2.0],
            DMatrix::identity(3, 3),
            h(1),
        )
        .unwrap();
        let out = b.chol_drop(0).unwrap();
        assert_eq!(out.chol(), &DMatrix::identity(2, 2));
        assert_eq!(out.mean().as_slice(), &[0.0, 2.0]);
        assert_eq!(out.inducing_inputs(), &[dvector![1.0]]);

        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let b = random_belief(&mut rng, 2, 1, 3);
        let out = b.chol_drop(2).unwrap();
        assert_eq!(out.chol(), &b.chol().view((0, 0), (4, 4)).into_owned());
        assert!(matches!(b.chol_drop(3), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn drop_interior_matches_dense_deletion() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let b = random_belief(&mut rng, 2, 2, 2); // 6×6
        let cov = b.covariance();
        let out = b.chol_drop(0).unwrap();
        let keep = [0usize, 1, 4, 5];
        let want = DMatrix::from_fn(4, 4, |i, j| cov[(keep[i], keep[j])]);
        assert!((out.covariance() - want).amax() < 1e-12);
    }

    #[test]
    fn snapshot_round_trips_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let b = random_belief(&mut rng, 2, 2, 3);
        let json = serde_json::to_string(&b.snapshot()).unwrap();
        let back: BeliefSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(AugmentedBelief::from_snapshot(&back).unwrap(), b);
    }
}
