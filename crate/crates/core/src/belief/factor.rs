//! Dense lower-triangular factor manipulations.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Rank-k update (`sign = +1`) or downdate (`sign = -1`) of a Cholesky factor
/// in place: afterwards `L Lᵀ = L₀ L₀ᵀ + sign · V Vᵀ`.
///
/// Columns of `v` are applied one at a time. On downdate failure `l` is left
/// partially modified and the offending column is reported; callers that need
/// the original factor must keep a copy.
pub fn chol_rank_update(l: &mut DMatrix<f64>, v: &DMatrix<f64>, sign: f64) -> Result<()> {
    let n = l.nrows();
    if v.nrows() != n {
        return Err(Error::Dimension {
            what: "rank update columns",
            expected: n,
            got: v.nrows(),
        });
    }
    let mut w = vec![0.0; n];
    for col in 0..v.ncols() {
        w.iter_mut()
            .zip(v.column(col).iter())
            .for_each(|(a, b)| *a = *b);
        if w.iter().all(|x| *x == 0.0) {
            continue;
        }
        rank_one(l, &mut w, sign).map_err(|_| Error::DowndateFailed { column: col })?;
    }
    Ok(())
}

fn rank_one(l: &mut DMatrix<f64>, w: &mut [f64], sign: f64) -> std::result::Result<(), ()> {
    let n = l.nrows();
    for k in 0..n {
        let lkk = l[(k, k)];
        let wk = w[k];
        if wk == 0.0 {
            continue;
        }
        let r2 = lkk * lkk + sign * wk * wk;
        if !(r2 > 0.0) || !r2.is_finite() {
            return Err(());
        }
        let r = r2.sqrt();
        let c = r / lkk;
        let s = wk / lkk;
        l[(k, k)] = r;
        let mut col = l.column_mut(k);
        for i in (k + 1)..n {
            let lik = (col[i] + sign * s * w[i]) / c;
            w[i] = c * w[i] - s * lik;
            col[i] = lik;
        }
    }
    Ok(())
}

/// Lower-triangular `L⁻` with `L⁻ L⁻ᵀ = M Mᵀ + D Dᵀ`, via QR of the stacked
/// transposes `[Mᵀ; Dᵀ]`. The diagonal of the result is non-negative.
pub fn qr_triangularize(m: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    debug_assert_eq!(m.ncols(), n);
    debug_assert_eq!(d.nrows(), n);
    let k = d.ncols();
    let mut stacked = DMatrix::zeros(n + k, n);
    stacked.rows_mut(0, n).copy_from(&m.transpose());
    if k > 0 {
        stacked.rows_mut(n, k).copy_from(&d.transpose());
    }
    let r = stacked.qr().r();
    let mut l = r.transpose();
    for j in 0..n {
        if l[(j, j)] < 0.0 {
            l.column_mut(j).neg_mut();
        }
    }
    l
}

/// Square-root propagation: returns `L⁻` with
/// `L⁻ L⁻ᵀ = Φ L Lᵀ Φᵀ + D_f D_fᵀ`.
pub fn qr_propagate(l: &DMatrix<f64>, phi: &DMatrix<f64>, d_f: &DMatrix<f64>) -> DMatrix<f64> {
    qr_triangularize(&(phi * l), d_f)
}

/// Cholesky factor of a symmetric matrix, escalating diagonal jitter
/// (starting at `jitter · max|diag|`, ×10 per attempt) when the plain
/// factorization fails.
pub fn cholesky_with_jitter(
    a: &DMatrix<f64>,
    jitter: f64,
    what: &'static str,
) -> Result<DMatrix<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(c.unpack());
    }
    let scale = sym.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut eps = jitter.max(1e-15) * scale;
    for _ in 0..8 {
        let mut j = sym.clone();
        for i in 0..j.nrows() {
            j[(i, i)] += eps;
        }
        if let Some(c) = Cholesky::new(j) {
            log::debug!("{what}: factorized with jitter {eps:e}");
            return Ok(c.unpack());
        }
        eps *= 10.0;
    }
    Err(Error::NotPositiveDefinite(what))
}

/// A square factor `D` with `D Dᵀ = A` for a symmetric PSD `A`.
///
/// Cholesky when `A` is positive definite; otherwise `A + jitter·I` is tried,
/// and as a last resort the eigen square root with clamped eigenvalues.
pub fn psd_factor(a: &DMatrix<f64>, jitter: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (a + a.transpose()) * 0.5;
    if let Some(c) = Cholesky::new(sym.clone()) {
        return c.unpack();
    }
    let mut j = sym.clone();
    for i in 0..n {
        j[(i, i)] += jitter;
    }
    if let Some(c) = Cholesky::new(j.clone()) {
        return c.unpack();
    }
    let eig = SymmetricEigen::new(j);
    let mut d = eig.eigenvectors;
    for (k, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        d.column_mut(k).scale_mut(s);
    }
    d
}

/// `log |det A|` and the sign of the determinant from an LU factorization.
pub fn log_abs_det(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    let lu = a.clone().lu();
    let u = lu.u();
    let mut logdet = 0.0;
    let mut sign = lu.p().determinant::<f64>();
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Singular("log-determinant argument"));
        }
        logdet += d.abs().ln();
        sign *= d.signum();
    }
    Ok((logdet, sign))
}

/// Inverse of a lower-triangular matrix.
pub fn lower_triangular_inverse(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let mut eye = DMatrix::identity(n, n);
    if l.solve_lower_triangular_mut(&mut eye) {
        Ok(eye)
    } else {
        Err(Error::Singular("triangular factor"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_factor(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let spd = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        Cholesky::new(spd).unwrap().unpack()
    }

    #[test]
    fn downdate_diagonal_closed_form() {
        let mut l = DMatrix::identity(2, 2);
        let v = DMatrix::from_column_slice(2, 1, &[0.6, 0.0]);
        chol_rank_update(&mut l, &v, -1.0).unwrap();
        assert_relative_eq!(
            l,
            DMatrix::from_diagonal(&nalgebra::dvector![0.8, 1.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn zero_update_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l0 = random_factor(&mut rng, 4);
        let mut l = l0.clone();
        chol_rank_update(&mut l, &DMatrix::zeros(4, 2), 1.0).unwrap();
        assert_eq!(l, l0);
    }

    #[test]
    fn failing_downdate_names_column() {
        let mut l = DMatrix::identity(2, 2);
        let v = DMatrix::from_column_slice(2, 2, &[0.1, 0.0, 1.5, 0.0]);
        match chol_rank_update(&mut l, &v, -1.0) {
            Err(Error::DowndateFailed { column }) => assert_eq!(column, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn random_updates_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.random_range(1..8);
            let l0 = random_factor(&mut rng, n);
            let v = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-0.5..0.5));
            let mut l = l0.clone();
            chol_rank_update(&mut l, &v, 1.0).unwrap();
            let want = &l0 * l0.transpose() + &v * v.transpose();
            assert!((&l * l.transpose() - &want).norm() <= 1e-11 * want.norm());
            // and back down again
            chol_rank_update(&mut l, &v, -1.0).unwrap();
            let want = &l0 * l0.transpose();
            assert!((&l * l.transpose() - &want).norm() <= 1e-11 * want.norm());
            assert!((0..n).all(|i| l[(i, i)] > 0.0));
        }
    }

    #[test]
    fn qr_scalar_and_identity() {
        let l = DMatrix::from_element(1, 1, 1.0);
        let out = qr_propagate(
            &l,
            &DMatrix::from_element(1, 1, 0.9),
            &DMatrix::from_element(1, 1, 0.1f64.sqrt()),
        );
        assert_relative_eq!(out[(0, 0)], 0.91f64.sqrt(), epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = random_factor(&mut rng, 5);
        let out = qr_propagate(&l, &DMatrix::identity(5, 5), &DMatrix::zeros(5, 0));
        assert_relative_eq!(out, l, epsilon = 1e-12);
    }

    #[test]
    fn qr_random_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.random_range(1..9);
            let l = random_factor(&mut rng, n);
            let phi = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let d = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-0.3..0.3));
            let out = qr_propagate(&l, &phi, &d);
            let want = &phi * &l * l.transpose() * phi.transpose() + &d * d.transpose();
            assert!((&out * out.transpose() - &want).norm() <= 1e-11 * want.norm().max(1.0));
            for i in 0..n {
                assert!(out[(i, i)] >= 0.0);
                for j in (i + 1)..n {
                    assert_eq!(out[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn psd_factor_handles_singular_input() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let d = psd_factor(&a, 1e-10);
        assert!((&d * d.transpose() - &a).amax() < 1e-9);
        let z = psd_factor(&DMatrix::zeros(3, 3), 1e-10);
        assert!((&z * z.transpose()).amax() <= 1e-10 + 1e-18);
    }

    #[test]
    fn signed_log_det() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 3.0, 0.0]);
        let (ld, s) = log_abs_det(&a).unwrap();
        assert_relative_eq!(ld, 6f64.ln(), epsilon = 1e-14);
        assert_eq!(s, -1.0);
    }
}
