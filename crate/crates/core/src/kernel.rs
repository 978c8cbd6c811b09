//! Squared-exponential ARD kernel with a diagonal multi-output scale.
//!
//! The full covariance between function values at input sets `A` and `B` is
//! `K0(A, B) ⊗ diag(σ²)`, with inducing values laid out input-major
//! (all `n_f` outputs of the first input, then the second, ...). Everything
//! here works on the unit-variance base matrix `K0` and only materializes the
//! Kronecker product when asked.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Relative jitter added to the diagonal of base self-covariance blocks.
pub const DEFAULT_JITTER: f64 = 1e-10;

/// Log length scales (one per input dimension) and log signal variances (one
/// per output dimension).
///
/// The flat parameter vector used by the optimizer is
/// `[log l_1, .., log l_{n_in}, log σ²_1, .., log σ²_{n_f}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub log_length_scales: Vec<f64>,
    pub log_signal_variances: Vec<f64>,
}

impl Hyperparameters {
    pub fn new(length_scales: &[f64], signal_variances: &[f64]) -> Result<Self> {
        if length_scales
            .iter()
            .chain(signal_variances)
            .any(|v| !(*v > 0.0) || !v.is_finite())
        {
            return Err(Error::Config(
                "length scales and signal variances must be finite and positive".into(),
            ));
        }
        Ok(Self {
            log_length_scales: length_scales.iter().map(|l| l.ln()).collect(),
            log_signal_variances: signal_variances.iter().map(|s| s.ln()).collect(),
        })
    }

    /// Same length scale on every input, same variance on every output.
    pub fn isotropic(
        n_in: usize,
        n_f: usize,
        length_scale: f64,
        signal_variance: f64,
    ) -> Result<Self> {
        Self::new(&vec![length_scale; n_in], &vec![signal_variance; n_f])
    }

    pub fn from_vec(n_in: usize, theta: &[f64]) -> Result<Self> {
        if theta.len() <= n_in {
            return Err(Error::Dimension {
                what: "hyperparameter vector",
                expected: n_in + 1,
                got: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("hyperparameter vector"));
        }
        Ok(Self {
            log_length_scales: theta[..n_in].to_vec(),
            log_signal_variances: theta[n_in..].to_vec(),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.log_length_scales
            .iter()
            .chain(&self.log_signal_variances)
            .copied()
            .collect()
    }

    pub fn n_in(&self) -> usize {
        self.log_length_scales.len()
    }

    pub fn n_f(&self) -> usize {
        self.log_signal_variances.len()
    }

    /// Number of optimizable parameters.
    pub fn len(&self) -> usize {
        self.n_in() + self.n_f()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn length_scales(&self) -> Vec<f64> {
        self.log_length_scales.iter().map(|v| v.exp()).collect()
    }

    pub fn signal_variances(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_f(),
            self.log_signal_variances.iter().map(|v| v.exp()),
        )
    }

    fn inv_sq_lengths(&self) -> Vec<f64> {
        self.log_length_scales
            .iter()
            .map(|v| (-2.0 * v).exp())
            .collect()
    }
}

/// Base kernel matrix together with the diagonal output scale.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelBlock {
    pub base: DMatrix<f64>,
    pub output_scale: DVector<f64>,
}

impl KernelBlock {
    /// Materializes `base ⊗ diag(output_scale)`.
    pub fn full(&self) -> DMatrix<f64> {
        kron_diag(&self.base, &self.output_scale)
    }
}

/// `a ⊗ diag(d)` for input-major multi-output layout.
pub fn kron_diag(a: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let nf = d.len();
    let mut out = DMatrix::zeros(a.nrows() * nf, a.ncols() * nf);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v != 0.0 {
                for k in 0..nf {
                    out[(i * nf + k, j * nf + k)] = v * d[k];
                }
            }
        }
    }
    out
}

/// `a ⊗ I_nf`.
pub fn kron_identity(a: &DMatrix<f64>, nf: usize) -> DMatrix<f64> {
    kron_diag(a, &DVector::from_element(nf, 1.0))
}

#[inline]
fn base_unchecked(z: &DVector<f64>, w: &DVector<f64>, inv_sq: &[f64]) -> f64 {
    let mut r2 = 0.0;
    for i in 0..z.len() {
        let d = z[i] - w[i];
        r2 += d * d * inv_sq[i];
    }
    (-0.5 * r2).exp()
}

/// `exp(-½ Σ_i (z_i - z'_i)² / l_i²)`.
pub fn k_base(z: &DVector<f64>, z2: &DVector<f64>, h: &Hyperparameters) -> Result<f64> {
    check_dim("kernel input", h.n_in(), z.len())?;
    check_dim("kernel input", h.n_in(), z2.len())?;
    Ok(base_unchecked(z, z2, &h.inv_sq_lengths()))
}

fn check_inputs(points: &[DVector<f64>], h: &Hyperparameters) -> Result<()> {
    points
        .iter()
        .try_for_each(|p| check_dim("kernel input", h.n_in(), p.len()))
}

/// Base cross-covariance matrix `K0(A, B)`.
pub fn base_matrix(
    a: &[DVector<f64>],
    b: &[DVector<f64>],
    h: &Hyperparameters,
) -> Result<DMatrix<f64>> {
    check_inputs(a, h)?;
    check_inputs(b, h)?;
    let inv_sq = h.inv_sq_lengths();
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        base_unchecked(&a[i], &b[j], &inv_sq)
    }))
}

/// Base Gram matrix `K0(Z, Z) + jitter·I`.
pub fn base_gram(z: &[DVector<f64>], h: &Hyperparameters, jitter: f64) -> Result<DMatrix<f64>> {
    let mut k = base_matrix(z, z, h)?;
    for i in 0..z.len() {
        k[(i, i)] += jitter;
    }
    Ok(k)
}

/// Cholesky factorization of the jittered base Gram matrix, with the index of
/// the first failing pivot on error.
pub fn base_gram_cholesky(
    z: &[DVector<f64>],
    h: &Hyperparameters,
    jitter: f64,
) -> Result<Cholesky<f64, Dyn>> {
    let k = base_gram(z, h, jitter)?;
    let chol = Cholesky::new(k.clone()).ok_or_else(|| degenerate_pair(&k))?;
    // A pivot at rounding level means the factorization succeeded only by accident.
    let floor = k.nrows() as f64 * f64::EPSILON;
    if chol.l_dirty().diagonal().iter().any(|d| d * d <= floor) {
        return Err(degenerate_pair(&k));
    }
    Ok(chol)
}

/// Finds the pair of inputs whose base correlation is closest to one.
fn degenerate_pair(k: &DMatrix<f64>) -> Error {
    let n = k.nrows();
    let mut best = (0, 0, f64::NEG_INFINITY);
    for j in 0..n {
        for i in (j + 1)..n {
            if k[(i, j)] > best.2 {
                best = (j, i, k[(i, j)]);
            }
        }
    }
    Error::SingularKernel(best.0, best.1)
}

pub fn k_matrix(
    a: &[DVector<f64>],
    b: &[DVector<f64>],
    h: &Hyperparameters,
) -> Result<KernelBlock> {
    Ok(KernelBlock {
        base: base_matrix(a, b, h)?,
        output_scale: h.signal_variances(),
    })
}

/// Gradient of the base kernel with respect to its first argument.
///
/// Column `j` holds `∂k0(z, Z_j)/∂z = k0(z, Z_j) Λ⁻¹ (Z_j - z)`.
pub fn k_input_grad(
    z: &DVector<f64>,
    zs: &[DVector<f64>],
    h: &Hyperparameters,
) -> Result<DMatrix<f64>> {
    check_dim("kernel input", h.n_in(), z.len())?;
    check_inputs(zs, h)?;
    let inv_sq = h.inv_sq_lengths();
    let mut g = DMatrix::zeros(z.len(), zs.len());
    for (j, zj) in zs.iter().enumerate() {
        let k = base_unchecked(z, zj, &inv_sq);
        for i in 0..z.len() {
            g[(i, j)] = k * (zj[i] - z[i]) * inv_sq[i];
        }
    }
    Ok(g)
}

/// Derivative of the kernel block `K(A, B)` with respect to hyperparameter
/// `j` of the flat vector.
///
/// Length-scale entries differentiate the base matrix (`K0 ∘ d_i²/l_i²`) and
/// keep the output scale; signal-variance entries keep the base matrix and
/// replace the output scale with `σ_j² e_j`.
pub fn k_theta_grad(
    a: &[DVector<f64>],
    b: &[DVector<f64>],
    h: &Hyperparameters,
    j: usize,
) -> Result<KernelBlock> {
    if j >= h.len() {
        return Err(Error::IndexOutOfRange {
            index: j,
            len: h.len(),
        });
    }
    let base = base_matrix(a, b, h)?;
    let scale = h.signal_variances();
    if j < h.n_in() {
        let inv_sq = (-2.0 * h.log_length_scales[j]).exp();
        let d = DMatrix::from_fn(a.len(), b.len(), |r, c| {
            let diff = a[r][j] - b[c][j];
            base[(r, c)] * diff * diff * inv_sq
        });
        Ok(KernelBlock {
            base: d,
            output_scale: scale,
        })
    } else {
        let k = j - h.n_in();
        let mut out = DVector::zeros(h.n_f());
        out[k] = scale[k];
        Ok(KernelBlock {
            base,
            output_scale: out,
        })
    }
}

/// Base-matrix derivative `K0 ∘ d_i²/l_i²` for length scale `i`, reusing an
/// already computed base matrix.
pub(crate) fn base_length_grad(
    base: &DMatrix<f64>,
    a: &[DVector<f64>],
    b: &[DVector<f64>],
    h: &Hyperparameters,
    i: usize,
) -> DMatrix<f64> {
    let inv_sq = (-2.0 * h.log_length_scales[i]).exp();
    DMatrix::from_fn(a.len(), b.len(), |r, c| {
        let diff = a[r][i] - b[c][i];
        base[(r, c)] * diff * diff * inv_sq
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn h1(l: f64) -> Hyperparameters {
        Hyperparameters::new(&[l], &[1.0]).unwrap()
    }

    #[test]
    fn base_kernel_closed_forms() {
        assert_eq!(k_base(&v(&[0.0]), &v(&[0.0]), &h1(1.0)).unwrap(), 1.0);
        assert_relative_eq!(
            k_base(&v(&[0.0]), &v(&[1.0]), &h1(1.0)).unwrap(),
            0.6065306597126334,
            max_relative = 1e-12
        );
        let h = Hyperparameters::new(&[1.0, 2.0], &[1.0]).unwrap();
        assert_relative_eq!(
            k_base(&v(&[0.0, 0.0]), &v(&[1.0, 2.0]), &h).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(
            k_base(&v(&[0.0, 1.0]), &v(&[0.0]), &h1(1.0)),
            Err(Error::Dimension { .. })
        ));
        assert!(k_input_grad(&v(&[0.0]), &[v(&[0.0, 1.0])], &h1(1.0)).is_err());
    }

    #[test]
    fn self_covariance_block_is_output_scale() {
        let h = Hyperparameters::new(&[1.0], &[4.0, 9.0]).unwrap();
        let blk = k_matrix(&[v(&[0.3])], &[v(&[0.3])], &h).unwrap();
        assert_eq!(blk.base[(0, 0)], 1.0);
        assert_relative_eq!(
            blk.full(),
            DMatrix::from_diagonal(&v(&[4.0, 9.0])),
            max_relative = 1e-14
        );
    }

    #[test]
    fn kronecker_with_diagonal() {
        let blk = KernelBlock {
            base: DMatrix::from_element(1, 1, 0.5),
            output_scale: v(&[4.0, 9.0]),
        };
        assert_eq!(blk.full(), DMatrix::from_diagonal(&v(&[2.0, 4.5])));
    }

    #[test]
    fn random_gram_factorizes_with_jitter() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = Hyperparameters::new(&[0.8, 1.3], &[2.0, 0.5]).unwrap();
        let a: Vec<_> = (0..5)
            .map(|_| v(&[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]))
            .collect();
        let mut full = k_matrix(&a, &a, &h).unwrap().full();
        for i in 0..full.nrows() {
            full[(i, i)] += 1e-10;
        }
        assert!(Cholesky::new(full).is_some());
    }

    #[test]
    fn input_gradient_closed_forms() {
        let g = k_input_grad(&v(&[0.0]), &[v(&[1.0])], &h1(1.0)).unwrap();
        assert_relative_eq!(g[(0, 0)], 0.6065306597126334, max_relative = 1e-12);
        let h = Hyperparameters::new(&[0.5, 2.0], &[1.0]).unwrap();
        let z = v(&[0.2, -0.4]);
        let g = k_input_grad(&z, &[z.clone()], &h).unwrap();
        assert_eq!(g.column(0).norm(), 0.0);
    }

    #[test]
    fn theta_gradient_closed_forms() {
        let g = k_theta_grad(&[v(&[0.0])], &[v(&[1.0])], &h1(1.0), 0).unwrap();
        assert_relative_eq!(g.base[(0, 0)], 0.6065306597126334, max_relative = 1e-12);
        let g = k_theta_grad(&[v(&[0.4])], &[v(&[0.4])], &h1(1.0), 0).unwrap();
        assert_eq!(g.base[(0, 0)], 0.0);
        assert!(matches!(
            k_theta_grad(&[v(&[0.0])], &[v(&[1.0])], &h1(1.0), 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn singular_gram_reports_duplicate_pair() {
        let h = h1(1.0);
        let z = vec![v(&[0.0]), v(&[3.0]), v(&[3.0])];
        match base_gram_cholesky(&z, &h, 0.0) {
            Err(Error::SingularKernel(a, b)) => assert_eq!((a, b), (1, 2)),
            other => panic!("expected singular kernel, got {other:?}"),
        }
    }
}
