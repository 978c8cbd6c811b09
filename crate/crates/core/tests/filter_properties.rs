use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgpssm::filter::{self, correct, discard, linearize, score_all};
use rgpssm::hypopt::{AdamConfig, AdamState};
use rgpssm::models::{ModelSpec, RandomModel};
use rgpssm::oracle::DenseBelief;
use rgpssm::{AugmentedBelief, BeliefSnapshot, Filter, FilterConfig, Hyperparameters};

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn start(model: &RandomModel, n_f: usize) -> AugmentedBelief {
    let n_x = model.a.nrows();
    let h = Hyperparameters::isotropic(model.n_in, n_f, 1.0, 0.5).unwrap();
    AugmentedBelief::new(DVector::zeros(n_x), &DMatrix::identity(n_x, n_x), h).unwrap()
}

fn simulate(model: &RandomModel, steps: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let n_f = model.b.ncols();
    let mut x = gaussian(rng, model.a.nrows());
    let mut ys = Vec::with_capacity(steps);
    for _ in 0..steps {
        let f = DVector::from_fn(n_f, |i, _| (x[0] + i as f64).sin());
        x = model.transition(&x, &f, &[]) + gaussian(rng, x.len()) * 0.05;
        ys.push(model.measurement(&x) + gaussian(rng, model.c.nrows()) * 0.1);
    }
    ys
}

/// Extended Kalman filter with the unknown function replaced by its prior:
/// zero mean and covariance `A_f diag(σ²) A_fᵀ` added to the process noise.
fn ekf(
    model: &RandomModel,
    sigma2: f64,
    mut mu: DVector<f64>,
    mut p: DMatrix<f64>,
    ys: &[DVector<f64>],
) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let f0 = DVector::zeros(model.b.ncols());
    let mut out = Vec::new();
    for y in ys {
        let (ax, af) = model.transition_jacobians(&mu, &f0, &[]).unwrap();
        mu = model.transition(&mu, &f0, &[]);
        p = &ax * &p * ax.transpose() + &af * af.transpose() * sigma2 + model.process_noise();
        let c = model.measurement_jacobian(&mu).unwrap();
        let s = &c * &p * c.transpose() + model.measurement_noise();
        let k = &p * c.transpose() * s.try_inverse().unwrap();
        mu += &k * (y - model.measurement(&mu));
        p = &p - &k * &c * &p;
        p = (&p + p.transpose()) * 0.5;
        out.push((mu.clone(), p.clone()));
    }
    out
}

fn run(
    model: &RandomModel,
    b: AugmentedBelief,
    config: FilterConfig,
    ys: &[DVector<f64>],
) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let mut f = Filter::new(model.clone(), b, config);
    ys.iter()
        .map(|y| {
            f.step(&[], Some(y)).unwrap();
            (f.belief().state_mean(), f.belief().state_cov())
        })
        .collect()
}

#[test]
fn known_dynamics_reduce_to_ekf() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut model = RandomModel::generate(&mut rng, 3, 2, 1, 2);
    model.b = DMatrix::zeros(3, 1);
    let ys = simulate(&model, 100, &mut rng);
    let config = FilterConfig {
        hyperopt: false,
        ..FilterConfig::default()
    };
    let got = run(&model, start(&model, 1), config, &ys);
    let want = ekf(&model, 0.0, DVector::zeros(3), DMatrix::identity(3, 3), &ys);
    for ((m, p), (m2, p2)) in got.iter().zip(&want) {
        assert!((m - m2).amax() < 1e-6, "{}", (m - m2).amax());
        assert!((p - p2).amax() < 1e-6, "{}", (p - p2).amax());
    }
}

#[test]
fn zero_budget_matches_prior_inflated_ekf() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = RandomModel::generate(&mut rng, 2, 1, 2, 1);
    let ys = simulate(&model, 100, &mut rng);
    let config = FilterConfig {
        budget: 0,
        hyperopt: false,
        ..FilterConfig::default()
    };
    let got = run(&model, start(&model, 2), config, &ys);
    let want = ekf(&model, 0.5, DVector::zeros(2), DMatrix::identity(2, 2), &ys);
    for ((m, p), (m2, p2)) in got.iter().zip(&want) {
        assert!((m - m2).amax() < 1e-6);
        assert!((p - p2).amax() < 1e-6);
    }
}

#[test]
fn budget_and_novelty_bounds_hold_over_long_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let model = RandomModel::generate(&mut rng, 2, 1, 1, 2);
    let ys = simulate(&model, 500, &mut rng);
    let config = FilterConfig {
        budget: 5,
        ..FilterConfig::default()
    };
    let mut f = Filter::new(model.clone(), start(&model, 1), config);
    let mut added = 0;
    for y in &ys {
        let r = f.step(&[], Some(y)).unwrap();
        assert!(r.n_u <= 5);
        assert!(
            (0.0..=1.0 + 1e-12).contains(&r.gamma0),
            "gamma0 {}",
            r.gamma0
        );
        assert!(f
            .belief()
            .chol()
            .diagonal()
            .iter()
            .all(|d| d.is_finite() && *d > 0.0));
        added += r.added as usize;
    }
    assert!(added > 5, "only {added} points were added");
    assert_eq!(f.belief().n_u(), 5);
}

fn min_eig(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new((a + a.transpose()) * 0.5)
        .eigenvalues
        .min()
}

fn random_belief(rng: &mut ChaCha8Rng, model: &RandomModel, n_u: usize) -> AugmentedBelief {
    let n_x = model.a.nrows();
    let n_f = model.b.ncols();
    let mut b = start(model, n_f);
    let mut adam = AdamState::new(b.hyperparameters().len(), AdamConfig::default());
    let config = FilterConfig {
        hyperopt: false,
        ..FilterConfig::default()
    };
    for _ in 0..n_u {
        let y = gaussian(rng, model.c.nrows());
        // jitter the state so every step lands on a fresh inducing input
        let mut shifted = b.mean().clone();
        for i in 0..n_x {
            shifted[i] += rng.random_range(-1.0..1.0);
        }
        b = AugmentedBelief::from_parts(
            n_x,
            b.inducing_inputs().to_vec(),
            shifted,
            b.chol().clone(),
            b.hyperparameters().clone(),
        )
        .unwrap();
        b = filter::step(&b, &[], Some(&y), model, &config, &mut adam)
            .unwrap()
            .0;
    }
    b
}

#[test]
fn correction_never_adds_uncertainty() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let model = RandomModel::generate(&mut rng, 2, 2, 1, 2);
        let b = random_belief(&mut rng, &model, 5);
        let y = gaussian(&mut rng, 2);
        let (c, _) = correct(&b, &y, &model, 1e-10).unwrap();
        assert!(min_eig(&(b.covariance() - c.covariance())) >= -1e-10);
    }
}

#[test]
fn discard_marginalizes_and_scores_match_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let model = RandomModel::generate(&mut rng, 2, 1, 2, 1);
    let b = random_belief(&mut rng, &model, 6);
    let dense = DenseBelief::from(&b);
    let want = dense.scores().unwrap();
    let got = score_all(&b).unwrap();
    assert_eq!(got.len(), b.n_u());
    for (g, w) in got.iter().zip(&want) {
        assert!(
            (g.total() - w).abs() <= 1e-6 * w.abs().max(1.0),
            "{} vs {w}",
            g.total()
        );
    }
    for d in 0..b.n_u() {
        let kept = discard(&b, d).unwrap();
        let oracle = dense.discard(d);
        assert!((kept.covariance() - &oracle.cov).amax() < 1e-10);
        assert_eq!(kept.mean(), &oracle.mean);
    }
}

#[test]
fn snapshot_survives_json() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let model = RandomModel::generate(&mut rng, 3, 1, 2, 2);
    let b = random_belief(&mut rng, &model, 4);
    let text = serde_json::to_string(&b.snapshot()).unwrap();
    let s: BeliefSnapshot = serde_json::from_str(&text).unwrap();
    assert_eq!(AugmentedBelief::from_snapshot(&s).unwrap(), b);
}

#[test]
fn linearization_has_gp_input_at_state_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let model = RandomModel::generate(&mut rng, 3, 1, 1, 2);
    let b = random_belief(&mut rng, &model, 3);
    let lin = linearize(&b, &[], &model).unwrap();
    assert_eq!(lin.z_t, model.gp_input(&b.state_mean(), &[]));
}
