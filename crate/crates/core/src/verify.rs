//! Randomized oracle and property checks, each returning a pass/fail outcome.
//!
//! These are the checks behind `rgpssm verify`. Every function is
//! deterministic for its built-in seed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::belief::AugmentedBelief;
use crate::bench::{run_experiment, ExperimentConfig, Task};
use crate::error::{Error, Result};
use crate::filter::{
    self, argmin_score, linearize, predict_add, predict_noadd, score_all, FilterConfig,
};
use crate::hypopt::{apply_hyperparams, hyper_loss, hyper_loss_grad, AdamState};
use crate::kernel::{
    base_gram, k_base, k_input_grad, k_matrix, k_theta_grad, kron_diag, Hyperparameters,
    DEFAULT_JITTER,
};
use crate::models::{ModelSpec, RandomModel};
use crate::oracle::{dense_step, fd_gradient, natural_param_adjust, offline_gpr_fit, DenseBelief};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    /// Failures of non-blocking checks are reported but do not fail the suite.
    pub blocking: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        let status = match (self.passed, self.blocking) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (non-blocking)",
        };
        format!(
            "[{status}] criterion {:>2} {}: {} ({:.2} s)",
            self.id, self.name, self.detail, self.seconds
        )
    }
}

pub(crate) fn timed<F>(id: u32, name: &'static str, blocking: bool, f: F) -> Outcome
where
    F: FnOnce() -> Result<(bool, String)>,
{
    let t0 = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Outcome {
        id,
        name,
        passed,
        blocking,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

/// Inputs with pairwise base correlation below `max_corr`, drawn from
/// `[-2, 2]^n_in` and from a wider box whenever the current one gets crowded.
pub fn spread_inputs<R: Rng>(
    rng: &mut R,
    n: usize,
    h: &Hyperparameters,
    max_corr: f64,
) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut half_width = 2.0;
    let mut misses = 0;
    while out.len() < n {
        let z = DVector::from_fn(h.n_in(), |_, _| rng.random_range(-half_width..half_width));
        if out.iter().all(|o| k_base(o, &z, h).unwrap() < max_corr) {
            out.push(z);
        } else {
            misses += 1;
            if misses % 50 == 0 {
                half_width *= 1.25;
            }
        }
    }
    out
}

pub fn random_hyper<R: Rng>(rng: &mut R, n_in: usize, n_f: usize) -> Hyperparameters {
    let ls: Vec<f64> = (0..n_in).map(|_| rng.random_range(0.6..1.8)).collect();
    let sv: Vec<f64> = (0..n_f).map(|_| rng.random_range(0.5..2.0)).collect();
    Hyperparameters::new(&ls, &sv).expect("positive draws")
}

/// A belief with `n_u` spread inducing points, random mean and a random
/// well-conditioned covariance.
pub fn random_belief<R: Rng>(
    rng: &mut R,
    n_x: usize,
    h: Hyperparameters,
    n_u: usize,
) -> AugmentedBelief {
    let z = spread_inputs(rng, n_u, &h, 0.9);
    let n = n_x + n_u * h.n_f();
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let cov = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.2;
    let chol = Cholesky::new(cov).expect("SPD by construction").unpack();
    let mean = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    AugmentedBelief::from_parts(n_x, z, mean, chol, h).expect("consistent parts")
}

/// A belief shaped like a filtering posterior: independent state and GP
/// prior blocks conditioned on a few random linear observations of the whole
/// augmented vector. Unlike [`random_belief`], its inducing precision always
/// dominates the prior precision, so hyperparameter changes keep it valid.
pub fn posterior_belief<R: Rng>(
    rng: &mut R,
    n_x: usize,
    h: Hyperparameters,
    n_u: usize,
) -> Result<AugmentedBelief> {
    let z = spread_inputs(rng, n_u, &h, 0.9);
    let n = n_x + n_u * h.n_f();
    let a = DMatrix::from_fn(n_x, n_x, |_, _| rng.random_range(-1.0..1.0));
    let mut cov = DMatrix::zeros(n, n);
    cov.view_mut((0, 0), (n_x, n_x))
        .copy_from(&(&a * a.transpose() / n_x as f64 + DMatrix::identity(n_x, n_x) * 0.2));
    if n_u > 0 {
        let k = kron_diag(&base_gram(&z, &h, DEFAULT_JITTER)?, &h.signal_variances());
        cov.view_mut((n_x, n_x), (n - n_x, n - n_x)).copy_from(&k);
    }
    let n_obs = rng.random_range(1..=n);
    let c = DMatrix::from_fn(n_obs, n, |_, _| rng.random_range(-1.0..1.0));
    let psi = &c * &cov * c.transpose() + DMatrix::identity(n_obs, n_obs) * 0.3;
    let gain = &cov
        * c.transpose()
        * psi
            .try_inverse()
            .ok_or(Error::Singular("observation covariance"))?;
    let cov = &cov - &gain * &c * &cov;
    let cov = (&cov + cov.transpose()) * 0.5;
    let chol = Cholesky::new(cov)
        .ok_or(Error::NotPositiveDefinite("posterior covariance"))?
        .unpack();
    let mean = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    AugmentedBelief::from_parts(n_x, z, mean, chol, h)
}

fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Square-root filter against the dense filter on randomized single steps.
/// Drift over whole runs is reported alongside but not judged, since it is
/// dominated by round-off amplification in the Adam normalization.
pub fn criterion_1() -> Outcome {
    timed(1, "square-root vs dense filter", true, || {
        let mut rng = ChaCha8Rng::seed_from_u64(1001);
        let mut worst: f64 = 0.0;
        let (mut adds, mut discards, mut hyper_steps) = (0, 0, 0);
        let steps = 100;
        for k in 0..steps {
            let n_x = rng.random_range(1..=4);
            let n_f = rng.random_range(1..=2);
            let n_in = rng.random_range(1..=n_x);
            let n_y = rng.random_range(1..=2);
            let model = RandomModel::generate(&mut rng, n_x, n_y, n_f, n_in);
            let h = random_hyper(&mut rng, n_in, n_f);
            let config = FilterConfig {
                budget: 10,
                hyperopt: rng.random_bool(0.5),
                ..Default::default()
            };
            // A full set half the time, so that additions force a discard.
            let n_u = if rng.random_bool(0.5) {
                10
            } else {
                rng.random_range(0..10)
            };
            let b = posterior_belief(&mut rng, n_x, h.clone(), n_u)?;
            let db = DenseBelief::from(&b);
            let y = rng
                .random_bool(0.8)
                .then(|| DVector::from_fn(n_y, |_, _| rng.random_range(-1.0..1.0)));
            let mut adam_a = AdamState::new(h.len(), config.adam);
            let mut adam_b = adam_a.clone();
            let (nb, rep) = filter::step(&b, &[], y.as_ref(), &model, &config, &mut adam_a)
                .map_err(|e| e.at_step(k))?;
            let nd = dense_step(&db, &[], y.as_ref(), &model, &config, &mut adam_b)
                .map_err(|e| e.at_step(k))?;
            if nb.n_u() != nd.n_u() {
                return Err(Error::Config(format!(
                    "inducing sets differ at instance {k}"
                )));
            }
            adds += usize::from(rep.added);
            discards += usize::from(!rep.discarded.is_empty());
            hyper_steps += usize::from(rep.loss.is_some());
            worst = worst
                .max((nb.mean() - &nd.mean).amax())
                .max(max_abs(&nb.covariance(), &nd.cov));
        }

        let mut drift: f64 = 0.0;
        for trial in 0..4 {
            let n_x = rng.random_range(1..=4);
            let n_f = rng.random_range(1..=2);
            let n_in = rng.random_range(1..=n_x);
            let n_y = rng.random_range(1..=2);
            let model = RandomModel::generate(&mut rng, n_x, n_y, n_f, n_in);
            let h = random_hyper(&mut rng, n_in, n_f);
            let config = FilterConfig {
                budget: 10,
                hyperopt: trial % 2 == 1,
                ..Default::default()
            };
            drift = drift.max(compare_runs(&mut rng, &model, h, &config, 100)?);
        }
        Ok((
            worst < 1e-10,
            format!(
                "max moment discrepancy {worst:.2e} over {steps} random steps \
                 ({adds} add, {discards} discard, {hyper_steps} hyperparameter) (tol 1e-10); \
                 100-step run drift {drift:.1e}"
            ),
        ))
    })
}

/// Runs both filters side by side from the same start on a simulated
/// trajectory; returns the largest moment discrepancy seen.
pub fn compare_runs<R: Rng, M: ModelSpec>(
    rng: &mut R,
    model: &M,
    h: Hyperparameters,
    config: &FilterConfig,
    steps: usize,
) -> Result<f64> {
    let n_x = model.state_dim();
    let mut b = AugmentedBelief::new(
        DVector::from_fn(n_x, |_, _| rng.random_range(-1.0..1.0)),
        &DMatrix::identity(n_x, n_x),
        h.clone(),
    )?;
    let mut db = DenseBelief::from(&b);
    let mut adam_a = AdamState::new(h.len(), config.adam);
    let mut adam_b = adam_a.clone();
    let mut x = DVector::from_fn(n_x, |_, _| rng.random_range(-1.0..1.0));
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        let z = model.gp_input(&x, &[]);
        let f_true = DVector::from_fn(model.gp_output_dim(), |a, _| (z.sum() + a as f64).sin());
        x = model.transition(&x, &f_true, &[]);
        let y = model.measurement(&x)
            + DVector::from_fn(model.measurement_dim(), |_, _| rng.random_range(-0.1..0.1));
        let y = if rng.random_bool(0.8) { Some(y) } else { None };
        let (nb, _) = filter::step(&b, &[], y.as_ref(), model, config, &mut adam_a)
            .map_err(|e| e.at_step(k))?;
        b = nb;
        db = dense_step(&db, &[], y.as_ref(), model, config, &mut adam_b)
            .map_err(|e| e.at_step(k))?;
        if b.n_u() != db.n_u() {
            return Err(Error::Config(format!("inducing sets diverged at step {k}")));
        }
        let dm = (b.mean() - &db.mean).amax();
        let dc = max_abs(&b.covariance(), &db.cov);
        worst = worst.max(dm).max(dc);
    }
    Ok(worst)
}

/// `predict_noadd` against `predict_add` followed by dropping the new block.
pub fn criterion_2() -> Outcome {
    timed(2, "add-then-marginalize identity", true, || {
        let mut rng = ChaCha8Rng::seed_from_u64(1002);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let n_x = rng.random_range(1..=4);
            let n_f = rng.random_range(1..=2);
            let n_in = rng.random_range(1..=n_x);
            let n_u = rng.random_range(0..=6);
            let model = RandomModel::generate(&mut rng, n_x, 1, n_f, n_in);
            let h = random_hyper(&mut rng, n_in, n_f);
            let b = random_belief(&mut rng, n_x, h, n_u);
            let lin = linearize(&b, &[], &model)?;
            let q = model.process_noise();
            let a = predict_add(&b, &lin, &q, 1e-10)?;
            let a = a.chol_drop(a.n_u() - 1)?;
            let n = predict_noadd(&b, &lin, &q, 1e-10)?;
            worst = worst
                .max((a.mean() - n.mean()).amax())
                .max(max_abs(&a.covariance(), &n.covariance()));
        }
        Ok((
            worst < 1e-10,
            format!("max |Σ, ξ| difference {worst:.2e} on 200 instances (tol 1e-10)"),
        ))
    })
}

/// Score argmin against the exact KL argmin.
pub fn criterion_3() -> Outcome {
    timed(3, "discard-score optimality", true, || {
        let mut rng = ChaCha8Rng::seed_from_u64(1003);
        let mut hits = 0;
        let trials = 50;
        for _ in 0..trials {
            let n_x = rng.random_range(1..=3);
            let n_f = rng.random_range(1..=2);
            let n_in = rng.random_range(1..=2);
            let n_u = rng.random_range(6..=8);
            let h = random_hyper(&mut rng, n_in, n_f);
            let b = random_belief(&mut rng, n_x, h, n_u);
            let s = argmin_score(&score_all(&b)?).expect("non-empty");
            let db = DenseBelief::from(&b);
            let kls = (0..n_u)
                .map(|d| db.discard_kl(d))
                .collect::<Result<Vec<_>>>()?;
            let k = kls
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .expect("non-empty");
            hits += usize::from(s == k);
        }
        Ok((hits == trials, format!("{hits}/{trials} argmin agreements")))
    })
}

/// Inducing-point moments of the degenerate regression model against exact
/// GP regression.
pub fn criterion_4() -> Outcome {
    timed(4, "GPR reduction", true, || {
        let config = ExperimentConfig {
            seed: 1004,
            ..ExperimentConfig::for_task(Task::Gprcheck)
        };
        let s = run_experiment(&config)?.summary;
        let (Some(mean_err), Some(var_err)) = (s.gpr_mean_error, s.gpr_cov_error) else {
            return Ok((
                false,
                format!("only {} of {} inputs were kept", s.final_n_u, s.train_steps),
            ));
        };
        let ok = mean_err < 1e-6 && var_err < 1e-6;
        Ok((ok, format!("max mean error {mean_err:.2e}, max covariance error {var_err:.2e} over {} samples (tol 1e-6)", s.train_steps)))
    })
}

fn rel_close(g: &[f64], fd: &[f64], tol: f64) -> bool {
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    g.iter()
        .zip(fd)
        .all(|(a, b)| (a - b).abs() <= tol * scale + 1e-9)
}

/// Kernel and loss gradients against central differences.
pub fn criterion_5() -> Outcome {
    timed(5, "gradient certification", true, || {
        let mut rng = ChaCha8Rng::seed_from_u64(1005);
        let step = 1e-5;
        let (mut ok_in, mut ok_th, mut ok_loss) = (0, 0, 0);
        for _ in 0..100 {
            let n_in = rng.random_range(1..=3);
            let n_f = rng.random_range(1..=2);
            let h = random_hyper(&mut rng, n_in, n_f);
            let z = DVector::from_fn(n_in, |_, _| rng.random_range(-1.5..1.5));
            let zs: Vec<_> = (0..4)
                .map(|_| DVector::from_fn(n_in, |_, _| rng.random_range(-1.5..1.5)))
                .collect();
            let g = k_input_grad(&z, &zs, &h)?;
            let mut good = true;
            for (j, zj) in zs.iter().enumerate() {
                let fd = fd_gradient(
                    |p| k_base(&DVector::from_column_slice(p), zj, &h).unwrap(),
                    z.as_slice(),
                    step,
                )?;
                good &= rel_close(g.column(j).as_slice(), &fd, 1e-4);
            }
            ok_in += usize::from(good);

            let mut good = true;
            for j in 0..h.len() {
                let an = k_theta_grad(&zs, &zs, &h, j)?.full();
                let theta = h.to_vec();
                let mut fd = DMatrix::zeros(an.nrows(), an.ncols());
                for r in 0..an.nrows() {
                    for c in 0..an.ncols() {
                        let d = fd_gradient(
                            |t| {
                                let mut tt = theta.clone();
                                tt[j] = t[0];
                                let hh = Hyperparameters::from_vec(n_in, &tt).unwrap();
                                k_matrix(&zs, &zs, &hh).unwrap().full()[(r, c)]
                            },
                            &[theta[j]],
                            step,
                        )?;
                        fd[(r, c)] = d[0];
                    }
                }
                good &= rel_close(an.as_slice(), fd.as_slice(), 1e-4);
            }
            ok_th += usize::from(good);

            let n_u = rng.random_range(1..=8);
            let n_x = rng.random_range(1..=3);
            let b = posterior_belief(&mut rng, n_x, h.clone(), n_u)?;
            let theta_new = if rng.random_bool(0.3) {
                h.clone()
            } else {
                let t: Vec<f64> = h
                    .to_vec()
                    .iter()
                    .map(|v| v + rng.random_range(-0.3..0.3))
                    .collect();
                Hyperparameters::from_vec(n_in, &t)?
            };
            let an = hyper_loss_grad(&b, &theta_new)?;
            let fd = fd_gradient(
                |t| {
                    hyper_loss(&b, &Hyperparameters::from_vec(n_in, t).unwrap())
                        .unwrap()
                        .total
                },
                &theta_new.to_vec(),
                step,
            )?;
            ok_loss += usize::from(rel_close(&an, &fd, 1e-4));
        }
        let ok = ok_in == 100 && ok_th == 100 && ok_loss == 100;
        Ok((
            ok,
            format!(
                "input {ok_in}/100, hyperparameter {ok_th}/100, loss {ok_loss}/100 within rel 1e-4"
            ),
        ))
    })
}

/// Belief adjustment against precision-space multiplication.
pub fn criterion_6() -> Outcome {
    timed(6, "hyperparameter adjustment", true, || {
        let mut rng = ChaCha8Rng::seed_from_u64(1006);
        let mut worst: f64 = 0.0;
        let mut identity_exact = true;
        for _ in 0..100 {
            let n_in = rng.random_range(1..=3);
            let n_f = rng.random_range(1..=2);
            let n_x = rng.random_range(1..=3);
            let n_u = rng.random_range(1..=6);
            let h = random_hyper(&mut rng, n_in, n_f);
            let b = posterior_belief(&mut rng, n_x, h.clone(), n_u)?;
            identity_exact &= apply_hyperparams(&b, &h, 1e-10)? == b;
            let t: Vec<f64> = h
                .to_vec()
                .iter()
                .map(|v| v + rng.random_range(-0.2..0.2))
                .collect();
            let theta = Hyperparameters::from_vec(n_in, &t)?;
            let got = apply_hyperparams(&b, &theta, 1e-10)?;
            let want = natural_param_adjust(&DenseBelief::from(&b), &theta)?;
            worst = worst
                .max((got.mean() - &want.mean).amax())
                .max(max_abs(&got.covariance(), &want.cov));
        }
        let ok = worst < 1e-8 && identity_exact;
        Ok((
            ok,
            format!("max deviation {worst:.2e} (tol 1e-8), equal-θ no-op exact: {identity_exact}"),
        ))
    })
}

/// Hyperparameter learning on wing rock from mismatched initial values,
/// averaged over a few measurement-noise seeds.
pub fn criterion_7() -> Outcome {
    timed(7, "wing rock adaptation", true, || {
        let seeds = [1007, 1008, 1009, 1010, 1011];
        let n = seeds.len() as f64;
        let (mut e_on, mut e_off, mut worse) = (0.0, 0.0, 0);
        let mut theta = vec![0.0; 3];
        let mut data = None;
        for seed in seeds {
            let base = ExperimentConfig {
                seed,
                ..ExperimentConfig::for_task(Task::Wingrock)
            };
            let on = run_experiment(&base)?;
            let off = run_experiment(&ExperimentConfig {
                hyperopt: false,
                ..base
            })?;
            let a = on.summary.prediction_rmse_final_quarter.unwrap_or(f64::NAN);
            let b = off
                .summary
                .prediction_rmse_final_quarter
                .unwrap_or(f64::NAN);
            e_on += a / n;
            e_off += b / n;
            worse += usize::from(a >= b);
            theta
                .iter_mut()
                .zip(&on.summary.final_hyperparameters)
                .for_each(|(t, v)| *t += v / n);
            data.get_or_insert(on.records);
        }

        // Reference from an offline fit to every twentieth (θ, p, Δ) sample.
        let (inputs, targets): (Vec<DVector<f64>>, Vec<f64>) = data
            .unwrap_or_default()
            .iter()
            .step_by(20)
            .map(|r| (DVector::from_column_slice(&r.truth), r.gp_truth[0]))
            .unzip();
        let h0 = Hyperparameters::isotropic(2, 1, 1.0, 1.0)?;
        let reference = offline_gpr_fit(
            &inputs,
            &DMatrix::from_column_slice(targets.len(), 1, &targets),
            1e-4,
            &h0,
        )?;

        let init = Hyperparameters::new(&[5.0, 5.0], &[10.0])?.to_vec();
        let refv = reference.to_vec();
        let closer = (0..3)
            .filter(|&i| (theta[i] - refv[i]).abs() < (init[i] - refv[i]).abs())
            .count();
        let gain = 1.0 - e_on / e_off;
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{:.2}", x.exp()))
                .collect::<Vec<_>>()
                .join("/")
        };
        Ok((
            closer >= 2 && gain >= 0.10,
            format!(
                "{closer}/3 hyperparameters moved toward the offline fit (l1/l2/σ² mean final {}, reference {}); \
                 final-quarter Δ RMSE {e_on:.4} vs {e_off:.4} without adaptation ({:.1}% better, need 10%; \
                 {worse}/{n} seeds not improved)",
                fmt(&theta),
                fmt(&refv),
                100.0 * gain
            ),
        ))
    })
}

/// Limit cycle: open-loop forecast against holding the last estimate, and
/// filtering error over the training window.
pub fn criterion_8() -> Outcome {
    timed(8, "limit-cycle forecast", true, || {
        let config = ExperimentConfig {
            seed: 1008,
            ..ExperimentConfig::for_task(Task::Lincycle)
        };
        let s = run_experiment(&config)?.summary;
        let (fc, base) = (
            s.forecast_rmse.unwrap_or(f64::NAN),
            s.baseline_forecast_rmse.unwrap_or(f64::NAN),
        );
        let gain = 1.0 - fc / base;
        let ok = gain >= 0.30 && s.filter_rmse_last_quarter < s.filter_rmse_first_quarter;
        Ok((
            ok,
            format!(
                "{}-step forecast RMSE {fc:.4} vs hold-last {base:.4} ({:.1}% better, need 30%); \
                 filter RMSE first quarter {:.4}, last quarter {:.4}",
                s.forecast_steps,
                100.0 * gain,
                s.filter_rmse_first_quarter,
                s.filter_rmse_last_quarter
            ),
        ))
    })
}

/// Directory holding `dryer.dat` and `ballbeam.dat`.
pub fn daisy_dir() -> PathBuf {
    std::env::var_os("RGPSSM_DAISY_DIR").map_or_else(|| PathBuf::from("data/daisy"), PathBuf::from)
}

/// Mean forecast RMSE over seeds `0..seeds` on one recorded dataset, in
/// standardized units.
pub fn sysid_mean_rmse(path: &Path, name: &str, seeds: u64) -> Result<f64> {
    let mut total = 0.0;
    for seed in 0..seeds {
        let config = ExperimentConfig {
            seed,
            data: Some(path.display().to_string()),
            dataset_name: Some(name.to_string()),
            ..ExperimentConfig::for_task(Task::Sysid)
        };
        total += run_experiment(&config)?
            .summary
            .forecast_rmse
            .ok_or(Error::Config("sysid run produced no forecast".into()))?;
    }
    Ok(total / seeds as f64)
}

/// Recorded benchmark datasets. These are reproduction targets and never
/// block the suite.
pub fn criterion_9() -> Outcome {
    timed(9, "recorded-data identification", false, || {
        let dir = daisy_dir();
        let cases = [
            ("dryer", "dryer.dat", 0.16),
            ("ballbeam", "ballbeam.dat", 0.07),
        ];
        let mut parts = Vec::new();
        let mut ok = true;
        for (name, file, target) in cases {
            let path = dir.join(file);
            if !path.is_file() {
                ok = false;
                parts.push(format!("{name}: data not found at {}", path.display()));
                continue;
            }
            let e = sysid_mean_rmse(&path, name, 5)?;
            ok &= e <= target;
            parts.push(format!(
                "{name}: mean RMSE {e:.3} over 5 seeds (target {target})"
            ));
        }
        Ok((ok, parts.join("; ")))
    })
}

/// Median wall-clock time of full steps at M = 20, n_x = n_f = 4.
pub fn criterion_10() -> Outcome {
    timed(10, "step time", true, || {
        let mut rng = ChaCha8Rng::seed_from_u64(1010);
        let (n_x, n_f) = (4, 4);
        let model = RandomModel::generate(&mut rng, n_x, 2, n_f, n_x);
        let h = random_hyper(&mut rng, n_x, n_f);
        let config = FilterConfig {
            budget: 20,
            hyperopt: true,
            ..Default::default()
        };
        let mut b =
            AugmentedBelief::new(DVector::zeros(n_x), &DMatrix::identity(n_x, n_x), h.clone())?;
        let mut adam = AdamState::new(h.len(), config.adam);
        let mut x = DVector::<f64>::zeros(n_x);
        let mut times = Vec::new();
        for k in 0..400 {
            let z = model.gp_input(&x, &[]);
            let f_true = DVector::from_fn(n_f, |a, _| (z.sum() + a as f64).sin());
            x = model.transition(&x, &f_true, &[]);
            let y = model.measurement(&x);
            let t0 = Instant::now();
            let (nb, _) = filter::step(&b, &[], Some(&y), &model, &config, &mut adam)
                .map_err(|e| e.at_step(k))?;
            let dt = t0.elapsed().as_secs_f64();
            b = nb;
            if b.n_u() == config.budget {
                times.push(dt);
            }
        }
        if times.is_empty() {
            return Ok((false, "the inducing set never reached the budget".into()));
        }
        times.sort_by(f64::total_cmp);
        let median = times[times.len() / 2];
        Ok((
            median <= 5e-3,
            format!(
                "median {:.3} ms over {} full-budget steps with hyperparameter learning (limit 5 ms)",
                median * 1e3,
                times.len()
            ),
        ))
    })
}

/// Long run with randomly interleaved additions, discards, corrections and
/// hyperparameter steps; the factor must keep a positive finite diagonal.
pub fn criterion_11() -> Outcome {
    timed(11, "stability soak", true, || {
        let mut rng = ChaCha8Rng::seed_from_u64(1011);
        let (n_x, n_f, n_in) = (3, 2, 2);
        let model = RandomModel::generate(&mut rng, n_x, 2, n_f, n_in);
        let h = random_hyper(&mut rng, n_in, n_f);
        let mut b =
            AugmentedBelief::new(DVector::zeros(n_x), &DMatrix::identity(n_x, n_x), h.clone())?;
        let mut adam = AdamState::new(h.len(), Default::default());
        let mut x = DVector::<f64>::zeros(n_x);
        let (mut adds, mut discards, mut corrections) = (0, 0, 0);
        let steps = 5000;
        for k in 0..steps {
            let config = FilterConfig {
                budget: rng.random_range(4..=10),
                novelty_tol: [0.0, 1e-4, 0.05, 2.0][rng.random_range(0..4)],
                hyperopt: rng.random_bool(0.3),
                ..Default::default()
            };
            let z = model.gp_input(&x, &[]);
            let f_true = DVector::from_fn(n_f, |a, _| (1.5 * z.sum() + a as f64).sin());
            let w = DVector::from_fn(n_x, |_, _| rng.random_range(-0.05..0.05));
            x = model.transition(&x, &f_true, &[]) + w;
            let y = rng.random_bool(0.7).then(|| {
                model.measurement(&x) + DVector::from_fn(2, |_, _| rng.random_range(-0.1..0.1))
            });
            let (nb, rep) = filter::step(&b, &[], y.as_ref(), &model, &config, &mut adam)
                .map_err(|e| e.at_step(k))?;
            b = nb;
            adds += usize::from(rep.added);
            discards += rep.discarded.len();
            corrections += usize::from(rep.innovation.is_some());
            let d = b.chol().diagonal();
            if let Some(i) = d.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Ok((
                    false,
                    format!("factor diagonal entry {i} is {} at step {k}", d[i]),
                ));
            }
        }
        Ok((
            true,
            format!("{steps} steps ({adds} additions, {discards} discards, {corrections} corrections), diagonal positive throughout"),
        ))
    })
}

/// Every criterion in order.
pub fn run_all() -> Vec<Outcome> {
    vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
        criterion_11(),
    ]
}
