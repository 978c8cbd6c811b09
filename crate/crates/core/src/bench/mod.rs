//! Experiment runner: drives a filter over a simulated or recorded stream,
//! forecasts past the training window and collects per-step records and
//! summary metrics.

mod config;
mod data;

pub use config::{ExperimentConfig, Task};
pub use data::{load_daisy, rmse, standardize, IoDataset, Scaler, Standardization};

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::belief::AugmentedBelief;
use crate::error::{Error, Result};
use crate::filter::{gp_posterior, Filter, FilterConfig};
use crate::hypopt::AdamConfig;
use crate::kernel::Hyperparameters;
use crate::models::{
    switching_lds_simulate, wingrock_simulate, GprReduction, LimitCycleConfig, LimitCycleModel,
    ModelSpec, PdTracking, SysIdModel, WingRockModel, WingRockParams,
};
use crate::oracle::exact_gpr;
use config::broadcast;

/// One filtering step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
    /// True state, when known.
    pub truth: Vec<f64>,
    /// Measurement function at the filtered mean.
    pub output: Vec<f64>,
    pub observation: Vec<f64>,
    pub innovation: Option<Vec<f64>>,
    pub gamma0: f64,
    pub added: bool,
    pub n_u: usize,
    pub loss: Option<f64>,
    pub hyperparameters: Vec<f64>,
    /// GP mean at the filtered state, when the true function is known.
    pub gp_mean: Vec<f64>,
    /// True function value at the true state.
    pub gp_truth: Vec<f64>,
}

/// One open-loop step after training.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForecastRecord {
    pub step: usize,
    pub time: f64,
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
    pub truth: Vec<f64>,
    pub output: Vec<f64>,
    pub observation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub task: Task,
    pub seed: u64,
    pub dataset_name: Option<String>,
    pub train_steps: usize,
    pub forecast_steps: usize,
    /// State error when the state is known, output error otherwise.
    pub filter_rmse: f64,
    pub filter_rmse_first_quarter: f64,
    pub filter_rmse_last_quarter: f64,
    /// GP mean error against the true function over the final quarter.
    pub prediction_rmse_final_quarter: Option<f64>,
    pub forecast_rmse: Option<f64>,
    /// Forecast error of holding the last filtered estimate.
    pub baseline_forecast_rmse: Option<f64>,
    pub gpr_mean_error: Option<f64>,
    pub gpr_cov_error: Option<f64>,
    pub final_n_u: usize,
    pub final_hyperparameters: Vec<f64>,
    pub seconds_per_step: f64,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub records: Vec<StepRecord>,
    pub forecast: Vec<ForecastRecord>,
    pub summary: Summary,
}

impl ExperimentReport {
    /// Writes `report.json` (summary) and `trace.csv` (per-step) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&self.summary)?,
        )?;
        self.write_trace(&dir.join("trace.csv"))
    }

    fn write_trace(&self, path: &Path) -> Result<()> {
        use crate::models::csv_err;
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let width = |f: &dyn Fn(&StepRecord) -> usize| self.records.first().map_or(0, f);
        let (nx, nt, ny, ng, nh) = (
            width(&|r| r.mean.len()),
            width(&|r| r.truth.len()),
            width(&|r| r.output.len()),
            width(&|r| r.gp_mean.len()),
            width(&|r| r.hyperparameters.len()),
        );
        let mut header = vec!["phase".to_string(), "step".into(), "time".into()];
        let named = |p: &'static str, n: usize| (1..=n).map(move |i| format!("{p}{i}"));
        header.extend(named("mean", nx));
        header.extend(named("var", nx));
        header.extend(named("truth", nt));
        header.extend(named("output", ny));
        header.extend(named("observation", ny));
        header.extend(["gamma0".into(), "added".into(), "n_u".into(), "loss".into()]);
        header.extend(named("gp_mean", ng));
        header.extend(named("gp_truth", ng));
        header.extend(named("theta", nh));
        w.write_record(&header).map_err(csv_err)?;

        let nums = |v: &[f64], n: usize| -> Vec<String> {
            (0..n)
                .map(|i| v.get(i).map_or(String::new(), f64::to_string))
                .collect()
        };
        for r in &self.records {
            let mut row = vec!["filter".to_string(), r.step.to_string(), r.time.to_string()];
            row.extend(nums(&r.mean, nx));
            row.extend(nums(&r.cov_diag, nx));
            row.extend(nums(&r.truth, nt));
            row.extend(nums(&r.output, ny));
            row.extend(nums(&r.observation, ny));
            row.push(r.gamma0.to_string());
            row.push(u8::from(r.added).to_string());
            row.push(r.n_u.to_string());
            row.push(r.loss.map_or(String::new(), |v| v.to_string()));
            row.extend(nums(&r.gp_mean, ng));
            row.extend(nums(&r.gp_truth, ng));
            row.extend(nums(&r.hyperparameters, nh));
            w.write_record(&row).map_err(csv_err)?;
        }
        for r in &self.forecast {
            let mut row = vec![
                "forecast".to_string(),
                r.step.to_string(),
                r.time.to_string(),
            ];
            row.extend(nums(&r.mean, nx));
            row.extend(nums(&r.cov_diag, nx));
            row.extend(nums(&r.truth, nt));
            row.extend(nums(&r.output, ny));
            row.extend(nums(&r.observation, ny));
            row.extend(std::iter::repeat_n(String::new(), 4 + 2 * ng + nh));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the configured experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    match config.task {
        Task::Wingrock => run_wingrock(config),
        Task::Lincycle => run_lincycle(config),
        Task::Sysid => run_sysid(config),
        Task::Gprcheck => run_gprcheck(config),
    }
}

fn filter_config(c: &ExperimentConfig) -> FilterConfig {
    FilterConfig {
        budget: c.budget,
        novelty_tol: c.novelty_tol,
        hyperopt: c.hyperopt,
        adam: AdamConfig {
            learning_rate: c.learning_rate,
            ..AdamConfig::default()
        },
        trust_region: c.trust_region,
        jitter: c.jitter,
    }
}

fn hyperparameters(c: &ExperimentConfig, n_in: usize, n_f: usize) -> Result<Hyperparameters> {
    Hyperparameters::new(
        &broadcast("length_scale", &c.length_scale, n_in)?,
        &broadcast("signal_variance", &c.signal_variance, n_f)?,
    )
}

fn diag(what: &'static str, v: &[f64], n: usize) -> Result<DMatrix<f64>> {
    Ok(DMatrix::from_diagonal(&DVector::from_vec(broadcast(
        what, v, n,
    )?)))
}

/// What the driver knows about one training sample.
struct Sample<'a> {
    time: f64,
    control: &'a [f64],
    y: Option<DVector<f64>>,
    truth: Option<&'a DVector<f64>>,
    gp_truth: Option<Vec<f64>>,
}

fn record<M: ModelSpec>(
    f: &Filter<M>,
    s: &Sample<'_>,
    rep: crate::StepReport,
) -> Result<StepRecord> {
    let b = f.belief();
    let mean = b.state_mean();
    let gp_mean = match &s.gp_truth {
        Some(_) => {
            let z = f.model().gp_input(&mean, s.control);
            gp_posterior(b, &[z])?.mean.iter().copied().collect()
        }
        None => Vec::new(),
    };
    Ok(StepRecord {
        step: rep.step,
        time: s.time,
        output: f.model().measurement(&mean).iter().copied().collect(),
        cov_diag: b.state_cov().diagonal().iter().copied().collect(),
        mean: mean.iter().copied().collect(),
        truth: s
            .truth
            .map_or_else(Vec::new, |t| t.iter().copied().collect()),
        observation: s
            .y
            .as_ref()
            .map_or_else(Vec::new, |y| y.iter().copied().collect()),
        innovation: rep.innovation.map(|i| i.residual),
        gamma0: rep.gamma0,
        added: rep.added,
        n_u: rep.n_u,
        loss: rep.loss,
        hyperparameters: rep.hyperparameters,
        gp_mean,
        gp_truth: s.gp_truth.clone().unwrap_or_default(),
    })
}

/// Filters every sample; returns the records and the mean wall-clock time per
/// step.
fn drive<M: ModelSpec>(
    f: &mut Filter<M>,
    samples: Vec<Sample<'_>>,
) -> Result<(Vec<StepRecord>, f64)> {
    let mut out = Vec::with_capacity(samples.len());
    let mut busy = 0.0;
    for s in samples {
        let t0 = Instant::now();
        let rep = f.step(s.control, s.y.as_ref())?;
        busy += t0.elapsed().as_secs_f64();
        out.push(record(f, &s, rep)?);
    }
    let per_step = busy / out.len().max(1) as f64;
    Ok((out, per_step))
}

fn records_rmse(records: &[StepRecord], range: std::ops::Range<usize>) -> Result<f64> {
    let (mut p, mut t) = (Vec::new(), Vec::new());
    for r in &records[range] {
        if r.truth.is_empty() {
            if !r.observation.is_empty() {
                p.extend(&r.output);
                t.extend(&r.observation);
            }
        } else {
            p.extend(&r.mean);
            t.extend(&r.truth);
        }
    }
    rmse(&p, &t)
}

fn quarter(n: usize) -> usize {
    (n / 4).max(1).min(n)
}

fn summarize(
    config: &ExperimentConfig,
    records: &[StepRecord],
    forecast: &[ForecastRecord],
    seconds_per_step: f64,
    final_belief: &AugmentedBelief,
) -> Result<Summary> {
    let n = records.len();
    let q = quarter(n);
    let has_gp_truth = records.iter().any(|r| !r.gp_truth.is_empty());
    let prediction = if has_gp_truth {
        let tail = &records[n - q..];
        let p: Vec<f64> = tail
            .iter()
            .flat_map(|r| r.gp_mean.iter().copied())
            .collect();
        let t: Vec<f64> = tail
            .iter()
            .flat_map(|r| r.gp_truth.iter().copied())
            .collect();
        Some(rmse(&p, &t)?)
    } else {
        None
    };
    let (forecast_rmse, baseline) = if forecast.is_empty() {
        (None, None)
    } else {
        let state_known = forecast.iter().all(|r| !r.truth.is_empty());
        let last = records
            .last()
            .ok_or(Error::Config("no training steps".into()))?;
        let (mut p, mut b, mut t) = (Vec::new(), Vec::new(), Vec::new());
        for r in forecast {
            if state_known {
                p.extend(&r.mean);
                b.extend(&last.mean);
                t.extend(&r.truth);
            } else {
                p.extend(&r.output);
                b.extend(&last.output);
                t.extend(&r.observation);
            }
        }
        (Some(rmse(&p, &t)?), Some(rmse(&b, &t)?))
    };
    Ok(Summary {
        task: config.task,
        seed: config.seed,
        dataset_name: config.dataset_name.clone(),
        train_steps: n,
        forecast_steps: forecast.len(),
        filter_rmse: records_rmse(records, 0..n)?,
        filter_rmse_first_quarter: records_rmse(records, 0..q)?,
        filter_rmse_last_quarter: records_rmse(records, n - q..n)?,
        prediction_rmse_final_quarter: prediction,
        forecast_rmse,
        baseline_forecast_rmse: baseline,
        gpr_mean_error: None,
        gpr_cov_error: None,
        final_n_u: final_belief.n_u(),
        final_hyperparameters: final_belief.hyperparameters().to_vec(),
        seconds_per_step,
        config: config.clone(),
    })
}

fn forecast_records<M: ModelSpec>(
    f: &Filter<M>,
    controls: &[Vec<f64>],
    steps: usize,
    first_step: usize,
    dt: f64,
    truth: &[DVector<f64>],
    observations: &[DVector<f64>],
) -> Result<Vec<ForecastRecord>> {
    let path = f.forecast(controls, steps)?;
    Ok(path
        .into_iter()
        .enumerate()
        .map(|(k, (m, p))| ForecastRecord {
            step: first_step + k,
            time: (first_step + k) as f64 * dt,
            output: f.model().measurement(&m).iter().copied().collect(),
            mean: m.iter().copied().collect(),
            cov_diag: p.diagonal().iter().copied().collect(),
            truth: truth
                .get(k)
                .map_or_else(Vec::new, |t| t.iter().copied().collect()),
            observation: observations
                .get(k)
                .map_or_else(Vec::new, |y| y.iter().copied().collect()),
        })
        .collect())
}

/// Wing rock over `duration` seconds under the default tracking controller.
/// The first sample is the known initial condition; every later sample is a
/// predict/correct step.
fn run_wingrock(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut params = WingRockParams {
        dt: c.dt,
        ..WingRockParams::default()
    };
    let r = broadcast("measurement_noise", &c.measurement_noise, 1)?[0];
    params.noise_std_deg = r.sqrt().to_degrees();
    let controller = PdTracking {
        l_da: params.l_da,
        ..PdTracking::default()
    };
    let sim = wingrock_simulate(
        &params,
        &|t, x| controller.control(t, x),
        c.duration,
        c.seed,
    );
    if sim.len() < 2 {
        return Err(Error::Config("duration shorter than two steps".into()));
    }
    let model = WingRockModel::new(params.clone(), diag("process_noise", &c.process_noise, 2)?);
    let x0 = DVector::from_row_slice(&params.x0);
    let belief = AugmentedBelief::new(
        x0,
        &(DMatrix::identity(2, 2) * c.x0_var),
        hyperparameters(c, 2, 1)?,
    )?;
    let mut f = Filter::new(model, belief, filter_config(c));
    let samples = (1..sim.len())
        .map(|k| Sample {
            time: sim.t[k],
            control: sim.u[k - 1].as_slice(),
            y: Some(sim.y[k].clone()),
            truth: Some(&sim.x[k]),
            gp_truth: Some(vec![sim.delta[k]]),
        })
        .collect();
    let (records, per_step) = drive(&mut f, samples)?;
    let summary = summarize(c, &records, &[], per_step, f.belief())?;
    Ok(ExperimentReport {
        records,
        forecast: Vec::new(),
        summary,
    })
}

/// Limit cycle: filter `train_steps` observations, then forecast
/// `forecast_steps` steps open loop.
fn run_lincycle(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let q = broadcast("process_noise", &c.process_noise, 2)?;
    let r = broadcast("measurement_noise", &c.measurement_noise, 1)?[0];
    let lc = LimitCycleConfig {
        dt: c.dt,
        steps: c.train_steps + c.forecast_steps + 1,
        process_noise_std: q[0].sqrt(),
        measurement_noise_std: r.sqrt(),
        ..LimitCycleConfig::default()
    };
    let (sim, obs) = switching_lds_simulate(&lc, c.seed);
    let n_y = obs.nrows();
    let model = LimitCycleModel {
        observation: obs,
        process_noise: diag("process_noise", &c.process_noise, 2)?,
        measurement_noise: DMatrix::identity(n_y, n_y) * r,
    };
    let belief = AugmentedBelief::new(
        DVector::zeros(2),
        &(DMatrix::identity(2, 2) * c.x0_var),
        hyperparameters(c, 2, 2)?,
    )?;
    let mut f = Filter::new(model, belief, filter_config(c));
    let samples = (1..=c.train_steps)
        .map(|k| Sample {
            time: sim.t[k],
            control: &[],
            y: Some(sim.y[k].clone()),
            truth: Some(&sim.x[k]),
            gp_truth: Some(
                (lc.advance(&sim.x[k]) - &sim.x[k])
                    .iter()
                    .copied()
                    .collect(),
            ),
        })
        .collect();
    let (records, per_step) = drive(&mut f, samples)?;
    let start = c.train_steps + 1;
    let forecast = forecast_records(
        &f,
        &[],
        c.forecast_steps,
        start,
        c.dt,
        &sim.x[start..],
        &sim.y[start..],
    )?;
    let summary = summarize(c, &records, &forecast, per_step, f.belief())?;
    Ok(ExperimentReport {
        records,
        forecast,
        summary,
    })
}

/// Recorded input/output data: standardized with training statistics, filtered
/// over the first half and forecast over the second half with the recorded
/// inputs. Errors are in standardized units.
fn run_sysid(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let path = c
        .data
        .as_deref()
        .ok_or(Error::Config("sysid needs a data path".into()))?;
    let raw = load_daisy(Path::new(path), &c.input_cols, c.output_col)?;
    if raw.len() < 4 {
        return Err(Error::Config(format!(
            "{path}: too few samples ({})",
            raw.len()
        )));
    }
    let (train, test) = raw.split_half();
    let (train, test, _) = standardize(&train, &test);
    let n_u = c.input_cols.len();
    let mut model = SysIdModel::new(
        c.n_lat,
        broadcast("process_noise", &c.process_noise, 1)?[0],
        broadcast("measurement_noise", &c.measurement_noise, 1)?[0],
    );
    model.n_control = n_u;
    let hyper = hyperparameters(c, c.n_lat + n_u, c.n_lat)?;
    let belief = model.initial_belief(hyper, c.x0_var, c.seed)?;
    let mut f = Filter::new(model, belief, filter_config(c));
    let samples = (0..train.len())
        .map(|k| Sample {
            time: k as f64 * c.dt,
            control: train.u[k].as_slice(),
            y: Some(DVector::from_element(1, train.y[k])),
            truth: None,
            gp_truth: None,
        })
        .collect();
    let (records, per_step) = drive(&mut f, samples)?;
    let observations: Vec<DVector<f64>> = test
        .y
        .iter()
        .map(|v| DVector::from_element(1, *v))
        .collect();
    let forecast = forecast_records(
        &f,
        &test.u,
        test.len(),
        train.len(),
        c.dt,
        &[],
        &observations,
    )?;
    let summary = summarize(c, &records, &forecast, per_step, f.belief())?;
    Ok(ExperimentReport {
        records,
        forecast,
        summary,
    })
}

/// Streaming GP regression on `train_steps` well-separated 2-D inputs with a
/// smooth target; the summary carries the deviation of the inducing-value
/// moments from exact GP regression at the same inputs.
fn run_gprcheck(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let h = hyperparameters(c, 2, 1)?;
    let noise = broadcast("measurement_noise", &c.measurement_noise, 1)?[0];
    let n = c.train_steps;
    let inputs = crate::verify::spread_inputs(&mut rng, n, &h, 0.5);
    let targets: Vec<f64> = inputs
        .iter()
        .map(|z| (2.0 * z[0]).sin() * z[1].cos() + rng.random_range(-0.2..0.2))
        .collect();
    let model = GprReduction::new(1, 2, noise);
    let belief = AugmentedBelief::new(DVector::zeros(1), &DMatrix::identity(1, 1), h.clone())?;
    let mut f = Filter::new(model, belief, filter_config(c));
    let samples = (0..n)
        .map(|k| Sample {
            time: k as f64,
            control: inputs[k].as_slice(),
            y: Some(DVector::from_element(1, targets[k])),
            truth: None,
            gp_truth: None,
        })
        .collect();
    let (records, per_step) = drive(&mut f, samples)?;
    let mut summary = summarize(c, &records, &[], per_step, f.belief())?;

    let b = f.belief();
    if b.n_u() == n {
        let (m, covs) = exact_gpr(
            &inputs,
            &DMatrix::from_column_slice(n, 1, &targets),
            &[noise],
            &h,
            &inputs,
        )?;
        let nx = b.n_x();
        summary.gpr_mean_error = Some((b.mean().rows(nx, n) - m.column(0)).amax());
        summary.gpr_cov_error = Some((b.covariance().view((nx, nx), (n, n)) - &covs[0]).amax());
    } else {
        log::warn!(
            "only {} of {n} inputs were kept; skipping the exact comparison",
            b.n_u()
        );
    }
    Ok(ExperimentReport {
        records,
        forecast: Vec::new(),
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(task: Task) -> ExperimentConfig {
        ExperimentConfig {
            duration: 4.0,
            train_steps: 40,
            forecast_steps: 20,
            ..ExperimentConfig::for_task(task)
        }
    }

    #[test]
    fn record_count_matches_steps() {
        let r = run_experiment(&quick(Task::Wingrock)).unwrap();
        assert_eq!(r.records.len(), 199);
        assert_eq!(r.summary.train_steps, 199);
        let r = run_experiment(&quick(Task::Lincycle)).unwrap();
        assert_eq!((r.records.len(), r.forecast.len()), (40, 20));
        assert!(r.summary.forecast_rmse.is_some());
    }

    #[test]
    fn summary_metrics_reproducible() {
        let a = run_experiment(&quick(Task::Lincycle)).unwrap();
        let b = run_experiment(&quick(Task::Lincycle)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.summary.forecast_rmse, b.summary.forecast_rmse);
        assert_eq!(a.summary.filter_rmse, b.summary.filter_rmse);
    }

    #[test]
    fn gprcheck_matches_exact_regression() {
        let r = run_experiment(&ExperimentConfig::for_task(Task::Gprcheck)).unwrap();
        assert!(r.summary.gpr_mean_error.unwrap() < 1e-6);
        assert!(r.summary.gpr_cov_error.unwrap() < 1e-6);
    }

    #[test]
    fn filter_rmse_recomputes_from_records() {
        let r = run_experiment(&quick(Task::Wingrock)).unwrap();
        let (p, t): (Vec<f64>, Vec<f64>) = r
            .records
            .iter()
            .flat_map(|s| s.mean.iter().copied().zip(s.truth.iter().copied()))
            .unzip();
        assert_eq!(rmse(&p, &t).unwrap(), r.summary.filter_rmse);
    }

    #[test]
    fn outputs_are_written() {
        let dir = std::env::temp_dir().join(format!("rgpssm-bench-{}", std::process::id()));
        let r = run_experiment(&quick(Task::Lincycle)).unwrap();
        r.write(&dir).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
        assert_eq!(json["config"]["task"], "lincycle");
        let trace = fs::read_to_string(dir.join("trace.csv")).unwrap();
        assert_eq!(trace.lines().count(), 1 + 40 + 20);
        fs::remove_dir_all(&dir).unwrap();
    }
}
