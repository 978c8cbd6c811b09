//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Roll dynamics with an unknown aerodynamic term.
    Wingrock,
    /// Planar oval limit cycle observed through a random linear map.
    Lincycle,
    /// Input/output system identification from a recorded dataset.
    Sysid,
    /// Streaming GP regression checked against the exact posterior.
    Gprcheck,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wingrock" => Ok(Task::Wingrock),
            "lincycle" => Ok(Task::Lincycle),
            "sysid" => Ok(Task::Sysid),
            "gprcheck" => Ok(Task::Gprcheck),
            other => Err(Error::Config(format!(
                "unknown task {other:?} (expected wingrock, lincycle, sysid or gprcheck)"
            ))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Wingrock => "wingrock",
            Task::Lincycle => "lincycle",
            Task::Sysid => "sysid",
            Task::Gprcheck => "gprcheck",
        })
    }
}

/// Fully resolved experiment settings. Every field has a task-dependent
/// default, so a config file only lists what it changes.
///
/// Keys match field names. Lists are comma separated; `trust_region = none`
/// disables the step bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seed: u64,
    /// Inducing-point budget M.
    pub budget: usize,
    pub novelty_tol: f64,
    pub hyperopt: bool,
    pub learning_rate: f64,
    pub trust_region: Option<f64>,
    pub jitter: f64,
    pub dt: f64,
    /// Simulated seconds (wingrock).
    pub duration: f64,
    /// Filtering steps (lincycle, gprcheck).
    pub train_steps: usize,
    /// Open-loop steps after training (lincycle).
    pub forecast_steps: usize,
    /// Initial length scales; a single value applies to every input.
    pub length_scale: Vec<f64>,
    /// Initial signal variances; a single value applies to every output.
    pub signal_variance: Vec<f64>,
    /// Diagonal of the process noise covariance.
    pub process_noise: Vec<f64>,
    /// Diagonal of the measurement noise covariance.
    pub measurement_noise: Vec<f64>,
    /// Initial state variance.
    pub x0_var: f64,
    /// Latent order (sysid).
    pub n_lat: usize,
    /// Dataset path (sysid).
    pub data: Option<String>,
    pub dataset_name: Option<String>,
    /// Zero-based input columns of the dataset.
    pub input_cols: Vec<usize>,
    pub output_col: usize,
}

impl ExperimentConfig {
    pub fn for_task(task: Task) -> Self {
        let base = Self {
            task,
            seed: 0,
            budget: 20,
            novelty_tol: 1e-4,
            hyperopt: true,
            learning_rate: 0.01,
            trust_region: Some(0.1),
            jitter: 1e-10,
            dt: 0.02,
            duration: 50.0,
            train_steps: 500,
            forecast_steps: 500,
            length_scale: vec![1.0],
            signal_variance: vec![1.0],
            process_noise: vec![1e-4],
            measurement_noise: vec![1e-2],
            x0_var: 1.0,
            n_lat: 4,
            data: None,
            dataset_name: None,
            input_cols: vec![0],
            output_col: 1,
        };
        match task {
            Task::Wingrock => Self {
                length_scale: vec![5.0],
                signal_variance: vec![10.0],
                process_noise: vec![1e-8, 1e-6],
                // (0.2°)² in rad²
                measurement_noise: vec![(0.2f64.to_radians()).powi(2)],
                x0_var: 1e-4,
                ..base
            },
            Task::Lincycle => Self {
                dt: 0.1,
                length_scale: vec![1.0],
                signal_variance: vec![0.1],
                process_noise: vec![1e-4],
                measurement_noise: vec![1e-2],
                x0_var: 0.1,
                ..base
            },
            Task::Sysid => base,
            Task::Gprcheck => Self {
                budget: 31,
                hyperopt: false,
                train_steps: 30,
                length_scale: vec![0.8, 1.1],
                signal_variance: vec![1.5],
                measurement_noise: vec![0.05],
                ..base
            },
        }
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are ignored;
    /// unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let task = match pairs.iter().rev().find(|(_, k, _)| k == "task") {
            Some((_, _, v)) => v.parse()?,
            None => Task::Wingrock,
        };
        let mut cfg = Self::for_task(task);
        for (line, k, v) in &pairs {
            cfg.set(k, v)
                .map_err(|e| Error::Config(format!("line {line}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        match key {
            "task" => self.task = value.parse().map_err(|e: Error| e.to_string())?,
            "seed" => self.seed = num(key, value)?,
            "budget" | "M" => self.budget = num(key, value)?,
            "novelty_tol" => self.novelty_tol = num(key, value)?,
            "hyperopt" => self.hyperopt = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "trust_region" => {
                self.trust_region = if value == "none" {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "jitter" => self.jitter = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "duration" => self.duration = num(key, value)?,
            "train_steps" => self.train_steps = num(key, value)?,
            "forecast_steps" => self.forecast_steps = num(key, value)?,
            "length_scale" => self.length_scale = list(key, value)?,
            "signal_variance" => self.signal_variance = list(key, value)?,
            "process_noise" => self.process_noise = list(key, value)?,
            "measurement_noise" => self.measurement_noise = list(key, value)?,
            "x0_var" => self.x0_var = num(key, value)?,
            "n_lat" => self.n_lat = num(key, value)?,
            "data" => self.data = Some(value.to_string()),
            "dataset_name" => self.dataset_name = Some(value.to_string()),
            "input_cols" => self.input_cols = list(key, value)?,
            "output_col" => self.output_col = num(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.length_scale.is_empty() || self.length_scale.iter().any(|v| !(*v > 0.0)) {
            return bad("length_scale entries must be positive");
        }
        if self.signal_variance.is_empty() || self.signal_variance.iter().any(|v| !(*v > 0.0)) {
            return bad("signal_variance entries must be positive");
        }
        if self
            .process_noise
            .iter()
            .chain(&self.measurement_noise)
            .any(|v| !(*v >= 0.0))
        {
            return bad("noise variances must be non-negative");
        }
        if self.task == Task::Sysid && self.data.is_none() {
            return bad("sysid needs a data path");
        }
        Ok(())
    }

    /// The config as `key = value` text that [`ExperimentConfig::parse`]
    /// reads back unchanged.
    pub fn to_text(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
        }
        let mut s = String::new();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        put("task", self.task.to_string());
        put("seed", self.seed.to_string());
        put("budget", self.budget.to_string());
        put("novelty_tol", self.novelty_tol.to_string());
        put("hyperopt", self.hyperopt.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put(
            "trust_region",
            self.trust_region.map_or("none".into(), |v| v.to_string()),
        );
        put("jitter", self.jitter.to_string());
        put("dt", self.dt.to_string());
        put("duration", self.duration.to_string());
        put("train_steps", self.train_steps.to_string());
        put("forecast_steps", self.forecast_steps.to_string());
        put("length_scale", join(&self.length_scale));
        put("signal_variance", join(&self.signal_variance));
        put("process_noise", join(&self.process_noise));
        put("measurement_noise", join(&self.measurement_noise));
        put("x0_var", self.x0_var.to_string());
        put("n_lat", self.n_lat.to_string());
        if let Some(d) = &self.data {
            put("data", d.clone());
        }
        if let Some(d) = &self.dataset_name {
            put("dataset_name", d.clone());
        }
        put("input_cols", join(&self.input_cols));
        put("output_col", self.output_col.to_string());
        s
    }
}

/// Expands a one-element list to `n` copies; otherwise the length must match.
pub(crate) fn broadcast(what: &'static str, v: &[f64], n: usize) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        len if len == n => Ok(v.to_vec()),
        len => Err(Error::Config(format!(
            "{what}: expected 1 or {n} values, got {len}"
        ))),
    }
}
