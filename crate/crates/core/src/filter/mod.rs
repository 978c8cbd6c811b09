//! The recursive filter: novelty-gated prediction, budget maintenance,
//! measurement correction and online hyperparameter updates.

mod ops;
mod posterior;

pub use ops::{
    argmin_score, correct, discard, linearize, predict_add, predict_noadd, score_all, DiscardScore,
    Innovation, LinearizationPoint,
};
pub use posterior::{gp_posterior, novelty, GpPosterior};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::belief::AugmentedBelief;
use crate::error::Result;
use crate::hypopt::{optimize_step, AdamConfig, AdamState};
use crate::models::ModelSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Maximum number of inducing points.
    pub budget: usize,
    /// Novelty above which the predicted function value becomes an inducing
    /// point.
    pub novelty_tol: f64,
    pub hyperopt: bool,
    pub adam: AdamConfig,
    /// Per-step bound on each log-hyperparameter change.
    pub trust_region: Option<f64>,
    /// Diagonal jitter for covariance re-factorizations and singular process
    /// noise.
    pub jitter: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            budget: 20,
            novelty_tol: 1e-4,
            hyperopt: false,
            adam: AdamConfig::default(),
            trust_region: Some(0.1),
            jitter: 1e-10,
        }
    }
}

/// What happened in one filter step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub gamma0: f64,
    pub added: bool,
    /// Indices of discarded blocks, each relative to the set at its removal.
    pub discarded: Vec<usize>,
    pub n_u: usize,
    pub innovation: Option<Innovation>,
    pub loss: Option<f64>,
    pub hyperparameters: Vec<f64>,
}

/// One full recursion. `adam` is only touched when hyperparameter learning is
/// enabled and at least two inducing points exist.
pub fn step<M: ModelSpec + ?Sized>(
    b: &AugmentedBelief,
    control: &[f64],
    y: Option<&DVector<f64>>,
    model: &M,
    config: &FilterConfig,
    adam: &mut AdamState,
) -> Result<(AugmentedBelief, StepReport)> {
    let q = model.process_noise();
    let lin = linearize(b, control, model)?;
    let added = lin.gamma0 > config.novelty_tol;
    let mut b = if added {
        predict_add(b, &lin, &q, config.jitter)?
    } else {
        predict_noadd(b, &lin, &q, config.jitter)?
    };

    let mut discarded = Vec::new();
    while b.n_u() > config.budget {
        let scores = score_all(&b)?;
        let d = argmin_score(&scores).expect("non-empty inducing set");
        b = discard(&b, d)?;
        discarded.push(d);
    }

    let mut innovation = None;
    if let Some(y) = y {
        let (nb, info) = correct(&b, y, model, config.jitter)?;
        b = nb;
        innovation = Some(info);
    }

    let mut loss = None;
    if config.hyperopt && b.n_u() >= 2 {
        let hs = optimize_step(&b, adam, config.trust_region, config.jitter)?;
        b = hs.belief;
        loss = Some(hs.loss.total);
    }

    let report = StepReport {
        step: 0,
        gamma0: lin.gamma0,
        added,
        discarded,
        n_u: b.n_u(),
        innovation,
        loss,
        hyperparameters: b.hyperparameters().to_vec(),
    };
    Ok((b, report))
}

/// Open-loop prediction of the state for `steps` steps. Controls past the end
/// of `controls` are taken as empty.
pub fn forecast<M: ModelSpec + ?Sized>(
    b: &AugmentedBelief,
    controls: &[Vec<f64>],
    steps: usize,
    model: &M,
    jitter: f64,
) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
    let q = model.process_noise();
    let mut cur = b.clone();
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let c = controls.get(k).map_or(&[][..], |c| c.as_slice());
        let lin = linearize(&cur, c, model)?;
        cur = predict_noadd(&cur, &lin, &q, jitter)?;
        out.push((cur.state_mean(), cur.state_cov()));
    }
    Ok(out)
}

/// A filter run: model, belief, configuration and optimizer state.
#[derive(Clone, Debug)]
pub struct Filter<M> {
    model: M,
    belief: AugmentedBelief,
    config: FilterConfig,
    adam: AdamState,
    steps: usize,
}

impl<M: ModelSpec> Filter<M> {
    pub fn new(model: M, belief: AugmentedBelief, config: FilterConfig) -> Self {
        let adam = AdamState::new(belief.hyperparameters().len(), config.adam);
        Self {
            model,
            belief,
            config,
            adam,
            steps: 0,
        }
    }

    pub fn step(&mut self, control: &[f64], y: Option<&DVector<f64>>) -> Result<StepReport> {
        let k = self.steps;
        let (b, mut report) = step(
            &self.belief,
            control,
            y,
            &self.model,
            &self.config,
            &mut self.adam,
        )
        .map_err(|e| e.at_step(k))?;
        self.belief = b;
        self.steps += 1;
        report.step = k;
        Ok(report)
    }

    pub fn forecast(
        &self,
        controls: &[Vec<f64>],
        steps: usize,
    ) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
        forecast(
            &self.belief,
            controls,
            steps,
            &self.model,
            self.config.jitter,
        )
    }

    pub fn belief(&self) -> &AugmentedBelief {
        &self.belief
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}
