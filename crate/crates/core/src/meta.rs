//! Bi-level training: a one-step-forward inner update, a gradient step on the
//! meta parameters through that update, then the actual model update.
//!
//! Because the objective is linear in `m = (α0, α1, β0, β1)`, write it as
//! `L(ω; m) = Σ_j m_j T_j(ω)`. The inner update is
//! `ω' = ω - η Σ_k m_k ∇T_k(ω)`, which is linear in `m`, so the meta
//! objective `g(m) = L(ω'(m); m)` has the exact derivative
//!
//! ```text
//! ∂g/∂m_j = T_j(ω') - η ⟨∇_ω L(ω'; m), ∇T_j(ω)⟩
//! ```
//!
//! [`MetaGradient::Analytic`] evaluates this directly;
//! [`MetaGradient::FiniteDifference`] differentiates `g` numerically.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{estimate_marginals, BfarlLoss, GroupLabelMarginals, MetaParams};
use crate::model::{grad, mean_loss, sgd_step, Gradient, ModelParams, SampleLoss, TrainConfig};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MetaGradient {
    Analytic,
    /// Central differences with step `rel_step * max(|m_j|, 1)`.
    FiniteDifference { rel_step: f64 },
}

/// Feasible set the meta parameters are returned to after each step.
///
/// Every component `T_j` of the meta objective has a fixed sign (the `α`
/// terms are losses, the `β` terms are negated losses), so plain descent
/// shrinks `α` to zero and grows `β` without bound. `Proper` holds `α` at its
/// starting value and keeps `|β_a| <= kappa * α_a`, which leaves every group's
/// aggregate loss coefficient positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetaProjection {
    /// `α` clamped at zero, `β` free.
    Unconstrained,
    Proper { kappa: f64 },
}

impl Default for MetaProjection {
    fn default() -> Self {
        MetaProjection::Proper { kappa: 0.9 }
    }
}

impl MetaProjection {
    /// Projects the stepped values `m` given the pre-step parameters `prev`.
    pub fn apply(self, prev: &MetaParams, mut m: [f64; 4]) -> MetaParams {
        match self {
            MetaProjection::Unconstrained => {
                m[0] = m[0].max(0.0);
                m[1] = m[1].max(0.0);
            }
            MetaProjection::Proper { kappa } => {
                m[0] = prev.alpha[0];
                m[1] = prev.alpha[1];
                m[2] = m[2].clamp(-kappa * m[0], kappa * m[0]);
                m[3] = m[3].clamp(-kappa * m[1], kappa * m[1]);
            }
        }
        MetaParams::from_array(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MetaProjection::Proper { kappa } if !(0.0..1.0).contains(&kappa) => {
                Err(Error::Config(format!("projection kappa must lie in [0, 1), got {kappa}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    /// Objective at the current weights under the incoming meta parameters.
    pub inner_loss: f64,
    /// Meta objective after the one-step-forward update.
    pub meta_loss: f64,
    /// Objective at the current weights under the updated meta parameters.
    pub actual_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaTrace {
    pub records: Vec<TraceRecord>,
}

/// Training objective bound to a dataset and its label marginals.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub data: &'a Dataset,
    pub marginals: GroupLabelMarginals,
}

impl<'a> Objective<'a> {
    /// Marginals estimated on the whole of `data`.
    pub fn new(data: &'a Dataset) -> Result<Self> {
        Ok(Objective {
            data,
            marginals: estimate_marginals(data)?,
        })
    }

    pub fn loss(&self, meta: &MetaParams) -> BfarlLoss<'a> {
        BfarlLoss::new(self.data, meta, self.marginals)
    }

    pub fn value(&self, params: &ModelParams, batch: &[usize], meta: &MetaParams) -> Result<f64> {
        mean_loss(params, self.data, batch, &self.loss(meta))
    }
}

fn finite(v: f64, step: usize, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric {
            step,
            what: format!("{what} = {v}"),
        })
    }
}

fn finite_grad(g: Gradient, step: usize, what: &str) -> Result<Gradient> {
    if g.is_finite() {
        Ok(g)
    } else {
        Err(Error::Numeric {
            step,
            what: format!("non-finite gradient of {what}"),
        })
    }
}

/// `ω - η ∇L(ω; meta)` on `batch`.
pub fn inner_step(
    params: &ModelParams,
    meta: &MetaParams,
    objective: &Objective,
    batch: &[usize],
    eta: f64,
) -> Result<ModelParams> {
    let (l, g) = grad(params, objective.data, batch, &objective.loss(meta))?;
    finite(l, 0, "inner loss")?;
    sgd_step(params, &finite_grad(g, 0, "inner loss")?, eta)
}

/// Identical mechanics to [`inner_step`] with the actual-training rate.
pub fn actual_step(
    params: &ModelParams,
    meta: &MetaParams,
    objective: &Objective,
    batch: &[usize],
    gamma: f64,
) -> Result<ModelParams> {
    inner_step(params, meta, objective, batch, gamma)
}

/// `g(meta) = L(ω'(meta); meta)`.
pub fn meta_objective(
    params: &ModelParams,
    meta: &MetaParams,
    objective: &Objective,
    batch: &[usize],
    eta: f64,
) -> Result<f64> {
    let forward = inner_step(params, meta, objective, batch, eta)?;
    objective.value(&forward, batch, meta)
}

/// Component values `T_j(ω)` and gradients `∇T_j(ω)`.
fn components(params: &ModelParams, objective: &Objective, batch: &[usize]) -> Result<([f64; 4], Vec<Gradient>)> {
    let full = objective.loss(&MetaParams::default());
    let mut values = [0.0; 4];
    let mut grads = Vec::with_capacity(4);
    for (j, v) in values.iter_mut().enumerate() {
        let (l, g) = grad(params, objective.data, batch, &full.component(j))?;
        *v = l;
        grads.push(g);
    }
    Ok((values, grads))
}

fn dot4(m: &[f64; 4], t: &[f64; 4]) -> f64 {
    m.iter().zip(t).map(|(a, b)| a * b).sum()
}

/// Analytic meta-gradient from precomputed components at `ω`. Returns the
/// gradient and the meta objective value.
fn analytic_from_components(
    params: &ModelParams,
    meta: &MetaParams,
    objective: &Objective,
    batch: &[usize],
    eta: f64,
    grads: &[Gradient],
) -> Result<([f64; 4], f64)> {
    let m = meta.to_array();
    let forward = sgd_step(params, &Gradient::combine(grads, &m), eta)?;
    let full = objective.loss(meta);
    let (g_value, g_forward) = grad(&forward, objective.data, batch, &full)?;
    let mut d = [0.0; 4];
    for (j, dj) in d.iter_mut().enumerate() {
        let t_j = mean_loss(&forward, objective.data, batch, &full.component(j))?;
        *dj = t_j - eta * g_forward.dot(&grads[j]);
    }
    Ok((d, g_value))
}

/// Derivative of [`meta_objective`] with respect to `[α0, α1, β0, β1]`,
/// together with the objective value at `meta`.
pub fn meta_gradient(
    params: &ModelParams,
    meta: &MetaParams,
    objective: &Objective,
    batch: &[usize],
    eta: f64,
    mode: MetaGradient,
) -> Result<([f64; 4], f64)> {
    match mode {
        MetaGradient::Analytic => {
            let (_, grads) = components(params, objective, batch)?;
            analytic_from_components(params, meta, objective, batch, eta, &grads)
        }
        MetaGradient::FiniteDifference { rel_step } => {
            let m = meta.to_array();
            let value = meta_objective(params, meta, objective, batch, eta)?;
            let mut d = [0.0; 4];
            for j in 0..4 {
                let h = rel_step * m[j].abs().max(1.0);
                let mut up = m;
                let mut down = m;
                up[j] += h;
                down[j] -= h;
                // Bypasses validation: the probe may dip below zero in α.
                let gu = meta_objective(params, &MetaParams::from_array(up), objective, batch, eta)?;
                let gd = meta_objective(params, &MetaParams::from_array(down), objective, batch, eta)?;
                d[j] = (gu - gd) / (2.0 * h);
            }
            Ok((d, value))
        }
    }
}

fn descend(meta: &MetaParams, d: &[f64; 4], eta_prime: f64, projection: MetaProjection) -> MetaParams {
    let mut m = meta.to_array();
    for (v, g) in m.iter_mut().zip(d) {
        *v -= eta_prime * g;
    }
    projection.apply(meta, m)
}

/// One gradient-descent step on the meta objective followed by `projection`.
#[allow(clippy::too_many_arguments)]
pub fn meta_step(
    params: &ModelParams,
    meta: &MetaParams,
    objective: &Objective,
    batch: &[usize],
    eta: f64,
    eta_prime: f64,
    mode: MetaGradient,
    projection: MetaProjection,
) -> Result<MetaParams> {
    let (d, value) = meta_gradient(params, meta, objective, batch, eta, mode)?;
    finite(value, 0, "meta loss")?;
    for v in d {
        finite(v, 0, "meta gradient")?;
    }
    Ok(descend(meta, &d, eta_prime, projection))
}

/// Mini-batches from a per-epoch shuffle; the last batch of an epoch may be
/// short.
#[derive(Debug, Clone)]
pub struct BatchSchedule {
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
    rng: Rng,
}

impl BatchSchedule {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 || batch_size == 0 {
            return Err(Error::Domain("batch schedule needs rows and a positive batch size".into()));
        }
        Ok(BatchSchedule {
            order: (0..n).collect(),
            batch_size,
            pos: n,
            rng: rng::seeded(seed),
        })
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let start = self.pos;
        self.pos = (start + self.batch_size).min(self.order.len());
        &self.order[start..self.pos]
    }
}

fn start(data: &Dataset, config: &TrainConfig) -> Result<(ModelParams, BatchSchedule)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Domain("empty training set".into()));
    }
    let params = ModelParams::init(
        data.n_features(),
        &config.hidden_sizes,
        config.activation,
        rng::derive_seed(config.seed, &[0]),
    )?;
    let schedule = BatchSchedule::new(data.len(), config.batch_size, rng::derive_seed(config.seed, &[1]))?;
    Ok((params, schedule))
}

/// Alternates inner, meta and actual updates for `config.steps` steps.
pub fn train(
    data: &Dataset,
    config: &TrainConfig,
    init_meta: &MetaParams,
) -> Result<(ModelParams, MetaParams, MetaTrace)> {
    init_meta.validate()?;
    let objective = Objective::new(data)?;
    let (mut params, mut schedule) = start(data, config)?;
    let mut meta = *init_meta;
    let mut trace = MetaTrace {
        records: Vec::with_capacity(config.steps),
    };
    for step in 0..config.steps {
        let batch = schedule.next_batch().to_vec();
        let (values, grads) = components(&params, &objective, &batch)?;
        let inner_loss = finite(dot4(&meta.to_array(), &values), step, "inner loss")?;
        let (d, meta_loss) = match config.meta_gradient {
            MetaGradient::Analytic => {
                analytic_from_components(&params, &meta, &objective, &batch, config.eta, &grads)?
            }
            mode => meta_gradient(&params, &meta, &objective, &batch, config.eta, mode)?,
        };
        finite(meta_loss, step, "meta loss")?;
        for v in d {
            finite(v, step, "meta gradient")?;
        }
        meta = descend(&meta, &d, config.eta_prime, config.meta_projection);
        let m = meta.to_array();
        let actual_loss = finite(dot4(&m, &values), step, "actual loss")?;
        let g = finite_grad(Gradient::combine(&grads, &m), step, "actual loss")?;
        params = sgd_step(&params, &g, config.gamma)?;
        trace.records.push(TraceRecord {
            step,
            alpha: meta.alpha,
            beta: meta.beta,
            inner_loss,
            meta_loss,
            actual_loss,
        });
    }
    Ok((params, meta, trace))
}

/// Plain SGD on `loss` with the same initialization and batch schedule as
/// [`train`].
pub fn fit_with_loss(data: &Dataset, config: &TrainConfig, loss: &impl SampleLoss) -> Result<ModelParams> {
    let (mut params, mut schedule) = start(data, config)?;
    for step in 0..config.steps {
        let (l, g) = grad(&params, data, schedule.next_batch(), loss)?;
        finite(l, step, "loss")?;
        params = sgd_step(&params, &finite_grad(g, step, "loss")?, config.gamma)?;
    }
    Ok(params)
}

/// SGD on the objective with meta parameters held at `meta`.
pub fn fit_fixed_meta(data: &Dataset, config: &TrainConfig, meta: &MetaParams) -> Result<ModelParams> {
    meta.validate()?;
    let objective = Objective::new(data)?;
    fit_with_loss(data, config, &objective.loss(meta))
}
