//! Dense feed-forward binary classifier with hand-written backpropagation.
//!
//! The network maps a feature row to a single logit; `P(Y=+1|x)` is the
//! sigmoid of that logit after clamping it to `[-LOGIT_CLAMP, LOGIT_CLAMP]`.
//! Losses are expressed per sample as functions of the logit (see
//! [`SampleLoss`]) so that the same backward pass serves plain cross-entropy
//! and every weighted or regularized variant built on top of it.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::meta::{MetaGradient, MetaProjection};
use crate::rng;

/// Logits are clamped to this magnitude before the sigmoid and the log.
pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `h`.
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => h * (1.0 - h),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            _ => Err(Error::Config(format!("unknown activation {s:?}"))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Cross-entropy of a probability against a `{-1,+1}` label.
pub fn bce(p: f64, y: Label) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability {p} outside (0,1)")));
    }
    Ok(match y {
        Label::Pos => -p.ln(),
        Label::Neg => -(1.0 - p).ln(),
    })
}

/// Cross-entropy as a function of the logit, with its derivative.
///
/// The logit is clamped first, so the derivative is zero outside the clamp.
pub fn bce_logit(logit: f64, y: Label) -> (f64, f64) {
    let s = logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    let inside = logit.abs() < LOGIT_CLAMP;
    let p = sigmoid(s);
    match y {
        Label::Pos => (softplus(-s), if inside { p - 1.0 } else { 0.0 }),
        Label::Neg => (softplus(s), if inside { p } else { 0.0 }),
    }
}

/// Per-sample loss as a function of the network's output logit.
pub trait SampleLoss {
    /// Loss for dataset row `row` at `logit`, and `d loss / d logit`.
    fn eval(&self, row: usize, logit: f64) -> (f64, f64);
}

/// Plain cross-entropy against the dataset's observed labels.
pub struct Bce<'a> {
    pub labels: &'a [Label],
}

impl SampleLoss for Bce<'_> {
    fn eval(&self, row: usize, logit: f64) -> (f64, f64) {
        bce_logit(logit, self.labels[row])
    }
}

/// One affine layer, weights row-major with shape `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Shape("layer dimensions must be positive".into()));
        }
        if weights.len() != in_dim * out_dim || biases.len() != out_dim {
            return Err(Error::Shape(format!(
                "layer {in_dim}->{out_dim} got {} weights and {} biases",
                weights.len(),
                biases.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite layer parameter".into()));
        }
        Ok(Dense {
            in_dim,
            out_dim,
            weights,
            biases,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.in_dim).zip(&self.biases))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Weights and biases of the classifier. The last layer has one output (the
/// logit); every earlier layer is followed by its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<Dense>,
    activations: Vec<Activation>,
}

impl ModelParams {
    pub fn new(layers: Vec<Dense>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        if activations.len() + 1 != layers.len() {
            return Err(Error::Shape(format!(
                "{} activations for {} layers",
                activations.len(),
                layers.len()
            )));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape(format!(
                    "layer output {} feeds input {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        if layers.last().map(|l| l.out_dim) != Some(1) {
            return Err(Error::Shape("output layer must have a single unit".into()));
        }
        Ok(ModelParams { layers, activations })
    }

    /// Glorot-uniform weights (`s = sqrt(6 / (fan_in + fan_out))`), zero biases.
    pub fn init(input_dim: usize, hidden: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        let dims: Vec<usize> = std::iter::once(input_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            if fan_in == 0 || fan_out == 0 {
                return Err(Error::Shape("layer dimensions must be positive".into()));
            }
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out).map(|_| rng.random_range(-s..=s)).collect();
            layers.push(Dense::new(fan_in, fan_out, weights, vec![0.0; fan_out])?);
        }
        ModelParams::new(layers, vec![activation; hidden.len()])
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Raw (unclamped) output logit.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            next.resize(layer.out_dim, 0.0);
            layer.affine(&cur, &mut next);
            if let Some(act) = self.activations.get(k) {
                next.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur[0])
    }

    /// `P(Y = +1 | x)`, strictly inside (0,1).
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)))
    }

    /// `+1` iff the probability is at least one half.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(if self.forward(x)? >= 0.5 {
            Label::Pos
        } else {
            Label::Neg
        })
    }

    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<Label>> {
        (0..data.len()).map(|i| self.predict(data.row(i))).collect()
    }

    pub fn probabilities(&self, data: &Dataset) -> Result<Vec<f64>> {
        (0..data.len()).map(|i| self.forward(data.row(i))).collect()
    }

    /// Parameters flattened layer by layer (weights then biases).
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    /// Same architecture with parameters taken from `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> Result<ModelParams> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.num_params())));
        }
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        for l in &mut out.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
        Ok(out)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input of width {} for a network expecting {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

/// Gradient with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros_like(params: &ModelParams) -> Gradient {
        Gradient {
            weights: params.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: params.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn dot(&self, other: &Gradient) -> f64 {
        self.values().zip(other.values()).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        self.values_mut().zip(other.values()).for_each(|(a, b)| *a += scale * b);
    }

    /// `sum_k coeffs[k] * parts[k]`.
    pub fn combine(parts: &[Gradient], coeffs: &[f64]) -> Gradient {
        let mut out = Gradient {
            weights: parts[0].weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: parts[0].biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        };
        for (p, &c) in parts.iter().zip(coeffs) {
            out.add_scaled(p, c);
        }
        out
    }

    fn matches(&self, params: &ModelParams) -> bool {
        self.weights.len() == params.layers.len()
            && params
                .layers
                .iter()
                .zip(self.weights.iter().zip(&self.biases))
                .all(|(l, (w, b))| w.len() == l.weights.len() && b.len() == l.biases.len())
    }
}

/// Mean of `loss` over `rows` of `data`.
pub fn mean_loss(params: &ModelParams, data: &Dataset, rows: &[usize], loss: &impl SampleLoss) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let mut total = 0.0;
    for &i in rows {
        total += loss.eval(i, params.logit(data.row(i))?).0;
    }
    Ok(total / rows.len() as f64)
}

/// Mean loss over `rows` and its analytic gradient by backpropagation.
pub fn grad(
    params: &ModelParams,
    data: &Dataset,
    rows: &[usize],
    loss: &impl SampleLoss,
) -> Result<(f64, Gradient)> {
    if rows.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    if data.n_features() != params.input_dim() {
        return Err(Error::Shape(format!(
            "data has {} features, network expects {}",
            data.n_features(),
            params.input_dim()
        )));
    }
    let n_layers = params.layers.len();
    let mut g = Gradient::zeros_like(params);
    // acts[0] is the input; acts[k+1] the output of layer k (post-activation
    // for hidden layers, logit for the last one). pre[k] the pre-activation.
    let mut acts: Vec<Vec<f64>> = std::iter::once(params.input_dim())
        .chain(params.layers.iter().map(|l| l.out_dim))
        .map(|d| vec![0.0; d])
        .collect();
    let mut pre: Vec<Vec<f64>> = params.layers.iter().map(|l| vec![0.0; l.out_dim]).collect();
    let widest = params.layers.iter().map(|l| l.in_dim.max(l.out_dim)).max().unwrap_or(1);
    let mut delta = vec![0.0; widest];
    let mut back = vec![0.0; widest];

    let mut total = 0.0;
    for &i in rows {
        acts[0].copy_from_slice(data.row(i));
        for k in 0..n_layers {
            let (head, tail) = acts.split_at_mut(k + 1);
            params.layers[k].affine(&head[k], &mut pre[k]);
            match params.activations.get(k) {
                Some(act) => {
                    for (h, z) in tail[0].iter_mut().zip(&pre[k]) {
                        *h = act.apply(*z);
                    }
                }
                None => tail[0].copy_from_slice(&pre[k]),
            }
        }
        let (l, dl) = loss.eval(i, acts[n_layers][0]);
        total += l;

        delta[0] = dl;
        for k in (0..n_layers).rev() {
            let layer = &params.layers[k];
            let input = &acts[k];
            let gw = &mut g.weights[k];
            let gb = &mut g.biases[k];
            for o in 0..layer.out_dim {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (gwv, x) in gw[o * layer.in_dim..(o + 1) * layer.in_dim].iter_mut().zip(input) {
                    *gwv += d * x;
                }
            }
            if k == 0 {
                break;
            }
            back[..layer.in_dim].iter_mut().for_each(|v| *v = 0.0);
            for o in 0..layer.out_dim {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (b, w) in back[..layer.in_dim]
                    .iter_mut()
                    .zip(&layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim])
                {
                    *b += d * w;
                }
            }
            let act = params.activations[k - 1];
            for j in 0..layer.in_dim {
                delta[j] = back[j] * act.derivative(pre[k - 1][j], acts[k][j]);
            }
        }
    }
    let inv = 1.0 / rows.len() as f64;
    g.values_mut().for_each(|v| *v *= inv);
    Ok((total * inv, g))
}

/// `params - lr * grad`, leaving `params` untouched.
pub fn sgd_step(params: &ModelParams, grad: &Gradient, lr: f64) -> Result<ModelParams> {
    if !grad.matches(params) {
        return Err(Error::Shape("gradient does not match parameter layout".into()));
    }
    let mut out = params.clone();
    for (l, (gw, gb)) in out.layers.iter_mut().zip(grad.weights.iter().zip(&grad.biases)) {
        l.weights.iter_mut().zip(gw).for_each(|(w, g)| *w -= lr * g);
        l.biases.iter_mut().zip(gb).for_each(|(b, g)| *b -= lr * g);
    }
    Ok(out)
}

/// Learning rates, batching and architecture for a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Inner (one-step-forward) learning rate.
    pub eta: f64,
    /// Meta-parameter learning rate.
    pub eta_prime: f64,
    /// Actual-training learning rate.
    pub gamma: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub meta_gradient: MetaGradient,
    pub meta_projection: MetaProjection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 0.1,
            eta_prime: 1e-3,
            gamma: 0.1,
            batch_size: 64,
            steps: 1000,
            hidden_sizes: vec![32],
            activation: Activation::Relu,
            seed: 0,
            meta_gradient: MetaGradient::Analytic,
            meta_projection: MetaProjection::default(),
        }
    }
}

impl TrainConfig {
    /// Zero learning rates are allowed (they freeze the corresponding stage).
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta", self.eta), ("eta_prime", self.eta_prime), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.steps < 1 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        if let MetaGradient::FiniteDifference { rel_step } = self.meta_gradient {
            if !(rel_step > 0.0 && rel_step.is_finite()) {
                return Err(Error::Config("finite-difference step must be positive".into()));
            }
        }
        self.meta_projection.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Group;

    fn single(w: Vec<f64>, b: f64) -> ModelParams {
        let d = w.len();
        ModelParams::new(vec![Dense::new(d, 1, w, vec![b]).unwrap()], vec![]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn forward_examples() {
        let zero = ModelParams::init(3, &[4], Activation::Relu, 1)
            .unwrap()
            .with_flat(&[0.0; 3 * 4 + 4 + 4 + 1])
            .unwrap();
        assert_eq!(zero.forward(&[1.0, -2.0, 3.0]).unwrap(), 0.5);
        assert_eq!(single(vec![1.0, 1.0], 0.0).forward(&[0.0, 0.0]).unwrap(), 0.5);
        let p = single(vec![2.0], -1.0).forward(&[1.0]).unwrap();
        assert!(close(p, 0.731059, 1e-6));
        assert!(matches!(single(vec![1.0], 0.0).forward(&[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn bce_examples() {
        assert!(close(bce(0.5, Label::Pos).unwrap(), std::f64::consts::LN_2, 1e-12));
        assert!(close(bce(0.8, Label::Pos).unwrap(), 0.223144, 1e-6));
        assert!(close(bce(0.8, Label::Neg).unwrap(), 1.609438, 1e-6));
        assert!(bce(0.0, Label::Pos).is_err());
        assert!(bce(1.0, Label::Neg).is_err());
        assert!(bce(f64::NAN, Label::Neg).is_err());
    }

    #[test]
    fn clamped_logits_keep_loss_finite() {
        let (l, d) = bce_logit(-1e6, Label::Pos);
        assert!(close(l, 30.0, 1e-9));
        assert_eq!(d, 0.0);
        let p = single(vec![1.0], 0.0).forward(&[1e9]).unwrap();
        assert!(p < 1.0 && bce(p, Label::Neg).unwrap().is_finite());
    }

    #[test]
    fn prediction_ties_go_positive() {
        assert_eq!(single(vec![0.0], 0.0).predict(&[5.0]).unwrap(), Label::Pos);
        assert_eq!(single(vec![1.0], 0.0).predict(&[-1e-9]).unwrap(), Label::Neg);
    }

    #[test]
    fn architecture_validation() {
        let l1 = Dense::new(2, 3, vec![0.0; 6], vec![0.0; 3]).unwrap();
        let l2 = Dense::new(4, 1, vec![0.0; 4], vec![0.0]).unwrap();
        assert!(ModelParams::new(vec![l1.clone(), l2], vec![Activation::Relu]).is_err());
        let l3 = Dense::new(3, 1, vec![0.0; 3], vec![0.0]).unwrap();
        assert!(ModelParams::new(vec![l1.clone(), l3.clone()], vec![]).is_err());
        assert!(ModelParams::new(vec![l1, l3], vec![Activation::Sigmoid]).is_ok());
        assert!(Dense::new(1, 1, vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ModelParams::init(5, &[8], Activation::Relu, 42).unwrap();
        let b = ModelParams::init(5, &[8], Activation::Relu, 42).unwrap();
        let c = ModelParams::init(5, &[8], Activation::Relu, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let s = (6.0f64 / 13.0).sqrt();
        assert!(a.layers()[0].weights().iter().all(|w| w.abs() <= s));
        assert!(a.layers()[0].biases().iter().all(|&b| b == 0.0));
    }

    /// Squared error on the logit against a target; stationary when the
    /// logit equals the target.
    struct Quadratic(f64);
    impl SampleLoss for Quadratic {
        fn eval(&self, _row: usize, logit: f64) -> (f64, f64) {
            (0.5 * (logit - self.0).powi(2), logit - self.0)
        }
    }

    fn toy_data() -> Dataset {
        let rows = vec![vec![0.5, -1.0], vec![1.5, 0.25], vec![-0.3, 0.8]];
        Dataset::from_rows(
            &rows,
            vec![Label::Pos, Label::Neg, Label::Pos],
            vec![Group::Zero, Group::One, Group::Zero],
            None,
        )
        .unwrap()
    }

    #[test]
    fn gradient_vanishes_at_stationary_point() {
        let data = toy_data();
        let p = single(vec![0.0, 0.0], 0.7);
        let (_, g) = grad(&p, &data, &[0, 1, 2], &Quadratic(0.7)).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let data = toy_data();
        let p = ModelParams::init(2, &[3], Activation::Sigmoid, 5).unwrap();
        let loss = Bce { labels: data.y() };
        let (l1, g1) = grad(&p, &data, &[0, 1, 2], &loss).unwrap();
        let (l2, g2) = grad(&p, &data, &[0, 0, 1, 1, 2, 2], &loss).unwrap();
        assert!(close(l1, l2, 1e-15));
        for (a, b) in g1.to_flat().iter().zip(g2.to_flat()) {
            assert!(close(*a, b, 1e-15));
        }
    }

    #[test]
    fn grad_matches_mean_loss() {
        let data = toy_data();
        let p = ModelParams::init(2, &[3], Activation::Relu, 5).unwrap();
        let loss = Bce { labels: data.y() };
        let (l, _) = grad(&p, &data, &[0, 2], &loss).unwrap();
        assert!(close(l, mean_loss(&p, &data, &[0, 2], &loss).unwrap(), 1e-15));
        assert!(grad(&p, &data, &[], &loss).is_err());
    }

    #[test]
    fn sgd_step_examples() {
        let p = single(vec![1.0], 0.0);
        let data = Dataset::from_rows(&[vec![1.0]], vec![Label::Pos], vec![Group::Zero], None).unwrap();
        let mut g = Gradient::zeros_like(&p);
        g.weights[0][0] = 2.0;
        let q = sgd_step(&p, &g, 0.1).unwrap();
        assert!(close(q.layers()[0].weights()[0], 0.8, 1e-15));
        assert_eq!(p.layers()[0].weights()[0], 1.0);
        assert_eq!(sgd_step(&p, &g, 0.0).unwrap(), p);

        let (_, g) = grad(&p, &data, &[0], &Bce { labels: data.y() }).unwrap();
        let twice = sgd_step(&sgd_step(&p, &g, 0.05).unwrap(), &g, 0.05).unwrap();
        let once = sgd_step(&p, &g, 0.1).unwrap();
        for (a, b) in twice.to_flat().iter().zip(once.to_flat()) {
            assert!(close(*a, b, 1e-15));
        }
        let other = ModelParams::init(2, &[2], Activation::Relu, 0).unwrap();
        assert!(sgd_step(&other, &g, 0.1).is_err());
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { batch_size: 1, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { gamma: -1.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { steps: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}
