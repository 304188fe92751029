//! Peer loss, the group-conditional expectation regularizers and the
//! assembled bias-tolerant objective.
//!
//! The objective over a batch of `n` rows is
//!
//! ```text
//! (1/n) [ α0 Σ_{a_i=0} ℓ(p_i, y_i) + α1 Σ_{a_i=1} ℓ(p_i, y_i)
//!       - β0 Σ_{a_i=0} E0(p_i)      - β1 Σ_{a_i=1} E1(p_i) ]
//! ```
//!
//! with `E_a(p) = m_a ℓ(p, +1) + (1 - m_a) ℓ(p, -1)` and `m_a` the observed
//! positive rate of group `a` on the training set. It is linear in the four
//! meta scalars, which [`BfarlLoss::component`] exposes one at a time.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group, Label};
use crate::error::{Error, Result};
use crate::model::{bce, bce_logit, mean_loss, ModelParams, SampleLoss};

/// Group weights `α` and regularizer intensities `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaParams {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
}

impl Default for MetaParams {
    /// `α = (1, 1)`, `β = (0, 0)`: plain cross-entropy.
    fn default() -> Self {
        MetaParams {
            alpha: [1.0, 1.0],
            beta: [0.0, 0.0],
        }
    }
}

impl MetaParams {
    pub fn new(alpha: [f64; 2], beta: [f64; 2]) -> Result<MetaParams> {
        let m = MetaParams { alpha, beta };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite meta parameters {self:?}")));
        }
        if self.alpha.iter().any(|&a| a < 0.0) {
            return Err(Error::Domain(format!("negative group weight {:?}", self.alpha)));
        }
        Ok(())
    }

    /// `[α0, α1, β0, β1]`.
    pub fn to_array(&self) -> [f64; 4] {
        [self.alpha[0], self.alpha[1], self.beta[0], self.beta[1]]
    }

    pub fn from_array(m: [f64; 4]) -> MetaParams {
        MetaParams {
            alpha: [m[0], m[1]],
            beta: [m[2], m[3]],
        }
    }

    pub fn beta_norm(&self) -> f64 {
        self.beta[0].hypot(self.beta[1])
    }
}

/// Observed `P(Y = +1 | A = a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupLabelMarginals {
    pub p_pos_given_a0: f64,
    pub p_pos_given_a1: f64,
}

impl GroupLabelMarginals {
    pub fn new(p0: f64, p1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p0) || !(0.0..=1.0).contains(&p1) {
            return Err(Error::Domain(format!("marginals ({p0}, {p1}) outside [0,1]")));
        }
        Ok(GroupLabelMarginals {
            p_pos_given_a0: p0,
            p_pos_given_a1: p1,
        })
    }

    pub fn get(&self, a: Group) -> f64 {
        match a {
            Group::Zero => self.p_pos_given_a0,
            Group::One => self.p_pos_given_a1,
        }
    }
}

pub fn estimate_marginals(data: &Dataset) -> Result<GroupLabelMarginals> {
    let mut pos = [0usize; 2];
    let mut total = [0usize; 2];
    for (y, a) in data.y().iter().zip(data.a()) {
        total[a.index()] += 1;
        pos[a.index()] += y.is_pos() as usize;
    }
    for g in Group::ALL {
        if total[g.index()] == 0 {
            return Err(Error::EmptyGroup {
                group: g.index() as u8,
                what: "label marginal",
            });
        }
    }
    GroupLabelMarginals::new(
        pos[0] as f64 / total[0] as f64,
        pos[1] as f64 / total[1] as f64,
    )
}

/// Observed `P(Y = +1)` over all rows.
pub fn pooled_marginal(data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Domain("empty dataset".into()));
    }
    Ok(data.y().iter().filter(|y| y.is_pos()).count() as f64 / data.len() as f64)
}

/// `m_a ℓ(p, +1) + (1 - m_a) ℓ(p, -1)`.
pub fn expected_group_loss(p: f64, marginals: &GroupLabelMarginals, a: Group) -> Result<f64> {
    expected_loss(p, marginals.get(a))
}

fn expected_loss(p: f64, m: f64) -> Result<f64> {
    Ok(m * bce(p, Label::Pos)? + (1.0 - m) * bce(p, Label::Neg)?)
}

/// `sample_loss - alpha_balance * peer_term`.
pub fn peer_loss(sample_loss: f64, peer_term: f64, alpha_balance: f64) -> f64 {
    sample_loss - alpha_balance * peer_term
}

/// Expectation form of the peer term over a batch: the loss of a uniformly
/// drawn prediction against an independently drawn label.
pub fn expected_peer_term(probs: &[f64], labels: &[Label]) -> Result<f64> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions, {} labels", probs.len(), labels.len())));
    }
    let q = labels.iter().filter(|y| y.is_pos()).count() as f64 / labels.len() as f64;
    let mut total = 0.0;
    for &p in probs {
        total += expected_loss(p, q)?;
    }
    Ok(total / probs.len() as f64)
}

/// The objective evaluated on fixed predictions `probs`.
pub fn bfarl_value(
    probs: &[f64],
    labels: &[Label],
    groups: &[Group],
    meta: &MetaParams,
    marginals: &GroupLabelMarginals,
) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    if probs.len() != labels.len() || probs.len() != groups.len() {
        return Err(Error::Shape("predictions, labels and groups differ in length".into()));
    }
    let mut total = 0.0;
    for ((&p, &y), &a) in probs.iter().zip(labels).zip(groups) {
        let g = a.index();
        total += meta.alpha[g] * bce(p, y)? - meta.beta[g] * expected_group_loss(p, marginals, a)?;
    }
    Ok(total / probs.len() as f64)
}

/// Per-sample form of the objective with arbitrary coefficients on its four
/// linear components `[α0, α1, β0, β1]`.
#[derive(Debug, Clone, Copy)]
pub struct BfarlLoss<'a> {
    labels: &'a [Label],
    groups: &'a [Group],
    marginals: GroupLabelMarginals,
    coeffs: [f64; 4],
}

impl<'a> BfarlLoss<'a> {
    pub fn new(data: &'a Dataset, meta: &MetaParams, marginals: GroupLabelMarginals) -> Self {
        BfarlLoss {
            labels: data.y(),
            groups: data.a(),
            marginals,
            coeffs: meta.to_array(),
        }
    }

    /// The `j`-th component alone (`j` indexes `[α0, α1, β0, β1]`).
    pub fn component(&self, j: usize) -> Self {
        let mut coeffs = [0.0; 4];
        coeffs[j] = 1.0;
        BfarlLoss { coeffs, ..*self }
    }

    /// Weights on `ℓ(s, +1)` and `ℓ(s, -1)` for row `row`.
    fn weights(&self, row: usize) -> (f64, f64) {
        let g = self.groups[row].index();
        let (alpha, beta) = (self.coeffs[g], self.coeffs[2 + g]);
        let m = self.marginals.get(self.groups[row]);
        let (on_pos, on_neg) = if self.labels[row].is_pos() { (alpha, 0.0) } else { (0.0, alpha) };
        (on_pos - beta * m, on_neg - beta * (1.0 - m))
    }
}

impl SampleLoss for BfarlLoss<'_> {
    fn eval(&self, row: usize, logit: f64) -> (f64, f64) {
        let (wp, wn) = self.weights(row);
        let (lp, dp) = bce_logit(logit, Label::Pos);
        let (ln, dn) = bce_logit(logit, Label::Neg);
        (wp * lp + wn * ln, wp * dp + wn * dn)
    }
}

/// Peer loss in expectation form with a single pooled label marginal.
#[derive(Debug, Clone, Copy)]
pub struct PeerLoss<'a> {
    labels: &'a [Label],
    marginal: f64,
    alpha_balance: f64,
}

impl<'a> PeerLoss<'a> {
    pub fn new(data: &'a Dataset, marginal: f64, alpha_balance: f64) -> Self {
        PeerLoss {
            labels: data.y(),
            marginal,
            alpha_balance,
        }
    }
}

impl SampleLoss for PeerLoss<'_> {
    fn eval(&self, row: usize, logit: f64) -> (f64, f64) {
        let (l, d) = bce_logit(logit, self.labels[row]);
        let (lp, dp) = bce_logit(logit, Label::Pos);
        let (ln, dn) = bce_logit(logit, Label::Neg);
        let m = self.marginal;
        (
            peer_loss(l, m * lp + (1.0 - m) * ln, self.alpha_balance),
            peer_loss(d, m * dp + (1.0 - m) * dn, self.alpha_balance),
        )
    }
}

/// The objective on `rows` of `data` under `params`.
pub fn bfarl(
    params: &ModelParams,
    data: &Dataset,
    rows: &[usize],
    meta: &MetaParams,
    marginals: GroupLabelMarginals,
) -> Result<f64> {
    mean_loss(params, data, rows, &BfarlLoss::new(data, meta, marginals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{grad, Activation, Bce};

    const LN: [f64; 2] = [0.223143551314209_8, 1.6094379124341003];

    fn toy(labels: Vec<Label>, groups: Vec<Group>) -> Dataset {
        let n = labels.len();
        let features = (0..n).flat_map(|i| [i as f64 * 0.3 - 0.5, 1.0 - i as f64 * 0.2]).collect();
        Dataset::new(2, features, labels, groups, None).unwrap()
    }

    #[test]
    fn marginal_examples() {
        use Group::*;
        use Label::*;
        let d = toy(
            vec![Pos, Pos, Neg, Neg, Pos, Neg, Neg, Neg],
            vec![Zero, Zero, Zero, Zero, One, One, One, One],
        );
        let m = estimate_marginals(&d).unwrap();
        assert_eq!(m.p_pos_given_a0, 0.5);
        assert_eq!(m.p_pos_given_a1, 0.25);
        let d = toy(vec![Pos; 3], vec![Zero, One, One]);
        let m = estimate_marginals(&d).unwrap();
        assert_eq!((m.p_pos_given_a0, m.p_pos_given_a1), (1.0, 1.0));
        let d = toy(vec![Pos; 2], vec![Zero, Zero]);
        assert!(matches!(estimate_marginals(&d), Err(Error::EmptyGroup { group: 1, .. })));
    }

    #[test]
    fn expected_group_loss_examples() {
        let m = GroupLabelMarginals::new(0.5, 1.0).unwrap();
        let v = expected_group_loss(0.8, &m, Group::Zero).unwrap();
        assert!((v - 0.916291).abs() < 1e-6);
        assert!((v - 0.5 * (LN[0] + LN[1])).abs() < 1e-12);
        assert_eq!(expected_group_loss(0.37, &m, Group::One).unwrap(), bce(0.37, Label::Pos).unwrap());
        let m = GroupLabelMarginals::new(0.0, 0.0).unwrap();
        assert_eq!(expected_group_loss(0.37, &m, Group::One).unwrap(), bce(0.37, Label::Neg).unwrap());
    }

    #[test]
    fn peer_loss_examples() {
        assert_eq!(peer_loss(0.4, 9.0, 0.0), 0.4);
        assert!((peer_loss(0.223144, 0.916291, 1.0) - (0.223144 - 0.916291)).abs() < 1e-12);
    }

    #[test]
    fn peer_term_matches_pair_enumeration() {
        use Label::*;
        let probs = [0.1, 0.45, 0.8, 0.6, 0.33];
        let labels = [Pos, Neg, Neg, Pos, Neg];
        let mut brute = 0.0;
        for &p in &probs {
            for &y in &labels {
                brute += bce(p, y).unwrap();
            }
        }
        brute /= 25.0;
        assert!((expected_peer_term(&probs, &labels).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn bfarl_toy_batch() {
        use Group::*;
        use Label::*;
        let probs = [0.8, 0.6, 0.3, 0.9];
        let groups = [Zero, Zero, One, One];
        let labels = [Pos, Neg, Neg, Pos];
        let meta = MetaParams::new([1.0, 1.0], [0.5, 0.5]).unwrap();
        let m = GroupLabelMarginals::new(0.5, 0.5).unwrap();
        let l = |p: f64, pos: bool| if pos { -p.ln() } else { -(1.0 - p).ln() };
        let e = |p: f64| 0.5 * l(p, true) + 0.5 * l(p, false);
        let expect = (l(0.8, true) + l(0.6, false) + l(0.3, false) + l(0.9, true)
            - 0.5 * (e(0.8) + e(0.6))
            - 0.5 * (e(0.3) + e(0.9)))
            / 4.0;
        let got = bfarl_value(&probs, &labels, &groups, &meta, &m).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn unregularized_objective_is_mean_bce() {
        use Group::*;
        use Label::*;
        let d = toy(vec![Pos, Neg, Neg, Pos, Pos], vec![Zero, One, Zero, One, One]);
        let p = ModelParams::init(2, &[4], Activation::Relu, 3).unwrap();
        let m = estimate_marginals(&d).unwrap();
        let rows = [0, 1, 2, 3, 4];
        let (l1, g1) = grad(&p, &d, &rows, &BfarlLoss::new(&d, &MetaParams::default(), m)).unwrap();
        let (l2, g2) = grad(&p, &d, &rows, &Bce { labels: d.y() }).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
    }

    #[test]
    fn absent_group_contributes_nothing() {
        use Group::*;
        use Label::*;
        let d = toy(vec![Pos, Neg, Neg], vec![Zero, Zero, One]);
        let p = ModelParams::init(2, &[], Activation::Relu, 1).unwrap();
        let m = estimate_marginals(&d).unwrap();
        let a = MetaParams::new([0.7, 1.0], [0.2, 0.0]).unwrap();
        let b = MetaParams::new([0.7, 5.0], [0.2, -3.0]).unwrap();
        let rows = [0, 1];
        assert_eq!(bfarl(&p, &d, &rows, &a, m).unwrap(), bfarl(&p, &d, &rows, &b, m).unwrap());
        assert!(bfarl(&p, &d, &[], &a, m).is_err());
    }

    #[test]
    fn components_sum_to_objective() {
        use Group::*;
        use Label::*;
        let d = toy(vec![Pos, Neg, Neg, Pos, Pos, Neg], vec![Zero, One, Zero, One, One, Zero]);
        let p = ModelParams::init(2, &[3], Activation::Sigmoid, 4).unwrap();
        let m = estimate_marginals(&d).unwrap();
        let meta = MetaParams::new([0.8, 1.3], [0.4, -0.2]).unwrap();
        let full = BfarlLoss::new(&d, &meta, m);
        let rows = [0, 1, 2, 3, 4, 5];
        let total = mean_loss(&p, &d, &rows, &full).unwrap();
        let parts: f64 = (0..4)
            .map(|j| meta.to_array()[j] * mean_loss(&p, &d, &rows, &full.component(j)).unwrap())
            .sum();
        assert!((total - parts).abs() < 1e-12);
    }

    #[test]
    fn model_objective_matches_probability_form() {
        use Group::*;
        use Label::*;
        let d = toy(vec![Pos, Neg, Neg, Pos], vec![Zero, One, Zero, One]);
        let p = ModelParams::init(2, &[3], Activation::Relu, 9).unwrap();
        let m = estimate_marginals(&d).unwrap();
        let meta = MetaParams::new([0.5, 2.0], [0.3, 0.6]).unwrap();
        let probs = p.probabilities(&d).unwrap();
        let a = bfarl(&p, &d, &[0, 1, 2, 3], &meta, m).unwrap();
        let b = bfarl_value(&probs, d.y(), d.a(), &meta, &m).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn peer_loss_objective_is_bfarl_with_pooled_marginal() {
        use Group::*;
        use Label::*;
        let d = toy(vec![Pos, Neg, Neg, Pos, Neg], vec![Zero, One, Zero, One, One]);
        let p = ModelParams::init(2, &[3], Activation::Relu, 2).unwrap();
        let q = pooled_marginal(&d).unwrap();
        let meta = MetaParams::new([1.0, 1.0], [0.4, 0.4]).unwrap();
        let rows = [0, 1, 2, 3, 4];
        let (a, ga) = grad(&p, &d, &rows, &PeerLoss::new(&d, q, 0.4)).unwrap();
        let pooled = GroupLabelMarginals::new(q, q).unwrap();
        let (b, gb) = grad(&p, &d, &rows, &BfarlLoss::new(&d, &meta, pooled)).unwrap();
        assert!((a - b).abs() < 1e-12);
        for (x, y) in ga.to_flat().iter().zip(gb.to_flat()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn meta_validation() {
        assert!(MetaParams::new([-0.1, 1.0], [0.0, 0.0]).is_err());
        assert!(MetaParams::new([1.0, 1.0], [f64::NAN, 0.0]).is_err());
        assert!(MetaParams::new([1.0, 1.0], [-2.0, 3.0]).is_ok());
        assert_eq!(MetaParams::new([0.0, 0.0], [3.0, 4.0]).unwrap().beta_norm(), 5.0);
    }
}
