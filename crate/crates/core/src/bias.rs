//! Group-conditional label flips, positive-class under-sampling, and the
//! conversion between flip rates and combined (flip plus selection) rates.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group, Label};
use crate::error::{Error, Result};
use crate::rng;

/// Tolerance for rates that land a rounding error outside `[0, 1]`.
const RATE_SLACK: f64 = 1e-12;

/// Flip rates `θ_a^±`, where `θ_a^+ = P(Y=+1 | Z=-1, A=a)` and
/// `θ_a^- = P(Y=-1 | Z=+1, A=a)`, plus the selection factor `σ` and the
/// baseline positive proportion `r` of the group targeted by selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSpec {
    pub theta_0_plus: f64,
    pub theta_0_minus: f64,
    pub theta_1_plus: f64,
    pub theta_1_minus: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "half")]
    pub r: f64,
    #[serde(default)]
    pub selection_group: Group,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl Default for BiasSpec {
    fn default() -> Self {
        BiasSpec::none()
    }
}

impl BiasSpec {
    pub fn none() -> BiasSpec {
        BiasSpec::from_thetas([0.0; 4])
    }

    /// Rates in the order `(θ_0^+, θ_0^-, θ_1^+, θ_1^-)`, no selection bias.
    pub fn from_thetas(t: [f64; 4]) -> BiasSpec {
        BiasSpec {
            theta_0_plus: t[0],
            theta_0_minus: t[1],
            theta_1_plus: t[2],
            theta_1_minus: t[3],
            sigma: 1.0,
            r: 0.5,
            selection_group: Group::Zero,
        }
    }

    /// Splits an average flip rate `b` over the four rates so that group 0
    /// is pushed towards positives and group 1 towards negatives:
    /// `θ_0^+ = θ_1^- = 4b/3`, `θ_0^- = θ_1^+ = 2b/3`.
    pub fn average_label_bias(b: f64) -> BiasSpec {
        let hi = 2.0 * b * 2.0 / 3.0;
        let lo = 2.0 * b / 3.0;
        BiasSpec::from_thetas([hi, lo, lo, hi])
    }

    pub fn thetas(&self) -> [f64; 4] {
        [self.theta_0_plus, self.theta_0_minus, self.theta_1_plus, self.theta_1_minus]
    }

    /// `(θ_a^+, θ_a^-)`.
    pub fn group_rates(&self, a: Group) -> (f64, f64) {
        match a {
            Group::Zero => (self.theta_0_plus, self.theta_0_minus),
            Group::One => (self.theta_1_plus, self.theta_1_minus),
        }
    }

    /// Probability that a row with clean label `z` in group `a` is flipped.
    pub fn flip_rate(&self, a: Group, z: Label) -> f64 {
        let (plus, minus) = self.group_rates(a);
        match z {
            Label::Neg => plus,
            Label::Pos => minus,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("theta_0_plus", self.theta_0_plus),
            ("theta_0_minus", self.theta_0_minus),
            ("theta_1_plus", self.theta_1_plus),
            ("theta_1_minus", self.theta_1_minus),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Domain(format!("{name} = {t} outside [0,1]")));
            }
        }
        for a in Group::ALL {
            let (p, m) = self.group_rates(a);
            if p + m >= 1.0 {
                return Err(Error::Domain(format!("group {a}: flip rates sum to {} >= 1", p + m)));
            }
        }
        if !(self.sigma >= 1.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma = {} must be >= 1", self.sigma)));
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::Domain(format!("r = {} outside (0,1)", self.r)));
        }
        Ok(())
    }
}

/// `1 / (1 - θ_a^+ - θ_a^-)`.
pub fn delta_factor(spec: &BiasSpec, a: Group) -> Result<f64> {
    let (p, m) = spec.group_rates(a);
    let denom = 1.0 - p - m;
    if !(denom > 0.0) {
        return Err(Error::Domain(format!("group {a}: flip rates sum to {} >= 1", p + m)));
    }
    Ok(1.0 / denom)
}

fn check_selection(sigma: f64, r: f64) -> Result<()> {
    if !(sigma >= 1.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("sigma = {sigma} must be >= 1")));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("r = {r} outside (0,1)")));
    }
    Ok(())
}

fn unit_rate(v: f64, what: &str) -> Result<f64> {
    if (-RATE_SLACK..=1.0 + RATE_SLACK).contains(&v) {
        Ok(v.clamp(0.0, 1.0))
    } else {
        Err(Error::Domain(format!("{what} = {v} outside [0,1]")))
    }
}

/// Flip rate that, combined with selection factor `sigma` on a group whose
/// positive proportion is `r`, produces the combined rate `epsilon`.
pub fn theta_from_epsilon(epsilon: f64, sigma: f64, r: f64) -> Result<f64> {
    check_selection(sigma, r)?;
    unit_rate(epsilon, "epsilon")?;
    if sigma == 1.0 {
        return Ok(epsilon);
    }
    unit_rate(((sigma - r) / (1.0 - r)) * epsilon + (1.0 - sigma) / (1.0 - r), "theta")
}

/// Inverse of [`theta_from_epsilon`].
pub fn epsilon_from_theta(theta: f64, sigma: f64, r: f64) -> Result<f64> {
    check_selection(sigma, r)?;
    unit_rate(theta, "theta")?;
    if sigma == 1.0 {
        return Ok(theta);
    }
    unit_rate((theta * (1.0 - r) - (1.0 - sigma)) / (sigma - r), "epsilon")
}

/// Replaces observed labels by flipping each clean label `z_i` with
/// probability `θ_{a_i}^{sgn(-z_i)}`. Rows are visited in order and each
/// consumes exactly one uniform draw.
pub fn inject_label_bias(data: &Dataset, spec: &BiasSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let z = data
        .z()
        .ok_or_else(|| Error::Domain("label bias needs clean labels".into()))?
        .to_vec();
    let mut rng = rng::seeded(seed);
    let y: Vec<Label> = z
        .iter()
        .zip(data.a())
        .map(|(&zi, &ai)| {
            let u: f64 = rng.random();
            if u < spec.flip_rate(ai, zi) {
                zi.flipped()
            } else {
                zi
            }
        })
        .collect();
    let mut out = data.clone().with_labels(y)?;
    out.provenance.seeds.push(("label_bias".into(), seed));
    out.provenance.notes.push(format!("label bias thetas {:?}", spec.thetas()));
    Ok(out)
}

/// Smallest `k` such that removing `k` of `pos` positives from a group of
/// `pos + neg` rows brings the positive proportion to at most `r / sigma`,
/// with `r = pos / (pos + neg)`.
pub fn selection_removal_count(pos: usize, neg: usize, sigma: f64) -> Result<usize> {
    if !(sigma >= 1.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("sigma = {sigma} must be >= 1")));
    }
    if pos == 0 {
        return Ok(0);
    }
    let (p, n) = (pos as f64, neg as f64);
    // (p-k)/(p-k+n) <= p/((p+n) sigma)  <=>  sigma (p-k)(p+n) <= p (p-k+n)
    let ok = |k: usize| {
        let kept = (pos - k) as f64;
        sigma * kept * (p + n) <= p * (kept + n)
    };
    let (mut lo, mut hi) = (0usize, pos);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// Under-samples positive-labeled rows of `group` so the group's positive
/// proportion drops from `r` to the largest value not above `r / sigma`.
/// Removed rows are chosen uniformly; surviving rows keep their order.
/// Returns the biased dataset and the number of rows removed.
pub fn inject_selection_bias(
    data: &Dataset,
    sigma: f64,
    group: Group,
    seed: u64,
) -> Result<(Dataset, usize)> {
    let positives: Vec<usize> = (0..data.len())
        .filter(|&i| data.a()[i] == group && data.y()[i].is_pos())
        .collect();
    let negatives = (0..data.len())
        .filter(|&i| data.a()[i] == group && !data.y()[i].is_pos())
        .count();
    let k = selection_removal_count(positives.len(), negatives, sigma)?;
    let mut drop = vec![false; data.len()];
    let mut rng = rng::seeded(seed);
    for j in sample(&mut rng, positives.len(), k) {
        drop[positives[j]] = true;
    }
    let keep: Vec<usize> = (0..data.len()).filter(|&i| !drop[i]).collect();
    let mut out = data.subset(&keep);
    out.provenance.seeds.push(("selection_bias".into(), seed));
    out.provenance.notes.push(format!(
        "selection bias sigma {sigma} on group {group}: removed {k} of {} positives",
        positives.len()
    ));
    Ok((out, k))
}

/// Selection bias on `spec.selection_group` followed by label flips.
pub fn inject_bias(data: &Dataset, spec: &BiasSpec, seed: u64) -> Result<(Dataset, usize)> {
    spec.validate()?;
    let (selected, removed) = inject_selection_bias(data, spec.sigma, spec.selection_group, rng::derive_seed(seed, &[0]))?;
    Ok((inject_label_bias(&selected, spec, rng::derive_seed(seed, &[1]))?, removed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(a: Vec<Group>, z: Vec<Label>) -> Dataset {
        let n = a.len();
        let features = (0..n).map(|i| i as f64).collect();
        Dataset::new(1, features, z.clone(), a, Some(z)).unwrap()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_factor(&BiasSpec::none(), Group::Zero).unwrap(), 1.0);
        let s = BiasSpec::from_thetas([0.25, 0.05, 0.0, 0.0]);
        assert!((delta_factor(&s, Group::Zero).unwrap() - 1.0 / 0.7).abs() < 1e-12);
        let s = BiasSpec::from_thetas([0.0, 0.0, 0.6, 0.4]);
        assert!(delta_factor(&s, Group::One).is_err());
    }

    #[test]
    fn conversion_examples() {
        for eps in [0.0, 0.3, 0.77] {
            assert_eq!(theta_from_epsilon(eps, 1.0, 0.4).unwrap(), eps);
            assert_eq!(epsilon_from_theta(eps, 1.0, 0.4).unwrap(), eps);
        }
        assert_eq!(theta_from_epsilon(1.0, 1.07, 0.2).unwrap(), 1.0);
        assert_eq!(epsilon_from_theta(1.0, 1.07, 0.2).unwrap(), 1.0);
        let t = theta_from_epsilon(0.25, 1.1, 0.3).unwrap();
        assert!((t - (0.8 / 0.7 * 0.25 - 0.1 / 0.7)).abs() < 1e-15);
        assert!((t - 0.142857).abs() < 1e-6);
        assert!((epsilon_from_theta(t, 1.1, 0.3).unwrap() - 0.25).abs() < 1e-12);
        assert!(theta_from_epsilon(0.0, 1.1, 0.3).is_err());
        assert!(theta_from_epsilon(0.5, 0.9, 0.3).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(BiasSpec::average_label_bias(0.3).validate().is_ok());
        assert!(BiasSpec::from_thetas([0.6, 0.4, 0.0, 0.0]).validate().is_err());
        assert!(BiasSpec::from_thetas([-0.1, 0.0, 0.0, 0.0]).validate().is_err());
        let s = BiasSpec { sigma: 0.99, ..BiasSpec::none() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn average_label_bias_layout() {
        let t = BiasSpec::average_label_bias(0.3).thetas();
        let expect = [0.4, 0.2, 0.2, 0.4];
        for (a, b) in t.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((t.iter().sum::<f64>() / 4.0 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_rates_keep_labels() {
        let d = dataset(vec![Group::Zero, Group::One, Group::One], vec![Label::Pos, Label::Neg, Label::Pos]);
        let b = inject_label_bias(&d, &BiasSpec::none(), 9).unwrap();
        assert_eq!(b.y(), d.z().unwrap());
    }

    #[test]
    fn flip_rate_matches_binomial() {
        let n = 10_000;
        let d = dataset(vec![Group::One; n], vec![Label::Pos; n]);
        let spec = BiasSpec::from_thetas([0.0, 0.0, 0.0, 0.25]);
        let b = inject_label_bias(&d, &spec, 3).unwrap();
        let flipped = b.y().iter().filter(|y| !y.is_pos()).count() as f64 / n as f64;
        assert!((flipped - 0.25).abs() <= 3.0 * (0.25f64 * 0.75 / n as f64).sqrt());
        assert_eq!(b.features(), d.features());
        assert_eq!(b.a(), d.a());
    }

    #[test]
    fn other_group_rates_do_not_touch_group_zero() {
        let n = 2000;
        let a: Vec<Group> = (0..n).map(|i| if i % 2 == 0 { Group::Zero } else { Group::One }).collect();
        let d = dataset(a, vec![Label::Pos; n]);
        let low = inject_label_bias(&d, &BiasSpec::from_thetas([0.1, 0.1, 0.0, 0.0]), 11).unwrap();
        let high = inject_label_bias(&d, &BiasSpec::from_thetas([0.1, 0.1, 0.3, 0.6]), 11).unwrap();
        for i in (0..n).step_by(2) {
            assert_eq!(low.y()[i], high.y()[i]);
        }
    }

    #[test]
    fn removal_count_example() {
        assert_eq!(selection_removal_count(500, 500, 1.1).unwrap(), 84);
        assert_eq!(selection_removal_count(500, 500, 1.0).unwrap(), 0);
        assert_eq!(selection_removal_count(0, 10, 1.5).unwrap(), 0);
        assert!(selection_removal_count(5, 5, 0.5).is_err());
    }

    #[test]
    fn selection_only_removes_targeted_positives() {
        let mut a = vec![Group::Zero; 1000];
        a.extend(vec![Group::One; 200]);
        let z: Vec<Label> = (0..1200).map(|i| if i % 2 == 0 { Label::Pos } else { Label::Neg }).collect();
        let d = dataset(a, z);
        let (b, k) = inject_selection_bias(&d, 1.1, Group::Zero, 4).unwrap();
        assert_eq!(k, 84);
        assert_eq!(b.len(), 1200 - 84);
        assert_eq!(b.group_count(Group::One), 200);
        let neg = |d: &Dataset| d.y().iter().filter(|y| !y.is_pos()).count();
        assert_eq!(neg(&b), neg(&d));
        let (same, k) = inject_selection_bias(&d, 1.0, Group::Zero, 4).unwrap();
        assert_eq!(k, 0);
        assert_eq!(same.features(), d.features());
    }
}
