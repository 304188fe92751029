//! Exact enumeration over finite worlds, used to check that the expected
//! bias-tolerant objective on biased data splits into a clean-data loss, a
//! group-fairness penalty and a bias term.
//!
//! A world is a finite joint distribution over `(x, z, a)` with flip rates
//! `θ` and a fixed classifier table `f(x)`. Writing `P̃(k|a)` for the biased
//! label marginal of group `a`, `R_a = Σ_k P̃(k|a) E_{x|a} ℓ(f(x), k)` and
//! `X_a = P(a) R_a`:
//!
//! ```text
//! LHS = Σ P(x,z,a) P(y|z,a) [ δ_a ℓ(f(x), y) - β_a Σ_k P̃(k|a) ℓ(f(x), k) ]
//! RHS = E ℓ(f(X), Z) + λ |X_0 - X_1|
//!     + Σ_a P(a) Σ_l P(l|a) Σ_k E_{x|l,a} (U_lk - γ_a P̃(k|a)) ℓ(f(x), k)
//! ```
//!
//! with `γ_0 = ρ_a`, `γ_1 = ρ_b` and `ρ_a - β_0 = β_1 - ρ_b = u`, where `u`
//! carries the sign of `X_0 - X_1` and `λ = |u|`.

use serde::{Deserialize, Serialize};

use crate::bias::{delta_factor, theta_from_epsilon, BiasSpec};
use crate::data::{Group, Label};
use crate::error::{Error, Result};
use crate::losses::MetaParams;
use crate::model::bce;

/// Consistency tolerance on the `ρ`/`β` relation.
const RHO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    ZeroOne,
}

impl LossKind {
    pub fn eval(self, p: f64, k: Label) -> Result<f64> {
        match self {
            LossKind::Bce => bce(p, k),
            LossKind::ZeroOne => {
                let pred = if p >= 0.5 { Label::Pos } else { Label::Neg };
                Ok(if pred == k { 0.0 } else { 1.0 })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    /// Index into the classifier table.
    pub x: usize,
    pub z: Label,
    pub a: Group,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteWorld {
    pub points: Vec<WorldPoint>,
    pub theta: BiasSpec,
    /// `f(x) = P(Y=+1|x)` for each feature point.
    pub f: Vec<f64>,
    pub loss: LossKind,
}

fn li(l: Label) -> usize {
    l.is_pos() as usize
}

const LABELS: [Label; 2] = [Label::Neg, Label::Pos];

/// `U[a][l][k]` for clean label `l` and biased label `k` (index 1 = `+1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UMatrix(pub [[[f64; 2]; 2]; 2]);

impl UMatrix {
    /// `δ_a θ_a^{sgn(k)}` off the diagonal, `δ_a θ_a^{sgn(l)}` on it.
    pub fn from_world(world: &DiscreteWorld) -> Result<UMatrix> {
        let mut u = [[[0.0; 2]; 2]; 2];
        for a in Group::ALL {
            let delta = delta_factor(&world.theta, a)?;
            let (plus, minus) = world.theta.group_rates(a);
            let rate = |s: Label| if s.is_pos() { plus } else { minus };
            for l in LABELS {
                for k in LABELS {
                    u[a.index()][li(l)][li(k)] = if l != k { delta * rate(k) } else { delta * rate(l) };
                }
            }
        }
        Ok(UMatrix(u))
    }

    pub fn get(&self, a: Group, l: Label, k: Label) -> f64 {
        self.0[a.index()][li(l)][li(k)]
    }

    pub fn shifted(&self, eps: f64) -> UMatrix {
        let mut u = self.0;
        u.iter_mut().flatten().flatten().for_each(|v| *v += eps);
        UMatrix(u)
    }
}

/// The three right-hand pieces and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decomposition {
    pub clean: f64,
    pub fairness: f64,
    pub bias: f64,
    pub lambda: f64,
    pub total: f64,
}

/// Biased label marginals `P̃(k|a)` of a validated world, indexed `[a][k]`.
struct Stats {
    noisy: [[f64; 2]; 2],
}

impl DiscreteWorld {
    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        if self.points.is_empty() {
            return Err(Error::Domain("world has no points".into()));
        }
        let mut total = 0.0;
        for pt in &self.points {
            if !(pt.prob >= 0.0 && pt.prob.is_finite()) {
                return Err(Error::Domain(format!("point probability {}", pt.prob)));
            }
            if pt.x >= self.f.len() {
                return Err(Error::Shape(format!("feature point {} has no classifier entry", pt.x)));
            }
            total += pt.prob;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("probabilities sum to {total}")));
        }
        if self.loss == LossKind::Bce && self.f.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Domain("classifier probabilities must lie in (0,1)".into()));
        }
        Ok(())
    }

    fn stats(&self) -> Result<Stats> {
        self.validate()?;
        let mut p_a = [0.0; 2];
        let mut p_la = [[0.0; 2]; 2];
        for pt in &self.points {
            p_a[pt.a.index()] += pt.prob;
            p_la[pt.a.index()][li(pt.z)] += pt.prob;
        }
        for g in Group::ALL {
            if p_a[g.index()] <= 0.0 {
                return Err(Error::EmptyGroup {
                    group: g.index() as u8,
                    what: "probability mass in world",
                });
            }
        }
        let mut noisy = [[0.0; 2]; 2];
        for a in Group::ALL {
            let ai = a.index();
            for l in LABELS {
                p_la[ai][li(l)] /= p_a[ai];
            }
            for k in LABELS {
                noisy[ai][li(k)] = LABELS
                    .iter()
                    .map(|&l| p_la[ai][li(l)] * self.flip_prob(a, l, k))
                    .sum();
            }
        }
        Ok(Stats { noisy })
    }

    /// `P(Y=k | Z=l, A=a)`.
    fn flip_prob(&self, a: Group, l: Label, k: Label) -> f64 {
        let r = self.theta.flip_rate(a, l);
        if k == l {
            1.0 - r
        } else {
            r
        }
    }

    fn loss_at(&self, x: usize, k: Label) -> Result<f64> {
        self.loss.eval(self.f[x], k)
    }

    /// `X_a = P(a) Σ_k P̃(k|a) E_{x|a} ℓ(f(x), k)`.
    fn group_risks(&self, s: &Stats) -> Result<[f64; 2]> {
        let mut x = [0.0; 2];
        for pt in &self.points {
            let ai = pt.a.index();
            for k in LABELS {
                x[ai] += pt.prob * s.noisy[ai][li(k)] * self.loss_at(pt.x, k)?;
            }
        }
        Ok(x)
    }

    /// `(X_0, X_1)`.
    pub fn fairness_risks(&self) -> Result<[f64; 2]> {
        let s = self.stats()?;
        self.group_risks(&s)
    }

    /// `E ℓ(f(X), Z)` on the clean distribution.
    pub fn clean_loss(&self) -> Result<f64> {
        self.validate()?;
        let mut total = 0.0;
        for pt in &self.points {
            total += pt.prob * self.loss_at(pt.x, pt.z)?;
        }
        Ok(total)
    }
}

/// Expected objective over the biased distribution by full enumeration.
pub fn lhs_expected_bfarl(world: &DiscreteWorld, meta: &MetaParams) -> Result<f64> {
    let s = world.stats()?;
    let mut total = 0.0;
    for pt in &world.points {
        let a = pt.a;
        let ai = a.index();
        let delta = delta_factor(&world.theta, a)?;
        let reg: f64 = LABELS
            .iter()
            .map(|&k| Ok(s.noisy[ai][li(k)] * world.loss_at(pt.x, k)?))
            .sum::<Result<f64>>()?;
        for y in LABELS {
            let py = world.flip_prob(a, pt.z, y);
            total += pt.prob * py * (delta * world.loss_at(pt.x, y)? - meta.beta[ai] * reg);
        }
    }
    Ok(total)
}

/// Checks `ρ_a - β_0 = β_1 - ρ_b` and that the common value has the sign of
/// `X_0 - X_1`; returns `λ`.
fn lambda_for(meta: &MetaParams, rho_a: f64, rho_b: f64, risks: [f64; 2]) -> Result<f64> {
    let u = rho_a - meta.beta[0];
    let v = meta.beta[1] - rho_b;
    if (u - v).abs() > RHO_TOL * (1.0 + u.abs().max(v.abs())) {
        return Err(Error::Domain(format!(
            "inconsistent rho: rho_a - beta_0 = {u} but beta_1 - rho_b = {v}"
        )));
    }
    let diff = risks[0] - risks[1];
    if u != 0.0 && diff != 0.0 && u.signum() != diff.signum() {
        return Err(Error::Domain(format!(
            "rho offset {u} disagrees in sign with the group risk difference {diff}"
        )));
    }
    Ok(u.abs())
}

/// Right-hand side with an explicit `U`.
pub fn rhs_with_u(
    world: &DiscreteWorld,
    meta: &MetaParams,
    rho_a: f64,
    rho_b: f64,
    u: &UMatrix,
) -> Result<Decomposition> {
    let s = world.stats()?;
    let risks = world.group_risks(&s)?;
    let lambda = lambda_for(meta, rho_a, rho_b, risks)?;
    let gamma = [rho_a, rho_b];
    let clean = world.clean_loss()?;
    let fairness = lambda * (risks[0] - risks[1]).abs();
    // P(a) P(l|a) E_{x|l,a}[.] collapses to a sum over points weighted by prob.
    let mut bias = 0.0;
    for pt in &world.points {
        let ai = pt.a.index();
        for k in LABELS {
            let w = u.get(pt.a, pt.z, k) - gamma[ai] * s.noisy[ai][li(k)];
            bias += pt.prob * w * world.loss_at(pt.x, k)?;
        }
    }
    Ok(Decomposition {
        clean,
        fairness,
        bias,
        lambda,
        total: clean + fairness + bias,
    })
}

pub fn rhs_decomposition(world: &DiscreteWorld, meta: &MetaParams, rho_a: f64, rho_b: f64) -> Result<Decomposition> {
    rhs_with_u(world, meta, rho_a, rho_b, &UMatrix::from_world(world)?)
}

/// `(|LHS - RHS| <= tol, |LHS - RHS|)`.
pub fn verify_decomposition(
    world: &DiscreteWorld,
    meta: &MetaParams,
    rho_a: f64,
    rho_b: f64,
    tol: f64,
) -> Result<(bool, f64)> {
    let lhs = lhs_expected_bfarl(world, meta)?;
    let rhs = rhs_decomposition(world, meta, rho_a, rho_b)?.total;
    let residual = (lhs - rhs).abs();
    Ok((residual <= tol, residual))
}

/// `(ρ_a, ρ_b)` for penalty weight `lambda >= 0`, aligned with the world's
/// group risk difference.
pub fn consistent_rho(world: &DiscreteWorld, meta: &MetaParams, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda = {lambda} must be >= 0")));
    }
    let r = world.fairness_risks()?;
    let sign = if r[0] >= r[1] { 1.0 } else { -1.0 };
    let u = sign * lambda;
    Ok((meta.beta[0] + u, meta.beta[1] - u))
}

/// A random world with `Z` independent of `A`, up to `max_points` feature
/// points, plus meta parameters and a consistent `(ρ_a, ρ_b)`.
#[derive(Debug, Clone)]
pub struct SampledCase {
    pub world: DiscreteWorld,
    pub meta: MetaParams,
    pub rho_a: f64,
    pub rho_b: f64,
}

pub fn sample_case(rng: &mut impl rand::Rng, max_points: usize, loss: LossKind) -> Result<SampledCase> {
    let m = rng.random_range(1..=max_points.max(1));
    let p_a1: f64 = rng.random_range(0.1..0.9);
    let p_pos: f64 = rng.random_range(0.1..0.9);
    let mut points = Vec::new();
    for a in Group::ALL {
        let pa = if a == Group::One { p_a1 } else { 1.0 - p_a1 };
        for z in LABELS {
            let pz = if z.is_pos() { p_pos } else { 1.0 - p_pos };
            let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
            let sum: f64 = weights.iter().sum();
            for (x, w) in weights.iter().enumerate() {
                points.push(WorldPoint {
                    x,
                    z,
                    a,
                    prob: pa * pz * w / sum,
                });
            }
        }
    }
    let total: f64 = points.iter().map(|p| p.prob).sum();
    points.iter_mut().for_each(|p| p.prob /= total);

    let mut rates = [0.0; 4];
    for a in 0..2 {
        loop {
            let plus: f64 = rng.random_range(0.0..0.45);
            let minus: f64 = rng.random_range(0.0..0.45);
            // Half the worlds fold a selection factor into the downward rate.
            let minus = if rng.random_bool(0.5) {
                match theta_from_epsilon(minus, rng.random_range(1.0..1.1), p_pos) {
                    Ok(t) => t,
                    Err(_) => continue,
                }
            } else {
                minus
            };
            if plus + minus < 0.95 {
                rates[2 * a] = plus;
                rates[2 * a + 1] = minus;
                break;
            }
        }
    }
    let f = (0..m).map(|_| rng.random_range(0.02..0.98)).collect();
    let world = DiscreteWorld {
        points,
        theta: BiasSpec::from_thetas(rates),
        f,
        loss,
    };
    let meta = MetaParams::new(
        [1.0, 1.0],
        [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
    )?;
    let lambda = rng.random_range(0.0..1.0);
    let (rho_a, rho_b) = consistent_rho(&world, &meta, lambda)?;
    Ok(SampledCase {
        world,
        meta,
        rho_a,
        rho_b,
    })
}
