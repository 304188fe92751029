//! Numerical self-checks run by `bfarl check-oracles`.

use bfarl_core::bias::{epsilon_from_theta, theta_from_epsilon};
use bfarl_core::data::{Dataset, Group, Label};
use bfarl_core::losses::{estimate_marginals, MetaParams};
use bfarl_core::meta::{meta_gradient, MetaGradient, Objective};
use bfarl_core::model::{grad, mean_loss, Activation, Bce, ModelParams};
use bfarl_core::oracle::{sample_case, verify_decomposition, LossKind};
use bfarl_core::rng::{derive_seed, seeded};
use rand::Rng as _;
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: &'static str,
    pub cases: usize,
    /// Largest observed discrepancy, in the check's own units.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn check(name: &'static str, cases: usize, worst: f64, tolerance: f64) -> OracleCheck {
    OracleCheck {
        name,
        cases,
        worst,
        tolerance,
        passed: worst <= tolerance,
    }
}

/// Loss decomposition on `worlds` random finite worlds per loss kind.
pub fn decomposition(worlds: usize, seed: u64) -> Result<OracleCheck> {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for loss in [LossKind::Bce, LossKind::ZeroOne] {
        for _ in 0..worlds {
            let c = sample_case(&mut rng, 6, loss)?;
            let (_, res) = verify_decomposition(&c.world, &c.meta, c.rho_a, c.rho_b, 1e-8)?;
            worst = worst.max(res);
        }
    }
    Ok(check("decomposition", 2 * worlds, worst, 1e-8))
}

/// Round trip of the flip-rate / combined-rate conversion over a grid.
pub fn conversion() -> Result<OracleCheck> {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for e in 0..=10 {
        let eps = e as f64 / 10.0;
        for sigma in [1.0, 1.05, 1.1] {
            for ri in 1..=9 {
                let r = ri as f64 / 10.0;
                if let Ok(theta) = theta_from_epsilon(eps, sigma, r) {
                    worst = worst.max((epsilon_from_theta(theta, sigma, r)? - eps).abs());
                    cases += 1;
                }
            }
        }
    }
    Ok(check("rate conversion", cases, worst, 1e-12))
}

fn random_batch(rng: &mut impl rand::Rng, n: usize, d: usize) -> Result<Dataset> {
    loop {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y = (0..n).map(|_| if rng.random_bool(0.5) { Label::Pos } else { Label::Neg }).collect();
        let a: Vec<Group> = (0..n).map(|_| if rng.random_bool(0.5) { Group::One } else { Group::Zero }).collect();
        if a.contains(&Group::Zero) && a.contains(&Group::One) {
            return Ok(Dataset::from_rows(&rows, y, a, None)?);
        }
    }
}

/// Backpropagated gradient against central differences of the loss.
pub fn gradients(nets: usize, seed: u64) -> Result<OracleCheck> {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for t in 0..nets {
        let d = rng.random_range(1..6);
        let hidden: Vec<usize> = (0..rng.random_range(0..3)).map(|_| rng.random_range(1..6)).collect();
        let act = if t % 2 == 0 { Activation::Sigmoid } else { Activation::Relu };
        // Random biases keep ReLU units off their kink.
        let shape = ModelParams::init(d, &hidden, act, derive_seed(seed, &[t as u64]))?;
        let values: Vec<f64> = (0..shape.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = shape.with_flat(&values)?;
        let data = random_batch(&mut rng, 8, d)?;
        let rows: Vec<usize> = (0..8).collect();
        let loss = Bce { labels: data.y() };
        let (_, g) = grad(&params, &data, &rows, &loss)?;
        let flat = params.to_flat();
        for (j, gj) in g.to_flat().into_iter().enumerate() {
            let h = 1e-6;
            let mut up = flat.clone();
            let mut down = flat.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (mean_loss(&params.with_flat(&up)?, &data, &rows, &loss)?
                - mean_loss(&params.with_flat(&down)?, &data, &rows, &loss)?)
                / (2.0 * h);
            worst = worst.max((gj - fd).abs() / gj.abs().max(fd.abs()).max(1e-3));
        }
    }
    Ok(check("backpropagation", nets, worst, 1e-5))
}

/// Analytic meta-gradient against finite differences at two step sizes.
pub fn meta_gradients(instances: usize, seed: u64) -> Result<OracleCheck> {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for t in 0..instances {
        let data = random_batch(&mut rng, 12, 3)?;
        let params = ModelParams::init(3, &[4], Activation::Sigmoid, derive_seed(seed, &[t as u64]))?;
        let objective = Objective {
            data: &data,
            marginals: estimate_marginals(&data)?,
        };
        let meta = MetaParams::new(
            [rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)],
            [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)],
        )?;
        let rows: Vec<usize> = (0..12).collect();
        let (analytic, _) = meta_gradient(&params, &meta, &objective, &rows, 0.3, MetaGradient::Analytic)?;
        for rel_step in [1e-4, 1e-5] {
            let mode = MetaGradient::FiniteDifference { rel_step };
            let (fd, _) = meta_gradient(&params, &meta, &objective, &rows, 0.3, mode)?;
            for (a, f) in analytic.iter().zip(fd) {
                worst = worst.max((a - f).abs() / a.abs().max(f.abs()).max(1e-3));
            }
        }
    }
    Ok(check("meta-gradient", instances, worst, 1e-2))
}

pub fn run_all(seed: u64) -> Result<Vec<OracleCheck>> {
    Ok(vec![
        decomposition(100, derive_seed(seed, &[0]))?,
        conversion()?,
        gradients(20, derive_seed(seed, &[1]))?,
        meta_gradients(10, derive_seed(seed, &[2]))?,
    ])
}
