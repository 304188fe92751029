//! Synthetic tabular data with a linear clean labeling rule and
//! group-and-class dependent label flips.

use rand::Rng as _;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group, Label};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    /// Feature dimension; the last feature is a constant-1 intercept.
    pub k: usize,
    /// `P(A = 1)`.
    pub a_rate: f64,
    /// Feature `j` is active with probability `(1/(j+1))^rarity`.
    pub rarity: f64,
    /// Flip probability for rows whose clean label matches their group.
    pub flip_amount: f64,
    /// Variance of each coordinate of the generating weight vector.
    pub w_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 2000,
            k: 15,
            a_rate: 0.1,
            rarity: 0.5,
            flip_amount: 0.0,
            w_sigma: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            return Err(Error::Config("n and k must be at least 1".into()));
        }
        for (name, v) in [("a_rate", self.a_rate), ("flip_amount", self.flip_amount)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0,1]")));
            }
        }
        if !(self.rarity >= 0.0 && self.rarity.is_finite()) {
            return Err(Error::Config(format!("rarity = {} must be >= 0", self.rarity)));
        }
        if !(self.w_sigma > 0.0 && self.w_sigma.is_finite()) {
            return Err(Error::Config(format!("w_sigma = {} must be > 0", self.w_sigma)));
        }
        Ok(())
    }
}

/// Generated dataset together with the weight vector behind its clean labels.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub data: Dataset,
    pub w_gen: Vec<f64>,
}

pub fn generate(config: &SyntheticConfig) -> Result<Synthetic> {
    config.validate()?;
    let mut rng = rng::seeded(config.seed);
    let normal = Normal::new(0.0, config.w_sigma.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let w_gen: Vec<f64> = (0..config.k).map(|_| normal.sample(&mut rng)).collect();
    let a_dist = Bernoulli::new(config.a_rate).map_err(|e| Error::Config(e.to_string()))?;
    let feature_dists = (0..config.k - 1)
        .map(|j| Bernoulli::new((1.0 / (j + 1) as f64).powf(config.rarity)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut features = Vec::with_capacity(config.n * config.k);
    let mut a = Vec::with_capacity(config.n);
    let mut z = Vec::with_capacity(config.n);
    let mut y = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let ai = if a_dist.sample(&mut rng) { Group::One } else { Group::Zero };
        let start = features.len();
        features.extend(feature_dists.iter().map(|d| if d.sample(&mut rng) { 1.0 } else { 0.0 }));
        features.push(1.0);
        let score: f64 = features[start..].iter().zip(&w_gen).map(|(x, w)| x * w).sum();
        let zi = if score > 0.0 { Label::Pos } else { Label::Neg };
        let u: f64 = rng.random();
        let matches = (zi.is_pos() as usize) == ai.index();
        let yi = if matches && u < config.flip_amount { zi.flipped() } else { zi };
        a.push(ai);
        z.push(zi);
        y.push(yi);
    }
    let mut data = Dataset::new(config.k, features, y, a, Some(z))?;
    data.provenance.source = "synthetic".into();
    data.provenance.seeds.push(("synthetic".into(), config.seed));
    Ok(Synthetic { data, w_gen })
}
