//! Accuracy and fairness metrics computed by exact counting.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group, Label};
use crate::error::{Error, Result};
use crate::model::{mean_loss, Bce, ModelParams, SampleLoss};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{a} predictions for {b} rows")));
    }
    Ok(())
}

/// Absolute difference of true-positive rates between the groups.
pub fn deo(pred: &[Label], truth: &[Label], groups: &[Group]) -> Result<f64> {
    same_len(pred.len(), truth.len())?;
    same_len(pred.len(), groups.len())?;
    let mut hit = [0usize; 2];
    let mut pos = [0usize; 2];
    for ((p, t), g) in pred.iter().zip(truth).zip(groups) {
        if t.is_pos() {
            pos[g.index()] += 1;
            hit[g.index()] += p.is_pos() as usize;
        }
    }
    let mut tpr = [0.0; 2];
    for g in Group::ALL {
        let i = g.index();
        if pos[i] == 0 {
            return Err(Error::EmptyGroup {
                group: i as u8,
                what: "positive-labeled rows for DEO",
            });
        }
        tpr[i] = hit[i] as f64 / pos[i] as f64;
    }
    Ok((tpr[1] - tpr[0]).abs())
}

/// `min(r0/r1, r1/r0)` of the groups' positive-prediction rates. Both rates
/// zero gives 1, exactly one zero gives 0.
pub fn p_percent(pred: &[Label], groups: &[Group]) -> Result<f64> {
    same_len(pred.len(), groups.len())?;
    let mut predicted = [0usize; 2];
    let mut total = [0usize; 2];
    for (p, g) in pred.iter().zip(groups) {
        total[g.index()] += 1;
        predicted[g.index()] += p.is_pos() as usize;
    }
    for g in Group::ALL {
        if total[g.index()] == 0 {
            return Err(Error::EmptyGroup {
                group: g.index() as u8,
                what: "rows for p%",
            });
        }
    }
    match (predicted[0], predicted[1]) {
        (0, 0) => Ok(1.0),
        (0, _) | (_, 0) => Ok(0.0),
        _ => {
            // Cross-multiplied so the smaller ratio is computed directly.
            let lhs = predicted[0] as u128 * total[1] as u128;
            let rhs = predicted[1] as u128 * total[0] as u128;
            Ok(lhs.min(rhs) as f64 / lhs.max(rhs) as f64)
        }
    }
}

/// Per-class F1 averaged with weights equal to each class's share of rows.
pub fn weighted_macro_f1(pred: &[Label], truth: &[Label]) -> Result<f64> {
    same_len(pred.len(), truth.len())?;
    if pred.is_empty() {
        return Err(Error::Domain("no rows to score".into()));
    }
    let n = truth.len() as f64;
    let mut total = 0.0;
    for class in [Label::Neg, Label::Pos] {
        let (mut tp, mut fp, mut fne, mut support) = (0usize, 0usize, 0usize, 0usize);
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == class, t == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fne += 1,
                (false, false) => {}
            }
            support += (t == class) as usize;
        }
        let denom = 2 * tp + fp + fne;
        if denom > 0 && support > 0 {
            total += (support as f64 / n) * (2 * tp) as f64 / denom as f64;
        }
    }
    Ok(total)
}

/// `|mean loss on group 0 - mean loss on group 1|`.
pub fn subgroup_risk_gap(params: &ModelParams, data: &Dataset, loss: &impl SampleLoss) -> Result<f64> {
    let mut rows: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, g) in data.a().iter().enumerate() {
        rows[g.index()].push(i);
    }
    for g in Group::ALL {
        if rows[g.index()].is_empty() {
            return Err(Error::EmptyGroup {
                group: g.index() as u8,
                what: "rows for subgroup risk",
            });
        }
    }
    let r0 = mean_loss(params, data, &rows[0], loss)?;
    let r1 = mean_loss(params, data, &rows[1], loss)?;
    Ok((r0 - r1).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1_weighted_macro: f64,
    pub deo: f64,
    pub p_percent: f64,
    pub subgroup_risk_gap: f64,
    pub n_test: usize,
    pub seed: u64,
}

impl MetricsReport {
    /// Scores `params` against the observed labels of `test`; the risk gap
    /// uses cross-entropy.
    pub fn evaluate(params: &ModelParams, test: &Dataset, seed: u64) -> Result<MetricsReport> {
        if test.is_empty() {
            return Err(Error::Domain("empty test set".into()));
        }
        let pred = params.predict_all(test)?;
        Ok(MetricsReport {
            f1_weighted_macro: weighted_macro_f1(&pred, test.y())?,
            deo: deo(&pred, test.y(), test.a())?,
            p_percent: p_percent(&pred, test.a())?,
            subgroup_risk_gap: subgroup_risk_gap(params, test, &Bce { labels: test.y() })?,
            n_test: test.len(),
            seed,
        })
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "f1" => Some(self.f1_weighted_macro),
            "deo" => Some(self.deo),
            "p_percent" => Some(self.p_percent),
            "risk_gap" => Some(self.subgroup_risk_gap),
            _ => None,
        }
    }

    pub const METRICS: [&'static str; 4] = ["f1", "deo", "p_percent", "risk_gap"];
}
