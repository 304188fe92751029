use bfarl_core::bias::{
    epsilon_from_theta, inject_bias, inject_label_bias, selection_removal_count, theta_from_epsilon, BiasSpec,
};
use bfarl_core::data::{split, standardize_split, Dataset, Group, Label};
use bfarl_core::losses::{bfarl, bfarl_value, estimate_marginals, GroupLabelMarginals, MetaParams};
use bfarl_core::meta::{meta_gradient, MetaGradient, Objective};
use bfarl_core::metrics::{deo, p_percent, weighted_macro_f1};
use bfarl_core::model::{Activation, ModelParams};
use bfarl_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

fn label(b: bool) -> Label {
    if b {
        Label::Pos
    } else {
        Label::Neg
    }
}

fn group(b: bool) -> Group {
    if b {
        Group::One
    } else {
        Group::Zero
    }
}

fn swap(groups: &[Group]) -> Vec<Group> {
    groups.iter().map(|g| g.other()).collect()
}

fn toy(n: usize, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let y = (0..n).map(|i| label(i % 3 == 0)).collect();
    let a = (0..n).map(|i| group(i % 2 == 0)).collect();
    Dataset::from_rows(&rows, y, a, None).unwrap()
}

proptest! {
    #[test]
    fn fairness_metrics_are_bounded_and_group_symmetric(
        rows in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 2..60)
    ) {
        let pred: Vec<Label> = rows.iter().map(|r| label(r.0)).collect();
        let truth: Vec<Label> = rows.iter().map(|r| label(r.1)).collect();
        let groups: Vec<Group> = rows.iter().map(|r| group(r.2)).collect();
        if let Ok(p) = p_percent(&pred, &groups) {
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert_eq!(p, p_percent(&pred, &swap(&groups)).unwrap());
        }
        if let Ok(d) = deo(&pred, &truth, &groups) {
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, deo(&pred, &truth, &swap(&groups)).unwrap());
        }
        let f1 = weighted_macro_f1(&pred, &truth).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f1));
        prop_assert!((weighted_macro_f1(&truth, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_conversion_round_trips(eps in 0.0f64..=1.0, sigma in 1.0f64..1.5, r in 0.05f64..0.95) {
        if let Ok(theta) = theta_from_epsilon(eps, sigma, r) {
            prop_assert!((0.0..=1.0).contains(&theta));
            prop_assert!((epsilon_from_theta(theta, sigma, r).unwrap() - eps).abs() <= 1e-12);
        }
        prop_assert_eq!(theta_from_epsilon(eps, 1.0, r).unwrap(), eps);
    }

    #[test]
    fn removal_count_is_minimal(pos in 0usize..300, neg in 0usize..300, sigma in 1.0f64..3.0) {
        let k = selection_removal_count(pos, neg, sigma).unwrap();
        let total = (pos + neg) as f64;
        let ok = |k: usize| sigma * (pos - k) as f64 * total <= pos as f64 * (pos - k + neg) as f64;
        let linear = (0..=pos).find(|&k| ok(k)).unwrap_or(0);
        prop_assert_eq!(k, linear);
    }

    #[test]
    fn objective_is_linear_in_meta_parameters(
        probs in prop::collection::vec(0.01f64..0.99, 4..20),
        m0 in prop::array::uniform4(-1.0f64..1.0),
        m1 in prop::array::uniform4(-1.0f64..1.0),
        t in -2.0f64..2.0,
    ) {
        let n = probs.len();
        let labels: Vec<Label> = (0..n).map(|i| label(i % 3 != 0)).collect();
        let groups: Vec<Group> = (0..n).map(|i| group(i % 2 == 0)).collect();
        let marg = GroupLabelMarginals::new(0.4, 0.7).unwrap();
        let value = |m: [f64; 4]| bfarl_value(&probs, &labels, &groups, &MetaParams::from_array(m), &marg).unwrap();
        let mix: Vec<f64> = m0.iter().zip(&m1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let mixed = value([mix[0], mix[1], mix[2], mix[3]]);
        let expected = (1.0 - t) * value(m0) + t * value(m1);
        prop_assert!((mixed - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
    }

    #[test]
    fn split_partitions_rows(n in 2usize..80, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let data = toy(n, 1);
        let (train, test) = split(&data, frac, seed).unwrap();
        prop_assert_eq!(train.len(), (frac * n as f64).floor() as usize);
        prop_assert_eq!(train.len() + test.len(), n);
        let mut all: Vec<f64> = (0..train.len()).map(|i| train.row(i)[0]).chain((0..test.len()).map(|i| test.row(i)[0])).collect();
        let mut orig: Vec<f64> = (0..n).map(|i| data.row(i)[0]).collect();
        all.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        prop_assert_eq!(all, orig);
    }
}

#[test]
fn label_flips_follow_their_rates() {
    let n = 200_000;
    let z: Vec<Label> = (0..n).map(|i| label(i % 2 == 0)).collect();
    let a: Vec<Group> = (0..n).map(|i| group(i % 4 < 2)).collect();
    let data = Dataset::new(1, vec![0.0; n], z.clone(), a.clone(), Some(z.clone())).unwrap();
    let spec = BiasSpec::from_thetas([0.3, 0.1, 0.05, 0.2]);
    let biased = inject_label_bias(&data, &spec, 9).unwrap();
    for g in [Group::Zero, Group::One] {
        for clean in [Label::Neg, Label::Pos] {
            let cell: Vec<usize> = (0..n).filter(|&i| a[i] == g && z[i] == clean).collect();
            let flipped = cell.iter().filter(|&&i| biased.y()[i] != clean).count() as f64;
            let rate = spec.flip_rate(g, clean);
            let m = cell.len() as f64;
            let se = (rate * (1.0 - rate) / m).sqrt();
            assert!((flipped / m - rate).abs() < 4.0 * se, "{g:?} {clean:?}: {} vs {rate}", flipped / m);
        }
    }
}

#[test]
fn selection_reduces_group_positive_share_by_sigma() {
    let n = 10_000;
    let z: Vec<Label> = (0..n).map(|i| label(i % 5 < 2)).collect();
    let a: Vec<Group> = (0..n).map(|i| group(i % 2 == 0)).collect();
    let data = Dataset::new(1, vec![0.0; n], z.clone(), a, Some(z)).unwrap();
    let spec = BiasSpec {
        sigma: 1.25,
        selection_group: Group::One,
        ..BiasSpec::none()
    };
    let (biased, removed) = inject_bias(&data, &spec, 4).unwrap();
    assert_eq!(biased.len(), n - removed);
    let share = |d: &Dataset, g: Group| {
        let rows: Vec<usize> = (0..d.len()).filter(|&i| d.a()[i] == g).collect();
        rows.iter().filter(|&&i| d.y()[i].is_pos()).count() as f64 / rows.len() as f64
    };
    assert_eq!(share(&biased, Group::Zero), share(&data, Group::Zero));
    let target = share(&data, Group::One) / 1.25;
    assert!(share(&biased, Group::One) <= target);
    assert!(share(&biased, Group::One) > target - 1e-3);
}

#[test]
fn standardized_training_columns_are_centered() {
    let data = toy(50, 3).with_numeric_columns(vec![true, false]).unwrap();
    let (train, test) = split(&data, 0.6, 2).unwrap();
    let (train_s, test_s) = standardize_split(&train, &test).unwrap();
    let col = |d: &Dataset, j: usize| (0..d.len()).map(|i| d.row(i)[j]).collect::<Vec<_>>();
    let c = col(&train_s, 0);
    let mean = c.iter().sum::<f64>() / c.len() as f64;
    let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / c.len() as f64;
    assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    assert_eq!(col(&train_s, 1), col(&train, 1));
    assert_eq!(test_s.len(), test.len());
}

#[test]
fn meta_gradient_of_identity_point_matches_objective_components() {
    // With eta = 0 the look-ahead vanishes and the derivative is the
    // component values themselves.
    let data = toy(30, 5);
    let objective = Objective::new(&data).unwrap();
    let params = ModelParams::init(2, &[3], Activation::Sigmoid, 8).unwrap();
    let rows: Vec<usize> = (0..30).collect();
    let meta = MetaParams::new([0.7, 1.3], [0.2, -0.4]).unwrap();
    let (d, value) = meta_gradient(&params, &meta, &objective, &rows, 0.0, MetaGradient::Analytic).unwrap();
    let marg = estimate_marginals(&data).unwrap();
    assert!((value - bfarl(&params, &data, &rows, &meta, marg).unwrap()).abs() < 1e-12);
    for (j, dj) in d.iter().enumerate() {
        let mut unit = [0.0; 4];
        unit[j] = 1.0;
        let t = bfarl(&params, &data, &rows, &MetaParams::from_array(unit), marg).unwrap();
        assert!((dj - t).abs() < 1e-12);
    }
}
