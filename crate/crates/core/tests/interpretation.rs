#![allow(clippy::needless_range_loop)]

use pricing_core::data::{Dataset, Feature};
use pricing_core::interpretation::{
    partial_dependence, partial_dependence_2d, pd_grid, permutation_vip, shapley_mc, PD_GRID_CAP,
};
use pricing_core::model::{FnPredictor, Predictor};
use pricing_core::rng;
use rand::seq::SliceRandom;
use rand::Rng;

fn frame(n: usize, seed: u64) -> Dataset {
    let mut r = rng::from_seed(seed);
    let a: Vec<f64> = (0..n).map(|_| r.random_range(18..=80) as f64).collect();
    let b: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| r.random_range(0..3) as f64).collect();
    Dataset::frequency(
        vec![
            Feature::continuous("age"),
            Feature::continuous("score"),
            Feature::categorical("zone", &["u", "r", "m"]),
        ],
        vec![a, b, c],
        vec![1.0; n],
        vec![0.0; n],
    )
    .unwrap()
}

fn loglinear(r: &[f64]) -> f64 {
    (0.02 * r[0] - 0.5 * r[1] + [0.0, 0.2, -0.1][r[2] as usize]).exp()
}

#[test]
fn vip_matches_direct_evaluation() {
    let d = frame(300, 1);
    let seed = 42;
    let vip = permutation_vip(&FnPredictor(loglinear), &d, seed, 1).unwrap();
    for j in 0..3 {
        let mut col = d.column(j).to_vec();
        col.shuffle(&mut rng::stream(seed, "vip", (j * 1024) as u64));
        let mut direct = 0.0;
        for i in 0..d.n_rows() {
            let mut row = d.row(i);
            let base = loglinear(&row);
            row[j] = col[i];
            direct += (base - loglinear(&row)).abs();
        }
        assert!(
            (vip[j].vip - direct).abs() < 1e-9 * direct,
            "{j}: {} vs {direct}",
            vip[j].vip
        );
        assert!(vip[j].vip >= 0.0);
    }
    assert!((vip.iter().map(|v| v.relative).sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(vip, permutation_vip(&FnPredictor(loglinear), &d, seed, 1).unwrap());
}

#[test]
fn pd_of_factorised_model_is_proportional() {
    let d = frame(400, 2);
    let m = FnPredictor(|r: &[f64]| (0.03 * r[0]).exp() * (1.0 + r[1] * r[1]) * (1.0 + r[2]));
    let grid = pd_grid(&d, 0, PD_GRID_CAP).unwrap();
    let pd = partial_dependence(&m, "m", &d, 0, &grid).unwrap();
    let ratio: Vec<f64> = pd
        .grid
        .iter()
        .zip(&pd.values)
        .map(|(g, v)| v / (0.03 * g).exp())
        .collect();
    for r in &ratio {
        assert!((r / ratio[0] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn pd_of_constant_model_is_flat() {
    let d = frame(50, 3);
    let pd = partial_dependence(&FnPredictor(|_: &[f64]| 0.7), "c", &d, 2, &[0.0, 1.0, 2.0]).unwrap();
    assert!(pd.values.iter().all(|&v| (v - 0.7).abs() < 1e-15));
}

#[test]
fn single_row_pd_is_prediction_sweep() {
    let d = frame(1, 4);
    let grid = [20.0, 30.0, 55.0];
    let pd = partial_dependence(&FnPredictor(loglinear), "m", &d, 0, &grid).unwrap();
    for (g, v) in grid.iter().zip(&pd.values) {
        let mut row = d.row(0);
        row[0] = *g;
        assert_eq!(*v, loglinear(&row));
    }
}

#[test]
fn pd_is_linear_over_model_averaging() {
    let d = frame(200, 5);
    let f = |r: &[f64]| loglinear(r);
    let g = |r: &[f64]| 0.1 + r[1].abs() * r[0] / 50.0;
    let avg = FnPredictor(|r: &[f64]| 0.5 * (f(r) + g(r)));
    let grid = pd_grid(&d, 1, 20).unwrap();
    let pf = partial_dependence(&FnPredictor(f), "f", &d, 1, &grid).unwrap();
    let pg = partial_dependence(&FnPredictor(g), "g", &d, 1, &grid).unwrap();
    let pa = partial_dependence(&avg, "a", &d, 1, &grid).unwrap();
    for i in 0..grid.len() {
        assert!((pa.values[i] - 0.5 * (pf.values[i] + pg.values[i])).abs() < 1e-12);
    }
}

#[test]
fn two_way_pd_of_product_model_factorises() {
    let d = frame(100, 6);
    let m = FnPredictor(|r: &[f64]| (0.01 * r[0]).exp() * (1.0 + 0.5 * r[2]));
    let s = partial_dependence_2d(&m, "m", &d, (0, 2), &[20.0, 40.0], &[0.0, 1.0, 2.0]).unwrap();
    for a in 0..2 {
        for b in 0..3 {
            let want = (0.01 * s.grid_a[a]).exp() * (1.0 + 0.5 * s.grid_b[b]);
            assert!((s.at(a, b) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn continuous_grid_covers_observed_range() {
    let d = frame(500, 7);
    let g = pd_grid(&d, 0, PD_GRID_CAP).unwrap();
    let (lo, hi) = d
        .column(0)
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    assert_eq!((g[0], *g.last().unwrap()), (lo, hi));
    assert_eq!(g.len(), (hi - lo) as usize + 1);
    assert!(pd_grid(&d, 1, PD_GRID_CAP).unwrap().len() <= PD_GRID_CAP);
}

/// Exact interventional Shapley value by the subset formula.
fn exact_shapley<F: Fn(&[f64]) -> f64>(f: &F, bg: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let p = x.len();
    let v = |mask: usize| -> f64 {
        bg.iter()
            .map(|b| {
                let z: Vec<f64> = (0..p).map(|j| if mask >> j & 1 == 1 { x[j] } else { b[j] }).collect();
                f(&z)
            })
            .sum::<f64>()
            / bg.len() as f64
    };
    let fact = |k: usize| (1..=k).product::<usize>() as f64;
    (0..p)
        .map(|j| {
            (0..1usize << p)
                .filter(|s| s >> j & 1 == 0)
                .map(|s| {
                    let k = s.count_ones() as usize;
                    fact(k) * fact(p - k - 1) / fact(p) * (v(s | 1 << j) - v(s))
                })
                .sum()
        })
        .collect()
}

#[test]
fn exhaustive_two_feature_shapley_is_exact() {
    let d = Dataset::frequency(
        vec![Feature::continuous("a"), Feature::continuous("b")],
        vec![vec![0.0, 1.0, 2.0, 0.5], vec![1.0, -1.0, 0.0, 2.0]],
        vec![1.0; 4],
        vec![0.0; 4],
    )
    .unwrap();
    let f = |r: &[f64]| (0.4 * r[0] + 0.3 * r[0] * r[1]).exp();
    let x = [1.5, 0.5];
    let s = shapley_mc(&FnPredictor(f), &d, &x, 2, 0).unwrap();
    assert!(s.exact);
    assert_eq!(s.permutations, 2);
    let bg: Vec<Vec<f64>> = (0..4).map(|i| d.row(i)).collect();
    let want = exact_shapley(&f, &bg, &x);
    for (a, b) in s.contributions.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn sampled_shapley_is_within_three_sigma_and_efficient() {
    let d = frame(60, 8);
    let f = |r: &[f64]| (0.02 * r[0] * (1.0 + r[1]) + 0.3 * r[2]).exp();
    let x = d.row(3);
    // Fewer draws than the 24 orderings of four features, so they are sampled.
    let d4 = Dataset::frequency(
        vec![
            Feature::continuous("age"),
            Feature::continuous("score"),
            Feature::categorical("zone", &["u", "r", "m"]),
            Feature::continuous("noise"),
        ],
        vec![
            d.column(0).to_vec(),
            d.column(1).to_vec(),
            d.column(2).to_vec(),
            (0..60).map(|i| i as f64).collect(),
        ],
        vec![1.0; 60],
        vec![0.0; 60],
    )
    .unwrap();
    let mut x4 = x.clone();
    x4.push(7.0);
    let f4 = |r: &[f64]| f(&r[..3]) * (1.0 + 0.01 * r[3]);
    let s = shapley_mc(&FnPredictor(f4), &d4, &x4, 20, 9).unwrap();
    assert!(!s.exact);
    let total: f64 = s.contributions.iter().sum();
    assert!((total - (s.prediction - s.base)).abs() < 1e-12 * s.prediction.abs().max(1.0));

    let bg: Vec<Vec<f64>> = (0..60).map(|i| d4.row(i)).collect();
    let exact = exact_shapley(&f4, &bg, &x4);
    // Spread of the per-ordering marginal contribution over all 24 orderings.
    let v = |mask: usize| -> f64 {
        bg.iter()
            .map(|b| {
                let z: Vec<f64> = (0..4).map(|j| if mask >> j & 1 == 1 { x4[j] } else { b[j] }).collect();
                f4(&z)
            })
            .sum::<f64>()
            / 60.0
    };
    let mut orders = vec![vec![0usize, 1, 2, 3]];
    while orders.len() < 24 {
        let mut o = orders.last().unwrap().clone();
        // next lexicographic permutation
        let i = (0..3).rev().find(|&i| o[i] < o[i + 1]).unwrap();
        let k = (i + 1..4).rev().find(|&k| o[k] > o[i]).unwrap();
        o.swap(i, k);
        o[i + 1..].reverse();
        orders.push(o);
    }
    for j in 0..4 {
        let marg: Vec<f64> = orders
            .iter()
            .map(|o| {
                let before: usize = o.iter().take_while(|&&k| k != j).map(|&k| 1 << k).sum();
                v(before | 1 << j) - v(before)
            })
            .collect();
        let m = marg.iter().sum::<f64>() / 24.0;
        assert!((m - exact[j]).abs() < 1e-12);
        let sd = (marg.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 24.0).sqrt();
        let err = (s.contributions[j] - exact[j]).abs();
        assert!(err <= 3.0 * sd / 20f64.sqrt() + 1e-12, "feature {j}: err {err} sd {sd}");
    }
}

#[test]
fn additive_model_contributions_are_centred_effects() {
    let d = frame(300, 10);
    let (ea, eb) = (|a: f64| 0.01 * a, |b: f64| b * b);
    let f = |r: &[f64]| 1.0 + ea(r[0]) + eb(r[1]) + 0.2 * r[2];
    let x = vec![45.0, 0.3, 2.0];
    let s = shapley_mc(&FnPredictor(f), &d, &x, 2000, 1).unwrap();
    let mean = |j: usize, g: &dyn Fn(f64) -> f64| d.column(j).iter().map(|&v| g(v)).sum::<f64>() / 300.0;
    let want = [
        ea(45.0) - mean(0, &ea),
        eb(0.3) - mean(1, &eb),
        0.4 - mean(2, &|c| 0.2 * c),
    ];
    for (a, b) in s.contributions.iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(s.prediction, FnPredictor(f).predict_row(&x).unwrap());
}
