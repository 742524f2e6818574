use pricing_core::data::{generate_synthetic_portfolio, stratified_folds, Dataset, Feature, SyntheticSpec};
use pricing_core::gbm::{deviance_on, fit_gbm, tune_gbm, GbmGrid, GbmParams, Node, Tree};
use pricing_core::rng;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

fn motor(n: usize, seed: u64) -> Dataset {
    generate_synthetic_portfolio(&SyntheticSpec::motor(n), seed)
        .unwrap()
        .frequency
}

#[test]
fn constant_response_is_reproduced() {
    let x: Vec<f64> = (0..200).map(|i| (i % 17) as f64).collect();
    let d = Dataset::severity(
        vec![Feature::continuous("x")],
        vec![x.clone()],
        vec![1234.5; 200],
        vec![1.0; 200],
    )
    .unwrap();
    let m = fit_gbm(
        &d,
        &GbmParams {
            n_trees: 30,
            depth: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let worst = m
        .predict(&d)
        .iter()
        .map(|p| (p / 1234.5 - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-12, "{worst}");

    let d = Dataset::frequency(vec![Feature::continuous("x")], vec![x], vec![1.0; 200], vec![2.0; 200]).unwrap();
    let m = fit_gbm(
        &d,
        &GbmParams {
            n_trees: 30,
            depth: 3,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(m.predict(&d).iter().all(|p| (p / 2.0 - 1.0).abs() < 1e-12));
}

#[test]
fn initial_score_is_log_portfolio_rate() {
    let d = motor(3000, 1);
    let rate = d.response().iter().sum::<f64>() / d.exposure().iter().sum::<f64>();
    let m = fit_gbm(
        &d,
        &GbmParams {
            n_trees: 0,
            ..Default::default()
        },
    )
    .unwrap();
    assert!((m.init - rate.ln()).abs() < 1e-12);
    assert!(m.predict(&d).iter().all(|&p| (p - rate).abs() < 1e-12 * rate));
    let m = fit_gbm(
        &d,
        &GbmParams {
            n_trees: 20,
            shrinkage: 0.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(m.predict(&d).iter().all(|&p| (p - rate).abs() < 1e-12 * rate));
}

#[test]
fn zero_leaf_tree_changes_nothing() {
    let d = motor(2000, 2);
    let mut m = fit_gbm(
        &d,
        &GbmParams {
            n_trees: 10,
            ..Default::default()
        },
    )
    .unwrap();
    let before = m.predict(&d);
    m.trees.push(Tree {
        nodes: vec![
            Node::Numeric {
                feature: 0,
                threshold: 40.0,
                left: 1,
                right: 2,
            },
            Node::Leaf { value: 0.0 },
            Node::Leaf { value: 0.0 },
        ],
    });
    assert_eq!(m.predict(&d), before);
}

#[test]
fn training_deviance_never_increases() {
    let d = motor(5000, 3);
    let m = fit_gbm(
        &d,
        &GbmParams {
            n_trees: 150,
            depth: 3,
            shrinkage: 0.05,
            ..Default::default()
        },
    )
    .unwrap();
    let stages: Vec<usize> = (0..=150).collect();
    let devs: Vec<f64> = m
        .predict_staged(&d, &stages)
        .iter()
        .map(|p| deviance_on(&d, p).unwrap())
        .collect();
    for w in devs.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
    }
    assert!(devs[150] < devs[0]);
}

/// Best single split on gradients `y - mu` by brute force over cut points.
fn best_cut(x: &[f64], g: &[f64], min_node: usize) -> f64 {
    let mut cuts: Vec<f64> = x.to_vec();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let total: f64 = g.iter().sum();
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for w in cuts.windows(2) {
        let c = 0.5 * (w[0] + w[1]);
        let (mut sl, mut nl) = (0.0, 0usize);
        for (xi, gi) in x.iter().zip(g) {
            if *xi <= c {
                sl += gi;
                nl += 1;
            }
        }
        let nr = x.len() - nl;
        if nl < min_node || nr < min_node {
            continue;
        }
        let gain = sl * sl / nl as f64 + (total - sl).powi(2) / nr as f64;
        if gain > best.0 {
            best = (gain, c);
        }
    }
    best.1
}

#[test]
fn depth_one_stump_finds_step() {
    let mut r = rng::from_seed(4);
    let n = 20_000;
    let x: Vec<f64> = (0..n).map(|_| r.random_range(18..=85) as f64).collect();
    let e = vec![1.0; n];
    let y: Vec<f64> = x
        .iter()
        .map(|&x| Poisson::new(if x < 40.0 { 0.2 } else { 0.1 }).unwrap().sample(&mut r))
        .collect();
    let d = Dataset::frequency(vec![Feature::continuous("age")], vec![x.clone()], e, y.clone()).unwrap();
    let m = fit_gbm(
        &d,
        &GbmParams {
            n_trees: 1,
            depth: 1,
            bag_fraction: 1.0,
            ..Default::default()
        },
    )
    .unwrap();
    let Node::Numeric { threshold, .. } = m.trees[0].nodes[0] else {
        panic!("root is not a numeric split")
    };
    let mean = y.iter().sum::<f64>() / n as f64;
    let g: Vec<f64> = y.iter().map(|y| y - mean).collect();
    let oracle = best_cut(&x, &g, (0.0075 * n as f64).ceil() as usize);
    assert_eq!(threshold, oracle);
    assert!((threshold - 39.5).abs() <= 2.0, "cut at {threshold}");
}

#[test]
fn two_tree_trace_matches_hand_computation() {
    let x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let e = vec![1.0, 1.0, 0.5, 1.0, 2.0, 1.0];
    let y = vec![0.0, 1.0, 0.0, 2.0, 3.0, 4.0];
    let d = Dataset::frequency(vec![Feature::continuous("x")], vec![x.clone()], e.clone(), y.clone()).unwrap();
    let params = GbmParams {
        n_trees: 2,
        depth: 1,
        shrinkage: 0.5,
        bag_fraction: 1.0,
        min_node_share: 0.1,
        seed: 0,
    };
    let m = fit_gbm(&d, &params).unwrap();

    let mut f = vec![(10.0f64 / 6.5).ln(); 6];
    for _ in 0..2 {
        let mu: Vec<f64> = (0..6).map(|i| e[i] * f[i].exp()).collect();
        let g: Vec<f64> = (0..6).map(|i| y[i] - mu[i]).collect();
        let c = best_cut(&x, &g, 1);
        let leaf = |left: bool| {
            let idx: Vec<usize> = (0..6).filter(|&i| (x[i] <= c) == left).collect();
            idx.iter().map(|&i| g[i]).sum::<f64>() / idx.iter().map(|&i| mu[i]).sum::<f64>()
        };
        let (l, r) = (leaf(true), leaf(false));
        for i in 0..6 {
            f[i] += 0.5 * if x[i] <= c { l } else { r };
        }
    }
    for (p, fi) in m.predict(&d).iter().zip(&f) {
        assert!((p - fi.exp()).abs() < 1e-12, "{p} vs {}", fi.exp());
    }
}

#[test]
fn bagging_is_reproducible_for_a_seed() {
    let d = motor(3000, 5);
    let p = GbmParams {
        n_trees: 20,
        depth: 3,
        seed: 9,
        ..Default::default()
    };
    let a = fit_gbm(&d, &p).unwrap();
    let b = fit_gbm(&d, &p).unwrap();
    assert_eq!(a, b);
    let c = fit_gbm(&d, &GbmParams { seed: 10, ..p }).unwrap();
    assert_ne!(a.trees, c.trees);
}

#[test]
fn unseen_level_goes_to_majority_child() {
    let mut r = rng::from_seed(6);
    let n = 3000;
    // Level "d" exists in the schema but never occurs.
    let lvl: Vec<f64> = (0..n).map(|_| [0.0, 0.0, 1.0, 2.0][r.random_range(0..4)]).collect();
    let y: Vec<f64> = lvl
        .iter()
        .map(|&l| Poisson::new([0.1, 0.3, 0.2][l as usize]).unwrap().sample(&mut r))
        .collect();
    let d = Dataset::frequency(
        vec![Feature::categorical("c", &["a", "b", "c", "d"])],
        vec![lvl.clone()],
        vec![1.0; n],
        y,
    )
    .unwrap();
    let m = fit_gbm(
        &d,
        &GbmParams {
            n_trees: 1,
            depth: 1,
            bag_fraction: 1.0,
            ..Default::default()
        },
    )
    .unwrap();
    let Node::Categorical {
        ref goes_left,
        default_left,
        ..
    } = m.trees[0].nodes[0]
    else {
        panic!("root is not a categorical split")
    };
    let n_left = lvl.iter().filter(|&&l| goes_left[l as usize]).count();
    assert_eq!(default_left, n_left >= n - n_left);
    assert_eq!(goes_left[3], default_left);
    let majority_level = (0..3).find(|&l| goes_left[l] == default_left).unwrap() as f64;
    assert_eq!(m.predict_row(&[3.0]), m.predict_row(&[majority_level]));
}

#[test]
fn predictions_are_positive() {
    let d = motor(2000, 7);
    let m = fit_gbm(
        &d,
        &GbmParams {
            n_trees: 50,
            depth: 4,
            shrinkage: 0.3,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(m.predict(&d).iter().all(|&p| p > 0.0 && p.is_finite()));
    assert!(m.trees.iter().all(|t| t.depth() <= 4));
}

#[test]
fn single_point_grid_is_returned() {
    let d = motor(2000, 8);
    let plan = stratified_folds(&d, 5, 1).unwrap();
    let grid = GbmGrid {
        n_trees: vec![30],
        depth: vec![2],
    };
    let (p, scores) = tune_gbm(&d, &plan, 0, &grid, &GbmParams::default()).unwrap();
    assert_eq!((p.n_trees, p.depth), (30, 2));
    assert_eq!(scores.len(), 1);
}

#[test]
fn tuning_prefers_shallow_trees_on_additive_data() {
    let grid = GbmGrid {
        n_trees: vec![50, 150],
        depth: vec![1, 2, 3, 8, 9],
    };
    let (mut shallow, mut deep) = (0, 0);
    for seed in 0..10 {
        let d = motor(3000, 100 + seed);
        let plan = stratified_folds(&d, 5, seed).unwrap();
        let base = GbmParams {
            shrinkage: 0.05,
            seed,
            ..Default::default()
        };
        let (p, _) = tune_gbm(&d, &plan, 0, &grid, &base).unwrap();
        assert!(grid.n_trees.contains(&p.n_trees) && grid.depth.contains(&p.depth));
        if p.depth <= 3 {
            shallow += 1;
        } else {
            deep += 1;
        }
    }
    assert!(shallow > deep, "shallow {shallow} deep {deep}");
}
