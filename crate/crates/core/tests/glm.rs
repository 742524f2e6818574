#![allow(clippy::needless_range_loop)]

use pricing_core::data::{generate_synthetic_portfolio, Dataset, Feature, SyntheticSpec};
use pricing_core::glm::{
    fit_benchmark_glm, fit_glm, tree_bin, BinningConfig, Design, FactorSpec, Family, Grouping, Term,
};
use pricing_core::rng;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

fn single_factor(n: usize, seed: u64) -> Dataset {
    let mut r = rng::from_seed(seed);
    let rates = [0.05, 0.12, 0.3, 0.2];
    let mut level = Vec::new();
    let mut e = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let l = r.random_range(0..4usize);
        let ei: f64 = r.random_range(0.1..1.0);
        level.push(l as f64);
        e.push(ei);
        y.push(Poisson::new(rates[l] * ei).unwrap().sample(&mut r));
    }
    Dataset::frequency(
        vec![Feature::categorical("zone", &["a", "b", "c", "d"])],
        vec![level],
        e,
        y,
    )
    .unwrap()
}

#[test]
fn single_factor_poisson_matches_cell_rates() {
    let d = single_factor(5000, 11);
    let m = fit_glm(&d, &Design::main_effects(d.features()), Family::PoissonLog).unwrap();
    for l in 0..4 {
        let (mut yc, mut ec) = (0.0, 0.0);
        for i in 0..d.n_rows() {
            if d.column(0)[i] == l as f64 {
                yc += d.response()[i];
                ec += d.exposure()[i];
            }
        }
        let fitted = m.predict_row(&[l as f64]).unwrap();
        assert!(
            (fitted - yc / ec).abs() <= 1e-8 * (yc / ec),
            "level {l}: {fitted} vs {}",
            yc / ec
        );
    }
}

#[test]
fn poisson_fit_is_balanced_in_sample() {
    let p = generate_synthetic_portfolio(&SyntheticSpec::motor(8000), 5).unwrap();
    let d = &p.frequency;
    let m = fit_glm(d, &Design::main_effects(d.features()), Family::PoissonLog).unwrap();
    let f = m.predict(d).unwrap();
    let fitted: f64 = f.iter().zip(d.exposure()).map(|(f, e)| f * e).sum();
    let observed: f64 = d.response().iter().sum();
    assert!((fitted / observed - 1.0).abs() < 1e-6);
}

#[test]
fn gamma_glm_solves_weighted_score_equations() {
    // Log-link gamma: the score for column j is sum_i alpha_i x_ij (y_i - mu_i) / mu_i.
    let mut r = rng::from_seed(3);
    let n = 3000;
    let (mut x, mut lvl, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let xi: f64 = r.random_range(-1.0..1.0);
        let li = r.random_range(0..3usize);
        let mu = (7.0 + 0.4 * xi + [0.0, 0.3, -0.2][li]).exp();
        let a = r.random_range(1..4usize) as f64;
        let shape = 2.0 * a;
        x.push(xi);
        lvl.push(li as f64);
        y.push(Gamma::new(shape, mu / shape).unwrap().sample(&mut r));
        w.push(a);
    }
    let d = Dataset::severity(
        vec![Feature::continuous("x"), Feature::categorical("c", &["p", "q", "r"])],
        vec![x, lvl],
        y,
        w,
    )
    .unwrap();
    let m = fit_glm(&d, &Design::main_effects(d.features()), Family::GammaLog).unwrap();
    let mu = m.predict(&d).unwrap();
    let mut score = [0.0; 4];
    for i in 0..n {
        let res = d.weight()[i] * (d.response()[i] - mu[i]) / mu[i];
        let c = d.column(1)[i];
        score[0] += res;
        score[1] += res * d.column(0)[i];
        // reference is the most populous level; test all three indicator sums
        score[2] += if c == 1.0 { res } else { 0.0 };
        score[3] += if c == 2.0 { res } else { 0.0 };
    }
    let scale: f64 = d.weight().iter().sum();
    for s in score {
        assert!(s.abs() / scale < 1e-8, "score {s}");
    }
    assert!((m.coefficients[1] - 0.4).abs() < 0.1);
}

#[test]
fn interaction_term_recovers_cell_means() {
    // Saturated two-factor model: fitted rates equal cell rates.
    let mut r = rng::from_seed(9);
    let (mut a, mut b, mut e, mut y) = (vec![], vec![], vec![], vec![]);
    for _ in 0..4000 {
        let (ai, bi) = (r.random_range(0..2usize), r.random_range(0..3usize));
        let rate = [[0.1, 0.2, 0.15], [0.3, 0.05, 0.25]][ai][bi];
        a.push(ai as f64);
        b.push(bi as f64);
        e.push(1.0);
        y.push(Poisson::new(rate).unwrap().sample(&mut r));
    }
    let d = Dataset::frequency(
        vec![
            Feature::categorical("a", &["0", "1"]),
            Feature::categorical("b", &["0", "1", "2"]),
        ],
        vec![a, b],
        e,
        y,
    )
    .unwrap();
    let fa = FactorSpec {
        feature: 0,
        name: "a".into(),
        grouping: Grouping::identity(2),
    };
    let fb = FactorSpec {
        feature: 1,
        name: "b".into(),
        grouping: Grouping::identity(3),
    };
    let design = Design::new(vec![
        Term::Factor(fa.clone()),
        Term::Factor(fb.clone()),
        Term::Interaction { a: fa, b: fb },
    ]);
    let m = fit_glm(&d, &design, Family::PoissonLog).unwrap();
    for ai in 0..2 {
        for bi in 0..3 {
            let rows: Vec<usize> = (0..d.n_rows())
                .filter(|&i| d.column(0)[i] == ai as f64 && d.column(1)[i] == bi as f64)
                .collect();
            let rate = rows.iter().map(|&i| d.response()[i]).sum::<f64>() / rows.len() as f64;
            let f = m.predict_row(&[ai as f64, bi as f64]).unwrap();
            assert!((f - rate).abs() < 1e-8 * rate, "{ai},{bi}: {f} vs {rate}");
        }
    }
}

#[test]
fn bic_matches_direct_likelihood() {
    let d = single_factor(500, 4);
    let m = fit_glm(&d, &Design::main_effects(d.features()), Family::PoissonLog).unwrap();
    let f = m.predict(&d).unwrap();
    let ll: f64 = (0..d.n_rows())
        .map(|i| {
            let mu = f[i] * d.exposure()[i];
            let y = d.response()[i];
            y * mu.ln() - mu - statrs::function::gamma::ln_gamma(y + 1.0)
        })
        .sum();
    let bic = -2.0 * ll + 4.0 * (500f64).ln();
    assert!((m.bic - bic).abs() < 1e-8 * bic.abs());
}

/// Exhaustive single split search used as the oracle for the binning tree.
fn best_single_split(x: &[f64], y: &[f64], e: &[f64], min_rows: f64) -> Option<f64> {
    let mut vals = x.to_vec();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    let dev = |rows: &[usize]| -> f64 {
        let (ys, es): (f64, f64) = rows.iter().fold((0.0, 0.0), |a, &i| (a.0 + y[i], a.1 + e[i]));
        let rate = ys / es;
        rows.iter()
            .map(|&i| {
                let mu = rate * e[i];
                2.0 * (if y[i] > 0.0 { y[i] * (y[i] / mu).ln() } else { 0.0 } - (y[i] - mu))
            })
            .sum()
    };
    let all: Vec<usize> = (0..x.len()).collect();
    let root = dev(&all);
    let mut best: Option<(f64, f64)> = None;
    for w in vals.windows(2) {
        let c = 0.5 * (w[0] + w[1]);
        let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x[i] < c);
        if (l.len() as f64) < min_rows || (r.len() as f64) < min_rows {
            continue;
        }
        let gain = root - dev(&l) - dev(&r);
        if best.is_none_or(|b| gain > b.0) {
            best = Some((gain, c));
        }
    }
    best.map(|b| b.1)
}

#[test]
fn first_tree_split_matches_exhaustive_search() {
    let mut r = rng::from_seed(21);
    let n = 2000;
    let x: Vec<f64> = (0..n).map(|_| r.random_range(0..40usize) as f64).collect();
    let e: Vec<f64> = (0..n).map(|_| r.random_range(0.2..1.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let rate = if x[i] < 12.0 { 0.4 } else { 0.1 };
            Poisson::new(rate * e[i]).unwrap().sample(&mut r)
        })
        .collect();
    let cfg = BinningConfig {
        max_bins: 2,
        ..Default::default()
    };
    let rule = tree_bin(0, &x, &y, &e, Family::PoissonLog, &cfg).unwrap();
    let oracle = best_single_split(&x, &y, &e, 0.05 * n as f64).unwrap();
    assert_eq!(rule.cuts, vec![oracle]);
}

#[test]
fn pure_noise_is_not_binned() {
    let mut r = rng::from_seed(8);
    let n = 5000;
    let x: Vec<f64> = (0..n).map(|_| r.random_range(0..60usize) as f64).collect();
    let e = vec![1.0; n];
    let y: Vec<f64> = (0..n).map(|_| Poisson::new(0.1).unwrap().sample(&mut r)).collect();
    let rule = tree_bin(0, &x, &y, &e, Family::PoissonLog, &BinningConfig::default()).unwrap();
    assert!(rule.cuts.len() <= 1, "{:?}", rule.cuts);
}

#[test]
fn benchmark_glm_bins_continuous_features() {
    let p = generate_synthetic_portfolio(&SyntheticSpec::motor(20000), 2).unwrap();
    let m = fit_benchmark_glm(&p.frequency, &BinningConfig::default()).unwrap();
    let age = m
        .layout
        .iter()
        .find_map(|t| match &t.term {
            Term::Factor(f) if f.name == "ageph" => Some(f.grouping.clone()),
            _ => None,
        })
        .expect("age is binned");
    match age {
        Grouping::Cuts { cuts } => assert!((2..=7).contains(&cuts.len()), "{cuts:?}"),
        other => panic!("unexpected grouping {other:?}"),
    }
    let table = m.rating_table(p.frequency.features());
    assert!(table
        .factors
        .iter()
        .all(|f| f.levels.iter().any(|l| l.coefficient == 0.0)));
}

#[test]
fn non_convergence_reports_trace() {
    let d = single_factor(200, 1);
    let cfg = pricing_core::glm::IrlsConfig {
        tolerance: 0.0,
        max_iterations: 3,
    };
    match pricing_core::glm::fit_glm_with(&d, &Design::main_effects(d.features()), Family::PoissonLog, cfg) {
        Err(pricing_core::Error::NotConverged { iterations, trace }) => {
            assert_eq!(iterations, 3);
            assert_eq!(trace.len(), 4);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}
