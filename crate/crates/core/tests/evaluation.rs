use pricing_core::evaluation::{
    calibration_curve, default_theta_grid, diebold_mariano, dominance, gamma_deviance, murphy_curve, poisson_deviance,
    poisson_terms, prediction_histogram, BinSpec, DmVerdict, Dominance, LossVector,
};
use pricing_core::math::student_t_cdf;
use pricing_core::rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use statrs::distribution::{ContinuousCDF, StudentsT};

fn lv(model: &str, values: Vec<f64>) -> LossVector {
    LossVector {
        model: model.into(),
        fold: None,
        values,
    }
}

fn naive_score(f: &[f64], y: &[f64], t: f64) -> f64 {
    f.iter()
        .zip(y)
        .map(|(&f, &y)| {
            if f.min(y) <= t && t < f.max(y) {
                (y - t).abs()
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / f.len() as f64
}

#[test]
fn deviance_worked_examples() {
    assert_eq!(poisson_deviance(&[1.0], &[1.0], &[1.0]).unwrap(), 0.0);
    assert!((poisson_deviance(&[0.5], &[0.0], &[1.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!((poisson_deviance(&[1.0, 1.0], &[2.0, 0.0], &[1.0, 1.0]).unwrap() - 4f64.ln()).abs() < 1e-12);
    assert!((gamma_deviance(&[1.0], &[2.0], &[1.0]).unwrap() - 2.0 * (1.0 - 2f64.ln())).abs() < 1e-12);
    assert_eq!(gamma_deviance(&[2.5, 7.0], &[2.5, 7.0], &[1.0, 3.0]).unwrap(), 0.0);
    // Exposure scales the prediction: e = 2, f = 0.5 is a perfect fit of y = 1.
    assert_eq!(poisson_deviance(&[0.5], &[1.0], &[2.0]).unwrap(), 0.0);
}

proptest! {
    #[test]
    fn deviances_are_non_negative(
        rows in proptest::collection::vec((0.01f64..5.0, 0u32..6, 0.1f64..1.0, 0.1f64..100.0), 1..50)
    ) {
        let f: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.1 as f64).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.2).collect();
        prop_assert!(poisson_deviance(&f, &y, &e).unwrap() >= 0.0);
        let s: Vec<f64> = rows.iter().map(|r| r.3).collect();
        prop_assert!(gamma_deviance(&f, &s, &e).unwrap() >= 0.0);
    }

    #[test]
    fn murphy_matches_direct_definition(
        pairs in proptest::collection::vec((0.0f64..10.0, 0u32..8), 1..40),
        probes in proptest::collection::vec(-1.0f64..12.0, 1..30),
    ) {
        let f: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let mut theta = probes;
        theta.extend(default_theta_grid(&f, &y));
        theta.sort_by(f64::total_cmp);
        let c = murphy_curve("m", &f, &y, &theta).unwrap();
        for (t, s) in theta.iter().zip(&c.score) {
            prop_assert!((s - naive_score(&f, &y, *t)).abs() < 1e-9);
        }
    }
}

#[test]
fn poisson_deviance_ignores_row_order() {
    let mut r = rng::from_seed(1);
    let rows: Vec<(f64, f64, f64)> = (0..500)
        .map(|_| {
            (
                r.random_range(0.05..0.5),
                r.random_range(0..3) as f64,
                r.random_range(0.1..1.0),
            )
        })
        .collect();
    let dev = |rows: &[(f64, f64, f64)]| {
        let f: Vec<f64> = rows.iter().map(|x| x.0).collect();
        let y: Vec<f64> = rows.iter().map(|x| x.1).collect();
        let e: Vec<f64> = rows.iter().map(|x| x.2).collect();
        poisson_deviance(&f, &y, &e).unwrap()
    };
    let mut shuffled = rows.clone();
    shuffled.shuffle(&mut r);
    assert!((dev(&rows) - dev(&shuffled)).abs() < 1e-12);
}

#[test]
fn dm_equals_one_sample_t_test() {
    let mut r = rng::from_seed(2);
    let a: Vec<f64> = (0..100).map(|_| 0.5 + r.random_range(-1e-3..1e-3)).collect();
    let b: Vec<f64> = a.iter().map(|x| x - 0.1 + r.random_range(-1e-3..1e-3)).collect();
    let res = diebold_mariano(&lv("a", a.clone()), &lv("b", b.clone())).unwrap();
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = m / (sd / n.sqrt());
    assert!((res.statistic - t).abs() < 1e-9 * t.abs());
    assert_eq!(res.verdict, DmVerdict::Reject);
    let swapped = diebold_mariano(&lv("b", b), &lv("a", a)).unwrap();
    assert_eq!(swapped.statistic, -res.statistic);
    assert_eq!(swapped.verdict, DmVerdict::NoRejection);
}

#[test]
fn dm_p_value_matches_reference_t_distribution() {
    let mut r = rng::from_seed(3);
    for _ in 0..50 {
        let n = r.random_range(3..200);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let res = diebold_mariano(&lv("a", a), &lv("b", b)).unwrap();
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap();
        assert!((res.p_value - (1.0 - t.cdf(res.statistic))).abs() < 1e-10);
    }
    for df in [1.0, 2.5, 10.0, 99.0, 5000.0] {
        let t = StudentsT::new(0.0, 1.0, df).unwrap();
        for x in [-30.0, -3.0, -0.7, 0.0, 0.2, 1.96, 8.0] {
            assert!((student_t_cdf(x, df) - t.cdf(x)).abs() < 1e-10, "df {df} x {x}");
        }
    }
}

#[test]
fn score_is_zero_outside_the_interval() {
    let mut r = rng::from_seed(4);
    for _ in 0..1000 {
        let f: f64 = r.random_range(0.0..5.0);
        let y: f64 = r.random_range(0..5) as f64;
        let (lo, hi) = (f.min(y), f.max(y));
        let below = lo - r.random_range(1e-9..3.0);
        let above = hi + r.random_range(0.0..3.0);
        let c = murphy_curve("m", &[f], &[y], &[below, above]).unwrap();
        assert_eq!(c.score, vec![0.0, 0.0]);
    }
}

#[test]
fn crossing_curves_are_incomparable_despite_deviance_ranking() {
    let y = [0.0, 2.0];
    let fa = [1.0, 2.0];
    let fb = [0.0, 1.5];
    // Poisson deviance cannot score f = 0, so B's first prediction is nudged.
    let fb_dev = [1e-9, 1.5];
    let da = poisson_deviance(&fa, &y, &[1.0; 2]).unwrap();
    let db = poisson_deviance(&fb_dev, &y, &[1.0; 2]).unwrap();
    assert!(db < da);
    let theta = default_theta_grid(&[fa.as_slice(), fb.as_slice()].concat(), &y);
    let ca = murphy_curve("a", &fa, &y, &theta).unwrap();
    let cb = murphy_curve("b", &fb, &y, &theta).unwrap();
    assert_eq!(dominance(&ca, &cb).unwrap(), Dominance::Incomparable);
}

/// `S_theta` is affine on each `[k_i, k_{i+1})` but jumps down at
/// prediction knots, so dominance has to be checked at the knots and at the
/// left limit of each piece (extrapolated from the knot and the midpoint).
fn dominates_everywhere_on_pieces(fa: &[f64], fb: &[f64], y: &[f64], knots: &[f64]) -> bool {
    let diff = |t: f64| naive_score(fa, y, t) - naive_score(fb, y, t);
    knots.windows(2).all(|w| {
        let (at, mid) = (diff(w[0]), diff(0.5 * (w[0] + w[1])));
        at <= 1e-12 && 2.0 * mid - at <= 1e-12
    }) && diff(knots[knots.len() - 1]) <= 1e-12
}

#[test]
fn piecewise_dominance_extends_to_every_theta() {
    let mut r = rng::from_seed(5);
    let (mut checked, mut knot_only) = (0, 0);
    for _ in 0..2000 {
        let n = 5;
        let y: Vec<f64> = (0..n).map(|_| r.random_range(0..4) as f64).collect();
        let fa: Vec<f64> = y.iter().map(|y| y + r.random_range(-0.3..0.3)).collect();
        let fb: Vec<f64> = y.iter().map(|y| y + r.random_range(-1.5..1.5)).collect();
        let mut knots: Vec<f64> = y.iter().chain(&fa).chain(&fb).copied().collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let ca = murphy_curve("a", &fa, &y, &knots).unwrap();
        let cb = murphy_curve("b", &fb, &y, &knots).unwrap();
        let on_knots = matches!(dominance(&ca, &cb).unwrap(), Dominance::ADominates | Dominance::Tied);
        if !dominates_everywhere_on_pieces(&fa, &fb, &y, &knots) {
            knot_only += on_knots as usize;
            continue;
        }
        assert!(on_knots);
        checked += 1;
        for _ in 0..100 {
            let t = r.random_range(knots[0] - 1.0..knots[knots.len() - 1] + 1.0);
            assert!(naive_score(&fa, &y, t) <= naive_score(&fb, &y, t) + 1e-12);
        }
    }
    assert!(checked > 10, "{checked}");
    // Knots alone are not enough: some pairs dominate on knots only.
    assert!(knot_only > 0);
}

#[test]
fn calibrated_predictions_pass_calibration_bands() {
    let mut r = rng::from_seed(6);
    let f: Vec<f64> = (0..50_000).map(|_| r.random_range(0.02..0.6)).collect();
    let y: Vec<f64> = f.iter().map(|&f| Poisson::new(f).unwrap().sample(&mut r)).collect();
    let t = calibration_curve(&f, &y, &BinSpec::default()).unwrap();
    for b in &t.bins {
        let band = 3.0 * (b.mean_prediction / b.count as f64).sqrt();
        assert!((b.mean_response - b.mean_prediction).abs() < band, "{b:?}");
    }
    assert_eq!(t.bins.iter().map(|b| b.count).sum::<usize>(), f.len());
}

#[test]
fn histogram_conserves_counts() {
    let mut r = rng::from_seed(7);
    let f: Vec<f64> = (0..1234).map(|_| r.random_range(0.0..3.0)).collect();
    let h = prediction_histogram(&f, 0.25).unwrap();
    assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 1234);
}

#[test]
fn y_zero_terms_use_zero_log_convention() {
    let t = poisson_terms(&[0.3], &[0.0], &[2.0]).unwrap();
    assert!((t[0] - 0.6).abs() < 1e-15);
}
