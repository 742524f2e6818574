#![allow(clippy::needless_range_loop)]

use pricing_core::data::{Dataset, Feature};
use pricing_core::glm::{fit_glm, Design, FactorSpec, Family, Grouping, Term};
use pricing_core::rng;
use pricing_core::tariff::{
    balance_ratio, gini_index, gini_matrix, lorenz_curve, minmax_select, ordered_lorenz, risk_scores,
    technical_premium, LorenzPoint,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

fn pt(p: f64, l: f64) -> LorenzPoint {
    LorenzPoint {
        premium_share: p,
        loss_share: l,
    }
}

#[test]
fn all_loss_at_end_has_gini_one() {
    let g = gini_index(&[pt(0.0, 0.0), pt(1.0, 0.0), pt(1.0, 1.0)]).unwrap();
    assert_eq!(g, 1.0);
    assert_eq!(gini_index(&[pt(0.0, 0.0), pt(1.0, 1.0)]).unwrap(), 0.0);
    assert!(gini_index(&[pt(0.0, 0.0), pt(0.5, 0.8), pt(1.0, 1.0)]).unwrap() < 0.0);
    assert!(gini_index(&[pt(0.0, 0.0)]).is_err());
}

#[test]
fn self_comparison_is_zero_under_tie_rule() {
    let mut r = rng::from_seed(1);
    let a: Vec<f64> = (0..500).map(|_| r.random_range(50.0..500.0)).collect();
    let losses: Vec<f64> = (0..500)
        .map(|_| {
            if r.random_bool(0.1) {
                r.random_range(100.0..5000.0)
            } else {
                0.0
            }
        })
        .collect();
    assert_eq!(gini_index(&ordered_lorenz(&a, &a, &losses).unwrap()).unwrap(), 0.0);
    // B = c * A has all relativities tied as well.
    let b: Vec<f64> = a.iter().map(|x| 1.1 * x).collect();
    assert_eq!(gini_index(&ordered_lorenz(&a, &b, &losses).unwrap()).unwrap(), 0.0);
}

#[test]
fn proportional_losses_sit_on_the_diagonal() {
    let a = [1.0, 2.0, 3.0, 4.0];
    let losses = [2.0, 4.0, 6.0, 8.0];
    let b = [3.0, 1.0, 4.0, 2.0];
    let pts = ordered_lorenz(&a, &b, &losses).unwrap();
    assert!(pts.iter().all(|p| (p.premium_share - p.loss_share).abs() < 1e-15));
    assert!(gini_index(&pts).unwrap().abs() < 1e-15);
}

#[test]
fn four_row_worked_example() {
    // Relativities b/a: 2, 0.5, 1, 4 -> order rows 1, 2, 0, 3.
    let a = [10.0, 20.0, 30.0, 40.0];
    let b = [20.0, 10.0, 30.0, 160.0];
    let losses = [0.0, 5.0, 0.0, 15.0];
    let pts = ordered_lorenz(&a, &b, &losses).unwrap();
    let want = [(0.0, 0.0), (0.2, 0.25), (0.5, 0.25), (0.6, 0.25), (1.0, 1.0)];
    assert_eq!(pts.len(), want.len());
    for (p, (x, y)) in pts.iter().zip(want) {
        assert!((p.premium_share - x).abs() < 1e-15 && (p.loss_share - y).abs() < 1e-15);
    }
    let area = 0.5 * 0.2 * 0.25 + 0.3 * 0.25 + 0.1 * 0.25 + 0.5 * 0.4 * 1.25;
    assert!((gini_index(&pts).unwrap() - (1.0 - 2.0 * area)).abs() < 1e-15);
}

#[test]
fn table_matrix_selects_flexible_cann() {
    let names: Vec<String> = ["GLM", "GBM", "CANN GBM flex", "Surrogate"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let v = vec![
        vec![None, Some(5.30), Some(16.59), Some(1.90)],
        vec![Some(3.35), None, Some(16.48), Some(-3.18)],
        vec![Some(-6.41), Some(-10.68), None, Some(-10.19)],
        vec![Some(10.82), Some(12.48), Some(21.50), None],
    ];
    let m = minmax_select(&v).unwrap();
    assert_eq!(m.row_max, vec![16.59, 16.48, -6.41, 21.50]);
    assert_eq!(names[m.selected], "CANN GBM flex");
    assert_eq!(m.tied, vec![2]);
    // Relabelling the models does not change the chosen one.
    let perm = [3, 2, 0, 1];
    let pv: Vec<Vec<Option<f64>>> = perm.iter().map(|&a| perm.iter().map(|&b| v[a][b]).collect()).collect();
    assert_eq!(names[perm[minmax_select(&pv).unwrap().selected]], "CANN GBM flex");
}

#[test]
fn gini_matrix_has_empty_diagonal() {
    let mut r = rng::from_seed(2);
    let prem: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..200).map(|_| r.random_range(1.0..10.0)).collect())
        .collect();
    let losses: Vec<f64> = (0..200).map(|_| r.random_range(0.0..10.0)).collect();
    let names = vec!["a".to_string(), "b".into(), "c".into()];
    let g = gini_matrix(&names, &prem, &losses).unwrap();
    for i in 0..3 {
        assert_eq!(g.values[i][i], None);
        for j in 0..3 {
            if i != j {
                let direct = gini_index(&ordered_lorenz(&prem[i], &prem[j], &losses).unwrap()).unwrap();
                assert_eq!(g.values[i][j], Some(direct));
            }
        }
    }
    assert_eq!(minmax_select(&[vec![None]]).unwrap().selected, 0);
}

#[test]
fn independent_scores_give_near_diagonal_lorenz() {
    let mut r = rng::from_seed(3);
    let n = 10_000;
    let prem: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let losses: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let scores = risk_scores(&prem);
    let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let c = lorenz_curve(&scores, &losses, &grid).unwrap();
    let sup = c.iter().map(|(s, l)| (s - l).abs()).fold(0.0, f64::max);
    assert!(sup < 0.05, "{sup}");
    assert_eq!(c.last().unwrap().1, 1.0);
    assert!(c.windows(2).all(|w| w[1].1 >= w[0].1));
}

#[test]
fn risk_scores_are_ecdf() {
    assert_eq!(risk_scores(&[4.0, 1.0, 3.0, 2.0])[1], 0.25);
    assert_eq!(risk_scores(&[2.0; 5]), vec![1.0; 5]);
}

proptest! {
    #[test]
    fn risk_scores_are_invariant_to_increasing_transforms(p in proptest::collection::vec(0.1f64..100.0, 1..60)) {
        let s = risk_scores(&p);
        let t: Vec<f64> = p.iter().map(|x| x.ln() * 3.0 + x.sqrt()).collect();
        prop_assert_eq!(&s, &risk_scores(&t));
        for i in 0..p.len() {
            for j in 0..p.len() {
                if p[i] < p[j] {
                    prop_assert!(s[i] < s[j]);
                }
            }
        }
    }

    #[test]
    fn balance_ratio_scales(
        rows in proptest::collection::vec((0.1f64..100.0, 0.0f64..100.0), 1..40),
        c in 0.1f64..10.0,
    ) {
        let prem: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut loss: Vec<f64> = rows.iter().map(|r| r.1).collect();
        loss[0] += 1.0;
        let b = balance_ratio(&prem, &loss).unwrap();
        let scaled: Vec<f64> = prem.iter().map(|x| c * x).collect();
        prop_assert!((balance_ratio(&scaled, &loss).unwrap() - c * b).abs() < 1e-12 * c * b.max(1.0));
        prop_assert!((balance_ratio(&loss, &loss).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ordered_lorenz_ends_at_one_and_is_monotone(
        rows in proptest::collection::vec((0.1f64..10.0, 0.1f64..10.0, 0.0f64..5.0), 2..50)
    ) {
        let a: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let mut l: Vec<f64> = rows.iter().map(|r| r.2).collect();
        l[0] += 1.0;
        let pts = ordered_lorenz(&a, &b, &l).unwrap();
        prop_assert_eq!(*pts.last().unwrap(), pt(1.0, 1.0));
        prop_assert_eq!(pts[0], pt(0.0, 0.0));
        prop_assert!(pts.windows(2).all(|w| w[1].premium_share >= w[0].premium_share && w[1].loss_share >= w[0].loss_share));
    }
}

#[test]
fn balanced_glm_premiums_reproduce_losses() {
    // Frequency GLM with exposure, severity equal to the observed mean per cell.
    let mut r = rng::from_seed(4);
    let n = 4000;
    let cell: Vec<f64> = (0..n).map(|_| r.random_range(0..4) as f64).collect();
    let e: Vec<f64> = (0..n).map(|_| r.random_range(0.2..1.0)).collect();
    let y: Vec<f64> = cell
        .iter()
        .zip(&e)
        .map(|(&c, &e)| {
            Poisson::new(e * [0.1, 0.2, 0.15, 0.3][c as usize])
                .unwrap()
                .sample(&mut r)
        })
        .collect();
    let amount: Vec<f64> = y.iter().map(|&k| k * r.random_range(500.0..1500.0)).collect();
    let d = Dataset::frequency(
        vec![Feature::categorical("cell", &["a", "b", "c", "d"])],
        vec![cell.clone()],
        e.clone(),
        y.clone(),
    )
    .unwrap();
    let design = Design::new(vec![Term::Factor(FactorSpec {
        feature: 0,
        name: "cell".into(),
        grouping: Grouping::identity(4),
    })]);
    let glm = fit_glm(&d, &design, Family::PoissonLog).unwrap();
    let rate = glm.predict(&d).unwrap();
    let mut sev = [0.0; 4];
    for c in 0..4 {
        let (a, k) = (0..n)
            .filter(|&i| cell[i] as usize == c)
            .fold((0.0, 0.0), |(a, k), i| (a + amount[i], k + y[i]));
        sev[c] = a / k;
    }
    let expected_counts: Vec<f64> = rate.iter().zip(&e).map(|(f, e)| f * e).collect();
    let severity: Vec<f64> = cell.iter().map(|&c| sev[c as usize]).collect();
    let prem = technical_premium(&expected_counts, &severity).unwrap();
    assert!((balance_ratio(&prem, &amount).unwrap() - 1.0).abs() < 1e-6);
    let direct = prem.iter().sum::<f64>() / amount.iter().sum::<f64>();
    assert!((balance_ratio(&prem, &amount).unwrap() - direct).abs() < 1e-15);
}
