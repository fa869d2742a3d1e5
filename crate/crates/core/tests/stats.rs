mod common;

use gaplab::scoring::RegionScore;
use gaplab::stats::{
    basic_licensing_test, directional_island_tests, fit_at_theta, fit_design, fit_lmm, island_three_way_test,
    reml_log_likelihood, Design, DesignRow, Factor,
};
use gaplab::{Condition, Construction, Sign};
use common::{dense_reml, grid_reml_optimum};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn simulate(items: u32, beta: [f64; 4], sd_item: f64, sd_res: f64, seed: u64) -> Vec<DesignRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let item_noise = Normal::new(0.0, sd_item).unwrap();
    let res = Normal::new(0.0, sd_res).unwrap();
    let mut rows = Vec::new();
    for item in 1..=items {
        let b = item_noise.sample(&mut rng);
        for f in [Sign::Plus, Sign::Minus] {
            for g in [Sign::Plus, Sign::Minus] {
                let y = beta[0] + beta[1] * f.code() + beta[2] * g.code() + beta[3] * f.code() * g.code() + b + res.sample(&mut rng);
                rows.push(DesignRow {
                    item_id: item,
                    response: y,
                    filler: f,
                    gap: g,
                    island: Sign::Minus,
                });
            }
        }
    }
    rows
}

#[test]
fn reml_optimum_beats_a_fine_grid() {
    let rows = simulate(200, [10.0, -1.0, 0.5, -2.0], 1.0, 1.0, 42);
    let design = Design::from_rows(&rows, &[Factor::Filler, Factor::Gap]).unwrap();
    let fit = fit_design(&design).unwrap();
    assert!(fit.converged);
    let at_opt = dense_reml(&design, fit.theta);
    let (grid_max, _) = grid_reml_optimum(&design);
    assert!(at_opt >= grid_max - 1e-9, "{at_opt} < {grid_max}");
    // both routes agree on the objective
    for theta in [0.0, 0.3, fit.theta, 4.0] {
        assert!((reml_log_likelihood(&design, theta) - dense_reml(&design, theta)).abs() < 1e-8);
    }
    assert!((fit.reml_loglik - at_opt).abs() < 1e-8);
    let est: Vec<f64> = fit.terms.iter().map(|t| t.estimate).collect();
    assert!((est[0] - 10.0).abs() < 0.3 && (est[3] + 2.0).abs() < 0.5, "{est:?}");
    assert!(fit.sigma2_item > 0.5 && fit.sigma2_item < 2.0);
}

#[test]
fn theta_zero_is_least_squares() {
    let rows = simulate(30, [1.0, 2.0, -1.0, 0.5], 0.7, 1.3, 5);
    let design = Design::from_rows(&rows, &[Factor::Filler, Factor::Gap]).unwrap();
    let fit = fit_at_theta(&design, 0.0).unwrap();
    let ols = design.x.clone().svd(true, true).solve(&design.y, 1e-12).unwrap();
    for (t, b) in fit.terms.iter().zip(ols.iter()) {
        assert!((t.estimate - b).abs() < 1e-8);
    }
    assert_eq!(fit.sigma2_item, 0.0);
}

#[test]
fn t_statistics_ignore_coding_magnitude() {
    let rows = simulate(40, [3.0, 0.4, -0.2, 0.8], 1.0, 1.0, 11);
    let half = Design::from_rows(&rows, &[Factor::Filler, Factor::Gap]).unwrap();
    // ±1 coding: each column scales by 2^(interaction order)
    let orders = [0, 1, 1, 2];
    let x = DMatrix::from_fn(half.x.nrows(), 4, |r, c| half.x[(r, c)] * 2f64.powi(orders[c]));
    let unit = Design::new(half.terms.clone(), x, half.y.clone(), half.groups.clone()).unwrap();
    let (a, b) = (fit_design(&half).unwrap(), fit_design(&unit).unwrap());
    for (k, (ta, tb)) in a.terms.iter().zip(&b.terms).enumerate() {
        assert!((ta.t - tb.t).abs() < 1e-8 * ta.t.abs().max(1.0), "{} vs {}", ta.t, tb.t);
        assert!((ta.estimate - tb.estimate * 2f64.powi(orders[k])).abs() < 1e-8);
    }
}

fn scores_from(construction: Construction, items: u32, f: impl Fn(u32, Condition) -> f64) -> Vec<RegionScore> {
    let mut out = Vec::new();
    for item in 1..=items {
        for c in Condition::all() {
            out.push(RegionScore {
                construction,
                item_id: item,
                filler: c.filler,
                gap: c.gap,
                island: c.island,
                region_surprisal_bits: f(item, c),
            });
        }
    }
    out
}

#[test]
fn noise_free_directional_coefficients_are_recovered() {
    // gapless rows carry filled-gap coefficients, gapped rows unlicensed-gap ones
    let scores = scores_from(Construction::Clefting, 20, |_, c| {
        let (fi, is) = (c.filler.code(), c.island.code());
        if c.gap == Sign::Minus {
            7.0 - 0.039 * fi + 2.869 * is + 3.088 * fi * is
        } else {
            9.0 - 1.636 * fi - 1.456 * is - 1.293 * fi * is
        }
    });
    let [(fge, fge_v), (uge, uge_v)] = directional_island_tests(&scores, Construction::Clefting, 0.001).unwrap();
    for (name, want) in [("filler", -0.039), ("island", 2.869), ("filler:island", 3.088)] {
        assert!((fge.term(name).unwrap().estimate - want).abs() < 1e-6);
    }
    for (name, want) in [("filler", -1.636), ("island", -1.456), ("filler:island", -1.293)] {
        assert!((uge.term(name).unwrap().estimate - want).abs() < 1e-6);
    }
    assert!(!fge_v.pass);
    assert!(uge_v.pass);
}

#[test]
fn three_way_verdict_on_injected_magnitudes() {
    let table = |fg: f64, fgi: f64| {
        scores_from(Construction::WhMovement, 24, move |_, c| {
            let (f, g, i) = (c.filler.code(), c.gap.code(), c.island.code());
            5.0 + fg * f * g + fgi * f * g * i
        })
    };
    let (fit, v) = island_three_way_test(&table(-3.621, 2.563), Construction::WhMovement, 0.001).unwrap();
    assert!((fit.term("filler:gap").unwrap().estimate + 3.621).abs() < 1e-6);
    assert!(v.pass);
    let (_, v) = island_three_way_test(&table(3.621, -2.563), Construction::WhMovement, 0.001).unwrap();
    assert!(!v.pass);

    let partial: Vec<RegionScore> = table(-1.0, 1.0).into_iter().filter(|s| s.condition() != Condition::all()[0]).collect();
    assert!(island_three_way_test(&partial, Construction::WhMovement, 0.001).is_err());
}

#[test]
fn licensing_on_noisy_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let noisy: Vec<f64> = (0..48 * 8).map(|_| noise.sample(&mut rng)).collect();
    let table = |inter: f64| {
        scores_from(Construction::Clefting, 48, |item, c| {
            let k = (item as usize - 1) * 8 + Condition::all().iter().position(|x| *x == c).unwrap();
            6.0 + inter * c.filler.code() * c.gap.code() + noisy[k]
        })
    };
    let (_, v) = basic_licensing_test(&table(-3.0), Construction::Clefting, 0.001).unwrap();
    assert!(v.pass, "{}", v.detail);
    let (_, v) = basic_licensing_test(&table(0.0), Construction::Clefting, 0.001).unwrap();
    assert!(!v.pass, "{}", v.detail);
}

#[test]
fn unbounded_ratio_is_flagged_not_silent() {
    // item offsets but no residual noise: the likelihood grows without bound in θ
    let mut rows = Vec::new();
    for item in 1..=10u32 {
        for (f, g) in [(Sign::Plus, Sign::Plus), (Sign::Plus, Sign::Minus), (Sign::Minus, Sign::Plus), (Sign::Minus, Sign::Minus)] {
            rows.push(DesignRow {
                item_id: item,
                response: 1.0 + f.code() + (item as f64 * 0.37).sin() * 3.0,
                filler: f,
                gap: g,
                island: Sign::Minus,
            });
        }
    }
    let fit = fit_lmm(&rows, &[Factor::Filler, Factor::Gap]).unwrap();
    assert!(!fit.converged);
}
