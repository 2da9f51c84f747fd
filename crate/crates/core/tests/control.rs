#![allow(clippy::needless_range_loop)]

mod common;

use common::{dist, kl, matrix, rng, simplex_grid};
use rand::Rng;
use thermo_mdp::kl_control::{
    evaluate_control, kl_decomposition, kl_value_backward, lemma1_gap, optimal_control, ControlLaw, PassiveDynamics,
};
use thermo_mdp::maxent::{entropy_decomposition_check, saridis_gibbs, solve_for_kl_value, solve_for_performance};
use thermo_mdp::StochasticMatrix;

/// Backward grid search: each stage picks the best grid law against the grid optimum of the next stage.
fn grid_values(passive: &PassiveDynamics, grid: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = passive.n_states();
    let mut next = passive.terminal().to_vec();
    let mut out = vec![next.clone()];
    for _ in 1..passive.horizon() {
        let cur: Vec<f64> = (0..n)
            .map(|s| {
                let p = passive.kernel().row(s);
                grid.iter()
                    .filter(|a| a.iter().zip(p).all(|(&x, &q)| q > 0.0 || x == 0.0))
                    .map(|a| passive.state_cost()[s] + kl(a, p) + a.iter().zip(&next).map(|(x, v)| x * v).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        out.insert(0, cur.clone());
        next = cur;
    }
    out
}

#[test]
fn kl_value_matches_grid_search_and_its_control() {
    let mut r = rng(11);
    for case in 0..25 {
        let n = 2 + case % 2;
        let horizon = 2 + case % 3;
        let kernel = matrix(&mut r, n, n, 0.25);
        let cost: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 3.0).collect();
        let terminal: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let passive = PassiveDynamics::new(kernel, cost, horizon, Some(terminal)).unwrap();
        let (values, _) = kl_value_backward(&passive);

        let grid = simplex_grid(n, 50);
        let oracle = grid_values(&passive, &grid);
        // the grid can only do worse; one step of 1/50 costs at most a few 1e-2 here
        for t in 1..=horizon {
            for s in 0..n {
                let v = values.get(t, s);
                let g = oracle[t - 1][s];
                assert!(v <= g + 1e-10, "case {case}: library {v} above grid {g}");
                assert!(g - v < 0.05, "case {case}: grid gap {}", g - v);
            }
        }

        let law = optimal_control(&passive, &values).unwrap();
        let achieved = evaluate_control(&passive, &law).unwrap();
        for t in 1..=horizon {
            for s in 0..n {
                assert!((achieved.get(t, s) - values.get(t, s)).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn no_control_law_beats_the_tilt() {
    let mut r = rng(12);
    for _ in 0..20 {
        let n = 3;
        let passive = PassiveDynamics::new(matrix(&mut r, n, n, 0.0), vec![0.2, 1.0, 0.5], 4, None).unwrap();
        let (values, _) = kl_value_backward(&passive);
        let law = ControlLaw::new((0..3).map(|_| matrix(&mut r, n, n, 0.0)).collect());
        let other = evaluate_control(&passive, &law).unwrap();
        for s in 0..n {
            assert!(other.get(1, s) >= values.get(1, s) - 1e-12);
        }
    }
}

#[test]
fn stage_decomposition_prices_the_excess_as_kl() {
    let mut r = rng(13);
    for _ in 0..100 {
        let p = dist(&mut r, 4, 0.2);
        let a = {
            let mut a: Vec<f64> = p
                .iter()
                .map(|&q| if q > 0.0 { q * (0.2 + r.random::<f64>()) } else { 0.0 })
                .collect();
            let s: f64 = a.iter().sum();
            a.iter_mut().for_each(|x| *x /= s);
            a
        };
        let next: Vec<f64> = (0..4).map(|_| r.random::<f64>() * 4.0).collect();
        let d = kl_decomposition(&p, &a, 0.7, &next).unwrap();
        assert!((d.stage_value - d.optimal_value - d.excess).abs() < 1e-10);
        assert!(d.excess >= -1e-12);
    }
}

#[test]
fn variational_bound_holds_and_is_tight_at_the_tilt() {
    let mut r = rng(14);
    for _ in 0..300 {
        let n = 2 + r.random_range(0..4);
        let p = dist(&mut r, n, 0.2);
        let a: Vec<f64> = {
            let mut a: Vec<f64> = p
                .iter()
                .map(|&q| if q > 0.0 { r.random::<f64>() + 0.01 } else { 0.0 })
                .collect();
            let s: f64 = a.iter().sum();
            a.iter_mut().for_each(|x| *x /= s);
            a
        };
        let q: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 5.0 - 2.0).collect();
        let rho = -(0.05 + r.random::<f64>() * 5.0);
        let (lhs, rhs) = lemma1_gap(&p, &a, &q, rho).unwrap();
        assert!(rhs - lhs >= -1e-10);

        // A ∝ P e^{ρQ} closes the gap
        let mut tilt: Vec<f64> = p.iter().zip(&q).map(|(&w, &x)| w * (rho * x).exp()).collect();
        let s: f64 = tilt.iter().sum();
        tilt.iter_mut().for_each(|x| *x /= s);
        let (lhs, rhs) = lemma1_gap(&p, &tilt, &q, rho).unwrap();
        assert!((rhs - lhs).abs() <= 1e-9);
    }
}

#[test]
fn performance_target_at_the_kl_optimum_returns_the_tilt() {
    let mut r = rng(15);
    for _ in 0..50 {
        let p = dist(&mut r, 3, 0.0);
        let v: Vec<f64> = (0..3).map(|_| r.random::<f64>() * 2.0).collect();
        let mut star: Vec<f64> = p.iter().zip(&v).map(|(&q, &x)| q * (-x).exp()).collect();
        let z: f64 = star.iter().sum();
        star.iter_mut().for_each(|x| *x /= z);
        let k: f64 = star.iter().zip(&v).map(|(a, x)| a * x).sum();
        let sol = solve_for_performance(&p, &v, k, 1e-12).unwrap();
        for (a, b) in sol.control.iter().zip(&star) {
            assert!((a - b).abs() < 1e-6);
        }
        let sol = solve_for_kl_value(&p, &v, -z.ln(), 1e-12).unwrap();
        assert_eq!(sol.mu, 1.0);
    }
}

#[test]
fn gibbs_entropy_identity() {
    let mut r = rng(16);
    for _ in 0..100 {
        let n = 2 + r.random_range(0..5);
        let costs: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 3.0).collect();
        let lo = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let k = lo + (hi - lo) * (0.1 + 0.8 * r.random::<f64>());
        let sol = saridis_gibbs(&costs, k, 1e-12).unwrap();
        let h = 1.0 + sol.gibbs_lambda() + sol.mu * k;
        assert!((sol.entropy - h).abs() < 1e-8, "{} vs {h}", sol.entropy);
    }
}

#[test]
fn entropy_decomposition_on_random_joints() {
    let mut r = rng(17);
    for _ in 0..100 {
        let (nu, ny) = (1 + r.random_range(0..4), 1 + r.random_range(0..4));
        let flat = dist(&mut r, nu * ny, 0.3);
        let joint: Vec<Vec<f64>> = flat.chunks(ny).map(|c| c.to_vec()).collect();
        let d = entropy_decomposition_check(&joint).unwrap();
        assert!(d.residual.abs() <= 1e-10);
    }
}

#[test]
fn identity_passive_dynamics_only_accrue_state_cost() {
    let passive = PassiveDynamics::new(StochasticMatrix::identity(3), vec![1.0, 2.0, 3.0], 4, None).unwrap();
    let (values, _) = kl_value_backward(&passive);
    for s in 0..3 {
        assert!((values.get(1, s) - 3.0 * (s as f64 + 1.0)).abs() < 1e-12);
    }
}
