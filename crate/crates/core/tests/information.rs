mod common;

use common::{dist, kernel, marginal_entropy, matrix, mdp, rng};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thermo_mdp::info::{
    build_coupled_ensemble, feedback_work_gap, generalized_second_law_gap, info_exchange, CoupledSystem,
};
use thermo_mdp::info_mdp::{
    bayes_update, info_objective, optimize_policy_uncertainty, PolicyProblem, PolicyUncertaintyModel, Solver,
    SolverOptions,
};
use thermo_mdp::mdp::{bellman_backward, enumerate_paths};
use thermo_mdp::thermo::{backward_chain, entropy_production, BackwardMode, EnergyModel};
use thermo_mdp::{ConditionalKernel, FiniteMdp, MarkovChain, StochasticMatrix};

fn random_coupled(r: &mut ChaCha8Rng, nx: usize, nd: usize, horizon: usize) -> CoupledSystem {
    let d_kernels = (1..horizon)
        .map(|k| kernel(r, if k == 1 { 1 } else { nx }, nd, nd, 0.0))
        .collect();
    let x_kernels = (1..horizon).map(|_| kernel(r, nd, nx, nx, 0.0)).collect();
    CoupledSystem::new(dist(r, nd, 0.0), matrix(r, nd, nx, 0.0), d_kernels, x_kernels).unwrap()
}

#[test]
fn generalized_second_law_on_random_demons() {
    let mut r = rng(31);
    for case in 0..120 {
        let (nx, nd) = (2 + case % 2, 2 + (case / 2) % 2);
        let horizon = 2 + case % 3;
        let sys = random_coupled(&mut r, nx, nd, horizon);
        let g = generalized_second_law_gap(&sys, BackwardMode::Reversal, None).unwrap();
        assert!(g.gap >= -1e-9, "case {case}: {}", g.gap);
        assert!((g.ift_joint - 1.0).abs() < 1e-12);
    }
}

#[test]
fn decoupled_demon_exchanges_nothing_and_matches_the_plain_chain() {
    let mut r = rng(32);
    for case in 0..40 {
        let (nx, nd, horizon) = (2 + case % 2, 3, 2 + case % 3);
        // a fixed control schedule: every d_k is a point mass independent of x
        let schedule: Vec<usize> = (0..horizon).map(|_| r.random_range(0..nd)).collect();
        let point = |d: usize| {
            let mut v = vec![0.0; nd];
            v[d] = 1.0;
            v
        };
        let d_kernels: Vec<ConditionalKernel> = (1..horizon)
            .map(|k| {
                ConditionalKernel::broadcast(
                    if k == 1 { 1 } else { nx },
                    &StochasticMatrix::repeat_row(nd, &point(schedule[k])),
                )
            })
            .collect();
        let x_kernels: Vec<ConditionalKernel> = (1..horizon).map(|_| kernel(&mut r, nd, nx, nx, 0.0)).collect();
        let x1 = dist(&mut r, nx, 0.0);
        let sys = CoupledSystem::with_independent_start(x1.clone(), point(schedule[0]), d_kernels, x_kernels.clone())
            .unwrap();
        let g = generalized_second_law_gap(&sys, BackwardMode::Reversal, None).unwrap();
        assert!(g.info.theta.abs() <= 1e-10);

        let chain = MarkovChain::new(
            x1,
            (1..horizon).map(|k| x_kernels[k - 1].matrix(schedule[k - 1])).collect(),
        )
        .unwrap();
        let ens = enumerate_paths(&chain).unwrap();
        let bwd = backward_chain(&chain, BackwardMode::Reversal, None).unwrap();
        let rep = entropy_production(&ens, &chain, &bwd).unwrap();
        assert!((rep.mean_sigma - g.mean_sigma).abs() < 1e-12);
    }
}

#[test]
fn first_transfer_term_needs_no_history() {
    let mut r = rng(33);
    for case in 0..40 {
        let sys = random_coupled(&mut r, 3, 2, 2 + case % 3);
        let info = info_exchange(&build_coupled_ensemble(&sys).unwrap());
        assert!((info.i_tr_per_step[0] - info.i_tr_reduced_per_step[0]).abs() < 1e-12);
        assert!(info
            .i_tr_per_step
            .iter()
            .chain(&info.i_tr_reduced_per_step)
            .all(|&v| v >= -1e-12));
        let total: f64 = info.i_tr_per_step.iter().sum();
        assert!((info.i_tr_total - total).abs() < 1e-12);
    }
}

fn feedback_system(r: &mut ChaCha8Rng) -> (CoupledSystem, EnergyModel) {
    let (nx, nd) = (r.random_range(2..=3), r.random_range(2..=3));
    let horizon = r.random_range(2..=4);
    let table = (0..nx)
        .map(|_| (0..nd).map(|_| r.random_range(-2.0..2.0)).collect())
        .collect();
    let em = EnergyModel::new(table, vec![0; horizon - 1], r.random_range(0.3..3.0)).unwrap();
    let d_kernels = (1..horizon)
        .map(|k| kernel(r, if k == 1 { 1 } else { nx }, nd, nd, 0.0))
        .collect();
    let mut d0 = vec![0.0; nd];
    d0[r.random_range(0..nd)] = 1.0;
    (CoupledSystem::feedback_process(&em, d0, d_kernels).unwrap(), em)
}

#[test]
fn feedback_work_respects_the_measured_bound() {
    let mut r = rng(34);
    for _ in 0..150 {
        let (sys, em) = feedback_system(&mut r);
        let f = feedback_work_gap(&sys, &em).unwrap();
        assert!(f.derived_slack >= -1e-9, "{}", f.derived_slack);
        let g = generalized_second_law_gap(&sys, BackwardMode::DetailedBalance, Some(&em)).unwrap();
        assert!(g.gap >= -1e-9);
        assert!((g.ift_joint - 1.0).abs() < 1e-12);
    }
}

#[test]
fn work_bound_without_the_final_correlation_can_fail() {
    let mut r = rng(1);
    let found = (0..2000).any(|_| {
        let (sys, em) = feedback_system(&mut r);
        feedback_work_gap(&sys, &em).unwrap().literal_slack < -0.1
    });
    assert!(found);
}

/// Two states, two constant rules; the state persists with probability 0.9.
fn tracking(horizon: usize) -> PolicyProblem {
    let mdp = FiniteMdp::new(
        vec![vec![vec![0.9, 0.1]; 2], vec![vec![0.1, 0.9]; 2]],
        vec![
            vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            vec![vec![1.0, 1.0], vec![0.0, 0.0]],
        ],
        horizon,
    )
    .unwrap();
    PolicyProblem::new(mdp, vec![vec![0, 0], vec![1, 1]], vec![0.3, 0.7]).unwrap()
}

#[test]
fn copying_the_state_into_the_rule_matches_hand_enumeration() {
    let p = tracking(3);
    // d_0 uniform, d_1 uniform (it sees only the buffer), d_2 = s_1
    let copy = ConditionalKernel::new(vec![
        vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        vec![vec![0.0, 1.0], vec![0.0, 1.0]],
    ])
    .unwrap();
    let nu = vec![ConditionalKernel::broadcast(1, &StochasticMatrix::uniform(2, 2)), copy];
    let model = PolicyUncertaintyModel::new(&p, vec![0.5, 0.5], nu, 2.0).unwrap();
    let report = info_objective(&p, &model, false).unwrap();

    // all 64 joint outcomes (s1, s2, s3, d0, d1, d2)
    let t = |s: usize, d: usize, n: usize| p.step_row(s, d)[n];
    let mut rows = Vec::new();
    let mut cost = 0.0;
    for code in 0..64usize {
        let b: Vec<usize> = (0..6).map(|i| (code >> i) & 1).collect();
        let (s1, s2, s3, d0, d1, d2) = (b[0], b[1], b[2], b[3], b[4], b[5]);
        let pr = p.initial_state()[s1] * 0.5 * 0.5 * t(s1, d0, s2) * if d2 == s1 { 1.0 } else { 0.0 } * t(s2, d1, s3);
        cost += pr * (p.stage_cost(s1, d0) + p.stage_cost(s2, d1));
        rows.push((b, pr));
    }
    // I(d2; s1 | d1) = H(s1|d1) because d2 copies s1
    let h_s1_given_d1 = marginal_entropy(&rows, &[0, 4]) - marginal_entropy(&rows, &[4]);
    assert!((report.transfer_terms[1] - h_s1_given_d1).abs() < 1e-12);
    assert!((report.transfer_terms_reduced[1] - h_s1_given_d1).abs() < 1e-12);
    assert_eq!(report.transfer_terms[0], 0.0);
    assert!((report.expected_cost - cost).abs() < 1e-12);
    let i_fin =
        marginal_entropy(&rows, &[2]) + marginal_entropy(&rows, &[3, 4, 5]) - marginal_entropy(&rows, &[2, 3, 4, 5]);
    assert!((report.final_term - i_fin).abs() < 1e-12);
    let objective = cost - h_s1_given_d1 / 2.0 + i_fin / 2.0;
    assert!((report.objective - objective).abs() < 1e-12);
}

#[test]
fn objective_decomposition_and_nonnegativity_for_random_models() {
    let mut r = rng(35);
    for case in 0..40 {
        let horizon = 2 + case % 4;
        let m = mdp(&mut r, 2, 2, horizon);
        let p = PolicyProblem::all_deterministic(m, case % 2).unwrap();
        let k = p.n_policies();
        let nu = (1..horizon)
            .map(|t| kernel(&mut r, if t == 1 { 1 } else { 2 }, k, k, 0.3))
            .collect();
        let beta = 0.2 + r.random::<f64>() * 5.0;
        let model = PolicyUncertaintyModel::new(&p, dist(&mut r, k, 0.3), nu, beta).unwrap();
        let rep = info_objective(&p, &model, false).unwrap();
        let sys = model.to_coupled(&p).unwrap();
        let info = info_exchange(&build_coupled_ensemble(&sys).unwrap());
        assert!(info.i_ini.abs() < 1e-12);
        assert!((rep.objective - (rep.expected_cost + info.theta / beta)).abs() < 1e-10);
        let transfer: f64 = rep.transfer_terms.iter().sum();
        assert!((rep.objective - (rep.expected_cost - (transfer - rep.final_term) / beta)).abs() < 1e-10);
        assert!(rep
            .transfer_terms
            .iter()
            .chain(&rep.transfer_terms_reduced)
            .all(|&v| v >= -1e-10));
    }
}

#[test]
fn large_beta_recovers_the_bellman_value_on_random_mdps() {
    let mut r = rng(36);
    for case in 0..20 {
        let horizon = 2 + case % 4;
        let m = mdp(&mut r, 2, 2, horizon);
        let start = case % 2;
        let (values, _) = bellman_backward(&m, None).unwrap();
        let p = PolicyProblem::all_deterministic(m, start).unwrap();
        let out = optimize_policy_uncertainty(&p, 1e8, &SolverOptions::default()).unwrap();
        assert!((out.report.expected_cost - values.get(1, start)).abs() <= 1e-6);
    }
}

#[test]
fn two_step_problems_match_the_fine_grid() {
    let mut r = rng(37);
    for _ in 0..20 {
        let m = mdp(&mut r, 2, 2, 2);
        let p = PolicyProblem::new(m, vec![vec![0, 1], vec![1, 0]], dist(&mut r, 2, 0.0)).unwrap();
        let alt = optimize_policy_uncertainty(&p, 1.0, &SolverOptions::default()).unwrap();
        let grid = optimize_policy_uncertainty(
            &p,
            1.0,
            &SolverOptions {
                solver: Solver::BruteForce,
                grid_divisions: 100,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        let (a, g) = (alt.report.regularized_objective, grid.report.regularized_objective);
        assert!(a <= g + 1e-12 && g - a <= 1e-3, "{a} vs {g}");
    }
}

#[test]
fn bayes_update_arithmetic() {
    let a = FiniteMdp::new(
        vec![vec![vec![0.2, 0.8]], vec![vec![0.5, 0.5]]],
        vec![vec![vec![0.0; 2]]; 2],
        2,
    )
    .unwrap();
    let b = FiniteMdp::new(
        vec![vec![vec![0.8, 0.2]], vec![vec![0.5, 0.5]]],
        vec![vec![vec![0.0; 2]]; 2],
        2,
    )
    .unwrap();
    let post = bayes_update(&[0.5, 0.5], &[a.clone(), b.clone()], 0, 0, 1).unwrap();
    assert!((post[0] - 0.8).abs() < 1e-12 && (post[1] - 0.2).abs() < 1e-12);
    assert_eq!(bayes_update(&[1.0], &[a], 0, 0, 1).unwrap(), vec![1.0]);
}
