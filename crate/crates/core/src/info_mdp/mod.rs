//! Information-regularized policy optimization on uncertain MDPs.
//!
//! The decision maker's state is an index into a finite set of decision rules
//! `Π`. Lowered onto the coupled process of [`crate::info`] with `x = s` and
//! `d = π`:
//!
//! * `d_0 ~ ν_0`, `d_k ~ ν_k(· | s_{k−1}, d_{k−1})` for `k = 1..N−1` (`s_0` is a buffer);
//! * the rule acting at `s_k` is `d_{k−1}`, so `s_{k+1} ~ T(· | s_k, d_{k−1}(s_k))`.
//!
//! [`info_objective`] reports the expected cost, the transfer and final
//! information terms, and `objective = E[c] + β^{−1}Θ`. The solvers minimize
//! the penalized form `E[c] + β^{−1} Σ_k I(d_k; s_{k−1} | d_{k−1})`, optionally
//! plus `β^{−1} I_fin`.

mod objective;
mod parametric;
mod solver;

pub use objective::{
    evaluate_regularized, info_objective, info_objective_capped, InfoObjectiveReport, RegularizedValue,
};
pub use parametric::{bayes_update, parametric_info_objective, parametric_info_objective_capped, ParametricBelief};
pub use solver::{
    calibrate_beta, maxent_info_program, optimize_policy_uncertainty, CalibrationOptions, MaxEntInfoSolution,
    SolveOutcome, Solver, SolverOptions,
};

use alloc::vec;
use alloc::vec::Vec;

use crate::info::CoupledSystem;
use crate::math::{check_distribution, ConditionalKernel, StochasticMatrix, STOCHASTIC_TOL};
use crate::mdp::{power_count, FiniteMdp};
use crate::{Error, Result};

/// Largest `|A|^|S|` for which every deterministic rule is generated.
pub const MAX_DETERMINISTIC_POLICIES: u64 = 64;

/// Every deterministic stationary rule `S → A`, in lexicographic order.
pub fn all_deterministic_policies(mdp: &FiniteMdp) -> Result<Vec<Vec<usize>>> {
    let (s, a) = (mdp.n_states(), mdp.n_actions());
    let count = power_count(a, s);
    if count > MAX_DETERMINISTIC_POLICIES as u128 {
        return Err(Error::EnumerationCapExceeded {
            required: count,
            cap: MAX_DETERMINISTIC_POLICIES,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut rule = vec![0usize; s];
    loop {
        out.push(rule.clone());
        let mut i = s;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            rule[i] += 1;
            if rule[i] < a {
                break;
            }
            rule[i] = 0;
        }
    }
}

/// The fixed ingredients of an information-regularized problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyProblem {
    mdp: FiniteMdp,
    policies: Vec<Vec<usize>>,
    initial_state: Vec<f64>,
    initial_policy: Option<Vec<f64>>,
}

impl PolicyProblem {
    pub fn new(mdp: FiniteMdp, policies: Vec<Vec<usize>>, initial_state: Vec<f64>) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::EmptySet("policy"));
        }
        for p in &policies {
            if p.len() != mdp.n_states() {
                return Err(Error::DimensionMismatch {
                    what: "policy",
                    expected: mdp.n_states(),
                    found: p.len(),
                });
            }
            if let Some((s, &a)) = p.iter().enumerate().find(|(_, &a)| a >= mdp.n_actions()) {
                return Err(Error::InvalidAction {
                    time: 0,
                    state: s,
                    action: a,
                });
            }
        }
        check_distribution(&initial_state)?;
        if initial_state.len() != mdp.n_states() {
            return Err(Error::DimensionMismatch {
                what: "initial state distribution",
                expected: mdp.n_states(),
                found: initial_state.len(),
            });
        }
        Ok(Self {
            mdp,
            policies,
            initial_state,
            initial_policy: None,
        })
    }

    /// Problem over every deterministic rule, started from `start`.
    pub fn all_deterministic(mdp: FiniteMdp, start: usize) -> Result<Self> {
        let policies = all_deterministic_policies(&mdp)?;
        let initial = point_mass(mdp.n_states(), start)?;
        Self::new(mdp, policies, initial)
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn policies(&self) -> &[Vec<usize>] {
        &self.policies
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    pub fn n_policies(&self) -> usize {
        self.policies.len()
    }

    /// Same problem started from another state distribution.
    pub fn with_initial_state(&self, initial_state: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(self.mdp.clone(), self.policies.clone(), initial_state)?;
        out.initial_policy = self.initial_policy.clone();
        Ok(out)
    }

    /// Holds the law of `d_0` fixed instead of optimizing it.
    pub fn with_initial_policy(mut self, dist: Vec<f64>) -> Result<Self> {
        check_distribution(&dist)?;
        if dist.len() != self.n_policies() {
            return Err(Error::DimensionMismatch {
                what: "initial policy distribution",
                expected: self.n_policies(),
                found: dist.len(),
            });
        }
        self.initial_policy = Some(dist);
        Ok(self)
    }

    pub fn initial_policy(&self) -> Option<&[f64]> {
        self.initial_policy.as_deref()
    }

    /// `c(s, π) = Σ_{s′} T(s′|s, π(s)) R(s′|s, π(s))`.
    pub fn stage_cost(&self, s: usize, policy: usize) -> f64 {
        self.mdp.expected_stage_cost(s, self.policies[policy][s])
    }

    /// `T(· | s, π(s))`.
    pub fn step_row(&self, s: usize, policy: usize) -> &[f64] {
        self.mdp.transition_row(s, self.policies[policy][s])
    }

    /// System kernel with one context per policy.
    pub(crate) fn system_kernel(&self) -> ConditionalKernel {
        let n = self.mdp.n_states();
        let mut data = Vec::with_capacity(self.n_policies() * n * n);
        for d in 0..self.n_policies() {
            for s in 0..n {
                data.extend_from_slice(self.step_row(s, d));
            }
        }
        ConditionalKernel::from_normalized(self.n_policies(), n, n, data)
    }
}

pub(crate) fn point_mass(n: usize, i: usize) -> Result<Vec<f64>> {
    if i >= n {
        return Err(Error::DimensionMismatch {
            what: "state index",
            expected: n,
            found: i,
        });
    }
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    Ok(v)
}

/// Decision-maker kernels `ν_0 … ν_{N−1}` and the temperature they were solved at.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyUncertaintyModel {
    nu0: Vec<f64>,
    nu: Vec<ConditionalKernel>,
    beta: f64,
}

impl PolicyUncertaintyModel {
    /// `nu[k−1]` is `ν_k` with contexts `s_{k−1}`; `ν_1` has a single (buffer) context.
    /// `beta` may be `+∞`, which switches the information terms off.
    pub fn new(problem: &PolicyProblem, nu0: Vec<f64>, nu: Vec<ConditionalKernel>, beta: f64) -> Result<Self> {
        let m = problem.n_policies();
        let n = problem.mdp().n_states();
        check_distribution(&nu0)?;
        if nu0.len() != m {
            return Err(Error::DimensionMismatch {
                what: "initial policy distribution",
                expected: m,
                found: nu0.len(),
            });
        }
        let steps = problem.mdp().horizon() - 1;
        if nu.len() != steps {
            return Err(Error::HorizonMismatch {
                expected: steps,
                found: nu.len(),
            });
        }
        for (i, k) in nu.iter().enumerate() {
            let contexts = if i == 0 { 1 } else { n };
            if k.contexts() != contexts || k.from_size() != m || k.to_size() != m {
                return Err(Error::DimensionMismatch {
                    what: "policy kernel",
                    expected: contexts * m * m,
                    found: k.contexts() * k.from_size() * k.to_size(),
                });
            }
        }
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter("beta must be positive"));
        }
        Ok(Self { nu0, nu, beta })
    }

    /// Uniform `ν` at every step.
    pub fn uniform(problem: &PolicyProblem, beta: f64) -> Result<Self> {
        let m = problem.n_policies();
        let n = problem.mdp().n_states();
        let u = StochasticMatrix::uniform(m, m);
        let nu = (1..problem.mdp().horizon())
            .map(|k| ConditionalKernel::broadcast(if k == 1 { 1 } else { n }, &u))
            .collect();
        let nu0 = match problem.initial_policy() {
            Some(d) => d.to_vec(),
            None => vec![1.0 / m as f64; m],
        };
        Self::new(problem, nu0, nu, beta)
    }

    /// Open-loop model that plays `schedule[k]` as `d_k` for `k = 0..N−1`.
    pub fn open_loop(problem: &PolicyProblem, schedule: &[usize], beta: f64) -> Result<Self> {
        let m = problem.n_policies();
        let n = problem.mdp().n_states();
        let steps = problem.mdp().horizon() - 1;
        if schedule.len() != steps + 1 {
            return Err(Error::LengthMismatch {
                expected: steps + 1,
                found: schedule.len(),
            });
        }
        if let Some(&bad) = schedule.iter().find(|&&d| d >= m) {
            return Err(Error::DimensionMismatch {
                what: "policy index",
                expected: m,
                found: bad,
            });
        }
        let nu = (1..=steps)
            .map(|k| {
                let row = point_mass(m, schedule[k]).expect("checked");
                ConditionalKernel::broadcast(if k == 1 { 1 } else { n }, &StochasticMatrix::repeat_row(m, &row))
            })
            .collect();
        Self::new(problem, point_mass(m, schedule[0])?, nu, beta)
    }

    pub fn nu0(&self) -> &[f64] {
        &self.nu0
    }

    pub fn nu(&self) -> &[ConditionalKernel] {
        &self.nu
    }

    /// `ν_k(· | s_{k−1}, d_{k−1})`; `s_prev` is ignored at `k = 1`.
    pub fn nu_row(&self, k: usize, s_prev: usize, d_prev: usize) -> &[f64] {
        let ctx = if k == 1 { 0 } else { s_prev };
        self.nu[k - 1].row(ctx, d_prev)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `β^{−1}`, zero at `β = +∞`.
    pub fn temperature(&self) -> f64 {
        if self.beta == f64::INFINITY {
            0.0
        } else {
            1.0 / self.beta
        }
    }

    pub(crate) fn nu0_mut(&mut self) -> &mut Vec<f64> {
        &mut self.nu0
    }

    pub(crate) fn nu_mut(&mut self) -> &mut [ConditionalKernel] {
        &mut self.nu
    }

    /// The coupled process with `x = s` and `d = π`.
    pub fn to_coupled(&self, problem: &PolicyProblem) -> Result<CoupledSystem> {
        let steps = problem.mdp().horizon() - 1;
        CoupledSystem::with_independent_start(
            problem.initial_state().to_vec(),
            self.nu0.clone(),
            self.nu.clone(),
            vec![problem.system_kernel(); steps],
        )
    }

    /// Largest deviation of any `ν` row from normalization.
    pub fn max_row_error(&self) -> f64 {
        let mut worst = (self.nu0.iter().sum::<f64>() - 1.0).abs();
        for k in &self.nu {
            for c in 0..k.contexts() {
                for i in 0..k.from_size() {
                    worst = worst.max((k.row(c, i).iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
        worst
    }

    pub(crate) fn is_normalized(&self) -> bool {
        self.max_row_error() <= STOCHASTIC_TOL
    }
}
