use alloc::vec;
use alloc::vec::Vec;

use super::{PolicyProblem, PolicyUncertaintyModel};
use crate::info::{build_coupled_ensemble_capped, info_exchange, CoupledEnsemble, InfoExchangeReport};
use crate::math::{self, NeumaierSum};
use crate::mdp::DEFAULT_PATH_CAP;
use crate::Result;

/// Cost and information accounting of a policy-uncertainty model.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoObjectiveReport {
    /// `Σ_{k=1}^{N−1} E[c(s_k, d_{k−1})]`.
    pub expected_cost: f64,
    /// `I(d_k; s_{k−1} | d_0, …, d_{k−1})` for `k = 1..N−1`.
    pub transfer_terms: Vec<f64>,
    /// `I(d_k; s_{k−1} | d_{k−1})` for `k = 1..N−1`.
    pub transfer_terms_reduced: Vec<f64>,
    /// `I(s_N; d_0, …, d_{N−1})`.
    pub final_term: f64,
    /// `I(s_1; d_0)`.
    pub initial_term: f64,
    /// `I_fin − I_tr − I_ini`.
    pub theta: f64,
    pub beta: f64,
    /// `E[c] + β^{−1}Θ`.
    pub objective: f64,
    /// `E[c] + β^{−1} Σ_k I(d_k; s_{k−1} | d_{k−1})`, plus `β^{−1} I_fin` when included.
    pub regularized_objective: f64,
    pub include_final_term: bool,
}

impl InfoObjectiveReport {
    pub(crate) fn assemble(expected_cost: f64, info: InfoExchangeReport, beta: f64, include_final_term: bool) -> Self {
        let temperature = if beta == f64::INFINITY { 0.0 } else { 1.0 / beta };
        let reduced = math::stable_sum(info.i_tr_reduced_per_step.iter().copied());
        let mut regularized = expected_cost + temperature * reduced;
        if include_final_term {
            regularized += temperature * info.i_fin;
        }
        Self {
            expected_cost,
            objective: expected_cost + temperature * info.theta,
            regularized_objective: regularized,
            transfer_terms: info.i_tr_per_step,
            transfer_terms_reduced: info.i_tr_reduced_per_step,
            final_term: info.i_fin,
            initial_term: info.i_ini,
            theta: info.theta,
            beta,
            include_final_term,
        }
    }
}

/// Exact report by enumerating the coupled process under the default cap.
pub fn info_objective(
    problem: &PolicyProblem,
    model: &PolicyUncertaintyModel,
    include_final_term: bool,
) -> Result<InfoObjectiveReport> {
    info_objective_capped(problem, model, include_final_term, DEFAULT_PATH_CAP)
}

/// Exact report, refusing when `(|S|·|Π|)^N > cap`.
pub fn info_objective_capped(
    problem: &PolicyProblem,
    model: &PolicyUncertaintyModel,
    include_final_term: bool,
    cap: u64,
) -> Result<InfoObjectiveReport> {
    let sys = model.to_coupled(problem)?;
    let ens = build_coupled_ensemble_capped(&sys, cap)?;
    let cost = ensemble_cost(&ens, |_, x, d| problem.stage_cost(x, d));
    Ok(InfoObjectiveReport::assemble(
        cost,
        info_exchange(&ens),
        model.beta(),
        include_final_term,
    ))
}

/// `Σ_paths p Σ_{k=1}^{N−1} c(k, x_k, d_{k−1})`.
pub(crate) fn ensemble_cost<F>(ens: &CoupledEnsemble, cost: F) -> f64
where
    F: Fn(usize, usize, usize) -> f64,
{
    let n = ens.horizon();
    let mut acc = NeumaierSum::default();
    for (o, &p) in ens.table().outcomes().iter().zip(ens.table().probs()) {
        for k in 1..n {
            acc.add(p * cost(k, o[k - 1], o[n + k - 1]));
        }
    }
    acc.value()
}

/// Expected cost and reduced transfer terms from a forward pass, without enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedValue {
    pub expected_cost: f64,
    /// `I(d_k; s_{k−1} | d_{k−1})` for `k = 1..N−1`; the first entry is zero.
    pub transfer_terms_reduced: Vec<f64>,
    /// `E[c] + β^{−1} Σ_k` of the reduced terms.
    pub value: f64,
}

/// Forward pass over `(s_{t−1}, s_t, d_{t−1})`; cost is linear in the horizon.
pub fn evaluate_regularized(problem: &PolicyProblem, model: &PolicyUncertaintyModel) -> RegularizedValue {
    Forward::run(problem, model).value(problem, model)
}

/// Slot laws `ρ_t(s_{t−1}, s_t, d_{t−1})` for `t = 1..N`; `s_0` is the buffer index `n`.
pub(crate) struct Forward {
    pub n: usize,
    pub m: usize,
    /// `rho[t − 1]`.
    pub rho: Vec<Vec<f64>>,
}

impl Forward {
    #[inline]
    pub fn idx(&self, xp: usize, x: usize, d: usize) -> usize {
        (xp * self.n + x) * self.m + d
    }

    pub fn run(problem: &PolicyProblem, model: &PolicyUncertaintyModel) -> Self {
        let n = problem.mdp().n_states();
        let m = problem.n_policies();
        let horizon = problem.mdp().horizon();
        let size = (n + 1) * n * m;
        let mut fwd = Forward {
            n,
            m,
            rho: Vec::with_capacity(horizon),
        };
        let mut first = vec![0.0; size];
        for (x, &px) in problem.initial_state().iter().enumerate() {
            for (d, &pd) in model.nu0().iter().enumerate() {
                first[fwd.idx(n, x, d)] = px * pd;
            }
        }
        fwd.rho.push(first);
        for t in 1..horizon {
            let mut next = vec![0.0; size];
            let cur = &fwd.rho[t - 1];
            for xp in 0..=n {
                for x in 0..n {
                    for dp in 0..m {
                        let w = cur[fwd.idx(xp, x, dp)];
                        if w <= 0.0 {
                            continue;
                        }
                        let nu = model.nu_row(t, xp, dp);
                        let step = problem.step_row(x, dp);
                        for (d, &pd) in nu.iter().enumerate() {
                            if pd <= 0.0 {
                                continue;
                            }
                            for (xn, &px) in step.iter().enumerate() {
                                if px > 0.0 {
                                    next[fwd.idx(x, xn, d)] += w * pd * px;
                                }
                            }
                        }
                    }
                }
            }
            fwd.rho.push(next);
        }
        fwd
    }

    /// Mass of the `ν_t` context `(s_{t−1}, d_{t−1})`.
    pub fn context_mass(&self, t: usize, xp: usize, dp: usize) -> f64 {
        let rho = &self.rho[t - 1];
        (0..self.n).map(|x| rho[self.idx(xp, x, dp)]).sum()
    }

    /// `m_t(d | d_{t−1})` induced by `ν_t` on the current slot law; uniform off the support.
    pub fn policy_marginal(&self, model: &PolicyUncertaintyModel, t: usize) -> Vec<Vec<f64>> {
        let m = self.m;
        let mut out = vec![vec![0.0; m]; m];
        let contexts: Vec<usize> = if t == 1 { vec![self.n] } else { (0..self.n).collect() };
        for (dp, row) in out.iter_mut().enumerate() {
            let mut total = 0.0;
            for &xp in &contexts {
                let w = self.context_mass(t, xp, dp);
                if w <= 0.0 {
                    continue;
                }
                total += w;
                for (d, &p) in model.nu_row(t, xp, dp).iter().enumerate() {
                    row[d] += w * p;
                }
            }
            if total > 0.0 {
                row.iter_mut().for_each(|v| *v /= total);
            } else {
                row.iter_mut().for_each(|v| *v = 1.0 / m as f64);
            }
        }
        out
    }

    /// `I(d_t; s_{t−1} | d_{t−1})`.
    pub fn reduced_transfer(&self, model: &PolicyUncertaintyModel, t: usize) -> f64 {
        if t == 1 {
            return 0.0;
        }
        let marg = self.policy_marginal(model, t);
        let mut acc = NeumaierSum::default();
        for xp in 0..self.n {
            for dp in 0..self.m {
                let w = self.context_mass(t, xp, dp);
                if w <= 0.0 {
                    continue;
                }
                for (d, &p) in model.nu_row(t, xp, dp).iter().enumerate() {
                    if p > 0.0 {
                        acc.add(w * p * math::ln(p / marg[dp][d]));
                    }
                }
            }
        }
        acc.value().max(0.0)
    }

    pub fn expected_cost(&self, problem: &PolicyProblem) -> f64 {
        let mut acc = NeumaierSum::default();
        for rho in &self.rho[..self.rho.len() - 1] {
            for xp in 0..=self.n {
                for x in 0..self.n {
                    for d in 0..self.m {
                        let w = rho[self.idx(xp, x, d)];
                        if w > 0.0 {
                            acc.add(w * problem.stage_cost(x, d));
                        }
                    }
                }
            }
        }
        acc.value()
    }

    pub fn value(&self, problem: &PolicyProblem, model: &PolicyUncertaintyModel) -> RegularizedValue {
        let horizon = self.rho.len();
        let transfer: Vec<f64> = (1..horizon).map(|t| self.reduced_transfer(model, t)).collect();
        let expected_cost = self.expected_cost(problem);
        let value = expected_cost + model.temperature() * math::stable_sum(transfer.iter().copied());
        RegularizedValue {
            expected_cost,
            transfer_terms_reduced: transfer,
            value,
        }
    }
}
