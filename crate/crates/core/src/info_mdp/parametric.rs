//! Parametric model uncertainty: the decision maker's variable is the index of the
//! true model `λ ∈ Λ`, drawn once from the prior and held for the whole episode.

use alloc::vec;
use alloc::vec::Vec;

use super::objective::InfoObjectiveReport;
use crate::info::{build_coupled_ensemble_capped, info_exchange, CoupledSystem};
use crate::math::{check_distribution, ConditionalKernel, StochasticMatrix, STOCHASTIC_TOL};
use crate::mdp::{FiniteMdp, DEFAULT_PATH_CAP};
use crate::{Error, Result};

/// A finite family of MDPs sharing states, actions and horizon, with a prior over
/// the family and a (model-blind) randomized rule per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricBelief {
    models: Vec<FiniteMdp>,
    prior: Vec<f64>,
    /// `rules[k−1][s][a]`, the rule acting at `s_k`.
    rules: Vec<Vec<Vec<f64>>>,
    initial_state: Vec<f64>,
}

impl ParametricBelief {
    pub fn new(
        models: Vec<FiniteMdp>,
        prior: Vec<f64>,
        rules: Vec<Vec<Vec<f64>>>,
        initial_state: Vec<f64>,
    ) -> Result<Self> {
        let first = models.first().ok_or(Error::EmptySet("parameter"))?;
        let (n, a, horizon) = (first.n_states(), first.n_actions(), first.horizon());
        for mdp in &models {
            if mdp.n_states() != n || mdp.n_actions() != a {
                return Err(Error::DimensionMismatch {
                    what: "parameter model",
                    expected: n * a,
                    found: mdp.n_states() * mdp.n_actions(),
                });
            }
            if mdp.horizon() != horizon {
                return Err(Error::HorizonMismatch {
                    expected: horizon,
                    found: mdp.horizon(),
                });
            }
        }
        check_distribution(&prior)?;
        if prior.len() != models.len() {
            return Err(Error::DimensionMismatch {
                what: "prior",
                expected: models.len(),
                found: prior.len(),
            });
        }
        check_distribution(&initial_state)?;
        if initial_state.len() != n {
            return Err(Error::DimensionMismatch {
                what: "initial state distribution",
                expected: n,
                found: initial_state.len(),
            });
        }
        if rules.len() != horizon - 1 {
            return Err(Error::HorizonMismatch {
                expected: horizon - 1,
                found: rules.len(),
            });
        }
        for (k, rule) in rules.iter().enumerate() {
            if rule.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "rule states",
                    expected: n,
                    found: rule.len(),
                });
            }
            for (s, row) in rule.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.len() != a || row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::UnnormalizedRule {
                        time: k + 1,
                        state: s,
                        sum,
                    });
                }
            }
        }
        Ok(Self {
            models,
            prior,
            rules,
            initial_state,
        })
    }

    /// Same deterministic rule `actions[s]` at every step.
    pub fn stationary(
        models: Vec<FiniteMdp>,
        prior: Vec<f64>,
        actions: &[usize],
        initial_state: Vec<f64>,
    ) -> Result<Self> {
        let first = models.first().ok_or(Error::EmptySet("parameter"))?;
        let (a, horizon) = (first.n_actions(), first.horizon());
        let mut rule = Vec::with_capacity(actions.len());
        for (s, &act) in actions.iter().enumerate() {
            if act >= a {
                return Err(Error::InvalidAction {
                    time: 1,
                    state: s,
                    action: act,
                });
            }
            let mut row = vec![0.0; a];
            row[act] = 1.0;
            rule.push(row);
        }
        Self::new(models, prior, vec![rule; horizon - 1], initial_state)
    }

    pub fn models(&self) -> &[FiniteMdp] {
        &self.models
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn rules(&self) -> &[Vec<Vec<f64>>] {
        &self.rules
    }

    pub fn horizon(&self) -> usize {
        self.models[0].horizon()
    }

    /// `K_λ,k(s′ | s) = Σ_a rule_k(a | s) T_λ(s′ | s, a)`.
    pub fn state_kernel(&self, k: usize, lambda: usize, s: usize) -> Vec<f64> {
        let mdp = &self.models[lambda];
        let mut out = vec![0.0; mdp.n_states()];
        for (a, &pa) in self.rules[k - 1][s].iter().enumerate() {
            if pa > 0.0 {
                for (o, &p) in out.iter_mut().zip(mdp.transition_row(s, a)) {
                    *o += pa * p;
                }
            }
        }
        out
    }

    /// Coupled process with `d_k = λ` for every `k`.
    pub fn to_coupled(&self) -> Result<CoupledSystem> {
        let n = self.models[0].n_states();
        let l = self.models.len();
        let steps = self.horizon() - 1;
        let id = StochasticMatrix::identity(l);
        let d_kernels = (1..=steps)
            .map(|k| ConditionalKernel::broadcast(if k == 1 { 1 } else { n }, &id))
            .collect();
        let x_kernels = (1..=steps)
            .map(|k| {
                let mut data = Vec::with_capacity(l * n * n);
                for lambda in 0..l {
                    for s in 0..n {
                        data.extend(self.state_kernel(k, lambda, s));
                    }
                }
                ConditionalKernel::from_normalized(l, n, n, data)
            })
            .collect();
        CoupledSystem::with_independent_start(self.initial_state.clone(), self.prior.clone(), d_kernels, x_kernels)
    }

    /// Posterior over `Λ` after observing the state sequence `s_1, …, s_k`.
    pub fn posterior(&self, states: &[usize]) -> Result<Vec<f64>> {
        let mut belief = self.prior.clone();
        for (k, w) in states.windows(2).enumerate() {
            let mut total = 0.0;
            for (lambda, b) in belief.iter_mut().enumerate() {
                *b *= self.state_kernel(k + 1, lambda, w[0])[w[1]];
                total += *b;
            }
            if !(total > 0.0) {
                return Err(Error::ZeroLikelihoodEverywhere);
            }
            belief.iter_mut().for_each(|b| *b /= total);
        }
        Ok(belief)
    }
}

/// One Bayes step on the observation `(s, a, s′)`.
pub fn bayes_update(belief: &[f64], models: &[FiniteMdp], s: usize, a: usize, next: usize) -> Result<Vec<f64>> {
    check_distribution(belief)?;
    if belief.len() != models.len() {
        return Err(Error::DimensionMismatch {
            what: "belief",
            expected: models.len(),
            found: belief.len(),
        });
    }
    let mut out: Vec<f64> = belief
        .iter()
        .zip(models)
        .map(|(&b, mdp)| b * mdp.transition_row(s, a)[next])
        .collect();
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroLikelihoodEverywhere);
    }
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Cost and information report of a parametric belief at inverse temperature `beta`.
pub fn parametric_info_objective(
    belief: &ParametricBelief,
    beta: f64,
    include_final_term: bool,
) -> Result<InfoObjectiveReport> {
    parametric_info_objective_capped(belief, beta, include_final_term, DEFAULT_PATH_CAP)
}

pub fn parametric_info_objective_capped(
    belief: &ParametricBelief,
    beta: f64,
    include_final_term: bool,
    cap: u64,
) -> Result<InfoObjectiveReport> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive"));
    }
    let sys = belief.to_coupled()?;
    let ens = build_coupled_ensemble_capped(&sys, cap)?;
    let n = ens.horizon();
    let mut acc = crate::math::NeumaierSum::default();
    for (o, &p) in ens.table().outcomes().iter().zip(ens.table().probs()) {
        let lambda = o[n];
        let mdp = &belief.models[lambda];
        for k in 1..n {
            let s = o[k - 1];
            for (a, &pa) in belief.rules[k - 1][s].iter().enumerate() {
                if pa > 0.0 {
                    acc.add(p * pa * mdp.expected_stage_cost(s, a));
                }
            }
        }
    }
    Ok(InfoObjectiveReport::assemble(
        acc.value(),
        info_exchange(&ens),
        beta,
        include_final_term,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::JointTable;

    fn model(stay: f64, horizon: usize) -> FiniteMdp {
        FiniteMdp::new(
            vec![
                vec![vec![stay, 1.0 - stay], vec![1.0 - stay, stay]],
                vec![vec![1.0 - stay, stay], vec![stay, 1.0 - stay]],
            ],
            vec![vec![vec![0.0, 1.0]; 2]; 2],
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn bayes_chain_matches_enumerated_posterior() {
        let models = vec![model(0.9, 4), model(0.3, 4), model(0.6, 4)];
        let b = ParametricBelief::stationary(models.clone(), vec![0.5, 0.3, 0.2], &[0, 1], vec![0.7, 0.3]).unwrap();
        let ens = build_coupled_ensemble_capped(&b.to_coupled().unwrap(), 1_000_000).unwrap();
        let n = ens.horizon();
        for path in [[0, 0, 1, 1], [1, 0, 0, 1], [0, 1, 1, 0]] {
            // enumerated p(λ | s_1..s_4)
            let mut joint = [0.0; 3];
            for (o, &p) in ens.table().outcomes().iter().zip(ens.table().probs()) {
                if o[..n] == path[..] {
                    joint[o[n]] += p;
                }
            }
            let z: f64 = joint.iter().sum();
            let mut chain = b.prior().to_vec();
            for w in path.windows(2) {
                let a = if w[0] == 0 { 0 } else { 1 };
                chain = bayes_update(&chain, &models, w[0], a, w[1]).unwrap();
            }
            let via_kernel = b.posterior(&path).unwrap();
            for l in 0..3 {
                assert!((chain[l] - joint[l] / z).abs() < 1e-12);
                assert!((via_kernel[l] - chain[l]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn impossible_observation_is_rejected() {
        let models = vec![model(1.0, 2), model(1.0, 2)];
        assert!(matches!(
            bayes_update(&[0.5, 0.5], &models, 0, 0, 1),
            Err(Error::ZeroLikelihoodEverywhere)
        ));
    }

    #[test]
    fn indistinguishable_models_carry_no_information() {
        let b = ParametricBelief::stationary(
            vec![model(0.8, 4), model(0.8, 4)],
            vec![0.4, 0.6],
            &[0, 1],
            vec![1.0, 0.0],
        )
        .unwrap();
        let r = parametric_info_objective(&b, 1.0, true).unwrap();
        assert!(r.final_term.abs() <= 1e-10);
        assert!(r.transfer_terms.iter().all(|v| v.abs() <= 1e-10));
        assert!(r.initial_term.abs() <= 1e-10);
    }

    #[test]
    fn single_model_has_zero_terms() {
        let b = ParametricBelief::stationary(vec![model(0.7, 3)], vec![1.0], &[1, 0], vec![0.5, 0.5]).unwrap();
        let r = parametric_info_objective(&b, 2.0, false).unwrap();
        assert!(r.final_term.abs() < 1e-12);
        assert!(r.transfer_terms.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn distinguishable_models_reveal_the_index() {
        let b = ParametricBelief::stationary(
            vec![model(1.0, 2), model(0.0, 2)],
            vec![0.5, 0.5],
            &[0, 0],
            vec![1.0, 0.0],
        )
        .unwrap();
        let r = parametric_info_objective(&b, 1.0, false).unwrap();
        assert!((r.final_term - core::f64::consts::LN_2).abs() < 1e-12);
        // cost: landing in state 1 costs 1, which only the second model does
        assert!((r.expected_cost - 0.5).abs() < 1e-12);
        let t = JointTable::new(vec![vec![0], vec![1]], vec![0.5, 0.5]).unwrap();
        assert!((t.entropy(&[0]) - r.final_term).abs() < 1e-12);
    }
}
