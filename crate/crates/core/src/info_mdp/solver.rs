use alloc::vec;
use alloc::vec::Vec;

use super::objective::{info_objective_capped, Forward, InfoObjectiveReport};
use super::{point_mass, PolicyProblem, PolicyUncertaintyModel};
use crate::info::{build_coupled_ensemble_capped, info_exchange};
use crate::math::{self, log_sum_exp};
use crate::mdp::{check_cap, DEFAULT_PATH_CAP};
use crate::{Error, Result};

const LOG_BETA_MIN: f64 = -6.907_755_278_982_137; // ln 1e-3
const LOG_BETA_MAX: f64 = 18.420_680_743_952_367; // ln 1e8

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    /// Coordinate descent over `ν_t` with the policy marginals refreshed every sweep.
    #[default]
    Alternating,
    /// Exhaustive search over a simplex grid.
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub solver: Solver,
    /// Add `β^{−1} I_fin` to the penalized objective. Grid search only.
    pub include_final_term: bool,
    /// Stop once a sweep lowers the objective by less than this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Each grid row takes values in `{0, 1/g, …, 1}`.
    pub grid_divisions: usize,
    pub max_grid_points: u64,
    pub path_cap: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            solver: Solver::Alternating,
            include_final_term: false,
            tol: 1e-9,
            max_sweeps: 10_000,
            grid_divisions: 10,
            max_grid_points: 2_000_000,
            path_cap: DEFAULT_PATH_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub model: PolicyUncertaintyModel,
    pub report: InfoObjectiveReport,
    /// Penalized objective after each sweep (alternating) or the best value (grid).
    pub trace: Vec<f64>,
    /// Sweeps for the alternating solver, grid points for brute force.
    pub iterations: u64,
}

/// Minimizes `E[c] + β^{−1} Σ_k I(d_k; s_{k−1} | d_{k−1})` (plus `β^{−1} I_fin` if asked).
///
/// `beta = +∞` drops the information penalty.
pub fn optimize_policy_uncertainty(
    problem: &PolicyProblem,
    beta: f64,
    options: &SolverOptions,
) -> Result<SolveOutcome> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive"));
    }
    match options.solver {
        Solver::Alternating => {
            if options.include_final_term {
                return Err(Error::InvalidParameter(
                    "the final information term is only supported by the brute-force solver",
                ));
            }
            alternating(problem, beta, options)
        }
        Solver::BruteForce => brute_force(problem, beta, options),
    }
}

fn alternating(problem: &PolicyProblem, beta: f64, options: &SolverOptions) -> Result<SolveOutcome> {
    let mut model = PolicyUncertaintyModel::uniform(problem, beta)?;
    let mut fwd = Forward::run(problem, &model);
    let mut current = fwd.value(problem, &model).value;
    let mut trace = vec![current];
    for sweep in 1..=options.max_sweeps {
        backward_sweep(problem, &mut model, &fwd);
        fwd = Forward::run(problem, &model);
        let next = fwd.value(problem, &model).value;
        trace.push(next);
        let decrease = current - next;
        current = next;
        if decrease < options.tol {
            debug_assert!(model.is_normalized());
            let report = info_objective_capped(problem, &model, false, options.path_cap)?;
            return Ok(SolveOutcome {
                model,
                report,
                trace,
                iterations: sweep as u64,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: options.max_sweeps,
    })
}

/// Index of the smallest entry; near-ties go to the lowest index.
fn argmin(values: &[f64]) -> usize {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * (1.0 + min.abs());
    values.iter().position(|&v| v <= min + slack).unwrap_or(0)
}

/// One backward pass `t = N−1, …, 1, 0`. Each `ν_t` is the exact minimizer of the
/// variational objective with the other kernels and the marginals `m_t` held fixed.
fn backward_sweep(problem: &PolicyProblem, model: &mut PolicyUncertaintyModel, fwd: &Forward) {
    let n = fwd.n;
    let m = fwd.m;
    let horizon = problem.mdp().horizon();
    let beta = model.beta();
    let temperature = model.temperature();
    let size = (n + 1) * n * m;
    let mut u_next = vec![0.0; size];

    for t in (1..horizon).rev() {
        let contexts: Vec<usize> = if t == 1 { vec![n] } else { (0..n).collect() };

        // ν_t update: Φ for every context first, then the stage subproblem
        let mut phi = vec![vec![vec![0.0; m]; m]; contexts.len()];
        let mut weight = vec![vec![0.0; m]; contexts.len()];
        for (ci, &xp) in contexts.iter().enumerate() {
            for dp in 0..m {
                weight[ci][dp] = fwd.context_mass(t, xp, dp);
                let belief = predictive(problem, fwd, t, xp, dp);
                for (d, slot) in phi[ci][dp].iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (x, &bx) in belief.iter().enumerate() {
                        if bx <= 0.0 {
                            continue;
                        }
                        let mut inner = 0.0;
                        for (xn, &px) in problem.step_row(x, dp).iter().enumerate() {
                            if px > 0.0 {
                                inner += px * u_next[fwd.idx(x, xn, d)];
                            }
                        }
                        acc += bx * inner;
                    }
                    *slot = acc;
                }
            }
        }
        let marg = if t == 1 || temperature == 0.0 {
            for (ci, _) in contexts.iter().enumerate() {
                for dp in 0..m {
                    let row = model.nu_mut()[t - 1].row_mut(ci, dp);
                    row.copy_from_slice(&point_mass(m, argmin(&phi[ci][dp])).expect("in range"));
                }
            }
            vec![vec![1.0; m]; m]
        } else {
            solve_stage(model, t, &phi, &weight, beta)
        };
        // U_t over every slot state
        let mut u = vec![0.0; size];
        let xps: Vec<usize> = if t == 1 { vec![n] } else { (0..n).collect() };
        for &xp in &xps {
            for x in 0..n {
                for dp in 0..m {
                    let nu = model.nu_row(t, xp, dp);
                    let step = problem.step_row(x, dp);
                    let mut acc = problem.stage_cost(x, dp);
                    for (d, &pd) in nu.iter().enumerate() {
                        if pd <= 0.0 {
                            continue;
                        }
                        let mut inner = 0.0;
                        for (xn, &px) in step.iter().enumerate() {
                            if px > 0.0 {
                                inner += px * u_next[fwd.idx(x, xn, d)];
                            }
                        }
                        if t >= 2 && temperature > 0.0 {
                            inner += temperature * math::ln(pd / marg[dp][d]);
                        }
                        acc += pd * inner;
                    }
                    u[fwd.idx(xp, x, dp)] = acc;
                }
            }
        }
        u_next = u;
    }

    if problem.initial_policy().is_some() {
        return;
    }
    // ν_0 picks the best first rule outright
    let phi0: Vec<f64> = (0..m)
        .map(|d| {
            problem
                .initial_state()
                .iter()
                .enumerate()
                .map(|(x, &px)| px * u_next[fwd.idx(n, x, d)])
                .sum()
        })
        .collect();
    *model.nu0_mut() = point_mass(m, argmin(&phi0)).expect("in range");
}

/// Inner iterations cap for one stage subproblem.
const MAX_STAGE_ITERATIONS: usize = 100_000;

/// Minimizes `Σ w(s, d′) Σ_d ν(d|s, d′)[Φ(s, d′, d) + β^{−1} ln ν(d|s, d′)/m(d|d′)]` over
/// `ν_t` and `m_t`; returns the final `m_t`.
///
/// The problem separates over `d′` and is a rate-distortion problem in each
/// block. A block whose optimum carries no information is detected from the
/// Kuhn–Tucker condition at the best single rule; the rest alternate tilt and marginal.
fn solve_stage(
    model: &mut PolicyUncertaintyModel,
    t: usize,
    phi: &[Vec<Vec<f64>>],
    weight: &[Vec<f64>],
    beta: f64,
) -> Vec<Vec<f64>> {
    let m = phi[0].len();
    let kernel = &mut model.nu_mut()[t - 1];
    let mut out = Vec::with_capacity(m);
    for dp in 0..m {
        let total: f64 = weight.iter().map(|w| w[dp]).sum();
        let w: Vec<f64> = if total > 0.0 {
            weight.iter().map(|w| w[dp] / total).collect()
        } else {
            // unreached block: any row is optimal; keep it well defined
            vec![1.0 / weight.len() as f64; weight.len()]
        };
        let mean: Vec<f64> = (0..m)
            .map(|d| w.iter().zip(phi).map(|(&wc, p)| wc * p[dp][d]).sum())
            .collect();
        let best = argmin(&mean);
        let zero_rate = (0..m).all(|d| {
            let c: f64 = w
                .iter()
                .zip(phi)
                .map(|(&wc, p)| wc * math::exp(-beta * (p[dp][d] - p[dp][best])))
                .sum();
            c <= 1.0 + 1e-12
        });
        if zero_rate {
            let row = point_mass(m, best).expect("in range");
            for ci in 0..phi.len() {
                kernel.row_mut(ci, dp).copy_from_slice(&row);
            }
            out.push(row);
            continue;
        }
        let mut marg = vec![0.0; m];
        for (ci, &wc) in w.iter().enumerate() {
            for (r, &p) in marg.iter_mut().zip(kernel.row(ci, dp)) {
                *r += wc * p;
            }
        }
        // G(m) = −β^{−1} Σ_c w_c ln Σ_d m_d e^{−βΦ}; minimized by the over-relaxed
        // multiplicative update m ∝ m·c^γ, where γ = 1 always decreases G
        let evaluate = |marg: &[f64]| -> (f64, Vec<f64>) {
            let mut value = 0.0;
            let mut c = vec![0.0; m];
            for (ci, p) in phi.iter().enumerate() {
                if w[ci] <= 0.0 {
                    continue;
                }
                let logits: Vec<f64> = (0..m).map(|d| math::ln_or_neg_inf(marg[d]) - beta * p[dp][d]).collect();
                let z = log_sum_exp(&logits);
                value -= w[ci] * z / beta;
                for (cd, &pd) in c.iter_mut().zip(&p[dp]) {
                    *cd += w[ci] * math::exp(-beta * pd - z);
                }
            }
            (value, c)
        };
        let (mut value, mut c) = evaluate(&marg);
        let mut gamma = 1.0f64;
        for _ in 0..MAX_STAGE_ITERATIONS {
            let step = |g: f64| -> Vec<f64> {
                let logits: Vec<f64> = (0..m)
                    .map(|d| math::ln_or_neg_inf(marg[d]) + g * math::ln_or_neg_inf(c[d]))
                    .collect();
                let z = log_sum_exp(&logits);
                logits.iter().map(|l| math::exp(l - z)).collect()
            };
            let mut candidate = step(gamma);
            let mut trial = evaluate(&candidate);
            while trial.0 > value && gamma > 1.0 {
                gamma = (gamma * 0.25).max(1.0);
                candidate = step(gamma);
                trial = evaluate(&candidate);
            }
            let decrease = value - trial.0;
            if decrease < 0.0 {
                break;
            }
            marg = candidate;
            value = trial.0;
            c = trial.1;
            if decrease <= 1e-15 * (1.0 + value.abs()) {
                break;
            }
            gamma = (gamma * 2.0).min(1e12);
        }
        for (ci, p) in phi.iter().enumerate() {
            let logits: Vec<f64> = (0..m).map(|d| math::ln_or_neg_inf(marg[d]) - beta * p[dp][d]).collect();
            let z = log_sum_exp(&logits);
            for (r, l) in kernel.row_mut(ci, dp).iter_mut().zip(&logits) {
                *r = math::exp(l - z);
            }
        }
        out.push(marg);
    }
    out
}

/// `p(s_t | s_{t−1}, d_{t−1})` on the current slot law. Unreached contexts use the
/// one-step prediction from `s_{t−1}` averaged over the earlier rule.
fn predictive(problem: &PolicyProblem, fwd: &Forward, t: usize, xp: usize, dp: usize) -> Vec<f64> {
    let n = fwd.n;
    if t == 1 {
        return problem.initial_state().to_vec();
    }
    let rho = &fwd.rho[t - 1];
    let w: Vec<f64> = (0..n).map(|x| rho[fwd.idx(xp, x, dp)]).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        return w.into_iter().map(|v| v / total).collect();
    }
    let m = fwd.m;
    let mut out = vec![0.0; n];
    for d in 0..m {
        for (x, &p) in problem.step_row(xp, d).iter().enumerate() {
            out[x] += p / m as f64;
        }
    }
    out
}

/// Every point of `{0, 1/g, …, 1}^m` on the simplex.
fn simplex_grid(m: usize, g: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut counts = vec![0usize; m];
    fn rec(i: usize, left: usize, g: usize, counts: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        let m = counts.len();
        if i == m - 1 {
            counts[i] = left;
            out.push(counts.iter().map(|&c| c as f64 / g as f64).collect());
            return;
        }
        for c in (0..=left).rev() {
            counts[i] = c;
            rec(i + 1, left - c, g, counts, out);
        }
    }
    rec(0, g, g, &mut counts, &mut out);
    out
}

/// Grid search over `ν_0, …, ν_{N−2}`; `ν_{N−1}` stays uniform, which is optimal
/// because `d_{N−1}` acts on nothing.
fn brute_force(problem: &PolicyProblem, beta: f64, options: &SolverOptions) -> Result<SolveOutcome> {
    if options.grid_divisions == 0 {
        return Err(Error::InvalidParameter("grid divisions must be positive"));
    }
    let n = problem.mdp().n_states();
    let m = problem.n_policies();
    let horizon = problem.mdp().horizon();
    let grid = simplex_grid(m, options.grid_divisions);

    // slot 0 is ν_0 unless fixed; then (t, ctx, from) rows
    let mut rows: Vec<(usize, usize, usize)> = Vec::new();
    if problem.initial_policy().is_none() {
        rows.push((0, 0, 0));
    }
    for t in 1..horizon.saturating_sub(1) {
        let contexts = if t == 1 { 1 } else { n };
        for c in 0..contexts {
            for dp in 0..m {
                rows.push((t, c, dp));
            }
        }
    }
    let mut required: u128 = 1;
    for _ in &rows {
        required = required.saturating_mul(grid.len() as u128);
    }
    check_cap(required, options.max_grid_points)?;
    if options.include_final_term {
        check_cap(
            crate::mdp::power_count(n * m, horizon).saturating_mul(required),
            options.path_cap.saturating_mul(options.max_grid_points.max(1)),
        )?;
        check_cap(crate::mdp::power_count(n * m, horizon), options.path_cap)?;
    }

    let mut model = PolicyUncertaintyModel::uniform(problem, beta)?;
    let mut choice = vec![0usize; rows.len()];
    let mut best: Option<(f64, PolicyUncertaintyModel)> = None;
    let mut evaluations = 0u64;
    loop {
        for (slot, &(t, c, dp)) in rows.iter().enumerate() {
            let point = &grid[choice[slot]];
            if t == 0 {
                model.nu0_mut().copy_from_slice(point);
            } else {
                model.nu_mut()[t - 1].row_mut(c, dp).copy_from_slice(point);
            }
        }
        let value = penalized(problem, &model, options)?;
        evaluations += 1;
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, model.clone()));
        }
        // odometer
        let mut i = rows.len();
        let done = loop {
            if i == 0 {
                break true;
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < grid.len() {
                break false;
            }
            choice[i] = 0;
        };
        if done {
            break;
        }
    }
    let (value, model) = best.expect("grid is never empty");
    let report = info_objective_capped(problem, &model, options.include_final_term, options.path_cap)?;
    Ok(SolveOutcome {
        model,
        report,
        trace: vec![value],
        iterations: evaluations,
    })
}

fn penalized(problem: &PolicyProblem, model: &PolicyUncertaintyModel, options: &SolverOptions) -> Result<f64> {
    let fwd = Forward::run(problem, model);
    let mut value = fwd.value(problem, model).value;
    if options.include_final_term && model.temperature() > 0.0 {
        let sys = model.to_coupled(problem)?;
        let ens = build_coupled_ensemble_capped(&sys, options.path_cap)?;
        value += model.temperature() * info_exchange(&ens).i_fin;
    }
    Ok(value)
}

/// Result of the performance-constrained program.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntInfoSolution {
    /// Inverse temperature whose optimum meets the target cost.
    pub beta: f64,
    pub outcome: SolveOutcome,
}

/// Least-information policy with expected cost `K`.
///
/// Walks the penalized optimum along `ln β ∈ [ln 1e−3, ln 1e8]` and bisects on the
/// expected cost, which falls as `β` grows. Targets outside the costs reached at
/// the two ends are reported as unattainable.
pub fn maxent_info_program(
    problem: &PolicyProblem,
    target: f64,
    tol: f64,
    options: &SolverOptions,
) -> Result<MaxEntInfoSolution> {
    if !target.is_finite() || !(tol > 0.0) {
        return Err(Error::InvalidParameter(
            "target and tolerance must be finite and positive",
        ));
    }
    let solve = |log_beta: f64| optimize_policy_uncertainty(problem, math::exp(log_beta), options);
    if problem.n_policies() == 1 {
        let outcome = solve(0.0)?;
        let c = outcome.report.expected_cost;
        if (c - target).abs() <= tol {
            return Ok(MaxEntInfoSolution { beta: 1.0, outcome });
        }
        return Err(Error::UnattainablePerformance {
            target,
            low: c,
            high: c,
        });
    }
    let mut lo = LOG_BETA_MIN;
    let mut hi = LOG_BETA_MAX;
    let at_lo = solve(lo)?;
    let at_hi = solve(hi)?;
    let (c_lo, c_hi) = (at_lo.report.expected_cost, at_hi.report.expected_cost);
    if target > c_lo + tol || target < c_hi - tol {
        return Err(Error::UnattainablePerformance {
            target,
            low: c_hi,
            high: c_lo,
        });
    }
    if (c_hi - target).abs() <= tol {
        return Ok(MaxEntInfoSolution {
            beta: math::exp(hi),
            outcome: at_hi,
        });
    }
    if (c_lo - target).abs() <= tol {
        return Ok(MaxEntInfoSolution {
            beta: math::exp(lo),
            outcome: at_lo,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let out = solve(mid)?;
        let c = out.report.expected_cost;
        if (c - target).abs() <= tol {
            return Ok(MaxEntInfoSolution {
                beta: math::exp(mid),
                outcome: out,
            });
        }
        if c > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence { iterations: 200 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub beta_low: f64,
    pub beta_high: f64,
    pub tol: f64,
    /// Log-spaced probes used to check that the response is monotone.
    pub probes: usize,
    pub max_iter: usize,
    pub solver: SolverOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            beta_low: 1.0,
            beta_high: 1e6,
            tol: 1e-6,
            probes: 9,
            max_iter: 200,
            solver: SolverOptions::default(),
        }
    }
}

/// Finds `β` whose optimal policy, started at `reference_state`, has expected cost
/// `known_value`.
pub fn calibrate_beta(
    problem: &PolicyProblem,
    reference_state: usize,
    known_value: f64,
    options: &CalibrationOptions,
) -> Result<f64> {
    if !(options.beta_low > 0.0 && options.beta_high > options.beta_low && options.tol > 0.0)
        || !known_value.is_finite()
    {
        return Err(Error::InvalidParameter(
            "calibration bracket must satisfy 0 < low < high",
        ));
    }
    let start = problem.with_initial_state(point_mass(problem.mdp().n_states(), reference_state)?)?;
    let value = |log_beta: f64| -> Result<f64> {
        Ok(
            optimize_policy_uncertainty(&start, math::exp(log_beta), &options.solver)?
                .report
                .expected_cost,
        )
    };
    let (mut lo, mut hi) = (math::ln(options.beta_low), math::ln(options.beta_high));
    let probes = options.probes.max(2);
    let mut prev = f64::INFINITY;
    let mut ends = (0.0, 0.0);
    for i in 0..probes {
        let lb = lo + (hi - lo) * i as f64 / (probes - 1) as f64;
        let v = value(lb)?;
        if v > prev + options.tol {
            return Err(Error::NonMonotoneResponse);
        }
        if i == 0 {
            ends.0 = v;
        }
        ends.1 = v;
        prev = v;
    }
    let (v_lo, v_hi) = ends;
    if known_value > v_lo + options.tol || known_value < v_hi - options.tol {
        return Err(Error::NotBracketed {
            target: known_value,
            low: v_hi,
            high: v_lo,
        });
    }
    if (v_hi - known_value).abs() <= options.tol {
        return Ok(options.beta_high);
    }
    if (v_lo - known_value).abs() <= options.tol {
        return Ok(options.beta_low);
    }
    for _ in 0..options.max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = value(mid)?;
        if (v - known_value).abs() <= options.tol {
            return Ok(math::exp(mid));
        }
        if v > known_value {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        iterations: options.max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::bellman_backward;
    use crate::FiniteMdp;

    fn flip_mdp(horizon: usize) -> FiniteMdp {
        let t = vec![
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            vec![vec![0.2, 0.8], vec![0.7, 0.3]],
        ];
        let c = vec![vec![vec![0.0, 1.0]; 2], vec![vec![0.0, 1.0]; 2]];
        FiniteMdp::new(t, c, horizon).unwrap()
    }

    /// Two constant rules: the decision maker must watch the state to act well.
    fn constant_rules(horizon: usize) -> PolicyProblem {
        PolicyProblem::new(flip_mdp(horizon), vec![vec![0, 0], vec![1, 1]], vec![1.0, 0.0]).unwrap()
    }

    /// The state persists with probability 0.9 whatever is done; acting
    /// differently from the current state costs 1.
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
        PolicyProblem::new(mdp, vec![vec![0, 0], vec![1, 1]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn grid_has_expected_size() {
        assert_eq!(simplex_grid(2, 10).len(), 11);
        assert_eq!(simplex_grid(3, 4).len(), 15);
        assert!(simplex_grid(3, 4)
            .iter()
            .all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn alternating_trace_is_monotone() {
        for beta in [1e-3, 0.3, 1.0, 4.0, 30.0] {
            let out = optimize_policy_uncertainty(&tracking(6), beta, &SolverOptions::default()).unwrap();
            for w in out.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "beta {beta}: {:?}", out.trace);
            }
            assert!(out.model.max_row_error() < 1e-12);
            assert!((out.report.regularized_objective - out.trace.last().unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn horizon_two_matches_grid() {
        let p = constant_rules(2);
        let alt = optimize_policy_uncertainty(&p, 2.0, &SolverOptions::default()).unwrap();
        let grid = optimize_policy_uncertainty(
            &p,
            2.0,
            &SolverOptions {
                solver: Solver::BruteForce,
                grid_divisions: 100,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        assert!((alt.report.regularized_objective - grid.report.regularized_objective).abs() < 1e-3);
    }

    #[test]
    fn alternating_beats_coarse_grid_at_horizon_four() {
        for (p, beta) in [(constant_rules(4), 0.5), (tracking(4), 1.0), (tracking(4), 10.0)] {
            let alt = optimize_policy_uncertainty(&p, beta, &SolverOptions::default()).unwrap();
            let grid = optimize_policy_uncertainty(
                &p,
                beta,
                &SolverOptions {
                    solver: Solver::BruteForce,
                    grid_divisions: 4,
                    ..SolverOptions::default()
                },
            )
            .unwrap();
            assert!(
                alt.report.regularized_objective <= grid.report.regularized_objective + 1e-9,
                "beta {beta}: {} vs {}",
                alt.report.regularized_objective,
                grid.report.regularized_objective
            );
        }
    }

    #[test]
    fn identical_costs_need_no_information() {
        let mdp = FiniteMdp::new(
            vec![
                vec![vec![0.9, 0.1], vec![0.1, 0.9]],
                vec![vec![0.2, 0.8], vec![0.7, 0.3]],
            ],
            vec![vec![vec![1.5, 1.5]; 2]; 2],
            5,
        )
        .unwrap();
        let p = PolicyProblem::new(mdp, vec![vec![0, 0], vec![1, 1]], vec![0.5, 0.5]).unwrap();
        let out = optimize_policy_uncertainty(&p, 3.0, &SolverOptions::default()).unwrap();
        assert!(out.report.transfer_terms.iter().all(|v| v.abs() < 1e-9));
        assert!((out.report.expected_cost - 1.5 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn large_beta_recovers_bellman_value() {
        let mdp = flip_mdp(5);
        let (values, _) = bellman_backward(&mdp, None).unwrap();
        let p = PolicyProblem::all_deterministic(mdp, 1).unwrap();
        let out = optimize_policy_uncertainty(&p, 1e8, &SolverOptions::default()).unwrap();
        // the stage-N cost is zero, so the Bellman value at t = 1 is the same sum
        assert!((out.report.expected_cost - values.get(1, 1)).abs() < 1e-6);
        let inf = optimize_policy_uncertainty(&p, f64::INFINITY, &SolverOptions::default()).unwrap();
        assert!((inf.report.expected_cost - values.get(1, 1)).abs() < 1e-12);
    }

    #[test]
    fn information_grows_with_beta() {
        let p = tracking(5);
        let low = optimize_policy_uncertainty(&p, 0.2, &SolverOptions::default()).unwrap();
        let high = optimize_policy_uncertainty(&p, 50.0, &SolverOptions::default()).unwrap();
        let info = |o: &SolveOutcome| o.report.transfer_terms_reduced.iter().sum::<f64>();
        assert!(info(&high) > info(&low));
        assert!(high.report.expected_cost < low.report.expected_cost);
    }

    #[test]
    fn final_term_requires_grid_solver() {
        let opts = SolverOptions {
            include_final_term: true,
            ..SolverOptions::default()
        };
        assert!(matches!(
            optimize_policy_uncertainty(&constant_rules(3), 1.0, &opts),
            Err(Error::InvalidParameter(_))
        ));
        let grid = SolverOptions {
            solver: Solver::BruteForce,
            grid_divisions: 4,
            ..opts
        };
        let out = optimize_policy_uncertainty(&constant_rules(3), 1.0, &grid).unwrap();
        assert!(out.report.include_final_term);
        let expect = out.report.expected_cost
            + (out.report.transfer_terms_reduced.iter().sum::<f64>() + out.report.final_term) / 1.0;
        assert!((out.report.regularized_objective - expect).abs() < 1e-12);
    }

    #[test]
    fn maxent_program_hits_target() {
        let p = tracking(5);
        let opts = SolverOptions::default();
        let mid = optimize_policy_uncertainty(&p, 3.0, &opts)
            .unwrap()
            .report
            .expected_cost;
        let sol = maxent_info_program(&p, mid, 1e-6, &opts).unwrap();
        assert!((sol.outcome.report.expected_cost - mid).abs() <= 1e-6);
        assert!(matches!(
            maxent_info_program(&p, -1.0, 1e-6, &opts),
            Err(Error::UnattainablePerformance { .. })
        ));
    }

    #[test]
    fn single_policy_program_carries_no_information() {
        let p = PolicyProblem::new(flip_mdp(4), vec![vec![1, 0]], vec![1.0, 0.0]).unwrap();
        let c = optimize_policy_uncertainty(&p, 1.0, &SolverOptions::default())
            .unwrap()
            .report
            .expected_cost;
        let sol = maxent_info_program(&p, c, 1e-9, &SolverOptions::default()).unwrap();
        assert!(sol.outcome.report.transfer_terms.iter().all(|v| v.abs() < 1e-12));
        assert!(sol.outcome.report.final_term.abs() < 1e-12);
    }

    #[test]
    fn calibration_round_trip() {
        let p = tracking(5);
        let start = p.with_initial_state(vec![1.0, 0.0]).unwrap();
        let v0 = optimize_policy_uncertainty(&start, 2.0, &SolverOptions::default())
            .unwrap()
            .report
            .expected_cost;
        let beta = calibrate_beta(&p, 0, v0, &CalibrationOptions::default()).unwrap();
        let v = optimize_policy_uncertainty(&start, beta, &SolverOptions::default())
            .unwrap()
            .report
            .expected_cost;
        assert!((beta - 2.0).abs() / 2.0 < 0.01 || (v - v0).abs() <= 1e-6, "beta {beta}");
        assert!(matches!(
            calibrate_beta(&p, 0, 100.0, &CalibrationOptions::default()),
            Err(Error::NotBracketed { .. })
        ));
    }
}
