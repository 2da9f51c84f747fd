//! Finite MDPs, Markov chains, exact path measures and the classical Bellman recursion.
//!
//! Time indices follow the slot convention: a horizon `N` has states
//! `x_1, …, x_N` and `N − 1` transitions. Value tables store `V_1 … V_N`
//! with `V_N` the terminal value.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{ln_or_neg_inf, log_sum_exp, stable_sum, NeumaierSum, StochasticMatrix, INGEST_TOL, STOCHASTIC_TOL};
use crate::{Error, Result};

/// Default cap on the number of path-probability entries an enumeration may touch.
pub const DEFAULT_PATH_CAP: u64 = 10_000_000;

/// Whether the raw scalar table holds costs to minimize or rewards to maximize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveSense {
    #[default]
    Cost,
    Reward,
}

/// `(S, A, T, R, N)` in cost-minimization form.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    transition: Vec<f64>,
    cost: Vec<f64>,
}

impl FiniteMdp {
    /// Strict constructor: rows must already sum to one within `1e-9`.
    ///
    /// Both tables are indexed `[s][a][s′]`.
    pub fn new(transition: Vec<Vec<Vec<f64>>>, cost: Vec<Vec<Vec<f64>>>, horizon: usize) -> Result<Self> {
        Self::build(transition, cost, horizon, ObjectiveSense::Cost, 0.0)
    }

    fn build(
        transition: Vec<Vec<Vec<f64>>>,
        cost: Vec<Vec<Vec<f64>>>,
        horizon: usize,
        sense: ObjectiveSense,
        renorm_tol: f64,
    ) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(Error::EmptySet("state"));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(Error::EmptySet("action"));
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1"));
        }
        if cost.len() != n_states {
            return Err(Error::DimensionMismatch {
                what: "cost states",
                expected: n_states,
                found: cost.len(),
            });
        }
        let mut t_flat = Vec::with_capacity(n_states * n_actions * n_states);
        let mut c_flat = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, (t_s, c_s)) in transition.into_iter().zip(cost).enumerate() {
            if t_s.len() != n_actions || c_s.len() != n_actions {
                return Err(Error::DimensionMismatch {
                    what: "actions",
                    expected: n_actions,
                    found: if t_s.len() != n_actions { t_s.len() } else { c_s.len() },
                });
            }
            for (a, (mut row, c_row)) in t_s.into_iter().zip(c_s).enumerate() {
                if row.len() != n_states || c_row.len() != n_states {
                    return Err(Error::DimensionMismatch {
                        what: "successor states",
                        expected: n_states,
                        found: if row.len() != n_states { row.len() } else { c_row.len() },
                    });
                }
                let index = s * n_actions + a;
                for (j, &p) in row.iter().enumerate() {
                    if !p.is_finite() {
                        return Err(Error::NonFiniteProbability { row: index, col: j });
                    }
                    if p < 0.0 {
                        return Err(Error::NegativeProbability {
                            row: index,
                            col: j,
                            value: p,
                        });
                    }
                }
                let sum = stable_sum(row.iter().copied());
                if (sum - 1.0).abs() > renorm_tol.max(STOCHASTIC_TOL) {
                    return Err(Error::NonStochasticRow { row: index, sum });
                }
                if renorm_tol > 0.0 {
                    for p in row.iter_mut() {
                        *p /= sum;
                    }
                }
                for (next, &c) in c_row.iter().enumerate() {
                    if !c.is_finite() {
                        return Err(Error::NonFiniteCost {
                            state: s,
                            action: a,
                            next,
                        });
                    }
                }
                t_flat.extend_from_slice(&row);
                match sense {
                    ObjectiveSense::Cost => c_flat.extend_from_slice(&c_row),
                    ObjectiveSense::Reward => c_flat.extend(c_row.iter().map(|r| -r)),
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            horizon,
            transition: t_flat,
            cost: c_flat,
        })
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Same dynamics and costs under a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1"));
        }
        let mut out = self.clone();
        out.horizon = horizon;
        Ok(out)
    }

    /// `T(· | s, a)`.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// `R(· | s, a)` in cost form.
    #[inline]
    pub fn cost_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.cost[start..start + self.n_states]
    }

    /// `c(s, a) = Σ_{s′} T(s′|s,a) R(s′|s,a)`.
    pub fn expected_stage_cost(&self, s: usize, a: usize) -> f64 {
        stable_sum(
            self.transition_row(s, a)
                .iter()
                .zip(self.cost_row(s, a))
                .map(|(t, c)| t * c),
        )
    }

    pub fn transition_tables(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| self.transition_row(s, a).to_vec())
                    .collect()
            })
            .collect()
    }

    pub fn cost_tables(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| self.cost_row(s, a).to_vec()).collect())
            .collect()
    }
}

/// Validates a hand-written MDP.
///
/// Rows within `1e-6` of stochastic are renormalized; anything further off is rejected.
/// With [`ObjectiveSense::Reward`] the scalar table is negated into cost form.
pub fn validate_mdp(
    transition: Vec<Vec<Vec<f64>>>,
    cost: Vec<Vec<Vec<f64>>>,
    horizon: usize,
    sense: ObjectiveSense,
) -> Result<FiniteMdp> {
    FiniteMdp::build(transition, cost, horizon, sense, INGEST_TOL)
}

/// `V_t(s)` for `t = 1..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    values: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySet("time index"));
        }
        let n = values[0].len();
        for row in &values {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "value table row",
                    expected: n,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue("value table"));
            }
        }
        Ok(Self { values })
    }

    pub(crate) fn from_raw(values: Vec<Vec<f64>>) -> Self {
        Self { values }
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn n_states(&self) -> usize {
        self.values[0].len()
    }

    /// `V_t(·)` with `t` counted from 1.
    #[inline]
    pub fn at(&self, t: usize) -> &[f64] {
        &self.values[t - 1]
    }

    #[inline]
    pub fn get(&self, t: usize, s: usize) -> f64 {
        self.values[t - 1][s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// A Markov decision rule for every transition slot `t = 1..N−1`.
#[derive(Debug, Clone, PartialEq)]
pub enum DecisionRule {
    /// `rule[t−1][s]` is the chosen action.
    Deterministic(Vec<Vec<usize>>),
    /// `rule[t−1][s][a]` is the probability of action `a`.
    Randomized(Vec<Vec<Vec<f64>>>),
}

impl DecisionRule {
    pub fn steps(&self) -> usize {
        match self {
            DecisionRule::Deterministic(r) => r.len(),
            DecisionRule::Randomized(r) => r.len(),
        }
    }

    /// The same stationary map at every step.
    pub fn stationary(actions: &[usize], steps: usize) -> Self {
        DecisionRule::Deterministic(vec![actions.to_vec(); steps])
    }

    /// Checks shapes, action indices and normalization against `mdp`.
    pub fn validate(&self, mdp: &FiniteMdp) -> Result<()> {
        let steps = mdp.horizon() - 1;
        if self.steps() != steps {
            return Err(Error::HorizonMismatch {
                expected: steps,
                found: self.steps(),
            });
        }
        match self {
            DecisionRule::Deterministic(r) => {
                for (t, row) in r.iter().enumerate() {
                    check_len(row.len(), mdp.n_states(), "decision rule states")?;
                    for (s, &a) in row.iter().enumerate() {
                        if a >= mdp.n_actions() {
                            return Err(Error::InvalidAction {
                                time: t + 1,
                                state: s,
                                action: a,
                            });
                        }
                    }
                }
            }
            DecisionRule::Randomized(r) => {
                for (t, row) in r.iter().enumerate() {
                    check_len(row.len(), mdp.n_states(), "decision rule states")?;
                    for (s, dist) in row.iter().enumerate() {
                        if dist.len() != mdp.n_actions() {
                            return Err(Error::InvalidAction {
                                time: t + 1,
                                state: s,
                                action: dist.len(),
                            });
                        }
                        let mut sum = NeumaierSum::default();
                        for &w in dist {
                            if !w.is_finite() || w < 0.0 {
                                return Err(Error::UnnormalizedRule {
                                    time: t + 1,
                                    state: s,
                                    sum: w,
                                });
                            }
                            sum.add(w);
                        }
                        if (sum.value() - 1.0).abs() > STOCHASTIC_TOL {
                            return Err(Error::UnnormalizedRule {
                                time: t + 1,
                                state: s,
                                sum: sum.value(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Action distribution at slot `t` (from 1) and state `s`.
    pub fn action_distribution(&self, t: usize, s: usize, n_actions: usize) -> Vec<f64> {
        match self {
            DecisionRule::Deterministic(r) => {
                let mut d = vec![0.0; n_actions];
                d[r[t - 1][s]] = 1.0;
                d
            }
            DecisionRule::Randomized(r) => r[t - 1][s].clone(),
        }
    }
}

fn check_len(found: usize, expected: usize, what: &'static str) -> Result<()> {
    if found != expected {
        return Err(Error::DimensionMismatch { what, expected, found });
    }
    Ok(())
}

fn terminal_or_zero(mdp: &FiniteMdp, terminal: Option<&[f64]>) -> Result<Vec<f64>> {
    match terminal {
        None => Ok(vec![0.0; mdp.n_states()]),
        Some(v) => {
            check_len(v.len(), mdp.n_states(), "terminal values")?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteValue("terminal values"));
            }
            Ok(v.to_vec())
        }
    }
}

/// Classical finite-horizon Bellman recursion in cost-minimization form.
///
/// Returns `V_1..V_N` and the greedy deterministic rule; ties go to the lowest action index.
/// `terminal` defaults to zero.
pub fn bellman_backward(mdp: &FiniteMdp, terminal: Option<&[f64]>) -> Result<(ValueTable, DecisionRule)> {
    let n = mdp.horizon();
    let mut values = vec![Vec::new(); n];
    values[n - 1] = terminal_or_zero(mdp, terminal)?;
    let mut rule = vec![Vec::new(); n - 1];
    for t in (1..n).rev() {
        let next = &values[t];
        let mut v_t = Vec::with_capacity(mdp.n_states());
        let mut r_t = Vec::with_capacity(mdp.n_states());
        for s in 0..mdp.n_states() {
            let mut best = f64::INFINITY;
            let mut best_a = 0;
            for a in 0..mdp.n_actions() {
                let q = q_value(mdp, s, a, next);
                if q < best {
                    best = q;
                    best_a = a;
                }
            }
            v_t.push(best);
            r_t.push(best_a);
        }
        values[t - 1] = v_t;
        rule[t - 1] = r_t;
    }
    Ok((ValueTable::from_raw(values), DecisionRule::Deterministic(rule)))
}

/// `Σ_{s′} T(s′|s,a) [R(s′|s,a) + V′(s′)]`.
pub fn q_value(mdp: &FiniteMdp, s: usize, a: usize, next: &[f64]) -> f64 {
    stable_sum(
        mdp.transition_row(s, a)
            .iter()
            .zip(mdp.cost_row(s, a))
            .zip(next)
            .map(|((t, c), v)| t * (c + v)),
    )
}

/// Expected cumulative cost of an arbitrary decision rule, per starting slot.
pub fn evaluate_rule(mdp: &FiniteMdp, rule: &DecisionRule, terminal: Option<&[f64]>) -> Result<ValueTable> {
    rule.validate(mdp)?;
    let n = mdp.horizon();
    let mut values = vec![Vec::new(); n];
    values[n - 1] = terminal_or_zero(mdp, terminal)?;
    for t in (1..n).rev() {
        let next = values[t].clone();
        values[t - 1] = (0..mdp.n_states())
            .map(|s| {
                let dist = rule.action_distribution(t, s, mdp.n_actions());
                stable_sum(
                    dist.iter()
                        .enumerate()
                        .filter(|(_, &w)| w > 0.0)
                        .map(|(a, &w)| w * q_value(mdp, s, a, &next)),
                )
            })
            .collect();
    }
    Ok(ValueTable::from_raw(values))
}

/// A time-inhomogeneous Markov chain over `x_1..x_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    initial: Vec<f64>,
    kernels: Vec<StochasticMatrix>,
}

impl MarkovChain {
    /// `kernels[t−1]` moves `x_t` to `x_{t+1}`; an empty list gives horizon 1.
    pub fn new(initial: Vec<f64>, kernels: Vec<StochasticMatrix>) -> Result<Self> {
        crate::math::check_distribution(&initial)?;
        let n = initial.len();
        for k in &kernels {
            if k.rows() != n || k.cols() != n {
                return Err(Error::DimensionMismatch {
                    what: "chain kernel",
                    expected: n,
                    found: if k.rows() != n { k.rows() } else { k.cols() },
                });
            }
        }
        Ok(Self { initial, kernels })
    }

    /// Time-homogeneous chain of horizon `horizon`.
    pub fn homogeneous(initial: Vec<f64>, kernel: StochasticMatrix, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1"));
        }
        Self::new(initial, vec![kernel; horizon - 1])
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.kernels.len() + 1
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn kernels(&self) -> &[StochasticMatrix] {
        &self.kernels
    }

    /// `K_t` with `t` counted from 1.
    pub fn kernel(&self, t: usize) -> &StochasticMatrix {
        &self.kernels[t - 1]
    }

    /// Marginals `p_1 … p_N` by forward propagation.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.horizon());
        out.push(self.initial.clone());
        for k in &self.kernels {
            let next = k.push_forward(out.last().expect("nonempty"));
            out.push(next);
        }
        out
    }
}

/// Closed-loop chain `K_t(s′|s) = Σ_a rule_t(a|s) T(s′|s,a)`.
pub fn lower_to_chain(mdp: &FiniteMdp, rule: &DecisionRule, initial: Vec<f64>) -> Result<MarkovChain> {
    rule.validate(mdp)?;
    check_len(initial.len(), mdp.n_states(), "initial distribution")?;
    let n = mdp.n_states();
    let mut kernels = Vec::with_capacity(mdp.horizon() - 1);
    for t in 1..mdp.horizon() {
        let mut data = vec![0.0; n * n];
        for s in 0..n {
            let dist = rule.action_distribution(t, s, mdp.n_actions());
            let row = &mut data[s * n..(s + 1) * n];
            for (a, &w) in dist.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (r, &p) in row.iter_mut().zip(mdp.transition_row(s, a)) {
                    *r += w * p;
                }
            }
        }
        kernels.push(StochasticMatrix::from_normalized(n, n, data));
    }
    MarkovChain::new(initial, kernels)
}

/// A state path `(x_1, …, x_N)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Trajectory(pub Vec<usize>);

impl Trajectory {
    pub fn states(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The exact law of the support paths of a chain, in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    horizon: usize,
    paths: Vec<Vec<usize>>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl TrajectoryEnsemble {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[Vec<usize>] {
        &self.paths
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64, f64)> + '_ {
        self.paths
            .iter()
            .zip(&self.probs)
            .zip(&self.log_probs)
            .map(|((p, &q), &l)| (p.as_slice(), q, l))
    }

    /// `(p, ln p)` for a path; `(0, -inf)` when it is off the support.
    pub fn get(&self, path: &[usize]) -> (f64, f64) {
        match self.paths.binary_search_by(|p| p.as_slice().cmp(path)) {
            Ok(i) => (self.probs[i], self.log_probs[i]),
            Err(_) => (0.0, f64::NEG_INFINITY),
        }
    }

    pub fn total_probability(&self) -> f64 {
        stable_sum(self.probs.iter().copied())
    }
}

/// `|S|^N` as an exact count, saturating at `u128::MAX`.
pub(crate) fn power_count(base: usize, exp: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base as u128);
    }
    acc
}

pub(crate) fn check_cap(required: u128, cap: u64) -> Result<()> {
    if required > cap as u128 {
        return Err(Error::EnumerationCapExceeded { required, cap });
    }
    Ok(())
}

/// Enumerates every positive-probability path under [`DEFAULT_PATH_CAP`].
pub fn enumerate_paths(chain: &MarkovChain) -> Result<TrajectoryEnsemble> {
    enumerate_paths_capped(chain, DEFAULT_PATH_CAP)
}

/// Enumerates every positive-probability path, refusing when `|S|^N > cap`.
pub fn enumerate_paths_capped(chain: &MarkovChain, cap: u64) -> Result<TrajectoryEnsemble> {
    let n = chain.n_states();
    let horizon = chain.horizon();
    check_cap(power_count(n, horizon), cap)?;
    let log_kernels: Vec<Vec<f64>> = chain
        .kernels()
        .iter()
        .map(|k| {
            (0..n)
                .flat_map(|i| k.row(i).iter().map(|&p| ln_or_neg_inf(p)))
                .collect()
        })
        .collect();
    let mut out = TrajectoryEnsemble {
        horizon,
        paths: Vec::new(),
        probs: Vec::new(),
        log_probs: Vec::new(),
    };
    let mut path = Vec::with_capacity(horizon);
    for x1 in 0..n {
        let lp = ln_or_neg_inf(chain.initial()[x1]);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        path.push(x1);
        extend_paths(&log_kernels, n, horizon, &mut path, lp, &mut out);
        path.pop();
    }
    Ok(out)
}

fn extend_paths(
    log_kernels: &[Vec<f64>],
    n: usize,
    horizon: usize,
    path: &mut Vec<usize>,
    lp: f64,
    out: &mut TrajectoryEnsemble,
) {
    if path.len() == horizon {
        out.paths.push(path.clone());
        out.probs.push(libm::exp(lp));
        out.log_probs.push(lp);
        return;
    }
    let t = path.len();
    let from = path[t - 1];
    let row = &log_kernels[t - 1][from * n..(from + 1) * n];
    for (next, &l) in row.iter().enumerate() {
        if l == f64::NEG_INFINITY {
            continue;
        }
        path.push(next);
        extend_paths(log_kernels, n, horizon, path, lp + l, out);
        path.pop();
    }
}

/// `(p(O), ln p(O))` computed directly from the chain.
pub fn path_probability(chain: &MarkovChain, traj: &Trajectory) -> Result<(f64, f64)> {
    let path = traj.states();
    if path.len() != chain.horizon() {
        return Err(Error::LengthMismatch {
            expected: chain.horizon(),
            found: path.len(),
        });
    }
    if let Some(&bad) = path.iter().find(|&&s| s >= chain.n_states()) {
        return Err(Error::DimensionMismatch {
            what: "trajectory state",
            expected: chain.n_states(),
            found: bad,
        });
    }
    let mut lp = ln_or_neg_inf(chain.initial()[path[0]]);
    for (t, w) in path.windows(2).enumerate() {
        if lp == f64::NEG_INFINITY {
            break;
        }
        lp += ln_or_neg_inf(chain.kernels()[t].get(w[0], w[1]));
    }
    Ok((libm::exp(lp), lp))
}

/// Draws `count` independent paths with a ChaCha8 stream seeded by `seed`.
pub fn sample_paths(chain: &MarkovChain, seed: u64, count: usize) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut path = Vec::with_capacity(chain.horizon());
            let mut x = draw(&mut rng, chain.initial());
            path.push(x);
            for k in chain.kernels() {
                x = draw(&mut rng, k.row(x));
                path.push(x);
            }
            Trajectory(path)
        })
        .collect()
}

/// Inverse-CDF draw that never lands on a zero-probability index.
pub(crate) fn draw<R: Rng>(rng: &mut R, dist: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

/// `Σ_O p(O) f(O)`; `f` must be finite on every support path.
pub fn expected_path_functional<F>(ensemble: &TrajectoryEnsemble, mut f: F) -> Result<f64>
where
    F: FnMut(&[usize]) -> f64,
{
    let mut acc = NeumaierSum::default();
    for (path, p, _) in ensemble.iter() {
        let v = f(path);
        if !v.is_finite() {
            return Err(Error::NonFiniteFunctionalOnSupport);
        }
        acc.add(p * v);
    }
    Ok(acc.value())
}

/// `Σ_O p(O) e^{g(O)}` evaluated as `exp(logsumexp(ln p + g))`.
///
/// `g = -inf` is allowed and contributes zero; `g = +inf` on the support is an error.
pub fn expected_exp_log<F>(ensemble: &TrajectoryEnsemble, mut g: F) -> Result<f64>
where
    F: FnMut(&[usize]) -> f64,
{
    let mut terms = Vec::with_capacity(ensemble.len());
    for (path, _, lp) in ensemble.iter() {
        let v = g(path);
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFiniteFunctionalOnSupport);
        }
        terms.push(lp + v);
    }
    Ok(libm::exp(log_sum_exp(&terms)))
}

/// Cumulative cost of a path under a deterministic rule, using `R(s′|s,a)` per transition.
pub fn path_cost(mdp: &FiniteMdp, rule: &[Vec<usize>], path: &[usize]) -> f64 {
    path.windows(2)
        .enumerate()
        .map(|(t, w)| mdp.cost_row(w[0], rule[t][w[0]])[w[1]])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn two_state_det() -> FiniteMdp {
        // action a moves to state a; cost 1 for action 0, 2 for action 1
        FiniteMdp::new(
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2],
            vec![vec![vec![1.0, 1.0], vec![2.0, 2.0]]; 2],
            3,
        )
        .unwrap()
    }

    #[test]
    fn trivial_mdp_validates() {
        let m = validate_mdp(vec![vec![vec![1.0]]], vec![vec![vec![0.0]]], 1, ObjectiveSense::Cost).unwrap();
        let (v, rule) = bellman_backward(&m, None).unwrap();
        assert_eq!(v.horizon(), 1);
        assert_eq!(v.get(1, 0), 0.0);
        assert_eq!(rule.steps(), 0);
    }

    #[test]
    fn ingestion_tolerances() {
        let t = vec![vec![vec![0.5, 0.499999]], vec![vec![0.0, 1.0]]];
        let c = vec![vec![vec![0.0, 0.0]]; 2];
        let m = validate_mdp(t, c.clone(), 2, ObjectiveSense::Cost).unwrap();
        assert!((m.transition_row(0, 0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let bad = vec![vec![vec![0.5, 0.4]], vec![vec![0.0, 1.0]]];
        assert!(matches!(
            validate_mdp(bad, c.clone(), 2, ObjectiveSense::Cost),
            Err(Error::NonStochasticRow { row: 0, .. })
        ));
        let neg = vec![vec![vec![1.1, -0.1]], vec![vec![0.0, 1.0]]];
        assert!(matches!(
            validate_mdp(neg, c, 2, ObjectiveSense::Cost),
            Err(Error::NegativeProbability { .. })
        ));
        assert_eq!(
            validate_mdp(vec![], vec![], 2, ObjectiveSense::Cost),
            Err(Error::EmptySet("state"))
        );
        let nan_cost = vec![vec![vec![f64::NAN]]];
        assert!(matches!(
            validate_mdp(vec![vec![vec![1.0]]], nan_cost, 2, ObjectiveSense::Cost),
            Err(Error::NonFiniteCost { .. })
        ));
    }

    #[test]
    fn reward_sense_negates() {
        let m = validate_mdp(vec![vec![vec![1.0]]], vec![vec![vec![3.0]]], 2, ObjectiveSense::Reward).unwrap();
        assert_eq!(m.cost_row(0, 0), &[-3.0]);
    }

    #[test]
    fn deterministic_unit_costs() {
        let m = two_state_det();
        let (v, rule) = bellman_backward(&m, None).unwrap();
        assert_eq!(v.at(1), &[2.0, 2.0]);
        assert_eq!(v.at(2), &[1.0, 1.0]);
        assert_eq!(rule, DecisionRule::Deterministic(vec![vec![0, 0], vec![0, 0]]));
    }

    #[test]
    fn ties_go_to_lowest_action() {
        let m = FiniteMdp::new(
            vec![vec![vec![1.0], vec![1.0], vec![1.0]]],
            vec![vec![vec![2.0], vec![1.0], vec![1.0]]],
            2,
        )
        .unwrap();
        let (_, rule) = bellman_backward(&m, None).unwrap();
        assert_eq!(rule, DecisionRule::Deterministic(vec![vec![1]]));
    }

    #[test]
    fn lowering_and_rule_checks() {
        let m = two_state_det();
        let uniform = DecisionRule::Randomized(vec![vec![vec![0.5, 0.5]; 2]; 2]);
        let c = lower_to_chain(&m, &uniform, vec![1.0, 0.0]).unwrap();
        assert_eq!(c.kernel(1).row(0), &[0.5, 0.5]);
        let bad = DecisionRule::Randomized(vec![vec![vec![1.2, 0.0]; 2]; 2]);
        assert!(matches!(
            lower_to_chain(&m, &bad, vec![1.0, 0.0]),
            Err(Error::UnnormalizedRule { .. })
        ));
        let bad_action = DecisionRule::Deterministic(vec![vec![0, 2]; 2]);
        assert!(matches!(
            lower_to_chain(&m, &bad_action, vec![1.0, 0.0]),
            Err(Error::InvalidAction { .. })
        ));
    }

    #[test]
    fn enumeration_of_small_chains() {
        let det = MarkovChain::homogeneous(vec![0.0, 1.0], StochasticMatrix::identity(2), 4).unwrap();
        let e = enumerate_paths(&det).unwrap();
        assert_eq!(e.paths(), &[vec![1, 1, 1, 1]]);
        assert_eq!(e.probs(), &[1.0]);

        let coin = MarkovChain::homogeneous(vec![0.5, 0.5], StochasticMatrix::uniform(2, 2), 3).unwrap();
        let e = enumerate_paths(&coin).unwrap();
        assert_eq!(e.len(), 8);
        assert!(e.probs().iter().all(|&p| (p - 0.125).abs() < 1e-15));

        assert!(matches!(
            enumerate_paths_capped(&coin, 7),
            Err(Error::EnumerationCapExceeded { required: 8, cap: 7 })
        ));
    }

    #[test]
    fn path_probability_edges() {
        let det = MarkovChain::homogeneous(vec![1.0, 0.0], StochasticMatrix::identity(2), 3).unwrap();
        assert_eq!(path_probability(&det, &Trajectory(vec![0, 0, 0])).unwrap(), (1.0, 0.0));
        let (p, lp) = path_probability(&det, &Trajectory(vec![0, 1, 1])).unwrap();
        assert_eq!(p, 0.0);
        assert_eq!(lp, f64::NEG_INFINITY);
        assert!(matches!(
            path_probability(&det, &Trajectory(vec![0, 0])),
            Err(Error::LengthMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn sampling_is_reproducible_and_concentrates() {
        let coin = MarkovChain::homogeneous(vec![0.5, 0.5], StochasticMatrix::uniform(2, 2), 2).unwrap();
        let a = sample_paths(&coin, 7, 100_000);
        let b = sample_paths(&coin, 7, 100_000);
        assert_eq!(a, b);
        let zeros = a.iter().filter(|t| t.0[0] == 0).count() as f64 / a.len() as f64;
        assert!((zeros - 0.5).abs() < 0.01);

        let det = MarkovChain::homogeneous(vec![0.0, 1.0], StochasticMatrix::identity(2), 5).unwrap();
        assert!(sample_paths(&det, 3, 50).iter().all(|t| t.0 == vec![1; 5]));
    }

    #[test]
    fn sample_frequencies_match_exact_law() {
        let k = StochasticMatrix::new(vec![vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        let chain = MarkovChain::homogeneous(vec![0.3, 0.7], k, 3).unwrap();
        let exact = enumerate_paths(&chain).unwrap();
        let samples = sample_paths(&chain, 11, 200_000);
        let mut freq: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for s in &samples {
            *freq.entry(s.0.clone()).or_default() += 1;
        }
        for (path, p, _) in exact.iter() {
            let f = *freq.get(path).unwrap_or(&0) as f64 / samples.len() as f64;
            assert!((f - p).abs() < 0.005, "{path:?}: {f} vs {p}");
        }
    }

    #[test]
    fn functional_expectations() {
        let coin = MarkovChain::homogeneous(vec![0.5, 0.5], StochasticMatrix::uniform(2, 2), 3).unwrap();
        let e = enumerate_paths(&coin).unwrap();
        assert!((expected_path_functional(&e, |_| 4.5).unwrap() - 4.5).abs() < 1e-15);
        assert_eq!(
            expected_path_functional(&e, |p| if p[0] == 0 { f64::INFINITY } else { 0.0 }),
            Err(Error::NonFiniteFunctionalOnSupport)
        );
        let v = expected_exp_log(&e, |p| {
            if p[0] == 0 {
                f64::NEG_INFINITY
            } else {
                core::f64::consts::LN_2
            }
        })
        .unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }
}
