//! Trajectory-level stochastic thermodynamics of finite Markov chains.
//!
//! Heat and work follow the protocol convention: the control parameter
//! switches from `π_{k−1}` to `π_k` at state `x_k` (work), then the system
//! relaxes to `x_{k+1}` under `π_k` (heat). Before the first step `π_0 ≡ π_1`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{self, ln_or_neg_inf, log_sum_exp, log_sum_exp_iter, stable_sum, NeumaierSum, StochasticMatrix};
use crate::mdp::{MarkovChain, Trajectory, TrajectoryEnsemble};
use crate::{Error, Result};

/// Row-sum tolerance for backward kernels built from detailed balance.
pub const DETAILED_BALANCE_TOL: f64 = 1e-6;

/// Energy table `E(x, π)`, a protocol `π_1 … π_{N−1}` and inverse temperature `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    energy: Vec<Vec<f64>>,
    protocol: Vec<usize>,
    beta: f64,
}

impl EnergyModel {
    /// `energy[x][π]`; `protocol` holds indices into the second axis.
    pub fn new(energy: Vec<Vec<f64>>, protocol: Vec<usize>, beta: f64) -> Result<Self> {
        if energy.is_empty() {
            return Err(Error::EmptySet("state"));
        }
        let m = energy[0].len();
        if m == 0 {
            return Err(Error::EmptySet("protocol value"));
        }
        for row in &energy {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "energy table",
                    expected: m,
                    found: row.len(),
                });
            }
            if row.iter().any(|e| !e.is_finite()) {
                return Err(Error::NonFiniteValue("energy table"));
            }
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter("beta must be positive and finite"));
        }
        if let Some(&bad) = protocol.iter().find(|&&p| p >= m) {
            return Err(Error::DimensionMismatch {
                what: "protocol value",
                expected: m,
                found: bad,
            });
        }
        Ok(Self { energy, protocol, beta })
    }

    pub fn n_states(&self) -> usize {
        self.energy.len()
    }

    pub fn n_protocol_values(&self) -> usize {
        self.energy[0].len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn protocol(&self) -> &[usize] {
        &self.protocol
    }

    /// `π_k` for `k = 1..N−1`; `π_0` is read as `π_1`.
    pub fn protocol_at(&self, k: usize) -> usize {
        self.protocol[k.max(1) - 1]
    }

    #[inline]
    pub fn energy(&self, x: usize, protocol_value: usize) -> f64 {
        self.energy[x][protocol_value]
    }

    /// `E(·, π)` as a vector.
    pub fn energies(&self, protocol_value: usize) -> Vec<f64> {
        self.energy.iter().map(|row| row[protocol_value]).collect()
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.energy
    }

    /// A copy with a different protocol.
    pub fn with_protocol(&self, protocol: Vec<usize>) -> Result<Self> {
        Self::new(self.energy.clone(), protocol, self.beta)
    }

    /// Gibbs distribution `e^{−βE(·,π)} / Z(π)`.
    pub fn gibbs_distribution(&self, protocol_value: usize) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.n_states())
            .map(|x| -self.beta * self.energy(x, protocol_value))
            .collect();
        let norm = log_sum_exp(&logits);
        logits.iter().map(|l| math::exp(l - norm)).collect()
    }

    /// Metropolis kernel with uniform proposals, in detailed balance with the Gibbs law at `π`.
    pub fn metropolis_kernel(&self, protocol_value: usize) -> StochasticMatrix {
        let n = self.n_states();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            let mut off = NeumaierSum::default();
            for j in 0..n {
                if i == j {
                    continue;
                }
                let de = self.energy(j, protocol_value) - self.energy(i, protocol_value);
                let acc = if de <= 0.0 { 1.0 } else { math::exp(-self.beta * de) };
                let p = acc / n as f64;
                data[i * n + j] = p;
                off.add(p);
            }
            data[i * n + i] = 1.0 - off.value();
        }
        StochasticMatrix::from_normalized(n, n, data)
    }

    /// The chain that relaxes under `π_k` at every step, started from `initial`.
    pub fn driven_chain(&self, initial: Vec<f64>) -> Result<MarkovChain> {
        let kernels = self.protocol.iter().map(|&p| self.metropolis_kernel(p)).collect();
        MarkovChain::new(initial, kernels)
    }
}

/// Per-step heat and work along one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermoLedger {
    pub heat: Vec<f64>,
    pub work: Vec<f64>,
    pub total_heat: f64,
    pub total_work: f64,
    pub first_law_residual: Vec<f64>,
}

/// `Q_k = E(x_{k+1}, π_k) − E(x_k, π_k)` and `W_k = E(x_k, π_k) − E(x_k, π_{k−1})`.
pub fn heat_work_ledger(model: &EnergyModel, traj: &Trajectory) -> Result<ThermoLedger> {
    let path = traj.states();
    if path.is_empty() || model.protocol().len() != path.len() - 1 {
        return Err(Error::ProtocolLengthMismatch {
            expected: path.len().saturating_sub(1),
            found: model.protocol().len(),
        });
    }
    if let Some(&bad) = path.iter().find(|&&x| x >= model.n_states()) {
        return Err(Error::DimensionMismatch {
            what: "trajectory state",
            expected: model.n_states(),
            found: bad,
        });
    }
    let steps = path.len() - 1;
    let mut heat = Vec::with_capacity(steps);
    let mut work = Vec::with_capacity(steps);
    let mut residual = Vec::with_capacity(steps);
    for k in 1..=steps {
        let (x, y) = (path[k - 1], path[k]);
        let (prev, cur) = (model.protocol_at(k - 1), model.protocol_at(k));
        let q = model.energy(y, cur) - model.energy(x, cur);
        let w = model.energy(x, cur) - model.energy(x, prev);
        residual.push((model.energy(y, cur) - model.energy(x, prev)) - (q + w));
        heat.push(q);
        work.push(w);
    }
    Ok(ThermoLedger {
        total_heat: stable_sum(heat.iter().copied()),
        total_work: stable_sum(work.iter().copied()),
        heat,
        work,
        first_law_residual: residual,
    })
}

/// How backward transition probabilities are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardMode {
    /// Time reversal with respect to the stationary law of each step kernel.
    Reversal,
    /// `p_B(i|j) = K(j|i) e^{β(E_j − E_i)}`, which needs detailed balance.
    DetailedBalance,
}

/// True when every state reaches every other through positive entries.
pub fn is_irreducible(kernel: &StochasticMatrix) -> bool {
    let n = kernel.rows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { kernel.get(i, j) } else { kernel.get(j, i) };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(true) && reach(false)
}

/// Stationary distribution by Grassmann–Taksar–Heyman state reduction.
pub fn stationary_distribution(kernel: &StochasticMatrix, step: usize) -> Result<Vec<f64>> {
    if kernel.rows() != kernel.cols() {
        return Err(Error::DimensionMismatch {
            what: "square kernel",
            expected: kernel.rows(),
            found: kernel.cols(),
        });
    }
    if !is_irreducible(kernel) {
        return Err(Error::NotIrreducible { step });
    }
    let n = kernel.rows();
    let mut a = kernel.to_rows();
    for k in (1..n).rev() {
        let s = stable_sum(a[k][..k].iter().copied());
        if !(s > 0.0) {
            return Err(Error::NotIrreducible { step });
        }
        for i in 0..k {
            a[i][k] /= s;
        }
        for i in 0..k {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..k {
                a[i][j] += aik * a[k][j];
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for j in 1..n {
        pi[j] = stable_sum((0..j).map(|i| pi[i] * a[i][j]));
    }
    let total = stable_sum(pi.iter().copied());
    Ok(pi.iter().map(|p| p / total).collect())
}

/// Backward kernel `p_B(x_k | x_{k+1})`, stored with rows indexed by `x_{k+1}`.
///
/// `energies` is required in [`BackwardMode::DetailedBalance`].
pub fn backward_kernel(
    kernel: &StochasticMatrix,
    mode: BackwardMode,
    energies: Option<&[f64]>,
    beta: f64,
    step: usize,
) -> Result<StochasticMatrix> {
    let n = kernel.rows();
    let mut data = vec![0.0; n * n];
    match mode {
        BackwardMode::Reversal => {
            let ss = stationary_distribution(kernel, step)?;
            for j in 0..n {
                for i in 0..n {
                    data[j * n + i] = kernel.get(i, j) * ss[i] / ss[j];
                }
                let sum = stable_sum(data[j * n..(j + 1) * n].iter().copied());
                for v in &mut data[j * n..(j + 1) * n] {
                    *v /= sum;
                }
            }
        }
        BackwardMode::DetailedBalance => {
            let e = energies.ok_or(Error::MissingEnergyModel)?;
            if e.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "energies",
                    expected: n,
                    found: e.len(),
                });
            }
            for j in 0..n {
                for i in 0..n {
                    let k = kernel.get(i, j);
                    data[j * n + i] = if k > 0.0 {
                        k * math::exp(beta * (e[j] - e[i]))
                    } else {
                        0.0
                    };
                }
                let sum = stable_sum(data[j * n..(j + 1) * n].iter().copied());
                if !((sum - 1.0).abs() <= DETAILED_BALANCE_TOL) {
                    return Err(Error::DetailedBalanceViolated { step, row: j, sum });
                }
                for v in &mut data[j * n..(j + 1) * n] {
                    *v /= sum;
                }
            }
        }
    }
    Ok(StochasticMatrix::from_normalized(n, n, data))
}

/// Backward step kernels and the distribution the reversed path starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardChain {
    kernels: Vec<StochasticMatrix>,
    final_dist: Vec<f64>,
}

impl BackwardChain {
    pub fn new(kernels: Vec<StochasticMatrix>, final_dist: Vec<f64>) -> Result<Self> {
        math::check_distribution(&final_dist)?;
        for k in &kernels {
            if k.rows() != final_dist.len() {
                return Err(Error::DimensionMismatch {
                    what: "backward kernel",
                    expected: final_dist.len(),
                    found: k.rows(),
                });
            }
        }
        Ok(Self { kernels, final_dist })
    }

    /// Replaces the final distribution.
    pub fn with_final(mut self, final_dist: Vec<f64>) -> Result<Self> {
        math::check_distribution(&final_dist)?;
        if final_dist.len() != self.final_dist.len() {
            return Err(Error::DimensionMismatch {
                what: "final distribution",
                expected: self.final_dist.len(),
                found: final_dist.len(),
            });
        }
        self.final_dist = final_dist;
        Ok(self)
    }

    pub fn kernels(&self) -> &[StochasticMatrix] {
        &self.kernels
    }

    /// `p_B` for the transition `x_k → x_{k+1}`, `k` counted from 1.
    pub fn kernel(&self, k: usize) -> &StochasticMatrix {
        &self.kernels[k - 1]
    }

    pub fn final_dist(&self) -> &[f64] {
        &self.final_dist
    }

    /// `ln p_B(O) = ln p_final(x_N) + Σ_k ln p_B(x_k | x_{k+1})`.
    pub fn log_path_probability(&self, path: &[usize]) -> f64 {
        let mut lp = ln_or_neg_inf(self.final_dist[path[path.len() - 1]]);
        for (k, w) in path.windows(2).enumerate() {
            if lp == f64::NEG_INFINITY {
                break;
            }
            lp += ln_or_neg_inf(self.kernels[k].get(w[1], w[0]));
        }
        lp
    }
}

/// Builds the backward chain of `chain`; the final distribution is the forward time-`N` marginal.
pub fn backward_chain(chain: &MarkovChain, mode: BackwardMode, model: Option<&EnergyModel>) -> Result<BackwardChain> {
    if mode == BackwardMode::DetailedBalance {
        let m = model.ok_or(Error::MissingEnergyModel)?;
        if m.protocol().len() != chain.kernels().len() {
            return Err(Error::ProtocolLengthMismatch {
                expected: chain.kernels().len(),
                found: m.protocol().len(),
            });
        }
        if m.n_states() != chain.n_states() {
            return Err(Error::DimensionMismatch {
                what: "energy states",
                expected: chain.n_states(),
                found: m.n_states(),
            });
        }
    }
    let mut kernels = Vec::with_capacity(chain.kernels().len());
    for (i, k) in chain.kernels().iter().enumerate() {
        let energies = model.map(|m| m.energies(m.protocol_at(i + 1)));
        let beta = model.map_or(1.0, EnergyModel::beta);
        kernels.push(backward_kernel(k, mode, energies.as_deref(), beta, i + 1)?);
    }
    let final_dist = chain.marginals().pop().expect("horizon at least 1");
    Ok(BackwardChain { kernels, final_dist })
}

/// Pathwise entropy production and its summaries, aligned with the ensemble's path order.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub log_p_forward: Vec<f64>,
    pub log_p_backward: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `Δh^M = ln p_1(x_1) − ln p_N(x_N)`.
    pub system_term: Vec<f64>,
    /// `Σ_k ln[K(x_{k+1}|x_k) / p_B(x_k|x_{k+1})]`.
    pub bath_term: Vec<f64>,
    /// `+∞` as soon as one support path has `σ = +∞`.
    pub mean_sigma: f64,
    /// `E[e^{−σ}]`.
    pub ift: f64,
    /// Number of forward-positive paths with a null backward probability.
    pub infinite_paths: usize,
}

/// Entropy production `σ(O) = ln p(O) − ln p_B(O)` over every support path.
pub fn entropy_production(
    ensemble: &TrajectoryEnsemble,
    chain: &MarkovChain,
    bwd: &BackwardChain,
) -> Result<EntropyReport> {
    if ensemble.horizon() != chain.horizon() {
        return Err(Error::HorizonMismatch {
            expected: chain.horizon(),
            found: ensemble.horizon(),
        });
    }
    if bwd.kernels().len() != chain.kernels().len() {
        return Err(Error::HorizonMismatch {
            expected: chain.kernels().len(),
            found: bwd.kernels().len(),
        });
    }
    let marginals = chain.marginals();
    let p_last = &marginals[marginals.len() - 1];
    let mut report = EntropyReport {
        log_p_forward: Vec::with_capacity(ensemble.len()),
        log_p_backward: Vec::with_capacity(ensemble.len()),
        sigma: Vec::with_capacity(ensemble.len()),
        system_term: Vec::with_capacity(ensemble.len()),
        bath_term: Vec::with_capacity(ensemble.len()),
        mean_sigma: 0.0,
        ift: 0.0,
        infinite_paths: 0,
    };
    let mut mean = NeumaierSum::default();
    for (path, p, lp) in ensemble.iter() {
        let lb = bwd.log_path_probability(path);
        let sigma = lp - lb;
        let system = ln_or_neg_inf(marginals[0][path[0]]) - ln_or_neg_inf(p_last[path[path.len() - 1]]);
        let bath = stable_sum(path.windows(2).enumerate().map(|(k, w)| {
            ln_or_neg_inf(chain.kernels()[k].get(w[0], w[1])) - ln_or_neg_inf(bwd.kernels()[k].get(w[1], w[0]))
        }));
        if sigma == f64::INFINITY {
            report.infinite_paths += 1;
        } else {
            mean.add(p * sigma);
        }
        report.log_p_forward.push(lp);
        report.log_p_backward.push(lb);
        report.sigma.push(sigma);
        report.system_term.push(system);
        report.bath_term.push(bath);
    }
    report.mean_sigma = if report.infinite_paths > 0 {
        f64::INFINITY
    } else {
        mean.value()
    };
    report.ift = math::exp(log_sum_exp(&report.log_p_backward));
    Ok(report)
}

/// `F(π) = −β^{−1} ln Σ_x e^{−βE(x, π)}`.
pub fn free_energy(model: &EnergyModel, protocol_value: usize) -> f64 {
    let beta = model.beta();
    -log_sum_exp_iter((0..model.n_states()).map(|x| -beta * model.energy(x, protocol_value))) / beta
}

/// Average work, free-energy change and their difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondLawGap {
    pub mean_work: f64,
    pub delta_f: f64,
    pub gap: f64,
}

/// `E[W] − [F(π_{N−1}) − F(π_1)]` over an exact path ensemble.
pub fn second_law_gap(ensemble: &TrajectoryEnsemble, model: &EnergyModel) -> Result<SecondLawGap> {
    let mut acc = NeumaierSum::default();
    for (path, p, _) in ensemble.iter() {
        let ledger = heat_work_ledger(model, &Trajectory(path.to_vec()))?;
        acc.add(p * ledger.total_work);
    }
    let mean_work = acc.value();
    let delta_f = if model.protocol().is_empty() {
        0.0
    } else {
        free_energy(model, model.protocol_at(model.protocol().len())) - free_energy(model, model.protocol_at(1))
    };
    Ok(SecondLawGap {
        mean_work,
        delta_f,
        gap: mean_work - delta_f,
    })
}

/// `E[e^{−βW}]`, accumulated in log domain.
pub fn exponential_work_average(ensemble: &TrajectoryEnsemble, model: &EnergyModel) -> Result<f64> {
    let mut terms = Vec::with_capacity(ensemble.len());
    for (path, _, lp) in ensemble.iter() {
        let ledger = heat_work_ledger(model, &Trajectory(path.to_vec()))?;
        terms.push(lp - model.beta() * ledger.total_work);
    }
    Ok(math::exp(log_sum_exp(&terms)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::enumerate_paths;
    use alloc::vec;
    use core::f64::consts::LN_2;

    #[test]
    fn ledger_examples() {
        let flat = EnergyModel::new(vec![vec![1.0, 1.0]; 3], vec![0, 1, 0], 1.0).unwrap();
        let l = heat_work_ledger(&flat, &Trajectory(vec![0, 2, 1, 1])).unwrap();
        assert!(l.heat.iter().chain(&l.work).all(|&v| v == 0.0));

        let m = EnergyModel::new(
            vec![vec![0.0, 5.0], vec![2.0, -1.0], vec![0.5, 0.3]],
            vec![1, 1, 1],
            1.0,
        )
        .unwrap();
        let l = heat_work_ledger(&m, &Trajectory(vec![0, 2, 1, 0])).unwrap();
        assert!(l.work.iter().all(|&w| w == 0.0));
        assert!(l.total_heat.abs() < 1e-15);

        assert!(matches!(
            heat_work_ledger(&m, &Trajectory(vec![0, 1])),
            Err(Error::ProtocolLengthMismatch { .. })
        ));
    }

    #[test]
    fn gth_matches_power_iteration() {
        let k = StochasticMatrix::new(vec![vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2], vec![0.5, 0.0, 0.5]]).unwrap();
        let ss = stationary_distribution(&k, 1).unwrap();
        let mut v = vec![1.0 / 3.0; 3];
        for _ in 0..2000 {
            v = k.push_forward(&v);
        }
        for (a, b) in ss.iter().zip(&v) {
            assert!((a - b).abs() < 1e-14);
        }
        let reducible = StochasticMatrix::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert_eq!(
            stationary_distribution(&reducible, 4),
            Err(Error::NotIrreducible { step: 4 })
        );
    }

    #[test]
    fn backward_kernel_examples() {
        let sym = StochasticMatrix::new(vec![vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        let b = backward_kernel(&sym, BackwardMode::Reversal, None, 1.0, 1).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((b.get(i, j) - sym.get(i, j)).abs() < 1e-15);
            }
        }

        let (beta, e) = (1.3, [0.2, 1.1]);
        let up = 0.2;
        let down = up * math::exp(beta * (e[1] - e[0]));
        let k = StochasticMatrix::new(vec![vec![1.0 - up, up], vec![down.min(1.0), 1.0 - down.min(1.0)]]);
        let k = k.unwrap_or_else(|_| unreachable!());
        let b = backward_kernel(&k, BackwardMode::DetailedBalance, Some(&e), beta, 1).unwrap();
        assert!((b.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let cyc = StochasticMatrix::new(vec![vec![0.1, 0.9, 0.0], vec![0.0, 0.1, 0.9], vec![0.9, 0.0, 0.1]]).unwrap();
        assert!(matches!(
            backward_kernel(&cyc, BackwardMode::DetailedBalance, Some(&[0.0, 0.3, -0.2]), 1.0, 2),
            Err(Error::DetailedBalanceViolated { step: 2, .. })
        ));
        assert_eq!(
            backward_kernel(&cyc, BackwardMode::DetailedBalance, None, 1.0, 2),
            Err(Error::MissingEnergyModel)
        );
    }

    #[test]
    fn stationary_reversible_chain_produces_no_entropy() {
        let sym = StochasticMatrix::new(vec![vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        let chain = MarkovChain::homogeneous(vec![0.5, 0.5], sym, 4).unwrap();
        let ens = enumerate_paths(&chain).unwrap();
        let bwd = backward_chain(&chain, BackwardMode::Reversal, None).unwrap();
        let r = entropy_production(&ens, &chain, &bwd).unwrap();
        assert!(r.sigma.iter().all(|s| s.abs() <= 1e-15));
        assert!((r.ift - 1.0).abs() < 1e-15);
    }

    #[test]
    fn off_stationary_start_matches_path_kl() {
        let sym = StochasticMatrix::new(vec![vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        let chain = MarkovChain::homogeneous(vec![1.0, 0.0], sym, 2).unwrap();
        let ens = enumerate_paths(&chain).unwrap();
        let bwd = backward_chain(&chain, BackwardMode::Reversal, None).unwrap();
        let r = entropy_production(&ens, &chain, &bwd).unwrap();
        // forward paths: (0,0) 0.7, (0,1) 0.3; backward law: p_2 = (0.7, 0.3) then the symmetric kernel
        let pb = |a: usize, b: usize| [0.7, 0.3][b] * if a == b { 0.7 } else { 0.3 };
        let kl = 0.7 * math::ln(0.7 / pb(0, 0)) + 0.3 * math::ln(0.3 / pb(0, 1));
        assert!((r.mean_sigma - kl).abs() < 1e-15);
        assert!(r.mean_sigma > 0.0);
        // the backward law also charges paths that start in state 1, which the forward law never visits
        assert!((r.ift - (1.0 - 2.0 * 0.7 * 0.3)).abs() < 1e-15);
    }

    #[test]
    fn free_energy_examples() {
        let m = EnergyModel::new(vec![vec![3.5]], vec![], 2.0).unwrap();
        assert_eq!(free_energy(&m, 0), 3.5);
        let m = EnergyModel::new(vec![vec![0.0], vec![0.0]], vec![], 1.0).unwrap();
        assert!((free_energy(&m, 0) + LN_2).abs() < 1e-15);
        let m = EnergyModel::new(vec![vec![0.0], vec![1.0]], vec![], 2.0).unwrap();
        assert!((free_energy(&m, 0) + 0.5 * math::ln(1.0 + math::exp(-2.0))).abs() < 1e-15);
        assert!((free_energy(&m, 0) + 0.063464).abs() < 1e-6);
    }

    #[test]
    fn quench_gap_equals_scaled_relative_entropy() {
        let beta = 0.8;
        let m = EnergyModel::new(vec![vec![0.0, 1.0], vec![0.5, -0.7]], vec![0, 1], beta).unwrap();
        let chain = m.driven_chain(m.gibbs_distribution(0)).unwrap();
        let ens = enumerate_paths(&chain).unwrap();
        let g = second_law_gap(&ens, &m).unwrap();
        let kl = math::kl_divergence(&m.gibbs_distribution(0), &m.gibbs_distribution(1)).unwrap();
        assert!((g.gap - kl / beta).abs() < 1e-12);
        let jarzynski = exponential_work_average(&ens, &m).unwrap();
        assert!((jarzynski - math::exp(-beta * g.delta_f)).abs() < 1e-12);
    }
}
