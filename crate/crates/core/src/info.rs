//! Shannon quantities on exact joint laws and the coupled system/decision-maker process.
//!
//! The coupled process has system states `x_1 … x_N` and decision-maker states
//! `d_0 … d_{N−1}` with parents
//!
//! * `x_1 ← d_0`
//! * `x_{k+1} ← (x_k, d_{k−1})` for `k = 1..N−1`
//! * `d_k ← (x_{k−1}, d_{k−1})` for `k = 1..N−1`, where `x_0` is a fixed buffer
//!
//! so `d_1` only sees `d_0`. All quantities are in nats.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{
    self, check_distribution, entropy_nats, ln_or_neg_inf, log_sum_exp, stable_sum, ConditionalKernel, NeumaierSum,
    StochasticMatrix,
};
use crate::mdp::{check_cap, power_count, DEFAULT_PATH_CAP};
use crate::thermo::{backward_kernel, free_energy, BackwardMode, EnergyModel};
use crate::{Error, Result};

/// `−Σ p ln p` of a normalized distribution.
pub fn shannon_entropy(dist: &[f64]) -> Result<f64> {
    check_distribution(dist)?;
    Ok(entropy_nats(dist))
}

fn flatten_2d(joint: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    if joint.is_empty() || joint[0].is_empty() {
        return Err(Error::EmptySet("outcome"));
    }
    let cols = joint[0].len();
    let mut flat = Vec::with_capacity(joint.len() * cols);
    for row in joint {
        if row.len() != cols {
            return Err(Error::DimensionMismatch {
                what: "joint table",
                expected: cols,
                found: row.len(),
            });
        }
        flat.extend_from_slice(row);
    }
    check_distribution(&flat)?;
    Ok((cols, flat))
}

/// `I(X;Y) = H(X) + H(Y) − H(X,Y)` for `joint[x][y]`.
pub fn mutual_information(joint: &[Vec<f64>]) -> Result<f64> {
    let (cols, flat) = flatten_2d(joint)?;
    let px: Vec<f64> = joint.iter().map(|r| stable_sum(r.iter().copied())).collect();
    let py: Vec<f64> = (0..cols).map(|y| stable_sum(joint.iter().map(|r| r[y]))).collect();
    Ok(entropy_nats(&px) + entropy_nats(&py) - entropy_nats(&flat))
}

/// `I(X;Y|Z) = Σ_z p(z) I(X;Y | Z = z)` for `joint[x][y][z]`.
pub fn conditional_mutual_information(joint: &[Vec<Vec<f64>>]) -> Result<f64> {
    if joint.is_empty() || joint[0].is_empty() || joint[0][0].is_empty() {
        return Err(Error::EmptySet("outcome"));
    }
    let (ny, nz) = (joint[0].len(), joint[0][0].len());
    let mut flat = Vec::new();
    for plane in joint {
        if plane.len() != ny {
            return Err(Error::DimensionMismatch {
                what: "joint table",
                expected: ny,
                found: plane.len(),
            });
        }
        for row in plane {
            if row.len() != nz {
                return Err(Error::DimensionMismatch {
                    what: "joint table",
                    expected: nz,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
    }
    check_distribution(&flat)?;
    let mut acc = NeumaierSum::default();
    for z in 0..nz {
        let pz = stable_sum(joint.iter().flat_map(|plane| plane.iter().map(move |row| row[z])));
        if pz <= 0.0 {
            continue;
        }
        let slice: Vec<Vec<f64>> = joint
            .iter()
            .map(|plane| plane.iter().map(|row| row[z] / pz).collect())
            .collect();
        let px: Vec<f64> = slice.iter().map(|r| stable_sum(r.iter().copied())).collect();
        let py: Vec<f64> = (0..ny).map(|y| stable_sum(slice.iter().map(|r| r[y]))).collect();
        let hxy = entropy_nats(&slice.concat());
        acc.add(pz * (entropy_nats(&px) + entropy_nats(&py) - hxy));
    }
    Ok(acc.value())
}

/// A finite joint law over integer tuples, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    outcomes: Vec<Vec<usize>>,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(outcomes: Vec<Vec<usize>>, probs: Vec<f64>) -> Result<Self> {
        if outcomes.len() != probs.len() {
            return Err(Error::LengthMismatch {
                expected: outcomes.len(),
                found: probs.len(),
            });
        }
        check_distribution(&probs)?;
        Ok(Self { outcomes, probs })
    }

    pub fn outcomes(&self) -> &[Vec<usize>] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Marginal law of the listed coordinates, keyed by their values in order.
    pub fn marginal(&self, coords: &[usize]) -> BTreeMap<Vec<usize>, f64> {
        let mut acc: BTreeMap<Vec<usize>, NeumaierSum> = BTreeMap::new();
        for (o, &p) in self.outcomes.iter().zip(&self.probs) {
            let key: Vec<usize> = coords.iter().map(|&c| o[c]).collect();
            acc.entry(key).or_default().add(p);
        }
        acc.into_iter().map(|(k, v)| (k, v.value())).collect()
    }

    /// Joint entropy of the listed coordinates; the empty set has entropy zero.
    pub fn entropy(&self, coords: &[usize]) -> f64 {
        if coords.is_empty() {
            return 0.0;
        }
        let m = self.marginal(coords);
        -stable_sum(m.values().filter(|&&p| p > 0.0).map(|&p| p * math::ln(p)))
    }

    /// `I(A;B) = H(A) + H(B) − H(A,B)`.
    pub fn mutual_information(&self, a: &[usize], b: &[usize]) -> f64 {
        self.conditional_mutual_information(a, b, &[])
    }

    /// `I(A;B|C) = H(A,C) + H(B,C) − H(A,B,C) − H(C)`.
    pub fn conditional_mutual_information(&self, a: &[usize], b: &[usize], c: &[usize]) -> f64 {
        let ac: Vec<usize> = a.iter().chain(c).copied().collect();
        let bc: Vec<usize> = b.iter().chain(c).copied().collect();
        let abc: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
        self.entropy(&ac) + self.entropy(&bc) - self.entropy(&abc) - self.entropy(c)
    }
}

/// The coupled system/decision-maker process.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSystem {
    n_x: usize,
    n_d: usize,
    horizon: usize,
    d_initial: Vec<f64>,
    x_initial: StochasticMatrix,
    d_kernels: Vec<ConditionalKernel>,
    x_kernels: Vec<ConditionalKernel>,
}

impl CoupledSystem {
    /// Builds and validates a coupled process.
    ///
    /// * `d_initial`: law of `d_0`.
    /// * `x_initial`: rows indexed by `d_0`, giving the law of `x_1`.
    /// * `d_kernels[k−1]`: `ν_k(d_k | x_{k−1}, d_{k−1})` with contexts `x_{k−1}`; the `k = 1`
    ///   entry has a single context, the buffer.
    /// * `x_kernels[k−1]`: `p(x_{k+1} | x_k, d_{k−1})` with contexts `d_{k−1}`.
    pub fn new(
        d_initial: Vec<f64>,
        x_initial: StochasticMatrix,
        d_kernels: Vec<ConditionalKernel>,
        x_kernels: Vec<ConditionalKernel>,
    ) -> Result<Self> {
        check_distribution(&d_initial)?;
        let n_d = d_initial.len();
        let n_x = x_initial.cols();
        if x_initial.rows() != n_d {
            return Err(Error::DimensionMismatch {
                what: "x initial rows",
                expected: n_d,
                found: x_initial.rows(),
            });
        }
        if d_kernels.len() != x_kernels.len() {
            return Err(Error::HorizonMismatch {
                expected: x_kernels.len(),
                found: d_kernels.len(),
            });
        }
        for (i, dk) in d_kernels.iter().enumerate() {
            let contexts = if i == 0 { 1 } else { n_x };
            if dk.contexts() != contexts || dk.from_size() != n_d || dk.to_size() != n_d {
                return Err(Error::DimensionMismatch {
                    what: "decision kernel",
                    expected: contexts * n_d * n_d,
                    found: dk.contexts() * dk.from_size() * dk.to_size(),
                });
            }
        }
        for xk in &x_kernels {
            if xk.contexts() != n_d || xk.from_size() != n_x || xk.to_size() != n_x {
                return Err(Error::DimensionMismatch {
                    what: "system kernel",
                    expected: n_d * n_x * n_x,
                    found: xk.contexts() * xk.from_size() * xk.to_size(),
                });
            }
        }
        Ok(Self {
            n_x,
            n_d,
            horizon: x_kernels.len() + 1,
            d_initial,
            x_initial,
            d_kernels,
            x_kernels,
        })
    }

    /// Variant with `x_1` drawn independently of `d_0`.
    pub fn with_independent_start(
        x_initial: Vec<f64>,
        d_initial: Vec<f64>,
        d_kernels: Vec<ConditionalKernel>,
        x_kernels: Vec<ConditionalKernel>,
    ) -> Result<Self> {
        check_distribution(&x_initial)?;
        let rows = StochasticMatrix::repeat_row(d_initial.len(), &x_initial);
        Self::new(d_initial, rows, d_kernels, x_kernels)
    }

    /// A feedback process under an energy table `energy[x][d]`.
    ///
    /// `x_1` is drawn from the Gibbs law at `d_0` and every system step relaxes with
    /// the Metropolis kernel at the current control `d_{k−1}`, so each context is in
    /// detailed balance with its own energies.
    pub fn feedback_process(
        energy: &EnergyModel,
        d_initial: Vec<f64>,
        d_kernels: Vec<ConditionalKernel>,
    ) -> Result<Self> {
        let n_d = d_initial.len();
        if energy.n_protocol_values() != n_d {
            return Err(Error::DimensionMismatch {
                what: "energy protocol values",
                expected: n_d,
                found: energy.n_protocol_values(),
            });
        }
        let n_x = energy.n_states();
        let gibbs: Vec<f64> = (0..n_d).flat_map(|d| energy.gibbs_distribution(d)).collect();
        let x_initial = StochasticMatrix::from_normalized(n_d, n_x, gibbs);
        let mut data = Vec::with_capacity(n_d * n_x * n_x);
        for d in 0..n_d {
            let k = energy.metropolis_kernel(d);
            for i in 0..n_x {
                data.extend_from_slice(k.row(i));
            }
        }
        let step = ConditionalKernel::from_normalized(n_d, n_x, n_x, data);
        let steps = d_kernels.len();
        Self::new(d_initial, x_initial, d_kernels, vec![step; steps])
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn d_initial(&self) -> &[f64] {
        &self.d_initial
    }

    pub fn x_initial(&self) -> &StochasticMatrix {
        &self.x_initial
    }

    pub fn d_kernels(&self) -> &[ConditionalKernel] {
        &self.d_kernels
    }

    pub fn x_kernels(&self) -> &[ConditionalKernel] {
        &self.x_kernels
    }

    /// Coordinate of `x_k` (`k = 1..N`) in an enumerated outcome.
    pub fn x_coord(&self, k: usize) -> usize {
        k - 1
    }

    /// Coordinate of `d_k` (`k = 0..N−1`) in an enumerated outcome.
    pub fn d_coord(&self, k: usize) -> usize {
        self.horizon + k
    }

    /// `ν_k(d_k | x_{k−1}, d_{k−1})`; `x_prev` is ignored at `k = 1`.
    pub fn nu(&self, k: usize, x_prev: usize, d_prev: usize) -> &[f64] {
        let ctx = if k == 1 { 0 } else { x_prev };
        self.d_kernels[k - 1].row(ctx, d_prev)
    }

    /// `p(x_{k+1} | x_k, d_{k−1})`.
    pub fn step(&self, k: usize, x: usize, d_prev: usize) -> &[f64] {
        self.x_kernels[k - 1].row(d_prev, x)
    }
}

/// Exact joint law of a coupled process.
///
/// Outcomes are `[x_1, …, x_N, d_0, …, d_{N−1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledEnsemble {
    horizon: usize,
    table: JointTable,
    log_probs: Vec<f64>,
}

impl CoupledEnsemble {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn table(&self) -> &JointTable {
        &self.table
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn x_coords(&self) -> Vec<usize> {
        (0..self.horizon).collect()
    }

    pub fn d_coords(&self) -> Vec<usize> {
        (self.horizon..2 * self.horizon).collect()
    }
}

/// Enumerates the coupled process under [`DEFAULT_PATH_CAP`].
pub fn build_coupled_ensemble(sys: &CoupledSystem) -> Result<CoupledEnsemble> {
    build_coupled_ensemble_capped(sys, DEFAULT_PATH_CAP)
}

/// Enumerates the coupled process, refusing when `(|X|·|D|)^N > cap`.
pub fn build_coupled_ensemble_capped(sys: &CoupledSystem, cap: u64) -> Result<CoupledEnsemble> {
    let n = sys.horizon();
    check_cap(power_count(sys.n_x() * sys.n_d(), n), cap)?;
    let mut outcomes = Vec::new();
    let mut probs = Vec::new();
    let mut log_probs = Vec::new();
    let mut xs = vec![0usize; n];
    let mut ds = vec![0usize; n];
    for d0 in 0..sys.n_d() {
        let l0 = ln_or_neg_inf(sys.d_initial()[d0]);
        if l0 == f64::NEG_INFINITY {
            continue;
        }
        ds[0] = d0;
        for x1 in 0..sys.n_x() {
            let l1 = ln_or_neg_inf(sys.x_initial().get(d0, x1));
            if l1 == f64::NEG_INFINITY {
                continue;
            }
            xs[0] = x1;
            let mut emit = |xs: &[usize], ds: &[usize], lp: f64| {
                outcomes.push(xs.iter().chain(ds).copied().collect());
                probs.push(math::exp(lp));
                log_probs.push(lp);
            };
            extend_coupled(sys, 1, &mut xs, &mut ds, l0 + l1, &mut emit);
        }
    }
    Ok(CoupledEnsemble {
        horizon: n,
        table: JointTable { outcomes, probs },
        log_probs,
    })
}

fn extend_coupled<F>(sys: &CoupledSystem, k: usize, xs: &mut [usize], ds: &mut [usize], lp: f64, emit: &mut F)
where
    F: FnMut(&[usize], &[usize], f64),
{
    if k == sys.horizon() {
        emit(xs, ds, lp);
        return;
    }
    // d_k from (x_{k−1}, d_{k−1}), then x_{k+1} from (x_k, d_{k−1})
    let x_prev = if k >= 2 { xs[k - 2] } else { 0 };
    let d_prev = ds[k - 1];
    let nu = sys.nu(k, x_prev, d_prev).to_vec();
    let step = sys.step(k, xs[k - 1], d_prev).to_vec();
    for (dk, &pd) in nu.iter().enumerate() {
        if pd <= 0.0 {
            continue;
        }
        ds[k] = dk;
        for (xn, &px) in step.iter().enumerate() {
            if px <= 0.0 {
                continue;
            }
            xs[k] = xn;
            extend_coupled(sys, k + 1, xs, ds, lp + math::ln(pd) + math::ln(px), emit);
        }
    }
}

/// Information flows of a coupled process.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoExchangeReport {
    /// `I(x_1; d_0)`.
    pub i_ini: f64,
    /// `I(x_N; d_0, …, d_{N−1})`.
    pub i_fin: f64,
    /// `I(d_k; x_{k−1} | d_0, …, d_{k−1})` for `k = 1..N−1`.
    pub i_tr_per_step: Vec<f64>,
    /// `I(d_k; x_{k−1} | d_{k−1})` for `k = 1..N−1`.
    pub i_tr_reduced_per_step: Vec<f64>,
    pub i_tr_total: f64,
    /// `I_fin − I_tr − I_ini`.
    pub theta: f64,
}

/// Computes every information term on the exact joint law.
pub fn info_exchange(ens: &CoupledEnsemble) -> InfoExchangeReport {
    let n = ens.horizon();
    let t = ens.table();
    let x = |k: usize| k - 1;
    let d = |k: usize| n + k;
    let i_ini = t.mutual_information(&[x(1)], &[d(0)]);
    let i_fin = t.mutual_information(&[x(n)], &ens.d_coords());
    let mut full = Vec::with_capacity(n.saturating_sub(1));
    let mut reduced = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        if k == 1 {
            // x_0 is a constant buffer
            full.push(0.0);
            reduced.push(0.0);
            continue;
        }
        let history: Vec<usize> = (0..k).map(d).collect();
        full.push(t.conditional_mutual_information(&[d(k)], &[x(k - 1)], &history));
        reduced.push(t.conditional_mutual_information(&[d(k)], &[x(k - 1)], &[d(k - 1)]));
    }
    let i_tr_total = stable_sum(full.iter().copied());
    InfoExchangeReport {
        i_ini,
        i_fin,
        theta: i_fin - i_tr_total - i_ini,
        i_tr_per_step: full,
        i_tr_reduced_per_step: reduced,
        i_tr_total,
    }
}

/// Entropy production of the system part against the information exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedSecondLaw {
    pub info: InfoExchangeReport,
    /// `σ` per enumerated joint path, aligned with the ensemble.
    pub sigma: Vec<f64>,
    pub mean_sigma: f64,
    /// `E[σ] − Θ`.
    pub gap: f64,
    /// `E[e^{−σ}]`; not one in general once the decision maker feeds back.
    pub ift: f64,
    /// `E[e^{−σ + θ}]` with the pathwise information exchange `θ`; one under exact enumeration.
    pub ift_joint: f64,
    pub infinite_paths: usize,
}

/// Audits `E[σ] ≥ Θ` on the exact joint law.
///
/// Backward kernels are built per step and per controlling context `d_{k−1}`;
/// in detailed-balance mode `energy[x][d]` supplies the energies of context `d`.
/// The final distribution in `σ` is the joint `x_N` marginal.
pub fn generalized_second_law_gap(
    sys: &CoupledSystem,
    mode: BackwardMode,
    energy: Option<&EnergyModel>,
) -> Result<GeneralizedSecondLaw> {
    generalized_second_law_gap_capped(sys, mode, energy, DEFAULT_PATH_CAP)
}

pub fn generalized_second_law_gap_capped(
    sys: &CoupledSystem,
    mode: BackwardMode,
    energy: Option<&EnergyModel>,
    cap: u64,
) -> Result<GeneralizedSecondLaw> {
    if mode == BackwardMode::DetailedBalance {
        let e = energy.ok_or(Error::MissingEnergyModel)?;
        if e.n_states() != sys.n_x() || e.n_protocol_values() != sys.n_d() {
            return Err(Error::DimensionMismatch {
                what: "energy table",
                expected: sys.n_x() * sys.n_d(),
                found: e.n_states() * e.n_protocol_values(),
            });
        }
    }
    let ens = build_coupled_ensemble_capped(sys, cap)?;
    let info = info_exchange(&ens);
    let n = sys.horizon();
    let beta = energy.map_or(1.0, EnergyModel::beta);
    // backward[k−1][d] reverses p(· | ·, d) at step k
    let mut backward = Vec::with_capacity(n - 1);
    for k in 1..n {
        let mut per_context = Vec::with_capacity(sys.n_d());
        for d in 0..sys.n_d() {
            let energies = energy.map(|e| e.energies(d));
            per_context.push(backward_kernel(
                &sys.x_kernels()[k - 1].matrix(d),
                mode,
                energies.as_deref(),
                beta,
                k,
            )?);
        }
        backward.push(per_context);
    }

    let t = ens.table();
    let x = |k: usize| k - 1;
    let d = |k: usize| n + k;
    let all_d: Vec<usize> = (0..n).map(d).collect();
    let p_x1 = t.marginal(&[x(1)]);
    let p_xn = t.marginal(&[x(n)]);
    let p_x1_d0 = t.marginal(&[x(1), d(0)]);
    let p_d0 = t.marginal(&[d(0)]);
    let p_xn_d = t.marginal(&[&[x(n)][..], &all_d].concat());
    let p_d = t.marginal(&all_d);
    let p_d_prefix: Vec<BTreeMap<Vec<usize>, f64>> = (1..=n).map(|m| t.marginal(&all_d[..m])).collect();
    let lookup = |m: &BTreeMap<Vec<usize>, f64>, key: Vec<usize>| ln_or_neg_inf(*m.get(&key).unwrap_or(&0.0));

    let mut sigma = Vec::with_capacity(ens.len());
    let mut mean = NeumaierSum::default();
    let mut ift_terms = Vec::with_capacity(ens.len());
    let mut joint_terms = Vec::with_capacity(ens.len());
    let mut infinite = 0;
    for (o, &lp) in t.outcomes().iter().zip(ens.log_probs()) {
        let xs = &o[..n];
        let ds = &o[n..];
        let mut s = lookup(&p_x1, vec![xs[0]]) - lookup(&p_xn, vec![xs[n - 1]]);
        for k in 1..n {
            let fwd = sys.step(k, xs[k - 1], ds[k - 1])[xs[k]];
            let bwd = backward[k - 1][ds[k - 1]].get(xs[k], xs[k - 1]);
            s += math::ln(fwd) - ln_or_neg_inf(bwd);
        }
        // pathwise information exchange
        let mut theta =
            lookup(&p_xn_d, [&xs[n - 1..], ds].concat()) - lookup(&p_d, ds.to_vec()) - lookup(&p_xn, vec![xs[n - 1]]);
        theta -= lookup(&p_x1_d0, vec![xs[0], ds[0]]) - lookup(&p_d0, vec![ds[0]]) - lookup(&p_x1, vec![xs[0]]);
        for k in 1..n {
            let x_prev = if k >= 2 { xs[k - 2] } else { 0 };
            let nu = sys.nu(k, x_prev, ds[k - 1])[ds[k]];
            let cond = lookup(&p_d_prefix[k], ds[..=k].to_vec()) - lookup(&p_d_prefix[k - 1], ds[..k].to_vec());
            theta -= math::ln(nu) - cond;
        }
        if s == f64::INFINITY {
            infinite += 1;
        } else {
            mean.add(math::exp(lp) * s);
        }
        ift_terms.push(lp - s);
        joint_terms.push(lp - s + theta);
        sigma.push(s);
    }
    let mean_sigma = if infinite > 0 { f64::INFINITY } else { mean.value() };
    Ok(GeneralizedSecondLaw {
        gap: mean_sigma - info.theta,
        info,
        sigma,
        mean_sigma,
        ift: math::exp(log_sum_exp(&ift_terms)),
        ift_joint: math::exp(log_sum_exp(&joint_terms)),
        infinite_paths: infinite,
    })
}

/// Work and free-energy balance of a feedback process where `π_k = d_{k−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackWorkReport {
    /// `E[Σ_k E(x_k, d_{k−1}) − E(x_k, d_{k−2})]` with `d_{−1} ≡ d_0`.
    pub mean_work: f64,
    /// `E[F(d_{N−2}) − F(d_0)]`.
    pub mean_delta_f: f64,
    pub beta: f64,
    pub info: InfoExchangeReport,
    /// `I(x_N; d_{N−2})`, the correlation with the last control actually applied.
    pub i_last_control: f64,
    /// `(W − ΔF) + β^{−1} Θ`; nonnegative when `W − ΔF ≥ −β^{−1} Θ`.
    pub literal_slack: f64,
    /// `β(W − ΔF) − (Θ + I_ini − I(x_N; d_{N−2}))`.
    pub derived_slack: f64,
}

/// Evaluates the work balance of a Gibbs-started, detailed-balanced feedback process.
///
/// Requires `N ≥ 2`; build the process with [`CoupledSystem::feedback_process`].
pub fn feedback_work_gap(sys: &CoupledSystem, energy: &EnergyModel) -> Result<FeedbackWorkReport> {
    feedback_work_gap_capped(sys, energy, DEFAULT_PATH_CAP)
}

pub fn feedback_work_gap_capped(sys: &CoupledSystem, energy: &EnergyModel, cap: u64) -> Result<FeedbackWorkReport> {
    let n = sys.horizon();
    if n < 2 {
        return Err(Error::InvalidParameter("feedback work needs a horizon of at least 2"));
    }
    if energy.n_states() != sys.n_x() || energy.n_protocol_values() != sys.n_d() {
        return Err(Error::DimensionMismatch {
            what: "energy table",
            expected: sys.n_x() * sys.n_d(),
            found: energy.n_states() * energy.n_protocol_values(),
        });
    }
    let ens = build_coupled_ensemble_capped(sys, cap)?;
    let info = info_exchange(&ens);
    let free: Vec<f64> = (0..sys.n_d()).map(|d| free_energy(energy, d)).collect();
    let mut work = NeumaierSum::default();
    let mut delta_f = NeumaierSum::default();
    for (o, &p) in ens.table().outcomes().iter().zip(ens.table().probs()) {
        let xs = &o[..n];
        let ds = &o[n..];
        let control = |k: usize| ds[k.max(1) - 1];
        let w =
            stable_sum((1..n).map(|k| energy.energy(xs[k - 1], control(k)) - energy.energy(xs[k - 1], control(k - 1))));
        work.add(p * w);
        delta_f.add(p * (free[control(n - 1)] - free[control(1)]));
    }
    let t = ens.table();
    let i_last_control = t.mutual_information(&[n - 1], &[n + n - 2]);
    let (mean_work, mean_delta_f) = (work.value(), delta_f.value());
    let beta = energy.beta();
    Ok(FeedbackWorkReport {
        literal_slack: (mean_work - mean_delta_f) + info.theta / beta,
        derived_slack: beta * (mean_work - mean_delta_f) - (info.theta + info.i_ini - i_last_control),
        mean_work,
        mean_delta_f,
        beta,
        info,
        i_last_control,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::LN_2;

    #[test]
    fn entropy_examples() {
        assert_eq!(shannon_entropy(&[0.0, 1.0]).unwrap(), 0.0);
        assert!((shannon_entropy(&[0.25; 4]).unwrap() - math::ln(4.0)).abs() < 1e-15);
        assert!((shannon_entropy(&[0.75, 0.25]).unwrap() - 0.562335).abs() < 1e-6);
        assert!(matches!(shannon_entropy(&[0.5, 0.4]), Err(Error::Unnormalized { .. })));
    }

    #[test]
    fn mutual_information_examples() {
        let prod = [vec![0.12, 0.28], vec![0.18, 0.42]];
        assert!(mutual_information(&prod).unwrap().abs() < 1e-12);
        let copy = [vec![0.5, 0.0], vec![0.0, 0.5]];
        assert!((mutual_information(&copy).unwrap() - LN_2).abs() < 1e-15);
        let j = [vec![0.4, 0.1], vec![0.1, 0.4]];
        let mi = mutual_information(&j).unwrap();
        let kl = math::kl_divergence(&[0.4, 0.1, 0.1, 0.4], &[0.25; 4]).unwrap();
        assert!((mi - kl).abs() < 1e-15);
        assert!((mi - 0.192745).abs() < 1e-6);
    }

    #[test]
    fn conditional_information_examples() {
        // X and Y independent given Z
        let mut joint = vec![vec![vec![0.0; 2]; 2]; 2];
        let pz = [0.3, 0.7];
        let px_z = [[0.2, 0.8], [0.6, 0.4]];
        let py_z = [[0.5, 0.5], [0.9, 0.1]];
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    joint[x][y][z] = pz[z] * px_z[z][x] * py_z[z][y];
                }
            }
        }
        assert!(conditional_mutual_information(&joint).unwrap().abs() < 1e-12);

        let j2 = [vec![0.4, 0.1], vec![0.1, 0.4]];
        let lifted: Vec<Vec<Vec<f64>>> = j2.iter().map(|r| r.iter().map(|&p| vec![p]).collect()).collect();
        let cmi = conditional_mutual_information(&lifted).unwrap();
        assert!((cmi - mutual_information(&j2).unwrap()).abs() < 1e-15);
    }

    fn copy_system(horizon: usize) -> CoupledSystem {
        // x i.i.d. uniform bits, d_k copies x_{k−1}
        let n = 2;
        let copy: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|x| {
                (0..n)
                    .map(|_| (0..n).map(|d| if d == x { 1.0 } else { 0.0 }).collect())
                    .collect()
            })
            .collect();
        let mut d_kernels = vec![ConditionalKernel::broadcast(1, &StochasticMatrix::uniform(n, n))];
        for _ in 2..horizon {
            d_kernels.push(ConditionalKernel::new(copy.clone()).unwrap());
        }
        let x_kernels = vec![ConditionalKernel::broadcast(n, &StochasticMatrix::uniform(n, n)); horizon - 1];
        CoupledSystem::with_independent_start(vec![0.5, 0.5], vec![1.0, 0.0], d_kernels, x_kernels).unwrap()
    }

    #[test]
    fn measurement_transfers_one_bit_per_step() {
        let sys = copy_system(4);
        let ens = build_coupled_ensemble(&sys).unwrap();
        assert!((ens.table().probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let r = info_exchange(&ens);
        assert_eq!(r.i_tr_per_step[0], 0.0);
        for k in 1..3 {
            assert!((r.i_tr_per_step[k] - LN_2).abs() < 1e-12);
            assert!((r.i_tr_reduced_per_step[k] - LN_2).abs() < 1e-12);
        }
        assert!(r.i_ini.abs() < 1e-12);
    }

    #[test]
    fn trivial_and_capped_ensembles() {
        let one = CoupledSystem::with_independent_start(
            vec![1.0],
            vec![1.0],
            vec![ConditionalKernel::broadcast(1, &StochasticMatrix::identity(1))],
            vec![ConditionalKernel::broadcast(1, &StochasticMatrix::identity(1))],
        )
        .unwrap();
        let ens = build_coupled_ensemble(&one).unwrap();
        assert_eq!(ens.len(), 1);
        assert_eq!(ens.table().probs(), &[1.0]);
        assert!(matches!(
            build_coupled_ensemble_capped(&copy_system(3), 63),
            Err(Error::EnumerationCapExceeded { required: 64, cap: 63 })
        ));
    }

    #[test]
    fn joint_table_chain_rule() {
        let outcomes = vec![
            vec![0, 0, 0],
            vec![0, 1, 1],
            vec![1, 0, 1],
            vec![1, 1, 0],
            vec![1, 1, 1],
        ];
        let t = JointTable::new(outcomes, vec![0.1, 0.2, 0.3, 0.15, 0.25]).unwrap();
        let lhs = t.mutual_information(&[0], &[1, 2]);
        let rhs = t.mutual_information(&[0], &[2]) + t.conditional_mutual_information(&[0], &[1], &[2]);
        assert!((lhs - rhs).abs() < 1e-15);
    }
}
