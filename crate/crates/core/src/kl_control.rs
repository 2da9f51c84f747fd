//! Linearly-solvable (KL-control) MDPs.
//!
//! The controller picks a successor law `a(·|s)` and pays
//! `q(s, a) = ℓ(s) + KL(a(·|s) ‖ p(·|s))`. The finite-horizon value obeys
//! `V_t(s) = ℓ(s) − ln G_t(s)` with `G_t(s) = Σ_{s′} p(s′|s) e^{−V_{t+1}(s′)}`,
//! and the minimizing law is `a*(s′|s) ∝ p(s′|s) e^{−V_{t+1}(s′)}`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{self, kl_divergence, ln_or_neg_inf, log_sum_exp_iter, stable_sum, StochasticMatrix};
use crate::mdp::ValueTable;
use crate::{Error, Result};

/// Uncontrolled dynamics `p(s′|s)`, state cost `ℓ(s)`, horizon and terminal value.
#[derive(Debug, Clone, PartialEq)]
pub struct PassiveDynamics {
    kernel: StochasticMatrix,
    state_cost: Vec<f64>,
    horizon: usize,
    terminal: Vec<f64>,
}

impl PassiveDynamics {
    /// `terminal` defaults to zero.
    pub fn new(
        kernel: StochasticMatrix,
        state_cost: Vec<f64>,
        horizon: usize,
        terminal: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = kernel.rows();
        if kernel.cols() != n {
            return Err(Error::DimensionMismatch {
                what: "passive kernel",
                expected: n,
                found: kernel.cols(),
            });
        }
        if state_cost.len() != n {
            return Err(Error::DimensionMismatch {
                what: "state cost",
                expected: n,
                found: state_cost.len(),
            });
        }
        if state_cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteValue("state cost"));
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1"));
        }
        let terminal = terminal.unwrap_or_else(|| vec![0.0; n]);
        if terminal.len() != n {
            return Err(Error::DimensionMismatch {
                what: "terminal values",
                expected: n,
                found: terminal.len(),
            });
        }
        if terminal.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteValue("terminal values"));
        }
        Ok(Self {
            kernel,
            state_cost,
            horizon,
            terminal,
        })
    }

    pub fn n_states(&self) -> usize {
        self.state_cost.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn kernel(&self) -> &StochasticMatrix {
        &self.kernel
    }

    pub fn state_cost(&self) -> &[f64] {
        &self.state_cost
    }

    pub fn terminal(&self) -> &[f64] {
        &self.terminal
    }
}

/// A successor law per transition slot `t = 1..N−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLaw {
    kernels: Vec<StochasticMatrix>,
}

impl ControlLaw {
    pub fn new(kernels: Vec<StochasticMatrix>) -> Self {
        Self { kernels }
    }

    /// The same law at every one of `steps` slots.
    pub fn stationary(kernel: StochasticMatrix, steps: usize) -> Self {
        Self {
            kernels: vec![kernel; steps],
        }
    }

    pub fn kernels(&self) -> &[StochasticMatrix] {
        &self.kernels
    }

    /// `a_t` with `t` counted from 1.
    pub fn kernel(&self, t: usize) -> &StochasticMatrix {
        &self.kernels[t - 1]
    }
}

/// Log-desirabilities `ln z_t = −V_t` for `t = 1..N` and `ln G_t` for `t = 1..N−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesirabilityTable {
    log_z: Vec<Vec<f64>>,
    log_g: Vec<Vec<f64>>,
}

impl DesirabilityTable {
    pub fn log_z(&self, t: usize, s: usize) -> f64 {
        self.log_z[t - 1][s]
    }

    pub fn log_g(&self, t: usize, s: usize) -> f64 {
        self.log_g[t - 1][s]
    }

    /// `z_t(s)`; may underflow to zero for large values, unlike [`Self::log_z`].
    pub fn z(&self, t: usize, s: usize) -> f64 {
        math::exp(self.log_z(t, s))
    }

    pub fn g(&self, t: usize, s: usize) -> f64 {
        math::exp(self.log_g(t, s))
    }
}

/// `ℓ(s) + Σ_{s′} a(s′|s) ln(a(s′|s)/p(s′|s))`.
pub fn kl_stage_cost(a: &[f64], p: &[f64], state_cost: f64) -> Result<f64> {
    Ok(state_cost + kl_divergence(a, p)?)
}

/// `ln Σ_{s′} p(s′) e^{−v(s′)}`, skipping structural zeros of `p`.
pub fn log_partition(p: &[f64], v: &[f64]) -> f64 {
    log_sum_exp_iter(
        p.iter()
            .zip(v)
            .filter(|(&q, _)| q > 0.0)
            .map(|(&q, &x)| ln_or_neg_inf(q) - x),
    )
}

/// Backward log-partition recursion from the terminal value.
pub fn kl_value_backward(passive: &PassiveDynamics) -> (ValueTable, DesirabilityTable) {
    let n = passive.horizon();
    let mut values = vec![Vec::new(); n];
    let mut log_g = vec![Vec::new(); n - 1];
    values[n - 1] = passive.terminal().to_vec();
    for t in (1..n).rev() {
        let next = values[t].clone();
        let g: Vec<f64> = (0..passive.n_states())
            .map(|s| log_partition(passive.kernel().row(s), &next))
            .collect();
        values[t - 1] = g.iter().zip(passive.state_cost()).map(|(lg, l)| l - lg).collect();
        log_g[t - 1] = g;
    }
    let log_z = values.iter().map(|row| row.iter().map(|v| -v).collect()).collect();
    (ValueTable::from_raw(values), DesirabilityTable { log_z, log_g })
}

/// Tilts `p` by `e^{−v}` in log domain.
pub(crate) fn tilt_row(p: &[f64], v: &[f64], row: usize) -> Result<Vec<f64>> {
    let norm = log_partition(p, v);
    if !norm.is_finite() {
        return Err(Error::DegenerateRow { row });
    }
    Ok(p.iter()
        .zip(v)
        .map(|(&q, &x)| {
            if q > 0.0 {
                math::exp(math::ln(q) - x - norm)
            } else {
                0.0
            }
        })
        .collect())
}

/// `a*_t(s′|s) = p(s′|s) e^{−V_{t+1}(s′)} / G_t(s)` for every slot.
pub fn optimal_control(passive: &PassiveDynamics, values: &ValueTable) -> Result<ControlLaw> {
    let n = passive.horizon();
    if values.horizon() != n {
        return Err(Error::HorizonMismatch {
            expected: n,
            found: values.horizon(),
        });
    }
    let m = passive.n_states();
    let mut kernels = Vec::with_capacity(n - 1);
    for t in 1..n {
        let next = values.at(t + 1);
        let mut data = Vec::with_capacity(m * m);
        for s in 0..m {
            data.extend(tilt_row(passive.kernel().row(s), next, s)?);
        }
        kernels.push(StochasticMatrix::from_normalized(m, m, data));
    }
    Ok(ControlLaw { kernels })
}

/// Value of an arbitrary control law under the KL-control objective.
pub fn evaluate_control(passive: &PassiveDynamics, control: &ControlLaw) -> Result<ValueTable> {
    let n = passive.horizon();
    if control.kernels().len() != n - 1 {
        return Err(Error::HorizonMismatch {
            expected: n - 1,
            found: control.kernels().len(),
        });
    }
    let m = passive.n_states();
    let mut values = vec![Vec::new(); n];
    values[n - 1] = passive.terminal().to_vec();
    for t in (1..n).rev() {
        let a = control.kernel(t);
        if a.rows() != m || a.cols() != m {
            return Err(Error::DimensionMismatch {
                what: "control law",
                expected: m,
                found: a.rows(),
            });
        }
        let next = values[t].clone();
        let mut v_t = Vec::with_capacity(m);
        for s in 0..m {
            let stage = kl_stage_cost(a.row(s), passive.kernel().row(s), passive.state_cost()[s])?;
            let cont = stable_sum(a.row(s).iter().zip(&next).map(|(w, v)| w * v));
            v_t.push(stage + cont);
        }
        values[t - 1] = v_t;
    }
    Ok(ValueTable::from_raw(values))
}

/// Both sides of the variational bound
/// `(1/ρ) ln Σ P e^{ρQ} ≤ Σ A Q + |ρ|^{−1} KL(A ‖ P)` for `ρ < 0`.
pub fn lemma1_gap(p: &[f64], a: &[f64], q: &[f64], rho: f64) -> Result<(f64, f64)> {
    if !(rho < 0.0) {
        return Err(Error::NonNegativeRho(rho));
    }
    if q.len() != p.len() {
        return Err(Error::DimensionMismatch {
            what: "free-energy bound",
            expected: p.len(),
            found: q.len(),
        });
    }
    let kl = kl_divergence(a, p)?;
    let lhs = log_sum_exp_iter(
        p.iter()
            .zip(q)
            .filter(|(&w, _)| w > 0.0)
            .map(|(&w, &x)| math::ln(w) + rho * x),
    ) / rho;
    let mean = stable_sum(a.iter().zip(q).filter(|(&w, _)| w > 0.0).map(|(w, x)| w * x));
    Ok((lhs, mean + kl / rho.abs()))
}

/// Pieces of the one-step decomposition
/// `ℓ(s) + KL(a‖p) + E_a[V′] = ℓ(s) − ln G(s) + KL(a ‖ p e^{−V′}/G)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageDecomposition {
    /// Left side, the stage value under `a`.
    pub stage_value: f64,
    /// `ℓ(s) − ln G(s)`.
    pub optimal_value: f64,
    /// `KL(a ‖ a*)`.
    pub excess: f64,
}

pub fn kl_decomposition(p: &[f64], a: &[f64], state_cost: f64, next: &[f64]) -> Result<StageDecomposition> {
    let stage_value =
        kl_stage_cost(a, p, state_cost)? + stable_sum(a.iter().zip(next).filter(|(&w, _)| w > 0.0).map(|(w, v)| w * v));
    let optimal_value = state_cost - log_partition(p, next);
    let star = tilt_row(p, next, 0)?;
    Ok(StageDecomposition {
        stage_value,
        optimal_value,
        excess: kl_divergence(a, &star)?,
    })
}
