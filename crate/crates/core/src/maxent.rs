//! Constrained maximum-entropy programs and their tilted Gibbs solutions.
//!
//! Every solution here has the form `a_μ(i) ∝ p(i) e^{−μ V(i)}` with
//! log-partition `λ(μ) = ln Σ p e^{−μV}`.

use alloc::vec::Vec;

use crate::math::{
    self, bisect_bracketed, bisect_nonincreasing, check_distribution, entropy_nats, kl_divergence, stable_sum,
};
use crate::{Error, Result};

/// Bisection steps used by every solver in this module.
pub const MAX_BISECTION_STEPS: usize = 200;

/// A tilted distribution together with its multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntSolution {
    pub control: Vec<f64>,
    pub mu: f64,
    /// `ln Σ p e^{−μV}`.
    pub lambda: f64,
    /// The performance value actually attained.
    pub achieved: f64,
    /// Shannon entropy of `control` in nats.
    pub entropy: f64,
}

impl MaxEntSolution {
    /// The normalization multiplier in the `p(u) = e^{−1−λ−μV}` convention.
    ///
    /// Only meaningful when the base measure was uniform over `control.len()` points.
    pub fn gibbs_lambda(&self) -> f64 {
        self.lambda + math::ln(self.control.len() as f64) - 1.0
    }
}

fn check_inputs(p: &[f64], v: &[f64]) -> Result<()> {
    check_distribution(p)?;
    if v.len() != p.len() {
        return Err(Error::DimensionMismatch {
            what: "value table",
            expected: p.len(),
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteValue("value table"));
    }
    Ok(())
}

fn lambda_of(p: &[f64], v: &[f64], mu: f64) -> f64 {
    math::log_sum_exp_iter(
        p.iter()
            .zip(v)
            .filter(|(&q, _)| q > 0.0)
            .map(|(&q, &x)| math::ln(q) - mu * x),
    )
}

fn tilt(p: &[f64], v: &[f64], mu: f64) -> (Vec<f64>, f64) {
    if mu == 0.0 {
        return (p.to_vec(), 0.0);
    }
    let lambda = lambda_of(p, v, mu);
    let a = p
        .iter()
        .zip(v)
        .map(|(&q, &x)| {
            if q > 0.0 {
                math::exp(math::ln(q) - mu * x - lambda)
            } else {
                0.0
            }
        })
        .collect();
    (a, lambda)
}

fn mean(a: &[f64], v: &[f64]) -> f64 {
    stable_sum(a.iter().zip(v).filter(|(&w, _)| w > 0.0).map(|(w, x)| w * x))
}

/// `a_μ ∝ p e^{−μV}` and `λ = ln Σ p e^{−μV}`; `μ = 0` returns `p` unchanged.
pub fn tilted_control(p: &[f64], v: &[f64], mu: f64) -> Result<(Vec<f64>, f64)> {
    check_inputs(p, v)?;
    if !mu.is_finite() {
        return Err(Error::InvalidParameter("mu must be finite"));
    }
    Ok(tilt(p, v, mu))
}

fn support_range(p: &[f64], v: &[f64]) -> (f64, f64) {
    p.iter()
        .zip(v)
        .filter(|(&q, _)| q > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &x)| {
            (lo.min(x), hi.max(x))
        })
}

fn solution(p: &[f64], v: &[f64], mu: f64, achieved: impl Fn(&[f64]) -> f64) -> MaxEntSolution {
    let (control, lambda) = tilt(p, v, mu);
    MaxEntSolution {
        achieved: achieved(&control),
        entropy: entropy_nats(&control),
        control,
        mu,
        lambda,
    }
}

/// Finds `μ` with `E_{a_μ}[V] = K` within `tol`.
///
/// `K` must lie in `[min V, max V]` over the support of `p`.
pub fn solve_for_performance(p: &[f64], v: &[f64], k: f64, tol: f64) -> Result<MaxEntSolution> {
    check_inputs(p, v)?;
    if !(tol > 0.0) || !k.is_finite() {
        return Err(Error::InvalidParameter(
            "target and tolerance must be finite, tolerance positive",
        ));
    }
    let (low, high) = support_range(p, v);
    if k < low - tol || k > high + tol {
        return Err(Error::UnattainablePerformance { target: k, low, high });
    }
    let mu = bisect_nonincreasing(|mu| mean(&tilt(p, v, mu).0, v) - k, tol, MAX_BISECTION_STEPS)?;
    Ok(solution(p, v, mu, |a| mean(a, v)))
}

/// `E_{a_μ}[V] + KL(a_μ ‖ p)`, the KL-control performance of a tilted law.
fn kl_performance(p: &[f64], v: &[f64], mu: f64) -> f64 {
    let (a, _) = tilt(p, v, mu);
    mean(&a, v) + kl_divergence(&a, p).unwrap_or(f64::INFINITY)
}

/// Finds `μ ≤ 1` whose tilted law has KL-control performance
/// `E_a[V] + KL(a ‖ p) = K` within `tol`.
///
/// The performance is minimized at `μ = 1`, where it equals `−ln Σ p e^{−V}`
/// and the tilted law is the optimal control; targets below that are unattainable.
pub fn solve_for_kl_value(p: &[f64], v: &[f64], k: f64, tol: f64) -> Result<MaxEntSolution> {
    check_inputs(p, v)?;
    if !(tol > 0.0) || !k.is_finite() {
        return Err(Error::InvalidParameter(
            "target and tolerance must be finite, tolerance positive",
        ));
    }
    let optimum = -lambda_of(p, v, 1.0);
    let (_, high) = support_range(p, v);
    // as μ → −∞ the law concentrates on the argmax of V and the KL term tends to −ln p(argmax)
    let top_mass = stable_sum(p.iter().zip(v).filter(|(&q, &x)| q > 0.0 && x == high).map(|(&q, _)| q));
    let ceiling = high - math::ln(top_mass);
    let performance = |mu: f64| kl_performance(p, v, mu);
    if (performance(1.0) - k).abs() <= tol {
        return Ok(solution(p, v, 1.0, |_| performance(1.0)));
    }
    if k < optimum || k > ceiling + tol {
        return Err(Error::UnattainablePerformance {
            target: k,
            low: optimum,
            high: ceiling,
        });
    }
    // f is nonincreasing on μ ≤ 1 and negative at μ = 1
    let f = |mu: f64| performance(mu) - k;
    let f0 = f(0.0);
    let mu = if f0.abs() <= tol {
        0.0
    } else if f0 > 0.0 {
        bisect_bracketed(f, 0.0, 1.0, tol, MAX_BISECTION_STEPS)?
    } else {
        let mut lo = -1.0;
        while f(lo) < -tol {
            lo *= 2.0;
            if lo < -1_099_511_627_776.0 {
                return Err(Error::NoConvergence { iterations: 41 });
            }
        }
        if f(lo).abs() <= tol {
            lo
        } else {
            bisect_bracketed(f, lo, 0.0, tol, MAX_BISECTION_STEPS)?
        }
    };
    Ok(solution(p, v, mu, |_| performance(mu)))
}

/// Maximum-entropy distribution over a finite control set with `E[V] = K`.
///
/// The base measure is uniform. Targets within `tol` of `min V` or `max V`
/// need an unbounded multiplier and are rejected, unless `V` is constant.
pub fn saridis_gibbs(costs: &[f64], k: f64, tol: f64) -> Result<MaxEntSolution> {
    if costs.is_empty() {
        return Err(Error::EmptySet("control"));
    }
    let n = costs.len();
    let base = alloc::vec![1.0 / n as f64; n];
    let (low, high) = support_range(&base, costs);
    if high - low > 0.0 && (k <= low + tol || k >= high - tol) {
        return Err(Error::UnattainablePerformance { target: k, low, high });
    }
    solve_for_performance(&base, costs, k, tol)
}

/// Terms of `H(u) = H(u|y) + H(y) − H(y|u)`, each computed separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyDecomposition {
    pub h_u: f64,
    pub h_u_given_y: f64,
    pub h_y: f64,
    pub h_y_given_u: f64,
    pub residual: f64,
}

/// Checks the entropy decomposition on a joint table `joint[u][y]`.
pub fn entropy_decomposition_check(joint: &[Vec<f64>]) -> Result<EntropyDecomposition> {
    if joint.is_empty() || joint[0].is_empty() {
        return Err(Error::EmptySet("outcome"));
    }
    let ny = joint[0].len();
    let flat: Vec<f64> = joint
        .iter()
        .map(|row| {
            if row.len() != ny {
                Err(Error::DimensionMismatch {
                    what: "joint table",
                    expected: ny,
                    found: row.len(),
                })
            } else {
                Ok(row.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    check_distribution(&flat)?;
    let pu: Vec<f64> = joint.iter().map(|r| stable_sum(r.iter().copied())).collect();
    let py: Vec<f64> = (0..ny).map(|y| stable_sum(joint.iter().map(|r| r[y]))).collect();
    let mut h_u_given_y = math::NeumaierSum::default();
    let mut h_y_given_u = math::NeumaierSum::default();
    for (u, row) in joint.iter().enumerate() {
        for (y, &q) in row.iter().enumerate() {
            if q > 0.0 {
                h_u_given_y.add(-q * math::ln(q / py[y]));
                h_y_given_u.add(-q * math::ln(q / pu[u]));
            }
        }
    }
    let h_u = entropy_nats(&pu);
    let h_y = entropy_nats(&py);
    let (huy, hyu) = (h_u_given_y.value(), h_y_given_u.value());
    Ok(EntropyDecomposition {
        h_u,
        h_u_given_y: huy,
        h_y,
        h_y_given_u: hyu,
        residual: h_u - (huy + h_y - hyu),
    })
}
