//! Log-domain numerics and the row-stochastic tables shared by every module.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Internal tolerance on row sums and distribution totals.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Tolerance for human-authored tables; rows inside it are renormalized.
pub const INGEST_TOL: f64 = 1e-6;

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// `ln(x)` with the structural-zero sentinel: `ln(0) = -inf`.
#[inline]
pub fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        libm::log(x)
    } else {
        f64::NEG_INFINITY
    }
}

/// `ln Σ e^{v_i}` with max shift. Returns `-inf` for an empty or all-`-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    log_sum_exp_iter(values.iter().copied())
}

pub fn log_sum_exp_iter<I>(values: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut acc = NeumaierSum::default();
    for v in values {
        acc.add(libm::exp(v - max));
    }
    max + libm::log(acc.value())
}

/// Compensated summation with a fixed left-to-right order.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = NeumaierSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// `KL(a ‖ p)` in nats with `0 ln(0/q) = 0`.
///
/// Fails with [`Error::SupportViolation`] when `a` has mass where `p` has none.
pub fn kl_divergence(a: &[f64], p: &[f64]) -> Result<f64> {
    if a.len() != p.len() {
        return Err(Error::DimensionMismatch {
            what: "kl divergence",
            expected: p.len(),
            found: a.len(),
        });
    }
    let mut acc = NeumaierSum::default();
    for (i, (&ai, &pi)) in a.iter().zip(p).enumerate() {
        if ai > 0.0 {
            if pi <= 0.0 {
                return Err(Error::SupportViolation { index: i });
            }
            acc.add(ai * (ln(ai) - ln(pi)));
        }
    }
    Ok(acc.value())
}

/// `−Σ p ln p` with `0 ln 0 = 0`, no normalization check.
pub fn entropy_nats(dist: &[f64]) -> f64 {
    -stable_sum(dist.iter().filter(|&&p| p > 0.0).map(|&p| p * ln(p)))
}

/// Checks a probability vector against [`STOCHASTIC_TOL`].
pub fn check_distribution(dist: &[f64]) -> Result<()> {
    check_distribution_tol(dist, STOCHASTIC_TOL)
}

pub fn check_distribution_tol(dist: &[f64], tol: f64) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::EmptySet("outcome"));
    }
    for (i, &p) in dist.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFiniteProbability { row: 0, col: i });
        }
        if p < 0.0 {
            return Err(Error::NegativeProbability {
                row: 0,
                col: i,
                value: p,
            });
        }
    }
    let sum = stable_sum(dist.iter().copied());
    if (sum - 1.0).abs() > tol {
        return Err(Error::Unnormalized { sum });
    }
    Ok(())
}

/// Validates one row and, when its sum is within `renorm_tol` of one, rescales it.
fn normalize_row(row: &mut [f64], index: usize, strict_tol: f64, renorm_tol: f64) -> Result<()> {
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
    let dev = (sum - 1.0).abs();
    if dev > renorm_tol.max(strict_tol) {
        return Err(Error::NonStochasticRow { row: index, sum });
    }
    if dev > 0.0 && renorm_tol > 0.0 {
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
    Ok(())
}

/// A dense row-stochastic matrix `K(j | i)` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    /// Builds a matrix whose rows must sum to one within [`STOCHASTIC_TOL`].
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(rows, 0.0)
    }

    /// Builds a matrix from hand-written rows, renormalizing rows within [`INGEST_TOL`].
    pub fn from_rows_lenient(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(rows, INGEST_TOL)
    }

    fn build(rows: Vec<Vec<f64>>, renorm_tol: f64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptySet("row"));
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err(Error::EmptySet("column"));
        }
        let mut data = Vec::with_capacity(n * cols);
        for (i, mut row) in rows.into_iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "matrix row",
                    expected: cols,
                    found: row.len(),
                });
            }
            normalize_row(&mut row, i, STOCHASTIC_TOL, renorm_tol)?;
            data.extend_from_slice(&row);
        }
        Ok(Self { rows: n, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![1.0 / cols as f64; rows * cols],
        }
    }

    /// Every row equal to `dist`.
    pub fn repeat_row(rows: usize, dist: &[f64]) -> Self {
        let mut data = Vec::with_capacity(rows * dist.len());
        for _ in 0..rows {
            data.extend_from_slice(dist);
        }
        Self {
            rows,
            cols: dist.len(),
            data,
        }
    }

    /// Wraps rows that are already normalized by construction.
    pub(crate) fn from_normalized(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// `q(j) = Σ_i dist(i) K(j | i)`.
    pub fn push_forward(&self, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![NeumaierSum::default(); self.cols];
        for (i, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (j, &k) in self.row(i).iter().enumerate() {
                out[j].add(w * k);
            }
        }
        out.iter().map(NeumaierSum::value).collect()
    }
}

/// A family of stochastic matrices selected by a context index: `K(to | context, from)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalKernel {
    contexts: usize,
    from: usize,
    to: usize,
    data: Vec<f64>,
}

impl ConditionalKernel {
    /// `tables[context][from][to]`, rows checked against [`STOCHASTIC_TOL`].
    pub fn new(tables: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        Self::build(tables, 0.0)
    }

    pub fn from_tables_lenient(tables: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        Self::build(tables, INGEST_TOL)
    }

    fn build(tables: Vec<Vec<Vec<f64>>>, renorm_tol: f64) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::EmptySet("context"));
        }
        let from = tables[0].len();
        if from == 0 {
            return Err(Error::EmptySet("row"));
        }
        let to = tables[0][0].len();
        if to == 0 {
            return Err(Error::EmptySet("column"));
        }
        let contexts = tables.len();
        let mut data = Vec::with_capacity(contexts * from * to);
        for (c, table) in tables.into_iter().enumerate() {
            if table.len() != from {
                return Err(Error::DimensionMismatch {
                    what: "conditional kernel rows",
                    expected: from,
                    found: table.len(),
                });
            }
            for (i, mut row) in table.into_iter().enumerate() {
                if row.len() != to {
                    return Err(Error::DimensionMismatch {
                        what: "conditional kernel columns",
                        expected: to,
                        found: row.len(),
                    });
                }
                normalize_row(&mut row, c * from + i, STOCHASTIC_TOL, renorm_tol)?;
                data.extend_from_slice(&row);
            }
        }
        Ok(Self {
            contexts,
            from,
            to,
            data,
        })
    }

    /// Every context shares `matrix`.
    pub fn broadcast(contexts: usize, matrix: &StochasticMatrix) -> Self {
        let mut data = Vec::with_capacity(contexts * matrix.rows() * matrix.cols());
        for _ in 0..contexts {
            for i in 0..matrix.rows() {
                data.extend_from_slice(matrix.row(i));
            }
        }
        Self {
            contexts,
            from: matrix.rows(),
            to: matrix.cols(),
            data,
        }
    }

    pub(crate) fn from_normalized(contexts: usize, from: usize, to: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), contexts * from * to);
        Self {
            contexts,
            from,
            to,
            data,
        }
    }

    #[inline]
    pub fn contexts(&self) -> usize {
        self.contexts
    }

    #[inline]
    pub fn from_size(&self) -> usize {
        self.from
    }

    #[inline]
    pub fn to_size(&self) -> usize {
        self.to
    }

    #[inline]
    pub fn row(&self, context: usize, from: usize) -> &[f64] {
        let start = (context * self.from + from) * self.to;
        &self.data[start..start + self.to]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, context: usize, from: usize) -> &mut [f64] {
        let start = (context * self.from + from) * self.to;
        &mut self.data[start..start + self.to]
    }

    /// The stochastic matrix of one context.
    pub fn matrix(&self, context: usize) -> StochasticMatrix {
        let start = context * self.from * self.to;
        StochasticMatrix::from_normalized(
            self.from,
            self.to,
            self.data[start..start + self.from * self.to].to_vec(),
        )
    }

    pub fn to_tables(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.contexts)
            .map(|c| (0..self.from).map(|i| self.row(c, i).to_vec()).collect())
            .collect()
    }
}

/// Root of a nonincreasing scalar function by geometric bracketing and bisection.
///
/// The bracket grows from `[0, 1]` (or `[-1, 0]`) by doubling up to `2^40`;
/// the search stops as soon as `|f(x)| <= tol`.
pub(crate) fn bisect_nonincreasing<F>(mut f: F, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    const BRACKET_CAP: f64 = 1_099_511_627_776.0; // 2^40
    let f0 = f(0.0);
    if f0.abs() <= tol {
        return Ok(0.0);
    }
    let (mut lo, mut hi);
    if f0 > 0.0 {
        lo = 0.0;
        hi = 1.0;
        loop {
            let fh = f(hi);
            if fh.abs() <= tol {
                return Ok(hi);
            }
            if fh < 0.0 {
                break;
            }
            lo = hi;
            hi *= 2.0;
            if hi > BRACKET_CAP {
                return Err(Error::NoConvergence { iterations: 41 });
            }
        }
    } else {
        hi = 0.0;
        lo = -1.0;
        loop {
            let fl = f(lo);
            if fl.abs() <= tol {
                return Ok(lo);
            }
            if fl > 0.0 {
                break;
            }
            hi = lo;
            lo *= 2.0;
            if lo < -BRACKET_CAP {
                return Err(Error::NoConvergence { iterations: 41 });
            }
        }
    }
    bisect_bracketed(f, lo, hi, tol, max_iter)
}

/// Bisection on `[lo, hi]` for a nonincreasing `f` with `f(lo) > 0 > f(hi)`.
pub(crate) fn bisect_bracketed<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm.abs() <= tol {
            return Ok(mid);
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence { iterations: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_evaluation_and_survives_large_inputs() {
        let direct = ln(exp(0.5) + exp(2.0));
        assert!((log_sum_exp(&[0.5, 2.0]) - direct).abs() < 1e-15);
        let big = log_sum_exp(&[1234.0, 1232.0]);
        assert!((big - (1232.0 + ln(exp(2.0) + 1.0))).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::INFINITY, 0.0]), f64::INFINITY);
    }

    #[test]
    fn kl_conventions() {
        assert_eq!(kl_divergence(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(kl_divergence(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        let v = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(
            kl_divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::SupportViolation { index: 1 })
        );
    }

    #[test]
    fn lenient_rows_renormalize_only_near_one() {
        let m = StochasticMatrix::from_rows_lenient(vec![vec![0.5, 0.499999]]).unwrap();
        assert!((m.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(
            StochasticMatrix::from_rows_lenient(vec![vec![0.5, 0.4]]),
            Err(Error::NonStochasticRow { row: 0, .. })
        ));
        assert!(matches!(
            StochasticMatrix::new(vec![vec![0.5, 0.499999]]),
            Err(Error::NonStochasticRow { .. })
        ));
        assert!(matches!(
            StochasticMatrix::new(vec![vec![1.5, -0.5]]),
            Err(Error::NegativeProbability { .. })
        ));
    }

    #[test]
    fn bisection_finds_roots_on_both_sides() {
        let r = bisect_nonincreasing(|x| 3.0 - x, 1e-12, 200).unwrap();
        assert!((r - 3.0).abs() < 1e-11);
        let r = bisect_nonincreasing(|x| -5.5 - x, 1e-12, 200).unwrap();
        assert!((r + 5.5).abs() < 1e-11);
        assert!(bisect_nonincreasing(|_| 1.0, 1e-12, 200).is_err());
    }
}
