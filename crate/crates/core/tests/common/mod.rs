#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermo_mdp::{ConditionalKernel, FiniteMdp, StochasticMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random distribution; each entry is zeroed with probability `zero`, keeping one positive.
pub fn dist(rng: &mut ChaCha8Rng, n: usize, zero: f64) -> Vec<f64> {
    let keep = rng.random_range(0..n);
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            if i != keep && rng.random::<f64>() < zero {
                0.0
            } else {
                0.05 + rng.random::<f64>()
            }
        })
        .collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

pub fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, zero: f64) -> StochasticMatrix {
    StochasticMatrix::from_rows_lenient((0..rows).map(|_| dist(rng, cols, zero)).collect()).unwrap()
}

pub fn kernel(rng: &mut ChaCha8Rng, contexts: usize, from: usize, to: usize, zero: f64) -> ConditionalKernel {
    ConditionalKernel::from_tables_lenient(
        (0..contexts)
            .map(|_| (0..from).map(|_| dist(rng, to, zero)).collect())
            .collect(),
    )
    .unwrap()
}

pub fn mdp(rng: &mut ChaCha8Rng, states: usize, actions: usize, horizon: usize) -> FiniteMdp {
    let t = (0..states)
        .map(|_| (0..actions).map(|_| dist(rng, states, 0.3)).collect())
        .collect();
    let c = (0..states)
        .map(|_| {
            (0..actions)
                .map(|_| (0..states).map(|_| rng.random::<f64>() * 2.0).collect())
                .collect()
        })
        .collect();
    FiniteMdp::new(t, c, horizon).unwrap()
}

/// Every point of the simplex with coordinates in `{0, 1/g, …, 1}`.
pub fn simplex_grid(n: usize, g: usize) -> Vec<Vec<f64>> {
    fn rec(i: usize, left: usize, g: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.iter().map(|&c| c as f64 / g as f64).collect());
            return;
        }
        for c in 0..=left {
            cur[i] = c;
            rec(i + 1, left - c, g, cur, out);
        }
    }
    let mut out = Vec::new();
    rec(0, g, g, &mut vec![0; n], &mut out);
    out
}

/// Plain `Σ p ln(p/q)`, written independently of the library.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

/// Entropy of a marginal of a table of `(outcome, probability)` pairs.
pub fn marginal_entropy(rows: &[(Vec<usize>, f64)], coords: &[usize]) -> f64 {
    let mut m: std::collections::BTreeMap<Vec<usize>, f64> = Default::default();
    for (o, p) in rows {
        *m.entry(coords.iter().map(|&c| o[c]).collect()).or_default() += p;
    }
    -m.values().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}
