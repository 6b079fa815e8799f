//! Node-parallel evaluation with a scheduling-independent reduction.
//!
//! Every reduction goes through [`pairwise_sum`], whose tree shape depends
//! only on the input length. Parallel and sequential execution therefore
//! produce the same bits.

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// How node evaluations are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    /// Rayon data parallelism. Falls back to sequential when the crate is
    /// built without the `parallel` feature.
    Parallel,
    Sequential,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

const LEAF: usize = 16;

/// Fixed-shape pairwise (tree) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        let mut acc = 0.0;
        for x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Evaluates `f` at `0..n`, preserving index order in the output.
pub fn map_collect<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Sums `f(i)` over `0..n` with the fixed tree reduction.
pub fn sum_map<F>(n: usize, exec: Execution, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    pairwise_sum(&map_collect(n, exec, f))
}

/// Fallible variant of [`sum_map`]; the first failing index wins.
pub fn try_sum_map<F>(n: usize, exec: Execution, f: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    let values = map_collect(n, exec, f).into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&values))
}

/// Fallible sum of several accumulators per node, each reduced separately.
pub fn try_sum_map_n<const N: usize, F>(n: usize, exec: Execution, f: F) -> Result<[f64; N]>
where
    F: Fn(usize) -> Result<[f64; N]> + Sync + Send,
{
    let values = map_collect(n, exec, f).into_iter().collect::<Result<Vec<[f64; N]>>>()?;
    let mut out = [0.0; N];
    let mut column = vec![0.0; values.len()];
    for (j, slot) in out.iter_mut().enumerate() {
        for (c, v) in column.iter_mut().zip(&values) {
            *c = v[j];
        }
        *slot = pairwise_sum(&column);
    }
    Ok(out)
}
