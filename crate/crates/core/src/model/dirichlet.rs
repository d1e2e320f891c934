//! Dirichlet pseudo-count helpers shared by every parameter bank.
//!
//! All count mutation in the crate goes through [`clamp_count`], which keeps
//! counts inside `[FLOOR, CEILING]`.

use crate::error::{Error, Result};

/// Smallest pseudo-count any Dirichlet entry may hold.
pub const FLOOR: f64 = 1e-3;

/// Largest pseudo-count. The multiplicative transition rule grows counts
/// geometrically under repeated confirmation; the ceiling keeps them finite.
pub const CEILING: f64 = 1e4;

/// Clamp a count into `[FLOOR, CEILING]`. NaN collapses to the floor.
pub fn clamp_count(c: f64) -> f64 {
    if c.is_nan() {
        FLOOR
    } else {
        c.clamp(FLOOR, CEILING)
    }
}

/// Mean of a Dirichlet: `count_i / sum(counts)`.
pub fn expected_likelihood(counts: &[f64]) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::EmptyRow);
    }
    let total: f64 = counts.iter().sum();
    Ok(counts.iter().map(|c| c / total).collect())
}

/// Shannon entropy in nats. Zero entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Normalise in place; returns the pre-normalisation total.
pub fn normalize(p: &mut [f64]) -> f64 {
    let total: f64 = p.iter().sum();
    if total > 0.0 && total.is_finite() {
        for x in p.iter_mut() {
            *x /= total;
        }
    }
    total
}

/// Softmax of `-values / temperature`, computed stably.
pub fn softmax_neg(values: &[f64], temperature: f64) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = values
        .iter()
        .map(|v| (-(v - min) / temperature).exp())
        .collect();
    normalize(&mut w);
    w
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}
