// SPDX-License-Identifier: MIT OR Apache-2.0
//! Single change-point least-squares fits over arbitrary ordered index sets.
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StumpFit {
    /// Last index carrying the left level.
    pub tau_hat: usize,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub sse: f64,
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn check_points(indices: &[usize], values: &[f64]) -> Result<()> {
    if indices.len() != values.len() {
        return invalid("indices and values differ in length");
    }
    if indices.len() < 2 {
        return invalid("a stump fit needs at least 2 points");
    }
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("indices must be strictly increasing");
    }
    Ok(())
}

fn mean(xs: &[f64], base: f64) -> f64 {
    let mut acc = Neumaier::default();
    for &x in xs {
        acc.add(x - base);
    }
    base + acc.value() / xs.len() as f64
}

fn sse_about(xs: &[f64], m: f64) -> f64 {
    let mut acc = Neumaier::default();
    for &x in xs {
        acc.add((x - m) * (x - m));
    }
    acc.value()
}

/// Three-parameter stump fit: split `t` over splits with both sides
/// nonempty, levels are the segment means, ties go to the smallest `t`.
pub fn fit_stump_full(indices: &[usize], values: &[f64]) -> Result<StumpFit> {
    check_points(indices, values)?;
    let n = values.len();
    // centred on the first value
    let base = values[0];
    let mut total = Neumaier::default();
    for &v in values {
        total.add(v - base);
    }
    let total = total.value();
    let mut left = Neumaier::default();
    let mut best_p = 1;
    let mut best_gain = f64::NEG_INFINITY;
    for p in 1..n {
        left.add(values[p - 1] - base);
        let sl = left.value();
        let sr = total - sl;
        let nl = p as f64;
        let nr = (n - p) as f64;
        let gain = sl * sl / nl + sr * sr / nr;
        if gain > best_gain {
            best_gain = gain;
            best_p = p;
        }
    }
    let (l, r) = values.split_at(best_p);
    let a = mean(l, l[0]);
    let b = mean(r, r[0]);
    Ok(StumpFit { tau_hat: indices[best_p - 1], alpha_hat: a, beta_hat: b, sse: sse_about(l, a) + sse_about(r, b) })
}

/// One-parameter fit with known levels: `t` ranges over the window's
/// indices (all-left allowed), ties go to the smallest `t`.
pub fn fit_stump_known_levels(indices: &[usize], values: &[f64], nu_left: f64, nu_right: f64) -> Result<usize> {
    check_points(indices, values)?;
    if nu_left == nu_right {
        return invalid("known levels must differ");
    }
    let d = nu_right - nu_left;
    let s = nu_left + nu_right;
    let mut acc = Neumaier::default();
    let mut best = f64::INFINITY;
    let mut best_t = indices[0];
    for (&i, &y) in indices.iter().zip(values) {
        acc.add(d * (2.0 * y - s));
        let c = acc.value();
        if c < best {
            best = c;
            best_t = i;
        }
    }
    Ok(best_t)
}

/// Residual sum of squares of a known-levels stump split at `t`.
pub fn known_levels_sse(indices: &[usize], values: &[f64], nu_left: f64, nu_right: f64, t: usize) -> f64 {
    let mut acc = Neumaier::default();
    for (&i, &y) in indices.iter().zip(values) {
        let r = if i <= t { y - nu_left } else { y - nu_right };
        acc.add(r * r);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(n: usize) -> Vec<usize> {
        (1..=n).collect()
    }

    #[test]
    fn full_fit_examples() {
        let f = fit_stump_full(&idx(6), &[0.0, 0.0, 0.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!((f.tau_hat, f.alpha_hat, f.beta_hat, f.sse), (3, 0.0, 5.0, 0.0));
        let c = 0.1;
        let f = fit_stump_full(&idx(5), &[c; 5]).unwrap();
        assert_eq!((f.tau_hat, f.alpha_hat, f.beta_hat, f.sse), (1, c, c, 0.0));
        assert!(fit_stump_full(&[1], &[1.0]).is_err());
    }

    #[test]
    fn known_level_examples() {
        assert_eq!(fit_stump_known_levels(&idx(6), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 0.0, 1.0).unwrap(), 3);
        assert_eq!(fit_stump_known_levels(&idx(4), &[1.0, 1.0, 0.0, 0.0], 0.0, 1.0).unwrap(), 4);
        assert_eq!(fit_stump_known_levels(&[1, 2, 4, 5], &[0.0, 0.0, 1.0, 1.0], 0.0, 1.0).unwrap(), 2);
        assert!(fit_stump_known_levels(&idx(3), &[0.0; 3], 1.0, 1.0).is_err());
    }

    #[test]
    fn known_level_sse_matches_criterion() {
        let v = [0.3, -0.2, 1.4, 0.9, 1.1];
        let t = fit_stump_known_levels(&idx(5), &v, 0.0, 1.0).unwrap();
        let best = known_levels_sse(&idx(5), &v, 0.0, 1.0, t);
        for s in 1..=5 {
            assert!(known_levels_sse(&idx(5), &v, 0.0, 1.0, s) >= best);
        }
    }
}
