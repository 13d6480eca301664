// SPDX-License-Identifier: MIT OR Apache-2.0
//! CUSUM statistics, binary and wild binary segmentation, the drop steps
//! and between-estimate level averaging.
//!
//! Positions are 1-based within the segmented sequence.
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::stump::Neumaier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Binseg,
    Wbinseg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub zeta: f64,
    pub method: Method,
    pub wbs_intervals: usize,
    pub include_full_interval: bool,
    pub seed: u64,
}

impl SegmentationParams {
    pub fn binseg(zeta: f64) -> Self {
        Self { zeta, method: Method::Binseg, wbs_intervals: 0, include_full_interval: true, seed: 0 }
    }

    pub fn wbinseg(zeta: f64, intervals: usize, seed: u64) -> Self {
        Self { zeta, method: Method::Wbinseg, wbs_intervals: intervals, include_full_interval: true, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0) || !self.zeta.is_finite() {
            return invalid("zeta must be positive");
        }
        if self.method == Method::Wbinseg && self.wbs_intervals == 0 {
            return invalid("wild binary segmentation needs at least one interval");
        }
        Ok(())
    }
}

/// Prefix sums of `z - z[0]` for O(1) CUSUM evaluation.
pub struct Cusum {
    prefix: Vec<f64>,
}

impl Cusum {
    pub fn new(z: &[f64]) -> Self {
        let base = z.first().copied().unwrap_or(0.0);
        let mut prefix = Vec::with_capacity(z.len() + 1);
        prefix.push(0.0);
        let mut acc = Neumaier::default();
        for &v in z {
            acc.add(v - base);
            prefix.push(acc.value());
        }
        Self { prefix }
    }

    pub fn len(&self) -> usize {
        self.prefix.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CUSUM statistic at split `b` of segment `[s, e]`.
    #[inline]
    pub fn stat(&self, s: usize, b: usize, e: usize) -> f64 {
        let n = (e - s + 1) as f64;
        let nl = (b - s + 1) as f64;
        let nr = (e - b) as f64;
        let left = self.prefix[b] - self.prefix[s - 1];
        let right = self.prefix[e] - self.prefix[b];
        (nr / (n * nl)).sqrt() * left - (nl / (n * nr)).sqrt() * right
    }

    /// Split maximizing `|stat|` over `b in s..e`, smallest `b` on ties.
    pub fn argmax(&self, s: usize, e: usize) -> (usize, f64) {
        let mut best_b = s;
        let mut best = -1.0;
        for b in s..e {
            let v = self.stat(s, b, e).abs();
            if v > best {
                best = v;
                best_b = b;
            }
        }
        (best_b, best)
    }
}

pub fn cusum(z: &[f64], s: usize, b: usize, e: usize) -> Result<f64> {
    if s < 1 || s > b || b >= e || e > z.len() {
        return invalid(format!("cusum needs 1 <= s <= b < e <= {}", z.len()));
    }
    Ok(Cusum::new(z).stat(s, b, e))
}

pub fn segment(z: &[f64], params: &SegmentationParams) -> Result<Vec<usize>> {
    params.validate()?;
    Ok(match params.method {
        Method::Binseg => binseg(z, params.zeta),
        Method::Wbinseg => wbinseg(z, params.zeta, params.wbs_intervals, params.include_full_interval, params.seed),
    })
}

/// Binary segmentation with threshold `zeta`; depth-first, left first.
pub fn binseg(z: &[f64], zeta: f64) -> Vec<usize> {
    let n = z.len();
    if n < 2 {
        return Vec::new();
    }
    let cs = Cusum::new(z);
    let mut out = Vec::new();
    let mut stack = vec![(1usize, n)];
    while let Some((s, e)) = stack.pop() {
        if e <= s {
            continue;
        }
        let (b, v) = cs.argmax(s, e);
        if v >= zeta {
            out.push(b);
            stack.push((b + 1, e));
            stack.push((s, b));
        }
    }
    out.sort_unstable();
    out
}

/// Random intervals for wild binary segmentation: endpoints drawn with
/// replacement from `1..=n`, sorted, degenerate draws redrawn.
pub fn wbs_intervals(n: usize, m: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut r = rng::stream(seed, rng::WBS, 0);
    let mut out = Vec::with_capacity(m);
    if n < 2 {
        return out;
    }
    while out.len() < m {
        let a = r.random_range(1..=n);
        let b = r.random_range(1..=n);
        if a != b {
            out.push((a.min(b), a.max(b)));
        }
    }
    out
}

pub fn wbinseg(z: &[f64], zeta: f64, m: usize, include_full: bool, seed: u64) -> Vec<usize> {
    let n = z.len();
    if n < 2 {
        return Vec::new();
    }
    let cs = Cusum::new(z);
    let intervals = wbs_intervals(n, m, seed);
    let mut out = Vec::new();
    let mut stack = vec![(1usize, n)];
    while let Some((s, e)) = stack.pop() {
        if e <= s {
            continue;
        }
        let mut best = (-1.0, 0usize);
        let full = include_full.then_some((s, e));
        for (a, b) in full.into_iter().chain(intervals.iter().copied().filter(|&(a, b)| a >= s && b <= e)) {
            let (pos, v) = cs.argmax(a, b);
            if v > best.0 || (v == best.0 && pos < best.1) {
                best = (v, pos);
            }
        }
        if best.0 >= zeta {
            out.push(best.1);
            stack.push((best.1 + 1, e));
            stack.push((s, best.1));
        }
    }
    out.sort_unstable();
    out
}

/// `ceil((3N/delta)^2 log(N^2/delta))`.
pub fn wbs_interval_count(n: usize, delta_lower: usize) -> Result<usize> {
    if delta_lower < 1 || delta_lower > n {
        return invalid("delta_lower must lie in [1, N]");
    }
    let (nf, d) = (n as f64, delta_lower as f64);
    Ok(((3.0 * nf / d).powi(2) * (nf * nf / d).ln()).ceil() as usize)
}

fn check_taus(n: usize, taus: &[usize]) -> Result<()> {
    let mut prev = 0;
    for &t in taus {
        if t <= prev || t >= n {
            return invalid(format!("change points must be strictly increasing in [1, {}]", n.saturating_sub(1)));
        }
        prev = t;
    }
    Ok(())
}

fn seg_mean(z: &[f64], lo: usize, hi: usize) -> f64 {
    let mut acc = Neumaier::default();
    for &v in &z[lo..hi] {
        acc.add(v);
    }
    acc.value() / (hi - lo) as f64
}

/// Segment means between consecutive change points.
pub fn estimate_levels(z: &[f64], taus: &[usize]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return invalid("empty sequence");
    }
    check_taus(z.len(), taus)?;
    let mut prev = 0;
    let mut out = Vec::with_capacity(taus.len() + 1);
    for &t in taus.iter().chain(std::iter::once(&z.len())) {
        out.push(seg_mean(z, prev, t));
        prev = t;
    }
    Ok(out)
}

/// Drop an estimate when its gap to the last kept one is at most `delta_d`.
pub fn drop_close(taus: &[usize], delta_d: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(taus.len());
    for &t in taus {
        match out.last() {
            Some(&k) if t - k <= delta_d => {}
            _ => out.push(t),
        }
    }
    out
}

/// Drop an estimate when the jump between its neighbouring means is at
/// most `big_delta_d`; the left mean is recomputed after each drop.
pub fn drop_small_jump(z: &[f64], taus: &[usize], big_delta_d: f64) -> Result<Vec<usize>> {
    check_taus(z.len(), taus)?;
    let mut out = Vec::with_capacity(taus.len());
    let mut last = 0;
    for (i, &t) in taus.iter().enumerate() {
        let next = taus.get(i + 1).copied().unwrap_or(z.len());
        let left = seg_mean(z, last, t);
        let right = seg_mean(z, t, next);
        if (right - left).abs() > big_delta_d {
            out.push(t);
            last = t;
        }
    }
    Ok(out)
}

/// Threshold `zeta` for a subsample of length `nstar`.
pub fn default_threshold(nstar: usize, xi_over_gamma: f64) -> Result<f64> {
    if nstar < 2 {
        return invalid("nstar must be at least 2");
    }
    if !(0.0..0.25).contains(&xi_over_gamma) {
        return Err(Error::Invalid(format!("xi/gamma = {xi_over_gamma} leaves no valid threshold exponent")));
    }
    let expo = if xi_over_gamma < 0.2 { 0.2 } else { (xi_over_gamma + 0.5 - xi_over_gamma) / 2.0 };
    Ok((nstar as f64).powf(expo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(parts: &[(f64, usize)]) -> Vec<f64> {
        parts.iter().flat_map(|&(v, k)| std::iter::repeat_n(v, k)).collect()
    }

    #[test]
    fn cusum_examples() {
        assert_eq!(cusum(&[3.0; 5], 1, 2, 5).unwrap(), 0.0);
        let z = [0.0, 0.0, 2.0, 2.0];
        assert!((cusum(&z, 1, 2, 4).unwrap() + 2.0).abs() < 1e-12);
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        assert!((cusum(&neg, 1, 2, 4).unwrap() - 2.0).abs() < 1e-12);
        assert!(cusum(&z, 2, 1, 4).is_err());
        assert!(cusum(&z, 1, 4, 4).is_err());
    }

    #[test]
    fn binseg_examples() {
        assert_eq!(binseg(&steps(&[(0.0, 50), (3.0, 50)]), 1.0), vec![50]);
        assert_eq!(binseg(&[1.5; 40], 0.1), Vec::<usize>::new());
        assert_eq!(binseg(&steps(&[(0.0, 40), (3.0, 40), (0.0, 40)]), 1.0), vec![40, 80]);
    }

    #[test]
    fn wbinseg_examples() {
        assert_eq!(wbinseg(&[2.0; 30], 0.5, 50, true, 1), Vec::<usize>::new());
        let z = steps(&[(0.0, 50), (3.0, 50)]);
        assert_eq!(wbinseg(&z, 1.0, 200, true, 9), vec![50]);
        assert_eq!(wbinseg(&z, 1.0, 200, true, 9), wbinseg(&z, 1.0, 200, true, 9));
        assert!(wbs_intervals(100, 300, 4).iter().all(|&(a, b)| 1 <= a && a < b && b <= 100));
    }

    #[test]
    fn interval_count_examples() {
        assert_eq!(wbs_interval_count(1000, 100).unwrap(), 8290);
        assert_eq!(wbs_interval_count(500, 500).unwrap(), (9.0 * 500f64.ln()).ceil() as usize);
        let mut prev = usize::MAX;
        for d in 1..=200 {
            let c = wbs_interval_count(200, d).unwrap();
            assert!(c <= prev);
            prev = c;
        }
        assert!(wbs_interval_count(10, 11).is_err());
    }

    #[test]
    fn level_examples() {
        assert_eq!(estimate_levels(&[1.0, 1.0, 1.0, 5.0, 5.0, 5.0], &[3]).unwrap(), vec![1.0, 5.0]);
        assert_eq!(estimate_levels(&[1.0, 2.0, 3.0], &[]).unwrap(), vec![2.0]);
        assert_eq!(estimate_levels(&[0.0, 2.0, 0.0, 2.0], &[2]).unwrap(), vec![1.0, 1.0]);
        assert!(estimate_levels(&[0.0, 1.0], &[2]).is_err());
    }

    #[test]
    fn drop_close_examples() {
        assert_eq!(drop_close(&[100, 105, 300], 15), vec![100, 300]);
        assert_eq!(drop_close(&[100, 110, 118, 300], 15), vec![100, 118, 300]);
        assert_eq!(drop_close(&[], 15), Vec::<usize>::new());
    }

    #[test]
    fn drop_small_jump_examples() {
        let z = steps(&[(0.0, 30), (0.1, 30), (3.0, 30)]);
        assert_eq!(drop_small_jump(&z, &[30, 60], 0.5).unwrap(), vec![60]);
        let z = steps(&[(0.0, 10), (0.5, 10)]);
        assert_eq!(drop_small_jump(&z, &[10], 0.5).unwrap(), Vec::<usize>::new());
        assert_eq!(drop_small_jump(&z, &[], 0.5).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn threshold_examples() {
        assert!((default_threshold(150_000, 0.0).unwrap() - 10.845).abs() < 1e-3);
        let e5 = 5f64.exp();
        let nstar = e5.round() as usize;
        let z = default_threshold(nstar, 0.0).unwrap();
        assert!((z - (nstar as f64).powf(0.2)).abs() < 1e-12);
        assert!((e5.powf(0.2) - 1f64.exp()).abs() < 1e-12);
        assert!((default_threshold(10_000, 0.22).unwrap() - 10.0).abs() < 1e-9);
        assert!(default_threshold(1000, 0.3).is_err());
        assert!(default_threshold(1000, 0.25).is_err());
    }
}
