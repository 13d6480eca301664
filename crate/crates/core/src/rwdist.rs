// SPDX-License-Identifier: MIT OR Apache-2.0
//! Argmin of the two-sided drifted Gaussian random walk
//!
//! `X(t) = e_1 + .. + e_t + t*snr/2` for `t > 0`,
//! `X(t) = -(e_{t+1} + .. + e_0) + |t|*snr/2` for `t < 0`, `X(0) = 0`,
//!
//! its Monte Carlo quantiles, analytic tail bounds, and cached quantile
//! tables. The increments `e_i` are standard normal for iid noise, or a
//! unit-variance stationary Gaussian sequence for dependent noise.
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Replicates per parallel work unit.
const BLOCK: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Iid,
    /// Forward moving average `sum_k c_k eta_{i+k}`.
    Ma(Vec<f64>),
    Ar1(f64),
    /// Autocorrelations `rho_0 = 1, rho_1, .., rho_b`; zero beyond `b`.
    CustomAcf(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub marginal_sd: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::iid()
    }
}

impl NoiseSpec {
    pub fn iid() -> Self {
        Self { kind: NoiseKind::Iid, marginal_sd: 1.0 }
    }

    /// Coefficients `(1, 0.5, 0.25)`.
    pub fn ma3() -> Self {
        Self { kind: NoiseKind::Ma(vec![1.0, 0.5, 0.25]), marginal_sd: 1.0 }
    }

    pub fn ar1(phi: f64) -> Self {
        Self { kind: NoiseKind::Ar1(phi), marginal_sd: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.marginal_sd > 0.0) || !self.marginal_sd.is_finite() {
            return invalid("marginal_sd must be positive");
        }
        match &self.kind {
            NoiseKind::Iid => Ok(()),
            NoiseKind::Ma(c) => {
                if c.is_empty() || c.iter().any(|v| !v.is_finite()) || c.iter().all(|&v| v == 0.0) {
                    return invalid("moving-average coefficients must be finite and not all zero");
                }
                Ok(())
            }
            NoiseKind::Ar1(phi) => {
                if !(phi.abs() < 1.0) {
                    return invalid("AR(1) coefficient must satisfy |phi| < 1");
                }
                Ok(())
            }
            NoiseKind::CustomAcf(acf) => {
                if acf.is_empty() || !(acf[0] > 0.0) || acf.iter().any(|v| !v.is_finite()) {
                    return invalid("autocorrelation must start with a positive lag-0 value");
                }
                Ok(())
            }
        }
    }

    pub fn is_iid(&self) -> bool {
        matches!(self.kind, NoiseKind::Iid)
    }

    /// Lag beyond which correlation is negligible.
    pub fn band(&self) -> usize {
        match &self.kind {
            NoiseKind::Iid => 0,
            NoiseKind::Ma(c) => c.len() - 1,
            NoiseKind::Ar1(phi) => {
                if *phi == 0.0 {
                    0
                } else {
                    (1e-3f64.ln() / phi.abs().ln()).ceil().max(1.0) as usize
                }
            }
            NoiseKind::CustomAcf(acf) => acf.len() - 1,
        }
    }

    /// Long-run variance of the unit-variance increments.
    pub fn long_run_variance(&self) -> f64 {
        match &self.kind {
            NoiseKind::Iid => 1.0,
            NoiseKind::Ma(c) => {
                let s: f64 = c.iter().sum();
                s * s / c.iter().map(|v| v * v).sum::<f64>()
            }
            NoiseKind::Ar1(phi) => (1.0 + phi) / (1.0 - phi),
            NoiseKind::CustomAcf(acf) => 1.0 + 2.0 * acf[1..].iter().sum::<f64>() / acf[0],
        }
    }

    /// Compact label used in table headers.
    pub fn label(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match &self.kind {
            NoiseKind::Iid => "iid".into(),
            NoiseKind::Ma(c) => format!("ma:{}", list(c)),
            NoiseKind::Ar1(phi) => format!("ar1:{phi}"),
            NoiseKind::CustomAcf(acf) => format!("acf:{}", list(acf)),
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        let nums = |v: &str| -> Result<Vec<f64>> {
            v.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad number {x:?} in noise label")))).collect()
        };
        let kind = match s.split_once(':') {
            None if s == "iid" => NoiseKind::Iid,
            None if s == "ma3" => NoiseKind::Ma(vec![1.0, 0.5, 0.25]),
            None if s == "ar1" => NoiseKind::Ar1(0.2),
            Some(("ma", v)) => NoiseKind::Ma(nums(v)?),
            Some(("ar1", v)) => NoiseKind::Ar1(v.trim().parse().map_err(|_| Error::Format(format!("bad AR coefficient {v:?}")))?),
            Some(("acf", v)) => NoiseKind::CustomAcf(nums(v)?),
            _ => return Err(Error::Format(format!("unknown noise label {s:?}"))),
        };
        let spec = Self { kind, marginal_sd: 1.0 };
        spec.validate()?;
        Ok(spec)
    }
}

/// `2 x^{m+1} / (1 - x)` with `x = exp(-snr^2/8)`, clamped to `[0, 1]`.
pub fn tail_bound(snr: f64, m: u64) -> f64 {
    let b = snr * snr / 8.0;
    let v = 2.0 * (-(b * (m as f64 + 1.0))).exp() / -(-b).exp_m1();
    v.clamp(0.0, 1.0)
}

/// `ceil(log(A J / alpha) / B)` with `A = 2x/(1-x)`, `B = snr^2/8`.
pub fn quantile_upper_bound(snr: f64, j: u64, alpha: f64) -> Result<u64> {
    if !(snr > 0.0) || j == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return invalid("need snr > 0, J >= 1 and alpha in (0, 1)");
    }
    let b = snr * snr / 8.0;
    let x = (-b).exp();
    let a = 2.0 * x / (-(-b).exp_m1());
    Ok(((a * j as f64 / alpha).ln() / b).ceil().max(0.0) as u64)
}

/// Smallest truncation `m` with `tail_bound(snr_eff, m) <= tolerance`,
/// where `snr_eff` deflates `snr` by the long-run noise scale.
pub fn truncation_for(snr: f64, noise: &NoiseSpec, tolerance: f64) -> u64 {
    let eff = snr / noise.long_run_variance().max(1.0).sqrt();
    let b = eff * eff / 8.0;
    let denom = -(-b).exp_m1();
    let need = ((tolerance * denom / 2.0).ln() / -b).ceil() - 1.0;
    let mut m = need.max(1.0) as u64;
    while m > 1 && tail_bound(eff, m - 1) <= tolerance {
        m -= 1;
    }
    while tail_bound(eff, m) > tolerance {
        m += 1;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkSpec {
    pub snr: f64,
    pub m: u64,
}

impl WalkSpec {
    pub fn new(snr: f64, m: u64) -> Result<Self> {
        if !(snr > 0.0) || !snr.is_finite() {
            return invalid("snr must be positive");
        }
        if m == 0 {
            return invalid("truncation must be positive");
        }
        Ok(Self { snr, m })
    }

    pub fn with_tolerance(snr: f64, noise: &NoiseSpec, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance < 1.0) {
            return invalid("tolerance must lie in (0, 1)");
        }
        Self::new(snr, 1).map(|_| Self { snr, m: truncation_for(snr, noise, tolerance) })
    }
}

/// Banded lower Cholesky factor of a banded Toeplitz covariance.
#[derive(Debug, Clone)]
struct BandCholesky {
    b: usize,
    rows: Vec<f64>,
}

impl BandCholesky {
    fn new(acf: &[f64], n: usize) -> Result<Self> {
        let b = acf.len() - 1;
        let w = b + 1;
        let mut rows = vec![0.0; n * w];
        let at = |i: usize, j: usize| i * w + (j + b - i);
        for i in 0..n {
            for j in i.saturating_sub(b)..=i {
                let mut s = 0.0;
                for k in i.saturating_sub(b).max(j.saturating_sub(b))..j {
                    s += rows[at(i, k)] * rows[at(j, k)];
                }
                let c = acf[i - j] / acf[0];
                if i == j {
                    let d = c - s;
                    if !(d > 0.0) {
                        return invalid("autocorrelation is not positive definite");
                    }
                    rows[at(i, i)] = d.sqrt();
                } else {
                    rows[at(i, j)] = (c - s) / rows[at(j, j)];
                }
            }
        }
        Ok(Self { b, rows })
    }

    fn apply(&self, eta: &[f64], out: &mut [f64]) {
        let w = self.b + 1;
        for (i, o) in out.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.b);
            let row = &self.rows[i * w..(i + 1) * w];
            *o = (lo..=i).map(|j| row[j + self.b - i] * eta[j]).sum();
        }
    }
}

/// Draws increments `e_{-m+1}, .., e_m` into a buffer of length `2m`.
#[derive(Debug, Clone)]
pub struct IncrementSource {
    noise: NoiseSpec,
    m: usize,
    chol: Option<BandCholesky>,
    eta: Vec<f64>,
}

impl IncrementSource {
    pub fn new(noise: &NoiseSpec, m: u64) -> Result<Self> {
        noise.validate()?;
        let m = m as usize;
        let chol = match &noise.kind {
            NoiseKind::CustomAcf(acf) => Some(BandCholesky::new(acf, 2 * m)?),
            _ => None,
        };
        Ok(Self { noise: noise.clone(), m, chol, eta: Vec::new() })
    }

    pub fn fill(&mut self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        let n = 2 * self.m;
        out.clear();
        match &self.noise.kind {
            NoiseKind::Iid => out.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal))),
            NoiseKind::Ma(c) => {
                let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                self.eta.clear();
                self.eta.extend((0..n + c.len() - 1).map(|_| rng.sample::<f64, _>(StandardNormal)));
                out.extend((0..n).map(|i| c.iter().enumerate().map(|(k, ck)| ck * self.eta[i + k]).sum::<f64>() / norm));
            }
            NoiseKind::Ar1(phi) => {
                let s = (1.0 - phi * phi).sqrt();
                let mut prev: f64 = rng.sample(StandardNormal);
                out.push(prev);
                for _ in 1..n {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = phi * prev + s * z;
                    out.push(prev);
                }
            }
            NoiseKind::CustomAcf(_) => {
                self.eta.clear();
                self.eta.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
                out.resize(n, 0.0);
                if let Some(ch) = &self.chol {
                    ch.apply(&self.eta, out);
                }
            }
        }
    }
}

/// Undrifted walk values on each side: `right[k] = X(k)`, `left[k] = X(-k)`.
fn walk_sides(inc: &[f64], m: usize, right: &mut Vec<f64>, left: &mut Vec<f64>) {
    right.clear();
    left.clear();
    right.push(0.0);
    left.push(0.0);
    let mut s = 0.0;
    for &e in &inc[m..2 * m] {
        s += e;
        right.push(s);
    }
    s = 0.0;
    for &e in inc[..m].iter().rev() {
        s -= e;
        left.push(s);
    }
}

/// Argmin over `t in [-m, m]` by direct scan; ties go to the smallest
/// `|t|`, then to negative `t`.
pub fn argmin_scan(right: &[f64], left: &[f64], snr: f64) -> i64 {
    let c = snr / 2.0;
    let mut best = 0.0;
    let mut arg = 0i64;
    for k in 1..right.len() {
        let kf = k as f64;
        let vl = left[k] + c * kf;
        if vl < best {
            best = vl;
            arg = -(k as i64);
        }
        let vr = right[k] + c * kf;
        if vr < best {
            best = vr;
            arg = k as i64;
        }
    }
    arg
}

pub fn simulate_argmin(spec: &WalkSpec, noise: &NoiseSpec, rng: &mut ChaCha8Rng) -> Result<i64> {
    let mut src = IncrementSource::new(noise, spec.m)?;
    let mut inc = Vec::new();
    src.fill(rng, &mut inc);
    let (mut r, mut l) = (Vec::new(), Vec::new());
    walk_sides(&inc, spec.m as usize, &mut r, &mut l);
    Ok(argmin_scan(&r, &l, spec.snr))
}

/// Lower convex hull of `(k, y[k])`, as indices.
fn lower_hull(y: &[f64], hull: &mut Vec<usize>) {
    hull.clear();
    for k in 0..y.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b - a) as f64 * (y[k] - y[a]) - (y[b] - y[a]) * (k - a) as f64;
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
}

/// Minimizers of `y[k] + c k` for ascending drifts `cs`, smallest `k` on ties.
fn hull_minimizers(y: &[f64], hull: &[usize], cs: &[f64], out: &mut Vec<(usize, f64)>) {
    out.clear();
    let mut idx = hull.len() - 1;
    for &c in cs {
        let f = |i: usize| y[hull[i]] + c * hull[i] as f64;
        while idx > 0 && f(idx - 1) <= f(idx) {
            idx -= 1;
        }
        out.push((hull[idx], f(idx)));
    }
}

/// Joins the per-side minimizers with the tie rule of [`argmin_scan`].
fn combine(kr: usize, fr: f64, kl: usize, fl: f64) -> i64 {
    if fl < fr {
        -(kl as i64)
    } else if fr < fl {
        kr as i64
    } else if kl.min(kr) == 0 {
        0
    } else if kl <= kr {
        -(kl as i64)
    } else {
        kr as i64
    }
}

/// Signed argmin counts for several SNRs from common random walks.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgminHistogram {
    pub snrs: Vec<f64>,
    pub m: u64,
    pub reps: u64,
    /// `counts[g][t + m]` for `t in [-m, m]`.
    pub counts: Vec<Vec<u64>>,
}

impl ArgminHistogram {
    /// Simulates `reps` walks truncated at `m` and records the argmin for
    /// every SNR in `snrs` on each walk.
    pub fn simulate(snrs: &[f64], noise: &NoiseSpec, m: u64, reps: u64, seed: u64) -> Result<Self> {
        if snrs.is_empty() || snrs.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return invalid("snr values must be positive");
        }
        if reps == 0 || m == 0 {
            return invalid("reps and truncation must be positive");
        }
        let mut order: Vec<usize> = (0..snrs.len()).collect();
        order.sort_by(|&a, &b| snrs[a].total_cmp(&snrs[b]));
        let cs: Vec<f64> = order.iter().map(|&i| snrs[i] / 2.0).collect();
        let width = 2 * m as usize + 1;
        let src = IncrementSource::new(noise, m)?;
        let blocks = reps.div_ceil(BLOCK);
        let counts = (0..blocks)
            .into_par_iter()
            .map(|blk| {
                let mut rng = rng::stream(seed, rng::WALK, blk);
                let mut src = src.clone();
                let mut local = vec![vec![0u64; width]; cs.len()];
                let (mut inc, mut r, mut l) = (Vec::new(), Vec::new(), Vec::new());
                let (mut hr, mut hl, mut mr, mut ml) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                let n = BLOCK.min(reps - blk * BLOCK);
                for _ in 0..n {
                    src.fill(&mut rng, &mut inc);
                    walk_sides(&inc, m as usize, &mut r, &mut l);
                    lower_hull(&r, &mut hr);
                    lower_hull(&l, &mut hl);
                    hull_minimizers(&r, &hr, &cs, &mut mr);
                    hull_minimizers(&l, &hl, &cs, &mut ml);
                    for (g, (&(kr, fr), &(kl, fl))) in mr.iter().zip(&ml).enumerate() {
                        let t = combine(kr, fr, kl, fl);
                        local[g][(t + m as i64) as usize] += 1;
                    }
                }
                local
            })
            .reduce(
                || vec![vec![0u64; width]; cs.len()],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        for (p, q) in x.iter_mut().zip(y) {
                            *p += q;
                        }
                    }
                    a
                },
            );
        let mut sorted_back = vec![Vec::new(); snrs.len()];
        for (pos, &i) in order.iter().enumerate() {
            sorted_back[i] = counts[pos].clone();
        }
        Ok(Self { snrs: snrs.to_vec(), m, reps, counts: sorted_back })
    }

    /// Signed pmf on `[-m, m]`.
    pub fn pmf(&self, g: usize) -> Vec<f64> {
        self.counts[g].iter().map(|&c| c as f64 / self.reps as f64).collect()
    }

    /// Cumulative counts of `|L| <= k` for `k in 0..=m`.
    pub fn abs_cumulative(&self, g: usize) -> Vec<u64> {
        let m = self.m as usize;
        let c = &self.counts[g];
        let mut out = Vec::with_capacity(m + 1);
        let mut acc = c[m];
        out.push(acc);
        for k in 1..=m {
            acc += c[m + k] + c[m - k];
            out.push(acc);
        }
        out
    }

    /// Empirical `P[|L| > k]`.
    pub fn tail(&self, g: usize, k: u64) -> f64 {
        let cum = self.abs_cumulative(g);
        let inside = cum[(k as usize).min(cum.len() - 1)];
        (self.reps - inside) as f64 / self.reps as f64
    }
}

/// Smallest `k` with `cum[k] >= q * reps`.
fn quantile_from_cumulative(cum: &[u64], reps: u64, q: f64) -> u32 {
    let need = q * reps as f64;
    cum.iter().position(|&c| c as f64 >= need).unwrap_or(cum.len() - 1) as u32
}

fn check_resolution(one_minus_q: f64, reps: u64) -> Result<()> {
    if one_minus_q < 10.0 / reps as f64 {
        return invalid(format!("{reps} replicates cannot resolve a tail probability of {one_minus_q}"));
    }
    Ok(())
}

/// Monte Carlo `q`-quantile of `|L|` at the given SNR under iid noise.
pub fn quantile(snr: f64, q: f64, reps: u64, seed: u64) -> Result<u32> {
    quantile_with_noise(snr, q, &NoiseSpec::iid(), reps, seed)
}

pub fn quantile_with_noise(snr: f64, q: f64, noise: &NoiseSpec, reps: u64, seed: u64) -> Result<u32> {
    if !(q > 0.0 && q < 1.0) {
        return invalid("q must lie in (0, 1)");
    }
    if reps < 100_000 {
        return invalid("quantile estimation needs at least 1e5 replicates");
    }
    check_resolution(1.0 - q, reps)?;
    let spec = WalkSpec::with_tolerance(snr, noise, (1.0 - q) / 100.0)?;
    let h = ArgminHistogram::simulate(&[snr], noise, spec.m, reps, seed)?;
    Ok(quantile_from_cumulative(&h.abs_cumulative(0), reps, q))
}

/// Quantiles of `|L|` over an SNR grid and a set of tail levels `alpha`
/// (entry `[g][a]` is the `1 - alphas[a]` quantile at `snr_grid[g]`).
#[derive(Debug, Clone, PartialEq)]
pub struct LDistTable {
    pub snr_grid: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Columns made non-increasing in SNR by a running minimum.
    pub quantiles: Vec<Vec<u32>>,
    /// As simulated, before the running minimum.
    pub raw_quantiles: Vec<Vec<u32>>,
    pub reps: u64,
    pub seed: u64,
    pub tolerance: f64,
    pub noise: String,
    cumulative: Option<Vec<Vec<u64>>>,
}

/// Evenly spaced grid `lo, lo+step, .., <= hi`, rounded to 1e-9.
pub fn snr_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(step > 0.0) || hi < lo {
        return invalid("grid needs 0 < lo <= hi and step > 0");
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9).collect())
}

fn running_min(col: impl Iterator<Item = u32>) -> Vec<u32> {
    let mut cur = u32::MAX;
    col.map(|v| {
        cur = cur.min(v);
        cur
    })
    .collect()
}

impl LDistTable {
    pub fn build(snr_grid: &[f64], alphas: &[f64], reps: u64, seed: u64, noise: &NoiseSpec, tolerance: f64) -> Result<Self> {
        if snr_grid.is_empty() || snr_grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("snr grid must be strictly increasing");
        }
        if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return invalid("alphas must lie in (0, 1)");
        }
        if reps < 100_000 {
            return invalid("tables need at least 1e5 replicates");
        }
        for &a in alphas {
            check_resolution(a, reps)?;
        }
        let spec = WalkSpec::with_tolerance(snr_grid[0], noise, tolerance)?;
        let h = ArgminHistogram::simulate(snr_grid, noise, spec.m, reps, seed)?;
        let cumulative: Vec<Vec<u64>> = (0..snr_grid.len()).map(|g| h.abs_cumulative(g)).collect();
        let raw: Vec<Vec<u32>> =
            cumulative.iter().map(|cum| alphas.iter().map(|&a| quantile_from_cumulative(cum, reps, 1.0 - a)).collect()).collect();
        let mut table = Self {
            snr_grid: snr_grid.to_vec(),
            alphas: alphas.to_vec(),
            quantiles: Vec::new(),
            raw_quantiles: raw,
            reps,
            seed,
            tolerance,
            noise: noise.label(),
            cumulative: Some(cumulative),
        };
        table.repair();
        Ok(table)
    }

    fn repair(&mut self) {
        let mut q = vec![vec![0u32; self.alphas.len()]; self.snr_grid.len()];
        for a in 0..self.alphas.len() {
            for (g, v) in running_min(self.raw_quantiles.iter().map(|r| r[a])).into_iter().enumerate() {
                q[g][a] = v;
            }
        }
        self.quantiles = q;
    }

    /// Whether any tail level can be looked up, not only the listed ones.
    pub fn has_distribution(&self) -> bool {
        self.cumulative.is_some()
    }

    /// Grid index with the largest grid SNR not exceeding `snr`.
    pub fn floor_index(&self, snr: f64) -> Result<usize> {
        if !(snr >= self.snr_grid[0] - 1e-9) {
            return invalid(format!("snr {snr} is below the table minimum {}", self.snr_grid[0]));
        }
        Ok(self.snr_grid.partition_point(|&d| d <= snr + 1e-9) - 1)
    }

    /// Conservative `1 - alpha` quantile of `|L|` at `snr` floored to the grid.
    pub fn lookup(&self, snr: f64, alpha: f64) -> Result<u32> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        let g = self.floor_index(snr)?;
        if let Some(a) = self.alphas.iter().position(|&x| x == alpha) {
            return Ok(self.quantiles[g][a]);
        }
        if let Some(cum) = &self.cumulative {
            check_resolution(alpha, self.reps)?;
            return Ok(cum[..=g].iter().map(|c| quantile_from_cumulative(c, self.reps, 1.0 - alpha)).min().unwrap_or(0));
        }
        let fallback = self.alphas.iter().enumerate().filter(|(_, &a)| a <= alpha).max_by(|x, y| x.1.total_cmp(y.1)).map(|(i, _)| i);
        match fallback {
            Some(a) => Ok(self.quantiles[g][a]),
            None => invalid(format!("table has no tail level at or below {alpha}")),
        }
    }

    pub fn to_tsv(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "#reps={}", self.reps);
        let _ = writeln!(s, "#seed={}", self.seed);
        let _ = writeln!(s, "#alphas={}", join(&self.alphas));
        let _ = writeln!(s, "#grid={}", join(&self.snr_grid));
        let _ = writeln!(s, "#tolerance={}", self.tolerance);
        let _ = writeln!(s, "#noise={}", self.noise);
        for (g, row) in self.quantiles.iter().enumerate() {
            let _ = write!(s, "{}", self.snr_grid[g]);
            for v in row {
                let _ = write!(s, "\t{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let fmt = |m: String| Error::Format(m);
        let mut reps = None;
        let mut seed = None;
        let mut alphas: Option<Vec<f64>> = None;
        let mut tolerance = 0.0;
        let mut noise = "iid".to_string();
        let mut grid = Vec::new();
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let (k, v) = h.split_once('=').ok_or_else(|| fmt(format!("line {}: bad header", ln + 1)))?;
                match k {
                    "reps" => reps = Some(v.parse().map_err(|_| fmt(format!("bad reps {v:?}")))?),
                    "seed" => seed = Some(v.parse().map_err(|_| fmt(format!("bad seed {v:?}")))?),
                    "alphas" => {
                        alphas = Some(
                            v.split(',').map(|a| a.parse::<f64>().map_err(|_| fmt(format!("bad alpha {a:?}")))).collect::<Result<_>>()?,
                        )
                    }
                    "tolerance" => tolerance = v.parse().map_err(|_| fmt(format!("bad tolerance {v:?}")))?,
                    "noise" => noise = v.to_string(),
                    _ => {}
                }
                continue;
            }
            let mut cols = line.split('\t');
            let snr: f64 = cols.next().and_then(|c| c.parse().ok()).ok_or_else(|| fmt(format!("line {}: bad snr", ln + 1)))?;
            let q: Vec<u32> =
                cols.map(|c| c.parse::<u32>().map_err(|_| fmt(format!("line {}: bad quantile {c:?}", ln + 1)))).collect::<Result<_>>()?;
            grid.push(snr);
            rows.push(q);
        }
        let alphas = alphas.ok_or_else(|| fmt("missing #alphas header".into()))?;
        let reps = reps.ok_or_else(|| fmt("missing #reps header".into()))?;
        let seed = seed.ok_or_else(|| fmt("missing #seed header".into()))?;
        if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(fmt("snr column must be strictly increasing".into()));
        }
        if rows.iter().any(|r| r.len() != alphas.len()) {
            return Err(fmt("row width does not match #alphas".into()));
        }
        let mut t =
            Self { snr_grid: grid, alphas, quantiles: Vec::new(), raw_quantiles: rows, reps, seed, tolerance, noise, cumulative: None };
        t.repair();
        Ok(t)
    }
}
