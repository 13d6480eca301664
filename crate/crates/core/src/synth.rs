// SPDX-License-Identifier: MIT OR Apache-2.0
//! Ground-truth generators: change-point configurations, Gaussian noise
//! models and emulated mean-shift injection.
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{PiecewiseConfig, Series};
use crate::rng;

/// Level bound of the level Markov chain.
pub const LEVEL_BOUND: f64 = 10.0;
const LEVEL_RATE: f64 = 0.3;
const MA3: [f64; 3] = [1.0, 0.5, 0.25];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    Iid,
    /// `(e_i + 0.5 e_{i+1} + 0.25 e_{i+2}) / sqrt(1.3125)`.
    Ma3,
    Ar1 {
        phi: f64,
    },
    /// Four independent regimes per block of four change points.
    Hetero,
}

impl NoiseModel {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "iid" => Self::Iid,
            "ma3" => Self::Ma3,
            "ar1" => Self::Ar1 { phi: 0.2 },
            "hetero" => Self::Hetero,
            _ => return invalid(format!("unknown noise model {s:?}")),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Iid => "iid",
            Self::Ma3 => "ma3",
            Self::Ar1 { .. } => "ar1",
            Self::Hetero => "hetero",
        }
    }

    /// Noise description for the localization walks.
    pub fn walk_noise(&self) -> crate::rwdist::NoiseSpec {
        match self {
            Self::Iid | Self::Hetero => crate::rwdist::NoiseSpec::iid(),
            Self::Ma3 => crate::rwdist::NoiseSpec::ma3(),
            Self::Ar1 { phi } => crate::rwdist::NoiseSpec::ar1(*phi),
        }
    }
}

/// Sequential multinomial draw via conditional binomials.
fn multinomial(rng: &mut ChaCha8Rng, n: u64, p: &[f64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(p.len());
    let mut left = n;
    let mut mass: f64 = p.iter().sum();
    for (i, &pi) in p.iter().enumerate() {
        if i + 1 == p.len() {
            out.push(left);
            break;
        }
        let q = if mass > 0.0 { (pi / mass).clamp(0.0, 1.0) } else { 0.0 };
        let x = if left == 0 || q == 0.0 { 0 } else { Binomial::new(left, q).map(|b| b.sample(rng)).unwrap_or(0) };
        out.push(x);
        left -= x;
        mass -= pi;
    }
    out
}

/// Consecutive gaps of `k` sorted uniforms on `[0, 1]` (length `k + 1`).
fn uniform_gaps(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut u: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    u.sort_by(f64::total_cmp);
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(k + 1);
    for v in u.into_iter().chain(std::iter::once(1.0)) {
        out.push(v - prev);
        prev = v;
    }
    out
}

/// `floor + Multinomial(n - parts*floor, p)` spacings summing to `n`.
fn spacings(rng: &mut ChaCha8Rng, n: usize, parts: usize, floor: usize) -> Vec<usize> {
    let p = uniform_gaps(rng, parts - 1);
    multinomial(rng, (n - parts * floor) as u64, &p).into_iter().map(|x| floor + x as usize).collect()
}

/// Truncated exponential on `[0, len]` with rate `LEVEL_RATE`.
fn trunc_exp(rng: &mut ChaCha8Rng, len: f64) -> f64 {
    let u: f64 = rng.random();
    -(-u * -(-LEVEL_RATE * len).exp_m1()).ln_1p() / LEVEL_RATE
}

/// Next level of the Markov chain from `nu`.
fn next_level(rng: &mut ChaCha8Rng, nu: f64, min_jump: f64) -> f64 {
    let up = LEVEL_BOUND - nu - min_jump;
    let down = nu - min_jump + LEVEL_BOUND;
    let mass = |len: f64| if len > 0.0 { -(-LEVEL_RATE * len).exp_m1() / LEVEL_RATE } else { 0.0 };
    let w_up = mass(up);
    let w_down = (2.0 * LEVEL_RATE * (nu - min_jump)).exp() * mass(down);
    if w_up + w_down <= 0.0 {
        return if up >= 0.0 { nu + min_jump } else { nu - min_jump };
    }
    if rng.random::<f64>() * (w_up + w_down) < w_up {
        nu + min_jump + trunc_exp(rng, up.max(0.0))
    } else {
        nu - min_jump - trunc_exp(rng, down.max(0.0))
    }
}

/// Random configuration with spacings `floor + Multinomial` and a level
/// Markov chain started at 0 with jumps of at least `min_jump`.
pub fn gen_config(n: usize, j: usize, min_jump: f64, min_spacing_floor: usize, seed: u64) -> Result<PiecewiseConfig> {
    if j == 0 {
        return PiecewiseConfig::new(n, vec![], vec![0.0]);
    }
    if min_spacing_floor == 0 || (j + 1).saturating_mul(min_spacing_floor) > n {
        return invalid(format!("cannot fit {} segments of length >= {min_spacing_floor} into {n}", j + 1));
    }
    if !(min_jump > 0.0) || min_jump > LEVEL_BOUND {
        return invalid(format!("min_jump must lie in (0, {LEVEL_BOUND}]"));
    }
    let mut r = rng::stream(seed, rng::CONFIG, 0);
    let gaps = spacings(&mut r, n, j + 1, min_spacing_floor);
    let mut taus = Vec::with_capacity(j);
    let mut acc = 0;
    for g in &gaps[..j] {
        acc += g;
        taus.push(acc);
    }
    let mut levels = vec![0.0];
    for _ in 0..j {
        let prev = *levels.last().unwrap_or(&0.0);
        levels.push(next_level(&mut r, prev, min_jump));
    }
    PiecewiseConfig::new(n, taus, levels)
}

/// Evenly spaced change points with levels alternating `0, jump, 0, ..`.
pub fn even_config(n: usize, j: usize, jump: f64) -> Result<PiecewiseConfig> {
    if n < 2 * (j + 1) {
        return invalid("series too short for the requested change points");
    }
    let taus = (1..=j).map(|k| k * n / (j + 1)).collect();
    let levels = (0..=j).map(|k| if k % 2 == 0 { 0.0 } else { jump }).collect();
    PiecewiseConfig::new(n, taus, levels)
}

fn normals(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn ma3_into(eta: &[f64], out: &mut [f64]) {
    let norm = MA3.iter().map(|c| c * c).sum::<f64>().sqrt();
    for (i, o) in out.iter_mut().enumerate() {
        *o = (MA3[0] * eta[i] + MA3[1] * eta[i + 1] + MA3[2] * eta[i + 2]) / norm;
    }
}

/// Regime (1 to 4) of index `i` under the heteroscedastic recipe.
pub fn hetero_regime(config: &PiecewiseConfig, i: usize) -> Result<u8> {
    let b = hetero_bounds(config)?;
    let k = b.partition_point(|&(hi, _)| hi < i);
    Ok(b[k.min(b.len() - 1)].1)
}

/// Upper ends (inclusive) of the regime stretches with their regime ids.
fn hetero_bounds(config: &PiecewiseConfig) -> Result<Vec<(usize, u8)>> {
    let j = config.j();
    if j < 3 || !(j + 1).is_multiple_of(4) {
        return invalid("the heteroscedastic recipe needs J + 1 to be a positive multiple of 4");
    }
    let t = |k: usize| {
        if k == 0 {
            0
        } else if k == j + 1 {
            config.n
        } else {
            config.taus[k - 1]
        }
    };
    let mut out = Vec::new();
    for blk in 0..(j + 1) / 4 {
        let b = 4 * blk;
        out.push(((t(b + 1) + t(b + 2)) / 2, 1));
        out.push(((t(b + 2) + t(b + 3)) / 2, 2));
        out.push((t(b + 3), 3));
        out.push((t(b + 4), 4));
    }
    Ok(out)
}

/// Unit-scale noise of length `n` under `model`.
pub fn gen_noise(model: NoiseModel, config: &PiecewiseConfig, seed: u64) -> Result<Vec<f64>> {
    let n = config.n;
    let mut r = rng::stream(seed, rng::NOISE, 0);
    Ok(match model {
        NoiseModel::Iid => normals(&mut r, n),
        NoiseModel::Ma3 => {
            let eta = normals(&mut r, n + 2);
            let mut out = vec![0.0; n];
            ma3_into(&eta, &mut out);
            out
        }
        NoiseModel::Ar1 { phi } => {
            if !(phi.abs() < 1.0) {
                return invalid("AR(1) coefficient must satisfy |phi| < 1");
            }
            let s = (1.0 - phi * phi).sqrt();
            let mut out = Vec::with_capacity(n);
            let mut prev: f64 = r.sample(StandardNormal);
            out.push(prev);
            for _ in 1..n {
                let z: f64 = r.sample(StandardNormal);
                prev = phi * prev + s * z;
                out.push(prev);
            }
            out
        }
        NoiseModel::Hetero => {
            let bounds = hetero_bounds(config)?;
            let mut out = vec![0.0; n];
            let mut lo = 0;
            for (k, &(hi, regime)) in bounds.iter().enumerate() {
                if hi <= lo {
                    continue;
                }
                let mut rs = rng::stream(seed, rng::NOISE, k as u64 + 1);
                let len = hi - lo;
                let seg = &mut out[lo..hi];
                match regime {
                    1 => seg.copy_from_slice(&normals(&mut rs, len)),
                    2 => ma3_into(&normals(&mut rs, len + 2), seg),
                    3 => {
                        let eta = normals(&mut rs, len + 3);
                        for (i, o) in seg.iter_mut().enumerate() {
                            *o = 0.5 * (eta[i] + eta[i + 1] + eta[i + 2] + eta[i + 3]) / 2.0;
                        }
                    }
                    _ => {
                        let eta = normals(&mut rs, len + 3);
                        for (i, o) in seg.iter_mut().enumerate() {
                            *o = 0.7 * (eta[i] + eta[i + 3]) / std::f64::consts::SQRT_2;
                        }
                    }
                }
                lo = hi;
            }
            out
        }
    })
}

/// `Y_i = theta_i + scale * eps_i`.
pub fn gen_series(config: &PiecewiseConfig, model: NoiseModel, scale: f64, seed: u64) -> Result<Series> {
    config.validate()?;
    if !(scale >= 0.0) || !scale.is_finite() {
        return invalid("noise scale must be finite and non-negative");
    }
    let mut y = config.signal();
    if scale > 0.0 {
        for (v, e) in y.iter_mut().zip(gen_noise(model, config, seed)?) {
            *v += scale * e;
        }
    }
    Series::new(y)
}

/// One family of injected mean shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftFamily {
    pub count: usize,
    /// Minimum gap between consecutive right ends.
    pub spacing_floor: usize,
    pub min_len: usize,
    /// Subtracted from each gap before the binomial length draw.
    pub len_slack: usize,
    pub len_prob: f64,
    /// Shift range in units of the series standard deviation.
    pub delta_lo: f64,
    pub delta_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulationSpec {
    pub sig1: ShiftFamily,
    pub sig2: ShiftFamily,
}

impl EmulationSpec {
    /// Full-scale families: 31 long mild shifts and 201 short spikes.
    pub fn full_scale() -> Self {
        Self {
            sig1: ShiftFamily {
                count: 31,
                spacing_floor: 150_000,
                min_len: 75_000,
                len_slack: 75_000,
                len_prob: 0.5,
                delta_lo: 1.3,
                delta_hi: 2.0,
            },
            sig2: ShiftFamily {
                count: 201,
                spacing_floor: 50_050,
                min_len: 50,
                len_slack: 50_000,
                len_prob: 1e-4,
                delta_lo: 10.0,
                delta_hi: 15.0,
            },
        }
    }

    /// Lengths divided by `factor`, counts and shift laws unchanged.
    pub fn scaled(factor: usize) -> Self {
        let f = factor.max(1);
        let mut s = Self::full_scale();
        for fam in [&mut s.sig1, &mut s.sig2] {
            fam.spacing_floor = (fam.spacing_floor / f).max(1);
            fam.min_len = (fam.min_len / f).max(1);
            fam.len_slack = (fam.len_slack / f).max(fam.min_len);
        }
        s
    }

    pub fn empty() -> Self {
        let mut s = Self::full_scale();
        s.sig1.count = 0;
        s.sig2.count = 0;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    /// First shifted index.
    pub v: usize,
    /// Last shifted index.
    pub w: usize,
    pub delta: f64,
    pub family: u8,
}

fn place(rng: &mut ChaCha8Rng, n: usize, fam: &ShiftFamily, sd: f64, family: u8) -> Result<Vec<Injection>> {
    if fam.count == 0 {
        return Ok(Vec::new());
    }
    if fam.min_len == 0 || fam.len_slack < fam.min_len || !(fam.delta_lo <= fam.delta_hi) {
        return invalid("shift family needs 1 <= min_len <= len_slack and delta_lo <= delta_hi");
    }
    let parts = fam.count + 1;
    if fam.spacing_floor < fam.len_slack || parts.saturating_mul(fam.spacing_floor) > n {
        return Err(Error::Invalid(format!("cannot place {} shifts with spacing >= {} in {n} points", fam.count, fam.spacing_floor)));
    }
    let gaps = spacings(rng, n, parts, fam.spacing_floor);
    let mut out = Vec::with_capacity(fam.count);
    let mut w = 0;
    for &gap in &gaps[..fam.count] {
        w += gap;
        let trials = (gap - fam.len_slack) as u64;
        let extra = if trials == 0 || fam.len_prob <= 0.0 {
            0
        } else {
            Binomial::new(trials, fam.len_prob.min(1.0)).map(|b| b.sample(rng)).unwrap_or(0) as usize
        };
        let len = fam.min_len + extra;
        let delta = sd * (fam.delta_lo + (fam.delta_hi - fam.delta_lo) * rng.random::<f64>());
        out.push(Injection { v: w - len + 1, w, delta, family });
    }
    Ok(out)
}

/// Adds the shifts of both families and returns the modified series and
/// the ledger of injected stretches.
pub fn inject_emulation(series: &Series, spec: &EmulationSpec, seed: u64) -> Result<(Series, Vec<Injection>)> {
    let y = series.values();
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let mut r1 = rng::stream(seed, rng::EMULATION, 1);
    let mut r2 = rng::stream(seed, rng::EMULATION, 2);
    let mut ledger = place(&mut r1, n, &spec.sig1, sd, 1)?;
    ledger.extend(place(&mut r2, n, &spec.sig2, sd, 2)?);
    let mut out = y.to_vec();
    for inj in &ledger {
        for v in &mut out[inj.v - 1..inj.w] {
            *v += inj.delta;
        }
    }
    Ok((Series::new(out)?, ledger))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_without_change_points() {
        let c = gen_config(100, 0, 1.0, 10, 1).unwrap();
        assert!(c.taus.is_empty());
        assert_eq!(c.levels, vec![0.0]);
    }

    #[test]
    fn config_guarantees() {
        for seed in 0..200 {
            let c = gen_config(10_000, 12, 1.0, 500, seed).unwrap();
            assert_eq!(c.j(), 12);
            assert!(c.min_spacing() >= 500);
            assert!(c.min_jump() >= 1.0 - 1e-12);
            assert!(c.level_bound() <= LEVEL_BOUND);
        }
        assert!(gen_config(100, 10, 1.0, 10, 0).is_err());
    }

    #[test]
    fn mean_spacing_matches_law() {
        let (n, j) = (100_000, 9);
        let mut total = 0.0;
        let mut count = 0.0;
        for seed in 0..1000 {
            let c = gen_config(n, j, 1.0, n / (3 * j), seed).unwrap();
            let mut prev = 0;
            for &t in c.taus.iter().chain(std::iter::once(&n)) {
                total += (t - prev) as f64;
                count += 1.0;
                prev = t;
            }
            // first gap alone is a random quantity
            let first = c.taus[0] as f64;
            assert!(first >= (n / (3 * j)) as f64);
        }
        let want = n as f64 / (j + 1) as f64;
        assert!((total / count - want).abs() / want < 0.05);
    }

    #[test]
    fn noiseless_series_is_signal() {
        let c = gen_config(1000, 3, 1.0, 100, 2).unwrap();
        let s = gen_series(&c, NoiseModel::Iid, 0.0, 3).unwrap();
        assert_eq!(s.values(), c.signal().as_slice());
    }

    #[test]
    fn hetero_layout() {
        let c = even_config(1200, 7, 1.0).unwrap();
        let r = |i| hetero_regime(&c, i).unwrap();
        for blk in 0..2 {
            let t = |k: usize| c.taus[4 * blk + k - 1];
            assert_eq!((r(t(1)), r(t(1) + 1)), (1, 1));
            assert_eq!((r(t(2)), r(t(2) + 1)), (2, 2));
            assert_eq!((r(t(3)), r(t(3) + 1)), (3, 4));
            if 4 * blk + 4 <= 7 {
                assert_eq!((r(t(4)), r(t(4) + 1)), (4, 1));
            }
        }
        assert!(gen_series(&even_config(1200, 6, 1.0).unwrap(), NoiseModel::Hetero, 1.0, 1).is_err());
        assert!(gen_series(&c, NoiseModel::Hetero, 1.0, 1).is_ok());
    }

    #[test]
    fn deterministic_under_seed() {
        let c = even_config(5000, 4, 1.0).unwrap();
        for m in [NoiseModel::Iid, NoiseModel::Ma3, NoiseModel::Ar1 { phi: 0.2 }] {
            assert_eq!(gen_series(&c, m, 1.0, 42).unwrap(), gen_series(&c, m, 1.0, 42).unwrap());
            assert_ne!(gen_series(&c, m, 1.0, 42).unwrap(), gen_series(&c, m, 1.0, 43).unwrap());
        }
        assert_eq!(gen_config(10_000, 5, 1.0, 100, 7).unwrap(), gen_config(10_000, 5, 1.0, 100, 7).unwrap());
    }

    #[test]
    fn emulation_empty_and_ledger() {
        let c = PiecewiseConfig::new(300_000, vec![], vec![0.0]).unwrap();
        let s = gen_series(&c, NoiseModel::Iid, 1.0, 1).unwrap();
        let (same, led) = inject_emulation(&s, &EmulationSpec::empty(), 3).unwrap();
        assert!(led.is_empty());
        assert_eq!(same, s);
        let spec = EmulationSpec::scaled(40);
        let (out, led) = inject_emulation(&s, &spec, 3).unwrap();
        assert_eq!(led.len(), spec.sig1.count + spec.sig2.count);
        let mut expect = s.values().to_vec();
        for inj in &led {
            for v in &mut expect[inj.v - 1..inj.w] {
                *v += inj.delta;
            }
        }
        assert_eq!(out.values(), expect.as_slice());
        for fam in [1u8, 2] {
            let mut spans: Vec<_> = led.iter().filter(|i| i.family == fam).collect();
            spans.sort_by_key(|i| i.v);
            assert!(spans.windows(2).all(|w| w[0].w < w[1].v));
        }
        assert!(led.iter().filter(|i| i.family == 1).all(|i| i.w - i.v + 1 >= spec.sig1.min_len));
    }

    #[test]
    fn full_scale_stretch_lengths() {
        let c = PiecewiseConfig::new(6_000_000, vec![], vec![0.0]).unwrap();
        let s = gen_series(&c, NoiseModel::Iid, 1.0, 5).unwrap();
        let spec = EmulationSpec { sig1: EmulationSpec::full_scale().sig1, sig2: EmulationSpec::empty().sig2 };
        let (_, led) = inject_emulation(&s, &spec, 9).unwrap();
        assert_eq!(led.len(), 31);
        assert!(led.iter().all(|i| i.w - i.v + 1 >= 75_000));
    }
}
