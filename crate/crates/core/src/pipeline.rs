// SPDX-License-Identifier: MIT OR Apache-2.0
//! Intelligent sampling: strided segmentation, offset recalibration, dense
//! window refits, multi-stage shrinking, confidence intervals and the
//! sample-allocation planner.
use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::{SequenceAccessor, Tracked};
use crate::model::SubsampleGrid;
use crate::rwdist::{self, LDistTable, NoiseSpec};
use crate::segmentation::{self, Method, SegmentationParams};
use crate::stump;

/// `Phi^{-1}(3/4)`.
const NORMAL_Q75: f64 = 0.674_489_750_196_081_7;
const MIN_SUBSAMPLE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub stages: usize,
    /// Explicit stage-1 size; otherwise `k1 * N^gamma`.
    pub n1: Option<usize>,
    pub gamma: f64,
    pub k1: f64,
    /// Stage-2 window multiplier.
    pub k: f64,
    /// Simultaneous confidence-interval level.
    pub alpha: f64,
    /// Tail level for the window half-widths.
    pub window_alpha: f64,
    pub delta_d: usize,
    pub big_delta_d: f64,
    pub snr_floor: f64,
    pub omit_stage1_points: bool,
    /// Threshold multiplier; `None` uses `N*^0.2`.
    pub zeta: Option<f64>,
    pub method: Method,
    pub wbs_intervals: usize,
    pub noise: NoiseSpec,
    /// Known noise scale; skips estimation.
    pub sigma: Option<f64>,
    pub seed: u64,
    pub timings: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stages: 2,
            n1: None,
            gamma: 0.5,
            k1: 50.0,
            k: 1.5,
            alpha: 0.05,
            window_alpha: 0.01,
            delta_d: 15,
            big_delta_d: 0.5,
            snr_floor: 0.5,
            omit_stage1_points: true,
            zeta: None,
            method: Method::Binseg,
            wbs_intervals: 5000,
            noise: NoiseSpec::iid(),
            sigma: None,
            seed: 0,
            timings: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.stages) {
            return invalid("stages must lie in 2..=4");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.window_alpha > 0.0 && self.window_alpha < 1.0) {
            return invalid("alpha levels must lie in (0, 1)");
        }
        if !(self.k > 1.0) || !self.k.is_finite() {
            return invalid("K must exceed 1");
        }
        if !(self.snr_floor > 0.0) {
            return invalid("snr_floor must be positive");
        }
        if matches!(self.n1, Some(n1) if n1 < 2) {
            return invalid("N1 must be at least 2");
        }
        if self.n1.is_none() && !(self.gamma > 0.0 && self.gamma < 1.0 && self.k1 > 0.0) {
            return invalid("need 0 < gamma < 1 and k1 > 0");
        }
        if matches!(self.zeta, Some(z) if !(z > 0.0)) {
            return invalid("zeta must be positive");
        }
        if !(self.big_delta_d >= 0.0) {
            return invalid("Delta_D must be non-negative");
        }
        if matches!(self.sigma, Some(s) if !(s > 0.0) || !s.is_finite()) {
            return invalid("sigma must be positive");
        }
        self.noise.validate()
    }

    /// Stage-1 subsample size for a series of length `n`.
    pub fn n1_for(&self, n: usize) -> usize {
        self.n1.unwrap_or_else(|| (self.k1 * (n as f64).powf(self.gamma)).round() as usize)
    }
}

/// Output of the strided pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1 {
    pub grid: SubsampleGrid,
    /// `Z_k = Y_{k g}`, `k = 1..N*`.
    pub z: Vec<f64>,
    /// Change points on the subsample scale.
    pub taus: Vec<usize>,
    pub levels: Vec<f64>,
    pub sigma_hat: f64,
    /// Noise scale used for thresholds; 1 when `sigma_hat` is 0.
    pub scale: f64,
}

/// Recalibrated change points on the full scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    pub taus: Vec<usize>,
    /// Levels from the stage-1 subsample after the second drop pass.
    pub levels: Vec<f64>,
    /// Window quantiles `Q_j`.
    pub q: Vec<u32>,
    /// `(Q_j + 1) g`.
    pub half_widths: Vec<usize>,
}

/// Median absolute lagged difference over `sqrt(2) Phi^{-1}(3/4)`.
pub fn sigma_from_sample(z: &[f64], stride: usize, noise: &NoiseSpec) -> Result<f64> {
    let lag = if noise.is_iid() { 1 } else { (noise.band() + 1).div_ceil(stride.max(1)) };
    if z.len() <= lag + 1 {
        return invalid("sample too short for the scale estimate");
    }
    let mut d: Vec<f64> = z.windows(lag + 1).map(|w| (w[lag] - w[0]).abs()).collect();
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let mut med = *m;
    if d.len().is_multiple_of(2) {
        let lo = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        med = (med + lo) / 2.0;
    }
    let s = med / (std::f64::consts::SQRT_2 * NORMAL_Q75);
    if s == 0.0 {
        return Err(Error::ZeroSigma);
    }
    Ok(s)
}

/// Robust noise scale from a strided probe of about `sample_budget` points.
pub fn estimate_sigma<A: SequenceAccessor + ?Sized>(acc: &A, sample_budget: usize, noise: &NoiseSpec) -> Result<f64> {
    if sample_budget < 100 {
        return invalid("sigma estimation needs a budget of at least 100");
    }
    let n = acc.len();
    let stride = (n / sample_budget).max(1);
    let count = n / stride;
    let z = acc.read_strided(stride, stride, count)?;
    sigma_from_sample(&z, stride, noise)
}

fn zeta_for(config: &PipelineConfig, nstar: usize) -> Result<f64> {
    match config.zeta {
        Some(z) => Ok(z),
        None => segmentation::default_threshold(nstar, 0.0),
    }
}

/// Strided pass: segmentation of `Z_k = Y_{k g}` followed by both drop steps.
pub fn stage1<A: SequenceAccessor + ?Sized>(acc: &A, config: &PipelineConfig) -> Result<Stage1> {
    config.validate()?;
    let n = acc.len();
    let n1 = config.n1_for(n);
    if n1 < 2 || n1 > n {
        return invalid(format!("N1 = {n1} must lie in [2, {n}]"));
    }
    let g = n / n1;
    if g < 2 {
        return invalid(format!("stride N/N1 = {g} must be at least 2"));
    }
    let nstar = n / g;
    if nstar < MIN_SUBSAMPLE {
        return invalid(format!("subsample of {nstar} points is shorter than {MIN_SUBSAMPLE}"));
    }
    let grid = SubsampleGrid::new(n, g, 0)?;
    let z = acc.read_strided(g, g, nstar)?;
    let sigma_hat = match config.sigma {
        Some(s) => s,
        None => match sigma_from_sample(&z, g, &config.noise) {
            Ok(s) => s,
            Err(Error::ZeroSigma) => 0.0,
            Err(e) => return Err(e),
        },
    };
    let scale = if sigma_hat > 0.0 { sigma_hat } else { 1.0 };
    let zeta = zeta_for(config, nstar)?;
    let params = SegmentationParams {
        zeta: zeta * scale,
        method: config.method,
        wbs_intervals: config.wbs_intervals,
        include_full_interval: true,
        seed: crate::rng::child_seed(config.seed, crate::rng::WBS, 0),
    };
    let raw = segmentation::segment(&z, &params)?;
    let close = segmentation::drop_close(&raw, config.delta_d);
    let taus = segmentation::drop_small_jump(&z, &close, config.big_delta_d * scale)?;
    let levels = segmentation::estimate_levels(&z, &taus)?;
    Ok(Stage1 { grid, z, taus, levels, sigma_hat, scale })
}

fn snr_of(jump: f64, scale: f64, sigma_hat: f64) -> f64 {
    if sigma_hat > 0.0 {
        jump.abs() / scale
    } else {
        f64::INFINITY
    }
}

/// Refits every stage-1 estimate on the offset subsample
/// `V_k = Y_{k g - k_N}`, `k_N = floor(g / 2)`.
pub fn calibrate<A: SequenceAccessor + ?Sized>(acc: &A, s1: &Stage1, config: &PipelineConfig, table: &LDistTable) -> Result<Calibrated> {
    let j = s1.taus.len();
    if j == 0 {
        return Ok(Calibrated { taus: vec![], levels: s1.levels.clone(), q: vec![], half_widths: vec![] });
    }
    let g = s1.grid.stride;
    let nstar = s1.z.len();
    let kn = g / 2;
    let mut re = Vec::with_capacity(j);
    for (i, &t) in s1.taus.iter().enumerate() {
        let prev = if i == 0 { 0 } else { s1.taus[i - 1] };
        let next = s1.taus.get(i + 1).copied().unwrap_or(nstar);
        let d = (t - prev).min(next - t);
        let lo = (t + 1).saturating_sub(d).max(1);
        let hi = (t + d - 1).min(nstar);
        if hi <= lo {
            re.push(t);
            continue;
        }
        let count = hi - lo + 1;
        let v = acc.read_strided(lo * g - kn, g, count)?;
        let ks: Vec<usize> = (lo..=hi).collect();
        re.push(stump::fit_stump_known_levels(&ks, &v, s1.levels[i], s1.levels[i + 1])?);
    }
    re.sort_unstable();
    re.dedup();
    let re = segmentation::drop_close(&re, config.delta_d);
    let tz: Vec<usize> = re.iter().filter(|&&k| k > 1).map(|&k| k - 1).collect();
    let tz = segmentation::drop_small_jump(&s1.z, &tz, config.big_delta_d * s1.scale)?;
    let levels = segmentation::estimate_levels(&s1.z, &tz)?;
    let jhat = tz.len();
    let taus: Vec<usize> = tz.iter().map(|&k| (k + 1) * g - kn).collect();
    let mut q = Vec::with_capacity(jhat);
    for w in levels.windows(2) {
        let snr = snr_of(w[1] - w[0], s1.scale, s1.sigma_hat).max(config.snr_floor);
        q.push(table.lookup(snr, config.window_alpha / jhat as f64)?);
    }
    let half_widths = q.iter().map(|&x| (x as usize + 1) * g).collect();
    Ok(Calibrated { taus, levels, q, half_widths })
}

/// Window `[c - h, c + h]` clipped to the midpoints with the neighbours.
fn clipped_window(taus: &[usize], j: usize, h: usize, n: usize) -> (usize, usize) {
    let c = taus[j];
    let mut lo = c.saturating_sub(h).max(1);
    let mut hi = (c + h).min(n);
    if j > 0 {
        lo = lo.max((taus[j - 1] + c) / 2 + 1);
    }
    if j + 1 < taus.len() {
        hi = hi.min((c + taus[j + 1]) / 2);
    }
    (lo, hi)
}

/// Indices of `[lo, hi]` with `i ≡ 0 (mod stride)` minus those on any grid in `omit`.
fn sample_indices(lo: usize, hi: usize, stride: usize, omit: &[usize]) -> Vec<usize> {
    let first = lo.div_ceil(stride) * stride;
    let mut out = Vec::new();
    let mut i = first.max(stride);
    while i <= hi {
        if !omit.iter().any(|&s| i.is_multiple_of(s)) {
            out.push(i);
        }
        i += stride;
    }
    out
}

/// One change point's estimate after the dense stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub tau: usize,
    /// Fitted index among the kept points; `tau` differs only inside an
    /// omitted run.
    pub kept: usize,
    /// Strides whose members were left out of the final fit.
    pub omitted: Vec<usize>,
    pub window: (usize, usize),
}

fn refine_one<A: SequenceAccessor + ?Sized>(
    acc: &A,
    cal: &Calibrated,
    j: usize,
    stride1: usize,
    config: &PipelineConfig,
) -> Result<Option<Refined>> {
    let n = acc.len();
    let h = (config.k * cal.half_widths[j] as f64).floor() as usize;
    let (outer_lo, outer_hi) = clipped_window(&cal.taus, j, h, n);
    let (nl, nr) = (cal.levels[j], cal.levels[j + 1]);
    let qf = (cal.q[j] + 1) as f64;
    let mut used = vec![stride1];
    let (mut lo, mut hi) = (outer_lo, outer_hi);
    let p = config.stages;
    for k in 2..p {
        let s = (stride1 as f64).powf((p - k) as f64 / (p - 1) as f64).round() as usize;
        if s < 2 || s >= *used.last().unwrap_or(&usize::MAX) {
            continue;
        }
        let omit: &[usize] = if config.omit_stage1_points { &used } else { &[] };
        let idx = sample_indices(lo, hi, s, omit);
        if idx.len() < 2 {
            continue;
        }
        let y = acc.read_indices(&idx)?;
        let c = stump::fit_stump_known_levels(&idx, &y, nl, nr)?;
        // next window spans K(Q+1) sampled points either side of the fit
        let r = ((config.k * qf).ceil() as usize).max(1);
        let pos = idx.partition_point(|&i| i < c);
        if pos >= r {
            lo = idx[pos - r];
        }
        if pos + r < idx.len() {
            hi = idx[pos + r];
        }
        used.push(s);
    }
    let omit: Vec<usize> = if config.omit_stage1_points { used } else { vec![] };
    let idx: Vec<usize> = (lo..=hi).filter(|i| !omit.iter().any(|&s| i % s == 0)).collect();
    if idx.len() < 2 {
        return Ok(None);
    }
    let y = acc.read_indices(&idx)?;
    let kept = stump::fit_stump_known_levels(&idx, &y, nl, nr)?;
    // place the split inside the omitted run after `kept` using values read earlier
    let mut tau = kept;
    let (mut cum, mut best) = (0.0, 0.0);
    let mut i = kept + 1;
    while i <= hi && omit.iter().any(|&s| i % s == 0) {
        cum += (nr - nl) * (2.0 * acc.get(i)? - nl - nr);
        if cum < best {
            best = cum;
            tau = i;
        }
        i += 1;
    }
    Ok(Some(Refined { tau, kept, omitted: omit, window: (lo, hi) }))
}

/// Dense refits around every calibrated change point; `None` marks a window
/// clipped below two points.
pub fn stage2<A: SequenceAccessor + ?Sized>(
    acc: &A,
    cal: &Calibrated,
    stride1: usize,
    config: &PipelineConfig,
) -> Result<Vec<Option<Refined>>> {
    (0..cal.taus.len()).into_par_iter().map(|j| refine_one(acc, cal, j, stride1, config)).collect()
}

/// `[lo, hi]` holding every position within `q` kept indices of `tau`,
/// where kept means not a member of any stride in `omitted`.
pub fn interval_in_kept_units(tau: usize, q: u32, omitted: &[usize], n: usize) -> (usize, usize) {
    let kept = |i: usize| !omitted.iter().any(|&s| i.is_multiple_of(s));
    let mut i = tau;
    let mut c = 0;
    let lo = loop {
        if c == q {
            break i;
        }
        if i == 1 {
            break 1;
        }
        i -= 1;
        if kept(i) {
            c += 1;
        }
    };
    let mut i = tau;
    let mut c = 0;
    let hi = loop {
        if i == n {
            break n;
        }
        i += 1;
        if kept(i) {
            c += 1;
            if c == q + 1 {
                break i - 1;
            }
        }
    };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub tau: usize,
    pub ci_lo: usize,
    pub ci_hi: usize,
    pub level_left: f64,
    pub level_right: f64,
    pub snr: f64,
    /// Calibrated estimate before the dense fits.
    pub tau_coarse: usize,
    /// Quantile used for the interval half-width.
    pub q: u32,
}

/// Per-CP `1 - alpha / J` intervals at the floored plug-in SNR.
pub fn confidence_intervals(
    refined: &[Refined],
    levels: &[f64],
    sigma_hat: f64,
    config: &PipelineConfig,
    table: &LDistTable,
    n: usize,
) -> Result<Vec<(usize, usize, u32, f64)>> {
    let j = refined.len();
    if j == 0 {
        return Ok(vec![]);
    }
    if levels.len() != j + 1 {
        return invalid("need one more level than estimates");
    }
    let scale = if sigma_hat > 0.0 { sigma_hat } else { 1.0 };
    let mut out = Vec::with_capacity(j);
    for (r, w) in refined.iter().zip(levels.windows(2)) {
        let snr = snr_of(w[1] - w[0], scale, sigma_hat);
        let q = table.lookup(snr.max(config.snr_floor), config.alpha / j as f64)?;
        let (lo, hi) = if config.omit_stage1_points {
            interval_in_kept_units(r.kept, q, &r.omitted, n)
        } else {
            (r.tau.saturating_sub(q as usize).max(1), (r.tau + q as usize).min(n))
        };
        out.push((lo, hi, q, snr));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub n: usize,
    #[serde(rename = "n1_effective")]
    pub n1: usize,
    pub stride: usize,
    pub table_noise: String,
    pub table_reps: u64,
    #[serde(flatten)]
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub j_hat: usize,
    pub sigma_hat: f64,
    pub estimates: Vec<Estimate>,
    pub touched_indices: usize,
    pub touched_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings_ms: Option<BTreeMap<String, f64>>,
    pub warnings: Vec<String>,
    pub config_echo: ConfigEcho,
}

impl DetectionReport {
    pub fn taus(&self) -> Vec<usize> {
        self.estimates.iter().map(|e| e.tau).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn check_table(config: &PipelineConfig, table: &LDistTable) -> Result<()> {
    let want = if config.omit_stage1_points { NoiseSpec::iid().label() } else { config.noise.label() };
    if table.noise != want {
        return invalid(format!("table was built for noise {:?}, detection needs {want:?}", table.noise));
    }
    Ok(())
}

/// Full detection run over `acc`.
pub fn detect<A: SequenceAccessor + ?Sized>(acc: &A, config: &PipelineConfig, table: &LDistTable) -> Result<DetectionReport> {
    config.validate()?;
    check_table(config, table)?;
    let start = Instant::now();
    let mut times = BTreeMap::new();
    let mut lap = |name: &str, t: &mut Instant| {
        times.insert(name.to_string(), t.elapsed().as_secs_f64() * 1e3);
        *t = Instant::now();
    };
    let tracked = Tracked::new(acc);
    let n = acc.len();
    let mut t = Instant::now();
    let s1 = stage1(&tracked, config)?;
    lap("stage1", &mut t);
    let cal = calibrate(&tracked, &s1, config, table)?;
    lap("calibrate", &mut t);
    let refined = stage2(&tracked, &cal, s1.grid.stride, config)?;
    lap("stage2", &mut t);
    let mut warnings = Vec::new();
    if s1.sigma_hat == 0.0 {
        warnings.push("noise scale estimate is 0; using unit scale".to_string());
    }
    let mut kept = Vec::new();
    let mut coarse = Vec::new();
    let mut q_win = Vec::new();
    let mut lv = vec![cal.levels[0]];
    for (j, r) in refined.into_iter().enumerate() {
        match r {
            Some(r) => {
                kept.push(r);
                coarse.push(cal.taus[j]);
                q_win.push(cal.q[j]);
                lv.push(cal.levels[j + 1]);
            }
            None => {
                warnings.push(format!("dropped estimate near {}: window clipped below two points", cal.taus[j]));
                if let Some(last) = lv.last_mut() {
                    *last = cal.levels[j + 1];
                }
            }
        }
    }
    let cis = confidence_intervals(&kept, &lv, s1.sigma_hat, config, table, n)?;
    lap("intervals", &mut t);
    let estimates = kept
        .iter()
        .zip(&cis)
        .enumerate()
        .map(|(j, (r, &(lo, hi, q, snr)))| Estimate {
            tau: r.tau,
            ci_lo: lo,
            ci_hi: hi,
            level_left: lv[j],
            level_right: lv[j + 1],
            snr,
            tau_coarse: coarse[j],
            q,
        })
        .collect::<Vec<_>>();
    let touched = tracked.touched();
    times.insert("total".to_string(), start.elapsed().as_secs_f64() * 1e3);
    Ok(DetectionReport {
        j_hat: estimates.len(),
        sigma_hat: s1.sigma_hat,
        estimates,
        touched_indices: touched,
        touched_fraction: touched as f64 / n as f64,
        timings_ms: config.timings.then_some(times),
        warnings,
        config_echo: ConfigEcho {
            n,
            n1: config.n1_for(n),
            stride: s1.grid.stride,
            table_noise: table.noise.clone(),
            table_reps: table.reps,
            config: config.clone(),
        },
    })
}

/// Planned sample sizes for a `stages`-stage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: usize,
    pub n1: usize,
    pub n2_per_cp: Vec<usize>,
    pub predicted_total: usize,
    pub predicted_fraction: f64,
    pub q: u32,
    pub s: usize,
}

/// Allocation for a known window quantile `q`.
pub fn allocation_for_q(n: usize, j: usize, q: u32, stages: usize) -> Result<StagePlan> {
    if n < 4 || j == 0 {
        return invalid("need N >= 4 and J >= 1");
    }
    if !(2..=4).contains(&stages) {
        return invalid("stages must lie in 2..=4");
    }
    let s = j * (q as usize + 1);
    let (nf, sf, qf) = (n as f64, s as f64, (q + 1) as f64);
    let p = stages as f64;
    let n1 = (nf.powf(1.0 / p) * sf.powf((p - 1.0) / p)).ceil() as usize;
    let inner = (2.0 * qf * nf.powf(1.0 / p) * sf.powf(-1.0 / p)).ceil() as usize;
    let n2_per_cp = vec![inner; stages - 2];
    let total = (2.0 * p * nf.powf(1.0 / p) * sf.powf((p - 1.0) / p)).round() as usize;
    if total >= n {
        return invalid(format!("predicted total {total} is not below N = {n}; subsampling does not pay off"));
    }
    Ok(StagePlan { stages, n1, n2_per_cp, predicted_total: total, predicted_fraction: total as f64 / nf, q, s })
}

/// Allocation with `Q = quantile(snr_lower, 1 - alpha / J)`.
pub fn plan_allocation(n: usize, j_upper: usize, snr_lower: f64, alpha: f64, stages: usize, reps: u64, seed: u64) -> Result<StagePlan> {
    if j_upper == 0 || !(snr_lower > 0.0) {
        return invalid("need J >= 1 and snr > 0");
    }
    let q = rwdist::quantile(snr_lower, 1.0 - alpha / j_upper as f64, reps, seed)?;
    allocation_for_q(n, j_upper, q, stages)
}

/// Two-stage point count `2 N1 + 2 S N / N1` as a function of `N1`.
pub fn two_stage_total(n: usize, s: usize, n1: usize) -> f64 {
    2.0 * n1 as f64 + 2.0 * s as f64 * n as f64 / n1 as f64
}
