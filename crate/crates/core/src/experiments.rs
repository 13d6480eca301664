// SPDX-License-Identifier: MIT OR Apache-2.0
//! Replicated coverage runs and runtime benchmarks.
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::PiecewiseConfig;
use crate::pipeline::{self, DetectionReport, PipelineConfig};
use crate::rng;
use crate::rwdist::{self, LDistTable, NoiseSpec};
use crate::segmentation;
use crate::synth::{self, NoiseModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Even spacing, levels `0, snr, 0, ..`.
    Even,
    /// Random spacing and level chain with minimum jump `snr`.
    Random,
}

impl Layout {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "even" => Ok(Self::Even),
            "random" => Ok(Self::Random),
            _ => invalid(format!("unknown layout {s:?}")),
        }
    }
}

/// Ground truth for `n`, `j` under `layout`.
pub fn make_config(n: usize, j: usize, snr: f64, layout: Layout, seed: u64) -> Result<PiecewiseConfig> {
    match layout {
        Layout::Even => synth::even_config(n, j, snr),
        Layout::Random if j == 0 => PiecewiseConfig::new(n, vec![], vec![0.0]),
        Layout::Random => synth::gen_config(n, j, snr, (n as f64 / (1.5 * j as f64)).floor() as usize, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSettings {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub reps: u64,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for TableSettings {
    fn default() -> Self {
        Self { lo: 0.5, hi: 5.0, step: 0.1, reps: 1_000_000, seed: 1, tolerance: 1e-5 }
    }
}

impl TableSettings {
    pub fn build(&self, noise: &NoiseSpec) -> Result<LDistTable> {
        let grid = rwdist::snr_grid(self.lo, self.hi, self.step)?;
        LDistTable::build(&grid, &[], self.reps, self.seed, noise, self.tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageConfig {
    pub n: usize,
    pub j: usize,
    pub snr: f64,
    pub layout: Layout,
    pub noise: String,
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub table: TableSettings,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            n: 1_000_000,
            j: 11,
            snr: 1.0,
            layout: Layout::Even,
            noise: "iid".into(),
            seed: 1,
            pipeline: PipelineConfig::default(),
            table: TableSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub nominal: f64,
    /// Fraction of replicates with the right count and every change point covered.
    pub simultaneous: f64,
    /// Mean fraction of true change points covered by their matched interval.
    pub per_cp: f64,
    pub j_correct: f64,
    pub reps: usize,
}

/// Whether every true change point lies in its interval, and how many do.
pub fn covered(report: &DetectionReport, truth: &PiecewiseConfig) -> (bool, usize) {
    let mut hits = 0;
    for &t in &truth.taus {
        let near = report.estimates.iter().min_by_key(|e| e.tau.abs_diff(t));
        if near.is_some_and(|e| e.ci_lo <= t && t <= e.ci_hi) {
            hits += 1;
        }
    }
    let all = report.j_hat == truth.j() && report.estimates.iter().zip(&truth.taus).all(|(e, &t)| e.ci_lo <= t && t <= e.ci_hi);
    (all, hits)
}

/// Replicated detection at each nominal simultaneous level.
pub fn run_coverage(cfg: &CoverageConfig, reps: usize, nominals: &[f64], table: &LDistTable) -> Result<Vec<CoverageRow>> {
    if nominals.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return invalid("nominal levels must lie in (0, 1)");
    }
    let model = NoiseModel::parse(&cfg.noise)?;
    let mut simul = vec![0usize; nominals.len()];
    let mut per = vec![0usize; nominals.len()];
    let mut jok = 0;
    for r in 0..reps {
        let seed = rng::child_seed(cfg.seed, rng::REPLICATE, r as u64);
        let truth = make_config(cfg.n, cfg.j, cfg.snr, cfg.layout, seed)?;
        let y = synth::gen_series(&truth, model, 1.0, seed)?;
        for (k, &nom) in nominals.iter().enumerate() {
            let pc = PipelineConfig { alpha: 1.0 - nom, seed, ..cfg.pipeline.clone() };
            let rep = pipeline::detect(&y, &pc, table)?;
            if k == 0 && rep.j_hat == truth.j() {
                jok += 1;
            }
            let (all, hits) = covered(&rep, &truth);
            simul[k] += all as usize;
            per[k] += hits;
        }
    }
    let rf = reps.max(1) as f64;
    Ok(nominals
        .iter()
        .enumerate()
        .map(|(k, &nominal)| CoverageRow {
            nominal,
            simultaneous: simul[k] as f64 / rf,
            per_cp: per[k] as f64 / (rf * cfg.j.max(1) as f64),
            j_correct: jok as f64 / rf,
            reps,
        })
        .collect())
}

pub fn coverage_csv(rows: &[CoverageRow]) -> String {
    let mut s = String::from("nominal,simultaneous,per_cp,j_correct,reps\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.nominal, r.simultaneous, r.per_cp, r.j_correct, r.reps));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub j: usize,
    pub rep: usize,
    pub j_hat: usize,
    pub j_binseg: usize,
    pub touched_fraction: f64,
    pub detect_ms: f64,
    pub binseg_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub slope_detect: f64,
    pub slope_binseg: f64,
    /// Median full-data binseg time over median detect time at the largest N.
    pub speedup_at_max: f64,
}

/// Columns of [`bench_csv`] holding wall-clock times.
pub const BENCH_TIMING_COLUMNS: [&str; 2] = ["detect_ms", "binseg_ms"];

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("n,j,rep,j_hat,j_binseg,touched_fraction,detect_ms,binseg_ms\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{:.4},{:.4}\n",
            r.n, r.j, r.rep, r.j_hat, r.j_binseg, r.touched_fraction, r.detect_ms, r.binseg_ms
        ));
    }
    s
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Runtime of detect against full-data binary segmentation with
/// `J = round(log10(N)^2)` random change points and unit noise.
pub fn run_bench(
    grid: &[usize],
    reps: usize,
    seed: u64,
    config: &PipelineConfig,
    table: &LDistTable,
) -> Result<(Vec<BenchRow>, BenchSummary)> {
    if grid.len() < 2 || reps == 0 {
        return invalid("bench needs at least two sizes and one replicate");
    }
    let mut rows = Vec::new();
    let mut med_d = Vec::new();
    let mut med_b = Vec::new();
    for (gi, &n) in grid.iter().enumerate() {
        let j = ((n as f64).log10().powi(2)).round() as usize;
        let (mut td, mut tb) = (Vec::new(), Vec::new());
        for rep in 0..reps {
            let s = rng::child_seed(seed, rng::BENCH, (gi * reps + rep) as u64);
            let truth = make_config(n, j, 1.0, Layout::Random, s)?;
            let y = synth::gen_series(&truth, NoiseModel::Iid, 1.0, s)?;
            let pc = PipelineConfig { seed: s, ..config.clone() };
            let t0 = Instant::now();
            let report = pipeline::detect(&y, &pc, table)?;
            let detect_ms = t0.elapsed().as_secs_f64() * 1e3;
            let sigma = pipeline::sigma_from_sample(y.values(), 1, &NoiseSpec::iid()).unwrap_or(1.0);
            let zeta = (n as f64).powf(0.2) * sigma;
            let t1 = Instant::now();
            let full = segmentation::binseg(y.values(), zeta);
            let binseg_ms = t1.elapsed().as_secs_f64() * 1e3;
            td.push(detect_ms);
            tb.push(binseg_ms);
            rows.push(BenchRow {
                n,
                j,
                rep,
                j_hat: report.j_hat,
                j_binseg: full.len(),
                touched_fraction: report.touched_fraction,
                detect_ms,
                binseg_ms,
            });
        }
        med_d.push(median(td));
        med_b.push(median(tb));
    }
    let xs: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    let summary = BenchSummary {
        slope_detect: loglog_slope(&xs, &med_d),
        slope_binseg: loglog_slope(&xs, &med_b),
        speedup_at_max: med_b[med_b.len() - 1] / med_d[med_d.len() - 1],
    };
    Ok((rows, summary))
}

/// Seven sizes log-evenly spaced from `10^5` to `10^7`.
pub fn standard_grid() -> Vec<usize> {
    (0..7).map(|k| 10f64.powf(5.0 + k as f64 / 3.0).round() as usize).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1e3, 1e4, 1e5];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.5)).collect();
        assert!((loglog_slope(&x, &y) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn layouts() {
        let c = make_config(1000, 3, 2.0, Layout::Even, 0).unwrap();
        assert_eq!(c.taus, vec![250, 500, 750]);
        assert_eq!(c.levels, vec![0.0, 2.0, 0.0, 2.0]);
        let r = make_config(100_000, 9, 1.0, Layout::Random, 4).unwrap();
        assert!(r.min_jump() >= 1.0 - 1e-12);
        assert!(r.min_spacing() >= 100_000 * 2 / 27);
    }
}
