// SPDX-License-Identifier: MIT OR Apache-2.0
//! Domain types: observed series, piecewise-constant signal configurations,
//! strided subsample grids and the index maps they induce.
//!
//! All external indices are 1-based. A change point `tau` is the last index
//! carrying the left level.
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Observed values `Y_1..Y_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    values: Vec<f64>,
}

impl Series {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return invalid("series needs at least 2 values");
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value at index {}", p + 1)));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at 1-based index `i`.
    pub fn at(&self, i: usize) -> Result<f64> {
        if i == 0 || i > self.values.len() {
            return Err(Error::OutOfRange { index: i as i64, n: self.values.len() });
        }
        Ok(self.values[i - 1])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Change points `tau_1 < .. < tau_J` and levels `nu_0..nu_J` on `1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConfig {
    pub n: usize,
    pub taus: Vec<usize>,
    pub levels: Vec<f64>,
}

impl PiecewiseConfig {
    pub fn new(n: usize, taus: Vec<usize>, levels: Vec<f64>) -> Result<Self> {
        let c = Self { n, taus, levels };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return invalid("n must be at least 2");
        }
        if self.levels.len() != self.taus.len() + 1 {
            return invalid(format!(
                "expected {} levels for {} change points, got {}",
                self.taus.len() + 1,
                self.taus.len(),
                self.levels.len()
            ));
        }
        if self.levels.iter().any(|v| !v.is_finite()) {
            return invalid("levels must be finite");
        }
        let mut prev = 0;
        for &t in &self.taus {
            if t <= prev || t >= self.n {
                return invalid(format!("change points must be strictly increasing in [1, {}]", self.n - 1));
            }
            prev = t;
        }
        if self.levels.windows(2).any(|w| w[0] == w[1]) {
            return invalid("adjacent levels must differ");
        }
        Ok(())
    }

    pub fn j(&self) -> usize {
        self.taus.len()
    }

    /// Minimum spacing `delta_N` with `tau_0 = 0` and `tau_{J+1} = n`.
    pub fn min_spacing(&self) -> usize {
        let mut prev = 0;
        let mut best = usize::MAX;
        for &t in self.taus.iter().chain(std::iter::once(&self.n)) {
            best = best.min(t - prev);
            prev = t;
        }
        best
    }

    /// Smallest absolute jump, or infinity when there are no change points.
    pub fn min_jump(&self) -> f64 {
        self.levels.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min)
    }

    /// Bound on the level magnitudes.
    pub fn level_bound(&self) -> f64 {
        self.levels.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Segment number of index `i`.
    pub fn segment_of(&self, i: usize) -> usize {
        self.taus.partition_point(|&t| t < i)
    }

    pub fn signal_at(&self, i: usize) -> Result<f64> {
        if i == 0 || i > self.n {
            return Err(Error::OutOfRange { index: i as i64, n: self.n });
        }
        Ok(self.levels[self.segment_of(i)])
    }

    /// The noiseless signal `theta_1..theta_n`.
    pub fn signal(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        let mut prev = 0;
        for (j, &t) in self.taus.iter().chain(std::iter::once(&self.n)).enumerate() {
            out.extend(std::iter::repeat_n(self.levels[j], t - prev));
            prev = t;
        }
        out
    }
}

/// Indices `i` in `1..=n` with `i ≡ offset (mod stride)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleGrid {
    pub n: usize,
    pub stride: usize,
    pub offset: usize,
}

impl SubsampleGrid {
    pub fn new(n: usize, stride: usize, offset: usize) -> Result<Self> {
        if stride == 0 {
            return invalid("stride must be positive");
        }
        if offset >= stride {
            return invalid("offset must lie in [0, stride)");
        }
        Ok(Self { n, stride, offset })
    }

    /// The stage-1 grid `{g, 2g, ..}` with `g = floor(n / n1)`.
    pub fn stage1(n: usize, n1: usize) -> Result<Self> {
        if n1 == 0 || n1 > n {
            return invalid("n1 must lie in [1, n]");
        }
        Self::new(n, n / n1, 0)
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= 1 && i <= self.n && i % self.stride == self.offset
    }

    /// Number of grid members in `[1, x]`.
    pub fn grid_count(&self, x: usize) -> usize {
        let x = x.min(self.n) as i64;
        let g = self.stride as i64;
        let r = self.offset as i64;
        ((x - r).div_euclid(g) - (-r).div_euclid(g)) as usize
    }

    /// Number of members in `[1, n]`.
    pub fn len(&self) -> usize {
        self.grid_count(self.n)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of off-grid indices in `[1, x]`.
    pub fn off_count(&self, x: usize) -> usize {
        x.min(self.n) - self.grid_count(x)
    }

    fn check(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n {
            return Err(Error::OutOfRange { index: i as i64, n: self.n });
        }
        Ok(())
    }

    /// Signed count of off-grid indices between `a` and `b`.
    pub fn lambda2(&self, a: usize, b: usize) -> Result<i64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.off_count(b) as i64 - self.off_count(a) as i64)
    }

    /// Rank of off-grid index `k` among off-grid indices.
    pub fn pi2(&self, k: usize) -> Result<usize> {
        self.check(k)?;
        if self.contains(k) {
            return invalid(format!("index {k} lies on the grid"));
        }
        Ok(self.off_count(k))
    }

    /// Off-grid index of rank `r`.
    pub fn pi2_inv(&self, r: usize) -> Result<usize> {
        let total = self.off_count(self.n);
        if r == 0 || r > total {
            return invalid(format!("rank {r} outside [1, {total}]"));
        }
        let (mut lo, mut hi) = (1usize, self.n);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.off_count(mid) >= r {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(lo)
    }

    /// Grid members in `[lo, hi]`, ascending.
    pub fn members_in(&self, lo: usize, hi: usize) -> Vec<usize> {
        let hi = hi.min(self.n);
        if lo > hi {
            return Vec::new();
        }
        let first = lo + (self.offset + self.stride - lo % self.stride) % self.stride;
        let first = if first == 0 { self.stride } else { first };
        (first..=hi).step_by(self.stride).collect()
    }
}
