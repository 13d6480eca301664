// SPDX-License-Identifier: MIT OR Apache-2.0
//! Random-access sequence storage, read accounting and JSON helpers.
//!
//! Raw files are little-endian `f64` with no header; the length is the
//! file size over 8. CSV files hold one value per line and are loaded
//! whole.
use std::fs::File;
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::Series;

/// 1-based random access to `Y_1..Y_N`.
pub trait SequenceAccessor: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, i: usize) -> Result<f64> {
        Ok(self.read_window(i, i)?[0])
    }

    /// Values at `offset, offset + stride, ..` (`count` of them).
    fn read_strided(&self, offset: usize, stride: usize, count: usize) -> Result<Vec<f64>>;

    /// Values at `lo..=hi`.
    fn read_window(&self, lo: usize, hi: usize) -> Result<Vec<f64>>;

    /// Values at ascending `indices`, read as contiguous runs.
    fn read_indices(&self, indices: &[usize]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(indices.len());
        let mut k = 0;
        while k < indices.len() {
            let mut e = k;
            while e + 1 < indices.len() && indices[e + 1] == indices[e] + 1 {
                e += 1;
            }
            out.extend(self.read_window(indices[k], indices[e])?);
            k = e + 1;
        }
        Ok(out)
    }
}

fn check_strided(n: usize, offset: usize, stride: usize, count: usize) -> Result<()> {
    if stride == 0 {
        return invalid("stride must be positive");
    }
    if count == 0 {
        return Ok(());
    }
    let last = offset as u128 + (count as u128 - 1) * stride as u128;
    if offset == 0 || last > n as u128 {
        return Err(Error::OutOfRange { index: last.min(i64::MAX as u128) as i64, n });
    }
    Ok(())
}

fn check_window(n: usize, lo: usize, hi: usize) -> Result<()> {
    if lo == 0 || lo > n {
        return Err(Error::OutOfRange { index: lo as i64, n });
    }
    if hi < lo || hi > n {
        return Err(Error::OutOfRange { index: hi as i64, n });
    }
    Ok(())
}

impl SequenceAccessor for Series {
    fn len(&self) -> usize {
        self.values().len()
    }

    fn read_strided(&self, offset: usize, stride: usize, count: usize) -> Result<Vec<f64>> {
        check_strided(self.len(), offset, stride, count)?;
        let v = self.values();
        Ok((0..count).map(|k| v[offset - 1 + k * stride]).collect())
    }

    fn read_window(&self, lo: usize, hi: usize) -> Result<Vec<f64>> {
        check_window(self.len(), lo, hi)?;
        Ok(self.values()[lo - 1..hi].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    RawF64Le,
    Csv,
}

#[derive(Debug)]
enum Backing {
    Raw(File),
    Mem(Vec<f64>),
}

/// File-backed sequence with byte and element counters.
#[derive(Debug)]
pub struct SequenceFile {
    path: PathBuf,
    encoding: Encoding,
    n: usize,
    backing: Backing,
    bytes_read: AtomicU64,
    elements_read: AtomicU64,
}

/// Strides up to this many elements are served by one block read.
const BLOCK_STRIDE: usize = 4;

impl SequenceFile {
    /// Opens `path`; a `.csv` extension selects CSV, anything else raw.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if csv {
            Self::open_csv(path)
        } else {
            Self::open_raw(path)
        }
    }

    pub fn open_raw(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        let size = file.metadata()?.len();
        if size % 8 != 0 {
            return Err(Error::Format(format!("{}: size {size} is not a multiple of 8", path.display())));
        }
        let n = (size / 8) as usize;
        if n < 2 {
            return Err(Error::Format(format!("{}: fewer than 2 values", path.display())));
        }
        Ok(Self {
            path: path.to_path_buf(),
            encoding: Encoding::RawF64Le,
            n,
            backing: Backing::Raw(file),
            bytes_read: AtomicU64::new(0),
            elements_read: AtomicU64::new(0),
        })
    }

    pub fn open_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let values = parse_csv(&text)?;
        let n = Series::new(values.clone())?.len();
        Ok(Self {
            path: path.to_path_buf(),
            encoding: Encoding::Csv,
            n,
            backing: Backing::Mem(values),
            bytes_read: AtomicU64::new(0),
            elements_read: AtomicU64::new(0),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    /// Payload bytes read so far (raw encoding only).
    pub fn bytes_read(&self) -> u64 {
        self.bytes_read.load(Ordering::Relaxed)
    }

    /// Elements materialized so far.
    pub fn elements_read(&self) -> u64 {
        self.elements_read.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.bytes_read.store(0, Ordering::Relaxed);
        self.elements_read.store(0, Ordering::Relaxed);
    }

    /// Whole sequence in one read.
    pub fn read_all(&self) -> Result<Vec<f64>> {
        self.read_window(1, self.n)
    }

    fn raw_range(&self, file: &File, lo: usize, hi: usize) -> Result<Vec<f64>> {
        let len = hi - lo + 1;
        let mut buf = vec![0u8; len * 8];
        file.read_exact_at(&mut buf, (lo as u64 - 1) * 8)?;
        self.bytes_read.fetch_add(buf.len() as u64, Ordering::Relaxed);
        decode(&buf, lo)
    }
}

fn decode(buf: &[u8], first: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(buf.len() / 8);
    for (k, c) in buf.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        if !v.is_finite() {
            return Err(Error::Format(format!("non-finite value at index {}", first + k)));
        }
        out.push(v);
    }
    Ok(out)
}

impl SequenceAccessor for SequenceFile {
    fn len(&self) -> usize {
        self.n
    }

    fn read_strided(&self, offset: usize, stride: usize, count: usize) -> Result<Vec<f64>> {
        check_strided(self.n, offset, stride, count)?;
        if count == 0 {
            return Ok(Vec::new());
        }
        self.elements_read.fetch_add(count as u64, Ordering::Relaxed);
        match &self.backing {
            Backing::Mem(v) => Ok((0..count).map(|k| v[offset - 1 + k * stride]).collect()),
            Backing::Raw(f) if stride <= BLOCK_STRIDE => {
                let block = self.raw_range(f, offset, offset + (count - 1) * stride)?;
                Ok(block.into_iter().step_by(stride).collect())
            }
            Backing::Raw(f) => {
                let mut out = Vec::with_capacity(count);
                let mut buf = [0u8; 8];
                for k in 0..count {
                    let i = offset + k * stride;
                    f.read_exact_at(&mut buf, (i as u64 - 1) * 8)?;
                    out.extend(decode(&buf, i)?);
                }
                self.bytes_read.fetch_add(8 * count as u64, Ordering::Relaxed);
                Ok(out)
            }
        }
    }

    fn read_window(&self, lo: usize, hi: usize) -> Result<Vec<f64>> {
        check_window(self.n, lo, hi)?;
        self.elements_read.fetch_add((hi - lo + 1) as u64, Ordering::Relaxed);
        match &self.backing {
            Backing::Mem(v) => Ok(v[lo - 1..hi].to_vec()),
            Backing::Raw(f) => self.raw_range(f, lo, hi),
        }
    }
}

fn parse_csv(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let cell = line.split(',').next().unwrap_or("").trim();
        if cell.is_empty() || cell.starts_with('#') {
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            // a non-numeric first line is a header
            Err(_) if out.is_empty() && ln == 0 => {}
            _ => return Err(Error::Format(format!("line {}: cannot parse {cell:?} as a finite number", ln + 1))),
        }
    }
    Ok(out)
}

/// Writes `values` as raw little-endian `f64`.
pub fn write_raw(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one value per line.
pub fn write_csv(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        writeln!(w, "{v:?}")?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Records every distinct index read through it.
pub struct Tracked<'a, A: ?Sized> {
    inner: &'a A,
    bits: Vec<AtomicU64>,
    reads: AtomicU64,
}

impl<'a, A: SequenceAccessor + ?Sized> Tracked<'a, A> {
    pub fn new(inner: &'a A) -> Self {
        let words = inner.len().div_ceil(64);
        Self { inner, bits: (0..words).map(|_| AtomicU64::new(0)).collect(), reads: AtomicU64::new(0) }
    }

    fn mark(&self, i: usize) {
        let k = i - 1;
        self.bits[k / 64].fetch_or(1 << (k % 64), Ordering::Relaxed);
    }

    fn mark_range(&self, lo: usize, hi: usize) {
        let (a, b) = (lo - 1, hi);
        let mut k = a;
        while k < b {
            let w = k / 64;
            let end = ((w + 1) * 64).min(b);
            let width = end - k;
            let mask = if width == 64 { u64::MAX } else { ((1u64 << width) - 1) << (k % 64) };
            self.bits[w].fetch_or(mask, Ordering::Relaxed);
            k = end;
        }
    }

    pub fn is_touched(&self, i: usize) -> bool {
        i >= 1 && i <= self.inner.len() && self.bits[(i - 1) / 64].load(Ordering::Relaxed) >> ((i - 1) % 64) & 1 == 1
    }

    /// Distinct indices read.
    pub fn touched(&self) -> usize {
        self.bits.iter().map(|w| w.load(Ordering::Relaxed).count_ones() as usize).sum()
    }

    /// Total element reads, repeats included.
    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }
}

impl<A: SequenceAccessor + ?Sized> SequenceAccessor for Tracked<'_, A> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn read_strided(&self, offset: usize, stride: usize, count: usize) -> Result<Vec<f64>> {
        let out = self.inner.read_strided(offset, stride, count)?;
        for k in 0..count {
            self.mark(offset + k * stride);
        }
        self.reads.fetch_add(count as u64, Ordering::Relaxed);
        Ok(out)
    }

    fn read_window(&self, lo: usize, hi: usize) -> Result<Vec<f64>> {
        let out = self.inner.read_window(lo, hi)?;
        self.mark_range(lo, hi);
        self.reads.fetch_add((hi - lo + 1) as u64, Ordering::Relaxed);
        Ok(out)
    }
}
