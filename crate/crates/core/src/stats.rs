//! Sampled equi-width histograms and the selectivity estimates derived from them.
//!
//! Sampling is fixed-stride: with `stride = ceil(1 / sample_rate)` the sampled
//! rows are `offset, offset + stride, ...` where `offset = seed % stride`.
//! With seed 0 this samples exactly `ceil(total_rows / stride)` rows.
//!
//! The distinct-count estimate scales the sampled distinct count `d` by the
//! singleton correction `d + f1 * (N / n - 1)`, where `f1` is the number of
//! values seen exactly once in the `n` non-null sampled rows and `N` the
//! non-null row estimate. The result is clamped to `[d, N]`.

use std::collections::HashMap;
use std::ops::Bound;

use thiserror::Error;

use crate::columnar::framing::{put_f64, put_str, put_u32, put_u64, PayloadReader};
use crate::columnar::{ColumnData, ColumnarError, DataType, Table};

pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_SAMPLE_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("column `{column}` of type {data_type} has no histogram")]
    UnsupportedColumnType { column: String, data_type: DataType },
    #[error("no column `{0}`")]
    UnknownColumn(String),
    #[error("invalid histogram parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub column: String,
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Sampled rows, nulls included.
    pub sampled_rows: u64,
    pub sampled_nulls: u64,
    pub total_rows: u64,
    pub null_fraction: f64,
    pub distinct_estimate: f64,
    pub sample_rate: f64,
}

pub fn sample_stride(sample_rate: f64) -> usize {
    ((1.0 / sample_rate).ceil() as usize).max(1)
}

pub fn build_histogram(table: &Table, column: &str, sample_rate: f64, bins: usize) -> Result<Histogram, StatsError> {
    build_histogram_seeded(table, column, sample_rate, bins, 0)
}

pub fn build_histogram_seeded(
    table: &Table,
    column: &str,
    sample_rate: f64,
    bins: usize,
    seed: u64,
) -> Result<Histogram, StatsError> {
    if !(sample_rate > 0.0 && sample_rate <= 1.0) {
        return Err(StatsError::InvalidParameters(format!("sample rate {sample_rate}")));
    }
    if bins == 0 {
        return Err(StatsError::InvalidParameters("zero bins".into()));
    }
    let idx = table
        .schema()
        .index_of(column)
        .ok_or_else(|| StatsError::UnknownColumn(column.to_string()))?;
    let data_type = table.schema().field(idx).data_type;
    if !data_type.is_numeric() {
        return Err(StatsError::UnsupportedColumnType {
            column: column.to_string(),
            data_type,
        });
    }

    let stride = sample_stride(sample_rate);
    let mut next = (seed % stride as u64) as usize;
    let mut base = 0usize;
    let mut sample: Vec<f64> = Vec::new();
    let mut sampled_rows = 0u64;
    let mut sampled_nulls = 0u64;
    for batch in table.batches() {
        let col = batch.column(idx);
        let n = batch.num_rows();
        while next < base + n {
            let i = next - base;
            sampled_rows += 1;
            if col.is_valid(i) {
                sample.push(match col.data() {
                    ColumnData::Int32(v) => v[i] as f64,
                    ColumnData::Int64(v) => v[i] as f64,
                    ColumnData::Float64(v) => v[i],
                    _ => unreachable!("numeric column"),
                });
            } else {
                sampled_nulls += 1;
            }
            next += stride;
        }
        base += n;
    }
    Ok(from_sample(
        column,
        &sample,
        sampled_rows,
        sampled_nulls,
        table.num_rows() as u64,
        bins,
        sample_rate,
    ))
}

fn from_sample(
    column: &str,
    sample: &[f64],
    sampled_rows: u64,
    sampled_nulls: u64,
    total_rows: u64,
    bins: usize,
    sample_rate: f64,
) -> Histogram {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in sample.iter().filter(|v| !v.is_nan()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        lo = 0.0;
        hi = 0.0;
    }
    let mut counts = vec![0u64; bins];
    let mut freq: HashMap<u64, u64> = HashMap::new();
    for &v in sample {
        if v.is_nan() {
            continue;
        }
        counts[bin_of(v, lo, hi, bins)] += 1;
        *freq.entry(v.to_bits()).or_default() += 1;
    }
    let null_fraction = if sampled_rows == 0 {
        0.0
    } else {
        sampled_nulls as f64 / sampled_rows as f64
    };
    let n = sample.len() as f64;
    let d = freq.len() as f64;
    let f1 = freq.values().filter(|&&c| c == 1).count() as f64;
    let non_null_total = total_rows as f64 * (1.0 - null_fraction);
    let distinct_estimate = if n == 0.0 {
        0.0
    } else {
        (d + f1 * (non_null_total / n - 1.0)).clamp(d, non_null_total.max(d))
    };
    Histogram {
        column: column.to_string(),
        bins,
        lo,
        hi,
        counts,
        sampled_rows,
        sampled_nulls,
        total_rows,
        null_fraction,
        distinct_estimate,
        sample_rate,
    }
}

fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let b = ((v - lo) / (hi - lo) * bins as f64).floor();
    (b.max(0.0) as usize).min(bins - 1)
}

impl Histogram {
    /// Exact histogram of `0..total_rows`, used for the virtual row id.
    pub fn uniform_rowid(total_rows: u64, bins: usize) -> Histogram {
        let bins = bins.max(1);
        let hi = total_rows.saturating_sub(1) as f64;
        let mut counts = vec![0u64; bins];
        if total_rows > 0 {
            for i in 0..total_rows {
                counts[bin_of(i as f64, 0.0, hi, bins)] += 1;
            }
        }
        Histogram {
            column: crate::planir::ROWID.to_string(),
            bins,
            lo: 0.0,
            hi,
            counts,
            sampled_rows: total_rows,
            sampled_nulls: 0,
            total_rows,
            null_fraction: 0.0,
            distinct_estimate: total_rows as f64,
            sample_rate: 1.0,
        }
    }

    pub fn non_null_sampled(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Estimated fraction of rows in the given range. Partially covered bins
/// contribute in proportion to the covered width.
pub fn estimate_range_selectivity(h: &Histogram, lo: Bound<f64>, hi: Bound<f64>) -> f64 {
    let total = h.non_null_sampled();
    if total == 0 {
        return 0.0;
    }
    let non_null = 1.0 - h.null_fraction;
    let contains = |v: f64| {
        let above = match lo {
            Bound::Unbounded => true,
            Bound::Included(l) => v >= l,
            Bound::Excluded(l) => v > l,
        };
        let below = match hi {
            Bound::Unbounded => true,
            Bound::Included(u) => v <= u,
            Bound::Excluded(u) => v < u,
        };
        above && below
    };
    if h.hi <= h.lo {
        return if contains(h.lo) { non_null } else { 0.0 };
    }
    let l = match lo {
        Bound::Unbounded => f64::NEG_INFINITY,
        Bound::Included(v) | Bound::Excluded(v) => v,
    };
    let u = match hi {
        Bound::Unbounded => f64::INFINITY,
        Bound::Included(v) | Bound::Excluded(v) => v,
    };
    if l.is_nan() || u.is_nan() || l > u {
        return 0.0;
    }
    let width = (h.hi - h.lo) / h.bins as f64;
    let mut covered = 0.0;
    for (b, &c) in h.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let a = h.lo + b as f64 * width;
        let z = if b + 1 == h.bins { h.hi } else { a + width };
        let overlap = (z.min(u) - a.max(l)).max(0.0);
        covered += (overlap / width).min(1.0) * c as f64;
    }
    (covered / total as f64 * non_null).clamp(0.0, 1.0)
}

/// Estimated fraction of rows equal to `v`.
pub fn estimate_equality_selectivity(h: &Histogram, v: f64) -> f64 {
    if h.non_null_sampled() == 0 || v < h.lo || v > h.hi || h.distinct_estimate <= 0.0 {
        return 0.0;
    }
    ((1.0 - h.null_fraction) / h.distinct_estimate).clamp(0.0, 1.0)
}

/// Independence assumption: the product of the parts.
pub fn estimate_conjunction(selectivities: &[f64]) -> f64 {
    selectivities.iter().product()
}

/// Histograms, row count and per-column logical sizes for one stored object.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableStats {
    pub total_rows: u64,
    pub histograms: Vec<Histogram>,
    /// Exact logical bytes per column, in schema order.
    pub column_bytes: Vec<(String, u64)>,
}

impl TableStats {
    /// Histograms for every numeric scalar column.
    pub fn build(table: &Table, sample_rate: f64, bins: usize) -> Result<TableStats, StatsError> {
        let mut histograms = Vec::new();
        for f in table.schema().fields() {
            if f.data_type.is_numeric() {
                histograms.push(build_histogram(table, &f.name, sample_rate, bins)?);
            }
        }
        let column_bytes = table
            .schema()
            .fields()
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let bytes = table.batches().iter().map(|b| b.column(i).logical_bytes()).sum();
                (f.name.clone(), bytes)
            })
            .collect();
        Ok(TableStats {
            total_rows: table.num_rows() as u64,
            histograms,
            column_bytes,
        })
    }

    pub fn get(&self, column: &str) -> Option<&Histogram> {
        self.histograms.iter().find(|h| h.column == column)
    }

    /// Histogram for `column`, synthesizing the exact one for the row id.
    pub fn histogram(&self, column: &str) -> Option<Histogram> {
        match self.get(column) {
            Some(h) => Some(h.clone()),
            None if column == crate::planir::ROWID => Some(Histogram::uniform_rowid(self.total_rows, DEFAULT_BINS)),
            None => None,
        }
    }

    /// Average logical bytes per row of `column`, when known.
    pub fn avg_width(&self, column: &str) -> Option<f64> {
        if self.total_rows == 0 {
            return None;
        }
        self.column_bytes
            .iter()
            .find(|(c, _)| c == column)
            .map(|(_, b)| *b as f64 / self.total_rows as f64)
    }

    pub fn logical_bytes(&self) -> u64 {
        self.column_bytes.iter().map(|(_, b)| b).sum()
    }
}

pub(crate) fn encode_histogram(h: &Histogram, buf: &mut Vec<u8>) {
    put_str(buf, &h.column);
    put_u32(buf, h.bins as u32);
    put_f64(buf, h.lo);
    put_f64(buf, h.hi);
    for &c in &h.counts {
        put_u64(buf, c);
    }
    put_u64(buf, h.sampled_rows);
    put_u64(buf, h.sampled_nulls);
    put_u64(buf, h.total_rows);
    put_f64(buf, h.null_fraction);
    put_f64(buf, h.distinct_estimate);
    put_f64(buf, h.sample_rate);
}

pub(crate) fn decode_histogram(r: &mut PayloadReader<'_>) -> Result<Histogram, ColumnarError> {
    let column = r.string()?;
    let bins = r.u32()? as usize;
    if bins == 0 {
        return Err(ColumnarError::CorruptFrame("histogram with zero bins".into()));
    }
    let lo = r.f64()?;
    let hi = r.f64()?;
    let mut counts = Vec::with_capacity(bins.min(1 << 16));
    for _ in 0..bins {
        counts.push(r.u64()?);
    }
    Ok(Histogram {
        column,
        bins,
        lo,
        hi,
        counts,
        sampled_rows: r.u64()?,
        sampled_nulls: r.u64()?,
        total_rows: r.u64()?,
        null_fraction: r.f64()?,
        distinct_estimate: r.f64()?,
        sample_rate: r.f64()?,
    })
}
