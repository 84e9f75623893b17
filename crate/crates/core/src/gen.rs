//! Deterministic synthetic datasets shaped like the science workloads, and
//! the query corpus that runs against them.
//!
//! Every generator places exactly `round(selectivity * rows)` "interesting"
//! rows at positions drawn without replacement, so the fraction matched by
//! the corresponding query is exact rather than expected.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::columnar::{ColumnBatch, ColumnBuilder, DataType, Field, Schema, Table};

pub const Q1: &str = "SELECT min(vertex_id) AS VID, min(x) AS X, min(y) AS Y, min(z) AS Z, avg(e) AS E FROM parquet \
WHERE x > 1.5 AND x < 1.6 AND y > 1.5 AND y < 1.6 AND z > 1.5 AND z < 1.6 GROUP BY vertex_id ORDER BY E;";

pub const Q2: &str = "SELECT rowid, v03 FROM parquet WHERE v03 > 0.001 AND v03 < 0.999;";

pub const Q3: &str = "SELECT MAX((rowid % (500 * 500)) / 500) AS height, TIMESTEP FROM parquet \
WHERE v02 > 0.1 GROUP BY timestep;";

pub const Q4: &str = "SELECT MET_pt, sqrt( 2 * Muon_pt[1] * Muon_pt[2] * (cosh(Muon_eta[1] - Muon_eta[2]) - cos(Muon_phi[1] - Muon_phi[2]))) \
AS Dimuon_mass FROM parquet WHERE nMuon = 2 AND Muon_charge[1] != Muon_charge[2] \
AND sqrt( 2 * Muon_pt[1] * Muon_pt[2] * (cosh(Muon_eta[1] - Muon_eta[2]) - cos(Muon_phi[1] - Muon_phi[2])) ) BETWEEN 60 AND 120;";

/// Q1 without the aggregate: every in-box row travels, sorted by energy.
pub const Q1_NO_AGG: &str = "SELECT vertex_id, x, y, z, e FROM parquet \
WHERE x > 1.5 AND x < 1.6 AND y > 1.5 AND y < 1.6 AND z > 1.5 AND z < 1.6 ORDER BY e;";

pub const DEFAULT_SELECTIVITY: f64 = 1e-4;

/// Cells per timestep in the deep-water grid (500 x 500).
pub const DEEPWATER_CELLS: u64 = 250_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dataset {
    LaghosBox,
    DeepwaterThreshold,
    HepDimuon,
}

impl Dataset {
    pub const ALL: [Dataset; 3] = [Dataset::LaghosBox, Dataset::DeepwaterThreshold, Dataset::HepDimuon];

    pub fn name(self) -> &'static str {
        match self {
            Dataset::LaghosBox => "laghos-box",
            Dataset::DeepwaterThreshold => "deepwater-threshold",
            Dataset::HepDimuon => "hep-dimuon",
        }
    }

    pub fn schema(self) -> Schema {
        let f = |n: &str, t| Field::new(n, t, false);
        let fields = match self {
            Dataset::LaghosBox => vec![
                f("vertex_id", DataType::Int32),
                f("x", DataType::Float64),
                f("y", DataType::Float64),
                f("z", DataType::Float64),
                f("e", DataType::Float64),
            ],
            Dataset::DeepwaterThreshold => vec![
                f("timestep", DataType::Int64),
                f("v02", DataType::Float64),
                f("v03", DataType::Float64),
                f("prs", DataType::Float64),
                f("tev", DataType::Float64),
            ],
            Dataset::HepDimuon => vec![
                f("MET_pt", DataType::Float64),
                f("nMuon", DataType::Int32),
                f("Muon_pt", DataType::ListFloat64),
                f("Muon_eta", DataType::ListFloat64),
                f("Muon_phi", DataType::ListFloat64),
                f("Muon_charge", DataType::ListInt32),
            ],
        };
        Schema::new(fields).expect("static schema")
    }

    /// The corpus query written against this dataset.
    pub fn query(self) -> &'static str {
        match self {
            Dataset::LaghosBox => Q1,
            Dataset::DeepwaterThreshold => Q2,
            Dataset::HepDimuon => Q4,
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Dataset::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown dataset `{s}` (expected laghos-box, deepwater-threshold or hep-dimuon)"))
    }
}

/// The four corpus queries with the dataset each one reads.
pub fn corpus() -> [(&'static str, &'static str, Dataset); 4] {
    [
        ("Q1", Q1, Dataset::LaghosBox),
        ("Q2", Q2, Dataset::DeepwaterThreshold),
        ("Q3", Q3, Dataset::DeepwaterThreshold),
        ("Q4", Q4, Dataset::HepDimuon),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenOptions {
    pub rows: usize,
    pub seed: u64,
    /// Fraction of rows the dataset's selective predicate keeps.
    pub selectivity: f64,
    pub batch_rows: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            rows: 100_000,
            seed: 42,
            selectivity: DEFAULT_SELECTIVITY,
            batch_rows: 65_536,
        }
    }
}

impl GenOptions {
    pub fn new(rows: usize, seed: u64) -> Self {
        GenOptions {
            rows,
            seed,
            ..Default::default()
        }
    }

    pub fn with_selectivity(mut self, selectivity: f64) -> Self {
        self.selectivity = selectivity;
        self
    }

    /// Number of selected rows: `round(selectivity * rows)`.
    pub fn selected_rows(&self) -> usize {
        ((self.selectivity.clamp(0.0, 1.0) * self.rows as f64).round() as usize).min(self.rows)
    }
}

fn selected_mask(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> Vec<bool> {
    let mut mask = vec![false; rows];
    for i in sample(rng, rows, k) {
        mask[i] = true;
    }
    mask
}

pub fn generate(dataset: Dataset, opts: &GenOptions) -> Table {
    let schema = Arc::new(dataset.schema());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let rows = opts.rows;
    let mask = selected_mask(&mut rng, rows, opts.selected_rows());
    let batch_rows = opts.batch_rows.max(1);
    let mut batches = Vec::new();
    let mut start = 0;
    while start < rows {
        let n = batch_rows.min(rows - start);
        let mut b: Vec<ColumnBuilder> = schema
            .fields()
            .iter()
            .map(|f| ColumnBuilder::with_capacity(f.data_type, n))
            .collect();
        for (row, &selected) in mask.iter().enumerate().skip(start).take(n) {
            match dataset {
                Dataset::LaghosBox => laghos_row(&mut rng, row, selected, &mut b),
                Dataset::DeepwaterThreshold => deepwater_row(&mut rng, row, selected, &mut b),
                Dataset::HepDimuon => dimuon_row(&mut rng, selected, &mut b),
            }
        }
        let columns = b.into_iter().map(ColumnBuilder::finish).collect();
        batches.push(ColumnBatch::try_new(schema.clone(), columns).expect("generated columns match schema"));
        start += n;
    }
    Table::try_new(schema, batches).expect("generated batches match schema")
}

const BOX_LO: f64 = 1.5;
const BOX_HI: f64 = 1.6;
const LAGHOS_VERTICES: usize = 10_000;

fn in_box(v: f64) -> bool {
    v > BOX_LO && v < BOX_HI
}

fn laghos_row(rng: &mut ChaCha8Rng, row: usize, selected: bool, b: &mut [ColumnBuilder]) {
    let (x, y, z) = if selected {
        let mut inside = || loop {
            let v = rng.random_range(BOX_LO..BOX_HI);
            if in_box(v) {
                break v;
            }
        };
        (inside(), inside(), inside())
    } else {
        loop {
            let p: (f64, f64, f64) = (
                rng.random_range(0.0..3.0),
                rng.random_range(0.0..3.0),
                rng.random_range(0.0..3.0),
            );
            if !(in_box(p.0) && in_box(p.1) && in_box(p.2)) {
                break p;
            }
        }
    };
    b[0].push_i32((row % LAGHOS_VERTICES) as i32);
    b[1].push_f64(x);
    b[2].push_f64(y);
    b[3].push_f64(z);
    b[4].push_f64(rng.random_range(0.0..100.0));
}

fn deepwater_row(rng: &mut ChaCha8Rng, row: usize, selected: bool, b: &mut [ColumnBuilder]) {
    let cell = row as u64 % DEEPWATER_CELLS;
    let height = cell / 500;
    let (v02, v03) = if selected {
        (rng.random_range(0.1..1.0), rng.random_range(0.001..0.999))
    } else {
        // Pure water below the surface line, pure air above it.
        let v03 = if height < 250 { 1.0 } else { 0.0 };
        (rng.random_range(0.0..0.1), v03)
    };
    // Interior bounds on the ranges above are half-open, so only the exact
    // boundary values could escape the predicates; nudge them inside.
    let v02 = if selected && v02 <= 0.1 { 0.5 } else { v02 };
    let v03 = if selected && v03 <= 0.001 { 0.5 } else { v03 };
    b[0].push_i64((row as u64 / DEEPWATER_CELLS) as i64);
    b[1].push_f64(v02);
    b[2].push_f64(v03);
    b[3].push_f64(rng.random_range(0.5..2.0));
    b[4].push_f64(rng.random_range(0.0..1.0));
}

fn dimuon_row(rng: &mut ChaCha8Rng, selected: bool, b: &mut [ColumnBuilder]) {
    let met = rng.random_range(0.0..200.0);
    let (pt, eta, phi, charge) = if selected {
        let mass: f64 = rng.random_range(70.0..110.0);
        let eta: [f64; 2] = [rng.random_range(-2.4..2.4), rng.random_range(-2.4..2.4)];
        let mut phi: [f64; 2] = [rng.random_range(-PI..PI), rng.random_range(-PI..PI)];
        let mut angular = (eta[0] - eta[1]).cosh() - (phi[0] - phi[1]).cos();
        if angular < 0.05 {
            phi[1] = phi[0] + PI;
            angular = (eta[0] - eta[1]).cosh() + 1.0;
        }
        let pt1: f64 = rng.random_range(20.0..60.0);
        let pt2 = mass * mass / (2.0 * pt1 * angular);
        let q: i32 = if rng.random_bool(0.5) { 1 } else { -1 };
        (vec![pt1, pt2], eta.to_vec(), phi.to_vec(), vec![q, -q])
    } else {
        let n = rng.random_range(0..=4usize);
        let pt: Vec<f64> = (0..n).map(|_| rng.random_range(3.0..80.0)).collect();
        let eta: Vec<f64> = (0..n).map(|_| rng.random_range(-2.4..2.4)).collect();
        let phi: Vec<f64> = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
        // Two-muon background events are same-sign so they never pass.
        let first: i32 = if rng.random_bool(0.5) { 1 } else { -1 };
        let charge: Vec<i32> = (0..n)
            .map(|i| {
                if n == 2 || i == 0 || rng.random_bool(0.5) {
                    first
                } else {
                    -first
                }
            })
            .collect();
        (pt, eta, phi, charge)
    };
    b[0].push_f64(met);
    b[1].push_i32(pt.len() as i32);
    b[2].push_list_f64(&pt);
    b[3].push_list_f64(&eta);
    b[4].push_list_f64(&phi);
    b[5].push_list_i32(&charge);
}
