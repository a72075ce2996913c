//! Dataset ingestion, cleaning, normalization, splitting and subsampling,
//! plus a synthetic heteroscedastic generator standing in for real vessel
//! telemetry.
//!
//! The pipeline is `clean -> normalize -> split -> (per-network) subsample`.
//! Inputs are min-max mapped to [0,1]; the target is scaled by its observed
//! maximum only, so relative-error percentages are identical on the raw and
//! normalized scales and the post-cleaning lower bound stays away from zero.

mod csv_io;
mod synthetic;

pub use csv_io::{load_csv, write_csv, ColumnMap, LoadReport};
pub use synthetic::{generate_synthetic, SpeedMixture, SyntheticConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;
use rand::Rng;

/// Air-lubrication system state a record was captured under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemStatus {
    On,
    Off,
}

impl std::fmt::Display for SystemStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SystemStatus::On => write!(f, "on"),
            SystemStatus::Off => write!(f, "off"),
        }
    }
}

/// One telemetry sample. Inputs are physical units; `shaft_power` is the
/// normalized regression target. Missing values are represented as NaN and
/// removed by [`clean`].
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub speed_through_water: f64,
    pub relative_wind_speed: f64,
    pub relative_wind_direction: f64,
    pub draught: f64,
    pub trim: f64,
    pub shaft_power: f64,
    pub system_status: SystemStatus,
}

/// Input variable names, in the fixed order used by every matrix view.
pub const INPUT_NAMES: [&str; 5] = [
    "speed_through_water",
    "relative_wind_speed",
    "relative_wind_direction",
    "draught",
    "trim",
];

/// Regression target name.
pub const TARGET_NAME: &str = "shaft_power";

/// Number of input variables.
pub const INPUT_DIM: usize = INPUT_NAMES.len();

impl Record {
    /// Input value by variable index (order of [`INPUT_NAMES`]).
    pub fn input(&self, var: usize) -> f64 {
        match var {
            0 => self.speed_through_water,
            1 => self.relative_wind_speed,
            2 => self.relative_wind_direction,
            3 => self.draught,
            4 => self.trim,
            _ => panic!("input variable index {var} out of range"),
        }
    }

    fn set_input(&mut self, var: usize, value: f64) {
        match var {
            0 => self.speed_through_water = value,
            1 => self.relative_wind_speed = value,
            2 => self.relative_wind_direction = value,
            3 => self.draught = value,
            4 => self.trim = value,
            _ => panic!("input variable index {var} out of range"),
        }
    }

    fn all_finite(&self) -> bool {
        (0..INPUT_DIM).all(|v| self.input(v).is_finite()) && self.shaft_power.is_finite()
    }
}

/// Minimum normalized shaft power retained after cleaning.
pub const MIN_SHAFT_POWER: f64 = 0.05;

/// Drops records with missing (non-finite) or non-physical values, and all
/// records below 0.05 normalized shaft power. Order is preserved.
///
/// Non-physical bounds: speed in (0, 35] knots, wind speed >= 0 m/s, wind
/// direction in [0, 360), draught > 0 m, shaft power in [0, 1].
pub fn clean(records: &[Record]) -> Result<Vec<Record>> {
    let kept: Vec<Record> = records
        .iter()
        .filter(|r| {
            r.all_finite()
                && r.speed_through_water > 0.0
                && r.speed_through_water <= 35.0
                && r.relative_wind_speed >= 0.0
                && (0.0..360.0).contains(&r.relative_wind_direction)
                && r.draught > 0.0
                && (0.0..=1.0).contains(&r.shaft_power)
                && r.shaft_power >= MIN_SHAFT_POWER
        })
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::data("no records survived cleaning"));
    }
    Ok(kept)
}

/// How one field was rescaled; enough to invert the mapping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldScale {
    pub name: String,
    pub min: f64,
    pub max: f64,
    /// Constant fields are mapped to 0.5 and flagged.
    pub constant: bool,
}

impl FieldScale {
    fn fit(name: &str, values: impl Iterator<Item = f64>) -> FieldScale {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        FieldScale {
            name: name.to_string(),
            min: lo,
            max: hi,
            constant: lo == hi,
        }
    }

    /// Min-max map to [0,1]; constant fields go to 0.5.
    pub fn apply(&self, x: f64) -> f64 {
        if self.constant {
            0.5
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn invert(&self, x: f64) -> f64 {
        if self.constant {
            self.min
        } else {
            self.min + x * (self.max - self.min)
        }
    }
}

/// Per-field scaling parameters recorded by [`normalize`], stored alongside
/// each run so unseen data and predictions can be mapped both ways.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingManifest {
    pub inputs: [FieldScale; INPUT_DIM],
    /// The target keeps its origin: y -> y / max(y).
    pub target_max: f64,
    pub target_constant: bool,
}

impl ScalingManifest {
    fn fit(records: &[Record]) -> ScalingManifest {
        let inputs: [FieldScale; INPUT_DIM] = std::array::from_fn(|v| {
            FieldScale::fit(INPUT_NAMES[v], records.iter().map(|r| r.input(v)))
        });
        let target_max = records.iter().map(|r| r.shaft_power).fold(0.0, f64::max);
        let target_constant = records
            .iter()
            .all(|r| r.shaft_power == records[0].shaft_power);
        ScalingManifest {
            inputs,
            target_max,
            target_constant,
        }
    }

    /// Applies the recorded scaling to a batch of records.
    pub fn apply(&self, records: &[Record]) -> Vec<Record> {
        records
            .iter()
            .map(|r| {
                let mut out = r.clone();
                for (v, scale) in self.inputs.iter().enumerate() {
                    out.set_input(v, scale.apply(r.input(v)));
                }
                out.shaft_power = r.shaft_power / self.target_max;
                out
            })
            .collect()
    }

    /// Inverts the recorded scaling.
    pub fn invert(&self, records: &[Record]) -> Vec<Record> {
        records
            .iter()
            .map(|r| {
                let mut out = r.clone();
                for (v, scale) in self.inputs.iter().enumerate() {
                    out.set_input(v, scale.invert(r.input(v)));
                }
                out.shaft_power = r.shaft_power * self.target_max;
                out
            })
            .collect()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    pub fn load(path: &std::path::Path) -> Result<ScalingManifest> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Min-max normalizes every input to [0,1] and scales the target by its
/// maximum, returning the mapped records and the manifest for inversion.
pub fn normalize(records: &[Record]) -> Result<(Vec<Record>, ScalingManifest)> {
    if records.is_empty() {
        return Err(Error::data("cannot normalize an empty record set"));
    }
    let manifest = ScalingManifest::fit(records);
    if manifest.target_max <= 0.0 {
        return Err(Error::data("target maximum must be positive"));
    }
    Ok((manifest.apply(records), manifest))
}

/// A disjoint 70/15/15 partition of a record set.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: Vec<Record>,
    pub validation: Vec<Record>,
    pub test: Vec<Record>,
    pub seed: u64,
}

/// Shuffles by seed and partitions 70% / 15% / 15%.
pub fn split(records: &[Record], seed: u64) -> Result<DataSplit> {
    if records.len() < 10 {
        return Err(Error::data(format!(
            "need at least 10 records to split, got {}",
            records.len()
        )));
    }
    let mut indices: Vec<usize> = (0..records.len()).collect();
    let mut rng = seeds::rng(seed, &[0x511]);
    shuffle(&mut indices, &mut rng);

    let n = records.len();
    let n_train = (n * 70 + 50) / 100;
    let n_val = (n * 15 + 50) / 100;
    let take = |ix: &[usize]| ix.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok(DataSplit {
        train: take(&indices[..n_train]),
        validation: take(&indices[n_train..n_train + n_val]),
        test: take(&indices[n_train + n_val..]),
        seed,
    })
}

/// Fisher-Yates shuffle driven by an explicit RNG.
pub(crate) fn shuffle<T>(items: &mut [T], rng: &mut impl Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Per-network sample quotas: train / validation / test.
pub const SUBSAMPLE_QUOTAS: (usize, usize, usize) = (35_000, 7_500, 7_500);

/// Draws the per-network training/validation/test samples without
/// replacement (35,000 / 7,500 / 7,500). A pool smaller than its quota is
/// used whole.
pub fn subsample(pools: &DataSplit, seed: u64) -> DataSplit {
    let (q_train, q_val, q_test) = SUBSAMPLE_QUOTAS;
    let mut rng = seeds::rng(seed, &[0x5a17]);
    DataSplit {
        train: sample_without_replacement(&pools.train, q_train, &mut rng),
        validation: sample_without_replacement(&pools.validation, q_val, &mut rng),
        test: sample_without_replacement(&pools.test, q_test, &mut rng),
        seed,
    }
}

pub(crate) fn sample_without_replacement(
    pool: &[Record],
    quota: usize,
    rng: &mut impl Rng,
) -> Vec<Record> {
    if pool.len() <= quota {
        return pool.to_vec();
    }
    // Partial Fisher-Yates: the first `quota` slots of the permutation.
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    for i in 0..quota {
        let j = rng.random_range(i..pool.len());
        indices.swap(i, j);
    }
    indices[..quota].iter().map(|&i| pool[i].clone()).collect()
}

/// Matrix view of a record list: row-major inputs plus a target column.
#[derive(Debug, Clone)]
pub struct Dataset {
    xs: Vec<f64>,
    ys: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn from_records(records: &[Record]) -> Dataset {
        let dim = INPUT_DIM;
        let mut xs = Vec::with_capacity(records.len() * dim);
        let mut ys = Vec::with_capacity(records.len());
        for r in records {
            for v in 0..dim {
                xs.push(r.input(v));
            }
            ys.push(r.shaft_power);
        }
        Dataset { xs, ys, dim }
    }

    /// Builds a dataset directly from rows; used by tests and diagnostics.
    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Dataset {
        assert_eq!(rows.len(), targets.len());
        let dim = rows.first().map_or(0, |r| r.len());
        let mut xs = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            assert_eq!(row.len(), dim);
            xs.extend_from_slice(row);
        }
        Dataset {
            xs,
            ys: targets.to_vec(),
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows_flat(&self) -> &[f64] {
        &self.xs
    }

    pub fn target(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.ys
    }

    pub fn column(&self, var: usize) -> impl Iterator<Item = f64> + '_ {
        self.xs.iter().skip(var).step_by(self.dim).copied()
    }

    /// Observed (min, max) of one input variable.
    pub fn variable_range(&self, var: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in self.column(var) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}
