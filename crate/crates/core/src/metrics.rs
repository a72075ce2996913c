//! Error measures and the fit-to-median machinery.
//!
//! Conventional measures are Minkowski-r based; the Mean Fit to Median Error
//! (MFME) instead compares a model's one-variable response sweeps against
//! per-bin conditional medians of the target, making it a regulariser toward
//! the dataset's central input-output relationships. All relative measures
//! are reported as percentages.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Default number of points in a one-variable sweep.
pub const DEFAULT_SWEEP_POINTS: usize = 150;
/// Default bin count for conditional-median tables and input modes.
pub const DEFAULT_MEDIAN_BINS: usize = 50;
/// Default minimum per-bin sample count for a bin to be usable.
pub const DEFAULT_MIN_BIN_COUNT: usize = 20;

/// Identifier of one fitness measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureId {
    /// Mean absolute relative error, percent.
    Mare,
    /// Maximum absolute relative error, percent.
    MaxAre,
    /// Mean fit to median error, percent.
    Mfme,
    /// Mean absolute error, target scale.
    Mae,
}

impl MeasureId {
    pub fn name(self) -> &'static str {
        match self {
            MeasureId::Mare => "mare",
            MeasureId::MaxAre => "maxare",
            MeasureId::Mfme => "mfme",
            MeasureId::Mae => "mae",
        }
    }
}

impl std::fmt::Display for MeasureId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Ordered per-network fitness values (all minimised).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub measures: Vec<MeasureId>,
    pub values: Vec<f64>,
}

impl ObjectiveVector {
    pub fn new(measures: Vec<MeasureId>, values: Vec<f64>) -> ObjectiveVector {
        assert_eq!(measures.len(), values.len());
        assert!(
            values.iter().all(|v| v.is_finite() && *v >= 0.0),
            "objective values must be finite and nonnegative: {values:?}"
        );
        ObjectiveVector { measures, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pareto dominance under minimisation: <= everywhere, < somewhere.
    pub fn dominates(&self, other: &ObjectiveVector) -> bool {
        dominates(&self.values, &other.values)
    }
}

/// Minimisation dominance on raw value slices.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strictly_better = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly_better = true;
        }
    }
    strictly_better
}

/// (mean |y - yhat|^r)^(1/r); r = infinity gives the maximum absolute error.
pub fn minkowski_error(predictions: &[f64], targets: &[f64], r: f64) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::data("minkowski_error needs equal nonzero lengths"));
    }
    if !(r >= 1.0) {
        return Err(Error::data(format!(
            "minkowski order must be >= 1, got {r}"
        )));
    }
    let abs_errors = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs());
    if r.is_infinite() {
        return Ok(abs_errors.fold(0.0, f64::max));
    }
    if r == 1.0 {
        return Ok(abs_errors.sum::<f64>() / predictions.len() as f64);
    }
    let mean_pow = abs_errors.map(|e| e.powf(r)).sum::<f64>() / predictions.len() as f64;
    Ok(mean_pow.powf(1.0 / r))
}

fn relative_errors<'a>(
    predictions: &'a [f64],
    targets: &'a [f64],
) -> Result<impl Iterator<Item = f64> + 'a> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::data("relative error needs equal nonzero lengths"));
    }
    if targets.iter().any(|&t| t <= 0.0) {
        return Err(Error::data(
            "relative error needs strictly positive targets; was the data cleaned?",
        ));
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs() / t))
}

/// Mean absolute relative error, percent.
pub fn mean_absolute_relative_error(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    let errors = relative_errors(predictions, targets)?;
    Ok(100.0 * errors.sum::<f64>() / predictions.len() as f64)
}

/// Maximum absolute relative error, percent.
pub fn max_absolute_relative_error(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    let errors = relative_errors(predictions, targets)?;
    Ok(100.0 * errors.fold(0.0, f64::max))
}

/// Equal-width binned median of the target conditioned on one input
/// variable. A bin is usable ("valid") when it holds at least
/// `min_count_threshold` samples and its median is positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalMedianTable {
    pub variable_id: usize,
    /// n_bins + 1 strictly increasing edges.
    pub bin_edges: Vec<f64>,
    /// Per-bin median of the target; None for empty bins.
    pub bin_median: Vec<Option<f64>>,
    pub bin_count: Vec<usize>,
    pub min_count_threshold: usize,
}

impl ConditionalMedianTable {
    pub fn n_bins(&self) -> usize {
        self.bin_count.len()
    }

    /// Bin index for a value, clamping onto the edge bins.
    pub fn bin_of(&self, x: f64) -> usize {
        let lo = self.bin_edges[0];
        let hi = *self.bin_edges.last().expect("edges nonempty");
        let n = self.n_bins();
        if hi == lo {
            return 0;
        }
        let raw = ((x - lo) / (hi - lo) * n as f64).floor();
        (raw.max(0.0) as usize).min(n - 1)
    }

    pub fn is_valid(&self, bin: usize) -> bool {
        self.bin_count[bin] >= self.min_count_threshold
            && self.bin_median[bin].is_some_and(|m| m > 0.0)
    }

    /// Median of the bin containing `x`, if that bin is valid.
    pub fn median_at(&self, x: f64) -> Option<f64> {
        let bin = self.bin_of(x);
        if self.is_valid(bin) {
            self.bin_median[bin]
        } else {
            None
        }
    }
}

/// Builds the conditional-median table for one input variable using
/// equal-width bins over its observed range. A constant-valued variable
/// degenerates to a single bin.
pub fn conditional_median_table(
    dataset: &Dataset,
    variable_id: usize,
    n_bins: usize,
    min_count_threshold: usize,
) -> Result<ConditionalMedianTable> {
    if dataset.is_empty() {
        return Err(Error::data("cannot bin an empty dataset"));
    }
    if n_bins == 0 {
        return Err(Error::data("n_bins must be at least 1"));
    }
    if variable_id >= dataset.dim() {
        return Err(Error::data(format!(
            "variable {variable_id} out of range for {}-dim dataset",
            dataset.dim()
        )));
    }
    let (lo, hi) = dataset.variable_range(variable_id);
    let n_bins = if lo == hi { 1 } else { n_bins };

    let mut edges = Vec::with_capacity(n_bins + 1);
    if lo == hi {
        // Degenerate single bin still needs increasing edges.
        edges = vec![lo, lo + 1.0];
    } else {
        for i in 0..=n_bins {
            let t = i as f64 / n_bins as f64;
            edges.push(if i == n_bins { hi } else { lo + t * (hi - lo) });
        }
    }

    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for (x, y) in dataset.column(variable_id).zip(dataset.targets()) {
        let raw = if hi == lo {
            0
        } else {
            (((x - lo) / (hi - lo) * n_bins as f64).floor() as usize).min(n_bins - 1)
        };
        buckets[raw].push(*y);
    }

    let bin_count: Vec<usize> = buckets.iter().map(Vec::len).collect();
    let bin_median: Vec<Option<f64>> = buckets
        .into_iter()
        .map(|mut ys| {
            if ys.is_empty() {
                None
            } else {
                ys.sort_by(|a, b| a.partial_cmp(b).expect("finite targets"));
                Some(median_of_sorted(&ys))
            }
        })
        .collect();

    Ok(ConditionalMedianTable {
        variable_id,
        bin_edges: edges,
        bin_median,
        bin_count,
        min_count_threshold,
    })
}

/// Median of a sorted slice; even counts average the two central values.
pub fn median_of_sorted(ys: &[f64]) -> f64 {
    let n = ys.len();
    if n % 2 == 1 {
        ys[n / 2]
    } else {
        0.5 * (ys[n / 2 - 1] + ys[n / 2])
    }
}

/// One-variable sweep layout: number of points and the values the other
/// variables are pinned to (typically per-variable modes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub points_per_sweep: usize,
    pub fixed_values: Vec<f64>,
}

impl SweepSpec {
    pub fn new(points_per_sweep: usize, fixed_values: Vec<f64>) -> Result<SweepSpec> {
        if points_per_sweep < 2 {
            return Err(Error::config("points_per_sweep must be at least 2"));
        }
        Ok(SweepSpec {
            points_per_sweep,
            fixed_values,
        })
    }
}

/// Evenly spaced sweep positions with exact endpoints.
pub fn sweep_positions(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Mean over sweep points (in valid bins) of 100 * |y - m| / m against one
/// table. Errors when no sweep point lands in a valid bin.
pub fn median_fit_percent(xs: &[f64], ys: &[f64], table: &ConditionalMedianTable) -> Result<f64> {
    assert_eq!(xs.len(), ys.len());
    let mut total = 0.0;
    let mut used = 0usize;
    for (x, y) in xs.iter().zip(ys) {
        if let Some(m) = table.median_at(*x) {
            total += (y - m).abs() / m;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::data(format!(
            "no sweep point fell in a valid bin for variable {}",
            table.variable_id
        )));
    }
    Ok(100.0 * total / used as f64)
}

/// Mean Fit to Median Error, percent: for each input variable, sweep it
/// across its observed range with the other variables fixed, compare the
/// model's predictions to the per-bin conditional medians, and average the
/// per-variable relative deviations. Variables with no valid bins are
/// excluded; it is an error if every variable is excluded.
pub fn mean_fit_to_median_error(
    predict: &dyn Fn(&[f64]) -> f64,
    dataset: &Dataset,
    tables: &[ConditionalMedianTable],
    sweep: &SweepSpec,
) -> Result<f64> {
    if tables.len() != dataset.dim() {
        return Err(Error::data(format!(
            "need one table per input variable: {} tables for {} variables",
            tables.len(),
            dataset.dim()
        )));
    }
    if sweep.fixed_values.len() != dataset.dim() {
        return Err(Error::data("sweep fixed_values must cover every variable"));
    }
    let mut per_variable = Vec::with_capacity(dataset.dim());
    for (var, table) in tables.iter().enumerate() {
        if table.variable_id != var {
            return Err(Error::data("tables must be ordered by variable id"));
        }
        let (lo, hi) = dataset.variable_range(var);
        let xs = sweep_positions(lo, hi, sweep.points_per_sweep);
        let mut input = sweep.fixed_values.clone();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| {
                input[var] = x;
                predict(&input)
            })
            .collect();
        if let Ok(fit) = median_fit_percent(&xs, &ys, table) {
            per_variable.push(fit);
        }
        // a variable with no valid bins is excluded
    }
    if per_variable.is_empty() {
        return Err(Error::data("every variable was excluded from the MFME"));
    }
    Ok(per_variable.iter().sum::<f64>() / per_variable.len() as f64)
}

/// Conditional-median tables for every input variable of a dataset.
pub fn tables_for_dataset(
    dataset: &Dataset,
    n_bins: usize,
    min_count_threshold: usize,
) -> Result<Vec<ConditionalMedianTable>> {
    (0..dataset.dim())
        .map(|v| conditional_median_table(dataset, v, n_bins, min_count_threshold))
        .collect()
}

/// Exports tables as CSV: variable_id, bin_lo, bin_hi, count, median, valid.
pub fn export_tables_csv(
    path: &std::path::Path,
    tables: &[ConditionalMedianTable],
    variable_names: &[&str],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "variable_id",
        "bin_lo",
        "bin_hi",
        "count",
        "median",
        "valid",
    ])?;
    for table in tables {
        let name = variable_names
            .get(table.variable_id)
            .copied()
            .unwrap_or("unknown");
        for bin in 0..table.n_bins() {
            w.write_record(&[
                name.to_string(),
                table.bin_edges[bin].to_string(),
                table.bin_edges[bin + 1].to_string(),
                table.bin_count[bin].to_string(),
                table.bin_median[bin]
                    .map(|m| m.to_string())
                    .unwrap_or_default(),
                table.is_valid(bin).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
