//! Interpretability diagnostics: input modes, learnt-curve extraction,
//! cross-network spread, and curve-vs-conditional-median comparison.
//!
//! A learnt curve is the model's prediction over a 150-point sweep of one
//! input variable with every other variable pinned at its mode. The spread
//! of a set of curves (per point: range over mean, as a percentage) is the
//! consistency statistic compared across GA approaches.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{self, ConditionalMedianTable, SweepSpec};
use crate::nn::NetworkModel;

/// Mode of one input variable: centre of the highest-count equal-width
/// histogram bin, ties broken toward the lower bin.
pub fn input_mode(dataset: &Dataset, variable_id: usize, n_bins: usize) -> f64 {
    assert!(n_bins >= 1 && !dataset.is_empty());
    let (lo, hi) = dataset.variable_range(variable_id);
    if lo == hi {
        return lo;
    }
    let mut counts = vec![0usize; n_bins];
    for x in dataset.column(variable_id) {
        let bin = (((x - lo) / (hi - lo) * n_bins as f64).floor() as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    let mut best = 0usize;
    for (bin, &count) in counts.iter().enumerate() {
        if count > counts[best] {
            best = bin;
        }
    }
    lo + (best as f64 + 0.5) * (hi - lo) / n_bins as f64
}

/// Sweep layout for a dataset: default point count, all variables fixed at
/// their modes.
pub fn sweep_for_dataset(dataset: &Dataset, points_per_sweep: usize) -> Result<SweepSpec> {
    let modes = (0..dataset.dim())
        .map(|v| input_mode(dataset, v, metrics::DEFAULT_MEDIAN_BINS))
        .collect();
    SweepSpec::new(points_per_sweep, modes)
}

/// One network's response over a one-variable sweep.
#[derive(Debug, Clone)]
pub struct LearntCurve {
    pub variable_id: usize,
    pub network_id: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Evaluates the model (inference mode, no dropout) over the sweep of one
/// variable, the others pinned at the sweep's fixed values.
pub fn extract_curve(
    model: &NetworkModel,
    dataset: &Dataset,
    variable_id: usize,
    sweep: &SweepSpec,
    network_id: usize,
) -> Result<LearntCurve> {
    if model.input_dim() != dataset.dim() {
        return Err(Error::data(format!(
            "model expects {} inputs, dataset has {} variables",
            model.input_dim(),
            dataset.dim()
        )));
    }
    if variable_id >= dataset.dim() {
        return Err(Error::data(format!("no variable {variable_id}")));
    }
    let (lo, hi) = dataset.variable_range(variable_id);
    let xs = metrics::sweep_positions(lo, hi, sweep.points_per_sweep);
    let mut input = sweep.fixed_values.clone();
    let mut ys = Vec::with_capacity(xs.len());
    for &x in &xs {
        input[variable_id] = x;
        ys.push(model.predict_one(&input)?);
    }
    Ok(LearntCurve {
        variable_id,
        network_id,
        xs,
        ys,
    })
}

/// Cross-network consistency of a set of curves on identical sweeps.
#[derive(Debug, Clone)]
pub struct SpreadReport {
    pub variable_id: usize,
    /// 100 * (max - min) / mean at each sweep point.
    pub per_point_spread: Vec<f64>,
    pub average_spread: f64,
    pub n_networks: usize,
}

/// Per-point range-over-mean spread across at least two curves sharing the
/// same xs, averaged along the sweep.
pub fn curve_spread(curves: &[LearntCurve]) -> Result<SpreadReport> {
    if curves.len() < 2 {
        return Err(Error::data("curve spread needs at least 2 curves"));
    }
    let first = &curves[0];
    for c in &curves[1..] {
        if c.variable_id != first.variable_id || c.xs != first.xs {
            return Err(Error::data("curves must share variable and sweep points"));
        }
    }
    let n_points = first.xs.len();
    let mut per_point = Vec::with_capacity(n_points);
    for p in 0..n_points {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for c in curves {
            let y = c.ys[p];
            min = min.min(y);
            max = max.max(y);
            sum += y;
        }
        let mean = sum / curves.len() as f64;
        if !(mean > 0.0) {
            return Err(Error::data(
                "curve spread needs positive mean predictions at every point",
            ));
        }
        per_point.push(100.0 * (max - min) / mean);
    }
    let average_spread = per_point.iter().sum::<f64>() / n_points as f64;
    Ok(SpreadReport {
        variable_id: first.variable_id,
        per_point_spread: per_point,
        average_spread,
        n_networks: curves.len(),
    })
}

/// Mean relative deviation of a curve from the conditional medians of its
/// variable, percent; the per-variable component of the MFME.
pub fn curve_vs_median(curve: &LearntCurve, table: &ConditionalMedianTable) -> Result<f64> {
    if table.variable_id != curve.variable_id {
        return Err(Error::data(format!(
            "table is for variable {}, curve for {}",
            table.variable_id, curve.variable_id
        )));
    }
    metrics::median_fit_percent(&curve.xs, &curve.ys, table)
}
