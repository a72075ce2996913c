//! Orchestration of the four GA approaches: data pipeline, evolution, run
//! persistence, reporting and curve plotting.
//!
//! A run directory contains `manifest.json`, `history.csv`, `archive.csv`,
//! `evaluations.csv`, `median_tables.csv`, `scaling.json` and a `models/`
//! directory with the serialized Pareto-front networks. The manifest plus
//! the master seed reproduce the run bit-for-bit (archive CSV included).

pub mod svg;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    self, generate_synthetic, load_csv, ColumnMap, Record, ScalingManifest, SyntheticConfig,
    INPUT_NAMES,
};
use crate::error::{Error, Result};
use crate::evo::{self, evolve, DataContext, EvolveResult, GARunConfig, GENOME_LEN};
use crate::interpret::{self, LearntCurve};
use crate::metrics::{ConditionalMedianTable, MeasureId};
use crate::nn::{NetworkModel, TrainingSchedule};

/// The four GA approaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApproachId {
    GaI,
    GaII,
    GaIII,
    GaIV,
}

impl ApproachId {
    pub const ALL: [ApproachId; 4] = [
        ApproachId::GaI,
        ApproachId::GaII,
        ApproachId::GaIII,
        ApproachId::GaIV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ApproachId::GaI => "ga-i",
            ApproachId::GaII => "ga-ii",
            ApproachId::GaIII => "ga-iii",
            ApproachId::GaIV => "ga-iv",
        }
    }
}

impl std::fmt::Display for ApproachId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl std::str::FromStr for ApproachId {
    type Err = Error;

    fn from_str(s: &str) -> Result<ApproachId> {
        match s.to_ascii_lowercase().as_str() {
            "ga-i" | "ga1" | "gai" => Ok(ApproachId::GaI),
            "ga-ii" | "ga2" | "gaii" => Ok(ApproachId::GaII),
            "ga-iii" | "ga3" | "gaiii" => Ok(ApproachId::GaIII),
            "ga-iv" | "ga4" | "gaiv" => Ok(ApproachId::GaIV),
            other => Err(Error::config(format!(
                "unknown approach '{other}', expected ga-i | ga-ii | ga-iii | ga-iv"
            ))),
        }
    }
}

/// Objective set and regularisation handling of one approach.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproachSpec {
    pub id: ApproachId,
    pub objective_set: Vec<MeasureId>,
    pub regularisation_mask: bool,
}

impl ApproachSpec {
    pub fn for_id(id: ApproachId) -> ApproachSpec {
        let (objective_set, regularisation_mask) = match id {
            ApproachId::GaI => (vec![MeasureId::Mare], false),
            ApproachId::GaII => (vec![MeasureId::Mare, MeasureId::MaxAre], false),
            ApproachId::GaIII => (vec![MeasureId::Mfme, MeasureId::Mare], true),
            ApproachId::GaIV => (vec![MeasureId::Mare, MeasureId::MaxAre], true),
        };
        ApproachSpec {
            id,
            objective_set,
            regularisation_mask,
        }
    }

    /// Objectives handed to the GA; a single-objective approach runs as the
    /// degenerate duplicated vector so the multi-objective loop stays total.
    pub fn ga_objective_set(&self) -> Vec<MeasureId> {
        if self.objective_set.len() == 1 {
            vec![self.objective_set[0], self.objective_set[0]]
        } else {
            self.objective_set.clone()
        }
    }
}

/// Where the run's records come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic { config: SyntheticConfig },
    Csv { path: PathBuf },
}

fn default_population() -> usize {
    1000
}
fn default_generations() -> usize {
    300
}
fn default_collectives() -> usize {
    8
}
fn default_eliminated() -> usize {
    1
}
fn default_interval() -> usize {
    10
}
fn default_elite() -> f64 {
    0.10
}
fn default_crossover() -> f64 {
    1.0
}
fn default_mutation() -> f64 {
    0.08
}
fn default_max_neurons() -> usize {
    1000
}

/// GA knobs exposed in the config file; objectives and the regularisation
/// mask come from the approach.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaSettings {
    #[serde(default = "default_population")]
    pub population_size: usize,
    #[serde(default = "default_generations")]
    pub generations: usize,
    #[serde(default = "default_collectives")]
    pub n_collectives: usize,
    #[serde(default = "default_eliminated")]
    pub eliminated_collectives: usize,
    #[serde(default = "default_interval")]
    pub elimination_interval: usize,
    #[serde(default = "default_elite")]
    pub elite_fraction: f64,
    #[serde(default = "default_crossover")]
    pub crossover_rate: f64,
    #[serde(default = "default_mutation")]
    pub mutation_rate: f64,
    #[serde(default = "default_max_neurons")]
    pub max_neurons: usize,
}

impl Default for GaSettings {
    fn default() -> Self {
        GaSettings {
            population_size: default_population(),
            generations: default_generations(),
            n_collectives: default_collectives(),
            eliminated_collectives: default_eliminated(),
            elimination_interval: default_interval(),
            elite_fraction: default_elite(),
            crossover_rate: default_crossover(),
            mutation_rate: default_mutation(),
            max_neurons: default_max_neurons(),
        }
    }
}

impl GaSettings {
    pub fn to_run_config(&self, spec: &ApproachSpec) -> GARunConfig {
        GARunConfig {
            population_size: self.population_size,
            generations: self.generations,
            n_collectives: self.n_collectives,
            eliminated_collectives: self.eliminated_collectives,
            elimination_interval: self.elimination_interval,
            elite_fraction: self.elite_fraction,
            crossover_rate: self.crossover_rate,
            mutation_rate: self.mutation_rate,
            objective_set: spec.ga_objective_set(),
            regularisation_mask: spec.regularisation_mask,
            max_neurons: self.max_neurons,
        }
    }
}

/// The JSON config file: sections mirroring the GA loop, the training
/// schedule and the synthetic generator. Missing sections take defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunConfigFile {
    #[serde(default)]
    pub ga: GaSettings,
    #[serde(default)]
    pub training: TrainingSchedule,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<RunConfigFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {path:?}: {e}")))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("cannot parse config {path:?}: {e}")))
    }
}

/// Run-directory artifact names.
pub mod artifact {
    pub const MANIFEST: &str = "manifest.json";
    pub const HISTORY: &str = "history.csv";
    pub const ARCHIVE: &str = "archive.csv";
    pub const EVALUATIONS: &str = "evaluations.csv";
    pub const MEDIAN_TABLES: &str = "median_tables.csv";
    pub const SCALING: &str = "scaling.json";
    pub const MODELS_DIR: &str = "models";
    pub const REPORT_CSV: &str = "report.csv";
    pub const REPORT_TXT: &str = "report.txt";
}

/// Everything needed to reproduce a run, plus artifact bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub approach: ApproachId,
    pub ga: GARunConfig,
    pub training: TrainingSchedule,
    pub data_source: DataSource,
    pub master_seed: u64,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub csv_skipped_rows: usize,
    pub n_pareto_models: usize,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(artifact::MANIFEST);
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    pub fn load(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(artifact::MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|_| Error::IncompleteRun {
            dir: dir.to_path_buf(),
            artifact: artifact::MANIFEST.to_string(),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn load_records(source: &DataSource) -> Result<(Vec<Record>, usize)> {
    match source {
        DataSource::Synthetic { config } => Ok((generate_synthetic(config)?, 0)),
        DataSource::Csv { path } => {
            let report = load_csv(path, &ColumnMap::default())?;
            Ok((report.records, report.skipped_rows))
        }
    }
}

/// Executes the full pipeline for one approach: ingest, clean, normalize,
/// split, build median tables, evolve, persist artifacts.
pub fn run_approach(
    spec: &ApproachSpec,
    config: &RunConfigFile,
    data_source: &DataSource,
    master_seed: u64,
    out_dir: &Path,
    workers: usize,
) -> Result<RunManifest> {
    let ga = config.ga.to_run_config(spec);
    ga.validate()?;
    config.training.validate()?;
    if let DataSource::Synthetic { config } = data_source {
        config.validate()?;
    }
    std::fs::create_dir_all(out_dir)?;
    std::fs::create_dir_all(out_dir.join(artifact::MODELS_DIR))?;

    let started_unix = now_unix();
    let (records, csv_skipped_rows) = load_records(data_source)?;
    let cleaned = data::clean(&records)?;
    let (normalized, scaling) = data::normalize(&cleaned)?;
    let pools = data::split(&normalized, master_seed)?;
    let ctx = DataContext::new(pools, config.training.clone())?;

    scaling.save(&out_dir.join(artifact::SCALING))?;
    let names: Vec<&str> = INPUT_NAMES.to_vec();
    crate::metrics::export_tables_csv(&out_dir.join(artifact::MEDIAN_TABLES), &ctx.tables, &names)?;

    let result = evolve(&ga, &ctx, master_seed, workers)?;

    write_history_csv(&out_dir.join(artifact::HISTORY), &result, &ga)?;
    write_evaluations_csv(&out_dir.join(artifact::EVALUATIONS), &result, &ga)?;
    let n_pareto_models = write_archive(out_dir, &result, &ga)?;

    let manifest = RunManifest {
        approach: spec.id,
        ga,
        training: config.training.clone(),
        data_source: data_source.clone(),
        master_seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix,
        finished_unix: now_unix(),
        csv_skipped_rows,
        n_pareto_models,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

fn measure_names(ga: &GARunConfig) -> Vec<String> {
    ga.objective_set
        .iter()
        .map(|m| m.name().to_string())
        .collect()
}

fn write_history_csv(path: &Path, result: &EvolveResult, ga: &GARunConfig) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "generation".to_string(),
        "collective".to_string(),
        "epochs".to_string(),
        "eliminated".to_string(),
    ];
    for name in measure_names(ga) {
        header.push(format!("best_{name}"));
    }
    for name in measure_names(ga) {
        header.push(format!("mean_{name}"));
    }
    w.write_record(&header)?;
    for stat in &result.history {
        let mut row = vec![
            stat.generation.to_string(),
            stat.collective_id.to_string(),
            stat.epochs.to_string(),
            stat.eliminated.to_string(),
        ];
        row.extend(stat.best.iter().map(|v| v.to_string()));
        row.extend(stat.mean.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_evaluations_csv(path: &Path, result: &EvolveResult, ga: &GARunConfig) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "generation".to_string(),
        "collective".to_string(),
        "hidden_layers".to_string(),
        "neurons_1".to_string(),
        "neurons_2".to_string(),
        "neurons_3".to_string(),
        "neurons_4".to_string(),
        "activation".to_string(),
        "optimizer".to_string(),
        "l1_rate".to_string(),
        "l2_rate".to_string(),
        "dropout_rate".to_string(),
    ];
    header.extend(measure_names(ga));
    header.push("diverged".to_string());
    w.write_record(&header)?;
    for e in &result.evaluations {
        let mut row = vec![
            e.generation.to_string(),
            e.collective_id.to_string(),
            e.config.hidden_layers.to_string(),
        ];
        for l in 0..4 {
            row.push(
                e.config
                    .neurons_per_layer
                    .get(l)
                    .copied()
                    .unwrap_or(0)
                    .to_string(),
            );
        }
        row.push(e.config.activation.to_string());
        row.push(e.config.optimizer.to_string());
        row.push(e.config.l1_rate.to_string());
        row.push(e.config.l2_rate.to_string());
        row.push(e.config.dropout_rate.to_string());
        row.extend(e.objectives.values.iter().map(|v| v.to_string()));
        row.push(e.diverged.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes archive.csv and the per-entry model files; returns the number of
/// Pareto models persisted.
fn write_archive(out_dir: &Path, result: &EvolveResult, ga: &GARunConfig) -> Result<usize> {
    let mut w = csv::Writer::from_path(out_dir.join(artifact::ARCHIVE))?;
    let mut header: Vec<String> = (0..GENOME_LEN).map(|g| format!("gene_{g}")).collect();
    header.extend(
        [
            "hidden_layers",
            "neurons_1",
            "neurons_2",
            "neurons_3",
            "neurons_4",
            "activation",
            "optimizer",
            "l1_rate",
            "l2_rate",
            "dropout_rate",
        ]
        .map(String::from),
    );
    header.extend(measure_names(ga));
    header.push("generation".to_string());
    header.push("model_path".to_string());
    w.write_record(&header)?;

    for (i, entry) in result.archive.entries().iter().enumerate() {
        let model_rel = format!("{}/model_{i:03}.json", artifact::MODELS_DIR);
        entry.model.save(&out_dir.join(&model_rel))?;
        let mut row: Vec<String> = entry.genome.iter().map(|g| g.to_string()).collect();
        let config = &entry.model.config;
        row.push(config.hidden_layers.to_string());
        for l in 0..4 {
            row.push(
                config
                    .neurons_per_layer
                    .get(l)
                    .copied()
                    .unwrap_or(0)
                    .to_string(),
            );
        }
        row.push(config.activation.to_string());
        row.push(config.optimizer.to_string());
        row.push(config.l1_rate.to_string());
        row.push(config.l2_rate.to_string());
        row.push(config.dropout_rate.to_string());
        row.extend(entry.objectives.values.iter().map(|v| v.to_string()));
        row.push(entry.generation.to_string());
        row.push(model_rel);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(result.archive.len())
}

fn require_artifact(dir: &Path, name: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::IncompleteRun {
            dir: dir.to_path_buf(),
            artifact: name.to_string(),
        });
    }
    Ok(path)
}

/// Rebuilds the data context of a completed run: same source, same
/// cleaning, the saved scaling manifest, the same split seed.
fn rebuild_context(dir: &Path, manifest: &RunManifest) -> Result<DataContext> {
    let scaling = ScalingManifest::load(&require_artifact(dir, artifact::SCALING)?)?;
    let (records, _) = load_records(&manifest.data_source)?;
    let cleaned = data::clean(&records)?;
    let normalized = scaling.apply(&cleaned);
    let pools = data::split(&normalized, manifest.master_seed)?;
    DataContext::new(pools, manifest.training.clone())
}

/// One archive row as needed for reporting and curve extraction.
#[derive(Clone)]
struct ArchiveRow {
    mare: f64,
    model_path: String,
}

fn read_archive_rows(dir: &Path) -> Result<Vec<ArchiveRow>> {
    let path = require_artifact(dir, artifact::ARCHIVE)?;
    let mut reader = csv::Reader::from_path(&path)?;
    let headers = reader.headers()?.clone();
    let mare_ix = headers
        .iter()
        .position(|h| h == MeasureId::Mare.name())
        .ok_or_else(|| Error::data("archive.csv lacks a mare column"))?;
    let model_ix = headers
        .iter()
        .position(|h| h == "model_path")
        .ok_or_else(|| Error::data("archive.csv lacks a model_path column"))?;
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row?;
        rows.push(ArchiveRow {
            mare: row
                .get(mare_ix)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::data("bad mare value in archive.csv"))?,
            model_path: row
                .get(model_ix)
                .ok_or_else(|| Error::data("bad model_path in archive.csv"))?
                .to_string(),
        });
    }
    Ok(rows)
}

/// Mean and population standard deviation of each measure over the Pareto
/// networks re-evaluated on the full test pool.
#[derive(Debug, Clone, Serialize)]
pub struct MeasureStats {
    pub measure: MeasureId,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Histogram and distribution summaries over the final window of
/// evaluations, as the paper reports them.
#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub approach: ApproachId,
    pub measures: Vec<MeasureStats>,
    /// Full-test MARE of every Pareto network, archive order.
    pub mare_values: Vec<f64>,
    pub n_pareto: usize,
    /// Inclusive generation window the histograms cover.
    pub final_window: (usize, usize),
    pub n_final_evaluations: usize,
    /// Count of networks per hidden-layer count 1..=4.
    pub layer_histogram: [usize; 4],
    /// (rate, count) over the final window.
    pub l1_counts: Vec<(f64, usize)>,
    pub l2_counts: Vec<(f64, usize)>,
    pub dropout_zero_fraction: f64,
    pub dropout_median: f64,
    pub neuron_median: f64,
    pub neuron_iqr: f64,
    /// (model_path, full-test mare) of the best networks.
    pub top_networks: Vec<(String, f64)>,
}

/// Report measures are computed for all four error types regardless of the
/// approach's objective set.
const REPORT_MEASURES: [MeasureId; 4] = [
    MeasureId::Mare,
    MeasureId::MaxAre,
    MeasureId::Mfme,
    MeasureId::Mae,
];

/// Summarises a completed run: per-measure mean +/- std over the Pareto
/// networks evaluated on the full test pool, plus architecture and
/// regularisation histograms over the final 15 generations. Writes
/// report.csv and report.txt into the run directory.
pub fn report(dir: &Path, top_k: usize) -> Result<ReportSummary> {
    let manifest = RunManifest::load(dir)?;
    for name in [
        artifact::HISTORY,
        artifact::ARCHIVE,
        artifact::EVALUATIONS,
        artifact::MEDIAN_TABLES,
        artifact::SCALING,
    ] {
        require_artifact(dir, name)?;
    }
    let rows = read_archive_rows(dir)?;
    if rows.is_empty() {
        return Err(Error::IncompleteRun {
            dir: dir.to_path_buf(),
            artifact: format!("{}/model_*.json", artifact::MODELS_DIR),
        });
    }
    require_artifact(dir, &rows[0].model_path)?;

    let ctx = rebuild_context(dir, &manifest)?;

    // Re-evaluate every Pareto model on the full test pool.
    let mut per_measure: Vec<Vec<f64>> = vec![Vec::new(); REPORT_MEASURES.len()];
    let mut test_mares: Vec<(String, f64)> = Vec::new();
    for row in &rows {
        let model = NetworkModel::load(&dir.join(&row.model_path))?;
        let values = evo::compute_objectives(&REPORT_MEASURES, &model, &ctx.test_ds, &ctx)?;
        for (bucket, v) in per_measure.iter_mut().zip(&values) {
            bucket.push(*v);
        }
        test_mares.push((row.model_path.clone(), values[0]));
    }
    let mare_values = per_measure[0].clone();
    let measures: Vec<MeasureStats> = REPORT_MEASURES
        .iter()
        .zip(&per_measure)
        .map(|(&measure, values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            MeasureStats {
                measure,
                mean,
                std: var.sqrt(),
                n,
            }
        })
        .collect();
    test_mares.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite mare"));
    let top_networks: Vec<(String, f64)> = test_mares.into_iter().take(top_k.max(1)).collect();

    // Final-window histograms from the evaluations log.
    let final_lo = manifest.ga.generations.saturating_sub(14).max(1);
    let final_window = (final_lo, manifest.ga.generations);
    let mut layer_histogram = [0usize; 4];
    let mut l1_values: Vec<f64> = Vec::new();
    let mut l2_values: Vec<f64> = Vec::new();
    let mut dropouts: Vec<f64> = Vec::new();
    let mut neurons: Vec<f64> = Vec::new();

    let eval_path = require_artifact(dir, artifact::EVALUATIONS)?;
    let mut reader = csv::Reader::from_path(&eval_path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("evaluations.csv lacks column {name}")))
    };
    let g_ix = col("generation")?;
    let layers_ix = col("hidden_layers")?;
    let neuron_ix: Vec<usize> = (1..=4)
        .map(|i| col(&format!("neurons_{i}")))
        .collect::<Result<_>>()?;
    let l1_ix = col("l1_rate")?;
    let l2_ix = col("l2_rate")?;
    let dropout_ix = col("dropout_rate")?;

    let mut n_final_evaluations = 0usize;
    for row in reader.records() {
        let row = row?;
        let parse = |ix: usize| -> Result<f64> {
            row.get(ix)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::data("bad numeric cell in evaluations.csv"))
        };
        let generation = parse(g_ix)? as usize;
        if generation < final_window.0 {
            continue;
        }
        n_final_evaluations += 1;
        let layers = parse(layers_ix)? as usize;
        if (1..=4).contains(&layers) {
            layer_histogram[layers - 1] += 1;
        }
        for (&ix, l) in neuron_ix.iter().zip(0..4) {
            if l < layers {
                neurons.push(parse(ix)?);
            }
        }
        l1_values.push(parse(l1_ix)?);
        l2_values.push(parse(l2_ix)?);
        dropouts.push(parse(dropout_ix)?);
    }

    let count_rates = |values: &[f64]| -> Vec<(f64, usize)> {
        crate::nn::REGULARISATION_RATES
            .iter()
            .map(|&r| (r, values.iter().filter(|&&v| v == r).count()))
            .collect()
    };
    let l1_counts = count_rates(&l1_values);
    let l2_counts = count_rates(&l2_values);
    let dropout_zero_fraction = if dropouts.is_empty() {
        0.0
    } else {
        dropouts.iter().filter(|&&d| d == 0.0).count() as f64 / dropouts.len() as f64
    };
    let quantile = |values: &mut Vec<f64>, q: f64| -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let pos = q * (values.len() - 1) as f64;
        values[pos.round() as usize]
    };
    let mut dropouts_sorted = dropouts.clone();
    let dropout_median = quantile(&mut dropouts_sorted, 0.5);
    let mut neurons_sorted = neurons.clone();
    let neuron_median = quantile(&mut neurons_sorted, 0.5);
    let neuron_iqr = quantile(&mut neurons_sorted, 0.75) - quantile(&mut neurons_sorted, 0.25);

    let summary = ReportSummary {
        approach: manifest.approach,
        measures,
        mare_values,
        n_pareto: rows.len(),
        final_window,
        n_final_evaluations,
        layer_histogram,
        l1_counts,
        l2_counts,
        dropout_zero_fraction,
        dropout_median,
        neuron_median,
        neuron_iqr,
        top_networks,
    };
    write_report_files(dir, &summary)?;
    Ok(summary)
}

fn write_report_files(dir: &Path, summary: &ReportSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(artifact::REPORT_CSV))?;
    w.write_record(["measure", "mean", "std", "n_networks"])?;
    for m in &summary.measures {
        w.write_record(&[
            m.measure.name().to_string(),
            m.mean.to_string(),
            m.std.to_string(),
            m.n.to_string(),
        ])?;
    }
    w.flush()?;

    let mut text = String::new();
    text.push_str(&format!("approach: {}\n", summary.approach));
    text.push_str(&format!(
        "pareto networks: {} (errors re-evaluated on the full test pool)\n",
        summary.n_pareto
    ));
    for m in &summary.measures {
        text.push_str(&format!(
            "  {:>7}: {:8.4} +/- {:.4}\n",
            m.measure.name(),
            m.mean,
            m.std
        ));
    }
    text.push_str(&format!(
        "final window: generations {}..={} ({} evaluations)\n",
        summary.final_window.0, summary.final_window.1, summary.n_final_evaluations
    ));
    text.push_str("hidden layer histogram:\n");
    for (i, count) in summary.layer_histogram.iter().enumerate() {
        text.push_str(&format!("  {} layers: {}\n", i + 1, count));
    }
    text.push_str(&format!(
        "neurons per layer: median {:.0}, IQR {:.0}\n",
        summary.neuron_median, summary.neuron_iqr
    ));
    text.push_str("l1 rates:\n");
    for (rate, count) in &summary.l1_counts {
        text.push_str(&format!("  {rate}: {count}\n"));
    }
    text.push_str("l2 rates:\n");
    for (rate, count) in &summary.l2_counts {
        text.push_str(&format!("  {rate}: {count}\n"));
    }
    text.push_str(&format!(
        "dropout: median {:.3}, zero fraction {:.3}\n",
        summary.dropout_median, summary.dropout_zero_fraction
    ));
    text.push_str("best networks by full-test mare:\n");
    for (path, mare) in &summary.top_networks {
        text.push_str(&format!("  {path}: {mare:.4}\n"));
    }
    std::fs::write(dir.join(artifact::REPORT_TXT), text)?;
    Ok(())
}

/// Output paths of a curve extraction.
#[derive(Debug, Clone)]
pub struct ExtractOutcome {
    pub curves_csv: PathBuf,
    pub spread_csv: Option<PathBuf>,
    pub svg: PathBuf,
    pub n_curves: usize,
    pub average_spread: Option<f64>,
}

/// Extracts learnt curves for k representative Pareto networks, writes the
/// curves CSV, the spread CSV (needs at least two networks) and an SVG
/// overlaying the curves on the conditional medians.
///
/// Representatives are spaced evenly along the front ordered by MARE (the
/// lowest-MARE network always included), so multi-objective fronts are
/// shown whole rather than collapsed onto their accuracy corner.
pub fn extract_and_plot(dir: &Path, variable: &str, top_k: usize) -> Result<ExtractOutcome> {
    let manifest = RunManifest::load(dir)?;
    let variable_id = INPUT_NAMES
        .iter()
        .position(|&n| n == variable)
        .ok_or_else(|| {
            Error::config(format!(
                "unknown variable '{variable}', expected one of {INPUT_NAMES:?}"
            ))
        })?;
    if top_k == 0 {
        return Err(Error::config("top-k must be at least 1"));
    }
    let mut rows = read_archive_rows(dir)?;
    if rows.is_empty() {
        return Err(Error::IncompleteRun {
            dir: dir.to_path_buf(),
            artifact: format!("{}/model_*.json", artifact::MODELS_DIR),
        });
    }
    if rows.len() < top_k {
        eprintln!(
            "note: only {} Pareto models available, using all (requested {top_k})",
            rows.len()
        );
    }
    rows.sort_by(|a, b| a.mare.partial_cmp(&b.mare).expect("finite mare"));
    let k = top_k.min(rows.len());
    let chosen: Vec<ArchiveRow> = if k == rows.len() {
        rows
    } else {
        // Even spacing over the MARE-sorted front, endpoints included.
        let mut picks: Vec<usize> = (0..k)
            .map(|i| {
                if k == 1 {
                    0
                } else {
                    (i * (rows.len() - 1)) / (k - 1)
                }
            })
            .collect();
        picks.dedup();
        picks.into_iter().map(|i| rows[i].clone()).collect()
    };
    let chosen = &chosen[..];

    let ctx = rebuild_context(dir, &manifest)?;
    let table = &ctx.tables[variable_id];

    let mut curves: Vec<LearntCurve> = Vec::with_capacity(chosen.len());
    for (rank, row) in chosen.iter().enumerate() {
        let model = NetworkModel::load(&require_artifact(dir, &row.model_path)?)?;
        curves.push(interpret::extract_curve(
            &model,
            &ctx.train_ds,
            variable_id,
            &ctx.sweep,
            rank,
        )?);
    }

    let curves_csv = dir.join(format!("curves_{variable}.csv"));
    write_curves_csv(&curves_csv, variable, &curves)?;

    let (spread_csv, average_spread) = if curves.len() >= 2 {
        let spread = interpret::curve_spread(&curves)?;
        let path = dir.join(format!("spread_{variable}.csv"));
        write_spread_csv(&path, variable, &curves[0].xs, &spread)?;
        (Some(path), Some(spread.average_spread))
    } else {
        (None, None)
    };

    let svg_path = dir.join(format!("curves_{variable}.svg"));
    write_overlay_svg(&svg_path, variable, &curves, table, chosen)?;

    Ok(ExtractOutcome {
        curves_csv,
        spread_csv,
        svg: svg_path,
        n_curves: curves.len(),
        average_spread,
    })
}

fn write_curves_csv(path: &Path, variable: &str, curves: &[LearntCurve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variable_id", "network_id", "x", "y"])?;
    for curve in curves {
        for (x, y) in curve.xs.iter().zip(&curve.ys) {
            w.write_record(&[
                variable.to_string(),
                curve.network_id.to_string(),
                x.to_string(),
                y.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_spread_csv(
    path: &Path,
    variable: &str,
    xs: &[f64],
    spread: &crate::interpret::SpreadReport,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variable_id", "point_index", "x", "spread_percent"])?;
    for (i, (x, s)) in xs.iter().zip(&spread.per_point_spread).enumerate() {
        w.write_record(&[
            variable.to_string(),
            i.to_string(),
            x.to_string(),
            s.to_string(),
        ])?;
    }
    w.write_record(&[
        variable.to_string(),
        "average".to_string(),
        String::new(),
        spread.average_spread.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

fn write_overlay_svg(
    path: &Path,
    variable: &str,
    curves: &[LearntCurve],
    table: &ConditionalMedianTable,
    chosen: &[ArchiveRow],
) -> Result<()> {
    let series: Vec<svg::CurveSeries<'_>> = curves
        .iter()
        .zip(chosen)
        .map(|(c, row)| svg::CurveSeries {
            label: row.model_path.clone(),
            xs: &c.xs,
            ys: &c.ys,
        })
        .collect();
    let mut median_points = Vec::new();
    for bin in 0..table.n_bins() {
        if table.is_valid(bin) {
            let centre = 0.5 * (table.bin_edges[bin] + table.bin_edges[bin + 1]);
            median_points.push((centre, table.bin_median[bin].expect("valid bin")));
        }
    }
    svg::write_curve_chart(
        path,
        &format!("learnt curves vs conditional medians: {variable}"),
        variable,
        "normalized shaft power",
        &series,
        &median_points,
    )
}
