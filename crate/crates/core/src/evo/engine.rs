//! The cMLSGA-style generation loop: genome evaluation (decode, train,
//! score), collectives with round-robin IBEA / immune selection, periodic
//! elimination of the worst collective, and a global nondominated archive.
//!
//! Determinism: every evaluation derives its seed from (master seed,
//! generation, collective, slot), so the parallel schedule cannot change
//! results. The worst-case fitness assigned to failed trainings uses the
//! tracker state from the previous generation for the same reason.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, DataSplit, Dataset, SUBSAMPLE_QUOTAS};
use crate::error::{Error, Result};
use crate::metrics::{
    self, ConditionalMedianTable, MeasureId, ObjectiveVector, SweepSpec, DEFAULT_MEDIAN_BINS,
    DEFAULT_MIN_BIN_COUNT, DEFAULT_SWEEP_POINTS,
};
use crate::nn::{init_network, train, NetworkConfig, NetworkModel, TrainingSchedule};
use crate::seeds;

use super::{
    de_variation, decode_genome, heia_select_simplified, ibea_select, polynomial_mutation,
    sbx_crossover, GARunConfig, Genome, GenomeBounds,
};

/// SBX distribution index.
const ETA_C: f64 = 15.0;
/// Polynomial-mutation distribution index.
const ETA_M: f64 = 20.0;
/// DE/rand/1/bin coefficients.
const DE_F: f64 = 0.5;
const DE_CR: f64 = 0.9;
/// IBEA fitness scaling factor.
const IBEA_KAPPA: f64 = 0.05;
/// Fraction of a HEIA collective's offspring budget taken by clones.
const HEIA_CLONE_FRACTION: f64 = 0.5;
/// Worst-case fitness floor before anything has been observed.
const WORST_FLOOR: f64 = 1e3;

mod stream {
    pub const INIT: u64 = 1;
    pub const VARIATION: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const ELIMINATION: u64 = 4;
    pub const KMEANS: u64 = 5;
}

/// Epochs to train a network at a given generation: 1 for the first 15
/// generations, 20 for the final 15, linear in between. Short runs
/// (<= 30 generations) ramp linearly from 1 to 20 across the whole run.
pub fn epochs_schedule(generation: usize, total_generations: usize) -> usize {
    assert!(generation >= 1 && generation <= total_generations);
    if total_generations > 30 {
        if generation <= 15 {
            1
        } else if generation > total_generations - 15 {
            20
        } else {
            let t = (generation - 15) as f64 / (total_generations - 30) as f64;
            (1.0 + 19.0 * t).round() as usize
        }
    } else if total_generations == 1 {
        20
    } else {
        let t = (generation - 1) as f64 / (total_generations - 1) as f64;
        (1.0 + 19.0 * t).round() as usize
    }
}

/// Which individual-level algorithm a collective runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndividualAlgorithm {
    Ibea,
    HeiaSimplified,
}

/// Everything an evaluation needs: normalized data pools, per-variable
/// conditional-median tables and the sweep layout (both from the training
/// pool), and the training schedule template.
pub struct DataContext {
    pub pools: DataSplit,
    pub train_ds: Arc<Dataset>,
    pub val_ds: Arc<Dataset>,
    pub test_ds: Arc<Dataset>,
    pub tables: Vec<ConditionalMedianTable>,
    pub sweep: SweepSpec,
    pub schedule: TrainingSchedule,
}

impl DataContext {
    pub fn new(pools: DataSplit, schedule: TrainingSchedule) -> Result<DataContext> {
        if pools.train.is_empty() || pools.validation.is_empty() || pools.test.is_empty() {
            return Err(Error::data("all three data pools must be nonempty"));
        }
        let train_ds = Arc::new(Dataset::from_records(&pools.train));
        let val_ds = Arc::new(Dataset::from_records(&pools.validation));
        let test_ds = Arc::new(Dataset::from_records(&pools.test));
        let tables =
            metrics::tables_for_dataset(&train_ds, DEFAULT_MEDIAN_BINS, DEFAULT_MIN_BIN_COUNT)?;
        let sweep = crate::interpret::sweep_for_dataset(&train_ds, DEFAULT_SWEEP_POINTS)?;
        Ok(DataContext {
            pools,
            train_ds,
            val_ds,
            test_ds,
            tables,
            sweep,
            schedule,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.train_ds.dim()
    }
}

/// Objective values for a trained model: relative errors on the test
/// sample, MFME against the training pool's conditional medians.
pub fn compute_objectives(
    measures: &[MeasureId],
    model: &NetworkModel,
    test: &Dataset,
    ctx: &DataContext,
) -> Result<Vec<f64>> {
    let predictions = model.predict(test.rows_flat(), test.len())?;
    let mut cache: [Option<f64>; 4] = [None; 4];
    let mut values = Vec::with_capacity(measures.len());
    for &m in measures {
        let slot = m as usize;
        let value = match cache[slot] {
            Some(v) => v,
            None => {
                let v = match m {
                    MeasureId::Mare => {
                        metrics::mean_absolute_relative_error(&predictions, test.targets())?
                    }
                    MeasureId::MaxAre => {
                        metrics::max_absolute_relative_error(&predictions, test.targets())?
                    }
                    MeasureId::Mae => metrics::minkowski_error(&predictions, test.targets(), 1.0)?,
                    MeasureId::Mfme => {
                        let predict =
                            |input: &[f64]| model.predict_one(input).expect("finite sweep input");
                        metrics::mean_fit_to_median_error(
                            &predict,
                            &ctx.train_ds,
                            &ctx.tables,
                            &ctx.sweep,
                        )?
                    }
                };
                cache[slot] = Some(v);
                v
            }
        };
        values.push(value);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite objective value"));
    }
    Ok(values)
}

/// Outcome of evaluating one genome.
pub struct Evaluated {
    pub genome: Genome,
    pub config: NetworkConfig,
    pub objectives: ObjectiveVector,
    pub model: Arc<NetworkModel>,
    pub diverged: bool,
}

/// Decodes, trains on the per-individual subsample with the generation's
/// epoch budget, and scores on the test sample. A diverged or unscorable
/// training gets the supplied worst-case objective vector.
pub fn evaluate_genome(
    genome: &Genome,
    ctx: &DataContext,
    generation: usize,
    run_config: &GARunConfig,
    eval_seed: u64,
    worst_case: &[f64],
) -> Evaluated {
    let config = decode_genome(genome, run_config.regularisation_mask, ctx.input_dim(), 1);
    let (q_train, q_val, q_test) = SUBSAMPLE_QUOTAS;
    let mut sample_rng = seeds::rng(eval_seed, &[0]);
    let train_set = sampled(&ctx.pools.train, &ctx.train_ds, q_train, &mut sample_rng);
    let val_set = sampled(&ctx.pools.validation, &ctx.val_ds, q_val, &mut sample_rng);
    let test_set = sampled(&ctx.pools.test, &ctx.test_ds, q_test, &mut sample_rng);

    let schedule = TrainingSchedule {
        max_epochs: epochs_schedule(generation, run_config.generations),
        ..ctx.schedule.clone()
    };
    let model_seed = seeds::derive(eval_seed, &[1]);
    let model = init_network(&config, model_seed);

    let (model, history) = match train(model, &train_set, &val_set, &schedule) {
        Ok(done) => done,
        Err(_) => {
            let fallback = Arc::new(init_network(&config, model_seed));
            return Evaluated {
                genome: *genome,
                config,
                objectives: ObjectiveVector::new(
                    run_config.objective_set.clone(),
                    worst_case.to_vec(),
                ),
                model: fallback,
                diverged: true,
            };
        }
    };
    let model = Arc::new(model);

    let objectives = if history.diverged {
        None
    } else {
        compute_objectives(&run_config.objective_set, &model, &test_set, ctx).ok()
    };
    match objectives {
        Some(values) => Evaluated {
            genome: *genome,
            config,
            objectives: ObjectiveVector::new(run_config.objective_set.clone(), values),
            model,
            diverged: false,
        },
        None => Evaluated {
            genome: *genome,
            config,
            objectives: ObjectiveVector::new(run_config.objective_set.clone(), worst_case.to_vec()),
            model,
            diverged: true,
        },
    }
}

fn sampled(
    pool: &[data::Record],
    cached: &Arc<Dataset>,
    quota: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Arc<Dataset> {
    if pool.len() <= quota {
        Arc::clone(cached)
    } else {
        let records = data::sample_without_replacement(pool, quota, rng);
        Arc::new(Dataset::from_records(&records))
    }
}

/// One member of a collective: genome plus its most recent evaluation.
#[derive(Debug, Clone)]
struct Individual {
    genome: Genome,
    objectives: ObjectiveVector,
}

/// A subpopulation evolving under one individual-level algorithm.
pub struct Collective {
    pub id: usize,
    pub algorithm: IndividualAlgorithm,
    /// Higher is better; refreshed at elimination events.
    pub collective_fitness: f64,
    members: Vec<Individual>,
}

impl Collective {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn member_values(&self) -> Vec<Vec<f64>> {
        self.members
            .iter()
            .map(|m| m.objectives.values.clone())
            .collect()
    }
}

/// One nondominated evaluation retained globally.
#[derive(Debug, Clone)]
pub struct ArchiveEntry {
    pub genome: Genome,
    pub objectives: ObjectiveVector,
    pub model: Arc<NetworkModel>,
    pub generation: usize,
}

/// Unbounded nondominated archive (minimisation). Entries with identical
/// objective vectors coexist; dominated entries are evicted on insert.
#[derive(Default)]
pub struct ParetoArchive {
    entries: Vec<ArchiveEntry>,
}

impl ParetoArchive {
    pub fn insert(&mut self, entry: ArchiveEntry) {
        if self
            .entries
            .iter()
            .any(|e| e.objectives.dominates(&entry.objectives))
        {
            return;
        }
        self.entries
            .retain(|e| !entry.objectives.dominates(&e.objectives));
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-generation, per-collective summary row.
#[derive(Debug, Clone)]
pub struct GenerationStat {
    pub generation: usize,
    pub collective_id: usize,
    /// Minimum of each objective over the collective's members.
    pub best: Vec<f64>,
    pub mean: Vec<f64>,
    pub epochs: usize,
    pub eliminated: bool,
}

/// Per-evaluation log row; the report's architecture and regularisation
/// histograms are built from these.
#[derive(Debug, Clone)]
pub struct EvaluationRecord {
    pub generation: usize,
    pub collective_id: usize,
    pub config: NetworkConfig,
    pub objectives: ObjectiveVector,
    pub diverged: bool,
}

pub struct EvolveResult {
    pub archive: ParetoArchive,
    pub history: Vec<GenerationStat>,
    pub evaluations: Vec<EvaluationRecord>,
}

/// Tracks the worst observed value per objective; failed evaluations are
/// assigned 10x these values.
struct WorstTracker {
    values: Vec<f64>,
}

impl WorstTracker {
    fn new(n_objectives: usize) -> WorstTracker {
        WorstTracker {
            values: vec![WORST_FLOOR; n_objectives],
        }
    }

    fn worst_case(&self) -> Vec<f64> {
        self.values.iter().map(|v| 10.0 * v).collect()
    }

    fn update(&mut self, observed: &ObjectiveVector) {
        for (w, v) in self.values.iter_mut().zip(&observed.values) {
            *w = w.max(*v);
        }
    }
}

/// Runs the full collective GA loop. `workers` bounds the evaluation
/// thread pool (0 uses all cores); it never affects results.
pub fn evolve(
    run_config: &GARunConfig,
    ctx: &DataContext,
    master_seed: u64,
    workers: usize,
) -> Result<EvolveResult> {
    run_config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| evolve_inner(run_config, ctx, master_seed))
}

fn evolve_inner(
    run_config: &GARunConfig,
    ctx: &DataContext,
    master_seed: u64,
) -> Result<EvolveResult> {
    let bounds = run_config.bounds();
    let n = run_config.population_size;
    let k = run_config.n_collectives;
    let total_generations = run_config.generations;
    let n_objectives = run_config.objective_set.len();

    // Fixed collective sizes: remainder spread over the first collectives.
    let sizes: Vec<usize> = (0..k).map(|c| n / k + usize::from(c < n % k)).collect();

    let mut archive = ParetoArchive::default();
    let mut history: Vec<GenerationStat> = Vec::new();
    let mut evaluations: Vec<EvaluationRecord> = Vec::new();
    let mut tracker = WorstTracker::new(n_objectives);

    // Generation 1: uniform initial population, clustered into collectives.
    let mut init_rng = seeds::rng(master_seed, &[stream::INIT]);
    let genomes: Vec<Genome> = (0..n).map(|_| bounds.sample(&mut init_rng)).collect();
    let groups = partition_balanced_kmeans(&genomes, &bounds, &sizes, master_seed);

    let mut collectives: Vec<Collective> = Vec::with_capacity(k);
    let mut init_jobs: Vec<(usize, usize, Genome)> = Vec::with_capacity(n);
    for (c, group) in groups.iter().enumerate() {
        let algorithm = if c % 2 == 0 {
            IndividualAlgorithm::Ibea
        } else {
            IndividualAlgorithm::HeiaSimplified
        };
        collectives.push(Collective {
            id: c,
            algorithm,
            collective_fitness: 0.0,
            members: Vec::with_capacity(group.len()),
        });
        for (slot, &ix) in group.iter().enumerate() {
            init_jobs.push((c, slot, genomes[ix]));
        }
    }
    for (c, evaluated) in evaluate_flat(&init_jobs, ctx, 1, run_config, master_seed, &tracker) {
        absorb(
            vec![evaluated],
            &mut collectives[c],
            &mut archive,
            &mut evaluations,
            1,
        );
    }
    for tr in collectives.iter().flat_map(|c| &c.members) {
        tracker.update(&tr.objectives);
    }
    push_history(&mut history, &collectives, 1, total_generations, &[]);

    // Generations 2..=G: variation, evaluation, survivor selection,
    // periodic elimination.
    for generation in 2..=total_generations {
        let mut new_evals: Vec<ObjectiveVector> = Vec::new();
        let mut jobs: Vec<(usize, usize, Genome)> = Vec::with_capacity(n);
        for (c, collective) in collectives.iter().enumerate() {
            let offspring =
                make_offspring(collective, run_config, &bounds, master_seed, generation);
            for (slot, genome) in offspring.into_iter().enumerate() {
                jobs.push((c, slot, genome));
            }
        }
        for (c, evaluated) in
            evaluate_flat(&jobs, ctx, generation, run_config, master_seed, &tracker)
        {
            new_evals.push(evaluated.objectives.clone());
            absorb(
                vec![evaluated],
                &mut collectives[c],
                &mut archive,
                &mut evaluations,
                generation,
            );
        }
        for c in 0..k {
            select_survivors(&mut collectives[c], sizes[c]);
        }

        let mut eliminated_ids: Vec<usize> = Vec::new();
        if generation % run_config.elimination_interval == 0 {
            eliminated_ids = eliminate_and_reseed(
                &mut collectives,
                run_config,
                ctx,
                &bounds,
                master_seed,
                generation,
                &mut archive,
                &mut evaluations,
                &mut new_evals,
                &tracker,
            );
        }

        for o in &new_evals {
            tracker.update(o);
        }
        push_history(
            &mut history,
            &collectives,
            generation,
            total_generations,
            &eliminated_ids,
        );
    }

    Ok(EvolveResult {
        archive,
        history,
        evaluations,
    })
}

/// Evaluates (collective, slot, genome) jobs in parallel across the whole
/// generation; results keep job order and their seeds depend only on
/// (master seed, generation, collective, slot).
fn evaluate_flat(
    jobs: &[(usize, usize, Genome)],
    ctx: &DataContext,
    generation: usize,
    run_config: &GARunConfig,
    master_seed: u64,
    tracker: &WorstTracker,
) -> Vec<(usize, Evaluated)> {
    let worst_case = tracker.worst_case();

    // Schedule the most expensive trainings first so a late big network
    // cannot leave cores idle at the end of the generation. This is pure
    // scheduling: seeds depend only on (generation, collective, slot) and
    // the results are re-sorted into job order.
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    let cost = |genome: &Genome| -> u64 {
        let config = decode_genome(genome, run_config.regularisation_mask, ctx.input_dim(), 1);
        config
            .layer_dims()
            .windows(2)
            .map(|w| (w[0] * w[1]) as u64)
            .sum()
    };
    order.sort_by_key(|&i| std::cmp::Reverse(cost(&jobs[i].2)));

    let mut evaluated: Vec<(usize, Option<(usize, Evaluated)>)> = order
        .par_iter()
        .with_max_len(1)
        .map(|&i| {
            let (collective_id, slot, genome) = &jobs[i];
            let eval_seed = seeds::derive(
                master_seed,
                &[
                    stream::EVAL,
                    generation as u64,
                    *collective_id as u64,
                    *slot as u64,
                ],
            );
            (
                i,
                Some((
                    *collective_id,
                    evaluate_genome(genome, ctx, generation, run_config, eval_seed, &worst_case),
                )),
            )
        })
        .collect();
    evaluated.sort_by_key(|(i, _)| *i);
    evaluated
        .into_iter()
        .map(|(_, r)| r.expect("evaluated"))
        .collect()
}

/// Moves evaluated offspring into the collective, the archive and the log.
fn absorb(
    evaluated: Vec<Evaluated>,
    collective: &mut Collective,
    archive: &mut ParetoArchive,
    evaluations: &mut Vec<EvaluationRecord>,
    generation: usize,
) {
    for e in evaluated {
        archive.insert(ArchiveEntry {
            genome: e.genome,
            objectives: e.objectives.clone(),
            model: Arc::clone(&e.model),
            generation,
        });
        evaluations.push(EvaluationRecord {
            generation,
            collective_id: collective.id,
            config: e.config,
            objectives: e.objectives.clone(),
            diverged: e.diverged,
        });
        collective.members.push(Individual {
            genome: e.genome,
            objectives: e.objectives,
        });
    }
}

/// Builds a collective's offspring genomes for one generation. HEIA
/// collectives spend half their budget on hypermutated clones of the
/// nondominated front and choose SBX or DE per remaining offspring with
/// probability 1/2; IBEA collectives use SBX throughout.
fn make_offspring(
    collective: &Collective,
    run_config: &GARunConfig,
    bounds: &GenomeBounds,
    master_seed: u64,
    generation: usize,
) -> Vec<Genome> {
    let size = collective.len();
    let mut rng = seeds::rng(
        master_seed,
        &[stream::VARIATION, generation as u64, collective.id as u64],
    );
    let members = &collective.members;
    let mut offspring: Vec<Genome> = Vec::with_capacity(size);

    if collective.algorithm == IndividualAlgorithm::HeiaSimplified {
        let clone_budget = ((size as f64 * HEIA_CLONE_FRACTION).floor() as usize).min(size);
        let (_, clone_sources) =
            heia_select_simplified(&collective.member_values(), size, clone_budget);
        for source in clone_sources {
            let mut clone = members[source].genome;
            polynomial_mutation(
                &mut clone,
                (2.0 * run_config.mutation_rate).min(1.0),
                ETA_M,
                bounds,
                &mut rng,
            );
            offspring.push(clone);
        }
    }

    while offspring.len() < size {
        if rng.random::<f64>() >= run_config.crossover_rate {
            // Crossover skipped: mutate a copy of one parent.
            let mut child = members[rng.random_range(0..size)].genome;
            polynomial_mutation(
                &mut child,
                run_config.mutation_rate,
                ETA_M,
                bounds,
                &mut rng,
            );
            offspring.push(child);
            continue;
        }
        let use_de = collective.algorithm == IndividualAlgorithm::HeiaSimplified
            && size >= 4
            && rng.random::<f64>() < 0.5;
        if use_de {
            let mut picks = [0usize; 4];
            picks[0] = rng.random_range(0..size);
            for slot in 1..4 {
                loop {
                    let cand = rng.random_range(0..size);
                    if !picks[..slot].contains(&cand) {
                        picks[slot] = cand;
                        break;
                    }
                }
            }
            let mut child = de_variation(
                &members[picks[0]].genome,
                &members[picks[1]].genome,
                &members[picks[2]].genome,
                &members[picks[3]].genome,
                DE_F,
                DE_CR,
                bounds,
                &mut rng,
            );
            polynomial_mutation(
                &mut child,
                run_config.mutation_rate,
                ETA_M,
                bounds,
                &mut rng,
            );
            offspring.push(child);
        } else {
            let p1 = rng.random_range(0..size);
            let p2 = if size > 1 {
                loop {
                    let cand = rng.random_range(0..size);
                    if cand != p1 {
                        break cand;
                    }
                }
            } else {
                p1
            };
            let (mut c1, mut c2) = sbx_crossover(
                &members[p1].genome,
                &members[p2].genome,
                ETA_C,
                bounds,
                &mut rng,
            );
            polynomial_mutation(&mut c1, run_config.mutation_rate, ETA_M, bounds, &mut rng);
            offspring.push(c1);
            if offspring.len() < size {
                polynomial_mutation(&mut c2, run_config.mutation_rate, ETA_M, bounds, &mut rng);
                offspring.push(c2);
            }
        }
    }
    offspring
}

/// Shrinks a collective (members + absorbed offspring) back to its fixed
/// size with its own algorithm.
fn select_survivors(collective: &mut Collective, size: usize) {
    let values = collective.member_values();
    let keep: Vec<usize> = match collective.algorithm {
        IndividualAlgorithm::Ibea => ibea_select(&values, IBEA_KAPPA, size),
        IndividualAlgorithm::HeiaSimplified => heia_select_simplified(&values, size, 0).0,
    };
    let mut kept = Vec::with_capacity(size);
    for ix in keep {
        kept.push(collective.members[ix].clone());
    }
    collective.members = kept;
}

/// Min-max-normalized objective sums per member, grouped by collective.
fn normalized_scores(collectives: &[Collective]) -> Vec<Vec<f64>> {
    let all: Vec<Vec<f64>> = collectives.iter().flat_map(|c| c.member_values()).collect();
    if all.is_empty() {
        return vec![Vec::new(); collectives.len()];
    }
    let n_obj = all[0].len();
    let mut lo = vec![f64::INFINITY; n_obj];
    let mut hi = vec![f64::NEG_INFINITY; n_obj];
    for v in &all {
        for m in 0..n_obj {
            lo[m] = lo[m].min(v[m]);
            hi[m] = hi[m].max(v[m]);
        }
    }
    let score = |values: &[f64]| -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(m, &v)| {
                let span = hi[m] - lo[m];
                if span > 0.0 {
                    (v - lo[m]) / span
                } else {
                    0.0
                }
            })
            .sum()
    };
    collectives
        .iter()
        .map(|c| {
            c.members
                .iter()
                .map(|i| score(&i.objectives.values))
                .collect()
        })
        .collect()
}

/// Deletes the worst collective(s) (lowest collective fitness = highest
/// mean normalized objective sum) and reseeds each with the best
/// collective's elite plus fresh random genomes, evaluated immediately.
#[allow(clippy::too_many_arguments)]
fn eliminate_and_reseed(
    collectives: &mut [Collective],
    run_config: &GARunConfig,
    ctx: &DataContext,
    bounds: &GenomeBounds,
    master_seed: u64,
    generation: usize,
    archive: &mut ParetoArchive,
    evaluations: &mut Vec<EvaluationRecord>,
    new_evals: &mut Vec<ObjectiveVector>,
    tracker: &WorstTracker,
) -> Vec<usize> {
    let scores = normalized_scores(collectives);
    for (c, member_scores) in scores.iter().enumerate() {
        let mean = member_scores.iter().sum::<f64>() / member_scores.len().max(1) as f64;
        collectives[c].collective_fitness = -mean;
    }

    let mut order: Vec<usize> = (0..collectives.len()).collect();
    order.sort_by(|&a, &b| {
        collectives[a]
            .collective_fitness
            .partial_cmp(&collectives[b].collective_fitness)
            .expect("finite fitness")
            .then(a.cmp(&b))
    });
    let eliminated: Vec<usize> = order[..run_config.eliminated_collectives].to_vec();
    let best = *order.last().expect("at least one collective");

    // Elite of the best collective, ranked by normalized score (ascending).
    let mut best_rank: Vec<usize> = (0..collectives[best].len()).collect();
    best_rank.sort_by(|&a, &b| {
        scores[best][a]
            .partial_cmp(&scores[best][b])
            .expect("finite score")
            .then(a.cmp(&b))
    });

    let mut fresh: Vec<(usize, usize, Genome)> = Vec::new();
    for &victim in &eliminated {
        let size = collectives[victim].len();
        let n_elite = ((run_config.elite_fraction * size as f64).ceil() as usize)
            .clamp(1, collectives[best].len().min(size));
        let elite: Vec<Individual> = best_rank[..n_elite]
            .iter()
            .map(|&ix| collectives[best].members[ix].clone())
            .collect();

        let mut rng = seeds::rng(
            master_seed,
            &[stream::ELIMINATION, generation as u64, victim as u64],
        );
        for slot in 0..size - n_elite {
            fresh.push((victim, slot, bounds.sample(&mut rng)));
        }
        collectives[victim].members = elite;
    }

    let replacement_stream = seeds::derive(master_seed, &[stream::ELIMINATION]);
    for (victim, evaluated) in evaluate_flat(
        &fresh,
        ctx,
        generation,
        run_config,
        replacement_stream,
        tracker,
    ) {
        new_evals.push(evaluated.objectives.clone());
        absorb(
            vec![evaluated],
            &mut collectives[victim],
            archive,
            evaluations,
            generation,
        );
    }
    eliminated
}

fn push_history(
    history: &mut Vec<GenerationStat>,
    collectives: &[Collective],
    generation: usize,
    total_generations: usize,
    eliminated: &[usize],
) {
    let epochs = epochs_schedule(generation, total_generations);
    for c in collectives {
        let n_obj = c.members.first().map_or(0, |m| m.objectives.len());
        let mut best = vec![f64::INFINITY; n_obj];
        let mut mean = vec![0.0; n_obj];
        for member in &c.members {
            for (m, &v) in member.objectives.values.iter().enumerate() {
                best[m] = best[m].min(v);
                mean[m] += v;
            }
        }
        for v in mean.iter_mut() {
            *v /= c.members.len().max(1) as f64;
        }
        history.push(GenerationStat {
            generation,
            collective_id: c.id,
            best,
            mean,
            epochs,
            eliminated: eliminated.contains(&c.id),
        });
    }
}

/// Balanced k-means on bounds-normalized genomes: k-means++ seeding, a few
/// Lloyd iterations, then capacity-constrained nearest-centroid assignment
/// so every collective gets its fixed size.
fn partition_balanced_kmeans(
    genomes: &[Genome],
    bounds: &GenomeBounds,
    sizes: &[usize],
    master_seed: u64,
) -> Vec<Vec<usize>> {
    let k = sizes.len();
    let unit: Vec<Genome> = genomes.iter().map(|g| bounds.normalize(g)).collect();
    let mut rng = seeds::rng(master_seed, &[stream::KMEANS]);

    let dist2 =
        |a: &Genome, b: &Genome| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };

    // k-means++ seeding.
    let mut centroids: Vec<Genome> = Vec::with_capacity(k);
    centroids.push(unit[rng.random_range(0..unit.len())]);
    while centroids.len() < k {
        let weights: Vec<f64> = unit
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| dist2(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = unit.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..unit.len())
        };
        centroids.push(unit[pick]);
    }

    // Lloyd iterations.
    for _ in 0..20 {
        let assignment: Vec<usize> = unit
            .iter()
            .map(|p| {
                (0..k)
                    .min_by(|&a, &b| {
                        dist2(p, &centroids[a])
                            .partial_cmp(&dist2(p, &centroids[b]))
                            .expect("finite distance")
                    })
                    .expect("k >= 1")
            })
            .collect();
        let mut sums = vec![[0.0; super::GENOME_LEN]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in unit.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = std::array::from_fn(|i| sums[c][i] / counts[c] as f64);
            }
        }
    }

    // Capacity-constrained assignment in index order.
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, p) in unit.iter().enumerate() {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            dist2(p, &centroids[a])
                .partial_cmp(&dist2(p, &centroids[b]))
                .expect("finite distance")
                .then(a.cmp(&b))
        });
        for c in order {
            if groups[c].len() < sizes[c] {
                groups[c].push(i);
                break;
            }
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Record, SystemStatus};

    #[test]
    fn epochs_schedule_endpoints_and_interpolation() {
        assert_eq!(epochs_schedule(1, 300), 1);
        assert_eq!(epochs_schedule(15, 300), 1);
        assert_eq!(epochs_schedule(286, 300), 20);
        assert_eq!(epochs_schedule(300, 300), 20);
        assert_eq!(epochs_schedule(157, 300), 11);
        let mut last = 0;
        for g in 1..=300 {
            let e = epochs_schedule(g, 300);
            assert!(e >= last);
            last = e;
        }
        assert!((1..=20).contains(&last));
    }

    #[test]
    fn epochs_schedule_short_run_ramp() {
        assert_eq!(epochs_schedule(1, 30), 1);
        assert_eq!(epochs_schedule(30, 30), 20);
        assert_eq!(epochs_schedule(1, 10), 1);
        assert_eq!(epochs_schedule(10, 10), 20);
        let mut last = 0;
        for g in 1..=10 {
            let e = epochs_schedule(g, 10);
            assert!(e >= last);
            last = e;
        }
    }

    pub(crate) fn tiny_pools(n: usize, seed: u64) -> DataSplit {
        // Small synthetic-ish pools with informative structure.
        let mut rng = crate::seeds::rng(seed, &[0xaa]);
        use rand::Rng;
        let records: Vec<Record> = (0..n)
            .map(|_| {
                let speed: f64 = rng.random_range(8.0..22.0);
                let wind: f64 = rng.random_range(0.0..15.0);
                let power = 0.1
                    + 0.8 * ((speed - 8.0) / 14.0).powi(3)
                    + rng.random_range(-0.02..0.02)
                    + 0.01 * wind / 15.0;
                Record {
                    speed_through_water: speed,
                    relative_wind_speed: wind,
                    relative_wind_direction: rng.random_range(0.0..360.0),
                    draught: rng.random_range(9.0..13.0),
                    trim: rng.random_range(-1.0..1.0),
                    shaft_power: power.clamp(0.06, 1.0),
                    system_status: SystemStatus::Off,
                }
            })
            .collect();
        let (normalized, _) = crate::data::normalize(&records).unwrap();
        crate::data::split(&normalized, seed).unwrap()
    }

    pub(crate) fn tiny_context(n: usize, seed: u64) -> DataContext {
        DataContext::new(
            tiny_pools(n, seed),
            TrainingSchedule {
                batch_size: 32,
                ..TrainingSchedule::default()
            },
        )
        .unwrap()
    }

    fn tiny_config(objectives: Vec<MeasureId>, mask: bool) -> GARunConfig {
        GARunConfig {
            population_size: 8,
            generations: 4,
            n_collectives: 2,
            eliminated_collectives: 1,
            elimination_interval: 2,
            elite_fraction: 0.25,
            crossover_rate: 1.0,
            mutation_rate: 0.08,
            objective_set: objectives,
            regularisation_mask: mask,
            max_neurons: 8,
        }
    }

    #[test]
    fn evaluate_genome_is_deterministic() {
        let ctx = tiny_context(400, 3);
        let config = tiny_config(vec![MeasureId::Mfme, MeasureId::Mare], true);
        let bounds = config.bounds();
        let genome = bounds.sample(&mut crate::seeds::rng(1, &[2]));
        let worst = vec![1e4, 1e4];
        let a = evaluate_genome(&genome, &ctx, 2, &config, 77, &worst);
        let b = evaluate_genome(&genome, &ctx, 2, &config, 77, &worst);
        assert_eq!(a.objectives, b.objectives);
        assert_eq!(a.model.layers, b.model.layers);
        // Objective order matches the configured set.
        assert_eq!(
            a.objectives.measures,
            vec![MeasureId::Mfme, MeasureId::Mare]
        );
    }

    #[test]
    fn compute_objectives_zero_for_perfect_constant_predictor() {
        // Constant-target pools: a bias-only network predicting the constant
        // exactly scores zero MARE/MaxARE and zero MFME.
        let records: Vec<Record> = (0..200)
            .map(|i| Record {
                speed_through_water: 8.0 + (i % 100) as f64 * 0.14,
                relative_wind_speed: 5.0,
                relative_wind_direction: 90.0,
                draught: 11.0,
                trim: 0.0,
                shaft_power: 0.5,
                system_status: SystemStatus::Off,
            })
            .collect();
        let split = crate::data::split(&records, 1).unwrap();
        let ctx = DataContext::new(split, TrainingSchedule::default()).unwrap();
        let config = crate::nn::NetworkConfig {
            hidden_layers: 1,
            neurons_per_layer: vec![2],
            activation: crate::nn::Activation::Tanh,
            optimizer: crate::nn::OptimizerKind::Adam,
            l1_rate: 0.0,
            l2_rate: 0.0,
            dropout_rate: 0.0,
            input_dim: 5,
            output_dim: 1,
        };
        let mut model = init_network(&config, 1);
        for layer in &mut model.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        model.layers.last_mut().unwrap().biases[0] = 0.5;
        let values = compute_objectives(
            &[MeasureId::Mare, MeasureId::MaxAre, MeasureId::Mfme],
            &model,
            &ctx.test_ds,
            &ctx,
        )
        .unwrap();
        assert!(values.iter().all(|v| v.abs() < 1e-9), "{values:?}");
    }

    #[test]
    fn evolve_keeps_population_and_collective_sizes() {
        let ctx = tiny_context(400, 5);
        let config = tiny_config(vec![MeasureId::Mare, MeasureId::MaxAre], true);
        let result = evolve(&config, &ctx, 11, 2).unwrap();
        // History rows exist for every (generation, collective).
        assert_eq!(
            result.history.len(),
            config.generations * config.n_collectives
        );
        // Eliminations at the configured interval.
        for stat in &result.history {
            let any_eliminated = stat.eliminated;
            if any_eliminated {
                assert_eq!(stat.generation % config.elimination_interval, 0);
            }
        }
        let elim_gens: std::collections::BTreeSet<usize> = result
            .history
            .iter()
            .filter(|s| s.eliminated)
            .map(|s| s.generation)
            .collect();
        assert_eq!(elim_gens, [2usize, 4].into_iter().collect());
        // Exactly one collective eliminated per event.
        for g in elim_gens {
            assert_eq!(
                result
                    .history
                    .iter()
                    .filter(|s| s.generation == g && s.eliminated)
                    .count(),
                1
            );
        }
    }

    #[test]
    fn evolve_archive_is_nondominated_and_reproducible() {
        let ctx = tiny_context(400, 7);
        let config = tiny_config(vec![MeasureId::Mare, MeasureId::MaxAre], true);
        let a = evolve(&config, &ctx, 42, 2).unwrap();
        let b = evolve(&config, &ctx, 42, 1).unwrap();

        // Brute-force dominance check over the archive.
        let entries = a.archive.entries();
        for (i, x) in entries.iter().enumerate() {
            for (j, y) in entries.iter().enumerate() {
                if i != j {
                    assert!(!x.objectives.dominates(&y.objectives));
                }
            }
        }
        // Worker count does not change results.
        assert_eq!(a.archive.len(), b.archive.len());
        for (x, y) in a.archive.entries().iter().zip(b.archive.entries()) {
            assert_eq!(x.genome, y.genome);
            assert_eq!(x.objectives, y.objectives);
        }
        // Archive against all evaluations: no logged evaluation dominates
        // an archive member.
        for e in &a.evaluations {
            for entry in a.archive.entries() {
                assert!(!e.objectives.dominates(&entry.objectives));
            }
        }
    }

    #[test]
    fn evolve_mask_zeroes_regularisation_everywhere() {
        let ctx = tiny_context(400, 9);
        let config = tiny_config(vec![MeasureId::Mare, MeasureId::Mare], true);
        let result = evolve(&config, &ctx, 4, 2).unwrap();
        assert!(!result.evaluations.is_empty());
        for e in &result.evaluations {
            assert_eq!(e.config.l1_rate, 0.0);
            assert_eq!(e.config.l2_rate, 0.0);
            assert_eq!(e.config.dropout_rate, 0.0);
        }
    }

    #[test]
    fn degenerate_single_objective_archive_collapses_to_scalar_best() {
        let ctx = tiny_context(400, 13);
        let config = tiny_config(vec![MeasureId::Mare, MeasureId::Mare], true);
        let result = evolve(&config, &ctx, 10, 2).unwrap();
        for e in result.archive.entries() {
            assert_eq!(e.objectives.values[0], e.objectives.values[1]);
        }
        let mut distinct: Vec<f64> = result
            .archive
            .entries()
            .iter()
            .map(|e| e.objectives.values[0])
            .collect();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        assert_eq!(distinct.len(), 1, "degenerate archive holds one value");
    }

    #[test]
    fn pareto_archive_insert_maintains_invariant() {
        let mut archive = ParetoArchive::default();
        let model = Arc::new(init_network(&crate::nn::tests::small_config(), 0));
        let mk = |a: f64, b: f64| ArchiveEntry {
            genome: [0.0; super::super::GENOME_LEN],
            objectives: ObjectiveVector::new(vec![MeasureId::Mare, MeasureId::MaxAre], vec![a, b]),
            model: Arc::clone(&model),
            generation: 1,
        };
        archive.insert(mk(2.0, 2.0));
        archive.insert(mk(1.0, 3.0));
        assert_eq!(archive.len(), 2);
        archive.insert(mk(1.0, 2.0)); // dominates (2,2) and (1,3)
        assert_eq!(archive.len(), 1);
        archive.insert(mk(5.0, 5.0)); // dominated: rejected
        assert_eq!(archive.len(), 1);
        archive.insert(mk(1.0, 2.0)); // duplicate coexists
        assert_eq!(archive.len(), 2);
    }

    #[test]
    fn kmeans_partition_is_balanced_and_deterministic() {
        let bounds = GenomeBounds::new(64);
        let mut rng = crate::seeds::rng(2, &[0x4b]);
        let genomes: Vec<Genome> = (0..40).map(|_| bounds.sample(&mut rng)).collect();
        let sizes = vec![10, 10, 10, 10];
        let a = partition_balanced_kmeans(&genomes, &bounds, &sizes, 3);
        let b = partition_balanced_kmeans(&genomes, &bounds, &sizes, 3);
        assert_eq!(a, b);
        let mut seen: Vec<usize> = a.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..40).collect::<Vec<_>>());
        for (group, &target) in a.iter().zip(&sizes) {
            assert_eq!(group.len(), target);
        }
    }
}
