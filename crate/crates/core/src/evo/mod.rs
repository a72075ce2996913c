//! Coevolutionary multi-level GA over the network hyperparameter space.
//!
//! A genome is 10 real genes decoding to a [`crate::nn::NetworkConfig`]:
//! layer count, four per-layer neuron counts, optimizer, activation, l1/l2
//! rate indices and dropout. The population is partitioned into collectives
//! that evolve semi-independently under IBEA or a simplified immune-style
//! selection; every few generations the worst collective is eliminated and
//! reseeded from the best one's elite.

mod engine;
mod operators;
mod selection;

pub use engine::{
    compute_objectives, epochs_schedule, evaluate_genome, evolve, ArchiveEntry, Collective,
    DataContext, Evaluated, EvaluationRecord, EvolveResult, GenerationStat, IndividualAlgorithm,
    ParetoArchive,
};
pub use operators::{de_variation, polynomial_mutation, sbx_crossover, sbx_pair};
pub use selection::{crowding_distances, heia_select_simplified, ibea_select, nondominated_filter};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MeasureId;
use crate::nn::{Activation, NetworkConfig, OptimizerKind, REGULARISATION_RATES};

/// Number of genes.
pub const GENOME_LEN: usize = 10;

/// Real-coded hyperparameter vector.
pub type Genome = [f64; GENOME_LEN];

/// Gene indices.
pub const G_LAYERS: usize = 0;
pub const G_NEURONS: usize = 1; // genes 1..=4
pub const G_OPTIMIZER: usize = 5;
pub const G_ACTIVATION: usize = 6;
pub const G_L1: usize = 7;
pub const G_L2: usize = 8;
pub const G_DROPOUT: usize = 9;

/// Dropout stays strictly below 0.9.
pub const DROPOUT_HI: f64 = 0.9 - 1e-9;

/// Per-gene [lo, hi] box; every operator clips into it and decoding any
/// in-bounds genome yields a valid network config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenomeBounds {
    pub lo: Genome,
    pub hi: Genome,
}

impl GenomeBounds {
    /// Bounds with the given neuron-count cap (1000 at paper scale).
    pub fn new(max_neurons: usize) -> GenomeBounds {
        let mut lo = [0.0; GENOME_LEN];
        let mut hi = [0.0; GENOME_LEN];
        lo[G_LAYERS] = 1.0;
        hi[G_LAYERS] = 4.999;
        for g in G_NEURONS..G_NEURONS + 4 {
            lo[g] = 1.0;
            hi[g] = max_neurons as f64 + 0.999;
        }
        hi[G_OPTIMIZER] = OptimizerKind::ALL.len() as f64 - 0.001;
        hi[G_ACTIVATION] = Activation::ALL.len() as f64 - 0.001;
        hi[G_L1] = REGULARISATION_RATES.len() as f64 - 0.001;
        hi[G_L2] = REGULARISATION_RATES.len() as f64 - 0.001;
        hi[G_DROPOUT] = DROPOUT_HI;
        GenomeBounds { lo, hi }
    }

    pub fn contains(&self, genome: &Genome) -> bool {
        genome
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(g, (lo, hi))| *g >= *lo && *g <= *hi)
    }

    pub fn clip(&self, genome: &mut Genome) {
        for (g, (lo, hi)) in genome.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *g = g.clamp(*lo, *hi);
        }
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> Genome {
        std::array::from_fn(|i| rng.random_range(self.lo[i]..=self.hi[i]))
    }

    /// Genome mapped to [0,1] per gene; used for clustering and distances.
    pub fn normalize(&self, genome: &Genome) -> Genome {
        std::array::from_fn(|i| {
            let span = self.hi[i] - self.lo[i];
            if span > 0.0 {
                (genome[i] - self.lo[i]) / span
            } else {
                0.0
            }
        })
    }
}

/// Decodes a genome to a network configuration. Integer fields floor their
/// gene; l1/l2 map index -> {0, 1e-5, 1e-4, 1e-3, 1e-2}; only the first
/// `layers` neuron genes are used. With the regularisation mask on, l1, l2
/// and dropout are forced to zero.
pub fn decode_genome(
    genome: &Genome,
    regularisation_mask: bool,
    input_dim: usize,
    output_dim: usize,
) -> NetworkConfig {
    let layers = (genome[G_LAYERS].floor() as usize).clamp(1, 4);
    let neurons: Vec<usize> = (0..layers)
        .map(|l| (genome[G_NEURONS + l].floor() as usize).clamp(1, 1000))
        .collect();
    let opt_ix = (genome[G_OPTIMIZER].floor() as usize).min(OptimizerKind::ALL.len() - 1);
    let act_ix = (genome[G_ACTIVATION].floor() as usize).min(Activation::ALL.len() - 1);
    let l1_ix = (genome[G_L1].floor() as usize).min(REGULARISATION_RATES.len() - 1);
    let l2_ix = (genome[G_L2].floor() as usize).min(REGULARISATION_RATES.len() - 1);
    let (l1_rate, l2_rate, dropout_rate) = if regularisation_mask {
        (0.0, 0.0, 0.0)
    } else {
        (
            REGULARISATION_RATES[l1_ix],
            REGULARISATION_RATES[l2_ix],
            genome[G_DROPOUT].clamp(0.0, DROPOUT_HI),
        )
    };
    NetworkConfig {
        hidden_layers: layers,
        neurons_per_layer: neurons,
        activation: Activation::ALL[act_ix],
        optimizer: OptimizerKind::ALL[opt_ix],
        l1_rate,
        l2_rate,
        dropout_rate,
        input_dim,
        output_dim,
    }
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

/// Full GA loop configuration. Defaults are the paper-scale values;
/// desk-scale runs shrink the population, generations, collectives and
/// neuron bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GARunConfig {
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
    pub objective_set: Vec<MeasureId>,
    #[serde(default)]
    pub regularisation_mask: bool,
    /// Upper bound of the per-layer neuron search range.
    #[serde(default = "default_max_neurons")]
    pub max_neurons: usize,
}

impl GARunConfig {
    /// Paper-scale configuration for a given objective set.
    pub fn paper(objective_set: Vec<MeasureId>, regularisation_mask: bool) -> GARunConfig {
        GARunConfig {
            population_size: default_population(),
            generations: default_generations(),
            n_collectives: default_collectives(),
            eliminated_collectives: default_eliminated(),
            elimination_interval: default_interval(),
            elite_fraction: default_elite(),
            crossover_rate: default_crossover(),
            mutation_rate: default_mutation(),
            objective_set,
            regularisation_mask,
            max_neurons: default_max_neurons(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective_set.is_empty() {
            return Err(Error::config("objective_set must be nonempty"));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return Err(Error::config("elite_fraction must be in (0,1)"));
        }
        if self.elimination_interval == 0 {
            return Err(Error::config("elimination_interval must be >= 1"));
        }
        if self.n_collectives < 2 {
            return Err(Error::config("need at least 2 collectives"));
        }
        if self.eliminated_collectives == 0 || self.eliminated_collectives >= self.n_collectives {
            return Err(Error::config(
                "eliminated_collectives must be in [1, n_collectives)",
            ));
        }
        if self.population_size < 2 * self.n_collectives {
            return Err(Error::config(
                "population must give every collective at least 2 members",
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate)
        {
            return Err(Error::config("rates must be in [0,1]"));
        }
        if self.generations == 0 {
            return Err(Error::config("generations must be >= 1"));
        }
        if self.max_neurons == 0 || self.max_neurons > 1000 {
            return Err(Error::config("max_neurons must be in [1,1000]"));
        }
        Ok(())
    }

    pub fn bounds(&self) -> GenomeBounds {
        GenomeBounds::new(self.max_neurons)
    }
}
