//! Real-coded variation operators: simulated binary crossover, DE/rand/1/bin
//! and bounded polynomial mutation. Children are always clipped into the
//! gene box.

use rand::Rng;

use super::{Genome, GenomeBounds};

/// SBX blend of one gene pair for a given spread factor beta.
pub fn sbx_pair(p1: f64, p2: f64, beta: f64) -> (f64, f64) {
    (
        0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2),
        0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2),
    )
}

fn sbx_beta(u: f64, eta_c: f64) -> f64 {
    if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta_c + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta_c + 1.0))
    }
}

/// Simulated binary crossover: each gene is blended with probability 1/2
/// using a spread factor drawn from the eta_c polynomial distribution,
/// otherwise copied.
pub fn sbx_crossover(
    p1: &Genome,
    p2: &Genome,
    eta_c: f64,
    bounds: &GenomeBounds,
    rng: &mut impl Rng,
) -> (Genome, Genome) {
    let mut c1 = *p1;
    let mut c2 = *p2;
    for g in 0..c1.len() {
        // Coinciding genes pass through untouched.
        if rng.random::<f64>() < 0.5 && p1[g] != p2[g] {
            let beta = sbx_beta(rng.random::<f64>(), eta_c);
            let (a, b) = sbx_pair(p1[g], p2[g], beta);
            c1[g] = a;
            c2[g] = b;
        }
    }
    bounds.clip(&mut c1);
    bounds.clip(&mut c2);
    (c1, c2)
}

/// DE/rand/1/bin: mutant = a + F (b - c), binomially crossed with the
/// target at rate CR with one gene guaranteed from the mutant.
#[allow(clippy::too_many_arguments)]
pub fn de_variation(
    target: &Genome,
    a: &Genome,
    b: &Genome,
    c: &Genome,
    f: f64,
    cr: f64,
    bounds: &GenomeBounds,
    rng: &mut impl Rng,
) -> Genome {
    let forced = rng.random_range(0..target.len());
    let mut trial = *target;
    for g in 0..trial.len() {
        if g == forced || rng.random::<f64>() < cr {
            trial[g] = a[g] + f * (b[g] - c[g]);
        }
    }
    bounds.clip(&mut trial);
    trial
}

/// Bounded polynomial mutation: each gene independently perturbed with the
/// given probability using the eta_m distribution, staying inside bounds.
pub fn polynomial_mutation(
    genome: &mut Genome,
    rate: f64,
    eta_m: f64,
    bounds: &GenomeBounds,
    rng: &mut impl Rng,
) {
    for g in 0..genome.len() {
        if rng.random::<f64>() >= rate {
            continue;
        }
        let (lo, hi) = (bounds.lo[g], bounds.hi[g]);
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        let x = genome[g];
        let d1 = (x - lo) / span;
        let d2 = (hi - x) / span;
        let u: f64 = rng.random();
        let pow = 1.0 / (eta_m + 1.0);
        let delta = if u < 0.5 {
            let val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta_m + 1.0);
            val.powf(pow) - 1.0
        } else {
            let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta_m + 1.0);
            1.0 - val.powf(pow)
        };
        genome[g] = (x + delta * span).clamp(lo, hi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> GenomeBounds {
        GenomeBounds::new(1000)
    }

    #[test]
    fn sbx_identical_parents_give_identical_children() {
        let bounds = bounds();
        let mut rng = crate::seeds::rng(1, &[1]);
        let p = bounds.sample(&mut rng);
        let (c1, c2) = sbx_crossover(&p, &p, 15.0, &bounds, &mut rng);
        assert_eq!(c1, p);
        assert_eq!(c2, p);
    }

    #[test]
    fn sbx_beta_one_reproduces_parents() {
        let (a, b) = sbx_pair(3.0, 7.0, 1.0);
        assert_eq!(a, 3.0);
        assert_eq!(b, 7.0);
    }

    #[test]
    fn sbx_children_stay_in_bounds() {
        let bounds = bounds();
        let mut rng = crate::seeds::rng(2, &[2]);
        for _ in 0..10_000 {
            let p1 = bounds.sample(&mut rng);
            let p2 = bounds.sample(&mut rng);
            let (c1, c2) = sbx_crossover(&p1, &p2, 15.0, &bounds, &mut rng);
            assert!(bounds.contains(&c1));
            assert!(bounds.contains(&c2));
        }
    }

    #[test]
    fn de_degenerate_coefficients_copy_donor() {
        let bounds = bounds();
        let mut rng = crate::seeds::rng(3, &[3]);
        let t = bounds.sample(&mut rng);
        let a = bounds.sample(&mut rng);
        let b = bounds.sample(&mut rng);
        let c = bounds.sample(&mut rng);
        let trial = de_variation(&t, &a, &b, &c, 0.0, 1.0, &bounds, &mut rng);
        assert_eq!(trial, a);
    }

    #[test]
    fn de_mutant_formula() {
        let bounds = bounds();
        let mut rng = crate::seeds::rng(4, &[4]);
        let mut a = bounds.lo;
        let mut b = bounds.lo;
        let mut c = bounds.lo;
        a[1] = 1.0;
        b[1] = 2.0;
        c[1] = 0.0;
        // CR = 1 so every gene comes from the mutant.
        let trial = de_variation(&a, &a, &b, &c, 0.5, 1.0, &bounds, &mut rng);
        assert_eq!(trial[1], 2.0); // 1 + 0.5 * (2 - 0)
    }

    #[test]
    fn de_trials_stay_in_bounds() {
        let bounds = bounds();
        let mut rng = crate::seeds::rng(5, &[5]);
        for _ in 0..10_000 {
            let t = bounds.sample(&mut rng);
            let a = bounds.sample(&mut rng);
            let b = bounds.sample(&mut rng);
            let c = bounds.sample(&mut rng);
            let trial = de_variation(&t, &a, &b, &c, 0.5, 0.9, &bounds, &mut rng);
            assert!(bounds.contains(&trial));
        }
    }

    #[test]
    fn mutation_rate_zero_is_identity() {
        let bounds = bounds();
        let mut rng = crate::seeds::rng(6, &[6]);
        let genome = bounds.sample(&mut rng);
        let mut mutated = genome;
        polynomial_mutation(&mut mutated, 0.0, 20.0, &bounds, &mut rng);
        assert_eq!(mutated, genome);
    }

    #[test]
    fn mutation_rate_is_honoured() {
        // Binomial sampling oracle: fraction of mutated genes ~ 0.08.
        let bounds = bounds();
        let mut rng = crate::seeds::rng(7, &[7]);
        let genome = {
            let mut g = bounds.lo;
            for (i, v) in g.iter_mut().enumerate() {
                *v = 0.5 * (bounds.lo[i] + bounds.hi[i]);
            }
            g
        };
        let trials = 10_000;
        let mut mutated_genes = 0usize;
        for _ in 0..trials {
            let mut m = genome;
            polynomial_mutation(&mut m, 0.08, 20.0, &bounds, &mut rng);
            mutated_genes += m.iter().zip(&genome).filter(|(a, b)| a != b).count();
        }
        let fraction = mutated_genes as f64 / (trials * genome.len()) as f64;
        assert!(
            (fraction - 0.08).abs() <= 0.01,
            "mutated fraction {fraction}"
        );
    }

    #[test]
    fn mutation_stays_in_bounds() {
        let bounds = bounds();
        let mut rng = crate::seeds::rng(8, &[8]);
        for _ in 0..10_000 {
            let mut genome = bounds.sample(&mut rng);
            polynomial_mutation(&mut genome, 0.5, 20.0, &bounds, &mut rng);
            assert!(bounds.contains(&genome));
        }
    }
}
