use rand::Rng;

use crate::grammar::{Genotype, CODON_MAX};

/// Child takes each nonterminal's whole gene list from `a` or `b` with
/// equal probability.
pub fn crossover<R: Rng + ?Sized>(a: &Genotype, b: &Genotype, rng: &mut R) -> Genotype {
    let mask: Vec<bool> = (0..a.genes.len()).map(|_| rng.random_bool(0.5)).collect();
    crossover_with_mask(a, b, &mask)
}

/// `mask[n]` true takes list `n` from `a`.
pub fn crossover_with_mask(a: &Genotype, b: &Genotype, mask: &[bool]) -> Genotype {
    Genotype {
        genes: a
            .genes
            .iter()
            .zip(&b.genes)
            .zip(mask)
            .map(|((ga, gb), &from_a)| if from_a { ga.clone() } else { gb.clone() })
            .collect(),
    }
}

/// Resamples each gene independently with probability `rate`.
pub fn mutate<R: Rng + ?Sized>(g: &mut Genotype, rate: f64, rng: &mut R) {
    if rate <= 0.0 {
        return;
    }
    for gene in g.genes.iter_mut().flatten() {
        if rate >= 1.0 || rng.random_bool(rate) {
            *gene = rng.random_range(0..=CODON_MAX);
        }
    }
}
