use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lexicase::{epsilon_lexicase_select, FitnessMatrix};
use super::operators::{crossover, mutate};
use crate::data::Segment;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fde::{case_errors, mrmse, FdeModel, ModelKind, ModelMetadata, SENTINEL_FITNESS};
use crate::grammar::{random_genotype, Decoder, Genotype, Grammar, Limits};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population_size: usize,
    /// Evaluated generations, the initial population included.
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene resampling probability.
    pub mutation_rate: f64,
    pub elitism: usize,
    pub runs: usize,
    pub max_depth: usize,
    /// Minimum gene-list length of initial genotypes.
    pub initial_list_len: usize,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 200,
            generations: 100,
            crossover_rate: 0.9,
            mutation_rate: 0.05,
            elitism: 1,
            runs: 30,
            max_depth: 6,
            initial_list_len: 0,
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !rate_ok(self.crossover_rate) || !rate_ok(self.mutation_rate) {
            return Err(Error::Config("crossover and mutation rates must lie in [0, 1]".into()));
        }
        if self.population_size == 0 || self.generations == 0 || self.runs == 0 {
            return Err(Error::Config(
                "population, generations and runs must be at least 1".into(),
            ));
        }
        if self.elitism > self.population_size {
            return Err(Error::Config("elitism exceeds the population size".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    pub best_mrmse: f64,
    /// Mean over individuals that could be evaluated on every case.
    pub mean_mrmse: f64,
    /// Individuals with at least one failed case.
    pub invalid: usize,
    /// Distinct phenotypes in the population.
    pub unique: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub model: FdeModel,
    pub genotype: Genotype,
    pub train_mrmse: f64,
    pub log: Vec<GenerationLog>,
}

struct Evaluated {
    expr: Option<Expr>,
    errors: Vec<f64>,
    mrmse: f64,
}

impl Evaluated {
    fn new(expr: Option<Expr>, cases: &[Segment]) -> Self {
        let errors = match &expr {
            Some(e) => case_errors(e, cases),
            None => vec![SENTINEL_FITNESS; cases.len()],
        };
        let mrmse = errors.iter().sum::<f64>() / errors.len() as f64;
        Evaluated { expr, errors, mrmse }
    }
}

/// Random genotypes with pairwise distinct phenotypes. After a bounded
/// number of draws duplicates are accepted so tiny grammars still fill the
/// population.
fn initial_population(
    grammar: &Grammar,
    decoder: &Decoder<'_>,
    config: &EvolutionConfig,
    limits: Limits,
    rng: &mut ChaCha8Rng,
) -> Vec<Genotype> {
    let mut seen = std::collections::HashSet::new();
    let mut population = Vec::with_capacity(config.population_size);
    let mut attempts = 0;
    while population.len() < config.population_size {
        let mut g = random_genotype(grammar, rng, limits);
        let text = decoder.decode(&mut g, rng).map(|d| d.text()).ok();
        attempts += 1;
        if text.is_none_or(|t| seen.insert(t)) || attempts > 50 * config.population_size {
            population.push(g);
        }
    }
    population
}

/// One evolutionary run on the training cases. All random draws happen on
/// the calling thread in a fixed order; fitness evaluation is parallel.
pub fn run_isige(
    grammar: &Grammar,
    train: &[Segment],
    config: &EvolutionConfig,
    seed: u64,
    run: usize,
) -> Result<RunResult> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Domain("no training segments".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decoder = Decoder::new(grammar, config.max_depth);
    let limits = Limits {
        max_depth: config.max_depth,
        initial_list_len: config.initial_list_len,
    };
    let mut population = initial_population(grammar, &decoder, config, limits, &mut rng);
    let mut cache: HashMap<String, Arc<Evaluated>> = HashMap::new();
    let mut best: Option<(f64, Arc<Evaluated>, Genotype)> = None;
    let mut log = Vec::with_capacity(config.generations);

    for generation in 0..config.generations {
        let keys: Vec<(String, Option<Expr>)> = population
            .iter_mut()
            .map(|g| match decoder.decode(g, &mut rng) {
                Ok(d) => (d.text(), Some(d.expr)),
                Err(e) => (format!("\u{0}invalid:{e}"), None),
            })
            .collect();
        let mut pending: Vec<(String, Option<Expr>)> = Vec::new();
        for (k, e) in &keys {
            if !cache.contains_key(k) && !pending.iter().any(|(p, _)| p == k) {
                pending.push((k.clone(), e.clone()));
            }
        }
        let fresh: Vec<(String, Evaluated)> = pending
            .into_par_iter()
            .map(|(k, e)| (k, Evaluated::new(e, train)))
            .collect();
        for (k, ev) in fresh {
            cache.insert(k, Arc::new(ev));
        }
        let evaluated: Vec<Arc<Evaluated>> = keys.iter().map(|(k, _)| Arc::clone(&cache[k])).collect();

        let scores: Vec<f64> = evaluated.iter().map(|e| e.mrmse).collect();
        let (best_idx, &best_score) = scores
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .expect("non-empty population");
        if best.as_ref().is_none_or(|(s, _, _)| best_score < *s) {
            best = Some((
                best_score,
                Arc::clone(&evaluated[best_idx]),
                population[best_idx].clone(),
            ));
        }
        let valid: Vec<f64> = evaluated
            .iter()
            .filter(|e| e.errors.iter().all(|&x| x < SENTINEL_FITNESS))
            .map(|e| e.mrmse)
            .collect();
        log.push(GenerationLog {
            generation,
            best_mrmse: best.as_ref().map_or(best_score, |b| b.0),
            mean_mrmse: if valid.is_empty() {
                SENTINEL_FITNESS
            } else {
                valid.iter().sum::<f64>() / valid.len() as f64
            },
            invalid: evaluated.len() - valid.len(),
            unique: {
                let mut texts: Vec<&str> = keys.iter().map(|(k, _)| k.as_str()).collect();
                texts.sort_unstable();
                texts.dedup();
                texts.len()
            },
        });
        if generation + 1 == config.generations {
            break;
        }

        let matrix = FitnessMatrix::from_rows(evaluated.iter().map(|e| e.errors.clone()).collect());
        let epsilons = matrix.case_epsilons();
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let mut next: Vec<Genotype> = order[..config.elitism].iter().map(|&i| population[i].clone()).collect();
        while next.len() < config.population_size {
            let p1 = epsilon_lexicase_select(&matrix, &epsilons, &mut rng);
            let mut child = if rng.random_bool(config.crossover_rate) {
                let p2 = epsilon_lexicase_select(&matrix, &epsilons, &mut rng);
                crossover(&population[p1], &population[p2], &mut rng)
            } else {
                population[p1].clone()
            };
            mutate(&mut child, config.mutation_rate, &mut rng);
            next.push(child);
        }
        population = next;
    }

    let (train_mrmse, evaluated, genotype) = best.expect("at least one generation");
    let expr = evaluated
        .expr
        .clone()
        .ok_or_else(|| Error::Config("no individual could be decoded with this grammar".into()))?;
    let metadata = ModelMetadata {
        cluster: None,
        seed: Some(seed),
        run: Some(run),
    };
    Ok(RunResult {
        run,
        seed,
        model: FdeModel::from_expr(ModelKind::Isige, expr, metadata)?,
        genotype,
        train_mrmse,
        log,
    })
}

/// Index of the model with the lowest MRMSE on `validation`; ties go to
/// the lower index.
pub fn select_validation(models: &[FdeModel], validation: &[Segment]) -> Result<usize> {
    if models.is_empty() {
        return Err(Error::Domain("no models to choose from".into()));
    }
    let scores = models
        .iter()
        .map(|m| mrmse(m, validation))
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("non-empty"))
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub runs: Vec<RunResult>,
    /// MRMSE of each run's model on the selection set.
    pub selection_mrmse: Vec<f64>,
    pub selected: usize,
    /// Whether selection used validation segments (false when the split
    /// left none and training MRMSE decided).
    pub used_validation: bool,
}

impl TrainingOutcome {
    pub fn model(&self) -> &FdeModel {
        &self.runs[self.selected].model
    }
}

/// `config.runs` independent runs with seeds derived from `config.seed`,
/// then selection of one model on the validation segments.
pub fn train_isige(
    grammar: &Grammar,
    train: &[Segment],
    validation: &[Segment],
    config: &EvolutionConfig,
) -> Result<TrainingOutcome> {
    config.validate()?;
    let runs = (0..config.runs)
        .into_par_iter()
        .map(|r| run_isige(grammar, train, config, derive_seed(config.seed, &[r as u64]), r))
        .collect::<Result<Vec<RunResult>>>()?;
    let models: Vec<FdeModel> = runs.iter().map(|r| r.model.clone()).collect();
    let (selection, used_validation) = if validation.is_empty() {
        (train, false)
    } else {
        (validation, true)
    };
    let selection_mrmse = models
        .iter()
        .map(|m| mrmse(m, selection))
        .collect::<Result<Vec<f64>>>()?;
    let selected = select_validation(&models, selection)?;
    Ok(TrainingOutcome {
        runs,
        selection_mrmse,
        selected,
        used_validation,
    })
}
