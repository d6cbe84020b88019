//! Grammar-guided evolution of difference equations with ε-lexicase parent
//! selection over per-segment errors.

mod engine;
mod lexicase;
mod operators;

pub use engine::{
    run_isige, select_validation, train_isige, EvolutionConfig, GenerationLog, RunResult, TrainingOutcome,
};
pub use lexicase::{epsilon_lexicase_select, mad, FitnessMatrix};
pub use operators::{crossover, crossover_with_mask, mutate};
