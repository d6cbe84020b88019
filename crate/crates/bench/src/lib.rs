//! Shared fixtures for the benchmarks.

use glycofde::data::{generate_synthetic, SynthConfig};
use glycofde::preprocess::{preprocess, PreprocessConfig};
use glycofde::Segment;

/// Noise-free synthetic segments from the default generator.
pub fn segments(seed: u64) -> Vec<Segment> {
    let pc = PreprocessConfig::default();
    let (series, _) = generate_synthetic(&SynthConfig::default(), &pc, seed).expect("default synthesis");
    preprocess(&series, &pc).expect("default preprocessing").0
}
