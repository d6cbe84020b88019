//! Raw series, meal-centred segments and train/validation/test splits.

mod raw_io;
mod split;
pub mod synth;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::variable::{VariableId, VARIABLE_COUNT};

pub use raw_io::{load_raw_csv, read_raw_csv, write_raw_csv, TIMESTAMP_FORMAT};
pub use split::{split_cluster, split_sizes, Split};
pub use synth::{generate_synthetic, SynthConfig};

/// Sampling period in minutes.
pub const STEP_MINUTES: i64 = 15;
/// Samples on each side of the meal.
pub const HALF_WINDOW: usize = 8;
/// Samples per segment (meal sample plus two hours on each side).
pub const SEGMENT_LEN: usize = 2 * HALF_WINDOW + 1;
/// Index of the meal sample within a segment.
pub const MEAL_INDEX: usize = HALF_WINDOW;
/// Number of post-meal predictions.
pub const HORIZON: usize = HALF_WINDOW;

/// One participant's time series; missing samples are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub participant_id: String,
    pub timestamps: Vec<NaiveDateTime>,
    pub channels: [Vec<f64>; VARIABLE_COUNT],
    /// Samples where at least one channel was filled by interpolation.
    pub gap_flags: Vec<bool>,
}

impl RawSeries {
    pub fn new(participant_id: impl Into<String>) -> Self {
        RawSeries {
            participant_id: participant_id.into(),
            timestamps: Vec::new(),
            channels: Default::default(),
            gap_flags: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn channel(&self, v: VariableId) -> &[f64] {
        &self.channels[v.index()]
    }

    pub fn channel_mut(&mut self, v: VariableId) -> &mut Vec<f64> {
        &mut self.channels[v.index()]
    }

    pub fn push(&mut self, t: NaiveDateTime, row: [f64; VARIABLE_COUNT]) {
        self.timestamps.push(t);
        for (c, x) in self.channels.iter_mut().zip(row) {
            c.push(x);
        }
        self.gap_flags.push(false);
    }

    pub fn row(&self, i: usize) -> [f64; VARIABLE_COUNT] {
        std::array::from_fn(|c| self.channels[c][i])
    }
}

/// 17 samples centred on a meal, one row of seven values per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub participant_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<usize>,
    pub meal_time: NaiveDateTime,
    pub samples: Vec<[f64; VARIABLE_COUNT]>,
}

impl Segment {
    /// Row at `offset` samples from the meal (−8..=8).
    pub fn at(&self, offset: isize) -> &[f64; VARIABLE_COUNT] {
        &self.samples[(MEAL_INDEX as isize + offset) as usize]
    }

    pub fn value(&self, offset: isize, v: VariableId) -> f64 {
        self.at(offset)[v.index()]
    }

    /// Glucose at indices −8..=0.
    pub fn pre_meal_glucose(&self) -> [f64; HALF_WINDOW + 1] {
        std::array::from_fn(|i| self.samples[i][VariableId::G.index()])
    }

    /// Measured glucose at indices +1..=+8.
    pub fn post_meal_glucose(&self) -> [f64; HORIZON] {
        std::array::from_fn(|i| self.samples[MEAL_INDEX + 1 + i][VariableId::G.index()])
    }
}

pub const SEGMENT_SCHEMA_VERSION: u32 = 1;

/// Serialised form of a segment collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub schema_version: u32,
    pub segments: Vec<Segment>,
}

impl SegmentSet {
    pub fn new(segments: Vec<Segment>) -> Self {
        SegmentSet {
            schema_version: SEGMENT_SCHEMA_VERSION,
            segments,
        }
    }
}
