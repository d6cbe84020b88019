use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{Prepared, PreprocessConfig};
use crate::data::{Segment, HALF_WINDOW, SEGMENT_LEN};
use crate::variable::{VariableId, VARIABLE_COUNT};

/// Segment acceptance rules, numbered as they are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Every value finite and strictly positive.
    Positive,
    /// No run of interpolated samples longer than the gap limit.
    Interpolation,
    /// No step changes a channel by more than the allowed fraction.
    RelativeChange,
}

impl Constraint {
    pub fn number(self) -> u8 {
        match self {
            Constraint::Positive => 1,
            Constraint::Interpolation => 2,
            Constraint::RelativeChange => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub segment_id: String,
    pub participant_id: String,
    pub meal_time: NaiveDateTime,
    pub constraint: Constraint,
    pub detail: String,
}

pub fn segment_id(participant: &str, meal_time: NaiveDateTime) -> String {
    format!("{participant}@{}", meal_time.format("%Y%m%dT%H%M"))
}

/// First violated constraint, if any, with a short description.
pub fn check_segment(
    samples: &[[f64; VARIABLE_COUNT]],
    interpolated: &[bool],
    cfg: &PreprocessConfig,
) -> Option<(Constraint, String)> {
    if cfg.check_positive {
        for (i, row) in samples.iter().enumerate() {
            for v in VariableId::ALL {
                let x = row[v.index()];
                if !(x.is_finite() && x > 0.0) {
                    let offset = i as isize - HALF_WINDOW as isize;
                    return Some((Constraint::Positive, format!("{v}={x} at offset {offset}")));
                }
            }
        }
    }
    if cfg.check_interpolation {
        let mut run = 0;
        for &flag in interpolated {
            run = if flag { run + 1 } else { 0 };
            if run > cfg.max_gap {
                return Some((
                    Constraint::Interpolation,
                    format!("more than {} interpolated samples in a row", cfg.max_gap),
                ));
            }
        }
    }
    if cfg.check_change {
        for (i, pair) in samples.windows(2).enumerate() {
            for &v in &cfg.change_channels {
                let (a, b) = (pair[0][v.index()], pair[1][v.index()]);
                if (b - a).abs() > cfg.max_relative_change * a.abs() {
                    let offset = i as isize - HALF_WINDOW as isize;
                    return Some((
                        Constraint::RelativeChange,
                        format!("{v} {a} -> {b} after offset {offset}"),
                    ));
                }
            }
        }
    }
    None
}

/// One candidate per meal (positive carbohydrate sample) whose whole window
/// lies inside the series; candidates failing a constraint are logged.
#[allow(clippy::needless_range_loop)]
pub fn build_segments(prepared: &Prepared, cfg: &PreprocessConfig) -> (Vec<Segment>, Vec<Rejection>) {
    let raw = &prepared.raw;
    let features = &prepared.features;
    let carbs = raw.channel(VariableId::Carbs);
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for meal in HALF_WINDOW..raw.len().saturating_sub(HALF_WINDOW) {
        if !(carbs[meal] > 0.0) {
            continue;
        }
        let range = meal - HALF_WINDOW..meal + HALF_WINDOW + 1;
        let samples: Vec<[f64; VARIABLE_COUNT]> = range.clone().map(|i| features.row(i)).collect();
        debug_assert_eq!(samples.len(), SEGMENT_LEN);
        let meal_time = raw.timestamps[meal];
        let id = segment_id(&raw.participant_id, meal_time);
        match check_segment(&samples, &features.gap_flags[range], cfg) {
            None => accepted.push(Segment {
                id,
                participant_id: raw.participant_id.clone(),
                cluster_id: None,
                meal_time,
                samples,
            }),
            Some((constraint, detail)) => rejected.push(Rejection {
                segment_id: id,
                participant_id: raw.participant_id.clone(),
                meal_time,
                constraint,
                detail,
            }),
        }
    }
    (accepted, rejected)
}
