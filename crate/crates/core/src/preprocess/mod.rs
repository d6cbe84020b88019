//! Raw series to model-ready segments: gap filling, absorption curves,
//! time shifts, smoothing and constrained extraction around meals.

mod absorption;
mod filters;
mod segments;

use chrono::Duration;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{RawSeries, Segment, STEP_MINUTES};
use crate::error::{Error, Result};
use crate::variable::VariableId::{self, *};

pub use absorption::{bateman_absorption, berger_absorption, BatemanParams, BergerParams};
pub use filters::{interpolate_gaps, moving_average, time_shift};
pub use segments::{build_segments, check_segment, Constraint, Rejection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub berger: BergerParams,
    pub bateman: BatemanParams,
    /// Channel whose raw doses are replaced by the Berger insulin curve.
    pub berger_channel: VariableId,
    /// Channel whose raw doses are replaced by the Bateman curve.
    pub bateman_channel: VariableId,
    /// Steps each absorption curve is carried forward.
    pub absorption_horizon: usize,
    /// Channels recorded as discrete events: missing means zero.
    pub event_channels: Vec<VariableId>,
    pub max_gap: usize,
    pub shift: usize,
    /// Keep the unshifted absorption channels; when false they are replaced
    /// by their shifted versions.
    pub retain_unshifted: bool,
    pub smoothing_window: usize,
    pub smoothed_channels: Vec<VariableId>,
    pub max_relative_change: f64,
    pub change_channels: Vec<VariableId>,
    pub check_positive: bool,
    pub check_interpolation: bool,
    pub check_change: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            berger: BergerParams::default(),
            bateman: BatemanParams::default(),
            berger_channel: InsulinBolus,
            bateman_channel: Carbs,
            absorption_horizon: 96,
            event_channels: vec![InsulinBolus, Carbs],
            max_gap: 4,
            shift: 2,
            retain_unshifted: true,
            smoothing_window: 2,
            smoothed_channels: vec![HeartRate, Steps],
            max_relative_change: 0.25,
            change_channels: vec![G, BasalInsulin, HeartRate, Calories, Steps],
            check_positive: true,
            check_interpolation: true,
            check_change: true,
        }
    }
}

/// A participant's series on the regular grid together with the features
/// derived from it.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Regularised raw values (event channels zero-filled, others
    /// interpolated); meals are read from here.
    pub raw: RawSeries,
    pub features: RawSeries,
}

/// Places samples on the 15-minute grid starting at the first timestamp.
/// Missing grid points become NaN rows.
pub fn regularize(raw: &RawSeries) -> Result<RawSeries> {
    let mut out = RawSeries::new(raw.participant_id.clone());
    let Some(&start) = raw.timestamps.first() else {
        return Ok(out);
    };
    let step = Duration::minutes(STEP_MINUTES);
    for (i, &t) in raw.timestamps.iter().enumerate() {
        let offset = t - start;
        if offset.num_seconds() % step.num_seconds() != 0 {
            return Err(Error::Data(format!(
                "participant {}: timestamp {t} is off the {STEP_MINUTES}-minute grid",
                raw.participant_id
            )));
        }
        let slot = (offset.num_seconds() / step.num_seconds()) as usize;
        while out.len() < slot {
            let next = start + step * out.len() as i32;
            out.push(next, [f64::NAN; crate::variable::VARIABLE_COUNT]);
        }
        if out.len() > slot {
            return Err(Error::Data(format!(
                "participant {}: timestamps not increasing at {t}",
                raw.participant_id
            )));
        }
        out.push(t, raw.row(i));
    }
    Ok(out)
}

/// Runs gap filling, absorption, shifting and smoothing on one series.
pub fn prepare_series(raw: &RawSeries, cfg: &PreprocessConfig) -> Result<Prepared> {
    let mut grid = regularize(raw)?;
    let n = grid.len();
    for v in VariableId::ALL {
        if cfg.event_channels.contains(&v) {
            for x in grid.channel_mut(v) {
                if x.is_nan() {
                    *x = 0.0;
                }
            }
        } else {
            let (filled, flags) = interpolate_gaps(grid.channel(v), cfg.max_gap);
            *grid.channel_mut(v) = filled;
            for (g, f) in grid.gap_flags.iter_mut().zip(flags) {
                *g |= f;
            }
        }
    }

    let mut features = grid.clone();
    let curve = |v: VariableId, f: &dyn Fn(f64) -> Result<Vec<f64>>| -> Result<Vec<f64>> {
        let mut out = vec![0.0; n];
        for (k, &dose) in grid.channel(v).iter().enumerate() {
            if dose == 0.0 {
                continue;
            }
            let shape = f(dose)?;
            for (t, c) in shape.iter().enumerate().take(n - k) {
                out[k + t] += c;
            }
        }
        Ok(out)
    };
    let horizon = cfg.absorption_horizon;
    *features.channel_mut(cfg.berger_channel) =
        curve(cfg.berger_channel, &|d| berger_absorption(d, &cfg.berger, horizon))?;
    *features.channel_mut(cfg.bateman_channel) =
        curve(cfg.bateman_channel, &|d| bateman_absorption(d, &cfg.bateman, horizon))?;

    if !cfg.retain_unshifted && cfg.shift > 0 {
        for v in [cfg.berger_channel, cfg.bateman_channel] {
            let shifted = time_shift(features.channel(v), cfg.shift.min(n))?;
            *features.channel_mut(v) = shifted;
        }
    }

    for &v in &cfg.smoothed_channels {
        let smooth = moving_average(features.channel(v), cfg.smoothing_window);
        *features.channel_mut(v) = smooth;
    }

    Ok(Prepared { raw: grid, features })
}

/// Full preprocessing of every participant, in input order.
pub fn preprocess(series: &[RawSeries], cfg: &PreprocessConfig) -> Result<(Vec<Segment>, Vec<Rejection>)> {
    let per_participant: Vec<Result<(Vec<Segment>, Vec<Rejection>)>> = series
        .par_iter()
        .map(|s| {
            let prepared = prepare_series(s, cfg)?;
            Ok(build_segments(&prepared, cfg))
        })
        .collect();
    let mut segments = Vec::new();
    let mut rejections = Vec::new();
    for result in per_participant {
        let (s, r) = result?;
        segments.extend(s);
        rejections.extend(r);
    }
    Ok((segments, rejections))
}
