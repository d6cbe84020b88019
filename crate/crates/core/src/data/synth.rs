//! Synthetic participants whose glucose follows a known difference equation.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{RawSeries, STEP_MINUTES};
use crate::error::{Error, Result};
use crate::expr::{parse_fde, Bindings, Expr, VarRef};
use crate::preprocess::{prepare_series, PreprocessConfig};
use crate::seed::derive_seed;
use crate::variable::{VariableId::*, VARIABLE_COUNT};

const STEPS_PER_DAY: usize = (24 * 60 / STEP_MINUTES) as usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub participants: usize,
    pub days: usize,
    /// Nominal meal times in hours after midnight.
    pub meal_hours: Vec<f64>,
    /// Meal times are moved by up to this many steps either way.
    pub meal_jitter_steps: usize,
    pub carbs_min: f64,
    pub carbs_max: f64,
    /// Grams of carbohydrate covered by one unit of bolus insulin.
    pub carb_ratio: f64,
    /// Standard deviation of the per-step glucose noise (mg/dL).
    pub sigma: f64,
    pub initial_glucose: f64,
    /// Ground truth in the form `G + f(...)`.
    pub ground_truth: String,
    pub start: NaiveDateTime,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            participants: 6,
            days: 10,
            meal_hours: vec![7.5, 13.0, 19.5],
            meal_jitter_steps: 3,
            carbs_min: 20.0,
            carbs_max: 90.0,
            carb_ratio: 10.0,
            sigma: 0.0,
            initial_glucose: 120.0,
            ground_truth: DEFAULT_GROUND_TRUTH.into(),
            start: NaiveDate::from_ymd_opt(2024, 1, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid date"),
        }
    }
}

pub const DEFAULT_GROUND_TRUTH: &str = "G + 0.12*I_B*F_ch - 0.036*I_B*G + 0.6";

impl SynthConfig {
    pub fn ground_truth_expr(&self) -> Result<Expr> {
        parse_fde(&self.ground_truth).map_err(|e| Error::Config(format!("ground truth `{}`: {e}", self.ground_truth)))
    }
}

/// Multiplicative random walk pulled towards `mean`, with every step
/// bounded to keep consecutive ratios within `±max_log`.
struct LogWalk {
    value: f64,
    pull: f64,
    noise: Normal<f64>,
    max_log: f64,
}

impl LogWalk {
    fn new(mean: f64, pull: f64, sd: f64, max_log: f64) -> Self {
        LogWalk {
            value: mean,
            pull,
            noise: Normal::new(0.0, sd).expect("valid sd"),
            max_log,
        }
    }

    fn step(&mut self, rng: &mut impl Rng, target: f64) -> f64 {
        let drift = self.pull * (target.ln() - self.value.ln());
        let d = (drift + self.noise.sample(rng)).clamp(-self.max_log, self.max_log);
        self.value *= d.exp();
        self.value
    }
}

/// Glucose-state view used while simulating: `G` comes from the simulated
/// trajectory, other channels from the prepared features.
struct SimState<'a> {
    features: &'a RawSeries,
    glucose: &'a [f64],
    t: usize,
}

impl Bindings for SimState<'_> {
    fn value(&self, r: VarRef) -> Option<f64> {
        let i = self.t.checked_sub(r.lag as usize)?;
        if r.var == G {
            self.glucose.get(i).copied()
        } else {
            self.features.channel(r.var).get(i).copied()
        }
    }
}

/// Synthetic raw series plus the ground-truth expression they follow.
pub fn generate_synthetic(
    config: &SynthConfig,
    preprocess: &PreprocessConfig,
    seed: u64,
) -> Result<(Vec<RawSeries>, Expr)> {
    let truth = config.ground_truth_expr()?;
    if config.participants == 0 || config.days == 0 {
        return Err(Error::Config("synthetic data needs participants and days".into()));
    }
    if !(config.sigma >= 0.0) {
        return Err(Error::Config("sigma must be >= 0".into()));
    }
    if !(config.carbs_min > 0.0 && config.carbs_max >= config.carbs_min) {
        return Err(Error::Config("carbohydrate range must be positive".into()));
    }
    let mut out = Vec::with_capacity(config.participants);
    for p in 0..config.participants {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[p as u64]));
        out.push(participant(
            config,
            preprocess,
            &truth,
            &format!("P{:02}", p + 1),
            &mut rng,
        )?);
    }
    Ok((out, truth))
}

fn participant(
    config: &SynthConfig,
    preprocess: &PreprocessConfig,
    truth: &Expr,
    id: &str,
    rng: &mut ChaCha8Rng,
) -> Result<RawSeries> {
    let n = config.days * STEPS_PER_DAY;
    let mut carbs = vec![0.0; n];
    // A small intake at the start keeps absorption channels positive
    // before the first real meal.
    carbs[0] = config.carbs_min;
    for day in 0..config.days {
        for &hour in &config.meal_hours {
            let nominal = day * STEPS_PER_DAY + (hour * 60.0 / STEP_MINUTES as f64).round() as usize;
            let j = config.meal_jitter_steps as i64;
            let at = nominal as i64 + rng.random_range(-j..=j);
            if at > 0 && (at as usize) < n {
                carbs[at as usize] = rng.random_range(config.carbs_min..=config.carbs_max).round();
            }
        }
    }
    let bolus: Vec<f64> = carbs
        .iter()
        .map(|&c| {
            if c > 0.0 {
                (2.0 * c / config.carb_ratio).round().max(1.0) / 2.0
            } else {
                0.0
            }
        })
        .collect();

    let mut basal = LogWalk::new(0.25, 0.05, 0.02, 0.05);
    let mut heart = LogWalk::new(72.0, 0.1, 0.04, 0.12);
    let mut calories = LogWalk::new(25.0, 0.1, 0.05, 0.15);
    let mut steps = LogWalk::new(300.0, 0.08, 0.08, 0.18);
    let mut raw = RawSeries::new(id);
    for t in 0..n {
        let hour = (t % STEPS_PER_DAY) as f64 * STEP_MINUTES as f64 / 60.0;
        let active = if (8.0..21.0).contains(&hour) { 1.0 } else { 0.3 };
        let row: [f64; VARIABLE_COUNT] = [
            1.0,
            basal.step(rng, 0.25),
            bolus[t],
            carbs[t],
            heart.step(rng, 60.0 + 25.0 * active),
            calories.step(rng, 15.0 + 20.0 * active),
            steps.step(rng, 40.0 + 600.0 * active),
        ];
        let time = config.start + Duration::minutes(STEP_MINUTES * t as i64);
        raw.push(time, row);
    }

    let features = prepare_series(&raw, preprocess)?.features;
    let noise = Normal::new(0.0, config.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut glucose = vec![config.initial_glucose; n];
    for t in 0..n - 1 {
        // Lagged references before the start see the initial value.
        let state = SimState {
            features: &features,
            glucose: &glucose,
            t,
        };
        let next = match truth.eval(&state) {
            Ok(v) => v,
            Err(crate::expr::EvalError::Unbound(_)) => glucose[t],
            Err(e) => return Err(Error::Numerical(format!("ground truth at step {t}: {e}"))),
        };
        let eps = if config.sigma > 0.0 { noise.sample(rng) } else { 0.0 };
        glucose[t + 1] = next + eps;
    }
    *raw.channel_mut(G) = glucose;
    Ok(raw)
}
