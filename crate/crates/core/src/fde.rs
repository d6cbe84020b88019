//! Finite difference models `Ĝ(t+1) = G(t) + f(x(t))` and their iterated
//! evaluation over the eight post-meal steps.

use serde::{Deserialize, Serialize};

use crate::data::{Segment, HALF_WINDOW, HORIZON};
use crate::error::{Error, Result};
use crate::expr::{Bindings, Compiled, EvalError, Expr, VarRef};
use crate::variable::VariableId;

/// Fitness assigned when a model cannot be evaluated on a segment.
pub const SENTINEL_FITNESS: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Isige,
    Sindy,
    MeanBaseline,
    /// The expression a synthetic data set was generated from.
    GroundTruth,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Isige => "isige",
            ModelKind::Sindy => "sindy",
            ModelKind::MeanBaseline => "mean",
            ModelKind::GroundTruth => "ground_truth",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Expression(Expr),
    StepMeans([f64; HORIZON]),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdeModel {
    pub kind: ModelKind,
    /// Canonical infix form of the expression, or the step means.
    pub canonical: String,
    pub payload: Payload,
    pub metadata: ModelMetadata,
}

impl FdeModel {
    pub fn from_expr(kind: ModelKind, expr: Expr, metadata: ModelMetadata) -> Result<Self> {
        if kind == ModelKind::MeanBaseline {
            return Err(Error::Config("a mean baseline has no expression".into()));
        }
        if !expr.is_fde_form() {
            return Err(Error::Config(format!("`{expr}` is not of the form G + f")));
        }
        Ok(FdeModel {
            kind,
            canonical: expr.to_string(),
            payload: Payload::Expression(expr),
            metadata,
        })
    }

    pub fn mean_baseline(means: [f64; HORIZON], metadata: ModelMetadata) -> Self {
        let canonical = means.map(|m| format!("{m}")).join(", ");
        FdeModel {
            kind: ModelKind::MeanBaseline,
            canonical: format!("[{canonical}]"),
            payload: Payload::StepMeans(means),
            metadata,
        }
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.payload {
            Payload::Expression(e) => Some(e),
            Payload::StepMeans(_) => None,
        }
    }

    /// Checks that the payload matches the kind, e.g. after loading JSON.
    pub fn validate(&self) -> Result<()> {
        match (&self.payload, self.kind) {
            (Payload::StepMeans(_), ModelKind::MeanBaseline) => Ok(()),
            (Payload::Expression(e), k) if k != ModelKind::MeanBaseline && e.is_fde_form() => Ok(()),
            _ => Err(Error::Config(format!(
                "model payload does not match kind {}",
                self.kind.name()
            ))),
        }
    }

    /// Predictions at offsets +1..=+8 for `segment`.
    pub fn predict(&self, segment: &Segment) -> Result<[f64; HORIZON], EvalError> {
        match &self.payload {
            Payload::Expression(e) => iterate(e, segment),
            Payload::StepMeans(m) => Ok(*m),
        }
    }
}

/// Variable values seen by the model at post-meal offset `t`: measured
/// inputs, measured glucose up to the meal and predicted glucose after it.
struct State<'a> {
    segment: &'a Segment,
    predicted: &'a [f64; HORIZON + 1],
    t: isize,
}

impl Bindings for State<'_> {
    fn value(&self, r: VarRef) -> Option<f64> {
        let at = self.t - r.lag as isize;
        if at < -(HALF_WINDOW as isize) {
            return None;
        }
        if r.var == VariableId::G && at > 0 {
            Some(self.predicted[at as usize])
        } else {
            Some(self.segment.value(at, r.var))
        }
    }
}

/// Iterates `expr` from the measured glucose at the meal: step `i` uses the
/// previous prediction for `G` and measured inputs at offset `i`.
pub fn iterate(expr: &Expr, segment: &Segment) -> Result<[f64; HORIZON], EvalError> {
    let mut predicted = [0.0; HORIZON + 1];
    predicted[0] = segment.value(0, VariableId::G);
    for i in 0..HORIZON {
        let state = State {
            segment,
            predicted: &predicted,
            t: i as isize,
        };
        predicted[i + 1] = expr.eval(&state)?;
    }
    let mut out = [0.0; HORIZON];
    out.copy_from_slice(&predicted[1..]);
    Ok(out)
}

/// [`iterate`] for a compiled expression without lagged references.
pub fn iterate_compiled(expr: &Compiled, segment: &Segment) -> Result<[f64; HORIZON], EvalError> {
    let mut out = [0.0; HORIZON];
    let mut g = segment.value(0, VariableId::G);
    for (i, slot) in out.iter_mut().enumerate() {
        let mut row = *segment.at(i as isize);
        row[VariableId::G.index()] = g;
        g = expr.eval(&row)?;
        *slot = g;
    }
    Ok(out)
}

/// Per-segment RMSE of `expr`, compiling it when possible.
pub fn case_errors(expr: &Expr, segments: &[Segment]) -> Vec<f64> {
    match Compiled::new(expr) {
        Some(c) => segments
            .iter()
            .map(|s| match iterate_compiled(&c, s) {
                Ok(pred) => guard(rmse(&pred, &s.post_meal_glucose()).unwrap_or(SENTINEL_FITNESS)),
                Err(_) => SENTINEL_FITNESS,
            })
            .collect(),
        None => segments.iter().map(|s| expr_rmse(expr, s)).collect(),
    }
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(Error::Domain(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            pred.len(),
            actual.len()
        )));
    }
    let sum: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// RMSE of `model` on one segment, or the sentinel if it cannot be
/// evaluated or the error is not finite.
pub fn segment_rmse(model: &FdeModel, segment: &Segment) -> f64 {
    match model.predict(segment) {
        Ok(pred) => guard(rmse(&pred, &segment.post_meal_glucose()).unwrap_or(SENTINEL_FITNESS)),
        Err(_) => SENTINEL_FITNESS,
    }
}

/// As [`segment_rmse`] for a bare expression.
pub fn expr_rmse(expr: &Expr, segment: &Segment) -> f64 {
    match iterate(expr, segment) {
        Ok(pred) => guard(rmse(&pred, &segment.post_meal_glucose()).unwrap_or(SENTINEL_FITNESS)),
        Err(_) => SENTINEL_FITNESS,
    }
}

fn guard(x: f64) -> f64 {
    if x.is_finite() {
        x.min(SENTINEL_FITNESS)
    } else {
        SENTINEL_FITNESS
    }
}

/// Mean over segments of the per-segment RMSE.
pub fn mrmse(model: &FdeModel, segments: &[Segment]) -> Result<f64> {
    if segments.is_empty() {
        return Err(Error::Domain("MRMSE of an empty segment set".into()));
    }
    let total: f64 = segments.iter().map(|s| segment_rmse(model, s)).sum();
    Ok(total / segments.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testing::segment_with_glucose;
    use crate::data::SEGMENT_LEN;
    use crate::expr::parse_fde;
    use crate::variable::VariableId::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn model(text: &str) -> FdeModel {
        FdeModel::from_expr(ModelKind::Isige, parse_fde(text).unwrap(), ModelMetadata::default()).unwrap()
    }

    fn ramp() -> Segment {
        segment_with_glucose("r", std::array::from_fn(|i| 100.0 + 3.0 * i as f64))
    }

    #[test]
    fn eval_examples() {
        let mut env = HashMap::new();
        env.insert(G, 100.0);
        env.insert(BasalInsulin, 2.0);
        assert_eq!(parse_fde("G + B_I").unwrap().eval(&env).unwrap(), 102.0);
        let mut env = HashMap::new();
        env.insert(G, 150.0);
        env.insert(Carbs, 0.5);
        env.insert(HeartRate, 80.0);
        let table_six = parse_fde("G - F_ch*HR + 3.6").unwrap();
        assert!((table_six.eval(&env).unwrap() - 113.6).abs() < 1e-9);
        let mut env = HashMap::new();
        env.insert(G, 1.0);
        env.insert(InsulinBolus, 0.0);
        assert!(parse_fde("G + pow(I_B,-1)").unwrap().eval(&env).is_err());
    }

    #[test]
    fn zero_dynamics_are_flat() {
        let m = FdeModel::from_expr(
            ModelKind::Sindy,
            parse_fde("G + 0*B_I").unwrap().simplify_fde(),
            ModelMetadata::default(),
        )
        .unwrap();
        let s = ramp();
        assert_eq!(m.predict(&s).unwrap(), [s.value(0, G); HORIZON]);
    }

    #[test]
    fn constant_drift_is_arithmetic() {
        let s = ramp();
        let g0 = s.value(0, G);
        let p = model("G + 5").predict(&s).unwrap();
        for (i, x) in p.iter().enumerate() {
            assert_eq!(*x, g0 + 5.0 * (i + 1) as f64);
        }
    }

    #[test]
    fn inputs_are_read_at_the_current_step() {
        let mut s = ramp();
        for (i, row) in s.samples.iter_mut().enumerate() {
            row[Steps.index()] = i as f64;
        }
        // S at offset i is 8 + i, so G grows by 8, 9, ..., 15.
        let p = model("G + S").predict(&s).unwrap();
        let g0 = s.value(0, G);
        let expected: Vec<f64> = (0..8)
            .scan(g0, |g, i| {
                *g += 8.0 + i as f64;
                Some(*g)
            })
            .collect();
        assert_eq!(p.to_vec(), expected);
    }

    #[test]
    fn lagged_glucose_mixes_measured_and_predicted() {
        let s = ramp();
        let m = FdeModel::from_expr(
            ModelKind::Sindy,
            Expr::add(Expr::var(G), Expr::sub(Expr::var(G), Expr::lagged(G, 1))),
            ModelMetadata::default(),
        )
        .unwrap();
        // Linear extrapolation of a slope-3 ramp stays on the ramp.
        let p = m.predict(&s).unwrap();
        for (i, x) in p.iter().enumerate() {
            assert!((x - (124.0 + 3.0 * (i + 1) as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn errors_map_to_sentinel() {
        let mut s = ramp();
        for row in &mut s.samples {
            row[InsulinBolus.index()] = 0.0;
        }
        let m = model("G + pow(I_B,-1)");
        assert!(m.predict(&s).is_err());
        assert_eq!(segment_rmse(&m, &s), SENTINEL_FITNESS);
    }

    #[test]
    fn compiled_iteration_matches() {
        let mut s = ramp();
        for (i, row) in s.samples.iter_mut().enumerate() {
            row[Steps.index()] = 1.0 + i as f64;
            row[HeartRate.index()] = 70.0 - i as f64;
        }
        for text in ["G + S", "G + (2*pow(10,-2)*HR - pow(G*S,-1))", "G - 0.01*G*S + 3.6"] {
            let e = parse_fde(text).unwrap();
            let tree = iterate(&e, &s).unwrap();
            let flat = iterate_compiled(&Compiled::new(&e).unwrap(), &s).unwrap();
            assert_eq!(tree, flat, "{text}");
            assert_eq!(case_errors(&e, &[s.clone()])[0], expr_rmse(&e, &s));
        }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[6.0, 7.0, 8.0], &[1.0, 2.0, 3.0]).unwrap(), 5.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.5355339).abs() < 1e-6);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mrmse_of_one_segment_is_its_rmse() {
        let s = ramp();
        let m = model("G + 2");
        assert_eq!(mrmse(&m, std::slice::from_ref(&s)).unwrap(), segment_rmse(&m, &s));
        assert!(mrmse(&m, &[]).is_err());
    }

    #[test]
    fn payload_must_match_kind() {
        let mut m = FdeModel::mean_baseline([1.0; HORIZON], ModelMetadata::default());
        assert!(m.validate().is_ok());
        m.kind = ModelKind::Isige;
        assert!(m.validate().is_err());
        assert!(FdeModel::from_expr(ModelKind::Isige, Expr::var(G), ModelMetadata::default()).is_ok());
        assert!(FdeModel::from_expr(ModelKind::Isige, Expr::var(HeartRate), ModelMetadata::default()).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let m = model("G - F_ch*HR + 3.6");
        let text = serde_json::to_string(&m).unwrap();
        let back: FdeModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.canonical, "G(t_n) - F_ch(t_n)*HR(t_n) + 3.6");
    }

    proptest! {
        #[test]
        fn predictions_ignore_post_meal_actuals(
            post in prop::collection::vec(1.0f64..400.0, HORIZON),
            hr in 50.0f64..120.0,
        ) {
            let mut s = ramp();
            for row in &mut s.samples {
                row[HeartRate.index()] = hr;
            }
            let m = model("G + (2*pow(10,-2)*HR - B_I)");
            let before = m.predict(&s).unwrap();
            for (k, g) in post.iter().enumerate() {
                s.samples[SEGMENT_LEN - HORIZON + k][G.index()] = *g;
            }
            prop_assert_eq!(m.predict(&s).unwrap(), before);
        }

        #[test]
        fn rmse_properties(
            a in prop::collection::vec(-100.0f64..100.0, 1..20),
            scale in 0.1f64..10.0,
        ) {
            let zeros = vec![0.0; a.len()];
            let r = rmse(&a, &zeros).unwrap();
            prop_assert!(r >= 0.0);
            prop_assert_eq!(r == 0.0, a.iter().all(|&x| x == 0.0));
            let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();
            let rs = rmse(&scaled, &zeros).unwrap();
            prop_assert!((rs - scale * r).abs() <= 1e-9 * (1.0 + rs));
        }
    }
}
