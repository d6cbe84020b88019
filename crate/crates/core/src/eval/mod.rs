//! Error measures, the per-step mean baseline and error-grid reporting.

mod peg;
mod render;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Segment, HORIZON, STEP_MINUTES};
use crate::error::{Error, Result};
use crate::fde::{FdeModel, ModelMetadata, SENTINEL_FITNESS};

pub use crate::fde::{mrmse, rmse};
pub use peg::{peg_classify, Boundary, PegGrid, PegZone};
pub use render::{horizon_csv, horizon_svg, mrmse_csv, scatter_svg, zones_csv};

/// Per-step means of the post-meal glucose over `train`.
pub fn mean_baseline(train: &[Segment], metadata: ModelMetadata) -> Result<FdeModel> {
    if train.is_empty() {
        return Err(Error::Domain("mean baseline needs training segments".into()));
    }
    let mut sums = [0.0; HORIZON];
    for s in train {
        for (acc, g) in sums.iter_mut().zip(s.post_meal_glucose()) {
            *acc += g;
        }
    }
    Ok(FdeModel::mean_baseline(sums.map(|x| x / train.len() as f64), metadata))
}

/// One (reference, prediction) pair at a given horizon step (1..=8).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub cluster: usize,
    pub method: String,
    pub segment_id: String,
    pub horizon: usize,
    pub reference: f64,
    /// `None` when the model could not be evaluated on the segment.
    pub prediction: Option<f64>,
}

/// Records for every test segment and horizon step.
pub fn evaluate_model(model: &FdeModel, method: &str, cluster: usize, segments: &[Segment]) -> Vec<EvalRecord> {
    let mut out = Vec::with_capacity(segments.len() * HORIZON);
    for s in segments {
        let pred = model.predict(s).ok();
        for (h, reference) in s.post_meal_glucose().into_iter().enumerate() {
            out.push(EvalRecord {
                cluster,
                method: method.to_string(),
                segment_id: s.id.clone(),
                horizon: h + 1,
                reference,
                prediction: pred.map(|p| p[h]),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// `None` for the row averaged over clusters.
    pub cluster: Option<usize>,
    pub method: String,
    pub segments: usize,
    pub pairs: usize,
    pub mrmse: f64,
    /// Percentages for zones A to E.
    pub zones: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub method: String,
    pub horizon: usize,
    pub minutes: i64,
    pub pairs: usize,
    /// Percentages for A+B, C and D+E.
    pub bands: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub overall: Vec<ReportRow>,
    pub horizons: Vec<HorizonRow>,
}

impl EvalReport {
    pub fn row(&self, cluster: usize, method: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.cluster == Some(cluster) && r.method == method)
    }
}

fn percentages<const N: usize>(counts: [usize; N]) -> [f64; N] {
    let total: usize = counts.iter().sum();
    counts.map(|c| {
        if total == 0 {
            0.0
        } else {
            100.0 * c as f64 / total as f64
        }
    })
}

fn zone_of(r: &EvalRecord) -> Result<PegZone> {
    match r.prediction {
        Some(p) => peg_classify(r.reference, p.max(0.0)),
        None => Ok(PegZone::E),
    }
}

/// Aggregates records into per cluster and method rows, an averaged row per
/// method and per-horizon bands. Failed predictions count as zone E and
/// give the segment the sentinel error; negative predictions are treated as
/// zero on the grid.
pub fn peg_report(records: &[EvalRecord]) -> Result<EvalReport> {
    let mut methods: Vec<String> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let method_index = |m: &str| methods.iter().position(|x| x == m).expect("collected");

    struct Acc {
        zones: [usize; 5],
        segments: BTreeMap<String, Vec<Option<(f64, f64)>>>,
    }
    let mut cells: BTreeMap<(usize, usize), Acc> = BTreeMap::new();
    let mut bands: BTreeMap<(usize, usize), [usize; 3]> = BTreeMap::new();
    for r in records {
        if !(1..=HORIZON).contains(&r.horizon) {
            return Err(Error::Domain(format!("horizon {} outside 1..={HORIZON}", r.horizon)));
        }
        let zone = zone_of(r)?;
        let m = method_index(&r.method);
        let cell = cells.entry((r.cluster, m)).or_insert_with(|| Acc {
            zones: [0; 5],
            segments: BTreeMap::new(),
        });
        cell.zones[zone.index()] += 1;
        cell.segments
            .entry(r.segment_id.clone())
            .or_default()
            .push(r.prediction.map(|p| (p, r.reference)));
        let band = match zone {
            PegZone::A | PegZone::B => 0,
            PegZone::C => 1,
            PegZone::D | PegZone::E => 2,
        };
        bands.entry((m, r.horizon)).or_insert([0; 3])[band] += 1;
    }

    let mut rows: Vec<ReportRow> = cells
        .iter()
        .map(|(&(cluster, m), acc)| {
            let errors: Vec<f64> = acc
                .segments
                .values()
                .map(|pairs| {
                    if pairs.iter().any(Option::is_none) {
                        return SENTINEL_FITNESS;
                    }
                    let sq: f64 = pairs.iter().flatten().map(|(p, a)| (p - a) * (p - a)).sum();
                    (sq / pairs.len() as f64).sqrt()
                })
                .collect();
            ReportRow {
                cluster: Some(cluster),
                method: methods[m].clone(),
                segments: acc.segments.len(),
                pairs: acc.zones.iter().sum(),
                mrmse: errors.iter().sum::<f64>() / errors.len() as f64,
                zones: percentages(acc.zones),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.cluster
            .cmp(&b.cluster)
            .then(method_index(&a.method).cmp(&method_index(&b.method)))
    });

    let overall = methods
        .iter()
        .map(|m| {
            let mine: Vec<&ReportRow> = rows.iter().filter(|r| &r.method == m).collect();
            let n = mine.len() as f64;
            let mut zones = [0.0; 5];
            for r in &mine {
                for (z, v) in zones.iter_mut().zip(r.zones) {
                    *z += v / n;
                }
            }
            ReportRow {
                cluster: None,
                method: m.clone(),
                segments: mine.iter().map(|r| r.segments).sum(),
                pairs: mine.iter().map(|r| r.pairs).sum(),
                mrmse: mine.iter().map(|r| r.mrmse).sum::<f64>() / n,
                zones,
            }
        })
        .collect();

    let horizons = bands
        .into_iter()
        .map(|((m, h), counts)| HorizonRow {
            method: methods[m].clone(),
            horizon: h,
            minutes: h as i64 * STEP_MINUTES,
            pairs: counts.iter().sum(),
            bands: percentages(counts),
        })
        .collect();

    Ok(EvalReport {
        methods,
        rows,
        overall,
        horizons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testing::segment_with_glucose;
    use crate::expr::parse_fde;
    use crate::fde::ModelKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(cluster: usize, method: &str, seg: &str, h: usize, reference: f64, p: f64) -> EvalRecord {
        EvalRecord {
            cluster,
            method: method.into(),
            segment_id: seg.into(),
            horizon: h,
            reference,
            prediction: Some(p),
        }
    }

    #[test]
    fn baseline_means() {
        let a = segment_with_glucose("a", [100.0; 17]);
        let b = segment_with_glucose("b", [120.0; 17]);
        let m = mean_baseline(&[a.clone(), b.clone()], ModelMetadata::default()).unwrap();
        assert_eq!(m.kind, ModelKind::MeanBaseline);
        assert_eq!(m.predict(&a).unwrap(), [110.0; 8]);
        assert_eq!(
            m.predict(&a).unwrap(),
            m.predict(&segment_with_glucose("c", [300.0; 17])).unwrap()
        );
        let ramp = segment_with_glucose("r", std::array::from_fn(|i| i as f64));
        let single = mean_baseline(std::slice::from_ref(&ramp), ModelMetadata::default()).unwrap();
        assert_eq!(single.predict(&a).unwrap(), ramp.post_meal_glucose());
        assert!(matches!(
            mean_baseline(&[], ModelMetadata::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn perfect_predictions_are_all_a() {
        let segs: Vec<Segment> = (0..5)
            .map(|k| segment_with_glucose(&format!("s{k}"), std::array::from_fn(|i| 80.0 + (k * i) as f64)))
            .collect();
        let truth_like = FdeModel::mean_baseline([0.0; 8], ModelMetadata::default());
        let mut records = Vec::new();
        for s in &segs {
            for (h, g) in s.post_meal_glucose().into_iter().enumerate() {
                records.push(record(0, "perfect", &s.id, h + 1, g, g));
            }
        }
        records.extend(evaluate_model(&truth_like, "zero", 0, &segs));
        let report = peg_report(&records).unwrap();
        let row = report.row(0, "perfect").unwrap();
        assert_eq!(row.zones, [100.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(row.mrmse, 0.0);
        assert_eq!(row.pairs, segs.len() * 8);
        assert_eq!(row.segments, segs.len());
        for r in report.rows.iter().chain(&report.overall) {
            assert!((r.zones.iter().sum::<f64>() - 100.0).abs() < 0.1);
        }
        for h in &report.horizons {
            assert!((h.bands.iter().sum::<f64>() - 100.0).abs() < 0.1);
        }
        assert_eq!(report.methods, ["perfect", "zero"]);
    }

    #[test]
    fn single_record() {
        let report = peg_report(&[record(3, "m", "s", 2, 100.0, 400.0)]).unwrap();
        let z = peg_classify(100.0, 400.0).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].zones[z.index()], 100.0);
        assert_eq!(report.horizons[0].minutes, 30);
    }

    #[test]
    fn percentages_match_label_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut records = Vec::new();
        let mut counts = [0usize; 5];
        for i in 0..400 {
            let (r, p) = (rng.random_range(0.0..550.0), rng.random_range(0.0..550.0));
            counts[peg_classify(r, p).unwrap().index()] += 1;
            records.push(record(1, "m", &format!("s{}", i / 8), i % 8 + 1, r, p));
        }
        let row = peg_report(&records).unwrap().rows[0].clone();
        for (zone, count) in row.zones.iter().zip(counts) {
            assert!((zone - 100.0 * count as f64 / 400.0).abs() < 1e-9);
        }
    }

    #[test]
    fn report_mrmse_matches_model_mrmse() {
        let segs: Vec<Segment> = (0..4)
            .map(|k| segment_with_glucose(&format!("s{k}"), std::array::from_fn(|i| 100.0 + (k + 2 * i) as f64)))
            .collect();
        let m = FdeModel::from_expr(
            ModelKind::Sindy,
            parse_fde("G + 1.5").unwrap(),
            ModelMetadata::default(),
        )
        .unwrap();
        let report = peg_report(&evaluate_model(&m, "sindy", 2, &segs)).unwrap();
        assert!((report.rows[0].mrmse - mrmse(&m, &segs).unwrap()).abs() < 1e-9);
        assert_eq!(report.overall[0].mrmse, report.rows[0].mrmse);
    }

    #[test]
    fn failed_predictions_are_zone_e() {
        let mut s = segment_with_glucose("s", [100.0; 17]);
        for row in s.samples.iter_mut() {
            row[crate::VariableId::InsulinBolus.index()] = 0.0;
        }
        let m = FdeModel::from_expr(
            ModelKind::Isige,
            parse_fde("G + pow(I_B, -1)").unwrap(),
            ModelMetadata::default(),
        )
        .unwrap();
        let report = peg_report(&evaluate_model(&m, "isige", 0, &[s])).unwrap();
        assert_eq!(report.rows[0].zones[4], 100.0);
        assert_eq!(report.rows[0].mrmse, SENTINEL_FITNESS);
    }
}
