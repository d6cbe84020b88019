//! Pipeline stages. Each reads the artifacts of earlier stages from the
//! output directory and writes its own.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::PathBuf;

use glycofde::cluster::{elbow_scan, kmeans, pre_meal_vector, ClusterModel, ElbowRow, PreMeal};
use glycofde::data::{generate_synthetic, load_raw_csv, split_cluster, write_raw_csv, SegmentSet};
use glycofde::eval::{
    evaluate_model, horizon_csv, horizon_svg, mean_baseline, mrmse_csv, peg_report, scatter_svg, zones_csv, EvalRecord,
    EvalReport,
};
use glycofde::evolve::train_isige;
use glycofde::fde::{FdeModel, ModelKind, ModelMetadata};
use glycofde::grammar::parse_bnf;
use glycofde::preprocess::{preprocess, Rejection};
use glycofde::sindy::{fit_sindy, SindyReport};
use glycofde::{Grammar, RawSeries, Segment, Split};
use serde::{Deserialize, Serialize};

use crate::artifacts::{csv_text, read_json, write_csv, write_json, write_svg, write_text, Layout, Meta};
use crate::config::{Method, PipelineConfig, ReportFormat};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GenData,
    Preprocess,
    Cluster,
    Split,
    Train,
    Evaluate,
    Report,
}

impl Stage {
    pub const PIPELINE: [Stage; 7] = [
        Stage::GenData,
        Stage::Preprocess,
        Stage::Cluster,
        Stage::Split,
        Stage::Train,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::Preprocess => "preprocess",
            Stage::Cluster => "cluster",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

/// Validated configuration plus derived values shared by all stages.
pub struct Context {
    pub config: PipelineConfig,
    pub hash: String,
    pub layout: Layout,
}

impl Context {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Context {
            hash: config.hash(),
            layout: Layout::new(config.paths.out.clone()),
            config,
        })
    }

    fn meta(&self, stage: Stage, seed: u64) -> Meta {
        Meta::new(stage.name(), &self.hash, seed)
    }

    fn grammar(&self) -> Result<Grammar> {
        match &self.config.paths.grammar {
            None => Ok(Grammar::default_grammar()),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read grammar {}: {e}", path.display())))?;
                parse_bnf(&text).map_err(|e| CliError::Config(format!("grammar {}: {e}", path.display())))
            }
        }
    }
}

pub fn run_stage(ctx: &Context, stage: Stage) -> Result<()> {
    log::info!("running {}", stage.name());
    match stage {
        Stage::GenData => gen_data(ctx),
        Stage::Preprocess => preprocess_stage(ctx),
        Stage::Cluster => cluster_stage(ctx),
        Stage::Split => split_stage(ctx),
        Stage::Train => train(ctx),
        Stage::Evaluate => evaluate(ctx),
        Stage::Report => report(ctx),
    }
}

pub fn run_pipeline(ctx: &Context) -> Result<()> {
    Stage::PIPELINE.into_iter().try_for_each(|s| run_stage(ctx, s))
}

fn gen_data(ctx: &Context) -> Result<()> {
    let seed = ctx.config.synth_seed();
    let (series, truth) = generate_synthetic(&ctx.config.synth, &ctx.config.preprocess, seed)?;
    let meta = ctx.meta(Stage::GenData, seed);
    let dir = ctx.config.raw_dir();
    for s in &series {
        let mut body = Vec::new();
        write_raw_csv(&mut body, std::slice::from_ref(s))?;
        write_text(
            &dir.join(format!("{}.csv", s.participant_id)),
            &meta,
            &String::from_utf8_lossy(&body),
        )?;
    }
    let model = FdeModel::from_expr(ModelKind::GroundTruth, truth, ModelMetadata::default())?;
    write_json(&ctx.layout.ground_truth(), &meta, &model)
}

fn load_raw(ctx: &Context) -> Result<Vec<RawSeries>> {
    let dir = ctx.config.raw_dir();
    let entries = fs::read_dir(&dir).map_err(|e| glycofde::Error::io(&dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(glycofde::Error::Data(format!("no CSV files in {}", dir.display())).into());
    }
    let mut series = Vec::new();
    for f in files {
        series.extend(load_raw_csv(&f)?);
    }
    Ok(series)
}

#[derive(Serialize)]
struct RejectionRow<'a> {
    segment_id: &'a str,
    participant: &'a str,
    meal_time: String,
    constraint: u8,
    detail: &'a str,
}

fn preprocess_stage(ctx: &Context) -> Result<()> {
    let series = load_raw(ctx)?;
    let (segments, rejections) = preprocess(&series, &ctx.config.preprocess)?;
    log::info!("{} segments, {} rejected", segments.len(), rejections.len());
    let meta = ctx.meta(Stage::Preprocess, ctx.config.seed);
    write_json(&ctx.layout.segments(), &meta, &SegmentSet::new(segments))?;
    let rows: Vec<RejectionRow> = rejections
        .iter()
        .map(|r: &Rejection| RejectionRow {
            segment_id: &r.segment_id,
            participant: &r.participant_id,
            meal_time: r.meal_time.format(glycofde::data::TIMESTAMP_FORMAT).to_string(),
            constraint: r.constraint.number(),
            detail: &r.detail,
        })
        .collect();
    let body = if rows.is_empty() {
        "segment_id,participant,meal_time,constraint,detail\n".to_string()
    } else {
        csv_text(&rows)?
    };
    write_csv(&ctx.layout.rejections(), &meta, &body)
}

fn load_segments(ctx: &Context) -> Result<Vec<Segment>> {
    let set: SegmentSet = read_json(&ctx.layout.segments(), "preprocess")?.body;
    Ok(set.segments)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub model: ClusterModel,
    pub assignment: BTreeMap<String, usize>,
}

fn cluster_stage(ctx: &Context) -> Result<()> {
    let segments = load_segments(ctx)?;
    let seed = ctx.config.cluster_seed();
    let vectors: Vec<PreMeal> = segments.iter().map(pre_meal_vector).collect();
    let k = ctx.config.cluster.k;
    let restarts = ctx.config.cluster.restarts;
    let clustering = kmeans(&vectors, k, restarts, seed)?;
    let assignment = segments
        .iter()
        .zip(&clustering.assignment)
        .map(|(s, &c)| (s.id.clone(), c))
        .collect();
    let meta = ctx.meta(Stage::Cluster, seed);
    write_json(
        &ctx.layout.clusters(),
        &meta,
        &ClusterArtifact {
            model: clustering.model,
            assignment,
        },
    )?;
    let ks: Vec<usize> = ctx
        .config
        .cluster
        .elbow_ks
        .iter()
        .copied()
        .filter(|&k| k <= vectors.len())
        .collect();
    if !ks.is_empty() {
        let rows: Vec<ElbowRow> = elbow_scan(&vectors, &ks, restarts, seed)?;
        write_csv(&ctx.layout.elbow(), &meta, &csv_text(&rows)?)?;
    }
    Ok(())
}

/// Segments with their cluster ids from the cluster artifact.
fn clustered_segments(ctx: &Context) -> Result<(Vec<Segment>, usize)> {
    let mut segments = load_segments(ctx)?;
    let clusters: ClusterArtifact = read_json(&ctx.layout.clusters(), "cluster")?.body;
    for s in &mut segments {
        let c = clusters.assignment.get(&s.id).ok_or_else(|| {
            glycofde::Error::Data(format!("segment {} has no cluster; rerun `glycofde cluster`", s.id))
        })?;
        s.cluster_id = Some(*c);
    }
    Ok((segments, clusters.model.k))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterSplit {
    pub cluster: usize,
    pub split: Split,
}

fn split_stage(ctx: &Context) -> Result<()> {
    let (segments, k) = clustered_segments(ctx)?;
    let mut splits = Vec::new();
    for c in 0..k {
        let members: Vec<Segment> = segments.iter().filter(|s| s.cluster_id == Some(c)).cloned().collect();
        if members.is_empty() {
            log::warn!("cluster {c} has no segments");
            continue;
        }
        splits.push(ClusterSplit {
            cluster: c,
            split: split_cluster(&members, ctx.config.split_seed(c))?,
        });
    }
    let meta = ctx.meta(Stage::Split, ctx.config.split_seed(0));
    write_json(&ctx.layout.splits(), &meta, &splits)
}

struct Partition {
    cluster: usize,
    train: Vec<Segment>,
    validation: Vec<Segment>,
    test: Vec<Segment>,
}

fn partitions(ctx: &Context) -> Result<Vec<Partition>> {
    let (segments, _) = clustered_segments(ctx)?;
    let by_id: HashMap<&str, &Segment> = segments.iter().map(|s| (s.id.as_str(), s)).collect();
    let splits: Vec<ClusterSplit> = read_json(&ctx.layout.splits(), "split")?.body;
    let pick = |ids: &[String]| -> Result<Vec<Segment>> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|s| (*s).clone())
                    .ok_or_else(|| glycofde::Error::Data(format!("split names unknown segment {id}")).into())
            })
            .collect()
    };
    splits
        .iter()
        .map(|cs| {
            Ok(Partition {
                cluster: cs.cluster,
                train: pick(&cs.split.train)?,
                validation: pick(&cs.split.validation)?,
                test: pick(&cs.split.test)?,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelIndex {
    /// Trained clusters with the methods available for each.
    pub clusters: BTreeMap<usize, Vec<Method>>,
    /// Clusters without training segments.
    pub skipped: Vec<usize>,
}

#[derive(Serialize)]
struct RunRow<'a> {
    run: usize,
    seed: u64,
    train_mrmse: f64,
    selection_mrmse: f64,
    selected: bool,
    expression: &'a str,
}

#[derive(Serialize)]
struct LogRow {
    run: usize,
    generation: usize,
    best_mrmse: f64,
    mean_mrmse: f64,
    invalid: usize,
    unique: usize,
}

fn train(ctx: &Context) -> Result<()> {
    let parts = partitions(ctx)?;
    let grammar = ctx.grammar()?;
    let mut index = ModelIndex {
        clusters: BTreeMap::new(),
        skipped: Vec::new(),
    };
    for p in &parts {
        if p.train.is_empty() {
            log::warn!("cluster {} has no training segments; skipped", p.cluster);
            index.skipped.push(p.cluster);
            continue;
        }
        let dir = ctx.layout.cluster_dir(p.cluster);
        let mut methods = Vec::new();
        for &method in &ctx.config.methods {
            log::info!("cluster {}: training {method}", p.cluster);
            let seed = ctx.config.evolution_seed(p.cluster);
            let meta = ctx.meta(Stage::Train, seed);
            let metadata = ModelMetadata {
                cluster: Some(p.cluster),
                ..Default::default()
            };
            let model = match method {
                Method::Mean => mean_baseline(&p.train, metadata)?,
                Method::Sindy => {
                    let (model, report): (FdeModel, SindyReport) = fit_sindy(&p.train, &ctx.config.sindy, metadata)?;
                    write_json(&dir.join("sindy_report.json"), &meta, &report)?;
                    model
                }
                Method::Isige => {
                    let mut evo = ctx.config.evolution.clone();
                    evo.seed = seed;
                    let outcome = train_isige(&grammar, &p.train, &p.validation, &evo)?;
                    let runs: Vec<RunRow> = outcome
                        .runs
                        .iter()
                        .zip(&outcome.selection_mrmse)
                        .map(|(r, &v)| RunRow {
                            run: r.run,
                            seed: r.seed,
                            train_mrmse: r.train_mrmse,
                            selection_mrmse: v,
                            selected: r.run == outcome.selected,
                            expression: &r.model.canonical,
                        })
                        .collect();
                    write_csv(&dir.join("isige_runs.csv"), &meta, &csv_text(&runs)?)?;
                    let log_rows: Vec<LogRow> = outcome
                        .runs
                        .iter()
                        .flat_map(|r| {
                            r.log.iter().map(|l| LogRow {
                                run: r.run,
                                generation: l.generation,
                                best_mrmse: l.best_mrmse,
                                mean_mrmse: l.mean_mrmse,
                                invalid: l.invalid,
                                unique: l.unique,
                            })
                        })
                        .collect();
                    write_csv(&dir.join("isige_log.csv"), &meta, &csv_text(&log_rows)?)?;
                    let mut model = outcome.model().clone();
                    model.metadata.cluster = Some(p.cluster);
                    model
                }
            };
            write_json(&ctx.layout.model(p.cluster, method.name()), &meta, &model)?;
            methods.push(method);
        }
        index.clusters.insert(p.cluster, methods);
    }
    write_json(
        &ctx.layout.model_index(),
        &ctx.meta(Stage::Train, ctx.config.seed),
        &index,
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: EvalReport,
    pub records: Vec<EvalRecord>,
}

fn load_model(ctx: &Context, cluster: usize, method: Method) -> Result<FdeModel> {
    let model: FdeModel = read_json(&ctx.layout.model(cluster, method.name()), "train")?.body;
    model.validate()?;
    Ok(model)
}

fn evaluate(ctx: &Context) -> Result<()> {
    let index: ModelIndex = read_json(&ctx.layout.model_index(), "train")?.body;
    let parts = partitions(ctx)?;
    let mut records = Vec::new();
    for p in parts.iter().filter(|p| index.clusters.contains_key(&p.cluster)) {
        for &method in &ctx.config.methods {
            if !index.clusters[&p.cluster].contains(&method) {
                return Err(CliError::Dependency {
                    artifact: ctx.layout.model(p.cluster, method.name()),
                    command: "train",
                });
            }
            let model = load_model(ctx, p.cluster, method)?;
            records.extend(evaluate_model(&model, method.name(), p.cluster, &p.test));
        }
    }
    if records.is_empty() {
        return Err(glycofde::Error::Data("no test segments to evaluate".into()).into());
    }
    let report = peg_report(&records)?;
    let meta = ctx.meta(Stage::Evaluate, ctx.config.seed);
    write_csv(&ctx.layout.records(), &meta, &csv_text(&records)?)?;
    write_json(&ctx.layout.evaluation(), &meta, &Evaluation { report, records })
}

#[derive(Serialize)]
struct ExpressionRow {
    cluster: usize,
    method: &'static str,
    expression: String,
}

fn report(ctx: &Context) -> Result<()> {
    let eval: Evaluation = read_json(&ctx.layout.evaluation(), "evaluate")?.body;
    let index: ModelIndex = read_json(&ctx.layout.model_index(), "train")?.body;
    let meta = ctx.meta(Stage::Report, ctx.config.seed);
    let dir = ctx.layout.report_dir();
    let formats = &ctx.config.report.formats;

    let mut expressions = Vec::new();
    for (&cluster, methods) in &index.clusters {
        for &m in methods.iter().filter(|m| **m != Method::Mean) {
            let model = load_model(ctx, cluster, m)?;
            expressions.push(ExpressionRow {
                cluster,
                method: m.name(),
                expression: model.canonical,
            });
        }
    }

    if formats.contains(&ReportFormat::Csv) {
        write_csv(&dir.join("mrmse.csv"), &meta, &mrmse_csv(&eval.report)?)?;
        write_csv(&dir.join("zones.csv"), &meta, &zones_csv(&eval.report)?)?;
        write_csv(&dir.join("horizons.csv"), &meta, &horizon_csv(&eval.report)?)?;
        let body = if expressions.is_empty() {
            "cluster,method,expression\n".to_string()
        } else {
            csv_text(&expressions)?
        };
        write_csv(&dir.join("expressions.csv"), &meta, &body)?;
    }
    if formats.contains(&ReportFormat::Json) {
        write_json(&dir.join("report.json"), &meta, &eval.report)?;
    }
    if formats.contains(&ReportFormat::Svg) {
        for m in &eval.report.methods {
            write_svg(
                &dir.join("svg").join(format!("horizons_{m}.svg")),
                &meta,
                &horizon_svg(&eval.report, m),
            )?;
            for h in 1..=glycofde::data::HORIZON {
                let minutes = h as i64 * glycofde::data::STEP_MINUTES;
                write_svg(
                    &dir.join("svg").join(format!("peg_{m}_{minutes:03}min.svg")),
                    &meta,
                    &scatter_svg(&eval.records, m, h),
                )?;
            }
        }
    }
    Ok(())
}
