//! Pipeline configuration file and command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use glycofde::cluster::{DEFAULT_K, DEFAULT_RESTARTS, ELBOW_KS};
use glycofde::data::SynthConfig;
use glycofde::evolve::EvolutionConfig;
use glycofde::preprocess::PreprocessConfig;
use glycofde::seed::derive_seed;
use glycofde::sindy::SindyConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Isige,
    Sindy,
    Mean,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Isige, Method::Sindy, Method::Mean];

    pub fn name(self) -> &'static str {
        match self {
            Method::Isige => "isige",
            Method::Sindy => "sindy",
            Method::Mean => "mean",
        }
    }

    pub fn parse(text: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == text.trim())
            .ok_or_else(|| CliError::Config(format!("unknown method `{text}` (expected isige, sindy or mean)")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Artifact directory.
    pub out: PathBuf,
    /// Directory of raw CSV files; defaults to `<out>/raw`.
    pub raw: Option<PathBuf>,
    /// BNF grammar replacing the shipped one.
    pub grammar: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            out: PathBuf::from("out"),
            raw: None,
            grammar: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
    pub restarts: usize,
    /// Mixed into the global seed for this stage.
    pub seed: u64,
    /// Values of k for the elbow table; empty disables the scan.
    pub elbow_ks: Vec<usize>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k: DEFAULT_K,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            elbow_ks: ELBOW_KS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Mixed into the global seed for this stage.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub formats: Vec<ReportFormat>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            formats: vec![ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg],
        }
    }
}

/// Everything a pipeline run depends on. Stage seeds are derived from
/// `seed`; `evolution.seed`, `cluster.seed` and `split.seed` are mixed in
/// so a single stage can be re-seeded on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub methods: Vec<Method>,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub cluster: ClusterConfig,
    pub split: SplitConfig,
    pub evolution: EvolutionConfig,
    pub sindy: SindyConfig,
    pub report: ReportConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            methods: Method::ALL.to_vec(),
            paths: Paths::default(),
            synth: SynthConfig::default(),
            preprocess: PreprocessConfig::default(),
            cluster: ClusterConfig::default(),
            split: SplitConfig::default(),
            evolution: EvolutionConfig::default(),
            sindy: SindyConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

/// Values given on the command line; each replaces one config key.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub methods: Option<Vec<Method>>,
    pub out: Option<PathBuf>,
}

const STAGE_SYNTH: u64 = 1;
const STAGE_CLUSTER: u64 = 2;
const STAGE_SPLIT: u64 = 3;
const STAGE_EVOLVE: u64 = 4;

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = &o.methods {
            self.methods = m.clone();
        }
        if let Some(out) = &o.out {
            self.paths.out = out.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(CliError::Config("at least one method is required".into()));
        }
        if self.cluster.k == 0 {
            return Err(CliError::Config("cluster.k must be at least 1".into()));
        }
        if self.cluster.restarts == 0 {
            return Err(CliError::Config("cluster.restarts must be at least 1".into()));
        }
        self.evolution.validate()?;
        if !(self.sindy.lambda >= 0.0) {
            return Err(CliError::Config("sindy.lambda must be >= 0".into()));
        }
        self.synth.ground_truth_expr()?;
        Ok(())
    }

    /// SHA-256 of the configuration with output locations removed, so the
    /// same settings give the same hash wherever artifacts are written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn raw_dir(&self) -> PathBuf {
        self.paths.raw.clone().unwrap_or_else(|| self.paths.out.join("raw"))
    }

    pub fn synth_seed(&self) -> u64 {
        derive_seed(self.seed, &[STAGE_SYNTH])
    }

    pub fn cluster_seed(&self) -> u64 {
        derive_seed(self.seed, &[STAGE_CLUSTER, self.cluster.seed])
    }

    pub fn split_seed(&self, cluster: usize) -> u64 {
        derive_seed(self.seed, &[STAGE_SPLIT, self.split.seed, cluster as u64])
    }

    pub fn evolution_seed(&self, cluster: usize) -> u64 {
        derive_seed(self.seed, &[STAGE_EVOLVE, self.evolution.seed, cluster as u64])
    }
}
