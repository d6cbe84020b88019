//! Artifact files: every file starts with a metadata header carrying the
//! configuration hash and seed, followed by a deterministic body.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const TOOL: &str = "glycofde";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(command: &str, config_sha256: &str, seed: u64) -> Self {
        Meta {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: config_sha256.into(),
            seed,
        }
    }

    fn line(&self) -> String {
        format!(
            "{} {} command={} config_sha256={} seed={}",
            self.tool, self.version, self.command, self.config_sha256, self.seed
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub meta: Meta,
    pub body: T,
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    glycofde::Error::io(path, e).into()
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, body: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&Envelope {
        meta: meta.clone(),
        body,
    })?;
    text.push('\n');
    write(path, &text)
}

/// Body of an artifact written by `command`; a missing file is a
/// dependency error naming that command.
pub fn read_json<T: DeserializeOwned>(path: &Path, command: &'static str) -> Result<Envelope<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::Dependency {
                artifact: path.to_path_buf(),
                command,
            })
        }
        Err(e) => return Err(io(path, e)),
    };
    Ok(serde_json::from_str(&text)?)
}

/// CSV text behind `#` comment lines.
pub fn write_csv(path: &Path, meta: &Meta, body: &str) -> Result<()> {
    write(path, &format!("# {}\n{body}", meta.line()))
}

pub fn write_svg(path: &Path, meta: &Meta, body: &str) -> Result<()> {
    write(path, &format!("<!-- {} -->\n{body}", meta.line()))
}

pub fn write_text(path: &Path, meta: &Meta, body: &str) -> Result<()> {
    write(path, &format!("# {}\n{body}", meta.line()))
}

/// Serialises rows with a header into CSV text.
pub fn csv_text<S: Serialize>(rows: &[S]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Artifact locations below the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Layout { out: out.into() }
    }

    pub fn ground_truth(&self) -> PathBuf {
        self.out.join("ground_truth.json")
    }
    pub fn segments(&self) -> PathBuf {
        self.out.join("segments.json")
    }
    pub fn rejections(&self) -> PathBuf {
        self.out.join("rejections.csv")
    }
    pub fn clusters(&self) -> PathBuf {
        self.out.join("clusters.json")
    }
    pub fn elbow(&self) -> PathBuf {
        self.out.join("elbow.csv")
    }
    pub fn splits(&self) -> PathBuf {
        self.out.join("splits.json")
    }
    pub fn models_dir(&self) -> PathBuf {
        self.out.join("models")
    }
    pub fn model_index(&self) -> PathBuf {
        self.models_dir().join("index.json")
    }
    pub fn cluster_dir(&self, cluster: usize) -> PathBuf {
        self.models_dir().join(format!("cluster_{cluster:02}"))
    }
    pub fn model(&self, cluster: usize, method: &str) -> PathBuf {
        self.cluster_dir(cluster).join(format!("{method}.json"))
    }
    pub fn evaluation(&self) -> PathBuf {
        self.out.join("eval").join("evaluation.json")
    }
    pub fn records(&self) -> PathBuf {
        self.out.join("eval").join("records.csv")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.out.join("report")
    }
}
