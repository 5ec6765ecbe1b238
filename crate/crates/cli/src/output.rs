//! File schemas written by the subcommands, with matching readers.

use std::fs::File;
use std::path::{Path, PathBuf};

use ermab::{PolicyKind, SimulationRecord, Summary};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Realloc};
use crate::error::CliError;

/// Bumped whenever a column or field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARETO_FILE: &str = "pareto.csv";
pub const CAPACITY_CSV: &str = "capacity.csv";
pub const CAPACITY_JSON: &str = "capacity.json";

pub const CAPACITY_METRIC: &str = "mean reward per arm collected in the last round (t = H-1)";
pub const UPSAMPLE_NOTE: &str = "MNW-EG re-draws its upsampled groups at every allocation call";

/// One row of `records.csv`: a group's outcome in one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub seed: u64,
    pub policy: PolicyKind,
    pub group: usize,
    pub group_size: usize,
    pub group_total_reward: f64,
}

pub fn record_rows(records: &[SimulationRecord]) -> Vec<RecordRow> {
    records
        .iter()
        .flat_map(|r| {
            r.per_group_total_reward
                .iter()
                .zip(&r.per_group_size)
                .enumerate()
                .map(|(group, (&reward, &size))| RecordRow {
                    seed: r.seed,
                    policy: r.policy,
                    group,
                    group_size: size,
                    group_total_reward: reward,
                })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    #[serde(flatten)]
    pub summary: Summary,
    /// Mean over seeds of the MNW-EG upsampling conjecture gap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_conjecture_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub schema_version: u32,
    pub domain: String,
    pub realloc: Realloc,
    pub policies: Vec<PolicySummary>,
}

/// `pareto.csv`: mean per-arm component totals for one `(alpha, policy)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub alpha: f64,
    pub policy: PolicyKind,
    pub engagement: f64,
    pub clinical: f64,
    pub reward: f64,
}

/// `capacity.csv`: achieved level at one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub policy: PolicyKind,
    pub budget: usize,
    pub level: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NotReached {
    #[serde(rename = "not reached")]
    NotReached,
}

/// Smallest budget meeting the target, or the literal `"not reached"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Crossing {
    Budget(usize),
    Never(NotReached),
}

impl Crossing {
    pub fn budget(self) -> Option<usize> {
        match self {
            Crossing::Budget(b) => Some(b),
            Crossing::Never(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityCurve {
    pub policy: PolicyKind,
    pub points: Vec<CapacityRow>,
    pub crossing: Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityDoc {
    pub schema_version: u32,
    pub metric: String,
    pub target: f64,
    pub curves: Vec<CapacityCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceInfo {
    /// Which run the instance belongs to, e.g. `seed=3` or `alpha=0.25`.
    pub label: String,
    /// 64-bit structural digest, hex.
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub version: String,
    pub rng_scheme: String,
    pub realloc: Realloc,
    pub upsampling: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_metric: Option<String>,
    pub files: Vec<String>,
    pub instances: Vec<InstanceInfo>,
    pub config: ExperimentConfig,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    csv::Reader::from_path(path)
        .map_err(csv_err)?
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(csv_err)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir.to_path_buf())
}
