use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vne_core::fitness::RaterConfig;
use vne_core::{ScenarioConfig, SolverParams};

/// Contents of a `--config` file. Missing sections take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub solver: SolverParams,
    pub rater: RaterConfig,
}

impl Config {
    /// `defaults` selects the built-in configuration, anything else is read as a JSON file.
    pub fn load(spec: &str) -> Result<Self> {
        if spec == "defaults" {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(spec).with_context(|| format!("reading config {spec}"))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {spec}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    BpHfpa,
    BaselineGa,
}

/// Where the rating network comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RaterSource {
    TrainFresh,
    None,
    File(String),
}

impl std::str::FromStr for RaterSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "train-fresh" => RaterSource::TrainFresh,
            "none" => RaterSource::None,
            path => RaterSource::File(path.to_string()),
        })
    }
}

/// Everything needed to reproduce a `run`; written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool_version: String,
    pub csv_schema_version: u32,
    pub solver_kind: SolverKind,
    pub seeds: Vec<u64>,
    pub rater: RaterSource,
    pub config: Config,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// Parses `1,2,5-8`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("empty seed range {part}");
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().with_context(|| format!("bad seed `{part}`"))?),
        }
    }
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}
