//! The JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wgs_core::minimize::{LocalSearchConfig, MultistartConfig, SweepConfig};
use wgs_core::models::Model;
use wgs_core::{Ansatz, Geometry, GeometrySpec, PhaseMode};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub model: Model,
    pub ansatz: AnsatzSpec,
    #[serde(default)]
    pub search: MultistartConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSpec {
    pub levels: usize,
    #[serde(default = "orbit")]
    pub phase_mode: PhaseMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_classes: Option<Vec<usize>>,
}

fn orbit() -> PhaseMode {
    PhaseMode::Orbit
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        if self.points < 2 {
            return vec![self.start; self.points];
        }
        let h = (self.stop - self.start) / (self.points - 1) as f64;
        (0..self.points).map(|i| if i + 1 == self.points { self.stop } else { self.start + h * i as f64 }).collect()
    }
}

/// Sweep settings. The per-point initial search is the top-level `search`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub search: LocalSearchConfig,
    #[serde(default = "three")]
    pub rounds: usize,
    #[serde(default = "three_f")]
    pub k_mad: f64,
    #[serde(default = "floor")]
    pub relative_floor: f64,
    #[serde(default = "yes")]
    pub neighbour_pass: bool,
    #[serde(default)]
    pub insert_midpoints: bool,
    #[serde(default = "max_points")]
    pub max_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_improvement: Option<f64>,
}

fn three() -> usize {
    3
}

fn three_f() -> f64 {
    3.0
}

fn floor() -> f64 {
    1e-9
}

fn yes() -> bool {
    true
}

fn max_points() -> usize {
    200
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

/// Validated objects built from a configuration.
#[derive(Clone, Debug)]
pub struct Built {
    pub ansatz: Ansatz,
    pub model: Model,
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks every part of the configuration and builds the core objects.
    pub fn build(&self) -> CliResult<Built> {
        let cfg = |e: wgs_core::WgsError| CliError::Config(e.to_string());
        let geometry = Geometry::from_spec(&self.geometry).map_err(cfg)?;
        self.model.check_levels(self.ansatz.levels).map_err(cfg)?;
        let mut ansatz = Ansatz::new(geometry, self.ansatz.phase_mode, self.ansatz.levels, 1).map_err(cfg)?;
        if let Some(classes) = &self.ansatz.local_classes {
            ansatz = ansatz.with_local_classes(classes.clone()).map_err(cfg)?;
        }
        self.search.validate().map_err(cfg)?;
        let sweep = match &self.sweep {
            None => None,
            Some(s) => {
                self.model.parameter(&s.parameter).map_err(cfg)?;
                let values = match (&s.values, &s.grid) {
                    (Some(v), None) => v.clone(),
                    (None, Some(g)) => g.values(),
                    _ => return Err(CliError::Config("sweep needs exactly one of `values` and `grid`".into())),
                };
                let sc = SweepConfig {
                    parameter: s.parameter.clone(),
                    values,
                    initial: self.search.clone(),
                    search: s.search,
                    rounds: s.rounds,
                    k_mad: s.k_mad,
                    relative_floor: s.relative_floor,
                    neighbour_pass: s.neighbour_pass,
                    insert_midpoints: s.insert_midpoints,
                    max_points: s.max_points,
                    min_improvement: s.min_improvement,
                };
                sc.validate().map_err(cfg)?;
                Some(sc)
            }
        };
        Ok(Built { ansatz, model: self.model, sweep })
    }

    /// SHA-256 of the configuration serialized with sorted keys.
    pub fn fingerprint(&self) -> String {
        let value = serde_json::to_value(self).expect("configuration serializes");
        let canonical = serde_json::to_string(&value).expect("JSON value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
