use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::Deserialize;

use super::HarnessError;
use crate::attacks::Attack;
use crate::datasets::synthetic::SyntheticSpec;
use crate::datasets::{PreprocessRule, SourceFormat};
use crate::mechanisms::{Mechanism, EPSILON_SWEEP};
use crate::metrics::default_alpha_grid;

/// Overrides `output_dir` from the config file.
pub const OUT_DIR_ENV: &str = "LPPM_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// ε list for mechanisms that do not set their own.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// α grid in meters for the usefulness curve.
    #[serde(default = "default_alpha_grid")]
    pub alphas: Vec<f64>,
    pub metrics: Vec<Metric>,
    #[serde(rename = "dataset")]
    pub datasets: Vec<DatasetSpec>,
    #[serde(rename = "mechanism")]
    pub mechanisms: Vec<MechanismSpec>,
    #[serde(rename = "attack")]
    pub attacks: Vec<AttackSpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("lppm-out")
}

fn default_epsilons() -> Vec<f64> {
    EPSILON_SWEEP.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AverageError,
    /// Empirical δ(α) over the α grid.
    Usefulness,
    PoiRecall,
    /// Mean distance between attacked POIs and their matched original POI.
    PoiDistance,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::AverageError => "average_error",
            Metric::Usefulness => "usefulness",
            Metric::PoiRecall => "poi_recall",
            Metric::PoiDistance => "poi_distance",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::AverageError | Metric::PoiDistance => "m",
            Metric::Usefulness | Metric::PoiRecall => "fraction",
        }
    }

    pub fn is_poi(self) -> bool {
        matches!(self, Metric::PoiRecall | Metric::PoiDistance)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Thresholds in seconds.
    Temporal,
    /// Thresholds in meters.
    Spatial,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsampleSpec {
    pub axis: Axis,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub format: SourceFormat,
    /// File or directory; relative paths resolve against the config file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub preprocess: Vec<PreprocessRule>,
    #[serde(default)]
    pub subsample: Option<SubsampleSpec>,
    /// Score POI metrics on spatially sub-sampled variants too.
    #[serde(default)]
    pub poi_on_spatial: bool,
    /// Generator for `format = "synthetic"`.
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    /// Number of generated users for `format = "synthetic"`.
    #[serde(default = "default_users")]
    pub users: usize,
}

fn default_users() -> usize {
    1
}

/// A mechanism with its label and ε list.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismSpec {
    /// Label used in output and seeding; defaults to the kind.
    pub name: String,
    pub mechanism: Mechanism,
    /// Overrides the top-level list when set.
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub name: String,
    pub attack: Attack,
}

fn split_label<'de, D: Deserializer<'de>>(
    deserializer: D,
    extra: &[&str],
) -> Result<(Option<String>, toml::Table, toml::Table), D::Error> {
    let mut table = toml::Table::deserialize(deserializer)?;
    let name = match table.remove("name") {
        None => None,
        Some(toml::Value::String(s)) => Some(s),
        Some(other) => return Err(de::Error::custom(format!("name must be a string, got {other}"))),
    };
    let mut taken = toml::Table::new();
    for key in extra {
        if let Some(v) = table.remove(*key) {
            taken.insert(key.to_string(), v);
        }
    }
    // Serde lets parameterless variants ignore extra keys.
    if let Some(toml::Value::String(kind)) = table.get("kind") {
        if ["identity", "planar_laplace", "none"].contains(&kind.as_str()) && table.len() > 1 {
            return Err(de::Error::custom(format!("kind {kind:?} takes no parameters")));
        }
    }
    Ok((name, table, taken))
}

impl<'de> Deserialize<'de> for MechanismSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (name, rest, extra) = split_label(deserializer, &["epsilons"])?;
        let mechanism = Mechanism::deserialize(toml::Value::Table(rest)).map_err(de::Error::custom)?;
        let epsilons = match extra.get("epsilons") {
            None => None,
            Some(v) => Some(Vec::<f64>::deserialize(v.clone()).map_err(de::Error::custom)?),
        };
        Ok(Self {
            name: name.unwrap_or_else(|| mechanism.kind_name().to_string()),
            mechanism,
            epsilons,
        })
    }
}

impl<'de> Deserialize<'de> for AttackSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (name, rest, _) = split_label(deserializer, &[])?;
        let attack = Attack::deserialize(toml::Value::Table(rest)).map_err(de::Error::custom)?;
        Ok(Self {
            name: name.unwrap_or_else(|| attack.kind_name().to_string()),
            attack,
        })
    }
}

fn config_error(message: impl Into<String>) -> HarnessError {
    HarnessError::Config(message.into())
}

fn check_unique<'a>(what: &str, names: impl Iterator<Item = &'a str>) -> Result<(), HarnessError> {
    let mut seen = HashSet::new();
    for n in names {
        if n.is_empty() {
            return Err(config_error(format!("{what} name must not be empty")));
        }
        if !seen.insert(n) {
            return Err(config_error(format!("duplicate {what} name {n:?}")));
        }
    }
    Ok(())
}

fn positive_ascending(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite() && *v > 0.0) && values.windows(2).all(|w| w[0] < w[1])
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative input paths are resolved against its
    /// directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            if let Some(p) = &mut d.path {
                fix(p);
            }
        }
        for a in &mut self.attacks {
            if let Attack::MapMatching { graph } = &mut a.attack {
                fix(graph);
            }
        }
        fix(&mut self.output_dir);
    }

    /// The output directory after the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }

    pub fn epsilons_for(&self, m: &MechanismSpec) -> Vec<Option<f64>> {
        if !m.mechanism.uses_epsilon() {
            return vec![None];
        }
        m.epsilons
            .as_ref()
            .unwrap_or(&self.epsilons)
            .iter()
            .map(|&e| Some(e))
            .collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.datasets.is_empty() || self.mechanisms.is_empty() || self.attacks.is_empty() || self.metrics.is_empty()
        {
            return Err(config_error("need at least one dataset, mechanism, attack and metric"));
        }
        if self.jobs == Some(0) {
            return Err(config_error("jobs must be at least 1"));
        }
        check_unique("dataset", self.datasets.iter().map(|d| d.name.as_str()))?;
        check_unique("mechanism", self.mechanisms.iter().map(|m| m.name.as_str()))?;
        check_unique("attack", self.attacks.iter().map(|a| a.name.as_str()))?;
        let mut metrics = HashSet::new();
        if !self.metrics.iter().all(|m| metrics.insert(*m)) {
            return Err(config_error("metrics listed twice"));
        }
        if !positive_ascending(&self.alphas) {
            return Err(config_error("alphas must be positive and strictly ascending"));
        }
        for m in &self.mechanisms {
            m.mechanism
                .validate()
                .map_err(|e| config_error(format!("mechanism {:?}: {e}", m.name)))?;
            let eps = m.epsilons.as_ref().unwrap_or(&self.epsilons);
            if m.mechanism.uses_epsilon() && (eps.is_empty() || !eps.iter().all(|e| e.is_finite() && *e > 0.0)) {
                return Err(config_error(format!(
                    "mechanism {:?}: epsilon list must be non-empty and positive",
                    m.name
                )));
            }
            let mut seen = HashSet::new();
            if !eps.iter().all(|e| seen.insert(e.to_bits())) {
                return Err(config_error(format!("mechanism {:?}: repeated epsilon", m.name)));
            }
        }
        for a in &self.attacks {
            match a.attack {
                Attack::SlidingAverage { k: 0 } => {
                    return Err(config_error(format!("attack {:?}: window must be at least 1", a.name)))
                }
                Attack::PoiExtraction {
                    max_diameter,
                    min_dwell,
                } if !(max_diameter > 0.0) || min_dwell < 0 => {
                    return Err(config_error(format!("attack {:?}: invalid POI parameters", a.name)))
                }
                _ => {}
            }
        }
        for d in &self.datasets {
            let synthetic = d.format == SourceFormat::Synthetic;
            if synthetic != d.synthetic.is_some() {
                return Err(config_error(format!(
                    "dataset {:?}: a synthetic table is required exactly when format is synthetic",
                    d.name
                )));
            }
            if !synthetic && d.path.is_none() {
                return Err(config_error(format!("dataset {:?}: path is required", d.name)));
            }
            if let Some(s) = &d.subsample {
                if s.thresholds.is_empty() || !positive_ascending(&s.thresholds) {
                    return Err(config_error(format!(
                        "dataset {:?}: sub-sampling thresholds must be positive and strictly ascending",
                        d.name
                    )));
                }
                if s.axis == Axis::Temporal && s.thresholds.iter().any(|t| t.fract() != 0.0) {
                    return Err(config_error(format!(
                        "dataset {:?}: temporal thresholds are whole seconds",
                        d.name
                    )));
                }
            }
        }
        Ok(())
    }
}
