//! Traces, datasets, the public-dataset loaders and the transforms applied
//! to them before evaluation.

mod loaders;
mod preprocess;
mod profile;
mod subsample;
pub mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint};

pub use loaders::{
    load, load_canonical, load_checkins, load_geolife, load_sf_cabs, read_canonical, save_canonical, write_canonical,
};
pub use preprocess::{preprocess, PreprocessRule, GEOLIFE_UTC_OFFSET_S};
pub use profile::{convex_hull_area_km2, median, profile, DatasetProfile};
pub use subsample::{spatial_subsample, temporal_subsample};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("directory not found: {}", .0.display())]
    MissingDirectory(PathBuf),
    #[error("rule {rule} cannot be applied: {reason}")]
    RuleMismatch { rule: String, reason: String },
    #[error("user {0} appears in more than one trace")]
    DuplicateUser(String),
    #[error("unknown dataset format {0:?}")]
    UnknownFormat(String),
    #[error("invalid preprocessing rule {0:?}")]
    InvalidRule(String),
}

impl DatasetError {
    pub(crate) fn parse(file: impl Into<PathBuf>, line: usize, message: impl fmt::Display) -> Self {
        DatasetError::Parse {
            file: file.into(),
            line,
            message: message.to_string(),
        }
    }

    pub(crate) fn coord(file: impl Into<PathBuf>, line: usize, err: GeoError) -> Self {
        Self::parse(file, line, err)
    }
}

/// One timestamped position. Timestamps are Unix seconds, UTC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: i64,
    pub pos: GeoPoint,
    /// Taxi occupancy flag, present only for sources that record it.
    pub occupied: Option<bool>,
}

impl TracePoint {
    pub fn new(t: i64, pos: GeoPoint) -> Self {
        Self { t, pos, occupied: None }
    }
}

/// The time-ordered points of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub user_id: String,
    pub points: Vec<TracePoint>,
}

impl Trace {
    /// Builds a trace, stably sorting the points by timestamp.
    pub fn new(user_id: impl Into<String>, mut points: Vec<TracePoint>) -> Self {
        points.sort_by_key(|p| p.t);
        Self {
            user_id: user_id.into(),
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = &GeoPoint> + '_ {
        self.points.iter().map(|p| &p.pos)
    }

    pub fn is_time_sorted(&self) -> bool {
        self.points.windows(2).all(|w| w[0].t <= w[1].t)
    }

    /// Same user, timestamps and annotations with the positions replaced.
    ///
    /// Panics if `positions` does not have the trace's length.
    pub fn with_positions(&self, positions: Vec<GeoPoint>) -> Trace {
        assert_eq!(positions.len(), self.points.len());
        Trace {
            user_id: self.user_id.clone(),
            points: self
                .points
                .iter()
                .zip(positions)
                .map(|(p, pos)| TracePoint { pos, ..*p })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(try_from = "String")]
pub enum SourceFormat {
    Geolife,
    SfCabs,
    Checkins,
    Canonical,
    Synthetic,
}

impl SourceFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceFormat::Geolife => "geolife",
            SourceFormat::SfCabs => "sf_cabs",
            SourceFormat::Checkins => "checkins",
            SourceFormat::Canonical => "canonical",
            SourceFormat::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for SourceFormat {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "geolife" => SourceFormat::Geolife,
            "sf_cabs" | "sfcabs" | "cabspotting" => SourceFormat::SfCabs,
            "checkins" | "brightkite" | "gowalla" => SourceFormat::Checkins,
            "canonical" | "csv" => SourceFormat::Canonical,
            "synthetic" => SourceFormat::Synthetic,
            other => return Err(DatasetError::UnknownFormat(other.to_string())),
        })
    }
}

impl TryFrom<String> for SourceFormat {
    type Error = DatasetError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a dataset came from and what has been done to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub format: SourceFormat,
    /// Applied preprocessing / sub-sampling steps, in order.
    pub steps: Vec<String>,
    /// Input rows skipped by a tolerant loader.
    pub skipped_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub traces: Vec<Trace>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Fails if two traces share a user id.
    pub fn new(name: impl Into<String>, format: SourceFormat, traces: Vec<Trace>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::with_capacity(traces.len());
        for t in &traces {
            if !seen.insert(t.user_id.as_str()) {
                return Err(DatasetError::DuplicateUser(t.user_id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            traces,
            provenance: Provenance {
                format,
                steps: Vec::new(),
                skipped_rows: 0,
            },
        })
    }

    pub fn n_points(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    /// Descriptor of the applied steps, e.g. `sf_drop_empty|temporal>=60s`.
    pub fn steps_descriptor(&self) -> String {
        self.provenance.steps.join("|")
    }

    pub(crate) fn derive(&self, traces: Vec<Trace>, step: String) -> Dataset {
        let mut provenance = self.provenance.clone();
        provenance.steps.push(step);
        Dataset {
            name: self.name.clone(),
            traces,
            provenance,
        }
    }
}
