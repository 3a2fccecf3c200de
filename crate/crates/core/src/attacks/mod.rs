//! De-obfuscation attacks run by an adversary on reported traces.

mod kdtree;
mod map_match;
mod poi;
mod sliding;

use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;

pub use map_match::{load_road_graph, map_match, read_road_graph, RoadGraph};
pub use poi::{extract_pois, match_pois, time_gap, Poi, PoiMatch};
pub use sliding::sliding_average;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("road graph has no nodes")]
    EmptyGraph,
    #[error("road graph node id {0} is not unique")]
    DuplicateNode(u64),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub const DEFAULT_SLIDING_WINDOW: usize = 2;
pub const DEFAULT_POI_DIAMETER_M: f64 = 250.0;
pub const DEFAULT_POI_DWELL_S: i64 = 3600;

/// A configured attack.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Attack {
    /// Evaluate the reported trace as is.
    None,
    SlidingAverage {
        #[serde(default = "default_k")]
        k: usize,
    },
    /// Produces POIs instead of a trace; only POI metrics apply after it.
    PoiExtraction {
        #[serde(default = "default_diameter")]
        max_diameter: f64,
        #[serde(default = "default_dwell")]
        min_dwell: i64,
    },
    MapMatching {
        /// CSV `node_id,lat,lon` with a header line.
        graph: PathBuf,
    },
}

fn default_k() -> usize {
    DEFAULT_SLIDING_WINDOW
}

fn default_diameter() -> f64 {
    DEFAULT_POI_DIAMETER_M
}

fn default_dwell() -> i64 {
    DEFAULT_POI_DWELL_S
}

impl Attack {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Attack::None => "none",
            Attack::SlidingAverage { .. } => "sliding_average",
            Attack::PoiExtraction { .. } => "poi_extraction",
            Attack::MapMatching { .. } => "map_matching",
        }
    }

    /// Whether the attack outputs a trace point-aligned with its input.
    pub fn yields_trace(&self) -> bool {
        !matches!(self, Attack::PoiExtraction { .. })
    }
}
