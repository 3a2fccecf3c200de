use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Deserialize;

use super::{Dataset, DatasetError, Trace};

/// Geolife timestamps are GMT; its "days" are Beijing days.
pub const GEOLIFE_UTC_OFFSET_S: i64 = 8 * 3600;

/// Cleaning filters applied to a freshly loaded dataset.
///
/// Textual form (config files, CLI): `geolife_days:480`, `sf_drop_empty`,
/// `min_points_per_user:25`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(try_from = "String")]
pub enum PreprocessRule {
    /// Drop user-days (UTC+8) with fewer than `min_points` points.
    GeolifeDays { min_points: usize },
    /// Drop points recorded while the cab was empty.
    SfDropEmpty,
    /// Drop users with fewer than the given number of points.
    MinPointsPerUser(usize),
}

impl PreprocessRule {
    pub const GEOLIFE: Self = PreprocessRule::GeolifeDays { min_points: 480 };
    pub const BRIGHTKITE: Self = PreprocessRule::MinPointsPerUser(25);
    pub const GOWALLA: Self = PreprocessRule::MinPointsPerUser(50);
}

impl fmt::Display for PreprocessRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreprocessRule::GeolifeDays { min_points } => write!(f, "geolife_days:{min_points}"),
            PreprocessRule::SfDropEmpty => f.write_str("sf_drop_empty"),
            PreprocessRule::MinPointsPerUser(n) => write!(f, "min_points_per_user:{n}"),
        }
    }
}

impl FromStr for PreprocessRule {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatasetError::InvalidRule(s.to_string());
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let count = |default: Option<usize>| -> Result<usize, DatasetError> {
            match arg {
                Some(a) => a.parse().map_err(|_| bad()),
                None => default.ok_or_else(bad),
            }
        };
        match name {
            "geolife_days" => Ok(PreprocessRule::GeolifeDays {
                min_points: count(Some(480))?,
            }),
            "sf_drop_empty" if arg.is_none() => Ok(PreprocessRule::SfDropEmpty),
            "min_points_per_user" => Ok(PreprocessRule::MinPointsPerUser(count(None)?)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for PreprocessRule {
    type Error = DatasetError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Applies a cleaning filter. Points are only ever removed, never altered;
/// users left without points are dropped.
pub fn preprocess(ds: &Dataset, rule: PreprocessRule) -> Result<Dataset, DatasetError> {
    let traces: Vec<Trace> = match rule {
        PreprocessRule::GeolifeDays { min_points } => ds
            .traces
            .iter()
            .map(|tr| {
                let day = |t: i64| (t + GEOLIFE_UTC_OFFSET_S).div_euclid(86_400);
                let mut per_day: HashMap<i64, usize> = HashMap::new();
                for p in &tr.points {
                    *per_day.entry(day(p.t)).or_default() += 1;
                }
                Trace {
                    user_id: tr.user_id.clone(),
                    points: tr
                        .points
                        .iter()
                        .filter(|p| per_day[&day(p.t)] >= min_points)
                        .copied()
                        .collect(),
                }
            })
            .collect(),
        PreprocessRule::SfDropEmpty => {
            let mut out = Vec::with_capacity(ds.traces.len());
            for tr in &ds.traces {
                let mut kept = Vec::with_capacity(tr.points.len());
                for p in &tr.points {
                    match p.occupied {
                        Some(true) => kept.push(*p),
                        Some(false) => {}
                        None => {
                            return Err(DatasetError::RuleMismatch {
                                rule: rule.to_string(),
                                reason: format!(
                                    "dataset {} ({}) has no occupancy field",
                                    ds.name, ds.provenance.format
                                ),
                            })
                        }
                    }
                }
                out.push(Trace {
                    user_id: tr.user_id.clone(),
                    points: kept,
                });
            }
            out
        }
        PreprocessRule::MinPointsPerUser(n) => ds.traces.iter().filter(|tr| tr.len() >= n).cloned().collect(),
    };
    let traces = traces.into_iter().filter(|t| !t.is_empty()).collect();
    Ok(ds.derive(traces, rule.to_string()))
}
