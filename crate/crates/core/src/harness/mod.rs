//! Config-driven experiment runner: every combination of dataset variant,
//! mechanism, ε, attack and metric becomes one evaluated cell.

mod config;
mod output;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::attacks::{
    extract_pois, load_road_graph, map_match, sliding_average, Attack, AttackError, Poi, RoadGraph,
    DEFAULT_POI_DIAMETER_M, DEFAULT_POI_DWELL_S,
};
use crate::datasets::synthetic::generate;
use crate::datasets::{
    load, preprocess, spatial_subsample, temporal_subsample, Dataset, DatasetError, SourceFormat, Trace,
};
use crate::mechanisms::{fnv1a64, Epsilon, Seed};
use crate::metrics::{average_error, poi_report, usefulness_curve};

pub use config::{AttackSpec, Axis, DatasetSpec, ExperimentConfig, MechanismSpec, Metric, SubsampleSpec, OUT_DIR_ENV};
pub use output::{emit_csv, emit_plots, write_csv, CSV_HEADER};

/// User column of rows aggregated over all users.
pub const AGGREGATE: &str = "AGGREGATE";
/// Unit column of rows recording a failed cell.
pub const ERROR_UNIT: &str = "error";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dataset {name}: {source}")]
    Dataset {
        name: String,
        #[source]
        source: DatasetError,
    },
    #[error("attack {name}: {source}")]
    Attack {
        name: String,
        #[source]
        source: AttackError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("no aggregate rows to plot")]
    NothingToPlot,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    /// Empty for the dataset as loaded, e.g. `temporal:600s` otherwise.
    pub subsample: String,
    /// User id or [`AGGREGATE`].
    pub user: String,
    pub mechanism: String,
    /// `None` for mechanisms without a privacy parameter.
    pub epsilon: Option<f64>,
    pub attack: String,
    pub metric: String,
    /// Set for curve metrics only.
    pub alpha: Option<f64>,
    /// `None` when undefined for this cell or when the cell failed.
    pub value: Option<f64>,
    pub unit: String,
    pub seed: u64,
}

/// Combines per-user values into the AGGREGATE row: the unweighted mean.
pub fn aggregate(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn subsample_label(axis: Axis, threshold: f64) -> String {
    match axis {
        Axis::Temporal => format!("temporal:{threshold}s"),
        Axis::Spatial => format!("spatial:{threshold}m"),
    }
}

/// One variant per threshold, in threshold order, each recording the step in
/// its provenance.
pub fn subsample_axis(ds: &Dataset, axis: Axis, thresholds: &[f64]) -> Vec<Dataset> {
    thresholds
        .iter()
        .map(|&th| {
            let traces = ds
                .traces
                .par_iter()
                .map(|tr| match axis {
                    Axis::Temporal => temporal_subsample(tr, th as i64),
                    Axis::Spatial => spatial_subsample(tr, th),
                })
                .collect();
            ds.derive(traces, subsample_label(axis, th))
        })
        .collect()
}

/// A dataset after preprocessing and, possibly, sub-sampling.
#[derive(Debug, Clone)]
pub struct Variant {
    pub subsample: String,
    pub data: Dataset,
    pub poi_enabled: bool,
}

/// Loads or generates the dataset, applies its preprocessing rules in
/// order and expands the sub-sampling axis.
pub fn prepare_variants(spec: &DatasetSpec, master_seed: u64) -> Result<Vec<Variant>, HarnessError> {
    let wrap = |source| HarnessError::Dataset {
        name: spec.name.clone(),
        source,
    };
    let mut ds = match (&spec.synthetic, spec.format) {
        (Some(gen), SourceFormat::Synthetic) => {
            let seed = Seed(master_seed).derive(&[fnv1a64(b"dataset"), fnv1a64(spec.name.as_bytes())]);
            generate(&spec.name, gen, spec.users, seed).map_err(wrap)?
        }
        (_, format) => {
            let path = spec
                .path
                .as_ref()
                .ok_or_else(|| HarnessError::Config(format!("dataset {:?}: path is required", spec.name)))?;
            load(format, path, &spec.name).map_err(wrap)?
        }
    };
    for rule in &spec.preprocess {
        ds = preprocess(&ds, *rule).map_err(wrap)?;
    }
    Ok(match &spec.subsample {
        None => vec![Variant {
            subsample: String::new(),
            data: ds,
            poi_enabled: true,
        }],
        Some(s) => {
            let poi_enabled = s.axis == Axis::Temporal || spec.poi_on_spatial;
            subsample_axis(&ds, s.axis, &s.thresholds)
                .into_iter()
                .zip(&s.thresholds)
                .map(|(data, &th)| Variant {
                    subsample: subsample_label(s.axis, th),
                    data,
                    poi_enabled,
                })
                .collect()
        }
    })
}

/// Result of one (user, mechanism, ε, attack, metric) evaluation.
#[derive(Debug, Clone, PartialEq)]
enum Outcome {
    Scalar(Option<f64>),
    Curve(Vec<f64>),
    Failed(String),
}

type PoiKey = (u64, i64);

fn poi_key(attack: &Attack) -> PoiKey {
    match *attack {
        Attack::PoiExtraction {
            max_diameter,
            min_dwell,
        } => (max_diameter.to_bits(), min_dwell),
        _ => (DEFAULT_POI_DIAMETER_M.to_bits(), DEFAULT_POI_DWELL_S),
    }
}

fn compatible(attack: &Attack, metric: Metric, variant: &Variant) -> bool {
    if metric.is_poi() {
        variant.poi_enabled
    } else {
        attack.yields_trace()
    }
}

struct Plan<'a> {
    config: &'a ExperimentConfig,
    graphs: Vec<Option<RoadGraph>>,
}

impl Plan<'_> {
    /// Scores every attack × metric for one obfuscated user trace.
    fn evaluate_user(
        &self,
        variant: &Variant,
        orig: &Trace,
        orig_pois: &HashMap<PoiKey, Result<Vec<Poi>, String>>,
        mech: &MechanismSpec,
        eps: Option<f64>,
        seed: Seed,
    ) -> Vec<Vec<Option<Outcome>>> {
        let metrics = &self.config.metrics;
        let eps = eps.map(Epsilon::new).transpose();
        let obf = eps
            .and_then(|e| mech.mechanism.apply(orig, e, seed))
            .map_err(|e| e.to_string());
        self.config
            .attacks
            .iter()
            .zip(&self.graphs)
            .map(|(spec, graph)| {
                let active: Vec<bool> = metrics.iter().map(|&m| compatible(&spec.attack, m, variant)).collect();
                let obf = match &obf {
                    Ok(t) => t,
                    Err(e) => return active.iter().map(|&a| a.then(|| Outcome::Failed(e.clone()))).collect(),
                };
                let attacked: Result<Option<Trace>, String> = match &spec.attack {
                    Attack::None => Ok(Some(obf.clone())),
                    Attack::SlidingAverage { k } => sliding_average(obf, *k).map(Some).map_err(|e| e.to_string()),
                    Attack::MapMatching { .. } => Ok(Some(map_match(obf, graph.as_ref().expect("graph loaded")))),
                    Attack::PoiExtraction { .. } => Ok(None),
                };
                let needs_pois = metrics.iter().zip(&active).any(|(m, &a)| a && m.is_poi());
                let key = poi_key(&spec.attack);
                let pois: Result<Option<Vec<Poi>>, String> = match (&attacked, needs_pois) {
                    (_, false) => Ok(None),
                    (Err(e), true) => Err(e.clone()),
                    (Ok(t), true) => {
                        let source = t.as_ref().unwrap_or(obf);
                        let (d, w) = (f64::from_bits(key.0), key.1);
                        extract_pois(source, d, w).map(Some).map_err(|e| e.to_string())
                    }
                };
                metrics
                    .iter()
                    .zip(&active)
                    .map(|(&metric, &on)| {
                        if !on {
                            return None;
                        }
                        let outcome = if metric.is_poi() {
                            match (&pois, &orig_pois[&key]) {
                                (Err(e), _) | (_, Err(e)) => Outcome::Failed(e.clone()),
                                (Ok(p), Ok(o)) => {
                                    let r = poi_report(o, p.as_deref().unwrap_or(&[]));
                                    Outcome::Scalar(match metric {
                                        Metric::PoiRecall => r.recall,
                                        _ => r.mean_matched_distance,
                                    })
                                }
                            }
                        } else {
                            match &attacked {
                                Err(e) => Outcome::Failed(e.clone()),
                                Ok(t) => {
                                    let t = t.as_ref().expect("compatible metrics have a trace");
                                    let r = match metric {
                                        Metric::AverageError => {
                                            average_error(orig, t).map(|v| Outcome::Scalar(Some(v)))
                                        }
                                        _ => usefulness_curve(orig, t, &self.config.alphas)
                                            .map(|c| Outcome::Curve(c.deltas)),
                                    };
                                    r.unwrap_or_else(|e| Outcome::Failed(e.to_string()))
                                }
                            }
                        };
                        Some(outcome)
                    })
                    .collect()
            })
            .collect()
    }

    fn run_variant(&self, dataset: &str, variant: &Variant, rows: &mut Vec<ResultRow>) {
        let config = self.config;
        let mut users: Vec<&Trace> = variant.data.traces.iter().collect();
        users.sort_by(|a, b| a.user_id.cmp(&b.user_id));

        let poi_metrics = variant.poi_enabled && config.metrics.iter().any(|m| m.is_poi());
        let keys: Vec<PoiKey> = if poi_metrics {
            config.attacks.iter().map(|a| poi_key(&a.attack)).collect()
        } else {
            Vec::new()
        };
        let mut per_user_pois: Vec<HashMap<PoiKey, Result<Vec<Poi>, String>>> = vec![HashMap::new(); users.len()];
        for key in keys {
            if per_user_pois.first().is_none_or(|m| m.contains_key(&key)) {
                continue;
            }
            let found: Vec<Result<Vec<Poi>, String>> = users
                .par_iter()
                .map(|t| extract_pois(t, f64::from_bits(key.0), key.1).map_err(|e| e.to_string()))
                .collect();
            for (slot, r) in per_user_pois.iter_mut().zip(found) {
                slot.insert(key, r);
            }
        }

        let tasks: Vec<(usize, Option<f64>, usize)> = config
            .mechanisms
            .iter()
            .enumerate()
            .flat_map(|(mi, m)| {
                let n = users.len();
                config
                    .epsilons_for(m)
                    .into_iter()
                    .flat_map(move |e| (0..n).map(move |u| (mi, e, u)))
            })
            .collect();
        log::info!(
            "{dataset} {}: {} users, {} obfuscation tasks",
            if variant.subsample.is_empty() {
                "(full)"
            } else {
                &variant.subsample
            },
            users.len(),
            tasks.len()
        );
        let outcomes: Vec<(u64, Vec<Vec<Option<Outcome>>>)> = tasks
            .par_iter()
            .map(|&(mi, eps, u)| {
                let mech = &config.mechanisms[mi];
                let seed = Seed(config.master_seed).for_cell(&users[u].user_id, &mech.name, eps);
                (
                    seed.0,
                    self.evaluate_user(variant, users[u], &per_user_pois[u], mech, eps, seed),
                )
            })
            .collect();

        let n_users = users.len();
        for (chunk, &(mi, eps, _)) in outcomes
            .chunks(n_users.max(1))
            .zip(tasks.iter().step_by(n_users.max(1)))
        {
            let mech = &config.mechanisms[mi];
            for (ai, attack) in config.attacks.iter().enumerate() {
                for (ki, &metric) in config.metrics.iter().enumerate() {
                    if !compatible(&attack.attack, metric, variant) {
                        continue;
                    }
                    let row = |user: &str, alpha: Option<f64>, value: Option<f64>, unit: &str, seed: u64| ResultRow {
                        dataset: dataset.to_string(),
                        subsample: variant.subsample.clone(),
                        user: user.to_string(),
                        mechanism: mech.name.clone(),
                        epsilon: eps,
                        attack: attack.name.clone(),
                        metric: metric.name().to_string(),
                        alpha,
                        value,
                        unit: unit.to_string(),
                        seed,
                    };
                    let mut scalars = Vec::new();
                    let mut curves: Vec<&Vec<f64>> = Vec::new();
                    for (u, (seed, per_attack)) in chunk.iter().enumerate() {
                        let user = &users[u].user_id;
                        match per_attack[ai][ki].as_ref().expect("compatible cell evaluated") {
                            Outcome::Failed(msg) => {
                                log::warn!(
                                    "{dataset} {} {user} {} {eps:?} {}: {msg}",
                                    variant.subsample,
                                    mech.name,
                                    attack.name
                                );
                                rows.push(row(user, None, None, ERROR_UNIT, *seed));
                            }
                            Outcome::Scalar(v) => {
                                scalars.extend(*v);
                                rows.push(row(user, None, *v, metric.unit(), *seed));
                            }
                            Outcome::Curve(deltas) => {
                                curves.push(deltas);
                                for (&a, &d) in config.alphas.iter().zip(deltas) {
                                    rows.push(row(user, Some(a), Some(d), metric.unit(), *seed));
                                }
                            }
                        }
                    }
                    if metric == Metric::Usefulness {
                        for (i, &a) in config.alphas.iter().enumerate() {
                            let column: Vec<f64> = curves.iter().map(|c| c[i]).collect();
                            rows.push(row(
                                AGGREGATE,
                                Some(a),
                                aggregate(&column),
                                metric.unit(),
                                config.master_seed,
                            ));
                        }
                    } else {
                        rows.push(row(
                            AGGREGATE,
                            None,
                            aggregate(&scalars),
                            metric.unit(),
                            config.master_seed,
                        ));
                    }
                }
            }
        }
    }
}

/// Runs every cell of the experiment. Rows come out in the order: dataset,
/// sub-sample variant, mechanism, ε, attack, metric (each as configured),
/// then users sorted by id with AGGREGATE last, then α.
///
/// Failed cells become rows with unit [`ERROR_UNIT`]; input and config
/// problems abort the run.
pub fn run(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = config.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| HarnessError::Pool(e.to_string()))?;
    pool.install(|| {
        let graphs = config
            .attacks
            .iter()
            .map(|a| match &a.attack {
                Attack::MapMatching { graph } => {
                    load_road_graph(graph).map(Some).map_err(|source| HarnessError::Attack {
                        name: a.name.clone(),
                        source,
                    })
                }
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let plan = Plan { config, graphs };
        let mut rows = Vec::new();
        for spec in &config.datasets {
            for variant in prepare_variants(spec, config.master_seed)? {
                plan.run_variant(&spec.name, &variant, &mut rows);
            }
        }
        Ok(rows)
    })
}

/// Runs the experiment and writes `results.csv` plus a `plots/` directory
/// into `out_dir`.
pub fn run_to_dir(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    let rows = run(config)?;
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    emit_csv(&rows, out_dir.join("results.csv"))?;
    match emit_plots(&rows, &out_dir.join("plots")) {
        Ok(_) | Err(HarnessError::NothingToPlot) => {}
        Err(e) => return Err(e),
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::test_util::trace;
    use crate::geo::{from_local_unchecked, GeoPoint, LocalXY};

    fn spaced(n: usize, spacing: f64) -> Dataset {
        let o = GeoPoint::new(37.7, -122.4).unwrap();
        let pts: Vec<(i64, f64, f64)> = (0..n)
            .map(|i| {
                let p = from_local_unchecked(&LocalXY {
                    x: spacing * i as f64,
                    y: 0.0,
                    reference: o,
                });
                (i as i64 * 60, p.lat(), p.lon())
            })
            .collect();
        Dataset::new("d", SourceFormat::Synthetic, vec![trace("u", &pts)]).unwrap()
    }

    #[test]
    fn temporal_axis_variants() {
        let ds = spaced(100, 10.0);
        let v = subsample_axis(&ds, Axis::Temporal, &[60.0, 600.0, 1800.0, 3600.0]);
        assert_eq!(v.len(), 4);
        let counts: Vec<usize> = v.iter().map(Dataset::n_points).collect();
        assert!(counts.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(counts[0], 100);
        assert_eq!(v[1].steps_descriptor(), "temporal:600s");
    }

    #[test]
    fn spatial_axis_every_other_point() {
        let ds = spaced(11, 300.0);
        let v = subsample_axis(&ds, Axis::Spatial, &[500.0]);
        let kept: Vec<i64> = v[0].traces[0].points.iter().map(|p| p.t).collect();
        assert_eq!(kept, (0..11).step_by(2).map(|i| i * 60).collect::<Vec<_>>());
    }

    #[test]
    fn aggregate_is_unweighted_mean() {
        assert_eq!(aggregate(&[]), None);
        assert_eq!(aggregate(&[1.0, 2.0, 6.0]), Some(3.0));
    }

    #[test]
    fn failing_cells_become_error_rows() {
        let config = ExperimentConfig::from_toml(
            r#"
            metrics = ["average_error", "usefulness"]
            epsilons = [0.01]
            alphas = [100.0]
            [[dataset]]
            name = "d"
            format = "synthetic"
            synthetic = { kind = "commute" }
            [[mechanism]]
            kind = "planar_laplace"
            [[attack]]
            kind = "none"
            "#,
        )
        .unwrap();
        let mut ds = spaced(3, 10.0);
        ds.traces.push(Trace::new("empty", Vec::new()));
        let variant = Variant {
            subsample: String::new(),
            data: ds,
            poi_enabled: true,
        };
        let plan = Plan {
            config: &config,
            graphs: vec![None],
        };
        let mut rows = Vec::new();
        plan.run_variant("d", &variant, &mut rows);
        let users: Vec<(&str, &str)> = rows.iter().map(|r| (r.user.as_str(), r.unit.as_str())).collect();
        assert_eq!(
            users,
            [
                ("empty", ERROR_UNIT),
                ("u", "m"),
                (AGGREGATE, "m"),
                ("empty", ERROR_UNIT),
                ("u", "fraction"),
                (AGGREGATE, "fraction")
            ]
        );
        // The aggregate only covers the user that could be scored.
        assert_eq!(rows[2].value, rows[1].value);
        assert_eq!(rows[3].alpha, None);
    }
}
