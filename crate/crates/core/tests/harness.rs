use std::collections::BTreeSet;

use lppm_core::harness::{
    emit_csv, emit_plots, run, run_to_dir, write_csv, ExperimentConfig, ResultRow, AGGREGATE, ERROR_UNIT,
};

fn config(body: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(body).unwrap()
}

const COMMUTE: &str = r#"
[[dataset]]
name = "commute"
format = "synthetic"
users = 3
synthetic = { kind = "commute", round_trips = 3 }
"#;

fn csv_bytes(rows: &[ResultRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).unwrap();
    buf
}

#[test]
fn single_cell_counts() {
    let c = config(&format!(
        "master_seed = 1\nmetrics = [\"average_error\"]\nepsilons = [0.01]\n{COMMUTE}\n[[mechanism]]\nkind = \"planar_laplace\"\n[[attack]]\nkind = \"none\"\n"
    ));
    let rows = run(&c).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().filter(|r| r.user == AGGREGATE).count(), 1);
    assert_eq!(rows.last().unwrap().user, AGGREGATE);
    let users: Vec<&str> = rows[..3].iter().map(|r| r.user.as_str()).collect();
    assert_eq!(users, ["u000", "u001", "u002"]);
    let mean = rows[..3].iter().map(|r| r.value.unwrap()).sum::<f64>() / 3.0;
    assert!((rows[3].value.unwrap() - mean).abs() < 1e-9);
    assert_eq!(rows[3].seed, 1);
    assert!(rows[..3].iter().all(|r| r.seed != 1 && r.unit == "m"));
}

#[test]
fn cartesian_aggregate_count() {
    let c = config(&format!(
        r#"
metrics = ["average_error", "poi_recall"]
epsilons = [0.00139, 0.00358, 0.00693]
{COMMUTE}
[[mechanism]]
kind = "planar_laplace"
[[mechanism]]
kind = "clustering"
[[attack]]
kind = "none"
[[attack]]
kind = "sliding_average"
"#
    ));
    let rows = run(&c).unwrap();
    assert_eq!(rows.iter().filter(|r| r.user == AGGREGATE).count(), 24);
    assert_eq!(rows.len(), 24 * 4);
}

fn full_config(jobs: usize) -> ExperimentConfig {
    config(&format!(
        r#"
master_seed = 99
jobs = {jobs}
metrics = ["average_error", "usefulness", "poi_recall", "poi_distance"]
epsilons = [0.00139, 0.00693]
alphas = [500.0, 1000.0, 10000.0]
{COMMUTE}
[[dataset]]
name = "walk"
format = "synthetic"
users = 4
synthetic = {{ kind = "random_walk", n_points = 120 }}
subsample = {{ axis = "spatial", thresholds = [300.0, 1000.0] }}
[[mechanism]]
kind = "identity"
[[mechanism]]
kind = "planar_laplace"
[[mechanism]]
kind = "adaptive"
[[mechanism]]
kind = "memory_clustering"
[[attack]]
kind = "none"
[[attack]]
kind = "sliding_average"
k = 1
[[attack]]
kind = "poi_extraction"
"#
    ))
}

#[test]
fn schedule_independent() {
    let a = csv_bytes(&run(&full_config(1)).unwrap());
    let b = csv_bytes(&run(&full_config(8)).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, csv_bytes(&run(&full_config(3)).unwrap()));
}

#[test]
fn identity_with_no_attack_is_exact() {
    let rows = run(&full_config(2)).unwrap();
    let cells: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| r.mechanism == "identity" && r.attack == "none")
        .collect();
    assert!(!cells.is_empty());
    for r in cells {
        assert!(r.epsilon.is_none());
        match r.metric.as_str() {
            "average_error" | "poi_distance" => assert_eq!(r.value, Some(0.0), "{r:?}"),
            "usefulness" => assert_eq!(r.value, Some(1.0)),
            "poi_recall" if r.dataset == "commute" => assert_eq!(r.value, Some(1.0)),
            _ => {}
        }
    }
}

#[test]
fn incompatible_and_disabled_cells_are_skipped() {
    let rows = run(&full_config(2)).unwrap();
    assert!(!rows
        .iter()
        .any(|r| r.attack == "poi_extraction" && (r.metric == "average_error" || r.metric == "usefulness")));
    // POI metrics are off for spatially sub-sampled variants by default.
    assert!(!rows.iter().any(|r| r.dataset == "walk" && r.metric.starts_with("poi")));
    let subsamples: BTreeSet<&str> = rows
        .iter()
        .filter(|r| r.dataset == "walk")
        .map(|r| r.subsample.as_str())
        .collect();
    assert_eq!(
        subsamples.into_iter().collect::<Vec<_>>(),
        ["spatial:1000m", "spatial:300m"]
    );
    assert!(!rows.iter().any(|r| r.unit == ERROR_UNIT));
}

#[test]
fn removing_a_mechanism_only_removes_its_rows() {
    let full = run(&full_config(4)).unwrap();
    let mut reduced_config = full_config(4);
    reduced_config.mechanisms.retain(|m| m.name != "adaptive");
    let reduced = run(&reduced_config).unwrap();
    let expected: Vec<&ResultRow> = full.iter().filter(|r| r.mechanism != "adaptive").collect();
    assert_eq!(reduced.iter().collect::<Vec<_>>(), expected);
}

#[test]
fn map_matching_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::write(
        &data,
        "user_id,unix_time,lat,lon\na,0,37.7,-122.4\na,60,37.7001,-122.4\n",
    )
    .unwrap();
    let graph = dir.path().join("graph.csv");
    std::fs::write(&graph, "node_id,lat,lon\n1,37.7,-122.4\n").unwrap();
    let text = format!(
        r#"
metrics = ["average_error"]
[[dataset]]
name = "tiny"
format = "canonical"
path = "{}"
[[mechanism]]
kind = "identity"
[[attack]]
kind = "map_matching"
graph = "{}"
"#,
        data.display(),
        graph.display()
    );
    let rows = run(&config(&text)).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].user, AGGREGATE);
    // Both points snap to the single node: errors 0 m and about 11 m.
    assert!((rows[0].value.unwrap() - 5.56).abs() < 0.01, "{:?}", rows[0]);

    let missing = text.replace("graph.csv", "nope.csv");
    assert!(run(&config(&missing)).is_err());
}

#[test]
fn golden_csv() {
    let rows = vec![
        ResultRow {
            dataset: "sf".into(),
            subsample: "temporal:60s".into(),
            user: "abboip".into(),
            mechanism: "planar_laplace".into(),
            epsilon: Some(0.00139),
            attack: "none".into(),
            metric: "average_error".into(),
            alpha: None,
            value: Some(1440.25),
            unit: "m".into(),
            seed: 12345678901234567890,
        },
        ResultRow {
            dataset: "sf".into(),
            subsample: "temporal:60s".into(),
            user: AGGREGATE.into(),
            mechanism: "identity".into(),
            epsilon: None,
            attack: "sliding_average".into(),
            metric: "usefulness".into(),
            alpha: Some(500.0),
            value: Some(0.875),
            unit: "fraction".into(),
            seed: 42,
        },
        ResultRow {
            dataset: "sf".into(),
            subsample: String::new(),
            user: "x,y".into(),
            mechanism: "clustering".into(),
            epsilon: Some(0.01),
            attack: "poi_extraction".into(),
            metric: "poi_recall".into(),
            alpha: None,
            value: None,
            unit: ERROR_UNIT.into(),
            seed: 0,
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    emit_csv(&rows, &path).unwrap();
    let golden = include_bytes!("data/golden.csv");
    assert_eq!(std::fs::read(&path).unwrap(), golden);
}

#[test]
fn plots_one_polyline_per_mechanism() {
    let c = config(&format!(
        r#"
metrics = ["average_error"]
{COMMUTE}
[[mechanism]]
kind = "planar_laplace"
[[mechanism]]
kind = "memory_clustering"
[[attack]]
kind = "none"
"#
    ));
    let rows = run(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_plots(&rows, dir.path()).unwrap();
    assert_eq!(paths.len(), 1);
    let svg = std::fs::read_to_string(&paths[0]).unwrap();
    let lines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
    assert_eq!(lines.len(), 2);
    for l in lines {
        let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        assert_eq!(pts.split(' ').count(), 10);
    }
}

#[test]
fn run_to_dir_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let rows = run_to_dir(&full_config(2), dir.path()).unwrap();
    let csv = std::fs::read(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv, csv_bytes(&rows));
    let plots = std::fs::read_dir(dir.path().join("plots")).unwrap().count();
    assert!(plots > 0);
}
