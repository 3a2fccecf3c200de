use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use lppm_core::attacks::{extract_pois, load_road_graph, map_match, sliding_average, Poi};
use lppm_core::datasets::{load, preprocess, profile, write_canonical, Dataset, PreprocessRule, SourceFormat};
use lppm_core::harness::{self, ExperimentConfig, Metric};
use lppm_core::mechanisms::{epsilon_noise_table, Epsilon, Mechanism, Seed, EPSILON_SWEEP};
use lppm_core::metrics::{average_error, default_alpha_grid, poi_report, usefulness_curve, USE_CASE_ALPHAS};

#[derive(Parser)]
#[command(name = "lppm", version, about = "Evaluate location-privacy preserving mechanisms")]
struct Cli {
    /// Master seed; for `run` it replaces the config's master_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory for `run`, output file for `obfuscate` and `attack`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Dataset file or directory.
    path: PathBuf,
    #[arg(long, default_value = "canonical")]
    format: SourceFormat,
    /// Cleaning rule, e.g. `sf_drop_empty` or `min_points_per_user:25`; repeatable.
    #[arg(long = "preprocess")]
    rules: Vec<PreprocessRule>,
}

impl Input {
    fn load(&self) -> Result<Dataset> {
        let name = self
            .path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut ds =
            load(self.format, &self.path, &name).with_context(|| format!("loading {}", self.path.display()))?;
        for rule in &self.rules {
            ds = preprocess(&ds, *rule)?;
        }
        Ok(ds)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismKind {
    Identity,
    PlanarLaplace,
    Adaptive,
    Clustering,
    MemoryClustering,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKind {
    SlidingAverage,
    MapMatching,
    PoiExtraction,
}

#[derive(Subcommand)]
enum Command {
    /// Median per-user attributes of a dataset.
    Profile(Input),
    /// Monte-Carlo average and maximum noise for a list of ε.
    EpsilonTable {
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
    },
    /// Obfuscates every trace; writes canonical CSV.
    Obfuscate {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum)]
        mechanism: MechanismKind,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Cluster radius in meters.
        #[arg(long, default_value_t = 200.0)]
        radius: f64,
    },
    /// Runs an attack on reported traces; writes canonical CSV, or a POI
    /// table for `poi-extraction`.
    Attack {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum)]
        attack: AttackKind,
        /// Sliding window radius.
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Road node CSV `node_id,lat,lon`.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 250.0)]
        max_diameter: f64,
        #[arg(long, default_value_t = 3600)]
        min_dwell: i64,
    },
    /// Scores an evaluated dataset against the original, per user and mean.
    Evaluate {
        /// Original traces (canonical CSV).
        original: PathBuf,
        /// Obfuscated or attacked traces (canonical CSV), same users and timestamps.
        evaluated: PathBuf,
    },
    /// Runs an experiment config.
    Run { config: PathBuf },
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

fn cmd_profile(input: &Input) -> Result<()> {
    let ds = input.load()?;
    let p = profile(&ds);
    println!("users                 {}", p.n_users);
    println!("points                {}", p.n_points);
    println!("points_per_user       {}", fmt_opt(p.points_per_user));
    println!("consecutive_dist_m    {}", fmt_opt(p.consecutive_distance_m));
    println!("frequency_hz          {}", fmt_opt(p.frequency_hz));
    println!("velocity_mps          {}", fmt_opt(p.velocity_mps));
    println!("time_window_days      {}", fmt_opt(p.time_window_days));
    println!("density_per_km2       {}", fmt_opt(p.density_per_km2));
    println!("area_km2              {}", fmt_opt(p.area_km2));
    println!("degenerate            {}", p.degenerate);
    if ds.provenance.skipped_rows > 0 {
        println!("skipped_rows          {}", ds.provenance.skipped_rows);
    }
    Ok(())
}

fn cmd_epsilon_table(epsilons: Option<Vec<f64>>, samples: usize, seed: u64) -> Result<()> {
    let eps = epsilons
        .unwrap_or_else(|| EPSILON_SWEEP.to_vec())
        .into_iter()
        .map(Epsilon::new)
        .collect::<Result<Vec<_>, _>>()?;
    println!("epsilon,avg_noise_m,max_noise_m");
    for row in epsilon_noise_table(&eps, samples, Seed(seed))? {
        println!("{},{:.1},{:.1}", row.epsilon, row.avg_noise_m, row.max_noise_m);
    }
    Ok(())
}

fn cmd_obfuscate(
    input: &Input,
    kind: MechanismKind,
    epsilon: Option<f64>,
    radius: f64,
    seed: u64,
    out: &Option<PathBuf>,
) -> Result<()> {
    let mechanism = match kind {
        MechanismKind::Identity => Mechanism::Identity,
        MechanismKind::PlanarLaplace => Mechanism::PlanarLaplace,
        MechanismKind::Adaptive => Mechanism::adaptive_default(),
        MechanismKind::Clustering => Mechanism::Clustering { radius },
        MechanismKind::MemoryClustering => Mechanism::MemoryClustering { radius },
    };
    mechanism.validate()?;
    let eps = match (mechanism.uses_epsilon(), epsilon) {
        (true, None) => bail!("--epsilon is required for {}", mechanism.kind_name()),
        (true, Some(e)) => Some(Epsilon::new(e)?),
        (false, _) => None,
    };
    let ds = input.load()?;
    let traces = ds
        .traces
        .par_iter()
        .map(|tr| {
            let s = Seed(seed).for_cell(&tr.user_id, mechanism.kind_name(), eps.map(Epsilon::value));
            mechanism
                .apply(tr, eps, s)
                .with_context(|| format!("user {}", tr.user_id))
        })
        .collect::<Result<Vec<_>>>()?;
    let result = Dataset::new(ds.name, SourceFormat::Canonical, traces)?;
    write_canonical(&result, output(out)?)?;
    Ok(())
}

fn write_pois(rows: &[(String, Vec<Poi>)], out: &Option<PathBuf>) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record(["user_id", "t_start", "t_end", "lat", "lon", "n_points"])?;
    for (user, pois) in rows {
        for p in pois {
            w.write_record([
                user.clone(),
                p.t_start.to_string(),
                p.t_end.to_string(),
                format!("{:.7}", p.centroid.lat()),
                format!("{:.7}", p.centroid.lon()),
                p.n_points.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_attack(
    input: &Input,
    attack: AttackKind,
    k: usize,
    graph: &Option<PathBuf>,
    poi: (f64, i64),
    out: &Option<PathBuf>,
) -> Result<()> {
    let ds = input.load()?;
    let traces = match attack {
        AttackKind::PoiExtraction => {
            let rows = ds
                .traces
                .par_iter()
                .map(|tr| Ok((tr.user_id.clone(), extract_pois(tr, poi.0, poi.1)?)))
                .collect::<Result<Vec<_>>>()?;
            return write_pois(&rows, out);
        }
        AttackKind::SlidingAverage => ds
            .traces
            .par_iter()
            .map(|tr| Ok(sliding_average(tr, k)?))
            .collect::<Result<Vec<_>>>()?,
        AttackKind::MapMatching => {
            let Some(path) = graph else {
                bail!("--graph is required for map-matching")
            };
            let g = load_road_graph(path)?;
            ds.traces.par_iter().map(|tr| map_match(tr, &g)).collect()
        }
    };
    write_canonical(&Dataset::new(ds.name, SourceFormat::Canonical, traces)?, output(out)?)?;
    Ok(())
}

fn cmd_evaluate(original: &Path, evaluated: &Path) -> Result<()> {
    let load_csv = |p: &Path| load(SourceFormat::Canonical, p, "").with_context(|| format!("loading {}", p.display()));
    let (orig, eval) = (load_csv(original)?, load_csv(evaluated)?);
    let alphas = default_alpha_grid();
    println!("user,average_error_m,delta_500,delta_1000,delta_10000,poi_recall");
    let mut sums = [Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for o in &orig.traces {
        let Some(e) = eval.traces.iter().find(|t| t.user_id == o.user_id) else {
            bail!("user {} missing from {}", o.user_id, evaluated.display());
        };
        let err = average_error(o, e).with_context(|| format!("user {}", o.user_id))?;
        let curve = usefulness_curve(o, e, &alphas)?;
        let deltas: Vec<f64> = USE_CASE_ALPHAS
            .iter()
            .map(|&a| curve.delta_at(a).unwrap_or(f64::NAN))
            .collect();
        let recall = poi_report(&extract_pois(o, 250.0, 3600)?, &extract_pois(e, 250.0, 3600)?).recall;
        println!(
            "{},{err:.3},{:.4},{:.4},{:.4},{}",
            o.user_id,
            deltas[0],
            deltas[1],
            deltas[2],
            recall.map_or(String::new(), |r| format!("{r:.4}"))
        );
        sums[0].push(err);
        for i in 0..3 {
            sums[i + 1].push(deltas[i]);
        }
        sums[4].extend(recall);
    }
    let m: Vec<String> = sums
        .iter()
        .map(|v| harness::aggregate(v).map_or(String::new(), |x| format!("{x:.4}")))
        .collect();
    println!("{},{},{},{},{},{}", harness::AGGREGATE, m[0], m[1], m[2], m[3], m[4]);
    Ok(())
}

fn cmd_run(path: &Path, cli: &Cli) -> Result<()> {
    let mut config = ExperimentConfig::from_path(path)?;
    if let Some(s) = cli.seed {
        config.master_seed = s;
    }
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    let out = cli.out.clone().unwrap_or_else(|| config.resolved_output_dir());
    let rows = harness::run_to_dir(&config, &out)?;
    let errors = rows.iter().filter(|r| r.unit == harness::ERROR_UNIT).count();
    let aggregates = rows
        .iter()
        .filter(|r| r.user == harness::AGGREGATE && r.metric != Metric::Usefulness.name())
        .count();
    eprintln!(
        "{} rows ({} scalar aggregates, {} failed cells) written to {}",
        rows.len(),
        aggregates,
        errors,
        out.join("results.csv").display()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Profile(input) => cmd_profile(input),
        Command::EpsilonTable { epsilons, samples } => cmd_epsilon_table(epsilons.clone(), *samples, seed),
        Command::Obfuscate {
            input,
            mechanism,
            epsilon,
            radius,
        } => cmd_obfuscate(input, *mechanism, *epsilon, *radius, seed, &cli.out),
        Command::Attack {
            input,
            attack,
            k,
            graph,
            max_diameter,
            min_dwell,
        } => cmd_attack(input, *attack, *k, graph, (*max_diameter, *min_dwell), &cli.out),
        Command::Evaluate { original, evaluated } => cmd_evaluate(original, evaluated),
        Command::Run { config } => cmd_run(config, &cli),
    }
}
