use std::path::{Path, PathBuf};

use dacs::density::{exact_knn_density, lsh_assign, lsh_density, DensityProfile, Metric};
use dacs::selection::{select, ScoreSource, Strategy, UncertaintyScores};
use dacs::simulator::metrics::spearman;
use dacs::simulator::{run_grid, ExperimentReport, RunStatus};
use dacs::{FeatureMatrix, PoolState, Seed};
use serde_json::json;

use crate::embedding::{read_embeddings, Format};
use crate::runconfig::RunConfig;
use crate::{read_text, usage, write_atomic, CliError, CliResult};

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let mut config = match path {
        Some(p) => RunConfig::parse(&read_text(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    config.apply_env()?;
    Ok(config)
}

fn unit_rows(x: FeatureMatrix) -> CliResult<FeatureMatrix> {
    if x.is_unit_norm() {
        return Ok(x);
    }
    log::info!("embeddings are not unit-norm; normalizing rows");
    Ok(x.normalize_rows()?)
}

/// Newline-separated sample indices; blank lines are skipped.
pub fn parse_indices(text: &str, n: usize) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: usize = t
            .parse()
            .map_err(|_| usage(format!("line {}: '{t}' is not a sample index", i + 1)))?;
        if v >= n {
            return Err(usage(format!("line {}: index {v} out of range for {n} samples", i + 1)));
        }
        out.push(v);
    }
    Ok(out)
}

/// Newline-separated scores, one per sample in index order.
pub fn parse_scores(text: &str, n: usize) -> CliResult<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| usage(format!("line {}: '{t}' is not a finite score", i + 1)))?;
        out.push(v);
    }
    if out.len() != n {
        return Err(usage(format!("expected {n} scores, one per sample, got {}", out.len())));
    }
    Ok(out)
}

pub struct SelectArgs {
    pub embeddings: PathBuf,
    pub format: Format,
    pub labeled: PathBuf,
    pub budget: usize,
    pub strategy: Strategy,
    pub scores: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn cmd_select(args: &SelectArgs) -> CliResult<()> {
    let x = unit_rows(read_embeddings(&args.embeddings, args.format)?)?;
    let labeled = parse_indices(&read_text(&args.labeled)?, x.n())
        .map_err(|e| usage(format!("{}: {e}", args.labeled.display())))?;
    let pool = PoolState::new(x.n(), &labeled).map_err(|e| usage(format!("{}: {e}", args.labeled.display())))?;
    if args.budget > pool.unlabeled().len() {
        return Err(usage(format!(
            "budget {} exceeds the {} unlabeled samples",
            args.budget,
            pool.unlabeled().len()
        )));
    }
    let config = load_config(args.config.as_deref())?;
    let mut acq = config.sim.acquisition.clone();
    acq.budget = args.budget;
    acq.validate().map_err(|e| usage(e.to_string()))?;

    let scores = match (&args.scores, args.strategy.needs_scores()) {
        (Some(p), true) => {
            let v = parse_scores(&read_text(p)?, x.n()).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            Some(UncertaintyScores::new(v, ScoreSource::ExternalFile))
        }
        (None, true) => return Err(usage(format!("strategy '{}' needs --scores", args.strategy))),
        (Some(_), false) => {
            log::warn!("--scores ignored by strategy '{}'", args.strategy);
            None
        }
        (None, false) => None,
    };

    let result = select(args.strategy, &pool, &x, &acq, Seed(config.seed), scores.as_ref())?;
    for w in &result.diagnostics.warnings {
        log::warn!("{w}");
    }
    let doc = json!({
        "selected": result.selected,
        "per_cluster": result.per_cluster,
        "diagnostics": result.diagnostics,
        "config_echo": {
            "strategy": args.strategy,
            "seed": config.seed,
            "n": x.n(),
            "d": x.d(),
            "labeled": labeled.len(),
            "acquisition": acq,
        },
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("selection serializes");
    text.push('\n');
    write_atomic(&args.out, text.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DensityMode {
    Exact,
    Lsh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum MetricArg {
    /// Cosine distance for unit-norm input, Euclidean otherwise.
    #[default]
    Auto,
    Euclidean,
    Cosine,
}

pub struct DensityArgs {
    pub embeddings: PathBuf,
    pub format: Format,
    pub mode: DensityMode,
    pub knn: usize,
    pub buckets: usize,
    pub metric: MetricArg,
    pub seed: u64,
    /// Also run the other mode and report the rank agreement on stderr.
    pub compare: bool,
    pub out: PathBuf,
}

fn exact(x: &FeatureMatrix, knn: usize, metric: MetricArg) -> CliResult<DensityProfile> {
    if x.n() < 2 {
        return Err(usage("exact density needs at least 2 samples"));
    }
    let k = knn.min(x.n() - 1);
    if k < knn {
        log::warn!("k_nn {knn} reduced to {k} for {} samples", x.n());
    }
    let metric = match metric {
        MetricArg::Euclidean => Metric::Euclidean,
        MetricArg::Cosine => Metric::CosineDistance,
        MetricArg::Auto if x.is_unit_norm() => Metric::CosineDistance,
        MetricArg::Auto => Metric::Euclidean,
    };
    Ok(exact_knn_density(x, k, metric)?)
}

fn lsh(x: &FeatureMatrix, buckets: usize, seed: u64) -> CliResult<DensityProfile> {
    if buckets == 0 || !buckets.is_multiple_of(2) {
        return Err(usage(format!("--buckets must be a positive even number, got {buckets}")));
    }
    let z = unit_rows(x.clone())?;
    let assignment = lsh_assign(&z, buckets, Seed(seed))?;
    Ok(lsh_density(&z, &assignment)?)
}

pub fn cmd_density(args: &DensityArgs) -> CliResult<()> {
    let x = read_embeddings(&args.embeddings, args.format)?;
    let profile = match args.mode {
        DensityMode::Exact => exact(&x, args.knn, args.metric)?,
        DensityMode::Lsh => lsh(&x, args.buckets, args.seed)?,
    };
    let convention = profile.convention.as_str();
    let mut csv = String::from("index,density,convention\n");
    for (i, v) in profile.values.iter().enumerate() {
        csv.push_str(&format!("{i},{v},{convention}\n"));
    }
    write_atomic(&args.out, csv.as_bytes())?;

    eprintln!("{} samples, {:?} density, convention {convention}", x.n(), args.mode);
    if args.compare {
        let other = match args.mode {
            DensityMode::Exact => lsh(&x, args.buckets, args.seed)?,
            DensityMode::Lsh => exact(&x, args.knn, args.metric)?,
        };
        let rho = spearman(&profile.denser_is_higher(), &other.denser_is_higher())?;
        eprintln!("spearman(lsh, exact) on denser-is-higher scale: {rho:.4}");
    }
    Ok(())
}

pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn report_file_name(report: &ExperimentReport) -> String {
    format!("{}-seed{}.json", report.strategy, report.seed)
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let config = load_config(args.config.as_deref())?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut echo = serde_json::to_string_pretty(&config).expect("config serializes");
    echo.push('\n');
    write_atomic(&args.out.join("config.json"), echo.as_bytes())?;

    let seeds = config.seeds();
    log::info!(
        "running {} strategies x {} seeds on {} samples",
        config.strategies.len(),
        seeds.len(),
        config.dataset.n_samples()
    );
    let results = run_grid(&config.dataset, &config.strategies, &seeds, &config.sim);

    let mut csv = format!("{}\n", ExperimentReport::CSV_HEADER);
    let mut failures = Vec::new();
    let mut first_error = None;
    for (strategy, seed, result) in &results {
        match result {
            Ok(report) => {
                let mut text = report.to_json();
                text.push('\n');
                write_atomic(&args.out.join(report_file_name(report)), text.as_bytes())?;
                for row in report.csv_rows() {
                    csv.push_str(&row);
                    csv.push('\n');
                }
                if let RunStatus::Diverged { message } = &report.status {
                    failures.push(format!("{strategy} seed {seed}: {message}"));
                }
            }
            Err(e) => {
                log::error!("{strategy} seed {seed}: {e}");
                failures.push(format!("{strategy} seed {seed}: {e}"));
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    write_atomic(&args.out.join("summary.csv"), csv.as_bytes())?;

    if failures.len() == results.len() {
        if let Some(e) = first_error {
            return Err(usage(format!("every run failed; first error: {e}")));
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Partial(format!(
            "{} of {} runs failed: {}",
            failures.len(),
            results.len(),
            failures.join("; ")
        )));
    }
    Ok(())
}
