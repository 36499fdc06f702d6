use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use eivcp::detect::QuantileTable;
use eivcp::harness::{self, experiment, run, Command, RunConfig, StatChoice};
use eivcp::limit_sim;

#[derive(Parser)]
#[command(name = "eivcp", version, about = "Changepoint tests for errors-in-variables linear relations")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "EIVCP_THREADS")]
    threads: Option<usize>,
    /// Log progress at info level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Test for a change in the linear relation of a CSV dataset.
    Detect(DataArgs),
    /// Estimate the changepoint location of a CSV dataset.
    Estimate(DataArgs),
    /// Simulate critical values of the limit laws.
    Critvals(SimArgs),
    /// Generate a synthetic dataset from a scenario TOML file.
    Simulate(ScenarioArgs),
    /// Run a size/power grid described by a TOML file.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Stat {
    Sup,
    Int,
    Both,
}

impl From<Stat> for StatChoice {
    fn from(s: Stat) -> Self {
        match s {
            Stat::Sup => StatChoice::Sup,
            Stat::Int => StatChoice::Int,
            Stat::Both => StatChoice::Both,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// CSV with header `x1..xp,y` (or `y1..yq`).
    #[arg(long)]
    data: PathBuf,
    /// Headerless (p+q)x(p+q) error covariance CSV; identity if omitted.
    #[arg(long)]
    sigma: Option<PathBuf>,
    #[arg(long, default_value_t = harness::config::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "both")]
    stat: Stat,
    /// Seed of the limit-law draws behind the p-values.
    #[arg(long, default_value_t = harness::config::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = limit_sim::DEFAULT_GRID_POINTS)]
    grid_points: usize,
    /// Limit-law draws for p-values (0 disables them).
    #[arg(long, default_value_t = harness::config::DEFAULT_POOL_REPS)]
    reps: usize,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated columns observed without error, projected out first.
    #[arg(long, value_delimiter = ',')]
    exact_cols: Vec<String>,
    /// Project out an intercept.
    #[arg(long)]
    intercept: bool,
    /// Rescale a randomly spaced series (single covariate) before testing.
    #[arg(long)]
    rescale: bool,
    /// Quantile table file to use instead of the published critical values.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Print the JSON report instead of the summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = harness::config::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = limit_sim::DEFAULT_GRID_POINTS)]
    grid_points: usize,
    #[arg(long, default_value_t = limit_sim::DEFAULT_REPS)]
    reps: usize,
    /// Write the quantile table file here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML.
    #[arg(long)]
    config: PathBuf,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Grid TOML.
    #[arg(long)]
    config: PathBuf,
    /// Override the replicate count of the grid file.
    #[arg(long)]
    reps: Option<usize>,
    /// Override the seed of the grid file.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report path; CSV companions are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
}

fn data_config(command: Command, a: &DataArgs) -> RunConfig {
    RunConfig {
        data_path: Some(a.data.clone()),
        sigma_path: a.sigma.clone(),
        alpha: a.alpha,
        statistic: a.stat.into(),
        seed: a.seed,
        grid_points: a.grid_points,
        reps: a.reps,
        output_path: a.out.clone(),
        exact_regressor_columns: a.exact_cols.clone(),
        intercept: a.intercept,
        rescale: a.rescale,
        table_path: a.table.clone(),
        ..RunConfig::new(command)
    }
}

fn emit(json: String, summary: String, out: Option<&PathBuf>, print_json: bool) -> Result<()> {
    if let Some(path) = out {
        std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    if print_json {
        print!("{json}");
    } else {
        print!("{summary}");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    harness::init_threads(cli.threads)?;

    match cli.command {
        Cmd::Detect(a) => {
            let cfg = data_config(Command::Detect, &a);
            let report = run::run_detect(&cfg).context("detect")?;
            emit(run::render_json(&report)?, report.summary(), a.out.as_ref(), a.json)?;
        }
        Cmd::Estimate(a) => {
            let cfg = data_config(Command::Estimate, &a);
            let report = run::run_estimate(&cfg).context("estimate")?;
            emit(run::render_json(&report)?, report.summary(), a.out.as_ref(), a.json)?;
        }
        Cmd::Critvals(a) => {
            let cfg = RunConfig {
                seed: a.seed,
                grid_points: a.grid_points,
                reps: a.reps,
                output_path: a.out.clone(),
                ..RunConfig::new(Command::Critvals)
            };
            let report = run::run_critvals(&cfg).context("critvals")?;
            if let Some(path) = &a.out {
                std::fs::write(path, &report.table_text).with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{}", report.summary());
        }
        Cmd::Simulate(a) => {
            let cfg = RunConfig {
                config_path: Some(a.config.clone()),
                output_path: a.out.clone(),
                ..RunConfig::new(Command::Simulate)
            };
            let report = run::run_simulate(&cfg).context("simulate")?;
            match &a.out {
                Some(path) => {
                    std::fs::write(path, &report.csv_text).with_context(|| format!("writing {}", path.display()))?;
                    eprintln!(
                        "wrote {} rows to {}{}",
                        report.n,
                        path.display(),
                        report.tau.map_or(String::new(), |t| format!(" (change after row {t})"))
                    );
                }
                None => print!("{}", report.csv_text),
            }
        }
        Cmd::Experiment(a) => {
            let mut cfg = RunConfig {
                config_path: Some(a.config.clone()),
                output_path: a.out.clone(),
                table_path: a.table.clone(),
                ..RunConfig::new(Command::Experiment)
            };
            cfg.validate()?;
            let mut grid = experiment::load_config(&a.config).context("reading grid")?;
            if let Some(r) = a.reps {
                grid.reps = r;
            }
            if let Some(s) = a.seed {
                grid.seed = s;
            }
            cfg.reps = grid.reps;
            cfg.seed = grid.seed;
            let table = match &a.table {
                Some(p) => limit_sim::read_table(p)?,
                None => QuantileTable::published(),
            };
            let report = harness::run_experiment(&grid, &table).context("experiment")?;
            if let Some(path) = &a.out {
                for p in experiment::write_outputs(&report, path)? {
                    eprintln!("wrote {}", p.display());
                }
            }
            print!("{}", report.summary());
        }
    }
    Ok(())
}
