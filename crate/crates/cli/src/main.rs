mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tailkrig::design::{equally_spaced, lhs, write_points_csv, DesignError, Domain};
use tailkrig::evt::{
    empirical_cvar, fit_gpd, pot_cvar, spectral_pot, EvtError, FitConfig, GpdFit, RiskEstimate, Sample,
    SpectralMeasure,
};
use tailkrig::fmt_f64;
use tailkrig::harness::{
    run_with_tests, summarize, test_set, wilcoxon_table, write_boxplot_csv, write_results_csv, write_summary_csv,
    write_wilcoxon_csv, HarnessError,
};
use tailkrig::kriging::{KrigingError, KrigingModel};
use tailkrig::rng::RngStream;

use config::RunConfig;

const DEFAULT_SEED: u64 = 42;
const DESIGN_STREAM: u64 = 0x636c_6964;

#[derive(Parser, Debug)]
#[command(name = "tailkrig", version, about = "Global CVaR estimation with extreme-value tails and stochastic kriging")]
struct Cli {
    /// Root random seed.
    #[arg(long, global = true, env = "TAILKRIG_SEED")]
    seed: Option<u64>,
    /// Worker threads for the experiment harness (default: all cores).
    #[arg(long, global = true, env = "TAILKRIG_THREADS")]
    threads: Option<usize>,
    /// Directory for output files; single-result commands print to stdout without it.
    #[arg(long, global = true, env = "TAILKRIG_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Experiment configuration file (TOML), used by `run`.
    #[arg(long, global = true, env = "TAILKRIG_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a generalized Pareto tail to a column of losses and print the fit as JSON.
    FitGpd {
        #[arg(long)]
        input: PathBuf,
        /// Column name; defaults to the first column.
        #[arg(long)]
        column: Option<String>,
        #[arg(long, default_value_t = 0.9)]
        threshold_quantile: f64,
    },
    /// Estimate a tail risk measure of a column of losses and print it as JSON.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        column: Option<String>,
        /// Tail level; required unless `--spectrum` is given.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum, default_value_t = EstimateMethod::Pot)]
        method: EstimateMethod,
        /// JSON risk spectrum for `--method spectral`.
        #[arg(long)]
        spectrum: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        threshold_quantile: f64,
    },
    /// Run the experiments of a configuration file and write result CSVs.
    Run,
    /// Predict with a saved kriging model at the points of a CSV file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        points: PathBuf,
    },
    /// Emit design points as CSV.
    Design {
        #[arg(long, value_enum, default_value_t = DesignKind::Lhs)]
        kind: DesignKind,
        #[arg(long, value_enum, default_value_t = DomainPreset::Benchmark)]
        domain: DomainPreset,
        #[arg(long)]
        count: usize,
        /// Custom lower bounds (comma separated); overrides `--domain` with `--upper`.
        #[arg(long, value_delimiter = ',', requires = "upper")]
        lower: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', requires = "lower")]
        upper: Option<Vec<f64>>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EstimateMethod {
    Empirical,
    Pot,
    Spectral,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DesignKind {
    Lhs,
    EquallySpaced,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DomainPreset {
    Benchmark,
    San,
}

/// Exit status 1 for bad input, 2 for numerical failure.
#[derive(Debug)]
enum Failure {
    Validation(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    fn validation(msg: impl std::fmt::Display) -> Self {
        Self::Validation(anyhow!("{msg}"))
    }

    fn classify<E: std::error::Error + Send + Sync + 'static>(e: E, validation: bool) -> Self {
        if validation {
            Self::Validation(e.into())
        } else {
            Self::Numerical(e.into())
        }
    }
}

impl From<EvtError> for Failure {
    fn from(e: EvtError) -> Self {
        let v = e.is_validation();
        Self::classify(e, v)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let v = e.is_validation();
        Self::classify(e, v)
    }
}

impl From<KrigingError> for Failure {
    fn from(e: KrigingError) -> Self {
        let v = e.is_validation();
        Self::classify(e, v)
    }
}

impl From<DesignError> for Failure {
    fn from(e: DesignError) -> Self {
        Self::Validation(e.into())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Validation(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::Validation(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::Validation(e.into())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

/// Numeric CSV with a mandatory header row.
struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> CliResult<Table> {
    let file = File::open(path).map_err(|e| Failure::validation(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Failure::validation(format!("{}: empty file or missing header row", path.display())));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Failure::validation(format!("{}:{line}: not a number: '{f}'", path.display()))))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Failure::validation(format!("{}: no data rows", path.display())));
    }
    Ok(Table { headers, rows })
}

fn read_losses(path: &Path, column: Option<&str>) -> CliResult<Sample> {
    let table = read_table(path)?;
    let idx = match column {
        None => 0,
        Some(name) => table
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Failure::validation(format!("{}: no column '{name}'", path.display())))?,
    };
    Ok(Sample::new(table.rows.iter().map(|r| r[idx]).collect())?)
}

/// Writes to `<out_dir>/<name>` when an output directory is set, stdout otherwise.
fn emit(out_dir: Option<&Path>, name: &str, write: impl FnOnce(&mut dyn Write) -> CliResult) -> CliResult {
    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out_dir: Option<&Path>, name: &str, value: &T) -> CliResult {
    emit(out_dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn fit_config(threshold_quantile: f64) -> CliResult<FitConfig> {
    if !(threshold_quantile > 0.0 && threshold_quantile < 1.0) {
        return Err(Failure::validation(format!("threshold quantile {threshold_quantile} must lie in (0, 1)")));
    }
    Ok(FitConfig { threshold_quantile, ..FitConfig::default() })
}

fn cmd_fit_gpd(cli: &Cli, input: &Path, column: Option<&str>, threshold_quantile: f64) -> CliResult {
    let sample = read_losses(input, column)?;
    let fit = fit_gpd(&sample, &fit_config(threshold_quantile)?)?;
    emit_json(cli.out_dir.as_deref(), "gpd_fit.json", &fit)
}

#[derive(Serialize)]
struct EstimateReport {
    estimate: RiskEstimate,
    diagnostics: EstimateDiagnostics,
}

#[derive(Serialize)]
struct EstimateDiagnostics {
    sample_size: usize,
    fit: Option<GpdFit>,
}

fn cmd_estimate(
    cli: &Cli,
    input: &Path,
    column: Option<&str>,
    alpha: Option<f64>,
    method: EstimateMethod,
    spectrum: Option<&Path>,
    threshold_quantile: f64,
) -> CliResult {
    let spectrum = match (method, spectrum) {
        (EstimateMethod::Spectral, Some(p)) => {
            let text = fs::read_to_string(p)?;
            let phi = match serde_json::from_str(&text)? {
                SpectralMeasure::Cvar { alpha } => SpectralMeasure::cvar(alpha)?,
                SpectralMeasure::Step { knots, weights } => SpectralMeasure::step(knots, weights)?,
            };
            Some(phi)
        }
        (_, Some(_)) => return Err(Failure::validation("--spectrum only applies to --method spectral")),
        _ => None,
    };
    let alpha = match (alpha, &spectrum) {
        (Some(a), _) if !(a > 0.0 && a < 1.0) => return Err(EvtError::InvalidAlpha(a).into()),
        (Some(a), _) => Some(a),
        (None, Some(_)) => None,
        (None, None) => return Err(Failure::validation("--alpha is required")),
    };
    let sample = read_losses(input, column)?;
    let (estimate, fit) = match method {
        EstimateMethod::Empirical => (empirical_cvar(&sample, alpha.unwrap_or_default())?, None),
        EstimateMethod::Pot | EstimateMethod::Spectral => {
            let fit = fit_gpd(&sample, &fit_config(threshold_quantile)?)?;
            let est = match spectrum {
                Some(phi) => spectral_pot(&fit, &phi)?,
                None if matches!(method, EstimateMethod::Spectral) => {
                    spectral_pot(&fit, &SpectralMeasure::cvar(alpha.unwrap_or_default())?)?
                }
                None => pot_cvar(&fit, alpha.unwrap_or_default())?,
            };
            (est, Some(fit))
        }
    };
    let report = EstimateReport { estimate, diagnostics: EstimateDiagnostics { sample_size: sample.len(), fit } };
    emit_json(cli.out_dir.as_deref(), "estimate.json", &report)
}

fn cmd_run(cli: &Cli) -> CliResult {
    let path = cli.config.as_deref().ok_or_else(|| Failure::validation("run needs --config <FILE>"))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    let config = RunConfig::parse(&text).map_err(|errors| {
        let list: Vec<String> = errors.iter().map(|e| format!("  - {e}")).collect();
        Failure::validation(format!("{}: {} schema error(s)\n{}", path.display(), errors.len(), list.join("\n")))
    })?;
    let seed = cli.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&out_dir)?;

    let mut records = Vec::new();
    let mut cached: Option<(tailkrig::harness::Scenario, tailkrig::harness::TestSet)> = None;
    for exp in config.experiments(seed) {
        exp.validate()?;
        if cached.as_ref().is_none_or(|(s, _)| *s != exp.scenario) {
            log::info!("computing {} test set", exp.scenario);
            cached = Some((exp.scenario, test_set(&exp)?));
        }
        let tests = &cached.as_ref().expect("test set cached above").1;
        log::info!("running {} allocation {}", exp.scenario, exp.allocation.label());
        records.extend(run_with_tests(&exp, tests)?);
    }

    let write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> csv::Result<()>| -> CliResult {
        let mut w = BufWriter::new(File::create(out_dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    };
    write("results.csv", &|w| write_results_csv(&records, w))?;
    write("summary.csv", &|w| write_summary_csv(&summarize(&records), w))?;
    write("boxplot.csv", &|w| write_boxplot_csv(&records, w))?;
    write("wilcoxon.csv", &|w| write_wilcoxon_csv(&wilcoxon_table(&records), w))?;
    let failed = records.iter().filter(|r| r.mape.is_none()).count();
    eprintln!("wrote {} records to {} ({failed} failed cells)", records.len(), out_dir.display());
    Ok(())
}

fn cmd_predict(cli: &Cli, model: &Path, points: &Path) -> CliResult {
    let text = fs::read_to_string(model).map_err(|e| Failure::validation(format!("cannot read {}: {e}", model.display())))?;
    let model = KrigingModel::from_json(&text).map_err(|e| Failure::validation(format!("{}: {e}", model.display())))?;
    let table = read_table(points)?;
    if table.headers.len() != model.dim() {
        return Err(KrigingError::DimensionMismatch { expected: model.dim(), found: table.headers.len() }.into());
    }
    let predictions = table.rows.iter().map(|x| model.predict(x)).collect::<Result<Vec<_>, _>>()?;
    emit(cli.out_dir.as_deref(), "predictions.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        let mut header = table.headers.clone();
        header.extend(["mean".to_string(), "extrinsic_sd".to_string()]);
        out.write_record(&header)?;
        for (x, (mean, sd)) in table.rows.iter().zip(&predictions) {
            let mut line: Vec<String> = x.iter().copied().map(fmt_f64).collect();
            line.push(fmt_f64(*mean));
            line.push(fmt_f64(*sd));
            out.write_record(&line)?;
        }
        out.flush()?;
        Ok(())
    })
}

fn cmd_design(
    cli: &Cli,
    kind: DesignKind,
    preset: DomainPreset,
    count: usize,
    lower: Option<&[f64]>,
    upper: Option<&[f64]>,
) -> CliResult {
    let domain = match (lower, upper) {
        (Some(l), Some(u)) => {
            if l.len() != u.len() {
                return Err(Failure::validation("--lower and --upper need the same number of bounds"));
            }
            Domain::new(l.to_vec(), u.to_vec())?
        }
        _ => match preset {
            DomainPreset::Benchmark => Domain::benchmark(),
            DomainPreset::San => Domain::san(),
        },
    };
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let points = match kind {
        DesignKind::Lhs => lhs(&domain, count, &RngStream::new(seed, DESIGN_STREAM))?,
        DesignKind::EquallySpaced => equally_spaced(&domain, count)?,
    };
    emit(cli.out_dir.as_deref(), "design.csv", |w| Ok(write_points_csv(&points, w)?))
}

fn execute(cli: &Cli) -> CliResult {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::validation(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::FitGpd { input, column, threshold_quantile } => {
            cmd_fit_gpd(cli, input, column.as_deref(), *threshold_quantile)
        }
        Command::Estimate { input, column, alpha, method, spectrum, threshold_quantile } => {
            cmd_estimate(cli, input, column.as_deref(), *alpha, *method, spectrum.as_deref(), *threshold_quantile)
        }
        Command::Run => cmd_run(cli),
        Command::Predict { model, points } => cmd_predict(cli, model, points),
        Command::Design { kind, domain, count, lower, upper } => {
            cmd_design(cli, *kind, *domain, *count, lower.as_deref(), upper.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("TAILKRIG_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(2)
        }
    }
}
