//! `mgnd`: fit generalized normal mixtures, run simulation studies, and
//! print density grids, descriptive statistics and model rankings.

mod input;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mgnd::select::{compare_models, default_candidates, describe, log_returns, SeriesStats};
use mgnd::sim::{builtin_scenario, run_scenario, ScenarioSpec};
use mgnd::{fit_multistart, Algorithm, Error, FitConfig, FitResult, GateRule, MgndModel};

const DEFAULT_GRID_POINTS: usize = 1001;

#[derive(Parser)]
#[command(name = "mgnd", version, about = "Mixtures of generalized normal distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a K-component mixture to a data column.
    Fit(FitCmd),
    /// Run an ECM vs ECMs Monte Carlo study.
    Simulate(SimulateCmd),
    /// Tabulate a fitted model's density on a grid.
    Density(DensityCmd),
    /// Descriptive statistics and the Jarque-Bera test.
    Stats(StatsCmd),
    /// Rank MGND against the normal mixture by AIC and BIC.
    Select(SelectCmd),
}

#[derive(Args)]
struct FitOptions {
    #[arg(long, value_parser = parse_algorithm, default_value = "ecms")]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 5e-3, allow_negative_numbers = true)]
    eta: f64,
    #[arg(long = "max-iter", default_value_t = 500)]
    max_iter: usize,
    #[arg(long = "fixed-shape")]
    fixed_shape: Option<f64>,
    /// ECMs gate rule: `signed` (g > eta) or `magnitude` (|g| > eta).
    #[arg(long, value_parser = parse_gate, default_value = "signed")]
    gate: GateRule,
    /// Reject location steps that decrease the expected log-likelihood.
    #[arg(long = "location-guard")]
    location_guard: bool,
}

impl FitOptions {
    fn config(&self) -> Result<FitConfig, CliError> {
        let cfg = FitConfig {
            algorithm: self.algorithm,
            epsilon: self.epsilon,
            eta: self.eta,
            max_iter: self.max_iter,
            n_starts: self.starts,
            seed: self.seed,
            fixed_shape: self.fixed_shape,
            gate: self.gate,
            location_guard: self.location_guard,
            ..FitConfig::default()
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitCmd {
    #[arg(long)]
    input: PathBuf,
    /// `.json` for the full fit result, `.csv` for the iteration trajectory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    components: usize,
    #[arg(long = "from-prices")]
    from_prices: bool,
    #[command(flatten)]
    fit: FitOptions,
}

#[derive(Args)]
struct SimulateCmd {
    /// Built-in scenario 1-4 or a scenario JSON file.
    #[arg(long)]
    scenario: String,
    /// `.tsv` for the summary table, `.json` for the full report.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long = "size")]
    sizes: Vec<usize>,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long, value_parser = parse_gate)]
    gate: Option<GateRule>,
    #[arg(long = "location-guard")]
    location_guard: bool,
}

#[derive(Args)]
struct DensityCmd {
    /// Model JSON, either bare or a fit result.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// `MIN,MAX,N`; defaults to the mean ± 10 standard deviations.
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    grid: Option<(f64, f64, usize)>,
    /// Data column whose log-likelihood under the model is printed.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct StatsCmd {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long = "from-prices")]
    from_prices: bool,
}

#[derive(Args)]
struct SelectCmd {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    components: usize,
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "from-prices")]
    from_prices: bool,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Fit(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Fit(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Fit(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::AllStartsFailed(_) | Error::AllCandidatesFailed(_) | Error::Initialization(_) => {
                CliError::Fit(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn parse_gate(s: &str) -> Result<GateRule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    match s {
        "ecm" => Ok(Algorithm::Ecm),
        "ecms" => Ok(Algorithm::Ecms),
        _ => Err(format!("expected 'ecm' or 'ecms', got '{s}'")),
    }
}

fn parse_grid(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [lo, hi, n] = parts[..] else {
        return Err(format!("expected MIN,MAX,N, got '{s}'"));
    };
    let lo: f64 = lo.parse().map_err(|_| format!("bad grid minimum '{lo}'"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad grid maximum '{hi}'"))?;
    let n: usize = n.parse().map_err(|_| format!("bad grid count '{n}'"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("grid needs finite MIN < MAX, got {lo}, {hi}"));
    }
    if n < 2 {
        return Err(format!("grid needs at least 2 points, got {n}"));
    }
    Ok((lo, hi, n))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Tsv,
    Csv,
}

fn format_of(path: &Path, allowed: &[Format]) -> Result<Format, CliError> {
    let format = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("json") => Some(Format::Json),
        Some("tsv") => Some(Format::Tsv),
        Some("csv") => Some(Format::Csv),
        _ => None,
    };
    format.filter(|f| allowed.contains(f)).ok_or_else(|| {
        let names: Vec<&str> = allowed
            .iter()
            .map(|f| match f {
                Format::Json => ".json",
                Format::Tsv => ".tsv",
                Format::Csv => ".csv",
            })
            .collect();
        CliError::Usage(format!("unsupported output {}; expected {}", path.display(), names.join(" or ")))
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn load_series(path: &Path, from_prices: bool) -> Result<Vec<f64>, CliError> {
    let values = input::read_series(path).map_err(CliError::Data)?;
    if from_prices {
        Ok(log_returns(&values)?)
    } else {
        Ok(values)
    }
}

fn summary_line(r: &FitResult) -> String {
    let mut line = format!("loglik={:.6} iterations={} converged={}", r.loglik, r.iterations, r.converged);
    for (k, c) in r.model.components().iter().enumerate() {
        let p = &c.params;
        let _ = write!(line, " | k{}: pi={:.4} mu={:.4} sigma={:.4} nu={:.4}", k + 1, c.pi, p.mu(), p.sigma(), p.nu());
    }
    line
}

fn trajectory_csv(r: &FitResult) -> String {
    let k = r.model.k();
    let mut out = String::from("iteration,loglik");
    for name in ["pi", "mu", "sigma", "nu", "gradient"] {
        for j in 1..=k {
            let _ = write!(out, ",{name}{j}");
        }
    }
    out.push('\n');
    for rec in &r.trajectory {
        let _ = write!(out, "{},{}", rec.iteration, rec.loglik);
        for v in [&rec.pi, &rec.mu, &rec.sigma, &rec.nu, &rec.gradient] {
            for x in v.iter() {
                let _ = write!(out, ",{x}");
            }
        }
        out.push('\n');
    }
    out
}

fn cmd_fit(cmd: &FitCmd) -> Result<(), CliError> {
    let config = cmd.fit.config()?;
    if cmd.components == 0 {
        return Err(CliError::Usage("--components must be at least 1".into()));
    }
    let format = cmd.output.as_deref().map(|p| format_of(p, &[Format::Json, Format::Csv])).transpose()?;
    let data = load_series(&cmd.input, cmd.from_prices)?;
    let result = fit_multistart(&data, cmd.components, &config)?;
    println!("{}", summary_line(&result.best));
    if let (Some(path), Some(format)) = (&cmd.output, format) {
        let text = match format {
            Format::Csv => trajectory_csv(&result.best),
            _ => result.best.to_json(),
        };
        write_file(path, &text)?;
    }
    Ok(())
}

fn load_scenario(arg: &str) -> Result<ScenarioSpec, CliError> {
    if let Ok(index) = arg.parse::<usize>() {
        return builtin_scenario(index).map_err(|e| CliError::Usage(e.to_string()));
    }
    let path = Path::new(arg);
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {arg}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{arg}: invalid scenario: {e}")))
}

fn cmd_simulate(cmd: &SimulateCmd) -> Result<(), CliError> {
    let format = cmd.output.as_deref().map(|p| format_of(p, &[Format::Tsv, Format::Json])).transpose()?;
    let mut spec = load_scenario(&cmd.scenario)?;
    if let Some(r) = cmd.replicates {
        spec.replicates = r;
    }
    if !cmd.sizes.is_empty() {
        spec.sample_sizes = cmd.sizes.clone();
    }
    if let Some(seed) = cmd.seed {
        spec.seed = seed;
    }
    for cfg in [&mut spec.fit_config_ecm, &mut spec.fit_config_ecms] {
        if let Some(s) = cmd.starts {
            cfg.n_starts = s;
        }
        if let Some(e) = cmd.epsilon {
            cfg.epsilon = e;
        }
        if let Some(m) = cmd.max_iter {
            cfg.max_iter = m;
        }
        if cmd.location_guard {
            cfg.location_guard = true;
        }
    }
    if let Some(eta) = cmd.eta {
        spec.fit_config_ecms.eta = eta;
    }
    if let Some(gate) = cmd.gate {
        spec.fit_config_ecms.gate = gate;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = run_scenario(&spec)?;
    match (&cmd.output, format) {
        (Some(path), Some(Format::Json)) => write_file(path, &report.to_json())?,
        (Some(path), _) => write_file(path, &report.to_tsv())?,
        (None, _) => print!("{}", report.to_tsv()),
    }
    for cell in &report.cells {
        eprintln!(
            "{} {} N={}: used={} failed={} not_converged={} shape_bound={}",
            report.scenario, cell.algorithm, cell.n, cell.n_used, cell.n_failed, cell.n_not_converged, cell.bound_hits
        );
    }
    Ok(())
}

fn default_grid(model: &MgndModel) -> (f64, f64, usize) {
    let m = model.moments();
    let sd = m.variance.sqrt();
    (m.mean - 10.0 * sd, m.mean + 10.0 * sd, DEFAULT_GRID_POINTS)
}

fn density_csv(model: &MgndModel, (lo, hi, n): (f64, f64, usize)) -> String {
    let mut out = String::from("x,pdf");
    for k in 1..=model.k() {
        let _ = write!(out, ",component{k}");
    }
    out.push('\n');
    let step = (hi - lo) / (n - 1) as f64;
    for i in 0..n {
        let x = if i == n - 1 { hi } else { lo + step * i as f64 };
        let _ = write!(out, "{x},{}", model.pdf(x));
        for v in model.weighted_component_pdfs(x) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn cmd_density(cmd: &DensityCmd) -> Result<(), CliError> {
    if let Some(path) = &cmd.output {
        format_of(path, &[Format::Csv])?;
    }
    let model = input::read_model(&cmd.input).map_err(CliError::Data)?;
    let grid = cmd.grid.unwrap_or_else(|| default_grid(&model));
    let csv = density_csv(&model, grid);
    match &cmd.output {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &cmd.data {
        let data = load_series(path, false)?;
        let loglik = model.log_likelihood(&data)?;
        let line = format!("loglik={loglik:.17e} n={}", data.len());
        if cmd.output.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(())
}

fn stats_rows(s: &SeriesStats) -> Vec<(&'static str, String)> {
    vec![
        ("n", s.n.to_string()),
        ("mean", format!("{:.6}", s.mean)),
        ("median", format!("{:.6}", s.median)),
        ("std", format!("{:.6}", s.std)),
        ("skewness", format!("{:.6}", s.skewness)),
        ("kurtosis", format!("{:.6}", s.kurtosis)),
        ("min", format!("{:.6}", s.min)),
        ("max", format!("{:.6}", s.max)),
        ("jb_stat", format!("{:.4}", s.jb_stat)),
        ("jb_p_value", format!("{:.6e}", s.jb_p_value)),
        ("normality_rejected_5pct", s.rejects_normality(0.05).to_string()),
    ]
}

fn cmd_stats(cmd: &StatsCmd) -> Result<(), CliError> {
    let format = cmd.output.as_deref().map(|p| format_of(p, &[Format::Tsv, Format::Json])).transpose()?;
    let data = load_series(&cmd.input, cmd.from_prices)?;
    let stats = describe(&data)?;
    let mut table = String::from("statistic\tvalue\n");
    for (name, value) in stats_rows(&stats) {
        let _ = writeln!(table, "{name}\t{value}");
    }
    print!("{table}");
    match (&cmd.output, format) {
        (Some(path), Some(Format::Json)) => {
            write_file(path, &serde_json::to_string_pretty(&stats).expect("stats serialize"))?
        }
        (Some(path), _) => write_file(path, &table)?,
        (None, _) => {}
    }
    Ok(())
}

fn cmd_select(cmd: &SelectCmd) -> Result<(), CliError> {
    if cmd.components == 0 || cmd.starts == 0 {
        return Err(CliError::Usage("--components and --starts must be at least 1".into()));
    }
    let format = cmd.output.as_deref().map(|p| format_of(p, &[Format::Tsv, Format::Json])).transpose()?;
    let data = load_series(&cmd.input, cmd.from_prices)?;
    let ranking = compare_models(&data, &default_candidates(cmd.components, cmd.starts, cmd.seed))?;
    let table = ranking.to_tsv();
    print!("{table}");
    for (label, reason) in &ranking.failed {
        eprintln!("{label} failed: {reason}");
    }
    match (&cmd.output, format) {
        (Some(path), Some(Format::Json)) => {
            write_file(path, &serde_json::to_string_pretty(&ranking).expect("rankings serialize"))?
        }
        (Some(path), _) => write_file(path, &table)?,
        (None, _) => {}
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(c) => cmd_fit(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Density(c) => cmd_density(c),
        Command::Stats(c) => cmd_stats(c),
        Command::Select(c) => cmd_select(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
