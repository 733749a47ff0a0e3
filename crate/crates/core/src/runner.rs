//! Command runner behind the `csylattice` binary.
//!
//! A run resolves one declarative TOML config (file, then `--set` overrides,
//! then `--seed`/`--out`), dispatches one command and writes its artifacts
//! atomically next to the resolved `config.toml` and a `manifest.json`.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bsm::bsm_price;
use crate::calibration::{
    csy_dev_surface, fit_csy, fit_csy_reduced, implied_lambda_surface, implied_p_surface, implied_q_surface,
    q_minus_p_surface, ConstantQModel, CsyFitBounds, CsyFitOptions, CsyParamVector, DayCount, LambdaSearch,
    SurfaceGrid, SurfaceSettings,
};
use crate::convergence::{reports_csv, required_n_vs_mu, required_n_vs_p, Criterion, DEFAULT_N_CAP};
use crate::csy::{
    bandpass_csv, bandpass_experiment, centralize, continuum_csv, eta_series, intensity, intensity_from_raw_signs,
    path_trace_csv, price_csy, simulate_continuum_paths, stock_path, CsyPricingConfig, EtaIndexing, IntensitySeries,
};
use crate::error::{Error, Result};
use crate::factors::{
    ff3_alpha_series, fit_arma_gjr_garch, garch_residuals, jensen_alpha_series, load_factor_table,
    simulate_arma_gjr_garch, AlphaSeries, ArmaGjrGarchParams, GarchOptions, Innovation,
};
use crate::informed::{price_informed, TraderSpec};
use crate::io::{csv_string, write_atomic};
use crate::lattice::{
    build_tree, price_backward_induction, MarketParams, Measure, OptionSpec, TimeGrid, UpturnModel, FORMAT_VERSION,
};
use crate::market_data::{
    interval_sign_tests, interval_sign_tests_csv, load_option_chain, load_price_series, load_rate_curve, log_returns,
    rolling_crr_jr, rolling_upturn_probability, sign_test_two_sided, window_estimates_csv, LogReturnSeries,
    OptionChain, OptionKind, Period, PriceSchema, RateCurve,
};
use crate::stats::{mean, sample_variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Load prices, rates and an option chain and write them normalized.
    Ingest,
    /// Rolling upturn probability and CRR/JR implied probabilities.
    EstimateP,
    /// Sign tests: one binomial test or interval tests of p̂ against CRR/JR.
    SignTest,
    /// Lattice price of a European option.
    Price,
    /// Required tree size as a function of p.
    ConvergeP,
    /// Required tree size as a function of μ.
    ConvergeMu,
    /// Implied q, p and q − p surfaces from an option chain.
    ImpliedQ,
    /// CSY regression fit of a stock against an index intensity.
    CsyFit,
    /// Simulate CSY paths, continuum traces and band-pass traces.
    CsySimulate,
    /// ARMA(1,1)-GJR-GARCH(1,1) quasi-maximum-likelihood fit.
    GarchFit,
    /// Jensen or Fama–French three-factor alpha series.
    Alpha,
    /// CSY tree price of a European option.
    CsyPrice,
    /// Relative volatility deviation surface of CSY prices.
    Dev,
    /// Informed-trader CSY price.
    InformedPrice,
    /// Implied information-intensity surface.
    ImpliedLambda,
}

impl Command {
    pub const ALL: [Command; 15] = [
        Command::Ingest,
        Command::EstimateP,
        Command::SignTest,
        Command::Price,
        Command::ConvergeP,
        Command::ConvergeMu,
        Command::ImpliedQ,
        Command::CsyFit,
        Command::CsySimulate,
        Command::GarchFit,
        Command::Alpha,
        Command::CsyPrice,
        Command::Dev,
        Command::InformedPrice,
        Command::ImpliedLambda,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::EstimateP => "estimate-p",
            Command::SignTest => "sign-test",
            Command::Price => "price",
            Command::ConvergeP => "converge-p",
            Command::ConvergeMu => "converge-mu",
            Command::ImpliedQ => "implied-q",
            Command::CsyFit => "csy-fit",
            Command::CsySimulate => "csy-simulate",
            Command::GarchFit => "garch-fit",
            Command::Alpha => "alpha",
            Command::CsyPrice => "csy-price",
            Command::Dev => "dev",
            Command::InformedPrice => "informed-price",
            Command::ImpliedLambda => "implied-lambda",
        }
    }

    /// Name of the command's config table.
    pub fn table(&self) -> String {
        self.name().replace('-', "_")
    }

    pub fn from_name(name: &str) -> Result<Command> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == name || c.table() == name)
            .ok_or_else(|| Error::Config(format!("unknown command {name:?}")))
    }
}

#[derive(Debug, Parser)]
#[command(name = "csylattice", version, about = "Binomial, CSY and informed-trader option pricing and calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set price.strike=95`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

/// Command-line request before config resolution.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Invocation {
    pub fn new(command: Command) -> Self {
        Invocation { command, config: None, sets: Vec::new(), seed: None, out: None }
    }
}

/// Resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub format_version: u32,
    /// The command's own table, before defaults are applied.
    pub table: toml::Table,
}

const TOP_LEVEL_KEYS: [&str; 3] = ["seed", "output_dir", "format_version"];

fn set_dotted(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key {key:?}")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| Error::Config(format!("{key}: {p} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn resolve_config(inv: &Invocation) -> Result<RunConfig> {
    let mut root = match &inv.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    for s in &inv.sets {
        set_dotted(&mut root, s)?;
    }
    for key in root.keys() {
        if !TOP_LEVEL_KEYS.contains(&key.as_str()) && !Command::ALL.iter().any(|c| c.table() == *key) {
            return Err(Error::Config(format!("unknown top-level key {key:?}")));
        }
    }
    let seed = match (inv.seed, root.get("seed")) {
        (Some(s), _) => s,
        (None, Some(v)) => {
            v.as_integer()
                .filter(|s| *s >= 0)
                .ok_or_else(|| Error::Config("seed must be a non-negative integer".into()))? as u64
        }
        (None, None) => 0,
    };
    let output_dir = match (&inv.out, root.get("output_dir")) {
        (Some(p), _) => p.clone(),
        (None, Some(v)) => {
            PathBuf::from(v.as_str().ok_or_else(|| Error::Config("output_dir must be a string".into()))?)
        }
        (None, None) => PathBuf::from("out").join(inv.command.name()),
    };
    if let Some(v) = root.get("format_version") {
        if v.as_integer() != Some(FORMAT_VERSION as i64) {
            return Err(Error::Config(format!("format_version must be {FORMAT_VERSION}")));
        }
    }
    let table = match root.remove(&inv.command.table()) {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(Error::Config(format!("[{}] must be a table", inv.command.table()))),
        None => toml::Table::new(),
    };
    Ok(RunConfig { command: inv.command, seed, output_dir, format_version: FORMAT_VERSION, table })
}

fn parse_table<T: DeserializeOwned>(cfg: &RunConfig) -> Result<T> {
    T::deserialize(toml::Value::Table(cfg.table.clone()))
        .map_err(|e| Error::Config(format!("[{}] {e}", cfg.command.table())))
}

fn required<T: Clone>(v: &Option<T>, table: &str, field: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::Config(format!("{table}.{field} is required")))
}

/// Record of one written file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub status: String,
    pub error: Option<String>,
    pub artifacts: Vec<ArtifactRecord>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Sink {
    dir: PathBuf,
    records: Vec<ArtifactRecord>,
}

impl Sink {
    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let bytes = contents.as_ref();
        write_atomic(&self.dir.join(name), bytes)?;
        self.records.push(ArtifactRecord { name: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::numerical(e.to_string()))?;
        s.push('\n');
        self.write(name, s)
    }

    fn surface(&mut self, stem: &str, grid: &SurfaceGrid) -> Result<()> {
        self.write(&format!("{stem}.csv"), grid.to_csv())?;
        self.json(&format!("{stem}.json"), grid)
    }
}

/// Outcome of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
}

/// Runs one resolved command. Artifacts written before a failure are kept
/// and listed in a manifest with status `failed`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut sink = Sink { dir: cfg.output_dir.clone(), records: Vec::new() };
    let mut resolved = None;
    let result = dispatch(cfg, &mut sink, &mut resolved);
    // Invalid configs fail before anything is written.
    let Some(config_text) = resolved else {
        return Err(result.expect_err("config resolution failed"));
    };
    let (status, error) = match &result {
        Ok(()) => ("ok", None),
        Err(e) => ("failed", Some(e.to_string())),
    };
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        command: cfg.command.name().to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        status: status.to_string(),
        error,
        artifacts: sink.records,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&cfg.output_dir.join("manifest.json"), text.as_bytes())?;
    result.map(|()| RunOutcome { output_dir: cfg.output_dir.clone(), manifest })
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn cli_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let inv = Invocation { command: cli.command, config: cli.config, sets: cli.sets, seed: cli.seed, out: cli.out };
    match resolve_config(&inv).and_then(|cfg| run(&cfg)) {
        Ok(out) => {
            println!(
                "{}: wrote {} artifacts to {}",
                inv.command.name(),
                out.manifest.artifacts.len(),
                out.output_dir.display()
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cfg: &RunConfig, sink: &mut Sink, resolved: &mut Option<String>) -> Result<()> {
    macro_rules! go {
        ($ty:ty, $f:ident) => {{
            let c: $ty = parse_table(cfg)?;
            let text = write_resolved(cfg, &c)?;
            *resolved = Some(text);
            $f(&c, cfg, sink)
        }};
    }
    match cfg.command {
        Command::Ingest => go!(IngestConfig, run_ingest),
        Command::EstimateP => go!(EstimatePConfig, run_estimate_p),
        Command::SignTest => go!(SignTestConfig, run_sign_test),
        Command::Price => go!(PriceConfig, run_price),
        Command::ConvergeP => go!(ConvergePConfig, run_converge_p),
        Command::ConvergeMu => go!(ConvergeMuConfig, run_converge_mu),
        Command::ImpliedQ => go!(ImpliedQConfig, run_implied_q),
        Command::CsyFit => go!(CsyFitConfig, run_csy_fit),
        Command::CsySimulate => go!(CsySimulateConfig, run_csy_simulate),
        Command::GarchFit => go!(GarchFitConfig, run_garch_fit),
        Command::Alpha => go!(AlphaConfig, run_alpha),
        Command::CsyPrice => go!(CsyPriceConfig, run_csy_price),
        Command::Dev => go!(DevConfig, run_dev),
        Command::InformedPrice => go!(InformedPriceConfig, run_informed_price),
        Command::ImpliedLambda => go!(ImpliedLambdaConfig, run_implied_lambda),
    }
}

/// Writes `config.toml` with every default filled in; its hash identifies
/// the run. The output directory is not part of it.
fn write_resolved<T: Serialize>(cfg: &RunConfig, c: &T) -> Result<String> {
    let mut root = toml::Table::new();
    root.insert("format_version".into(), toml::Value::Integer(cfg.format_version as i64));
    root.insert("seed".into(), toml::Value::Integer(cfg.seed as i64));
    let body = toml::Value::try_from(c).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    root.insert(cfg.command.table(), body);
    let text = toml::to_string(&root).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    write_atomic(&cfg.output_dir.join("config.toml"), text.as_bytes())?;
    Ok(text)
}

// ---------------------------------------------------------------------------
// Shared inputs

fn default_date_column() -> String {
    "date".into()
}

fn default_price_column() -> String {
    "close".into()
}

fn default_daily_dt() -> f64 {
    1.0 / 252.0
}

fn load_returns(path: &str, date_column: &str, price_column: &str) -> Result<LogReturnSeries> {
    let schema = PriceSchema { date_column: date_column.into(), price_column: price_column.into() };
    log_returns(&load_price_series(Path::new(path), &schema)?)
}

fn rate_curve(rates: &Option<String>, rate: f64) -> Result<RateCurve> {
    match rates {
        Some(p) => load_rate_curve(Path::new(p)),
        None => Ok(RateCurve::flat(rate)),
    }
}

fn parse_date_key(s: &str, key: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::Config(format!("{key}: {e}")))
}

/// Inner join of two return series on their dates.
fn join_returns(a: &LogReturnSeries, b: &LogReturnSeries) -> (Vec<NaiveDate>, Vec<f64>, Vec<f64>) {
    let (mut i, mut j) = (0, 0);
    let (mut d, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
    while i < a.len() && j < b.len() {
        match a.dates[i].cmp(&b.dates[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                d.push(a.dates[i]);
                x.push(a.returns[i]);
                y.push(b.returns[j]);
                i += 1;
                j += 1;
            }
        }
    }
    (d, x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensitySource {
    /// Signs of centralized index returns read from a price file.
    Index,
    /// A JSON intensity series as written by `csy-simulate`.
    File,
    /// Seeded random signs with upturn probability `p_up`.
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityFlavor {
    Standardized,
    RawSign,
}

/// Where a command gets its intensity series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensityConfig {
    pub source: IntensitySource,
    pub prices: Option<String>,
    pub date_column: String,
    pub price_column: String,
    pub flavor: IntensityFlavor,
    /// Index drift and volatility per unit time; estimated from the sample
    /// when absent.
    pub mu_m: Option<f64>,
    pub sigma_m: Option<f64>,
    /// Upturn probability; the sample frequency when absent.
    pub p_up: Option<f64>,
    pub dt: f64,
    /// Inclusive date window on the index returns.
    pub start: Option<String>,
    pub end: Option<String>,
    pub path: Option<String>,
    /// Length of a simulated series.
    pub n: usize,
}

impl Default for IntensityConfig {
    fn default() -> Self {
        IntensityConfig {
            source: IntensitySource::Simulated,
            prices: None,
            date_column: default_date_column(),
            price_column: default_price_column(),
            flavor: IntensityFlavor::Standardized,
            mu_m: None,
            sigma_m: None,
            p_up: None,
            dt: 1.0,
            start: None,
            end: None,
            path: None,
            n: 250,
        }
    }
}

/// Intensity from index returns already restricted to the wanted dates.
fn intensity_from_returns(c: &IntensityConfig, returns: &[f64]) -> Result<IntensitySeries> {
    if returns.len() < 2 {
        return Err(Error::invalid("intensity needs at least two index returns"));
    }
    match c.flavor {
        IntensityFlavor::RawSign => intensity_from_raw_signs(returns, c.dt),
        IntensityFlavor::Standardized => {
            let sigma = match c.sigma_m {
                Some(s) => s,
                None => (sample_variance(returns) / c.dt).sqrt(),
            };
            let mu = match c.mu_m {
                Some(m) => m,
                None => mean(returns) / c.dt + 0.5 * sigma * sigma,
            };
            intensity(&centralize(returns, mu, sigma, c.dt)?, c.p_up, c.dt)
        }
    }
}

fn load_index_returns(c: &IntensityConfig, table: &str) -> Result<LogReturnSeries> {
    let prices = required(&c.prices, table, "intensity.prices")?;
    let r = load_returns(&prices, &c.date_column, &c.price_column)?;
    let start = c.start.as_deref().map(|s| parse_date_key(s, "intensity.start")).transpose()?;
    let end = c.end.as_deref().map(|s| parse_date_key(s, "intensity.end")).transpose()?;
    let keep: Vec<usize> = (0..r.len())
        .filter(|&i| start.is_none_or(|s| r.dates[i] >= s) && end.is_none_or(|e| r.dates[i] <= e))
        .collect();
    Ok(LogReturnSeries {
        dates: keep.iter().map(|&i| r.dates[i]).collect(),
        returns: keep.iter().map(|&i| r.returns[i]).collect(),
    })
}

fn simulated_signs(n: usize, p_up: f64, seed: u64, stream: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n).map(|_| rng.gen_bool(p_up)).collect()
}

fn load_intensity(c: &IntensityConfig, seed: u64, table: &str) -> Result<IntensitySeries> {
    match c.source {
        IntensitySource::Index => intensity_from_returns(c, &load_index_returns(c, table)?.returns),
        IntensitySource::File => {
            let path = required(&c.path, table, "intensity.path")?;
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))
        }
        IntensitySource::Simulated => {
            let p = c.p_up.unwrap_or(0.5);
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!("{table}.intensity.p_up must be in (0,1)")));
            }
            IntensitySeries::from_signs(&simulated_signs(c.n, p, seed, 0), p, c.dt)
        }
    }
}

fn sp_a_params() -> CsyParamVector {
    CsyParamVector { nu: 0.0016, sigma: 0.002, gamma: 0.29, sigma_h: 8.8, delta: 0.089, sigma_g: 1800.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindFilter {
    Call,
    Put,
    All,
}

impl KindFilter {
    fn get(self) -> Option<OptionKind> {
        match self {
            KindFilter::Call => Some(OptionKind::Call),
            KindFilter::Put => Some(OptionKind::Put),
            KindFilter::All => None,
        }
    }
}

fn load_chain(path: &Option<String>, table: &str) -> Result<OptionChain> {
    load_option_chain(Path::new(&required(path, table, "chain")?))
}

// ---------------------------------------------------------------------------
// ingest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub prices: Option<String>,
    pub date_column: String,
    pub price_column: String,
    pub rates: Option<String>,
    pub chain: Option<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            prices: None,
            date_column: default_date_column(),
            price_column: default_price_column(),
            rates: None,
            chain: None,
        }
    }
}

#[derive(Serialize)]
struct IngestSummary {
    n_prices: Option<usize>,
    first_date: Option<NaiveDate>,
    last_date: Option<NaiveDate>,
    n_rates: Option<usize>,
    chain_quote_date: Option<NaiveDate>,
    n_quotes: Option<usize>,
}

fn run_ingest(c: &IngestConfig, _: &RunConfig, sink: &mut Sink) -> Result<()> {
    if c.prices.is_none() && c.rates.is_none() && c.chain.is_none() {
        return Err(Error::Config("ingest needs at least one of ingest.prices, ingest.rates, ingest.chain".into()));
    }
    let mut summary = IngestSummary {
        n_prices: None,
        first_date: None,
        last_date: None,
        n_rates: None,
        chain_quote_date: None,
        n_quotes: None,
    };
    if let Some(p) = &c.prices {
        let schema = PriceSchema { date_column: c.date_column.clone(), price_column: c.price_column.clone() };
        let series = load_price_series(Path::new(p), &schema)?;
        sink.write("prices.csv", series.to_csv())?;
        let lr = log_returns(&series)?;
        sink.write(
            "log_returns.csv",
            csv_string(
                &["date", "log_return"],
                lr.dates.iter().zip(&lr.returns).map(|(d, r)| [d.to_string(), r.to_string()]),
            ),
        )?;
        summary.n_prices = Some(series.len());
        summary.first_date = series.dates.first().copied();
        summary.last_date = series.dates.last().copied();
    }
    if let Some(p) = &c.rates {
        let curve = load_rate_curve(Path::new(p))?;
        sink.write(
            "rates.csv",
            csv_string(
                &["date", "rate"],
                curve.dates.iter().zip(&curve.rates).map(|(d, r)| [d.to_string(), r.to_string()]),
            ),
        )?;
        summary.n_rates = Some(curve.dates.len());
    }
    if let Some(p) = &c.chain {
        let chain = load_option_chain(Path::new(p))?;
        sink.write("chain.csv", chain.to_csv())?;
        summary.chain_quote_date = Some(chain.quote_date);
        summary.n_quotes = Some(chain.quotes.len());
    }
    sink.json("summary.json", &summary)
}

// ---------------------------------------------------------------------------
// estimate-p and sign-test

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatePConfig {
    pub prices: Option<String>,
    pub date_column: String,
    pub price_column: String,
    pub window: usize,
    /// Observation spacing in years.
    pub dt: f64,
    /// Flat annual rate, used when `rates` is absent.
    pub rate: f64,
    pub rates: Option<String>,
}

impl Default for EstimatePConfig {
    fn default() -> Self {
        EstimatePConfig {
            prices: None,
            date_column: default_date_column(),
            price_column: default_price_column(),
            window: 252,
            dt: default_daily_dt(),
            rate: 0.0,
            rates: None,
        }
    }
}

fn crr_jr_csv(rows: &[(NaiveDate, crate::market_data::ImpliedUpturn)]) -> String {
    csv_string(
        &["window_end", "p_crr", "p_jr", "crr_clamped", "jr_clamped"],
        rows.iter().map(|(d, u)| {
            [
                d.to_string(),
                u.p_crr.to_string(),
                u.p_jr.to_string(),
                u.crr_clamped.to_string(),
                u.jr_clamped.to_string(),
            ]
        }),
    )
}

fn run_estimate_p(c: &EstimatePConfig, _: &RunConfig, sink: &mut Sink) -> Result<()> {
    let returns = load_returns(&required(&c.prices, "estimate_p", "prices")?, &c.date_column, &c.price_column)?;
    let est = rolling_upturn_probability(&returns, c.window)?;
    sink.write("p_hat.csv", window_estimates_csv(&est))?;
    if c.window >= 2 {
        let rows = rolling_crr_jr(&returns, c.window, c.dt, &rate_curve(&c.rates, c.rate)?)?;
        sink.write("crr_jr.csv", crr_jr_csv(&rows))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignTestConfig {
    /// Single binomial test of `n_up` successes in `n_total` against `p0`.
    pub n_up: Option<usize>,
    pub n_total: Option<usize>,
    pub p0: f64,
    /// Interval tests of the rolling p̂ against CRR and JR probabilities.
    pub prices: Option<String>,
    pub date_column: String,
    pub price_column: String,
    pub window: usize,
    pub dt: f64,
    pub rate: f64,
    pub rates: Option<String>,
    pub period: Period,
}

impl Default for SignTestConfig {
    fn default() -> Self {
        SignTestConfig {
            n_up: None,
            n_total: None,
            p0: 0.5,
            prices: None,
            date_column: default_date_column(),
            price_column: default_price_column(),
            window: 252,
            dt: default_daily_dt(),
            rate: 0.0,
            rates: None,
            period: Period::Month,
        }
    }
}

#[derive(Serialize)]
struct SingleSignTest {
    n_up: usize,
    n_total: usize,
    p0: f64,
    p_value: f64,
}

fn run_sign_test(c: &SignTestConfig, _: &RunConfig, sink: &mut Sink) -> Result<()> {
    let single = c.n_up.is_some() || c.n_total.is_some();
    if !single && c.prices.is_none() {
        return Err(Error::Config("sign_test needs n_up and n_total, or prices".into()));
    }
    if single {
        let n_up = required(&c.n_up, "sign_test", "n_up")?;
        let n_total = required(&c.n_total, "sign_test", "n_total")?;
        let p_value = sign_test_two_sided(n_up, n_total, c.p0)?;
        sink.json("sign_test.json", &SingleSignTest { n_up, n_total, p0: c.p0, p_value })?;
    }
    if let Some(p) = &c.prices {
        let returns = load_returns(p, &c.date_column, &c.price_column)?;
        let est = rolling_upturn_probability(&returns, c.window)?;
        let implied = rolling_crr_jr(&returns, c.window, c.dt, &rate_curve(&c.rates, c.rate)?)?;
        let dates: Vec<NaiveDate> = est.iter().map(|e| e.window_end).collect();
        let p_hat: Vec<f64> = est.iter().map(|e| e.p_hat).collect();
        let crr: Vec<f64> = implied.iter().map(|(_, u)| u.p_crr).collect();
        let jr: Vec<f64> = implied.iter().map(|(_, u)| u.p_jr).collect();
        sink.write(
            "sign_tests_crr.csv",
            interval_sign_tests_csv(c.period, &interval_sign_tests(&dates, &p_hat, &crr, c.period)?),
        )?;
        sink.write(
            "sign_tests_jr.csv",
            interval_sign_tests_csv(c.period, &interval_sign_tests(&dates, &p_hat, &jr, c.period)?),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// price, converge-p, converge-mu

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceMeasure {
    Exact,
    Approx,
    /// The same `q` on every step.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceConfig {
    pub s0: f64,
    pub strike: f64,
    pub maturity: f64,
    pub kind: OptionKind,
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub p: f64,
    pub n: usize,
    pub measure: PriceMeasure,
    pub q: Option<f64>,
    /// Also write the full lattice.
    pub emit_lattice: bool,
}

impl Default for PriceConfig {
    fn default() -> Self {
        PriceConfig {
            s0: 100.0,
            strike: 100.0,
            maturity: 1.0,
            kind: OptionKind::Call,
            mu: 0.08,
            sigma: 0.2,
            r: 0.02,
            p: 0.5,
            n: 100,
            measure: PriceMeasure::Exact,
            q: None,
            emit_lattice: false,
        }
    }
}

#[derive(Serialize)]
struct PriceSummary {
    f0: f64,
    delta0: Option<f64>,
    n: usize,
    bsm_price: f64,
    recombining: bool,
}

fn run_price(c: &PriceConfig, _: &RunConfig, sink: &mut Sink) -> Result<()> {
    let params = MarketParams::new(c.mu, c.sigma, c.r)?;
    let measure = match c.measure {
        PriceMeasure::Exact => Measure::RiskNeutralExact,
        PriceMeasure::Approx => Measure::RiskNeutralApprox,
        PriceMeasure::Fixed => Measure::RiskNeutralFixed(required(&c.q, "price", "q")?),
    };
    let grid = TimeGrid::uniform(c.n, c.maturity)?;
    let lattice = build_tree(&grid, c.s0, &params, &UpturnModel::constant(c.p), measure)?;
    let result = price_backward_induction(&lattice, &OptionSpec::new(c.kind, c.strike, c.maturity)?)?;
    sink.write("price.json", result.to_json() + "\n")?;
    if c.emit_lattice {
        sink.write("lattice.json", lattice.to_json() + "\n")?;
    }
    let summary = PriceSummary {
        f0: result.f0,
        delta0: result.deltas.first().and_then(|d| d.first()).copied(),
        n: c.n,
        bsm_price: bsm_price(c.s0, c.strike, c.maturity, c.r, c.sigma, c.kind)?,
        recombining: lattice.recombining,
    };
    sink.json("summary.json", &summary)
}

fn default_p_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergePConfig {
    pub p_grid: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub s0: f64,
    pub t: f64,
    pub criterion: Criterion,
    pub cap: usize,
}

impl Default for ConvergePConfig {
    fn default() -> Self {
        ConvergePConfig {
            p_grid: default_p_grid(),
            mu: 0.08,
            sigma: 0.2,
            r: 0.02,
            s0: 100.0,
            t: 1.0,
            criterion: Criterion::default(),
            cap: DEFAULT_N_CAP,
        }
    }
}

fn run_converge_p(c: &ConvergePConfig, _: &RunConfig, sink: &mut Sink) -> Result<()> {
    let params = MarketParams::new(c.mu, c.sigma, c.r)?;
    let reports = required_n_vs_p(&c.p_grid, &params, c.s0, c.t, &c.criterion, c.cap)?;
    sink.write("converge_p.csv", reports_csv(&reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeMuConfig {
    pub mu_grid: Vec<f64>,
    pub sigma: f64,
    pub r: f64,
    pub p: f64,
    pub s0: f64,
    pub t: f64,
    pub criterion: Criterion,
    pub cap: usize,
}

impl Default for ConvergeMuConfig {
    fn default() -> Self {
        ConvergeMuConfig {
            mu_grid: vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0],
            sigma: 0.2,
            r: 0.02,
            p: 0.5,
            s0: 100.0,
            t: 1.0,
            criterion: Criterion::default(),
            cap: DEFAULT_N_CAP,
        }
    }
}

fn run_converge_mu(c: &ConvergeMuConfig, _: &RunConfig, sink: &mut Sink) -> Result<()> {
    let reports = required_n_vs_mu(&c.mu_grid, c.sigma, c.r, c.p, c.s0, c.t, &c.criterion, c.cap)?;
    sink.write("converge_mu.csv", reports_csv(&reports))
}

// ---------------------------------------------------------------------------
// implied-q

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpliedQConfig {
    pub chain: Option<String>,
    pub s0: Option<f64>,
    /// Drift, volatility and rate per day.
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub day_count: DayCount,
    pub kind: KindFilter,
    pub fit_tol: f64,
    pub band: (f64, f64),
}

impl Default for ImpliedQConfig {
    fn default() -> Self {
        ImpliedQConfig {
            chain: None,
            s0: None,
            mu: 6.2e-4,
            sigma: 0.02,
            r: 0.0055 / 252.0,
            day_count: DayCount::Weekdays,
            kind: KindFilter::Call,
            fit_tol: 1e-6,
            band: (0.5, 0.62),
        }
    }
}

fn run_implied_q(c: &ImpliedQConfig, _: &RunConfig, sink: &mut Sink) -> Result<()> {
    let chain = load_chain(&c.chain, "implied_q")?;
    let s0 = required(&c.s0, "implied_q", "s0")?;
    let model = ConstantQModel { mu: c.mu, sigma: c.sigma, r: c.r };
    let settings = SurfaceSettings { dt: 1.0, day_count: c.day_count, kind: c.kind.get(), fit_tol: c.fit_tol };
    let q = implied_q_surface(&chain, s0, &model, &settings)?.annotate(c.band.0, c.band.1);
    sink.surface("q_surface", &q)?;
    let p = implied_p_surface(&q, &model, settings.dt)?;
    sink.surface("p_surface", &p)?;
    sink.surface("q_minus_p_surface", &q_minus_p_surface(&q, &p))
}

// ---------------------------------------------------------------------------
// csy-fit and csy-simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsyFitConfig {
    pub stock: Option<String>,
    pub date_column: String,
    pub price_column: String,
    pub intensity: IntensityConfig,
    /// Rate per intensity step.
    pub r: f64,
    pub n_starts: usize,
    pub init: Option<CsyParamVector>,
    pub sigma_h_bounds: (f64, f64),
    pub sigma_g_bounds: (f64, f64),
}

impl Default for CsyFitConfig {
    fn default() -> Self {
        let b = CsyFitBounds::default();
        CsyFitConfig {
            stock: None,
            date_column: default_date_column(),
            price_column: default_price_column(),
            intensity: IntensityConfig { source: IntensitySource::Index, ..IntensityConfig::default() },
            r: 0.0203 / 252.0,
            n_starts: 8,
            init: None,
            sigma_h_bounds: b.sigma_h,
            sigma_g_bounds: b.sigma_g,
        }
    }
}

#[derive(Serialize)]
struct CsyFitReport<'a> {
    fit: &'a crate::calibration::CsyFit,
    reduced_rmse: f64,
    reduced_params: CsyParamVector,
    n_obs: usize,
    p_up: f64,
}

fn run_csy_fit(c: &CsyFitConfig, cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let stock = load_returns(&required(&c.stock, "csy_fit", "stock")?, &c.date_column, &c.price_column)?;
    let (dates, returns, xi) = match c.intensity.source {
        IntensitySource::Index => {
            let index = load_index_returns(&c.intensity, "csy_fit")?;
            let (d, s, m) = join_returns(&stock, &index);
            let xi = intensity_from_returns(&c.intensity, &m)?;
            (d, s, xi)
        }
        _ => {
            let xi = load_intensity(&c.intensity, cfg.seed, "csy_fit")?;
            (stock.dates.clone(), stock.returns.clone(), xi)
        }
    };
    let opts = CsyFitOptions {
        r: c.r,
        init: c.init,
        bounds: CsyFitBounds { sigma_h: c.sigma_h_bounds, sigma_g: c.sigma_g_bounds },
        n_starts: c.n_starts,
        seed: cfg.seed,
    };
    let fit = fit_csy(&returns, &xi, &opts)?;
    let reduced = fit_csy_reduced(&returns, &xi, c.r)?;
    sink.json(
        "fit.json",
        &CsyFitReport {
            fit: &fit,
            reduced_rmse: reduced.rmse,
            reduced_params: reduced.params,
            n_obs: returns.len(),
            p_up: xi.p_up,
        },
    )?;
    sink.write(
        "residuals.csv",
        csv_string(
            &["date", "return", "xi", "residual"],
            (0..returns.len()).map(|k| {
                [dates[k].to_string(), returns[k].to_string(), xi.xi[k].to_string(), fit.residuals[k].to_string()]
            }),
        ),
    )?;
    sink.json("intensity.json", &xi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsySimulateConfig {
    pub params: CsyParamVector,
    pub p_up: f64,
    pub n: usize,
    pub dt: f64,
    pub s0: f64,
    /// First date of the weekday calendar attached to `stock.csv`.
    pub start_date: String,
    /// Standard deviation of Gaussian noise added to the log-returns.
    pub noise_sd: f64,
    pub indexing: EtaIndexing,
    /// Horizon of continuum traces; none are written when absent.
    pub continuum_t: Option<f64>,
    pub dt_fine: f64,
    pub continuum_paths: usize,
    /// `σ_g` values for band-pass traces on the simulated intensity.
    pub bandpass_sigma_g: Vec<f64>,
}

impl Default for CsySimulateConfig {
    fn default() -> Self {
        CsySimulateConfig {
            params: sp_a_params(),
            p_up: 0.5,
            n: 252,
            dt: 1.0,
            s0: 100.0,
            start_date: "2000-01-03".into(),
            noise_sd: 0.0,
            indexing: EtaIndexing::Previsible,
            continuum_t: None,
            dt_fine: 1e-3,
            continuum_paths: 1,
            bandpass_sigma_g: Vec::new(),
        }
    }
}

fn weekdays_from(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    use chrono::{Datelike, Weekday};
    start.iter_days().filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)).take(n).collect()
}

fn run_csy_simulate(c: &CsySimulateConfig, cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    if !(c.p_up > 0.0 && c.p_up < 1.0) {
        return Err(Error::Config("csy_simulate.p_up must be in (0,1)".into()));
    }
    if !(c.noise_sd >= 0.0) {
        return Err(Error::Config("csy_simulate.noise_sd must be ≥ 0".into()));
    }
    let params = c.params.to_params()?;
    let xi = IntensitySeries::from_signs(&simulated_signs(c.n, c.p_up, cfg.seed, 0), c.p_up, c.dt)?;
    let path = stock_path(&params, &xi, c.s0)?;
    let eta = eta_series(&params, &xi, c.indexing)?;
    sink.write("path.csv", path_trace_csv(&path, &eta))?;
    sink.json("intensity.json", &xi)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut log_s = c.s0.ln();
    let mut prices = vec![c.s0];
    for r in &path.log_returns {
        let z: f64 = StandardNormal.sample(&mut rng);
        log_s += r + c.noise_sd * z;
        prices.push(log_s.exp());
    }
    let dates = weekdays_from(parse_date_key(&c.start_date, "csy_simulate.start_date")?, prices.len());
    sink.write(
        "stock.csv",
        csv_string(&["date", "close"], dates.iter().zip(&prices).map(|(d, p)| [d.to_string(), p.to_string()])),
    )?;

    if let Some(t) = c.continuum_t {
        let paths = simulate_continuum_paths(&params, c.s0, t, c.dt_fine, c.continuum_paths.max(1), cfg.seed)?;
        for (i, p) in paths.iter().enumerate() {
            sink.write(&format!("continuum_{i}.csv"), continuum_csv(p))?;
        }
    }
    if !c.bandpass_sigma_g.is_empty() {
        sink.write("bandpass.csv", bandpass_csv(&bandpass_experiment(&c.bandpass_sigma_g, &xi)?))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// garch-fit and alpha

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GarchSimulation {
    pub params: ArmaGjrGarchParams,
    pub n: usize,
    pub burn_in: usize,
}

impl Default for GarchSimulation {
    fn default() -> Self {
        GarchSimulation {
            params: ArmaGjrGarchParams {
                mu: 0.0,
                phi1: 0.0,
                theta1: 0.0,
                alpha0: 1e-5,
                alpha1: 0.1,
                beta1: 0.8,
                gamma1: 0.05,
                innovation: Innovation::Gaussian,
                dof: None,
            },
            n: 5000,
            burn_in: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GarchFitConfig {
    /// Price file whose log-returns are fitted; ignored when `simulate` is set.
    pub prices: Option<String>,
    pub date_column: String,
    pub price_column: String,
    pub simulate: Option<GarchSimulation>,
    pub innovation: Innovation,
    pub gjr: bool,
    pub n_starts: usize,
    pub nested_warm_start: bool,
}

impl Default for GarchFitConfig {
    fn default() -> Self {
        GarchFitConfig {
            prices: None,
            date_column: default_date_column(),
            price_column: default_price_column(),
            simulate: None,
            innovation: Innovation::Gaussian,
            gjr: true,
            n_starts: 8,
            nested_warm_start: true,
        }
    }
}

fn run_garch_fit(c: &GarchFitConfig, cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let (labels, returns): (Vec<String>, Vec<f64>) = match (&c.simulate, &c.prices) {
        (Some(sim), _) => {
            let r = simulate_arma_gjr_garch(&sim.params, sim.n, sim.burn_in, cfg.seed)?;
            sink.write(
                "simulated_returns.csv",
                csv_string(&["k", "return"], r.iter().enumerate().map(|(k, v)| [k.to_string(), v.to_string()])),
            )?;
            ((0..r.len()).map(|k| k.to_string()).collect(), r)
        }
        (None, Some(p)) => {
            let lr = load_returns(p, &c.date_column, &c.price_column)?;
            (lr.dates.iter().map(|d| d.to_string()).collect(), lr.returns)
        }
        (None, None) => return Err(Error::Config("garch_fit needs prices or a [garch_fit.simulate] table".into())),
    };
    let opts = GarchOptions {
        innovation: c.innovation,
        gjr: c.gjr,
        n_starts: c.n_starts,
        seed: cfg.seed,
        nested_warm_start: c.nested_warm_start,
        ..GarchOptions::default()
    };
    let fit = fit_arma_gjr_garch(&returns, &opts)?;
    sink.write("garch_fit.json", fit.to_json() + "\n")?;
    let z = garch_residuals(&fit)?;
    sink.write(
        "residuals.csv",
        csv_string(
            &["obs", "innovation", "sigma", "std_residual"],
            (0..z.len()).map(|k| {
                [labels[k].clone(), fit.innovations[k].to_string(), fit.sigmas[k].to_string(), z[k].to_string()]
            }),
        ),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMethod {
    Jensen,
    Ff3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaConfig {
    pub method: AlphaMethod,
    pub stock: Option<String>,
    pub market: Option<String>,
    /// Factor table `date,mkt_excess,smb,hml,rf`.
    pub factors: Option<String>,
    pub date_column: String,
    pub price_column: String,
    pub rate: f64,
    pub rates: Option<String>,
    pub dt: f64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig {
            method: AlphaMethod::Jensen,
            stock: None,
            market: None,
            factors: None,
            date_column: default_date_column(),
            price_column: default_price_column(),
            rate: 0.0,
            rates: None,
            dt: default_daily_dt(),
        }
    }
}

#[derive(Serialize)]
struct AlphaSummary<'a> {
    method: AlphaMethod,
    intercept: f64,
    factor_names: &'a [String],
    betas: &'a [f64],
    mean_alpha: f64,
    n_obs: usize,
}

fn run_alpha(c: &AlphaConfig, _: &RunConfig, sink: &mut Sink) -> Result<()> {
    let stock = load_returns(&required(&c.stock, "alpha", "stock")?, &c.date_column, &c.price_column)?;
    let series: AlphaSeries = match c.method {
        AlphaMethod::Jensen => {
            let market = load_returns(&required(&c.market, "alpha", "market")?, &c.date_column, &c.price_column)?;
            let (d, s, m) = join_returns(&stock, &market);
            jensen_alpha_series(&d, &s, &m, &rate_curve(&c.rates, c.rate)?, c.dt)?
        }
        AlphaMethod::Ff3 => {
            let table = load_factor_table(Path::new(&required(&c.factors, "alpha", "factors")?))?;
            ff3_alpha_series(&stock.dates, &stock.returns, &table)?
        }
    };
    sink.write("alpha.csv", series.to_csv())?;
    sink.json(
        "alpha.json",
        &AlphaSummary {
            method: c.method,
            intercept: series.intercept,
            factor_names: &series.factor_names,
            betas: &series.betas,
            mean_alpha: mean(&series.alpha),
            n_obs: series.alpha.len(),
        },
    )
}

// ---------------------------------------------------------------------------
// csy-price, dev, informed-price, implied-lambda

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsyPriceConfig {
    pub params: CsyParamVector,
    pub intensity: IntensityConfig,
    pub s0: f64,
    pub strike: f64,
    /// Maturity in units of the intensity step.
    pub maturity: f64,
    pub kind: OptionKind,
    /// Rate per intensity step.
    pub r: f64,
    pub pricing: CsyPricingConfig,
}

impl Default for CsyPriceConfig {
    fn default() -> Self {
        CsyPriceConfig {
            params: sp_a_params(),
            intensity: IntensityConfig::default(),
            s0: 100.0,
            strike: 100.0,
            maturity: 20.0,
            kind: OptionKind::Call,
            r: 0.0203 / 252.0,
            pricing: CsyPricingConfig::default(),
        }
    }
}

fn run_csy_price(c: &CsyPriceConfig, cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let params = c.params.to_params()?;
    let xi = load_intensity(&c.intensity, cfg.seed, "csy_price")?;
    let opt = OptionSpec::new(c.kind, c.strike, c.maturity)?;
    let res = price_csy(c.s0, &params, &xi, &[c.r], &opt, &c.pricing)?;
    sink.json("csy_price.json", &res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InformedPriceConfig {
    pub params: CsyParamVector,
    pub intensity: IntensityConfig,
    pub lambda: f64,
    pub s0: f64,
    pub strike: f64,
    pub maturity: f64,
    pub kind: OptionKind,
    pub r: f64,
    pub pricing: CsyPricingConfig,
    /// Per-step drifts overriding ν.
    pub nu_ladder: Option<Vec<f64>>,
}

impl Default for InformedPriceConfig {
    fn default() -> Self {
        let b = CsyPriceConfig::default();
        InformedPriceConfig {
            params: b.params,
            intensity: b.intensity,
            lambda: 1e-3,
            s0: b.s0,
            strike: b.strike,
            maturity: b.maturity,
            kind: b.kind,
            r: b.r,
            pricing: b.pricing,
            nu_ladder: None,
        }
    }
}

fn run_informed_price(c: &InformedPriceConfig, cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let params = c.params.to_params()?;
    let xi = load_intensity(&c.intensity, cfg.seed, "informed_price")?;
    let opt = OptionSpec::new(c.kind, c.strike, c.maturity)?;
    let trader = TraderSpec::new(c.lambda)?;
    let res = price_informed(c.s0, &params, &xi, &trader, &[c.r], &opt, &c.pricing, c.nu_ladder.as_deref())?;
    sink.write("informed_price.json", res.to_json() + "\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DevConfig {
    pub chain: Option<String>,
    pub s0: Option<f64>,
    pub params: CsyParamVector,
    pub intensity: IntensityConfig,
    /// Rate per day.
    pub r: f64,
    pub day_count: DayCount,
    pub kind: KindFilter,
    pub pricing: CsyPricingConfig,
    pub band: (f64, f64),
}

impl Default for DevConfig {
    fn default() -> Self {
        DevConfig {
            chain: None,
            s0: None,
            params: sp_a_params(),
            intensity: IntensityConfig::default(),
            r: 0.0203 / 252.0,
            day_count: DayCount::Weekdays,
            kind: KindFilter::Call,
            pricing: CsyPricingConfig::default(),
            band: (-0.68, 2.01),
        }
    }
}

fn run_dev(c: &DevConfig, cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let chain = load_chain(&c.chain, "dev")?;
    let s0 = required(&c.s0, "dev", "s0")?;
    let params = c.params.to_params()?;
    let xi = load_intensity(&c.intensity, cfg.seed, "dev")?;
    let settings = SurfaceSettings { dt: xi.dt, day_count: c.day_count, kind: c.kind.get(), fit_tol: 1e-6 };
    let dev = csy_dev_surface(&chain, s0, &params, &xi, c.r, &settings, &c.pricing)?.annotate(c.band.0, c.band.1);
    sink.surface("dev_surface", &dev)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpliedLambdaConfig {
    pub chain: Option<String>,
    pub s0: Option<f64>,
    pub params: CsyParamVector,
    pub intensity: IntensityConfig,
    pub r: f64,
    pub day_count: DayCount,
    pub kind: KindFilter,
    pub fit_tol: f64,
    pub pricing: CsyPricingConfig,
    pub search: LambdaSearch,
    pub band: (f64, f64),
}

impl Default for ImpliedLambdaConfig {
    fn default() -> Self {
        ImpliedLambdaConfig {
            chain: None,
            s0: None,
            params: sp_a_params(),
            intensity: IntensityConfig::default(),
            r: 0.0203 / 252.0,
            day_count: DayCount::Weekdays,
            kind: KindFilter::Call,
            fit_tol: 1e-6,
            pricing: CsyPricingConfig::default(),
            search: LambdaSearch::default(),
            band: (2.25e-6, 3.2e-3),
        }
    }
}

fn run_implied_lambda(c: &ImpliedLambdaConfig, cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let chain = load_chain(&c.chain, "implied_lambda")?;
    let s0 = required(&c.s0, "implied_lambda", "s0")?;
    let params = c.params.to_params()?;
    let xi = load_intensity(&c.intensity, cfg.seed, "implied_lambda")?;
    let settings = SurfaceSettings { dt: xi.dt, day_count: c.day_count, kind: c.kind.get(), fit_tol: c.fit_tol };
    let surface = implied_lambda_surface(&chain, s0, &params, &xi, c.r, &settings, &c.pricing, &c.search)?
        .annotate(c.band.0, c.band.1);
    sink.surface("lambda_surface", &surface)
}
