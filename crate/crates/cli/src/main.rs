//! `vlasov-yukawa`: certification suites, free-streaming tables, Picard runs
//! and oracle comparisons, each writing CSV files and a JSON report.
//!
//! Exit codes: 0 when every margin passes, 1 on a margin failure or a
//! numerical error, 2 on a usage or configuration error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::json;

use vlasov_yukawa::oracle::{run_and_compare, write_comparison_csv};
use vlasov_yukawa::picard::{decay_table, run, write_decay_csv, DensityHistory, RunConfig, OUTPUT_CONSTANT};
use vlasov_yukawa::transport::free_streaming_closed_form;
use vlasov_yukawa::verification::{self, write_rows, CriterionResult, MarginRow};

#[derive(Parser, Debug)]
#[command(name = "vlasov-yukawa", version, about = "Screened Vlasov–Poisson near vacuum: bounds, simulation, cross-checks")]
struct Cli {
    /// TOML file with RunConfig keys; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from the reduced desk preset instead of the full defaults.
    #[arg(long, global = true)]
    desk: bool,
    /// Output directory, created if needed.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores). Overrides the config key.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for the randomized suites. Overrides the config key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coefficient, weight-sum, time-integral and comparison-ODE suites.
    VerifyLemmas {
        /// Random coefficient paths in the comparison suite.
        #[arg(long, default_value_t = 100)]
        paths: usize,
    },
    /// Closed-form free-streaming density and its decay envelope.
    FreeStream,
    /// Picard iteration from the configured Gaussian data.
    Simulate,
    /// Semi-Lagrangian oracle against a stored Picard history.
    OracleCompare {
        /// Density history written by `simulate` (default: OUT/history.csv).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// cₙ(t) and envelope table of a stored Picard history.
    DecayReport {
        #[arg(long)]
        history: Option<PathBuf>,
    },
}

/// Usage and configuration failures, reported with exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            let base = if cli.desk { RunConfig::desk() } else { RunConfig::default() };
            let mut table: toml::Table = toml::from_str(&base.to_toml()?).map_err(|e| usage(e.to_string()))?;
            let user: toml::Table = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            table.extend(user);
            RunConfig::from_toml(&toml::to_string(&table)?).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None if cli.desk => RunConfig::desk(),
        None => RunConfig::default(),
    };
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Outcome of one subcommand: pass flag and the labels of failed checks.
struct Outcome {
    pass: bool,
    failures: Vec<String>,
}

impl Outcome {
    fn from_results(results: &[CriterionResult]) -> Self {
        let failures: Vec<String> = results.iter().filter(|r| !r.pass).map(|r| format!("{}: {}", r.name, r.detail)).collect();
        Self { pass: failures.is_empty(), failures }
    }
}

fn verify_lemmas(cfg: &RunConfig, out: &Path, paths: usize) -> anyhow::Result<Outcome> {
    let suites = [
        ("coefficients.csv", verification::faa_di_bruno_suite()?),
        ("binomial_sums.csv", verification::binomial_sum_suite()?),
        ("time_integral.csv", verification::time_integral_suite()?),
        ("comparison.csv", verification::comparison_suite(paths, cfg.seed)?),
    ];
    let mut results = vec![];
    for (file, suite) in &suites {
        println!("{}", suite.result.line());
        write_rows(&suite.rows, create(out, file)?)?;
        results.push(suite.result.clone());
    }
    let outcome = Outcome::from_results(&results);
    write_json(out, "verify_lemmas.json", &json!({ "results": results, "failures": outcome.failures }))?;
    Ok(outcome)
}

fn free_stream(cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let (data, cert) = cfg.initial_data()?;
    let times = cfg.time_grid();
    let rows: Vec<MarginRow> = verification::free_streaming_envelope(&data, &times, cfg.certify_orders as usize, 1e-9)?;
    write_rows(&rows, create(out, "free_stream_envelope.csv")?)?;
    let mut w = create(out, "free_stream_density.csv")?;
    write!(w, "t,x,rho")?;
    for k in 1..=cfg.n_max {
        write!(w, ",d{k}rho")?;
    }
    writeln!(w)?;
    let h = 2.0 * cfg.half_width / (cfg.grid_len - 1) as f64;
    for &t in &times {
        for i in 0..cfg.grid_len {
            let x = -cfg.half_width + i as f64 * h;
            write!(w, "{t:.17e},{x:.17e}")?;
            for k in 0..=cfg.n_max {
                write!(w, ",{:.17e}", free_streaming_closed_form(&data, x, t, k))?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    let failures: Vec<String> = rows
        .iter()
        .filter(|r| r.margin < 0.0)
        .map(|r| format!("envelope fails at n = {}, t = {}", r.n, r.t))
        .chain(cert.first_failure().map(|n| format!("initial data certificate fails at order {n}")))
        .collect();
    let worst = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    println!(
        "free streaming: {} envelope rows, min margin {worst:.3e}, amplitude {:.3e} ({:.2}s)",
        rows.len(),
        data.total_amplitude(),
        start.elapsed().as_secs_f64()
    );
    write_json(out, "free_stream.json", &json!({ "amplitude": data.total_amplitude(), "cert": cert, "min_margin": worst, "failures": failures }))?;
    Ok(Outcome { pass: failures.is_empty(), failures })
}

fn simulate(cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let (data, cert) = cfg.initial_data()?;
    let (hist, report) = run(cfg, &data, cert)?;
    hist.write_csv(create(out, "history.csv")?)?;
    write_decay_csv(&report.decay, create(out, "decay.csv")?)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let result = verification::pipeline_result(&report);
    println!("{}", result.line());
    let failures = report.failures();
    write_json(out, "simulate.json", &json!({ "report": report, "failures": failures }))?;
    Ok(Outcome { pass: report.passed(), failures })
}

fn read_history(cfg: &RunConfig, out: &Path, history: Option<PathBuf>) -> anyhow::Result<DensityHistory> {
    let path = history.unwrap_or_else(|| out.join("history.csv"));
    let file = File::open(&path).map_err(|e| usage(format!("cannot open history {}: {e}", path.display())))?;
    DensityHistory::read_csv(BufReader::new(file), cfg.n_max).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn oracle_compare(cfg: &RunConfig, out: &Path, history: Option<PathBuf>) -> anyhow::Result<Outcome> {
    let hist = read_history(cfg, out, history)?;
    let (data, _) = cfg.initial_data()?;
    let start = Instant::now();
    let (_, cmp) = run_and_compare(cfg, &data, &hist)?;
    write_comparison_csv(&cmp, create(out, "oracle_comparison.csv")?)?;
    let result = verification::oracle_result(&cmp, start.elapsed().as_secs_f64());
    println!("{}", result.line());
    let outcome = Outcome::from_results(std::slice::from_ref(&result));
    write_json(out, "oracle_compare.json", &json!({ "comparison": cmp, "failures": outcome.failures }))?;
    Ok(outcome)
}

fn decay_report(cfg: &RunConfig, out: &Path, history: Option<PathBuf>) -> anyhow::Result<Outcome> {
    let hist = read_history(cfg, out, history)?;
    let rows = decay_table(&hist, cfg.n_max);
    write_decay_csv(&rows, create(out, "decay.csv")?)?;
    let mut failures = vec![];
    for r in &rows {
        if r.constant > OUTPUT_CONSTANT {
            failures.push(format!("c_{}({}) = {:e} above 1/3000", r.n, r.t, r.constant));
        }
        if !r.within_envelope {
            failures.push(format!("sup|d^{} rho|({}) = {:e} outside the envelope", r.n, r.t, r.sup));
        }
    }
    let max_c = rows.iter().map(|r| r.constant).fold(0.0, f64::max);
    println!("decay report: {} rows, max c_n·3000 = {:.3e}, {} failures", rows.len(), max_c * 3000.0, failures.len());
    write_json(out, "decay_report.json", &json!({ "rows": rows, "failures": failures }))?;
    Ok(Outcome { pass: failures.is_empty(), failures })
}

fn dispatch(cli: Cli) -> anyhow::Result<Outcome> {
    let cfg = load_config(&cli)?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global()?;
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match cli.command {
        Command::VerifyLemmas { paths } => verify_lemmas(&cfg, &cli.out, paths),
        Command::FreeStream => free_stream(&cfg, &cli.out),
        Command::Simulate => simulate(&cfg, &cli.out),
        Command::OracleCompare { history } => oracle_compare(&cfg, &cli.out, history),
        Command::DecayReport { history } => decay_report(&cfg, &cli.out, history),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(o) if o.pass => ExitCode::SUCCESS,
        Ok(o) => {
            eprintln!("{}", json!({ "failures": o.failures }));
            ExitCode::from(1)
        }
        Err(e) => {
            let code = if e.downcast_ref::<UsageError>().is_some() { 2 } else { 1 };
            eprintln!("{}", json!({ "error": format!("{e:#}") }));
            ExitCode::from(code)
        }
    }
}
