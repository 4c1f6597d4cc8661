//! Command-line front end: parse config, dispatch experiments, emit
//! machine-readable results (CSV scans, JSON-lines replica dumps) and
//! human-readable summaries on stderr.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 runtime error,
//! 3 failed built-in pass/fail check (kahane, good-env).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::brw::{critical_constants, exact_second_moment_dary};
use crate::experiments::{
    cascade_mass_scan, config_hash, crem_scan, critical_decay_fit, fractional_moment_scan,
    good_env_mass, kahane_check, l2_beta2_bracket, phase_scan_l2, simulate_replicas,
    universality_gap, ExperimentConfig, ProfileSpec, ScanResult, ScanRow,
};
use crate::tree::OffspringLaw;
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "brwlab",
    version,
    about = "Branching random walk, CREM, and cascade partition-function lab",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// JSON experiment configuration; flags override its scalar fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output file (CSV for scans, JSON-lines for simulate); a manifest is
    /// written alongside as <out>.manifest.json.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Base seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Replica-count override.
    #[arg(long, global = true)]
    replicas: Option<u64>,

    /// Worker threads (default: BRWLAB_WORKERS, then available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Write result data to standard output instead of a file.
    #[arg(long, global = true)]
    stdout: bool,

    /// Offspring mean / branching factor override.
    #[arg(long, global = true)]
    d: Option<u32>,

    /// Single depth override (replaces the configured depth list).
    #[arg(long, global = true)]
    n: Option<u32>,

    /// Single inverse-temperature override.
    #[arg(long, global = true)]
    beta: Option<f64>,

    /// Barrier slope override.
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Barrier start override.
    #[arg(long, global = true)]
    n0: Option<u32>,

    /// Fractional-moment exponent override.
    #[arg(long, global = true)]
    a: Option<f64>,

    /// Variance profile: constant | linear | table:<path to JSON knots>.
    #[arg(long, global = true)]
    profile: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Per-replica partition dumps (JSON lines).
    Simulate,
    /// Exact second moment of the weighted partition function.
    SecondMoment,
    /// Exact-vs-Monte-Carlo second-moment scan with divergence classification.
    PhaseScan,
    /// Coupled |W - Wbar| gap across depths.
    Universality,
    /// Fractional-moment scan with analytic rates.
    Fractional,
    /// Concave-moment comparison of the two fields (pass/fail).
    Kahane,
    /// Critical-decay fit of median Wbar against depth.
    CriticalFit,
    /// Barrier-restricted mass scan over n0 (pass/fail on monotonicity).
    GoodEnv,
    /// CREM partition scan.
    Crem,
    /// Dyadic cascade measure export.
    Cascade,
    /// Critical temperatures for the configured offspring mean.
    Constants,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // clap usage/help text; unknown subcommands exit 1 per contract,
            // --help/--version exit 0
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => 2,
        Error::Json(_) => 1,
        Error::InvalidConfig(_)
        | Error::InvalidProfile(_)
        | Error::InvalidCremProfile(_)
        | Error::InvalidOffspringLaw(_)
        | Error::SubcriticalMean(_)
        | Error::BetaAboveCritical { .. }
        | Error::BetaNotCritical { .. }
        | Error::GapIdenticallyZero
        | Error::NListTooShort => 1,
        _ => 2,
    }
}

fn init_workers(cli: &Cli) {
    let workers = cli
        .workers
        .or_else(|| {
            std::env::var("BRWLAB_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
    // a global pool can only be installed once per process; later calls keep
    // the existing pool, which is fine for identical settings
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global();
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.ensemble.base_seed = seed;
    }
    if let Some(replicas) = cli.replicas {
        config.ensemble.replicas = replicas;
    }
    if let Some(d) = cli.d {
        config.model.d = d;
        if matches!(config.model.offspring, OffspringLaw::DeterministicD { .. }) {
            config.model.offspring = OffspringLaw::DeterministicD { d };
        }
    }
    if let Some(n) = cli.n {
        config.model.ns = vec![n];
        config.estimator.cascade_depth = n;
    }
    if let Some(beta) = cli.beta {
        config.model.betas = vec![beta];
    }
    if let Some(alpha) = cli.alpha {
        config.estimator.alpha = alpha;
    }
    if let Some(n0) = cli.n0 {
        config.estimator.n0 = n0;
        config.estimator.n0_list = None;
    }
    if let Some(a) = cli.a {
        config.estimator.fractional_a = a;
    }
    if let Some(spec) = &cli.profile {
        config.model.profile = parse_profile_flag(spec)?;
    }
    config.validate()?;
    Ok(config)
}

fn parse_profile_flag(spec: &str) -> Result<ProfileSpec> {
    match spec {
        "constant" => Ok(ProfileSpec::Constant),
        "linear" => Ok(ProfileSpec::Linear),
        other => {
            if let Some(path) = other.strip_prefix("table:") {
                let text = std::fs::read_to_string(path)?;
                let knots: Vec<(f64, f64)> = serde_json::from_str(&text)?;
                Ok(ProfileSpec::Table { knots })
            } else {
                Err(Error::InvalidConfig(format!(
                    "unknown profile '{other}' (expected constant | linear | table:<path>)"
                )))
            }
        }
    }
}

#[derive(serde::Serialize)]
struct RunManifest<'a> {
    config: &'a ExperimentConfig,
    config_hash: String,
    tool_version: &'static str,
    duration_seconds: f64,
    row_counts: BTreeMap<String, u64>,
    unix_time_seconds: f64,
}

struct OutputSink<'a> {
    out: Option<&'a Path>,
    to_stdout: bool,
}

impl OutputSink<'_> {
    fn write_data(&self, data: &str) -> Result<()> {
        if let Some(path) = self.out {
            std::fs::write(path, data)?;
        }
        if self.to_stdout {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(data.as_bytes())?;
        }
        if self.out.is_none() && !self.to_stdout {
            eprintln!("note: no --out and no --stdout; result data discarded after summary");
        }
        Ok(())
    }

    fn write_manifest(
        &self,
        config: &ExperimentConfig,
        started: Instant,
        row_counts: BTreeMap<String, u64>,
    ) -> Result<()> {
        if let Some(path) = self.out {
            let manifest = RunManifest {
                config,
                config_hash: format!("{:016x}", config_hash(config)),
                tool_version: env!("CARGO_PKG_VERSION"),
                duration_seconds: started.elapsed().as_secs_f64(),
                row_counts,
                unix_time_seconds: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs_f64())
                    .unwrap_or(0.0),
            };
            let mut name = path.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            let manifest_path = path.with_file_name(name);
            std::fs::write(manifest_path, serde_json::to_string_pretty(&manifest)?)?;
        }
        Ok(())
    }
}

fn scan_to_csv(rows: &[ScanRow]) -> String {
    let mut csv = String::from(ScanRow::CSV_HEADER);
    csv.push('\n');
    for row in rows {
        csv.push_str(&row.to_csv_line());
        csv.push('\n');
    }
    csv
}

fn emit_scan(
    sink: &OutputSink,
    config: &ExperimentConfig,
    started: Instant,
    result: &ScanResult,
) -> Result<()> {
    sink.write_data(&scan_to_csv(&result.rows))?;
    let mut counts = BTreeMap::new();
    counts.insert(result.experiment.clone(), result.rows.len() as u64);
    sink.write_manifest(config, started, counts)?;
    eprintln!(
        "{}: {} rows, config hash {:016x}, seed {}",
        result.experiment,
        result.rows.len(),
        result.config_hash,
        result.base_seed
    );
    Ok(())
}

fn execute(cli: &Cli) -> Result<i32> {
    init_workers(cli);
    let started = Instant::now();
    let config = load_config(cli)?;
    let sink = OutputSink {
        out: cli.out.as_deref(),
        to_stdout: cli.stdout,
    };

    match cli.command {
        Cmd::Constants => {
            let c = critical_constants(config.model.d as f64)?;
            println!("beta_c={:.12}", c.beta_c);
            println!("beta_2={:.12}", c.beta_2);
        }
        Cmd::SecondMoment => {
            let n = *config.model.ns.last().unwrap();
            let beta = *config.model.betas.last().unwrap();
            let profile = config.model.profile.build(n)?;
            let value = exact_second_moment_dary(config.model.d, n, beta, &profile)?;
            println!("{:.10}", value.to_linear());
        }
        Cmd::Simulate => {
            let outcomes = simulate_replicas(&config)?;
            let mut data = String::new();
            for outcome in &outcomes {
                data.push_str(&serde_json::to_string(outcome)?);
                data.push('\n');
            }
            sink.write_data(&data)?;
            let mut counts = BTreeMap::new();
            counts.insert("simulate".to_string(), outcomes.len() as u64);
            sink.write_manifest(&config, started, counts)?;
            eprintln!("simulate: {} replica rows", outcomes.len());
        }
        Cmd::PhaseScan => {
            let result = phase_scan_l2(&config)?;
            if config.model.ns.len() >= 2 {
                let bracket = l2_beta2_bracket(
                    config.model.d,
                    &config.model.ns,
                    config.estimator.growth_threshold,
                )?;
                eprintln!(
                    "beta_2 bracket: [{:.6}, {:.6}] mid {:.6} (exact sqrt(ln d) = {:.6})",
                    bracket.lo,
                    bracket.hi,
                    bracket.mid,
                    (config.model.d as f64).ln().sqrt()
                );
            }
            emit_scan(&sink, &config, started, &result)?;
        }
        Cmd::Universality => {
            let result = universality_gap(&config)?;
            emit_scan(&sink, &config, started, &result)?;
        }
        Cmd::Fractional => {
            let result = fractional_moment_scan(&config)?;
            emit_scan(&sink, &config, started, &result)?;
        }
        Cmd::Kahane => {
            let report = kahane_check(&config)?;
            let result = ScanResult {
                experiment: "kahane".into(),
                rows: report.rows.clone(),
                config_hash: report.config_hash,
                base_seed: config.ensemble.base_seed,
            };
            emit_scan(&sink, &config, started, &result)?;
            for cell in &report.cells {
                eprintln!(
                    "kahane n={} beta={}: E[Wbar^a]={:.6} E[W^a]={:.6} diff={:.3e} \
                     (>= -4se = {:.3e}) {}",
                    cell.n,
                    cell.beta,
                    cell.mean_inhom,
                    cell.mean_hom,
                    cell.diff,
                    -4.0 * cell.diff_stderr,
                    if cell.pass { "PASS" } else { "FAIL" }
                );
            }
            if !report.pass {
                return Ok(3);
            }
        }
        Cmd::CriticalFit => {
            let report = critical_decay_fit(&config)?;
            let result = ScanResult {
                experiment: "critical_fit".into(),
                rows: report.rows.clone(),
                config_hash: report.config_hash,
                base_seed: config.ensemble.base_seed,
            };
            emit_scan(&sink, &config, started, &result)?;
            eprintln!(
                "critical fit: slope {:.4} +/- {:.4} (r^2 {:.4}) at beta_c {:.6}",
                report.fit.slope, report.fit.stderr_slope, report.fit.r_squared, report.beta_c
            );
        }
        Cmd::GoodEnv => {
            let report = good_env_mass(&config)?;
            let result = ScanResult {
                experiment: "good_env".into(),
                rows: report.rows.clone(),
                config_hash: report.config_hash,
                base_seed: config.ensemble.base_seed,
            };
            emit_scan(&sink, &config, started, &result)?;
            eprintln!(
                "good-env: K mass monotone in n0: {}; extreme CIs separated: {}",
                report.monotone_in_n0, report.ci_separated
            );
            if !report.monotone_in_n0 {
                return Ok(3);
            }
        }
        Cmd::Crem => {
            let result = crem_scan(&config)?;
            emit_scan(&sink, &config, started, &result)?;
        }
        Cmd::Cascade => {
            // the measure itself (replica 0) as level,index,log_mass rows
            let m = config.estimator.cascade_depth;
            let beta = *config.model.betas.last().unwrap();
            let seed = config.replica_seed_lane(0x0a);
            let measure = crate::crem::cascade_measure(m, beta, seed)?;
            let mut data = String::from("level,index,log_mass\n");
            for (i, mass) in measure.cell_masses().iter().enumerate() {
                data.push_str(&format!("{m},{i},{}\n", mass.0));
            }
            sink.write_data(&data)?;
            let summary = cascade_mass_scan(&config)?;
            let mut counts = BTreeMap::new();
            counts.insert(
                "cascade_cells".to_string(),
                measure.cell_masses().len() as u64,
            );
            sink.write_manifest(&config, started, counts)?;
            for row in &summary.rows {
                eprintln!(
                    "cascade m={} beta={}: mean total mass {:.6} +/- {:.6} over {} replicas",
                    row.n, row.beta, row.mean, row.stderr, row.count
                );
            }
        }
    }
    Ok(0)
}
