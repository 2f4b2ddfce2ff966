//! The `idfc` command line.
//!
//! Exit codes: 0 success, 1 invalid arguments or configuration, 2 no code
//! meets the request, 3 I/O failure, 4 an estimate contradicts the error
//! bound (or a self-test failed).

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{ExperimentConfig, OutputFormat};
use super::report::{build_code, rate_table, run_experiment, write_trajectory};
use super::{BatchEstimator, HarnessError, Query, STREAM_TRIALS};
use crate::channel::PowerConstraint;
use crate::common_randomness::{build_pi, CrOutcome};
use crate::idcode::{plan, IdFeedbackCode, IdentityCount, PlanOptions};
use crate::noise::{Atom, AcPart, NoiseSpec};
use crate::stats::chi_square_uniform;
use crate::transmission::q_function;

/// Environment variable overriding `--threads`.
pub const THREADS_ENV: &str = "IDFC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "idfc", version, about = "Identification codes with feedback over non-discrete additive noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the planned code parameters.
    Plan(PlanArgs),
    /// Estimate both error probabilities by Monte Carlo.
    Simulate(SimulateArgs),
    /// Print identification rates for a blocklength and identity count.
    Rates(RatesArgs),
    /// Run quick internal consistency checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Config file, or the name of a bundled config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Directory for estimates.csv and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long)]
    threads: Option<u32>,
    /// Also write one transmission of identity 1 as t,x,z,y rows.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RatesArgs {
    /// Take n and N from the plan of this config.
    #[arg(long, conflicts_with_all = ["n", "identities", "q", "m"])]
    config: Option<PathBuf>,
    /// Blocklength.
    #[arg(long)]
    n: Option<usize>,
    /// Identity count N.
    #[arg(long, conflicts_with_all = ["q", "m"])]
    identities: Option<u128>,
    /// N = q^m.
    #[arg(long, requires = "m")]
    q: Option<u64>,
    #[arg(long, requires = "q")]
    m: Option<u32>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20_000)]
    trials: u64,
    #[arg(long)]
    threads: Option<u32>,
}

fn threads(flag: Option<u32>) -> Result<Option<usize>, HarnessError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(HarnessError::Parameter(format!("{THREADS_ENV}={v} is not a positive integer"))),
        },
        Err(_) => Ok(flag.map(|t| t as usize)),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Plan(a) => cmd_plan(a, out),
        Command::Simulate(a) => cmd_simulate(a, out, err),
        Command::Rates(a) => cmd_rates(a, out),
        Command::Selftest(a) => cmd_selftest(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_plan(a: PlanArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let config = ExperimentConfig::load(&a.config)?;
    let code = build_code(&config)?;
    let p = code.plan();
    match a.format.unwrap_or(config.output.format) {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, p)?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            let value = serde_json::to_value(p)?;
            writeln!(out, "key,value")?;
            if let serde_json::Value::Object(map) = value {
                for (k, v) in map {
                    let v = match v {
                        serde_json::Value::String(s) => s,
                        other => other.to_string(),
                    };
                    writeln!(out, "{k},\"{}\"", v.replace('"', "\"\""))?;
                }
            }
        }
    }
    Ok(0)
}

fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, HarnessError> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        config.sim.seed = seed;
    }
    if let Some(trials) = a.trials {
        config.sim.trials = trials;
    }
    if let Some(t) = threads(a.threads)? {
        config.sim.threads = Some(t);
    }
    if let Some(dir) = a.out {
        config.output.dir = Some(dir);
    }
    if let Some(f) = a.format {
        config.output.format = f;
    }
    let report = run_experiment(&config)?;
    if let Some(dir) = &config.output.dir {
        report.write_files(dir)?;
    }
    if let Some(path) = &a.trajectory {
        let code = build_code(&config)?;
        write_trajectory(&code, config.sim.seed, std::io::BufWriter::new(std::fs::File::create(path)?))?;
    }
    match config.output.format {
        OutputFormat::Csv => report.write_csv(&mut *out)?,
        OutputFormat::Json => report.write_json(&mut *out)?,
    }
    writeln!(
        err,
        "n = {} (n_cr = {}, r = {}), max lower bound {:.6} vs lambda {}: {}",
        report.plan.total_n,
        report.plan.n_cr,
        report.plan.r,
        report.max_ci_lo,
        config.code.lambda,
        if report.bound_ok { "ok" } else { "VIOLATED" }
    )?;
    Ok(if report.bound_ok { 0 } else { 4 })
}

fn cmd_rates(a: RatesArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let (n, ids, format) = match &a.config {
        Some(path) => {
            let config = ExperimentConfig::load(path)?;
            let code = build_code(&config)?;
            let p = code.plan();
            let ids = match (p.rs_q, p.rs_m, p.requested) {
                (Some(q), Some(m), IdentityCount::ReedSolomon { .. }) => IdentityCount::ReedSolomon { q, m },
                (_, _, requested) => requested,
            };
            (p.total_n, ids, a.format.unwrap_or(config.output.format))
        }
        None => {
            let n = a.n.ok_or_else(|| HarnessError::Parameter("--n is required without --config".into()))?;
            let ids = match (a.identities, a.q, a.m) {
                (Some(big_n), _, _) => IdentityCount::Count(big_n),
                (None, Some(q), Some(m)) => IdentityCount::ReedSolomon { q, m },
                _ => return Err(HarnessError::Parameter("give --identities or --q and --m".into())),
            };
            (n, ids, a.format.unwrap_or_default())
        }
    };
    let r = rate_table(n, ids)?;
    match format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, &r)?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            writeln!(out, "n,log2_identities,phi1,phi2,phi3")?;
            writeln!(out, "{},{},{},{},{}", r.n, r.log2_identities, r.phi1, r.phi2, r.phi3)?;
        }
    }
    Ok(0)
}

fn check(out: &mut dyn Write, name: &str, ok: bool, detail: String) -> Result<bool, HarnessError> {
    writeln!(out, "{} {name}: {detail}", if ok { "ok  " } else { "FAIL" })?;
    Ok(ok)
}

fn cmd_selftest(a: SelftestArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let pool = super::thread_pool(threads(a.threads)?)?;
    let mut buf = Vec::new();
    let code = pool.install(|| selftest(a.seed, a.trials.max(1), &mut buf));
    out.write_all(&buf)?;
    code
}

fn selftest(seed: u64, trials: u64, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let mut all = true;

    let (q1, q2) = (q_function(1.0), q_function(2.0));
    all &= check(
        out,
        "tail function",
        (q1 - 0.158655).abs() < 1e-5 && (q2 - 0.022750).abs() < 1e-5,
        format!("Q(1) = {q1:.6}, Q(2) = {q2:.6}"),
    )?;

    let mixed = NoiseSpec::new(
        0.5,
        vec![Atom { value: 0.0, weight: 1.0 }],
        0.5,
        Some(AcPart::Uniform { a: 0.0, b: 1.0 }),
        0.0,
        None,
    )
    .map_err(|e| HarnessError::Parameter(e.to_string()))?;
    let pimap = build_pi(&mixed, 16, 0.1).map_err(|e| HarnessError::Parameter(e.to_string()))?;
    let mut rng = super::block_rng(seed, STREAM_TRIALS, u64::MAX);
    let mut bins = vec![0u64; 16];
    let mut fails = 0u64;
    let mut obs = vec![0.0; pimap.n_cr()];
    for _ in 0..trials {
        for v in obs.iter_mut() {
            *v = mixed.sample(&mut rng);
        }
        match pimap.apply(&obs) {
            CrOutcome::Bin(l) => bins[l as usize - 1] += 1,
            CrOutcome::Failure => fails += 1,
        }
    }
    let (stat, p) = chi_square_uniform(&bins);
    all &= check(out, "common randomness uniformity", p > 1e-3, format!("chi2 = {stat:.2}, p = {p:.4}"))?;
    let fail = super::Estimate::from_counts(fails, trials);
    all &= check(
        out,
        "common randomness failure rate",
        fail.contains(pimap.fail_prob()),
        format!("{:.5} in [{:.5}, {:.5}], exact {}", fail.estimate, fail.ci_lo, fail.ci_hi, pimap.fail_prob()),
    )?;

    let gauss = NoiseSpec::gaussian(0.0, 1.0).map_err(|e| HarnessError::Parameter(e.to_string()))?;
    let p = plan(&gauss, 0.2, PowerConstraint::Peak(5.0), IdentityCount::Count(1000), &PlanOptions::default())?;
    let code = IdFeedbackCode::build(&gauss, &p)?;
    let w = code.family().worst_pair_within(code.identities()).expect("several identities");
    let queries = vec![Query::Mu1 { i: 1 }, Query::Mu2 { i: w.i, j: w.j }];
    let est = BatchEstimator::new(&code, queries)?.estimate(trials, seed, STREAM_TRIALS)?;
    let mu1 = code.oracle_mu1(1)?;
    let mu2 = code.oracle_mu2(w.i, w.j)?;
    all &= check(
        out,
        "mu1 against exact value",
        est[0].contains(mu1) && est[0].ci_lo <= 0.2,
        format!("{:.5} in [{:.5}, {:.5}], exact {mu1:.5}", est[0].estimate, est[0].ci_lo, est[0].ci_hi),
    )?;
    all &= check(
        out,
        "mu2 against exact value",
        est[1].contains(mu2) && est[1].ci_lo <= 0.2,
        format!("{:.5} in [{:.5}, {:.5}], exact {mu2:.5}", est[1].estimate, est[1].ci_lo, est[1].ci_hi),
    )?;
    Ok(if all { 0 } else { 4 })
}
