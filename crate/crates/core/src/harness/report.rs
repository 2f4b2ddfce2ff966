//! Experiment runs, reports and rate tables.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    block_rng, thread_pool, BatchEstimator, Estimate, ExperimentConfig, HarnessError, Query,
    STREAM_SAMPLING, STREAM_TRAJECTORY, STREAM_TRIALS,
};
use crate::channel::transmit_feedback;
use crate::coloring::WorstPair;
use crate::idcode::{plan, IdCodePlan, IdFeedbackCode, IdentityCount};

/// Column order of the estimate CSV.
pub const CSV_COLUMNS: [&str; 9] = [
    "kind", "i", "j", "trials", "errors", "estimate", "ci_lo", "ci_hi", "oracle",
];

/// Identification rates under the three scalings `2^x`, `x^x`, `2^(2^x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub n: usize,
    pub log2_identities: f64,
    /// `log2 N / n`.
    pub phi1: f64,
    /// `log2 N / (n log2 n)`.
    pub phi2: f64,
    /// `log2 log2 N / n`.
    pub phi3: f64,
}

pub fn rate_table(n: usize, identities: IdentityCount) -> Result<Rates, HarnessError> {
    if n < 2 {
        return Err(HarnessError::Parameter(format!("blocklength n = {n} must be at least 2")));
    }
    let log2_n_ids = identities.log2();
    if !(log2_n_ids >= 1.0) {
        return Err(HarnessError::Parameter("N must be at least 2".into()));
    }
    let nf = n as f64;
    Ok(Rates {
        n,
        log2_identities: log2_n_ids,
        phi1: log2_n_ids / nf,
        phi2: log2_n_ids / (nf * nf.log2()),
        phi3: log2_n_ids.log2() / nf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateKind {
    Mu1,
    Mu2,
}

/// One line of the estimate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub kind: EstimateKind,
    pub i: u128,
    /// Receiver identity; equals `i` for `mu1`.
    pub j: u128,
    pub trials: u64,
    pub errors: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub oracle: Option<f64>,
}

impl EstimateRow {
    fn new(query: Query, e: Estimate, oracle: Option<f64>) -> Self {
        let kind = match query {
            Query::Mu1 { .. } => EstimateKind::Mu1,
            Query::Mu2 { .. } => EstimateKind::Mu2,
        };
        Self {
            kind,
            i: query.sender(),
            j: query.receiver(),
            trials: e.trials,
            errors: e.errors,
            estimate: e.estimate,
            ci_lo: e.ci_lo,
            ci_hi: e.ci_hi,
            oracle,
        }
    }

    fn record(&self) -> [String; 9] {
        [
            match self.kind {
                EstimateKind::Mu1 => "mu1".into(),
                EstimateKind::Mu2 => "mu2".into(),
            },
            self.i.to_string(),
            self.j.to_string(),
            self.trials.to_string(),
            self.errors.to_string(),
            self.estimate.to_string(),
            self.ci_lo.to_string(),
            self.ci_hi.to_string(),
            self.oracle.map(|o| o.to_string()).unwrap_or_default(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: ExperimentConfig,
    pub plan: IdCodePlan,
    pub worst_pair: Option<WorstPair>,
    pub mu1: Vec<EstimateRow>,
    pub mu2: Vec<EstimateRow>,
    pub rates: Option<Rates>,
    /// Largest lower confidence bound over all estimates.
    pub max_ci_lo: f64,
    /// No lower bound exceeds lambda.
    pub bound_ok: bool,
    pub trials_per_estimate: u64,
    pub wall_clock_secs: f64,
}

impl SimReport {
    pub fn rows(&self) -> impl Iterator<Item = &EstimateRow> {
        self.mu1.iter().chain(&self.mu2)
    }

    /// Copy with the timing field cleared, for content comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for row in self.rows() {
            w.write_record(row.record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<(), HarnessError> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    /// Writes `estimates.csv` and `report.json` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(dir.join("estimates.csv"))?))?;
        self.write_json(std::io::BufWriter::new(std::fs::File::create(dir.join("report.json"))?))?;
        Ok(())
    }
}

/// Identities for `mu_1`: all of them if few, else `1`, `N` and random ones.
pub fn sample_identities<R: Rng + ?Sized>(n: u128, count: usize, rng: &mut R) -> Vec<u128> {
    if n <= count as u128 {
        return (1..=n).collect();
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    for id in [1, n] {
        if out.len() < count && seen.insert(id) {
            out.push(id);
        }
    }
    while out.len() < count {
        let id = rng.random_range(1..=n);
        if seen.insert(id) {
            out.push(id);
        }
    }
    out
}

/// Ordered pairs `i != j` for `mu_2`: all of them if few, else `count`
/// distinct random ones.
pub fn sample_pairs<R: Rng + ?Sized>(n: u128, count: usize, rng: &mut R) -> Vec<(u128, u128)> {
    if n < 2 {
        return Vec::new();
    }
    if n.checked_mul(n - 1).is_some_and(|all| all <= count as u128) {
        return (1..=n)
            .flat_map(|i| (1..=n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = rng.random_range(1..=n);
        let j = rng.random_range(1..=n);
        if i != j && seen.insert((i, j)) {
            out.push((i, j));
        }
    }
    out
}

/// Plans and builds the code described by `config`.
pub fn build_code(config: &ExperimentConfig) -> Result<IdFeedbackCode, HarnessError> {
    let p = plan(
        &config.noise,
        config.code.lambda,
        config.constraint(),
        config.identities(),
        &config.plan_options(),
    )?;
    Ok(IdFeedbackCode::build(&config.noise, &p)?)
}

/// Plans the code, estimates `mu_1` on sampled identities and `mu_2` on the
/// worst-agreement pair plus sampled pairs, and attaches exact values where
/// available.
pub fn run_experiment(config: &ExperimentConfig) -> Result<SimReport, HarnessError> {
    config.validate()?;
    let pool = thread_pool(config.sim.threads)?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &ExperimentConfig) -> Result<SimReport, HarnessError> {
    let start = Instant::now();
    let code = build_code(config)?;
    let n = code.identities();
    let seed = config.sim.seed;
    let mut rng = block_rng(seed, STREAM_SAMPLING, 0);

    let mut queries: Vec<Query> = sample_identities(n, config.sim.identities, &mut rng)
        .into_iter()
        .map(|i| Query::Mu1 { i })
        .collect();
    let worst_pair = code.family().worst_pair_within(n);
    let mut pairs = Vec::new();
    if let Some(w) = worst_pair {
        if w.i <= n && w.j <= n {
            pairs.push((w.i, w.j));
            pairs.push((w.j, w.i));
        }
    }
    for p in sample_pairs(n, config.sim.pairs, &mut rng) {
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    queries.extend(pairs.into_iter().map(|(i, j)| Query::Mu2 { i, j }));

    let batch = BatchEstimator::new(&code, queries)?;
    let estimates = batch.estimate(config.sim.trials, seed, STREAM_TRIALS)?;
    let mut mu1 = Vec::new();
    let mut mu2 = Vec::new();
    for (&q, e) in batch.queries().iter().zip(estimates) {
        match q {
            Query::Mu1 { i } => mu1.push(EstimateRow::new(q, e, code.oracle_mu1(i).ok())),
            Query::Mu2 { i, j } => mu2.push(EstimateRow::new(q, e, code.oracle_mu2(i, j).ok())),
        }
    }
    let lambda = config.code.lambda;
    let max_ci_lo = mu1.iter().chain(&mu2).map(|r| r.ci_lo).fold(0.0, f64::max);
    let ids = match (config.identities(), code.plan().rs_q, code.plan().rs_m) {
        (IdentityCount::ReedSolomon { .. }, Some(q), Some(m)) => IdentityCount::ReedSolomon { q, m },
        (other, _, _) => other,
    };
    Ok(SimReport {
        config: config.clone(),
        plan: code.plan().clone(),
        worst_pair,
        mu1,
        mu2,
        rates: rate_table(code.total_n(), ids).ok(),
        max_ci_lo,
        bound_ok: max_ci_lo <= lambda,
        trials_per_estimate: config.sim.trials,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Writes one transmission of identity 1 as `t,x,z,y` rows.
pub fn write_trajectory<W: Write>(
    code: &IdFeedbackCode,
    seed: u64,
    mut out: W,
) -> Result<(), HarnessError> {
    let mut rng = block_rng(seed, STREAM_TRAJECTORY, 0);
    let traj = transmit_feedback(&code.make_encoder(1)?, code.spec(), &mut rng)?;
    writeln!(out, "t,x,z,y")?;
    traj.write_csv_rows(&mut out)?;
    Ok(())
}
