//! Monte Carlo estimation of the two error probabilities, experiment
//! configuration, reports and the command-line front end.
//!
//! Trials are cut into blocks of [`BLOCK_TRIALS`]. Block `b` of stream `s`
//! draws from `ChaCha8Rng` seeded with [`substream_seed`]`(seed, s)` on
//! ChaCha stream `b`, so results do not depend on the number of worker
//! threads. Per-block counts are summed in block order.

pub mod cli;
pub mod config;
pub mod report;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{transmit_feedback_into, ChannelError, Trajectory};
use crate::coloring::ColoringError;
use crate::common_randomness::CrOutcome;
use crate::idcode::{IdFeedbackCode, PlanError};
use crate::stats::clopper_pearson;

pub use config::ExperimentConfig;
pub use report::{rate_table, run_experiment, Rates, SimReport};

/// Trials per seeded block.
pub const BLOCK_TRIALS: u64 = 8192;
/// Confidence level of all reported intervals.
pub const CONFIDENCE: f64 = 0.99;

/// Substream ids.
pub const STREAM_TRIALS: u64 = 0;
pub const STREAM_SAMPLING: u64 = 1;
pub const STREAM_PLAN: u64 = 2;
pub const STREAM_TRAJECTORY: u64 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Parameter(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Coloring(#[from] ColoringError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl HarnessError {
    /// Process exit code: 1 invalid input, 2 infeasible plan, 3 I/O,
    /// 4 violated constraint.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Plan(e) if e.is_infeasible() => 2,
            HarnessError::Coloring(ColoringError::RetriesExhausted { .. }) => 2,
            HarnessError::Io(_) | HarnessError::Csv(_) | HarnessError::Json(_) => 3,
            HarnessError::Channel(_) => 4,
            _ => 1,
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `stream` under master seed `seed`.
pub fn substream_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Generator for block `block` of substream `stream`.
pub fn block_rng(seed: u64, stream: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, stream));
    rng.set_stream(block);
    rng
}

/// Runs `trials` trials in seeded blocks and sums the per-block counts.
pub fn run_blocks<F>(
    trials: u64,
    seed: u64,
    stream: u64,
    width: usize,
    body: F,
) -> Result<Vec<u64>, HarnessError>
where
    F: Fn(&mut ChaCha8Rng, u64, &mut [u64]) -> Result<(), HarnessError> + Sync,
{
    let blocks = trials.div_ceil(BLOCK_TRIALS);
    let per_block: Vec<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, stream, b);
            let n = BLOCK_TRIALS.min(trials - b * BLOCK_TRIALS);
            let mut counts = vec![0u64; width];
            body(&mut rng, n, &mut counts)?;
            Ok(counts)
        })
        .collect::<Result<_, HarnessError>>()?;
    let mut total = vec![0u64; width];
    for counts in &per_block {
        for (t, c) in total.iter_mut().zip(counts) {
            *t += c;
        }
    }
    Ok(total)
}

/// A binomial estimate with its Clopper-Pearson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub trials: u64,
    pub errors: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Estimate {
    pub fn from_counts(errors: u64, trials: u64) -> Self {
        let (ci_lo, ci_hi) = clopper_pearson(errors, trials, CONFIDENCE);
        Self {
            trials,
            errors,
            estimate: errors as f64 / trials as f64,
            ci_lo,
            ci_hi,
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_lo <= p && p <= self.ci_hi
    }
}

/// What a trial counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Query {
    /// Receiver `i` rejects when `i` was sent.
    Mu1 { i: u128 },
    /// Receiver `j` accepts when `i` was sent.
    Mu2 { i: u128, j: u128 },
}

impl Query {
    pub fn sender(&self) -> u128 {
        match *self {
            Query::Mu1 { i } | Query::Mu2 { i, .. } => i,
        }
    }

    pub fn receiver(&self) -> u128 {
        match *self {
            Query::Mu1 { i } => i,
            Query::Mu2 { j, .. } => j,
        }
    }

    fn validate(&self, code: &IdFeedbackCode) -> Result<(), HarnessError> {
        let n = code.identities();
        for id in [self.sender(), self.receiver()] {
            if id == 0 || id > n {
                return Err(ColoringError::IdentityOutOfRange(id).into());
            }
        }
        if let Query::Mu2 { i, j } = *self {
            if i == j {
                return Err(HarnessError::Parameter("mu_2 needs i != j".into()));
            }
        }
        Ok(())
    }

    /// Whether the trial with decision `accepted` counts as an error.
    fn is_error(&self, accepted: bool) -> bool {
        match self {
            Query::Mu1 { .. } => !accepted,
            Query::Mu2 { .. } => accepted,
        }
    }
}

fn simulate_query<R: Rng + ?Sized>(
    code: &IdFeedbackCode,
    query: Query,
    trials: u64,
    rng: &mut R,
) -> Result<u64, HarnessError> {
    let encoder = code.make_encoder(query.sender())?;
    let mut traj = Trajectory::default();
    let mut errors = 0;
    for _ in 0..trials {
        transmit_feedback_into(&encoder, code.spec(), rng, &mut traj)?;
        if query.is_error(code.decide(query.receiver(), &traj.outputs)) {
            errors += 1;
        }
    }
    Ok(errors)
}

/// Estimates `mu_1(i)` from `trials` full feedback transmissions.
pub fn estimate_mu1<R: Rng + ?Sized>(
    code: &IdFeedbackCode,
    i: u128,
    trials: u64,
    rng: &mut R,
) -> Result<Estimate, HarnessError> {
    estimate_query(code, Query::Mu1 { i }, trials, rng)
}

/// Estimates `mu_2(i, j)` from `trials` full feedback transmissions.
pub fn estimate_mu2<R: Rng + ?Sized>(
    code: &IdFeedbackCode,
    i: u128,
    j: u128,
    trials: u64,
    rng: &mut R,
) -> Result<Estimate, HarnessError> {
    estimate_query(code, Query::Mu2 { i, j }, trials, rng)
}

fn estimate_query<R: Rng + ?Sized>(
    code: &IdFeedbackCode,
    query: Query,
    trials: u64,
    rng: &mut R,
) -> Result<Estimate, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::Parameter("trials must be at least 1".into()));
    }
    query.validate(code)?;
    let errors = simulate_query(code, query, trials, rng)?;
    Ok(Estimate::from_counts(errors, trials))
}

/// As [`estimate_mu1`]/[`estimate_mu2`], split into seeded parallel blocks.
pub fn estimate_seeded(
    code: &IdFeedbackCode,
    query: Query,
    trials: u64,
    seed: u64,
    stream: u64,
) -> Result<Estimate, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::Parameter("trials must be at least 1".into()));
    }
    query.validate(code)?;
    let counts = run_blocks(trials, seed, stream, 1, |rng, n, counts| {
        counts[0] = simulate_query(code, query, n, rng)?;
        Ok(())
    })?;
    Ok(Estimate::from_counts(counts[0], trials))
}

/// Estimates many queries from shared noise draws.
///
/// Each trial draws the noise once, in the order a feedback transmission
/// would, and evaluates every query on it. Each individual count is
/// distributed exactly as with [`estimate_seeded`] and, for the same seed
/// and stream, equal to it.
pub struct BatchEstimator<'a> {
    code: &'a IdFeedbackCode,
    queries: Vec<Query>,
    /// Query-major sender and receiver colors per outcome, when small.
    colors: Option<(Vec<u32>, Vec<u32>)>,
}

const MAX_COLOR_CACHE: u64 = 1 << 24;

impl<'a> BatchEstimator<'a> {
    pub fn new(code: &'a IdFeedbackCode, queries: Vec<Query>) -> Result<Self, HarnessError> {
        for q in &queries {
            q.validate(code)?;
        }
        let l = code.plan().bins;
        let colors = if (queries.len() as u64).saturating_mul(l) <= MAX_COLOR_CACHE {
            let table = |who: fn(&Query) -> u128| -> Vec<u32> {
                queries
                    .iter()
                    .flat_map(|q| {
                        let id = who(q);
                        (1..=l).map(move |b| code.color(id, b) as u32)
                    })
                    .collect()
            };
            Some((table(Query::sender), table(Query::receiver)))
        } else {
            None
        };
        Ok(Self { code, queries, colors })
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    fn colors_at(&self, k: usize, l: u64) -> (u64, u64) {
        match &self.colors {
            Some((s, r)) => {
                let at = k * self.code.plan().bins as usize + (l - 1) as usize;
                (s[at] as u64, r[at] as u64)
            }
            None => {
                let q = &self.queries[k];
                (self.code.color(q.sender(), l), self.code.color(q.receiver(), l))
            }
        }
    }

    /// Adds the error counts of `trials` trials to `counts`.
    pub fn count<R: Rng + ?Sized>(&self, trials: u64, rng: &mut R, counts: &mut [u64]) {
        let code = self.code;
        let spec = code.spec();
        let tx = code.tx();
        let n_cr = code.plan().n_cr;
        let n = code.total_n();
        let m = tx.messages();
        let mut z = vec![0.0; n];
        let mut phase1 = vec![0.0; n_cr];
        let mut received = vec![0.0; n - n_cr];
        let mut decoded = vec![0usize; m + 1];
        let mut stamp = vec![0u64; m + 1];
        for trial in 1..=trials {
            for v in z.iter_mut() {
                *v = spec.sample(rng);
            }
            for (y, &zt) in phase1.iter_mut().zip(&z) {
                *y = 0.0 + zt;
            }
            match code.pimap().apply(&phase1) {
                CrOutcome::Failure => {
                    for (k, q) in self.queries.iter().enumerate() {
                        if q.is_error(false) {
                            counts[k] += 1;
                        }
                    }
                }
                CrOutcome::Bin(l) => {
                    for k in 0..self.queries.len() {
                        let (sent, wanted) = self.colors_at(k, l);
                        let c = sent as usize;
                        if stamp[c] != trial {
                            let x = tx.point(c).expect("color within alphabet");
                            for (y, &zt) in received.iter_mut().zip(&z[n_cr..]) {
                                *y = x + zt;
                            }
                            decoded[c] = tx.decode(&received);
                            stamp[c] = trial;
                        }
                        if self.queries[k].is_error(decoded[c] as u64 == wanted) {
                            counts[k] += 1;
                        }
                    }
                }
            }
        }
    }

    /// Runs `trials` trials in seeded parallel blocks.
    pub fn estimate(&self, trials: u64, seed: u64, stream: u64) -> Result<Vec<Estimate>, HarnessError> {
        if trials == 0 {
            return Err(HarnessError::Parameter("trials must be at least 1".into()));
        }
        let counts = run_blocks(trials, seed, stream, self.queries.len(), |rng, n, c| {
            self.count(n, rng, c);
            Ok(())
        })?;
        Ok(counts
            .into_iter()
            .map(|e| Estimate::from_counts(e, trials))
            .collect())
    }
}

/// Builds a rayon pool with `threads` workers (all cores when `None`).
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    builder
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))
}
