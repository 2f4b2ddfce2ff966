//! The two-phase identification feedback code.
//!
//! Phase one sends `n_cr` zeros; sender (through feedback) and receiver both
//! map the observed noise to a shared outcome `l`. Phase two sends the color
//! `k_i(l)` with the inner transmission code. Receiver `j` accepts iff the CR
//! phase succeeded and the decoded color equals `k_j(l)`.
//!
//! The error budget `lambda` is split between the inner code (`tx_share`)
//! and the CR failure probability plus coloring agreement (the rest).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{FeedbackEncoder, PowerConstraint};
use crate::coloring::{
    generate_random_family, next_prime, required_l, ColoringError, ColoringFamily,
    MAX_TABLE_IDENTITIES,
};
use crate::common_randomness::{build_pi_with_length, min_cr_length, CrError, CrOutcome, PiMap};
use crate::noise::{NoiseError, NoiseSpec};
use crate::transmission::{
    min_repetitions, min_repetitions_exact, min_repetitions_mc, Decoder, MeanNoiseLaw,
    PamRepetitionCode, TxError,
};

/// Upper bound on `N * L` for materialized coloring tables.
const MAX_TABLE_ENTRIES: u64 = 1 << 28;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("lambda = {0} must lie in (0, 1/2)")]
    InvalidLambda(f64),
    #[error("power budget gamma = {0} must be positive and finite")]
    InvalidGamma(f64),
    #[error("invalid plan parameter: {0}")]
    Parameter(String),
    #[error("alphabet size M = {m} must exceed 2/lambda = {bound}")]
    AlphabetTooSmall { m: u64, bound: f64 },
    #[error("plan infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Cr(#[from] CrError),
    #[error(transparent)]
    Coloring(#[from] ColoringError),
    #[error(transparent)]
    Tx(#[from] TxError),
}

impl PlanError {
    /// Whether the request was well-formed but no code meets it.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            PlanError::AlphabetTooSmall { .. } | PlanError::Infeasible(_) | PlanError::Coloring(_)
        )
    }
}

/// Number of identities, either explicit or as `q^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityCount {
    Count(u128),
    ReedSolomon { q: u64, m: u32 },
}

impl IdentityCount {
    pub fn log2(&self) -> f64 {
        match *self {
            IdentityCount::Count(n) => (n as f64).log2(),
            IdentityCount::ReedSolomon { q, m } => m as f64 * (q as f64).log2(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColoringKind {
    #[default]
    #[serde(rename = "rs", alias = "reed_solomon")]
    ReedSolomon,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxErrorMethod {
    ClosedForm,
    ExactMixture,
    MonteCarlo,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub coloring: ColoringKind,
    /// Fraction of lambda given to the inner code's error.
    pub tx_share: f64,
    pub decoder: Decoder,
    pub forced_m: Option<u64>,
    pub forced_r: Option<usize>,
    pub r_cap: usize,
    /// Trials per candidate `r` when the inner error must be simulated.
    pub mc_trials: u64,
    pub seed: u64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            coloring: ColoringKind::ReedSolomon,
            tx_share: 0.5,
            decoder: Decoder::Averaging,
            forced_m: None,
            forced_r: None,
            r_cap: 100_000,
            mc_trials: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdCodePlan {
    pub lambda: f64,
    pub constraint: PowerConstraint,
    pub requested: IdentityCount,
    /// Identities served by the code.
    pub identities: u128,
    pub identities_log2: f64,
    pub coloring: ColoringKind,
    /// Reed-Solomon field size and degree bound.
    pub rs_q: Option<u64>,
    pub rs_m: Option<u32>,
    /// Inner alphabet `M`.
    pub alphabet: u64,
    /// CR outcomes `L`.
    pub bins: u64,
    pub n_cr: usize,
    pub r: usize,
    pub total_n: usize,
    pub tx_share: f64,
    pub decoder: Decoder,
    pub cr_fail_prob: f64,
    pub tx_error: f64,
    pub tx_error_method: TxErrorMethod,
    pub agreement_bound: f64,
    pub seed: u64,
}

impl IdCodePlan {
    /// Budget for the inner code error.
    pub fn tx_budget(&self) -> f64 {
        self.tx_share * self.lambda
    }

    /// Budget for the CR failure probability and the agreement fraction.
    pub fn rest_budget(&self) -> f64 {
        (1.0 - self.tx_share) * self.lambda
    }
}

fn smallest_prime_above(x: f64) -> u64 {
    next_prime(x.floor() as u64 + 1)
}

/// Smallest `m >= 1` with `q^m >= n`.
fn degree_for(q: u64, n: u128) -> u32 {
    let mut m = 1u32;
    let mut size = q as u128;
    while size < n {
        m += 1;
        size = size.saturating_mul(q as u128);
    }
    m
}

fn agreement_ok(q: u64, m: u32, budget: f64) -> bool {
    (m - 1) as f64 <= budget * q as f64
}

/// Smallest prime `q' >= q` with `(m-1)/q' <= budget`.
fn raise_for_agreement(q: u64, m: u32, budget: f64) -> u64 {
    let mut q = next_prime(q.max(((m - 1) as f64 / budget).floor() as u64));
    while !agreement_ok(q, m, budget) {
        q = next_prime(q + 1);
    }
    q
}

/// Chooses all code parameters for `lambda`, `constraint` and `identities`.
pub fn plan(
    spec: &NoiseSpec,
    lambda: f64,
    constraint: PowerConstraint,
    identities: IdentityCount,
    opts: &PlanOptions,
) -> Result<IdCodePlan, PlanError> {
    if !(lambda > 0.0 && lambda < 0.5) {
        return Err(PlanError::InvalidLambda(lambda));
    }
    let gamma = constraint.gamma();
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(PlanError::InvalidGamma(gamma));
    }
    if !(opts.tx_share > 0.0 && opts.tx_share < 1.0) {
        return Err(PlanError::Parameter(format!("tx_share = {}", opts.tx_share)));
    }
    if spec.is_discrete() {
        return Err(NoiseError::DiscreteNoise.into());
    }
    match identities {
        IdentityCount::Count(0) => return Err(PlanError::Parameter("N must be at least 1".into())),
        IdentityCount::ReedSolomon { m: 0, .. } => {
            return Err(PlanError::Parameter("m must be at least 1".into()))
        }
        _ => {}
    }
    let tx_budget = opts.tx_share * lambda;
    let rest = (1.0 - opts.tx_share) * lambda;
    let alphabet_bound = 2.0 / lambda;
    if let Some(m) = opts.forced_m {
        if m as f64 <= alphabet_bound {
            return Err(PlanError::AlphabetTooSmall { m, bound: alphabet_bound });
        }
    }

    let n_cr = min_cr_length(spec.discrete_mass(), rest);

    let (alphabet, bins, rs_q, rs_m, served, agreement_bound) = match opts.coloring {
        ColoringKind::ReedSolomon => {
            let (q, m) = match (opts.forced_m, identities) {
                (Some(q), ids) => {
                    if !crate::coloring::is_prime(q) {
                        return Err(PlanError::Infeasible(format!(
                            "Reed-Solomon colorings need a prime alphabet, got M = {q}"
                        )));
                    }
                    let m = match ids {
                        IdentityCount::Count(n) => degree_for(q, n),
                        IdentityCount::ReedSolomon { m, .. } => m,
                    };
                    if !agreement_ok(q, m, rest) {
                        return Err(PlanError::Infeasible(format!(
                            "agreement fraction ({})/{q} exceeds {rest}",
                            m - 1
                        )));
                    }
                    (q, m)
                }
                (None, IdentityCount::Count(n)) => {
                    let mut q = smallest_prime_above(alphabet_bound);
                    loop {
                        let m = degree_for(q, n);
                        if agreement_ok(q, m, rest) {
                            break (q, m);
                        }
                        q = raise_for_agreement(q + 1, m, rest);
                    }
                }
                (None, IdentityCount::ReedSolomon { q, m }) => {
                    let mut q = next_prime(q).max(smallest_prime_above(alphabet_bound));
                    if !agreement_ok(q, m, rest) {
                        q = raise_for_agreement(q, m, rest);
                    }
                    (q, m)
                }
            };
            let family_size = (q as u128).checked_pow(m).ok_or_else(|| {
                PlanError::Infeasible(format!("q^m = {q}^{m} exceeds the identity index range"))
            })?;
            let served = match identities {
                IdentityCount::Count(n) => n,
                IdentityCount::ReedSolomon { .. } => family_size,
            };
            (q, q, Some(q), Some(m), served, (m - 1) as f64 / q as f64)
        }
        ColoringKind::Table => {
            let n = match identities {
                IdentityCount::Count(n) => n,
                IdentityCount::ReedSolomon { .. } => {
                    return Err(PlanError::Parameter(
                        "table colorings take an explicit identity count".into(),
                    ))
                }
            };
            if n > MAX_TABLE_IDENTITIES as u128 {
                return Err(PlanError::Infeasible(format!(
                    "N = {n} exceeds the table limit {MAX_TABLE_IDENTITIES}; use Reed-Solomon colorings"
                )));
            }
            let table_lambda = 2.0 * rest;
            let m = opts
                .forced_m
                .unwrap_or_else(|| smallest_prime_above(2.0 * alphabet_bound));
            if m as f64 <= 2.0 / table_lambda {
                return Err(PlanError::AlphabetTooSmall { m, bound: 2.0 / table_lambda });
            }
            let l = required_l(table_lambda, m, n)?;
            if (n as u64).saturating_mul(l) > MAX_TABLE_ENTRIES {
                return Err(PlanError::Infeasible(format!(
                    "table of {n} x {l} colors is too large"
                )));
            }
            let bound = (table_lambda * l as f64 / 2.0).floor() / l as f64;
            (m, l, None, None, n, bound)
        }
    };

    let m_usize = usize::try_from(alphabet).map_err(|_| PlanError::Parameter("M too large".into()))?;
    let probe = PamRepetitionCode::new(m_usize, constraint, 1)?.with_decoder(opts.decoder);
    let (r, tx_error, tx_error_method) = match opts.forced_r {
        Some(r) => {
            let code = PamRepetitionCode::new(m_usize, constraint, r)?.with_decoder(opts.decoder);
            let (err, method) = inner_error(&code, spec);
            (r, err, method)
        }
        None => {
            let searched = match (opts.decoder, spec.pure_gaussian_stddev()) {
                (Decoder::Averaging, Some(sigma)) => {
                    min_repetitions(m_usize, constraint, sigma, tx_budget, opts.r_cap)?
                }
                (Decoder::Averaging, None) => {
                    match min_repetitions_exact(m_usize, constraint, spec, tx_budget, opts.r_cap)? {
                        Some(r) => Some(r),
                        None if MeanNoiseLaw::for_spec(spec, 1).is_some() => None,
                        None => min_repetitions_mc(
                            m_usize,
                            constraint,
                            opts.decoder,
                            spec,
                            tx_budget,
                            opts.mc_trials,
                            opts.seed,
                            opts.r_cap,
                        )?,
                    }
                }
                (Decoder::MajorityVote, _) => min_repetitions_mc(
                    m_usize,
                    constraint,
                    opts.decoder,
                    spec,
                    tx_budget,
                    opts.mc_trials,
                    opts.seed,
                    opts.r_cap,
                )?,
            };
            let r = searched.ok_or_else(|| {
                PlanError::Infeasible(format!(
                    "no repetition count up to {} brings the inner error below {tx_budget}",
                    opts.r_cap
                ))
            })?;
            let mut code = probe.clone();
            code = PamRepetitionCode::new(m_usize, constraint, r)?.with_decoder(code.decoder());
            let (err, method) = inner_error(&code, spec);
            (r, err, method)
        }
    };

    Ok(IdCodePlan {
        lambda,
        constraint,
        requested: identities,
        identities: served,
        identities_log2: match (identities, rs_q, rs_m) {
            (IdentityCount::ReedSolomon { .. }, Some(q), Some(m)) => {
                IdentityCount::ReedSolomon { q, m }.log2()
            }
            _ => identities.log2(),
        },
        coloring: opts.coloring,
        rs_q,
        rs_m,
        alphabet,
        bins,
        n_cr,
        r,
        total_n: n_cr + r,
        tx_share: opts.tx_share,
        decoder: opts.decoder,
        cr_fail_prob: spec.discrete_mass().powi(n_cr as i32),
        tx_error,
        tx_error_method,
        agreement_bound,
        seed: opts.seed,
    })
}

fn inner_error(code: &PamRepetitionCode, spec: &NoiseSpec) -> (f64, TxErrorMethod) {
    if code.decoder() != Decoder::Averaging {
        return (f64::NAN, TxErrorMethod::MonteCarlo);
    }
    if let Some(sigma) = spec.pure_gaussian_stddev() {
        if let Ok(e) = code.error_prob_gaussian(sigma) {
            return (e, TxErrorMethod::ClosedForm);
        }
    }
    match MeanNoiseLaw::for_spec(spec, code.repetitions()) {
        Some(law) => (
            code.error_prob_exact(&law).unwrap_or(f64::NAN),
            TxErrorMethod::ExactMixture,
        ),
        None => (f64::NAN, TxErrorMethod::Unknown),
    }
}

/// An assembled identification feedback code.
#[derive(Debug, Clone)]
pub struct IdFeedbackCode {
    plan: IdCodePlan,
    spec: NoiseSpec,
    pimap: PiMap,
    family: ColoringFamily,
    tx: PamRepetitionCode,
}

impl IdFeedbackCode {
    /// Builds the CR map, coloring family and inner code for `plan`.
    pub fn build(spec: &NoiseSpec, plan: &IdCodePlan) -> Result<Self, PlanError> {
        let pimap = build_pi_with_length(spec, plan.bins, plan.n_cr)?;
        let family = match plan.coloring {
            ColoringKind::ReedSolomon => ColoringFamily::reed_solomon(
                plan.rs_q.expect("rs plan"),
                plan.rs_m.expect("rs plan"),
                plan.rest_budget(),
            )?,
            ColoringKind::Table => {
                let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
                let table = generate_random_family(
                    plan.identities as u64,
                    plan.bins,
                    plan.alphabet,
                    2.0 * plan.rest_budget(),
                    &mut rng,
                    10,
                )?;
                ColoringFamily::Table(table.with_seed(plan.seed))
            }
        };
        let tx = PamRepetitionCode::new(plan.alphabet as usize, plan.constraint, plan.r)?
            .with_decoder(plan.decoder);
        Self::from_parts(spec.clone(), plan.clone(), pimap, family, tx)
    }

    /// Assembles a code from explicit parts, checking that they fit together.
    pub fn from_parts(
        spec: NoiseSpec,
        plan: IdCodePlan,
        pimap: PiMap,
        family: ColoringFamily,
        tx: PamRepetitionCode,
    ) -> Result<Self, PlanError> {
        let mismatch = |what: &str| Err(PlanError::Parameter(format!("{what} mismatch")));
        if pimap.bins() != family.bins() || pimap.bins() != plan.bins {
            return mismatch("L");
        }
        if family.colors() != tx.messages() as u64 || tx.messages() as u64 != plan.alphabet {
            return mismatch("M");
        }
        if tx.constraint() != plan.constraint {
            return mismatch("power constraint");
        }
        if pimap.n_cr() != plan.n_cr || tx.repetitions() != plan.r {
            return mismatch("blocklength");
        }
        if plan.identities > family.identities() {
            return mismatch("identity count");
        }
        Ok(Self {
            plan,
            spec,
            pimap,
            family,
            tx,
        })
    }

    pub fn plan(&self) -> &IdCodePlan {
        &self.plan
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn pimap(&self) -> &PiMap {
        &self.pimap
    }

    pub fn family(&self) -> &ColoringFamily {
        &self.family
    }

    pub fn tx(&self) -> &PamRepetitionCode {
        &self.tx
    }

    pub fn identities(&self) -> u128 {
        self.plan.identities
    }

    pub fn total_n(&self) -> usize {
        self.plan.total_n
    }

    fn check_identity(&self, i: u128) -> Result<(), ColoringError> {
        if i == 0 || i > self.identities() {
            Err(ColoringError::IdentityOutOfRange(i))
        } else {
            Ok(())
        }
    }

    /// Color sent by identity `i` at outcome `l`.
    pub fn color(&self, i: u128, l: u64) -> u64 {
        self.family.evaluate(i, l).expect("identity and outcome in range")
    }

    /// The feedback encoder `f_i`.
    pub fn make_encoder(&self, i: u128) -> Result<IdEncoder<'_>, ColoringError> {
        self.check_identity(i)?;
        Ok(IdEncoder { code: self, identity: i })
    }

    /// CR outcome of a block of outputs.
    pub fn cr_outcome(&self, outputs: &[f64]) -> CrOutcome {
        self.pimap.apply(&outputs[..self.plan.n_cr])
    }

    /// Decision `psi_j` of the receiver interested in identity `j`.
    pub fn decide(&self, j: u128, outputs: &[f64]) -> bool {
        assert_eq!(outputs.len(), self.plan.total_n, "output block length");
        match self.cr_outcome(outputs) {
            CrOutcome::Failure => false,
            CrOutcome::Bin(l) => {
                let decoded = self.tx.decode(&outputs[self.plan.n_cr..]) as u64;
                decoded == self.color(j, l)
            }
        }
    }

    fn mean_law(&self) -> Result<MeanNoiseLaw, TxError> {
        if self.tx.decoder() != Decoder::Averaging {
            return Err(TxError::NoClosedForm);
        }
        MeanNoiseLaw::for_spec(&self.spec, self.plan.r).ok_or(TxError::NoClosedForm)
    }

    /// Exact `mu_1(i)`: CR failure plus inner decoding error averaged over
    /// the uniform CR outcome.
    pub fn oracle_mu1(&self, i: u128) -> Result<f64, PlanError> {
        self.check_identity(i)?;
        let law = self.mean_law()?;
        let m = self.tx.messages();
        let correct: Vec<f64> = (1..=m).map(|c| self.tx.decision_prob(c, c, &law)).collect();
        let l_count = self.plan.bins;
        let miss: f64 = (1..=l_count)
            .map(|l| 1.0 - correct[self.color(i, l) as usize - 1])
            .sum::<f64>()
            / l_count as f64;
        let p_fail = self.pimap.fail_prob();
        Ok(p_fail + (1.0 - p_fail) * miss.max(0.0))
    }

    /// Exact `mu_2(i, j)`: probability that receiver `j` accepts when `i`
    /// was sent.
    pub fn oracle_mu2(&self, i: u128, j: u128) -> Result<f64, PlanError> {
        self.check_identity(i)?;
        self.check_identity(j)?;
        if i == j {
            return Err(PlanError::Parameter("mu_2 needs distinct identities".into()));
        }
        let law = self.mean_law()?;
        let l_count = self.plan.bins;
        let accept: f64 = (1..=l_count)
            .map(|l| {
                self.tx.decision_prob(
                    self.color(i, l) as usize,
                    self.color(j, l) as usize,
                    &law,
                )
            })
            .sum::<f64>()
            / l_count as f64;
        Ok((1.0 - self.pimap.fail_prob()) * accept)
    }

    /// `(mu_1(i), mu_2(i, j))`.
    pub fn exact_error_oracle(&self, i: u128, j: u128) -> Result<(f64, f64), PlanError> {
        Ok((self.oracle_mu1(i)?, self.oracle_mu2(i, j)?))
    }
}

/// The encoder `f_i`: zeros for the CR phase, then the inner codeword of the
/// color `k_i(l)`, or zeros if the CR phase failed.
#[derive(Debug, Clone, Copy)]
pub struct IdEncoder<'a> {
    code: &'a IdFeedbackCode,
    identity: u128,
}

impl FeedbackEncoder for IdEncoder<'_> {
    fn length(&self) -> usize {
        self.code.plan.total_n
    }

    fn constraint(&self) -> PowerConstraint {
        self.code.plan.constraint
    }

    fn next_symbol(&self, t: usize, past_outputs: &[f64]) -> f64 {
        let n_cr = self.code.plan.n_cr;
        if t <= n_cr {
            return 0.0;
        }
        match self.code.pimap.apply(&past_outputs[..n_cr]) {
            CrOutcome::Failure => 0.0,
            CrOutcome::Bin(l) => {
                let color = self.code.color(self.identity, l) as usize;
                self.code.tx.point(color).expect("color within alphabet")
            }
        }
    }
}
