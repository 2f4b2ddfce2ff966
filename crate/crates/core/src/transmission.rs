//! Inner message transmission code: PAM with repetition.
//!
//! Message `m` is sent as `r` copies of the `m`-th point of an equally spaced
//! constellation on `[-A, A]`, with `A = Γ` under a peak constraint and
//! `A = sqrt(Γ)` under an average constraint. No feedback is used.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::PowerConstraint;
use crate::noise::{std_normal_cdf, std_normal_tail, AcPart, NoiseSpec};
use crate::stats::clopper_pearson;

/// Largest number of mixture components enumerated by [`MeanNoiseLaw`].
const MAX_MEAN_COMPONENTS: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TxError {
    #[error("invalid transmission parameter: {0}")]
    Parameter(String),
    #[error("message {0} out of range 1..={1}")]
    MessageOutOfRange(usize, usize),
    #[error("no closed-form error probability for this decoder/noise combination")]
    NoClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    /// Nearest point to the sample mean.
    #[default]
    Averaging,
    /// Per-use nearest point, then plurality.
    #[serde(alias = "majority")]
    MajorityVote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PamRepetitionCode {
    constellation: Vec<f64>,
    /// `midpoints[b]` separates points `b` and `b+1` (0-based).
    midpoints: Vec<f64>,
    r: usize,
    constraint: PowerConstraint,
    decoder: Decoder,
}

/// Q(x), the standard normal upper tail.
pub fn q_function(x: f64) -> f64 {
    std_normal_tail(x)
}

/// Largest amplitude whose `r`-fold repetition passes the power check.
fn amplitude(constraint: PowerConstraint, r: usize) -> f64 {
    match constraint {
        PowerConstraint::Peak(g) => g,
        PowerConstraint::Average(g) => {
            let mut a = g.sqrt();
            while !constraint.admits(&vec![a; r]) {
                a = a.next_down();
            }
            a
        }
    }
}

impl PamRepetitionCode {
    pub fn new(m: usize, constraint: PowerConstraint, r: usize) -> Result<Self, TxError> {
        let gamma = constraint.gamma();
        if m < 2 {
            return Err(TxError::Parameter(format!("M = {m} must be at least 2")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(TxError::Parameter(format!("gamma = {gamma} must be positive")));
        }
        if r == 0 {
            return Err(TxError::Parameter("r must be at least 1".into()));
        }
        let a = amplitude(constraint, r);
        let constellation: Vec<f64> = (0..m)
            .map(|k| (a * (2.0 * k as f64 - (m - 1) as f64) / (m - 1) as f64).clamp(-a, a))
            .collect();
        let midpoints = constellation.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self {
            constellation,
            midpoints,
            r,
            constraint,
            decoder: Decoder::Averaging,
        })
    }

    pub fn with_decoder(mut self, decoder: Decoder) -> Self {
        self.decoder = decoder;
        self
    }

    pub fn messages(&self) -> usize {
        self.constellation.len()
    }

    pub fn repetitions(&self) -> usize {
        self.r
    }

    pub fn constraint(&self) -> PowerConstraint {
        self.constraint
    }

    pub fn decoder(&self) -> Decoder {
        self.decoder
    }

    pub fn constellation(&self) -> &[f64] {
        &self.constellation
    }

    /// Distance between neighbouring points.
    pub fn spacing(&self) -> f64 {
        self.constellation[1] - self.constellation[0]
    }

    pub fn point(&self, m: usize) -> Result<f64, TxError> {
        if m == 0 || m > self.messages() {
            return Err(TxError::MessageOutOfRange(m, self.messages()));
        }
        Ok(self.constellation[m - 1])
    }

    pub fn encode(&self, m: usize) -> Result<Vec<f64>, TxError> {
        Ok(vec![self.point(m)?; self.r])
    }

    /// Nearest point to `x`; exact midpoints go to the lower message.
    pub fn nearest(&self, x: f64) -> usize {
        self.midpoints.partition_point(|&mid| mid < x) + 1
    }

    pub fn decode(&self, received: &[f64]) -> usize {
        debug_assert_eq!(received.len(), self.r);
        match self.decoder {
            Decoder::Averaging => {
                let mean = received.iter().sum::<f64>() / received.len() as f64;
                self.nearest(mean)
            }
            Decoder::MajorityVote => {
                let mut votes = vec![0usize; self.messages()];
                for &y in received {
                    votes[self.nearest(y) - 1] += 1;
                }
                // first maximum = lowest index on ties
                let best = votes.iter().copied().max().unwrap_or(0);
                votes.iter().position(|&v| v == best).unwrap() + 1
            }
        }
    }

    /// Decision interval `(lo, hi]` of message `m`.
    pub fn decision_interval(&self, m: usize) -> (f64, f64) {
        let lo = if m == 1 { f64::NEG_INFINITY } else { self.midpoints[m - 2] };
        let hi = if m == self.messages() { f64::INFINITY } else { self.midpoints[m - 1] };
        (lo, hi)
    }

    /// Message-averaged error probability of the averaging decoder under
    /// zero-mean Gaussian noise of standard deviation `sigma`.
    pub fn error_prob_gaussian(&self, sigma: f64) -> Result<f64, TxError> {
        if self.decoder != Decoder::Averaging {
            return Err(TxError::NoClosedForm);
        }
        if !(sigma > 0.0) {
            return Err(TxError::Parameter(format!("sigma = {sigma}")));
        }
        let m = self.messages() as f64;
        let x = (self.r as f64).sqrt() * self.spacing() / (2.0 * sigma);
        let q = q_function(x);
        Ok(((m - 2.0) * 2.0 * q + 2.0 * q) / m)
    }

    /// `P[decode = decided | sent]` when the mean of the phase noise follows
    /// `law` (averaging decoder only).
    pub fn decision_prob(&self, sent: usize, decided: usize, law: &MeanNoiseLaw) -> f64 {
        let (lo, hi) = self.decision_interval(decided);
        let p = self.constellation[sent - 1];
        law.prob_in(lo - p, hi - p)
    }

    /// Exact message-averaged error under `law`.
    pub fn error_prob_exact(&self, law: &MeanNoiseLaw) -> Result<f64, TxError> {
        if self.decoder != Decoder::Averaging {
            return Err(TxError::NoClosedForm);
        }
        let m = self.messages();
        let correct: f64 = (1..=m).map(|k| self.decision_prob(k, k, law)).sum();
        Ok((1.0 - correct / m as f64).max(0.0))
    }

    /// Monte Carlo estimate of the message-averaged error: `(errors, trials)`.
    pub fn simulate_errors<R: Rng + ?Sized>(&self, spec: &NoiseSpec, trials: u64, rng: &mut R) -> u64 {
        let mut buf = vec![0.0; self.r];
        let mut errors = 0;
        for _ in 0..trials {
            let m = rng.random_range(1..=self.messages());
            let p = self.constellation[m - 1];
            for y in buf.iter_mut() {
                *y = p + spec.sample(rng);
            }
            if self.decode(&buf) != m {
                errors += 1;
            }
        }
        errors
    }
}

/// Exact law of the mean of `r` i.i.d. noise draws, as a finite mixture of
/// Gaussians and point masses. Available when the noise has no singular part
/// and its continuous part (if any) is Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanNoiseLaw {
    /// `(weight, center, stddev)`; `stddev == 0` is a point mass.
    components: Vec<(f64, f64, f64)>,
}

impl MeanNoiseLaw {
    pub fn gaussian(mean: f64, stddev: f64, r: usize) -> Self {
        Self {
            components: vec![(1.0, mean, stddev / (r as f64).sqrt())],
        }
    }

    pub fn for_spec(spec: &NoiseSpec, r: usize) -> Option<Self> {
        if spec.p_s() > 0.0 {
            return None;
        }
        let (mu, sigma) = match spec.ac_part() {
            Some(AcPart::Gaussian { mean, stddev }) => (*mean, *stddev),
            Some(_) => return None,
            None => (0.0, 0.0),
        };
        if spec.p_d() == 0.0 {
            return Some(Self::gaussian(mu, sigma, r));
        }
        // slots: one per atom plus the Gaussian
        let mut slots: Vec<(f64, f64)> = spec
            .atoms()
            .iter()
            .map(|a| (spec.p_d() * a.weight, a.value))
            .collect();
        if spec.p_a() > 0.0 {
            slots.push((spec.p_a(), f64::NAN));
        }
        let k = slots.len();
        // C(r + k - 1, k - 1) compositions
        let mut count = 1f64;
        for t in 1..k {
            count *= (r + t) as f64 / t as f64;
        }
        if count > MAX_MEAN_COMPONENTS as f64 {
            return None;
        }
        let ln_fact: Vec<f64> = (0..=r)
            .scan(0.0, |acc, t| {
                if t > 0 {
                    *acc += (t as f64).ln();
                }
                Some(*acc)
            })
            .collect();
        let mut components = Vec::with_capacity(count as usize);
        let mut counts = vec![0usize; k];
        enumerate(&slots, &mut counts, 0, r, &mut |counts| {
            let mut ln_w = ln_fact[r];
            let mut sum = 0.0;
            let mut gauss = 0usize;
            for (c, &(w, v)) in counts.iter().zip(&slots) {
                ln_w += *c as f64 * w.ln() - ln_fact[*c];
                if v.is_nan() {
                    gauss = *c;
                } else {
                    sum += *c as f64 * v;
                }
            }
            let center = (sum + gauss as f64 * mu) / r as f64;
            let sd = sigma * (gauss as f64).sqrt() / r as f64;
            components.push((ln_w.exp(), center, sd));
        });
        Some(Self { components })
    }

    /// `P[lo < mean <= hi]`.
    pub fn prob_in(&self, lo: f64, hi: f64) -> f64 {
        self.components
            .iter()
            .map(|&(w, c, sd)| {
                if sd == 0.0 {
                    if lo < c && c <= hi {
                        w
                    } else {
                        0.0
                    }
                } else {
                    w * normal_interval((lo - c) / sd, (hi - c) / sd)
                }
            })
            .sum()
    }
}

fn enumerate(
    slots: &[(f64, f64)],
    counts: &mut Vec<usize>,
    k: usize,
    left: usize,
    visit: &mut dyn FnMut(&[usize]),
) {
    if k + 1 == slots.len() {
        counts[k] = left;
        visit(counts);
        return;
    }
    for c in 0..=left {
        counts[k] = c;
        enumerate(slots, counts, k + 1, left - c, visit);
    }
}

/// `P[a < N(0,1) <= b]` computed on the side with the smaller tails.
pub fn normal_interval(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        std_normal_tail(a) - std_normal_tail(b)
    } else if b <= 0.0 {
        std_normal_cdf(b) - std_normal_cdf(a)
    } else {
        1.0 - std_normal_cdf(a) - std_normal_tail(b)
    }
}

/// Smallest `r <= r_cap` for which `error(r) <= eps`, assuming `error` is
/// nonincreasing in `r`.
fn search_repetitions<F: FnMut(usize) -> f64>(eps: f64, r_cap: usize, mut error: F) -> Option<usize> {
    if error(1) <= eps {
        return Some(1);
    }
    let mut bad = 1usize;
    let mut good = loop {
        let next = (bad * 2).min(r_cap);
        if error(next) <= eps {
            break next;
        }
        if next == r_cap {
            return None;
        }
        bad = next;
    };
    while good - bad > 1 {
        let mid = bad + (good - bad) / 2;
        if error(mid) <= eps {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

/// Smallest `r` whose Gaussian error is at most `eps` (averaging decoder).
pub fn min_repetitions(
    m: usize,
    constraint: PowerConstraint,
    sigma: f64,
    eps: f64,
    r_cap: usize,
) -> Result<Option<usize>, TxError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(TxError::Parameter(format!("eps = {eps}")));
    }
    let base = PamRepetitionCode::new(m, constraint, 1)?;
    Ok(search_repetitions(eps, r_cap, |r| {
        let mut code = base.clone();
        code.r = r;
        code.error_prob_gaussian(sigma).expect("averaging decoder")
    }))
}

/// As [`min_repetitions`] for any noise admitting a [`MeanNoiseLaw`].
/// `Ok(None)` when the law is unavailable or `r_cap` is too small.
pub fn min_repetitions_exact(
    m: usize,
    constraint: PowerConstraint,
    spec: &NoiseSpec,
    eps: f64,
    r_cap: usize,
) -> Result<Option<usize>, TxError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(TxError::Parameter(format!("eps = {eps}")));
    }
    let base = PamRepetitionCode::new(m, constraint, 1)?;
    let mut unavailable = false;
    let r = search_repetitions(eps, r_cap, |r| {
        let mut code = base.clone();
        code.r = r;
        match MeanNoiseLaw::for_spec(spec, r) {
            Some(law) => code.error_prob_exact(&law).expect("averaging decoder"),
            None => {
                unavailable = true;
                0.0
            }
        }
    });
    Ok(if unavailable { None } else { r })
}

/// Smallest `r` whose simulated error has a 99% Clopper-Pearson upper bound
/// at most `eps`. Every candidate uses the same seed.
pub fn min_repetitions_mc(
    m: usize,
    constraint: PowerConstraint,
    decoder: Decoder,
    spec: &NoiseSpec,
    eps: f64,
    trials: u64,
    seed: u64,
    r_cap: usize,
) -> Result<Option<usize>, TxError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(TxError::Parameter(format!("eps = {eps}")));
    }
    let base = PamRepetitionCode::new(m, constraint, 1)?.with_decoder(decoder);
    Ok(search_repetitions(eps, r_cap, |r| {
        let mut code = base.clone();
        code.r = r;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let errors = code.simulate_errors(spec, trials, &mut rng);
        clopper_pearson(errors, trials, 0.99).1
    }))
}
