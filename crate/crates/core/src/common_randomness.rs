//! Common randomness from channel noise.
//!
//! With zero input the sender learns the noise through feedback and the
//! receiver sees it directly, so both can apply the same map to `n_cr`
//! observations. The first observation that is not an atom is binned by the
//! `l/L` quantiles of the continuous conditional law `F'`, which gives a
//! uniform value on `1..=L`. If all observations are atoms the map fails.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::{NoiseError, NoiseSpec};

/// Above this many bins the quantile thresholds are computed on demand.
pub const LAZY_THRESHOLD_BINS: u64 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrError {
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("bin count L must be at least 1")]
    NoBins,
    #[error("failure target eta = {0} outside (0, 1)")]
    InvalidEta(f64),
}

/// Result of the common-randomness map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrOutcome {
    /// Shared value `l` in `1..=L`.
    Bin(u64),
    /// Every observation was an atom.
    Failure,
}

impl CrOutcome {
    pub fn bin(self) -> Option<u64> {
        match self {
            CrOutcome::Bin(l) => Some(l),
            CrOutcome::Failure => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Thresholds {
    /// `z*_1 <= ... <= z*_{L-1}`.
    Stored(Vec<f64>),
    /// Thresholds come from the quantile function when needed.
    Lazy,
}

/// The common-randomness extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiMap {
    n_cr: usize,
    bins: u64,
    thresholds: Thresholds,
    atom_values: Vec<f64>,
    /// Atom membership tolerance; 0 means exact equality.
    #[serde(default)]
    atom_tolerance: f64,
    fail_prob: f64,
    #[serde(skip)]
    spec: Option<NoiseSpec>,
}

/// `discrete_mass(spec)^n`.
pub fn failure_prob(spec: &NoiseSpec, n: usize) -> f64 {
    spec.discrete_mass().powi(n as i32)
}

/// Smallest `n >= 1` with `p_d^n <= eta`; `usize::MAX` if none exists.
pub fn min_cr_length(p_d: f64, eta: f64) -> usize {
    if p_d <= eta {
        return 1;
    }
    if p_d >= 1.0 || eta <= 0.0 {
        return usize::MAX;
    }
    let mut n = 1usize;
    let mut p = p_d;
    while p > eta {
        n += 1;
        p = p_d.powi(n as i32);
    }
    n
}

/// Builds the map for `bins` shared outcomes with failure probability at
/// most `eta`.
pub fn build_pi(spec: &NoiseSpec, bins: u64, eta: f64) -> Result<PiMap, CrError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(CrError::InvalidEta(eta));
    }
    if spec.is_discrete() {
        return Err(NoiseError::DiscreteNoise.into());
    }
    let n_cr = min_cr_length(spec.discrete_mass(), eta);
    build_pi_with_length(spec, bins, n_cr)
}

/// Builds the map with an explicit CR blocklength.
pub fn build_pi_with_length(spec: &NoiseSpec, bins: u64, n_cr: usize) -> Result<PiMap, CrError> {
    build_pi_inner(spec, bins, n_cr, bins > LAZY_THRESHOLD_BINS)
}

pub(crate) fn build_pi_inner(
    spec: &NoiseSpec,
    bins: u64,
    n_cr: usize,
    lazy: bool,
) -> Result<PiMap, CrError> {
    if bins == 0 {
        return Err(CrError::NoBins);
    }
    if spec.is_discrete() {
        return Err(NoiseError::DiscreteNoise.into());
    }
    let n_cr = n_cr.max(1);
    let thresholds = if lazy {
        Thresholds::Lazy
    } else {
        let mut th = Vec::with_capacity(bins as usize - 1);
        for l in 1..bins {
            th.push(spec.continuous_conditional_quantile(l as f64 / bins as f64)?);
        }
        Thresholds::Stored(th)
    };
    Ok(PiMap {
        n_cr,
        bins,
        thresholds,
        atom_values: spec.atoms().iter().map(|a| a.value).collect(),
        atom_tolerance: 0.0,
        fail_prob: failure_prob(spec, n_cr),
        spec: Some(spec.clone()),
    })
}

impl PiMap {
    pub fn n_cr(&self) -> usize {
        self.n_cr
    }

    pub fn bins(&self) -> u64 {
        self.bins
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn fail_prob(&self) -> f64 {
        self.fail_prob
    }

    pub fn atom_values(&self) -> &[f64] {
        &self.atom_values
    }

    /// Treat observations within `tol` of an atom as atoms. Intended for
    /// externally recorded traces; simulated atoms are exact.
    pub fn with_atom_tolerance(mut self, tol: f64) -> Self {
        self.atom_tolerance = tol.max(0.0);
        self
    }

    /// Reattaches the noise law after deserialization (needed for lazy maps).
    pub fn with_spec(mut self, spec: NoiseSpec) -> Self {
        self.spec = Some(spec);
        self
    }

    /// `z*_l` for `1 <= l <= L-1`.
    pub fn threshold(&self, l: u64) -> f64 {
        debug_assert!(l >= 1 && l < self.bins);
        match &self.thresholds {
            Thresholds::Stored(th) => th[(l - 1) as usize],
            Thresholds::Lazy => self
                .spec
                .as_ref()
                .expect("lazy PiMap needs its noise law")
                .continuous_conditional_quantile(l as f64 / self.bins as f64)
                .expect("continuous law"),
        }
    }

    fn is_atom(&self, y: f64) -> bool {
        if self.atom_tolerance == 0.0 {
            self.atom_values.contains(&y)
        } else {
            self.atom_values
                .iter()
                .any(|&a| (a - y).abs() <= self.atom_tolerance)
        }
    }

    /// The bin `l` with `z*_{l-1} < y <= z*_l`.
    pub fn bin_of(&self, y: f64) -> u64 {
        match &self.thresholds {
            Thresholds::Stored(th) => th.partition_point(|&z| z < y) as u64 + 1,
            Thresholds::Lazy => {
                let spec = self.spec.as_ref().expect("lazy PiMap needs its noise law");
                let f = spec.continuous_conditional_cdf(y);
                let mut l = ((f * self.bins as f64).ceil() as u64).clamp(1, self.bins);
                while l > 1 && y <= self.threshold(l - 1) {
                    l -= 1;
                }
                while l < self.bins && y > self.threshold(l) {
                    l += 1;
                }
                l
            }
        }
    }

    /// Applies the map to the first `n_cr` observations.
    pub fn apply(&self, observations: &[f64]) -> CrOutcome {
        assert!(
            observations.len() >= self.n_cr,
            "need {} observations, got {}",
            self.n_cr,
            observations.len()
        );
        observations[..self.n_cr]
            .iter()
            .find(|&&y| !self.is_atom(y))
            .map_or(CrOutcome::Failure, |&y| CrOutcome::Bin(self.bin_of(y)))
    }
}
