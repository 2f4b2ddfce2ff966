//! Coloring families `k_i: {1..L} -> {1..M}` with small pairwise agreement.
//!
//! Two constructions are provided: random tables checked pair by pair
//! ([`generate_random_family`]) and polynomial evaluation over GF(q)
//! ([`ReedSolomonFamily`]), which needs no storage and scales to very large
//! identity counts. The coloring family is code-book material shared by
//! sender and receivers ahead of time.

mod reed_solomon;
mod table;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use reed_solomon::{is_prime, next_prime, ReedSolomonFamily};
pub use table::{generate_random_family, TableFamily, MAX_TABLE_IDENTITIES};

const MAGIC: u64 = u64::from_le_bytes(*b"IDFCCOLR");
const VARIANT_TABLE: u64 = 0;
const VARIANT_RS: u64 = 1;

#[derive(Debug, Error)]
pub enum ColoringError {
    #[error("invalid coloring parameter: {0}")]
    Parameter(String),
    #[error("q = {0} is not a prime below 2^32")]
    NotPrime(u64),
    #[error("identity {0} out of range")]
    IdentityOutOfRange(u128),
    #[error("CR outcome {0} out of range")]
    OutcomeOutOfRange(u64),
    #[error("table families are limited to {MAX_TABLE_IDENTITIES} identities (got {0}); use Reed-Solomon colorings")]
    TableTooLarge(u64),
    #[error("pair ({}, {}) agrees on {} outcomes", .0.i, .0.j, .0.count)]
    AgreementExceeded(WorstPair),
    #[error("no admissible family after {attempts} attempts; worst pair ({}, {}) agrees on {} outcomes", .worst.i, .worst.j, .worst.count)]
    RetriesExhausted { attempts: u32, worst: WorstPair },
    #[error("malformed coloring file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A pair of identities with their agreement count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorstPair {
    pub i: u128,
    pub j: u128,
    pub count: u64,
}

/// Agreement between two colorings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub count: u64,
    /// `count / L`.
    pub fraction: f64,
    /// False when `count` is only an upper bound.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColoringFamily {
    Table(TableFamily),
    ReedSolomon(ReedSolomonFamily),
}

/// `c = lambda/2 - 1/M`, the margin in the pairwise collision bound.
pub fn collision_margin(lambda: f64, m: u64) -> Result<f64, ColoringError> {
    let c = lambda / 2.0 - 1.0 / m as f64;
    if c > 0.0 {
        Ok(c)
    } else {
        Err(ColoringError::Parameter(format!(
            "lambda/2 - 1/M = {c} must be positive (M > 2/lambda)"
        )))
    }
}

/// Smallest `L` with `lambda L c² / (2 ln 2) > log2 N`.
pub fn required_l(lambda: f64, m: u64, n: u128) -> Result<u64, ColoringError> {
    let c = collision_margin(lambda, m)?;
    if n <= 1 {
        return Ok(1);
    }
    let log_n = (n as f64).log2();
    let per_unit = lambda * c * c / (2.0 * std::f64::consts::LN_2);
    let mut l = (log_n / per_unit).floor().max(1.0) as u64;
    while per_unit * l as f64 <= log_n {
        l += 1;
    }
    while l > 1 && per_unit * (l - 1) as f64 > log_n {
        l -= 1;
    }
    Ok(l)
}

/// Collision bound for one pair of random colorings:
/// `P[agreements > lambda L / 2] <= 2^(-L lambda c² / ln 2)`.
pub fn hoeffding_pair_bound(l: u64, lambda: f64, m: u64) -> Result<f64, ColoringError> {
    let c = collision_margin(lambda, m)?;
    Ok((-(l as f64) * lambda * c * c / std::f64::consts::LN_2).exp2())
}

impl ColoringFamily {
    /// Reed-Solomon family whose agreement fraction `(m-1)/q` must not
    /// exceed `max_fraction`.
    pub fn reed_solomon(q: u64, m: u32, max_fraction: f64) -> Result<Self, ColoringError> {
        let rs = ReedSolomonFamily::new(q, m)?;
        let fraction = (m - 1) as f64 / q as f64;
        if fraction > max_fraction {
            return Err(ColoringError::Parameter(format!(
                "agreement fraction (m-1)/q = {fraction} exceeds {max_fraction}"
            )));
        }
        Ok(ColoringFamily::ReedSolomon(rs))
    }

    pub fn identities(&self) -> u128 {
        match self {
            ColoringFamily::Table(t) => t.identities() as u128,
            ColoringFamily::ReedSolomon(rs) => rs.identities(),
        }
    }

    /// Domain size `L`.
    pub fn bins(&self) -> u64 {
        match self {
            ColoringFamily::Table(t) => t.bins(),
            ColoringFamily::ReedSolomon(rs) => rs.q(),
        }
    }

    /// Range size `M`.
    pub fn colors(&self) -> u64 {
        match self {
            ColoringFamily::Table(t) => t.colors(),
            ColoringFamily::ReedSolomon(rs) => rs.q(),
        }
    }

    /// Guaranteed maximum agreement fraction between distinct identities.
    pub fn agreement_bound(&self) -> f64 {
        match self {
            ColoringFamily::Table(t) => t.agreement_limit() as f64 / t.bins() as f64,
            ColoringFamily::ReedSolomon(rs) => (rs.m() - 1) as f64 / rs.q() as f64,
        }
    }

    pub fn evaluate(&self, i: u128, l: u64) -> Result<u64, ColoringError> {
        match self {
            ColoringFamily::Table(t) => {
                if i == 0 || i > t.identities() as u128 {
                    return Err(ColoringError::IdentityOutOfRange(i));
                }
                if l == 0 || l > t.bins() {
                    return Err(ColoringError::OutcomeOutOfRange(l));
                }
                Ok(t.row(i as u64)[(l - 1) as usize] as u64)
            }
            ColoringFamily::ReedSolomon(rs) => rs.evaluate(i, l),
        }
    }

    /// Agreement of `i` and `j`. Exact for both variants: Reed-Solomon counts
    /// come from the roots of the difference polynomial.
    pub fn max_agreement(&self, i: u128, j: u128) -> Result<Agreement, ColoringError> {
        let count = match self {
            ColoringFamily::Table(t) => {
                for x in [i, j] {
                    if x == 0 || x > t.identities() as u128 {
                        return Err(ColoringError::IdentityOutOfRange(x));
                    }
                }
                t.agreement(i as u64, j as u64)
            }
            ColoringFamily::ReedSolomon(rs) => rs.agreement(i, j)?,
        };
        Ok(Agreement {
            count,
            fraction: count as f64 / self.bins() as f64,
            exact: true,
        })
    }

    /// A pair attaining the largest agreement of the family.
    pub fn worst_pair(&self) -> Option<WorstPair> {
        match self {
            ColoringFamily::Table(t) => t.worst_pair(),
            ColoringFamily::ReedSolomon(rs) => rs.worst_pair().map(|(i, j)| WorstPair {
                i,
                j,
                count: (rs.m() - 1) as u64,
            }),
        }
    }

    /// The highest-agreement pair of the known worst-case constructions
    /// with both identities in `1..=n`.
    pub fn worst_pair_within(&self, n: u128) -> Option<WorstPair> {
        match self {
            ColoringFamily::Table(t) => t.worst_pair().filter(|w| w.j <= n && w.i <= n),
            ColoringFamily::ReedSolomon(rs) => {
                if n.min(rs.identities()) < 2 {
                    return None;
                }
                (0..rs.m()).rev().find_map(|k| {
                    rs.pair_with_agreement(k)
                        .filter(|&(_, j)| j <= n)
                        .map(|(i, j)| WorstPair { i, j, count: k as u64 })
                })
            }
        }
    }

    /// Binary form: little-endian u64 header followed, for tables, by the
    /// row-major colors as little-endian u32.
    ///
    /// Table header: magic, variant 0, N, L, M, seed, lambda numerator,
    /// lambda denominator (lambda as an exact dyadic fraction).
    /// Reed-Solomon header: magic, variant 1, q, m.
    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<(), ColoringError> {
        match self {
            ColoringFamily::Table(t) => {
                let (num, den) = dyadic_parts(t.lambda).ok_or_else(|| {
                    ColoringError::Format(format!("lambda = {} has no 64-bit dyadic form", t.lambda))
                })?;
                for v in [MAGIC, VARIANT_TABLE, t.n, t.l, t.m, t.seed, num, den] {
                    out.write_all(&v.to_le_bytes())?;
                }
                for c in &t.colors {
                    out.write_all(&c.to_le_bytes())?;
                }
            }
            ColoringFamily::ReedSolomon(rs) => {
                for v in [MAGIC, VARIANT_RS, rs.q(), rs.m() as u64] {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    /// Reads [`write_binary`](Self::write_binary) output; tables are
    /// re-verified.
    pub fn read_binary<R: Read>(input: &mut R) -> Result<Self, ColoringError> {
        let mut word = [0u8; 8];
        let mut next = |input: &mut R| -> Result<u64, ColoringError> {
            input.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        if next(input)? != MAGIC {
            return Err(ColoringError::Format("bad magic".into()));
        }
        match next(input)? {
            VARIANT_TABLE => {
                let n = next(input)?;
                let l = next(input)?;
                let m = next(input)?;
                let seed = next(input)?;
                let num = next(input)?;
                let den = next(input)?;
                if den == 0 || !den.is_power_of_two() {
                    return Err(ColoringError::Format("lambda denominator".into()));
                }
                let total = n
                    .checked_mul(l)
                    .filter(|&t| t <= (1 << 34))
                    .ok_or_else(|| ColoringError::Format("table size".into()))?;
                let mut bytes = vec![0u8; total as usize * 4];
                input.read_exact(&mut bytes)?;
                let colors = bytes
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                let mut t = TableFamily {
                    n,
                    l,
                    m,
                    colors,
                    lambda: num as f64 / den as f64,
                    seed,
                    worst: None,
                };
                t.validate_entries()?;
                t.verify()?;
                Ok(ColoringFamily::Table(t))
            }
            VARIANT_RS => {
                let q = next(input)?;
                let m = u32::try_from(next(input)?)
                    .map_err(|_| ColoringError::Format("m too large".into()))?;
                Ok(ColoringFamily::ReedSolomon(ReedSolomonFamily::new(q, m)?))
            }
            v => Err(ColoringError::Format(format!("unknown variant {v}"))),
        }
    }
}

impl TableFamily {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// `x = num / den` exactly, with `den` a power of two. `None` when either
/// part does not fit in 64 bits.
fn dyadic_parts(x: f64) -> Option<(u64, u64)> {
    if !(x.is_finite() && x >= 0.0) {
        return None;
    }
    if x == 0.0 {
        return Some((0, 1));
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mut mantissa, mut e) = if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    };
    let tz = mantissa.trailing_zeros() as i64;
    mantissa >>= tz;
    e += tz;
    if e >= 0 {
        let num = mantissa.checked_shl(e as u32)?;
        (num >> e == mantissa).then_some((num, 1))
    } else if -e < 64 {
        Some((mantissa, 1u64 << -e))
    } else {
        None
    }
}
