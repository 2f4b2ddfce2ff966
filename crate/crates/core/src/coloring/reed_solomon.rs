//! Polynomial-evaluation colorings over a prime field.
//!
//! Identity `i` is read as the base-`q` digits `(a_0, ..., a_{m-1})` of
//! `i - 1` and colors CR outcome `l` with `1 + p_i(l - 1) mod q`, where
//! `p_i(x) = a_0 + a_1 x + ... + a_{m-1} x^{m-1}`. Two distinct polynomials of
//! degree below `m` agree on at most `m - 1` points.

use serde::{Deserialize, Serialize};

use super::ColoringError;

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n.is_multiple_of(2) {
        return false;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Smallest prime `>= lower`, by trial division.
pub fn next_prime(lower: u64) -> u64 {
    let mut n = lower.max(2);
    while !is_prime(n) {
        n += 1;
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReedSolomonFamily {
    q: u64,
    m: u32,
}

impl ReedSolomonFamily {
    /// `q` must be prime (below 2^32) and `q^m` must fit in a `u128`.
    pub fn new(q: u64, m: u32) -> Result<Self, ColoringError> {
        if !is_prime(q) || q >= 1 << 32 {
            return Err(ColoringError::NotPrime(q));
        }
        if m == 0 {
            return Err(ColoringError::Parameter("m must be at least 1".into()));
        }
        if (q as u128).checked_pow(m).is_none() {
            return Err(ColoringError::Parameter(format!(
                "q^m = {q}^{m} exceeds the identity index range"
            )));
        }
        Ok(Self { q, m })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// `N = q^m`.
    pub fn identities(&self) -> u128 {
        (self.q as u128).pow(self.m)
    }

    /// Coefficients `a_0..a_{m-1}` of identity `i`.
    pub fn digits(&self, i: u128) -> Vec<u64> {
        let q = self.q as u128;
        let mut rest = i - 1;
        (0..self.m)
            .map(|_| {
                let d = (rest % q) as u64;
                rest /= q;
                d
            })
            .collect()
    }

    /// Identity whose coefficient vector is `digits`.
    pub fn identity_of(&self, digits: &[u64]) -> u128 {
        assert_eq!(digits.len(), self.m as usize);
        let q = self.q as u128;
        digits
            .iter()
            .rev()
            .fold(0u128, |acc, &d| acc * q + (d % self.q) as u128)
            + 1
    }

    pub(crate) fn check(&self, i: u128, l: u64) -> Result<(), ColoringError> {
        if i == 0 || i > self.identities() {
            return Err(ColoringError::IdentityOutOfRange(i));
        }
        if l == 0 || l > self.q {
            return Err(ColoringError::OutcomeOutOfRange(l));
        }
        Ok(())
    }

    /// Color of identity `i` at CR outcome `l`, in `1..=q`.
    pub fn evaluate(&self, i: u128, l: u64) -> Result<u64, ColoringError> {
        self.check(i, l)?;
        Ok(self.evaluate_unchecked(i, l))
    }

    pub(crate) fn evaluate_unchecked(&self, i: u128, l: u64) -> u64 {
        let q = self.q;
        let x = l - 1;
        let mut rest = i - 1;
        let mut acc = 0u64;
        let mut power = 1u64;
        for _ in 0..self.m {
            let digit = (rest % q as u128) as u64;
            rest /= q as u128;
            acc = (acc + digit * power) % q;
            power = power * x % q;
        }
        acc + 1
    }

    /// Exact number of outcomes where `i` and `j` share a color: the number
    /// of roots in GF(q) of the difference polynomial.
    pub fn agreement(&self, i: u128, j: u128) -> Result<u64, ColoringError> {
        self.check(i, 1)?;
        self.check(j, 1)?;
        let q = self.q;
        let diff: Vec<u64> = self
            .digits(i)
            .iter()
            .zip(self.digits(j))
            .map(|(a, b)| (a + q - b) % q)
            .collect();
        if diff.iter().all(|&c| c == 0) {
            return Ok(q);
        }
        let roots = (0..q)
            .filter(|&x| diff.iter().rev().fold(0u64, |acc, &c| (acc * x + c) % q) == 0)
            .count();
        Ok(roots as u64)
    }

    /// A pair agreeing on exactly `m - 1` outcomes, the maximum possible:
    /// the zero polynomial against `x (x - 1) ... (x - m + 2)`.
    pub fn worst_pair(&self) -> Option<(u128, u128)> {
        if self.identities() < 2 {
            return None;
        }
        self.pair_with_agreement(self.m - 1)
    }

    /// The zero polynomial against `x (x - 1) ... (x - k + 1)`, which agree
    /// on exactly `k` outcomes. Needs `k < m` and `k <= q`.
    pub fn pair_with_agreement(&self, k: u32) -> Option<(u128, u128)> {
        let q = self.q;
        if k >= self.m || k as u64 > q {
            return None;
        }
        // coefficients, lowest degree first
        let mut poly = vec![1u64];
        for root in 0..k as u64 {
            let mut next = vec![0u64; poly.len() + 1];
            for (d, &c) in poly.iter().enumerate() {
                next[d + 1] = (next[d + 1] + c) % q;
                next[d] = (next[d] + q - c * root % q) % q;
            }
            poly = next;
        }
        poly.resize(self.m as usize, 0);
        Some((1, self.identity_of(&poly)))
    }
}
