//! Materialized coloring tables from i.i.d. uniform colors.

use rand::Rng;
use rayon::prelude::*;

use super::{ColoringError, WorstPair};

/// Largest `N` for which pairwise verification is attempted.
pub const MAX_TABLE_IDENTITIES: u64 = 4096;

/// `N x L` row-major table of colors in `1..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableFamily {
    pub(crate) n: u64,
    pub(crate) l: u64,
    pub(crate) m: u64,
    pub(crate) colors: Vec<u32>,
    pub(crate) lambda: f64,
    pub(crate) seed: u64,
    pub(crate) worst: Option<WorstPair>,
}

impl TableFamily {
    /// Builds a table from explicit rows and verifies every pair against
    /// the agreement limit `lambda * L / 2`.
    pub fn from_rows(rows: Vec<Vec<u32>>, m: u64, lambda: f64) -> Result<Self, ColoringError> {
        let n = rows.len() as u64;
        let l = rows.first().map_or(0, |r| r.len()) as u64;
        if n == 0 || l == 0 {
            return Err(ColoringError::Parameter("empty table".into()));
        }
        if rows.iter().any(|r| r.len() as u64 != l) {
            return Err(ColoringError::Parameter("ragged table".into()));
        }
        let colors: Vec<u32> = rows.into_iter().flatten().collect();
        let mut table = Self {
            n,
            l,
            m,
            colors,
            lambda,
            seed: 0,
            worst: None,
        };
        table.validate_entries()?;
        table.verify()?;
        Ok(table)
    }

    /// Builds a table without the pairwise check. For degenerate test setups.
    pub fn from_rows_unverified(rows: Vec<Vec<u32>>, m: u64, lambda: f64) -> Self {
        let n = rows.len() as u64;
        let l = rows.first().map_or(0, |r| r.len()) as u64;
        let colors = rows.into_iter().flatten().collect();
        let mut table = Self {
            n,
            l,
            m,
            colors,
            lambda,
            seed: 0,
            worst: None,
        };
        table.worst = table.scan_worst();
        table
    }

    pub fn identities(&self) -> u64 {
        self.n
    }

    pub fn bins(&self) -> u64 {
        self.l
    }

    pub fn colors(&self) -> u64 {
        self.m
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn worst_pair(&self) -> Option<WorstPair> {
        self.worst
    }

    pub fn row(&self, i: u64) -> &[u32] {
        let start = ((i - 1) * self.l) as usize;
        &self.colors[start..start + self.l as usize]
    }

    /// Largest agreement count allowed, `floor(lambda * L / 2)`.
    pub fn agreement_limit(&self) -> u64 {
        (self.lambda * self.l as f64 / 2.0).floor() as u64
    }

    pub(crate) fn validate_entries(&self) -> Result<(), ColoringError> {
        match self
            .colors
            .iter()
            .position(|&c| c == 0 || c as u64 > self.m)
        {
            Some(k) => Err(ColoringError::Parameter(format!(
                "color {} at index {k} outside 1..={}",
                self.colors[k], self.m
            ))),
            None => Ok(()),
        }
    }

    pub fn agreement(&self, i: u64, j: u64) -> u64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .filter(|(a, b)| a == b)
            .count() as u64
    }

    fn scan_worst(&self) -> Option<WorstPair> {
        (1..=self.n)
            .into_par_iter()
            .filter_map(|i| {
                (i + 1..=self.n)
                    .map(|j| WorstPair { i: i as u128, j: j as u128, count: self.agreement(i, j) })
                    .max_by_key(|w| (w.count, std::cmp::Reverse((w.i, w.j))))
            })
            .max_by_key(|w| (w.count, std::cmp::Reverse((w.i, w.j))))
    }

    /// Checks every pair; records the worst pair.
    pub(crate) fn verify(&mut self) -> Result<(), ColoringError> {
        if self.n > MAX_TABLE_IDENTITIES {
            return Err(ColoringError::TableTooLarge(self.n));
        }
        self.worst = self.scan_worst();
        match self.worst {
            Some(w) if w.count > self.agreement_limit() => Err(ColoringError::AgreementExceeded(w)),
            _ => Ok(()),
        }
    }
}

/// Draws i.i.d. uniform tables until one meets the pairwise agreement limit.
pub fn generate_random_family<R: Rng + ?Sized>(
    n: u64,
    l: u64,
    m: u64,
    lambda: f64,
    rng: &mut R,
    max_retries: u32,
) -> Result<TableFamily, ColoringError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(ColoringError::Parameter(format!("lambda = {lambda}")));
    }
    if m as f64 <= 2.0 / lambda {
        return Err(ColoringError::Parameter(format!(
            "M = {m} must exceed 2/lambda = {}",
            2.0 / lambda
        )));
    }
    if m > u32::MAX as u64 {
        return Err(ColoringError::Parameter(format!("M = {m} too large")));
    }
    if n == 0 || l == 0 {
        return Err(ColoringError::Parameter("N and L must be positive".into()));
    }
    if n > MAX_TABLE_IDENTITIES {
        return Err(ColoringError::TableTooLarge(n));
    }
    let mut worst_seen = None;
    for _ in 0..=max_retries {
        let colors: Vec<u32> = (0..n * l).map(|_| rng.random_range(1..=m as u32)).collect();
        let mut table = TableFamily {
            n,
            l,
            m,
            colors,
            lambda,
            seed: 0,
            worst: None,
        };
        match table.verify() {
            Ok(()) => return Ok(table),
            Err(ColoringError::AgreementExceeded(w)) => worst_seen = Some(w),
            Err(e) => return Err(e),
        }
    }
    Err(ColoringError::RetriesExhausted {
        attempts: max_retries + 1,
        worst: worst_seen.expect("at least one attempt"),
    })
}
