//! Experiment configuration.
//!
//! The format is flat key-value text with dotted sections, read with a TOML
//! parser. See the README for the full key list.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{substream_seed, HarnessError, STREAM_PLAN};
use crate::channel::PowerConstraint;
use crate::idcode::{ColoringKind, IdentityCount, PlanOptions};
use crate::noise::NoiseSpec;
use crate::transmission::Decoder;

/// Configurations shipped with the binary, addressable by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("gaussian_small", include_str!("../../configs/gaussian_small.toml")),
    ("gaussian_rs", include_str!("../../configs/gaussian_rs.toml")),
    ("mixed_cr", include_str!("../../configs/mixed_cr.toml")),
    ("cantor_table", include_str!("../../configs/cantor_table.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    #[default]
    Peak,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    pub lambda: f64,
    pub gamma: f64,
    #[serde(default)]
    pub constraint: ConstraintKind,
    /// Identity count; alternatively `q` and `m` for `N = q^m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(default)]
    pub coloring: ColoringKind,
    #[serde(default = "default_tx_share")]
    pub tx_share: f64,
    #[serde(default = "default_r_cap")]
    pub r_cap: usize,
    #[serde(default = "default_mc_trials")]
    pub mc_trials: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxConfig {
    /// Forced alphabet size.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub alphabet: Option<u64>,
    /// Forced repetition count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default)]
    pub decoder: Decoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    /// Identities sampled for `mu_1`.
    #[serde(default = "default_identities")]
    pub identities: usize,
    /// Random ordered pairs sampled for `mu_2`.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub noise: NoiseSpec,
    pub code: CodeConfig,
    #[serde(default)]
    pub tx: TxConfig,
    pub sim: SimConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_tx_share() -> f64 {
    0.5
}

fn default_r_cap() -> usize {
    100_000
}

fn default_mc_trials() -> u64 {
    20_000
}

fn default_identities() -> usize {
    8
}

fn default_pairs() -> usize {
    256
}

impl ExperimentConfig {
    /// Parses and validates configuration text.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let config: Self =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a configuration file, or a bundled configuration by name.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        if !path.exists() {
            if let Some(text) = bundled(&path.to_string_lossy()) {
                return Self::parse(text);
            }
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let c = &self.code;
        if !(c.lambda > 0.0 && c.lambda < 0.5) {
            return bad(format!("code.lambda = {} must lie in (0, 1/2)", c.lambda));
        }
        if !(c.gamma > 0.0 && c.gamma.is_finite()) {
            return bad(format!("code.gamma = {} must be positive", c.gamma));
        }
        if !(c.tx_share > 0.0 && c.tx_share < 1.0) {
            return bad(format!("code.tx_share = {} must lie in (0, 1)", c.tx_share));
        }
        match (c.n, c.q, c.m) {
            (Some(0), _, _) => return bad("code.n must be at least 1".into()),
            (Some(_), None, None) => {}
            (None, Some(q), Some(m)) if q >= 2 && m >= 1 => {}
            (None, Some(_), Some(_)) => return bad("code.q must be >= 2 and code.m >= 1".into()),
            _ => return bad("give either code.n or both code.q and code.m".into()),
        }
        if c.r_cap == 0 || c.mc_trials == 0 {
            return bad("code.r_cap and code.mc_trials must be positive".into());
        }
        if self.tx.r == Some(0) {
            return bad("tx.r must be at least 1".into());
        }
        if self.sim.trials == 0 {
            return bad("sim.trials must be at least 1".into());
        }
        if self.sim.threads == Some(0) {
            return bad("sim.threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn constraint(&self) -> PowerConstraint {
        match self.code.constraint {
            ConstraintKind::Peak => PowerConstraint::Peak(self.code.gamma),
            ConstraintKind::Average => PowerConstraint::Average(self.code.gamma),
        }
    }

    pub fn identities(&self) -> IdentityCount {
        match (self.code.n, self.code.q, self.code.m) {
            (Some(n), _, _) => IdentityCount::Count(n as u128),
            (None, Some(q), Some(m)) => IdentityCount::ReedSolomon { q, m },
            _ => unreachable!("validated"),
        }
    }

    pub fn plan_options(&self) -> PlanOptions {
        PlanOptions {
            coloring: self.code.coloring,
            tx_share: self.code.tx_share,
            decoder: self.tx.decoder,
            forced_m: self.tx.alphabet,
            forced_r: self.tx.r,
            r_cap: self.code.r_cap,
            mc_trials: self.code.mc_trials,
            seed: substream_seed(self.sim.seed, STREAM_PLAN),
        }
    }
}

/// Text of a bundled configuration.
pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
