//! Memoryless additive-noise channel with perfect feedback.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::NoiseSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("power constraint {constraint:?} violated (max |x| = {max_abs}, energy = {energy}, n = {n})")]
    PowerViolation {
        constraint: PowerConstraint,
        max_abs: f64,
        energy: f64,
        n: usize,
    },
}

/// Per-symbol (peak) or per-block (average) power budget Γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "gamma", rename_all = "lowercase")]
pub enum PowerConstraint {
    /// `|x_t| <= Γ` for every t.
    Peak(f64),
    /// `Σ x_t² <= n Γ`.
    Average(f64),
}

impl PowerConstraint {
    pub fn gamma(&self) -> f64 {
        match *self {
            PowerConstraint::Peak(g) | PowerConstraint::Average(g) => g,
        }
    }

    /// Whether the input sequence satisfies the constraint.
    pub fn admits(&self, inputs: &[f64]) -> bool {
        match *self {
            PowerConstraint::Peak(g) => check_peak(inputs, g),
            PowerConstraint::Average(g) => check_average(inputs, g),
        }
    }
}

/// A deterministic feedback encoding function of fixed length.
///
/// `next_symbol(t, past)` gives the channel input at time `t` (1-based) from
/// the outputs `y_1..y_{t-1}` already fed back to the sender. It must be a
/// pure function of its arguments.
pub trait FeedbackEncoder: Sync {
    fn length(&self) -> usize;
    fn constraint(&self) -> PowerConstraint;
    fn next_symbol(&self, t: usize, past_outputs: &[f64]) -> f64;
}

/// Encoder built from a closure.
pub struct FnEncoder<F> {
    length: usize,
    constraint: PowerConstraint,
    rule: F,
}

impl<F> FnEncoder<F>
where
    F: Fn(usize, &[f64]) -> f64 + Sync,
{
    pub fn new(length: usize, constraint: PowerConstraint, rule: F) -> Self {
        Self {
            length,
            constraint,
            rule,
        }
    }
}

impl<F> FeedbackEncoder for FnEncoder<F>
where
    F: Fn(usize, &[f64]) -> f64 + Sync,
{
    fn length(&self) -> usize {
        self.length
    }

    fn constraint(&self) -> PowerConstraint {
        self.constraint
    }

    fn next_symbol(&self, t: usize, past_outputs: &[f64]) -> f64 {
        (self.rule)(t, past_outputs)
    }
}

/// One realized channel block. `outputs[t] == inputs[t] + noise[t]` exactly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
    pub noise: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Writes `t,x,z,y` rows (t is 1-based), without a header.
    pub fn write_csv_rows<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for t in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{}",
                t + 1,
                self.inputs[t],
                self.noise[t],
                self.outputs[t]
            )?;
        }
        Ok(())
    }
}

/// Runs `enc` over the channel `y_t = x_t + z_t`.
pub fn transmit_feedback<E, R>(
    enc: &E,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<Trajectory, ChannelError>
where
    E: FeedbackEncoder + ?Sized,
    R: Rng + ?Sized,
{
    let mut traj = Trajectory::default();
    transmit_feedback_into(enc, spec, rng, &mut traj)?;
    Ok(traj)
}

/// As [`transmit_feedback`], reusing the buffers of `traj`.
pub fn transmit_feedback_into<E, R>(
    enc: &E,
    spec: &NoiseSpec,
    rng: &mut R,
    traj: &mut Trajectory,
) -> Result<(), ChannelError>
where
    E: FeedbackEncoder + ?Sized,
    R: Rng + ?Sized,
{
    let n = enc.length();
    traj.inputs.clear();
    traj.outputs.clear();
    traj.noise.clear();
    for t in 1..=n {
        let x = enc.next_symbol(t, &traj.outputs);
        let z = spec.sample(rng);
        traj.inputs.push(x);
        traj.noise.push(z);
        traj.outputs.push(x + z);
    }
    let constraint = enc.constraint();
    if !constraint.admits(&traj.inputs) {
        return Err(ChannelError::PowerViolation {
            constraint,
            max_abs: traj.inputs.iter().fold(0.0, |m, x| x.abs().max(m)),
            energy: energy(&traj.inputs),
            n,
        });
    }
    Ok(())
}

fn energy(inputs: &[f64]) -> f64 {
    inputs.iter().map(|x| x * x).sum()
}

/// `max_t |x_t| <= Γ`.
pub fn check_peak(inputs: &[f64], gamma: f64) -> bool {
    inputs.iter().all(|x| x.abs() <= gamma)
}

/// `Σ_t x_t² <= n Γ`.
pub fn check_average(inputs: &[f64], gamma: f64) -> bool {
    energy(inputs) <= inputs.len() as f64 * gamma
}
