//! Non-discrete noise laws on the real line.
//!
//! A [`NoiseSpec`] is stored in Lebesgue-decomposed form: a finite set of
//! atoms, an absolutely continuous density family and a singular continuous
//! (Cantor-type) part, mixed with weights `p_d + p_a + p_s = 1`.
//!
//! The continuous conditional law `F' = (p_a A + p_s S) / (p_a + p_s)` is the
//! law of the noise given that it avoids the atom set. Its quantiles drive the
//! common-randomness binning.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

/// Tolerance used when validating that mixture weights add up to one.
const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Ternary digits used when evaluating the Cantor function.
const CANTOR_DIGITS: usize = 64;

const QUANTILE_MAX_ITER: usize = 200;
const QUANTILE_ABS_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("invalid noise parameter: {0}")]
    InvalidParameter(String),
    #[error("mixture weights p_d + p_a + p_s = {0} (must be 1)")]
    WeightsDoNotSumToOne(f64),
    #[error("atom weights sum to {0} (must be 1)")]
    AtomWeights(f64),
    #[error("duplicate atom value {0}")]
    DuplicateAtom(f64),
    #[error("noise law is discrete (p_a + p_s = 0); common randomness cannot be extracted")]
    DiscreteNoise,
    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),
}

/// Absolutely continuous part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum AcPart {
    Gaussian { mean: f64, stddev: f64 },
    Uniform { a: f64, b: f64 },
    Laplace { location: f64, scale: f64 },
}

/// Singular continuous part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ScPart {
    /// Cantor distribution on `[shift, shift + scale]`.
    Cantor { shift: f64, scale: f64 },
}

/// A point mass of the discrete part. `weight` is relative to the discrete
/// part, so the atom weights of a spec sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub weight: f64,
}

/// Standard normal cdf.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `Q(x) = 1 - Φ(x)`.
pub fn std_normal_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// The Cantor function on `[0, 1]`, extended by 0 to the left and 1 to the
/// right. Evaluated from the first 64 ternary digits of `x`.
pub fn cantor_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let mut frac = x;
    let mut value = 0.0;
    let mut weight = 0.5;
    for _ in 0..CANTOR_DIGITS {
        frac *= 3.0;
        let digit = frac.floor();
        frac -= digit;
        match digit as u8 {
            0 => {}
            1 => return value + weight,
            _ => value += weight,
        }
        weight *= 0.5;
        if frac == 0.0 {
            break;
        }
    }
    value
}

impl AcPart {
    fn validate(&self) -> Result<(), NoiseError> {
        let ok = match *self {
            AcPart::Gaussian { mean, stddev } => mean.is_finite() && stddev.is_finite() && stddev > 0.0,
            AcPart::Uniform { a, b } => a.is_finite() && b.is_finite() && a < b,
            AcPart::Laplace { location, scale } => {
                location.is_finite() && scale.is_finite() && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(NoiseError::InvalidParameter(format!("{self:?}")))
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match *self {
            AcPart::Gaussian { mean, stddev } => std_normal_cdf((z - mean) / stddev),
            AcPart::Uniform { a, b } => ((z - a) / (b - a)).clamp(0.0, 1.0),
            AcPart::Laplace { location, scale } => {
                let x = (z - location) / scale;
                if x < 0.0 {
                    0.5 * x.exp()
                } else {
                    1.0 - 0.5 * (-x).exp()
                }
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            AcPart::Gaussian { mean, stddev } => {
                let n: f64 = StandardNormal.sample(rng);
                mean + stddev * n
            }
            AcPart::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            AcPart::Laplace { location, scale } => {
                // u in (-1/2, 1/2)
                let u = rng.random::<f64>() - 0.5;
                location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }

    fn center(&self) -> f64 {
        match *self {
            AcPart::Gaussian { mean, .. } => mean,
            AcPart::Uniform { a, b } => 0.5 * (a + b),
            AcPart::Laplace { location, .. } => location,
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            AcPart::Gaussian { stddev, .. } => stddev,
            AcPart::Uniform { a, b } => b - a,
            AcPart::Laplace { scale, .. } => scale,
        }
    }
}

impl ScPart {
    fn validate(&self) -> Result<(), NoiseError> {
        let ScPart::Cantor { shift, scale } = *self;
        if shift.is_finite() && scale.is_finite() && scale > 0.0 {
            Ok(())
        } else {
            Err(NoiseError::InvalidParameter(format!("{self:?}")))
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        let ScPart::Cantor { shift, scale } = *self;
        cantor_cdf((z - shift) / scale)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let ScPart::Cantor { shift, scale } = *self;
        let bits: u64 = rng.random();
        let mut x = 0.0;
        let mut place = 1.0 / 3.0;
        for k in 0..64 {
            if bits >> k & 1 == 1 {
                x += 2.0 * place;
            }
            place /= 3.0;
        }
        shift + scale * x
    }

    fn center(&self) -> f64 {
        let ScPart::Cantor { shift, scale } = *self;
        shift + 0.5 * scale
    }

    fn scale(&self) -> f64 {
        let ScPart::Cantor { scale, .. } = *self;
        scale
    }
}

/// A noise law in Lebesgue-decomposed form.
///
/// Immutable after construction; `Send + Sync`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpecRaw", into = "NoiseSpecRaw")]
pub struct NoiseSpec {
    p_d: f64,
    atoms: Vec<Atom>,
    p_a: f64,
    ac: Option<AcPart>,
    p_s: f64,
    sc: Option<ScPart>,
    /// Cumulative atom weights, for sampling.
    atom_cumulative: Vec<f64>,
}

impl NoiseSpec {
    /// Builds and validates a non-discrete noise law.
    pub fn new(
        p_d: f64,
        atoms: Vec<Atom>,
        p_a: f64,
        ac: Option<AcPart>,
        p_s: f64,
        sc: Option<ScPart>,
    ) -> Result<Self, NoiseError> {
        let spec = Self::build(p_d, atoms, p_a, ac, p_s, sc)?;
        if spec.continuous_mass() <= 0.0 {
            return Err(NoiseError::DiscreteNoise);
        }
        Ok(spec)
    }

    fn build(
        p_d: f64,
        atoms: Vec<Atom>,
        p_a: f64,
        ac: Option<AcPart>,
        p_s: f64,
        sc: Option<ScPart>,
    ) -> Result<Self, NoiseError> {
        for (name, p) in [("p_d", p_d), ("p_a", p_a), ("p_s", p_s)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(NoiseError::InvalidParameter(format!("{name} = {p}")));
            }
        }
        let total = p_d + p_a + p_s;
        if (total - 1.0).abs() > f64::EPSILON {
            return Err(NoiseError::WeightsDoNotSumToOne(total));
        }
        if (p_d == 0.0) != atoms.is_empty() {
            return Err(NoiseError::InvalidParameter(
                "atoms must be empty exactly when p_d = 0".into(),
            ));
        }
        if (p_a == 0.0) != ac.is_none() {
            return Err(NoiseError::InvalidParameter(
                "ac part must be absent exactly when p_a = 0".into(),
            ));
        }
        if (p_s == 0.0) != sc.is_none() {
            return Err(NoiseError::InvalidParameter(
                "sc part must be absent exactly when p_s = 0".into(),
            ));
        }
        if let Some(ac) = &ac {
            ac.validate()?;
        }
        if let Some(sc) = &sc {
            sc.validate()?;
        }
        let mut atom_cumulative = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for (k, atom) in atoms.iter().enumerate() {
            if !atom.value.is_finite() || !(atom.weight > 0.0 && atom.weight <= 1.0) {
                return Err(NoiseError::InvalidParameter(format!("atom {atom:?}")));
            }
            if atoms[..k].iter().any(|a| a.value == atom.value) {
                return Err(NoiseError::DuplicateAtom(atom.value));
            }
            acc += atom.weight;
            atom_cumulative.push(acc);
        }
        if !atoms.is_empty() && (acc - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(NoiseError::AtomWeights(acc));
        }
        Ok(Self {
            p_d,
            atoms,
            p_a,
            ac,
            p_s,
            sc,
            atom_cumulative,
        })
    }

    /// Pure absolutely continuous law.
    pub fn continuous(ac: AcPart) -> Result<Self, NoiseError> {
        Self::new(0.0, Vec::new(), 1.0, Some(ac), 0.0, None)
    }

    pub fn gaussian(mean: f64, stddev: f64) -> Result<Self, NoiseError> {
        Self::continuous(AcPart::Gaussian { mean, stddev })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self, NoiseError> {
        Self::continuous(AcPart::Uniform { a, b })
    }

    pub fn cantor(shift: f64, scale: f64) -> Result<Self, NoiseError> {
        Self::new(0.0, Vec::new(), 0.0, None, 1.0, Some(ScPart::Cantor { shift, scale }))
    }

    /// A degenerate point mass. This is *not* a valid channel noise for the
    /// identification scheme (it is discrete) and exists for component-level
    /// checks such as noiseless channel runs.
    pub fn point_mass(value: f64) -> Self {
        Self::build(
            1.0,
            vec![Atom { value, weight: 1.0 }],
            0.0,
            None,
            0.0,
            None,
        )
        .expect("finite point mass")
    }

    pub fn p_d(&self) -> f64 {
        self.p_d
    }

    pub fn p_a(&self) -> f64 {
        self.p_a
    }

    pub fn p_s(&self) -> f64 {
        self.p_s
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn ac_part(&self) -> Option<&AcPart> {
        self.ac.as_ref()
    }

    pub fn sc_part(&self) -> Option<&ScPart> {
        self.sc.as_ref()
    }

    /// `P[Ē]`: the total mass of the atom set.
    pub fn discrete_mass(&self) -> f64 {
        self.p_d
    }

    /// `P[E] = p_a + p_s`.
    pub fn continuous_mass(&self) -> f64 {
        self.p_a + self.p_s
    }

    pub fn is_discrete(&self) -> bool {
        self.continuous_mass() <= 0.0
    }

    /// The Gaussian standard deviation when the law is a pure Gaussian.
    pub fn pure_gaussian_stddev(&self) -> Option<f64> {
        match (self.p_d, self.p_s, self.ac) {
            (d, s, Some(AcPart::Gaussian { mean, stddev })) if d == 0.0 && s == 0.0 && mean == 0.0 => {
                Some(stddev)
            }
            _ => None,
        }
    }

    fn discrete_cdf(&self, z: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.value <= z)
            .map(|a| a.weight)
            .sum()
    }

    /// `F(z) = p_d D(z) + p_a A(z) + p_s S(z)`.
    pub fn cdf(&self, z: f64) -> f64 {
        let mut f = 0.0;
        if self.p_d > 0.0 {
            f += self.p_d * self.discrete_cdf(z);
        }
        if let Some(ac) = &self.ac {
            f += self.p_a * ac.cdf(z);
        }
        if let Some(sc) = &self.sc {
            f += self.p_s * sc.cdf(z);
        }
        f.min(1.0)
    }

    /// `F'(z) = (p_a A(z) + p_s S(z)) / (p_a + p_s)`, the cdf of the noise
    /// conditioned on avoiding the atoms.
    pub fn continuous_conditional_cdf(&self, z: f64) -> f64 {
        let mass = self.continuous_mass();
        let mut f = 0.0;
        if let Some(ac) = &self.ac {
            f += self.p_a * ac.cdf(z);
        }
        if let Some(sc) = &self.sc {
            f += self.p_s * sc.cdf(z);
        }
        (f / mass).min(1.0)
    }

    /// Draws one noise value. Atom draws return the stored value bit-exactly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // single-component laws skip the component draw
        if self.p_a == 1.0 {
            return self.ac.as_ref().unwrap().sample(rng);
        }
        if self.p_s == 1.0 {
            return self.sc.as_ref().unwrap().sample(rng);
        }
        if self.p_d == 1.0 {
            return self.sample_atom(rng);
        }
        let u: f64 = rng.random();
        if u < self.p_d {
            self.sample_atom(rng)
        } else if u < self.p_d + self.p_a || self.sc.is_none() {
            self.ac.as_ref().unwrap().sample(rng)
        } else {
            self.sc.as_ref().unwrap().sample(rng)
        }
    }

    fn sample_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.atoms.len() == 1 {
            return self.atoms[0].value;
        }
        let total = *self.atom_cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let k = self
            .atom_cumulative
            .partition_point(|&c| c <= u)
            .min(self.atoms.len() - 1);
        self.atoms[k].value
    }

    /// Whether `z` belongs to the atom set, by exact floating-point equality.
    pub fn is_atom(&self, z: f64) -> bool {
        self.atoms.iter().any(|a| a.value == z)
    }

    /// `z* = inf { z : F'(z) >= u }`, found by bisection.
    pub fn continuous_conditional_quantile(&self, u: f64) -> Result<f64, NoiseError> {
        if !(u > 0.0 && u < 1.0) {
            return Err(NoiseError::ProbabilityOutOfRange(u));
        }
        if self.is_discrete() {
            return Err(NoiseError::DiscreteNoise);
        }
        Ok(self.bisect_quantile(u))
    }

    fn bisect_quantile(&self, u: f64) -> f64 {
        let (center, scale) = self.continuous_center_scale();
        let mut half = scale.max(f64::MIN_POSITIVE);
        let mut lo = center - half;
        let mut hi = center + half;
        while self.continuous_conditional_cdf(lo) >= u {
            half *= 2.0;
            lo = center - half;
        }
        while self.continuous_conditional_cdf(hi) < u {
            half *= 2.0;
            hi = center + half;
        }
        let tol = QUANTILE_ABS_TOL * scale.min(1.0);
        // invariant: F'(lo) < u <= F'(hi)
        for _ in 0..QUANTILE_MAX_ITER {
            if hi - lo <= tol {
                break;
            }
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.continuous_conditional_cdf(mid) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    fn continuous_center_scale(&self) -> (f64, f64) {
        match (&self.ac, &self.sc) {
            (Some(ac), Some(sc)) => {
                let center = (self.p_a * ac.center() + self.p_s * sc.center()) / self.continuous_mass();
                let spread = (ac.center() - sc.center()).abs();
                (center, ac.scale().min(sc.scale()).max(spread.min(1.0)))
            }
            (Some(ac), None) => (ac.center(), ac.scale()),
            (None, Some(sc)) => (sc.center(), sc.scale()),
            (None, None) => (0.0, 1.0),
        }
    }

    /// Smallest characteristic scale of the continuous parts.
    pub fn continuous_scale(&self) -> f64 {
        let a = self.ac.map(|a| a.scale()).unwrap_or(f64::INFINITY);
        let s = self.sc.map(|s| s.scale()).unwrap_or(f64::INFINITY);
        a.min(s)
    }
}

/// Key-value form of a [`NoiseSpec`]: `p_d`, `atoms = [[value, weight], ...]`,
/// `ac = { family, params, weight }`, `sc = { family, params, weight }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpecRaw {
    #[serde(default)]
    pub p_d: f64,
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ac: Option<ComponentRaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sc: Option<ComponentRaw>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentRaw {
    pub family: String,
    pub params: Vec<f64>,
    /// Mixture weight; defaults to whatever mass the other parts leave.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl TryFrom<NoiseSpecRaw> for NoiseSpec {
    type Error = NoiseError;

    fn try_from(raw: NoiseSpecRaw) -> Result<Self, NoiseError> {
        fn two(c: &ComponentRaw) -> Result<(f64, f64), NoiseError> {
            match c.params.as_slice() {
                [a, b] => Ok((*a, *b)),
                _ => Err(NoiseError::InvalidParameter(format!(
                    "{} expects 2 params, got {}",
                    c.family,
                    c.params.len()
                ))),
            }
        }
        let ac = raw
            .ac
            .as_ref()
            .map(|c| {
                let (x, y) = two(c)?;
                match c.family.to_ascii_lowercase().as_str() {
                    "gaussian" | "normal" => Ok(AcPart::Gaussian { mean: x, stddev: y }),
                    "uniform" => Ok(AcPart::Uniform { a: x, b: y }),
                    "laplace" => Ok(AcPart::Laplace { location: x, scale: y }),
                    other => Err(NoiseError::InvalidParameter(format!("unknown ac family {other}"))),
                }
            })
            .transpose()?;
        let sc = raw
            .sc
            .as_ref()
            .map(|c| {
                let (x, y) = two(c)?;
                match c.family.to_ascii_lowercase().as_str() {
                    "cantor" => Ok(ScPart::Cantor { shift: x, scale: y }),
                    other => Err(NoiseError::InvalidParameter(format!("unknown sc family {other}"))),
                }
            })
            .transpose()?;
        let rest = 1.0 - raw.p_d;
        let (p_a, p_s) = match (&raw.ac, &raw.sc) {
            (Some(a), Some(s)) => match (a.weight, s.weight) {
                (Some(wa), Some(ws)) => (wa, ws),
                (Some(wa), None) => (wa, rest - wa),
                (None, Some(ws)) => (rest - ws, ws),
                (None, None) => {
                    return Err(NoiseError::InvalidParameter(
                        "ac and sc both present: give at least one weight".into(),
                    ))
                }
            },
            (Some(a), None) => (a.weight.unwrap_or(rest), 0.0),
            (None, Some(s)) => (0.0, s.weight.unwrap_or(rest)),
            (None, None) => (0.0, 0.0),
        };
        let atoms = raw
            .atoms
            .iter()
            .map(|&[value, weight]| Atom { value, weight })
            .collect();
        NoiseSpec::new(raw.p_d, atoms, p_a, ac, p_s, sc)
    }
}

impl From<NoiseSpec> for NoiseSpecRaw {
    fn from(spec: NoiseSpec) -> Self {
        let ac = spec.ac.map(|ac| {
            let (family, params) = match ac {
                AcPart::Gaussian { mean, stddev } => ("gaussian", vec![mean, stddev]),
                AcPart::Uniform { a, b } => ("uniform", vec![a, b]),
                AcPart::Laplace { location, scale } => ("laplace", vec![location, scale]),
            };
            ComponentRaw {
                family: family.into(),
                params,
                weight: Some(spec.p_a),
            }
        });
        let sc = spec.sc.map(|ScPart::Cantor { shift, scale }| ComponentRaw {
            family: "cantor".into(),
            params: vec![shift, scale],
            weight: Some(spec.p_s),
        });
        NoiseSpecRaw {
            p_d: spec.p_d,
            atoms: spec.atoms.iter().map(|a| [a.value, a.weight]).collect(),
            ac,
            sc,
        }
    }
}
