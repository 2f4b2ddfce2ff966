//! Checks shared by the invariant suites and the acceptance runner. Each
//! returns a one-line summary on success and a reason on failure.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use idfc::channel::{transmit_feedback, transmit_feedback_into, FnEncoder, PowerConstraint, Trajectory};
use idfc::coloring::{generate_random_family, hoeffding_pair_bound, required_l, ReedSolomonFamily};
use idfc::common_randomness::{build_pi, build_pi_with_length, CrOutcome};
use idfc::harness::config::ExperimentConfig;
use idfc::harness::{run_experiment, Estimate, Query};
use idfc::idcode::{plan, ColoringKind, IdFeedbackCode, IdentityCount, PlanOptions};
use idfc::noise::{AcPart, Atom, NoiseSpec, ScPart};
use idfc::stats::{chi_square_uniform, clopper_pearson, ks_critical, ks_statistic};
use idfc::transmission::{PamRepetitionCode, Decoder};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn gaussian(sd: f64) -> NoiseSpec {
    NoiseSpec::gaussian(0.0, sd).unwrap()
}

/// 0.5 atom at 0 plus 0.5 Uniform[0, 1].
pub fn atom_uniform() -> NoiseSpec {
    NoiseSpec::new(
        0.5,
        vec![Atom { value: 0.0, weight: 1.0 }],
        0.5,
        Some(AcPart::Uniform { a: 0.0, b: 1.0 }),
        0.0,
        None,
    )
    .unwrap()
}

/// Two atoms, a Gaussian part and a Cantor part.
pub fn three_part() -> NoiseSpec {
    NoiseSpec::new(
        0.3,
        vec![Atom { value: -1.0, weight: 0.25 }, Atom { value: 0.5, weight: 0.75 }],
        0.4,
        Some(AcPart::Gaussian { mean: 0.0, stddev: 0.5 }),
        0.3,
        Some(ScPart::Cantor { shift: 0.0, scale: 1.0 }),
    )
    .unwrap()
}

/// Atom at zero plus a Gaussian part.
pub fn atom_gaussian(p_d: f64, sd: f64) -> NoiseSpec {
    NoiseSpec::new(
        p_d,
        vec![Atom { value: 0.0, weight: 1.0 }],
        1.0 - p_d,
        Some(AcPart::Gaussian { mean: 0.0, stddev: sd }),
        0.0,
        None,
    )
    .unwrap()
}

pub fn specs() -> Vec<(&'static str, NoiseSpec)> {
    vec![
        ("gaussian", gaussian(1.0)),
        ("uniform", NoiseSpec::uniform(-1.0, 2.0).unwrap()),
        ("laplace", NoiseSpec::continuous(AcPart::Laplace { location: 0.5, scale: 0.7 }).unwrap()),
        ("cantor", NoiseSpec::cantor(-1.0, 2.0).unwrap()),
        ("atom+uniform", atom_uniform()),
        ("three-part", three_part()),
    ]
}

fn strictly_increasing_ac(spec: &NoiseSpec) -> bool {
    spec.sc_part().is_none()
}

pub fn check_cdf_monotone(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, spec) in specs() {
        for _ in 0..10_000 {
            let a = rng.random_range(-4.0..4.0);
            let b = rng.random_range(-4.0..4.0);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            ensure!(spec.cdf(lo) <= spec.cdf(hi), "{name}: cdf({lo}) > cdf({hi})");
            ensure!((0.0..=1.0).contains(&spec.cdf(lo)), "{name}: cdf outside [0, 1]");
        }
        for a in spec.atoms() {
            ensure!(spec.cdf(a.value.next_down()) < spec.cdf(a.value), "{name}: no jump at atom {}", a.value);
        }
    }
    Ok("10^4 random pairs per law".into())
}

pub fn check_quantile_inversion() -> Check {
    let mut worst: f64 = 0.0;
    for (name, spec) in specs() {
        let scale = spec.continuous_scale();
        for k in 1..=1000 {
            let u = k as f64 / 1001.0;
            let z = spec.continuous_conditional_quantile(u).map_err(|e| e.to_string())?;
            let f = spec.continuous_conditional_cdf(z);
            if strictly_increasing_ac(&spec) {
                worst = worst.max((f - u).abs());
                ensure!((f - u).abs() <= 1e-9, "{name}: F'(q({u})) = {f}");
            } else {
                let eps = 1e-12 * scale;
                ensure!(f >= u, "{name}: F'(q({u})) = {f} < u");
                let below = spec.continuous_conditional_cdf(z - eps);
                ensure!(below < u, "{name}: F'(q({u}) - eps) = {below} >= u");
            }
        }
    }
    Ok(format!("max |F'(q(u)) - u| = {worst:.1e} on strictly increasing laws"))
}

/// Non-atom samples follow the continuous conditional law.
pub fn check_conditional_law(samples: usize, seed: u64) -> Check {
    let mut out = Vec::new();
    for (name, spec) in [("atom+uniform", atom_uniform()), ("three-part", three_part())] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kept: Vec<f64> = (0..samples)
            .map(|_| spec.sample(&mut rng))
            .filter(|&z| !spec.is_atom(z))
            .collect();
        let d = ks_statistic(&mut kept, |z| spec.continuous_conditional_cdf(z));
        let crit = ks_critical(kept.len(), 0.01);
        ensure!(d <= crit, "{name}: KS distance {d} exceeds {crit}");
        out.push(format!("{name} D = {d:.2e} (crit {crit:.2e})"));
    }
    Ok(out.join(", "))
}

pub fn check_sampler_ks(samples: usize, seed: u64) -> Check {
    let mut out = Vec::new();
    for (name, spec) in specs().into_iter().filter(|(_, s)| s.p_d() == 0.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs: Vec<f64> = (0..samples).map(|_| spec.sample(&mut rng)).collect();
        let d = ks_statistic(&mut xs, |z| spec.cdf(z));
        let crit = ks_critical(samples, 0.01);
        ensure!(d <= crit, "{name}: KS distance {d} exceeds {crit}");
        out.push(format!("{name} {d:.1e}"));
    }
    Ok(out.join(", "))
}

pub fn check_atom_recovery(seed: u64) -> Check {
    let spec = three_part();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 200_000;
    let mut atoms = 0u64;
    for _ in 0..n {
        let z = spec.sample(&mut rng);
        if spec.atoms().iter().any(|a| a.value == z) {
            atoms += 1;
        }
    }
    let e = Estimate::from_counts(atoms, n);
    ensure!(e.contains(spec.p_d()), "atom frequency {} vs p_D {}", e.estimate, spec.p_d());
    Ok(format!("atom frequency {:.4} vs p_D 0.3", e.estimate))
}

fn zero_encoder(n: usize) -> FnEncoder<impl Fn(usize, &[f64]) -> f64 + Sync> {
    FnEncoder::new(n, PowerConstraint::Peak(1.0), |_, _| 0.0)
}

fn echo_encoder(n: usize) -> FnEncoder<impl Fn(usize, &[f64]) -> f64 + Sync> {
    FnEncoder::new(n, PowerConstraint::Peak(2.0), |_, past: &[f64]| {
        past.last().map_or(1.0, |y| y.clamp(-2.0, 2.0))
    })
}

pub fn check_channel_determinism(seed: u64) -> Check {
    for (name, spec) in specs() {
        let enc = echo_encoder(50);
        let a = transmit_feedback(&enc, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        let b = transmit_feedback(&enc, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        let bits = |t: &Trajectory| -> Vec<u64> {
            t.inputs.iter().chain(&t.outputs).chain(&t.noise).map(|v| v.to_bits()).collect()
        };
        ensure!(bits(&a) == bits(&b), "{name}: trajectories differ");
    }
    Ok("bit-identical trajectories".into())
}

pub fn check_additivity(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, spec) in specs() {
        for _ in 0..100 {
            let t = transmit_feedback(&echo_encoder(40), &spec, &mut rng).map_err(|e| e.to_string())?;
            for k in 0..t.len() {
                ensure!(t.outputs[k] == t.inputs[k] + t.noise[k], "{name}: y != x + z at {k}");
            }
        }
    }
    Ok("y = x + z exactly".into())
}

/// Sample correlation of consecutive outputs of the zero encoder.
pub fn check_memoryless(trials: usize, seed: u64) -> Check {
    let mut out = Vec::new();
    for (name, spec) in [("gaussian", gaussian(1.0)), ("three-part", three_part())] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = zero_encoder(2);
        let mut traj = Trajectory::default();
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..trials {
            transmit_feedback_into(&enc, &spec, &mut rng, &mut traj).map_err(|e| e.to_string())?;
            let (x, y) = (traj.outputs[0], traj.outputs[1]);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let n = trials as f64;
        let cov = sxy / n - sx / n * sy / n;
        let rho = cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt();
        let tol = 4.0 / n.sqrt();
        ensure!(rho.abs() <= tol, "{name}: correlation {rho} beyond {tol}");
        out.push(format!("{name} rho = {rho:.1e}"));
    }
    Ok(out.join(", "))
}

/// Conditional bin uniformity and failure rate of the CR map.
pub fn check_cr_uniformity(trials: u64, seed: u64) -> Check {
    let spec = atom_uniform();
    let pimap = build_pi(&spec, 64, 0.1).map_err(|e| e.to_string())?;
    ensure!(pimap.n_cr() == 4, "n_cr = {}", pimap.n_cr());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bins = vec![0u64; 64];
    let mut fails = 0;
    let mut obs = [0.0; 4];
    for _ in 0..trials {
        for v in obs.iter_mut() {
            *v = spec.sample(&mut rng);
        }
        match pimap.apply(&obs) {
            CrOutcome::Bin(l) => bins[l as usize - 1] += 1,
            CrOutcome::Failure => fails += 1,
        }
    }
    let (stat, p) = chi_square_uniform(&bins);
    ensure!(p >= 0.01, "chi-square {stat} with p = {p}");
    let e = Estimate::from_counts(fails, trials);
    ensure!(e.contains(0.0625), "failure rate {} CI [{}, {}]", e.estimate, e.ci_lo, e.ci_hi);
    Ok(format!(
        "chi2 = {stat:.1} (p = {p:.3}); failure rate {:.5} in [{:.5}, {:.5}]",
        e.estimate, e.ci_lo, e.ci_hi
    ))
}

pub fn check_cr_views_agree(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, spec) in specs() {
        let pimap = build_pi(&spec, 37, 0.05).map_err(|e| e.to_string())?;
        let enc = zero_encoder(pimap.n_cr());
        for _ in 0..2000 {
            let t = transmit_feedback(&enc, &spec, &mut rng).map_err(|e| e.to_string())?;
            ensure!(pimap.apply(&t.noise) == pimap.apply(&t.outputs), "{name}: views disagree");
        }
    }
    Ok("sender and receiver outcomes identical".into())
}

pub fn check_cr_never_fails_continuous(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, spec) in specs().into_iter().filter(|(_, s)| s.p_d() == 0.0) {
        let pimap = build_pi(&spec, 64, 0.01).map_err(|e| e.to_string())?;
        ensure!(pimap.n_cr() == 1, "{name}: n_cr = {}", pimap.n_cr());
        for _ in 0..20_000 {
            let z = [spec.sample(&mut rng)];
            ensure!(pimap.apply(&z) != CrOutcome::Failure, "{name}: failure on {}", z[0]);
        }
    }
    Ok("no failures without atoms".into())
}

/// All pairs for q <= 13, m <= 2, with colors recomputed from base-q digits.
pub fn check_rs_exhaustive() -> Check {
    let mut pairs = 0u64;
    for q in [2u64, 3, 5, 7, 11, 13] {
        for m in [1u32, 2] {
            let rs = ReedSolomonFamily::new(q, m).map_err(|e| e.to_string())?;
            let n = q.pow(m);
            let color = |i: u64, l: u64| -> u64 {
                let (d0, d1) = ((i - 1) % q, (i - 1) / q);
                1 + (d0 + d1 * (l - 1)) % q
            };
            for i in 1..=n {
                for l in 1..=q {
                    ensure!(rs.evaluate(i as u128, l).unwrap() == color(i, l), "q={q} m={m} i={i} l={l}");
                }
            }
            for i in 1..=n {
                for j in i + 1..=n {
                    let agree = (1..=q).filter(|&l| color(i, l) == color(j, l)).count() as u64;
                    ensure!(agree < m as u64, "q={q} m={m}: ({i}, {j}) agree {agree} times");
                    pairs += 1;
                }
            }
        }
    }
    Ok(format!("{pairs} pairs within m - 1 agreements"))
}

pub fn check_hoeffding_empirical(seed: u64) -> Check {
    let (l, lambda, m) = (1000usize, 0.2, 20u32);
    let bound = hoeffding_pair_bound(l as u64, lambda, m as u64).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = 10_000;
    let limit = lambda * l as f64 / 2.0;
    let mut exceed = 0u64;
    for _ in 0..pairs {
        let agree = (0..l)
            .filter(|_| rng.random_range(1..=m) == rng.random_range(1..=m))
            .count();
        if agree as f64 > limit {
            exceed += 1;
        }
    }
    let freq = exceed as f64 / pairs as f64;
    let se = (bound * (1.0 - bound) / pairs as f64).sqrt();
    ensure!(freq <= bound + 3.0 * se, "frequency {freq} above {bound} + 3 * {se}");
    Ok(format!("frequency {freq:.4} <= bound {bound:.4}"))
}

pub fn check_random_family_reverified(seed: u64) -> Check {
    let (n, lambda, m) = (64u64, 0.2, 23u64);
    let l = required_l(lambda, m, n as u128).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = generate_random_family(n, l, m, lambda, &mut rng, 3).map_err(|e| e.to_string())?;
    let limit = (lambda * l as f64 / 2.0).floor() as usize;
    let mut worst = 0;
    for i in 1..=n {
        let a = t.row(i);
        ensure!(a.iter().all(|&c| c >= 1 && c as u64 <= m), "color out of range in row {i}");
        for j in i + 1..=n {
            let agree = a.iter().zip(t.row(j)).filter(|(x, y)| x == y).count();
            worst = worst.max(agree);
            ensure!(agree <= limit, "({i}, {j}) agree {agree} > {limit}");
        }
    }
    Ok(format!("L = {l}, worst agreement {worst} <= {limit}"))
}

pub fn check_pam_round_trip() -> Check {
    for m in 2..=40 {
        for constraint in [PowerConstraint::Peak(2.5), PowerConstraint::Average(0.7)] {
            let code = PamRepetitionCode::new(m, constraint, 3).map_err(|e| e.to_string())?;
            for decoder in [Decoder::Averaging, Decoder::MajorityVote] {
                let code = code.clone().with_decoder(decoder);
                for msg in 1..=m {
                    let x = code.encode(msg).unwrap();
                    ensure!(code.decode(&x) == msg, "M={m} {constraint:?} {decoder:?}: {msg}");
                }
            }
        }
    }
    Ok("decode(encode(m)) = m for M <= 40".into())
}

pub fn check_pam_power() -> Check {
    for m in 2..=40 {
        for constraint in [PowerConstraint::Peak(2.5), PowerConstraint::Average(0.7), PowerConstraint::Average(3.0)] {
            let code = PamRepetitionCode::new(m, constraint, 5).map_err(|e| e.to_string())?;
            for msg in 1..=m {
                ensure!(constraint.admits(&code.encode(msg).unwrap()), "M={m} {constraint:?} msg {msg}");
            }
        }
    }
    Ok("all codewords admissible".into())
}

pub fn check_gaussian_error_monotone() -> Check {
    for m in [2usize, 5, 13] {
        let err = |r: usize, sd: f64| {
            PamRepetitionCode::new(m, PowerConstraint::Peak(2.0), r).unwrap().error_prob_gaussian(sd).unwrap()
        };
        for r in 1..30 {
            ensure!(err(r + 1, 1.0) < err(r, 1.0), "M={m}: not decreasing in r at {r}");
        }
        for k in 1..30 {
            let sd = 0.1 * k as f64;
            ensure!(err(4, sd + 0.1) > err(4, sd), "M={m}: not increasing in sigma at {sd}");
        }
    }
    Ok("strict on grids".into())
}

/// Monte Carlo error of random PAM configurations against the closed form.
pub fn check_tx_oracle(configs: usize, trials: u64, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < configs {
        let m = rng.random_range(2..=20usize);
        let gamma = rng.random_range(0.5..10.0);
        let constraint = if rng.random_bool(0.5) { PowerConstraint::Peak(gamma) } else { PowerConstraint::Average(gamma) };
        let sd = rng.random_range(0.05..2.0);
        let r = rng.random_range(1..=8usize);
        let code = PamRepetitionCode::new(m, constraint, r).map_err(|e| e.to_string())?;
        let exact = code.error_prob_gaussian(sd).map_err(|e| e.to_string())?;
        // Only configurations with a non-degenerate error rate.
        if !(0.01..=0.6).contains(&exact) {
            continue;
        }
        let errors = code.simulate_errors(&gaussian(sd), trials, &mut rng);
        let e = Estimate::from_counts(errors, trials);
        ensure!(
            e.contains(exact),
            "M={m} {constraint:?} sigma={sd} r={r}: exact {exact} outside [{}, {}]",
            e.ci_lo,
            e.ci_hi
        );
        out.push(format!("M={m} r={r}: {:.4}/{exact:.4}", e.estimate));
    }
    Ok(out.join(", "))
}

pub struct Planned {
    pub name: &'static str,
    pub spec: NoiseSpec,
    pub lambda: f64,
    pub code: IdFeedbackCode,
}

pub fn planned_codes() -> Vec<Planned> {
    let make = |name, spec: NoiseSpec, lambda, constraint, n, coloring| {
        let opts = PlanOptions { coloring, ..PlanOptions::default() };
        let p = plan(&spec, lambda, constraint, IdentityCount::Count(n), &opts).unwrap();
        let code = IdFeedbackCode::build(&spec, &p).unwrap();
        Planned { name, spec, lambda, code }
    };
    vec![
        make("gaussian peak", gaussian(1.0), 0.2, PowerConstraint::Peak(5.0), 30, ColoringKind::ReedSolomon),
        make("gaussian average", gaussian(0.5), 0.1, PowerConstraint::Average(2.0), 200, ColoringKind::ReedSolomon),
        make("atom+gaussian", atom_gaussian(0.4, 0.3), 0.1, PowerConstraint::Peak(3.0), 50, ColoringKind::ReedSolomon),
        make("gaussian table", gaussian(1.0), 0.2, PowerConstraint::Peak(5.0), 16, ColoringKind::Table),
        make("uniform", NoiseSpec::uniform(-0.5, 0.5).unwrap(), 0.2, PowerConstraint::Peak(2.0), 40, ColoringKind::ReedSolomon),
    ]
}

fn pairs_for(code: &IdFeedbackCode) -> Vec<(u128, u128)> {
    let n = code.identities();
    let mut pairs: Vec<(u128, u128)> = (1..=n)
        .flat_map(|i| (1..=n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    if pairs.len() > 400 {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        pairs = (0..400)
            .map(|_| loop {
                let (i, j) = (rng.random_range(1..=n), rng.random_range(1..=n));
                if i != j {
                    break (i, j);
                }
            })
            .collect();
        if let Some(w) = code.family().worst_pair_within(n) {
            pairs.push((w.i, w.j));
            pairs.push((w.j, w.i));
        }
    }
    pairs
}

/// Exact (or simulated) error probabilities of planned codes stay below
/// lambda.
pub fn check_error_bound() -> Check {
    let mut out = Vec::new();
    for p in planned_codes() {
        let code = &p.code;
        let pairs = pairs_for(code);
        if code.oracle_mu1(1).is_ok() {
            let mut worst1: f64 = 0.0;
            let mut worst2: f64 = 0.0;
            for i in 1..=code.identities() {
                worst1 = worst1.max(code.oracle_mu1(i).unwrap());
            }
            for &(i, j) in &pairs {
                worst2 = worst2.max(code.oracle_mu2(i, j).unwrap());
            }
            ensure!(worst1 <= p.lambda && worst2 <= p.lambda, "{}: mu1 {worst1}, mu2 {worst2}", p.name);
            out.push(format!("{} {worst1:.3}/{worst2:.3}", p.name));
        } else {
            let mut queries: Vec<Query> = (1..=code.identities().min(8)).map(|i| Query::Mu1 { i }).collect();
            queries.extend(pairs.iter().take(40).map(|&(i, j)| Query::Mu2 { i, j }));
            let est = idfc::harness::BatchEstimator::new(code, queries)
                .map_err(|e| e.to_string())?
                .estimate(20_000, 1, 0)
                .map_err(|e| e.to_string())?;
            let lo = est.iter().map(|e| e.ci_lo).fold(0.0, f64::max);
            ensure!(lo <= p.lambda, "{}: lower bound {lo}", p.name);
            out.push(format!("{} (simulated) max lower bound {lo:.3}", p.name));
        }
    }
    Ok(out.join(", "))
}

/// Every simulated transmission meets the power constraint, phase-one
/// inputs are zero, and both ends see the same CR outcome.
pub fn check_power_and_cr_agreement(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0;
    for p in planned_codes() {
        let code = &p.code;
        let plan = code.plan();
        let tx = code.tx();
        for &pt in tx.constellation() {
            match plan.constraint {
                PowerConstraint::Peak(g) => ensure!(pt.abs() <= g, "{}: point {pt}", p.name),
                PowerConstraint::Average(g) => ensure!(pt * pt <= g, "{}: point {pt}", p.name),
            }
        }
        for i in 1..=code.identities().min(6) {
            let enc = code.make_encoder(i).map_err(|e| e.to_string())?;
            for _ in 0..200 {
                let t = transmit_feedback(&enc, &p.spec, &mut rng).map_err(|e| format!("{}: {e}", p.name))?;
                count += 1;
                let (x1, x2) = t.inputs.split_at(plan.n_cr);
                ensure!(x1.iter().all(|&x| x == 0.0), "{}: nonzero phase-one input", p.name);
                let sender = code.pimap().apply(&t.noise[..plan.n_cr]);
                let receiver = code.pimap().apply(&t.outputs[..plan.n_cr]);
                ensure!(sender == receiver, "{}: CR outcomes differ", p.name);
                let expected = match receiver {
                    CrOutcome::Failure => 0.0,
                    CrOutcome::Bin(l) => tx.point(code.color(i, l) as usize).unwrap(),
                };
                ensure!(x2.iter().all(|&x| x == expected), "{}: phase-two symbols", p.name);
            }
        }
    }
    Ok(format!("{count} transmissions"))
}

pub fn check_blocklength_independence() -> Check {
    let spec = gaussian(1.0);
    let opts = PlanOptions::default();
    let peak = PowerConstraint::Peak(5.0);
    let mut sizes = Vec::new();
    for m in [2u32, 4, 8, 16] {
        let p = plan(&spec, 0.2, peak, IdentityCount::ReedSolomon { q: 151, m }, &opts).map_err(|e| e.to_string())?;
        ensure!(p.rs_q == Some(151), "q moved to {:?}", p.rs_q);
        sizes.push(p.total_n);
    }
    ensure!(sizes.windows(2).all(|w| w[0] == w[1]), "total_n varies: {sizes:?}");
    Ok(format!("total_n = {} for m in 2, 4, 8, 16 at q = 151", sizes[0]))
}

pub fn small_config(seed: u64, trials: u64) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        r#"
noise.ac = {{ family = "gaussian", params = [0.0, 1.0] }}
code.lambda = 0.2
code.gamma = 5.0
code.n = 1000
sim.trials = {trials}
sim.seed = {seed}
sim.identities = 4
sim.pairs = 16
"#
    ))
    .unwrap()
}

pub fn check_reproducibility() -> Check {
    let mut config = small_config(42, 20_000);
    config.sim.threads = Some(1);
    let a = run_experiment(&config).map_err(|e| e.to_string())?;
    config.sim.threads = Some(3);
    let b = run_experiment(&config).map_err(|e| e.to_string())?;
    let mut a_norm = a.without_timing();
    a_norm.config.sim.threads = b.config.sim.threads;
    ensure!(a_norm == b.without_timing(), "reports differ across thread counts");
    let c = run_experiment(&config).map_err(|e| e.to_string())?;
    ensure!(b.without_timing() == c.without_timing(), "reports differ across runs");
    let mut a_json = Vec::new();
    let mut c_json = Vec::new();
    b.without_timing().write_json(&mut a_json).map_err(|e| e.to_string())?;
    c.without_timing().write_json(&mut c_json).map_err(|e| e.to_string())?;
    ensure!(a_json == c_json, "serialized reports differ");
    Ok("identical reports for 1 and 3 threads".into())
}

/// Coverage of 99% intervals on Bernoulli streams with known p.
pub fn check_ci_calibration(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for p in [0.01, 0.1, 0.5] {
        let reps = 1000;
        let n = 500;
        let mut covered = 0;
        for _ in 0..reps {
            let k = (0..n).filter(|_| rng.random_bool(p)).count() as u64;
            let (lo, hi) = clopper_pearson(k, n, 0.99);
            if lo <= p && p <= hi {
                covered += 1;
            }
        }
        ensure!(covered >= 980, "p = {p}: coverage {covered}/1000");
        out.push(format!("p={p}: {covered}/1000"));
    }
    Ok(out.join(", "))
}

/// Across many independent runs, the exact value lies inside the reported
/// interval for at least 98% of estimates.
pub fn check_oracle_consistency(runs: u64, trials: u64) -> Check {
    let mut inside = 0;
    let mut total = 0;
    for seed in 0..runs {
        let report = run_experiment(&small_config(1000 + seed, trials)).map_err(|e| e.to_string())?;
        for row in report.rows() {
            let oracle = row.oracle.ok_or("missing oracle")?;
            total += 1;
            if row.ci_lo <= oracle && oracle <= row.ci_hi {
                inside += 1;
            }
        }
    }
    let frac = inside as f64 / total as f64;
    ensure!(frac >= 0.98, "only {inside}/{total} intervals contain the exact value");
    Ok(format!("{inside}/{total} intervals contain the exact value"))
}

/// Builds the mixed CR map used in several places.
pub fn mixed_pimap(bins: u64) -> idfc::common_randomness::PiMap {
    build_pi_with_length(&atom_uniform(), bins, 4).unwrap()
}
