//! Statistical helpers: exact binomial intervals, chi-square and
//! Kolmogorov-Smirnov goodness-of-fit checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::beta::inv_beta_reg;

/// Two-sided Clopper-Pearson interval for `successes` out of `trials` at
/// confidence `level` (e.g. 0.99).
pub fn clopper_pearson(successes: u64, trials: u64, level: f64) -> (f64, f64) {
    assert!(trials > 0 && successes <= trials);
    let alpha = 1.0 - level;
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        inv_beta_reg(k, n - k + 1.0, alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        inv_beta_reg(k + 1.0, n - k, 1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Pearson chi-square statistic against the uniform law on `counts.len()`
/// cells, with its upper-tail p-value.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let cells = counts.len();
    assert!(cells >= 2);
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / cells as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dist = ChiSquared::new((cells - 1) as f64).expect("positive dof");
    (stat, dist.sf(stat))
}

/// Kolmogorov-Smirnov distance between the empirical cdf of `samples` and
/// `cdf`. Sorts `samples` in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    d
}

/// Large-sample critical value of the KS distance at significance `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
