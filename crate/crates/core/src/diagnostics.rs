//! Convergence diagnostics and goodness-of-fit statistics.

use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Effective sample size by Geyer's initial positive sequence.
///
/// Autocorrelations are summed in adjacent pairs until a pair sum is no longer
/// positive. The result is clipped to the trace length.
pub fn effective_sample_size(trace: &[f64]) -> Result<f64> {
    let n = trace.len();
    if n < 10 {
        return Err(Error::InvalidParameter(format!("ESS needs at least 10 draws, got {n}")));
    }
    let nf = n as f64;
    let mean = trace.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = trace.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / nf;
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::Degenerate("trace is constant".into()));
    }
    let autocorr = |lag: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..n - lag {
            s += centered[i] * centered[i + lag];
        }
        s / nf / c0
    };
    let mut sum_pairs = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = autocorr(2 * m) + autocorr(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        sum_pairs += pair;
        m += 1;
    }
    let tau = -1.0 + 2.0 * sum_pairs;
    if tau <= 0.0 {
        return Ok(nf);
    }
    Ok((nf / tau).min(nf))
}

#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail probability with Stephens' small-sample correction.
fn kolmogorov_p(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(draws: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut v = draws.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsResult { statistic: d, p_value: kolmogorov_p(d, n) }
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|u, v| u.total_cmp(v));
    y.sort_by(|u, v| u.total_cmp(v));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = x[i].min(y[j]);
        while i < n && x[i] <= t {
            i += 1;
        }
        while j < m && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    KsResult { statistic: d, p_value: kolmogorov_p(d, n_eff) }
}

/// CDF of the inverse-gamma distribution with shape `a` and scale `b`.
pub fn inverse_gamma_cdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_ur(a, b / x)
    }
}

/// Geweke-style z-score comparing the mean of independent draws with the mean
/// of a Markov chain, whose variance is inflated by its effective sample size.
pub fn geweke_z(independent: &[f64], chain: &[f64]) -> Result<f64> {
    let (m1, v1) = mean_var(independent);
    let (m2, v2) = mean_var(chain);
    let ess = effective_sample_size(chain)?;
    let se = (v1 / independent.len() as f64 + v2 / ess).sqrt();
    if !(se > 0.0) {
        return Err(Error::Degenerate("zero standard error".into()));
    }
    Ok((m1 - m2) / se)
}

pub(crate) fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    #[test]
    fn ess_iid_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trace: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ess = effective_sample_size(&trace).unwrap();
        assert!((8_000.0..=10_500.0).contains(&ess), "ess = {ess}");
    }

    #[test]
    fn ess_ar1_matches_analytic_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let phi = 0.9;
        let mut x = 0.0;
        let trace: Vec<f64> = (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + e;
                x
            })
            .collect();
        let ess = effective_sample_size(&trace).unwrap();
        let analytic = n as f64 * (1.0 - phi) / (1.0 + phi);
        assert!(ess > analytic / 1.5 && ess < analytic * 1.5, "ess = {ess}, analytic = {analytic}");
    }

    #[test]
    fn ess_antithetic_is_clipped() {
        let trace: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(effective_sample_size(&trace).unwrap(), 1000.0);
    }

    #[test]
    fn ess_errors() {
        assert!(matches!(effective_sample_size(&[2.0; 50]), Err(Error::Degenerate(_))));
        assert!(effective_sample_size(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn ks_accepts_uniform_and_rejects_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = Uniform::new(0.0, 1.0).unwrap();
        let draws: Vec<f64> = (0..10_000).map(|_| u.sample(&mut rng)).collect();
        assert!(ks_one_sample(&draws, |x| x.clamp(0.0, 1.0)).p_value > 0.01);
        let shifted: Vec<f64> = draws.iter().map(|x| x * 0.95).collect();
        assert!(ks_one_sample(&shifted, |x| x.clamp(0.0, 1.0)).p_value < 0.01);
        let other: Vec<f64> = (0..10_000).map(|_| u.sample(&mut rng)).collect();
        assert!(ks_two_sample(&draws, &other).p_value > 0.01);
        assert!(ks_two_sample(&draws, &shifted).p_value < 0.01);
    }

    #[test]
    fn inverse_gamma_cdf_limits() {
        assert_eq!(inverse_gamma_cdf(0.0, 2.0, 1.0), 0.0);
        assert!(inverse_gamma_cdf(1e9, 2.0, 1.0) > 0.999_999);
        // Exponential case: IG(1, b) has CDF exp(-b / x).
        assert!((inverse_gamma_cdf(2.0, 1.0, 1.0) - (-0.5f64).exp()).abs() < 1e-12);
    }
}
