//! Prior densities, prior samplers and conjugate updates for the shared parameters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Inverse-gamma draws are clamped to this range; beyond it the
/// corresponding component carries no likelihood information anyway.
pub const IG_DRAW_MAX: f64 = 1e100;
const IG_DRAW_MIN: f64 = 1e-100;

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Inverse-Wishart degrees of freedom; `K + 2` when unset.
    pub nu: Option<f64>,
    /// Inverse-Wishart scale; identity when unset.
    pub phi: Option<Vec<Vec<f64>>>,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_lambda: f64,
    pub b_lambda: f64,
    /// Upper bound of the uniform threshold prior.
    pub b_t: f64,
    /// Symmetric Dirichlet concentration of the DM allocation model.
    pub eta: f64,
    /// Success probability of the geometric prior on the number of clusters.
    pub rho: f64,
    /// Pitman-Yor total mass.
    pub alpha: f64,
    /// Pitman-Yor discount.
    pub d: f64,
    /// Inverse-gamma prior of the diagonal relatedness entries under clustering;
    /// defaults to `(a_tau, b_tau)`.
    pub a_omega: Option<f64>,
    pub b_omega: Option<f64>,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            nu: None,
            phi: None,
            a_sigma: 0.01,
            b_sigma: 0.01,
            a_tau: 0.01,
            b_tau: 0.01,
            a_lambda: 0.01,
            b_lambda: 0.01,
            b_t: 1.0,
            eta: 1.0,
            rho: 0.5,
            alpha: 1.0,
            d: 0.25,
            a_omega: None,
            b_omega: None,
        }
    }
}

impl HyperParams {
    pub fn nu_for(&self, k: usize) -> f64 {
        self.nu.unwrap_or(k as f64 + 2.0)
    }

    pub fn phi_for(&self, k: usize) -> Result<DMatrix<f64>> {
        match &self.phi {
            None => Ok(DMatrix::identity(k, k)),
            Some(rows) => {
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(Error::Config(format!("phi must be {k} x {k}")));
                }
                Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
            }
        }
    }

    pub fn omega_shape(&self) -> f64 {
        self.a_omega.unwrap_or(self.a_tau)
    }

    pub fn omega_scale(&self) -> f64 {
        self.b_omega.unwrap_or(self.b_tau)
    }

    /// Checks admissibility for a model with `k` groups.
    pub fn validate(&self, k: usize) -> Result<()> {
        let positive = [
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_tau", self.a_tau),
            ("b_tau", self.b_tau),
            ("a_lambda", self.a_lambda),
            ("b_lambda", self.b_lambda),
            ("b_t", self.b_t),
            ("eta", self.eta),
            ("a_omega", self.omega_shape()),
            ("b_omega", self.omega_scale()),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !py_admissible(self.alpha, self.d) {
            return Err(Error::Config(format!(
                "Pitman-Yor parameters (alpha = {}, d = {}) are not admissible",
                self.alpha, self.d
            )));
        }
        let nu = self.nu_for(k);
        if !(nu > k as f64 - 1.0) {
            return Err(Error::Config(format!("nu = {nu} must exceed K - 1 = {}", k as f64 - 1.0)));
        }
        let phi = self.phi_for(k)?;
        if phi.cholesky().is_none() {
            return Err(Error::Config("phi is not positive definite".into()));
        }
        Ok(())
    }
}

/// `d in [0, 1)` with `alpha > -d`, or `d < 0` with `alpha = m |d|` for a positive integer `m`.
pub fn py_admissible(alpha: f64, d: f64) -> bool {
    if (0.0..1.0).contains(&d) {
        alpha > -d
    } else if d < 0.0 {
        let m = alpha / d.abs();
        m >= 1.0 - 1e-9 && (m - m.round()).abs() < 1e-9
    } else {
        false
    }
}

/// Parameters shared across groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedState {
    pub omega: DMatrix<f64>,
    pub tau: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub t_a: DMatrix<f64>,
    pub t_b: DMatrix<f64>,
}

impl SharedState {
    pub fn new(k: usize, p: usize, q: usize, threshold: f64) -> Self {
        Self {
            omega: DMatrix::identity(k, k),
            tau: DMatrix::from_element(p, p, 1.0),
            lambda: DMatrix::from_element(p, q, 1.0),
            t_a: DMatrix::from_element(p, p, threshold),
            t_b: DMatrix::from_element(p, q, threshold),
        }
    }
}

/// Inverse and log-determinant of a positive-definite matrix.
#[derive(Debug, Clone)]
pub struct PdFactor {
    pub inv: DMatrix<f64>,
    pub log_det: f64,
}

impl PdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("{}x{} matrix", m.nrows(), m.ncols())))?;
        let log_det = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        Ok(Self { inv: chol.inverse(), log_det })
    }

    /// `v' M^{-1} v`.
    pub fn quad(&self, v: &[f64]) -> f64 {
        let k = v.len();
        let mut out = 0.0;
        for i in 0..k {
            let mut row = 0.0;
            for j in 0..k {
                row += self.inv[(i, j)] * v[j];
            }
            out += v[i] * row;
        }
        out
    }
}

/// `log N(latent; 0, scale * omega)`.
pub fn log_prior_coeff_vector(latent: &[f64], scale: f64, omega: &DMatrix<f64>) -> Result<f64> {
    if omega.nrows() != latent.len() {
        return Err(Error::Dimension(format!(
            "latent vector has length {}, omega is {}x{}",
            latent.len(),
            omega.nrows(),
            omega.ncols()
        )));
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    let f = PdFactor::new(omega)?;
    Ok(log_prior_coeff_with(latent, scale, &f))
}

/// Same as [`log_prior_coeff_vector`] with a precomputed factor of `omega`.
pub fn log_prior_coeff_with(latent: &[f64], scale: f64, omega: &PdFactor) -> f64 {
    let k = latent.len() as f64;
    -0.5 * (k * (2.0 * PI * scale).ln() + omega.log_det + omega.quad(latent) / scale)
}

/// `log IG(x; shape, scale)` with density `b^a / Gamma(a) x^{-a-1} exp(-b / x)`.
pub fn log_inverse_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Draw from IG(shape, scale), clamped to `[1e-100, 1e100]`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    (scale / g).clamp(IG_DRAW_MIN, IG_DRAW_MAX)
}

/// Conjugate inverse-gamma posterior: each squared term counts for
/// `weight_per_term` observations, i.e. the shape grows by `weight_per_term / 2`
/// per term and the scale by half of each term.
pub fn conjugate_ig_update(
    prior_shape: f64,
    prior_scale: f64,
    sq_terms: &[f64],
    weight_per_term: f64,
) -> Result<(f64, f64)> {
    if !(prior_shape > 0.0 && prior_scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "inverse-gamma prior ({prior_shape}, {prior_scale}) must be positive"
        )));
    }
    if !(weight_per_term > 0.0) {
        return Err(Error::InvalidParameter(format!("weight per term must be positive, got {weight_per_term}")));
    }
    if let Some(bad) = sq_terms.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!("squared term {bad} is not a finite nonnegative number")));
    }
    let m = weight_per_term * sq_terms.len() as f64;
    Ok(ig_posterior(prior_shape, prior_scale, m, sq_terms.iter().sum()))
}

/// `(shape + m/2, scale + sum_sq/2)`.
#[inline]
pub fn ig_posterior(shape: f64, scale: f64, m: f64, sum_sq: f64) -> (f64, f64) {
    (shape + 0.5 * m, scale + 0.5 * sum_sq)
}

/// Multivariate log-gamma `log Gamma_k(a)`.
pub fn ln_multigamma(k: usize, a: f64) -> f64 {
    let mut out = (k * (k.saturating_sub(1))) as f64 / 4.0 * PI.ln();
    for j in 1..=k {
        out += ln_gamma(a + (1.0 - j as f64) / 2.0);
    }
    out
}

/// Draw from the inverse-Wishart `IW(nu, phi)` (mean `phi / (nu - K - 1)`), via
/// the Bartlett decomposition of `W(nu, phi^{-1})`.
pub fn sample_iw<R: Rng + ?Sized>(nu: f64, phi: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let k = phi.nrows();
    if !(nu > k as f64 - 1.0) {
        return Err(Error::InvalidParameter(format!("nu = {nu} must exceed K - 1")));
    }
    let phi_inv = PdFactor::new(phi)?.inv;
    let l = phi_inv
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("phi inverse".into()))?
        .l();
    let mut bart = DMatrix::zeros(k, k);
    for i in 0..k {
        let dof = nu - i as f64;
        let chi2: f64 = Gamma::new(dof / 2.0, 2.0).expect("positive dof").sample(rng);
        bart[(i, i)] = chi2.sqrt();
        for j in 0..i {
            bart[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let la = &l * bart;
    let wishart = &la * la.transpose();
    let out = PdFactor::new(&wishart)?.inv;
    Ok((&out + out.transpose()) * 0.5)
}

/// Draw `Omega* ~ IW(nu, phi)` and return `Omega* / Omega*_{11}`.
pub fn sample_constrained_iw<R: Rng + ?Sized>(nu: f64, phi: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    if phi.nrows() == 1 {
        return Ok(DMatrix::identity(1, 1));
    }
    let raw = sample_iw(nu, phi, rng)?;
    let mut out = &raw / raw[(0, 0)];
    out[(0, 0)] = 1.0;
    Ok(out)
}

/// Log density of `Omega = Omega* / Omega*_{11}`, `Omega* ~ IW(nu, phi)`, with
/// respect to Lebesgue measure on the free entries of `Omega` (upper triangle
/// without `(1,1)`). Integrating out the scale gives
///
/// ```text
/// p(Omega) = |phi|^{nu/2} Gamma(K nu / 2) / Gamma_K(nu / 2)
///            * tr(phi Omega^{-1})^{-K nu / 2} |Omega|^{-(nu + K + 1) / 2}
/// ```
pub fn log_constrained_iw_density(omega: &DMatrix<f64>, nu: f64, phi: &DMatrix<f64>) -> Result<f64> {
    let k = omega.nrows();
    if k == 1 {
        return Ok(0.0);
    }
    let f_omega = PdFactor::new(omega)?;
    let f_phi = PdFactor::new(phi)?;
    let kf = k as f64;
    let trace = (phi * &f_omega.inv).trace();
    Ok(0.5 * nu * f_phi.log_det - ln_multigamma(k, nu / 2.0) + ln_gamma(kf * nu / 2.0)
        - 0.5 * kf * nu * trace.ln()
        - 0.5 * (nu + kf + 1.0) * f_omega.log_det)
}

/// Draw a latent coefficient vector from `N(0, scale * omega)`.
pub fn sample_coeff_vector<R: Rng + ?Sized>(scale: f64, omega_chol_l: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let k = omega_chol_l.nrows();
    let z = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
    (omega_chol_l * z) * scale.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn normal_logpdf(x: f64, var: f64) -> f64 {
        -0.5 * ((2.0 * PI * var).ln() + x * x / var)
    }

    #[test]
    fn coeff_prior_trivial_cases() {
        let v = log_prior_coeff_vector(&[0.0], 1.0, &dmatrix![1.0]).unwrap();
        assert_abs_diff_eq!(v, -0.5 * (2.0 * PI).ln(), epsilon = 1e-14);
        let v = log_prior_coeff_vector(&[1.0, 1.0], 2.0, &DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(v, 2.0 * normal_logpdf(1.0, 2.0), epsilon = 1e-14);
    }

    #[test]
    fn coeff_prior_bivariate_formula() {
        // Direct bivariate normal density with unit variances and correlation r.
        let r: f64 = 0.5;
        let (x, y) = (1.0, -1.0);
        let oracle = -(2.0 * PI).ln() - 0.5 * (1.0 - r * r).ln()
            - (x * x - 2.0 * r * x * y + y * y) / (2.0 * (1.0 - r * r));
        let v = log_prior_coeff_vector(&[x, y], 1.0, &dmatrix![1.0, r; r, 1.0]).unwrap();
        assert_abs_diff_eq!(v, oracle, epsilon = 1e-12);
    }

    #[test]
    fn coeff_prior_rejects_non_pd() {
        assert!(log_prior_coeff_vector(&[0.0, 0.0], 1.0, &dmatrix![1.0, 2.0; 2.0, 1.0]).is_err());
    }

    #[test]
    fn ig_update_examples() {
        let (a, b) = conjugate_ig_update(0.3, 0.7, &[0.0; 10], 1.0).unwrap();
        assert_abs_diff_eq!(a, 5.3);
        assert_abs_diff_eq!(b, 0.7);
        assert_eq!(conjugate_ig_update(1.0, 1.0, &[2.0], 1.0).unwrap(), (1.5, 2.0));
        let f = PdFactor::new(&DMatrix::identity(2, 2)).unwrap();
        let sq = f.quad(&[1.0, 1.0]);
        assert_eq!(conjugate_ig_update(1.0, 1.0, &[sq], 2.0).unwrap(), (2.0, 2.0));
        assert!(conjugate_ig_update(0.0, 1.0, &[1.0], 1.0).is_err());
        assert!(conjugate_ig_update(1.0, 1.0, &[-1.0], 1.0).is_err());
    }

    #[test]
    fn constrained_iw_k1_and_k2_postconditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_constrained_iw(3.0, &dmatrix![2.5], &mut rng).unwrap(), dmatrix![1.0]);
        for _ in 0..100 {
            let o = sample_constrained_iw(4.0, &DMatrix::identity(2, 2), &mut rng).unwrap();
            assert_eq!(o[(0, 0)], 1.0);
            assert_eq!(o[(0, 1)], o[(1, 0)]);
            assert!(o.clone().cholesky().is_some());
        }
        assert!(sample_constrained_iw(0.5, &DMatrix::identity(2, 2), &mut rng).is_err());
        assert!(sample_constrained_iw(4.0, &dmatrix![1.0, 2.0; 2.0, 1.0], &mut rng).is_err());
    }

    /// Brute-force IW oracle: sum of `nu` outer products of N(0, phi^{-1}) vectors, inverted.
    fn oracle_iw_ratio(nu: usize, rng: &mut ChaCha8Rng) -> f64 {
        let mut w = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..nu {
            let z: DVector<f64> = DVector::from_fn(2, |_, _| StandardNormal.sample(rng));
            w += &z * z.transpose();
        }
        let inv = w.try_inverse().unwrap();
        inv[(1, 1)] / inv[(0, 0)]
    }

    #[test]
    fn constrained_iw_mean_matches_brute_force_oracle() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_constrained_iw(10.0, &DMatrix::identity(2, 2), &mut rng).unwrap()[(1, 1)])
            .collect();
        let mut orng = ChaCha8Rng::seed_from_u64(12);
        let oracle: Vec<f64> = (0..n).map(|_| oracle_iw_ratio(10, &mut orng)).collect();
        let (m1, v1) = mean_var(&draws);
        let (m2, v2) = mean_var(&oracle);
        let se = (v1 / n as f64 + v2 / n as f64).sqrt();
        assert!((m1 - m2).abs() < 3.0 * se, "{m1} vs {m2} (se {se})");
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    /// Integrates the constrained-IW density over (omega12, omega22) by quadrature.
    fn quadrature(nu: f64, phi: &DMatrix<f64>, g: impl Fn(f64, f64) -> f64) -> f64 {
        // omega12 = r, omega22 = r^2 + exp(u); Jacobian exp(u).
        let (nr, nu_grid) = (1200, 1200);
        let (r_lo, r_hi, u_lo, u_hi) = (-12.0, 12.0, -14.0, 8.0);
        let (dr, du) = ((r_hi - r_lo) / nr as f64, (u_hi - u_lo) / nu_grid as f64);
        let mut total = 0.0;
        for a in 0..nr {
            let r = r_lo + (a as f64 + 0.5) * dr;
            for b in 0..nu_grid {
                let u = u_lo + (b as f64 + 0.5) * du;
                let s = u.exp();
                let o = dmatrix![1.0, r; r, r * r + s];
                let dens = log_constrained_iw_density(&o, nu, phi).unwrap().exp();
                total += dens * s * g(r, r * r + s) * dr * du;
            }
        }
        total
    }

    #[test]
    fn constrained_iw_density_integrates_to_one() {
        let phi = dmatrix![1.5, 0.3; 0.3, 0.8];
        let mass = quadrature(10.0, &phi, |_, _| 1.0);
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn constrained_iw_density_matches_sampler_mean() {
        let phi = DMatrix::identity(2, 2);
        let quad_mean = quadrature(10.0, &phi, |_, o22| o22);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let draws: Vec<f64> =
            (0..n).map(|_| sample_constrained_iw(10.0, &phi, &mut rng).unwrap()[(1, 1)]).collect();
        let (m, v) = mean_var(&draws);
        assert!((m - quad_mean).abs() < 3.0 * (v / n as f64).sqrt(), "{m} vs {quad_mean}");
    }

    #[test]
    fn constrained_iw_is_scale_invariant_in_law() {
        let n = 40_000;
        let phi = dmatrix![1.0, 0.4; 0.4, 2.0];
        let mut r1 = ChaCha8Rng::seed_from_u64(21);
        let mut r2 = ChaCha8Rng::seed_from_u64(22);
        let a: Vec<f64> = (0..n).map(|_| sample_constrained_iw(6.0, &phi, &mut r1).unwrap()[(0, 1)]).collect();
        let scaled = &phi * 7.5;
        let b: Vec<f64> = (0..n).map(|_| sample_constrained_iw(6.0, &scaled, &mut r2).unwrap()[(0, 1)]).collect();
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        let se = (va / n as f64 + vb / n as f64).sqrt();
        assert!((ma - mb).abs() < 4.0 * se);
        let p = crate::diagnostics::ks_two_sample(&a, &b).p_value;
        assert!(p > 0.01, "two-sample KS p = {p}");
    }

    #[test]
    fn ig_draws_match_analytic_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (shape, scale) = ig_posterior(3.0, 2.0, 10.0, 7.0);
        let draws: Vec<f64> = (0..100_000).map(|_| sample_inverse_gamma(shape, scale, &mut rng)).collect();
        let ks = crate::diagnostics::ks_one_sample(&draws, |x| crate::diagnostics::inverse_gamma_cdf(x, shape, scale));
        assert!(ks.p_value > 0.01, "KS p = {}", ks.p_value);
    }

    #[test]
    fn ig_logpdf_integrates() {
        let (a, b) = (2.5, 1.3);
        let mut total = 0.0;
        let n = 200_000;
        let hi = 200.0;
        for i in 0..n {
            let x = (i as f64 + 0.5) * hi / n as f64;
            total += log_inverse_gamma_pdf(x, a, b).exp() * hi / n as f64;
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn py_admissibility() {
        assert!(py_admissible(1.0, 0.25));
        assert!(py_admissible(-0.2, 0.25));
        assert!(!py_admissible(-0.3, 0.25));
        assert!(py_admissible(1.0, 0.0));
        assert!(!py_admissible(1.0, 1.0));
        assert!(py_admissible(1.5, -0.5));
        assert!(!py_admissible(1.2, -0.5));
        assert!(HyperParams::default().validate(3).is_ok());
        let mut h = HyperParams::default();
        h.d = 1.5;
        assert!(matches!(h.validate(2), Err(Error::Config(_))));
    }
}
