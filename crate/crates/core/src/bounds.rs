//! Theoretical constants and error bounds.
//!
//! The constants c₁, d₁ and L_{d,N} assembled here are sufficient values
//! obtained by chaining explicit intermediate estimates. They are not sharp.

use crate::distributions::{ErlangLaw, InitialDistribution, ScaledParams};
use crate::error::{domain, Error, Result};
use crate::multitelomere::ChromosomeCount;
use crate::Dimension;
use statrs::function::gamma::ln_gamma;

/// Label attached to every assembled bound.
pub const SHARPNESS_NOTE: &str = "sufficient, not sharp";

/// Model parameters together with the decay rates derived from them.
#[derive(Debug, Clone)]
pub struct BoundContext {
    params: ScaledParams,
    n0: InitialDistribution,
    k: ChromosomeCount,
    lambda_n: f64,
    lambda_prime_n: f64,
    beta_prime_n: f64,
}

impl BoundContext {
    pub fn new(params: ScaledParams, n0: InitialDistribution, k: ChromosomeCount) -> Result<Self> {
        let lambda = n0.tail().lambda;
        let n = params.n();
        let m1 = params.law().m1();
        let l = params.law().laplace(lambda / n)?;
        let kk = k.get() as f64;
        let lambda_n = n / m1 * (1.0 - l);
        let lambda_prime_n = n / (kk * m1) * (1.0 - l.powi(k.get() as i32));
        let beta_prime_n = (2.0 * kk + 1.0) * lambda_prime_n - 2.0 * kk * n0.tail().omega;
        Ok(BoundContext { params, n0, k, lambda_n, lambda_prime_n, beta_prime_n })
    }

    pub fn params(&self) -> &ScaledParams {
        &self.params
    }

    pub fn n0(&self) -> &InitialDistribution {
        &self.n0
    }

    pub fn k(&self) -> ChromosomeCount {
        self.k
    }

    pub fn lambda(&self) -> f64 {
        self.n0.tail().lambda
    }

    pub fn omega(&self) -> f64 {
        self.n0.tail().omega
    }

    pub fn lambda_n(&self) -> f64 {
        self.lambda_n
    }

    pub fn lambda_prime_n(&self) -> f64 {
        self.lambda_prime_n
    }

    /// Decay rate of the 2k bound; nonpositive means no exponential decay.
    pub fn beta_prime_n(&self) -> f64 {
        self.beta_prime_n
    }

    pub fn decays(&self) -> bool {
        self.beta_prime_n > 0.0
    }

    fn d_omega(&self) -> Result<f64> {
        self.n0.tail().d_omega.ok_or_else(|| {
            Error::Infeasible(format!(
                "no lower exponential bound with rate ω = {} exists for this initial density",
                self.omega()
            ))
        })
    }

    /// Constant of the one-telomere pointwise bound.
    pub fn c1(&self) -> f64 {
        let t = self.n0.tail();
        let law = self.params.law();
        law.m2() * t.c_lambda.max(t.cprime_lambda) / (2.0 * law.m1())
    }

    /// Constant of the 2k pointwise bound.
    pub fn d1(&self) -> Result<f64> {
        let t = self.n0.tail();
        let law = self.params.law();
        let (lam, dl) = (t.lambda, t.d_lambda);
        let m2 = law.m2();
        let d0 = (t.cprime_lambda.powi(2)).max(t.c_lambda * lam * dl) * m2 / (lam * dl).powi(2);
        let d_tilde = 4.0 * lam * lam * law.delta() * law.delta();
        let d1p = (d0 * lam).max(t.cprime_lambda * m2 / (2.0 * dl)).max(d_tilde);
        Ok((d1p * self.d_omega()? + d0 * lam * dl) / law.m1())
    }

    /// `(D_λ/D_ω)^{2k}`.
    pub fn ratio_power(&self) -> Result<f64> {
        let r = self.n0.tail().d_lambda / self.d_omega()?;
        Ok(r.powi(2 * self.k.get() as i32))
    }

    /// Finite constant L_{1,N} for the Id-weighted error, `c₁ sup x(x+1)e^{-λ_N x}`.
    pub fn l_const_1(&self) -> f64 {
        let a = self.lambda_n;
        let x = ((2.0 - a) + (a * a + 4.0).sqrt()) / (2.0 * a);
        self.c1() * x * (x + 1.0) * (-a * x).exp()
    }

    /// Finite constant L_{2k,N}, `d₁(D_λ/D_ω)^{2k} sup x(k²x+k+1)e^{-β'_N x}`.
    pub fn l_const_2k(&self) -> Result<f64> {
        let b = self.require_decay()?;
        let k = self.k.get() as f64;
        // positive root of β'k²x² + (β'(k+1) - 2k²)x - (k+1)
        let (qa, qb, qc) = (b * k * k, b * (k + 1.0) - 2.0 * k * k, -(k + 1.0));
        let x = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        Ok(self.d1()? * self.ratio_power()? * x * (k * k * x + k + 1.0) * (-b * x).exp())
    }

    fn require_decay(&self) -> Result<f64> {
        if self.decays() {
            Ok(self.beta_prime_n)
        } else {
            Err(Error::Infeasible(format!(
                "the Lebesgue-norm bound needs (2k+1)λ'_N - 2kω > 0, got {}",
                self.beta_prime_n
            )))
        }
    }
}

/// `(c₁/N)(x+1)e^{-λ_N x}`.
pub fn pointwise_bound_1(ctx: &BoundContext, x: f64) -> Result<f64> {
    if x < 0.0 {
        return domain("x must be nonnegative");
    }
    Ok(ctx.c1() / ctx.params.n() * (x + 1.0) * (-ctx.lambda_n * x).exp())
}

/// Pointwise 2k bound and whether it decays in x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseBound {
    pub value: f64,
    pub decays: bool,
}

/// `(d₁/N)(D_λ/D_ω)^{2k}(k²x+k+1)e^{-(2k+1)λ'_N x + 2kωx}`.
pub fn pointwise_bound_2k(ctx: &BoundContext, x: f64) -> Result<PointwiseBound> {
    if x < 0.0 {
        return domain("x must be nonnegative");
    }
    let k = ctx.k.get() as f64;
    let value = ctx.d1()? / ctx.params.n()
        * ctx.ratio_power()?
        * (k * k * x + k + 1.0)
        * (-ctx.beta_prime_n * x).exp();
    Ok(PointwiseBound { value, decays: ctx.decays() })
}

/// Bound on the Id-weighted Lᵖ error of the exact estimator.
pub fn lp_norm_bound(ctx: &BoundContext, p: f64, dimension: Dimension) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return domain(format!("p must be positive and finite, got {p}"));
    }
    let g = (ln_gamma(p + 1.0) / p).exp();
    let n = ctx.params.n();
    match dimension {
        Dimension::One => {
            let a = ctx.lambda_n * p;
            Ok(ctx.c1() / n * (g / a.powf(1.0 + 1.0 / p) + 1.0 / a.powf(1.0 / p)))
        }
        Dimension::Multi(k) => {
            if k != ctx.k {
                return domain("dimension does not match the context's chromosome count");
            }
            let b = ctx.require_decay()? * p;
            let k = k.get() as f64;
            Ok(ctx.d1()? / n
                * ctx.ratio_power()?
                * (k * k * g / b.powf(1.0 + 1.0 / p) + (k + 1.0) / b.powf(1.0 / p)))
        }
    }
}

fn check_level(n_s: usize, p: f64) -> Result<f64> {
    if n_s == 0 {
        return domain("need at least one sample");
    }
    if !(p > 0.0 && p <= 1.0) {
        return domain(format!("confidence level p must lie in (0, 1], got {p}"));
    }
    Ok((2.0 / p).ln() / (2.0 * n_s as f64))
}

/// ε with `2 exp(-2 n_s ε²) = p`.
pub fn dkw_radius(n_s: usize, p: f64) -> Result<f64> {
    Ok(check_level(n_s, p)?.sqrt())
}

/// Radius used for the 2k survival-power estimate, `(ln(2/p)/(2n_s))^{1/(4k)}`.
pub fn dkw_radius_2k(n_s: usize, p: f64, k: ChromosomeCount) -> Result<f64> {
    Ok(check_level(n_s, p)?.powf(1.0 / (4.0 * k.get() as f64)))
}

/// `1 - exp(-x^ℓ)`.
pub fn weibull_limit_cdf(shape: u32, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x.powi(shape as i32)).exp_m1()
    }
}

/// Erlang quantile at level 1/(2k).
pub fn weibull_scale(shape: u32, rate: f64, k: ChromosomeCount) -> Result<f64> {
    ErlangLaw::new(shape, rate)?.quantile(1.0 / (2.0 * k.get() as f64))
}

/// Width of the confidence interval for the smoothed estimators, given the
/// derivative constant `c_hat` of the exact estimate.
pub fn confidence_bound(ctx: &BoundContext, c_hat: f64, p: f64, n_s: usize, dimension: Dimension) -> Result<f64> {
    let base = check_level(n_s, p)?;
    if !(c_hat >= 0.0) {
        return domain("the derivative constant must be nonnegative");
    }
    let (expo, l) = match dimension {
        Dimension::One => (0.25, ctx.l_const_1()),
        Dimension::Multi(k) => (1.0 / (8.0 * k.get() as f64), ctx.l_const_2k()?),
    };
    let lead = 2.0 * (2.0 / std::f64::consts::PI).sqrt() * c_hat.sqrt() * base.powf(expo);
    Ok(lead + l / ctx.params.n())
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return domain("empty sample");
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    Ok(s.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::ExponentialCase;
    use crate::distributions::ShorteningLaw;

    fn ctx(n: f64, shape: u32, rate: f64, k: u32) -> BoundContext {
        let p = ScaledParams::new(1.0, n, ShorteningLaw::uniform(1.0).unwrap()).unwrap();
        let n0 = InitialDistribution::erlang(ErlangLaw::new(shape, rate).unwrap()).unwrap();
        BoundContext::new(p, n0, ChromosomeCount::new(k).unwrap()).unwrap()
    }

    #[test]
    fn rates_ordered_and_converge() {
        for n in [1.0, 5.0, 40.0, 1e3] {
            for k in [1, 2, 5, 16] {
                let c = ctx(n, 2, 1.5, k);
                assert!(c.lambda_prime_n() <= c.lambda_n() + 1e-15);
                assert!(c.lambda_n() <= c.lambda());
            }
        }
        let c = ctx(1e5, 1, 4.0, 3);
        assert!((c.lambda_n() - 2.0).abs() < 1e-4);
        assert!((c.lambda_prime_n() - 2.0).abs() < 1e-3);
        // k = 1 gives identical rates
        let c = ctx(40.0, 1, 4.0, 1);
        assert!((c.lambda_prime_n() - c.lambda_n()).abs() < 1e-14);
    }

    #[test]
    fn c1_for_exponential_density() {
        let c = ctx(40.0, 1, 4.0, 1);
        // m2 = 1/3, m1 = 1/2, max(64, 16)
        assert!((c.c1() - 64.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn exact_error_is_dominated() {
        for n in [10.0, 20.0, 40.0] {
            let c = ctx(n, 1, 4.0, 1);
            let e = ExponentialCase::new(c.params(), Dimension::One, 4.0).unwrap();
            for i in 0..=2000 {
                let x = i as f64 * 0.005;
                let err = (e.hat_n0(x) - c.n0().pdf(x)).abs();
                assert!(err <= pointwise_bound_1(&c, x).unwrap(), "{n} {x}");
            }
        }
    }

    #[test]
    fn bound_halves_with_n() {
        let (a, b) = (ctx(20.0, 2, 1.5, 1), ctx(40.0, 2, 1.5, 1));
        // λ_N also moves with N, so compare at x = 0
        let r = pointwise_bound_1(&a, 0.0).unwrap() / pointwise_bound_1(&b, 0.0).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lp_p1_closed_form() {
        let c = ctx(40.0, 1, 4.0, 1);
        let l = c.lambda_n();
        let v = lp_norm_bound(&c, 1.0, Dimension::One).unwrap();
        assert!((v - c.c1() / 40.0 * (1.0 / (l * l) + 1.0 / l)).abs() < 1e-13);
        // large p stays finite thanks to log-gamma
        assert!(lp_norm_bound(&c, 400.0, Dimension::One).unwrap().is_finite());
        assert!(lp_norm_bound(&c, 0.0, Dimension::One).is_err());
    }

    #[test]
    fn lp_2k_requires_decay() {
        // ω = β keeps β'_N = (2k+1)λ'_N - 2kβ < 0 since λ'_N < β/2
        let c = ctx(40.0, 2, 1.5, 3);
        assert!(!c.decays());
        assert!(matches!(
            lp_norm_bound(&c, 2.0, Dimension::multi(3).unwrap()),
            Err(Error::Infeasible(_))
        ));
        let b = pointwise_bound_2k(&c, 1.0).unwrap();
        assert!(!b.decays && b.value > 0.0);
    }

    #[test]
    fn dkw_values() {
        let e = dkw_radius(3000, 0.1).unwrap();
        assert!((e - (20f64.ln() / 6000.0).sqrt()).abs() < 1e-15);
        assert!((e - 0.02234).abs() < 1e-5);
        let n = 50;
        let p = 2.0 * (-2.0 * n as f64).exp();
        assert!((dkw_radius(n, p).unwrap() - 1.0).abs() < 1e-12);
        assert!(dkw_radius(10, 0.0).is_err());
        assert!(dkw_radius(10, 1.1).is_err());
        assert!(dkw_radius(0, 0.5).is_err());
        let k = ChromosomeCount::new(2).unwrap();
        assert!((dkw_radius_2k(3000, 0.1, k).unwrap() - e.powf(0.25)).abs() < 1e-14);
    }

    #[test]
    fn weibull_helpers() {
        assert!((weibull_limit_cdf(1, 2.0) - (1.0 - (-2f64).exp())).abs() < 1e-15);
        assert_eq!(weibull_limit_cdf(2, -1.0), 0.0);
        let k = ChromosomeCount::new(5).unwrap();
        let s = weibull_scale(1, 4.0, k).unwrap();
        assert!((s - (-(1.0 - 0.1f64).ln() / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn confidence_monotone() {
        let c = ctx(40.0, 1, 4.0, 1);
        let a = confidence_bound(&c, 0.3, 0.1, 3000, Dimension::One).unwrap();
        let b = confidence_bound(&c, 0.3, 0.05, 3000, Dimension::One).unwrap();
        assert!(b > a);
        let far = confidence_bound(&ctx(1e6, 1, 4.0, 1), 0.3, 0.1, 1 << 40, Dimension::One).unwrap();
        assert!(far < 1e-2);
    }

    #[test]
    fn ks_of_exact_quantiles() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&s, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }
}
