//! Estimators of the initial length density n₀ from senescence data.
//!
//! With an exact boundary flux the transport relation is inverted pointwise.
//! With a finite sample of senescence times the inversion is smoothed by a
//! Gaussian kernel in log coordinates, which keeps the estimate supported on
//! the half-line.

use crate::analytic::BoundaryFlux;
use crate::curve::DensityCurve;
use crate::distributions::ScaledParams;
use crate::error::{domain, Error, Result};
use crate::Dimension;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

// ρ(z) underflows to exactly 0 well before this
const KERNEL_CUTOFF: f64 = 40.0;

fn rho(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Observed senescence data.
#[derive(Clone)]
pub enum BoundaryData {
    /// Exact flux with tail accessor.
    Analytic(Arc<dyn BoundaryFlux>),
    /// Sorted, strictly increasing senescence times.
    Samples(Vec<f64>),
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryData::Analytic(_) => write!(f, "Analytic(..)"),
            BoundaryData::Samples(s) => write!(f, "Samples(n = {})", s.len()),
        }
    }
}

impl BoundaryData {
    /// Sample data; see [`prepare_times`].
    pub fn samples(times: &[f64]) -> Result<Self> {
        Ok(BoundaryData::Samples(prepare_times(times)?))
    }
}

/// Sorts the times and nudges repeated values up by one ulp so that every
/// logarithm is distinct.
pub fn prepare_times(times: &[f64]) -> Result<Vec<f64>> {
    if times.is_empty() {
        return domain("no senescence times");
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return domain(format!("senescence times must be positive and finite, got {t}"));
    }
    let mut v = times.to_vec();
    v.sort_by(f64::total_cmp);
    for i in 1..v.len() {
        if v[i] <= v[i - 1] {
            v[i] = v[i - 1].next_up();
        }
    }
    Ok(v)
}

/// `(1/(bm1)) n_∂(x/(bm1))`.
pub fn hat_n0_1(data: &BoundaryData, speed: f64, x: f64) -> Result<f64> {
    match data {
        BoundaryData::Analytic(f) => {
            if x < 0.0 {
                return domain("x must be nonnegative");
            }
            Ok(f.density(x / speed) / speed)
        }
        BoundaryData::Samples(_) => Err(Error::WrongEstimator(
            "sampled senescence times need the smoothed estimator bar_n0_1".into(),
        )),
    }
}

/// `n_∂(2x/(bm1)) / (k bm1 [∫_{2x/(bm1)}^∞ n_∂]^{1-1/(2k)})`.
pub fn hat_n0_2k(data: &BoundaryData, k: u32, speed: f64, x: f64) -> Result<f64> {
    let f = match data {
        BoundaryData::Analytic(f) => f,
        BoundaryData::Samples(_) => {
            return Err(Error::WrongEstimator(
                "sampled senescence times need the smoothed estimator bar_n0_2k".into(),
            ))
        }
    };
    if x < 0.0 {
        return domain("x must be nonnegative");
    }
    if k == 0 {
        return domain("k must be at least 1");
    }
    let t = 2.0 * x / speed;
    let tail = f.tail(t);
    if !(tail > 0.0) {
        // tail is nonincreasing; locate where it vanishes
        let (mut lo, mut hi) = (0.0, x);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f.tail(2.0 * mid / speed) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Err(Error::Singular { largest_safe_x: lo });
    }
    let expo = 1.0 - 1.0 / (2.0 * k as f64);
    Ok(f.density(t) / (k as f64 * speed * tail.powf(expo)))
}

/// Mixture `Σ ω_i (1/(αx)) ρ(ln(x/c_i)/α)` with sorted centers `c_i`.
#[derive(Debug, Clone)]
pub struct LogKde {
    log_centers: Vec<f64>,
    weights: Vec<f64>,
    alpha: f64,
}

impl LogKde {
    /// One-telomere estimator: centers `bm1·T_i`, weights `1/n_s`.
    pub fn one_telomere(times: &[f64], speed: f64, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let t = prepare_times(times)?;
        let n = t.len() as f64;
        Ok(LogKde {
            log_centers: t.iter().map(|t| (speed * t).ln()).collect(),
            weights: vec![1.0 / n; t.len()],
            alpha,
        })
    }

    /// 2k-telomere estimator: centers `bm1·T_i/2`, weights
    /// `(1-(i-1)/n_s)^{1/(2k)} - (1-i/n_s)^{1/(2k)}`.
    pub fn multi_telomere(times: &[f64], k: u32, speed: f64, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if k == 0 {
            return domain("k must be at least 1");
        }
        let t = prepare_times(times)?;
        let n = t.len() as f64;
        let e = 1.0 / (2.0 * k as f64);
        let w = |j: usize| (1.0 - j as f64 / n).max(0.0).powf(e);
        Ok(LogKde {
            log_centers: t.iter().map(|t| (0.5 * speed * t).ln()).collect(),
            weights: (1..=t.len()).map(|i| w(i - 1) - w(i)).collect(),
            alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    // indices of centers within the kernel cutoff of ln x
    fn window(&self, lx: f64) -> std::ops::Range<usize> {
        let r = KERNEL_CUTOFF * self.alpha;
        let a = self.log_centers.partition_point(|&c| c < lx - r);
        let b = self.log_centers.partition_point(|&c| c <= lx + r);
        a..b
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return domain("log-domain estimators are defined for x > 0 only");
        }
        let lx = x.ln();
        let s: f64 = self
            .window(lx)
            .map(|i| self.weights[i] * rho((lx - self.log_centers[i]) / self.alpha))
            .sum();
        Ok(s / (self.alpha * x))
    }

    /// `x² f'(x) + x f(x)` for this estimate f, from the kernel's derivative.
    pub fn moment_derivative(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return domain("log-domain estimators are defined for x > 0 only");
        }
        let lx = x.ln();
        let s: f64 = self
            .window(lx)
            .map(|i| {
                let z = (lx - self.log_centers[i]) / self.alpha;
                self.weights[i] * z * rho(z)
            })
            .sum();
        Ok(-s / (self.alpha * self.alpha))
    }

    /// Evaluates on `n` nodes `x_max·i/(n-1)`, `i = 1..n-1` (zero excluded).
    pub fn curve(&self, x_max: f64, n: usize) -> Result<DensityCurve> {
        positive_grid_curve(x_max, n, |x| self.eval(x))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return domain(format!("smoothing parameter must be positive, got {alpha}"));
    }
    Ok(())
}

fn positive_grid_curve<F: Fn(f64) -> Result<f64>>(x_max: f64, n: usize, f: F) -> Result<DensityCurve> {
    if n < 3 || !(x_max > 0.0) {
        return domain("output grid needs x_max > 0 and at least three points");
    }
    let dx = x_max / (n - 1) as f64;
    let values = (1..n).map(|i| f(i as f64 * dx)).collect::<Result<Vec<_>>>()?;
    DensityCurve::new(dx, dx, values)
}

/// One-telomere smoothed estimate at `x`.
pub fn bar_n0_1(times: &[f64], speed: f64, alpha: f64, x: f64) -> Result<f64> {
    LogKde::one_telomere(times, speed, alpha)?.eval(x)
}

/// 2k-telomere smoothed estimate at `x`.
pub fn bar_n0_2k(times: &[f64], k: u32, speed: f64, alpha: f64, x: f64) -> Result<f64> {
    LogKde::multi_telomere(times, k, speed, alpha)?.eval(x)
}

/// `sup |x² f'(x) + x f(x)|` over a uniform grid, with centered differences
/// of step equal to the grid spacing.
pub fn c_hat_from_fn<F: Fn(f64) -> f64>(f: F, grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return domain("grid needs two points");
    }
    let h = grid[1] - grid[0];
    Ok(grid
        .iter()
        .map(|&x| {
            let lo = (x - h).max(0.0);
            let d = (f(x + h) - f(lo)) / (x + h - lo);
            (x * x * d + x * f(x)).abs()
        })
        .fold(0.0, f64::max))
}

/// The same supremum for a smoothed estimate, using its exact derivative.
pub fn c_hat_from_kde(kde: &LogKde, grid: &[f64]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for &x in grid.iter().filter(|&&x| x > 0.0) {
        best = best.max(kde.moment_derivative(x)?.abs());
    }
    Ok(best)
}

/// `sup_u |u(1-u)e^{-u}|`, the value of the supremum for any exponential
/// estimate `β e^{-βx}`; attained at `u = (3+√5)/2`.
pub fn c_hat_exponential() -> f64 {
    let u = 0.5 * (3.0 + 5f64.sqrt());
    (u * (1.0 - u) * (-u).exp()).abs()
}

/// Smoothing parameter balancing the DKW radius against the smoothing bias.
pub fn smoothing_alpha_p(c_hat: f64, n_s: usize, p: f64, dimension: Dimension) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return domain(format!("confidence level p must lie in (0, 1], got {p}"));
    }
    if n_s == 0 {
        return domain("need at least one sample");
    }
    if !(c_hat > 0.0 && c_hat.is_finite()) {
        return domain("the derivative constant must be positive");
    }
    let base = (2.0 / p).ln() / (2.0 * n_s as f64);
    let expo = match dimension {
        Dimension::One => 0.25,
        Dimension::Multi(k) => 1.0 / (8.0 * k.get() as f64),
    };
    Ok(base.powf(expo) / c_hat.sqrt())
}

/// Output grid of an estimation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputGrid {
    pub x_max: f64,
    pub n_points: usize,
}

/// An estimator run: data, model, smoothing and output grid.
#[derive(Debug, Clone)]
pub struct EstimationJob {
    pub data: BoundaryData,
    pub dimension: Dimension,
    pub params: ScaledParams,
    /// Used for sampled data only.
    pub alpha: f64,
    pub grid: OutputGrid,
}

impl EstimationJob {
    /// Runs the estimator matching the data kind and dimension.
    pub fn run(&self) -> Result<DensityCurve> {
        let speed = self.params.transport_speed();
        let OutputGrid { x_max, n_points } = self.grid;
        match (&self.data, self.dimension) {
            (BoundaryData::Analytic(_), Dimension::One) => {
                DensityCurve::try_from_fn(0.0, x_max, n_points, |x| hat_n0_1(&self.data, speed, x))
            }
            (BoundaryData::Analytic(_), Dimension::Multi(k)) => {
                DensityCurve::try_from_fn(0.0, x_max, n_points, |x| hat_n0_2k(&self.data, k.get(), speed, x))
            }
            (BoundaryData::Samples(t), Dimension::One) => {
                LogKde::one_telomere(t, speed, self.alpha)?.curve(x_max, n_points)
            }
            (BoundaryData::Samples(t), Dimension::Multi(k)) => {
                LogKde::multi_telomere(t, k.get(), speed, self.alpha)?.curve(x_max, n_points)
            }
        }
    }

    /// Plain `key = value` description of the run.
    pub fn write_metadata<W: Write>(&self, mut w: W) -> Result<()> {
        let (kind, n_s) = match &self.data {
            BoundaryData::Analytic(_) => ("analytic", 0),
            BoundaryData::Samples(s) => ("samples", s.len()),
        };
        writeln!(w, "data = {kind}")?;
        if n_s > 0 {
            writeln!(w, "n_samples = {n_s}")?;
            writeln!(w, "alpha = {}", self.alpha)?;
        }
        writeln!(w, "dimension = {}", self.dimension)?;
        writeln!(w, "b = {}", self.params.b())?;
        writeln!(w, "N = {}", self.params.n())?;
        writeln!(w, "m1 = {}", self.params.law().m1())?;
        writeln!(w, "transport_speed = {}", self.params.transport_speed())?;
        writeln!(w, "x_max = {}", self.grid.x_max)?;
        writeln!(w, "n_points = {}", self.grid.n_points)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{ExponentialCase, TransportSolution};
    use crate::distributions::{ErlangLaw, InitialDistribution, ShorteningLaw};
    use crate::quad;

    fn params() -> ScaledParams {
        ScaledParams::new(1.0, 40.0, ShorteningLaw::uniform(1.0).unwrap()).unwrap()
    }

    #[test]
    fn exponential_boundary_gives_exponential_estimate() {
        let p = params();
        let e = ExponentialCase::new(&p, Dimension::One, 4.0).unwrap();
        let data = BoundaryData::Analytic(Arc::new(e));
        for x in [0.0, 0.1, 0.5, 1.5] {
            let v = hat_n0_1(&data, p.transport_speed(), x).unwrap();
            assert!((v - e.hat_n0(x)).abs() < 1e-12);
        }
        let e2 = ExponentialCase::new(&p, Dimension::multi(3).unwrap(), 4.0).unwrap();
        let data = BoundaryData::Analytic(Arc::new(e2));
        for x in [0.0, 0.1, 0.5, 1.5] {
            let v = hat_n0_2k(&data, 3, p.transport_speed(), x).unwrap();
            assert!((v - e2.hat_n0(x)).abs() < 1e-10 * e2.hat_n0(x));
        }
    }

    #[test]
    fn transport_data_recovers_initial_density() {
        let p = params();
        let n0 = InitialDistribution::erlang(ErlangLaw::new(2, 1.5).unwrap()).unwrap();
        for dim in [Dimension::One, Dimension::multi(4).unwrap()] {
            let sol = TransportSolution::new(&p, n0.clone(), dim);
            let data = BoundaryData::Analytic(Arc::new(sol));
            for x in [0.05, 0.5, 1.0, 3.0] {
                let v = match dim {
                    Dimension::One => hat_n0_1(&data, p.transport_speed(), x),
                    Dimension::Multi(k) => hat_n0_2k(&data, k.get(), p.transport_speed(), x),
                }
                .unwrap();
                assert!((v - n0.pdf(x)).abs() < 1e-8 * (1.0 + n0.pdf(x)), "{x}");
            }
        }
    }

    #[test]
    fn samples_with_exact_estimators_are_rejected() {
        let data = BoundaryData::samples(&[1.0, 2.0]).unwrap();
        assert!(matches!(hat_n0_1(&data, 0.5, 1.0), Err(Error::WrongEstimator(_))));
        assert!(matches!(hat_n0_2k(&data, 2, 0.5, 1.0), Err(Error::WrongEstimator(_))));
    }

    #[test]
    fn vanishing_tail_reports_safe_x() {
        struct Cut;
        impl BoundaryFlux for Cut {
            fn density(&self, t: f64) -> f64 {
                if t < 2.0 { 0.5 } else { 0.0 }
            }
            fn tail(&self, t: f64) -> f64 {
                (1.0 - 0.5 * t).max(0.0)
            }
        }
        let data = BoundaryData::Analytic(Arc::new(Cut));
        match hat_n0_2k(&data, 1, 1.0, 5.0) {
            Err(Error::Singular { largest_safe_x }) => assert!((largest_safe_x - 1.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kde_integrates_to_one() {
        let times = [0.3, 0.7, 0.71, 1.9, 4.0];
        for alpha in [0.05, 0.3, 1.0] {
            let kde = LogKde::one_telomere(&times, 0.5, alpha).unwrap();
            let v = quad::integrate_to_infinity(&|x: f64| if x > 0.0 { kde.eval(x).unwrap() } else { 0.0 }, 0.0, 1e-10);
            assert!((v - 1.0).abs() < 1e-6, "{alpha} {v}");
            let kde = LogKde::multi_telomere(&times, 3, 0.5, alpha).unwrap();
            let v = quad::integrate_to_infinity(&|x: f64| if x > 0.0 { kde.eval(x).unwrap() } else { 0.0 }, 0.0, 1e-10);
            assert!((v - 1.0).abs() < 1e-6, "{alpha} {v}");
        }
    }

    #[test]
    fn kde_matches_literal_sums() {
        let times = [2.5, 0.4, 1.1, 0.9, 3.3, 0.05];
        let (speed, alpha, k) = (0.5, 0.2, 2u32);
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        for x in [0.01, 0.2, 0.5, 1.0, 2.0] {
            let lit1: f64 = sorted
                .iter()
                .map(|t| rho((x / (speed * t)).ln() / alpha) / (x * alpha))
                .sum::<f64>()
                / n as f64;
            assert!((bar_n0_1(&times, speed, alpha, x).unwrap() - lit1).abs() < 1e-13);
            // sentinel terms T_0 = 0 and T_{n+1} = ∞ vanish
            let term = |j: usize| {
                if j == 0 || j == n + 1 {
                    0.0
                } else {
                    rho((2.0 * x / (speed * sorted[j - 1])).ln() / alpha)
                }
            };
            let lit2: f64 = (0..=n)
                .map(|j| (1.0 - j as f64 / n as f64).powf(1.0 / (2 * k) as f64) * (term(j + 1) - term(j)) / (alpha * x))
                .sum();
            assert!((bar_n0_2k(&times, k, speed, alpha, x).unwrap() - lit2).abs() < 1e-13);
        }
        assert!(bar_n0_1(&times, speed, alpha, 0.0).is_err());
        assert!(bar_n0_1(&times, speed, -1.0, 1.0).is_err());
    }

    #[test]
    fn duplicate_times_are_separated() {
        let t = prepare_times(&[2.0, 1.0, 2.0, 2.0]).unwrap();
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(prepare_times(&[]).is_err());
        assert!(prepare_times(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn c_hat_closed_form_vs_differences() {
        let bn = 3.8699;
        let grid: Vec<f64> = (0..20_001).map(|i| i as f64 * 1e-4).collect();
        let c = c_hat_from_fn(|x| bn * (-bn * x).exp(), &grid).unwrap();
        assert!((c - c_hat_exponential()).abs() < 1e-5);
    }

    #[test]
    fn kde_derivative_constant_vs_differences() {
        let kde = LogKde::one_telomere(&[0.3, 0.5, 0.9, 1.4], 0.5, 0.3).unwrap();
        let grid: Vec<f64> = (1..4001).map(|i| i as f64 * 5e-4).collect();
        let a = c_hat_from_kde(&kde, &grid).unwrap();
        let b = c_hat_from_fn(|x| kde.eval(x.max(1e-12)).unwrap(), &grid).unwrap();
        assert!((a - b).abs() < 1e-3 * a);
    }

    #[test]
    fn alpha_p_examples() {
        let c = c_hat_exponential();
        let a = smoothing_alpha_p(c, 3000, 0.1, Dimension::One).unwrap();
        let eps = ((20f64).ln() / 6000.0).sqrt();
        // minimizer of α ↦ ε/α + αC
        assert!((a - (eps / c).sqrt()).abs() < 1e-14);
        let a1 = smoothing_alpha_p(c, 3000, 1.0, Dimension::One).unwrap();
        assert!(a1 < a);
        assert!(smoothing_alpha_p(c, 3000, 1e-300, Dimension::One).unwrap() > a);
        assert!(smoothing_alpha_p(c, 3000, 0.0, Dimension::One).is_err());
        assert!(smoothing_alpha_p(c, 3000, 1.5, Dimension::One).is_err());
    }
}
