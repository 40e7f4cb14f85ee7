//! Scalar laws: the shortening law g and its rescaling, the Erlang family
//! of initial densities, and the exponential tail constants of an initial
//! density.

use crate::curve::DensityCurve;
use crate::error::{domain, Error, Result};
use crate::quad;
use rand::Rng;
use statrs::function::gamma::ln_gamma;

// 5-point Gauss-Legendre rule on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

#[derive(Debug, Clone, PartialEq)]
enum LawKind {
    Uniform { lo: f64, hi: f64 },
    // piecewise-linear density on [0, delta], normalized
    Tabulated { dx: f64, density: Vec<f64>, cdf: Vec<f64> },
}

/// Law of the amount removed from a telomere at one division.
#[derive(Debug, Clone, PartialEq)]
pub struct ShorteningLaw {
    kind: LawKind,
    m1: f64,
    m2: f64,
}

impl ShorteningLaw {
    /// Uniform law on `[0, delta]`.
    pub fn uniform(delta: f64) -> Result<Self> {
        Self::uniform_between(0.0, delta)
    }

    /// Uniform law on `[lo, hi]` with `0 <= lo < hi`.
    pub fn uniform_between(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return domain(format!("uniform shortening law needs 0 <= lo < hi, got [{lo}, {hi}]"));
        }
        Ok(ShorteningLaw {
            kind: LawKind::Uniform { lo, hi },
            m1: 0.5 * (lo + hi),
            m2: (lo * lo + lo * hi + hi * hi) / 3.0,
        })
    }

    /// Density given by its values on a uniform grid starting at 0; it is
    /// interpolated linearly and renormalized to unit mass.
    pub fn tabulated(curve: &DensityCurve) -> Result<Self> {
        if curve.x0() != 0.0 || curve.len() < 2 {
            return domain("tabulated shortening density must start at 0 and have two nodes");
        }
        if curve.values().iter().any(|&v| v < 0.0) {
            return domain("tabulated shortening density must be nonnegative");
        }
        let mass = curve.integral();
        if !(mass > 0.0) {
            return domain("tabulated shortening density has zero mass");
        }
        let dx = curve.dx();
        let density: Vec<f64> = curve.values().iter().map(|v| v / mass).collect();
        let cdf = quad::cumulative_trapezoid(&density, dx);
        let mut law = ShorteningLaw {
            kind: LawKind::Tabulated { dx, density, cdf },
            m1: 0.0,
            m2: 0.0,
        };
        law.m1 = law.moment(1);
        law.m2 = law.moment(2);
        Ok(law)
    }

    /// Maximal shortening δ.
    pub fn delta(&self) -> f64 {
        match &self.kind {
            LawKind::Uniform { hi, .. } => *hi,
            LawKind::Tabulated { dx, density, .. } => dx * (density.len() - 1) as f64,
        }
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// `Some((lo, hi))` for uniform laws.
    pub fn uniform_bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            LawKind::Uniform { lo, hi } => Some((lo, hi)),
            _ => None,
        }
    }

    pub fn density(&self, u: f64) -> f64 {
        match &self.kind {
            LawKind::Uniform { lo, hi } => {
                if u >= *lo && u <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            LawKind::Tabulated { dx, density, .. } => {
                if !(0.0..=self.delta()).contains(&u) {
                    return 0.0;
                }
                let s = u / dx;
                let i = (s.floor() as usize).min(density.len() - 2);
                let w = s - i as f64;
                density[i] * (1.0 - w) + density[i + 1] * w
            }
        }
    }

    /// Distribution function G.
    pub fn cdf(&self, u: f64) -> f64 {
        match &self.kind {
            LawKind::Uniform { lo, hi } => ((u - lo) / (hi - lo)).clamp(0.0, 1.0),
            LawKind::Tabulated { dx, density, cdf } => {
                if u <= 0.0 {
                    return 0.0;
                }
                if u >= self.delta() {
                    return 1.0;
                }
                let s = u / dx;
                let i = (s.floor() as usize).min(density.len() - 2);
                let h = u - i as f64 * dx;
                let slope = (density[i + 1] - density[i]) / dx;
                (cdf[i] + density[i] * h + 0.5 * slope * h * h).min(1.0)
            }
        }
    }

    /// Laplace transform `∫ e^{-su} g(u) du`.
    pub fn laplace(&self, s: f64) -> Result<f64> {
        self.laplace_derivative(0, s)
    }

    /// `j`-th derivative in `s` of the Laplace transform, i.e.
    /// `∫ (-u)^j e^{-su} g(u) du`.
    pub fn laplace_derivative(&self, j: u32, s: f64) -> Result<f64> {
        if !(s >= 0.0) || !s.is_finite() {
            return domain(format!("Laplace variable must be a finite nonnegative number, got {s}"));
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        Ok(match &self.kind {
            LawKind::Uniform { lo, hi } => {
                if j == 0 {
                    let w = hi - lo;
                    (-s * lo).exp() * phi(s * w)
                } else {
                    sign * uniform_power_exp_integral(j, s, *lo, *hi) / (hi - lo)
                }
            }
            LawKind::Tabulated { .. } => {
                sign * self.gauss_segments(|u| u.powi(j as i32) * (-s * u).exp())
            }
        })
    }

    fn moment(&self, j: i32) -> f64 {
        self.gauss_segments(|u| u.powi(j))
    }

    // ∫ f(u) g(u) du for the tabulated density, Gauss-Legendre per cell
    fn gauss_segments<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        match &self.kind {
            LawKind::Tabulated { dx, density, .. } => {
                let mut acc = 0.0;
                for i in 0..density.len() - 1 {
                    let a = i as f64 * dx;
                    for (z, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
                        let t = 0.5 * (z + 1.0);
                        let dens = density[i] * (1.0 - t) + density[i + 1] * t;
                        acc += 0.5 * dx * w * dens * f(a + t * dx);
                    }
                }
                acc
            }
            LawKind::Uniform { lo, hi } => quad::integrate(&|u| f(u), *lo, *hi, 1e-14) / (hi - lo),
        }
    }

    /// Law of `c·V` when `V` follows this law.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return domain("scale factor must be positive");
        }
        Ok(match &self.kind {
            LawKind::Uniform { lo, hi } => Self::uniform_between(lo * c, hi * c)?,
            LawKind::Tabulated { dx, density, cdf } => ShorteningLaw {
                kind: LawKind::Tabulated {
                    dx: dx * c,
                    density: density.iter().map(|v| v / c).collect(),
                    cdf: cdf.clone(),
                },
                m1: self.m1 * c,
                m2: self.m2 * c * c,
            },
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p: f64 = rng.gen();
        match &self.kind {
            LawKind::Uniform { lo, hi } => lo + p * (hi - lo),
            LawKind::Tabulated { dx, density, cdf } => {
                let i = cdf.partition_point(|&c| c <= p).clamp(1, cdf.len() - 1) - 1;
                let r = p - cdf[i];
                let a = 0.5 * (density[i + 1] - density[i]) / dx;
                let b = density[i];
                // solve a h² + b h = r on the cell
                let h = if a.abs() < 1e-14 * (b + 1.0) {
                    if b > 0.0 {
                        r / b
                    } else {
                        0.0
                    }
                } else {
                    let disc = (b * b + 4.0 * a * r).max(0.0);
                    2.0 * r / (b + disc.sqrt())
                };
                (i as f64 * dx + h.clamp(0.0, *dx)).min(self.delta())
            }
        }
    }
}

// (1 - e^{-z})/z, stable near 0
fn phi(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        -(-z).exp_m1() / z
    }
}

// ∫_lo^hi u^j e^{-su} du
fn uniform_power_exp_integral(j: u32, s: f64, lo: f64, hi: f64) -> f64 {
    if s * hi <= 8.0 {
        let mut sum = 0.0;
        let mut fact = 1.0;
        for n in 0..400u32 {
            if n > 0 {
                fact *= -s / n as f64;
            }
            let p = (j + n + 1) as i32;
            let term = fact * (hi.powi(p) - lo.powi(p)) / p as f64;
            sum += term;
            if n > 4 && term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let (el, eh) = ((-s * lo).exp(), (-s * hi).exp());
        let mut acc = (el - eh) / s;
        for i in 1..=j {
            acc = (lo.powi(i as i32) * el - hi.powi(i as i32) * eh) / s + i as f64 / s * acc;
        }
        acc
    }
}

/// Shortening law together with the scaling parameter N: the observed
/// division rate is `b·N` and observed shortenings are `V/N` with V ~ g.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledParams {
    b: f64,
    n: f64,
    law: ShorteningLaw,
}

impl ScaledParams {
    pub fn new(b: f64, n: f64, law: ShorteningLaw) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return domain(format!("division rate must be positive, got {b}"));
        }
        if !(n > 0.0 && n.is_finite()) {
            return domain(format!("scaling parameter must be positive, got {n}"));
        }
        Ok(ScaledParams { b, n, law })
    }

    /// Builds the parameters from the observed rate and shortening law.
    pub fn from_observed(b_tilde: f64, law_tilde: &ShorteningLaw, n: f64) -> Result<Self> {
        if !(n > 0.0 && n.is_finite()) {
            return domain(format!("scaling parameter must be positive, got {n}"));
        }
        Self::new(b_tilde / n, n, law_tilde.scaled(n)?)
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn law(&self) -> &ShorteningLaw {
        &self.law
    }

    pub fn b_tilde(&self) -> f64 {
        self.b * self.n
    }

    pub fn delta_tilde(&self) -> f64 {
        self.law.delta() / self.n
    }

    pub fn m1_tilde(&self) -> f64 {
        self.law.m1() / self.n
    }

    pub fn m2_tilde(&self) -> f64 {
        self.law.m2() / (self.n * self.n)
    }

    pub fn g_tilde(&self, x: f64) -> f64 {
        self.n * self.law.density(self.n * x)
    }

    pub fn big_g_tilde(&self, x: f64) -> f64 {
        self.law.cdf(self.n * x)
    }

    /// Speed `b·m1` of the limiting transport toward zero.
    pub fn transport_speed(&self) -> f64 {
        self.b * self.law.m1()
    }

    /// One observed shortening `V/N`.
    pub fn sample_shortening<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.law.sample(rng) / self.n
    }
}

/// Erlang law with integer shape ℓ and rate β.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErlangLaw {
    shape: u32,
    rate: f64,
}

impl ErlangLaw {
    pub fn new(shape: u32, rate: f64) -> Result<Self> {
        if shape == 0 {
            return domain("Erlang shape must be at least 1");
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return domain(format!("Erlang rate must be positive, got {rate}"));
        }
        Ok(ErlangLaw { shape, rate })
    }

    /// Unit-mean Erlang law with coefficient of variation `cv`; `1/cv²`
    /// must be an integer.
    pub fn with_cv(cv: f64) -> Result<Self> {
        if !(cv > 0.0) {
            return domain("coefficient of variation must be positive");
        }
        let l = 1.0 / (cv * cv);
        let shape = l.round();
        if (l - shape).abs() > 1e-9 * l || shape < 1.0 {
            return domain(format!("1/cv² = {l} is not a positive integer"));
        }
        Self::new(shape as u32, shape)
    }

    pub fn shape(&self) -> u32 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mean(&self) -> f64 {
        self.shape as f64 / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape as f64 / (self.rate * self.rate)
    }

    pub fn cv(&self) -> f64 {
        1.0 / (self.shape as f64).sqrt()
    }

    fn ln_norm(&self) -> f64 {
        let l = self.shape as f64;
        l * self.rate.ln() - ln_gamma(l)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        let l = self.shape as f64;
        if self.shape == 1 {
            return self.rate.ln() - self.rate * x;
        }
        if x == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.ln_norm() + (l - 1.0) * x.ln() - self.rate * x
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Survival function `1 - H(x)`, as the finite Poisson sum.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let y = self.rate * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..self.shape {
            term *= y / j as f64;
            sum += term;
        }
        (sum.ln() - y).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let y = self.rate * x;
        if y < self.shape as f64 + 1.0 {
            // e^{-y} Σ_{j≥ℓ} y^j/j!, no cancellation for small y
            let l = self.shape as f64;
            let mut term = (l * y.ln() - y - ln_gamma(l + 1.0)).exp();
            let mut sum = 0.0;
            let mut j = l;
            while term > 1e-17 * sum || sum == 0.0 {
                sum += term;
                j += 1.0;
                term *= y / j;
                if term == 0.0 {
                    break;
                }
            }
            sum.min(1.0)
        } else {
            1.0 - self.survival(x)
        }
    }

    /// Inverse of the distribution function, to absolute tolerance 1e-12.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return domain(format!("quantile level must lie in (0, 1), got {p}"));
        }
        let mut lo = 0.0;
        let mut hi = self.mean().max(1.0 / self.rate);
        while self.cdf(hi) < p {
            lo = hi;
            hi *= 2.0;
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.cdf(x) - p;
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.pdf(x);
            let newton = if d > 0.0 { x - f / d } else { f64::NAN };
            let next = if newton >= lo && newton <= hi { newton } else { 0.5 * (lo + hi) };
            if next == x || hi - lo < 1e-13 * hi.max(1e-300) {
                break;
            }
            x = next;
        }
        Ok(x)
    }

    /// `order`-th derivative of the density.
    pub fn pdf_derivative(&self, order: u32, x: f64) -> f64 {
        self.weighted_derivative(order, x, 0.0)
    }

    /// `h^{(order)}(x)·e^{λx}`, evaluated in log scale to stay finite far
    /// in the tail.
    pub fn weighted_derivative(&self, order: u32, x: f64, lambda: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let m = self.shape - 1;
        let base = self.ln_norm() - (self.rate - lambda) * x;
        let mut acc = 0.0;
        for i in 0..=order.min(m) {
            // C(order, i) (-β)^{order-i} d^i/dx^i x^m
            let p = m - i;
            let ln_fall = ln_gamma(m as f64 + 1.0) - ln_gamma(p as f64 + 1.0);
            let ln_binom = ln_gamma(order as f64 + 1.0)
                - ln_gamma(i as f64 + 1.0)
                - ln_gamma((order - i) as f64 + 1.0);
            let k = order - i;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let ln_x = if p == 0 {
                0.0
            } else if x == 0.0 {
                continue;
            } else {
                p as f64 * x.ln()
            };
            acc += sign * (base + ln_binom + ln_fall + k as f64 * self.rate.ln() + ln_x).exp();
        }
        acc
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut s = 0.0;
        for _ in 0..self.shape {
            let u: f64 = rng.gen();
            s -= (1.0 - u).ln();
        }
        s / self.rate
    }
}

/// `‖h''‖` in L²(0, ∞).
pub fn second_derivative_l2_norm(law: &ErlangLaw) -> f64 {
    let f = |x: f64| law.pdf_derivative(2, x).powi(2);
    let sd = law.variance().sqrt();
    let cut1 = law.mean() + 2.0 * sd;
    let cut2 = law.mean() + 60.0 * sd + 60.0 / law.rate();
    let rough = quad::integrate(&f, 0.0, cut1, 1e-6) + quad::integrate(&f, cut1, cut2, 1e-6);
    let tol = 1e-10 * rough.max(1e-300);
    let v = quad::integrate(&f, 0.0, cut1, tol)
        + quad::integrate(&f, cut1, cut2, tol)
        + quad::integrate_to_infinity(&f, cut2, tol);
    v.sqrt()
}

/// Initial density given as a table on `[0, x_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    curve: DensityCurve,
    cdf: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(curve: DensityCurve) -> Result<Self> {
        if curve.x0() != 0.0 || curve.len() < 3 {
            return domain("tabulated initial density must start at 0 and have three nodes");
        }
        if curve.values().iter().any(|&v| v < 0.0) {
            return domain("tabulated initial density must be nonnegative");
        }
        let mass = curve.integral();
        if !(mass > 0.0) {
            return domain("tabulated initial density has zero mass");
        }
        let values: Vec<f64> = curve.values().iter().map(|v| v / mass).collect();
        let curve = DensityCurve::new(0.0, curve.dx(), values)?;
        let cdf = quad::cumulative_trapezoid(curve.values(), curve.dx());
        Ok(TabulatedDensity { curve, cdf })
    }

    pub fn curve(&self) -> &DensityCurve {
        &self.curve
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.curve.value_at(x)
    }

    // finite differences on the nodes, interpolated linearly
    fn node_derivative(&self, order: u32, i: usize) -> f64 {
        let v = self.curve.values();
        let h = self.curve.dx();
        let n = v.len();
        let i = i.clamp(1, n - 2);
        match order {
            0 => v[i],
            1 => (v[i + 1] - v[i - 1]) / (2.0 * h),
            _ => (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h),
        }
    }

    pub fn derivative(&self, order: u32, x: f64) -> f64 {
        if order == 0 {
            return self.pdf(x);
        }
        if x < 0.0 || x > self.curve.x_max() {
            return 0.0;
        }
        let s = x / self.curve.dx();
        let i = (s.floor() as usize).min(self.curve.len() - 2);
        let w = s - i as f64;
        self.node_derivative(order, i) * (1.0 - w) + self.node_derivative(order, i + 1) * w
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x >= self.curve.x_max() {
            return 0.0;
        }
        let h = self.curve.dx();
        let s = x / h;
        let i = (s.floor() as usize).min(self.curve.len() - 2);
        let r = x - i as f64 * h;
        let v = self.curve.values();
        let slope = (v[i + 1] - v[i]) / h;
        (1.0 - (self.cdf[i] + v[i] * r + 0.5 * slope * r * r)).clamp(0.0, 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p: f64 = rng.gen();
        let i = self.cdf.partition_point(|&c| c <= p).clamp(1, self.cdf.len() - 1) - 1;
        let h = self.curve.dx();
        let v = self.curve.values();
        let r = p - self.cdf[i];
        let a = 0.5 * (v[i + 1] - v[i]) / h;
        let b = v[i];
        let step = if a.abs() < 1e-14 * (b + 1.0) {
            if b > 0.0 {
                r / b
            } else {
                0.0
            }
        } else {
            2.0 * r / (b + (b * b + 4.0 * a * r).max(0.0).sqrt())
        };
        i as f64 * h + step.clamp(0.0, h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialForm {
    Erlang(ErlangLaw),
    Tabulated(TabulatedDensity),
}

impl InitialForm {
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            InitialForm::Erlang(e) => e.pdf(x),
            InitialForm::Tabulated(t) => t.pdf(x),
        }
    }

    pub fn derivative(&self, order: u32, x: f64) -> f64 {
        match self {
            InitialForm::Erlang(e) => e.pdf_derivative(order, x),
            InitialForm::Tabulated(t) => t.derivative(order, x),
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        match self {
            InitialForm::Erlang(e) => e.survival(x),
            InitialForm::Tabulated(t) => t.survival(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InitialForm::Erlang(e) => e.sample(rng),
            InitialForm::Tabulated(t) => t.sample(rng),
        }
    }
}

/// Exponential tail constants of an initial density n₀:
/// `|n₀''| ≤ C_λ e^{-λx}`, `|n₀'| ≤ C'_λ e^{-λx}`, `n₀ ≤ D_λ λ e^{-λx}`,
/// and the lower bound `n₀ ≥ D_ω f_ω e^{-ωx} / ∫ f_ω e^{-ωy} dy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailConstants {
    pub lambda: f64,
    pub c_lambda: f64,
    pub cprime_lambda: f64,
    pub d_lambda: f64,
    pub omega: f64,
    /// `None` when the lower bound could not be checked (tabulated n₀).
    pub d_omega: Option<f64>,
}

/// Initial telomere length density with its fitted tail constants.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDistribution {
    form: InitialForm,
    tail: TailConstants,
}

impl InitialDistribution {
    /// Erlang n₀ with the default choice λ = β/2, ω = β.
    pub fn erlang(law: ErlangLaw) -> Result<Self> {
        fit_tail_constants(InitialForm::Erlang(law), 0.5 * law.rate(), law.rate())
    }

    pub fn form(&self) -> &InitialForm {
        &self.form
    }

    pub fn tail(&self) -> &TailConstants {
        &self.tail
    }

    pub fn erlang_law(&self) -> Option<&ErlangLaw> {
        match &self.form {
            InitialForm::Erlang(e) => Some(e),
            _ => None,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.form.pdf(x)
    }

    pub fn derivative(&self, order: u32, x: f64) -> f64 {
        self.form.derivative(order, x)
    }

    pub fn survival(&self, x: f64) -> f64 {
        self.form.survival(x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.form.sample(rng)
    }

    /// The lower-bound profile f_ω, known for Erlang n₀ only.
    pub fn f_omega(&self, x: f64) -> Option<f64> {
        match &self.form {
            InitialForm::Erlang(e) => Some(x.powi(e.shape() as i32 - 1)),
            InitialForm::Tabulated(_) => None,
        }
    }
}

/// Geometric grid on `[0, x_max]`: zero followed by `n - 1` points from
/// `x_max·1e-10` to `x_max`.
pub fn geometric_grid(x_max: f64, n: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(n);
    g.push(0.0);
    let lo = x_max * 1e-10;
    let m = n - 1;
    for i in 0..m {
        g.push(lo * (x_max / lo).powf(i as f64 / (m - 1) as f64));
    }
    g
}

const VERIFY_POINTS: usize = 10_000;

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

// supremum of f ≥ 0 on the grid, refined around the best node
fn grid_sup<F: Fn(f64) -> f64>(f: &F, grid: &[f64]) -> f64 {
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
    for (i, &x) in grid.iter().enumerate() {
        let v = f(x);
        if v.is_nan() {
            return f64::NAN;
        }
        if v > best {
            best = v;
            arg = i;
        }
    }
    let a = grid[arg.saturating_sub(1)];
    let b = grid[(arg + 1).min(grid.len() - 1)];
    if b > a {
        best = best.max(golden_max(f, a, b));
    }
    best * (1.0 + 1e-12)
}

/// Fits the tail constants of n₀ for the given λ and ω.
pub fn fit_tail_constants(form: InitialForm, lambda: f64, omega: f64) -> Result<InitialDistribution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain("λ must be positive");
    }
    if !(omega >= lambda && omega.is_finite()) {
        return domain(format!("ω must satisfy ω ≥ λ, got ω = {omega}, λ = {lambda}"));
    }
    let tail = match &form {
        InitialForm::Erlang(e) => {
            let beta = e.rate();
            if lambda >= beta {
                return Err(Error::Infeasible(format!(
                    "λ = {lambda} must stay below the Erlang rate β = {beta}"
                )));
            }
            let w = |order: u32| move |x: f64| e.weighted_derivative(order, x, lambda).abs();
            let (f0, f1, f2) = (w(0), w(1), w(2));
            let mut x_max = (32.0 / lambda).max(2.0 * (e.shape() as f64 + 1.0) / (beta - lambda));
            let mut grid = geometric_grid(x_max, VERIFY_POINTS);
            for _ in 0..200 {
                let peak = [&f0, &f1, &f2]
                    .iter()
                    .map(|f| grid.iter().map(|&x| f(x)).fold(0.0, f64::max))
                    .fold(0.0, f64::max);
                let edge = f0(x_max).max(f1(x_max)).max(f2(x_max));
                if edge <= 1e-14 * peak {
                    break;
                }
                x_max *= 2.0;
                grid = geometric_grid(x_max, VERIFY_POINTS);
            }
            let c_lambda = grid_sup(&f2, &grid);
            let cprime_lambda = grid_sup(&f1, &grid);
            let d_lambda = (grid_sup(&f0, &grid) / lambda).max(1.0);
            // lower bound with f_ω = x^{ℓ-1}: n₀ / h_{ℓ,ω} = (β/ω)^ℓ e^{(ω-β)x}
            if omega < beta {
                return Err(Error::Infeasible(format!(
                    "no D_ω > 0 exists for ω = {omega} below the Erlang rate β = {beta}"
                )));
            }
            let d_omega = (beta / omega).powi(e.shape() as i32).min(1.0);
            let lower = ErlangLaw::new(e.shape(), omega)?;
            let shift = e.ln_pdf(0.0).max(lower.ln_pdf(0.0));
            for &x in grid.iter().filter(|&&x| x > 0.0) {
                let lhs = e.ln_pdf(x);
                let rhs = d_omega.ln() + lower.ln_pdf(x);
                if lhs.is_finite() && rhs > lhs + 1e-9 * (1.0 + shift.abs() + lhs.abs()) {
                    return Err(Error::Infeasible(format!("lower bound fails at x = {x}")));
                }
            }
            TailConstants {
                lambda,
                c_lambda,
                cprime_lambda,
                d_lambda,
                omega,
                d_omega: Some(d_omega),
            }
        }
        InitialForm::Tabulated(t) => {
            let grid: Vec<f64> = t.curve().grid().collect();
            let sup = |order: u32| {
                grid.iter()
                    .map(|&x| t.derivative(order, x).abs() * (lambda * x).exp())
                    .fold(0.0, f64::max)
            };
            TailConstants {
                lambda,
                c_lambda: sup(2),
                cprime_lambda: sup(1),
                d_lambda: (sup(0) / lambda).max(1.0),
                omega,
                d_omega: None,
            }
        }
    };
    for v in [tail.c_lambda, tail.cprime_lambda, tail.d_lambda] {
        if !v.is_finite() {
            return Err(Error::Infeasible("tail supremum is not finite".into()));
        }
    }
    Ok(InitialDistribution { form, tail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_laplace_values() {
        let g = ShorteningLaw::uniform(1.0).unwrap();
        assert_eq!(g.laplace(0.0).unwrap(), 1.0);
        assert!((g.laplace(1.0).unwrap() - 0.632_120_558_828_557_7).abs() < 1e-15);
        assert!(g.laplace(-0.1).is_err());
        assert!(g.laplace(1e4).unwrap() < 1e-3);
    }

    #[test]
    fn uniform_moments() {
        let g = ShorteningLaw::uniform(1.0).unwrap();
        assert_eq!(g.m1(), 0.5);
        assert!((g.m2() - 1.0 / 3.0).abs() < 1e-15);
        let y = ShorteningLaw::uniform_between(5.0, 10.0).unwrap();
        assert_eq!(y.m1(), 7.5);
        assert!((y.m2() - 175.0 / 3.0).abs() < 1e-12);
        assert!(ShorteningLaw::uniform_between(3.0, 2.0).is_err());
    }

    #[test]
    fn laplace_derivatives_match_quadrature() {
        for (lo, hi) in [(0.0, 1.0), (5.0, 10.0), (0.2, 0.7)] {
            let g = ShorteningLaw::uniform_between(lo, hi).unwrap();
            for s in [0.0, 0.01, 0.5, 3.0, 20.0] {
                for j in 0..12u32 {
                    let f = |u: f64| (-u).powi(j as i32) * (-s * u).exp() / (hi - lo);
                    let rough = quad::integrate(&f, lo, hi, 1e-300).abs();
                    let q = quad::integrate(&f, lo, hi, 1e-15 * rough);
                    let v = g.laplace_derivative(j, s).unwrap();
                    assert!((v - q).abs() <= 1e-10 * q.abs().max(1e-300), "{lo} {hi} {s} {j}: {v} {q}");
                }
            }
        }
    }

    #[test]
    fn tabulated_law_matches_uniform() {
        let c = DensityCurve::from_fn(0.0, 1.0, 101, |_| 2.0).unwrap();
        let g = ShorteningLaw::tabulated(&c).unwrap();
        assert!((g.m1() - 0.5).abs() < 1e-12);
        assert!((g.m2() - 1.0 / 3.0).abs() < 1e-12);
        assert!((g.laplace(1.0).unwrap() - 0.632_120_558_828_557_7).abs() < 1e-12);
        assert!((g.cdf(0.25) - 0.25).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mean = (0..n).map(|_| g.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * (1.0 / 12.0f64 / n as f64).sqrt() * 1.5);
    }

    #[test]
    fn scaled_identity() {
        let g = ShorteningLaw::uniform(1.0).unwrap();
        for n in [1.0, 3.0, 40.0, 1234.5] {
            let p = ScaledParams::new(1.7, n, g.clone()).unwrap();
            let lhs = p.b_tilde() * p.m1_tilde();
            assert!((lhs - p.transport_speed()).abs() <= 4.0 * f64::EPSILON * lhs);
            assert!((p.delta_tilde() - 1.0 / n).abs() < 1e-15);
        }
        let obs = ShorteningLaw::uniform_between(5.0, 10.0).unwrap();
        let p = ScaledParams::from_observed(0.7216, &obs, 40.0).unwrap();
        assert!((p.b_tilde() - 0.7216).abs() < 1e-14);
        assert!((p.m1_tilde() - 7.5).abs() < 1e-12);
        assert!((p.transport_speed() - 0.7216 * 7.5).abs() < 1e-12);
    }

    #[test]
    fn erlang_examples() {
        let e = ErlangLaw::new(1, 4.0).unwrap();
        assert_eq!(e.pdf(0.0), 4.0);
        let e = ErlangLaw::new(2, 1.5).unwrap();
        assert!((e.mean() - 2.0 / 1.5).abs() < 1e-15);
        assert!((e.cv() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let e = ErlangLaw::new(1, 1.0).unwrap();
        assert!((e.quantile(0.5).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(e.quantile(1.0).is_err());
        assert!(e.quantile(0.0).is_err());
    }

    #[test]
    fn erlang_cdf_against_quadrature() {
        for (l, b) in [(1, 4.0), (2, 1.5), (9, 9.0), (25, 25.0)] {
            let e = ErlangLaw::new(l, b).unwrap();
            for x in [1e-3, 0.1, 0.7, 1.0, 2.5, 6.0] {
                let q = quad::integrate(&|y| e.pdf(y), 0.0, x, 1e-15);
                assert!((e.cdf(x) - q).abs() < 1e-12, "{l} {b} {x}");
                assert!((e.survival(x) + e.cdf(x) - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn erlang_derivatives_against_differences() {
        let e = ErlangLaw::new(3, 2.0).unwrap();
        let h = 1e-5;
        for x in [0.1, 0.5, 1.3, 3.0] {
            let d1 = (e.pdf(x + h) - e.pdf(x - h)) / (2.0 * h);
            assert!((e.pdf_derivative(1, x) - d1).abs() < 1e-7);
            let d2 = (e.pdf_derivative(1, x + h) - e.pdf_derivative(1, x - h)) / (2.0 * h);
            assert!((e.pdf_derivative(2, x) - d2).abs() < 1e-7);
        }
        let e = ErlangLaw::new(1, 4.0).unwrap();
        assert!((e.pdf_derivative(2, 0.0) - 64.0).abs() < 1e-12);
        assert!((e.pdf_derivative(1, 0.0) + 16.0).abs() < 1e-12);
    }

    #[test]
    fn with_cv_builds_unit_mean() {
        let e = ErlangLaw::with_cv(0.5).unwrap();
        assert_eq!((e.shape(), e.rate()), (4, 4.0));
        assert!(ErlangLaw::with_cv(0.6).is_err());
    }

    #[test]
    fn l2_norm_of_exponential() {
        // ∫ (β³ e^{-βx})² = β⁵/2
        let e = ErlangLaw::new(1, 4.0).unwrap();
        let v = second_derivative_l2_norm(&e);
        assert!((v - (4f64.powi(5) / 2.0).sqrt()).abs() < 1e-8 * v);
    }

    #[test]
    fn tail_constants_exponential() {
        let d = InitialDistribution::erlang(ErlangLaw::new(1, 4.0).unwrap()).unwrap();
        let t = d.tail();
        assert_eq!(t.lambda, 2.0);
        assert!((t.c_lambda - 64.0).abs() < 1e-9, "{}", t.c_lambda);
        assert!((t.cprime_lambda - 16.0).abs() < 1e-9);
        assert!((t.d_lambda - 2.0).abs() < 1e-9);
        assert_eq!(t.d_omega, Some(1.0));
    }

    #[test]
    fn tail_constants_near_rate_stay_finite() {
        let e = ErlangLaw::new(1, 4.0).unwrap();
        let d = fit_tail_constants(InitialForm::Erlang(e), 4.0 - 1e-9, 4.0).unwrap();
        assert!((d.tail().d_lambda - 4.0 / (4.0 - 1e-9)).abs() < 1e-8);
        assert!(fit_tail_constants(InitialForm::Erlang(e), 4.0, 4.0).is_err());
        assert!(fit_tail_constants(InitialForm::Erlang(e), 2.0, 3.0).is_err());
    }

    #[test]
    fn tail_constants_gamma_against_dense_scan() {
        let e = ErlangLaw::new(2, 1.5).unwrap();
        let d = fit_tail_constants(InitialForm::Erlang(e), 1.0, 1.5).unwrap();
        let scan = |order: u32| {
            (0..2_000_001)
                .map(|i| {
                    let x = i as f64 * 4e-5;
                    e.pdf_derivative(order, x).abs() * x.exp()
                })
                .fold(0.0, f64::max)
        };
        let t = d.tail();
        assert!((t.c_lambda - scan(2)).abs() < 1e-8 * t.c_lambda);
        assert!((t.cprime_lambda - scan(1)).abs() < 1e-8 * t.cprime_lambda);
        assert!((t.d_lambda - scan(0).max(1.0)).abs() < 1e-8 * t.d_lambda);
    }

    #[test]
    fn tabulated_initial_density() {
        let e = ErlangLaw::new(2, 1.5).unwrap();
        let c = DensityCurve::from_fn(0.0, 30.0, 30_001, |x| e.pdf(x)).unwrap();
        let t = TabulatedDensity::new(c).unwrap();
        for x in [0.2, 1.0, 3.0] {
            assert!((t.pdf(x) - e.pdf(x)).abs() < 1e-6);
            assert!((t.survival(x) - e.survival(x)).abs() < 1e-6);
            assert!((t.derivative(2, x) - e.pdf_derivative(2, x)).abs() < 1e-4);
        }
        let d = fit_tail_constants(InitialForm::Tabulated(t), 0.75, 1.5).unwrap();
        assert_eq!(d.tail().d_omega, None);
        assert!(d.f_omega(1.0).is_none());
    }
}
