//! Closed-form solutions of the lineage models and a grid solver for the
//! one-telomere equation.
//!
//! The transport approximation moves lengths toward zero at speed `b·m1`
//! (one telomere) or `b·m1/2` per coordinate (2k telomeres), with
//! absorption at zero. For exponential n₀ the jump model itself is solvable
//! in closed form, and for Erlang n₀ its one-telomere solution is a
//! complete Bell polynomial in the derivatives of an exponent ψ.

use crate::curve::DensityCurve;
use crate::distributions::{ErlangLaw, InitialDistribution, ScaledParams};
use crate::error::{Error, Result};
use crate::quad;
use crate::Dimension;

/// Density of senescence times together with its upper tail
/// `t ↦ ∫_t^∞ n_∂`.
pub trait BoundaryFlux: Send + Sync {
    fn density(&self, t: f64) -> f64;
    fn tail(&self, t: f64) -> f64;
}

/// Transport approximation started from n₀.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    n0: InitialDistribution,
    speed: f64,
    dimension: Dimension,
}

impl TransportSolution {
    pub fn new(params: &ScaledParams, n0: InitialDistribution, dimension: Dimension) -> Self {
        TransportSolution {
            n0,
            speed: params.transport_speed(),
            dimension,
        }
    }

    /// Speed of each coordinate toward zero.
    pub fn drift(&self) -> f64 {
        match self.dimension {
            Dimension::One => self.speed,
            Dimension::Multi(_) => 0.5 * self.speed,
        }
    }

    pub fn u1(&self, t: f64, x: f64) -> f64 {
        self.n0.pdf(self.speed * t + x)
    }

    pub fn u1_boundary(&self, t: f64) -> f64 {
        self.speed * self.n0.pdf(self.speed * t)
    }

    /// Product density at `x` (length 2k).
    pub fn u2k(&self, t: f64, x: &[f64]) -> f64 {
        let shift = 0.5 * self.speed * t;
        x.iter().map(|&xi| self.n0.pdf(xi + shift)).product()
    }

    pub fn u2k_boundary(&self, k: u32, t: f64) -> f64 {
        let y = 0.5 * self.speed * t;
        k as f64 * self.speed * self.n0.pdf(y) * self.n0.survival(y).powi(2 * k as i32 - 1)
    }

    /// `[∫_{b m1 t/2}^∞ n₀]^{2k}`.
    pub fn u2k_tail(&self, k: u32, t: f64) -> f64 {
        self.n0.survival(0.5 * self.speed * t).powi(2 * k as i32)
    }
}

impl BoundaryFlux for TransportSolution {
    fn density(&self, t: f64) -> f64 {
        match self.dimension {
            Dimension::One => self.u1_boundary(t),
            Dimension::Multi(k) => self.u2k_boundary(k.get(), t),
        }
    }

    fn tail(&self, t: f64) -> f64 {
        match self.dimension {
            Dimension::One => self.n0.survival(self.speed * t),
            Dimension::Multi(k) => self.u2k_tail(k.get(), t),
        }
    }
}

/// Exact solution of the jump model for n₀ = h_{1,β}.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialCase {
    beta: f64,
    beta_n: f64,
    speed: f64,
    dimension: Dimension,
}

impl ExponentialCase {
    pub fn new(params: &ScaledParams, dimension: Dimension, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Domain("β must be positive".into()));
        }
        let n = params.n();
        let m1 = params.law().m1();
        let l = params.law().laplace(beta / n)?;
        let beta_n = match dimension {
            Dimension::One => n / m1 * (1.0 - l),
            Dimension::Multi(k) => {
                let k = k.get() as i32;
                n / (k as f64 * m1) * (1.0 - l.powi(k))
            }
        };
        Ok(ExponentialCase {
            beta,
            beta_n,
            speed: params.transport_speed(),
            dimension,
        })
    }

    /// Same, reading β from an exponential initial distribution.
    pub fn from_initial(params: &ScaledParams, dimension: Dimension, n0: &InitialDistribution) -> Result<Self> {
        match n0.erlang_law() {
            Some(e) if e.shape() == 1 => Self::new(params, dimension, e.rate()),
            _ => Err(Error::Unsupported(
                "the closed-form solution needs an exponential initial density".into(),
            )),
        }
    }

    /// β_{N,1} or β_{N,2k}.
    pub fn beta_n(&self) -> f64 {
        self.beta_n
    }

    fn rate(&self) -> f64 {
        match self.dimension {
            Dimension::One => self.speed * self.beta_n,
            Dimension::Multi(k) => k.get() as f64 * self.speed * self.beta_n,
        }
    }

    /// Density of the lineage population at `(t, x)`, `x` of length 1 or 2k.
    pub fn density(&self, t: f64, x: &[f64]) -> f64 {
        let d = x.len() as i32;
        let sum: f64 = x.iter().sum();
        self.beta.powi(d) * (-self.rate() * t - self.beta * sum).exp()
    }

    /// Estimator of n₀ obtained from this boundary flux: β_N e^{-β_N x}.
    pub fn hat_n0(&self, x: f64) -> f64 {
        self.beta_n * (-self.beta_n * x).exp()
    }
}

impl BoundaryFlux for ExponentialCase {
    fn density(&self, t: f64) -> f64 {
        self.rate() * (-self.rate() * t).exp()
    }

    fn tail(&self, t: f64) -> f64 {
        (-self.rate() * t).exp()
    }
}

/// Complete Bell polynomials `B_0..=B_m` of `a = (a_1..a_m)`.
pub fn bell_polynomials(a: &[f64]) -> Vec<f64> {
    let m = a.len();
    let mut b = vec![0.0; m + 1];
    b[0] = 1.0;
    for n in 0..m {
        // B_{n+1} = Σ_j C(n, j) B_{n-j} a_{j+1}
        let mut binom = 1.0;
        let mut acc = 0.0;
        for j in 0..=n {
            acc += binom * b[n - j] * a[j];
            binom = binom * (n - j) as f64 / (j + 1) as f64;
        }
        b[n + 1] = acc;
    }
    b
}

/// Complete Bell polynomial `B_m(a_1..a_m)`.
pub fn bell_polynomial(a: &[f64]) -> f64 {
    bell_polynomials(a)[a.len()]
}

/// Largest Erlang shape accepted by [`ErlangExplicit`].
pub const MAX_EXPLICIT_SHAPE: u32 = 12;

/// Exact one-telomere solution of the jump model for n₀ = h_{ℓ,β}.
#[derive(Debug, Clone)]
pub struct ErlangExplicit {
    law: ErlangLaw,
    b: f64,
    n: f64,
    // j-th derivative of the Laplace transform of g at β/N, j = 0..ℓ-1
    laplace_derivs: Vec<f64>,
    ln_norm: f64,
}

impl ErlangExplicit {
    pub fn new(params: &ScaledParams, law: ErlangLaw) -> Result<Self> {
        let l = law.shape();
        if l > MAX_EXPLICIT_SHAPE {
            return Err(Error::Capacity(format!(
                "explicit Erlang solution supports shapes up to {MAX_EXPLICIT_SHAPE}, got {l}"
            )));
        }
        let s = law.rate() / params.n();
        let laplace_derivs = (0..l.max(2))
            .map(|j| params.law().laplace_derivative(j, s))
            .collect::<Result<Vec<_>>>()?;
        let ln_norm = l as f64 * law.rate().ln() - statrs::function::gamma::ln_gamma(l as f64);
        Ok(ErlangExplicit {
            law,
            b: params.b(),
            n: params.n(),
            laplace_derivs,
            ln_norm,
        })
    }

    /// `ψ(β)` and `ψ^{(j)}(β)` for `j = 1..ℓ-1`.
    fn psi(&self, t: f64, x: f64) -> (f64, Vec<f64>) {
        let beta = self.law.rate();
        let l = self.law.shape() as usize;
        let psi0 = -self.b * self.n * (1.0 - self.laplace_derivs[0]) * t - beta * x;
        let mut d = Vec::with_capacity(l.saturating_sub(1));
        for j in 1..l {
            let v = if j == 1 {
                self.b * t * self.laplace_derivs[1] - x
            } else {
                self.b * t * self.n.powi(1 - j as i32) * self.laplace_derivs[j]
            };
            d.push(v);
        }
        (psi0, d)
    }

    pub fn n1(&self, t: f64, x: f64) -> f64 {
        let l = self.law.shape();
        let (psi0, d) = self.psi(t, x);
        let bell = bell_polynomial(&d);
        let sign = if (l - 1) % 2 == 0 { 1.0 } else { -1.0 };
        sign * bell * (self.ln_norm + psi0).exp()
    }
}

/// Evaluates the explicit Erlang solution at one point.
pub fn erlang_explicit_n1(params: &ScaledParams, law: ErlangLaw, t: f64, x: f64) -> Result<f64> {
    Ok(ErlangExplicit::new(params, law)?.n1(t, x))
}

/// Discretization of the grid solver.
#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    pub t_max: f64,
    /// Right end of the reported domain; the grid extends by δ/N beyond it.
    pub x_max: f64,
    /// Requested spacing, at most δ/(8N); it is shrunk so that the
    /// shortening range is a whole number of cells.
    pub dx: f64,
    /// Time step, at most 0.1/(bN).
    pub dt: f64,
    /// Store a density snapshot every this many steps (0: first and last only).
    pub snapshot_every: usize,
}

impl OracleConfig {
    /// Defaults: x_max = 32/λ, dx = δ/(32N), dt = 0.1/(bN).
    pub fn default_for(params: &ScaledParams, n0: &InitialDistribution, t_max: f64) -> Self {
        OracleConfig {
            t_max,
            x_max: 32.0 / n0.tail().lambda,
            dx: params.delta_tilde() / 32.0,
            dt: 0.1 / params.b_tilde(),
            snapshot_every: 0,
        }
    }
}

/// Output of [`grid_oracle_n1`].
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub dx: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    /// Boundary flux n_∂ at each time.
    pub flux: Vec<f64>,
    /// `∫_0^t n_∂` at each time.
    pub cumulative_flux: Vec<f64>,
    /// `∫ n(t, ·)` over the extended grid at each time.
    pub mass: Vec<f64>,
    pub snapshots: Vec<(f64, DensityCurve)>,
}

impl OracleRun {
    fn locate(&self, t: f64) -> (usize, f64) {
        let s = (t / self.dt).clamp(0.0, (self.times.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.times.len().saturating_sub(2));
        (i, s - i as f64)
    }

    /// Flux at `t`, linearly interpolated; zero past the last step.
    pub fn flux_at(&self, t: f64) -> f64 {
        if t > *self.times.last().unwrap() {
            return 0.0;
        }
        let (i, w) = self.locate(t);
        self.flux[i] * (1.0 - w) + self.flux[(i + 1).min(self.flux.len() - 1)] * w
    }

    pub fn cumulative_at(&self, t: f64) -> f64 {
        let (i, w) = self.locate(t);
        let c = &self.cumulative_flux;
        c[i] * (1.0 - w) + c[(i + 1).min(c.len() - 1)] * w
    }

    /// Snapshot closest to `t`.
    pub fn snapshot_near(&self, t: f64) -> &(f64, DensityCurve) {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .expect("at least one snapshot")
    }
}

impl BoundaryFlux for OracleRun {
    fn density(&self, t: f64) -> f64 {
        self.flux_at(t)
    }

    fn tail(&self, t: f64) -> f64 {
        (1.0 - self.cumulative_at(t)).max(0.0)
    }
}

enum Convolution {
    // g̃ constant on nodes p..=m
    Window { p: usize, m: usize, height: f64 },
    Weights(Vec<f64>),
}

/// Method-of-lines solution of the one-telomere jump equation
/// `∂_t n = bN [∫ n(x+v) g̃(v) dv - n]` with trapezoid quadrature in `v`
/// and classical Runge-Kutta in time.
pub fn grid_oracle_n1(params: &ScaledParams, n0: &InitialDistribution, cfg: OracleConfig) -> Result<OracleRun> {
    let delta_t = params.delta_tilde();
    let b_t = params.b_tilde();
    if !(cfg.dx > 0.0 && cfg.dx <= delta_t / 8.0 * (1.0 + 1e-12)) {
        return Err(Error::Config(format!("dx must lie in (0, δ/(8N)] = (0, {}]", delta_t / 8.0)));
    }
    if !(cfg.dt > 0.0 && cfg.dt <= 0.1 / b_t * (1.0 + 1e-12)) {
        return Err(Error::Config(format!("dt must lie in (0, 0.1/(bN)] = (0, {}]", 0.1 / b_t)));
    }
    if !(cfg.t_max > 0.0 && cfg.x_max > 0.0) {
        return Err(Error::Config("t_max and x_max must be positive".into()));
    }
    let mut m = (delta_t / cfg.dx).ceil() as usize;
    let conv = match params.law().uniform_bounds() {
        Some((lo, hi)) => {
            let ratio = lo / hi;
            let mut found = None;
            for mm in m..m + 1000 {
                let p = ratio * mm as f64;
                if (p - p.round()).abs() < 1e-9 {
                    found = Some((mm, p.round() as usize));
                    break;
                }
            }
            let (mm, p) = found.ok_or_else(|| {
                Error::Config("the lower end of the shortening range does not fall on a grid node".into())
            })?;
            m = mm;
            Convolution::Window {
                p,
                m,
                height: params.n() / (hi - lo),
            }
        }
        None => {
            let h = delta_t / m as f64;
            let w = (0..=m)
                .map(|j| {
                    let end = if j == 0 || j == m { 0.5 } else { 1.0 };
                    end * h * params.g_tilde(j as f64 * h)
                })
                .collect();
            Convolution::Weights(w)
        }
    };
    let dx = delta_t / m as f64;
    let n_nodes = ((cfg.x_max + delta_t) / dx).ceil() as usize + 1;
    let ghosts: Vec<f64> = (n_nodes..n_nodes + m + 1).map(|i| n0.pdf(i as f64 * dx)).collect();
    let survival_w: Vec<f64> = (0..=m)
        .map(|j| {
            let end = if j == 0 || j == m { 0.5 } else { 1.0 };
            end * dx * (1.0 - params.big_g_tilde(j as f64 * dx))
        })
        .collect();

    let mut ext = vec![0.0; n_nodes + m + 1];
    let mut prefix = vec![0.0; n_nodes + m + 2];
    let mut rhs = |state: &[f64], out: &mut [f64]| -> f64 {
        ext[..n_nodes].copy_from_slice(state);
        ext[n_nodes..].copy_from_slice(&ghosts);
        match &conv {
            Convolution::Window { p, m, height } => {
                for i in 0..ext.len() {
                    prefix[i + 1] = prefix[i] + ext[i];
                }
                for i in 0..n_nodes {
                    let (a, b) = (i + p, i + m);
                    let s = prefix[b + 1] - prefix[a] - 0.5 * (ext[a] + ext[b]);
                    out[i] = b_t * (height * dx * s - state[i]);
                }
            }
            Convolution::Weights(w) => {
                for i in 0..n_nodes {
                    let s: f64 = w.iter().zip(&ext[i..]).map(|(w, v)| w * v).sum();
                    out[i] = b_t * (s - state[i]);
                }
            }
        }
        b_t * survival_w.iter().zip(state).map(|(w, v)| w * v).sum::<f64>()
    };

    let mut state: Vec<f64> = (0..n_nodes).map(|i| n0.pdf(i as f64 * dx)).collect();
    let steps = (cfg.t_max / cfg.dt).ceil() as usize;
    let dt = cfg.t_max / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut flux = Vec::with_capacity(steps + 1);
    let mut cumulative = Vec::with_capacity(steps + 1);
    let mut mass = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    let snapshot = |t: f64, s: &[f64]| -> Result<(f64, DensityCurve)> {
        Ok((t, DensityCurve::new(0.0, dx, s.to_vec())?))
    };
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; n_nodes], vec![0.0; n_nodes], vec![0.0; n_nodes], vec![0.0; n_nodes]);
    let mut tmp = vec![0.0; n_nodes];
    let mut cum = 0.0;
    let mut f_now = rhs(&state, &mut k1);
    times.push(0.0);
    flux.push(f_now);
    cumulative.push(0.0);
    mass.push(quad::trapezoid(&state, dx));
    snapshots.push(snapshot(0.0, &state)?);
    for step in 1..=steps {
        let f1 = f_now;
        for i in 0..n_nodes {
            tmp[i] = state[i] + 0.5 * dt * k1[i];
        }
        let f2 = rhs(&tmp, &mut k2);
        for i in 0..n_nodes {
            tmp[i] = state[i] + 0.5 * dt * k2[i];
        }
        let f3 = rhs(&tmp, &mut k3);
        for i in 0..n_nodes {
            tmp[i] = state[i] + dt * k3[i];
        }
        let f4 = rhs(&tmp, &mut k4);
        for i in 0..n_nodes {
            state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        cum += dt / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4);
        let t = step as f64 * dt;
        f_now = rhs(&state, &mut k1);
        times.push(t);
        flux.push(f_now);
        cumulative.push(cum);
        mass.push(quad::trapezoid(&state, dx));
        if step == steps || (cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0) {
            snapshots.push(snapshot(t, &state)?);
        }
    }
    Ok(OracleRun {
        dx,
        dt,
        times,
        flux,
        cumulative_flux: cumulative,
        mass,
        snapshots,
    })
}
