//! Functions sampled on a uniform grid of the half-line.

use crate::error::{domain, Error, Result};
use crate::quad;
use std::io::{Read, Write};

/// Values of a real function on the grid `x0 + i*dx`, `i = 0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    x0: f64,
    dx: f64,
    values: Vec<f64>,
}

impl DensityCurve {
    pub fn new(x0: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        if !(x0 >= 0.0 && x0.is_finite()) {
            return domain("grid origin must be a finite nonnegative number");
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return domain("grid spacing must be positive");
        }
        if values.is_empty() {
            return domain("a curve needs at least one value");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("curve values must be finite");
        }
        Ok(DensityCurve { x0, dx, values })
    }

    /// Samples `f` at `n` equally spaced points from `x0` to `x_max` inclusive.
    pub fn from_fn<F: Fn(f64) -> f64>(x0: f64, x_max: f64, n: usize, f: F) -> Result<Self> {
        if n < 2 || !(x_max > x0) {
            return domain("need at least two points and x_max > x0");
        }
        let dx = (x_max - x0) / (n - 1) as f64;
        let values = (0..n).map(|i| f(x0 + i as f64 * dx)).collect();
        Self::new(x0, dx, values)
    }

    /// Like `from_fn` for fallible evaluations.
    pub fn try_from_fn<F: Fn(f64) -> Result<f64>>(
        x0: f64,
        x_max: f64,
        n: usize,
        f: F,
    ) -> Result<Self> {
        if n < 2 || !(x_max > x0) {
            return domain("need at least two points and x_max > x0");
        }
        let dx = (x_max - x0) / (n - 1) as f64;
        let values = (0..n)
            .map(|i| f(x0 + i as f64 * dx))
            .collect::<Result<Vec<_>>>()?;
        Self::new(x0, dx, values)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.len() - 1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.x(i))
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (self.x(i), v))
    }

    /// Linear interpolation; zero outside the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        if x < self.x0 || x > self.x_max() || x.is_nan() {
            return 0.0;
        }
        let s = (x - self.x0) / self.dx;
        let i = (s.floor() as usize).min(self.len() - 1);
        if i + 1 >= self.len() {
            return self.values[self.len() - 1];
        }
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        quad::trapezoid(&self.values, self.dx)
    }

    /// `sup_i w(x_i) |self(x_i) - f(x_i)|`.
    pub fn weighted_sup_diff<F: Fn(f64) -> f64, W: Fn(f64) -> f64>(&self, f: F, w: W) -> f64 {
        self.points()
            .map(|(x, v)| w(x) * (v - f(x)).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_diff<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.weighted_sup_diff(f, |_| 1.0)
    }

    /// Discrete L² distance to `f` on the grid.
    pub fn l2_diff<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let sq: Vec<f64> = self.points().map(|(x, v)| (v - f(x)).powi(2)).collect();
        quad::trapezoid(&sq, self.dx).sqrt()
    }

    /// Two-column CSV with a header row.
    pub fn write_csv<W: Write>(&self, w: W, x_name: &str, value_name: &str) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record([x_name, value_name])?;
        for (x, v) in self.points() {
            wr.write_record([x.to_string(), v.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a two-column CSV written by `write_csv`; the grid must be uniform.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let parse = |j: usize| -> Result<f64> {
                rec.get(j)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Domain(format!("bad number on data line {}", line + 2)))
            };
            xs.push(parse(0)?);
            vs.push(parse(1)?);
        }
        if xs.len() < 2 {
            return domain("curve CSV needs at least two rows");
        }
        let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        for (i, x) in xs.iter().enumerate() {
            if (x - (xs[0] + i as f64 * dx)).abs() > 1e-9 * (1.0 + x.abs()) {
                return domain("curve CSV grid is not uniform");
            }
        }
        Self::new(xs[0], dx, vs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_and_integral() {
        let c = DensityCurve::from_fn(0.0, 2.0, 201, |x| 3.0 * x).unwrap();
        assert!((c.value_at(0.505) - 1.515).abs() < 1e-12);
        assert_eq!(c.value_at(2.5), 0.0);
        assert!((c.integral() - 6.0).abs() < 1e-12);
        assert!((c.x_max() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let c = DensityCurve::from_fn(0.1, 1.0, 10, |x| x.sin()).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf, "x", "density").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,density\n"));
        let back = DensityCurve::read_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 10);
        for (a, b) in c.values().iter().zip(back.values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DensityCurve::new(0.0, 0.0, vec![1.0]).is_err());
        assert!(DensityCurve::new(0.0, 1.0, vec![f64::NAN]).is_err());
        assert!(DensityCurve::new(0.0, 1.0, vec![]).is_err());
    }
}
