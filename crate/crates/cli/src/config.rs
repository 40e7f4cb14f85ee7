//! Run configuration: INI sections `model`, `run`, `estimation`, `output`.

use crate::error::{CliError, CliResult};
use ini::Ini;
use std::path::{Path, PathBuf};
use telomere_core::distributions::{
    fit_tail_constants, ErlangLaw, InitialDistribution, InitialForm, ScaledParams, ShorteningLaw, TabulatedDensity,
};
use telomere_core::{DensityCurve, Dimension};

#[derive(Debug, Clone, PartialEq)]
pub enum LawSpec {
    Uniform { lo: f64, hi: f64 },
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Erlang { shape: u32, rate: f64 },
    Table(PathBuf),
}

/// `scaled`: b and g are the parameters of the rescaled model.
/// `physical`: b and g are the observed division rate and shortening law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Scaled,
    Physical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub b: f64,
    pub n: f64,
    pub g: LawSpec,
    /// `None` for the one-telomere model.
    pub k: Option<u32>,
    pub n0: InitialSpec,
    pub lambda: Option<f64>,
    pub omega: Option<f64>,
    pub units: Units,
    pub l_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub n_lineages: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    Alpha(f64),
    /// Confidence level p for the balanced smoothing parameter.
    Level(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationSection {
    pub smoothing: Smoothing,
    pub x_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSection,
    pub run: RunSection,
    pub estimation: EstimationSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSection {
                b: 1.0,
                n: 40.0,
                g: LawSpec::Uniform { lo: 0.0, hi: 1.0 },
                k: None,
                n0: InitialSpec::Erlang { shape: 1, rate: 4.0 },
                lambda: None,
                omega: None,
                units: Units::Scaled,
                l_min: 0.0,
            },
            run: RunSection { n_lineages: 3000, seed: 1 },
            estimation: EstimationSection { smoothing: Smoothing::Level(0.1), x_max: 2.0, n_points: 401 },
            output: OutputSection { directory: PathBuf::from("out"), formats: vec![Format::Csv, Format::Svg] },
        }
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("model", &["b", "N", "g", "k", "n0", "lambda", "omega", "units", "l_min"]),
    ("run", &["n_lineages", "seed"]),
    ("estimation", &["alpha", "p", "x_max", "n_points"]),
    ("output", &["directory", "formats"]),
];

fn err(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn positive(path: &str, v: &str) -> CliResult<f64> {
    let x: f64 = v.trim().parse().map_err(|_| err(path, format!("expected a number, got {v:?}")))?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(err(path, format!("must be positive, got {x}")));
    }
    Ok(x)
}

fn nonnegative(path: &str, v: &str) -> CliResult<f64> {
    let x: f64 = v.trim().parse().map_err(|_| err(path, format!("expected a number, got {v:?}")))?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(err(path, format!("must be nonnegative, got {x}")));
    }
    Ok(x)
}

fn integer<T: std::str::FromStr>(path: &str, v: &str) -> CliResult<T> {
    v.trim().parse().map_err(|_| err(path, format!("expected an integer, got {v:?}")))
}

/// Splits `name(a, b)` into the name and its arguments.
fn call<'a>(path: &str, v: &'a str) -> CliResult<(&'a str, Vec<&'a str>)> {
    let v = v.trim();
    let open = v.find('(').ok_or_else(|| err(path, format!("expected name(args), got {v:?}")))?;
    let inner = v[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| err(path, format!("missing closing parenthesis in {v:?}")))?;
    Ok((v[..open].trim(), inner.split(',').map(str::trim).collect()))
}

fn parse_law(path: &str, v: &str) -> CliResult<LawSpec> {
    match call(path, v)? {
        ("uniform", a) if a.len() == 2 => {
            let lo = nonnegative(path, a[0])?;
            let hi = positive(path, a[1])?;
            if hi <= lo {
                return Err(err(path, "uniform(lo, hi) needs lo < hi"));
            }
            Ok(LawSpec::Uniform { lo, hi })
        }
        ("table", a) if a.len() == 1 && !a[0].is_empty() => Ok(LawSpec::Table(PathBuf::from(a[0]))),
        _ => Err(err(path, format!("expected uniform(lo, hi) or table(file.csv), got {v:?}"))),
    }
}

fn parse_initial(path: &str, v: &str) -> CliResult<InitialSpec> {
    match call(path, v)? {
        ("erlang", a) if a.len() == 2 => {
            let shape: u32 = integer(path, a[0])?;
            if shape == 0 {
                return Err(err(path, "Erlang shape must be at least 1"));
            }
            Ok(InitialSpec::Erlang { shape, rate: positive(path, a[1])? })
        }
        ("table", a) if a.len() == 1 && !a[0].is_empty() => Ok(InitialSpec::Table(PathBuf::from(a[0]))),
        _ => Err(err(path, format!("expected erlang(shape, rate) or table(file.csv), got {v:?}"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(format!("malformed INI: {e}")))?;
        let mut cfg = RunConfig::default();
        let mut alpha = None;
        let mut level = None;
        for (section, props) in ini.iter() {
            let section = match section {
                None if props.is_empty() => continue,
                None => return Err(CliError::Config("keys must appear inside a [section]".into())),
                Some(s) => s,
            };
            let allowed = KEYS
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, k)| *k)
                .ok_or_else(|| CliError::Config(format!("unknown section [{section}]")))?;
            for (key, value) in props.iter() {
                let path = format!("{section}.{key}");
                if !allowed.contains(&key) {
                    return Err(err(&path, format!("unknown key (allowed: {})", allowed.join(", "))));
                }
                let m = &mut cfg.model;
                match (section, key) {
                    ("model", "b") => m.b = positive(&path, value)?,
                    ("model", "N") => m.n = positive(&path, value)?,
                    ("model", "g") => m.g = parse_law(&path, value)?,
                    ("model", "k") => {
                        let k: u32 = integer(&path, value)?;
                        if k == 0 {
                            return Err(err(&path, "k must be at least 1 (omit it for the one-telomere model)"));
                        }
                        m.k = Some(k);
                    }
                    ("model", "n0") => m.n0 = parse_initial(&path, value)?,
                    ("model", "lambda") => m.lambda = Some(positive(&path, value)?),
                    ("model", "omega") => m.omega = Some(positive(&path, value)?),
                    ("model", "units") => {
                        m.units = match value.trim() {
                            "scaled" => Units::Scaled,
                            "physical" => Units::Physical,
                            other => return Err(err(&path, format!("expected scaled or physical, got {other:?}"))),
                        }
                    }
                    ("model", "l_min") => m.l_min = nonnegative(&path, value)?,
                    ("run", "n_lineages") => {
                        let n: usize = integer(&path, value)?;
                        if n == 0 {
                            return Err(err(&path, "n_lineages must be at least 1"));
                        }
                        cfg.run.n_lineages = n;
                    }
                    ("run", "seed") => cfg.run.seed = integer(&path, value)?,
                    ("estimation", "alpha") => alpha = Some(positive(&path, value)?),
                    ("estimation", "p") => {
                        let p = positive(&path, value)?;
                        if p > 1.0 {
                            return Err(err(&path, format!("must lie in (0, 1], got {p}")));
                        }
                        level = Some(p);
                    }
                    ("estimation", "x_max") => cfg.estimation.x_max = positive(&path, value)?,
                    ("estimation", "n_points") => {
                        let n: usize = integer(&path, value)?;
                        if n < 3 {
                            return Err(err(&path, "n_points must be at least 3"));
                        }
                        cfg.estimation.n_points = n;
                    }
                    ("output", "directory") => cfg.output.directory = PathBuf::from(value.trim()),
                    ("output", "formats") => {
                        let mut f = Vec::new();
                        for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                            let fmt = match item {
                                "csv" => Format::Csv,
                                "svg" => Format::Svg,
                                other => return Err(err(&path, format!("unknown format {other:?}"))),
                            };
                            if !f.contains(&fmt) {
                                f.push(fmt);
                            }
                        }
                        cfg.output.formats = f;
                    }
                    _ => unreachable!("key list and match arms agree"),
                }
            }
        }
        cfg.estimation.smoothing = match (alpha, level) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("estimation: give either alpha or p, not both".into()))
            }
            (Some(a), None) => Smoothing::Alpha(a),
            (None, Some(p)) => Smoothing::Level(p),
            (None, None) => cfg.estimation.smoothing,
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Serializes every field; `parse(to_ini_string())` gives back `self`.
    pub fn to_ini_string(&self) -> String {
        let mut ini = Ini::new();
        let m = &self.model;
        let g = match &m.g {
            LawSpec::Uniform { lo, hi } => format!("uniform({lo}, {hi})"),
            LawSpec::Table(p) => format!("table({})", p.display()),
        };
        let n0 = match &m.n0 {
            InitialSpec::Erlang { shape, rate } => format!("erlang({shape}, {rate})"),
            InitialSpec::Table(p) => format!("table({})", p.display()),
        };
        {
            let mut s = ini.with_section(Some("model"));
            s.set("b", m.b.to_string()).set("N", m.n.to_string()).set("g", g);
            if let Some(k) = m.k {
                s.set("k", k.to_string());
            }
            s.set("n0", n0);
            if let Some(l) = m.lambda {
                s.set("lambda", l.to_string());
            }
            if let Some(o) = m.omega {
                s.set("omega", o.to_string());
            }
            s.set("units", if m.units == Units::Scaled { "scaled" } else { "physical" })
                .set("l_min", m.l_min.to_string());
        }
        ini.with_section(Some("run"))
            .set("n_lineages", self.run.n_lineages.to_string())
            .set("seed", self.run.seed.to_string());
        {
            let mut s = ini.with_section(Some("estimation"));
            match self.estimation.smoothing {
                Smoothing::Alpha(a) => s.set("alpha", a.to_string()),
                Smoothing::Level(p) => s.set("p", p.to_string()),
            };
            s.set("x_max", self.estimation.x_max.to_string())
                .set("n_points", self.estimation.n_points.to_string());
        }
        let formats: Vec<&str> = self
            .output
            .formats
            .iter()
            .map(|f| if *f == Format::Csv { "csv" } else { "svg" })
            .collect();
        ini.with_section(Some("output"))
            .set("directory", self.output.directory.display().to_string())
            .set("formats", formats.join(","));
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("INI output is UTF-8")
    }

    pub fn dimension(&self) -> Dimension {
        match self.model.k {
            None => Dimension::One,
            Some(k) => Dimension::multi(k).expect("k validated at parse time"),
        }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    /// Builds the model; table paths are resolved against `base`.
    pub fn build(&self, base: &Path) -> CliResult<Model> {
        let m = &self.model;
        let read_curve = |p: &Path| -> CliResult<DensityCurve> {
            let full = base.join(p);
            let f = std::fs::File::open(&full).map_err(|e| CliError::data_io(&full, e))?;
            DensityCurve::read_csv(f).map_err(|e| CliError::data_io(&full, e))
        };
        let law = match &m.g {
            LawSpec::Uniform { lo, hi } => ShorteningLaw::uniform_between(*lo, *hi)?,
            LawSpec::Table(p) => ShorteningLaw::tabulated(&read_curve(p)?)?,
        };
        let params = match m.units {
            Units::Scaled => ScaledParams::new(m.b, m.n, law)?,
            Units::Physical => ScaledParams::from_observed(m.b, &law, m.n)?,
        };
        let n0 = match &m.n0 {
            InitialSpec::Erlang { shape, rate } => {
                let e = ErlangLaw::new(*shape, *rate)?;
                let lambda = m.lambda.unwrap_or(0.5 * rate);
                let omega = m.omega.unwrap_or(*rate);
                fit_tail_constants(InitialForm::Erlang(e), lambda, omega)?
            }
            InitialSpec::Table(p) => {
                let lambda = m.lambda.ok_or_else(|| {
                    CliError::Config("model.lambda is required when n0 is tabulated".into())
                })?;
                let t = TabulatedDensity::new(read_curve(p)?)?;
                fit_tail_constants(InitialForm::Tabulated(t), lambda, m.omega.unwrap_or(2.0 * lambda))?
            }
        };
        Ok(Model { params, dimension: self.dimension(), n0, l_min: m.l_min })
    }
}

/// Model assembled from a configuration.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: ScaledParams,
    pub dimension: Dimension,
    pub n0: InitialDistribution,
    pub l_min: f64,
}

pub const PRESETS: &[&str] = &["exponential", "gamma", "curse-k5", "curse-k16", "yeast"];

/// Named configurations.
pub fn preset(name: &str) -> CliResult<RunConfig> {
    let mut c = RunConfig::default();
    match name {
        "exponential" => {}
        "gamma" => c.model.n0 = InitialSpec::Erlang { shape: 2, rate: 1.5 },
        "curse-k5" => {
            c.model.k = Some(5);
            c.estimation.smoothing = Smoothing::Alpha(0.275);
            c.estimation.x_max = 1.0;
        }
        "curse-k16" => {
            c.model.k = Some(16);
            c.model.n0 = InitialSpec::Erlang { shape: 2, rate: 1.5 };
            c.estimation.smoothing = Smoothing::Alpha(0.275);
            c.estimation.x_max = 3.0;
        }
        "yeast" => {
            // lengths in bp above the senescence threshold, times in hours;
            // the initial density is only a plausible stand-in
            c.model = ModelSection {
                b: 0.7216,
                n: 40.0,
                g: LawSpec::Uniform { lo: 5.0, hi: 10.0 },
                k: Some(16),
                n0: InitialSpec::Erlang { shape: 4, rate: 0.02 },
                lambda: None,
                omega: None,
                units: Units::Physical,
                l_min: 27.0,
            };
            c.run.n_lineages = 187;
            c.estimation = EstimationSection { smoothing: Smoothing::Alpha(0.1), x_max: 600.0, n_points: 601 };
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown preset {other:?}; available: {}",
                PRESETS.join(", ")
            )))
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::parse("[model]\nN = 5\nk = 3\nn0 = erlang(2, 1.5)\n[estimation]\nalpha = 0.3\n").unwrap();
        assert_eq!(c.model.n, 5.0);
        assert_eq!(c.model.k, Some(3));
        assert_eq!(c.estimation.smoothing, Smoothing::Alpha(0.3));
        assert_eq!(c.run, RunConfig::default().run);
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        let e = RunConfig::parse("[model]\nbeta = 2\n").unwrap_err();
        assert!(e.to_string().contains("model.beta"), "{e}");
        assert!(RunConfig::parse("[extra]\na = 1\n").is_err());
        assert!(RunConfig::parse("[run]\nn_lineages = 0\n").is_err());
        assert!(RunConfig::parse("[model]\nb = -1\n").is_err());
        assert!(RunConfig::parse("[estimation]\nalpha = 0.1\np = 0.1\n").is_err());
        assert!(RunConfig::parse("[model]\ng = uniform(2, 1)\n").is_err());
    }

    #[test]
    fn round_trip_all_presets() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            assert_eq!(RunConfig::parse(&c.to_ini_string()).unwrap(), c, "{name}");
        }
        let mut c = RunConfig::default();
        c.model.g = LawSpec::Table(PathBuf::from("g.csv"));
        c.model.lambda = Some(0.123_456_789_012_345_6);
        c.output.formats = vec![Format::Svg];
        assert_eq!(RunConfig::parse(&c.to_ini_string()).unwrap(), c);
    }

    #[test]
    fn physical_units_keep_the_drift() {
        let c = preset("yeast").unwrap();
        let m = c.build(Path::new(".")).unwrap();
        assert!((m.params.b_tilde() - 0.7216).abs() < 1e-12);
        assert!((m.params.transport_speed() - 0.7216 * 7.5).abs() < 1e-12);
        assert!((m.params.delta_tilde() - 10.0).abs() < 1e-12);
    }
}
