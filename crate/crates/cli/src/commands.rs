//! The `simulate`, `estimate`, `crosscheck` and `bounds` subcommands.

use crate::config::{Format, Model, RunConfig, Smoothing, Units};
use crate::data::ExperimentalDataset;
use crate::error::{CliError, CliResult};
use crate::svg::{Bars, Plot, Series};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use telomere_core::analytic::{grid_oracle_n1, BoundaryFlux, ErlangExplicit, ExponentialCase, OracleConfig, TransportSolution};
use telomere_core::bounds::{
    confidence_bound, lp_norm_bound, dkw_radius, ks_statistic, pointwise_bound_1, pointwise_bound_2k,
    weibull_limit_cdf, weibull_scale, BoundContext, SHARPNESS_NOTE,
};
use telomere_core::distributions::ScaledParams;
use telomere_core::estimators::{
    c_hat_exponential, c_hat_from_fn, c_hat_from_kde, smoothing_alpha_p, BoundaryData, EstimationJob, LogKde,
    OutputGrid,
};
use telomere_core::multitelomere::ChromosomeCount;
use telomere_core::quad;
use telomere_core::simulator::{census, senescence_times, simulate_batch, write_csv, SenescenceSample, SimulationConfig};
use telomere_core::{DensityCurve, Dimension};

/// Pilot smoothing used to estimate the derivative constant from samples.
pub const PILOT_ALPHA: f64 = 0.275;

/// Config together with where it came from.
pub struct Loaded {
    pub config: RunConfig,
    /// Directory against which table paths resolve.
    pub base: PathBuf,
}

impl Loaded {
    pub fn output_dir(&self, over: Option<&Path>) -> PathBuf {
        over.map(Path::to_path_buf).unwrap_or_else(|| self.config.output.directory.clone())
    }
}

pub fn prepare_output(dir: &Path, config: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output_io(dir, e))?;
    write_file(&dir.join("config.ini"), config.to_ini_string().as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::output_io(path, e))
}

fn write_curve(path: &Path, curve: &DensityCurve, x_name: &str, value_name: &str) -> CliResult<()> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf, x_name, value_name)?;
    write_file(path, &buf)
}

fn simulation(model: &Model, config: &RunConfig) -> SimulationConfig {
    SimulationConfig {
        params: model.params.clone(),
        dimension: model.dimension,
        n0: model.n0.clone(),
        n_lineages: config.run.n_lineages,
        seed: config.run.seed,
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Histogram of `values` on `bins` equal bins of `[0, max]`.
fn histogram(values: &[f64], bins: usize) -> (f64, Vec<usize>) {
    let max = values.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let width = max / bins as f64;
    let mut counts = vec![0; bins];
    for v in values {
        counts[((v / width) as usize).min(bins - 1)] += 1;
    }
    (width, counts)
}

/// Text summary of a simulation. Bar lengths grow like log(1 + count) so
/// that both the bulk and the sparse right tail stay visible.
pub fn summary(samples: &[SenescenceSample], model: &Model) -> String {
    let times = senescence_times(samples);
    let lengths: Vec<f64> = samples.iter().map(|s| s.signalling_initial_length).collect();
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let mut s = String::new();
    let _ = writeln!(s, "lineages: {}", samples.len());
    let _ = writeln!(s, "dimension: {}", model.dimension);
    let _ = writeln!(s, "mean senescence time: {mean:.6}");
    let _ = writeln!(s, "median senescence time: {:.6}", median(&times));
    let (width, counts) = histogram(&lengths, 20);
    let _ = writeln!(
        s,
        "signalling initial length histogram (lengths shifted by l_min = {}; bars on a log(1 + count) scale):",
        model.l_min
    );
    let top = counts.iter().map(|&c| (1.0 + c as f64).ln()).fold(0.0, f64::max).max(1e-300);
    for (i, c) in counts.iter().enumerate() {
        let bar = ((1.0 + *c as f64).ln() / top * 40.0).round() as usize;
        let _ = writeln!(
            s,
            "  [{:>10.4}, {:>10.4})  {:>7}  {}",
            model.l_min + i as f64 * width,
            model.l_min + (i + 1) as f64 * width,
            c,
            "#".repeat(bar)
        );
    }
    s
}

pub fn simulate(loaded: &Loaded, out: &Path) -> CliResult<String> {
    let config = &loaded.config;
    let model = config.build(&loaded.base)?;
    let samples = simulate_batch(&simulation(&model, config))?;
    prepare_output(out, config)?;
    if config.wants(Format::Csv) {
        let mut buf = Vec::new();
        write_csv(&samples, &mut buf)?;
        write_file(&out.join("senescence.csv"), &buf)?;
    }
    let text = summary(&samples, &model);
    write_file(&out.join("summary.txt"), text.as_bytes())?;
    if config.wants(Format::Svg) {
        let lengths: Vec<f64> = samples.iter().map(|s| s.signalling_initial_length + model.l_min).collect();
        let (width, counts) = histogram(&lengths.iter().map(|l| l - model.l_min).collect::<Vec<_>>(), 40);
        let n = lengths.len() as f64;
        let mut plot = Plot::new("Initial length of the signalling telomere", "length", "density");
        plot.bars = Some(Bars {
            edges: (0..counts.len()).map(|i| model.l_min + i as f64 * width).collect(),
            width,
            heights: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
        });
        let xs = (0..=200).map(|i| i as f64 * width * 40.0 / 200.0);
        plot.series.push(Series::reference("n0", xs.map(|x| (x + model.l_min, model.n0.pdf(x))).collect()));
        write_file(&out.join("signalling_lengths.svg"), plot.render().as_bytes())?;
    }
    Ok(text)
}

/// Where the boundary data for `estimate` comes from.
pub enum Source {
    Exact,
    Synthetic,
    Experimental { data: PathBuf, divisions: Option<PathBuf> },
}

/// Exact senescence-time law of the model, when one is available.
fn exact_boundary(model: &Model, x_max: f64) -> CliResult<BoundaryData> {
    if let Some(e) = model.n0.erlang_law() {
        if e.shape() == 1 {
            return Ok(BoundaryData::Analytic(Arc::new(ExponentialCase::new(&model.params, model.dimension, e.rate())?)));
        }
    }
    match model.dimension {
        Dimension::One => {
            // the one-telomere estimate at x reads the flux at x / speed only
            let t_max = 1.05 * x_max / model.params.transport_speed();
            let run = grid_oracle_n1(&model.params, &model.n0, OracleConfig::default_for(&model.params, &model.n0, t_max))?;
            Ok(BoundaryData::Analytic(Arc::new(run)))
        }
        Dimension::Multi(_) => Err(CliError::Config(
            "exact boundary data for the 2k model needs an exponential n0 (erlang(1, rate))".into(),
        )),
    }
}

fn positive_grid(x_max: f64, n: usize) -> Vec<f64> {
    (1..n).map(|i| i as f64 * x_max / (n - 1) as f64).collect()
}

fn choose_alpha(config: &RunConfig, model: &Model, times: &[f64], speed: f64) -> CliResult<f64> {
    match config.estimation.smoothing {
        Smoothing::Alpha(a) => Ok(a),
        Smoothing::Level(p) => {
            let pilot = match model.dimension {
                Dimension::One => LogKde::one_telomere(times, speed, PILOT_ALPHA)?,
                Dimension::Multi(k) => LogKde::multi_telomere(times, k.get(), speed, PILOT_ALPHA)?,
            };
            let grid = positive_grid(config.estimation.x_max, config.estimation.n_points);
            let c = c_hat_from_kde(&pilot, &grid)?;
            Ok(smoothing_alpha_p(c, times.len(), p, model.dimension)?)
        }
    }
}

pub fn estimate(loaded: &Loaded, source: Source, out: &Path) -> CliResult<String> {
    let config = &loaded.config;
    let mut model = config.build(&loaded.base)?;
    let mut report = String::new();
    let (data, known_truth) = match &source {
        Source::Exact => (exact_boundary(&model, config.estimation.x_max)?, true),
        Source::Synthetic => {
            let t = senescence_times(&simulate_batch(&simulation(&model, config))?);
            (BoundaryData::samples(&t)?, true)
        }
        Source::Experimental { data, divisions } => {
            let ds = ExperimentalDataset::load(data, divisions.as_deref())?;
            if let Some(rate) = ds.division_rate() {
                if config.model.units != Units::Physical {
                    return Err(CliError::Config("division times need model.units = physical".into()));
                }
                model.params = ScaledParams::from_observed(rate, &model.params.law().scaled(1.0 / model.params.n())?, model.params.n())?;
                let _ = writeln!(report, "division rate from cell-cycle durations: {rate:.6} per hour");
            }
            (BoundaryData::samples(&ds.senescence_times)?, false)
        }
    };
    let alpha = match &data {
        BoundaryData::Samples(t) => choose_alpha(config, &model, t, model.params.transport_speed())?,
        BoundaryData::Analytic(_) => 0.0,
    };
    let job = EstimationJob {
        data,
        dimension: model.dimension,
        params: model.params.clone(),
        alpha,
        grid: OutputGrid { x_max: config.estimation.x_max, n_points: config.estimation.n_points },
    };
    let mut curve = job.run()?;
    let shift = matches!(source, Source::Experimental { .. });
    if shift && model.l_min != 0.0 {
        curve = DensityCurve::new(curve.x0() + model.l_min, curve.dx(), curve.values().to_vec())?;
    }
    prepare_output(out, config)?;
    if config.wants(Format::Csv) {
        write_curve(&out.join("estimate.csv"), &curve, "x", "n0_estimate")?;
    }
    let mut meta = Vec::new();
    job.write_metadata(&mut meta)?;
    if shift {
        meta.extend_from_slice(format!("l_min_shift = {}\n", model.l_min).as_bytes());
    }
    write_file(&out.join("estimate.meta"), &meta)?;

    if let BoundaryData::Samples(t) = &job.data {
        let _ = writeln!(report, "samples: {}", t.len());
        let _ = writeln!(report, "alpha: {alpha:.6}");
    }
    let mut plot = Plot::new("Estimated initial length density", "length", "density");
    plot.series.push(Series::new("estimate", curve.points().collect()));
    if known_truth {
        let sup = curve.sup_diff(|x| model.n0.pdf(x));
        let l2 = curve.l2_diff(|x| model.n0.pdf(x));
        let _ = writeln!(report, "sup error: {sup:.6e}");
        let _ = writeln!(report, "L2 error: {l2:.6e}");
        plot.series.push(Series::reference("n0", curve.grid().map(|x| (x, model.n0.pdf(x))).collect()));
    }
    if config.wants(Format::Svg) {
        write_file(&out.join("estimate.svg"), plot.render().as_bytes())?;
    }
    let _ = writeln!(report, "grid points: {}", curve.len());
    Ok(report)
}

/// One row of the crosscheck report.
pub struct CheckRow {
    pub name: String,
    /// `None` when the check does not apply to this configuration.
    pub measured: Option<f64>,
    pub tolerance: f64,
}

impl CheckRow {
    fn new(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        CheckRow { name: name.into(), measured: Some(measured), tolerance }
    }

    fn skipped(name: impl Into<String>) -> Self {
        CheckRow { name: name.into(), measured: None, tolerance: f64::NAN }
    }

    pub fn passed(&self) -> bool {
        self.measured.is_none_or(|m| m <= self.tolerance)
    }
}

pub fn crosscheck_rows(loaded: &Loaded) -> CliResult<Vec<CheckRow>> {
    let config = &loaded.config;
    let model = config.build(&loaded.base)?;
    let p = &model.params;
    let speed = p.transport_speed();
    let mut rows = Vec::new();

    // transport tail identity, for the configured dimension
    let k = model.dimension.k().unwrap_or(1);
    let sol = TransportSolution::new(p, model.n0.clone(), Dimension::multi(k)?);
    let horizon = 10.0 / (model.n0.tail().lambda * speed);
    let tail_err = (0..20)
        .map(|i| {
            let t = horizon * i as f64 / 20.0;
            let f = |s: f64| sol.u2k_boundary(k, s);
            (quad::integrate_to_infinity(&f, t, 1e-13) - sol.u2k_tail(k, t)).abs()
        })
        .fold(0.0, f64::max);
    rows.push(CheckRow::new(format!("transport tail identity (k = {k})"), tail_err, 1e-8));

    // grid oracle of the one-telomere reduction
    let t_max = 2.0_f64.min(horizon);
    let mut ocfg = OracleConfig::default_for(p, &model.n0, t_max);
    ocfg.snapshot_every = ((t_max / 20.0 / ocfg.dt).round() as usize).max(1);
    let run = grid_oracle_n1(p, &model.n0, ocfg)?;
    let mass = run.mass.iter().zip(&run.cumulative_flux).map(|(m, c)| (m + c - 1.0).abs()).fold(0.0, f64::max);
    rows.push(CheckRow::new("oracle mass conservation (one telomere)", mass, 1e-4));
    let x_end = config.estimation.x_max;
    match model.n0.erlang_law() {
        Some(e) if e.shape() == 1 => {
            let exact = ExponentialCase::new(p, Dimension::One, e.rate())?;
            let worst = run
                .times
                .iter()
                .zip(&run.flux)
                .map(|(t, f)| (BoundaryFlux::density(&exact, *t) - f).abs() / speed)
                .fold(0.0, f64::max);
            rows.push(CheckRow::new("closed-form vs oracle boundary flux / b m1", worst, 2e-3));
        }
        Some(e) if e.shape() <= 12 => {
            let explicit = ErlangExplicit::new(p, *e)?;
            let mut worst: f64 = 0.0;
            for (t, c) in &run.snapshots {
                for (x, v) in c.points().filter(|(x, _)| *x <= x_end) {
                    worst = worst.max((explicit.n1(*t, x) - v).abs());
                }
            }
            rows.push(CheckRow::new("explicit Erlang solution vs oracle density", worst, 1e-3));
        }
        _ => rows.push(CheckRow::skipped("explicit solution vs oracle (needs Erlang n0)")),
    }

    // Monte Carlo
    let sim = simulate_batch(&simulation(&model, config))?;
    let times = senescence_times(&sim);
    let ks_tol = 1.95 / (times.len() as f64).sqrt();
    match (model.n0.erlang_law(), model.dimension) {
        (Some(e), dim) if e.shape() == 1 => {
            let exact = ExponentialCase::new(p, dim, e.rate())?;
            let d = ks_statistic(&times, |t| 1.0 - BoundaryFlux::tail(&exact, t))?;
            rows.push(CheckRow::new("Monte Carlo vs closed-form senescence law (KS)", d, ks_tol));
        }
        (Some(e), Dimension::One) if e.shape() <= 12 => {
            let explicit = ErlangExplicit::new(p, *e)?;
            let d = ks_statistic(&times, |t| {
                1.0 - quad::integrate_to_infinity(&|x: f64| explicit.n1(t, x), 0.0, 1e-10)
            })?;
            rows.push(CheckRow::new("Monte Carlo vs explicit senescence law (KS)", d, ks_tol));
        }
        (_, Dimension::One) => {
            // coarser grid: the KS tolerance is far above the discretization error
            let t_end = times.iter().cloned().fold(0.0, f64::max);
            let mut cfg = OracleConfig::default_for(p, &model.n0, t_end);
            cfg.dx = p.delta_tilde() / 8.0;
            let long = grid_oracle_n1(p, &model.n0, cfg)?;
            let d = ks_statistic(&times, |t| long.cumulative_at(t))?;
            rows.push(CheckRow::new("Monte Carlo vs oracle senescence law (KS)", d, ks_tol + 1e-3));
        }
        _ => rows.push(CheckRow::skipped("Monte Carlo vs exact senescence law (no exact law for this model)")),
    }
    let census_err = [0.0, 0.5 * horizon, horizon]
        .iter()
        .map(|&t| {
            let (dead, alive) = census(&times, t);
            (dead + alive).abs_diff(times.len()) as f64
        })
        .fold(0.0, f64::max);
    rows.push(CheckRow::new("Monte Carlo census: senescent + alive = lineages", census_err, 0.0));

    // extreme-value limit of the initial minimum
    match model.n0.erlang_law() {
        Some(e) => {
            let k50 = ChromosomeCount::new(50)?;
            let scale = weibull_scale(e.shape(), e.rate(), k50)?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.run.seed);
            let minima: Vec<f64> = (0..100_000)
                .map(|_| (0..100).map(|_| e.sample(&mut rng)).fold(f64::INFINITY, f64::min) / scale)
                .collect();
            let d = ks_statistic(&minima, |x| weibull_limit_cdf(e.shape(), x))?;
            rows.push(CheckRow::new("Weibull limit of the minimum of 100 draws (KS)", d, 0.05));
        }
        None => rows.push(CheckRow::skipped("Weibull limit (needs Erlang n0)")),
    }
    Ok(rows)
}


pub fn render_rows(rows: &[CheckRow]) -> String {
    let w = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    let _ = writeln!(s, "{:<w$}  {:>12}  {:>12}  result", "check", "measured", "tolerance");
    for r in rows {
        let (m, t, res) = match r.measured {
            Some(m) => (format!("{m:.3e}"), format!("{:.3e}", r.tolerance), if r.passed() { "PASS" } else { "FAIL" }),
            None => ("-".into(), "-".into(), "SKIP"),
        };
        let _ = writeln!(s, "{:<w$}  {m:>12}  {t:>12}  {res}", r.name);
    }
    s
}

pub fn crosscheck(loaded: &Loaded, out: &Path) -> CliResult<String> {
    let rows = crosscheck_rows(loaded)?;
    prepare_output(out, &loaded.config)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        let io = |e: csv::Error| CliError::Config(e.to_string());
        w.write_record(["check", "measured", "tolerance", "result"]).map_err(io)?;
        for r in &rows {
            let res = match r.measured {
                None => "SKIP",
                Some(_) if r.passed() => "PASS",
                Some(_) => "FAIL",
            };
            w.write_record([
                r.name.clone(),
                r.measured.map_or(String::new(), |m| m.to_string()),
                if r.measured.is_some() { r.tolerance.to_string() } else { String::new() },
                res.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Config(e.to_string()))?;
    }
    write_file(&out.join("crosscheck.csv"), &buf)?;
    let table = render_rows(&rows);
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(table)
    } else {
        print!("{table}");
        Err(CliError::Crosscheck(failed.join("; ")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
}

/// Named constants of the bounds table, in display order.
pub fn bound_constants(loaded: &Loaded) -> CliResult<(Vec<(String, String)>, DensityCurve, Option<DensityCurve>)> {
    let config = &loaded.config;
    let model = config.build(&loaded.base)?;
    let k = ChromosomeCount::new(model.dimension.k().unwrap_or(1))?;
    let ctx = BoundContext::new(model.params.clone(), model.n0.clone(), k)?;
    let t = *model.n0.tail();
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut put = |name: &str, v: String| rows.push((name.to_string(), v));
    let show = |r: telomere_core::Result<f64>| r.map_or_else(|e| format!("unavailable ({e})"), |v| format!("{v:.6e}"));
    put("note", SHARPNESS_NOTE.to_string());
    put("lambda", format!("{:.6e}", t.lambda));
    put("omega", format!("{:.6e}", t.omega));
    put("C_lambda", format!("{:.6e}", t.c_lambda));
    put("C'_lambda", format!("{:.6e}", t.cprime_lambda));
    put("D_lambda", format!("{:.6e}", t.d_lambda));
    put("D_omega", t.d_omega.map_or("unavailable".into(), |d| format!("{d:.6e}")));
    put("lambda_N", format!("{:.6e}", ctx.lambda_n()));
    put("lambda'_N", format!("{:.6e}", ctx.lambda_prime_n()));
    put("beta'_N", format!("{:.6e}", ctx.beta_prime_n()));
    put("c1", format!("{:.6e}", ctx.c1()));
    put("L_1N", format!("{:.6e}", ctx.l_const_1()));
    put("Lp_bound_1(p=1)", show(lp_norm_bound(&ctx, 1.0, Dimension::One)));
    put("Lp_bound_1(p=2)", show(lp_norm_bound(&ctx, 2.0, Dimension::One)));
    let multi = Dimension::Multi(k);
    if model.dimension != Dimension::One {
        put("d1", show(ctx.d1()));
        put("L_2kN", show(ctx.l_const_2k()));
        put("Lp_bound_2k(p=1)", show(lp_norm_bound(&ctx, 1.0, multi)));
        put("Lp_bound_2k(p=2)", show(lp_norm_bound(&ctx, 2.0, multi)));
        put("pointwise_2k_decays", ctx.decays().to_string());
    }
    let n_s = config.run.n_lineages;
    let level = match config.estimation.smoothing {
        Smoothing::Level(p) => p,
        Smoothing::Alpha(_) => 0.1,
    };
    put("dkw_radius", show(dkw_radius(n_s, level)));
    // derivative constant of the exact estimate; n0 itself stands in
    // unless n0 is exponential, where the value is known exactly
    let c_hat = match model.n0.erlang_law() {
        Some(e) if e.shape() == 1 => c_hat_exponential(),
        _ => c_hat_from_fn(|x| model.n0.pdf(x), &positive_grid(config.estimation.x_max, 4001))?,
    };
    put("C_hat", format!("{c_hat:.6e}"));
    put("confidence_bound", show(confidence_bound(&ctx, c_hat, level, n_s, model.dimension)));

    let x_max = config.estimation.x_max;
    let n = config.estimation.n_points;
    let one = DensityCurve::try_from_fn(0.0, x_max, n, |x| pointwise_bound_1(&ctx, x))?;
    let multi_curve = match model.dimension {
        Dimension::One => None,
        _ => DensityCurve::try_from_fn(0.0, x_max, n, |x| pointwise_bound_2k(&ctx, x).map(|b| b.value)).ok(),
    };
    Ok((rows, one, multi_curve))
}

pub fn bounds(loaded: &Loaded, format: TableFormat, out: &Path) -> CliResult<String> {
    let (rows, one, multi) = bound_constants(loaded)?;
    prepare_output(out, &loaded.config)?;
    let mut table = String::new();
    match format {
        TableFormat::Text => {
            let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
            for (k, v) in &rows {
                let _ = writeln!(table, "{k:<w$}  {v}");
            }
        }
        TableFormat::Csv => {
            let _ = writeln!(table, "name,value");
            for (k, v) in &rows {
                let _ = writeln!(table, "{k},{}", v.replace(',', ";"));
            }
        }
    }
    write_file(&out.join("bounds.txt"), table.as_bytes())?;
    let mut buf = String::from(if multi.is_some() { "x,pointwise_bound_1,pointwise_bound_2k\n" } else { "x,pointwise_bound_1\n" });
    for (i, (x, v)) in one.points().enumerate() {
        match &multi {
            Some(m) => {
                let _ = writeln!(buf, "{x},{v},{}", m.values()[i]);
            }
            None => {
                let _ = writeln!(buf, "{x},{v}");
            }
        }
    }
    write_file(&out.join("bound_curves.csv"), buf.as_bytes())?;
    Ok(table)
}
