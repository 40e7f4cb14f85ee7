//! Figure recipes: each writes an SVG and the CSV of its curves.
//! All use b = 1 and g uniform on [0, 1].

use crate::commands::{write_file, PILOT_ALPHA};
use crate::error::{CliError, CliResult};
use crate::svg::{Bars, Plot, Series};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use telomere_core::analytic::{grid_oracle_n1, ExponentialCase, OracleConfig};
use telomere_core::distributions::{ErlangLaw, InitialDistribution, ScaledParams, ShorteningLaw};
use telomere_core::estimators::{c_hat_from_kde, hat_n0_1, smoothing_alpha_p, BoundaryData, LogKde};
use telomere_core::simulator::{senescence_times, simulate_batch, SimulationConfig};
use telomere_core::Dimension;

pub const FIGURE_IDS: &[&str] = &[
    "one-telo-N-sweep",
    "cv-sweep",
    "k-small",
    "k-large",
    "ns-sweep",
    "curse-of-dimensionality",
    "signalling-histograms",
];

fn params(n: f64) -> CliResult<ScaledParams> {
    Ok(ScaledParams::new(1.0, n, ShorteningLaw::uniform(1.0)?)?)
}

fn erlang(shape: u32, rate: f64) -> CliResult<InitialDistribution> {
    Ok(InitialDistribution::erlang(ErlangLaw::new(shape, rate)?)?)
}

fn grid(x_max: f64, n: usize, from_zero: bool) -> Vec<f64> {
    let start = if from_zero { 0 } else { 1 };
    (start..n).map(|i| i as f64 * x_max / (n - 1) as f64).collect()
}

/// Columns sharing one x grid, written as CSV and drawn as one plot.
struct Figure {
    name: String,
    title: String,
    x: Vec<f64>,
    columns: Vec<(String, Vec<f64>, bool)>,
    bars: Option<Bars>,
}

impl Figure {
    fn new(name: &str, title: impl Into<String>, x: Vec<f64>) -> Self {
        Figure { name: name.into(), title: title.into(), x, columns: Vec::new(), bars: None }
    }

    fn add(&mut self, label: impl Into<String>, values: Vec<f64>) {
        self.columns.push((label.into(), values, false));
    }

    fn truth(&mut self, n0: &InitialDistribution) {
        let v = self.x.iter().map(|&x| n0.pdf(x)).collect();
        self.columns.push(("n0".into(), v, true));
    }

    fn write(self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        let mut csv = String::from("x");
        for (l, _, _) in &self.columns {
            csv.push(',');
            csv.push_str(l);
        }
        csv.push('\n');
        for (i, x) in self.x.iter().enumerate() {
            let _ = write!(csv, "{x}");
            for (_, v, _) in &self.columns {
                let _ = write!(csv, ",{}", v[i]);
            }
            csv.push('\n');
        }
        let mut plot = Plot::new(self.title, "telomere length", "density");
        plot.bars = self.bars;
        for (l, v, reference) in self.columns {
            let pts = self.x.iter().cloned().zip(v).collect();
            plot.series.push(if reference { Series::reference(l, pts) } else { Series::new(l, pts) });
        }
        let csv_path = dir.join(format!("{}.csv", self.name));
        let svg_path = dir.join(format!("{}.svg", self.name));
        write_file(&csv_path, csv.as_bytes())?;
        write_file(&svg_path, plot.render().as_bytes())?;
        Ok(vec![svg_path, csv_path])
    }
}

/// Exact one-telomere estimate from the grid solver's boundary flux.
fn oracle_estimate(p: &ScaledParams, n0: &InitialDistribution, xs: &[f64]) -> CliResult<Vec<f64>> {
    let speed = p.transport_speed();
    let x_end = xs.iter().cloned().fold(0.0, f64::max);
    let run = grid_oracle_n1(p, n0, OracleConfig::default_for(p, n0, x_end / speed + 0.1))?;
    let data = BoundaryData::Analytic(Arc::new(run));
    xs.iter().map(|&x| Ok(hat_n0_1(&data, speed, x)?)).collect()
}

fn simulated_times(n0: &InitialDistribution, dimension: Dimension, n_s: usize, seed: u64) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let cfg = SimulationConfig { params: params(40.0)?, dimension, n0: n0.clone(), n_lineages: n_s, seed };
    let s = simulate_batch(&cfg)?;
    Ok((senescence_times(&s), s.iter().map(|s| s.signalling_initial_length).collect()))
}

fn one_telo_n_sweep(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for (shape, rate, x_max, tag) in [(1u32, 4.0, 1.5, "exponential"), (2, 1.5, 5.0, "gamma")] {
        let n0 = erlang(shape, rate)?;
        let xs = grid(x_max, 301, true);
        let mut fig = Figure::new(&format!("one-telo-N-sweep-{tag}"), format!("One telomere, n0 = h({shape}, {rate})"), xs.clone());
        for n in [1.0, 5.0, 40.0] {
            let p = params(n)?;
            let v = if shape == 1 {
                let e = ExponentialCase::new(&p, Dimension::One, rate)?;
                xs.iter().map(|&x| e.hat_n0(x)).collect()
            } else {
                oracle_estimate(&p, &n0, &xs)?
            };
            fig.add(format!("N = {n}"), v);
        }
        fig.truth(&n0);
        out.extend(fig.write(dir)?);
    }
    Ok(out)
}

fn cv_sweep(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    let p = params(40.0)?;
    for inv in [2u32, 3, 5, 7] {
        let law = ErlangLaw::with_cv(1.0 / inv as f64)?;
        let n0 = InitialDistribution::erlang(law)?;
        let xs = grid(2.5, 301, true);
        let mut fig = Figure::new(&format!("cv-sweep-1-over-{inv}"), format!("One telomere, cv = 1/{inv}, N = 40"), xs.clone());
        fig.add("estimate", oracle_estimate(&p, &n0, &xs)?);
        fig.truth(&n0);
        out.extend(fig.write(dir)?);
    }
    Ok(out)
}

fn k_sweep(dir: &Path, name: &str, ks: [u32; 3]) -> CliResult<Vec<PathBuf>> {
    let p = params(40.0)?;
    let n0 = erlang(1, 4.0)?;
    let xs = grid(1.5, 301, true);
    let mut fig = Figure::new(name, "2k telomeres, n0 = h(1, 4), N = 40", xs.clone());
    for k in ks {
        let e = ExponentialCase::new(&p, Dimension::multi(k)?, 4.0)?;
        fig.add(format!("k = {k}"), xs.iter().map(|&x| e.hat_n0(x)).collect());
    }
    fig.truth(&n0);
    fig.write(dir)
}

fn ns_sweep(dir: &Path, seed: u64) -> CliResult<Vec<PathBuf>> {
    let n0 = erlang(2, 1.5)?;
    let speed = params(40.0)?.transport_speed();
    let xs = grid(5.0, 301, false);
    let mut fig = Figure::new("ns-sweep", "Sampled data, one telomere, n0 = h(2, 1.5), alpha = alpha_0.1", xs.clone());
    for n_s in [30usize, 300, 3000] {
        let (t, _) = simulated_times(&n0, Dimension::One, n_s, seed)?;
        let pilot = LogKde::one_telomere(&t, speed, PILOT_ALPHA)?;
        let alpha = smoothing_alpha_p(c_hat_from_kde(&pilot, &xs)?, n_s, 0.1, Dimension::One)?;
        let kde = LogKde::one_telomere(&t, speed, alpha)?;
        fig.add(format!("n_s = {n_s}"), xs.iter().map(|&x| kde.eval(x)).collect::<telomere_core::Result<_>>()?);
    }
    fig.truth(&n0);
    fig.write(dir)
}

const CURSE_CASES: [(u32, f64, u32, f64); 2] = [(1, 4.0, 5, 1.0), (2, 1.5, 16, 3.0)];

fn curse(dir: &Path, seed: u64) -> CliResult<Vec<PathBuf>> {
    let speed = params(40.0)?.transport_speed();
    let mut out = Vec::new();
    for (shape, rate, k, x_max) in CURSE_CASES {
        let n0 = erlang(shape, rate)?;
        let (t, _) = simulated_times(&n0, Dimension::multi(k)?, 3000, seed)?;
        let kde = LogKde::multi_telomere(&t, k, speed, 0.275)?;
        let xs = grid(x_max, 301, false);
        let mut fig = Figure::new(
            &format!("curse-of-dimensionality-k{k}"),
            format!("Sampled data, k = {k}, n0 = h({shape}, {rate}), alpha = 0.275"),
            xs.clone(),
        );
        fig.add("estimate", xs.iter().map(|&x| kde.eval(x)).collect::<telomere_core::Result<_>>()?);
        fig.truth(&n0);
        out.extend(fig.write(dir)?);
    }
    Ok(out)
}

fn signalling_histograms(dir: &Path, seed: u64) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for (shape, rate, k, x_max) in CURSE_CASES {
        let n0 = erlang(shape, rate)?;
        let (_, lengths) = simulated_times(&n0, Dimension::multi(k)?, 3000, seed)?;
        let bins = 60;
        let width = x_max / bins as f64;
        let mut counts = vec![0usize; bins];
        for l in lengths.iter().filter(|&&l| l < x_max) {
            counts[((l / width) as usize).min(bins - 1)] += 1;
        }
        let n = lengths.len() as f64;
        let xs = grid(x_max, 301, true);
        let mut fig = Figure::new(
            &format!("signalling-histogram-k{k}"),
            format!("Initial length of the signalling telomere, k = {k}, n0 = h({shape}, {rate})"),
            xs,
        );
        fig.bars = Some(Bars {
            edges: (0..bins).map(|i| i as f64 * width).collect(),
            width,
            heights: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
        });
        fig.truth(&n0);
        out.extend(fig.write(dir)?);
        let max = lengths.iter().cloned().fold(0.0, f64::max);
        let note = dir.join(format!("signalling-histogram-k{k}.txt"));
        write_file(&note, format!("lineages = {}\nmax_signalling_length = {max}\n", lengths.len()).as_bytes())?;
        out.push(note);
    }
    Ok(out)
}

/// Runs one figure recipe, or all of them for `"all"`.
pub fn figures(id: &str, dir: &Path, seed: u64) -> CliResult<Vec<PathBuf>> {
    if id != "all" && !FIGURE_IDS.contains(&id) {
        return Err(CliError::Config(format!(
            "unknown figure id {id:?}; valid ids: {}, all",
            FIGURE_IDS.join(", ")
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::output_io(dir, e))?;
    let ids: Vec<&str> = if id == "all" { FIGURE_IDS.to_vec() } else { vec![id] };
    let mut out = Vec::new();
    for id in ids {
        out.extend(match id {
            "one-telo-N-sweep" => one_telo_n_sweep(dir)?,
            "cv-sweep" => cv_sweep(dir)?,
            "k-small" => k_sweep(dir, "k-small", [1, 3, 5])?,
            "k-large" => k_sweep(dir, "k-large", [15, 30, 50])?,
            "ns-sweep" => ns_sweep(dir, seed)?,
            "curse-of-dimensionality" => curse(dir, seed)?,
            "signalling-histograms" => signalling_histograms(dir, seed)?,
            _ => unreachable!("checked above"),
        });
    }
    Ok(out)
}
