//! Monte Carlo simulation of single lineages until senescence.
//!
//! A lineage divides after Exp(bN) waiting times. In the one-telomere model
//! each division removes `V/N` with V ~ g; in the 2k model it removes a draw
//! of μ scaled by 1/N. The lineage becomes senescent at the first division
//! after which a length is negative.

use crate::distributions::{InitialDistribution, ScaledParams};
use crate::error::{domain, Error, Result};
use crate::multitelomere::MuMeasure;
use crate::Dimension;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use std::io::{Read, Write};

/// Outcome of one simulated lineage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SenescenceSample {
    pub time: f64,
    /// 1-based index of the telomere that went negative.
    pub signalling_index: u32,
    pub signalling_initial_length: f64,
}

/// Telomere lengths of a live lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct LineageState {
    pub lengths: Vec<f64>,
    pub time: f64,
    pub initial_lengths: Vec<f64>,
}

impl LineageState {
    pub fn new(initial_lengths: Vec<f64>) -> Self {
        LineageState {
            lengths: initial_lengths.clone(),
            time: 0.0,
            initial_lengths,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub params: ScaledParams,
    pub dimension: Dimension,
    /// Initial lengths are drawn i.i.d. from this density.
    pub n0: InitialDistribution,
    pub n_lineages: usize,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lineages == 0 {
            return Err(Error::Config("n_lineages must be at least 1".into()));
        }
        Ok(())
    }
}

/// Generator of lineage `index`: ChaCha8 keyed by the seed, with the
/// lineage index as stream number.
pub fn lineage_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Simulates one lineage until senescence.
pub fn simulate_lineage<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> SenescenceSample {
    let d = cfg.dimension.telomeres();
    let initial: Vec<f64> = (0..d).map(|_| cfg.n0.sample(rng)).collect();
    let mut state = LineageState::new(initial);
    let clock = Exp::new(cfg.params.b_tilde()).expect("division rate is positive");
    let n = cfg.params.n();
    let mu = match cfg.dimension {
        Dimension::Multi(k) => Some(MuMeasure::new(k, cfg.params.law().clone())),
        Dimension::One => None,
    };
    let mut shortening = vec![0.0; d];
    loop {
        state.time += clock.sample(rng);
        match &mu {
            None => shortening[0] = cfg.params.sample_shortening(rng),
            Some(mu) => {
                mu.sample_into(rng, &mut shortening);
                shortening.iter_mut().for_each(|v| *v /= n);
            }
        }
        let mut hit = None;
        for (i, (x, v)) in state.lengths.iter_mut().zip(&shortening).enumerate() {
            *x -= v;
            if *x < 0.0 && hit.is_none() {
                hit = Some(i);
            }
        }
        if let Some(i) = hit {
            return SenescenceSample {
                time: state.time,
                signalling_index: i as u32 + 1,
                signalling_initial_length: state.initial_lengths[i],
            };
        }
    }
}

/// Simulates `n_lineages` independent lineages, sorted by senescence time.
/// The result depends only on the configuration and seed.
pub fn simulate_batch(cfg: &SimulationConfig) -> Result<Vec<SenescenceSample>> {
    cfg.validate()?;
    let mut out: Vec<SenescenceSample> = (0..cfg.n_lineages as u64)
        .into_par_iter()
        .map(|i| simulate_lineage(cfg, &mut lineage_rng(cfg.seed, i)))
        .collect();
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(out)
}

pub fn senescence_times(samples: &[SenescenceSample]) -> Vec<f64> {
    samples.iter().map(|s| s.time).collect()
}

/// Fraction of sorted times strictly greater than `t`.
pub fn empirical_survival(sorted_times: &[f64], t: f64) -> Result<f64> {
    if sorted_times.is_empty() {
        return domain("empirical survival of an empty sample");
    }
    let below = sorted_times.partition_point(|&s| s <= t);
    Ok((sorted_times.len() - below) as f64 / sorted_times.len() as f64)
}

/// Numbers of lineages already senescent and still alive at time `t`.
pub fn census(sorted_times: &[f64], t: f64) -> (usize, usize) {
    let dead = sorted_times.partition_point(|&s| s <= t);
    (dead, sorted_times.len() - dead)
}

pub fn write_csv<W: Write>(samples: &[SenescenceSample], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(["time", "signalling_index", "signalling_initial_length"])?;
    for s in samples {
        wr.write_record([
            s.time.to_string(),
            s.signalling_index.to_string(),
            s.signalling_initial_length.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<SenescenceSample>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Domain(format!("malformed sample on data line {}", i + 2));
        let field = |j: usize| rec.get(j).map(str::trim).ok_or_else(bad);
        out.push(SenescenceSample {
            time: field(0)?.parse().map_err(|_| bad())?,
            signalling_index: field(1)?.parse().map_err(|_| bad())?,
            signalling_initial_length: field(2)?.parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{ErlangLaw, ShorteningLaw};

    fn config(dimension: Dimension, n: usize, seed: u64) -> SimulationConfig {
        SimulationConfig {
            params: ScaledParams::new(1.0, 40.0, ShorteningLaw::uniform(1.0).unwrap()).unwrap(),
            dimension,
            n0: InitialDistribution::erlang(ErlangLaw::new(1, 4.0).unwrap()).unwrap(),
            n_lineages: n,
            seed,
        }
    }

    #[test]
    fn batch_is_sorted_and_reproducible() {
        let cfg = config(Dimension::multi(3).unwrap(), 500, 9);
        let a = simulate_batch(&cfg).unwrap();
        let b = simulate_batch(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].time <= w[1].time));
        assert!(a.iter().all(|s| s.time > 0.0 && s.time.is_finite()));
        assert!(a.iter().all(|s| (1..=6).contains(&s.signalling_index)));
    }

    #[test]
    fn thread_count_does_not_matter() {
        let cfg = config(Dimension::One, 300, 4);
        let a = simulate_batch(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_batch(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn zero_lineages_rejected() {
        let cfg = config(Dimension::One, 0, 1);
        assert!(matches!(simulate_batch(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn survival_counts() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_survival(&t, 0.0).unwrap(), 1.0);
        assert_eq!(empirical_survival(&t, 2.0).unwrap(), 0.5);
        assert_eq!(empirical_survival(&t, 9.0).unwrap(), 0.0);
        assert!(empirical_survival(&[], 1.0).is_err());
        for x in [0.0, 1.5, 2.0, 10.0] {
            let (d, a) = census(&t, x);
            assert_eq!(d + a, 4);
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = simulate_batch(&config(Dimension::One, 20, 2)).unwrap();
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        assert!(buf.starts_with(b"time,signalling_index,signalling_initial_length\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), s);
    }
}
