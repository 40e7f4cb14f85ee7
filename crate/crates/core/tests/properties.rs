use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use telomere_core::analytic::{ExponentialCase, TransportSolution};
use telomere_core::bounds::{ks_statistic, BoundContext};
use telomere_core::distributions::{ErlangLaw, InitialDistribution, ScaledParams, ShorteningLaw};
use telomere_core::estimators::LogKde;
use telomere_core::multitelomere::{count_sets_containing, enumerate_ik, ChromosomeCount, MuMeasure};
use telomere_core::quad;
use telomere_core::simulator::{empirical_survival, senescence_times, simulate_batch, SimulationConfig};
use telomere_core::{Dimension, DensityCurve};

fn uniform_params(n: f64) -> ScaledParams {
    ScaledParams::new(1.0, n, ShorteningLaw::uniform(1.0).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplace_is_decreasing_and_convex(lo in 0.0f64..2.0, width in 0.01f64..3.0, s in 0.0f64..50.0, h in 1e-3f64..1.0) {
        let g = ShorteningLaw::uniform_between(lo, lo + width).unwrap();
        let (a, b, c) = (g.laplace(s).unwrap(), g.laplace(s + h).unwrap(), g.laplace(s + 2.0 * h).unwrap());
        prop_assert!(b <= a);
        prop_assert!(a - 2.0 * b + c >= -1e-14);
        prop_assert!(a <= 1.0 && c >= 0.0);
    }

    #[test]
    fn erlang_quantile_inverts_cdf(shape in 1u32..12, rate in 0.1f64..10.0, p in 1e-6f64..0.999_999) {
        let e = ErlangLaw::new(shape, rate).unwrap();
        let x = e.quantile(p).unwrap();
        prop_assert!((e.cdf(x) - p).abs() < 1e-10);
    }

    #[test]
    fn log_kde_integrates_to_one(times in prop::collection::vec(0.01f64..20.0, 1..40), alpha in 0.05f64..1.0, k in 1u32..20) {
        for kde in [
            LogKde::one_telomere(&times, 0.5, alpha).unwrap(),
            LogKde::multi_telomere(&times, k, 0.5, alpha).unwrap(),
        ] {
            // in log coordinates each sample contributes a Gaussian bump; cover
            // the bumps with pieces of width α
            let g = |u: f64| u.exp() * kde.eval(u.exp()).unwrap();
            let lo = (0.005f64).ln() - 12.0 * alpha;
            let hi = (10.0f64).ln() + 12.0 * alpha;
            let pieces = ((hi - lo) / alpha).ceil() as usize;
            let h = (hi - lo) / pieces as f64;
            let v: f64 = (0..pieces)
                .map(|i| quad::integrate(&g, lo + i as f64 * h, lo + (i + 1) as f64 * h, 1e-12))
                .sum();
            prop_assert!((v - 1.0).abs() < 1e-6, "{}", v);
        }
    }

    #[test]
    fn multi_kde_ignores_sample_order(mut times in prop::collection::vec(0.01f64..20.0, 2..30), k in 1u32..10, x in 0.01f64..5.0) {
        let a = LogKde::multi_telomere(&times, k, 0.5, 0.3).unwrap().eval(x).unwrap();
        times.reverse();
        times.rotate_left(1);
        let b = LogKde::multi_telomere(&times, k, 0.5, 0.3).unwrap().eval(x).unwrap();
        prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300));
    }

    #[test]
    fn decay_rates_are_ordered(n in 0.5f64..1e4, k in 1u32..40, shape in 1u32..5, rate in 0.2f64..8.0) {
        let n0 = InitialDistribution::erlang(ErlangLaw::new(shape, rate).unwrap()).unwrap();
        let ctx = BoundContext::new(uniform_params(n), n0, ChromosomeCount::new(k).unwrap()).unwrap();
        prop_assert!(ctx.lambda_prime_n() <= ctx.lambda_n() * (1.0 + 1e-12));
        prop_assert!(ctx.lambda_n() <= ctx.lambda() * (1.0 + 1e-12));
    }

    #[test]
    fn curve_csv_round_trip(values in prop::collection::vec(-1e6f64..1e6, 2..50), x0 in 0.0f64..5.0, dx in 1e-4f64..10.0) {
        let c = DensityCurve::new(x0, dx, values).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf, "x", "n0").unwrap();
        let back = DensityCurve::read_csv(&buf[..]).unwrap();
        // values are exact; the spacing is rebuilt from the end points
        prop_assert_eq!(back.values(), c.values());
        prop_assert_eq!(back.x0(), c.x0());
        prop_assert!((back.dx() - c.dx()).abs() <= 1e-12 * c.dx() * c.len() as f64);
    }
}

#[test]
fn eigen_rate_gap_shrinks_like_one_over_n() {
    let n0 = InitialDistribution::erlang(ErlangLaw::new(1, 4.0).unwrap()).unwrap();
    let k = ChromosomeCount::new(3).unwrap();
    let scaled: Vec<(f64, f64)> = [1e2, 1e3, 1e4, 1e5]
        .iter()
        .map(|&n| {
            let c = BoundContext::new(uniform_params(n), n0.clone(), k).unwrap();
            ((c.lambda() - c.lambda_n()) * n, (c.lambda() - c.lambda_prime_n()) * n)
        })
        .collect();
    for w in scaled.windows(2) {
        assert!((w[0].0 / w[1].0 - 1.0).abs() < 0.05);
        assert!((w[0].1 / w[1].1 - 1.0).abs() < 0.05);
    }
}

#[test]
fn pair_counts_match_enumeration() {
    for k in 1..=8 {
        let kk = ChromosomeCount::new(k).unwrap();
        let sets = enumerate_ik(kk).unwrap();
        assert_eq!(sets.len(), 1 << k);
        for a in 1..=2 * k {
            let n = sets.iter().filter(|s| s.contains(a)).count() as u64;
            assert_eq!(n, count_sets_containing(kk, &[a]).unwrap());
            for b in (a + 1)..=2 * k {
                let n = sets.iter().filter(|s| s.contains(a) && s.contains(b)).count() as u64;
                assert_eq!(n, count_sets_containing(kk, &[a, b]).unwrap(), "k={k} {a} {b}");
            }
        }
    }
}

#[test]
fn mu_sets_are_uniform() {
    // chi-square over the 2^k sets, k = 3: 7 degrees of freedom
    let k = 3u32;
    let mu = MuMeasure::new(ChromosomeCount::new(k).unwrap(), ShorteningLaw::uniform(1.0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 80_000;
    let mut counts = [0f64; 8];
    for _ in 0..draws {
        let v = mu.sample(&mut rng);
        let code = (0..k as usize).fold(0, |c, i| c | (usize::from(v[i + k as usize] > 0.0) << i));
        counts[code] += 1.0;
    }
    let e = draws as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
    // 0.999 quantile of χ²(7)
    assert!(chi2 < 24.32, "{chi2}");
}

#[test]
fn mu_moments_by_monte_carlo() {
    let mu = MuMeasure::new(ChromosomeCount::new(4).unwrap(), ShorteningLaw::uniform(1.0).unwrap());
    let (c, sigma) = mu.moments();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 200_000;
    let (mut first, mut second) = (0.0, 0.0);
    for _ in 0..n {
        let v = mu.sample(&mut rng);
        first += v[0];
        let s: f64 = v.iter().sum();
        second += s * s;
    }
    assert!((first / n as f64 - c).abs() < 5e-3);
    assert!((second / n as f64 - sigma).abs() < 0.02 * sigma);
}

#[test]
fn simulated_mean_matches_exponential_case() {
    let p = uniform_params(40.0);
    for dim in [Dimension::One, Dimension::multi(3).unwrap()] {
        let cfg = SimulationConfig {
            params: p.clone(),
            dimension: dim,
            n0: InitialDistribution::erlang(ErlangLaw::new(1, 4.0).unwrap()).unwrap(),
            n_lineages: 40_000,
            seed: 21,
        };
        let t = senescence_times(&simulate_batch(&cfg).unwrap());
        let exact = ExponentialCase::new(&p, dim, 4.0).unwrap();
        let rate = match dim {
            Dimension::One => p.transport_speed() * exact.beta_n(),
            Dimension::Multi(k) => k.get() as f64 * p.transport_speed() * exact.beta_n(),
        };
        let d = ks_statistic(&t, |s| -(-rate * s).exp_m1()).unwrap();
        // 0.999 KS quantile ≈ 1.95/√n
        assert!(d < 1.95 / (t.len() as f64).sqrt(), "{dim}: {d}");
    }
}

#[test]
fn large_n_survival_follows_transport_limit() {
    let p = uniform_params(2000.0);
    let n0 = InitialDistribution::erlang(ErlangLaw::new(2, 1.5).unwrap()).unwrap();
    for dim in [Dimension::One, Dimension::multi(2).unwrap()] {
        let cfg = SimulationConfig { params: p.clone(), dimension: dim, n0: n0.clone(), n_lineages: 4000, seed: 2 };
        let t = senescence_times(&simulate_batch(&cfg).unwrap());
        let sol = TransportSolution::new(&p, n0.clone(), dim);
        let limit = |s: f64| match dim {
            Dimension::One => n0.survival(p.transport_speed() * s),
            Dimension::Multi(k) => sol.u2k_tail(k.get(), s),
        };
        let worst = (0..60)
            .map(|i| {
                let s = i as f64 * 0.1;
                (empirical_survival(&t, s).unwrap() - limit(s)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 0.035, "{dim}: {worst}");
    }
}
