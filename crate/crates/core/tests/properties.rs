mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{q_kernel, DiscreteQExpSampler, ReferenceLattice};
use socimpact::analysis::{
    extract_loss_events, fit_q_exponential, q_exponential, LossAnalysis, QExpDistribution,
};
use socimpact::harness::simulate_replica;
use socimpact::lattice::{threshold_sign, CouplingSpec, DynamicsParams, LatticeState, Spin};
use socimpact::market::build_price_series;
use socimpact::noise::WmNoise;
use socimpact::ExperimentConfig;

fn small_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.model.n = 6;
    cfg.market.tau = 5;
    cfg.run.total_days = 40;
    cfg.run.warmup_rounds = 3;
    cfg.run.seed = seed;
    cfg
}

proptest! {
    #[test]
    fn threshold_is_monotone_in_x(a in -50.0f64..50.0, b in -50.0f64..50.0, y in 0.0f64..3.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(threshold_sign(lo, y).value() <= threshold_sign(hi, y).value());
    }

    #[test]
    fn threshold_is_odd_off_the_boundary(x in -50.0f64..50.0, y in 0.0f64..3.0) {
        prop_assume!(x.abs() != y);
        prop_assert_eq!(threshold_sign(-x, y).value(), -threshold_sign(x, y).value());
    }

    #[test]
    fn threshold_matches_reference(x in -10.0f64..10.0, y in 0.0f64..3.0) {
        prop_assert_eq!(threshold_sign(x, y).value() as i32, ReferenceLattice::sgn(x, y));
    }

    #[test]
    fn cached_sum_and_step_bound(seed in any::<u64>(), n in 2usize..9, lambda in 0.1f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lattice = LatticeState::random(n, &mut rng);
        let params = DynamicsParams::new(lambda, Default::default()).unwrap();
        let coupling = CouplingSpec::new(1.0).unwrap();
        let mut noise = WmNoise::new(Default::default());
        let size = (n * n) as f64;
        for _ in 0..5 {
            let mut prev = lattice.sum_spins();
            let mut ok = true;
            lattice.run_round_with(&params, &coupling, &mut noise, &mut rng, |rec| {
                let now = prev + rec.new.value() as i64 - rec.old.value() as i64;
                ok &= (now - prev).abs() <= 2;
                prev = now;
            });
            prop_assert!(ok, "|dM| > 2/N in some drawing");
            let direct: i64 = lattice.spins().iter().map(|s| s.value() as i64).sum();
            prop_assert_eq!(lattice.sum_spins(), direct);
            prop_assert!((lattice.magnetization() - direct as f64 / size).abs() == 0.0);
            prop_assert!(lattice.magnetization().abs() <= 1.0);
        }
    }

    #[test]
    fn price_series_invariants(seed in 0u64..1000) {
        let cfg = small_config(seed);
        let out = simulate_replica(&cfg, 0).unwrap();
        let s = &out.series;
        prop_assert_eq!(s.returns.len(), cfg.run.total_days);
        prop_assert_eq!(s.log_price.len(), s.returns.len() + 1);
        let mut acc = s.log_price[0];
        for (k, r) in s.returns.iter().enumerate() {
            acc += r;
            prop_assert!((acc - s.log_price[k + 1]).abs() < 1e-12);
            let tau = cfg.market.tau;
            let dm = s.magnetization_per_round[(k + 1) * tau] - s.magnetization_per_round[k * tau];
            prop_assert_eq!(*r == 0.0, dm == 0.0);
        }
        for reset in &s.resets {
            prop_assert!(reset.pre_reset_m.abs() >= cfg.market.m_trap);
        }
    }

    #[test]
    fn kernel_decreases_in_r(q in 1.001f64..3.0, beta in 0.01f64..2.0, r in 0.0f64..100.0, dr in 0.01f64..10.0) {
        let a = q_exponential(r, q, beta).unwrap();
        let b = q_exponential(r + dr, q, beta).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn kernel_matches_powf_form(q in 1.01f64..2.5, beta in 0.01f64..1.0, r in 0.0f64..200.0) {
        let ours = q_exponential(r, q, beta).unwrap();
        let reference = q_kernel(r, q, beta);
        prop_assert!((ours - reference).abs() <= 1e-12 * reference.max(1e-300) + 1e-300);
    }

    #[test]
    fn scale_invariance(seed in any::<u64>(), exp in -8i32..8) {
        let c = 2f64.powi(exp);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let returns: Vec<f64> = (0..400)
            .map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0))
            .collect();
        let scaled: Vec<f64> = returns.iter().map(|r| r * c).collect();
        let q = 0.6;
        let a = extract_loss_events(&returns, q).unwrap();
        let b = extract_loss_events(&scaled, q * c).unwrap();
        prop_assert_eq!(&a.event_days, &b.event_days);
        prop_assert_eq!(&a.inter_times, &b.inter_times);
        prop_assert_eq!(a.mean_interoccurrence.to_bits(), b.mean_interoccurrence.to_bits());
        if let (Ok(fa), Ok(fb)) = (fit_q_exponential(&a), fit_q_exponential(&b)) {
            prop_assert_eq!(fa.q.to_bits(), fb.q.to_bits());
            prop_assert_eq!(fa.beta_scale.to_bits(), fb.beta_scale.to_bits());
        }
    }
}

#[test]
fn q_to_one_limit() {
    for beta in [0.05, 0.2, 1.0] {
        let sup = |eps: f64| {
            (0..=5000)
                .map(|k| {
                    let r = k as f64 * 0.01;
                    (q_exponential(r, 1.0 + eps, beta).unwrap() - (-beta * r).exp()).abs()
                })
                .fold(0.0, f64::max)
        };
        let e4 = sup(1e-4);
        let e6 = sup(1e-6);
        assert!(e4 < 1e-3, "eps=1e-4: {e4}");
        assert!(e6 < 1e-5, "eps=1e-6: {e6}");
        assert!(e6 < e4);
    }
}

#[test]
fn normalized_distribution_sums_to_one() {
    for (q, beta, r_max) in [(1.0, 0.3, 500), (1.2, 0.2, 5_000), (1.5, 0.1, 20_000), (1.9, 0.4, 100_000)] {
        let d = QExpDistribution::new(q, beta, r_max).unwrap();
        let mut total = 0.0;
        let mut c = 0.0;
        for r in 1..=r_max {
            // Kahan summation keeps the brute-force reference honest.
            let y = d.pmf(r) - c;
            let t = total + y;
            c = (t - total) - y;
            total = t;
        }
        assert!((total - 1.0).abs() < 1e-9, "(q={q}, beta={beta}): {total}");
    }
}

#[test]
fn fit_is_idempotent() {
    for (seed, (q, beta)) in [(1.15, 0.25), (1.4, 0.18)].into_iter().enumerate() {
        let sample = |q: f64, beta: f64, seed: u64| {
            let sampler = DiscreteQExpSampler::new(q, beta, 1_000_000);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inter: Vec<u64> = (0..10_000).map(|_| sampler.sample(&mut rng)).collect();
            let days = (0..=inter.len()).collect();
            fit_q_exponential(&LossAnalysis::from_inter_times(1.0, days, inter).unwrap()).unwrap()
        };
        let first = sample(q, beta, seed as u64);
        let second = sample(first.q, first.beta_scale, 100 + seed as u64);
        assert!((first.q - second.q).abs() <= 0.05, "{} vs {}", first.q, second.q);
        assert!((first.beta_scale - second.beta_scale).abs() <= 0.03);
    }
}

#[test]
fn same_seed_same_replica_bit_for_bit() {
    let cfg = small_config(77);
    let a = simulate_replica(&cfg, 2).unwrap();
    let b = simulate_replica(&cfg, 2).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.series.magnetization_per_round), bits(&b.series.magnetization_per_round));
    assert_eq!(bits(&a.series.returns), bits(&b.series.returns));
    assert_eq!(a.series.resets, b.series.resets);
}

#[test]
fn price_series_from_scratch_matches_harness() {
    let cfg = small_config(5);
    let out = simulate_replica(&cfg, 0).unwrap();
    let rebuilt = build_price_series(
        &out.series.magnetization_per_round,
        &cfg.market_params(),
        cfg.n_agents(),
        1.0,
    )
    .unwrap();
    assert_eq!(rebuilt.returns, out.series.returns);
    assert_eq!(rebuilt.log_price, out.series.log_price);
}

#[test]
fn lattice_with_single_state_stays_put_without_noise() {
    // All up with zero noise: impact 4 >= Y = 2, so nothing moves.
    let mut lattice = LatticeState::from_spins(3, vec![Spin::Up; 9]);
    let params = DynamicsParams::new(2.0, Default::default()).unwrap();
    let coupling = CouplingSpec::new(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let summary = lattice.run_round(&params, &coupling, &mut socimpact::noise::ConstantNoise(0.0), &mut rng);
    assert_eq!(summary.changes, 0);
    assert_eq!(lattice.magnetization(), 1.0);
}
