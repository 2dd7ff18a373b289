use pinlab::analysis::{
    contact_tail_fit, free_energy_curve, homogeneous_free_energy, quenched_free_energy,
    subadditive_bound_check, ReplicaPlan,
};
use pinlab::environment::DisorderParams;
use pinlab::pinning::{compute_partition, PinningInstance};
use pinlab::renewal::make_power_law;
use pinlab::special::{gamma, zeta};
use proptest::prelude::*;

#[test]
fn positive_recurrent_slope_at_zero() {
    let law = make_power_law(1.5, 100).unwrap();
    let mean = law.mean().unwrap();
    for h in [1e-3, 1e-2] {
        let f = homogeneous_free_energy(&law, h);
        assert!((f / h * mean - 1.0).abs() < 0.1, "h {h}: {}", f / h * mean);
    }
}

#[test]
fn null_recurrent_power_at_zero() {
    // F(h) ~ (alpha h / (Gamma(1 - alpha) c_K))^{1/alpha}
    let alpha = 0.5;
    let law = make_power_law(alpha, 100).unwrap();
    let c_k = 1.0 / zeta(1.5);
    let mut previous = f64::INFINITY;
    for h in [1e-2, 1e-3, 1e-4] {
        let f = homogeneous_free_energy(&law, h);
        let asymptote = (alpha * h / (gamma(1.0 - alpha) * c_k)).powf(1.0 / alpha);
        let err = (f / asymptote - 1.0).abs();
        assert!(err < 0.15, "h {h}: ratio {}", f / asymptote);
        assert!(err < previous);
        previous = err;
    }
}

#[test]
fn null_recurrent_prefactor_without_power() {
    // alpha h^{1/alpha} / (Gamma(1 - alpha) c_K) misses the 1/alpha power on the
    // prefactor: the ratio settles at (alpha / (Gamma(1 - alpha) c_K))^{1/alpha - 1}.
    let alpha = 0.5;
    let law = make_power_law(alpha, 100).unwrap();
    let c_k = 1.0 / zeta(1.5);
    let limit = (alpha / (gamma(1.0 - alpha) * c_k)).powf(1.0 / alpha - 1.0);
    let h: f64 = 1e-5;
    let f = homogeneous_free_energy(&law, h);
    let ratio = f * gamma(1.0 - alpha) * c_k / (alpha * h.powf(1.0 / alpha));
    assert!((ratio / limit - 1.0).abs() < 0.01, "{ratio} vs {limit}");
}

#[test]
fn zero_beta_is_the_homogeneous_model() {
    let law = make_power_law(1.5, 4096).unwrap();
    let params = DisorderParams::new(1.5, 4096).unwrap();
    let plan = ReplicaPlan {
        size: 4096,
        replicas: 32,
        seed: 3,
    };
    let est = quenched_free_energy(&params, &law, 0.0, 0.05, plan, None).unwrap();
    let hom = compute_partition(&PinningInstance::homogeneous(&law, 0.05, 4096)).unwrap();
    assert_eq!(est.stderr, 0.0);
    assert_eq!(est.mean, hom.log_z_pinned_total / 4096.0);
    // finite-size pinned value sits below the limit by O(log N / N)
    let f = homogeneous_free_energy(&law, 0.05);
    assert!(est.mean <= f && f - est.mean < 5.0 * (4096f64).ln() / 4096.0);
}

#[test]
fn quenched_curve_properties() {
    let law = make_power_law(1.5, 2048).unwrap();
    let params = DisorderParams::new(1.5, 2048).unwrap();
    let plan = ReplicaPlan {
        size: 2048,
        replicas: 8,
        seed: 11,
    };
    let hs = [0.05, 0.1, 0.2, 0.4];
    let curve = free_energy_curve(&params, &law, 1.0, &hs, plan, None).unwrap();
    assert_eq!(curve.monotonicity_violations(), 0);
    for p in &curve.points {
        assert!(p.mean <= homogeneous_free_energy(&law, p.h) + 2.0 * p.stderr);
        // log Z^pin >= log K(N) + h - beta for every replica
        let floor = (law.pmf(2048).ln() + p.h - 1.0) / 2048.0;
        assert!(p.per_replica.iter().all(|&v| v >= floor));
        assert_eq!(p.strategy_violations(), 0);
    }
    let csv = curve.to_csv();
    assert!(csv.starts_with("h,mean,stderr,N,R,seed\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn replica_values_do_not_depend_on_threads() {
    let law = make_power_law(0.5, 512).unwrap();
    let params = DisorderParams::new(1.5, 512).unwrap();
    let plan = ReplicaPlan {
        size: 512,
        replicas: 6,
        seed: 99,
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| quenched_free_energy(&params, &law, 1.0, 0.1, plan, None).unwrap())
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one.per_replica, many.per_replica);
    assert_eq!(one.mean.to_bits(), many.mean.to_bits());
}

#[test]
fn contact_tail_is_decreasing_and_stable() {
    let law = make_power_law(0.5, 4096).unwrap();
    let params = DisorderParams::new(1.5, 4096).unwrap();
    let fit = |size| {
        let plan = ReplicaPlan {
            size,
            replicas: 64,
            seed: 5,
        };
        contact_tail_fit(&params, &law, 1.0, plan, (4, 32), None).unwrap()
    };
    let small = fit(2048);
    let large = fit(4096);
    assert!(small.slope < 0.0 && large.slope < 0.0);
    assert!((small.slope - large.slope).abs() < 0.3, "{} vs {}", small.slope, large.slope);
    assert_eq!(large.band, (-2.5, -1.5));
    assert!((large.mass_within_cap() + large.overflow_mass - 1.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn subadditive_bound_is_exact(alpha in prop_oneof![0.1f64..0.95, 1.05f64..2.5], h in 0.001f64..2.0,
                                  n in 1usize..600) {
        let law = make_power_law(alpha, 600).unwrap();
        let report = subadditive_bound_check(&law, h, &[n]).unwrap();
        prop_assert!(report.holds(), "{:?}", report.entries);
    }

    #[test]
    fn free_energy_is_convex(alpha in prop_oneof![0.1f64..0.95, 1.05f64..2.5], h in 0.001f64..1.0,
                             dh in 0.001f64..0.5) {
        let law = make_power_law(alpha, 100).unwrap();
        let f0 = homogeneous_free_energy(&law, h);
        let f1 = homogeneous_free_energy(&law, h + dh);
        let f2 = homogeneous_free_energy(&law, h + 2.0 * dh);
        prop_assert!(f1 <= 0.5 * (f0 + f2) + 1e-12);
        prop_assert!(f0 <= f1 && f1 <= f2);
    }
}
