use pinlab::environment::{
    exact_covariance, sample_env_hat, sample_env_tilde, sample_env_tilde_with, tilde_interarrival_law,
    DisorderParams, Environment,
};
use pinlab::special::zeta;
use pinlab::stats::{chi_square_homogeneity, ks_two_sample, linear_fit, mean_stderr};
use proptest::prelude::*;

fn first_zero_run(env: &Environment) -> f64 {
    env.runs()[0].1 as f64
}

#[test]
fn zero_frequency_is_one_half() {
    let params = DisorderParams::new(1.5, 20_000).unwrap();
    let freqs: Vec<f64> = (0..50)
        .map(|seed| {
            let env = sample_env_hat(&params, 20_000, seed).unwrap();
            env.omega().iter().filter(|&&w| w == 0).count() as f64 / 20_000.0
        })
        .collect();
    let (m, se) = mean_stderr(&freqs);
    assert!((m - 0.5).abs() < 3.0 * se, "{m} +- {se}");
}

#[test]
fn covariance_matches_monte_carlo_at_selected_lags() {
    let params = DisorderParams::new(1.5, 700).unwrap();
    let exact = exact_covariance(&params, 500, 100).unwrap();
    let envs: Vec<Environment> = (0..2000).map(|s| sample_env_hat(&params, 600, s).unwrap()).collect();
    for k in [1usize, 10, 100] {
        let products: Vec<f64> = envs
            .iter()
            .map(|e| (e.at(500) as f64 + 0.5) * (e.at(500 + k) as f64 + 0.5))
            .collect();
        let (m, se) = mean_stderr(&products);
        assert!((m - exact.values[k]).abs() < 3.0 * se, "k {k}: {m} +- {se} vs {}", exact.values[k]);
    }
}

#[test]
fn covariance_is_nonnegative_and_decreasing() {
    for ta in [1.3, 1.5, 1.8, 2.5] {
        let params = DisorderParams::new(ta, 3000).unwrap();
        let t = exact_covariance(&params, 1000, 1000).unwrap();
        assert_eq!(t.values[0], 0.25);
        assert!(t.values.iter().all(|&v| v >= 0.0));
        assert!(t.values.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn tilde_law_tail_constant() {
    let params = DisorderParams::new(1.5, 10_000).unwrap();
    let law = tilde_interarrival_law(&params, 10_000).unwrap();
    let n = 10_000f64;
    let scaled = n.powf(2.5) * law.pmf(10_000);
    let target = 2.0 / zeta(2.5);
    assert!((scaled / target - 1.0).abs() < 0.1, "{scaled} vs {target}");
    let total: f64 = law.pmf_table().iter().sum::<f64>() + law.survival(10_000);
    assert!((total - 1.0).abs() < 1e-10);
}

#[test]
fn alternating_starts_with_zero_stretch() {
    let params = DisorderParams::new(1.5, 500).unwrap();
    let law = tilde_interarrival_law(&params, 500).unwrap();
    for seed in 0..200 {
        let env = sample_env_tilde_with(&params, &law, 500, seed).unwrap();
        assert_eq!(env.at(1), 0);
        let runs = env.runs();
        assert!(runs.windows(2).all(|w| w[0].0 != w[1].0));
    }
}

#[test]
fn first_zero_run_has_the_same_law() {
    let params = DisorderParams::new(1.5, 2000).unwrap();
    let law = tilde_interarrival_law(&params, 2000).unwrap();
    let b: Vec<f64> = (0..10_000)
        .map(|s| first_zero_run(&sample_env_tilde_with(&params, &law, 2000, s).unwrap()))
        .collect();
    let mut a = Vec::new();
    let mut seed = 1_000_000;
    while a.len() < 10_000 {
        let env = sample_env_hat(&params, 2000, seed).unwrap();
        seed += 1;
        if env.at(1) == 0 {
            a.push(first_zero_run(&env));
        }
    }
    let (_, p) = ks_two_sample(&a, &b);
    assert!(p > 0.01, "p = {p}");
}

fn run_histogram(envs: &[Environment]) -> Vec<u64> {
    // bins 1, 2, 3, 4, 5-8, 9-16, ... over complete runs only
    let mut bins = vec![0u64; 16];
    for env in envs {
        let runs = env.runs();
        for &(_, len) in &runs[..runs.len() - 1] {
            let bin = if len <= 4 { len - 1 } else { 2 + (usize::BITS - (len - 1).leading_zeros()) as usize };
            bins[bin.min(15)] += 1;
        }
    }
    bins
}

#[test]
fn run_lengths_have_the_same_law() {
    let params = DisorderParams::new(1.5, 1000).unwrap();
    let law = tilde_interarrival_law(&params, 1000).unwrap();
    let b: Vec<Environment> = (0..3000)
        .map(|s| sample_env_tilde_with(&params, &law, 1000, s).unwrap())
        .collect();
    let a: Vec<Environment> = (0..6000)
        .map(|s| sample_env_hat(&params, 1000, 7_000_000 + s).unwrap())
        .filter(|e| e.at(1) == 0)
        .take(3000)
        .collect();
    let (_, _, p) = chi_square_homogeneity(&run_histogram(&a), &run_histogram(&b)).unwrap();
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn covariance_decays_like_a_power() {
    for ta in [1.3f64, 1.8] {
        let params = DisorderParams::new(ta, 61_000).unwrap();
        let t = exact_covariance(&params, 60_000, 500).unwrap();
        let ks: Vec<usize> = (50..=500).step_by(10).collect();
        let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
        let ys: Vec<f64> = ks.iter().map(|&k| t.values[k].ln()).collect();
        let (slope, _) = linear_fit(&xs, &ys).unwrap();
        assert!((slope - (1.0 - ta)).abs() < 0.15, "ta {ta} slope {slope}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn environments_are_valid_and_reproducible(ta in 1.05f64..3.0, len in 0usize..400, seed: u64) {
        let params = DisorderParams::new(ta, 400).unwrap();
        let env = sample_env_hat(&params, len, seed).unwrap();
        prop_assert_eq!(env.len(), len);
        prop_assert!(env.omega().iter().all(|&w| w == 0 || w == -1));
        for site in 1..=len {
            let s = env.stretch_of(site);
            prop_assert_eq!(env.at(site), env.signs()[s]);
        }
        prop_assert_eq!(&env, &sample_env_hat(&params, len, seed).unwrap());
        prop_assert_eq!(&Environment::from_bytes(&env.to_bytes()).unwrap(), &env);
        prop_assert_eq!(&Environment::from_text(&env.to_text()).unwrap(), &env);

        let alt = sample_env_tilde(&params, len, seed).unwrap();
        if len > 0 {
            prop_assert_eq!(alt.at(1), 0);
        }
        prop_assert_eq!(&Environment::from_bytes(&alt.to_bytes()).unwrap(), &alt);
    }
}
