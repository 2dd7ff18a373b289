//! Small invariant suite run by the `verify` command.

use anyhow::Context;
use pinlab::analysis::{
    characteristic_residual, homogeneous_free_energy, longest_stretch_bound, mean_contact_scaling,
    subadditive_bound_check,
};
use pinlab::environment::{sample_env_hat, sample_env_tilde, DisorderParams, Environment};
use pinlab::pinning::{
    brute_force_partition, coarse_grain_upper_bound, compute_partition, contact_distribution,
    disorder_average_bound, sample_paths, Boundary, PinningInstance,
};
use pinlab::renewal::make_power_law;
use pinlab::rng::{derive_seed, rng_from_seed};
use rand::Rng as _;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::record::{Check, ResultRecord, Table};

const ORACLE_CASES: u64 = 50;
const RANDOM_CASES: u64 = 200;

/// Smallest margin and number of violations of an inequality family.
#[derive(Default)]
struct Tally {
    cases: usize,
    violations: usize,
    margin: Option<f64>,
}

impl Tally {
    fn add(&mut self, margin: f64) {
        self.cases += 1;
        self.violations += usize::from(margin < 0.0);
        self.margin = Some(self.margin.map_or(margin, |m| m.min(margin)));
    }

    fn check(&self, name: &str, topic: &str) -> Check {
        let m = self.margin.unwrap_or(f64::INFINITY);
        Check::new(
            name,
            topic,
            self.violations == 0,
            format!("{} violations in {} cases", self.violations, self.cases),
        )
        .measured(m, 0.0, m)
    }
}

pub(crate) fn verify(config: &ExperimentConfig, record: &mut ResultRecord) -> Result<(), CliError> {
    let laws = [make_power_law(0.5, 256)?, make_power_law(1.5, 256)?];
    let params = DisorderParams::new(config.tilde_alpha, 256)?;
    let mut rng = rng_from_seed(config.seed);

    let mut oracle = 0.0f64;
    for case in 0..ORACLE_CASES {
        let law = &laws[(case % 2) as usize];
        let n = rng.random_range(1..=12);
        let beta = [0.0, 1.0][rng.random_range(0..2)];
        let h = [-0.5, 0.0, 0.5][rng.random_range(0..3)];
        let env = sample_env_hat(&params, n, derive_seed(config.seed, case))?;
        let inst = PinningInstance::new(law, &env, beta, h, n)?;
        let table = compute_partition(&inst)?;
        let (free, pinned) = brute_force_partition(&inst)?;
        oracle = oracle
            .max((free - table.log_z_free).abs())
            .max((pinned - table.log_z_pinned_total).abs());
    }
    let tol = config.tolerance("oracle_abs");
    record.checks.push(Check::at_most(
        "partition_oracle",
        "Partition function against enumeration",
        oracle,
        tol,
        format!("max |DP - enumeration| over {ORACLE_CASES} instances with N <= 12: {oracle:.3e}"),
    ));

    let mut pinned_free = Tally::default();
    let mut average = Tally::default();
    let mut coarse = Tally::default();
    let mut subadditive = Tally::default();
    let mut stretch = Tally::default();
    let mut normalization = 0.0f64;
    for case in 0..RANDOM_CASES {
        let law = &laws[(case % 2) as usize];
        let n = rng.random_range(5..=150);
        let beta = rng.random_range(0.0..2.0);
        let h = rng.random_range(-1.0..1.0);
        let env = sample_env_hat(&params, n, derive_seed(config.seed ^ 0xA5A5, case))?;
        let inst = PinningInstance::new(law, &env, beta, h, n)?;
        let table = compute_partition(&inst)?;
        pinned_free.add(table.log_z_free - table.log_z_pinned_total);

        let path = &sample_paths(&inst, &table, 1, case, Boundary::Free)?[0];
        let avg = disorder_average_bound(path, &env, beta)?;
        average.add(avg.log_bound - avg.log_exact);

        let blocks = rng.random_range(1..=6usize);
        let mut ends: Vec<usize> = (1..blocks).map(|_| rng.random_range(1..n)).collect();
        ends.push(n);
        ends.sort_unstable();
        ends.dedup();
        coarse.add(coarse_grain_upper_bound(&inst, &ends)?.margin());

        let hp = rng.random_range(0.001..2.0);
        subadditive.add(subadditive_bound_check(law, hp, &[n])?.entries[0].margin);

        let hom = compute_partition(&PinningInstance::homogeneous(law, h, n))?;
        if let Some(bound) = longest_stretch_bound(&env, law, beta, h, n, &hom) {
            stretch.add(table.log_z_pinned_total - bound);
        }

        let cap = rng.random_range(0..=n);
        let dist = contact_distribution(&inst, cap)?;
        normalization = normalization.max((dist.total_mass() - 1.0).abs());
    }
    record
        .checks
        .push(pinned_free.check("pinned_le_free", "Pinned versus free partition function"));
    record
        .checks
        .push(average.check("disorder_average", "Disorder-average energy bound"));
    record
        .checks
        .push(coarse.check("coarse_graining", "Coarse-graining inequality"));
    record.checks.push(
        subadditive.check("subadditive_bound", "Homogeneous partition function above exp(N F(h))"),
    );
    record
        .checks
        .push(stretch.check("longest_stretch", "Longest-stretch lower bound"));
    record.checks.push(Check::at_most(
        "contact_normalization",
        "Contact law normalization",
        normalization,
        config.tolerance("normalization_abs"),
        format!("max |sum P(a) + overflow - 1| over {RANDOM_CASES} instances: {normalization:.3e}"),
    ));

    geometric_law(config, record)?;
    solver(config, record);
    encoding(config, record)?;

    let law = make_power_law(0.5, 10_000)?;
    let sizes: Vec<usize> = (0..8)
        .map(|i| (1000.0 * 10f64.powf(i as f64 / 7.0)).round() as usize)
        .collect();
    let scaling = mean_contact_scaling(&law, &sizes).context("mean contact scaling")?;
    let dev = (scaling.slope - 0.5).abs();
    record.checks.push(Check::at_most(
        "mean_contact_scaling",
        "Growth of the mean contact number",
        dev,
        config.tolerance("mean_scaling"),
        format!("alpha = 0.5: log-log slope {:.4} on N in [1000, 10000], target 0.5", scaling.slope),
    ));
    Ok(())
}

fn geometric_law(config: &ExperimentConfig, record: &mut ResultRecord) -> Result<(), CliError> {
    let h: f64 = -0.5;
    let e = h.exp();
    let mut table = Table::new("geometric_contacts", &["alpha", "k", "probability", "geometric"]);
    let mut worst = 0.0f64;
    for alpha in [0.5, 1.5] {
        let law = make_power_law(alpha, 2000)?;
        let d = contact_distribution(&PinningInstance::homogeneous(&law, h, 2000), 40)?;
        for k in 0..=10usize {
            let geo = (1.0 - e) * e.powi(k as i32);
            worst = worst.max((d.probs[k + 1] / geo - 1.0).abs());
            table.push(vec![alpha.into(), k.into(), d.probs[k + 1].into(), geo.into()]);
        }
    }
    record.outputs.push(table);
    record.checks.push(Check::at_most(
        "geometric_contact_law",
        "Geometric contact law in the delocalized homogeneous model",
        worst,
        config.tolerance("geometric_rel"),
        format!("beta = 0, h = -0.5, N = 2000: max relative error for k <= 10 is {worst:.4}"),
    ));
    Ok(())
}

fn solver(config: &ExperimentConfig, record: &mut ResultRecord) {
    let mut table = Table::new("homogeneous_free_energy", &["alpha", "h", "free_energy", "residual"]);
    let mut residual = 0.0f64;
    let mut convexity = f64::INFINITY;
    let mut sign = 0.0f64;
    for alpha in [0.5, 1.5] {
        let law = make_power_law(alpha, 256).expect("valid exponent");
        sign = sign
            .max(homogeneous_free_energy(&law, 0.0).abs())
            .max(homogeneous_free_energy(&law, -1.0).abs());
        let hs: Vec<f64> = (0..=20).map(|i| 1e-3 * 10f64.powf(i as f64 * 0.15)).collect();
        let fs: Vec<f64> = hs.iter().map(|&h| homogeneous_free_energy(&law, h)).collect();
        for (&h, &f) in hs.iter().zip(&fs) {
            let r = characteristic_residual(&law, h, f);
            residual = residual.max(r.abs());
            table.push(vec![alpha.into(), h.into(), f.into(), r.into()]);
        }
        for &h in &hs {
            let (lo, hi) = (h * 0.8, h * 1.2);
            let mid = homogeneous_free_energy(&law, 0.5 * (lo + hi));
            let chord = 0.5 * (homogeneous_free_energy(&law, lo) + homogeneous_free_energy(&law, hi));
            convexity = convexity.min(chord - mid + 1e-12);
        }
    }
    record.outputs.push(table);
    record.checks.push(Check::at_most(
        "solver_residual",
        "Characteristic equation of the homogeneous free energy",
        residual,
        config.tolerance("solver_residual"),
        format!("max residual over 42 (alpha, h) pairs: {residual:.3e}"),
    ));
    record.checks.push(Check::at_least(
        "solver_convexity",
        "Convexity of the homogeneous free energy",
        convexity,
        0.0,
        "midpoint convexity on [0.8h, 1.2h] with 1e-12 solver slack",
    ));
    record.checks.push(Check::at_most(
        "free_energy_sign",
        "Homogeneous free energy vanishes for h <= 0",
        sign,
        0.0,
        "F(0) and F(-1) for alpha in {0.5, 1.5}",
    ));
}

fn encoding(config: &ExperimentConfig, record: &mut ResultRecord) -> Result<(), CliError> {
    let params = DisorderParams::new(config.tilde_alpha, 512)?;
    let mut failures = 0usize;
    for case in 0..20u64 {
        let seed = derive_seed(config.seed, 1000 + case);
        for env in [sample_env_hat(&params, 300, seed)?, sample_env_tilde(&params, 300, seed)?] {
            let bytes_ok = Environment::from_bytes(&env.to_bytes()).as_ref() == Ok(&env);
            let text_ok = Environment::from_text(&env.to_text()).as_ref() == Ok(&env);
            failures += usize::from(!(bytes_ok && text_ok));
        }
    }
    record.checks.push(Check::new(
        "environment_encoding",
        "Environment encoding",
        failures == 0,
        format!("{failures} of 40 environments fail a binary or text round trip"),
    )
    .measured(failures as f64, 0.0, -(failures as f64)));
    Ok(())
}
