//! Command dispatch and output persistence.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use pinlab::analysis::{
    contact_tail_fit, homogeneous_free_energy, longest_stretch_bound, mean_contact_scaling,
    quenched_free_energy, subadditive_bound_check, ReplicaPlan,
};
use pinlab::environment::{sample_env_hat, sample_env_tilde, exact_covariance, DisorderParams, Environment};
use pinlab::pinning::{brute_force_partition, compute_partition, contact_distribution, PinningInstance};
use pinlab::renewal::{longest_of_gaps, make_power_law, n_step_law, InterArrivalLaw};
use pinlab::rng::{derive_seed, rng_from_seed};
use rayon::prelude::*;

use crate::config::{Command, ConstructionName, ExperimentConfig};
use crate::error::CliError;
use crate::record::{Check, ResultRecord, Table};
use crate::report::emit_report;

/// Smallest cached horizon used for any law.
const MIN_HORIZON: usize = 64;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub quiet: bool,
    /// Sweep only: stop after this many newly computed grid points.
    pub stop_after: Option<usize>,
    /// Names of the checks that decide the exit status; empty means all.
    pub checks: Vec<String>,
}

pub(crate) fn power_law(alpha: f64, horizon: usize) -> Result<InterArrivalLaw, CliError> {
    Ok(make_power_law(alpha, horizon.max(MIN_HORIZON)).context("building the inter-arrival law")?)
}

pub(crate) fn disorder(config: &ExperimentConfig, horizon: usize) -> Result<DisorderParams, CliError> {
    Ok(DisorderParams::new(config.tilde_alpha, horizon.max(MIN_HORIZON))
        .context("building the disorder renewal")?)
}

pub(crate) fn plan(config: &ExperimentConfig) -> ReplicaPlan {
    ReplicaPlan {
        size: config.size,
        replicas: config.replicas,
        seed: config.seed,
    }
}

fn environment(config: &ExperimentConfig, params: &DisorderParams, seed: u64) -> Result<Environment, CliError> {
    let env = match config.construction {
        ConstructionName::A => sample_env_hat(params, config.size, seed),
        ConstructionName::B => sample_env_tilde(params, config.size, seed),
    };
    Ok(env.context("sampling the environment")?)
}

/// Runs one experiment and returns its record without touching the disk,
/// except for the sweep manifest.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<ResultRecord, CliError> {
    config.validate()?;
    let started = Instant::now();
    let mut record = ResultRecord::new(config);
    match config.command {
        Command::EnvGen => env_gen(config, &mut record)?,
        Command::Partition => partition(config, &mut record)?,
        Command::Contacts => contacts(config, &mut record)?,
        Command::FreeEnergy => free_energy(config, opts, &mut record)?,
        Command::Sweep => crate::sweep::sweep(config, opts, &mut record)?,
        Command::RenewalCheck => renewal_check(config, &mut record)?,
        Command::TailFit => tail_fit(config, &mut record)?,
        Command::Verify => crate::verify::verify(config, &mut record)?,
    }
    for name in &opts.checks {
        if !record.checks.iter().any(|c| &c.name == name) {
            let known: Vec<&str> = record.checks.iter().map(|c| c.name.as_str()).collect();
            return Err(CliError::config(
                "check",
                format!("`{name}` is not a check of {} (known: {})", config.command.name(), known.join(", ")),
            ));
        }
    }
    record.select_checks(&opts.checks);
    record.finish();
    record.wall_time_seconds = started.elapsed().as_secs_f64();
    record.check_finite()?;
    Ok(record)
}

/// Writes `record.json`, one CSV per table and `report.md` into `dir`.
pub fn write_outputs(record: &ResultRecord, dir: &Path) -> Result<(), CliError> {
    record.check_finite()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for table in &record.outputs {
        write_atomic(&dir.join(table.file_name()), table.to_csv().as_bytes())?;
    }
    let json = serde_json::to_string_pretty(record).context("serializing the record")?;
    write_atomic(&dir.join("record.json"), format!("{json}\n").as_bytes())?;
    write_atomic(&dir.join("report.md"), emit_report(std::slice::from_ref(record)).as_bytes())?;
    Ok(())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

/// Runs the experiment and persists every output.
pub fn execute(config: &ExperimentConfig, opts: &RunOptions) -> Result<ResultRecord, CliError> {
    let record = run(config, opts)?;
    write_outputs(&record, &opts.out_dir)?;
    Ok(record)
}

fn env_gen(config: &ExperimentConfig, record: &mut ResultRecord) -> Result<(), CliError> {
    let params = disorder(config, config.size)?;
    let env = environment(config, &params, config.seed)?;

    let mut stretches = Table::new("stretches", &["stretch", "start", "end", "sign"]);
    for (i, w) in env.hat_points().windows(2).enumerate() {
        stretches.push(vec![i.into(), w[0].into(), w[1].into(), env.signs()[i].into()]);
    }
    let minus = env.omega().iter().filter(|&&w| w != 0).count();
    record.scalar("fraction_negative", minus as f64 / env.len() as f64);
    record.scalar("stretch_count", env.stretches_up_to(env.len()) as f64);
    record.outputs.push(stretches);

    if config.construction == ConstructionName::A && config.size >= 2 {
        let i = config.size / 2;
        let k_max = (config.size - i).min(500);
        let cov = exact_covariance(&params, i, k_max).context("exact covariance")?;
        let mut table = Table::new("covariance", &["i", "k", "covariance"]);
        for (k, v) in cov.values.iter().enumerate() {
            table.push(vec![i.into(), k.into(), (*v).into()]);
        }
        record.outputs.push(table);
    }

    let bytes_ok = Environment::from_bytes(&env.to_bytes()).as_ref() == Ok(&env);
    let text_ok = Environment::from_text(&env.to_text()).as_ref() == Ok(&env);
    record.checks.push(Check::new(
        "environment_encoding",
        "Environment encoding",
        bytes_ok && text_ok,
        format!("binary round trip {bytes_ok}, text round trip {text_ok}"),
    ));
    Ok(())
}

fn partition(config: &ExperimentConfig, record: &mut ResultRecord) -> Result<(), CliError> {
    let law = power_law(config.alpha, config.size)?;
    let params = disorder(config, config.size)?;
    let env = environment(config, &params, config.seed)?;
    let h = config.h_or(0.0);
    let inst = PinningInstance::new(&law, &env, config.beta, h, config.size).context("building the instance")?;
    let table = compute_partition(&inst).context("partition function")?;

    let mut out = Table::new("partition", &["n", "log_z_pinned"]);
    for (n, v) in table.log_z_pinned.iter().enumerate() {
        out.push(vec![n.into(), (*v).into()]);
    }
    record.outputs.push(out);
    record.scalar("log_z_free", table.log_z_free);
    record.scalar("log_z_pinned", table.log_z_pinned_total);

    record.checks.push(Check::at_least(
        "pinned_le_free",
        "Pinned versus free partition function",
        table.log_z_free - table.log_z_pinned_total,
        0.0,
        format!(
            "log Z = {:.6}, log Z_pin = {:.6}",
            table.log_z_free, table.log_z_pinned_total
        ),
    ));

    if config.size <= 14 {
        let (free, pinned) = brute_force_partition(&inst).context("enumeration")?;
        let err = (free - table.log_z_free)
            .abs()
            .max((pinned - table.log_z_pinned_total).abs());
        let tol = config.tolerance("oracle_abs");
        record.checks.push(Check::at_most(
            "brute_force_oracle",
            "Partition function against enumeration",
            err,
            tol,
            format!("max |DP - enumeration| = {err:.3e} (tol {tol:e})"),
        ));
    }

    if h > 0.0 {
        let report = subadditive_bound_check(&law, h, &[config.size]).context("subadditivity")?;
        let margin = report.entries[0].margin;
        record.checks.push(Check::at_least(
            "subadditive_bound",
            "Homogeneous partition function above exp(N F(h))",
            margin,
            0.0,
            format!("h + log Z_N - N F(h) = {margin:.6e} at N = {}", config.size),
        ));
    }

    if env.construction() == pinlab::environment::Construction::Independent {
        let hom = compute_partition(&PinningInstance::homogeneous(&law, h, config.size))
            .context("homogeneous partition function")?;
        if let Some(bound) = longest_stretch_bound(&env, &law, config.beta, h, config.size, &hom) {
            record.checks.push(Check::at_least(
                "longest_stretch",
                "Longest-stretch lower bound",
                table.log_z_pinned_total - bound,
                0.0,
                format!("log Z_pin = {:.6}, strategy bound = {bound:.6}", table.log_z_pinned_total),
            ));
        }
    }
    Ok(())
}

fn contacts(config: &ExperimentConfig, record: &mut ResultRecord) -> Result<(), CliError> {
    let law = power_law(config.alpha, config.size)?;
    let params = disorder(config, config.size)?;
    let env = environment(config, &params, config.seed)?;
    let h = config.h_or(0.0);
    let a_max = config.a_max.unwrap_or_else(|| {
        pinlab::analysis::default_a_max(config.alpha, config.tilde_alpha, config.size)
    });
    let inst = PinningInstance::new(&law, &env, config.beta, h, config.size).context("building the instance")?;
    let dist = contact_distribution(&inst, a_max).context("contact distribution")?;

    let mut table = Table::new("contacts", &["a", "probability"]);
    for (a, p) in dist.probs.iter().enumerate() {
        table.push(vec![a.into(), (*p).into()]);
    }
    record.outputs.push(table);
    record.scalar("overflow_mass", dist.overflow_mass);
    record.scalar("a_max", a_max as f64);

    let err = (dist.total_mass() - 1.0).abs();
    let tol = config.tolerance("normalization_abs");
    record.checks.push(Check::at_most(
        "contact_normalization",
        "Contact law normalization",
        err,
        tol,
        format!("|sum P(a) + overflow - 1| = {err:.3e}"),
    ));

    if config.beta == 0.0 && h < 0.0 {
        let e = h.exp();
        let k_top = 10.min(a_max.saturating_sub(1));
        let worst = (0..=k_top)
            .map(|k| {
                let geo = (1.0 - e) * e.powi(k as i32);
                (dist.probs[k + 1] / geo - 1.0).abs()
            })
            .fold(0.0, f64::max);
        let tol = config.tolerance("geometric_rel");
        record.checks.push(Check::at_most(
            "geometric_contact_law",
            "Geometric contact law in the delocalized homogeneous model",
            worst,
            tol,
            format!("max relative error against (1-e^h) e^(kh) for k <= {k_top}: {worst:.4}"),
        ));
    }
    Ok(())
}

fn free_energy(config: &ExperimentConfig, opts: &RunOptions, record: &mut ResultRecord) -> Result<(), CliError> {
    let law = power_law(config.alpha, config.size)?;
    let params = disorder(config, config.size)?;
    let h = config.h_or(0.1);
    let progress = crate::sweep::ProgressLine::new(opts.quiet, config.replicas, format!("h = {h}"));
    let report = |r: usize| progress.tick(r);
    let est = quenched_free_energy(&params, &law, config.beta, h, plan(config), Some(&report))
        .context("quenched free energy")?;
    let f_hom = homogeneous_free_energy(&law, h);

    record.outputs.push(crate::sweep::replica_table(std::slice::from_ref(&est)));
    record.scalar("mean", est.mean);
    record.scalar("stderr", est.stderr);
    record.scalar("homogeneous_free_energy", f_hom);

    let k = config.tolerance("annealed_sigma");
    record.checks.push(Check::at_most(
        "annealed_bound",
        "Annealed bound",
        est.mean - f_hom,
        k * est.stderr,
        format!("F_est = {:.6e}, F(h) = {f_hom:.6e}, stderr = {:.3e}", est.mean, est.stderr),
    ));
    record.checks.push(crate::sweep::strategy_check(std::slice::from_ref(&est)));
    if config.beta == 0.0 {
        record.checks.push(crate::sweep::reduction_check(config, &law, std::slice::from_ref(&est))?);
    }
    Ok(())
}

fn tail_fit(config: &ExperimentConfig, record: &mut ResultRecord) -> Result<(), CliError> {
    if config.h.is_some_and(|h| h != 0.0) {
        return Err(CliError::config("h", "tail-fit runs at the critical point h = 0"));
    }
    let law = power_law(config.alpha, config.size)?;
    let params = disorder(config, config.size)?;
    let [lo, hi] = config.a_window.unwrap_or([4, 32]);
    let fit = contact_tail_fit(&params, &law, config.beta, plan(config), (lo, hi), config.a_max)
        .context("contact tail fit")?;

    let mut table = Table::new("contact_tail", &["a", "probability"]);
    for (a, p) in fit.probs.iter().enumerate() {
        table.push(vec![a.into(), (*p).into()]);
    }
    record.outputs.push(table);
    record.scalar("slope", fit.slope);
    record.scalar("intercept", fit.intercept);
    record.scalar("band_low", fit.band.0);
    record.scalar("band_high", fit.band.1);
    record.scalar("overflow_mass", fit.overflow_mass);

    let slack = config.tolerance("tail_slack");
    let (blo, bhi) = (fit.band.0 - slack, fit.band.1 + slack);
    let margin = (fit.slope - blo).min(bhi - fit.slope);
    record.checks.push(
        Check::new(
            "contact_tail_band",
            "Contact-number tail exponent",
            fit.slope_in_band(slack),
            format!(
                "slope {:.4} on a in [{lo}, {hi}], allowed [{blo:.3}, {bhi:.3}]",
                fit.slope
            ),
        )
        .measured(fit.slope, (fit.band.0 + fit.band.1) / 2.0, margin),
    );
    record.checks.push(Check::at_most(
        "contact_tail_decay",
        "Contact-number tail exponent",
        fit.slope,
        0.0,
        "fitted slope must be negative",
    ));
    let mass = fit.mass_within_cap();
    let need = config.tolerance("tail_mass");
    record.checks.push(Check::at_least(
        "contact_tightness",
        "Tightness of the contact number",
        mass,
        need,
        format!("mass on a <= {} is {mass:.6}", fit.a_max),
    ));
    Ok(())
}

fn renewal_check(config: &ExperimentConfig, record: &mut ResultRecord) -> Result<(), CliError> {
    if config.size < 16 {
        return Err(CliError::config("size", "renewal-check needs size >= 16"));
    }
    let alpha = config.alpha;
    let n_top = config.size;

    // Mean number of contacts of the free renewal.
    let law = power_law(alpha, n_top)?;
    let lo = (n_top / 10).max(2);
    let mut sizes: Vec<usize> = (0..8)
        .map(|i| {
            let t = i as f64 / 7.0;
            ((lo as f64).ln() * (1.0 - t) + (n_top as f64).ln() * t).exp().round() as usize
        })
        .collect();
    sizes.dedup();
    let scaling = mean_contact_scaling(&law, &sizes).context("mean contact scaling")?;
    let mut table = Table::new("mean_contacts", &["N", "mean_contacts"]);
    for &(n, m) in &scaling.means {
        table.push(vec![n.into(), m.into()]);
    }
    record.outputs.push(table);
    let target = alpha.min(1.0);
    let dev = (scaling.slope - target).abs();
    record.checks.push(
        Check::at_most(
            "mean_contact_scaling",
            "Growth of the mean contact number",
            dev,
            config.tolerance("mean_scaling"),
            format!("log-log slope {:.4} on N in [{lo}, {n_top}], target {target}", scaling.slope),
        ),
    );

    // Local big-jump estimate for sums of gaps.
    let steps = config.steps.unwrap_or(if alpha > 1.0 { 30 } else { 20 });
    let nf = steps as f64;
    let mut jump = Table::new("big_jump", &["x", "probability", "asymptote", "ratio"]);
    if alpha > 1.0 {
        let probe = power_law(alpha, MIN_HORIZON)?;
        let m = probe.mean().expect("finite mean above 1");
        let cap = (10.0 * m * nf).floor() as usize;
        let start = ((m + 1.0) * nf).ceil() as usize;
        let law = power_law(alpha, cap)?;
        let conv = n_step_law(&law, steps, cap).context("convolution power")?;
        let (mut dev, mut at) = (0.0f64, start);
        for x in start..=cap {
            let asym = nf * (x as f64 - m * nf).powf(-(1.0 + alpha)) * law.normalizer();
            let ratio = conv.pmf[x] / asym;
            jump.push(vec![x.into(), conv.pmf[x].into(), asym.into(), ratio.into()]);
            if (ratio - 1.0).abs() > dev {
                dev = (ratio - 1.0).abs();
                at = x;
            }
        }
        record.checks.push(Check::at_most(
            "big_jump_shifted",
            "Local big-jump estimate for sums of gaps",
            dev,
            config.tolerance("big_jump_rel"),
            format!("max |P(S_N = x) / (N K(x - mN)) - 1| on [{start}, {cap}] is {dev:.4} at x = {at}, N = {steps}"),
        ));
    } else {
        let start = (50.0 * nf.powf(0.6)).ceil() as usize;
        let cap = 64 * start;
        let law = power_law(alpha, cap)?;
        let conv = n_step_law(&law, steps, cap).context("convolution power")?;
        let (mut rmin, mut rmax, mut at) = (f64::INFINITY, 0.0f64, start);
        for x in start..=cap {
            let asym = nf * law.pmf(x);
            let ratio = conv.pmf[x] / asym;
            jump.push(vec![x.into(), conv.pmf[x].into(), asym.into(), ratio.into()]);
            if ratio < rmin {
                rmin = ratio;
                at = x;
            }
            rmax = rmax.max(ratio);
        }
        let band = config.tolerance("big_jump_band");
        let dev = (1.0 - rmin).max(rmax - 1.0);
        record.checks.push(Check::at_most(
            "big_jump_centered",
            "Local big-jump estimate for sums of gaps",
            dev,
            band,
            format!("P(S_N = x) / (N K(x)) in [{rmin:.4}, {rmax:.4}] on [{start}, {cap}], minimum at x = {at}, N = {steps}"),
        ));
    }
    record.outputs.push(jump);

    // Longest of the first N gaps.
    let n = n_top as f64;
    let scale = n.powf(1.0 / alpha);
    let (blo, bhi) = (scale / n.ln().ln(), scale * n.ln());
    let horizon = ((2.0 * bhi).ceil() as usize).clamp(MIN_HORIZON, 1 << 23);
    let law = power_law(alpha, horizon)?;
    let maxima: Vec<(u64, usize, usize)> = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(config.seed, r as u64);
            let mut rng = rng_from_seed(seed);
            let gaps: Vec<usize> = (0..n_top)
                .map(|_| law.draw_gap(&mut rng, horizon).unwrap_or(horizon + 1))
                .collect();
            let ext = longest_of_gaps(&gaps, n_top).expect("enough gaps");
            (seed, ext.max_gap, ext.argmax_index)
        })
        .collect();
    let mut table = Table::new("longest_gaps", &["replica", "seed", "max_gap", "argmax"]);
    let mut inside = 0usize;
    for (r, &(seed, m, at)) in maxima.iter().enumerate() {
        table.push(vec![r.into(), seed.into(), m.into(), at.into()]);
        inside += usize::from((blo..=bhi).contains(&(m as f64)));
    }
    record.outputs.push(table);
    let frac = inside as f64 / config.replicas as f64;
    record.checks.push(Check::at_least(
        "longest_gap_bracket",
        "Growth of the longest gap",
        frac,
        config.tolerance("bracket_fraction"),
        format!(
            "{inside} of {} maxima of {n_top} gaps in [{blo:.2}, {bhi:.2}]",
            config.replicas
        ),
    ));
    Ok(())
}
