//! Resumable free-energy sweeps over an `h` grid.
//!
//! After every grid point the completed estimates are written to
//! `<out>/sweep_manifest.json` (write to a temporary file, then rename). A
//! rerun with the same configuration reloads them and computes only the
//! missing points, so interrupted and uninterrupted runs give identical
//! outputs.

use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::Context;
use pinlab::analysis::{
    exponent_fit, homogeneous_free_energy, quenched_free_energy, FreeEnergyCurve, FreeEnergyEstimate,
};
use pinlab::pinning::{compute_partition, PinningInstance};
use pinlab::renewal::InterArrivalLaw;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::record::{Cell, Check, ResultRecord, Table};
use crate::run::{disorder, plan, power_law, write_atomic, RunOptions};

pub const MANIFEST: &str = "sweep_manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    /// Configuration that produced the points, with `output` cleared.
    config: ExperimentConfig,
    grid: Vec<f64>,
    completed: Vec<FreeEnergyEstimate>,
}

impl Manifest {
    fn load(path: &Path, config: &ExperimentConfig, grid: &[f64]) -> Result<Vec<FreeEnergyEstimate>, CliError> {
        let Ok(text) = std::fs::read_to_string(path) else {
            return Ok(Vec::new());
        };
        let manifest: Manifest = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        if manifest.config != *config || manifest.grid != grid {
            return Err(CliError::config(
                "output",
                format!(
                    "{} belongs to a different configuration; remove it or choose another output directory",
                    path.display()
                ),
            ));
        }
        let consistent = manifest.completed.len() <= grid.len()
            && manifest.completed.iter().zip(grid).all(|(e, &h)| e.h == h);
        if !consistent {
            return Err(CliError::Runtime(anyhow::anyhow!(
                "{} lists points that are not a prefix of the grid",
                path.display()
            )));
        }
        Ok(manifest.completed)
    }
}

/// Per-replica progress on stderr.
pub struct ProgressLine {
    quiet: bool,
    total: usize,
    label: String,
    done: AtomicUsize,
}

impl ProgressLine {
    pub fn new(quiet: bool, total: usize, label: String) -> Self {
        Self {
            quiet,
            total,
            label,
            done: AtomicUsize::new(0),
        }
    }

    pub fn tick(&self, replica: usize) {
        let done = self.done.fetch_add(1, Ordering::Relaxed) + 1;
        if !self.quiet {
            let mut err = std::io::stderr().lock();
            let _ = writeln!(err, "[{}] replica {replica} done ({done}/{})", self.label, self.total);
        }
    }
}

pub(crate) fn replica_table(points: &[FreeEnergyEstimate]) -> Table {
    let mut table = Table::new(
        "replicas",
        &["h", "replica", "seed", "log_z_pinned", "free_energy", "strategy_bound"],
    );
    for p in points {
        let plan = pinlab::analysis::ReplicaPlan {
            size: p.size,
            replicas: p.replicas,
            seed: p.seed,
        };
        for r in 0..p.replicas {
            table.push(vec![
                p.h.into(),
                r.into(),
                plan.replica_seed(r).into(),
                p.log_z_pinned[r].into(),
                p.per_replica[r].into(),
                p.strategy_bounds[r].into(),
            ]);
        }
    }
    table
}

pub(crate) fn strategy_check(points: &[FreeEnergyEstimate]) -> Check {
    let violations: usize = points.iter().map(|p| p.strategy_violations()).sum();
    let mut applicable = 0usize;
    let mut margin = f64::INFINITY;
    for p in points {
        for (z, b) in p.log_z_pinned.iter().zip(&p.strategy_bounds) {
            if let Some(b) = b {
                applicable += 1;
                margin = margin.min(z - b);
            }
        }
    }
    let mut check = Check::new(
        "longest_stretch",
        "Longest-stretch lower bound",
        violations == 0,
        format!("{violations} violations among {applicable} replicas where the longest stretch has omega = 0"),
    );
    if applicable > 0 {
        check = check.measured(margin, 0.0, margin);
    }
    check
}

/// At `beta = 0` every replica equals the homogeneous pinned value.
pub(crate) fn reduction_check(
    config: &ExperimentConfig,
    law: &InterArrivalLaw,
    points: &[FreeEnergyEstimate],
) -> Result<Check, CliError> {
    let mut worst = 0.0f64;
    for p in points {
        let hom = compute_partition(&PinningInstance::homogeneous(law, p.h, p.size))
            .context("homogeneous partition function")?;
        let exact = hom.log_z_pinned_total / p.size as f64;
        worst = worst.max((p.mean - exact).abs()).max(p.stderr);
    }
    Ok(Check::at_most(
        "homogeneous_reduction",
        "Zero-disorder reduction to the homogeneous model",
        worst,
        config.tolerance("homogeneous_abs"),
        format!("max over grid of |mean - (1/N) log Z_pin,hom| and stderr: {worst:.3e}"),
    ))
}

fn curve_table(curve: &FreeEnergyCurve) -> Table {
    let mut table = Table::new("free_energy", &["h", "mean", "stderr", "N", "R", "seed"]);
    for p in &curve.points {
        table.push(vec![
            p.h.into(),
            p.mean.into(),
            p.stderr.into(),
            p.size.into(),
            p.replicas.into(),
            p.seed.into(),
        ]);
    }
    table
}

pub(crate) fn sweep(config: &ExperimentConfig, opts: &RunOptions, record: &mut ResultRecord) -> Result<(), CliError> {
    let grid = config.h_grid.expect("validated").values();
    let law = power_law(config.alpha, config.size)?;
    let params = disorder(config, config.size)?;

    let mut identity = config.clone();
    identity.output = None;
    std::fs::create_dir_all(&opts.out_dir).with_context(|| format!("creating {}", opts.out_dir.display()))?;
    let manifest_path = opts.out_dir.join(MANIFEST);
    let mut points = Manifest::load(&manifest_path, &identity, &grid)?;
    let resumed = points.len();

    for (fresh, (i, &h)) in grid.iter().enumerate().skip(resumed).enumerate() {
        if opts.stop_after.is_some_and(|limit| fresh >= limit) {
            let partial = FreeEnergyCurve {
                beta: config.beta,
                alpha: config.alpha,
                tilde_alpha: config.tilde_alpha,
                points,
            };
            let table = curve_table(&partial);
            table.check_finite()?;
            write_atomic(&opts.out_dir.join(table.file_name()), table.to_csv().as_bytes())?;
            return Err(CliError::Interrupted {
                completed: partial.points.len(),
                total: grid.len(),
            });
        }
        let progress = ProgressLine::new(
            opts.quiet,
            config.replicas,
            format!("h {}/{} = {h:.4e}", i + 1, grid.len()),
        );
        let tick = |r: usize| progress.tick(r);
        let est = quenched_free_energy(&params, &law, config.beta, h, plan(config), Some(&tick))
            .with_context(|| format!("quenched free energy at h = {h}"))?;
        if !est.mean.is_finite() || !est.stderr.is_finite() {
            return Err(CliError::NonFinite {
                table: "free_energy".into(),
                row: i,
                column: "mean".into(),
            });
        }
        points.push(est);
        let manifest = Manifest {
            config: identity.clone(),
            grid: grid.clone(),
            completed: points,
        };
        let text = serde_json::to_string_pretty(&manifest).context("serializing the manifest")?;
        write_atomic(&manifest_path, text.as_bytes())?;
        points = manifest.completed;
    }

    let curve = FreeEnergyCurve {
        beta: config.beta,
        alpha: config.alpha,
        tilde_alpha: config.tilde_alpha,
        points,
    };
    record.scalar("resumed_points", resumed as f64);
    finish_sweep(config, &law, curve, record)
}

fn finish_sweep(
    config: &ExperimentConfig,
    law: &InterArrivalLaw,
    curve: FreeEnergyCurve,
    record: &mut ResultRecord,
) -> Result<(), CliError> {
    let mut bounds = Table::new(
        "annealed",
        &["h", "mean", "stderr", "homogeneous_free_energy", "annealed_margin"],
    );
    let k = config.tolerance("annealed_sigma");
    let mut worst = f64::NEG_INFINITY;
    for p in &curve.points {
        let f = homogeneous_free_energy(law, p.h);
        let excess = p.mean - f - k * p.stderr;
        worst = worst.max(excess);
        bounds.push(vec![p.h.into(), p.mean.into(), p.stderr.into(), f.into(), (-excess).into()]);
    }
    record.checks.push(Check::at_most(
        "annealed_bound",
        "Annealed bound",
        worst,
        0.0,
        format!("max over grid of F_est - F(h) - {k} stderr: {worst:.3e}"),
    ));

    let km = config.tolerance("monotone_sigma");
    let mut drops = 0usize;
    let mut margin = f64::INFINITY;
    for w in curve.points.windows(2) {
        let slack = w[1].mean - w[0].mean + km * (w[0].stderr + w[1].stderr);
        margin = margin.min(slack);
        drops += usize::from(slack < 0.0);
    }
    record.checks.push(
        Check::new(
            "monotone_in_h",
            "Monotonicity of the free energy in h",
            drops == 0,
            format!("{drops} adjacent pairs decrease by more than {km} combined stderr"),
        )
        .measured(margin, 0.0, margin),
    );

    let last = curve.points.last().expect("grid has points");
    let kp = config.tolerance("positivity_sigma");
    record.checks.push(Check::at_least(
        "positive_at_largest_h",
        "Positivity of the quenched free energy",
        last.mean - kp * last.stderr,
        0.0,
        format!("at h = {:.4e}: F_est = {:.4e}, stderr = {:.3e}", last.h, last.mean, last.stderr),
    ));

    record.checks.push(strategy_check(&curve.points));
    if config.beta == 0.0 {
        record.checks.push(reduction_check(config, law, &curve.points)?);
    }

    let window = config.fit_window.map_or_else(
        || {
            let g = config.h_grid.expect("validated");
            (g.min, g.max)
        },
        |[lo, hi]| (lo, hi),
    );
    let target = config.tilde_alpha / config.alpha.min(1.0);
    let band = config.tolerance("exponent_band");
    let mut fit_table = Table::new(
        "exponent_fit",
        &[
            "nu", "nu_stderr", "log_coeff", "residual", "pinned_nu", "pinned_nu_stderr",
            "pinned_log_coeff", "pinned_residual", "points_used",
        ],
    );
    match exponent_fit(&curve, config.tilde_alpha, window) {
        Ok(fit) => {
            fit_table.push(vec![
                fit.nu.into(),
                fit.nu_stderr.into(),
                fit.log_correction_coeff.into(),
                fit.residual.into(),
                fit.pinned_nu.into(),
                fit.pinned_nu_stderr.into(),
                fit.pinned_log_correction_coeff.into(),
                fit.pinned_residual.into(),
                Cell::from(fit.points_used),
            ]);
            record.scalar("nu", fit.pinned_nu);
            record.scalar("nu_free", fit.nu);
            let dev = (fit.pinned_nu - target).abs();
            record.checks.push(
                Check::new(
                    "exponent_band",
                    "Critical exponent of the quenched free energy",
                    dev <= band,
                    format!(
                        "nu = {:.3} +- {:.3} with log coefficient {:.3}; free fit nu = {:.3}, gamma = {:.3}; target {target}, band {band}",
                        fit.pinned_nu,
                        fit.pinned_nu_stderr,
                        fit.pinned_log_correction_coeff,
                        fit.nu,
                        fit.log_correction_coeff
                    ),
                )
                .measured(fit.pinned_nu, target, band - dev)
                .exploratory(),
            );
        }
        Err(e) => {
            record.checks.push(
                Check::new(
                    "exponent_band",
                    "Critical exponent of the quenched free energy",
                    false,
                    format!("no fit: {e}; target {target}"),
                )
                .exploratory(),
            );
        }
    }

    record.outputs.push(curve_table(&curve));
    record.outputs.push(bounds);
    record.outputs.push(fit_table);
    record.outputs.push(replica_table(&curve.points));
    Ok(())
}
