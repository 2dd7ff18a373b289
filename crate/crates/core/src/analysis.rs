//! Free energies, quenched estimation over disorder replicas, exponent and
//! contact-tail fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{sample_env_hat, DisorderParams, Environment};
use crate::error::{Error, Result};
use crate::pinning::{compute_partition, contact_distribution, PartitionTable, PinningInstance};
use crate::renewal::{renewal_mass_table, InterArrivalLaw};
use crate::rng::derive_seed;
use crate::special::{gamma, log_sum_exp, upper_gamma};
use crate::stats::{least_squares, linear_fit, mean_stderr};

/// Terms summed directly before the tail of a pure power law is integrated.
const DIRECT_TERMS: usize = 4096;

/// Progress hook, called with the replica index after each finished replica.
pub type Progress<'a> = Option<&'a (dyn Fn(usize) + Sync)>;

/// `sum_n K(n) (1 - e^{-b n})`, increasing in `b >= 0`.
///
/// Pure power laws are summed exactly: terms below [`DIRECT_TERMS`] directly,
/// the rest by Euler-Maclaurin around a closed-form integral. Tabulated laws
/// put their tail mass `Kbar(H)` at `H + 1`.
pub fn characteristic_gap(law: &InterArrivalLaw, b: f64) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    match law.power_parameters() {
        Some((s, norm)) => {
            let head: f64 = (1..DIRECT_TERMS)
                .rev()
                .map(|n| {
                    let x = n as f64;
                    x.powf(-s) * -(-b * x).exp_m1()
                })
                .sum();
            (head + power_gap_tail(s, b, DIRECT_TERMS as f64)) / norm
        }
        None => {
            let horizon = law.horizon();
            let pmf = law.pmf_table();
            let head: f64 = (1..=horizon)
                .rev()
                .map(|n| pmf[n] * -(-b * n as f64).exp_m1())
                .sum();
            head + law.survival(horizon) * -(-b * (horizon + 1) as f64).exp_m1()
        }
    }
}

// sum_{n >= m} n^{-s} (1 - e^{-b n})
fn power_gap_tail(s: f64, b: f64, m: f64) -> f64 {
    let alpha = s - 1.0;
    let z = b * m;
    let integral = if z < 1.0 {
        // b^alpha * int_z^inf t^{-s} (1 - e^{-t}) dt, by its power series
        let mut sum = -gamma(-alpha);
        let mut fact = 1.0;
        let mut zn = 1.0;
        for n in 1..200 {
            fact *= n as f64;
            zn *= -z;
            let term = zn * z.powf(-alpha) / (fact * (n as f64 - alpha));
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        b.powf(alpha) * sum
    } else {
        m.powf(-alpha) / alpha - b.powf(alpha) * upper_gamma(-alpha, z)
    };
    let decay = (-z).exp();
    let phi = m.powf(-s) * -(-z).exp_m1();
    let dphi = -s * m.powf(-s - 1.0) * -(-z).exp_m1() + m.powf(-s) * b * decay;
    integral + phi / 2.0 - dphi / 12.0
}

/// Free energy of the homogeneous model: 0 for `h <= 0`, otherwise the root
/// `b > 0` of `sum_n K(n) e^{-b n} = e^{-h}`, found by bisection.
pub fn homogeneous_free_energy(law: &InterArrivalLaw, h: f64) -> f64 {
    if !(h > 0.0) {
        return 0.0;
    }
    let target = -(-h).exp_m1();
    let (mut lo, mut hi) = (0.0f64, h);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
            break;
        }
        if characteristic_gap(law, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `|sum_n K(n) e^{-f n} - e^{-h}|` for a candidate free energy `f`.
pub fn characteristic_residual(law: &InterArrivalLaw, h: f64, f: f64) -> f64 {
    (characteristic_gap(law, f) + (-h).exp_m1()).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubadditiveEntry {
    pub size: usize,
    /// `h + log Z_{N,h}`
    pub log_lhs: f64,
    /// `N F(h)`
    pub log_rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubadditiveReport {
    pub h: f64,
    pub free_energy: f64,
    pub entries: Vec<SubadditiveEntry>,
}

impl SubadditiveReport {
    pub fn holds(&self) -> bool {
        self.entries.iter().all(|e| e.margin >= 0.0)
    }
}

/// Checks `e^h Z_{N,h} >= e^{N F(h)}` for the homogeneous free partition
/// function at every requested size.
pub fn subadditive_bound_check(
    law: &InterArrivalLaw,
    h: f64,
    sizes: &[usize],
) -> Result<SubadditiveReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("needs h > 0, got {h}")));
    }
    let n_max = sizes.iter().copied().max().unwrap_or(0);
    let table = compute_partition(&PinningInstance::homogeneous(law, h, n_max))?;
    let f = homogeneous_free_energy(law, h);
    let survival = law.survival_table();
    let entries = sizes
        .iter()
        .map(|&n| {
            let terms: Vec<f64> = (0..=n)
                .map(|j| table.log_z_pinned[j] + survival[n - j].ln())
                .collect();
            let log_lhs = h + log_sum_exp(&terms);
            let log_rhs = n as f64 * f;
            SubadditiveEntry {
                size: n,
                log_lhs,
                log_rhs,
                margin: log_lhs - log_rhs,
            }
        })
        .collect();
    Ok(SubadditiveReport {
        h,
        free_energy: f,
        entries,
    })
}

/// System size, replica count and master seed of a replica experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaPlan {
    pub size: usize,
    pub replicas: usize,
    pub seed: u64,
}

impl ReplicaPlan {
    pub fn replica_seed(&self, r: usize) -> u64 {
        derive_seed(self.seed, r as u64)
    }

    fn check(&self) -> Result<()> {
        if self.size == 0 || self.size > crate::MAX_EXACT_SIZE {
            return Err(Error::InvalidArgument(format!(
                "size must lie in 1..={}, got {}",
                crate::MAX_EXACT_SIZE,
                self.size
            )));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidArgument("at least one replica needed".into()));
        }
        Ok(())
    }
}

/// Quenched estimate of `(1/N) log Z^pin` over independent environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyEstimate {
    pub h: f64,
    pub beta: f64,
    pub size: usize,
    pub replicas: usize,
    pub seed: u64,
    pub mean: f64,
    pub stderr: f64,
    pub per_replica: Vec<f64>,
    pub log_z_pinned: Vec<f64>,
    /// Longest-stretch lower bound on `log Z^pin` per replica, when the
    /// longest complete stretch in `[0, N]` carries `omega = 0`.
    pub strategy_bounds: Vec<Option<f64>>,
}

impl FreeEnergyEstimate {
    /// Builds an estimate from per-replica `log Z^pin` values.
    pub fn from_log_partitions(
        h: f64,
        beta: f64,
        plan: ReplicaPlan,
        log_z_pinned: Vec<f64>,
        strategy_bounds: Vec<Option<f64>>,
    ) -> Self {
        let per_replica: Vec<f64> = log_z_pinned.iter().map(|v| v / plan.size as f64).collect();
        let (mean, stderr) = mean_stderr(&per_replica);
        Self {
            h,
            beta,
            size: plan.size,
            replicas: per_replica.len(),
            seed: plan.seed,
            mean,
            stderr,
            per_replica,
            log_z_pinned,
            strategy_bounds,
        }
    }

    /// Replicas where `log Z^pin` falls below its longest-stretch bound.
    pub fn strategy_violations(&self) -> usize {
        self.log_z_pinned
            .iter()
            .zip(&self.strategy_bounds)
            .filter(|(z, b)| b.is_some_and(|b| **z < b))
            .count()
    }
}

/// `log` of `K(a) e^{h-beta} Z^pin_{b-a,h} K(N-b) e^{h-beta}` for the longest
/// complete stretch `(a, b]` inside `[0, N]` (first one on ties), dropping the
/// outer factors when `a = 0` or `b = N`. `None` when that stretch has
/// `omega = -1` or no stretch fits.
pub fn longest_stretch_bound(
    env: &Environment,
    law: &InterArrivalLaw,
    beta: f64,
    h: f64,
    size: usize,
    homogeneous: &PartitionTable,
) -> Option<f64> {
    let points = env.hat_points();
    let mut best: Option<(usize, usize, usize)> = None;
    for i in 1..points.len() {
        let (a, b) = (points[i - 1], points[i]);
        if b > size {
            break;
        }
        if best.is_none_or(|(_, ba, bb)| b - a > bb - ba) {
            best = Some((i - 1, a, b));
        }
    }
    let (stretch, a, b) = best?;
    if env.signs()[stretch] != 0 {
        return None;
    }
    let mut bound = homogeneous.log_z_pinned[b - a];
    if a > 0 {
        bound += law.pmf(a).ln() + h - beta;
    }
    if b < size {
        bound += law.pmf(size - b).ln() + h - beta;
    }
    Some(bound)
}

/// Quenched free energy at one `(beta, h)`: construction-A environments with
/// seeds `derive_seed(seed, r)`, full-length pinned partition functions.
pub fn quenched_free_energy(
    params: &DisorderParams,
    law: &InterArrivalLaw,
    beta: f64,
    h: f64,
    plan: ReplicaPlan,
    progress: Progress,
) -> Result<FreeEnergyEstimate> {
    plan.check()?;
    let homogeneous = compute_partition(&PinningInstance::homogeneous(law, h, plan.size))?;
    let results: Vec<(f64, Option<f64>)> = (0..plan.replicas)
        .into_par_iter()
        .map(|r| {
            let env = sample_env_hat(params, plan.size, plan.replica_seed(r))?;
            let inst = PinningInstance::new(law, &env, beta, h, plan.size)?;
            let table = compute_partition(&inst)?;
            let bound = longest_stretch_bound(&env, law, beta, h, plan.size, &homogeneous);
            if let Some(report) = progress {
                report(r);
            }
            Ok((table.log_z_pinned_total, bound))
        })
        .collect::<Result<_>>()?;
    let (log_z, bounds) = results.into_iter().unzip();
    Ok(FreeEnergyEstimate::from_log_partitions(h, beta, plan, log_z, bounds))
}

/// Quenched estimates along an `h` grid; every grid point reuses the same
/// replica environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyCurve {
    pub beta: f64,
    pub alpha: f64,
    pub tilde_alpha: f64,
    pub points: Vec<FreeEnergyEstimate>,
}

impl FreeEnergyCurve {
    pub const CSV_HEADER: &'static str = "h,mean,stderr,N,R,seed";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.h, p.mean, p.stderr, p.size, p.replicas, p.seed
            ));
        }
        out
    }

    /// Pairs of adjacent grid points whose means decrease by more than
    /// twice the combined standard error.
    pub fn monotonicity_violations(&self) -> usize {
        self.points
            .windows(2)
            .filter(|w| w[1].mean < w[0].mean - 2.0 * (w[0].stderr + w[1].stderr))
            .count()
    }
}

pub fn free_energy_curve(
    params: &DisorderParams,
    law: &InterArrivalLaw,
    beta: f64,
    hs: &[f64],
    plan: ReplicaPlan,
    progress: Progress,
) -> Result<FreeEnergyCurve> {
    let points = hs
        .iter()
        .map(|&h| quenched_free_energy(params, law, beta, h, plan, progress))
        .collect::<Result<_>>()?;
    Ok(FreeEnergyCurve {
        beta,
        alpha: law.exponent(),
        tilde_alpha: params.tilde_alpha(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub nu: f64,
    pub nu_stderr: f64,
    pub log_correction_coeff: f64,
    /// RMS residual of the free fit in `(log h, log F)` coordinates.
    pub residual: f64,
    pub window: (f64, f64),
    pub points_used: usize,
    /// Fit with the logarithmic coefficient fixed to `1 - tilde_alpha`.
    pub pinned_nu: f64,
    pub pinned_nu_stderr: f64,
    pub pinned_log_correction_coeff: f64,
    pub pinned_residual: f64,
}

/// Fits `log F = nu log h + gamma log|log h| + c` on the grid points inside
/// `window` whose mean exceeds three standard errors.
pub fn exponent_fit(
    curve: &FreeEnergyCurve,
    tilde_alpha: f64,
    window: (f64, f64),
) -> Result<ExponentFit> {
    let usable: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.h >= window.0 && p.h <= window.1 && p.h > 0.0 && p.h < 1.0)
        .filter(|p| p.mean > 0.0 && p.mean > 3.0 * p.stderr)
        .map(|p| (p.h, p.mean))
        .collect();
    if usable.len() < 4 {
        return Err(Error::InsufficientSignal(format!(
            "{} grid points above noise in [{}, {}], need 4",
            usable.len(),
            window.0,
            window.1
        )));
    }
    let rows: Vec<Vec<f64>> = usable
        .iter()
        .map(|&(h, _)| vec![1.0, h.ln(), h.ln().abs().ln()])
        .collect();
    let y: Vec<f64> = usable.iter().map(|&(_, f)| f.ln()).collect();
    let free = least_squares(&rows, &y)?;

    let gamma = 1.0 - tilde_alpha;
    let pinned_rows: Vec<Vec<f64>> = rows.iter().map(|r| vec![1.0, r[1]]).collect();
    let pinned_y: Vec<f64> = y.iter().zip(&rows).map(|(v, r)| v - gamma * r[2]).collect();
    let pinned = least_squares(&pinned_rows, &pinned_y)?;

    Ok(ExponentFit {
        nu: free.coefficients[1],
        nu_stderr: free.stderr[1],
        log_correction_coeff: free.coefficients[2],
        residual: free.residual_rms,
        window,
        points_used: usable.len(),
        pinned_nu: pinned.coefficients[1],
        pinned_nu_stderr: pinned.stderr[1],
        pinned_log_correction_coeff: gamma,
        pinned_residual: pinned.residual_rms,
    })
}

/// `ceil(N^{(1 ∧ alpha)/tilde_alpha}) + 64`, capped at `N`.
pub fn default_a_max(alpha: f64, tilde_alpha: f64, size: usize) -> usize {
    let exp = alpha.min(1.0) / tilde_alpha;
    let base = (size as f64).powf(exp).ceil() as usize;
    (base + 64).min(size)
}

/// `[-(tilde_alpha (alpha + 1) - 1) / (1 ∧ alpha), -tilde_alpha (1 ∨ alpha)]`.
pub fn contact_tail_band(alpha: f64, tilde_alpha: f64) -> (f64, f64) {
    (
        -(tilde_alpha * (alpha + 1.0) - 1.0) / alpha.min(1.0),
        -tilde_alpha * alpha.max(1.0),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactTailFit {
    pub slope: f64,
    pub intercept: f64,
    pub band: (f64, f64),
    pub window: (usize, usize),
    pub a_max: usize,
    /// Replica-averaged law of the contact number, `a = 0..=a_max`.
    pub probs: Vec<f64>,
    pub overflow_mass: f64,
}

impl ContactTailFit {
    /// Averaged mass on `a <= a_max`.
    pub fn mass_within_cap(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn slope_in_band(&self, slack: f64) -> bool {
        self.slope >= self.band.0 - slack && self.slope <= self.band.1 + slack
    }
}

/// Replica-averaged contact-number law at `h = 0` and its log-log slope on
/// `a_window`.
pub fn contact_tail_fit(
    params: &DisorderParams,
    law: &InterArrivalLaw,
    beta: f64,
    plan: ReplicaPlan,
    a_window: (usize, usize),
    a_max: Option<usize>,
) -> Result<ContactTailFit> {
    plan.check()?;
    let a_max = a_max.unwrap_or_else(|| default_a_max(law.exponent(), params.tilde_alpha(), plan.size));
    if a_window.0 < 1 || a_window.0 >= a_window.1 || a_window.1 > a_max {
        return Err(Error::InvalidArgument(format!(
            "window [{}, {}] must satisfy 1 <= lo < hi <= a_max = {a_max}",
            a_window.0, a_window.1
        )));
    }
    let laws: Vec<(Vec<f64>, f64)> = (0..plan.replicas)
        .into_par_iter()
        .map(|r| {
            let env = sample_env_hat(params, plan.size, plan.replica_seed(r))?;
            let inst = PinningInstance::new(law, &env, beta, 0.0, plan.size)?;
            let d = contact_distribution(&inst, a_max)?;
            Ok((d.probs, d.overflow_mass))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / plan.replicas as f64;
    let mut probs = vec![0.0; a_max + 1];
    let mut overflow = 0.0;
    for (p, o) in &laws {
        probs.iter_mut().zip(p).for_each(|(acc, v)| *acc += v * scale);
        overflow += o * scale;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = (a_window.0..=a_window.1)
        .filter(|&a| probs[a] > 0.0)
        .map(|a| ((a as f64).ln(), probs[a].ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::InsufficientSignal("no mass in the fit window".into()));
    }
    let (slope, intercept) = linear_fit(&xs, &ys)?;
    Ok(ContactTailFit {
        slope,
        intercept,
        band: contact_tail_band(law.exponent(), params.tilde_alpha()),
        window: a_window,
        a_max,
        probs,
        overflow_mass: overflow,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanContactScaling {
    pub slope: f64,
    pub intercept: f64,
    /// `(N, E|tau ∩ [0, N]|)`
    pub means: Vec<(usize, f64)>,
}

/// Log-log slope of `E|tau ∩ [0, N]|` against `N` for the free renewal.
pub fn mean_contact_scaling(law: &InterArrivalLaw, sizes: &[usize]) -> Result<MeanContactScaling> {
    let n_max = sizes.iter().copied().max().unwrap_or(0);
    let table = renewal_mass_table(law, n_max)?;
    let mut running = Vec::with_capacity(n_max + 1);
    let mut acc = 0.0;
    for &u in &table.u {
        acc += u;
        running.push(acc);
    }
    let means: Vec<(usize, f64)> = sizes.iter().map(|&n| (n, running[n])).collect();
    let xs: Vec<f64> = means.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = means.iter().map(|&(_, m)| m.ln()).collect();
    let (slope, intercept) = linear_fit(&xs, &ys)?;
    Ok(MeanContactScaling {
        slope,
        intercept,
        means,
    })
}
