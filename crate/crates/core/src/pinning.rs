//! Partition functions and polymer-measure observables for the pinning
//! model on `[0, N]`.
//!
//! The pinned partial partition values satisfy
//! `z(0) = 1`, `z(n) = e^{h + beta omega_n} sum_{j<n} z(j) K(n-j)`, and
//! `Z_free = sum_{j<=N} z(j) Kbar(N-j)`. All outputs are natural logs.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::environment::{Construction, Environment};
use crate::error::{Error, Result};
use crate::renewal::{reversed_kernel, InterArrivalLaw};
use crate::rng::rng_from_seed;
use crate::special::{dot, log_sum_exp};

/// Largest size accepted by [`brute_force_partition`].
pub const BRUTE_FORCE_MAX: usize = 20;

// Stored DP values are kept below 2^RESCALE_BITS; overflowing rows are
// multiplied by an exact power of two and the exponent moved to a log shift.
const RESCALE_BITS: i32 = 600;

/// One quenched problem: renewal law, disorder, `beta`, `h` and size `N`.
#[derive(Debug, Clone, Copy)]
pub struct PinningInstance<'a> {
    law: &'a InterArrivalLaw,
    disorder: Option<&'a [i8]>,
    beta: f64,
    h: f64,
    size: usize,
}

impl<'a> PinningInstance<'a> {
    pub fn new(
        law: &'a InterArrivalLaw,
        env: &'a Environment,
        beta: f64,
        h: f64,
        size: usize,
    ) -> Result<Self> {
        Self::from_disorder(law, env.omega(), beta, h, size)
    }

    /// `omega[n - 1]` is the disorder at site `n`.
    pub fn from_disorder(
        law: &'a InterArrivalLaw,
        omega: &'a [i8],
        beta: f64,
        h: f64,
        size: usize,
    ) -> Result<Self> {
        if omega.len() < size {
            return Err(Error::EnvironmentTooShort {
                env_len: omega.len(),
                size,
            });
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::NegativeBeta(beta));
        }
        if !h.is_finite() {
            return Err(Error::InvalidArgument(format!("h must be finite, got {h}")));
        }
        Ok(Self {
            law,
            disorder: Some(omega),
            beta,
            h,
            size,
        })
    }

    /// `omega = 0` everywhere.
    pub fn homogeneous(law: &'a InterArrivalLaw, h: f64, size: usize) -> Self {
        Self {
            law,
            disorder: None,
            beta: 0.0,
            h,
            size,
        }
    }

    pub fn law(&self) -> &'a InterArrivalLaw {
        self.law
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `h + beta omega_n` for `n >= 1`.
    pub fn reward(&self, n: usize) -> f64 {
        match self.disorder {
            Some(omega) => self.h + self.beta * omega[n - 1] as f64,
            None => self.h,
        }
    }

    fn rewards(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain((1..=self.size).map(|n| self.reward(n)))
            .collect()
    }

    fn ln_kernel(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.size;
        let pmf = self.law.pmf_table();
        let surv = self.law.survival_table();
        let ln_k = pmf[..=n].iter().map(|p| p.ln()).collect();
        let ln_kbar = surv[..=n].iter().map(|p| p.ln()).collect();
        (ln_k, ln_kbar)
    }
}

/// Log-domain DP output for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTable {
    /// `log z(n)` for `n = 0..=N`.
    pub log_z_pinned: Vec<f64>,
    pub log_z_free: f64,
    /// `log z(N)`.
    pub log_z_pinned_total: f64,
}

#[derive(Serialize, Deserialize)]
struct PartitionTableJson {
    domain: String,
    size: usize,
    log_z_pinned: Vec<f64>,
    log_z_free: f64,
    log_z_pinned_total: f64,
}

impl PartitionTable {
    pub fn size(&self) -> usize {
        self.log_z_pinned.len() - 1
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PartitionTableJson {
            domain: "natural_log".into(),
            size: self.size(),
            log_z_pinned: self.log_z_pinned.clone(),
            log_z_free: self.log_z_free,
            log_z_pinned_total: self.log_z_pinned_total,
        })
        .expect("finite values serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: PartitionTableJson =
            serde_json::from_str(text).map_err(|e| Error::Decode(e.to_string()))?;
        if raw.domain != "natural_log" {
            return Err(Error::Decode(format!("unsupported domain {}", raw.domain)));
        }
        if raw.log_z_pinned.len() != raw.size.saturating_add(1) {
            return Err(Error::Decode("table length disagrees with size".into()));
        }
        let all_finite = raw.log_z_pinned.iter().all(|v| v.is_finite())
            && raw.log_z_free.is_finite()
            && raw.log_z_pinned_total.is_finite();
        if !all_finite {
            return Err(Error::Decode("non-finite log value".into()));
        }
        if raw.log_z_pinned[0] != 0.0 || raw.log_z_pinned[raw.size] != raw.log_z_pinned_total {
            return Err(Error::Decode("inconsistent boundary values".into()));
        }
        Ok(Self {
            log_z_pinned: raw.log_z_pinned,
            log_z_free: raw.log_z_free,
            log_z_pinned_total: raw.log_z_pinned_total,
        })
    }
}

/// Exact `O(N^2)` partition-function DP.
///
/// Sums are accumulated in linear scale over strictly positive terms with a
/// running power-of-two rescaling, so no overflow or cancellation occurs;
/// every stored value is reported as a natural log.
pub fn compute_partition(instance: &PinningInstance) -> Result<PartitionTable> {
    let n_max = instance.size;
    instance.law.check_horizon(n_max)?;
    let kernel = reversed_kernel(instance.law.pmf_table(), n_max);
    let boost: Vec<f64> = instance.rewards().iter().map(|r| r.exp()).collect();
    let hi = 2f64.powi(RESCALE_BITS);
    let down = 2f64.powi(-RESCALE_BITS);
    let step = RESCALE_BITS as f64 * std::f64::consts::LN_2;

    let mut scaled = vec![0.0; n_max + 1];
    let mut log_z = vec![0.0; n_max + 1];
    scaled[0] = 1.0;
    let mut shift = 0.0;
    for n in 1..=n_max {
        let value = dot(&scaled[..n], &kernel[n_max - n..n_max]) * boost[n];
        scaled[n] = value;
        log_z[n] = value.ln() + shift;
        if value > hi {
            scaled[..=n].iter_mut().for_each(|v| *v *= down);
            shift += step;
        }
    }
    let survival = instance.law.survival_table();
    let free: f64 = scaled
        .iter()
        .enumerate()
        .map(|(j, v)| v * survival[n_max - j])
        .sum();
    Ok(PartitionTable {
        log_z_free: free.ln() + shift,
        log_z_pinned_total: log_z[n_max],
        log_z_pinned: log_z,
    })
}

/// Enumerates all `2^N` contact sets. Returns `(log Z_free, log Z_pinned)`.
pub fn brute_force_partition(instance: &PinningInstance) -> Result<(f64, f64)> {
    let n = instance.size;
    if n > BRUTE_FORCE_MAX {
        return Err(Error::TooLargeForBruteForce {
            size: n,
            max: BRUTE_FORCE_MAX,
        });
    }
    instance.law.check_horizon(n)?;
    let (ln_k, ln_kbar) = instance.ln_kernel();
    let rewards = instance.rewards();
    let mut free_terms = Vec::with_capacity(1 << n);
    let mut pinned_terms = Vec::new();
    for mask in 0u32..(1u32 << n) {
        let mut weight = 0.0;
        let mut prev = 0;
        for site in 1..=n {
            if mask >> (site - 1) & 1 == 1 {
                weight += ln_k[site - prev] + rewards[site];
                prev = site;
            }
        }
        free_terms.push(weight + ln_kbar[n - prev]);
        if prev == n {
            pinned_terms.push(weight);
        }
    }
    Ok((log_sum_exp(&free_terms), log_sum_exp(&pinned_terms)))
}

/// Law of `|tau ∩ [0, N]|` (the origin counts) under the free polymer measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactDistribution {
    /// `probs[a]` for `a = 0..=a_max`; `probs[0] = 0`.
    pub probs: Vec<f64>,
    pub overflow_mass: f64,
    /// `log Z_free` recovered by summing the joint table over contact counts.
    pub log_z_free_marginal: f64,
}

impl ContactDistribution {
    pub fn a_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.overflow_mass
    }
}

/// Joint DP over position and contact count, `O(N^2 a_max)`.
///
/// Row `n` holds `z(n, c) / z(n)`, the law of the number `c` of contacts in
/// `[1, n]` under the pinned measure on `[0, n]`; it is propagated with the
/// backward transition probabilities `z(j) K(n-j) e^{h+beta omega_n} / z(n)`,
/// which keeps every entry in `[0, 1]`.
pub fn contact_distribution(instance: &PinningInstance, a_max: usize) -> Result<ContactDistribution> {
    let n_max = instance.size;
    if a_max > n_max {
        return Err(Error::CapExceedsSize {
            cap: a_max,
            size: n_max,
        });
    }
    let table = compute_partition(instance)?;
    let (ln_k, ln_kbar) = instance.ln_kernel();
    let rewards = instance.rewards();
    let lz = &table.log_z_pinned;

    // contacts in [1, n] tracked exactly up to `cap`; column cap+1 is overflow
    let cap = a_max.saturating_sub(1);
    let width = cap + 2;
    let mut rows = vec![0.0; (n_max + 1) * width];
    rows[0] = 1.0;
    let mut weights = vec![0.0; n_max];
    for n in 1..=n_max {
        let base = lz[n] - rewards[n];
        for (j, w) in weights[..n].iter_mut().enumerate() {
            *w = (lz[j] + ln_k[n - j] - base).exp();
        }
        let (done, rest) = rows.split_at_mut(n * width);
        let row = &mut rest[..width];
        for (j, &p) in weights[..n].iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let prev = &done[j * width..(j + 1) * width];
            for c in 1..=cap {
                row[c] += p * prev[c - 1];
            }
            row[cap + 1] += p * (prev[cap] + prev[cap + 1]);
        }
    }

    let mut probs = vec![0.0; a_max + 1];
    let mut overflow = 0.0;
    let mut marginal = Vec::with_capacity(n_max + 1);
    for j in 0..=n_max {
        let q = (lz[j] + ln_kbar[n_max - j] - table.log_z_free).exp();
        let row = &rows[j * width..(j + 1) * width];
        marginal.push(lz[j] + ln_kbar[n_max - j] + row.iter().sum::<f64>().ln());
        if a_max == 0 {
            overflow += q * row.iter().sum::<f64>();
            continue;
        }
        for c in 0..=cap {
            probs[c + 1] += q * row[c];
        }
        overflow += q * row[cap + 1];
    }
    Ok(ContactDistribution {
        probs,
        overflow_mass: overflow,
        log_z_free_marginal: log_sum_exp(&marginal),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Free,
    Pinned,
}

/// One trajectory: its contacts in `[1, N]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSample {
    pub contact_points: Vec<usize>,
    pub boundary: Boundary,
}

impl PathSample {
    /// `|tau ∩ [0, N]|`, the origin included.
    pub fn contact_count(&self) -> usize {
        self.contact_points.len() + 1
    }
}

/// Exact backward sampling from a computed table.
pub fn sample_paths(
    instance: &PinningInstance,
    table: &PartitionTable,
    count: usize,
    seed: u64,
    boundary: Boundary,
) -> Result<Vec<PathSample>> {
    let n_max = instance.size;
    check_table(instance, table)?;
    let (ln_k, ln_kbar) = instance.ln_kernel();
    let rewards = instance.rewards();
    let lz = &table.log_z_pinned;

    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n_max + 1];
    let cumulative_row = |n: usize| -> Vec<f64> {
        let base = lz[n] - rewards[n];
        let mut acc = 0.0;
        (0..n)
            .map(|j| {
                acc += (lz[j] + ln_k[n - j] - base).exp();
                acc
            })
            .collect()
    };
    let mut last_acc = 0.0;
    let last_contact: Vec<f64> = (0..=n_max)
        .map(|j| {
            last_acc += (lz[j] + ln_kbar[n_max - j] - table.log_z_free).exp();
            last_acc
        })
        .collect();

    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut points = Vec::new();
        let mut n = match boundary {
            Boundary::Pinned => n_max,
            Boundary::Free => pick(&last_contact, rng.random::<f64>()),
        };
        while n > 0 {
            points.push(n);
            let row = rows[n].get_or_insert_with(|| cumulative_row(n));
            n = pick(row, rng.random::<f64>());
        }
        points.reverse();
        out.push(PathSample {
            contact_points: points,
            boundary,
        });
    }
    Ok(out)
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    let total = *cumulative.last().expect("non-empty");
    let target = u * total;
    cumulative
        .partition_point(|&c| c <= target)
        .min(cumulative.len() - 1)
}

fn check_table(instance: &PinningInstance, table: &PartitionTable) -> Result<()> {
    let n_max = instance.size;
    if table.log_z_pinned.len() != n_max + 1 {
        return Err(Error::InconsistentTable(format!(
            "table covers {} sites, instance has {}",
            table.log_z_pinned.len().saturating_sub(1),
            n_max
        )));
    }
    if table.log_z_pinned[0] != 0.0 {
        return Err(Error::InconsistentTable("z(0) is not 1".into()));
    }
    instance.law.check_horizon(n_max)?;
    if n_max == 0 {
        return Ok(());
    }
    // Spot-check the last recursion step and the free sum.
    let (ln_k, ln_kbar) = instance.ln_kernel();
    let lz = &table.log_z_pinned;
    let last: Vec<f64> = (0..n_max).map(|j| lz[j] + ln_k[n_max - j]).collect();
    let pinned = log_sum_exp(&last) + instance.reward(n_max);
    let free: Vec<f64> = (0..=n_max).map(|j| lz[j] + ln_kbar[n_max - j]).collect();
    let free = log_sum_exp(&free);
    let tol = 1e-9 * (1.0 + pinned.abs());
    if (pinned - lz[n_max]).abs() > tol || (free - table.log_z_free).abs() > tol {
        return Err(Error::InconsistentTable(
            "table values do not satisfy the recursion for this instance".into(),
        ));
    }
    Ok(())
}

/// Stretches of the environment visited by a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StretchVisitStats {
    pub visited_count: usize,
    /// stretch index -> number of contacts inside it
    pub per_stretch_contacts: BTreeMap<usize, usize>,
}

pub fn stretch_visit_count(path: &PathSample, env: &Environment) -> StretchVisitStats {
    let mut per_stretch_contacts = BTreeMap::new();
    for &site in &path.contact_points {
        *per_stretch_contacts.entry(env.stretch_of(site)).or_insert(0) += 1;
    }
    StretchVisitStats {
        visited_count: per_stretch_contacts.len(),
        per_stretch_contacts,
    }
}

/// Average of `exp(beta sum omega_n 1_{n in tau})` over the stretch signs,
/// next to the bound `((1 + e^{-beta}) / 2)^{V}`, both as natural logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderAverage {
    pub log_exact: f64,
    pub log_bound: f64,
    pub visited: usize,
}

impl DisorderAverage {
    pub fn exact(&self) -> f64 {
        self.log_exact.exp()
    }

    pub fn bound(&self) -> f64 {
        self.log_bound.exp()
    }
}

pub fn disorder_average_bound(
    path: &PathSample,
    env: &Environment,
    beta: f64,
) -> Result<DisorderAverage> {
    if env.construction() != Construction::Independent {
        return Err(Error::WrongConstruction);
    }
    let stats = stretch_visit_count(path, env);
    let half = std::f64::consts::LN_2;
    let per_stretch = |c: usize| (-beta * c as f64).exp().ln_1p() - half;
    let mut log_exact = 0.0;
    let mut log_bound = 0.0;
    for &c in stats.per_stretch_contacts.values() {
        log_exact += per_stretch(c);
        log_bound += per_stretch(1);
    }
    Ok(DisorderAverage {
        log_exact,
        log_bound,
        visited: stats.visited_count,
    })
}

/// Both sides of the block coarse-graining inequality
/// `Z_N <= prod_i [ max_{x in block i} Z_[x, T_i] v 1 ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrainBound {
    pub lhs: f64,
    pub rhs: f64,
    /// `log (max_x Z_[x, T_i] v 1)` per block.
    pub block_terms: Vec<f64>,
}

impl CoarseGrainBound {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// `block_ends` are the right endpoints `T_1 < ... < T_k = N`.
pub fn coarse_grain_upper_bound(
    instance: &PinningInstance,
    block_ends: &[usize],
) -> Result<CoarseGrainBound> {
    let n_max = instance.size;
    if block_ends.is_empty() {
        return Err(Error::BadPartition("no blocks".into()));
    }
    if block_ends[0] == 0 || block_ends.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::BadPartition("block ends must strictly increase from 1".into()));
    }
    if *block_ends.last().expect("non-empty") != n_max {
        return Err(Error::BadPartition(format!("last block must end at {n_max}")));
    }
    let lhs = compute_partition(instance)?.log_z_free;
    let (ln_k, ln_kbar) = instance.ln_kernel();
    let rewards = instance.rewards();

    let mut block_terms = Vec::with_capacity(block_ends.len());
    let mut start = 0;
    for &end in block_ends {
        // g[x - start] = log Z_free of length end - x, environment shifted to x
        let len = end - start;
        let mut g = vec![0.0; len + 1];
        let mut terms = Vec::with_capacity(len + 1);
        for x in (start + 1..end).rev() {
            terms.clear();
            terms.push(ln_kbar[end - x]);
            for y in x + 1..=end {
                terms.push(ln_k[y - x] + rewards[y] + g[y - start]);
            }
            g[x - start] = log_sum_exp(&terms);
        }
        let best = (start + 1..=end)
            .map(|x| rewards[x] + g[x - start])
            .fold(f64::NEG_INFINITY, f64::max);
        block_terms.push(best.max(0.0));
        start = end;
    }
    Ok(CoarseGrainBound {
        lhs,
        rhs: block_terms.iter().sum(),
        block_terms,
    })
}
