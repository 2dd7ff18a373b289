//! Discrete renewal processes with power-law inter-arrival laws.
//!
//! The exact law used throughout is `K(n) = n^{-(1+a)} / zeta(1+a)`, so the
//! tail constant is `1 / zeta(1+a)`. Laws built by other means (the
//! geometric mixture used for the alternating environment) share the same
//! [`InterArrivalLaw`] type but carry tabulated values only.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::special::{dot, power_tail_sum, zeta};

/// Tolerance on `|sum K - 1|` accepted when a law is constructed.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum TailModel {
    /// `K(n) = n^{-s} / norm` for every `n`, including beyond the cache.
    PurePower { s: f64, norm: f64 },
    /// Values known only up to the cache horizon.
    Tabulated,
}

/// A recurrent inter-arrival distribution `K(.)` on `{1, 2, ...}` with
/// cached probabilities and survival values up to a working horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct InterArrivalLaw {
    exponent: f64,
    normalizer: f64,
    pmf: Vec<f64>,
    survival: Vec<f64>,
    mean: Option<f64>,
    tail: TailModel,
}

impl InterArrivalLaw {
    /// Law built from explicit tables: `pmf[n] = K(n)` (with `pmf[0] = 0`)
    /// and `survival[n] = P(gap > n)`, both indexed `0..=horizon`.
    pub fn tabulated(
        exponent: f64,
        normalizer: f64,
        pmf: Vec<f64>,
        survival: Vec<f64>,
        mean: Option<f64>,
    ) -> Result<Self> {
        if pmf.len() != survival.len() || pmf.len() < 3 {
            return Err(Error::InvalidArgument(
                "pmf and survival tables must have equal length >= 3".into(),
            ));
        }
        if pmf[0] != 0.0 || pmf[1..].iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidArgument(
                "pmf must vanish at 0 and be positive elsewhere".into(),
            ));
        }
        if (survival[0] - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "survival(0) = {} is not 1",
                survival[0]
            )));
        }
        Ok(Self {
            exponent,
            normalizer,
            pmf,
            survival,
            mean,
            tail: TailModel::Tabulated,
        })
    }

    /// Tail exponent (the `a` in `K(n) ~ c n^{-(1+a)}`).
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Asymptotic tail constant `c`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Largest `n` with cached values.
    pub fn horizon(&self) -> usize {
        self.pmf.len() - 1
    }

    /// `E[gap]`, or `None` when infinite.
    pub fn mean(&self) -> Option<f64> {
        self.mean
    }

    pub fn is_pure_power(&self) -> bool {
        matches!(self.tail, TailModel::PurePower { .. })
    }

    /// `(s, zeta(s))` for pure power laws.
    pub(crate) fn power_parameters(&self) -> Option<(f64, f64)> {
        match self.tail {
            TailModel::PurePower { s, norm } => Some((s, norm)),
            TailModel::Tabulated => None,
        }
    }

    /// `K(n)`; zero for `n = 0`. Panics past the cache for tabulated laws.
    pub fn pmf(&self, n: usize) -> f64 {
        if let Some(p) = self.pmf.get(n) {
            return *p;
        }
        match self.tail {
            TailModel::PurePower { s, norm } => (n as f64).powf(-s) / norm,
            TailModel::Tabulated => panic!("K({n}) requested beyond horizon {}", self.horizon()),
        }
    }

    /// `P(gap > n)`.
    pub fn survival(&self, n: usize) -> f64 {
        if let Some(p) = self.survival.get(n) {
            return *p;
        }
        match self.tail {
            TailModel::PurePower { s, norm } => power_tail_sum(s, n as u64 + 1) / norm,
            TailModel::Tabulated => panic!("survival({n}) requested beyond horizon"),
        }
    }

    /// Cached `K(0..=horizon)`.
    pub fn pmf_table(&self) -> &[f64] {
        &self.pmf
    }

    /// Cached `P(gap > n)` for `n = 0..=horizon`.
    pub fn survival_table(&self) -> &[f64] {
        &self.survival
    }

    pub(crate) fn check_horizon(&self, requested: usize) -> Result<()> {
        if requested > self.horizon() {
            Err(Error::HorizonExceedsCache {
                requested,
                cached: self.horizon(),
            })
        } else {
            Ok(())
        }
    }

    /// Draws one gap by inverting the survival table. Returns `None` when
    /// the gap exceeds `limit` (the draw is censored).
    pub fn draw_gap(&self, rng: &mut Rng, limit: usize) -> Option<usize> {
        let limit = limit.min(self.horizon());
        // u in (0, 1]; gap = min { n : survival(n) < u }.
        let u = 1.0 - rng.random::<f64>();
        if limit == 0 || self.survival[limit] >= u {
            return None;
        }
        let above = self.survival[1..=limit].partition_point(|&s| s >= u);
        Some(above + 1)
    }
}

/// Exact zeta-normalized power law `K(n) = n^{-(1+exponent)} / zeta(1+exponent)`,
/// cached up to `horizon`.
pub fn make_power_law(exponent: f64, horizon: usize) -> Result<InterArrivalLaw> {
    if !(exponent > 0.0) || !exponent.is_finite() {
        return Err(Error::NonPositiveExponent(exponent));
    }
    if exponent == 1.0 {
        return Err(Error::ExponentOne);
    }
    if horizon < 2 {
        return Err(Error::HorizonTooSmall { horizon, min: 2 });
    }
    let s = 1.0 + exponent;
    let norm = zeta(s);
    let mut pmf = vec![0.0; horizon + 1];
    for (n, p) in pmf.iter_mut().enumerate().skip(1) {
        *p = (n as f64).powf(-s) / norm;
    }
    // Survival from the exact tail at the horizon, accumulated downwards.
    let mut survival = vec![0.0; horizon + 1];
    survival[horizon] = power_tail_sum(s, horizon as u64 + 1) / norm;
    for n in (1..=horizon).rev() {
        survival[n - 1] = survival[n] + pmf[n];
    }
    debug_assert!((survival[0] - 1.0).abs() < NORMALIZATION_TOL);
    let mean = (exponent > 1.0).then(|| zeta(exponent) / norm);
    Ok(InterArrivalLaw {
        exponent,
        normalizer: 1.0 / norm,
        pmf,
        survival,
        mean,
        tail: TailModel::PurePower { s, norm },
    })
}

/// Renewal points `0 = t_0 < t_1 < ...` up to a horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenewalPath {
    pub points: Vec<usize>,
    pub horizon: usize,
    /// True iff the last sampled gap overshot the horizon.
    pub censored: bool,
}

impl RenewalPath {
    pub fn gaps(&self) -> impl Iterator<Item = usize> + '_ {
        self.points.windows(2).map(|w| w[1] - w[0])
    }

    pub fn gap_count(&self) -> usize {
        self.points.len() - 1
    }
}

/// Samples a renewal path on `[0, horizon]` by CDF inversion.
pub fn sample_path(law: &InterArrivalLaw, horizon: usize, seed: u64) -> Result<RenewalPath> {
    law.check_horizon(horizon)?;
    let mut rng = rng_from_seed(seed);
    Ok(sample_path_with(law, horizon, &mut rng))
}

pub(crate) fn sample_path_with(law: &InterArrivalLaw, horizon: usize, rng: &mut Rng) -> RenewalPath {
    let mut points = vec![0];
    let mut current = 0;
    let mut censored = false;
    while current < horizon {
        match law.draw_gap(rng, horizon - current) {
            Some(gap) => {
                current += gap;
                points.push(current);
            }
            None => {
                censored = true;
                break;
            }
        }
    }
    RenewalPath {
        points,
        horizon,
        censored,
    }
}

/// Longest of the first `N` gaps and the smallest index attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapExtremum {
    pub max_gap: usize,
    /// 1-based.
    pub argmax_index: usize,
}

pub fn longest_gap(path: &RenewalPath, first_n_gaps: usize) -> Result<GapExtremum> {
    longest_of(path.gaps(), first_n_gaps, path.gap_count())
}

/// [`longest_gap`] on a raw gap sequence.
pub fn longest_of_gaps(gaps: &[usize], first_n_gaps: usize) -> Result<GapExtremum> {
    longest_of(gaps.iter().copied(), first_n_gaps, gaps.len())
}

fn longest_of(
    gaps: impl Iterator<Item = usize>,
    first_n_gaps: usize,
    available: usize,
) -> Result<GapExtremum> {
    if first_n_gaps == 0 || available < first_n_gaps {
        return Err(Error::NotEnoughGaps {
            requested: first_n_gaps,
            available,
        });
    }
    let mut best = GapExtremum {
        max_gap: 0,
        argmax_index: 0,
    };
    for (i, g) in gaps.take(first_n_gaps).enumerate() {
        // strict comparison keeps the smallest attaining index
        if g > best.max_gap {
            best = GapExtremum {
                max_gap: g,
                argmax_index: i + 1,
            };
        }
    }
    Ok(best)
}

/// `u(n) = P(n in tau)` for `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalMassTable {
    pub u: Vec<f64>,
}

impl RenewalMassTable {
    /// `E |tau ∩ [0, n]| = sum_{k <= n} u(k)`.
    pub fn expected_count(&self, n: usize) -> f64 {
        self.u[..=n].iter().sum()
    }
}

/// Renewal recursion `u(n) = sum_{j=1}^{n} K(j) u(n-j)`, `O(n_max^2)`.
pub fn renewal_mass_table(law: &InterArrivalLaw, n_max: usize) -> Result<RenewalMassTable> {
    law.check_horizon(n_max)?;
    let reversed = reversed_kernel(law.pmf_table(), n_max);
    let mut u = vec![0.0; n_max + 1];
    u[0] = 1.0;
    for n in 1..=n_max {
        u[n] = dot(&u[..n], &reversed[n_max - n..n_max]);
    }
    Ok(RenewalMassTable { u })
}

/// `r[i] = K(len - i)` for `i in 0..len`, so that
/// `sum_{j<n} v[j] K(n-j) = dot(v[..n], r[len-n..len])`.
pub(crate) fn reversed_kernel(values: &[f64], len: usize) -> Vec<f64> {
    (0..len).map(|i| values[len - i]).collect()
}

/// Law of the `N`-th renewal point, `P(sigma_N = x)` for `x <= x_cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NStepLaw {
    pub steps: usize,
    pub pmf: Vec<f64>,
    /// `P(sigma_N > x_cap)`.
    pub truncation_mass: f64,
}

impl NStepLaw {
    pub fn x_cap(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().sum::<f64>() + self.truncation_mass
    }
}

/// A distribution on `0..=cap` plus the mass beyond `cap`.
#[derive(Debug, Clone)]
struct Truncated {
    pmf: Vec<f64>,
    beyond: f64,
}

impl Truncated {
    fn convolve(&self, other: &Truncated) -> Truncated {
        let cap = self.pmf.len() - 1;
        let mut pmf = vec![0.0; cap + 1];
        for (i, &a) in self.pmf.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.pmf[..=cap - i].iter().enumerate() {
                pmf[i + j] += a * b;
            }
        }
        // Mass pushed past the cap, tracked term by term.
        let mut suffix = vec![0.0; cap + 2];
        for j in (0..=cap).rev() {
            suffix[j] = suffix[j + 1] + other.pmf[j];
        }
        let in_cap_self: f64 = self.pmf.iter().sum();
        let crossing: f64 = self
            .pmf
            .iter()
            .enumerate()
            .map(|(i, &a)| a * suffix[cap + 1 - i])
            .sum();
        let beyond = self.beyond + in_cap_self * other.beyond + crossing;
        Truncated { pmf, beyond }
    }
}

/// Exact `N`-fold convolution by repeated squaring, truncated at `x_cap`.
pub fn n_step_law(law: &InterArrivalLaw, steps: usize, x_cap: usize) -> Result<NStepLaw> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if x_cap < steps {
        return Err(Error::CapTooSmall { cap: x_cap, steps });
    }
    law.check_horizon(x_cap)?;
    let mut base = Truncated {
        pmf: law.pmf_table()[..=x_cap].to_vec(),
        beyond: law.survival(x_cap),
    };
    let mut acc: Option<Truncated> = None;
    let mut remaining = steps;
    loop {
        if remaining & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => a.convolve(&base),
            });
        }
        remaining >>= 1;
        if remaining == 0 {
            break;
        }
        base = base.convolve(&base);
    }
    let acc = acc.expect("steps >= 1");
    Ok(NStepLaw {
        steps,
        pmf: acc.pmf,
        truncation_mass: acc.beyond,
    })
}

/// `P(tau ∩ A != ∅)` for `A ⊆ [1, M]`, by first-entry decomposition.
pub fn hitting_probability(law: &InterArrivalLaw, target_set: &[usize], m: usize) -> Result<f64> {
    law.check_horizon(m)?;
    let mut in_target = vec![false; m + 1];
    for &a in target_set {
        if a == 0 || a > m {
            return Err(Error::SetOutOfRange { element: a, max: m });
        }
        in_target[a] = true;
    }
    let reversed = reversed_kernel(law.pmf_table(), m);
    // avoid[n] = P(n in tau, tau avoids A on [1, n]); zero on A.
    let mut avoid = vec![0.0; m + 1];
    avoid[0] = 1.0;
    let mut hit = 0.0;
    for n in 1..=m {
        let arrive = dot(&avoid[..n], &reversed[m - n..m]);
        if in_target[n] {
            hit += arrive;
        } else {
            avoid[n] = arrive;
        }
    }
    Ok(hit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_one_rejected() {
        assert_eq!(make_power_law(1.0, 10), Err(Error::ExponentOne));
        assert!(matches!(
            make_power_law(-0.5, 10),
            Err(Error::NonPositiveExponent(_))
        ));
        assert!(matches!(
            make_power_law(0.0, 10),
            Err(Error::NonPositiveExponent(_))
        ));
        assert!(matches!(
            make_power_law(0.5, 1),
            Err(Error::HorizonTooSmall { .. })
        ));
    }

    #[test]
    fn normalization_and_survival_identity() {
        for &a in &[0.3, 0.5, 1.5, 2.5] {
            let law = make_power_law(a, 1024).unwrap();
            let head: f64 = law.pmf_table().iter().sum();
            assert!((head + law.survival(1024) - 1.0).abs() < NORMALIZATION_TOL);
            assert!((law.survival(0) - 1.0).abs() < NORMALIZATION_TOL);
            for n in 1..=1024 {
                let diff = law.survival(n - 1) - law.survival(n);
                assert!((diff - law.pmf(n)).abs() < 1e-15);
                assert!(law.pmf(n) > 0.0);
            }
            // analytic extension agrees with the cache boundary
            let beyond = law.survival(1024) - law.survival(1025);
            assert!((beyond / law.pmf(1025) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tail_constant_at_horizon() {
        let law = make_power_law(0.5, 4096).unwrap();
        let n = 4096f64;
        let scaled = n.powf(1.5) * law.pmf(4096);
        assert!((scaled / law.normalizer() - 1.0).abs() < 0.01);
        assert!(law.mean().is_none());
    }

    #[test]
    fn mean_regression_constant() {
        // zeta(1.5)/zeta(2.5) to 30 digits: 1.94737246631695670006974341964
        let law = make_power_law(1.5, 16).unwrap();
        assert!((law.mean().unwrap() - 1.947_372_466_316_956_7).abs() < 1e-13);
    }

    #[test]
    fn sample_path_deterministic_and_bounded() {
        let law = make_power_law(0.5, 1000).unwrap();
        let a = sample_path(&law, 1000, 9).unwrap();
        let b = sample_path(&law, 1000, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points[0], 0);
        assert!(a.points.windows(2).all(|w| w[0] < w[1]));
        assert!(*a.points.last().unwrap() <= 1000);
        assert!(a.censored);
    }

    #[test]
    fn sample_path_horizon_one() {
        let law = make_power_law(0.5, 10).unwrap();
        for seed in 0..200 {
            let p = sample_path(&law, 1, seed).unwrap();
            assert!(p.points == vec![0] || p.points == vec![0, 1]);
        }
        assert!(matches!(
            sample_path(&law, 11, 0),
            Err(Error::HorizonExceedsCache { .. })
        ));
    }

    #[test]
    fn longest_gap_tie_break() {
        let g = longest_of_gaps(&[3, 7, 7, 2], 4).unwrap();
        assert_eq!(
            g,
            GapExtremum {
                max_gap: 7,
                argmax_index: 2
            }
        );
        let g = longest_of_gaps(&[5], 1).unwrap();
        assert_eq!(
            g,
            GapExtremum {
                max_gap: 5,
                argmax_index: 1
            }
        );
        assert!(matches!(
            longest_of_gaps(&[1, 2], 3),
            Err(Error::NotEnoughGaps { .. })
        ));
        let path = RenewalPath {
            points: vec![0, 3, 10, 17, 19],
            horizon: 20,
            censored: true,
        };
        assert_eq!(longest_gap(&path, 4).unwrap().argmax_index, 2);
        assert_eq!(longest_gap(&path, 1).unwrap().max_gap, 3);
    }

    #[test]
    fn renewal_mass_base_cases() {
        let law = make_power_law(0.5, 100).unwrap();
        let t = renewal_mass_table(&law, 100).unwrap();
        assert_eq!(t.u[0], 1.0);
        assert!((t.u[1] - law.pmf(1)).abs() < 1e-16);
        let u2 = law.pmf(2) + law.pmf(1) * law.pmf(1);
        assert!((t.u[2] - u2).abs() < 1e-16);
        assert!(t.u.iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn n_step_small_cases() {
        let law = make_power_law(1.5, 64).unwrap();
        let one = n_step_law(&law, 1, 64).unwrap();
        for x in 1..=64 {
            assert_eq!(one.pmf[x], law.pmf(x));
        }
        assert_eq!(one.pmf[0], 0.0);
        let two = n_step_law(&law, 2, 64).unwrap();
        let direct: f64 = (1..=4).map(|j| law.pmf(j) * law.pmf(5 - j)).sum();
        assert!((two.pmf[5] - direct).abs() < 1e-16);
        assert!(matches!(
            n_step_law(&law, 5, 4),
            Err(Error::CapTooSmall { cap: 4, steps: 5 })
        ));
    }

    #[test]
    fn hitting_base_cases() {
        let law = make_power_law(0.5, 64).unwrap();
        let all: Vec<usize> = (1..=64).collect();
        let p = hitting_probability(&law, &all, 64).unwrap();
        assert!((p - (1.0 - law.survival(64))).abs() < 1e-12);
        let p1 = hitting_probability(&law, &[1], 1).unwrap();
        assert_eq!(p1, law.pmf(1));
        assert!(matches!(
            hitting_probability(&law, &[0], 4),
            Err(Error::SetOutOfRange { .. })
        ));
        assert!(matches!(
            hitting_probability(&law, &[5], 4),
            Err(Error::SetOutOfRange { .. })
        ));
        assert_eq!(hitting_probability(&law, &[], 8).unwrap(), 0.0);
    }
}
