//! Small statistics toolkit: summaries, least squares and two-sample tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    // shifted by the first value, so equal inputs give an exact mean and 0
    let origin = values[0];
    let shift = values.iter().map(|v| v - origin).sum::<f64>() / n as f64;
    if n == 1 {
        return (origin, 0.0);
    }
    let var = values.iter().map(|v| (v - origin - shift).powi(2)).sum::<f64>() / (n - 1) as f64;
    (origin + shift, (var / n as f64).sqrt())
}

/// Ordinary least squares `y ~ X b` by Householder QR.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Residual root mean square.
    pub residual_rms: f64,
}

/// `rows[i]` is the design row for observation `i`.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<LeastSquares> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n != y.len() || p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidArgument("design matrix shape mismatch".into()));
    }
    if n < p {
        return Err(Error::InsufficientSignal(format!(
            "{n} observations for {p} parameters"
        )));
    }
    // column-major copy
    let mut a: Vec<Vec<f64>> = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut b = y.to_vec();
    let mut diag = vec![0.0; p];
    for k in 0..p {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InsufficientSignal("rank-deficient design".into()));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(k + 1) {
            let s = 2.0 * v.iter().zip(&col[k..]).map(|(x, y)| x * y).sum::<f64>() / vnorm2;
            col[k..].iter_mut().zip(&v).for_each(|(c, x)| *c -= s * x);
        }
        let s = 2.0 * v.iter().zip(&b[k..]).map(|(x, y)| x * y).sum::<f64>() / vnorm2;
        b[k..].iter_mut().zip(&v).for_each(|(c, x)| *c -= s * x);
    }
    let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if diag.iter().any(|d| d.abs() <= 1e-12 * scale) {
        return Err(Error::InsufficientSignal("rank-deficient design".into()));
    }
    // R is diag on the diagonal, a[j][i] above it
    let r = |i: usize, j: usize| if i == j { diag[i] } else { a[j][i] };
    let mut coef = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| r(i, j) * coef[j]).sum();
        coef[i] = (b[i] - s) / r(i, i);
    }
    let rss: f64 = b[p..].iter().map(|v| v * v).sum();
    let dof = n - p;
    let sigma2 = if dof > 0 { rss / dof as f64 } else { 0.0 };
    // diag of (R^T R)^{-1} via R^{-1}
    let mut rinv = vec![vec![0.0; p]; p];
    for j in 0..p {
        rinv[j][j] = 1.0 / r(j, j);
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|k| r(i, k) * rinv[k][j]).sum();
            rinv[i][j] = -s / r(i, i);
        }
    }
    let stderr = (0..p)
        .map(|i| (sigma2 * rinv[i].iter().map(|v| v * v).sum::<f64>()).sqrt())
        .collect();
    Ok(LeastSquares {
        coefficients: coef,
        stderr,
        residual_rms: (rss / n as f64).sqrt(),
    })
}

/// Slope and intercept of `y ~ a + b x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![1.0, v]).collect();
    let fit = least_squares(&rows, y)?;
    Ok((fit.coefficients[1], fit.coefficients[0]))
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = 2.0 * (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Pearson chi-square homogeneity test of two count vectors over the same
/// bins. Bins empty in both samples are dropped. Returns `(statistic, dof, p)`.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<(f64, usize, f64)> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("bin counts differ".into()));
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(Error::InsufficientSignal("empty sample".into()));
    }
    let total = (na + nb) as f64;
    let mut stat = 0.0;
    let mut bins = 0;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        bins += 1;
        let ea = col * na as f64 / total;
        let eb = col * nb as f64 / total;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    if bins < 2 {
        return Err(Error::InsufficientSignal("fewer than two occupied bins".into()));
    }
    let dof = bins - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    Ok((stat, dof, 1.0 - dist.cdf(stat)))
}

/// Pearson goodness-of-fit of observed counts against expected cell
/// probabilities. Cells with expected count below `min_expected` are pooled
/// into one. Returns `(statistic, dof, p)`.
pub fn chi_square_goodness_of_fit(
    counts: &[u64],
    probs: &[f64],
    min_expected: f64,
) -> Result<(f64, usize, f64)> {
    if counts.len() != probs.len() {
        return Err(Error::InvalidArgument("counts and probabilities differ in length".into()));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::InsufficientSignal("empty sample".into()));
    }
    let n = n as f64;
    let mut stat = 0.0;
    let mut cells = 0;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = n * p;
        if e < min_expected {
            pooled_obs += c as f64;
            pooled_exp += e;
            continue;
        }
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    if cells < 2 {
        return Err(Error::InsufficientSignal("fewer than two cells".into()));
    }
    let dof = cells - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    Ok((stat, dof, 1.0 - dist.cdf(stat)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_error() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn exact_line_recovered() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let (slope, icept) = linear_fit(&x, &y).unwrap();
        assert!((slope + 2.0).abs() < 1e-12 && (icept - 3.0).abs() < 1e-12);
    }

    #[test]
    fn three_parameter_fit() {
        let rows: Vec<Vec<f64>> = (1..20)
            .map(|i| {
                let t = i as f64 * 0.3;
                vec![1.0, t, t.ln()]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 0.5 + 1.5 * r[1] - 0.7 * r[2]).collect();
        let fit = least_squares(&rows, &y).unwrap();
        for (got, want) in fit.coefficients.iter().zip([0.5, 1.5, -0.7]) {
            assert!((got - want).abs() < 1e-10);
        }
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn noisy_line_stderr() {
        // y = x + (-1)^i; stderr of slope is sigma / sqrt(Sxx)
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![1.0, v]).collect();
        let fit = least_squares(&rows, &y).unwrap();
        let mx = 3.5;
        let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
        let resid: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(xv, yv)| yv - fit.coefficients[0] - fit.coefficients[1] * xv)
            .collect();
        let s2 = resid.iter().map(|r| r * r).sum::<f64>() / 6.0;
        assert!((fit.stderr[1] - (s2 / sxx).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        assert!(least_squares(&rows, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
        let b: Vec<f64> = a.iter().map(|v| v + 250.0).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert!((d - 0.5).abs() < 1e-12);
        assert!(p < 1e-20);
    }

    #[test]
    fn goodness_of_fit_reference() {
        let (stat, dof, _) = chi_square_goodness_of_fit(&[25, 25, 50], &[0.25, 0.25, 0.5], 5.0).unwrap();
        assert_eq!((stat, dof), (0.0, 2));
        // 60/40 against a fair coin: (10^2/50) * 2 = 4
        let (stat, dof, p) = chi_square_goodness_of_fit(&[60, 40, 0], &[0.5, 0.5, 1e-9], 5.0).unwrap();
        assert!((stat - 4.0).abs() < 1e-6);
        assert_eq!(dof, 2);
        assert!(p < 0.2);
    }

    #[test]
    fn chi_square_reference() {
        let (stat, dof, p) = chi_square_homogeneity(&[10, 20, 30], &[10, 20, 30]).unwrap();
        assert_eq!((stat, dof), (0.0, 2));
        assert!((p - 1.0).abs() < 1e-12);
        // 2x2 table, statistic 4 with 1 dof
        let (stat, dof, p) = chi_square_homogeneity(&[30, 20], &[20, 30]).unwrap();
        assert!((stat - 4.0).abs() < 1e-12);
        assert_eq!(dof, 1);
        assert!((p - 0.04550026389635842).abs() < 1e-10);
    }
}
