//! Special functions used by the renewal and free-energy code.

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Bernoulli numbers B_2, B_4, ..., B_12.
const BERNOULLI_EVEN: [f64; 6] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
];

/// Point where the direct summation hands over to Euler-Maclaurin.
const EM_START: u64 = 16;

/// Hurwitz-type tail `sum_{n >= m} n^{-s}` for `s > 1`, `m >= 1`.
///
/// Direct summation up to [`EM_START`], then Euler-Maclaurin with six
/// Bernoulli corrections. Relative accuracy is at the level of 1e-15.
pub fn power_tail_sum(s: f64, m: u64) -> f64 {
    assert!(s > 1.0, "power_tail_sum needs s > 1");
    let m = m.max(1);
    let start = m.max(EM_START);
    let mut head = 0.0;
    // Summed from the largest term down for accuracy.
    for n in (m..start).rev() {
        head += (n as f64).powf(-s);
    }
    head + euler_maclaurin_power_tail(s, start as f64)
}

fn euler_maclaurin_power_tail(s: f64, m: f64) -> f64 {
    let fm = m.powf(-s);
    let mut total = m.powf(1.0 - s) / (s - 1.0) + 0.5 * fm;
    // rising factorial (s)_{2k-1} and factorial (2k)!
    let mut rising = s;
    let mut fact = 2.0;
    let mut power = fm / m;
    for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
        if k > 0 {
            let j = (2 * k) as f64;
            rising *= (s + j - 1.0) * (s + j);
            fact *= (j + 1.0) * (j + 2.0);
            power /= m * m;
        }
        total += b / fact * rising * power;
    }
    total
}

/// Riemann zeta function for real `s > 1`.
pub fn zeta(s: f64) -> f64 {
    power_tail_sum(s, 1)
}

/// Upper incomplete gamma `Γ(a, z)` for real `a` (not a non-positive
/// integer) and `z > 0`.
pub fn upper_gamma(a: f64, z: f64) -> f64 {
    assert!(z > 0.0, "upper_gamma needs z > 0");
    if z >= 1.0 {
        upper_gamma_continued_fraction(a, z)
    } else {
        gamma(a) - lower_gamma_series(a, z)
    }
}

fn lower_gamma_series(a: f64, z: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..500 {
        ap += 1.0;
        term *= z / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (a * z.ln() - z).exp()
}

// Modified Lentz evaluation of the Legendre continued fraction.
fn upper_gamma_continued_fraction(a: f64, z: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = z + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (a * z.ln() - z).exp() * h
}

/// `log(sum(exp(values)))`; empty input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Dot product with a fixed eight-lane accumulation order, so results are
/// bit-reproducible and the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let rem_a = chunks_a.remainder();
    let rem_b = chunks_b.remainder();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in rem_a.iter().zip(rem_b) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}
