//! Correlated `{0, -1}` environments built from a renewal process.
//!
//! Construction A draws renewal points from the hat law and gives every
//! stretch `(t_{i-1}, t_i]` an independent fair sign in `{0, -1}`.
//! Construction B draws points from the geometric-mixture law and labels
//! stretches alternately `0, -1, 0, ...`; its law is that of A conditioned
//! on the first sign being 0.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::renewal::{make_power_law, renewal_mass_table, reversed_kernel, InterArrivalLaw};
use crate::rng::{rng_from_seed, Rng};
use crate::special::dot;

/// Parameters of the disorder renewal.
#[derive(Debug, Clone)]
pub struct DisorderParams {
    tilde_alpha: f64,
    hat_horizon: usize,
    hat_law: InterArrivalLaw,
}

impl DisorderParams {
    pub fn new(tilde_alpha: f64, hat_horizon: usize) -> Result<Self> {
        if !(tilde_alpha > 1.0) || !tilde_alpha.is_finite() {
            return Err(Error::DisorderExponentTooSmall(tilde_alpha));
        }
        let hat_law = make_power_law(tilde_alpha, hat_horizon)?;
        Ok(Self {
            tilde_alpha,
            hat_horizon,
            hat_law,
        })
    }

    pub fn tilde_alpha(&self) -> f64 {
        self.tilde_alpha
    }

    pub fn hat_horizon(&self) -> usize {
        self.hat_horizon
    }

    pub fn hat_law(&self) -> &InterArrivalLaw {
        &self.hat_law
    }

    fn check(&self, requested: usize) -> Result<()> {
        if requested > self.hat_horizon {
            Err(Error::HorizonExceedsCache {
                requested,
                cached: self.hat_horizon,
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Construction {
    /// Independent fair signs per stretch.
    #[serde(rename = "A")]
    Independent,
    /// Alternating signs over the mixture renewal, starting with 0.
    #[serde(rename = "B")]
    Alternating,
}

impl Construction {
    pub fn tag(self) -> u8 {
        match self {
            Construction::Independent => b'A',
            Construction::Alternating => b'B',
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            b'A' => Some(Construction::Independent),
            b'B' => Some(Construction::Alternating),
            _ => None,
        }
    }
}

/// One realization of the disorder on sites `1..=len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    omega: Vec<i8>,
    hat_points: Vec<usize>,
    signs: Vec<i8>,
    construction: Construction,
    tilde_alpha: f64,
    hat_horizon: usize,
    seed: u64,
}

impl Environment {
    /// Builds and validates an environment from its generating data.
    ///
    /// `hat_points` starts at 0 and is strictly increasing; only its last
    /// element may reach or pass `length`. A missing closing point means the
    /// last stretch is open. `signs` holds one value per stretch meeting
    /// `[1, length]`.
    pub fn from_parts(
        construction: Construction,
        hat_points: Vec<usize>,
        signs: Vec<i8>,
        length: usize,
        tilde_alpha: f64,
        hat_horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        if hat_points.first() != Some(&0) {
            return Err(Error::Decode("renewal points must start at 0".into()));
        }
        if hat_points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Decode("renewal points must increase".into()));
        }
        let closing = hat_points.iter().filter(|&&p| p >= length).count();
        if closing > 1 || (closing == 1 && length > 0 && hat_points[hat_points.len() - 1] < length) {
            return Err(Error::Decode("renewal points extend past the environment".into()));
        }
        if length == 0 && hat_points.len() > 1 {
            return Err(Error::Decode("empty environment with stretches".into()));
        }
        let stretches = if length == 0 {
            0
        } else {
            stretch_index(&hat_points, length) + 1
        };
        if signs.len() != stretches {
            return Err(Error::Decode(format!(
                "{} signs for {} stretches",
                signs.len(),
                stretches
            )));
        }
        if signs.iter().any(|&s| s != 0 && s != -1) {
            return Err(Error::Decode("signs must be 0 or -1".into()));
        }
        if construction == Construction::Alternating
            && signs
                .iter()
                .enumerate()
                .any(|(i, &s)| s != if i % 2 == 0 { 0 } else { -1 })
        {
            return Err(Error::Decode("alternating signs must read 0,-1,0,...".into()));
        }
        let mut omega = Vec::with_capacity(length);
        for (i, &sign) in signs.iter().enumerate() {
            let end = hat_points.get(i + 1).copied().unwrap_or(length).min(length);
            let start = hat_points[i];
            omega.extend(std::iter::repeat_n(sign, end - start));
        }
        debug_assert_eq!(omega.len(), length);
        Ok(Self {
            omega,
            hat_points,
            signs,
            construction,
            tilde_alpha,
            hat_horizon,
            seed,
        })
    }

    /// `omega[n - 1]` is the disorder at site `n`.
    pub fn omega(&self) -> &[i8] {
        &self.omega
    }

    /// Disorder at site `n >= 1`.
    pub fn at(&self, n: usize) -> i8 {
        self.omega[n - 1]
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn hat_points(&self) -> &[usize] {
        &self.hat_points
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn tilde_alpha(&self) -> f64 {
        self.tilde_alpha
    }

    pub fn hat_horizon(&self) -> usize {
        self.hat_horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of the stretch `(t_i, t_{i+1}]` containing `site >= 1`.
    pub fn stretch_of(&self, site: usize) -> usize {
        stretch_index(&self.hat_points, site)
    }

    /// Number of stretches meeting `[1, n]`.
    pub fn stretches_up_to(&self, n: usize) -> usize {
        if n == 0 {
            0
        } else {
            self.stretch_of(n) + 1
        }
    }

    /// Bounds `(start, end)` of stretch `i`, meaning sites `start+1..=end`;
    /// `None` for the end of an open last stretch.
    pub fn stretch_bounds(&self, i: usize) -> (usize, Option<usize>) {
        (self.hat_points[i], self.hat_points.get(i + 1).copied())
    }

    /// Maximal runs of constant disorder as `(value, length)`.
    pub fn runs(&self) -> Vec<(i8, usize)> {
        let mut out: Vec<(i8, usize)> = Vec::new();
        for &w in &self.omega {
            match out.last_mut() {
                Some((v, l)) if *v == w => *l += 1,
                _ => out.push((w, 1)),
            }
        }
        out
    }

    /// Disorder as `f64` values, ready for the DP.
    pub fn omega_f64(&self) -> Vec<f64> {
        self.omega.iter().map(|&w| w as f64).collect()
    }
}

fn stretch_index(points: &[usize], site: usize) -> usize {
    points.partition_point(|&p| p < site) - 1
}

fn sample_points(law: &InterArrivalLaw, length: usize, limit: usize, rng: &mut Rng) -> Vec<usize> {
    let mut points = vec![0];
    let mut current = 0;
    while current < length {
        match law.draw_gap(rng, limit - current) {
            Some(gap) => {
                current += gap;
                points.push(current);
            }
            // gap overshoots the horizon, hence also the environment
            None => break,
        }
    }
    points
}

/// Construction A on sites `1..=length`.
pub fn sample_env_hat(params: &DisorderParams, length: usize, seed: u64) -> Result<Environment> {
    params.check(length)?;
    let mut rng = rng_from_seed(seed);
    let points = sample_points(&params.hat_law, length, params.hat_horizon, &mut rng);
    let stretches = if length == 0 {
        0
    } else {
        stretch_index(&points, length) + 1
    };
    let signs: Vec<i8> = (0..stretches)
        .map(|_| if rng.random::<bool>() { 0 } else { -1 })
        .collect();
    Environment::from_parts(
        Construction::Independent,
        points,
        signs,
        length,
        params.tilde_alpha,
        params.hat_horizon,
        seed,
    )
}

/// Geometric mixture `K~(n) = sum_k 2^{-k} P(hat tau_k = n)`, tabulated to
/// `horizon` through `K~(n) = K(n)/2 + (1/2) sum_{j<n} K(j) K~(n-j)`.
///
/// The survival function comes from its own recursion
/// `S~(n) = S(n) + (1/2) sum_{j<=n} K(j) S~(n-j)`, so that
/// `sum_{n<=H} K~(n) + S~(H) = 1` is a non-trivial consistency check.
pub fn tilde_interarrival_law(params: &DisorderParams, horizon: usize) -> Result<InterArrivalLaw> {
    params.check(horizon)?;
    let horizon = horizon.max(2);
    params.hat_law.check_horizon(horizon)?;
    let hat = &params.hat_law;
    let kernel = reversed_kernel(hat.pmf_table(), horizon);
    let mut pmf = vec![0.0; horizon + 1];
    let mut survival = vec![0.0; horizon + 1];
    survival[0] = 1.0;
    for n in 1..=horizon {
        // sum_{j=1}^{n-1} K(j) K~(n-j) = sum_{m=1}^{n-1} K~(m) K(n-m)
        let mix = dot(&pmf[1..n], &kernel[horizon - n + 1..horizon]);
        pmf[n] = 0.5 * hat.pmf(n) + 0.5 * mix;
        let carry = dot(&survival[..n], &kernel[horizon - n..horizon]);
        survival[n] = hat.survival(n) + 0.5 * carry;
    }
    let mean = hat.mean().map(|m| 2.0 * m);
    InterArrivalLaw::tabulated(
        params.tilde_alpha,
        2.0 * hat.normalizer(),
        pmf,
        survival,
        mean,
    )
}

/// Construction B on sites `1..=length`.
pub fn sample_env_tilde(params: &DisorderParams, length: usize, seed: u64) -> Result<Environment> {
    let law = tilde_interarrival_law(params, length)?;
    sample_env_tilde_with(params, &law, length, seed)
}

/// Construction B using a precomputed mixture law.
pub fn sample_env_tilde_with(
    params: &DisorderParams,
    tilde_law: &InterArrivalLaw,
    length: usize,
    seed: u64,
) -> Result<Environment> {
    params.check(length)?;
    tilde_law.check_horizon(length)?;
    let mut rng = rng_from_seed(seed);
    let points = sample_points(tilde_law, length, tilde_law.horizon(), &mut rng);
    let stretches = if length == 0 {
        0
    } else {
        stretch_index(&points, length) + 1
    };
    let signs: Vec<i8> = (0..stretches)
        .map(|i| if i % 2 == 0 { 0 } else { -1 })
        .collect();
    Environment::from_parts(
        Construction::Alternating,
        points,
        signs,
        length,
        params.tilde_alpha,
        params.hat_horizon,
        seed,
    )
}

/// `Cov(omega_i, omega_{i+k})` for `k = 0..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceTable {
    pub base_index: usize,
    pub values: Vec<f64>,
}

/// Exact covariance under construction A.
///
/// Sites `i` and `i+k` share a stretch iff the last renewal `l <= i-1`
/// is followed by a gap of at least `i+k-l`, so
/// `Cov = (1/4) sum_{l=0}^{i-1} u(l) P(gap > i+k-1-l)`.
pub fn exact_covariance(params: &DisorderParams, i: usize, k_max: usize) -> Result<CovarianceTable> {
    if i == 0 {
        return Err(Error::InvalidArgument("sites are numbered from 1".into()));
    }
    params.check(i + k_max)?;
    let mass = renewal_mass_table(&params.hat_law, i - 1)?;
    let top = i + k_max - 1;
    let survival = params.hat_law.survival_table();
    let reversed: Vec<f64> = (0..=top).map(|t| survival[top - t]).collect();
    let mut values = Vec::with_capacity(k_max + 1);
    values.push(0.25);
    for k in 1..=k_max {
        let lo = top + 1 - i - k;
        values.push(0.25 * dot(&mass.u, &reversed[lo..lo + i]));
    }
    Ok(CovarianceTable {
        base_index: i,
        values,
    })
}

const MAGIC: &[u8; 8] = b"PLENV\x001\n";

impl Environment {
    /// Binary encoding, all integers little-endian:
    ///
    /// ```text
    /// magic      8 bytes  "PLENV\01\n"
    /// tag        u8       'A' | 'B'
    /// alpha~     f64
    /// horizon    u64
    /// seed       u64
    /// length     u64
    /// npoints    u64, then npoints x u64 renewal points
    /// nsigns     u64, then ceil(nsigns/8) bytes, bit set = -1
    /// omega      ceil(length/8) bytes, bit set = -1, LSB first
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(self.construction.tag());
        out.extend_from_slice(&self.tilde_alpha.to_le_bytes());
        for v in [self.hat_horizon as u64, self.seed, self.omega.len() as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.hat_points.len() as u64).to_le_bytes());
        for &p in &self.hat_points {
            out.extend_from_slice(&(p as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.signs.len() as u64).to_le_bytes());
        out.extend(pack_bits(&self.signs));
        out.extend(pack_bits(&self.omega));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Decode("bad magic".into()));
        }
        let construction = Construction::from_tag(r.take(1)?[0])
            .ok_or_else(|| Error::Decode("unknown construction tag".into()))?;
        let tilde_alpha = f64::from_le_bytes(r.array()?);
        let hat_horizon = r.usize()?;
        let seed = r.u64()?;
        let length = r.usize()?;
        let npoints = r.usize()?;
        if npoints > r.remaining() / 8 {
            return Err(Error::Decode("point count exceeds input".into()));
        }
        let mut points = Vec::with_capacity(npoints);
        for _ in 0..npoints {
            points.push(r.usize()?);
        }
        let nsigns = r.usize()?;
        let signs = unpack_bits(r.take(nsigns.div_ceil(8))?, nsigns);
        let omega_bytes = r.take(length.div_ceil(8))?;
        if r.remaining() != 0 {
            return Err(Error::Decode("trailing bytes".into()));
        }
        let env = Environment::from_parts(
            construction,
            points,
            signs,
            length,
            tilde_alpha,
            hat_horizon,
            seed,
        )?;
        if unpack_bits(omega_bytes, length) != env.omega {
            return Err(Error::Decode("disorder bits disagree with stretches".into()));
        }
        Ok(env)
    }

    /// Line-oriented text encoding with the same content as [`Self::to_bytes`].
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let bits = |v: &[i8]| v.iter().map(|&s| if s == 0 { '0' } else { '1' }).collect::<String>();
        format!(
            "# pinlab environment v1\nconstruction={}\ntilde_alpha={}\nhat_horizon={}\nseed={}\nlength={}\nhat_points={}\nsigns={}\nomega={}\n",
            self.construction.tag() as char,
            self.tilde_alpha,
            self.hat_horizon,
            self.seed,
            self.omega.len(),
            join(&self.hat_points),
            bits(&self.signs),
            bits(&self.omega),
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("# pinlab environment v1") {
            return Err(Error::Decode("missing header line".into()));
        }
        let mut field = |name: &str| -> Result<&str> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Decode(format!("missing field {name}")))?;
            line.strip_prefix(name)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| Error::Decode(format!("expected field {name}")))
        };
        let parse_err = |name: &str| Error::Decode(format!("unparsable field {name}"));
        let construction = match field("construction")? {
            "A" => Construction::Independent,
            "B" => Construction::Alternating,
            _ => return Err(Error::Decode("unknown construction tag".into())),
        };
        let tilde_alpha: f64 = field("tilde_alpha")?
            .parse()
            .map_err(|_| parse_err("tilde_alpha"))?;
        let hat_horizon: usize = field("hat_horizon")?
            .parse()
            .map_err(|_| parse_err("hat_horizon"))?;
        let seed: u64 = field("seed")?.parse().map_err(|_| parse_err("seed"))?;
        let length: usize = field("length")?.parse().map_err(|_| parse_err("length"))?;
        let points = field("hat_points")?
            .split_ascii_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| parse_err("hat_points")))
            .collect::<Result<Vec<_>>>()?;
        let bits = |s: &str, name: &str| -> Result<Vec<i8>> {
            s.chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(-1),
                    _ => Err(parse_err(name)),
                })
                .collect()
        };
        let signs = bits(field("signs")?, "signs")?;
        let omega = bits(field("omega")?, "omega")?;
        if lines.any(|l| !l.is_empty()) {
            return Err(Error::Decode("trailing content".into()));
        }
        if omega.len() != length {
            return Err(Error::Decode("omega length disagrees with header".into()));
        }
        let env = Environment::from_parts(
            construction,
            points,
            signs,
            length,
            tilde_alpha,
            hat_horizon,
            seed,
        )?;
        if env.omega != omega {
            return Err(Error::Decode("disorder disagrees with stretches".into()));
        }
        Ok(env)
    }
}

fn pack_bits(values: &[i8]) -> Vec<u8> {
    let mut out = vec![0u8; values.len().div_ceil(8)];
    for (i, &v) in values.iter().enumerate() {
        if v != 0 {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], count: usize) -> Vec<i8> {
    (0..count)
        .map(|i| if bytes[i / 8] >> (i % 8) & 1 == 1 { -1 } else { 0 })
        .collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Decode("unexpected end of input".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array(&mut self) -> Result<[u8; 8]> {
        Ok(self.take(8)?.try_into().expect("8 bytes"))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Decode("integer overflow".into()))
    }
}
