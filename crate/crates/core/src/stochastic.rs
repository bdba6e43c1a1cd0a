//! Durations, distributions, and counter-indexed sampling.
//!
//! Every random draw is a pure function of `(seed, index)`: the index
//! selects a ChaCha stream under a key derived from the seed, so a draw
//! never depends on what was sampled before it. Rules thread the index
//! forward one step per draw, whatever the distribution.

use std::fmt;
use std::ops::{Add, Mul};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

/// Nonnegative exact rational time.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Time(BigRational);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("`{0}` is not a rational literal")]
    Syntax(String),
    #[error("time values must be nonnegative, got `{0}`")]
    Negative(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

impl Time {
    pub fn zero() -> Time {
        Time(BigRational::zero())
    }

    pub fn from_integer(n: u64) -> Time {
        Time(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn ratio(num: u64, den: u64) -> Time {
        assert!(den != 0, "zero denominator");
        Time(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// Exact value of a finite float; negative and non-finite inputs map
    /// to zero.
    pub fn from_f64_clamped(x: f64) -> Time {
        if x.is_nan() || x <= 0.0 || x.is_infinite() {
            return Time::zero();
        }
        Time(BigRational::from_float(x).expect("finite float"))
    }

    pub fn from_rational(r: BigRational) -> Result<Time, TimeError> {
        if r.is_negative() {
            Err(TimeError::Negative(r.to_string()))
        } else {
            Ok(Time(r))
        }
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Saturating subtraction.
    pub fn monus(&self, other: &Time) -> Time {
        if self.0 <= other.0 {
            Time::zero()
        } else {
            Time(&self.0 - &other.0)
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::INFINITY)
    }
}

impl Add for &Time {
    type Output = Time;
    fn add(self, rhs: &Time) -> Time {
        Time(&self.0 + &rhs.0)
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl Mul for &Time {
    type Output = Time;
    fn mul(self, rhs: &Time) -> Time {
        Time(&self.0 * &rhs.0)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Time({self})")
    }
}

/// Parses `p`, `p/q` or a decimal literal such as `0.15`, exactly.
impl FromStr for Time {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Time, TimeError> {
        let s = s.trim();
        let bad = || TimeError::Syntax(s.to_string());
        let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
        if s.starts_with('-') {
            return Err(TimeError::Negative(s.to_string()));
        }
        let value = if let Some((p, q)) = s.split_once('/') {
            let (p, q) = (p.trim(), q.trim());
            if !digits(p) || !digits(q) {
                return Err(bad());
            }
            let q: BigInt = q.parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(TimeError::ZeroDenominator(s.to_string()));
            }
            BigRational::new(p.parse().map_err(|_| bad())?, q)
        } else if let Some((int, frac)) = s.split_once('.') {
            if !digits(int) || !digits(frac) {
                return Err(bad());
            }
            let scale = BigInt::from(10u32).pow(frac.len() as u32);
            let whole: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
            BigRational::new(whole, scale)
        } else {
            if !digits(s) {
                return Err(bad());
            }
            BigRational::from_integer(s.parse().map_err(|_| bad())?)
        };
        Ok(Time(value))
    }
}

impl One for Time {
    fn one() -> Time {
        Time(BigRational::one())
    }
}

impl Mul for Time {
    type Output = Time;
    fn mul(self, rhs: Time) -> Time {
        Time(self.0 * rhs.0)
    }
}

/// Seed and draw index of a run's random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleCounter {
    pub seed: u64,
    pub index: u64,
}

impl SampleCounter {
    pub fn new(seed: u64) -> SampleCounter {
        SampleCounter { seed, index: 0 }
    }

    /// Private generator for the current index; the counter moves on.
    fn next_stream(&mut self) -> ChaCha8Rng {
        let rng = stream(self.seed, self.index);
        self.index += 1;
        rng
    }
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform in `[0, 1)` with 53 bits of precision.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `(0, 1)`.
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u = unit(rng);
        if u > 0.0 {
            return u;
        }
    }
}

/// Marsaglia's polar method.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u = 2.0 * unit(rng) - 1.0;
        let v = 2.0 * unit(rng) - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Marsaglia-Tsang, with the usual boost for shape < 1.
fn standard_gamma(rng: &mut ChaCha8Rng, shape: f64) -> f64 {
    if shape < 1.0 {
        let g = standard_gamma(rng, shape + 1.0);
        return g * open_unit(rng).powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z = standard_normal(rng);
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = open_unit(rng);
        if u.ln() < 0.5 * z * z + d - d * v + d * v.ln() {
            return d * v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid distribution {0}")]
pub struct DistributionError(pub String);

/// A duration: either a constant or a named distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum StochasticExpression {
    Constant(Time),
    Norm { mean: f64, stdev: f64 },
    Exp { rate: f64 },
    Unif { lo: f64, hi: f64 },
    Gam { shape: f64, scale: f64 },
    Weib { scale: f64, shape: f64 },
    Chi { df: f64 },
    Log { mean: f64, stdev: f64 },
}

impl StochasticExpression {
    /// The fallback used wherever a time map has no entry.
    pub fn default_norm() -> StochasticExpression {
        StochasticExpression::Norm {
            mean: 1.0,
            stdev: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        use StochasticExpression::*;
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let ok = match *self {
            Constant(_) => true,
            Norm { mean, stdev } | Log { mean, stdev } => mean.is_finite() && positive(stdev),
            Exp { rate } => positive(rate),
            Unif { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Gam { shape, scale } | Weib { scale, shape } => positive(shape) && positive(scale),
            Chi { df } => positive(df),
        };
        if ok {
            Ok(())
        } else {
            Err(DistributionError(self.to_string()))
        }
    }

    /// Raw real-valued draw from the stream of one index.
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        use StochasticExpression::*;
        match *self {
            Constant(ref t) => t.to_f64(),
            Norm { mean, stdev } => mean + stdev * standard_normal(rng),
            Exp { rate } => -(1.0 - unit(rng)).ln() / rate,
            Unif { lo, hi } => lo + (hi - lo) * unit(rng),
            Gam { shape, scale } => scale * standard_gamma(rng, shape),
            Weib { scale, shape } => scale * (-(1.0 - unit(rng)).ln()).powf(1.0 / shape),
            Chi { df } => 2.0 * standard_gamma(rng, df / 2.0),
            Log { mean, stdev } => (mean + stdev * standard_normal(rng)).exp(),
        }
    }

    /// One real-valued sample; advances the counter unless constant.
    pub fn sample_real(&self, counter: &mut SampleCounter) -> f64 {
        match self {
            StochasticExpression::Constant(t) => t.to_f64(),
            dist => dist.draw(&mut counter.next_stream()),
        }
    }
}

/// Samples a duration. Constants are returned exactly without touching
/// the counter; distributions consume one index and negative draws are
/// clamped to zero.
pub fn sample_time(e: &StochasticExpression, counter: SampleCounter) -> (Time, SampleCounter) {
    match e {
        StochasticExpression::Constant(t) => (t.clone(), counter),
        dist => {
            let mut c = counter;
            let x = dist.sample_real(&mut c);
            (Time::from_f64_clamped(x), c)
        }
    }
}

/// A uniform `[0, 1)` probability draw.
pub fn sample_prob(counter: SampleCounter) -> (f64, SampleCounter) {
    let mut c = counter;
    let p = unit(&mut c.next_stream());
    (p, c)
}

/// Shortest round-tripping decimal, with a trailing `.0` on integers.
fn real(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

impl fmt::Display for StochasticExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use StochasticExpression::*;
        match self {
            Constant(t) => write!(f, "Const({t})"),
            Norm { mean, stdev } => write!(f, "Norm({}, {})", real(*mean), real(*stdev)),
            Exp { rate } => write!(f, "Exp({})", real(*rate)),
            Unif { lo, hi } => write!(f, "Unif({}, {})", real(*lo), real(*hi)),
            Gam { shape, scale } => write!(f, "Gam({}, {})", real(*shape), real(*scale)),
            Weib { scale, shape } => write!(f, "Weib({}, {})", real(*scale), real(*shape)),
            Chi { df } => write!(f, "Chi({})", real(*df)),
            Log { mean, stdev } => write!(f, "Log({}, {})", real(*mean), real(*stdev)),
        }
    }
}
