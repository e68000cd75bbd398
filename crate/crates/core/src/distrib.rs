//! Probability, surprisal and entropy kernels over logit vectors.
//!
//! All information quantities are in bits. Zero-probability classes are
//! carried as `-inf` logits and stay at exactly zero mass at every finite
//! temperature. Every kernel works from the max-shifted log-sum-exp, so no
//! probability is exponentiated and then logged again.

use std::f64::consts::LN_2;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest probability resolved by [`surprisal_t`]; anything below clamps.
pub const PROB_FLOOR: f64 = 1e-300;

/// `-log2(PROB_FLOOR)`, about 996.58 bits.
pub const SURPRISAL_CEILING: f64 = 996.578_428_466_208_7;

/// Tolerance on the total mass of a [`ProbVector`].
pub const PROB_SUM_TOL: f64 = 1e-9;

/// A vector of K >= 2 logits. `-inf` marks a class with zero probability.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    values: Vec<f64>,
    max: f64,
}

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "logit vector needs K >= 2 entries, got {}",
                values.len()
            )));
        }
        let mut max = f64::NEG_INFINITY;
        for (i, &v) in values.iter().enumerate() {
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::invalid(format!("logit {i} is {v}")));
            }
            if v > max {
                max = v;
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::invalid("all logits are -inf"));
        }
        Ok(Self { values, max })
    }

    /// Natural-log logits for a probability vector; zeros become `-inf`.
    pub fn from_probs(p: &[f64]) -> Result<Self> {
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        Self::new(p.iter().map(|&x| x.ln()).collect())
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// Index of the largest logit, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    /// Gives back the buffer so callers streaming an archive can reuse it.
    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    /// `ln sum_i exp((z_i - max) / t)`, the shifted normalizer at temperature `t`.
    fn shifted_log_norm(&self, t: f64) -> f64 {
        let m = self.max;
        let mut s = 0.0;
        if t == 1.0 {
            for &z in &self.values {
                s += (z - m).exp();
            }
        } else {
            for &z in &self.values {
                s += ((z - m) / t).exp();
            }
        }
        s.ln()
    }

    /// Natural-log probability of class `k` at temperature `t`, given the
    /// shifted normalizer from [`Self::shifted_log_norm`].
    #[inline]
    fn log_prob(&self, k: usize, t: f64, log_norm: f64) -> f64 {
        let z = self.values[k];
        if z == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        (z - self.max) / t - log_norm
    }

    fn check_class(&self, k: usize) -> Result<()> {
        if k >= self.values.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A probability vector summing to one within [`PROB_SUM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty probability vector"));
        }
        if let Some(i) = values.iter().position(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid(format!(
                "probability {i} = {} outside [0, 1]",
                values[i]
            )));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Softmax temperature, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0) || t.is_nan() {
            return Err(Error::invalid(format!("temperature must be > 0, got {t}")));
        }
        Ok(Self(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;
    fn try_from(t: f64) -> Result<Self> {
        Temperature::new(t)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

/// Order of a Rényi entropy, `alpha >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RenyiOrder(f64);

impl RenyiOrder {
    pub const ZERO: RenyiOrder = RenyiOrder(0.0);
    pub const HALF: RenyiOrder = RenyiOrder(0.5);
    pub const SHANNON: RenyiOrder = RenyiOrder(1.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!(
                "Renyi order must be finite and >= 0, got {alpha}"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Surprisal in bits. `saturated` is set when the probability fell below
/// [`PROB_FLOOR`] and the value was clamped to [`SURPRISAL_CEILING`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Surprisal {
    pub bits: f64,
    pub saturated: bool,
}

impl Surprisal {
    fn from_log_prob(ln_p: f64) -> Self {
        let bits = -ln_p / LN_2;
        if bits > SURPRISAL_CEILING || bits.is_nan() {
            Surprisal {
                bits: SURPRISAL_CEILING,
                saturated: true,
            }
        } else {
            Surprisal {
                bits,
                saturated: false,
            }
        }
    }
}

impl Add for Surprisal {
    type Output = Surprisal;
    fn add(self, rhs: Surprisal) -> Surprisal {
        Surprisal {
            bits: self.bits + rhs.bits,
            saturated: self.saturated || rhs.saturated,
        }
    }
}

impl AddAssign for Surprisal {
    fn add_assign(&mut self, rhs: Surprisal) {
        *self = *self + rhs;
    }
}

/// `softmax(z / T)` via the max-shifted exponent.
pub fn softmax_t(z: &LogitVector, t: Temperature) -> ProbVector {
    let t = t.value();
    let m = z.max;
    let mut out: Vec<f64> = if t == 1.0 {
        z.values.iter().map(|&v| (v - m).exp()).collect()
    } else {
        z.values.iter().map(|&v| ((v - m) / t).exp()).collect()
    };
    let s: f64 = out.iter().sum();
    for p in &mut out {
        *p /= s;
    }
    ProbVector(out)
}

/// Natural-log probabilities of `softmax(z / T)`; `-inf` for zero mass.
pub fn log_softmax_t(z: &LogitVector, t: Temperature) -> Vec<f64> {
    let t = t.value();
    let ln_norm = z.shifted_log_norm(t);
    (0..z.len()).map(|k| z.log_prob(k, t, ln_norm)).collect()
}

/// `-log2 softmax(z)[gold]`.
pub fn surprisal(z: &LogitVector, gold: usize) -> Result<Surprisal> {
    surprisal_t(z, gold, Temperature::ONE)
}

/// `-log2 softmax(z / T)[gold]`.
pub fn surprisal_t(z: &LogitVector, gold: usize, t: Temperature) -> Result<Surprisal> {
    z.check_class(gold)?;
    let t = t.value();
    let ln_norm = z.shifted_log_norm(t);
    Ok(Surprisal::from_log_prob(z.log_prob(gold, t, ln_norm)))
}

/// Surprisal of `gold` at each temperature in `temps`. Each entry is
/// bit-identical to the corresponding [`surprisal_t`] call.
pub fn surprisal_curve(z: &LogitVector, gold: usize, temps: &[Temperature]) -> Result<Vec<Surprisal>> {
    z.check_class(gold)?;
    Ok(temps
        .iter()
        .map(|t| {
            let t = t.value();
            let ln_norm = z.shifted_log_norm(t);
            Surprisal::from_log_prob(z.log_prob(gold, t, ln_norm))
        })
        .collect())
}

/// Word surprisal as the sum of its subword surprisals, in token order.
pub fn word_surprisal(tokens: &[(LogitVector, usize)], t: Temperature) -> Result<Surprisal> {
    if tokens.is_empty() {
        return Err(Error::invalid("word has no tokens"));
    }
    let mut total = Surprisal::default();
    for (z, gold) in tokens {
        total += surprisal_t(z, *gold, t)?;
    }
    Ok(total)
}

/// Shannon entropy of `softmax(z / T)` in bits, with `0 log 0 = 0`.
pub fn shannon_entropy(z: &LogitVector, t: Temperature) -> f64 {
    let t = t.value();
    let ln_norm = z.shifted_log_norm(t);
    let mut h = 0.0;
    for k in 0..z.len() {
        let lp = z.log_prob(k, t, ln_norm);
        if lp > f64::NEG_INFINITY {
            h -= lp.exp() * lp;
        }
    }
    (h / LN_2).max(0.0)
}

/// Shannon entropy of a probability vector in bits.
pub fn shannon_entropy_probs(p: &ProbVector) -> f64 {
    let h: f64 = p
        .0
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum();
    h.max(0.0)
}

/// Rényi entropy of order `alpha` in bits.
///
/// `alpha = 1` is the Shannon limit and `alpha = 0` is `log2` of the support
/// size; every other order uses `log2(sum p^alpha) / (1 - alpha)`.
pub fn renyi_entropy(p: &ProbVector, alpha: RenyiOrder) -> f64 {
    let a = alpha.value();
    if a == 0.0 {
        let support = p.0.iter().filter(|&&x| x > 0.0).count();
        return (support as f64).log2();
    }
    if (a - 1.0).abs() < 1e-12 {
        return shannon_entropy_probs(p);
    }
    let s: f64 = p.0.iter().filter(|&&x| x > 0.0).map(|&x| x.powf(a)).sum();
    s.log2() / (1.0 - a)
}

/// `D_KL(p || q)` in bits. Returns `+inf` when `q` puts zero mass where `p`
/// does not.
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut d = 0.0;
    for (&pi, &qi) in p.0.iter().zip(&q.0) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        d += pi * (pi / qi).log2();
    }
    Ok(d.max(0.0))
}

/// `D_KL(softmax(z / t_p) || softmax(z / t_q))` in bits, evaluated in log
/// space so near-zero probabilities keep their precision.
pub fn kl_between_temperatures(z: &LogitVector, t_p: Temperature, t_q: Temperature) -> f64 {
    if t_p == t_q {
        return 0.0;
    }
    let (tp, tq) = (t_p.value(), t_q.value());
    let np = z.shifted_log_norm(tp);
    let nq = z.shifted_log_norm(tq);
    let mut d = 0.0;
    for k in 0..z.len() {
        let lp = z.log_prob(k, tp, np);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let lq = z.log_prob(k, tq, nq);
        d += lp.exp() * (lp - lq);
    }
    (d / LN_2).max(0.0)
}

/// Logarithm base for the surprisal-variance bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    Bits,
    Nats,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Bits => x.log2(),
            LogBase::Nats => x.ln(),
        }
    }
}

/// Moments of the surprisal `-log p_i` under `i ~ p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurprisalMoments {
    /// Expected surprisal, i.e. the Shannon entropy.
    pub mean: f64,
    pub variance: f64,
    /// `E_p |s - H|`.
    pub mean_abs_dev: f64,
}

pub fn surprisal_moments(p: &ProbVector, base: LogBase) -> SurprisalMoments {
    let support = || p.0.iter().copied().filter(|&x| x > 0.0);
    let mean: f64 = support().map(|x| -x * base.log(x)).sum();
    let mut variance = 0.0;
    let mut mad = 0.0;
    for x in support() {
        let dev = -base.log(x) - mean;
        variance += x * dev * dev;
        mad += x * dev.abs();
    }
    SurprisalMoments {
        mean,
        variance,
        mean_abs_dev: mad,
    }
}

/// `1/4 log^2(K - 1) + 1` in the given base: the bound on the surprisal
/// variance over K classes. The bound is proven in nats; the bits form is
/// the one reported alongside reading-time results.
pub fn surprisal_variance_bound(k: usize, base: LogBase) -> f64 {
    let l = base.log((k - 1) as f64);
    0.25 * l * l + 1.0
}
