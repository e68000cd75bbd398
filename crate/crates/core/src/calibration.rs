//! Expected calibration error (top-label), classwise calibration error, and
//! the temperature-scaled human-likeness calibration error.
//!
//! Bins are half-open `(lo, hi]`. The equal-spaced scheme bins confidence on
//! `[0, 1]`; the log scheme bins `-log2(confidence)` on `(0, log_upper]` and
//! sends anything beyond `log_upper` to the last bin. Accumulators only hold
//! per-bin sums, so shards can be accumulated independently and merged.

use serde::{Deserialize, Serialize};

use crate::distrib::{self, LogitVector, ProbVector, Temperature};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinKind {
    EqualSpaced,
    LogSpaced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningScheme {
    pub kind: BinKind,
    pub num_bins: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_upper: Option<f64>,
}

impl BinningScheme {
    pub fn equal(num_bins: usize) -> Result<Self> {
        if num_bins == 0 {
            return Err(Error::invalid("need at least one bin"));
        }
        Ok(Self {
            kind: BinKind::EqualSpaced,
            num_bins,
            log_upper: None,
        })
    }

    pub fn log(num_bins: usize, log_upper: f64) -> Result<Self> {
        if num_bins == 0 {
            return Err(Error::invalid("need at least one bin"));
        }
        if !(log_upper > 0.0) || !log_upper.is_finite() {
            return Err(Error::invalid(format!(
                "log binning needs a finite upper limit > 0, got {log_upper}"
            )));
        }
        Ok(Self {
            kind: BinKind::LogSpaced,
            num_bins,
            log_upper: Some(log_upper),
        })
    }

    /// Bin index of a probability under this scheme.
    pub fn bin_of(&self, p: f64) -> usize {
        let m = self.num_bins as f64;
        let pos = match self.kind {
            BinKind::EqualSpaced => p * m,
            BinKind::LogSpaced => {
                let upper = self.log_upper.expect("log scheme carries an upper limit");
                -p.log2() / upper * m
            }
        };
        // ceil(pos) - 1 realises (lo, hi] membership
        let idx = pos.ceil() - 1.0;
        if idx.is_nan() || idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.num_bins - 1)
        }
    }

    /// Bounds of bin `m` on the binning axis: confidence for the equal
    /// scheme, `-log2(confidence)` for the log scheme.
    pub fn bounds(&self, m: usize) -> (f64, f64) {
        let width = match self.kind {
            BinKind::EqualSpaced => 1.0,
            BinKind::LogSpaced => self.log_upper.unwrap_or(1.0),
        } / self.num_bins as f64;
        (m as f64 * width, (m + 1) as f64 * width)
    }
}

/// One top-label prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub confidence: f64,
    pub predicted: usize,
    pub gold: usize,
}

impl Prediction {
    /// Top-label prediction of `softmax(z / t)`. The predicted class is the
    /// argmax of the logits themselves, which temperature never changes.
    pub fn from_logits(z: &LogitVector, gold: usize, t: Temperature) -> Result<Self> {
        if gold >= z.len() {
            return Err(Error::IndexOutOfRange {
                index: gold,
                len: z.len(),
            });
        }
        let predicted = z.argmax();
        let confidence = distrib::surprisal_t(z, predicted, t)?.bits;
        Ok(Self {
            confidence: (-confidence).exp2(),
            predicted,
            gold,
        })
    }

    pub fn correct(&self) -> bool {
        self.predicted == self.gold
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BinSums {
    conf: f64,
    hits: f64,
    count: u64,
}

impl BinSums {
    fn merge(&mut self, o: &BinSums) {
        self.conf += o.conf;
        self.hits += o.hits;
        self.count += o.count;
    }

    fn gap(&self) -> f64 {
        (self.conf - self.hits).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub lower: f64,
    pub upper: f64,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
    pub count: u64,
}

/// Streaming top-label ECE.
#[derive(Debug, Clone)]
pub struct EceAccumulator {
    scheme: BinningScheme,
    bins: Vec<BinSums>,
    n: u64,
}

impl EceAccumulator {
    pub fn new(scheme: BinningScheme) -> Self {
        Self {
            bins: vec![BinSums::default(); scheme.num_bins],
            scheme,
            n: 0,
        }
    }

    pub fn push(&mut self, pred: &Prediction) -> Result<()> {
        if !(pred.confidence > 0.0 && pred.confidence <= 1.0) {
            return Err(Error::invalid(format!(
                "confidence {} outside (0, 1]",
                pred.confidence
            )));
        }
        let b = &mut self.bins[self.scheme.bin_of(pred.confidence)];
        b.conf += pred.confidence;
        b.hits += f64::from(u8::from(pred.correct()));
        b.count += 1;
        self.n += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &EceAccumulator) -> Result<()> {
        if self.scheme != other.scheme {
            return Err(Error::invalid("cannot merge accumulators with different schemes"));
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.merge(b);
        }
        self.n += other.n;
        Ok(())
    }

    pub fn n_samples(&self) -> u64 {
        self.n
    }

    pub fn value(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::invalid("ECE over zero samples"));
        }
        Ok(self.bins.iter().map(BinSums::gap).sum::<f64>() / self.n as f64)
    }

    pub fn per_bin(&self) -> Vec<BinSummary> {
        self.bins
            .iter()
            .enumerate()
            .map(|(m, b)| {
                let (lower, upper) = self.scheme.bounds(m);
                let denom = (b.count > 0).then_some(b.count as f64);
                BinSummary {
                    lower,
                    upper,
                    mean_confidence: denom.map(|d| b.conf / d),
                    accuracy: denom.map(|d| b.hits / d),
                    count: b.count,
                }
            })
            .collect()
    }
}

pub fn ece(predictions: &[Prediction], scheme: BinningScheme) -> Result<f64> {
    let mut acc = EceAccumulator::new(scheme);
    for p in predictions {
        acc.push(p)?;
    }
    acc.value()
}

/// Streaming classwise ECE with per-class, per-bin accumulators.
#[derive(Debug, Clone)]
pub struct CeceAccumulator {
    scheme: BinningScheme,
    k: usize,
    classes: Vec<usize>,
    bins: Vec<BinSums>,
    n: u64,
}

impl CeceAccumulator {
    /// `class_subset = None` scores all `k` classes.
    pub fn new(scheme: BinningScheme, k: usize, class_subset: Option<&[usize]>) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("CECE needs at least two classes"));
        }
        let classes: Vec<usize> = match class_subset {
            Some(c) => {
                if c.is_empty() {
                    return Err(Error::invalid("empty class subset"));
                }
                if let Some(&bad) = c.iter().find(|&&x| x >= k) {
                    return Err(Error::IndexOutOfRange { index: bad, len: k });
                }
                c.to_vec()
            }
            None => (0..k).collect(),
        };
        Ok(Self {
            bins: vec![BinSums::default(); classes.len() * scheme.num_bins],
            scheme,
            k,
            classes,
            n: 0,
        })
    }

    pub fn push(&mut self, probs: &[f64], gold: usize) -> Result<()> {
        if probs.len() != self.k {
            return Err(Error::invalid(format!(
                "expected {} class probabilities, got {}",
                self.k,
                probs.len()
            )));
        }
        if gold >= self.k {
            return Err(Error::IndexOutOfRange {
                index: gold,
                len: self.k,
            });
        }
        let m = self.scheme.num_bins;
        for (slot, &k) in self.classes.iter().enumerate() {
            let p = probs[k];
            let b = &mut self.bins[slot * m + self.scheme.bin_of(p)];
            b.conf += p;
            if k == gold {
                b.hits += 1.0;
            }
            b.count += 1;
        }
        self.n += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &CeceAccumulator) -> Result<()> {
        if self.scheme != other.scheme || self.classes != other.classes || self.k != other.k {
            return Err(Error::invalid("cannot merge incompatible CECE accumulators"));
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.merge(b);
        }
        self.n += other.n;
        Ok(())
    }

    pub fn n_samples(&self) -> u64 {
        self.n
    }

    pub fn value(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::invalid("CECE over zero samples"));
        }
        let total: f64 = self.bins.iter().map(BinSums::gap).sum();
        Ok(total / (self.n as f64 * self.classes.len() as f64))
    }
}

pub fn cece(
    probs: &[(ProbVector, usize)],
    scheme: BinningScheme,
    class_subset: Option<&[usize]>,
) -> Result<f64> {
    let k = probs
        .first()
        .map(|(p, _)| p.len())
        .ok_or_else(|| Error::invalid("CECE over zero samples"))?;
    let mut acc = CeceAccumulator::new(scheme, k, class_subset)?;
    for (p, gold) in probs {
        acc.push(p.as_slice(), *gold)?;
    }
    acc.value()
}

/// Mean KL divergence from the unscaled distribution to the one at `t_star`.
pub fn hce_ts<'a, I>(tokens: I, t_star: Temperature) -> Result<f64>
where
    I: IntoIterator<Item = &'a LogitVector>,
{
    let mut acc = HceAccumulator::new(t_star);
    for z in tokens {
        acc.push(z);
    }
    acc.value()
}

#[derive(Debug, Clone, Copy)]
pub struct HceAccumulator {
    t_star: Temperature,
    sum: f64,
    n: u64,
}

impl HceAccumulator {
    pub fn new(t_star: Temperature) -> Self {
        Self {
            t_star,
            sum: 0.0,
            n: 0,
        }
    }

    pub fn push(&mut self, z: &LogitVector) {
        self.sum += distrib::kl_between_temperatures(z, Temperature::ONE, self.t_star);
        self.n += 1;
    }

    pub fn value(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::invalid("HCE over an empty token stream"));
        }
        Ok(self.sum / self.n as f64)
    }
}

/// `max_i -log2(confidence_i)`, the upper edge of the log binning range.
pub fn empirical_log_upper(confidences: &[f64]) -> Result<f64> {
    if confidences.is_empty() {
        return Err(Error::invalid("no confidences"));
    }
    let mut upper: f64 = 0.0;
    for &c in confidences {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::invalid(format!("confidence {c} outside (0, 1]")));
        }
        upper = upper.max(-c.log2());
    }
    if upper <= 0.0 {
        return Err(Error::Degenerate(
            "every confidence is 1; log binning range is empty".into(),
        ));
    }
    Ok(upper)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub ece: f64,
    pub cece: Option<f64>,
    pub hce_ts: Option<f64>,
    pub scheme: BinningScheme,
    pub n_samples: u64,
    pub per_bin: Vec<BinSummary>,
}

/// Calibration of `softmax(z / t)` over a token stream. Needs the stream
/// twice when the log scheme's upper edge has to be measured first, so it
/// takes a closure producing a fresh iterator.
pub fn calibration_report<F, I>(
    tokens: F,
    t: Temperature,
    kind: BinKind,
    num_bins: usize,
    with_cece: bool,
    t_star: Option<Temperature>,
) -> Result<CalibrationReport>
where
    F: Fn() -> I,
    I: Iterator<Item = Result<(LogitVector, usize)>>,
{
    let mut preds = Vec::new();
    for tok in tokens() {
        let (z, gold) = tok?;
        preds.push(Prediction::from_logits(&z, gold, t)?);
    }
    if preds.is_empty() {
        return Err(Error::invalid("calibration over an empty token stream"));
    }
    let scheme = match kind {
        BinKind::EqualSpaced => BinningScheme::equal(num_bins)?,
        BinKind::LogSpaced => {
            let confs: Vec<f64> = preds.iter().map(|p| p.confidence).collect();
            BinningScheme::log(num_bins, empirical_log_upper(&confs)?)?
        }
    };
    let mut ece_acc = EceAccumulator::new(scheme);
    for p in &preds {
        ece_acc.push(p)?;
    }

    let mut cece_val = None;
    let mut hce_val = None;
    if with_cece || t_star.is_some() {
        let mut cece_acc: Option<CeceAccumulator> = None;
        let mut hce_acc = t_star.map(HceAccumulator::new);
        for tok in tokens() {
            let (z, gold) = tok?;
            if with_cece {
                let acc = match cece_acc.as_mut() {
                    Some(a) => a,
                    None => cece_acc.insert(CeceAccumulator::new(scheme, z.len(), None)?),
                };
                acc.push(distrib::softmax_t(&z, t).as_slice(), gold)?;
            }
            if let Some(h) = hce_acc.as_mut() {
                h.push(&z);
            }
        }
        cece_val = cece_acc.map(|a| a.value()).transpose()?;
        hce_val = hce_acc.map(|h| h.value()).transpose()?;
    }

    Ok(CalibrationReport {
        ece: ece_acc.value()?,
        cece: cece_val,
        hce_ts: hce_val,
        scheme,
        n_samples: ece_acc.n_samples(),
        per_bin: ece_acc.per_bin(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pred(confidence: f64, correct: bool) -> Prediction {
        Prediction {
            confidence,
            predicted: 0,
            gold: usize::from(!correct),
        }
    }

    #[test]
    fn perfect_confidence_perfect_accuracy() {
        let preds = vec![pred(1.0, true); 7];
        assert_eq!(ece(&preds, BinningScheme::equal(15).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_two_bin_example() {
        let preds = [pred(0.8, true), pred(0.8, true), pred(0.6, true), pred(0.6, false)];
        let e = ece(&preds, BinningScheme::equal(2).unwrap()).unwrap();
        assert_abs_diff_eq!(e, 0.05, epsilon = 1e-12);
    }

    #[test]
    fn single_bin_is_global_gap() {
        let preds = [pred(0.9, true), pred(0.3, false), pred(0.55, true)];
        let mean_conf: f64 = (0.9 + 0.3 + 0.55) / 3.0;
        let acc = 2.0 / 3.0;
        for scheme in [BinningScheme::equal(1).unwrap(), BinningScheme::log(1, 2.0).unwrap()] {
            assert_abs_diff_eq!(ece(&preds, scheme).unwrap(), (mean_conf - acc).abs(), epsilon = 1e-12);
        }
    }

    #[test]
    fn bins_are_left_open_right_closed() {
        let s = BinningScheme::equal(2).unwrap();
        assert_eq!(s.bin_of(0.5), 0);
        assert_eq!(s.bin_of(0.500001), 1);
        assert_eq!(s.bin_of(1.0), 1);
        assert_eq!(s.bin_of(1e-9), 0);
        let l = BinningScheme::log(4, 4.0).unwrap();
        assert_eq!(l.bin_of(1.0), 0);
        assert_eq!(l.bin_of(0.5), 0);
        assert_eq!(l.bin_of(0.25), 1);
        assert_eq!(l.bin_of(1.0 / 16.0), 3);
        // beyond the upper edge clamps into the last bin
        assert_eq!(l.bin_of(1e-9), 3);
        assert_eq!(l.bin_of(0.0), 3);
    }

    #[test]
    fn rejects_empty_and_bad_input() {
        assert!(ece(&[], BinningScheme::equal(3).unwrap()).is_err());
        assert!(ece(&[pred(0.0, true)], BinningScheme::equal(3).unwrap()).is_err());
        assert!(BinningScheme::equal(0).is_err());
        assert!(BinningScheme::log(3, 0.0).is_err());
        assert!(cece(&[], BinningScheme::equal(3).unwrap(), None).is_err());
    }

    #[test]
    fn cece_examples() {
        let half = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let data: Vec<_> = (0..10).map(|i| (half.clone(), i % 2)).collect();
        for m in [1, 2, 15] {
            assert_abs_diff_eq!(cece(&data, BinningScheme::equal(m).unwrap(), None).unwrap(), 0.0, epsilon = 1e-15);
        }
        let wrong = ProbVector::new(vec![1.0, 0.0]).unwrap();
        let data: Vec<_> = (0..6).map(|_| (wrong.clone(), 1)).collect();
        assert_abs_diff_eq!(cece(&data, BinningScheme::equal(15).unwrap(), None).unwrap(), 1.0, epsilon = 1e-15);
        // one class alone carries the same per-class gap
        assert_abs_diff_eq!(
            cece(&data, BinningScheme::equal(15).unwrap(), Some(&[0])).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(cece(&data, BinningScheme::equal(15).unwrap(), Some(&[2])).is_err());
    }

    #[test]
    fn hce_examples() {
        let z = LogitVector::from_probs(&[0.8, 0.2]).unwrap();
        assert_eq!(hce_ts([&z], Temperature::ONE).unwrap(), 0.0);
        let t2 = Temperature::new(2.0).unwrap();
        let q1 = 0.8f64.sqrt() / (0.8f64.sqrt() + 0.2f64.sqrt());
        let want = 0.8 * (0.8 / q1).log2() + 0.2 * (0.2 / (1.0 - q1)).log2();
        let one = hce_ts([&z], t2).unwrap();
        assert_abs_diff_eq!(one, want, epsilon = 1e-14);
        assert_abs_diff_eq!(one, 0.0631, epsilon = 1e-4);
        assert_abs_diff_eq!(hce_ts([&z, &z], t2).unwrap(), one, epsilon = 1e-15);
        assert!(hce_ts(std::iter::empty::<&LogitVector>(), t2).is_err());
    }

    #[test]
    fn empirical_log_upper_examples() {
        assert_abs_diff_eq!(empirical_log_upper(&[0.9, 4.99e-3, 0.3]).unwrap(), 7.65, epsilon = 5e-3);
        assert_abs_diff_eq!(empirical_log_upper(&[0.5, 0.7]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(empirical_log_upper(&[8.15e-3]).unwrap(), 6.94, epsilon = 5e-3);
        assert!(empirical_log_upper(&[0.5, 0.0]).is_err());
        assert!(empirical_log_upper(&[0.5, -0.1]).is_err());
        assert!(empirical_log_upper(&[]).is_err());
    }

    #[test]
    fn merged_shards_match_single_pass() {
        let preds: Vec<_> = (0..200)
            .map(|i| pred(0.05 + 0.9 * ((i * 37) % 200) as f64 / 200.0, i % 3 != 0))
            .collect();
        let scheme = BinningScheme::log(15, 5.0).unwrap();
        let mut whole = EceAccumulator::new(scheme);
        let mut a = EceAccumulator::new(scheme);
        let mut b = EceAccumulator::new(scheme);
        for (i, p) in preds.iter().enumerate() {
            whole.push(p).unwrap();
            if i % 2 == 0 { a.push(p).unwrap() } else { b.push(p).unwrap() }
        }
        b.merge(&a).unwrap();
        let (x, y) = (whole.value().unwrap(), b.value().unwrap());
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-300));
        assert_eq!(b.per_bin().iter().map(|s| s.count).sum::<u64>(), 200);
    }
}
