use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use rayon::prelude::*;
use serde::Serialize;

use super::grid::TemperatureGrid;
use super::sweep::with_pool;
use crate::distrib::{
    argmax, renyi_entropy, softmax_t, surprisal_moments, surprisal_t, surprisal_variance_bound, LogBase,
    LogitVector, ProbVector, RenyiOrder, Surprisal, Temperature,
};
use crate::error::{Error, Result};
use crate::store::TokenSource;

/// Signature of the temperature-scaled surprisal kernel under test.
pub type SurprisalKernel = fn(&LogitVector, usize, Temperature) -> Result<Surprisal>;

/// How the gold class is picked for the monotonicity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldChoice {
    /// The most probable class.
    Argmax,
    /// Uniformly among classes with `p > 1/K`.
    AboveUniform,
}

#[derive(Debug, Clone)]
pub struct TheoremOptions {
    pub seed: u64,
    pub trials: usize,
    /// Vocabulary sizes for the monotonicity and variance checks.
    pub ks: Vec<usize>,
    pub grid: TemperatureGrid,
    pub gold: GoldChoice,
    pub variance_base: LogBase,
    /// Vocabulary sizes and trial count for the infinite-temperature check.
    pub limit_ks: Vec<usize>,
    pub limit_trials: usize,
    pub workers: Option<usize>,
    /// Defaults to [`surprisal_t`]; tests substitute faulty kernels.
    pub kernel: SurprisalKernel,
}

impl TheoremOptions {
    pub fn new(seed: u64, trials: usize) -> Self {
        Self {
            seed,
            trials,
            ks: vec![2, 5, 50],
            grid: TemperatureGrid::paper(),
            gold: GoldChoice::Argmax,
            variance_base: LogBase::Nats,
            limit_ks: vec![2, 5, 50],
            limit_trials: trials.min(1000),
            workers: None,
            kernel: surprisal_t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub k: usize,
    pub trial: usize,
    pub gold: usize,
    pub detail: String,
    /// The offending distribution, truncated to its first 32 entries.
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremCheck {
    pub name: String,
    pub checked: usize,
    /// Trials outside the statement's hypotheses.
    pub skipped: usize,
    pub violations: usize,
    /// Up to five examples.
    pub examples: Vec<Violation>,
}

impl TheoremCheck {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            checked: 0,
            skipped: 0,
            violations: 0,
            examples: Vec::new(),
        }
    }

    fn record(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Pass => self.checked += 1,
            Outcome::Skip => self.skipped += 1,
            Outcome::Fail(v) => {
                self.checked += 1;
                self.violations += 1;
                if self.examples.len() < 5 {
                    self.examples.push(v);
                }
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub seed: u64,
    pub trials: usize,
    pub checks: Vec<TheoremCheck>,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(TheoremCheck::passed)
    }

    pub fn check(&self, name: &str) -> Option<&TheoremCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

enum Outcome {
    Pass,
    Skip,
    Fail(Violation),
}

/// Independent stream per `(seed, k, trial)`.
pub(crate) fn trial_rng(seed: u64, k: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((k as u64) << 32) ^ trial as u64);
    rng
}

/// A draw from the flat Dirichlet over `k` classes.
pub fn flat_dirichlet<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
        let s: f64 = g.iter().sum();
        if s > 0.0 && g.iter().all(|&x| x > 0.0) {
            return g.into_iter().map(|x| x / s).collect();
        }
    }
}

pub const RENYI_ORDERS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

fn violation(k: usize, trial: usize, gold: usize, p: &[f64], detail: String) -> Outcome {
    Outcome::Fail(Violation {
        k,
        trial,
        gold,
        detail,
        distribution: p.iter().take(32).copied().collect(),
    })
}

fn pick_gold(rng: &mut ChaCha8Rng, p: &[f64], choice: GoldChoice) -> Option<usize> {
    let k = p.len() as f64;
    match choice {
        GoldChoice::Argmax => {
            let g = argmax(p);
            (p[g] > 1.0 / k).then_some(g)
        }
        GoldChoice::AboveUniform => {
            let c: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 1.0 / k).collect();
            (!c.is_empty()).then(|| c[rng.random_range(0..c.len())])
        }
    }
}

fn monotonicity(
    kernel: SurprisalKernel,
    k: usize,
    trial: usize,
    p: &[f64],
    gold: Option<usize>,
    temps: &[Temperature],
) -> Result<Outcome> {
    let Some(g) = gold else { return Ok(Outcome::Skip) };
    if p[g] >= 1.0 {
        return Ok(Outcome::Skip);
    }
    let z = LogitVector::from_probs(p)?;
    let mut prev = f64::NEG_INFINITY;
    for &t in temps {
        let s = kernel(&z, g, t)?.bits;
        if s <= prev {
            return Ok(violation(
                k,
                trial,
                g,
                p,
                format!("surprisal {s} at T = {} does not exceed {prev}", t.value()),
            ));
        }
        prev = s;
    }
    let pv = ProbVector::new(p.to_vec())?;
    let mut prev = f64::INFINITY;
    for &a in &RENYI_ORDERS {
        let h = renyi_entropy(&pv, RenyiOrder::new(a)?);
        if h >= prev {
            return Ok(violation(k, trial, g, p, format!("H_{a} = {h} is not below {prev}")));
        }
        prev = h;
    }
    Ok(Outcome::Pass)
}

fn variance_bound(k: usize, trial: usize, p: &[f64], base: LogBase) -> Result<Outcome> {
    let m = surprisal_moments(&ProbVector::new(p.to_vec())?, base);
    let sd = m.variance.sqrt();
    let bound = surprisal_variance_bound(k, base).sqrt();
    if !(sd < bound) {
        return Ok(violation(k, trial, 0, p, format!("sd {sd} >= bound {bound}")));
    }
    if m.mean_abs_dev > sd + 1e-12 {
        return Ok(violation(
            k,
            trial,
            0,
            p,
            format!("E|s - H| = {} exceeds sd {sd}", m.mean_abs_dev),
        ));
    }
    Ok(Outcome::Pass)
}

fn limit_check(kernel: SurprisalKernel, seed: u64, k: usize, trial: usize) -> Result<Outcome> {
    let mut rng = trial_rng(seed ^ 0x5eed_0002, k, trial);
    let scale = rng.random_range(0.5..5.0);
    let normal = Normal::new(0.0, scale).unwrap();
    let z: Vec<f64> = (0..k).map(|_| normal.sample(&mut rng)).collect();
    let gold = rng.random_range(0..k);
    let s = kernel(&LogitVector::new(z.clone())?, gold, Temperature::new(1e9)?)?.bits;
    let want = (k as f64).log2();
    if (s - want).abs() >= 1e-3 {
        return Ok(violation(k, trial, gold, &z, format!("s = {s}, log2 K = {want}")));
    }
    Ok(Outcome::Pass)
}

/// Surprisal gap between `[0.8, 0.05 x 4]` and `[0.8, 0.2, 0, 0, 0]` for the
/// gold class 0 at each temperature.
pub fn sparsity_gaps(temps: &[Temperature]) -> Result<Vec<(f64, f64)>> {
    let zi = LogitVector::from_probs(&[0.8, 0.05, 0.05, 0.05, 0.05])?;
    let zj = LogitVector::from_probs(&[0.8, 0.2, 0.0, 0.0, 0.0])?;
    temps
        .iter()
        .map(|&t| Ok((t.value(), surprisal_t(&zi, 0, t)?.bits - surprisal_t(&zj, 0, t)?.bits)))
        .collect()
}

/// Gap positive for every grid `T > 1`, and increasing across grid points
/// in `(1, 2.5]`.
fn sparsity_check(grid: &TemperatureGrid) -> Result<TheoremCheck> {
    let mut c = TheoremCheck::new("sparsity-gap");
    let gaps = sparsity_gaps(grid.values())?;
    let mut prev: Option<f64> = None;
    for (i, &(t, gap)) in gaps.iter().enumerate() {
        if t <= 1.0 {
            c.record(Outcome::Skip);
            continue;
        }
        let rising = t > 2.5 || prev.is_none_or(|p| gap > p);
        let outcome = if gap > 0.0 && rising {
            Outcome::Pass
        } else {
            violation(5, i, 0, &[0.8, 0.05, 0.05, 0.05, 0.05], format!("gap {gap} at T = {t}"))
        };
        c.record(outcome);
        if t <= 2.5 {
            prev = Some(gap);
        }
    }
    Ok(c)
}

pub fn verify_theorems(opts: &TheoremOptions) -> Result<TheoremReport> {
    if opts.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    with_pool(opts.workers, || run(opts))?
}

fn run(opts: &TheoremOptions) -> Result<TheoremReport> {
    let temps = opts.grid.values();
    let mut mono = TheoremCheck::new("monotonicity");
    let mut var = TheoremCheck::new("variance-bound");
    for &k in &opts.ks {
        if k < 2 {
            return Err(Error::invalid(format!("vocabulary size {k} < 2")));
        }
        let outcomes: Vec<(Outcome, Outcome)> = (0..opts.trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = trial_rng(opts.seed, k, trial);
                let p = flat_dirichlet(&mut rng, k);
                let gold = pick_gold(&mut rng, &p, opts.gold);
                Ok((
                    monotonicity(opts.kernel, k, trial, &p, gold, temps)?,
                    variance_bound(k, trial, &p, opts.variance_base)?,
                ))
            })
            .collect::<Result<_>>()?;
        for (a, b) in outcomes {
            mono.record(a);
            var.record(b);
        }
    }
    let mut limit = TheoremCheck::new("infinite-temperature");
    for &k in &opts.limit_ks {
        let outcomes: Vec<Outcome> = (0..opts.limit_trials)
            .into_par_iter()
            .map(|trial| limit_check(opts.kernel, opts.seed, k, trial))
            .collect::<Result<_>>()?;
        outcomes.into_iter().for_each(|o| limit.record(o));
    }
    Ok(TheoremReport {
        seed: opts.seed,
        trials: opts.trials,
        checks: vec![mono, limit, var, sparsity_check(&opts.grid)?],
    })
}

/// Mean surprisal at T = 1, T* and T = 1e9 against mean Rényi entropy of
/// the unscaled distribution at orders 1, 1/2 and 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyAlignment {
    pub t_star: f64,
    pub n_tokens: usize,
    pub mean_surprisal_unit: f64,
    pub mean_surprisal_t_star: f64,
    pub mean_surprisal_infinite: f64,
    pub mean_h1: f64,
    pub mean_h_half: f64,
    pub mean_h0: f64,
    /// Mean `|s_T* - H_alpha|` for alpha = 1, 1/2, 0.
    pub dist_h1: f64,
    pub dist_h_half: f64,
    pub dist_h0: f64,
}

pub fn entropy_alignment(source: &dyn TokenSource, t_star: Temperature) -> Result<EntropyAlignment> {
    let n = source.token_count();
    if n == 0 {
        return Err(Error::invalid("empty archive"));
    }
    let t_inf = Temperature::new(1e9)?;
    let rows: Vec<[f64; 6]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let z = source.logit_vector(i)?;
            let g = source.gold(i);
            let p = softmax_t(&z, Temperature::ONE);
            Ok([
                surprisal_t(&z, g, Temperature::ONE)?.bits,
                surprisal_t(&z, g, t_star)?.bits,
                surprisal_t(&z, g, t_inf)?.bits,
                renyi_entropy(&p, RenyiOrder::SHANNON),
                renyi_entropy(&p, RenyiOrder::HALF),
                renyi_entropy(&p, RenyiOrder::ZERO),
            ])
        })
        .collect::<Result<_>>()?;
    let mean = |f: &dyn Fn(&[f64; 6]) -> f64| rows.iter().map(f).sum::<f64>() / n as f64;
    Ok(EntropyAlignment {
        t_star: t_star.value(),
        n_tokens: n,
        mean_surprisal_unit: mean(&|r| r[0]),
        mean_surprisal_t_star: mean(&|r| r[1]),
        mean_surprisal_infinite: mean(&|r| r[2]),
        mean_h1: mean(&|r| r[3]),
        mean_h_half: mean(&|r| r[4]),
        mean_h0: mean(&|r| r[5]),
        dist_h1: mean(&|r| (r[1] - r[3]).abs()),
        dist_h_half: mean(&|r| (r[1] - r[4]).abs()),
        dist_h0: mean(&|r| (r[1] - r[5]).abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes() {
        let r = verify_theorems(&TheoremOptions::new(7, 200)).unwrap();
        assert!(r.passed(), "{r:#?}");
        assert_eq!(r.check("monotonicity").unwrap().checked, 600);
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(verify_theorems(&TheoremOptions::new(0, 0)).is_err());
    }

    #[test]
    fn one_hot_is_skipped() {
        let temps = TemperatureGrid::paper();
        assert!(matches!(
            monotonicity(surprisal_t, 3, 0, &[1.0, 0.0, 0.0], Some(0), temps.values()).unwrap(),
            Outcome::Skip
        ));
    }

    #[test]
    fn sparsity_gap_values() {
        let g = sparsity_gaps(&[Temperature::ONE, Temperature::new(2.0).unwrap()]).unwrap();
        assert!(g[0].1.abs() < 1e-12);
        // 1.0 bit against -log2(sqrt(.8)/(sqrt(.8)+sqrt(.2))) = log2(1.5)
        assert!((g[1].1 - (1.0 - 1.5f64.log2())).abs() < 1e-12);
    }
}
