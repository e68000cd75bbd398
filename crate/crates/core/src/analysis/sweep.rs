use rayon::prelude::*;
use serde::Serialize;

use super::corpus::{Corpus, ModelVariant, Observations, Scope, SurprisalTable};
use super::grid::TemperatureGrid;
use crate::calibration::{calibration_report, BinKind};
use crate::distrib::{LogitVector, Temperature};
use crate::error::{Error, Result};
use crate::lme::{build_design, fit_ml_with, lrt_from_statistic, FitOptions, LmeFit, LmeSpec, LrtResult};
use crate::store::TokenSource;

pub const SURPRISAL_COLUMNS: [&str; 3] = ["surprisal", "surprisal_prev_1", "surprisal_prev_2"];

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub variant: ModelVariant,
    pub scope: Scope,
    /// Threads for grid fits and surprisal passes; `None` uses all cores.
    pub workers: Option<usize>,
    pub fit: FitOptions,
    /// Bins for the calibration summary; `None` skips it.
    pub calibration_bins: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            variant: ModelVariant::Model1,
            scope: Scope::All,
            workers: None,
            fit: FitOptions::default(),
            calibration_bins: Some(15),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub t: f64,
    /// `1000 (llh_target - llh_base) / n`.
    pub delta_llh_x1000: f64,
    pub target_llh: f64,
    pub target_converged: bool,
    pub base_converged: bool,
}

impl SweepPoint {
    pub fn converged(&self) -> bool {
        self.target_converged && self.base_converged
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationAt {
    pub t: f64,
    pub ece_equal: f64,
    pub ece_log: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCalibration {
    pub bins: usize,
    pub at_unit: CalibrationAt,
    pub at_t_star: CalibrationAt,
    pub hce_ts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub base_formula: String,
    pub target_formula: String,
    pub scope: Scope,
    pub n_obs: usize,
    pub n_words: usize,
    pub base_llh: f64,
    pub base_converged: bool,
    pub points: Vec<SweepPoint>,
    /// Grid point with the largest converged `delta_llh`, smallest on ties.
    pub t_star: Option<f64>,
    pub delta_llh_unit_x1000: Option<f64>,
    pub delta_llh_t_star_x1000: Option<f64>,
    /// `100 (delta(T*) - delta(1)) / delta(1)`, when `delta(1) > 0`.
    pub delta_llh_improvement_pct: Option<f64>,
    pub lrt_t_star: Option<LrtResult>,
    pub calibration: Option<SweepCalibration>,
    /// Words whose surprisal was clamped at the probability floor.
    pub saturated_words: usize,
}

impl SweepReport {
    pub fn all_converged(&self) -> bool {
        self.base_converged && self.points.iter().all(|p| p.target_converged)
    }

    pub fn point(&self, t: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.t == t)
    }

    /// `(T, delta_llh x1000, converged)` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("T,delta_llh_x1000,converged\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.t, p.delta_llh_x1000, p.converged()));
        }
        s
    }
}

pub(crate) fn with_pool<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::invalid("worker count must be at least 1"));
        }
        b = b.num_threads(w);
    }
    let pool = b.build().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(pool.install(f))
}

fn uses_surprisal(spec: &LmeSpec) -> bool {
    spec.column_names()
        .iter()
        .any(|c| c.split(':').any(|p| SURPRISAL_COLUMNS.contains(&p)))
        || spec
            .random
            .iter()
            .any(|r| r.slope.as_deref().is_some_and(|s| SURPRISAL_COLUMNS.contains(&s)))
}

fn check_nested(base: &LmeSpec, target: &LmeSpec) -> Result<()> {
    if base.response != target.response {
        return Err(Error::invalid("base and target models have different responses"));
    }
    let t = target.column_names();
    if let Some(c) = base.column_names().iter().find(|c| !t.contains(c)) {
        return Err(Error::invalid(format!("base column `{c}` is missing from the target model")));
    }
    if uses_surprisal(base) {
        return Err(Error::invalid("the base model must not use surprisal predictors"));
    }
    Ok(())
}

/// Fits `spec` with `words` as the per-word surprisal column.
pub fn fit_table(obs: &Observations, words: &[f64], spec: &LmeSpec, opts: &FitOptions) -> Result<LmeFit> {
    let table = obs.table_with(words)?;
    fit_ml_with(&build_design(&table, spec)?, *opts)
}

/// Free parameters of a fit: fixed effects, covariance parameters and the
/// residual variance.
fn n_params(f: &LmeFit) -> usize {
    f.p() + f.theta.len() + 1
}

/// Temperature sweep using the formulas of `opts.variant`.
pub fn sweep(corpus: &Corpus<'_>, grid: &TemperatureGrid, opts: &SweepOptions) -> Result<SweepReport> {
    let (base, target) = opts.variant.specs(corpus.has_zones());
    sweep_with_specs(corpus, &base, &target, grid, opts)
}

/// [`sweep`] scaling only the words selected by `scope`.
pub fn selective_sweep(
    corpus: &Corpus<'_>,
    grid: &TemperatureGrid,
    opts: &SweepOptions,
    scope: Scope,
) -> Result<SweepReport> {
    let opts = SweepOptions { scope, ..opts.clone() };
    sweep(corpus, grid, &opts)
}

pub fn sweep_with_specs(
    corpus: &Corpus<'_>,
    base: &LmeSpec,
    target: &LmeSpec,
    grid: &TemperatureGrid,
    opts: &SweepOptions,
) -> Result<SweepReport> {
    check_nested(base, target)?;
    with_pool(opts.workers, || run_sweep(corpus, base, target, grid, opts))?
}

fn run_sweep(
    corpus: &Corpus<'_>,
    base: &LmeSpec,
    target: &LmeSpec,
    grid: &TemperatureGrid,
    opts: &SweepOptions,
) -> Result<SweepReport> {
    let obs = corpus.observations()?;
    let table: SurprisalTable = corpus.word_surprisals(grid.values(), opts.scope)?;
    let n = obs.len() as f64;

    let base_fit = fit_table(&obs, &table.column(0), base, &opts.fit)?;
    let fits: Vec<LmeFit> = (0..grid.len())
        .into_par_iter()
        .map(|k| fit_table(&obs, &table.column(k), target, &opts.fit))
        .collect::<Result<Vec<_>>>()?;

    let points: Vec<SweepPoint> = grid
        .values()
        .iter()
        .zip(&fits)
        .map(|(t, f)| SweepPoint {
            t: t.value(),
            delta_llh_x1000: 1000.0 * (f.llh - base_fit.llh) / n,
            target_llh: f.llh,
            target_converged: f.converged,
            base_converged: base_fit.converged,
        })
        .collect();

    let mut best: Option<usize> = None;
    for (k, p) in points.iter().enumerate() {
        if p.converged() && best.is_none_or(|b| p.delta_llh_x1000 > points[b].delta_llh_x1000) {
            best = Some(k);
        }
    }
    let unit = grid.position(1.0).filter(|&k| points[k].converged());
    let delta_unit = unit.map(|k| points[k].delta_llh_x1000);
    let delta_star = best.map(|k| points[k].delta_llh_x1000);
    let improvement = match (delta_unit, delta_star) {
        (Some(u), Some(s)) if u > 0.0 => Some(100.0 * (s - u) / u),
        _ => None,
    };
    let lrt_t_star = match best {
        Some(k) => {
            let df = n_params(&fits[k]).saturating_sub(n_params(&base_fit));
            if df == 0 {
                None
            } else {
                Some(lrt_from_statistic(2.0 * (fits[k].llh - base_fit.llh), df)?)
            }
        }
        None => None,
    };

    let calibration = match (opts.calibration_bins, best) {
        (Some(bins), Some(k)) => Some(sweep_calibration(corpus.source(), bins, grid.values()[k])?),
        _ => None,
    };

    Ok(SweepReport {
        base_formula: base.to_string(),
        target_formula: target.to_string(),
        scope: opts.scope,
        n_obs: obs.len(),
        n_words: corpus.words().len(),
        base_llh: base_fit.llh,
        base_converged: base_fit.converged,
        points,
        t_star: best.map(|k| grid.values()[k].value()),
        delta_llh_unit_x1000: delta_unit,
        delta_llh_t_star_x1000: delta_star,
        delta_llh_improvement_pct: improvement,
        lrt_t_star,
        calibration,
        saturated_words: table.saturated_words,
    })
}

/// `(logits, gold)` for the listed token indices, decoded lazily.
pub fn token_stream<'a>(
    source: &'a dyn TokenSource,
    tokens: &[usize],
) -> impl Iterator<Item = Result<(LogitVector, usize)>> + 'a {
    let tokens = tokens.to_vec();
    tokens.into_iter().map(move |i| Ok((source.logit_vector(i)?, source.gold(i))))
}

fn calibration_at(source: &dyn TokenSource, tokens: &[usize], bins: usize, t: Temperature) -> Result<CalibrationAt> {
    let eq = calibration_report(|| token_stream(source, tokens), t, BinKind::EqualSpaced, bins, false, None)?;
    let lg = calibration_report(|| token_stream(source, tokens), t, BinKind::LogSpaced, bins, false, None)?;
    Ok(CalibrationAt {
        t: t.value(),
        ece_equal: eq.ece,
        ece_log: lg.ece,
    })
}

fn sweep_calibration(source: &dyn TokenSource, bins: usize, t_star: Temperature) -> Result<SweepCalibration> {
    let all: Vec<usize> = (0..source.token_count()).collect();
    let hce = calibration_report(
        || token_stream(source, &all),
        Temperature::ONE,
        BinKind::EqualSpaced,
        bins,
        false,
        Some(t_star),
    )?;
    Ok(SweepCalibration {
        bins,
        at_unit: calibration_at(source, &all, bins, Temperature::ONE)?,
        at_t_star: calibration_at(source, &all, bins, t_star)?,
        hce_ts: hce.hce_ts.unwrap_or(0.0),
    })
}
