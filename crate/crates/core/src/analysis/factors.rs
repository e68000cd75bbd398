use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::corpus::{Corpus, Observations, Scope};
use crate::distrib::Temperature;
use crate::error::{Error, Result};
use crate::lme::LmeFit;
use crate::store::WordRecord;

/// Ratio at or below which a subset is marked `*`.
pub const SPARSE_RATIO: f64 = 0.01;
/// Ratio at or below which a subset is marked `**`.
pub const SCARCE_RATIO: f64 = 0.001;

/// Change of a word's probability from T = 1 to T*.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Probability fell, surprisal rose.
    Down,
    Up,
    Unchanged,
}

pub fn direction(surprisal_unit: f64, surprisal_t_star: f64) -> Direction {
    if surprisal_t_star > surprisal_unit {
        Direction::Down
    } else if surprisal_t_star < surprisal_unit {
        Direction::Up
    } else {
        Direction::Unchanged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sufficiency {
    Sufficient,
    /// `ratio <= 0.01`, marked `*`.
    Sparse,
    /// `ratio <= 0.001`, marked `**`.
    Scarce,
}

impl Sufficiency {
    pub fn of(ratio: f64) -> Self {
        if ratio <= SCARCE_RATIO {
            Sufficiency::Scarce
        } else if ratio <= SPARSE_RATIO {
            Sufficiency::Sparse
        } else {
            Sufficiency::Sufficient
        }
    }

    pub fn marker(self) -> &'static str {
        match self {
            Sufficiency::Sufficient => "",
            Sufficiency::Sparse => "*",
            Sufficiency::Scarce => "**",
        }
    }
}

/// Words sharing a linguistic factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorSubset {
    pub name: String,
    pub word_ids: BTreeSet<u32>,
    /// Fraction of corpus words in the subset.
    pub ratio: f64,
    pub sufficiency: Sufficiency,
}

impl FactorSubset {
    pub fn new(name: impl Into<String>, word_ids: BTreeSet<u32>, corpus_words: usize) -> Self {
        let ratio = if corpus_words == 0 {
            0.0
        } else {
            word_ids.len() as f64 / corpus_words as f64
        };
        Self {
            name: name.into(),
            word_ids,
            ratio,
            sufficiency: Sufficiency::of(ratio),
        }
    }

    pub fn is_sufficient(&self) -> bool {
        self.sufficiency == Sufficiency::Sufficient
    }
}

/// Mean of squared `residuals` over `rows`, `None` when `rows` is empty.
pub fn mse_over(residuals: &[f64], rows: &[usize]) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    Some(rows.iter().map(|&i| residuals[i] * residuals[i]).sum::<f64>() / rows.len() as f64)
}

/// `MSE_1 - MSE_T*` over `rows` of two residual vectors.
pub fn delta_mse_residuals(unit: &[f64], t_star: &[f64], rows: &[usize]) -> Result<Option<f64>> {
    if unit.len() != t_star.len() {
        return Err(Error::InvalidComparison(format!(
            "residual vectors of length {} and {}",
            unit.len(),
            t_star.len()
        )));
    }
    if let Some(&bad) = rows.iter().find(|&&i| i >= unit.len()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: unit.len(),
        });
    }
    Ok(mse_over(unit, rows).zip(mse_over(t_star, rows)).map(|(a, b)| a - b))
}

/// Reduction of the subset's mean squared conditional residual when moving
/// from the T = 1 fit to the T* fit. Positive means scaling helped. `None`
/// when no observation falls in the subset.
pub fn delta_mse(fit_unit: &LmeFit, fit_t_star: &LmeFit, obs: &Observations, subset: &FactorSubset) -> Result<Option<f64>> {
    if fit_unit.n != obs.len() || fit_t_star.n != obs.len() {
        return Err(Error::InvalidComparison("fits do not share the observation rows".into()));
    }
    delta_mse_residuals(&fit_unit.residuals, &fit_t_star.residuals, &obs.rows_for(&subset.word_ids))
}

pub fn normalized_delta_mse(dmse: f64, ratio: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::invalid(format!("ratio {ratio} outside [0, 1]")));
    }
    Ok(dmse * ratio)
}

/// Word surprisal at T = 1 and T*, the resulting directions and the factor
/// subsets built from word metadata.
#[derive(Debug, Clone, Serialize)]
pub struct FactorPartition {
    pub t_star: f64,
    pub surprisal_unit: Vec<f64>,
    pub surprisal_t_star: Vec<f64>,
    pub directions: Vec<Direction>,
    pub subsets: Vec<FactorSubset>,
}

fn token_classes(w: &WordRecord) -> Vec<&'static str> {
    let n = w.n_tokens();
    let mut v = vec![if n == 1 { "#=1" } else { "#>1" }];
    match n {
        2 => v.push("#=2"),
        3 => v.push("#=3"),
        _ => {}
    }
    v
}

fn word_classes(w: &WordRecord) -> Vec<String> {
    let mut v = Vec::new();
    match w.is_ne {
        Some(true) => v.push("NE".to_string()),
        Some(false) => v.push("non-NE".to_string()),
        None => {}
    }
    if let Some(p) = w.pos_class {
        v.push(p.name().to_string());
    }
    v
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Down => "p_down",
        Direction::Up => "p_up",
        Direction::Unchanged => "p_same",
    }
}

/// Subsets by named-entity flag, POS class, token count and probability
/// direction, with their pairwise crossings.
pub fn factor_partition(corpus: &Corpus<'_>, t_star: Temperature) -> Result<FactorPartition> {
    let table = corpus.word_surprisals(&[Temperature::ONE, t_star], Scope::All)?;
    let words = corpus.words();
    let s1 = table.column(0);
    let s2 = table.column(1);
    let directions: Vec<Direction> = s1.iter().zip(&s2).map(|(&a, &b)| direction(a, b)).collect();

    let mut groups: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    let mut add = |name: String, id: u32| {
        groups.entry(name).or_default().insert(id);
    };
    for (w, d) in words.iter().zip(&directions) {
        let tc = token_classes(w);
        let wc = word_classes(w);
        let dn = direction_name(*d);
        add("all".into(), w.word_id);
        add(dn.into(), w.word_id);
        for t in &tc {
            add(t.to_string(), w.word_id);
            add(format!("{t} & {dn}"), w.word_id);
        }
        for c in &wc {
            add(c.clone(), w.word_id);
            add(format!("{c} & {dn}"), w.word_id);
            for t in &tc {
                add(format!("{c} & {t}"), w.word_id);
            }
        }
    }
    let n = words.len();
    let subsets = groups
        .into_iter()
        .map(|(name, ids)| FactorSubset::new(name, ids, n))
        .collect();
    Ok(FactorPartition {
        t_star: t_star.value(),
        surprisal_unit: s1,
        surprisal_t_star: s2,
        directions,
        subsets,
    })
}

impl FactorPartition {
    pub fn subset(&self, name: &str) -> Option<&FactorSubset> {
        self.subsets.iter().find(|s| s.name == name)
    }

    /// Fraction of the subset's words whose probability fell.
    pub fn p_down_ratio(&self, corpus: &Corpus<'_>, subset: &FactorSubset) -> f64 {
        let total = subset.word_ids.len();
        if total == 0 {
            return 0.0;
        }
        let down = corpus
            .words()
            .iter()
            .zip(&self.directions)
            .filter(|(w, d)| **d == Direction::Down && subset.word_ids.contains(&w.word_id))
            .count();
        down as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorRow {
    pub factor: String,
    pub n_words: usize,
    pub ratio: f64,
    pub marker: &'static str,
    pub n_obs: usize,
    pub p_down_ratio: f64,
    pub mse_unit: Option<f64>,
    pub mse_t_star: Option<f64>,
    pub delta_mse: Option<f64>,
    pub normalized_delta_mse: Option<f64>,
}

pub fn factor_table(
    corpus: &Corpus<'_>,
    partition: &FactorPartition,
    obs: &Observations,
    fit_unit: &LmeFit,
    fit_t_star: &LmeFit,
) -> Result<Vec<FactorRow>> {
    partition
        .subsets
        .iter()
        .map(|s| {
            let rows = obs.rows_for(&s.word_ids);
            let d = delta_mse(fit_unit, fit_t_star, obs, s)?;
            Ok(FactorRow {
                factor: s.name.clone(),
                n_words: s.word_ids.len(),
                ratio: s.ratio,
                marker: s.sufficiency.marker(),
                n_obs: rows.len(),
                p_down_ratio: partition.p_down_ratio(corpus, s),
                mse_unit: mse_over(&fit_unit.residuals, &rows),
                mse_t_star: mse_over(&fit_t_star.residuals, &rows),
                delta_mse: d,
                normalized_delta_mse: d.map(|v| v * s.ratio),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WordRow {
    pub text: String,
    pub frequency: usize,
    pub p_down: usize,
    pub p_up: usize,
    /// Observations whose absolute residual shrank at T*.
    pub beneficial: usize,
    pub unbeneficial: usize,
}

/// Per distinct word text, most frequent first (ties by text).
pub fn per_word_report(
    corpus: &Corpus<'_>,
    partition: &FactorPartition,
    obs: &Observations,
    fit_unit: &LmeFit,
    fit_t_star: &LmeFit,
    filter: Option<&FactorSubset>,
    top_n: usize,
) -> Vec<WordRow> {
    let mut rows: BTreeMap<&str, WordRow> = BTreeMap::new();
    let keep = |id: u32| filter.is_none_or(|f| f.word_ids.contains(&id));
    for (w, d) in corpus.words().iter().zip(&partition.directions) {
        if !keep(w.word_id) {
            continue;
        }
        let r = rows.entry(&w.text).or_insert_with(|| WordRow {
            text: w.text.clone(),
            frequency: 0,
            p_down: 0,
            p_up: 0,
            beneficial: 0,
            unbeneficial: 0,
        });
        r.frequency += 1;
        match d {
            Direction::Down => r.p_down += 1,
            Direction::Up => r.p_up += 1,
            Direction::Unchanged => {}
        }
    }
    for i in 0..obs.len() {
        let w = &corpus.words()[obs.word_idx[i]];
        if !keep(w.word_id) {
            continue;
        }
        let (a, b) = (fit_unit.residuals[i].abs(), fit_t_star.residuals[i].abs());
        if let Some(r) = rows.get_mut(w.text.as_str()) {
            if b < a {
                r.beneficial += 1;
            } else if b > a {
                r.unbeneficial += 1;
            }
        }
    }
    let mut out: Vec<WordRow> = rows.into_values().collect();
    out.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.text.cmp(&b.text)));
    out.truncate(top_n);
    out
}

/// Counts of `values` in `bins` equal-width bins over `[0, upper]`; values
/// above `upper` land in the last bin.
pub fn histogram(values: &[f64], bins: usize, upper: f64) -> Result<Vec<(f64, f64, usize)>> {
    if bins == 0 || !(upper > 0.0) {
        return Err(Error::invalid("histogram needs bins >= 1 and a positive range"));
    }
    let width = upper / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = ((v / width).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 * width, (i + 1) as f64 * width, c))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_built_delta_mse() {
        let unit = [2.0, 2.0, 5.0, 5.0];
        let star = [1.0, 1.0, 5.0, 5.0];
        assert_eq!(delta_mse_residuals(&unit, &star, &[0, 1]).unwrap(), Some(3.0));
        assert_eq!(delta_mse_residuals(&unit, &unit, &[0, 1, 2, 3]).unwrap(), Some(0.0));
        assert_eq!(delta_mse_residuals(&unit, &star, &[]).unwrap(), None);
        assert!(delta_mse_residuals(&unit, &star, &[4]).is_err());
    }

    #[test]
    fn normalisation_and_markers() {
        assert_eq!(normalized_delta_mse(100.0, 0.1).unwrap(), 10.0);
        assert_eq!(normalized_delta_mse(100.0, 0.0).unwrap(), 0.0);
        assert!(normalized_delta_mse(1.0, 1.5).is_err());
        assert_eq!(Sufficiency::of(0.02), Sufficiency::Sufficient);
        assert_eq!(Sufficiency::of(0.01).marker(), "*");
        assert_eq!(Sufficiency::of(0.0005).marker(), "**");
    }

    #[test]
    fn direction_follows_surprisal() {
        assert_eq!(direction(1.0, 1.5), Direction::Down);
        assert_eq!(direction(1.0, 0.5), Direction::Up);
        assert_eq!(direction(1.0, 1.0), Direction::Unchanged);
    }

    #[test]
    fn histogram_clamps() {
        let h = histogram(&[0.0, 0.5, 1.0, 9.0], 2, 2.0).unwrap();
        assert_eq!(h.iter().map(|b| b.2).collect::<Vec<_>>(), [2, 2]);
    }
}
