//! Linear mixed-effects regression fitted by profiled maximum likelihood.
//!
//! The model is `y ~ N(X beta, sigma^2 (Z Lambda Lambda^T Z^T + I))` with one
//! block of `Lambda` per random term: a scalar for random intercepts (or a
//! lone random slope), a lower-triangular 2x2 factor for a correlated
//! intercept and slope. For a fixed `theta` the penalised least-squares
//! problem is solved exactly by a blocked Cholesky factorisation; `theta` is
//! then optimised with a simplex search.

mod compare;
mod dense;
mod design;
mod fit;
mod nelder_mead;

pub use compare::{delta_llh, fixed_corr, loglik_per_datapoint, lrt, lrt_from_statistic, LrtResult, CHI2_SLACK};
pub use design::{build_design, DataTable, DesignMatrix, RandomBlock};
pub use fit::{fit_ml, fit_ml_with, profile, FitOptions, LmeFit, Profile, RandomEffectSummary};
pub use nelder_mead::SimplexOptions;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedTerm {
    /// A single numeric predictor.
    Main(String),
    /// `a * b`: expands to `a`, `b` and `a:b`.
    Crossed(String, String),
    /// `a:b` alone.
    Interaction(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomTerm {
    pub group: String,
    pub intercept: bool,
    pub slope: Option<String>,
}

impl RandomTerm {
    pub fn intercept(group: impl Into<String>) -> Self {
        Self {
            group: group.into(),
            intercept: true,
            slope: None,
        }
    }

    pub fn slope(group: impl Into<String>, column: impl Into<String>) -> Self {
        Self {
            group: group.into(),
            intercept: true,
            slope: Some(column.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmeSpec {
    pub response: String,
    pub include_intercept: bool,
    pub fixed: Vec<FixedTerm>,
    pub random: Vec<RandomTerm>,
}

impl LmeSpec {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            response: response.into(),
            include_intercept: true,
            fixed: Vec::new(),
            random: Vec::new(),
        }
    }

    pub fn main(mut self, name: impl Into<String>) -> Self {
        self.fixed.push(FixedTerm::Main(name.into()));
        self
    }

    pub fn crossed(mut self, a: impl Into<String>, b: impl Into<String>) -> Self {
        self.fixed.push(FixedTerm::Crossed(a.into(), b.into()));
        self
    }

    pub fn random(mut self, term: RandomTerm) -> Self {
        self.random.push(term);
        self
    }

    /// Parses an lme4-style formula such as
    /// `rt ~ surprisal + freq * length + (1 | article) + (surprisal | subj_id)`.
    pub fn parse(formula: &str) -> Result<Self> {
        let (lhs, rhs) = formula
            .split_once('~')
            .ok_or_else(|| Error::invalid(format!("formula `{formula}` has no `~`")))?;
        let response = lhs.trim();
        if response.is_empty() {
            return Err(Error::invalid("formula has no response"));
        }
        let mut spec = LmeSpec::new(response);
        for term in split_top_level(rhs)? {
            let term = term.trim();
            if term.is_empty() {
                return Err(Error::invalid(format!("empty term in `{formula}`")));
            }
            if let Some(inner) = term.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
                let (expr, group) = inner
                    .split_once('|')
                    .ok_or_else(|| Error::invalid(format!("random term `{term}` lacks `|`")))?;
                let mut intercept = true;
                let mut slope = None;
                for part in expr.split('+').map(str::trim) {
                    match part {
                        "1" => intercept = true,
                        "0" | "-1" => intercept = false,
                        "" => return Err(Error::invalid(format!("empty part in `{term}`"))),
                        name => {
                            if slope.replace(name.to_string()).is_some() {
                                return Err(Error::invalid(format!(
                                    "only one random slope per term supported: `{term}`"
                                )));
                            }
                        }
                    }
                }
                if !intercept && slope.is_none() {
                    return Err(Error::invalid(format!("random term `{term}` is empty")));
                }
                spec.random.push(RandomTerm {
                    group: group.trim().to_string(),
                    intercept,
                    slope,
                });
            } else if term == "1" {
                spec.include_intercept = true;
            } else if term == "0" || term == "-1" {
                spec.include_intercept = false;
            } else if let Some((a, b)) = term.split_once('*') {
                spec.fixed
                    .push(FixedTerm::Crossed(a.trim().to_string(), b.trim().to_string()));
            } else if let Some((a, b)) = term.split_once(':') {
                spec.fixed
                    .push(FixedTerm::Interaction(a.trim().to_string(), b.trim().to_string()));
            } else {
                spec.fixed.push(FixedTerm::Main(term.to_string()));
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.include_intercept && self.fixed.is_empty() {
            return Err(Error::invalid("model needs an intercept or a fixed term"));
        }
        let mut seen = BTreeSet::new();
        for r in &self.random {
            if !seen.insert(r.group.as_str()) {
                return Err(Error::invalid(format!(
                    "grouping factor `{}` appears twice",
                    r.group
                )));
            }
            if !r.intercept && r.slope.is_none() {
                return Err(Error::invalid(format!("empty random term for `{}`", r.group)));
            }
        }
        Ok(())
    }

    /// Fixed-effect column names in design order: intercept, main effects in
    /// spec order, interactions last.
    pub fn column_names(&self) -> Vec<String> {
        let mut mains: Vec<String> = Vec::new();
        let mut inter: Vec<String> = Vec::new();
        let push_main = |m: &str, mains: &mut Vec<String>| {
            if !mains.iter().any(|x| x == m) {
                mains.push(m.to_string());
            }
        };
        for t in &self.fixed {
            match t {
                FixedTerm::Main(a) => push_main(a, &mut mains),
                FixedTerm::Crossed(a, b) => {
                    push_main(a, &mut mains);
                    push_main(b, &mut mains);
                    inter.push(format!("{a}:{b}"));
                }
                FixedTerm::Interaction(a, b) => inter.push(format!("{a}:{b}")),
            }
        }
        inter.dedup();
        let mut cols = Vec::new();
        if self.include_intercept {
            cols.push(INTERCEPT.to_string());
        }
        cols.extend(mains);
        cols.extend(inter);
        cols
    }

    /// Number of fixed-effect columns `self` adds on top of `base`.
    pub fn added_columns(&self, base: &LmeSpec) -> usize {
        let b = base.column_names();
        self.column_names().iter().filter(|c| !b.contains(c)).count()
    }
}

impl fmt::Display for LmeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        if !self.include_intercept {
            parts.push("0".into());
        }
        for t in &self.fixed {
            parts.push(match t {
                FixedTerm::Main(a) => a.clone(),
                FixedTerm::Crossed(a, b) => format!("{a} * {b}"),
                FixedTerm::Interaction(a, b) => format!("{a}:{b}"),
            });
        }
        for r in &self.random {
            let lhs = match (&r.slope, r.intercept) {
                (None, _) => "1".to_string(),
                (Some(s), true) => s.clone(),
                (Some(s), false) => format!("0 + {s}"),
            };
            parts.push(format!("({lhs} | {})", r.group));
        }
        if parts.is_empty() {
            parts.push("1".into());
        }
        write!(f, "{} ~ {}", self.response, parts.join(" + "))
    }
}

fn split_top_level(s: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(Error::invalid(format!("unbalanced `)` in `{s}`")));
                }
            }
            '+' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::invalid(format!("unbalanced `(` in `{s}`")));
    }
    out.push(&s[start..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_base_formula() {
        let s = LmeSpec::parse(
            "rt ~ freq * length + freq_prev_1 * length_prev_1 + (1 | article) + (1 | subj_id)",
        )
        .unwrap();
        assert_eq!(
            s.column_names(),
            [
                INTERCEPT,
                "freq",
                "length",
                "freq_prev_1",
                "length_prev_1",
                "freq:length",
                "freq_prev_1:length_prev_1"
            ]
        );
        assert_eq!(s.random.len(), 2);
        assert!(s.random.iter().all(|r| r.intercept && r.slope.is_none()));
    }

    #[test]
    fn parses_random_slope_and_no_intercept() {
        let s = LmeSpec::parse("y ~ 0 + x + (x | g) + (0 + z | h)").unwrap();
        assert!(!s.include_intercept);
        assert_eq!(s.random[0], RandomTerm::slope("g", "x"));
        assert_eq!(
            s.random[1],
            RandomTerm {
                group: "h".into(),
                intercept: false,
                slope: Some("z".into())
            }
        );
        let again = LmeSpec::parse(&s.to_string()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn rejects_bad_formulas() {
        assert!(LmeSpec::parse("y x").is_err());
        assert!(LmeSpec::parse("y ~ 0").is_err());
        assert!(LmeSpec::parse("y ~ x + (1 | g) + (1 | g)").is_err());
        assert!(LmeSpec::parse("y ~ x + (1 | g").is_err());
        assert!(LmeSpec::parse("y ~ x + (a + b | g)").is_err());
    }

    #[test]
    fn counts_added_columns() {
        let base = LmeSpec::parse("rt ~ freq * length + (1|s)").unwrap();
        let tgt = LmeSpec::parse("rt ~ s0 + s1 + s2 + freq * length + (1|s)").unwrap();
        assert_eq!(tgt.added_columns(&base), 3);
    }
}
