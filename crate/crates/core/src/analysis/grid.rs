use serde::{Deserialize, Serialize};

use crate::distrib::Temperature;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    Paper,
    Explicit,
}

/// Strictly increasing temperatures to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureGrid {
    pub mode: GridMode,
    values: Vec<Temperature>,
}

impl TemperatureGrid {
    /// 1.0 to 1.9 by 0.1, 2.0 to 3.25 by 0.25, 3.5 to 10.0 by 0.5.
    pub fn paper() -> Self {
        let mut v: Vec<f64> = (10..=19).map(|i| i as f64 / 10.0).collect();
        v.extend((0..6).map(|i| 2.0 + 0.25 * i as f64));
        v.extend((0..14).map(|i| 3.5 + 0.5 * i as f64));
        Self {
            mode: GridMode::Paper,
            values: v.into_iter().map(|t| Temperature::new(t).unwrap()).collect(),
        }
    }

    pub fn explicit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty temperature grid"));
        }
        let temps = values
            .iter()
            .map(|&t| Temperature::new(t))
            .collect::<Result<Vec<_>>>()?;
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("temperature grid must be strictly increasing"));
        }
        Ok(Self {
            mode: GridMode::Explicit,
            values: temps,
        })
    }

    /// `"paper"` or a comma-separated list such as `"1.0,2.5"`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("paper") {
            return Ok(Self::paper());
        }
        let vals = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("grid value `{}`: {e}", p.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::explicit(&vals)
    }

    pub fn values(&self) -> &[Temperature] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn position(&self, t: f64) -> Option<usize> {
        self.values.iter().position(|v| v.value() == t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_grid_layout() {
        let g = TemperatureGrid::paper();
        let v: Vec<f64> = g.values().iter().map(|t| t.value()).collect();
        assert_eq!(v.len(), 30);
        assert_eq!(&v[..3], &[1.0, 1.1, 1.2]);
        assert_eq!(v[10..16], [2.0, 2.25, 2.5, 2.75, 3.0, 3.25]);
        assert_eq!(v[16], 3.5);
        assert_eq!(*v.last().unwrap(), 10.0);
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn parses_lists() {
        assert_eq!(TemperatureGrid::parse("1.0, 2.5").unwrap().len(), 2);
        assert!(TemperatureGrid::parse("2.5,1.0").is_err());
        assert!(TemperatureGrid::parse("1,x").is_err());
        assert!(TemperatureGrid::parse("0,1").is_err());
        assert_eq!(TemperatureGrid::parse("paper").unwrap().position(2.5), Some(12));
    }
}
