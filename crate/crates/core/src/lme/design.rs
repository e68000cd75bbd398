use std::collections::{BTreeMap, BTreeSet};

use super::dense::{cholesky_in_place, Mat};
use super::{FixedTerm, LmeSpec, INTERCEPT};
use crate::error::{Error, Result};

/// Column store for model fitting: numeric columns and categorical
/// (grouping) columns, all of length `n`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataTable {
    n: Option<usize>,
    numeric: BTreeMap<String, Vec<f64>>,
    factors: BTreeMap<String, Vec<String>>,
}

impl DataTable {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_len(&mut self, name: &str, len: usize) -> Result<()> {
        match self.n {
            Some(n) if n != len => Err(Error::invalid(format!(
                "column `{name}` has {len} rows, table has {n}"
            ))),
            _ => {
                self.n = Some(len);
                Ok(())
            }
        }
    }

    pub fn add_numeric(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        self.check_len(&name, values.len())?;
        self.factors.remove(&name);
        self.numeric.insert(name, values);
        Ok(())
    }

    pub fn add_factor(&mut self, name: impl Into<String>, values: Vec<String>) -> Result<()> {
        let name = name.into();
        self.check_len(&name, values.len())?;
        self.numeric.remove(&name);
        self.factors.insert(name, values);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n.unwrap_or(0)
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        if let Some(v) = self.numeric.get(name) {
            return Ok(v);
        }
        if self.factors.contains_key(name) {
            return Err(Error::invalid(format!("predictor `{name}` is not numeric")));
        }
        Err(Error::MissingColumn(name.to_string()))
    }

    pub fn factor(&self, name: &str) -> Result<&[String]> {
        if let Some(v) = self.factors.get(name) {
            return Ok(v);
        }
        if self.numeric.contains_key(name) {
            return Err(Error::invalid(format!(
                "grouping column `{name}` is numeric, expected categorical"
            )));
        }
        Err(Error::MissingColumn(name.to_string()))
    }

    /// The same table with rows reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            n: Some(order.len()),
            numeric: self
                .numeric
                .iter()
                .map(|(k, v)| (k.clone(), order.iter().map(|&i| v[i]).collect()))
                .collect(),
            factors: self
                .factors
                .iter()
                .map(|(k, v)| (k.clone(), order.iter().map(|&i| v[i].clone()).collect()))
                .collect(),
        }
    }
}

/// One random-effects term expanded over the levels of its grouping factor.
/// Columns of `Z` for this block are ordered level-major: for level `j` the
/// intercept column (if any) precedes the slope column.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomBlock {
    pub group: String,
    pub levels: Vec<String>,
    /// Level of each observation.
    pub level_of: Vec<usize>,
    pub intercept: bool,
    pub slope_name: Option<String>,
    pub slope: Option<Vec<f64>>,
}

impl RandomBlock {
    /// Columns per level.
    pub fn nc(&self) -> usize {
        usize::from(self.intercept) + usize::from(self.slope.is_some())
    }

    /// Covariance parameters of this block.
    pub fn n_theta(&self) -> usize {
        let nc = self.nc();
        nc * (nc + 1) / 2
    }

    pub fn q(&self) -> usize {
        self.levels.len() * self.nc()
    }

    /// Nonzero entries of row `i` of this block of `Z`, as (local column, value).
    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let base = self.level_of[i] * self.nc();
        let icpt = self.intercept.then_some((base, 1.0));
        let slope = self
            .slope
            .as_ref()
            .map(|s| (base + usize::from(self.intercept), s[i]));
        icpt.into_iter().chain(slope)
    }
}

/// Fixed-effects matrix, random-effects structure and response.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub n: usize,
    pub p: usize,
    /// Row-major `n x p`.
    pub x: Vec<f64>,
    pub col_names: Vec<String>,
    pub y: Vec<f64>,
    pub blocks: Vec<RandomBlock>,
}

impl DesignMatrix {
    /// Assembles a design without the rank check that [`build_design`] runs.
    pub fn from_parts(
        x: Vec<f64>,
        col_names: Vec<String>,
        y: Vec<f64>,
        blocks: Vec<RandomBlock>,
    ) -> Result<Self> {
        let n = y.len();
        let p = col_names.len();
        if n == 0 {
            return Err(Error::invalid("empty data"));
        }
        if p == 0 {
            return Err(Error::invalid("no fixed-effect columns"));
        }
        if x.len() != n * p {
            return Err(Error::invalid(format!(
                "X has {} entries, expected {n} x {p}",
                x.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("design contains missing or non-finite values"));
        }
        for b in &blocks {
            if b.level_of.len() != n || b.level_of.iter().any(|&l| l >= b.levels.len()) {
                return Err(Error::invalid(format!("bad level index in block `{}`", b.group)));
            }
            if let Some(s) = &b.slope {
                if s.len() != n || s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("bad slope column in block `{}`", b.group)));
                }
            }
        }
        Ok(Self {
            n,
            p,
            x,
            col_names,
            y,
            blocks,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn q(&self) -> usize {
        self.blocks.iter().map(RandomBlock::q).sum()
    }

    pub fn n_theta(&self) -> usize {
        self.blocks.iter().map(RandomBlock::n_theta).sum()
    }

    /// Nonzero entries of row `i` of `Z`, as (global column, value).
    pub fn z_row(&self, i: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(self.blocks.len() * 2);
        let mut offset = 0;
        for b in &self.blocks {
            out.extend(b.row_entries(i).map(|(c, v)| (offset + c, v)));
            offset += b.q();
        }
        out
    }

    /// Dense row-major `n x q` copy of `Z`.
    pub fn z_dense(&self) -> Vec<f64> {
        let q = self.q();
        let mut z = vec![0.0; self.n * q];
        for i in 0..self.n {
            for (c, v) in self.z_row(i) {
                z[i * q + c] = v;
            }
        }
        z
    }

    /// Numerical rank of X from a Cholesky factorisation of the
    /// column-normalised cross product.
    pub fn check_rank(&self) -> Result<()> {
        let p = self.p;
        let mut norms = vec![0.0; p];
        for i in 0..self.n {
            for (nj, v) in norms.iter_mut().zip(self.row(i)) {
                *nj += v * v;
            }
        }
        if let Some(j) = norms.iter().position(|&v| v == 0.0) {
            return Err(Error::RankDeficient {
                rank: j,
                cols: p,
            });
        }
        let norms: Vec<f64> = norms.iter().map(|v| v.sqrt()).collect();
        let mut m = Mat::zeros(p);
        for i in 0..self.n {
            let r = self.row(i);
            for a in 0..p {
                let va = r[a] / norms[a];
                for b in 0..=a {
                    *m.at_mut(a, b) += va * r[b] / norms[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                *m.at_mut(b, a) = m.at(a, b);
            }
        }
        cholesky_in_place(&mut m, 1e-10).map_err(|j| Error::RankDeficient { rank: j, cols: p })
    }
}

/// Realises `spec` on `data`: interaction columns are elementwise products
/// of their uncentered components; one `Z` block per random term with
/// levels in sorted order.
pub fn build_design(data: &DataTable, spec: &LmeSpec) -> Result<DesignMatrix> {
    spec.validate()?;
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::invalid("empty data"));
    }
    let y = data.numeric(&spec.response)?.to_vec();

    let names = spec.column_names();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(names.len());
    for name in &names {
        let col = if name == INTERCEPT {
            vec![1.0; n]
        } else if let Some((a, b)) = split_interaction(spec, name) {
            let (a, b) = (data.numeric(a)?, data.numeric(b)?);
            a.iter().zip(b).map(|(u, v)| u * v).collect()
        } else {
            data.numeric(name)?.to_vec()
        };
        cols.push(col);
    }
    let p = cols.len();
    let mut x = vec![0.0; n * p];
    for (j, c) in cols.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            x[i * p + j] = v;
        }
    }

    let mut blocks = Vec::with_capacity(spec.random.len());
    for term in &spec.random {
        let g = data.factor(&term.group)?;
        let levels: Vec<String> = g.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let level_of = g
            .iter()
            .map(|v| levels.binary_search(v).expect("level present"))
            .collect();
        let slope = term
            .slope
            .as_ref()
            .map(|s| data.numeric(s).map(<[f64]>::to_vec))
            .transpose()?;
        blocks.push(RandomBlock {
            group: term.group.clone(),
            levels,
            level_of,
            intercept: term.intercept,
            slope_name: term.slope.clone(),
            slope,
        });
    }

    let dm = DesignMatrix::from_parts(x, names, y, blocks)?;
    dm.check_rank()?;
    Ok(dm)
}

fn split_interaction<'a>(spec: &'a LmeSpec, name: &str) -> Option<(&'a str, &'a str)> {
    spec.fixed.iter().find_map(|t| match t {
        FixedTerm::Crossed(a, b) | FixedTerm::Interaction(a, b) if format!("{a}:{b}") == name => {
            Some((a.as_str(), b.as_str()))
        }
        _ => None,
    })
}
