use std::f64::consts::PI;

use serde::Serialize;

use super::dense::{
    backward_solve_transposed, cholesky_in_place, dot, forward_solve, inverse_from_cholesky, Mat,
};
use super::design::DesignMatrix;
use super::nelder_mead::{self, SimplexOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    pub simplex: SimplexOptions,
}

/// Estimated covariance of one random-effects term, in response units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomEffectSummary {
    pub group: String,
    /// Intercept variance then slope variance, as present.
    pub variances: Vec<f64>,
    /// Intercept-slope correlation for correlated terms.
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LmeFit {
    pub col_names: Vec<String>,
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    /// Maximised log-likelihood, natural-log units.
    pub llh: f64,
    pub deviance: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n: usize,
    pub random_effects: Vec<RandomEffectSummary>,
    /// Row-major `p x p` covariance of `beta`.
    pub vcov_beta: Vec<f64>,
    /// Conditional fitted values `X beta + Z b`.
    #[serde(skip)]
    pub fitted: Vec<f64>,
    /// `y - fitted`.
    #[serde(skip)]
    pub residuals: Vec<f64>,
    #[serde(skip)]
    pub(crate) response_fingerprint: u64,
}

impl LmeFit {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn coef(&self, name: &str) -> Option<f64> {
        self.col_names.iter().position(|c| c == name).map(|j| self.beta[j])
    }

    pub fn mse(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum::<f64>() / self.n as f64
    }
}

/// The solution of the penalised least-squares problem at a fixed `theta`.
#[derive(Debug, Clone)]
pub struct Profile {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub deviance: f64,
    pub llh: f64,
}

struct CrossProducts {
    n: usize,
    p: usize,
    q: usize,
    xtx: Mat,
    xty: Vec<f64>,
    yty: f64,
    ztz: Mat,
    /// Row-major `q x p`.
    ztx: Vec<f64>,
    zty: Vec<f64>,
}

impl CrossProducts {
    fn new(dm: &DesignMatrix) -> Self {
        let (n, p, q) = (dm.n, dm.p, dm.q());
        let mut xtx = Mat::zeros(p);
        let mut xty = vec![0.0; p];
        let mut yty = 0.0;
        let mut ztz = Mat::zeros(q);
        let mut ztx = vec![0.0; q * p];
        let mut zty = vec![0.0; q];
        for i in 0..n {
            let xr = dm.row(i);
            let y = dm.y[i];
            for a in 0..p {
                for b in 0..=a {
                    *xtx.at_mut(a, b) += xr[a] * xr[b];
                }
                xty[a] += xr[a] * y;
            }
            yty += y * y;
            let zr = dm.z_row(i);
            for &(c, v) in &zr {
                for &(d, w) in &zr {
                    *ztz.at_mut(c, d) += v * w;
                }
                for (t, xv) in ztx[c * p..(c + 1) * p].iter_mut().zip(xr) {
                    *t += v * xv;
                }
                zty[c] += v * y;
            }
        }
        for a in 0..p {
            for b in 0..a {
                *xtx.at_mut(b, a) = xtx.at(a, b);
            }
        }
        Self {
            n,
            p,
            q,
            xtx,
            xty,
            yty,
            ztz,
            ztx,
            zty,
        }
    }
}

/// Nonzero entries of each column of `Lambda` as (row, value).
fn lambda_columns(dm: &DesignMatrix, theta: &[f64]) -> Vec<Vec<(usize, f64)>> {
    let mut cols = Vec::with_capacity(dm.q());
    let mut t = 0;
    let mut offset = 0;
    for b in &dm.blocks {
        match b.nc() {
            1 => {
                for lvl in 0..b.levels.len() {
                    cols.push(vec![(offset + lvl, theta[t])]);
                }
            }
            2 => {
                let (a, c, d) = (theta[t], theta[t + 1], theta[t + 2]);
                for lvl in 0..b.levels.len() {
                    let o = offset + 2 * lvl;
                    cols.push(vec![(o, a), (o + 1, c)]);
                    cols.push(vec![(o + 1, d)]);
                }
            }
            _ => unreachable!("random terms have one or two columns per level"),
        }
        t += b.n_theta();
        offset += b.q();
    }
    cols
}

/// Indices into `theta` that are diagonal entries of a relative factor.
fn diagonal_indices(dm: &DesignMatrix) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = 0;
    for b in &dm.blocks {
        match b.nc() {
            1 => out.push(t),
            _ => {
                out.push(t);
                out.push(t + 2);
            }
        }
        t += b.n_theta();
    }
    out
}

fn initial_theta(dm: &DesignMatrix) -> Vec<f64> {
    let mut th = Vec::with_capacity(dm.n_theta());
    for b in &dm.blocks {
        match b.nc() {
            1 => th.push(1.0),
            _ => th.extend([1.0, 0.0, 1.0]),
        }
    }
    th
}

/// Flips column signs of each relative factor so its diagonal is
/// non-negative; `Lambda Lambda^T` is unchanged.
fn canonical_theta(dm: &DesignMatrix, theta: &mut [f64]) {
    let mut t = 0;
    for b in &dm.blocks {
        match b.nc() {
            1 => theta[t] = theta[t].abs(),
            _ => {
                if theta[t] < 0.0 {
                    theta[t] = -theta[t];
                    theta[t + 1] = -theta[t + 1];
                }
                theta[t + 2] = theta[t + 2].abs();
            }
        }
        t += b.n_theta();
    }
}

struct Solved {
    l: Mat,
    rzx: Vec<f64>,
    lx: Mat,
    cu: Vec<f64>,
    cb: Vec<f64>,
    ldl2: f64,
    r2: f64,
}

fn solve(cp: &CrossProducts, lam: &[Vec<(usize, f64)>]) -> Result<Solved> {
    let (p, q) = (cp.p, cp.q);

    // A = Lambda^T Z^T Z Lambda + I
    let mut bmat = vec![0.0; q * q];
    for (j, col) in lam.iter().enumerate() {
        for i in 0..q {
            let mut s = 0.0;
            for &(l, v) in col {
                s += cp.ztz.at(i, l) * v;
            }
            bmat[i * q + j] = s;
        }
    }
    let mut l = Mat::zeros(q);
    for (i, col) in lam.iter().enumerate() {
        for j in 0..q {
            let mut s = 0.0;
            for &(r, v) in col {
                s += v * bmat[r * q + j];
            }
            *l.at_mut(i, j) = s;
        }
        *l.at_mut(i, i) += 1.0;
    }
    cholesky_in_place(&mut l, 0.0).map_err(|_| Error::Numerical {
        message: "random-effects system is not positive definite".into(),
        condition: f64::INFINITY,
    })?;

    // R_ZX = L^{-1} Lambda^T Z^T X, c_u = L^{-1} Lambda^T Z^T y
    let mut rzx = vec![0.0; q * p];
    let mut cu = vec![0.0; q];
    for (i, col) in lam.iter().enumerate() {
        for &(r, v) in col {
            for k in 0..p {
                rzx[i * p + k] += v * cp.ztx[r * p + k];
            }
            cu[i] += v * cp.zty[r];
        }
    }
    let mut colbuf = vec![0.0; q];
    for k in 0..p {
        for i in 0..q {
            colbuf[i] = rzx[i * p + k];
        }
        forward_solve(&l, &mut colbuf);
        for i in 0..q {
            rzx[i * p + k] = colbuf[i];
        }
    }
    forward_solve(&l, &mut cu);

    // X^T X - R_ZX^T R_ZX = L_X L_X^T
    let mut lx = cp.xtx.clone();
    for a in 0..p {
        for b in 0..p {
            let mut s = 0.0;
            for i in 0..q {
                s += rzx[i * p + a] * rzx[i * p + b];
            }
            *lx.at_mut(a, b) -= s;
        }
    }
    cholesky_in_place(&mut lx, 1e-10).map_err(|j| Error::RankDeficient { rank: j, cols: p })?;

    let mut cb: Vec<f64> = (0..p)
        .map(|a| cp.xty[a] - (0..q).map(|i| rzx[i * p + a] * cu[i]).sum::<f64>())
        .collect();
    forward_solve(&lx, &mut cb);

    let r2 = cp.yty - dot(&cu, &cu) - dot(&cb, &cb);
    let ldl2 = 2.0 * (0..q).map(|i| l.at(i, i).ln()).sum::<f64>();
    Ok(Solved {
        l,
        rzx,
        lx,
        cu,
        cb,
        ldl2,
        r2,
    })
}

fn ml_deviance(n: usize, ldl2: f64, r2: f64) -> f64 {
    let nf = n as f64;
    ldl2 + nf * (1.0 + (2.0 * PI * r2 / nf).ln())
}

fn deviance_at(dm: &DesignMatrix, cp: &CrossProducts, theta: &[f64]) -> Result<f64> {
    let s = solve(cp, &lambda_columns(dm, theta))?;
    if !(s.r2 > 0.0) {
        return Err(Error::Degenerate("penalised residual sum of squares is zero".into()));
    }
    Ok(ml_deviance(cp.n, s.ldl2, s.r2))
}

struct Assembled {
    beta: Vec<f64>,
    fitted: Vec<f64>,
    residuals: Vec<f64>,
    vcov_unscaled: Mat,
    ldl2: f64,
    r2: f64,
}

fn assemble(dm: &DesignMatrix, cp: &CrossProducts, theta: &[f64]) -> Result<Assembled> {
    let lam = lambda_columns(dm, theta);
    let s = solve(cp, &lam)?;
    let (p, q) = (cp.p, cp.q);
    let mut beta = s.cb.clone();
    backward_solve_transposed(&s.lx, &mut beta);
    let mut u: Vec<f64> = (0..q)
        .map(|i| s.cu[i] - dot(&s.rzx[i * p..(i + 1) * p], &beta))
        .collect();
    backward_solve_transposed(&s.l, &mut u);

    let mut b = vec![0.0; q];
    for (j, col) in lam.iter().enumerate() {
        for &(r, v) in col {
            b[r] += v * u[j];
        }
    }
    let mut fitted = Vec::with_capacity(dm.n);
    let mut residuals = Vec::with_capacity(dm.n);
    let mut rss = 0.0;
    for i in 0..dm.n {
        let mut f = dot(dm.row(i), &beta);
        for (c, v) in dm.z_row(i) {
            f += v * b[c];
        }
        let r = dm.y[i] - f;
        rss += r * r;
        fitted.push(f);
        residuals.push(r);
    }
    let r2 = rss + dot(&u, &u);
    if !(r2 > 0.0) {
        return Err(Error::Degenerate("penalised residual sum of squares is zero".into()));
    }
    Ok(Assembled {
        beta,
        fitted,
        residuals,
        vcov_unscaled: inverse_from_cholesky(&s.lx),
        ldl2: s.ldl2,
        r2,
    })
}

/// Exact conditional solution at a given `theta`.
pub fn profile(dm: &DesignMatrix, theta: &[f64]) -> Result<Profile> {
    if theta.len() != dm.n_theta() {
        return Err(Error::invalid(format!(
            "expected {} covariance parameters, got {}",
            dm.n_theta(),
            theta.len()
        )));
    }
    let cp = CrossProducts::new(dm);
    let a = assemble(dm, &cp, theta)?;
    let deviance = ml_deviance(dm.n, a.ldl2, a.r2);
    Ok(Profile {
        theta: theta.to_vec(),
        beta: a.beta,
        sigma2: a.r2 / dm.n as f64,
        deviance,
        llh: -0.5 * deviance,
    })
}

pub fn fit_ml(dm: &DesignMatrix) -> Result<LmeFit> {
    fit_ml_with(dm, FitOptions::default())
}

/// Maximum-likelihood fit. A fit whose simplex search ran out of
/// iterations is returned with `converged = false`, not as an error.
pub fn fit_ml_with(dm: &DesignMatrix, opts: FitOptions) -> Result<LmeFit> {
    let n_var = dm.n_theta() + 1;
    if dm.n <= dm.p + n_var {
        return Err(Error::invalid(format!(
            "{} observations cannot identify {} fixed effects and {} variance parameters",
            dm.n, dm.p, n_var
        )));
    }
    let (lo, hi) = dm
        .y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo == 0.0 {
        return Err(Error::Degenerate("response has zero variance".into()));
    }
    dm.check_rank()?;
    let cp = CrossProducts::new(dm);

    let (mut theta, mut dev, iterations, converged) = if dm.n_theta() == 0 {
        (Vec::new(), deviance_at(dm, &cp, &[])?, 0, true)
    } else {
        // fail fast on an unusable design before searching
        deviance_at(dm, &cp, &initial_theta(dm))?;
        let res = nelder_mead::minimize(
            |th| deviance_at(dm, &cp, th).unwrap_or(f64::INFINITY),
            &initial_theta(dm),
            opts.simplex,
        );
        (res.x, res.f, res.iterations, res.converged)
    };

    // the optimum often sits on the boundary; try it exactly
    for idx in diagonal_indices(dm) {
        if theta[idx] == 0.0 {
            continue;
        }
        let mut trial = theta.clone();
        trial[idx] = 0.0;
        if idx + 1 < trial.len() && is_slope_intercept(dm, idx) {
            trial[idx + 1] = 0.0;
        }
        if let Ok(d) = deviance_at(dm, &cp, &trial) {
            if d <= dev {
                theta = trial;
                dev = d;
            }
        }
    }
    canonical_theta(dm, &mut theta);

    let a = assemble(dm, &cp, &theta)?;
    let nf = dm.n as f64;
    let sigma2 = a.r2 / nf;
    let deviance = ml_deviance(dm.n, a.ldl2, a.r2);
    let vcov_beta = a.vcov_unscaled.a.iter().map(|v| v * sigma2).collect();
    let random_effects = summarize_random(dm, &theta, sigma2);

    Ok(LmeFit {
        col_names: dm.col_names.clone(),
        beta: a.beta,
        theta,
        sigma2,
        llh: -0.5 * deviance,
        deviance,
        converged,
        iterations,
        n: dm.n,
        random_effects,
        vcov_beta,
        fitted: a.fitted,
        residuals: a.residuals,
        response_fingerprint: fingerprint(&dm.y),
    })
}

/// Whether `theta[idx]` is the intercept diagonal of a correlated 2x2 term,
/// in which case the off-diagonal `theta[idx + 1]` is zeroed with it.
fn is_slope_intercept(dm: &DesignMatrix, idx: usize) -> bool {
    let mut t = 0;
    for b in &dm.blocks {
        if t == idx {
            return b.nc() == 2;
        }
        t += b.n_theta();
    }
    false
}

fn summarize_random(dm: &DesignMatrix, theta: &[f64], sigma2: f64) -> Vec<RandomEffectSummary> {
    let mut out = Vec::with_capacity(dm.blocks.len());
    let mut t = 0;
    for b in &dm.blocks {
        let s = match b.nc() {
            1 => RandomEffectSummary {
                group: b.group.clone(),
                variances: vec![sigma2 * theta[t] * theta[t]],
                correlation: None,
            },
            _ => {
                let (a, c, d) = (theta[t], theta[t + 1], theta[t + 2]);
                let v0 = sigma2 * a * a;
                let v1 = sigma2 * (c * c + d * d);
                let cov = sigma2 * a * c;
                let corr = if v0 > 0.0 && v1 > 0.0 {
                    Some(cov / (v0 * v1).sqrt())
                } else {
                    None
                };
                RandomEffectSummary {
                    group: b.group.clone(),
                    variances: vec![v0, v1],
                    correlation: corr,
                }
            }
        };
        out.push(s);
        t += b.n_theta();
    }
    out
}

/// FNV-1a over the bit patterns of the response.
pub(crate) fn fingerprint(y: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in y {
        for byte in v.to_bits().to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lme::{build_design, DataTable, LmeSpec, RandomTerm};

    fn ols_llh(dm: &DesignMatrix) -> f64 {
        let prof = profile(dm, &vec![0.0; dm.n_theta()]).unwrap();
        prof.llh
    }

    fn toy() -> DataTable {
        let y = [3.1, 2.2, 4.8, 5.0, 1.9, 3.3, 4.1, 2.7, 3.9, 4.4, 2.5, 3.6];
        let x = [0.1, -0.4, 1.2, 0.9, -1.1, 0.3, 0.8, -0.2, 0.5, 1.0, -0.7, 0.2];
        let g = ["a", "a", "a", "b", "b", "b", "c", "c", "c", "d", "d", "d"];
        let mut t = DataTable::new();
        t.add_numeric("y", y.to_vec()).unwrap();
        t.add_numeric("x", x.to_vec()).unwrap();
        t.add_factor("g", g.iter().map(|s| s.to_string()).collect()).unwrap();
        t
    }

    #[test]
    fn fixed_only_model_is_ols() {
        let dm = build_design(&toy(), &LmeSpec::new("y").main("x")).unwrap();
        let fit = fit_ml(&dm).unwrap();
        // closed-form simple regression
        let (x, y) = (toy().numeric("x").unwrap().to_vec(), dm.y.clone());
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((fit.beta[1] - slope).abs() < 1e-10);
        let rss: f64 = fit.residuals.iter().map(|r| r * r).sum();
        let llh = -0.5 * n * ((2.0 * PI * rss / n).ln() + 1.0);
        assert!((fit.llh - llh).abs() < 1e-9);
        assert!(fit.converged);
    }

    #[test]
    fn random_intercept_fit_improves_on_ols() {
        let spec = LmeSpec::new("y").main("x").random(RandomTerm::intercept("g"));
        let dm = build_design(&toy(), &spec).unwrap();
        let fit = fit_ml(&dm).unwrap();
        assert!(fit.converged);
        assert!(fit.llh >= ols_llh(&dm) - 1e-9);
        assert!(fit.theta[0] >= 0.0);
        assert!(fit.sigma2 > 0.0);
        let resid_again: Vec<f64> = dm.y.iter().zip(&fit.fitted).map(|(y, f)| y - f).collect();
        assert_eq!(resid_again, fit.residuals);
    }

    #[test]
    fn rejects_constant_response_and_tiny_n() {
        let mut t = toy();
        t.add_numeric("y", vec![2.0; 12]).unwrap();
        let dm = build_design(&t, &LmeSpec::new("y").main("x")).unwrap();
        assert!(matches!(fit_ml(&dm), Err(Error::Degenerate(_))));

        let spec = LmeSpec::new("y").main("x").random(RandomTerm::slope("g", "x"));
        let small = toy().permuted(&[0, 1, 2, 3, 4, 5]);
        let dm = build_design(&small, &spec).unwrap();
        assert!(fit_ml(&dm).is_err());
    }
}
