//! Dense-covariance reference computations, independent of the profiled
//! solver: they build the full n x n marginal covariance and evaluate the
//! multivariate normal density directly.

use nalgebra::{DMatrix, DVector};
use tempsurp::lme::DesignMatrix;

pub fn x_matrix(dm: &DesignMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(dm.n, dm.p, &dm.x)
}

pub fn z_matrix(dm: &DesignMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(dm.n, dm.q(), &dm.z_dense())
}

/// Relative covariance `Lambda Lambda^T` of the random effects, assembled
/// from theta by hand.
pub fn relative_cov(dm: &DesignMatrix, theta: &[f64]) -> DMatrix<f64> {
    let q = dm.q();
    let mut lam = DMatrix::zeros(q, q);
    let (mut off, mut t) = (0, 0);
    for b in &dm.blocks {
        let nc = b.nc();
        for lvl in 0..b.levels.len() {
            let o = off + lvl * nc;
            if nc == 1 {
                lam[(o, o)] = theta[t];
            } else {
                lam[(o, o)] = theta[t];
                lam[(o + 1, o)] = theta[t + 1];
                lam[(o + 1, o + 1)] = theta[t + 2];
            }
        }
        off += b.q();
        t += b.n_theta();
    }
    &lam * lam.transpose()
}

/// `V / sigma^2 = Z Lambda Lambda^T Z^T + I`.
pub fn marginal_cov_unscaled(dm: &DesignMatrix, theta: &[f64]) -> DMatrix<f64> {
    let z = z_matrix(dm);
    &z * relative_cov(dm, theta) * z.transpose() + DMatrix::identity(dm.n, dm.n)
}

/// Log density of `y ~ N(X beta, sigma2 * V0)`.
pub fn mvn_loglik(dm: &DesignMatrix, beta: &[f64], theta: &[f64], sigma2: f64) -> f64 {
    let v = marginal_cov_unscaled(dm, theta) * sigma2;
    let chol = v.clone().cholesky().expect("covariance is positive definite");
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let r = DVector::from_column_slice(&dm.y) - x_matrix(dm) * DVector::from_column_slice(beta);
    let quad = r.dot(&chol.solve(&r));
    -0.5 * (dm.n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

/// Generalised least squares at fixed theta: `(beta, sigma2_ml)`.
pub fn gls(dm: &DesignMatrix, theta: &[f64]) -> (Vec<f64>, f64) {
    let v0 = marginal_cov_unscaled(dm, theta);
    let vinv = v0.try_inverse().expect("invertible");
    let x = x_matrix(dm);
    let y = DVector::from_column_slice(&dm.y);
    let xtv = x.transpose() * &vinv;
    let beta = (&xtv * &x).try_inverse().expect("XtVX invertible") * (&xtv * &y);
    let r = &y - &x * &beta;
    let sigma2 = (r.transpose() * &vinv * &r)[(0, 0)] / dm.n as f64;
    (beta.iter().copied().collect(), sigma2)
}

/// Covariance of the GLS estimator, `sigma2 (X^T V0^{-1} X)^{-1}`, as a
/// correlation matrix.
pub fn gls_corr(dm: &DesignMatrix, theta: &[f64], sigma2: f64) -> DMatrix<f64> {
    let vinv = marginal_cov_unscaled(dm, theta).try_inverse().unwrap();
    let x = x_matrix(dm);
    let cov = (x.transpose() * vinv * &x).try_inverse().unwrap() * sigma2;
    let p = dm.p;
    DMatrix::from_fn(p, p, |i, j| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt())
}

/// Gaussian log-likelihood of ordinary least squares at its ML variance.
pub fn ols_loglik(dm: &DesignMatrix) -> f64 {
    let x = x_matrix(dm);
    let y = DVector::from_column_slice(&dm.y);
    let qr = x.clone().qr();
    let beta = qr.r().try_inverse().unwrap() * qr.q().transpose() * &y;
    let r = &y - x * beta;
    let n = dm.n as f64;
    let rss = r.dot(&r);
    -0.5 * n * ((2.0 * std::f64::consts::PI * rss / n).ln() + 1.0)
}
