use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use super::dense::{cholesky_in_place, Mat};
use super::fit::LmeFit;
use crate::error::{Error, Result};

/// Slack below zero tolerated on `2 (llh_target - llh_base)` before the
/// models are rejected as not nested.
pub const CHI2_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
}

pub fn loglik_per_datapoint(fit: &LmeFit) -> Result<f64> {
    if !fit.converged {
        return Err(Error::Unavailable("log-likelihood of a non-converged fit".into()));
    }
    Ok(fit.llh / fit.n as f64)
}

fn check_comparable(target: &LmeFit, base: &LmeFit) -> Result<()> {
    if target.n != base.n {
        return Err(Error::InvalidComparison(format!(
            "fits cover {} and {} observations",
            target.n, base.n
        )));
    }
    if target.response_fingerprint != base.response_fingerprint {
        return Err(Error::InvalidComparison("fits were made on different responses".into()));
    }
    Ok(())
}

/// `(llh_target - llh_base) / n`, natural-log units per observation.
pub fn delta_llh(target: &LmeFit, base: &LmeFit) -> Result<f64> {
    check_comparable(target, base)?;
    Ok(loglik_per_datapoint(target)? - loglik_per_datapoint(base)?)
}

/// Likelihood-ratio test of nested ML fits against a chi-squared reference
/// with `df` degrees of freedom.
pub fn lrt(target: &LmeFit, base: &LmeFit, df: usize) -> Result<LrtResult> {
    check_comparable(target, base)?;
    if !target.converged || !base.converged {
        return Err(Error::Unavailable("likelihood-ratio test needs converged fits".into()));
    }
    let chi2 = 2.0 * (target.llh - base.llh);
    lrt_from_statistic(chi2, df)
}

pub fn lrt_from_statistic(chi2: f64, df: usize) -> Result<LrtResult> {
    if df == 0 {
        return Err(Error::invalid("likelihood-ratio test needs df >= 1"));
    }
    if chi2.is_nan() {
        return Err(Error::invalid("chi-squared statistic is NaN"));
    }
    if chi2 < -CHI2_SLACK {
        return Err(Error::InvalidComparison(format!(
            "negative chi-squared statistic {chi2:.3e}; models are not nested or not at their optima"
        )));
    }
    let chi2 = chi2.max(0.0);
    let p_value = if chi2 == 0.0 {
        1.0
    } else {
        gamma_ur(df as f64 / 2.0, chi2 / 2.0).clamp(0.0, 1.0)
    };
    Ok(LrtResult { chi2, df, p_value })
}

/// Correlation matrix of the fixed-effect estimates, row-major `p x p`.
pub fn fixed_corr(fit: &LmeFit) -> Result<Vec<f64>> {
    if !fit.converged {
        return Err(Error::Unavailable("correlation of a non-converged fit".into()));
    }
    let p = fit.p();
    let mut m = Mat {
        n: p,
        a: fit.vcov_beta.clone(),
    };
    if cholesky_in_place(&mut m, 1e-14).is_err() {
        let diag: Vec<f64> = (0..p).map(|i| fit.vcov_beta[i * p + i]).collect();
        let hi = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        return Err(Error::Numerical {
            message: "covariance of the fixed effects is not positive definite".into(),
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    let sd: Vec<f64> = (0..p).map(|i| fit.vcov_beta[i * p + i].sqrt()).collect();
    let mut corr = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            corr[i * p + j] = if i == j {
                1.0
            } else {
                fit.vcov_beta[i * p + j] / (sd[i] * sd[j])
            };
        }
    }
    Ok(corr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lrt_examples() {
        let r = lrt_from_statistic(0.0, 3).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = lrt_from_statistic(16.27, 3).unwrap();
        assert!((0.0009..=0.0011).contains(&r.p_value), "{}", r.p_value);
        assert_eq!(lrt_from_statistic(-5e-7, 1).unwrap().chi2, 0.0);
        assert!(lrt_from_statistic(-1e-3, 1).is_err());
        assert!(lrt_from_statistic(1.0, 0).is_err());
    }

    #[test]
    fn chi2_one_df_matches_normal_tail() {
        // P(chi2_1 > z^2) = 2 (1 - Phi(z)); z = 1.959963984540054 gives 0.05
        let z: f64 = 1.959_963_984_540_054;
        let r = lrt_from_statistic(z * z, 1).unwrap();
        assert!((r.p_value - 0.05).abs() < 1e-12);
    }
}
