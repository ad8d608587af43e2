//! Giacomini-White tests of equal predictive ability on loss differentials.
//!
//! p-values are only indicative when the models are re-estimated recursively.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rv::std_normal_cdf;

pub const MIN_LENGTH: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl TestResult {
    /// `***`, `**`, `*` at the 1%, 5% and 10% levels.
    pub fn stars(&self) -> &'static str {
        stars(self.p_value)
    }
}

pub fn stars(p: f64) -> &'static str {
    if !p.is_finite() {
        ""
    } else if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Newey-West covariance of the rows of `z` (centered), Bartlett weights with `lags` lags.
pub fn hac_covariance(z: &DMatrix<f64>, lags: usize) -> DMatrix<f64> {
    let t = z.nrows();
    let q = z.ncols();
    let mean = z.row_mean();
    let c = DMatrix::from_fn(t, q, |i, j| z[(i, j)] - mean[j]);
    let gamma = |j: usize| -> DMatrix<f64> {
        let mut g = DMatrix::zeros(q, q);
        for s in j..t {
            let a = c.row(s).transpose();
            let b = c.row(s - j);
            g += a * b;
        }
        g / t as f64
    };
    let mut omega = gamma(0);
    for j in 1..=lags.min(t.saturating_sub(1)) {
        let w = 1.0 - j as f64 / (lags + 1) as f64;
        let g = gamma(j);
        omega += (&g + g.transpose()) * w;
    }
    omega
}

fn check(diff: &[f64], min: usize) -> Result<()> {
    if diff.len() < min {
        return Err(Error::invalid(format!(
            "loss differential has {} points; at least {min} required",
            diff.len()
        )));
    }
    if diff.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loss differential".into()));
    }
    Ok(())
}

/// t-type test of `E[ΔL] = 0` with a HAC variance using `h − 1` lags.
pub fn gw_unconditional(diff: &[f64], h: usize) -> Result<TestResult> {
    check(diff, MIN_LENGTH)?;
    if diff.iter().all(|v| *v == 0.0) {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let n = diff.len() as f64;
    let z = DMatrix::from_column_slice(diff.len(), 1, diff);
    let var = hac_covariance(&z, h.saturating_sub(1))[(0, 0)];
    if !(var > 0.0) {
        return Err(Error::invalid("loss differential has zero HAC variance"));
    }
    let mean = diff.iter().sum::<f64>() / n;
    let statistic = mean / (var / n).sqrt();
    Ok(TestResult {
        statistic,
        p_value: 2.0 * (1.0 - std_normal_cdf(statistic.abs())),
    })
}

/// Wald test of `E[instrumentsₜ · ΔLₜ] = 0`; row `t` of `instruments` pairs with `diff[t]`.
pub fn gw_conditional(diff: &[f64], h: usize, instruments: &DMatrix<f64>) -> Result<TestResult> {
    let q = instruments.ncols();
    check(diff, MIN_LENGTH + q)?;
    if instruments.nrows() != diff.len() {
        return Err(Error::dim("instrument rows", diff.len(), instruments.nrows()));
    }
    if diff.iter().all(|v| *v == 0.0) {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let t = diff.len();
    let z = DMatrix::from_fn(t, q, |i, j| instruments[(i, j)] * diff[i]);
    let zbar: DVector<f64> = z.row_mean().transpose();
    let omega = hac_covariance(&z, h.saturating_sub(1));
    let chol = linalg::cholesky(&omega, "instrument HAC covariance")
        .map_err(|e| Error::Singular(format!("{e}; instruments are collinear or degenerate")))?;
    let statistic = t as f64 * zbar.dot(&chol.solve(&zbar));
    let chi = ChiSquared::new(q as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(TestResult {
        statistic,
        p_value: 1.0 - chi.cdf(statistic),
    })
}

/// Conditional test with instruments `(1, ΔLₜ₋ₕ)`; uses the last `len − h` differentials.
pub fn gw_conditional_default(diff: &[f64], h: usize) -> Result<TestResult> {
    let h = h.max(1);
    if diff.len() <= h {
        return Err(Error::invalid("loss differential shorter than the horizon"));
    }
    let target = &diff[h..];
    let inst = DMatrix::from_fn(target.len(), 2, |i, j| if j == 0 { 1.0 } else { diff[i] });
    gw_conditional(target, h, &inst)
}
