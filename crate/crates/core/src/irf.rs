//! Generalized impulse responses to volatility and skewness shocks.
//!
//! For every posterior draw, baseline and shocked futures are simulated from the
//! end of the sample with identical random numbers; the shocked path adds
//! `size · chol(Q) eₖ` to the state at horizon 0.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forecast::MAX_REJECT_SHARE;
use crate::linalg;
use crate::model::{advance, Dataset, History, ModelSpec, ParameterDraw, StatePath, StepShocks};
use crate::rv::{mix_seed, RngHandle};
use crate::sampler::Chain;
use crate::scoring::quantile_sorted;

pub const DEFAULT_REPLICATIONS: usize = 100;

/// Response of one posterior draw: rows are horizons `0..H`, columns are the `N`
/// observables followed by the `K` states.
#[derive(Clone, Debug)]
pub struct DrawResponse {
    pub mean: DMatrix<f64>,
    /// Monte Carlo standard error of `mean` across innovation sets.
    pub std_error: DMatrix<f64>,
    pub rejected: usize,
}

#[derive(Clone, Debug)]
pub struct Irf {
    /// Column labels: observables, then `h_<var>` and (with skewness) `d_<var>`.
    pub labels: Vec<String>,
    pub median: DMatrix<f64>,
    pub p16: DMatrix<f64>,
    pub p84: DMatrix<f64>,
    pub draws: Vec<DrawResponse>,
}

pub fn state_labels(spec: &ModelSpec, labels: &[String]) -> Vec<String> {
    let mut out: Vec<String> = labels.iter().map(|l| format!("h_{l}")).collect();
    if spec.variant.has_skew() {
        out.extend(labels.iter().map(|l| format!("d_{l}")));
    }
    out
}

/// Resolves a shock name (`h_<var>`, `d_<var>` or a 0-based state index).
pub fn shock_index(spec: &ModelSpec, labels: &[String], name: &str) -> Result<usize> {
    if let Ok(k) = name.parse::<usize>() {
        return if k < spec.state_dim() {
            Ok(k)
        } else {
            Err(Error::invalid(format!(
                "shock index {k} out of range 0..{}",
                spec.state_dim()
            )))
        };
    }
    if name.starts_with("d_") && !spec.variant.has_skew() {
        return Err(Error::invalid(format!(
            "skewness shock `{name}` is undefined in the sv_only variant"
        )));
    }
    state_labels(spec, labels)
        .iter()
        .position(|s| s == name)
        .ok_or_else(|| {
            Error::invalid(format!(
                "unknown shock `{name}`; expected one of {}",
                state_labels(spec, labels).join(", ")
            ))
        })
}

/// Paired-path responses for one parameter draw.
#[allow(clippy::too_many_arguments)]
pub fn draw_response(
    spec: &ModelSpec,
    params: &ParameterDraw,
    path: &StatePath,
    data: &Dataset,
    shock: usize,
    size: f64,
    horizon: usize,
    n_rep: usize,
    rng: &mut RngHandle,
) -> Result<DrawResponse> {
    let k = spec.state_dim();
    if shock >= k {
        return Err(Error::invalid(format!("shock index {shock} out of range 0..{k}")));
    }
    if horizon == 0 || n_rep == 0 {
        return Err(Error::invalid("horizon and replications must be positive"));
    }
    let n = spec.n_vars;
    let width = n + k;
    let q_chol = linalg::cholesky(&params.state_cov, "Q")?.l();
    let a_inv = params.a_inverse();
    let impulse: DVector<f64> = q_chol.column(shock) * size;
    let start = History::at_end(spec, data, data.n_obs() - 1, path)?;
    let max_rejects = (MAX_REJECT_SHARE * n_rep as f64).floor() as usize;
    let mut sum = DMatrix::zeros(horizon, width);
    let mut sum_sq = DMatrix::zeros(horizon, width);
    let mut rejected = 0;
    let mut accepted = 0;
    while accepted < n_rep {
        let mut base = start.clone();
        let mut shocked = start.clone();
        let mut diff = DMatrix::zeros(horizon, width);
        let mut ok = true;
        for h in 0..horizon {
            let shocks = StepShocks::draw(spec, rng);
            let shift = if h == 0 { Some(&impulse) } else { None };
            let b = advance(spec, params, &q_chol, &a_inv, &mut base, &shocks, None);
            let s = advance(spec, params, &q_chol, &a_inv, &mut shocked, &shocks, shift);
            if !b.in_bounds || !s.in_bounds {
                ok = false;
                break;
            }
            for i in 0..n {
                diff[(h, i)] = s.y[i] - b.y[i];
            }
            for j in 0..k {
                diff[(h, n + j)] = s.beta[j] - b.beta[j];
            }
        }
        if !ok || diff.iter().any(|v| !v.is_finite()) {
            rejected += 1;
            if rejected > max_rejects {
                return Err(Error::TooManyRejections {
                    rejected,
                    attempted: accepted + rejected,
                });
            }
            continue;
        }
        sum += &diff;
        sum_sq += diff.component_mul(&diff);
        accepted += 1;
    }
    let r = n_rep as f64;
    let mean = &sum / r;
    let std_error = DMatrix::from_fn(horizon, width, |i, j| {
        if n_rep < 2 {
            return 0.0;
        }
        let var = ((sum_sq[(i, j)] - r * mean[(i, j)].powi(2)) / (r - 1.0)).max(0.0);
        (var / r).sqrt()
    });
    Ok(DrawResponse {
        mean,
        std_error,
        rejected,
    })
}

/// Impulse responses with 68% posterior bands, conditioned on the last observation.
/// Draws run in parallel with per-draw seeds, so results do not depend on thread count.
pub fn girf(
    chain: &Chain,
    data: &Dataset,
    shock: usize,
    size: f64,
    horizon: usize,
    n_rep: usize,
    seed: u64,
) -> Result<Irf> {
    if chain.is_empty() {
        return Err(Error::invalid("chain has no stored draws"));
    }
    let spec = &chain.spec;
    if shock >= spec.state_dim() {
        return Err(Error::invalid(format!(
            "shock index {shock} out of range 0..{}",
            spec.state_dim()
        )));
    }
    let draws: Vec<DrawResponse> = chain
        .draws
        .par_iter()
        .zip(chain.paths.par_iter())
        .enumerate()
        .map(|(i, (params, path))| {
            let mut rng = RngHandle::new(mix_seed(seed, &[i as u64]), 0);
            draw_response(spec, params, path, data, shock, size, horizon, n_rep, &mut rng)
        })
        .collect::<Result<_>>()?;
    let width = spec.n_vars + spec.state_dim();
    let band = |p: f64| {
        DMatrix::from_fn(horizon, width, |h, j| {
            let mut v: Vec<f64> = draws.iter().map(|d| d.mean[(h, j)]).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            quantile_sorted(&v, p)
        })
    };
    let mut labels = data.labels.clone();
    labels.extend(state_labels(spec, &data.labels));
    Ok(Irf {
        labels,
        median: band(0.5),
        p16: band(0.16),
        p84: band(0.84),
        draws,
    })
}

impl Irf {
    /// CSV with `horizon` then `<var>_median,<var>_p16,<var>_p84` per variable.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["horizon".to_string()];
        for l in &self.labels {
            header.extend([format!("{l}_median"), format!("{l}_p16"), format!("{l}_p84")]);
        }
        w.write_record(&header)?;
        for h in 0..self.median.nrows() {
            let mut rec = vec![h.to_string()];
            for j in 0..self.labels.len() {
                for m in [&self.median, &self.p16, &self.p84] {
                    rec.push(format!("{}", m[(h, j)]));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
