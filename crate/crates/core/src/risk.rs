//! Tail risk from in-sample one-step-ahead predictive distributions.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{advance, Dataset, History, ModelSpec, StatePath, StepShocks};
use crate::period::Quarter;
use crate::rv::{mix_seed, RngHandle};
use crate::sampler::{Chain, PathStorage};
use crate::scoring::quantile_sorted;

/// Quarterly growth rates are multiplied by this before thresholding.
pub const ANNUALIZATION: f64 = 4.0;

/// History just before data row `t`, with states from a full-sample path.
fn history_before(spec: &ModelSpec, data: &Dataset, path: &StatePath, t: usize) -> History {
    let ny = spec.presample().max(1);
    let l = spec.l_inmean_lags;
    let k = spec.state_dim();
    // Path row holding the state for data row r.
    let path_row = |r: usize| r + l - spec.presample();
    History {
        y: (1..=ny).map(|j| data.row(t - j)).collect(),
        beta: (1..=l.max(1)).map(|j| path.beta(path_row(t) - j, k)).collect(),
    }
}

/// `sims` draws per posterior draw from the predictive of row `t` given rows before it.
/// Columns in `annualize` are scaled by [`ANNUALIZATION`].
pub fn one_step_draws(
    chain: &Chain,
    data: &Dataset,
    t: usize,
    sims: usize,
    annualize: &[bool],
    rng: &mut RngHandle,
) -> Result<DMatrix<f64>> {
    let spec = &chain.spec;
    if chain.is_empty() {
        return Err(Error::invalid("chain has no stored draws"));
    }
    if chain.storage != PathStorage::Full {
        return Err(Error::invalid(
            "risk measures need a chain stored with full state paths",
        ));
    }
    let t0 = spec.presample();
    if t < t0.max(1) || t >= data.n_obs() {
        return Err(Error::invalid(format!(
            "row {t} outside the estimation sample {t0}..{}",
            data.n_obs()
        )));
    }
    let n = spec.n_vars;
    let mut out = DMatrix::zeros(chain.len() * sims, n);
    let mut row = 0;
    for (params, path) in chain.draws.iter().zip(&chain.paths) {
        if path.rows() != data.periods(spec) + spec.l_inmean_lags {
            return Err(Error::dim(
                "stored path rows",
                data.periods(spec) + spec.l_inmean_lags,
                path.rows(),
            ));
        }
        let q_chol = linalg::cholesky(&params.state_cov, "Q")?.l();
        let a_inv = params.a_inverse();
        let start = history_before(spec, data, path, t);
        for _ in 0..sims {
            let mut hist = start.clone();
            let shocks = StepShocks::draw(spec, rng);
            let step = advance(spec, params, &q_chol, &a_inv, &mut hist, &shocks, None);
            for v in 0..n {
                let scale = if annualize.get(v).copied().unwrap_or(false) {
                    ANNUALIZATION
                } else {
                    1.0
                };
                out[(row, v)] = scale * step.y[v];
            }
            row += 1;
        }
    }
    Ok(out)
}

/// Fraction of draws strictly above `threshold`.
pub fn exceedance_prob(draws: &[f64], threshold: f64) -> f64 {
    if draws.is_empty() {
        return f64::NAN;
    }
    draws.iter().filter(|v| **v > threshold).count() as f64 / draws.len() as f64
}

#[derive(Clone, Debug)]
pub struct RiskTable {
    pub dates: Vec<Quarter>,
    pub labels: Vec<String>,
    pub percentiles: Vec<f64>,
    /// `values[p]` is `T × N` for percentile `percentiles[p]`.
    pub values: Vec<DMatrix<f64>>,
    /// Per requested (variable, threshold): exceedance probability at each date.
    pub exceedance: Vec<(usize, f64, DVector<f64>)>,
}

/// Empirical percentiles (in percent, e.g. `[5, 95]`) of the one-step predictive at
/// every in-sample date, plus optional exceedance probabilities.
pub fn tail_percentiles(
    chain: &Chain,
    data: &Dataset,
    percentiles: &[f64],
    sims: usize,
    annualize: &[bool],
    thresholds: &[(usize, f64)],
    seed: u64,
) -> Result<RiskTable> {
    if percentiles.iter().any(|p| !(0.0..=100.0).contains(p)) {
        return Err(Error::invalid("percentiles must lie in [0, 100]"));
    }
    let n = data.n_vars();
    if let Some((v, _)) = thresholds.iter().find(|(v, _)| *v >= n) {
        return Err(Error::invalid(format!("threshold variable index {v} out of range")));
    }
    let rows: Vec<usize> = (chain.spec.presample().max(1)..data.n_obs()).collect();
    let per_row: Vec<(Vec<DVector<f64>>, Vec<f64>)> = rows
        .par_iter()
        .map(|&t| {
            let mut rng = RngHandle::new(mix_seed(seed, &[t as u64]), 0);
            let draws = one_step_draws(chain, data, t, sims, annualize, &mut rng)?;
            let cols: Vec<Vec<f64>> = (0..n)
                .map(|v| {
                    let mut c: Vec<f64> = draws.column(v).iter().cloned().collect();
                    c.sort_by(|a, b| a.total_cmp(b));
                    c
                })
                .collect();
            let pct = percentiles
                .iter()
                .map(|p| DVector::from_fn(n, |v, _| quantile_sorted(&cols[v], p / 100.0)))
                .collect();
            let exc = thresholds
                .iter()
                .map(|(v, thr)| exceedance_prob(&cols[*v], *thr))
                .collect();
            Ok((pct, exc))
        })
        .collect::<Result<_>>()?;
    let values = (0..percentiles.len())
        .map(|p| DMatrix::from_fn(rows.len(), n, |i, v| per_row[i].0[p][v]))
        .collect();
    let exceedance = thresholds
        .iter()
        .enumerate()
        .map(|(j, (v, thr))| (*v, *thr, DVector::from_fn(rows.len(), |i, _| per_row[i].1[j])))
        .collect();
    Ok(RiskTable {
        dates: rows.iter().map(|r| data.dates[*r]).collect(),
        labels: data.labels.clone(),
        percentiles: percentiles.to_vec(),
        values,
        exceedance,
    })
}

impl RiskTable {
    /// CSV with `date`, then `<var>_p<pct>` per variable and percentile, then `<var>_gt_<thr>` columns.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        for l in &self.labels {
            for p in &self.percentiles {
                header.push(format!("{l}_p{p}"));
            }
        }
        for (v, thr, _) in &self.exceedance {
            header.push(format!("{}_gt_{thr}", self.labels[*v]));
        }
        w.write_record(&header)?;
        for (i, d) in self.dates.iter().enumerate() {
            let mut rec = vec![d.to_string()];
            for v in 0..self.labels.len() {
                for m in &self.values {
                    rec.push(format!("{}", m[(i, v)]));
                }
            }
            for (_, _, e) in &self.exceedance {
                rec.push(format!("{}", e[i]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rv::std_normal;

    #[test]
    fn exceedance_examples() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(exceedance_prob(&d, 0.0), 1.0);
        assert_eq!(exceedance_prob(&d, 2.5), 0.5);
        assert_eq!(exceedance_prob(&d, 4.0), 0.0);
    }

    #[test]
    fn gaussian_tail_probability() {
        let mut rng = RngHandle::new(9, 0);
        let d: Vec<f64> = (0..100_000).map(|_| std_normal(&mut rng)).collect();
        assert!((exceedance_prob(&d, 1.645) - 0.05).abs() < 0.005);
    }
}
