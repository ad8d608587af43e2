//! Conditional particle filter with ancestor sampling.
//!
//! Each particle carries a window of its last `L` states (most recent first)
//! because the observation mean loads on lagged states. When the reference
//! trajectory is re-attached to a candidate ancestor, its next `L` lag windows
//! are rebuilt from the candidate's history, so the ancestor weight includes
//! every observation density whose lags straddle the splice point.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{
    within_state_bounds, Dataset, ModelSpec, ObservationEquation, ParameterDraw, StatePath, TransitionEquation,
};
use crate::priors::InitialStatePrior;
use crate::rv;

/// Particle window: the last `L` states, most recent first.
pub type Window = Vec<DVector<f64>>;

/// Per-sweep particle diagnostics.
#[derive(Clone, Debug, Default)]
pub struct CpfStats {
    /// Effective sample size of the normalized weights, per period.
    pub ess: Vec<f64>,
    /// Whether the returned path differs from the reference, per period.
    pub updated: Vec<bool>,
}

impl CpfStats {
    pub fn update_rate(&self) -> f64 {
        if self.updated.is_empty() {
            return 0.0;
        }
        self.updated.iter().filter(|u| **u).count() as f64 / self.updated.len() as f64
    }
}

/// Normalizes log-weights with max subtraction.
pub fn normalize_log_weights(logw: &[f64]) -> Result<Vec<f64>> {
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Underflow(format!(
            "all {} particle weights are zero or undefined",
            logw.len()
        )));
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

pub fn effective_sample_size(probs: &[f64]) -> f64 {
    1.0 / probs.iter().map(|p| p * p).sum::<f64>()
}

/// Multinomial resampling: `count` iid indices from `probs`.
///
/// The free particles of a conditional filter need ancestors that are iid draws
/// from the weights; systematic resampling breaks the invariance of the kernel.
pub fn multinomial_resample<R: Rng + ?Sized>(probs: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    (0..count).map(|_| sample_index(probs, rng)).collect()
}

pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    // Rounding left `u` above the final cumulative sum: take the last positive entry.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Reference trajectory unpacked into per-row vectors.
pub struct Reference {
    pub presample: usize,
    pub beta: Vec<DVector<f64>>,
    pub theta: Vec<DVector<f64>>,
}

impl Reference {
    pub fn new(path: &StatePath, k: usize) -> Self {
        Self {
            presample: path.presample,
            beta: (0..path.rows()).map(|r| path.beta(r, k)).collect(),
            theta: (0..path.rows()).map(|r| path.theta_row(r)).collect(),
        }
    }

    fn beta_at(&self, i: usize) -> &DVector<f64> {
        &self.beta[self.presample + i]
    }
}

/// Unnormalized log ancestor weights for re-attaching the reference at period `i`
/// to each candidate window from period `i − 1`.
///
/// With `factors = 0` these are the candidates' log-weights. Otherwise they add the
/// transition density of the reference state at `i` and the observation densities
/// at `i..` whose lags reach back before `i`, truncated after `factors` periods.
pub fn ancestor_log_weights(
    obs: &ObservationEquation<'_>,
    trans: &TransitionEquation<'_>,
    reference: &Reference,
    i: usize,
    logw_prev: &[f64],
    windows_prev: &[Window],
    factors: usize,
) -> Vec<f64> {
    let l = obs.spec.l_inmean_lags;
    let periods = obs.periods();
    let last = if factors == 0 {
        None
    } else {
        Some((i + factors - 1).min(periods - 1).min(i + l - 1))
    };
    logw_prev
        .iter()
        .zip(windows_prev)
        .map(|(&lw, win)| {
            if lw == f64::NEG_INFINITY {
                return lw;
            }
            let Some(last) = last else { return lw };
            let mut total = lw + trans.logpdf(i, reference.beta_at(i), &win[0]);
            for s in i..=last {
                let lags: Vec<&DVector<f64>> = (1..=l)
                    .map(|lag| {
                        if lag <= s - i {
                            reference.beta_at(s - lag)
                        } else {
                            // Period s − lag < i comes from the candidate: win[m] = β_{i−1−m}.
                            &win[lag - (s - i) - 1]
                        }
                    })
                    .collect();
                total += obs.loglik(
                    s,
                    reference.beta_at(s),
                    &lags,
                    &reference.theta[reference.presample + s],
                );
            }
            total
        })
        .collect()
}

/// Particle settings for one sweep.
#[derive(Clone, Copy, Debug)]
pub struct CpfSettings {
    pub n_particles: usize,
    pub ancestor_factors: usize,
}

impl CpfSettings {
    pub fn from_spec(spec: &ModelSpec) -> Self {
        Self {
            n_particles: spec.n_particles,
            ancestor_factors: spec.ancestor_factors,
        }
    }
}

/// One CPF-AS sweep from the model's own equations.
pub fn cpf_as<R: Rng + ?Sized>(
    spec: &ModelSpec,
    params: &ParameterDraw,
    data: &Dataset,
    initial: &InitialStatePrior,
    reference: &StatePath,
    rng: &mut R,
) -> Result<(StatePath, CpfStats)> {
    let obs = ObservationEquation::new(spec, params, data);
    let trans = TransitionEquation::new(spec, params, data)?;
    cpf_as_with(&obs, &trans, initial, reference, CpfSettings::from_spec(spec), rng)
}

/// One CPF-AS sweep with explicit observation and transition equations.
pub fn cpf_as_with<R: Rng + ?Sized>(
    obs: &ObservationEquation<'_>,
    trans: &TransitionEquation<'_>,
    initial: &InitialStatePrior,
    reference: &StatePath,
    settings: CpfSettings,
    rng: &mut R,
) -> Result<(StatePath, CpfStats)> {
    let spec = obs.spec;
    let n = spec.n_vars;
    let k = spec.state_dim();
    let l = spec.l_inmean_lags;
    let periods = obs.periods();
    let m = settings.n_particles.max(1);
    if reference.presample != l || reference.rows() != l + periods {
        return Err(Error::dim("reference path rows", l + periods, reference.rows()));
    }
    let init_chol = crate::linalg::cholesky(&initial.cov, "initial state covariance")?.l();
    let reference_view = Reference::new(reference, k);

    // Generation 0: pre-sample windows; the last slot holds the reference.
    let windows0: Vec<Window> = (0..m)
        .map(|j| {
            if j + 1 == m {
                (0..l).map(|q| reference_view.beta[l - 1 - q].clone()).collect()
            } else {
                (0..l)
                    .map(|_| &initial.mean + &init_chol * rv::std_normal_vector(k, rng))
                    .collect()
            }
        })
        .collect();
    let mut windows = windows0.clone();
    let mut logw = vec![0.0; m];
    let mut betas: Vec<Vec<DVector<f64>>> = Vec::with_capacity(periods);
    let mut thetas: Vec<Vec<DVector<f64>>> = Vec::with_capacity(periods);
    let mut ancestors: Vec<Vec<usize>> = Vec::with_capacity(periods);
    let mut stats = CpfStats::default();
    let skew = spec.variant.has_skew();

    for i in 0..periods {
        let probs = normalize_log_weights(&logw).map_err(|e| match e {
            Error::Underflow(msg) => Error::Underflow(format!("{msg} at period {i}")),
            other => other,
        })?;
        let mut anc = multinomial_resample(&probs, m - 1, rng);
        let mut new_windows = Vec::with_capacity(m);
        let mut new_logw = Vec::with_capacity(m);
        let mut gen_beta = Vec::with_capacity(m);
        let mut gen_theta = Vec::with_capacity(m);
        for &a in &anc {
            let prev = &windows[a];
            let beta = trans.sample(i, &prev[0], rng);
            let theta = if skew {
                rv::std_normal_vector(n, rng)
            } else {
                DVector::zeros(n)
            };
            let lw = if within_state_bounds(&beta, n) {
                let lags: Vec<&DVector<f64>> = prev.iter().collect();
                obs.loglik(i, &beta, &lags, &theta)
            } else {
                f64::NEG_INFINITY
            };
            let mut win = Vec::with_capacity(l);
            win.push(beta.clone());
            win.extend(prev.iter().take(l - 1).cloned());
            new_windows.push(win);
            new_logw.push(if lw.is_nan() { f64::NEG_INFINITY } else { lw });
            gen_beta.push(beta);
            gen_theta.push(theta);
        }

        // Reference particle with a freshly sampled ancestor.
        let a_ref = if m == 1 {
            0
        } else {
            let alw = ancestor_log_weights(
                obs,
                trans,
                &reference_view,
                i,
                &logw,
                &windows,
                settings.ancestor_factors,
            );
            let ap = normalize_log_weights(&alw).map_err(|e| match e {
                Error::Underflow(msg) => Error::Underflow(format!("ancestor weights: {msg} at period {i}")),
                other => other,
            })?;
            sample_index(&ap, rng)
        };
        let ref_beta = reference_view.beta_at(i).clone();
        let ref_theta = reference_view.theta[l + i].clone();
        let prev = &windows[a_ref];
        let lags: Vec<&DVector<f64>> = prev.iter().collect();
        let lw_ref = obs.loglik(i, &ref_beta, &lags, &ref_theta);
        let mut win = Vec::with_capacity(l);
        win.push(ref_beta.clone());
        win.extend(prev.iter().take(l - 1).cloned());
        new_windows.push(win);
        new_logw.push(if lw_ref.is_nan() { f64::NEG_INFINITY } else { lw_ref });
        gen_beta.push(ref_beta);
        gen_theta.push(ref_theta);
        anc.push(a_ref);

        if let Ok(p) = normalize_log_weights(&new_logw) {
            stats.ess.push(effective_sample_size(&p));
        } else {
            stats.ess.push(0.0);
        }
        windows = new_windows;
        logw = new_logw;
        betas.push(gen_beta);
        thetas.push(gen_theta);
        ancestors.push(anc);
    }

    let final_probs = normalize_log_weights(&logw)?;
    let mut idx = if m == 1 { 0 } else { sample_index(&final_probs, rng) };
    let mut path = StatePath::zeros(l, periods, n);
    for i in (0..periods).rev() {
        path.set_beta(l + i, &betas[i][idx]);
        path.set_theta_parent(l + i, &thetas[i][idx]);
        idx = ancestors[i][idx];
    }
    for (q, b) in windows0[idx].iter().enumerate() {
        path.set_beta(l - 1 - q, b);
    }
    stats.updated = (0..periods)
        .map(|i| path.beta(l + i, k) != reference_view.beta[l + i])
        .collect();
    Ok((path, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use crate::period::Quarter;
    use crate::rv::RngHandle;
    use nalgebra::DMatrix;

    #[test]
    fn multinomial_resampling_frequencies() {
        let mut rng = RngHandle::new(1, 0);
        let probs = [0.5, 0.0, 0.3, 0.2];
        let idx = multinomial_resample(&probs, 100_000, &mut rng);
        for (j, p) in probs.iter().enumerate() {
            let f = idx.iter().filter(|&&i| i == j).count() as f64 / idx.len() as f64;
            assert!((f - p).abs() < 0.005, "index {j}: {f} vs {p}");
        }
    }

    #[test]
    fn normalization_handles_large_magnitudes() {
        let p = normalize_log_weights(&[-1000.0, -1000.0 + 2f64.ln()]).unwrap();
        assert!((p[1] / p[0] - 2.0).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(normalize_log_weights(&[f64::NEG_INFINITY; 3]).is_err());
    }

    fn small_setup(variant: Variant) -> (ModelSpec, ParameterDraw, Dataset) {
        let mut spec = ModelSpec::new(1, variant);
        spec.p_obs_lags = 1;
        spec.q_state_lags = 1;
        let mut rng = RngHandle::new(3, 0);
        let y = DMatrix::from_fn(30, 1, |_, _| rv::std_normal(&mut rng));
        let data = Dataset::from_matrix(y, Quarter::new(2000, 1).unwrap()).unwrap();
        let mut params = ParameterDraw::zeros(&spec);
        let k = spec.state_dim();
        params.state_ar = DMatrix::identity(k, k) * 0.9;
        params.state_cov = DMatrix::identity(k, k) * 0.05;
        params.vol_in_mean[0][(0, 0)] = 0.3;
        (spec, params, data)
    }

    #[test]
    fn single_particle_returns_reference() {
        let (mut spec, params, data) = small_setup(Variant::Full);
        spec.n_particles = 1;
        let k = spec.state_dim();
        let mut rng = RngHandle::new(4, 0);
        let mut reference = StatePath::zeros(1, data.periods(&spec), 1);
        for r in 0..reference.rows() {
            reference.set_beta(r, &DVector::from_fn(k, |i, _| 0.1 * (r + i) as f64));
            if r >= 1 {
                reference.set_theta_parent(r, &DVector::from_element(1, -0.5));
            }
        }
        let initial = InitialStatePrior {
            mean: DVector::zeros(k),
            cov: DMatrix::identity(k, k),
        };
        let (path, stats) = cpf_as(&spec, &params, &data, &initial, &reference, &mut rng).unwrap();
        assert_eq!(path, reference);
        assert_eq!(stats.update_rate(), 0.0);
    }

    #[test]
    fn deterministic_states_follow_recursion() {
        let (mut spec, mut params, data) = small_setup(Variant::Full);
        spec.n_particles = 10;
        let k = spec.state_dim();
        params.state_ar = DMatrix::zeros(k, k);
        params.state_intercept = DVector::from_vec(vec![-0.4, 0.2]);
        params.state_y_lags[0].fill(0.0);
        params.state_cov = DMatrix::identity(k, k) * 1e-24;
        let initial = InitialStatePrior {
            mean: DVector::zeros(k),
            cov: DMatrix::identity(k, k),
        };
        let reference = StatePath::zeros(1, data.periods(&spec), 1);
        let mut rng = RngHandle::new(5, 0);
        let mut path = reference.clone();
        for _ in 0..3 {
            path = cpf_as(&spec, &params, &data, &initial, &path, &mut rng).unwrap().0;
        }
        for r in 1..path.rows() {
            assert!((path.h[(r, 0)] + 0.4).abs() < 1e-9);
            assert!((path.d[(r, 0)] - 0.2).abs() < 1e-9);
        }
        assert!(path.validate().is_ok());
    }

    #[test]
    fn identical_candidates_get_uniform_ancestor_weights() {
        let (spec, params, data) = small_setup(Variant::Full);
        let k = spec.state_dim();
        let obs = ObservationEquation::new(&spec, &params, &data);
        let trans = TransitionEquation::new(&spec, &params, &data).unwrap();
        let reference = StatePath::zeros(1, data.periods(&spec), 1);
        let view = Reference::new(&reference, k);
        let win = vec![vec![DVector::from_vec(vec![0.3, -0.1])]; 4];
        let lw = ancestor_log_weights(&obs, &trans, &view, 5, &[0.0; 4], &win, 5);
        let p = normalize_log_weights(&lw).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-14);
        }
        let zero = ancestor_log_weights(&obs, &trans, &view, 5, &[0.0, 1.0, 2.0, 3.0], &win, 0);
        assert_eq!(zero, vec![0.0, 1.0, 2.0, 3.0]);
    }
}
