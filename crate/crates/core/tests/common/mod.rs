//! Shared oracles for the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use skewvar::model::{Dataset, ModelSpec, ParameterDraw, Variant};
use skewvar::period::Quarter;
use skewvar::priors::InitialStatePrior;
use skewvar::rv::{draw_mvn, RngHandle};

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{j−1} exp(−2j²λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    (d, kolmogorov_q((en + 0.12 + 0.11 / en) * d))
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut x = a.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    let n = x.len() as f64;
    let mut d = 0.0f64;
    for (i, v) in x.iter().enumerate() {
        let f = cdf(*v);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    let en = n.sqrt();
    (d, kolmogorov_q((en + 0.12 + 0.11 / en) * d))
}

/// Linear-Gaussian state space for the simulation-smoother oracle:
/// `x₀ ~ N(m0, p0)`, `xⱼ₊₁ = c + F xⱼ + w`, `w ~ N(0, Q)`, and for each `j` with an
/// observation, `yⱼ = H xⱼ + v`, `v ~ N(0, R)`.
pub struct LinearGaussian {
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
    pub c: DVector<f64>,
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub obs: Vec<Option<DVector<f64>>>,
}

impl LinearGaussian {
    /// Filtered moments `(m_j, P_j)` for `j = 0..len`.
    pub fn filter(&self) -> Vec<(DVector<f64>, DMatrix<f64>)> {
        let mut out = Vec::with_capacity(self.obs.len());
        let (mut m, mut p) = (self.m0.clone(), self.p0.clone());
        for (j, y) in self.obs.iter().enumerate() {
            if j > 0 {
                m = &self.c + &self.f * &m;
                p = &self.f * &p * self.f.transpose() + &self.q;
            }
            if let Some(y) = y {
                let s = &self.h * &p * self.h.transpose() + &self.r;
                let k = &p * self.h.transpose() * s.clone().try_inverse().unwrap();
                m = &m + &k * (y - &self.h * &m);
                p = &p - &k * &self.h * &p;
                p = (&p + p.transpose()) * 0.5;
            }
            out.push((m.clone(), p.clone()));
        }
        out
    }

    /// Exact smoothed marginals (Rauch-Tung-Striebel).
    pub fn smooth(&self) -> Vec<(DVector<f64>, DMatrix<f64>)> {
        let filt = self.filter();
        let n = filt.len();
        let mut out = filt.clone();
        for j in (0..n - 1).rev() {
            let (mf, pf) = &filt[j];
            let pp = &self.f * pf * self.f.transpose() + &self.q;
            let g = pf * self.f.transpose() * pp.clone().try_inverse().unwrap();
            let mp = &self.c + &self.f * mf;
            let (ms, ps) = out[j + 1].clone();
            let m = mf + &g * (ms - mp);
            let p = pf + &g * (ps - &pp) * g.transpose();
            out[j] = (m, (&p + p.transpose()) * 0.5);
        }
        out
    }

    /// Forward-filtering backward-sampling draw of the whole path.
    pub fn ffbs(&self, rng: &mut RngHandle) -> Vec<DVector<f64>> {
        let filt = self.filter();
        let n = filt.len();
        let mut path = vec![DVector::zeros(self.m0.len()); n];
        path[n - 1] = draw_mvn(&filt[n - 1].0, &filt[n - 1].1, rng).unwrap();
        let q_inv = self.q.clone().try_inverse().unwrap();
        for j in (0..n - 1).rev() {
            let (mf, pf) = &filt[j];
            let pf_inv = pf.clone().try_inverse().unwrap();
            let prec = &pf_inv + self.f.transpose() * &q_inv * &self.f;
            let cov = prec.clone().try_inverse().unwrap();
            let mean = &cov * (&pf_inv * mf + self.f.transpose() * &q_inv * (&path[j + 1] - &self.c));
            path[j] = draw_mvn(&mean, &((&cov + cov.transpose()) * 0.5), rng).unwrap();
        }
        path
    }
}

/// Brute-force posterior of `vec(Γ)` in `yₜ = (I ⊗ xₜ′) vec(Γ) + uₜ`, `uₜ ~ N(0, Σₜ)`.
pub fn gls_posterior(
    xs: &[DMatrix<f64>],
    ys: &[DVector<f64>],
    sigmas: &[DMatrix<f64>],
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let p0 = prior_cov.clone().try_inverse().unwrap();
    let mut prec = p0.clone();
    let mut lin = &p0 * prior_mean;
    for ((x, y), s) in xs.iter().zip(ys).zip(sigmas) {
        let si = s.clone().try_inverse().unwrap();
        prec += x.transpose() * &si * x;
        lin += x.transpose() * &si * y;
    }
    let cov = prec.try_inverse().unwrap();
    (&cov * lin, cov)
}

pub fn quarter(s: &str) -> Quarter {
    s.parse().unwrap()
}

/// Small spec with one lag everywhere.
pub fn small_spec(n: usize, variant: Variant) -> ModelSpec {
    let mut s = ModelSpec::new(n, variant);
    s.p_obs_lags = 1;
    s.q_state_lags = 1;
    s.l_inmean_lags = 1;
    s
}

/// Dataset of iid N(0, 1) rows.
pub fn noise_dataset(rows: usize, n: usize, seed: u64) -> Dataset {
    let mut rng = RngHandle::new(seed, 0);
    let y = DMatrix::from_fn(rows, n, |_, _| skewvar::rv::std_normal(&mut rng));
    Dataset::from_matrix(y, quarter("1970Q1")).unwrap()
}

/// Moderate, stationary parameters for `spec`.
pub fn tame_params(spec: &ModelSpec) -> ParameterDraw {
    let n = spec.n_vars;
    let k = spec.state_dim();
    let mut p = ParameterDraw::zeros(spec);
    p.intercept = DVector::from_element(n, 0.1);
    p.var_lags[0] = DMatrix::from_diagonal_element(n, n, 0.4);
    for i in 1..n {
        p.a[(i, 0)] = 0.25;
    }
    p.state_ar = DMatrix::from_diagonal_element(k, k, 0.8);
    p.state_cov = DMatrix::from_diagonal_element(k, k, 0.1);
    if spec.variant.has_feedback() {
        p.vol_in_mean[0] = DMatrix::from_diagonal_element(n, n, -0.1);
        if spec.variant.has_skew() {
            p.skew_in_mean[0] = DMatrix::from_diagonal_element(n, n, 0.3);
        }
    }
    p
}

/// SvOnly model made linear-Gaussian by a fixed observation covariance: two
/// log-variance states driving the mean through one in-mean lag, nothing else.
pub struct LinearSv {
    pub spec: ModelSpec,
    pub params: ParameterDraw,
    pub sigma: DMatrix<f64>,
    pub initial: InitialStatePrior,
    pub data: Dataset,
    /// The same model as a state space: state row `j` drives observation `j`.
    pub lg: LinearGaussian,
}

pub fn linear_sv(periods: usize, rng: &mut RngHandle) -> LinearSv {
    let spec = small_spec(2, Variant::SvOnly);
    let mut params = ParameterDraw::zeros(&spec);
    params.vol_in_mean[0] = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, -0.3, 0.6]);
    params.state_ar = DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.7]);
    params.state_cov = DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.15]);
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
    let initial = InitialStatePrior {
        mean: DVector::zeros(2),
        cov: DMatrix::identity(2, 2),
    };
    let zero = DVector::zeros(2);
    let mut x = draw_mvn(&initial.mean, &initial.cov, rng).unwrap();
    let mut y = DMatrix::zeros(periods + 1, 2);
    let mut obs = Vec::new();
    for j in 0..=periods {
        if j < periods {
            let yj = &params.vol_in_mean[0] * &x + draw_mvn(&zero, &sigma, rng).unwrap();
            y.row_mut(j + 1).copy_from(&yj.transpose());
            obs.push(Some(yj));
            x = &params.state_ar * &x + draw_mvn(&zero, &params.state_cov, rng).unwrap();
        } else {
            obs.push(None);
        }
    }
    let lg = LinearGaussian {
        m0: initial.mean.clone(),
        p0: initial.cov.clone(),
        c: zero,
        f: params.state_ar.clone(),
        q: params.state_cov.clone(),
        h: params.vol_in_mean[0].clone(),
        r: sigma.clone(),
        obs,
    };
    LinearSv {
        data: Dataset::from_matrix(y, quarter("1990Q1")).unwrap(),
        spec,
        params,
        sigma,
        initial,
        lg,
    }
}
