//! Prior construction: dummy-observation Normal priors for the observation and
//! transition coefficients, row-wise Normal priors on `A`, an inverse-Wishart
//! prior on `Q`, and initial-state moments from a no-feedback pre-model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dataset, ModelSpec, ParameterDraw, StatePath, Variant};
use crate::rv::{self, RngHandle};
use crate::sampler::{self, PathStorage, SamplerOptions};

/// Masked transition coefficients get this prior variance (and mean zero).
pub const MASKED_VARIANCE: f64 = 1e-9;

/// Tightness settings for the dummy-observation priors.
#[derive(Clone, Debug, PartialEq)]
pub struct DummyPriorConfig {
    pub tau_tight: f64,
    /// Tightness on lagged-state (and other predetermined) regressors.
    pub c_vol: f64,
    /// Tightness on the intercept.
    pub c_flat: f64,
    /// Prior mean on the own first lag, per variable.
    pub gamma: DVector<f64>,
    /// Residual scale per variable.
    pub s: DVector<f64>,
}

impl DummyPriorConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [("tau", self.tau_tight), ("c_vol", self.c_vol), ("c_flat", self.c_flat)] {
            if !(v > 0.0) || !v.is_finite() {
                problems.push(format!("{name} must be a positive finite number (got {v})"));
            }
        }
        if self.gamma.iter().any(|g| !g.is_finite()) {
            problems.push("gamma must be finite".into());
        }
        if self.gamma.len() != self.s.len() {
            problems.push("gamma and s must have the same length".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// `N(mean, cov)` over a column-major stacked coefficient matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianPrior {
    pub fn precision(&self, context: &str) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.cov, context)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IwPrior {
    pub scale: DMatrix<f64>,
    pub dof: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialStatePrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Row `k` of `A` (k ≥ 1, zero-based) has `k` free coefficients with prior `rows[k-1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct APrior {
    pub rows: Vec<GaussianPrior>,
}

/// Everything the Gibbs sampler conditions on a priori.
#[derive(Clone, Debug, PartialEq)]
pub struct Priors {
    pub observation: GaussianPrior,
    pub transition: GaussianPrior,
    pub a: APrior,
    pub q: IwPrior,
    pub initial: InitialStatePrior,
}

/// User-facing prior settings (config section `prior`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSettings {
    pub tau: f64,
    pub c_vol: f64,
    pub c_flat: f64,
    /// Sweeps of the pre-model chain (half are burn-in).
    pub pre_model_draws: usize,
    /// Inverse-Wishart degrees of freedom; `K + 1` when absent.
    pub iw_dof: Option<f64>,
    /// Number of leading dataset rows used to set `γ`, `s` and `S`; all rows when absent.
    pub training_rows: Option<usize>,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self {
            tau: 0.1,
            c_vol: 0.1,
            c_flat: 1000.0,
            pre_model_draws: 200,
            iw_dof: None,
            training_rows: None,
        }
    }
}

impl PriorSettings {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("prior.tau", self.tau),
            ("prior.c_vol", self.c_vol),
            ("prior.c_flat", self.c_flat),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                problems.push(format!("{name} must be > 0 (got {v})"));
            }
        }
        if self.pre_model_draws < 2 {
            problems.push("prior.pre_model_draws must be >= 2".into());
        }
        if let Some(d) = self.iw_dof {
            if !d.is_finite() {
                problems.push("prior.iw_dof must be finite".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Least squares via SVD; returns `(coefficients, residuals)`.
pub fn ols(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if x.nrows() != y.nrows() {
        return Err(Error::dim("least-squares rows", x.nrows(), y.nrows()));
    }
    let svd = x.clone().svd(true, true);
    let coef = svd
        .solve(y, 1e-12)
        .map_err(|e| Error::Singular(format!("least squares: {e}")))?;
    let resid = y - x * &coef;
    Ok((coef, resid))
}

/// AR(1) with intercept: returns `(slope, residual standard deviation)`.
pub fn ar1_fit(series: &[f64]) -> Result<(f64, f64)> {
    let n = series.len();
    if n < 4 {
        return Err(Error::invalid(format!(
            "AR(1) fit needs at least 4 observations, got {n}"
        )));
    }
    let x = DMatrix::from_fn(n - 1, 2, |i, j| if j == 0 { series[i] } else { 1.0 });
    let y = DMatrix::from_fn(n - 1, 1, |i, _| series[i + 1]);
    let (coef, resid) = ols(&x, &y)?;
    let dof = (n - 1).saturating_sub(2).max(1) as f64;
    Ok((coef[(0, 0)], (resid.norm_squared() / dof).sqrt()))
}

pub fn variance(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let m = series.iter().sum::<f64>() / n;
    series.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
}

/// Dummy observations for a system with `lags` lags of the endogenous block and
/// predetermined regressors with tightness `ex_tightness` (one entry per column).
pub fn dummy_system(
    gamma: &DVector<f64>,
    s: &DVector<f64>,
    tau: f64,
    lags: usize,
    ex_tightness: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = s.len();
    if gamma.len() != n {
        return Err(Error::dim("gamma", n, gamma.len()));
    }
    if let Some(i) = s.iter().position(|v| *v == 0.0 || !v.is_finite()) {
        return Err(Error::invalid(format!(
            "degenerate residual scale s[{i}] = {}; the training sample has no variation",
            s[i]
        )));
    }
    let ex = ex_tightness.len();
    let cols = n * lags + ex;
    let mut y_d = DMatrix::zeros(cols, n);
    let mut x_d = DMatrix::zeros(cols, cols);
    for i in 0..n {
        y_d[(i, i)] = gamma[i] * s[i] / tau;
    }
    for j in 0..lags {
        for i in 0..n {
            let r = j * n + i;
            x_d[(r, r)] = (j + 1) as f64 * s[i] / tau;
        }
    }
    for (e, c) in ex_tightness.iter().enumerate() {
        let r = n * lags + e;
        x_d[(r, r)] = 1.0 / c;
    }
    Ok((y_d, x_d))
}

/// Dummy observations for the observation-equation coefficients, regressors ordered
/// `[Y lags, lagged states, intercept]`.
pub fn build_dummy_observations(config: &DummyPriorConfig, spec: &ModelSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    config.validate()?;
    if config.s.len() != spec.n_vars {
        return Err(Error::dim("prior scale s", spec.n_vars, config.s.len()));
    }
    let mut ex = vec![config.c_vol; spec.inmean_regressors()];
    ex.push(config.c_flat);
    dummy_system(&config.gamma, &config.s, config.tau_tight, spec.p_obs_lags, &ex)
}

/// `Γ₀ = (x′x)⁻¹x′y`, `P₀ = S ⊗ (x′x)⁻¹`, stacked equation by equation.
pub fn prior_from_dummies(y_d: &DMatrix<f64>, x_d: &DMatrix<f64>, s_scale: &DMatrix<f64>) -> Result<GaussianPrior> {
    if y_d.nrows() != x_d.nrows() {
        return Err(Error::dim("dummy rows", x_d.nrows(), y_d.nrows()));
    }
    if s_scale.nrows() != y_d.ncols() || s_scale.ncols() != y_d.ncols() {
        return Err(Error::dim("prior scale S", y_d.ncols(), s_scale.nrows()));
    }
    let xtx = x_d.transpose() * x_d;
    let xtx_inv = linalg::spd_inverse(&xtx, "dummy-observation moment matrix")
        .map_err(|e| Error::Singular(format!("{e}; x_D'x_D is singular, try a larger tightness")))?;
    let gamma0 = &xtx_inv * (x_d.transpose() * y_d);
    let mean = DVector::from_column_slice(gamma0.as_slice());
    let cov = linalg::symmetrize(&s_scale.kronecker(&xtx_inv));
    Ok(GaussianPrior { mean, cov })
}

/// Positions (in the stacked transition vector) of `θ` entries linking the
/// volatility and skewness blocks.
pub fn cross_block_mask(spec: &ModelSpec) -> Vec<usize> {
    if !spec.variant.has_skew() {
        return Vec::new();
    }
    let n = spec.n_vars;
    let k = spec.state_dim();
    let r = spec.transition_regressors();
    let mut mask = Vec::new();
    for eq in 0..k {
        for reg in 0..k {
            if (eq < n) != (reg < n) {
                mask.push(eq * r + reg);
            }
        }
    }
    mask
}

/// Pins the masked entries at mean 0 with variance [`MASKED_VARIANCE`].
pub fn apply_mask(prior: &mut GaussianPrior, mask: &[usize]) {
    for &i in mask {
        prior.mean[i] = 0.0;
        for j in 0..prior.cov.ncols() {
            prior.cov[(i, j)] = 0.0;
            prior.cov[(j, i)] = 0.0;
        }
        prior.cov[(i, i)] = MASKED_VARIANCE;
    }
}

/// Transition-coefficient prior, regressors `[βₜ₋₁, Y lags, intercept]`, with the
/// cross-block mask applied. `config.gamma`/`config.s` are per state (length K);
/// `s_scale` is K×K.
pub fn transition_prior(
    spec: &ModelSpec,
    config: &DummyPriorConfig,
    s_scale: &DMatrix<f64>,
    mask: &[usize],
) -> Result<GaussianPrior> {
    config.validate()?;
    let k = spec.state_dim();
    if config.s.len() != k {
        return Err(Error::dim("transition prior scale", k, config.s.len()));
    }
    let mut ex = vec![config.c_vol; spec.n_vars * spec.effective_state_lags()];
    ex.push(config.c_flat);
    let (y_d, x_d) = dummy_system(&config.gamma, &config.s, config.tau_tight, 1, &ex)?;
    let mut prior = prior_from_dummies(&y_d, &x_d, s_scale)?;
    apply_mask(&mut prior, mask);
    Ok(prior)
}

/// Prior mean for `A` from residuals `v` (rows = periods): off-diagonal entries of
/// the inverse Cholesky factor of `var(v)`, rows divided by their diagonal;
/// prior variance identity.
pub fn a_prior_from_residuals(v: &DMatrix<f64>) -> Result<APrior> {
    let n = v.ncols();
    let t = v.nrows();
    if t < 2 {
        return Err(Error::invalid("need at least 2 residual rows for the A prior"));
    }
    let mean = v.row_mean();
    let centered = DMatrix::from_fn(t, n, |i, j| v[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (t as f64 - 1.0);
    let chol = linalg::cholesky(&linalg::symmetrize(&cov), "residual covariance for the A prior")?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Singular("residual Cholesky factor".into()))?;
    let rows = (1..n)
        .map(|k| {
            let diag = l_inv[(k, k)];
            GaussianPrior {
                mean: DVector::from_fn(k, |j, _| l_inv[(k, j)] / diag),
                cov: DMatrix::identity(k, k),
            }
        })
        .collect();
    Ok(APrior { rows })
}

/// Unit lower-triangular matrix holding the prior means of [`APrior`].
pub fn a_prior_mean_matrix(prior: &APrior, n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::identity(n, n);
    for (k, row) in prior.rows.iter().enumerate() {
        for j in 0..=k {
            a[(k + 1, j)] = row.mean[j];
        }
    }
    a
}

fn training_block(data: &Dataset, settings: &PriorSettings) -> DMatrix<f64> {
    let rows = settings.training_rows.unwrap_or(data.n_obs()).clamp(4, data.n_obs());
    data.y.rows(0, rows).into_owned()
}

/// `γ`, `s` from per-variable AR(1) fits and `S` = diagonal of training variances.
pub fn observation_scales(
    data: &Dataset,
    settings: &PriorSettings,
) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let train = training_block(data, settings);
    let n = train.ncols();
    let mut gamma = DVector::zeros(n);
    let mut s = DVector::zeros(n);
    let mut var = DVector::zeros(n);
    for i in 0..n {
        let col: Vec<f64> = train.column(i).iter().cloned().collect();
        let (g, sd) = ar1_fit(&col)?;
        gamma[i] = g;
        s[i] = sd;
        var[i] = variance(&col);
    }
    Ok((gamma, s, DMatrix::from_diagonal(&var)))
}

/// Observation-coefficient prior for `spec`.
pub fn observation_prior(spec: &ModelSpec, data: &Dataset, settings: &PriorSettings) -> Result<GaussianPrior> {
    let (gamma, s, s_scale) = observation_scales(data, settings)?;
    let config = DummyPriorConfig {
        tau_tight: settings.tau,
        c_vol: settings.c_vol,
        c_flat: settings.c_flat,
        gamma,
        s,
    };
    let (y_d, x_d) = build_dummy_observations(&config, spec)?;
    prior_from_dummies(&y_d, &x_d, &s_scale)
}

/// Regressor matrix `[Y lags, lagged states, 1]` for the estimation sample.
pub fn observation_regressors(spec: &ModelSpec, data: &Dataset, states: &StatePath) -> DMatrix<f64> {
    let n = spec.n_vars;
    let k = spec.state_dim();
    let t0 = spec.presample();
    let periods = data.n_obs() - t0;
    let r = spec.obs_regressors();
    let mut x = DMatrix::zeros(periods, r);
    for i in 0..periods {
        let t = t0 + i;
        let s = i + spec.l_inmean_lags;
        let mut col = 0;
        for j in 1..=spec.p_obs_lags {
            for v in 0..n {
                x[(i, col)] = data.y[(t - j, v)];
                col += 1;
            }
        }
        if spec.variant.has_feedback() {
            for l in 1..=spec.l_inmean_lags {
                let beta = states.beta(s - l, k);
                for v in 0..k {
                    x[(i, col)] = beta[v];
                    col += 1;
                }
            }
        }
        x[(i, col)] = 1.0;
    }
    x
}

/// Regressor matrix `[βₜ₋₁, Y lags, 1]` and targets `βₜ` for the estimation sample.
pub fn transition_regressors(spec: &ModelSpec, data: &Dataset, states: &StatePath) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = spec.n_vars;
    let k = spec.state_dim();
    let t0 = spec.presample();
    let periods = data.n_obs() - t0;
    let r = spec.transition_regressors();
    let mut x = DMatrix::zeros(periods, r);
    let mut y = DMatrix::zeros(periods, k);
    for i in 0..periods {
        let t = t0 + i;
        let s = i + spec.l_inmean_lags;
        let prev = states.beta(s - 1, k);
        let cur = states.beta(s, k);
        for v in 0..k {
            x[(i, v)] = prev[v];
            y[(i, v)] = cur[v];
        }
        let mut col = k;
        for j in 1..=spec.effective_state_lags() {
            for v in 0..n {
                x[(i, col)] = data.y[(t - j, v)];
                col += 1;
            }
        }
        x[(i, col)] = 1.0;
    }
    (x, y)
}

/// Output of the pre-model used to centre the main chain.
#[derive(Clone, Debug)]
pub struct PreModelFit {
    /// Posterior-mean states, aligned with the main model's estimation sample.
    pub mean_path: StatePath,
    /// Last drawn path (initial reference path for the main chain).
    pub last_path: StatePath,
    /// Posterior mean of `Q` (K = 2N).
    pub q_mean: DMatrix<f64>,
}

/// Priors for the no-feedback pre-model, whose own states start at
/// `h = log var(OLS residual)`, `d = 0`.
fn pre_model_priors(
    pre_spec: &ModelSpec,
    data: &Dataset,
    settings: &PriorSettings,
) -> Result<(Priors, StatePath, DVector<f64>)> {
    let n = pre_spec.n_vars;
    let k = pre_spec.state_dim();
    let observation = observation_prior(pre_spec, data, settings)?;
    // OLS of the plain VAR to get a residual scale and the A prior.
    let zero_path = StatePath::zeros(pre_spec.l_inmean_lags, data.periods(pre_spec), n);
    let x = observation_regressors(pre_spec, data, &zero_path);
    let y = data.y.rows(pre_spec.presample(), data.periods(pre_spec)).into_owned();
    let (_, resid) = ols(&x, &y)?;
    let log_var = DVector::from_fn(n, |i, _| {
        let col: Vec<f64> = resid.column(i).iter().cloned().collect();
        variance(&col).max(1e-12).ln()
    });
    let a = a_prior_from_residuals(&resid)?;

    // Persistent, tightly centred transition law whose stationary level for h is log var.
    let r = pre_spec.transition_regressors();
    let mut mean = DVector::zeros(r * k);
    let mut var = DVector::from_element(r * k, 1e-4);
    for eq in 0..k {
        mean[eq * r + eq] = 0.9;
        let icpt = eq * r + r - 1;
        mean[icpt] = if eq < n { 0.1 * log_var[eq] } else { 0.0 };
        var[icpt] = 1e-2;
    }
    let mut transition = GaussianPrior {
        mean,
        cov: DMatrix::from_diagonal(&var),
    };
    apply_mask(&mut transition, &cross_block_mask(pre_spec));

    let mut init_mean = DVector::zeros(k);
    init_mean.rows_mut(0, n).copy_from(&log_var);
    let mut path = StatePath::zeros(pre_spec.l_inmean_lags, data.periods(pre_spec), n);
    for s in 0..path.rows() {
        path.set_beta(s, &init_mean);
    }
    let priors = Priors {
        observation,
        transition,
        a,
        q: IwPrior {
            scale: DMatrix::identity(k, k) * 0.05,
            dof: settings.iw_dof.unwrap_or(k as f64 + 1.0),
        },
        initial: InitialStatePrior {
            mean: init_mean,
            cov: DMatrix::identity(k, k),
        },
    };
    Ok((priors, path, log_var))
}

/// Runs the no-feedback pre-model on the rows of `data` that line up with
/// `spec`'s estimation sample.
pub fn run_pre_model(
    data: &Dataset,
    spec: &ModelSpec,
    settings: &PriorSettings,
    rng: &mut RngHandle,
) -> Result<PreModelFit> {
    data.check_estimable(spec)?;
    let mut pre_spec = spec.with_variant(Variant::RestrictedNoFeedback);
    pre_spec.n_draws = settings.pre_model_draws;
    pre_spec.n_burn = settings.pre_model_draws / 2;
    pre_spec.thin = 1;
    // Drop leading rows so the pre-model's estimation sample equals the main one.
    let offset = spec.presample() - pre_spec.presample();
    let aligned = Dataset {
        y: data.y.rows(offset, data.n_obs() - offset).into_owned(),
        labels: data.labels.clone(),
        dates: data.dates[offset..].to_vec(),
    };
    let (priors, init_path, _) = pre_model_priors(&pre_spec, &aligned, settings)?;
    let mut params = ParameterDraw::zeros(&pre_spec);
    params.set_obs_coefficients(&pre_spec, &{
        let r = pre_spec.obs_regressors();
        DMatrix::from_column_slice(r, pre_spec.n_vars, priors.observation.mean.as_slice())
    });
    params.a = a_prior_mean_matrix(&priors.a, pre_spec.n_vars);
    params.set_transition_coefficients(&pre_spec, &{
        let r = pre_spec.transition_regressors();
        DMatrix::from_column_slice(r, pre_spec.state_dim(), priors.transition.mean.as_slice())
    });
    params.project_block_diagonal(&pre_spec);
    params.state_cov = priors.q.scale.clone();
    let options = SamplerOptions {
        storage: PathStorage::Tail,
    };
    let chain = sampler::run_gibbs(&pre_spec, &aligned, &priors, params, init_path, &options, rng)?;
    let q_mean = chain
        .posterior_mean_q()
        .unwrap_or_else(|| chain.last_params.state_cov.clone());
    Ok(PreModelFit {
        mean_path: chain.state_mean.clone(),
        last_path: chain.last_path.clone(),
        q_mean,
    })
}

fn restrict_path(path: &StatePath, spec: &ModelSpec) -> StatePath {
    let mut p = path.clone();
    if !spec.variant.has_skew() {
        p.d.fill(0.0);
        p.theta_parent.fill(0.0);
        p.tau.fill(0.0);
    }
    p
}

/// Initial-state prior and starting reference path from the pre-model.
pub fn initialize_states(
    data: &Dataset,
    spec: &ModelSpec,
    settings: &PriorSettings,
    rng: &mut RngHandle,
) -> Result<(InitialStatePrior, StatePath)> {
    let fit = run_pre_model(data, spec, settings, rng)?;
    Ok((initial_state_prior(&fit, spec), restrict_path(&fit.last_path, spec)))
}

fn initial_state_prior(fit: &PreModelFit, spec: &ModelSpec) -> InitialStatePrior {
    let k = spec.state_dim();
    InitialStatePrior {
        mean: fit.mean_path.beta(fit.mean_path.presample, k),
        cov: DMatrix::identity(k, k),
    }
}

/// Starting values for the main chain.
#[derive(Clone, Debug)]
pub struct Initialization {
    pub priors: Priors,
    pub params: ParameterDraw,
    pub path: StatePath,
}

/// Builds all priors for `spec` (running the pre-model) and a starting point for the chain.
pub fn build_priors(
    data: &Dataset,
    spec: &ModelSpec,
    settings: &PriorSettings,
    rng: &mut RngHandle,
) -> Result<Initialization> {
    settings.validate()?;
    spec.validate()?;
    data.check_estimable(spec)?;
    let fit = run_pre_model(data, spec, settings, rng)?;
    let n = spec.n_vars;
    let k = spec.state_dim();
    let mean_path = restrict_path(&fit.mean_path, spec);

    let observation = observation_prior(spec, data, settings)?;

    // A prior from OLS residuals of the full observation equation on the initial states.
    let x = observation_regressors(spec, data, &mean_path);
    let y = data.y.rows(spec.presample(), data.periods(spec)).into_owned();
    let (obs_ols, resid) = ols(&x, &y)?;
    let a = a_prior_from_residuals(&resid)?;

    // Transition prior from AR(1) fits on the initial state estimates.
    let mut gamma = DVector::zeros(k);
    let mut s = DVector::zeros(k);
    let mut var = DVector::zeros(k);
    for j in 0..k {
        let col: Vec<f64> = (mean_path.presample..mean_path.rows())
            .map(|r| mean_path.beta(r, k)[j])
            .collect();
        let (g, sd) = ar1_fit(&col)?;
        gamma[j] = g;
        s[j] = sd.max(1e-6);
        var[j] = variance(&col).max(1e-12);
    }
    let tconfig = DummyPriorConfig {
        tau_tight: settings.tau,
        c_vol: settings.c_vol,
        c_flat: settings.c_flat,
        gamma,
        s,
    };
    let transition = transition_prior(spec, &tconfig, &DMatrix::from_diagonal(&var), &cross_block_mask(spec))?;

    let q_diag = DVector::from_fn(k, |i, _| fit.q_mean[(i, i)]);
    let q = IwPrior {
        scale: DMatrix::from_diagonal(&q_diag),
        dof: settings.iw_dof.unwrap_or(k as f64 + 1.0),
    };
    let initial = initial_state_prior(&fit, spec);

    // Start the chain at OLS / prior-mean values.
    let mut params = ParameterDraw::zeros(spec);
    params.set_obs_coefficients(spec, &obs_ols);
    params.a = a_prior_mean_matrix(&a, n);
    let r = spec.transition_regressors();
    params.set_transition_coefficients(spec, &DMatrix::from_column_slice(r, k, transition.mean.as_slice()));
    params.project_block_diagonal(spec);
    params.state_cov = q.scale.clone();

    Ok(Initialization {
        priors: Priors {
            observation,
            transition,
            a,
            q,
            initial,
        },
        params,
        path: restrict_path(&fit.last_path, spec),
    })
}

/// Draws `L` pre-sample states iid from the initial prior.
pub fn draw_presample(prior: &InitialStatePrior, count: usize, rng: &mut RngHandle) -> Result<Vec<DVector<f64>>> {
    (0..count).map(|_| rv::draw_mvn(&prior.mean, &prior.cov, rng)).collect()
}
