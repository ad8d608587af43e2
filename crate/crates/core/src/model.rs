//! Model definition: a VAR whose structural innovations are skew-normal with
//! stochastic log-variances `h̃ₜ` and skewness loadings `d̃ₜ`, both of which
//! follow a VAR-type transition law and feed back into the conditional mean.
//!
//! ```text
//! βₜ = α + θ βₜ₋₁ + Σⱼ dⱼ Yₜ₋ⱼ + ηₜ,             ηₜ ~ N(0, Q),  βₜ = (h̃ₜ, d̃ₜ)
//! Yₜ = c + Σⱼ Bⱼ Yₜ₋ⱼ + Σₗ bₗ h̃ₜ₋ₗ + Σₗ aₗ d̃ₜ₋ₗ + A⁻¹ Eₜ
//! Eₜ = d̃ₜ ⊙ τₜ + eₜ,  τₜ = |Θₜ|, Θₜ ~ N(0, I),  eₜ ~ N(0, diag(exp h̃ₜ))
//! ```
//!
//! Time indexing: dataset rows `0..presample` only supply lags. The estimation
//! sample is rows `presample..T`. A [`StatePath`] stores `L` pre-sample state
//! rows followed by one row per estimation period, so dataset row `r` maps to
//! path row `r - presample + L`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Chol};
use crate::period::Quarter;
use crate::rv::{self, clamp_log_variance, LN_SQRT_2PI, LOG_VARIANCE_BOUND};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Volatility and skewness states, both feeding back into the mean.
    Full,
    /// Volatility and skewness states without any feedback (`dⱼ = bₗ = aₗ = 0`).
    #[serde(alias = "restricted")]
    RestrictedNoFeedback,
    /// Conditionally Gaussian: volatility states only, with feedback.
    SvOnly,
}

impl Variant {
    pub fn has_skew(self) -> bool {
        !matches!(self, Variant::SvOnly)
    }

    pub fn has_feedback(self) -> bool {
        !matches!(self, Variant::RestrictedNoFeedback)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::RestrictedNoFeedback => "restricted",
            Variant::SvOnly => "sv_only",
        }
    }

    pub fn from_tag(s: &str) -> Option<Variant> {
        match s {
            "full" => Some(Variant::Full),
            "restricted" | "restricted_no_feedback" => Some(Variant::RestrictedNoFeedback),
            "sv_only" => Some(Variant::SvOnly),
            _ => None,
        }
    }
}

/// Lag orders, dimensions, variant and sampler settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_vars: usize,
    pub p_obs_lags: usize,
    pub q_state_lags: usize,
    pub l_inmean_lags: usize,
    pub variant: Variant,
    pub n_particles: usize,
    pub ancestor_factors: usize,
    pub n_draws: usize,
    pub n_burn: usize,
    pub thin: usize,
}

impl ModelSpec {
    pub fn new(n_vars: usize, variant: Variant) -> Self {
        Self {
            n_vars,
            p_obs_lags: 2,
            q_state_lags: 2,
            l_inmean_lags: 1,
            variant,
            n_particles: 20,
            ancestor_factors: 5,
            n_draws: 20_000,
            n_burn: 10_000,
            thin: 1,
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_vars < 1 {
            problems.push("n_vars must be >= 1".to_string());
        }
        if self.p_obs_lags < 1 {
            problems.push("p_obs_lags must be >= 1".to_string());
        }
        if self.l_inmean_lags < 1 {
            problems.push("l_inmean_lags must be >= 1".to_string());
        }
        if self.n_particles < 1 {
            problems.push("n_particles must be >= 1".to_string());
        }
        if self.n_burn > self.n_draws {
            problems.push("n_burn must not exceed n_draws".to_string());
        }
        if self.thin < 1 {
            problems.push("thin must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// State dimension `K`.
    pub fn state_dim(&self) -> usize {
        if self.variant.has_skew() {
            2 * self.n_vars
        } else {
            self.n_vars
        }
    }

    /// Number of leading dataset rows used only as lags.
    pub fn presample(&self) -> usize {
        self.p_obs_lags.max(self.effective_state_lags())
    }

    /// `Q` lags of `Y` actually present in the transition equation.
    pub fn effective_state_lags(&self) -> usize {
        if self.variant.has_feedback() {
            self.q_state_lags
        } else {
            0
        }
    }

    pub fn inmean_regressors(&self) -> usize {
        if self.variant.has_feedback() {
            self.state_dim() * self.l_inmean_lags
        } else {
            0
        }
    }

    /// Regressors per observation equation: `[Y lags, lagged states, 1]`.
    pub fn obs_regressors(&self) -> usize {
        self.n_vars * self.p_obs_lags + self.inmean_regressors() + 1
    }

    /// Regressors per transition equation: `[βₜ₋₁, Y lags, 1]`.
    pub fn transition_regressors(&self) -> usize {
        self.state_dim() + self.n_vars * self.effective_state_lags() + 1
    }

    pub fn n_stored(&self) -> usize {
        (self.n_draws - self.n_burn) / self.thin
    }
}

/// One joint draw of every static parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterDraw {
    /// `c`
    pub intercept: DVector<f64>,
    /// `Bⱼ`, j = 1..P
    pub var_lags: Vec<DMatrix<f64>>,
    /// `bₗ` loadings on lagged log-variances, l = 1..L
    pub vol_in_mean: Vec<DMatrix<f64>>,
    /// `aₗ` loadings on lagged skewness, l = 1..L (zero when there is no skewness)
    pub skew_in_mean: Vec<DMatrix<f64>>,
    /// Unit lower-triangular `A`.
    pub a: DMatrix<f64>,
    /// `α`
    pub state_intercept: DVector<f64>,
    /// Block-diagonal `θ`.
    pub state_ar: DMatrix<f64>,
    /// `dⱼ`, j = 1..Q, each K×N
    pub state_y_lags: Vec<DMatrix<f64>>,
    /// `Q`
    pub state_cov: DMatrix<f64>,
}

impl ParameterDraw {
    /// All coefficients zero, `A = I`, `Q = I`.
    pub fn zeros(spec: &ModelSpec) -> Self {
        let n = spec.n_vars;
        let k = spec.state_dim();
        Self {
            intercept: DVector::zeros(n),
            var_lags: vec![DMatrix::zeros(n, n); spec.p_obs_lags],
            vol_in_mean: vec![DMatrix::zeros(n, n); spec.l_inmean_lags],
            skew_in_mean: vec![DMatrix::zeros(n, n); spec.l_inmean_lags],
            a: DMatrix::identity(n, n),
            state_intercept: DVector::zeros(k),
            state_ar: DMatrix::zeros(k, k),
            state_y_lags: vec![DMatrix::zeros(k, n); spec.q_state_lags],
            state_cov: DMatrix::identity(k, k),
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let n = spec.n_vars;
        let k = spec.state_dim();
        let check = |what: &str, m: &DMatrix<f64>, r: usize, c: usize| -> Result<()> {
            if m.nrows() != r || m.ncols() != c {
                return Err(Error::dim(
                    what,
                    format!("{r}x{c}"),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ));
            }
            Ok(())
        };
        if self.intercept.len() != n {
            return Err(Error::dim("c", n, self.intercept.len()));
        }
        if self.var_lags.len() != spec.p_obs_lags {
            return Err(Error::dim("B_j count", spec.p_obs_lags, self.var_lags.len()));
        }
        for b in &self.var_lags {
            check("B_j", b, n, n)?;
        }
        if self.vol_in_mean.len() != spec.l_inmean_lags || self.skew_in_mean.len() != spec.l_inmean_lags {
            return Err(Error::dim("b_l/a_l count", spec.l_inmean_lags, self.vol_in_mean.len()));
        }
        for b in self.vol_in_mean.iter().chain(&self.skew_in_mean) {
            check("b_l/a_l", b, n, n)?;
        }
        check("A", &self.a, n, n)?;
        for i in 0..n {
            if self.a[(i, i)] != 1.0 || (i + 1..n).any(|j| self.a[(i, j)] != 0.0) {
                return Err(Error::invalid("A must be unit lower-triangular"));
            }
        }
        if self.state_intercept.len() != k {
            return Err(Error::dim("alpha", k, self.state_intercept.len()));
        }
        check("theta", &self.state_ar, k, k)?;
        if self.state_y_lags.len() != spec.q_state_lags {
            return Err(Error::dim("d_j count", spec.q_state_lags, self.state_y_lags.len()));
        }
        for d in &self.state_y_lags {
            check("d_j", d, k, n)?;
        }
        check("Q", &self.state_cov, k, k)?;
        if spec.variant.has_skew() {
            for i in 0..k {
                for j in 0..k {
                    if (i < n) != (j < n) && self.state_ar[(i, j)] != 0.0 {
                        // Cross-block entries are only shrunk by the prior; the
                        // stored draw is projected exactly (see `project_block_diagonal`).
                        return Err(Error::invalid("theta must be block-diagonal"));
                    }
                }
            }
        }
        linalg::cholesky(&self.state_cov, "Q")?;
        Ok(())
    }

    /// Zeroes the cross-block entries of `θ`.
    pub fn project_block_diagonal(&mut self, spec: &ModelSpec) {
        if !spec.variant.has_skew() {
            return;
        }
        let n = spec.n_vars;
        let k = spec.state_dim();
        for i in 0..k {
            for j in 0..k {
                if (i < n) != (j < n) {
                    self.state_ar[(i, j)] = 0.0;
                }
            }
        }
    }

    /// Observation-equation coefficients as a `regressors × N` matrix (one
    /// column per equation), rows ordered `[Y₋₁..Y₋P, (h̃₋ₗ, d̃₋ₗ)ₗ, 1]`.
    pub fn obs_coefficients(&self, spec: &ModelSpec) -> DMatrix<f64> {
        let n = spec.n_vars;
        let mut m = DMatrix::zeros(spec.obs_regressors(), n);
        let mut row = 0;
        for b in &self.var_lags {
            m.view_mut((row, 0), (n, n)).copy_from(&b.transpose());
            row += n;
        }
        if spec.variant.has_feedback() {
            for l in 0..spec.l_inmean_lags {
                m.view_mut((row, 0), (n, n)).copy_from(&self.vol_in_mean[l].transpose());
                row += n;
                if spec.variant.has_skew() {
                    m.view_mut((row, 0), (n, n))
                        .copy_from(&self.skew_in_mean[l].transpose());
                    row += n;
                }
            }
        }
        m.row_mut(row).copy_from(&self.intercept.transpose());
        m
    }

    pub fn set_obs_coefficients(&mut self, spec: &ModelSpec, m: &DMatrix<f64>) {
        let n = spec.n_vars;
        let mut row = 0;
        for b in self.var_lags.iter_mut() {
            *b = m.view((row, 0), (n, n)).transpose();
            row += n;
        }
        if spec.variant.has_feedback() {
            for l in 0..spec.l_inmean_lags {
                self.vol_in_mean[l] = m.view((row, 0), (n, n)).transpose();
                row += n;
                if spec.variant.has_skew() {
                    self.skew_in_mean[l] = m.view((row, 0), (n, n)).transpose();
                    row += n;
                }
            }
        }
        self.intercept = m.row(row).transpose();
    }

    /// Transition coefficients as a `regressors × K` matrix, rows `[βₜ₋₁, Y₋₁..Y₋Q, 1]`.
    pub fn transition_coefficients(&self, spec: &ModelSpec) -> DMatrix<f64> {
        let n = spec.n_vars;
        let k = spec.state_dim();
        let mut m = DMatrix::zeros(spec.transition_regressors(), k);
        m.view_mut((0, 0), (k, k)).copy_from(&self.state_ar.transpose());
        let mut row = k;
        for j in 0..spec.effective_state_lags() {
            m.view_mut((row, 0), (n, k))
                .copy_from(&self.state_y_lags[j].transpose());
            row += n;
        }
        m.row_mut(row).copy_from(&self.state_intercept.transpose());
        m
    }

    pub fn set_transition_coefficients(&mut self, spec: &ModelSpec, m: &DMatrix<f64>) {
        let n = spec.n_vars;
        let k = spec.state_dim();
        self.state_ar = m.view((0, 0), (k, k)).transpose();
        let mut row = k;
        for j in 0..spec.effective_state_lags() {
            self.state_y_lags[j] = m.view((row, 0), (n, k)).transpose();
            row += n;
        }
        self.state_intercept = m.row(row).transpose();
    }

    pub fn a_inverse(&self) -> DMatrix<f64> {
        linalg::unit_lower_inverse(&self.a)
    }

    /// Flat layout used by the binary chain file.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(self.intercept.iter());
        for m in self
            .var_lags
            .iter()
            .chain(&self.vol_in_mean)
            .chain(&self.skew_in_mean)
            .chain(std::iter::once(&self.a))
        {
            v.extend(m.iter());
        }
        v.extend(self.state_intercept.iter());
        v.extend(self.state_ar.iter());
        for m in &self.state_y_lags {
            v.extend(m.iter());
        }
        v.extend(self.state_cov.iter());
        v
    }

    pub fn flat_len(spec: &ModelSpec) -> usize {
        Self::zeros(spec).to_flat().len()
    }

    pub fn from_flat(spec: &ModelSpec, flat: &[f64]) -> Result<Self> {
        let expected = Self::flat_len(spec);
        if flat.len() != expected {
            return Err(Error::dim("flat parameter vector", expected, flat.len()));
        }
        let n = spec.n_vars;
        let k = spec.state_dim();
        let mut it = flat.iter().cloned();
        let mut take_mat = |r: usize, c: usize| DMatrix::from_iterator(r, c, it.by_ref().take(r * c));
        let intercept = take_mat(n, 1).column(0).into_owned();
        let var_lags = (0..spec.p_obs_lags).map(|_| take_mat(n, n)).collect();
        let vol_in_mean = (0..spec.l_inmean_lags).map(|_| take_mat(n, n)).collect();
        let skew_in_mean = (0..spec.l_inmean_lags).map(|_| take_mat(n, n)).collect();
        let a = take_mat(n, n);
        let state_intercept = take_mat(k, 1).column(0).into_owned();
        let state_ar = take_mat(k, k);
        let state_y_lags = (0..spec.q_state_lags).map(|_| take_mat(k, n)).collect();
        let state_cov = take_mat(k, k);
        Ok(Self {
            intercept,
            var_lags,
            vol_in_mean,
            skew_in_mean,
            a,
            state_intercept,
            state_ar,
            state_y_lags,
            state_cov,
        })
    }
}

/// Latent paths. Row `s` of every matrix is one period; the first
/// `presample` rows precede the estimation sample (their `Θ`, `τ` rows are zero).
#[derive(Clone, Debug, PartialEq)]
pub struct StatePath {
    pub presample: usize,
    /// Log-variances `h̃`.
    pub h: DMatrix<f64>,
    /// Skewness loadings `d̃` (identically zero without skewness).
    pub d: DMatrix<f64>,
    /// Standard-normal parents `Θ`.
    pub theta_parent: DMatrix<f64>,
    /// `τ = |Θ|`.
    pub tau: DMatrix<f64>,
}

impl StatePath {
    pub fn zeros(presample: usize, periods: usize, n: usize) -> Self {
        let rows = presample + periods;
        Self {
            presample,
            h: DMatrix::zeros(rows, n),
            d: DMatrix::zeros(rows, n),
            theta_parent: DMatrix::zeros(rows, n),
            tau: DMatrix::zeros(rows, n),
        }
    }

    pub fn rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn periods(&self) -> usize {
        self.rows() - self.presample
    }

    pub fn n_vars(&self) -> usize {
        self.h.ncols()
    }

    /// `β` at row `s` (`h̃` stacked over `d̃` when `k = 2N`).
    pub fn beta(&self, s: usize, k: usize) -> DVector<f64> {
        let n = self.n_vars();
        DVector::from_fn(k, |i, _| if i < n { self.h[(s, i)] } else { self.d[(s, i - n)] })
    }

    pub fn set_beta(&mut self, s: usize, beta: &DVector<f64>) {
        let n = self.n_vars();
        for i in 0..n {
            self.h[(s, i)] = beta[i];
            self.d[(s, i)] = if beta.len() > n { beta[n + i] } else { 0.0 };
        }
    }

    pub fn set_theta_parent(&mut self, s: usize, theta: &DVector<f64>) {
        for i in 0..self.n_vars() {
            self.theta_parent[(s, i)] = theta[i];
            self.tau[(s, i)] = theta[i].abs();
        }
    }

    pub fn tau_row(&self, s: usize) -> DVector<f64> {
        self.tau.row(s).transpose()
    }

    pub fn theta_row(&self, s: usize) -> DVector<f64> {
        self.theta_parent.row(s).transpose()
    }

    /// The last `keep` rows, all treated as pre-sample for what follows.
    pub fn tail(&self, keep: usize) -> StatePath {
        let keep = keep.min(self.rows());
        let start = self.rows() - keep;
        let n = self.n_vars();
        StatePath {
            presample: keep,
            h: self.h.view((start, 0), (keep, n)).into_owned(),
            d: self.d.view((start, 0), (keep, n)).into_owned(),
            theta_parent: DMatrix::zeros(keep, n),
            tau: DMatrix::zeros(keep, n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau != self.theta_parent.abs() {
            return Err(Error::invalid("tau must equal |theta_parent|"));
        }
        if self.h.iter().chain(self.d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state path".into()));
        }
        Ok(())
    }
}

/// Observations with labels and quarterly dates.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// T×N
    pub y: DMatrix<f64>,
    pub labels: Vec<String>,
    pub dates: Vec<Quarter>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>, labels: Vec<String>, dates: Vec<Quarter>) -> Result<Self> {
        if labels.len() != y.ncols() {
            return Err(Error::dim("dataset labels", y.ncols(), labels.len()));
        }
        if dates.len() != y.nrows() {
            return Err(Error::dim("dataset dates", y.nrows(), dates.len()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset observations".into()));
        }
        if dates.windows(2).any(|w| w[1] != w[0].next()) {
            return Err(Error::invalid("dataset dates must be consecutive quarters"));
        }
        Ok(Self { y, labels, dates })
    }

    /// Dataset with synthetic dates starting at `start`.
    pub fn from_matrix(y: DMatrix<f64>, start: Quarter) -> Result<Self> {
        let labels = (0..y.ncols()).map(|i| format!("y{}", i + 1)).collect();
        let dates = (0..y.nrows()).map(|i| start.offset(i as i64)).collect();
        Self::new(y, labels, dates)
    }

    pub fn n_obs(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.y.ncols()
    }

    pub fn row(&self, t: usize) -> DVector<f64> {
        self.y.row(t).transpose()
    }

    pub fn row_of(&self, date: Quarter) -> Option<usize> {
        let first = *self.dates.first()?;
        let idx = date.ordinal() - first.ordinal();
        (idx >= 0 && (idx as usize) < self.n_obs()).then_some(idx as usize)
    }

    /// Rows `0..=last`.
    pub fn truncate(&self, last: usize) -> Dataset {
        let rows = (last + 1).min(self.n_obs());
        Dataset {
            y: self.y.rows(0, rows).into_owned(),
            labels: self.labels.clone(),
            dates: self.dates[..rows].to_vec(),
        }
    }

    pub fn check_spec(&self, spec: &ModelSpec) -> Result<()> {
        if self.n_vars() != spec.n_vars {
            return Err(Error::dim("dataset variables", spec.n_vars, self.n_vars()));
        }
        Ok(())
    }

    /// Dimension check plus the minimum length needed for estimation.
    pub fn check_estimable(&self, spec: &ModelSpec) -> Result<()> {
        self.check_spec(spec)?;
        let need = spec.p_obs_lags + spec.q_state_lags + spec.l_inmean_lags;
        if self.n_obs() <= need {
            return Err(Error::invalid(format!(
                "dataset has {} rows; need more than P + Q + L = {need}",
                self.n_obs()
            )));
        }
        Ok(())
    }

    /// Number of estimation periods.
    pub fn periods(&self, spec: &ModelSpec) -> usize {
        self.n_obs() - spec.presample()
    }
}

/// Mean of `Y` given its lags (most recent first) and the lagged states
/// (`lagged[l-1] = βₜ₋ₗ`).
pub fn observation_mean(
    spec: &ModelSpec,
    params: &ParameterDraw,
    y_lags: &[&DVector<f64>],
    lagged: &[&DVector<f64>],
) -> DVector<f64> {
    let n = spec.n_vars;
    let mut mean = params.intercept.clone();
    for (b, y) in params.var_lags.iter().zip(y_lags) {
        mean.gemv(1.0, b, y, 1.0);
    }
    if spec.variant.has_feedback() {
        for l in 0..spec.l_inmean_lags {
            let beta = lagged[l];
            mean.gemv(1.0, &params.vol_in_mean[l], &beta.rows(0, n), 1.0);
            if spec.variant.has_skew() {
                mean.gemv(1.0, &params.skew_in_mean[l], &beta.rows(n, n), 1.0);
            }
        }
    }
    mean
}

/// `α + Σⱼ dⱼ Yₜ₋ⱼ` (no `θβ` term).
pub fn transition_offset(spec: &ModelSpec, params: &ParameterDraw, y_lags: &[&DVector<f64>]) -> DVector<f64> {
    let mut m = params.state_intercept.clone();
    for j in 0..spec.effective_state_lags() {
        m.gemv(1.0, &params.state_y_lags[j], y_lags[j], 1.0);
    }
    m
}

fn check_row(spec: &ModelSpec, states: &StatePath, data: &Dataset, t: usize) -> Result<usize> {
    data.check_spec(spec)?;
    let t0 = spec.presample();
    if t < t0 || t >= data.n_obs() {
        return Err(Error::invalid(format!(
            "row {t} outside the estimation sample {t0}..{}",
            data.n_obs()
        )));
    }
    let s = t - t0 + spec.l_inmean_lags;
    if states.presample != spec.l_inmean_lags || states.rows() != data.periods(spec) + spec.l_inmean_lags {
        return Err(Error::dim(
            "state path rows",
            data.periods(spec) + spec.l_inmean_lags,
            states.rows(),
        ));
    }
    if states.n_vars() != spec.n_vars {
        return Err(Error::dim("state path columns", spec.n_vars, states.n_vars()));
    }
    Ok(s)
}

fn lags_at(spec: &ModelSpec, data: &Dataset, t: usize, count: usize) -> Vec<DVector<f64>> {
    let _ = spec;
    (1..=count).map(|j| data.row(t - j)).collect()
}

/// Returns `(Eₜ, Vₜ)` with `Vₜ = Yₜ − mean` and `Eₜ = A Vₜ`.
pub fn observation_residual(
    spec: &ModelSpec,
    params: &ParameterDraw,
    states: &StatePath,
    data: &Dataset,
    t: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    params.validate(spec)?;
    let s = check_row(spec, states, data, t)?;
    let k = spec.state_dim();
    let y_lags = lags_at(spec, data, t, spec.p_obs_lags);
    let y_refs: Vec<&DVector<f64>> = y_lags.iter().collect();
    let lagged: Vec<DVector<f64>> = (1..=spec.l_inmean_lags).map(|l| states.beta(s - l, k)).collect();
    let lag_refs: Vec<&DVector<f64>> = lagged.iter().collect();
    let v = data.row(t) - observation_mean(spec, params, &y_refs, &lag_refs);
    let e = &params.a * &v;
    Ok((e, v))
}

/// Gaussian log-likelihood of `Yₜ` given the states at `t`, including the
/// `2π` normalizing constant.
pub fn conditional_loglik(
    spec: &ModelSpec,
    params: &ParameterDraw,
    states: &StatePath,
    data: &Dataset,
    t: usize,
) -> Result<f64> {
    let (e, _) = observation_residual(spec, params, states, data, t)?;
    let s = t - spec.presample() + spec.l_inmean_lags;
    let h = states.h.row(s).transpose();
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("log-variance at row {t}")));
    }
    let skew = if spec.variant.has_skew() {
        states.d.row(s).transpose()
    } else {
        DVector::zeros(spec.n_vars)
    };
    let tau = states.tau_row(s);
    Ok(structural_loglik(&e, &h, &skew, &tau))
}

/// `log N(E − d⊙τ; 0, diag(exp h))`.
///
/// With `A` unit lower-triangular, `A⁻¹ H^{1/2}` is the Cholesky factor of
/// `Σ = A⁻¹ H A⁻¹′`, so this equals the density of `Vₜ − A⁻¹(d⊙τ)` under `Σ`.
pub fn structural_loglik(e: &DVector<f64>, h: &DVector<f64>, skew: &DVector<f64>, tau: &DVector<f64>) -> f64 {
    let mut ll = -(e.len() as f64) * LN_SQRT_2PI;
    for i in 0..e.len() {
        let hc = clamp_log_variance(h[i]);
        let r = e[i] - skew[i] * tau[i];
        ll -= 0.5 * (hc + r * r * (-hc).exp());
    }
    ll
}

/// `Σₜ = A⁻¹ diag(exp h) A⁻¹′`.
pub fn observation_covariance(a_inv: &DMatrix<f64>, h: &DVector<f64>) -> DMatrix<f64> {
    let hd = DMatrix::from_diagonal(&h.map(|v| clamp_log_variance(v).exp()));
    let s = a_inv * hd * a_inv.transpose();
    linalg::symmetrize(&s)
}

pub fn within_state_bounds(beta: &DVector<f64>, n: usize) -> bool {
    beta.iter().all(|v| v.is_finite()) && beta.rows(0, n).iter().all(|v| v.abs() <= LOG_VARIANCE_BOUND)
}

/// Observation equation specialised to one parameter draw and dataset, with
/// the part of the mean that does not depend on states cached per period.
pub struct ObservationEquation<'a> {
    pub spec: &'a ModelSpec,
    pub params: &'a ParameterDraw,
    pub a_inv: DMatrix<f64>,
    /// `Yₜ − c − Σ Bⱼ Yₜ₋ⱼ` per estimation period.
    partial_resid: Vec<DVector<f64>>,
    fixed_cov: Option<Chol>,
}

impl<'a> ObservationEquation<'a> {
    pub fn new(spec: &'a ModelSpec, params: &'a ParameterDraw, data: &Dataset) -> Self {
        let t0 = spec.presample();
        let partial_resid = (t0..data.n_obs())
            .map(|t| {
                let mut r = data.row(t) - &params.intercept;
                for (j, b) in params.var_lags.iter().enumerate() {
                    r.gemv(-1.0, b, &data.row(t - j - 1), 1.0);
                }
                r
            })
            .collect();
        Self {
            spec,
            params,
            a_inv: params.a_inverse(),
            partial_resid,
            fixed_cov: None,
        }
    }

    /// Replace `Σₜ` by a fixed covariance, making the model linear-Gaussian
    /// in the states when there is no skewness.
    pub fn with_fixed_covariance(mut self, cov: &DMatrix<f64>) -> Result<Self> {
        self.fixed_cov = Some(linalg::cholesky(cov, "fixed observation covariance")?);
        Ok(self)
    }

    pub fn periods(&self) -> usize {
        self.partial_resid.len()
    }

    /// `Vₜ` for period `i` given the lagged states (`lagged[l-1] = βₜ₋ₗ`).
    pub fn residual(&self, i: usize, lagged: &[&DVector<f64>]) -> DVector<f64> {
        let spec = self.spec;
        let n = spec.n_vars;
        let mut v = self.partial_resid[i].clone();
        if spec.variant.has_feedback() {
            for l in 0..spec.l_inmean_lags {
                v.gemv(-1.0, &self.params.vol_in_mean[l], &lagged[l].rows(0, n), 1.0);
                if spec.variant.has_skew() {
                    v.gemv(-1.0, &self.params.skew_in_mean[l], &lagged[l].rows(n, n), 1.0);
                }
            }
        }
        v
    }

    /// Log-likelihood of period `i` given `βₜ`, the lagged states and `Θₜ`.
    pub fn loglik(&self, i: usize, beta: &DVector<f64>, lagged: &[&DVector<f64>], theta_parent: &DVector<f64>) -> f64 {
        let n = self.spec.n_vars;
        let v = self.residual(i, lagged);
        let h = beta.rows(0, n).into_owned();
        let skew: DVector<f64> = if self.spec.variant.has_skew() {
            beta.rows(n, n).into_owned()
        } else {
            DVector::zeros(n)
        };
        let tau = theta_parent.abs();
        match &self.fixed_cov {
            None => structural_loglik(&(&self.params.a * v), &h, &skew, &tau),
            Some(chol) => {
                let shift = &self.a_inv * skew.component_mul(&tau);
                rv::mvn_logpdf(&(v - shift), &DVector::zeros(n), chol)
            }
        }
    }
}

/// Transition equation for one parameter draw and dataset.
pub struct TransitionEquation<'a> {
    pub spec: &'a ModelSpec,
    pub params: &'a ParameterDraw,
    offsets: Vec<DVector<f64>>,
    chol: Chol,
    chol_l: DMatrix<f64>,
}

impl<'a> TransitionEquation<'a> {
    pub fn new(spec: &'a ModelSpec, params: &'a ParameterDraw, data: &Dataset) -> Result<Self> {
        let t0 = spec.presample();
        let offsets = (t0..data.n_obs())
            .map(|t| {
                let lags: Vec<DVector<f64>> = (1..=spec.effective_state_lags()).map(|j| data.row(t - j)).collect();
                let refs: Vec<&DVector<f64>> = lags.iter().collect();
                transition_offset(spec, params, &refs)
            })
            .collect();
        let chol = linalg::cholesky(&params.state_cov, "state innovation covariance")?;
        let chol_l = chol.l();
        Ok(Self {
            spec,
            params,
            offsets,
            chol,
            chol_l,
        })
    }

    pub fn mean(&self, i: usize, prev: &DVector<f64>) -> DVector<f64> {
        let mut m = self.offsets[i].clone();
        m.gemv(1.0, &self.params.state_ar, prev, 1.0);
        m
    }

    pub fn sample<R: Rng + ?Sized>(&self, i: usize, prev: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let z = rv::std_normal_vector(self.spec.state_dim(), rng);
        self.mean(i, prev) + &self.chol_l * z
    }

    pub fn logpdf(&self, i: usize, next: &DVector<f64>, prev: &DVector<f64>) -> f64 {
        rv::mvn_logpdf(next, &self.mean(i, prev), &self.chol)
    }
}

/// Rolling history used by every forward simulation: `Y` and `β` lags, most recent first.
#[derive(Clone, Debug)]
pub struct History {
    pub y: Vec<DVector<f64>>,
    pub beta: Vec<DVector<f64>>,
}

impl History {
    /// History at the end of `data` (rows up to `last`) with states from `states`' final rows.
    pub fn at_end(spec: &ModelSpec, data: &Dataset, last: usize, states: &StatePath) -> Result<Self> {
        let ny = spec.presample().max(1);
        if last + 1 < ny {
            return Err(Error::invalid("not enough observations for the lag window"));
        }
        if states.rows() < spec.l_inmean_lags {
            return Err(Error::invalid("state path shorter than the in-mean lag window"));
        }
        let k = spec.state_dim();
        let y = (0..ny).map(|j| data.row(last - j)).collect();
        let beta = (0..spec.l_inmean_lags.max(1))
            .map(|l| states.beta(states.rows() - 1 - l, k))
            .collect();
        Ok(Self { y, beta })
    }

    fn push(&mut self, y: DVector<f64>, beta: DVector<f64>) {
        self.y.pop();
        self.y.insert(0, y);
        self.beta.pop();
        self.beta.insert(0, beta);
    }
}

/// One period of the generative model.
#[derive(Clone, Debug)]
pub struct Step {
    pub y: DVector<f64>,
    pub beta: DVector<f64>,
    pub theta_parent: DVector<f64>,
    /// `false` when a log-variance left the admissible range.
    pub in_bounds: bool,
}

/// Pre-drawn randomness for one period: `η` increment, `Θ` and the unit-scale `e` draw.
#[derive(Clone, Debug)]
pub struct StepShocks {
    pub eta_z: DVector<f64>,
    pub theta_parent: DVector<f64>,
    pub e_z: DVector<f64>,
}

impl StepShocks {
    pub fn draw<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Self {
        let n = spec.n_vars;
        let eta_z = rv::std_normal_vector(spec.state_dim(), rng);
        let theta_parent = if spec.variant.has_skew() {
            rv::std_normal_vector(n, rng)
        } else {
            DVector::zeros(n)
        };
        let e_z = rv::std_normal_vector(n, rng);
        Self {
            eta_z,
            theta_parent,
            e_z,
        }
    }
}

/// Advances the model one period from `hist` using `shocks`, adding
/// `beta_shift` to `βₜ` (used by impulse responses), and updates `hist`.
pub fn advance(
    spec: &ModelSpec,
    params: &ParameterDraw,
    q_chol: &DMatrix<f64>,
    a_inv: &DMatrix<f64>,
    hist: &mut History,
    shocks: &StepShocks,
    beta_shift: Option<&DVector<f64>>,
) -> Step {
    let n = spec.n_vars;
    let y_refs: Vec<&DVector<f64>> = hist.y.iter().collect();
    let mut beta = transition_offset(spec, params, &y_refs);
    beta.gemv(1.0, &params.state_ar, &hist.beta[0], 1.0);
    beta.gemv(1.0, q_chol, &shocks.eta_z, 1.0);
    if let Some(shift) = beta_shift {
        beta += shift;
    }
    let in_bounds = within_state_bounds(&beta, n);
    let lag_refs: Vec<&DVector<f64>> = hist.beta.iter().collect();
    let mean = observation_mean(spec, params, &y_refs, &lag_refs);
    let tau = shocks.theta_parent.abs();
    let structural = DVector::from_fn(n, |i, _| {
        let skew = if spec.variant.has_skew() {
            beta[n + i] * tau[i]
        } else {
            0.0
        };
        skew + (0.5 * clamp_log_variance(beta[i])).exp() * shocks.e_z[i]
    });
    let y = mean + a_inv * structural;
    hist.push(y.clone(), beta.clone());
    Step {
        y,
        beta,
        theta_parent: shocks.theta_parent.clone(),
        in_bounds,
    }
}

/// Generates `periods` observations after the pre-sample rows `y_presample`
/// (oldest first), starting from pre-sample states `beta_presample` (oldest first).
///
/// Returns the full observation matrix (pre-sample rows included) and the state path.
pub fn generate<R: Rng + ?Sized>(
    spec: &ModelSpec,
    params: &ParameterDraw,
    y_presample: &DMatrix<f64>,
    beta_presample: &[DVector<f64>],
    periods: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, StatePath)> {
    let n = spec.n_vars;
    let t0 = spec.presample();
    let l = spec.l_inmean_lags;
    if y_presample.nrows() != t0 || y_presample.ncols() != n {
        return Err(Error::dim(
            "pre-sample observations",
            format!("{t0}x{n}"),
            format!("{}x{}", y_presample.nrows(), y_presample.ncols()),
        ));
    }
    if beta_presample.len() != l {
        return Err(Error::dim("pre-sample states", l, beta_presample.len()));
    }
    let q_chol = linalg::cholesky(&params.state_cov, "Q")?.l();
    let a_inv = params.a_inverse();
    let ny = t0.max(1);
    let mut hist = History {
        y: (0..ny)
            .map(|j| {
                if j < t0 {
                    y_presample.row(t0 - 1 - j).transpose()
                } else {
                    DVector::zeros(n)
                }
            })
            .collect(),
        beta: (0..l).map(|j| beta_presample[l - 1 - j].clone()).collect(),
    };
    let mut y = DMatrix::zeros(t0 + periods, n);
    y.rows_mut(0, t0).copy_from(y_presample);
    let mut path = StatePath::zeros(l, periods, n);
    for (s, b) in beta_presample.iter().enumerate() {
        path.set_beta(s, b);
    }
    for i in 0..periods {
        let shocks = StepShocks::draw(spec, rng);
        let step = advance(spec, params, &q_chol, &a_inv, &mut hist, &shocks, None);
        if step.y.iter().any(|v| !v.is_finite() || v.abs() > 1e8) {
            return Err(Error::invalid(format!(
                "simulated path exploded at period {i} (|Y| > 1e8); use tamer parameters"
            )));
        }
        y.row_mut(t0 + i).copy_from(&step.y.transpose());
        path.set_beta(l + i, &step.beta);
        path.set_theta_parent(l + i, &step.theta_parent);
    }
    Ok((y, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rv::RngHandle;

    fn spec1() -> ModelSpec {
        let mut s = ModelSpec::new(1, Variant::Full);
        s.p_obs_lags = 1;
        s.q_state_lags = 1;
        s.l_inmean_lags = 1;
        s
    }

    fn random_params(spec: &ModelSpec, rng: &mut RngHandle) -> ParameterDraw {
        let mut p = ParameterDraw::zeros(spec);
        let n = spec.n_vars;
        let mut r = |s: f64| s * rv::std_normal(rng);
        p.intercept = DVector::from_fn(n, |_, _| r(0.5));
        for b in p.var_lags.iter_mut() {
            *b = DMatrix::from_fn(n, n, |_, _| r(0.2));
        }
        for b in p.vol_in_mean.iter_mut().chain(p.skew_in_mean.iter_mut()) {
            *b = DMatrix::from_fn(n, n, |_, _| r(0.3));
        }
        for i in 0..n {
            for j in 0..i {
                p.a[(i, j)] = r(0.5);
            }
        }
        p
    }

    fn random_setup(n: usize, seed: u64) -> (ModelSpec, ParameterDraw, StatePath, Dataset) {
        random_setup_for(n, seed, Variant::Full)
    }

    fn random_setup_for(n: usize, seed: u64, variant: Variant) -> (ModelSpec, ParameterDraw, StatePath, Dataset) {
        let mut rng = RngHandle::new(seed, 0);
        let mut spec = ModelSpec::new(n, variant);
        spec.p_obs_lags = 2;
        spec.l_inmean_lags = 2;
        let params = random_params(&spec, &mut rng);
        let t = 12;
        let y = DMatrix::from_fn(t, n, |_, _| rv::std_normal(&mut rng));
        let data = Dataset::from_matrix(y, Quarter::new(2000, 1).unwrap()).unwrap();
        let periods = data.periods(&spec);
        let mut path = StatePath::zeros(spec.l_inmean_lags, periods, n);
        for s in 0..path.rows() {
            let beta = DVector::from_fn(spec.state_dim(), |_, _| 0.5 * rv::std_normal(&mut rng));
            path.set_beta(s, &beta);
            if s >= path.presample {
                path.set_theta_parent(s, &rv::std_normal_vector(n, &mut rng));
            }
        }
        (spec, params, path, data)
    }

    #[test]
    fn identity_case_residuals_equal_observations() {
        let (spec, _, path, data) = random_setup(3, 1);
        let params = ParameterDraw::zeros(&spec);
        let mut zero_path = path.clone();
        zero_path.h.fill(0.0);
        zero_path.d.fill(0.0);
        let t = spec.presample() + 3;
        let (e, v) = observation_residual(&spec, &params, &zero_path, &data, t).unwrap();
        assert_eq!(v, data.row(t));
        assert_eq!(e, data.row(t));
    }

    #[test]
    fn scalar_hand_arithmetic() {
        let spec = spec1();
        let mut params = ParameterDraw::zeros(&spec);
        params.intercept[0] = 0.5;
        params.var_lags[0][(0, 0)] = 0.8;
        let y = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let data = Dataset::from_matrix(y, Quarter::new(2000, 1).unwrap()).unwrap();
        let path = StatePath::zeros(1, data.periods(&spec), 1);
        let (_, v) = observation_residual(&spec, &params, &path, &data, 1).unwrap();
        assert!((v[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn residual_matches_scalar_loop_oracle() {
        let (spec, params, path, data) = random_setup(3, 2);
        let n = 3;
        for t in spec.presample()..data.n_obs() {
            let (e, _) = observation_residual(&spec, &params, &path, &data, t).unwrap();
            let s = t - spec.presample() + spec.l_inmean_lags;
            let mut v = vec![0.0; n];
            for i in 0..n {
                let mut m = params.intercept[i];
                for j in 0..spec.p_obs_lags {
                    for k in 0..n {
                        m += params.var_lags[j][(i, k)] * data.y[(t - j - 1, k)];
                    }
                }
                for l in 0..spec.l_inmean_lags {
                    for k in 0..n {
                        m += params.vol_in_mean[l][(i, k)] * path.h[(s - l - 1, k)];
                        m += params.skew_in_mean[l][(i, k)] * path.d[(s - l - 1, k)];
                    }
                }
                v[i] = data.y[(t, i)] - m;
            }
            for i in 0..n {
                let mut ei = 0.0;
                for k in 0..n {
                    ei += params.a[(i, k)] * v[k];
                }
                assert!((e[i] - ei).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_errors_name_the_matrix() {
        let (spec, mut params, path, data) = random_setup(2, 3);
        params.var_lags[0] = DMatrix::zeros(3, 3);
        let err = observation_residual(&spec, &params, &path, &data, 3).unwrap_err();
        assert!(err.to_string().contains("B_j"), "{err}");
    }

    #[test]
    fn loglik_reference_values() {
        let spec = spec1();
        let params = ParameterDraw::zeros(&spec);
        let y = DMatrix::from_column_slice(2, 1, &[0.0, 0.0]);
        let data = Dataset::from_matrix(y, Quarter::new(2000, 1).unwrap()).unwrap();
        let path = StatePath::zeros(1, data.periods(&spec), 1);
        let ll = conditional_loglik(&spec, &params, &path, &data, 1).unwrap();
        assert!((ll + 0.918_938_533_204_672_7).abs() < 1e-12);

        let mut spec2 = ModelSpec::new(2, Variant::Full);
        spec2.p_obs_lags = 1;
        spec2.q_state_lags = 1;
        let params2 = ParameterDraw::zeros(&spec2);
        let y2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let data2 = Dataset::from_matrix(y2, Quarter::new(2000, 1).unwrap()).unwrap();
        let path2 = StatePath::zeros(1, data2.periods(&spec2), 2);
        let ll2 = conditional_loglik(&spec2, &params2, &path2, &data2, 1).unwrap();
        assert!((ll2 + (2.0 * std::f64::consts::PI).ln() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn loglik_matches_naive_inverse_oracle() {
        let (spec, params, path, data) = random_setup(3, 4);
        let a_inv = params.a.clone().try_inverse().unwrap();
        for t in spec.presample()..data.n_obs() {
            let s = t - spec.presample() + spec.l_inmean_lags;
            let (_, v) = observation_residual(&spec, &params, &path, &data, t).unwrap();
            let h = path.h.row(s).transpose();
            let dt = path.d.row(s).transpose().component_mul(&path.tau_row(s));
            let sigma = &a_inv * DMatrix::from_diagonal(&h.map(f64::exp)) * a_inv.transpose();
            let r = v - &a_inv * dt;
            let inv = sigma.clone().try_inverse().unwrap();
            let naive = -0.5 * (r.transpose() * inv * &r)[0]
                - 0.5 * sigma.determinant().ln()
                - 1.5 * (2.0 * std::f64::consts::PI).ln();
            let ll = conditional_loglik(&spec, &params, &path, &data, t).unwrap();
            assert!((ll - naive).abs() < 1e-10, "{ll} vs {naive}");
        }
    }

    #[test]
    fn loglik_rejects_non_finite_state() {
        let (spec, params, mut path, data) = random_setup(2, 5);
        let t = spec.presample();
        path.h[(t - spec.presample() + spec.l_inmean_lags, 0)] = f64::NAN;
        assert!(conditional_loglik(&spec, &params, &path, &data, t).is_err());
    }

    #[test]
    fn sv_only_ignores_skew_states() {
        let (spec, params, path, data) = random_setup_for(2, 6, Variant::SvOnly);
        let mut other = path.clone();
        other.d.fill(3.7);
        for t in spec.presample()..data.n_obs() {
            let a = conditional_loglik(&spec, &params, &path, &data, t).unwrap();
            let b = conditional_loglik(&spec, &params, &other, &data, t).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn covariance_symmetric_and_pd() {
        let (_, params, _, _) = random_setup(3, 7);
        let a_inv = params.a_inverse();
        let h = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let s = observation_covariance(&a_inv, &h);
        assert!((&s - s.transpose()).abs().max() < 1e-12);
        assert!(s.cholesky().is_some());
    }

    #[test]
    fn residual_roundtrips_through_generation() {
        // Rebuild Yₜ from mean + A⁻¹Eₜ and compare.
        let (spec, params, path, data) = random_setup(3, 8);
        let a_inv = params.a_inverse();
        for t in spec.presample()..data.n_obs() {
            let (e, v) = observation_residual(&spec, &params, &path, &data, t).unwrap();
            let mean = data.row(t) - &v;
            let rebuilt = mean + &a_inv * e;
            assert!((rebuilt - data.row(t)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn flat_roundtrip() {
        let (spec, params, _, _) = random_setup(2, 9);
        let flat = params.to_flat();
        let back = ParameterDraw::from_flat(&spec, &flat).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn coefficient_matrix_roundtrip() {
        let (spec, mut params, _, _) = random_setup(2, 10);
        params.state_ar = DMatrix::from_fn(4, 4, |i, j| if (i < 2) == (j < 2) { 0.1 * (i + j) as f64 } else { 0.0 });
        let m = params.obs_coefficients(&spec);
        let mut q = ParameterDraw::zeros(&spec);
        q.set_obs_coefficients(&spec, &m);
        assert_eq!(q.obs_coefficients(&spec), m);
        assert_eq!(q.var_lags, params.var_lags);
        let tm = params.transition_coefficients(&spec);
        q.set_transition_coefficients(&spec, &tm);
        assert_eq!(q.state_ar, params.state_ar);
    }

    #[test]
    fn generation_with_zero_shocks_is_deterministic_recursion() {
        let spec = spec1();
        let mut params = ParameterDraw::zeros(&spec);
        params.intercept[0] = 0.1;
        params.var_lags[0][(0, 0)] = 0.5;
        params.state_intercept = DVector::from_vec(vec![-0.2, 0.3]);
        params.state_ar = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.5]));
        params.vol_in_mean[0][(0, 0)] = 0.2;
        let q_chol = DMatrix::zeros(2, 2);
        let a_inv = params.a_inverse();
        let mut hist = History {
            y: vec![DVector::from_element(1, 1.0)],
            beta: vec![DVector::from_vec(vec![0.0, 0.0])],
        };
        let shocks = StepShocks {
            eta_z: DVector::zeros(2),
            theta_parent: DVector::zeros(1),
            e_z: DVector::zeros(1),
        };
        let mut y_prev = 1.0;
        let mut h_prev = 0.0;
        let mut d_prev: f64 = 0.0;
        for _ in 0..10 {
            let step = advance(&spec, &params, &q_chol, &a_inv, &mut hist, &shocks, None);
            let h = -0.2 + 0.9 * h_prev;
            let d = 0.3 + 0.5 * d_prev;
            let y = 0.1 + 0.5 * y_prev + 0.2 * h_prev;
            assert!((step.beta[0] - h).abs() < 1e-12);
            assert!((step.beta[1] - d).abs() < 1e-12);
            assert!((step.y[0] - y).abs() < 1e-12);
            y_prev = y;
            h_prev = h;
            d_prev = d;
        }
    }
}
