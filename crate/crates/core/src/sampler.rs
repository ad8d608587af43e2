//! Gibbs sampler: states by CPF-AS, then transition coefficients, `Q`, the rows
//! of `A`, and the observation coefficients, in that order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dataset, ModelSpec, ParameterDraw, StatePath};
use crate::pgas;
use crate::priors::{self, APrior, GaussianPrior, IwPrior, Priors};
use crate::rv::{self, RngHandle};

/// How many state rows each stored draw keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathStorage {
    /// Every row.
    Full,
    /// Only the last `L` rows (enough to forecast).
    Tail,
}

#[derive(Clone, Debug)]
pub struct SamplerOptions {
    pub storage: PathStorage,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            storage: PathStorage::Full,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sweeps: usize,
    /// Mean effective sample size per period, averaged over sweeps.
    pub mean_ess: Vec<f64>,
    /// Fraction of sweeps in which the state path changed, per period.
    pub update_rate: Vec<f64>,
    /// Wall-clock seconds spent in each block.
    pub block_seconds: BTreeMap<String, f64>,
}

impl Diagnostics {
    pub fn overall_update_rate(&self) -> f64 {
        if self.update_rate.is_empty() {
            0.0
        } else {
            self.update_rate.iter().sum::<f64>() / self.update_rate.len() as f64
        }
    }
}

/// Posterior draws from one run.
#[derive(Clone, Debug)]
pub struct Chain {
    pub spec: ModelSpec,
    pub seed: u64,
    pub storage: PathStorage,
    pub draws: Vec<ParameterDraw>,
    pub paths: Vec<StatePath>,
    /// Posterior mean of `h̃`, `d̃` and `τ` over stored draws (`theta_parent` holds the mean of `τ`).
    pub state_mean: StatePath,
    pub last_params: ParameterDraw,
    pub last_path: StatePath,
    pub diagnostics: Diagnostics,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn posterior_mean_q(&self) -> Option<DMatrix<f64>> {
        if self.draws.is_empty() {
            return None;
        }
        let k = self.spec.state_dim();
        let mut acc = DMatrix::zeros(k, k);
        for d in &self.draws {
            acc += &d.state_cov;
        }
        Some(acc / self.draws.len() as f64)
    }
}

/// Gaussian draw with its conditional moments.
#[derive(Clone, Debug)]
pub struct NormalDraw {
    pub draw: DVector<f64>,
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

/// Prior precisions computed once per chain.
pub struct PreparedPrior<'a> {
    pub prior: &'a GaussianPrior,
    pub precision: DMatrix<f64>,
    pub precision_mean: DVector<f64>,
}

impl<'a> PreparedPrior<'a> {
    pub fn new(prior: &'a GaussianPrior, context: &str) -> Result<Self> {
        let precision = prior.precision(context)?;
        let precision_mean = &precision * &prior.mean;
        Ok(Self {
            prior,
            precision,
            precision_mean,
        })
    }
}

/// Conditional posterior draw of `[θ; dⱼ; α]` given the states and `Q`, returned
/// stacked equation by equation (`regressors × K`, column-major).
pub fn draw_transition_coeffs(
    spec: &ModelSpec,
    data: &Dataset,
    states: &StatePath,
    q: &DMatrix<f64>,
    prior: &PreparedPrior<'_>,
    rng: &mut RngHandle,
) -> Result<NormalDraw> {
    let (x, y) = priors::transition_regressors(spec, data, states);
    let q_inv = linalg::spd_inverse(q, "Q")?;
    let xtx = x.transpose() * &x;
    let precision = &prior.precision + q_inv.kronecker(&xtx);
    let xty_qinv = x.transpose() * &y * &q_inv;
    let linear = &prior.precision_mean + DVector::from_column_slice(xty_qinv.as_slice());
    let (draw, mean) = linalg::draw_from_precision(&precision, &linear, "transition coefficient posterior", rng)?;
    Ok(NormalDraw { draw, mean, precision })
}

/// Transition residuals `ηₜ` (rows = periods).
pub fn transition_residuals(
    spec: &ModelSpec,
    data: &Dataset,
    states: &StatePath,
    params: &ParameterDraw,
) -> DMatrix<f64> {
    let (x, y) = priors::transition_regressors(spec, data, states);
    y - x * params.transition_coefficients(spec)
}

/// `Q | η ~ IW(η′η + v₀, T + T₀)`.
pub fn draw_qcov(eta: &DMatrix<f64>, prior: &IwPrior, rng: &mut RngHandle) -> Result<DMatrix<f64>> {
    let scale = eta.transpose() * eta + &prior.scale;
    rv::draw_inverse_wishart(&linalg::symmetrize(&scale), eta.nrows() as f64 + prior.dof, rng)
}

/// Observation residuals `Vₜ` (rows = periods) under `params`.
pub fn observation_residuals(
    spec: &ModelSpec,
    data: &Dataset,
    states: &StatePath,
    params: &ParameterDraw,
) -> DMatrix<f64> {
    let x = priors::observation_regressors(spec, data, states);
    let y = data.y.rows(spec.presample(), data.periods(spec));
    y - x * params.obs_coefficients(spec)
}

/// Conditional posterior `(mean, precision)` of row `k` of `A` (its first `k` entries)
/// from `Vₜᵏ − d̃ₜᵏτₜᵏ = −Vₜ^{1..k−1} a + eₜᵏ`, each period rescaled by `exp(−h̃ₜᵏ/2)`.
pub fn a_row_posterior(
    v: &DMatrix<f64>,
    states: &StatePath,
    prior: &GaussianPrior,
    k: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let t = v.nrows();
    let off = states.presample;
    let mut x = DMatrix::zeros(t, k);
    let mut z = DVector::zeros(t);
    for i in 0..t {
        let scale = (-0.5 * crate::rv::clamp_log_variance(states.h[(off + i, k)])).exp();
        z[i] = (v[(i, k)] - states.d[(off + i, k)] * states.tau[(off + i, k)]) * scale;
        for j in 0..k {
            x[(i, j)] = -v[(i, j)] * scale;
        }
    }
    let prior_prec = linalg::spd_inverse(&prior.cov, "A prior")?;
    let precision = &prior_prec + x.transpose() * &x;
    let linear = &prior_prec * &prior.mean + x.transpose() * z;
    let mean = linalg::cholesky(&precision, "A row posterior")?.solve(&linear);
    Ok((mean, precision))
}

/// Row-by-row draw of the unit lower-triangular `A` (see [`a_row_posterior`]).
pub fn draw_a_rows(v: &DMatrix<f64>, states: &StatePath, prior: &APrior, rng: &mut RngHandle) -> Result<DMatrix<f64>> {
    let n = v.ncols();
    let t = v.nrows();
    if states.rows() != states.presample + t {
        return Err(Error::dim(
            "state rows for the A draw",
            states.presample + t,
            states.rows(),
        ));
    }
    if prior.rows.len() + 1 != n {
        return Err(Error::dim("A prior rows", n.saturating_sub(1), prior.rows.len()));
    }
    let mut a = DMatrix::identity(n, n);
    for k in 1..n {
        let p = &prior.rows[k - 1];
        let (mean, precision) = a_row_posterior(v, states, p, k)?;
        let linear = &precision * &mean;
        let (draw, _) = linalg::draw_from_precision(&precision, &linear, "A row posterior", rng)?;
        for j in 0..k {
            a[(k, j)] = draw[j];
        }
    }
    Ok(a)
}

/// Terminal moments of the constant-coefficient Kalman filter plus a draw.
#[derive(Clone, Debug)]
pub struct KalmanDraw {
    pub draw: DVector<f64>,
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

impl KalmanDraw {
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.precision, "terminal Kalman precision")
    }
}

/// Observation coefficients by Kalman filtering the stacked coefficient vector as a
/// constant state through `Yₜ* = Yₜ − A⁻¹(d̃ₜ⊙τₜ)` with `var = A⁻¹HₜA⁻¹′`.
///
/// The filter runs in information form: for a constant state each update adds
/// `Xₜ′Σₜ⁻¹Xₜ` to the precision, which stays positive definite however widely the
/// log-variances range, where the covariance-form update loses definiteness.
pub fn draw_var_coeffs_kf(
    spec: &ModelSpec,
    data: &Dataset,
    states: &StatePath,
    a: &DMatrix<f64>,
    prior: &GaussianPrior,
    rng: &mut RngHandle,
) -> Result<KalmanDraw> {
    let n = spec.n_vars;
    let r = spec.obs_regressors();
    let dim = n * r;
    if prior.dim() != dim {
        return Err(Error::dim("observation prior", dim, prior.dim()));
    }
    let x = priors::observation_regressors(spec, data, states);
    let a_inv = linalg::unit_lower_inverse(a);
    let t0 = spec.presample();
    let off = states.presample;
    let mut precision = prior.precision("observation prior")?;
    let mut linear = &precision * &prior.mean;
    for i in 0..x.nrows() {
        let s = off + i;
        let skew = DVector::from_fn(n, |v, _| states.d[(s, v)] * states.tau[(s, v)]);
        let y_star = data.row(t0 + i) - &a_inv * skew;
        // Σₜ⁻¹ = A′ H⁻¹ A; with Xₜ = I_N ⊗ xₜ′ block (p, q) of Xₜ′Σₜ⁻¹Xₜ is Σ⁻¹[p,q] xₜxₜ′.
        let h_inv = DVector::from_fn(n, |v, _| (-rv::clamp_log_variance(states.h[(s, v)])).exp());
        let w = a.transpose() * DMatrix::from_diagonal(&h_inv) * a;
        let wy = &w * y_star;
        let xt = x.row(i).transpose();
        let xx = &xt * xt.transpose();
        for p in 0..n {
            for q in 0..n {
                let mut block = precision.view_mut((p * r, q * r), (r, r));
                block += &xx * w[(p, q)];
            }
            let mut seg = linear.rows_mut(p * r, r);
            seg += &xt * wy[p];
        }
    }
    let context = format!("terminal Kalman precision after period {}", x.nrows());
    let (draw, mean) = linalg::draw_from_precision(&precision, &linear, &context, rng)?;
    Ok(KalmanDraw { draw, mean, precision })
}

fn timed<T>(diag: &mut Diagnostics, block: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    *diag.block_seconds.entry(block.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
    out
}

fn accumulate(acc: &mut StatePath, path: &StatePath) {
    acc.h += &path.h;
    acc.d += &path.d;
    acc.tau += &path.tau;
}

/// Runs `spec.n_draws` sweeps starting from `params` and reference path `path`.
pub fn run_gibbs(
    spec: &ModelSpec,
    data: &Dataset,
    priors: &Priors,
    mut params: ParameterDraw,
    mut path: StatePath,
    options: &SamplerOptions,
    rng: &mut RngHandle,
) -> Result<Chain> {
    spec.validate()?;
    data.check_estimable(spec)?;
    params.validate(spec)?;
    let n = spec.n_vars;
    let k = spec.state_dim();
    let l = spec.l_inmean_lags;
    let periods = data.periods(spec);
    if path.rows() != l + periods || path.presample != l {
        return Err(Error::dim("initial state path rows", l + periods, path.rows()));
    }
    let seed = rng.seed();
    let trans_prior = PreparedPrior::new(&priors.transition, "transition prior")?;
    let mut diag = Diagnostics {
        mean_ess: vec![0.0; periods],
        update_rate: vec![0.0; periods],
        ..Diagnostics::default()
    };
    let mut draws = Vec::with_capacity(spec.n_stored());
    let mut paths = Vec::with_capacity(spec.n_stored());
    let mut mean_path = StatePath::zeros(l, periods, n);
    let r_trans = spec.transition_regressors();

    for sweep in 0..spec.n_draws {
        let (new_path, stats) = timed(&mut diag, "states", || {
            pgas::cpf_as(spec, &params, data, &priors.initial, &path, rng)
        })
        .map_err(|e| e.in_block(sweep, "states"))?;
        path = new_path;
        for i in 0..periods {
            diag.mean_ess[i] += stats.ess[i];
            diag.update_rate[i] += if stats.updated[i] { 1.0 } else { 0.0 };
        }

        let coef = timed(&mut diag, "transition", || {
            draw_transition_coeffs(spec, data, &path, &params.state_cov, &trans_prior, rng)
        })
        .map_err(|e| e.in_block(sweep, "transition"))?;
        params.set_transition_coefficients(spec, &DMatrix::from_column_slice(r_trans, k, coef.draw.as_slice()));
        params.project_block_diagonal(spec);

        let eta = transition_residuals(spec, data, &path, &params);
        params.state_cov =
            timed(&mut diag, "q", || draw_qcov(&eta, &priors.q, rng)).map_err(|e| e.in_block(sweep, "q"))?;

        let v = observation_residuals(spec, data, &path, &params);
        params.a =
            timed(&mut diag, "a", || draw_a_rows(&v, &path, &priors.a, rng)).map_err(|e| e.in_block(sweep, "a"))?;

        let kf = timed(&mut diag, "var", || {
            draw_var_coeffs_kf(spec, data, &path, &params.a, &priors.observation, rng)
        })
        .map_err(|e| e.in_block(sweep, "var"))?;
        params.set_obs_coefficients(
            spec,
            &DMatrix::from_column_slice(spec.obs_regressors(), n, kf.draw.as_slice()),
        );

        let done = sweep + 1;
        if done > spec.n_burn && (done - spec.n_burn).is_multiple_of(spec.thin) {
            accumulate(&mut mean_path, &path);
            draws.push(params.clone());
            paths.push(match options.storage {
                PathStorage::Full => path.clone(),
                PathStorage::Tail => path.tail(l),
            });
        }
    }
    diag.sweeps = spec.n_draws;
    if spec.n_draws > 0 {
        let denom = spec.n_draws as f64;
        diag.mean_ess.iter_mut().for_each(|v| *v /= denom);
        diag.update_rate.iter_mut().for_each(|v| *v /= denom);
    }
    if !draws.is_empty() {
        let c = draws.len() as f64;
        mean_path.h /= c;
        mean_path.d /= c;
        mean_path.tau /= c;
        mean_path.theta_parent = mean_path.tau.clone();
    }
    Ok(Chain {
        spec: spec.clone(),
        seed,
        storage: options.storage,
        draws,
        paths,
        state_mean: mean_path,
        last_params: params,
        last_path: path,
        diagnostics: diag,
    })
}

/// Builds priors (running the pre-model) and runs the main chain.
pub fn estimate(
    spec: &ModelSpec,
    data: &Dataset,
    settings: &priors::PriorSettings,
    options: &SamplerOptions,
    rng: &mut RngHandle,
) -> Result<Chain> {
    let init = priors::build_priors(data, spec, settings, rng)?;
    run_gibbs(spec, data, &init.priors, init.params, init.path, options, rng)
}

const MAGIC: &[u8; 8] = b"SKVCHAIN";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    spec: ModelSpec,
    seed: u64,
    storage: PathStorage,
    n_stored: usize,
    path_rows: usize,
    labels: Vec<String>,
    first_date: String,
    diagnostics: Diagnostics,
}

fn write_matrix(buf: &mut Vec<u8>, m: &DMatrix<f64>) {
    for v in m.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

impl Chain {
    /// Writes `chain.bin` (draws) and `chain.json` (spec and diagnostics) into `dir`.
    pub fn save(&self, dir: &Path, data: &Dataset) -> Result<()> {
        fs::create_dir_all(dir)?;
        let path_rows = self.paths.first().map(|p| p.rows()).unwrap_or(0);
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        let header = [
            self.draws.len() as u64,
            ParameterDraw::flat_len(&self.spec) as u64,
            path_rows as u64,
            self.spec.n_vars as u64,
        ];
        for h in header {
            buf.extend_from_slice(&h.to_le_bytes());
        }
        for (d, p) in self.draws.iter().zip(&self.paths) {
            for v in d.to_flat() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            write_matrix(&mut buf, &p.h);
            write_matrix(&mut buf, &p.d);
            write_matrix(&mut buf, &p.theta_parent);
        }
        for m in [&self.state_mean.h, &self.state_mean.d, &self.state_mean.tau] {
            write_matrix(&mut buf, m);
        }
        let tmp = dir.join("chain.bin.tmp");
        fs::File::create(&tmp)?.write_all(&buf)?;
        fs::rename(&tmp, dir.join("chain.bin"))?;
        let sidecar = Sidecar {
            spec: self.spec.clone(),
            seed: self.seed,
            storage: self.storage,
            n_stored: self.draws.len(),
            path_rows,
            labels: data.labels.clone(),
            first_date: data.dates.first().map(|d| d.to_string()).unwrap_or_default(),
            diagnostics: self.diagnostics.clone(),
        };
        fs::write(dir.join("chain.json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Reads a chain written by [`Chain::save`]; `periods` is the estimation-sample length.
    pub fn load(dir: &Path, periods: usize) -> Result<Chain> {
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(dir.join("chain.json"))?)?;
        let mut bytes = Vec::new();
        fs::File::open(dir.join("chain.bin"))?.read_to_end(&mut bytes)?;
        let bad = |msg: &str| Error::Parse {
            path: dir.join("chain.bin"),
            line: 0,
            message: msg.to_string(),
        };
        if bytes.len() < 40 || &bytes[..8] != MAGIC {
            return Err(bad("not a chain file"));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
        let (n_stored, flat_len, path_rows, n) = (word(0), word(1), word(2), word(3));
        let spec = sidecar.spec;
        if flat_len != ParameterDraw::flat_len(&spec) || n != spec.n_vars {
            return Err(bad("header does not match the sidecar spec"));
        }
        let l = spec.l_inmean_lags;
        let mean_rows = l + periods;
        let expected = 40 + n_stored * (flat_len + 3 * path_rows * n) * 8 + 3 * mean_rows * n * 8;
        if bytes.len() != expected {
            return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let mut pos = 40;
        let mut next = |count: usize| -> Vec<f64> {
            let out = bytes[pos..pos + 8 * count]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos += 8 * count;
            out
        };
        let presample = if sidecar.storage == PathStorage::Full {
            l
        } else {
            path_rows
        };
        let mut draws = Vec::with_capacity(n_stored);
        let mut paths = Vec::with_capacity(n_stored);
        for _ in 0..n_stored {
            draws.push(ParameterDraw::from_flat(&spec, &next(flat_len))?);
            let h = DMatrix::from_vec(path_rows, n, next(path_rows * n));
            let d = DMatrix::from_vec(path_rows, n, next(path_rows * n));
            let theta = DMatrix::from_vec(path_rows, n, next(path_rows * n));
            paths.push(StatePath {
                presample,
                tau: theta.abs(),
                h,
                d,
                theta_parent: theta,
            });
        }
        let h = DMatrix::from_vec(mean_rows, n, next(mean_rows * n));
        let d = DMatrix::from_vec(mean_rows, n, next(mean_rows * n));
        let tau = DMatrix::from_vec(mean_rows, n, next(mean_rows * n));
        let state_mean = StatePath {
            presample: l,
            h,
            d,
            theta_parent: tau.clone(),
            tau,
        };
        let last_params = draws.last().cloned().unwrap_or_else(|| ParameterDraw::zeros(&spec));
        let last_path = paths.last().cloned().unwrap_or_else(|| state_mean.clone());
        Ok(Chain {
            spec,
            seed: sidecar.seed,
            storage: sidecar.storage,
            draws,
            paths,
            state_mean,
            last_params,
            last_path,
            diagnostics: sidecar.diagnostics,
        })
    }
}
