//! Random-variate generation and density primitives.
//!
//! Every sampler in the crate draws through an [`RngHandle`]: a ChaCha8 stream
//! keyed by `(seed, stream)`, so a run is reproducible from its seed alone and
//! independent workers can own disjoint streams.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Seeded random stream. Identical `(seed, stream)` pairs yield identical sequences.
#[derive(Clone, Debug)]
pub struct RngHandle {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh handle whose seed is a hash of this handle's seed and `tags`.
    /// Does not advance `self`.
    pub fn derive(&self, tags: &[u64]) -> RngHandle {
        RngHandle::new(mix_seed(self.seed, tags), self.stream)
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer folded over the tags.
pub fn mix_seed(seed: u64, tags: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    tags.iter().fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t)))
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn std_normal_vector<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(k, |_, _| StandardNormal.sample(rng))
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn std_normal_logpdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// `mean + chol(cov)·z`.
pub fn draw_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::dim(
            "draw_mvn covariance",
            format!("{0}x{0}", mean.len()),
            format!("{}x{}", cov.nrows(), cov.ncols()),
        ));
    }
    let chol = linalg::cholesky(cov, "draw_mvn covariance")?;
    let z = std_normal_vector(mean.len(), rng);
    Ok(mean + chol.l() * z)
}

/// Log density of `N(mean, cov)` at `x`, evaluated through a Cholesky factor.
pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, chol: &linalg::Chol) -> f64 {
    let r = x - mean;
    let l = chol.l_dirty();
    let k = r.len();
    let mut z = r.clone();
    // forward substitution on the lower factor only
    for i in 0..k {
        let mut s = z[i];
        for j in 0..i {
            s -= l[(i, j)] * z[j];
        }
        z[i] = s / l[(i, i)];
    }
    let logdet: f64 = (0..k).map(|i| l[(i, i)].ln()).sum();
    -0.5 * z.norm_squared() - logdet - k as f64 * LN_SQRT_2PI
}

/// Draw from the inverse Wishart `IW(scale, dof)` (mean `scale / (dof − k − 1)`).
///
/// Bartlett decomposition of the Wishart with the inverted scale; the result
/// is `(L B)⁻ᵀ (L B)⁻¹` with `L = chol(scale⁻¹)` and `B` the Bartlett factor.
pub fn draw_inverse_wishart<R: Rng + ?Sized>(scale: &DMatrix<f64>, dof: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let k = scale.nrows();
    if scale.ncols() != k {
        return Err(Error::dim(
            "inverse Wishart scale",
            "square",
            format!("{}x{}", k, scale.ncols()),
        ));
    }
    if !(dof > k as f64 - 1.0) {
        return Err(Error::invalid(format!(
            "inverse Wishart degrees of freedom {dof} must exceed k - 1 = {}",
            k as f64 - 1.0
        )));
    }
    let scale_inv = linalg::spd_inverse(scale, "inverse Wishart scale")?;
    let l = linalg::cholesky(&scale_inv, "inverse Wishart inverted scale")?.unpack();
    let mut bartlett = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        let chi = ChiSquared::new(dof - i as f64).map_err(|e| Error::invalid(format!("chi-square dof: {e}")))?;
        bartlett[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = std_normal(rng);
        }
    }
    let lb = l * bartlett;
    let lb_inv = lb
        .solve_lower_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Singular("Bartlett factor".into()))?;
    let draw = linalg::symmetrize(&(lb_inv.transpose() * lb_inv));
    Ok(draw)
}

/// One structural skew-normal innovation.
#[derive(Clone, Debug)]
pub struct SkewInnovation {
    /// Structural innovation `E = d⊙τ + e`.
    pub structural: DVector<f64>,
    pub tau: DVector<f64>,
    pub theta_parent: DVector<f64>,
}

/// Bounds applied to log-variances before exponentiation.
pub const LOG_VARIANCE_BOUND: f64 = 30.0;

pub fn clamp_log_variance(h: f64) -> f64 {
    h.clamp(-LOG_VARIANCE_BOUND, LOG_VARIANCE_BOUND)
}

/// Draws `Θ ~ N(0, I)`, `τ = |Θ|`, `e ~ N(0, diag(exp(h)))` and returns `E = d⊙τ + e`.
///
/// The result is on the structural scale; the observation-space innovation is `A⁻¹E`.
pub fn draw_skew_innovation<R: Rng + ?Sized>(
    skew: &DVector<f64>,
    log_var: &DVector<f64>,
    rng: &mut R,
) -> SkewInnovation {
    let n = skew.len();
    let theta_parent = std_normal_vector(n, rng);
    let tau = theta_parent.abs();
    let structural = DVector::from_fn(n, |i, _| {
        let sd = (0.5 * clamp_log_variance(log_var[i])).exp();
        skew[i] * tau[i] + sd * std_normal(rng)
    });
    SkewInnovation {
        structural,
        tau,
        theta_parent,
    }
}

/// Same as [`draw_skew_innovation`] followed by the `A⁻¹` rotation into observation space.
pub fn draw_observation_innovation<R: Rng + ?Sized>(
    skew: &DVector<f64>,
    log_var: &DVector<f64>,
    a_inv: &DMatrix<f64>,
    rng: &mut R,
) -> (DVector<f64>, SkewInnovation) {
    let s = draw_skew_innovation(skew, log_var, rng);
    (a_inv * &s.structural, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_skewness(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
        m3 / m2.powf(1.5)
    }

    #[test]
    fn same_seed_same_stream_is_identical() {
        let mut a = RngHandle::new(11, 3);
        let mut b = RngHandle::new(11, 3);
        let mut c = RngHandle::new(11, 4);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn pdf_cdf_reference_values() {
        assert!((std_normal_pdf(0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(std_normal_cdf(0.0), 0.5);
        // Simpson quadrature of the pdf on [0, 1.96] as an independent oracle.
        let n = 20_000;
        let h = 1.96 / n as f64;
        let mut s = std_normal_pdf(0.0) + std_normal_pdf(1.96);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * std_normal_pdf(i as f64 * h);
        }
        let quad = 0.5 + s * h / 3.0;
        assert!(
            (std_normal_cdf(1.96) - quad).abs() < 1e-12,
            "{}",
            std_normal_cdf(1.96) - quad
        );
        assert!((std_normal_cdf(1.96) - 0.975_002_1).abs() < 1e-7);
    }

    #[test]
    fn cdf_symmetry_on_wide_range() {
        for i in -80..=80 {
            let z = i as f64 / 10.0;
            assert!((std_normal_cdf(z) + std_normal_cdf(-z) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mvn_near_degenerate_covariance_returns_mean() {
        let mut rng = RngHandle::new(5, 0);
        let mean = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let cov = DMatrix::<f64>::identity(3, 3) * 1e-20;
        let x = draw_mvn(&mean, &cov, &mut rng).unwrap();
        assert!((x - mean).abs().max() < 1e-8);
    }

    #[test]
    fn mvn_sample_covariance_close_to_identity() {
        let mut rng = RngHandle::new(6, 0);
        let mean = DVector::zeros(2);
        let cov = DMatrix::<f64>::identity(2, 2);
        let n = 100_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let x = draw_mvn(&mean, &cov, &mut rng).unwrap();
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        assert!((acc - cov).abs().max() < 0.02);
    }

    #[test]
    fn mvn_sample_mean_within_clt_bound() {
        let mut rng = RngHandle::new(7, 0);
        let mean = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.3, 1.5, 0.1, -0.4, 0.2, 0.8]);
        let cov = &b * b.transpose();
        let n = 20_000;
        let mut sum = DVector::zeros(3);
        for _ in 0..n {
            sum += draw_mvn(&mean, &cov, &mut rng).unwrap();
        }
        let avg = sum / n as f64;
        for i in 0..3 {
            let se = (cov[(i, i)] / n as f64).sqrt();
            assert!((avg[i] - mean[i]).abs() < 4.0 * se);
        }
    }

    #[test]
    fn mvn_rejects_indefinite() {
        let mut rng = RngHandle::new(1, 0);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        assert!(matches!(
            draw_mvn(&DVector::zeros(2), &cov, &mut rng),
            Err(Error::Cholesky { .. })
        ));
    }

    #[test]
    fn inverse_wishart_scalar_mean() {
        // k = 1: IW(s, v) is scaled inverse chi-square with mean s / (v - 2).
        let mut rng = RngHandle::new(8, 0);
        let scale = DMatrix::from_element(1, 1, 3.0);
        let dof = 12.0;
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += draw_inverse_wishart(&scale, dof, &mut rng).unwrap()[(0, 0)];
        }
        let mc = sum / n as f64;
        let exact = 3.0 / (dof - 2.0);
        assert!((mc / exact - 1.0).abs() < 0.01, "{mc} vs {exact}");
    }

    #[test]
    fn inverse_wishart_identity_mean() {
        let mut rng = RngHandle::new(9, 0);
        let scale = DMatrix::<f64>::identity(2, 2);
        let n = 100_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let d = draw_inverse_wishart(&scale, 10.0, &mut rng).unwrap();
            assert!(d.clone().cholesky().is_some());
            acc += d;
        }
        acc /= n as f64;
        let exact = 1.0 / 7.0;
        assert!((acc[(0, 0)] / exact - 1.0).abs() < 0.02);
        assert!((acc[(1, 1)] / exact - 1.0).abs() < 0.02);
        assert!(acc[(0, 1)].abs() < 0.02 * exact);
    }

    #[test]
    fn inverse_wishart_rejects_small_dof() {
        let mut rng = RngHandle::new(1, 0);
        let scale = DMatrix::<f64>::identity(3, 3);
        assert!(draw_inverse_wishart(&scale, 2.0, &mut rng).is_err());
        assert!(draw_inverse_wishart(&scale, 2.5, &mut rng).is_ok());
    }

    #[test]
    fn skew_innovation_collapses_to_normal() {
        let mut rng = RngHandle::new(10, 0);
        let d = DVector::zeros(1);
        let h = DVector::zeros(1);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| draw_skew_innovation(&d, &h, &mut rng).structural[0])
            .collect();
        assert!(sample_skewness(&xs).abs() < 0.01);
    }

    #[test]
    fn skew_innovation_half_normal_mean() {
        let mut rng = RngHandle::new(12, 0);
        let d = DVector::from_element(1, 1.0);
        let h = DVector::from_element(1, -60.0);
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| draw_skew_innovation(&d, &h, &mut rng).structural[0])
            .sum::<f64>()
            / n as f64;
        let exact = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean / exact - 1.0).abs() < 0.005);
    }

    #[test]
    fn skew_sign_follows_loading() {
        let mut rng = RngHandle::new(13, 0);
        let h = DVector::zeros(1);
        for &d in &[2.0, -2.0] {
            let dv = DVector::from_element(1, d);
            let xs: Vec<f64> = (0..200_000)
                .map(|_| draw_skew_innovation(&dv, &h, &mut rng).structural[0])
                .collect();
            assert_eq!(sample_skewness(&xs).signum(), f64::signum(d));
        }
    }

    #[test]
    fn tau_is_abs_of_parent() {
        let mut rng = RngHandle::new(14, 0);
        let d = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let h = DVector::zeros(3);
        for _ in 0..100 {
            let s = draw_skew_innovation(&d, &h, &mut rng);
            assert_eq!(s.tau, s.theta_parent.abs());
        }
    }

    #[test]
    fn mvn_logpdf_matches_naive_formula() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let chol = linalg::cholesky(&cov, "t").unwrap();
        let x = DVector::from_vec(vec![0.4, -1.1]);
        let m = DVector::from_vec(vec![0.1, 0.2]);
        let r = &x - &m;
        let inv = cov.clone().try_inverse().unwrap();
        let naive =
            -0.5 * (r.transpose() * inv * &r)[0] - 0.5 * cov.determinant().ln() - (2.0 * std::f64::consts::PI).ln();
        assert!((mvn_logpdf(&x, &m, &chol) - naive).abs() < 1e-12);
    }
}
