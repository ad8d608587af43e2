//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

/// Cholesky factorization that reports the smallest eigenvalue on failure.
pub fn cholesky(m: &DMatrix<f64>, context: &str) -> Result<Chol> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(context.to_string()));
    }
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => Err(Error::Cholesky {
            context: context.to_string(),
            min_eigenvalue: min_eigenvalue(m),
        }),
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = symmetrize(m);
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let c = cholesky(m, context)?;
    Ok(symmetrize(&c.inverse()))
}

/// Draw from `N(P⁻¹ b, P⁻¹)` given the precision `P` and the linear term `b`.
///
/// Returns the draw together with the posterior mean.
pub fn draw_from_precision<R: rand::Rng + ?Sized>(
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
    context: &str,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let c = cholesky(&symmetrize(precision), context)?;
    let mean = c.solve(linear);
    let z = crate::rv::std_normal_vector(precision.nrows(), rng);
    // L' x = z  =>  x ~ N(0, (L L')^{-1})
    let lt = c.l().transpose();
    let dev = lt
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Singular(context.to_string()))?;
    Ok((&mean + dev, mean))
}

/// Inverse of a unit lower-triangular matrix.
pub fn unit_lower_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    a.solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("unit lower-triangular matrix is invertible")
}

/// Integer powers of a square matrix (`m⁰ = I`).
pub fn matrix_power(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn cholesky_failure_reports_negative_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky(&m, "test") {
            Err(Error::Cholesky { min_eigenvalue, .. }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn precision_draw_mean_is_exact_solve() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (_, mean) = draw_from_precision(&p, &b, "t", &mut rng).unwrap();
        let direct = p.clone().try_inverse().unwrap() * &b;
        assert!((mean - direct).norm() < 1e-12);
    }

    #[test]
    fn unit_lower_inverse_roundtrip() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.3, 1.0, 0.0, -0.2, 0.5, 1.0]);
        let inv = unit_lower_inverse(&a);
        assert!((&a * inv - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
    }
}
