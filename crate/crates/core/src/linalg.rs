//! Dense complex matrix helpers on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Asymmetry above this is an error rather than accumulation roundoff.
pub const HERMITIAN_TOL: f64 = 1e-8;

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn max_asymmetry(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m†)/2`, rejecting inputs whose asymmetry exceeds `tol`.
pub fn hermitian_part(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(m.nrows(), m.ncols()));
    }
    let asym = max_asymmetry(m);
    if asym > tol {
        return Err(Error::NotHermitian(asym));
    }
    Ok((m + m.adjoint()).scale(0.5))
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Checks a density matrix: Hermitian, PSD (down to `-1e-12`), unit trace.
pub fn validate_density(rho: &CMatrix) -> Result<CMatrix> {
    let h = hermitian_part(rho, HERMITIAN_TOL)?;
    let tr = trace(&h).re;
    if (tr - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidTrace(tr));
    }
    let min = hermitian_eigenvalues(&h)[0];
    if min < -1e-12 {
        return Err(Error::NotPsd(min));
    }
    Ok(h)
}

/// Eigen-decomposition of a PSD matrix with eigenvalues in `[-1e-12, 0)`
/// clamped to zero.
pub fn psd_eigen(rho: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let (mut values, vectors) = hermitian_eigen(rho);
    for v in values.iter_mut() {
        if *v < -1e-12 {
            return Err(Error::NotPsd(*v));
        }
        *v = v.max(0.0);
    }
    Ok((values, vectors))
}

/// Principal square root of a PSD matrix.
pub fn psd_sqrt(rho: &CMatrix) -> Result<CMatrix> {
    let (values, vectors) = psd_eigen(rho)?;
    let scaled = CMatrix::from_fn(vectors.nrows(), vectors.ncols(), |r, c| vectors[(r, c)] * values[c].sqrt());
    Ok(&scaled * vectors.adjoint())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    CMatrix::from_fn(ar * br, ac * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}

pub fn kron_power(a: &CMatrix, k: usize) -> CMatrix {
    (1..k).fold(a.clone(), |acc, _| kron(&acc, a))
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn outer(v: &[Complex64]) -> CMatrix {
    CMatrix::from_fn(v.len(), v.len(), |r, c| v[r] * v[c].conj())
}

pub fn diag(values: &[f64]) -> CMatrix {
    CMatrix::from_fn(values.len(), values.len(), |r, c| if r == c { Complex64::from(values[r]) } else { ZERO })
}

/// Standard complex Gaussian with `E|z|^2 = 1`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-random unit vector in `C^d` via Gaussian normalization.
pub fn haar_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..d).map(|_| complex_normal(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= norm);
    v
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Random unitary from the Haar measure via Gram-Schmidt on a Ginibre matrix.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<Complex64> = (0..d).map(|_| complex_normal(rng)).collect();
        for c in &cols {
            let overlap: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            v.iter_mut().zip(c).for_each(|(x, y)| *x -= overlap * y);
        }
        let norm = norm_sqr(&v).sqrt();
        if norm < 1e-12 {
            continue;
        }
        v.iter_mut().for_each(|z| *z /= norm);
        cols.push(v);
    }
    CMatrix::from_fn(d, d, |r, c| cols[c][r])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = haar_unitary(&mut rng, 4);
        let rho = &u * diag(&[0.5, 0.3, 0.2, 0.0]) * u.adjoint();
        let s = psd_sqrt(&rho).unwrap();
        assert!((&s * &s - &rho).norm() < 1e-12);
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = haar_unitary(&mut rng, 5);
        assert!((u.adjoint() * &u - CMatrix::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_density_matrices() {
        assert!(matches!(validate_density(&diag(&[0.6, 0.6])), Err(Error::InvalidTrace(_))));
        assert!(matches!(validate_density(&diag(&[1.5, -0.5])), Err(Error::NotPsd(_))));
        let mut m = diag(&[0.5, 0.5]);
        m[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(matches!(validate_density(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn kron_dimensions_and_values() {
        let a = diag(&[1.0, 2.0]);
        let b = diag(&[3.0, 5.0, 7.0]);
        let k = kron(&a, &b);
        assert_eq!(k.nrows(), 6);
        assert_eq!(k[(4, 4)], Complex64::from(10.0));
        assert_eq!(kron_power(&a, 3)[(7, 7)], Complex64::from(8.0));
    }
}
